//! Programs: global declarations, mutexes, locals and thread templates.

use std::collections::{BTreeMap, BTreeSet, HashMap, VecDeque};
use std::fmt;

use crate::expr::{Expr, Name, Type, TypeError};
use crate::value::Value;

/// Thread identity: the creation path from the initial thread.
///
/// A child's id is its parent's id extended by the number of threads the
/// parent had created before. The initial thread has the empty id.
#[derive(Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Default)]
pub struct ThreadId(pub Vec<u32>);

impl ThreadId {
    pub fn initial() -> Self {
        ThreadId(Vec::new())
    }

    pub fn is_initial(&self) -> bool {
        self.0.is_empty()
    }

    pub fn child(&self, prior_creates: u32) -> ThreadId {
        let mut v = self.0.clone();
        v.push(prior_creates);
        ThreadId(v)
    }

    /// The parent id and the creation index, unless this is the initial thread.
    pub fn parent(&self) -> Option<(ThreadId, u32)> {
        let (&last, prefix) = self.0.split_last()?;
        Some((ThreadId(prefix.to_vec()), last))
    }

    pub fn to_tid_literal(&self) -> String {
        let parts: Vec<String> = self.0.iter().map(|n| n.to_string()).collect();
        format!("tid({})", parts.join(","))
    }
}

/// Shorthand for [`ThreadId::child`].
pub fn child_thread_id(parent: &ThreadId, prior_creates: u32) -> ThreadId {
    parent.child(prior_creates)
}

impl fmt::Display for ThreadId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("t")?;
        for n in &self.0 {
            write!(f, ".{n}")?;
        }
        Ok(())
    }
}

impl fmt::Debug for ThreadId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Display::fmt(self, f)
    }
}

#[derive(Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct NodeId(pub u32);

impl fmt::Display for NodeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "n{}", self.0)
    }
}

impl fmt::Debug for NodeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Display::fmt(self, f)
    }
}

#[derive(Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct AssertId(pub String);

impl AssertId {
    pub fn new(s: impl Into<String>) -> Self {
        AssertId(s.into())
    }
}

impl fmt::Display for AssertId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl fmt::Debug for AssertId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:?}", self.0)
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Action {
    Lock(Name),
    Unlock(Name),
    Create(Name),
    LocalUpdate { local: Name, value: Expr },
    /// `local := value` where `value` may mention the global through
    /// [`Expr::Global`].
    GlobalRead { local: Name, global: Name, value: Expr },
    GlobalWrite { global: Name, value: Expr },
    Assert { cond: Expr, id: AssertId },
    Pos(Expr),
    Neg(Expr),
    Atomic(Vec<Action>),
}

impl Action {
    /// Actions that are admissible in every state.
    pub fn always_admissible(&self) -> bool {
        matches!(
            self,
            Action::LocalUpdate { .. }
                | Action::GlobalRead { .. }
                | Action::GlobalWrite { .. }
                | Action::Assert { .. }
        )
    }

    pub fn is_guard(&self) -> bool {
        matches!(self, Action::Pos(_) | Action::Neg(_))
    }

    /// The action itself, or the members of an atomic block.
    pub fn members(&self) -> &[Action] {
        match self {
            Action::Atomic(ms) => ms,
            other => std::slice::from_ref(other),
        }
    }

    /// Globals read or written by this action (including atomic members).
    pub fn globals_accessed(&self) -> BTreeSet<&str> {
        let mut out = BTreeSet::new();
        for m in self.members() {
            match m {
                Action::GlobalRead { global, .. } | Action::GlobalWrite { global, .. } => {
                    out.insert(global.as_str());
                }
                _ => {}
            }
        }
        out
    }

    pub fn assert_ids(&self) -> Vec<&AssertId> {
        self.members()
            .iter()
            .filter_map(|m| match m {
                Action::Assert { id, .. } => Some(id),
                _ => None,
            })
            .collect()
    }

    /// One-line DSL text of the action.
    pub fn render(&self) -> String {
        match self {
            Action::Lock(m) => format!("lock({m});"),
            Action::Unlock(m) => format!("unlock({m});"),
            Action::Create(t) => format!("create({t});"),
            Action::LocalUpdate { local, value } => format!("{local} = {value};"),
            Action::GlobalRead {
                local,
                global,
                value,
            } => format!("{local} = {};", value.render_with_global(global)),
            Action::GlobalWrite { global, value } => format!("{global} = {value};"),
            Action::Assert { cond, id } => format!("assert({cond}, {:?});", id.0),
            Action::Pos(c) => format!("pos({c});"),
            Action::Neg(c) => format!("neg({c});"),
            Action::Atomic(ms) => {
                let inner: Vec<String> = ms.iter().map(Action::render).collect();
                format!("atomic {{ {} }}", inner.join(" "))
            }
        }
    }
}

impl fmt::Display for Action {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.render())
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct Edge {
    pub src: NodeId,
    pub action: Action,
    pub dst: NodeId,
}

/// Position of an edge inside a program: template index and edge index.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct EdgeId {
    pub template: u32,
    pub index: u32,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ThreadTemplate {
    pub name: Name,
    pub nodes: BTreeSet<NodeId>,
    pub edges: Vec<Edge>,
    pub initial: NodeId,
}

impl ThreadTemplate {
    pub fn new(name: impl Into<Name>, initial: NodeId) -> Self {
        ThreadTemplate {
            name: name.into(),
            nodes: BTreeSet::from([initial]),
            edges: Vec::new(),
            initial,
        }
    }

    pub fn add_edge(&mut self, src: NodeId, action: Action, dst: NodeId) -> usize {
        self.nodes.insert(src);
        self.nodes.insert(dst);
        self.edges.push(Edge { src, action, dst });
        self.edges.len() - 1
    }

    pub fn out_edges(&self, node: NodeId) -> impl Iterator<Item = (usize, &Edge)> {
        self.edges
            .iter()
            .enumerate()
            .filter(move |(_, e)| e.src == node)
    }

    pub fn in_degree(&self, node: NodeId) -> usize {
        self.edges.iter().filter(|e| e.dst == node).count()
    }

    pub fn edge_between(&self, src: NodeId, dst: NodeId) -> Option<usize> {
        self.edges.iter().position(|e| e.src == src && e.dst == dst)
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct GlobalDecl {
    pub name: Name,
    pub ty: Type,
    pub init: Value,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct LocalDecl {
    pub name: Name,
    pub ty: Type,
}

/// A program. Every thread shares the same set of local variables; `self` is
/// implicit and never declared.
#[derive(Clone, Debug, PartialEq, Eq, Default)]
pub struct Program {
    pub globals: Vec<GlobalDecl>,
    pub mutexes: Vec<Name>,
    pub locals: Vec<LocalDecl>,
    pub templates: Vec<ThreadTemplate>,
    /// Dedicated mutex `m_g` of each global, when one has been designated.
    pub global_mutexes: BTreeMap<Name, Name>,
}

pub const MAIN: &str = "main";
pub const SELF: &str = "self";

impl Program {
    pub fn template(&self, name: &str) -> Option<&ThreadTemplate> {
        self.templates.iter().find(|t| t.name == name)
    }

    pub fn template_index(&self, name: &str) -> Option<usize> {
        self.templates.iter().position(|t| t.name == name)
    }

    pub fn main(&self) -> Option<&ThreadTemplate> {
        self.template(MAIN)
    }

    pub fn edge(&self, id: EdgeId) -> &Edge {
        &self.templates[id.template as usize].edges[id.index as usize]
    }

    pub fn edge_ids(&self) -> impl Iterator<Item = EdgeId> + '_ {
        self.templates.iter().enumerate().flat_map(|(ti, t)| {
            (0..t.edges.len()).map(move |i| EdgeId {
                template: ti as u32,
                index: i as u32,
            })
        })
    }

    pub fn global(&self, name: &str) -> Option<&GlobalDecl> {
        self.globals.iter().find(|g| g.name == name)
    }

    pub fn global_index(&self, name: &str) -> Option<usize> {
        self.globals.iter().position(|g| g.name == name)
    }

    pub fn local(&self, name: &str) -> Option<&LocalDecl> {
        self.locals.iter().find(|l| l.name == name)
    }

    pub fn local_index(&self, name: &str) -> Option<usize> {
        self.locals.iter().position(|l| l.name == name)
    }

    pub fn mutex_index(&self, name: &str) -> Option<usize> {
        self.mutexes.iter().position(|m| m == name)
    }

    pub fn has_mutex(&self, name: &str) -> bool {
        self.mutex_index(name).is_some()
    }

    /// Template owning a node.
    pub fn template_of(&self, node: NodeId) -> Option<usize> {
        self.templates.iter().position(|t| t.nodes.contains(&node))
    }

    /// A node id not used by any template.
    pub fn fresh_node(&self) -> NodeId {
        NodeId(
            self.templates
                .iter()
                .flat_map(|t| t.nodes.iter())
                .map(|n| n.0 + 1)
                .max()
                .unwrap_or(0),
        )
    }

    /// Whether any action is an atomic block.
    pub fn has_atomics(&self) -> bool {
        self.templates
            .iter()
            .flat_map(|t| t.edges.iter())
            .any(|e| matches!(e.action, Action::Atomic(_)))
    }

    pub fn all_asserts(&self) -> BTreeSet<AssertId> {
        self.templates
            .iter()
            .flat_map(|t| t.edges.iter())
            .flat_map(|e| e.action.assert_ids().into_iter().cloned())
            .collect()
    }

    fn local_type(&self, name: &str) -> Option<Type> {
        self.local(name).map(|l| l.ty)
    }

    /// Structural equality: same declarations and isomorphic templates.
    /// Node numbering and edge order do not matter.
    pub fn structurally_eq(&self, other: &Program) -> bool {
        let sorted = |p: &Program| {
            let mut m = p.mutexes.clone();
            m.sort();
            let mut l: Vec<_> = p.locals.iter().map(|l| (l.name.clone(), l.ty)).collect();
            l.sort();
            m.dedup();
            (m, l)
        };
        if self.globals != other.globals
            || sorted(self) != sorted(other)
            || self.global_mutexes != other.global_mutexes
            || self.templates.len() != other.templates.len()
        {
            return false;
        }
        self.templates.iter().all(|t| {
            other
                .template(&t.name)
                .is_some_and(|o| canonical_template(t) == canonical_template(o))
        })
    }
}

/// Canonical shape of a template: edges over canonically numbered nodes,
/// sorted by (source, sink). Nodes are numbered breadth-first from the
/// initial node, visiting out-edges ordered by their action.
pub fn canonical_template(t: &ThreadTemplate) -> Vec<(u32, Action, u32)> {
    let mut out: HashMap<NodeId, Vec<&Edge>> = HashMap::new();
    for e in &t.edges {
        out.entry(e.src).or_default().push(e);
    }
    for v in out.values_mut() {
        v.sort_by(|a, b| a.action.cmp(&b.action));
    }
    let mut number: HashMap<NodeId, u32> = HashMap::new();
    let mut queue = VecDeque::new();
    let visit = |n: NodeId, number: &mut HashMap<NodeId, u32>, q: &mut VecDeque<NodeId>| {
        if !number.contains_key(&n) {
            let k = number.len() as u32;
            number.insert(n, k);
            q.push_back(n);
        }
    };
    visit(t.initial, &mut number, &mut queue);
    loop {
        while let Some(n) = queue.pop_front() {
            if let Some(es) = out.get(&n) {
                for e in es {
                    visit(e.dst, &mut number, &mut queue);
                }
            }
        }
        // unreachable fragments, in a deterministic order
        let mut rest: Vec<&Edge> = t
            .edges
            .iter()
            .filter(|e| !number.contains_key(&e.src))
            .collect();
        if rest.is_empty() {
            break;
        }
        rest.sort_by(|a, b| a.action.cmp(&b.action));
        visit(rest[0].src, &mut number, &mut queue);
    }
    let mut edges: Vec<(u32, Action, u32)> = t
        .edges
        .iter()
        .map(|e| (number[&e.src], e.action.clone(), number[&e.dst]))
        .collect();
    edges.sort_by(|a, b| (a.0, a.2).cmp(&(b.0, b.2)));
    edges
}

/// A broken well-formedness rule.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Rule {
    NoMain,
    DuplicateTemplate(Name),
    DuplicateDeclaration(Name),
    GlobalIsMutex(Name),
    SelfDeclared,
    InitialHasIncoming(NodeId),
    SharedNode(NodeId),
    ForeignNode(NodeId),
    DuplicateEdge(NodeId, NodeId),
    UndeclaredMutex(Name),
    UndeclaredGlobal(Name),
    UndeclaredLocal(Name),
    UnknownTemplate(Name),
    WritesSelf,
    NestedAtomic,
    EmptyAtomic,
    AtomicMemberNotAdmissible,
    MisplacedPlaceholder,
    DuplicateAssertId(AssertId),
    BadGlobalMutex(Name),
    Type(TypeError),
}

impl fmt::Display for Rule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Rule::NoMain => write!(f, "no main"),
            Rule::DuplicateTemplate(n) => write!(f, "duplicate thread template {n}"),
            Rule::DuplicateDeclaration(n) => write!(f, "duplicate declaration of {n}"),
            Rule::GlobalIsMutex(n) => write!(f, "{n} is both a global and a mutex"),
            Rule::SelfDeclared => write!(f, "`self` may not be declared"),
            Rule::InitialHasIncoming(n) => write!(f, "initial node {n} has incoming edges"),
            Rule::SharedNode(n) => write!(f, "node {n} belongs to more than one template"),
            Rule::ForeignNode(n) => write!(f, "edge uses node {n} outside its template"),
            Rule::DuplicateEdge(u, v) => write!(f, "more than one edge from {u} to {v}"),
            Rule::UndeclaredMutex(n) => write!(f, "undeclared mutex {n}"),
            Rule::UndeclaredGlobal(n) => write!(f, "undeclared global {n}"),
            Rule::UndeclaredLocal(n) => write!(f, "undeclared local {n}"),
            Rule::UnknownTemplate(n) => write!(f, "create of unknown template {n}"),
            Rule::WritesSelf => write!(f, "`self` is read-only"),
            Rule::NestedAtomic => write!(f, "nested atomic block"),
            Rule::EmptyAtomic => write!(f, "empty atomic block"),
            Rule::AtomicMemberNotAdmissible => write!(
                f,
                "only the first member of an atomic block may be lock/unlock/create/guard"
            ),
            Rule::MisplacedPlaceholder => write!(f, "global placeholder outside a global read"),
            Rule::DuplicateAssertId(id) => write!(f, "assert id {id} used twice"),
            Rule::BadGlobalMutex(n) => write!(f, "bad dedicated mutex entry for {n}"),
            Rule::Type(e) => write!(f, "{e}"),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Issue {
    /// Human-readable location: a template, node or edge.
    pub location: String,
    pub rule: Rule,
}

impl fmt::Display for Issue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.location, self.rule)
    }
}

/// Checks every well-formedness rule; an empty report means the program is valid.
pub fn validate_program(p: &Program) -> Vec<Issue> {
    let mut issues = Vec::new();
    let mut push = |location: String, rule: Rule| issues.push(Issue { location, rule });

    if p.main().is_none() {
        push("program".into(), Rule::NoMain);
    }
    let mut seen = BTreeSet::new();
    for t in &p.templates {
        if !seen.insert(t.name.as_str()) {
            push(format!("thread {}", t.name), Rule::DuplicateTemplate(t.name.clone()));
        }
    }
    let mut names = BTreeSet::new();
    for n in p
        .globals
        .iter()
        .map(|g| &g.name)
        .chain(p.locals.iter().map(|l| &l.name))
    {
        if !names.insert(n.as_str()) {
            push("declarations".into(), Rule::DuplicateDeclaration(n.clone()));
        }
        if n == SELF {
            push("declarations".into(), Rule::SelfDeclared);
        }
    }
    let mut mutexes = BTreeSet::new();
    for m in &p.mutexes {
        if !mutexes.insert(m.as_str()) {
            push("declarations".into(), Rule::DuplicateDeclaration(m.clone()));
        }
        if p.global(m).is_some() {
            push("declarations".into(), Rule::GlobalIsMutex(m.clone()));
        }
    }
    for (g, m) in &p.global_mutexes {
        if p.global(g).is_none() || !p.has_mutex(m) {
            push(format!("mutex {m}"), Rule::BadGlobalMutex(g.clone()));
        }
    }

    let mut owner: HashMap<NodeId, &str> = HashMap::new();
    let mut assert_ids = BTreeSet::new();
    for t in &p.templates {
        for &n in &t.nodes {
            if let Some(prev) = owner.insert(n, &t.name) {
                if prev != t.name {
                    push(format!("thread {}", t.name), Rule::SharedNode(n));
                }
            }
        }
        if t.in_degree(t.initial) > 0 {
            push(format!("thread {}", t.name), Rule::InitialHasIncoming(t.initial));
        }
        let mut pairs = BTreeSet::new();
        for e in &t.edges {
            let here = format!("thread {} edge {}->{}", t.name, e.src, e.dst);
            for n in [e.src, e.dst] {
                if !t.nodes.contains(&n) {
                    push(here.clone(), Rule::ForeignNode(n));
                }
            }
            if !pairs.insert((e.src, e.dst)) {
                push(here.clone(), Rule::DuplicateEdge(e.src, e.dst));
            }
            if let Action::Atomic(ms) = &e.action {
                if ms.is_empty() {
                    push(here.clone(), Rule::EmptyAtomic);
                }
                for (i, m) in ms.iter().enumerate() {
                    if matches!(m, Action::Atomic(_)) {
                        push(here.clone(), Rule::NestedAtomic);
                    } else if i > 0 && !m.always_admissible() {
                        push(here.clone(), Rule::AtomicMemberNotAdmissible);
                    }
                }
            }
            for m in e.action.members() {
                for rule in check_member(p, m) {
                    push(here.clone(), rule);
                }
                for id in m.assert_ids() {
                    if !assert_ids.insert(id.clone()) {
                        push(here.clone(), Rule::DuplicateAssertId(id.clone()));
                    }
                }
            }
        }
    }
    issues
}

fn check_member(p: &Program, a: &Action) -> Vec<Rule> {
    let mut rules = Vec::new();
    let locals = |v: &String| p.local_type(v);
    let expr = |e: &Expr, placeholder: Option<Type>, want: Option<Type>, rules: &mut Vec<Rule>| {
        if placeholder.is_none() && e.has_placeholder() {
            rules.push(Rule::MisplacedPlaceholder);
            return;
        }
        for v in e.vars() {
            if p.local(&v).is_none() {
                rules.push(Rule::UndeclaredLocal(v));
            }
        }
        match e.type_of(&locals, placeholder) {
            Ok(t) => {
                if let Some(w) = want {
                    if t != w {
                        rules.push(Rule::Type(TypeError::Mismatch {
                            expr: e.to_string(),
                            expected: w,
                            found: t,
                        }));
                    }
                }
            }
            Err(TypeError::Undeclared(_)) => {}
            Err(err) => rules.push(Rule::Type(err)),
        }
    };
    let local_ty = |name: &str, rules: &mut Vec<Rule>| -> Option<Type> {
        if name == SELF {
            rules.push(Rule::WritesSelf);
            return None;
        }
        let t = p.local_type(name);
        if t.is_none() {
            rules.push(Rule::UndeclaredLocal(name.to_string()));
        }
        t
    };
    match a {
        Action::Lock(m) | Action::Unlock(m) => {
            if !p.has_mutex(m) {
                rules.push(Rule::UndeclaredMutex(m.clone()));
            }
        }
        Action::Create(t) => {
            if p.template(t).is_none() {
                rules.push(Rule::UnknownTemplate(t.clone()));
            }
        }
        Action::LocalUpdate { local, value } => {
            let t = local_ty(local, &mut rules);
            expr(value, None, t, &mut rules);
        }
        Action::GlobalRead {
            local,
            global,
            value,
        } => {
            let t = local_ty(local, &mut rules);
            match p.global(global) {
                Some(g) => expr(value, Some(g.ty), t, &mut rules),
                None => rules.push(Rule::UndeclaredGlobal(global.clone())),
            }
        }
        Action::GlobalWrite { global, value } => match p.global(global) {
            Some(g) => expr(value, None, Some(g.ty), &mut rules),
            None => rules.push(Rule::UndeclaredGlobal(global.clone())),
        },
        Action::Assert { cond, .. } | Action::Pos(cond) | Action::Neg(cond) => {
            expr(cond, None, Some(Type::Bool), &mut rules)
        }
        Action::Atomic(_) => {}
    }
    rules
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny() -> Program {
        let mut main = ThreadTemplate::new(MAIN, NodeId(0));
        main.add_edge(NodeId(0), Action::Lock("m".into()), NodeId(1));
        main.add_edge(NodeId(1), Action::Unlock("m".into()), NodeId(2));
        Program {
            mutexes: vec!["m".into()],
            templates: vec![main],
            ..Program::default()
        }
    }

    #[test]
    fn child_ids() {
        assert_eq!(child_thread_id(&ThreadId::initial(), 0), ThreadId(vec![0]));
        assert_eq!(child_thread_id(&ThreadId(vec![0]), 0), ThreadId(vec![0, 0]));
        assert_eq!(child_thread_id(&ThreadId::initial(), 2), ThreadId(vec![2]));
        assert_eq!(
            ThreadId(vec![0, 3]).parent(),
            Some((ThreadId(vec![0]), 3))
        );
    }

    #[test]
    fn valid_tiny_program() {
        assert!(validate_program(&tiny()).is_empty());
    }

    #[test]
    fn duplicate_edge_is_reported() {
        let mut p = tiny();
        p.templates[0].add_edge(NodeId(0), Action::Unlock("m".into()), NodeId(1));
        let issues = validate_program(&p);
        assert!(issues
            .iter()
            .any(|i| i.rule == Rule::DuplicateEdge(NodeId(0), NodeId(1))));
    }

    #[test]
    fn missing_main() {
        let mut p = tiny();
        p.templates[0].name = "other".into();
        let issues = validate_program(&p);
        assert_eq!(issues[0].rule, Rule::NoMain);
        assert_eq!(issues[0].rule.to_string(), "no main");
    }

    #[test]
    fn initial_node_without_incoming() {
        let mut p = tiny();
        p.templates[0].add_edge(NodeId(2), Action::Lock("m".into()), NodeId(0));
        assert!(validate_program(&p)
            .iter()
            .any(|i| i.rule == Rule::InitialHasIncoming(NodeId(0))));
    }

    #[test]
    fn atomic_member_rules() {
        let mut p = tiny();
        p.templates[0].add_edge(
            NodeId(2),
            Action::Atomic(vec![
                Action::Lock("m".into()),
                Action::Unlock("m".into()),
            ]),
            NodeId(3),
        );
        assert!(validate_program(&p)
            .iter()
            .any(|i| i.rule == Rule::AtomicMemberNotAdmissible));
    }

    #[test]
    fn self_is_read_only() {
        let mut p = tiny();
        p.templates[0].add_edge(
            NodeId(2),
            Action::LocalUpdate {
                local: SELF.into(),
                value: Expr::int(1),
            },
            NodeId(3),
        );
        assert!(validate_program(&p).iter().any(|i| i.rule == Rule::WritesSelf));
    }

    #[test]
    fn structural_equality_ignores_numbering() {
        let a = tiny();
        let mut b = Program {
            mutexes: vec!["m".into()],
            ..Program::default()
        };
        let mut main = ThreadTemplate::new(MAIN, NodeId(10));
        main.add_edge(NodeId(7), Action::Unlock("m".into()), NodeId(3));
        main.add_edge(NodeId(10), Action::Lock("m".into()), NodeId(7));
        b.templates.push(main);
        assert!(a.structurally_eq(&b));
        b.templates[0].edges[0].action = Action::Lock("m".into());
        assert!(!a.structurally_eq(&b));
    }
}
