//! Local and global trace semantics for programs with a dedicated mutex per
//! global.
//!
//! A global trace is a DAG of local configurations `(thread, n, node,
//! locals)`. Consecutive configurations of a thread are linked by program
//! order (labelled with the edge taken), a create step links the creating
//! configuration to the child's initial one, and every `lock(m)` is linked
//! to the `unlock(m)` it follows (the first one to the least element).

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::fmt::{self, Write};

use fixedbitset::FixedBitSet;
use thiserror::Error;

use crate::analysis::compute_locksets;
use crate::expr::EvalError;
use crate::frontend::SourceMap;
use crate::interleave::{Interleaving, Machine, State, Step, StepError, ThreadState};
use crate::program::{Action, AssertId, EdgeId, NodeId, Program, ThreadId, MAIN};
use crate::value::Value;

#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Event {
    pub thread: ThreadId,
    pub template: usize,
    pub n: u32,
    pub node: NodeId,
    pub locals: Vec<Value>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Order {
    Program(EdgeId),
    Create,
    /// Lock order of the mutex with this index.
    Lock(usize),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Link {
    pub from: usize,
    pub to: usize,
    pub order: Order,
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct GlobalTrace {
    pub events: Vec<Event>,
    pub links: Vec<Link>,
}

/// A global trace with a unique maximal event.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct LocalTrace {
    pub trace: GlobalTrace,
    pub ego: usize,
}

impl LocalTrace {
    pub fn ego_thread(&self) -> &ThreadId {
        &self.trace.events[self.ego].thread
    }
}

impl GlobalTrace {
    pub fn find(&self, t: &ThreadId, n: u32) -> Option<usize> {
        self.events.iter().position(|e| &e.thread == t && e.n == n)
    }

    pub fn least(&self) -> Option<usize> {
        self.find(&ThreadId::initial(), 0)
    }

    pub fn threads(&self) -> BTreeSet<ThreadId> {
        self.events.iter().map(|e| e.thread.clone()).collect()
    }

    /// Events of a thread ordered by step count.
    pub fn path(&self, t: &ThreadId) -> Vec<usize> {
        let mut v: Vec<usize> = (0..self.events.len()).filter(|&i| &self.events[i].thread == t).collect();
        v.sort_by_key(|&i| self.events[i].n);
        v
    }

    /// The program-order step leaving an event.
    pub fn step_from(&self, e: usize) -> Option<(usize, EdgeId)> {
        self.links.iter().find_map(|l| match l.order {
            Order::Program(edge) if l.from == e => Some((l.to, edge)),
            _ => None,
        })
    }

    /// The program-order step entering an event.
    pub fn step_into(&self, e: usize) -> Option<(usize, EdgeId)> {
        self.links.iter().find_map(|l| match l.order {
            Order::Program(edge) if l.to == e => Some((l.from, edge)),
            _ => None,
        })
    }

    /// Causal past of every event (reflexive), or `None` if the links
    /// contain a cycle.
    pub fn causal_pasts(&self) -> Option<Vec<FixedBitSet>> {
        let n = self.events.len();
        let order = self.topological_order()?;
        let mut preds: Vec<Vec<usize>> = vec![Vec::new(); n];
        for l in &self.links {
            preds[l.to].push(l.from);
        }
        let mut past = vec![FixedBitSet::with_capacity(n); n];
        for &e in &order {
            let mut s = FixedBitSet::with_capacity(n);
            s.insert(e);
            for &p in &preds[e] {
                s.union_with(&past[p]);
            }
            past[e] = s;
        }
        Some(past)
    }

    pub fn topological_order(&self) -> Option<Vec<usize>> {
        let n = self.events.len();
        let mut indeg = vec![0usize; n];
        let mut succ: Vec<Vec<usize>> = vec![Vec::new(); n];
        for l in &self.links {
            if l.from >= n || l.to >= n {
                return None;
            }
            indeg[l.to] += 1;
            succ[l.from].push(l.to);
        }
        let mut ready: Vec<usize> = (0..n).filter(|&i| indeg[i] == 0).collect();
        let mut out = Vec::with_capacity(n);
        while let Some(e) = ready.pop() {
            out.push(e);
            for &s in &succ[e] {
                indeg[s] -= 1;
                if indeg[s] == 0 {
                    ready.push(s);
                }
            }
        }
        (out.len() == n).then_some(out)
    }

    pub fn maximal(&self) -> Vec<usize> {
        let has_succ: BTreeSet<usize> = self.links.iter().map(|l| l.from).collect();
        (0..self.events.len()).filter(|i| !has_succ.contains(i)).collect()
    }

    /// Order-insensitive form: events sorted by `(thread, n)`, links
    /// renumbered accordingly and sorted.
    pub fn canonical(&self) -> (Vec<Event>, Vec<Link>) {
        let mut idx: Vec<usize> = (0..self.events.len()).collect();
        idx.sort_by(|&a, &b| {
            (&self.events[a].thread, self.events[a].n).cmp(&(&self.events[b].thread, self.events[b].n))
        });
        let mut pos = vec![0; idx.len()];
        for (k, &i) in idx.iter().enumerate() {
            pos[i] = k;
        }
        let events = idx.iter().map(|&i| self.events[i].clone()).collect();
        let mut links: Vec<Link> = self
            .links
            .iter()
            .map(|l| Link {
                from: pos[l.from],
                to: pos[l.to],
                order: l.order,
            })
            .collect();
        links.sort();
        (events, links)
    }

    pub fn same_as(&self, other: &GlobalTrace) -> bool {
        self.canonical() == other.canonical()
    }

    /// The local trace ending in `ego`: its causal past.
    pub fn local_trace(&self, ego: usize) -> Option<LocalTrace> {
        let past = self.causal_pasts()?;
        let keep: Vec<usize> = past[ego].ones().collect();
        let mut pos = vec![usize::MAX; self.events.len()];
        for (k, &i) in keep.iter().enumerate() {
            pos[i] = k;
        }
        let events = keep.iter().map(|&i| self.events[i].clone()).collect();
        let links = self
            .links
            .iter()
            .filter(|l| pos[l.from] != usize::MAX && pos[l.to] != usize::MAX)
            .map(|l| Link {
                from: pos[l.from],
                to: pos[l.to],
                order: l.order,
            })
            .collect();
        Some(LocalTrace {
            trace: GlobalTrace { events, links },
            ego: pos[ego],
        })
    }

    /// Textual DAG: one line per event, then one line per link.
    pub fn dump(&self, p: &Program, sm: Option<&SourceMap>) -> String {
        let mut out = String::new();
        for (i, e) in self.events.iter().enumerate() {
            let node = sm
                .and_then(|sm| sm.node(e.node))
                .map(|l| l.to_string())
                .unwrap_or_else(|| e.node.to_string());
            let locals: Vec<String> = p
                .locals
                .iter()
                .zip(&e.locals)
                .map(|(d, v)| format!("{}={v}", d.name))
                .collect();
            writeln!(
                out,
                "#{i} thread={} n={} node={node} locals={{{}}}",
                e.thread,
                e.n,
                locals.join(", ")
            )
            .unwrap();
        }
        for l in &self.links {
            let kind = match l.order {
                Order::Program(_) => "po".to_string(),
                Order::Create => "create".to_string(),
                Order::Lock(m) => format!("lock({})", p.mutexes[m]),
            };
            writeln!(out, "{kind}: #{} -> #{}", l.from, l.to).unwrap();
        }
        out
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Requirement {
    /// Per-thread paths and the effect of each step.
    ProgramOrder,
    Causality,
    CreateOrder,
    LockOrder,
    ReadsOfGlobals,
}

impl fmt::Display for Requirement {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Requirement::ProgramOrder => "Program Order",
            Requirement::Causality => "Causality Order",
            Requirement::CreateOrder => "Create Order",
            Requirement::LockOrder => "Lock Order",
            Requirement::ReadsOfGlobals => "Reads of Globals",
        })
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ConsistencyIssue {
    pub requirement: Requirement,
    pub events: Vec<usize>,
    pub message: String,
}

impl fmt::Display for ConsistencyIssue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let evs: Vec<String> = self.events.iter().map(|e| format!("#{e}")).collect();
        write!(f, "{}: {} ({})", self.requirement, self.message, evs.join(", "))
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Error)]
pub enum TraceError {
    #[error("program is not in the dedicated-mutex fragment: {}", .0.join("; "))]
    NotInLangMG(Vec<String>),
    #[error("trace is not create-complete")]
    NotCreateComplete,
    #[error("trace is inconsistent: {0}")]
    Inconsistent(String),
    #[error("replay failed: {0}")]
    Replay(String),
}

/// Checks that every global has a dedicated mutex held at each access and
/// that there are no atomic blocks.
pub fn check_lang_mg(p: &Program) -> Result<(), TraceError> {
    let mut bad = Vec::new();
    for g in &p.globals {
        if !p.global_mutexes.contains_key(&g.name) {
            bad.push(format!("global {} has no dedicated mutex", g.name));
        }
    }
    let ls = compute_locksets(p);
    for t in &p.templates {
        for e in &t.edges {
            if matches!(e.action, Action::Atomic(_)) {
                bad.push(format!("thread {}: atomic block at {}", t.name, e.src));
                continue;
            }
            for g in e.action.globals_accessed() {
                let Some(m) = p.global_mutexes.get(g) else { continue };
                let held = ls.get(&e.src).is_none_or(|s| s.contains(m));
                if !held {
                    bad.push(format!("thread {}: access to {g} at {} without {m}", t.name, e.src));
                }
            }
        }
    }
    if bad.is_empty() {
        Ok(())
    } else {
        Err(TraceError::NotInLangMG(bad))
    }
}

/// Result of one thread-local step.
struct LocalStep {
    node: NodeId,
    locals: Vec<Value>,
    violations: Vec<AssertId>,
    written: Option<(usize, Value)>,
    /// Child id, template and initial locals.
    created: Option<(ThreadId, usize, Vec<Value>)>,
}

/// Executes one edge of thread `t` in isolation. `held` are the mutexes the
/// thread holds, `read` the value a global read observes.
#[allow(clippy::too_many_arguments)]
fn local_step(
    m: &Machine,
    t: &ThreadId,
    template: usize,
    node: NodeId,
    locals: &[Value],
    creates: u32,
    held: &BTreeSet<usize>,
    read: Option<(usize, Value)>,
    e: EdgeId,
) -> Result<LocalStep, StepError> {
    let p = m.program;
    let mut threads = BTreeMap::new();
    threads.insert(
        t.clone(),
        ThreadState {
            template,
            node,
            locals: locals.to_vec(),
            creates,
        },
    );
    let mut globals: Vec<Value> = p.globals.iter().map(|g| g.init.clone()).collect();
    if let Some((g, v)) = &read {
        globals[*g] = v.clone();
    }
    let mutexes = (0..p.mutexes.len())
        .map(|i| held.contains(&i).then(|| t.clone()))
        .collect();
    let s = State {
        threads,
        mutexes,
        globals,
    };
    let (next, violations) = m.apply_step(&s, t, e)?;
    let action = &p.edge(e).action;
    let written = match action {
        Action::GlobalWrite { global, .. } => {
            let g = p.global_index(global).unwrap();
            Some((g, next.globals[g].clone()))
        }
        _ => None,
    };
    let created = match action {
        Action::Create(name) => {
            let c = t.child(creates);
            Some((c.clone(), p.template_index(name).unwrap(), next.threads[&c].locals.clone()))
        }
        _ => None,
    };
    let ts = &next.threads[t];
    Ok(LocalStep {
        node: ts.node,
        locals: ts.locals.clone(),
        violations,
        written,
        created,
    })
}

/// Checks the consistency requirements; an empty report means consistent.
pub fn check_consistency(p: &Program, g: &GlobalTrace) -> Vec<ConsistencyIssue> {
    let mut issues = Vec::new();
    macro_rules! push {
        ($req:expr, $events:expr, $msg:expr $(,)?) => {
            issues.push(ConsistencyIssue {
                requirement: $req,
                events: $events,
                message: $msg,
            })
        };
    }
    let n = g.events.len();
    if n == 0 {
        push!(Requirement::Causality, vec![], "trace has no events".into());
        return issues;
    }
    if g.links.iter().any(|l| l.from >= n || l.to >= n) {
        push!(Requirement::Causality, vec![], "link refers to a missing event".into());
        return issues;
    }
    // causality
    let Some(past) = g.causal_pasts() else {
        push!(Requirement::Causality, vec![], "causality order has a cycle".into());
        return issues;
    };
    let minimal: Vec<usize> = (0..n).filter(|&e| !g.links.iter().any(|l| l.to == e)).collect();
    let least = g.least();
    if minimal.len() != 1 || least != Some(minimal[0]) {
        push!(
            Requirement::Causality,
            minimal.clone(),
            "causality order needs the initial configuration of the main thread as unique least element".into(),
        );
        return issues;
    }
    let least = minimal[0];
    let m = Machine::new(p);

    // thread paths and templates
    let mut seen = HashSet::new();
    for (i, e) in g.events.iter().enumerate() {
        if !seen.insert((e.thread.clone(), e.n)) {
            push!(Requirement::ProgramOrder, vec![i], format!("duplicate configuration {} n={}", e.thread, e.n));
        }
    }
    let main = p.template_index(MAIN).unwrap_or(0);
    let mut per_link_ok = true;
    for l in &g.links {
        if let Order::Program(edge) = l.order {
            let (a, b) = (&g.events[l.from], &g.events[l.to]);
            let pe = p.templates.get(edge.template as usize).and_then(|t| t.edges.get(edge.index as usize));
            let fits = a.thread == b.thread
                && b.n == a.n + 1
                && edge.template as usize == a.template
                && pe.is_some_and(|pe| pe.src == a.node && pe.dst == b.node);
            if !fits {
                per_link_ok = false;
                push!(Requirement::ProgramOrder, vec![l.from, l.to], "program-order link does not match a template edge".into());
            }
        }
    }
    if !per_link_ok {
        return issues;
    }
    let threads = g.threads();
    let mut held_before: BTreeMap<usize, BTreeSet<usize>> = BTreeMap::new();
    let mut creates_before: BTreeMap<usize, u32> = BTreeMap::new();
    for t in &threads {
        let path = g.path(t);
        for (k, &e) in path.iter().enumerate() {
            if g.events[e].n as usize != k {
                push!(Requirement::ProgramOrder, vec![e], format!("thread {t} skips a step"));
            }
            if g.events[e].template != g.events[path[0]].template {
                push!(Requirement::ProgramOrder, vec![e], format!("thread {t} changes template"));
            }
            if k > 0 && g.step_into(e).map(|(pre, _)| pre) != Some(path[k - 1]) {
                push!(Requirement::ProgramOrder, vec![path[k - 1], e], format!("thread {t} path is broken"));
            }
        }
        let first = &g.events[path[0]];
        let tpl = first.template;
        if tpl >= p.templates.len() || first.node != p.templates[tpl].initial {
            push!(Requirement::ProgramOrder, vec![path[0]], format!("thread {t} does not start at its initial node"));
        }
        if t.is_initial() {
            if tpl != main || first.locals.iter().any(|v| !v.is_zero()) {
                push!(Requirement::ProgramOrder, vec![path[0]], "main thread starts in the wrong configuration".into());
            }
        }
        let mut held = BTreeSet::new();
        let mut creates = 0u32;
        for &e in &path {
            held_before.insert(e, held.clone());
            creates_before.insert(e, creates);
            if let Some((_, edge)) = g.step_from(e) {
                match &p.edge(edge).action {
                    Action::Lock(mx) => {
                        held.insert(p.mutex_index(mx).unwrap());
                    }
                    Action::Unlock(mx) => {
                        held.remove(&p.mutex_index(mx).unwrap());
                    }
                    Action::Create(_) => creates += 1,
                    _ => {}
                }
            }
        }
    }
    if !issues.is_empty() {
        return issues;
    }

    // create order
    for t in &threads {
        let path = g.path(t);
        let init = path[0];
        let incoming: Vec<&Link> = g.links.iter().filter(|l| l.to == init && l.order == Order::Create).collect();
        if t.is_initial() {
            if !incoming.is_empty() {
                push!(Requirement::CreateOrder, vec![init], "main thread has a creator".into());
            }
            continue;
        }
        if incoming.len() != 1 {
            push!(Requirement::CreateOrder, vec![init], format!("thread {t} must be created by exactly one create action"));
            continue;
        }
        let src = incoming[0].from;
        let ok = match (t.parent(), g.step_from(src)) {
            (Some((parent, k)), Some((_, edge))) => {
                g.events[src].thread == parent
                    && creates_before[&src] == k
                    && matches!(&p.edge(edge).action, Action::Create(name) if p.template_index(name) == Some(g.events[init].template))
                    && g.events[init].locals == g.events[src].locals
            }
            _ => false,
        };
        if !ok {
            push!(Requirement::CreateOrder, vec![src, init], format!("thread {t} is not created by its parent's create action"));
        }
    }
    for l in &g.links {
        if l.order == Order::Create && g.events[l.to].n != 0 {
            push!(Requirement::CreateOrder, vec![l.from, l.to], "create link into a non-initial configuration".into());
        }
    }

    // lock order
    for (mi, mname) in p.mutexes.iter().enumerate() {
        let links: Vec<&Link> = g.links.iter().filter(|l| l.order == Order::Lock(mi)).collect();
        let is_step = |e: usize, want_lock: bool| {
            g.step_into(e).is_some_and(|(_, edge)| match &p.edge(edge).action {
                Action::Lock(x) => want_lock && x == mname,
                Action::Unlock(x) => !want_lock && x == mname,
                _ => false,
            })
        };
        let lock_events: Vec<usize> = (0..n).filter(|&e| is_step(e, true)).collect();
        for &e in &lock_events {
            let c = links.iter().filter(|l| l.to == e).count();
            if c != 1 {
                push!(Requirement::LockOrder, vec![e], format!("lock({mname}) must follow exactly one release, found {c}"));
            }
        }
        for l in &links {
            if !is_step(l.to, true) || !(l.from == least || is_step(l.from, false)) {
                push!(Requirement::LockOrder, vec![l.from, l.to], format!("lock({mname}) link between wrong events"));
            }
        }
        let mut out_count: BTreeMap<usize, usize> = BTreeMap::new();
        for l in &links {
            *out_count.entry(l.from).or_default() += 1;
        }
        for (&src, &c) in &out_count {
            if c > 1 {
                push!(Requirement::LockOrder, vec![src], format!("{c} lock({mname}) operations follow one release"));
            }
        }
        // walk the chain from the least element
        let mut cur = least;
        let mut in_chain = BTreeSet::new();
        while let Some(l) = links.iter().find(|l| l.from == cur) {
            if !in_chain.insert(l.to) {
                break;
            }
            // the release matching this acquisition
            let t = &g.events[l.to].thread;
            let path = g.path(t);
            let start = path.iter().position(|&e| e == l.to).unwrap();
            match path[start + 1..].iter().find(|&&e| is_step(e, false)) {
                Some(&u) => cur = u,
                None => break,
            }
        }
        for &e in &lock_events {
            if !in_chain.contains(&e) {
                push!(Requirement::LockOrder, vec![e], format!("lock({mname}) is not ordered after the previous release"));
            }
        }
    }

    // step effects and reads of globals
    let writes: Vec<(usize, usize, usize)> = g
        .links
        .iter()
        .filter_map(|l| match l.order {
            Order::Program(edge) => match &p.edge(edge).action {
                Action::GlobalWrite { global, .. } => Some((l.from, l.to, p.global_index(global).unwrap())),
                _ => None,
            },
            _ => None,
        })
        .collect();
    let mut written_value: BTreeMap<usize, Value> = BTreeMap::new();
    let order = g.topological_order().unwrap();
    for &e in &order {
        let Some((post, edge)) = g.step_from(e) else { continue };
        let ev = &g.events[e];
        let action = &p.edge(edge).action;
        let read = match action {
            Action::GlobalRead { global, .. } => {
                let gi = p.global_index(global).unwrap();
                let cands: Vec<usize> = writes
                    .iter()
                    .filter(|(_, wpost, wg)| *wg == gi && past[e].contains(*wpost))
                    .map(|(_, wpost, _)| *wpost)
                    .collect();
                let last: Vec<usize> = cands
                    .iter()
                    .copied()
                    .filter(|&w| !cands.iter().any(|&w2| w2 != w && past[w2].contains(w)))
                    .collect();
                match last.as_slice() {
                    [] => Some((gi, p.globals[gi].init.clone())),
                    [w] => match written_value.get(w) {
                        Some(v) => Some((gi, v.clone())),
                        None => {
                            push!(Requirement::ReadsOfGlobals, vec![*w, post], "read of an unevaluated write".into());
                            continue;
                        }
                    },
                    _ => {
                        let mut evs = last.clone();
                        evs.push(post);
                        push!(Requirement::ReadsOfGlobals, evs, format!("read of {global} has no unique last write"));
                        continue;
                    }
                }
            }
            _ => None,
        };
        let is_read = read.is_some();
        match local_step(&m, &ev.thread, ev.template, ev.node, &ev.locals, creates_before[&e], &held_before[&e], read, edge) {
            Ok(r) => {
                if let Some((_, v)) = r.written {
                    written_value.insert(post, v);
                }
                if r.locals != g.events[post].locals {
                    let req = if is_read { Requirement::ReadsOfGlobals } else { Requirement::ProgramOrder };
                    push!(req, vec![e, post], format!("step `{}` yields different locals", action.render()));
                }
            }
            Err(StepError::Eval(err)) => {
                push!(Requirement::ProgramOrder, vec![e, post], format!("step fails: {err}"));
            }
            Err(_) => {
                push!(Requirement::ProgramOrder, vec![e, post], format!("step `{}` is not admissible", action.render()));
            }
        }
    }
    issues
}

/// Whether every created thread's create step is present and every create
/// step's child has its initial configuration.
pub fn is_create_complete(p: &Program, g: &GlobalTrace) -> bool {
    let threads = g.threads();
    for t in &threads {
        if t.is_initial() {
            continue;
        }
        let Some(init) = g.find(t, 0) else { return false };
        let Some(l) = g.links.iter().find(|l| l.to == init && l.order == Order::Create) else {
            return false;
        };
        let Some((_, edge)) = g.step_from(l.from) else { return false };
        if !matches!(p.edge(edge).action, Action::Create(_)) {
            return false;
        }
    }
    for l in &g.links {
        if let Order::Program(edge) = l.order {
            if matches!(p.edge(edge).action, Action::Create(_))
                && !g.links.iter().any(|c| c.order == Order::Create && c.from == l.from)
            {
                return false;
            }
        }
    }
    true
}

/// Builds the global trace of an interleaving.
pub fn interleaving_to_global_trace(p: &Program, i: &Interleaving) -> GlobalTrace {
    let mut g = GlobalTrace::default();
    let s0 = &i.states[0];
    let mut current: BTreeMap<ThreadId, usize> = BTreeMap::new();
    for (t, ts) in &s0.threads {
        g.events.push(Event {
            thread: t.clone(),
            template: ts.template,
            n: 0,
            node: ts.node,
            locals: ts.locals.clone(),
        });
        current.insert(t.clone(), g.events.len() - 1);
    }
    let least = current[&ThreadId::initial()];
    let mut chain: Vec<usize> = vec![least; p.mutexes.len()];
    for (k, st) in i.steps.iter().enumerate() {
        let after = &i.states[k + 1];
        let pre = current[&st.thread];
        let ts = &after.threads[&st.thread];
        g.events.push(Event {
            thread: st.thread.clone(),
            template: ts.template,
            n: g.events[pre].n + 1,
            node: ts.node,
            locals: ts.locals.clone(),
        });
        let post = g.events.len() - 1;
        current.insert(st.thread.clone(), post);
        g.links.push(Link {
            from: pre,
            to: post,
            order: Order::Program(st.edge),
        });
        for a in p.edge(st.edge).action.members() {
            match a {
                Action::Create(_) => {
                    let before = &i.states[k];
                    for (c, cs) in &after.threads {
                        if !before.threads.contains_key(c) {
                            g.events.push(Event {
                                thread: c.clone(),
                                template: cs.template,
                                n: 0,
                                node: cs.node,
                                locals: cs.locals.clone(),
                            });
                            let ci = g.events.len() - 1;
                            current.insert(c.clone(), ci);
                            g.links.push(Link {
                                from: pre,
                                to: ci,
                                order: Order::Create,
                            });
                        }
                    }
                }
                Action::Lock(m) => {
                    let mi = p.mutex_index(m).unwrap();
                    g.links.push(Link {
                        from: chain[mi],
                        to: post,
                        order: Order::Lock(mi),
                    });
                }
                Action::Unlock(m) => {
                    chain[p.mutex_index(m).unwrap()] = post;
                }
                _ => {}
            }
        }
    }
    g
}

/// Linearizes a create-complete trace into an interleaving. Ties between
/// available events are broken by `(thread, n)`.
pub fn global_trace_to_interleaving(p: &Program, g: &GlobalTrace) -> Result<Interleaving, TraceError> {
    if !is_create_complete(p, g) {
        return Err(TraceError::NotCreateComplete);
    }
    let n = g.events.len();
    let least = g.least().ok_or_else(|| TraceError::Inconsistent("no least element".into()))?;
    let mut done = vec![false; n];
    done[least] = true;
    let mut preds: Vec<Vec<usize>> = vec![Vec::new(); n];
    for l in &g.links {
        preds[l.to].push(l.from);
    }
    let mut pending: BTreeSet<(ThreadId, u32, usize)> = (0..n)
        .filter(|&e| g.events[e].n > 0)
        .map(|e| (g.events[e].thread.clone(), g.events[e].n, e))
        .collect();
    let mut steps = Vec::new();
    while !pending.is_empty() {
        let next = pending
            .iter()
            .find(|(_, _, e)| preds[*e].iter().all(|&p| done[p]))
            .cloned()
            .ok_or_else(|| TraceError::Inconsistent("no linearization exists".into()))?;
        pending.remove(&next);
        let e = next.2;
        done[e] = true;
        let (pre, edge) = g.step_into(e).ok_or_else(|| TraceError::Inconsistent("missing program order".into()))?;
        if matches!(p.edge(edge).action, Action::Create(_)) {
            for l in &g.links {
                if l.order == Order::Create && l.from == pre {
                    done[l.to] = true;
                }
            }
        }
        steps.push(Step {
            thread: g.events[e].thread.clone(),
            edge,
        });
    }
    // children created without a present create step cannot be reached
    if done.iter().any(|d| !d) {
        return Err(TraceError::NotCreateComplete);
    }
    let m = Machine::new(p);
    m.replay(&steps)
        .map(|(i, _)| i)
        .map_err(|e| TraceError::Replay(e.to_string()))
}

/// Per-thread configurations of an interleaving: the initial one and the
/// one after each step of the thread, with the edges taken.
fn thread_views(i: &Interleaving) -> BTreeMap<ThreadId, (Vec<(NodeId, Vec<Value>)>, Vec<EdgeId>)> {
    let mut out: BTreeMap<ThreadId, (Vec<(NodeId, Vec<Value>)>, Vec<EdgeId>)> = BTreeMap::new();
    for (t, ts) in &i.states[0].threads {
        out.insert(t.clone(), (vec![(ts.node, ts.locals.clone())], Vec::new()));
    }
    for (k, st) in i.steps.iter().enumerate() {
        let after = &i.states[k + 1];
        for (t, ts) in &after.threads {
            if !out.contains_key(t) {
                out.insert(t.clone(), (vec![(ts.node, ts.locals.clone())], Vec::new()));
            }
        }
        let ts = &after.threads[&st.thread];
        let v = out.get_mut(&st.thread).unwrap();
        v.0.push((ts.node, ts.locals.clone()));
        v.1.push(st.edge);
    }
    out
}

/// Same threads, and per thread the same configurations and steps.
pub fn coincides(i: &Interleaving, g: &GlobalTrace) -> bool {
    let views = thread_views(i);
    if views.keys().cloned().collect::<BTreeSet<_>>() != g.threads() {
        return false;
    }
    views.iter().all(|(t, (configs, edges))| {
        let path = g.path(t);
        path.len() == configs.len()
            && path.iter().zip(configs).enumerate().all(|(k, (&e, (node, locals)))| {
                let ev = &g.events[e];
                ev.n as usize == k && ev.node == *node && &ev.locals == locals
            })
            && path.windows(2).zip(edges).all(|(w, edge)| g.step_into(w[1]) == Some((w[0], *edge)))
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct TraceBounds {
    pub max_events: usize,
    /// Maximal number of distinct traces kept per size.
    pub max_traces: usize,
}

impl Default for TraceBounds {
    fn default() -> Self {
        TraceBounds {
            max_events: 64,
            max_traces: 1_000_000,
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct TraceStats {
    pub traces: usize,
    pub max_events: usize,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum TraceVerdict {
    Safe(TraceStats),
    Unsafe {
        asserts: BTreeSet<AssertId>,
        assert: AssertId,
        /// Local trace ending right after the violating step.
        witness: LocalTrace,
        stats: TraceStats,
    },
    EvalError {
        error: EvalError,
        trace: GlobalTrace,
        stats: TraceStats,
    },
    BoundExceeded(TraceStats),
}

impl TraceVerdict {
    pub fn kind(&self) -> &'static str {
        match self {
            TraceVerdict::Safe(_) => "Safe",
            TraceVerdict::Unsafe { .. } => "Unsafe",
            TraceVerdict::EvalError { .. } => "EvalError",
            TraceVerdict::BoundExceeded(_) => "BoundExceeded",
        }
    }

    pub fn violated(&self) -> BTreeSet<AssertId> {
        match self {
            TraceVerdict::Unsafe { asserts, .. } => asserts.clone(),
            _ => BTreeSet::new(),
        }
    }
}

#[derive(Clone, Debug)]
struct Cursor {
    last: usize,
    creates: u32,
    held: BTreeSet<usize>,
    steps: Vec<u32>,
}

#[derive(Clone, Debug)]
struct Pending {
    template: usize,
    creator: usize,
    locals: Vec<Value>,
}

/// A trace under construction.
#[derive(Clone, Debug)]
struct Partial {
    trace: GlobalTrace,
    past: Vec<FixedBitSet>,
    cursors: BTreeMap<ThreadId, Cursor>,
    pending: BTreeMap<ThreadId, Pending>,
    /// Per mutex: current holder, the event the next lock follows, and the
    /// sequence of lockers.
    chains: Vec<(Option<ThreadId>, usize, Vec<ThreadId>)>,
    /// Post-event and value of every write, per global.
    writes: Vec<Vec<(usize, Value)>>,
}

type Key = (BTreeMap<ThreadId, Vec<u32>>, Vec<Vec<ThreadId>>);

impl Partial {
    fn key(&self) -> Key {
        (
            self.cursors.iter().map(|(t, c)| (t.clone(), c.steps.clone())).collect(),
            self.chains.iter().map(|c| c.2.clone()).collect(),
        )
    }

    fn push_event(&mut self, ev: Event, preds: &[usize]) -> usize {
        let idx = self.trace.events.len();
        self.trace.events.push(ev);
        let cap = idx + 1;
        for p in &mut self.past {
            p.grow(cap);
        }
        let mut s = FixedBitSet::with_capacity(cap);
        s.insert(idx);
        for &p in preds {
            s.union_with(&self.past[p]);
        }
        self.past.push(s);
        idx
    }
}

enum Extension {
    Next(Partial, Vec<AssertId>, usize),
    Error(EvalError, GlobalTrace),
}

struct Enumerator<'p> {
    m: Machine<'p>,
}

impl<'p> Enumerator<'p> {
    fn root(&self) -> Partial {
        let p = self.m.program;
        let s0 = self.m.initial_state();
        let (t, ts) = s0.threads.iter().next().unwrap();
        let mut part = Partial {
            trace: GlobalTrace::default(),
            past: Vec::new(),
            cursors: BTreeMap::new(),
            pending: BTreeMap::new(),
            chains: vec![(None, 0, Vec::new()); p.mutexes.len()],
            writes: vec![Vec::new(); p.globals.len()],
        };
        let idx = part.push_event(
            Event {
                thread: t.clone(),
                template: ts.template,
                n: 0,
                node: ts.node,
                locals: ts.locals.clone(),
            },
            &[],
        );
        part.cursors.insert(
            t.clone(),
            Cursor {
                last: idx,
                creates: 0,
                held: BTreeSet::new(),
                steps: Vec::new(),
            },
        );
        part
    }

    fn read_value(&self, part: &Partial, pre: usize, g: usize) -> Result<Value, TraceError> {
        let cands: Vec<&(usize, Value)> = part.writes[g].iter().filter(|(w, _)| part.past[pre].contains(*w)).collect();
        let last: Vec<&&(usize, Value)> = cands
            .iter()
            .filter(|(w, _)| !cands.iter().any(|(w2, _)| w2 != w && part.past[*w2].contains(*w)))
            .collect();
        match last.as_slice() {
            [] => Ok(self.m.program.globals[g].init.clone()),
            [(_, v)] => Ok(v.clone()),
            _ => Err(TraceError::Inconsistent(format!(
                "read of {} has no unique last write",
                self.m.program.globals[g].name
            ))),
        }
    }

    fn extensions(&self, part: &Partial) -> Result<Vec<Extension>, TraceError> {
        let p = self.m.program;
        let mut out = Vec::new();
        for (c, pend) in &part.pending {
            let mut next = part.clone();
            next.pending.remove(c);
            let idx = next.push_event(
                Event {
                    thread: c.clone(),
                    template: pend.template,
                    n: 0,
                    node: p.templates[pend.template].initial,
                    locals: pend.locals.clone(),
                },
                &[pend.creator],
            );
            next.trace.links.push(Link {
                from: pend.creator,
                to: idx,
                order: Order::Create,
            });
            next.cursors.insert(
                c.clone(),
                Cursor {
                    last: idx,
                    creates: 0,
                    held: BTreeSet::new(),
                    steps: Vec::new(),
                },
            );
            out.push(Extension::Next(next, Vec::new(), idx));
        }
        for (t, cur) in &part.cursors {
            let ev = &part.trace.events[cur.last];
            let template = ev.template;
            let outs: Vec<(usize, &crate::program::Edge)> = p.templates[template].out_edges(ev.node).collect();
            for (ei, edge) in outs {
                let eid = EdgeId {
                    template: template as u32,
                    index: ei as u32,
                };
                let lock = match &edge.action {
                    Action::Lock(mx) => {
                        let mi = p.mutex_index(mx).unwrap();
                        if part.chains[mi].0.is_some() {
                            continue;
                        }
                        Some(mi)
                    }
                    _ => None,
                };
                let read = match &edge.action {
                    Action::GlobalRead { global, .. } => {
                        let gi = p.global_index(global).unwrap();
                        Some((gi, self.read_value(part, cur.last, gi)?))
                    }
                    _ => None,
                };
                let r = match local_step(&self.m, t, template, ev.node, &ev.locals, cur.creates, &cur.held, read, eid) {
                    Ok(r) => r,
                    Err(StepError::NotAdmissible) => continue,
                    Err(StepError::Eval(err)) => {
                        out.push(Extension::Error(err, part.trace.clone()));
                        continue;
                    }
                    Err(other) => return Err(TraceError::Inconsistent(other.to_string())),
                };
                let mut next = part.clone();
                let mut preds = vec![cur.last];
                if let Some(mi) = lock {
                    preds.push(part.chains[mi].1);
                }
                let post = next.push_event(
                    Event {
                        thread: t.clone(),
                        template,
                        n: ev.n + 1,
                        node: r.node,
                        locals: r.locals,
                    },
                    &preds,
                );
                next.trace.links.push(Link {
                    from: cur.last,
                    to: post,
                    order: Order::Program(eid),
                });
                let c = next.cursors.get_mut(t).unwrap();
                c.last = post;
                c.steps.push(ei as u32);
                match &edge.action {
                    Action::Lock(_) => {
                        let mi = lock.unwrap();
                        let from = next.chains[mi].1;
                        next.trace.links.push(Link {
                            from,
                            to: post,
                            order: Order::Lock(mi),
                        });
                        next.chains[mi].0 = Some(t.clone());
                        next.chains[mi].2.push(t.clone());
                        c.held.insert(mi);
                    }
                    Action::Unlock(mx) => {
                        let mi = p.mutex_index(mx).unwrap();
                        next.chains[mi].0 = None;
                        next.chains[mi].1 = post;
                        c.held.remove(&mi);
                    }
                    Action::Create(_) => {
                        c.creates += 1;
                    }
                    _ => {}
                }
                if let Some((g, v)) = r.written {
                    next.writes[g].push((post, v));
                }
                if let Some((child, tpl, locals)) = r.created {
                    next.pending.insert(
                        child,
                        Pending {
                            template: tpl,
                            creator: cur.last,
                            locals,
                        },
                    );
                }
                out.push(Extension::Next(next, r.violations, post));
            }
        }
        Ok(out)
    }
}

/// Every consistent global trace with at most `max_events` events, each
/// exactly once. `complete` is false if the trace bound cut the search.
pub struct Enumeration {
    pub traces: Vec<GlobalTrace>,
    pub complete: bool,
}

pub fn enumerate_global_traces(p: &Program, bounds: TraceBounds) -> Result<Enumeration, TraceError> {
    check_lang_mg(p)?;
    let en = Enumerator { m: Machine::new(p) };
    let mut traces = Vec::new();
    let mut complete = true;
    if bounds.max_events == 0 {
        return Ok(Enumeration { traces, complete });
    }
    let mut level = vec![en.root()];
    let mut size = 1;
    loop {
        traces.extend(level.iter().map(|pt| pt.trace.clone()));
        if size >= bounds.max_events {
            break;
        }
        let mut seen: HashSet<Key> = HashSet::new();
        let mut next = Vec::new();
        for part in &level {
            for ext in en.extensions(part)? {
                if let Extension::Next(np, _, _) = ext {
                    if seen.insert(np.key()) {
                        if next.len() >= bounds.max_traces {
                            complete = false;
                            continue;
                        }
                        next.push(np);
                    }
                }
            }
        }
        if next.is_empty() {
            break;
        }
        level = next;
        size += 1;
    }
    Ok(Enumeration { traces, complete })
}

/// Decides safety by enumerating traces. With `all_violations` every
/// violated assert is collected; otherwise the search stops at the first.
pub fn trace_safety_with(p: &Program, bounds: TraceBounds, all_violations: bool) -> Result<TraceVerdict, TraceError> {
    check_lang_mg(p)?;
    let en = Enumerator { m: Machine::new(p) };
    let mut level = vec![en.root()];
    let mut stats = TraceStats {
        traces: 1,
        max_events: 1,
    };
    let mut asserts = BTreeSet::new();
    let mut first: Option<(AssertId, LocalTrace)> = None;
    let mut error: Option<(EvalError, GlobalTrace)> = None;
    let mut bound_hit = false;
    let mut size = 1;
    while !level.is_empty() {
        let mut seen: HashSet<Key> = HashSet::new();
        let mut next = Vec::new();
        for part in &level {
            for ext in en.extensions(part)? {
                match ext {
                    Extension::Error(err, trace) => {
                        if error.is_none() {
                            error = Some((err, trace));
                        }
                    }
                    Extension::Next(np, violations, post) => {
                        if size >= bounds.max_events {
                            bound_hit = true;
                            continue;
                        }
                        if !violations.is_empty() {
                            if first.is_none() {
                                let lt = np.trace.local_trace(post).expect("acyclic");
                                first = Some((violations[0].clone(), lt));
                            }
                            asserts.extend(violations);
                        }
                        if seen.insert(np.key()) {
                            if next.len() >= bounds.max_traces {
                                bound_hit = true;
                                continue;
                            }
                            next.push(np);
                        }
                    }
                }
            }
        }
        if first.is_some() && !all_violations {
            break;
        }
        if !next.is_empty() {
            size += 1;
            stats.max_events = size;
        }
        stats.traces += next.len();
        level = next;
    }
    Ok(if let Some((assert, witness)) = first {
        TraceVerdict::Unsafe {
            asserts,
            assert,
            witness,
            stats,
        }
    } else if let Some((error, trace)) = error {
        TraceVerdict::EvalError { error, trace, stats }
    } else if bound_hit {
        TraceVerdict::BoundExceeded(stats)
    } else {
        TraceVerdict::Safe(stats)
    })
}

pub fn trace_safety(p: &Program, bounds: TraceBounds) -> Result<TraceVerdict, TraceError> {
    trace_safety_with(p, bounds, false)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::frontend::parse_program;
    use crate::interleave::{explore, Bounds};

    // running example with the read of `used` under its own mutex
    const MG: &str = "global used: int = 0; mutex m; mutex m_used for used; local tmp: int;
        thread main { create(t1); lock(m); lock(m_used); tmp = used; unlock(m_used); assert(tmp == 0, \"a\"); unlock(m); }
        thread t1 { lock(m); lock(m_used); used = 47; used = 0; unlock(m_used); unlock(m); }";

    fn program() -> Program {
        parse_program(MG).unwrap().0
    }

    /// The interleaving where t1's critical section precedes main's.
    fn figure_interleaving(p: &Program) -> Interleaving {
        let m = Machine::new(p);
        let main = ThreadId::initial();
        let t1 = ThreadId(vec![0]);
        let e = |t: usize, i: u32| EdgeId { template: t as u32, index: i };
        let mut steps = vec![Step { thread: main.clone(), edge: e(0, 0) }];
        for i in 0..6 {
            steps.push(Step { thread: t1.clone(), edge: e(1, i) });
        }
        for i in 1..6 {
            steps.push(Step { thread: main.clone(), edge: e(0, i) });
        }
        m.replay(&steps).unwrap().0
    }

    #[test]
    fn figure_trace_is_consistent_and_coincides() {
        let p = program();
        let i = figure_interleaving(&p);
        let g = interleaving_to_global_trace(&p, &i);
        assert_eq!(check_consistency(&p, &g), vec![]);
        assert!(is_create_complete(&p, &g));
        assert!(coincides(&i, &g));
        let back = global_trace_to_interleaving(&p, &g).unwrap();
        assert!(coincides(&back, &g));
        // t1's critical section wholly precedes main's
        let first_main_lock = back.steps.iter().position(|s| s.thread.is_initial() && s.edge.index == 1).unwrap();
        let last_t1 = back.steps.iter().rposition(|s| !s.thread.is_initial()).unwrap();
        assert!(last_t1 < first_main_lock);
    }

    #[test]
    fn wrong_read_is_reported() {
        let p = program();
        let i = figure_interleaving(&p);
        let mut g = interleaving_to_global_trace(&p, &i);
        let read_post = g
            .links
            .iter()
            .find(|l| matches!(l.order, Order::Program(e) if e.template == 0 && e.index == 3))
            .unwrap()
            .to;
        let read_n = g.events[read_post].n;
        for e in &mut g.events {
            if e.thread.is_initial() && e.n >= read_n {
                e.locals[0] = Value::from(47);
            }
        }
        let _ = read_post;
        let issues = check_consistency(&p, &g);
        assert!(issues.iter().any(|i| i.requirement == Requirement::ReadsOfGlobals), "{issues:?}");
    }

    #[test]
    fn two_locks_after_one_unlock() {
        let (p, _) = parse_program(
            "mutex m; thread main { create(w); create(w); } thread w { lock(m); }",
        )
        .unwrap();
        let en = enumerate_global_traces(&p, TraceBounds::default()).unwrap();
        let mut g = en.traces.iter().max_by_key(|t| t.events.len()).unwrap().clone();
        // both children lock m; make the second lock follow the least element too
        let locks: Vec<usize> = (0..g.links.len()).filter(|&i| matches!(g.links[i].order, Order::Lock(_))).collect();
        assert_eq!(locks.len(), 1, "{}", g.dump(&p, None));
        // the second child cannot lock at all; forge a second lock event
        let w2 = g.threads().into_iter().find(|t| !t.is_initial() && g.path(t).len() == 1).unwrap();
        let init = g.find(&w2, 0).unwrap();
        let ev = g.events[init].clone();
        let dst = p.templates[1].edges[0].dst;
        g.events.push(Event { n: 1, node: dst, ..ev });
        let post = g.events.len() - 1;
        let least = g.least().unwrap();
        g.links.push(Link { from: init, to: post, order: Order::Program(EdgeId { template: 1, index: 0 }) });
        g.links.push(Link { from: least, to: post, order: Order::Lock(0) });
        let issues = check_consistency(&p, &g);
        assert!(issues.iter().any(|i| i.requirement == Requirement::LockOrder), "{issues:?}");
    }

    #[test]
    fn single_event() {
        let p = program();
        let en = enumerate_global_traces(&p, TraceBounds { max_events: 1, max_traces: 10 }).unwrap();
        assert_eq!(en.traces.len(), 1);
        assert_eq!(en.traces[0].events.len(), 1);
        let i = global_trace_to_interleaving(&p, &en.traces[0]).unwrap();
        assert!(i.steps.is_empty());
    }

    #[test]
    fn enumeration_contains_figure_trace() {
        let p = program();
        let g = interleaving_to_global_trace(&p, &figure_interleaving(&p));
        let en = enumerate_global_traces(&p, TraceBounds::default()).unwrap();
        assert!(en.complete);
        assert!(en.traces.iter().any(|t| t.same_as(&g)));
        for t in &en.traces {
            assert_eq!(check_consistency(&p, t), vec![], "{}", t.dump(&p, None));
        }
    }

    #[test]
    fn create_completeness() {
        let p = program();
        let g = interleaving_to_global_trace(&p, &figure_interleaving(&p));
        // drop every t1 event, keep the create step
        let keep: Vec<usize> = (0..g.events.len()).filter(|&e| g.events[e].thread.is_initial()).collect();
        let mut pos = vec![usize::MAX; g.events.len()];
        for (k, &e) in keep.iter().enumerate() {
            pos[e] = k;
        }
        let h = GlobalTrace {
            events: keep.iter().map(|&e| g.events[e].clone()).collect(),
            links: g
                .links
                .iter()
                .filter(|l| pos[l.from] != usize::MAX && pos[l.to] != usize::MAX)
                .map(|l| Link { from: pos[l.from], to: pos[l.to], ..*l })
                .collect(),
        };
        assert!(!is_create_complete(&p, &h));
        assert_eq!(global_trace_to_interleaving(&p, &h), Err(TraceError::NotCreateComplete));
    }

    #[test]
    fn safety_agrees_with_interleavings() {
        let p = program();
        assert_eq!(trace_safety(&p, TraceBounds::default()).unwrap().kind(), "Safe");
        let unsafe_src = MG.replace("used = 0; unlock(m_used); unlock(m);", "unlock(m_used); unlock(m); lock(m_used); used = 0; unlock(m_used);");
        let (q, _) = parse_program(&unsafe_src).unwrap();
        assert_eq!(explore(&q, Bounds::default()).kind(), "Unsafe");
        match trace_safety(&q, TraceBounds::default()).unwrap() {
            TraceVerdict::Unsafe { assert, witness, .. } => {
                assert_eq!(assert, AssertId::new("a"));
                assert!(witness.ego_thread().is_initial());
                assert_eq!(witness.trace.maximal(), vec![witness.ego]);
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn not_in_lang_mg() {
        let (p, _) = parse_program("global g: int = 0; thread main { g = 1; }").unwrap();
        assert!(matches!(trace_safety(&p, TraceBounds::default()), Err(TraceError::NotInLangMG(_))));
    }

    #[test]
    fn bound_exceeded_on_loop() {
        let (p, _) = parse_program("local x: int; thread main { while (true) { x = x + 1; } }").unwrap();
        let v = trace_safety(&p, TraceBounds { max_events: 8, max_traces: 100 }).unwrap();
        assert_eq!(v.kind(), "BoundExceeded");
    }
}
