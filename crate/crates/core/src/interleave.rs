//! Interleaving semantics and exhaustive breadth-first exploration.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::sync::Arc;

use indexmap::IndexSet;
use rayon::prelude::*;

use crate::expr::{Env, EvalError, Expr, Name};
use crate::frontend::SourceMap;
use crate::program::{Action, AssertId, EdgeId, NodeId, Program, ThreadId};
use crate::value::Value;

/// A variable compiled to its slot; displays as its name.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Slot {
    pub index: usize,
    pub name: Arc<str>,
}

impl fmt::Display for Slot {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.name)
    }
}

pub type CExpr = Expr<Slot>;

#[derive(Clone, Debug)]
pub enum CAction {
    Lock(usize),
    Unlock(usize),
    Create(usize),
    LocalUpdate { local: usize, value: CExpr },
    GlobalRead { local: usize, global: usize, value: CExpr },
    GlobalWrite { global: usize, value: CExpr },
    Assert { cond: CExpr, id: AssertId },
    Pos(CExpr),
    Neg(CExpr),
    Atomic(Vec<CAction>),
}

#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ThreadState {
    pub template: usize,
    pub node: NodeId,
    pub locals: Vec<Value>,
    /// Threads created so far by this thread.
    pub creates: u32,
}

/// A program configuration `(L, M, G)`.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct State {
    pub threads: BTreeMap<ThreadId, ThreadState>,
    /// Holder of each mutex, indexed like `Program::mutexes`.
    pub mutexes: Vec<Option<ThreadId>>,
    /// Indexed like `Program::globals`.
    pub globals: Vec<Value>,
}

#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Step {
    pub thread: ThreadId,
    pub edge: EdgeId,
}

/// States `s0 .. sk` and the steps between them.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Interleaving {
    pub states: Vec<State>,
    pub steps: Vec<Step>,
}

impl Interleaving {
    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }

    pub fn last(&self) -> &State {
        self.states.last().expect("nonempty")
    }
}

#[derive(Clone, Debug, PartialEq, Eq, thiserror::Error)]
pub enum StepError {
    #[error("thread {0} does not exist")]
    NoThread(ThreadId),
    #[error("edge is not at thread {0}'s current node")]
    WrongNode(ThreadId),
    #[error("step is not admissible")]
    NotAdmissible,
    #[error(transparent)]
    Eval(#[from] EvalError),
}

struct LocalEnv<'a> {
    locals: &'a [Value],
    global: Option<Value>,
    tid: &'a ThreadId,
}

impl Env<Slot> for LocalEnv<'_> {
    fn lookup(&self, var: &Slot) -> Option<Value> {
        self.locals.get(var.index).cloned()
    }

    fn placeholder(&self) -> Option<Value> {
        self.global.clone()
    }

    fn self_id(&self) -> Option<&ThreadId> {
        Some(self.tid)
    }
}

/// A program compiled for execution.
pub struct Machine<'p> {
    pub program: &'p Program,
    actions: Vec<Vec<CAction>>,
    out: Vec<BTreeMap<NodeId, Vec<u32>>>,
}

impl<'p> Machine<'p> {
    pub fn new(program: &'p Program) -> Self {
        let names: Vec<Arc<str>> = program.locals.iter().map(|l| Arc::from(l.name.as_str())).collect();
        let compile_expr = |e: &Expr| -> CExpr {
            e.map_vars(&mut |v: &Name| {
                let index = program
                    .local_index(v)
                    .unwrap_or_else(|| panic!("undeclared local {v}"));
                Slot {
                    index,
                    name: names[index].clone(),
                }
            })
        };
        let actions = program
            .templates
            .iter()
            .map(|t| {
                t.edges
                    .iter()
                    .map(|e| compile(program, &e.action, &compile_expr))
                    .collect()
            })
            .collect();
        let out = program
            .templates
            .iter()
            .map(|t| {
                let mut m: BTreeMap<NodeId, Vec<u32>> = BTreeMap::new();
                for (i, e) in t.edges.iter().enumerate() {
                    m.entry(e.src).or_default().push(i as u32);
                }
                m
            })
            .collect();
        Machine {
            program,
            actions,
            out,
        }
    }

    pub fn initial_state(&self) -> State {
        let p = self.program;
        let main = p.template_index(crate::program::MAIN).expect("program has main");
        let mut threads = BTreeMap::new();
        threads.insert(
            ThreadId::initial(),
            ThreadState {
                template: main,
                node: p.templates[main].initial,
                locals: p.locals.iter().map(|_| Value::ZERO).collect(),
                creates: 0,
            },
        );
        State {
            threads,
            mutexes: vec![None; p.mutexes.len()],
            globals: p.globals.iter().map(|g| g.init.clone()).collect(),
        }
    }

    fn action(&self, e: EdgeId) -> &CAction {
        &self.actions[e.template as usize][e.index as usize]
    }

    /// Edges leaving the thread's current node, in template order.
    pub fn enabled_edges(&self, s: &State, t: &ThreadId) -> Vec<EdgeId> {
        let Some(ts) = s.threads.get(t) else {
            return Vec::new();
        };
        self.out[ts.template]
            .get(&ts.node)
            .map(|v| {
                v.iter()
                    .map(|&i| EdgeId {
                        template: ts.template as u32,
                        index: i,
                    })
                    .collect()
            })
            .unwrap_or_default()
    }

    pub fn admissible(&self, s: &State, t: &ThreadId, e: EdgeId) -> Result<bool, EvalError> {
        let ts = &s.threads[t];
        admissible(self.action(e), s, t, &ts.locals)
    }

    /// Applies an admissible step; returns the next state and the ids of
    /// the asserts it violated.
    pub fn apply_step(
        &self,
        s: &State,
        t: &ThreadId,
        e: EdgeId,
    ) -> Result<(State, Vec<AssertId>), StepError> {
        let ts = s.threads.get(t).ok_or_else(|| StepError::NoThread(t.clone()))?;
        let edge = self.program.edge(e);
        if ts.template != e.template as usize || ts.node != edge.src {
            return Err(StepError::WrongNode(t.clone()));
        }
        if !self.admissible(s, t, e)? {
            return Err(StepError::NotAdmissible);
        }
        let mut next = s.clone();
        let mut violations = Vec::new();
        for a in members(self.action(e)) {
            self.effect(&mut next, t, a, &mut violations)?;
        }
        next.threads.get_mut(t).unwrap().node = edge.dst;
        Ok((next, violations))
    }

    fn effect(
        &self,
        s: &mut State,
        t: &ThreadId,
        a: &CAction,
        violations: &mut Vec<AssertId>,
    ) -> Result<(), EvalError> {
        let env = |s: &State, global: Option<Value>| -> (Vec<Value>, Option<Value>) {
            (s.threads[t].locals.clone(), global)
        };
        match a {
            CAction::Lock(m) => s.mutexes[*m] = Some(t.clone()),
            CAction::Unlock(m) => s.mutexes[*m] = None,
            CAction::Create(ti) => {
                let parent = s.threads.get_mut(t).unwrap();
                let child = t.child(parent.creates);
                parent.creates += 1;
                let locals = parent.locals.clone();
                s.threads.insert(
                    child,
                    ThreadState {
                        template: *ti,
                        node: self.program.templates[*ti].initial,
                        locals,
                        creates: 0,
                    },
                );
            }
            CAction::LocalUpdate { local, value } => {
                let v = eval(value, &s.threads[t].locals, None, t)?;
                s.threads.get_mut(t).unwrap().locals[*local] = v;
            }
            CAction::GlobalRead {
                local,
                global,
                value,
            } => {
                let (locals, g) = env(s, Some(s.globals[*global].clone()));
                let v = eval(value, &locals, g, t)?;
                s.threads.get_mut(t).unwrap().locals[*local] = v;
            }
            CAction::GlobalWrite { global, value } => {
                let v = eval(value, &s.threads[t].locals, None, t)?;
                s.globals[*global] = v;
            }
            CAction::Assert { cond, id } => {
                if !eval(cond, &s.threads[t].locals, None, t)?.truthy() {
                    violations.push(id.clone());
                }
            }
            CAction::Pos(_) | CAction::Neg(_) => {}
            CAction::Atomic(_) => unreachable!("atomic blocks are flattened"),
        }
        Ok(())
    }

    /// Every admissible step from `s`, ordered by thread id and then by
    /// edge order.
    pub fn successors(&self, s: &State) -> Vec<Successor> {
        let mut out = Vec::new();
        for t in s.threads.keys() {
            for e in self.enabled_edges(s, t) {
                let step = Step {
                    thread: t.clone(),
                    edge: e,
                };
                match self.admissible(s, t, e) {
                    Ok(false) => {}
                    Ok(true) => match self.apply_step(s, t, e) {
                        Ok((next, violations)) => out.push(Successor::Ok {
                            step,
                            state: next,
                            violations,
                        }),
                        Err(StepError::Eval(err)) => out.push(Successor::Error { step, error: err }),
                        Err(other) => unreachable!("{other}"),
                    },
                    Err(err) => out.push(Successor::Error { step, error: err }),
                }
            }
        }
        out
    }

    /// Whether the thread sits at a node without outgoing edges.
    pub fn is_terminated(&self, s: &State, t: &ThreadId) -> bool {
        self.enabled_edges(s, t).is_empty()
    }

    /// Replays steps from the initial state.
    pub fn replay(&self, steps: &[Step]) -> Result<(Interleaving, Vec<Vec<AssertId>>), StepError> {
        let mut states = vec![self.initial_state()];
        let mut violations = Vec::new();
        for st in steps {
            let (next, v) = self.apply_step(states.last().unwrap(), &st.thread, st.edge)?;
            states.push(next);
            violations.push(v);
        }
        Ok((
            Interleaving {
                states,
                steps: steps.to_vec(),
            },
            violations,
        ))
    }

    /// Whether consecutive states are related by their steps.
    pub fn is_consistent(&self, i: &Interleaving) -> bool {
        if i.states.len() != i.steps.len() + 1 || i.states[0] != self.initial_state() {
            return false;
        }
        i.steps.iter().enumerate().all(|(k, st)| {
            self.apply_step(&i.states[k], &st.thread, st.edge)
                .is_ok_and(|(next, _)| next == i.states[k + 1])
        })
    }

    /// All interleavings (maximal or not) with at most `max_steps` steps,
    /// in depth-first order; stops after `limit` of them.
    pub fn enumerate_interleavings(&self, max_steps: usize, limit: usize) -> Vec<Interleaving> {
        let mut out = Vec::new();
        let mut states = vec![self.initial_state()];
        let mut steps = Vec::new();
        self.dfs(&mut states, &mut steps, max_steps, limit, &mut out);
        out
    }

    /// Every reachable state, or `None` past `limit` states.
    pub fn reachable_states(&self, limit: usize) -> Option<Vec<State>> {
        let mut seen: IndexSet<State> = IndexSet::new();
        seen.insert(self.initial_state());
        let mut i = 0;
        while i < seen.len() {
            let s = seen[i].clone();
            for succ in self.successors(&s) {
                if let Successor::Ok { state, .. } = succ {
                    seen.insert(state);
                    if seen.len() > limit {
                        return None;
                    }
                }
            }
            i += 1;
        }
        Some(seen.into_iter().collect())
    }

    fn dfs(
        &self,
        states: &mut Vec<State>,
        steps: &mut Vec<Step>,
        max_steps: usize,
        limit: usize,
        out: &mut Vec<Interleaving>,
    ) {
        if out.len() >= limit {
            return;
        }
        out.push(Interleaving {
            states: states.clone(),
            steps: steps.clone(),
        });
        if steps.len() >= max_steps {
            return;
        }
        for succ in self.successors(states.last().unwrap()) {
            if let Successor::Ok { step, state, .. } = succ {
                states.push(state);
                steps.push(step);
                self.dfs(states, steps, max_steps, limit, out);
                states.pop();
                steps.pop();
            }
        }
    }
}

#[derive(Clone, Debug)]
pub enum Successor {
    Ok {
        step: Step,
        state: State,
        violations: Vec<AssertId>,
    },
    Error {
        step: Step,
        error: EvalError,
    },
}

fn compile(p: &Program, a: &Action, ce: &impl Fn(&Expr) -> CExpr) -> CAction {
    let g = |n: &str| p.global_index(n).unwrap_or_else(|| panic!("undeclared global {n}"));
    let l = |n: &str| p.local_index(n).unwrap_or_else(|| panic!("undeclared local {n}"));
    match a {
        Action::Lock(m) => CAction::Lock(p.mutex_index(m).expect("declared mutex")),
        Action::Unlock(m) => CAction::Unlock(p.mutex_index(m).expect("declared mutex")),
        Action::Create(t) => CAction::Create(p.template_index(t).expect("known template")),
        Action::LocalUpdate { local, value } => CAction::LocalUpdate {
            local: l(local),
            value: ce(value),
        },
        Action::GlobalRead {
            local,
            global,
            value,
        } => CAction::GlobalRead {
            local: l(local),
            global: g(global),
            value: ce(value),
        },
        Action::GlobalWrite { global, value } => CAction::GlobalWrite {
            global: g(global),
            value: ce(value),
        },
        Action::Assert { cond, id } => CAction::Assert {
            cond: ce(cond),
            id: id.clone(),
        },
        Action::Pos(c) => CAction::Pos(ce(c)),
        Action::Neg(c) => CAction::Neg(ce(c)),
        Action::Atomic(ms) => CAction::Atomic(ms.iter().map(|m| compile(p, m, ce)).collect()),
    }
}

fn members(a: &CAction) -> &[CAction] {
    match a {
        CAction::Atomic(ms) => ms,
        other => std::slice::from_ref(other),
    }
}

fn eval(e: &CExpr, locals: &[Value], global: Option<Value>, tid: &ThreadId) -> Result<Value, EvalError> {
    e.eval(&LocalEnv {
        locals,
        global,
        tid,
    })
}

fn admissible(a: &CAction, s: &State, t: &ThreadId, locals: &[Value]) -> Result<bool, EvalError> {
    Ok(match a {
        CAction::Lock(m) => s.mutexes[*m].is_none(),
        CAction::Unlock(m) => s.mutexes[*m].as_ref() == Some(t),
        CAction::Pos(c) => eval(c, locals, None, t)?.truthy(),
        CAction::Neg(c) => !eval(c, locals, None, t)?.truthy(),
        CAction::Atomic(ms) => match ms.first() {
            Some(first) => admissible(first, s, t, locals)?,
            None => true,
        },
        _ => true,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Bounds {
    /// Maximal interleaving length.
    pub max_steps: usize,
    pub max_states: usize,
}

impl Default for Bounds {
    fn default() -> Self {
        Bounds {
            max_steps: 10_000,
            max_states: 1_000_000,
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Stats {
    pub states: usize,
    pub transitions: usize,
    pub depth: usize,
    /// Reachable states without successors in which some thread has not
    /// terminated.
    pub deadlocks: usize,
    /// Unexplored states when a bound was hit.
    pub frontier: usize,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Violation {
    pub assert: AssertId,
    pub interleaving: Interleaving,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Verdict {
    Safe(Stats),
    Unsafe {
        /// Every assert seen violated.
        asserts: BTreeSet<AssertId>,
        /// A shortest violating interleaving.
        first: Violation,
        stats: Stats,
    },
    EvalError {
        error: EvalError,
        interleaving: Interleaving,
        stats: Stats,
    },
    BoundExceeded(Stats),
}

impl Verdict {
    pub fn kind(&self) -> &'static str {
        match self {
            Verdict::Safe(_) => "Safe",
            Verdict::Unsafe { .. } => "Unsafe",
            Verdict::EvalError { .. } => "EvalError",
            Verdict::BoundExceeded(_) => "BoundExceeded",
        }
    }

    pub fn is_safe(&self) -> bool {
        matches!(self, Verdict::Safe(_))
    }

    pub fn violated(&self) -> BTreeSet<AssertId> {
        match self {
            Verdict::Unsafe { asserts, .. } => asserts.clone(),
            _ => BTreeSet::new(),
        }
    }

    pub fn stats(&self) -> &Stats {
        match self {
            Verdict::Safe(s) | Verdict::BoundExceeded(s) => s,
            Verdict::Unsafe { stats, .. } | Verdict::EvalError { stats, .. } => stats,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ExploreOptions {
    pub bounds: Bounds,
    /// Keep exploring after the first violation and report every violated
    /// assert.
    pub all_violations: bool,
    /// Worker threads for successor computation; 1 runs inline.
    pub jobs: usize,
}

impl Default for ExploreOptions {
    fn default() -> Self {
        ExploreOptions {
            bounds: Bounds::default(),
            all_violations: false,
            jobs: 1,
        }
    }
}

/// Decides safety by exhaustive breadth-first exploration.
pub fn explore(p: &Program, bounds: Bounds) -> Verdict {
    explore_with(
        p,
        ExploreOptions {
            bounds,
            ..ExploreOptions::default()
        },
    )
}

pub fn explore_with(p: &Program, opts: ExploreOptions) -> Verdict {
    if opts.jobs > 1 {
        if let Ok(pool) = rayon::ThreadPoolBuilder::new().num_threads(opts.jobs).build() {
            return pool.install(|| Explorer::new(p, opts).run());
        }
    }
    Explorer::new(p, opts).run()
}

struct Explorer<'p> {
    m: Machine<'p>,
    opts: ExploreOptions,
    visited: IndexSet<State>,
    /// Parent index and step for every visited state but the first.
    parent: Vec<Option<(usize, Step)>>,
}

impl<'p> Explorer<'p> {
    fn new(p: &'p Program, opts: ExploreOptions) -> Self {
        Explorer {
            m: Machine::new(p),
            opts,
            visited: IndexSet::new(),
            parent: Vec::new(),
        }
    }

    fn path_to(&self, mut idx: usize) -> Interleaving {
        let mut states = vec![self.visited[idx].clone()];
        let mut steps = Vec::new();
        while let Some((prev, step)) = &self.parent[idx] {
            steps.push(step.clone());
            states.push(self.visited[*prev].clone());
            idx = *prev;
        }
        states.reverse();
        steps.reverse();
        Interleaving { states, steps }
    }

    fn extend(&self, idx: usize, step: Step, state: State) -> Interleaving {
        let mut i = self.path_to(idx);
        i.steps.push(step);
        i.states.push(state);
        i
    }

    fn run(mut self) -> Verdict {
        let init = self.m.initial_state();
        self.visited.insert(init);
        self.parent.push(None);
        let mut stats = Stats {
            states: 1,
            ..Stats::default()
        };
        let mut layer: Vec<usize> = vec![0];
        let mut asserts = BTreeSet::new();
        let mut first: Option<Violation> = None;
        let mut eval_error: Option<(EvalError, Interleaving)> = None;
        let mut bound_hit = false;
        let mut depth = 0;
        while !layer.is_empty() {
            if depth >= self.opts.bounds.max_steps {
                let has_succ = layer.iter().any(|&i| !self.m.successors(&self.visited[i]).is_empty());
                if has_succ {
                    bound_hit = true;
                    stats.frontier = layer.len();
                }
                break;
            }
            let expanded: Vec<Vec<Successor>> = {
                let m = &self.m;
                let visited = &self.visited;
                if self.opts.jobs > 1 {
                    layer.par_iter().map(|&i| m.successors(&visited[i])).collect()
                } else {
                    layer.iter().map(|&i| m.successors(&visited[i])).collect()
                }
            };
            let mut next = Vec::new();
            for (&src, succs) in layer.iter().zip(expanded) {
                if succs.is_empty() {
                    let s = &self.visited[src];
                    if s.threads.keys().any(|t| !self.m.is_terminated(s, t)) {
                        stats.deadlocks += 1;
                    }
                }
                for succ in succs {
                    stats.transitions += 1;
                    match succ {
                        Successor::Error { step, error } => {
                            if eval_error.is_none() {
                                let st = self.visited[src].clone();
                                eval_error = Some((error, self.extend(src, step, st)));
                            }
                        }
                        Successor::Ok {
                            step,
                            state,
                            violations,
                        } => {
                            if !violations.is_empty() {
                                if first.is_none() {
                                    first = Some(Violation {
                                        assert: violations[0].clone(),
                                        interleaving: self.extend(src, step.clone(), state.clone()),
                                    });
                                }
                                asserts.extend(violations);
                            }
                            if self.visited.contains(&state) {
                                continue;
                            }
                            if self.visited.len() >= self.opts.bounds.max_states {
                                bound_hit = true;
                                continue;
                            }
                            let (idx, _) = self.visited.insert_full(state);
                            self.parent.push(Some((src, step)));
                            next.push(idx);
                        }
                    }
                }
            }
            depth += 1;
            stats.depth = depth;
            stats.states = self.visited.len();
            if first.is_some() && !self.opts.all_violations {
                break;
            }
            if bound_hit {
                stats.frontier = next.len();
                break;
            }
            layer = next;
        }
        stats.states = self.visited.len();
        if let Some(first) = first {
            return Verdict::Unsafe {
                asserts,
                first,
                stats,
            };
        }
        if let Some((error, interleaving)) = eval_error {
            return Verdict::EvalError {
                error,
                interleaving,
                stats,
            };
        }
        if bound_hit {
            return Verdict::BoundExceeded(stats);
        }
        Verdict::Safe(stats)
    }
}

/// One line per step: `<thread> <line>:<col> <action>`.
pub fn format_interleaving(p: &Program, sm: Option<&SourceMap>, i: &Interleaving) -> String {
    let mut out = String::new();
    for st in &i.steps {
        let loc = sm
            .and_then(|sm| sm.edge(st.edge))
            .map(|l| l.to_string())
            .unwrap_or_else(|| "-".into());
        out.push_str(&format!("{} {} {}\n", st.thread, loc, p.edge(st.edge).action.render()));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::frontend::parse_program;

    const SAFE: &str = "global used: int = 0; mutex m; local tmp: int;
        thread main { create(t1); lock(m); tmp = used; assert(tmp == 0, \"a\"); unlock(m); }
        thread t1 { lock(m); used = 47; used = 0; unlock(m); }";
    const UNSAFE: &str = "global used: int = 0; mutex m; local tmp: int;
        thread main { create(t1); lock(m); tmp = used; assert(tmp == 0, \"a\"); unlock(m); }
        thread t1 { lock(m); used = 47; unlock(m); used = 0; }";

    #[test]
    fn initial_state_of_running_example() {
        let (p, _) = parse_program(SAFE).unwrap();
        let m = Machine::new(&p);
        let s = m.initial_state();
        assert_eq!(s.globals, vec![Value::ZERO]);
        assert_eq!(s.mutexes, vec![None]);
        assert_eq!(s.threads.len(), 1);
        let succ = m.successors(&s);
        assert_eq!(succ.len(), 1);
    }

    #[test]
    fn safe_and_unsafe() {
        let (p, _) = parse_program(SAFE).unwrap();
        assert!(explore(&p, Bounds::default()).is_safe());
        let (q, sm) = parse_program(UNSAFE).unwrap();
        match explore(&q, Bounds::default()) {
            Verdict::Unsafe { first, .. } => {
                assert_eq!(first.assert, AssertId::new("a"));
                let text = format_interleaving(&q, Some(&sm), &first.interleaving);
                assert!(text.lines().any(|l| l.starts_with("t.0 ") && l.ends_with("used = 47;")), "{text}");
                let m = Machine::new(&q);
                let (_, v) = m.replay(&first.interleaving.steps).unwrap();
                assert_eq!(v.last().unwrap(), &vec![AssertId::new("a")]);
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn unbounded_counter() {
        let (p, _) = parse_program("local x: int; thread main { while (true) { x = x + 1; } }").unwrap();
        let v = explore(
            &p,
            Bounds {
                max_steps: 10,
                max_states: 1000,
            },
        );
        assert_eq!(v.kind(), "BoundExceeded");
    }

    #[test]
    fn division_by_zero_is_an_eval_error() {
        let (p, _) = parse_program("local x: int; local y: int; thread main { x = 1 / y; }").unwrap();
        match explore(&p, Bounds::default()) {
            Verdict::EvalError { error, .. } => assert_eq!(error.to_string(), "division by zero in `1 / y`"),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn atomic_assert_sees_intermediate_state() {
        let (p, _) = parse_program(
            "global used: int = 47; local tmp: int;
             thread main { atomic { tmp = used; assert(tmp == 0, \"x\"); } }",
        )
        .unwrap();
        let m = Machine::new(&p);
        let s = m.initial_state();
        let (_, v) = m.apply_step(&s, &ThreadId::initial(), EdgeId { template: 0, index: 0 }).unwrap();
        assert_eq!(v, vec![AssertId::new("x")]);
    }

    #[test]
    fn unlock_requires_holder() {
        let (p, _) = parse_program("mutex m; thread main { unlock(m); }").unwrap();
        let m = Machine::new(&p);
        let s = m.initial_state();
        assert!(!m.admissible(&s, &ThreadId::initial(), EdgeId { template: 0, index: 0 }).unwrap());
        assert!(explore(&p, Bounds::default()).stats().deadlocks == 1);
    }

    #[test]
    fn children_inherit_locals() {
        let (p, _) = parse_program(
            "local x: int; thread main { x = 5; create(w); create(w); } thread w { x = x + 1; }",
        )
        .unwrap();
        let m = Machine::new(&p);
        let mut s = m.initial_state();
        for _ in 0..3 {
            let succ = m.successors(&s);
            let Successor::Ok { state, .. } = &succ[0] else { panic!() };
            s = state.clone();
        }
        let ids: Vec<_> = s.threads.keys().cloned().collect();
        assert_eq!(ids, vec![ThreadId(vec![]), ThreadId(vec![0]), ThreadId(vec![1])]);
        assert_eq!(s.threads[&ThreadId(vec![1])].locals, vec![Value::from(5)]);
    }

    #[test]
    fn parallel_matches_sequential() {
        let (q, _) = parse_program(UNSAFE).unwrap();
        let a = explore_with(&q, ExploreOptions::default());
        let b = explore_with(
            &q,
            ExploreOptions {
                jobs: 4,
                ..ExploreOptions::default()
            },
        );
        assert_eq!(a, b);
    }
}
