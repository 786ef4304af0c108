//! Ghost witnesses: declarations of ghost variables, ghost updates attached
//! to edges and invariants attached to nodes.
//!
//! `instrument` turns a witness into extra program code: every invariant
//! becomes an atomic check in front of its node, every updated edge becomes
//! an atomic block running the original action followed by the updates.

mod split;
mod validate;

use std::collections::{BTreeMap, BTreeSet};

use thiserror::Error;

use crate::expr::{Expr, FnEnv, Name, Type};
use crate::frontend::SourceMap;
use crate::interleave::{Interleaving, Machine, State, Step};
use crate::program::{validate_program, Action, AssertId, EdgeId, GlobalDecl, LocalDecl, NodeId, Program, ThreadTemplate};
use crate::value::Value;

pub use split::split;
pub use validate::{confirm, validate_interleaving, validate_local_trace, Counterexample, Validation, WitnessVerdict};

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct GhostGlobal {
    pub name: Name,
    pub ty: Type,
    /// Evaluated once over the initial program globals and earlier ghosts.
    pub init: Expr,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct GhostUpdate {
    pub target: Name,
    pub value: Expr,
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct GhostWitness {
    pub ghost_globals: Vec<GhostGlobal>,
    pub ghost_locals: Vec<LocalDecl>,
    pub updates: BTreeMap<EdgeId, Vec<GhostUpdate>>,
    pub invariants: BTreeMap<NodeId, Expr>,
}

impl GhostWitness {
    pub fn is_empty(&self) -> bool {
        self.ghost_globals.is_empty() && self.ghost_locals.is_empty() && self.updates.is_empty() && self.invariants.is_empty()
    }

    pub fn ghost_names(&self) -> BTreeSet<&str> {
        self.ghost_globals
            .iter()
            .map(|g| g.name.as_str())
            .chain(self.ghost_locals.iter().map(|l| l.name.as_str()))
            .collect()
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Error)]
pub enum WitnessError {
    #[error("unknown location {0}")]
    UnknownLocation(String),
    #[error("ghost update writes program variable {0}")]
    GhostWritesProgramVariable(Name),
    #[error("ghost update writes undeclared variable {0}")]
    UndeclaredGhost(Name),
    #[error("ghost variable {0} clashes with a program name")]
    NameClash(Name),
    #[error("initial value of ghost {name}: {message}")]
    Initial { name: Name, message: String },
    #[error("instrumented program is invalid: {}", .0.join("; "))]
    Invalid(Vec<String>),
}

/// Where an edge of an instrumented program comes from.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Origin {
    Original,
    /// Check of the invariant at the node.
    InvariantCheck(NodeId),
    /// Original action (`members` actions, atomic or not) followed by ghost
    /// updates.
    Fused { members: usize, atomic: bool },
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct InstrumentedProgram {
    pub program: Program,
    pub source_map: SourceMap,
    /// Edges keep the indices they had in the original program; invariant
    /// checks are appended.
    pub origins: BTreeMap<EdgeId, Origin>,
    pub witness_asserts: BTreeSet<AssertId>,
    /// Node split off to carry the outgoing edges of a checked node.
    pub split_nodes: BTreeMap<NodeId, NodeId>,
    pub original_globals: usize,
    pub original_locals: usize,
}

fn fresh_name(taken: &BTreeSet<String>, base: &str) -> String {
    if !taken.contains(base) {
        return base.to_string();
    }
    (1..).map(|k| format!("{base}_{k}")).find(|n| !taken.contains(n)).unwrap()
}

fn program_names(p: &Program) -> BTreeSet<String> {
    p.globals
        .iter()
        .map(|g| g.name.clone())
        .chain(p.locals.iter().map(|l| l.name.clone()))
        .chain(p.mutexes.iter().cloned())
        .chain(p.templates.iter().map(|t| t.name.clone()))
        .chain([crate::program::SELF.to_string()])
        .collect()
}

/// Rewrites reads of globals into reads of temporaries.
struct Lowering<'a> {
    globals: &'a BTreeMap<Name, Type>,
    temps: BTreeMap<Name, Name>,
    taken: BTreeSet<String>,
}

impl Lowering<'_> {
    fn temp(&mut self, g: &str) -> Name {
        if let Some(t) = self.temps.get(g) {
            return t.clone();
        }
        let t = fresh_name(&self.taken, &format!("__read_{g}"));
        self.taken.insert(t.clone());
        self.temps.insert(g.to_string(), t.clone());
        t
    }

    /// Reads of every global in `e`, and `e` over the temporaries.
    fn lower(&mut self, e: &Expr) -> (Vec<Action>, Expr) {
        let mut reads = Vec::new();
        let used: Vec<Name> = e.vars().into_iter().filter(|v| self.globals.contains_key(v)).collect();
        let mut map = BTreeMap::new();
        for g in used {
            let t = self.temp(&g);
            reads.push(Action::GlobalRead {
                local: t.clone(),
                global: g.clone(),
                value: Expr::Global,
            });
            map.insert(g, t);
        }
        let lowered = e.substitute(&|v: &Name| map.get(v).map(|t| Expr::Var(t.clone())));
        (reads, lowered)
    }
}

/// Builds the witness-instrumented program.
pub fn instrument(p: &Program, w: &GhostWitness) -> Result<InstrumentedProgram, WitnessError> {
    let mut names = program_names(p);
    for n in w.ghost_names() {
        if !names.insert(n.to_string()) {
            return Err(WitnessError::NameClash(n.to_string()));
        }
    }
    let ghost_globals: BTreeSet<&str> = w.ghost_globals.iter().map(|g| g.name.as_str()).collect();
    let ghost_locals: BTreeSet<&str> = w.ghost_locals.iter().map(|l| l.name.as_str()).collect();
    for (e, ups) in &w.updates {
        if !p.templates.get(e.template as usize).is_some_and(|t| (e.index as usize) < t.edges.len()) {
            return Err(WitnessError::UnknownLocation(format!("edge {}.{}", e.template, e.index)));
        }
        for u in ups {
            if ghost_globals.contains(u.target.as_str()) || ghost_locals.contains(u.target.as_str()) {
                continue;
            }
            if p.global(&u.target).is_some() || p.local(&u.target).is_some() {
                return Err(WitnessError::GhostWritesProgramVariable(u.target.clone()));
            }
            return Err(WitnessError::UndeclaredGhost(u.target.clone()));
        }
    }
    for n in w.invariants.keys() {
        if p.template_of(*n).is_none() {
            return Err(WitnessError::UnknownLocation(n.to_string()));
        }
    }

    let mut q = p.clone();
    // ghost globals, evaluated in order
    let mut values: BTreeMap<Name, Value> = p.globals.iter().map(|g| (g.name.clone(), g.init.clone())).collect();
    for g in &w.ghost_globals {
        let v = g
            .init
            .eval(&FnEnv {
                lookup: |n: &Name| values.get(n).cloned(),
                global: None,
                self_id: None,
            })
            .map_err(|e| WitnessError::Initial {
                name: g.name.clone(),
                message: e.to_string(),
            })?;
        let v = match g.ty {
            Type::Bool => Value::from_bool(v.truthy()),
            Type::Int => v,
        };
        values.insert(g.name.clone(), v.clone());
        q.globals.push(GlobalDecl {
            name: g.name.clone(),
            ty: g.ty,
            init: v,
        });
    }
    q.locals.extend(w.ghost_locals.iter().cloned());

    let global_types: BTreeMap<Name, Type> = q.globals.iter().map(|g| (g.name.clone(), g.ty)).collect();
    let mut low = Lowering {
        globals: &global_types,
        temps: BTreeMap::new(),
        taken: names.clone(),
    };
    let mut origins = BTreeMap::new();
    let mut witness_asserts = BTreeSet::new();
    let mut split_nodes = BTreeMap::new();
    let mut assert_ids: BTreeSet<String> = p.all_asserts().into_iter().map(|a| a.0).collect();
    let mut next_node = p.fresh_node().0;

    for (ti, t) in p.templates.iter().enumerate() {
        let qt: &mut ThreadTemplate = &mut q.templates[ti];
        for (ei, e) in t.edges.iter().enumerate() {
            let id = EdgeId {
                template: ti as u32,
                index: ei as u32,
            };
            match w.updates.get(&id) {
                Some(ups) if !ups.is_empty() => {
                    let mut members = e.action.members().to_vec();
                    let count = members.len();
                    for u in ups {
                        let (reads, value) = low.lower(&u.value);
                        members.extend(reads);
                        members.push(if global_types.contains_key(&u.target) {
                            Action::GlobalWrite {
                                global: u.target.clone(),
                                value,
                            }
                        } else {
                            Action::LocalUpdate {
                                local: u.target.clone(),
                                value,
                            }
                        });
                    }
                    qt.edges[ei].action = Action::Atomic(members);
                    origins.insert(
                        id,
                        Origin::Fused {
                            members: count,
                            atomic: matches!(e.action, Action::Atomic(_)),
                        },
                    );
                }
                _ => {
                    origins.insert(id, Origin::Original);
                }
            }
        }
        for (&u, inv) in w.invariants.iter() {
            if !t.nodes.contains(&u) {
                continue;
            }
            let u2 = NodeId(next_node);
            next_node += 1;
            qt.nodes.insert(u2);
            for e in qt.edges.iter_mut() {
                if e.src == u {
                    e.src = u2;
                }
            }
            let (mut members, cond) = low.lower(inv);
            let aid = fresh_name(&assert_ids, &format!("witness@{u}"));
            assert_ids.insert(aid.clone());
            witness_asserts.insert(AssertId(aid.clone()));
            members.push(Action::Assert {
                cond,
                id: AssertId(aid),
            });
            let idx = qt.add_edge(u, Action::Atomic(members), u2);
            origins.insert(
                EdgeId {
                    template: ti as u32,
                    index: idx as u32,
                },
                Origin::InvariantCheck(u),
            );
            split_nodes.insert(u, u2);
        }
    }
    for (g, t) in &low.temps {
        q.locals.push(LocalDecl {
            name: t.clone(),
            ty: global_types[g],
        });
    }
    let issues = validate_program(&q);
    if !issues.is_empty() {
        return Err(WitnessError::Invalid(issues.iter().map(|i| i.to_string()).collect()));
    }
    Ok(InstrumentedProgram {
        program: q,
        source_map: SourceMap::default(),
        origins,
        witness_asserts,
        split_nodes,
        original_globals: p.globals.len(),
        original_locals: p.locals.len(),
    })
}

impl InstrumentedProgram {
    /// Source map of the instrumented program derived from the original's:
    /// split-off nodes and invariant checks share their node's location.
    pub fn with_source_map(mut self, original: &SourceMap) -> Self {
        let mut sm = original.clone();
        for (u, u2) in &self.split_nodes {
            if let Some(l) = original.node(*u) {
                sm.nodes.insert(*u2, l);
            }
        }
        for (e, o) in &self.origins {
            if let Origin::InvariantCheck(u) = o {
                if let Some(l) = original.node(*u) {
                    sm.edges.insert(*e, l);
                }
            }
        }
        self.source_map = sm;
        self
    }

    pub fn is_witness_assert(&self, a: &AssertId) -> bool {
        self.witness_asserts.contains(a)
    }

    /// Node of the original program a node corresponds to.
    pub fn original_node(&self, n: NodeId) -> NodeId {
        self.split_nodes
            .iter()
            .find(|(_, u2)| **u2 == n)
            .map(|(u, _)| *u)
            .unwrap_or(n)
    }

    /// Drops ghost variables and locations from a state.
    pub fn project_state(&self, s: &State) -> State {
        let mut out = s.clone();
        out.globals.truncate(self.original_globals);
        for ts in out.threads.values_mut() {
            ts.locals.truncate(self.original_locals);
            ts.node = self.original_node(ts.node);
        }
        out
    }

    /// The steps of the original program: invariant checks removed, fused
    /// edges mapped back.
    pub fn project_steps(&self, steps: &[Step]) -> Vec<Step> {
        steps
            .iter()
            .filter(|s| !matches!(self.origins.get(&s.edge), Some(Origin::InvariantCheck(_))))
            .cloned()
            .collect()
    }
}

/// Removes everything the witness added.
pub fn erase(ip: &InstrumentedProgram) -> Program {
    let mut p = ip.program.clone();
    p.globals.truncate(ip.original_globals);
    p.locals.truncate(ip.original_locals);
    for (ti, t) in p.templates.iter_mut().enumerate() {
        let mut keep = Vec::new();
        for (ei, e) in t.edges.iter().enumerate() {
            let id = EdgeId {
                template: ti as u32,
                index: ei as u32,
            };
            match ip.origins.get(&id) {
                Some(Origin::InvariantCheck(_)) => {}
                Some(Origin::Fused { members, atomic }) => {
                    let ms = e.action.members()[..*members].to_vec();
                    let action = if *atomic { Action::Atomic(ms) } else { ms.into_iter().next().unwrap() };
                    keep.push(crate::program::Edge { action, ..e.clone() });
                }
                _ => keep.push(e.clone()),
            }
        }
        for e in &mut keep {
            e.src = ip.original_node(e.src);
            e.dst = ip.original_node(e.dst);
        }
        for u2 in ip.split_nodes.values() {
            t.nodes.remove(u2);
        }
        t.edges = keep;
    }
    p
}

/// Replays instrumented interleavings on the original program and checks
/// that projected states match. Returns the number of interleavings
/// checked, or a description of the first mismatch.
pub fn check_projection(p: &Program, ip: &InstrumentedProgram, runs: &[Interleaving]) -> Result<usize, String> {
    let m = Machine::new(p);
    for (k, i) in runs.iter().enumerate() {
        let steps = ip.project_steps(&i.steps);
        let (orig, _) = m.replay(&steps).map_err(|e| format!("run {k}: replay failed: {e}"))?;
        let mut j = 0;
        if ip.project_state(&i.states[0]) != orig.states[0] {
            return Err(format!("run {k}: initial states differ"));
        }
        for (n, st) in i.steps.iter().enumerate() {
            if !matches!(ip.origins.get(&st.edge), Some(Origin::InvariantCheck(_))) {
                j += 1;
            }
            if ip.project_state(&i.states[n + 1]) != orig.states[j] {
                return Err(format!("run {k}: states differ after step {n}"));
            }
        }
    }
    Ok(runs.len())
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;
    use crate::expr::BinOp;
    use crate::frontend::{parse_expr, parse_program};

    pub(crate) use crate::corpus::{running_witness, RUNNING_EXAMPLE};

    #[test]
    fn running_example_structure() {
        let (p, _) = parse_program(RUNNING_EXAMPLE).unwrap();
        let w = running_witness(&p);
        let ip = instrument(&p, &w).unwrap();
        let node = w.invariants.keys().next().unwrap();
        let text = format!(
            "global used: int = 0;
             global g: int = 0;
             mutex m;
             local tmp: int;
             local __read_g: int;
             local __read_used: int;
             thread main {{
               create(t1);
               atomic {{ __read_g = g; __read_used = used; assert(__read_g == 0 ==> __read_used == 0, \"witness@{node}\"); }}
               atomic {{ lock(m); g = 1; }}
               tmp = used;
               assert(tmp == 0, \"8:3\");
               atomic {{ unlock(m); g = 0; }}
             }}
             thread t1 {{
               atomic {{ lock(m); g = 1; }}
               used = 47;
               used = 0;
               atomic {{ unlock(m); g = 0; }}
             }}"
        );
        let (expected, _) = parse_program(&text).unwrap();
        assert!(ip.program.structurally_eq(&expected), "{}", crate::frontend::render_program(&ip.program));
        assert_eq!(ip.witness_asserts.len(), 1);
    }

    #[test]
    fn empty_witness_is_identity() {
        let (p, _) = parse_program(RUNNING_EXAMPLE).unwrap();
        let ip = instrument(&p, &GhostWitness::default()).unwrap();
        assert!(ip.program.structurally_eq(&p));
        assert!(erase(&ip).structurally_eq(&p));
    }

    #[test]
    fn erase_restores_program() {
        let (p, _) = parse_program(RUNNING_EXAMPLE).unwrap();
        let ip = instrument(&p, &running_witness(&p)).unwrap();
        assert_eq!(erase(&ip), p);
    }

    #[test]
    fn ghost_cannot_write_program_variable() {
        let (p, _) = parse_program(RUNNING_EXAMPLE).unwrap();
        let mut w = running_witness(&p);
        w.updates.values_mut().next().unwrap()[0].target = "used".into();
        assert_eq!(instrument(&p, &w), Err(WitnessError::GhostWritesProgramVariable("used".into())));
    }

    #[test]
    fn clashing_ghost_name() {
        let (p, _) = parse_program(RUNNING_EXAMPLE).unwrap();
        let mut w = running_witness(&p);
        w.ghost_globals[0].name = "tmp".into();
        assert_eq!(instrument(&p, &w), Err(WitnessError::NameClash("tmp".into())));
    }

    #[test]
    fn unknown_node() {
        let (p, _) = parse_program(RUNNING_EXAMPLE).unwrap();
        let mut w = GhostWitness::default();
        w.invariants.insert(NodeId(999), Expr::Bool(true));
        assert!(matches!(instrument(&p, &w), Err(WitnessError::UnknownLocation(_))));
    }

    #[test]
    fn ghost_initial_reads_program_globals() {
        let (p, _) = parse_program("global a: int = 4; thread main { }").unwrap();
        let w = GhostWitness {
            ghost_globals: vec![
                GhostGlobal { name: "b".into(), ty: Type::Int, init: Expr::bin(BinOp::Add, Expr::var("a"), Expr::int(1)) },
                GhostGlobal { name: "c".into(), ty: Type::Int, init: Expr::bin(BinOp::Mul, Expr::var("b"), Expr::int(2)) },
            ],
            ..Default::default()
        };
        let ip = instrument(&p, &w).unwrap();
        assert_eq!(ip.program.globals[2].init, Value::from(10));
    }

    #[test]
    fn terminal_invariant_gets_sink() {
        let (p, _) = parse_program("local x: int; thread main { x = 1; }").unwrap();
        let end = p.main().unwrap().edges[0].dst;
        let mut w = GhostWitness::default();
        w.invariants.insert(end, parse_expr("x == 1").unwrap());
        let ip = instrument(&p, &w).unwrap();
        assert_eq!(ip.program.main().unwrap().edges.len(), 2);
        assert!(crate::interleave::explore(&ip.program, Default::default()).is_safe());
    }

    #[test]
    fn projection_matches() {
        let (p, _) = parse_program(RUNNING_EXAMPLE).unwrap();
        let ip = instrument(&p, &running_witness(&p)).unwrap();
        let runs = Machine::new(&ip.program).enumerate_interleavings(30, 10_000);
        assert!(runs.len() > 10);
        assert_eq!(check_projection(&p, &ip, &runs), Ok(runs.len()));
    }
}
