use std::collections::{BTreeMap, BTreeSet};

use crate::expr::{BinOp, Expr, Type};
use crate::program::{Action, NodeId, Program};
use crate::witness::{GhostGlobal, GhostUpdate, GhostWitness};

use super::interval::{Bound, Interval};
use super::protection::{run, Mode, ProtectionResult};

/// Constraint `g ∈ iv`; `None` when it says nothing.
pub fn bound_expr(p: &Program, g: &str, iv: &Interval) -> Option<Expr> {
    let ty = p.global(g).map(|d| d.ty).unwrap_or(Type::Int);
    let var = || Expr::var(g);
    if ty == Type::Bool {
        return match iv.as_singleton() {
            Some(v) if v.is_zero() => Some(Expr::not(var())),
            Some(_) => Some(var()),
            None => None,
        };
    }
    if let Some(v) = iv.as_singleton() {
        return Some(Expr::eq(var(), Expr::Int(v.clone())));
    }
    let (lo, hi) = iv.bounds()?;
    let mut parts = Vec::new();
    if let Bound::Fin(l) = lo {
        parts.push(Expr::bin(BinOp::Le, Expr::Int(l.clone()), var()));
    }
    if let Bound::Fin(h) = hi {
        parts.push(Expr::bin(BinOp::Le, var(), Expr::Int(h.clone())));
    }
    (!parts.is_empty()).then(|| Expr::conjoin(parts))
}

fn body<'a>(
    p: &Program,
    bounds: impl IntoIterator<Item = (&'a String, &'a Interval)>,
    equalities: impl IntoIterator<Item = &'a (String, String)>,
) -> Option<Expr> {
    let mut parts: Vec<Expr> = bounds.into_iter().filter_map(|(g, iv)| bound_expr(p, g, iv)).collect();
    for (a, b) in equalities {
        let (ta, tb) = (p.global(a).map(|d| d.ty), p.global(b).map(|d| d.ty));
        if ta == tb {
            parts.push(Expr::eq(Expr::var(a.as_str()), Expr::var(b.as_str())));
        }
    }
    (!parts.is_empty()).then(|| Expr::conjoin(parts))
}

/// Mutexes some edge locks or unlocks, in declaration order.
fn used_mutexes(p: &Program) -> Vec<String> {
    let mut used = BTreeSet::new();
    for t in &p.templates {
        for e in &t.edges {
            for a in e.action.members() {
                if let Action::Lock(m) | Action::Unlock(m) = a {
                    used.insert(m.clone());
                }
            }
        }
    }
    p.mutexes.iter().filter(|m| used.contains(*m)).cloned().collect()
}

fn ghost_name(taken: &mut BTreeSet<String>, base: &str) -> String {
    let name = if taken.contains(base) {
        (1..).map(|k| format!("{base}_{k}")).find(|n| !taken.contains(n)).unwrap()
    } else {
        base.to_string()
    };
    taken.insert(name.clone());
    name
}

/// Builds a witness from an analysis result.
///
/// With ghosts, invariants sit at the node after every thread creation and
/// are guarded by `multithreaded` and the `<m>_locked` flags. Without, they
/// sit right after every lock and only mention globals the thread protects.
pub fn generate_witness(p: &Program, r: &ProtectionResult, ghosts: bool) -> GhostWitness {
    let mut w = GhostWitness::default();
    if !ghosts {
        for id in p.edge_ids() {
            let e = p.edge(id);
            if !e.action.members().iter().any(|a| matches!(a, Action::Lock(_))) {
                continue;
            }
            let Some(facts) = r.node_facts.get(&e.dst) else { continue };
            let eqs: Vec<&(String, String)> = match r.mode {
                Mode::MutexMeet => facts.equalities.iter().collect(),
                Mode::Protection => Vec::new(),
            };
            if let Some(inv) = body(p, &facts.globals, eqs) {
                w.invariants.insert(e.dst, inv);
            }
        }
        return w;
    }

    let mut taken: BTreeSet<String> = p
        .globals
        .iter()
        .map(|g| g.name.clone())
        .chain(p.locals.iter().map(|l| l.name.clone()))
        .chain(p.mutexes.iter().cloned())
        .chain(p.templates.iter().map(|t| t.name.clone()))
        .chain(["self".to_string()])
        .collect();
    let used = used_mutexes(p);
    let flags: BTreeMap<String, String> = used
        .iter()
        .map(|m| (m.clone(), ghost_name(&mut taken, &format!("{m}_locked"))))
        .collect();
    let mt = ghost_name(&mut taken, "multithreaded");
    for m in &used {
        w.ghost_globals.push(GhostGlobal {
            name: flags[m].clone(),
            ty: Type::Bool,
            init: Expr::Bool(false),
        });
    }
    w.ghost_globals.push(GhostGlobal {
        name: mt.clone(),
        ty: Type::Bool,
        init: Expr::Bool(false),
    });

    let mut sinks: BTreeSet<NodeId> = BTreeSet::new();
    for id in p.edge_ids() {
        let e = p.edge(id);
        let ups: Vec<GhostUpdate> = e
            .action
            .members()
            .iter()
            .filter_map(|a| {
                let (target, v) = match a {
                    Action::Lock(m) => (flags[m].clone(), true),
                    Action::Unlock(m) => (flags[m].clone(), false),
                    Action::Create(_) => {
                        sinks.insert(e.dst);
                        (mt.clone(), true)
                    }
                    _ => return None,
                };
                Some(GhostUpdate {
                    target,
                    value: Expr::Bool(v),
                })
            })
            .collect();
        if !ups.is_empty() {
            w.updates.insert(id, ups);
        }
    }

    let not_locked = |ms: &BTreeSet<String>| -> Vec<Expr> {
        used.iter().filter(|m| ms.contains(*m)).map(|m| Expr::not(Expr::var(flags[m].as_str()))).collect()
    };
    let mut clauses = Vec::new();
    match r.mode {
        Mode::MutexMeet => {
            for m in &p.mutexes {
                let Some(inv) = r.mutex_invariants.get(m) else { continue };
                let Some(b) = body(p, &inv.bounds, &inv.equalities) else { continue };
                let guard = Expr::conjoin(std::iter::once(Expr::var(mt.as_str())).chain(not_locked(&BTreeSet::from([m.clone()]))));
                clauses.push(Expr::implies(guard, b));
            }
        }
        Mode::Protection => {
            for g in &p.globals {
                let ms = &r.protecting[&g.name];
                if ms.is_empty() {
                    continue;
                }
                let Some(b) = bound_expr(p, &g.name, &r.protected[&g.name]) else { continue };
                let guard = Expr::conjoin(std::iter::once(Expr::var(mt.as_str())).chain(not_locked(ms)));
                clauses.push(Expr::implies(guard, b));
            }
        }
    }
    if !clauses.is_empty() {
        let inv = Expr::conjoin(clauses);
        for n in sinks {
            w.invariants.insert(n, inv.clone());
        }
    }
    w
}

/// Runs the analysis of `mode` and builds its witness.
pub fn analyze_and_generate(p: &Program, mode: Mode, ghosts: bool) -> (ProtectionResult, GhostWitness) {
    let r = run(p, mode);
    let w = generate_witness(p, &r, ghosts);
    (r, w)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::frontend::{parse_expr, parse_program};
    use crate::witness::{confirm, validate_interleaving, validate_local_trace, WitnessVerdict};

    const RUNNING_EXAMPLE: &str = "global used: int = 0; mutex m; local tmp: int;
        thread main { create(t1); lock(m); tmp = used; assert(tmp == 0); unlock(m); }
        thread t1 { lock(m); used = 47; used = 0; unlock(m); }";

    #[test]
    fn running_example_with_ghosts() {
        let (p, _) = parse_program(RUNNING_EXAMPLE).unwrap();
        let (_, w) = analyze_and_generate(&p, Mode::MutexMeet, true);
        let names: Vec<&str> = w.ghost_globals.iter().map(|g| g.name.as_str()).collect();
        assert_eq!(names, ["m_locked", "multithreaded"]);
        assert_eq!(w.updates.len(), 5);
        let lock_unlock = w
            .updates
            .values()
            .filter(|u| u[0].target == "m_locked")
            .count();
        assert_eq!(lock_unlock, 4);
        let main = p.main().unwrap();
        let after_create = main.out_edges(main.initial).next().unwrap().1.dst;
        assert_eq!(w.invariants.len(), 1);
        assert_eq!(w.invariants[&after_create], parse_expr("multithreaded && !m_locked ==> used == 0").unwrap());
        assert_eq!(validate_interleaving(&p, &w, Default::default()).unwrap().verdict, WitnessVerdict::Valid);
        assert_eq!(validate_local_trace(&p, &w, Default::default()).unwrap().verdict, WitnessVerdict::Valid);
    }

    #[test]
    fn protection_mode_with_ghosts() {
        let (p, _) = parse_program(RUNNING_EXAMPLE).unwrap();
        let (_, w) = analyze_and_generate(&p, Mode::Protection, true);
        let inv: Vec<String> = w.invariants.values().map(|e| e.to_c_expression()).collect();
        assert_eq!(inv.len(), 1);
        assert_eq!(w.invariants.values().next().unwrap(), &parse_expr("multithreaded && !m_locked ==> used == 0").unwrap());
    }

    #[test]
    fn sequential_program() {
        let (p, _) = parse_program("global g: int = 0; thread main { g = 1; }").unwrap();
        for mode in [Mode::Protection, Mode::MutexMeet] {
            let (_, w) = analyze_and_generate(&p, mode, true);
            assert_eq!(w.ghost_globals.len(), 1);
            assert_eq!(w.ghost_globals[0].name, "multithreaded");
            assert!(w.invariants.is_empty());
            assert!(w.updates.is_empty());
        }
    }

    #[test]
    fn ghost_free_invariants_after_locks() {
        let (p, _) = parse_program(RUNNING_EXAMPLE).unwrap();
        let (_, w) = analyze_and_generate(&p, Mode::Protection, false);
        assert!(w.ghost_globals.is_empty() && w.updates.is_empty());
        let lock_dsts: BTreeSet<NodeId> = p
            .edge_ids()
            .filter(|id| matches!(p.edge(*id).action, Action::Lock(_)))
            .map(|id| p.edge(id).dst)
            .collect();
        assert_eq!(w.invariants.keys().copied().collect::<BTreeSet<_>>(), lock_dsts);
        for inv in w.invariants.values() {
            assert_eq!(inv, &parse_expr("used == 0").unwrap());
        }
        assert_eq!(confirm(&p, &w, Default::default()).unwrap().verdict, WitnessVerdict::Confirmed);
    }

    #[test]
    fn name_clash_gets_fresh_ghost() {
        let (p, _) = parse_program("global multithreaded: int = 0; mutex m; thread main { lock(m); unlock(m); }").unwrap();
        let (_, w) = analyze_and_generate(&p, Mode::Protection, true);
        let names: Vec<&str> = w.ghost_globals.iter().map(|g| g.name.as_str()).collect();
        assert_eq!(names, ["m_locked", "multithreaded_1"]);
    }

    #[test]
    fn bounds_rendering() {
        let (p, _) = parse_program("global g: int = 0; global b: bool = false; thread main { }").unwrap();
        let iv = |lo: i64, hi: i64| Interval::new(Bound::Fin(lo.into()), Bound::Fin(hi.into()));
        assert_eq!(bound_expr(&p, "g", &iv(1, 3)).unwrap().to_c_expression(), "1 <= g && g <= 3");
        assert_eq!(bound_expr(&p, "g", &Interval::new(Bound::Fin(0.into()), Bound::PosInf)).unwrap().to_c_expression(), "0 <= g");
        assert_eq!(bound_expr(&p, "b", &iv(0, 0)).unwrap().to_c_expression(), "!b");
        assert!(bound_expr(&p, "g", &Interval::top()).is_none());
        assert!(bound_expr(&p, "b", &Interval::bool_top()).is_none());
    }
}
