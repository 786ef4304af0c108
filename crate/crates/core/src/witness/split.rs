use std::collections::BTreeSet;

use crate::analysis::compute_locksets;
use crate::program::{Action, Program};

use super::fresh_name;

/// Encodes atomic blocks as critical sections.
///
/// Every global `g` gets a dedicated mutex `m_g`. Bare accesses to `g` are
/// wrapped in `lock(m_g)`/`unlock(m_g)` unless `m_g` is already held; an
/// atomic block takes the mutexes of all globals it accesses in name order
/// and releases them in reverse. A lock opening the block comes before
/// them, an unlock opening it after them.
pub fn split(p: &Program) -> Program {
    let mut q = p.clone();
    let mut taken: BTreeSet<String> = super::program_names(p);
    for g in &p.globals {
        if q.global_mutexes.contains_key(&g.name) {
            continue;
        }
        let m = fresh_name(&taken, &format!("m_{}", g.name));
        taken.insert(m.clone());
        q.mutexes.push(m.clone());
        q.global_mutexes.insert(g.name.clone(), m);
    }
    let locksets = compute_locksets(p);
    let mut next_node = p.fresh_node().0;
    for t in &mut q.templates {
        for i in 0..t.edges.len() {
            let e = t.edges[i].clone();
            let held = locksets.get(&e.src).cloned().unwrap_or_default();
            let wrap = |gs: BTreeSet<&str>| -> Vec<String> {
                gs.into_iter()
                    .map(|g| q.global_mutexes[g].clone())
                    .filter(|m| !held.contains(m))
                    .collect()
            };
            let chain: Vec<Action> = match &e.action {
                Action::Atomic(ms) => {
                    // A leading lock blocks the whole block, so it is taken
                    // first; a leading unlock is deferred to the end so that
                    // later accesses stay covered.
                    let (head, tail, rest) = match ms.split_first() {
                        Some((a @ Action::Lock(_), rest)) => (Some(a.clone()), None, rest),
                        Some((a @ Action::Unlock(_), rest)) => (None, Some(a.clone()), rest),
                        _ => (None, None, &ms[..]),
                    };
                    let mut locks = wrap(e.action.globals_accessed());
                    if let Some(Action::Lock(m)) = &head {
                        locks.retain(|l| l != m);
                    }
                    head.into_iter()
                        .chain(locks.iter().map(|m| Action::Lock(m.clone())))
                        .chain(rest.iter().cloned())
                        .chain(locks.iter().rev().map(|m| Action::Unlock(m.clone())))
                        .chain(tail)
                        .collect()
                }
                Action::GlobalRead { .. } | Action::GlobalWrite { .. } => {
                    let locks = wrap(e.action.globals_accessed());
                    locks
                        .iter()
                        .map(|m| Action::Lock(m.clone()))
                        .chain([e.action.clone()])
                        .chain(locks.iter().map(|m| Action::Unlock(m.clone())))
                        .collect()
                }
                _ => continue,
            };
            let mut src = e.src;
            for (k, a) in chain.iter().enumerate() {
                let dst = if k + 1 == chain.len() {
                    e.dst
                } else {
                    let n = crate::program::NodeId(next_node);
                    next_node += 1;
                    t.nodes.insert(n);
                    n
                };
                if k == 0 {
                    t.edges[i].action = a.clone();
                    t.edges[i].dst = dst;
                } else {
                    t.add_edge(src, a.clone(), dst);
                }
                src = dst;
            }
        }
    }
    q
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::frontend::parse_program;
    use crate::interleave::{explore, Bounds};
    use crate::traces::check_lang_mg;

    #[test]
    fn atomic_lock_becomes_critical_section() {
        let (p, _) = parse_program("global g: int = 1; mutex m; thread main { atomic { lock(m); g = 0; } }").unwrap();
        let q = split(&p);
        let (expected, _) = parse_program(
            "global g: int = 1; mutex m; mutex m_g for g;
             thread main { lock(m); lock(m_g); g = 0; unlock(m_g); }",
        )
        .unwrap();
        assert!(q.structurally_eq(&expected), "{}", crate::frontend::render_program(&q));
        assert!(check_lang_mg(&q).is_ok());
    }

    #[test]
    fn atomic_without_globals_is_unwrapped() {
        let (p, _) = parse_program("local x: int; mutex m; thread main { atomic { lock(m); x = 1; } }").unwrap();
        let q = split(&p);
        let (expected, _) = parse_program("local x: int; mutex m; thread main { lock(m); x = 1; }").unwrap();
        assert!(q.structurally_eq(&expected));
    }

    #[test]
    fn locks_in_name_order() {
        let (p, _) = parse_program(
            "global used: int = 0; global g: int = 0; local t: int;
             thread main { atomic { t = used; g = 1; } }",
        )
        .unwrap();
        let q = split(&p);
        let acts: Vec<String> = q.main().unwrap().edges.iter().map(|e| e.action.render()).collect();
        // one chain: its order is the edge order
        assert_eq!(
            acts,
            ["lock(m_g);", "lock(m_used);", "t = used;", "g = 1;", "unlock(m_used);", "unlock(m_g);"]
        );
    }

    #[test]
    fn protected_access_is_not_wrapped_again() {
        let src = "global g: int = 0; mutex mg for g; thread main { lock(mg); g = 1; unlock(mg); }";
        let (p, _) = parse_program(src).unwrap();
        assert_eq!(split(&p), p);
    }

    #[test]
    fn fresh_mutex_name() {
        let (p, _) = parse_program("global g: int = 0; mutex m_g; thread main { g = 1; }").unwrap();
        let q = split(&p);
        assert_eq!(q.global_mutexes["g"], "m_g_1");
    }

    #[test]
    fn leading_unlock_is_deferred() {
        let (p, _) = parse_program(
            "global g: int = 0; mutex mg for g; local h: int;
             thread main { lock(mg); atomic { unlock(mg); h = g; } }",
        )
        .unwrap();
        let q = split(&p);
        let acts: Vec<String> = q.main().unwrap().edges.iter().map(|e| e.action.render()).collect();
        assert_eq!(acts, ["lock(mg);", "h = g;", "unlock(mg);"]);
        assert!(check_lang_mg(&q).is_ok());
    }

    #[test]
    fn running_example_safety_is_kept() {
        let (p, _) = parse_program(super::super::tests::RUNNING_EXAMPLE).unwrap();
        let ip = super::super::instrument(&p, &super::super::tests::running_witness(&p)).unwrap();
        let q = split(&ip.program);
        assert!(check_lang_mg(&q).is_ok());
        assert!(!q.has_atomics());
        assert!(explore(&q, Bounds::default()).is_safe());
    }
}
