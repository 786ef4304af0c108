use std::collections::{BTreeMap, BTreeSet, VecDeque};

use crate::expr::Name;
use crate::program::{Action, NodeId, Program, ThreadTemplate};

pub type Lockset = BTreeSet<Name>;

/// Mutexes definitely held at each reachable node. Every thread starts
/// without mutexes; paths are met by intersection.
pub fn compute_locksets(p: &Program) -> BTreeMap<NodeId, Lockset> {
    let mut out = BTreeMap::new();
    for t in &p.templates {
        out.extend(template_locksets(t));
    }
    out
}

pub fn template_locksets(t: &ThreadTemplate) -> BTreeMap<NodeId, Lockset> {
    let mut ls: BTreeMap<NodeId, Lockset> = BTreeMap::new();
    ls.insert(t.initial, Lockset::new());
    let mut work = VecDeque::from([t.initial]);
    while let Some(u) = work.pop_front() {
        let here = ls[&u].clone();
        for (_, e) in t.out_edges(u) {
            let after = transfer(&here, &e.action);
            let changed = match ls.get_mut(&e.dst) {
                None => {
                    ls.insert(e.dst, after);
                    true
                }
                Some(old) => {
                    let met: Lockset = old.intersection(&after).cloned().collect();
                    let changed = met.len() != old.len();
                    *old = met;
                    changed
                }
            };
            if changed && !work.contains(&e.dst) {
                work.push_back(e.dst);
            }
        }
    }
    ls
}

/// Lockset after an action.
pub fn transfer(before: &Lockset, a: &Action) -> Lockset {
    let mut s = before.clone();
    for m in a.members() {
        match m {
            Action::Lock(m) => {
                s.insert(m.clone());
            }
            Action::Unlock(m) => {
                s.remove(m);
            }
            _ => {}
        }
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::frontend::parse_program;

    #[test]
    fn running_example_write_is_protected() {
        let (p, _) = parse_program(
            "global used: int = 0; mutex m;
             thread main { create(t1); }
             thread t1 { lock(m); used = 47; used = 0; unlock(m); }",
        )
        .unwrap();
        let ls = compute_locksets(&p);
        let t1 = p.template("t1").unwrap();
        let write = &t1.edges[1];
        assert_eq!(ls[&write.src], BTreeSet::from(["m".to_string()]));
        assert!(ls[&t1.edges[3].dst].is_empty());
    }

    #[test]
    fn diamond_meets_by_intersection() {
        let (p, _) = parse_program(
            "mutex m; local x: int;
             thread main { if (x == 0) { lock(m); } else { x = 1; } x = 2; }",
        )
        .unwrap();
        let ls = compute_locksets(&p);
        let main = p.main().unwrap();
        let last = main.edges.iter().find(|e| matches!(&e.action, Action::LocalUpdate { value, .. } if value.to_string() == "2")).unwrap();
        assert!(ls[&last.src].is_empty());
    }
}
