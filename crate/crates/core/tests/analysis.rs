use ghostwit_core::analysis::{analyze_and_generate, compute_locksets, run_mutexmeet_analysis, run_protection_analysis, Mode};
use ghostwit_core::corpus::{generate_corpus, standard_programs, Dialect, GenConfig};
use ghostwit_core::frontend::parse_program;
use ghostwit_core::interleave::{ExploreOptions, Machine, State};
use ghostwit_core::witness::{confirm, WitnessVerdict};
use ghostwit_core::{Program, Value};

fn corpus() -> Vec<(String, Program)> {
    let mut out: Vec<(String, Program)> = standard_programs()
        .into_iter()
        .map(|(n, s)| (n.to_string(), parse_program(s).unwrap().0))
        .collect();
    for (k, d) in [Dialect::Lang, Dialect::Atomic, Dialect::MutexGuarded].into_iter().enumerate() {
        for (i, g) in generate_corpus(100 + k as u64, 25, &GenConfig::new(d)).into_iter().enumerate() {
            out.push((format!("{d:?}#{i}\n{}", g.source), g.program));
        }
    }
    out
}

fn states(p: &Program) -> Vec<State> {
    Machine::new(p).reachable_states(200_000).expect("small state space")
}

/// Threads run once a second thread exists.
fn multithreaded(s: &State) -> bool {
    s.threads.len() > 1
}

#[test]
fn locksets_are_held() {
    for (name, p) in corpus() {
        let ls = compute_locksets(&p);
        for s in states(&p) {
            for (t, ts) in &s.threads {
                for m in ls.get(&ts.node).into_iter().flatten() {
                    let i = p.mutex_index(m).unwrap();
                    assert_eq!(s.mutexes[i].as_ref(), Some(t), "{name}: {m} at {}", ts.node);
                }
            }
        }
    }
}

#[test]
fn protected_values_cover_free_states() {
    for (name, p) in corpus() {
        let r = run_protection_analysis(&p);
        for s in states(&p).iter().filter(|s| multithreaded(s)) {
            for (gi, g) in p.globals.iter().enumerate() {
                let free = r.protecting[&g.name].iter().all(|m| s.mutexes[p.mutex_index(m).unwrap()].is_none());
                if free {
                    assert!(r.protected[&g.name].contains(&s.globals[gi]), "{name}: {} = {}", g.name, s.globals[gi]);
                }
            }
        }
    }
}

#[test]
fn mutex_invariants_hold_while_free() {
    for (name, p) in corpus() {
        let r = run_mutexmeet_analysis(&p);
        let value = |s: &State, g: &str| -> Value { s.globals[p.global_index(g).unwrap()].clone() };
        for s in states(&p).iter().filter(|s| multithreaded(s)) {
            for (mi, m) in p.mutexes.iter().enumerate() {
                if s.mutexes[mi].is_some() {
                    continue;
                }
                let inv = r.mutex_invariants.get(m).unwrap_or_else(|| panic!("{name}: no invariant for {m}"));
                for (g, iv) in &inv.bounds {
                    assert!(iv.contains(&value(s, g)), "{name}: [{m}] bound of {g}");
                }
                for (a, b) in &inv.equalities {
                    assert_eq!(value(s, a), value(s, b), "{name}: [{m}] {a} == {b}");
                }
            }
        }
    }
}

#[test]
fn generated_witnesses_are_confirmed() {
    let mut invariants = 0;
    for (name, p) in corpus() {
        for mode in [Mode::Protection, Mode::MutexMeet] {
            for ghosts in [true, false] {
                let (_, w) = analyze_and_generate(&p, mode, ghosts);
                invariants += w.invariants.len();
                let v = confirm(&p, &w, ExploreOptions::default()).unwrap().verdict;
                assert_eq!(v, WitnessVerdict::Confirmed, "{name} {mode} ghosts={ghosts}");
            }
        }
    }
    println!("{invariants} invariants");
    assert!(invariants > 100);
}

#[test]
fn protection_examples() {
    let (p, _) = parse_program(
        "global g: int = 0; mutex m1; mutex m2;
         thread main { create(a); create(b); }
         thread a { lock(m1); lock(m2); g = 1; unlock(m2); unlock(m1); }
         thread b { lock(m1); g = 2; unlock(m1); }",
    )
    .unwrap();
    let r = run_protection_analysis(&p);
    assert_eq!(r.protecting["g"].iter().collect::<Vec<_>>(), ["m1"]);
    assert!(r.dump().contains("g: M[g]={m1} [g]=[0,2]"), "{}", r.dump());
}

#[test]
fn unlocked_mutex_keeps_initial_box() {
    let (p, _) = parse_program("global g: int = 4; mutex m; local x: int; thread main { create(t); } thread t { x = g; }").unwrap();
    let r = run_mutexmeet_analysis(&p);
    let inv = &r.mutex_invariants["m"];
    assert_eq!(inv.bounds["g"].as_singleton(), Some(&Value::from(4)));
}
