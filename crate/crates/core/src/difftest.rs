//! Differential suites over generated corpora. Each case either agrees or
//! yields a failure message carrying the program text.

use std::collections::BTreeSet;
use std::time::{Duration, Instant};

use rayon::prelude::*;

use crate::analysis::{analyze_and_generate, Mode};
use crate::corpus::{generate_corpus, standard_programs, witness_pairs, Dialect, GenConfig, Generated};
use crate::format::{emit_witness, parse_witness, EmitOptions};
use crate::frontend::parse_program;
use crate::interleave::{explore_with, ExploreOptions, Machine, Verdict};
use crate::program::{AssertId, Program};
use crate::traces::{
    check_consistency, coincides, enumerate_global_traces, global_trace_to_interleaving, interleaving_to_global_trace,
    is_create_complete, trace_safety_with, TraceBounds,
};
use crate::witness::{
    check_projection, confirm, instrument, split, validate_interleaving, validate_local_trace, GhostWitness,
    WitnessVerdict,
};

#[derive(Clone, Debug, Default)]
pub struct SuiteReport {
    pub name: String,
    pub cases: usize,
    pub passed: usize,
    /// Sub-checks performed, such as traces or runs per program.
    pub checks: usize,
    pub failures: Vec<String>,
    pub elapsed: Duration,
}

impl SuiteReport {
    pub fn ok(&self) -> bool {
        self.failures.is_empty()
    }

    pub fn summary(&self) -> String {
        format!(
            "{}: {}/{} cases agree, {} checks, {:.2}s",
            self.name,
            self.passed,
            self.cases,
            self.checks,
            self.elapsed.as_secs_f64()
        )
    }
}

type Outcome = Result<usize, String>;

fn run_suite<T: Sync>(name: &str, cases: &[T], f: impl Fn(&T) -> Outcome + Sync + Send) -> SuiteReport {
    let start = Instant::now();
    let results: Vec<Outcome> = cases.par_iter().map(f).collect();
    let mut r = SuiteReport {
        name: name.to_string(),
        cases: cases.len(),
        ..Default::default()
    };
    for res in results {
        match res {
            Ok(n) => {
                r.passed += 1;
                r.checks += n;
            }
            Err(msg) => r.failures.push(msg),
        }
    }
    r.elapsed = start.elapsed();
    r
}

fn all(p: &Program) -> Verdict {
    explore_with(
        p,
        ExploreOptions {
            all_violations: true,
            ..Default::default()
        },
    )
}

fn ids(s: &BTreeSet<AssertId>) -> String {
    s.iter().map(|a| a.0.as_str()).collect::<Vec<_>>().join(",")
}

/// Small loop-free programs with dedicated mutexes.
pub fn mg_config() -> GenConfig {
    GenConfig {
        max_threads: 2,
        max_stmts: 4,
        globals: 2,
        mutexes: 1,
        ..GenConfig::new(Dialect::MutexGuarded)
    }
}

/// Interleaving and trace semantics give the same verdict and the same
/// violated asserts.
pub fn traces_vs_interleavings(seed: u64, count: usize) -> SuiteReport {
    let corpus = generate_corpus(seed, count, &mg_config());
    run_suite("trace semantics vs interleavings", &corpus, |g| {
        let iv = all(&g.program);
        let tv = trace_safety_with(&g.program, TRACE_BOUNDS, true).map_err(|e| format!("{e}\n{}", g.source))?;
        if iv.kind() != tv.kind() || iv.violated() != tv.violated() {
            return Err(format!(
                "interleavings {} [{}], traces {} [{}]\n{}",
                iv.kind(),
                ids(&iv.violated()),
                tv.kind(),
                ids(&tv.violated()),
                g.source
            ));
        }
        Ok(1)
    })
}

/// Event bound of the trace-based suites; generated programs stay below it.
pub const TRACE_BOUNDS: TraceBounds = TraceBounds {
    max_events: 256,
    max_traces: 1_000_000,
};

pub const ROUND_TRIP_STEPS: usize = 12;
pub const ROUND_TRIP_EVENTS: usize = 20;

/// Interleavings map to coinciding create-complete consistent traces and
/// back.
pub fn round_trips(seed: u64, count: usize) -> SuiteReport {
    let corpus = generate_corpus(seed, count, &mg_config());
    run_suite("interleaving/trace round trips", &corpus, |g| {
        let p = &g.program;
        let mut checks = 0;
        for i in Machine::new(p).enumerate_interleavings(ROUND_TRIP_STEPS, 400) {
            let t = interleaving_to_global_trace(p, &i);
            let issues = check_consistency(p, &t);
            if !issues.is_empty() || !is_create_complete(p, &t) || !coincides(&i, &t) {
                return Err(format!("interleaving of {} steps: {:?}\n{}", i.len(), issues.first(), g.source));
            }
            checks += 1;
        }
        let en = enumerate_global_traces(
            p,
            TraceBounds {
                max_events: ROUND_TRIP_EVENTS,
                max_traces: 5_000,
            },
        )
        .map_err(|e| format!("{e}\n{}", g.source))?;
        for t in en.traces.iter().filter(|t| is_create_complete(p, t)) {
            let i = global_trace_to_interleaving(p, t).map_err(|e| format!("{e}\n{}", g.source))?;
            if !coincides(&i, t) {
                return Err(format!("trace of {} events\n{}", t.events.len(), g.source));
            }
            checks += 1;
        }
        Ok(checks)
    })
}

fn lang_config() -> GenConfig {
    GenConfig {
        max_threads: 2,
        max_stmts: 4,
        ..GenConfig::new(Dialect::Lang)
    }
}

fn atomic_config() -> GenConfig {
    GenConfig {
        max_threads: 2,
        max_stmts: 4,
        ..GenConfig::new(Dialect::Atomic)
    }
}

/// Program pairs over both dialects with atomics allowed or not.
fn pairs(seed: u64, count: usize) -> Vec<(Generated, GhostWitness)> {
    let half = count / 2;
    let mut out = witness_pairs(seed, half, &lang_config());
    out.extend(witness_pairs(seed.wrapping_add(1), count - half, &atomic_config()));
    out
}

/// Instrumentation keeps the verdicts of original asserts and projects
/// runs onto runs.
pub fn instrumentation_preserves(seed: u64, count: usize) -> SuiteReport {
    let cases = pairs(seed, count);
    run_suite("instrumentation preserves original asserts", &cases, |(g, w)| {
        let p = &g.program;
        let ip = instrument(p, w).map_err(|e| format!("{e}\n{}", g.source))?;
        let before = all(p);
        let after = all(&ip.program);
        if matches!(before, Verdict::BoundExceeded(_)) || matches!(after, Verdict::BoundExceeded(_)) {
            return Err(format!("bound exceeded\n{}", g.source));
        }
        let original: BTreeSet<AssertId> = after.violated().into_iter().filter(|a| !ip.is_witness_assert(a)).collect();
        if before.violated() != original {
            return Err(format!("program [{}], instrumented [{}]\n{}", ids(&before.violated()), ids(&original), g.source));
        }
        let runs = Machine::new(&ip.program).enumerate_interleavings(14, 200);
        let n = check_projection(p, &ip, &runs).map_err(|e| format!("{e}\n{}", g.source))?;
        Ok(1 + n)
    })
}

/// Splitting atomic blocks into critical sections keeps safety.
pub fn split_preserves(seed: u64, count: usize) -> SuiteReport {
    let corpus = generate_corpus(seed, count, &atomic_config());
    run_suite("split preserves safety", &corpus, |g| {
        let a = all(&g.program);
        let b = all(&split(&g.program));
        if a.kind() != b.kind() || a.violated() != b.violated() {
            return Err(format!("program {}, split {}\n{}", a.kind(), b.kind(), g.source));
        }
        Ok(1)
    })
}

/// The interleaving and local trace validators agree.
pub fn validation_agrees(seed: u64, count: usize) -> SuiteReport {
    let half = count / 2;
    let mut cases = witness_pairs(seed, half, &mg_config());
    cases.extend(witness_pairs(
        seed.wrapping_add(1),
        count - half,
        &GenConfig {
            max_stmts: 3,
            mutexes: 1,
            ..lang_config()
        },
    ));
    run_suite("interleaving vs local trace validation", &cases, |(g, w)| {
        let a = validate_interleaving(&g.program, w, ExploreOptions::default()).map_err(|e| format!("{e}\n{}", g.source))?;
        let b = validate_local_trace(&g.program, w, TRACE_BOUNDS).map_err(|e| format!("{e}\n{}", g.source))?;
        if a.verdict.kind() != b.verdict.kind() {
            return Err(format!("interleavings {:?}, traces {:?}\n{}", a.verdict, b.verdict, g.source));
        }
        Ok(1)
    })
}

/// Named programs of the standard corpus and generated ones.
pub fn confirmation_corpus(seed: u64, per_dialect: usize) -> Vec<(String, Program)> {
    let mut out: Vec<(String, Program)> = standard_programs()
        .into_iter()
        .map(|(n, s)| (n.to_string(), parse_program(s).expect("standard program").0))
        .collect();
    for (k, d) in [Dialect::Lang, Dialect::Atomic, Dialect::MutexGuarded].into_iter().enumerate() {
        for g in generate_corpus(seed.wrapping_add(k as u64), per_dialect, &GenConfig::new(d)) {
            out.push((g.source, g.program));
        }
    }
    out
}

/// Witnesses of both analyses, with and without ghosts, are confirmed.
pub fn generated_witnesses_confirmed(seed: u64, per_dialect: usize) -> SuiteReport {
    let corpus = confirmation_corpus(seed, per_dialect);
    run_suite("generated witnesses confirmed", &corpus, |(name, p)| {
        let mut n = 0;
        for mode in [Mode::Protection, Mode::MutexMeet] {
            for ghosts in [true, false] {
                let (_, w) = analyze_and_generate(p, mode, ghosts);
                let v = confirm(p, &w, ExploreOptions::default()).map_err(|e| format!("{e}\n{name}"))?;
                if v.verdict != WitnessVerdict::Confirmed {
                    return Err(format!("{mode} ghosts={ghosts}: {:?}\n{name}", v.verdict));
                }
                n += 1;
            }
        }
        Ok(n)
    })
}

/// Parsing an emitted witness gives it back, and emission is repeatable.
pub fn format_round_trips(seed: u64, count: usize) -> SuiteReport {
    let cases = pairs(seed, count);
    run_suite("witness format round trips", &cases, |(g, w)| {
        let opts = EmitOptions::default();
        let text = emit_witness(&g.program, w, &g.source_map, &opts).map_err(|e| format!("{e}\n{}", g.source))?;
        let again = emit_witness(&g.program, w, &g.source_map, &opts).map_err(|e| e.to_string())?;
        if text != again {
            return Err(format!("emission differs between runs\n{}", g.source));
        }
        let back = parse_witness(&text, &g.program, &g.source_map).map_err(|e| format!("{e}\n{text}\n{}", g.source))?;
        if &back != w {
            return Err(format!("round trip changed the witness\n{text}\n{}", g.source));
        }
        Ok(1)
    })
}

/// Every suite, in order.
pub fn run_all(seed: u64, count: usize) -> Vec<SuiteReport> {
    vec![
        traces_vs_interleavings(seed, count),
        round_trips(seed, count.min(50)),
        instrumentation_preserves(seed, count),
        split_preserves(seed, count),
        validation_agrees(seed, count),
        generated_witnesses_confirmed(seed, count.div_ceil(3)),
        format_round_trips(seed, count),
    ]
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn small_runs_agree() {
        for r in run_all(11, 12) {
            assert!(r.ok(), "{}\n{}", r.summary(), r.failures.join("\n---\n"));
            assert_eq!(r.passed, r.cases);
        }
    }
}
