use std::collections::BTreeSet;

use crate::interleave::{explore_with, ExploreOptions, Interleaving, Verdict};
use crate::program::{AssertId, Program};
use crate::traces::{trace_safety_with, LocalTrace, TraceBounds, TraceVerdict};

use super::{instrument, split, GhostWitness, InstrumentedProgram, WitnessError};

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum WitnessVerdict {
    Valid,
    /// Some assert of the instrumented program fails.
    Invalid {
        witness: BTreeSet<AssertId>,
        original: BTreeSet<AssertId>,
    },
    Confirmed,
    Rejected {
        witness: BTreeSet<AssertId>,
    },
    EvalError(String),
    BoundExceeded,
}

impl WitnessVerdict {
    pub fn kind(&self) -> &'static str {
        match self {
            WitnessVerdict::Valid => "Valid",
            WitnessVerdict::Invalid { .. } => "Invalid",
            WitnessVerdict::Confirmed => "Confirmed",
            WitnessVerdict::Rejected { .. } => "Rejected",
            WitnessVerdict::EvalError(_) => "EvalError",
            WitnessVerdict::BoundExceeded => "BoundExceeded",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Counterexample {
    Interleaving(Interleaving),
    Trace(LocalTrace),
}

#[derive(Clone, Debug)]
pub struct Validation {
    pub verdict: WitnessVerdict,
    pub instrumented: InstrumentedProgram,
    /// The program that was checked: the instrumented program, or its split.
    pub checked: Program,
    pub counterexample: Option<Counterexample>,
}

fn classify(ip: &InstrumentedProgram, asserts: &BTreeSet<AssertId>) -> (BTreeSet<AssertId>, BTreeSet<AssertId>) {
    asserts.iter().cloned().partition(|a| ip.is_witness_assert(a))
}

/// The witness is valid if its instrumented program is safe. Every violated
/// assert is reported.
pub fn validate_interleaving(p: &Program, w: &GhostWitness, opts: ExploreOptions) -> Result<Validation, WitnessError> {
    let ip = instrument(p, w)?;
    let v = explore_with(
        &ip.program,
        ExploreOptions {
            all_violations: true,
            ..opts
        },
    );
    let (verdict, counterexample) = match v {
        Verdict::Safe(_) => (WitnessVerdict::Valid, None),
        Verdict::Unsafe { asserts, first, .. } => {
            let (witness, original) = classify(&ip, &asserts);
            (
                WitnessVerdict::Invalid { witness, original },
                Some(Counterexample::Interleaving(first.interleaving)),
            )
        }
        Verdict::EvalError { error, interleaving, .. } => (
            WitnessVerdict::EvalError(error.to_string()),
            Some(Counterexample::Interleaving(interleaving)),
        ),
        Verdict::BoundExceeded(_) => (WitnessVerdict::BoundExceeded, None),
    };
    Ok(Validation {
        verdict,
        checked: ip.program.clone(),
        instrumented: ip,
        counterexample,
    })
}

/// The witness is valid if the split of its instrumented program is safe
/// under the local trace semantics. The search stops at the first violated
/// assert, so an `Invalid` verdict names only that one.
pub fn validate_local_trace(p: &Program, w: &GhostWitness, bounds: TraceBounds) -> Result<Validation, WitnessError> {
    let ip = instrument(p, w)?;
    let q = split(&ip.program);
    let v = trace_safety_with(&q, bounds, false).map_err(|e| WitnessError::Invalid(vec![e.to_string()]))?;
    let (verdict, counterexample) = match v {
        TraceVerdict::Safe(_) => (WitnessVerdict::Valid, None),
        TraceVerdict::Unsafe { asserts, witness, .. } => {
            let (wa, oa) = classify(&ip, &asserts);
            (
                WitnessVerdict::Invalid {
                    witness: wa,
                    original: oa,
                },
                Some(Counterexample::Trace(witness)),
            )
        }
        TraceVerdict::EvalError { error, .. } => (WitnessVerdict::EvalError(error.to_string()), None),
        TraceVerdict::BoundExceeded(_) => (WitnessVerdict::BoundExceeded, None),
    };
    Ok(Validation {
        verdict,
        instrumented: ip,
        checked: q,
        counterexample,
    })
}

/// Checks only the witness's own asserts; failures of the program's asserts
/// are ignored.
pub fn confirm(p: &Program, w: &GhostWitness, opts: ExploreOptions) -> Result<Validation, WitnessError> {
    let ip = instrument(p, w)?;
    let v = explore_with(
        &ip.program,
        ExploreOptions {
            all_violations: true,
            ..opts
        },
    );
    let witness: BTreeSet<AssertId> = v.violated().into_iter().filter(|a| ip.is_witness_assert(a)).collect();
    let verdict = if !witness.is_empty() {
        WitnessVerdict::Rejected { witness }
    } else {
        match &v {
            Verdict::EvalError { error, .. } => WitnessVerdict::EvalError(error.to_string()),
            Verdict::BoundExceeded(_) => WitnessVerdict::BoundExceeded,
            _ => WitnessVerdict::Confirmed,
        }
    };
    Ok(Validation {
        verdict,
        checked: ip.program.clone(),
        instrumented: ip,
        counterexample: None,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::frontend::{parse_expr, parse_program};
    use crate::witness::tests::{running_witness, RUNNING_EXAMPLE};

    fn unsafe_variant() -> Program {
        let src = RUNNING_EXAMPLE.replace("  used = 0;\n  unlock(m);\n}", "  unlock(m);\n  used = 0;\n}");
        assert_ne!(src, RUNNING_EXAMPLE);
        parse_program(&src).unwrap().0
    }

    fn false_witness(p: &Program) -> GhostWitness {
        let mut w = GhostWitness::default();
        w.invariants.insert(p.main().unwrap().initial, parse_expr("used == 1").unwrap());
        w
    }

    #[test]
    fn running_witness_is_valid() {
        let (p, _) = parse_program(RUNNING_EXAMPLE).unwrap();
        let w = running_witness(&p);
        assert_eq!(validate_interleaving(&p, &w, Default::default()).unwrap().verdict, WitnessVerdict::Valid);
        assert_eq!(validate_local_trace(&p, &w, Default::default()).unwrap().verdict, WitnessVerdict::Valid);
        assert_eq!(confirm(&p, &w, Default::default()).unwrap().verdict, WitnessVerdict::Confirmed);
    }

    #[test]
    fn false_invariant_is_invalid() {
        let (p, _) = parse_program(RUNNING_EXAMPLE).unwrap();
        let w = false_witness(&p);
        for v in [
            validate_interleaving(&p, &w, Default::default()).unwrap().verdict,
            validate_local_trace(&p, &w, Default::default()).unwrap().verdict,
        ] {
            match v {
                WitnessVerdict::Invalid { witness, original } => {
                    assert_eq!(witness.len(), 1);
                    assert!(original.is_empty());
                }
                other => panic!("{other:?}"),
            }
        }
        assert_eq!(confirm(&p, &w, Default::default()).unwrap().verdict.kind(), "Rejected");
    }

    #[test]
    fn unsafe_program_fails_on_original_assert() {
        let p = unsafe_variant();
        let w = running_witness(&p);
        match validate_interleaving(&p, &w, Default::default()).unwrap().verdict {
            WitnessVerdict::Invalid { original, .. } => assert!(!original.is_empty()),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn confirmation_ignores_program_asserts() {
        let p = unsafe_variant();
        assert_eq!(crate::interleave::explore(&p, Default::default()).kind(), "Unsafe");
        // the reset after unlock breaks `g == 0 ==> used == 0`; a witness
        // whose ghost is cleared only after the reset holds
        let mut w = running_witness(&p);
        let t1 = p.template_index("t1").unwrap() as u32;
        let unlock_t1 = p
            .edge_ids()
            .find(|e| e.template == t1 && matches!(p.edge(*e).action, crate::program::Action::Unlock(_)))
            .unwrap();
        let reset = p
            .edge_ids()
            .find(|e| e.template == t1 && p.edge(*e).action.render() == "used = 0;")
            .unwrap();
        let clear = w.updates.remove(&unlock_t1).unwrap();
        w.updates.insert(reset, clear);
        assert_eq!(confirm(&p, &w, Default::default()).unwrap().verdict, WitnessVerdict::Confirmed);
        let (q, _) = parse_program(RUNNING_EXAMPLE).unwrap();
        assert_eq!(confirm(&q, &GhostWitness::default(), Default::default()).unwrap().verdict, WitnessVerdict::Confirmed);
    }
}
