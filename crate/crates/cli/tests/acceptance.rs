//! One line per acceptance criterion. Thresholds are fixed here.

use std::path::Path;
use std::process::{Command, ExitCode};
use std::time::{Duration, Instant};

use serde_yaml::Value as Yaml;

use ghostwit_core::corpus::{running_witness, RUNNING_EXAMPLE};
use ghostwit_core::difftest::{
    format_round_trips, generated_witnesses_confirmed, instrumentation_preserves, round_trips,
    split_preserves, traces_vs_interleavings, validation_agrees, SuiteReport,
};
use ghostwit_core::format::{emit_witness, EmitOptions};
use ghostwit_core::frontend::parse_program;

const SEED: u64 = 2024;
const GOLDEN_LIMIT: Duration = Duration::from_secs(5);
const TRACE_PROGRAMS: usize = 200;
const TRACE_LIMIT: Duration = Duration::from_secs(600);
const ROUND_TRIP_PROGRAMS: usize = 50;
const PRESERVATION_PAIRS: usize = 200;
const SPLIT_PROGRAMS: usize = 200;
const VALIDATION_PAIRS: usize = 200;
/// Generated programs per dialect, on top of the named ones.
const CONFIRM_PER_DIALECT: usize = 70;
const FORMAT_WITNESSES: usize = 100;

/// The running example instrumented with the mutex-meet witness: lock and unlock fused
/// with the ghost updates, the create edge raising `multithreaded` and the
/// implication checked before main's lock.
const RUNNING_INSTRUMENTED: &str = "global used: int = 0;
global m_locked: bool = false;
global multithreaded: bool = false;
mutex m;
local tmp: int;
local __read_m_locked: bool;
local __read_multithreaded: bool;
local __read_used: int;
thread main {
  atomic { create(t1); multithreaded = true; }
  atomic {
    __read_m_locked = m_locked;
    __read_multithreaded = multithreaded;
    __read_used = used;
    assert(__read_multithreaded && !__read_m_locked ==> __read_used == 0, \"witness@n2\");
  }
  atomic { lock(m); m_locked = true; }
  tmp = used;
  assert(tmp == 0, \"8:3\");
  atomic { unlock(m); m_locked = false; }
}
thread t1 {
  atomic { lock(m); m_locked = true; }
  used = 47;
  used = 0;
  atomic { unlock(m); m_locked = false; }
}
";

type Check = Result<String, String>;

fn ensure(cond: bool, msg: impl Into<String>) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg.into())
    }
}

fn ghostwit(args: &[&str]) -> Result<(i32, String), String> {
    let out = Command::new(env!("CARGO_BIN_EXE_ghostwit"))
        .args(args)
        .output()
        .map_err(|e| e.to_string())?;
    let code = out.status.code().unwrap_or(-1);
    let stdout = String::from_utf8_lossy(&out.stdout).into_owned();
    if code != 0 {
        return Err(format!("ghostwit {} exited {code}: {stdout}{}", args.join(" "), String::from_utf8_lossy(&out.stderr)));
    }
    Ok((code, stdout))
}

fn keys(v: &Yaml) -> Vec<&str> {
    v.as_mapping()
        .map(|m| m.keys().filter_map(Yaml::as_str).collect())
        .unwrap_or_default()
}

fn items(v: &Yaml) -> &[Yaml] {
    v.as_sequence().map(|s| s.as_slice()).unwrap_or(&[])
}

/// Key order of both entries as in the exchange format.
fn check_key_structure(doc: &Yaml) -> Result<(), String> {
    let entries = items(doc);
    ensure(entries.len() == 2, format!("{} entries", entries.len()))?;
    for e in entries {
        ensure(keys(e) == ["entry_type", "metadata", "content"], format!("entry keys {:?}", keys(e)))?;
    }
    ensure(entries[0]["entry_type"].as_str() == Some("invariant_set"), "first entry is not invariant_set")?;
    ensure(entries[1]["entry_type"].as_str() == Some("ghost_instrumentation"), "second entry is not ghost_instrumentation")?;
    for inv in items(&entries[0]["content"]) {
        ensure(keys(inv) == ["invariant"], "invariant item")?;
        let i = &inv["invariant"];
        ensure(keys(i) == ["type", "location", "value", "format"], format!("invariant keys {:?}", keys(i)))?;
        ensure(i["type"].as_str() == Some("location_invariant"), "invariant type")?;
        ensure(i["format"].as_str() == Some("c_expression"), "invariant format")?;
    }
    let content = &entries[1]["content"];
    ensure(keys(content) == ["ghost_variables", "ghost_updates"], format!("content keys {:?}", keys(content)))?;
    for v in items(&content["ghost_variables"]) {
        ensure(keys(v) == ["name", "type", "scope", "initial"], format!("ghost keys {:?}", keys(v)))?;
        ensure(keys(&v["initial"]) == ["value", "format"], "initial keys")?;
        ensure(v["scope"].as_str() == Some("global"), "scope")?;
        ensure(v["initial"]["format"].as_str() == Some("c_expression"), "initial format")?;
    }
    for u in items(&content["ghost_updates"]) {
        ensure(keys(u) == ["location", "updates"], format!("update keys {:?}", keys(u)))?;
        for x in items(&u["updates"]) {
            ensure(keys(x) == ["variable", "value", "format"], format!("update item keys {:?}", keys(x)))?;
            ensure(x["format"].as_str() == Some("c_expression"), "update format")?;
        }
    }
    Ok(())
}

fn golden_pipeline() -> Check {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let prog = dir.path().join("running.cw");
    let wit = dir.path().join("running.witness.yml");
    std::fs::write(&prog, RUNNING_EXAMPLE).map_err(|e| e.to_string())?;
    let path = |p: &Path| p.to_str().unwrap().to_string();
    let (prog, wit) = (path(&prog), path(&wit));

    let start = Instant::now();
    ghostwit(&["gen-witness", "--mode", "mutexmeet", &prog, "-o", &wit])?;
    let (_, instrumented) = ghostwit(&["instrument", &prog, &wit])?;
    let mut verdicts = Vec::new();
    for sem in ["interleaving", "trace"] {
        let (_, out) = ghostwit(&["validate", "--semantics", sem, &prog, &wit])?;
        verdicts.push(out.lines().next().unwrap_or_default().to_string());
    }
    let elapsed = start.elapsed();

    let (got, _) = parse_program(&instrumented).map_err(|e| format!("instrumented output: {e}"))?;
    let (want, _) = parse_program(RUNNING_INSTRUMENTED).map_err(|e| e.to_string())?;
    ensure(got.structurally_eq(&want), format!("instrumentation differs:\n{instrumented}"))?;
    let text = std::fs::read_to_string(&wit).map_err(|e| e.to_string())?;
    let doc: Yaml = serde_yaml::from_str(&text).map_err(|e| e.to_string())?;
    check_key_structure(&doc)?;
    ensure(verdicts.iter().all(|v| v == "VERDICT Valid"), format!("verdicts {verdicts:?}"))?;
    ensure(elapsed < GOLDEN_LIMIT, format!("{:.2}s", elapsed.as_secs_f64()))?;
    Ok(format!("instrumentation and keys match, Valid under both semantics, {:.2}s", elapsed.as_secs_f64()))
}

fn suite(r: SuiteReport, min_cases: usize, limit: Option<Duration>) -> Check {
    let first = r.failures.first().cloned().unwrap_or_default();
    ensure(r.ok() && r.passed == r.cases, format!("{}\n{first}", r.summary()))?;
    ensure(r.cases >= min_cases, format!("only {} cases", r.cases))?;
    if let Some(l) = limit {
        ensure(r.elapsed < l, format!("{} over {}s", r.summary(), l.as_secs()))?;
    }
    Ok(r.summary())
}

/// Lines of the first occurrences of `needle` in each thread of the running example.
fn lines_of(needle: &str) -> Vec<u64> {
    RUNNING_EXAMPLE
        .lines()
        .enumerate()
        .filter(|(_, l)| l.trim() == needle)
        .map(|(i, _)| i as u64 + 1)
        .collect()
}

fn golden_document() -> Result<(), String> {
    let (p, sm) = parse_program(RUNNING_EXAMPLE).map_err(|e| e.to_string())?;
    let text = emit_witness(&p, &running_witness(&p), &sm, &EmitOptions::default()).map_err(|e| e.to_string())?;
    let doc: Yaml = serde_yaml::from_str(&text).map_err(|e| e.to_string())?;
    check_key_structure(&doc)?;
    let entries = items(&doc);
    let invs = items(&entries[0]["content"]);
    ensure(invs.len() == 1, "one invariant")?;
    let inv = &invs[0]["invariant"];
    let locks = lines_of("lock(m);");
    let unlocks = lines_of("unlock(m);");
    ensure(inv["location"]["line"].as_u64() == Some(locks[0]), "invariant before main's lock")?;
    ensure(inv["value"].as_str() == Some("g == 0 ==> used == 0"), format!("value {:?}", inv["value"]))?;
    let content = &entries[1]["content"];
    let ghosts = items(&content["ghost_variables"]);
    ensure(ghosts.len() == 1, "one ghost")?;
    let g = &ghosts[0];
    ensure(g["name"].as_str() == Some("g") && g["type"].as_str() == Some("int"), "ghost g: int")?;
    ensure(g["initial"]["value"].as_u64() == Some(0) || g["initial"]["value"].as_str() == Some("0"), "initial 0")?;
    let mut want: Vec<(u64, &str)> = locks.iter().map(|&l| (l, "1")).chain(unlocks.iter().map(|&l| (l, "0"))).collect();
    want.sort();
    let got: Vec<(u64, String)> = items(&content["ghost_updates"])
        .iter()
        .map(|u| {
            let x = &items(&u["updates"])[0];
            let v = match &x["value"] {
                Yaml::Number(n) => n.to_string(),
                other => other.as_str().unwrap_or_default().to_string(),
            };
            ensure(x["variable"].as_str() == Some("g"), "update target").map(|_| (u["location"]["line"].as_u64().unwrap_or(0), v))
        })
        .collect::<Result<_, _>>()?;
    let got: Vec<(u64, &str)> = got.iter().map(|(l, v)| (*l, v.as_str())).collect();
    ensure(got == want, format!("updates {got:?}, expected {want:?}"))?;
    Ok(())
}

fn format_criterion() -> Check {
    let r = suite(format_round_trips(SEED, FORMAT_WITNESSES), FORMAT_WITNESSES, None)?;
    golden_document()?;
    Ok(format!("{r}; golden document matches"))
}

fn main() -> ExitCode {
    let criteria: Vec<(&str, Box<dyn Fn() -> Check>)> = vec![
        ("golden pipeline", Box::new(golden_pipeline)),
        (
            "trace semantics agree with interleavings",
            Box::new(|| suite(traces_vs_interleavings(SEED, TRACE_PROGRAMS), TRACE_PROGRAMS, Some(TRACE_LIMIT))),
        ),
        (
            "interleaving/trace round trips",
            Box::new(|| suite(round_trips(SEED, ROUND_TRIP_PROGRAMS), ROUND_TRIP_PROGRAMS, None)),
        ),
        (
            "instrumentation preserves asserts and projects runs",
            Box::new(|| suite(instrumentation_preserves(SEED, PRESERVATION_PAIRS), PRESERVATION_PAIRS, None)),
        ),
        (
            "split preserves safety",
            Box::new(|| suite(split_preserves(SEED, SPLIT_PROGRAMS), SPLIT_PROGRAMS, None)),
        ),
        (
            "validators agree",
            Box::new(|| suite(validation_agrees(SEED, VALIDATION_PAIRS), VALIDATION_PAIRS, None)),
        ),
        (
            "generated witnesses confirmed",
            Box::new(|| suite(generated_witnesses_confirmed(SEED, CONFIRM_PER_DIALECT), 3 * CONFIRM_PER_DIALECT, None)),
        ),
        ("witness format", Box::new(format_criterion)),
    ];
    let mut failed = 0;
    for (i, (name, check)) in criteria.iter().enumerate() {
        match check() {
            Ok(detail) => println!("PASS {} {name}: {detail}", i + 1),
            Err(why) => {
                failed += 1;
                println!("FAIL {} {name}: {why}", i + 1);
            }
        }
    }
    println!("{} of {} criteria pass", criteria.len() - failed, criteria.len());
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
