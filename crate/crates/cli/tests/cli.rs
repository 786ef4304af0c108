use std::process::Command;

use ghostwit_core::corpus::{standard_programs, RUNNING_EXAMPLE};

fn run(args: &[&str]) -> (i32, String) {
    let out = Command::new(env!("CARGO_BIN_EXE_ghostwit")).args(args).output().unwrap();
    (out.status.code().unwrap(), String::from_utf8_lossy(&out.stdout).into_owned())
}

fn write(dir: &tempfile::TempDir, name: &str, text: &str) -> String {
    let p = dir.path().join(name);
    std::fs::write(&p, text).unwrap();
    p.to_str().unwrap().to_string()
}

fn standard(name: &str) -> &'static str {
    standard_programs().into_iter().find(|(n, _)| *n == name).unwrap().1
}

#[test]
fn verify_exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let safe = write(&dir, "safe.cw", RUNNING_EXAMPLE);
    let unsafe_ = write(&dir, "unsafe.cw", standard("running_unsafe"));
    let broken = write(&dir, "broken.cw", "thread main { x = ; }");

    let (code, out) = run(&["verify", &safe]);
    assert_eq!(code, 0, "{out}");
    assert!(out.starts_with("VERDICT Safe"), "{out}");

    let (code, out) = run(&["verify", &unsafe_]);
    assert_eq!(code, 1, "{out}");
    assert!(out.starts_with("VERDICT Unsafe"), "{out}");

    assert_eq!(run(&["verify", &broken]).0, 3);
    assert_eq!(run(&["verify", "/nonexistent/prog.cw"]).0, 3);
}

#[test]
fn loop_hits_the_step_bound() {
    let dir = tempfile::tempdir().unwrap();
    let p = write(&dir, "loop.cw", "local i: int; thread main { while (i >= 0) { i = i + 1; } }");
    let (code, out) = run(&["verify", "--max-steps", "50", "--max-states", "1000", &p]);
    assert_eq!(code, 2, "{out}");
}

#[test]
fn witness_to_stdout_validates() {
    let dir = tempfile::tempdir().unwrap();
    let p = write(&dir, "l1.cw", RUNNING_EXAMPLE);
    let (code, yaml) = run(&["gen-witness", "--mode", "protection", &p, "-o", "-", "--creation-time", "2024-01-01T00:00:00Z"]);
    assert_eq!(code, 0);
    assert!(yaml.contains("creation_time: 2024-01-01T00:00:00Z"), "{yaml}");
    let w = write(&dir, "l1.yml", &yaml);
    for sem in ["interleaving", "trace"] {
        let (code, out) = run(&["validate", "--semantics", sem, &p, &w]);
        assert_eq!((code, out.lines().next()), (0, Some("VERDICT Valid")));
    }
    let (code, out) = run(&["confirm", &p, &w]);
    assert_eq!(code, 0, "{out}");
}

#[test]
fn false_invariant_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let p = write(&dir, "l1.cw", RUNNING_EXAMPLE);
    let w = write(
        &dir,
        "bad.yml",
        "- entry_type: invariant_set
  metadata:
    format_version: '2.1'
    creation_time: 2024-01-01T00:00:00Z
    producer:
      name: test
      version: '0'
  content:
  - invariant:
      type: location_invariant
      location:
        file_name: l1.cw
        line: 6
        column: 3
      value: used == 1
      format: c_expression
",
    );
    let (code, out) = run(&["validate", &p, &w]);
    assert_eq!(code, 1, "{out}");
    assert!(out.starts_with("VERDICT Invalid"), "{out}");
    assert_eq!(run(&["validate", &p, "/nonexistent.yml"]).0, 3);
}

#[test]
fn split_output_parses() {
    let dir = tempfile::tempdir().unwrap();
    let p = write(&dir, "a.cw", standard("atomic_swap"));
    let (code, out) = run(&["split", &p]);
    assert_eq!(code, 0);
    let (q, _) = ghostwit_core::frontend::parse_program(&out).unwrap();
    assert!(!q.has_atomics());
}
