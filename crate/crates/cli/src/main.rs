use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, Context};
use clap::{Args, Parser, Subcommand, ValueEnum};

use ghostwit_core::analysis::{analyze_and_generate, run_analysis, Mode};
use ghostwit_core::difftest;
use ghostwit_core::format::{emit_witness, parse_witness, EmitOptions, Metadata};
use ghostwit_core::frontend::{parse_program, render_program, SourceMap};
use ghostwit_core::interleave::{explore_with, format_interleaving, Bounds, ExploreOptions, Verdict};
use ghostwit_core::traces::{trace_safety_with, TraceBounds, TraceVerdict};
use ghostwit_core::witness::{
    confirm, instrument, split, validate_interleaving, validate_local_trace, Counterexample, GhostWitness, Validation,
    WitnessVerdict,
};
use ghostwit_core::Program;

#[derive(Parser)]
#[command(name = "ghostwit", version, about = "Ghost witnesses for concurrent programs")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone, Copy)]
struct BoundArgs {
    #[arg(long, default_value_t = 10_000)]
    max_steps: usize,
    #[arg(long, default_value_t = 1_000_000)]
    max_states: usize,
    #[arg(long, default_value_t = 256)]
    max_events: usize,
    /// Worker threads for state exploration.
    #[arg(long, default_value_t = 1)]
    jobs: usize,
}

impl BoundArgs {
    fn explore(&self) -> ExploreOptions {
        ExploreOptions {
            bounds: Bounds {
                max_steps: self.max_steps,
                max_states: self.max_states,
            },
            all_violations: false,
            jobs: self.jobs.max(1),
        }
    }

    fn traces(&self) -> TraceBounds {
        TraceBounds {
            max_events: self.max_events,
            ..Default::default()
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum ModeArg {
    Protection,
    Mutexmeet,
}

impl From<ModeArg> for Mode {
    fn from(m: ModeArg) -> Mode {
        match m {
            ModeArg::Protection => Mode::Protection,
            ModeArg::Mutexmeet => Mode::MutexMeet,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum Semantics {
    Interleaving,
    Trace,
}

#[derive(Subcommand)]
enum Command {
    /// Explore every interleaving.
    Verify {
        program: PathBuf,
        #[command(flatten)]
        bounds: BoundArgs,
        /// Report every violated assert.
        #[arg(long)]
        all_violations: bool,
    },
    /// Enumerate global traces of a program with dedicated mutexes.
    Traces {
        program: PathBuf,
        #[command(flatten)]
        bounds: BoundArgs,
    },
    /// Print the result of an analysis.
    Analyze {
        program: PathBuf,
        #[arg(long, value_enum, default_value = "mutexmeet")]
        mode: ModeArg,
    },
    /// Generate a witness from an analysis.
    GenWitness {
        program: PathBuf,
        #[arg(long, value_enum, default_value = "mutexmeet")]
        mode: ModeArg,
        #[arg(long)]
        no_ghosts: bool,
        /// Defaults to `<program>.witness.yml`; `-` writes to stdout.
        #[arg(short, long)]
        output: Option<PathBuf>,
        /// ISO-8601 timestamp for the metadata; defaults to now.
        #[arg(long)]
        creation_time: Option<String>,
        /// Spell implications as `!(A) || (B)`.
        #[arg(long)]
        c_implication: bool,
    },
    /// Print the program instrumented with a witness.
    Instrument { program: PathBuf, witness: PathBuf },
    /// Print the program with atomic blocks turned into critical sections.
    Split { program: PathBuf },
    /// Check a witness.
    Validate {
        program: PathBuf,
        witness: PathBuf,
        #[arg(long, value_enum, default_value = "interleaving")]
        semantics: Semantics,
        #[command(flatten)]
        bounds: BoundArgs,
    },
    /// Check only the witness's own invariants.
    Confirm {
        program: PathBuf,
        witness: PathBuf,
        #[command(flatten)]
        bounds: BoundArgs,
    },
    /// Run the differential suites on generated programs.
    Difftest {
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 50)]
        count: usize,
    },
}

/// Exit codes.
const OK: u8 = 0;
const NEGATIVE: u8 = 1;
const BOUND: u8 = 2;
const INPUT: u8 = 3;
const INTERNAL: u8 = 4;

struct Failure {
    code: u8,
    error: anyhow::Error,
}

fn input(error: anyhow::Error) -> Failure {
    Failure { code: INPUT, error }
}

type CliResult = Result<u8, Failure>;

fn load_program(path: &Path) -> Result<(Program, SourceMap), Failure> {
    let text = fs::read_to_string(path)
        .with_context(|| format!("reading {}", path.display()))
        .map_err(input)?;
    parse_program(&text).map_err(|e| input(anyhow!("{}:{e}", path.display())))
}

fn load_witness(path: &Path, p: &Program, sm: &SourceMap) -> Result<GhostWitness, Failure> {
    let text = fs::read_to_string(path)
        .with_context(|| format!("reading {}", path.display()))
        .map_err(input)?;
    parse_witness(&text, p, sm).map_err(|e| input(anyhow!("{}: {e}", path.display())))
}

fn verdict_code(kind: &str) -> u8 {
    match kind {
        "Safe" | "Valid" | "Confirmed" => OK,
        "BoundExceeded" => BOUND,
        _ => NEGATIVE,
    }
}

fn list<T: std::fmt::Display>(items: impl IntoIterator<Item = T>) -> String {
    items.into_iter().map(|a| a.to_string()).collect::<Vec<_>>().join(" ")
}

fn verify(program: &Path, bounds: BoundArgs, all_violations: bool) -> CliResult {
    let (p, sm) = load_program(program)?;
    let v = explore_with(
        &p,
        ExploreOptions {
            all_violations,
            ..bounds.explore()
        },
    );
    println!("VERDICT {}", v.kind());
    let st = v.stats();
    println!(
        "states {} transitions {} depth {} deadlocks {}",
        st.states, st.transitions, st.depth, st.deadlocks
    );
    match &v {
        Verdict::Unsafe { asserts, first, .. } => {
            println!("violated {}", list(asserts.iter().map(|a| &a.0)));
            println!("counterexample (violates {}):", first.assert.0);
            print!("{}", format_interleaving(&p, Some(&sm), &first.interleaving));
        }
        Verdict::EvalError { error, interleaving, .. } => {
            println!("error {error}");
            print!("{}", format_interleaving(&p, Some(&sm), interleaving));
        }
        _ => {}
    }
    Ok(verdict_code(v.kind()))
}

fn traces(program: &Path, bounds: BoundArgs) -> CliResult {
    let (p, sm) = load_program(program)?;
    let v = trace_safety_with(&p, bounds.traces(), false).map_err(|e| input(e.into()))?;
    println!("VERDICT {}", v.kind());
    match &v {
        TraceVerdict::Safe(st) | TraceVerdict::BoundExceeded(st) => {
            println!("traces {} max_events {}", st.traces, st.max_events)
        }
        TraceVerdict::Unsafe { asserts, assert, witness, .. } => {
            println!("violated {}", list(asserts.iter().map(|a| &a.0)));
            println!("local trace (violates {}):", assert.0);
            print!("{}", witness.trace.dump(&p, Some(&sm)));
        }
        TraceVerdict::EvalError { error, trace, .. } => {
            println!("error {error}");
            print!("{}", trace.dump(&p, Some(&sm)));
        }
    }
    Ok(verdict_code(v.kind()))
}

fn gen_witness(
    program: &Path,
    mode: Mode,
    ghosts: bool,
    output: Option<PathBuf>,
    creation_time: Option<String>,
    c_implication: bool,
) -> CliResult {
    let (p, sm) = load_program(program)?;
    let (_, w) = analyze_and_generate(&p, mode, ghosts);
    let opts = EmitOptions {
        file_name: program.file_name().map(|f| f.to_string_lossy().into_owned()).unwrap_or_default(),
        metadata: Metadata {
            creation_time: creation_time
                .unwrap_or_else(|| chrono::Utc::now().to_rfc3339_opts(chrono::SecondsFormat::Secs, true)),
            ..Metadata::default()
        },
        c_implication,
    };
    let text = emit_witness(&p, &w, &sm, &opts).map_err(|e| Failure {
        code: INTERNAL,
        error: e.into(),
    })?;
    let out = output.unwrap_or_else(|| program.with_extension("witness.yml"));
    if out.as_os_str() == "-" {
        print!("{text}");
    } else {
        fs::write(&out, text)
            .with_context(|| format!("writing {}", out.display()))
            .map_err(input)?;
        println!("wrote {}", out.display());
    }
    Ok(OK)
}

fn report(v: &Validation, sm: &SourceMap) -> u8 {
    println!("VERDICT {}", v.verdict.kind());
    match &v.verdict {
        WitnessVerdict::Invalid { witness, original } => {
            println!("witness {}", list(witness.iter().map(|a| &a.0)));
            println!("original {}", list(original.iter().map(|a| &a.0)));
        }
        WitnessVerdict::Rejected { witness } => println!("witness {}", list(witness.iter().map(|a| &a.0))),
        WitnessVerdict::EvalError(e) => println!("error {e}"),
        _ => {}
    }
    let ism = v.instrumented.clone().with_source_map(sm).source_map;
    match &v.counterexample {
        Some(Counterexample::Interleaving(i)) => {
            println!("counterexample:");
            print!("{}", format_interleaving(&v.checked, Some(&ism), i));
        }
        Some(Counterexample::Trace(t)) => {
            println!("local trace:");
            print!("{}", t.trace.dump(&v.checked, Some(&ism)));
        }
        None => {}
    }
    verdict_code(v.verdict.kind())
}

fn dispatch(cli: Cli) -> CliResult {
    match cli.command {
        Command::Verify {
            program,
            bounds,
            all_violations,
        } => verify(&program, bounds, all_violations),
        Command::Traces { program, bounds } => traces(&program, bounds),
        Command::Analyze { program, mode } => {
            let (p, _) = load_program(&program)?;
            print!("{}", run_analysis(&p, mode.into()).dump());
            Ok(OK)
        }
        Command::GenWitness {
            program,
            mode,
            no_ghosts,
            output,
            creation_time,
            c_implication,
        } => gen_witness(&program, mode.into(), !no_ghosts, output, creation_time, c_implication),
        Command::Instrument { program, witness } => {
            let (p, sm) = load_program(&program)?;
            let w = load_witness(&witness, &p, &sm)?;
            let ip = instrument(&p, &w).map_err(|e| input(e.into()))?;
            print!("{}", render_program(&ip.program));
            Ok(OK)
        }
        Command::Split { program } => {
            let (p, _) = load_program(&program)?;
            print!("{}", render_program(&split(&p)));
            Ok(OK)
        }
        Command::Validate {
            program,
            witness,
            semantics,
            bounds,
        } => {
            let (p, sm) = load_program(&program)?;
            let w = load_witness(&witness, &p, &sm)?;
            let v = match semantics {
                Semantics::Interleaving => validate_interleaving(&p, &w, bounds.explore()),
                Semantics::Trace => validate_local_trace(&p, &w, bounds.traces()),
            }
            .map_err(|e| input(e.into()))?;
            Ok(report(&v, &sm))
        }
        Command::Confirm {
            program,
            witness,
            bounds,
        } => {
            let (p, sm) = load_program(&program)?;
            let w = load_witness(&witness, &p, &sm)?;
            let v = confirm(&p, &w, bounds.explore()).map_err(|e| input(e.into()))?;
            Ok(report(&v, &sm))
        }
        Command::Difftest { seed, count } => {
            let reports = difftest::run_all(seed, count);
            let ok = reports.iter().all(|r| r.ok());
            println!("VERDICT {}", if ok { "Agree" } else { "Disagree" });
            for r in &reports {
                println!("{}", r.summary());
                for f in r.failures.iter().take(3) {
                    println!("  {}", f.replace('\n', "\n  "));
                }
            }
            Ok(if ok { OK } else { NEGATIVE })
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let code = match std::panic::catch_unwind(|| dispatch(cli)) {
        Ok(Ok(code)) => code,
        Ok(Err(f)) => {
            eprintln!("error: {:#}", f.error);
            f.code
        }
        Err(_) => INTERNAL,
    };
    ExitCode::from(code)
}
