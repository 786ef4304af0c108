//! Thread-modular analyses and witness generation.

pub mod interval;
pub mod lockset;
pub mod protection;

pub use interval::{Bound, Interval};
pub use lockset::{compute_locksets, Lockset};
pub use protection::{
    infer_protection, run as run_analysis, run_mutexmeet_analysis, run_protection_analysis, single_threaded_nodes, Mode, MutexInvariant,
    NodeFacts, ProtectionResult,
};
pub mod generate;

pub use generate::{analyze_and_generate, bound_expr, generate_witness};
