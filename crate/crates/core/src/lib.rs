//! Ghost correctness witnesses for a small concurrent imperative language.
//!
//! The crate contains the program model, a textual front end, two
//! execution semantics (interleavings and partially ordered traces), witness
//! instrumentation and validation, a thread-modular analysis that generates
//! witnesses, and the YAML witness codec.

pub mod analysis;
pub mod corpus;
pub mod difftest;
pub mod expr;
pub mod format;
pub mod frontend;
pub mod interleave;
pub mod program;
pub mod traces;
pub mod value;
pub mod witness;

pub use expr::{BinOp, Expr, Type, UnOp};
pub use program::{
    child_thread_id, validate_program, Action, AssertId, Edge, EdgeId, NodeId, Program, ThreadId,
    ThreadTemplate,
};
pub use value::Value;
