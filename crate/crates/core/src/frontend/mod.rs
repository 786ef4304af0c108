//! Textual syntax for programs (`.cw` files).
//!
//! ```text
//! global used: int = 0;
//! mutex m;
//! local tmp: int;
//! thread main { create(t1); lock(m); tmp = used; assert(tmp == 0); unlock(m); }
//! thread t1 { lock(m); used = 47; used = 0; unlock(m); }
//! ```
//!
//! Every node and edge of the parsed program gets a source location. Node
//! locations are the start of the statement leaving the node (or the closing
//! brace of the template for the final node); edge locations are the start
//! of the statement the edge came from.

mod lexer;
mod parser;
mod render;

use std::collections::BTreeMap;
use std::fmt;

use thiserror::Error;

use crate::program::{EdgeId, NodeId};

pub use parser::{parse_expr, parse_program};
pub use render::render_program;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Default)]
pub struct Loc {
    pub line: u32,
    pub column: u32,
}

impl fmt::Display for Loc {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}", self.line, self.column)
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Error)]
#[error("{loc}: {message}")]
pub struct ParseError {
    pub loc: Loc,
    pub message: String,
}

impl ParseError {
    pub fn new(loc: Loc, message: impl Into<String>) -> Self {
        ParseError {
            loc,
            message: message.into(),
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct SourceMap {
    pub nodes: BTreeMap<NodeId, Loc>,
    pub edges: BTreeMap<EdgeId, Loc>,
}

impl SourceMap {
    pub fn node(&self, n: NodeId) -> Option<Loc> {
        self.nodes.get(&n).copied()
    }

    pub fn edge(&self, e: EdgeId) -> Option<Loc> {
        self.edges.get(&e).copied()
    }

    pub fn node_at(&self, loc: Loc) -> Option<NodeId> {
        self.nodes.iter().find(|(_, l)| **l == loc).map(|(n, _)| *n)
    }

    pub fn edges_at(&self, loc: Loc) -> Vec<EdgeId> {
        self.edges
            .iter()
            .filter(|(_, l)| **l == loc)
            .map(|(e, _)| *e)
            .collect()
    }
}
