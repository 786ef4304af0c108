//! YAML witness exchange format.
//!
//! A document is a list of entries. Invariants go into an `invariant_set`
//! entry, ghost declarations and updates into a `ghost_instrumentation`
//! entry. Locations are DSL source positions.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::expr::{Expr, Type};
use crate::frontend::{parse_expr, Loc, SourceMap};
use crate::program::{Action, EdgeId, Program};
use crate::witness::{GhostGlobal, GhostUpdate, GhostWitness};

pub const FORMAT_VERSION: &str = "2.1";
const C_EXPRESSION: &str = "c_expression";
const GLOBAL: &str = "global";
const LOCATION_INVARIANT: &str = "location_invariant";

#[derive(Clone, Debug, PartialEq, Eq, Error)]
pub enum FormatError {
    #[error("ghost locals cannot be expressed in the exchange format")]
    GhostLocalsUnsupported,
    #[error("no source location for {0}")]
    MissingLocation(String),
    #[error("unknown location {0}")]
    UnknownLocation(String),
    #[error("update of undeclared ghost {0}")]
    UndeclaredGhost(String),
    #[error("expression `{text}`: {message}")]
    ExpressionSyntax { text: String, message: String },
    #[error("malformed document: {0}")]
    Schema(String),
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Producer {
    pub name: String,
    pub version: String,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Metadata {
    pub format_version: String,
    pub creation_time: String,
    pub producer: Producer,
}

impl Default for Metadata {
    fn default() -> Self {
        Metadata {
            format_version: FORMAT_VERSION.into(),
            creation_time: "1970-01-01T00:00:00Z".into(),
            producer: Producer {
                name: "ghostwit".into(),
                version: env!("CARGO_PKG_VERSION").into(),
            },
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Location {
    pub file_name: String,
    pub line: u32,
    pub column: u32,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Invariant {
    #[serde(rename = "type")]
    pub kind: String,
    pub location: Location,
    pub value: String,
    pub format: String,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct InvariantItem {
    pub invariant: Invariant,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Initial {
    pub value: String,
    pub format: String,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct GhostVariable {
    pub name: String,
    #[serde(rename = "type")]
    pub ty: String,
    pub scope: String,
    pub initial: Initial,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Update {
    pub variable: String,
    pub value: String,
    pub format: String,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct GhostUpdateItem {
    pub location: Location,
    pub updates: Vec<Update>,
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct GhostContent {
    pub ghost_variables: Vec<GhostVariable>,
    pub ghost_updates: Vec<GhostUpdateItem>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "entry_type", rename_all = "snake_case")]
pub enum Entry {
    InvariantSet {
        metadata: Metadata,
        content: Vec<InvariantItem>,
    },
    GhostInstrumentation {
        metadata: Metadata,
        content: GhostContent,
    },
}

pub type WitnessDocument = Vec<Entry>;

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct EmitOptions {
    pub file_name: String,
    pub metadata: Metadata,
    /// Spell implications as `!(A) || (B)`.
    pub c_implication: bool,
}

impl Default for EmitOptions {
    fn default() -> Self {
        EmitOptions {
            file_name: "program.cw".into(),
            metadata: Metadata::default(),
            c_implication: false,
        }
    }
}

fn type_name(t: Type) -> &'static str {
    match t {
        Type::Int => "int",
        Type::Bool => "bool",
    }
}

fn parse_type(s: &str) -> Option<Type> {
    match s.trim() {
        "int" | "unsigned int" | "long" => Some(Type::Int),
        "bool" | "_Bool" => Some(Type::Bool),
        _ => None,
    }
}

fn text(e: &Expr, opts: &EmitOptions) -> String {
    if opts.c_implication {
        e.to_c_expression()
    } else {
        e.to_string()
    }
}

/// Boolean literals are written as `1`/`0`.
fn value_text(e: &Expr, opts: &EmitOptions) -> String {
    match e {
        Expr::Bool(b) => if *b { "1" } else { "0" }.to_string(),
        other => text(other, opts),
    }
}

/// Update locations resolve to statements of these kinds.
fn updatable(a: &Action) -> bool {
    matches!(
        a,
        Action::Lock(_)
            | Action::Unlock(_)
            | Action::Create(_)
            | Action::LocalUpdate { .. }
            | Action::GlobalRead { .. }
            | Action::GlobalWrite { .. }
            | Action::Atomic(_)
    )
}

fn location(opts: &EmitOptions, l: Loc) -> Location {
    Location {
        file_name: opts.file_name.clone(),
        line: l.line,
        column: l.column,
    }
}

pub fn to_document(p: &Program, w: &GhostWitness, sm: &SourceMap, opts: &EmitOptions) -> Result<WitnessDocument, FormatError> {
    if !w.ghost_locals.is_empty() {
        return Err(FormatError::GhostLocalsUnsupported);
    }
    let mut content = Vec::new();
    for (n, e) in &w.invariants {
        let l = sm
            .node(*n)
            .filter(|l| sm.node_at(*l) == Some(*n))
            .ok_or_else(|| FormatError::MissingLocation(format!("node {n}")))?;
        content.push(InvariantItem {
            invariant: Invariant {
                kind: LOCATION_INVARIANT.into(),
                location: location(opts, l),
                value: text(e, opts),
                format: C_EXPRESSION.into(),
            },
        });
    }
    let mut ghost_updates = Vec::new();
    for (id, ups) in &w.updates {
        let l = sm
            .edge(*id)
            .filter(|l| update_edges_at(p, sm, *l) == [*id])
            .ok_or_else(|| FormatError::MissingLocation(format!("edge {}:{}", id.template, id.index)))?;
        ghost_updates.push(GhostUpdateItem {
            location: location(opts, l),
            updates: ups
                .iter()
                .map(|u| Update {
                    variable: u.target.clone(),
                    value: value_text(&u.value, opts),
                    format: C_EXPRESSION.into(),
                })
                .collect(),
        });
    }
    let ghost = GhostContent {
        ghost_variables: w
            .ghost_globals
            .iter()
            .map(|g| GhostVariable {
                name: g.name.clone(),
                ty: type_name(g.ty).into(),
                scope: GLOBAL.into(),
                initial: Initial {
                    value: value_text(&g.init, opts),
                    format: C_EXPRESSION.into(),
                },
            })
            .collect(),
        ghost_updates,
    };
    let has_ghosts = !ghost.ghost_variables.is_empty() || !ghost.ghost_updates.is_empty();
    let mut doc = Vec::new();
    if !content.is_empty() || !has_ghosts {
        doc.push(Entry::InvariantSet {
            metadata: opts.metadata.clone(),
            content,
        });
    }
    if has_ghosts {
        doc.push(Entry::GhostInstrumentation {
            metadata: opts.metadata.clone(),
            content: ghost,
        });
    }
    Ok(doc)
}

fn update_edges_at(p: &Program, sm: &SourceMap, l: Loc) -> Vec<EdgeId> {
    sm.edges_at(l).into_iter().filter(|e| updatable(&p.edge(*e).action)).collect()
}

pub fn emit_witness(p: &Program, w: &GhostWitness, sm: &SourceMap, opts: &EmitOptions) -> Result<String, FormatError> {
    let doc = to_document(p, w, sm, opts)?;
    serde_yaml::to_string(&doc).map_err(|e| FormatError::Schema(e.to_string()))
}

fn expr(text: &str) -> Result<Expr, FormatError> {
    parse_expr(text).map_err(|e| FormatError::ExpressionSyntax {
        text: text.to_string(),
        message: e.message,
    })
}

/// `0`/`1` become boolean literals when the target is boolean.
fn coerce(e: Expr, ty: Type) -> Expr {
    match (&e, ty) {
        (Expr::Int(v), Type::Bool) if v.is_zero() => Expr::Bool(false),
        (Expr::Int(v), Type::Bool) if *v == crate::value::Value::ONE => Expr::Bool(true),
        _ => e,
    }
}

fn check_constant(field: &str, got: &str, want: &str) -> Result<(), FormatError> {
    if got == want {
        Ok(())
    } else {
        Err(FormatError::Schema(format!("{field} must be `{want}`, found `{got}`")))
    }
}

fn loc_of(l: &Location) -> Loc {
    Loc {
        line: l.line,
        column: l.column,
    }
}

pub fn from_document(doc: &WitnessDocument, p: &Program, sm: &SourceMap) -> Result<GhostWitness, FormatError> {
    let mut w = GhostWitness::default();
    let mut types: BTreeMap<String, Type> = BTreeMap::new();
    for entry in doc {
        if let Entry::GhostInstrumentation { content, .. } = entry {
            for v in &content.ghost_variables {
                check_constant("scope", &v.scope, GLOBAL)?;
                check_constant("format", &v.initial.format, C_EXPRESSION)?;
                let ty = parse_type(&v.ty).ok_or_else(|| FormatError::Schema(format!("unsupported type `{}`", v.ty)))?;
                types.insert(v.name.clone(), ty);
                w.ghost_globals.push(GhostGlobal {
                    name: v.name.clone(),
                    ty,
                    init: coerce(expr(&v.initial.value)?, ty),
                });
            }
        }
    }
    for entry in doc {
        match entry {
            Entry::InvariantSet { content, .. } => {
                for item in content {
                    let inv = &item.invariant;
                    check_constant("type", &inv.kind, LOCATION_INVARIANT)?;
                    check_constant("format", &inv.format, C_EXPRESSION)?;
                    let l = loc_of(&inv.location);
                    let n = sm.node_at(l).ok_or_else(|| FormatError::UnknownLocation(l.to_string()))?;
                    let e = expr(&inv.value)?;
                    // several invariants at one location hold together
                    let e = match w.invariants.remove(&n) {
                        Some(old) => Expr::and(old, e),
                        None => e,
                    };
                    w.invariants.insert(n, e);
                }
            }
            Entry::GhostInstrumentation { content, .. } => {
                for item in &content.ghost_updates {
                    let l = loc_of(&item.location);
                    let id = match update_edges_at(p, sm, l).as_slice() {
                        [id] => *id,
                        _ => return Err(FormatError::UnknownLocation(l.to_string())),
                    };
                    for u in &item.updates {
                        check_constant("format", &u.format, C_EXPRESSION)?;
                        let ty = *types
                            .get(&u.variable)
                            .ok_or_else(|| FormatError::UndeclaredGhost(u.variable.clone()))?;
                        w.updates.entry(id).or_default().push(GhostUpdate {
                            target: u.variable.clone(),
                            value: coerce(expr(&u.value)?, ty),
                        });
                    }
                }
            }
        }
    }
    Ok(w)
}

pub fn parse_witness(text: &str, p: &Program, sm: &SourceMap) -> Result<GhostWitness, FormatError> {
    let doc: WitnessDocument = serde_yaml::from_str(text).map_err(|e| FormatError::Schema(e.to_string()))?;
    from_document(&doc, p, sm)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::frontend::parse_program;
    use crate::witness::tests::{running_witness, RUNNING_EXAMPLE};

    #[test]
    fn running_example_document() {
        let (p, sm) = parse_program(RUNNING_EXAMPLE).unwrap();
        let w = running_witness(&p);
        let text = emit_witness(&p, &w, &sm, &EmitOptions::default()).unwrap();
        assert!(text.contains("value: g == 0 ==> used == 0"), "{text}");
        assert!(text.starts_with("- entry_type: invariant_set\n  metadata:\n"), "{text}");
        assert_eq!(text.matches("- location:").count(), 4);
        assert_eq!(parse_witness(&text, &p, &sm).unwrap(), w);
        assert_eq!(emit_witness(&p, &w, &sm, &EmitOptions::default()).unwrap(), text);
    }

    #[test]
    fn c_implication_spelling() {
        let (p, sm) = parse_program(RUNNING_EXAMPLE).unwrap();
        let opts = EmitOptions {
            c_implication: true,
            ..Default::default()
        };
        let text = emit_witness(&p, &running_witness(&p), &sm, &opts).unwrap();
        assert!(text.contains("value: '!(g == 0) || (used == 0)'"), "{text}");
        let back = parse_witness(&text, &p, &sm).unwrap();
        assert_eq!(back.invariants.values().next().unwrap(), &parse_expr("!(g == 0) || used == 0").unwrap());
    }

    #[test]
    fn empty_witness() {
        let (p, sm) = parse_program(RUNNING_EXAMPLE).unwrap();
        let doc = to_document(&p, &GhostWitness::default(), &sm, &EmitOptions::default()).unwrap();
        assert_eq!(doc.len(), 1);
        assert!(matches!(&doc[0], Entry::InvariantSet { content, .. } if content.is_empty()));
    }

    #[test]
    fn ghosts_only() {
        let (p, sm) = parse_program(RUNNING_EXAMPLE).unwrap();
        let w = GhostWitness {
            ghost_globals: vec![GhostGlobal {
                name: "h".into(),
                ty: Type::Bool,
                init: Expr::Bool(false),
            }],
            ..Default::default()
        };
        let doc = to_document(&p, &w, &sm, &EmitOptions::default()).unwrap();
        assert_eq!(doc.len(), 1);
        assert!(matches!(&doc[0], Entry::GhostInstrumentation { .. }));
        let text = emit_witness(&p, &w, &sm, &EmitOptions::default()).unwrap();
        assert!(text.contains("type: bool\n      scope: global\n      initial:\n        value: '0'\n        format: c_expression"), "{text}");
        assert_eq!(parse_witness(&text, &p, &sm).unwrap(), w);
    }

    #[test]
    fn ghost_locals_are_rejected() {
        let (p, sm) = parse_program(RUNNING_EXAMPLE).unwrap();
        let mut w = running_witness(&p);
        w.ghost_locals.push(crate::program::LocalDecl {
            name: "x".into(),
            ty: Type::Int,
        });
        assert_eq!(emit_witness(&p, &w, &sm, &EmitOptions::default()), Err(FormatError::GhostLocalsUnsupported));
    }

    #[test]
    fn unknown_line() {
        let (p, sm) = parse_program(RUNNING_EXAMPLE).unwrap();
        let text = emit_witness(&p, &running_witness(&p), &sm, &EmitOptions::default()).unwrap();
        let line = sm.node(*running_witness(&p).invariants.keys().next().unwrap()).unwrap().line;
        let bad = text.replacen(&format!("line: {line}\n"), "line: 999\n", 1);
        assert_eq!(parse_witness(&bad, &p, &sm), Err(FormatError::UnknownLocation(format!("999:3"))));
    }

    #[test]
    fn undeclared_update_target() {
        let (p, sm) = parse_program(RUNNING_EXAMPLE).unwrap();
        let text = emit_witness(&p, &running_witness(&p), &sm, &EmitOptions::default()).unwrap();
        let bad = text.replace("variable: g\n", "variable: h\n");
        assert_eq!(parse_witness(&bad, &p, &sm), Err(FormatError::UndeclaredGhost("h".into())));
    }

    #[test]
    fn wrong_scope() {
        let (p, sm) = parse_program(RUNNING_EXAMPLE).unwrap();
        let text = emit_witness(&p, &running_witness(&p), &sm, &EmitOptions::default()).unwrap();
        let bad = text.replace("scope: global", "scope: local");
        assert!(matches!(parse_witness(&bad, &p, &sm), Err(FormatError::Schema(_))));
    }

    #[test]
    fn bad_expression() {
        let (p, sm) = parse_program(RUNNING_EXAMPLE).unwrap();
        let text = emit_witness(&p, &running_witness(&p), &sm, &EmitOptions::default()).unwrap();
        let bad = text.replace("value: g == 0 ==> used == 0", "value: '*p == 0'");
        assert!(matches!(parse_witness(&bad, &p, &sm), Err(FormatError::ExpressionSyntax { .. })));
    }
}
