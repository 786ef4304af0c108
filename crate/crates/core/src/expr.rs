//! Pure expressions over local state.
//!
//! `Expr<V>` is generic over its variable representation: the public model
//! uses names, the explorer compiles to slot indices.

use std::collections::BTreeSet;
use std::fmt;

use thiserror::Error;

use crate::program::ThreadId;
use crate::value::Value;

pub type Name = String;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Type {
    Int,
    Bool,
}

impl fmt::Display for Type {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Type::Int => "int",
            Type::Bool => "bool",
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum UnOp {
    Neg,
    Not,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum BinOp {
    Add,
    Sub,
    Mul,
    Div,
    Rem,
    Eq,
    Ne,
    Lt,
    Le,
    Gt,
    Ge,
    And,
    Or,
    Implies,
}

impl BinOp {
    pub fn symbol(self) -> &'static str {
        match self {
            BinOp::Add => "+",
            BinOp::Sub => "-",
            BinOp::Mul => "*",
            BinOp::Div => "/",
            BinOp::Rem => "%",
            BinOp::Eq => "==",
            BinOp::Ne => "!=",
            BinOp::Lt => "<",
            BinOp::Le => "<=",
            BinOp::Gt => ">",
            BinOp::Ge => ">=",
            BinOp::And => "&&",
            BinOp::Or => "||",
            BinOp::Implies => "==>",
        }
    }

    /// Binding strength; higher binds tighter.
    pub fn precedence(self) -> u8 {
        match self {
            BinOp::Implies => 1,
            BinOp::Or => 2,
            BinOp::And => 3,
            BinOp::Eq | BinOp::Ne => 4,
            BinOp::Lt | BinOp::Le | BinOp::Gt | BinOp::Ge => 5,
            BinOp::Add | BinOp::Sub => 6,
            BinOp::Mul | BinOp::Div | BinOp::Rem => 7,
        }
    }

    pub fn right_assoc(self) -> bool {
        matches!(self, BinOp::Implies)
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Expr<V = Name> {
    Int(Value),
    Bool(bool),
    Var(V),
    /// The value of the global named by the enclosing read action.
    Global,
    /// `self == tid(...)`: thread ids are only comparable for equality.
    SelfIs(ThreadId),
    Unary(UnOp, Box<Expr<V>>),
    Binary(BinOp, Box<Expr<V>>, Box<Expr<V>>),
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum EvalError {
    #[error("division by zero in `{expr}`")]
    DivisionByZero { expr: String },
    #[error("unbound variable `{0}`")]
    Unbound(String),
    #[error("global placeholder evaluated without a global value")]
    NoGlobal,
    #[error("`self` evaluated outside of a thread")]
    NoSelf,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum TypeError {
    #[error("type mismatch: `{expr}` has type {found}, expected {expected}")]
    Mismatch {
        expr: String,
        expected: Type,
        found: Type,
    },
    #[error("undeclared identifier `{0}`")]
    Undeclared(String),
    #[error("global placeholder not allowed here")]
    Placeholder,
}

/// Evaluation context.
pub trait Env<V> {
    fn lookup(&self, var: &V) -> Option<Value>;

    fn placeholder(&self) -> Option<Value> {
        None
    }

    fn self_id(&self) -> Option<&ThreadId> {
        None
    }
}

/// Adapts a closure to [`Env`].
pub struct FnEnv<'a, F> {
    pub lookup: F,
    pub global: Option<Value>,
    pub self_id: Option<&'a ThreadId>,
}

impl<V, F: Fn(&V) -> Option<Value>> Env<V> for FnEnv<'_, F> {
    fn lookup(&self, var: &V) -> Option<Value> {
        (self.lookup)(var)
    }

    fn placeholder(&self) -> Option<Value> {
        self.global.clone()
    }

    fn self_id(&self) -> Option<&ThreadId> {
        self.self_id
    }
}

impl<V> Expr<V> {
    pub fn int(v: impl Into<Value>) -> Self {
        Expr::Int(v.into())
    }

    pub fn var(v: impl Into<V>) -> Self {
        Expr::Var(v.into())
    }

    pub fn not(e: Expr<V>) -> Self {
        Expr::Unary(UnOp::Not, Box::new(e))
    }

    pub fn bin(op: BinOp, l: Expr<V>, r: Expr<V>) -> Self {
        Expr::Binary(op, Box::new(l), Box::new(r))
    }

    pub fn and(l: Expr<V>, r: Expr<V>) -> Self {
        Expr::bin(BinOp::And, l, r)
    }

    pub fn implies(l: Expr<V>, r: Expr<V>) -> Self {
        Expr::bin(BinOp::Implies, l, r)
    }

    pub fn eq(l: Expr<V>, r: Expr<V>) -> Self {
        Expr::bin(BinOp::Eq, l, r)
    }

    /// Conjunction of all parts; `true` when empty.
    pub fn conjoin(parts: impl IntoIterator<Item = Expr<V>>) -> Self {
        let mut it = parts.into_iter();
        match it.next() {
            None => Expr::Bool(true),
            Some(first) => it.fold(first, Expr::and),
        }
    }

    pub fn map_vars<W>(&self, f: &mut impl FnMut(&V) -> W) -> Expr<W> {
        match self {
            Expr::Int(v) => Expr::Int(v.clone()),
            Expr::Bool(b) => Expr::Bool(*b),
            Expr::Var(v) => Expr::Var(f(v)),
            Expr::Global => Expr::Global,
            Expr::SelfIs(t) => Expr::SelfIs(t.clone()),
            Expr::Unary(op, e) => Expr::Unary(*op, Box::new(e.map_vars(f))),
            Expr::Binary(op, l, r) => {
                let l = l.map_vars(f);
                let r = r.map_vars(f);
                Expr::Binary(*op, Box::new(l), Box::new(r))
            }
        }
    }

    pub fn for_each_var<'a>(&'a self, f: &mut impl FnMut(&'a V)) {
        match self {
            Expr::Var(v) => f(v),
            Expr::Unary(_, e) => e.for_each_var(f),
            Expr::Binary(_, l, r) => {
                l.for_each_var(f);
                r.for_each_var(f);
            }
            Expr::Int(_) | Expr::Bool(_) | Expr::Global | Expr::SelfIs(_) => {}
        }
    }

    pub fn has_placeholder(&self) -> bool {
        match self {
            Expr::Global => true,
            Expr::Unary(_, e) => e.has_placeholder(),
            Expr::Binary(_, l, r) => l.has_placeholder() || r.has_placeholder(),
            _ => false,
        }
    }

    pub fn placeholder_count(&self) -> usize {
        match self {
            Expr::Global => 1,
            Expr::Unary(_, e) => e.placeholder_count(),
            Expr::Binary(_, l, r) => l.placeholder_count() + r.placeholder_count(),
            _ => 0,
        }
    }
}

impl<V: Clone> Expr<V> {
    /// Replaces variables for which `f` returns an expression.
    pub fn substitute(&self, f: &impl Fn(&V) -> Option<Expr<V>>) -> Expr<V> {
        match self {
            Expr::Var(v) => f(v).unwrap_or_else(|| Expr::Var(v.clone())),
            Expr::Unary(op, e) => Expr::Unary(*op, Box::new(e.substitute(f))),
            Expr::Binary(op, l, r) => {
                Expr::Binary(*op, Box::new(l.substitute(f)), Box::new(r.substitute(f)))
            }
            other => other.clone(),
        }
    }

    /// Replaces the global placeholder with `with`.
    pub fn fill_placeholder(&self, with: &Expr<V>) -> Expr<V> {
        match self {
            Expr::Global => with.clone(),
            Expr::Unary(op, e) => Expr::Unary(*op, Box::new(e.fill_placeholder(with))),
            Expr::Binary(op, l, r) => Expr::Binary(
                *op,
                Box::new(l.fill_placeholder(with)),
                Box::new(r.fill_placeholder(with)),
            ),
            other => other.clone(),
        }
    }
}

impl<V: Ord + Clone> Expr<V> {
    pub fn vars(&self) -> BTreeSet<V> {
        let mut out = BTreeSet::new();
        self.for_each_var(&mut |v| {
            out.insert(v.clone());
        });
        out
    }
}

impl<V: fmt::Display> Expr<V> {
    pub fn eval(&self, env: &impl Env<V>) -> Result<Value, EvalError> {
        Ok(match self {
            Expr::Int(v) => v.clone(),
            Expr::Bool(b) => Value::from_bool(*b),
            Expr::Var(v) => env
                .lookup(v)
                .ok_or_else(|| EvalError::Unbound(v.to_string()))?,
            Expr::Global => env.placeholder().ok_or(EvalError::NoGlobal)?,
            Expr::SelfIs(t) => Value::from_bool(env.self_id().ok_or(EvalError::NoSelf)? == t),
            Expr::Unary(UnOp::Neg, e) => e.eval(env)?.neg(),
            Expr::Unary(UnOp::Not, e) => Value::from_bool(!e.eval(env)?.truthy()),
            Expr::Binary(op, l, r) => {
                // short-circuiting connectives first
                match op {
                    BinOp::And => {
                        return Ok(Value::from_bool(
                            l.eval(env)?.truthy() && r.eval(env)?.truthy(),
                        ))
                    }
                    BinOp::Or => {
                        return Ok(Value::from_bool(
                            l.eval(env)?.truthy() || r.eval(env)?.truthy(),
                        ))
                    }
                    BinOp::Implies => {
                        return Ok(Value::from_bool(
                            !l.eval(env)?.truthy() || r.eval(env)?.truthy(),
                        ))
                    }
                    _ => {}
                }
                let a = l.eval(env)?;
                let b = r.eval(env)?;
                let div_err = || EvalError::DivisionByZero {
                    expr: self.to_string(),
                };
                match op {
                    BinOp::Add => a.add(&b),
                    BinOp::Sub => a.sub(&b),
                    BinOp::Mul => a.mul(&b),
                    BinOp::Div => a.div(&b).ok_or_else(div_err)?,
                    BinOp::Rem => a.rem(&b).ok_or_else(div_err)?,
                    BinOp::Eq => Value::from_bool(a == b),
                    BinOp::Ne => Value::from_bool(a != b),
                    BinOp::Lt => Value::from_bool(a < b),
                    BinOp::Le => Value::from_bool(a <= b),
                    BinOp::Gt => Value::from_bool(a > b),
                    BinOp::Ge => Value::from_bool(a >= b),
                    BinOp::And | BinOp::Or | BinOp::Implies => unreachable!(),
                }
            }
        })
    }

    /// Type of the expression. `placeholder` is the type of the global read
    /// by the enclosing action, if any.
    pub fn type_of(
        &self,
        lookup: &impl Fn(&V) -> Option<Type>,
        placeholder: Option<Type>,
    ) -> Result<Type, TypeError> {
        let expect = |e: &Expr<V>, want: Type| -> Result<(), TypeError> {
            let found = e.type_of(lookup, placeholder)?;
            if found != want {
                return Err(TypeError::Mismatch {
                    expr: e.to_string(),
                    expected: want,
                    found,
                });
            }
            Ok(())
        };
        Ok(match self {
            Expr::Int(_) => Type::Int,
            Expr::Bool(_) => Type::Bool,
            Expr::Var(v) => lookup(v).ok_or_else(|| TypeError::Undeclared(v.to_string()))?,
            Expr::Global => placeholder.ok_or(TypeError::Placeholder)?,
            Expr::SelfIs(_) => Type::Bool,
            Expr::Unary(UnOp::Neg, e) => {
                expect(e, Type::Int)?;
                Type::Int
            }
            Expr::Unary(UnOp::Not, e) => {
                expect(e, Type::Bool)?;
                Type::Bool
            }
            Expr::Binary(op, l, r) => match op {
                BinOp::Add | BinOp::Sub | BinOp::Mul | BinOp::Div | BinOp::Rem => {
                    expect(l, Type::Int)?;
                    expect(r, Type::Int)?;
                    Type::Int
                }
                BinOp::Lt | BinOp::Le | BinOp::Gt | BinOp::Ge => {
                    expect(l, Type::Int)?;
                    expect(r, Type::Int)?;
                    Type::Bool
                }
                BinOp::Eq | BinOp::Ne => {
                    let t = l.type_of(lookup, placeholder)?;
                    expect(r, t)?;
                    Type::Bool
                }
                BinOp::And | BinOp::Or | BinOp::Implies => {
                    expect(l, Type::Bool)?;
                    expect(r, Type::Bool)?;
                    Type::Bool
                }
            },
        })
    }
}

/// Rendering options shared by the DSL printer and the C-expression emitter.
#[derive(Clone, Copy)]
struct Style<'a> {
    placeholder: Option<&'a str>,
    c_implication: bool,
}

/// `min` is the weakest precedence that may appear without parentheses.
fn write_expr<V: fmt::Display>(e: &Expr<V>, style: Style<'_>, min: u8, out: &mut String) {
    use std::fmt::Write;
    match e {
        Expr::Int(v) => {
            if v < &Value::ZERO && min > 0 {
                let _ = write!(out, "({v})");
            } else {
                let _ = write!(out, "{v}");
            }
        }
        Expr::Bool(b) => out.push_str(if *b { "true" } else { "false" }),
        Expr::Var(v) => {
            let _ = write!(out, "{v}");
        }
        Expr::Global => out.push_str(style.placeholder.unwrap_or("$global")),
        Expr::SelfIs(t) => {
            let paren = BinOp::Eq.precedence() < min;
            if paren {
                out.push('(');
            }
            let _ = write!(out, "self == {}", t.to_tid_literal());
            if paren {
                out.push(')');
            }
        }
        Expr::Unary(op, inner) => {
            out.push(match op {
                UnOp::Neg => '-',
                UnOp::Not => '!',
            });
            if matches!(**inner, Expr::Int(_)) {
                // `-(3)` stays a negation; `-3` would read back as a literal
                out.push('(');
                write_expr(inner, style, 0, out);
                out.push(')');
            } else {
                write_expr(inner, style, 8, out);
            }
        }
        Expr::Binary(BinOp::Implies, l, r) if style.c_implication => {
            let paren = BinOp::Or.precedence() < min;
            if paren {
                out.push('(');
            }
            out.push_str("!(");
            write_expr(l, style, 0, out);
            out.push_str(") || (");
            write_expr(r, style, 0, out);
            out.push(')');
            if paren {
                out.push(')');
            }
        }
        Expr::Binary(op, l, r) => {
            let p = op.precedence();
            let paren = p < min;
            if paren {
                out.push('(');
            }
            let (lmin, rmin) = if op.right_assoc() { (p + 1, p) } else { (p, p + 1) };
            write_expr(l, style, lmin, out);
            let _ = write!(out, " {} ", op.symbol());
            write_expr(r, style, rmin, out);
            if paren {
                out.push(')');
            }
        }
    }
}

impl<V: fmt::Display> Expr<V> {
    /// DSL text, with the placeholder printed as `global`.
    pub fn render_with_global(&self, global: &str) -> String {
        let mut s = String::new();
        write_expr(
            self,
            Style {
                placeholder: Some(global),
                c_implication: false,
            },
            0,
            &mut s,
        );
        s
    }

    /// C-compatible text: implication is spelled `!(A) || (B)`.
    pub fn to_c_expression(&self) -> String {
        let mut s = String::new();
        write_expr(
            self,
            Style {
                placeholder: None,
                c_implication: true,
            },
            0,
            &mut s,
        );
        s
    }
}

impl<V: fmt::Display> fmt::Display for Expr<V> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mut s = String::new();
        write_expr(
            self,
            Style {
                placeholder: None,
                c_implication: false,
            },
            0,
            &mut s,
        );
        f.write_str(&s)
    }
}
