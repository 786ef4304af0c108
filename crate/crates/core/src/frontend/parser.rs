use std::collections::{BTreeMap, BTreeSet};

use super::lexer::{tokenize, Tok, Token};
use super::{Loc, ParseError, SourceMap};
use crate::expr::{BinOp, Expr, Name, Type, UnOp};
use crate::program::{
    validate_program, Action, AssertId, EdgeId, GlobalDecl, LocalDecl, NodeId, Program,
    ThreadId, ThreadTemplate, SELF,
};
use crate::value::Value;

type PResult<T> = Result<T, ParseError>;

enum Stmt {
    Simple(Action, Loc),
    If {
        cond: Expr,
        then: Vec<Stmt>,
        els: Vec<Stmt>,
        loc: Loc,
    },
    While {
        cond: Expr,
        body: Vec<Stmt>,
        loc: Loc,
        head_loc: Loc,
    },
}

struct Parser {
    toks: Vec<Token>,
    pos: usize,
    prog: Program,
    sm: SourceMap,
    next_node: u32,
    assert_ids: BTreeSet<AssertId>,
    creates: Vec<(Name, Loc)>,
}

/// Parses a whole program and checks it.
pub fn parse_program(text: &str) -> Result<(Program, SourceMap), ParseError> {
    let toks = tokenize(text)?;
    let mut p = Parser {
        toks,
        pos: 0,
        prog: Program::default(),
        sm: SourceMap::default(),
        next_node: 0,
        assert_ids: BTreeSet::new(),
        creates: Vec::new(),
    };
    if matches!(p.peek(), Tok::Eof) {
        return Err(p.err("expected program"));
    }
    p.decls()?;
    while !matches!(p.peek(), Tok::Eof) {
        p.template()?;
    }
    if p.prog.templates.is_empty() {
        return Err(p.err("expected program"));
    }
    for (name, loc) in &p.creates {
        if p.prog.template(name).is_none() {
            return Err(ParseError::new(*loc, format!("unknown thread template {name}")));
        }
    }
    if p.prog.main().is_none() {
        return Err(ParseError::new(Loc { line: 1, column: 1 }, "no main"));
    }
    if let Some(issue) = validate_program(&p.prog).into_iter().next() {
        return Err(ParseError::new(Loc { line: 1, column: 1 }, issue.to_string()));
    }
    Ok((p.prog, p.sm))
}

/// Parses a standalone expression. Identifiers become variables without
/// any declaration check.
pub fn parse_expr(text: &str) -> Result<Expr, ParseError> {
    let toks = tokenize(text)?;
    let mut p = Parser {
        toks,
        pos: 0,
        prog: Program::default(),
        sm: SourceMap::default(),
        next_node: 0,
        assert_ids: BTreeSet::new(),
        creates: Vec::new(),
    };
    let e = p.expr()?;
    if !matches!(p.peek(), Tok::Eof) {
        return Err(p.err(format!("unexpected {}", p.peek())));
    }
    Ok(e)
}

impl Parser {
    fn peek(&self) -> &Tok {
        &self.toks[self.pos].tok
    }

    fn loc(&self) -> Loc {
        self.toks[self.pos].loc
    }

    fn bump(&mut self) -> Token {
        let t = self.toks[self.pos].clone();
        if self.pos + 1 < self.toks.len() {
            self.pos += 1;
        }
        t
    }

    fn err(&self, msg: impl Into<String>) -> ParseError {
        ParseError::new(self.loc(), msg)
    }

    fn is_punct(&self, p: &str) -> bool {
        matches!(self.peek(), Tok::Punct(q) if *q == p)
    }

    fn is_kw(&self, kw: &str) -> bool {
        matches!(self.peek(), Tok::Ident(s) if s == kw)
    }

    fn expect(&mut self, p: &str) -> PResult<Loc> {
        if self.is_punct(p) {
            Ok(self.bump().loc)
        } else {
            Err(self.err(format!("expected `{p}`, found {}", self.peek())))
        }
    }

    fn ident(&mut self) -> PResult<(Name, Loc)> {
        match self.peek().clone() {
            Tok::Ident(s) => {
                let loc = self.bump().loc;
                Ok((s, loc))
            }
            other => Err(self.err(format!("expected identifier, found {other}"))),
        }
    }

    fn ty(&mut self) -> PResult<Type> {
        let (t, loc) = self.ident()?;
        match t.as_str() {
            "int" => Ok(Type::Int),
            "bool" => Ok(Type::Bool),
            _ => Err(ParseError::new(loc, format!("unknown type {t}"))),
        }
    }

    fn fresh(&mut self) -> NodeId {
        let n = NodeId(self.next_node);
        self.next_node += 1;
        n
    }

    fn declared(&self, name: &str) -> bool {
        name == SELF
            || self.prog.global(name).is_some()
            || self.prog.local(name).is_some()
            || self.prog.has_mutex(name)
    }

    fn decls(&mut self) -> PResult<()> {
        loop {
            if self.is_kw("global") {
                self.bump();
                let (name, loc) = self.ident()?;
                self.fresh_name(&name, loc)?;
                self.expect(":")?;
                let ty = self.ty()?;
                self.expect("=")?;
                let init_loc = self.loc();
                let init = self.literal()?;
                let init_ty = if matches!(init, Expr::Bool(_)) { Type::Bool } else { Type::Int };
                if init_ty != ty {
                    return Err(ParseError::new(
                        init_loc,
                        format!("initial value of {name} must be {ty}"),
                    ));
                }
                let init = match init {
                    Expr::Int(v) => v,
                    Expr::Bool(b) => Value::from_bool(b),
                    _ => unreachable!(),
                };
                self.expect(";")?;
                self.prog.globals.push(GlobalDecl { name, ty, init });
            } else if self.is_kw("mutex") {
                self.bump();
                let (name, loc) = self.ident()?;
                self.fresh_name(&name, loc)?;
                if self.is_kw("for") {
                    self.bump();
                    let (g, gloc) = self.ident()?;
                    if self.prog.global(&g).is_none() {
                        return Err(ParseError::new(gloc, format!("undeclared global {g}")));
                    }
                    if self.prog.global_mutexes.contains_key(&g) {
                        return Err(ParseError::new(gloc, format!("{g} already has a dedicated mutex")));
                    }
                    self.prog.global_mutexes.insert(g, name.clone());
                }
                self.expect(";")?;
                self.prog.mutexes.push(name);
            } else if self.is_kw("local") {
                self.bump();
                let (name, loc) = self.ident()?;
                self.fresh_name(&name, loc)?;
                self.expect(":")?;
                let ty = self.ty()?;
                self.expect(";")?;
                self.prog.locals.push(LocalDecl { name, ty });
            } else if self.is_kw("thread") {
                return Ok(());
            } else if matches!(self.peek(), Tok::Eof) {
                return Err(self.err("expected program"));
            } else {
                return Err(self.err(format!("expected declaration or thread, found {}", self.peek())));
            }
        }
    }

    fn fresh_name(&self, name: &str, loc: Loc) -> PResult<()> {
        if is_keyword(name) {
            return Err(ParseError::new(loc, format!("`{name}` is reserved")));
        }
        if self.declared(name) {
            return Err(ParseError::new(loc, format!("{name} is already declared")));
        }
        Ok(())
    }

    fn literal(&mut self) -> PResult<Expr> {
        let neg = if self.is_punct("-") {
            self.bump();
            true
        } else {
            false
        };
        match self.peek().clone() {
            Tok::Int(s) => {
                self.bump();
                let v: Value = s.parse().expect("digits");
                Ok(Expr::Int(if neg { v.neg() } else { v }))
            }
            Tok::Ident(s) if !neg && (s == "true" || s == "false") => {
                self.bump();
                Ok(Expr::Bool(s == "true"))
            }
            other => Err(self.err(format!("expected literal, found {other}"))),
        }
    }

    fn template(&mut self) -> PResult<()> {
        if !self.is_kw("thread") {
            return Err(self.err(format!("expected `thread`, found {}", self.peek())));
        }
        self.bump();
        let (name, loc) = self.ident()?;
        if self.prog.template(&name).is_some() {
            return Err(ParseError::new(loc, format!("duplicate thread template {name}")));
        }
        self.expect("{")?;
        let ti = self.prog.templates.len();
        if self.is_kw("entry") {
            self.edge_form(name)?;
            return Ok(());
        }
        let body = self.block_body()?;
        let close = self.expect("}")?;
        let init = self.fresh();
        self.prog.templates.push(ThreadTemplate::new(name, init));
        if body.is_empty() {
            self.sm.nodes.insert(init, close);
        } else {
            let end = self.fresh();
            self.sm.nodes.insert(end, close);
            self.lower_seq(ti, &body, init, end)?;
        }
        Ok(())
    }

    fn block_body(&mut self) -> PResult<Vec<Stmt>> {
        let mut out = Vec::new();
        while !self.is_punct("}") {
            if matches!(self.peek(), Tok::Eof) {
                return Err(self.err("expected `}`"));
            }
            out.push(self.stmt()?);
        }
        Ok(out)
    }

    fn stmt(&mut self) -> PResult<Stmt> {
        let loc = self.loc();
        if self.is_kw("if") {
            self.bump();
            self.expect("(")?;
            let cond = self.condition()?;
            self.expect(")")?;
            self.expect("{")?;
            let then = self.block_body()?;
            self.expect("}")?;
            let mut els = Vec::new();
            if self.is_kw("else") {
                self.bump();
                if self.is_kw("if") {
                    els.push(self.stmt()?);
                } else {
                    self.expect("{")?;
                    els = self.block_body()?;
                    self.expect("}")?;
                }
            }
            if then.is_empty() && els.is_empty() {
                return Err(ParseError::new(loc, "if statement with empty branches"));
            }
            return Ok(Stmt::If {
                cond,
                then,
                els,
                loc,
            });
        }
        if self.is_kw("while") {
            self.bump();
            let head_loc = self.expect("(")?;
            let cond = self.condition()?;
            self.expect(")")?;
            self.expect("{")?;
            let body = self.block_body()?;
            self.expect("}")?;
            return Ok(Stmt::While {
                cond,
                body,
                loc,
                head_loc,
            });
        }
        if self.is_kw("atomic") {
            self.bump();
            self.expect("{")?;
            let mut members = Vec::new();
            while !self.is_punct("}") {
                let mloc = self.loc();
                if self.is_kw("atomic") || self.is_kw("if") || self.is_kw("while") {
                    return Err(ParseError::new(mloc, "only simple statements may appear in an atomic block"));
                }
                let a = self.simple()?;
                if !members.is_empty() && !a.always_admissible() {
                    return Err(ParseError::new(
                        mloc,
                        "only the first statement of an atomic block may be lock, unlock, create, pos or neg",
                    ));
                }
                members.push(a);
            }
            self.expect("}")?;
            if members.is_empty() {
                return Err(ParseError::new(loc, "empty atomic block"));
            }
            return Ok(Stmt::Simple(Action::Atomic(members), loc));
        }
        let a = self.simple()?;
        Ok(Stmt::Simple(a, loc))
    }

    /// A single non-compound statement including its `;`.
    fn simple(&mut self) -> PResult<Action> {
        let loc = self.loc();
        let (word, _) = self.ident()?;
        let action = match word.as_str() {
            "lock" | "unlock" => {
                self.expect("(")?;
                let (m, mloc) = self.ident()?;
                self.expect(")")?;
                if !self.prog.has_mutex(&m) {
                    return Err(ParseError::new(mloc, format!("undeclared mutex {m}")));
                }
                if word == "lock" {
                    Action::Lock(m)
                } else {
                    Action::Unlock(m)
                }
            }
            "create" => {
                self.expect("(")?;
                let (t, tloc) = self.ident()?;
                self.expect(")")?;
                self.creates.push((t.clone(), tloc));
                Action::Create(t)
            }
            "assert" => {
                self.expect("(")?;
                let cond = self.condition()?;
                let id = if self.is_punct(",") {
                    self.bump();
                    match self.peek().clone() {
                        Tok::Str(s) => {
                            self.bump();
                            AssertId(s)
                        }
                        other => return Err(self.err(format!("expected assert id string, found {other}"))),
                    }
                } else {
                    AssertId(loc.to_string())
                };
                self.expect(")")?;
                if !self.assert_ids.insert(id.clone()) {
                    return Err(ParseError::new(loc, format!("assert id {id} used twice")));
                }
                Action::Assert { cond, id }
            }
            "pos" | "neg" => {
                self.expect("(")?;
                let cond = self.condition()?;
                self.expect(")")?;
                if word == "pos" {
                    Action::Pos(cond)
                } else {
                    Action::Neg(cond)
                }
            }
            _ if self.is_punct("=") => {
                self.bump();
                let eloc = self.loc();
                let value = self.expr()?;
                self.assignment(word, loc, value, eloc)?
            }
            _ => {
                return Err(ParseError::new(loc, format!("expected statement, found `{word}`")));
            }
        };
        self.expect(";")?;
        Ok(action)
    }

    fn assignment(&mut self, target: Name, loc: Loc, value: Expr, eloc: Loc) -> PResult<Action> {
        self.check_names(&value, eloc)?;
        let globals: BTreeSet<Name> = value
            .vars()
            .into_iter()
            .filter(|v| self.prog.global(v).is_some())
            .collect();
        if target == SELF {
            return Err(ParseError::new(loc, "`self` is read-only"));
        }
        if let Some(g) = self.prog.global(&target).cloned() {
            if let Some(other) = globals.iter().next() {
                return Err(ParseError::new(
                    eloc,
                    format!("a write to global {target} may only use locals, but reads {other}"),
                ));
            }
            self.check_type(&value, None, g.ty, eloc)?;
            return Ok(Action::GlobalWrite {
                global: target,
                value,
            });
        }
        let Some(l) = self.prog.local(&target).cloned() else {
            if self.prog.has_mutex(&target) {
                return Err(ParseError::new(loc, format!("cannot assign to mutex {target}")));
            }
            return Err(ParseError::new(loc, format!("undeclared variable {target}")));
        };
        match globals.len() {
            0 => {
                self.check_type(&value, None, l.ty, eloc)?;
                Ok(Action::LocalUpdate {
                    local: target,
                    value,
                })
            }
            1 => {
                let g = globals.into_iter().next().unwrap();
                let value = value.substitute(&|v: &Name| (*v == g).then_some(Expr::Global));
                if value.placeholder_count() > 1 {
                    return Err(ParseError::new(eloc, format!("global {g} may be read only once per statement")));
                }
                let gty = self.prog.global(&g).unwrap().ty;
                self.check_type(&value, Some(gty), l.ty, eloc)?;
                Ok(Action::GlobalRead {
                    local: target,
                    global: g,
                    value,
                })
            }
            _ => Err(ParseError::new(
                eloc,
                format!(
                    "a statement may read at most one global, found {}",
                    globals.into_iter().collect::<Vec<_>>().join(", ")
                ),
            )),
        }
    }

    /// A boolean expression over locals.
    fn condition(&mut self) -> PResult<Expr> {
        let loc = self.loc();
        let e = self.expr()?;
        self.check_names(&e, loc)?;
        if let Some(g) = e.vars().into_iter().find(|v| self.prog.global(v).is_some()) {
            return Err(ParseError::new(
                loc,
                format!("conditions may only read locals; read global {g} into a local first"),
            ));
        }
        self.check_type(&e, None, Type::Bool, loc)?;
        Ok(e)
    }

    fn check_names(&self, e: &Expr, loc: Loc) -> PResult<()> {
        for v in e.vars() {
            if self.prog.has_mutex(&v) {
                return Err(ParseError::new(loc, format!("mutex {v} used as a value")));
            }
            if self.prog.global(&v).is_none() && self.prog.local(&v).is_none() {
                return Err(ParseError::new(loc, format!("undeclared variable {v}")));
            }
        }
        Ok(())
    }

    fn check_type(&self, e: &Expr, placeholder: Option<Type>, want: Type, loc: Loc) -> PResult<()> {
        let lookup = |v: &Name| {
            self.prog
                .local(v)
                .map(|l| l.ty)
                .or_else(|| self.prog.global(v).map(|g| g.ty))
        };
        match e.type_of(&lookup, placeholder) {
            Ok(t) if t == want => Ok(()),
            Ok(t) => Err(ParseError::new(loc, format!("type mismatch: expected {want}, found {t}"))),
            Err(err) => Err(ParseError::new(loc, err.to_string())),
        }
    }

    fn lower_seq(&mut self, ti: usize, stmts: &[Stmt], from: NodeId, to: NodeId) -> PResult<()> {
        let mut cur = from;
        for (i, s) in stmts.iter().enumerate() {
            let next = if i + 1 == stmts.len() { to } else { self.fresh() };
            self.lower_stmt(ti, s, cur, next)?;
            cur = next;
        }
        Ok(())
    }

    /// Entry node of a (possibly empty) sequence ending in `to`.
    fn lower_entry(&mut self, ti: usize, stmts: &[Stmt], to: NodeId) -> PResult<NodeId> {
        if stmts.is_empty() {
            return Ok(to);
        }
        let entry = self.fresh();
        self.lower_seq(ti, stmts, entry, to)?;
        Ok(entry)
    }

    fn add_edge(&mut self, ti: usize, src: NodeId, action: Action, dst: NodeId, loc: Loc) {
        self.sm.nodes.entry(src).or_insert(loc);
        let t = &mut self.prog.templates[ti];
        let index = t.add_edge(src, action, dst) as u32;
        self.sm.edges.insert(
            EdgeId {
                template: ti as u32,
                index,
            },
            loc,
        );
    }

    fn lower_stmt(&mut self, ti: usize, s: &Stmt, from: NodeId, to: NodeId) -> PResult<()> {
        match s {
            Stmt::Simple(a, loc) => self.add_edge(ti, from, a.clone(), to, *loc),
            Stmt::If {
                cond,
                then,
                els,
                loc,
            } => {
                self.sm.nodes.entry(from).or_insert(*loc);
                let a = self.lower_entry(ti, then, to)?;
                let b = self.lower_entry(ti, els, to)?;
                self.add_edge(ti, from, Action::Pos(cond.clone()), a, *loc);
                self.add_edge(ti, from, Action::Neg(cond.clone()), b, *loc);
            }
            Stmt::While {
                cond,
                body,
                loc,
                head_loc,
            } => {
                let head = if from == self.prog.templates[ti].initial {
                    let h = self.fresh();
                    self.add_edge(ti, from, Action::Pos(Expr::Bool(true)), h, *loc);
                    self.sm.nodes.insert(h, *head_loc);
                    h
                } else {
                    self.sm.nodes.entry(from).or_insert(*loc);
                    from
                };
                let hloc = self.sm.nodes[&head];
                let entry = self.lower_entry(ti, body, head)?;
                self.add_edge(ti, head, Action::Pos(cond.clone()), entry, hloc);
                self.add_edge(ti, head, Action::Neg(cond.clone()), to, hloc);
            }
        }
        Ok(())
    }

    fn edge_form(&mut self, name: Name) -> PResult<()> {
        let ti = self.prog.templates.len();
        self.bump(); // entry
        let mut labels: BTreeMap<u32, NodeId> = BTreeMap::new();
        let entry_loc = self.loc();
        let entry = self.label(&mut labels)?;
        self.expect(";")?;
        self.prog.templates.push(ThreadTemplate::new(name, entry));
        let mut target_locs: BTreeMap<NodeId, Loc> = BTreeMap::new();
        target_locs.insert(entry, entry_loc);
        while !self.is_punct("}") {
            let src_loc = self.loc();
            let src = self.label(&mut labels)?;
            self.expect(":")?;
            let sloc = self.loc();
            let action = match self.stmt()? {
                Stmt::Simple(a, _) => a,
                _ => return Err(ParseError::new(sloc, "edge statements must be simple")),
            };
            // `simple` consumed the `;`; the arrow comes after it.
            self.expect("->")?;
            let dloc = self.loc();
            let dst = self.label(&mut labels)?;
            self.expect(";")?;
            if self.prog.templates[ti].edge_between(src, dst).is_some() {
                return Err(ParseError::new(src_loc, format!("more than one edge from {src} to {dst}")));
            }
            if dst == entry {
                return Err(ParseError::new(dloc, "the entry node may not have incoming edges"));
            }
            self.sm.nodes.entry(src).or_insert(src_loc);
            target_locs.entry(dst).or_insert(dloc);
            let t = &mut self.prog.templates[ti];
            let index = t.add_edge(src, action, dst) as u32;
            self.sm.edges.insert(
                EdgeId {
                    template: ti as u32,
                    index,
                },
                sloc,
            );
        }
        self.expect("}")?;
        for (n, l) in target_locs {
            self.sm.nodes.entry(n).or_insert(l);
        }
        Ok(())
    }

    fn label(&mut self, labels: &mut BTreeMap<u32, NodeId>) -> PResult<NodeId> {
        match self.peek().clone() {
            Tok::Label(k) => {
                self.bump();
                if let Some(n) = labels.get(&k) {
                    return Ok(*n);
                }
                let n = self.fresh();
                labels.insert(k, n);
                Ok(n)
            }
            other => Err(self.err(format!("expected node label, found {other}"))),
        }
    }

    // expressions, weakest first

    fn expr(&mut self) -> PResult<Expr> {
        let lhs = self.binary(2)?;
        if self.is_punct("==>") {
            self.bump();
            let rhs = self.expr()?;
            return Ok(Expr::implies(lhs, rhs));
        }
        Ok(lhs)
    }

    fn binary(&mut self, level: u8) -> PResult<Expr> {
        if level > 7 {
            return self.unary();
        }
        let mut lhs = self.binary(level + 1)?;
        loop {
            let op = match self.peek() {
                Tok::Punct(p) => match binop(p) {
                    Some(op) if op.precedence() == level => op,
                    _ => break,
                },
                _ => break,
            };
            self.bump();
            let rhs = self.binary(level + 1)?;
            lhs = Expr::bin(op, lhs, rhs);
        }
        Ok(lhs)
    }

    fn unary(&mut self) -> PResult<Expr> {
        if self.is_punct("-") {
            self.bump();
            // `-3` is a literal, `-(3)` is a negation
            if let Tok::Int(s) = self.peek().clone() {
                self.bump();
                let v: Value = s.parse().expect("digits");
                return Ok(Expr::Int(v.neg()));
            }
            let e = self.unary()?;
            return Ok(Expr::Unary(UnOp::Neg, Box::new(e)));
        }
        if self.is_punct("!") {
            self.bump();
            let e = self.unary()?;
            return Ok(Expr::Unary(UnOp::Not, Box::new(e)));
        }
        self.primary()
    }

    fn primary(&mut self) -> PResult<Expr> {
        match self.peek().clone() {
            Tok::Int(s) => {
                self.bump();
                Ok(Expr::Int(s.parse().expect("digits")))
            }
            Tok::Ident(s) if s == "true" || s == "false" => {
                self.bump();
                Ok(Expr::Bool(s == "true"))
            }
            Tok::Ident(s) if s == SELF => {
                self.bump();
                let negate = if self.is_punct("==") {
                    false
                } else if self.is_punct("!=") {
                    true
                } else {
                    return Err(self.err("`self` can only be compared with `==` or `!=` to tid(...)"));
                };
                self.bump();
                let t = self.tid()?;
                let e = Expr::SelfIs(t);
                Ok(if negate { Expr::not(e) } else { e })
            }
            Tok::Ident(s) => {
                if is_keyword(&s) {
                    return Err(self.err(format!("unexpected keyword `{s}`")));
                }
                self.bump();
                Ok(Expr::Var(s))
            }
            Tok::Punct("(") => {
                self.bump();
                let e = self.expr()?;
                self.expect(")")?;
                Ok(e)
            }
            other => Err(self.err(format!("expected expression, found {other}"))),
        }
    }

    fn tid(&mut self) -> PResult<ThreadId> {
        if !self.is_kw("tid") {
            return Err(self.err(format!("expected tid(...), found {}", self.peek())));
        }
        self.bump();
        self.expect("(")?;
        let mut parts = Vec::new();
        while !self.is_punct(")") {
            if !parts.is_empty() {
                self.expect(",")?;
            }
            match self.peek().clone() {
                Tok::Int(s) => {
                    let loc = self.bump().loc;
                    parts.push(s.parse::<u32>().map_err(|_| ParseError::new(loc, "thread id component too large"))?);
                }
                other => return Err(self.err(format!("expected number, found {other}"))),
            }
        }
        self.expect(")")?;
        Ok(ThreadId(parts))
    }
}

fn binop(p: &str) -> Option<BinOp> {
    Some(match p {
        "+" => BinOp::Add,
        "-" => BinOp::Sub,
        "*" => BinOp::Mul,
        "/" => BinOp::Div,
        "%" => BinOp::Rem,
        "==" => BinOp::Eq,
        "!=" => BinOp::Ne,
        "<" => BinOp::Lt,
        "<=" => BinOp::Le,
        ">" => BinOp::Gt,
        ">=" => BinOp::Ge,
        "&&" => BinOp::And,
        "||" => BinOp::Or,
        _ => return None,
    })
}

const KEYWORDS: &[&str] = &[
    "global", "mutex", "local", "thread", "for", "int", "bool", "true", "false", "lock", "unlock",
    "create", "assert", "pos", "neg", "if", "else", "while", "atomic", "entry", "tid", SELF,
];

pub(crate) fn is_keyword(s: &str) -> bool {
    KEYWORDS.contains(&s)
}

#[cfg(test)]
mod tests {
    use super::*;

    const EXAMPLE: &str = "\
global used: int = 0;
mutex m;
local tmp: int;

thread main {
  create(t1);
  lock(m);
  tmp = used;
  assert(tmp == 0, \"a1\");
  unlock(m);
}

thread t1 {
  lock(m);
  used = 47;
  used = 0;
  unlock(m);
}
";

    #[test]
    fn running_example() {
        let (p, sm) = parse_program(EXAMPLE).unwrap();
        assert_eq!(p.templates.len(), 2);
        assert_eq!(p.globals.len(), 1);
        assert_eq!(p.mutexes, vec!["m".to_string()]);
        let main = p.main().unwrap();
        assert_eq!(main.edges.len(), 5);
        assert!(matches!(main.edges[2].action, Action::GlobalRead { .. }));
        assert_eq!(sm.node(main.initial), Some(Loc { line: 6, column: 3 }));
        // final node sits at the closing brace
        let end = main.edges[4].dst;
        assert_eq!(sm.node(end), Some(Loc { line: 11, column: 1 }));
        assert_eq!(sm.edges.len(), 9);
        assert_eq!(sm.nodes.len(), 11);
    }

    #[test]
    fn empty_input() {
        assert_eq!(parse_program("").unwrap_err().message, "expected program");
        assert_eq!(parse_program("  # nothing\n").unwrap_err().message, "expected program");
    }

    #[test]
    fn undeclared_mutex() {
        let e = parse_program("thread main {\n  lock(k);\n}").unwrap_err();
        assert_eq!(e.message, "undeclared mutex k");
        assert_eq!(e.loc.line, 2);
    }

    #[test]
    fn two_globals_in_one_statement() {
        let e = parse_program(
            "global a: int = 0; global b: int = 0; local x: int; thread main { x = a + b; }",
        )
        .unwrap_err();
        assert!(e.message.contains("at most one global"), "{e}");
    }

    #[test]
    fn bool_as_int_is_rejected() {
        let e = parse_program("local x: int; local b: bool; thread main { x = b + 1; }").unwrap_err();
        assert!(e.message.contains("type mismatch"), "{e}");
    }

    #[test]
    fn while_at_entry_gets_a_guard() {
        let (p, _) = parse_program("local x: int; thread main { while (x < 3) { x = x + 1; } }").unwrap();
        let t = p.main().unwrap();
        assert_eq!(t.edges.len(), 4);
        assert_eq!(t.edges[0].action, Action::Pos(Expr::Bool(true)));
        assert_eq!(t.in_degree(t.initial), 0);
    }

    #[test]
    fn edge_form() {
        let (p, sm) = parse_program(
            "mutex m; thread main { entry @0; @0: lock(m); -> @1; @1: unlock(m); -> @2; }",
        )
        .unwrap();
        let t = p.main().unwrap();
        assert_eq!(t.edges.len(), 2);
        assert_eq!(sm.node(t.initial), Some(Loc { line: 1, column: 34 }));
    }

    #[test]
    fn duplicate_edges_in_edge_form() {
        let e = parse_program(
            "mutex m; thread main { entry @0; @0: lock(m); -> @1; @0: unlock(m); -> @1; }",
        )
        .unwrap_err();
        assert!(e.message.contains("more than one edge"), "{e}");
    }

    #[test]
    fn self_comparison() {
        let e = parse_expr("self == tid(0,1) && x != 2").unwrap();
        assert_eq!(e.to_string(), "self == tid(0,1) && x != 2");
    }
}
