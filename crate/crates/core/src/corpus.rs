//! Seeded generator of small programs and witnesses for differential
//! testing.

use std::collections::BTreeSet;
use std::fmt::Write;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::analysis::{analyze_and_generate, Mode};
use crate::expr::{BinOp, Expr, Type};
use crate::frontend::{parse_expr, parse_program, SourceMap};
use crate::program::{Action, NodeId, Program};
use crate::witness::{GhostGlobal, GhostUpdate, GhostWitness};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Dialect {
    /// Bare global accesses and locks.
    Lang,
    /// `Lang` plus atomic blocks.
    Atomic,
    /// Every global has a dedicated mutex held at each of its accesses.
    MutexGuarded,
}

#[derive(Clone, Debug)]
pub struct GenConfig {
    pub dialect: Dialect,
    /// Templates besides `main`.
    pub max_threads: usize,
    /// Statements per thread, nested ones included.
    pub max_stmts: usize,
    pub globals: usize,
    pub mutexes: usize,
    pub loops: bool,
}

impl GenConfig {
    pub fn new(dialect: Dialect) -> Self {
        GenConfig {
            dialect,
            max_threads: 2,
            max_stmts: 5,
            globals: 2,
            mutexes: 2,
            loops: false,
        }
    }
}

#[derive(Clone, Debug)]
pub struct Generated {
    pub source: String,
    pub program: Program,
    pub source_map: SourceMap,
}

const LOCALS: [&str; 2] = ["x", "y"];

struct Gen<'a, R: Rng> {
    rng: &'a mut R,
    cfg: &'a GenConfig,
    budget: usize,
    out: String,
    held: Vec<String>,
}

impl<R: Rng> Gen<'_, R> {
    fn global(&mut self) -> String {
        format!("g{}", self.rng.gen_range(0..self.cfg.globals))
    }

    fn local(&mut self) -> &'static str {
        LOCALS.choose(self.rng).unwrap()
    }

    fn small(&mut self) -> i64 {
        self.rng.gen_range(0..3)
    }

    fn local_expr(&mut self) -> String {
        match self.rng.gen_range(0..4) {
            0 => self.small().to_string(),
            1 => self.local().to_string(),
            2 => format!("{} + 1", self.local()),
            _ => format!("{} - {}", self.local(), self.local()),
        }
    }

    fn cond(&mut self) -> String {
        let op = ["==", "!=", "<", "<="].choose(self.rng).unwrap();
        let rhs = if self.rng.gen_bool(0.7) {
            self.small().to_string()
        } else {
            self.local().to_string()
        };
        format!("{} {op} {rhs}", self.local())
    }

    fn line(&mut self, depth: usize, s: &str) {
        let _ = writeln!(self.out, "{}{s}", "  ".repeat(depth));
    }

    fn access(&mut self, depth: usize, g: &str) {
        self.budget = self.budget.saturating_sub(1);
        let s = match self.rng.gen_range(0..4) {
            0 => format!("{} = {g};", self.local()),
            1 => format!("{} = {g} + 1;", self.local()),
            2 => format!("{g} = {};", self.local_expr()),
            _ => format!("{g} = {};", self.small()),
        };
        self.line(depth, &s);
    }

    fn simple(&mut self, depth: usize) {
        match self.rng.gen_range(0..3) {
            0 => {
                self.budget = self.budget.saturating_sub(1);
                let s = format!("{} = {};", self.local(), self.local_expr());
                self.line(depth, &s);
            }
            1 => {
                self.budget = self.budget.saturating_sub(1);
                let s = format!("assert({});", self.cond());
                self.line(depth, &s);
            }
            _ => {
                if self.cfg.dialect == Dialect::MutexGuarded {
                    self.guarded(depth);
                } else {
                    let g = self.global();
                    self.access(depth, &g);
                }
            }
        }
    }

    /// `lock(m_g); accesses; unlock(m_g);`
    fn guarded(&mut self, depth: usize) {
        let g = self.global();
        let m = format!("m_{g}");
        if self.held.contains(&m) {
            self.access(depth, &g);
            return;
        }
        self.budget = self.budget.saturating_sub(2);
        self.line(depth, &format!("lock({m});"));
        self.held.push(m.clone());
        for _ in 0..self.rng.gen_range(1..=2) {
            self.access(depth + 1, &g);
        }
        if self.rng.gen_bool(0.3) {
            let s = format!("assert({});", self.cond());
            self.line(depth + 1, &s);
        }
        self.held.pop();
        self.line(depth, &format!("unlock({m});"));
    }

    fn stmt(&mut self, depth: usize) {
        let roll = self.rng.gen_range(0..10);
        match roll {
            0 | 1 if self.cfg.mutexes > 0 && depth < 2 => {
                let m = format!("m{}", self.rng.gen_range(0..self.cfg.mutexes));
                if self.held.contains(&m) {
                    return self.simple(depth);
                }
                self.budget = self.budget.saturating_sub(2);
                self.line(depth, &format!("lock({m});"));
                self.held.push(m.clone());
                let n = self.rng.gen_range(1..=2);
                for _ in 0..n {
                    if self.budget == 0 {
                        break;
                    }
                    self.stmt(depth + 1);
                }
                self.held.pop();
                self.line(depth, &format!("unlock({m});"));
            }
            2 if depth < 2 => {
                self.budget = self.budget.saturating_sub(1);
                let c = self.cond();
                self.line(depth, &format!("if ({c}) {{"));
                self.stmt(depth + 1);
                if self.rng.gen_bool(0.5) {
                    self.line(depth, "} else {");
                    self.stmt(depth + 1);
                }
                self.line(depth, "}");
            }
            3 if self.cfg.loops && depth < 2 => {
                self.budget = self.budget.saturating_sub(2);
                let x = self.local();
                self.line(depth, &format!("while ({x} < 2) {{"));
                self.stmt(depth + 1);
                self.line(depth + 1, &format!("{x} = {x} + 1;"));
                self.line(depth, "}");
            }
            4 | 5 if self.cfg.dialect == Dialect::Atomic => {
                self.budget = self.budget.saturating_sub(1);
                let mut members = Vec::new();
                if self.cfg.mutexes > 0 && self.rng.gen_bool(0.2) {
                    let m = format!("m{}", self.rng.gen_range(0..self.cfg.mutexes));
                    if !self.held.contains(&m) {
                        // taken and released in one step
                        members.push(format!("lock({m});"));
                        members.push(format!("{} = {};", self.local(), self.local_expr()));
                        let s = members.join(" ");
                        self.line(depth, &format!("atomic {{ {s} }}"));
                        self.line(depth, &format!("unlock({m});"));
                        return;
                    }
                }
                for _ in 0..self.rng.gen_range(2..=3) {
                    let g = self.global();
                    members.push(match self.rng.gen_range(0..3) {
                        0 => format!("{} = {g};", self.local()),
                        1 => format!("{g} = {};", self.local_expr()),
                        _ => format!("{} = {};", self.local(), self.local_expr()),
                    });
                }
                let s = members.join(" ");
                self.line(depth, &format!("atomic {{ {s} }}"));
            }
            _ => self.simple(depth),
        }
    }

    fn body(&mut self, depth: usize) {
        self.budget = self.cfg.max_stmts;
        let n = self.rng.gen_range(1..=self.cfg.max_stmts.max(1));
        for _ in 0..n {
            if self.budget == 0 {
                break;
            }
            self.stmt(depth);
        }
    }
}

/// Source text of a random program.
pub fn generate_source(rng: &mut impl Rng, cfg: &GenConfig) -> String {
    let mut g = Gen {
        rng,
        cfg,
        budget: 0,
        out: String::new(),
        held: Vec::new(),
    };
    for i in 0..cfg.globals {
        let v = g.small();
        g.line(0, &format!("global g{i}: int = {v};"));
    }
    for i in 0..cfg.mutexes {
        g.line(0, &format!("mutex m{i};"));
    }
    if cfg.dialect == Dialect::MutexGuarded {
        for i in 0..cfg.globals {
            g.line(0, &format!("mutex m_g{i} for g{i};"));
        }
    }
    for l in LOCALS {
        g.line(0, &format!("local {l}: int;"));
    }
    let threads = g.rng.gen_range(1..=cfg.max_threads.max(1));
    let mut bodies = Vec::new();
    for _ in 0..threads {
        let mut sub = Gen {
            rng: &mut *g.rng,
            cfg,
            budget: 0,
            out: String::new(),
            held: Vec::new(),
        };
        sub.body(1);
        bodies.push(sub.out);
    }
    let mut main = Gen {
        rng: &mut *g.rng,
        cfg,
        budget: 0,
        out: String::new(),
        held: Vec::new(),
    };
    // creates sit between top-level statements of main
    let creates: Vec<usize> = (1..=threads).collect();
    let mut pre = Vec::new();
    for t in &creates {
        if main.rng.gen_bool(0.3) {
            main.budget = 1;
            main.out.clear();
            main.stmt(1);
            pre.push(std::mem::take(&mut main.out));
        }
        pre.push(format!("  create(t{t});\n"));
        if *t == 1 && main.rng.gen_bool(0.3) {
            pre.push(format!("  create(t{t});\n"));
        }
    }
    main.body(1);
    g.out.push_str("thread main {\n");
    for s in pre {
        g.out.push_str(&s);
    }
    g.out.push_str(&main.out);
    g.out.push_str("}\n");
    for (i, b) in bodies.iter().enumerate() {
        let _ = write!(g.out, "thread t{} {{\n{b}}}\n", i + 1);
    }
    g.out
}

pub fn generate(rng: &mut impl Rng, cfg: &GenConfig) -> Generated {
    loop {
        let source = generate_source(rng, cfg);
        // rare shapes the parser rejects, such as empty branches, are redrawn
        if let Ok((program, source_map)) = parse_program(&source) {
            return Generated {
                source,
                program,
                source_map,
            };
        }
    }
}

pub fn generate_corpus(seed: u64, count: usize, cfg: &GenConfig) -> Vec<Generated> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count).map(|_| generate(&mut rng, cfg)).collect()
}

/// Nodes that a location in `sm` names unambiguously.
fn locatable_nodes(p: &Program, sm: Option<&SourceMap>) -> Vec<NodeId> {
    p.templates
        .iter()
        .flat_map(|t| t.nodes.iter().copied())
        .filter(|n| match sm {
            None => true,
            Some(sm) => sm.node(*n).is_some_and(|l| sm.node_at(l) == Some(*n)),
        })
        .collect()
}

fn updatable(a: &Action) -> bool {
    !matches!(a, Action::Pos(_) | Action::Neg(_) | Action::Assert { .. })
}

/// A random witness, valid or not. With a source map, every key has a
/// location of its own.
pub fn random_witness(rng: &mut impl Rng, p: &Program, sm: Option<&SourceMap>) -> GhostWitness {
    let mut w = GhostWitness::default();
    let taken: BTreeSet<&str> = p
        .globals
        .iter()
        .map(|g| g.name.as_str())
        .chain(p.locals.iter().map(|l| l.name.as_str()))
        .chain(p.mutexes.iter().map(String::as_str))
        .chain(p.templates.iter().map(|t| t.name.as_str()))
        .collect();
    let n_ghosts = rng.gen_range(0..=2);
    for i in 0..n_ghosts {
        let mut name = format!("h{i}");
        while taken.contains(name.as_str()) {
            name.push('_');
        }
        let ty = if rng.gen_bool(0.5) { Type::Int } else { Type::Bool };
        let init = match ty {
            Type::Int => Expr::int(rng.gen_range(0..2)),
            Type::Bool => Expr::Bool(rng.gen_bool(0.5)),
        };
        w.ghost_globals.push(GhostGlobal { name, ty, init });
    }
    let edges: Vec<_> = p
        .edge_ids()
        .filter(|id| updatable(&p.edge(*id).action))
        .filter(|id| match sm {
            None => true,
            Some(sm) => sm.edge(*id).is_some_and(|l| {
                sm.edges_at(l).iter().filter(|e| updatable(&p.edge(**e).action)).count() == 1
            }),
        })
        .collect();
    if !w.ghost_globals.is_empty() && !edges.is_empty() {
        for _ in 0..rng.gen_range(0..=3) {
            let id = *edges.choose(rng).unwrap();
            let gh = w.ghost_globals.choose(rng).unwrap().clone();
            let value = match gh.ty {
                Type::Bool => Expr::Bool(rng.gen_bool(0.5)),
                Type::Int => match rng.gen_range(0..3) {
                    0 => Expr::int(rng.gen_range(0..3)),
                    1 => Expr::bin(BinOp::Add, Expr::var(gh.name.as_str()), Expr::int(1)),
                    _ => match p.globals.choose(rng) {
                        Some(g) if g.ty == Type::Int => Expr::var(g.name.as_str()),
                        _ => Expr::int(0),
                    },
                },
            };
            w.updates.entry(id).or_default().push(GhostUpdate {
                target: gh.name,
                value,
            });
        }
    }
    let nodes = locatable_nodes(p, sm);
    for _ in 0..rng.gen_range(0..=2) {
        let Some(n) = nodes.choose(rng) else { break };
        let inv = random_invariant(rng, p, &w);
        w.invariants.insert(*n, inv);
    }
    w
}

fn random_atom(rng: &mut impl Rng, p: &Program, w: &GhostWitness) -> Expr {
    let vars: Vec<(String, Type)> = p
        .globals
        .iter()
        .map(|g| (g.name.clone(), g.ty))
        .chain(w.ghost_globals.iter().map(|g| (g.name.clone(), g.ty)))
        .collect();
    let Some((v, ty)) = vars.choose(rng) else { return Expr::Bool(rng.gen_bool(0.8)) };
    match ty {
        Type::Bool => {
            if rng.gen_bool(0.5) {
                Expr::var(v.as_str())
            } else {
                Expr::not(Expr::var(v.as_str()))
            }
        }
        Type::Int => {
            let op = *[BinOp::Eq, BinOp::Le, BinOp::Ge, BinOp::Ne].choose(rng).unwrap();
            Expr::bin(op, Expr::var(v.as_str()), Expr::int(rng.gen_range(0..3)))
        }
    }
}

fn random_invariant(rng: &mut impl Rng, p: &Program, w: &GhostWitness) -> Expr {
    match rng.gen_range(0..4) {
        0 => Expr::and(random_atom(rng, p, w), random_atom(rng, p, w)),
        1 => Expr::implies(random_atom(rng, p, w), random_atom(rng, p, w)),
        2 => Expr::bin(BinOp::Or, random_atom(rng, p, w), random_atom(rng, p, w)),
        _ => random_atom(rng, p, w),
    }
}

/// A program paired with witnesses: random ones and the ones the analyses
/// generate.
pub fn witness_pairs(seed: u64, count: usize, cfg: &GenConfig) -> Vec<(Generated, GhostWitness)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count)
        .map(|i| {
            let g = generate(&mut rng, cfg);
            let w = match i % 4 {
                0 => analyze_and_generate(&g.program, Mode::MutexMeet, true).1,
                1 => analyze_and_generate(&g.program, Mode::Protection, i % 8 == 1).1,
                _ => random_witness(&mut rng, &g.program, Some(&g.source_map)),
            };
            (g, w)
        })
        .collect()
}

/// Hand-written programs: the running example and variants of it.
pub fn standard_programs() -> Vec<(&'static str, &'static str)> {
    vec![
        ("running", RUNNING_EXAMPLE),
        (
            "running_unsafe",
            "global used: int = 0;
mutex m;
local tmp: int;
thread main {
  create(t1);
  lock(m);
  tmp = used;
  assert(tmp == 0);
  unlock(m);
}
thread t1 {
  lock(m);
  used = 47;
  unlock(m);
  used = 0;
}
",
        ),
        (
            "counter",
            "global c: int = 0;
mutex m;
local t: int;
thread main {
  create(w);
  create(w);
  lock(m);
  t = c;
  assert(t <= 2);
  unlock(m);
}
thread w {
  lock(m);
  t = c;
  c = t + 1;
  unlock(m);
}
",
        ),
        (
            "pair",
            "global a: int = 0;
global b: int = 0;
mutex m;
local x: int;
local y: int;
thread main {
  create(w);
  lock(m);
  x = a;
  y = b;
  assert(x == y);
  unlock(m);
}
thread w {
  lock(m);
  x = a;
  x = x + 1;
  a = x;
  b = x;
  unlock(m);
}
",
        ),
        (
            "flag",
            "global ready: bool = false;
global data: int = 0;
mutex m;
local r: bool;
local d: int;
thread main {
  data = 5;
  create(t);
  lock(m);
  ready = true;
  unlock(m);
}
thread t {
  lock(m);
  r = ready;
  unlock(m);
  d = data;
  assert(d == 5);
}
",
        ),
        (
            "atomic_swap",
            "global g: int = 1;
global h: int = 2;
local x: int;
local y: int;
thread main {
  create(t);
  atomic { x = g; y = h; }
  assert(x + y == 3);
}
thread t {
  atomic { x = g; y = h; g = y; h = x; }
}
",
        ),
        (
            "loop",
            "global c: int = 0;
mutex m;
local i: int;
local t: int;
thread main {
  create(w);
  while (i < 3) {
    lock(m);
    t = c;
    c = t + 1;
    unlock(m);
    i = i + 1;
  }
}
thread w {
  lock(m);
  t = c;
  assert(t >= 0);
  unlock(m);
}
",
        ),
    ]
}

pub const RUNNING_EXAMPLE: &str = "global used: int = 0;
mutex m;
local tmp: int;
thread main {
  create(t1);
  lock(m);
  tmp = used;
  assert(tmp == 0);
  unlock(m);
}
thread t1 {
  lock(m);
  used = 47;
  used = 0;
  unlock(m);
}
";

/// The witness of the running example: ghost `g` tracks whether `m` is
/// held.
pub fn running_witness(p: &Program) -> GhostWitness {
    let mut w = GhostWitness {
        ghost_globals: vec![GhostGlobal {
            name: "g".into(),
            ty: Type::Int,
            init: Expr::int(0),
        }],
        ..Default::default()
    };
    for id in p.edge_ids() {
        let v = match &p.edge(id).action {
            Action::Lock(_) => 1,
            Action::Unlock(_) => 0,
            _ => continue,
        };
        w.updates.insert(
            id,
            vec![GhostUpdate {
                target: "g".into(),
                value: Expr::int(v),
            }],
        );
    }
    if let Some(main) = p.main() {
        if let Some((_, e)) = main.out_edges(main.initial).next() {
            w.invariants.insert(e.dst, parse_expr("g == 0 ==> used == 0").unwrap());
        }
    }
    w
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::traces::check_lang_mg;

    #[test]
    fn deterministic() {
        let cfg = GenConfig::new(Dialect::Atomic);
        let a: Vec<String> = generate_corpus(7, 20, &cfg).into_iter().map(|g| g.source).collect();
        let b: Vec<String> = generate_corpus(7, 20, &cfg).into_iter().map(|g| g.source).collect();
        assert_eq!(a, b);
    }

    #[test]
    fn dialects() {
        for g in generate_corpus(1, 50, &GenConfig::new(Dialect::MutexGuarded)) {
            assert!(check_lang_mg(&g.program).is_ok(), "{}", g.source);
        }
        for g in generate_corpus(2, 50, &GenConfig::new(Dialect::Lang)) {
            assert!(!g.program.has_atomics());
        }
        assert!(generate_corpus(3, 50, &GenConfig::new(Dialect::Atomic)).iter().any(|g| g.program.has_atomics()));
    }

    #[test]
    fn standard_programs_parse() {
        for (name, src) in standard_programs() {
            assert!(parse_program(src).is_ok(), "{name}");
        }
    }

    #[test]
    fn random_witnesses_instrument() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for g in generate_corpus(4, 50, &GenConfig::new(Dialect::Lang)) {
            let w = random_witness(&mut rng, &g.program, Some(&g.source_map));
            crate::witness::instrument(&g.program, &w).unwrap();
        }
    }
}
