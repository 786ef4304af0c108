use std::collections::{BTreeMap, BTreeSet, VecDeque};
use std::fmt::Write;

use super::parser::parse_program;
use crate::expr::{Expr, Type};
use crate::program::{canonical_template, Action, NodeId, Program, ThreadTemplate};

/// Prints a program in the textual syntax.
///
/// Templates whose graph has the shape produced by `if`/`while` blocks are
/// printed structurally; the rest use the edge form. Each structured
/// rendering is checked by reparsing.
pub fn render_program(p: &Program) -> String {
    let decls = render_decls(p);
    let edge_forms: Vec<String> = p.templates.iter().map(render_edge_form).collect();
    let mut chosen = edge_forms.clone();
    for (i, t) in p.templates.iter().enumerate() {
        let Some(structured) = render_structured(t) else {
            continue;
        };
        let mut trial = edge_forms.clone();
        trial[i] = structured.clone();
        let text = assemble(&decls, &trial);
        let ok = parse_program(&text).is_ok_and(|(q, _)| {
            q.templates
                .get(i)
                .is_some_and(|qt| canonical_template(qt) == canonical_template(t))
        });
        if ok {
            chosen[i] = structured;
        }
    }
    assemble(&decls, &chosen)
}

fn assemble(decls: &str, templates: &[String]) -> String {
    let mut out = decls.to_string();
    for t in templates {
        if !out.is_empty() {
            out.push('\n');
        }
        out.push_str(t);
    }
    out
}

fn render_decls(p: &Program) -> String {
    let mut out = String::new();
    for g in &p.globals {
        let init = match g.ty {
            Type::Bool => g.init.truthy().to_string(),
            Type::Int => g.init.to_string(),
        };
        writeln!(out, "global {}: {} = {};", g.name, g.ty, init).unwrap();
    }
    let dedicated: BTreeMap<&str, &str> = p
        .global_mutexes
        .iter()
        .map(|(g, m)| (m.as_str(), g.as_str()))
        .collect();
    for m in &p.mutexes {
        match dedicated.get(m.as_str()) {
            Some(g) => writeln!(out, "mutex {m} for {g};").unwrap(),
            None => writeln!(out, "mutex {m};").unwrap(),
        }
    }
    for l in &p.locals {
        writeln!(out, "local {}: {};", l.name, l.ty).unwrap();
    }
    out
}

fn render_edge_form(t: &ThreadTemplate) -> String {
    let label: BTreeMap<NodeId, usize> = t.nodes.iter().enumerate().map(|(i, n)| (*n, i)).collect();
    let mut out = format!("thread {} {{\n  entry @{};\n", t.name, label[&t.initial]);
    for e in &t.edges {
        writeln!(
            out,
            "  @{}: {} -> @{};",
            label[&e.src],
            e.action.render(),
            label[&e.dst]
        )
        .unwrap();
    }
    out.push_str("}\n");
    out
}

fn render_structured(t: &ThreadTemplate) -> Option<String> {
    let mut r = Structurer {
        t,
        visited: BTreeSet::new(),
        out: format!("thread {} {{\n", t.name),
    };
    r.seq(t.initial, None, 1)?;
    if r.visited.len() < t.edges.iter().map(|e| e.src).collect::<BTreeSet<_>>().len() {
        return None;
    }
    r.out.push_str("}\n");
    Some(r.out)
}

struct Structurer<'a> {
    t: &'a ThreadTemplate,
    visited: BTreeSet<NodeId>,
    out: String,
}

impl Structurer<'_> {
    fn line(&mut self, depth: usize, text: &str) {
        for _ in 0..depth {
            self.out.push_str("  ");
        }
        self.out.push_str(text);
        self.out.push('\n');
    }

    fn seq(&mut self, mut u: NodeId, stop: Option<NodeId>, depth: usize) -> Option<()> {
        loop {
            if Some(u) == stop {
                return Some(());
            }
            if !self.visited.insert(u) {
                return None;
            }
            let outs: Vec<_> = self.t.out_edges(u).map(|(_, e)| e).collect();
            match outs.as_slice() {
                [] => return if stop.is_none() { Some(()) } else { None },
                [e] => {
                    let text = e.action.render();
                    self.line(depth, &text);
                    u = e.dst;
                }
                [e1, e2] => {
                    let (c, a, b) = match (&e1.action, &e2.action) {
                        (Action::Pos(c), Action::Neg(d)) if c == d => (c, e1.dst, e2.dst),
                        (Action::Neg(d), Action::Pos(c)) if c == d => (c, e2.dst, e1.dst),
                        _ => return None,
                    };
                    if u != self.t.initial && self.reaches(a, u, stop) {
                        self.line(depth, &format!("while ({c}) {{"));
                        self.visited.remove(&u);
                        self.seq_body(a, u, depth)?;
                        self.visited.insert(u);
                        self.line(depth, "}");
                        u = b;
                    } else {
                        let join = self.join(a, b, u, stop)?;
                        self.branch(c, a, b, join, depth)?;
                        u = join;
                    }
                }
                _ => return None,
            }
        }
    }

    /// A loop body from `a` back to the head `h`.
    fn seq_body(&mut self, a: NodeId, h: NodeId, depth: usize) -> Option<()> {
        self.seq(a, Some(h), depth + 1)
    }

    fn branch(&mut self, c: &Expr, a: NodeId, b: NodeId, join: NodeId, depth: usize) -> Option<()> {
        self.line(depth, &format!("if ({c}) {{"));
        self.seq(a, Some(join), depth + 1)?;
        if b != join {
            self.line(depth, "} else {");
            self.seq(b, Some(join), depth + 1)?;
        }
        self.line(depth, "}");
        Some(())
    }

    /// Nodes reachable from `from` in breadth-first order, without passing
    /// through any node in `fence`.
    fn reachable(&self, from: NodeId, fence: &[NodeId]) -> Vec<NodeId> {
        let mut seen = BTreeSet::from([from]);
        let mut order = vec![from];
        let mut q = VecDeque::from([from]);
        while let Some(n) = q.pop_front() {
            if fence.contains(&n) {
                continue;
            }
            for (_, e) in self.t.out_edges(n) {
                if seen.insert(e.dst) {
                    order.push(e.dst);
                    q.push_back(e.dst);
                }
            }
        }
        order
    }

    fn reaches(&self, from: NodeId, to: NodeId, stop: Option<NodeId>) -> bool {
        let fence: Vec<NodeId> = stop.into_iter().collect();
        self.reachable(from, &fence).contains(&to)
    }

    fn join(&self, a: NodeId, b: NodeId, u: NodeId, stop: Option<NodeId>) -> Option<NodeId> {
        let fence: Vec<NodeId> = stop.into_iter().chain([u]).collect();
        let rb: BTreeSet<NodeId> = self.reachable(b, &fence).into_iter().collect();
        self.reachable(a, &fence).into_iter().find(|n| rb.contains(n))
    }
}
