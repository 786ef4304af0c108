use std::collections::{BTreeMap, BTreeSet, VecDeque};
use std::fmt::{self, Write};

use crate::expr::{BinOp, Expr, Name, Type, UnOp};
use crate::program::{Action, NodeId, Program, MAIN};
use crate::value::Value;

use super::interval::{Bound, Interval};
use super::lockset::{compute_locksets, Lockset};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Mode {
    /// One interval per global, valid while none of its protecting mutexes
    /// is held.
    Protection,
    /// Interval box and equalities per mutex over the globals it protects.
    MutexMeet,
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Mode::Protection => "protection",
            Mode::MutexMeet => "mutexmeet",
        })
    }
}

/// Equivalence classes of variables; `cls[v]` is the least member of `v`'s
/// class.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct Partition(Vec<usize>);

impl Partition {
    pub fn discrete(n: usize) -> Self {
        Partition((0..n).collect())
    }

    fn normalize(&mut self) {
        let mut least: BTreeMap<usize, usize> = BTreeMap::new();
        for (v, &c) in self.0.iter().enumerate() {
            least.entry(c).or_insert(v);
        }
        for c in self.0.iter_mut() {
            *c = least[c];
        }
    }

    pub fn same(&self, a: usize, b: usize) -> bool {
        self.0[a] == self.0[b]
    }

    pub fn isolate(&mut self, v: usize) {
        self.0[v] = usize::MAX;
        self.normalize();
    }

    /// `v` takes the class of `u`.
    pub fn assign(&mut self, v: usize, u: usize) {
        if v == u {
            return;
        }
        self.isolate(v);
        self.0[v] = self.0[u];
        self.normalize();
    }

    pub fn merge(&mut self, a: usize, b: usize) {
        let (ca, cb) = (self.0[a], self.0[b]);
        for c in self.0.iter_mut() {
            if *c == cb {
                *c = ca;
            }
        }
        self.normalize();
    }

    /// Equalities holding in both.
    pub fn common(&self, o: &Partition) -> Partition {
        let mut ids: BTreeMap<(usize, usize), usize> = BTreeMap::new();
        let mut out = Vec::with_capacity(self.0.len());
        for v in 0..self.0.len() {
            let k = (self.0[v], o.0[v]);
            let id = *ids.entry(k).or_insert(v);
            out.push(id);
        }
        Partition(out)
    }

    /// Pairs `(a, b)` with `a < b` in one class, among `vars`.
    pub fn pairs(&self, vars: &[usize]) -> Vec<(usize, usize)> {
        let mut out = Vec::new();
        for (i, &a) in vars.iter().enumerate() {
            for &b in &vars[i + 1..] {
                if self.same(a, b) {
                    out.push((a, b));
                }
            }
        }
        out
    }
}

/// Abstract values of locals (first) and of the thread's view of globals.
#[derive(Clone, Debug, PartialEq, Eq)]
struct AState {
    vals: Vec<Interval>,
    eqs: Partition,
}

impl AState {
    /// Equalities implied by equal constants made explicit.
    fn saturated(&self) -> Partition {
        let mut p = self.eqs.clone();
        let mut by_value: BTreeMap<&Value, usize> = BTreeMap::new();
        for (v, i) in self.vals.iter().enumerate() {
            if let Some(c) = i.as_singleton() {
                match by_value.get(c) {
                    Some(&u) => p.merge(u, v),
                    None => {
                        by_value.insert(c, v);
                    }
                }
            }
        }
        p
    }

    fn join(&self, o: &AState) -> AState {
        AState {
            vals: self.vals.iter().zip(&o.vals).map(|(a, b)| a.join(b)).collect(),
            eqs: self.saturated().common(&o.saturated()),
        }
    }

    fn widen(&self, o: &AState) -> AState {
        AState {
            vals: self.vals.iter().zip(&o.vals).map(|(a, b)| a.widen(b)).collect(),
            eqs: self.saturated().common(&o.saturated()),
        }
    }

    fn checked(self) -> Option<AState> {
        (!self.vals.iter().any(Interval::is_empty)).then_some(self)
    }
}

/// Values of the globals of one mutex (others are empty) and equalities
/// among them.
#[derive(Clone, Debug, PartialEq, Eq)]
struct MInv {
    vals: Vec<Interval>,
    eqs: Partition,
}

impl MInv {
    fn saturated(&self) -> Partition {
        AState {
            vals: self.vals.clone(),
            eqs: self.eqs.clone(),
        }
        .saturated()
    }

    fn join(&self, o: &MInv, widen: bool) -> MInv {
        MInv {
            vals: self
                .vals
                .iter()
                .zip(&o.vals)
                .map(|(a, b)| if widen { a.widen(&a.join(b)) } else { a.join(b) })
                .collect(),
            eqs: self.saturated().common(&o.saturated()),
        }
    }
}

/// Flow-insensitive facts shared between threads.
#[derive(Clone, Debug, PartialEq, Eq)]
struct Shared {
    /// Every value a global may hold once threads run.
    written: Vec<Interval>,
    protected: Vec<Interval>,
    minv: Vec<Option<MInv>>,
    /// Locals of created threads, per template.
    entry: Vec<Option<AState>>,
}

impl Shared {
    fn bottom(p: &Program) -> Self {
        Shared {
            written: vec![Interval::Empty; p.globals.len()],
            protected: vec![Interval::Empty; p.globals.len()],
            minv: vec![None; p.mutexes.len()],
            entry: vec![None; p.templates.len()],
        }
    }

    fn join(&self, o: &Shared, widen: bool) -> Shared {
        let iv = |a: &Interval, b: &Interval| if widen { a.widen(&a.join(b)) } else { a.join(b) };
        Shared {
            written: self.written.iter().zip(&o.written).map(|(a, b)| iv(a, b)).collect(),
            protected: self.protected.iter().zip(&o.protected).map(|(a, b)| iv(a, b)).collect(),
            minv: self
                .minv
                .iter()
                .zip(&o.minv)
                .map(|(a, b)| match (a, b) {
                    (Some(a), Some(b)) => Some(a.join(b, widen)),
                    (x, None) | (None, x) => x.clone(),
                })
                .collect(),
            entry: self
                .entry
                .iter()
                .zip(&o.entry)
                .map(|(a, b)| match (a, b) {
                    (Some(a), Some(b)) => Some(if widen { a.widen(&a.join(b)) } else { a.join(b) }),
                    (x, None) | (None, x) => x.clone(),
                })
                .collect(),
        }
    }
}

/// Facts about the globals a thread has protected at a node.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct NodeFacts {
    pub globals: BTreeMap<Name, Interval>,
    pub equalities: BTreeSet<(Name, Name)>,
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct MutexInvariant {
    pub bounds: BTreeMap<Name, Interval>,
    pub equalities: BTreeSet<(Name, Name)>,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ProtectionResult {
    pub mode: Mode,
    /// Mutexes held at every write to each global once threads run.
    pub protecting: BTreeMap<Name, BTreeSet<Name>>,
    /// Values of each global while none of its protecting mutexes is held.
    pub protected: BTreeMap<Name, Interval>,
    /// Globals protected by each mutex.
    pub guarded: BTreeMap<Name, BTreeSet<Name>>,
    /// Holds whenever the mutex is free; absent if the mutex is never free
    /// while threads run.
    pub mutex_invariants: BTreeMap<Name, MutexInvariant>,
    /// Per reachable node.
    pub node_facts: BTreeMap<NodeId, NodeFacts>,
}

impl ProtectionResult {
    pub fn dump(&self) -> String {
        let mut out = String::new();
        let set = |s: &BTreeSet<Name>| s.iter().cloned().collect::<Vec<_>>().join(",");
        for (g, ms) in &self.protecting {
            writeln!(out, "{g}: M[{g}]={{{}}} [{g}]={}", set(ms), self.protected[g]).unwrap();
        }
        for (m, gs) in &self.guarded {
            let inv = match self.mutex_invariants.get(m) {
                None => "bottom".to_string(),
                Some(inv) => {
                    let mut parts: Vec<String> = inv.bounds.iter().map(|(g, i)| format!("{g} in {i}")).collect();
                    parts.extend(inv.equalities.iter().map(|(a, b)| format!("{a} == {b}")));
                    parts.join(", ")
                }
            };
            writeln!(out, "{m}: G[{m}]={{{}}} [{m}]={inv}", set(gs)).unwrap();
        }
        out
    }
}

/// Main-thread nodes that no thread-creating path reaches.
pub fn single_threaded_nodes(p: &Program) -> BTreeSet<NodeId> {
    let Some(main) = p.main() else { return BTreeSet::new() };
    let reach = |from: Vec<NodeId>| {
        let mut seen: BTreeSet<NodeId> = from.iter().copied().collect();
        let mut q: VecDeque<NodeId> = from.into();
        while let Some(u) = q.pop_front() {
            for (_, e) in main.out_edges(u) {
                if seen.insert(e.dst) {
                    q.push_back(e.dst);
                }
            }
        }
        seen
    };
    let after_create: Vec<NodeId> = main
        .edges
        .iter()
        .filter(|e| e.action.members().iter().any(|a| matches!(a, Action::Create(_))))
        .map(|e| e.dst)
        .collect();
    let multi = reach(after_create);
    reach(vec![main.initial]).difference(&multi).copied().collect()
}

/// Protecting mutexes of every global: the intersection of the locksets
/// at its writes while threads may run. Globals never written then are
/// protected by every mutex.
pub fn infer_protection(p: &Program) -> BTreeMap<Name, BTreeSet<Name>> {
    let locksets = compute_locksets(p);
    let st = single_threaded_nodes(p);
    let all: BTreeSet<Name> = p.mutexes.iter().cloned().collect();
    let mut out: BTreeMap<Name, Option<BTreeSet<Name>>> = p.globals.iter().map(|g| (g.name.clone(), None)).collect();
    for t in &p.templates {
        for e in &t.edges {
            let Some(ls) = locksets.get(&e.src) else { continue };
            let mut ls = ls.clone();
            let mut single = st.contains(&e.src);
            for a in e.action.members() {
                match a {
                    Action::Lock(m) => {
                        ls.insert(m.clone());
                    }
                    Action::Unlock(m) => {
                        ls.remove(m);
                    }
                    Action::Create(_) => single = false,
                    Action::GlobalWrite { global, .. } if !single => {
                        let entry = out.get_mut(global).unwrap();
                        *entry = Some(match entry.take() {
                            None => ls.clone(),
                            Some(s) => s.intersection(&ls).cloned().collect(),
                        });
                    }
                    _ => {}
                }
            }
        }
    }
    out.into_iter().map(|(g, s)| (g, s.unwrap_or_else(|| all.clone()))).collect()
}

struct Engine<'p> {
    p: &'p Program,
    mode: Mode,
    nl: usize,
    locksets: BTreeMap<NodeId, Lockset>,
    st: BTreeSet<NodeId>,
    /// Protecting mutex indices per global.
    prot: Vec<BTreeSet<usize>>,
    /// Protected global indices per mutex.
    guarded: Vec<Vec<usize>>,
}

/// Contributions of one pass to the shared facts.
struct Sink {
    shared: Shared,
}

impl Engine<'_> {
    fn mutex(&self, m: &str) -> usize {
        self.p.mutex_index(m).unwrap()
    }

    fn global(&self, g: &str) -> usize {
        self.p.global_index(g).unwrap()
    }

    fn view_ok(&self, st: bool, ls: &Lockset, g: usize) -> bool {
        st || ls.iter().any(|m| self.prot[g].contains(&self.mutex(m)))
    }

    fn read(&self, s: &AState, st: bool, ls: &Lockset, g: usize, shared: &Shared) -> Interval {
        if self.view_ok(st, ls, g) {
            s.vals[self.nl + g].clone()
        } else {
            shared.written[g].join(&shared.protected[g])
        }
    }

    fn eval(&self, e: &Expr, s: &AState, placeholder: Option<&Interval>) -> Interval {
        match e {
            Expr::Int(v) => Interval::singleton(v.clone()),
            Expr::Bool(b) => Interval::of_bool(*b),
            Expr::Var(x) => match self.p.local_index(x) {
                Some(i) => s.vals[i].clone(),
                None => Interval::top(),
            },
            Expr::Global => placeholder.cloned().unwrap_or_else(Interval::top),
            Expr::SelfIs(_) => Interval::bool_top(),
            Expr::Unary(UnOp::Neg, a) => self.eval(a, s, placeholder).neg(),
            Expr::Unary(UnOp::Not, a) => self.eval(a, s, placeholder).not(),
            Expr::Binary(op, a, b) => {
                let (x, y) = (self.eval(a, s, placeholder), self.eval(b, s, placeholder));
                match op {
                    BinOp::Add => x.add(&y),
                    BinOp::Sub => x.sub(&y),
                    BinOp::Mul => x.mul(&y),
                    BinOp::Div => x.div(&y),
                    BinOp::Rem => x.rem(&y),
                    BinOp::Lt => x.lt(&y),
                    BinOp::Le => x.le(&y),
                    BinOp::Gt => y.lt(&x),
                    BinOp::Ge => y.le(&x),
                    BinOp::Eq => x.eq(&y),
                    BinOp::Ne => x.eq(&y).not(),
                    BinOp::And => x.and(&y),
                    BinOp::Or => x.or(&y),
                    BinOp::Implies => x.implies(&y),
                }
            }
        }
    }

    /// Restricts `s` to states where `c` evaluates to `truth`.
    fn refine(&self, s: &AState, c: &Expr, truth: bool) -> Option<AState> {
        let mut out = s.clone();
        match c {
            Expr::Unary(UnOp::Not, a) => return self.refine(s, a, !truth),
            Expr::Binary(BinOp::And, a, b) if truth => {
                let s1 = self.refine(s, a, true)?;
                return self.refine(&s1, b, true);
            }
            Expr::Binary(BinOp::Or, a, b) if !truth => {
                let s1 = self.refine(s, a, false)?;
                return self.refine(&s1, b, false);
            }
            Expr::Binary(BinOp::And, a, b) | Expr::Binary(BinOp::Or, a, b) => {
                return match (self.refine(s, a, truth), self.refine(s, b, truth)) {
                    (Some(x), Some(y)) => Some(x.join(&y)),
                    (x, None) | (None, x) => x,
                };
            }
            Expr::Var(x) => {
                if let Some(i) = self.p.local_index(x) {
                    if !truth {
                        out.vals[i] = out.vals[i].meet(&Interval::of_bool(false));
                    } else if self.p.locals[i].ty == Type::Bool {
                        out.vals[i] = out.vals[i].meet(&Interval::of_bool(true));
                    }
                }
            }
            Expr::Binary(op, a, b) => {
                let op = if truth { Some(*op) } else { negate(*op) };
                if let Some(op) = op {
                    match (&**a, &**b) {
                        (Expr::Var(x), k) if is_const(k) => self.restrict(&mut out, x, op, &self.eval(k, s, None)),
                        (k, Expr::Var(x)) if is_const(k) => {
                            self.restrict(&mut out, x, flip(op), &self.eval(k, s, None))
                        }
                        _ => {}
                    }
                }
            }
            _ => {}
        }
        let out = out.checked()?;
        let v = self.eval(c, &out, None);
        let possible = if truth { v.as_singleton() != Some(&Value::ZERO) } else { v.contains_zero() };
        (possible && !v.is_empty()).then_some(out)
    }

    fn restrict(&self, s: &mut AState, x: &str, op: BinOp, k: &Interval) {
        let (Some(i), Some(c)) = (self.p.local_index(x), k.as_singleton()) else { return };
        let c = c.clone();
        let one = Value::ONE;
        let allowed = match op {
            BinOp::Lt => Interval::new(Bound::NegInf, Bound::Fin(c.sub(&one))),
            BinOp::Le => Interval::new(Bound::NegInf, Bound::Fin(c)),
            BinOp::Gt => Interval::new(Bound::Fin(c.add(&one)), Bound::PosInf),
            BinOp::Ge => Interval::new(Bound::Fin(c), Bound::PosInf),
            BinOp::Eq => Interval::singleton(c),
            BinOp::Ne => {
                let cur = &s.vals[i];
                match cur.bounds() {
                    Some((Bound::Fin(lo), hi)) if *lo == c => Interval::new(Bound::Fin(c.add(&one)), hi.clone()),
                    Some((lo, Bound::Fin(hi))) if *hi == c => Interval::new(lo.clone(), Bound::Fin(c.sub(&one))),
                    _ => return,
                }
            }
            _ => return,
        };
        s.vals[i] = s.vals[i].meet(&allowed);
    }

    /// Facts made shared when the program turns multithreaded.
    fn phase_end(&self, s: &AState, sink: &mut Sink) {
        for g in 0..self.p.globals.len() {
            let v = &s.vals[self.nl + g];
            sink.shared.written[g] = sink.shared.written[g].join(v);
            sink.shared.protected[g] = sink.shared.protected[g].join(v);
        }
        for m in 0..self.p.mutexes.len() {
            let inv = self.minv_of(s, true, &Lockset::new(), m, &sink.shared.clone());
            join_minv(&mut sink.shared.minv[m], inv);
        }
    }

    fn minv_of(&self, s: &AState, st: bool, ls: &Lockset, m: usize, shared: &Shared) -> MInv {
        let ng = self.p.globals.len();
        let mut vals = vec![Interval::Empty; ng];
        let mut eqs = Partition::discrete(ng);
        let ok: Vec<usize> = self.guarded[m].iter().copied().filter(|&g| self.view_ok(st, ls, g)).collect();
        for &g in &self.guarded[m] {
            vals[g] = self.read(s, st, ls, g, shared);
        }
        let vars: Vec<usize> = ok.iter().map(|g| self.nl + g).collect();
        for (a, b) in s.eqs.pairs(&vars) {
            eqs.merge(a - self.nl, b - self.nl);
        }
        MInv { vals, eqs }
    }

    /// Applies an edge's action; `sink` collects shared contributions.
    fn transfer(
        &self,
        action: &Action,
        s: &AState,
        ls: &Lockset,
        st: bool,
        dst_st: bool,
        shared: &Shared,
        mut sink: Option<&mut Sink>,
    ) -> Option<AState> {
        let mut s = s.clone();
        let mut ls = ls.clone();
        let mut st = st;
        let nl = self.nl;
        for a in action.members() {
            match a {
                Action::Lock(m) => {
                    let mi = self.mutex(m);
                    if !st {
                        match self.mode {
                            Mode::Protection => {
                                for g in 0..self.p.globals.len() {
                                    if self.prot[g].contains(&mi) {
                                        self.reset(&mut s, &ls, g, &shared.protected[g]);
                                    }
                                }
                            }
                            Mode::MutexMeet => {
                                let inv = shared.minv[mi].as_ref()?;
                                for &g in &self.guarded[mi] {
                                    self.reset(&mut s, &ls, g, &inv.vals[g]);
                                }
                                let gs = &self.guarded[mi];
                                for (a, b) in inv.eqs.pairs(gs) {
                                    s.eqs.merge(nl + a, nl + b);
                                }
                            }
                        }
                    }
                    ls.insert(m.clone());
                }
                Action::Unlock(m) => {
                    let mi = self.mutex(m);
                    if let (false, Some(sink)) = (st, sink.as_deref_mut()) {
                        for g in 0..self.p.globals.len() {
                            if self.prot[g].contains(&mi) {
                                let v = self.read(&s, st, &ls, g, shared);
                                sink.shared.protected[g] = sink.shared.protected[g].join(&v);
                            }
                        }
                        let inv = self.minv_of(&s, st, &ls, mi, shared);
                        join_minv(&mut sink.shared.minv[mi], inv);
                    }
                    ls.remove(m);
                }
                Action::Create(t) => {
                    if let Some(sink) = sink.as_deref_mut() {
                        let ti = self.p.template_index(t).unwrap();
                        let mut child = s.clone();
                        for g in 0..self.p.globals.len() {
                            child.vals[nl + g] = Interval::top();
                            child.eqs.isolate(nl + g);
                        }
                        sink.shared.entry[ti] = Some(match sink.shared.entry[ti].take() {
                            Some(old) => old.join(&child),
                            None => child,
                        });
                        if st {
                            self.phase_end(&s, sink);
                        }
                    }
                    st = false;
                }
                Action::LocalUpdate { local, value } => {
                    let i = self.p.local_index(local).unwrap();
                    s.vals[i] = self.eval(value, &s, None);
                    match value {
                        Expr::Var(y) if self.p.local_index(y).is_some() => s.eqs.assign(i, self.p.local_index(y).unwrap()),
                        _ => s.eqs.isolate(i),
                    }
                }
                Action::GlobalRead { local, global, value } => {
                    let i = self.p.local_index(local).unwrap();
                    let g = self.global(global);
                    let r = self.read(&s, st, &ls, g, shared);
                    s.vals[i] = self.eval(value, &s, Some(&r));
                    if matches!(value, Expr::Global) && self.view_ok(st, &ls, g) {
                        s.eqs.assign(i, nl + g);
                    } else {
                        s.eqs.isolate(i);
                    }
                }
                Action::GlobalWrite { global, value } => {
                    let g = self.global(global);
                    let v = self.eval(value, &s, None);
                    if let Some(sink) = sink.as_deref_mut() {
                        sink.shared.written[g] = sink.shared.written[g].join(&v);
                    }
                    s.vals[nl + g] = v;
                    match value {
                        Expr::Var(y) if self.p.local_index(y).is_some() => {
                            s.eqs.assign(nl + g, self.p.local_index(y).unwrap())
                        }
                        _ => s.eqs.isolate(nl + g),
                    }
                }
                Action::Assert { .. } => {}
                Action::Pos(c) => s = self.refine(&s, c, true)?,
                Action::Neg(c) => s = self.refine(&s, c, false)?,
                Action::Atomic(_) => unreachable!("nested atomic"),
            }
            s = s.checked()?;
        }
        if st && !dst_st {
            if let Some(sink) = sink {
                self.phase_end(&s, sink);
            }
        }
        Some(s)
    }

    /// The view of `g` after acquiring a mutex whose invariant bounds it by
    /// `bound`.
    fn reset(&self, s: &mut AState, ls: &Lockset, g: usize, bound: &Interval) {
        let i = self.nl + g;
        if self.view_ok(false, ls, g) {
            s.vals[i] = s.vals[i].meet(bound);
        } else {
            s.vals[i] = bound.clone();
            s.eqs.isolate(i);
        }
    }

    fn entry_state(&self, ti: usize, shared: &Shared) -> Option<AState> {
        let n = self.nl + self.p.globals.len();
        if self.p.templates[ti].name == MAIN {
            let mut vals = vec![Interval::singleton(Value::ZERO); self.nl];
            vals.extend(self.p.globals.iter().map(|g| Interval::singleton(g.init.clone())));
            Some(AState {
                vals,
                eqs: Partition::discrete(n),
            })
        } else {
            shared.entry[ti].clone()
        }
    }

    /// Node states of one template under fixed shared facts.
    fn template_states(&self, ti: usize, shared: &Shared) -> BTreeMap<NodeId, AState> {
        let t = &self.p.templates[ti];
        let mut states: BTreeMap<NodeId, AState> = BTreeMap::new();
        let Some(entry) = self.entry_state(ti, shared) else { return states };
        states.insert(t.initial, entry);
        let mut visits: BTreeMap<NodeId, usize> = BTreeMap::new();
        let mut work = VecDeque::from([t.initial]);
        let empty = Lockset::new();
        while let Some(u) = work.pop_front() {
            let s = states[&u].clone();
            let ls = self.locksets.get(&u).unwrap_or(&empty);
            for (_, e) in t.out_edges(u) {
                let st = self.st.contains(&u);
                let Some(post) = self.transfer(&e.action, &s, ls, st, self.st.contains(&e.dst), shared, None) else {
                    continue;
                };
                let new = match states.get(&e.dst) {
                    None => post,
                    Some(old) => {
                        let j = old.join(&post);
                        if visits.get(&e.dst).copied().unwrap_or(0) >= 3 {
                            old.widen(&j)
                        } else {
                            j
                        }
                    }
                };
                if states.get(&e.dst) != Some(&new) {
                    states.insert(e.dst, new);
                    *visits.entry(e.dst).or_default() += 1;
                    if !work.contains(&e.dst) {
                        work.push_back(e.dst);
                    }
                }
            }
        }
        // descending passes
        for _ in 0..2 {
            let nodes: Vec<NodeId> = states.keys().copied().filter(|n| *n != t.initial).collect();
            for v in nodes {
                let mut acc: Option<AState> = None;
                for e in t.edges.iter().filter(|e| e.dst == v) {
                    let Some(s) = states.get(&e.src) else { continue };
                    let ls = self.locksets.get(&e.src).unwrap_or(&empty);
                    let st = self.st.contains(&e.src);
                    if let Some(post) = self.transfer(&e.action, s, ls, st, self.st.contains(&v), shared, None) {
                        acc = Some(match acc {
                            None => post,
                            Some(a) => a.join(&post),
                        });
                    }
                }
                if let Some(new) = acc {
                    let old = &states[&v];
                    let narrowed = AState {
                        vals: old.vals.iter().zip(&new.vals).map(|(a, b)| a.narrow(b)).collect(),
                        eqs: new.eqs,
                    };
                    if let Some(n) = narrowed.checked() {
                        states.insert(v, n);
                    }
                }
            }
        }
        states
    }
}

fn join_minv(slot: &mut Option<MInv>, inv: MInv) {
    *slot = Some(match slot.take() {
        None => inv,
        Some(old) => old.join(&inv, false),
    });
}

fn is_const(e: &Expr) -> bool {
    matches!(e, Expr::Int(_) | Expr::Bool(_)) || matches!(e, Expr::Unary(UnOp::Neg, a) if matches!(**a, Expr::Int(_)))
}

fn negate(op: BinOp) -> Option<BinOp> {
    Some(match op {
        BinOp::Lt => BinOp::Ge,
        BinOp::Le => BinOp::Gt,
        BinOp::Gt => BinOp::Le,
        BinOp::Ge => BinOp::Lt,
        BinOp::Eq => BinOp::Ne,
        BinOp::Ne => BinOp::Eq,
        _ => return None,
    })
}

fn flip(op: BinOp) -> BinOp {
    match op {
        BinOp::Lt => BinOp::Gt,
        BinOp::Le => BinOp::Ge,
        BinOp::Gt => BinOp::Lt,
        BinOp::Ge => BinOp::Le,
        other => other,
    }
}

const MAX_ROUNDS: usize = 60;

pub fn run_protection_analysis(p: &Program) -> ProtectionResult {
    run(p, Mode::Protection)
}

pub fn run_mutexmeet_analysis(p: &Program) -> ProtectionResult {
    run(p, Mode::MutexMeet)
}

pub fn run(p: &Program, mode: Mode) -> ProtectionResult {
    let protecting = infer_protection(p);
    let prot: Vec<BTreeSet<usize>> = p
        .globals
        .iter()
        .map(|g| protecting[&g.name].iter().map(|m| p.mutex_index(m).unwrap()).collect())
        .collect();
    let guarded: Vec<Vec<usize>> = (0..p.mutexes.len())
        .map(|m| (0..p.globals.len()).filter(|&g| prot[g].contains(&m)).collect())
        .collect();
    let engine = Engine {
        p,
        mode,
        nl: p.locals.len(),
        locksets: compute_locksets(p),
        st: single_threaded_nodes(p),
        prot,
        guarded,
    };
    let mut shared = Shared::bottom(p);
    let mut states: Vec<BTreeMap<NodeId, AState>>;
    let mut round = 0;
    loop {
        states = (0..p.templates.len()).map(|ti| engine.template_states(ti, &shared)).collect();
        let mut sink = Sink {
            shared: Shared::bottom(p),
        };
        let empty = Lockset::new();
        for (ti, t) in p.templates.iter().enumerate() {
            for e in &t.edges {
                let Some(s) = states[ti].get(&e.src) else { continue };
                let ls = engine.locksets.get(&e.src).unwrap_or(&empty);
                let st = engine.st.contains(&e.src);
                engine.transfer(&e.action, s, ls, st, engine.st.contains(&e.dst), &shared, Some(&mut sink));
            }
        }
        round += 1;
        let next = shared.join(&sink.shared, round > 3);
        if next == shared || round >= MAX_ROUNDS {
            break;
        }
        shared = next;
    }

    let name = |g: usize| p.globals[g].name.clone();
    let protected = p
        .globals
        .iter()
        .enumerate()
        .map(|(g, d)| {
            let iv = if engine.prot[g].is_empty() {
                Interval::top()
            } else {
                shared.protected[g].clone()
            };
            (d.name.clone(), iv)
        })
        .collect();
    let guarded_names = p
        .mutexes
        .iter()
        .enumerate()
        .map(|(m, n)| (n.clone(), engine.guarded[m].iter().map(|&g| name(g)).collect()))
        .collect();
    let mutex_invariants = p
        .mutexes
        .iter()
        .enumerate()
        .filter_map(|(m, n)| {
            let inv = shared.minv[m].as_ref()?;
            let gs = &engine.guarded[m];
            Some((
                n.clone(),
                MutexInvariant {
                    bounds: gs.iter().map(|&g| (name(g), inv.vals[g].clone())).collect(),
                    equalities: inv.saturated().pairs(gs).into_iter().map(|(a, b)| (name(a), name(b))).collect(),
                },
            ))
        })
        .collect();
    let mut node_facts = BTreeMap::new();
    let empty = Lockset::new();
    for st_map in &states {
        for (n, s) in st_map {
            let ls = engine.locksets.get(n).unwrap_or(&empty);
            let st = engine.st.contains(n);
            let ok: Vec<usize> = (0..p.globals.len()).filter(|&g| engine.view_ok(st, ls, g)).collect();
            let vars: Vec<usize> = ok.iter().map(|g| engine.nl + g).collect();
            node_facts.insert(
                *n,
                NodeFacts {
                    globals: ok.iter().map(|&g| (name(g), s.vals[engine.nl + g].clone())).collect(),
                    equalities: s
                        .saturated()
                        .pairs(&vars)
                        .into_iter()
                        .map(|(a, b)| (name(a - engine.nl), name(b - engine.nl)))
                        .collect(),
                },
            );
        }
    }
    ProtectionResult {
        mode,
        protecting,
        protected,
        guarded: guarded_names,
        mutex_invariants,
        node_facts,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::frontend::parse_program;

    const RUNNING_EXAMPLE: &str = "global used: int = 0; mutex m; local tmp: int;
        thread main { create(t1); lock(m); tmp = used; assert(tmp == 0); unlock(m); }
        thread t1 { lock(m); used = 47; used = 0; unlock(m); }";

    fn iv(lo: i64, hi: i64) -> Interval {
        Interval::new(Bound::Fin(lo.into()), Bound::Fin(hi.into()))
    }

    #[test]
    fn running_example() {
        let (p, _) = parse_program(RUNNING_EXAMPLE).unwrap();
        let r = run_protection_analysis(&p);
        assert_eq!(r.protecting["used"], BTreeSet::from(["m".to_string()]));
        assert_eq!(r.protected["used"], iv(0, 0));
        let r = run_mutexmeet_analysis(&p);
        assert_eq!(r.mutex_invariants["m"].bounds["used"], iv(0, 0));
        assert!(r.dump().contains("used: M[used]={m} [used]=[0,0]"), "{}", r.dump());
    }

    #[test]
    fn unlock_while_dirty() {
        let (p, _) = parse_program(&RUNNING_EXAMPLE.replace("used = 47; used = 0; unlock(m);", "used = 47; unlock(m); lock(m); used = 0; unlock(m);")).unwrap();
        let r = run_protection_analysis(&p);
        assert!(iv(0, 47).leq(&r.protected["used"]));
    }

    #[test]
    fn unprotected_write() {
        let (p, _) = parse_program("global g: int = 0; mutex m; thread main { create(t); } thread t { g = 1; }").unwrap();
        let r = run_protection_analysis(&p);
        assert!(r.protecting["g"].is_empty());
        assert!(r.protected["g"].is_top());
    }

    #[test]
    fn intersection_of_write_locksets() {
        let (p, _) = parse_program(
            "global g: int = 0; mutex m1; mutex m2;
             thread main { create(a); create(b); }
             thread a { lock(m1); lock(m2); g = 1; unlock(m2); unlock(m1); }
             thread b { lock(m1); g = 2; unlock(m1); }",
        )
        .unwrap();
        assert_eq!(infer_protection(&p)["g"], BTreeSet::from(["m1".to_string()]));
    }

    #[test]
    fn unwritten_global_keeps_initial_value() {
        let (p, _) = parse_program("global g: int = 5; mutex m; local x: int; thread main { create(t); } thread t { lock(m); x = g; unlock(m); }").unwrap();
        let r = run_protection_analysis(&p);
        assert_eq!(r.protecting["g"], BTreeSet::from(["m".to_string()]));
        assert_eq!(r.protected["g"], iv(5, 5));
    }

    #[test]
    fn equality_reestablished_before_unlock() {
        let (p, _) = parse_program(
            "global x: int = 0; global y: int = 0; mutex m; local t: int;
             thread main { create(w); create(w); }
             thread w { lock(m); t = x; t = t + 1; x = t; y = t; unlock(m); }",
        )
        .unwrap();
        let r = run_mutexmeet_analysis(&p);
        let inv = &r.mutex_invariants["m"];
        assert!(inv.equalities.contains(&("x".to_string(), "y".to_string())), "{}", r.dump());
    }

    #[test]
    fn single_threaded_prefix() {
        let (p, _) = parse_program("global g: int = 0; thread main { g = 3; create(t); g = 4; } thread t { }").unwrap();
        let st = single_threaded_nodes(&p);
        assert_eq!(st.len(), 2);
        // the write before the create does not count
        assert!(infer_protection(&p)["g"].is_empty());
    }

    #[test]
    fn loops_terminate() {
        let (p, _) = parse_program(
            "global g: int = 0; mutex m; local i: int;
             thread main { create(t); create(t); }
             thread t { while (i < 100) { lock(m); i = g; g = i + 1; unlock(m); } }",
        )
        .unwrap();
        let r = run_protection_analysis(&p);
        assert!(r.protected["g"].contains(&Value::from(100)));
    }
}
