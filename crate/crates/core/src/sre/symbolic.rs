//! Symbolic derivatives: next literals, derivatives over literals, prefix
//! enumeration and distance to a dead state.

use std::collections::{HashMap, HashSet, VecDeque};
use std::sync::Arc;

use thiserror::Error;

use super::{Kind, Sre, SymTrace};
use crate::events::{constr_event, includes, EffectSignature, SymEvent, Tri};
use crate::logic::simplify::simplify_with;
use crate::logic::{fresh_sym, Formula, SatResult, Solver, Term};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum SreError {
    #[error("literal {lit} is neither included in nor disjoint from {node}")]
    NotAPrefix { lit: String, node: String },
    #[error("inclusion check undecided")]
    Unknown,
    #[error("next-literal set of size {0} exceeds the cap")]
    TooManyLiterals(usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum DistToDead {
    Dist(usize),
    AboveCutoff,
}

/// Shared state for symbolic operations on SREs over one signature.
pub struct SreCtx {
    pub delta: EffectSignature,
    pub solver: Solver,
    pub literal_cap: usize,
    next_memo: HashMap<u64, Arc<Vec<SymEvent>>>,
    deriv_memo: HashMap<(u64, SymEvent), Result<Sre, SreError>>,
    incl_memo: HashMap<(SymEvent, SymEvent), Tri>,
    sat_memo: HashMap<SymEvent, bool>,
    dist_memo: HashMap<(u64, usize), DistToDead>,
    simp_memo: HashMap<SymEvent, SymEvent>,
    conj_memo: HashMap<Formula, bool>,
    local_syms: HashMap<Arc<str>, Vec<Term>>,
    pd_memo: HashMap<u64, Arc<Vec<(SymEvent, Sre)>>>,
}

fn complement_of_set(set: &[SymEvent]) -> SymEvent {
    set.iter().fold(SymEvent::bottom(), |acc, l| acc.join(l)).complement()
}

impl SreCtx {
    pub fn new(delta: EffectSignature, solver: Solver) -> SreCtx {
        SreCtx {
            delta,
            solver,
            literal_cap: 256,
            next_memo: HashMap::new(),
            deriv_memo: HashMap::new(),
            incl_memo: HashMap::new(),
            sat_memo: HashMap::new(),
            dist_memo: HashMap::new(),
            simp_memo: HashMap::new(),
            conj_memo: HashMap::new(),
            local_syms: HashMap::new(),
            pd_memo: HashMap::new(),
        }
    }

    pub fn includes(&mut self, sub: &SymEvent, sup: &SymEvent) -> Tri {
        let key = (sub.clone(), sup.clone());
        if let Some(t) = self.incl_memo.get(&key) {
            return *t;
        }
        let t = includes(sub, sup, &self.delta, &mut self.solver);
        self.incl_memo.insert(key, t);
        t
    }

    /// Whether some interpretation admits some event of `l`.
    pub fn satisfiable(&mut self, l: &SymEvent) -> bool {
        if l.is_empty_in(&self.delta) {
            return false;
        }
        if let Some(b) = self.sat_memo.get(l) {
            return *b;
        }
        let f = constr_event(l, &self.delta);
        // an undecided literal is kept
        let b = !matches!(self.solver.check_sat(&f), SatResult::Unsat);
        self.sat_memo.insert(l.clone(), b);
        b
    }

    /// Minimizes every qualifier of `l` modulo the theory.
    pub fn simplify(&mut self, l: &SymEvent) -> SymEvent {
        if let Some(s) = self.simp_memo.get(l) {
            return s.clone();
        }
        let mut atoms = std::collections::BTreeMap::new();
        for (k, q) in l.atoms() {
            let Some(decl) = self.delta.get(k) else {
                atoms.insert(k.clone(), q.clone());
                continue;
            };
            let locals = self
                .local_syms
                .entry(k.clone())
                .or_insert_with(|| {
                    decl.local_sorts().enumerate().map(|(i, s)| Term::sym(&fresh_sym(s.clone(), &format!("{k}.{i}")))).collect()
                })
                .clone();
            let (solver, memo) = (&mut self.solver, &mut self.conj_memo);
            let mut sat = |f: &Formula| {
                let g = f.instantiate_locals(&locals);
                *memo.entry(g.clone()).or_insert_with(|| !matches!(solver.check_sat(&g), SatResult::Unsat))
            };
            atoms.insert(k.clone(), simplify_with(q, &mut sat));
        }
        let s = SymEvent::from_parts(atoms, l.others_included());
        self.simp_memo.insert(l.clone(), s.clone());
        s
    }

    fn clean(&mut self, set: Vec<SymEvent>) -> Vec<SymEvent> {
        let mut seen = HashSet::new();
        let set: Vec<SymEvent> = set.iter().map(|l| self.simplify(l)).collect();
        let mut out: Vec<SymEvent> = set
            .into_iter()
            .filter(|l| !l.is_empty_in(&self.delta))
            .filter(|l| seen.insert(l.clone()))
            .collect();
        out.sort();
        if out.is_empty() {
            out.push(SymEvent::bottom());
        }
        out
    }

    fn join_sets(&mut self, a: &[SymEvent], b: &[SymEvent]) -> Vec<SymEvent> {
        let (ca, cb) = (complement_of_set(a), complement_of_set(b));
        let mut out = Vec::new();
        for x in a {
            for y in b {
                out.push(x.meet(y));
            }
            out.push(x.meet(&cb));
        }
        for y in b {
            out.push(ca.meet(y));
        }
        self.clean(out)
    }

    fn meet_sets(&mut self, a: &[SymEvent], b: &[SymEvent]) -> Vec<SymEvent> {
        let mut out = Vec::new();
        for x in a {
            for y in b {
                out.push(x.meet(y));
            }
        }
        self.clean(out)
    }

    /// Next literals of `r`; `[⊥]` stands for "no admissible literal".
    pub fn next_literals(&mut self, r: &Sre) -> Result<Arc<Vec<SymEvent>>, SreError> {
        if let Some(v) = self.next_memo.get(&r.id()) {
            return Ok(v.clone());
        }
        let v = match r.kind() {
            Kind::Empty | Kind::Eps => vec![SymEvent::bottom()],
            Kind::Lit(l) => self.clean(vec![l.clone()]),
            Kind::Star(a) => self.next_literals(a)?.to_vec(),
            Kind::Concat(a, b) => {
                let na = self.next_literals(a)?;
                if a.nullable() {
                    let nb = self.next_literals(b)?;
                    self.join_sets(&na, &nb)
                } else {
                    na.to_vec()
                }
            }
            Kind::Not(a) => {
                let na = self.next_literals(a)?;
                let mut v = na.to_vec();
                v.push(complement_of_set(&na));
                self.clean(v)
            }
            Kind::And(xs) | Kind::Or(xs) => {
                let mut acc = self.next_literals(&xs[0])?.to_vec();
                for x in &xs[1..] {
                    let nx = self.next_literals(x)?;
                    acc = if matches!(r.kind(), Kind::And(_)) {
                        self.meet_sets(&acc, &nx)
                    } else {
                        self.join_sets(&acc, &nx)
                    };
                    if acc.len() > self.literal_cap {
                        return Err(SreError::TooManyLiterals(acc.len()));
                    }
                }
                acc
            }
        };
        if v.len() > self.literal_cap {
            return Err(SreError::TooManyLiterals(v.len()));
        }
        let v = Arc::new(v.into_iter().filter(|l| !l.is_bottom()).collect::<Vec<_>>());
        self.next_memo.insert(r.id(), v.clone());
        Ok(v)
    }

    /// The literal covering every event not covered by `next_literals(r)`.
    pub fn complement_literal(&mut self, r: &Sre) -> Result<SymEvent, SreError> {
        Ok(complement_of_set(&self.next_literals(r)?))
    }

    pub fn deriv_literal(&mut self, r: &Sre, l: &SymEvent) -> Result<Sre, SreError> {
        let key = (r.id(), l.clone());
        if let Some(d) = self.deriv_memo.get(&key) {
            return d.clone();
        }
        let d = self.deriv_uncached(r, l);
        self.deriv_memo.insert(key, d.clone());
        d
    }

    fn deriv_uncached(&mut self, r: &Sre, l: &SymEvent) -> Result<Sre, SreError> {
        Ok(match r.kind() {
            Kind::Empty | Kind::Eps => Sre::empty(),
            Kind::Lit(m) => match self.includes(l, m) {
                Tri::True => Sre::eps(),
                Tri::False => match self.includes(l, &m.complement()) {
                    Tri::True => Sre::empty(),
                    Tri::False => {
                        return Err(SreError::NotAPrefix { lit: l.to_string(), node: r.to_string() })
                    }
                    Tri::Unknown => return Err(SreError::Unknown),
                },
                Tri::Unknown => return Err(SreError::Unknown),
            },
            Kind::Star(a) => Sre::concat(self.deriv_literal(a, l)?, r.clone()),
            Kind::Concat(a, b) => {
                let left = Sre::concat(self.deriv_literal(a, l)?, b.clone());
                if a.nullable() {
                    Sre::or2(left, self.deriv_literal(b, l)?)
                } else {
                    left
                }
            }
            Kind::Not(a) => Sre::not(self.deriv_literal(a, l)?),
            Kind::And(xs) => {
                let mut parts = Vec::with_capacity(xs.len());
                for x in xs {
                    match self.deriv_literal(x, l) {
                        Ok(d) if d.is_empty() => return Ok(Sre::empty()),
                        Ok(d) => parts.push(d),
                        // pairwise meets do not cover each operand; events outside them are dead
                        Err(e) => {
                            let c = self.complement_literal(r)?;
                            return match self.includes(l, &c) {
                                Tri::True => Ok(Sre::empty()),
                                _ => Err(e),
                            };
                        }
                    }
                }
                Sre::and(parts)
            }
            Kind::Or(xs) => {
                let mut parts = Vec::with_capacity(xs.len());
                for x in xs {
                    parts.push(self.deriv_literal(x, l)?);
                }
                Sre::or(parts)
            }
        })
    }

    pub fn deriv_trace(&mut self, r: &Sre, trace: &[SymEvent]) -> Result<Sre, SreError> {
        let mut cur = r.clone();
        for l in trace {
            cur = self.deriv_literal(&cur, l)?;
        }
        Ok(cur)
    }

    /// Literal choices for one prefix step of `r`: the next literals, then the
    /// complement literal when requested and syntactically non-empty.
    pub fn step_choices(&mut self, r: &Sre, include_dead: bool) -> Result<Vec<SymEvent>, SreError> {
        let next = self.next_literals(r)?;
        let mut v = next.to_vec();
        if include_dead {
            let c = complement_of_set(&next);
            if !c.is_empty_in(&self.delta) {
                v.push(c);
            }
        }
        Ok(v)
    }

    /// Prefixes of `r` up to `max_len` with their derivatives, shortest first.
    pub fn enumerate_prefixes(&mut self, r: &Sre, max_len: usize, include_dead: bool) -> Vec<(SymTrace, Sre)> {
        let mut out = vec![(Vec::new(), r.clone())];
        let mut frontier = vec![(Vec::new(), r.clone())];
        for _ in 0..max_len {
            let mut next = Vec::new();
            for (t, d) in &frontier {
                for (l, d2) in self.successors(d, include_dead) {
                    let mut t2 = t.clone();
                    t2.push(l);
                    next.push((t2, d2));
                }
            }
            out.extend(next.iter().cloned());
            frontier = next;
        }
        out
    }

    /// One-step successors `(literal, derivative)`; undecided branches are dropped.
    pub fn successors(&mut self, r: &Sre, include_dead: bool) -> Vec<(SymEvent, Sre)> {
        let next = match self.next_literals(r) {
            Ok(c) => c,
            Err(e) => {
                log::warn!("cannot compute next literals of {r}: {e}");
                return Vec::new();
            }
        };
        let mut out = Vec::new();
        for l in next.iter() {
            match self.deriv_literal(r, l) {
                Ok(d) if !include_dead && d.is_empty() => {}
                Ok(d) => out.push((l.clone(), d)),
                Err(e) => log::warn!("dropping prefix branch {l}: {e}"),
            }
        }
        if include_dead {
            let c = complement_of_set(&next);
            if !c.is_empty_in(&self.delta) {
                out.push((c, Sre::empty()));
            }
        }
        out
    }

    /// Non-deterministic one-step successors: every event of a label followed
    /// by a word of its target is a word of `r`. Labels stay as coarse as the
    /// syntax allows; complements fall back to exact successors.
    pub fn partial_successors(&mut self, r: &Sre) -> Arc<Vec<(SymEvent, Sre)>> {
        if let Some(v) = self.pd_memo.get(&r.id()) {
            return v.clone();
        }
        let v: Vec<(SymEvent, Sre)> = match r.kind() {
            Kind::Empty | Kind::Eps => Vec::new(),
            Kind::Lit(l) => vec![(l.clone(), Sre::eps())],
            Kind::Star(a) => {
                self.partial_successors(a).iter().map(|(l, d)| (l.clone(), Sre::concat(d.clone(), r.clone()))).collect()
            }
            Kind::Concat(a, b) => {
                let mut v: Vec<_> =
                    self.partial_successors(a).iter().map(|(l, d)| (l.clone(), Sre::concat(d.clone(), b.clone()))).collect();
                if a.nullable() {
                    v.extend(self.partial_successors(b).iter().cloned());
                }
                v
            }
            Kind::Or(xs) => xs.iter().flat_map(|x| self.partial_successors(x).to_vec()).collect(),
            Kind::And(xs) => {
                let mut acc: Vec<(SymEvent, Sre)> = vec![(SymEvent::top(), Sre::universal())];
                for x in xs {
                    let px = self.partial_successors(x);
                    let mut next = Vec::new();
                    for (l1, d1) in &acc {
                        for (l2, d2) in px.iter() {
                            let l = self.simplify(&l1.meet(l2));
                            let d = Sre::and2(d1.clone(), d2.clone());
                            if !d.is_empty() && self.satisfiable(&l) {
                                next.push((l, d));
                            }
                        }
                    }
                    acc = next;
                }
                acc
            }
            Kind::Not(_) => self.successors(r, false),
        };
        let mut seen = HashSet::new();
        let v: Vec<(SymEvent, Sre)> =
            v.into_iter().filter(|(l, d)| !d.is_empty() && !l.is_bottom()).filter(|p| seen.insert(p.clone())).collect();
        let v = Arc::new(v);
        self.pd_memo.insert(r.id(), v.clone());
        v
    }

    /// Traces `t` with `t ⊑ r` up to `max_len`, built from partial successors.
    pub fn sample_traces(&mut self, r: &Sre, max_len: usize) -> Vec<SymTrace> {
        let mut out = Vec::new();
        let mut seen = HashSet::new();
        let mut stack = vec![(Vec::new(), r.clone())];
        while let Some((t, d)) = stack.pop() {
            if d.nullable() && seen.insert(t.clone()) {
                out.push(t.clone());
            }
            if t.len() == max_len {
                continue;
            }
            for (l, d2) in self.partial_successors(&d).iter().rev() {
                if !self.satisfiable(l) {
                    continue;
                }
                let mut t2: SymTrace = t.clone();
                t2.push(l.clone());
                stack.push((t2, d2.clone()));
            }
        }
        out.sort_by_key(|t| t.len());
        out
    }

    /// Length of the shortest prefix whose derivative is the empty language.
    ///
    /// The complement step only counts when some interpretation makes it
    /// non-empty; otherwise every non-universal expression would be at
    /// distance one.
    pub fn dist_to_dead(&mut self, r: &Sre, cutoff: usize) -> DistToDead {
        if let Some(d) = self.dist_memo.get(&(r.id(), cutoff)) {
            return *d;
        }
        let mut seen: HashSet<u64> = HashSet::from([r.id()]);
        let mut queue: VecDeque<(Sre, usize)> = VecDeque::from([(r.clone(), 0)]);
        let mut res = DistToDead::AboveCutoff;
        'bfs: while let Some((cur, d)) = queue.pop_front() {
            if cur.is_empty() {
                res = DistToDead::Dist(d);
                break;
            }
            if d >= cutoff || cur.is_universal() {
                continue;
            }
            for (l, next) in self.successors(&cur, true) {
                if next.is_empty() && self.satisfiable(&l) {
                    res = DistToDead::Dist(d + 1);
                    break 'bfs;
                }
                if !next.is_empty() && seen.insert(next.id()) {
                    queue.push_back((next, d + 1));
                }
            }
        }
        self.dist_memo.insert((r.id(), cutoff), res);
        res
    }
}
