//! Built-in solver for the qualifier fragment: linear integer (dis)equalities
//! and inequalities over int-encoded symbols.
//!
//! Disjunctions are split by DFS, unit-coefficient equalities are eliminated
//! by substitution, and the residual variables are searched over a finite
//! domain built around the constants of the problem. An exhausted search is
//! reported as Unsat, so the solver is complete only up to that domain.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::time::{Duration, Instant};

use super::{Constant, Formula, Interpretation, Op, SatResult, SolverBackend, Sort, SymVar, Term};

#[derive(Debug, Clone)]
pub struct BoundedSolver {
    pub node_limit: u64,
}

impl Default for BoundedSolver {
    fn default() -> Self {
        BoundedSolver { node_limit: 2_000_000 }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
struct Lin {
    coef: BTreeMap<u64, i64>,
    k: i64,
}

impl Lin {
    fn constant(k: i64) -> Lin {
        Lin { coef: BTreeMap::new(), k }
    }
    fn var(v: u64) -> Lin {
        let mut coef = BTreeMap::new();
        coef.insert(v, 1);
        Lin { coef, k: 0 }
    }
    fn add_scaled(&mut self, other: &Lin, s: i64) {
        for (v, c) in &other.coef {
            let e = self.coef.entry(*v).or_insert(0);
            *e += c * s;
            if *e == 0 {
                self.coef.remove(v);
            }
        }
        self.k += other.k * s;
    }
    fn scaled(&self, s: i64) -> Lin {
        let mut out = Lin::constant(0);
        out.add_scaled(self, s);
        out
    }
    fn eval(&self, vals: &HashMap<u64, i64>) -> Option<i64> {
        let mut acc = self.k;
        for (v, c) in &self.coef {
            acc += c * vals.get(v)?;
        }
        Some(acc)
    }
    /// Replaces `v` by `e`.
    fn subst(&mut self, v: u64, e: &Lin) {
        if let Some(c) = self.coef.remove(&v) {
            self.add_scaled(e, c);
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
enum Rel {
    Eq,
    Ne,
    Le,
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
struct Lit {
    e: Lin,
    rel: Rel,
}

impl Lit {
    fn holds(&self, x: i64) -> bool {
        match self.rel {
            Rel::Eq => x == 0,
            Rel::Ne => x != 0,
            Rel::Le => x <= 0,
        }
    }
    fn negate(self) -> Lit {
        match self.rel {
            Rel::Eq => Lit { e: self.e, rel: Rel::Ne },
            Rel::Ne => Lit { e: self.e, rel: Rel::Eq },
            // not (e <= 0)  <=>  -e + 1 <= 0
            Rel::Le => {
                let mut e = self.e.scaled(-1);
                e.k += 1;
                Lit { e, rel: Rel::Le }
            }
        }
    }
}

#[derive(Debug, Clone)]
enum Nnf {
    True,
    False,
    Lit(Lit),
    And(Vec<Nnf>),
    Or(Vec<Nnf>),
}

struct Unsupported(String);

struct Encoder {
    vars: BTreeMap<u64, SymVar>,
}

impl Encoder {
    fn term(&mut self, t: &Term) -> Result<Lin, Unsupported> {
        match t {
            Term::Const(c) => Ok(Lin::constant(c.as_int())),
            Term::Sym(s) => {
                self.vars.insert(s.id, s.clone());
                Ok(Lin::var(s.id))
            }
            Term::App(Op::Add, a) => {
                let mut l = self.term(&a[0])?;
                l.add_scaled(&self.term(&a[1])?, 1);
                Ok(l)
            }
            Term::App(Op::Sub, a) => {
                let mut l = self.term(&a[0])?;
                l.add_scaled(&self.term(&a[1])?, -1);
                Ok(l)
            }
            t => Err(Unsupported(format!("term {t}"))),
        }
    }

    fn atom(&mut self, t: &Term) -> Result<Lit, Unsupported> {
        match t {
            Term::App(op, a) if op.is_predicate() => {
                let mut d = self.term(&a[0])?;
                d.add_scaled(&self.term(&a[1])?, -1);
                Ok(match op {
                    Op::Eq => Lit { e: d, rel: Rel::Eq },
                    Op::Ne => Lit { e: d, rel: Rel::Ne },
                    Op::Le => Lit { e: d, rel: Rel::Le },
                    _ => {
                        d.k += 1;
                        Lit { e: d, rel: Rel::Le }
                    }
                })
            }
            Term::Sym(s) if s.sort == Sort::Bool => {
                let mut e = self.term(t)?;
                e.k -= 1;
                Ok(Lit { e, rel: Rel::Eq })
            }
            t => Err(Unsupported(format!("atom {t}"))),
        }
    }

    fn nnf(&mut self, f: &Formula, pos: bool) -> Result<Nnf, Unsupported> {
        Ok(match f {
            Formula::True => if pos { Nnf::True } else { Nnf::False },
            Formula::False => if pos { Nnf::False } else { Nnf::True },
            Formula::Atom(t) => {
                let l = self.atom(t)?;
                Nnf::Lit(if pos { l } else { l.negate() })
            }
            Formula::Not(g) => self.nnf(g, !pos)?,
            Formula::And(xs) | Formula::Or(xs) => {
                let parts = xs.iter().map(|x| self.nnf(x, pos)).collect::<Result<Vec<_>, _>>()?;
                if matches!(f, Formula::And(_)) == pos {
                    Nnf::And(parts)
                } else {
                    Nnf::Or(parts)
                }
            }
        })
    }
}

fn nnf_vars(n: &Nnf, out: &mut BTreeSet<u64>) {
    match n {
        Nnf::Lit(l) => out.extend(l.e.coef.keys().copied()),
        Nnf::And(xs) | Nnf::Or(xs) => xs.iter().for_each(|x| nnf_vars(x, out)),
        _ => {}
    }
}

enum Outcome {
    Sat(HashMap<u64, i64>),
    Unsat,
    Unknown(String),
}

struct Search<'a> {
    vars: &'a BTreeMap<u64, SymVar>,
    nodes: u64,
    limit: u64,
    deadline: Instant,
}

impl Search<'_> {
    fn tick(&mut self) -> Result<(), String> {
        self.nodes += 1;
        if self.nodes > self.limit {
            return Err("node limit exhausted".into());
        }
        if self.nodes.is_multiple_of(4096) && Instant::now() > self.deadline {
            return Err("timeout".into());
        }
        Ok(())
    }

    fn unbounded(&self, v: u64) -> bool {
        self.vars[&v].sort.int_encoded()
    }

    /// Eliminates unit-coefficient equalities; returns None on conflict.
    fn propagate(&self, mut lits: Vec<Lit>) -> Option<(Vec<Lit>, Vec<(u64, Lin)>)> {
        let mut elim: Vec<(u64, Lin)> = Vec::new();
        loop {
            let mut kept = Vec::with_capacity(lits.len());
            for l in lits {
                if l.e.coef.is_empty() {
                    if !l.holds(l.e.k) {
                        return None;
                    }
                } else {
                    kept.push(l);
                }
            }
            lits = kept;
            let pick = lits.iter().enumerate().find_map(|(i, l)| {
                if l.rel != Rel::Eq {
                    return None;
                }
                l.e.coef
                    .iter()
                    .find(|(v, c)| c.abs() == 1 && self.unbounded(**v))
                    .map(|(v, c)| (i, *v, *c))
            });
            let Some((i, v, c)) = pick else { break };
            let l = lits.swap_remove(i);
            // c*v + rest = 0  =>  v = -rest / c
            let mut rest = l.e.clone();
            rest.coef.remove(&v);
            let e = rest.scaled(-c);
            for other in lits.iter_mut() {
                other.e.subst(v, &e);
            }
            for (_, prev) in elim.iter_mut() {
                prev.subst(v, &e);
            }
            elim.push((v, e));
        }
        for l in &lits {
            if l.rel == Rel::Eq {
                let g = l.e.coef.values().fold(0i64, |g, c| gcd(g, c.abs()));
                if g > 1 && l.e.k % g != 0 {
                    return None;
                }
            }
        }
        Some((lits, elim))
    }

    fn theory(&mut self, lits: &[Lit]) -> Outcome {
        let Some((lits, elim)) = self.propagate(lits.to_vec()) else {
            return Outcome::Unsat;
        };
        let mut free: BTreeMap<u64, usize> = BTreeMap::new();
        for l in &lits {
            for v in l.e.coef.keys() {
                *free.entry(*v).or_insert(0) += 1;
            }
        }
        let mut order: Vec<u64> = free.keys().copied().collect();
        order.sort_by_key(|v| (std::cmp::Reverse(free[v]), *v));
        let pos: HashMap<u64, usize> = order.iter().enumerate().map(|(i, v)| (*v, i)).collect();
        let mut at: Vec<Vec<&Lit>> = vec![Vec::new(); order.len()];
        for l in &lits {
            let last = l.e.coef.keys().map(|v| pos[v]).max().unwrap();
            at[last].push(l);
        }
        let domain = self.domain(&lits, order.len());
        let mut vals: HashMap<u64, i64> = HashMap::new();
        match self.assign(0, &order, &at, &domain, &mut vals) {
            Ok(true) => {
                for (v, e) in elim.iter().rev() {
                    for w in e.coef.keys() {
                        vals.entry(*w).or_insert(0);
                    }
                    let x = e.eval(&vals).unwrap_or(0);
                    vals.insert(*v, x);
                }
                Outcome::Sat(vals)
            }
            Ok(false) => Outcome::Unsat,
            Err(why) => Outcome::Unknown(why),
        }
    }

    fn domain(&self, lits: &[Lit], nvars: usize) -> Vec<i64> {
        let mut base: BTreeSet<i64> = BTreeSet::from([0]);
        for l in lits {
            if l.e.k != 0 {
                base.insert(l.e.k);
                base.insert(-l.e.k);
            }
        }
        let seeds: Vec<i64> = base.iter().copied().collect();
        if seeds.len() <= 8 {
            for a in &seeds {
                for b in &seeds {
                    base.insert(a + b);
                }
            }
        }
        let spread = nvars as i64 + 1;
        let mut out = BTreeSet::new();
        for c in base {
            for d in -spread..=spread {
                out.insert(c + d);
            }
        }
        // small magnitudes first keeps models readable
        let mut v: Vec<i64> = out.into_iter().collect();
        v.sort_by_key(|x| (x.abs(), *x < 0));
        v
    }

    fn assign(
        &mut self,
        i: usize,
        order: &[u64],
        at: &[Vec<&Lit>],
        domain: &[i64],
        vals: &mut HashMap<u64, i64>,
    ) -> Result<bool, String> {
        if i == order.len() {
            return Ok(true);
        }
        let v = order[i];
        let forced: Option<Vec<i64>> = at[i].iter().find(|l| l.rel == Rel::Eq).map(|l| {
            let c = l.e.coef[&v];
            let mut rest = l.e.clone();
            rest.coef.remove(&v);
            let r = rest.eval(vals).unwrap();
            if r % c == 0 {
                vec![-r / c]
            } else {
                vec![]
            }
        });
        let cands: Vec<i64> = match (forced, &self.vars[&v].sort) {
            (Some(f), _) => f,
            (None, Sort::Bool) => vec![0, 1],
            (None, Sort::Unit) => vec![0],
            (None, _) => domain.to_vec(),
        };
        for x in cands {
            match self.vars[&v].sort {
                Sort::Bool if !(0..=1).contains(&x) => continue,
                Sort::Unit if x != 0 => continue,
                _ => {}
            }
            self.tick()?;
            vals.insert(v, x);
            if at[i].iter().all(|l| l.holds(l.e.eval(vals).unwrap()))
                && self.assign(i + 1, order, at, domain, vals)?
            {
                return Ok(true);
            }
        }
        vals.remove(&v);
        Ok(false)
    }

    fn dfs(&mut self, lits: &mut Vec<Lit>, pending: &mut Vec<Nnf>) -> Outcome {
        if let Err(e) = self.tick() {
            return Outcome::Unknown(e);
        }
        let mark = lits.len();
        let res = self.dfs_inner(lits, pending);
        lits.truncate(mark);
        res
    }

    fn dfs_inner(&mut self, lits: &mut Vec<Lit>, pending: &mut Vec<Nnf>) -> Outcome {
        let mut asg: HashMap<Lit, bool> = lits.iter().map(lit_key).collect();
        let mut work: Vec<Nnf> = std::mem::take(pending);
        let mut ors: Vec<Nnf> = Vec::new();
        loop {
            while let Some(n) = work.pop() {
                match n {
                    Nnf::True => {}
                    Nnf::False => return Outcome::Unsat,
                    Nnf::Lit(l) => {
                        if l.e.coef.is_empty() {
                            if !l.holds(l.e.k) {
                                return Outcome::Unsat;
                            }
                            continue;
                        }
                        let (k, pol) = lit_key(&l);
                        match asg.get(&k) {
                            Some(v) if *v != pol => return Outcome::Unsat,
                            Some(_) => {}
                            None => {
                                asg.insert(k, pol);
                                lits.push(l);
                            }
                        }
                    }
                    Nnf::And(xs) => work.extend(xs),
                    o @ Nnf::Or(_) => ors.push(o),
                }
            }
            // drop satisfied clauses and refuted disjuncts; units go back to work
            let mut kept = Vec::with_capacity(ors.len());
            for o in ors.drain(..) {
                match reduce(&o, &asg) {
                    Nnf::True => {}
                    Nnf::False => return Outcome::Unsat,
                    o @ Nnf::Or(_) => kept.push(o),
                    unit => work.push(unit),
                }
            }
            ors = kept;
            if work.is_empty() {
                break;
            }
        }
        let Some((reduced, _)) = self.propagate(lits.clone()) else {
            return Outcome::Unsat;
        };
        if !difference_feasible(&reduced) {
            return Outcome::Unsat;
        }
        if ors.is_empty() {
            return self.theory(lits);
        }
        let pick = (0..ors.len())
            .min_by_key(|&i| match &ors[i] {
                Nnf::Or(xs) => xs.len(),
                _ => 0,
            })
            .unwrap();
        let Nnf::Or(first) = ors.swap_remove(pick) else { unreachable!() };
        let mut unknown = None;
        for (i, choice) in first.iter().enumerate() {
            let mut p = ors.clone();
            p.push(choice.clone());
            // earlier disjuncts that are plain literals are known false here
            for prev in &first[..i] {
                if let Nnf::Lit(l) = prev {
                    p.push(Nnf::Lit(l.clone().negate()));
                }
            }
            match self.dfs(lits, &mut p) {
                Outcome::Sat(m) => return Outcome::Sat(m),
                Outcome::Unsat => {}
                Outcome::Unknown(w) => {
                    if w == "node limit exhausted" || w == "timeout" {
                        return Outcome::Unknown(w);
                    }
                    unknown = Some(w);
                }
            }
        }
        match unknown {
            Some(w) => Outcome::Unknown(w),
            None => Outcome::Unsat,
        }
    }
}

/// The atom a literal asserts or denies, and its polarity.
fn lit_key(l: &Lit) -> (Lit, bool) {
    match l.rel {
        Rel::Eq | Rel::Ne => {
            let flip = l.e.coef.values().next().is_some_and(|c| *c < 0);
            let e = if flip { l.e.scaled(-1) } else { l.e.clone() };
            (Lit { e, rel: Rel::Eq }, l.rel == Rel::Eq)
        }
        Rel::Le => {
            let neg = l.clone().negate();
            if l.e <= neg.e {
                (l.clone(), true)
            } else {
                (neg, false)
            }
        }
    }
}

/// Evaluates what the assignment decides and folds the rest.
fn reduce(n: &Nnf, asg: &HashMap<Lit, bool>) -> Nnf {
    match n {
        Nnf::True | Nnf::False => n.clone(),
        Nnf::Lit(l) => {
            if l.e.coef.is_empty() {
                return if l.holds(l.e.k) { Nnf::True } else { Nnf::False };
            }
            let (k, pol) = lit_key(l);
            match asg.get(&k) {
                Some(v) if *v == pol => Nnf::True,
                Some(_) => Nnf::False,
                None => n.clone(),
            }
        }
        Nnf::And(xs) | Nnf::Or(xs) => {
            let is_and = matches!(n, Nnf::And(_));
            let mut out = Vec::with_capacity(xs.len());
            for x in xs {
                match (reduce(x, asg), is_and) {
                    (Nnf::False, true) => return Nnf::False,
                    (Nnf::True, false) => return Nnf::True,
                    (Nnf::True, true) | (Nnf::False, false) => {}
                    (r, _) => out.push(r),
                }
            }
            match out.len() {
                0 if is_and => Nnf::True,
                0 => Nnf::False,
                1 => out.pop().unwrap(),
                _ if is_and => Nnf::And(out),
                _ => Nnf::Or(out),
            }
        }
    }
}

/// Negative-cycle test on the difference constraints `x - y <= c` among
/// `lits`; other literals are ignored, so `false` is always a refutation.
fn difference_feasible(lits: &[Lit]) -> bool {
    const ZERO: u64 = u64::MAX;
    let mut edges: Vec<(u64, u64, i64)> = Vec::new();
    for l in lits {
        if l.rel != Rel::Le {
            continue;
        }
        let c: Vec<(u64, i64)> = l.e.coef.iter().map(|(v, c)| (*v, *c)).collect();
        // sum + k <= 0
        let (x, y) = match c.as_slice() {
            [(x, 1)] => (*x, ZERO),
            [(y, -1)] => (ZERO, *y),
            [(x, 1), (y, -1)] | [(y, -1), (x, 1)] => (*x, *y),
            _ => continue,
        };
        // x - y <= -k
        edges.push((y, x, -l.e.k));
    }
    if edges.is_empty() {
        return true;
    }
    let mut dist: HashMap<u64, i64> = HashMap::new();
    for (a, b, _) in &edges {
        dist.insert(*a, 0);
        dist.insert(*b, 0);
    }
    for _ in 0..dist.len() {
        let mut changed = false;
        for (a, b, w) in &edges {
            let cand = dist[a] + w;
            if cand < dist[b] {
                dist.insert(*b, cand);
                changed = true;
            }
        }
        if !changed {
            return true;
        }
    }
    false
}

fn gcd(a: i64, b: i64) -> i64 {
    if b == 0 {
        a
    } else {
        gcd(b, a % b)
    }
}

impl SolverBackend for BoundedSolver {
    fn check_sat(&mut self, f: &Formula, budget: Duration) -> SatResult {
        let mut enc = Encoder { vars: BTreeMap::new() };
        let nnf = match enc.nnf(f, true) {
            Ok(n) => n,
            Err(Unsupported(w)) => return SatResult::Unknown(format!("unsupported {w}")),
        };
        let mut conjuncts = Vec::new();
        let mut stack = vec![nnf];
        while let Some(n) = stack.pop() {
            match n {
                Nnf::And(xs) => stack.extend(xs),
                Nnf::True => {}
                Nnf::False => return SatResult::Unsat,
                n => conjuncts.push(n),
            }
        }
        // independent components are solved separately
        let mut parent: HashMap<u64, u64> = HashMap::new();
        fn find(p: &mut HashMap<u64, u64>, x: u64) -> u64 {
            let r = *p.get(&x).unwrap_or(&x);
            if r == x {
                return x;
            }
            let root = find(p, r);
            p.insert(x, root);
            root
        }
        let cvars: Vec<BTreeSet<u64>> = conjuncts
            .iter()
            .map(|c| {
                let mut s = BTreeSet::new();
                nnf_vars(c, &mut s);
                s
            })
            .collect();
        for vs in &cvars {
            let mut it = vs.iter();
            if let Some(first) = it.next() {
                let r0 = find(&mut parent, *first);
                for v in it {
                    let r = find(&mut parent, *v);
                    if r != r0 {
                        parent.insert(r, r0);
                    }
                }
            }
        }
        let mut groups: BTreeMap<Option<u64>, Vec<Nnf>> = BTreeMap::new();
        for (c, vs) in conjuncts.into_iter().zip(&cvars) {
            let key = vs.iter().next().map(|v| find(&mut parent, *v));
            groups.entry(key).or_default().push(c);
        }
        let mut search = Search {
            vars: &enc.vars,
            nodes: 0,
            limit: self.node_limit,
            deadline: Instant::now() + budget,
        };
        let mut model: HashMap<u64, i64> = HashMap::new();
        for (_, mut g) in groups {
            match search.dfs(&mut Vec::new(), &mut g) {
                Outcome::Sat(m) => model.extend(m),
                Outcome::Unsat => return SatResult::Unsat,
                Outcome::Unknown(w) => return SatResult::Unknown(w),
            }
        }
        let mut out = Interpretation::new();
        for (id, s) in &enc.vars {
            let v = model.get(id).copied().unwrap_or(0);
            out.insert(s.clone(), Constant::of_sort(&s.sort, v));
        }
        SatResult::Sat(out)
    }
}
