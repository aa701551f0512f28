//! Random generators and brute-force oracles shared by the property and
//! acceptance suites. Oracles work on their own ASTs and never call the
//! library's matchers.
#![allow(dead_code)]

use std::collections::{BTreeMap, HashMap, HashSet};
use std::sync::Arc;

use rand::Rng;
use sre_falsify::events::{ground_alphabet, EffectDecl, EffectSignature, GroundEvent, SymEvent};
use sre_falsify::logic::{fresh_sym, Constant, Formula, Interpretation, Op, Sort, SymVar, Term};
use sre_falsify::ltlf::Ltl;
use sre_falsify::sre::Sre;

/// A bounded ground domain: signature, alphabet and symbolic variables.
pub struct Dom {
    pub delta: EffectSignature,
    pub alphabet: Vec<GroundEvent>,
    pub syms: Vec<SymVar>,
    /// Values of the symbolic variables.
    pub sym_values: Vec<i64>,
    /// Constants qualifiers may mention.
    pub consts: Vec<i64>,
}

impl Dom {
    /// Effects `a` and `b`, one int argument each, unit result.
    pub fn unary(values: &[i64], nsyms: usize, sym_values: &[i64]) -> Dom {
        let delta = EffectSignature::new(vec![
            EffectDecl::new("a", vec![Sort::Int], Sort::Unit),
            EffectDecl::new("b", vec![Sort::Int], Sort::Unit),
        ]);
        Dom::new(delta, values, nsyms, sym_values)
    }

    pub fn new(delta: EffectSignature, values: &[i64], nsyms: usize, sym_values: &[i64]) -> Dom {
        let alphabet = ground_alphabet(&delta, values);
        let syms = (0..nsyms).map(|i| fresh_sym(Sort::Int, &format!("s{i}"))).collect();
        Dom { delta, alphabet, syms, sym_values: sym_values.to_vec(), consts: values.to_vec() }
    }

    /// Every interpretation of the symbolic variables.
    pub fn sigmas(&self) -> Vec<Interpretation> {
        let mut out = vec![Interpretation::new()];
        for s in &self.syms {
            out = out
                .into_iter()
                .flat_map(|m| {
                    self.sym_values.iter().map(move |v| {
                        let mut m = m.clone();
                        m.insert(s.clone(), Constant::Int(*v));
                        m
                    })
                })
                .collect();
        }
        out
    }

    pub fn fnames(&self) -> Vec<Arc<str>> {
        self.delta.names().cloned().collect()
    }

    /// Int-sorted event locals of an effect.
    fn int_locals(&self, f: &str) -> Vec<usize> {
        let d = self.delta.get(f).unwrap();
        d.local_sorts().enumerate().filter(|(_, s)| **s == Sort::Int).map(|(i, _)| i).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Operand {
    Const(i64),
    Sym(usize),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Cmp {
    Eq,
    Ne,
    Lt,
    Le,
}

/// `local <cmp> rhs`
#[derive(Debug, Clone, PartialEq)]
pub struct Pred {
    pub local: usize,
    pub cmp: Cmp,
    pub rhs: Operand,
}

/// A literal: per-name conjunctions of predicates, `others` for absent names.
#[derive(Debug, Clone, PartialEq)]
pub struct LitDesc {
    pub atoms: Vec<(Arc<str>, Vec<Pred>)>,
    pub others: bool,
}

fn operand_value(o: Operand, dom: &Dom, sigma: &Interpretation) -> i64 {
    match o {
        Operand::Const(c) => c,
        Operand::Sym(i) => sigma[&dom.syms[i]].as_int(),
    }
}

fn operand_term(o: Operand, dom: &Dom) -> Term {
    match o {
        Operand::Const(c) => Term::int(c),
        Operand::Sym(i) => Term::sym(&dom.syms[i]),
    }
}

impl Pred {
    pub fn holds(&self, alpha: &GroundEvent, dom: &Dom, sigma: &Interpretation) -> bool {
        let x = if self.local < alpha.args.len() { alpha.args[self.local] } else { alpha.ret }.as_int();
        let y = operand_value(self.rhs, dom, sigma);
        match self.cmp {
            Cmp::Eq => x == y,
            Cmp::Ne => x != y,
            Cmp::Lt => x < y,
            Cmp::Le => x <= y,
        }
    }

    pub fn formula(&self, dom: &Dom) -> Formula {
        let (x, y) = (Term::Local(self.local), operand_term(self.rhs, dom));
        match self.cmp {
            Cmp::Eq => Formula::eq(x, y),
            Cmp::Ne => Formula::ne(x, y),
            Cmp::Lt => Formula::lt(x, y),
            Cmp::Le => Formula::le(x, y),
        }
    }
}

impl LitDesc {
    pub fn holds(&self, alpha: &GroundEvent, dom: &Dom, sigma: &Interpretation) -> bool {
        match self.atoms.iter().find(|(f, _)| *f == alpha.fname) {
            Some((_, ps)) => ps.iter().all(|p| p.holds(alpha, dom, sigma)),
            None => self.others,
        }
    }

    pub fn event(&self, dom: &Dom) -> SymEvent {
        let atoms: BTreeMap<Arc<str>, Formula> =
            self.atoms.iter().map(|(f, ps)| (f.clone(), Formula::and(ps.iter().map(|p| p.formula(dom))))).collect();
        SymEvent::from_parts(atoms, self.others)
    }
}

pub fn gen_pred(rng: &mut impl Rng, dom: &Dom, f: &str, symbolic: bool) -> Pred {
    let locals = dom.int_locals(f);
    let local = locals[rng.gen_range(0..locals.len())];
    let cmp = [Cmp::Eq, Cmp::Ne, Cmp::Lt, Cmp::Le][rng.gen_range(0..4)];
    let rhs = if symbolic && !dom.syms.is_empty() && rng.gen_bool(0.6) {
        Operand::Sym(rng.gen_range(0..dom.syms.len()))
    } else {
        Operand::Const(dom.consts[rng.gen_range(0..dom.consts.len())])
    };
    Pred { local, cmp, rhs }
}

/// Mostly single-name literals, occasionally top or a multi-name one.
pub fn gen_lit(rng: &mut impl Rng, dom: &Dom, symbolic: bool) -> LitDesc {
    let names = dom.fnames();
    let roll = rng.gen_range(0..10);
    if roll == 0 {
        return LitDesc { atoms: Vec::new(), others: true };
    }
    let chosen: Vec<Arc<str>> = if roll <= 7 {
        vec![names[rng.gen_range(0..names.len())].clone()]
    } else {
        names.iter().filter(|_| rng.gen_bool(0.5)).cloned().collect()
    };
    let atoms = chosen
        .into_iter()
        .map(|f| {
            let n = rng.gen_range(0..3);
            let ps = (0..n).map(|_| gen_pred(rng, dom, &f, symbolic)).collect();
            (f, ps)
        })
        .collect();
    LitDesc { atoms, others: roll == 9 }
}

/// SRE syntax tree with binary junctions.
#[derive(Debug, Clone)]
pub enum RSre {
    Empty,
    Eps,
    Lit(LitDesc),
    Star(Box<RSre>),
    Concat(Box<RSre>, Box<RSre>),
    Not(Box<RSre>),
    And(Box<RSre>, Box<RSre>),
    Or(Box<RSre>, Box<RSre>),
}

pub fn gen_sre(rng: &mut impl Rng, dom: &Dom, depth: usize, symbolic: bool) -> RSre {
    if depth == 0 || rng.gen_bool(0.25) {
        return match rng.gen_range(0..10) {
            0 => RSre::Empty,
            1 => RSre::Eps,
            _ => RSre::Lit(gen_lit(rng, dom, symbolic)),
        };
    }
    let sub = |rng: &mut _| Box::new(gen_sre(rng, dom, depth - 1, symbolic));
    match rng.gen_range(0..6) {
        0 => RSre::Star(sub(rng)),
        1 => RSre::Not(sub(rng)),
        2 | 3 => RSre::Concat(sub(rng), sub(rng)),
        4 => RSre::And(sub(rng), sub(rng)),
        _ => RSre::Or(sub(rng), sub(rng)),
    }
}

impl RSre {
    pub fn build(&self, dom: &Dom) -> Sre {
        match self {
            RSre::Empty => Sre::empty(),
            RSre::Eps => Sre::eps(),
            RSre::Lit(l) => Sre::lit(l.event(dom)),
            RSre::Star(a) => Sre::star(a.build(dom)),
            RSre::Concat(a, b) => Sre::concat(a.build(dom), b.build(dom)),
            RSre::Not(a) => Sre::not(a.build(dom)),
            RSre::And(a, b) => Sre::and2(a.build(dom), b.build(dom)),
            RSre::Or(a, b) => Sre::or2(a.build(dom), b.build(dom)),
        }
    }

    /// Membership by backtracking over the syntax tree.
    pub fn matches(&self, w: &[usize], dom: &Dom, sigma: &Interpretation) -> bool {
        match self {
            RSre::Empty => false,
            RSre::Eps => w.is_empty(),
            RSre::Lit(l) => w.len() == 1 && l.holds(&dom.alphabet[w[0]], dom, sigma),
            RSre::Star(a) => w.is_empty() || (1..=w.len()).any(|i| a.matches(&w[..i], dom, sigma) && self.matches(&w[i..], dom, sigma)),
            RSre::Concat(a, b) => (0..=w.len()).any(|i| a.matches(&w[..i], dom, sigma) && b.matches(&w[i..], dom, sigma)),
            RSre::Not(a) => !a.matches(w, dom, sigma),
            RSre::And(a, b) => a.matches(w, dom, sigma) && b.matches(w, dom, sigma),
            RSre::Or(a, b) => a.matches(w, dom, sigma) || b.matches(w, dom, sigma),
        }
    }
}

/// Words up to a length bound, indexed densely by length then base-k value.
pub struct Words {
    pub k: usize,
    pub max_len: usize,
    off: Vec<usize>,
    pow: Vec<usize>,
}

impl Words {
    pub fn new(k: usize, max_len: usize) -> Words {
        let pow: Vec<usize> = (0..=max_len).map(|i| k.pow(i as u32)).collect();
        let mut off = vec![0];
        for i in 0..=max_len {
            off.push(off[i] + pow[i]);
        }
        Words { k, max_len, off, pow }
    }

    pub fn count(&self) -> usize {
        self.off[self.max_len + 1]
    }

    pub fn index(&self, w: &[usize]) -> usize {
        self.off[w.len()] + w.iter().fold(0, |x, &c| x * self.k + c)
    }

    pub fn word(&self, mut idx: usize) -> Vec<usize> {
        let n = (0..=self.max_len).find(|&n| idx < self.off[n + 1]).unwrap();
        idx -= self.off[n];
        let mut w = vec![0; n];
        for i in (0..n).rev() {
            w[i] = idx % self.k;
            idx /= self.k;
        }
        w
    }

    /// Bounded language of `r` computed bottom-up from the set semantics.
    pub fn lang(&self, r: &RSre, dom: &Dom, sigma: &Interpretation) -> Vec<bool> {
        let n = self.count();
        match r {
            RSre::Empty => vec![false; n],
            RSre::Eps => {
                let mut v = vec![false; n];
                v[0] = true;
                v
            }
            RSre::Lit(l) => {
                let mut v = vec![false; n];
                if self.max_len >= 1 {
                    for c in 0..self.k {
                        v[self.off[1] + c] = l.holds(&dom.alphabet[c], dom, sigma);
                    }
                }
                v
            }
            RSre::Not(a) => self.lang(a, dom, sigma).into_iter().map(|b| !b).collect(),
            RSre::And(a, b) => self.lang(a, dom, sigma).iter().zip(self.lang(b, dom, sigma)).map(|(x, y)| *x && y).collect(),
            RSre::Or(a, b) => self.lang(a, dom, sigma).iter().zip(self.lang(b, dom, sigma)).map(|(x, y)| *x || y).collect(),
            RSre::Concat(a, b) => {
                let (la, lb) = (self.lang(a, dom, sigma), self.lang(b, dom, sigma));
                let mut v = vec![false; n];
                for len in 0..=self.max_len {
                    for x in 0..self.pow[len] {
                        v[self.off[len] + x] = (0..=len).any(|i| {
                            let m = self.pow[len - i];
                            la[self.off[i] + x / m] && lb[self.off[len - i] + x % m]
                        });
                    }
                }
                v
            }
            RSre::Star(a) => {
                let la = self.lang(a, dom, sigma);
                let mut v = vec![false; n];
                v[0] = true;
                for len in 1..=self.max_len {
                    for x in 0..self.pow[len] {
                        v[self.off[len] + x] = (1..=len).any(|i| {
                            let m = self.pow[len - i];
                            la[self.off[i] + x / m] && v[self.off[len - i] + x % m]
                        });
                    }
                }
                v
            }
        }
    }
}

/// Accepted words of a library SRE as a membership vector, via its derivatives.
pub fn deriv_lang(words: &Words, r: &Sre, dom: &Dom, sigma: &Interpretation) -> Vec<bool> {
    let mut m = sre_falsify::sre::GroundMatcher::new(&dom.alphabet, sigma);
    let mut v = vec![false; words.count()];
    for w in m.words(r, words.max_len) {
        v[words.index(&w)] = true;
    }
    v
}

/// Accepted words as a set, through a memoizing ground matcher.
pub fn word_set(r: &Sre, dom: &Dom, sigma: &Interpretation, max_len: usize) -> HashSet<Vec<usize>> {
    sre_falsify::sre::GroundMatcher::new(&dom.alphabet, sigma).words(r, max_len).into_iter().collect()
}

/// Every sequence over `k` letters of exactly length `n`.
pub fn all_words(k: usize, n: usize) -> Vec<Vec<usize>> {
    let mut out = vec![Vec::new()];
    for _ in 0..n {
        out = out.into_iter().flat_map(|w| (0..k).map(move |c| [w.clone(), vec![c]].concat())).collect();
    }
    out
}

/// LTL syntax tree over literal descriptions.
#[derive(Debug, Clone)]
pub enum RLtl {
    Lit(usize),
    Not(Box<RLtl>),
    And(Box<RLtl>, Box<RLtl>),
    Or(Box<RLtl>, Box<RLtl>),
    X(Box<RLtl>),
    F(Box<RLtl>),
    G(Box<RLtl>),
    U(usize, Box<RLtl>),
    W(usize, Box<RLtl>),
}

pub fn gen_ltl(rng: &mut impl Rng, nlits: usize, depth: usize) -> RLtl {
    if depth == 0 || rng.gen_bool(0.2) {
        return RLtl::Lit(rng.gen_range(0..nlits));
    }
    let sub = |rng: &mut _| Box::new(gen_ltl(rng, nlits, depth - 1));
    match rng.gen_range(0..8) {
        0 => RLtl::Not(sub(rng)),
        1 => RLtl::And(sub(rng), sub(rng)),
        2 => RLtl::Or(sub(rng), sub(rng)),
        3 => RLtl::X(sub(rng)),
        4 => RLtl::F(sub(rng)),
        5 => RLtl::G(sub(rng)),
        6 => RLtl::U(rng.gen_range(0..nlits), sub(rng)),
        _ => RLtl::W(rng.gen_range(0..nlits), sub(rng)),
    }
}

impl RLtl {
    pub fn build(&self, lits: &[SymEvent]) -> Ltl {
        let b = |x: &RLtl| Box::new(x.build(lits));
        match self {
            RLtl::Lit(i) => Ltl::Lit(lits[*i].clone()),
            RLtl::Not(a) => Ltl::Not(b(a)),
            RLtl::And(x, y) => Ltl::And(b(x), b(y)),
            RLtl::Or(x, y) => Ltl::Or(b(x), b(y)),
            RLtl::X(a) => Ltl::X(b(a)),
            RLtl::F(a) => Ltl::F(b(a)),
            RLtl::G(a) => Ltl::G(b(a)),
            RLtl::U(l, a) => Ltl::U(lits[*l].clone(), b(a)),
            RLtl::W(l, a) => Ltl::W(lits[*l].clone(), b(a)),
        }
    }

    /// Finite-trace semantics at position `i`, written from the definitions:
    /// a literal needs a current event, X needs a next position, F and U look
    /// at every position including the end, G ranges over events only.
    pub fn holds(&self, lits: &dyn Fn(usize, usize) -> bool, n: usize, i: usize) -> bool {
        match self {
            RLtl::Lit(l) => i < n && lits(*l, i),
            RLtl::Not(a) => !a.holds(lits, n, i),
            RLtl::And(a, b) => a.holds(lits, n, i) && b.holds(lits, n, i),
            RLtl::Or(a, b) => a.holds(lits, n, i) || b.holds(lits, n, i),
            RLtl::X(a) => i < n && a.holds(lits, n, i + 1),
            RLtl::F(a) => (i..=n).any(|j| a.holds(lits, n, j)),
            RLtl::G(a) => (i..n).all(|j| a.holds(lits, n, j)),
            RLtl::U(l, a) => (i..=n).any(|j| a.holds(lits, n, j) && (i..j).all(|m| lits(*l, m))),
            RLtl::W(l, a) => {
                RLtl::U(*l, a.clone()).holds(lits, n, i) || (i..=n).all(|j| !a.holds(lits, n, j))
            }
        }
    }
}

/// Random quantifier-free formula over the given symbols.
pub fn gen_formula(rng: &mut impl Rng, syms: &[SymVar], depth: usize) -> Formula {
    if depth == 0 || rng.gen_bool(0.3) {
        let term = |rng: &mut _| gen_term(rng, syms);
        let (a, b) = (term(rng), term(rng));
        return match rng.gen_range(0..4) {
            0 => Formula::eq(a, b),
            1 => Formula::ne(a, b),
            2 => Formula::lt(a, b),
            _ => Formula::le(a, b),
        };
    }
    let n = rng.gen_range(2..4);
    let parts: Vec<Formula> = (0..n).map(|_| gen_formula(rng, syms, depth - 1)).collect();
    match rng.gen_range(0..5) {
        0 => Formula::not(parts.into_iter().next().unwrap()),
        1 | 2 => Formula::and(parts),
        _ => Formula::or(parts),
    }
}

fn gen_term(rng: &mut impl Rng, syms: &[SymVar]) -> Term {
    let sym = |rng: &mut dyn rand::RngCore| Term::sym(&syms[rng.gen_range(0..syms.len())]);
    match rng.gen_range(0..6) {
        0..=2 => sym(rng),
        3 => Term::int(rng.gen_range(-8..=8)),
        4 => Term::add(sym(rng), Term::int(rng.gen_range(-3..=3))),
        _ => Term::sub(sym(rng), sym(rng)),
    }
}

/// Independent evaluator for formulas built by [`gen_formula`].
pub fn eval_formula(f: &Formula, sigma: &HashMap<SymVar, i64>) -> bool {
    match f {
        Formula::True => true,
        Formula::False => false,
        Formula::Not(g) => !eval_formula(g, sigma),
        Formula::And(xs) => xs.iter().all(|x| eval_formula(x, sigma)),
        Formula::Or(xs) => xs.iter().any(|x| eval_formula(x, sigma)),
        Formula::Atom(Term::App(op, args)) => {
            let (x, y) = (eval_term(&args[0], sigma), eval_term(&args[1], sigma));
            match op {
                Op::Eq => x == y,
                Op::Ne => x != y,
                Op::Lt => x < y,
                Op::Le => x <= y,
                _ => panic!("not a predicate: {f}"),
            }
        }
        Formula::Atom(t) => panic!("unexpected atom {t:?}"),
    }
}

fn eval_term(t: &Term, sigma: &HashMap<SymVar, i64>) -> i64 {
    match t {
        Term::Const(c) => c.as_int(),
        Term::Sym(s) => sigma[s],
        Term::App(Op::Add, a) => eval_term(&a[0], sigma) + eval_term(&a[1], sigma),
        Term::App(Op::Sub, a) => eval_term(&a[0], sigma) - eval_term(&a[1], sigma),
        t => panic!("unexpected term {t:?}"),
    }
}

/// Every assignment of `syms` over `values`.
pub fn assignments(syms: &[SymVar], values: &[i64]) -> Vec<HashMap<SymVar, i64>> {
    let mut out = vec![HashMap::new()];
    for s in syms {
        out = out
            .into_iter()
            .flat_map(|m| {
                values.iter().map(move |v| {
                    let mut m = m.clone();
                    m.insert(s.clone(), *v);
                    m
                })
            })
            .collect();
    }
    out
}

pub fn bench_dir() -> std::path::PathBuf {
    std::path::Path::new(env!("CARGO_MANIFEST_DIR")).join("bench")
}

/// Benchmark pairs as `(name, buggy path, fixed path)`.
pub fn bench_pairs() -> Vec<(String, std::path::PathBuf, std::path::PathBuf)> {
    let mut names: Vec<String> = std::fs::read_dir(bench_dir())
        .unwrap()
        .filter_map(|e| e.ok()?.file_name().into_string().ok())
        .filter_map(|n| n.strip_suffix("_bug.hat").map(String::from))
        .collect();
    names.sort();
    names
        .into_iter()
        .map(|n| {
            let d = bench_dir();
            (n.clone(), d.join(format!("{n}_bug.hat")), d.join(format!("{n}_fixed.hat")))
        })
        .collect()
}
