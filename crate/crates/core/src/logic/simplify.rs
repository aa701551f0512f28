//! Two-level minimization of quantifier-free formulas modulo a theory.
//!
//! Atomic predicates are treated as Boolean variables. Assignments the theory
//! rules out are don't-cares, and the result is a cover by prime implicants.

use std::collections::{BTreeSet, HashMap};

use super::{Formula, Op, Term};

/// Above this many distinct atoms a formula is returned unchanged.
pub const MAX_ATOMS: usize = 10;

/// Positive form of an atom and whether `t` asserts it.
pub fn atom_key(t: &Term) -> (Formula, bool) {
    match t {
        Term::App(Op::Ne, args) => (Formula::Atom(Term::App(Op::Eq, args.clone())), false),
        Term::App(Op::Lt, args) => (Formula::Atom(Term::App(Op::Le, vec![args[1].clone(), args[0].clone()])), false),
        t => (Formula::Atom(t.clone()), true),
    }
}

/// Positive atoms of `f`, added to `out`.
pub fn collect(f: &Formula, out: &mut BTreeSet<Formula>) {
    match f {
        Formula::True | Formula::False => {}
        Formula::Atom(t) => {
            out.insert(atom_key(t).0);
        }
        Formula::Not(g) => collect(g, out),
        Formula::And(xs) | Formula::Or(xs) => xs.iter().for_each(|x| collect(x, out)),
    }
}

fn eval(f: &Formula, idx: &HashMap<&Formula, usize>, m: u32) -> bool {
    eval_with(f, &mut |a| m >> idx[a] & 1 == 1)
}

/// Truth value of `f` given the value of each positive atom.
pub fn eval_with(f: &Formula, val: &mut impl FnMut(&Formula) -> bool) -> bool {
    match f {
        Formula::True => true,
        Formula::False => false,
        Formula::Atom(t) => {
            let (k, pos) = atom_key(t);
            val(&k) == pos
        }
        Formula::Not(g) => !eval_with(g, val),
        Formula::And(xs) => xs.iter().all(|x| eval_with(x, val)),
        Formula::Or(xs) => xs.iter().any(|x| eval_with(x, val)),
    }
}

pub fn literal(atom: &Formula, pos: bool) -> Formula {
    if pos {
        atom.clone()
    } else {
        Formula::not(atom.clone())
    }
}

/// Minterms over `atoms` that `sat` cannot rule out, found by extending
/// partial assignments and pruning refuted ones.
fn feasible(atoms: &[Formula], sat: &mut impl FnMut(&Formula) -> bool) -> Vec<u32> {
    let mut out = Vec::new();
    let mut stack: Vec<(u32, usize, Vec<Formula>)> = vec![(0, 0, Vec::new())];
    while let Some((m, i, lits)) = stack.pop() {
        if i == atoms.len() {
            out.push(m);
            continue;
        }
        for pos in [false, true] {
            let mut l2 = lits.clone();
            l2.push(literal(&atoms[i], pos));
            let f = Formula::and(l2.clone());
            if f.is_false() || !sat(&f) {
                continue;
            }
            stack.push((m | (pos as u32) << i, i + 1, l2));
        }
    }
    out.sort_unstable();
    out
}

/// Implicant: bit values under a care mask.
type Cube = (u32, u32);

fn covers(c: Cube, m: u32) -> bool {
    m & c.1 == c.0
}

fn primes(terms: &[u32], full: u32) -> Vec<Cube> {
    let mut level: BTreeSet<Cube> = terms.iter().map(|&m| (m, full)).collect();
    let mut primes = Vec::new();
    while !level.is_empty() {
        let v: Vec<Cube> = level.iter().copied().collect();
        let mut merged = vec![false; v.len()];
        let mut next = BTreeSet::new();
        for i in 0..v.len() {
            for j in i + 1..v.len() {
                let (a, b) = (v[i], v[j]);
                if a.1 != b.1 {
                    continue;
                }
                let d = a.0 ^ b.0;
                if d.count_ones() == 1 {
                    next.insert((a.0 & !d, a.1 & !d));
                    merged[i] = true;
                    merged[j] = true;
                }
            }
        }
        primes.extend(v.iter().zip(&merged).filter(|(_, m)| !**m).map(|(c, _)| *c));
        level = next;
    }
    primes
}

/// Equivalent of `f` under every assignment `sat` admits, as a small DNF.
pub fn simplify_with(f: &Formula, sat: &mut impl FnMut(&Formula) -> bool) -> Formula {
    if matches!(f, Formula::True | Formula::False) {
        return f.clone();
    }
    let mut set = BTreeSet::new();
    collect(f, &mut set);
    let atoms: Vec<Formula> = set.into_iter().collect();
    if atoms.len() > MAX_ATOMS {
        return f.clone();
    }
    let idx: HashMap<&Formula, usize> = atoms.iter().enumerate().map(|(i, a)| (a, i)).collect();
    let full = if atoms.len() == 32 { u32::MAX } else { (1u32 << atoms.len()) - 1 };
    let live = feasible(&atoms, sat);
    let on: Vec<u32> = live.iter().copied().filter(|&m| eval(f, &idx, m)).collect();
    if on.is_empty() {
        return Formula::False;
    }
    if on.len() == live.len() {
        return Formula::True;
    }
    // the off-set is the feasible minterms outside `on`; everything else is free
    let off: Vec<u32> = live.iter().copied().filter(|&m| !eval(f, &idx, m)).collect();
    let all: Vec<u32> = (0..=full).filter(|m| off.binary_search(m).is_err()).collect();
    let primes: Vec<Cube> = primes(&all, full).into_iter().filter(|c| on.iter().any(|&m| covers(*c, m))).collect();
    let mut left: BTreeSet<u32> = on.iter().copied().collect();
    let mut chosen: Vec<Cube> = Vec::new();
    for &m in &on {
        let cs: Vec<&Cube> = primes.iter().filter(|c| covers(**c, m)).collect();
        if cs.len() == 1 && !chosen.contains(cs[0]) {
            chosen.push(*cs[0]);
        }
    }
    for c in &chosen {
        left.retain(|&m| !covers(*c, m));
    }
    while !left.is_empty() {
        let best = primes
            .iter()
            .max_by_key(|c| (left.iter().filter(|&&m| covers(**c, m)).count(), std::cmp::Reverse(c.1.count_ones())))
            .copied()
            .expect("primes cover the on-set");
        left.retain(|&m| !covers(best, m));
        chosen.push(best);
    }
    chosen.sort_unstable();
    Formula::or(chosen.into_iter().map(|(bits, care)| {
        Formula::and((0..atoms.len()).filter(|i| care >> i & 1 == 1).map(|i| literal(&atoms[i], bits >> i & 1 == 1)))
    }))
}
