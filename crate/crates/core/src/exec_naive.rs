//! Baseline engine: trace-augmented symbolic execution that accumulates the
//! whole effect as one SRE and decides reachability by mintermization.

use std::collections::{BTreeSet, HashMap, HashSet, VecDeque};
use std::sync::Arc;
use std::time::Instant;

use crate::events::{fresh_locals, EffectSignature, GroundEvent, GroundTrace, SymEvent};
use crate::exec_deriv::{
    complete_model, instantiate, replay, Bounds, EngineError, Failure, FalsifyResult, Stats, Verdict, Witness,
};
use crate::logic::simplify::{collect, eval_with, literal};
use crate::logic::{Constant, Formula, Interpretation, SatResult, Solver, SymVar, Term};
use crate::speclang::core::{step, Action, Expr};
use crate::speclang::translate::Harness;
use crate::sre::{Sre, SymTrace};

/// Most minterm letters a single reachability query may build.
pub const MINTERM_CAP: usize = 4096;
/// Most derivative states explored when deciding whether longer words exist.
const CLOSURE_CAP: usize = 100_000;

#[derive(Debug, Clone)]
pub struct NState {
    pub phi: Formula,
    pub r: Sre,
    pub e: Expr,
    steps: usize,
    /// Effects appended by the method, the context excluded.
    appends: usize,
    ctx_done: bool,
}

/// A satisfiable sign assignment to the atoms of one effect's qualifiers.
#[derive(Debug, Clone)]
struct Letter {
    fname: Arc<str>,
    /// Minterm over locals `$0 ..`.
    q: Formula,
    atoms: Arc<Vec<Formula>>,
    signs: Vec<bool>,
}

impl Letter {
    fn contains(&self, l: &SymEvent) -> bool {
        match l.atoms().get(&self.fname) {
            Some(q) => eval_with(q, &mut |a| {
                let i = self.atoms.iter().position(|b| b == a).expect("atom collected from this literal");
                self.signs[i]
            }),
            None => l.others_included(),
        }
    }
}

#[derive(Debug, Clone)]
pub enum SreSat {
    Sat { sigma: Interpretation, trace: SymTrace, ground: GroundTrace },
    Unsat,
    /// Undecided because only words up to the witness bound were searched.
    Bounded,
    Unknown(String),
    Timeout,
}

/// Reachability of `(Φ, R)` over a finite alphabet of minterm letters.
pub struct NaiveSat<'a> {
    pub solver: &'a mut Solver,
    pub delta: &'a EffectSignature,
    pub deadline: Instant,
}

impl NaiveSat<'_> {
    fn sat(&mut self, f: &Formula) -> SatResult {
        self.solver.check_sat(f)
    }

    fn letters(&mut self, phi: &Formula, r: &Sre) -> Result<Vec<Letter>, String> {
        let mut lits: Vec<SymEvent> = Vec::new();
        r.visit_lits(&mut |l| lits.push(l.clone()));
        let mut out = Vec::new();
        for d in &self.delta.effects {
            let mut set = BTreeSet::new();
            for l in &lits {
                if let Some(q) = l.atoms().get(&d.name) {
                    collect(q, &mut set);
                }
            }
            let atoms: Arc<Vec<Formula>> = Arc::new(set.into_iter().collect());
            let locals: Vec<Term> = fresh_locals(d).iter().map(Term::sym).collect();
            // partial assignments are extended left to right and refuted ones dropped
            let mut stack: Vec<Vec<bool>> = vec![Vec::new()];
            while let Some(signs) = stack.pop() {
                if Instant::now() > self.deadline {
                    return Err("timeout".into());
                }
                if signs.len() == atoms.len() {
                    let q = Formula::and(signs.iter().zip(atoms.iter()).map(|(p, a)| literal(a, *p)));
                    out.push(Letter { fname: d.name.clone(), q, atoms: atoms.clone(), signs });
                    if out.len() > MINTERM_CAP {
                        return Err(format!("more than {MINTERM_CAP} minterms"));
                    }
                    continue;
                }
                for p in [true, false] {
                    let mut s2 = signs.clone();
                    s2.push(p);
                    let q = Formula::and(s2.iter().zip(atoms.iter()).map(|(p, a)| literal(a, *p)));
                    let f = Formula::and2(phi.clone(), q.instantiate_locals(&locals));
                    if f.is_false() || matches!(self.sat(&f), SatResult::Unsat) {
                        continue;
                    }
                    stack.push(s2);
                }
            }
        }
        Ok(out)
    }

    /// Searches accepted words by increasing length up to `max_len`,
    /// dropping prefixes whose constraint is already unsatisfiable.
    pub fn check(&mut self, phi: &Formula, r: &Sre, max_len: usize) -> SreSat {
        if r.is_empty() {
            return SreSat::Unsat;
        }
        let root = match self.sat(phi) {
            SatResult::Sat(m) => m,
            SatResult::Unsat => return SreSat::Unsat,
            SatResult::Unknown(w) => return SreSat::Unknown(w),
        };
        let letters = match self.letters(phi, r) {
            Ok(l) => l,
            Err(w) if w == "timeout" => return SreSat::Timeout,
            Err(w) => return SreSat::Unknown(w),
        };
        let mut memo: HashMap<(Sre, usize), Sre> = HashMap::new();
        let mut deriv = |s: &Sre, i: usize| -> Sre {
            memo.entry((s.clone(), i)).or_insert_with(|| s.deriv_by(&mut |l| letters[i].contains(l))).clone()
        };
        struct Item {
            word: Vec<usize>,
            locals: Vec<Vec<SymVar>>,
            f: Formula,
            model: Interpretation,
            state: Sre,
        }
        let mut level =
            vec![Item { word: Vec::new(), locals: Vec::new(), f: phi.clone(), model: root, state: r.clone() }];
        let mut unknown = None;
        for len in 0..=max_len {
            let mut next = Vec::new();
            for it in &level {
                if it.state.nullable() {
                    let trace: SymTrace =
                        it.word.iter().map(|&i| SymEvent::atom(&letters[i].fname, letters[i].q.clone())).collect();
                    let ground = it
                        .word
                        .iter()
                        .zip(&it.locals)
                        .map(|(&i, ls)| {
                            let vals: Vec<Constant> = ls
                                .iter()
                                .map(|s| it.model.get(s).copied().unwrap_or_else(|| Constant::of_sort(&s.sort, 0)))
                                .collect();
                            let (args, ret) = vals.split_at(vals.len() - 1);
                            GroundEvent::new(&letters[i].fname, args.to_vec(), ret[0])
                        })
                        .collect();
                    return SreSat::Sat { sigma: it.model.clone(), trace, ground };
                }
            }
            if len == max_len {
                break;
            }
            for it in &level {
                for i in 0..letters.len() {
                    if Instant::now() > self.deadline {
                        return SreSat::Timeout;
                    }
                    let d = deriv(&it.state, i);
                    if d.is_empty() {
                        continue;
                    }
                    let decl = self.delta.get(&letters[i].fname).expect("letters come from the signature");
                    let ls = fresh_locals(decl);
                    let terms: Vec<Term> = ls.iter().map(Term::sym).collect();
                    let f = Formula::and2(it.f.clone(), letters[i].q.instantiate_locals(&terms));
                    let model = match self.sat(&f) {
                        SatResult::Sat(m) => m,
                        SatResult::Unsat => continue,
                        SatResult::Unknown(w) => {
                            unknown = Some(w);
                            continue;
                        }
                    };
                    let mut word = it.word.clone();
                    word.push(i);
                    let mut locals = it.locals.clone();
                    locals.push(ls);
                    next.push(Item { word, locals, f, model, state: d });
                }
            }
            level = next;
            if level.is_empty() {
                break;
            }
        }
        if let Some(w) = unknown {
            return SreSat::Unknown(w);
        }
        // longer words matter only if an accepting state is still reachable
        let mut seen: HashSet<Sre> = HashSet::new();
        let mut work: Vec<Sre> = level.into_iter().map(|it| it.state).collect();
        while let Some(s) = work.pop() {
            if !seen.insert(s.clone()) {
                continue;
            }
            if s.nullable() {
                return SreSat::Bounded;
            }
            if seen.len() > CLOSURE_CAP {
                return SreSat::Bounded;
            }
            for i in 0..letters.len() {
                let d = deriv(&s, i);
                if !d.is_empty() {
                    work.push(d);
                }
            }
        }
        SreSat::Unsat
    }
}

/// Successors under the naive rules: `assume` conjoins, `admit` intersects
/// and `append` concatenates.
pub fn step_naive(s: &NState) -> Result<Vec<NState>, EngineError> {
    let mut out = Vec::new();
    for (act, e) in step(&s.e)? {
        let mut n = NState { e, steps: s.steps + 1, ..s.clone() };
        match act {
            Action::Pure => {}
            Action::Assume(f) => n.phi = Formula::and2(n.phi, f),
            Action::Admit(r) => n.r = Sre::and2(n.r, r),
            Action::Append(r) => {
                // the first append is the harness context
                if s.ctx_done {
                    n.appends += 1;
                }
                n.ctx_done = true;
                n.r = Sre::concat(n.r, r)
            }
        }
        out.push(n);
    }
    Ok(out)
}

/// Breadth-first naive falsification.
pub fn run_naive(h: &Harness, delta: &EffectSignature, bounds: &Bounds, mut solver: Solver) -> Result<FalsifyResult, EngineError> {
    let inst = instantiate(h);
    let start = Instant::now();
    let deadline = start + bounds.timeout;
    let mut stats = Stats::default();
    let mut queue = VecDeque::new();
    queue.push_back(NState { phi: Formula::True, r: Sre::eps(), e: inst.expr.clone(), steps: 0, appends: 0, ctx_done: false });
    let mut verdict = Verdict::NotFalsifiedAtBound;
    let mut witness = None;
    let mut note: Option<String> = None;
    let mut unknown: Option<String> = None;
    'outer: while let Some(st) = queue.pop_front() {
        if Instant::now() > deadline {
            verdict = Verdict::Budget;
            note = Some("timeout".into());
            break;
        }
        if stats.states >= bounds.max_states {
            verdict = Verdict::Budget;
            note = Some("state limit".into());
            break;
        }
        stats.states += 1;
        let (target, failure) = match &st.e {
            Expr::Val(_) => (Sre::and2(st.r.clone(), Sre::not(inst.post.clone())), Failure::Value),
            Expr::Abort => (st.r.clone(), Failure::Abort),
            _ => {
                if st.steps >= bounds.max_steps {
                    stats.bound_hits += 1;
                    continue;
                }
                for n in step_naive(&st)? {
                    if n.phi != st.phi {
                        if n.phi.is_false() {
                            continue;
                        }
                        match solver.check_sat(&n.phi) {
                            SatResult::Unsat => continue,
                            SatResult::Unknown(w) => unknown = Some(w),
                            SatResult::Sat(_) => {}
                        }
                    }
                    queue.push_back(n);
                }
                continue;
            }
        };
        let max_len = bounds.max_ctx + st.appends + bounds.witness_slack;
        let mut ns = NaiveSat { solver: &mut solver, delta, deadline };
        match ns.check(&st.phi, &target, max_len) {
            SreSat::Sat { sigma, trace, ground } => {
                stats.max_trace = stats.max_trace.max(trace.len());
                let sigma = complete_model(sigma, &st.phi, &inst.post);
                let w = Witness {
                    failure,
                    phi: st.phi.clone(),
                    trace,
                    sigma,
                    ground,
                    post: inst.post.clone(),
                    inputs: inst.inputs.clone(),
                };
                if replay(&w) {
                    verdict = Verdict::Falsified;
                    witness = Some(w);
                    break 'outer;
                }
                log::error!("naive witness failed replay; treated as unknown");
                unknown = Some("witness failed replay".into());
            }
            SreSat::Unsat => {}
            SreSat::Bounded => stats.bound_hits += 1,
            SreSat::Unknown(w) => unknown = Some(w),
            SreSat::Timeout => {
                verdict = Verdict::Budget;
                note = Some("timeout".into());
                break;
            }
        }
    }
    if verdict == Verdict::NotFalsifiedAtBound {
        if let Some(w) = unknown {
            verdict = Verdict::Unknown;
            note = Some(w);
        }
    }
    stats.solver_calls = solver.stats.calls;
    stats.solver_time = solver.stats.time;
    stats.wall = start.elapsed();
    Ok(FalsifyResult { verdict, method: h.method.clone(), witness, stats, note })
}
