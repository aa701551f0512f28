//! Derivative-guided falsification engine.
//!
//! A state carries a symbolic trace `Τ` and the continuation effect
//! `R_cont = ∂_Τ(R_post)`. Admitted contexts refine `Τ` pointwise, appended
//! effects extend it while deriving `R_cont`, and a state is a falsification
//! candidate as soon as `R_cont` is the empty language.

use std::cmp::Ordering;
use std::collections::BinaryHeap;
use std::sync::Arc;
use std::time::{Duration, Instant};

use serde::Serialize;
use thiserror::Error;

use crate::events::{match_ground, EffectSignature, EventWitness, GroundEvent, GroundTrace, SymEvent};
use crate::logic::{eval_ground, Constant, Formula, Interpretation, SatResult, Solver, SymVar, Term};
use crate::speclang::core::{step, subst, Action, ExecError, Expr, Value};
use crate::speclang::translate::Harness;
use crate::sre::symbolic::{DistToDead, SreCtx};
use crate::sre::{ground_match, trace_constraint, Sre, SymTrace};

#[derive(Debug, Clone, Serialize)]
pub struct Bounds {
    /// Largest admitted context length tried by iterative deepening.
    pub max_ctx: usize,
    /// Events the method itself may produce on one path.
    pub max_events: usize,
    /// Small steps on one path.
    pub max_steps: usize,
    pub dist_cutoff: usize,
    /// Non-pure actions between two reachability checks on a path.
    pub reach_every: usize,
    /// Longest trace sampled from one effect.
    pub eff_len: usize,
    /// Extra length allowed to naive witnesses beyond the produced events.
    pub witness_slack: usize,
    pub timeout: Duration,
    /// Abort after this many expanded states.
    pub max_states: u64,
}

impl Default for Bounds {
    fn default() -> Self {
        Bounds {
            max_ctx: 4,
            max_events: 16,
            max_steps: 4000,
            dist_cutoff: 4,
            reach_every: 8,
            eff_len: 2,
            witness_slack: 2,
            timeout: Duration::from_secs(60),
            max_states: u64::MAX,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Verdict {
    Falsified,
    NotFalsifiedAtBound,
    Budget,
    Unknown,
}

impl std::fmt::Display for Verdict {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            Verdict::Falsified => "falsified",
            Verdict::NotFalsifiedAtBound => "not-falsified-at-bound",
            Verdict::Budget => "budget",
            Verdict::Unknown => "unknown",
        };
        f.write_str(s)
    }
}

/// How a falsifying execution ends.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Failure {
    /// Returned a value with a trace outside the postcondition.
    Value,
    /// The continuation effect became empty.
    Dead,
    /// Reached `abort`.
    Abort,
}

#[derive(Debug, Clone)]
pub struct Witness {
    pub failure: Failure,
    pub phi: Formula,
    pub trace: SymTrace,
    pub sigma: Interpretation,
    pub ground: GroundTrace,
    pub post: Sre,
    /// Harness inputs and the symbols standing for them.
    pub inputs: Vec<(Arc<str>, SymVar)>,
}

impl Witness {
    /// Input values under the model.
    pub fn model(&self) -> Vec<(Arc<str>, Constant)> {
        self.inputs
            .iter()
            .map(|(x, s)| (x.clone(), self.sigma.get(s).copied().unwrap_or_else(|| Constant::of_sort(&s.sort, 0))))
            .collect()
    }
}

#[derive(Debug, Clone, Default, Serialize)]
pub struct Stats {
    pub states: u64,
    pub pruned: u64,
    pub solver_calls: u64,
    pub solver_time: Duration,
    pub wall: Duration,
    pub max_trace: usize,
    /// Context length of the last deepening round.
    pub ctx_len: usize,
    /// Paths cut by a step or event bound.
    pub bound_hits: u64,
}

#[derive(Debug, Clone)]
pub struct FalsifyResult {
    pub verdict: Verdict,
    pub method: Arc<str>,
    pub witness: Option<Witness>,
    pub stats: Stats,
    pub note: Option<String>,
}

#[derive(Debug, Error)]
pub enum EngineError {
    #[error(transparent)]
    Exec(#[from] ExecError),
}

/// A harness with its inputs replaced by fresh symbols.
#[derive(Debug, Clone)]
pub struct Instance {
    pub expr: Expr,
    pub post: Sre,
    pub inputs: Vec<(Arc<str>, SymVar)>,
}

pub fn instantiate(h: &Harness) -> Instance {
    let mut expr = Expr::seq(Expr::Assume(h.require.clone()), Expr::seq(Expr::Append(h.context.clone()), h.body.clone()));
    let mut post = h.post.clone();
    let mut inputs = Vec::new();
    for (x, s) in &h.inputs {
        let v = crate::logic::fresh_sym(s.clone(), x);
        let t = Term::sym(&v);
        expr = subst(&expr, x, &Value::Term(t.clone()));
        post = crate::speclang::core::subst_sre(&post, x, &t);
        inputs.push((Arc::<str>::clone(x), v));
    }
    Instance { expr, post, inputs }
}

/// Whether `abort` occurs anywhere in `e`, function bodies included.
pub fn may_abort(e: &Expr) -> bool {
    fn value(v: &Value) -> bool {
        match v {
            Value::Term(_) => false,
            Value::Fun { body, .. } | Value::Fix { body, .. } => may_abort(body),
        }
    }
    match e {
        Expr::Abort => true,
        Expr::Val(v) => value(v),
        Expr::GenSym(_) | Expr::Assume(_) | Expr::Admit(_) | Expr::Append(_) => false,
        Expr::Let(_, a, b) | Expr::Choice(a, b) => may_abort(a) || may_abort(b),
        Expr::LetApp { f, body, .. } => value(f) || may_abort(body),
    }
}

/// `Sat(Φ ∧ constr(Τ))` with the locals introduced for every event.
pub fn reachable(solver: &mut Solver, phi: &Formula, trace: &[SymEvent], delta: &EffectSignature) -> (SatResult, Vec<Vec<EventWitness>>) {
    let (c, wits) = trace_constraint(trace, delta);
    (solver.check_sat(&Formula::and2(phi.clone(), c)), wits)
}

fn default_locals(delta: &EffectSignature, fname: &str) -> Option<GroundEvent> {
    let d = delta.get(fname)?;
    let args = d.args.iter().map(|s| Constant::of_sort(s, 0)).collect();
    Some(GroundEvent::new(fname, args, Constant::of_sort(&d.ret, 0)))
}

/// Ground instance of each event of `trace` read off a model of its constraint.
pub fn ground_trace(trace: &[SymEvent], wits: &[Vec<EventWitness>], sigma: &Interpretation, delta: &EffectSignature) -> Option<GroundTrace> {
    let mut out = Vec::with_capacity(trace.len());
    for (ev, ws) in trace.iter().zip(wits) {
        let from_witness = ws.iter().find_map(|w| {
            let vals: Vec<Constant> =
                w.locals.iter().map(|s| sigma.get(s).copied().unwrap_or_else(|| Constant::of_sort(&s.sort, 0))).collect();
            let (args, ret) = vals.split_at(vals.len() - 1);
            let g = GroundEvent::new(&w.fname, args.to_vec(), ret[0]);
            match_ground(ev, &g, sigma).then_some(g)
        });
        let g = from_witness.or_else(|| {
            if !ev.others_included() {
                return None;
            }
            delta
                .names()
                .filter(|n| !ev.atoms().contains_key(*n))
                .find_map(|n| default_locals(delta, n).filter(|g| match_ground(ev, g, sigma)))
        })?;
        out.push(g);
    }
    Some(out)
}

/// Completes `sigma` with default values for the symbols of `phi` and `post`.
pub(crate) fn complete_model(mut sigma: Interpretation, phi: &Formula, post: &Sre) -> Interpretation {
    for s in phi.syms().into_iter().chain(post.syms()) {
        let d = Constant::of_sort(&s.sort, 0);
        sigma.entry(s).or_insert(d);
    }
    sigma
}

/// Concrete check of a witness: every ground event instantiates its symbolic
/// event, the path condition holds, and the postcondition rejects the trace.
pub fn replay(w: &Witness) -> bool {
    if w.ground.len() != w.trace.len() {
        return false;
    }
    if !w.trace.iter().zip(&w.ground).all(|(ev, g)| match_ground(ev, g, &w.sigma)) {
        return false;
    }
    if !matches!(eval_ground(&w.phi, &w.sigma), Ok(true)) {
        return false;
    }
    w.failure == Failure::Abort || !ground_match(&w.post, &w.ground, &w.sigma)
}

#[derive(Debug, Clone)]
struct DState {
    phi: Formula,
    trace: SymTrace,
    cont: Sre,
    e: Expr,
    steps: usize,
    produced: usize,
    ctx_done: bool,
    unchecked: usize,
}

struct Entry {
    key: (DistToDead, usize, u64),
    st: DState,
}

impl PartialEq for Entry {
    fn eq(&self, o: &Self) -> bool {
        self.key == o.key
    }
}
impl Eq for Entry {}
impl PartialOrd for Entry {
    fn partial_cmp(&self, o: &Self) -> Option<Ordering> {
        Some(self.cmp(o))
    }
}
impl Ord for Entry {
    fn cmp(&self, o: &Self) -> Ordering {
        o.key.cmp(&self.key)
    }
}

enum Outcome {
    Found(Witness),
    Exhausted,
    Budget(String),
}

struct Engine<'a> {
    ctx: SreCtx,
    bounds: &'a Bounds,
    inst: &'a Instance,
    aborting: bool,
    start: Instant,
    stats: Stats,
    next_id: u64,
    unknown: Option<String>,
}

impl<'a> Engine<'a> {
    fn push(&mut self, heap: &mut BinaryHeap<Entry>, st: DState) {
        let d = self.ctx.dist_to_dead(&st.cont, self.bounds.dist_cutoff);
        self.next_id += 1;
        heap.push(Entry { key: (d, st.produced, self.next_id), st });
    }

    /// Traces of `eff` with lengths in `lens`, each met pointwise with a
    /// prefix of `cont`, paired with the derivative of `cont`.
    fn product(&mut self, eff: &Sre, cont: &Sre, min_len: usize, max_len: usize) -> Vec<(SymTrace, Sre)> {
        let mut out = Vec::new();
        let mut stack = vec![(Vec::new(), eff.clone(), cont.clone())];
        while let Some((t, e, c)) = stack.pop() {
            if t.len() >= min_len && e.nullable() {
                out.push((t.clone(), c.clone()));
            }
            if t.len() == max_len {
                continue;
            }
            let es = self.ctx.partial_successors(&e);
            let cs = self.ctx.successors(&c, true);
            for (l1, e2) in es.iter().rev() {
                for (l2, c2) in cs.iter().rev() {
                    let m = l1.meet(l2);
                    if !self.ctx.satisfiable(&m) {
                        continue;
                    }
                    let mut t2 = t.clone();
                    t2.push(m);
                    stack.push((t2, e2.clone(), c2.clone()));
                }
            }
        }
        out
    }

    /// Refinements `Τ ∧ Τ_past` with `Τ_past ⊑ past`, built position by position.
    fn admit(&mut self, trace: &[SymEvent], past: &Sre) -> Vec<SymTrace> {
        let mut out = Vec::new();
        let mut stack = vec![(Vec::new(), past.clone())];
        while let Some((t, r)) = stack.pop() {
            if t.len() == trace.len() {
                if r.nullable() {
                    out.push(t);
                }
                continue;
            }
            let cur = &trace[t.len()];
            for (l, r2) in self.ctx.partial_successors(&r).iter().rev() {
                let m = cur.meet(l);
                if !self.ctx.satisfiable(&m) {
                    continue;
                }
                let mut t2: SymTrace = t.clone();
                t2.push(m);
                stack.push((t2, r2.clone()));
            }
        }
        out
    }

    fn candidate(&mut self, st: &DState, failure: Failure) -> Option<Witness> {
        let delta = self.ctx.delta.clone();
        let (res, wits) = reachable(&mut self.ctx.solver, &st.phi, &st.trace, &delta);
        match res {
            SatResult::Sat(m) => {
                let sigma = complete_model(m, &st.phi, &self.inst.post);
                let Some(ground) = ground_trace(&st.trace, &wits, &sigma, &delta) else {
                    self.unknown = Some("could not ground a witness trace".into());
                    return None;
                };
                let w = Witness {
                    failure,
                    phi: st.phi.clone(),
                    trace: st.trace.clone(),
                    sigma,
                    ground,
                    post: self.inst.post.clone(),
                    inputs: self.inst.inputs.clone(),
                };
                if replay(&w) {
                    Some(w)
                } else {
                    log::error!("witness failed replay; treated as unknown");
                    self.unknown = Some("witness failed replay".into());
                    None
                }
            }
            SatResult::Unsat => None,
            SatResult::Unknown(why) => {
                self.unknown = Some(why);
                None
            }
        }
    }

    /// Whether the path is still feasible; undecided paths are kept.
    fn feasible(&mut self, st: &DState) -> bool {
        let delta = self.ctx.delta.clone();
        let (res, _) = reachable(&mut self.ctx.solver, &st.phi, &st.trace, &delta);
        !matches!(res, SatResult::Unsat)
    }

    fn successors(&mut self, st: DState, ctx_len: usize) -> Result<Vec<DState>, EngineError> {
        let mut out = Vec::new();
        for (act, e) in step(&st.e)? {
            let mut s = DState { e, steps: st.steps + 1, ..st.clone() };
            match act {
                Action::Pure => out.push(s),
                Action::Assume(f) => {
                    s.phi = Formula::and2(s.phi, f);
                    if !s.phi.is_false() {
                        s.unchecked += 1;
                        out.push(s);
                    }
                }
                Action::Admit(r) => {
                    for t in self.admit(&st.trace, &r) {
                        out.push(DState { trace: t, unchecked: s.unchecked + 1, ..s.clone() });
                    }
                }
                Action::Append(r) => {
                    let (lo, hi) = if s.ctx_done {
                        (0, self.bounds.eff_len.min(self.bounds.max_events.saturating_sub(s.produced)))
                    } else {
                        (ctx_len, ctx_len)
                    };
                    for (t, c) in self.product(&r, &st.cont, lo, hi) {
                        let mut trace = st.trace.clone();
                        let n = t.len();
                        trace.extend(t);
                        let produced = if s.ctx_done { s.produced + n } else { s.produced };
                        out.push(DState { trace, cont: c, produced, ctx_done: true, unchecked: s.unchecked + 1, ..s.clone() });
                    }
                }
            }
        }
        Ok(out)
    }

    fn search(&mut self, ctx_len: usize) -> Result<Outcome, EngineError> {
        let mut heap = BinaryHeap::new();
        let init = DState {
            phi: Formula::True,
            trace: Vec::new(),
            cont: self.inst.post.clone(),
            e: self.inst.expr.clone(),
            steps: 0,
            produced: 0,
            ctx_done: false,
            unchecked: 0,
        };
        self.push(&mut heap, init);
        while let Some(Entry { st: mut cur, .. }) = heap.pop() {
            loop {
                if self.start.elapsed() > self.bounds.timeout {
                    return Ok(Outcome::Budget("timeout".into()));
                }
                if self.stats.states >= self.bounds.max_states {
                    return Ok(Outcome::Budget("state limit".into()));
                }
                self.stats.states += 1;
                self.stats.max_trace = self.stats.max_trace.max(cur.trace.len());
                let failure = match &cur.e {
                    _ if cur.cont.is_empty() && cur.ctx_done => Some(Failure::Dead),
                    Expr::Abort => Some(Failure::Abort),
                    Expr::Val(_) if !cur.cont.nullable() => Some(Failure::Value),
                    _ => None,
                };
                if let Some(f) = failure {
                    if let Some(w) = self.candidate(&cur, f) {
                        return Ok(Outcome::Found(w));
                    }
                    break;
                }
                if matches!(cur.e, Expr::Val(_)) {
                    break;
                }
                if cur.ctx_done && cur.cont.is_universal() && !self.aborting {
                    self.stats.pruned += 1;
                    break;
                }
                if cur.steps >= self.bounds.max_steps || cur.produced > self.bounds.max_events {
                    self.stats.bound_hits += 1;
                    break;
                }
                if cur.unchecked >= self.bounds.reach_every {
                    if !self.feasible(&cur) {
                        self.stats.pruned += 1;
                        break;
                    }
                    cur.unchecked = 0;
                }
                let mut succ = self.successors(cur, ctx_len)?;
                if succ.len() == 1 {
                    cur = succ.pop().unwrap();
                    continue;
                }
                if succ.is_empty() {
                    self.stats.pruned += 1;
                }
                for s in succ {
                    self.push(&mut heap, s);
                }
                break;
            }
        }
        Ok(Outcome::Exhausted)
    }
}

/// Derivative-guided falsification with iterative deepening on the context length,
/// starting from the empty context.
pub fn run_deriv(h: &Harness, delta: &EffectSignature, bounds: &Bounds, solver: Solver) -> Result<FalsifyResult, EngineError> {
    let inst = instantiate(h);
    let mut eng = Engine {
        ctx: SreCtx::new(delta.clone(), solver),
        bounds,
        aborting: may_abort(&inst.expr),
        inst: &inst,
        start: Instant::now(),
        stats: Stats::default(),
        next_id: 0,
        unknown: None,
    };
    let mut verdict = Verdict::NotFalsifiedAtBound;
    let mut witness = None;
    let mut note = None;
    for len in 0..=bounds.max_ctx {
        eng.stats.ctx_len = len;
        let r = eng.search(len)?;
        log::debug!(
            "context length {len}: {} states, {} pruned, {} solver calls, {:?}",
            eng.stats.states,
            eng.stats.pruned,
            eng.ctx.solver.stats.calls,
            eng.start.elapsed()
        );
        match r {
            Outcome::Found(w) => {
                verdict = Verdict::Falsified;
                witness = Some(w);
                break;
            }
            Outcome::Exhausted => {}
            Outcome::Budget(why) => {
                verdict = Verdict::Budget;
                note = Some(why);
                break;
            }
        }
    }
    if verdict == Verdict::NotFalsifiedAtBound {
        if let Some(why) = eng.unknown.take() {
            verdict = Verdict::Unknown;
            note = Some(why);
        }
    }
    let mut stats = eng.stats;
    stats.solver_calls = eng.ctx.solver.stats.calls;
    stats.solver_time = eng.ctx.solver.stats.time;
    stats.wall = eng.start.elapsed();
    Ok(FalsifyResult { verdict, method: h.method.clone(), witness, stats, note })
}
