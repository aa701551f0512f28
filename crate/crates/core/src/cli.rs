//! Command-line driver: argument parsing, engine dispatch and reports.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::sync::Mutex;
use std::time::{Duration, Instant};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::exec_deriv::{replay, run_deriv, Bounds, EngineError, FalsifyResult, Verdict};
use crate::exec_naive::run_naive;
use crate::logic::{Constant, SmtLibSolver, Solver};
use crate::speclang::{get_harness, parse_module, SpecError};

#[derive(Debug, Parser)]
#[command(name = "sre-falsify", version, about = "Falsify trace safety properties of ADT methods")]
pub struct Cli {
    #[command(subcommand)]
    pub cmd: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Search for an execution of one method that violates its specification.
    Falsify(FalsifyArgs),
    /// Run every benchmark file of a directory and tabulate the results.
    Bench(BenchArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Engine {
    Deriv,
    Naive,
}

impl Engine {
    pub fn as_str(self) -> &'static str {
        match self {
            Engine::Deriv => "deriv",
            Engine::Naive => "naive",
        }
    }
}

#[derive(Debug, Clone, Args)]
pub struct BoundArgs {
    #[arg(long, default_value_t = 4)]
    pub max_ctx: usize,
    #[arg(long, default_value_t = 16)]
    pub max_events: usize,
    #[arg(long, default_value_t = 4000)]
    pub max_steps: usize,
    #[arg(long, default_value_t = 4)]
    pub dist_cutoff: usize,
    /// External SMT-LIB solver command, e.g. `z3 -in`; the built-in solver otherwise.
    #[arg(long)]
    pub solver_cmd: Option<String>,
    /// Wall-clock budget of one run, in seconds.
    #[arg(long, default_value_t = 60.0)]
    pub timeout: f64,
    /// Budget of one solver query, in seconds.
    #[arg(long, default_value_t = 2.0)]
    pub query_timeout: f64,
}

#[derive(Debug, Clone, Args)]
pub struct FalsifyArgs {
    pub file: PathBuf,
    /// Method to falsify; defaults to the file's `harness` directive.
    #[arg(conflicts_with = "method")]
    pub target: Option<String>,
    #[arg(long)]
    pub method: Option<String>,
    #[arg(long, value_enum, default_value_t = Engine::Deriv)]
    pub engine: Engine,
    #[command(flatten)]
    pub bounds: BoundArgs,
    #[arg(long)]
    pub json: bool,
    /// Replay the witness again before reporting it.
    #[arg(long)]
    pub verify: bool,
}

#[derive(Debug, Clone, Args)]
pub struct BenchArgs {
    pub dir: PathBuf,
    /// Engines to run; both by default.
    #[arg(long, value_enum)]
    pub engine: Vec<Engine>,
    #[command(flatten)]
    pub bounds: BoundArgs,
    /// Where `bench.csv` and `bench.md` are written.
    #[arg(long, default_value = ".")]
    pub out: PathBuf,
    /// Benchmarks run concurrently.
    #[arg(long, default_value_t = 1)]
    pub jobs: usize,
}

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{path}: {source}")]
    Spec { path: PathBuf, source: SpecError },
    #[error(transparent)]
    Engine(#[from] EngineError),
    #[error("invalid option: {0}")]
    Usage(String),
    #[error("witness failed verification")]
    Verify,
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 3,
            CliError::Io { .. } | CliError::Spec { .. } => 4,
            CliError::Engine(_) | CliError::Verify => 5,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceEntry {
    pub fname: String,
    pub args: Vec<serde_json::Value>,
    pub ret: serde_json::Value,
    pub qualifier: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportStats {
    pub states: u64,
    pub solver_calls: u64,
    pub wall_ms: f64,
    pub solver_ms: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub verdict: String,
    pub method: String,
    pub engine: Engine,
    pub trace: Vec<TraceEntry>,
    pub model: BTreeMap<String, serde_json::Value>,
    pub stats: ReportStats,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub note: Option<String>,
}

fn json_value(c: Constant) -> serde_json::Value {
    match c {
        Constant::Unit => serde_json::Value::Null,
        Constant::Bool(b) => serde_json::Value::Bool(b),
        Constant::Int(i) => serde_json::Value::from(i),
    }
}

fn show(v: &serde_json::Value) -> String {
    if v.is_null() {
        "()".into()
    } else {
        v.to_string()
    }
}

fn millis(d: Duration) -> f64 {
    d.as_secs_f64() * 1000.0
}

impl Report {
    pub fn new(r: &FalsifyResult, engine: Engine) -> Report {
        let (trace, model) = match &r.witness {
            Some(w) => (
                w.ground
                    .iter()
                    .zip(&w.trace)
                    .map(|(g, ev)| TraceEntry {
                        fname: g.fname.to_string(),
                        args: g.args.iter().copied().map(json_value).collect(),
                        ret: json_value(g.ret),
                        qualifier: ev.to_string(),
                    })
                    .collect(),
                w.model().into_iter().map(|(x, c)| (x.to_string(), json_value(c))).collect(),
            ),
            None => (Vec::new(), BTreeMap::new()),
        };
        Report {
            verdict: r.verdict.to_string(),
            method: r.method.to_string(),
            engine,
            trace,
            model,
            stats: ReportStats {
                states: r.stats.states,
                solver_calls: r.stats.solver_calls,
                wall_ms: millis(r.stats.wall),
                solver_ms: millis(r.stats.solver_time),
            },
            note: r.note.clone(),
        }
    }

    pub fn text(&self) -> String {
        let mut s = format!("{}: {} ({})\n", self.method, self.verdict, self.engine.as_str());
        if !self.trace.is_empty() {
            s.push_str("trace:\n");
            for t in &self.trace {
                let args: Vec<String> = t.args.iter().map(show).collect();
                let _ = writeln!(s, "  {} <- {} {}    {}", show(&t.ret), t.fname, args.join(" "), t.qualifier);
            }
        }
        if !self.model.is_empty() {
            let m: Vec<String> = self.model.iter().map(|(k, v)| format!("{k} = {}", show(v))).collect();
            let _ = writeln!(s, "model: {}", m.join(", "));
        }
        if let Some(n) = &self.note {
            let _ = writeln!(s, "note: {n}");
        }
        let _ = writeln!(
            s,
            "stats: {} states, {} solver calls, {:.1} ms wall, {:.1} ms in solver",
            self.stats.states, self.stats.solver_calls, self.stats.wall_ms, self.stats.solver_ms
        );
        s
    }
}

/// Process exit code of a verdict.
pub fn verdict_code(v: Verdict) -> i32 {
    match v {
        Verdict::Falsified => 0,
        Verdict::NotFalsifiedAtBound => 1,
        Verdict::Budget | Verdict::Unknown => 2,
    }
}

impl BoundArgs {
    pub fn bounds(&self) -> Result<Bounds, CliError> {
        if self.max_steps == 0 || self.max_events == 0 {
            return Err(CliError::Usage("bounds must be positive".into()));
        }
        if !(self.timeout > 0.0 && self.query_timeout > 0.0) {
            return Err(CliError::Usage("timeouts must be positive".into()));
        }
        Ok(Bounds {
            max_ctx: self.max_ctx,
            max_events: self.max_events,
            max_steps: self.max_steps,
            dist_cutoff: self.dist_cutoff,
            timeout: Duration::from_secs_f64(self.timeout),
            ..Bounds::default()
        })
    }

    pub fn solver(&self) -> Solver {
        let budget = Duration::from_secs_f64(self.query_timeout);
        match &self.solver_cmd {
            Some(cmd) => Solver::new(Box::new(SmtLibSolver::new(cmd)), budget),
            None => {
                let mut s = Solver::bounded();
                s.budget = budget;
                s
            }
        }
    }
}

/// Runs one engine on one method of a benchmark file.
pub fn falsify_file(path: &Path, method: Option<&str>, engine: Engine, bounds: &Bounds, solver: Solver) -> Result<FalsifyResult, CliError> {
    let text = std::fs::read_to_string(path).map_err(|source| CliError::Io { path: path.into(), source })?;
    let spec_err = |source| CliError::Spec { path: path.into(), source };
    let m = parse_module(&text).map_err(spec_err)?;
    let target = m.target(method).map_err(spec_err)?;
    let h = get_harness(&m, &target).map_err(spec_err)?;
    Ok(match engine {
        Engine::Deriv => run_deriv(&h, &m.delta, bounds, solver)?,
        Engine::Naive => run_naive(&h, &m.delta, bounds, solver)?,
    })
}

/// The `falsify` subcommand; returns the report text and the exit code.
pub fn cmd_falsify(a: &FalsifyArgs) -> Result<(String, i32), CliError> {
    let bounds = a.bounds.bounds()?;
    let method = a.method.as_deref().or(a.target.as_deref());
    let r = falsify_file(&a.file, method, a.engine, &bounds, a.bounds.solver())?;
    if a.verify {
        if let Some(w) = &r.witness {
            if !replay(w) {
                return Err(CliError::Verify);
            }
        }
    }
    let rep = Report::new(&r, a.engine);
    let out = if a.json { serde_json::to_string_pretty(&rep).expect("report serializes") + "\n" } else { rep.text() };
    Ok((out, verdict_code(r.verdict)))
}

#[derive(Debug, Clone, Serialize)]
pub struct BenchRow {
    pub benchmark: String,
    pub variant: String,
    pub deriv: Option<String>,
    pub deriv_s: Option<f64>,
    pub naive: Option<String>,
    pub naive_s: Option<f64>,
}

impl BenchRow {
    pub fn speedup(&self) -> Option<f64> {
        Some(self.naive_s? / self.deriv_s?.max(1e-6))
    }
}

fn split_name(stem: &str) -> (String, String) {
    for v in ["bug", "fixed"] {
        if let Some(b) = stem.strip_suffix(&format!("_{v}")) {
            return (b.to_string(), v.to_string());
        }
    }
    (stem.to_string(), String::new())
}

fn cell(v: &Option<String>, t: Option<f64>) -> String {
    match (v.as_deref(), t) {
        (Some("budget"), _) => "T/O".into(),
        (Some(v), Some(t)) => format!("{v} ({t:.2}s)"),
        _ => "-".into(),
    }
}

pub fn markdown(rows: &[BenchRow]) -> String {
    let mut s = String::from("| benchmark | variant | deriv | naive | speedup |\n|---|---|---|---|---|\n");
    for r in rows {
        let sp = match (r.speedup(), r.naive.as_deref()) {
            (_, Some("budget")) => "> timeout".into(),
            (Some(x), _) => format!("x{x:.1}"),
            _ => "-".into(),
        };
        let _ = writeln!(s, "| {} | {} | {} | {} | {} |", r.benchmark, r.variant, cell(&r.deriv, r.deriv_s), cell(&r.naive, r.naive_s), sp);
    }
    s
}

pub fn csv(rows: &[BenchRow]) -> String {
    let opt = |x: &Option<String>| x.clone().unwrap_or_default();
    let num = |x: Option<f64>| x.map(|t| format!("{t:.4}")).unwrap_or_default();
    let mut s = String::from("benchmark,variant,deriv_verdict,deriv_s,naive_verdict,naive_s,speedup\n");
    for r in rows {
        let _ = writeln!(
            s,
            "{},{},{},{},{},{},{}",
            r.benchmark,
            r.variant,
            opt(&r.deriv),
            num(r.deriv_s),
            opt(&r.naive),
            num(r.naive_s),
            num(r.speedup())
        );
    }
    s
}

/// Runs the selected engines on every `.hat` file of `a.dir`. Failures of a
/// single benchmark are reported in its row.
pub fn run_bench(a: &BenchArgs) -> Result<Vec<BenchRow>, CliError> {
    let bounds = a.bounds.bounds()?;
    let engines = if a.engine.is_empty() { vec![Engine::Deriv, Engine::Naive] } else { a.engine.clone() };
    let rd = std::fs::read_dir(&a.dir).map_err(|source| CliError::Io { path: a.dir.clone(), source })?;
    let mut files: Vec<PathBuf> = rd.filter_map(|e| e.ok().map(|e| e.path())).filter(|p| p.extension().is_some_and(|x| x == "hat")).collect();
    files.sort();
    let rows: Mutex<Vec<(usize, BenchRow)>> = Mutex::new(Vec::new());
    let next = Mutex::new(0usize);
    std::thread::scope(|sc| {
        for _ in 0..a.jobs.max(1) {
            sc.spawn(|| loop {
                let i = {
                    let mut n = next.lock().unwrap();
                    *n += 1;
                    *n - 1
                };
                let Some(p) = files.get(i) else { break };
                let stem = p.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
                let (benchmark, variant) = split_name(&stem);
                let mut row = BenchRow { benchmark, variant, deriv: None, deriv_s: None, naive: None, naive_s: None };
                for &e in &engines {
                    let t = Instant::now();
                    let (v, s) = match falsify_file(p, None, e, &bounds, a.bounds.solver()) {
                        Ok(r) => (r.verdict.to_string(), r.stats.wall.as_secs_f64()),
                        Err(err) => {
                            log::error!("{}: {err}", p.display());
                            ("error".to_string(), t.elapsed().as_secs_f64())
                        }
                    };
                    match e {
                        Engine::Deriv => (row.deriv, row.deriv_s) = (Some(v), Some(s)),
                        Engine::Naive => (row.naive, row.naive_s) = (Some(v), Some(s)),
                    }
                }
                rows.lock().unwrap().push((i, row));
            });
        }
    });
    let mut rows = rows.into_inner().unwrap();
    rows.sort_by_key(|(i, _)| *i);
    Ok(rows.into_iter().map(|(_, r)| r).collect())
}

/// The `bench` subcommand: writes `bench.csv` and `bench.md` and returns the table.
pub fn cmd_bench(a: &BenchArgs) -> Result<String, CliError> {
    let rows = run_bench(a)?;
    let md = markdown(&rows);
    let write = |name: &str, body: &str| {
        let path = a.out.join(name);
        std::fs::write(&path, body).map_err(|source| CliError::Io { path, source })
    };
    write("bench.csv", &csv(&rows))?;
    write("bench.md", &md)?;
    Ok(md)
}

/// Parses `args` and runs the command; returns the exit code.
pub fn main_with(args: impl IntoIterator<Item = String>) -> i32 {
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 3 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    let res = match &cli.cmd {
        Command::Falsify(a) => cmd_falsify(a).map(|(out, code)| {
            print!("{out}");
            code
        }),
        Command::Bench(a) => cmd_bench(a).map(|md| {
            print!("{md}");
            0
        }),
    };
    match res {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn names_and_tables() {
        assert_eq!(split_name("stack_push_bug"), ("stack_push".into(), "bug".into()));
        assert_eq!(split_name("other"), ("other".into(), String::new()));
        let row = BenchRow {
            benchmark: "b".into(),
            variant: "bug".into(),
            deriv: Some("falsified".into()),
            deriv_s: Some(0.5),
            naive: Some("budget".into()),
            naive_s: Some(60.0),
        };
        assert!(markdown(std::slice::from_ref(&row)).contains("T/O"));
        assert!(csv(&[row]).lines().nth(1).unwrap().starts_with("b,bug,falsified,0.5000,budget,60.0000,120"));
    }

    #[test]
    fn usage_errors_exit_above_two() {
        assert_eq!(main_with(["sre-falsify".to_string(), "frobnicate".to_string()]), 3);
        let missing = ["sre-falsify", "falsify", "/nonexistent/x.hat"].map(String::from);
        assert!(main_with(missing) > 2);
    }
}
