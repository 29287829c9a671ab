//! Experiment grids, trace files, aggregate tables, plots and the
//! post-hoc check over a results directory.
//!
//! Layout of a results directory:
//!
//! ```text
//! {out}/{solver}_{variant}/{problem}/runNN.csv       per-iteration trace
//! {out}/{solver}_{variant}/{problem}/runNN.diag.csv  accuracy levels and merit values
//! {out}/{solver}_{variant}/{problem}/runNN.plot.csv  cost against exact f and delta
//! {out}/{solver}_{variant}/{problem}/runNN.x.csv     iterates
//! {out}/{solver}_{variant}/{problem}/runNN.p.csv     steps
//! {out}/{solver}_{variant}/{problem}/runNN.meta      key=value run summary
//! ```
//!
//! All floats are written with `{:.16e}`, so files round-trip exactly and
//! identical inputs give identical bytes.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;

use crate::error::{ConfigError, HarnessError, SolverError};
use crate::irerm::{check_irerm_invariants, parse_count, run, IrermConfig};
use crate::oracle::{AccuracyLevel, AccuracyMode, NoiseSpec, NoisyLeastSquares, DEFAULT_SAMPLE_CAP};
use crate::problems::{by_id, parse_id_list, PROBLEM_IDS};
use crate::storm::{check_storm_invariants, storm_run, StormConfig};
use crate::theory::{
    estimate_lipschitz, hitting_time, lemma_succ_check, lyapunov_decrease_report, trajectory,
    LyapunovReport, TheoryInputs, TheoryParams,
};
use crate::trace::{
    IterationRecord, RunTrace, SolverKind, StateSnapshot, TerminationReason, Variant, Violation,
};

/// Header of the per-iteration trace file.
pub const TRACE_HEADER: &str =
    "k,success,delta,theta,cost,fbar_dagger,fbar_star,fbar_p,gnorm,exact_f,exact_gradnorm,samples_charged";
const DIAG_HEADER: &str = "k,y_t,y_g,y_tilde,h_k,pred_at_theta_k,pred,ared,theta_t,zero_gradient,exact_f_trial,exact_gradient_error";
const PLOT_HEADER: &str = "cost,exact_f,delta";

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub solver: SolverKind,
    pub variant: Variant,
    pub problems: Vec<String>,
    pub runs: usize,
    pub sigma: f64,
    pub base_seed: u64,
    /// Budget is `budget_mult · (n + 1)`; `None` uses the variant default.
    pub budget_mult: Option<f64>,
    /// Explicit budget, overriding `budget_mult`.
    pub budget: Option<u64>,
    pub kmax: usize,
    pub n: usize,
    pub jobs: usize,
    pub out: PathBuf,
    pub sample_cap: u64,
    /// Solver parameters such as `eta1`, applied in order.
    pub params: Vec<(String, String)>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            solver: SolverKind::Irerm,
            variant: Variant::V2,
            problems: PROBLEM_IDS.iter().map(|s| s.to_string()).collect(),
            runs: 10,
            sigma: 0.1,
            base_seed: 42,
            budget_mult: None,
            budget: None,
            kmax: 500,
            n: 100,
            jobs: std::thread::available_parallelism().map_or(1, |n| n.get()),
            out: PathBuf::from("results"),
            sample_cap: DEFAULT_SAMPLE_CAP,
            params: Vec::new(),
        }
    }
}

impl ExperimentConfig {
    /// Sets one key. Keys not owned by the experiment are stored as solver
    /// parameters and checked when the solver configuration is built.
    pub fn set(&mut self, key: &str, value: &str) -> Result<(), HarnessError> {
        let bad = || ConfigError::BadValue {
            key: key.to_string(),
            value: value.to_string(),
        };
        let v = value.trim();
        match key {
            "solver" => self.solver = v.parse()?,
            "variant" => self.variant = v.parse()?,
            "problems" => self.problems = parse_id_list(v)?,
            "runs" => self.runs = v.parse().map_err(|_| bad())?,
            "sigma" => self.sigma = v.parse().map_err(|_| bad())?,
            "seed" => self.base_seed = v.parse().map_err(|_| bad())?,
            "budget_mult" => self.budget_mult = Some(v.parse().map_err(|_| bad())?),
            "budget" => self.budget = Some(parse_count(v).ok_or_else(bad)?),
            "kmax" => self.kmax = v.parse().map_err(|_| bad())?,
            "n" => self.n = v.parse().map_err(|_| bad())?,
            "jobs" => self.jobs = v.parse().map_err(|_| bad())?,
            "out" => self.out = PathBuf::from(v),
            "sample_cap" => self.sample_cap = parse_count(v).ok_or_else(bad)?,
            _ => self.params.push((key.to_string(), v.to_string())),
        }
        Ok(())
    }

    /// Applies a flat `key = value` text; `#` starts a comment.
    pub fn apply_text(&mut self, text: &str, origin: &str) -> Result<(), HarnessError> {
        for (lineno, line) in text.lines().enumerate() {
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| HarnessError::Parse {
                what: "config line",
                path: origin.to_string(),
                detail: format!("line {}: expected key = value", lineno + 1),
            })?;
            self.set(key.trim(), value)?;
        }
        Ok(())
    }

    pub fn apply_file(&mut self, path: &Path) -> Result<(), HarnessError> {
        let text = fs::read_to_string(path).map_err(|e| HarnessError::io(path, e))?;
        self.apply_text(&text, &path.display().to_string())
    }

    pub fn budget_value(&self) -> u64 {
        self.budget.unwrap_or_else(|| {
            let mult = self
                .budget_mult
                .unwrap_or_else(|| self.variant.default_budget_multiplier());
            (mult * (self.n as f64 + 1.0)) as u64
        })
    }

    pub fn validate(&self) -> Result<(), HarnessError> {
        let check = |ok: bool, name: &'static str, value: f64, constraint: &'static str| {
            if ok {
                Ok(())
            } else {
                Err(ConfigError::OutOfRange {
                    name,
                    value,
                    constraint,
                })
            }
        };
        check(self.runs >= 1, "runs", self.runs as f64, "runs >= 1")?;
        check(self.n >= 1, "n", self.n as f64, "n >= 1")?;
        check(self.jobs >= 1, "jobs", self.jobs as f64, "jobs >= 1")?;
        check(
            self.sigma >= 0.0 && self.sigma.is_finite(),
            "sigma",
            self.sigma,
            "sigma >= 0",
        )?;
        check(self.budget_value() > 0, "budget", self.budget_value() as f64, "budget > 0")?;
        if self.problems.is_empty() {
            return Err(ConfigError::BadValue {
                key: "problems".into(),
                value: String::new(),
            }
            .into());
        }
        for id in &self.problems {
            by_id(id, self.n)?;
        }
        self.solver_settings()?;
        Ok(())
    }

    pub fn solver_settings(&self) -> Result<SolverSettings, ConfigError> {
        let budget = self.budget_value();
        let mut settings = match self.solver {
            SolverKind::Irerm => {
                let mut c = IrermConfig::new(self.variant, self.n);
                c.kmax = self.kmax;
                c.budget = budget;
                SolverSettings::Irerm(c)
            }
            SolverKind::Storm => {
                let mut c = StormConfig::new(self.variant, self.n);
                c.kmax = self.kmax;
                c.budget = budget;
                SolverSettings::Storm(c)
            }
        };
        for (k, v) in &self.params {
            settings.set(k, v)?;
        }
        settings.validate()?;
        Ok(settings)
    }

    pub fn cell_dir(&self) -> PathBuf {
        self.out.join(format!("{}_{}", self.solver, self.variant))
    }

    /// Settings of the experiment in a stable order, for metadata files.
    pub fn entries(&self) -> Vec<(String, String)> {
        vec![
            ("solver".into(), self.solver.to_string()),
            ("variant".into(), self.variant.to_string()),
            ("n".into(), self.n.to_string()),
            ("sigma".into(), fmt_f(self.sigma)),
            ("base_seed".into(), self.base_seed.to_string()),
            ("sample_cap".into(), self.sample_cap.to_string()),
        ]
    }
}

/// Solver configuration of an experiment.
#[derive(Debug, Clone, PartialEq)]
pub enum SolverSettings {
    Irerm(IrermConfig),
    Storm(StormConfig),
}

impl SolverSettings {
    pub fn new(solver: SolverKind, variant: Variant, n: usize) -> Self {
        match solver {
            SolverKind::Irerm => SolverSettings::Irerm(IrermConfig::new(variant, n)),
            SolverKind::Storm => SolverSettings::Storm(StormConfig::new(variant, n)),
        }
    }

    pub fn set(&mut self, key: &str, value: &str) -> Result<(), ConfigError> {
        match self {
            SolverSettings::Irerm(c) => c.set(key, value),
            SolverSettings::Storm(c) => c.set(key, value),
        }
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        match self {
            SolverSettings::Irerm(c) => c.validate(),
            SolverSettings::Storm(c) => c.validate(),
        }
    }

    pub fn entries(&self) -> Vec<(&'static str, String)> {
        match self {
            SolverSettings::Irerm(c) => c.entries(),
            SolverSettings::Storm(c) => c.entries(),
        }
    }

    pub fn run(&self, oracle: &NoisyLeastSquares, problem: &str, seed: u64) -> Result<RunTrace, SolverError> {
        match self {
            SolverSettings::Irerm(c) => run(oracle, c, problem, seed),
            SolverSettings::Storm(c) => storm_run(oracle, c, problem, seed),
        }
    }

    pub fn check(&self, trace: &RunTrace) -> Vec<Violation> {
        match self {
            SolverSettings::Irerm(c) => check_irerm_invariants(trace, c),
            SolverSettings::Storm(c) => check_storm_invariants(trace, c),
        }
    }
}

/// What `runNN.meta` records about one run.
#[derive(Debug, Clone, PartialEq)]
pub struct RunSummary {
    pub solver: SolverKind,
    pub variant: Variant,
    pub problem: String,
    pub run_index: usize,
    pub seed: u64,
    /// `None` when the run could not start; the error is in `termination`.
    pub final_exact_f: Option<f64>,
    pub final_cost: u64,
    pub iterations: usize,
    pub successes: usize,
    pub termination: String,
    pub violations: usize,
}

impl RunSummary {
    pub fn failed(&self) -> bool {
        self.final_exact_f.is_none()
    }
}

/// Outcome of one grid cell run, with the invariant violations found.
#[derive(Debug, Clone, PartialEq)]
pub struct RunOutcome {
    pub summary: RunSummary,
    pub violations: Vec<Violation>,
}

/// Path prefix of run `run_index`, e.g. `.../p5/run03`.
pub fn run_prefix(cell_dir: &Path, problem: &str, run_index: usize) -> PathBuf {
    cell_dir.join(problem).join(format!("run{run_index:02}"))
}

fn with_suffix(prefix: &Path, suffix: &str) -> PathBuf {
    let mut s = prefix.as_os_str().to_owned();
    s.push(suffix);
    PathBuf::from(s)
}

/// Runs every (problem, run) pair of the grid, writing one set of files
/// per run. A run that cannot start is recorded as failed and the grid
/// continues.
pub fn run_experiment(config: &ExperimentConfig) -> Result<Vec<RunOutcome>, HarnessError> {
    config.validate()?;
    let settings = config.solver_settings()?;
    let cell_dir = config.cell_dir();
    for id in &config.problems {
        let dir = cell_dir.join(id);
        fs::create_dir_all(&dir).map_err(|e| HarnessError::io(&dir, e))?;
    }
    let tasks: Vec<(String, usize)> = config
        .problems
        .iter()
        .flat_map(|p| (0..config.runs).map(move |r| (p.clone(), r)))
        .collect();
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(config.jobs)
        .build()
        .map_err(|e| HarnessError::Parse {
            what: "thread pool",
            path: String::new(),
            detail: e.to_string(),
        })?;
    pool.install(|| {
        tasks
            .par_iter()
            .map(|(problem, r)| run_one(config, &settings, &cell_dir, problem, *r))
            .collect()
    })
}

fn run_one(
    config: &ExperimentConfig,
    settings: &SolverSettings,
    cell_dir: &Path,
    problem: &str,
    run_index: usize,
) -> Result<RunOutcome, HarnessError> {
    let p = by_id(problem, config.n)?;
    let noise = NoiseSpec::new(config.sigma, config.base_seed).map_err(|e| ConfigError::BadValue {
        key: "sigma".into(),
        value: e.to_string(),
    })?;
    let oracle = NoisyLeastSquares::new(p.as_ref(), noise).with_sample_cap(config.sample_cap);
    let seed = config.base_seed.wrapping_add(run_index as u64);
    let prefix = run_prefix(cell_dir, problem, run_index);
    let outcome = match settings.run(&oracle, problem, seed) {
        Ok(trace) => {
            let violations = settings.check(&trace);
            let summary = RunSummary {
                solver: config.solver,
                variant: config.variant,
                problem: problem.to_string(),
                run_index,
                seed,
                final_exact_f: Some(trace.final_exact_f()),
                final_cost: trace.final_cost(),
                iterations: trace.iterations(),
                successes: trace.successes(),
                termination: trace.termination.to_string(),
                violations: violations.len(),
            };
            write_run(&prefix, &trace, &summary, config, settings)?;
            RunOutcome { summary, violations }
        }
        Err(e) => {
            let summary = RunSummary {
                solver: config.solver,
                variant: config.variant,
                problem: problem.to_string(),
                run_index,
                seed,
                final_exact_f: None,
                final_cost: 0,
                iterations: 0,
                successes: 0,
                termination: format!("failed: {e}"),
                violations: 0,
            };
            write_file(
                &with_suffix(&prefix, ".meta"),
                &meta_text(&summary, None, config, settings),
            )?;
            RunOutcome {
                summary,
                violations: Vec::new(),
            }
        }
    };
    Ok(outcome)
}

fn write_file(path: &Path, text: &str) -> Result<(), HarnessError> {
    fs::write(path, text).map_err(|e| HarnessError::io(path, e))
}

fn write_run(
    prefix: &Path,
    trace: &RunTrace,
    summary: &RunSummary,
    config: &ExperimentConfig,
    settings: &SolverSettings,
) -> Result<(), HarnessError> {
    write_file(&with_suffix(prefix, ".csv"), &trace_csv(trace))?;
    write_file(&with_suffix(prefix, ".diag.csv"), &diag_csv(trace))?;
    write_file(&with_suffix(prefix, ".plot.csv"), &plot_csv(trace))?;
    write_file(&with_suffix(prefix, ".x.csv"), &iterates_csv(trace))?;
    write_file(&with_suffix(prefix, ".p.csv"), &steps_csv(trace))?;
    write_file(
        &with_suffix(prefix, ".meta"),
        &meta_text(summary, Some(trace), config, settings),
    )
}

pub fn fmt_f(v: f64) -> String {
    format!("{v:.16e}")
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map(fmt_f).unwrap_or_default()
}

/// One row per iteration; `cost` is the cumulative cost after the iteration.
pub fn trace_csv(trace: &RunTrace) -> String {
    let mut s = String::from(TRACE_HEADER);
    s.push('\n');
    for r in &trace.records {
        let _ = writeln!(
            s,
            "{},{},{},{},{},{},{},{},{},{},{},{}",
            r.k,
            u8::from(r.success),
            fmt_f(r.delta),
            fmt_opt(r.theta),
            r.cost_after,
            fmt_f(r.fbar_dagger),
            fmt_opt(r.fbar_star),
            fmt_opt(r.fbar_p),
            fmt_f(r.gnorm),
            fmt_f(r.exact_f),
            fmt_f(r.exact_gradnorm),
            r.samples_charged,
        );
    }
    s
}

pub fn diag_csv(trace: &RunTrace) -> String {
    let mut s = String::from(DIAG_HEADER);
    s.push('\n');
    for r in &trace.records {
        let _ = writeln!(
            s,
            "{},{},{},{},{},{},{},{},{},{},{},{}",
            r.k,
            fmt_f(r.y_t.y()),
            fmt_f(r.y_g.y()),
            fmt_opt(r.y_tilde.map(|y| y.y())),
            fmt_opt(r.h_k),
            fmt_opt(r.pred_at_theta_k),
            fmt_opt(r.pred),
            fmt_opt(r.ared),
            fmt_opt(r.theta_t),
            u8::from(r.zero_gradient),
            fmt_opt(r.exact_f_trial),
            fmt_f(r.exact_gradient_error),
        );
    }
    s
}

/// Cumulative cost against the exact objective and the radius, starting
/// from the initial state and then after every iteration.
pub fn plot_csv(trace: &RunTrace) -> String {
    let mut s = String::from(PLOT_HEADER);
    s.push('\n');
    for (cost, f, delta) in plot_points(trace) {
        let _ = writeln!(s, "{cost},{},{}", fmt_f(f), fmt_f(delta));
    }
    s
}

pub fn plot_points(trace: &RunTrace) -> Vec<(u64, f64, f64)> {
    let mut pts = vec![(trace.initial.cost, trace.initial.exact_f, trace.initial.delta)];
    for (i, r) in trace.records.iter().enumerate() {
        let (f, delta) = match trace.records.get(i + 1) {
            Some(n) => (n.exact_f, n.delta),
            None => (trace.last.exact_f, trace.last.delta),
        };
        pts.push((r.cost_after, f, delta));
    }
    pts
}

fn vector_rows(rows: impl Iterator<Item = (usize, Vec<f64>)>) -> String {
    let mut s = String::new();
    for (k, v) in rows {
        let _ = write!(s, "{k}");
        for a in v {
            let _ = write!(s, ",{}", fmt_f(a));
        }
        s.push('\n');
    }
    s
}

/// `x_k` for every iteration followed by the final iterate.
fn iterates_csv(trace: &RunTrace) -> String {
    vector_rows(
        trace
            .records
            .iter()
            .map(|r| (r.k, r.x.clone()))
            .chain(std::iter::once((trace.last.k, trace.last.x.clone()))),
    )
}

fn steps_csv(trace: &RunTrace) -> String {
    vector_rows(trace.records.iter().map(|r| (r.k, r.p.clone())))
}

fn snapshot_entries(prefix: &str, s: &StateSnapshot) -> Vec<(String, String)> {
    vec![
        (format!("{prefix}.y"), fmt_f(s.y)),
        (format!("{prefix}.delta"), fmt_f(s.delta)),
        (format!("{prefix}.theta"), fmt_opt(s.theta)),
        (format!("{prefix}.k"), s.k.to_string()),
        (format!("{prefix}.cost"), s.cost.to_string()),
        (format!("{prefix}.exact_f"), fmt_f(s.exact_f)),
        (format!("{prefix}.exact_gradnorm"), fmt_f(s.exact_gradnorm)),
    ]
}

fn meta_text(
    summary: &RunSummary,
    trace: Option<&RunTrace>,
    config: &ExperimentConfig,
    settings: &SolverSettings,
) -> String {
    let mut entries: Vec<(String, String)> = config.entries();
    entries.extend([
        ("problem".into(), summary.problem.clone()),
        ("run".into(), summary.run_index.to_string()),
        ("seed".into(), summary.seed.to_string()),
        ("mode".into(), "expectation".into()),
        ("termination".into(), summary.termination.clone()),
        ("iterations".into(), summary.iterations.to_string()),
        ("successes".into(), summary.successes.to_string()),
        ("final_exact_f".into(), fmt_opt(summary.final_exact_f)),
        ("final_cost".into(), summary.final_cost.to_string()),
        ("violations".into(), summary.violations.to_string()),
    ]);
    if let Some(t) = trace {
        entries.push(("termination_kind".into(), t.termination.label().into()));
        entries.extend(snapshot_entries("initial", &t.initial));
        entries.extend(snapshot_entries("last", &t.last));
    }
    entries.extend(
        settings
            .entries()
            .into_iter()
            .map(|(k, v)| (format!("param.{k}"), v)),
    );
    let mut s = String::new();
    for (k, v) in entries {
        let _ = writeln!(s, "{k}={v}");
    }
    s
}

fn parse_err(what: &'static str, path: &Path, detail: impl Into<String>) -> HarnessError {
    HarnessError::Parse {
        what,
        path: path.display().to_string(),
        detail: detail.into(),
    }
}

/// Parsed `runNN.meta`.
#[derive(Debug, Clone, PartialEq)]
pub struct RunMeta {
    pub path: PathBuf,
    pub entries: BTreeMap<String, String>,
}

impl RunMeta {
    pub fn read(path: &Path) -> Result<Self, HarnessError> {
        let text = fs::read_to_string(path).map_err(|e| HarnessError::io(path, e))?;
        let mut entries = BTreeMap::new();
        for line in text.lines().filter(|l| !l.trim().is_empty()) {
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| parse_err("metadata line", path, line))?;
            entries.insert(k.to_string(), v.to_string());
        }
        Ok(Self {
            path: path.to_path_buf(),
            entries,
        })
    }

    pub fn get(&self, key: &str) -> Result<&str, HarnessError> {
        self.entries
            .get(key)
            .map(String::as_str)
            .ok_or_else(|| parse_err("metadata", &self.path, format!("missing key `{key}`")))
    }

    fn parse<T: std::str::FromStr>(&self, key: &str) -> Result<T, HarnessError> {
        let v = self.get(key)?;
        v.parse()
            .map_err(|_| parse_err("metadata", &self.path, format!("bad value `{v}` for `{key}`")))
    }

    fn parse_opt(&self, key: &str) -> Result<Option<f64>, HarnessError> {
        let v = self.get(key)?;
        if v.is_empty() {
            Ok(None)
        } else {
            self.parse(key).map(Some)
        }
    }

    pub fn summary(&self) -> Result<RunSummary, HarnessError> {
        Ok(RunSummary {
            solver: self.parse("solver")?,
            variant: self.parse("variant")?,
            problem: self.get("problem")?.to_string(),
            run_index: self.parse("run")?,
            seed: self.parse("seed")?,
            final_exact_f: self.parse_opt("final_exact_f")?,
            final_cost: self.parse("final_cost")?,
            iterations: self.parse("iterations")?,
            successes: self.parse("successes")?,
            termination: self.get("termination")?.to_string(),
            violations: self.parse("violations")?,
        })
    }

    /// Solver configuration recorded for the run.
    pub fn settings(&self) -> Result<SolverSettings, HarnessError> {
        let mut s = SolverSettings::new(self.parse("solver")?, self.parse("variant")?, self.parse("n")?);
        for (k, v) in &self.entries {
            if let Some(key) = k.strip_prefix("param.") {
                s.set(key, v)?;
            }
        }
        Ok(s)
    }

    fn snapshot(&self, prefix: &str, x: Vec<f64>) -> Result<StateSnapshot, HarnessError> {
        let y: f64 = self.parse(&format!("{prefix}.y"))?;
        let level = AccuracyLevel::new(AccuracyMode::Expectation, y)
            .map_err(|e| parse_err("metadata", &self.path, e.to_string()))?;
        Ok(StateSnapshot {
            x,
            y,
            h: level.h(),
            delta: self.parse(&format!("{prefix}.delta"))?,
            theta: self.parse_opt(&format!("{prefix}.theta"))?,
            k: self.parse(&format!("{prefix}.k"))?,
            cost: self.parse(&format!("{prefix}.cost"))?,
            exact_f: self.parse(&format!("{prefix}.exact_f"))?,
            exact_gradnorm: self.parse(&format!("{prefix}.exact_gradnorm"))?,
        })
    }
}

fn read_rows(path: &Path) -> Result<Vec<Vec<String>>, HarnessError> {
    let text = fs::read_to_string(path).map_err(|e| HarnessError::io(path, e))?;
    Ok(text
        .lines()
        .filter(|l| !l.is_empty())
        .map(|l| l.split(',').map(str::to_string).collect())
        .collect())
}

fn cell<T: std::str::FromStr>(row: &[String], i: usize, path: &Path) -> Result<T, HarnessError> {
    let v = row.get(i).ok_or_else(|| parse_err("csv row", path, "too few columns"))?;
    v.parse()
        .map_err(|_| parse_err("csv field", path, format!("column {i}: `{v}`")))
}

fn opt_cell(row: &[String], i: usize, path: &Path) -> Result<Option<f64>, HarnessError> {
    match row.get(i).map(String::as_str) {
        Some("") => Ok(None),
        _ => cell(row, i, path).map(Some),
    }
}

fn vector_file(path: &Path) -> Result<Vec<Vec<f64>>, HarnessError> {
    read_rows(path)?
        .iter()
        .map(|row| (1..row.len()).map(|i| cell(row, i, path)).collect())
        .collect()
}

/// Rebuilds a trace from the files of one run. Gradient vectors are not
/// stored, so `g` is left empty.
pub fn read_trace(prefix: &Path) -> Result<RunTrace, HarnessError> {
    let meta = RunMeta::read(&with_suffix(prefix, ".meta"))?;
    let summary = meta.summary()?;
    if summary.failed() {
        return Err(parse_err("run", prefix, summary.termination));
    }
    let level = |y: f64, path: &Path| {
        AccuracyLevel::new(AccuracyMode::Expectation, y).map_err(|e| parse_err("accuracy level", path, e.to_string()))
    };
    let trace_path = with_suffix(prefix, ".csv");
    let diag_path = with_suffix(prefix, ".diag.csv");
    let main = read_rows(&trace_path)?;
    let diag = read_rows(&diag_path)?;
    let xs = vector_file(&with_suffix(prefix, ".x.csv"))?;
    let ps = vector_file(&with_suffix(prefix, ".p.csv"))?;
    let n_rec = main.len().saturating_sub(1);
    if diag.len() != n_rec + 1 || xs.len() != n_rec + 1 || ps.len() != n_rec {
        return Err(parse_err("run files", prefix, "row counts disagree"));
    }
    let mut records = Vec::with_capacity(n_rec);
    for i in 0..n_rec {
        let (m, d) = (&main[i + 1], &diag[i + 1]);
        let p = &trace_path;
        let q = &diag_path;
        let success: u8 = cell(m, 1, p)?;
        let zero: u8 = cell(d, 9, q)?;
        records.push(IterationRecord {
            k: cell(m, 0, p)?,
            x: xs[i].clone(),
            delta: cell(m, 2, p)?,
            theta: opt_cell(m, 3, p)?,
            h_k: opt_cell(d, 4, q)?,
            y_tilde: opt_cell(d, 3, q)?.map(|y| level(y, q)).transpose()?,
            y_t: level(cell(d, 1, q)?, q)?,
            y_g: level(cell(d, 2, q)?, q)?,
            fbar_dagger: cell(m, 5, p)?,
            fbar_star: opt_cell(m, 6, p)?,
            fbar_p: opt_cell(m, 7, p)?,
            g: Vec::new(),
            gnorm: cell(m, 8, p)?,
            p: ps[i].clone(),
            pred_at_theta_k: opt_cell(d, 5, q)?,
            pred: opt_cell(d, 6, q)?,
            ared: opt_cell(d, 7, q)?,
            theta_t: opt_cell(d, 8, q)?,
            success: success == 1,
            zero_gradient: zero == 1,
            samples_charged: cell(m, 11, p)?,
            cost_after: cell(m, 4, p)?,
            exact_f: cell(m, 9, p)?,
            exact_gradnorm: cell(m, 10, p)?,
            exact_f_trial: opt_cell(d, 10, q)?,
            exact_gradient_error: cell(d, 11, q)?,
        });
    }
    let x0 = xs[0].clone();
    let x_last = xs[n_rec].clone();
    let termination = match meta.get("termination_kind")? {
        "budget" => TerminationReason::Budget,
        "max iterations" => TerminationReason::MaxIterations,
        "sample cap" => TerminationReason::SampleCap,
        "numerical failure" => TerminationReason::NumericalFailure,
        _ => TerminationReason::InvariantViolation(
            meta.get("termination")?
                .trim_start_matches("invariant violation: ")
                .to_string(),
        ),
    };
    Ok(RunTrace {
        solver: summary.solver,
        variant: summary.variant,
        problem: summary.problem,
        seed: summary.seed,
        budget: meta.parse("param.budget")?,
        records,
        initial: meta.snapshot("initial", x0)?,
        last: meta.snapshot("last", x_last)?,
        termination,
    })
}

/// All `runNN.meta` files under a results directory, in path order.
pub fn find_runs(dir: &Path) -> Result<Vec<PathBuf>, HarnessError> {
    let mut out = Vec::new();
    let read = |d: &Path| -> Result<Vec<PathBuf>, HarnessError> {
        let mut v: Vec<PathBuf> = fs::read_dir(d)
            .map_err(|e| HarnessError::io(d, e))?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .collect();
        v.sort();
        Ok(v)
    };
    for cell in read(dir)? {
        if !cell.is_dir() {
            continue;
        }
        for problem in read(&cell)? {
            if !problem.is_dir() {
                continue;
            }
            for f in read(&problem)? {
                let name = f.file_name().and_then(|s| s.to_str()).unwrap_or("");
                if name.starts_with("run") && name.ends_with(".meta") {
                    out.push(f.with_extension(""));
                }
            }
        }
    }
    Ok(out)
}

pub fn read_summaries(dir: &Path) -> Result<Vec<RunSummary>, HarnessError> {
    find_runs(dir)?
        .iter()
        .map(|p| RunMeta::read(&with_suffix(p, ".meta"))?.summary())
        .collect()
}

/// Statistics of the final exact `f` over the runs of one cell.
#[derive(Debug, Clone, PartialEq)]
pub struct CellStats {
    pub runs: usize,
    pub min: f64,
    pub mean: f64,
    /// Sample standard deviation; 0 for a single run.
    pub std: f64,
    pub single_run: bool,
    /// Run with the lowest final `f`, ties broken by lower final cost.
    pub best_run: usize,
}

/// `finals` holds `(run_index, final exact f, final cost)`.
pub fn cell_stats(finals: &[(usize, f64, u64)]) -> Option<CellStats> {
    let runs = finals.len();
    if runs == 0 {
        return None;
    }
    let mean = finals.iter().map(|r| r.1).sum::<f64>() / runs as f64;
    let std = if runs > 1 {
        (finals.iter().map(|r| (r.1 - mean).powi(2)).sum::<f64>() / (runs - 1) as f64).sqrt()
    } else {
        0.0
    };
    let best = finals
        .iter()
        .min_by(|a, b| a.1.total_cmp(&b.1).then(a.2.cmp(&b.2)).then(a.0.cmp(&b.0)))?;
    Some(CellStats {
        runs,
        min: best.1,
        mean,
        std,
        single_run: runs == 1,
        best_run: best.0,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct AggregateRow {
    pub problem: String,
    /// One entry per column of the table; `None` marks a missing cell.
    pub cells: Vec<Option<CellStats>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AggregateTable {
    pub columns: Vec<(SolverKind, Variant)>,
    pub rows: Vec<AggregateRow>,
}

fn problem_order(id: &str) -> (usize, String) {
    (
        PROBLEM_IDS.iter().position(|p| *p == id).unwrap_or(usize::MAX),
        id.to_string(),
    )
}

/// Groups completed runs by problem and (solver, variant); failed runs are left out.
pub fn aggregate(summaries: &[RunSummary]) -> AggregateTable {
    let mut columns: Vec<(SolverKind, Variant)> = summaries.iter().map(|s| (s.solver, s.variant)).collect();
    columns.sort();
    columns.dedup();
    let mut problems: Vec<String> = summaries.iter().map(|s| s.problem.clone()).collect();
    problems.sort_by_key(|p| problem_order(p));
    problems.dedup();
    let rows = problems
        .into_iter()
        .map(|problem| {
            let cells = columns
                .iter()
                .map(|&(solver, variant)| {
                    let finals: Vec<(usize, f64, u64)> = summaries
                        .iter()
                        .filter(|s| s.problem == problem && s.solver == solver && s.variant == variant)
                        .filter_map(|s| s.final_exact_f.map(|f| (s.run_index, f, s.final_cost)))
                        .collect();
                    cell_stats(&finals)
                })
                .collect();
            AggregateRow { problem, cells }
        })
        .collect();
    AggregateTable { columns, rows }
}

fn column_name(c: &(SolverKind, Variant)) -> String {
    format!("{}_{}", c.0, c.1)
}

pub fn table_csv(table: &AggregateTable) -> String {
    let mut s = String::from("problem");
    for c in &table.columns {
        let n = column_name(c);
        let _ = write!(s, ",{n}_min,{n}_mean,{n}_std,{n}_runs");
    }
    s.push('\n');
    for row in &table.rows {
        s.push_str(&row.problem);
        for c in &row.cells {
            match c {
                Some(c) => {
                    let _ = write!(s, ",{},{},{},{}", fmt_f(c.min), fmt_f(c.mean), fmt_f(c.std), c.runs);
                }
                None => s.push_str(",missing,missing,missing,0"),
            }
        }
        s.push('\n');
    }
    s
}

pub fn table_markdown(table: &AggregateTable) -> String {
    let header = |s: &mut String| {
        s.push_str("| problem |");
        for c in &table.columns {
            let _ = write!(s, " {} |", column_name(c));
        }
        s.push_str("\n|---|");
        for _ in &table.columns {
            s.push_str("---|");
        }
        s.push('\n');
    };
    let mut s = String::from("Lowest final f over the runs\n\n");
    header(&mut s);
    for row in &table.rows {
        let _ = write!(s, "| {} |", row.problem);
        for c in &row.cells {
            match c {
                Some(c) => {
                    let _ = write!(s, " {:.2e} |", c.min);
                }
                None => s.push_str(" missing |"),
            }
        }
        s.push('\n');
    }
    s.push_str("\nMean final f ± sample standard deviation\n\n");
    header(&mut s);
    for row in &table.rows {
        let _ = write!(s, "| {} |", row.problem);
        for c in &row.cells {
            match c {
                Some(c) if c.single_run => {
                    let _ = write!(s, " {:.2e} (single run) |", c.mean);
                }
                Some(c) => {
                    let _ = write!(s, " {:.2e} ± {:.2e} |", c.mean, c.std);
                }
                None => s.push_str(" missing |"),
            }
        }
        s.push('\n');
    }
    s
}

/// One curve of a plot: label and `(cost, value)` points.
pub type Series = (String, Vec<(f64, f64)>);

const COLORS: [&str; 4] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd"];

/// Two stacked panels sharing the cost axis, both with logarithmic y axes.
pub fn plot_svg(title: &str, top: &[Series], bottom: &[Series]) -> String {
    let (w, ph, margin) = (640.0, 260.0, 60.0);
    let height = 2.0 * ph + 3.0 * margin;
    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{height}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(s, r#"<title>{}</title>"#, escape(title));
    let _ = writeln!(s, r#"<text x="{}" y="20" text-anchor="middle">{}</text>"#, w / 2.0, escape(title));
    let xmax = top
        .iter()
        .chain(bottom)
        .flat_map(|(_, pts)| pts.iter().map(|p| p.0))
        .fold(1.0f64, f64::max);
    for (i, (series, ylabel)) in [(top, "f"), (bottom, "delta")].into_iter().enumerate() {
        let y0 = margin + i as f64 * (ph + margin);
        panel(&mut s, series, ylabel, margin, y0, w - 1.5 * margin, ph, xmax);
    }
    s.push_str("</svg>\n");
    s
}

#[allow(clippy::too_many_arguments)]
fn panel(s: &mut String, series: &[Series], ylabel: &str, x0: f64, y0: f64, pw: f64, ph: f64, xmax: f64) {
    let logs: Vec<f64> = series
        .iter()
        .flat_map(|(_, pts)| pts.iter().filter(|p| p.1 > 0.0).map(|p| p.1.log10()))
        .collect();
    let lo = logs.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = logs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let (lo, hi) = if lo.is_finite() { (lo.floor(), hi.ceil().max(lo.floor() + 1.0)) } else { (0.0, 1.0) };
    let px = |c: f64| x0 + pw * c / xmax;
    let py = |v: f64| y0 + ph * (hi - v) / (hi - lo);
    let _ = writeln!(
        s,
        r#"<rect x="{x0}" y="{y0}" width="{pw}" height="{ph}" fill="none" stroke="black"/>"#
    );
    let step = ((hi - lo) / 6.0).ceil().max(1.0);
    let mut e = lo;
    while e <= hi {
        let _ = writeln!(
            s,
            r##"<line x1="{x0}" y1="{y}" x2="{x1}" y2="{y}" stroke="#ddd"/><text x="{tx}" y="{ty}" text-anchor="end">1e{e}</text>"##,
            y = py(e),
            x1 = x0 + pw,
            tx = x0 - 4.0,
            ty = py(e) + 4.0,
        );
        e += step;
    }
    let _ = writeln!(
        s,
        r#"<text x="{x0}" y="{}" text-anchor="start">0</text><text x="{}" y="{}" text-anchor="end">Cost {xmax:.3e}</text>"#,
        y0 + ph + 14.0,
        x0 + pw,
        y0 + ph + 14.0,
    );
    let _ = writeln!(s, r#"<text x="{}" y="{}">{ylabel}</text>"#, x0 + 4.0, y0 - 6.0);
    for (i, (label, pts)) in series.iter().enumerate() {
        let color = COLORS[i % COLORS.len()];
        let coords: Vec<String> = pts
            .iter()
            .filter(|p| p.1 > 0.0)
            .map(|p| format!("{:.2},{:.2}", px(p.0), py(p.1.log10())))
            .collect();
        let _ = writeln!(
            s,
            r#"<polyline fill="none" stroke="{color}" stroke-width="1.5" points="{}"/>"#,
            coords.join(" ")
        );
        let _ = writeln!(
            s,
            r#"<text x="{}" y="{}" fill="{color}" text-anchor="end">{}</text>"#,
            x0 + pw - 6.0,
            y0 + 16.0 + 14.0 * i as f64,
            escape(label)
        );
    }
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

/// Writes `{dir}/plots/{problem}.svg` for every problem, drawing the best
/// run of each (solver, variant) cell. Returns the files written.
pub fn write_plots(dir: &Path) -> Result<Vec<PathBuf>, HarnessError> {
    let summaries = read_summaries(dir)?;
    let table = aggregate(&summaries);
    let plot_dir = dir.join("plots");
    fs::create_dir_all(&plot_dir).map_err(|e| HarnessError::io(&plot_dir, e))?;
    let mut written = Vec::new();
    for row in &table.rows {
        let mut top = Vec::new();
        let mut bottom = Vec::new();
        for (col, stats) in table.columns.iter().zip(&row.cells) {
            let Some(stats) = stats else { continue };
            let cell_dir = dir.join(column_name(col));
            let prefix = run_prefix(&cell_dir, &row.problem, stats.best_run);
            let path = with_suffix(&prefix, ".plot.csv");
            let rows = read_rows(&path)?;
            let mut f = Vec::new();
            let mut d = Vec::new();
            for r in rows.iter().skip(1) {
                let cost: f64 = cell(r, 0, &path)?;
                f.push((cost, cell(r, 1, &path)?));
                d.push((cost, cell(r, 2, &path)?));
            }
            let label = format!("{} run {}", column_name(col), stats.best_run);
            top.push((label.clone(), f));
            bottom.push((label, d));
        }
        let out = plot_dir.join(format!("{}.svg", row.problem));
        write_file(&out, &plot_svg(&format!("{}: best runs", row.problem), &top, &bottom))?;
        written.push(out);
    }
    Ok(written)
}

/// Options for [`check_dir`].
#[derive(Debug, Clone, PartialEq)]
pub struct CheckOptions {
    pub kappa: f64,
    pub epsilon: f64,
    pub pi: f64,
    /// Fixed `L`; estimated from each trajectory when `None`.
    pub lipschitz: Option<f64>,
    pub lipschitz_pairs: usize,
    pub lipschitz_radius: f64,
}

impl CheckOptions {
    pub fn new(kappa: f64, epsilon: f64) -> Self {
        Self {
            kappa,
            epsilon,
            pi: 0.9,
            lipschitz: None,
            lipschitz_pairs: 1000,
            lipschitz_radius: 0.1,
        }
    }
}

/// Diagnostics of one recorded run.
#[derive(Debug, Clone, PartialEq)]
pub struct RunCheck {
    pub prefix: PathBuf,
    pub violations: Vec<Violation>,
    /// IRERM runs only.
    pub theory: Option<TheoryCheck>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TheoryCheck {
    pub lipschitz: f64,
    pub lyapunov: LyapunovReport,
    pub lemma_violations: Vec<Violation>,
    pub hitting_time: Option<usize>,
    pub hitting_time_bound: f64,
    pub true_fraction: f64,
}

impl RunCheck {
    pub fn failed(&self) -> bool {
        !self.violations.is_empty()
            || self.theory.as_ref().is_some_and(|t| {
                !t.lemma_violations.is_empty() || !t.lyapunov.unsuccessful_violations.is_empty()
            })
    }
}

/// Re-checks every recorded run: solver invariants for all runs, and for
/// IRERM runs the theory diagnostics.
pub fn check_dir(dir: &Path, options: &CheckOptions) -> Result<Vec<RunCheck>, HarnessError> {
    let mut out = Vec::new();
    for prefix in find_runs(dir)? {
        let meta = RunMeta::read(&with_suffix(&prefix, ".meta"))?;
        if meta.summary()?.failed() {
            continue;
        }
        let trace = read_trace(&prefix)?;
        let settings = meta.settings()?;
        let violations = settings.check(&trace);
        let theory = match &settings {
            SolverSettings::Irerm(config) => Some(theory_check(&trace, config, &meta, options)?),
            SolverSettings::Storm(_) => None,
        };
        out.push(RunCheck {
            prefix,
            violations,
            theory,
        });
    }
    Ok(out)
}

fn theory_check(
    trace: &RunTrace,
    config: &IrermConfig,
    meta: &RunMeta,
    options: &CheckOptions,
) -> Result<TheoryCheck, HarnessError> {
    let lipschitz = match options.lipschitz {
        Some(l) => l,
        None => {
            let problem = by_id(&trace.problem, meta.parse("n")?)?;
            let oracle = NoisyLeastSquares::new(problem.as_ref(), NoiseSpec::noiseless());
            estimate_lipschitz(
                &oracle,
                &trajectory(trace),
                options.lipschitz_radius,
                options.lipschitz_pairs,
                trace.seed,
            )
        }
    };
    let mut inputs = TheoryInputs::new(options.kappa, lipschitz, options.epsilon, AccuracyMode::Expectation.h_up());
    inputs.pi = options.pi;
    let params = TheoryParams::derive(config, &inputs)?;
    let labels = crate::theory::classify_trace(trace, &params)?;
    let labeled: Vec<bool> = labels.iter().flatten().map(|l| l.is_true()).collect();
    let true_fraction = if labeled.is_empty() {
        0.0
    } else {
        labeled.iter().filter(|&&t| t).count() as f64 / labeled.len() as f64
    };
    let psi0 = crate::theory::psi_sequence(trace, &params)?[0];
    Ok(TheoryCheck {
        lipschitz,
        lyapunov: lyapunov_decrease_report(trace, &params)?,
        lemma_violations: lemma_succ_check(trace, &params)?,
        hitting_time: hitting_time(trace, options.epsilon),
        hitting_time_bound: params.hitting_time_bound(psi0),
        true_fraction,
    })
}

/// Plain-text report of [`check_dir`] results.
pub fn render_checks(checks: &[RunCheck]) -> String {
    let mut s = String::new();
    for c in checks {
        let status = if c.failed() { "FAIL" } else { "ok" };
        let _ = writeln!(s, "{status} {}: {} invariant violations", c.prefix.display(), c.violations.len());
        for v in &c.violations {
            let _ = writeln!(s, "    {v}");
        }
        if let Some(t) = &c.theory {
            let mean = t
                .lyapunov
                .overall
                .mean
                .map_or("n/a".to_string(), |m| format!("{m:.3e}"));
            let hit = t.hitting_time.map_or("not hit".to_string(), |k| k.to_string());
            let _ = writeln!(
                s,
                "    L = {:.3e}, true fraction = {:.3}, mean psi step / delta^2 = {mean}, hitting time = {hit} (bound {:.3e}), small-radius violations = {}",
                t.lipschitz,
                t.true_fraction,
                t.hitting_time_bound,
                t.lemma_violations.len()
            );
            for v in t.lemma_violations.iter().chain(&t.lyapunov.unsuccessful_violations) {
                let _ = writeln!(s, "    {v}");
            }
        }
    }
    let failed = checks.iter().filter(|c| c.failed()).count();
    let _ = writeln!(s, "{} runs checked, {failed} failed", checks.len());
    s
}
