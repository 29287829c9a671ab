//! Solver state, per-iteration records and run traces shared by both solvers.

use std::fmt;
use std::str::FromStr;

use crate::error::ConfigError;
use crate::oracle::AccuracyLevel;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum SolverKind {
    Irerm,
    Storm,
}

impl SolverKind {
    pub fn as_str(self) -> &'static str {
        match self {
            SolverKind::Irerm => "irerm",
            SolverKind::Storm => "storm",
        }
    }
}

impl fmt::Display for SolverKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for SolverKind {
    type Err = ConfigError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "irerm" => Ok(SolverKind::Irerm),
            "storm" => Ok(SolverKind::Storm),
            _ => Err(ConfigError::BadValue {
                key: "solver".into(),
                value: s.into(),
            }),
        }
    }
}

/// Sample-size schedule: `V1` follows the accuracy conditions, `V2` is the
/// cheaper heuristic `max{10 + k, ⌈1/δ²⌉}`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Variant {
    V1,
    V2,
}

impl Variant {
    pub fn as_str(self) -> &'static str {
        match self {
            Variant::V1 => "v1",
            Variant::V2 => "v2",
        }
    }

    /// Default budget multiplier; the budget is this times `n + 1`.
    pub fn default_budget_multiplier(self) -> f64 {
        match self {
            Variant::V1 => 1e5,
            Variant::V2 => 1e4,
        }
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Variant {
    type Err = ConfigError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "v1" => Ok(Variant::V1),
            "v2" => Ok(Variant::V2),
            _ => Err(ConfigError::BadValue {
                key: "variant".into(),
                value: s.into(),
            }),
        }
    }
}

/// Iterate and algorithmic parameters carried between iterations.
///
/// STORM ignores `y` and `theta`.
#[derive(Debug, Clone, PartialEq)]
pub struct TrustRegionState {
    pub x: Vec<f64>,
    pub y: AccuracyLevel,
    pub delta: f64,
    pub theta: f64,
    pub k: usize,
    pub cost: u64,
}

/// Everything computed in one iteration. Fields prefixed `exact_` are
/// out-of-band diagnostics and never influence the solver.
#[derive(Debug, Clone, PartialEq)]
pub struct IterationRecord {
    pub k: usize,
    pub x: Vec<f64>,
    pub delta: f64,
    /// `θ_k` at entry; `None` for STORM.
    pub theta: Option<f64>,
    /// `h(y_k)` at entry; `None` for STORM.
    pub h_k: Option<f64>,
    pub y_tilde: Option<AccuracyLevel>,
    pub y_t: AccuracyLevel,
    pub y_g: AccuracyLevel,
    /// Function estimate at `x_k` used by the model (STORM: `f̄(x_k)`).
    pub fbar_dagger: f64,
    /// Second independent estimate at `x_k`; `None` for STORM or a zero gradient.
    pub fbar_star: Option<f64>,
    /// Estimate at the trial point; `None` on a zero gradient.
    pub fbar_p: Option<f64>,
    pub g: Vec<f64>,
    pub gnorm: f64,
    pub p: Vec<f64>,
    pub pred_at_theta_k: Option<f64>,
    /// Predicted reduction used by the acceptance test (STORM: `δ‖g‖`).
    pub pred: Option<f64>,
    pub ared: Option<f64>,
    pub theta_t: Option<f64>,
    pub success: bool,
    pub zero_gradient: bool,
    pub samples_charged: u64,
    pub cost_after: u64,
    pub exact_f: f64,
    pub exact_gradnorm: f64,
    /// Exact `f(x_k + p_k)`; `None` on a zero gradient.
    pub exact_f_trial: Option<f64>,
    pub exact_gradient_error: f64,
}

impl IterationRecord {
    pub fn h_t(&self) -> f64 {
        self.y_t.h()
    }

    pub fn h_tilde(&self) -> Option<f64> {
        self.y_tilde.map(|y| y.h())
    }
}

/// Snapshot of the state at the start or end of a run.
#[derive(Debug, Clone, PartialEq)]
pub struct StateSnapshot {
    pub x: Vec<f64>,
    pub y: f64,
    pub h: f64,
    pub delta: f64,
    pub theta: Option<f64>,
    pub k: usize,
    pub cost: u64,
    pub exact_f: f64,
    pub exact_gradnorm: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub enum TerminationReason {
    Budget,
    MaxIterations,
    SampleCap,
    NumericalFailure,
    InvariantViolation(String),
}

impl TerminationReason {
    pub fn label(&self) -> &'static str {
        match self {
            TerminationReason::Budget => "budget",
            TerminationReason::MaxIterations => "max iterations",
            TerminationReason::SampleCap => "sample cap",
            TerminationReason::NumericalFailure => "numerical failure",
            TerminationReason::InvariantViolation(_) => "invariant violation",
        }
    }
}

impl fmt::Display for TerminationReason {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            TerminationReason::InvariantViolation(msg) => write!(f, "invariant violation: {msg}"),
            other => f.write_str(other.label()),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunTrace {
    pub solver: SolverKind,
    pub variant: Variant,
    pub problem: String,
    pub seed: u64,
    pub budget: u64,
    pub records: Vec<IterationRecord>,
    pub initial: StateSnapshot,
    pub last: StateSnapshot,
    pub termination: TerminationReason,
}

impl RunTrace {
    pub fn final_exact_f(&self) -> f64 {
        self.last.exact_f
    }

    pub fn final_cost(&self) -> u64 {
        self.last.cost
    }

    pub fn iterations(&self) -> usize {
        self.records.len()
    }

    pub fn successes(&self) -> usize {
        self.records.iter().filter(|r| r.success).count()
    }
}

/// Euclidean norm.
pub fn norm(v: &[f64]) -> f64 {
    v.iter().map(|a| a * a).sum::<f64>().sqrt()
}

pub(crate) fn distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(u, v)| (u - v) * (u - v))
        .sum::<f64>()
        .sqrt()
}

/// One broken invariant found in a recorded trace.
#[derive(Debug, Clone, PartialEq)]
pub struct Violation {
    pub k: usize,
    pub check: &'static str,
    pub detail: String,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "k = {}: {}: {}", self.k, self.check, self.detail)
    }
}

/// Relative slack used by the diagnostic comparisons.
pub const DIAGNOSTIC_SLACK: f64 = 1e-12;

pub(crate) fn slack(v: f64) -> f64 {
    DIAGNOSTIC_SLACK * v.abs().max(1.0)
}

/// Checks shared by both solvers: radius update rule, `δ ≤ δ_max`,
/// `‖p‖ = δ`, iterate bookkeeping and cost accounting.
pub fn check_trust_region_discipline(
    trace: &RunTrace,
    gamma: f64,
    delta_max: f64,
) -> Vec<Violation> {
    let mut out = Vec::new();
    let mut push = |k: usize, check: &'static str, detail: String| {
        out.push(Violation { k, check, detail })
    };
    let mut cost = trace.initial.cost;
    for (i, rec) in trace.records.iter().enumerate() {
        let k = rec.k;
        if rec.delta > delta_max {
            push(k, "radius cap", format!("delta {} > delta_max {delta_max}", rec.delta));
        }
        let (next_delta, next_x) = match trace.records.get(i + 1) {
            Some(n) => (n.delta, &n.x),
            None => (trace.last.delta, &trace.last.x),
        };
        let expected = if rec.success {
            (gamma * rec.delta).min(delta_max)
        } else {
            rec.delta / gamma
        };
        if next_delta != expected {
            push(
                k,
                "radius update",
                format!("delta' = {next_delta}, expected {expected}"),
            );
        }
        if !rec.zero_gradient {
            let pn = norm(&rec.p);
            if (pn - rec.delta).abs() > DIAGNOSTIC_SLACK * rec.delta {
                push(k, "step norm", format!("|p| = {pn}, delta = {}", rec.delta));
            }
        }
        let moved: Vec<f64> = if rec.success {
            rec.x.iter().zip(&rec.p).map(|(a, b)| a + b).collect()
        } else {
            rec.x.clone()
        };
        if &moved != next_x {
            push(k, "iterate update", "next iterate does not match the step outcome".into());
        }
        cost = cost.saturating_add(rec.samples_charged);
        if rec.cost_after != cost {
            push(
                k,
                "cost accounting",
                format!("cost_after {} != running sum {cost}", rec.cost_after),
            );
        }
    }
    if trace.last.cost != cost {
        push(
            trace.records.len(),
            "cost accounting",
            format!("final cost {} != sum of charges {cost}", trace.last.cost),
        );
    }
    out
}

pub(crate) fn snapshot(
    state: &TrustRegionState,
    oracle: &dyn crate::oracle::StochasticOracle,
    with_theta: bool,
) -> StateSnapshot {
    StateSnapshot {
        x: state.x.clone(),
        y: state.y.y(),
        h: state.y.h(),
        delta: state.delta,
        theta: with_theta.then_some(state.theta),
        k: state.k,
        cost: state.cost,
        exact_f: oracle.exact_value(&state.x),
        exact_gradnorm: norm(&oracle.exact_gradient(&state.x)),
    }
}

/// Maps a failed step onto the reason that ends the run.
pub(crate) fn termination_for(err: &crate::error::SolverError) -> TerminationReason {
    use crate::error::{OracleError, SolverError};
    match err {
        SolverError::Oracle(OracleError::SampleCap { .. }) => TerminationReason::SampleCap,
        SolverError::Oracle(OracleError::NonFinite) => TerminationReason::NumericalFailure,
        SolverError::Oracle(other) => TerminationReason::InvariantViolation(other.to_string()),
        SolverError::InvariantViolation(msg) => TerminationReason::InvariantViolation(msg.clone()),
    }
}
