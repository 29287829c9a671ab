//! Inexact-restoration trust-region method with random first-order models.
//!
//! Each iteration picks three accuracy levels, builds the linear model
//! `m_k(p) = f̄† + gᵀp` from a function and a gradient estimate, takes the
//! normalized steepest-descent step `p = −δ g/‖g‖`, and judges it with a
//! merit function that mixes the function estimate with the infeasibility
//! `h(y)` through a nonincreasing penalty `θ`.

use crate::error::{ConfigError, SolverError};
use crate::oracle::{AccuracyLevel, AccuracyMode, RandomStream, StochasticOracle};
use crate::trace::{
    check_trust_region_discipline, distance, norm, slack, snapshot, termination_for,
    IterationRecord, RunTrace, SolverKind, TerminationReason, TrustRegionState, Variant,
    Violation,
};
use rand::SeedableRng;

/// Below this norm the model gradient is treated as zero.
pub const ZERO_GRADIENT: f64 = 1e-30;

#[derive(Debug, Clone, PartialEq)]
pub struct IrermConfig {
    pub eta1: f64,
    pub eta2: f64,
    pub theta0: f64,
    pub theta_min: f64,
    pub r: f64,
    pub mu: f64,
    pub gamma: f64,
    pub delta_max: f64,
    pub delta0: f64,
    pub y0: f64,
    pub variant: Variant,
    pub kmax: usize,
    pub budget: u64,
}

impl IrermConfig {
    /// Benchmark defaults for a problem of dimension `n`.
    pub fn new(variant: Variant, n: usize) -> Self {
        Self {
            eta1: 0.1,
            eta2: 1e-3,
            theta0: 0.9,
            theta_min: 1e-8,
            r: 0.5,
            mu: 0.99,
            gamma: 2.0,
            delta_max: 10.0,
            delta0: 1.0,
            y0: 1.0,
            variant,
            kmax: 500,
            budget: (variant.default_budget_multiplier() * (n as f64 + 1.0)) as u64,
        }
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let checks: [(&'static str, f64, bool, &'static str); 9] = [
            ("eta1", self.eta1, self.eta1 > 0.0 && self.eta1 < 1.0, "0 < eta1 < 1"),
            ("eta2", self.eta2, self.eta2 > 0.0, "eta2 > 0"),
            ("theta0", self.theta0, self.theta0 > 0.0 && self.theta0 < 1.0, "0 < theta0 < 1"),
            (
                "theta_min",
                self.theta_min,
                self.theta_min > 0.0 && self.theta_min < self.theta0,
                "0 < theta_min < theta0",
            ),
            ("r", self.r, self.r > 0.0 && self.r < 1.0, "0 < r < 1"),
            ("mu", self.mu, self.mu > 0.0, "mu > 0"),
            ("gamma", self.gamma, self.gamma > 1.0, "gamma > 1"),
            ("delta_max", self.delta_max, self.delta_max > 0.0, "delta_max > 0"),
            (
                "delta0",
                self.delta0,
                self.delta0 > 0.0 && self.delta0 <= self.delta_max,
                "0 < delta0 <= delta_max",
            ),
        ];
        for (name, value, ok, constraint) in checks {
            if !ok || !value.is_finite() {
                return Err(ConfigError::OutOfRange {
                    name,
                    value,
                    constraint,
                });
            }
        }
        if !(self.y0 >= 0.0 && self.y0.is_finite()) {
            return Err(ConfigError::OutOfRange {
                name: "y0",
                value: self.y0,
                constraint: "y0 in the accuracy domain",
            });
        }
        Ok(())
    }

    /// `(key, value)` pairs in a stable order, suitable for metadata files.
    pub fn entries(&self) -> Vec<(&'static str, String)> {
        vec![
            ("eta1", self.eta1.to_string()),
            ("eta2", self.eta2.to_string()),
            ("theta0", self.theta0.to_string()),
            ("theta_min", self.theta_min.to_string()),
            ("r", self.r.to_string()),
            ("mu", self.mu.to_string()),
            ("gamma", self.gamma.to_string()),
            ("delta_max", self.delta_max.to_string()),
            ("delta0", self.delta0.to_string()),
            ("y0", self.y0.to_string()),
            ("variant", self.variant.to_string()),
            ("kmax", self.kmax.to_string()),
            ("budget", self.budget.to_string()),
        ]
    }

    /// Sets one parameter from its textual form.
    pub fn set(&mut self, key: &str, value: &str) -> Result<(), ConfigError> {
        let bad = || ConfigError::BadValue {
            key: key.to_string(),
            value: value.to_string(),
        };
        let float = || value.trim().parse::<f64>().map_err(|_| bad());
        match key {
            "eta1" => self.eta1 = float()?,
            "eta2" => self.eta2 = float()?,
            "theta0" => self.theta0 = float()?,
            "theta_min" => self.theta_min = float()?,
            "r" => self.r = float()?,
            "mu" => self.mu = float()?,
            "gamma" => self.gamma = float()?,
            "delta_max" => self.delta_max = float()?,
            "delta0" => self.delta0 = float()?,
            "y0" => self.y0 = float()?,
            "variant" => self.variant = value.trim().parse()?,
            "kmax" => self.kmax = value.trim().parse().map_err(|_| bad())?,
            "budget" => self.budget = parse_count(value).ok_or_else(bad)?,
            _ => return Err(ConfigError::UnknownKey(key.to_string())),
        }
        Ok(())
    }
}

/// Parses a nonnegative integer count, also accepting forms like `1e6`.
pub(crate) fn parse_count(value: &str) -> Option<u64> {
    let v = value.trim();
    v.parse::<u64>().ok().or_else(|| {
        let f = v.parse::<f64>().ok()?;
        (f >= 0.0 && f.fract() == 0.0 && f < u64::MAX as f64).then_some(f as u64)
    })
}

/// The three accuracy levels chosen at the start of an iteration.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AccuracyChoice {
    /// `ỹ`, never evaluated; it only enters `Pred` through `h(ỹ)`.
    pub y_tilde: AccuracyLevel,
    /// `y^t`, shared by the three function estimates.
    pub y_t: AccuracyLevel,
    /// `y^g`, for the gradient estimate.
    pub y_g: AccuracyLevel,
}

/// Heuristic sample size `max{10 + k, ⌈1/δ²⌉}`.
pub fn heuristic_sample_size(k: usize, delta: f64) -> u64 {
    let by_radius = (1.0 / (delta * delta)).ceil();
    let by_radius = if by_radius >= u64::MAX as f64 {
        u64::MAX
    } else {
        by_radius as u64
    };
    (10 + k as u64).max(by_radius)
}

pub fn choose_accuracy_variables(
    state: &TrustRegionState,
    config: &IrermConfig,
    mode: AccuracyMode,
) -> AccuracyChoice {
    let h_k = state.y.h();
    let delta = state.delta;
    let y_tilde = AccuracyLevel::for_h_bound(config.r * h_k, mode);
    match config.variant {
        Variant::V1 => AccuracyChoice {
            y_tilde,
            y_t: AccuracyLevel::for_h_bound(config.mu * (delta * delta).min(h_k), mode),
            y_g: AccuracyLevel::for_h_bound(config.mu * delta, mode),
        },
        Variant::V2 => {
            let level = AccuracyLevel::for_samples(heuristic_sample_size(state.k, delta), mode);
            AccuracyChoice {
                y_tilde,
                y_t: level,
                y_g: level,
            }
        }
    }
}

/// `m_k(p) = f̄† + gᵀp` evaluated along `p = −δ g/‖g‖`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LinearModel {
    pub fbar_dagger: f64,
    pub gnorm: f64,
    pub delta: f64,
}

impl LinearModel {
    /// Model decrease `m(0) − m(p) = δ‖g‖`.
    pub fn decrease(&self) -> f64 {
        self.delta * self.gnorm
    }

    /// `m_k(p_k) = f̄† − δ‖g‖`.
    pub fn value_at_step(&self) -> f64 {
        self.fbar_dagger - self.decrease()
    }

    /// `f − m_k(p_k)`, arranged to avoid cancellation against `f̄†`.
    pub fn gap_to(&self, f: f64) -> f64 {
        (f - self.fbar_dagger) + self.decrease()
    }
}

/// Step 2: the model value, gradient estimate and step.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelStep {
    pub fbar_dagger: f64,
    pub g: Vec<f64>,
    pub gnorm: f64,
    /// Empty when the gradient is zero.
    pub p: Vec<f64>,
    pub samples: u64,
}

impl ModelStep {
    pub fn model(&self, delta: f64) -> LinearModel {
        LinearModel {
            fbar_dagger: self.fbar_dagger,
            gnorm: self.gnorm,
            delta,
        }
    }

    pub fn is_zero_gradient(&self) -> bool {
        self.p.is_empty()
    }
}

pub fn build_model_and_step(
    state: &TrustRegionState,
    choice: &AccuracyChoice,
    oracle: &dyn StochasticOracle,
    stream: &mut RandomStream,
) -> Result<ModelStep, SolverError> {
    let f = oracle.estimate_value(&state.x, choice.y_t, stream)?;
    let g = oracle.estimate_gradient(&state.x, choice.y_g, stream)?;
    let gnorm = norm(&g.value);
    let p = if gnorm < ZERO_GRADIENT {
        Vec::new()
    } else {
        g.value.iter().map(|gi| -state.delta * gi / gnorm).collect()
    };
    Ok(ModelStep {
        fbar_dagger: f.value,
        gnorm,
        g: g.value,
        p,
        samples: f.samples_used.saturating_add(g.samples_used),
    })
}

/// `Pred(θ) = θ(f̄* − m_k(p_k)) + (1 − θ)(h(y_k) − h(ỹ))`.
pub fn compute_pred(theta: f64, fbar_star: f64, model: &LinearModel, h_k: f64, h_tilde: f64) -> f64 {
    theta * model.gap_to(fbar_star) + (1.0 - theta) * (h_k - h_tilde)
}

/// Largest `θ ≤ θ_k` with `Pred(θ) ≥ θ δ‖g‖`.
pub fn update_penalty(
    theta_k: f64,
    fbar_dagger: f64,
    fbar_star: f64,
    h_k: f64,
    h_tilde: f64,
    delta: f64,
    gnorm: f64,
) -> Result<f64, SolverError> {
    let model = LinearModel {
        fbar_dagger,
        gnorm,
        delta,
    };
    let pred = compute_pred(theta_k, fbar_star, &model, h_k, h_tilde);
    if pred >= theta_k * model.decrease() {
        return Ok(theta_k);
    }
    let dh = h_k - h_tilde;
    let denom = fbar_dagger - fbar_star + dh;
    if !(denom > 0.0) || !(dh >= 0.0) {
        return Err(SolverError::InvariantViolation(format!(
            "penalty update denominator {denom} with h decrease {dh}"
        )));
    }
    // Rounding can push the quotient a hair above θ_k.
    Ok((dh / denom).min(theta_k))
}

/// `Ared(θ) = θ(f̄* − f̄^p) + (1 − θ)(h(y_k) − h(y^t))`.
pub fn compute_ared(theta: f64, fbar_star: f64, fbar_p: f64, h_k: f64, h_yt: f64) -> f64 {
    theta * (fbar_star - fbar_p) + (1.0 - theta) * (h_k - h_yt)
}

pub fn acceptance_test(
    ared: f64,
    pred_at_theta_t: f64,
    gnorm: f64,
    delta: f64,
    theta_t: f64,
    config: &IrermConfig,
) -> bool {
    ared >= config.eta1 * pred_at_theta_t
        && gnorm >= config.eta2 * delta
        && theta_t >= config.theta_min
}

pub fn initial_state(
    config: &IrermConfig,
    oracle: &dyn StochasticOracle,
) -> Result<TrustRegionState, SolverError> {
    Ok(TrustRegionState {
        x: oracle.initial_point(),
        y: AccuracyLevel::new(oracle.mode(), config.y0)?,
        delta: config.delta0,
        theta: config.theta0,
        k: 0,
        cost: 0,
    })
}

/// One full iteration.
pub fn step(
    state: &TrustRegionState,
    config: &IrermConfig,
    oracle: &dyn StochasticOracle,
    stream: &mut RandomStream,
) -> Result<(TrustRegionState, IterationRecord), SolverError> {
    let choice = choose_accuracy_variables(state, config, oracle.mode());
    let h_k = state.y.h();
    let h_tilde = choice.y_tilde.h();
    let h_t = choice.y_t.h();

    let ms = build_model_and_step(state, &choice, oracle, stream)?;
    let exact_g = oracle.exact_gradient(&state.x);
    let mut rec = IterationRecord {
        k: state.k,
        x: state.x.clone(),
        delta: state.delta,
        theta: Some(state.theta),
        h_k: Some(h_k),
        y_tilde: Some(choice.y_tilde),
        y_t: choice.y_t,
        y_g: choice.y_g,
        fbar_dagger: ms.fbar_dagger,
        fbar_star: None,
        fbar_p: None,
        gnorm: ms.gnorm,
        pred_at_theta_k: None,
        pred: None,
        ared: None,
        theta_t: None,
        success: false,
        zero_gradient: ms.is_zero_gradient(),
        samples_charged: ms.samples,
        cost_after: 0,
        exact_f: oracle.exact_value(&state.x),
        exact_gradnorm: norm(&exact_g),
        exact_f_trial: None,
        exact_gradient_error: distance(&exact_g, &ms.g),
        g: ms.g.clone(),
        p: ms.p.clone(),
    };

    let mut next = state.clone();
    next.k += 1;
    if ms.is_zero_gradient() {
        rec.p = vec![0.0; state.x.len()];
        next.delta = state.delta / config.gamma;
        next.cost = next.cost.saturating_add(rec.samples_charged);
        rec.cost_after = next.cost;
        return Ok((next, rec));
    }

    let model = ms.model(state.delta);
    let fstar = oracle.estimate_value(&state.x, choice.y_t, stream)?;
    let pred_k = compute_pred(state.theta, fstar.value, &model, h_k, h_tilde);
    let theta_t = update_penalty(
        state.theta,
        ms.fbar_dagger,
        fstar.value,
        h_k,
        h_tilde,
        state.delta,
        ms.gnorm,
    )?;

    let trial: Vec<f64> = state.x.iter().zip(&ms.p).map(|(a, b)| a + b).collect();
    let fp = oracle.estimate_value(&trial, choice.y_t, stream)?;
    let pred_t = compute_pred(theta_t, fstar.value, &model, h_k, h_tilde);
    let ared = compute_ared(theta_t, fstar.value, fp.value, h_k, h_t);
    let success = acceptance_test(ared, pred_t, ms.gnorm, state.delta, theta_t, config);

    rec.fbar_star = Some(fstar.value);
    rec.fbar_p = Some(fp.value);
    rec.pred_at_theta_k = Some(pred_k);
    rec.pred = Some(pred_t);
    rec.ared = Some(ared);
    rec.theta_t = Some(theta_t);
    rec.success = success;
    rec.samples_charged = rec.samples_charged.saturating_add(fstar.samples_used).saturating_add(fp.samples_used);
    rec.exact_f_trial = Some(oracle.exact_value(&trial));

    if success {
        next.x = trial;
        next.y = choice.y_t;
        next.delta = (config.gamma * state.delta).min(config.delta_max);
        next.theta = theta_t;
    } else {
        next.delta = state.delta / config.gamma;
    }
    next.cost = next.cost.saturating_add(rec.samples_charged);
    rec.cost_after = next.cost;
    Ok((next, rec))
}

/// Iterates until the budget is spent (checked at the start of each
/// iteration, so the last one may overshoot), `kmax` is reached or a step fails.
pub fn run(
    oracle: &dyn StochasticOracle,
    config: &IrermConfig,
    problem: &str,
    seed: u64,
) -> Result<RunTrace, SolverError> {
    let mut stream = RandomStream::seed_from_u64(seed);
    let mut state = initial_state(config, oracle)?;
    let initial = snapshot(&state, oracle, true);
    let mut records = Vec::new();
    let termination = loop {
        if state.cost >= config.budget {
            break TerminationReason::Budget;
        }
        if state.k >= config.kmax {
            break TerminationReason::MaxIterations;
        }
        match step(&state, config, oracle, &mut stream) {
            Ok((next, rec)) => {
                records.push(rec);
                state = next;
            }
            Err(e) => break termination_for(&e),
        }
    };
    Ok(RunTrace {
        solver: SolverKind::Irerm,
        variant: config.variant,
        problem: problem.to_string(),
        seed,
        budget: config.budget,
        records,
        initial,
        last: snapshot(&state, oracle, true),
        termination,
    })
}

/// Checks every deterministic property a recorded IRERM trace must satisfy:
/// penalty monotonicity and floor, the `Pred` lower bound, the `Ared` lower
/// bound on successes, radius and step discipline, cost accounting, and for
/// `v1` the accuracy conditions of Step 1.
pub fn check_irerm_invariants(trace: &RunTrace, config: &IrermConfig) -> Vec<Violation> {
    let mut out = check_trust_region_discipline(trace, config.gamma, config.delta_max);
    let mut push = |k: usize, check: &'static str, detail: String| {
        out.push(Violation { k, check, detail })
    };
    if let TerminationReason::InvariantViolation(msg) = &trace.termination {
        push(trace.records.len(), "run aborted", msg.clone());
    }
    let mut prev_theta = config.theta0;
    for (i, rec) in trace.records.iter().enumerate() {
        let k = rec.k;
        let (Some(theta), Some(h_k)) = (rec.theta, rec.h_k) else {
            push(k, "record shape", "missing penalty or infeasibility".into());
            continue;
        };
        if theta > prev_theta {
            push(k, "theta monotone", format!("theta {theta} > previous {prev_theta}"));
        }
        if theta < config.theta_min {
            push(k, "theta floor", format!("theta {theta} < {}", config.theta_min));
        }
        prev_theta = theta;
        let next_theta = trace
            .records
            .get(i + 1)
            .and_then(|n| n.theta)
            .or(trace.last.theta)
            .unwrap_or(theta);
        if let Some(theta_t) = rec.theta_t {
            if theta_t > theta {
                push(k, "theta_t <= theta_k", format!("{theta_t} > {theta}"));
            }
            let expected = if rec.success { theta_t } else { theta };
            if next_theta != expected {
                push(k, "theta update", format!("theta' = {next_theta}, expected {expected}"));
            }
        }
        if let (Some(pred), Some(theta_t)) = (rec.pred, rec.theta_t) {
            let bound = theta_t * rec.delta * rec.gnorm;
            if pred < bound - slack(pred) {
                push(k, "pred lower bound", format!("pred {pred} < {bound}"));
            }
        }
        if rec.success {
            if let Some(ared) = rec.ared {
                let bound = config.eta1 * config.eta2 * next_theta * rec.delta * rec.delta;
                if ared < bound - slack(ared) {
                    push(k, "ared lower bound", format!("ared {ared} < {bound}"));
                }
            }
        }
        if config.variant == Variant::V1 {
            let ht = rec.y_t.h();
            let hg = rec.y_g.h();
            let bt = config.mu * (rec.delta * rec.delta).min(h_k);
            let bg = config.mu * rec.delta;
            if let Some(htil) = rec.h_tilde() {
                if htil > config.r * h_k {
                    push(k, "accuracy y_tilde", format!("h {htil} > {}", config.r * h_k));
                }
            }
            if ht > bt {
                push(k, "accuracy y_t", format!("h {ht} > {bt}"));
            }
            if hg > bg {
                push(k, "accuracy y_g", format!("h {hg} > {bg}"));
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::oracle::{NoiseSpec, NoisyLeastSquares};
    use crate::problems::{Luksan, SeparableQuadratic};

    const E: AccuracyMode = AccuracyMode::Expectation;

    fn state(delta: f64, y: f64, k: usize) -> TrustRegionState {
        TrustRegionState {
            x: vec![0.0; 3],
            y: AccuracyLevel::expectation(y).unwrap(),
            delta,
            theta: 0.9,
            k,
            cost: 0,
        }
    }

    #[test]
    fn defaults_validate() {
        let c = IrermConfig::new(Variant::V1, 100);
        assert!(c.validate().is_ok());
        assert_eq!(c.budget, 10_100_000);
        assert_eq!(IrermConfig::new(Variant::V2, 100).budget, 1_010_000);
        let mut bad = c.clone();
        bad.theta_min = 0.95;
        assert!(bad.validate().is_err());
        bad = c.clone();
        bad.delta0 = 11.0;
        assert!(bad.validate().is_err());
        bad = c;
        bad.gamma = 1.0;
        assert!(bad.validate().is_err());
    }

    #[test]
    fn set_round_trips_entries() {
        let mut c = IrermConfig::new(Variant::V2, 10);
        c.eta1 = 0.25;
        c.budget = 1234;
        let mut d = IrermConfig::new(Variant::V1, 100);
        for (k, v) in c.entries() {
            d.set(k, &v).unwrap();
        }
        assert_eq!(c, d);
        assert!(matches!(d.set("nope", "1"), Err(ConfigError::UnknownKey(_))));
        d.set("budget", "1e6").unwrap();
        assert_eq!(d.budget, 1_000_000);
    }

    #[test]
    fn v1_sample_sizes() {
        let c = IrermConfig::new(Variant::V1, 3);
        let ch = choose_accuracy_variables(&state(1.0, 1.0, 0), &c, E);
        assert_eq!(ch.y_t.samples(), Ok(2));
        assert_eq!(ch.y_g.samples(), Ok(2));
        assert_eq!(ch.y_tilde.y(), 0.25);

        let ch = choose_accuracy_variables(&state(1.0, 0.0, 0), &c, E);
        assert_eq!(ch.y_tilde.h(), 0.0);
        assert_eq!(ch.y_t.h(), 0.0);
    }

    #[test]
    fn v2_sample_sizes() {
        let c = IrermConfig::new(Variant::V2, 3);
        let ch = choose_accuracy_variables(&state(1.0, 1.0, 0), &c, E);
        assert_eq!(ch.y_t.samples(), Ok(10));
        assert_eq!(ch.y_g, ch.y_t);
        let ch = choose_accuracy_variables(&state(0.1, 1.0, 5), &c, E);
        assert_eq!(ch.y_t.samples(), Ok(100));
    }

    #[test]
    fn pred_examples() {
        let m = LinearModel {
            fbar_dagger: 7.0,
            gnorm: 2.0,
            delta: 0.5,
        };
        assert_eq!(compute_pred(1.0, 7.0, &m, 0.3, 0.1), 1.0);
        let m = LinearModel {
            fbar_dagger: 3.0,
            gnorm: 1.0,
            delta: 1.0,
        };
        assert_eq!(m.value_at_step(), 2.0);
        assert!((compute_pred(0.9, 3.0, &m, 1.0, 0.5) - 0.95).abs() < 1e-15);
        // θ → 0 leaves only the infeasibility decrease.
        assert!((compute_pred(1e-12, 3.0, &m, 1.0, 0.5) - 0.5).abs() < 1e-11);
    }

    #[test]
    fn penalty_examples() {
        // Exact case: h_k = h̃ = 0 and identical estimates keep θ.
        assert_eq!(update_penalty(0.9, 5.0, 5.0, 0.0, 0.0, 1.0, 3.0), Ok(0.9));
        // Pred(0.9) = 1.0 >= 0.9 δ‖g‖ with δ‖g‖ = 1.
        let fstar = 2.0 + (1.0 / 0.9 - 1.0);
        assert_eq!(update_penalty(0.9, 2.0, fstar, 0.0, 0.0, 1.0, 1.0), Ok(0.9));
        let t = update_penalty(0.9, 3.0, 1.0, 1.0, 0.5, 1.0, 1.0).unwrap();
        assert!((t - 0.2).abs() < 1e-15);
    }

    #[test]
    fn penalty_bad_denominator_is_flagged() {
        // Second branch with h̃ > h_k cannot arise from valid levels.
        assert!(matches!(
            update_penalty(0.9, 0.0, 0.0, 0.1, 0.5, 1.0, 1.0),
            Err(SolverError::InvariantViolation(_))
        ));
    }

    #[test]
    fn ared_examples() {
        assert_eq!(compute_ared(1.0, 4.0, 3.0, 0.7, 0.2), 1.0);
        assert_eq!(compute_ared(0.5, 4.0, 3.0, 1.0, 0.25), 0.875);
        assert!((compute_ared(0.5, 1.0, 0.0, 0.1, 0.3) - 0.4).abs() < 1e-15);
    }

    #[test]
    fn acceptance_examples() {
        let c = IrermConfig::new(Variant::V1, 3);
        assert!(acceptance_test(1.0, 1.0, 1.0, 1.0, 0.9, &c));
        assert!(!acceptance_test(1e6, 1.0, 1e-4, 1.0, 0.9, &c));
        assert!(!acceptance_test(1.0, 1.0, 1.0, 1.0, 1e-9, &c));
        assert!(!acceptance_test(0.05, 1.0, 1.0, 1.0, 0.9, &c));
    }

    #[test]
    fn unsuccessful_step_keeps_iterate() {
        // Quadratic at its minimizer: the step increases f, so it is rejected.
        let p = SeparableQuadratic::new(3);
        let oracle = NoisyLeastSquares::new(&p, NoiseSpec::noiseless());
        let c = IrermConfig::new(Variant::V1, 3);
        let mut s = state(1.0, 1.0, 0);
        s.x = vec![1.0 + 1e-3, 1.0, 1.0];
        let mut stream = RandomStream::seed_from_u64(0);
        let (next, rec) = step(&s, &c, &oracle, &mut stream).unwrap();
        assert!(!rec.success);
        assert_eq!(next.x, s.x);
        assert_eq!(next.theta, s.theta);
        assert_eq!(next.y, s.y);
        assert_eq!(next.delta, 0.5);
        assert_eq!(rec.samples_charged, 4 * 2);
    }

    #[test]
    fn successful_step_caps_radius() {
        let p = SeparableQuadratic::new(3);
        let oracle = NoisyLeastSquares::new(&p, NoiseSpec::noiseless());
        let c = IrermConfig::new(Variant::V1, 3);
        let mut s = state(8.0, 1.0, 0);
        s.x = vec![-100.0; 3];
        let mut stream = RandomStream::seed_from_u64(0);
        let (next, rec) = step(&s, &c, &oracle, &mut stream).unwrap();
        assert!(rec.success);
        assert_eq!(next.delta, 10.0);
        assert_eq!(next.y, rec.y_t);
    }

    #[test]
    fn zero_gradient_shrinks_radius() {
        let p = SeparableQuadratic::new(3);
        let oracle = NoisyLeastSquares::new(&p, NoiseSpec::noiseless());
        let c = IrermConfig::new(Variant::V2, 3);
        let mut s = state(1.0, 1.0, 0);
        s.x = vec![1.0; 3];
        let mut stream = RandomStream::seed_from_u64(0);
        let (next, rec) = step(&s, &c, &oracle, &mut stream).unwrap();
        assert!(rec.zero_gradient && !rec.success);
        assert_eq!(rec.samples_charged, 20);
        assert_eq!(next.delta, 0.5);
    }

    #[test]
    fn zero_budget_runs_no_iterations() {
        let p = SeparableQuadratic::new(3);
        let oracle = NoisyLeastSquares::new(&p, NoiseSpec::new(0.1, 0).unwrap());
        let mut c = IrermConfig::new(Variant::V2, 3);
        c.budget = 0;
        let t = run(&oracle, &c, "quad", 1).unwrap();
        assert!(t.records.is_empty());
        assert_eq!(t.termination, TerminationReason::Budget);
        assert_eq!(t.initial, t.last);
    }

    #[test]
    fn noisy_run_satisfies_invariants() {
        let p = Luksan::from_id("p5", 20).unwrap();
        let oracle = NoisyLeastSquares::new(&p, NoiseSpec::new(0.1, 0).unwrap());
        for variant in [Variant::V1, Variant::V2] {
            let mut c = IrermConfig::new(variant, 20);
            c.budget /= 10;
            let t = run(&oracle, &c, "p5", 3).unwrap();
            assert!(!t.records.is_empty());
            let v = check_irerm_invariants(&t, &c);
            assert!(v.is_empty(), "{variant}: {:?}", &v[..v.len().min(5)]);
            assert!(t.last.exact_f < t.initial.exact_f);
        }
    }

    #[test]
    fn sample_cap_ends_run() {
        let p = SeparableQuadratic::new(3);
        let oracle =
            NoisyLeastSquares::new(&p, NoiseSpec::new(0.1, 0).unwrap()).with_sample_cap(50);
        let mut c = IrermConfig::new(Variant::V1, 3);
        c.budget = u64::MAX;
        c.kmax = 10_000;
        let t = run(&oracle, &c, "quad", 0).unwrap();
        assert_eq!(t.termination, TerminationReason::SampleCap);
    }
}
