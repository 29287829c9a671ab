//! First-order STORM baseline.
//!
//! Same model and step as IRERM, but the acceptance ratio compares the plain
//! function decrease `f̄(x_k) − f̄(x_k + p_k)` with the model decrease `δ‖g‖`.

use rand::SeedableRng;

use crate::error::{ConfigError, SolverError};
use crate::irerm::{heuristic_sample_size, parse_count, ZERO_GRADIENT};
use crate::oracle::{AccuracyLevel, AccuracyMode, RandomStream, StochasticOracle};
use crate::trace::{
    check_trust_region_discipline, distance, norm, snapshot, termination_for, IterationRecord,
    RunTrace, SolverKind, TerminationReason, TrustRegionState, Variant, Violation,
};

#[derive(Debug, Clone, PartialEq)]
pub struct StormConfig {
    pub eta1: f64,
    pub eta2: f64,
    pub gamma: f64,
    pub delta_max: f64,
    pub delta0: f64,
    pub variant: Variant,
    pub kmax: usize,
    pub budget: u64,
}

impl StormConfig {
    pub fn new(variant: Variant, n: usize) -> Self {
        Self {
            eta1: 0.1,
            eta2: 1e-3,
            gamma: 2.0,
            delta_max: 10.0,
            delta0: 1.0,
            variant,
            kmax: 500,
            budget: (variant.default_budget_multiplier() * (n as f64 + 1.0)) as u64,
        }
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let checks: [(&'static str, f64, bool, &'static str); 5] = [
            ("eta1", self.eta1, self.eta1 > 0.0 && self.eta1 < 1.0, "0 < eta1 < 1"),
            ("eta2", self.eta2, self.eta2 > 0.0, "eta2 > 0"),
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
        Ok(())
    }

    pub fn entries(&self) -> Vec<(&'static str, String)> {
        vec![
            ("eta1", self.eta1.to_string()),
            ("eta2", self.eta2.to_string()),
            ("gamma", self.gamma.to_string()),
            ("delta_max", self.delta_max.to_string()),
            ("delta0", self.delta0.to_string()),
            ("variant", self.variant.to_string()),
            ("kmax", self.kmax.to_string()),
            ("budget", self.budget.to_string()),
        ]
    }

    pub fn set(&mut self, key: &str, value: &str) -> Result<(), ConfigError> {
        let bad = || ConfigError::BadValue {
            key: key.to_string(),
            value: value.to_string(),
        };
        let float = || value.trim().parse::<f64>().map_err(|_| bad());
        match key {
            "eta1" => self.eta1 = float()?,
            "eta2" => self.eta2 = float()?,
            "gamma" => self.gamma = float()?,
            "delta_max" => self.delta_max = float()?,
            "delta0" => self.delta0 = float()?,
            "variant" => self.variant = value.trim().parse()?,
            "kmax" => self.kmax = value.trim().parse().map_err(|_| bad())?,
            "budget" => self.budget = parse_count(value).ok_or_else(bad)?,
            _ => return Err(ConfigError::UnknownKey(key.to_string())),
        }
        Ok(())
    }
}

fn ceil_count(v: f64) -> u64 {
    let c = v.ceil();
    if c >= u64::MAX as f64 {
        u64::MAX
    } else {
        c as u64
    }
}

/// Function and gradient sample sizes for iteration `k` at radius `delta`.
pub fn storm_sample_sizes(variant: Variant, k: usize, delta: f64) -> (u64, u64) {
    match variant {
        Variant::V1 => (
            ceil_count(1.0 / delta.powi(4)),
            ceil_count(1.0 / (delta * delta)),
        ),
        Variant::V2 => {
            let s = heuristic_sample_size(k, delta);
            (s, s)
        }
    }
}

pub fn storm_step(
    state: &TrustRegionState,
    config: &StormConfig,
    oracle: &dyn StochasticOracle,
    stream: &mut RandomStream,
) -> Result<(TrustRegionState, IterationRecord), SolverError> {
    let mode: AccuracyMode = oracle.mode();
    let (sf, sg) = storm_sample_sizes(config.variant, state.k, state.delta);
    let y_f = AccuracyLevel::for_samples(sf, mode);
    let y_g = AccuracyLevel::for_samples(sg, mode);

    let f0 = oracle.estimate_value(&state.x, y_f, stream)?;
    let g = oracle.estimate_gradient(&state.x, y_g, stream)?;
    let gnorm = norm(&g.value);
    let exact_g = oracle.exact_gradient(&state.x);
    let mut rec = IterationRecord {
        k: state.k,
        x: state.x.clone(),
        delta: state.delta,
        theta: None,
        h_k: None,
        y_tilde: None,
        y_t: y_f,
        y_g,
        fbar_dagger: f0.value,
        fbar_star: None,
        fbar_p: None,
        gnorm,
        p: vec![0.0; state.x.len()],
        pred_at_theta_k: None,
        pred: None,
        ared: None,
        theta_t: None,
        success: false,
        zero_gradient: gnorm < ZERO_GRADIENT,
        samples_charged: f0.samples_used.saturating_add(g.samples_used),
        cost_after: 0,
        exact_f: oracle.exact_value(&state.x),
        exact_gradnorm: norm(&exact_g),
        exact_f_trial: None,
        exact_gradient_error: distance(&exact_g, &g.value),
        g: g.value,
    };

    let mut next = state.clone();
    next.k += 1;
    if rec.zero_gradient {
        next.delta = state.delta / config.gamma;
        next.cost = next.cost.saturating_add(rec.samples_charged);
        rec.cost_after = next.cost;
        return Ok((next, rec));
    }

    rec.p = rec.g.iter().map(|gi| -state.delta * gi / gnorm).collect();
    let trial: Vec<f64> = state.x.iter().zip(&rec.p).map(|(a, b)| a + b).collect();
    let f1 = oracle.estimate_value(&trial, y_f, stream)?;
    let decrease = f0.value - f1.value;
    let model_decrease = state.delta * gnorm;
    // ρ ≥ η₁ written without the division.
    let success = decrease >= config.eta1 * model_decrease && gnorm >= config.eta2 * state.delta;

    rec.fbar_p = Some(f1.value);
    rec.pred = Some(model_decrease);
    rec.ared = Some(decrease);
    rec.success = success;
    rec.samples_charged = rec.samples_charged.saturating_add(f1.samples_used);
    rec.exact_f_trial = Some(oracle.exact_value(&trial));

    if success {
        next.x = trial;
        next.delta = (config.gamma * state.delta).min(config.delta_max);
    } else {
        next.delta = state.delta / config.gamma;
    }
    next.cost = next.cost.saturating_add(rec.samples_charged);
    rec.cost_after = next.cost;
    Ok((next, rec))
}

pub fn storm_run(
    oracle: &dyn StochasticOracle,
    config: &StormConfig,
    problem: &str,
    seed: u64,
) -> Result<RunTrace, SolverError> {
    let mut stream = RandomStream::seed_from_u64(seed);
    let mode = oracle.mode();
    let mut state = TrustRegionState {
        x: oracle.initial_point(),
        y: AccuracyLevel::exact(mode),
        delta: config.delta0,
        theta: 1.0,
        k: 0,
        cost: 0,
    };
    let initial = snapshot(&state, oracle, false);
    let mut records = Vec::new();
    let termination = loop {
        if state.cost >= config.budget {
            break TerminationReason::Budget;
        }
        if state.k >= config.kmax {
            break TerminationReason::MaxIterations;
        }
        match storm_step(&state, config, oracle, &mut stream) {
            Ok((next, rec)) => {
                records.push(rec);
                state = next;
            }
            Err(e) => break termination_for(&e),
        }
    };
    Ok(RunTrace {
        solver: SolverKind::Storm,
        variant: config.variant,
        problem: problem.to_string(),
        seed,
        budget: config.budget,
        records,
        initial,
        last: snapshot(&state, oracle, false),
        termination,
    })
}

/// Radius, step and cost discipline plus the acceptance identity
/// `success ⇒ f̄(x_k) − f̄(x_k + p_k) ≥ η₁ δ‖g‖`.
pub fn check_storm_invariants(trace: &RunTrace, config: &StormConfig) -> Vec<Violation> {
    let mut out = check_trust_region_discipline(trace, config.gamma, config.delta_max);
    if let TerminationReason::InvariantViolation(msg) = &trace.termination {
        out.push(Violation {
            k: trace.records.len(),
            check: "run aborted",
            detail: msg.clone(),
        });
    }
    for rec in trace.records.iter().filter(|r| r.success) {
        if let (Some(ared), Some(pred)) = (rec.ared, rec.pred) {
            if ared < config.eta1 * pred {
                out.push(Violation {
                    k: rec.k,
                    check: "storm acceptance",
                    detail: format!("decrease {ared} < eta1 * {pred}"),
                });
            }
        }
    }
    out
}
