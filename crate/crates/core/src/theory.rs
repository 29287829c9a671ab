//! Post-hoc diagnostics on recorded IRERM traces: true-iteration labels,
//! the Lyapunov function and its decrease, hitting times, and the
//! small-radius success property.
//!
//! Everything here reads the `exact_*` fields of a trace and never feeds
//! back into a solver.

use rand::Rng;
use rand::SeedableRng;

use crate::error::TheoryError;
use crate::irerm::IrermConfig;
use crate::oracle::{RandomStream, StochasticOracle};
use crate::trace::{distance, norm, slack, IterationRecord, RunTrace, Violation};

/// User-declared inputs; everything else in [`TheoryParams`] is derived.
#[derive(Debug, Clone, PartialEq)]
pub struct TheoryInputs {
    pub kappa: f64,
    /// Declared probability of a true iteration, in `(1/2, 1)`.
    pub pi: f64,
    /// `∇f` is assumed Lipschitz with constant `2L`.
    pub lipschitz: f64,
    /// Hitting-time threshold on `‖∇f‖`.
    pub epsilon: f64,
    pub f_low: f64,
    pub h_up: f64,
    /// Upper bound of the accuracy-to-probability map. Defaults to `μ/κ`,
    /// the smallest value compatible with `μ ≤ κ μ̄_up`.
    pub mu_bar_up: Option<f64>,
    /// Defaults to twice its lower bound.
    pub zeta: Option<f64>,
    /// Defaults to `h_up − f_low`.
    pub sigma_shift: Option<f64>,
}

impl TheoryInputs {
    pub fn new(kappa: f64, lipschitz: f64, epsilon: f64, h_up: f64) -> Self {
        Self {
            kappa,
            pi: 0.9,
            lipschitz,
            epsilon,
            f_low: 0.0,
            h_up,
            mu_bar_up: None,
            zeta: None,
            sigma_shift: None,
        }
    }
}

/// Analysis constants derived from the solver configuration and [`TheoryInputs`].
#[derive(Debug, Clone, PartialEq)]
pub struct TheoryParams {
    pub solver: IrermConfig,
    pub kappa: f64,
    pub zeta: f64,
    pub zeta_lower_bound: f64,
    pub mu_bar_up: f64,
    pub v: f64,
    /// The shift `Σ` inside the Lyapunov function.
    pub sigma_shift: f64,
    pub pi: f64,
    pub lipschitz: f64,
    pub epsilon: f64,
    pub f_low: f64,
    pub h_up: f64,
    pub c1: f64,
    pub c2: f64,
    pub c3: f64,
    pub c4: f64,
    pub lambda: f64,
    pub delta_dagger: f64,
    /// Scale factor `ξ` with `δ_ε = ε/ξ`; after snapping `δ_ε` onto the
    /// radius lattice this is `ε/δ_ε`.
    pub xi: f64,
    pub xi_lower_bound: f64,
    pub delta_epsilon: f64,
    /// `j_ε ≤ 0` with `δ_ε = γ^{j_ε} δ₀`.
    pub j_epsilon: i32,
    /// True when `ε/ξ` was not already a lattice point.
    pub delta_epsilon_snapped: bool,
    /// Expected decrease constant: `E[ψ_{k+1} − ψ_k] ≤ −σ δ_k²`.
    pub sigma_decrease: f64,
    /// Both conditions on `π` hold.
    pub pi_admissible: bool,
}

impl TheoryParams {
    pub fn derive(config: &IrermConfig, inputs: &TheoryInputs) -> Result<Self, TheoryError> {
        let bad = |msg: String| Err(TheoryError::InvalidParams(msg));
        let c = config;
        let kappa = inputs.kappa;
        let l = inputs.lipschitz;
        let kappa_cap = ((1.0 - c.r - c.theta_min) / (2.0 * c.theta_min)).min(c.eta1 * c.eta2 / 2.0);
        if !(kappa > 0.0 && kappa < kappa_cap) {
            return bad(format!("kappa = {kappa} must lie in (0, {kappa_cap})"));
        }
        if !(inputs.pi > 0.5 && inputs.pi < 1.0) {
            return bad(format!("pi = {} must lie in (1/2, 1)", inputs.pi));
        }
        if !(l > 0.0 && l.is_finite()) {
            return bad(format!("L = {l} must be positive"));
        }
        if !(inputs.epsilon > 0.0 && inputs.epsilon.is_finite()) {
            return bad(format!("epsilon = {} must be positive", inputs.epsilon));
        }
        let mu_bar_up = inputs.mu_bar_up.unwrap_or(c.mu / kappa);
        if mu_bar_up <= 0.0 || c.mu > kappa * mu_bar_up * (1.0 + 1e-12) {
            return bad(format!("mu = {} exceeds kappa * mu_bar_up = {}", c.mu, kappa * mu_bar_up));
        }

        let zeta_lower_bound = kappa
            + c.eta2
                .max((c.theta0 * (3.0 * kappa + l) + kappa * mu_bar_up) / (c.theta_min * (1.0 - c.eta1)))
                .max(kappa * (2.0 + c.eta1) / c.eta1);
        let zeta = inputs.zeta.unwrap_or(2.0 * zeta_lower_bound);
        if zeta <= zeta_lower_bound {
            return bad(format!("zeta = {zeta} must exceed {zeta_lower_bound}"));
        }

        let c1 = c.theta_min * (c.eta1 * (1.0 - kappa / zeta) - 2.0 * kappa / zeta);
        let c2 = 1.0 + (l + kappa * mu_bar_up) / zeta;
        let c3 = c.theta_min * (c.eta1 * c.eta2 - 2.0 * kappa);
        let c4 = l + zeta + kappa * mu_bar_up;
        if !(c1 > 0.0 && c3 > 0.0) {
            return bad(format!("C1 = {c1} and C3 = {c3} must be positive"));
        }
        let g2 = c.gamma * c.gamma;
        let ratio = (4.0 * g2 / (zeta * c1)).max(2.0 * g2 / c3);
        let v = ratio / (1.0 + ratio);

        let pi = inputs.pi;
        let pi_admissible = (pi - 0.5) / (1.0 - pi) >= c2 / c1
            && 1.0 - pi <= (g2 - 1.0) / (2.0 * (g2 * g2 - 1.0) + 2.0 * g2 * c4 * ratio);

        let eps = inputs.epsilon;
        let delta_dagger = (eps / (2.0 * kappa))
            .min(eps / (2.0 * c.eta2))
            .min(c.theta_min * eps * (1.0 - c.eta1) / (2.0 * c.theta0 * (3.0 * kappa + l)));
        let xi_lower_bound = (2.0 * kappa)
            .max(2.0 * c.eta2)
            .max(2.0 * c.theta0 * (3.0 * kappa + l) / (c.theta_min * (1.0 - c.eta1)));
        let (j_epsilon, delta_epsilon) = snap_to_lattice(eps / xi_lower_bound, c.delta0, c.gamma);
        let delta_epsilon_snapped = delta_epsilon != eps / xi_lower_bound;

        Ok(Self {
            solver: config.clone(),
            kappa,
            zeta,
            zeta_lower_bound,
            mu_bar_up,
            v,
            sigma_shift: inputs.sigma_shift.unwrap_or(inputs.h_up - inputs.f_low),
            pi,
            lipschitz: l,
            epsilon: eps,
            f_low: inputs.f_low,
            h_up: inputs.h_up,
            c1,
            c2,
            c3,
            c4,
            lambda: c.gamma.ln(),
            delta_dagger,
            xi: eps / delta_epsilon,
            xi_lower_bound,
            delta_epsilon,
            j_epsilon,
            delta_epsilon_snapped,
            sigma_decrease: 0.5 * (1.0 - v) * (g2 - 1.0) / g2,
            pi_admissible,
        })
    }

    /// Lemma-style radius bound below which a true iteration must succeed.
    pub fn success_radius(&self, gnorm: f64) -> f64 {
        let c = &self.solver;
        (gnorm / c.eta2).min(
            c.theta_min * (1.0 - c.eta1) * gnorm
                / (c.theta0 * (3.0 * self.kappa + self.lipschitz) + c.mu),
        )
    }

    /// Decrease of `ψ` guaranteed on every unsuccessful iteration.
    pub fn unsuccessful_decrease(&self, delta: f64) -> f64 {
        let g2 = self.solver.gamma * self.solver.gamma;
        (1.0 - self.v) * (1.0 - g2) / g2 * delta * delta
    }

    /// Ceiling on the expected hitting time for a run starting at `ψ₀`.
    pub fn hitting_time_bound(&self, psi0: f64) -> f64 {
        self.pi / (2.0 * self.pi - 1.0) * psi0 * self.xi * self.xi
            / (self.sigma_decrease * self.epsilon * self.epsilon)
            + 1.0
    }
}

/// Largest `γ^j δ₀ ≤ target` with `j ≤ 0`.
fn snap_to_lattice(target: f64, delta0: f64, gamma: f64) -> (i32, f64) {
    let mut j = ((target / delta0).ln() / gamma.ln()).floor().min(0.0) as i32;
    while delta0 * gamma.powi(j) > target {
        j -= 1;
    }
    while j < 0 && delta0 * gamma.powi(j + 1) <= target {
        j += 1;
    }
    (j, delta0 * gamma.powi(j))
}

/// Accuracy events of one iteration.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TruthLabel {
    /// `|f(x_k) − f̄†| ≤ κ min{δ², h(y_k)}`.
    pub g1: bool,
    /// `|f(x_k) − f̄*| ≤ κ min{δ², h(y_k)}`.
    pub g2: bool,
    /// `‖∇f(x_k) − g_k‖ ≤ κ δ`.
    pub g3: bool,
    /// `|f(x_k + p_k) − f̄^p| ≤ κ δ²`.
    pub g4: bool,
}

impl TruthLabel {
    pub fn i(&self) -> bool {
        self.g1 && self.g2 && self.g3
    }

    pub fn j(&self) -> bool {
        self.g4
    }

    pub fn is_true(&self) -> bool {
        self.i() && self.j()
    }

    /// `W_{k+1} = ±1`.
    pub fn w(&self) -> f64 {
        if self.is_true() {
            1.0
        } else {
            -1.0
        }
    }
}

pub fn classify_true(record: &IterationRecord, params: &TheoryParams) -> Result<TruthLabel, TheoryError> {
    let missing = |field| TheoryError::MissingDiagnostics { k: record.k, field };
    let h_k = record.h_k.ok_or_else(|| missing("h_k"))?;
    let fstar = record.fbar_star.ok_or_else(|| missing("fbar_star"))?;
    let fp = record.fbar_p.ok_or_else(|| missing("fbar_p"))?;
    let f_trial = record.exact_f_trial.ok_or_else(|| missing("exact_f_trial"))?;
    let kappa = params.kappa;
    let d2 = record.delta * record.delta;
    let tol = kappa * d2.min(h_k);
    let f = record.exact_f;
    Ok(TruthLabel {
        g1: (f - record.fbar_dagger).abs() <= tol + slack(f),
        g2: (f - fstar).abs() <= tol + slack(f),
        g3: record.exact_gradient_error <= kappa * record.delta + slack(record.exact_gradnorm),
        g4: (f_trial - fp).abs() <= kappa * d2 + slack(f_trial),
    })
}

/// Labels every record; zero-gradient iterations carry no trial estimates
/// and get `None`.
pub fn classify_trace(trace: &RunTrace, params: &TheoryParams) -> Result<Vec<Option<TruthLabel>>, TheoryError> {
    trace
        .records
        .iter()
        .map(|r| {
            if r.zero_gradient {
                Ok(None)
            } else {
                classify_true(r, params).map(Some)
            }
        })
        .collect()
}

/// `W_0 = 1` followed by one `±1` per iteration; unlabeled iterations count as false.
pub fn w_process(trace: &RunTrace, params: &TheoryParams) -> Result<Vec<f64>, TheoryError> {
    let labels = classify_trace(trace, params)?;
    let mut w = Vec::with_capacity(labels.len() + 1);
    w.push(1.0);
    w.extend(labels.iter().map(|l| l.map_or(-1.0, |l| l.w())));
    Ok(w)
}

/// Point at which the Lyapunov function is evaluated.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LyapunovPoint {
    pub f: f64,
    pub h: f64,
    pub theta: f64,
    pub delta: f64,
}

/// `ψ = v(θ f + (1 − θ) h + θ Σ) + (1 − v) δ²`.
pub fn lyapunov(point: &LyapunovPoint, params: &TheoryParams) -> f64 {
    let LyapunovPoint { f, h, theta, delta } = *point;
    params.v * (theta * f + (1.0 - theta) * h + theta * params.sigma_shift)
        + (1.0 - params.v) * delta * delta
}

/// The Lyapunov arguments at the start of each iteration plus the final state.
pub fn lyapunov_points(trace: &RunTrace) -> Result<Vec<LyapunovPoint>, TheoryError> {
    let mut pts = Vec::with_capacity(trace.records.len() + 1);
    for r in &trace.records {
        pts.push(LyapunovPoint {
            f: r.exact_f,
            h: r.h_k.ok_or(TheoryError::MissingDiagnostics { k: r.k, field: "h_k" })?,
            theta: r.theta.ok_or(TheoryError::MissingDiagnostics { k: r.k, field: "theta" })?,
            delta: r.delta,
        });
    }
    let last = &trace.last;
    pts.push(LyapunovPoint {
        f: last.exact_f,
        h: last.h,
        theta: last.theta.ok_or(TheoryError::MissingDiagnostics { k: last.k, field: "theta" })?,
        delta: last.delta,
    });
    Ok(pts)
}

pub fn psi_sequence(trace: &RunTrace, params: &TheoryParams) -> Result<Vec<f64>, TheoryError> {
    Ok(lyapunov_points(trace)?
        .iter()
        .map(|p| lyapunov(p, params))
        .collect())
}

/// Mean of `(ψ_{k+1} − ψ_k)/δ_k²` over one group of iterations.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct GroupMean {
    pub count: usize,
    pub mean: Option<f64>,
}

impl GroupMean {
    fn from(values: &[f64]) -> Self {
        let count = values.len();
        let mean = (count > 0).then(|| values.iter().sum::<f64>() / count as f64);
        Self { count, mean }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LyapunovReport {
    /// `(ψ_{k+1} − ψ_k)/δ_k²` per iteration.
    pub normalized_steps: Vec<f64>,
    pub overall: GroupMean,
    pub true_successful: GroupMean,
    pub true_unsuccessful: GroupMean,
    pub false_successful: GroupMean,
    pub false_unsuccessful: GroupMean,
    /// Zero-gradient iterations, which have no truth label.
    pub unlabeled: GroupMean,
    /// Whether `Σ` keeps `f(x_k) − h(y_k) + Σ ≥ 0` along the trace.
    pub shift_valid: bool,
    /// Unsuccessful iterations whose decrease falls short of the guaranteed amount.
    pub unsuccessful_violations: Vec<Violation>,
}

impl LyapunovReport {
    pub fn mean_is_negative(&self) -> bool {
        self.overall.mean.is_some_and(|m| m < 0.0)
    }
}

pub fn lyapunov_decrease_report(trace: &RunTrace, params: &TheoryParams) -> Result<LyapunovReport, TheoryError> {
    let points = lyapunov_points(trace)?;
    let psi: Vec<f64> = points.iter().map(|p| lyapunov(p, params)).collect();
    let labels = classify_trace(trace, params)?;
    let mut groups: [Vec<f64>; 5] = Default::default();
    let mut normalized = Vec::with_capacity(trace.records.len());
    let mut violations = Vec::new();
    for (i, rec) in trace.records.iter().enumerate() {
        let diff = psi[i + 1] - psi[i];
        let term = diff / (rec.delta * rec.delta);
        normalized.push(term);
        let slot = match (labels[i].map(|l| l.is_true()), rec.success) {
            (Some(true), true) => 0,
            (Some(true), false) => 1,
            (Some(false), true) => 2,
            (Some(false), false) => 3,
            (None, _) => 4,
        };
        groups[slot].push(term);
        if !rec.success {
            let bound = params.unsuccessful_decrease(rec.delta);
            if diff > bound + slack(psi[i]) {
                violations.push(Violation {
                    k: rec.k,
                    check: "unsuccessful decrease",
                    detail: format!("psi step {diff} > {bound}"),
                });
            }
        }
    }
    let shift_valid = points.iter().all(|p| p.f - p.h + params.sigma_shift >= 0.0);
    Ok(LyapunovReport {
        overall: GroupMean::from(&normalized),
        normalized_steps: normalized,
        true_successful: GroupMean::from(&groups[0]),
        true_unsuccessful: GroupMean::from(&groups[1]),
        false_successful: GroupMean::from(&groups[2]),
        false_unsuccessful: GroupMean::from(&groups[3]),
        unlabeled: GroupMean::from(&groups[4]),
        shift_valid,
        unsuccessful_violations: violations,
    })
}

/// First iteration index whose exact gradient norm is at most `epsilon`,
/// counting the final state as index `records.len()`.
pub fn hitting_time(trace: &RunTrace, epsilon: f64) -> Option<usize> {
    trace
        .records
        .iter()
        .map(|r| r.exact_gradnorm)
        .chain(std::iter::once(trace.last.exact_gradnorm))
        .position(|g| g <= epsilon)
}

/// Empirical hitting times over several runs next to the expected-value ceiling.
#[derive(Debug, Clone, PartialEq)]
pub struct HittingTimeReport {
    pub epsilon: f64,
    pub times: Vec<Option<usize>>,
    /// Mean over the runs that hit; `None` if none did.
    pub mean_over_hits: Option<f64>,
    /// Ceiling evaluated at the largest initial `ψ₀` among the runs.
    pub bound: f64,
}

pub fn hitting_time_report(traces: &[RunTrace], params: &TheoryParams) -> Result<HittingTimeReport, TheoryError> {
    let times: Vec<Option<usize>> = traces.iter().map(|t| hitting_time(t, params.epsilon)).collect();
    let hits: Vec<f64> = times.iter().flatten().map(|&k| k as f64).collect();
    let mut psi0 = 0.0f64;
    for t in traces {
        psi0 = psi0.max(psi_sequence(t, params)?[0]);
    }
    Ok(HittingTimeReport {
        epsilon: params.epsilon,
        mean_over_hits: (!hits.is_empty()).then(|| hits.iter().sum::<f64>() / hits.len() as f64),
        times,
        bound: params.hitting_time_bound(psi0),
    })
}

/// Iterations that are true, satisfy the small-radius condition and the
/// accuracy update `h(y^t) ≤ μ δ²`, and still failed.
pub fn lemma_succ_check(trace: &RunTrace, params: &TheoryParams) -> Result<Vec<Violation>, TheoryError> {
    let labels = classify_trace(trace, params)?;
    let mu = params.solver.mu;
    let mut out = Vec::new();
    for (rec, label) in trace.records.iter().zip(&labels) {
        let Some(label) = label else { continue };
        if rec.success || !label.is_true() {
            continue;
        }
        let d2 = rec.delta * rec.delta;
        let radius = params.success_radius(rec.gnorm);
        if rec.delta <= radius && rec.h_t() <= mu * d2 {
            out.push(Violation {
                k: rec.k,
                check: "small-radius success",
                detail: format!("true iteration with delta {} <= {radius} failed", rec.delta),
            });
        }
    }
    Ok(out)
}

/// Estimates `L` for `‖∇f(a) − ∇f(b)‖ ≤ 2L‖a − b‖` near the given anchors.
///
/// Each pair takes a random anchor `a` and `b = a + u` with `u` uniform in
/// the cube of half-width `radius`. The largest observed ratio estimates
/// `2L`; it is returned as is, i.e. twice the estimate of `L`.
pub fn estimate_lipschitz(
    oracle: &dyn StochasticOracle,
    anchors: &[Vec<f64>],
    radius: f64,
    pairs: usize,
    seed: u64,
) -> f64 {
    let mut rng = RandomStream::seed_from_u64(seed);
    let mut best = 0.0f64;
    if anchors.is_empty() {
        return best;
    }
    for _ in 0..pairs {
        let a = &anchors[rng.gen_range(0..anchors.len())];
        let b: Vec<f64> = a.iter().map(|v| v + radius * rng.gen_range(-1.0..1.0)).collect();
        let dx = distance(a, &b);
        if dx == 0.0 {
            continue;
        }
        let ga = oracle.exact_gradient(a);
        let gb = oracle.exact_gradient(&b);
        let ratio = distance(&ga, &gb) / dx;
        if ratio.is_finite() {
            best = best.max(ratio);
        }
    }
    best
}

/// Iterates visited by a trace, for use as [`estimate_lipschitz`] anchors.
pub fn trajectory(trace: &RunTrace) -> Vec<Vec<f64>> {
    trace
        .records
        .iter()
        .map(|r| r.x.clone())
        .chain(std::iter::once(trace.last.x.clone()))
        .collect()
}

/// Exact gradient norm at the start of a trace.
pub fn initial_gradnorm(trace: &RunTrace, oracle: &dyn StochasticOracle) -> f64 {
    norm(&oracle.exact_gradient(&trace.initial.x))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::irerm::run;
    use crate::oracle::{NoiseSpec, NoisyLeastSquares};
    use crate::problems::{by_id, LeastSquaresProblem};
    use crate::trace::Variant;
    use proptest::prelude::*;

    fn config() -> IrermConfig {
        let mut c = IrermConfig::new(Variant::V1, 10);
        c.theta_min = 0.4;
        c
    }

    fn params(kappa: f64) -> TheoryParams {
        TheoryParams::derive(&config(), &TheoryInputs::new(kappa, 2.0, 1e-3, 1.0)).unwrap()
    }

    fn noisy_run(sigma: f64, id: &str) -> RunTrace {
        let p = by_id(id, 10).unwrap();
        let o = NoisyLeastSquares::new(p.as_ref(), NoiseSpec::new(sigma, 3).unwrap());
        let mut c = config();
        c.kmax = 40;
        run(&o, &c, id, 5).unwrap()
    }

    #[test]
    fn derived_constants_follow_their_definitions() {
        let p = params(1e-5);
        let c = &p.solver;
        let g2 = c.gamma * c.gamma;
        let ratio = (4.0 * g2 / (p.zeta * p.c1)).max(2.0 * g2 / p.c3);
        assert!((p.v / (1.0 - p.v) - ratio).abs() <= 1e-9 * ratio);
        assert!(p.c1 > 0.0 && p.c3 > 0.0);
        assert!(p.zeta > p.zeta_lower_bound);
        assert_eq!(p.sigma_shift, 1.0);
        assert_eq!(p.lambda, 2f64.ln());
        assert!((p.sigma_decrease - 0.5 * (1.0 - p.v) * 0.75).abs() < 1e-15);
    }

    #[test]
    fn kappa_outside_its_range_is_rejected() {
        let c = config();
        for kappa in [0.0, 1.0, 5e-5] {
            let r = TheoryParams::derive(&c, &TheoryInputs::new(kappa, 1.0, 1e-3, 1.0));
            assert!(matches!(r, Err(TheoryError::InvalidParams(_))), "kappa {kappa}");
        }
    }

    #[test]
    fn delta_epsilon_lands_on_the_radius_lattice() {
        let p = params(1e-5);
        let target = p.epsilon / p.xi_lower_bound;
        assert!(p.delta_epsilon <= target);
        assert!(p.delta_epsilon * p.solver.gamma > target);
        assert!(p.j_epsilon <= 0);
        assert_eq!(p.delta_epsilon, p.solver.delta0 * p.solver.gamma.powi(p.j_epsilon));
        assert!(p.xi >= p.xi_lower_bound);
        assert_eq!(snap_to_lattice(0.25, 1.0, 2.0), (-2, 0.25));
        assert_eq!(snap_to_lattice(5.0, 1.0, 2.0), (0, 1.0));
    }

    #[test]
    fn lyapunov_substitution() {
        let mut p = params(1e-5);
        p.v = 0.5;
        p.sigma_shift = 3.0;
        for h in [0.0, 7.0] {
            let psi = lyapunov(&LyapunovPoint { f: 2.0, h, theta: 1.0, delta: 0.5 }, &p);
            assert_eq!(psi, (2.0 + 3.0) / 2.0 + 0.25 / 2.0);
        }
    }

    #[test]
    fn hand_built_record_meets_g2() {
        let mut rec = noisy_run(0.0, "p5").records[0].clone();
        let p = params(1e-5);
        let d2 = rec.delta * rec.delta;
        rec.h_k = Some(2.0 * d2);
        rec.fbar_star = Some(rec.exact_f + p.kappa * d2 / 2.0);
        assert!(classify_true(&rec, &p).unwrap().g2);
        rec.fbar_star = Some(rec.exact_f + 2.0 * p.kappa * d2);
        assert!(!classify_true(&rec, &p).unwrap().g2);
    }

    #[test]
    fn exact_runs_are_always_true() {
        let t = noisy_run(0.0, "p1");
        let p = params(1e-6);
        assert!(w_process(&t, &p).unwrap().iter().all(|&w| w == 1.0));
    }

    #[test]
    fn zero_kappa_noisy_runs_are_false() {
        let t = noisy_run(0.1, "p1");
        let mut p = params(1e-5);
        p.kappa = 0.0;
        let w = w_process(&t, &p).unwrap();
        assert_eq!(w[0], 1.0);
        assert!(w[1..].iter().all(|&w| w == -1.0));
    }

    #[test]
    fn missing_trial_estimate_is_an_error() {
        let mut rec = noisy_run(0.0, "p1").records[0].clone();
        rec.fbar_p = None;
        assert!(matches!(
            classify_true(&rec, &params(1e-5)),
            Err(TheoryError::MissingDiagnostics { field: "fbar_p", .. })
        ));
    }

    #[test]
    fn unsuccessful_steps_decrease_psi_by_the_fixed_amount() {
        let t = noisy_run(0.1, "p5");
        let p = params(1e-5);
        let psi = psi_sequence(&t, &p).unwrap();
        let mut seen = 0;
        for (i, rec) in t.records.iter().enumerate() {
            if !rec.success {
                seen += 1;
                let expected = p.unsuccessful_decrease(rec.delta);
                assert!((psi[i + 1] - psi[i] - expected).abs() <= 1e-12 * psi[i].abs().max(1.0));
                assert!(expected < 0.0);
            }
        }
        assert!(seen > 0);
        assert!(lyapunov_decrease_report(&t, &p).unwrap().unsuccessful_violations.is_empty());
    }

    #[test]
    fn exact_descent_has_negative_mean_decrease() {
        let t = noisy_run(0.0, "p1");
        let r = lyapunov_decrease_report(&t, &params(1e-5)).unwrap();
        assert!(r.mean_is_negative(), "{:?}", r.overall);
        assert!(r.shift_valid);
        assert_eq!(r.false_successful.count + r.false_unsuccessful.count, 0);
    }

    #[test]
    fn empty_trace_gives_empty_reports() {
        let p = by_id("p1", 10).unwrap();
        let o = NoisyLeastSquares::new(p.as_ref(), NoiseSpec::noiseless());
        let mut c = config();
        c.budget = 0;
        let t = run(&o, &c, "p1", 0).unwrap();
        let r = lyapunov_decrease_report(&t, &params(1e-5)).unwrap();
        assert_eq!(r.overall.count, 0);
        assert_eq!(r.overall.mean, None);
        assert!(lemma_succ_check(&t, &params(1e-5)).unwrap().is_empty());
    }

    #[test]
    fn hitting_time_scans_the_gradient_norms() {
        let mut t = noisy_run(0.0, "p1");
        t.records.truncate(3);
        for (r, g) in t.records.iter_mut().zip([3.0, 2.0, 1.0]) {
            r.exact_gradnorm = g;
        }
        t.last.exact_gradnorm = 0.5;
        assert_eq!(hitting_time(&t, 1.0), Some(2));
        assert_eq!(hitting_time(&t, 5.0), Some(0));
        assert_eq!(hitting_time(&t, 0.5), Some(3));
        assert_eq!(hitting_time(&t, 0.0), None);
    }

    /// Exact run on the quadratic with `δ` pinned small, so every step lies
    /// inside the success radius.
    fn small_radius_run() -> (RunTrace, TheoryParams) {
        let p = by_id("quad", 10).unwrap();
        let o = NoisyLeastSquares::new(p.as_ref(), NoiseSpec::noiseless()).with_sample_cap(u64::MAX);
        let mut c = config();
        c.mu = 0.5;
        c.delta0 = 0.01;
        c.delta_max = 0.01;
        c.kmax = 50;
        c.budget = u64::MAX / 4;
        let t = run(&o, &c, "quad", 0).unwrap();
        let l = estimate_lipschitz(&o, &trajectory(&t), 0.1, 1000, 1);
        let params = TheoryParams::derive(&c, &TheoryInputs::new(1e-5, l, 1e-3, 1.0)).unwrap();
        (t, params)
    }

    #[test]
    fn exact_runs_respect_the_small_radius_lemma() {
        let (t, params) = small_radius_run();
        assert!(!t.records.is_empty());
        assert!(lemma_succ_check(&t, &params).unwrap().is_empty());
    }

    #[test]
    fn flipped_acceptance_is_caught() {
        let (mut t, params) = small_radius_run();
        let flipped = t
            .records
            .iter_mut()
            .filter(|r| r.success && r.delta <= params.success_radius(r.gnorm))
            .map(|r| r.success = false)
            .count();
        assert!(flipped > 0);
        assert_eq!(lemma_succ_check(&t, &params).unwrap().len(), flipped);
    }

    #[test]
    fn lipschitz_estimate_matches_a_quadratic() {
        // f = Σ (2 x_i)², so ∇f = 8x and the ratio is exactly 8.
        struct Scaled;
        impl LeastSquaresProblem for Scaled {
            fn id(&self) -> &str {
                "scaled"
            }
            fn name(&self) -> &str {
                "scaled"
            }
            fn dim(&self) -> usize {
                3
            }
            fn residual_count(&self) -> usize {
                3
            }
            fn initial_point(&self) -> Vec<f64> {
                vec![1.0; 3]
            }
            fn evaluate(&self, x: &[f64], r: &mut [f64], jac: &mut dyn FnMut(usize, usize, f64)) {
                for i in 0..3 {
                    r[i] = 2.0 * x[i];
                    jac(i, i, 2.0);
                }
            }
        }
        let o = NoisyLeastSquares::new(&Scaled, NoiseSpec::noiseless());
        let l = estimate_lipschitz(&o, &[vec![0.0; 3]], 0.5, 50, 2);
        assert!((l - 8.0).abs() < 1e-9, "{l}");
    }

    proptest! {
        #[test]
        fn hitting_time_is_monotone(
            norms in proptest::collection::vec(0.0f64..10.0, 1..30),
            e1 in 0.0f64..10.0,
            e2 in 0.0f64..10.0,
        ) {
            let mut t = noisy_run(0.0, "p1");
            t.records.truncate(norms.len() - 1);
            prop_assume!(t.records.len() == norms.len() - 1);
            for (r, g) in t.records.iter_mut().zip(&norms) {
                r.exact_gradnorm = *g;
            }
            t.last.exact_gradnorm = norms[norms.len() - 1];
            let (lo, hi) = if e1 <= e2 { (e1, e2) } else { (e2, e1) };
            let key = |h: Option<usize>| h.unwrap_or(usize::MAX);
            prop_assert!(key(hitting_time(&t, lo)) >= key(hitting_time(&t, hi)));
        }

        #[test]
        fn lyapunov_is_nonnegative_with_the_default_shift(
            f in 0.0f64..1e3, h in 0.0f64..1.0, theta in 0.0f64..1.0, delta in 0.0f64..10.0,
        ) {
            let p = params(1e-5);
            let point = LyapunovPoint { f, h, theta, delta };
            prop_assert!(lyapunov(&point, &p) >= 0.0);
        }
    }
}
