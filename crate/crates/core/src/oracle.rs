//! Noise models and randomized estimators.
//!
//! An [`AccuracyLevel`] `y` controls how noisy an estimate is. Two settings are
//! supported:
//!
//! * **expectation**: `f(x) = E_ξ[f(x, ξ)]`, `y ∈ [0, 1]`, `h(y) = √y`, and an
//!   estimate averages `p(y) = ⌈1/y⌉` independent realizations. `y = 0` means
//!   exact evaluation.
//! * **finite sum**: `f(x) = (1/N) Σ φ_i(x)`, `y ∈ {1, …, N}` is the size of a
//!   subsample drawn without replacement, `h(y) = √(N/y)` for `y < N` and
//!   `h(N) = 0`.
//!
//! Every estimate reports the number of samples it consumed so that callers can
//! keep the cost counter. An exact expectation-mode evaluation is charged one
//! unit.

use rand::seq::index;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::OracleError;
use crate::problems::LeastSquaresProblem;

/// Counter-based random stream owned by a single run.
pub type RandomStream = ChaCha8Rng;

/// Default ceiling on the sample count of a single estimate.
pub const DEFAULT_SAMPLE_CAP: u64 = 10_000_000;

/// Stream for run `run_index` of an experiment seeded with `base_seed`.
pub fn run_stream(base_seed: u64, run_index: u64) -> RandomStream {
    RandomStream::seed_from_u64(base_seed.wrapping_add(run_index))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AccuracyMode {
    Expectation,
    FiniteSum { total: usize },
}

impl AccuracyMode {
    fn label(self) -> &'static str {
        match self {
            AccuracyMode::Expectation => "expectation",
            AccuracyMode::FiniteSum { .. } => "finite-sum",
        }
    }

    /// Upper bound `h_up` of the infeasibility measure.
    pub fn h_up(self) -> f64 {
        match self {
            AccuracyMode::Expectation => 1.0,
            AccuracyMode::FiniteSum { total } => (total as f64).sqrt(),
        }
    }
}

/// The accuracy variable `y` together with the mode that interprets it.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AccuracyLevel {
    y: f64,
    mode: AccuracyMode,
}

impl AccuracyLevel {
    pub fn expectation(y: f64) -> Result<Self, OracleError> {
        Self::new(AccuracyMode::Expectation, y)
    }

    pub fn finite_sum(y: usize, total: usize) -> Result<Self, OracleError> {
        Self::new(AccuracyMode::FiniteSum { total }, y as f64)
    }

    pub fn new(mode: AccuracyMode, y: f64) -> Result<Self, OracleError> {
        let valid = match mode {
            AccuracyMode::Expectation => (0.0..=1.0).contains(&y),
            AccuracyMode::FiniteSum { total } => {
                total >= 1 && y.fract() == 0.0 && y >= 1.0 && y <= total as f64
            }
        };
        if valid {
            Ok(Self { y, mode })
        } else {
            Err(OracleError::InvalidLevel {
                y,
                mode: mode.label(),
            })
        }
    }

    /// The level at which estimates are exact.
    pub fn exact(mode: AccuracyMode) -> Self {
        let y = match mode {
            AccuracyMode::Expectation => 0.0,
            AccuracyMode::FiniteSum { total } => total as f64,
        };
        Self { y, mode }
    }

    pub fn y(&self) -> f64 {
        self.y
    }

    pub fn mode(&self) -> AccuracyMode {
        self.mode
    }

    /// Infeasibility `h(y)`.
    pub fn h(&self) -> f64 {
        match self.mode {
            AccuracyMode::Expectation => self.y.sqrt(),
            AccuracyMode::FiniteSum { total } => {
                if self.y as usize >= total {
                    0.0
                } else {
                    (total as f64 / self.y).sqrt()
                }
            }
        }
    }

    pub fn is_exact(&self) -> bool {
        self.h() == 0.0
    }

    /// Sample count `p(y)`; [`OracleError::ExactEvaluation`] for `y = 0` in
    /// expectation mode. Counts beyond `u64::MAX` saturate.
    pub fn samples(&self) -> Result<u64, OracleError> {
        match self.mode {
            AccuracyMode::Expectation => {
                if self.y == 0.0 {
                    Err(OracleError::ExactEvaluation)
                } else {
                    Ok((1.0 / self.y).ceil() as u64)
                }
            }
            AccuracyMode::FiniteSum { .. } => Ok(self.y as u64),
        }
    }

    /// Units charged to the cost counter for one estimate at this level.
    pub fn cost(&self) -> u64 {
        self.samples().unwrap_or(1)
    }

    /// Cheapest level whose infeasibility does not exceed `bound`.
    pub fn for_h_bound(bound: f64, mode: AccuracyMode) -> Self {
        let bound = bound.max(0.0);
        match mode {
            AccuracyMode::Expectation => {
                if bound >= 1.0 {
                    return Self { y: 1.0, mode };
                }
                let mut y = bound * bound;
                while y > 0.0 && y.sqrt() > bound {
                    y = next_down(y);
                }
                Self { y, mode }
            }
            AccuracyMode::FiniteSum { total } => {
                if bound == 0.0 {
                    return Self::exact(mode);
                }
                let n = total as f64;
                let mut y = (n / (bound * bound)).ceil().clamp(1.0, n);
                let mut level = Self { y, mode };
                while level.h() > bound {
                    y += 1.0;
                    level = Self { y, mode };
                }
                level
            }
        }
    }

    /// The level whose sample count is exactly `count`: `y = 1/count` in
    /// expectation mode, `y = min(count, N)` for finite sums.
    pub fn for_samples(count: u64, mode: AccuracyMode) -> Self {
        let count = count.max(1);
        match mode {
            AccuracyMode::Expectation => {
                let c = count as f64;
                let mut y = 1.0 / c;
                while (1.0 / y).ceil() > c {
                    y = next_up(y);
                }
                Self { y, mode }
            }
            AccuracyMode::FiniteSum { total } => Self {
                y: count.min(total as u64) as f64,
                mode,
            },
        }
    }
}

fn next_down(y: f64) -> f64 {
    debug_assert!(y > 0.0 && y.is_finite());
    f64::from_bits(y.to_bits() - 1)
}

fn next_up(y: f64) -> f64 {
    debug_assert!(y >= 0.0 && y.is_finite());
    f64::from_bits(y.to_bits() + 1)
}

/// `h(y)` for a level.
pub fn h_value(level: &AccuracyLevel) -> f64 {
    level.h()
}

/// Inverse of `h`: the cheapest level with `h(y) ≤ bound`.
pub fn level_for_h_bound(bound: f64, mode: AccuracyMode) -> AccuracyLevel {
    AccuracyLevel::for_h_bound(bound, mode)
}

/// `p(y) = ⌈1/y⌉` (expectation) or `y` (finite sum).
pub fn samples_for(level: &AccuracyLevel) -> Result<u64, OracleError> {
    level.samples()
}

/// Uniform multiplicative noise `ξ_i ~ U[−σ, σ)` applied to each residual.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NoiseSpec {
    pub sigma: f64,
    pub base_seed: u64,
}

impl NoiseSpec {
    pub fn new(sigma: f64, base_seed: u64) -> Result<Self, OracleError> {
        if !(sigma >= 0.0 && sigma.is_finite()) {
            return Err(OracleError::InvalidSpec(format!(
                "noise half-width must be finite and >= 0, got {sigma}"
            )));
        }
        Ok(Self { sigma, base_seed })
    }

    pub fn noiseless() -> Self {
        Self {
            sigma: 0.0,
            base_seed: 0,
        }
    }

    /// One draw of `ξ`.
    #[inline]
    pub fn draw(&self, stream: &mut RandomStream) -> f64 {
        self.sigma * (2.0 * stream.gen::<f64>() - 1.0)
    }
}

/// A randomized function or gradient value together with its cost.
#[derive(Debug, Clone, PartialEq)]
pub struct Estimate<T> {
    pub value: T,
    pub samples_used: u64,
    pub level: AccuracyLevel,
}

/// `(α, ρ, V)` of a probabilistic accuracy requirement: with probability at
/// least `α`, the estimate is within `ρ` of the truth, given variance bound `V`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProbabilisticAccuracySpec {
    alpha: f64,
    rho: f64,
    variance: f64,
}

impl ProbabilisticAccuracySpec {
    pub fn new(alpha: f64, rho: f64, variance: f64) -> Result<Self, OracleError> {
        if !(alpha > 0.0 && alpha <= 1.0) {
            return Err(OracleError::InvalidSpec(format!("alpha = {alpha} not in (0, 1]")));
        }
        if !(rho > 0.0 && rho.is_finite()) {
            return Err(OracleError::InvalidSpec(format!("rho = {rho} must be > 0")));
        }
        if !(variance > 0.0 && variance.is_finite()) {
            return Err(OracleError::InvalidSpec(format!("V = {variance} must be > 0")));
        }
        Ok(Self {
            alpha,
            rho,
            variance,
        })
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn rho(&self) -> f64 {
        self.rho
    }

    pub fn variance(&self) -> f64 {
        self.variance
    }

    /// Chebyshev sample bound `⌈V / ((1 − α) ρ²)⌉`, at least one.
    pub fn sample_bound(&self) -> Result<f64, OracleError> {
        if self.alpha == 1.0 {
            return Err(OracleError::ExactRequired);
        }
        let raw = self.variance / ((1.0 - self.alpha) * self.rho * self.rho);
        Ok(raw.ceil().max(1.0))
    }
}

/// Cheapest level meeting the Chebyshev bound; exact when the bound reaches `N`.
pub fn required_level_for_probability(
    spec: &ProbabilisticAccuracySpec,
    mode: AccuracyMode,
) -> Result<AccuracyLevel, OracleError> {
    let bound = spec.sample_bound()?;
    Ok(match mode {
        AccuracyMode::Expectation => {
            let count = if bound >= u64::MAX as f64 {
                u64::MAX
            } else {
                bound as u64
            };
            AccuracyLevel::for_samples(count, mode)
        }
        AccuracyMode::FiniteSum { total } => {
            if bound >= total as f64 {
                AccuracyLevel::exact(mode)
            } else {
                AccuracyLevel::for_samples(bound as u64, mode)
            }
        }
    })
}

/// Per-residual mean of `(1 + ξ_i)²` over `count` independent realizations.
fn mean_squared_weights(
    m: usize,
    count: u64,
    noise: &NoiseSpec,
    stream: &mut RandomStream,
) -> Vec<f64> {
    let mut acc = vec![0.0; m];
    for _ in 0..count {
        for a in acc.iter_mut() {
            let w = 1.0 + noise.draw(stream);
            *a += w * w;
        }
    }
    let c = count as f64;
    acc.iter_mut().for_each(|a| *a /= c);
    acc
}

/// Sample count for a noisy least-squares estimate, or `None` when the value
/// is exact (exact level or zero noise; both still charge [`AccuracyLevel::cost`]).
fn noisy_samples(level: &AccuracyLevel, noise: &NoiseSpec) -> Result<Option<u64>, OracleError> {
    if level.mode() != AccuracyMode::Expectation {
        return Err(OracleError::WrongMode {
            expected: "expectation",
        });
    }
    if level.is_exact() || noise.sigma == 0.0 {
        Ok(None)
    } else {
        level.samples().map(Some)
    }
}

/// Sample-average estimate of `f(x) = Σ_i f_i(x)²` under multiplicative noise:
/// `(1/p) Σ_j Σ_i ((1 + ξ_i^(j)) f_i(x))²`.
pub fn estimate_function(
    problem: &dyn LeastSquaresProblem,
    x: &[f64],
    level: AccuracyLevel,
    noise: &NoiseSpec,
    stream: &mut RandomStream,
) -> Result<Estimate<f64>, OracleError> {
    let r = problem.residuals(x);
    let value: f64 = match noisy_samples(&level, noise)? {
        None => r.iter().map(|ri| ri * ri).sum(),
        Some(count) => {
            let w = mean_squared_weights(r.len(), count, noise, stream);
            r.iter().zip(&w).map(|(ri, wi)| wi * ri * ri).sum()
        }
    };
    if !value.is_finite() {
        return Err(OracleError::NonFinite);
    }
    Ok(Estimate {
        value,
        samples_used: level.cost(),
        level,
    })
}

/// Sample-average gradient estimate `(1/p) Σ_j Σ_i 2 (1 + ξ_i^(j))² f_i(x) ∇f_i(x)`.
pub fn estimate_gradient(
    problem: &dyn LeastSquaresProblem,
    x: &[f64],
    level: AccuracyLevel,
    noise: &NoiseSpec,
    stream: &mut RandomStream,
) -> Result<Estimate<Vec<f64>>, OracleError> {
    let value = match noisy_samples(&level, noise)? {
        None => problem.gradient(x),
        Some(count) => {
            let r = problem.residuals(x);
            let w = mean_squared_weights(r.len(), count, noise, stream);
            let coeffs: Vec<f64> = r.iter().zip(&w).map(|(ri, wi)| 2.0 * wi * ri).collect();
            let mut g = vec![0.0; problem.dim()];
            problem.weighted_jacobian_transpose(x, &coeffs, &mut g);
            g
        }
    };
    if value.iter().any(|v| !v.is_finite()) {
        return Err(OracleError::NonFinite);
    }
    Ok(Estimate {
        value,
        samples_used: level.cost(),
        level,
    })
}

/// `f(x) = (1/N) Σ_i φ_i(x)`.
pub trait FiniteSumObjective: Send + Sync {
    /// Number of terms `N`.
    fn len(&self) -> usize;

    fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn dim(&self) -> usize;

    fn component_value(&self, i: usize, x: &[f64]) -> f64;

    /// Adds `scale · ∇φ_i(x)` to `out`.
    fn add_component_gradient(&self, i: usize, x: &[f64], scale: f64, out: &mut [f64]);

    /// `(1/|I|) Σ_{i∈I} φ_i(x)`.
    fn batch_mean_value(&self, indices: &[usize], x: &[f64]) -> f64 {
        let s: f64 = indices.iter().map(|&i| self.component_value(i, x)).sum();
        s / indices.len() as f64
    }

    /// `(1/|I|) Σ_{i∈I} ∇φ_i(x)`.
    fn batch_mean_gradient(&self, indices: &[usize], x: &[f64]) -> Vec<f64> {
        let mut g = vec![0.0; self.dim()];
        let scale = 1.0 / indices.len() as f64;
        for &i in indices {
            self.add_component_gradient(i, x, scale, &mut g);
        }
        g
    }
}

/// A least-squares problem read as a finite sum with `φ_i = m f_i²`.
pub struct ResidualTerms<'a> {
    problem: &'a dyn LeastSquaresProblem,
}

impl<'a> ResidualTerms<'a> {
    pub fn new(problem: &'a dyn LeastSquaresProblem) -> Self {
        Self { problem }
    }
}

impl FiniteSumObjective for ResidualTerms<'_> {
    fn len(&self) -> usize {
        self.problem.residual_count()
    }

    fn dim(&self) -> usize {
        self.problem.dim()
    }

    fn component_value(&self, i: usize, x: &[f64]) -> f64 {
        let r = self.problem.residuals(x);
        self.len() as f64 * r[i] * r[i]
    }

    fn add_component_gradient(&self, i: usize, x: &[f64], scale: f64, out: &mut [f64]) {
        let g = self.batch_mean_gradient(&[i], x);
        out.iter_mut().zip(g).for_each(|(o, gi)| *o += scale * gi);
    }

    fn batch_mean_value(&self, indices: &[usize], x: &[f64]) -> f64 {
        let r = self.problem.residuals(x);
        let m = self.len() as f64;
        indices.iter().map(|&i| m * r[i] * r[i]).sum::<f64>() / indices.len() as f64
    }

    fn batch_mean_gradient(&self, indices: &[usize], x: &[f64]) -> Vec<f64> {
        let r = self.problem.residuals(x);
        let m = self.len() as f64;
        let mut coeffs = vec![0.0; r.len()];
        for &i in indices {
            coeffs[i] += 2.0 * m * r[i] / indices.len() as f64;
        }
        let mut g = vec![0.0; self.dim()];
        self.problem.weighted_jacobian_transpose(x, &coeffs, &mut g);
        g
    }
}

fn finite_sum_batch(
    objective: &dyn FiniteSumObjective,
    level: &AccuracyLevel,
    stream: &mut RandomStream,
) -> Result<Vec<usize>, OracleError> {
    let total = objective.len();
    if level.mode() != (AccuracyMode::FiniteSum { total }) {
        return Err(OracleError::WrongMode {
            expected: "finite-sum with matching N",
        });
    }
    let y = level.y() as usize;
    Ok(if y >= total {
        (0..total).collect()
    } else {
        index::sample(stream, total, y).into_vec()
    })
}

/// Subsampled value `(1/y) Σ_{i∈I_y} φ_i(x)` with `I_y` drawn uniformly
/// without replacement. `y = N` is exact.
pub fn subsample_estimate(
    objective: &dyn FiniteSumObjective,
    x: &[f64],
    level: AccuracyLevel,
    stream: &mut RandomStream,
) -> Result<Estimate<f64>, OracleError> {
    let batch = finite_sum_batch(objective, &level, stream)?;
    let value = objective.batch_mean_value(&batch, x);
    if !value.is_finite() {
        return Err(OracleError::NonFinite);
    }
    Ok(Estimate {
        value,
        samples_used: level.cost(),
        level,
    })
}

/// Subsampled gradient `(1/y) Σ_{i∈I_y} ∇φ_i(x)`.
pub fn subsample_gradient_estimate(
    objective: &dyn FiniteSumObjective,
    x: &[f64],
    level: AccuracyLevel,
    stream: &mut RandomStream,
) -> Result<Estimate<Vec<f64>>, OracleError> {
    let batch = finite_sum_batch(objective, &level, stream)?;
    let value = objective.batch_mean_gradient(&batch, x);
    if value.iter().any(|v| !v.is_finite()) {
        return Err(OracleError::NonFinite);
    }
    Ok(Estimate {
        value,
        samples_used: level.cost(),
        level,
    })
}

/// What a solver needs from a noisy objective. Exact values are diagnostics
/// only and never feed the solver's decisions.
pub trait StochasticOracle: Send + Sync {
    fn dim(&self) -> usize;

    fn mode(&self) -> AccuracyMode;

    fn sample_cap(&self) -> u64;

    fn initial_point(&self) -> Vec<f64>;

    fn estimate_value(
        &self,
        x: &[f64],
        level: AccuracyLevel,
        stream: &mut RandomStream,
    ) -> Result<Estimate<f64>, OracleError>;

    fn estimate_gradient(
        &self,
        x: &[f64],
        level: AccuracyLevel,
        stream: &mut RandomStream,
    ) -> Result<Estimate<Vec<f64>>, OracleError>;

    fn exact_value(&self, x: &[f64]) -> f64;

    fn exact_gradient(&self, x: &[f64]) -> Vec<f64>;

    /// `f_low`, a lower bound on both `f` and its estimates.
    fn lower_bound(&self) -> f64;

    /// Fails with [`OracleError::SampleCap`] if an estimate at `level` would
    /// exceed the per-call ceiling.
    fn check_cap(&self, level: &AccuracyLevel) -> Result<(), OracleError> {
        let requested = match level.mode() {
            AccuracyMode::Expectation if level.y() > 0.0 => (1.0 / level.y()).ceil(),
            _ => level.cost() as f64,
        };
        if requested > self.sample_cap() as f64 {
            Err(OracleError::SampleCap {
                requested,
                cap: self.sample_cap(),
            })
        } else {
            Ok(())
        }
    }
}

/// Expectation-mode oracle for a least-squares problem with multiplicative noise.
pub struct NoisyLeastSquares<'a> {
    problem: &'a dyn LeastSquaresProblem,
    noise: NoiseSpec,
    sample_cap: u64,
}

impl<'a> NoisyLeastSquares<'a> {
    pub fn new(problem: &'a dyn LeastSquaresProblem, noise: NoiseSpec) -> Self {
        Self {
            problem,
            noise,
            sample_cap: DEFAULT_SAMPLE_CAP,
        }
    }

    pub fn with_sample_cap(mut self, cap: u64) -> Self {
        self.sample_cap = cap;
        self
    }

    pub fn problem(&self) -> &dyn LeastSquaresProblem {
        self.problem
    }

    pub fn noise(&self) -> &NoiseSpec {
        &self.noise
    }
}

impl StochasticOracle for NoisyLeastSquares<'_> {
    fn dim(&self) -> usize {
        self.problem.dim()
    }

    fn mode(&self) -> AccuracyMode {
        AccuracyMode::Expectation
    }

    fn sample_cap(&self) -> u64 {
        self.sample_cap
    }

    fn initial_point(&self) -> Vec<f64> {
        self.problem.initial_point()
    }

    fn estimate_value(
        &self,
        x: &[f64],
        level: AccuracyLevel,
        stream: &mut RandomStream,
    ) -> Result<Estimate<f64>, OracleError> {
        self.check_cap(&level)?;
        estimate_function(self.problem, x, level, &self.noise, stream)
    }

    fn estimate_gradient(
        &self,
        x: &[f64],
        level: AccuracyLevel,
        stream: &mut RandomStream,
    ) -> Result<Estimate<Vec<f64>>, OracleError> {
        self.check_cap(&level)?;
        estimate_gradient(self.problem, x, level, &self.noise, stream)
    }

    fn exact_value(&self, x: &[f64]) -> f64 {
        self.problem.value(x)
    }

    fn exact_gradient(&self, x: &[f64]) -> Vec<f64> {
        self.problem.gradient(x)
    }

    fn lower_bound(&self) -> f64 {
        0.0
    }
}

/// Finite-sum oracle backed by subsampling.
pub struct SubsampledSum<'a> {
    objective: &'a dyn FiniteSumObjective,
    start: Vec<f64>,
    lower_bound: f64,
    sample_cap: u64,
}

impl<'a> SubsampledSum<'a> {
    /// `lower_bound` is the `f_low` the objective guarantees for every subsample.
    pub fn new(objective: &'a dyn FiniteSumObjective, start: Vec<f64>, lower_bound: f64) -> Self {
        Self {
            objective,
            start,
            lower_bound,
            sample_cap: DEFAULT_SAMPLE_CAP,
        }
    }
}

impl StochasticOracle for SubsampledSum<'_> {
    fn dim(&self) -> usize {
        self.objective.dim()
    }

    fn mode(&self) -> AccuracyMode {
        AccuracyMode::FiniteSum {
            total: self.objective.len(),
        }
    }

    fn sample_cap(&self) -> u64 {
        self.sample_cap
    }

    fn initial_point(&self) -> Vec<f64> {
        self.start.clone()
    }

    fn estimate_value(
        &self,
        x: &[f64],
        level: AccuracyLevel,
        stream: &mut RandomStream,
    ) -> Result<Estimate<f64>, OracleError> {
        self.check_cap(&level)?;
        subsample_estimate(self.objective, x, level, stream)
    }

    fn estimate_gradient(
        &self,
        x: &[f64],
        level: AccuracyLevel,
        stream: &mut RandomStream,
    ) -> Result<Estimate<Vec<f64>>, OracleError> {
        self.check_cap(&level)?;
        subsample_gradient_estimate(self.objective, x, level, stream)
    }

    fn exact_value(&self, x: &[f64]) -> f64 {
        let all: Vec<usize> = (0..self.objective.len()).collect();
        self.objective.batch_mean_value(&all, x)
    }

    fn exact_gradient(&self, x: &[f64]) -> Vec<f64> {
        let all: Vec<usize> = (0..self.objective.len()).collect();
        self.objective.batch_mean_gradient(&all, x)
    }

    fn lower_bound(&self) -> f64 {
        self.lower_bound
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::problems::{Luksan, SeparableQuadratic};
    use proptest::prelude::*;

    const E: AccuracyMode = AccuracyMode::Expectation;

    #[test]
    fn h_values() {
        assert_eq!(AccuracyLevel::expectation(0.25).unwrap().h(), 0.5);
        assert_eq!(AccuracyLevel::expectation(0.0).unwrap().h(), 0.0);
        assert_eq!(AccuracyLevel::finite_sum(100, 100).unwrap().h(), 0.0);
        assert_eq!(AccuracyLevel::finite_sum(25, 100).unwrap().h(), 2.0);
    }

    #[test]
    fn invalid_levels_rejected() {
        assert!(AccuracyLevel::expectation(1.5).is_err());
        assert!(AccuracyLevel::expectation(-0.1).is_err());
        assert!(AccuracyLevel::finite_sum(0, 10).is_err());
        assert!(AccuracyLevel::finite_sum(11, 10).is_err());
        assert!(AccuracyLevel::new(AccuracyMode::FiniteSum { total: 10 }, 2.5).is_err());
    }

    #[test]
    fn inverse_of_h() {
        assert_eq!(level_for_h_bound(0.5, E).y(), 0.25);
        assert_eq!(level_for_h_bound(2.0, E).y(), 1.0);
        assert_eq!(level_for_h_bound(0.0, E).y(), 0.0);
        let fs = AccuracyMode::FiniteSum { total: 100 };
        assert_eq!(level_for_h_bound(0.0, fs).y(), 100.0);
        assert_eq!(level_for_h_bound(2.0, fs).y(), 25.0);
        assert_eq!(level_for_h_bound(1e9, fs).y(), 1.0);
    }

    #[test]
    fn sample_counts() {
        let p = |y: f64| samples_for(&AccuracyLevel::expectation(y).unwrap()).unwrap();
        assert_eq!(p(0.5), 2);
        assert_eq!(p(1.0), 1);
        assert_eq!(p(0.3), 4);
        assert_eq!(
            samples_for(&AccuracyLevel::expectation(0.0).unwrap()),
            Err(OracleError::ExactEvaluation)
        );
        assert_eq!(samples_for(&AccuracyLevel::finite_sum(7, 10).unwrap()), Ok(7));
    }

    #[test]
    fn probability_bound_levels() {
        let spec = ProbabilisticAccuracySpec::new(0.75, 1.0, 1.0).unwrap();
        assert_eq!(required_level_for_probability(&spec, E).unwrap().samples(), Ok(4));
        let spec = ProbabilisticAccuracySpec::new(0.75, 0.5, 1.0).unwrap();
        assert_eq!(required_level_for_probability(&spec, E).unwrap().samples(), Ok(16));
        let spec = ProbabilisticAccuracySpec::new(0.9, 1.0, 100.0).unwrap();
        let fs = AccuracyMode::FiniteSum { total: 10 };
        let level = required_level_for_probability(&spec, fs).unwrap();
        assert!(level.is_exact());
        assert_eq!(level.y(), 10.0);
        let spec = ProbabilisticAccuracySpec::new(1.0, 1.0, 1.0).unwrap();
        assert_eq!(
            required_level_for_probability(&spec, E),
            Err(OracleError::ExactRequired)
        );
        assert!(ProbabilisticAccuracySpec::new(0.0, 1.0, 1.0).is_err());
        assert!(ProbabilisticAccuracySpec::new(0.5, 0.0, 1.0).is_err());
    }

    #[test]
    fn noiseless_estimates_are_exact() {
        let p = Luksan::from_id("p7", 20).unwrap();
        let x = p.initial_point();
        let noise = NoiseSpec::noiseless();
        let level = AccuracyLevel::expectation(0.01).unwrap();
        let mut s1 = run_stream(1, 0);
        let mut s2 = run_stream(99, 3);
        let a = estimate_function(&p, &x, level, &noise, &mut s1).unwrap();
        let b = estimate_function(&p, &x, level, &noise, &mut s2).unwrap();
        assert_eq!(a.value.to_bits(), p.value(&x).to_bits());
        assert_eq!(a.value.to_bits(), b.value.to_bits());
        assert_eq!(a.samples_used, 100);
        let g = estimate_gradient(&p, &x, level, &noise, &mut s1).unwrap();
        assert_eq!(g.value, p.gradient(&x));
    }

    #[test]
    fn exact_level_charges_one_unit() {
        let p = SeparableQuadratic::new(3);
        let noise = NoiseSpec::new(0.1, 0).unwrap();
        let mut s = run_stream(0, 0);
        let e = estimate_function(&p, &[0.0; 3], AccuracyLevel::exact(E), &noise, &mut s).unwrap();
        assert_eq!(e.value, 3.0);
        assert_eq!(e.samples_used, 1);
    }

    #[test]
    fn single_sample_is_one_raw_draw() {
        let p = SeparableQuadratic::new(3);
        let noise = NoiseSpec::new(0.1, 0).unwrap();
        let x = [0.0, 2.0, 4.0];
        let mut s = run_stream(5, 0);
        let e = estimate_function(&p, &x, AccuracyLevel::expectation(1.0).unwrap(), &noise, &mut s)
            .unwrap();
        assert_eq!(e.samples_used, 1);
        let mut replay = run_stream(5, 0);
        let r = p.residuals(&x);
        let direct: f64 = r
            .iter()
            .map(|ri| {
                let w = 1.0 + noise.draw(&mut replay);
                (w * ri) * (w * ri)
            })
            .sum();
        assert!((e.value - direct).abs() <= 1e-14 * direct);
    }

    #[test]
    fn zero_residual_gives_zero_gradient() {
        let p = SeparableQuadratic::new(5);
        let noise = NoiseSpec::new(0.5, 0).unwrap();
        let mut s = run_stream(0, 0);
        let level = AccuracyLevel::expectation(0.1).unwrap();
        let g = estimate_gradient(&p, &[1.0; 5], level, &noise, &mut s).unwrap();
        assert!(g.value.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn same_stream_state_reproduces_estimate() {
        let p = Luksan::from_id("p5", 10).unwrap();
        let x = p.initial_point();
        let noise = NoiseSpec::new(0.1, 0).unwrap();
        let level = AccuracyLevel::expectation(0.2).unwrap();
        let a = estimate_function(&p, &x, level, &noise, &mut run_stream(7, 1)).unwrap();
        let b = estimate_function(&p, &x, level, &noise, &mut run_stream(7, 1)).unwrap();
        let c = estimate_function(&p, &x, level, &noise, &mut run_stream(7, 2)).unwrap();
        assert_eq!(a, b);
        assert_ne!(a.value, c.value);
    }

    #[test]
    fn cap_is_enforced() {
        let p = SeparableQuadratic::new(2);
        let oracle = NoisyLeastSquares::new(&p, NoiseSpec::new(0.1, 0).unwrap()).with_sample_cap(10);
        let mut s = run_stream(0, 0);
        let level = AccuracyLevel::for_samples(11, E);
        assert!(matches!(
            oracle.estimate_value(&[0.0; 2], level, &mut s),
            Err(OracleError::SampleCap { .. })
        ));
        assert!(oracle
            .estimate_value(&[0.0; 2], AccuracyLevel::for_samples(10, E), &mut s)
            .is_ok());
    }

    #[test]
    fn non_finite_residuals_flagged() {
        let p = Luksan::from_id("p9", 10).unwrap();
        let x = vec![400.0; 10];
        let noise = NoiseSpec::new(0.1, 0).unwrap();
        let mut s = run_stream(0, 0);
        let level = AccuracyLevel::expectation(1.0).unwrap();
        assert_eq!(
            estimate_function(&p, &x, level, &noise, &mut s),
            Err(OracleError::NonFinite)
        );
    }

    struct Constants;

    impl FiniteSumObjective for Constants {
        fn len(&self) -> usize {
            3
        }
        fn dim(&self) -> usize {
            1
        }
        fn component_value(&self, i: usize, _x: &[f64]) -> f64 {
            (i + 1) as f64
        }
        fn add_component_gradient(&self, _i: usize, _x: &[f64], _scale: f64, _out: &mut [f64]) {}
    }

    #[test]
    fn subsample_of_constants() {
        // Pairs of {1, 2, 3}: means 1.5, 2, 2.5, each with probability 1/3.
        let obj = Constants;
        let mut s = run_stream(11, 0);
        let level = AccuracyLevel::finite_sum(2, 3).unwrap();
        let draws = 30_000;
        let mut sum = 0.0;
        for _ in 0..draws {
            let e = subsample_estimate(&obj, &[0.0], level, &mut s).unwrap();
            assert!([1.5, 2.0, 2.5].contains(&e.value));
            assert_eq!(e.samples_used, 2);
            sum += e.value;
        }
        // Standard deviation of one draw is sqrt(1/6).
        let se = (1.0f64 / 6.0).sqrt() / (draws as f64).sqrt();
        assert!((sum / draws as f64 - 2.0).abs() < 4.0 * se);

        let full = subsample_estimate(&obj, &[0.0], AccuracyLevel::finite_sum(3, 3).unwrap(), &mut s)
            .unwrap();
        assert_eq!(full.value, 2.0);
        let one = subsample_estimate(&obj, &[0.0], AccuracyLevel::finite_sum(1, 3).unwrap(), &mut s)
            .unwrap();
        assert!([1.0, 2.0, 3.0].contains(&one.value));
    }

    #[test]
    fn subsample_rejects_wrong_mode() {
        let mut s = run_stream(0, 0);
        assert!(matches!(
            subsample_estimate(&Constants, &[0.0], AccuracyLevel::finite_sum(1, 4).unwrap(), &mut s),
            Err(OracleError::WrongMode { .. })
        ));
    }

    #[test]
    fn residual_terms_full_sample_is_exact() {
        let p = Luksan::from_id("p1", 10).unwrap();
        let terms = ResidualTerms::new(&p);
        let x = p.initial_point();
        let oracle = SubsampledSum::new(&terms, x.clone(), 0.0);
        let mut s = run_stream(0, 0);
        let level = AccuracyLevel::exact(oracle.mode());
        let v = oracle.estimate_value(&x, level, &mut s).unwrap();
        assert!((v.value - p.value(&x)).abs() <= 1e-12 * p.value(&x));
        let g = oracle.estimate_gradient(&x, level, &mut s).unwrap();
        for (a, b) in g.value.iter().zip(p.gradient(&x)) {
            assert!((a - b).abs() <= 1e-10 * (1.0 + b.abs()));
        }
    }

    proptest! {
        #[test]
        fn inverse_satisfies_bound_expectation(b in 0.0f64..3.0) {
            let level = level_for_h_bound(b, E);
            prop_assert!(level.h() <= b);
        }

        #[test]
        fn inverse_satisfies_bound_finite_sum(b in 0.0f64..50.0, n in 1usize..500) {
            let level = level_for_h_bound(b, AccuracyMode::FiniteSum { total: n });
            prop_assert!(level.h() <= b);
        }

        #[test]
        fn h_nonincreasing_in_samples(c in 1u64..1_000_000) {
            let a = AccuracyLevel::for_samples(c, E);
            let b = AccuracyLevel::for_samples(c + 1, E);
            prop_assert_eq!(a.samples().unwrap(), c);
            prop_assert!(b.h() <= a.h());
        }
    }
}
