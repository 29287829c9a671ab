//! Nonlinear least-squares test problems `f(x) = Σ_i f_i(x)²`.
//!
//! The solvers only see problems through [`LeastSquaresProblem`]. The benchmark
//! set lives in [`luksan`]; [`SeparableQuadratic`] is a small zero-residual toy
//! used for deterministic checks.

pub mod luksan;

pub use luksan::{Luksan, LuksanKind, PROBLEM_IDS};

use crate::error::ProblemError;

/// A least-squares objective with exact residuals and residual Jacobian.
///
/// Implementors supply [`evaluate`](Self::evaluate); everything else is derived.
pub trait LeastSquaresProblem: Send + Sync {
    /// Short registry id, e.g. `"p5"`.
    fn id(&self) -> &str;

    fn name(&self) -> &str;

    /// Number of unknowns `n`.
    fn dim(&self) -> usize;

    /// Number of residuals `m`.
    fn residual_count(&self) -> usize;

    fn initial_point(&self) -> Vec<f64>;

    /// Writes the `m` residuals into `r` and reports every nonzero Jacobian
    /// entry `∂f_k/∂x_j` as `jac(k, j, value)`. Entries for the same `(k, j)`
    /// may be reported more than once; they add up.
    fn evaluate(&self, x: &[f64], r: &mut [f64], jac: &mut dyn FnMut(usize, usize, f64));

    fn residuals(&self, x: &[f64]) -> Vec<f64> {
        let mut r = vec![0.0; self.residual_count()];
        self.evaluate(x, &mut r, &mut |_, _, _| {});
        r
    }

    fn value(&self, x: &[f64]) -> f64 {
        self.residuals(x).iter().map(|ri| ri * ri).sum()
    }

    /// `out = Σ_k coeffs[k] ∇f_k(x)`; also returns the residuals.
    fn weighted_jacobian_transpose(&self, x: &[f64], coeffs: &[f64], out: &mut [f64]) -> Vec<f64> {
        debug_assert_eq!(coeffs.len(), self.residual_count());
        out.iter_mut().for_each(|o| *o = 0.0);
        let mut r = vec![0.0; self.residual_count()];
        self.evaluate(x, &mut r, &mut |k, j, d| out[j] += coeffs[k] * d);
        r
    }

    /// Exact gradient `2 Jᵀ(x) r(x)`.
    fn gradient(&self, x: &[f64]) -> Vec<f64> {
        let r = self.residuals(x);
        let coeffs: Vec<f64> = r.iter().map(|ri| 2.0 * ri).collect();
        let mut g = vec![0.0; self.dim()];
        self.weighted_jacobian_transpose(x, &coeffs, &mut g);
        g
    }
}

/// `f_i(x) = x_i - 1`, started from the origin.
#[derive(Debug, Clone)]
pub struct SeparableQuadratic {
    n: usize,
}

impl SeparableQuadratic {
    pub fn new(n: usize) -> Self {
        Self { n }
    }
}

impl LeastSquaresProblem for SeparableQuadratic {
    fn id(&self) -> &str {
        "quad"
    }

    fn name(&self) -> &str {
        "separable quadratic"
    }

    fn dim(&self) -> usize {
        self.n
    }

    fn residual_count(&self) -> usize {
        self.n
    }

    fn initial_point(&self) -> Vec<f64> {
        vec![0.0; self.n]
    }

    fn evaluate(&self, x: &[f64], r: &mut [f64], jac: &mut dyn FnMut(usize, usize, f64)) {
        for (i, (ri, xi)) in r.iter_mut().zip(x).enumerate() {
            *ri = xi - 1.0;
            jac(i, i, 1.0);
        }
    }
}

/// Looks up a benchmark problem by id (`"p1"` … `"p17"`, or `"quad"`).
pub fn by_id(id: &str, n: usize) -> Result<Box<dyn LeastSquaresProblem>, ProblemError> {
    if id == "quad" {
        return Ok(Box::new(SeparableQuadratic::new(n)));
    }
    Ok(Box::new(Luksan::from_id(id, n)?))
}

/// Expands `"all"` or a comma-separated list into problem ids.
pub fn parse_id_list(spec: &str) -> Result<Vec<String>, ProblemError> {
    if spec.trim() == "all" {
        return Ok(PROBLEM_IDS.iter().map(|s| s.to_string()).collect());
    }
    spec.split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| {
            if s == "quad" || PROBLEM_IDS.contains(&s) {
                Ok(s.to_string())
            } else {
                Err(ProblemError::UnknownId(s.to_string()))
            }
        })
        .collect()
}
