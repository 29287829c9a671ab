//! Seventeen sparse least-squares problems from the Lukšan–Vlček collection
//! of test problems for unconstrained optimization.
//!
//! Each kind documents the "Problem 2.x" number it transcribes. Indices in
//! the formulas below are 1-based, as in the collection; the code is 0-based.
//! Problems whose transcription is uncertain say so in their doc comment.

use super::LeastSquaresProblem;
use crate::error::ProblemError;

/// Registry ids in table order.
pub const PROBLEM_IDS: [&str; 17] = [
    "p1", "p2", "p3", "p4", "p5", "p6", "p7", "p8", "p9", "p10", "p11", "p12", "p13", "p14",
    "p15", "p16", "p17",
];

/// Exponent of the generalized Broyden residuals: `|u|^(7/6)`, so that the
/// squared residual is `|u|^(7/3)`.
const BROYDEN_POWER: f64 = 7.0 / 6.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum LuksanKind {
    /// Problem 2.1. `f_k = 10(x_i² − x_{i+1})` (k odd), `x_i − 1` (k even),
    /// `i = (k+1) div 2`. Start `x_i = −1.2` (i odd), `1` (i even).
    ChainedRosenbrock,
    /// Problem 2.2. Six residuals per block starting at odd `i`:
    /// `10(x_i² − x_{i+1})`, `x_i − 1`, `√90(x_{i+2}² − x_{i+3})`, `x_{i+2} − 1`,
    /// `√10(x_{i+1} + x_{i+3} − 2)`, `(x_{i+1} − x_{i+3})/√10`.
    /// Start `−3, −1, −3, −1` for `i ≤ 4`, then `−2, 0` alternating.
    ChainedWood,
    /// Problem 2.3. Four residuals per block: `x_i + 10x_{i+1}`,
    /// `√5(x_{i+2} − x_{i+3})`, `(x_{i+1} − 2x_{i+2})²`, `√10(x_i − x_{i+3})²`.
    /// Start `3, −1, 0, 1` repeated.
    ChainedPowellSingular,
    /// Problem 2.4. Five residuals per block: `(e^{x_i} − x_{i+1})²`,
    /// `10(x_{i+1} − x_{i+2})³`, `tan²(x_{i+2} − x_{i+3})`, `x_i⁴`, `x_{i+3} − 1`.
    /// Start `x_1 = 1`, `x_i = 2` otherwise.
    ChainedCraggLevy,
    /// Problem 2.5. `f_k = |(3 − 2x_k)x_k + 1 − x_{k−1} − x_{k+1}|^{7/6}` with
    /// `x_0 = x_{n+1} = 0`, so that `f_k²` is the collection's `|·|^{7/3}` term.
    /// Start `x_i = −1`.
    GeneralizedBroydenTridiagonal,
    /// Problem 2.6. `f_k = |(2 + 5x_k²)x_k + 1 + Σ_{j∈J_k} x_j(1 + x_j)|^{7/6}`,
    /// `J_k = {j ≠ k : max(1, k−5) ≤ j ≤ min(n, k+1)}`. Start `x_i = −1`.
    GeneralizedBroydenBanded,
    /// Problem 2.7. `x_i + ((5 − x_{i+1})x_{i+1} − 2)x_{i+1} − 13` and
    /// `x_i + ((1 + x_{i+1})x_{i+1} − 14)x_{i+1} − 29`.
    /// Start `0.5, −2` alternating.
    ChainedFreudensteinRoth,
    /// Problem 2.9. Six residuals per block of four variables:
    /// `x_i + 3x_{i+1}(x_{i+2} − 1) + x_{i+3}² − 1`,
    /// `(x_i + x_{i+1})² + (x_{i+2} − 1)² − x_{i+3} − 3`,
    /// `x_i x_{i+1} − x_{i+2} x_{i+3}`, `2x_i x_{i+2} + x_{i+1} x_{i+3} − 3`,
    /// `(x_i + x_{i+1} + x_{i+2} + x_{i+3})² + (x_i − 1)²`,
    /// `x_i x_{i+1} x_{i+2} x_{i+3} + (x_{i+3} − 1)² − 1`. Start `x_i = 3`.
    TointQuadraticMerging,
    /// Problem 2.10. `4 − e^{x_i} − e^{x_{i+1}}` and `8 − e^{3x_i} − e^{3x_{i+1}}`.
    /// Start `x_i = 0.5`.
    ChainedExponential,
    /// Problem 2.53, reconstructed as the structured Jacobian system
    /// `f_k = −2x_k² + 3x_k − x_{k−1} − 2x_{k+1} + c`,
    /// `c = 3x_{n−4} − x_{n−3} − x_{n−2} + 0.5x_{n−1} − x_n + 1`
    /// (`x_0 = 0`, and `f_n` drops the `x_{n+1}` term). Start `x_i = −1`.
    /// The collection lists this entry without a name; the reconstruction
    /// could not be checked against the original text.
    StructuredJacobian,
    /// Problem 2.71, reconstructed as the Broyden tridiagonal system
    /// `f_k = (3 − 2x_k)x_k − x_{k−1} − 2x_{k+1} + 1`. Start `x_i = −1`.
    /// Unnamed in the collection; same caveat as [`Self::StructuredJacobian`].
    BroydenTridiagonal,
    /// Problem 2.72, reconstructed as the trigonometric-exponential system
    /// `f_1 = 3x_1³ + 2x_2 − 5 + sin(x_1 − x_2) sin(x_1 + x_2)`,
    /// `f_k = −x_{k−1}e^{x_{k−1} − x_k} + x_k(4 + 3x_k²) + 2x_{k+1}
    ///        + sin(x_k − x_{k+1}) sin(x_k + x_{k+1}) − 8`,
    /// `f_n = −x_{n−1}e^{x_{n−1} − x_n} + 4x_n − 3`. Start `x_i = 0`.
    /// Unnamed in the collection; same caveat as [`Self::StructuredJacobian`].
    Trigexp,
    /// Problem 2.79 (NONDQUAR). `f_1 = x_1 − x_2`,
    /// `f_k = (x_{k−1} + x_k + x_n)²` for `2 ≤ k ≤ n−1`, `f_n = x_{n−1} + x_n`.
    /// Start `1, −1` alternating.
    Nondquar,
    /// Problem 2.81 (SINQUAD). `f_1 = (x_1 − 1)²`,
    /// `f_k = sin(x_k − x_n) − x_1² + x_k²` for `2 ≤ k ≤ n−1`,
    /// `f_n = x_n² − x_1²`. Start `x_i = 0.1`.
    Sinquad,
    /// Problem 2.82 (EDENSCH) without its additive constant. Per `i < n`:
    /// `(x_i − 2)²`, `x_i x_{i+1} − 2x_{i+1}`, `x_{i+1} + 1`. Start `x_i = 0`.
    Edensch,
    /// Problem 2.83 (GENHUMPS). Per `i < n`: `sin(2x_i) sin(2x_{i+1})`,
    /// `√0.05 x_i`, `√0.05 x_{i+1}`. Start `x_1 = −506`, `x_i = 506.2` otherwise.
    Genhumps,
    /// Problem 2.84 (ERRINROS, modified). Per `i < n`:
    /// `x_i − 16 α_{i+1}² x_{i+1}²` and `x_{i+1} − 1` with `α_j = 1.5 + sin j`,
    /// which replaces the fixed 50-entry coefficient table of the original so
    /// any `n` works. Start `x_i = −1`. The exact form of the modification is
    /// not recoverable from the problem table alone; this is our reading.
    ErrinrosModified,
}

impl LuksanKind {
    pub fn from_id(id: &str) -> Option<Self> {
        use LuksanKind::*;
        Some(match id {
            "p1" => ChainedRosenbrock,
            "p2" => ChainedWood,
            "p3" => ChainedPowellSingular,
            "p4" => ChainedCraggLevy,
            "p5" => GeneralizedBroydenTridiagonal,
            "p6" => GeneralizedBroydenBanded,
            "p7" => ChainedFreudensteinRoth,
            "p8" => TointQuadraticMerging,
            "p9" => ChainedExponential,
            "p10" => StructuredJacobian,
            "p11" => BroydenTridiagonal,
            "p12" => Trigexp,
            "p13" => Nondquar,
            "p14" => Sinquad,
            "p15" => Edensch,
            "p16" => Genhumps,
            "p17" => ErrinrosModified,
            _ => return None,
        })
    }

    pub fn id(self) -> &'static str {
        use LuksanKind::*;
        match self {
            ChainedRosenbrock => "p1",
            ChainedWood => "p2",
            ChainedPowellSingular => "p3",
            ChainedCraggLevy => "p4",
            GeneralizedBroydenTridiagonal => "p5",
            GeneralizedBroydenBanded => "p6",
            ChainedFreudensteinRoth => "p7",
            TointQuadraticMerging => "p8",
            ChainedExponential => "p9",
            StructuredJacobian => "p10",
            BroydenTridiagonal => "p11",
            Trigexp => "p12",
            Nondquar => "p13",
            Sinquad => "p14",
            Edensch => "p15",
            Genhumps => "p16",
            ErrinrosModified => "p17",
        }
    }

    pub fn name(self) -> &'static str {
        use LuksanKind::*;
        match self {
            ChainedRosenbrock => "chained Rosenbrock",
            ChainedWood => "chained Wood",
            ChainedPowellSingular => "chained Powell singular",
            ChainedCraggLevy => "chained Cragg and Levy",
            GeneralizedBroydenTridiagonal => "generalized Broyden tridiagonal",
            GeneralizedBroydenBanded => "generalized Broyden banded",
            ChainedFreudensteinRoth => "chained Freudenstein and Roth",
            TointQuadraticMerging => "Toint quadratic merging",
            ChainedExponential => "chained exponential",
            StructuredJacobian => "structured Jacobian (2.53)",
            BroydenTridiagonal => "Broyden tridiagonal (2.71)",
            Trigexp => "trigexp (2.72)",
            Nondquar => "nondquar",
            Sinquad => "sinquad",
            Edensch => "edensch",
            Genhumps => "genhumps",
            ErrinrosModified => "errinros (modified)",
        }
    }

    /// Residual count `m` for dimension `n`.
    pub fn residual_count(self, n: usize) -> usize {
        use LuksanKind::*;
        match self {
            ChainedRosenbrock | ChainedFreudensteinRoth | ChainedExponential
            | ErrinrosModified => 2 * (n - 1),
            ChainedWood | TointQuadraticMerging => 3 * (n - 2),
            ChainedPowellSingular => 2 * (n - 2),
            ChainedCraggLevy => 5 * (n - 2) / 2,
            Edensch | Genhumps => 3 * (n - 1),
            GeneralizedBroydenTridiagonal
            | GeneralizedBroydenBanded
            | StructuredJacobian
            | BroydenTridiagonal
            | Trigexp
            | Nondquar
            | Sinquad => n,
        }
    }

    fn check_dimension(self, n: usize) -> Result<(), ProblemError> {
        use LuksanKind::*;
        let (ok, requirement) = match self {
            ChainedWood | ChainedPowellSingular | ChainedCraggLevy | TointQuadraticMerging => {
                (n >= 4 && n % 2 == 0, "an even n >= 4")
            }
            StructuredJacobian => (n >= 5, "n >= 5"),
            _ => (n >= 3, "n >= 3"),
        };
        if ok {
            Ok(())
        } else {
            Err(ProblemError::BadDimension {
                id: self.id(),
                n,
                requirement,
            })
        }
    }
}

/// One problem of the collection at a fixed dimension.
#[derive(Debug, Clone)]
pub struct Luksan {
    kind: LuksanKind,
    n: usize,
    name: String,
}

impl Luksan {
    pub fn new(kind: LuksanKind, n: usize) -> Result<Self, ProblemError> {
        kind.check_dimension(n)?;
        Ok(Self {
            kind,
            n,
            name: kind.name().to_string(),
        })
    }

    pub fn from_id(id: &str, n: usize) -> Result<Self, ProblemError> {
        let kind = LuksanKind::from_id(id).ok_or_else(|| ProblemError::UnknownId(id.to_string()))?;
        Self::new(kind, n)
    }

    pub fn kind(&self) -> LuksanKind {
        self.kind
    }
}

/// `|u|^p` and its derivative in `u`.
fn signed_power(u: f64, p: f64) -> (f64, f64) {
    let a = u.abs();
    if a == 0.0 {
        return (0.0, 0.0);
    }
    let v = a.powf(p);
    (v, p * v / u)
}

fn errinros_alpha(j_one_based: usize) -> f64 {
    1.5 + (j_one_based as f64).sin()
}

impl LeastSquaresProblem for Luksan {
    fn id(&self) -> &str {
        self.kind.id()
    }

    fn name(&self) -> &str {
        &self.name
    }

    fn dim(&self) -> usize {
        self.n
    }

    fn residual_count(&self) -> usize {
        self.kind.residual_count(self.n)
    }

    fn initial_point(&self) -> Vec<f64> {
        use LuksanKind::*;
        let n = self.n;
        (0..n)
            .map(|j| {
                // 1-based parity: j even here means i odd in the collection.
                let odd = j % 2 == 0;
                match self.kind {
                    ChainedRosenbrock => {
                        if odd {
                            -1.2
                        } else {
                            1.0
                        }
                    }
                    ChainedWood => match (j < 4, odd) {
                        (true, true) => -3.0,
                        (true, false) => -1.0,
                        (false, true) => -2.0,
                        (false, false) => 0.0,
                    },
                    ChainedPowellSingular => [3.0, -1.0, 0.0, 1.0][j % 4],
                    ChainedCraggLevy => {
                        if j == 0 {
                            1.0
                        } else {
                            2.0
                        }
                    }
                    GeneralizedBroydenTridiagonal
                    | GeneralizedBroydenBanded
                    | StructuredJacobian
                    | BroydenTridiagonal
                    | ErrinrosModified => -1.0,
                    ChainedFreudensteinRoth => {
                        if odd {
                            0.5
                        } else {
                            -2.0
                        }
                    }
                    TointQuadraticMerging => 3.0,
                    ChainedExponential => 0.5,
                    Trigexp | Edensch => 0.0,
                    Nondquar => {
                        if odd {
                            1.0
                        } else {
                            -1.0
                        }
                    }
                    Sinquad => 0.1,
                    Genhumps => {
                        if j == 0 {
                            -506.0
                        } else {
                            506.2
                        }
                    }
                }
            })
            .collect()
    }

    fn evaluate(&self, x: &[f64], r: &mut [f64], jac: &mut dyn FnMut(usize, usize, f64)) {
        use LuksanKind::*;
        let n = self.n;
        debug_assert_eq!(x.len(), n);
        debug_assert_eq!(r.len(), self.residual_count());
        match self.kind {
            ChainedRosenbrock => {
                for i in 0..n - 1 {
                    let k = 2 * i;
                    r[k] = 10.0 * (x[i] * x[i] - x[i + 1]);
                    jac(k, i, 20.0 * x[i]);
                    jac(k, i + 1, -10.0);
                    r[k + 1] = x[i] - 1.0;
                    jac(k + 1, i, 1.0);
                }
            }
            ChainedWood => {
                let s90 = 90f64.sqrt();
                let s10 = 10f64.sqrt();
                for b in 0..(n - 2) / 2 {
                    let (i, k) = (2 * b, 6 * b);
                    let (x0, x1, x2, x3) = (x[i], x[i + 1], x[i + 2], x[i + 3]);
                    r[k] = 10.0 * (x0 * x0 - x1);
                    jac(k, i, 20.0 * x0);
                    jac(k, i + 1, -10.0);
                    r[k + 1] = x0 - 1.0;
                    jac(k + 1, i, 1.0);
                    r[k + 2] = s90 * (x2 * x2 - x3);
                    jac(k + 2, i + 2, 2.0 * s90 * x2);
                    jac(k + 2, i + 3, -s90);
                    r[k + 3] = x2 - 1.0;
                    jac(k + 3, i + 2, 1.0);
                    r[k + 4] = s10 * (x1 + x3 - 2.0);
                    jac(k + 4, i + 1, s10);
                    jac(k + 4, i + 3, s10);
                    r[k + 5] = (x1 - x3) / s10;
                    jac(k + 5, i + 1, 1.0 / s10);
                    jac(k + 5, i + 3, -1.0 / s10);
                }
            }
            ChainedPowellSingular => {
                let s5 = 5f64.sqrt();
                let s10 = 10f64.sqrt();
                for b in 0..(n - 2) / 2 {
                    let (i, k) = (2 * b, 4 * b);
                    let (x0, x1, x2, x3) = (x[i], x[i + 1], x[i + 2], x[i + 3]);
                    r[k] = x0 + 10.0 * x1;
                    jac(k, i, 1.0);
                    jac(k, i + 1, 10.0);
                    r[k + 1] = s5 * (x2 - x3);
                    jac(k + 1, i + 2, s5);
                    jac(k + 1, i + 3, -s5);
                    let d = x1 - 2.0 * x2;
                    r[k + 2] = d * d;
                    jac(k + 2, i + 1, 2.0 * d);
                    jac(k + 2, i + 2, -4.0 * d);
                    let e = x0 - x3;
                    r[k + 3] = s10 * e * e;
                    jac(k + 3, i, 2.0 * s10 * e);
                    jac(k + 3, i + 3, -2.0 * s10 * e);
                }
            }
            ChainedCraggLevy => {
                for b in 0..(n - 2) / 2 {
                    let (i, k) = (2 * b, 5 * b);
                    let (x0, x1, x2, x3) = (x[i], x[i + 1], x[i + 2], x[i + 3]);
                    let e0 = x0.exp();
                    let a = e0 - x1;
                    r[k] = a * a;
                    jac(k, i, 2.0 * a * e0);
                    jac(k, i + 1, -2.0 * a);
                    let d = x1 - x2;
                    r[k + 1] = 10.0 * d * d * d;
                    jac(k + 1, i + 1, 30.0 * d * d);
                    jac(k + 1, i + 2, -30.0 * d * d);
                    let t = (x2 - x3).tan();
                    r[k + 2] = t * t;
                    let dt = 2.0 * t * (1.0 + t * t);
                    jac(k + 2, i + 2, dt);
                    jac(k + 2, i + 3, -dt);
                    r[k + 3] = x0.powi(4);
                    jac(k + 3, i, 4.0 * x0.powi(3));
                    r[k + 4] = x3 - 1.0;
                    jac(k + 4, i + 3, 1.0);
                }
            }
            GeneralizedBroydenTridiagonal => {
                for k in 0..n {
                    let prev = if k > 0 { x[k - 1] } else { 0.0 };
                    let next = if k + 1 < n { x[k + 1] } else { 0.0 };
                    let u = (3.0 - 2.0 * x[k]) * x[k] + 1.0 - prev - next;
                    let (v, dv) = signed_power(u, BROYDEN_POWER);
                    r[k] = v;
                    jac(k, k, dv * (3.0 - 4.0 * x[k]));
                    if k > 0 {
                        jac(k, k - 1, -dv);
                    }
                    if k + 1 < n {
                        jac(k, k + 1, -dv);
                    }
                }
            }
            GeneralizedBroydenBanded => {
                for k in 0..n {
                    let lo = k.saturating_sub(5);
                    let hi = (k + 1).min(n - 1);
                    let band: f64 = (lo..=hi)
                        .filter(|&j| j != k)
                        .map(|j| x[j] * (1.0 + x[j]))
                        .sum();
                    let u = (2.0 + 5.0 * x[k] * x[k]) * x[k] + 1.0 + band;
                    let (v, dv) = signed_power(u, BROYDEN_POWER);
                    r[k] = v;
                    jac(k, k, dv * (2.0 + 15.0 * x[k] * x[k]));
                    for j in (lo..=hi).filter(|&j| j != k) {
                        jac(k, j, dv * (1.0 + 2.0 * x[j]));
                    }
                }
            }
            ChainedFreudensteinRoth => {
                for i in 0..n - 1 {
                    let k = 2 * i;
                    let y = x[i + 1];
                    r[k] = x[i] + ((5.0 - y) * y - 2.0) * y - 13.0;
                    jac(k, i, 1.0);
                    jac(k, i + 1, 10.0 * y - 3.0 * y * y - 2.0);
                    r[k + 1] = x[i] + ((1.0 + y) * y - 14.0) * y - 29.0;
                    jac(k + 1, i, 1.0);
                    jac(k + 1, i + 1, 3.0 * y * y + 2.0 * y - 14.0);
                }
            }
            TointQuadraticMerging => {
                for b in 0..(n - 2) / 2 {
                    let (i, k) = (2 * b, 6 * b);
                    let (x0, x1, x2, x3) = (x[i], x[i + 1], x[i + 2], x[i + 3]);
                    r[k] = x0 + 3.0 * x1 * (x2 - 1.0) + x3 * x3 - 1.0;
                    jac(k, i, 1.0);
                    jac(k, i + 1, 3.0 * (x2 - 1.0));
                    jac(k, i + 2, 3.0 * x1);
                    jac(k, i + 3, 2.0 * x3);
                    let s01 = x0 + x1;
                    r[k + 1] = s01 * s01 + (x2 - 1.0) * (x2 - 1.0) - x3 - 3.0;
                    jac(k + 1, i, 2.0 * s01);
                    jac(k + 1, i + 1, 2.0 * s01);
                    jac(k + 1, i + 2, 2.0 * (x2 - 1.0));
                    jac(k + 1, i + 3, -1.0);
                    r[k + 2] = x0 * x1 - x2 * x3;
                    jac(k + 2, i, x1);
                    jac(k + 2, i + 1, x0);
                    jac(k + 2, i + 2, -x3);
                    jac(k + 2, i + 3, -x2);
                    r[k + 3] = 2.0 * x0 * x2 + x1 * x3 - 3.0;
                    jac(k + 3, i, 2.0 * x2);
                    jac(k + 3, i + 1, x3);
                    jac(k + 3, i + 2, 2.0 * x0);
                    jac(k + 3, i + 3, x1);
                    let s = x0 + x1 + x2 + x3;
                    r[k + 4] = s * s + (x0 - 1.0) * (x0 - 1.0);
                    jac(k + 4, i, 2.0 * s + 2.0 * (x0 - 1.0));
                    jac(k + 4, i + 1, 2.0 * s);
                    jac(k + 4, i + 2, 2.0 * s);
                    jac(k + 4, i + 3, 2.0 * s);
                    r[k + 5] = x0 * x1 * x2 * x3 + (x3 - 1.0) * (x3 - 1.0) - 1.0;
                    jac(k + 5, i, x1 * x2 * x3);
                    jac(k + 5, i + 1, x0 * x2 * x3);
                    jac(k + 5, i + 2, x0 * x1 * x3);
                    jac(k + 5, i + 3, x0 * x1 * x2 + 2.0 * (x3 - 1.0));
                }
            }
            ChainedExponential => {
                for i in 0..n - 1 {
                    let k = 2 * i;
                    let (ea, eb) = (x[i].exp(), x[i + 1].exp());
                    r[k] = 4.0 - ea - eb;
                    jac(k, i, -ea);
                    jac(k, i + 1, -eb);
                    let (ea3, eb3) = ((3.0 * x[i]).exp(), (3.0 * x[i + 1]).exp());
                    r[k + 1] = 8.0 - ea3 - eb3;
                    jac(k + 1, i, -3.0 * ea3);
                    jac(k + 1, i + 1, -3.0 * eb3);
                }
            }
            StructuredJacobian => {
                const TAIL: [f64; 5] = [3.0, -1.0, -1.0, 0.5, -1.0];
                let c: f64 = 1.0 + (0..5).map(|t| TAIL[t] * x[n - 5 + t]).sum::<f64>();
                for k in 0..n {
                    let mut v = -2.0 * x[k] * x[k] + 3.0 * x[k] + c;
                    jac(k, k, -4.0 * x[k] + 3.0);
                    if k > 0 {
                        v -= x[k - 1];
                        jac(k, k - 1, -1.0);
                    }
                    if k + 1 < n {
                        v -= 2.0 * x[k + 1];
                        jac(k, k + 1, -2.0);
                    }
                    for (t, coeff) in TAIL.iter().enumerate() {
                        jac(k, n - 5 + t, *coeff);
                    }
                    r[k] = v;
                }
            }
            BroydenTridiagonal => {
                for k in 0..n {
                    let mut v = (3.0 - 2.0 * x[k]) * x[k] + 1.0;
                    jac(k, k, 3.0 - 4.0 * x[k]);
                    if k > 0 {
                        v -= x[k - 1];
                        jac(k, k - 1, -1.0);
                    }
                    if k + 1 < n {
                        v -= 2.0 * x[k + 1];
                        jac(k, k + 1, -2.0);
                    }
                    r[k] = v;
                }
            }
            Trigexp => {
                // sin(a − b) sin(a + b) = (cos 2b − cos 2a) / 2
                let trig = |a: f64, b: f64| (a - b).sin() * (a + b).sin();
                r[0] = 3.0 * x[0].powi(3) + 2.0 * x[1] - 5.0 + trig(x[0], x[1]);
                jac(0, 0, 9.0 * x[0] * x[0] + (2.0 * x[0]).sin());
                jac(0, 1, 2.0 - (2.0 * x[1]).sin());
                for k in 1..n - 1 {
                    let e = (x[k - 1] - x[k]).exp();
                    r[k] = -x[k - 1] * e + x[k] * (4.0 + 3.0 * x[k] * x[k]) + 2.0 * x[k + 1]
                        + trig(x[k], x[k + 1])
                        - 8.0;
                    jac(k, k - 1, -(1.0 + x[k - 1]) * e);
                    jac(k, k, x[k - 1] * e + 4.0 + 9.0 * x[k] * x[k] + (2.0 * x[k]).sin());
                    jac(k, k + 1, 2.0 - (2.0 * x[k + 1]).sin());
                }
                let e = (x[n - 2] - x[n - 1]).exp();
                r[n - 1] = -x[n - 2] * e + 4.0 * x[n - 1] - 3.0;
                jac(n - 1, n - 2, -(1.0 + x[n - 2]) * e);
                jac(n - 1, n - 1, x[n - 2] * e + 4.0);
            }
            Nondquar => {
                r[0] = x[0] - x[1];
                jac(0, 0, 1.0);
                jac(0, 1, -1.0);
                for k in 1..n - 1 {
                    let s = x[k - 1] + x[k] + x[n - 1];
                    r[k] = s * s;
                    jac(k, k - 1, 2.0 * s);
                    jac(k, k, 2.0 * s);
                    jac(k, n - 1, 2.0 * s);
                }
                r[n - 1] = x[n - 2] + x[n - 1];
                jac(n - 1, n - 2, 1.0);
                jac(n - 1, n - 1, 1.0);
            }
            Sinquad => {
                let x1 = x[0];
                let xn = x[n - 1];
                r[0] = (x1 - 1.0) * (x1 - 1.0);
                jac(0, 0, 2.0 * (x1 - 1.0));
                for k in 1..n - 1 {
                    let t = x[k] - xn;
                    r[k] = t.sin() - x1 * x1 + x[k] * x[k];
                    jac(k, 0, -2.0 * x1);
                    jac(k, k, t.cos() + 2.0 * x[k]);
                    jac(k, n - 1, -t.cos());
                }
                r[n - 1] = xn * xn - x1 * x1;
                jac(n - 1, n - 1, 2.0 * xn);
                jac(n - 1, 0, -2.0 * x1);
            }
            Edensch => {
                for i in 0..n - 1 {
                    let k = 3 * i;
                    let d = x[i] - 2.0;
                    r[k] = d * d;
                    jac(k, i, 2.0 * d);
                    r[k + 1] = x[i] * x[i + 1] - 2.0 * x[i + 1];
                    jac(k + 1, i, x[i + 1]);
                    jac(k + 1, i + 1, x[i] - 2.0);
                    r[k + 2] = x[i + 1] + 1.0;
                    jac(k + 2, i + 1, 1.0);
                }
            }
            Genhumps => {
                let w = 0.05f64.sqrt();
                for i in 0..n - 1 {
                    let k = 3 * i;
                    let (sa, sb) = ((2.0 * x[i]).sin(), (2.0 * x[i + 1]).sin());
                    r[k] = sa * sb;
                    jac(k, i, 2.0 * (2.0 * x[i]).cos() * sb);
                    jac(k, i + 1, 2.0 * sa * (2.0 * x[i + 1]).cos());
                    r[k + 1] = w * x[i];
                    jac(k + 1, i, w);
                    r[k + 2] = w * x[i + 1];
                    jac(k + 2, i + 1, w);
                }
            }
            ErrinrosModified => {
                for i in 0..n - 1 {
                    let k = 2 * i;
                    let a = errinros_alpha(i + 2);
                    let c = 16.0 * a * a;
                    r[k] = x[i] - c * x[i + 1] * x[i + 1];
                    jac(k, i, 1.0);
                    jac(k, i + 1, -2.0 * c * x[i + 1]);
                    r[k + 1] = x[i + 1] - 1.0;
                    jac(k + 1, i + 1, 1.0);
                }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn all(n: usize) -> Vec<Luksan> {
        PROBLEM_IDS.iter().map(|id| Luksan::from_id(id, n).unwrap()).collect()
    }

    #[test]
    fn residual_counts_match_the_table() {
        let expected = [
            198, 294, 196, 245, 100, 100, 198, 294, 198, 100, 100, 100, 100, 100, 297, 297, 198,
        ];
        for (p, m) in all(100).iter().zip(expected) {
            assert_eq!(p.dim(), 100, "{}", p.id());
            assert_eq!(p.residual_count(), m, "{}", p.id());
            assert_eq!(p.residuals(&p.initial_point()).len(), m);
        }
    }

    #[test]
    fn odd_dimension_rejected_for_block_problems() {
        for id in ["p2", "p3", "p4", "p8"] {
            assert!(matches!(
                Luksan::from_id(id, 99),
                Err(ProblemError::BadDimension { .. })
            ));
        }
        assert!(Luksan::from_id("p5", 99).is_ok());
    }

    #[test]
    fn rosenbrock_zero_at_ones() {
        let p = Luksan::from_id("p1", 100).unwrap();
        let ones = vec![1.0; 100];
        assert!(p.residuals(&ones).iter().all(|&r| r == 0.0));
        assert_eq!(p.value(&ones), 0.0);
        assert!(p.gradient(&ones).iter().all(|&g| g == 0.0));
    }

    #[test]
    fn reconstructed_systems_vanish_at_their_roots() {
        let ones = vec![1.0; 100];
        assert_eq!(Luksan::from_id("p12", 100).unwrap().value(&ones), 0.0);
        let p17 = Luksan::from_id("p17", 100).unwrap();
        assert!(p17.value(&p17.initial_point()) > 0.0);
    }

    #[test]
    fn starting_values_positive_and_finite() {
        for p in all(100) {
            let f = p.value(&p.initial_point());
            assert!(f.is_finite() && f > 0.0, "{}: {f}", p.id());
        }
    }

    #[test]
    fn unknown_id() {
        assert!(matches!(
            Luksan::from_id("p0", 100),
            Err(ProblemError::UnknownId(_))
        ));
    }
}
