use irerm::problems::{by_id, LeastSquaresProblem, PROBLEM_IDS};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn central_difference(p: &dyn LeastSquaresProblem, x: &[f64], j: usize) -> f64 {
    let h = 1e-6 * (1.0 + x[j].abs());
    let mut xp = x.to_vec();
    let mut xm = x.to_vec();
    xp[j] += h;
    xm[j] -= h;
    (p.value(&xp) - p.value(&xm)) / (2.0 * h)
}

fn perturbed_start(p: &dyn LeastSquaresProblem, rng: &mut ChaCha8Rng) -> Vec<f64> {
    p.initial_point()
        .into_iter()
        .map(|v| v + 0.3 * (2.0 * rng.gen::<f64>() - 1.0))
        .collect()
}

#[test]
fn analytic_gradients_match_finite_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    for id in PROBLEM_IDS {
        let p = by_id(id, 12).unwrap();
        for trial in 0..3 {
            let x = if trial == 0 {
                p.initial_point()
            } else {
                perturbed_start(p.as_ref(), &mut rng)
            };
            let g = p.gradient(&x);
            let scale = 1.0 + g.iter().fold(0.0f64, |a, v| a.max(v.abs()));
            for j in 0..p.dim() {
                let fd = central_difference(p.as_ref(), &x, j);
                assert!(
                    (g[j] - fd).abs() <= 1e-5 * scale,
                    "{id} trial {trial} component {j}: analytic {} vs fd {fd}",
                    g[j]
                );
            }
        }
    }
}

#[test]
fn weighted_transpose_matches_dense_jacobian() {
    // Build the dense Jacobian column by column from residual differences and
    // compare Jᵀc with the sparse callback product.
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    for id in PROBLEM_IDS {
        let p = by_id(id, 8).unwrap();
        let x = perturbed_start(p.as_ref(), &mut rng);
        let m = p.residual_count();
        let c: Vec<f64> = (0..m).map(|_| rng.gen::<f64>() - 0.5).collect();
        let mut out = vec![0.0; p.dim()];
        p.weighted_jacobian_transpose(&x, &c, &mut out);
        for j in 0..p.dim() {
            let h = 1e-6 * (1.0 + x[j].abs());
            let mut xp = x.clone();
            let mut xm = x.clone();
            xp[j] += h;
            xm[j] -= h;
            let rp = p.residuals(&xp);
            let rm = p.residuals(&xm);
            let col: f64 = (0..m).map(|k| c[k] * (rp[k] - rm[k]) / (2.0 * h)).sum();
            assert!(
                (out[j] - col).abs() <= 1e-5 * (1.0 + col.abs()),
                "{id} column {j}: {} vs {col}",
                out[j]
            );
        }
    }
}

/// Chained Rosenbrock written directly from its scalar formula.
fn rosenbrock_reference(x: &[f64]) -> (f64, Vec<f64>) {
    let n = x.len();
    let mut f = 0.0;
    let mut g = vec![0.0; n];
    for i in 0..n - 1 {
        let a = 10.0 * (x[i] * x[i] - x[i + 1]);
        let b = x[i] - 1.0;
        f += a * a + b * b;
        g[i] += 2.0 * a * 20.0 * x[i] + 2.0 * b;
        g[i + 1] += -20.0 * a;
    }
    (f, g)
}

#[test]
fn rosenbrock_agrees_with_reference() {
    let p = by_id("p1", 20).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for _ in 0..10 {
        let x: Vec<f64> = (0..20).map(|_| 2.0 * rng.gen::<f64>() - 1.0).collect();
        let (f, g) = rosenbrock_reference(&x);
        assert!((p.value(&x) - f).abs() <= 1e-12 * (1.0 + f));
        for (a, b) in p.gradient(&x).iter().zip(&g) {
            assert!((a - b).abs() <= 1e-10 * (1.0 + b.abs()));
        }
    }
}

#[test]
fn default_dimension_builds_every_problem() {
    for id in PROBLEM_IDS {
        let p = by_id(id, 100).unwrap();
        assert_eq!(p.dim(), 100);
        let f0 = p.value(&p.initial_point());
        assert!(f0.is_finite() && f0 > 0.0, "{id}: f(x0) = {f0}");
    }
}
