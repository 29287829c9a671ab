use irerm::irerm::{check_irerm_invariants, run, IrermConfig};
use irerm::oracle::{NoiseSpec, NoisyLeastSquares};
use irerm::problems::{by_id, PROBLEM_IDS};
use irerm::storm::{check_storm_invariants, storm_run, StormConfig};
use irerm::trace::{TerminationReason, Variant};
use proptest::prelude::*;

fn variant() -> impl Strategy<Value = Variant> {
    prop_oneof![Just(Variant::V1), Just(Variant::V2)]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn irerm_runs_satisfy_invariants(
        problem in 0..PROBLEM_IDS.len(),
        seed in any::<u64>(),
        sigma in 0.0..0.5f64,
        variant in variant(),
        r in 0.1..0.9f64,
    ) {
        let id = PROBLEM_IDS[problem];
        let p = by_id(id, 10).unwrap();
        let oracle = NoisyLeastSquares::new(p.as_ref(), NoiseSpec::new(sigma, 0).unwrap());
        let mut c = IrermConfig::new(variant, 10);
        c.r = r;
        c.budget = 5_000;
        c.kmax = 60;
        let trace = run(&oracle, &c, id, seed).unwrap();
        let violations = check_irerm_invariants(&trace, &c);
        prop_assert!(violations.is_empty(), "{id}: {:?}", violations);
        prop_assert!(!matches!(trace.termination, TerminationReason::InvariantViolation(_)));

        let mut theta = c.theta0;
        for rec in &trace.records {
            let t = rec.theta.unwrap();
            prop_assert!(t <= theta && t >= c.theta_min);
            theta = t;
        }
        let last = trace.last.theta.unwrap();
        prop_assert!(last <= theta && last >= c.theta_min);
    }

    #[test]
    fn storm_runs_satisfy_invariants(
        problem in 0..PROBLEM_IDS.len(),
        seed in any::<u64>(),
        sigma in 0.0..0.5f64,
        variant in variant(),
    ) {
        let id = PROBLEM_IDS[problem];
        let p = by_id(id, 10).unwrap();
        let oracle = NoisyLeastSquares::new(p.as_ref(), NoiseSpec::new(sigma, 0).unwrap());
        let mut c = StormConfig::new(variant, 10);
        c.budget = 5_000;
        c.kmax = 60;
        let trace = storm_run(&oracle, &c, id, seed).unwrap();
        let violations = check_storm_invariants(&trace, &c);
        prop_assert!(violations.is_empty(), "{id}: {:?}", violations);
    }

    #[test]
    fn runs_are_reproducible_from_the_seed(seed in any::<u64>(), variant in variant()) {
        let p = by_id("p5", 10).unwrap();
        let oracle = NoisyLeastSquares::new(p.as_ref(), NoiseSpec::new(0.1, 0).unwrap());
        let mut c = IrermConfig::new(variant, 10);
        c.budget = 3_000;
        c.kmax = 40;
        prop_assert_eq!(run(&oracle, &c, "p5", seed).unwrap(), run(&oracle, &c, "p5", seed).unwrap());
    }
}

#[test]
fn budget_is_checked_before_each_iteration() {
    let p = by_id("p5", 10).unwrap();
    let oracle = NoisyLeastSquares::new(p.as_ref(), NoiseSpec::new(0.1, 0).unwrap());
    let mut c = IrermConfig::new(Variant::V2, 10);
    c.budget = 1_000;
    let trace = run(&oracle, &c, "p5", 3).unwrap();
    assert_eq!(trace.termination, TerminationReason::Budget);
    let before_last = trace.records.last().unwrap().cost_after - trace.records.last().unwrap().samples_charged;
    assert!(before_last < c.budget);
    assert!(trace.final_cost() >= c.budget);
}
