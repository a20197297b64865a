use lumadim::calibration::CalibrationCurve;
use lumadim::display::{DisplayModel, PowerModel};
use lumadim::scheduler::{
    constant_baseline, optimize_schedule, pairwise_dispersion, validate_schedule, Budget, OptimizerConfig,
};
use lumadim::table::{LossTable, DEFAULT_KNOTS};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn brute_force(v: &[f64]) -> f64 {
    let mut s = 0.0;
    for i in 0..v.len() {
        for j in i + 1..v.len() {
            s += (v[i] - v[j]).abs();
        }
    }
    s
}

/// Rows that fall from `top` at the lowest knot to 0 at full brightness.
fn random_table(rng: &mut ChaCha8Rng, frames: usize) -> LossTable {
    let knots = DEFAULT_KNOTS.to_vec();
    let mut loss = Vec::with_capacity(frames);
    let mut means = Vec::with_capacity(frames);
    let mut mean = rng.gen_range(20.0..200.0);
    for _ in 0..frames {
        let top: f64 = rng.gen_range(0.05..0.8);
        let curve: f64 = rng.gen_range(1.0..4.0);
        loss.push(knots.iter().map(|&b| top * ((1.0 - b) / 0.95).powf(curve)).collect());
        mean = (mean * rng.gen_range(0.9..1.1f64)).clamp(5.0, 400.0);
        means.push(mean);
    }
    LossTable::new(knots, loss, means).unwrap()
}

proptest! {
    #[test]
    fn dispersion_is_exact_on_a_dyadic_grid(seed in any::<u64>(), n in 0usize..200) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let v: Vec<f64> = (0..n).map(|_| rng.gen_range(0..1 << 20) as f64 / 1024.0).collect();
        prop_assert_eq!(pairwise_dispersion(&v), brute_force(&v));
    }

    #[test]
    fn dispersion_matches_brute_force(seed in any::<u64>(), n in 0usize..200) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let v: Vec<f64> = (0..n).map(|_| rng.gen_range(-5.0..5.0)).collect();
        let (fast, slow) = (pairwise_dispersion(&v), brute_force(&v));
        prop_assert!((fast - slow).abs() <= 1e-12 * slow.max(1.0));
    }

    #[test]
    fn dispersion_is_shift_and_permutation_invariant(seed in any::<u64>(), shift in -10.0f64..10.0) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let v: Vec<f64> = (0..50).map(|_| rng.gen_range(0..4096) as f64 / 64.0).collect();
        let mut w: Vec<f64> = v.iter().rev().map(|x| x + shift.round()).collect();
        w.rotate_left(7);
        prop_assert_eq!(pairwise_dispersion(&v), pairwise_dispersion(&w));
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn optimized_schedules_are_feasible_and_reproducible(
        seed in any::<u64>(),
        frames in 2usize..40,
        fraction in 0.2f64..0.9,
    ) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let table = random_table(&mut rng, frames);
        let (power, display) = (PowerModel::default(), DisplayModel::default());
        let curve = CalibrationCurve::default_synthetic();
        let target = Budget::BrightnessFraction(fraction).target_power(&table, &power, &display).unwrap();
        let cfg = OptimizerConfig { frame_dt: 1.0, seed, ..OptimizerConfig::new(target) };
        let sched = optimize_schedule(&table, &power, &display, &curve, &cfg).unwrap();
        let report = validate_schedule(&sched, &table, &power, &display, &curve, &cfg);
        prop_assert!(report.feasible, "{report:?}");
        prop_assert!(sched.b.iter().all(|&b| (0.05..=1.0).contains(&b)));

        let again = optimize_schedule(&table, &power, &display, &curve, &cfg).unwrap();
        prop_assert_eq!(&again.b, &sched.b);

        let base = constant_baseline(&table, &power, &display, &cfg).unwrap();
        let base_report = validate_schedule(&base, &table, &power, &display, &curve, &cfg);
        if base_report.feasible {
            prop_assert!(sched.loss_std() <= base.loss_std() + 1e-9);
        }
    }
}

#[test]
fn identical_frames_get_a_constant_schedule() {
    let row: Vec<f64> = DEFAULT_KNOTS.iter().map(|b| 0.4 * (1.0 - b)).collect();
    let table = LossTable::new(DEFAULT_KNOTS.to_vec(), vec![row; 30], vec![80.0; 30]).unwrap();
    let (power, display) = (PowerModel::default(), DisplayModel::default());
    let curve = CalibrationCurve::default_synthetic();
    let target = Budget::BrightnessFraction(0.45)
        .target_power(&table, &power, &display)
        .unwrap();
    let cfg = OptimizerConfig::new(target);
    let sched = optimize_schedule(&table, &power, &display, &curve, &cfg).unwrap();
    let base = constant_baseline(&table, &power, &display, &cfg).unwrap();
    assert!(sched.converged);
    for b in &sched.b {
        assert!((b - base.b[0]).abs() <= 1e-6, "{b} vs {}", base.b[0]);
    }
    assert!(sched.objective <= 1e-4);
}

#[test]
fn budget_outside_the_achievable_range_is_infeasible() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let table = random_table(&mut rng, 10);
    let (power, display) = (PowerModel::default(), DisplayModel::default());
    let curve = CalibrationCurve::default_synthetic();
    for target in [0.1, 5.0] {
        let err = optimize_schedule(&table, &power, &display, &curve, &OptimizerConfig::new(target)).unwrap_err();
        assert!(matches!(err, lumadim::Error::InfeasibleBudget { .. }), "{err}");
    }
}
