use lumadim::calibration::{fit_logistic_threshold, fit_threshold_curve, threshold_offset, ThresholdTrial, LAPSE_RATE};
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// 500 ramps with slopes evenly spaced over `midpoint ± 4 scale`, answered
/// by a simulated observer with the fitted model's own lapse rate.
fn observer_trials(midpoint: f64, scale: f64, count: usize, seed: u64) -> Vec<ThresholdTrial> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count)
        .map(|k| {
            let slope = midpoint - 4.0 * scale + 8.0 * scale * k as f64 / (count - 1) as f64;
            let z = (slope - midpoint) / scale;
            let p = LAPSE_RATE / 2.0 + (1.0 - LAPSE_RATE) / (1.0 + (-z).exp());
            ThresholdTrial {
                start_luminance: 50.0,
                slope,
                detected: rng.gen::<f64>() < p,
            }
        })
        .collect()
}

#[test]
fn logistic_threshold_is_recovered() {
    let (midpoint, scale) = (5.0, 1.0);
    let truth = midpoint + scale * threshold_offset();
    let fit = fit_logistic_threshold(&observer_trials(midpoint, scale, 500, 1)).unwrap();
    assert!(!fit.separated);
    assert!(
        (fit.threshold - truth).abs() <= 0.05 * truth,
        "{} vs {truth}",
        fit.threshold
    );

    // across many observers the estimate is unbiased and mostly within 5%
    let estimates: Vec<f64> = (0..200)
        .map(|seed| {
            fit_logistic_threshold(&observer_trials(midpoint, scale, 500, seed))
                .unwrap()
                .threshold
        })
        .collect();
    let within = estimates.iter().filter(|t| (*t - truth).abs() <= 0.05 * truth).count();
    let mean = estimates.iter().sum::<f64>() / estimates.len() as f64;
    assert!(within >= 180, "{within} of 200 within 5%");
    assert!((mean - truth).abs() <= 0.01 * truth, "mean {mean} vs {truth}");
}

#[test]
fn quartic_through_five_points_is_exact() {
    let coeffs = [0.4, 0.21, -1.3e-4, 2.0e-7, -1.0e-10];
    let eval = |l: f64| coeffs.iter().rev().fold(0.0, |acc, c| acc * l + c);
    let points: Vec<(f64, f64)> = [1.0, 40.0, 200.0, 500.0, 800.0].iter().map(|&l| (l, eval(l))).collect();
    let curve = fit_threshold_curve(&points).unwrap();
    for &(l, s) in &points {
        assert!(
            (curve.max_rate(l) - s).abs() <= 1e-6,
            "at {l}: {} vs {s}",
            curve.max_rate(l)
        );
    }
}

#[test]
fn quartic_matches_the_normal_equations() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let points: Vec<(f64, f64)> = (0..50)
        .map(|_| {
            let l: f64 = rng.gen_range(1.0..800.0);
            (l, 0.5 + 0.2 * l + 1e-5 * l * l + rng.gen_range(-2.0..2.0))
        })
        .collect();
    let curve = fit_threshold_curve(&points).unwrap();

    // oracle: normal equations on a [-1, 1] abscissa, Cholesky solve
    let (lo, hi) = points
        .iter()
        .fold((f64::MAX, f64::MIN), |(a, b), p| (a.min(p.0), b.max(p.0)));
    let t = |l: f64| (2.0 * l - lo - hi) / (hi - lo);
    let a = DMatrix::from_fn(points.len(), 5, |i, k| t(points[i].0).powi(k as i32));
    let y = DVector::from_iterator(points.len(), points.iter().map(|p| p.1));
    let coef = (a.transpose() * &a).cholesky().unwrap().solve(&(a.transpose() * y));
    let oracle = |l: f64| (0..5).map(|k| coef[k] * t(l).powi(k as i32)).sum::<f64>();

    let scale = points.iter().fold(0.0f64, |m, p| m.max(p.1.abs()));
    for i in 0..=100 {
        let l = lo + (hi - lo) * i as f64 / 100.0;
        let (got, want) = (curve.max_rate(l), oracle(l));
        assert!((got - want).abs() <= 1e-8 * scale, "at {l}: {got} vs {want}");
    }
}
