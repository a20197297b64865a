//! Fitting the visibility threshold for brightness modulation.
//!
//! Raw yes/no trials at one luminance are fitted with a logistic
//! psychometric function and reduced to the slope detected 75% of the time.
//! Thresholds across luminances are then fitted with a quartic, which gives
//! the largest undetectable rate of luminance change at any adaptation level.

use std::path::Path;

use std::fmt::Write as _;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::format::sig9;

/// Lapse rate of the psychometric function: the observer misses or guesses
/// on this fraction of trials regardless of the stimulus.
pub const LAPSE_RATE: f64 = 0.02;

/// Detection probability that defines the threshold.
pub const THRESHOLD_PROBABILITY: f64 = 0.75;

/// One presentation of a linear luminance ramp.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ThresholdTrial {
    pub start_luminance: f64,
    /// Ramp steepness, cd/m² per second.
    pub slope: f64,
    pub detected: bool,
}

/// Maximum-likelihood fit of
/// `p(detect | s) = λ/2 + (1 - λ) σ((s - midpoint) / scale)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LogisticFit {
    pub midpoint: f64,
    pub scale: f64,
    /// Slope detected with probability 0.75.
    pub threshold: f64,
    /// True when responses were perfectly separated by slope; the fit is then
    /// the limit of vanishing scale with the midpoint centered in the gap.
    pub separated: bool,
}

impl LogisticFit {
    pub fn probability(&self, slope: f64) -> f64 {
        detect_probability((slope - self.midpoint) / self.scale)
    }
}

#[inline]
fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

#[inline]
fn detect_probability(z: f64) -> f64 {
    LAPSE_RATE / 2.0 + (1.0 - LAPSE_RATE) * sigmoid(z)
}

/// Standardized offset `z` at which the lapse-adjusted curve reaches 0.75.
pub fn threshold_offset() -> f64 {
    let s = (THRESHOLD_PROBABILITY - LAPSE_RATE / 2.0) / (1.0 - LAPSE_RATE);
    (s / (1.0 - s)).ln()
}

fn log_likelihood(trials: &[ThresholdTrial], mu: f64, beta: f64) -> f64 {
    trials
        .iter()
        .map(|t| {
            let p = detect_probability((t.slope - mu) / beta);
            if t.detected {
                p.ln()
            } else {
                (1.0 - p).ln()
            }
        })
        .sum()
}

/// Fits the psychometric function to trials recorded at one luminance and
/// returns the 75% point.
pub fn fit_logistic_threshold(trials: &[ThresholdTrial]) -> Result<LogisticFit> {
    if let Some(t) = trials.iter().find(|t| !(t.slope >= 0.0 && t.slope.is_finite())) {
        return Err(Error::invalid(format!(
            "trial slope must be finite and >= 0, got {}",
            t.slope
        )));
    }
    let hits = trials.iter().filter(|t| t.detected).count();
    if hits == 0 || hits == trials.len() {
        return Err(Error::NoThreshold(format!(
            "{hits} of {} trials detected; need mixed responses",
            trials.len()
        )));
    }
    // canonical order so the result does not depend on trial order
    let mut sorted = trials.to_vec();
    sorted.sort_by(|a, b| a.slope.total_cmp(&b.slope).then(a.detected.cmp(&b.detected)));
    let lo = sorted[0].slope;
    let hi = sorted[sorted.len() - 1].slope;
    if hi <= lo {
        return Err(Error::NoThreshold("all trials share one slope".into()));
    }
    let range = hi - lo;
    let z75 = threshold_offset();

    let max_miss = sorted
        .iter()
        .filter(|t| !t.detected)
        .map(|t| t.slope)
        .fold(f64::MIN, f64::max);
    let min_hit = sorted
        .iter()
        .filter(|t| t.detected)
        .map(|t| t.slope)
        .fold(f64::MAX, f64::min);
    if max_miss < min_hit {
        let midpoint = 0.5 * (max_miss + min_hit);
        let scale = 1e-9 * range;
        return Ok(LogisticFit {
            midpoint,
            scale,
            threshold: midpoint + z75 * scale,
            separated: true,
        });
    }

    let beta_min = 1e-6 * range;
    let beta_max = 1e3 * range;
    let mean = sorted.iter().map(|t| t.slope).sum::<f64>() / sorted.len() as f64;
    let (mut mu, mut eta) = (mean, (0.25 * range).ln());
    let mut ll = log_likelihood(&sorted, mu, eta.exp());
    let mut damping = 1e-3;

    // Fisher scoring with Levenberg damping on (midpoint, ln scale)
    for _ in 0..500 {
        let beta = eta.exp();
        let (mut g0, mut g1, mut i00, mut i01, mut i11) = (0.0, 0.0, 0.0, 0.0, 0.0);
        for t in &sorted {
            let z = (t.slope - mu) / beta;
            let s = sigmoid(z);
            let p = detect_probability(z);
            let dp = (1.0 - LAPSE_RATE) * s * (1.0 - s);
            let (d_mu, d_eta) = (-dp / beta, -dp * z);
            let y = if t.detected { 1.0 } else { 0.0 };
            let w = 1.0 / (p * (1.0 - p));
            g0 += (y - p) * w * d_mu;
            g1 += (y - p) * w * d_eta;
            i00 += w * d_mu * d_mu;
            i01 += w * d_mu * d_eta;
            i11 += w * d_eta * d_eta;
        }
        let mut accepted = false;
        let mut step = (0.0, 0.0);
        while damping < 1e12 {
            let a00 = i00 * (1.0 + damping) + 1e-300;
            let a11 = i11 * (1.0 + damping) + 1e-300;
            let det = a00 * a11 - i01 * i01;
            if det > 0.0 {
                step = ((a11 * g0 - i01 * g1) / det, (a00 * g1 - i01 * g0) / det);
                let cand_mu = mu + step.0;
                let cand_eta = (eta + step.1).clamp(beta_min.ln(), beta_max.ln());
                let cand_ll = log_likelihood(&sorted, cand_mu, cand_eta.exp());
                if cand_ll.is_finite() && cand_ll >= ll {
                    step = (cand_mu - mu, cand_eta - eta);
                    mu = cand_mu;
                    eta = cand_eta;
                    ll = cand_ll;
                    accepted = true;
                    damping = (damping * 0.3).max(1e-9);
                    break;
                }
            }
            damping *= 10.0;
        }
        if !accepted || (step.0.abs() <= 1e-12 * range && step.1.abs() <= 1e-12) {
            break;
        }
    }

    let scale = eta.exp();
    Ok(LogisticFit {
        midpoint: mu,
        scale,
        threshold: mu + z75 * scale,
        separated: false,
    })
}

/// Quartic `ΔL_max(L) = Σ coeffs[k] L^k` valid on `domain`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationCurve {
    /// Polynomial coefficients in ascending degree.
    pub coefficients: [f64; 5],
    /// `[lum_min, lum_max]` in cd/m²; queries are clamped into it.
    pub domain: [f64; 2],
    pub provenance: String,
}

const SYNTHETIC_POINTS: &str = include_str!("../data/calibration_synthetic.csv");

impl CalibrationCurve {
    pub fn validate(&self) -> Result<()> {
        let [lo, hi] = self.domain;
        if !(lo.is_finite() && hi.is_finite() && lo < hi) {
            return Err(Error::invalid(format!(
                "curve domain must be finite with min < max, got {:?}",
                self.domain
            )));
        }
        if self.coefficients.iter().any(|c| !c.is_finite()) {
            return Err(Error::invalid("curve coefficients must be finite"));
        }
        Ok(())
    }

    /// The bundled curve, fitted to illustrative points spanning 1–800
    /// cd/m². It is not a measurement; replace it with real data.
    pub fn default_synthetic() -> Self {
        let points = parse_threshold_points(SYNTHETIC_POINTS).expect("bundled calibration points parse");
        let mut curve = fit_threshold_curve(&points).expect("bundled calibration points fit");
        curve.provenance = "SYNTHETIC: illustrative threshold slopes bundled with lumadim, not measured".into();
        curve
    }

    #[inline]
    fn poly(&self, l: f64) -> f64 {
        self.coefficients.iter().rev().fold(0.0, |acc, c| acc * l + c)
    }

    #[inline]
    fn poly_derivative(&self, l: f64) -> f64 {
        let c = &self.coefficients;
        ((4.0 * c[4] * l + 3.0 * c[3]) * l + 2.0 * c[2]) * l + c[1]
    }

    /// Largest undetectable luminance slope at adaptation `l`, cd/m²/s.
    #[inline]
    pub fn max_rate(&self, l: f64) -> f64 {
        self.poly(l.clamp(self.domain[0], self.domain[1])).max(0.0)
    }

    /// Derivative of [`CalibrationCurve::max_rate`] with respect to `l`
    /// (one-sided at the clamps).
    #[inline]
    pub fn max_rate_derivative(&self, l: f64) -> f64 {
        if l < self.domain[0] || l > self.domain[1] || self.poly(l) <= 0.0 {
            0.0
        } else {
            self.poly_derivative(l)
        }
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)? + "\n")
    }

    pub fn read_json(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::Data {
            path: path.to_owned(),
            message: e.to_string(),
        })?;
        let curve: CalibrationCurve = serde_json::from_str(&text).map_err(|e| Error::Data {
            path: path.to_owned(),
            message: e.to_string(),
        })?;
        curve.validate()?;
        Ok(curve)
    }
}

/// Free-function form of [`CalibrationCurve::max_rate`].
pub fn max_rate(curve: &CalibrationCurve, adapt_luminance: f64) -> f64 {
    curve.max_rate(adapt_luminance)
}

fn binomial(n: usize, k: usize) -> f64 {
    (0..k).fold(1.0, |acc, i| acc * (n - i) as f64 / (i + 1) as f64)
}

/// Least-squares quartic through `(luminance, threshold_slope)` points.
///
/// Abscissae are mapped onto `[-1, 1]` and the system is solved by
/// Householder QR; coefficients are then expanded back to powers of
/// luminance.
pub fn fit_threshold_curve(points: &[(f64, f64)]) -> Result<CalibrationCurve> {
    if points.iter().any(|(x, y)| !(x.is_finite() && y.is_finite())) {
        return Err(Error::invalid("calibration points must be finite"));
    }
    let mut xs: Vec<f64> = points.iter().map(|p| p.0).collect();
    xs.sort_by(f64::total_cmp);
    xs.dedup();
    if xs.len() < 5 {
        return Err(Error::RankDeficient(format!(
            "{} distinct luminances, a quartic needs 5",
            xs.len()
        )));
    }
    let (lo, hi) = (xs[0], xs[xs.len() - 1]);
    let center = 0.5 * (lo + hi);
    let half = 0.5 * (hi - lo);

    let n = points.len();
    let a = DMatrix::from_fn(n, 5, |i, k| ((points[i].0 - center) / half).powi(k as i32));
    let y = DVector::from_iterator(n, points.iter().map(|p| p.1));
    let qr = a.qr();
    let r = qr.r();
    let rmax = (0..5).map(|i| r[(i, i)].abs()).fold(0.0, f64::max);
    if (0..5).any(|i| r[(i, i)].abs() <= 1e-12 * rmax) {
        return Err(Error::RankDeficient("design matrix is numerically singular".into()));
    }
    let qty = qr.q().transpose() * y;
    let scaled = r
        .solve_upper_triangular(&qty.rows(0, 5).into_owned())
        .ok_or_else(|| Error::RankDeficient("triangular solve failed".into()))?;

    // Σ a_k ((x - c)/h)^k expanded into powers of x
    let mut coefficients = [0.0; 5];
    for (k, ak) in scaled.iter().enumerate() {
        let hk = half.powi(k as i32);
        for (j, coeff) in coefficients.iter_mut().enumerate().take(k + 1) {
            *coeff += ak / hk * binomial(k, j) * (-center).powi((k - j) as i32);
        }
    }
    Ok(CalibrationCurve {
        coefficients,
        domain: [lo, hi],
        provenance: format!("least-squares quartic over {n} points"),
    })
}

fn csv_rows(text: &str, what: &'static str, want: &[&str]) -> Result<Vec<Vec<f64>>> {
    let mut lines = text.lines().filter(|l| !l.trim().is_empty());
    let header: Vec<&str> = lines
        .next()
        .ok_or_else(|| Error::parse(what, "empty file"))?
        .split(',')
        .map(str::trim)
        .collect();
    if header != want {
        return Err(Error::parse(what, format!("expected header {}", want.join(","))));
    }
    lines
        .enumerate()
        .map(|(n, line)| {
            let vals = line
                .split(',')
                .map(|v| v.trim().parse::<f64>())
                .collect::<std::result::Result<Vec<_>, _>>()
                .map_err(|e| Error::parse(what, format!("row {n}: {e}")))?;
            if vals.len() != want.len() {
                return Err(Error::parse(what, format!("row {n} has {} fields", vals.len())));
            }
            Ok(vals)
        })
        .collect()
}

/// Parses `luminance,threshold_slope` rows.
pub fn parse_threshold_points(text: &str) -> Result<Vec<(f64, f64)>> {
    Ok(csv_rows(text, "threshold points", &["luminance", "threshold_slope"])?
        .into_iter()
        .map(|r| (r[0], r[1]))
        .collect())
}

/// Parses `luminance,slope,detected` rows (`detected` is 0 or 1).
pub fn parse_trials(text: &str) -> Result<Vec<ThresholdTrial>> {
    csv_rows(text, "threshold trials", &["luminance", "slope", "detected"])?
        .into_iter()
        .enumerate()
        .map(|(n, r)| {
            let detected = match r[2] {
                0.0 => false,
                1.0 => true,
                v => {
                    return Err(Error::parse(
                        "threshold trials",
                        format!("row {n}: detected must be 0 or 1, got {v}"),
                    ))
                }
            };
            Ok(ThresholdTrial {
                start_luminance: r[0],
                slope: r[1],
                detected,
            })
        })
        .collect()
}

/// Fits one threshold per distinct luminance, in ascending luminance order.
pub fn thresholds_by_luminance(trials: &[ThresholdTrial]) -> Result<Vec<(f64, f64)>> {
    let mut lums: Vec<f64> = trials.iter().map(|t| t.start_luminance).collect();
    lums.sort_by(f64::total_cmp);
    lums.dedup();
    lums.into_iter()
        .map(|l| {
            let group: Vec<_> = trials.iter().copied().filter(|t| t.start_luminance == l).collect();
            let fit = fit_logistic_threshold(&group).map_err(|e| Error::NoThreshold(format!("at {l} cd/m²: {e}")))?;
            Ok((l, fit.threshold))
        })
        .collect()
}

/// Simulated observer whose 75% point at luminance `L` is
/// `curve.max_rate(L)`, with a psychometric scale of a fifth of that
/// threshold. Each level gets `trials_per_level` ramps with slopes evenly
/// spaced over `[0, 2.5 × threshold]`; responses are drawn from a ChaCha8
/// stream seeded with `seed`.
pub fn synthetic_trials(
    curve: &CalibrationCurve,
    luminances: &[f64],
    trials_per_level: usize,
    seed: u64,
) -> Vec<ThresholdTrial> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut trials = Vec::with_capacity(luminances.len() * trials_per_level);
    for &l in luminances {
        let threshold = curve.max_rate(l);
        let scale = 0.2 * threshold;
        let midpoint = threshold - scale * threshold_offset();
        for k in 0..trials_per_level {
            let slope = 2.5 * threshold * k as f64 / (trials_per_level.max(2) - 1) as f64;
            let p = detect_probability((slope - midpoint) / scale);
            trials.push(ThresholdTrial {
                start_luminance: l,
                slope,
                detected: rng.gen::<f64>() < p,
            });
        }
    }
    trials
}

/// CSV with columns `luminance,slope,detected`, readable by [`parse_trials`].
pub fn trials_to_csv(trials: &[ThresholdTrial]) -> String {
    let mut out = String::from("luminance,slope,detected\n");
    for t in trials {
        let _ = writeln!(
            out,
            "{},{},{}",
            sig9(t.start_luminance),
            sig9(t.slope),
            t.detected as u8
        );
    }
    out
}

/// CSV with columns `luminance,threshold_slope`, readable by
/// [`parse_threshold_points`].
pub fn threshold_points_to_csv(points: &[(f64, f64)]) -> String {
    let mut out = String::from("luminance,threshold_slope\n");
    for (l, s) in points {
        let _ = writeln!(out, "{},{}", sig9(*l), sig9(*s));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn trial(slope: f64, detected: bool) -> ThresholdTrial {
        ThresholdTrial {
            start_luminance: 100.0,
            slope,
            detected,
        }
    }

    #[test]
    fn threshold_offset_value() {
        // logit((0.75 - 0.01) / 0.98)
        let s: f64 = 0.74 / 0.98;
        assert!((threshold_offset() - (s / (1.0 - s)).ln()).abs() < 1e-15);
    }

    #[test]
    fn uniform_responses_have_no_threshold() {
        let none: Vec<_> = (0..20).map(|i| trial(i as f64, false)).collect();
        assert!(matches!(fit_logistic_threshold(&none), Err(Error::NoThreshold(_))));
        let all: Vec<_> = (0..20).map(|i| trial(i as f64, true)).collect();
        assert!(matches!(fit_logistic_threshold(&all), Err(Error::NoThreshold(_))));
        let one_slope = vec![trial(2.0, true), trial(2.0, false)];
        assert!(fit_logistic_threshold(&one_slope).is_err());
    }

    #[test]
    fn step_responses_converge_to_the_step() {
        for density in [10usize, 100, 1000] {
            let trials: Vec<_> = (0..=6 * density)
                .map(|i| {
                    let s = i as f64 / density as f64;
                    trial(s, s > 3.0)
                })
                .collect();
            let fit = fit_logistic_threshold(&trials).unwrap();
            assert!(fit.separated);
            assert!((fit.threshold - 3.0).abs() <= 1.0 / density as f64);
        }
    }

    #[test]
    fn overlapping_responses_fit_a_finite_scale() {
        let mut trials = Vec::new();
        for i in 0..40 {
            let s = i as f64 * 0.25;
            // deterministic pattern: detection rate rises with slope
            for j in 0..10 {
                trials.push(trial(s, (j as f64) < s));
            }
        }
        let fit = fit_logistic_threshold(&trials).unwrap();
        assert!(!fit.separated);
        assert!(fit.scale > 0.1 && fit.scale < 10.0);
        assert!((fit.probability(fit.threshold) - 0.75).abs() < 1e-9);
    }

    #[test]
    fn five_points_are_interpolated() {
        let truth = [3.0, -0.5, 0.02, -1e-4, 2e-7];
        let points: Vec<(f64, f64)> = [1.0, 50.0, 200.0, 500.0, 800.0]
            .iter()
            .map(|&x| (x, truth.iter().rev().fold(0.0, |a, c| a * x + c)))
            .collect();
        let curve = fit_threshold_curve(&points).unwrap();
        for (c, t) in curve.coefficients.iter().zip(truth) {
            assert!(((c - t) / t).abs() < 1e-6, "{c} vs {t}");
        }
        for (x, y) in points {
            assert!((curve.poly(x) - y).abs() <= 1e-6 * y.abs().max(1.0));
        }
    }

    #[test]
    fn constant_data_gives_constant_curve() {
        let points: Vec<_> = (0..9).map(|i| (1.0 + 100.0 * i as f64, 7.25)).collect();
        let curve = fit_threshold_curve(&points).unwrap();
        for i in 0..=100 {
            let l = 1.0 + 8.0 * i as f64;
            assert!((curve.max_rate(l) - 7.25).abs() < 1e-9);
        }
    }

    #[test]
    fn duplicate_luminances_are_rank_deficient() {
        let points = vec![(1.0, 1.0), (1.0, 2.0), (2.0, 3.0), (3.0, 1.0), (3.0, 5.0), (4.0, 2.0)];
        assert!(matches!(fit_threshold_curve(&points), Err(Error::RankDeficient(_))));
    }

    #[test]
    fn max_rate_clamps_domain_and_sign() {
        let curve = CalibrationCurve {
            coefficients: [-10.0, 1.0, 0.0, 0.0, 0.0],
            domain: [5.0, 50.0],
            provenance: String::new(),
        };
        assert_eq!(curve.max_rate(1.0), 0.0); // -10 + 5 < 0
        assert_eq!(curve.max_rate(20.0), 10.0);
        assert_eq!(curve.max_rate(500.0), 40.0);
        assert_eq!(curve.max_rate_derivative(500.0), 0.0);
        assert_eq!(curve.max_rate_derivative(20.0), 1.0);
        let c2 = CalibrationCurve {
            domain: [12.0, 50.0],
            ..curve
        };
        assert_eq!(c2.max_rate(0.0), 2.0);
    }

    #[test]
    fn bundled_curve_is_positive_and_increasing() {
        let curve = CalibrationCurve::default_synthetic();
        assert!(curve.provenance.starts_with("SYNTHETIC"));
        assert_eq!(curve.domain, [1.0, 800.0]);
        let mut prev = 0.0;
        for i in 0..=800 {
            let r = curve.max_rate(1.0 + i as f64 * 0.99875);
            assert!(r > prev);
            prev = r;
        }
    }

    #[test]
    fn csv_parsing() {
        let t = parse_trials("luminance,slope,detected\n10,2.5,1\n10,1,0\n").unwrap();
        assert_eq!(t.len(), 2);
        assert!(t[0].detected && !t[1].detected);
        assert!(parse_trials("luminance,slope,detected\n10,2.5,2\n").is_err());
        assert!(parse_threshold_points("lum,slope\n1,2\n").is_err());
        let p = parse_threshold_points(SYNTHETIC_POINTS).unwrap();
        assert_eq!(p.len(), 9);
    }

    #[test]
    fn synthetic_observer_round_trip() {
        let curve = CalibrationCurve::default_synthetic();
        let levels = [5.0, 50.0, 400.0];
        let trials = synthetic_trials(&curve, &levels, 400, 3);
        assert_eq!(trials, synthetic_trials(&curve, &levels, 400, 3));
        let parsed = parse_trials(&trials_to_csv(&trials)).unwrap();
        assert_eq!(parsed.len(), trials.len());
        for (l, t) in thresholds_by_luminance(&trials).unwrap() {
            let truth = curve.max_rate(l);
            assert!((t - truth).abs() < 0.15 * truth, "{l}: {t} vs {truth}");
        }
        let points = vec![(1.0, 0.5), (2.0, 0.75)];
        assert_eq!(
            parse_threshold_points(&threshold_points_to_csv(&points)).unwrap(),
            points
        );
    }
}
