//! Sequential quadratic programming for the schedule problem.
//!
//! The pairwise-|·| objective is piecewise linear in the losses, so it is
//! smoothed (each `|x|` becomes a Huber function of width `s`) and `s` is
//! driven from 1e-2 down to 1e-6. At each iterate the smoothed objective is
//! modelled by its gradient and a diagonal curvature bound, the rate limit
//! is linearized, and the resulting least-squares subproblem is solved
//! exactly by the interior-point method in [`super::qp`]. Steps are accepted
//! on an ℓ1 merit function (objective + penalty × rate violation); the power
//! equality and the bounds are linear and hold at every iterate.
//!
//! The Hessian of the smoothed objective with respect to the losses is a
//! weighted graph Laplacian `D - W`, which is bounded above by `2D`. Using
//! `2D` (scaled by the squared loss slopes) plus a proximal term gives a
//! diagonal model that over-estimates curvature, so full steps are usually
//! accepted.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::dispersion::{pairwise_dispersion, smoothed_dispersion};
use super::qp::{self, PairRow, QpProblem};
use super::{baseline_factor, check_budget, rate_excess, rate_violated, BrightnessSchedule, OptimizerConfig, RateMode};
use crate::calibration::CalibrationCurve;
use crate::display::{DisplayModel, PowerModel};
use crate::error::Result;
use crate::table::LossTable;

/// Forward-difference step for loss slopes.
const FD_STEP: f64 = 1e-6;
/// Smoothing widths, in loss units, visited in order.
const SMOOTHING: [f64; 5] = [1e-2, 1e-3, 1e-4, 1e-5, 1e-6];
const INITIAL_PENALTY: f64 = 100.0;
const MAX_PENALTY: f64 = 1e8;
const ARMIJO: f64 = 1e-4;

/// Solves the scheduling program; see the module documentation of
/// [`crate::scheduler`]. Returns the best iterate found, with `converged`
/// cleared when first-order conditions or feasibility were not reached
/// within `cfg.max_iter` iterations.
pub fn optimize_schedule(
    table: &LossTable,
    power: &PowerModel,
    display: &DisplayModel,
    curve: &CalibrationCurve,
    cfg: &OptimizerConfig,
) -> Result<BrightnessSchedule> {
    cfg.validate()?;
    power.validate()?;
    display.validate()?;
    curve.validate()?;
    check_budget(cfg.target_power, table, power, display)?;
    let problem = Problem::new(table, power, display, curve, cfg);
    let (b, converged, iterations) = match cfg.rate_mode {
        RateMode::Limit => problem.solve(cfg)?,
        RateMode::Literal => problem.solve_literal(),
    };
    let mut sched = BrightnessSchedule::evaluate(b, table, power, display);
    sched.converged = converged && (sched.mean_power - cfg.target_power).abs() <= cfg.power_tolerance();
    sched.iterations = iterations;
    Ok(sched)
}

struct Problem<'a> {
    table: &'a LossTable,
    curve: &'a CalibrationCurve,
    /// Power coefficients normalized to mean 1 (all zero if power is flat).
    a: Vec<f64>,
    /// `Σ a_i b_i` required by the budget.
    a_rhs: f64,
    means: Vec<f64>,
    row_scale: Vec<f64>,
    dt: f64,
    lower: f64,
    upper: f64,
    target: f64,
    baseline: f64,
    pairs: f64,
}

struct Evaluation {
    merit: f64,
    smoothed: f64,
    violation: f64,
}

impl<'a> Problem<'a> {
    fn new(
        table: &'a LossTable,
        power: &PowerModel,
        display: &DisplayModel,
        curve: &'a CalibrationCurve,
        cfg: &OptimizerConfig,
    ) -> Self {
        let n = table.frame_count();
        let means = table.frame_means().to_vec();
        let raw: Vec<f64> = means.iter().map(|&m| power.power_per_factor(display, m)).collect();
        let scale = raw.iter().sum::<f64>() / n as f64;
        let (a, a_rhs) = if scale > 0.0 {
            (
                raw.iter().map(|r| r / scale).collect(),
                n as f64 * (cfg.target_power - power.intercept) / scale,
            )
        } else {
            (vec![0.0; n], 0.0)
        };
        let row_scale = (0..n.saturating_sub(1))
            .map(|i| means[i].max(means[i + 1]).max(1.0))
            .collect();
        let baseline = baseline_factor(cfg.target_power, table, power, display).unwrap_or(1.0);
        Problem {
            table,
            curve,
            a,
            a_rhs,
            means,
            row_scale,
            dt: cfg.frame_dt,
            lower: table.lowest_knot(),
            upper: 1.0,
            target: cfg.target_power,
            baseline,
            pairs: (n * n.saturating_sub(1) / 2).max(1) as f64,
        }
    }

    fn n(&self) -> usize {
        self.means.len()
    }

    fn has_power_row(&self) -> bool {
        self.a.iter().any(|&a| a > 0.0)
    }

    fn losses(&self, b: &[f64]) -> Vec<f64> {
        b.iter().enumerate().map(|(i, &x)| self.table.interp(i, x)).collect()
    }

    fn loss_slopes(&self, b: &[f64], losses: &[f64]) -> Vec<f64> {
        b.iter()
            .enumerate()
            .map(|(i, &x)| {
                if x + FD_STEP <= self.upper {
                    (self.table.interp(i, x + FD_STEP) - losses[i]) / FD_STEP
                } else {
                    (losses[i] - self.table.interp(i, x - FD_STEP)) / FD_STEP
                }
            })
            .collect()
    }

    /// Scaled rate-limit violation, summed over consecutive pairs.
    fn violation(&self, b: &[f64]) -> f64 {
        (0..self.n().saturating_sub(1))
            .map(|i| {
                let (excess, _) = rate_excess(b[i] * self.means[i], b[i + 1] * self.means[i + 1], self.dt, self.curve);
                (excess * self.dt).max(0.0) / self.row_scale[i]
            })
            .sum()
    }

    fn feasible(&self, b: &[f64]) -> bool {
        (0..self.n().saturating_sub(1)).all(|i| {
            let (excess, limit) = rate_excess(b[i] * self.means[i], b[i + 1] * self.means[i + 1], self.dt, self.curve);
            !rate_violated(excess, limit)
        })
    }

    fn evaluate(&self, b: &[f64], s: f64, penalty: f64) -> Evaluation {
        let smoothed = smoothed_dispersion(&self.losses(b), s).value / self.pairs;
        let violation = self.violation(b);
        Evaluation {
            merit: smoothed + penalty * violation,
            smoothed,
            violation,
        }
    }

    /// Shifts every factor by a common amount, clamped to the bounds, until
    /// the power equality holds.
    fn project_power(&self, b: &mut [f64]) {
        if !self.has_power_row() {
            return;
        }
        let total = |shift: f64| -> f64 {
            b.iter()
                .zip(&self.a)
                .map(|(&x, a)| a * (x + shift).clamp(self.lower, self.upper))
                .sum()
        };
        let mut lo = self.lower - b.iter().cloned().fold(f64::INFINITY, f64::min);
        let mut hi = self.upper - b.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if mid <= lo || mid >= hi {
                break;
            }
            if total(mid) < self.a_rhs {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        let shift = 0.5 * (lo + hi);
        for x in b.iter_mut() {
            *x = (*x + shift).clamp(self.lower, self.upper);
        }
    }

    fn initial_point(&self, cfg: &OptimizerConfig) -> Vec<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        let mut b: Vec<f64> = (0..self.n())
            .map(|_| {
                let jitter = if cfg.delta > 0.0 {
                    rng.gen_range(-cfg.delta..cfg.delta)
                } else {
                    0.0
                };
                (self.baseline + jitter).clamp(self.lower, self.upper)
            })
            .collect();
        self.project_power(&mut b);
        b
    }

    /// Linearized rate rows at `b`, for the step `d`.
    fn rate_rows(&self, b: &[f64]) -> Vec<PairRow> {
        let mut rows = Vec::with_capacity(2 * self.n().saturating_sub(1));
        for i in 0..self.n().saturating_sub(1) {
            let (mi, mj) = (self.means[i], self.means[i + 1]);
            let la = b[i] * mi;
            let delta = b[i + 1] * mj - la;
            let limit = self.dt * self.curve.max_rate(la);
            let slope = self.dt * self.curve.max_rate_derivative(la) * mi;
            let sc = self.row_scale[i];
            rows.push(PairRow {
                first: i,
                c0: (-mi - slope) / sc,
                c1: mj / sc,
                rhs: (limit - delta) / sc,
            });
            rows.push(PairRow {
                first: i,
                c0: (mi - slope) / sc,
                c1: -mj / sc,
                rhs: (limit + delta) / sc,
            });
        }
        rows
    }

    fn solve(&self, cfg: &OptimizerConfig) -> Result<(Vec<f64>, bool, usize)> {
        let n = self.n();
        let mut b = self.initial_point(cfg);
        if n == 1 {
            return Ok((b, true, 0));
        }

        let mut penalty = INITIAL_PENALTY;
        let mut iterations = 0;
        let mut best: Option<(bool, f64, Vec<f64>)> = None;
        // feasible iterates rank by objective; infeasible ones by violation
        let consider = |b: &[f64], best: &mut Option<(bool, f64, Vec<f64>)>| {
            let feasible = self.feasible(b);
            let score = if feasible {
                pairwise_dispersion(&self.losses(b))
            } else {
                self.violation(b)
            };
            let better = match best {
                None => true,
                Some((bf, bs, _)) => (feasible && !*bf) || (feasible == *bf && score < *bs),
            };
            if better {
                *best = Some((feasible, score, b.to_vec()));
            }
        };
        consider(&b, &mut best);

        let mut level_converged = false;
        let mut proximal: Option<f64> = None;
        'levels: for (level, &s) in SMOOTHING.iter().enumerate() {
            level_converged = false;
            while iterations < cfg.max_iter {
                iterations += 1;
                let losses = self.losses(&b);
                let slopes = self.loss_slopes(&b, &losses);
                let sd = smoothed_dispersion(&losses, s);
                let gradient: Vec<f64> = (0..n).map(|i| sd.gradient[i] * slopes[i] / self.pairs).collect();
                let curvature: Vec<f64> = (0..n)
                    .map(|i| 2.0 * slopes[i] * slopes[i] * sd.neighbours[i] as f64 / (s * self.pairs))
                    .collect();
                let gscale = gradient.iter().fold(0.0f64, |m, g| m.max(g.abs()));
                let tau_floor = 1e-12 * (1.0 + gscale);
                let mut tau = proximal.unwrap_or((gscale / 0.05).max(tau_floor));

                let rows = self.rate_rows(&b);
                let lower: Vec<f64> = b.iter().map(|x| self.lower - x).collect();
                let upper: Vec<f64> = b.iter().map(|x| self.upper - x).collect();
                let a_dot_b: f64 = self.a.iter().zip(&b).map(|(a, x)| a * x).sum();
                let eq_rhs = self.a_rhs - a_dot_b;
                let current = self.evaluate(&b, s, penalty);

                let mut accepted = false;
                let mut stationary = false;
                while tau < 1e20 {
                    let hessian: Vec<f64> = curvature.iter().map(|c| c + tau).collect();
                    let sub = QpProblem {
                        hessian: &hessian,
                        gradient: &gradient,
                        lower: &lower,
                        upper: &upper,
                        equality: self.has_power_row().then_some((&self.a[..], eq_rhs)),
                        rows: &rows,
                        penalty,
                    };
                    let sol = qp::solve(&sub);
                    let binding =
                        sol.excess.iter().any(|&t| t > 1e-12) && sol.row_multipliers.iter().any(|&l| l > 0.9 * penalty);
                    if binding && penalty < MAX_PENALTY {
                        penalty *= 10.0;
                        continue;
                    }
                    let model_at_zero = penalty * current.violation;
                    let predicted = model_at_zero - sub.objective(&sol.d, &sol.excess);
                    if predicted <= cfg.tol * (current.merit.abs() + cfg.tol) {
                        stationary = true;
                        break;
                    }
                    let current_merit = if model_at_zero > 0.0 {
                        self.evaluate(&b, s, penalty).merit
                    } else {
                        current.smoothed
                    };
                    let mut alpha = 1.0;
                    while alpha >= 1.0 / 64.0 {
                        let trial: Vec<f64> = b
                            .iter()
                            .zip(&sol.d)
                            .map(|(x, d)| (x + alpha * d).clamp(self.lower, self.upper))
                            .collect();
                        let e = self.evaluate(&trial, s, penalty);
                        if e.merit <= current_merit - ARMIJO * alpha * predicted {
                            b = trial;
                            accepted = true;
                            break;
                        }
                        alpha *= 0.5;
                    }
                    if accepted {
                        tau = if alpha == 1.0 {
                            (tau * 0.3).max(tau_floor)
                        } else {
                            tau * 2.0
                        };
                        break;
                    }
                    tau *= 10.0;
                }
                proximal = Some(tau);
                if accepted {
                    consider(&b, &mut best);
                }
                if stationary || !accepted {
                    level_converged = stationary;
                    log::debug!(
                        "smoothing level {level} (s = {s:e}) done after {iterations} iterations, stationary: {stationary}"
                    );
                    continue 'levels;
                }
            }
            break;
        }

        let (feasible, _, best_b) = best.expect("at least the starting point was considered");
        let final_feasible = self.feasible(&b);
        // prefer the final iterate when it is feasible: it is the stationary
        // point of the finest smoothing level
        let (out, ok) = if final_feasible { (b, true) } else { (best_b, feasible) };
        Ok((out, level_converged && ok, iterations))
    }

    /// Literal reading of the rate constraint: `La_{i+1} = La_i + dt ·
    /// max_rate(La_i)`. The whole schedule follows from `b_0`, found by
    /// bisection on the power budget.
    fn solve_literal(&self) -> (Vec<f64>, bool, usize) {
        let n = self.n();
        let chain = |b0: f64| -> Vec<f64> {
            let mut out = Vec::with_capacity(n);
            let mut la = b0 * self.means[0];
            out.push(b0);
            for i in 1..n {
                la += self.dt * self.curve.max_rate(la);
                out.push(if self.means[i] > 0.0 {
                    la / self.means[i]
                } else {
                    self.upper
                });
            }
            out
        };
        let clamped = |v: Vec<f64>| -> Vec<f64> { v.into_iter().map(|x| x.clamp(self.lower, self.upper)).collect() };
        let power_of = |v: &[f64]| -> f64 { v.iter().zip(&self.a).map(|(x, a)| x * a).sum() };
        let (mut lo, mut hi) = (self.lower, self.upper);
        let mut iterations = 0;
        for _ in 0..200 {
            iterations += 1;
            let mid = 0.5 * (lo + hi);
            if power_of(&clamped(chain(mid))) < self.a_rhs {
                lo = mid;
            } else {
                hi = mid;
            }
            if hi - lo <= 1e-15 {
                break;
            }
        }
        let raw = chain(0.5 * (lo + hi));
        let within = raw.iter().all(|&x| x >= self.lower && x <= self.upper);
        let b = clamped(raw);
        let met = !self.has_power_row() || (power_of(&b) - self.a_rhs).abs() <= 1e-9 * self.a_rhs.abs().max(1.0);
        log::debug!(
            "literal rate schedule for target {} W: within bounds {within}",
            self.target
        );
        (b, within && met, iterations)
    }
}
