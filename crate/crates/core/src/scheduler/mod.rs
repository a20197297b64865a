//! Offline brightness scheduling.
//!
//! Given the loss table of a sequence, choose a dimming factor per frame so
//! that contrast loss is as uniform as possible across the sequence, the mean
//! panel power meets a budget, and the frame-to-frame change of mean
//! displayed luminance stays below the calibrated visibility limit:
//!
//! ```text
//! minimize    Σ_{i<j} |L_i(b_i) - L_j(b_j)|
//! subject to  mean_i P_i(b_i) = P_target
//!             |m_{i+1} b_{i+1} - m_i b_i| / dt ≤ max_rate(m_i b_i)
//!             lowest knot ≤ b_i ≤ 1
//! ```
//!
//! where `L_i` interpolates frame `i`'s row of the loss table and `m_i` is the
//! frame's mean luminance at full brightness.

mod dispersion;
mod qp;
mod sqp;

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::calibration::CalibrationCurve;
use crate::display::{DisplayModel, PowerModel};
use crate::error::{Error, Result};
use crate::format::sig9;
use crate::table::LossTable;

pub use dispersion::{pairwise_dispersion, smoothed_dispersion, SmoothedDispersion};
pub use qp::{PairRow, QpProblem, QpSolution};
pub use sqp::optimize_schedule;

/// Relative slack when checking the rate limit, absorbing rounding in the
/// solver's final iterate.
pub const RATE_REL_TOL: f64 = 1e-6;
/// Absolute slack (cd/m² per second) for the rate check.
pub const RATE_ABS_TOL: f64 = 1e-9;

/// Default spacing between frames: one period at 72 Hz.
pub const DEFAULT_FRAME_DT: f64 = 1.0 / 72.0;

/// How the modulation-rate constraint is imposed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RateMode {
    /// Slope of mean displayed luminance bounded by the calibrated maximum.
    #[default]
    Limit,
    /// Slope forced to equal the calibrated maximum at every step. Every
    /// schedule then follows from its first factor; kept for comparison.
    Literal,
}

/// Power budget, either in watts or as the constant dimming factor whose
/// power it should match.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Budget {
    Power(f64),
    BrightnessFraction(f64),
}

impl Budget {
    /// Budget in watts for this sequence.
    pub fn target_power(&self, table: &LossTable, power: &PowerModel, display: &DisplayModel) -> Result<f64> {
        match *self {
            Budget::Power(w) if w.is_finite() => Ok(w),
            Budget::Power(w) => Err(Error::invalid(format!("target power must be finite, got {w}"))),
            Budget::BrightnessFraction(f) => {
                if !(f > 0.0 && f <= 1.0) {
                    return Err(Error::invalid(format!(
                        "target brightness fraction must be in (0, 1], got {f}"
                    )));
                }
                Ok(mean_power_at(f, table, power, display))
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct OptimizerConfig {
    /// Mean panel power to meet, watts.
    pub target_power: f64,
    /// Time between frames, seconds.
    pub frame_dt: f64,
    pub seed: u64,
    /// Amplitude of the uniform perturbation applied to the starting point.
    pub delta: f64,
    pub tol: f64,
    pub max_iter: usize,
    /// Allowed `|mean power - target|` in watts; `None` means 0.5% of target.
    pub power_tol: Option<f64>,
    pub rate_mode: RateMode,
}

impl OptimizerConfig {
    pub fn new(target_power: f64) -> Self {
        OptimizerConfig {
            target_power,
            frame_dt: DEFAULT_FRAME_DT,
            seed: 0,
            delta: 0.01,
            tol: 1e-8,
            max_iter: 500,
            power_tol: None,
            rate_mode: RateMode::Limit,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.target_power.is_finite() && self.target_power > 0.0) {
            return Err(Error::invalid(format!(
                "target power must be positive, got {}",
                self.target_power
            )));
        }
        if !(self.tol > 0.0) {
            return Err(Error::invalid(format!("tol must be > 0, got {}", self.tol)));
        }
        if !(self.frame_dt > 0.0 && self.frame_dt.is_finite()) {
            return Err(Error::invalid(format!("frame_dt must be > 0, got {}", self.frame_dt)));
        }
        if !(0.0..0.1).contains(&self.delta) {
            return Err(Error::invalid(format!("delta must be in [0, 0.1), got {}", self.delta)));
        }
        if let Some(t) = self.power_tol {
            if !(t > 0.0) {
                return Err(Error::invalid(format!("power_tol must be > 0, got {t}")));
            }
        }
        Ok(())
    }

    pub fn power_tolerance(&self) -> f64 {
        self.power_tol.unwrap_or(0.005 * self.target_power)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BrightnessSchedule {
    pub b: Vec<f64>,
    pub per_frame_loss: Vec<f64>,
    /// Watts drawn by each frame.
    pub per_frame_power: Vec<f64>,
    /// Mean displayed luminance of each frame, cd/m².
    pub per_frame_luminance: Vec<f64>,
    pub mean_power: f64,
    /// Pairwise dispersion of `per_frame_loss`.
    pub objective: f64,
    pub converged: bool,
    pub iterations: usize,
}

/// Run statistics written next to a schedule CSV.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScheduleSummary {
    pub frames: usize,
    pub mean_power: f64,
    pub mean_b: f64,
    pub objective: f64,
    pub loss_std: f64,
    pub iterations: usize,
    pub converged: bool,
}

impl BrightnessSchedule {
    /// Evaluates loss, power and luminance traces for given factors.
    pub fn evaluate(b: Vec<f64>, table: &LossTable, power: &PowerModel, display: &DisplayModel) -> Self {
        let means = table.frame_means();
        let per_frame_loss: Vec<f64> = b.iter().enumerate().map(|(i, &x)| table.interp(i, x)).collect();
        let per_frame_power: Vec<f64> = b
            .iter()
            .zip(means)
            .map(|(&x, &m)| power.frame_power(x, display, m))
            .collect();
        let per_frame_luminance = b.iter().zip(means).map(|(x, m)| x * m).collect();
        BrightnessSchedule {
            mean_power: mean(&per_frame_power),
            objective: pairwise_dispersion(&per_frame_loss),
            b,
            per_frame_loss,
            per_frame_power,
            per_frame_luminance,
            converged: false,
            iterations: 0,
        }
    }

    pub fn len(&self) -> usize {
        self.b.len()
    }

    pub fn is_empty(&self) -> bool {
        self.b.is_empty()
    }

    pub fn mean_b(&self) -> f64 {
        mean(&self.b)
    }

    pub fn loss_std(&self) -> f64 {
        std_dev(&self.per_frame_loss)
    }

    pub fn summary(&self) -> ScheduleSummary {
        ScheduleSummary {
            frames: self.len(),
            mean_power: self.mean_power,
            mean_b: self.mean_b(),
            objective: self.objective,
            loss_std: self.loss_std(),
            iterations: self.iterations,
            converged: self.converged,
        }
    }

    /// CSV with columns `frame,b,loss,power,mean_luminance`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("frame,b,loss,power,mean_luminance\n");
        for i in 0..self.len() {
            let _ = writeln!(
                out,
                "{i},{},{},{},{}",
                sig9(self.b[i]),
                sig9(self.per_frame_loss[i]),
                sig9(self.per_frame_power[i]),
                sig9(self.per_frame_luminance[i])
            );
        }
        out
    }

    /// Reads a schedule CSV. Convergence and iteration counts are not part of
    /// the CSV and come back as `false` and `0`.
    pub fn from_csv(text: &str) -> Result<Self> {
        const WHAT: &str = "schedule CSV";
        let mut lines = text.lines().filter(|l| !l.trim().is_empty());
        if lines.next().map(str::trim) != Some("frame,b,loss,power,mean_luminance") {
            return Err(Error::parse(WHAT, "expected header frame,b,loss,power,mean_luminance"));
        }
        let (mut b, mut loss, mut pw, mut lum) = (Vec::new(), Vec::new(), Vec::new(), Vec::new());
        for (n, line) in lines.enumerate() {
            let fields: Vec<&str> = line.split(',').map(str::trim).collect();
            if fields.len() != 5 {
                return Err(Error::parse(WHAT, format!("row {n} has {} fields", fields.len())));
            }
            if fields[0].parse::<usize>().ok() != Some(n) {
                return Err(Error::parse(WHAT, format!("row {n} has frame index {}", fields[0])));
            }
            let v = fields[1..]
                .iter()
                .map(|f| f.parse::<f64>())
                .collect::<std::result::Result<Vec<_>, _>>()
                .map_err(|e| Error::parse(WHAT, format!("row {n}: {e}")))?;
            b.push(v[0]);
            loss.push(v[1]);
            pw.push(v[2]);
            lum.push(v[3]);
        }
        if b.is_empty() {
            return Err(Error::parse(WHAT, "no rows"));
        }
        Ok(BrightnessSchedule {
            mean_power: mean(&pw),
            objective: pairwise_dispersion(&loss),
            b,
            per_frame_loss: loss,
            per_frame_power: pw,
            per_frame_luminance: lum,
            converged: false,
            iterations: 0,
        })
    }
}

pub(crate) fn mean(v: &[f64]) -> f64 {
    if v.is_empty() {
        0.0
    } else {
        v.iter().sum::<f64>() / v.len() as f64
    }
}

/// Population standard deviation.
pub(crate) fn std_dev(v: &[f64]) -> f64 {
    if v.is_empty() {
        return 0.0;
    }
    let m = mean(v);
    (v.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / v.len() as f64).sqrt()
}

/// Mean power when every frame is shown at factor `b`.
pub fn mean_power_at(b: f64, table: &LossTable, power: &PowerModel, display: &DisplayModel) -> f64 {
    mean(
        &table
            .frame_means()
            .iter()
            .map(|&m| power.frame_power(b, display, m))
            .collect::<Vec<_>>(),
    )
}

/// Range of mean power reachable within the factor bounds.
pub fn achievable_power(table: &LossTable, power: &PowerModel, display: &DisplayModel) -> (f64, f64) {
    (
        mean_power_at(table.lowest_knot(), table, power, display),
        mean_power_at(1.0, table, power, display),
    )
}

pub(crate) fn check_budget(target: f64, table: &LossTable, power: &PowerModel, display: &DisplayModel) -> Result<()> {
    let (min, max) = achievable_power(table, power, display);
    let slack = 1e-12 * max.abs().max(1.0);
    if !(target >= min - slack && target <= max + slack) {
        return Err(Error::InfeasibleBudget { target, min, max });
    }
    Ok(())
}

/// The constant factor whose mean power equals `target`: the affine model
/// inverts in closed form, `b* = (target - intercept) · N / Σ slope · D_i`
/// with `D_i` the luminance driven at full brightness.
pub fn baseline_factor(target: f64, table: &LossTable, power: &PowerModel, display: &DisplayModel) -> Result<f64> {
    power.validate()?;
    display.validate()?;
    check_budget(target, table, power, display)?;
    let per_factor: f64 = table
        .frame_means()
        .iter()
        .map(|&m| power.power_per_factor(display, m))
        .sum::<f64>()
        / table.frame_count() as f64;
    if per_factor <= 0.0 {
        // power does not depend on b; any factor meets the (only) target
        return Ok(1.0);
    }
    Ok(((target - power.intercept) / per_factor).clamp(table.lowest_knot(), 1.0))
}

/// Constant dimming that meets the same power budget.
pub fn constant_baseline(
    table: &LossTable,
    power: &PowerModel,
    display: &DisplayModel,
    cfg: &OptimizerConfig,
) -> Result<BrightnessSchedule> {
    cfg.validate()?;
    let b = baseline_factor(cfg.target_power, table, power, display)?;
    let mut sched = BrightnessSchedule::evaluate(vec![b; table.frame_count()], table, power, display);
    sched.converged = true;
    Ok(sched)
}

/// `|ΔLa| / dt - max_rate(La_i)` between consecutive frames, cd/m² per second.
pub(crate) fn rate_excess(la: f64, la_next: f64, dt: f64, curve: &CalibrationCurve) -> (f64, f64) {
    let limit = curve.max_rate(la);
    ((la_next - la).abs() / dt - limit, limit)
}

pub(crate) fn rate_violated(excess: f64, limit: f64) -> bool {
    excess > RATE_REL_TOL * limit + RATE_ABS_TOL
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct FrameFlags {
    /// The step from this frame to the next exceeds the rate limit.
    pub rate_violation: bool,
    /// The factor lies outside `[lowest knot, 1]`.
    pub out_of_bounds: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub mean_power: f64,
    /// `mean_power - target`, watts.
    pub power_deviation: f64,
    pub power_ok: bool,
    /// Largest amount by which a step exceeds the rate limit, cd/m² per
    /// second; zero or negative when every step is within the limit.
    pub max_rate_violation: f64,
    pub rate_ok: bool,
    /// Standard deviation of the per-frame loss.
    pub loss_std: f64,
    pub frame_flags: Vec<FrameFlags>,
    pub feasible: bool,
}

/// Checks a schedule against the budget, the rate limit and the bounds.
pub fn validate_schedule(
    sched: &BrightnessSchedule,
    table: &LossTable,
    power: &PowerModel,
    display: &DisplayModel,
    curve: &CalibrationCurve,
    cfg: &OptimizerConfig,
) -> ValidationReport {
    let n = sched.len().min(table.frame_count());
    let evaluated = BrightnessSchedule::evaluate(sched.b[..n].to_vec(), table, power, display);
    let means = table.frame_means();
    let mut flags = vec![FrameFlags::default(); n];
    let mut max_violation = f64::NEG_INFINITY;
    for i in 0..n {
        flags[i].out_of_bounds = !(sched.b[i] >= table.lowest_knot() && sched.b[i] <= 1.0);
        if i + 1 < n {
            let (excess, limit) = rate_excess(
                sched.b[i] * means[i],
                sched.b[i + 1] * means[i + 1],
                cfg.frame_dt,
                curve,
            );
            max_violation = max_violation.max(excess);
            flags[i].rate_violation = rate_violated(excess, limit);
        }
    }
    if n < 2 {
        max_violation = 0.0;
    }
    let deviation = evaluated.mean_power - cfg.target_power;
    let power_ok = deviation.abs() <= cfg.power_tolerance();
    let rate_ok = flags.iter().all(|f| !f.rate_violation);
    let length_ok = sched.len() == table.frame_count();
    ValidationReport {
        mean_power: evaluated.mean_power,
        power_deviation: deviation,
        power_ok,
        max_rate_violation: max_violation,
        rate_ok,
        loss_std: evaluated.loss_std(),
        feasible: power_ok && rate_ok && length_ok && flags.iter().all(|f| !f.out_of_bounds),
        frame_flags: flags,
    }
}
