//! Online brightness control: a PID loop that measures the contrast loss of
//! each displayed frame and steers the dimming factor so the loss tracks a
//! target.
//!
//! The error is `e = c_r - c_y` (target minus measured loss). A measured
//! loss above the target gives `e < 0` and must raise brightness, so the
//! control output is subtracted: `b' = clamp(b - (kp e + ki ∫e + kd de/dt))`.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::contrast::{loss_from_fractions, ContrastParams, FrameContrast};
use crate::display::{DisplayModel, LuminanceImage, PowerModel};
use crate::error::{Error, Result};
use crate::format::sig9;
use crate::scheduler::{mean, std_dev};

/// What the derivative term differentiates.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DerivativeMode {
    /// `de/dt`; a change of target produces a one-step kick.
    #[default]
    Error,
    /// `-dc_y/dt`; insensitive to target changes.
    Measurement,
}

/// Reference the measured loss is taken against.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LossReference {
    /// The same frame at full brightness.
    #[default]
    CurrentFrame,
    /// The previous frame at full brightness (the first frame uses itself).
    PreviousFrame,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ControllerConfig {
    pub kp: f64,
    pub ki: f64,
    pub kd: f64,
    pub b_min: f64,
    pub b_max: f64,
    /// Bound on `|∫e|`; `None` means `1 / ki` (unbounded when `ki = 0`).
    pub integral_cap: Option<f64>,
    /// Time step of the loop, in frame periods.
    pub dt: f64,
    pub initial_b: f64,
    pub derivative: DerivativeMode,
    pub reference: LossReference,
}

impl Default for ControllerConfig {
    fn default() -> Self {
        ControllerConfig {
            kp: 0.2,
            ki: 0.01,
            kd: 0.05,
            b_min: 0.05,
            b_max: 1.0,
            integral_cap: None,
            dt: 1.0,
            initial_b: 1.0,
            derivative: DerivativeMode::Error,
            reference: LossReference::CurrentFrame,
        }
    }
}

impl ControllerConfig {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [("kp", self.kp), ("ki", self.ki), ("kd", self.kd)] {
            if !(v.is_finite() && v >= 0.0) {
                return Err(Error::invalid(format!("gain {name} must be finite and >= 0, got {v}")));
            }
        }
        if !(self.b_min > 0.0 && self.b_min <= self.b_max && self.b_max <= 1.0) {
            return Err(Error::invalid(format!(
                "clamp bounds must satisfy 0 < b_min <= b_max <= 1, got [{}, {}]",
                self.b_min, self.b_max
            )));
        }
        if let Some(cap) = self.integral_cap {
            if !(cap >= 0.0) {
                return Err(Error::invalid(format!("integral_cap must be >= 0, got {cap}")));
            }
        }
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return Err(Error::invalid(format!("controller dt must be > 0, got {}", self.dt)));
        }
        if !(self.initial_b >= self.b_min && self.initial_b <= self.b_max) {
            return Err(Error::invalid(format!(
                "initial_b {} outside [{}, {}]",
                self.initial_b, self.b_min, self.b_max
            )));
        }
        Ok(())
    }

    pub fn integral_cap(&self) -> f64 {
        self.integral_cap
            .unwrap_or(if self.ki > 0.0 { 1.0 / self.ki } else { f64::INFINITY })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PidState {
    pub kp: f64,
    pub ki: f64,
    pub kd: f64,
    pub integral: f64,
    /// Error of the previous step; `None` before the first step, when the
    /// derivative term is skipped.
    pub prev_error: Option<f64>,
    pub prev_measurement: Option<f64>,
    pub b: f64,
    pub b_min: f64,
    pub b_max: f64,
    pub integral_cap: f64,
    pub derivative: DerivativeMode,
}

impl PidState {
    pub fn new(cfg: &ControllerConfig) -> Result<Self> {
        cfg.validate()?;
        Ok(PidState {
            kp: cfg.kp,
            ki: cfg.ki,
            kd: cfg.kd,
            integral: 0.0,
            prev_error: None,
            prev_measurement: None,
            b: cfg.initial_b,
            b_min: cfg.b_min,
            b_max: cfg.b_max,
            integral_cap: cfg.integral_cap(),
            derivative: cfg.derivative,
        })
    }
}

/// One controller update. Pure: returns the new brightness and state.
///
/// Anti-windup is twofold: the integral is clamped to `±integral_cap`, and
/// it is frozen on steps where the output is saturated and the error would
/// push it further into the clamp, so a long saturation does not delay
/// recovery.
pub fn pid_step(state: &PidState, c_r: f64, c_y: f64, dt: f64) -> (f64, PidState) {
    let e = c_r - c_y;
    let derivative = match state.derivative {
        DerivativeMode::Error => state.prev_error.map_or(0.0, |p| (e - p) / dt),
        DerivativeMode::Measurement => state.prev_measurement.map_or(0.0, |p| -(c_y - p) / dt),
    };
    let output = |integral: f64| state.b - (state.kp * e + state.ki * integral + state.kd * derivative);
    let mut integral = (state.integral + e * dt).clamp(-state.integral_cap, state.integral_cap);
    let raw = output(integral);
    // e < 0 raises b, e > 0 lowers it
    if (raw > state.b_max && e < 0.0) || (raw < state.b_min && e > 0.0) {
        integral = state.integral.clamp(-state.integral_cap, state.integral_cap);
    }
    let b = output(integral).clamp(state.b_min, state.b_max);
    let next = PidState {
        integral,
        prev_error: Some(e),
        prev_measurement: Some(c_y),
        b,
        ..*state
    };
    (b, next)
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct OnlineTrace {
    /// Factor each frame was shown at.
    pub b: Vec<f64>,
    /// Measured loss of each frame.
    pub c_y: Vec<f64>,
    /// `c_r - c_y`.
    pub error: Vec<f64>,
    /// Watts drawn by each frame.
    pub power: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OnlineSummary {
    pub frames: usize,
    pub target_loss: f64,
    pub mean_power: f64,
    pub mean_b: f64,
    pub c_y_mean: f64,
    pub c_y_std: f64,
}

impl OnlineTrace {
    pub fn len(&self) -> usize {
        self.b.len()
    }

    pub fn is_empty(&self) -> bool {
        self.b.is_empty()
    }

    pub fn mean_power(&self) -> f64 {
        mean(&self.power)
    }

    pub fn mean_b(&self) -> f64 {
        mean(&self.b)
    }

    /// Standard deviation of the measured loss.
    pub fn c_y_std(&self) -> f64 {
        std_dev(&self.c_y)
    }

    pub fn summary(&self, target_loss: f64) -> OnlineSummary {
        OnlineSummary {
            frames: self.len(),
            target_loss,
            mean_power: self.mean_power(),
            mean_b: self.mean_b(),
            c_y_mean: mean(&self.c_y),
            c_y_std: self.c_y_std(),
        }
    }

    /// CSV with columns `frame,b,c_y,e,power`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("frame,b,c_y,e,power\n");
        for i in 0..self.len() {
            let _ = writeln!(
                out,
                "{i},{},{},{},{}",
                sig9(self.b[i]),
                sig9(self.c_y[i]),
                sig9(self.error[i]),
                sig9(self.power[i])
            );
        }
        out
    }
}

/// Runs the loop over `count` frames. `measure(t, b)` returns the loss of
/// frame `t` shown at `b` and the watts it draws.
pub fn simulate<F>(count: usize, c_r: f64, state: PidState, dt: f64, mut measure: F) -> Result<OnlineTrace>
where
    F: FnMut(usize, f64) -> Result<(f64, f64)>,
{
    if !(c_r.is_finite() && c_r >= 0.0) {
        return Err(Error::invalid(format!("target loss must be >= 0, got {c_r}")));
    }
    let mut state = state;
    let mut trace = OnlineTrace {
        b: Vec::with_capacity(count),
        c_y: Vec::with_capacity(count),
        error: Vec::with_capacity(count),
        power: Vec::with_capacity(count),
    };
    for t in 0..count {
        let b = state.b;
        let (c_y, watts) = measure(t, b).map_err(|e| e.in_frame(t))?;
        trace.b.push(b);
        trace.c_y.push(c_y);
        trace.error.push(c_r - c_y);
        trace.power.push(watts);
        state = pid_step(&state, c_r, c_y, dt).1;
    }
    Ok(trace)
}

/// Runs the controller over a frame sequence, measuring each frame's loss
/// with the contrast model at the brightness it is shown at.
pub fn run_online(
    frames: &[LuminanceImage],
    c_r: f64,
    cfg: &ControllerConfig,
    params: &ContrastParams,
    power: &PowerModel,
    display: &DisplayModel,
) -> Result<OnlineTrace> {
    if frames.is_empty() {
        return Err(Error::invalid("no frames to simulate"));
    }
    power.validate()?;
    let state = PidState::new(cfg)?;
    let mut previous_reference: Option<f64> = None;
    simulate(frames.len(), c_r, state, cfg.dt, |t, b| {
        let fc = FrameContrast::new(&frames[t], params)?;
        let c_y = match cfg.reference {
            LossReference::CurrentFrame => fc.loss(b)?,
            LossReference::PreviousFrame => {
                let reference = previous_reference.unwrap_or(fc.reference_fraction());
                loss_from_fractions(reference, fc.visible_fraction_at(b))
            }
        };
        previous_reference = Some(fc.reference_fraction());
        Ok((c_y, power.frame_power(b, display, fc.mean_luminance())))
    })
}

/// Loss and power trace of constant dimming at `b`, in the same shape as
/// the controller's trace, for comparison at matched power.
pub fn constant_trace(
    frames: &[LuminanceImage],
    b: f64,
    c_r: f64,
    params: &ContrastParams,
    power: &PowerModel,
    display: &DisplayModel,
) -> Result<OnlineTrace> {
    let mut trace = OnlineTrace::default();
    for (t, frame) in frames.iter().enumerate() {
        let fc = FrameContrast::new(frame, params).map_err(|e| e.in_frame(t))?;
        let c_y = fc.loss(b).map_err(|e| e.in_frame(t))?;
        trace.b.push(b);
        trace.c_y.push(c_y);
        trace.error.push(c_r - c_y);
        trace.power.push(power.frame_power(b, display, fc.mean_luminance()));
    }
    Ok(trace)
}

/// Constant factor that draws `mean_power` on average over frames with the
/// given full-brightness means, clamped to `[b_min, 1]`.
pub fn matched_constant_factor(
    mean_power: f64,
    frame_means: &[f64],
    b_min: f64,
    power: &PowerModel,
    display: &DisplayModel,
) -> f64 {
    if frame_means.is_empty() {
        return 1.0;
    }
    let per_factor = frame_means
        .iter()
        .map(|&m| power.power_per_factor(display, m))
        .sum::<f64>()
        / frame_means.len() as f64;
    if per_factor <= 0.0 {
        return 1.0;
    }
    ((mean_power - power.intercept) / per_factor).clamp(b_min, 1.0)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn state() -> PidState {
        PidState::new(&ControllerConfig::default()).unwrap()
    }

    #[test]
    fn zero_error_leaves_brightness() {
        let s = PidState { b: 0.6, ..state() };
        let (b, next) = pid_step(&s, 0.2, 0.2, 1.0);
        assert_eq!(b, 0.6);
        assert_eq!(next.integral, 0.0);
    }

    #[test]
    fn proportional_only_step() {
        let s = PidState {
            ki: 0.0,
            kd: 0.0,
            b: 0.5,
            ..state()
        };
        // loss above target: brighten by kp |e|
        let (b, _) = pid_step(&s, 0.1, 0.3, 1.0);
        assert!((b - (0.5 + 0.2 * 0.2)).abs() < 1e-15);
        // loss below target: dim
        let (b, _) = pid_step(&s, 0.3, 0.1, 1.0);
        assert!((b - (0.5 - 0.2 * 0.2)).abs() < 1e-15);
    }

    #[test]
    fn first_step_has_no_derivative_kick() {
        let s = PidState {
            kp: 0.0,
            ki: 0.0,
            b: 0.5,
            ..state()
        };
        let (b, next) = pid_step(&s, 0.4, 0.0, 1.0);
        assert_eq!(b, 0.5);
        let (b, _) = pid_step(&next, 0.4, 0.1, 1.0);
        // e went 0.4 -> 0.3
        assert!((b - (0.5 + 0.05 * 0.1)).abs() < 1e-15);
    }

    #[test]
    fn derivative_on_measurement_ignores_setpoint_changes() {
        let s = PidState {
            kp: 0.0,
            ki: 0.0,
            b: 0.5,
            derivative: DerivativeMode::Measurement,
            ..state()
        };
        let (_, s1) = pid_step(&s, 0.1, 0.2, 1.0);
        let (b, _) = pid_step(&s1, 0.4, 0.2, 1.0);
        assert_eq!(b, 0.5);
    }

    #[test]
    fn integral_is_capped() {
        let mut s = PidState {
            integral_cap: 0.5,
            ..state()
        };
        for _ in 0..100 {
            s = pid_step(&s, 1.0, 0.0, 1.0).1;
            assert!(s.integral.abs() <= 0.5);
            assert!(s.b >= s.b_min && s.b <= s.b_max);
        }
        assert_eq!(s.b, s.b_min);
    }

    #[test]
    fn integral_freezes_while_saturated() {
        // at the lower clamp with a positive error, integrating further would
        // only deepen the windup
        let mut s = state();
        for _ in 0..500 {
            s = pid_step(&s, 1.0, 0.0, 1.0).1;
        }
        assert_eq!(s.b, s.b_min);
        assert!(s.integral < 10.0, "integral {}", s.integral);
        // a negative error starts raising b on the next step
        let (b, _) = pid_step(&s, 0.0, 0.5, 1.0);
        assert!(b > s.b_min);
    }

    #[test]
    fn default_cap_is_inverse_ki() {
        assert_eq!(ControllerConfig::default().integral_cap(), 100.0);
        let cfg = ControllerConfig {
            ki: 0.0,
            ..Default::default()
        };
        assert!(cfg.integral_cap().is_infinite());
    }

    #[test]
    fn converges_on_a_linear_plant() {
        // loss = 0.8 (1 - b): target 0.2 is met at b = 0.75
        let trace = simulate(300, 0.2, state(), 1.0, |_, b| Ok((0.8 * (1.0 - b), b))).unwrap();
        assert!((trace.c_y[299] - 0.2).abs() < 1e-3);
        assert!((trace.b[299] - 0.75).abs() < 1e-3);
    }

    #[test]
    fn invalid_configs_are_rejected() {
        let bad = [
            ControllerConfig {
                b_min: 0.0,
                ..Default::default()
            },
            ControllerConfig {
                b_max: 1.5,
                ..Default::default()
            },
            ControllerConfig {
                kp: -1.0,
                ..Default::default()
            },
            ControllerConfig {
                dt: 0.0,
                ..Default::default()
            },
            ControllerConfig {
                initial_b: 0.01,
                ..Default::default()
            },
        ];
        for cfg in bad {
            assert!(PidState::new(&cfg).is_err(), "{cfg:?}");
        }
    }

    #[test]
    fn trace_csv_shape() {
        let trace = simulate(3, 0.1, state(), 1.0, |_, b| Ok((0.0, b))).unwrap();
        let csv = trace.to_csv();
        assert!(csv.starts_with("frame,b,c_y,e,power\n0,1,0,0.1,1\n"));
        assert_eq!(csv.lines().count(), 4);
    }

    #[test]
    fn matched_factor_inverts_power() {
        let (power, display) = (PowerModel::default(), DisplayModel::default());
        let target = power.frame_power(0.37, &display, 50.0);
        let b = matched_constant_factor(target, &[50.0, 80.0], 0.05, &power, &display);
        assert!((b - 0.37).abs() < 1e-12);
        assert_eq!(matched_constant_factor(0.0, &[50.0], 0.05, &power, &display), 0.05);
    }
}
