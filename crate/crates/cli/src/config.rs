//! One JSON schema shared by every command.
//!
//! A run's configuration is built in three layers: built-in defaults, then an
//! optional JSON file, then command-line flags. Unknown keys are errors at
//! every layer. Relative paths in a file resolve against the file's
//! directory; relative paths given on the command line resolve against the
//! working directory. The resolved configuration, with absolute paths, is
//! written next to every command's outputs so the run can be repeated with
//! `--config <out>/config.json`.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use lumadim::calibration::CalibrationCurve;
use lumadim::contrast::{ContrastParams, ThresholdMode};
use lumadim::controller::{ControllerConfig, DerivativeMode, LossReference};
use lumadim::csf::BartenCsf;
use lumadim::display::{DisplayModel, PowerMode, PowerModel};
use lumadim::scheduler::{Budget, OptimizerConfig, RateMode, DEFAULT_FRAME_DT};
use lumadim::table::DEFAULT_KNOTS;

use crate::error::{CliError, Result};

/// Name of the resolved-configuration snapshot in every output directory.
pub const SNAPSHOT_NAME: &str = "config.json";

/// Brightness fraction used when neither budget key is set.
pub const DEFAULT_BRIGHTNESS_FRACTION: f64 = 0.5;

/// Keys whose values are filesystem paths.
const PATH_KEYS: [&str; 6] = [
    "frames",
    "table",
    "calibration",
    "calibration_input",
    "baseline_schedule",
    "optimized_schedule",
];

/// Keys naming where frames come from; setting one on the command line
/// clears the others.
const SOURCE_KEYS: [&str; 3] = ["scene", "frames", "table"];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    // input
    /// Bundled synthetic scene to use as input.
    pub scene: Option<String>,
    /// printf-style frame file pattern, e.g. `frames/%04d.png`.
    pub frames: Option<PathBuf>,
    /// First frame index (into the pattern or the scene).
    pub frame_start: usize,
    /// Number of frames; all available frames when unset.
    pub frame_count: Option<usize>,
    /// Precomputed loss table CSV, instead of frames.
    pub table: Option<PathBuf>,

    // display and power
    pub gamma: f64,
    pub l_max: f64,
    pub l_black: f64,
    pub l_refl: f64,
    pub power_slope: f64,
    pub power_intercept: f64,
    pub power_mode: PowerMode,

    // contrast model
    /// Angular resolution, pixels per degree.
    pub ppd: f64,
    pub epsilon: f64,
    pub threshold: ThresholdMode,
    pub csf: BartenCsf,
    /// Brightness factors the loss table is sampled at.
    pub knots: Vec<f64>,

    // budget
    /// Mean power target in watts.
    pub target_power: Option<f64>,
    /// Budget as the constant factor whose power it matches.
    pub target_brightness_fraction: Option<f64>,

    // optimizer
    pub frame_dt: f64,
    pub seed: u64,
    pub delta: f64,
    pub tol: f64,
    pub max_iter: usize,
    pub power_tol: Option<f64>,
    pub rate_mode: RateMode,
    /// Calibration curve JSON; the bundled synthetic curve when unset.
    pub calibration: Option<PathBuf>,

    // controller
    /// Target loss for the online controller.
    pub c_r: f64,
    pub kp: f64,
    pub ki: f64,
    pub kd: f64,
    pub b_min: f64,
    pub b_max: f64,
    pub integral_cap: Option<f64>,
    /// Controller time step, in frame periods.
    pub controller_dt: f64,
    pub initial_b: f64,
    pub derivative: DerivativeMode,
    pub reference: LossReference,

    // calibrate
    /// Trials (`luminance,slope,detected`) or thresholds
    /// (`luminance,threshold_slope`) CSV; synthetic trials when unset.
    pub calibration_input: Option<PathBuf>,
    /// Adaptation luminances of the synthetic observer, cd/m².
    pub synthetic_luminances: Vec<f64>,
    pub synthetic_trials: usize,

    // power-report
    pub baseline_schedule: Option<PathBuf>,
    pub optimized_schedule: Option<PathBuf>,
}

impl Default for RunConfig {
    fn default() -> Self {
        let display = DisplayModel::default();
        let power = PowerModel::default();
        let contrast = ContrastParams::default();
        let opt = OptimizerConfig::new(1.0);
        let ctl = ControllerConfig::default();
        RunConfig {
            scene: None,
            frames: None,
            frame_start: 0,
            frame_count: None,
            table: None,
            gamma: display.gamma,
            l_max: display.l_max,
            l_black: display.l_black,
            l_refl: display.l_refl,
            power_slope: power.slope,
            power_intercept: power.intercept,
            power_mode: power.mode,
            ppd: contrast.ppd,
            epsilon: contrast.epsilon,
            threshold: contrast.threshold,
            csf: contrast.csf,
            knots: DEFAULT_KNOTS.to_vec(),
            target_power: None,
            target_brightness_fraction: None,
            frame_dt: DEFAULT_FRAME_DT,
            seed: opt.seed,
            delta: opt.delta,
            tol: opt.tol,
            max_iter: opt.max_iter,
            power_tol: opt.power_tol,
            rate_mode: opt.rate_mode,
            calibration: None,
            c_r: 0.1,
            kp: ctl.kp,
            ki: ctl.ki,
            kd: ctl.kd,
            b_min: ctl.b_min,
            b_max: ctl.b_max,
            integral_cap: ctl.integral_cap,
            controller_dt: ctl.dt,
            initial_b: ctl.initial_b,
            derivative: ctl.derivative,
            reference: ctl.reference,
            calibration_input: None,
            synthetic_luminances: vec![1.0, 5.0, 20.0, 50.0, 100.0, 200.0, 400.0, 600.0, 800.0],
            synthetic_trials: 200,
            baseline_schedule: None,
            optimized_schedule: None,
        }
    }
}

/// Values given on the command line. Each set field overrides the file.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub frames: Option<String>,
    pub scene: Option<String>,
    pub table: Option<PathBuf>,
    pub target_power: Option<f64>,
    pub target_brightness_fraction: Option<f64>,
    pub c_r: Option<f64>,
    /// `key=value` assignments; the value is parsed as JSON, falling back
    /// to a string.
    pub set: Vec<String>,
}

/// Where a command's frames or table come from.
#[derive(Debug, Clone, PartialEq)]
pub enum Source {
    Scene(String),
    Frames(PathBuf),
    Table(PathBuf),
}

impl std::fmt::Display for Source {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Source::Scene(s) => write!(f, "scene {s}"),
            Source::Frames(p) => write!(f, "frames {}", p.display()),
            Source::Table(p) => write!(f, "loss table {}", p.display()),
        }
    }
}

impl RunConfig {
    /// Builds the configuration from defaults, an optional file and
    /// command-line overrides.
    pub fn load(file: Option<&Path>, overrides: &Overrides) -> Result<Self> {
        let mut value = serde_json::to_value(RunConfig::default()).expect("defaults serialize");
        if let Some(path) = file {
            let text = std::fs::read_to_string(path).map_err(|source| CliError::Io {
                path: path.to_owned(),
                source,
            })?;
            let layer: Value =
                serde_json::from_str(&text).map_err(|e| CliError::config(format!("{}: {e}", path.display())))?;
            let Value::Object(mut layer) = layer else {
                return Err(CliError::config(format!(
                    "{}: top level must be a JSON object",
                    path.display()
                )));
            };
            let base = path.parent().unwrap_or(Path::new(""));
            resolve_paths(&mut layer, base)?;
            merge(&mut value, Value::Object(layer), "")?;
        }
        let cwd = std::env::current_dir().map_err(|source| CliError::Io {
            path: PathBuf::from("."),
            source,
        })?;
        let mut layer = overrides.to_layer()?;
        resolve_paths(&mut layer, &cwd)?;
        if SOURCE_KEYS.iter().any(|k| layer.contains_key(*k)) {
            // a source named on the command line replaces the file's
            if let Value::Object(obj) = &mut value {
                for k in SOURCE_KEYS {
                    obj.insert(k.to_string(), Value::Null);
                }
            }
        }
        merge(&mut value, Value::Object(layer), "")?;
        let mut cfg: RunConfig = serde_json::from_value(value).map_err(|e| CliError::config(e.to_string()))?;
        cfg.resolve()?;
        Ok(cfg)
    }

    /// Fills in defaults that depend on other keys and checks the whole
    /// configuration.
    fn resolve(&mut self) -> Result<()> {
        match (self.target_power, self.target_brightness_fraction) {
            (Some(_), Some(_)) => {
                return Err(CliError::config(
                    "set at most one of target_power and target_brightness_fraction",
                ))
            }
            (None, None) => self.target_brightness_fraction = Some(DEFAULT_BRIGHTNESS_FRACTION),
            _ => {}
        }
        let set = SOURCE_KEYS
            .iter()
            .zip([self.scene.is_some(), self.frames.is_some(), self.table.is_some()])
            .filter(|(_, on)| *on)
            .count();
        if set > 1 {
            return Err(CliError::config("set at most one of scene, frames and table"));
        }
        self.display()?;
        self.power()?;
        self.controller()?;
        if !(self.ppd > 0.0 && self.ppd.is_finite()) {
            return Err(CliError::config(format!("ppd must be > 0, got {}", self.ppd)));
        }
        if !(self.c_r.is_finite() && self.c_r >= 0.0) {
            return Err(CliError::config(format!("c_r must be >= 0, got {}", self.c_r)));
        }
        if self.frame_count == Some(0) {
            return Err(CliError::config("frame_count must be at least 1"));
        }
        Ok(())
    }

    pub fn display(&self) -> Result<DisplayModel> {
        Ok(DisplayModel::new(self.gamma, self.l_max, self.l_black, self.l_refl)?)
    }

    pub fn power(&self) -> Result<PowerModel> {
        let power = PowerModel {
            slope: self.power_slope,
            intercept: self.power_intercept,
            mode: self.power_mode,
        };
        power.validate()?;
        Ok(power)
    }

    pub fn contrast(&self) -> ContrastParams {
        ContrastParams {
            ppd: self.ppd,
            epsilon: self.epsilon,
            csf: self.csf,
            threshold: self.threshold,
        }
    }

    pub fn controller(&self) -> Result<ControllerConfig> {
        let cfg = ControllerConfig {
            kp: self.kp,
            ki: self.ki,
            kd: self.kd,
            b_min: self.b_min,
            b_max: self.b_max,
            integral_cap: self.integral_cap,
            dt: self.controller_dt,
            initial_b: self.initial_b,
            derivative: self.derivative,
            reference: self.reference,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn budget(&self) -> Budget {
        match (self.target_power, self.target_brightness_fraction) {
            (Some(w), _) => Budget::Power(w),
            (None, Some(f)) => Budget::BrightnessFraction(f),
            (None, None) => Budget::BrightnessFraction(DEFAULT_BRIGHTNESS_FRACTION),
        }
    }

    /// Optimizer settings for a budget already converted to watts.
    pub fn optimizer(&self, target_power: f64) -> OptimizerConfig {
        OptimizerConfig {
            target_power,
            frame_dt: self.frame_dt,
            seed: self.seed,
            delta: self.delta,
            tol: self.tol,
            max_iter: self.max_iter,
            power_tol: self.power_tol,
            rate_mode: self.rate_mode,
        }
    }

    /// The configured calibration curve, or the bundled synthetic one.
    pub fn curve(&self) -> Result<CalibrationCurve> {
        match &self.calibration {
            Some(path) => Ok(CalibrationCurve::read_json(path)?),
            None => Ok(CalibrationCurve::default_synthetic()),
        }
    }

    pub fn source(&self) -> Option<Source> {
        if let Some(s) = &self.scene {
            Some(Source::Scene(s.clone()))
        } else if let Some(p) = &self.frames {
            Some(Source::Frames(p.clone()))
        } else {
            self.table.as_ref().map(|p| Source::Table(p.clone()))
        }
    }

    /// Pretty JSON with a trailing newline, as written to the snapshot.
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes") + "\n"
    }
}

impl Overrides {
    fn to_layer(&self) -> Result<Map<String, Value>> {
        let mut layer = Map::new();
        let mut put = |k: &str, v: Value| {
            layer.insert(k.to_string(), v);
        };
        if let Some(v) = self.seed {
            put("seed", v.into());
        }
        if let Some(v) = &self.frames {
            put("frames", v.clone().into());
        }
        if let Some(v) = &self.scene {
            put("scene", v.clone().into());
        }
        if let Some(v) = &self.table {
            put("table", v.to_string_lossy().into_owned().into());
        }
        if let Some(v) = self.target_power {
            put("target_power", v.into());
            put("target_brightness_fraction", Value::Null);
        }
        if let Some(v) = self.target_brightness_fraction {
            put("target_brightness_fraction", v.into());
            put("target_power", Value::Null);
        }
        if let Some(v) = self.c_r {
            put("c_r", v.into());
        }
        for assignment in &self.set {
            let (key, raw) = assignment
                .split_once('=')
                .ok_or_else(|| CliError::config(format!("--set expects key=value, got {assignment:?}")))?;
            let value = serde_json::from_str(raw).unwrap_or_else(|_| Value::String(raw.to_string()));
            insert_dotted(&mut layer, key.trim(), value)?;
        }
        Ok(layer)
    }
}

/// Inserts `value` at a dotted key such as `csf.peak_gain`.
fn insert_dotted(map: &mut Map<String, Value>, key: &str, value: Value) -> Result<()> {
    if key.is_empty() {
        return Err(CliError::config("empty key in --set"));
    }
    match key.split_once('.') {
        None => {
            map.insert(key.to_string(), value);
        }
        Some((head, rest)) => {
            let child = map.entry(head.to_string()).or_insert_with(|| Value::Object(Map::new()));
            let Value::Object(child) = child else {
                return Err(CliError::config(format!("--set {key}: {head} is not an object")));
            };
            insert_dotted(child, rest, value)?;
        }
    }
    Ok(())
}

/// Makes relative string paths in `layer` absolute against `base`.
fn resolve_paths(layer: &mut Map<String, Value>, base: &Path) -> Result<()> {
    for key in PATH_KEYS {
        if let Some(Value::String(s)) = layer.get(key) {
            let p = Path::new(s);
            if p.is_relative() {
                let joined = base.join(p);
                let abs = std::path::absolute(&joined).map_err(|source| CliError::Io { path: joined, source })?;
                layer.insert(key.to_string(), Value::String(abs.to_string_lossy().into_owned()));
            }
        }
    }
    Ok(())
}

/// Merges `layer` into `base`, recursing into objects. Keys absent from
/// `base` are rejected, so typos never pass silently.
fn merge(base: &mut Value, layer: Value, prefix: &str) -> Result<()> {
    let (Value::Object(base), Value::Object(layer)) = (base, layer) else {
        unreachable!("merge is only called on objects");
    };
    for (key, value) in layer {
        let path = if prefix.is_empty() {
            key.clone()
        } else {
            format!("{prefix}.{key}")
        };
        match base.get_mut(&key) {
            None => return Err(CliError::config(format!("unknown key {path:?}"))),
            Some(slot @ Value::Object(_)) if value.is_object() => merge(slot, value, &path)?,
            Some(slot) => *slot = value,
        }
    }
    Ok(())
}
