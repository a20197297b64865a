//! The six commands. Each takes a resolved [`RunConfig`] and an output
//! directory, writes the configuration snapshot first and its artifacts
//! after, every file through an atomic rename.

use std::path::{Path, PathBuf};

use log::info;
use serde::Serialize;

use lumadim::calibration::{
    fit_threshold_curve, parse_threshold_points, parse_trials, synthetic_trials, threshold_points_to_csv,
    thresholds_by_luminance, trials_to_csv, CalibrationCurve,
};
use lumadim::controller::{constant_trace, matched_constant_factor, run_online, OnlineSummary, OnlineTrace};
use lumadim::display::LuminanceImage;
use lumadim::format::sig9;
use lumadim::io::{load_sequence, write_atomic, FrameSource, SequenceManifest};
use lumadim::scenes::Scene;
use lumadim::scheduler::{
    constant_baseline, mean_power_at, optimize_schedule, validate_schedule, BrightnessSchedule, ScheduleSummary,
    ValidationReport,
};
use lumadim::table::{analyze_sequence, LossTable, LossTableMeta};

use crate::config::{RunConfig, Source, SNAPSHOT_NAME};
use crate::error::{CliError, Result, EXIT_NOT_CONVERGED};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Command {
    Analyze,
    Optimize,
    Baseline,
    Simulate,
    Calibrate,
    PowerReport,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::Analyze => "analyze",
            Command::Optimize => "optimize",
            Command::Baseline => "baseline",
            Command::Simulate => "simulate",
            Command::Calibrate => "calibrate",
            Command::PowerReport => "power-report",
        }
    }
}

/// How a command that wrote its outputs finished.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Status {
    Ok,
    /// The optimizer stopped without converging or with an infeasible
    /// schedule; outputs were still written.
    NotConverged,
}

impl Status {
    pub fn exit_code(self) -> i32 {
        match self {
            Status::Ok => 0,
            Status::NotConverged => EXIT_NOT_CONVERGED,
        }
    }
}

/// Runs `command`, writing into `out`.
pub fn run(command: Command, cfg: &RunConfig, out: &Path) -> Result<Status> {
    let out = Output::new(out);
    out.write(SNAPSHOT_NAME, &cfg.to_json())?;
    match command {
        Command::Analyze => analyze(cfg, &out),
        Command::Optimize => optimize(cfg, &out),
        Command::Baseline => baseline(cfg, &out),
        Command::Simulate => simulate(cfg, &out),
        Command::Calibrate => calibrate(cfg, &out),
        Command::PowerReport => power_report(cfg, &out),
    }
}

struct Output {
    dir: PathBuf,
}

impl Output {
    fn new(dir: &Path) -> Self {
        Output { dir: dir.to_owned() }
    }

    fn write(&self, name: &str, contents: &str) -> Result<()> {
        let path = self.dir.join(name);
        write_atomic(&path, contents.as_bytes()).map_err(|e| match e {
            lumadim::Error::Io(source) => CliError::Io { path, source },
            other => other.into(),
        })
    }

    fn write_json<T: Serialize>(&self, name: &str, value: &T) -> Result<()> {
        let text = serde_json::to_string_pretty(value).expect("outputs serialize") + "\n";
        self.write(name, &text)
    }
}

/// Frames of the configured scene or pattern, converted to luminance.
fn load_frames(cfg: &RunConfig) -> Result<Vec<LuminanceImage>> {
    let display = cfg.display()?;
    match cfg.source() {
        Some(Source::Scene(name)) => {
            let scene = Scene::from_name(&name)?;
            let total = scene.frame_count();
            let count = cfg.frame_count.unwrap_or(total.saturating_sub(cfg.frame_start));
            if count == 0 || cfg.frame_start + count > total {
                return Err(CliError::config(format!(
                    "scene {name} has {total} frames; frames {}..{} requested",
                    cfg.frame_start,
                    cfg.frame_start + count
                )));
            }
            (cfg.frame_start..cfg.frame_start + count)
                .map(|t| scene.frame(t, &display).map_err(|e| e.in_frame(t).into()))
                .collect()
        }
        Some(Source::Frames(pattern)) => {
            let manifest = SequenceManifest {
                frames: FrameSource::Pattern(pattern.to_string_lossy().into_owned()),
                start: cfg.frame_start,
                count: cfg.frame_count,
                frame_dt: cfg.frame_dt,
                ppd: cfg.ppd,
                display,
                power: cfg.power()?,
            };
            Ok(load_sequence(&manifest)?)
        }
        Some(Source::Table(_)) => Err(CliError::config(
            "this command needs frames (scene or frames), not a loss table",
        )),
        None => Err(CliError::config("no input: set scene, frames or table")),
    }
}

/// Loss table from the configured table file, or computed from frames and
/// written to `loss_table.csv`.
fn load_table(cfg: &RunConfig, out: &Output) -> Result<LossTable> {
    if let Some(Source::Table(path)) = cfg.source() {
        return Ok(LossTable::read_csv(&path)?);
    }
    let frames = load_frames(cfg)?;
    let analysis = analyze_sequence(&frames, &cfg.knots, &cfg.contrast())?;
    out.write("loss_table.csv", &analysis.table.to_csv())?;
    Ok(analysis.table)
}

#[derive(Serialize)]
struct AnalyzeSummary {
    source: String,
    frames: usize,
    width: usize,
    height: usize,
    knots: Vec<f64>,
    /// Mean loss over frames at each knot.
    mean_loss: Vec<f64>,
    mean_visible_fraction: f64,
    mean_luminance: f64,
}

fn analyze(cfg: &RunConfig, out: &Output) -> Result<Status> {
    let frames = load_frames(cfg)?;
    let params = cfg.contrast();
    let analysis = analyze_sequence(&frames, &cfg.knots, &params)?;
    let table = &analysis.table;
    out.write("loss_table.csv", &table.to_csv())?;
    out.write_json("loss_table.json", &LossTableMeta::new(&params, table))?;

    let mut cv = String::from("frame,c_v,mean_luminance\n");
    for (i, (c, m)) in analysis.reference_fraction.iter().zip(table.frame_means()).enumerate() {
        cv.push_str(&format!("{i},{},{}\n", sig9(*c), sig9(*m)));
    }
    out.write("visible_fraction.csv", &cv)?;

    let n = table.frame_count();
    let mean_loss = (0..table.knots().len())
        .map(|k| (0..n).map(|i| table.loss_at_knot(i, k)).sum::<f64>() / n as f64)
        .collect();
    let summary = AnalyzeSummary {
        source: cfg.source().map(|s| s.to_string()).unwrap_or_default(),
        frames: n,
        width: frames[0].width(),
        height: frames[0].height(),
        knots: table.knots().to_vec(),
        mean_loss,
        mean_visible_fraction: analysis.reference_fraction.iter().sum::<f64>() / n as f64,
        mean_luminance: table.frame_means().iter().sum::<f64>() / n as f64,
    };
    out.write_json("summary.json", &summary)?;
    println!(
        "analyzed {n} frames of {}x{}; mean visible fraction {}",
        summary.width,
        summary.height,
        sig9(summary.mean_visible_fraction)
    );
    Ok(Status::Ok)
}

#[derive(Serialize)]
struct ScheduleReport {
    /// Calibration curve the rate limit came from.
    calibration: String,
    target_power: f64,
    feasible: bool,
    #[serde(flatten)]
    schedule: ScheduleSummary,
    /// Constant dimming at the same budget, for comparison.
    #[serde(skip_serializing_if = "Option::is_none")]
    baseline: Option<ScheduleSummary>,
}

fn optimize(cfg: &RunConfig, out: &Output) -> Result<Status> {
    let table = load_table(cfg, out)?;
    let (display, power, curve) = (cfg.display()?, cfg.power()?, cfg.curve()?);
    let target = cfg.budget().target_power(&table, &power, &display)?;
    let ocfg = cfg.optimizer(target);
    let sched = optimize_schedule(&table, &power, &display, &curve, &ocfg)?;
    let base = constant_baseline(&table, &power, &display, &ocfg)?;
    let report = validate_schedule(&sched, &table, &power, &display, &curve, &ocfg);
    write_schedule(out, &sched, &report, &curve, target, Some(base.summary()))?;
    println!(
        "optimized {} frames: mean power {} W (target {} W), loss std {} vs {} constant; calibration: {}",
        sched.len(),
        sig9(sched.mean_power),
        sig9(target),
        sig9(sched.loss_std()),
        sig9(base.loss_std()),
        curve.provenance
    );
    if sched.converged && report.feasible {
        Ok(Status::Ok)
    } else {
        log::error!(
            "optimizer stopped after {} iterations without a converged feasible schedule",
            sched.iterations
        );
        Ok(Status::NotConverged)
    }
}

fn baseline(cfg: &RunConfig, out: &Output) -> Result<Status> {
    let table = load_table(cfg, out)?;
    let (display, power, curve) = (cfg.display()?, cfg.power()?, cfg.curve()?);
    let target = cfg.budget().target_power(&table, &power, &display)?;
    let ocfg = cfg.optimizer(target);
    let sched = constant_baseline(&table, &power, &display, &ocfg)?;
    let report = validate_schedule(&sched, &table, &power, &display, &curve, &ocfg);
    write_schedule(out, &sched, &report, &curve, target, None)?;
    println!(
        "constant factor {} for {} frames: mean power {} W; calibration: {}",
        sig9(sched.b[0]),
        sched.len(),
        sig9(sched.mean_power),
        curve.provenance
    );
    Ok(Status::Ok)
}

fn write_schedule(
    out: &Output,
    sched: &BrightnessSchedule,
    report: &ValidationReport,
    curve: &CalibrationCurve,
    target_power: f64,
    baseline: Option<ScheduleSummary>,
) -> Result<()> {
    out.write("schedule.csv", &sched.to_csv())?;
    out.write_json("validation.json", report)?;
    out.write_json(
        "summary.json",
        &ScheduleReport {
            calibration: curve.provenance.clone(),
            target_power,
            feasible: report.feasible,
            schedule: sched.summary(),
            baseline,
        },
    )
}

#[derive(Serialize)]
struct SimulateReport {
    calibration: String,
    #[serde(flatten)]
    controller: OnlineSummary,
    /// Steps whose luminance change exceeds the calibrated rate limit.
    rate_violations: usize,
    /// Constant dimming drawing the controller's mean power.
    matched_constant: OnlineSummary,
    matched_constant_b: f64,
}

fn simulate(cfg: &RunConfig, out: &Output) -> Result<Status> {
    let frames = load_frames(cfg)?;
    let (display, power, curve, params) = (cfg.display()?, cfg.power()?, cfg.curve()?, cfg.contrast());
    let ctl = cfg.controller()?;
    let trace = run_online(&frames, cfg.c_r, &ctl, &params, &power, &display)?;
    let means: Vec<f64> = frames.iter().map(LuminanceImage::mean).collect();
    let b_const = matched_constant_factor(trace.mean_power(), &means, ctl.b_min, &power, &display);
    let constant = constant_trace(&frames, b_const, cfg.c_r, &params, &power, &display)?;
    out.write("trace.csv", &trace.to_csv())?;
    out.write("constant_trace.csv", &constant.to_csv())?;
    let report = SimulateReport {
        calibration: curve.provenance.clone(),
        controller: trace.summary(cfg.c_r),
        rate_violations: rate_violations(&trace, &means, cfg.frame_dt, &curve),
        matched_constant: constant.summary(cfg.c_r),
        matched_constant_b: b_const,
    };
    out.write_json("summary.json", &report)?;
    println!(
        "simulated {} frames at c_r = {}: mean b {}, loss std {} vs {} at constant b = {}",
        trace.len(),
        sig9(cfg.c_r),
        sig9(trace.mean_b()),
        sig9(trace.c_y_std()),
        sig9(constant.c_y_std()),
        sig9(b_const)
    );
    Ok(Status::Ok)
}

fn rate_violations(trace: &OnlineTrace, means: &[f64], dt: f64, curve: &CalibrationCurve) -> usize {
    trace
        .b
        .windows(2)
        .zip(means.windows(2))
        .filter(|(b, m)| {
            let (la, lb) = (b[0] * m[0], b[1] * m[1]);
            let limit = curve.max_rate(la);
            (lb - la).abs() / dt - limit > lumadim::scheduler::RATE_REL_TOL * limit + lumadim::scheduler::RATE_ABS_TOL
        })
        .count()
}

#[derive(Serialize)]
struct CalibrationReport {
    provenance: String,
    trials: usize,
    points: Vec<CalibrationPoint>,
}

#[derive(Serialize)]
struct CalibrationPoint {
    luminance: f64,
    threshold_slope: f64,
    fitted: f64,
}

fn calibrate(cfg: &RunConfig, out: &Output) -> Result<Status> {
    let (points, trials, provenance) = match &cfg.calibration_input {
        Some(path) => {
            let text = std::fs::read_to_string(path).map_err(|source| CliError::Io {
                path: path.clone(),
                source,
            })?;
            let name = path
                .file_name()
                .map(|n| n.to_string_lossy().into_owned())
                .unwrap_or_default();
            let data_err = |e: lumadim::Error| lumadim::Error::Data {
                path: path.clone(),
                message: e.to_string(),
            };
            let header = text.lines().find(|l| !l.trim().is_empty()).unwrap_or("");
            if header.split(',').count() == 3 {
                let trials = parse_trials(&text).map_err(data_err)?;
                let points = thresholds_by_luminance(&trials)?;
                let provenance = format!("fitted to {} threshold trials from {name}", trials.len());
                (points, trials.len(), provenance)
            } else {
                let points = parse_threshold_points(&text).map_err(data_err)?;
                let provenance = format!("fitted to {} threshold points from {name}", points.len());
                (points, 0, provenance)
            }
        }
        None => {
            let source = cfg.curve()?;
            let trials = synthetic_trials(&source, &cfg.synthetic_luminances, cfg.synthetic_trials, cfg.seed);
            out.write("trials.csv", &trials_to_csv(&trials))?;
            let points = thresholds_by_luminance(&trials)?;
            let provenance = format!(
                "SYNTHETIC: simulated observer (seed {}, {} trials per level) following: {}",
                cfg.seed, cfg.synthetic_trials, source.provenance
            );
            (points, trials.len(), provenance)
        }
    };
    let mut curve = fit_threshold_curve(&points)?;
    curve.provenance = provenance;
    out.write("thresholds.csv", &threshold_points_to_csv(&points))?;
    out.write("calibration.json", &curve.to_json()?)?;
    let report = CalibrationReport {
        provenance: curve.provenance.clone(),
        trials,
        points: points
            .iter()
            .map(|&(l, s)| CalibrationPoint {
                luminance: l,
                threshold_slope: s,
                fitted: curve.max_rate(l),
            })
            .collect(),
    };
    out.write_json("summary.json", &report)?;
    info!("calibration curve coefficients {:?}", curve.coefficients);
    println!(
        "fitted rate-limit curve to {} luminance levels; {}",
        points.len(),
        curve.provenance
    );
    Ok(Status::Ok)
}

#[derive(Serialize)]
struct PowerRow {
    mean_b: f64,
    mean_power: f64,
    /// Mean power relative to full brightness.
    relative_to_full: f64,
    loss_std: f64,
}

#[derive(Serialize)]
struct PowerReport {
    calibration: String,
    target_power: f64,
    full: PowerRow,
    baseline: PowerRow,
    ours: PowerRow,
    /// `|ours - baseline| / baseline` of mean power.
    baseline_ours_relative_difference: f64,
}

fn power_report(cfg: &RunConfig, out: &Output) -> Result<Status> {
    let table = load_table(cfg, out)?;
    let (display, power, curve) = (cfg.display()?, cfg.power()?, cfg.curve()?);
    let target = cfg.budget().target_power(&table, &power, &display)?;
    let ocfg = cfg.optimizer(target);
    let read = |path: &PathBuf| -> Result<BrightnessSchedule> {
        let data_err = |message: String| lumadim::Error::Data {
            path: path.clone(),
            message,
        };
        let text = std::fs::read_to_string(path).map_err(|source| CliError::Io {
            path: path.clone(),
            source,
        })?;
        let sched = BrightnessSchedule::from_csv(&text).map_err(|e| data_err(e.to_string()))?;
        if sched.len() != table.frame_count() {
            return Err(data_err(format!(
                "schedule has {} frames, loss table has {}",
                sched.len(),
                table.frame_count()
            ))
            .into());
        }
        // recompute from the table so all columns share one power model
        Ok(BrightnessSchedule::evaluate(sched.b, &table, &power, &display))
    };
    let mut status = Status::Ok;
    let base = match &cfg.baseline_schedule {
        Some(p) => read(p)?,
        None => constant_baseline(&table, &power, &display, &ocfg)?,
    };
    let ours = match &cfg.optimized_schedule {
        Some(p) => read(p)?,
        None => {
            let sched = optimize_schedule(&table, &power, &display, &curve, &ocfg)?;
            if !sched.converged {
                status = Status::NotConverged;
            }
            sched
        }
    };
    let full_power = mean_power_at(1.0, &table, &power, &display);
    let row = |s: &BrightnessSchedule| PowerRow {
        mean_b: s.mean_b(),
        mean_power: s.mean_power,
        relative_to_full: s.mean_power / full_power,
        loss_std: s.loss_std(),
    };
    let report = PowerReport {
        calibration: curve.provenance.clone(),
        target_power: target,
        full: PowerRow {
            mean_b: 1.0,
            mean_power: full_power,
            relative_to_full: 1.0,
            loss_std: 0.0,
        },
        baseline: row(&base),
        ours: row(&ours),
        baseline_ours_relative_difference: (ours.mean_power - base.mean_power).abs() / base.mean_power,
    };
    let mut csv = String::from("condition,mean_b,mean_power,relative_to_full,loss_std\n");
    for (name, r) in [
        ("full", &report.full),
        ("baseline", &report.baseline),
        ("ours", &report.ours),
    ] {
        csv.push_str(&format!(
            "{name},{},{},{},{}\n",
            sig9(r.mean_b),
            sig9(r.mean_power),
            sig9(r.relative_to_full),
            sig9(r.loss_std)
        ));
    }
    out.write("power_report.csv", &csv)?;
    out.write_json("power_report.json", &report)?;
    println!(
        "mean power: full {} W, baseline {} W, ours {} W",
        sig9(full_power),
        sig9(report.baseline.mean_power),
        sig9(report.ours.mean_power)
    );
    Ok(status)
}
