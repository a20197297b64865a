//! Per-frame contrast loss sampled at fixed brightness factors.

use std::fmt::Write as _;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::contrast::{ContrastParams, FrameContrast, ThresholdMode};
use crate::csf::BartenCsf;
use crate::display::{check_factor, LuminanceImage};
use crate::error::{Error, Result};
use crate::format::sig9;
use crate::pyramid::KERNEL_ID;

/// Brightness factors the loss is sampled at by default. The lowest knot
/// bounds the optimizer from below.
pub const DEFAULT_KNOTS: [f64; 6] = [0.05, 0.2, 0.4, 0.6, 0.8, 1.0];

#[derive(Debug, Clone, PartialEq)]
pub struct LossTable {
    knots: Vec<f64>,
    /// `loss[frame][knot]`
    loss: Vec<Vec<f64>>,
    /// Mean luminance of each frame at full brightness, cd/m².
    frame_mean: Vec<f64>,
}

pub(crate) fn validate_knots(knots: &[f64]) -> Result<()> {
    if knots.is_empty() {
        return Err(Error::invalid("at least one knot is required"));
    }
    if knots.iter().any(|&k| !(k > 0.0 && k <= 1.0)) {
        return Err(Error::invalid(format!("knots must lie in (0, 1], got {knots:?}")));
    }
    if knots.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::invalid(format!(
            "knots must be strictly increasing, got {knots:?}"
        )));
    }
    if *knots.last().unwrap() != 1.0 {
        return Err(Error::invalid("knots must include 1.0"));
    }
    Ok(())
}

impl LossTable {
    pub fn new(knots: Vec<f64>, loss: Vec<Vec<f64>>, frame_mean: Vec<f64>) -> Result<Self> {
        validate_knots(&knots)?;
        if loss.is_empty() {
            return Err(Error::invalid("loss table needs at least one frame"));
        }
        if loss.len() != frame_mean.len() {
            return Err(Error::invalid("loss rows and frame means differ in length"));
        }
        for (i, row) in loss.iter().enumerate() {
            if row.len() != knots.len() {
                return Err(Error::invalid(format!(
                    "row {i} has {} values, expected {}",
                    row.len(),
                    knots.len()
                )));
            }
            if row.iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
                return Err(Error::invalid(format!("row {i} has a negative or non-finite loss")));
            }
        }
        if let Some(i) = frame_mean.iter().position(|m| !(m.is_finite() && *m >= 0.0)) {
            return Err(Error::invalid(format!(
                "frame {i} has a negative or non-finite mean luminance"
            )));
        }
        Ok(LossTable {
            knots,
            loss,
            frame_mean,
        })
    }

    pub fn frame_count(&self) -> usize {
        self.loss.len()
    }

    pub fn knots(&self) -> &[f64] {
        &self.knots
    }

    pub fn lowest_knot(&self) -> f64 {
        self.knots[0]
    }

    pub fn row(&self, frame: usize) -> &[f64] {
        &self.loss[frame]
    }

    pub fn loss_at_knot(&self, frame: usize, knot: usize) -> f64 {
        self.loss[frame][knot]
    }

    pub fn frame_means(&self) -> &[f64] {
        &self.frame_mean
    }

    /// Mean displayed luminance of `frame` at knot `knot`.
    pub fn mean_lum(&self, frame: usize, knot: usize) -> f64 {
        self.knots[knot] * self.frame_mean[frame]
    }

    /// Piecewise-linear loss of `frame` at factor `b`, clamped to the lowest
    /// knot's value below it. No range checks.
    #[inline]
    pub fn interp(&self, frame: usize, b: f64) -> f64 {
        let k = &self.knots;
        let row = &self.loss[frame];
        if b <= k[0] {
            return row[0];
        }
        let n = k.len();
        if b >= k[n - 1] {
            return row[n - 1];
        }
        // knots are few; a linear scan beats binary search here
        let mut j = 1;
        while k[j] < b {
            j += 1;
        }
        let t = (b - k[j - 1]) / (k[j] - k[j - 1]);
        row[j - 1] + t * (row[j] - row[j - 1])
    }

    /// Checked form of [`LossTable::interp`].
    pub fn interp_loss(&self, frame: usize, b: f64) -> Result<f64> {
        if frame >= self.frame_count() {
            return Err(Error::FrameOutOfRange {
                index: frame,
                len: self.frame_count(),
            });
        }
        check_factor(b)?;
        Ok(self.interp(frame, b))
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("frame,mean_luminance");
        for k in &self.knots {
            let _ = write!(out, ",{}", sig9(*k));
        }
        out.push('\n');
        for (i, (row, mean)) in self.loss.iter().zip(&self.frame_mean).enumerate() {
            let _ = write!(out, "{i},{}", sig9(*mean));
            for v in row {
                let _ = write!(out, ",{}", sig9(*v));
            }
            out.push('\n');
        }
        out
    }

    pub fn from_csv(text: &str) -> Result<Self> {
        let mut lines = text.lines().filter(|l| !l.trim().is_empty());
        let header = lines.next().ok_or_else(|| Error::parse("loss table", "empty file"))?;
        let cols: Vec<&str> = header.split(',').map(str::trim).collect();
        if cols.len() < 3 || cols[0] != "frame" || cols[1] != "mean_luminance" {
            return Err(Error::parse(
                "loss table",
                "header must start with frame,mean_luminance",
            ));
        }
        let knots = cols[2..]
            .iter()
            .map(|c| c.parse::<f64>())
            .collect::<std::result::Result<Vec<_>, _>>()
            .map_err(|e| Error::parse("loss table", format!("bad knot in header: {e}")))?;
        let mut loss = Vec::new();
        let mut means = Vec::new();
        for (n, line) in lines.enumerate() {
            let vals: Vec<&str> = line.split(',').map(str::trim).collect();
            if vals.len() != cols.len() {
                return Err(Error::parse(
                    "loss table",
                    format!("row {n} has {} fields, expected {}", vals.len(), cols.len()),
                ));
            }
            let idx: usize = vals[0]
                .parse()
                .map_err(|e| Error::parse("loss table", format!("row {n}: bad frame index: {e}")))?;
            if idx != n {
                return Err(Error::parse("loss table", format!("row {n} has frame index {idx}")));
            }
            let nums = vals[1..]
                .iter()
                .map(|c| c.parse::<f64>())
                .collect::<std::result::Result<Vec<_>, _>>()
                .map_err(|e| Error::parse("loss table", format!("row {n}: {e}")))?;
            means.push(nums[0]);
            loss.push(nums[1..].to_vec());
        }
        LossTable::new(knots, loss, means)
    }

    pub fn read_csv(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::Data {
            path: path.to_owned(),
            message: e.to_string(),
        })?;
        Self::from_csv(&text).map_err(|e| Error::Data {
            path: path.to_owned(),
            message: e.to_string(),
        })
    }
}

/// Settings a loss table was computed with, stored next to the CSV.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LossTableMeta {
    pub ppd: f64,
    pub epsilon: f64,
    pub kernel: String,
    pub threshold: ThresholdMode,
    pub csf: BartenCsf,
    pub knots: Vec<f64>,
    pub frames: usize,
}

impl LossTableMeta {
    pub fn new(params: &ContrastParams, table: &LossTable) -> Self {
        LossTableMeta {
            ppd: params.ppd,
            epsilon: params.epsilon,
            kernel: KERNEL_ID.to_string(),
            threshold: params.threshold,
            csf: params.csf,
            knots: table.knots.clone(),
            frames: table.frame_count(),
        }
    }
}

/// Per-frame analysis results alongside the table.
#[derive(Debug, Clone)]
pub struct SequenceAnalysis {
    pub table: LossTable,
    /// Visible fraction of each undimmed frame.
    pub reference_fraction: Vec<f64>,
}

/// Samples the contrast loss of every frame at every knot. Frames are
/// processed in parallel and collected in order.
pub fn precompute_loss_table(frames: &[LuminanceImage], knots: &[f64], params: &ContrastParams) -> Result<LossTable> {
    analyze_sequence(frames, knots, params).map(|a| a.table)
}

/// [`precompute_loss_table`] that also returns each frame's visible fraction.
pub fn analyze_sequence(frames: &[LuminanceImage], knots: &[f64], params: &ContrastParams) -> Result<SequenceAnalysis> {
    validate_knots(knots)?;
    if frames.is_empty() {
        return Err(Error::invalid("no frames to analyze"));
    }
    let rows: Vec<(Vec<f64>, f64, f64)> = frames
        .par_iter()
        .enumerate()
        .map(|(i, frame)| {
            let fc = FrameContrast::new(frame, params).map_err(|e| e.in_frame(i))?;
            let row = knots
                .iter()
                .map(|&b| fc.loss(b))
                .collect::<Result<Vec<_>>>()
                .map_err(|e| e.in_frame(i))?;
            Ok((row, fc.mean_luminance(), fc.reference_fraction()))
        })
        .collect::<Result<_>>()?;
    let mut loss = Vec::with_capacity(rows.len());
    let mut means = Vec::with_capacity(rows.len());
    let mut cv = Vec::with_capacity(rows.len());
    for (row, mean, c) in rows {
        loss.push(row);
        means.push(mean);
        cv.push(c);
    }
    Ok(SequenceAnalysis {
        table: LossTable::new(knots.to_vec(), loss, means)?,
        reference_fraction: cv,
    })
}

/// Checked interpolation; see [`LossTable::interp`].
pub fn interp_loss(table: &LossTable, frame: usize, b: f64) -> Result<f64> {
    table.interp_loss(frame, b)
}
