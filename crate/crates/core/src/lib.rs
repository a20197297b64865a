//! Perceived luminance-contrast loss of video frames under display dimming,
//! and power-budgeted brightness schedules built on top of it.
//!
//! The pipeline runs from encoded frames to a per-frame dimming factor:
//!
//! 1. [`display`] converts encoded pixels to luminance and models panel
//!    power.
//! 2. [`pyramid`], [`csf`] and [`contrast`] decompose a frame into frequency
//!    bands, normalize them by contrast sensitivity, apply masking, and
//!    measure the fraction of visible contrast a dimmed frame keeps.
//! 3. [`table`] samples that loss for every frame at a few dimming factors.
//! 4. [`scheduler`] picks factors offline under a power budget and the
//!    modulation-rate limit fitted by [`calibration`]; [`controller`] does
//!    the same online with a PID loop.

// `!(x > 0.0)` rejects NaN along with non-positive values
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod calibration;
pub mod contrast;
pub mod controller;
pub mod csf;
pub mod display;
pub mod error;
pub mod format;
pub mod io;
pub mod pyramid;
pub mod scenes;
pub mod scheduler;
pub mod table;

pub use calibration::{fit_logistic_threshold, fit_threshold_curve, max_rate, CalibrationCurve, ThresholdTrial};
pub use contrast::{contrast_loss, ContrastParams, FrameContrast, ThresholdMode};
pub use controller::{pid_step, run_online, ControllerConfig, OnlineTrace, PidState};
pub use display::{apply_dimming, encode_to_luminance, DisplayModel, LuminanceImage, PowerMode, PowerModel};
pub use error::{Error, Result};
pub use scheduler::{
    constant_baseline, optimize_schedule, pairwise_dispersion, validate_schedule, BrightnessSchedule, OptimizerConfig,
    ValidationReport,
};
pub use table::{interp_loss, precompute_loss_table, LossTable};
