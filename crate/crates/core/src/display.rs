//! Display model: stored pixel values to physical luminance, dimming, and
//! panel power.
//!
//! Pixel values are normalized to `[0, 1]` and mapped through a gamma curve
//! onto the panel's luminance range:
//!
//! ```text
//! L = pixel^gamma * (l_max - l_black) + l_black + l_refl
//! ```
//!
//! Dimming by a factor `b` scales displayed luminance, `D = b * I`. Panel
//! power is an affine function of driven luminance.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Gamma-curve display with a black level and reflected ambient light.
///
/// All luminances are in cd/m².
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DisplayModel {
    pub gamma: f64,
    pub l_max: f64,
    pub l_black: f64,
    pub l_refl: f64,
}

impl Default for DisplayModel {
    /// Profile whose full-brightness backlight power under the default
    /// [`PowerModel`] is about 1.789 W. Reflected ambient light is zero, as
    /// appropriate for a headset.
    fn default() -> Self {
        DisplayModel {
            gamma: 2.2,
            l_max: 804.3,
            l_black: 0.1,
            l_refl: 0.0,
        }
    }
}

impl DisplayModel {
    pub fn new(gamma: f64, l_max: f64, l_black: f64, l_refl: f64) -> Result<Self> {
        let model = DisplayModel {
            gamma,
            l_max,
            l_black,
            l_refl,
        };
        model.validate()?;
        Ok(model)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.gamma > 0.0 && self.gamma.is_finite()) {
            return Err(Error::invalid(format!("gamma must be > 0, got {}", self.gamma)));
        }
        if !(self.l_black >= 0.0 && self.l_max > self.l_black && self.l_max.is_finite()) {
            return Err(Error::invalid(format!(
                "need l_max > l_black >= 0, got l_max={} l_black={}",
                self.l_max, self.l_black
            )));
        }
        if !(self.l_refl >= 0.0 && self.l_refl.is_finite()) {
            return Err(Error::invalid(format!("l_refl must be >= 0, got {}", self.l_refl)));
        }
        Ok(())
    }

    /// Displayed luminance of a normalized pixel value.
    #[inline]
    pub fn encode_to_luminance(&self, pixel: f64) -> f64 {
        pixel.powf(self.gamma) * (self.l_max - self.l_black) + self.l_black + self.l_refl
    }

    /// Smallest and largest luminance the model can produce.
    pub fn luminance_range(&self) -> (f64, f64) {
        (self.l_black + self.l_refl, self.l_max + self.l_refl)
    }
}

/// Free-function form of [`DisplayModel::encode_to_luminance`].
pub fn encode_to_luminance(pixel: f64, model: &DisplayModel) -> f64 {
    model.encode_to_luminance(pixel)
}

/// A single-channel image of luminance values in cd/m², stored row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct LuminanceImage {
    width: usize,
    height: usize,
    values: Vec<f64>,
}

impl LuminanceImage {
    pub fn new(width: usize, height: usize, values: Vec<f64>) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::invalid("image dimensions must be at least 1x1"));
        }
        if values.len() != width * height {
            return Err(Error::invalid(format!(
                "expected {} values for {}x{}, got {}",
                width * height,
                width,
                height,
                values.len()
            )));
        }
        if let Some(v) = values.iter().find(|v| !(v.is_finite() && **v >= 0.0)) {
            return Err(Error::invalid(format!(
                "luminance values must be finite and >= 0, found {v}"
            )));
        }
        Ok(LuminanceImage { width, height, values })
    }

    /// Image where every pixel has the same luminance.
    pub fn constant(width: usize, height: usize, value: f64) -> Result<Self> {
        Self::new(width, height, vec![value; width * height])
    }

    /// Converts normalized pixel values through the display model.
    ///
    /// Values outside `[0, 1]` (HDR sources, rounding noise) are clamped and a
    /// warning is logged once per image.
    pub fn from_pixels(width: usize, height: usize, pixels: &[f64], model: &DisplayModel) -> Result<Self> {
        let mut clamped = 0usize;
        let values = pixels
            .iter()
            .map(|&p| {
                let q = if p.is_nan() { 0.0 } else { p.clamp(0.0, 1.0) };
                if q != p {
                    clamped += 1;
                }
                model.encode_to_luminance(q)
            })
            .collect();
        if clamped > 0 {
            log::warn!("{clamped} pixel values outside [0, 1] were clamped before luminance conversion");
        }
        Self::new(width, height, values)
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn get(&self, x: usize, y: usize) -> f64 {
        self.values[y * self.width + x]
    }

    pub fn mean(&self) -> f64 {
        self.values.iter().sum::<f64>() / self.values.len() as f64
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }
}

/// Returns `b * image`. The factor must lie in `(0, 1]`.
pub fn apply_dimming(image: &LuminanceImage, b: f64) -> Result<LuminanceImage> {
    check_factor(b)?;
    Ok(LuminanceImage {
        width: image.width,
        height: image.height,
        values: image.values.iter().map(|v| v * b).collect(),
    })
}

pub(crate) fn check_factor(b: f64) -> Result<()> {
    if b > 0.0 && b <= 1.0 {
        Ok(())
    } else {
        Err(Error::invalid(format!("dimming factor must be in (0, 1], got {b}")))
    }
}

/// How panel power depends on what is shown.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PowerMode {
    /// Global backlight: power follows the backlight level, `b * l_max`,
    /// whatever the frame contains.
    #[default]
    Backlight,
    /// Self-emissive panel: power follows the frame's mean displayed
    /// luminance, `b * mean(I)`. No measured default ships for this mode.
    ContentDependent,
}

/// Affine power model `P(L) = slope * L + intercept` (watts, L in cd/m²).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PowerModel {
    pub slope: f64,
    pub intercept: f64,
    #[serde(default)]
    pub mode: PowerMode,
}

impl Default for PowerModel {
    /// Fit of a global-backlight LCD: `0.001858 L + 0.2945`.
    fn default() -> Self {
        PowerModel {
            slope: 0.001858,
            intercept: 0.2945,
            mode: PowerMode::Backlight,
        }
    }
}

impl PowerModel {
    pub fn validate(&self) -> Result<()> {
        if !(self.slope >= 0.0 && self.intercept >= 0.0 && self.slope.is_finite() && self.intercept.is_finite()) {
            return Err(Error::invalid(format!(
                "power slope and intercept must be finite and >= 0, got {} and {}",
                self.slope, self.intercept
            )));
        }
        Ok(())
    }

    /// Power drawn while driving luminance `l`.
    #[inline]
    pub fn power(&self, luminance: f64) -> f64 {
        self.slope * luminance + self.intercept
    }

    /// Luminance the panel drives for this frame at full brightness.
    pub fn driven_luminance(&self, display: &DisplayModel, frame_mean: f64) -> f64 {
        match self.mode {
            PowerMode::Backlight => display.l_max,
            PowerMode::ContentDependent => frame_mean,
        }
    }

    /// Power for a frame shown at factor `b`; `frame_mean` is the frame's
    /// mean luminance at full brightness and only matters in
    /// content-dependent mode.
    #[inline]
    pub fn frame_power(&self, b: f64, display: &DisplayModel, frame_mean: f64) -> f64 {
        self.power(b * self.driven_luminance(display, frame_mean))
    }

    /// `d P / d b` for a frame; constant because the model is affine.
    #[inline]
    pub fn power_per_factor(&self, display: &DisplayModel, frame_mean: f64) -> f64 {
        self.slope * self.driven_luminance(display, frame_mean)
    }
}

/// Backlight power at dimming factor `b`: `P(b * l_max)`.
pub fn frame_power(b: f64, model: &DisplayModel, power: &PowerModel) -> f64 {
    power.power(b * model.l_max)
}
