//! Perceived contrast of a luminance image and its loss under dimming.
//!
//! Per band, contrast is the band-limited luminance difference normalized by
//! local adaptation luminance and scaled by contrast sensitivity:
//!
//! ```text
//! C(f, p)   = ΔL(f, p) / (L_a(f, p) + ε) · S(f, L_a(f, p))
//! C_t(f, p) = sign(C) |C|^0.7 / (1 + (1/25) Σ_{q in 5x5(p)} |C(f, q)|^0.2)
//! ```
//!
//! The visible fraction `C_v` is the share of band samples with `C_t > 1`,
//! averaged over bands (the low-pass residual is excluded). Dimming an image
//! by `b` loses `|1 - C_v(b·I) / C_v(I)|` of its visible contrast.

use serde::{Deserialize, Serialize};

use crate::csf::BartenCsf;
use crate::display::{check_factor, LuminanceImage};
use crate::error::Result;
use crate::pyramid::{build_band_decomposition, BandDecomposition, Plane};

/// Exponent applied to the contrast magnitude in the transducer numerator.
pub const TRANSDUCER_EXPONENT: f64 = 0.7;
/// Exponent applied to neighbor contrast in the masking pool.
pub const MASKING_EXPONENT: f64 = 0.2;
/// Side of the square masking neighborhood.
pub const MASKING_WINDOW: usize = 5;

/// Which transduced contrasts count as visible.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ThresholdMode {
    /// `C_t > 1`: negative contrast never counts.
    #[default]
    Signed,
    /// `|C_t| > 1`.
    Absolute,
}

impl ThresholdMode {
    #[inline]
    fn visible(self, ct: f64) -> bool {
        match self {
            ThresholdMode::Signed => ct > 1.0,
            ThresholdMode::Absolute => ct.abs() > 1.0,
        }
    }
}

/// Parameters of the perceived-contrast model.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ContrastParams {
    /// Angular resolution, pixels per degree.
    pub ppd: f64,
    /// Guard added to adaptation luminance in the contrast denominator, cd/m².
    pub epsilon: f64,
    pub csf: BartenCsf,
    pub threshold: ThresholdMode,
}

impl Default for ContrastParams {
    fn default() -> Self {
        ContrastParams {
            ppd: 25.0,
            epsilon: 1e-4,
            csf: BartenCsf::default(),
            threshold: ThresholdMode::Signed,
        }
    }
}

/// Masked contrast per band, optionally with the pre-masking values.
#[derive(Debug, Clone)]
pub struct ContrastPyramid {
    pub levels: Vec<Plane>,
    pub raw: Option<Vec<Plane>>,
}

/// Contrast of one band of `b · I`, given the decomposition of `I`.
///
/// The decomposition is linear in the image, so the bands of the dimmed image
/// are the bands of `I` times `b`.
fn band_contrast(decomp: &BandDecomposition, level: usize, b: f64, params: &ContrastParams) -> Plane {
    let band = &decomp.levels[level];
    let csf = params.csf.at_frequency(band.center_freq);
    let eps = params.epsilon;
    let data = band
        .delta_l
        .data
        .iter()
        .zip(&band.adapt_l.data)
        .map(|(&dl, &la)| {
            let la = b * la;
            let dl = b * dl;
            if dl == 0.0 {
                return 0.0;
            }
            dl / (la + eps) * csf.sensitivity(la.max(eps))
        })
        .collect();
    Plane::new(band.delta_l.width, band.delta_l.height, data)
}

/// Raw (pre-masking) perceived contrast for every band.
pub fn perceived_contrast(decomp: &BandDecomposition, params: &ContrastParams) -> Vec<Plane> {
    (0..decomp.levels.len())
        .map(|k| band_contrast(decomp, k, 1.0, params))
        .collect()
}

/// Sum over the 5x5 window around each sample, edges replicated.
fn window_sum(src: &Plane) -> Plane {
    let (w, h) = (src.width, src.height);
    let r = (MASKING_WINDOW / 2) as isize;
    let clamp = |i: isize, n: usize| i.clamp(0, n as isize - 1) as usize;

    let mut tmp = vec![0.0; w * h];
    for y in 0..h {
        let row = &src.data[y * w..(y + 1) * w];
        for x in 0..w {
            let mut s = 0.0;
            for dx in -r..=r {
                s += row[clamp(x as isize + dx, w)];
            }
            tmp[y * w + x] = s;
        }
    }
    let mut out = vec![0.0; w * h];
    for y in 0..h {
        for dy in -r..=r {
            let sy = clamp(y as isize + dy, h);
            let row = &tmp[sy * w..(sy + 1) * w];
            for (o, v) in out[y * w..(y + 1) * w].iter_mut().zip(row) {
                *o += v;
            }
        }
    }
    Plane::new(w, h, out)
}

/// Masking transducer over one band of raw contrast.
pub fn apply_masking(raw: &Plane) -> Plane {
    let pooled = Plane::new(
        raw.width,
        raw.height,
        raw.data.iter().map(|c| c.abs().powf(MASKING_EXPONENT)).collect(),
    );
    let sums = window_sum(&pooled);
    let n = (MASKING_WINDOW * MASKING_WINDOW) as f64;
    let data = raw
        .data
        .iter()
        .zip(&sums.data)
        .map(|(&c, &s)| {
            let num = c.signum() * c.abs().powf(TRANSDUCER_EXPONENT);
            if c == 0.0 {
                0.0
            } else {
                num / (1.0 + s / n)
            }
        })
        .collect();
    Plane::new(raw.width, raw.height, data)
}

/// Full perceived-contrast pyramid, keeping the raw values.
pub fn contrast_pyramid(decomp: &BandDecomposition, params: &ContrastParams) -> ContrastPyramid {
    let raw = perceived_contrast(decomp, params);
    let levels = raw.iter().map(apply_masking).collect();
    ContrastPyramid { levels, raw: Some(raw) }
}

/// Fraction of band samples above the visibility threshold, averaged over
/// bands. Returns 0 for a pyramid with no bands.
pub fn visible_fraction(pyr: &ContrastPyramid, mode: ThresholdMode) -> f64 {
    if pyr.levels.is_empty() {
        return 0.0;
    }
    let total: f64 = pyr
        .levels
        .iter()
        .map(|level| level.data.iter().filter(|&&c| mode.visible(c)).count() as f64 / level.len() as f64)
        .sum();
    total / pyr.levels.len() as f64
}

/// `C_v` of `b · I` computed from the decomposition of `I` without building
/// the intermediate pyramid.
pub fn visible_fraction_dimmed(decomp: &BandDecomposition, b: f64, params: &ContrastParams) -> f64 {
    if decomp.levels.is_empty() {
        return 0.0;
    }
    let total: f64 = (0..decomp.levels.len())
        .map(|k| {
            let masked = apply_masking(&band_contrast(decomp, k, b, params));
            masked.data.iter().filter(|&&c| params.threshold.visible(c)).count() as f64 / masked.len() as f64
        })
        .sum();
    total / decomp.levels.len() as f64
}

/// Relative loss of visible contrast; 0 when the reference shows none.
pub fn loss_from_fractions(reference: f64, dimmed: f64) -> f64 {
    if reference == 0.0 {
        0.0
    } else {
        (1.0 - dimmed / reference).abs()
    }
}

/// A decomposed frame with its reference visible fraction cached, for
/// evaluating loss at many dimming factors.
#[derive(Debug, Clone)]
pub struct FrameContrast {
    decomp: BandDecomposition,
    params: ContrastParams,
    reference: f64,
    mean_luminance: f64,
}

impl FrameContrast {
    pub fn new(image: &LuminanceImage, params: &ContrastParams) -> Result<Self> {
        let decomp = build_band_decomposition(image, params.ppd)?;
        let reference = visible_fraction_dimmed(&decomp, 1.0, params);
        Ok(FrameContrast {
            decomp,
            params: *params,
            reference,
            mean_luminance: image.mean(),
        })
    }

    /// `C_v` of the undimmed frame.
    pub fn reference_fraction(&self) -> f64 {
        self.reference
    }

    pub fn mean_luminance(&self) -> f64 {
        self.mean_luminance
    }

    pub fn decomposition(&self) -> &BandDecomposition {
        &self.decomp
    }

    pub fn visible_fraction_at(&self, b: f64) -> f64 {
        if b == 1.0 {
            self.reference
        } else {
            visible_fraction_dimmed(&self.decomp, b, &self.params)
        }
    }

    /// Contrast loss at dimming factor `b` in `(0, 1]`.
    pub fn loss(&self, b: f64) -> Result<f64> {
        check_factor(b)?;
        Ok(loss_from_fractions(self.reference, self.visible_fraction_at(b)))
    }
}

/// Contrast lost when `frame` is dimmed by `b`.
pub fn contrast_loss(frame: &LuminanceImage, b: f64, params: &ContrastParams) -> Result<f64> {
    check_factor(b)?;
    FrameContrast::new(frame, params)?.loss(b)
}
