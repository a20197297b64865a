//! Gaussian and Laplacian pyramids (Burt–Adelson) on luminance planes.
//!
//! The smoothing kernel is the 5-tap binomial `[1, 4, 6, 4, 1] / 16` applied
//! separably with mirror (reflect-101) boundaries. `reduce` blurs then keeps
//! every other sample; `expand` inserts zeros between samples and blurs with
//! twice the kernel. A Laplacian band is `G_k - expand(G_{k+1})`, so
//! collapsing the bands onto the low-pass residual reproduces the input up to
//! rounding.

use crate::display::LuminanceImage;
use crate::error::{Error, Result};

/// Identifier written into sidecar metadata.
pub const KERNEL_ID: &str = "binomial5-reflect101";

const KERNEL: [f64; 5] = [1.0 / 16.0, 4.0 / 16.0, 6.0 / 16.0, 4.0 / 16.0, 1.0 / 16.0];

/// Smallest image side accepted by [`build_band_decomposition`].
pub const MIN_SIDE: usize = 16;

/// A dense row-major plane of `f64` samples.
#[derive(Debug, Clone, PartialEq)]
pub struct Plane {
    pub width: usize,
    pub height: usize,
    pub data: Vec<f64>,
}

impl Plane {
    pub fn new(width: usize, height: usize, data: Vec<f64>) -> Self {
        assert_eq!(data.len(), width * height, "plane buffer size");
        Plane { width, height, data }
    }

    pub fn zeros(width: usize, height: usize) -> Self {
        Plane::new(width, height, vec![0.0; width * height])
    }

    pub fn from_image(image: &LuminanceImage) -> Self {
        Plane::new(image.width(), image.height(), image.values().to_vec())
    }

    #[inline]
    pub fn at(&self, x: usize, y: usize) -> f64 {
        self.data[y * self.width + x]
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }
}

/// Mirror index about the first and last sample without repeating them
/// (`-1 -> 1`, `n -> n - 2`). Works for any `n >= 1`.
#[inline]
pub(crate) fn reflect101(i: isize, n: usize) -> usize {
    if n == 1 {
        return 0;
    }
    let period = 2 * (n as isize - 1);
    let mut m = i.rem_euclid(period);
    if m >= n as isize {
        m = period - m;
    }
    m as usize
}

/// Blur with the binomial kernel and keep even samples. Output side is
/// `ceil(side / 2)`.
pub fn reduce(src: &Plane) -> Plane {
    let (w, h) = (src.width, src.height);
    let ow = w.div_ceil(2);
    let oh = h.div_ceil(2);

    // horizontal pass at even columns only
    let mut tmp = vec![0.0; ow * h];
    let xtaps: Vec<[usize; 5]> = (0..ow)
        .map(|ox| {
            let x = (2 * ox) as isize;
            std::array::from_fn(|t| reflect101(x + t as isize - 2, w))
        })
        .collect();
    for y in 0..h {
        let row = &src.data[y * w..(y + 1) * w];
        let out = &mut tmp[y * ow..(y + 1) * ow];
        for (o, taps) in out.iter_mut().zip(&xtaps) {
            *o = taps.iter().zip(KERNEL).map(|(&i, k)| row[i] * k).sum();
        }
    }

    let mut data = vec![0.0; ow * oh];
    for oy in 0..oh {
        let y = (2 * oy) as isize;
        let out = &mut data[oy * ow..(oy + 1) * ow];
        for (t, k) in KERNEL.iter().enumerate() {
            let sy = reflect101(y + t as isize - 2, h);
            let row = &tmp[sy * ow..(sy + 1) * ow];
            for (o, v) in out.iter_mut().zip(row) {
                *o += k * v;
            }
        }
    }
    Plane::new(ow, oh, data)
}

/// Taps of the zero-inserted upsampling along one axis: for each output
/// sample, the contributing source indices and weights.
fn expand_taps(src_len: usize, out_len: usize) -> Vec<Vec<(usize, f64)>> {
    if out_len == 1 {
        // a single sample has no zero-inserted neighbours to blur with
        return vec![vec![(0, 1.0)]];
    }
    (0..out_len)
        .map(|o| {
            let mut taps: Vec<(usize, f64)> = Vec::with_capacity(3);
            for (t, k) in KERNEL.iter().enumerate() {
                let u = reflect101(o as isize + t as isize - 2, out_len);
                if u.is_multiple_of(2) {
                    let s = (u / 2).min(src_len - 1);
                    match taps.iter_mut().find(|(i, _)| *i == s) {
                        Some(tap) => tap.1 += 2.0 * k,
                        None => taps.push((s, 2.0 * k)),
                    }
                }
            }
            taps
        })
        .collect()
}

/// Upsample to `out_w x out_h` by zero insertion and blurring with twice the
/// binomial kernel. `out_w` must be `2 * src.width` or `2 * src.width - 1`
/// (same for heights).
pub fn expand(src: &Plane, out_w: usize, out_h: usize) -> Plane {
    debug_assert!(out_w.div_ceil(2) == src.width && out_h.div_ceil(2) == src.height);
    let xt = expand_taps(src.width, out_w);
    let yt = expand_taps(src.height, out_h);

    let mut tmp = vec![0.0; out_w * src.height];
    for y in 0..src.height {
        let row = &src.data[y * src.width..(y + 1) * src.width];
        let out = &mut tmp[y * out_w..(y + 1) * out_w];
        for (o, taps) in out.iter_mut().zip(&xt) {
            *o = taps.iter().map(|&(i, k)| row[i] * k).sum();
        }
    }

    let mut data = vec![0.0; out_w * out_h];
    for (oy, taps) in yt.iter().enumerate() {
        let out = &mut data[oy * out_w..(oy + 1) * out_w];
        for &(sy, k) in taps {
            let row = &tmp[sy * out_w..(sy + 1) * out_w];
            for (o, v) in out.iter_mut().zip(row) {
                *o += k * v;
            }
        }
    }
    Plane::new(out_w, out_h, data)
}

/// `levels[0]` is the input; each further level is `reduce` of the previous.
#[derive(Debug, Clone)]
pub struct GaussianPyramid {
    pub levels: Vec<Plane>,
}

impl GaussianPyramid {
    pub fn build(base: Plane, count: usize) -> Self {
        let mut levels = Vec::with_capacity(count);
        levels.push(base);
        while levels.len() < count {
            let next = reduce(levels.last().unwrap());
            levels.push(next);
        }
        GaussianPyramid { levels }
    }
}

/// One frequency band of a decomposed image.
#[derive(Debug, Clone)]
pub struct BandLevel {
    /// Band-limited luminance difference, cd/m².
    pub delta_l: Plane,
    /// Local adaptation luminance at the band's resolution, cd/m².
    pub adapt_l: Plane,
    /// Center spatial frequency in cycles per degree.
    pub center_freq: f64,
}

/// Laplacian bands with their adaptation luminance, plus the low-pass
/// residual needed to reconstruct the image.
#[derive(Debug, Clone)]
pub struct BandDecomposition {
    pub levels: Vec<BandLevel>,
    pub residual: Plane,
    pub ppd: f64,
}

/// Number of band levels for an image whose shorter side is `min_side`:
/// `floor(log2(min_side)) - 2`.
pub fn band_count(min_side: usize) -> usize {
    (usize::BITS - 1 - min_side.leading_zeros()) as usize - 2
}

/// Center frequency of band `k` (0 = finest) in cycles per degree.
pub fn center_frequency(ppd: f64, level: usize) -> f64 {
    ppd / f64::powi(2.0, level as i32 + 2)
}

/// Laplacian decomposition of `image` with adaptation luminance taken from
/// the Gaussian level two steps coarser than each band, expanded back to the
/// band's resolution.
pub fn build_band_decomposition(image: &LuminanceImage, ppd: f64) -> Result<BandDecomposition> {
    let (w, h) = (image.width(), image.height());
    if w.min(h) < MIN_SIDE {
        return Err(Error::ImageTooSmall {
            width: w,
            height: h,
            min: MIN_SIDE,
        });
    }
    if !(ppd > 0.0 && ppd.is_finite()) {
        return Err(Error::invalid(format!("pixels per degree must be > 0, got {ppd}")));
    }
    let bands = band_count(w.min(h));
    let gauss = GaussianPyramid::build(Plane::from_image(image), bands + 2);
    let g = &gauss.levels;

    let levels = (0..bands)
        .map(|k| {
            let (lw, lh) = (g[k].width, g[k].height);
            let up = expand(&g[k + 1], lw, lh);
            let delta: Vec<f64> = g[k].data.iter().zip(&up.data).map(|(a, b)| a - b).collect();
            let mid = expand(&g[k + 2], g[k + 1].width, g[k + 1].height);
            let adapt = expand(&mid, lw, lh);
            BandLevel {
                delta_l: Plane::new(lw, lh, delta),
                adapt_l: adapt,
                center_freq: center_frequency(ppd, k),
            }
        })
        .collect();

    Ok(BandDecomposition {
        levels,
        residual: g[bands].clone(),
        ppd,
    })
}

impl BandDecomposition {
    /// Rebuilds the image from the bands and the residual.
    pub fn collapse(&self) -> Plane {
        let mut cur = self.residual.clone();
        for level in self.levels.iter().rev() {
            let d = &level.delta_l;
            let mut up = expand(&cur, d.width, d.height);
            for (u, v) in up.data.iter_mut().zip(&d.data) {
                *u += v;
            }
            cur = up;
        }
        cur
    }
}
