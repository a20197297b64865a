//! Procedural test sequences.
//!
//! Every scene is generated deterministically from its frame index, so the
//! sequences need no data files. Natural scenes change their mean luminance
//! slowly enough that constant dimming respects the modulation-rate limit at
//! 72 Hz, leaving the scheduler room to move.

use serde::{Deserialize, Serialize};

use crate::display::{DisplayModel, LuminanceImage};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scene {
    /// Bright indoor shelves under a slow pan.
    Library,
    /// Sky brightening over a textured horizon while the sun rises.
    Sunrise,
    /// Dim brick walls lit by a wandering flashlight.
    Basement,
    /// Window, furniture and a person walking across the room.
    LivingRoom,
    /// Camera drifting over terrain while moving in and out of shade.
    Exploration,
    /// 20 frames of a checkerboard whose white tiles step toward black.
    Checkerboard,
    /// 3000 small frames of drifting terrain, for timing.
    Long,
}

impl Scene {
    pub const ALL: [Scene; 7] = [
        Scene::Library,
        Scene::Sunrise,
        Scene::Basement,
        Scene::LivingRoom,
        Scene::Exploration,
        Scene::Checkerboard,
        Scene::Long,
    ];

    /// Scenes that stand in for natural video.
    pub const NATURAL: [Scene; 5] = [
        Scene::Library,
        Scene::Sunrise,
        Scene::Basement,
        Scene::LivingRoom,
        Scene::Exploration,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Scene::Library => "library",
            Scene::Sunrise => "sunrise",
            Scene::Basement => "basement",
            Scene::LivingRoom => "living_room",
            Scene::Exploration => "exploration",
            Scene::Checkerboard => "checkerboard",
            Scene::Long => "long",
        }
    }

    pub fn from_name(name: &str) -> Result<Self> {
        Scene::ALL.into_iter().find(|s| s.name() == name).ok_or_else(|| {
            let names: Vec<_> = Scene::ALL.iter().map(|s| s.name()).collect();
            Error::invalid(format!("unknown scene {name:?}; expected one of {}", names.join(", ")))
        })
    }

    pub fn frame_count(self) -> usize {
        match self {
            Scene::Checkerboard => 20,
            Scene::Long => 3000,
            Scene::Exploration => 960,
            _ => 240,
        }
    }

    /// `(width, height)` in pixels.
    pub fn size(self) -> (usize, usize) {
        match self {
            Scene::Checkerboard => (256, 256),
            Scene::Long => (64, 64),
            _ => (96, 72),
        }
    }

    /// Encoded pixel values in `[0, 1]` of frame `t`, row-major.
    pub fn encoded_frame(self, t: usize) -> Vec<f64> {
        let (w, h) = self.size();
        let n = self.frame_count();
        let tau = t as f64 / (n - 1) as f64;
        let mut out = Vec::with_capacity(w * h);
        for y in 0..h {
            for x in 0..w {
                let (xf, yf) = (x as f64, y as f64);
                let v = match self {
                    Scene::Library => library(xf, yf, t as f64, w as f64, h as f64),
                    Scene::Sunrise => sunrise(xf, yf, t as f64, tau, w as f64, h as f64),
                    Scene::Basement => basement(xf, yf, t as f64, w as f64, h as f64),
                    Scene::LivingRoom => living_room(xf, yf, tau, w as f64, h as f64),
                    Scene::Exploration => exploration(xf, yf, t as f64),
                    Scene::Checkerboard => checkerboard(x, y, t),
                    Scene::Long => terrain(xf, yf, t as f64 * 0.5, 0x5eed_0002),
                };
                out.push(v.clamp(0.0, 1.0));
            }
        }
        out
    }

    pub fn frame(self, t: usize, display: &DisplayModel) -> Result<LuminanceImage> {
        let (w, h) = self.size();
        LuminanceImage::from_pixels(w, h, &self.encoded_frame(t), display)
    }

    pub fn frames(self, display: &DisplayModel) -> Result<Vec<LuminanceImage>> {
        (0..self.frame_count()).map(|t| self.frame(t, display)).collect()
    }
}

/// Encoded level of the dark checkerboard tiles.
pub const CHECKERBOARD_BLACK: f64 = 0.02;

/// White level of checkerboard frame `t`: approaches the black level
/// geometrically, losing a fifth of the remaining gap each frame.
pub fn checkerboard_white(t: usize) -> f64 {
    CHECKERBOARD_BLACK + (1.0 - CHECKERBOARD_BLACK) * 0.8f64.powi(t as i32)
}

fn checkerboard(x: usize, y: usize, t: usize) -> f64 {
    // Soft tile edges and a per-tile reflectance spread the band
    // coefficients over a continuum instead of a few repeated values.
    let period = std::f64::consts::PI / 8.0;
    let c = ((x as f64 + 0.5) * period).sin() * ((y as f64 + 0.5) * period).sin();
    let mix = 0.5 + 0.5 * (3.0 * c).tanh();
    let tile = 0.7 + 0.3 * lattice(51, (x / 8) as i64, (y / 8) as i64);
    let white = CHECKERBOARD_BLACK + (checkerboard_white(t) - CHECKERBOARD_BLACK) * tile;
    CHECKERBOARD_BLACK + (white - CHECKERBOARD_BLACK) * mix
}

/// Gamma used to blend partially covered pixels in linear light.
const RENDER_GAMMA: f64 = 2.2;

fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Uniform value in `[0, 1)` attached to an integer lattice point.
fn lattice(seed: u64, ix: i64, iy: i64) -> f64 {
    let h = splitmix(seed ^ splitmix(ix as u64 ^ splitmix(iy as u64)));
    (h >> 11) as f64 / (1u64 << 53) as f64
}

fn smooth(t: f64) -> f64 {
    t * t * (3.0 - 2.0 * t)
}

/// Bilinear value noise with smoothstep weights, in `[0, 1]`.
fn value_noise(seed: u64, x: f64, y: f64) -> f64 {
    let (fx, fy) = (x.floor(), y.floor());
    let (ix, iy) = (fx as i64, fy as i64);
    let (tx, ty) = (smooth(x - fx), smooth(y - fy));
    let a = lattice(seed, ix, iy);
    let b = lattice(seed, ix + 1, iy);
    let c = lattice(seed, ix, iy + 1);
    let d = lattice(seed, ix + 1, iy + 1);
    let top = a + tx * (b - a);
    let bottom = c + tx * (d - c);
    top + ty * (bottom - top)
}

/// Fractal sum of `octaves` noise layers, normalized to `[0, 1]`.
fn fbm(seed: u64, x: f64, y: f64, octaves: u32) -> f64 {
    let (mut sum, mut amp, mut norm, mut freq) = (0.0, 1.0, 0.0, 1.0);
    for o in 0..octaves {
        sum += amp * value_noise(seed.wrapping_add(o as u64), x * freq, y * freq);
        norm += amp;
        amp *= 0.5;
        freq *= 2.0;
    }
    sum / norm
}

fn gaussian(dx: f64, dy: f64, sigma: f64) -> f64 {
    (-(dx * dx + dy * dy) / (2.0 * sigma * sigma)).exp()
}

fn library(x: f64, y: f64, t: f64, w: f64, h: f64) -> f64 {
    const BOOK_W: f64 = 5.0;
    let xw = x + 0.1 * t;
    let shelf_h = h / 3.0;
    let in_shelf = y % shelf_h;
    if in_shelf < 3.0 {
        // shelf board
        return 0.22 + 0.03 * value_noise(11, xw / 4.0, y);
    }
    let row = (y / shelf_h).floor() as i64;
    let book_value = |book: i64| {
        let reflectance = 0.3 + 0.45 * lattice(7, book, row);
        let height = 0.55 + 0.4 * lattice(8, book, row);
        if in_shelf < shelf_h * (1.0 - height) {
            0.12
        } else {
            reflectance
        }
    };
    // spine details and soft lamp falloff toward the edges
    let detail = 0.06 * (fbm(9, xw / 3.0, y / 3.0, 2) - 0.5);
    let lamp = 0.85 + 0.15 * gaussian(x - 0.5 * w, y - 0.3 * h, 0.6 * w);
    let shade = |book: i64| ((book_value(book) + detail) * lamp).max(0.0).powf(RENDER_GAMMA);
    // box-filter the pixel footprint across book boundaries in linear light,
    // so edges glide rather than snap between pixels as the camera pans
    let left = xw - 0.5;
    let book = (left / BOOK_W).floor();
    let cover = ((book + 1.0) * BOOK_W - left).min(1.0);
    let book = book as i64;
    (cover * shade(book) + (1.0 - cover) * shade(book + 1)).powf(1.0 / RENDER_GAMMA)
}

fn sunrise(x: f64, y: f64, t: f64, tau: f64, w: f64, h: f64) -> f64 {
    let light = 0.38 + 0.10 * smooth(tau);
    let horizon = 0.62 * h;
    let clouds = fbm(21, (x + 0.15 * t) / 14.0, y / 7.0, 3);
    let v = if y < horizon {
        let gradient = 0.85 + 0.3 * (y / horizon);
        light * gradient + 0.08 * (clouds - 0.5)
    } else {
        let ground = fbm(22, x / 6.0, y / 4.0, 3);
        light * (0.45 + 0.35 * ground)
    };
    let sun_y = 0.78 * h - 0.3 * h * tau;
    let sun = gaussian(x - 0.7 * w, y - sun_y, 3.0);
    if y < horizon {
        v + 0.35 * sun
    } else {
        v
    }
}

fn basement(x: f64, y: f64, t: f64, w: f64, h: f64) -> f64 {
    // Near-black masonry whose detail sits close to visibility threshold.
    let (bw, bh) = (12.0, 6.0);
    let row = (y / bh).floor();
    let offset = if row as i64 % 2 == 0 { 0.0 } else { bw / 2.0 };
    let (mx, my) = ((x + offset) % bw, y % bh);
    let mortar = mx < 1.0 || my < 1.0;
    let brick_id = ((x + offset) / bw).floor() as i64;
    let grain = 0.004 * (fbm(32, x / 2.0, y / 2.0, 2) - 0.5);
    let base = if mortar {
        0.036
    } else {
        0.04 + 0.004 * lattice(31, brick_id, row as i64)
    } + grain;
    let phase = t / 240.0 * std::f64::consts::TAU;
    let (cx, cy) = (
        0.5 * w + 0.25 * w * phase.sin(),
        0.5 * h + 0.2 * h * (2.0 * phase).sin(),
    );
    let spot = gaussian(x - cx, y - cy, 0.14 * w);
    let strength = 0.8 + 0.6 * (0.5 - 0.5 * phase.cos());
    base * (1.0 + strength * spot)
}

fn living_room(x: f64, y: f64, tau: f64, w: f64, h: f64) -> f64 {
    let wall = 0.42 + 0.04 * (fbm(41, x / 10.0, y / 10.0, 2) - 0.5);
    let mut v = wall;
    // window with mullions
    let (wx0, wx1, wy0, wy1) = (0.08 * w, 0.38 * w, 0.1 * h, 0.5 * h);
    if x >= wx0 && x < wx1 && y >= wy0 && y < wy1 {
        let mullion = ((x - wx0) % 10.0) < 1.5 || ((y - wy0) % 12.0) < 1.5;
        v = if mullion {
            0.3
        } else {
            0.78 + 0.05 * fbm(42, x / 5.0, y / 5.0, 2)
        };
    }
    // sofa
    if y > 0.62 * h && x > 0.45 * w && x < 0.92 * w {
        v = 0.22 + 0.05 * fbm(43, x / 3.0, y / 3.0, 2);
    }
    // person walking left to right and back
    let px = w * (0.35 + 0.3 * (0.5 - 0.5 * (tau * std::f64::consts::PI * 2.0).cos()));
    let body = ((x - px) / (0.06 * w)).powi(2) + ((y - 0.55 * h) / (0.28 * h)).powi(2);
    let head = ((x - px).powi(2) + (y - 0.2 * h).powi(2)).sqrt() < 0.05 * w;
    if body < 1.0 || head {
        v = 0.36 + 0.06 * fbm(44, x / 2.0, y / 2.0, 2);
    }
    v
}

/// Walking in and out of shade: the overall light level cycles once over
/// the sequence, about fourfold in luminance, slowly enough that constant
/// dimming stays within the modulation-rate limit.
fn exploration(x: f64, y: f64, t: f64) -> f64 {
    let phase = t / 960.0 * std::f64::consts::TAU;
    let level = 0.53 + 0.47 * (0.5 - 0.5 * phase.cos());
    level * terrain(x, y, t, 0x5eed_0001)
}

fn terrain(x: f64, y: f64, t: f64, seed: u64) -> f64 {
    // Broad light and shadow the camera drifts through, over fine detail
    // whose contrast is mostly modest.
    let (xw, yw) = (x + 0.35 * t, y + 0.12 * t);
    let light = 0.04 + 0.36 * smooth(fbm(seed, xw / 220.0, yw / 220.0, 2));
    let contrast = 0.04 + 0.22 * fbm(seed ^ 0xc0ffee, xw / 90.0, yw / 90.0, 2);
    let detail = fbm(seed ^ 0xd00d, xw / 4.0, yw / 4.0, 3) - 0.5;
    light * (1.0 + contrast * detail)
}
