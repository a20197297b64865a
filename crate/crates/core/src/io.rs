//! Frame-sequence loading and atomic output.

use std::io::Write as _;
use std::path::{Path, PathBuf};

use image::{DynamicImage, ImageReader};
use serde::{Deserialize, Serialize};

use crate::display::{DisplayModel, LuminanceImage, PowerModel};
use crate::error::{Error, Result};

/// Rec. 709 luma weights applied to encoded RGB values.
pub const LUMA_709: [f64; 3] = [0.2126, 0.7152, 0.0722];

/// Where the frames of a sequence come from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum FrameSource {
    /// printf-style pattern such as `frames/%04d.png`.
    Pattern(String),
    List(Vec<PathBuf>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SequenceManifest {
    pub frames: FrameSource,
    /// First index substituted into a pattern.
    #[serde(default)]
    pub start: usize,
    /// Number of frames; with a pattern and no count, frames are read until
    /// the first missing index.
    #[serde(default)]
    pub count: Option<usize>,
    pub frame_dt: f64,
    pub ppd: f64,
    #[serde(default)]
    pub display: DisplayModel,
    #[serde(default)]
    pub power: PowerModel,
}

impl SequenceManifest {
    pub fn from_pattern(pattern: impl Into<String>) -> Self {
        SequenceManifest {
            frames: FrameSource::Pattern(pattern.into()),
            start: 0,
            count: None,
            frame_dt: crate::scheduler::DEFAULT_FRAME_DT,
            ppd: crate::contrast::ContrastParams::default().ppd,
            display: DisplayModel::default(),
            power: PowerModel::default(),
        }
    }

    /// Paths of every frame, in order.
    pub fn frame_paths(&self) -> Result<Vec<PathBuf>> {
        match &self.frames {
            FrameSource::List(list) => {
                if list.is_empty() {
                    return Err(Error::invalid("frame list is empty"));
                }
                Ok(list.clone())
            }
            FrameSource::Pattern(pattern) => {
                if !has_placeholder(pattern)? {
                    return Ok(vec![PathBuf::from(expand_pattern(pattern, 0)?)]);
                }
                match self.count {
                    Some(n) => (self.start..self.start + n)
                        .map(|i| expand_pattern(pattern, i).map(PathBuf::from))
                        .collect(),
                    None => {
                        let mut paths = Vec::new();
                        let mut i = self.start;
                        loop {
                            let p = PathBuf::from(expand_pattern(pattern, i)?);
                            if !p.exists() {
                                break;
                            }
                            paths.push(p);
                            i += 1;
                        }
                        if paths.is_empty() {
                            return Err(Error::Data {
                                path: PathBuf::from(expand_pattern(pattern, self.start)?),
                                message: "no frames match the pattern".into(),
                            });
                        }
                        Ok(paths)
                    }
                }
            }
        }
    }
}

fn has_placeholder(pattern: &str) -> Result<bool> {
    Ok(expand_pattern(pattern, 0)? != expand_pattern(pattern, 1)?)
}

/// Substitutes `index` into a printf-style pattern. Supports `%d`, `%Nd`,
/// `%0Nd` and `%%`.
pub fn expand_pattern(pattern: &str, index: usize) -> Result<String> {
    let mut out = String::with_capacity(pattern.len() + 8);
    let mut chars = pattern.chars().peekable();
    while let Some(c) = chars.next() {
        if c != '%' {
            out.push(c);
            continue;
        }
        if chars.peek() == Some(&'%') {
            chars.next();
            out.push('%');
            continue;
        }
        let mut spec = String::new();
        while let Some(&d) = chars.peek() {
            if d.is_ascii_digit() {
                spec.push(d);
                chars.next();
            } else {
                break;
            }
        }
        if chars.next() != Some('d') {
            return Err(Error::invalid(format!(
                "unsupported placeholder in frame pattern {pattern:?}"
            )));
        }
        let zero = spec.starts_with('0');
        let width: usize = if spec.is_empty() {
            0
        } else {
            spec.parse().map_err(|_| Error::invalid("bad width"))?
        };
        if zero {
            out.push_str(&format!("{index:0width$}"));
        } else {
            out.push_str(&format!("{index:width$}"));
        }
    }
    Ok(out)
}

/// Decodes one image into encoded values in `[0, 1]`: 8-bit data is divided
/// by 255, 16-bit by 65535, and RGB is reduced with Rec. 709 luma weights.
/// Alpha is ignored.
pub fn decode_encoded(path: &Path) -> Result<(usize, usize, Vec<f64>)> {
    let data_err = |message: String| Error::Data {
        path: path.to_owned(),
        message,
    };
    let img = ImageReader::open(path)
        .map_err(|e| data_err(e.to_string()))?
        .with_guessed_format()
        .map_err(|e| data_err(e.to_string()))?
        .decode()
        .map_err(|e| data_err(format!("decode failed: {e}")))?;
    let (w, h) = (img.width() as usize, img.height() as usize);
    let luma = |r: f64, g: f64, b: f64| LUMA_709[0] * r + LUMA_709[1] * g + LUMA_709[2] * b;
    let values: Vec<f64> = match &img {
        DynamicImage::ImageLuma8(i) => i.as_raw().iter().map(|&v| v as f64 / 255.0).collect(),
        DynamicImage::ImageLumaA8(i) => i.pixels().map(|p| p.0[0] as f64 / 255.0).collect(),
        DynamicImage::ImageLuma16(i) => i.as_raw().iter().map(|&v| v as f64 / 65535.0).collect(),
        DynamicImage::ImageLumaA16(i) => i.pixels().map(|p| p.0[0] as f64 / 65535.0).collect(),
        DynamicImage::ImageRgb8(i) => i
            .pixels()
            .map(|p| luma(p.0[0] as f64, p.0[1] as f64, p.0[2] as f64) / 255.0)
            .collect(),
        DynamicImage::ImageRgba8(i) => i
            .pixels()
            .map(|p| luma(p.0[0] as f64, p.0[1] as f64, p.0[2] as f64) / 255.0)
            .collect(),
        DynamicImage::ImageRgb16(i) => i
            .pixels()
            .map(|p| luma(p.0[0] as f64, p.0[1] as f64, p.0[2] as f64) / 65535.0)
            .collect(),
        DynamicImage::ImageRgba16(i) => i
            .pixels()
            .map(|p| luma(p.0[0] as f64, p.0[1] as f64, p.0[2] as f64) / 65535.0)
            .collect(),
        other => other
            .to_rgb32f()
            .pixels()
            .map(|p| luma(p.0[0] as f64, p.0[1] as f64, p.0[2] as f64))
            .collect(),
    };
    Ok((w, h, values))
}

/// Loads every frame of a manifest and converts it to luminance. All frames
/// must share the first frame's dimensions.
pub fn load_sequence(manifest: &SequenceManifest) -> Result<Vec<LuminanceImage>> {
    manifest.display.validate()?;
    let paths = manifest.frame_paths()?;
    let mut frames = Vec::with_capacity(paths.len());
    let mut dims: Option<(usize, usize)> = None;
    for path in &paths {
        let (w, h, values) = decode_encoded(path)?;
        match dims {
            None => dims = Some((w, h)),
            Some((want_w, want_h)) if (w, h) != (want_w, want_h) => {
                return Err(Error::DimensionMismatch {
                    path: path.clone(),
                    got_w: w,
                    got_h: h,
                    want_w,
                    want_h,
                })
            }
            _ => {}
        }
        frames.push(
            LuminanceImage::from_pixels(w, h, &values, &manifest.display).map_err(|e| Error::Data {
                path: path.clone(),
                message: e.to_string(),
            })?,
        );
    }
    Ok(frames)
}

/// Writes `contents` to `path` through a temporary file in the same
/// directory and a rename, so readers never see a partial file.
pub fn write_atomic(path: &Path, contents: &[u8]) -> Result<()> {
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    std::fs::create_dir_all(dir)?;
    let mut tmp = tempfile::NamedTempFile::new_in(dir)?;
    tmp.write_all(contents)?;
    tmp.as_file().sync_all()?;
    tmp.persist(path).map_err(|e| Error::Io(e.error))?;
    Ok(())
}

/// Writes encoded values in `[0, 1]` as a 16-bit grayscale PNG.
pub fn save_encoded_png(path: &Path, width: usize, height: usize, values: &[f64]) -> Result<()> {
    let data: Vec<u16> = values
        .iter()
        .map(|v| (v.clamp(0.0, 1.0) * 65535.0).round() as u16)
        .collect();
    let img = image::ImageBuffer::<image::Luma<u16>, _>::from_raw(width as u32, height as u32, data)
        .ok_or_else(|| Error::invalid("pixel count does not match dimensions"))?;
    let mut bytes = Vec::new();
    DynamicImage::ImageLuma16(img)
        .write_to(&mut std::io::Cursor::new(&mut bytes), image::ImageFormat::Png)
        .map_err(|e| Error::Data {
            path: path.to_owned(),
            message: e.to_string(),
        })?;
    write_atomic(path, &bytes)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pattern_expansion() {
        assert_eq!(expand_pattern("f_%04d.png", 7).unwrap(), "f_0007.png");
        assert_eq!(expand_pattern("f_%d.png", 123).unwrap(), "f_123.png");
        assert_eq!(expand_pattern("f%3d", 5).unwrap(), "f  5");
        assert_eq!(expand_pattern("100%%_%02d", 3).unwrap(), "100%_03");
        assert!(expand_pattern("f_%s.png", 1).is_err());
        assert!(!has_placeholder("plain.png").unwrap());
    }

    #[test]
    fn atomic_write_replaces() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("sub/out.csv");
        write_atomic(&p, b"one").unwrap();
        write_atomic(&p, b"two").unwrap();
        assert_eq!(std::fs::read(&p).unwrap(), b"two");
        assert_eq!(std::fs::read_dir(p.parent().unwrap()).unwrap().count(), 1);
    }
}
