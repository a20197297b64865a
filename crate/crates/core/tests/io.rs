use std::path::Path;

use image::{GrayImage, ImageBuffer, Luma, RgbImage};
use lumadim::display::DisplayModel;
use lumadim::io::{load_sequence, SequenceManifest};

fn manifest(dir: &Path, pattern: &str) -> SequenceManifest {
    SequenceManifest::from_pattern(dir.join(pattern).to_string_lossy().into_owned())
}

#[test]
fn eight_bit_sequence_loads_in_range() {
    let dir = tempfile::tempdir().unwrap();
    for i in 0..3u8 {
        let img = GrayImage::from_fn(32, 24, |x, y| Luma([(x * 8 + y + i as u32) as u8]));
        img.save(dir.path().join(format!("f_{i:03}.png"))).unwrap();
    }
    let frames = load_sequence(&manifest(dir.path(), "f_%03d.png")).unwrap();
    assert_eq!(frames.len(), 3);
    let d = DisplayModel::default();
    for f in &frames {
        assert_eq!((f.width(), f.height()), (32, 24));
        assert!(f.values().iter().all(|&v| v >= d.l_black && v <= d.l_max + d.l_black));
    }
    // the first pixel of frame 0 is black
    assert_eq!(frames[0].values()[0], d.l_black);
}

#[test]
fn mismatched_sizes_are_an_error_naming_the_file() {
    let dir = tempfile::tempdir().unwrap();
    GrayImage::new(64, 64).save(dir.path().join("f_0.png")).unwrap();
    GrayImage::new(32, 32).save(dir.path().join("f_1.png")).unwrap();
    let err = load_sequence(&manifest(dir.path(), "f_%d.png")).unwrap_err();
    assert!(matches!(err, lumadim::Error::DimensionMismatch { .. }));
    assert!(err.to_string().contains("f_1.png"), "{err}");
}

#[test]
fn sixteen_bit_input_is_normalized_by_its_range() {
    let dir = tempfile::tempdir().unwrap();
    let img: ImageBuffer<Luma<u16>, Vec<u16>> =
        ImageBuffer::from_fn(16, 16, |x, _| Luma([if x < 8 { 0 } else { 65535 }]));
    img.save(dir.path().join("deep_0.png")).unwrap();
    let narrow = GrayImage::from_fn(16, 16, |x, _| Luma([if x < 8 { 0 } else { 255 }]));
    narrow.save(dir.path().join("narrow_0.png")).unwrap();
    let deep = load_sequence(&manifest(dir.path(), "deep_%d.png")).unwrap();
    let eight = load_sequence(&manifest(dir.path(), "narrow_%d.png")).unwrap();
    assert_eq!(deep[0].values(), eight[0].values());
}

#[test]
fn rgb_is_reduced_to_luma() {
    let dir = tempfile::tempdir().unwrap();
    RgbImage::from_pixel(16, 16, image::Rgb([255, 255, 255]))
        .save(dir.path().join("c_0.png"))
        .unwrap();
    let frames = load_sequence(&manifest(dir.path(), "c_%d.png")).unwrap();
    let d = DisplayModel::default();
    assert!(frames[0].values().iter().all(|v| (v - d.l_max).abs() < 1e-9));
}

#[test]
fn missing_and_corrupt_files_name_the_path() {
    let dir = tempfile::tempdir().unwrap();
    let err = load_sequence(&manifest(dir.path(), "none_%d.png")).unwrap_err();
    assert!(err.to_string().contains("none_0.png"), "{err}");

    std::fs::write(dir.path().join("bad_0.png"), b"not an image").unwrap();
    let err = load_sequence(&manifest(dir.path(), "bad_%d.png")).unwrap_err();
    assert!(err.to_string().contains("bad_0.png"), "{err}");
}
