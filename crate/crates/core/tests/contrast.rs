use lumadim::contrast::{apply_masking, contrast_loss, ContrastParams, FrameContrast, ThresholdMode};
use lumadim::display::{apply_dimming, DisplayModel, LuminanceImage};
use lumadim::pyramid::Plane;
use lumadim::scenes::Scene;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// A second, deliberately naive implementation of the whole pipeline:
/// non-separable 2-D convolutions, per-pixel window sums, no caching.
mod oracle {
    use lumadim::contrast::ContrastParams;

    const K: [f64; 5] = [1.0 / 16.0, 4.0 / 16.0, 6.0 / 16.0, 4.0 / 16.0, 1.0 / 16.0];

    #[derive(Clone)]
    pub struct Img {
        pub w: usize,
        pub h: usize,
        pub v: Vec<f64>,
    }

    fn mirror(i: isize, n: usize) -> usize {
        let n = n as isize;
        let mut i = i;
        while i < 0 || i >= n {
            if i < 0 {
                i = -i;
            }
            if i >= n {
                i = 2 * (n - 1) - i;
            }
        }
        i as usize
    }

    fn reduce(src: &Img) -> Img {
        let (w, h) = (src.w.div_ceil(2), src.h.div_ceil(2));
        let mut v = vec![0.0; w * h];
        for oy in 0..h {
            for ox in 0..w {
                let mut s = 0.0;
                for (ty, ky) in K.iter().enumerate() {
                    for (tx, kx) in K.iter().enumerate() {
                        let x = mirror(2 * ox as isize + tx as isize - 2, src.w);
                        let y = mirror(2 * oy as isize + ty as isize - 2, src.h);
                        s += kx * ky * src.v[y * src.w + x];
                    }
                }
                v[oy * w + ox] = s;
            }
        }
        Img { w, h, v }
    }

    fn expand(src: &Img, w: usize, h: usize) -> Img {
        let mut v = vec![0.0; w * h];
        for oy in 0..h {
            for ox in 0..w {
                let mut s = 0.0;
                for (ty, ky) in K.iter().enumerate() {
                    for (tx, kx) in K.iter().enumerate() {
                        let ux = mirror(ox as isize + tx as isize - 2, w);
                        let uy = mirror(oy as isize + ty as isize - 2, h);
                        if ux.is_multiple_of(2) && uy.is_multiple_of(2) {
                            s += 4.0 * kx * ky * src.v[(uy / 2) * src.w + ux / 2];
                        }
                    }
                }
                v[oy * w + ox] = s;
            }
        }
        Img { w, h, v }
    }

    /// Visible fraction of an image; sides must be powers of two.
    pub fn visible_fraction(img: &Img, params: &ContrastParams) -> f64 {
        let side = img.w.min(img.h);
        let bands = (side as f64).log2().floor() as usize - 2;
        let mut g = vec![img.clone()];
        for _ in 0..bands + 1 {
            g.push(reduce(g.last().unwrap()));
        }
        let mut total = 0.0;
        for k in 0..bands {
            let (w, h) = (g[k].w, g[k].h);
            let up = expand(&g[k + 1], w, h);
            let mid = expand(&g[k + 2], g[k + 1].w, g[k + 1].h);
            let adapt = expand(&mid, w, h);
            let freq = params.ppd / 2f64.powi(k as i32 + 2);
            let c: Vec<f64> = (0..w * h)
                .map(|i| {
                    let dl = g[k].v[i] - up.v[i];
                    let la = adapt.v[i];
                    if dl == 0.0 {
                        0.0
                    } else {
                        dl / (la + params.epsilon) * params.csf.sensitivity(freq, la.max(params.epsilon))
                    }
                })
                .collect();
            let mut visible = 0usize;
            for y in 0..h {
                for x in 0..w {
                    let mut pool = 0.0;
                    for dy in -2isize..=2 {
                        for dx in -2isize..=2 {
                            let sx = (x as isize + dx).clamp(0, w as isize - 1) as usize;
                            let sy = (y as isize + dy).clamp(0, h as isize - 1) as usize;
                            pool += c[sy * w + sx].abs().powf(0.2);
                        }
                    }
                    let ci = c[y * w + x];
                    let ct = ci.signum() * ci.abs().powf(0.7) / (1.0 + pool / 25.0);
                    if ci != 0.0 && ct > 1.0 {
                        visible += 1;
                    }
                }
            }
            total += visible as f64 / (w * h) as f64;
        }
        total / bands as f64
    }
}

#[test]
fn checkerboard_loss_matches_naive_implementation() {
    let params = ContrastParams::default();
    let display = DisplayModel::default();
    for t in [0, 6, 12] {
        let frame = Scene::Checkerboard.frame(t, &display).unwrap();
        let img = oracle::Img {
            w: frame.width(),
            h: frame.height(),
            v: frame.values().to_vec(),
        };
        let dimmed = oracle::Img {
            v: img.v.iter().map(|v| v * 0.3).collect(),
            ..img.clone()
        };
        let reference = oracle::visible_fraction(&img, &params);
        let want = (1.0 - oracle::visible_fraction(&dimmed, &params) / reference).abs();
        let got = contrast_loss(&frame, 0.3, &params).unwrap();
        assert!((got - want).abs() <= 1e-9, "frame {t}: {got} vs naive {want}");
        let fc = FrameContrast::new(&frame, &params).unwrap();
        assert!((fc.reference_fraction() - reference).abs() <= 1e-12);
    }
}

#[test]
fn single_supra_threshold_pixel_masks_itself() {
    let mut raw = Plane::zeros(9, 9);
    raw.data[4 * 9 + 4] = 3.0;
    let masked = apply_masking(&raw);
    let want = 3f64.powf(0.7) / (1.0 + 3f64.powf(0.2) / 25.0);
    assert!((masked.at(4, 4) - want).abs() <= 1e-12);
    let mut unit = Plane::zeros(9, 9);
    unit.data[4 * 9 + 4] = 1.0;
    assert!((apply_masking(&unit).at(4, 4) - 1.0 / (1.0 + 1.0 / 25.0)).abs() <= 1e-12);
}

proptest! {
    #[test]
    fn masking_is_bounded_and_odd(seed in any::<u64>(), amp in 0.01f64..100.0) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let raw = Plane::new(12, 10, (0..120).map(|_| rng.gen_range(-amp..amp)).collect());
        let masked = apply_masking(&raw);
        let neg = apply_masking(&Plane::new(12, 10, raw.data.iter().map(|v| -v).collect()));
        for ((c, ct), n) in raw.data.iter().zip(&masked.data).zip(&neg.data) {
            prop_assert!(ct.abs() <= c.abs().powf(0.7) + 1e-15);
            prop_assert_eq!(*n, -*ct);
        }
    }

    #[test]
    fn loss_is_a_fraction_and_zero_at_full_brightness(seed in any::<u64>(), b in 0.05f64..1.0) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let values: Vec<f64> = (0..32 * 32).map(|_| rng.gen_range(0.1..300.0)).collect();
        let img = LuminanceImage::new(32, 32, values).unwrap();
        let params = ContrastParams::default();
        let fc = FrameContrast::new(&img, &params).unwrap();
        prop_assert_eq!(fc.loss(1.0).unwrap(), 0.0);
        let loss = fc.loss(b).unwrap();
        prop_assert!((0.0..=1.0).contains(&loss));
        // the cached path agrees with dimming the image and starting over
        let dimmed = FrameContrast::new(&apply_dimming(&img, b).unwrap(), &params).unwrap();
        let direct = (1.0 - dimmed.reference_fraction() / fc.reference_fraction()).abs();
        prop_assert!((loss - direct).abs() <= 1e-12 || fc.reference_fraction() == 0.0);
    }
}

#[test]
fn uniform_frames_show_no_contrast() {
    let params = ContrastParams::default();
    for level in [0.1, 5.0, 400.0] {
        let fc = FrameContrast::new(&LuminanceImage::constant(64, 64, level).unwrap(), &params).unwrap();
        assert_eq!(fc.reference_fraction(), 0.0);
        assert_eq!(fc.loss(0.2).unwrap(), 0.0);
    }
}

#[test]
fn absolute_threshold_counts_at_least_as_much() {
    let display = DisplayModel::default();
    let frame = Scene::Library.frame(0, &display).unwrap();
    let signed = FrameContrast::new(&frame, &ContrastParams::default()).unwrap();
    let absolute = FrameContrast::new(
        &frame,
        &ContrastParams {
            threshold: ThresholdMode::Absolute,
            ..ContrastParams::default()
        },
    )
    .unwrap();
    assert!(absolute.reference_fraction() >= signed.reference_fraction());
    assert!(signed.reference_fraction() > 0.0);
}

#[test]
fn invalid_factors_are_rejected() {
    let img = LuminanceImage::constant(32, 32, 10.0).unwrap();
    let params = ContrastParams::default();
    for b in [0.0, -0.1, 1.5, f64::NAN] {
        assert!(contrast_loss(&img, b, &params).is_err());
    }
}
