//! Contrast sensitivity as a function of spatial frequency and adaptation
//! luminance, using Barten's simplified closed-form model:
//!
//! ```text
//!            a · exp(-b u² (1 + c/L)^d)
//! S(u, L) = ─────────────────────────────────────────────────────────
//!           sqrt( (1 + e/X0² + f u²) · (g / L^h + 1 / (1 - exp(-k u²))) )
//! ```
//!
//! with `u` in cycles/degree, `L` in cd/m² and `X0` the angular field size in
//! degrees. Every constant is a field of [`BartenCsf`] so the curve can be
//! recalibrated from config.

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BartenCsf {
    /// Overall gain `a`.
    pub peak_gain: f64,
    /// Optical high-frequency roll-off `b`.
    pub optical_decay: f64,
    /// Luminance constant `c` of the optical term.
    pub optical_lum: f64,
    /// Exponent `d` of the luminance factor in the optical term.
    pub optical_exp: f64,
    /// Field-size term numerator `e`.
    pub field_term: f64,
    /// Angular field size `X0` in degrees.
    pub field_deg: f64,
    /// Frequency term `f` of the integration factor.
    pub freq_term: f64,
    /// Photon-noise gain `g`.
    pub noise_gain: f64,
    /// Photon-noise luminance exponent `h`.
    pub noise_exp: f64,
    /// Lateral-inhibition constant `k` (low-frequency fall-off).
    pub inhibition: f64,
}

impl Default for BartenCsf {
    /// Published constants of the simplified formula with a 40° field.
    fn default() -> Self {
        BartenCsf {
            peak_gain: 5200.0,
            optical_decay: 0.0016,
            optical_lum: 100.0,
            optical_exp: 0.08,
            field_term: 144.0,
            field_deg: 40.0,
            freq_term: 0.64,
            noise_gain: 63.0,
            noise_exp: 0.83,
            inhibition: 0.02,
        }
    }
}

impl BartenCsf {
    /// Sensitivity (inverse threshold contrast) at `freq` cycles/degree and
    /// adaptation luminance `adapt` cd/m². Both must be positive.
    #[inline]
    pub fn sensitivity(&self, freq: f64, adapt: f64) -> f64 {
        let u2 = freq * freq;
        let optical = (-self.optical_decay * u2 * (1.0 + self.optical_lum / adapt).powf(self.optical_exp)).exp();
        let field = 1.0 + self.field_term / (self.field_deg * self.field_deg) + self.freq_term * u2;
        let noise = self.noise_gain / adapt.powf(self.noise_exp) + 1.0 / (1.0 - (-self.inhibition * u2).exp());
        self.peak_gain * optical / (field * noise).sqrt()
    }

    /// Evaluator for one frequency; hoists the frequency-only terms out of
    /// per-pixel loops.
    pub fn at_frequency(&self, freq: f64) -> CsfAtFrequency {
        let u2 = freq * freq;
        let field = 1.0 + self.field_term / (self.field_deg * self.field_deg) + self.freq_term * u2;
        CsfAtFrequency {
            gain: self.peak_gain / field.sqrt(),
            optical_u2: self.optical_decay * u2,
            optical_lum: self.optical_lum,
            optical_exp: self.optical_exp,
            noise_gain: self.noise_gain,
            noise_exp: self.noise_exp,
            inhibition_term: 1.0 / (1.0 - (-self.inhibition * u2).exp()),
        }
    }
}

/// [`BartenCsf`] with the frequency fixed.
#[derive(Debug, Clone, Copy)]
pub struct CsfAtFrequency {
    gain: f64,
    optical_u2: f64,
    optical_lum: f64,
    optical_exp: f64,
    noise_gain: f64,
    noise_exp: f64,
    inhibition_term: f64,
}

impl CsfAtFrequency {
    #[inline]
    pub fn sensitivity(&self, adapt: f64) -> f64 {
        let optical = (-self.optical_u2 * (1.0 + self.optical_lum / adapt).powf(self.optical_exp)).exp();
        let noise = self.noise_gain / adapt.powf(self.noise_exp) + self.inhibition_term;
        self.gain * optical / noise.sqrt()
    }
}

/// Free-function form using the default parameters.
pub fn csf_sensitivity(freq: f64, adapt: f64) -> f64 {
    BartenCsf::default().sensitivity(freq, adapt)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn brighter_adaptation_is_more_sensitive() {
        assert!(csf_sensitivity(4.0, 100.0) > csf_sensitivity(4.0, 1.0));
        let csf = BartenCsf::default();
        let mut prev = 0.0;
        for l in [0.01, 0.1, 1.0, 10.0, 100.0, 1000.0] {
            let s = csf.sensitivity(4.0, l);
            assert!(s > prev);
            prev = s;
        }
    }

    #[test]
    fn positive_and_finite() {
        let csf = BartenCsf::default();
        for f in [0.01, 0.1, 0.5, 1.0, 4.0, 16.0, 40.0, 60.0] {
            for l in [1e-4, 0.01, 1.0, 100.0, 1e4] {
                let s = csf.sensitivity(f, l);
                assert!(s.is_finite() && s > 0.0, "S({f}, {l}) = {s}");
            }
        }
    }

    #[test]
    fn photopic_peak_between_one_and_eight_cpd() {
        let csf = BartenCsf::default();
        let (mut best_f, mut best_s) = (0.0, 0.0);
        for i in 1..=6000 {
            let f = i as f64 * 0.01;
            let s = csf.sensitivity(f, 100.0);
            if s > best_s {
                best_s = s;
                best_f = f;
            }
        }
        assert!((1.0..=8.0).contains(&best_f), "peak at {best_f}");
        // band-pass: well below the peak at both ends
        assert!(csf.sensitivity(0.05, 100.0) < 0.2 * best_s);
        assert!(csf.sensitivity(50.0, 100.0) < 0.2 * best_s);
    }

    #[test]
    fn hoisted_evaluator_agrees() {
        let csf = BartenCsf::default();
        for f in [0.3, 2.0, 9.0] {
            let at = csf.at_frequency(f);
            for l in [0.05, 3.0, 250.0] {
                let a = csf.sensitivity(f, l);
                let b = at.sensitivity(l);
                assert!((a - b).abs() <= 1e-12 * a);
            }
        }
    }
}
