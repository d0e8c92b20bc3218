//! Two-arm frequency-comb photodetection model.
//!
//! A mode-locked pulse train is split into two arms, each shifted by an
//! acousto-optic modulator (AOM) at `nu_M1` / `nu_M2`, and recombined on a
//! fast photodiode. Writing the common intensity pulse train as `s(t)`
//! (period `1/nu_rep`), the photocurrent is
//!
//! ```text
//! I(t) = (P1 + P2) s(t) + 2 sqrt(P1 P2) s(t) cos(2 pi |nu_M1 - nu_M2| t + phi)
//! ```
//!
//! so the rf spectrum carries teeth at `m * nu_rep` with amplitude
//! `(P1 + P2) c_m` and, when both arms are open, interference sidebands at
//! `m * nu_rep +/- |nu_M1 - nu_M2|` with amplitude `sqrt(P1 P2) c_m`, where
//! `c_m` are the Fourier coefficients of `s(t)`. Sideband power scales with
//! the *product* of arm powers and only the magnitude of the AOM difference
//! enters, so swapping the arms changes nothing.
//!
//! Two independent routes produce the same spectrum: [`rf_line_spectrum`]
//! evaluates the line list analytically from the Gaussian-pulse Fourier
//! coefficients, and [`synthesize_time_domain`] builds the photocurrent
//! sample by sample (a literal sum of Gaussian pulses, no Fourier algebra)
//! for [`crate::spectrum::periodogram`] to analyze. Tests hold the two
//! routes to each other.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result, ValidationIssue};
use crate::noise::{linear_to_db, SAMPLE_BUDGET};
use crate::seed::stream_rng;
use crate::spectrum::{RfSpectrum, SpectralLine};

/// Highest rf frequency the model represents (fast photodiodes and the rf
/// chain top out well below this).
pub const MAX_MODEL_FREQUENCY_HZ: f64 = 100e9;

/// Two-arm comb description.
///
/// `pulse_sigma_s` is the standard deviation of the Gaussian *intensity*
/// pulse; when omitted it defaults so that the highest modeled tooth
/// (`m_max`) sits 20 dB below the fundamental, keeping every modeled
/// harmonic at appreciable power.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CombSpec {
    /// Nominal repetition rate.
    pub nu_rep0_hz: f64,
    /// Highest tooth index modeled.
    pub m_max: u32,
    /// Mean optical power in arm 1 (arbitrary units; only ratios matter).
    pub power_arm1: f64,
    /// Mean optical power in arm 2.
    pub power_arm2: f64,
    /// AOM shift on arm 1.
    pub nu_m1_hz: f64,
    /// AOM shift on arm 2.
    pub nu_m2_hz: f64,
    /// Gaussian intensity-pulse standard deviation; default as above.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pulse_sigma_s: Option<f64>,
}

impl CombSpec {
    /// AOM difference frequency magnitude; only this enters the physics.
    pub fn delta_nu_hz(&self) -> f64 {
        (self.nu_m1_hz - self.nu_m2_hz).abs()
    }

    /// Effective Gaussian intensity-pulse sigma.
    pub fn pulse_sigma(&self) -> f64 {
        self.pulse_sigma_s.unwrap_or_else(|| {
            // exp(-2 pi^2 sigma^2 (m_max nu_rep)^2) = 0.1 (amplitude), i.e.
            // the m_max tooth is 20 dB down in power.
            (std::f64::consts::LN_10 / 2.0).sqrt()
                / (std::f64::consts::PI * f64::from(self.m_max) * self.nu_rep0_hz)
        })
    }

    /// Relative amplitude of harmonic `m` of the pulse train.
    fn harmonic_envelope(&self, m: u32) -> f64 {
        let sigma = self.pulse_sigma();
        let x = 2.0
            * std::f64::consts::PI.powi(2)
            * sigma.powi(2)
            * (f64::from(m) * self.nu_rep0_hz).powi(2);
        (-x).exp()
    }

    pub fn validate(&self, field: &str, issues: &mut Vec<ValidationIssue>) {
        if !(self.nu_rep0_hz > 0.0) || !self.nu_rep0_hz.is_finite() {
            issues.push(ValidationIssue {
                field: format!("{field}.nu_rep0_hz"),
                message: format!("must be positive and finite, got {}", self.nu_rep0_hz),
            });
        }
        if self.m_max < 1 {
            issues.push(ValidationIssue {
                field: format!("{field}.m_max"),
                message: "must be at least 1".to_string(),
            });
        }
        for (name, p) in [("power_arm1", self.power_arm1), ("power_arm2", self.power_arm2)] {
            if !(p >= 0.0) || !p.is_finite() {
                issues.push(ValidationIssue {
                    field: format!("{field}.{name}"),
                    message: format!("must be non-negative and finite, got {p}"),
                });
            }
        }
        for (name, f) in [("nu_m1_hz", self.nu_m1_hz), ("nu_m2_hz", self.nu_m2_hz)] {
            if !(f > 0.0) || !f.is_finite() {
                issues.push(ValidationIssue {
                    field: format!("{field}.{name}"),
                    message: format!("must be positive and finite, got {f}"),
                });
            }
        }
        if self.nu_rep0_hz > 0.0 && !(self.delta_nu_hz() < self.nu_rep0_hz / 2.0) {
            issues.push(ValidationIssue {
                field: format!("{field}.nu_m1_hz/nu_m2_hz"),
                message: format!(
                    "|nu_M1 - nu_M2| = {} Hz must stay below nu_rep0/2 = {} Hz so sidebands stay between teeth",
                    self.delta_nu_hz(),
                    self.nu_rep0_hz / 2.0
                ),
            });
        }
        let top = f64::from(self.m_max) * self.nu_rep0_hz;
        if top > MAX_MODEL_FREQUENCY_HZ {
            issues.push(ValidationIssue {
                field: format!("{field}.m_max"),
                message: format!(
                    "m_max * nu_rep0 = {top} Hz exceeds the model limit {MAX_MODEL_FREQUENCY_HZ} Hz"
                ),
            });
        }
        if let Some(sigma) = self.pulse_sigma_s {
            if !(sigma > 0.0) || !sigma.is_finite() {
                issues.push(ValidationIssue {
                    field: format!("{field}.pulse_sigma_s"),
                    message: format!("must be positive and finite, got {sigma}"),
                });
            } else if sigma * self.nu_rep0_hz > 0.5 {
                issues.push(ValidationIssue {
                    field: format!("{field}.pulse_sigma_s"),
                    message: "pulse is longer than the repetition period; not a pulse train".to_string(),
                });
            }
        }
    }

    fn validated(&self, include_arm1: bool, include_arm2: bool) -> Result<()> {
        let mut issues = Vec::new();
        self.validate("comb", &mut issues);
        if !include_arm1 && !include_arm2 {
            issues.push(ValidationIssue {
                field: "include_arm1/include_arm2".to_string(),
                message: "at least one arm must be included".to_string(),
            });
        }
        if !issues.is_empty() {
            return Err(Error::Invalid(issues));
        }
        if self.both_arms_active(include_arm1, include_arm2) && self.delta_nu_hz() == 0.0 {
            return Err(Error::DegenerateArms);
        }
        Ok(())
    }

    fn both_arms_active(&self, include_arm1: bool, include_arm2: bool) -> bool {
        include_arm1 && include_arm2 && self.power_arm1 > 0.0 && self.power_arm2 > 0.0
    }
}

/// Analytic rf line spectrum of the photocurrent.
///
/// With a single arm: teeth at `m * nu_rep0` for `m = 1..=m_max`. With both
/// arms: the same teeth plus sidebands at `m * nu_rep0 +/- |nu_M1 - nu_M2|`
/// whose power is proportional to the product of the arm powers. The DC
/// term (and with it the baseband interference line at the AOM difference
/// frequency) is excluded: the modeled band starts at the first tooth's
/// lower sideband. Powers are dB relative to the strongest line.
pub fn rf_line_spectrum(
    spec: &CombSpec,
    include_arm1: bool,
    include_arm2: bool,
) -> Result<RfSpectrum> {
    spec.validated(include_arm1, include_arm2)?;

    let p1 = if include_arm1 { spec.power_arm1 } else { 0.0 };
    let p2 = if include_arm2 { spec.power_arm2 } else { 0.0 };
    let tooth_amp = p1 + p2;
    let sideband_amp = if spec.both_arms_active(include_arm1, include_arm2) {
        (spec.power_arm1 * spec.power_arm2).sqrt()
    } else {
        0.0
    };
    let delta = spec.delta_nu_hz();

    let mut lines_abs: Vec<(f64, f64)> = Vec::new();
    for m in 1..=spec.m_max {
        let env = spec.harmonic_envelope(m);
        let tooth_freq = f64::from(m) * spec.nu_rep0_hz;
        let tooth_power = (tooth_amp * env).powi(2);
        if tooth_power > 0.0 {
            lines_abs.push((tooth_freq, tooth_power));
        }
        if sideband_amp > 0.0 {
            let sb_power = (sideband_amp * env).powi(2);
            lines_abs.push((tooth_freq - delta, sb_power));
            lines_abs.push((tooth_freq + delta, sb_power));
        }
    }
    lines_abs.sort_by(|a, b| a.0.total_cmp(&b.0));

    let p_max = lines_abs
        .iter()
        .map(|&(_, p)| p)
        .fold(f64::NEG_INFINITY, f64::max);
    let lines: Vec<SpectralLine> = lines_abs
        .iter()
        .map(|&(f, p)| SpectralLine {
            freq_hz: f,
            power_db: linear_to_db(p / p_max),
        })
        .collect();

    // Analytic lines are delta functions; quote an rbw small enough that
    // the separability invariant holds with room to spare.
    let min_spacing = lines
        .windows(2)
        .map(|w| w[1].freq_hz - w[0].freq_hz)
        .fold(f64::INFINITY, f64::min);
    let rbw_hz = if min_spacing.is_finite() {
        min_spacing / 2.0
    } else {
        spec.nu_rep0_hz / 2.0
    };

    let spectrum = RfSpectrum {
        lines,
        noise_floor_db_per_hz: f64::NEG_INFINITY,
        rbw_hz,
    };
    debug_assert!(spectrum.check_invariants().is_ok());
    Ok(spectrum)
}

/// Photocurrent time record for the same detection geometry.
///
/// Builds the intensity pulse train literally, pulse by pulse, so the
/// record is an independent oracle for [`rf_line_spectrum`]. The seed sets
/// the (physically uncontrolled) interferometer phase between the arms.
/// `sample_rate_hz` must exceed twice the highest modeled frequency
/// (`m_max * nu_rep0 + |nu_M1 - nu_M2|` with both arms); callers wanting
/// clean periodogram powers should leave extra margin because pulse
/// harmonics above `m_max` still carry some power.
pub fn synthesize_time_domain(
    spec: &CombSpec,
    include_arm1: bool,
    include_arm2: bool,
    duration_s: f64,
    sample_rate_hz: f64,
    seed: u64,
) -> Result<Vec<f64>> {
    spec.validated(include_arm1, include_arm2)?;
    let mut issues = Vec::new();
    if !(duration_s >= 0.0) || !duration_s.is_finite() {
        issues.push(ValidationIssue {
            field: "duration_s".to_string(),
            message: format!("must be non-negative and finite, got {duration_s}"),
        });
    }
    if !(sample_rate_hz > 0.0) || !sample_rate_hz.is_finite() {
        issues.push(ValidationIssue {
            field: "sample_rate_hz".to_string(),
            message: format!("must be positive and finite, got {sample_rate_hz}"),
        });
    }
    if !issues.is_empty() {
        return Err(Error::Invalid(issues));
    }

    let both = spec.both_arms_active(include_arm1, include_arm2);
    let delta = if both { spec.delta_nu_hz() } else { 0.0 };
    let f_top = f64::from(spec.m_max) * spec.nu_rep0_hz + delta;
    if sample_rate_hz <= 2.0 * f_top {
        return Err(Error::SampleRateTooLow {
            what: "the highest modeled comb line",
            sample_rate_hz,
            required_hz: 2.0 * f_top,
        });
    }

    let n = (duration_s * sample_rate_hz).round() as u64;
    if n > SAMPLE_BUDGET {
        return Err(Error::SampleBudget {
            requested: n,
            budget: SAMPLE_BUDGET,
        });
    }
    let n = n as usize;
    if n == 0 {
        return Ok(Vec::new());
    }

    let p1 = if include_arm1 { spec.power_arm1 } else { 0.0 };
    let p2 = if include_arm2 { spec.power_arm2 } else { 0.0 };
    let direct = p1 + p2;
    let cross = 2.0 * (spec.power_arm1 * spec.power_arm2).sqrt();
    let sigma = spec.pulse_sigma();
    let period = 1.0 / spec.nu_rep0_hz;
    let reach = 6.0 * sigma;

    let mut rng = stream_rng(seed, "synthesis/interferometer-phase", 0);
    let phi0: f64 = rng.random::<f64>() * 2.0 * std::f64::consts::PI;

    let mut out = vec![0.0f64; n];
    for (i, y) in out.iter_mut().enumerate() {
        let t = i as f64 / sample_rate_hz;
        let k_lo = ((t - reach) / period).floor() as i64;
        let k_hi = ((t + reach) / period).ceil() as i64;
        let mut s = 0.0;
        for k in k_lo..=k_hi {
            let dt = t - k as f64 * period;
            s += (-dt * dt / (2.0 * sigma * sigma)).exp();
        }
        let mut v = direct * s;
        if both {
            v += cross * s * (2.0 * std::f64::consts::PI * delta * t + phi0).cos();
        }
        *y = v;
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spectrum::periodogram;

    fn spec_80mhz_both() -> CombSpec {
        CombSpec {
            nu_rep0_hz: 80e6,
            m_max: 2,
            power_arm1: 1.0,
            power_arm2: 1.0,
            nu_m1_hz: 210e6,
            nu_m2_hz: 200e6,
            pulse_sigma_s: None,
        }
    }

    #[test]
    fn single_arm_shows_teeth_only() {
        let spec = CombSpec {
            m_max: 3,
            ..spec_80mhz_both()
        };
        let s = rf_line_spectrum(&spec, true, false).unwrap();
        let freqs: Vec<f64> = s.lines.iter().map(|l| l.freq_hz).collect();
        assert_eq!(freqs, vec![80e6, 160e6, 240e6]);
        assert_eq!(s.lines[0].power_db, 0.0, "fundamental is the reference");
        assert!(s.noise_floor_db_per_hz == f64::NEG_INFINITY);
    }

    #[test]
    fn both_arms_add_sidebands_around_each_tooth() {
        // 210 vs 200 MHz AOMs: sidebands 10 MHz either side of each tooth.
        let s = rf_line_spectrum(&spec_80mhz_both(), true, true).unwrap();
        let freqs: Vec<f64> = s.lines.iter().map(|l| l.freq_hz).collect();
        assert_eq!(freqs, vec![70e6, 80e6, 90e6, 150e6, 160e6, 170e6]);
        s.check_invariants().unwrap();
    }

    #[test]
    fn sideband_pairs_are_symmetric_and_product_scaled() {
        let mut spec = spec_80mhz_both();
        spec.power_arm1 = 2.0;
        spec.power_arm2 = 0.5;
        let s = rf_line_spectrum(&spec, true, true).unwrap();
        let get = |f: f64| {
            s.lines
                .iter()
                .find(|l| (l.freq_hz - f).abs() < 1.0)
                .unwrap_or_else(|| panic!("no line at {f}"))
                .power_db
        };
        assert_eq!(get(70e6), get(90e6), "sideband pair must be symmetric");
        assert_eq!(get(150e6), get(170e6));
        // Sideband-to-tooth power ratio: P1 P2 / (P1 + P2)^2 = 1/6.25.
        let expected_db = 10.0 * (2.0 * 0.5 / (2.5f64 * 2.5)).log10();
        let got = get(70e6) - get(80e6);
        assert!(
            (got - expected_db).abs() < 1e-9,
            "sideband offset {got} dB vs expected {expected_db} dB"
        );
    }

    #[test]
    fn swapping_arms_changes_nothing() {
        let mut swapped = spec_80mhz_both();
        swapped.power_arm1 = 0.3;
        swapped.power_arm2 = 1.7;
        let mut original = swapped;
        std::mem::swap(&mut original.power_arm1, &mut original.power_arm2);
        std::mem::swap(&mut original.nu_m1_hz, &mut original.nu_m2_hz);
        let a = rf_line_spectrum(&original, true, true).unwrap();
        let b = rf_line_spectrum(&swapped, true, true).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn blocking_an_arm_removes_sidebands_but_keeps_teeth() {
        let spec = spec_80mhz_both();
        let both = rf_line_spectrum(&spec, true, true).unwrap();
        let one = rf_line_spectrum(&spec, false, true).unwrap();
        let tooth_freqs: Vec<f64> = one.lines.iter().map(|l| l.freq_hz).collect();
        assert_eq!(tooth_freqs, vec![80e6, 160e6]);
        for f in tooth_freqs {
            assert!(
                both.lines.iter().any(|l| (l.freq_hz - f).abs() < 1.0),
                "tooth {f} missing from two-arm spectrum"
            );
        }
    }

    #[test]
    fn degenerate_aoms_are_rejected_only_when_both_arms_interfere() {
        let mut spec = spec_80mhz_both();
        spec.nu_m2_hz = spec.nu_m1_hz;
        assert!(matches!(
            rf_line_spectrum(&spec, true, true),
            Err(Error::DegenerateArms)
        ));
        assert!(rf_line_spectrum(&spec, true, false).is_ok());
    }

    #[test]
    fn aom_difference_beyond_half_rep_rate_is_invalid() {
        let mut spec = spec_80mhz_both();
        spec.nu_m1_hz = 245e6; // delta = 45 MHz > 40 MHz
        let err = rf_line_spectrum(&spec, true, true).unwrap_err();
        match err {
            Error::Invalid(issues) => {
                assert!(issues.iter().any(|i| i.field.contains("nu_m")), "{issues:?}");
            }
            other => panic!("expected Invalid, got {other:?}"),
        }
    }

    #[test]
    fn model_frequency_ceiling_is_enforced() {
        let mut spec = spec_80mhz_both();
        spec.m_max = 2000; // 160 GHz top tooth
        assert!(rf_line_spectrum(&spec, true, false).is_err());
    }

    #[test]
    fn zero_duration_synthesis_is_empty() {
        let out = synthesize_time_domain(&spec_80mhz_both(), true, true, 0.0, 1e9, 1).unwrap();
        assert!(out.is_empty());
    }

    #[test]
    fn synthesis_rejects_undersampling() {
        // Top line at 2*80 + 10 = 170 MHz needs > 340 MS/s.
        let err =
            synthesize_time_domain(&spec_80mhz_both(), true, true, 1e-6, 300e6, 1).unwrap_err();
        match err {
            Error::SampleRateTooLow { required_hz, .. } => {
                assert!((required_hz - 340e6).abs() < 1.0);
            }
            other => panic!("expected SampleRateTooLow, got {other:?}"),
        }
    }

    #[test]
    fn synthesis_respects_sample_budget() {
        let err =
            synthesize_time_domain(&spec_80mhz_both(), true, true, 1.0, 1e9, 1).unwrap_err();
        assert!(matches!(err, Error::SampleBudget { .. }));
    }

    #[test]
    fn synthesized_spectrum_matches_analytic_lines() {
        // Independent-route check: literal pulse summation + periodogram
        // against the analytic line list, scaled down so the FFT stays
        // small. The comparison window is the modeled band (first tooth's
        // lower sideband up to the last tooth's upper sideband): below it
        // sits the deliberately excluded baseband interference line, above
        // it the physical harmonics beyond m_max.
        let spec = CombSpec {
            nu_rep0_hz: 2e6,
            m_max: 3,
            power_arm1: 1.0,
            power_arm2: 0.5,
            nu_m1_hz: 1.0e6,
            nu_m2_hz: 0.7e6,
            pulse_sigma_s: None,
        };
        let delta = spec.delta_nu_hz();
        let fs = 3.2 * (3.0 * 2e6 + delta);
        let rbw = delta / 16.0; // 18.75 kHz: resolves the 300 kHz sideband offset easily
        let duration = 45.0 / rbw; // ~45 rbw periods, dozens of averaging segments
        let record = synthesize_time_domain(&spec, true, true, duration, fs, 9).unwrap();
        let measured = periodogram(&record, fs, rbw).unwrap();
        let analytic = rf_line_spectrum(&spec, true, true).unwrap();

        let band_lo = 2e6 - delta - 2.0 * measured.rbw_hz;
        let band_hi = 3.0 * 2e6 + delta + 2.0 * measured.rbw_hz;
        let in_band: Vec<_> = measured
            .lines
            .iter()
            .filter(|l| l.freq_hz >= band_lo && l.freq_hz <= band_hi)
            .collect();
        assert_eq!(
            in_band.len(),
            analytic.lines.len(),
            "analytic {:?} vs measured {:?}",
            analytic.lines,
            in_band
        );
        for (a, m) in analytic.lines.iter().zip(&in_band) {
            assert!(
                (a.freq_hz - m.freq_hz).abs() <= measured.rbw_hz,
                "line at {} found at {}",
                a.freq_hz,
                m.freq_hz
            );
            assert!(
                (a.power_db - m.power_db).abs() <= 1.0,
                "line at {}: analytic {} dB vs measured {} dB",
                a.freq_hz,
                a.power_db,
                m.power_db
            );
        }
    }

    #[test]
    fn synthesis_is_deterministic_per_seed() {
        let spec = spec_80mhz_both();
        let a = synthesize_time_domain(&spec, true, true, 1e-6, 1e9, 5).unwrap();
        let b = synthesize_time_domain(&spec, true, true, 1e-6, 1e9, 5).unwrap();
        let c = synthesize_time_domain(&spec, true, true, 1e-6, 1e9, 6).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, c, "interferometer phase must follow the seed");
    }
}
