//! Repetition-rate lock electronics.
//!
//! The chain mirrors a standard comb stabilization setup: a band-pass
//! filter selects the n-th rf tooth of the photodiode signal, a mixer
//! against a stable local oscillator at `nu_LO` produces the difference
//! beat `n nu_rep(t) - nu_LO`, a low-pass filter keeps only that lower
//! component, and the result drives AOM1 either directly (feed-forward of
//! the noisy error signal) or through a PLL that re-synthesizes a clean
//! tone at the same frequency.
//!
//! The lock law `nu_M1(t) = n nu_rep(t) - nu_LO` makes the Raman sideband
//! frequency `nu_sb(t) = n nu_rep(t) - |nu_M1(t) - nu_M2|` collapse to the
//! constant `nu_LO + nu_M2`: repetition-rate fluctuations cancel exactly
//! at tooth n, and only there. Both facts are properties of the frequency
//! algebra, so the chain is modeled at that level: tone center frequencies
//! plus noise PSDs, not sample-level loop dynamics. Filters are ideal
//! gates whose job is to certify the geometry isolates the intended beat,
//! and PLL acquisition is assumed instantaneous.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result, ValidationIssue};
use crate::noise::{NoiseSpec, RepRateTrajectory};

/// How the error signal reaches AOM1.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum LockMode {
    /// Feed the filtered beat straight to the AOM, broadband noise and all.
    Direct,
    /// Phase-lock a clean oscillator to the beat: inside the loop bandwidth
    /// the tone tracks the beat (and inherits the error-path noise level),
    /// outside it the oscillator's own floor takes over.
    Pll {
        loop_bandwidth_hz: f64,
        oscillator_floor_db_per_hz: f64,
    },
}

/// Lock-electronics description.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LockConfig {
    /// Index of the rf tooth the lock acts on.
    pub n: u32,
    /// Local oscillator frequency; must sit below `n * nu_rep0` so the
    /// difference beat is positive.
    pub nu_lo_hz: f64,
    /// Band-pass center selecting the n-th tooth.
    pub bpf_center_hz: f64,
    /// Band-pass full width.
    pub bpf_width_hz: f64,
    /// Low-pass cutoff after the mixer; the difference beat must stay
    /// inside `(0, lpf_cutoff)` or the lock is declared lost.
    pub lpf_cutoff_hz: f64,
    pub mode: LockMode,
    /// Broadband amplifier noise on the error path (fractional PSD).
    pub error_noise: NoiseSpec,
}

impl LockConfig {
    /// Nominal beat frequency `n * nu_rep0 - nu_LO`.
    pub fn nominal_beat_hz(&self, nu_rep0_hz: f64) -> f64 {
        f64::from(self.n) * nu_rep0_hz - self.nu_lo_hz
    }

    /// Fractional noise the AOM drive tone carries in this mode: the raw
    /// error-path noise when direct, the loop-shaped spectrum when a PLL
    /// re-synthesizes the tone.
    pub fn drive_noise(&self) -> NoiseSpec {
        match self.mode {
            LockMode::Direct => self.error_noise,
            LockMode::Pll {
                loop_bandwidth_hz,
                oscillator_floor_db_per_hz,
            } => NoiseSpec::pll_shaped(
                self.error_noise.alpha_db_per_hz,
                loop_bandwidth_hz,
                oscillator_floor_db_per_hz,
            ),
        }
    }

    pub fn validate(&self, nu_rep0_hz: f64, field: &str, issues: &mut Vec<ValidationIssue>) {
        if self.n < 1 {
            issues.push(ValidationIssue {
                field: format!("{field}.n"),
                message: "locked tooth index must be at least 1".to_string(),
            });
        }
        if !(self.nu_lo_hz > 0.0) || !self.nu_lo_hz.is_finite() {
            issues.push(ValidationIssue {
                field: format!("{field}.nu_lo_hz"),
                message: format!("must be positive and finite, got {}", self.nu_lo_hz),
            });
        }
        let tooth = f64::from(self.n) * nu_rep0_hz;
        if self.nu_lo_hz >= tooth {
            issues.push(ValidationIssue {
                field: format!("{field}.nu_lo_hz"),
                message: format!(
                    "local oscillator at {} Hz must sit below the locked tooth at {} Hz",
                    self.nu_lo_hz, tooth
                ),
            });
        }
        if !(self.bpf_width_hz > 0.0) || !self.bpf_width_hz.is_finite() {
            issues.push(ValidationIssue {
                field: format!("{field}.bpf_width_hz"),
                message: format!("must be positive and finite, got {}", self.bpf_width_hz),
            });
        } else {
            // The band-pass must isolate tooth n: pass it, reject both
            // neighbors. Anything looser and the mixer sees the wrong beat.
            if (tooth - self.bpf_center_hz).abs() > self.bpf_width_hz / 2.0 {
                issues.push(ValidationIssue {
                    field: format!("{field}.bpf_center_hz"),
                    message: format!(
                        "band-pass [{} +/- {}] Hz does not pass the locked tooth at {} Hz",
                        self.bpf_center_hz,
                        self.bpf_width_hz / 2.0,
                        tooth
                    ),
                });
            }
            for neighbor in [
                (f64::from(self.n) - 1.0) * nu_rep0_hz,
                (f64::from(self.n) + 1.0) * nu_rep0_hz,
            ] {
                if neighbor > 0.0 && (neighbor - self.bpf_center_hz).abs() <= self.bpf_width_hz / 2.0
                {
                    issues.push(ValidationIssue {
                        field: format!("{field}.bpf_width_hz"),
                        message: format!(
                            "band-pass [{} +/- {}] Hz fails to reject the neighboring tooth at {} Hz",
                            self.bpf_center_hz,
                            self.bpf_width_hz / 2.0,
                            neighbor
                        ),
                    });
                }
            }
        }
        // The low-pass keeps the difference beat and drops the sum beat at
        // n*nu_rep + nu_LO, so any cutoff between the nominal beat and the
        // local oscillator is physical.
        if !(self.lpf_cutoff_hz > 0.0) || !self.lpf_cutoff_hz.is_finite() {
            issues.push(ValidationIssue {
                field: format!("{field}.lpf_cutoff_hz"),
                message: format!("must be positive and finite, got {}", self.lpf_cutoff_hz),
            });
        } else if self.nu_lo_hz.is_finite() && self.lpf_cutoff_hz >= self.nu_lo_hz {
            issues.push(ValidationIssue {
                field: format!("{field}.lpf_cutoff_hz"),
                message: format!(
                    "cutoff {} Hz must stay below the local oscillator at {} Hz to reject the sum beat",
                    self.lpf_cutoff_hz, self.nu_lo_hz
                ),
            });
        }
        if let LockMode::Pll {
            loop_bandwidth_hz,
            oscillator_floor_db_per_hz,
        } = self.mode
        {
            if !(loop_bandwidth_hz > 0.0) || !loop_bandwidth_hz.is_finite() {
                issues.push(ValidationIssue {
                    field: format!("{field}.mode.loop_bandwidth_hz"),
                    message: format!("must be positive and finite, got {loop_bandwidth_hz}"),
                });
            }
            if oscillator_floor_db_per_hz.is_nan() || oscillator_floor_db_per_hz == f64::INFINITY {
                issues.push(ValidationIssue {
                    field: format!("{field}.mode.oscillator_floor_db_per_hz"),
                    message: format!("must be a finite level or -inf, got {oscillator_floor_db_per_hz}"),
                });
            }
        }
        self.error_noise.validate(&format!("{field}.error_noise"), issues);
    }
}

/// A synthesized rf tone: center-frequency series plus the fractional
/// noise PSD riding on it.
#[derive(Debug, Clone, PartialEq)]
pub struct DriveTone {
    pub freq_hz: Vec<f64>,
    pub dt_s: f64,
    /// Start phase of the tone. The lock chain is frequency-level, so this
    /// stays zero unless a caller reconstructing waveforms sets it.
    pub phase0_rad: f64,
    pub noise: NoiseSpec,
}

impl DriveTone {
    /// A tone frozen at a constant frequency (lock disengaged): the
    /// synthesizer keeps whatever frequency it last had.
    pub fn frozen(freq_hz: f64, len: usize, dt_s: f64, noise: NoiseSpec) -> Self {
        DriveTone {
            freq_hz: vec![freq_hz; len],
            dt_s,
            phase0_rad: 0.0,
            noise,
        }
    }
}

/// The beat note the qubit actually sees: difference frequency of the
/// Raman pair, with the drive's fractional noise carried along.
#[derive(Debug, Clone, PartialEq)]
pub struct BeatNote {
    pub freq_hz: Vec<f64>,
    pub dt_s: f64,
    pub noise: NoiseSpec,
}

fn check_grids(
    left: &'static str,
    left_len: usize,
    left_dt_s: f64,
    right: &'static str,
    right_len: usize,
    right_dt_s: f64,
) -> Result<()> {
    let dt_ok = (left_dt_s - right_dt_s).abs() <= 1e-12 * left_dt_s.abs().max(right_dt_s.abs());
    if left_len != right_len || !dt_ok {
        return Err(Error::GridMismatch {
            left,
            left_len,
            left_dt_s,
            right,
            right_len,
            right_dt_s,
        });
    }
    Ok(())
}

/// Mix the selected tooth down against the local oscillator and return the
/// AOM1 drive tone `nu_M1(t) = n nu_rep(t) - nu_LO`.
///
/// In direct mode the tone carries the error-path noise untouched; in PLL
/// mode the noise is reshaped (in-band error level, out-of-band oscillator
/// floor) while the frequency series is preserved, since the loop tracks
/// the beat.
///
/// Fails with a lock-loss error naming the first offending sample if the
/// selected tooth leaves the band-pass or the mixed beat leaves
/// `(0, lpf_cutoff)`.
pub fn error_signal(traj: &RepRateTrajectory, cfg: &LockConfig) -> Result<DriveTone> {
    let nu_rep0 = *traj.nu_rep_hz.first().ok_or_else(|| {
        Error::Invalid(vec![ValidationIssue {
            field: "traj.nu_rep_hz".to_string(),
            message: "trajectory must contain at least one sample".to_string(),
        }])
    })?;
    let mut issues = Vec::new();
    cfg.validate(nu_rep0, "lock", &mut issues);
    if !issues.is_empty() {
        return Err(Error::Invalid(issues));
    }

    let n = f64::from(cfg.n);
    let bpf_lo = cfg.bpf_center_hz - cfg.bpf_width_hz / 2.0;
    let bpf_hi = cfg.bpf_center_hz + cfg.bpf_width_hz / 2.0;
    let mut freq = Vec::with_capacity(traj.nu_rep_hz.len());
    for (i, &nu_rep) in traj.nu_rep_hz.iter().enumerate() {
        let tooth = n * nu_rep;
        if tooth < bpf_lo || tooth > bpf_hi {
            return Err(Error::LockLost {
                t_s: traj.time(i),
                freq_hz: tooth,
                band_lo_hz: bpf_lo,
                band_hi_hz: bpf_hi,
            });
        }
        let beat = tooth - cfg.nu_lo_hz;
        if beat <= 0.0 || beat >= cfg.lpf_cutoff_hz {
            return Err(Error::LockLost {
                t_s: traj.time(i),
                freq_hz: beat,
                band_lo_hz: 0.0,
                band_hi_hz: cfg.lpf_cutoff_hz,
            });
        }
        freq.push(beat);
    }

    Ok(DriveTone {
        freq_hz: freq,
        dt_s: traj.dt_s,
        phase0_rad: 0.0,
        noise: cfg.drive_noise(),
    })
}

/// Raman sideband frequency at the locked tooth:
/// `nu_sb(t) = n nu_rep(t) - |nu_M1(t) - nu_M2|`.
///
/// When `nu_M1` follows the lock law this is the constant `nu_LO + nu_M2`
/// regardless of how `nu_rep` wanders; when the drive is frozen the rep
/// rate fluctuations pass straight through. The drive's noise spec rides
/// along onto the beat.
pub fn effective_beat(
    traj: &RepRateTrajectory,
    drive1: &DriveTone,
    nu_m2_hz: f64,
    n: u32,
) -> Result<BeatNote> {
    check_grids(
        "trajectory",
        traj.nu_rep_hz.len(),
        traj.dt_s,
        "drive",
        drive1.freq_hz.len(),
        drive1.dt_s,
    )?;
    if !(nu_m2_hz > 0.0) || !nu_m2_hz.is_finite() {
        return Err(Error::Invalid(vec![ValidationIssue {
            field: "nu_m2_hz".to_string(),
            message: format!("must be positive and finite, got {nu_m2_hz}"),
        }]));
    }
    let nf = f64::from(n);
    let mut freq = Vec::with_capacity(traj.nu_rep_hz.len());
    for (&nu_rep, &m1) in traj.nu_rep_hz.iter().zip(&drive1.freq_hz) {
        let tooth = nf * nu_rep;
        if tooth <= m1 {
            return Err(Error::FrequencyOutOfRange {
                what: "drive tone above the locked tooth",
                value_hz: m1,
                limit_hz: tooth,
            });
        }
        freq.push(tooth - (m1 - nu_m2_hz).abs());
    }
    Ok(BeatNote {
        freq_hz: freq,
        dt_s: traj.dt_s,
        noise: drive1.noise,
    })
}

/// Beat-note excursion at tooth `m` relative to its starting value.
///
/// With the lock engaged this is `(m - n) * (nu_rep(t) - nu_rep(0))`:
/// exactly zero at the locked tooth, growing linearly in the tooth
/// distance everywhere else. `n` only enters the precondition check that
/// the drive tone sits below the locked tooth.
pub fn residual_at_tooth(
    traj: &RepRateTrajectory,
    drive1: &DriveTone,
    nu_m2_hz: f64,
    m: u32,
    n: u32,
) -> Result<Vec<f64>> {
    check_grids(
        "trajectory",
        traj.nu_rep_hz.len(),
        traj.dt_s,
        "drive",
        drive1.freq_hz.len(),
        drive1.dt_s,
    )?;
    let nf = f64::from(n);
    let mf = f64::from(m);
    let mut out = Vec::with_capacity(traj.nu_rep_hz.len());
    let mut first = None;
    for (&nu_rep, &m1) in traj.nu_rep_hz.iter().zip(&drive1.freq_hz) {
        if nf * nu_rep <= m1 {
            return Err(Error::FrequencyOutOfRange {
                what: "drive tone above the locked tooth",
                value_hz: m1,
                limit_hz: nf * nu_rep,
            });
        }
        let beat = mf * nu_rep - (m1 - nu_m2_hz).abs();
        let base = *first.get_or_insert(beat);
        out.push(beat - base);
    }
    Ok(out)
}
