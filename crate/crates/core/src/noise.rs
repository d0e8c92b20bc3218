//! Repetition-rate drift, timing jitter, and fractional intensity noise.
//!
//! Two kinds of stochastic signal live here:
//!
//! * **Repetition-rate trajectories** ([`generate_trajectory`]): the comb's
//!   repetition rate as a function of time, combining a linear drift, a
//!   sinusoidal temperature term, a random walk, and band-limited white
//!   frequency jitter. Everything downstream (tooth frequencies, beat
//!   notes, Ramsey phase) is a deterministic function of one trajectory.
//! * **Fractional noise records** ([`sample_fractional_noise`]): unitless
//!   zero-mean processes with a prescribed one-sided power spectral
//!   density, used for relative intensity noise on the Raman drive. The
//!   density is quoted in dB relative to 1/Hz, so `alpha_db_per_hz = -120`
//!   means 1e-12 /Hz.
//!
//! Synthesis draws a Gaussian white sequence and shapes it in the frequency
//! domain (inverse-FFT filtering), which matches the target PSD exactly in
//! expectation. For a flat target the shaping filter is constant, and the
//! construction reduces to independent Gaussians of variance
//! `S * sample_rate / 2`; that shortcut is taken because it is
//! distribution-identical and keeps the record mean fluctuating the way a
//! stationary white process must (a zeroed DC bin would pin every record
//! mean to zero and kill the low-frequency content that drives dephasing
//! and rotation-angle diffusion).

use num_complex::Complex;
use rand::Rng;
use rand_chacha::ChaCha12Rng;
use rand_distr::StandardNormal;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result, ValidationIssue};
use crate::seed::stream_rng;

/// Hard cap on samples in one generated record.
pub const SAMPLE_BUDGET: u64 = 1 << 24;

/// Spectral shape of a fractional-noise specification.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum NoiseShape {
    /// Flat density at `alpha_db_per_hz` across the whole band.
    Flat,
    /// Phase-locked-loop shaped: `alpha_db_per_hz` inside the loop
    /// bandwidth, a different (typically much lower) floor outside it.
    PllShaped {
        loop_bandwidth_hz: f64,
        out_of_band_floor_db_per_hz: f64,
    },
}

/// One-sided fractional power spectral density specification.
///
/// `alpha_db_per_hz = f64::NEG_INFINITY` switches the noise off entirely.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "NoiseSpecRepr", into = "NoiseSpecRepr")]
pub struct NoiseSpec {
    pub alpha_db_per_hz: f64,
    pub shape: NoiseShape,
}

/// Serialized layout: a flat record with a `shape` discriminator, so
/// scenario files read as plain key/value tables.
#[derive(Debug, Serialize, Deserialize)]
struct NoiseSpecRepr {
    alpha_db_per_hz: f64,
    shape: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    loop_bandwidth_hz: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    floor_db_per_hz: Option<f64>,
}

impl TryFrom<NoiseSpecRepr> for NoiseSpec {
    type Error = String;

    fn try_from(r: NoiseSpecRepr) -> std::result::Result<Self, String> {
        let shape = match r.shape.as_str() {
            "flat" => {
                if r.loop_bandwidth_hz.is_some() || r.floor_db_per_hz.is_some() {
                    return Err(
                        "flat noise takes no loop_bandwidth_hz/floor_db_per_hz".to_string()
                    );
                }
                NoiseShape::Flat
            }
            "pll_shaped" => NoiseShape::PllShaped {
                loop_bandwidth_hz: r
                    .loop_bandwidth_hz
                    .ok_or("pll_shaped noise requires loop_bandwidth_hz")?,
                out_of_band_floor_db_per_hz: r
                    .floor_db_per_hz
                    .ok_or("pll_shaped noise requires floor_db_per_hz")?,
            },
            other => return Err(format!("unknown noise shape {other:?}")),
        };
        Ok(NoiseSpec {
            alpha_db_per_hz: r.alpha_db_per_hz,
            shape,
        })
    }
}

impl From<NoiseSpec> for NoiseSpecRepr {
    fn from(s: NoiseSpec) -> Self {
        match s.shape {
            NoiseShape::Flat => NoiseSpecRepr {
                alpha_db_per_hz: s.alpha_db_per_hz,
                shape: "flat".to_string(),
                loop_bandwidth_hz: None,
                floor_db_per_hz: None,
            },
            NoiseShape::PllShaped {
                loop_bandwidth_hz,
                out_of_band_floor_db_per_hz,
            } => NoiseSpecRepr {
                alpha_db_per_hz: s.alpha_db_per_hz,
                shape: "pll_shaped".to_string(),
                loop_bandwidth_hz: Some(loop_bandwidth_hz),
                floor_db_per_hz: Some(out_of_band_floor_db_per_hz),
            },
        }
    }
}

impl NoiseSpec {
    pub fn flat(alpha_db_per_hz: f64) -> Self {
        NoiseSpec {
            alpha_db_per_hz,
            shape: NoiseShape::Flat,
        }
    }

    pub fn pll_shaped(alpha_db_per_hz: f64, loop_bandwidth_hz: f64, floor_db_per_hz: f64) -> Self {
        NoiseSpec {
            alpha_db_per_hz,
            shape: NoiseShape::PllShaped {
                loop_bandwidth_hz,
                out_of_band_floor_db_per_hz: floor_db_per_hz,
            },
        }
    }

    /// A spec that synthesizes to identically zero.
    pub fn off() -> Self {
        NoiseSpec::flat(f64::NEG_INFINITY)
    }

    pub fn is_off(&self) -> bool {
        match self.shape {
            NoiseShape::Flat => self.alpha_db_per_hz == f64::NEG_INFINITY,
            NoiseShape::PllShaped {
                out_of_band_floor_db_per_hz,
                ..
            } => {
                self.alpha_db_per_hz == f64::NEG_INFINITY
                    && out_of_band_floor_db_per_hz == f64::NEG_INFINITY
            }
        }
    }

    /// One-sided PSD at frequency `f`, in linear units of 1/Hz.
    pub fn psd_at(&self, f_hz: f64) -> f64 {
        let db = match self.shape {
            NoiseShape::Flat => self.alpha_db_per_hz,
            NoiseShape::PllShaped {
                loop_bandwidth_hz,
                out_of_band_floor_db_per_hz,
            } => {
                if f_hz <= loop_bandwidth_hz {
                    self.alpha_db_per_hz
                } else {
                    out_of_band_floor_db_per_hz
                }
            }
        };
        db_to_linear(db)
    }

    pub fn validate(&self, field: &str, issues: &mut Vec<ValidationIssue>) {
        if self.alpha_db_per_hz.is_nan() {
            issues.push(ValidationIssue {
                field: format!("{field}.alpha_db_per_hz"),
                message: "must not be NaN".to_string(),
            });
        }
        if let NoiseShape::PllShaped {
            loop_bandwidth_hz,
            out_of_band_floor_db_per_hz,
        } = self.shape
        {
            if !(loop_bandwidth_hz > 0.0) {
                issues.push(ValidationIssue {
                    field: format!("{field}.loop_bandwidth_hz"),
                    message: format!("must be positive, got {loop_bandwidth_hz}"),
                });
            }
            if out_of_band_floor_db_per_hz.is_nan() {
                issues.push(ValidationIssue {
                    field: format!("{field}.floor_db_per_hz"),
                    message: "must not be NaN".to_string(),
                });
            }
        }
    }
}

pub fn db_to_linear(db: f64) -> f64 {
    if db == f64::NEG_INFINITY {
        0.0
    } else {
        10f64.powf(db / 10.0)
    }
}

pub fn linear_to_db(x: f64) -> f64 {
    if x <= 0.0 {
        f64::NEG_INFINITY
    } else {
        10.0 * x.log10()
    }
}

/// Systematic repetition-rate drift model.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DriftProfile {
    /// Linear drift of the repetition rate.
    pub slope_hz_per_s: f64,
    /// Amplitude of a sinusoidal (thermal cycling) component.
    #[serde(default)]
    pub temp_amplitude_hz: f64,
    /// Period of the sinusoidal component.
    #[serde(default)]
    pub temp_period_s: f64,
    /// Random-walk strength: ensemble variance grows as `density^2 * t`.
    #[serde(default)]
    pub random_walk_density_hz_per_sqrt_s: f64,
}

impl DriftProfile {
    pub fn none() -> Self {
        DriftProfile {
            slope_hz_per_s: 0.0,
            temp_amplitude_hz: 0.0,
            temp_period_s: 0.0,
            random_walk_density_hz_per_sqrt_s: 0.0,
        }
    }

    pub fn validate(&self, field: &str, issues: &mut Vec<ValidationIssue>) {
        if self.temp_amplitude_hz != 0.0 && !(self.temp_period_s > 0.0) {
            issues.push(ValidationIssue {
                field: format!("{field}.temp_period_s"),
                message: format!(
                    "must be positive when temp_amplitude_hz != 0, got {}",
                    self.temp_period_s
                ),
            });
        }
        if self.temp_amplitude_hz < 0.0 {
            issues.push(ValidationIssue {
                field: format!("{field}.temp_amplitude_hz"),
                message: "must be non-negative".to_string(),
            });
        }
        if self.random_walk_density_hz_per_sqrt_s < 0.0 {
            issues.push(ValidationIssue {
                field: format!("{field}.random_walk_density_hz_per_sqrt_s"),
                message: "must be non-negative".to_string(),
            });
        }
        for (name, v) in [
            ("slope_hz_per_s", self.slope_hz_per_s),
            ("temp_amplitude_hz", self.temp_amplitude_hz),
            ("temp_period_s", self.temp_period_s),
            (
                "random_walk_density_hz_per_sqrt_s",
                self.random_walk_density_hz_per_sqrt_s,
            ),
        ] {
            if !v.is_finite() {
                issues.push(ValidationIssue {
                    field: format!("{field}.{name}"),
                    message: "must be finite".to_string(),
                });
            }
        }
    }
}

/// White repetition-rate frequency jitter, band-limited.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct JitterProfile {
    /// One-sided white frequency-noise density of the repetition rate.
    pub white_freq_density_hz_per_sqrt_hz: f64,
    /// Brick-wall bandwidth of the jitter.
    pub bandwidth_hz: f64,
}

impl JitterProfile {
    pub fn none() -> Self {
        JitterProfile {
            white_freq_density_hz_per_sqrt_hz: 0.0,
            bandwidth_hz: 1.0,
        }
    }

    pub fn validate(&self, field: &str, issues: &mut Vec<ValidationIssue>) {
        if self.white_freq_density_hz_per_sqrt_hz < 0.0
            || !self.white_freq_density_hz_per_sqrt_hz.is_finite()
        {
            issues.push(ValidationIssue {
                field: format!("{field}.white_freq_density_hz_per_sqrt_hz"),
                message: format!(
                    "must be finite and non-negative, got {}",
                    self.white_freq_density_hz_per_sqrt_hz
                ),
            });
        }
        if !(self.bandwidth_hz > 0.0) || !self.bandwidth_hz.is_finite() {
            issues.push(ValidationIssue {
                field: format!("{field}.bandwidth_hz"),
                message: format!("must be positive and finite, got {}", self.bandwidth_hz),
            });
        }
    }
}

/// A sampled repetition-rate trajectory on a uniform time grid.
///
/// Sample `i` is at `t = i * dt_s`; the grid is strictly increasing and
/// uniform by construction. `nu_rep_hz` is positive at every sample (the
/// generator rejects parameter sets that would drive it non-positive).
#[derive(Debug, Clone, PartialEq)]
pub struct RepRateTrajectory {
    pub dt_s: f64,
    pub nu_rep_hz: Vec<f64>,
    pub seed: u64,
}

impl RepRateTrajectory {
    pub fn len(&self) -> usize {
        self.nu_rep_hz.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nu_rep_hz.is_empty()
    }

    pub fn time(&self, i: usize) -> f64 {
        i as f64 * self.dt_s
    }

    pub fn times(&self) -> impl Iterator<Item = f64> + '_ {
        (0..self.len()).map(|i| self.time(i))
    }

    pub fn duration_s(&self) -> f64 {
        if self.nu_rep_hz.is_empty() {
            0.0
        } else {
            self.time(self.len() - 1)
        }
    }
}

/// A fractional-noise record plus synthesis metadata.
#[derive(Debug, Clone, PartialEq)]
pub struct FractionalNoise {
    pub samples: Vec<f64>,
    /// Set when the request was honored but physically suspicious
    /// (currently: a positive dB density, i.e. more than 1/Hz).
    pub warning: Option<String>,
}

/// Number of samples for an inclusive uniform grid over `[0, duration]`.
fn grid_len(duration_s: f64, dt_s: f64) -> u64 {
    (duration_s / dt_s).round() as u64 + 1
}

/// Generate a repetition-rate trajectory.
///
/// `nu_rep(t) = nu_rep0 + slope*t + A*sin(2*pi*t/period) + walk(t) + jitter(t)`
/// sampled at `t = i*dt` for `i = 0..=round(duration/dt)`.
///
/// The jitter term requires `dt <= 1/(2*bandwidth)`; a coarser grid cannot
/// carry the requested band and is rejected rather than silently aliased
/// (skipped when the jitter density is zero, since there is nothing to
/// alias). The random walk uses increments of variance `density^2 * dt`,
/// so the ensemble variance at time `t` is exactly `density^2 * t`.
pub fn generate_trajectory(
    nu_rep0_hz: f64,
    drift: &DriftProfile,
    jitter: &JitterProfile,
    duration_s: f64,
    dt_s: f64,
    seed: u64,
) -> Result<RepRateTrajectory> {
    let mut issues = Vec::new();
    if !(nu_rep0_hz > 0.0) || !nu_rep0_hz.is_finite() {
        issues.push(ValidationIssue {
            field: "nu_rep0_hz".to_string(),
            message: format!("must be positive and finite, got {nu_rep0_hz}"),
        });
    }
    if !(dt_s > 0.0) || !dt_s.is_finite() {
        issues.push(ValidationIssue {
            field: "dt_s".to_string(),
            message: format!("must be positive and finite, got {dt_s}"),
        });
    }
    if !(duration_s >= 0.0) || !duration_s.is_finite() {
        issues.push(ValidationIssue {
            field: "duration_s".to_string(),
            message: format!("must be non-negative and finite, got {duration_s}"),
        });
    }
    drift.validate("drift", &mut issues);
    jitter.validate("jitter", &mut issues);
    if !issues.is_empty() {
        return Err(Error::Invalid(issues));
    }

    let jitter_on = jitter.white_freq_density_hz_per_sqrt_hz > 0.0;
    if jitter_on {
        let max_dt = 1.0 / (2.0 * jitter.bandwidth_hz);
        if dt_s > max_dt {
            return Err(Error::AliasedJitter {
                dt_s,
                bandwidth_hz: jitter.bandwidth_hz,
                max_dt_s: max_dt,
            });
        }
    }

    let n = grid_len(duration_s, dt_s);
    if n > SAMPLE_BUDGET {
        return Err(Error::SampleBudget {
            requested: n,
            budget: SAMPLE_BUDGET,
        });
    }
    let n = n as usize;

    let mut nu = vec![0.0f64; n];
    for (i, v) in nu.iter_mut().enumerate() {
        let t = i as f64 * dt_s;
        *v = nu_rep0_hz + drift.slope_hz_per_s * t;
        if drift.temp_amplitude_hz != 0.0 {
            *v += drift.temp_amplitude_hz * (2.0 * std::f64::consts::PI * t / drift.temp_period_s).sin();
        }
    }

    if drift.random_walk_density_hz_per_sqrt_s > 0.0 {
        let mut rng = stream_rng(seed, "trajectory/random-walk", 0);
        let step_sigma = drift.random_walk_density_hz_per_sqrt_s * dt_s.sqrt();
        let mut walk = 0.0f64;
        for v in nu.iter_mut().skip(1) {
            let g: f64 = rng.sample(StandardNormal);
            walk += step_sigma * g;
            *v += walk;
        }
    }

    if jitter_on {
        let mut rng = stream_rng(seed, "trajectory/jitter", 0);
        let j = band_limited_white(
            jitter.white_freq_density_hz_per_sqrt_hz,
            jitter.bandwidth_hz,
            n,
            dt_s,
            &mut rng,
        );
        for (v, y) in nu.iter_mut().zip(j) {
            *v += y;
        }
    }

    for (i, &v) in nu.iter().enumerate() {
        if !(v > 0.0) {
            return Err(Error::NonPositiveRepRate {
                t_s: i as f64 * dt_s,
                value_hz: v,
            });
        }
    }

    Ok(RepRateTrajectory {
        dt_s,
        nu_rep_hz: nu,
        seed,
    })
}

/// Frequency of comb tooth `m` along a trajectory: `m * nu_rep(t)`,
/// sample for sample. `m` starts at 1 (the fundamental).
pub fn tooth_frequency(traj: &RepRateTrajectory, m: u32) -> Vec<f64> {
    debug_assert!(m >= 1, "tooth index starts at 1");
    let m = f64::from(m);
    traj.nu_rep_hz.iter().map(|&v| m * v).collect()
}

/// Synthesize a fractional-noise record with the PSD of `spec`.
///
/// Returns `round(duration*sample_rate) + 1` samples at `sample_rate`
/// (matching the inclusive trajectory grid), zero-mean in expectation, with
/// one-sided PSD `spec.psd_at(f)`. The total variance equals the integrated
/// PSD in expectation. A positive dB density is honored but flagged in the
/// returned metadata.
pub fn sample_fractional_noise(
    spec: &NoiseSpec,
    duration_s: f64,
    sample_rate_hz: f64,
    seed: u64,
) -> Result<FractionalNoise> {
    let mut issues = Vec::new();
    if !(sample_rate_hz > 0.0) || !sample_rate_hz.is_finite() {
        issues.push(ValidationIssue {
            field: "sample_rate_hz".to_string(),
            message: format!("must be positive and finite, got {sample_rate_hz}"),
        });
    }
    if !(duration_s >= 0.0) || !duration_s.is_finite() {
        issues.push(ValidationIssue {
            field: "duration_s".to_string(),
            message: format!("must be non-negative and finite, got {duration_s}"),
        });
    }
    spec.validate("noise", &mut issues);
    if !issues.is_empty() {
        return Err(Error::Invalid(issues));
    }

    let n = grid_len(duration_s, 1.0 / sample_rate_hz);
    if n > SAMPLE_BUDGET {
        return Err(Error::SampleBudget {
            requested: n,
            budget: SAMPLE_BUDGET,
        });
    }
    let n = n as usize;

    let warning = if spec.alpha_db_per_hz > 0.0 {
        Some(format!(
            "fractional noise density {} dB/Hz exceeds 0 dB/Hz (more than unit variance per Hz); \
             honoring it, but check the scenario",
            spec.alpha_db_per_hz
        ))
    } else {
        None
    };

    if spec.is_off() {
        return Ok(FractionalNoise {
            samples: vec![0.0; n],
            warning,
        });
    }

    let dt = 1.0 / sample_rate_hz;
    let mut rng = stream_rng(seed, "fractional-noise", 0);
    let samples = match spec.shape {
        NoiseShape::Flat => {
            let sigma = (db_to_linear(spec.alpha_db_per_hz) * sample_rate_hz / 2.0).sqrt();
            (0..n)
                .map(|_| sigma * rng.sample::<f64, _>(StandardNormal))
                .collect()
        }
        NoiseShape::PllShaped { .. } => {
            synth_from_psd(|f| spec.psd_at(f), n, sample_rate_hz, &mut rng)
        }
    };

    let _ = dt;
    Ok(FractionalNoise { samples, warning })
}

/// Band-limited white noise: one-sided PSD `density^2` for `f <= bandwidth`,
/// zero above. Caller guarantees `bandwidth <= Nyquist`.
///
/// When the band reaches Nyquist the record is plain white noise and is
/// drawn directly; otherwise it is shaped in the frequency domain.
pub(crate) fn band_limited_white(
    density: f64,
    bandwidth_hz: f64,
    n: usize,
    dt_s: f64,
    rng: &mut ChaCha12Rng,
) -> Vec<f64> {
    if density == 0.0 || n == 0 {
        return vec![0.0; n];
    }
    let fs = 1.0 / dt_s;
    let nyquist = fs / 2.0;
    let s = density * density;
    if bandwidth_hz >= nyquist * (1.0 - 1e-12) {
        let sigma = (s * fs / 2.0).sqrt();
        (0..n)
            .map(|_| sigma * rng.sample::<f64, _>(StandardNormal))
            .collect()
    } else {
        synth_from_psd(
            |f| if f <= bandwidth_hz { s } else { 0.0 },
            n,
            fs,
            rng,
        )
    }
}

/// Draw a real record of length `n` whose one-sided PSD is `psd(f)`.
///
/// Builds a Hermitian spectrum with independent Gaussian bins,
/// `E|X_k|^2 = psd(f_k) * fs * n / 2`, and inverse-transforms it. With that
/// weight the per-sample variance telescopes to the trapezoidal integral of
/// the PSD, and the record sum (the k = 0 bin alone) has variance
/// `psd(0) * duration / 2`, exactly what a stationary process with this PSD
/// accumulates; both ends of the spectrum therefore carry real Gaussian
/// draws rather than zeros.
fn synth_from_psd(
    psd: impl Fn(f64) -> f64,
    n: usize,
    fs: f64,
    rng: &mut ChaCha12Rng,
) -> Vec<f64> {
    if n == 0 {
        return Vec::new();
    }
    if n == 1 {
        let sigma = (psd(0.0) * fs / 2.0).sqrt();
        return vec![sigma * rng.sample::<f64, _>(StandardNormal)];
    }

    let nf = n as f64;
    let mut spec = vec![Complex::new(0.0, 0.0); n];

    let real_bin_sigma = |f: f64| (psd(f) * fs * nf / 2.0).sqrt();
    spec[0] = Complex::new(real_bin_sigma(0.0) * rng.sample::<f64, _>(StandardNormal), 0.0);

    let half = n / 2;
    for k in 1..n.div_ceil(2) {
        let f = k as f64 * fs / nf;
        // (a + ib)/sqrt(2) * sqrt(psd*fs*n/2): E|X|^2 = psd*fs*n/2.
        let sigma = (psd(f) * fs * nf / 4.0).sqrt();
        let a: f64 = rng.sample(StandardNormal);
        let b: f64 = rng.sample(StandardNormal);
        spec[k] = Complex::new(sigma * a, sigma * b);
        spec[n - k] = spec[k].conj();
    }
    if n % 2 == 0 {
        let f = half as f64 * fs / nf;
        spec[half] = Complex::new(
            real_bin_sigma(f) * rng.sample::<f64, _>(StandardNormal),
            0.0,
        );
    }

    let mut planner = FftPlanner::new();
    let ifft = planner.plan_fft_inverse(n);
    ifft.process(&mut spec);
    spec.iter().map(|c| c.re / nf).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn variance(x: &[f64]) -> f64 {
        let mean = x.iter().sum::<f64>() / x.len() as f64;
        x.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / x.len() as f64
    }

    #[test]
    fn quiet_trajectory_is_exactly_constant() {
        let traj = generate_trajectory(
            80.6e6,
            &DriftProfile::none(),
            &JitterProfile::none(),
            1.0,
            0.01,
            7,
        )
        .unwrap();
        assert_eq!(traj.len(), 101);
        assert!(traj.nu_rep_hz.iter().all(|&v| v == 80.6e6));
        assert_eq!(traj.duration_s(), 1.0);
    }

    #[test]
    fn linear_drift_accumulates_ten_hz_in_ten_minutes() {
        // 1 Hz/min of repetition-rate drift over 600 s.
        let drift = DriftProfile {
            slope_hz_per_s: 1.0 / 60.0,
            ..DriftProfile::none()
        };
        let traj =
            generate_trajectory(80.6e6, &drift, &JitterProfile::none(), 600.0, 1.0, 0).unwrap();
        let delta = traj.nu_rep_hz.last().unwrap() - traj.nu_rep_hz[0];
        assert!(
            (delta - 10.0).abs() < 1e-9,
            "expected 10 Hz drift, got {delta}"
        );
    }

    #[test]
    fn tooth_frequency_scales_and_stays_linear() {
        let drift = DriftProfile {
            slope_hz_per_s: 0.02,
            ..DriftProfile::none()
        };
        let traj =
            generate_trajectory(80.6e6, &drift, &JitterProfile::none(), 10.0, 0.5, 0).unwrap();
        let t157 = tooth_frequency(&traj, 157);
        for (i, &f) in t157.iter().enumerate() {
            assert_eq!(f, 157.0 * traj.nu_rep_hz[i]);
        }
        // Linearity: tooth(m + k) = tooth(m) + tooth(k) up to round-off.
        let t60 = tooth_frequency(&traj, 60);
        let t97 = tooth_frequency(&traj, 97);
        for i in 0..traj.len() {
            let sum = t60[i] + t97[i];
            assert!(
                (sum - t157[i]).abs() <= 1e-9 * t157[i].abs(),
                "linearity broke at sample {i}: {sum} vs {}",
                t157[i]
            );
        }
    }

    #[test]
    fn trajectory_is_deterministic_per_seed() {
        let drift = DriftProfile {
            random_walk_density_hz_per_sqrt_s: 0.5,
            ..DriftProfile::none()
        };
        let jitter = JitterProfile {
            white_freq_density_hz_per_sqrt_hz: 0.1,
            bandwidth_hz: 40.0,
        };
        let a = generate_trajectory(80.6e6, &drift, &jitter, 2.0, 0.01, 123).unwrap();
        let b = generate_trajectory(80.6e6, &drift, &jitter, 2.0, 0.01, 123).unwrap();
        let c = generate_trajectory(80.6e6, &drift, &jitter, 2.0, 0.01, 124).unwrap();
        assert_eq!(a, b, "same seed must reproduce bit-identically");
        assert_ne!(a, c, "different seed must differ");
    }

    #[test]
    fn random_walk_ensemble_variance_grows_linearly() {
        // Pure random walk with unit density: Var[nu(t) - nu(0)] = t.
        let drift = DriftProfile {
            random_walk_density_hz_per_sqrt_s: 1.0,
            ..DriftProfile::none()
        };
        let n_traj = 10_000;
        let mut sum_sq_half = 0.0;
        let mut sum_sq_end = 0.0;
        for k in 0..n_traj {
            let traj =
                generate_trajectory(1e6, &drift, &JitterProfile::none(), 1.0, 0.01, k as u64)
                    .unwrap();
            let half = traj.nu_rep_hz[50] - traj.nu_rep_hz[0];
            let end = traj.nu_rep_hz[100] - traj.nu_rep_hz[0];
            sum_sq_half += half * half;
            sum_sq_end += end * end;
        }
        let var_half = sum_sq_half / n_traj as f64;
        let var_end = sum_sq_end / n_traj as f64;
        assert!(
            (var_half - 0.5).abs() < 0.05,
            "variance at t=0.5 should be 0.5, got {var_half}"
        );
        assert!(
            (var_end - 1.0).abs() < 0.10,
            "variance at t=1 should be 1.0, got {var_end}"
        );
    }

    #[test]
    fn coarse_grid_for_jitter_band_is_rejected() {
        let jitter = JitterProfile {
            white_freq_density_hz_per_sqrt_hz: 0.1,
            bandwidth_hz: 1000.0,
        };
        let err = generate_trajectory(80e6, &DriftProfile::none(), &jitter, 1.0, 1e-3, 0)
            .unwrap_err();
        match err {
            Error::AliasedJitter { max_dt_s, .. } => {
                assert!((max_dt_s - 5e-4).abs() < 1e-12);
            }
            other => panic!("expected AliasedJitter, got {other:?}"),
        }
    }

    #[test]
    fn zero_density_jitter_permits_coarse_grids() {
        // Nothing to alias when the jitter is off; pure-drift runs may use
        // steps far coarser than the (irrelevant) bandwidth.
        let jitter = JitterProfile {
            white_freq_density_hz_per_sqrt_hz: 0.0,
            bandwidth_hz: 1000.0,
        };
        let traj = generate_trajectory(80e6, &DriftProfile::none(), &jitter, 10.0, 1.0, 0);
        assert!(traj.is_ok());
    }

    #[test]
    fn runaway_drift_reports_first_bad_sample() {
        let drift = DriftProfile {
            slope_hz_per_s: -2e6,
            ..DriftProfile::none()
        };
        let err =
            generate_trajectory(1e6, &drift, &JitterProfile::none(), 10.0, 0.1, 0).unwrap_err();
        match err {
            Error::NonPositiveRepRate { t_s, .. } => {
                // 1e6 - 2e6*t <= 0 from t = 0.5 on.
                assert!((t_s - 0.5).abs() < 1e-12, "first bad sample at {t_s}");
            }
            other => panic!("expected NonPositiveRepRate, got {other:?}"),
        }
    }

    #[test]
    fn sample_budget_is_enforced() {
        let err = generate_trajectory(
            80e6,
            &DriftProfile::none(),
            &JitterProfile::none(),
            1e9,
            1e-2,
            0,
        )
        .unwrap_err();
        assert!(matches!(err, Error::SampleBudget { .. }));
    }

    #[test]
    fn flat_noise_variance_matches_density_times_bandwidth() {
        // alpha = -120 dB/Hz at fs = 1 MHz: variance = 1e-12 * 5e5 = 5e-7.
        let spec = NoiseSpec::flat(-120.0);
        let noise = sample_fractional_noise(&spec, 0.1, 1e6, 11).unwrap();
        assert!(noise.warning.is_none());
        let var = variance(&noise.samples);
        let expected = 5e-7;
        assert!(
            (var - expected).abs() < 0.05 * expected,
            "variance {var} vs expected {expected}"
        );
    }

    #[test]
    fn pll_shaped_variance_integrates_both_bands() {
        // In-band -90 dB/Hz over 1 kHz plus floor -120 dB/Hz out to Nyquist.
        let fs = 32_768.0;
        let spec = NoiseSpec::pll_shaped(-90.0, 1000.0, -120.0);
        let noise = sample_fractional_noise(&spec, 4.0, fs, 3).unwrap();
        let var = variance(&noise.samples);
        let expected = 1e-9 * 1000.0 + 1e-12 * (fs / 2.0 - 1000.0);
        assert!(
            (var - expected).abs() < 0.10 * expected,
            "variance {var} vs expected {expected}"
        );
    }

    #[test]
    fn spectral_and_direct_white_synthesis_agree_on_variance() {
        // A pll_shaped spec whose floor equals its in-band density is flat;
        // the FFT path must then match the direct path statistically.
        let fs = 65_536.0;
        let flat = sample_fractional_noise(&NoiseSpec::flat(-100.0), 1.0, fs, 5).unwrap();
        let shaped =
            sample_fractional_noise(&NoiseSpec::pll_shaped(-100.0, fs / 4.0, -100.0), 1.0, fs, 5)
                .unwrap();
        let v1 = variance(&flat.samples);
        let v2 = variance(&shaped.samples);
        assert!(
            (v1 - v2).abs() < 0.05 * v1,
            "flat path {v1} vs spectral path {v2}"
        );
    }

    #[test]
    fn record_mean_diffuses_like_white_noise() {
        // The record integral must carry variance psd(0) * T / 2; a zeroed
        // DC bin would silently destroy dephasing physics downstream.
        let fs = 4096.0;
        let duration = 1.0;
        let spec = NoiseSpec::pll_shaped(-30.0, fs / 8.0, -60.0);
        let n_rec = 400;
        let mut sum_sq = 0.0;
        for k in 0..n_rec {
            let rec = sample_fractional_noise(&spec, duration, fs, 1000 + k).unwrap();
            let dt = 1.0 / fs;
            let integral: f64 = rec.samples.iter().sum::<f64>() * dt;
            sum_sq += integral * integral;
        }
        let var = sum_sq / n_rec as f64;
        let expected = 1e-3 * duration / 2.0;
        assert!(
            (var - expected).abs() < 0.25 * expected,
            "integral variance {var} vs expected {expected}"
        );
    }

    #[test]
    fn silent_spec_returns_zeros() {
        let noise = sample_fractional_noise(&NoiseSpec::off(), 0.01, 1e5, 2).unwrap();
        assert_eq!(noise.samples.len(), 1001);
        assert!(noise.samples.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn positive_density_is_flagged_but_honored() {
        let noise = sample_fractional_noise(&NoiseSpec::flat(3.0), 0.001, 1e5, 2).unwrap();
        assert!(noise.warning.is_some());
        assert!(variance(&noise.samples) > 0.0);
    }

    #[test]
    fn noise_spec_round_trips_through_toml() {
        let flat = NoiseSpec::flat(-115.0);
        let pll = NoiseSpec::pll_shaped(-90.0, 1e3, -120.0);
        for spec in [flat, pll] {
            let text = toml::to_string(&spec).unwrap();
            let back: NoiseSpec = toml::from_str(&text).unwrap();
            assert_eq!(spec, back);
        }
        let off = NoiseSpec::off();
        let text = toml::to_string(&off).unwrap();
        assert!(text.contains("-inf"), "serialized: {text}");
        let back: NoiseSpec = toml::from_str(&text).unwrap();
        assert_eq!(off, back);
    }

    #[test]
    fn noise_spec_rejects_malformed_tables() {
        let missing: std::result::Result<NoiseSpec, _> =
            toml::from_str("alpha_db_per_hz = -90.0\nshape = \"pll_shaped\"\n");
        assert!(missing.is_err(), "pll_shaped without bandwidth must fail");
        let unknown: std::result::Result<NoiseSpec, _> =
            toml::from_str("alpha_db_per_hz = -90.0\nshape = \"lowpass\"\n");
        assert!(unknown.is_err());
    }
}
