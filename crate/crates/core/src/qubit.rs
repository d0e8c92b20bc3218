//! Two-level qubit driven by the Raman beat note.
//!
//! The three-level Raman system is reduced to an effective two-level
//! qubit: the beat note detunes the drive by `delta(t) = 2 pi (nu_sb(t) -
//! nu_ab)` and couples the levels at the Rabi rate `Omega(t) = 2 pi
//! omega0 (1 + x(t))`, where `x(t)` is a realization of the drive's
//! fractional amplitude noise. Motional sidebands are additional
//! resonances at `nu_ab +/- offset`, each treated as an independent
//! two-level channel with a strength-scaled Rabi rate; their excitation
//! probabilities add and are clamped to one, which is exact whenever at
//! most one channel is near resonance.
//!
//! Integration uses the exact SU(2) propagator of the piecewise-constant
//! Hamiltonian: each step applies `U = cos(theta) I - i sin(theta)
//! (n . sigma)`, which is unitary to machine precision, so norm is
//! conserved bit-for-bit apart from rounding and the step size only
//! limits how finely `delta(t)` and `x(t)` are resolved.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result, ValidationIssue};
use crate::lock::{effective_beat, BeatNote, DriveTone};
use crate::noise::{
    db_to_linear, sample_fractional_noise, NoiseSpec, RepRateTrajectory, SAMPLE_BUDGET,
};
use crate::seed::derive_seed;

/// A motional resonance next to the carrier.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Sideband {
    /// Offset of the resonance from the qubit splitting.
    pub offset_hz: f64,
    /// Rabi-frequency ratio to the carrier, in [0, 1].
    pub strength: f64,
}

/// Which level the qubit starts in.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InitState {
    A,
    B,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QubitSpec {
    /// Qubit splitting `nu_ab`.
    pub nu_ab_hz: f64,
    /// Nominal carrier Rabi frequency, in cycles (a resonant pi pulse
    /// takes `1 / (2 omega0)`).
    pub omega0_hz: f64,
    #[serde(default)]
    pub sidebands: Vec<Sideband>,
    pub init_state: InitState,
}

impl QubitSpec {
    pub fn validate(&self, field: &str, issues: &mut Vec<ValidationIssue>) {
        if !(self.nu_ab_hz > 0.0) || !self.nu_ab_hz.is_finite() {
            issues.push(ValidationIssue {
                field: format!("{field}.nu_ab_hz"),
                message: format!("must be positive and finite, got {}", self.nu_ab_hz),
            });
        }
        if !(self.omega0_hz >= 0.0) || !self.omega0_hz.is_finite() {
            issues.push(ValidationIssue {
                field: format!("{field}.omega0_hz"),
                message: format!("must be non-negative and finite, got {}", self.omega0_hz),
            });
        }
        for (i, sb) in self.sidebands.iter().enumerate() {
            if !sb.offset_hz.is_finite() {
                issues.push(ValidationIssue {
                    field: format!("{field}.sidebands[{i}].offset_hz"),
                    message: format!("must be finite, got {}", sb.offset_hz),
                });
            }
            if !(0.0..=1.0).contains(&sb.strength) || !sb.strength.is_finite() {
                issues.push(ValidationIssue {
                    field: format!("{field}.sidebands[{i}].strength"),
                    message: format!("must lie in [0, 1], got {}", sb.strength),
                });
            }
        }
    }
}

/// Outcome of a single pulse.
#[derive(Debug, Clone, PartialEq)]
pub struct EvolutionResult {
    /// Population of the upper level at the end of the pulse.
    pub p_b: f64,
    /// Optional sampled history of `(t, p_b)`.
    pub trajectory: Option<Vec<(f64, f64)>>,
    /// Seed the noise realization was drawn from.
    pub seed: u64,
}

/// One point of a Raman frequency scan.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScanPoint {
    pub nu_m2_hz: f64,
    pub p_b: f64,
    pub stderr: f64,
}

/// Monte-Carlo gate-error estimate.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ErrorEstimate {
    /// Mean infidelity against the noiseless pulse.
    pub epsilon: f64,
    pub std_err: f64,
}

/// Rabi-frequency noise implied by one noisy drive arm.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RabiNoiseDensity {
    /// Fractional Rabi-frequency PSD: same shape and level as the arm's
    /// fractional power PSD, since the Rabi rate is linear in the field
    /// product and only one arm carries the noise.
    pub fractional: NoiseSpec,
    /// In-band amplitude noise density `omega0 * sqrt(alpha)`.
    pub absolute_hz_per_sqrt_hz: f64,
}

/// Linear interpolation over a uniformly sampled frequency series, clamped
/// at the ends.
struct FreqInterp<'a> {
    freq_hz: &'a [f64],
    dt_s: f64,
}

impl FreqInterp<'_> {
    fn at(&self, t_s: f64) -> f64 {
        let last = self.freq_hz.len() - 1;
        if last == 0 {
            return self.freq_hz[0];
        }
        let x = t_s / self.dt_s;
        if x <= 0.0 {
            return self.freq_hz[0];
        }
        let i = x.floor() as usize;
        if i >= last {
            return self.freq_hz[last];
        }
        let frac = x - i as f64;
        self.freq_hz[i] * (1.0 - frac) + self.freq_hz[i + 1] * frac
    }
}

#[derive(Clone, Copy)]
struct ChannelState {
    ca: Complex64,
    cb: Complex64,
}

impl ChannelState {
    fn ground() -> Self {
        ChannelState {
            ca: Complex64::new(1.0, 0.0),
            cb: Complex64::new(0.0, 0.0),
        }
    }

    /// Apply the exact propagator of `H = (delta/2) sigma_z +
    /// (omega/2) sigma_x` (angular frequencies) held constant for `dt`.
    fn step(&mut self, omega_ang: f64, delta_ang: f64, dt_s: f64) {
        let gen = (omega_ang * omega_ang + delta_ang * delta_ang).sqrt();
        if gen == 0.0 {
            return;
        }
        let theta = gen * dt_s / 2.0;
        let (sin, cos) = theta.sin_cos();
        let nx = omega_ang / gen;
        let nz = delta_ang / gen;
        let ca = self.ca;
        let cb = self.cb;
        let diag = Complex64::new(cos, -sin * nz);
        let off = Complex64::new(0.0, -sin * nx);
        self.ca = diag * ca + off * cb;
        self.cb = off * ca + diag.conj() * cb;
    }

    fn norm_sq(&self) -> f64 {
        self.ca.norm_sqr() + self.cb.norm_sqr()
    }
}

fn clamp01(x: f64) -> f64 {
    x.clamp(0.0, 1.0)
}

struct EvolutionPlan {
    n_steps: usize,
    dt_eff_s: f64,
    /// (angular Rabi scale, target frequency) per channel; carrier first.
    channels: Vec<(f64, f64)>,
}

fn plan_evolution(
    qubit: &QubitSpec,
    beat: &BeatNote,
    pulse_duration_s: f64,
    dt_s: f64,
) -> Result<EvolutionPlan> {
    let mut issues = Vec::new();
    qubit.validate("qubit", &mut issues);
    if beat.freq_hz.is_empty() {
        issues.push(ValidationIssue {
            field: "beat.freq_hz".to_string(),
            message: "beat note must contain at least one sample".to_string(),
        });
    } else if let Some(&bad) = beat.freq_hz.iter().find(|f| !(**f > 0.0) || !f.is_finite()) {
        issues.push(ValidationIssue {
            field: "beat.freq_hz".to_string(),
            message: format!("beat frequency must stay positive and finite, found {bad}"),
        });
    }
    if !(beat.dt_s > 0.0) || !beat.dt_s.is_finite() {
        issues.push(ValidationIssue {
            field: "beat.dt_s".to_string(),
            message: format!("must be positive and finite, got {}", beat.dt_s),
        });
    }
    if !(pulse_duration_s >= 0.0) || !pulse_duration_s.is_finite() {
        issues.push(ValidationIssue {
            field: "pulse_duration_s".to_string(),
            message: format!("must be non-negative and finite, got {pulse_duration_s}"),
        });
    }
    if !(dt_s > 0.0) || !dt_s.is_finite() {
        issues.push(ValidationIssue {
            field: "dt_s".to_string(),
            message: format!("must be positive and finite, got {dt_s}"),
        });
    }
    if !issues.is_empty() {
        return Err(Error::Invalid(issues));
    }

    let mut channels = vec![(2.0 * std::f64::consts::PI * qubit.omega0_hz, qubit.nu_ab_hz)];
    for sb in &qubit.sidebands {
        channels.push((
            2.0 * std::f64::consts::PI * qubit.omega0_hz * sb.strength,
            qubit.nu_ab_hz + sb.offset_hz,
        ));
    }

    // The step must resolve both the Rabi cycle and the fastest detuning
    // beat among the channels.
    let mut f_scale = qubit.omega0_hz;
    for &(_, target) in &channels {
        for &f in &beat.freq_hz {
            f_scale = f_scale.max((f - target).abs());
        }
    }
    if f_scale > 0.0 {
        let max_dt_s = 1.0 / (50.0 * f_scale);
        if dt_s > max_dt_s {
            return Err(Error::StepTooCoarse {
                what: "qubit evolution",
                dt_s,
                max_dt_s,
            });
        }
    }

    let n_steps = (pulse_duration_s / dt_s).ceil() as u64;
    if n_steps > SAMPLE_BUDGET {
        return Err(Error::SampleBudget {
            requested: n_steps,
            budget: SAMPLE_BUDGET,
        });
    }
    let n_steps = n_steps as usize;
    let dt_eff_s = if n_steps == 0 {
        dt_s
    } else {
        pulse_duration_s / n_steps as f64
    };
    Ok(EvolutionPlan {
        n_steps,
        dt_eff_s,
        channels,
    })
}

fn run_plan(
    qubit: &QubitSpec,
    beat: &BeatNote,
    plan: &EvolutionPlan,
    seed: u64,
    record_every: usize,
) -> Result<EvolutionResult> {
    let flips_to_pb = |flip_sum: f64| match qubit.init_state {
        InitState::A => clamp01(flip_sum),
        InitState::B => 1.0 - clamp01(flip_sum),
    };

    if plan.n_steps == 0 {
        let p_b = flips_to_pb(0.0);
        return Ok(EvolutionResult {
            p_b,
            trajectory: (record_every > 0).then(|| vec![(0.0, p_b)]),
            seed,
        });
    }

    let noise = sample_fractional_noise(
        &beat.noise,
        plan.n_steps as f64 * plan.dt_eff_s,
        1.0 / plan.dt_eff_s,
        seed,
    )?;
    let x = &noise.samples;
    debug_assert!(x.len() > plan.n_steps);

    let interp = FreqInterp {
        freq_hz: &beat.freq_hz,
        dt_s: beat.dt_s,
    };
    let mut states = vec![ChannelState::ground(); plan.channels.len()];
    let mut trajectory = (record_every > 0).then(|| {
        let mut v = Vec::with_capacity(plan.n_steps / record_every.max(1) + 2);
        v.push((0.0, flips_to_pb(0.0)));
        v
    });

    for k in 0..plan.n_steps {
        let t_mid = (k as f64 + 0.5) * plan.dt_eff_s;
        let nu_sb = interp.at(t_mid);
        let gain = 1.0 + x[k];
        for (state, &(omega_ang, target_hz)) in states.iter_mut().zip(&plan.channels) {
            let delta_ang = 2.0 * std::f64::consts::PI * (nu_sb - target_hz);
            state.step(omega_ang * gain, delta_ang, plan.dt_eff_s);
            debug_assert!(
                (state.norm_sq() - 1.0).abs() < 1e-9,
                "propagator lost unitarity at step {k}"
            );
        }
        if let Some(traj) = trajectory.as_mut() {
            let last = k + 1 == plan.n_steps;
            if (k + 1) % record_every == 0 || last {
                let flips: f64 = states.iter().map(|s| s.cb.norm_sqr()).sum();
                traj.push(((k + 1) as f64 * plan.dt_eff_s, flips_to_pb(flips)));
            }
        }
    }

    let flips: f64 = states.iter().map(|s| s.cb.norm_sqr()).sum();
    Ok(EvolutionResult {
        p_b: flips_to_pb(flips),
        trajectory,
        seed,
    })
}

/// Evolve the qubit through one pulse of the beat note.
///
/// `dt_s` must satisfy `dt <= 1 / (50 max(omega0, |delta|/2pi))`; the
/// actual step is `pulse_duration / ceil(pulse_duration / dt)`. The noise
/// realization is drawn from `seed`, one sample per step, so equal seeds
/// reproduce the run exactly.
pub fn evolve(
    qubit: &QubitSpec,
    beat: &BeatNote,
    pulse_duration_s: f64,
    dt_s: f64,
    seed: u64,
) -> Result<EvolutionResult> {
    let plan = plan_evolution(qubit, beat, pulse_duration_s, dt_s)?;
    run_plan(qubit, beat, &plan, seed, 0)
}

/// Same as [`evolve`] but records `(t, p_b)` every `record_every` steps
/// (plus the endpoints).
pub fn evolve_traced(
    qubit: &QubitSpec,
    beat: &BeatNote,
    pulse_duration_s: f64,
    dt_s: f64,
    seed: u64,
    record_every: usize,
) -> Result<EvolutionResult> {
    let plan = plan_evolution(qubit, beat, pulse_duration_s, dt_s)?;
    run_plan(qubit, beat, &plan, seed, record_every.max(1))
}

/// Scan the AOM2 frequency and record the mean excitation per point.
///
/// For each `nu_M2` the beat note is rebuilt through the lock algebra
/// (`nu_sb = n nu_rep - |nu_M1 - nu_M2|`) and `trials` independent noise
/// realizations of the pulse are averaged. One integration step is chosen
/// for the whole scan from the strictest point so every point sees the
/// same discretization.
pub fn raman_scan(
    qubit: &QubitSpec,
    traj: &RepRateTrajectory,
    drive: &DriveTone,
    n: u32,
    nu_m2_values: &[f64],
    pulse_duration_s: f64,
    trials: u32,
    seed: u64,
) -> Result<Vec<ScanPoint>> {
    if nu_m2_values.is_empty() || trials < 1 {
        return Err(Error::Invalid(vec![ValidationIssue {
            field: "nu_m2_values/trials".to_string(),
            message: "need at least one scan point and one trial".to_string(),
        }]));
    }

    // Strictest step over the whole scan, with margin over the 1/50 bound.
    let mut f_scale = qubit.omega0_hz;
    for &nu_m2 in nu_m2_values {
        let beat = effective_beat(traj, drive, nu_m2, n)?;
        for &f in &beat.freq_hz {
            f_scale = f_scale.max((f - qubit.nu_ab_hz).abs());
            for sb in &qubit.sidebands {
                f_scale = f_scale.max((f - qubit.nu_ab_hz - sb.offset_hz).abs());
            }
        }
    }
    let dt_s = if f_scale > 0.0 {
        1.0 / (64.0 * f_scale)
    } else {
        pulse_duration_s.max(1e-6)
    };

    let mut points = Vec::with_capacity(nu_m2_values.len());
    for (i, &nu_m2) in nu_m2_values.iter().enumerate() {
        let beat = effective_beat(traj, drive, nu_m2, n)?;
        let mut sum = 0.0;
        let mut sum_sq = 0.0;
        for t in 0..trials {
            let trial_seed = derive_seed(seed, "raman-scan", i as u64 * u64::from(trials) + u64::from(t));
            let r = evolve(qubit, &beat, pulse_duration_s, dt_s, trial_seed)?;
            sum += r.p_b;
            sum_sq += r.p_b * r.p_b;
        }
        let mean = sum / f64::from(trials);
        let stderr = if trials > 1 {
            let var = (sum_sq - sum * sum / f64::from(trials)) / f64::from(trials - 1);
            (var.max(0.0) / f64::from(trials)).sqrt()
        } else {
            0.0
        };
        points.push(ScanPoint {
            nu_m2_hz: nu_m2,
            p_b: mean,
            stderr,
        });
    }
    Ok(points)
}

/// Monte-Carlo estimate of the gate error caused by broadband Rabi noise.
///
/// Runs the resonant pulse with flat fractional amplitude noise `alpha`
/// and compares the final state against the noiseless pulse; the returned
/// `epsilon` is the mean infidelity `1 - |<ideal|noisy>|^2`. For white
/// noise the accumulated rotation-angle error has variance
/// `(2 pi omega0)^2 alpha T / 2` independent of the step size, which is
/// what produces the small-error law `epsilon ~ (pi^2/2) alpha omega0^2 T`.
pub fn error_probability_mc(
    alpha_db_per_hz: f64,
    omega0_hz: f64,
    total_time_s: f64,
    trials: u32,
    seed: u64,
) -> Result<ErrorEstimate> {
    let mut issues = Vec::new();
    if !(omega0_hz >= 0.0) || !omega0_hz.is_finite() {
        issues.push(ValidationIssue {
            field: "omega0_hz".to_string(),
            message: format!("must be non-negative and finite, got {omega0_hz}"),
        });
    }
    if !(total_time_s >= 0.0) || !total_time_s.is_finite() {
        issues.push(ValidationIssue {
            field: "total_time_s".to_string(),
            message: format!("must be non-negative and finite, got {total_time_s}"),
        });
    }
    if trials < 1 {
        issues.push(ValidationIssue {
            field: "trials".to_string(),
            message: "need at least one trial".to_string(),
        });
    }
    if alpha_db_per_hz.is_nan() || alpha_db_per_hz == f64::INFINITY {
        issues.push(ValidationIssue {
            field: "alpha_db_per_hz".to_string(),
            message: format!("must be a finite level or -inf, got {alpha_db_per_hz}"),
        });
    }
    if !issues.is_empty() {
        return Err(Error::Invalid(issues));
    }

    if omega0_hz == 0.0 || total_time_s == 0.0 {
        return Ok(ErrorEstimate {
            epsilon: 0.0,
            std_err: 0.0,
        });
    }

    let n_steps = (64.0 * omega0_hz * total_time_s).ceil() as u64;
    if n_steps > SAMPLE_BUDGET {
        return Err(Error::SampleBudget {
            requested: n_steps,
            budget: SAMPLE_BUDGET,
        });
    }
    let n_steps = n_steps as usize;
    let dt_s = total_time_s / n_steps as f64;
    let omega_ang = 2.0 * std::f64::consts::PI * omega0_hz;
    let noise = NoiseSpec::flat(alpha_db_per_hz);

    // Noiseless reference state, stepped on the same grid as the noisy
    // trials so the comparison isolates the noise and not the
    // discretization.
    let mut ideal = ChannelState::ground();
    for _ in 0..n_steps {
        ideal.step(omega_ang, 0.0, dt_s);
    }

    let mut sum = 0.0;
    let mut sum_sq = 0.0;
    for t in 0..trials {
        let trial_seed = derive_seed(seed, "error-mc", u64::from(t));
        let x = sample_fractional_noise(&noise, total_time_s, 1.0 / dt_s, trial_seed)?;
        let mut state = ChannelState::ground();
        for k in 0..n_steps {
            state.step(omega_ang * (1.0 + x.samples[k]), 0.0, dt_s);
        }
        let overlap = ideal.ca.conj() * state.ca + ideal.cb.conj() * state.cb;
        let eps = 1.0 - overlap.norm_sqr();
        sum += eps;
        sum_sq += eps * eps;
    }
    let mean = sum / f64::from(trials);
    let std_err = if trials > 1 {
        let var = (sum_sq - sum * sum / f64::from(trials)) / f64::from(trials - 1);
        (var.max(0.0) / f64::from(trials)).sqrt()
    } else {
        0.0
    };
    Ok(ErrorEstimate {
        epsilon: mean,
        std_err,
    })
}

/// Rabi-frequency noise implied by one noisy arm of the drive.
///
/// The Rabi rate is proportional to the product of the two optical field
/// amplitudes; with fractional power noise `alpha` on one arm the
/// fractional Rabi PSD equals `alpha` and the absolute in-band amplitude
/// density is `omega0 sqrt(alpha)`.
pub fn rabi_noise_density(omega0_hz: f64, noise: &NoiseSpec) -> RabiNoiseDensity {
    RabiNoiseDensity {
        fractional: *noise,
        absolute_hz_per_sqrt_hz: omega0_hz * db_to_linear(noise.alpha_db_per_hz).sqrt(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lock::{error_signal, LockConfig, LockMode};
    use crate::noise::{generate_trajectory, DriftProfile, JitterProfile};
    use rand::Rng;

    fn constant_beat(freq_hz: f64, noise: NoiseSpec) -> BeatNote {
        BeatNote {
            freq_hz: vec![freq_hz; 2],
            dt_s: 1.0,
            noise,
        }
    }

    fn bare_qubit(omega0_hz: f64) -> QubitSpec {
        QubitSpec {
            nu_ab_hz: 12.642819e9,
            omega0_hz,
            sidebands: Vec::new(),
            init_state: InitState::A,
        }
    }

    #[test]
    fn resonant_pi_pulse_inverts_the_qubit() {
        let qubit = bare_qubit(12.5e3);
        let beat = constant_beat(qubit.nu_ab_hz, NoiseSpec::off());
        let t_pi = 1.0 / (2.0 * qubit.omega0_hz);
        let r = evolve(&qubit, &beat, t_pi, 1e-7, 42).unwrap();
        assert!(
            (r.p_b - 1.0).abs() < 1e-9,
            "pi pulse reached p_b = {}",
            r.p_b
        );

        let mut from_b = qubit.clone();
        from_b.init_state = InitState::B;
        let r = evolve(&from_b, &beat, t_pi, 1e-7, 42).unwrap();
        assert!(r.p_b.abs() < 1e-9, "inverted pulse left p_b = {}", r.p_b);
    }

    #[test]
    fn zero_duration_leaves_the_initial_state() {
        let qubit = bare_qubit(12.5e3);
        let beat = constant_beat(qubit.nu_ab_hz, NoiseSpec::off());
        let r = evolve(&qubit, &beat, 0.0, 1e-7, 0).unwrap();
        assert_eq!(r.p_b, 0.0);
    }

    #[test]
    fn noiseless_evolution_matches_the_rabi_formula() {
        // Oracle: p_b = Omega^2/(Omega^2+delta^2) sin^2(sqrt(...) t / 2)
        // in angular units, against 100 random parameter draws.
        let mut rng = crate::seed::stream_rng(11, "rabi-oracle", 0);
        for case in 0..100 {
            let omega0: f64 = 10f64.powf(rng.random::<f64>() * 3.0 + 3.0);
            let detuning = (rng.random::<f64>() - 0.5) * 10.0 * omega0;
            let duration = rng.random::<f64>() * 10.0 / omega0;
            let qubit = bare_qubit(omega0);
            let beat = constant_beat(qubit.nu_ab_hz + detuning, NoiseSpec::off());
            let dt = 1.0 / (200.0 * omega0.max(detuning.abs()));
            let got = evolve(&qubit, &beat, duration, dt, 0).unwrap().p_b;

            let om = 2.0 * std::f64::consts::PI * omega0;
            let de = 2.0 * std::f64::consts::PI * detuning;
            let gen = (om * om + de * de).sqrt();
            let expected = (om / gen).powi(2) * (gen * duration / 2.0).sin().powi(2);
            assert!(
                (got - expected).abs() < 1e-6,
                "case {case}: got {got}, formula {expected}"
            );
        }
    }

    #[test]
    fn propagator_is_unitary_per_step_even_under_heavy_noise() {
        let noise = NoiseSpec::flat(-40.0);
        let x = sample_fractional_noise(&noise, 1e-3, 1e6, 3).unwrap();
        let mut state = ChannelState::ground();
        let omega_ang = 2.0 * std::f64::consts::PI * 1e4;
        for k in 0..1000 {
            state.step(omega_ang * (1.0 + x.samples[k]), 7e4, 1e-6);
            assert!(
                (state.norm_sq() - 1.0).abs() < 1e-9,
                "norm drifted to {} by step {k}",
                state.norm_sq()
            );
        }
    }

    #[test]
    fn coarse_steps_are_rejected() {
        let qubit = bare_qubit(12.5e3);
        let beat = constant_beat(qubit.nu_ab_hz + 5e6, NoiseSpec::off());
        match evolve(&qubit, &beat, 40e-6, 1e-6, 0) {
            Err(Error::StepTooCoarse { max_dt_s, .. }) => {
                assert!((max_dt_s - 1.0 / (50.0 * 5e6)).abs() < 1e-12);
            }
            other => panic!("expected StepTooCoarse, got {other:?}"),
        }
    }

    #[test]
    fn halving_the_step_barely_moves_a_noiseless_result() {
        // Time-dependent detuning so the step size actually matters.
        let qubit = bare_qubit(20e3);
        let mut freq = Vec::new();
        for i in 0..101 {
            freq.push(qubit.nu_ab_hz - 50e3 + i as f64 * 1e3);
        }
        let beat = BeatNote {
            freq_hz: freq,
            dt_s: 1e-6,
            noise: NoiseSpec::off(),
        };
        let coarse = evolve(&qubit, &beat, 1e-4, 2e-7, 0).unwrap().p_b;
        let fine = evolve(&qubit, &beat, 1e-4, 1e-7, 0).unwrap().p_b;
        assert!(
            (coarse - fine).abs() < 1e-6,
            "halving dt moved p_b from {coarse} to {fine}"
        );
    }

    #[test]
    fn sideband_resonance_follows_scaled_rabi_oscillation() {
        let mut qubit = bare_qubit(12.5e3);
        qubit.sidebands = vec![
            Sideband { offset_hz: -5e6, strength: 0.1 },
            Sideband { offset_hz: 5e6, strength: 0.1 },
        ];
        // Beat parked on the upper sideband: that channel is resonant at
        // 0.1 omega0; the carrier and lower sideband sit 5 and 10 MHz off.
        let beat = constant_beat(qubit.nu_ab_hz + 5e6, NoiseSpec::off());
        let duration = 40e-6;
        let got = evolve(&qubit, &beat, duration, 1e-9, 0).unwrap().p_b;

        let p_of = |omega_hz: f64, det_hz: f64| {
            let om = 2.0 * std::f64::consts::PI * omega_hz;
            let de = 2.0 * std::f64::consts::PI * det_hz;
            let gen = (om * om + de * de).sqrt();
            (om / gen).powi(2) * (gen * duration / 2.0).sin().powi(2)
        };
        let expected = p_of(1.25e3, 0.0) + p_of(12.5e3, 5e6) + p_of(1.25e3, 10e6);
        assert!(
            (got - expected).abs() < 1e-9,
            "got {got}, channel sum {expected}"
        );
    }

    #[test]
    fn trajectory_recording_brackets_the_pulse() {
        let qubit = bare_qubit(12.5e3);
        let beat = constant_beat(qubit.nu_ab_hz, NoiseSpec::off());
        let t_pi = 1.0 / (2.0 * qubit.omega0_hz);
        let r = evolve_traced(&qubit, &beat, t_pi, 1e-7, 0, 50).unwrap();
        let traj = r.trajectory.expect("trace requested");
        assert_eq!(traj[0], (0.0, 0.0));
        let (t_end, p_end) = *traj.last().unwrap();
        assert!((t_end - t_pi).abs() < 1e-12);
        assert!((p_end - 1.0).abs() < 1e-9);
        assert!(traj.iter().all(|&(_, p)| (0.0..=1.0).contains(&p)));
        // Population rises monotonically through a resonant pi pulse.
        for w in traj.windows(2) {
            assert!(w[1].1 >= w[0].1 - 1e-12);
        }
    }

    fn paper_scan_setup() -> (QubitSpec, RepRateTrajectory, crate::lock::DriveTone) {
        let mut qubit = bare_qubit(12.5e3);
        qubit.sidebands = vec![
            Sideband { offset_hz: -5e6, strength: 0.1 },
            Sideband { offset_hz: 5e6, strength: 0.1 },
        ];
        let traj = generate_trajectory(
            80.6e6,
            &DriftProfile::none(),
            &JitterProfile::none(),
            40e-6,
            40e-6,
            1,
        )
        .unwrap();
        let lock = LockConfig {
            n: 157,
            nu_lo_hz: 12.438e9,
            bpf_center_hz: 157.0 * 80.6e6,
            bpf_width_hz: 100e6,
            lpf_cutoff_hz: 500e6,
            mode: LockMode::Direct,
            error_noise: NoiseSpec::off(),
        };
        let drive = error_signal(&traj, &lock).unwrap();
        (qubit, traj, drive)
    }

    #[test]
    fn noiseless_scan_is_symmetric_about_the_carrier() {
        let (qubit, traj, drive) = paper_scan_setup();
        let carrier = 204.819e6;
        let offsets = [-8e6, -4e6, -1e6, 0.0, 1e6, 4e6, 8e6];
        let nu_m2: Vec<f64> = offsets.iter().map(|o| carrier + o).collect();
        let points = raman_scan(&qubit, &traj, &drive, 157, &nu_m2, 40e-6, 1, 0).unwrap();
        for i in 0..3 {
            let lo = points[i].p_b;
            let hi = points[6 - i].p_b;
            assert!(
                (lo - hi).abs() < 1e-9 * lo.max(hi).max(1e-12),
                "scan must mirror: p({}) = {lo} vs p({}) = {hi}",
                points[i].nu_m2_hz,
                points[6 - i].nu_m2_hz
            );
        }
        // Carrier point is a resonant pi pulse.
        assert!((points[3].p_b - 1.0).abs() < 1e-9);
        assert!(points.iter().all(|p| p.stderr == 0.0), "noiseless runs agree");
    }

    #[test]
    fn zero_rabi_frequency_never_excites() {
        let (mut qubit, traj, drive) = paper_scan_setup();
        qubit.omega0_hz = 0.0;
        let points =
            raman_scan(&qubit, &traj, &drive, 157, &[200e6, 204.819e6, 210e6], 40e-6, 2, 0)
                .unwrap();
        assert!(points.iter().all(|p| p.p_b == 0.0));
    }

    #[test]
    fn error_estimate_tracks_the_quadratic_noise_law() {
        // epsilonn = (pi^2/2) alpha omega0^2 T for small errors: alpha
        // -115 dB/Hz, omega0 600 kHz, T 1 ms gives 0.56%.
        let est = error_probability_mc(-115.0, 600e3, 1e-3, 400, 7).unwrap();
        let expected = std::f64::consts::PI.powi(2) / 2.0 * db_to_linear(-115.0) * 600e3f64.powi(2) * 1e-3;
        assert!(
            (est.epsilon - expected).abs() < 0.25 * expected,
            "epsilon {} vs law {expected} (stderr {})",
            est.epsilon,
            est.std_err
        );
        assert!(est.std_err < 0.15 * est.epsilon);
    }

    #[test]
    fn silent_drive_has_zero_error() {
        let est = error_probability_mc(f64::NEG_INFINITY, 600e3, 1e-3, 100, 1).unwrap();
        assert!(est.epsilon.abs() < 1e-10, "epsilon {}", est.epsilon);
        assert!(est.std_err < 1e-10);
    }

    #[test]
    fn rabi_density_reports_both_fractional_and_absolute_levels() {
        let d = rabi_noise_density(600e3, &NoiseSpec::flat(-120.0));
        assert_eq!(d.fractional, NoiseSpec::flat(-120.0));
        assert!((d.absolute_hz_per_sqrt_hz - 0.6).abs() < 1e-12);

        let off = rabi_noise_density(600e3, &NoiseSpec::off());
        assert_eq!(off.absolute_hz_per_sqrt_hz, 0.0);
    }
}
