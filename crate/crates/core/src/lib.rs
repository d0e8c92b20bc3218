//! Deterministic simulator for an rf beat-note stabilization chain on an
//! optical frequency comb, and for the stimulated Raman transitions the
//! stabilized comb drives in a two-level qubit.
//!
//! The model follows one signal path end to end:
//!
//! 1. Two arms of a mode-locked pulse train are frequency-shifted by
//!    acousto-optic modulators (AOMs) and interfere on a fast photodiode.
//!    The rf spectrum shows comb teeth at multiples of the repetition rate
//!    plus interference sidebands split off by the AOM difference frequency
//!    ([`comb`], [`spectrum`]).
//! 2. The repetition rate drifts and jitters ([`noise`]). A feedback chain
//!    mixes a high comb tooth against a local oscillator and steers one AOM
//!    so that the sideband used to drive the qubit stays fixed even though
//!    every tooth moves ([`lock`]).
//! 3. The resulting beat note drives a two-level transition; broadband
//!    amplitude noise on the drive sets a floor on pulse fidelity, and
//!    residual frequency noise sets the Ramsey coherence time
//!    ([`qubit`], [`ramsey`]).
//!
//! Every stochastic quantity derives from a single scenario seed through a
//! documented hash ([`seed`]), so a scenario file plus a seed reproduces all
//! artifacts byte for byte. The [`scenario`] module loads scenario files,
//! dispatches experiments, and writes CSV/JSON artifacts; the companion CLI
//! crate wraps it in a command-line tool.
//!
//! Units are SI throughout: frequencies in Hz (cycles, not rad/s unless a
//! variable is explicitly angular), times in seconds, spectral densities in
//! dB relative to 1/Hz for fractional quantities.

pub mod comb;
pub mod error;
pub mod export;
pub mod lock;
pub mod noise;
pub mod qubit;
pub mod ramsey;
pub mod scenario;
pub mod seed;
pub mod spectrum;

pub use error::{Error, Result, ValidationIssue};
