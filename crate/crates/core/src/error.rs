//! Error types shared across the simulator.

use thiserror::Error;

/// One violated constraint found while validating a configuration.
///
/// `field` is a dotted path into the scenario structure
/// (e.g. `lock.lpf_cutoff_hz`), so a batch of issues reads like a lint
/// report instead of a single opaque failure.
#[derive(Debug, Clone, PartialEq)]
pub struct ValidationIssue {
    pub field: String,
    pub message: String,
}

impl std::fmt::Display for ValidationIssue {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}: {}", self.field, self.message)
    }
}

#[derive(Debug, Error)]
pub enum Error {
    /// A configuration failed validation; every violated constraint is
    /// listed, not just the first.
    #[error("invalid configuration ({} issue{}):\n{}",
        .0.len(),
        if .0.len() == 1 { "" } else { "s" },
        .0.iter().map(|i| format!("  - {i}")).collect::<Vec<_>>().join("\n"))]
    Invalid(Vec<ValidationIssue>),

    /// A scenario file could not be parsed at all.
    #[error("cannot parse scenario: {0}")]
    Parse(String),

    /// Two AOM arms at the same shift frequency produce no usable sideband.
    #[error("AOM arms are degenerate: |nu_M1 - nu_M2| must be nonzero when both arms are included")]
    DegenerateArms,

    /// A model frequency exceeds what the simulator is built to represent.
    #[error("frequency out of range: {what} = {value_hz} Hz exceeds {limit_hz} Hz")]
    FrequencyOutOfRange {
        what: &'static str,
        value_hz: f64,
        limit_hz: f64,
    },

    /// A synthesis or trajectory request would allocate more samples than
    /// the configured budget.
    #[error("sample budget exceeded: {requested} samples requested, budget is {budget}")]
    SampleBudget { requested: u64, budget: u64 },

    /// Not enough signal to resolve the requested resolution bandwidth.
    #[error("record too short for rbw = {rbw_hz} Hz: need at least {required_s} s of samples, got {actual_s} s")]
    RecordTooShort {
        rbw_hz: f64,
        required_s: f64,
        actual_s: f64,
    },

    /// The sample rate is too low for the requested signal content.
    #[error("sample rate {sample_rate_hz} Hz is too low: need more than {required_hz} Hz to represent {what}")]
    SampleRateTooLow {
        what: &'static str,
        sample_rate_hz: f64,
        required_hz: f64,
    },

    /// Trajectory step too coarse for the requested jitter bandwidth.
    #[error("dt = {dt_s} s aliases jitter of bandwidth {bandwidth_hz} Hz: need dt <= {max_dt_s} s")]
    AliasedJitter {
        dt_s: f64,
        bandwidth_hz: f64,
        max_dt_s: f64,
    },

    /// Integration step too coarse for the fastest dynamics present.
    #[error("dt = {dt_s} s cannot resolve the dynamics: need dt <= {max_dt_s} s for {what}")]
    StepTooCoarse {
        what: &'static str,
        dt_s: f64,
        max_dt_s: f64,
    },

    /// The generated repetition rate left the physical domain.
    #[error("repetition rate became non-positive at t = {t_s} s ({value_hz} Hz); drift parameters are too aggressive for this duration")]
    NonPositiveRepRate { t_s: f64, value_hz: f64 },

    /// The beat note left the filter passband, so the feedback chain would
    /// lose lock.
    #[error("lock lost at t = {t_s} s: beat note at {freq_hz} Hz is outside [{band_lo_hz}, {band_hi_hz}] Hz")]
    LockLost {
        t_s: f64,
        freq_hz: f64,
        band_lo_hz: f64,
        band_hi_hz: f64,
    },

    /// Two time series that must share a sample grid do not.
    #[error("sample grids differ: {left} has {left_len} samples at dt = {left_dt_s} s, {right} has {right_len} at dt = {right_dt_s} s")]
    GridMismatch {
        left: &'static str,
        left_len: usize,
        left_dt_s: f64,
        right: &'static str,
        right_len: usize,
        right_dt_s: f64,
    },

    /// A bisection search was given bounds that do not bracket the target.
    #[error("calibration bounds do not bracket the target: tau({lo}) = {tau_lo_s} s, tau({hi}) = {tau_hi_s} s, target {target_s} s")]
    BracketFailure {
        lo: f64,
        hi: f64,
        tau_lo_s: f64,
        tau_hi_s: f64,
        target_s: f64,
    },

    /// A named bundled scenario does not exist.
    #[error("unknown scenario {name:?}; run `list-scenarios` for the bundled set")]
    UnknownScenario { name: String },

    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },

    #[error("cannot encode JSON: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    /// Process exit code for the CLI: validation problems are distinguished
    /// from runtime failures.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Invalid(_) | Error::Parse(_) | Error::UnknownScenario { .. } => 1,
            _ => 2,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn invalid_lists_every_issue() {
        let err = Error::Invalid(vec![
            ValidationIssue {
                field: "comb.nu_rep0_hz".into(),
                message: "must be positive".into(),
            },
            ValidationIssue {
                field: "lock.n".into(),
                message: "must be at least 1".into(),
            },
        ]);
        let text = err.to_string();
        assert!(text.contains("2 issues"), "got: {text}");
        assert!(text.contains("comb.nu_rep0_hz"), "got: {text}");
        assert!(text.contains("lock.n"), "got: {text}");
    }

    #[test]
    fn exit_codes_separate_validation_from_runtime() {
        let invalid = Error::Invalid(vec![]);
        let runtime = Error::SampleBudget {
            requested: 10,
            budget: 1,
        };
        assert_eq!(invalid.exit_code(), 1);
        assert_eq!(runtime.exit_code(), 2);
    }
}
