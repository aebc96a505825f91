use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    /// A parameter violated its invariant. `field` names the offending field.
    #[error("invalid parameter `{field}`: {reason}")]
    InvalidParameter { field: String, reason: String },

    #[error("not enough samples: need at least {needed}, got {got}")]
    TooFewSamples { needed: usize, got: usize },

    #[error("empty selection: no pulses in control window [{lo}, {hi}]")]
    EmptySelection { lo: f64, hi: f64 },

    #[error("selection too small: {got} pulses in window, need at least {needed}")]
    SelectionTooSmall { got: usize, needed: usize },

    #[error("nonpositive denominator in {what}: {value}")]
    NonPositiveDenominator { what: &'static str, value: f64 },

    /// Electronic noise of a detector is not below its shot-noise level, so the
    /// noise-subtracted NRF is meaningless.
    #[error(
        "electronic noise of detector {detector} ({noise_var:.6e}) is not below its shot-noise level ({shot_noise:.6e})"
    )]
    NoiseAboveShotNoise {
        detector: u8,
        noise_var: f64,
        shot_noise: f64,
    },

    #[error("dataset kind mismatch: expected {expected}, got {got}")]
    WrongDatasetKind { expected: String, got: String },

    #[error("rank-deficient fit: {0}")]
    RankDeficient(String),

    #[error("missing calibration dataset: {what}; generate one with `{hint}`")]
    MissingCalibration { what: String, hint: String },

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("parse error in {path}: {message}")]
    Parse { path: PathBuf, message: String },

    #[error("unsupported dataset format version `{found}` (expected `{expected}`)")]
    Version { found: String, expected: String },

    #[error("truncated dataset file {path}: {message}")]
    Truncated { path: PathBuf, message: String },

    #[error("checksum mismatch in {path}: stored {stored}, computed {computed}")]
    Checksum {
        path: PathBuf,
        stored: String,
        computed: String,
    },
}

impl Error {
    /// Stable snake_case name of the variant, for machine-readable records.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::InvalidParameter { .. } => "invalid_parameter",
            Error::TooFewSamples { .. } => "too_few_samples",
            Error::EmptySelection { .. } => "empty_selection",
            Error::SelectionTooSmall { .. } => "selection_too_small",
            Error::NonPositiveDenominator { .. } => "nonpositive_denominator",
            Error::NoiseAboveShotNoise { .. } => "noise_above_shot_noise",
            Error::WrongDatasetKind { .. } => "wrong_dataset_kind",
            Error::RankDeficient(_) => "rank_deficient",
            Error::MissingCalibration { .. } => "missing_calibration",
            Error::Io { .. } => "io",
            Error::Parse { .. } => "parse",
            Error::Version { .. } => "version",
            Error::Truncated { .. } => "truncated",
            Error::Checksum { .. } => "checksum",
        }
    }

    pub(crate) fn param(field: impl Into<String>, reason: impl Into<String>) -> Self {
        Error::InvalidParameter {
            field: field.into(),
            reason: reason.into(),
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
