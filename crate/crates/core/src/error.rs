use std::path::PathBuf;

use thiserror::Error;

/// Every failure the library can report.
///
/// The variant names double as the stable error names printed by the CLI.
#[derive(Debug, Error)]
pub enum Error {
    #[error("file not found: {0}")]
    FileNotFound(PathBuf),

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    #[error("parse error at {location}: {message}")]
    ParseError { location: String, message: String },

    #[error("incomplete panel: missing value for alpha `{alpha}` at date {date}")]
    IncompletePanel { alpha: String, date: usize },

    #[error("too few dates: need at least {required}, got {actual}")]
    TooFewDates { required: usize, actual: usize },

    #[error("non-finite value at {0}")]
    NonFinite(String),

    #[error("alpha {alpha} has an all-zero position slice at date {date}")]
    EmptyAlphaSlice { alpha: usize, date: usize },

    #[error("alpha {alpha} at date {date} has L1 norm {norm} (expected 1)")]
    NormalizationError { alpha: usize, date: usize, norm: f64 },

    #[error("stock `{0}` is held by no alpha at any date")]
    UntradedStock(String),

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("constraint matrix is rank deficient (rank {rank} < {columns})")]
    RankDeficientConstraints { rank: usize, columns: usize },

    #[error("matrix is not symmetric (max asymmetry {0:e})")]
    AsymmetricMatrix(f64),

    #[error("matrix is not positive definite")]
    NotPositiveDefinite,

    #[error("spectrum is identically zero")]
    ZeroSpectrum,

    #[error("spectrum has no positive entries")]
    EmptySpectrum,

    #[error("input too short: need at least {required}, got {actual}")]
    TooShort { required: usize, actual: usize },

    #[error("regression weight {index} is not positive ({value})")]
    BadWeight { index: usize, value: f64 },

    #[error("turnover multiplier {index} is not positive ({value})")]
    BadMultiplier { index: usize, value: f64 },

    #[error("regression is underdetermined: {rows} observations for {columns} coefficients")]
    Underdetermined { rows: usize, columns: usize },

    #[error("position Gram matrix at date {0} is identically zero")]
    DegenerateDate(usize),

    #[error("weighted Gram matrix has no eigenvalue above the truncation threshold")]
    NullGram,

    #[error("positions violate constraint {constraint} by {residual:e} (alpha {alpha}, date {date})")]
    ConstraintViolated { alpha: usize, date: usize, constraint: usize, residual: f64 },

    #[error("eliminated stocks do not support the constraints: {0}")]
    DegenerateConstraintSplit(String),

    #[error("signal is identically zero; weights cannot be normalized")]
    ZeroSignal,

    #[error("constrained position projection failed for alpha {alpha} at date {date}")]
    ProjectionFailed { alpha: usize, date: usize },

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    /// Stable identifier for the failure kind.
    pub fn name(&self) -> &'static str {
        match self {
            Error::FileNotFound(_) => "FileNotFound",
            Error::Io(_) => "Io",
            Error::ParseError { .. } => "ParseError",
            Error::IncompletePanel { .. } => "IncompletePanel",
            Error::TooFewDates { .. } => "TooFewDates",
            Error::NonFinite(_) => "NonFinite",
            Error::EmptyAlphaSlice { .. } => "EmptyAlphaSlice",
            Error::NormalizationError { .. } => "NormalizationError",
            Error::UntradedStock(_) => "UntradedStock",
            Error::DimensionMismatch(_) => "DimensionMismatch",
            Error::RankDeficientConstraints { .. } => "RankDeficientConstraints",
            Error::AsymmetricMatrix(_) => "AsymmetricMatrix",
            Error::NotPositiveDefinite => "NotPositiveDefinite",
            Error::ZeroSpectrum => "ZeroSpectrum",
            Error::EmptySpectrum => "EmptySpectrum",
            Error::TooShort { .. } => "TooShort",
            Error::BadWeight { .. } => "BadWeight",
            Error::BadMultiplier { .. } => "BadMultiplier",
            Error::Underdetermined { .. } => "Underdetermined",
            Error::DegenerateDate(_) => "DegenerateDate",
            Error::NullGram => "NullGram",
            Error::ConstraintViolated { .. } => "ConstraintViolated",
            Error::DegenerateConstraintSplit(_) => "DegenerateConstraintSplit",
            Error::ZeroSignal => "ZeroSignal",
            Error::ProjectionFailed { .. } => "ProjectionFailed",
            Error::InvalidConfig(_) => "InvalidConfig",
        }
    }

    /// Process exit code used by the CLI; distinct per failure kind.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::InvalidConfig(_) => 2,
            Error::FileNotFound(_) => 3,
            Error::Io(_) => 4,
            Error::ParseError { .. } => 5,
            Error::IncompletePanel { .. } => 6,
            Error::TooFewDates { .. } => 7,
            Error::NonFinite(_) => 8,
            Error::EmptyAlphaSlice { .. } => 9,
            Error::NormalizationError { .. } => 10,
            Error::UntradedStock(_) => 11,
            Error::DimensionMismatch(_) => 12,
            Error::RankDeficientConstraints { .. } => 13,
            Error::AsymmetricMatrix(_) => 14,
            Error::NotPositiveDefinite => 15,
            Error::ZeroSpectrum => 16,
            Error::EmptySpectrum => 17,
            Error::TooShort { .. } => 18,
            Error::BadWeight { .. } => 19,
            Error::BadMultiplier { .. } => 20,
            Error::Underdetermined { .. } => 21,
            Error::DegenerateDate(_) => 22,
            Error::NullGram => 23,
            Error::ConstraintViolated { .. } => 24,
            Error::DegenerateConstraintSplit(_) => 25,
            Error::ZeroSignal => 26,
            Error::ProjectionFailed { .. } => 27,
        }
    }
}
