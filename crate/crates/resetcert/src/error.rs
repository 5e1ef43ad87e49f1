use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("transfer function evaluated at a pole (omega = {omega})")]
    EvaluationAtPole { omega: f64 },
    #[error("denominator is identically zero")]
    ZeroDenominator,
    #[error("shaping filter has a zero DC denominator; cannot normalize")]
    Normalization,
    #[error("transfer function is improper (numerator degree {num} > denominator degree {den})")]
    ImproperTransferFunction { num: usize, den: usize },
    #[error("plant must be strictly proper")]
    NonStrictlyProperPlant,
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("frequency response too coarse: phase jumps by {jump:.3} rad near omega = {omega}")]
    InsufficientFrfResolution { omega: f64, jump: f64 },
    #[error("two-GFORE realization needs xi >= 1 (got {xi})")]
    RealizationUnavailable { xi: f64 },
    #[error("matrix is not positive definite")]
    NotPositiveDefinite,
    #[error("parse error on line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error("frequencies must be strictly increasing and positive (line {line})")]
    NonMonotoneFrequency { line: usize },
    #[error("frequency table needs at least two samples")]
    EmptyTable,
    #[error("omega = {omega} outside the measured band [{lo}, {hi}]")]
    OutOfBand { omega: f64, lo: f64, hi: f64 },
    #[error("shaping filter vanishes at omega = {omega}")]
    ZeroShapingFilter { omega: f64 },
    #[error("NSV vanishes at omega = {omega}")]
    ZeroNsv { omega: f64 },
    #[error("grid too sparse: NSV angle jumps by {gap:.3} rad near omega = {omega}")]
    SparseGrid { omega: f64, gap: f64 },
    #[error("grid too sparse for the certifier: {0}")]
    GridTooSparse(String),
    #[error("domain error: {0}")]
    Domain(String),
    #[error("state norm exceeded the overflow bound at t = {t}")]
    StateOverflow { t: f64 },
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}
