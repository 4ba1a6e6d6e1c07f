use thiserror::Error;

/// Errors produced by the pricing, stripping and calibration routines.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid domain: {0}")]
    InvalidDomain(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("price {price} outside no-arbitrage bounds ({lower}, {upper})")]
    OutOfBoundsPrice { price: f64, lower: f64, upper: f64 },

    #[error("degenerate normalization E[p(X_u)^2] = 0 at u = {u}")]
    DegenerateNormalization { u: f64 },

    #[error("t = {t} outside forward variance curve horizon [0, {horizon}]")]
    OutOfHorizon { t: f64, horizon: f64 },

    #[error("VIX^2 polynomial negative ({value}) at x = {x}")]
    NegativePolynomial { x: f64, value: f64 },

    #[error("parse error at line {line}: {message}")]
    Parse { line: u64, message: String },

    #[error("insufficient quotes: need {needed}, got {got}")]
    InsufficientQuotes { needed: usize, got: usize },

    #[error("slice fit failed: rmse {rmse:.3e} exceeds bound {bound:.3e}")]
    FitFailure { rmse: f64, bound: f64 },

    #[error("negative stripped variance {integral:.3e} on [{t_lo}, {t_hi}]: arbitrage or bad data")]
    NegativeStrippedVariance { t_lo: f64, t_hi: f64, integral: f64 },

    #[error("unpriceable instruments: {}", .0.join("; "))]
    Unpriceable(Vec<String>),

    #[error("regime mismatch: {0}")]
    RegimeMismatch(String),

    #[error("io error: {0}")]
    Io(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
