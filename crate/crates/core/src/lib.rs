//! Quintic Ornstein-Uhlenbeck stochastic volatility model.
//!
//! Joint pricing of SPX and VIX derivatives: VIX futures and options by
//! Gaussian quadrature, SPX vanillas by a conditional Monte Carlo estimator,
//! forward variance stripping from SPX smiles and joint calibration.

// `!(x > 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]
#![allow(clippy::excessive_precision, clippy::too_many_arguments, clippy::needless_range_loop)]
// kept for the 1.75 MSRV
#![allow(clippy::manual_is_multiple_of, clippy::unnecessary_map_or)]

pub mod calibration;
pub mod error;
pub mod market;
pub mod model;
pub mod numerics;
pub mod ou;
mod rng;
pub mod spx;
pub mod vix;

pub use calibration::{
    calibrate, evaluate, objective, staged_calibrate, synthetic_market, Bounds, CalibrationProblem, CalibrationResult,
    CalibrationSettings, CalibrationWeights, FreeParams, FutureQuote, Instrument, ObjectiveValue, Regime, Residual,
};
pub use error::{Error, Result};
pub use market::{
    build_curve, fit_slice, load_quotes, read_quotes, strip_forward_variance, strip_with_fits, write_quotes, CurveStyle,
    Quote, QuoteFile, QuoteSet, Rejection, Slice, StrippedVariance, SviConfig, SviSlice, Underlying, VarianceInterval,
};
pub use model::{normalization_g, vol_from_state, Alpha, ForwardVarianceCurve, ModelParams, DEFAULT_EPSILON};
pub use numerics::{black_price, implied_vol, BlackInputs, OptionFlag, QuadratureKind, QuadratureRule};
pub use ou::{ou_variance, simulate_exact, HMode, OuSpec, PathGrid};
pub use spx::{martingale_check, mixed_call_price, spx_smile, McConfig, McPrice, SpxPathSet, SpxSmile};
pub use vix::{build_vix_polynomial, vix_future, vix_option, vix_smile, VixPolynomial, VixSmile, VIX_WINDOW};
