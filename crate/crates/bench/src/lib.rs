//! Shared inputs for the benchmarks.

use quintic_core::{Alpha, ForwardVarianceCurve, ModelParams, OuSpec, DEFAULT_EPSILON};

/// Parameters fitted to the 23 October 2017 SPX/VIX surface.
pub fn published_params() -> ModelParams {
    ModelParams::new(
        Alpha::new(0.5907, 1.0, 0.2893, 0.0549).expect("valid alpha"),
        -0.6843,
        OuSpec::constant(DEFAULT_EPSILON, -0.0358).expect("valid OU"),
    )
    .expect("valid params")
}

pub fn sample_curve() -> ForwardVarianceCurve {
    ForwardVarianceCurve::parametric(0.0084, 2.0436, 0.0441).expect("valid curve")
}
