//! Shared numerical primitives: Gaussian moments, quadrature rules, adaptive
//! integration and the Black formula with its implied-volatility inverse.

mod black;
mod integrate;
mod optimize;
mod quadrature;

pub use black::{black_price, black_total_std, implied_vol, normal_cdf, normal_pdf, BlackInputs, OptionFlag};
pub use integrate::adaptive_integrate;
pub use optimize::{nelder_mead, nelder_mead_bounded, Minimum, NelderMeadOptions};
pub use quadrature::{make_quadrature, QuadratureKind, QuadratureRule};

/// `E[Y^p]` for `Y ~ N(0, sigma^2)`: zero for odd `p`, `sigma^p (p-1)!!` otherwise.
pub fn gaussian_moment(p: u32, sigma: f64) -> f64 {
    if p % 2 == 1 {
        return 0.0;
    }
    let var = sigma * sigma;
    let mut acc = 1.0;
    let mut k = 1;
    while k < p {
        acc *= k as f64 * var;
        k += 2;
    }
    acc
}

/// Binomial coefficient for the small arguments used by the VIX polynomial.
pub fn binomial(n: u32, k: u32) -> f64 {
    if k > n {
        return 0.0;
    }
    let k = k.min(n - k);
    let mut acc = 1.0;
    for j in 0..k {
        acc = acc * (n - j) as f64 / (j + 1) as f64;
    }
    acc.round()
}

/// Neumaier-compensated sum; the result does not depend on how the input was
/// partitioned across threads beyond the last few ulps.
pub fn compensated_sum<I: IntoIterator<Item = f64>>(values: I) -> f64 {
    let mut sum = 0.0f64;
    let mut comp = 0.0f64;
    for v in values {
        let t = sum + v;
        if sum.abs() >= v.abs() {
            comp += (sum - t) + v;
        } else {
            comp += (v - t) + sum;
        }
        sum = t;
    }
    sum + comp
}
