//! VIX futures and options.
//!
//! `VIX_T^2` is a degree-10 polynomial `h(X_T) = (100^2 / Delta) sum_i beta_i X_T^i`
//! whose coefficients integrate the conditional forward variance over
//! `[T, T + Delta]`. Since `X_T` is centred Gaussian, VIX derivatives reduce to
//! one-dimensional Gaussian integrals.

use std::collections::HashMap;
use std::sync::{Arc, Mutex, OnceLock};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{normalization_g, self_convolve, ForwardVarianceCurve, ModelParams};
use crate::numerics::{binomial, gaussian_moment, implied_vol, OptionFlag, QuadratureKind, QuadratureRule};
use crate::ou::{conditional_variance, decay_factor, ou_variance};

/// VIX averaging window, 30 calendar days in ACT/365 years.
pub const VIX_WINDOW: f64 = 30.0 / 365.0;
/// Default Gauss-Hermite node count.
pub const DEFAULT_VIX_NODES: usize = 400;

const BETA_NODES: usize = 128;
// Integration range for option payoffs, in standard deviations of X_T.
const STATE_RANGE: f64 = 14.0;
const ROOT_SCAN_CELLS: usize = 2048;

/// `VIX_T^2 = scale * sum_i beta_i X_T^i` with `X_T ~ N(0, sigma_xt^2)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VixPolynomial {
    pub maturity: f64,
    pub beta: [f64; 11],
    pub sigma_xt: f64,
    /// `100^2 / Delta`.
    pub scale: f64,
}

impl VixPolynomial {
    /// `VIX_T^2` in index points squared given `X_T = x`.
    pub fn h(&self, x: f64) -> f64 {
        self.scale * self.beta.iter().rev().fold(0.0, |acc, b| acc * x + b)
    }

    /// Expected integrated variance over the window as a decimal variance rate.
    pub fn variance_rate(&self, x: f64) -> f64 {
        self.h(x) / 1e4
    }

    /// `VIX_T` at standardized state `z` (so `X_T = sigma_xt z`), rejecting
    /// materially negative `h`.
    fn vix_at(&self, z: f64) -> Result<f64> {
        let x = self.sigma_xt * z;
        let v = self.h(x);
        if v >= 0.0 {
            return Ok(v.sqrt());
        }
        // round-off allowance relative to the size of the terms
        let mag = self.scale * self.beta.iter().enumerate().map(|(i, b)| (b * x.powi(i as i32)).abs()).sum::<f64>();
        if v >= -1e-12 * mag {
            Ok(0.0)
        } else {
            Err(Error::NegativePolynomial { x, value: v })
        }
    }
}

fn legendre_unit(n: usize) -> Arc<QuadratureRule> {
    static CACHE: OnceLock<Mutex<HashMap<usize, Arc<QuadratureRule>>>> = OnceLock::new();
    let cache = CACHE.get_or_init(|| Mutex::new(HashMap::new()));
    let mut map = cache.lock().unwrap();
    map.entry(n)
        .or_insert_with(|| Arc::new(QuadratureRule::gauss_legendre(n, -1.0, 1.0).expect("valid rule")))
        .clone()
}

/// Coefficients of `VIX_T^2` as a polynomial in `X_T`.
pub fn build_vix_polynomial(params: &ModelParams, curve: &ForwardVarianceCurve, maturity: f64) -> Result<VixPolynomial> {
    if !(maturity >= 0.0 && maturity.is_finite()) {
        return Err(Error::InvalidParameter(format!("VIX maturity must be non-negative, got {maturity}")));
    }
    let lo = maturity;
    let hi = maturity + VIX_WINDOW;
    let conv = self_convolve(params.alpha());
    let ou = params.ou();
    let rule = legendre_unit(BETA_NODES);

    let mut edges = vec![lo];
    edges.extend(curve.kinks(lo, hi));
    edges.push(hi);

    let mut beta = [0.0; 11];
    for w in edges.windows(2) {
        let (a, b) = (w[0], w[1]);
        let mid = 0.5 * (a + b);
        let half = 0.5 * (b - a);
        for (z, wt) in rule.iter() {
            let u = mid + half * z;
            let weight = wt * half * curve.eval(u)? / normalization_g(params, u)?;
            let g_sd = conditional_variance(ou, lo, u).sqrt();
            let d = decay_factor(ou, lo, u);
            let mut d_pow = 1.0;
            for (i, beta_i) in beta.iter_mut().enumerate() {
                let mut acc = 0.0;
                for k in i..=10 {
                    if conv[k] != 0.0 {
                        acc += conv[k] * binomial(k as u32, i as u32) * gaussian_moment((k - i) as u32, g_sd);
                    }
                }
                *beta_i += weight * acc * d_pow;
                d_pow *= d;
            }
        }
    }
    Ok(VixPolynomial {
        maturity,
        beta,
        sigma_xt: ou_variance(ou, maturity).sqrt(),
        scale: 1e4 / VIX_WINDOW,
    })
}

fn require_hermite(quad: &QuadratureRule) -> Result<()> {
    if quad.kind() != QuadratureKind::GaussHermiteProbabilist {
        return Err(Error::InvalidParameter(
            "VIX pricing integrates against the Gaussian density and needs a Gauss-Hermite rule".into(),
        ));
    }
    Ok(())
}

/// `E[payoff(VIX_T)]` by the Gauss-Hermite sum. Accurate for smooth payoffs.
pub fn vix_expectation<F: Fn(f64) -> f64>(poly: &VixPolynomial, quad: &QuadratureRule, payoff: F) -> Result<f64> {
    require_hermite(quad)?;
    let mut acc = 0.0;
    for (z, w) in quad.iter() {
        acc += w * payoff(poly.vix_at(z)?);
    }
    Ok(acc)
}

/// VIX future `E[VIX_T]`.
pub fn vix_future(poly: &VixPolynomial, quad: &QuadratureRule) -> Result<f64> {
    vix_expectation(poly, quad, |v| v)
}

/// Standardized states in `(-STATE_RANGE, STATE_RANGE)` where `VIX_T = strike`.
fn strike_crossings(poly: &VixPolynomial, strike: f64) -> Result<Vec<f64>> {
    let f = |z: f64| -> Result<f64> { Ok(poly.vix_at(z)? - strike) };
    let step = 2.0 * STATE_RANGE / ROOT_SCAN_CELLS as f64;
    let mut roots = Vec::new();
    let mut z0 = -STATE_RANGE;
    let mut f0 = f(z0)?;
    for i in 1..=ROOT_SCAN_CELLS {
        let z1 = -STATE_RANGE + i as f64 * step;
        let f1 = f(z1)?;
        if f0 == 0.0 {
            roots.push(z0);
        } else if f0 * f1 < 0.0 {
            let (mut a, mut b, mut fa) = (z0, z1, f0);
            for _ in 0..200 {
                let m = 0.5 * (a + b);
                if m <= a || m >= b {
                    break;
                }
                let fm = f(m)?;
                if fm == 0.0 {
                    a = m;
                    b = m;
                    break;
                }
                if fa * fm < 0.0 {
                    b = m;
                } else {
                    a = m;
                    fa = fm;
                }
            }
            roots.push(0.5 * (a + b));
        }
        z0 = z1;
        f0 = f1;
    }
    roots.dedup();
    Ok(roots)
}

/// Vanilla VIX option `E[(VIX_T - K)^+]` (call) or `E[(K - VIX_T)^+]` (put).
///
/// The payoff has a kink where `VIX_T = K`, which a plain Gauss-Hermite sum
/// resolves only to `O(1e-4)`. The state axis is therefore split at the
/// crossings and each piece where the payoff is positive is integrated with a
/// Gauss-Legendre rule of the same size as `quad`. Without crossings the
/// payoff is smooth (linear in `VIX_T`) and the Hermite sum is used.
pub fn vix_option(poly: &VixPolynomial, quad: &QuadratureRule, strike: f64, flag: OptionFlag) -> Result<f64> {
    require_hermite(quad)?;
    if !(strike >= 0.0 && strike.is_finite()) {
        return Err(Error::InvalidParameter(format!("VIX strike must be non-negative, got {strike}")));
    }
    let roots = strike_crossings(poly, strike)?;
    if roots.is_empty() {
        let in_the_money = match flag {
            OptionFlag::Call => poly.vix_at(0.0)? > strike,
            OptionFlag::Put => poly.vix_at(0.0)? < strike,
        };
        if !in_the_money {
            return Ok(0.0);
        }
        let fut = vix_future(poly, quad)?;
        return Ok(match flag {
            OptionFlag::Call => fut - strike,
            OptionFlag::Put => strike - fut,
        }
        .max(0.0));
    }
    let rule = legendre_unit(quad.len().max(2));
    let mut edges = vec![-STATE_RANGE];
    edges.extend(roots);
    edges.push(STATE_RANGE);
    let density = |z: f64| (-0.5 * z * z).exp() / (2.0 * std::f64::consts::PI).sqrt();
    let mut total = 0.0;
    for w in edges.windows(2) {
        let (a, b) = (w[0], w[1]);
        if b <= a {
            continue;
        }
        let mid = 0.5 * (a + b);
        if flag.payoff(poly.vix_at(mid)?, strike) <= 0.0 {
            continue;
        }
        let half = 0.5 * (b - a);
        for (z, wt) in rule.iter() {
            let s = mid + half * z;
            total += wt * half * flag.payoff(poly.vix_at(s)?, strike) * density(s);
        }
    }
    Ok(total)
}

/// One strike of a model VIX smile.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VixSmilePoint {
    pub strike: f64,
    /// Price of the out-of-the-money option (put below the future, call above).
    pub price: f64,
    pub flag: OptionFlag,
    pub implied_vol: Option<f64>,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VixSmile {
    pub maturity: f64,
    pub future: f64,
    pub points: Vec<VixSmilePoint>,
}

/// Model VIX implied volatilities, inverted against the model's own future.
pub fn vix_smile(
    params: &ModelParams,
    curve: &ForwardVarianceCurve,
    maturity: f64,
    strikes: &[f64],
    quad: &QuadratureRule,
) -> Result<VixSmile> {
    let poly = build_vix_polynomial(params, curve, maturity)?;
    let future = vix_future(&poly, quad)?;
    let mut points = Vec::with_capacity(strikes.len());
    for &strike in strikes {
        let flag = if strike < future { OptionFlag::Put } else { OptionFlag::Call };
        let price = vix_option(&poly, quad, strike, flag)?;
        let (implied_vol, error) = if price <= 1e-12 * future {
            // point-mass VIX: no time value left
            (Some(0.0), None)
        } else {
            match implied_vol(price, future, strike, maturity, flag) {
                Ok(v) => (Some(v), None),
                Err(e) => (None, Some(e.to_string())),
            }
        };
        points.push(VixSmilePoint {
            strike,
            price,
            flag,
            implied_vol,
            error,
        });
    }
    Ok(VixSmile {
        maturity,
        future,
        points,
    })
}
