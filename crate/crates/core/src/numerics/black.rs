use serde::{Deserialize, Serialize};
use statrs::function::erf::erfc;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OptionFlag {
    Call,
    Put,
}

impl OptionFlag {
    pub fn intrinsic(self, forward: f64, strike: f64) -> f64 {
        match self {
            OptionFlag::Call => (forward - strike).max(0.0),
            OptionFlag::Put => (strike - forward).max(0.0),
        }
    }

    pub fn payoff(self, underlying: f64, strike: f64) -> f64 {
        self.intrinsic(underlying, strike)
    }
}

/// Inputs of the undiscounted Black formula.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BlackInputs {
    pub forward: f64,
    pub strike: f64,
    pub maturity: f64,
    pub vol: f64,
    pub flag: OptionFlag,
}

impl BlackInputs {
    pub fn new(forward: f64, strike: f64, maturity: f64, vol: f64, flag: OptionFlag) -> Result<Self> {
        let inputs = Self {
            forward,
            strike,
            maturity,
            vol,
            flag,
        };
        inputs.validate()?;
        Ok(inputs)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.forward > 0.0 && self.forward.is_finite()) {
            return Err(Error::InvalidParameter(format!("forward must be positive, got {}", self.forward)));
        }
        if !(self.strike > 0.0 && self.strike.is_finite()) {
            return Err(Error::InvalidParameter(format!("strike must be positive, got {}", self.strike)));
        }
        if !(self.maturity > 0.0 && self.maturity.is_finite()) {
            return Err(Error::InvalidParameter(format!("maturity must be positive, got {}", self.maturity)));
        }
        if !(self.vol >= 0.0 && self.vol.is_finite()) {
            return Err(Error::InvalidParameter(format!("vol must be non-negative, got {}", self.vol)));
        }
        Ok(())
    }
}

pub fn normal_cdf(x: f64) -> f64 {
    0.5 * erfc(-x / std::f64::consts::SQRT_2)
}

pub fn normal_pdf(x: f64) -> f64 {
    (-0.5 * x * x).exp() / (2.0 * std::f64::consts::PI).sqrt()
}

/// Price of the out-of-the-money side (call if `K >= F`, put otherwise) as a
/// function of total standard deviation `s = vol * sqrt(T)`.
fn otm_price(forward: f64, strike: f64, s: f64) -> f64 {
    if s <= 0.0 {
        return 0.0;
    }
    let d1 = (forward / strike).ln() / s + 0.5 * s;
    let d2 = d1 - s;
    let v = if strike >= forward {
        forward * normal_cdf(d1) - strike * normal_cdf(d2)
    } else {
        strike * normal_cdf(-d2) - forward * normal_cdf(-d1)
    };
    v.max(0.0)
}

/// Undiscounted Black price given the total standard deviation `vol * sqrt(T)`.
///
/// The in-the-money side is obtained from the out-of-the-money one by parity,
/// which keeps relative accuracy in the wings.
pub fn black_total_std(forward: f64, strike: f64, total_std: f64, flag: OptionFlag) -> f64 {
    flag.intrinsic(forward, strike) + otm_price(forward, strike, total_std)
}

pub fn black_price(inputs: &BlackInputs) -> f64 {
    black_total_std(
        inputs.forward,
        inputs.strike,
        inputs.vol * inputs.maturity.sqrt(),
        inputs.flag,
    )
}

const VOL_BRACKET_HI: f64 = 5.0;
const VOL_CAP: f64 = 1e3;

/// Black implied volatility by a Newton iteration safeguarded by bisection.
///
/// The price must lie strictly between the intrinsic value and the upper
/// bound (forward for a call, strike for a put).
pub fn implied_vol(price: f64, forward: f64, strike: f64, maturity: f64, flag: OptionFlag) -> Result<f64> {
    BlackInputs::new(forward, strike, maturity, 0.0, flag)?;
    let lower = flag.intrinsic(forward, strike);
    let upper = match flag {
        OptionFlag::Call => forward,
        OptionFlag::Put => strike,
    };
    if !(price > lower && price < upper) {
        return Err(Error::OutOfBoundsPrice { price, lower, upper });
    }
    let target = price - lower;
    let sqrt_t = maturity.sqrt();

    let mut lo = 0.0;
    let mut hi = VOL_BRACKET_HI * sqrt_t;
    while otm_price(forward, strike, hi) < target {
        lo = hi;
        hi *= 2.0;
        if hi > VOL_CAP * sqrt_t {
            return Err(Error::OutOfBoundsPrice { price, lower, upper });
        }
    }

    // Brenner-Subrahmanyam start, clipped into the bracket
    let mut s = (target / forward.min(strike) * (2.0 * std::f64::consts::PI).sqrt()).clamp(lo, hi);
    if s <= lo || s >= hi {
        s = 0.5 * (lo + hi);
    }
    for _ in 0..200 {
        let f = otm_price(forward, strike, s) - target;
        if f == 0.0 {
            break;
        }
        if f > 0.0 {
            hi = s;
        } else {
            lo = s;
        }
        if hi - lo <= 1e-16 * hi.max(1e-300) {
            break;
        }
        let d1 = (forward / strike).ln() / s + 0.5 * s;
        let vega = forward * normal_pdf(d1);
        let newton = s - f / vega;
        if vega > 0.0 && (f / vega).abs() <= 1e-15 * s {
            s = newton.clamp(lo, hi);
            break;
        }
        s = if vega > 0.0 && newton > lo && newton < hi {
            newton
        } else {
            0.5 * (lo + hi)
        };
    }
    Ok(s / sqrt_t)
}
