//! Model parameters, the quintic polynomial and the forward variance curve.
//!
//! Spot volatility is `sigma_t = sqrt(xi0(t)) p(X_t) / sqrt(g(t))` with
//! `p(x) = a0 + a1 x + a3 x^3 + a5 x^5` and `g(t) = E[p(X_t)^2]`, so that
//! `E[sigma_t^2] = xi0(t)` for every parameter set.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::{gaussian_moment, QuadratureRule};
use crate::ou::{ou_variance, HMode, OuSpec};

/// Default mean-reversion time scale.
pub const DEFAULT_EPSILON: f64 = 1.0 / 52.0;

/// Coefficients of `p(x) = a0 + a1 x + a3 x^3 + a5 x^5`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Alpha {
    pub a0: f64,
    pub a1: f64,
    pub a3: f64,
    pub a5: f64,
}

impl Alpha {
    pub fn new(a0: f64, a1: f64, a3: f64, a5: f64) -> Result<Self> {
        let a = Self { a0, a1, a3, a5 };
        a.validate()?;
        Ok(a)
    }

    pub fn validate(&self) -> Result<()> {
        let c = self.as_array();
        if c.iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
            return Err(Error::InvalidParameter(format!("alpha coefficients must be non-negative, got {c:?}")));
        }
        if c.iter().all(|v| *v == 0.0) {
            return Err(Error::InvalidParameter("alpha coefficients cannot all be zero".into()));
        }
        Ok(())
    }

    pub fn as_array(&self) -> [f64; 4] {
        [self.a0, self.a1, self.a3, self.a5]
    }

    /// Dense coefficients `alpha_0..alpha_5` with `alpha_2 = alpha_4 = 0`.
    pub fn dense(&self) -> [f64; 6] {
        [self.a0, self.a1, 0.0, self.a3, 0.0, self.a5]
    }
}

pub fn poly_eval(alpha: &Alpha, x: f64) -> f64 {
    let x2 = x * x;
    alpha.a0 + x * (alpha.a1 + x2 * (alpha.a3 + x2 * alpha.a5))
}

/// Coefficients of `p(x)^2`: `(alpha * alpha)_k` for `k = 0..=10`.
pub fn self_convolve(alpha: &Alpha) -> [f64; 11] {
    let a = alpha.dense();
    let mut out = [0.0; 11];
    for (i, ai) in a.iter().enumerate() {
        for (j, aj) in a.iter().enumerate() {
            out[i + j] += ai * aj;
        }
    }
    out
}

/// The calibratable parameter set: alpha, rho and the OU factor.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "ParamsDoc", into = "ParamsDoc")]
pub struct ModelParams {
    alpha: Alpha,
    rho: f64,
    ou: OuSpec,
}

impl ModelParams {
    pub fn new(alpha: Alpha, rho: f64, ou: OuSpec) -> Result<Self> {
        alpha.validate()?;
        if !(-1.0..=0.0).contains(&rho) {
            return Err(Error::InvalidParameter(format!("rho must lie in [-1, 0], got {rho}")));
        }
        Ok(Self { alpha, rho, ou })
    }

    pub fn alpha(&self) -> &Alpha {
        &self.alpha
    }

    pub fn rho(&self) -> f64 {
        self.rho
    }

    pub fn ou(&self) -> &OuSpec {
        &self.ou
    }

    /// Whether `S` is known to be a true martingale (`rho <= 0` and `a5 > 0`).
    pub fn in_martingale_regime(&self) -> bool {
        self.rho <= 0.0 && self.alpha.a5 > 0.0
    }

    pub fn with_rho(&self, rho: f64) -> Result<Self> {
        Self::new(self.alpha, rho, self.ou)
    }

    pub fn with_alpha(&self, alpha: Alpha) -> Result<Self> {
        Self::new(alpha, self.rho, self.ou)
    }

    pub fn with_ou(&self, ou: OuSpec) -> Result<Self> {
        Self::new(self.alpha, self.rho, ou)
    }
}

/// JSON layout of [`ModelParams`].
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ParamsDoc {
    alpha0: f64,
    alpha1: f64,
    alpha3: f64,
    alpha5: f64,
    rho: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    epsilon: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    h: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    h0: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    h_inf: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    kappa: Option<f64>,
}

impl TryFrom<ParamsDoc> for ModelParams {
    type Error = Error;

    fn try_from(d: ParamsDoc) -> Result<Self> {
        let eps = d.epsilon.unwrap_or(DEFAULT_EPSILON);
        let ou = match (d.h, d.h0, d.h_inf, d.kappa) {
            (Some(h), None, None, None) => OuSpec::constant(eps, h)?,
            (None, Some(h0), Some(h_inf), Some(kappa)) => OuSpec::time_dependent(eps, h0, h_inf, kappa)?,
            _ => {
                return Err(Error::InvalidParameter(
                    "give either `h` or all of `h0`, `h_inf`, `kappa`".into(),
                ))
            }
        };
        ModelParams::new(Alpha::new(d.alpha0, d.alpha1, d.alpha3, d.alpha5)?, d.rho, ou)
    }
}

impl From<ModelParams> for ParamsDoc {
    fn from(p: ModelParams) -> Self {
        let (h, h0, h_inf, kappa) = match p.ou.h_mode() {
            HMode::Constant { h } => (Some(h), None, None, None),
            HMode::TimeDependent { h0, h_inf, kappa } => (None, Some(h0), Some(h_inf), Some(kappa)),
        };
        ParamsDoc {
            alpha0: p.alpha.a0,
            alpha1: p.alpha.a1,
            alpha3: p.alpha.a3,
            alpha5: p.alpha.a5,
            rho: p.rho,
            epsilon: Some(p.ou.epsilon()),
            h,
            h0,
            h_inf,
            kappa,
        }
    }
}

/// `g(u) = E[p(X_u)^2]`.
pub fn normalization_g(params: &ModelParams, u: f64) -> Result<f64> {
    let conv = self_convolve(&params.alpha);
    let sigma = ou_variance(&params.ou, u).sqrt();
    let g: f64 = conv
        .iter()
        .enumerate()
        .map(|(k, c)| c * gaussian_moment(k as u32, sigma))
        .sum();
    if g > 0.0 {
        Ok(g)
    } else {
        Err(Error::DegenerateNormalization { u })
    }
}

/// Natural cubic spline with flat extrapolation outside its nodes.
#[derive(Debug, Clone, PartialEq)]
pub struct CubicSpline {
    t: Vec<f64>,
    x: Vec<f64>,
    // second derivatives at the nodes
    m: Vec<f64>,
}

impl CubicSpline {
    pub fn natural(t: Vec<f64>, x: Vec<f64>) -> Result<Self> {
        let n = t.len();
        if n == 0 || n != x.len() {
            return Err(Error::InvalidParameter("spline needs matching, non-empty node arrays".into()));
        }
        if t.windows(2).any(|w| !(w[1] > w[0])) || t.iter().chain(&x).any(|v| !v.is_finite()) {
            return Err(Error::InvalidParameter("spline nodes must be finite with increasing abscissae".into()));
        }
        let mut m = vec![0.0; n];
        if n > 2 {
            // tridiagonal system for interior second derivatives (Thomas algorithm)
            let k = n - 2;
            let mut sub = vec![0.0; k];
            let mut diag = vec![0.0; k];
            let mut sup = vec![0.0; k];
            let mut rhs = vec![0.0; k];
            for i in 1..n - 1 {
                let h0 = t[i] - t[i - 1];
                let h1 = t[i + 1] - t[i];
                sub[i - 1] = h0;
                diag[i - 1] = 2.0 * (h0 + h1);
                sup[i - 1] = h1;
                rhs[i - 1] = 6.0 * ((x[i + 1] - x[i]) / h1 - (x[i] - x[i - 1]) / h0);
            }
            for i in 1..k {
                let w = sub[i] / diag[i - 1];
                diag[i] -= w * sup[i - 1];
                rhs[i] -= w * rhs[i - 1];
            }
            let mut sol = vec![0.0; k];
            sol[k - 1] = rhs[k - 1] / diag[k - 1];
            for i in (0..k.saturating_sub(1)).rev() {
                sol[i] = (rhs[i] - sup[i] * sol[i + 1]) / diag[i];
            }
            m[1..n - 1].copy_from_slice(&sol);
        }
        Ok(Self { t, x, m })
    }

    pub fn nodes(&self) -> impl Iterator<Item = (f64, f64)> + '_ {
        self.t.iter().copied().zip(self.x.iter().copied())
    }

    pub fn abscissae(&self) -> &[f64] {
        &self.t
    }

    pub fn values(&self) -> &[f64] {
        &self.x
    }

    pub fn eval(&self, s: f64) -> f64 {
        let n = self.t.len();
        if s <= self.t[0] {
            return self.x[0];
        }
        if s >= self.t[n - 1] {
            return self.x[n - 1];
        }
        let i = self.t.partition_point(|ti| *ti <= s) - 1;
        let h = self.t[i + 1] - self.t[i];
        let a = (self.t[i + 1] - s) / h;
        let b = (s - self.t[i]) / h;
        a * self.x[i]
            + b * self.x[i + 1]
            + ((a * a * a - a) * self.m[i] + (b * b * b - b) * self.m[i + 1]) * h * h / 6.0
    }
}

/// The input curve `xi0(t)`.
///
/// Every representation extrapolates flat beyond its last node or breakpoint,
/// so any `t >= 0` is inside the horizon.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "CurveDoc", into = "CurveDoc")]
pub enum ForwardVarianceCurve {
    /// `a e^{-bt} + c (1 - e^{-bt})`.
    Parametric { a: f64, b: f64, c: f64 },
    /// Square of a natural cubic spline through `(t_i, x_i)`.
    SplineSquared(CubicSpline),
    /// `values[i]` on `[breakpoints[i], breakpoints[i+1])`, last value flat.
    PiecewiseConstant { breakpoints: Vec<f64>, values: Vec<f64> },
}

impl ForwardVarianceCurve {
    pub fn flat(xi: f64) -> Result<Self> {
        Self::piecewise(vec![0.0], vec![xi])
    }

    pub fn parametric(a: f64, b: f64, c: f64) -> Result<Self> {
        if [a, b, c].iter().any(|v| !(v.is_finite() && *v > 0.0)) {
            return Err(Error::InvalidParameter(format!(
                "parametric curve needs a, b, c > 0, got ({a}, {b}, {c})"
            )));
        }
        Ok(Self::Parametric { a, b, c })
    }

    pub fn spline(nodes: &[(f64, f64)]) -> Result<Self> {
        if nodes.iter().any(|(_, x)| !(*x >= 0.0)) {
            return Err(Error::InvalidParameter("spline node values must be non-negative".into()));
        }
        let (t, x) = nodes.iter().copied().unzip();
        Ok(Self::SplineSquared(CubicSpline::natural(t, x)?))
    }

    pub fn piecewise(breakpoints: Vec<f64>, values: Vec<f64>) -> Result<Self> {
        if breakpoints.is_empty() || breakpoints.len() != values.len() {
            return Err(Error::InvalidParameter(
                "piecewise curve needs one value per breakpoint".into(),
            ));
        }
        if breakpoints[0] != 0.0 || breakpoints.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::InvalidParameter(
                "piecewise breakpoints must start at 0 and increase".into(),
            ));
        }
        if values.iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
            return Err(Error::InvalidParameter("piecewise values must be non-negative".into()));
        }
        Ok(Self::PiecewiseConstant { breakpoints, values })
    }

    pub fn eval(&self, t: f64) -> Result<f64> {
        if !(t >= 0.0 && t.is_finite()) {
            return Err(Error::OutOfHorizon { t, horizon: f64::INFINITY });
        }
        Ok(match self {
            Self::Parametric { a, b, c } => {
                let e = (-b * t).exp();
                a * e + c * (1.0 - e)
            }
            Self::SplineSquared(s) => {
                let v = s.eval(t);
                v * v
            }
            Self::PiecewiseConstant { breakpoints, values } => {
                let i = breakpoints.partition_point(|b| *b <= t) - 1;
                values[i]
            }
        })
    }

    /// Points in `(lo, hi)` where the curve or one of its derivatives jumps.
    pub fn kinks(&self, lo: f64, hi: f64) -> Vec<f64> {
        let pts: &[f64] = match self {
            Self::Parametric { .. } => &[],
            Self::SplineSquared(s) => s.abscissae(),
            Self::PiecewiseConstant { breakpoints, .. } => breakpoints,
        };
        pts.iter().copied().filter(|p| *p > lo && *p < hi).collect()
    }

    /// `int_lo^hi xi0(s) ds`, exact for all three representations.
    pub fn integrate(&self, lo: f64, hi: f64) -> Result<f64> {
        if hi < lo {
            return Ok(-self.integrate(hi, lo)?);
        }
        self.eval(lo)?;
        self.eval(hi)?;
        if let Self::Parametric { a, b, c } = self {
            return Ok(c * (hi - lo) + (a - c) * ((-b * lo).exp() - (-b * hi).exp()) / b);
        }
        let mut edges = vec![lo];
        edges.extend(self.kinks(lo, hi));
        edges.push(hi);
        let mut total = 0.0;
        for w in edges.windows(2) {
            total += match self {
                Self::PiecewiseConstant { .. } => self.eval(w[0])? * (w[1] - w[0]),
                // squared cubic on each segment: degree 6, exact with 4 nodes
                _ => gauss4().integrate_on(w[0], w[1], |s| self.eval(s).unwrap_or(0.0)),
            };
        }
        Ok(total)
    }

    /// The same curve with every value multiplied by `factor`.
    pub fn scaled(&self, factor: f64) -> Result<Self> {
        match self {
            Self::Parametric { a, b, c } => Self::parametric(a * factor, *b, c * factor),
            Self::SplineSquared(s) => {
                let r = factor.sqrt();
                let nodes: Vec<(f64, f64)> = s.nodes().map(|(t, x)| (t, x * r)).collect();
                Self::spline(&nodes)
            }
            Self::PiecewiseConstant { breakpoints, values } => {
                Self::piecewise(breakpoints.clone(), values.iter().map(|v| v * factor).collect())
            }
        }
    }
}

fn gauss4() -> &'static QuadratureRule {
    static RULE: std::sync::OnceLock<QuadratureRule> = std::sync::OnceLock::new();
    RULE.get_or_init(|| QuadratureRule::gauss_legendre(4, -1.0, 1.0).expect("valid rule"))
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
enum CurveDoc {
    Parametric { params: ParametricDoc },
    Spline { nodes: Vec<(f64, f64)> },
    Piecewise { breakpoints: Vec<f64>, values: Vec<f64> },
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct ParametricDoc {
    a: f64,
    b: f64,
    c: f64,
}

impl TryFrom<CurveDoc> for ForwardVarianceCurve {
    type Error = Error;

    fn try_from(d: CurveDoc) -> Result<Self> {
        match d {
            CurveDoc::Parametric { params } => Self::parametric(params.a, params.b, params.c),
            CurveDoc::Spline { nodes } => Self::spline(&nodes),
            CurveDoc::Piecewise { breakpoints, values } => Self::piecewise(breakpoints, values),
        }
    }
}

impl From<ForwardVarianceCurve> for CurveDoc {
    fn from(c: ForwardVarianceCurve) -> Self {
        match c {
            ForwardVarianceCurve::Parametric { a, b, c } => CurveDoc::Parametric {
                params: ParametricDoc { a, b, c },
            },
            ForwardVarianceCurve::SplineSquared(s) => CurveDoc::Spline {
                nodes: s.nodes().collect(),
            },
            ForwardVarianceCurve::PiecewiseConstant { breakpoints, values } => {
                CurveDoc::Piecewise { breakpoints, values }
            }
        }
    }
}

pub fn xi0_eval(curve: &ForwardVarianceCurve, t: f64) -> Result<f64> {
    curve.eval(t)
}

/// `sqrt(xi0(t)) / sqrt(g(t))`, the state-independent factor of `sigma_t`.
pub fn vol_scale(params: &ModelParams, curve: &ForwardVarianceCurve, t: f64) -> Result<f64> {
    Ok((curve.eval(t)? / normalization_g(params, t)?).sqrt())
}

/// Spot volatility `sqrt(xi0(t)) p(x) / sqrt(g(t))`. The sign of `p(x)` is
/// kept; only `sigma^2` enters prices.
pub fn vol_from_state(params: &ModelParams, curve: &ForwardVarianceCurve, t: f64, x: f64) -> Result<f64> {
    Ok(vol_scale(params, curve, t)? * poly_eval(&params.alpha, x))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_distr::{Distribution, StandardNormal};

    fn published() -> ModelParams {
        ModelParams::new(
            Alpha::new(0.5907, 1.0, 0.2893, 0.0549).unwrap(),
            -0.6843,
            OuSpec::constant(DEFAULT_EPSILON, -0.0358).unwrap(),
        )
        .unwrap()
    }

    fn gaussian_draws(n: usize, sd: f64, seed: u64) -> Vec<f64> {
        let mut rng = rand_chacha::ChaCha12Rng::seed_from_u64(seed);
        (0..n)
            .map(|_| {
                let z: f64 = StandardNormal.sample(&mut rng);
                sd * z
            })
            .collect()
    }

    fn mean_se(v: &[f64]) -> (f64, f64) {
        let n = v.len() as f64;
        let m = v.iter().sum::<f64>() / n;
        let var = v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n - 1.0);
        (m, (var / n).sqrt())
    }

    #[test]
    fn poly_examples() {
        assert_eq!(poly_eval(&Alpha::new(1.0, 0.0, 0.0, 0.0).unwrap(), 7.0), 1.0);
        assert_eq!(poly_eval(&Alpha::new(0.0, 1.0, 0.0, 0.0).unwrap(), -2.0), -2.0);
        let a = Alpha::new(0.5907, 1.0, 0.2893, 0.0549).unwrap();
        assert!((poly_eval(&a, 1.0) - 1.9349).abs() < 1e-12);
        let x: f64 = -1.3;
        let direct = 0.5907 + x + 0.2893 * x.powi(3) + 0.0549 * x.powi(5);
        assert!((poly_eval(&a, x) - direct).abs() < 1e-14);
    }

    #[test]
    fn alpha_validation() {
        assert!(Alpha::new(0.0, 0.0, 0.0, 0.0).is_err());
        assert!(Alpha::new(-0.1, 1.0, 0.0, 0.0).is_err());
        let a = Alpha::new(1.0, 0.0, 0.0, 0.0).unwrap();
        let ou = OuSpec::constant(DEFAULT_EPSILON, 0.0).unwrap();
        assert!(ModelParams::new(a, 0.2, ou).is_err());
        assert!(ModelParams::new(a, -1.2, ou).is_err());
        let p = ModelParams::new(a, -0.5, ou).unwrap();
        assert!(!p.in_martingale_regime());
        assert!(published().in_martingale_regime());
    }

    #[test]
    fn self_convolution() {
        assert_eq!(self_convolve(&Alpha::new(1.0, 0.0, 0.0, 0.0).unwrap()), {
            let mut e = [0.0; 11];
            e[0] = 1.0;
            e
        });
        let c = self_convolve(&Alpha::new(0.0, 0.0, 0.0, 1.0).unwrap());
        assert_eq!(c[10], 1.0);
        assert_eq!(c.iter().sum::<f64>(), 1.0);

        // brute force: expand (1 + x + x^3 + x^5)^2 by evaluating at 11 points
        // and solving the Vandermonde system is overkill; multiply term lists.
        let terms = [0usize, 1, 3, 5];
        let mut oracle = [0.0; 11];
        for &i in &terms {
            for &j in &terms {
                oracle[i + j] += 1.0;
            }
        }
        let c = self_convolve(&Alpha::new(1.0, 1.0, 1.0, 1.0).unwrap());
        assert_eq!(c, oracle);
        assert_eq!(oracle, [1.0, 2.0, 1.0, 2.0, 2.0, 2.0, 3.0, 0.0, 2.0, 0.0, 1.0]);
    }

    #[test]
    fn convolution_square_identity_on_points() {
        let a = published().alpha;
        let c = self_convolve(&a);
        for &x in &[-2.0f64, -0.3, 0.0, 0.7, 1.9] {
            let sq = poly_eval(&a, x).powi(2);
            let v: f64 = c.iter().enumerate().map(|(k, ck)| ck * x.powi(k as i32)).sum();
            assert!((sq - v).abs() < 1e-12 * sq.max(1.0));
        }
        assert!(c.iter().all(|v| *v >= 0.0));
        assert_eq!(c[10], a.a5 * a.a5);
    }

    #[test]
    fn normalization_examples() {
        let ou = OuSpec::constant(DEFAULT_EPSILON, -0.0358).unwrap();
        let p = ModelParams::new(Alpha::new(1.0, 0.0, 0.0, 0.0).unwrap(), -0.5, ou).unwrap();
        assert_eq!(normalization_g(&p, 0.3).unwrap(), 1.0);
        let p = ModelParams::new(Alpha::new(0.0, 1.0, 0.0, 0.0).unwrap(), -0.5, ou).unwrap();
        assert!((normalization_g(&p, 0.3).unwrap() - ou_variance(&ou, 0.3)).abs() < 1e-15);
        assert!(matches!(
            normalization_g(&p, 0.0),
            Err(Error::DegenerateNormalization { .. })
        ));
    }

    #[test]
    fn normalization_matches_monte_carlo() {
        let p = published();
        let sd = ou_variance(p.ou(), 0.25).sqrt();
        let samples: Vec<f64> = gaussian_draws(10_000_000, sd, 8)
            .into_iter()
            .map(|x| poly_eval(p.alpha(), x).powi(2))
            .collect();
        let (m, se) = mean_se(&samples);
        let g = normalization_g(&p, 0.25).unwrap();
        assert!((m - g).abs() < 5.0 * se, "{m} vs {g} (se {se})");
    }

    #[test]
    fn normalization_non_decreasing() {
        let p = published();
        let mut prev = 0.0;
        for i in 0..200 {
            let g = normalization_g(&p, i as f64 * 0.005).unwrap();
            assert!(g >= prev);
            prev = g;
        }
    }

    #[test]
    fn curve_evaluation() {
        let c = ForwardVarianceCurve::parametric(0.0084, 2.0436, 0.0441).unwrap();
        assert_eq!(c.eval(0.0).unwrap(), 0.0084);
        assert!((c.eval(1e3).unwrap() - 0.0441).abs() < 1e-15);
        let nodes = [(0.05, 0.15), (0.15, 0.2), (0.4, 0.18), (0.8, 0.22)];
        let s = ForwardVarianceCurve::spline(&nodes).unwrap();
        for (t, x) in nodes {
            assert!((s.eval(t).unwrap() - x * x).abs() < 1e-15);
        }
        // flat outside the nodes
        assert_eq!(s.eval(0.0).unwrap(), s.eval(0.05).unwrap());
        assert_eq!(s.eval(5.0).unwrap(), s.eval(0.8).unwrap());
        let pw = ForwardVarianceCurve::piecewise(vec![0.0, 0.1, 0.3], vec![0.01, 0.02, 0.03]).unwrap();
        assert_eq!(pw.eval(0.0).unwrap(), 0.01);
        assert_eq!(pw.eval(0.1).unwrap(), 0.02);
        assert_eq!(pw.eval(0.2999).unwrap(), 0.02);
        assert_eq!(pw.eval(9.0).unwrap(), 0.03);
        assert!(matches!(pw.eval(-0.1), Err(Error::OutOfHorizon { .. })));
    }

    #[test]
    fn curve_validation() {
        assert!(ForwardVarianceCurve::parametric(0.0, 1.0, 1.0).is_err());
        assert!(ForwardVarianceCurve::spline(&[(0.1, -0.2)]).is_err());
        assert!(ForwardVarianceCurve::spline(&[(0.1, 0.2), (0.1, 0.3)]).is_err());
        assert!(ForwardVarianceCurve::piecewise(vec![0.1], vec![0.2]).is_err());
        assert!(ForwardVarianceCurve::piecewise(vec![0.0, 0.1], vec![0.2]).is_err());
    }

    #[test]
    fn curve_integrals_match_adaptive_oracle() {
        use crate::numerics::adaptive_integrate;
        let curves = [
            ForwardVarianceCurve::parametric(0.0084, 2.0436, 0.0441).unwrap(),
            ForwardVarianceCurve::spline(&[(0.05, 0.15), (0.15, 0.2), (0.4, 0.18), (0.8, 0.22)]).unwrap(),
            ForwardVarianceCurve::piecewise(vec![0.0, 0.1, 0.3], vec![0.01, 0.02, 0.03]).unwrap(),
        ];
        for c in &curves {
            for &(lo, hi) in &[(0.0, 0.1), (0.02, 0.7), (0.3, 2.0)] {
                let mut edges = vec![lo];
                edges.extend(c.kinks(lo, hi));
                edges.push(hi);
                let oracle: f64 = edges
                    .windows(2)
                    .map(|w| adaptive_integrate(|s| c.eval(s).unwrap(), w[0], w[1], 1e-14, 1e-16).unwrap())
                    .sum();
                assert!((c.integrate(lo, hi).unwrap() - oracle).abs() < 1e-13, "{c:?} [{lo},{hi}]");
            }
        }
    }

    #[test]
    fn vol_from_state_examples() {
        let ou = OuSpec::constant(DEFAULT_EPSILON, -0.0358).unwrap();
        let p = ModelParams::new(Alpha::new(1.0, 0.0, 0.0, 0.0).unwrap(), -0.5, ou).unwrap();
        let flat = ForwardVarianceCurve::flat(0.04).unwrap();
        for &(t, x) in &[(0.0, 0.0), (0.3, -2.0), (1.0, 5.0)] {
            assert!((vol_from_state(&p, &flat, t, x).unwrap() - 0.2).abs() < 1e-15);
        }
        let p = published();
        let curve = ForwardVarianceCurve::parametric(0.02, 1.0, 0.04).unwrap();
        let t = 0.4;
        let expect = curve.eval(t).unwrap().sqrt() * 0.5907 / normalization_g(&p, t).unwrap().sqrt();
        assert!((vol_from_state(&p, &curve, t, 0.0).unwrap() - expect).abs() < 1e-15);

        let c5 = ModelParams::new(Alpha::new(3.0, 0.0, 0.0, 0.0).unwrap(), -0.2, ou).unwrap();
        let a = vol_from_state(&c5, &curve, t, -1.0).unwrap();
        let b = vol_from_state(&c5, &curve, t, 2.5).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn forward_variance_matching_by_monte_carlo() {
        let p = published();
        let curve = ForwardVarianceCurve::parametric(0.02, 1.5, 0.045).unwrap();
        for &t in &[7.0 / 365.0, 1.0 / 12.0, 0.25, 1.0] {
            let sd = ou_variance(p.ou(), t).sqrt();
            let v: Vec<f64> = gaussian_draws(1_000_000, sd, (t * 1e4) as u64)
                .into_iter()
                .map(|x| vol_from_state(&p, &curve, t, x).unwrap().powi(2))
                .collect();
            let (m, se) = mean_se(&v);
            let xi = curve.eval(t).unwrap();
            assert!((m - xi).abs() < 5.0 * se, "t={t}: {m} vs {xi} (se {se})");
        }
    }

    #[test]
    fn json_documents() {
        let p = published();
        let s = serde_json::to_string(&p).unwrap();
        assert!(s.contains("\"alpha0\":0.5907") && s.contains("\"h\":-0.0358"));
        let back: ModelParams = serde_json::from_str(&s).unwrap();
        assert_eq!(back, p);

        let td: ModelParams = serde_json::from_str(
            r#"{"alpha0":0,"alpha1":0.0266,"alpha3":0.2513,"alpha5":0.00006,"rho":-0.7466,
                "epsilon":0.1359,"h0":0.3176,"h_inf":-1.3665,"kappa":1.2}"#,
        )
        .unwrap();
        assert!(matches!(td.ou().h_mode(), HMode::TimeDependent { .. }));
        let bad = serde_json::from_str::<ModelParams>(r#"{"alpha0":1,"alpha1":0,"alpha3":0,"alpha5":0,"rho":0.3,"h":0}"#);
        assert!(bad.is_err());
        let defaulted: ModelParams =
            serde_json::from_str(r#"{"alpha0":1,"alpha1":0,"alpha3":0,"alpha5":0,"rho":-0.3,"h":0}"#).unwrap();
        assert_eq!(defaulted.ou().epsilon(), DEFAULT_EPSILON);

        let c: ForwardVarianceCurve =
            serde_json::from_str(r#"{"type":"parametric","params":{"a":0.0084,"b":2.0436,"c":0.0441}}"#).unwrap();
        assert_eq!(c, ForwardVarianceCurve::parametric(0.0084, 2.0436, 0.0441).unwrap());
        let c: ForwardVarianceCurve = serde_json::from_str(r#"{"type":"spline","nodes":[[0.1,0.2],[0.3,0.25]]}"#).unwrap();
        let again: ForwardVarianceCurve = serde_json::from_str(&serde_json::to_string(&c).unwrap()).unwrap();
        assert_eq!(c, again);
        let c: ForwardVarianceCurve =
            serde_json::from_str(r#"{"type":"piecewise","breakpoints":[0,0.1],"values":[0.04,0.05]}"#).unwrap();
        assert_eq!(c.eval(0.2).unwrap(), 0.05);
    }
}
