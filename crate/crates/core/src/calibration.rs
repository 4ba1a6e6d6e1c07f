//! Joint SPX/VIX calibration.
//!
//! The objective adds weighted root-sum-square errors of SPX implied vols,
//! VIX implied vols and VIX futures. SPX legs are priced by Monte Carlo with a
//! fixed seed so the objective is a deterministic function of the parameters,
//! and it is minimized by a bounded simplex search with restarts.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::market::{build_curve, strip_forward_variance, CurveStyle, QuoteSet, SviConfig, Underlying};
use crate::model::{Alpha, ForwardVarianceCurve, ModelParams};
use crate::numerics::{black_total_std, implied_vol, nelder_mead_bounded, NelderMeadOptions, OptionFlag, QuadratureRule};
use crate::ou::{HMode, OuSpec};
use crate::spx::{McConfig, SpxPathSet};
use crate::vix::{build_vix_polynomial, vix_future, vix_option};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CalibrationWeights {
    pub c1: f64,
    pub c2: f64,
    pub c3: f64,
}

impl Default for CalibrationWeights {
    fn default() -> Self {
        Self {
            c1: 1.0,
            c2: 0.1,
            c3: 0.5,
        }
    }
}

impl CalibrationWeights {
    pub fn validate(&self) -> Result<()> {
        let w = [self.c1, self.c2, self.c3];
        if w.iter().any(|c| !(*c >= 0.0 && c.is_finite())) || w.iter().all(|c| *c == 0.0) {
            return Err(Error::InvalidParameter(format!(
                "weights must be non-negative and not all zero, got {w:?}"
            )));
        }
        Ok(())
    }
}

/// Which parameter groups the optimizer may move.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FreeParams {
    /// `a1, a3, a5` relative to a pinned `a0` (or `a3, a5` relative to `a1`
    /// when `a0 = 0`). Rescaling all of alpha leaves the model unchanged.
    pub alpha: bool,
    pub rho: bool,
    /// `h`, or `h0, h_inf, kappa` for a time-dependent H.
    pub hurst: bool,
    pub epsilon: bool,
    /// Parametric `a, b, c`, or multiplicative factors on spline / piecewise
    /// node values.
    pub curve: bool,
}

impl FreeParams {
    pub fn none() -> Self {
        Self::default()
    }
}

/// Parameter boxes.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Bounds {
    pub alpha1: (f64, f64),
    pub alpha3: (f64, f64),
    pub alpha5: (f64, f64),
    pub rho: (f64, f64),
    pub h: (f64, f64),
    pub h0: (f64, f64),
    pub h_inf: (f64, f64),
    pub kappa: (f64, f64),
    pub epsilon: (f64, f64),
    pub curve_a: (f64, f64),
    pub curve_b: (f64, f64),
    pub curve_c: (f64, f64),
    /// Multiplicative factor on the square root of the stripped node values.
    pub node_factor: (f64, f64),
}

impl Default for Bounds {
    fn default() -> Self {
        Self {
            alpha1: (0.0, 10.0),
            alpha3: (0.0, 5.0),
            alpha5: (0.0, 2.0),
            rho: (-0.999, 0.0),
            h: (-0.5, 0.45),
            h0: (-2.0, 0.45),
            h_inf: (-2.0, 0.45),
            kappa: (0.01, 10.0),
            epsilon: (1.0 / 365.0, 1.0),
            curve_a: (1e-4, 0.5),
            curve_b: (0.01, 50.0),
            curve_c: (1e-4, 0.5),
            node_factor: (0.7, 1.3),
        }
    }
}

impl Bounds {
    pub fn validate(&self) -> Result<()> {
        let check = |name: &str, (lo, hi): (f64, f64), min: f64, max: f64| -> Result<()> {
            if !(lo <= hi && lo >= min && hi <= max && lo.is_finite() && hi.is_finite()) {
                return Err(Error::InvalidParameter(format!("bounds for {name} must lie in [{min}, {max}], got [{lo}, {hi}]")));
            }
            Ok(())
        };
        let inf = f64::INFINITY;
        check("alpha1", self.alpha1, 0.0, inf)?;
        check("alpha3", self.alpha3, 0.0, inf)?;
        check("alpha5", self.alpha5, 0.0, inf)?;
        check("rho", self.rho, -1.0, 0.0)?;
        check("h", self.h, -inf, 0.5 - 1e-9)?;
        check("h0", self.h0, -inf, 0.5 - 1e-9)?;
        check("h_inf", self.h_inf, -inf, 0.5 - 1e-9)?;
        check("kappa", self.kappa, 1e-12, inf)?;
        check("epsilon", self.epsilon, 1e-12, inf)?;
        check("curve_a", self.curve_a, 0.0, inf)?;
        check("curve_b", self.curve_b, 0.0, inf)?;
        check("curve_c", self.curve_c, 0.0, inf)?;
        check("node_factor", self.node_factor, 0.0, inf)?;
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Regime {
    /// At most two SPX slices and one VIX slice; parametric curve.
    Parametric,
    /// Up to four months; stripped curve with node tweaks.
    TweakedStrip,
    /// Up to eighteen months; time-dependent H and free epsilon.
    TimeDependent,
}

impl Regime {
    pub fn free_params(self) -> FreeParams {
        FreeParams {
            alpha: true,
            rho: true,
            hurst: true,
            epsilon: self == Regime::TimeDependent,
            curve: true,
        }
    }

    fn check_coverage(self, spx: &QuoteSet, vix: &QuoteSet) -> Result<()> {
        let last = spx
            .maturities()
            .into_iter()
            .chain(vix.maturities())
            .fold(0.0, f64::max);
        let slack = 1.0 / 365.0;
        match self {
            Regime::Parametric => {
                if spx.slices.len() > 2 || vix.slices.len() > 1 {
                    return Err(Error::RegimeMismatch(format!(
                        "parametric regime takes at most 2 SPX and 1 VIX slices, got {} and {}",
                        spx.slices.len(),
                        vix.slices.len()
                    )));
                }
            }
            Regime::TweakedStrip => {
                if last > 4.0 / 12.0 + slack {
                    return Err(Error::RegimeMismatch(format!(
                        "tweaked-strip regime covers up to four months, quotes reach {last:.4}"
                    )));
                }
            }
            Regime::TimeDependent => {
                if last > 1.5 + slack {
                    return Err(Error::RegimeMismatch(format!(
                        "time-dependent regime covers up to eighteen months, quotes reach {last:.4}"
                    )));
                }
            }
        }
        Ok(())
    }
}

/// A quoted VIX future.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FutureQuote {
    pub maturity: f64,
    pub price: f64,
}

/// Everything about a calibration except the quotes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CalibrationSettings {
    pub free: FreeParams,
    pub bounds: Bounds,
    pub weights: CalibrationWeights,
    /// Monte Carlo used inside the search.
    pub mc: McConfig,
    /// Monte Carlo used for the reported residuals.
    pub report_mc: McConfig,
    pub max_evals: usize,
    pub max_restarts: usize,
    pub vix_nodes: usize,
    /// Quotes with `|ln(K / F)|` up to this are flagged near the money.
    pub near_money: f64,
}

impl Default for CalibrationSettings {
    fn default() -> Self {
        Self {
            free: FreeParams::none(),
            bounds: Bounds::default(),
            weights: CalibrationWeights::default(),
            mc: McConfig {
                n_paths: 1 << 16,
                seed: 1,
                ..McConfig::default()
            },
            report_mc: McConfig {
                seed: 1,
                ..McConfig::default()
            },
            max_evals: 600,
            max_restarts: 3,
            vix_nodes: 400,
            near_money: 0.1,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Instrument {
    Spx,
    Vix,
    VixFuture,
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct Target {
    instrument: Instrument,
    maturity: f64,
    forward: f64,
    strike: f64,
    mid: f64,
    bid: Option<f64>,
    ask: Option<f64>,
}

/// Market data prepared for the objective.
#[derive(Debug, Clone)]
pub struct CalibrationProblem {
    pub spx: QuoteSet,
    pub vix: QuoteSet,
    pub vix_futures: Vec<FutureQuote>,
    pub settings: CalibrationSettings,
    targets: Vec<Target>,
    skipped: Vec<String>,
}

fn quote_vol(price: f64, f: f64, k: f64, t: f64, flag: OptionFlag) -> Option<f64> {
    implied_vol(price, f, k, t, flag).ok()
}

impl CalibrationProblem {
    /// VIX futures default to the forwards of the VIX slices; `extra_futures`
    /// adds futures without option quotes.
    pub fn new(spx: QuoteSet, vix: QuoteSet, extra_futures: Vec<FutureQuote>, settings: CalibrationSettings) -> Result<Self> {
        if spx.underlying != Underlying::Spx || vix.underlying != Underlying::Vix {
            return Err(Error::InvalidParameter("expected an SPX and a VIX quote set".into()));
        }
        settings.weights.validate()?;
        settings.bounds.validate()?;
        settings.mc.validate()?;
        settings.report_mc.validate()?;
        if settings.vix_nodes < 2 {
            return Err(Error::InvalidParameter("vix_nodes must be at least 2".into()));
        }
        let mut targets = Vec::new();
        let mut skipped = Vec::new();
        for (set, instrument) in [(&spx, Instrument::Spx), (&vix, Instrument::Vix)] {
            for slice in &set.slices {
                for q in &slice.quotes {
                    let (t, f) = (slice.maturity, slice.forward);
                    match quote_vol(q.mid, f, q.strike, t, q.flag) {
                        Some(mid) => targets.push(Target {
                            instrument,
                            maturity: t,
                            forward: f,
                            strike: q.strike,
                            mid,
                            bid: quote_vol(q.bid, f, q.strike, t, q.flag),
                            ask: quote_vol(q.ask, f, q.strike, t, q.flag),
                        }),
                        None => skipped.push(format!(
                            "{} T={t} K={} {:?}: mid {} has no implied vol",
                            set.underlying, q.strike, q.flag, q.mid
                        )),
                    }
                }
            }
        }
        let mut futures: Vec<FutureQuote> = vix
            .slices
            .iter()
            .map(|s| FutureQuote {
                maturity: s.maturity,
                price: s.forward,
            })
            .collect();
        for f in extra_futures {
            if !(f.maturity >= 0.0 && f.price > 0.0) {
                return Err(Error::InvalidParameter(format!("invalid VIX future {f:?}")));
            }
            if !futures.iter().any(|g| g.maturity == f.maturity) {
                futures.push(f);
            }
        }
        futures.sort_by(|a, b| a.maturity.total_cmp(&b.maturity));
        for f in &futures {
            targets.push(Target {
                instrument: Instrument::VixFuture,
                maturity: f.maturity,
                forward: f.price,
                strike: f64::NAN,
                mid: f.price,
                bid: None,
                ask: None,
            });
        }
        if targets.is_empty() {
            return Err(Error::InsufficientQuotes { needed: 1, got: 0 });
        }
        Ok(Self {
            spx,
            vix,
            vix_futures: futures,
            settings,
            targets,
            skipped,
        })
    }

    /// Market quotes left out because their mid has no implied vol.
    pub fn skipped(&self) -> &[String] {
        &self.skipped
    }

    pub fn n_targets(&self) -> usize {
        self.targets.len()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ObjectiveValue {
    pub total: f64,
    /// Root mean square errors per leg (zero for an empty leg).
    pub rmse_spx: f64,
    pub rmse_vix: f64,
    pub rmse_fut: f64,
}

/// Model against market for one instrument. Vols for options, prices for futures.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Residual {
    pub instrument: Instrument,
    pub maturity: f64,
    pub strike: Option<f64>,
    pub market: f64,
    pub market_bid: Option<f64>,
    pub market_ask: Option<f64>,
    pub model: f64,
    /// Monte Carlo standard error of the model implied vol (SPX only).
    pub model_std_error: Option<f64>,
    pub error: f64,
    pub near_money: bool,
    pub within_spread: Option<bool>,
}

/// Implied vol of a model price; no time value maps to zero vol rather than
/// an inversion failure.
fn model_vol(price: f64, f: f64, k: f64, t: f64, flag: OptionFlag) -> Result<f64> {
    if price - flag.intrinsic(f, k) <= 1e-12 * f {
        return Ok(0.0);
    }
    implied_vol(price, f, k, t, flag)
}

fn vix_rule(n: usize) -> Result<QuadratureRule> {
    QuadratureRule::gauss_hermite(n)
}

/// Price every target and return the objective with per-instrument residuals.
pub fn evaluate(
    problem: &CalibrationProblem,
    params: &ModelParams,
    curve: &ForwardVarianceCurve,
    mc: &McConfig,
) -> Result<(ObjectiveValue, Vec<Residual>)> {
    let s = &problem.settings;
    let quad = vix_rule(s.vix_nodes)?;
    let mut residuals = Vec::with_capacity(problem.targets.len());
    let mut failures = Vec::new();

    let mut spx_maturities: Vec<f64> = problem
        .targets
        .iter()
        .filter(|t| t.instrument == Instrument::Spx)
        .map(|t| t.maturity)
        .collect();
    spx_maturities.dedup();
    let mut vix_maturities: Vec<f64> = problem
        .targets
        .iter()
        .filter(|t| t.instrument != Instrument::Spx)
        .map(|t| t.maturity)
        .collect();
    vix_maturities.sort_by(f64::total_cmp);
    vix_maturities.dedup();

    for &t in &spx_maturities {
        let paths = SpxPathSet::simulate(params, curve, t, mc)?;
        for tg in problem.targets.iter().filter(|x| x.instrument == Instrument::Spx && x.maturity == t) {
            let flag = if tg.strike < tg.forward { OptionFlag::Put } else { OptionFlag::Call };
            let p = paths.price(tg.forward, tg.strike, flag, mc.control_variate)?;
            match model_vol(p.value, tg.forward, tg.strike, t, flag) {
                Ok(iv) => {
                    let lo = implied_vol(p.value - p.std_error, tg.forward, tg.strike, t, flag).ok();
                    let hi = implied_vol(p.value + p.std_error, tg.forward, tg.strike, t, flag).ok();
                    let se = match (lo, hi) {
                        (Some(l), Some(h)) => Some(0.5 * (h - l)),
                        _ => None,
                    };
                    residuals.push(option_residual(tg, iv, se, s.near_money));
                }
                Err(e) => failures.push(format!("SPX T={t} K={}: {e}", tg.strike)),
            }
        }
    }

    for &t in &vix_maturities {
        let poly = build_vix_polynomial(params, curve, t)?;
        let fut = vix_future(&poly, &quad)?;
        for tg in problem.targets.iter().filter(|x| x.instrument != Instrument::Spx && x.maturity == t) {
            if tg.instrument == Instrument::VixFuture {
                residuals.push(Residual {
                    instrument: Instrument::VixFuture,
                    maturity: t,
                    strike: None,
                    market: tg.mid,
                    market_bid: None,
                    market_ask: None,
                    model: fut,
                    model_std_error: None,
                    error: fut - tg.mid,
                    near_money: true,
                    within_spread: None,
                });
                continue;
            }
            let flag = if tg.strike < fut { OptionFlag::Put } else { OptionFlag::Call };
            let price = vix_option(&poly, &quad, tg.strike, flag)?;
            match model_vol(price, fut, tg.strike, t, flag) {
                Ok(iv) => residuals.push(option_residual(tg, iv, None, s.near_money)),
                Err(e) => failures.push(format!("VIX T={t} K={}: {e}", tg.strike)),
            }
        }
    }
    if !failures.is_empty() {
        return Err(Error::Unpriceable(failures));
    }

    let leg = |kind: Instrument| -> (f64, f64) {
        let errs: Vec<f64> = residuals.iter().filter(|r| r.instrument == kind).map(|r| r.error).collect();
        let sum_sq: f64 = errs.iter().map(|e| e * e).sum();
        let rmse = if errs.is_empty() { 0.0 } else { (sum_sq / errs.len() as f64).sqrt() };
        (sum_sq.sqrt(), rmse)
    };
    let (spx_rss, rmse_spx) = leg(Instrument::Spx);
    let (vix_rss, rmse_vix) = leg(Instrument::Vix);
    let (fut_rss, rmse_fut) = leg(Instrument::VixFuture);
    let w = &s.weights;
    Ok((
        ObjectiveValue {
            total: w.c1 * spx_rss + w.c2 * vix_rss + w.c3 * fut_rss,
            rmse_spx,
            rmse_vix,
            rmse_fut,
        },
        residuals,
    ))
}

fn option_residual(tg: &Target, iv: f64, se: Option<f64>, near_money: f64) -> Residual {
    Residual {
        instrument: tg.instrument,
        maturity: tg.maturity,
        strike: Some(tg.strike),
        market: tg.mid,
        market_bid: tg.bid,
        market_ask: tg.ask,
        model: iv,
        model_std_error: se,
        error: iv - tg.mid,
        near_money: (tg.strike / tg.forward).ln().abs() <= near_money,
        within_spread: match (tg.bid, tg.ask) {
            (Some(b), Some(a)) => Some(iv >= b && iv <= a),
            _ => None,
        },
    }
}

/// The calibration objective with the search Monte Carlo settings.
pub fn objective(problem: &CalibrationProblem, params: &ModelParams, curve: &ForwardVarianceCurve) -> Result<ObjectiveValue> {
    evaluate(problem, params, curve, &problem.settings.mc).map(|r| r.0)
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum Slot {
    Alpha1,
    Alpha3,
    Alpha5,
    Rho,
    H,
    H0,
    HInf,
    Kappa,
    Epsilon,
    CurveA,
    CurveB,
    CurveC,
    Node(usize),
}

/// Map between the optimizer's vector and (params, curve).
struct Layout {
    slots: Vec<Slot>,
    lower: Vec<f64>,
    upper: Vec<f64>,
    base_params: ModelParams,
    base_curve: ForwardVarianceCurve,
}

impl Layout {
    fn new(free: &FreeParams, bounds: &Bounds, params: &ModelParams, curve: &ForwardVarianceCurve) -> Self {
        let mut slots = Vec::new();
        if free.alpha {
            if params.alpha().a0 > 0.0 {
                slots.push(Slot::Alpha1);
            }
            slots.extend([Slot::Alpha3, Slot::Alpha5]);
        }
        if free.rho {
            slots.push(Slot::Rho);
        }
        if free.hurst {
            match params.ou().h_mode() {
                HMode::Constant { .. } => slots.push(Slot::H),
                HMode::TimeDependent { .. } => slots.extend([Slot::H0, Slot::HInf, Slot::Kappa]),
            }
        }
        if free.epsilon {
            slots.push(Slot::Epsilon);
        }
        if free.curve {
            match curve {
                ForwardVarianceCurve::Parametric { .. } => slots.extend([Slot::CurveA, Slot::CurveB, Slot::CurveC]),
                ForwardVarianceCurve::SplineSquared(s) => slots.extend((0..s.values().len()).map(Slot::Node)),
                ForwardVarianceCurve::PiecewiseConstant { values, .. } => slots.extend((0..values.len()).map(Slot::Node)),
            }
        }
        let (lower, upper) = slots
            .iter()
            .map(|s| match s {
                Slot::Alpha1 => bounds.alpha1,
                Slot::Alpha3 => bounds.alpha3,
                Slot::Alpha5 => bounds.alpha5,
                Slot::Rho => bounds.rho,
                Slot::H => bounds.h,
                Slot::H0 => bounds.h0,
                Slot::HInf => bounds.h_inf,
                Slot::Kappa => bounds.kappa,
                Slot::Epsilon => bounds.epsilon,
                Slot::CurveA => bounds.curve_a,
                Slot::CurveB => bounds.curve_b,
                Slot::CurveC => bounds.curve_c,
                Slot::Node(_) => bounds.node_factor,
            })
            .unzip();
        Self {
            slots,
            lower,
            upper,
            base_params: *params,
            base_curve: curve.clone(),
        }
    }

    fn encode(&self) -> Vec<f64> {
        let p = &self.base_params;
        let a = p.alpha();
        let hm = p.ou().h_mode();
        self.slots
            .iter()
            .map(|s| match (s, hm, &self.base_curve) {
                (Slot::Alpha1, ..) => a.a1,
                (Slot::Alpha3, ..) => a.a3,
                (Slot::Alpha5, ..) => a.a5,
                (Slot::Rho, ..) => p.rho(),
                (Slot::H, HMode::Constant { h }, _) => h,
                (Slot::H0, HMode::TimeDependent { h0, .. }, _) => h0,
                (Slot::HInf, HMode::TimeDependent { h_inf, .. }, _) => h_inf,
                (Slot::Kappa, HMode::TimeDependent { kappa, .. }, _) => kappa,
                (Slot::Epsilon, ..) => p.ou().epsilon(),
                (Slot::CurveA, _, ForwardVarianceCurve::Parametric { a, .. }) => *a,
                (Slot::CurveB, _, ForwardVarianceCurve::Parametric { b, .. }) => *b,
                (Slot::CurveC, _, ForwardVarianceCurve::Parametric { c, .. }) => *c,
                (Slot::Node(_), ..) => 1.0,
                _ => unreachable!("slot does not match the base parametrization"),
            })
            .collect()
    }

    fn decode(&self, x: &[f64]) -> Result<(ModelParams, ForwardVarianceCurve)> {
        for (i, v) in x.iter().enumerate() {
            assert!(
                *v >= self.lower[i] && *v <= self.upper[i],
                "iterate {v} outside [{}, {}]",
                self.lower[i],
                self.upper[i]
            );
        }
        let p = &self.base_params;
        let mut alpha = *p.alpha();
        let mut rho = p.rho();
        let mut eps = p.ou().epsilon();
        let mut hm = p.ou().h_mode();
        let (mut ca, mut cb, mut cc) = match self.base_curve {
            ForwardVarianceCurve::Parametric { a, b, c } => (a, b, c),
            _ => (0.0, 0.0, 0.0),
        };
        let mut factors = Vec::new();
        for (s, &v) in self.slots.iter().zip(x) {
            match (s, &mut hm) {
                (Slot::Alpha1, _) => alpha.a1 = v,
                (Slot::Alpha3, _) => alpha.a3 = v,
                (Slot::Alpha5, _) => alpha.a5 = v,
                (Slot::Rho, _) => rho = v,
                (Slot::H, HMode::Constant { h }) => *h = v,
                (Slot::H0, HMode::TimeDependent { h0, .. }) => *h0 = v,
                (Slot::HInf, HMode::TimeDependent { h_inf, .. }) => *h_inf = v,
                (Slot::Kappa, HMode::TimeDependent { kappa, .. }) => *kappa = v,
                (Slot::Epsilon, _) => eps = v,
                (Slot::CurveA, _) => ca = v,
                (Slot::CurveB, _) => cb = v,
                (Slot::CurveC, _) => cc = v,
                (Slot::Node(_), _) => factors.push(v),
                _ => unreachable!("slot does not match the base parametrization"),
            }
        }
        let params = ModelParams::new(Alpha::new(alpha.a0, alpha.a1, alpha.a3, alpha.a5)?, rho, OuSpec::new(eps, hm)?)?;
        let curve = match &self.base_curve {
            ForwardVarianceCurve::Parametric { .. } => ForwardVarianceCurve::parametric(ca, cb, cc)?,
            ForwardVarianceCurve::SplineSquared(s) if !factors.is_empty() => {
                let nodes: Vec<(f64, f64)> = s.nodes().zip(&factors).map(|((t, x), f)| (t, x * f)).collect();
                ForwardVarianceCurve::spline(&nodes)?
            }
            ForwardVarianceCurve::PiecewiseConstant { breakpoints, values } if !factors.is_empty() => {
                ForwardVarianceCurve::piecewise(
                    breakpoints.clone(),
                    values.iter().zip(&factors).map(|(v, f)| v * f * f).collect(),
                )?
            }
            other => other.clone(),
        };
        Ok((params, curve))
    }
}

/// Result of a calibration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationResult {
    pub params: ModelParams,
    pub curve: ForwardVarianceCurve,
    /// Objective at `params` under the search Monte Carlo settings.
    pub objective: ObjectiveValue,
    pub initial_objective: ObjectiveValue,
    /// Objective and residuals re-priced with the reporting Monte Carlo settings.
    pub reported: ObjectiveValue,
    pub residuals: Vec<Residual>,
    /// Simplex runs (the first search plus restarts).
    pub iterations: usize,
    pub evaluations: usize,
    pub budget_exhausted: bool,
    pub regime: Option<Regime>,
}

/// Bounded simplex search from `(initial, curve)` over the groups in
/// `problem.settings.free`. The returned point is never worse than the start.
pub fn calibrate(problem: &CalibrationProblem, initial: &ModelParams, curve: &ForwardVarianceCurve) -> Result<CalibrationResult> {
    let s = &problem.settings;
    let layout = Layout::new(&s.free, &s.bounds, initial, curve);
    let x0: Vec<f64> = layout
        .encode()
        .iter()
        .zip(layout.lower.iter().zip(&layout.upper))
        .map(|(v, (lo, hi))| v.clamp(*lo, *hi))
        .collect();
    let (p0, c0) = layout.decode(&x0)?;
    let initial_objective = objective(problem, &p0, &c0)?;

    let mut best_x = x0.clone();
    let mut best_f = initial_objective.total;
    let mut evaluations = 1usize;
    let mut iterations = 0usize;
    let mut budget_exhausted = false;

    if !layout.slots.is_empty() {
        // A collapsed simplex is replaced by a fresh, smaller one at the best point.
        let mut scale = 1.0;
        for _ in 0..=s.max_restarts {
            let remaining = s.max_evals.saturating_sub(evaluations);
            if remaining < layout.slots.len() + 2 {
                budget_exhausted = true;
                break;
            }
            let start = best_x.clone();
            let start_f = best_f;
            // 20% of each coordinate, at least 2% of its range
            let steps: Vec<f64> = start
                .iter()
                .zip(layout.lower.iter().zip(&layout.upper))
                .map(|(x, (lo, hi))| scale * (0.2 * x.abs()).max(0.02 * (hi - lo)))
                .collect();
            let m = nelder_mead_bounded(
                |x| {
                    let f = layout
                        .decode(x)
                        .and_then(|(p, c)| objective(problem, &p, &c))
                        .map_or(f64::INFINITY, |o| o.total);
                    if f < best_f {
                        best_f = f;
                        best_x = x.to_vec();
                    }
                    f
                },
                &start,
                &layout.lower,
                &layout.upper,
                &steps,
                NelderMeadOptions {
                    max_evals: remaining,
                    f_tol: 1e-7 * start_f.max(1e-12),
                    x_tol: 1e-5,
                },
            );
            evaluations += m.evals;
            iterations += 1;
            budget_exhausted = !m.converged;
            if m.converged && !(best_f < start_f * (1.0 - 1e-6)) {
                break;
            }
            scale *= 0.5;
        }
    }

    let (params, curve) = layout.decode(&best_x)?;
    let objective_value = objective(problem, &params, &curve)?;
    let (reported, residuals) = evaluate(problem, &params, &curve, &s.report_mc)?;
    Ok(CalibrationResult {
        params,
        curve,
        objective: objective_value,
        initial_objective,
        reported,
        residuals,
        iterations,
        evaluations,
        budget_exhausted,
        regime: None,
    })
}

/// Calibrate in one of the predefined regimes. The regime fixes the free
/// parameter groups; the tweaked-strip and time-dependent regimes start from
/// a spline curve stripped from the SPX quotes.
pub fn staged_calibrate(
    problem: &CalibrationProblem,
    regime: Regime,
    initial: &ModelParams,
    curve: Option<&ForwardVarianceCurve>,
) -> Result<CalibrationResult> {
    regime.check_coverage(&problem.spx, &problem.vix)?;
    let mut problem = problem.clone();
    problem.settings.free = regime.free_params();
    let (params, curve) = match regime {
        Regime::Parametric => {
            let curve = match curve {
                Some(c @ ForwardVarianceCurve::Parametric { .. }) => c.clone(),
                Some(_) => {
                    return Err(Error::RegimeMismatch("parametric regime needs a parametric curve".into()));
                }
                None => default_parametric(&problem)?,
            };
            (*initial, curve)
        }
        Regime::TweakedStrip => {
            let stripped = strip_forward_variance(&problem.spx, &SviConfig::default())?;
            (*initial, build_curve(&stripped, CurveStyle::Spline)?)
        }
        Regime::TimeDependent => {
            let stripped = strip_forward_variance(&problem.spx, &SviConfig::default())?;
            let ou = match initial.ou().h_mode() {
                HMode::Constant { h } => OuSpec::time_dependent(initial.ou().epsilon(), h, h, 1.0)?,
                HMode::TimeDependent { .. } => *initial.ou(),
            };
            (initial.with_ou(ou)?, build_curve(&stripped, CurveStyle::Spline)?)
        }
    };
    let mut result = calibrate(&problem, &params, &curve)?;
    result.regime = Some(regime);
    Ok(result)
}

/// Flat parametric curve at the at-the-money variance of the first SPX slice.
fn default_parametric(problem: &CalibrationProblem) -> Result<ForwardVarianceCurve> {
    let atm = problem
        .targets
        .iter()
        .filter(|t| t.instrument == Instrument::Spx)
        .min_by(|a, b| {
            (a.maturity, (a.strike / a.forward).ln().abs()).partial_cmp(&(b.maturity, (b.strike / b.forward).ln().abs())).unwrap()
        })
        .map(|t| t.mid)
        .unwrap_or(0.2);
    let v = atm * atm;
    ForwardVarianceCurve::parametric(v, 1.0, v)
}

/// Synthetic quotes generated by the model itself: SPX slices priced by Monte
/// Carlo on `mc`, VIX slices by quadrature, with bid and ask at model implied
/// vol minus and plus `half_spread`.
pub fn synthetic_market(
    params: &ModelParams,
    curve: &ForwardVarianceCurve,
    spot: f64,
    spx: &[(f64, Vec<f64>)],
    vix: &[(f64, Vec<f64>)],
    mc: &McConfig,
    vix_nodes: usize,
    half_spread: f64,
) -> Result<(QuoteSet, QuoteSet)> {
    use crate::market::Quote;
    let mut spx_set = QuoteSet::new(Underlying::Spx);
    for (t, strikes) in spx {
        let paths = SpxPathSet::simulate(params, curve, *t, mc)?;
        for &k in strikes {
            let flag = if k < spot { OptionFlag::Put } else { OptionFlag::Call };
            let p = paths.price(spot, k, flag, mc.control_variate)?;
            let iv = implied_vol(p.value, spot, k, *t, flag)?;
            let bid = black_total_std(spot, k, ((iv - half_spread).max(0.0) * t.sqrt()).max(0.0), flag);
            let ask = black_total_std(spot, k, (iv + half_spread) * t.sqrt(), flag);
            spx_set.push(*t, spot, Quote::new(k, bid, ask, flag)?)?;
        }
    }
    let quad = vix_rule(vix_nodes)?;
    let mut vix_set = QuoteSet::new(Underlying::Vix);
    for (t, strikes) in vix {
        let poly = build_vix_polynomial(params, curve, *t)?;
        let fut = vix_future(&poly, &quad)?;
        for &k in strikes {
            let flag = if k < fut { OptionFlag::Put } else { OptionFlag::Call };
            let iv = implied_vol(vix_option(&poly, &quad, k, flag)?, fut, k, *t, flag)?;
            let bid = black_total_std(fut, k, (iv - half_spread).max(0.0) * t.sqrt(), flag);
            let ask = black_total_std(fut, k, (iv + half_spread) * t.sqrt(), flag);
            vix_set.push(*t, fut, Quote::new(k, bid, ask, flag)?)?;
        }
    }
    Ok((spx_set, vix_set))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::DEFAULT_EPSILON;

    fn truth() -> (ModelParams, ForwardVarianceCurve) {
        (
            ModelParams::new(
                Alpha::new(0.8169, 0.274, 0.1717, 0.0036).unwrap(),
                -0.7316,
                OuSpec::constant(DEFAULT_EPSILON, -0.1382).unwrap(),
            )
            .unwrap(),
            ForwardVarianceCurve::parametric(0.0084, 2.0436, 0.0441).unwrap(),
        )
    }

    fn small_settings() -> CalibrationSettings {
        CalibrationSettings {
            mc: McConfig {
                n_paths: 1 << 12,
                seed: 3,
                ..McConfig::default()
            },
            report_mc: McConfig {
                n_paths: 1 << 12,
                seed: 3,
                ..McConfig::default()
            },
            vix_nodes: 100,
            max_evals: 40,
            ..CalibrationSettings::default()
        }
    }

    fn problem(settings: CalibrationSettings) -> CalibrationProblem {
        problem_with_spread(settings, 0.0025)
    }

    fn problem_with_spread(settings: CalibrationSettings, half_spread: f64) -> CalibrationProblem {
        let (p, c) = truth();
        let (spx, vix) = synthetic_market(
            &p,
            &c,
            100.0,
            &[(9.0 / 365.0, vec![97.0, 100.0, 103.0])],
            &[(9.0 / 365.0, vec![14.0, 16.0, 20.0])],
            &settings.mc,
            settings.vix_nodes,
            half_spread,
        )
        .unwrap();
        CalibrationProblem::new(spx, vix, vec![], settings).unwrap()
    }

    #[test]
    fn self_generated_market_has_zero_objective() {
        // zero spread so that the mid price maps back to the model vol exactly
        let pr = problem_with_spread(small_settings(), 0.0);
        let (p, c) = truth();
        let o = objective(&pr, &p, &c).unwrap();
        assert!(o.total < 1e-9, "{o:?}");
        let again = objective(&pr, &p, &c).unwrap();
        assert_eq!(o.total.to_bits(), again.total.to_bits());
    }

    #[test]
    fn weights_scale_the_objective() {
        let (p, c) = truth();
        let p2 = p.with_rho(-0.5).unwrap();
        let base = problem(small_settings());
        let o = objective(&base, &p2, &c).unwrap();
        let mut doubled = base.clone();
        doubled.settings.weights = CalibrationWeights { c1: 2.0, c2: 0.2, c3: 1.0 };
        let o2 = objective(&doubled, &p2, &c).unwrap();
        assert!((o2.total - 2.0 * o.total).abs() < 1e-12 * o.total);
        let mut only_spx = base.clone();
        only_spx.settings.weights = CalibrationWeights { c1: 1.0, c2: 0.0, c3: 0.0 };
        let o3 = objective(&only_spx, &p2, &c).unwrap();
        assert!((o3.total - o.rmse_spx * 3f64.sqrt()).abs() < 1e-12);
    }

    #[test]
    fn empty_free_set_returns_start() {
        let pr = problem(small_settings());
        let (p, c) = truth();
        let p1 = p.with_rho(-0.6).unwrap();
        let r = calibrate(&pr, &p1, &c).unwrap();
        assert_eq!(r.params, p1);
        assert_eq!(r.curve, c);
        assert_eq!(r.objective, r.initial_objective);
    }

    #[test]
    fn descent_from_the_truth() {
        let mut s = small_settings();
        s.free = FreeParams {
            rho: true,
            hurst: true,
            ..FreeParams::none()
        };
        let pr = problem(s);
        let (p, c) = truth();
        let r = calibrate(&pr, &p, &c).unwrap();
        assert!(r.objective.total <= r.initial_objective.total);
        assert!(r.evaluations <= 40);
    }

    #[test]
    fn alpha_scale_is_pinned() {
        let (p, c) = truth();
        let layout = Layout::new(
            &FreeParams {
                alpha: true,
                ..FreeParams::none()
            },
            &Bounds::default(),
            &p,
            &c,
        );
        assert_eq!(layout.slots, vec![Slot::Alpha1, Slot::Alpha3, Slot::Alpha5]);
        let (q, _) = layout.decode(&layout.encode()).unwrap();
        assert_eq!(q, p);
        let zero_a0 = p.with_alpha(Alpha::new(0.0, 1.0, 0.2, 0.1).unwrap()).unwrap();
        let layout = Layout::new(
            &FreeParams {
                alpha: true,
                ..FreeParams::none()
            },
            &Bounds::default(),
            &zero_a0,
            &c,
        );
        assert_eq!(layout.slots, vec![Slot::Alpha3, Slot::Alpha5]);
    }

    #[test]
    fn node_factors_scale_the_curve() {
        let (p, _) = truth();
        let curve = ForwardVarianceCurve::piecewise(vec![0.0, 0.1], vec![0.04, 0.05]).unwrap();
        let layout = Layout::new(
            &FreeParams {
                curve: true,
                ..FreeParams::none()
            },
            &Bounds::default(),
            &p,
            &curve,
        );
        let (_, c) = layout.decode(&[1.1, 0.9]).unwrap();
        assert!((c.eval(0.05).unwrap() - 0.04 * 1.21).abs() < 1e-15);
        assert!((c.eval(0.2).unwrap() - 0.05 * 0.81).abs() < 1e-15);
    }

    #[test]
    fn regime_coverage_is_checked() {
        let s = small_settings();
        let (p, c) = truth();
        let (spx, vix) = synthetic_market(
            &p,
            &c,
            100.0,
            &[(0.02, vec![100.0]), (0.05, vec![100.0]), (0.6, vec![100.0])],
            &[],
            &s.mc,
            50,
            0.0025,
        )
        .unwrap();
        let pr = CalibrationProblem::new(spx, vix, vec![], s).unwrap();
        for r in [Regime::Parametric, Regime::TweakedStrip] {
            assert!(matches!(staged_calibrate(&pr, r, &p, Some(&c)), Err(Error::RegimeMismatch(_))));
        }
    }

    #[test]
    fn settings_json_round_trip() {
        let s = CalibrationSettings::default();
        let j = serde_json::to_string(&s).unwrap();
        let back: CalibrationSettings = serde_json::from_str(&j).unwrap();
        assert_eq!(back, s);
        let partial: CalibrationSettings = serde_json::from_str(r#"{"max_evals": 10}"#).unwrap();
        assert_eq!(partial.max_evals, 10);
        assert!(serde_json::from_str::<CalibrationSettings>(r#"{"bogus": 1}"#).is_err());
    }
}
