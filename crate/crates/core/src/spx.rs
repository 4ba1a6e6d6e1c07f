//! SPX vanillas by Monte Carlo.
//!
//! `X` is simulated exactly and drives the `W`-measurable part of the log
//! price through an explicit Euler recursion. Conditional on the `W` path the
//! price is lognormal, so each path contributes a Black price rather than a
//! payoff. Antithetic pairs and a timer-option control variate reduce the
//! remaining noise.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{poly_eval, vol_scale, ForwardVarianceCurve, ModelParams};
use crate::numerics::{black_total_std, compensated_sum, implied_vol, OptionFlag};
use crate::ou::{ExactScheme, PathGrid};
use crate::rng::substream;
use rand_distr::{Distribution, StandardNormal};

/// Monte Carlo settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct McConfig {
    pub n_paths: usize,
    pub steps_per_year: usize,
    pub seed: u64,
    #[serde(default = "yes")]
    pub antithetic: bool,
    #[serde(default = "yes")]
    pub control_variate: bool,
}

fn yes() -> bool {
    true
}

impl Default for McConfig {
    fn default() -> Self {
        Self {
            n_paths: 1 << 19,
            steps_per_year: 312,
            seed: 0,
            antithetic: true,
            control_variate: true,
        }
    }
}

impl McConfig {
    pub fn new(n_paths: usize, steps_per_year: usize, seed: u64) -> Result<Self> {
        let cfg = Self {
            n_paths,
            steps_per_year,
            seed,
            ..Self::default()
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_paths < 2 {
            return Err(Error::InvalidParameter("need at least two Monte Carlo paths".into()));
        }
        if self.antithetic && self.n_paths % 2 == 1 {
            return Err(Error::InvalidParameter(format!(
                "antithetic sampling needs an even path count, got {}",
                self.n_paths
            )));
        }
        if self.steps_per_year < 52 {
            return Err(Error::InvalidParameter(format!(
                "steps_per_year must be at least 52, got {}",
                self.steps_per_year
            )));
        }
        Ok(())
    }

    /// Uniform grid on `[0, maturity]` with at least `steps_per_year` steps per year.
    pub fn grid(&self, maturity: f64) -> Result<PathGrid> {
        if !(maturity > 0.0 && maturity.is_finite()) {
            return Err(Error::InvalidParameter(format!("maturity must be positive, got {maturity}")));
        }
        let n_steps = ((maturity * self.steps_per_year as f64).ceil() as usize).max(1);
        PathGrid::uniform(maturity, n_steps, self.n_paths, self.antithetic)
    }
}

/// Monte Carlo estimate with its standard error.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct McPrice {
    pub value: f64,
    pub std_error: f64,
    /// Number of independent samples (antithetic pairs count once).
    pub n_effective: usize,
}

/// Terminal quantities of one path.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SwRecord {
    pub log_sw: f64,
    pub integrated_rho2_var: f64,
    pub integrated_total_var: f64,
}

struct StepCoefficients {
    scheme: ExactScheme,
    vol_scale: Vec<f64>,
    dt: Vec<f64>,
    sigma0: f64,
}

impl StepCoefficients {
    fn new(params: &ModelParams, curve: &ForwardVarianceCurve, times: &[f64]) -> Result<Self> {
        let scheme = ExactScheme::new(params.ou(), times);
        let mut scale = vec![0.0; times.len()];
        for (s, &t) in scale.iter_mut().zip(times).skip(1) {
            *s = vol_scale(params, curve, t)?;
        }
        // X_0 = 0, so sigma_0 = sqrt(xi0(0)) alpha0 / |alpha0|; with alpha0 = 0 the
        // right limit is random and we take its root mean square, which is the same.
        let sigma0 = curve.eval(0.0)?.sqrt();
        let dt = times.windows(2).map(|w| w[1] - w[0]).collect();
        Ok(Self {
            scheme,
            vol_scale: scale,
            dt,
            sigma0,
        })
    }

    #[inline]
    fn sigma(&self, params: &ModelParams, i: usize, x: f64) -> f64 {
        if i == 0 {
            self.sigma0
        } else {
            self.vol_scale[i] * poly_eval(params.alpha(), x)
        }
    }
}

#[derive(Clone, Copy, Default)]
struct PathState {
    x: f64,
    log_sw: f64,
    var: f64,
}

impl PathState {
    #[inline]
    fn advance(&mut self, c: &StepCoefficients, params: &ModelParams, i: usize, y: f64) {
        let rho = params.rho();
        let s = c.sigma(params, i, self.x);
        let dt = c.dt[i];
        let v = s * s * dt;
        self.log_sw += -0.5 * rho * rho * v + rho * s * dt.sqrt() * y;
        self.var += v;
        self.x = c.scheme.step(i, self.x, y);
    }

    fn record(&self, rho: f64) -> SwRecord {
        SwRecord {
            log_sw: self.log_sw,
            integrated_rho2_var: rho * rho * self.var,
            integrated_total_var: self.var,
        }
    }
}

fn simulate_records(
    params: &ModelParams,
    curve: &ForwardVarianceCurve,
    grid: &PathGrid,
    seed: u64,
    flip: bool,
) -> Result<Vec<SwRecord>> {
    let coeffs = StepCoefficients::new(params, curve, grid.times())?;
    let n_steps = grid.n_steps();
    let rho = params.rho();
    let block = if grid.antithetic() { 2 } else { 1 };
    let mut out = vec![
        SwRecord {
            log_sw: 0.0,
            integrated_rho2_var: 0.0,
            integrated_total_var: 0.0,
        };
        grid.n_paths()
    ];
    out.par_chunks_mut(block).enumerate().for_each(|(j, chunk)| {
        let (stream, _) = grid.stream_of(j * block);
        let mut rng = substream(seed, stream);
        let mut states = [PathState::default(); 2];
        let sign = if flip { -1.0 } else { 1.0 };
        for i in 0..n_steps {
            let y: f64 = StandardNormal.sample(&mut rng);
            let y = sign * y;
            states[0].advance(&coeffs, params, i, y);
            if block == 2 {
                states[1].advance(&coeffs, params, i, -y);
            }
        }
        for (r, s) in chunk.iter_mut().zip(&states) {
            *r = s.record(rho);
        }
    });
    Ok(out)
}

/// Per-path terminal records of `log S^W` and the integrated variance, driven
/// by the same draws that [`crate::ou::simulate_exact`] uses for `X`.
pub fn simulate_sw(
    params: &ModelParams,
    curve: &ForwardVarianceCurve,
    grid: &PathGrid,
    seed: u64,
) -> Result<Vec<SwRecord>> {
    simulate_records(params, curve, grid, seed, false)
}

fn mean_and_error(samples: &[f64]) -> McPrice {
    let n = samples.len();
    let mean = compensated_sum(samples.iter().copied()) / n as f64;
    let var = if n > 1 {
        compensated_sum(samples.iter().map(|s| (s - mean) * (s - mean))) / (n - 1) as f64
    } else {
        0.0
    };
    McPrice {
        value: mean,
        std_error: (var / n as f64).sqrt(),
        n_effective: n,
    }
}

/// A simulated path set for one maturity, reusable across strikes.
#[derive(Debug, Clone)]
pub struct SpxPathSet {
    maturity: f64,
    rho: f64,
    antithetic: bool,
    records: Vec<SwRecord>,
    // deterministic conditional variance used by the control
    proxy_var: f64,
    // total W-driven variance budget of the timer option
    budget: f64,
}

impl SpxPathSet {
    pub fn simulate(params: &ModelParams, curve: &ForwardVarianceCurve, maturity: f64, cfg: &McConfig) -> Result<Self> {
        cfg.validate()?;
        let grid = cfg.grid(maturity)?;
        let records = simulate_sw(params, curve, &grid, cfg.seed)?;
        Self::from_records(params, curve, maturity, cfg.antithetic, records)
    }

    fn from_records(
        params: &ModelParams,
        curve: &ForwardVarianceCurve,
        maturity: f64,
        antithetic: bool,
        records: Vec<SwRecord>,
    ) -> Result<Self> {
        let rho = params.rho();
        let proxy_var = (1.0 - rho * rho) * curve.integrate(0.0, maturity)?;
        let budget = records.iter().map(|r| r.integrated_rho2_var).fold(0.0, f64::max);
        Ok(Self {
            maturity,
            rho,
            antithetic,
            records,
            proxy_var,
            budget,
        })
    }

    pub fn maturity(&self) -> f64 {
        self.maturity
    }

    pub fn records(&self) -> &[SwRecord] {
        &self.records
    }

    fn pair_average(&self, per_path: Vec<f64>) -> Vec<f64> {
        if self.antithetic {
            per_path.chunks(2).map(|c| 0.5 * (c[0] + c[1])).collect()
        } else {
            per_path
        }
    }

    /// Vanilla price with spot `spot` (zero rates, forward = spot).
    pub fn price(&self, spot: f64, strike: f64, flag: OptionFlag, control_variate: bool) -> Result<McPrice> {
        if !(strike > 0.0 && strike.is_finite()) || !(spot > 0.0 && spot.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "spot and strike must be positive, got {spot} and {strike}"
            )));
        }
        let perp = 1.0 - self.rho * self.rho;
        let est: Vec<f64> = self
            .records
            .iter()
            .map(|r| black_total_std(spot * r.log_sw.exp(), strike, (perp * r.integrated_total_var).sqrt(), flag))
            .collect();
        let est = self.pair_average(est);
        if !control_variate {
            return Ok(mean_and_error(&est));
        }
        // Timer option: the W-driven log price has quadratic variation
        // rho^2 V <= budget, so Black with the remaining budget on top of a fixed
        // perpendicular variance has the known mean below.
        let q: Vec<f64> = self
            .records
            .iter()
            .map(|r| {
                let rest = (self.budget - r.integrated_rho2_var).max(0.0);
                black_total_std(spot * r.log_sw.exp(), strike, (self.proxy_var + rest).sqrt(), flag)
            })
            .collect();
        let q = self.pair_average(q);
        let q_mean_exact = black_total_std(spot, strike, (self.proxy_var + self.budget).sqrt(), flag);
        let n = est.len() as f64;
        let em = compensated_sum(est.iter().copied()) / n;
        let qm = compensated_sum(q.iter().copied()) / n;
        let cov = compensated_sum(est.iter().zip(&q).map(|(e, q)| (e - em) * (q - qm)));
        let var_q = compensated_sum(q.iter().map(|q| (q - qm) * (q - qm)));
        if !(var_q > 1e-300 * n) {
            return Ok(mean_and_error(&est));
        }
        let lambda = cov / var_q;
        let adjusted: Vec<f64> = est
            .iter()
            .zip(&q)
            .map(|(e, q)| e - lambda * (q - q_mean_exact))
            .collect();
        Ok(mean_and_error(&adjusted))
    }

    /// Monte Carlo estimate of `E[S_T] / S_0`. Conditional on the `W` path the
    /// mean is `exp(log S^W)`.
    pub fn martingale_ratio(&self) -> McPrice {
        let per_path: Vec<f64> = self.records.iter().map(|r| r.log_sw.exp()).collect();
        mean_and_error(&self.pair_average(per_path))
    }
}

/// Price one SPX vanilla by the mixing estimator.
pub fn mixed_call_price(
    params: &ModelParams,
    curve: &ForwardVarianceCurve,
    spot: f64,
    maturity: f64,
    strike: f64,
    flag: OptionFlag,
    cfg: &McConfig,
) -> Result<McPrice> {
    SpxPathSet::simulate(params, curve, maturity, cfg)?.price(spot, strike, flag, cfg.control_variate)
}

/// Plain two-factor Euler scheme on `log S` with payoff averaging.
///
/// Kept as a baseline for the variance-reduction comparison.
pub fn naive_euler_price(
    params: &ModelParams,
    curve: &ForwardVarianceCurve,
    spot: f64,
    maturity: f64,
    strike: f64,
    flag: OptionFlag,
    cfg: &McConfig,
) -> Result<McPrice> {
    cfg.validate()?;
    let grid = cfg.grid(maturity)?;
    let coeffs = StepCoefficients::new(params, curve, grid.times())?;
    let rho = params.rho();
    let perp = (1.0 - rho * rho).sqrt();
    let n_steps = grid.n_steps();
    let payoffs: Vec<f64> = (0..cfg.n_paths)
        .into_par_iter()
        .map(|path| {
            let mut rng = substream(cfg.seed, path as u64);
            let (mut x, mut log_s) = (0.0, spot.ln());
            for i in 0..n_steps {
                let y: f64 = StandardNormal.sample(&mut rng);
                let z: f64 = StandardNormal.sample(&mut rng);
                let s = coeffs.sigma(params, i, x);
                let dt = coeffs.dt[i];
                log_s += -0.5 * s * s * dt + s * dt.sqrt() * (rho * y + perp * z);
                x = coeffs.scheme.step(i, x, y);
            }
            flag.payoff(log_s.exp(), strike)
        })
        .collect();
    Ok(mean_and_error(&payoffs))
}

/// One strike of a model SPX smile.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpxSmilePoint {
    pub strike: f64,
    /// Price of the out-of-the-money option (put below spot, call at or above).
    pub flag: OptionFlag,
    pub price: f64,
    pub std_error: f64,
    pub implied_vol: Option<f64>,
    /// Implied vols of `price - std_error` and `price + std_error`.
    pub iv_low: Option<f64>,
    pub iv_high: Option<f64>,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpxSmile {
    pub maturity: f64,
    pub points: Vec<SpxSmilePoint>,
}

/// Implied vol smile from a shared path set.
pub fn smile_from_paths(paths: &SpxPathSet, spot: f64, strikes: &[f64], control_variate: bool) -> Result<SpxSmile> {
    let t = paths.maturity();
    let mut points = Vec::with_capacity(strikes.len());
    for &strike in strikes {
        let flag = if strike < spot { OptionFlag::Put } else { OptionFlag::Call };
        let p = paths.price(spot, strike, flag, control_variate)?;
        let inv = |price: f64| implied_vol(price, spot, strike, t, flag);
        let (implied_vol, error) = match inv(p.value) {
            Ok(v) => (Some(v), None),
            Err(e) => (None, Some(e.to_string())),
        };
        points.push(SpxSmilePoint {
            strike,
            flag,
            price: p.value,
            std_error: p.std_error,
            implied_vol,
            iv_low: inv(p.value - p.std_error).ok(),
            iv_high: inv(p.value + p.std_error).ok(),
            error,
        });
    }
    Ok(SpxSmile { maturity: t, points })
}

/// Model SPX smile with every strike priced on one path set.
pub fn spx_smile(
    params: &ModelParams,
    curve: &ForwardVarianceCurve,
    spot: f64,
    maturity: f64,
    strikes: &[f64],
    cfg: &McConfig,
) -> Result<SpxSmile> {
    if strikes.iter().any(|k| !(*k > 0.0)) {
        return Err(Error::InvalidParameter("strikes must be positive".into()));
    }
    let paths = SpxPathSet::simulate(params, curve, maturity, cfg)?;
    smile_from_paths(&paths, spot, strikes, cfg.control_variate)
}

/// Estimate of `E[S_T] / S_0`; equals one for a true martingale.
pub fn martingale_check(
    params: &ModelParams,
    curve: &ForwardVarianceCurve,
    maturity: f64,
    cfg: &McConfig,
) -> Result<McPrice> {
    if params.rho() > 0.0 {
        return Err(Error::InvalidParameter("martingale check needs rho <= 0".into()));
    }
    Ok(SpxPathSet::simulate(params, curve, maturity, cfg)?.martingale_ratio())
}
