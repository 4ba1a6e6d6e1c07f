//! The Gaussian factor `X` driving volatility:
//!
//! `dX_t = -lambda(t) X_t dt + eta(t) dW_t`, `X_0 = 0`,
//!
//! with `lambda(t) = (1/2 - H(t)) / eps` and `eta(t) = eps^(H(t) - 1/2)`.
//! `H` is either constant or `H(t) = H0 e^{-kappa t} + H_inf (1 - e^{-kappa t})`.
//! In both cases X is Gaussian and is simulated exactly, step by step, from its
//! conditional law.

use std::sync::OnceLock;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::QuadratureRule;
use crate::rng::{fill_standard_normal, substream};

const PANEL_NODES: usize = 64;
// Largest value of 2 * lambda * panel_length handled by one 64-node panel.
const PANEL_RATE: f64 = 16.0;

fn panel_rule() -> &'static QuadratureRule {
    static RULE: OnceLock<QuadratureRule> = OnceLock::new();
    RULE.get_or_init(|| QuadratureRule::gauss_legendre(PANEL_NODES, -1.0, 1.0).expect("valid rule"))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum HMode {
    Constant { h: f64 },
    TimeDependent { h0: f64, h_inf: f64, kappa: f64 },
}

/// Law of the OU factor.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OuSpec {
    epsilon: f64,
    h_mode: HMode,
}

impl OuSpec {
    pub fn new(epsilon: f64, h_mode: HMode) -> Result<Self> {
        if !(epsilon > 0.0 && epsilon.is_finite()) {
            return Err(Error::InvalidParameter(format!("epsilon must be positive, got {epsilon}")));
        }
        match h_mode {
            HMode::Constant { h } => {
                if !(h < 0.5 && h.is_finite()) {
                    return Err(Error::InvalidParameter(format!("H must be < 1/2, got {h}")));
                }
            }
            HMode::TimeDependent { h0, h_inf, kappa } => {
                if !(kappa > 0.0 && kappa.is_finite()) {
                    return Err(Error::InvalidParameter(format!("kappa must be positive, got {kappa}")));
                }
                // H(t) moves monotonically from h0 to h_inf
                if !(h0 < 0.5 && h_inf < 0.5 && h0.is_finite() && h_inf.is_finite()) {
                    return Err(Error::InvalidParameter(format!(
                        "H(t) must stay below 1/2, got H0 = {h0}, H_inf = {h_inf}"
                    )));
                }
            }
        }
        Ok(Self { epsilon, h_mode })
    }

    pub fn constant(epsilon: f64, h: f64) -> Result<Self> {
        Self::new(epsilon, HMode::Constant { h })
    }

    pub fn time_dependent(epsilon: f64, h0: f64, h_inf: f64, kappa: f64) -> Result<Self> {
        Self::new(epsilon, HMode::TimeDependent { h0, h_inf, kappa })
    }

    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }

    pub fn h_mode(&self) -> HMode {
        self.h_mode
    }

    pub fn hurst(&self, t: f64) -> f64 {
        match self.h_mode {
            HMode::Constant { h } => h,
            HMode::TimeDependent { h0, h_inf, kappa } => {
                let e = (-kappa * t).exp();
                h0 * e + h_inf * (1.0 - e)
            }
        }
    }

    /// Mean-reversion speed `lambda(t)`.
    pub fn mean_reversion(&self, t: f64) -> f64 {
        (0.5 - self.hurst(t)) / self.epsilon
    }

    /// Vol-of-vol `eta(t)`.
    pub fn vol_of_vol(&self, t: f64) -> f64 {
        self.epsilon.powf(self.hurst(t) - 0.5)
    }

    /// `int_s^t lambda(u) du`, in closed form for both modes.
    pub fn integrated_reversion(&self, s: f64, t: f64) -> f64 {
        match self.h_mode {
            HMode::Constant { h } => ((0.5 - h) * (t - s) - 0.0) / self.epsilon,
            HMode::TimeDependent { h0, h_inf, kappa } => {
                let transient = (h0 - h_inf) * ((-kappa * s).exp() - (-kappa * t).exp()) / kappa;
                ((0.5 - h_inf) * (t - s) - transient) / self.epsilon
            }
        }
    }

    /// Stationary variance `eps^{2H} / (1 - 2H)` for constant H.
    pub fn stationary_variance(&self) -> Option<f64> {
        match self.h_mode {
            HMode::Constant { h } => Some(self.epsilon.powf(2.0 * h) / (1.0 - 2.0 * h)),
            HMode::TimeDependent { .. } => None,
        }
    }

    fn max_reversion(&self) -> f64 {
        match self.h_mode {
            HMode::Constant { h } => (0.5 - h) / self.epsilon,
            HMode::TimeDependent { h0, h_inf, .. } => (0.5 - h0.min(h_inf)) / self.epsilon,
        }
    }

    /// `Var[X_u | F_t] = int_t^u exp(-2 int_s^u lambda) eta(s)^2 ds`.
    fn variance_between(&self, t: f64, u: f64) -> f64 {
        if u <= t {
            return 0.0;
        }
        match self.h_mode {
            HMode::Constant { .. } => {
                let lam_dt = self.integrated_reversion(t, u);
                -self.stationary_variance().unwrap() * (-2.0 * lam_dt).exp_m1()
            }
            HMode::TimeDependent { .. } => {
                let len = u - t;
                let panels = ((2.0 * self.max_reversion() * len) / PANEL_RATE).ceil().max(1.0) as usize;
                let width = len / panels as f64;
                let rule = panel_rule();
                let mut acc = 0.0;
                for p in 0..panels {
                    let a = t + p as f64 * width;
                    let b = if p + 1 == panels { u } else { a + width };
                    acc += rule.integrate_on(a, b, |s| {
                        let eta = self.vol_of_vol(s);
                        (-2.0 * self.integrated_reversion(s, u)).exp() * eta * eta
                    });
                }
                acc
            }
        }
    }
}

/// `Var[X_t]`.
pub fn ou_variance(spec: &OuSpec, t: f64) -> f64 {
    spec.variance_between(0.0, t)
}

/// Variance of `G_T^u = X_u - decay_factor(T, u) X_T`, independent of `F_T`.
pub fn conditional_variance(spec: &OuSpec, t: f64, u: f64) -> f64 {
    assert!(u >= t, "conditional_variance needs u >= T (T = {t}, u = {u})");
    spec.variance_between(t, u)
}

/// `exp(-int_T^u lambda(s) ds)`, the factor multiplying `X_T` in `X_u`.
pub fn decay_factor(spec: &OuSpec, t: f64, u: f64) -> f64 {
    assert!(u >= t, "decay_factor needs u >= T (T = {t}, u = {u})");
    (-spec.integrated_reversion(t, u)).exp()
}

/// Simulation times and path count.
#[derive(Debug, Clone, PartialEq)]
pub struct PathGrid {
    times: Vec<f64>,
    n_paths: usize,
    antithetic: bool,
}

impl PathGrid {
    pub fn new(times: Vec<f64>, n_paths: usize, antithetic: bool) -> Result<Self> {
        if times.first() != Some(&0.0) {
            return Err(Error::InvalidParameter("path grid must start at t = 0".into()));
        }
        if times.windows(2).any(|w| !(w[1] > w[0])) || times.iter().any(|t| !t.is_finite()) {
            return Err(Error::InvalidParameter("path grid times must be strictly increasing".into()));
        }
        if n_paths == 0 {
            return Err(Error::InvalidParameter("need at least one path".into()));
        }
        if antithetic && n_paths % 2 == 1 {
            return Err(Error::InvalidParameter("antithetic sampling needs an even path count".into()));
        }
        Ok(Self {
            times,
            n_paths,
            antithetic,
        })
    }

    /// `n_steps` equal steps on `[0, maturity]`.
    pub fn uniform(maturity: f64, n_steps: usize, n_paths: usize, antithetic: bool) -> Result<Self> {
        if !(maturity > 0.0) || n_steps == 0 {
            return Err(Error::InvalidParameter("uniform grid needs maturity > 0 and n_steps >= 1".into()));
        }
        let dt = maturity / n_steps as f64;
        let mut times: Vec<f64> = (0..=n_steps).map(|i| i as f64 * dt).collect();
        times[n_steps] = maturity;
        Self::new(times, n_paths, antithetic)
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn n_paths(&self) -> usize {
        self.n_paths
    }

    pub fn n_steps(&self) -> usize {
        self.times.len() - 1
    }

    pub fn antithetic(&self) -> bool {
        self.antithetic
    }

    /// Random stream and sign used by path `i`.
    pub fn stream_of(&self, path: usize) -> (u64, f64) {
        if self.antithetic {
            ((path / 2) as u64, if path % 2 == 0 { 1.0 } else { -1.0 })
        } else {
            (path as u64, 1.0)
        }
    }
}

/// Per-step coefficients of the exact recursion
/// `X_{i+1} = decay_i X_i + std_i Y_i`.
#[derive(Debug, Clone)]
pub struct ExactScheme {
    decay: Vec<f64>,
    std: Vec<f64>,
}

impl ExactScheme {
    pub fn new(spec: &OuSpec, times: &[f64]) -> Self {
        let decay = times.windows(2).map(|w| decay_factor(spec, w[0], w[1])).collect();
        let std = times
            .windows(2)
            .map(|w| conditional_variance(spec, w[0], w[1]).sqrt())
            .collect();
        Self { decay, std }
    }

    #[inline]
    pub fn step(&self, i: usize, x: f64, y: f64) -> f64 {
        self.decay[i] * x + self.std[i] * y
    }

    pub fn n_steps(&self) -> usize {
        self.decay.len()
    }
}

/// Simulated values of X (row per path, column per grid time) and the
/// standard normal draws that produced them (row per path, column per step).
#[derive(Debug, Clone)]
pub struct OuPaths {
    n_paths: usize,
    n_times: usize,
    values: Vec<f64>,
    draws: Vec<f64>,
}

impl OuPaths {
    pub fn n_paths(&self) -> usize {
        self.n_paths
    }

    pub fn n_times(&self) -> usize {
        self.n_times
    }

    pub fn path(&self, i: usize) -> &[f64] {
        &self.values[i * self.n_times..(i + 1) * self.n_times]
    }

    pub fn draws(&self, i: usize) -> &[f64] {
        let n = self.n_times - 1;
        &self.draws[i * n..(i + 1) * n]
    }

    /// Values of every path at grid index `j`.
    pub fn column(&self, j: usize) -> Vec<f64> {
        (0..self.n_paths).map(|i| self.values[i * self.n_times + j]).collect()
    }
}

/// Exact simulation of X on `grid`.
pub fn simulate_exact(spec: &OuSpec, grid: &PathGrid, seed: u64) -> OuPaths {
    let scheme = ExactScheme::new(spec, grid.times());
    let n_times = grid.times().len();
    let n_steps = n_times - 1;
    let mut values = vec![0.0; grid.n_paths() * n_times];
    let mut draws = vec![0.0; grid.n_paths() * n_steps];
    values
        .par_chunks_mut(n_times)
        .zip(draws.par_chunks_mut(n_steps.max(1)))
        .enumerate()
        .for_each(|(path, (xs, ys))| {
            let (stream, sign) = grid.stream_of(path);
            let ys = &mut ys[..n_steps];
            fill_standard_normal(&mut substream(seed, stream), ys);
            if sign < 0.0 {
                ys.iter_mut().for_each(|y| *y = -*y);
            }
            xs[0] = 0.0;
            for i in 0..n_steps {
                xs[i + 1] = scheme.step(i, xs[i], ys[i]);
            }
        });
    OuPaths {
        n_paths: grid.n_paths(),
        n_times,
        values,
        draws,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_distr::{Distribution, StandardNormal};

    const EPS: f64 = 1.0 / 52.0;
    const H: f64 = -0.0358;

    fn mean_var(xs: &[f64]) -> (f64, f64) {
        let n = xs.len() as f64;
        let m = xs.iter().sum::<f64>() / n;
        let v = xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n - 1.0);
        (m, v)
    }

    /// Standard error of a sample variance of Gaussian data.
    fn var_se(var: f64, n: usize) -> f64 {
        var * (2.0 / (n as f64 - 1.0)).sqrt()
    }

    /// Independent route: simulate the rescaled process
    /// `X~_t = X_t e^{lambda t}`, whose increments are independent with
    /// variance `eps^{2H}/(1-2H) (e^{2 lambda t_{i+1}} - e^{2 lambda t_i})`.
    fn rescaled_route(times: &[f64], n: usize, seed: u64) -> Vec<Vec<f64>> {
        let lam = (0.5 - H) / EPS;
        let c = EPS.powf(2.0 * H) / (1.0 - 2.0 * H);
        let mut rng = rand_chacha::ChaCha12Rng::seed_from_u64(seed);
        let mut out = vec![vec![0.0; times.len()]; n];
        for path in out.iter_mut() {
            let mut xt = 0.0;
            for j in 1..times.len() {
                let z: f64 = StandardNormal.sample(&mut rng);
                let inc = (c * ((2.0 * lam * times[j]).exp() - (2.0 * lam * times[j - 1]).exp())).sqrt();
                xt += inc * z;
                path[j] = xt * (-lam * times[j]).exp();
            }
        }
        out
    }

    #[test]
    fn rejects_invalid_specs() {
        assert!(OuSpec::constant(0.0, 0.1).is_err());
        assert!(OuSpec::constant(0.1, 0.5).is_err());
        assert!(OuSpec::time_dependent(0.1, 0.3, 0.5, 1.0).is_err());
        assert!(OuSpec::time_dependent(0.1, 0.3, -1.0, 0.0).is_err());
        assert!(OuSpec::time_dependent(0.1359, 0.3176, -1.3665, 1.2).is_ok());
    }

    #[test]
    fn variance_trivial_cases() {
        let s = OuSpec::constant(EPS, H).unwrap();
        assert_eq!(ou_variance(&s, 0.0), 0.0);
        let s = OuSpec::constant(1.0, 0.0).unwrap();
        assert!((ou_variance(&s, 200.0) - 1.0).abs() < 1e-15);
        assert_eq!(s.stationary_variance(), Some(1.0));
    }

    #[test]
    fn variance_matches_rescaled_simulation() {
        let s = OuSpec::constant(EPS, H).unwrap();
        let times = [0.0, 0.1, 0.25, 0.5];
        let paths = rescaled_route(&times, 1_000_000, 99);
        let xs: Vec<f64> = paths.iter().map(|p| p[3]).collect();
        let (_, v) = mean_var(&xs);
        let exact = ou_variance(&s, 0.5);
        assert!((v - exact).abs() < 5.0 * var_se(exact, xs.len()), "{v} vs {exact}");
    }

    #[test]
    fn conditional_variance_matches_simulation() {
        let s = OuSpec::constant(EPS, H).unwrap();
        let times = [0.0, 0.25, 0.3];
        let paths = rescaled_route(&times, 1_000_000, 5);
        let d = decay_factor(&s, 0.25, 0.3);
        let g: Vec<f64> = paths.iter().map(|p| p[2] - d * p[1]).collect();
        let (m, v) = mean_var(&g);
        let exact = conditional_variance(&s, 0.25, 0.3);
        assert!((v - exact).abs() < 5.0 * var_se(exact, g.len()), "{v} vs {exact}");
        assert!(m.abs() < 5.0 * (exact / g.len() as f64).sqrt());
        assert_eq!(conditional_variance(&s, 0.3, 0.3), 0.0);
        assert_eq!(conditional_variance(&s, 0.0, 0.7), ou_variance(&s, 0.7));
    }

    #[test]
    fn decay_examples() {
        let s = OuSpec::constant(1.0, 0.0).unwrap();
        assert_eq!(decay_factor(&s, 0.3, 0.3), 1.0);
        let half_life = 2.0 * std::f64::consts::LN_2;
        assert!((decay_factor(&s, 0.0, half_life) - 0.5).abs() < 1e-15);
        let td = OuSpec::time_dependent(0.3, -0.2, -0.2, 2.0).unwrap();
        let c = OuSpec::constant(0.3, -0.2).unwrap();
        for &(t, u) in &[(0.0, 0.1), (0.2, 1.5), (1.0, 1.0)] {
            assert_eq!(decay_factor(&td, t, u), decay_factor(&c, t, u));
        }
        let td = OuSpec::time_dependent(0.1359, 0.3176, -1.3665, 1.2).unwrap();
        let mut prev = 1.0;
        for i in 1..50 {
            let d = decay_factor(&td, 0.2, 0.2 + 0.01 * i as f64);
            assert!(d < prev);
            prev = d;
        }
    }

    #[test]
    fn degenerate_time_dependent_reproduces_constant() {
        for &(eps, h) in &[(EPS, H), (0.1359, -1.3665), (0.5, 0.3)] {
            let td = OuSpec::time_dependent(eps, h, h, 1.7).unwrap();
            let c = OuSpec::constant(eps, h).unwrap();
            for &(t, u) in &[(0.0, 0.02), (0.0, 1.0), (0.3, 0.38), (0.5, 2.5)] {
                assert!((conditional_variance(&td, t, u) - conditional_variance(&c, t, u)).abs() < 1e-12);
                assert!((decay_factor(&td, t, u) - decay_factor(&c, t, u)).abs() < 1e-12);
                assert!((ou_variance(&td, u) - ou_variance(&c, u)).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn time_dependent_variance_matches_fine_quadrature() {
        use crate::numerics::adaptive_integrate;
        let td = OuSpec::time_dependent(0.1359, 0.3176, -1.3665, 1.2).unwrap();
        for &t in &[7.0 / 365.0, 30.0 / 365.0, 1.0, 3.0] {
            let oracle = adaptive_integrate(
                |s| {
                    let eta = td.vol_of_vol(s);
                    (-2.0 * td.integrated_reversion(s, t)).exp() * eta * eta
                },
                0.0,
                t,
                1e-13,
                1e-16,
            )
            .unwrap();
            assert!((ou_variance(&td, t) - oracle).abs() < 1e-12 * oracle.max(1.0), "t={t}");
        }
    }

    #[test]
    fn grid_validation() {
        assert!(PathGrid::new(vec![0.1, 0.2], 2, false).is_err());
        assert!(PathGrid::new(vec![0.0, 0.2, 0.2], 2, false).is_err());
        assert!(PathGrid::new(vec![0.0, 0.2], 3, true).is_err());
        assert!(PathGrid::new(vec![0.0, 0.2], 0, false).is_err());
        let g = PathGrid::uniform(1.0, 4, 2, true).unwrap();
        assert_eq!(g.times(), &[0.0, 0.25, 0.5, 0.75, 1.0]);
    }

    #[test]
    fn antithetic_paths_are_negated() {
        let s = OuSpec::constant(EPS, H).unwrap();
        let g = PathGrid::uniform(0.5, 20, 64, true).unwrap();
        let p = simulate_exact(&s, &g, 3);
        for k in 0..32 {
            let a = p.path(2 * k);
            let b = p.path(2 * k + 1);
            assert_eq!(a[0], 0.0);
            for (x, y) in a.iter().zip(b) {
                assert_eq!(*x, -*y);
            }
            for (x, y) in p.draws(2 * k).iter().zip(p.draws(2 * k + 1)) {
                assert_eq!(*x, -*y);
            }
        }
    }

    #[test]
    fn simulation_is_deterministic() {
        let s = OuSpec::constant(EPS, H).unwrap();
        let g = PathGrid::uniform(0.1, 5, 100, false).unwrap();
        let a = simulate_exact(&s, &g, 42);
        let b = simulate_exact(&s, &g, 42);
        assert_eq!(a.values, b.values);
        let c = simulate_exact(&s, &g, 43);
        assert_ne!(a.values, c.values);
    }

    #[test]
    fn marginal_variance_and_autocorrelation() {
        let s = OuSpec::constant(EPS, H).unwrap();
        let times = vec![0.0, 0.05, 0.06, 0.5];
        let g = PathGrid::new(times.clone(), 1_000_000, false).unwrap();
        let p = simulate_exact(&s, &g, 17);
        for j in 1..times.len() {
            let col = p.column(j);
            let (_, v) = mean_var(&col);
            let exact = ou_variance(&s, times[j]);
            assert!((v - exact).abs() < 5.0 * var_se(exact, col.len()), "t={}: {v} vs {exact}", times[j]);
        }
        // lag correlation between t = 0.05 and t = 0.06
        let a = p.column(1);
        let b = p.column(2);
        let n = a.len() as f64;
        let va = ou_variance(&s, 0.05);
        let vb = ou_variance(&s, 0.06);
        let corr = a.iter().zip(&b).map(|(x, y)| x * y).sum::<f64>() / n / (va * vb).sqrt();
        let expected = decay_factor(&s, 0.05, 0.06) * (va / vb).sqrt();
        // se of a sample correlation is about (1 - r^2) / sqrt(n)
        let se = (1.0 - expected * expected) / n.sqrt();
        assert!((corr - expected).abs() < 5.0 * se, "{corr} vs {expected}");
    }

    #[test]
    fn grid_refinement_keeps_marginal_law() {
        let s = OuSpec::time_dependent(0.1359, 0.3176, -1.3665, 1.2).unwrap();
        let coarse = PathGrid::uniform(0.5, 2, 400_000, false).unwrap();
        let fine = PathGrid::uniform(0.5, 64, 400_000, false).unwrap();
        let a = simulate_exact(&s, &coarse, 1).column(2);
        let b = simulate_exact(&s, &fine, 2).column(64);
        let (ma, va) = mean_var(&a);
        let (mb, vb) = mean_var(&b);
        let n = a.len();
        let exact = ou_variance(&s, 0.5);
        assert!((ma - mb).abs() < 5.0 * (2.0 * exact / n as f64).sqrt());
        assert!((va - vb).abs() < 5.0 * 2f64.sqrt() * var_se(exact, n));
        let fourth = |xs: &[f64]| xs.iter().map(|x| x.powi(4)).sum::<f64>() / xs.len() as f64;
        // Var[X^4] = (105 - 9) v^4 for Gaussian X
        let se4 = (96.0 * exact.powi(4) / n as f64).sqrt();
        assert!((fourth(&a) - fourth(&b)).abs() < 5.0 * 2f64.sqrt() * se4);
    }
}
