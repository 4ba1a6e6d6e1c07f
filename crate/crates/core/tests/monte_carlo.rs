use quintic_core::spx::{mixed_call_price, naive_euler_price, McConfig, SpxPathSet};
use quintic_core::{Alpha, ForwardVarianceCurve, ModelParams, OptionFlag, OuSpec, DEFAULT_EPSILON};

fn published() -> (ModelParams, ForwardVarianceCurve) {
    (
        ModelParams::new(
            Alpha::new(0.5907, 1.0, 0.2893, 0.0549).unwrap(),
            -0.6843,
            OuSpec::constant(DEFAULT_EPSILON, -0.0358).unwrap(),
        )
        .unwrap(),
        ForwardVarianceCurve::flat(0.02).unwrap(),
    )
}

fn mc(n: usize, seed: u64) -> McConfig {
    McConfig::new(n, 312, seed).unwrap()
}

fn z(a: f64, sa: f64, b: f64, sb: f64) -> f64 {
    (a - b) / (sa * sa + sb * sb).sqrt()
}

#[test]
fn same_seed_same_paths() {
    let (p, c) = published();
    let a = SpxPathSet::simulate(&p, &c, 0.1, &mc(2048, 4)).unwrap();
    let b = SpxPathSet::simulate(&p, &c, 0.1, &mc(2048, 4)).unwrap();
    let other = SpxPathSet::simulate(&p, &c, 0.1, &mc(2048, 5)).unwrap();
    assert_eq!(a.records(), b.records());
    assert_ne!(a.records(), other.records());
}

#[test]
fn integrated_variance_matches_curve() {
    let (p, c) = published();
    let cfg = McConfig {
        antithetic: false,
        ..mc(1 << 16, 21)
    };
    let t = 0.5;
    let paths = SpxPathSet::simulate(&p, &c, t, &cfg).unwrap();
    let v: Vec<f64> = paths.records().iter().map(|r| r.integrated_total_var).collect();
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    let sd = (v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt();
    let se = sd / n.sqrt();
    assert!(((mean - 0.02 * t) / se).abs() < 4.0, "mean {mean} se {se}");
    let rho2 = p.rho() * p.rho();
    for r in paths.records() {
        assert!((r.integrated_rho2_var - rho2 * r.integrated_total_var).abs() <= 1e-12 * r.integrated_total_var);
    }
}

#[test]
fn control_variate_keeps_the_mean() {
    let (p, c) = published();
    let paths = SpxPathSet::simulate(&p, &c, 0.25, &mc(1 << 16, 33)).unwrap();
    for k in [85.0, 95.0, 100.0, 105.0, 115.0] {
        let flag = if k < 100.0 { OptionFlag::Put } else { OptionFlag::Call };
        let with = paths.price(100.0, k, flag, true).unwrap();
        let without = paths.price(100.0, k, flag, false).unwrap();
        assert!(with.std_error <= without.std_error * 1.0001, "K={k}");
        // same paths: the difference is far below either standard error when unbiased
        assert!((with.value - without.value).abs() < 4.0 * without.std_error, "K={k}: {with:?} vs {without:?}");
    }
}

#[test]
fn estimators_agree_with_naive_euler() {
    let (p, c) = published();
    let t = 0.25;
    for k in [95.0, 100.0, 105.0] {
        let a = mixed_call_price(&p, &c, 100.0, t, k, OptionFlag::Call, &mc(1 << 15, 8)).unwrap();
        let b = naive_euler_price(&p, &c, 100.0, t, k, OptionFlag::Call, &mc(1 << 16, 9)).unwrap();
        let zk = z(a.value, a.std_error, b.value, b.std_error);
        assert!(zk.abs() < 4.0, "K={k}: mixed {a:?} naive {b:?}");
    }
}

#[test]
fn coarser_grid_stays_within_noise() {
    let (p, c) = published();
    let t = 0.25;
    let fine = mixed_call_price(&p, &c, 100.0, t, 100.0, OptionFlag::Call, &mc(1 << 15, 10)).unwrap();
    let coarse = mixed_call_price(
        &p,
        &c,
        100.0,
        t,
        100.0,
        OptionFlag::Call,
        &McConfig::new(1 << 15, 104, 11).unwrap(),
    )
    .unwrap();
    let zk = z(fine.value, fine.std_error, coarse.value, coarse.std_error);
    assert!(zk.abs() < 4.0, "fine {fine:?} coarse {coarse:?}");
}

#[test]
fn call_prices_are_monotone_and_bounded() {
    let (p, c) = published();
    let paths = SpxPathSet::simulate(&p, &c, 0.5, &mc(1 << 14, 12)).unwrap();
    let prices: Vec<f64> = (0..15)
        .map(|i| paths.price(100.0, 80.0 + 3.0 * i as f64, OptionFlag::Call, false).unwrap().value)
        .collect();
    for (i, w) in prices.windows(2).enumerate() {
        assert!(w[1] <= w[0] + 1e-12, "not decreasing at {i}: {prices:?}");
    }
    for (i, v) in prices.iter().enumerate() {
        let k = 80.0 + 3.0 * i as f64;
        assert!(*v >= (100.0 - k).max(0.0) - 1e-9 && *v <= 100.0);
    }
}
