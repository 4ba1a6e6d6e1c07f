//! Derivative-free minimization.

/// Stopping rules for [`nelder_mead`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NelderMeadOptions {
    pub max_evals: usize,
    /// Stop when the spread of simplex values falls below this.
    pub f_tol: f64,
    /// Stop when the simplex diameter falls below this.
    pub x_tol: f64,
}

impl Default for NelderMeadOptions {
    fn default() -> Self {
        Self {
            max_evals: 2000,
            f_tol: 1e-12,
            x_tol: 1e-10,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Minimum {
    pub x: Vec<f64>,
    pub value: f64,
    pub evals: usize,
    pub converged: bool,
}

/// Nelder-Mead with dimension-adaptive coefficients (Gao and Han, 2012):
/// reflection 1, expansion 1 + 2/n, contraction 3/4 - 1/(2n), shrink 1 - 1/n,
/// which reduce to the standard (1, 2, 1/2, 1/2) for two variables. Non-finite
/// objective values are treated as `+inf`.
pub fn nelder_mead<F: FnMut(&[f64]) -> f64>(mut f: F, x0: &[f64], step: &[f64], opts: NelderMeadOptions) -> Minimum {
    let n = x0.len();
    assert_eq!(step.len(), n);
    let dim = n.max(2) as f64;
    let (expand, contract, shrink) = (1.0 + 2.0 / dim, 0.75 - 0.5 / dim, 1.0 - 1.0 / dim);
    let mut evals = 0usize;
    // `None` once the budget is spent; `max_evals` is a hard cap.
    let mut eval = |x: &[f64], evals: &mut usize| {
        if *evals >= opts.max_evals {
            return None;
        }
        *evals += 1;
        let v = f(x);
        Some(if v.is_finite() { v } else { f64::INFINITY })
    };
    let mut simplex: Vec<Vec<f64>> = Vec::with_capacity(n + 1);
    simplex.push(x0.to_vec());
    for i in 0..n {
        let mut v = x0.to_vec();
        v[i] += step[i];
        simplex.push(v);
    }
    let mut values = vec![f64::INFINITY; n + 1];
    let mut converged = false;

    'search: {
        for (v, x) in values.iter_mut().zip(&simplex) {
            match eval(x, &mut evals) {
                Some(fx) => *v = fx,
                None => break 'search,
            }
        }
        loop {
            let mut order: Vec<usize> = (0..=n).collect();
            order.sort_by(|a, b| values[*a].total_cmp(&values[*b]));
            simplex = order.iter().map(|&i| simplex[i].clone()).collect();
            values = order.iter().map(|&i| values[i]).collect();

            let spread = (values[n] - values[0]).abs();
            let diameter = simplex[1..]
                .iter()
                .map(|v| v.iter().zip(&simplex[0]).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max))
                .fold(0.0, f64::max);
            if (values[0].is_finite() && spread <= opts.f_tol) || diameter <= opts.x_tol {
                converged = true;
                break;
            }

            let mut centroid = vec![0.0; n];
            for v in &simplex[..n] {
                for (c, x) in centroid.iter_mut().zip(v) {
                    *c += x / n as f64;
                }
            }
            let along = |t: f64| -> Vec<f64> {
                centroid
                    .iter()
                    .zip(&simplex[n])
                    .map(|(c, w)| c + t * (w - c))
                    .collect()
            };

            let xr = along(-1.0);
            let Some(fr) = eval(&xr, &mut evals) else { break };
            if fr < values[0] {
                let xe = along(-expand);
                let Some(fe) = eval(&xe, &mut evals) else {
                    simplex[n] = xr;
                    values[n] = fr;
                    break;
                };
                if fe < fr {
                    simplex[n] = xe;
                    values[n] = fe;
                } else {
                    simplex[n] = xr;
                    values[n] = fr;
                }
                continue;
            }
            if fr < values[n - 1] {
                simplex[n] = xr;
                values[n] = fr;
                continue;
            }
            let xc = if fr < values[n] { along(-contract) } else { along(contract) };
            let Some(fc) = eval(&xc, &mut evals) else { break };
            if fc < values[n].min(fr) {
                simplex[n] = xc;
                values[n] = fc;
                continue;
            }
            // shrink towards the best vertex
            let best = simplex[0].clone();
            for i in 1..=n {
                let x: Vec<f64> = simplex[i].iter().zip(&best).map(|(x, b)| b + shrink * (x - b)).collect();
                let Some(fx) = eval(&x, &mut evals) else { break 'search };
                simplex[i] = x;
                values[i] = fx;
            }
        }
    }
    let best = (0..=n).min_by(|a, b| values[*a].total_cmp(&values[*b])).unwrap();
    Minimum {
        x: simplex[best].clone(),
        value: values[best],
        evals,
        converged,
    }
}

/// Nelder-Mead on the box `[lower, upper]`, run in unit-cube coordinates with
/// trial points clamped onto the box. `steps` are the initial simplex edges in
/// the original coordinates, taken inwards from the nearer face.
pub fn nelder_mead_bounded<F: FnMut(&[f64]) -> f64>(
    mut f: F,
    x0: &[f64],
    lower: &[f64],
    upper: &[f64],
    steps: &[f64],
    opts: NelderMeadOptions,
) -> Minimum {
    let n = x0.len();
    assert!(lower.len() == n && upper.len() == n && steps.len() == n);
    let to_x = |u: &[f64]| -> Vec<f64> {
        u.iter()
            .zip(lower.iter().zip(upper))
            .map(|(u, (lo, hi))| lo + u.clamp(0.0, 1.0) * (hi - lo))
            .collect()
    };
    let u0: Vec<f64> = x0
        .iter()
        .zip(lower.iter().zip(upper))
        .map(|(x, (lo, hi))| if hi > lo { ((x - lo) / (hi - lo)).clamp(0.0, 1.0) } else { 0.0 })
        .collect();
    // step inwards from the faces of the box
    let step: Vec<f64> = u0
        .iter()
        .zip(steps.iter().zip(lower.iter().zip(upper)))
        .map(|(u, (s, (lo, hi)))| {
            let s = if hi > lo { (s.abs() / (hi - lo)).min(0.5) } else { 0.0 };
            if *u > 0.5 {
                -s
            } else {
                s
            }
        })
        .collect();
    let m = nelder_mead(|u| f(&to_x(u)), &u0, &step, opts);
    Minimum {
        x: to_x(&m.x),
        ..m
    }
}
