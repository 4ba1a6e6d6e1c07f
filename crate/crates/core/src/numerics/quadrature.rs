use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum QuadratureKind {
    /// Weight `exp(-x^2/2)/sqrt(2*pi)` on the real line.
    GaussHermiteProbabilist,
    /// Unit weight on a finite interval.
    GaussLegendre,
}

/// Nodes and positive weights of a Gaussian quadrature rule.
///
/// Probabilist Hermite rules integrate against the standard normal density, so
/// their weights sum to one. Nodes whose weight underflows to zero in double
/// precision are dropped; for `n = 400` this removes only the outermost few
/// pairs, which carry mass below `1e-300`.
#[derive(Debug, Clone, PartialEq)]
pub struct QuadratureRule {
    nodes: Vec<f64>,
    weights: Vec<f64>,
    kind: QuadratureKind,
}

impl QuadratureRule {
    pub fn gauss_hermite(n: usize) -> Result<Self> {
        if n == 0 {
            return Err(Error::InvalidDomain("quadrature needs at least one node".into()));
        }
        let (nodes, weights) = hermite_probabilist(n)?;
        Ok(Self {
            nodes,
            weights,
            kind: QuadratureKind::GaussHermiteProbabilist,
        })
    }

    pub fn gauss_legendre(n: usize, a: f64, b: f64) -> Result<Self> {
        if n == 0 {
            return Err(Error::InvalidDomain("quadrature needs at least one node".into()));
        }
        if !(a < b) || !a.is_finite() || !b.is_finite() {
            return Err(Error::InvalidDomain(format!(
                "Gauss-Legendre interval needs a < b, got [{a}, {b}]"
            )));
        }
        let (z, w) = legendre_unit(n);
        let mid = 0.5 * (a + b);
        let half = 0.5 * (b - a);
        Ok(Self {
            nodes: z.iter().map(|z| mid + half * z).collect(),
            weights: w.iter().map(|w| half * w).collect(),
            kind: QuadratureKind::GaussLegendre,
        })
    }

    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn kind(&self) -> QuadratureKind {
        self.kind
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (f64, f64)> + '_ {
        self.nodes.iter().copied().zip(self.weights.iter().copied())
    }

    /// `sum_i w_i f(x_i)`.
    pub fn integrate<F: FnMut(f64) -> f64>(&self, mut f: F) -> f64 {
        self.iter().map(|(x, w)| w * f(x)).sum()
    }

    /// For a Legendre rule on `[c, d]`, integrate `f` over `[a, b]` by affine
    /// transport of the nodes.
    pub fn integrate_on<F: FnMut(f64) -> f64>(&self, a: f64, b: f64, mut f: F) -> f64 {
        debug_assert_eq!(self.kind, QuadratureKind::GaussLegendre);
        let (c, d) = (self.nodes[0], self.nodes[self.len() - 1]);
        // Endpoints of the source interval are recovered from symmetry of the rule.
        let total: f64 = self.weights.iter().sum();
        let src_mid = 0.5 * (c + d);
        let scale = (b - a) / total;
        let dst_mid = 0.5 * (a + b);
        self.iter()
            .map(|(x, w)| {
                let y = dst_mid + (x - src_mid) * scale;
                w * scale * f(y)
            })
            .sum()
    }
}

/// Build a rule of the given family. `a` and `b` are required for Gauss-Legendre.
pub fn make_quadrature(kind: QuadratureKind, n: usize, a: Option<f64>, b: Option<f64>) -> Result<QuadratureRule> {
    match kind {
        QuadratureKind::GaussHermiteProbabilist => QuadratureRule::gauss_hermite(n),
        QuadratureKind::GaussLegendre => {
            let (a, b) = match (a, b) {
                (Some(a), Some(b)) => (a, b),
                _ => {
                    return Err(Error::InvalidDomain(
                        "Gauss-Legendre needs both interval endpoints".into(),
                    ))
                }
            };
            QuadratureRule::gauss_legendre(n, a, b)
        }
    }
}

/// Gauss-Legendre nodes and weights on [-1, 1], ascending.
fn legendre_unit(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut x = vec![0.0; n];
    let mut w = vec![0.0; n];
    let nf = n as f64;
    for i in 0..n.div_ceil(2) {
        let mut z = (std::f64::consts::PI * (i as f64 + 0.75) / (nf + 0.5)).cos();
        let mut pp = 1.0;
        for iter in 0..100 {
            let (p1, p2) = legendre_pair(n, z);
            pp = nf * (z * p1 - p2) / (z * z - 1.0);
            let dz = p1 / pp;
            z -= dz;
            if dz.abs() <= 1e-15 || iter == 99 {
                let (p1, p2) = legendre_pair(n, z);
                pp = nf * (z * p1 - p2) / (z * z - 1.0);
                break;
            }
        }
        // z is the i-th largest root
        x[i] = -z;
        x[n - 1 - i] = z;
        w[i] = 2.0 / ((1.0 - z * z) * pp * pp);
        w[n - 1 - i] = w[i];
    }
    if n % 2 == 1 {
        x[n / 2] = 0.0;
    }
    (x, w)
}

/// `(P_n(z), P_{n-1}(z))` by the three-term recurrence.
fn legendre_pair(n: usize, z: f64) -> (f64, f64) {
    let mut p1 = 1.0;
    let mut p2 = 0.0;
    for j in 0..n {
        let p3 = p2;
        p2 = p1;
        p1 = ((2 * j + 1) as f64 * z * p2 - j as f64 * p3) / (j as f64 + 1.0);
    }
    (p1, p2)
}

/// Orthonormal probabilist Hermite recurrence evaluated at `x`, returning
/// `(q_n, q_n', q_{n-1}, log_scale)` where true values are stored values times
/// `exp(log_scale)`.
fn hermite_orthonormal(n: usize, x: f64) -> (f64, f64, f64, f64) {
    const BIG: f64 = 1e100;
    let mut q_prev = 0.0;
    let mut q = 1.0;
    let mut d_prev = 0.0;
    let mut d = 0.0;
    let mut log_scale = 0.0;
    for k in 0..n {
        let kf = k as f64;
        let norm = (kf + 1.0).sqrt();
        let sk = kf.sqrt();
        let q_next = (x * q - sk * q_prev) / norm;
        let d_next = (q + x * d - sk * d_prev) / norm;
        q_prev = q;
        q = q_next;
        d_prev = d;
        d = d_next;
        if q.abs() > BIG || d.abs() > BIG {
            q /= BIG;
            q_prev /= BIG;
            d /= BIG;
            d_prev /= BIG;
            log_scale += BIG.ln();
        }
    }
    (q, d, q_prev, log_scale)
}

fn hermite_probabilist(n: usize) -> Result<(Vec<f64>, Vec<f64>)> {
    // Initial guesses: eigenvalues of the Jacobi matrix (zero diagonal,
    // off-diagonal sqrt(k)).
    let mut diag = vec![0.0; n];
    let mut off: Vec<f64> = (1..n).map(|k| (k as f64).sqrt()).chain(std::iter::once(0.0)).collect();
    tridiagonal_eigenvalues(&mut diag, &mut off)?;
    diag.sort_by(|a, b| a.partial_cmp(b).unwrap());

    let nf = n as f64;
    let mut nodes = vec![0.0; n];
    let mut log_w = vec![0.0; n];
    for i in 0..n.div_ceil(2) {
        // polish the non-positive half, mirror the rest
        let mut x = if n % 2 == 1 && i == n / 2 { 0.0 } else { diag[i] };
        if !(n % 2 == 1 && i == n / 2) {
            for _ in 0..20 {
                let (q, dq, _, _) = hermite_orthonormal(n, x);
                let dx = q / dq;
                x -= dx;
                if dx.abs() <= 1e-15 * x.abs().max(1.0) {
                    break;
                }
            }
        }
        let (_, _, q_nm1, log_scale) = hermite_orthonormal(n, x);
        let lw = -nf.ln() - 2.0 * (q_nm1.abs().ln() + log_scale);
        nodes[i] = x;
        nodes[n - 1 - i] = -x;
        log_w[i] = lw;
        log_w[n - 1 - i] = lw;
    }
    if n % 2 == 1 {
        nodes[n / 2] = 0.0;
    }
    let (nodes, weights): (Vec<f64>, Vec<f64>) = nodes
        .into_iter()
        .zip(log_w.into_iter().map(f64::exp))
        .filter(|(_, w)| *w > 0.0)
        .unzip();
    Ok((nodes, weights))
}

/// Eigenvalues of a symmetric tridiagonal matrix by implicit QL with shifts.
/// `off[i]` couples rows `i` and `i+1`; `off[n-1]` is ignored. Eigenvalues are
/// returned in `diag`, unordered.
fn tridiagonal_eigenvalues(diag: &mut [f64], off: &mut [f64]) -> Result<()> {
    let n = diag.len();
    if n == 0 {
        return Ok(());
    }
    off[n - 1] = 0.0;
    for l in 0..n {
        let mut iter = 0;
        loop {
            let mut m = l;
            while m + 1 < n {
                let dd = diag[m].abs() + diag[m + 1].abs();
                if off[m].abs() <= f64::EPSILON * dd {
                    break;
                }
                m += 1;
            }
            if m == l {
                break;
            }
            iter += 1;
            if iter > 100 {
                return Err(Error::InvalidDomain("tridiagonal QL did not converge".into()));
            }
            let mut g = (diag[l + 1] - diag[l]) / (2.0 * off[l]);
            let mut r = g.hypot(1.0);
            g = diag[m] - diag[l] + off[l] / (g + r.copysign(g));
            let (mut s, mut c, mut p) = (1.0f64, 1.0f64, 0.0f64);
            let mut deflated = false;
            let mut i = m;
            while i > l {
                i -= 1;
                let f = s * off[i];
                let b = c * off[i];
                r = f.hypot(g);
                off[i + 1] = r;
                if r == 0.0 {
                    diag[i + 1] -= p;
                    off[m] = 0.0;
                    deflated = true;
                    break;
                }
                s = f / r;
                c = g / r;
                g = diag[i + 1] - p;
                r = (diag[i] - g) * s + 2.0 * c * b;
                p = s * r;
                diag[i + 1] = g + p;
                g = c * r - b;
            }
            if deflated {
                continue;
            }
            diag[l] -= p;
            off[l] = g;
            off[m] = 0.0;
        }
    }
    Ok(())
}
