//! Market quotes, SVI slice smoothing, log-contract stripping of the forward
//! variance curve and curve construction.

use std::fmt;
use std::io::{Read, Write};
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::ForwardVarianceCurve;
use crate::numerics::{
    adaptive_integrate, black_total_std, implied_vol, nelder_mead, NelderMeadOptions, OptionFlag,
};

pub const QUOTE_HEADER: [&str; 7] = ["underlying", "maturity", "forward", "strike", "flag", "bid", "ask"];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Underlying {
    #[serde(rename = "SPX")]
    Spx,
    #[serde(rename = "VIX")]
    Vix,
}

impl fmt::Display for Underlying {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Underlying::Spx => "SPX",
            Underlying::Vix => "VIX",
        })
    }
}

impl FromStr for Underlying {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_uppercase().as_str() {
            "SPX" => Ok(Underlying::Spx),
            "VIX" => Ok(Underlying::Vix),
            other => Err(Error::InvalidParameter(format!("unknown underlying '{other}'"))),
        }
    }
}

fn parse_flag(s: &str) -> Result<OptionFlag> {
    match s.trim().to_ascii_lowercase().as_str() {
        "c" | "call" => Ok(OptionFlag::Call),
        "p" | "put" => Ok(OptionFlag::Put),
        other => Err(Error::InvalidParameter(format!("unknown option flag '{other}'"))),
    }
}

fn flag_str(flag: OptionFlag) -> &'static str {
    match flag {
        OptionFlag::Call => "call",
        OptionFlag::Put => "put",
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Quote {
    pub strike: f64,
    pub bid: f64,
    pub ask: f64,
    pub mid: f64,
    pub flag: OptionFlag,
}

impl Quote {
    pub fn new(strike: f64, bid: f64, ask: f64, flag: OptionFlag) -> Result<Self> {
        if !(strike > 0.0 && strike.is_finite()) {
            return Err(Error::InvalidParameter(format!("strike must be positive, got {strike}")));
        }
        if !(bid >= 0.0 && ask.is_finite()) {
            return Err(Error::InvalidParameter(format!("bid must be non-negative, got {bid}")));
        }
        if bid > ask {
            return Err(Error::InvalidParameter(format!("bid {bid} above ask {ask}")));
        }
        Ok(Self {
            strike,
            bid,
            ask,
            mid: 0.5 * (bid + ask),
            flag,
        })
    }
}

/// Quotes of one maturity, with the forward (future price for VIX).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Slice {
    pub maturity: f64,
    pub forward: f64,
    pub quotes: Vec<Quote>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuoteSet {
    pub underlying: Underlying,
    /// Sorted by maturity.
    pub slices: Vec<Slice>,
}

impl QuoteSet {
    pub fn new(underlying: Underlying) -> Self {
        Self {
            underlying,
            slices: Vec::new(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.slices.is_empty()
    }

    pub fn n_quotes(&self) -> usize {
        self.slices.iter().map(|s| s.quotes.len()).sum()
    }

    pub fn maturities(&self) -> Vec<f64> {
        self.slices.iter().map(|s| s.maturity).collect()
    }

    /// Add a validated quote, creating its slice if needed.
    pub fn push(&mut self, maturity: f64, forward: f64, quote: Quote) -> Result<()> {
        if !(maturity > 0.0 && maturity.is_finite()) {
            return Err(Error::InvalidParameter(format!("maturity must be positive, got {maturity}")));
        }
        if !(forward > 0.0 && forward.is_finite()) {
            return Err(Error::InvalidParameter(format!("forward must be positive, got {forward}")));
        }
        let pos = self.slices.partition_point(|s| s.maturity < maturity);
        if pos == self.slices.len() || self.slices[pos].maturity != maturity {
            self.slices.insert(
                pos,
                Slice {
                    maturity,
                    forward,
                    quotes: Vec::new(),
                },
            );
        }
        let slice = &mut self.slices[pos];
        if (slice.forward - forward).abs() > 1e-10 * slice.forward {
            return Err(Error::InvalidParameter(format!(
                "forward {forward} inconsistent with {} already quoted for maturity {maturity}",
                slice.forward
            )));
        }
        if slice
            .quotes
            .iter()
            .any(|q| q.strike == quote.strike && q.flag == quote.flag)
        {
            return Err(Error::InvalidParameter(format!(
                "duplicate {} strike {} at maturity {maturity}",
                flag_str(quote.flag),
                quote.strike
            )));
        }
        slice.quotes.push(quote);
        Ok(())
    }
}

/// A row that failed validation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Rejection {
    pub line: u64,
    pub reason: String,
}

/// Accepted quotes by underlying, plus the rejection report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuoteFile {
    pub spx: QuoteSet,
    pub vix: QuoteSet,
    pub rejections: Vec<Rejection>,
}

impl QuoteFile {
    pub fn set(&self, underlying: Underlying) -> &QuoteSet {
        match underlying {
            Underlying::Spx => &self.spx,
            Underlying::Vix => &self.vix,
        }
    }
}

fn parse_row(rec: &csv::StringRecord) -> Result<(Underlying, f64, f64, Quote)> {
    if rec.len() != QUOTE_HEADER.len() {
        return Err(Error::InvalidParameter(format!(
            "expected {} fields, found {}",
            QUOTE_HEADER.len(),
            rec.len()
        )));
    }
    let num = |i: usize| -> Result<f64> {
        rec[i]
            .trim()
            .parse::<f64>()
            .map_err(|_| Error::InvalidParameter(format!("{} '{}' is not a number", QUOTE_HEADER[i], &rec[i])))
    };
    let underlying: Underlying = rec[0].parse()?;
    let quote = Quote::new(num(3)?, num(5)?, num(6)?, parse_flag(&rec[4])?)?;
    Ok((underlying, num(1)?, num(2)?, quote))
}

/// Read quotes from CSV. Structural problems (missing or wrong header) are
/// errors; invalid rows go to the rejection report.
pub fn read_quotes<R: Read>(reader: R) -> Result<QuoteFile> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .trim(csv::Trim::All)
        .comment(Some(b'#'))
        .from_reader(reader);
    let mut out = QuoteFile {
        spx: QuoteSet::new(Underlying::Spx),
        vix: QuoteSet::new(Underlying::Vix),
        rejections: Vec::new(),
    };
    let mut records = rdr.records();
    match records.next() {
        None => return Ok(out),
        Some(Err(e)) => {
            return Err(Error::Parse {
                line: e.position().map_or(1, |p| p.line()),
                message: e.to_string(),
            })
        }
        Some(Ok(header)) => {
            let got: Vec<String> = header.iter().map(|h| h.to_ascii_lowercase()).collect();
            if got != QUOTE_HEADER {
                return Err(Error::Parse {
                    line: header.position().map_or(1, |p| p.line()),
                    message: format!("expected header '{}', found '{}'", QUOTE_HEADER.join(","), got.join(",")),
                });
            }
        }
    }
    for rec in records {
        let rec = match rec {
            Ok(r) => r,
            Err(e) => {
                out.rejections.push(Rejection {
                    line: e.position().map_or(0, |p| p.line()),
                    reason: e.to_string(),
                });
                continue;
            }
        };
        let line = rec.position().map_or(0, |p| p.line());
        let accepted = parse_row(&rec).and_then(|(u, t, f, q)| match u {
            Underlying::Spx => out.spx.push(t, f, q),
            Underlying::Vix => out.vix.push(t, f, q),
        });
        if let Err(e) = accepted {
            out.rejections.push(Rejection {
                line,
                reason: e.to_string(),
            });
        }
    }
    Ok(out)
}

pub fn load_quotes(path: &Path) -> Result<QuoteFile> {
    let file = std::fs::File::open(path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
    read_quotes(std::io::BufReader::new(file))
}

/// Write accepted quotes in the loader's format.
pub fn write_quotes<W: Write>(writer: W, sets: &[&QuoteSet]) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    let io = |e: csv::Error| Error::Io(e.to_string());
    w.write_record(QUOTE_HEADER).map_err(io)?;
    for set in sets {
        for slice in &set.slices {
            for q in &slice.quotes {
                w.write_record([
                    set.underlying.to_string(),
                    slice.maturity.to_string(),
                    slice.forward.to_string(),
                    q.strike.to_string(),
                    flag_str(q.flag).to_string(),
                    q.bid.to_string(),
                    q.ask.to_string(),
                ])
                .map_err(io)?;
            }
        }
    }
    w.flush()?;
    Ok(())
}

/// Raw SVI parameterization of total implied variance in log-moneyness.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SviParams {
    pub a: f64,
    pub b: f64,
    pub rho: f64,
    pub m: f64,
    pub s: f64,
}

impl SviParams {
    pub fn total_variance(&self, k: f64) -> f64 {
        let y = k - self.m;
        self.a + self.b * (self.rho * y + (y * y + self.s * self.s).sqrt())
    }

    /// Minimum of `w` over the real line.
    pub fn min_total_variance(&self) -> f64 {
        self.a + self.b * self.s * (1.0 - self.rho * self.rho).max(0.0).sqrt()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SviConfig {
    /// Largest acceptable RMSE of fitted implied vols against the mids.
    pub max_iv_rmse: f64,
}

impl Default for SviConfig {
    fn default() -> Self {
        Self { max_iv_rmse: 0.02 }
    }
}

/// A fitted smile: total variance as a function of `k = ln(K / F)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SviSlice {
    pub maturity: f64,
    pub forward: f64,
    pub params: SviParams,
    /// RMSE in total variance.
    pub rmse: f64,
    /// RMSE in implied volatility.
    pub iv_rmse: f64,
    pub n_quotes: usize,
}

impl SviSlice {
    pub fn total_variance(&self, k: f64) -> f64 {
        self.params.total_variance(k).max(0.0)
    }

    pub fn implied_vol(&self, strike: f64) -> f64 {
        (self.total_variance((strike / self.forward).ln()) / self.maturity).sqrt()
    }

    pub fn price(&self, strike: f64, flag: OptionFlag) -> f64 {
        let w = self.total_variance((strike / self.forward).ln());
        black_total_std(self.forward, strike, w.sqrt(), flag)
    }

    /// `2 (int_0^F P / K^2 dK + int_F^inf C / K^2 dK)` with the strike range
    /// truncated at eight total-variance standard deviations.
    pub fn log_contract(&self) -> Result<f64> {
        let w0 = self.total_variance(0.0).max(1e-12);
        let width = 8.0 * w0.sqrt();
        let f = self.forward;
        let integrand = |k: f64, flag: OptionFlag| self.price(f * k.exp(), flag) * (-k).exp();
        let tol_abs = 1e-14 * w0 * f;
        let puts = adaptive_integrate(|k| integrand(k, OptionFlag::Put), -width, 0.0, 1e-10, tol_abs)?;
        let calls = adaptive_integrate(|k| integrand(k, OptionFlag::Call), 0.0, width, 1e-10, tol_abs)?;
        Ok(2.0 * (puts + calls) / f)
    }
}

fn solve_linear<const N: usize>(mut a: [[f64; N]; N], mut b: [f64; N]) -> Option<[f64; N]> {
    for col in 0..N {
        let piv = (col..N).max_by(|i, j| a[*i][col].abs().total_cmp(&a[*j][col].abs()))?;
        if a[piv][col].abs() < 1e-300 {
            return None;
        }
        a.swap(col, piv);
        b.swap(col, piv);
        for row in col + 1..N {
            let f = a[row][col] / a[col][col];
            for c in col..N {
                a[row][c] -= f * a[col][c];
            }
            b[row] -= f * b[col];
        }
    }
    let mut x = [0.0; N];
    for row in (0..N).rev() {
        let mut acc = b[row];
        for c in row + 1..N {
            acc -= a[row][c] * x[c];
        }
        x[row] = acc / a[row][row];
    }
    Some(x)
}

fn least_squares<const N: usize>(basis: &[[f64; N]], w: &[f64]) -> Option<[f64; N]> {
    let mut ata = [[0.0; N]; N];
    let mut atb = [0.0; N];
    for (row, wi) in basis.iter().zip(w) {
        for i in 0..N {
            atb[i] += row[i] * wi;
            for j in 0..N {
                ata[i][j] += row[i] * row[j];
            }
        }
    }
    solve_linear(ata, atb)
}

/// For fixed `(m, s)` the SVI total variance is linear in `(a, d, c)` with
/// `d = rho b s`, `c = b s`. Returns the best feasible triple and its SSE.
fn inner_fit(k: &[f64], w: &[f64], m: f64, s: f64) -> (f64, [f64; 3]) {
    let ys: Vec<(f64, f64)> = k
        .iter()
        .map(|k| {
            let y = (k - m) / s;
            (y, (y * y + 1.0).sqrt())
        })
        .collect();
    let sse = |p: [f64; 3]| -> f64 {
        ys.iter()
            .zip(w)
            .map(|((y, z), w)| (p[0] + p[1] * y + p[2] * z - w).powi(2))
            .sum()
    };
    let feasible = |p: &[f64; 3]| {
        p[2] >= 0.0 && p[1].abs() <= p[2] * (1.0 + 1e-12) && p[0] + (p[2] * p[2] - p[1] * p[1]).max(0.0).sqrt() >= 0.0
    };
    let mut candidates: Vec<[f64; 3]> = Vec::new();
    let full: Vec<[f64; 3]> = ys.iter().map(|(y, z)| [1.0, *y, *z]).collect();
    if let Some(p) = least_squares(&full, w) {
        candidates.push(p);
    }
    for sign in [1.0, -1.0] {
        let basis: Vec<[f64; 2]> = ys.iter().map(|(y, z)| [1.0, z + sign * y]).collect();
        if let Some([a, c]) = least_squares(&basis, w) {
            candidates.push([a, sign * c, c]);
        }
    }
    let mean = w.iter().sum::<f64>() / w.len() as f64;
    candidates.push([mean.max(0.0), 0.0, 0.0]);
    candidates
        .into_iter()
        .filter(feasible)
        .map(|p| (sse(p), p))
        .min_by(|a, b| a.0.total_cmp(&b.0))
        .unwrap_or((sse([mean.max(0.0), 0.0, 0.0]), [mean.max(0.0), 0.0, 0.0]))
}

/// Least-squares SVI fit to the mid implied total variances of one slice.
pub fn fit_slice(slice: &Slice, cfg: &SviConfig) -> Result<SviSlice> {
    const MIN_QUOTES: usize = 5;
    if slice.quotes.len() < MIN_QUOTES {
        return Err(Error::InsufficientQuotes {
            needed: MIN_QUOTES,
            got: slice.quotes.len(),
        });
    }
    let t = slice.maturity;
    let f = slice.forward;
    let mut data: Vec<(f64, f64)> = slice
        .quotes
        .iter()
        .filter_map(|q| {
            implied_vol(q.mid, f, q.strike, t, q.flag)
                .ok()
                .map(|iv| ((q.strike / f).ln(), iv * iv * t))
        })
        .collect();
    if data.len() < MIN_QUOTES {
        return Err(Error::InsufficientQuotes {
            needed: MIN_QUOTES,
            got: data.len(),
        });
    }
    // permutation invariance: fit in a canonical order
    data.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.total_cmp(&b.1)));
    let (k, w): (Vec<f64>, Vec<f64>) = data.iter().copied().unzip();

    let k_span = (k[k.len() - 1] - k[0]).max(1e-3);
    let (s_lo, s_hi) = (1e-4 * k_span, 10.0 * k_span);
    let outer = |p: &[f64]| -> f64 {
        let s = p[1].exp();
        if !(s >= s_lo && s <= s_hi) || p[0].abs() > 5.0 * k_span + 1.0 {
            return f64::INFINITY;
        }
        inner_fit(&k, &w, p[0], s).0
    };
    let k_min_w = data.iter().min_by(|a, b| a.1.total_cmp(&b.1)).map(|d| d.0).unwrap_or(0.0);
    let opts = NelderMeadOptions {
        max_evals: 1500,
        f_tol: 1e-30,
        x_tol: 1e-9,
    };
    let mut best: Option<(f64, f64, f64)> = None;
    for &m0 in &[k_min_w, 0.0] {
        for &s0 in &[0.1 * k_span, 0.5 * k_span] {
            let r = nelder_mead(outer, &[m0, s0.ln()], &[0.1 * k_span, 0.5], opts);
            if best.map_or(true, |b| r.value < b.0) {
                best = Some((r.value, r.x[0], r.x[1].exp()));
            }
        }
    }
    let (_, m, s) = best.expect("at least one start");
    let (sse, [a, d, c]) = inner_fit(&k, &w, m, s);
    let params = SviParams {
        a,
        b: c / s,
        rho: if c > 0.0 { (d / c).clamp(-1.0, 1.0) } else { 0.0 },
        m,
        s,
    };
    let n = k.len() as f64;
    let iv_rmse = (data
        .iter()
        .map(|(k, w)| ((params.total_variance(*k).max(0.0) / t).sqrt() - (w / t).sqrt()).powi(2))
        .sum::<f64>()
        / n)
        .sqrt();
    if !(iv_rmse <= cfg.max_iv_rmse) {
        return Err(Error::FitFailure {
            rmse: iv_rmse,
            bound: cfg.max_iv_rmse,
        });
    }
    Ok(SviSlice {
        maturity: t,
        forward: f,
        params,
        rmse: (sse / n).sqrt(),
        iv_rmse,
        n_quotes: k.len(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VarianceInterval {
    pub t_lo: f64,
    pub t_hi: f64,
    /// `int xi0` over `[t_lo, t_hi]`.
    pub integral: f64,
}

/// Contiguous integrals of the forward variance curve starting at `t = 0`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StrippedVariance {
    pub intervals: Vec<VarianceInterval>,
}

impl StrippedVariance {
    pub fn new(intervals: Vec<VarianceInterval>) -> Result<Self> {
        let out = Self { intervals };
        out.validate()?;
        Ok(out)
    }

    pub fn validate(&self) -> Result<()> {
        if self.intervals.is_empty() {
            return Err(Error::InvalidParameter("no stripped intervals".into()));
        }
        if self.intervals[0].t_lo != 0.0 {
            return Err(Error::InvalidParameter("stripped intervals must start at t = 0".into()));
        }
        for (i, iv) in self.intervals.iter().enumerate() {
            if !(iv.t_hi > iv.t_lo) {
                return Err(Error::InvalidParameter(format!("empty interval [{}, {}]", iv.t_lo, iv.t_hi)));
            }
            if i > 0 && self.intervals[i - 1].t_hi != iv.t_lo {
                return Err(Error::InvalidParameter("stripped intervals must be contiguous".into()));
            }
            if !(iv.integral >= 0.0 && iv.integral.is_finite()) {
                return Err(Error::NegativeStrippedVariance {
                    t_lo: iv.t_lo,
                    t_hi: iv.t_hi,
                    integral: iv.integral,
                });
            }
        }
        Ok(())
    }

    /// Total variance `int_0^T xi0`, one entry per interval end.
    pub fn cumulative(&self) -> Vec<(f64, f64)> {
        let mut acc = 0.0;
        self.intervals
            .iter()
            .map(|iv| {
                acc += iv.integral;
                (iv.t_hi, acc)
            })
            .collect()
    }
}

/// Strip the forward variance curve from fitted SPX slices.
pub fn strip_from_slices(fits: &[SviSlice]) -> Result<StrippedVariance> {
    let mut intervals = Vec::with_capacity(fits.len());
    let mut prev_t = 0.0;
    let mut prev_l = 0.0;
    for fit in fits {
        if !(fit.maturity > prev_t) {
            return Err(Error::InvalidParameter("slice maturities must be increasing".into()));
        }
        let l = fit.log_contract()?;
        let mut integral = l - prev_l;
        if integral < 0.0 {
            // quadrature noise on two equal slices; anything larger is arbitrage
            if integral >= -1e-8 * l.max(prev_l) {
                integral = 0.0;
            } else {
                return Err(Error::NegativeStrippedVariance {
                    t_lo: prev_t,
                    t_hi: fit.maturity,
                    integral,
                });
            }
        }
        intervals.push(VarianceInterval {
            t_lo: prev_t,
            t_hi: fit.maturity,
            integral,
        });
        prev_t = fit.maturity;
        prev_l = l;
    }
    StrippedVariance::new(intervals)
}

/// Fit every SPX slice and strip the curve. Returns the fits as well.
pub fn strip_with_fits(spx: &QuoteSet, cfg: &SviConfig) -> Result<(StrippedVariance, Vec<SviSlice>)> {
    if spx.underlying != Underlying::Spx {
        return Err(Error::InvalidParameter("forward variance is stripped from SPX options".into()));
    }
    if spx.slices.len() < 2 {
        return Err(Error::InsufficientQuotes {
            needed: 2,
            got: spx.slices.len(),
        });
    }
    let fits = spx
        .slices
        .iter()
        .map(|s| fit_slice(s, cfg))
        .collect::<Result<Vec<_>>>()?;
    Ok((strip_from_slices(&fits)?, fits))
}

pub fn strip_forward_variance(spx: &QuoteSet, cfg: &SviConfig) -> Result<StrippedVariance> {
    strip_with_fits(spx, cfg).map(|r| r.0)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CurveStyle {
    Spline,
    Piecewise,
}

impl FromStr for CurveStyle {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "spline" => Ok(CurveStyle::Spline),
            "piecewise" => Ok(CurveStyle::Piecewise),
            other => Err(Error::InvalidParameter(format!("unknown curve style '{other}'"))),
        }
    }
}

/// Forward variance curve from stripped interval integrals. Spline nodes sit
/// at interval midpoints with values `sqrt(integral / length)`.
pub fn build_curve(stripped: &StrippedVariance, style: CurveStyle) -> Result<ForwardVarianceCurve> {
    stripped.validate()?;
    let rate = |iv: &VarianceInterval| iv.integral / (iv.t_hi - iv.t_lo);
    match style {
        CurveStyle::Piecewise => ForwardVarianceCurve::piecewise(
            stripped.intervals.iter().map(|iv| iv.t_lo).collect(),
            stripped.intervals.iter().map(rate).collect(),
        ),
        CurveStyle::Spline => {
            let nodes: Vec<(f64, f64)> = stripped
                .intervals
                .iter()
                .map(|iv| (0.5 * (iv.t_lo + iv.t_hi), rate(iv).sqrt()))
                .collect();
            ForwardVarianceCurve::spline(&nodes)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::black_price;
    use crate::numerics::BlackInputs;

    fn bs_slice(t: f64, vol: f64, strikes: &[f64], half_spread: f64) -> Slice {
        let quotes = strikes
            .iter()
            .map(|&k| {
                let flag = if k < 100.0 { OptionFlag::Put } else { OptionFlag::Call };
                let p = black_price(&BlackInputs::new(100.0, k, t, vol, flag).unwrap());
                Quote::new(k, p - half_spread * p, p + half_spread * p, flag).unwrap()
            })
            .collect();
        Slice {
            maturity: t,
            forward: 100.0,
            quotes,
        }
    }

    fn strikes() -> Vec<f64> {
        (0..15).map(|i| 80.0 + 3.0 * i as f64).collect()
    }

    #[test]
    fn empty_file_is_empty_set() {
        let q = read_quotes("".as_bytes()).unwrap();
        assert!(q.spx.is_empty() && q.vix.is_empty() && q.rejections.is_empty());
        let q = read_quotes("underlying,maturity,forward,strike,flag,bid,ask\n".as_bytes()).unwrap();
        assert!(q.spx.is_empty());
    }

    #[test]
    fn bad_rows_are_reported() {
        let csv = "underlying,maturity,forward,strike,flag,bid,ask\n\
                   SPX,0.1,100,95,put,1.0,1.1\n\
                   SPX,0.1,100,100,call,2.0,1.5\n\
                   SPX,0.1,101,105,call,1.0,1.1\n\
                   SPX,0.1,100,95,put,1.0,1.2\n\
                   SPX,abc,100,95,put,1.0,1.1\n\
                   FOO,0.1,100,90,put,1.0,1.1\n\
                   VIX,0.1,20,25,C,0.5,0.6\n\
                   SPX,0.1,100\n";
        let q = read_quotes(csv.as_bytes()).unwrap();
        assert_eq!(q.spx.n_quotes(), 1);
        assert_eq!(q.vix.n_quotes(), 1);
        let lines: Vec<u64> = q.rejections.iter().map(|r| r.line).collect();
        assert_eq!(lines, vec![3, 4, 5, 6, 7, 9]);
        assert!(q.rejections[0].reason.contains("above ask"));
    }

    #[test]
    fn wrong_header_is_a_parse_error() {
        let csv = "a,b,c\n1,2,3\n";
        assert!(matches!(read_quotes(csv.as_bytes()), Err(Error::Parse { line: 1, .. })));
    }

    #[test]
    fn save_load_round_trip() {
        let csv = "underlying,maturity,forward,strike,flag,bid,ask\n\
                   SPX,0.25,2570.5,2500,put,30.1,31.2\n\
                   SPX,0.0821917808219178,2570.5,2600,call,12.35,12.9\n\
                   VIX,0.1,13.2,15,call,0.55,0.6\n";
        let q = read_quotes(csv.as_bytes()).unwrap();
        let mut buf = Vec::new();
        write_quotes(&mut buf, &[&q.spx, &q.vix]).unwrap();
        let back = read_quotes(buf.as_slice()).unwrap();
        assert_eq!(back, q);
    }

    #[test]
    fn flat_slice_fit_is_exact() {
        let s = bs_slice(0.5, 0.2, &strikes(), 0.01);
        let fit = fit_slice(&s, &SviConfig::default()).unwrap();
        assert!(fit.rmse < 1e-10, "{fit:?}");
        for k in [-0.3, 0.0, 0.2] {
            assert!((fit.total_variance(k) - 0.02).abs() < 1e-9);
        }
    }

    #[test]
    fn svi_data_is_recovered() {
        let truth = SviParams {
            a: 0.01,
            b: 0.1,
            rho: -0.6,
            m: 0.02,
            s: 0.15,
        };
        let t = 0.25;
        let quotes: Vec<Quote> = strikes()
            .iter()
            .map(|&k| {
                let flag = if k < 100.0 { OptionFlag::Put } else { OptionFlag::Call };
                let w = truth.total_variance((k / 100.0f64).ln());
                let p = black_total_std(100.0, k, w.sqrt(), flag);
                Quote::new(k, 0.98 * p, 1.02 * p, flag).unwrap()
            })
            .collect();
        let s = Slice {
            maturity: t,
            forward: 100.0,
            quotes,
        };
        let fit = fit_slice(&s, &SviConfig::default()).unwrap();
        assert!(fit.rmse < 1e-8, "{fit:?}");
        let within = s
            .quotes
            .iter()
            .filter(|q| {
                let p = fit.price(q.strike, q.flag);
                p >= q.bid && p <= q.ask
            })
            .count();
        assert!(within as f64 >= 0.9 * s.quotes.len() as f64);
        // permutation invariance
        let mut rev = s.clone();
        rev.quotes.reverse();
        let fit2 = fit_slice(&rev, &SviConfig::default()).unwrap();
        assert_eq!(fit.params, fit2.params);
        // convex call prices
        let calls: Vec<f64> = (0..200).map(|i| fit.price(70.0 + 0.3 * i as f64, OptionFlag::Call)).collect();
        for w in calls.windows(3) {
            assert!(w[0] - 2.0 * w[1] + w[2] >= -1e-8);
        }
    }

    #[test]
    fn too_few_quotes() {
        let s = bs_slice(0.5, 0.2, &[90.0, 100.0, 110.0], 0.01);
        assert!(matches!(fit_slice(&s, &SviConfig::default()), Err(Error::InsufficientQuotes { needed: 5, got: 3 })));
    }

    #[test]
    fn flat_vol_log_contract_is_total_variance() {
        let s = bs_slice(0.5, 0.2, &strikes(), 0.01);
        let fit = fit_slice(&s, &SviConfig::default()).unwrap();
        let l = fit.log_contract().unwrap();
        assert!((l / 0.02 - 1.0).abs() < 1e-8, "{l}");
    }

    fn set_from(slices: Vec<Slice>) -> QuoteSet {
        let mut set = QuoteSet::new(Underlying::Spx);
        for s in slices {
            for q in s.quotes {
                set.push(s.maturity, s.forward, q).unwrap();
            }
        }
        set
    }

    #[test]
    fn strip_flat_surface() {
        let ts = [1.0 / 12.0, 2.0 / 12.0, 3.0 / 12.0];
        let set = set_from(ts.iter().map(|&t| bs_slice(t, 0.2, &strikes(), 0.01)).collect());
        let st = strip_forward_variance(&set, &SviConfig::default()).unwrap();
        assert_eq!(st.intervals.len(), 3);
        for iv in &st.intervals {
            let expect = 0.04 * (iv.t_hi - iv.t_lo);
            assert!((iv.integral / expect - 1.0).abs() < 1e-6);
        }
        let pw = build_curve(&st, CurveStyle::Piecewise).unwrap();
        for iv in &st.intervals {
            assert!((pw.integrate(iv.t_lo, iv.t_hi).unwrap() - iv.integral).abs() < 1e-15);
        }
        let sp = build_curve(&st, CurveStyle::Spline).unwrap();
        assert!((sp.eval(0.3).unwrap() - 0.04).abs() < 1e-8);
    }

    #[test]
    fn equal_slices_strip_to_zero() {
        let mut b = bs_slice(0.2, 0.2, &strikes(), 0.01);
        b.maturity = 0.25;
        let a = bs_slice(0.2, 0.2, &strikes(), 0.01);
        let fits: Vec<SviSlice> = [a, b].iter().map(|s| fit_slice(s, &SviConfig::default()).unwrap()).collect();
        // same prices at a later date: zero forward variance in between
        let mut fits = fits;
        fits[1].params = fits[0].params;
        let st = strip_from_slices(&fits).unwrap();
        assert!(st.intervals[1].integral.abs() < 1e-10);
    }

    #[test]
    fn calendar_arbitrage_is_rejected() {
        let set = set_from(vec![bs_slice(0.1, 0.3, &strikes(), 0.01), bs_slice(0.2, 0.15, &strikes(), 0.01)]);
        assert!(matches!(
            strip_forward_variance(&set, &SviConfig::default()),
            Err(Error::NegativeStrippedVariance { .. })
        ));
    }

    #[test]
    fn single_interval_piecewise_is_flat() {
        let st = StrippedVariance::new(vec![VarianceInterval {
            t_lo: 0.0,
            t_hi: 0.5,
            integral: 0.02,
        }])
        .unwrap();
        let c = build_curve(&st, CurveStyle::Piecewise).unwrap();
        assert_eq!(c.eval(0.1).unwrap(), 0.04);
        assert_eq!(c.eval(3.0).unwrap(), 0.04);
        let c = build_curve(&st, CurveStyle::Spline).unwrap();
        assert!((c.eval(2.0).unwrap() - 0.04).abs() < 1e-15);
    }

    #[test]
    fn spline_preserves_smooth_term_structure() {
        let truth = ForwardVarianceCurve::parametric(0.02, 2.0, 0.045).unwrap();
        let ts = [0.05, 0.1, 0.2, 0.35, 0.5, 0.75, 1.0];
        let mut prev = 0.0;
        let intervals = ts
            .iter()
            .map(|&t| {
                let iv = VarianceInterval {
                    t_lo: prev,
                    t_hi: t,
                    integral: truth.integrate(prev, t).unwrap(),
                };
                prev = t;
                iv
            })
            .collect();
        let st = StrippedVariance::new(intervals).unwrap();
        let c = build_curve(&st, CurveStyle::Spline).unwrap();
        for iv in &st.intervals {
            let got = c.integrate(iv.t_lo, iv.t_hi).unwrap();
            assert!((got / iv.integral - 1.0).abs() < 0.02, "{iv:?} {got}");
        }
    }
}
