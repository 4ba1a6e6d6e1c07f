//! `quintic`: strip, price and calibrate with the quintic OU model.

// `!(x > 0.0)` also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

mod output;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use quintic_core::{
    build_curve, calibrate, load_quotes, martingale_check, spx_smile, staged_calibrate, strip_with_fits, vix_smile,
    CalibrationProblem, CalibrationResult, CalibrationSettings, CurveStyle, Error, ForwardVarianceCurve, FutureQuote,
    McConfig, ModelParams, OptionFlag, QuadratureRule, QuoteFile, QuoteSet, Regime, SviConfig, Underlying,
};

use output::{num, opt, Meta, Outputs, Table};

#[derive(Parser, Debug)]
#[command(name = "quintic", version, about = "Quintic OU stochastic volatility model: SPX/VIX pricing and calibration")]
struct Cli {
    /// Worker threads for Monte Carlo and quadrature (default: all cores).
    #[arg(long, global = true, env = "QUINTIC_THREADS")]
    threads: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Strip the forward variance curve from SPX quotes.
    Strip(StripArgs),
    /// Price VIX futures and options by quadrature.
    PriceVix(PriceVixArgs),
    /// Price SPX options by Monte Carlo.
    PriceSpx(PriceSpxArgs),
    /// Model smiles per slice, optionally against market quotes.
    Smile(SmileArgs),
    /// Calibrate the model to SPX and VIX quotes.
    Calibrate(CalibrateArgs),
    /// Estimate E[S_T]/S_0 by Monte Carlo.
    MartingaleCheck(MartingaleArgs),
}

#[derive(Args, Debug)]
struct ModelInput {
    /// Model parameter JSON (a bare document or a calibration result).
    #[arg(long)]
    params: PathBuf,
    /// Forward variance curve JSON (a bare document or a strip/calibration result).
    #[arg(long)]
    curve: PathBuf,
}

#[derive(Args, Debug)]
struct McArgs {
    /// Monte Carlo paths per maturity.
    #[arg(long, default_value_t = 1 << 19)]
    paths: usize,
    /// Euler steps per year.
    #[arg(long, default_value_t = 312)]
    steps_per_year: usize,
    /// Random seed.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Disable antithetic sampling.
    #[arg(long)]
    no_antithetic: bool,
    /// Disable the control variate.
    #[arg(long)]
    no_control_variate: bool,
}

impl McArgs {
    fn config(&self) -> Result<McConfig> {
        let cfg = McConfig {
            n_paths: self.paths,
            steps_per_year: self.steps_per_year,
            seed: self.seed,
            antithetic: !self.no_antithetic,
            control_variate: !self.no_control_variate,
        };
        cfg.validate()?;
        Ok(cfg)
    }
}

#[derive(Args, Debug)]
struct StripArgs {
    /// Quote CSV.
    #[arg(long)]
    quotes: PathBuf,
    /// Stripped intervals and slice fits (JSON); stdout if omitted.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Constructed forward variance curve (JSON).
    #[arg(long)]
    curve_out: Option<PathBuf>,
    /// Curve construction: spline or piecewise.
    #[arg(long, default_value = "spline", value_parser = parse_style)]
    style: CurveStyle,
    /// Largest accepted implied vol RMSE of an SVI slice fit.
    #[arg(long, default_value_t = SviConfig::default().max_iv_rmse)]
    max_iv_rmse: f64,
}

#[derive(Args, Debug)]
struct PriceVixArgs {
    #[command(flatten)]
    model: ModelInput,
    /// Maturities in years, comma separated.
    #[arg(long = "T", value_delimiter = ',', required = true, allow_hyphen_values = true)]
    maturities: Vec<f64>,
    /// Strikes in VIX points: `a..b`, `a..b:step` or a comma list.
    #[arg(long, value_parser = parse_strikes, allow_hyphen_values = true)]
    strikes: Strikes,
    /// Gauss-Hermite nodes.
    #[arg(long, default_value_t = 400)]
    nodes: usize,
    /// Output CSV; stdout if omitted.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct PriceSpxArgs {
    #[command(flatten)]
    model: ModelInput,
    /// Spot price.
    #[arg(long, default_value_t = 100.0)]
    spot: f64,
    /// Maturities in years, comma separated.
    #[arg(long = "T", value_delimiter = ',', required = true, allow_hyphen_values = true)]
    maturities: Vec<f64>,
    /// Strikes: `a..b`, `a..b:step` or a comma list.
    #[arg(long, value_parser = parse_strikes, allow_hyphen_values = true)]
    strikes: Strikes,
    #[command(flatten)]
    mc: McArgs,
    /// Output CSV; stdout if omitted.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct SmileArgs {
    #[command(flatten)]
    model: ModelInput,
    /// Quote CSV; the model is evaluated on every quoted slice.
    #[arg(long)]
    quotes: Option<PathBuf>,
    /// SPX maturities when no quotes are given.
    #[arg(long = "T", value_delimiter = ',', allow_hyphen_values = true)]
    maturities: Vec<f64>,
    /// SPX strikes when no quotes are given.
    #[arg(long, value_parser = parse_strikes, allow_hyphen_values = true)]
    strikes: Option<Strikes>,
    /// Spot price when no quotes are given.
    #[arg(long, default_value_t = 100.0)]
    spot: f64,
    #[command(flatten)]
    mc: McArgs,
    /// Gauss-Hermite nodes for VIX slices.
    #[arg(long, default_value_t = 400)]
    nodes: usize,
    /// Directory receiving one CSV per slice.
    #[arg(long)]
    out_dir: PathBuf,
}

#[derive(Args, Debug)]
struct CalibrateArgs {
    /// Calibration problem JSON.
    #[arg(long)]
    problem: PathBuf,
    /// Override the Monte Carlo seeds of the problem.
    #[arg(long)]
    seed: Option<u64>,
    /// Override the objective evaluation budget.
    #[arg(long)]
    max_evals: Option<usize>,
    /// Result JSON; stdout if omitted.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Residual CSV.
    #[arg(long)]
    residuals: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct MartingaleArgs {
    #[command(flatten)]
    model: ModelInput,
    /// Maturities in years, comma separated.
    #[arg(long = "T", value_delimiter = ',', required = true, allow_hyphen_values = true)]
    maturities: Vec<f64>,
    #[command(flatten)]
    mc: McArgs,
    /// Output CSV; stdout if omitted.
    #[arg(long)]
    out: Option<PathBuf>,
}

/// Calibration problem document.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ProblemDoc {
    quotes: PathBuf,
    #[serde(default)]
    regime: Option<Regime>,
    initial: ModelParams,
    #[serde(default)]
    curve: Option<ForwardVarianceCurve>,
    #[serde(default)]
    settings: CalibrationSettings,
    #[serde(default)]
    futures: Vec<FutureQuote>,
}

#[derive(Debug, Clone, PartialEq)]
struct Strikes(Vec<f64>);

/// Rejected input; maps to exit code 2.
#[derive(Debug)]
struct Invalid(String);

impl std::fmt::Display for Invalid {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for Invalid {}

fn invalid(msg: impl Into<String>) -> anyhow::Error {
    anyhow::Error::new(Invalid(msg.into()))
}

fn parse_style(s: &str) -> std::result::Result<CurveStyle, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

fn parse_strikes(s: &str) -> std::result::Result<Strikes, String> {
    let s = s.trim();
    let out = if let Some((lo, rest)) = s.split_once("..") {
        let (hi, step) = match rest.split_once(':') {
            Some((hi, step)) => (hi, step),
            None => (rest, "1"),
        };
        let num = |t: &str| t.trim().parse::<f64>().map_err(|_| format!("bad number '{t}' in strike range"));
        let (lo, hi, step) = (num(lo)?, num(hi)?, num(step)?);
        if !(step > 0.0 && step.is_finite()) || !(hi >= lo) || !lo.is_finite() || !hi.is_finite() {
            return Err(format!("bad strike range '{s}'"));
        }
        let n = ((hi - lo) / step + 1e-9).floor() as usize;
        if n > 100_000 {
            return Err(format!("strike range '{s}' too long"));
        }
        (0..=n).map(|i| lo + i as f64 * step).collect()
    } else {
        s.split(',')
            .map(|t| t.trim().parse::<f64>().map_err(|_| format!("bad strike '{t}'")))
            .collect::<std::result::Result<Vec<_>, _>>()?
    };
    if out.is_empty() || out.iter().any(|k| !(*k > 0.0 && k.is_finite())) {
        return Err(format!("strikes must be positive: '{s}'"));
    }
    Ok(Strikes(out))
}

/// Read `key` from a JSON file holding either the bare document or an object
/// carrying it under `key`.
fn load_doc<T: DeserializeOwned>(path: &Path, key: &str) -> Result<T> {
    let text = std::fs::read_to_string(path).map_err(|e| invalid(format!("reading {}: {e}", path.display())))?;
    let value: Value =
        serde_json::from_str(&text).map_err(|e| invalid(format!("parsing {}: {e}", path.display())))?;
    let doc = match value.get(key) {
        Some(inner) if inner.is_object() => inner.clone(),
        _ => value,
    };
    serde_json::from_value(doc).map_err(|e| invalid(format!("{} in {}: {e}", key, path.display())))
}

fn load_model(m: &ModelInput) -> Result<(ModelParams, ForwardVarianceCurve)> {
    Ok((load_doc(&m.params, "params")?, load_doc(&m.curve, "curve")?))
}

fn load_quote_file(path: &Path) -> Result<QuoteFile> {
    let file = load_quotes(path).map_err(|e| invalid(format!("{}: {e}", path.display())))?;
    for r in &file.rejections {
        eprintln!("warning: {}:{}: {}", path.display(), r.line, r.reason);
    }
    Ok(file)
}

fn check_maturities(ts: &[f64]) -> Result<()> {
    if ts.is_empty() {
        bail!(invalid("at least one maturity is required"));
    }
    if let Some(t) = ts.iter().find(|t| !(**t > 0.0 && t.is_finite())) {
        bail!(invalid(format!("maturities must be positive, got {t}")));
    }
    Ok(())
}

fn gauss_hermite(nodes: usize) -> Result<QuadratureRule> {
    if nodes < 2 {
        bail!(invalid(format!("need at least 2 quadrature nodes, got {nodes}")));
    }
    Ok(QuadratureRule::gauss_hermite(nodes)?)
}

fn flag_str(f: OptionFlag) -> String {
    match f {
        OptionFlag::Call => "call".into(),
        OptionFlag::Put => "put".into(),
    }
}

fn strip(a: &StripArgs, out: &mut Outputs) -> Result<()> {
    if !(a.max_iv_rmse > 0.0) {
        bail!(invalid("--max-iv-rmse must be positive"));
    }
    let quotes = load_quote_file(&a.quotes)?;
    let inputs = json!({ "quotes": quotes.spx, "style": format!("{:?}", a.style), "max_iv_rmse": a.max_iv_rmse });
    let meta = Meta::new("strip", None, &inputs)?;
    let cfg = SviConfig {
        max_iv_rmse: a.max_iv_rmse,
    };
    let (stripped, fits) = strip_with_fits(&quotes.spx, &cfg)?;
    let curve = build_curve(&stripped, a.style)?;
    let doc = json!({
        "meta": meta,
        "intervals": stripped.intervals,
        "slices": fits,
        "curve": curve,
    });
    out.add_json(a.out.as_deref(), &doc)?;
    if let Some(p) = &a.curve_out {
        out.add_json(Some(p), &json!({ "meta": meta, "curve": curve }))?;
    }
    Ok(())
}

fn price_vix(a: &PriceVixArgs, out: &mut Outputs) -> Result<()> {
    check_maturities(&a.maturities)?;
    let (params, curve) = load_model(&a.model)?;
    let quad = gauss_hermite(a.nodes)?;
    let inputs = json!({
        "params": params, "curve": curve, "maturities": a.maturities, "strikes": a.strikes.0, "nodes": a.nodes,
    });
    let meta = Meta::new("price-vix", None, &inputs)?;
    let mut table = Table::new(&meta, &["T", "future", "strike", "flag", "price", "implied_vol"]);
    for &t in &a.maturities {
        let smile = vix_smile(&params, &curve, t, &a.strikes.0, &quad)?;
        for p in &smile.points {
            if let Some(e) = &p.error {
                eprintln!("warning: T={t} K={}: {e}", p.strike);
            }
            table.row(&[num(t), num(smile.future), num(p.strike), flag_str(p.flag), num(p.price), opt(p.implied_vol)]);
        }
    }
    out.add(a.out.as_deref(), table.into_string());
    Ok(())
}

fn price_spx(a: &PriceSpxArgs, out: &mut Outputs) -> Result<()> {
    check_maturities(&a.maturities)?;
    if !(a.spot > 0.0 && a.spot.is_finite()) {
        bail!(invalid("--spot must be positive"));
    }
    let cfg = a.mc.config()?;
    let (params, curve) = load_model(&a.model)?;
    let inputs = json!({
        "params": params, "curve": curve, "spot": a.spot, "maturities": a.maturities, "strikes": a.strikes.0, "mc": cfg,
    });
    let meta = Meta::new("price-spx", Some(cfg.seed), &inputs)?;
    let mut table = Table::new(
        &meta,
        &["T", "strike", "flag", "price", "std_error", "implied_vol", "iv_low", "iv_high"],
    );
    for &t in &a.maturities {
        let smile = spx_smile(&params, &curve, a.spot, t, &a.strikes.0, &cfg)?;
        for p in &smile.points {
            if let Some(e) = &p.error {
                eprintln!("warning: T={t} K={}: {e}", p.strike);
            }
            table.row(&[
                num(t),
                num(p.strike),
                flag_str(p.flag),
                num(p.price),
                num(p.std_error),
                opt(p.implied_vol),
                opt(p.iv_low),
                opt(p.iv_high),
            ]);
        }
    }
    out.add(a.out.as_deref(), table.into_string());
    Ok(())
}

struct MarketVol {
    strike: f64,
    flag: OptionFlag,
    ivs: [Option<f64>; 3],
}

/// Mid, bid and ask implied vols of every quote on a slice.
fn market_ivs(set: &QuoteSet, t: f64) -> Vec<MarketVol> {
    let Some(slice) = set.slices.iter().find(|s| s.maturity == t) else {
        return Vec::new();
    };
    slice
        .quotes
        .iter()
        .map(|q| {
            let iv = |p: f64| quintic_core::implied_vol(p, slice.forward, q.strike, t, q.flag).ok();
            MarketVol {
                strike: q.strike,
                flag: q.flag,
                ivs: [iv(q.mid), iv(q.bid), iv(q.ask)],
            }
        })
        .collect()
}

/// Distinct quoted strikes of a slice.
fn slice_strikes(set: &QuoteSet, t: f64) -> Vec<f64> {
    let mut ks: Vec<f64> = market_ivs(set, t).iter().map(|q| q.strike).collect();
    ks.sort_by(f64::total_cmp);
    ks.dedup();
    ks
}

fn market_row(set: &QuoteSet, t: f64, k: f64, reference: f64) -> [Option<f64>; 3] {
    let otm = if k < reference { OptionFlag::Put } else { OptionFlag::Call };
    let quotes = market_ivs(set, t);
    let pick = quotes
        .iter()
        .find(|q| q.strike == k && q.flag == otm)
        .or_else(|| quotes.iter().find(|q| q.strike == k));
    pick.map_or([None; 3], |q| q.ivs)
}

fn smile(a: &SmileArgs, out: &mut Outputs) -> Result<()> {
    let cfg = a.mc.config()?;
    let (params, curve) = load_model(&a.model)?;
    let quad = gauss_hermite(a.nodes)?;
    let quotes = match &a.quotes {
        Some(p) => Some(load_quote_file(p)?),
        None => None,
    };
    // (underlying, maturity, reference level, strikes)
    let mut jobs: Vec<(Underlying, f64, f64, Vec<f64>)> = Vec::new();
    match &quotes {
        Some(q) => {
            if a.strikes.is_some() || !a.maturities.is_empty() {
                bail!(invalid("--T and --strikes cannot be combined with --quotes"));
            }
            for s in &q.spx.slices {
                jobs.push((Underlying::Spx, s.maturity, s.forward, slice_strikes(&q.spx, s.maturity)));
            }
            for s in &q.vix.slices {
                jobs.push((Underlying::Vix, s.maturity, s.forward, slice_strikes(&q.vix, s.maturity)));
            }
            if jobs.is_empty() {
                bail!(invalid("quote file has no usable slices"));
            }
        }
        None => {
            check_maturities(&a.maturities)?;
            let Some(strikes) = &a.strikes else {
                bail!(invalid("--strikes is required without --quotes"));
            };
            if !(a.spot > 0.0 && a.spot.is_finite()) {
                bail!(invalid("--spot must be positive"));
            }
            for &t in &a.maturities {
                jobs.push((Underlying::Spx, t, a.spot, strikes.0.clone()));
            }
        }
    }
    let inputs = json!({
        "params": params, "curve": curve, "mc": cfg, "nodes": a.nodes,
        "quotes": quotes.as_ref().map(|q| json!({ "spx": q.spx, "vix": q.vix })),
        "jobs": jobs.iter().map(|j| json!([j.0.to_string(), j.1, j.2, j.3])).collect::<Vec<_>>(),
    });
    let meta = Meta::new("smile", Some(cfg.seed), &inputs)?;
    let with_market = quotes.is_some();
    let mut header = vec!["strike", "mid_iv_model", "iv_low", "iv_high"];
    if with_market {
        header.extend(["market_mid_iv", "market_bid_iv", "market_ask_iv"]);
    }
    for (underlying, t, reference, strikes) in &jobs {
        let mut table = Table::new(&meta, &header);
        let mut emit = |k: f64, model: [Option<f64>; 3]| {
            let mut cells: Vec<String> = std::iter::once(num(k)).chain(model.iter().map(|v| opt(*v))).collect();
            if let Some(q) = &quotes {
                let set = q.set(*underlying);
                cells.extend(market_row(set, *t, k, *reference).iter().map(|v| opt(*v)));
            }
            table.row(&cells);
        };
        match underlying {
            Underlying::Spx => {
                let s = spx_smile(&params, &curve, *reference, *t, strikes, &cfg)?;
                for p in &s.points {
                    emit(p.strike, [p.implied_vol, p.iv_low, p.iv_high]);
                }
            }
            Underlying::Vix => {
                let s = vix_smile(&params, &curve, *t, strikes, &quad)?;
                for p in &s.points {
                    emit(p.strike, [p.implied_vol, p.implied_vol, p.implied_vol]);
                }
            }
        }
        let name = format!("{}_T{}.csv", underlying.to_string().to_lowercase(), num(*t));
        out.add(Some(&a.out_dir.join(name)), table.into_string());
    }
    Ok(())
}

#[derive(Serialize)]
struct CalibrationReport<'a> {
    meta: &'a Meta,
    #[serde(flatten)]
    result: &'a CalibrationResult,
    skipped: &'a [String],
}

fn calibrate_cmd(a: &CalibrateArgs, out: &mut Outputs) -> Result<()> {
    let mut doc: ProblemDoc = load_doc(&a.problem, "problem")?;
    if let Some(seed) = a.seed {
        doc.settings.mc.seed = seed;
        doc.settings.report_mc.seed = seed.wrapping_add(1);
    }
    if let Some(n) = a.max_evals {
        doc.settings.max_evals = n;
    }
    if doc.regime.is_none() && doc.curve.is_none() {
        bail!(invalid("problem needs a `curve` when no `regime` is given"));
    }
    let quotes = load_quote_file(&doc.quotes)?;
    let inputs = json!({ "problem": doc, "spx": quotes.spx, "vix": quotes.vix });
    let meta = Meta::new("calibrate", Some(doc.settings.mc.seed), &inputs)?;
    let problem = CalibrationProblem::new(quotes.spx, quotes.vix, doc.futures.clone(), doc.settings.clone())?;
    for s in problem.skipped() {
        eprintln!("warning: skipped {s}");
    }
    let result = match (doc.regime, &doc.curve) {
        (Some(regime), curve) => staged_calibrate(&problem, regime, &doc.initial, curve.as_ref())?,
        (None, Some(curve)) => calibrate(&problem, &doc.initial, curve)?,
        (None, None) => unreachable!(),
    };
    let report = CalibrationReport {
        meta: &meta,
        result: &result,
        skipped: problem.skipped(),
    };
    out.add_json(a.out.as_deref(), &report)?;
    if let Some(p) = &a.residuals {
        let mut table = Table::new(
            &meta,
            &[
                "instrument",
                "maturity",
                "strike",
                "market",
                "market_bid",
                "market_ask",
                "model",
                "model_std_error",
                "error",
                "near_money",
                "within_spread",
            ],
        );
        for r in &result.residuals {
            let instrument = serde_json::to_value(r.instrument)?.as_str().unwrap_or_default().to_string();
            table.row(&[
                instrument,
                num(r.maturity),
                opt(r.strike),
                num(r.market),
                opt(r.market_bid),
                opt(r.market_ask),
                num(r.model),
                opt(r.model_std_error),
                num(r.error),
                r.near_money.to_string(),
                r.within_spread.map(|b| b.to_string()).unwrap_or_default(),
            ]);
        }
        out.add(Some(p), table.into_string());
    }
    Ok(())
}

fn martingale(a: &MartingaleArgs, out: &mut Outputs) -> Result<()> {
    check_maturities(&a.maturities)?;
    let cfg = a.mc.config()?;
    let (params, curve) = load_model(&a.model)?;
    let inputs = json!({ "params": params, "curve": curve, "maturities": a.maturities, "mc": cfg });
    let meta = Meta::new("martingale-check", Some(cfg.seed), &inputs)?;
    let mut table = Table::new(&meta, &["T", "ratio", "std_error", "z"]);
    for &t in &a.maturities {
        let p = martingale_check(&params, &curve, t, &cfg)?;
        let z = if p.std_error > 0.0 { (p.value - 1.0) / p.std_error } else { 0.0 };
        table.row(&[num(t), num(p.value), num(p.std_error), num(z)]);
    }
    out.add(a.out.as_deref(), table.into_string());
    Ok(())
}

fn run(cli: &Cli) -> Result<()> {
    if let Some(n) = cli.threads {
        if n == 0 {
            bail!(invalid("--threads must be at least 1"));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| anyhow!("thread pool: {e}"))?;
    }
    let mut out = Outputs::default();
    match &cli.command {
        Command::Strip(a) => strip(a, &mut out)?,
        Command::PriceVix(a) => price_vix(a, &mut out)?,
        Command::PriceSpx(a) => price_spx(a, &mut out)?,
        Command::Smile(a) => smile(a, &mut out)?,
        Command::Calibrate(a) => calibrate_cmd(a, &mut out)?,
        Command::MartingaleCheck(a) => martingale(a, &mut out)?,
    }
    out.commit().context("writing output")
}

fn exit_code(err: &anyhow::Error) -> u8 {
    for cause in err.chain() {
        if cause.downcast_ref::<Invalid>().is_some() {
            return 2;
        }
        if let Some(e) = cause.downcast_ref::<Error>() {
            return match e {
                Error::InvalidDomain(_)
                | Error::InvalidParameter(_)
                | Error::Parse { .. }
                | Error::InsufficientQuotes { .. }
                | Error::RegimeMismatch(_)
                | Error::Io(_) => 2,
                Error::OutOfBoundsPrice { .. }
                | Error::DegenerateNormalization { .. }
                | Error::OutOfHorizon { .. }
                | Error::NegativePolynomial { .. }
                | Error::FitFailure { .. }
                | Error::NegativeStrippedVariance { .. }
                | Error::Unpriceable(_) => 3,
            };
        }
    }
    1
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use clap::CommandFactory;

    #[test]
    fn cli_definition_is_consistent() {
        Cli::command().debug_assert();
    }

    #[test]
    fn strike_ranges() {
        assert_eq!(parse_strikes("10..13").unwrap().0, vec![10.0, 11.0, 12.0, 13.0]);
        assert_eq!(parse_strikes("1..2:0.5").unwrap().0, vec![1.0, 1.5, 2.0]);
        assert_eq!(parse_strikes("95, 100,105").unwrap().0, vec![95.0, 100.0, 105.0]);
        assert!(parse_strikes("3..1").is_err());
        assert!(parse_strikes("0,1").is_err());
        assert!(parse_strikes("1..2:0").is_err());
        assert!(parse_strikes("abc").is_err());
    }

    #[test]
    fn error_classes() {
        assert_eq!(exit_code(&invalid("x")), 2);
        assert_eq!(exit_code(&anyhow::Error::new(Error::InvalidParameter("x".into()))), 2);
        assert_eq!(exit_code(&anyhow::Error::new(Error::Unpriceable(vec![])).context("calibrating")), 3);
        assert_eq!(exit_code(&anyhow!("disk full")), 1);
    }
}
