//! Command-line front end.

use crate::baselines::{
    asmussen_kroese, crude_mc, default_isve_theta, gt_default_tilt, gt_right_tail, isve, variance_boosted, Side,
};
use crate::config::ModelSpec;
use crate::error::{Error, Result};
use crate::harness::{run_table, TABLES};
use crate::lefttail::{estimate_cdf_with_tilt, sample_conditional, write_paths_csv, CdfKernel, PdfKernel};
use crate::model::{BlackScholesSpec, SlnModel};
use crate::optimize::{solve_left_tilt, solve_right_tilt};
use crate::righttail::{estimate_right_tail_with_tilts, solve_all_right_tilts, StratumReport};
use crate::rng_qmc::{convergence_slope, Kernel, StreamKind, UniformStream};
use crate::stats::{format_sci_log, LogAccumulator, LogEstimate};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::json;
use std::ffi::OsString;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

pub const SCHEMA: &str = "sln-raresim/1";

pub const EXIT_RUNTIME: i32 = 1;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_MODEL: i32 = 3;

#[derive(Parser, Debug)]
#[command(name = "sln-raresim", version, about = "Rare-event estimators for sums of dependent log-normals")]
pub struct Cli {
    /// Worker threads (default: all cores). Results do not depend on this.
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Estimate P(S <= g), the density of S at g, or P(S > g).
    Estimate(EstimateArgs),
    /// Reproduce a built-in table as CSV.
    #[command(after_help = table_help())]
    Table(TableArgs),
    /// Sample price paths conditional on a low arithmetic average.
    Paths(PathsArgs),
    /// RE against n on a grid of sample sizes, with the fitted slope.
    Convergence(ConvergenceArgs),
    /// Print the optimized tilt for the left tail or one right-tail stratum.
    Tilt(TiltArgs),
}

fn table_help() -> String {
    let mut s = String::from("Tables:\n");
    for t in TABLES {
        s.push_str(&format!("  {:<9} {}\n", t.id, t.caption));
    }
    s
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum)]
pub enum Quantity {
    Cdf,
    Pdf,
    RightTail,
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum)]
pub enum EstimatorChoice {
    New,
    Simple,
    Crude,
    VarBoost,
    Ak,
    Isve,
    Gt,
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum)]
pub enum StreamChoice {
    Pseudo,
    Sobol,
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum)]
pub enum TiltSide {
    Left,
    Right,
}

/// Accepts integers and float notation such as `1e6`.
fn parse_count(s: &str) -> std::result::Result<u64, String> {
    if let Ok(v) = s.parse::<u64>() {
        return Ok(v);
    }
    let v: f64 = s.parse().map_err(|_| format!("not a count: {s}"))?;
    if v >= 0.0 && v.fract() == 0.0 && v < 1.8e19 {
        Ok(v as u64)
    } else {
        Err(format!("not a nonnegative integer: {s}"))
    }
}

/// `10..16` or `2^10..2^16`.
fn parse_grid(s: &str) -> std::result::Result<(u32, u32), String> {
    let (a, b) = s.split_once("..").ok_or_else(|| format!("expected LO..HI, got {s}"))?;
    let exp = |t: &str| -> std::result::Result<u32, String> {
        t.trim().trim_start_matches("2^").parse::<u32>().map_err(|_| format!("bad exponent {t}"))
    };
    let (lo, hi) = (exp(a)?, exp(b)?);
    if lo > hi || hi > 40 || hi - lo < 1 {
        return Err(format!("bad grid {s}"));
    }
    Ok((lo, hi))
}

#[derive(Args, Debug)]
pub struct EstimateArgs {
    /// JSON model file.
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long, value_enum)]
    pub quantity: Quantity,
    #[arg(long)]
    pub gamma: f64,
    /// Total replications (split across shifts for --stream sobol).
    #[arg(long, default_value = "1e6", value_parser = parse_count)]
    pub n: u64,
    #[arg(long, value_enum, default_value = "pseudo")]
    pub stream: StreamChoice,
    /// Random shifts for --stream sobol.
    #[arg(long, default_value_t = 100)]
    pub shifts: u64,
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    #[arg(long, value_enum, default_value = "new")]
    pub estimator: EstimatorChoice,
    /// var-boost / isve parameter (default 1 - 1/ln^2 gamma).
    #[arg(long)]
    pub theta: Option<f64>,
    #[arg(long, conflicts_with = "csv")]
    pub json: bool,
    #[arg(long)]
    pub csv: bool,
}

#[derive(Args, Debug)]
pub struct TableArgs {
    #[arg(long)]
    pub table: String,
    #[arg(long, default_value = "1e6", value_parser = parse_count)]
    pub n: u64,
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
}

#[derive(Args, Debug)]
pub struct PathsArgs {
    /// e.g. X0=50,r=0.07,sigma=0.25,T=0.3333,d=88
    #[arg(long)]
    pub bs: String,
    #[arg(long)]
    pub strike: f64,
    #[arg(long, value_parser = parse_count)]
    pub paths: u64,
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
}

#[derive(Args, Debug)]
pub struct ConvergenceArgs {
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long, value_enum)]
    pub quantity: Quantity,
    #[arg(long)]
    pub gamma: f64,
    /// Exponent range of the sample-size grid, `10..16` or `2^10..2^16`.
    #[arg(long, default_value = "10..16", value_parser = parse_grid)]
    pub ngrid: (u32, u32),
    #[arg(long, default_value_t = 30)]
    pub shifts: u64,
    #[arg(long, value_enum, default_value = "sobol")]
    pub stream: StreamChoice,
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
}

#[derive(Args, Debug)]
pub struct TiltArgs {
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long)]
    pub gamma: f64,
    #[arg(long, value_enum, default_value = "left")]
    pub side: TiltSide,
    /// Right-tail stratum, 1-based.
    #[arg(long, default_value_t = 1)]
    pub k: usize,
}

pub fn exit_code(e: &Error) -> i32 {
    match e {
        Error::Config(_) => EXIT_CONFIG,
        Error::DimensionMismatch { .. }
        | Error::NotSymmetric { .. }
        | Error::NotPositiveDefinite { .. }
        | Error::InvalidParameter(_)
        | Error::NotIid
        | Error::EmptyRegion
        | Error::Unbounded => EXIT_MODEL,
        _ => EXIT_RUNTIME,
    }
}

/// Parses `args` (including the program name) and runs the command,
/// writing results to `out` and diagnostics to `err`. Returns the exit code.
pub fn run<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_CONFIG } else { 0 };
            if code == 0 {
                let _ = write!(out, "{}", e.render());
            } else {
                let _ = write!(err, "{}", e.render());
            }
            return code;
        }
    };
    if let Some(t) = cli.threads {
        // a second call in the same process keeps the first pool
        let _ = rayon::ThreadPoolBuilder::new().num_threads(t.max(1)).build_global();
    }
    let res = match &cli.command {
        Command::Estimate(a) => cmd_estimate(a, out),
        Command::Table(a) => cmd_table(a, out),
        Command::Paths(a) => cmd_paths(a, out),
        Command::Convergence(a) => cmd_convergence(a, out),
        Command::Tilt(a) => cmd_tilt(a, out),
    };
    match res {
        Ok(()) => 0,
        Err(e) => {
            let _ = writeln!(err, "error: {e}");
            exit_code(&e)
        }
    }
}

fn check_gamma_arg(gamma: f64) -> Result<()> {
    if gamma > 0.0 && gamma.is_finite() {
        Ok(())
    } else {
        Err(Error::Config(format!("--gamma must be positive and finite, got {gamma}")))
    }
}

fn load_model(path: &Path) -> Result<SlnModel> {
    ModelSpec::load(path)?.build()
}

/// Everything `estimate` needs besides the model.
#[derive(Debug, Clone, Copy)]
pub struct EstimateRequest {
    pub quantity: Quantity,
    pub estimator: EstimatorChoice,
    pub gamma: f64,
    pub n: u64,
    pub stream: StreamChoice,
    pub shifts: u64,
    pub seed: u64,
    pub theta: Option<f64>,
}

impl From<&EstimateArgs> for EstimateRequest {
    fn from(a: &EstimateArgs) -> Self {
        EstimateRequest {
            quantity: a.quantity,
            estimator: a.estimator,
            gamma: a.gamma,
            n: a.n,
            stream: a.stream,
            shifts: a.shifts,
            seed: a.seed,
            theta: a.theta,
        }
    }
}

/// Outcome of `estimate`.
#[derive(Debug, Clone)]
pub struct EstimateReport {
    pub estimate: LogEstimate,
    pub strata: Option<Vec<StratumReport>>,
    pub note: Option<String>,
}

/// Runs one estimator. For Sobol streams the total `n` is split evenly over
/// `shifts` independent random shifts, and the error comes from the spread
/// across shifts.
pub fn estimate(model: &SlnModel, a: &EstimateRequest) -> Result<EstimateReport> {
    use EstimatorChoice as E;
    let t0 = Instant::now();
    let d = model.dim();
    let g = a.gamma;
    let theta = a.theta.unwrap_or_else(|| default_isve_theta(g));
    let bad = || {
        Error::Config(format!("estimator {:?} does not apply to quantity {:?}", a.estimator, a.quantity))
    };
    let mut strata = None;
    let mut note = None;
    // prepare once, then run per stream
    let run: Box<dyn Fn(&UniformStream, u64) -> Result<LogEstimate>> = match (a.quantity, a.estimator) {
        (Quantity::Cdf, E::New) => {
            let tilt = solve_left_tilt(model, g)?;
            Box::new(move |s, n| estimate_cdf_with_tilt(model, g, &tilt, n, s))
        }
        (Quantity::Cdf, E::Simple) => {
            Box::new(move |s, n| crate::lefttail::estimate_cdf_simple(model, g, n, s))
        }
        (Quantity::Cdf, E::Crude) => Box::new(move |s, n| crude_mc(model, g, Side::Left, n, s)),
        (Quantity::Pdf, E::New) => {
            let tilt = solve_left_tilt(model, g)?;
            let kernel = PdfKernel::new(model, g, tilt.mu_star.clone())?;
            let fallback = !tilt.converged;
            Box::new(move |s, n| {
                let mut e = kernel_estimate(&kernel, s, n)?;
                e.flags.optimizer_fallback = fallback;
                Ok(e)
            })
        }
        (Quantity::RightTail, E::New) => {
            let tilts = solve_all_right_tilts(model, g)?;
            if a.stream == StreamChoice::Pseudo {
                let r = estimate_right_tail_with_tilts(model, g, a.n, &UniformStream::pseudo(a.seed, d), &tilts)?;
                strata = Some(r.strata);
                let mut e = r.estimate;
                e.wall_seconds = t0.elapsed().as_secs_f64();
                return Ok(EstimateReport { estimate: e, strata, note });
            }
            Box::new(move |s, n| Ok(estimate_right_tail_with_tilts(model, g, n, s, &tilts)?.estimate))
        }
        (Quantity::RightTail, E::Crude) => Box::new(move |s, n| crude_mc(model, g, Side::Right, n, s)),
        (Quantity::RightTail, E::VarBoost) => Box::new(move |s, n| variance_boosted(model, g, theta, n, s)),
        (Quantity::RightTail, E::Ak) => {
            if !model.is_iid() {
                return Err(Error::NotIid);
            }
            Box::new(move |s, n| asmussen_kroese(model, g, n, &s.with_dim(d.saturating_sub(1).max(1))?))
        }
        (Quantity::RightTail, E::Isve) => {
            Box::new(move |s, n| Ok(isve(model, g, theta, n / 2, n - n / 2, s)?.estimate))
        }
        (Quantity::RightTail, E::Gt) => {
            let mu = gt_default_tilt(model, g)?;
            note = Some("single tilt: asymptotic tilt of the stratum with the largest marginal tail".into());
            Box::new(move |s, n| gt_right_tail(model, g, &mu, n, s))
        }
        _ => return Err(bad()),
    };
    let mut estimate = match a.stream {
        StreamChoice::Pseudo => run(&UniformStream::pseudo(a.seed, d), a.n)?,
        StreamChoice::Sobol => {
            if a.shifts < 2 {
                return Err(Error::Config("--shifts must be at least 2".into()));
            }
            let per = a.n.div_ceil(a.shifts);
            let mut outer = LogAccumulator::new();
            let mut flags = crate::stats::EstimateFlags::default();
            for r in 0..a.shifts {
                let e = run(&UniformStream::sobol(d, a.seed, r)?, per)?;
                flags.optimizer_fallback |= e.flags.optimizer_fallback;
                flags.empty_stratum |= e.flags.empty_stratum;
                outer.push_log(e.log_mean, e.sign);
            }
            let mut e = LogEstimate::from_accumulator(&outer, 0.0);
            e.n = per * a.shifts;
            e.flags.optimizer_fallback = flags.optimizer_fallback;
            e.flags.empty_stratum = flags.empty_stratum;
            e
        }
    };
    estimate.wall_seconds = t0.elapsed().as_secs_f64();
    Ok(EstimateReport { estimate, strata, note })
}

fn kernel_estimate<K: Kernel>(k: &K, s: &UniformStream, n: u64) -> Result<LogEstimate> {
    let t0 = Instant::now();
    let acc = crate::rng_qmc::accumulate(k, s, 0, n)?;
    Ok(LogEstimate::from_accumulator(&acc, t0.elapsed().as_secs_f64()))
}

fn quantity_name(q: Quantity) -> &'static str {
    match q {
        Quantity::Cdf => "cdf",
        Quantity::Pdf => "pdf",
        Quantity::RightTail => "right-tail",
    }
}

fn estimator_name(e: EstimatorChoice) -> &'static str {
    match e {
        EstimatorChoice::New => "new",
        EstimatorChoice::Simple => "simple",
        EstimatorChoice::Crude => "crude",
        EstimatorChoice::VarBoost => "var-boost",
        EstimatorChoice::Ak => "ak",
        EstimatorChoice::Isve => "isve",
        EstimatorChoice::Gt => "gt",
    }
}

fn finite_or_null(v: f64) -> serde_json::Value {
    if v.is_finite() {
        json!(v)
    } else {
        serde_json::Value::Null
    }
}

fn cmd_estimate(a: &EstimateArgs, out: &mut dyn Write) -> Result<()> {
    check_gamma_arg(a.gamma)?;
    let model = load_model(&a.model)?;
    let r = estimate(&model, &EstimateRequest::from(a))?;
    let e = &r.estimate;
    let sci = format_sci_log(e.log_mean, e.sign);
    let stream = match a.stream {
        StreamChoice::Pseudo => "pseudo",
        StreamChoice::Sobol => "sobol",
    };
    if a.json {
        let mut v = json!({
            "schema": SCHEMA,
            "command": "estimate",
            "quantity": quantity_name(a.quantity),
            "estimator": estimator_name(a.estimator),
            "gamma": a.gamma,
            "seed": a.seed,
            "stream": stream,
            "estimate": sci,
            "log10_estimate": finite_or_null(e.log10_mean()),
            "sign": e.sign,
            "re_percent": finite_or_null(e.re_percent),
            "n": e.n,
            "flags": e.flags,
            "wnrv": finite_or_null(e.wnrv()),
            "wall_seconds": e.wall_seconds,
        });
        if a.stream == StreamChoice::Sobol {
            v["shifts"] = json!(a.shifts);
        }
        if matches!(a.estimator, EstimatorChoice::VarBoost | EstimatorChoice::Isve) {
            v["theta"] = json!(a.theta.unwrap_or_else(|| default_isve_theta(a.gamma)));
        }
        if let Some(s) = &r.strata {
            v["strata"] = serde_json::to_value(s).map_err(|e| Error::Io(e.to_string()))?;
        }
        if let Some(n) = &r.note {
            v["note"] = json!(n);
        }
        writeln!(out, "{}", serde_json::to_string_pretty(&v).map_err(|e| Error::Io(e.to_string()))?)?;
    } else if a.csv {
        let mut w = csv::Writer::from_writer(&mut *out);
        w.write_record([
            "quantity", "estimator", "gamma", "estimate", "log10_estimate", "re_percent", "wnrv", "n", "seconds",
            "seed",
        ])?;
        w.write_record([
            quantity_name(a.quantity).to_string(),
            estimator_name(a.estimator).to_string(),
            a.gamma.to_string(),
            sci,
            format!("{:.10}", e.log10_mean()),
            format!("{:.4}", e.re_percent),
            format!("{:.3e}", e.wnrv()),
            e.n.to_string(),
            format!("{:.3}", e.wall_seconds),
            a.seed.to_string(),
        ])?;
        w.flush()?;
    } else {
        writeln!(out, "quantity   {}", quantity_name(a.quantity))?;
        writeln!(out, "estimator  {}", estimator_name(a.estimator))?;
        writeln!(out, "gamma      {}", a.gamma)?;
        writeln!(out, "estimate   {sci}")?;
        writeln!(out, "log10      {:.10}", e.log10_mean())?;
        writeln!(out, "RE%        {:.4}", e.re_percent)?;
        writeln!(out, "WNRV       {:.3e}", e.wnrv())?;
        writeln!(out, "n          {}", e.n)?;
        writeln!(out, "seconds    {:.3}", e.wall_seconds)?;
        let f = &e.flags;
        let mut flags = Vec::new();
        for (on, name) in [
            (f.optimizer_fallback, "optimizer_fallback"),
            (f.all_zero, "all_zero"),
            (f.no_variance, "no_variance"),
            (f.empty_stratum, "empty_stratum"),
        ] {
            if on {
                flags.push(name);
            }
        }
        writeln!(out, "flags      {}", if flags.is_empty() { "-".into() } else { flags.join(",") })?;
        if let Some(n) = &r.note {
            writeln!(out, "note       {n}")?;
        }
    }
    Ok(())
}

fn cmd_table(a: &TableArgs, out: &mut dyn Write) -> Result<()> {
    run_table(&a.table, a.n, a.seed)?.write_csv(out)
}

/// Parses `X0=50,r=0.07,sigma=0.25,T=0.3333,d=88`.
pub fn parse_bs(s: &str) -> Result<BlackScholesSpec> {
    let mut spec = BlackScholesSpec { x0: f64::NAN, r: f64::NAN, sigma: f64::NAN, t: f64::NAN, d: 0 };
    for part in s.split(',').map(str::trim).filter(|p| !p.is_empty()) {
        let (k, v) = part.split_once('=').ok_or_else(|| Error::Config(format!("expected key=value, got {part}")))?;
        let num = |v: &str| v.trim().parse::<f64>().map_err(|_| Error::Config(format!("bad number for {k}: {v}")));
        match k.trim() {
            "X0" | "x0" => spec.x0 = num(v)?,
            "r" => spec.r = num(v)?,
            "sigma" => spec.sigma = num(v)?,
            "T" | "t" => spec.t = num(v)?,
            "d" => spec.d = v.trim().parse().map_err(|_| Error::Config(format!("bad d: {v}")))?,
            other => return Err(Error::Config(format!("unknown key {other}"))),
        }
    }
    if spec.x0.is_nan() || spec.r.is_nan() || spec.sigma.is_nan() || spec.t.is_nan() || spec.d == 0 {
        return Err(Error::Config("--bs needs X0, r, sigma, T and d".into()));
    }
    Ok(spec)
}

fn cmd_paths(a: &PathsArgs, out: &mut dyn Write) -> Result<()> {
    let spec = parse_bs(&a.bs)?;
    let model = SlnModel::black_scholes(&spec)?;
    let gamma = (spec.d as f64 + 1.0) * a.strike - spec.x0;
    if !(gamma > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "strike {} is not above X0/(d+1); the conditioning event is empty",
            a.strike
        )));
    }
    let mut comments = vec![
        format!("black_scholes X0={} r={} sigma={} T={} d={}", spec.x0, spec.r, spec.sigma, spec.t, spec.d),
        format!("strike={} gamma={gamma}", a.strike),
        format!("seed={}", a.seed),
    ];
    let draws = if a.paths == 0 {
        Vec::new()
    } else {
        let stream = UniformStream::pseudo(a.seed, spec.d + 1);
        let s = sample_conditional(&model, gamma, a.paths as usize, &stream)?;
        comments.push(format!(
            "acceptance_rate={:.4} proposals={} accepted={}",
            s.acceptance_rate,
            s.proposals,
            s.draws.len()
        ));
        s.draws
    };
    write_paths_csv(out, spec.d, &draws, &comments)
}

fn cmd_convergence(a: &ConvergenceArgs, out: &mut dyn Write) -> Result<()> {
    check_gamma_arg(a.gamma)?;
    let model = load_model(&a.model)?;
    let tilt = solve_left_tilt(&model, a.gamma)?;
    let kind = match a.stream {
        StreamChoice::Pseudo => StreamKind::Pseudo,
        StreamChoice::Sobol => StreamKind::SobolShifted,
    };
    let grid = crate::rng_qmc::pow2_grid(a.ngrid.0, a.ngrid.1);
    let (points, slope) = match a.quantity {
        Quantity::Cdf => {
            let k = CdfKernel::new(&model, a.gamma, tilt.mu_star.clone())?;
            convergence_slope(&k, kind, &grid, a.shifts, a.seed)?
        }
        Quantity::Pdf => {
            let k = PdfKernel::new(&model, a.gamma, tilt.mu_star.clone())?;
            convergence_slope(&k, kind, &grid, a.shifts, a.seed)?
        }
        Quantity::RightTail => {
            return Err(Error::Config("convergence supports --quantity cdf or pdf".into()));
        }
    };
    writeln!(out, "# slope={slope:.4} shifts={} seed={}", a.shifts, a.seed)?;
    let mut w = csv::Writer::from_writer(&mut *out);
    w.write_record(["n", "re_percent"])?;
    for (n, re) in points {
        w.write_record([n.to_string(), format!("{re:.6e}")])?;
    }
    w.flush()?;
    Ok(())
}

fn cmd_tilt(a: &TiltArgs, out: &mut dyn Write) -> Result<()> {
    check_gamma_arg(a.gamma)?;
    let model = load_model(&a.model)?;
    let v = match a.side {
        TiltSide::Left => {
            let t = solve_left_tilt(&model, a.gamma)?;
            json!({"schema": SCHEMA, "command": "tilt", "side": "left", "gamma": a.gamma, "tilt": t})
        }
        TiltSide::Right => {
            if a.k == 0 || a.k > model.dim() {
                return Err(Error::Config(format!("--k must lie in 1..={}", model.dim())));
            }
            let t = solve_right_tilt(&model, a.gamma, a.k - 1)?;
            json!({"schema": SCHEMA, "command": "tilt", "side": "right", "gamma": a.gamma, "tilt": t})
        }
    };
    writeln!(out, "{}", serde_json::to_string_pretty(&v).map_err(|e| Error::Io(e.to_string()))?)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn counts_and_grids() {
        assert_eq!(parse_count("1e6"), Ok(1_000_000));
        assert_eq!(parse_count("2048"), Ok(2048));
        assert!(parse_count("1.5").is_err());
        assert!(parse_count("-3").is_err());
        assert_eq!(parse_grid("2^10..2^16"), Ok((10, 16)));
        assert_eq!(parse_grid("10..12"), Ok((10, 12)));
        assert!(parse_grid("12..10").is_err());
    }

    #[test]
    fn bs_spec_parsing() {
        let s = parse_bs("X0=50,r=0.07,sigma=0.25,T=0.3333,d=88").unwrap();
        assert_eq!(s.d, 88);
        assert_eq!(s.x0, 50.0);
        assert!(matches!(parse_bs("X0=50,r=0.07"), Err(Error::Config(_))));
        assert!(matches!(parse_bs("X0=50,q=1"), Err(Error::Config(_))));
    }

    #[test]
    fn usage_errors_exit_two() {
        let (mut o, mut e) = (Vec::new(), Vec::new());
        assert_eq!(run(["sln-raresim", "estimate"], &mut o, &mut e), EXIT_CONFIG);
        assert_eq!(run(["sln-raresim", "table", "--table", "x", "--n", "10"], &mut o, &mut e), EXIT_CONFIG);
    }
}
