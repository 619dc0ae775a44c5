//! `spinstab`: run stochastic-stability checks and quenched estimates.
//!
//! Exit codes: 0 all checks pass, 1 a check failed, 2 usage or
//! configuration error, 3 capacity cap exceeded.

mod config;
mod output;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::json;
use spinstab_core::mc::{mc_quenched_expectation, McPlan};
use spinstab_core::quenched::{
    delta_g_via_beta, delta_g_via_iden, delta_g_via_lambda_fd, delta_g_rhs, quenched_expectation,
    quenched_free_energy, quenched_log_partition,
};
use spinstab_core::suite::{run_all, Scale, SuiteOptions, CRITERIA};
use spinstab_core::verify::{
    check_sumlaw, check_theorem1, check_theorem2, fluctuation_decomposition, rate_sweep, wick_selfcheck,
    CheckReport, Tolerance, VerifyOptions,
};
use spinstab_core::observable::format;
use spinstab_core::{parse, replica_count, BetaGrid, Error, Estimate, ModelSpec, OverlapPolynomial, RunPlan};

use crate::config::Config;
use crate::output::float;

#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Capacity(String),
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        match e {
            Error::Capacity { .. } => CliError::Capacity(e.to_string()),
            _ => CliError::Usage(e.to_string()),
        }
    }
}

#[derive(Parser)]
#[command(name = "spinstab", version, about = "Stochastic-stability checks for Gaussian spin glasses")]
struct Cli {
    /// Worker threads (default: all cores).
    #[arg(long, global = true, env = "SPINSTAB_THREADS")]
    threads: Option<usize>,
    /// Flat key = value file; flags override it.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one identity check and emit a report.
    Verify(VerifyArgs),
    /// Quenched means, free energies and ΔG estimates over β/λ grids.
    Estimate(EstimateArgs),
    /// Stability-bound integral across sizes with its log-log slope.
    SweepRate(SweepArgs),
    /// Run the acceptance suite.
    Selftest(SelftestArgs),
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum CheckName {
    Theorem1,
    Theorem2,
    Sumlaw,
    Decomposition,
    Wick,
}

#[derive(Args)]
struct Common {
    /// Model descriptor, e.g. sk:8, ea:3x3, ea:4x4:free.
    #[arg(long)]
    model: Option<String>,
    /// Observable polynomial, e.g. "q1,2" or "2 q1,2*q2,3 - q1,2^2".
    #[arg(long)]
    g: Option<String>,
    #[arg(long)]
    samples: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    out_json: Option<PathBuf>,
    #[arg(long)]
    out_csv: Option<PathBuf>,
}

#[derive(Args)]
struct VerifyArgs {
    #[arg(value_enum)]
    check: CheckName,
    #[command(flatten)]
    common: Common,
    #[arg(long)]
    beta: Option<f64>,
    #[arg(long)]
    lambda: Option<f64>,
    /// β₁:β₂ for theorem1.
    #[arg(long)]
    beta_range: Option<String>,
    /// Odd number of Simpson nodes.
    #[arg(long)]
    nodes: Option<usize>,
    /// Tolerance in combined standard errors.
    #[arg(long)]
    sigmas: Option<f64>,
    /// sup|G| for the stability bound.
    #[arg(long)]
    sup_norm: Option<f64>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum Backend {
    Exact,
    Mc,
}

#[derive(Args)]
struct EstimateArgs {
    #[command(flatten)]
    common: Common,
    #[arg(long)]
    beta: Option<f64>,
    /// a:b:count, inclusive and equally spaced.
    #[arg(long)]
    beta_grid: Option<String>,
    #[arg(long)]
    lambda: Option<f64>,
    #[arg(long)]
    lambda_grid: Option<String>,
    /// Comma list of mean, log_partition, free_energy, delta_g_iden,
    /// delta_g_beta, delta_g_lambda_fd, delta_g_rhs.
    #[arg(long)]
    estimator: Option<String>,
    #[arg(long, value_enum)]
    backend: Option<Backend>,
    #[arg(long)]
    replicas: Option<u32>,
    #[arg(long)]
    sweeps: Option<u64>,
    #[arg(long)]
    burn_in: Option<u64>,
    #[arg(long)]
    thinning: Option<u64>,
}

#[derive(Args)]
struct SweepArgs {
    #[command(flatten)]
    common: Common,
    /// Comma list of model descriptors, e.g. sk:4,sk:6,sk:8.
    #[arg(long)]
    models: Option<String>,
    #[arg(long)]
    beta_range: Option<String>,
    #[arg(long)]
    nodes: Option<usize>,
    #[arg(long)]
    lambda: Option<f64>,
}

#[derive(Args)]
struct SelftestArgs {
    /// Print criterion names without running them.
    #[arg(long)]
    list: bool,
    /// Use the full acceptance sample counts.
    #[arg(long)]
    full: bool,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, hide = true)]
    mutate_delta_g: bool,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(CliError::Usage(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(2)
        }
        Err(CliError::Capacity(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(3)
        }
    }
}

fn run(cli: Cli) -> Result<bool, CliError> {
    let cfg = match &cli.config {
        Some(p) => Config::load(p)?,
        None => Config::default(),
    };
    if let Some(n) = cfg.pick(cli.threads, "threads")? {
        if n == 0 {
            return Err(CliError::Usage("--threads must be >= 1".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| CliError::Usage(format!("thread pool: {e}")))?;
    }
    match cli.command {
        Command::Verify(a) => verify(&cfg, a),
        Command::Estimate(a) => estimate(&cfg, a),
        Command::SweepRate(a) => sweep_rate(&cfg, a),
        Command::Selftest(a) => selftest(a),
    }
}

fn parse_model(s: &str) -> Result<ModelSpec, CliError> {
    Ok(s.parse::<ModelSpec>()?)
}

fn observable(cfg: &Config, c: &Common) -> Result<OverlapPolynomial, CliError> {
    let text = cfg.pick(c.g.clone(), "g")?.unwrap_or_else(|| "q1,2".to_string());
    Ok(parse(&text)?)
}

fn range(text: &str, flag: &str) -> Result<(f64, f64), CliError> {
    let bad = || CliError::Usage(format!("{flag} expects a:b, got '{text}'"));
    let (a, b) = text.split_once(':').ok_or_else(bad)?;
    Ok((a.trim().parse().map_err(|_| bad())?, b.trim().parse().map_err(|_| bad())?))
}

fn grid(text: &str, flag: &str) -> Result<Vec<f64>, CliError> {
    let bad = || CliError::Usage(format!("{flag} expects a:b:count, got '{text}'"));
    let parts: Vec<&str> = text.split(':').collect();
    let [a, b, k] = parts.as_slice() else {
        return Err(bad());
    };
    let (a, b): (f64, f64) = (a.trim().parse().map_err(|_| bad())?, b.trim().parse().map_err(|_| bad())?);
    let k: usize = k.trim().parse().map_err(|_| bad())?;
    match k {
        0 => Err(bad()),
        1 => Ok(vec![a]),
        _ => Ok((0..k).map(|i| a + (b - a) * i as f64 / (k - 1) as f64).collect()),
    }
}

fn out_paths(cfg: &Config, c: &Common) -> Result<(Option<PathBuf>, Option<PathBuf>), CliError> {
    Ok((cfg.pick(c.out_json.clone(), "out_json")?, cfg.pick(c.out_csv.clone(), "out_csv")?))
}

fn summarize(r: &CheckReport) {
    eprintln!(
        "{}: {} (lhs {} ± {:.2e}, rhs {} ± {:.2e}, |d| {:.3e}, tol {:.3e}{})",
        r.name,
        r.verdict.as_str(),
        r.lhs.mean,
        r.lhs.stderr,
        r.rhs.mean,
        r.rhs.stderr,
        r.discrepancy,
        r.tolerance,
        r.sign_convention
            .as_ref()
            .map(|s| format!(", sign {s}"))
            .unwrap_or_default()
    );
    for c in r.subchecks.iter().filter(|c| !c.passed()) {
        let tag = if c.asserted { "fail" } else { "fail (reported only)" };
        eprintln!("  {}: {tag} |d| {:.3e}, tol {:.3e}", c.name, c.discrepancy, c.tolerance);
    }
}

fn emit(report: &CheckReport, json_path: Option<&Path>, csv_path: Option<&Path>) -> Result<bool, CliError> {
    summarize(report);
    output::write_json(json_path, &output::report_json(report))?;
    if let Some(p) = csv_path {
        output::report_csv(Some(p), report)?;
    }
    Ok(report.all_passed())
}

fn verify(cfg: &Config, a: VerifyArgs) -> Result<bool, CliError> {
    let c = &a.common;
    let seed = cfg.require(c.seed, "seed", "--seed")?;
    let (json_path, csv_path) = out_paths(cfg, c)?;
    let mut opts = VerifyOptions::default();
    if let Some(s) = cfg.pick(a.sigmas, "sigmas")? {
        opts.tolerance = Tolerance::sigmas(s);
    }
    opts.sup_norm = cfg.pick(a.sup_norm, "sup_norm")?;
    let g = observable(cfg, c)?;
    let lambda = cfg.pick(a.lambda, "lambda")?.unwrap_or(0.0);
    let model = || -> Result<ModelSpec, CliError> { parse_model(&cfg.require(c.model.clone(), "model", "--model")?) };
    let samples = |default| -> Result<usize, CliError> { Ok(cfg.pick(c.samples, "samples")?.unwrap_or(default)) };
    let beta = || cfg.require(a.beta, "beta", "--beta");
    let report = match a.check {
        CheckName::Theorem2 => check_theorem2(&model()?, &g, beta()?, lambda, samples(10_000)?, seed, &opts)?,
        CheckName::Theorem1 => {
            let (b1, b2) = range(&cfg.require(a.beta_range.clone(), "beta_range", "--beta-range")?, "--beta-range")?;
            let nodes = cfg.pick(a.nodes, "nodes")?.unwrap_or(17);
            let grid = BetaGrid::new(b1, b2, nodes)?;
            check_theorem1(&model()?, &g, &grid, lambda, samples(10_000)?, seed, &opts)?
        }
        CheckName::Sumlaw => {
            let lambda = cfg.require(a.lambda, "lambda", "--lambda")?;
            check_sumlaw(&model()?, &g, beta()?, lambda, samples(10_000)?, seed, &opts)?
        }
        CheckName::Decomposition => fluctuation_decomposition(&model()?, &g, beta()?, samples(1_000)?, seed)?,
        CheckName::Wick => wick_selfcheck(samples(1_000_000)?, seed)?,
    };
    emit(&report, json_path.as_deref(), csv_path.as_deref())
}

const ESTIMATORS: [&str; 7] = [
    "mean",
    "log_partition",
    "free_energy",
    "delta_g_iden",
    "delta_g_beta",
    "delta_g_lambda_fd",
    "delta_g_rhs",
];

fn estimate(cfg: &Config, a: EstimateArgs) -> Result<bool, CliError> {
    let c = &a.common;
    let seed = cfg.require(c.seed, "seed", "--seed")?;
    let model = parse_model(&cfg.require(c.model.clone(), "model", "--model")?)?;
    let g = observable(cfg, c)?;
    let n = cfg.pick(c.samples, "samples")?.unwrap_or(10_000);
    let betas = match (cfg.pick(a.beta_grid.clone(), "beta_grid")?, cfg.pick(a.beta, "beta")?) {
        (Some(t), _) => grid(&t, "--beta-grid")?,
        (None, Some(b)) => vec![b],
        (None, None) => return Err(CliError::Usage("missing required flag --beta (or --beta-grid)".into())),
    };
    let lambdas = match (cfg.pick(a.lambda_grid.clone(), "lambda_grid")?, cfg.pick(a.lambda, "lambda")?) {
        (Some(t), _) => grid(&t, "--lambda-grid")?,
        (None, l) => vec![l.unwrap_or(0.0)],
    };
    let estimators: Vec<String> = cfg
        .pick(a.estimator.clone(), "estimator")?
        .unwrap_or_else(|| "mean".into())
        .split(',')
        .map(|s| s.trim().to_string())
        .collect();
    if let Some(bad) = estimators.iter().find(|e| !ESTIMATORS.contains(&e.as_str())) {
        return Err(CliError::Usage(format!(
            "unknown estimator '{bad}'; expected one of {}",
            ESTIMATORS.join(", ")
        )));
    }
    let backend = match a.backend {
        Some(b) => b,
        None => match cfg.get("backend") {
            None | Some("exact") => Backend::Exact,
            Some("mc") => Backend::Mc,
            Some(other) => return Err(CliError::Usage(format!("config key backend: unknown backend '{other}'"))),
        },
    };
    if backend == Backend::Mc && estimators.iter().any(|e| e != "mean") {
        return Err(CliError::Usage("the mc backend supports only --estimator mean".into()));
    }
    let mc_plan = McPlan {
        burn_in: cfg.pick(a.burn_in, "burn_in")?,
        thinning: cfg.pick(a.thinning, "thinning")?.unwrap_or(1),
        ..McPlan::new(
            cfg.pick(a.replicas, "replicas")?.unwrap_or_else(|| replica_count(&g)),
            cfg.pick(a.sweeps, "sweeps")?.unwrap_or(10_000),
            n,
            seed,
        )
    };
    let observable_text = format(&g);
    let mut rows = Vec::new();
    for &beta in &betas {
        for &lambda in &lambdas {
            let plan = RunPlan::new(model.clone(), beta, lambda, n, seed);
            for est in &estimators {
                let (label, e): (&str, Estimate) = match (backend, est.as_str()) {
                    (Backend::Mc, _) => ("mean", mc_quenched_expectation(&model, &g, beta, lambda, &mc_plan)?.estimate),
                    (_, "mean") => ("mean", quenched_expectation(&plan, &g)?),
                    (_, "log_partition") => ("log_partition", quenched_log_partition(&plan)?),
                    (_, "free_energy") => ("free_energy", quenched_free_energy(&plan)?.free_energy),
                    (_, "delta_g_iden") => ("delta_g_iden", delta_g_via_iden(&plan, &g)?),
                    (_, "delta_g_beta") => ("delta_g_beta", delta_g_via_beta(&plan, &g)?),
                    (_, "delta_g_lambda_fd") => ("delta_g_lambda_fd", delta_g_via_lambda_fd(&plan, &g)?),
                    (_, "delta_g_rhs") => ("delta_g_rhs", delta_g_rhs(&plan, &g)?),
                    _ => unreachable!("estimators validated above"),
                };
                let obs = if matches!(label, "log_partition" | "free_energy") { "" } else { observable_text.as_str() };
                rows.push(vec![
                    model.to_string(),
                    float(beta),
                    float(lambda),
                    obs.to_string(),
                    label.to_string(),
                    float(e.mean),
                    float(e.stderr),
                    e.n_samples.to_string(),
                    seed.to_string(),
                ]);
            }
        }
    }
    let (_, csv_path) = out_paths(cfg, c)?;
    output::write_csv(
        csv_path.as_deref(),
        &["model", "beta", "lambda", "observable", "estimator", "mean", "stderr", "n", "seed"],
        &rows,
    )?;
    Ok(true)
}

fn sweep_rate(cfg: &Config, a: SweepArgs) -> Result<bool, CliError> {
    let c = &a.common;
    let seed = cfg.require(c.seed, "seed", "--seed")?;
    let models = cfg
        .require(a.models.clone(), "models", "--models")?
        .split(',')
        .map(|m| parse_model(m.trim()))
        .collect::<Result<Vec<_>, _>>()?;
    let g = observable(cfg, c)?;
    let (b1, b2) = range(&cfg.require(a.beta_range.clone(), "beta_range", "--beta-range")?, "--beta-range")?;
    let grid = BetaGrid::new(b1, b2, cfg.pick(a.nodes, "nodes")?.unwrap_or(17))?;
    let lambda = cfg.pick(a.lambda, "lambda")?.unwrap_or(0.0);
    let n = cfg.pick(c.samples, "samples")?.unwrap_or(10_000);
    let report = rate_sweep(&models, &g, &grid, lambda, n, seed, &VerifyOptions::default())?;
    summarize(&report);
    let (json_path, csv_path) = out_paths(cfg, c)?;
    let table = report.table.as_ref().expect("rate sweep has a table");
    let verdict = |name: String| {
        report
            .subcheck(&name)
            .map_or("", |s| s.verdict.as_str())
            .to_string()
    };
    let rows: Vec<Vec<String>> = models
        .iter()
        .zip(&table.rows)
        .map(|(m, r)| {
            let mut row = vec![m.to_string()];
            row.extend(r.iter().map(|&x| float(x)));
            row.push(verdict(format!("endpoint_{m}")));
            row.push(verdict(format!("bound_{m}")));
            row
        })
        .collect();
    let mut header = vec!["model"];
    header.extend(table.columns.iter().map(String::as_str));
    header.extend(["endpoint_verdict", "bound_verdict"]);
    output::write_csv(csv_path.as_deref(), &header, &rows)?;
    if let Some(p) = json_path.as_deref() {
        let mut v = output::report_json(&report);
        v["slope"] = json!(report.values["slope"]);
        v["slope_stderr"] = json!(report.values["slope_stderr"]);
        output::write_json(Some(p), &v)?;
    }
    Ok(report.all_passed())
}

fn selftest(a: SelftestArgs) -> Result<bool, CliError> {
    if a.list {
        for (id, name) in CRITERIA {
            println!("{id:>2} {name}");
        }
        return Ok(true);
    }
    let opts = SuiteOptions {
        seed: a.seed.unwrap_or(1),
        mutate_delta_g: a.mutate_delta_g,
        ..SuiteOptions::new(if a.full { Scale::Full } else { Scale::Reduced })
    };
    let outcomes = run_all(&opts, |o| {
        let verdict = if o.passed { "PASS" } else { "FAIL" };
        println!("{:>2} {:<26} {verdict} ({:.1} s) {}", o.id, o.name, o.elapsed_s, o.detail);
    });
    let failed = outcomes.iter().filter(|o| !o.passed).count();
    println!("{} passed, {failed} failed", outcomes.len() - failed);
    Ok(failed == 0)
}
