//! Pass/fail checks of the stability bound, the zero-average identities and
//! the relations used to prove them.
//!
//! A [`CheckReport`] carries one primary comparison in its top-level fields
//! and any number of [`Comparison`] subchecks. A comparison is asserted or
//! reported only; the report's verdict is `Pass` iff every asserted
//! comparison, primary included, passes.

use std::collections::BTreeMap;
use std::time::Instant;

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::model::{covariance_scale, ModelSpec};
use crate::observable::{delta_g, format, replica_count, OverlapMonomial, OverlapPolynomial};
use crate::quenched::{
    delta_g_sample, per_sample, quadrature_series, quenched_expectation, BetaGrid, DeltaGEstimator, RunPlan,
    ThermalPieces,
};
use crate::rng::{Lane, StreamKey};
use crate::stats::{delta_method_stderr, linear_fit, mean, paired_difference, Estimate};
use crate::wick::{cholesky, sample_gaussian, wick_rhs, GaussianPolynomial};

/// Agreement tolerance `sigmas·se + floor`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Tolerance {
    pub sigmas: f64,
    pub floor: f64,
}

impl Default for Tolerance {
    fn default() -> Self {
        Tolerance {
            sigmas: 3.0,
            floor: 1e-10,
        }
    }
}

impl Tolerance {
    pub fn sigmas(sigmas: f64) -> Self {
        Tolerance {
            sigmas,
            ..Self::default()
        }
    }

    pub fn bound(&self, stderr: f64) -> f64 {
        self.sigmas * stderr + self.floor
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Verdict {
    Pass,
    Fail,
}

impl Verdict {
    pub fn from_bool(pass: bool) -> Self {
        if pass {
            Verdict::Pass
        } else {
            Verdict::Fail
        }
    }

    pub fn is_pass(self) -> bool {
        self == Verdict::Pass
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Verdict::Pass => "pass",
            Verdict::Fail => "fail",
        }
    }
}

/// One `lhs` vs `rhs` comparison; passes iff `discrepancy ≤ tolerance`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Comparison {
    pub name: String,
    pub lhs: Estimate,
    pub rhs: Estimate,
    pub discrepancy: f64,
    pub tolerance: f64,
    pub verdict: Verdict,
    pub asserted: bool,
}

impl Comparison {
    pub fn new(name: impl Into<String>, lhs: Estimate, rhs: Estimate, discrepancy: f64, tolerance: f64) -> Self {
        Comparison {
            name: name.into(),
            lhs,
            rhs,
            discrepancy,
            tolerance,
            verdict: Verdict::from_bool(discrepancy <= tolerance),
            asserted: true,
        }
    }

    /// `|a − b| ≤ tol(√(se_a² + se_b²))`.
    pub fn agreement(name: impl Into<String>, lhs: Estimate, rhs: Estimate, tol: Tolerance) -> Self {
        let d = (lhs.mean - rhs.mean).abs();
        Self::new(name, lhs, rhs, d, tol.bound(lhs.combined_stderr(&rhs)))
    }

    pub fn reported(mut self) -> Self {
        self.asserted = false;
        self
    }

    pub fn passed(&self) -> bool {
        self.verdict.is_pass()
    }
}

/// Rows of per-node or per-size data.
#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct Table {
    pub columns: Vec<String>,
    pub rows: Vec<Vec<f64>>,
}

impl Table {
    fn new(columns: &[&str]) -> Self {
        Table {
            columns: columns.iter().map(|c| c.to_string()).collect(),
            rows: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CheckReport {
    pub name: String,
    pub inputs: BTreeMap<String, String>,
    pub lhs: Estimate,
    pub rhs: Estimate,
    pub discrepancy: f64,
    pub tolerance: f64,
    pub verdict: Verdict,
    pub sign_convention: Option<String>,
    pub primary: Comparison,
    pub subchecks: Vec<Comparison>,
    pub estimates: BTreeMap<String, Estimate>,
    pub values: BTreeMap<String, f64>,
    pub table: Option<Table>,
    pub seed: u64,
    pub wall_time_s: f64,
}

impl CheckReport {
    fn assemble(
        name: &str,
        inputs: BTreeMap<String, String>,
        primary: Comparison,
        subchecks: Vec<Comparison>,
        seed: u64,
        started: Instant,
    ) -> Self {
        let pass = std::iter::once(&primary)
            .chain(&subchecks)
            .filter(|c| c.asserted)
            .all(Comparison::passed);
        CheckReport {
            name: name.to_string(),
            inputs,
            lhs: primary.lhs,
            rhs: primary.rhs,
            discrepancy: primary.discrepancy,
            tolerance: primary.tolerance,
            verdict: Verdict::from_bool(pass),
            sign_convention: None,
            primary,
            subchecks,
            estimates: BTreeMap::new(),
            values: BTreeMap::new(),
            table: None,
            seed,
            wall_time_s: started.elapsed().as_secs_f64(),
        }
    }

    pub fn all_passed(&self) -> bool {
        self.verdict.is_pass()
    }

    pub fn subcheck(&self, name: &str) -> Option<&Comparison> {
        self.subchecks.iter().find(|c| c.name == name)
    }

    /// Bit patterns of every numeric field except the wall time.
    pub fn numeric_fingerprint(&self) -> Vec<u64> {
        let mut out = Vec::new();
        let push_est = |e: &Estimate, out: &mut Vec<u64>| {
            out.extend([e.mean.to_bits(), e.stderr.to_bits(), e.n_samples as u64]);
        };
        for c in std::iter::once(&self.primary).chain(&self.subchecks) {
            push_est(&c.lhs, &mut out);
            push_est(&c.rhs, &mut out);
            out.extend([c.discrepancy.to_bits(), c.tolerance.to_bits()]);
        }
        for e in self.estimates.values() {
            push_est(e, &mut out);
        }
        out.extend(self.values.values().map(|v| v.to_bits()));
        if let Some(t) = &self.table {
            out.extend(t.rows.iter().flatten().map(|v| v.to_bits()));
        }
        out
    }
}

/// Options shared by the checks.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VerifyOptions {
    pub tolerance: Tolerance,
    /// Number of samples in the sign-calibration run.
    pub calibration_samples: usize,
    /// `sup|G|` for the stability bound; defaults to the sum of absolute coefficients.
    pub sup_norm: Option<f64>,
    /// Negative control: corrupts the top coefficient of `ΔG`.
    pub mutate_delta_g: bool,
}

impl Default for VerifyOptions {
    fn default() -> Self {
        VerifyOptions {
            tolerance: Tolerance::default(),
            calibration_samples: 2000,
            sup_norm: None,
            mutate_delta_g: false,
        }
    }
}

fn inputs(pairs: &[(&str, String)]) -> BTreeMap<String, String> {
    pairs.iter().map(|(k, v)| (k.to_string(), v.clone())).collect()
}

/// `ΔG` as used by the checks, corrupted when `opts.mutate_delta_g` is set.
pub fn checked_delta_g(g: &OverlapPolynomial, opts: &VerifyOptions) -> OverlapPolynomial {
    let dg = delta_g(g);
    if !opts.mutate_delta_g {
        return dg;
    }
    let r = replica_count(g);
    let top = OverlapMonomial::pair(r + 1, r + 2, 1).expect("distinct labels");
    dg.add(&g.mul_monomial(&top, 1.0))
}

/// Per-sample columns `[iden, beta, lambda_fd, rhs]` on common samples.
fn delta_g_columns(plan: &RunPlan, g: &OverlapPolynomial, dg: &OverlapPolynomial) -> Result<[Estimate; 4]> {
    let ctx = plan.context()?;
    let rows = per_sample(plan, &ctx, |i, e| {
        let mut row = [0.0; 4];
        for (slot, est) in row.iter_mut().zip(DeltaGEstimator::ALL) {
            *slot = delta_g_sample(est, plan, &ctx, i, e, plan.beta, plan.lambda, g, dg)?;
        }
        Ok(row)
    })?;
    let col = |k: usize| Estimate::from_samples(&rows.iter().map(|r| r[k]).collect::<Vec<_>>());
    Ok([col(0), col(1), col(2), col(3)])
}

/// Sign `s ∈ {+1, −1}` making `s·iden` closest to `⟨ΔG⟩` on the
/// calibration instance `(sk:4, β = 0.5, λ = 0, q₁₂)`.
pub fn calibrate_sign(seed: u64, opts: &VerifyOptions) -> Result<f64> {
    let model = ModelSpec::sk(4)?;
    let g = OverlapPolynomial::q(1, 2)?;
    let mut plan = RunPlan::new(model, 0.5, 0.0, opts.calibration_samples.max(2), seed);
    plan.lane = Lane::Independent(0xca1);
    let ctx = plan.context()?;
    let dg = checked_delta_g(&g, opts);
    let rows = per_sample(&plan, &ctx, |i, e| {
        let iden = delta_g_sample(DeltaGEstimator::Iden, &plan, &ctx, i, e, 0.5, 0.0, &g, &dg)?;
        let rhs = delta_g_sample(DeltaGEstimator::Rhs, &plan, &ctx, i, e, 0.5, 0.0, &g, &dg)?;
        Ok((iden, rhs))
    })?;
    let iden = mean(&rows.iter().map(|r| r.0).collect::<Vec<_>>());
    let rhs = mean(&rows.iter().map(|r| r.1).collect::<Vec<_>>());
    Ok(if (iden - rhs).abs() <= (iden + rhs).abs() { 1.0 } else { -1.0 })
}

/// The λ-derivative of `⟨G⟩_λ` (thermal covariance form) against the
/// quenched mean of `ΔG`, corroborated by the β and λ finite differences.
pub fn check_theorem2(
    model: &ModelSpec,
    g: &OverlapPolynomial,
    beta: f64,
    lambda: f64,
    n: usize,
    seed: u64,
    opts: &VerifyOptions,
) -> Result<CheckReport> {
    let started = Instant::now();
    if beta <= 0.0 {
        return Err(Error::usage("theorem2 needs beta > 0"));
    }
    let tol = opts.tolerance;
    let sign = calibrate_sign(seed, opts)?;
    let plan = RunPlan::new(model.clone(), beta, lambda, n, seed);
    let dg = checked_delta_g(g, opts);
    let [iden, via_beta, via_lambda, rhs] = delta_g_columns(&plan, g, &dg)?;
    let signed = iden.scaled(sign);
    let primary = Comparison::agreement("iden_vs_rhs", signed, rhs, tol);
    let subchecks = vec![
        Comparison::agreement("plus_iden_vs_rhs", iden, rhs, tol).reported(),
        Comparison::agreement("minus_iden_vs_rhs", iden.scaled(-1.0), rhs, tol).reported(),
        Comparison::agreement("iden_vs_beta", iden, via_beta, tol),
        Comparison::agreement("iden_vs_lambda_fd", iden, via_lambda, tol),
        Comparison::agreement("beta_vs_lambda_fd", via_beta, via_lambda, tol),
    ];
    let mut report = CheckReport::assemble(
        "theorem2",
        inputs(&[
            ("model", model.to_string()),
            ("g", format(g)),
            ("delta_g", format(&dg)),
            ("beta", beta.to_string()),
            ("lambda", lambda.to_string()),
            ("samples", n.to_string()),
        ]),
        primary,
        subchecks,
        seed,
        started,
    );
    report.sign_convention = Some(if sign > 0.0 { "+" } else { "-" }.to_string());
    report.estimates = BTreeMap::from([
        ("delta_g_iden".to_string(), iden),
        ("delta_g_beta".to_string(), via_beta),
        ("delta_g_lambda_fd".to_string(), via_lambda),
        ("delta_g_rhs".to_string(), rhs),
    ]);
    report.wall_time_s = started.elapsed().as_secs_f64();
    Ok(report)
}

/// Pieces of the stability bound for one model; shared by
/// [`check_theorem1`] and [`rate_sweep`].
struct Theorem1Data {
    integral: Estimate,
    endpoint: Estimate,
    paired: Estimate,
    nodes: Vec<Estimate>,
    scale: f64,
    sup: f64,
}

fn theorem1_data(
    model: &ModelSpec,
    g: &OverlapPolynomial,
    grid: &BetaGrid,
    lambda: f64,
    n: usize,
    seed: u64,
    opts: &VerifyOptions,
) -> Result<Theorem1Data> {
    let plan = RunPlan::new(model.clone(), grid.beta2, lambda, n, seed);
    let series = quadrature_series(&plan, grid, g, DeltaGEstimator::Iden)?;
    let integral: Vec<f64> = series.iter().map(|q| q.integral).collect();
    let endpoint: Vec<f64> = series.iter().map(|q| q.endpoint).collect();
    let nodes = (0..grid.nodes)
        .map(|k| Estimate::from_samples(&series.iter().map(|q| q.nodes[k]).collect::<Vec<_>>()))
        .collect();
    Ok(Theorem1Data {
        integral: Estimate::from_samples(&integral),
        endpoint: Estimate::from_samples(&endpoint),
        paired: Estimate::from_samples(&paired_difference(&integral, &endpoint)),
        nodes,
        scale: covariance_scale(model).value(),
        sup: opts.sup_norm.unwrap_or_else(|| g.sup_norm_bound()),
    })
}

/// Quadrature tolerance added to the endpoint relation.
pub const QUADRATURE_TOLERANCE: f64 = 1e-4;

fn endpoint_comparison(d: &Theorem1Data, tol: Tolerance) -> Comparison {
    let disc = (d.integral.mean - d.endpoint.mean).abs();
    Comparison::new(
        "endpoint",
        d.integral,
        d.endpoint,
        disc,
        tol.bound(d.integral.combined_stderr(&d.endpoint)) + QUADRATURE_TOLERANCE,
    )
}

fn bound_comparison(name: &str, d: &Theorem1Data, size: f64, tol: Tolerance) -> Comparison {
    let bound = 2.0 * d.sup / size;
    Comparison::new(
        name,
        Estimate::exact(d.integral.mean.abs()),
        Estimate::exact(bound),
        d.integral.mean.abs(),
        bound + tol.sigmas * d.integral.stderr,
    )
}

/// The β²-averaged bound: (a) the Simpson quadrature of `⟨ΔG⟩_λ` equals the
/// endpoint difference over `s`; (b) its magnitude is at most `2·sup|G|/s`.
/// For EA the `2·sup|G|/|Λ|` variant is reported as well.
pub fn check_theorem1(
    model: &ModelSpec,
    g: &OverlapPolynomial,
    grid: &BetaGrid,
    lambda: f64,
    n: usize,
    seed: u64,
    opts: &VerifyOptions,
) -> Result<CheckReport> {
    let started = Instant::now();
    let tol = opts.tolerance;
    let d = theorem1_data(model, g, grid, lambda, n, seed, opts)?;
    let primary = endpoint_comparison(&d, tol);
    let paired = Comparison::new(
        "endpoint_paired",
        d.integral,
        d.endpoint,
        d.paired.mean.abs(),
        tol.bound(d.paired.stderr) + QUADRATURE_TOLERANCE,
    )
    .reported();
    let mut subchecks = vec![paired, bound_comparison("bound_scale", &d, d.scale, tol)];
    let volume = model.volume() as f64;
    if volume != d.scale {
        subchecks.push(bound_comparison("bound_volume", &d, volume, tol).reported());
    }
    let mut report = CheckReport::assemble(
        "theorem1",
        inputs(&[
            ("model", model.to_string()),
            ("g", format(g)),
            ("beta1", grid.beta1.to_string()),
            ("beta2", grid.beta2.to_string()),
            ("nodes", grid.nodes.to_string()),
            ("lambda", lambda.to_string()),
            ("samples", n.to_string()),
        ]),
        primary,
        subchecks,
        seed,
        started,
    );
    let mut table = Table::new(&["beta", "beta_squared", "weight", "delta_g_mean", "delta_g_stderr"]);
    for ((b, w), e) in grid.betas().iter().zip(grid.weights()).zip(&d.nodes) {
        table.rows.push(vec![*b, b * b, w, e.mean, e.stderr]);
    }
    report.table = Some(table);
    report.values = BTreeMap::from([
        ("scale".to_string(), d.scale),
        ("volume".to_string(), volume),
        ("sup_norm".to_string(), d.sup),
        ("bound_scale".to_string(), 2.0 * d.sup / d.scale),
        ("bound_volume".to_string(), 2.0 * d.sup / volume),
    ]);
    report.wall_time_s = started.elapsed().as_secs_f64();
    Ok(report)
}

/// `β' = √(β² + λ/s)`.
pub fn sum_law_beta(model: &ModelSpec, beta: f64, lambda: f64) -> f64 {
    (beta * beta + lambda / covariance_scale(model).value()).sqrt()
}

/// `⟨G⟩_λ` at `(β, λ)` against `⟨G⟩_0` at `β'` on an independent stream.
pub fn check_sumlaw(
    model: &ModelSpec,
    g: &OverlapPolynomial,
    beta: f64,
    lambda: f64,
    n: usize,
    seed: u64,
    opts: &VerifyOptions,
) -> Result<CheckReport> {
    let started = Instant::now();
    if beta == 0.0 && lambda == 0.0 {
        return Err(Error::usage("sumlaw needs beta and lambda not both 0"));
    }
    let beta_prime = sum_law_beta(model, beta, lambda);
    let plan = RunPlan::new(model.clone(), beta, lambda, n, seed);
    let lhs = quenched_expectation(&plan, g)?;
    let rhs = quenched_expectation(&RunPlan::new(model.clone(), beta_prime, 0.0, n, seed).with_lane(Lane::Independent(1)), g)?;
    let primary = Comparison::agreement("deformed_vs_rescaled", lhs, rhs, opts.tolerance);
    let mut report = CheckReport::assemble(
        "sumlaw",
        inputs(&[
            ("model", model.to_string()),
            ("g", format(g)),
            ("beta", beta.to_string()),
            ("lambda", lambda.to_string()),
            ("samples", n.to_string()),
        ]),
        primary,
        Vec::new(),
        seed,
        started,
    );
    report.values.insert("beta_prime".to_string(), beta_prime);
    Ok(report)
}

/// `total = ⟨hG⟩ − ⟨h⟩⟨G⟩` split into the thermal part
/// `Av(Ω(hG) − Ω(h)Ω(G))` and the disorder part `Av(Ω(h)Ω(G)) − Av Ω(h) Av Ω(G)`,
/// with `h` attached to replica 1.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Decomposition {
    pub total: Estimate,
    pub thermal: Estimate,
    pub disorder: Estimate,
    /// `|total − thermal − disorder|` relative to the size of the terms.
    pub identity_residual: f64,
}

pub const DECOMPOSITION_TOLERANCE: f64 = 1e-12;

pub fn decompose_fluctuation(model: &ModelSpec, g: &OverlapPolynomial, beta: f64, n: usize, seed: u64) -> Result<Decomposition> {
    if beta <= 0.0 {
        return Err(Error::usage("fluctuation decomposition needs beta > 0"));
    }
    let plan = RunPlan::new(model.clone(), beta, 0.0, n, seed);
    let ctx = plan.context()?;
    let rows = per_sample(&plan, &ctx, |_, e| {
        let p = ThermalPieces::compute(&e.weights(beta, 0.0)?, g)?;
        Ok((p.omega_hg.first().copied().unwrap_or(p.omega_h * p.omega_g), p.omega_h, p.omega_g))
    })?;
    let a: Vec<f64> = rows.iter().map(|r| r.0).collect();
    let b: Vec<f64> = rows.iter().map(|r| r.1).collect();
    let c: Vec<f64> = rows.iter().map(|r| r.2).collect();
    let bc: Vec<f64> = rows.iter().map(|r| r.1 * r.2).collect();
    let thermal_samples: Vec<f64> = rows.iter().map(|r| r.0 - r.1 * r.2).collect();
    let (ma, mb, mc, mbc) = (mean(&a), mean(&b), mean(&c), mean(&bc));
    let nn = rows.len();
    let total = Estimate {
        mean: ma - mb * mc,
        stderr: delta_method_stderr(&[&a, &b, &c], &[1.0, -mc, -mb]),
        n_samples: nn,
    };
    let thermal = Estimate::from_samples(&thermal_samples);
    let disorder = Estimate {
        mean: mbc - mb * mc,
        stderr: delta_method_stderr(&[&bc, &b, &c], &[1.0, -mc, -mb]),
        n_samples: nn,
    };
    let size = ma.abs() + (mb * mc).abs() + mbc.abs();
    let residual = (total.mean - thermal.mean - disorder.mean).abs();
    Ok(Decomposition {
        total,
        thermal,
        disorder,
        identity_residual: if size > 0.0 { residual / size } else { residual },
    })
}

pub fn fluctuation_decomposition(
    model: &ModelSpec,
    g: &OverlapPolynomial,
    beta: f64,
    n: usize,
    seed: u64,
) -> Result<CheckReport> {
    let started = Instant::now();
    let d = decompose_fluctuation(model, g, beta, n, seed)?;
    let sum = Estimate {
        mean: d.thermal.mean + d.disorder.mean,
        stderr: d.thermal.stderr.hypot(d.disorder.stderr),
        n_samples: d.total.n_samples,
    };
    let primary = Comparison::new("identity", d.total, sum, d.identity_residual, DECOMPOSITION_TOLERANCE);
    let mut report = CheckReport::assemble(
        "decomposition",
        inputs(&[
            ("model", model.to_string()),
            ("g", format(g)),
            ("beta", beta.to_string()),
            ("samples", n.to_string()),
        ]),
        primary,
        Vec::new(),
        seed,
        started,
    );
    report.estimates = BTreeMap::from([
        ("total".to_string(), d.total),
        ("thermal".to_string(), d.thermal),
        ("disorder".to_string(), d.disorder),
    ]);
    Ok(report)
}

/// Covariance of the fixed Gaussian family used by the Wick self-check.
pub fn wick_covariance() -> Vec<Vec<f64>> {
    vec![vec![1.0, 0.5, 0.0], vec![0.5, 1.0, 0.2], vec![0.0, 0.2, 1.0]]
}

const WICK_CHUNK: usize = 1 << 14;

/// Monte Carlo `Av(x_i ψ)` against the exact `Σ_j C_ij Av(∂_j ψ)` for each `i`.
pub fn wick_check(psi: &GaussianPolynomial, cov: &[Vec<f64>], n: usize, seed: u64) -> Result<CheckReport> {
    let started = Instant::now();
    if n < 2 {
        return Err(Error::usage("wick check needs at least 2 draws"));
    }
    let chol = cholesky(cov)?;
    let d = cov.len();
    let chunks = n.div_ceil(WICK_CHUNK);
    let values: Vec<Vec<f64>> = (0..chunks)
        .into_par_iter()
        .map(|k| {
            let mut rng = StreamKey::new(seed, Lane::Auxiliary, k as u64).rng();
            let len = WICK_CHUNK.min(n - k * WICK_CHUNK);
            let mut out = Vec::with_capacity(len * d);
            for _ in 0..len {
                let x = sample_gaussian(&chol, &mut rng);
                let p = psi.eval(&x);
                out.extend(x.iter().map(|xi| xi * p));
            }
            out
        })
        .collect();
    let flat: Vec<f64> = values.into_iter().flatten().collect();
    let tol = Tolerance::sigmas(4.0);
    let comparisons: Vec<Comparison> = (0..d)
        .map(|i| {
            let col: Vec<f64> = flat.iter().skip(i).step_by(d).copied().collect();
            let lhs = Estimate::from_samples(&col);
            let rhs = Estimate::exact(wick_rhs(psi, cov, i));
            Comparison::agreement(format!("x{}", i + 1), lhs, rhs, tol)
        })
        .collect();
    let worst = comparisons
        .iter()
        .max_by(|a, b| (a.discrepancy / a.tolerance).total_cmp(&(b.discrepancy / b.tolerance)))
        .cloned()
        .expect("at least one variable");
    let mut primary = worst;
    primary.name = format!("worst_{}", primary.name);
    let report = CheckReport::assemble(
        "wick",
        inputs(&[("dimension", d.to_string()), ("samples", n.to_string())]),
        primary,
        comparisons,
        seed,
        started,
    );
    Ok(report)
}

/// [`wick_check`] for `ψ = x₁x₂x₃` under [`wick_covariance`].
pub fn wick_selfcheck(n: usize, seed: u64) -> Result<CheckReport> {
    wick_check(&GaussianPolynomial::monomial(vec![1, 1, 1], 1.0), &wick_covariance(), n, seed)
}

/// Theorem-1 quantities across model sizes, with the log-log slope of
/// `|integral|` against `s`.
pub fn rate_sweep(
    models: &[ModelSpec],
    g: &OverlapPolynomial,
    grid: &BetaGrid,
    lambda: f64,
    n: usize,
    seed: u64,
    opts: &VerifyOptions,
) -> Result<CheckReport> {
    let started = Instant::now();
    if models.len() < 2 {
        return Err(Error::usage("rate sweep needs at least two sizes"));
    }
    let tol = opts.tolerance;
    let mut subchecks = Vec::new();
    let mut table = Table::new(&[
        "scale",
        "volume",
        "integral_mean",
        "integral_stderr",
        "endpoint_mean",
        "endpoint_stderr",
        "bound",
    ]);
    let mut data = Vec::new();
    for m in models {
        let d = theorem1_data(m, g, grid, lambda, n, seed, opts)?;
        let mut e = endpoint_comparison(&d, tol);
        e.name = format!("endpoint_{m}");
        subchecks.push(e);
        subchecks.push(bound_comparison(&format!("bound_{m}"), &d, d.scale, tol));
        table.rows.push(vec![
            d.scale,
            m.volume() as f64,
            d.integral.mean,
            d.integral.stderr,
            d.endpoint.mean,
            d.endpoint.stderr,
            2.0 * d.sup / d.scale,
        ]);
        data.push(d);
    }
    let mut order: Vec<usize> = (0..data.len()).collect();
    order.sort_by(|&a, &b| data[a].scale.total_cmp(&data[b].scale));
    for w in order.windows(2) {
        let (small, large) = (&data[w[0]], &data[w[1]]);
        subchecks.push(Comparison::new(
            format!("decreasing_s{}_to_s{}", small.scale, large.scale),
            Estimate::exact(large.integral.mean.abs()),
            Estimate::exact(small.integral.mean.abs()),
            large.integral.mean.abs() - small.integral.mean.abs(),
            0.0,
        ));
    }
    let log_s: Vec<f64> = data.iter().map(|d| d.scale.ln()).collect();
    let log_i: Vec<f64> = data.iter().map(|d| d.integral.mean.abs().ln()).collect();
    let log_e: Vec<f64> = data.iter().map(|d| d.endpoint.mean.abs().ln()).collect();
    let (slope, slope_se) = linear_fit(&log_s, &log_i)?;
    let (endpoint_slope, endpoint_slope_se) = linear_fit(&log_s, &log_e)?;
    let slope_est = Estimate {
        mean: slope,
        stderr: slope_se,
        n_samples: data.len(),
    };
    let primary = Comparison::agreement("slope_vs_minus_one", slope_est, Estimate::exact(-1.0), tol).reported();
    let mut report = CheckReport::assemble(
        "sweep_rate",
        inputs(&[
            ("models", models.iter().map(ToString::to_string).collect::<Vec<_>>().join(",")),
            ("g", format(g)),
            ("beta1", grid.beta1.to_string()),
            ("beta2", grid.beta2.to_string()),
            ("nodes", grid.nodes.to_string()),
            ("lambda", lambda.to_string()),
            ("samples", n.to_string()),
        ]),
        primary,
        subchecks,
        seed,
        started,
    );
    report.table = Some(table);
    report.values = BTreeMap::from([
        ("slope".to_string(), slope),
        ("slope_stderr".to_string(), slope_se),
        ("endpoint_slope".to_string(), endpoint_slope),
        ("endpoint_slope_stderr".to_string(), endpoint_slope_se),
    ]);
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::observable::parse;

    fn sk(n: usize) -> ModelSpec {
        ModelSpec::sk(n).unwrap()
    }

    #[test]
    fn comparison_verdicts() {
        let a = Estimate {
            mean: 1.0,
            stderr: 0.1,
            n_samples: 10,
        };
        let b = Estimate::exact(1.25);
        assert!(Comparison::agreement("x", a, b, Tolerance::default()).passed());
        assert!(!Comparison::agreement("x", a, Estimate::exact(1.5), Tolerance::default()).passed());
        let exact = Comparison::agreement("y", Estimate::exact(2.0), Estimate::exact(2.0), Tolerance::default());
        assert_eq!(exact.tolerance, 1e-10);
        assert!(exact.passed());
    }

    #[test]
    fn theorem2_constant_observable() {
        let one = OverlapPolynomial::constant(1.0);
        let r = check_theorem2(&sk(4), &one, 0.6, 0.0, 200, 1, &VerifyOptions::default()).unwrap();
        assert!(r.all_passed(), "{r:#?}");
        for e in r.estimates.values() {
            assert!(e.mean.abs() < 1e-10, "{e:?}");
        }
    }

    #[test]
    fn theorem2_small_sk_and_sign() {
        let opts = VerifyOptions::default();
        assert_eq!(calibrate_sign(1, &opts).unwrap(), 1.0);
        let g = parse("q1,2").unwrap();
        let r = check_theorem2(&sk(4), &g, 0.5, 0.0, 3000, 2, &opts).unwrap();
        assert!(r.all_passed(), "{r:#?}");
        assert_eq!(r.sign_convention.as_deref(), Some("+"));
        assert!(!r.subcheck("minus_iden_vs_rhs").unwrap().passed());
    }

    #[test]
    fn theorem2_mutation_is_caught() {
        let opts = VerifyOptions {
            mutate_delta_g: true,
            ..VerifyOptions::default()
        };
        let g = parse("q1,2").unwrap();
        let r = check_theorem2(&sk(4), &g, 0.5, 0.0, 2000, 2, &opts).unwrap();
        assert!(!r.all_passed());
    }

    #[test]
    fn theorem1_constant_and_bound_arithmetic() {
        let grid = BetaGrid::new(0.2, 1.0, 5).unwrap();
        let one = OverlapPolynomial::constant(1.0);
        let r = check_theorem1(&sk(4), &one, &grid, 0.0, 20, 1, &VerifyOptions::default()).unwrap();
        assert!(r.all_passed());
        assert_eq!(r.lhs.mean, 0.0);
        assert_eq!(r.rhs.mean, 0.0);
        let g = parse("q1,2").unwrap();
        let b4 = check_theorem1(&sk(4), &g, &grid, 0.0, 20, 1, &VerifyOptions::default()).unwrap();
        let b8 = check_theorem1(&sk(8), &g, &grid, 0.0, 20, 1, &VerifyOptions::default()).unwrap();
        assert_eq!(b4.values["bound_scale"], 0.5);
        assert_eq!(b8.values["bound_scale"], 0.25);
    }

    #[test]
    fn theorem1_reports_volume_variant_for_ea() {
        let grid = BetaGrid::new(0.2, 1.0, 5).unwrap();
        let g = parse("q1,2").unwrap();
        let r = check_theorem1(&"ea:2x3".parse().unwrap(), &g, &grid, 0.0, 50, 1, &VerifyOptions::default()).unwrap();
        assert!(r.all_passed(), "{r:#?}");
        let v = r.subcheck("bound_volume").unwrap();
        assert!(!v.asserted);
        assert_eq!(r.values["bound_volume"], 2.0 / 6.0);
        assert_eq!(r.values["bound_scale"], 2.0 / 12.0);
    }

    #[test]
    fn sum_law_arithmetic() {
        assert!((sum_law_beta(&sk(4), 0.6, 0.64) - 0.52f64.sqrt()).abs() < 1e-15);
        let chain: ModelSpec = "ea:3:free".parse().unwrap();
        assert_eq!(sum_law_beta(&chain, 0.0, 2.0), 1.0);
        assert_eq!(sum_law_beta(&sk(4), 0.7, 0.0), 0.7);
        assert!(check_sumlaw(&sk(4), &parse("q1,2").unwrap(), 0.0, 0.0, 10, 1, &VerifyOptions::default()).is_err());
    }

    #[test]
    fn sum_law_small() {
        let g = parse("q1,2").unwrap();
        let r = check_sumlaw(&sk(4), &g, 0.6, 0.64, 2000, 3, &VerifyOptions::default()).unwrap();
        assert!(r.all_passed(), "{r:#?}");
    }

    #[test]
    fn decomposition_identities() {
        let one = OverlapPolynomial::constant(1.0);
        let d = decompose_fluctuation(&sk(4), &one, 0.7, 50, 1).unwrap();
        assert_eq!((d.total.mean, d.thermal.mean, d.disorder.mean), (0.0, 0.0, 0.0));
        let g = parse("q1,2").unwrap();
        let d = decompose_fluctuation(&sk(5), &g, 0.7, 200, 2).unwrap();
        assert!(d.identity_residual < 1e-12);
        assert!(d.thermal.stderr > 0.0 && d.disorder.stderr > 0.0);
        // thermal per sample is the l = 1 term of the iden covariance sum
        let plan = RunPlan::new(sk(5), 0.7, 0.0, 200, 2);
        let ctx = plan.context().unwrap();
        let rows = per_sample(&plan, &ctx, |_, e| {
            let p = ThermalPieces::compute(&e.weights(0.7, 0.0)?, &g)?;
            Ok((p.omega_hg[0] - p.omega_h * p.omega_g, p.iden(0.7), p.omega_hg[1] - p.omega_h * p.omega_g))
        })
        .unwrap();
        for (t1, iden, t2) in &rows {
            assert!((t1 - t2).abs() < 1e-12);
            assert!((-2.0 * 0.7 * iden - (t1 + t2)).abs() < 1e-12);
        }
        assert!(decompose_fluctuation(&sk(4), &g, 0.0, 10, 1).is_err());
    }

    #[test]
    fn wick_trivial_cases() {
        let cov = wick_covariance();
        let c = wick_check(&GaussianPolynomial::constant(3, 1.0), &cov, 5000, 1).unwrap();
        assert!(c.all_passed());
        assert!(c.subchecks.iter().all(|s| s.rhs.mean == 0.0));
        let id = vec![vec![1.0, 0.0, 0.0], vec![0.0, 1.0, 0.0], vec![0.0, 0.0, 1.0]];
        let r = wick_check(&GaussianPolynomial::variable(3, 1), &id, 5000, 1).unwrap();
        assert_eq!(r.subchecks[0].rhs.mean, 0.0);
        assert!(r.all_passed());
    }

    #[test]
    fn wick_selfcheck_small() {
        let r = wick_selfcheck(100_000, 4).unwrap();
        assert!(r.all_passed(), "{r:#?}");
        let rhs: Vec<f64> = r.subchecks.iter().map(|c| c.rhs.mean).collect();
        assert!((rhs[0] - 0.2).abs() < 1e-15 && (rhs[1] - 0.2).abs() < 1e-15 && (rhs[2] - 0.5).abs() < 1e-15);
    }

    #[test]
    fn rate_sweep_small() {
        let grid = BetaGrid::new(0.2, 1.0, 9).unwrap();
        let models = [sk(3), sk(5)];
        let r = rate_sweep(&models, &parse("q1,2").unwrap(), &grid, 0.0, 200, 5, &VerifyOptions::default()).unwrap();
        let t = r.table.as_ref().unwrap();
        assert_eq!(t.rows.len(), 2);
        assert_eq!(t.rows[0][6], 2.0 / 3.0);
        assert!(r.values["slope_stderr"] == 0.0); // two points fit exactly
        assert!(r.all_passed(), "{r:#?}");
    }

    #[test]
    fn reports_reproduce_bitwise() {
        let g = parse("q1,2").unwrap();
        let a = check_theorem2(&sk(4), &g, 0.6, 0.0, 100, 9, &VerifyOptions::default()).unwrap();
        let b = check_theorem2(&sk(4), &g, 0.6, 0.0, 100, 9, &VerifyOptions::default()).unwrap();
        assert_eq!(a.numeric_fingerprint(), b.numeric_fingerprint());
    }
}
