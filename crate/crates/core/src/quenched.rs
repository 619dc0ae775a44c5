//! Disorder averages of exact Gibbs quantities.
//!
//! Every estimator evaluates a pure per-sample function of the disorder
//! sample `(seed, lane, index)` in parallel, collects the results in index
//! order and reduces them sequentially, so results do not depend on the
//! number of worker threads. Stencils and quadratures are combined per
//! sample before averaging; their standard errors are those of the combined
//! per-sample quantity.

use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gibbs::{replica_expectation, AttachmentSpec, EnergyTable, EngineCaps, ModelContext, WeightTable};
use crate::model::{sample_disorder_at, ModelSpec};
use crate::observable::{delta_g, replica_count, OverlapPolynomial};
use crate::rng::Lane;
use crate::stats::{simpson_weights, Estimate};

/// Lane used by the unpaired λ stencil for its reference point.
const UNPAIRED_LANE: Lane = Lane::Independent(0x5ca1);

/// Parameters shared by all quenched estimators.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunPlan {
    pub model: ModelSpec,
    pub beta: f64,
    pub lambda: f64,
    pub n_samples: usize,
    pub seed: u64,
    #[serde(skip, default = "default_lane")]
    pub lane: Lane,
    /// Central-difference step in β; defaults to `10⁻²·max(1, β)`.
    pub beta_step: Option<f64>,
    /// Finite-difference step in λ.
    pub lambda_step: f64,
    #[serde(skip)]
    pub caps: EngineCaps,
}

fn default_lane() -> Lane {
    Lane::Disorder
}

impl RunPlan {
    pub fn new(model: ModelSpec, beta: f64, lambda: f64, n_samples: usize, seed: u64) -> Self {
        RunPlan {
            model,
            beta,
            lambda,
            n_samples,
            seed,
            lane: Lane::Disorder,
            beta_step: None,
            lambda_step: 1e-2,
            caps: EngineCaps::default(),
        }
    }

    pub fn with_beta(&self, beta: f64) -> Self {
        RunPlan { beta, ..self.clone() }
    }

    pub fn with_lambda(&self, lambda: f64) -> Self {
        RunPlan { lambda, ..self.clone() }
    }

    pub fn with_lane(&self, lane: Lane) -> Self {
        RunPlan { lane, ..self.clone() }
    }

    pub fn beta_step(&self) -> f64 {
        self.beta_step.unwrap_or(1e-2 * self.beta.max(1.0))
    }

    fn validate(&self) -> Result<()> {
        if !(self.beta >= 0.0 && self.beta.is_finite()) {
            return Err(Error::usage(format!("beta must be finite and >= 0, got {}", self.beta)));
        }
        if !(self.lambda >= 0.0 && self.lambda.is_finite()) {
            return Err(Error::usage(format!("lambda must be finite and >= 0, got {}", self.lambda)));
        }
        if self.n_samples < 2 {
            return Err(Error::usage("need at least 2 disorder samples"));
        }
        if !(self.lambda_step > 0.0) || self.beta_step.is_some_and(|h| !(h > 0.0)) {
            return Err(Error::usage("finite-difference steps must be positive"));
        }
        Ok(())
    }

    pub fn context(&self) -> Result<Arc<ModelContext>> {
        ModelContext::with_caps(&self.model, self.caps)
    }
}

/// Uniform grid in `β²` on `[β₁², β₂²]` with an odd number of nodes.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BetaGrid {
    pub beta1: f64,
    pub beta2: f64,
    pub nodes: usize,
}

impl BetaGrid {
    pub fn new(beta1: f64, beta2: f64, nodes: usize) -> Result<Self> {
        if !(beta1 > 0.0 && beta2 > beta1 && beta2.is_finite()) {
            return Err(Error::usage(format!(
                "beta range must satisfy 0 < beta1 < beta2, got [{beta1}, {beta2}]"
            )));
        }
        simpson_weights(0.0, 1.0, nodes)?;
        Ok(BetaGrid { beta1, beta2, nodes })
    }

    pub fn betas(&self) -> Vec<f64> {
        let (u1, u2) = (self.beta1 * self.beta1, self.beta2 * self.beta2);
        let du = (u2 - u1) / (self.nodes - 1) as f64;
        (0..self.nodes)
            .map(|i| {
                if i == self.nodes - 1 {
                    self.beta2
                } else if i == 0 {
                    self.beta1
                } else {
                    (u1 + i as f64 * du).sqrt()
                }
            })
            .collect()
    }

    /// Simpson weights with respect to `dβ²`.
    pub fn weights(&self) -> Vec<f64> {
        simpson_weights(self.beta1 * self.beta1, self.beta2 * self.beta2, self.nodes)
            .expect("validated at construction")
    }
}

/// The ways of estimating `⟨ΔG⟩_λ = d/dλ ⟨G⟩_λ`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DeltaGEstimator {
    /// Thermal energy-observable covariance divided by `−2β`.
    Iden,
    /// Central difference in β scaled by `1/(2βs)`.
    Beta,
    /// Finite difference in λ with common random numbers.
    LambdaFd,
    /// Quenched mean of the polynomial `ΔG`.
    Rhs,
}

impl DeltaGEstimator {
    pub const ALL: [DeltaGEstimator; 4] = [
        DeltaGEstimator::Iden,
        DeltaGEstimator::Beta,
        DeltaGEstimator::LambdaFd,
        DeltaGEstimator::Rhs,
    ];

    pub fn name(self) -> &'static str {
        match self {
            DeltaGEstimator::Iden => "delta_g_iden",
            DeltaGEstimator::Beta => "delta_g_beta",
            DeltaGEstimator::LambdaFd => "delta_g_lambda_fd",
            DeltaGEstimator::Rhs => "delta_g_rhs",
        }
    }

    pub fn from_name(s: &str) -> Option<Self> {
        let s = s.trim().trim_start_matches("delta_g_");
        match s {
            "iden" => Some(DeltaGEstimator::Iden),
            "beta" => Some(DeltaGEstimator::Beta),
            "lambda_fd" | "lambda" => Some(DeltaGEstimator::LambdaFd),
            "rhs" => Some(DeltaGEstimator::Rhs),
            _ => None,
        }
    }
}

/// Runs `f` on every disorder sample of `plan`, in parallel, preserving index order.
pub(crate) fn per_sample<T, F>(plan: &RunPlan, ctx: &Arc<ModelContext>, f: F) -> Result<Vec<T>>
where
    T: Send,
    F: Fn(u64, &EnergyTable) -> Result<T> + Sync,
{
    (0..plan.n_samples as u64)
        .into_par_iter()
        .map(|i| {
            let disorder = sample_disorder_at(&plan.model, plan.seed, plan.lane, i);
            let energies = EnergyTable::new(ctx, &disorder)?;
            f(i, &energies)
        })
        .collect()
}

pub(crate) fn energies_at(plan: &RunPlan, ctx: &Arc<ModelContext>, lane: Lane, index: u64) -> Result<EnergyTable> {
    EnergyTable::new(ctx, &sample_disorder_at(&plan.model, plan.seed, lane, index))
}

fn omega(w: &WeightTable, g: &OverlapPolynomial) -> Result<f64> {
    replica_expectation(w, g, &AttachmentSpec::none())
}

/// Per-sample pieces of the thermal covariance: `Ω(G)`, `Ω(h)` and
/// `Ω(h(σ^l) G)` for `l = 1..R`.
#[derive(Debug, Clone)]
pub(crate) struct ThermalPieces {
    pub omega_g: f64,
    pub omega_h: f64,
    pub omega_hg: Vec<f64>,
}

impl ThermalPieces {
    pub fn compute(w: &WeightTable, g: &OverlapPolynomial) -> Result<Self> {
        let r = replica_count(g);
        let omega_g = omega(w, g)?;
        let omega_h = replica_expectation(w, &OverlapPolynomial::constant(1.0), &AttachmentSpec::energy_on(1))?;
        let omega_hg = (1..=r)
            .map(|l| replica_expectation(w, g, &AttachmentSpec::energy_on(l)))
            .collect::<Result<Vec<_>>>()?;
        Ok(ThermalPieces {
            omega_g,
            omega_h,
            omega_hg,
        })
    }

    /// `Σ_l [Ω(h_l G) − Ω(h)Ω(G)]`.
    pub fn covariance_sum(&self) -> f64 {
        self.omega_hg
            .iter()
            .map(|hg| hg - self.omega_h * self.omega_g)
            .sum()
    }

    pub fn iden(&self, beta: f64) -> f64 {
        self.covariance_sum() / (-2.0 * beta)
    }
}

fn require_positive_beta(beta: f64, what: &str) -> Result<()> {
    if beta <= 0.0 {
        return Err(Error::usage(format!(
            "{what} needs beta > 0; at beta = 0 use delta_g_rhs"
        )));
    }
    Ok(())
}

/// Per-sample value of one ΔG estimator at `(beta, lambda)`.
pub(crate) fn delta_g_sample(
    est: DeltaGEstimator,
    plan: &RunPlan,
    ctx: &Arc<ModelContext>,
    index: u64,
    e: &EnergyTable,
    beta: f64,
    lambda: f64,
    g: &OverlapPolynomial,
    dg: &OverlapPolynomial,
) -> Result<f64> {
    match est {
        DeltaGEstimator::Iden => Ok(ThermalPieces::compute(&e.weights(beta, lambda)?, g)?.iden(beta)),
        DeltaGEstimator::Beta => beta_difference(e, beta, lambda, effective_beta_step(plan, beta), g, ctx.scale()),
        DeltaGEstimator::LambdaFd => lambda_difference(plan, ctx, index, e, beta, lambda, g, true),
        DeltaGEstimator::Rhs => omega(&e.weights(beta, lambda)?, dg),
    }
}

fn effective_beta_step(plan: &RunPlan, beta: f64) -> f64 {
    let h = plan.beta_step.unwrap_or(1e-2 * beta.max(1.0));
    if h >= beta {
        beta / 2.0
    } else {
        h
    }
}

fn beta_difference(e: &EnergyTable, beta: f64, lambda: f64, h: f64, g: &OverlapPolynomial, s: f64) -> Result<f64> {
    let up = omega(&e.weights(beta + h, lambda)?, g)?;
    let down = omega(&e.weights(beta - h, lambda)?, g)?;
    Ok((up - down) / (2.0 * h) / (2.0 * beta * s))
}

#[allow(clippy::too_many_arguments)]
fn lambda_difference(
    plan: &RunPlan,
    ctx: &Arc<ModelContext>,
    index: u64,
    e: &EnergyTable,
    beta: f64,
    lambda: f64,
    g: &OverlapPolynomial,
    common: bool,
) -> Result<f64> {
    let h = plan.lambda_step;
    let reference = if common {
        e.clone()
    } else {
        energies_at(plan, ctx, UNPAIRED_LANE, index)?
    };
    if lambda == 0.0 {
        // K and −K have the same law; averaging them cancels the √λ term
        // that otherwise dominates a forward difference at λ = 0.
        let plus = omega(&e.weights(beta, h)?, g)?;
        let minus = omega(&e.with_negated_perturbation().weights(beta, h)?, g)?;
        let base = omega(&reference.weights(beta, 0.0)?, g)?;
        Ok((0.5 * (plus + minus) - base) / h)
    } else {
        let h = h.min(lambda);
        let up = omega(&e.weights(beta, lambda + h)?, g)?;
        let down = omega(&reference.weights(beta, lambda - h)?, g)?;
        Ok((up - down) / (2.0 * h))
    }
}

fn estimate<F>(plan: &RunPlan, f: F) -> Result<Estimate>
where
    F: Fn(u64, &EnergyTable, &Arc<ModelContext>) -> Result<f64> + Sync,
{
    plan.validate()?;
    let ctx = plan.context()?;
    let xs = per_sample(plan, &ctx, |i, e| f(i, e, &ctx))?;
    Ok(Estimate::from_samples(&xs))
}

/// `⟨G⟩_λ = Av Ω_λ(G)` at the plan's `(β, λ)`.
pub fn quenched_expectation(plan: &RunPlan, poly: &OverlapPolynomial) -> Result<Estimate> {
    estimate(plan, |_, e, _| omega(&e.weights(plan.beta, plan.lambda)?, poly))
}

/// Quenched `A(β) = Av ln Z` and, for `β > 0`, `F = −A/β`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct FreeEnergy {
    pub log_partition: Estimate,
    pub free_energy: Estimate,
}

pub fn quenched_log_partition(plan: &RunPlan) -> Result<Estimate> {
    estimate(plan, |_, e, _| Ok(e.weights(plan.beta, plan.lambda)?.log_partition()))
}

pub fn quenched_free_energy(plan: &RunPlan) -> Result<FreeEnergy> {
    if plan.beta <= 0.0 {
        return Err(Error::usage("free energy F = -A/beta needs beta > 0"));
    }
    let a = quenched_log_partition(plan)?;
    Ok(FreeEnergy {
        log_partition: a,
        free_energy: a.scaled(-1.0 / plan.beta),
    })
}

/// `−(2β)⁻¹ Σ_l Av[Ω_λ(h_l G) − Ω_λ(h) Ω_λ(G)]` with `h = H/s`.
pub fn delta_g_via_iden(plan: &RunPlan, g: &OverlapPolynomial) -> Result<Estimate> {
    require_positive_beta(plan.beta, "delta_g_via_iden")?;
    estimate(plan, |_, e, _| {
        Ok(ThermalPieces::compute(&e.weights(plan.beta, plan.lambda)?, g)?.iden(plan.beta))
    })
}

/// `(2βs)⁻¹ d⟨G⟩_λ/dβ` by a central difference on common samples.
pub fn delta_g_via_beta(plan: &RunPlan, g: &OverlapPolynomial) -> Result<Estimate> {
    require_positive_beta(plan.beta, "delta_g_via_beta")?;
    let h = effective_beta_step(plan, plan.beta);
    estimate(plan, |_, e, ctx| beta_difference(e, plan.beta, plan.lambda, h, g, ctx.scale()))
}

/// [`delta_g_via_beta`] at steps `h`, `h/2` and `h/4`, for checking the
/// `O(h²)` convergence of the stencil.
pub fn delta_g_via_beta_richardson(plan: &RunPlan, g: &OverlapPolynomial) -> Result<[Estimate; 3]> {
    require_positive_beta(plan.beta, "delta_g_via_beta")?;
    let h = effective_beta_step(plan, plan.beta);
    let mut out = [Estimate::exact(0.0); 3];
    for (k, slot) in out.iter_mut().enumerate() {
        let step = h / f64::from(1u32 << k);
        *slot = estimate(plan, |_, e, ctx| beta_difference(e, plan.beta, plan.lambda, step, g, ctx.scale()))?;
    }
    Ok(out)
}

/// `d⟨G⟩_λ/dλ` by finite differences with common random numbers: forward
/// (antithetic in `K`) at `λ = 0`, central for `λ > 0`.
pub fn delta_g_via_lambda_fd(plan: &RunPlan, g: &OverlapPolynomial) -> Result<Estimate> {
    delta_g_via_lambda_fd_with(plan, g, true)
}

/// As [`delta_g_via_lambda_fd`]; with `common_random_numbers = false` the
/// lower stencil point uses an independent disorder sample.
pub fn delta_g_via_lambda_fd_with(plan: &RunPlan, g: &OverlapPolynomial, common_random_numbers: bool) -> Result<Estimate> {
    estimate(plan, |i, e, ctx| {
        lambda_difference(plan, ctx, i, e, plan.beta, plan.lambda, g, common_random_numbers)
    })
}

/// `⟨ΔG⟩_λ` with `ΔG` the zero-average overlap polynomial.
pub fn delta_g_rhs(plan: &RunPlan, g: &OverlapPolynomial) -> Result<Estimate> {
    quenched_expectation(plan, &delta_g(g))
}

/// Per-sample values of a `β²`-quadrature run.
#[derive(Debug, Clone)]
pub(crate) struct QuadratureSample {
    pub integral: f64,
    pub nodes: Vec<f64>,
    pub endpoint: f64,
}

pub(crate) fn quadrature_series(
    plan: &RunPlan,
    grid: &BetaGrid,
    g: &OverlapPolynomial,
    est: DeltaGEstimator,
) -> Result<Vec<QuadratureSample>> {
    plan.validate()?;
    let ctx = plan.context()?;
    let betas = grid.betas();
    let weights = grid.weights();
    let dg = delta_g(g);
    let s = ctx.scale();
    per_sample(plan, &ctx, |i, e| {
        let nodes = betas
            .iter()
            .map(|&b| delta_g_sample(est, plan, &ctx, i, e, b, plan.lambda, g, &dg))
            .collect::<Result<Vec<_>>>()?;
        let integral = nodes.iter().zip(&weights).map(|(v, w)| v * w).sum();
        let upper = omega(&e.weights(grid.beta2, plan.lambda)?, g)?;
        let lower = omega(&e.weights(grid.beta1, plan.lambda)?, g)?;
        Ok(QuadratureSample {
            integral,
            nodes,
            endpoint: (upper - lower) / s,
        })
    })
}

/// `∫_{β₁²}^{β₂²} ⟨ΔG⟩_λ dβ²` by composite Simpson on common samples.
pub fn beta2_integral(
    plan: &RunPlan,
    grid: &BetaGrid,
    g: &OverlapPolynomial,
    est: DeltaGEstimator,
) -> Result<Estimate> {
    let xs: Vec<f64> = quadrature_series(plan, grid, g, est)?
        .into_iter()
        .map(|q| q.integral)
        .collect();
    Ok(Estimate::from_samples(&xs))
}
