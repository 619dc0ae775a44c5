//! Single-spin Metropolis sampling of `e^{−βH + √λK}` with independent
//! chains as replicas.
//!
//! Each proposal redraws one spin uniformly and accepts with probability
//! `min(1, e^{Δ})`, visiting sites in index order. The log-weight is updated
//! incrementally and recomputed from scratch every [`DRIFT_CHECK_SWEEPS`]
//! sweeps.

use rand::Rng;
use rand_chacha::ChaCha20Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::model::{covariance_scale, sample_disorder_at, DisorderSample, EnergyGeometry, ModelSpec, SpinConfig};
use crate::observable::{replica_count, OverlapPolynomial};
use crate::rng::{Lane, StreamKey};
use crate::stats::{blocked_stderr, integrated_autocorrelation, Estimate};

pub const DRIFT_CHECK_SWEEPS: u64 = 1000;

/// One Markov chain: configuration, cached log-weight and sweep counter.
#[derive(Debug, Clone)]
pub struct ChainState {
    pub config: SpinConfig,
    pub log_weight: f64,
    pub sweeps: u64,
    spins: Vec<f64>,
    max_drift: f64,
}

impl ChainState {
    pub fn new(kernel: &MetropolisKernel, config: SpinConfig) -> Result<Self> {
        if config.len() != kernel.volume() {
            return Err(Error::usage(format!(
                "configuration has {} spins, model has volume {}",
                config.len(),
                kernel.volume()
            )));
        }
        let spins: Vec<f64> = config.spins().collect();
        let log_weight = kernel.log_weight_of(&spins);
        Ok(ChainState {
            config,
            log_weight,
            sweeps: 0,
            spins,
            max_drift: 0.0,
        })
    }

    pub fn random<R: Rng + ?Sized>(kernel: &MetropolisKernel, rng: &mut R) -> Self {
        Self::new(kernel, SpinConfig::random(kernel.volume(), rng)).expect("volume matches")
    }

    pub fn spins(&self) -> &[f64] {
        &self.spins
    }

    /// Largest `|cached − recomputed|` seen by the drift guard so far.
    pub fn max_drift(&self) -> f64 {
        self.max_drift
    }
}

/// Effective pair couplings of `−βH + √λK` for one disorder sample.
#[derive(Debug, Clone)]
pub struct MetropolisKernel {
    geometry: EnergyGeometry,
    disorder: DisorderSample,
    beta: f64,
    lambda: f64,
    /// `neighbours[i]` lists `(j, c_ij)` with `log W = const + Σ_{i<j} c_ij σ_i σ_j`.
    neighbours: Vec<Vec<(usize, f64)>>,
}

impl MetropolisKernel {
    pub fn new(model: &ModelSpec, disorder: &DisorderSample, beta: f64, lambda: f64) -> Result<Self> {
        disorder.check_shape(model)?;
        if !(beta >= 0.0 && beta.is_finite() && lambda >= 0.0 && lambda.is_finite()) {
            return Err(Error::usage(format!(
                "beta and lambda must be finite and >= 0, got ({beta}, {lambda})"
            )));
        }
        let v = model.volume();
        let rl = lambda.sqrt();
        let mut neighbours = vec![Vec::new(); v];
        let mut push = |i: usize, j: usize, c: f64| {
            for (slot, list) in [(j, i), (i, j)] {
                let entry = &mut neighbours[list];
                match entry.iter_mut().find(|(k, _)| *k == slot) {
                    Some((_, acc)) => *acc += c,
                    None => entry.push((slot, c)),
                }
            }
        };
        match model {
            ModelSpec::Sk { n_spins } => {
                let n = *n_spins;
                let (a, b) = (beta / (n as f64).sqrt(), rl / n as f64);
                let (jm, jp) = (&disorder.main_couplings, &disorder.perturbation_couplings);
                for i in 0..n {
                    for j in i + 1..n {
                        let c = a * (jm[i * n + j] + jm[j * n + i]) + b * (jp[i * n + j] + jp[j * n + i]);
                        push(i, j, c);
                    }
                }
            }
            ModelSpec::Ea { .. } => {
                let scale = rl / covariance_scale(model).value().sqrt();
                for (k, &(i, j)) in model.bonds().iter().enumerate() {
                    push(i, j, beta * disorder.main_couplings[k] + scale * disorder.perturbation_couplings[k]);
                }
            }
        }
        Ok(MetropolisKernel {
            geometry: EnergyGeometry::new(model),
            disorder: disorder.clone(),
            beta,
            lambda,
            neighbours,
        })
    }

    pub fn volume(&self) -> usize {
        self.neighbours.len()
    }

    pub fn model(&self) -> &ModelSpec {
        &self.geometry.model
    }

    fn log_weight_of(&self, spins: &[f64]) -> f64 {
        -self.beta * self.geometry.hamiltonian(&self.disorder.main_couplings, spins)
            + self.lambda.sqrt() * self.geometry.perturbation(&self.disorder.perturbation_couplings, spins)
    }

    /// `−βH(σ) + √λK(σ)` recomputed from the couplings.
    pub fn log_weight(&self, config: &SpinConfig) -> f64 {
        let spins: Vec<f64> = config.spins().collect();
        self.log_weight_of(&spins)
    }

    /// Change in log-weight if spin `i` of `state` were flipped.
    pub fn flip_delta(&self, state: &ChainState, i: usize) -> f64 {
        let field: f64 = self.neighbours[i].iter().map(|&(j, c)| c * state.spins[j]).sum();
        -2.0 * state.spins[i] * field
    }

    /// One sweep over all sites in index order.
    pub fn sweep<R: Rng + ?Sized>(&self, state: &mut ChainState, rng: &mut R) {
        for i in 0..self.volume() {
            let up: bool = rng.random();
            if up == state.config.is_up(i) {
                continue;
            }
            let delta = self.flip_delta(state, i);
            if delta >= 0.0 || rng.random::<f64>() < delta.exp() {
                state.config.flip(i);
                state.spins[i] = -state.spins[i];
                state.log_weight += delta;
            }
        }
        state.sweeps += 1;
        if state.sweeps.is_multiple_of(DRIFT_CHECK_SWEEPS) {
            let exact = self.log_weight_of(&state.spins);
            state.max_drift = state.max_drift.max((state.log_weight - exact).abs());
            state.log_weight = exact;
        }
    }
}

/// One sweep of `state` under the Gibbs weight of `(model, disorder, β, λ)`.
/// Builds the coupling tables on every call; hold a [`MetropolisKernel`]
/// for repeated sweeps.
pub fn metropolis_sweep<R: Rng + ?Sized>(
    model: &ModelSpec,
    disorder: &DisorderSample,
    beta: f64,
    lambda: f64,
    state: &mut ChainState,
    rng: &mut R,
) -> Result<()> {
    MetropolisKernel::new(model, disorder, beta, lambda)?.sweep(state, rng);
    Ok(())
}

/// Sampling schedule for [`mc_quenched_expectation`]; `sweeps` counts all
/// sweeps including burn-in.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct McPlan {
    pub replicas: u32,
    pub sweeps: u64,
    pub burn_in: Option<u64>,
    pub thinning: u64,
    pub n_samples: usize,
    pub seed: u64,
}

impl McPlan {
    pub fn new(replicas: u32, sweeps: u64, n_samples: usize, seed: u64) -> Self {
        McPlan {
            replicas,
            sweeps,
            burn_in: None,
            thinning: 1,
            n_samples,
            seed,
        }
    }

    fn validate(&self, poly: &OverlapPolynomial) -> Result<()> {
        let r = poly.max_label();
        if self.replicas < r.max(1) {
            return Err(Error::usage(format!(
                "observable uses replica {r} but the plan has {} chains",
                self.replicas
            )));
        }
        if self.thinning == 0 {
            return Err(Error::usage("thinning must be >= 1"));
        }
        if self.n_samples < 2 {
            return Err(Error::usage("need at least 2 disorder samples"));
        }
        if let Some(b) = self.burn_in {
            if b >= self.sweeps {
                return Err(Error::usage(format!("sweeps ({}) must exceed burn-in ({b})", self.sweeps)));
            }
        }
        Ok(())
    }
}

/// Estimate with sampling diagnostics.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct McEstimate {
    /// Stderr from the scatter of per-sample time averages, which carries
    /// both thermal and disorder fluctuations.
    pub estimate: Estimate,
    pub burn_in: u64,
    /// Mean integrated autocorrelation time in measurements.
    pub autocorrelation: f64,
    /// Root-mean-square blocked thermal stderr of the per-sample averages.
    pub thermal_stderr: f64,
    pub max_drift: f64,
}

fn pair_overlap(model: &ModelSpec, bonds: &[(usize, usize)], a: &[f64], b: &[f64]) -> f64 {
    match model {
        ModelSpec::Sk { n_spins } => {
            let m = a.iter().zip(b).map(|(x, y)| x * y).sum::<f64>() / *n_spins as f64;
            m * m
        }
        ModelSpec::Ea { .. } => {
            bonds
                .iter()
                .map(|&(i, j)| a[i] * a[j] * b[i] * b[j])
                .sum::<f64>()
                / bonds.len() as f64
        }
    }
}

struct Measurer<'a> {
    model: &'a ModelSpec,
    bonds: Vec<(usize, usize)>,
    poly: &'a OverlapPolynomial,
}

impl Measurer<'_> {
    fn value(&self, chains: &[ChainState]) -> f64 {
        let mut total = 0.0;
        for (m, c) in self.poly.terms() {
            let mut term = c;
            for (k, l, e) in m.factors() {
                let q = pair_overlap(
                    self.model,
                    &self.bonds,
                    chains[k as usize - 1].spins(),
                    chains[l as usize - 1].spins(),
                );
                term *= q.powi(e as i32);
            }
            total += term;
        }
        total
    }
}

struct ChainRun {
    series: Vec<f64>,
    max_drift: f64,
}

fn run_chains(
    kernel: &MetropolisKernel,
    measurer: &Measurer,
    mut rngs: Vec<ChaCha20Rng>,
    sweeps: u64,
    burn_in: u64,
    thinning: u64,
) -> ChainRun {
    let mut chains: Vec<ChainState> = rngs.iter_mut().map(|r| ChainState::random(kernel, r)).collect();
    let mut series = Vec::with_capacity(((sweeps - burn_in) / thinning) as usize);
    for t in 1..=sweeps {
        for (c, r) in chains.iter_mut().zip(rngs.iter_mut()) {
            kernel.sweep(c, r);
        }
        if t > burn_in && (t - burn_in).is_multiple_of(thinning) {
            series.push(measurer.value(&chains));
        }
    }
    ChainRun {
        series,
        max_drift: chains.iter().map(ChainState::max_drift).fold(0.0, f64::max),
    }
}

fn chain_rngs(seed: u64, lane: Lane, index: u64, replicas: u32) -> Vec<ChaCha20Rng> {
    (0..u64::from(replicas))
        .map(|c| StreamKey::new(seed, lane, index).with_chain(c).rng())
        .collect()
}

/// Burn-in from a pilot run on disorder sample 0: `10·thinning·τ`.
fn pilot_burn_in(model: &ModelSpec, poly: &OverlapPolynomial, beta: f64, lambda: f64, plan: &McPlan, measurer: &Measurer) -> Result<u64> {
    let disorder = sample_disorder_at(model, plan.seed, Lane::Disorder, 0);
    let kernel = MetropolisKernel::new(model, &disorder, beta, lambda)?;
    let length = plan.sweeps.min(4096);
    let discard = length / 4;
    let run = run_chains(
        &kernel,
        measurer,
        chain_rngs(plan.seed, Lane::Auxiliary, 0, plan.replicas.max(poly.max_label())),
        length,
        discard,
        plan.thinning,
    );
    let tau = integrated_autocorrelation(&run.series).max(0.5);
    let burn = (10.0 * plan.thinning as f64 * tau).ceil() as u64;
    Ok(burn.max(plan.thinning).min(plan.sweeps / 2))
}

/// Quenched `⟨G⟩_λ` with replica `k` realized by chain `k` on each disorder
/// sample; disorder samples come from the same stream as the exact engine.
pub fn mc_quenched_expectation(
    model: &ModelSpec,
    poly: &OverlapPolynomial,
    beta: f64,
    lambda: f64,
    plan: &McPlan,
) -> Result<McEstimate> {
    plan.validate(poly)?;
    debug_assert!(plan.replicas >= replica_count(poly) || poly.is_constant());
    let measurer = Measurer {
        model,
        bonds: model.bonds(),
        poly,
    };
    let burn_in = match plan.burn_in {
        Some(b) => b,
        None => pilot_burn_in(model, poly, beta, lambda, plan, &measurer)?,
    };
    let runs = (0..plan.n_samples as u64)
        .into_par_iter()
        .map(|i| {
            let disorder = sample_disorder_at(model, plan.seed, Lane::Disorder, i);
            let kernel = MetropolisKernel::new(model, &disorder, beta, lambda)?;
            let rngs = chain_rngs(plan.seed, Lane::Chain, i, plan.replicas);
            Ok(run_chains(&kernel, &measurer, rngs, plan.sweeps, burn_in, plan.thinning))
        })
        .collect::<Result<Vec<_>>>()?;
    let means: Vec<f64> = runs
        .iter()
        .map(|r| r.series.iter().sum::<f64>() / r.series.len() as f64)
        .collect();
    let n = runs.len() as f64;
    let thermal = (runs.iter().map(|r| blocked_stderr(&r.series).powi(2)).sum::<f64>() / n).sqrt();
    let tau = runs.iter().map(|r| integrated_autocorrelation(&r.series)).sum::<f64>() / n;
    Ok(McEstimate {
        estimate: Estimate::from_samples(&means),
        burn_in,
        autocorrelation: tau,
        thermal_stderr: thermal,
        max_drift: runs.iter().map(|r| r.max_drift).fold(0.0, f64::max),
    })
}
