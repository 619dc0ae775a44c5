//! Exact Gibbs averages by enumeration of all `2^|Λ|` configurations.
//!
//! Per disorder sample the engine tabulates `H` and `K` once
//! ([`EnergyTable`]), derives log-weights `−βH + √λK` for any `(β, λ)`
//! ([`WeightTable`]), and evaluates R-replica product expectations of
//! overlap polynomials by eliminating replicas one at a time
//! (see [`elimination`]).
//!
//! Both overlap kernels depend on a pair of configurations only through
//! `σ ⊕ τ`, so the engine stores `Q` as a vector over XOR masks instead of a
//! `2^V × 2^V` matrix.

mod elimination;

use std::collections::BTreeMap;
use std::sync::{Arc, OnceLock};

use crate::error::{Error, Result};
use crate::model::{covariance_scale, overlap, DisorderSample, EnergyGeometry, ModelSpec, SpinConfig};
use crate::observable::{replica_count, OverlapPolynomial};

pub use elimination::fwht;

const CACHED_POWERS: usize = 8;

/// Enumeration and elimination limits.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EngineCaps {
    /// Largest volume that may be enumerated.
    pub max_volume: usize,
    /// Largest predicted number of elementary operations per monomial.
    pub max_cost: f64,
    /// Largest intermediate table, in entries.
    pub max_table: f64,
    /// The brute-force oracle refuses more than `2^this` replica tuples.
    pub naive_max_log2_tuples: u32,
    /// Pair messages use the Walsh-Hadamard transform from this volume up.
    pub convolution_min_volume: usize,
}

impl Default for EngineCaps {
    fn default() -> Self {
        EngineCaps {
            max_volume: 20,
            max_cost: 2f64.powi(36),
            max_table: 2f64.powi(27),
            naive_max_log2_tuples: 30,
            convolution_min_volume: 7,
        }
    }
}

/// Model data shared by every disorder sample: geometry, covariance scale
/// and the overlap kernel tabulated over XOR masks.
#[derive(Debug)]
pub struct ModelContext {
    model: ModelSpec,
    geometry: EnergyGeometry,
    scale: f64,
    caps: EngineCaps,
    kernel: Vec<f64>,
    powers: [OnceLock<Arc<Vec<f64>>>; CACHED_POWERS],
    spectra: [OnceLock<Arc<Vec<f64>>>; CACHED_POWERS],
}

impl ModelContext {
    pub fn new(model: &ModelSpec) -> Result<Arc<Self>> {
        Self::with_caps(model, EngineCaps::default())
    }

    pub fn with_caps(model: &ModelSpec, caps: EngineCaps) -> Result<Arc<Self>> {
        let volume = model.volume();
        if volume > caps.max_volume {
            return Err(Error::Capacity {
                what: "enumeration volume (spins)",
                requested: volume as f64,
                cap: caps.max_volume as f64,
            });
        }
        let geometry = EnergyGeometry::new(model);
        let kernel = overlap_by_mask(model, &geometry.bonds);
        Ok(Arc::new(ModelContext {
            model: model.clone(),
            geometry,
            scale: covariance_scale(model).value(),
            caps,
            kernel,
            powers: Default::default(),
            spectra: Default::default(),
        }))
    }

    pub fn model(&self) -> &ModelSpec {
        &self.model
    }

    pub fn volume(&self) -> usize {
        self.model.volume()
    }

    /// Number of configurations, `2^volume`.
    pub fn states(&self) -> usize {
        1usize << self.volume()
    }

    pub fn scale(&self) -> f64 {
        self.scale
    }

    pub fn caps(&self) -> &EngineCaps {
        &self.caps
    }

    /// `Q(σ, τ)` indexed by the mask `σ ⊕ τ`.
    pub fn kernel(&self) -> &[f64] {
        &self.kernel
    }

    pub(crate) fn kernel_power(&self, p: u32) -> Arc<Vec<f64>> {
        let make = || Arc::new(self.kernel.iter().map(|q| q.powi(p as i32)).collect::<Vec<_>>());
        match self.powers.get(p as usize - 1) {
            Some(cell) => cell.get_or_init(make).clone(),
            None => make(),
        }
    }

    /// Walsh-Hadamard transform of `Q^p`.
    pub(crate) fn kernel_spectrum(&self, p: u32) -> Arc<Vec<f64>> {
        let make = || {
            let mut s = (*self.kernel_power(p)).clone();
            fwht(&mut s);
            Arc::new(s)
        };
        match self.spectra.get(p as usize - 1) {
            Some(cell) => cell.get_or_init(make).clone(),
            None => make(),
        }
    }

    pub(crate) fn use_convolution(&self) -> bool {
        self.volume() >= self.caps.convolution_min_volume
    }

    pub(crate) fn geometry(&self) -> &EnergyGeometry {
        &self.geometry
    }
}

fn overlap_by_mask(model: &ModelSpec, bonds: &[(usize, usize)]) -> Vec<f64> {
    let v = model.volume();
    let states = 1usize << v;
    match model {
        ModelSpec::Sk { n_spins } => (0..states)
            .map(|x| {
                let m = (*n_spins as i64 - 2 * i64::from((x as u64).count_ones())) as f64 / *n_spins as f64;
                m * m
            })
            .collect(),
        ModelSpec::Ea { .. } => (0..states)
            .map(|x| {
                let agree: i64 = bonds
                    .iter()
                    .map(|&(a, b)| if ((x >> a) ^ (x >> b)) & 1 == 0 { 1 } else { -1 })
                    .sum();
                agree as f64 / bonds.len() as f64
            })
            .collect(),
    }
}

/// `H(σ)` and `K(σ)` for every configuration of one disorder sample.
#[derive(Debug, Clone)]
pub struct EnergyTable {
    ctx: Arc<ModelContext>,
    energy: Arc<Vec<f64>>,
    perturbation: Arc<Vec<f64>>,
    energy_per_scale: Arc<Vec<f64>>,
}

impl EnergyTable {
    pub fn new(ctx: &Arc<ModelContext>, disorder: &DisorderSample) -> Result<Self> {
        disorder.check_shape(ctx.model())?;
        let v = ctx.volume();
        let states = ctx.states();
        let geo = ctx.geometry();
        let mut spins = vec![0.0; v];
        let mut energy = Vec::with_capacity(states);
        let mut pert = Vec::with_capacity(states);
        for index in 0..states {
            for (i, s) in spins.iter_mut().enumerate() {
                *s = if (index >> i) & 1 == 1 { 1.0 } else { -1.0 };
            }
            energy.push(geo.hamiltonian(&disorder.main_couplings, &spins));
            pert.push(geo.perturbation(&disorder.perturbation_couplings, &spins));
        }
        let per_scale = energy.iter().map(|e| e / ctx.scale()).collect();
        Ok(EnergyTable {
            ctx: ctx.clone(),
            energy: Arc::new(energy),
            perturbation: Arc::new(pert),
            energy_per_scale: Arc::new(per_scale),
        })
    }

    pub fn context(&self) -> &Arc<ModelContext> {
        &self.ctx
    }

    pub fn energy(&self) -> &[f64] {
        &self.energy
    }

    pub fn perturbation(&self) -> &[f64] {
        &self.perturbation
    }

    /// Weights with the perturbation field negated; `K` and `−K` have the
    /// same law, which the λ finite-difference estimator exploits.
    pub fn with_negated_perturbation(&self) -> EnergyTable {
        EnergyTable {
            perturbation: Arc::new(self.perturbation.iter().map(|k| -k).collect()),
            ..self.clone()
        }
    }

    pub fn weights(&self, beta: f64, lambda: f64) -> Result<WeightTable> {
        WeightTable::from_energies(self, beta, lambda)
    }
}

/// Log Boltzmann weights `−βH(σ) + √λ K(σ)` of one replica, with the
/// normalized probabilities and `ln Z`.
#[derive(Debug, Clone)]
pub struct WeightTable {
    ctx: Arc<ModelContext>,
    beta: f64,
    lambda: f64,
    log_weights: Vec<f64>,
    probabilities: Vec<f64>,
    log_partition: f64,
    energy_per_scale: Arc<Vec<f64>>,
}

impl WeightTable {
    pub fn from_energies(energies: &EnergyTable, beta: f64, lambda: f64) -> Result<Self> {
        if !(beta >= 0.0 && beta.is_finite()) {
            return Err(Error::usage(format!("beta must be finite and >= 0, got {beta}")));
        }
        if !(lambda >= 0.0 && lambda.is_finite()) {
            return Err(Error::usage(format!("lambda must be finite and >= 0, got {lambda}")));
        }
        let root = lambda.sqrt();
        let log_weights: Vec<f64> = energies
            .energy
            .iter()
            .zip(energies.perturbation.iter())
            .map(|(h, k)| -beta * h + root * k)
            .collect();
        let (log_partition, probabilities) = normalize(&log_weights);
        Ok(WeightTable {
            ctx: energies.ctx.clone(),
            beta,
            lambda,
            log_weights,
            probabilities,
            log_partition,
            energy_per_scale: energies.energy_per_scale.clone(),
        })
    }

    pub fn context(&self) -> &Arc<ModelContext> {
        &self.ctx
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    pub fn log_weights(&self) -> &[f64] {
        &self.log_weights
    }

    pub fn probabilities(&self) -> &[f64] {
        &self.probabilities
    }

    pub fn log_partition(&self) -> f64 {
        self.log_partition
    }

    /// `h(σ) = H(σ)/s`.
    pub fn energy_per_scale(&self) -> &[f64] {
        &self.energy_per_scale
    }

    fn unary(&self, attachment: Option<Attachment>) -> Vec<f64> {
        match attachment {
            None => self.probabilities.clone(),
            Some(Attachment::EnergyPerScale) => self
                .probabilities
                .iter()
                .zip(self.energy_per_scale.iter())
                .map(|(p, h)| p * h)
                .collect(),
        }
    }
}

/// Overflow-safe `ln Σ exp(x_i)`.
pub fn log_sum_exp(xs: &[f64]) -> f64 {
    let max = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !max.is_finite() {
        return max;
    }
    max + xs.iter().map(|x| (x - max).exp()).sum::<f64>().ln()
}

fn normalize(log_weights: &[f64]) -> (f64, Vec<f64>) {
    let max = log_weights.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let shifted: Vec<f64> = log_weights.iter().map(|x| (x - max).exp()).collect();
    let total: f64 = shifted.iter().sum();
    let probs = shifted.iter().map(|w| w / total).collect();
    (max + total.ln(), probs)
}

/// Tabulates weights for an explicit disorder sample.
pub fn build_weights(
    ctx: &Arc<ModelContext>,
    disorder: &DisorderSample,
    beta: f64,
    lambda: f64,
) -> Result<WeightTable> {
    EnergyTable::new(ctx, disorder)?.weights(beta, lambda)
}

pub fn log_partition(weights: &WeightTable) -> f64 {
    weights.log_partition
}

/// Single-configuration factor multiplied into one replica.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Attachment {
    /// `h(σ) = H(σ)/s`.
    EnergyPerScale,
}

/// At most one attachment per replica label.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct AttachmentSpec {
    by_label: BTreeMap<u32, Attachment>,
}

impl AttachmentSpec {
    pub fn none() -> Self {
        Self::default()
    }

    pub fn energy_on(label: u32) -> Self {
        let mut a = Self::none();
        a.by_label.insert(label, Attachment::EnergyPerScale);
        a
    }

    pub fn attach(&mut self, label: u32, what: Attachment) -> Result<()> {
        if self.by_label.insert(label, what).is_some() {
            return Err(Error::usage(format!("replica {label} already has an attachment")));
        }
        Ok(())
    }

    pub fn is_empty(&self) -> bool {
        self.by_label.is_empty()
    }

    pub fn get(&self, label: u32) -> Option<Attachment> {
        self.by_label.get(&label).copied()
    }

    pub fn max_label(&self) -> u32 {
        self.by_label.keys().copied().max().unwrap_or(0)
    }

    fn validate(&self) -> Result<()> {
        if self.by_label.contains_key(&0) {
            return Err(Error::usage("unknown replica label 0; labels start at 1"));
        }
        Ok(())
    }
}

/// `Ω_λ(G · Π attachments)` over independent replicas sharing `weights`.
pub fn replica_expectation(
    weights: &WeightTable,
    poly: &OverlapPolynomial,
    attach: &AttachmentSpec,
) -> Result<f64> {
    attach.validate()?;
    let ctx = weights.context();
    // Without attachments every replica is interchangeable, so equivalent
    // monomials are merged and evaluated through one representative.
    let merged;
    let poly = if attach.is_empty() {
        merged = poly.canonicalized();
        &merged
    } else {
        poly
    };
    // plan every term before running any, so a capacity error costs nothing
    let planned = poly
        .terms()
        .map(|(m, c)| {
            let problem = elimination::Problem::new(m, attach);
            elimination::plan(ctx, &problem).map(|plan| (c, problem, plan))
        })
        .collect::<Result<Vec<_>>>()?;
    let mut total = 0.0;
    for (c, problem, plan) in &planned {
        let unaries = problem.labels().iter().map(|&l| weights.unary(attach.get(l))).collect();
        total += c * elimination::execute(ctx, problem, plan, unaries);
    }
    Ok(total)
}

/// Predicted elementary-operation count of [`replica_expectation`].
pub fn predicted_cost(ctx: &ModelContext, poly: &OverlapPolynomial, attach: &AttachmentSpec) -> Result<f64> {
    let mut total = 0.0;
    for (m, _) in poly.terms() {
        total += elimination::plan(ctx, &elimination::Problem::new(m, attach))?.cost;
    }
    Ok(total)
}

/// Brute-force sum over all R-tuples of configurations; the reference for
/// [`replica_expectation`].
pub fn naive_replica_expectation(
    weights: &WeightTable,
    poly: &OverlapPolynomial,
    attach: &AttachmentSpec,
) -> Result<f64> {
    attach.validate()?;
    let ctx = weights.context();
    let model = ctx.model();
    let v = ctx.volume();
    let r = replica_count(poly).max(attach.max_label()) as usize;
    let log2_tuples = (v * r) as u32;
    if log2_tuples > ctx.caps.naive_max_log2_tuples {
        return Err(Error::Capacity {
            what: "brute-force replica tuples",
            requested: 2f64.powi(log2_tuples as i32),
            cap: 2f64.powi(ctx.caps.naive_max_log2_tuples as i32),
        });
    }
    let states = 1usize << v;
    let configs: Vec<SpinConfig> = (0..states as u64).map(|i| SpinConfig::from_index(i, v)).collect();
    let q = |a: usize, b: usize| overlap(model, &configs[a], &configs[b]).expect("shapes match");
    let probs = weights.probabilities();
    let h = weights.energy_per_scale();

    let terms: Vec<(f64, Vec<(usize, usize, i32)>)> = poly
        .terms()
        .map(|(m, c)| {
            let fs = m
                .factors()
                .map(|(k, l, e)| (k as usize - 1, l as usize - 1, e as i32))
                .collect();
            (c, fs)
        })
        .collect();
    let attached: Vec<usize> = (1..=r as u32)
        .filter(|&l| attach.get(l).is_some())
        .map(|l| l as usize - 1)
        .collect();

    let mut tuple = vec![0usize; r];
    let mut total = 0.0;
    loop {
        let mut w: f64 = tuple.iter().map(|&s| probs[s]).product();
        for &a in &attached {
            w *= h[tuple[a]];
        }
        let mut g = 0.0;
        for (c, fs) in &terms {
            g += c * fs.iter().map(|&(k, l, e)| q(tuple[k], tuple[l]).powi(e)).product::<f64>();
        }
        total += w * g;
        // odometer
        let mut i = 0;
        loop {
            if i == r {
                return Ok(total);
            }
            tuple[i] += 1;
            if tuple[i] < states {
                break;
            }
            tuple[i] = 0;
            i += 1;
        }
    }
}

/// `Ω_λ(G)` convenience without attachments.
pub fn gibbs_mean(weights: &WeightTable, poly: &OverlapPolynomial) -> Result<f64> {
    replica_expectation(weights, poly, &AttachmentSpec::none())
}

#[cfg(test)]
mod tests;
