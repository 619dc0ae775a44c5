//! Gaussian spin-glass models: SK and nearest-neighbour EA.
//!
//! Both models are centered Gaussian families with `Av(H(σ)H(τ)) = s·Q(σ,τ)`,
//! where `Q` is the model's overlap kernel and `s` its covariance scale
//! (`N` for SK, the bond count for EA). The perturbation field `K` is built
//! from an independent copy of the couplings and has covariance exactly `Q`.

use std::fmt;
use std::str::FromStr;

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::{Lane, StreamKey};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Boundary {
    Periodic,
    Free,
}

/// Which model, and its geometry.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ModelSpec {
    Sk {
        n_spins: usize,
    },
    Ea {
        side_lengths: Vec<usize>,
        boundary: Boundary,
    },
}

/// The factor `s` in `Av(H(σ)H(τ)) = s·Q(σ,τ)`.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Serialize, Deserialize)]
pub struct CovarianceScale(pub f64);

impl CovarianceScale {
    pub fn value(self) -> f64 {
        self.0
    }
}

impl ModelSpec {
    pub fn sk(n_spins: usize) -> Result<Self> {
        if n_spins == 0 {
            return Err(Error::usage("SK model needs at least one spin"));
        }
        Ok(ModelSpec::Sk { n_spins })
    }

    pub fn ea(side_lengths: Vec<usize>, boundary: Boundary) -> Result<Self> {
        if side_lengths.is_empty() {
            return Err(Error::usage("EA lattice needs at least one dimension"));
        }
        if let Some(l) = side_lengths.iter().find(|&&l| l < 2) {
            return Err(Error::usage(format!(
                "EA side lengths must be at least 2, got {l}"
            )));
        }
        Ok(ModelSpec::Ea {
            side_lengths,
            boundary,
        })
    }

    /// Number of sites `|Λ|`.
    pub fn volume(&self) -> usize {
        match self {
            ModelSpec::Sk { n_spins } => *n_spins,
            ModelSpec::Ea { side_lengths, .. } => side_lengths.iter().product(),
        }
    }

    pub fn dimension(&self) -> Option<usize> {
        match self {
            ModelSpec::Sk { .. } => None,
            ModelSpec::Ea { side_lengths, .. } => Some(side_lengths.len()),
        }
    }

    /// Number of nearest-neighbour bonds; `None` for SK.
    pub fn bond_count(&self) -> Option<usize> {
        match self {
            ModelSpec::Sk { .. } => None,
            ModelSpec::Ea {
                side_lengths,
                boundary,
            } => {
                let volume: usize = side_lengths.iter().product();
                Some(match boundary {
                    Boundary::Periodic => side_lengths.len() * volume,
                    Boundary::Free => side_lengths
                        .iter()
                        .map(|&l| (l - 1) * (volume / l))
                        .sum(),
                })
            }
        }
    }

    /// Bond list for EA in row-major site order (last coordinate fastest).
    ///
    /// With periodic boundaries every site contributes one bond per
    /// direction, so a side of length 2 yields two distinct bonds between
    /// the same pair of sites.
    pub fn bonds(&self) -> Vec<(usize, usize)> {
        let ModelSpec::Ea {
            side_lengths,
            boundary,
        } = self
        else {
            return Vec::new();
        };
        let d = side_lengths.len();
        let volume: usize = side_lengths.iter().product();
        let mut strides = vec![1usize; d];
        for k in (0..d.saturating_sub(1)).rev() {
            strides[k] = strides[k + 1] * side_lengths[k + 1];
        }
        let mut bonds = Vec::with_capacity(self.bond_count().unwrap_or(0));
        for site in 0..volume {
            for k in 0..d {
                let coord = (site / strides[k]) % side_lengths[k];
                if coord + 1 < side_lengths[k] {
                    bonds.push((site, site + strides[k]));
                } else if *boundary == Boundary::Periodic {
                    bonds.push((site, site - coord * strides[k]));
                }
            }
        }
        bonds
    }

    /// Length of each coupling array in a [`DisorderSample`].
    pub fn coupling_count(&self) -> usize {
        match self {
            ModelSpec::Sk { n_spins } => n_spins * n_spins,
            ModelSpec::Ea { .. } => self.bond_count().unwrap_or(0),
        }
    }
}

pub fn covariance_scale(model: &ModelSpec) -> CovarianceScale {
    match model {
        ModelSpec::Sk { n_spins } => CovarianceScale(*n_spins as f64),
        ModelSpec::Ea { .. } => CovarianceScale(model.bond_count().unwrap_or(0) as f64),
    }
}

impl fmt::Display for ModelSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ModelSpec::Sk { n_spins } => write!(f, "sk:{n_spins}"),
            ModelSpec::Ea {
                side_lengths,
                boundary,
            } => {
                let sides: Vec<String> = side_lengths.iter().map(|l| l.to_string()).collect();
                let b = match boundary {
                    Boundary::Periodic => "periodic",
                    Boundary::Free => "free",
                };
                write!(f, "ea:{}:{b}", sides.join("x"))
            }
        }
    }
}

/// Parses descriptors such as `sk:8`, `ea:3x3` or `ea:4x4x4:free`.
/// EA defaults to periodic boundaries.
impl FromStr for ModelSpec {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::usage(format!("invalid model descriptor '{s}'"));
        let mut parts = s.trim().split(':');
        let kind = parts.next().ok_or_else(bad)?.to_ascii_lowercase();
        match kind.as_str() {
            "sk" => {
                let n = parts.next().ok_or_else(bad)?.parse().map_err(|_| bad())?;
                if parts.next().is_some() {
                    return Err(bad());
                }
                ModelSpec::sk(n)
            }
            "ea" => {
                let sides = parts
                    .next()
                    .ok_or_else(bad)?
                    .split('x')
                    .map(|t| t.parse::<usize>().map_err(|_| bad()))
                    .collect::<Result<Vec<_>>>()?;
                let boundary = match parts.next() {
                    None | Some("periodic") | Some("pbc") => Boundary::Periodic,
                    Some("free") | Some("open") => Boundary::Free,
                    Some(_) => return Err(bad()),
                };
                if parts.next().is_some() {
                    return Err(bad());
                }
                ModelSpec::ea(sides, boundary)
            }
            _ => Err(bad()),
        }
    }
}

/// Bit-packed Ising configuration: bit 1 is spin +1, bit 0 is spin −1.
/// Site `i` lives in bit `i % 64` of word `i / 64`.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct SpinConfig {
    words: Vec<u64>,
    len: usize,
}

impl SpinConfig {
    pub fn all_down(len: usize) -> Self {
        SpinConfig {
            words: vec![0; len.div_ceil(64)],
            len,
        }
    }

    pub fn all_up(len: usize) -> Self {
        let mut c = Self::all_down(len);
        for i in 0..len {
            c.set(i, true);
        }
        c
    }

    /// Configuration whose bits are the low `len` bits of `index`.
    pub fn from_index(index: u64, len: usize) -> Self {
        let mut c = Self::all_down(len);
        if len > 0 {
            let mask = if len >= 64 { u64::MAX } else { (1u64 << len) - 1 };
            c.words[0] = index & mask;
        }
        c
    }

    pub fn from_spins(spins: &[i8]) -> Self {
        let mut c = Self::all_down(spins.len());
        for (i, &s) in spins.iter().enumerate() {
            c.set(i, s > 0);
        }
        c
    }

    pub fn random<R: Rng + ?Sized>(len: usize, rng: &mut R) -> Self {
        let mut c = Self::all_down(len);
        for (w, word) in c.words.iter_mut().enumerate() {
            let bits = (len - 64 * w).min(64);
            let mask = if bits == 64 { u64::MAX } else { (1u64 << bits) - 1 };
            *word = rng.random::<u64>() & mask;
        }
        c
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    #[inline]
    pub fn is_up(&self, i: usize) -> bool {
        (self.words[i >> 6] >> (i & 63)) & 1 == 1
    }

    /// Spin value ±1 as a float.
    #[inline]
    pub fn spin(&self, i: usize) -> f64 {
        if self.is_up(i) {
            1.0
        } else {
            -1.0
        }
    }

    #[inline]
    pub fn set(&mut self, i: usize, up: bool) {
        let bit = 1u64 << (i & 63);
        if up {
            self.words[i >> 6] |= bit;
        } else {
            self.words[i >> 6] &= !bit;
        }
    }

    #[inline]
    pub fn flip(&mut self, i: usize) {
        self.words[i >> 6] ^= 1u64 << (i & 63);
    }

    /// Global spin flip.
    pub fn flipped(&self) -> Self {
        let mut c = self.clone();
        for i in 0..self.len {
            c.flip(i);
        }
        c
    }

    /// The enumeration index, when the configuration fits in 64 bits.
    pub fn to_index(&self) -> Option<u64> {
        (self.len <= 64).then(|| self.words.first().copied().unwrap_or(0))
    }

    pub fn spins(&self) -> impl Iterator<Item = f64> + '_ {
        (0..self.len).map(|i| self.spin(i))
    }

    /// Number of sites where the two configurations differ.
    fn mismatches(&self, other: &SpinConfig) -> u32 {
        self.words
            .iter()
            .zip(&other.words)
            .map(|(a, b)| (a ^ b).count_ones())
            .sum()
    }
}

/// One joint realization of the main couplings (building `H`) and the
/// independent perturbation couplings (building `K`).
///
/// SK arrays are `N×N` row-major over ordered pairs including the diagonal;
/// EA arrays hold one entry per bond in [`ModelSpec::bonds`] order.
#[derive(Debug, Clone, PartialEq)]
pub struct DisorderSample {
    pub main_couplings: Vec<f64>,
    pub perturbation_couplings: Vec<f64>,
}

impl DisorderSample {
    pub fn zeros(model: &ModelSpec) -> Self {
        let n = model.coupling_count();
        DisorderSample {
            main_couplings: vec![0.0; n],
            perturbation_couplings: vec![0.0; n],
        }
    }

    pub fn check_shape(&self, model: &ModelSpec) -> Result<()> {
        let n = model.coupling_count();
        if self.main_couplings.len() != n || self.perturbation_couplings.len() != n {
            return Err(Error::usage(format!(
                "disorder sample has {}/{} couplings, model {model} needs {n}",
                self.main_couplings.len(),
                self.perturbation_couplings.len()
            )));
        }
        Ok(())
    }
}

/// Draws fresh i.i.d. standard-normal main couplings, then perturbation
/// couplings, from `rng`.
pub fn sample_disorder<R: Rng + ?Sized>(model: &ModelSpec, rng: &mut R) -> DisorderSample {
    let n = model.coupling_count();
    let main_couplings = (0..n).map(|_| rng.sample(StandardNormal)).collect();
    let perturbation_couplings = (0..n).map(|_| rng.sample(StandardNormal)).collect();
    DisorderSample {
        main_couplings,
        perturbation_couplings,
    }
}

/// Disorder sample number `index` of the stream `(seed, lane)`.
pub fn sample_disorder_at(model: &ModelSpec, seed: u64, lane: Lane, index: u64) -> DisorderSample {
    sample_disorder(model, &mut StreamKey::new(seed, lane, index).rng())
}

fn check_config(model: &ModelSpec, config: &SpinConfig) -> Result<()> {
    if config.len() != model.volume() {
        return Err(Error::usage(format!(
            "configuration has {} spins, model {model} has volume {}",
            config.len(),
            model.volume()
        )));
    }
    Ok(())
}

/// Quadratic form `Σ_{ij} J_ij s_i s_j` over ordered pairs including `i = j`.
#[inline]
pub(crate) fn sk_form(couplings: &[f64], spins: &[f64]) -> f64 {
    let n = spins.len();
    let mut total = 0.0;
    for (i, &si) in spins.iter().enumerate() {
        let row = &couplings[i * n..(i + 1) * n];
        let field: f64 = row.iter().zip(spins).map(|(j, s)| j * s).sum();
        total += si * field;
    }
    total
}

/// `Σ_b J_b s_a s_b` over the bond list.
#[inline]
pub(crate) fn bond_form(couplings: &[f64], bonds: &[(usize, usize)], spins: &[f64]) -> f64 {
    couplings
        .iter()
        .zip(bonds)
        .map(|(j, &(a, b))| j * spins[a] * spins[b])
        .sum()
}

/// Precomputed geometry for repeated energy evaluation on one model.
#[derive(Debug, Clone)]
pub(crate) struct EnergyGeometry {
    pub model: ModelSpec,
    pub bonds: Vec<(usize, usize)>,
}

impl EnergyGeometry {
    pub fn new(model: &ModelSpec) -> Self {
        EnergyGeometry {
            model: model.clone(),
            bonds: model.bonds(),
        }
    }

    pub fn hamiltonian(&self, main: &[f64], spins: &[f64]) -> f64 {
        match self.model {
            ModelSpec::Sk { n_spins } => -sk_form(main, spins) / (n_spins as f64).sqrt(),
            ModelSpec::Ea { .. } => -bond_form(main, &self.bonds, spins),
        }
    }

    pub fn perturbation(&self, pert: &[f64], spins: &[f64]) -> f64 {
        match self.model {
            ModelSpec::Sk { n_spins } => sk_form(pert, spins) / n_spins as f64,
            ModelSpec::Ea { .. } => {
                bond_form(pert, &self.bonds, spins) / (self.bonds.len() as f64).sqrt()
            }
        }
    }
}

/// `H_Λ(σ)`: SK `−N^{-1/2} Σ_{ij} J_ij σ_i σ_j`, EA `−Σ_b J_b σ_b`.
pub fn hamiltonian(model: &ModelSpec, disorder: &DisorderSample, config: &SpinConfig) -> Result<f64> {
    disorder.check_shape(model)?;
    check_config(model, config)?;
    let spins: Vec<f64> = config.spins().collect();
    Ok(EnergyGeometry::new(model).hamiltonian(&disorder.main_couplings, &spins))
}

/// `K_Λ(σ)`: SK `N^{-1} Σ_{ij} J'_ij σ_i σ_j`, EA `|B|^{-1/2} Σ_b J'_b σ_b`.
pub fn perturbation(model: &ModelSpec, disorder: &DisorderSample, config: &SpinConfig) -> Result<f64> {
    disorder.check_shape(model)?;
    check_config(model, config)?;
    let spins: Vec<f64> = config.spins().collect();
    Ok(EnergyGeometry::new(model).perturbation(&disorder.perturbation_couplings, &spins))
}

/// Covariance kernel `Q_Λ(σ,τ)`: squared site overlap for SK, bond overlap for EA.
pub fn overlap(model: &ModelSpec, sigma: &SpinConfig, tau: &SpinConfig) -> Result<f64> {
    check_config(model, sigma)?;
    check_config(model, tau)?;
    Ok(match model {
        ModelSpec::Sk { n_spins } => {
            let n = *n_spins as i64;
            let agree = n - 2 * i64::from(sigma.mismatches(tau));
            let m = agree as f64 / n as f64;
            m * m
        }
        ModelSpec::Ea { .. } => {
            let bonds = model.bonds();
            let agree: i64 = bonds
                .iter()
                .map(|&(a, b)| {
                    let same = (sigma.is_up(a) == tau.is_up(a)) == (sigma.is_up(b) == tau.is_up(b));
                    if same {
                        1
                    } else {
                        -1
                    }
                })
                .sum();
            agree as f64 / bonds.len() as f64
        }
    })
}
