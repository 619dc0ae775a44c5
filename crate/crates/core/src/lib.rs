//! Numerical verification of stochastic-stability identities for Gaussian
//! spin glasses (Sherrington-Kirkpatrick and Edwards-Anderson).
//!
//! Quenched expectations `⟨G⟩_λ = Av Ω_λ(G)` of overlap polynomials are
//! computed exactly per disorder sample by enumeration ([`gibbs`]), or by
//! Metropolis sampling for larger lattices ([`mc`]), and averaged over
//! disorder samples drawn from counter-based streams ([`quenched`]).
//! [`verify`] turns the β-averaged stability bound, the zero-average
//! overlap identities and their supporting relations into pass/fail checks.

pub mod error;
pub mod gibbs;
pub mod mc;
pub mod model;
pub mod observable;
pub mod quenched;
pub mod rng;
pub mod stats;
pub mod suite;
pub mod verify;
pub mod wick;

pub use error::{Error, Result};
pub use gibbs::{
    build_weights, log_partition, naive_replica_expectation, replica_expectation, Attachment,
    AttachmentSpec, EnergyTable, EngineCaps, ModelContext, WeightTable,
};
pub use model::{
    covariance_scale, hamiltonian, overlap, perturbation, sample_disorder, Boundary,
    CovarianceScale, DisorderSample, ModelSpec, SpinConfig,
};
pub use observable::{canonicalize, delta_g, parse, replica_count, OverlapMonomial, OverlapPolynomial};
pub use quenched::{BetaGrid, DeltaGEstimator, RunPlan};
pub use rng::{Lane, StreamKey};
pub use stats::Estimate;
pub use verify::{CheckReport, Comparison, Tolerance, Verdict};
