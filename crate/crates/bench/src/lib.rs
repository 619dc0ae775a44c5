//! Fixed inputs shared by the benchmarks.

use spinstab_core::model::sample_disorder_at;
use spinstab_core::{EnergyTable, Lane, ModelContext, ModelSpec, WeightTable};

/// Weight table for disorder sample 0 of seed 1 on `model`.
pub fn weights(model: &str, beta: f64, lambda: f64) -> WeightTable {
    let model: ModelSpec = model.parse().expect("valid model descriptor");
    let ctx = ModelContext::new(&model).expect("model within caps");
    let disorder = sample_disorder_at(&model, 1, Lane::Disorder, 0);
    EnergyTable::new(&ctx, &disorder)
        .and_then(|e| e.weights(beta, lambda))
        .expect("valid parameters")
}
