use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use spinstab_bench::weights;
use spinstab_core::gibbs::gibbs_mean;
use spinstab_core::model::sample_disorder_at;
use spinstab_core::{delta_g, parse, EnergyTable, Lane, ModelContext, ModelSpec};
use std::hint::black_box;

fn energy_table(c: &mut Criterion) {
    let mut group = c.benchmark_group("energy_table");
    for name in ["sk:10", "ea:4x4"] {
        let model: ModelSpec = name.parse().unwrap();
        let ctx = ModelContext::new(&model).unwrap();
        let disorder = sample_disorder_at(&model, 1, Lane::Disorder, 0);
        group.bench_function(name, |b| b.iter(|| EnergyTable::new(&ctx, black_box(&disorder)).unwrap()));
    }
    group.finish();
}

fn replica_mean(c: &mut Criterion) {
    let q12 = parse("q1,2").unwrap();
    let dg = delta_g(&q12);
    let mut group = c.benchmark_group("replica_mean");
    for name in ["sk:8", "sk:12", "ea:4x4"] {
        let w = weights(name, 0.7, 0.0);
        group.bench_with_input(BenchmarkId::new("q12", name), &w, |b, w| {
            b.iter(|| gibbs_mean(w, black_box(&q12)).unwrap())
        });
        group.bench_with_input(BenchmarkId::new("delta_g_q12", name), &w, |b, w| {
            b.iter(|| gibbs_mean(w, black_box(&dg)).unwrap())
        });
    }
    group.finish();
}

criterion_group!(benches, energy_table, replica_mean);
criterion_main!(benches);
