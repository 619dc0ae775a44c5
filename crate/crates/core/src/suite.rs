//! The acceptance suite: eleven criteria, runnable at full or reduced
//! sample counts. Used by the `acceptance` test target and `spinstab selftest`.

use std::time::Instant;

use rand::Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::gibbs::{naive_replica_expectation, replica_expectation, Attachment, AttachmentSpec, EnergyTable, ModelContext};
use crate::mc::{mc_quenched_expectation, McPlan};
use crate::model::{covariance_scale, hamiltonian, overlap, perturbation, sample_disorder_at, ModelSpec, SpinConfig};
use crate::observable::{parse, OverlapMonomial, OverlapPolynomial};
use crate::quenched::{quenched_expectation, BetaGrid, RunPlan};
use crate::rng::{Lane, StreamKey};
use crate::stats::Estimate;
use crate::verify::{
    check_sumlaw, check_theorem1, checked_delta_g, check_theorem2, fluctuation_decomposition, rate_sweep, wick_selfcheck,
    CheckReport, Comparison, Tolerance, VerifyOptions,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Scale {
    /// The sample counts of the acceptance criteria.
    Full,
    /// Smaller sample counts for a quick self-test.
    Reduced,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SuiteOptions {
    pub scale: Scale,
    pub seed: u64,
    /// Negative control passed through to the Theorem-2 checks.
    pub mutate_delta_g: bool,
}

impl SuiteOptions {
    pub fn new(scale: Scale) -> Self {
        SuiteOptions {
            scale,
            seed: 1,
            mutate_delta_g: false,
        }
    }

    fn pick<T>(&self, full: T, reduced: T) -> T {
        match self.scale {
            Scale::Full => full,
            Scale::Reduced => reduced,
        }
    }

    fn check_samples(&self) -> usize {
        self.pick(10_000, 5_000)
    }

    fn verify_options(&self) -> VerifyOptions {
        VerifyOptions {
            mutate_delta_g: self.mutate_delta_g,
            ..VerifyOptions::default()
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CriterionOutcome {
    pub id: u8,
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
    pub elapsed_s: f64,
}

pub const CRITERIA: [(u8, &str); 11] = [
    (1, "normalization_and_bounds"),
    (2, "covariance_law"),
    (3, "engine_vs_oracle"),
    (4, "theorem2"),
    (5, "theorem1"),
    (6, "sum_law"),
    (7, "fluctuation_decomposition"),
    (8, "wick_selfcheck"),
    (9, "mc_backend"),
    (10, "rate_sweep"),
    (11, "determinism"),
];

struct Findings {
    passed: bool,
    lines: Vec<String>,
}

impl Findings {
    fn new() -> Self {
        Findings {
            passed: true,
            lines: Vec::new(),
        }
    }

    fn record(&mut self, ok: bool, line: impl Into<String>) {
        self.passed &= ok;
        let line = line.into();
        if ok {
            self.lines.push(line);
        } else {
            self.lines.push(format!("FAILED {line}"));
        }
    }

    fn report(&mut self, label: &str, r: &CheckReport) {
        let mut line = format!(
            "{label}: lhs={:.6e}±{:.1e} rhs={:.6e}±{:.1e} |d|={:.2e} tol={:.2e}",
            r.lhs.mean, r.lhs.stderr, r.rhs.mean, r.rhs.stderr, r.discrepancy, r.tolerance
        );
        for c in r.subchecks.iter().filter(|c| c.asserted && !c.passed()) {
            line.push_str(&format!(" [{} |d|={:.2e} tol={:.2e}]", c.name, c.discrepancy, c.tolerance));
        }
        self.record(r.all_passed(), line);
    }
}

fn model(desc: &str) -> ModelSpec {
    desc.parse().expect("fixed model descriptor")
}

fn q12() -> OverlapPolynomial {
    parse("q1,2").expect("fixed observable")
}

/// Runs one criterion; errors inside it become a failed outcome.
pub fn run_criterion(id: u8, opts: &SuiteOptions) -> CriterionOutcome {
    let started = Instant::now();
    let name = CRITERIA
        .iter()
        .find(|(i, _)| *i == id)
        .map_or("unknown", |(_, n)| *n);
    let result = match id {
        1 => normalization(opts),
        2 => covariance_law(opts),
        3 => engine_vs_oracle(opts),
        4 => theorem2(opts),
        5 => theorem1(opts),
        6 => sum_law(opts),
        7 => decomposition(opts),
        8 => wick(opts),
        9 => mc_backend(opts),
        10 => sweep(opts),
        11 => determinism(opts),
        _ => Err(Error::Usage(format!("no criterion {id}"))),
    };
    let (passed, detail) = match result {
        Ok(f) => (f.passed, f.lines.join("; ")),
        Err(e) => (false, format!("error: {e}")),
    };
    CriterionOutcome {
        id,
        name,
        passed,
        detail,
        elapsed_s: started.elapsed().as_secs_f64(),
    }
}

/// Runs every criterion in order, calling `each` as each one finishes.
pub fn run_all(opts: &SuiteOptions, mut each: impl FnMut(&CriterionOutcome)) -> Vec<CriterionOutcome> {
    CRITERIA
        .iter()
        .map(|(id, _)| {
            let o = run_criterion(*id, opts);
            each(&o);
            o
        })
        .collect()
}

fn normalization(opts: &SuiteOptions) -> Result<Findings> {
    let mut f = Findings::new();
    for desc in ["sk:8", "ea:3x3"] {
        let m = model(desc);
        let mut rng = StreamKey::new(opts.seed, Lane::Auxiliary, 1).rng();
        let (mut self_ok, mut bound_ok) = (true, true);
        for _ in 0..1000 {
            let s = SpinConfig::random(m.volume(), &mut rng);
            let t = SpinConfig::random(m.volume(), &mut rng);
            self_ok &= overlap(&m, &s, &s)? == 1.0 && overlap(&m, &t, &t)? == 1.0;
            bound_ok &= overlap(&m, &s, &t)?.abs() <= 1.0;
        }
        f.record(self_ok && bound_ok, format!("{desc}: 1000 pairs, Q(s,s)=1 {self_ok}, |Q|<=1 {bound_ok}"));
    }
    Ok(f)
}

fn covariance_law(opts: &SuiteOptions) -> Result<Findings> {
    let n = opts.pick(100_000, 20_000);
    let mut f = Findings::new();
    for desc in ["sk:4", "ea:2x2"] {
        let m = model(desc);
        let s = covariance_scale(&m).value();
        let mut rng = StreamKey::new(opts.seed, Lane::Auxiliary, 2).rng();
        let pairs: Vec<(SpinConfig, SpinConfig)> = (0..20)
            .map(|k| {
                let a = SpinConfig::random(m.volume(), &mut rng);
                let b = if k % 5 == 0 { a.clone() } else { SpinConfig::random(m.volume(), &mut rng) };
                (a, b)
            })
            .collect();
        let rows = (0..n as u64)
            .into_par_iter()
            .map(|i| {
                let d = sample_disorder_at(&m, opts.seed, Lane::Disorder, i);
                let mut row = Vec::with_capacity(60);
                for (a, b) in &pairs {
                    row.push(hamiltonian(&m, &d, a)? * hamiltonian(&m, &d, b)? / s);
                    row.push(perturbation(&m, &d, a)? * perturbation(&m, &d, b)?);
                    row.push(hamiltonian(&m, &d, a)? * perturbation(&m, &d, b)?);
                }
                Ok(row)
            })
            .collect::<Result<Vec<Vec<f64>>>>()?;
        let mut worst: f64 = 0.0;
        let mut failures = 0;
        for (k, (a, b)) in pairs.iter().enumerate() {
            let q = overlap(&m, a, b)?;
            for (col, target) in [(3 * k, q), (3 * k + 1, q), (3 * k + 2, 0.0)] {
                let e = Estimate::from_samples(&rows.iter().map(|r| r[col]).collect::<Vec<_>>());
                let z = (e.mean - target).abs() / e.stderr;
                worst = worst.max(z);
                if z > 4.0 {
                    failures += 1;
                }
            }
        }
        f.record(failures == 0, format!("{desc}: n={n}, 60 moments, max |z|={worst:.2}"));
    }
    Ok(f)
}

fn random_monomial<R: Rng>(rng: &mut R) -> (OverlapMonomial, u32) {
    let r = rng.random_range(2..=4u32);
    let mut m = OverlapMonomial::one();
    for _ in 0..rng.random_range(1..=4) {
        let k = rng.random_range(1..=r);
        let mut l = rng.random_range(1..=r);
        while l == k {
            l = rng.random_range(1..=r);
        }
        m.mul_pair(k, l, rng.random_range(1..=2)).expect("distinct labels");
    }
    (m, r)
}

fn engine_vs_oracle(opts: &SuiteOptions) -> Result<Findings> {
    let mut f = Findings::new();
    for desc in ["sk:3", "sk:4"] {
        let m = model(desc);
        let ctx = ModelContext::new(&m)?;
        let mut rng = StreamKey::new(opts.seed, Lane::Auxiliary, 3).rng();
        let cases: Vec<(OverlapPolynomial, AttachmentSpec)> = (0..50)
            .map(|_| {
                let (mono, r) = random_monomial(&mut rng);
                let mut attach = AttachmentSpec::none();
                if rng.random_bool(0.3) {
                    attach
                        .attach(rng.random_range(1..=r), Attachment::EnergyPerScale)
                        .expect("single attachment");
                }
                (OverlapPolynomial::monomial(mono, rng.random_range(-2.0..2.0)), attach)
            })
            .collect();
        let worst = (0..20u64)
            .into_par_iter()
            .map(|i| {
                let e = EnergyTable::new(&ctx, &sample_disorder_at(&m, opts.seed, Lane::Disorder, i))?;
                let w = e.weights(0.9, 0.4)?;
                let mut worst: f64 = 0.0;
                for (poly, attach) in &cases {
                    let fast = replica_expectation(&w, poly, attach)?;
                    let slow = naive_replica_expectation(&w, poly, attach)?;
                    let scale = fast.abs().max(slow.abs());
                    let rel = if scale > 0.0 { (fast - slow).abs() / scale } else { 0.0 };
                    worst = worst.max(rel);
                }
                Ok(worst)
            })
            .collect::<Result<Vec<f64>>>()?
            .into_iter()
            .fold(0.0, f64::max);
        f.record(worst <= 1e-12, format!("{desc}: 50 monomials x 20 samples, max rel err {worst:.2e}"));
    }
    Ok(f)
}

fn theorem2(opts: &SuiteOptions) -> Result<Findings> {
    let n = opts.check_samples();
    let vo = opts.verify_options();
    let mut f = Findings::new();
    let r = check_theorem2(&model("sk:6"), &q12(), 0.7, 0.0, n, opts.seed, &vo)?;
    f.report(&format!("sk:6 beta=0.7 sign {}", r.sign_convention.as_deref().unwrap_or("?")), &r);
    let r = check_theorem2(&model("ea:3x3"), &q12(), 0.5, 0.0, n, opts.seed, &vo)?;
    f.report("ea:3x3 beta=0.5", &r);
    for size in [2usize, 4, 8] {
        let plan = RunPlan::new(ModelSpec::sk(size)?, 0.0, 0.0, 10, opts.seed);
        let e = quenched_expectation(&plan, &checked_delta_g(&q12(), &vo))?;
        let nf = size as f64;
        let exact = 2.0 * (nf - 1.0) / (nf * nf * nf);
        let ok = (e.mean - exact).abs() <= 1e-14 * exact && e.stderr == 0.0;
        f.record(ok, format!("anchor sk:{size} beta=0: {:.15} vs {exact:.15}", e.mean));
    }
    Ok(f)
}

fn theorem1_grid() -> BetaGrid {
    BetaGrid::new(0.2, 1.0, 17).expect("fixed grid")
}

fn theorem1(opts: &SuiteOptions) -> Result<Findings> {
    let n = opts.check_samples();
    let vo = opts.verify_options();
    let mut f = Findings::new();
    for desc in ["sk:8", "ea:3x3"] {
        let r = check_theorem1(&model(desc), &q12(), &theorem1_grid(), 0.0, n, opts.seed, &vo)?;
        f.report(desc, &r);
        let b = r.subcheck("bound_scale").expect("bound subcheck");
        f.record(b.passed(), format!("{desc} bound |I|={:.4e} <= {:.4e}", b.discrepancy, b.rhs.mean));
    }
    Ok(f)
}

fn sum_law(opts: &SuiteOptions) -> Result<Findings> {
    let n = opts.check_samples();
    let mut f = Findings::new();
    for g in ["q1,2", "q1,2*q2,3"] {
        let r = check_sumlaw(&model("sk:4"), &parse(g)?, 0.6, 0.64, n, opts.seed, &opts.verify_options())?;
        f.report(&format!("{g} beta'={:.5}", r.values["beta_prime"]), &r);
    }
    Ok(f)
}

fn decomposition(opts: &SuiteOptions) -> Result<Findings> {
    let mut f = Findings::new();
    let r = fluctuation_decomposition(&model("sk:6"), &q12(), 0.7, 1000, opts.seed)?;
    let e = &r.estimates;
    f.record(
        r.all_passed(),
        format!(
            "total={:.4e} thermal={:.4e} disorder={:.4e} residual={:.1e}",
            e["total"].mean, e["thermal"].mean, e["disorder"].mean, r.discrepancy
        ),
    );
    Ok(f)
}

fn wick(opts: &SuiteOptions) -> Result<Findings> {
    let mut f = Findings::new();
    let r = wick_selfcheck(opts.pick(1_000_000, 200_000), opts.seed)?;
    for c in &r.subchecks {
        f.record(
            c.passed(),
            format!("{}: mc={:.5}±{:.1e} exact={:.5}", c.name, c.lhs.mean, c.lhs.stderr, c.rhs.mean),
        );
    }
    Ok(f)
}

fn mc_backend(opts: &SuiteOptions) -> Result<Findings> {
    let (n, sweeps, burn) = opts.pick((500, 10_000, 1_000), (100, 4_000, 500));
    let m = model("ea:3x3");
    let plan = McPlan {
        burn_in: Some(burn),
        ..McPlan::new(2, sweeps, n, opts.seed)
    };
    let mc = mc_quenched_expectation(&m, &q12(), 0.8, 0.0, &plan)?;
    let exact = quenched_expectation(&RunPlan::new(m, 0.8, 0.0, n, opts.seed), &q12())?;
    let c = Comparison::agreement("mc_vs_exact", mc.estimate, exact, Tolerance::default());
    let mut f = Findings::new();
    f.record(
        c.passed(),
        format!(
            "ea:3x3 beta=0.8 mc={:.5}±{:.1e} exact={:.5}±{:.1e} tau={:.2} drift={:.1e}",
            mc.estimate.mean, mc.estimate.stderr, exact.mean, exact.stderr, mc.autocorrelation, mc.max_drift
        ),
    );
    Ok(f)
}

fn sweep(opts: &SuiteOptions) -> Result<Findings> {
    let models: Vec<ModelSpec> = [4, 6, 8, 10].iter().map(|&n| ModelSpec::sk(n)).collect::<Result<_>>()?;
    let r = rate_sweep(&models, &q12(), &theorem1_grid(), 0.0, opts.check_samples(), opts.seed, &opts.verify_options())?;
    let mut f = Findings::new();
    let integrals: Vec<String> = r
        .table
        .as_ref()
        .map(|t| t.rows.iter().map(|row| format!("s={}:{:.4e}", row[0], row[2])).collect())
        .unwrap_or_default();
    f.report(
        &format!(
            "slope={:.3}±{:.3} (reported) {}",
            r.values["slope"],
            r.values["slope_stderr"],
            integrals.join(" ")
        ),
        &r,
    );
    Ok(f)
}

fn in_pool<T: Send>(threads: usize, job: impl FnOnce() -> T + Send) -> Result<T> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| Error::Usage(format!("thread pool: {e}")))?;
    Ok(pool.install(job))
}

fn determinism(opts: &SuiteOptions) -> Result<Findings> {
    let n = opts.check_samples();
    let vo = opts.verify_options();
    let run = |threads: usize| -> Result<Vec<Vec<u64>>> {
        in_pool(threads, || -> Result<Vec<Vec<u64>>> {
            let t2 = check_theorem2(&model("sk:6"), &q12(), 0.7, 0.0, n, opts.seed, &vo)?;
            let t1 = check_theorem1(&model("sk:8"), &q12(), &theorem1_grid(), 0.0, n, opts.seed, &vo)?;
            Ok(vec![t2.numeric_fingerprint(), t1.numeric_fingerprint()])
        })?
    };
    let one = run(1)?;
    let many = run(4)?;
    let mut f = Findings::new();
    for (k, label) in ["theorem2 sk:6", "theorem1 sk:8"].iter().enumerate() {
        f.record(
            one[k] == many[k],
            format!("{label}: {} numeric fields identical at 1 and 4 threads: {}", one[k].len(), one[k] == many[k]),
        );
    }
    Ok(f)
}
