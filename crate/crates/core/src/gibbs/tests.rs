use super::*;
use crate::model::{hamiltonian, perturbation, sample_disorder_at, Boundary};
use crate::observable::{parse, OverlapMonomial};
use crate::rng::Lane;
use proptest::prelude::*;

fn ctx(desc: &str) -> Arc<ModelContext> {
    ModelContext::new(&desc.parse().unwrap()).unwrap()
}

fn table(desc: &str, seed: u64, beta: f64, lambda: f64) -> WeightTable {
    let c = ctx(desc);
    let d = sample_disorder_at(c.model(), seed, Lane::Disorder, 0);
    build_weights(&c, &d, beta, lambda).unwrap()
}

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1e-300)
}

#[test]
fn zero_temperature_weights() {
    let w = table("sk:5", 1, 0.0, 0.0);
    assert!(w.log_weights().iter().all(|&x| x == 0.0));
    assert!((w.log_partition() - 5.0 * 2f64.ln()).abs() < 1e-14);
}

#[test]
fn lambda_zero_weights_are_minus_beta_h() {
    let c = ctx("ea:3x3");
    let d = sample_disorder_at(c.model(), 9, Lane::Disorder, 3);
    let w = build_weights(&c, &d, 0.37, 0.0).unwrap();
    for i in [0u64, 5, 77, 511] {
        let cfg = SpinConfig::from_index(i, 9);
        assert_eq!(w.log_weights()[i as usize], -0.37 * hamiltonian(c.model(), &d, &cfg).unwrap());
    }
}

#[test]
fn weights_match_direct_formula() {
    let c = ctx("sk:2");
    let d = DisorderSample {
        main_couplings: vec![0.3, -1.2, 0.7, 2.0],
        perturbation_couplings: vec![-0.4, 0.1, 1.5, -0.9],
    };
    let (beta, lambda) = (0.5, 0.8);
    let w = build_weights(&c, &d, beta, lambda).unwrap();
    for i in 0..4u64 {
        let s = SpinConfig::from_index(i, 2);
        let (s0, s1) = (s.spin(0), s.spin(1));
        let j = &d.main_couplings;
        let k = &d.perturbation_couplings;
        let h = -(j[0] * s0 * s0 + j[1] * s0 * s1 + j[2] * s1 * s0 + j[3] * s1 * s1) / 2f64.sqrt();
        let kk = (k[0] * s0 * s0 + k[1] * s0 * s1 + k[2] * s1 * s0 + k[3] * s1 * s1) / 2.0;
        let expect = -beta * h + lambda.sqrt() * kk;
        assert!((w.log_weights()[i as usize] - expect).abs() < 1e-15);
        assert!((perturbation(c.model(), &d, &s).unwrap() - kk).abs() < 1e-15);
    }
    let total: f64 = w.probabilities().iter().sum();
    assert!((total - 1.0).abs() < 1e-12);
}

#[test]
fn single_spin_partition_function() {
    let c = ctx("sk:1");
    let d = DisorderSample {
        main_couplings: vec![0.83],
        perturbation_couplings: vec![0.0],
    };
    let w = build_weights(&c, &d, 1.7, 0.0).unwrap();
    assert!((log_partition(&w) - (2f64.ln() + 1.7 * 0.83)).abs() < 1e-14);
}

#[test]
fn log_sum_exp_shift_and_overflow() {
    let xs = [1.0, 2.5, -3.0, 0.25];
    let base = log_sum_exp(&xs);
    let shifted: Vec<f64> = xs.iter().map(|x| x + 1000.0).collect();
    assert!((log_sum_exp(&shifted) - (base + 1000.0)).abs() < 1e-12);
    let huge = [1.0e4, 1.0e4 - 1.0, -1.0e4];
    let v = log_sum_exp(&huge);
    assert!(v.is_finite());
    assert!((v - (1.0e4 + (1.0 + (-1f64).exp()).ln())).abs() < 1e-10);
}

#[test]
fn invalid_parameters_rejected() {
    let c = ctx("sk:3");
    let d = sample_disorder_at(c.model(), 1, Lane::Disorder, 0);
    assert!(matches!(build_weights(&c, &d, -0.1, 0.0), Err(Error::Usage(_))));
    assert!(matches!(build_weights(&c, &d, 0.1, -1.0), Err(Error::Usage(_))));
    assert!(matches!(build_weights(&c, &d, f64::NAN, 0.0), Err(Error::Usage(_))));
    let wrong = sample_disorder_at(&ModelSpec::sk(4).unwrap(), 1, Lane::Disorder, 0);
    assert!(build_weights(&c, &wrong, 0.1, 0.0).is_err());
}

#[test]
fn volume_cap_is_a_capacity_error() {
    let err = ModelContext::new(&ModelSpec::sk(21).unwrap()).unwrap_err();
    match err {
        Error::Capacity { cap, requested, .. } => {
            assert_eq!(cap, 20.0);
            assert_eq!(requested, 21.0);
        }
        other => panic!("{other:?}"),
    }
    let caps = EngineCaps {
        max_volume: 4,
        ..EngineCaps::default()
    };
    assert!(ModelContext::with_caps(&ModelSpec::sk(5).unwrap(), caps).is_err());
}

#[test]
fn constant_polynomial_is_normalized() {
    let w = table("sk:4", 2, 0.9, 0.3);
    let one = OverlapPolynomial::constant(1.0);
    assert_eq!(gibbs_mean(&w, &one).unwrap(), 1.0);
    assert!((naive_replica_expectation(&w, &one, &AttachmentSpec::none()).unwrap() - 1.0).abs() < 1e-14);
}

#[test]
fn uniform_measure_moments() {
    for n in [2usize, 4, 8] {
        let w = table(&format!("sk:{n}"), 3, 0.0, 0.0);
        let q = gibbs_mean(&w, &parse("q1,2").unwrap()).unwrap();
        assert!((q - 1.0 / n as f64).abs() < 1e-14, "n={n} q={q}");
        let q2 = gibbs_mean(&w, &parse("q1,2^2").unwrap()).unwrap();
        let nf = n as f64;
        assert!((q2 - (3.0 / (nf * nf) - 2.0 / (nf * nf * nf))).abs() < 1e-14);
    }
    let w = table("sk:4", 3, 0.0, 0.0);
    let naive = naive_replica_expectation(&w, &parse("q1,2").unwrap(), &AttachmentSpec::none()).unwrap();
    assert_eq!(naive, 0.25);
    for desc in ["ea:3x3", "ea:4:free", "ea:2x2"] {
        let w = table(desc, 3, 0.0, 0.0);
        let q = gibbs_mean(&w, &parse("q1,2").unwrap()).unwrap();
        assert!(q.abs() < 1e-15, "{desc}: {q}");
    }
}

#[test]
fn engine_matches_oracle_on_triangle() {
    let w = table("sk:3", 5, 0.8, 0.4);
    let g = parse("q1,2*q2,3*q1,3").unwrap();
    let a = gibbs_mean(&w, &g).unwrap();
    let b = naive_replica_expectation(&w, &g, &AttachmentSpec::none()).unwrap();
    assert!(rel(a, b) < 1e-12, "{a} vs {b}");
}

#[test]
fn engine_matches_oracle_with_attachments() {
    for desc in ["sk:4", "ea:2x2", "ea:3:free"] {
        let w = table(desc, 6, 1.1, 0.2);
        let g = parse("q1,2^2 - 0.5 q1,3*q2,3 + 2 q1,2*q3,4").unwrap();
        for att in [AttachmentSpec::none(), AttachmentSpec::energy_on(1), AttachmentSpec::energy_on(4)] {
            let a = replica_expectation(&w, &g, &att).unwrap();
            let b = naive_replica_expectation(&w, &g, &att).unwrap();
            assert!((a - b).abs() <= 1e-12 * b.abs().max(1e-3), "{desc} {att:?}: {a} vs {b}");
        }
    }
}

#[test]
fn convolution_path_matches_direct_path() {
    let model: ModelSpec = "sk:8".parse().unwrap();
    let fast = ModelContext::new(&model).unwrap();
    let slow = ModelContext::with_caps(
        &model,
        EngineCaps {
            convolution_min_volume: 64,
            ..EngineCaps::default()
        },
    )
    .unwrap();
    let d = sample_disorder_at(&model, 8, Lane::Disorder, 0);
    let g = delta_g_probe();
    let wa = build_weights(&fast, &d, 0.9, 0.3).unwrap();
    let wb = build_weights(&slow, &d, 0.9, 0.3).unwrap();
    for att in [AttachmentSpec::none(), AttachmentSpec::energy_on(2)] {
        let a = replica_expectation(&wa, &g, &att).unwrap();
        let b = replica_expectation(&wb, &g, &att).unwrap();
        assert!((a - b).abs() < 1e-13, "{a} vs {b}");
    }
}

fn delta_g_probe() -> OverlapPolynomial {
    parse("q1,2^2 - 2 q1,2*q1,3 - 2 q1,2*q2,3 + 3 q1,2*q3,4").unwrap()
}

#[test]
fn disjoint_supports_factorize() {
    for desc in ["sk:5", "ea:3:periodic"] {
        let w = table(desc, 12, 0.7, 0.5);
        let joint = gibbs_mean(&w, &parse("q1,2*q3,4").unwrap()).unwrap();
        let single = gibbs_mean(&w, &parse("q1,2").unwrap()).unwrap();
        assert!(rel(joint, single * single) < 1e-12);
    }
}

#[test]
fn relabeling_replicas_is_exact() {
    let w = table("sk:6", 13, 0.9, 0.0);
    let a = gibbs_mean(&w, &parse("q1,2*q2,3").unwrap()).unwrap();
    let b = gibbs_mean(&w, &parse("q1,3*q3,2").unwrap()).unwrap();
    let c = gibbs_mean(&w, &parse("q2,4*q4,1").unwrap()).unwrap();
    assert_eq!(a, b);
    assert_eq!(a, c);
}

#[test]
fn overlap_mean_ranges() {
    for seed in 0..5 {
        let sk = gibbs_mean(&table("sk:6", seed, 1.5, 0.0), &parse("q1,2").unwrap()).unwrap();
        assert!((0.0..=1.0).contains(&sk));
        let ea = gibbs_mean(&table("ea:3x3", seed, 1.5, 0.0), &parse("q1,2").unwrap()).unwrap();
        assert!((-1.0..=1.0).contains(&ea));
    }
}

#[test]
fn kernel_agrees_with_model_overlap() {
    for desc in ["sk:5", "ea:2x3:free", "ea:2x2"] {
        let c = ctx(desc);
        let v = c.volume();
        for (a, b) in [(0u64, 3u64), (5, 9), (17, 30), (1, 1)] {
            let (a, b) = (a % c.states() as u64, b % c.states() as u64);
            let q = overlap(c.model(), &SpinConfig::from_index(a, v), &SpinConfig::from_index(b, v)).unwrap();
            assert_eq!(c.kernel()[(a ^ b) as usize], q);
        }
    }
}

#[test]
fn cost_cap_is_a_capacity_error() {
    let model = ModelSpec::ea(vec![4, 3], Boundary::Periodic).unwrap();
    let c = ModelContext::with_caps(
        &model,
        EngineCaps {
            max_cost: 1e6,
            ..EngineCaps::default()
        },
    )
    .unwrap();
    let d = sample_disorder_at(&model, 1, Lane::Disorder, 0);
    let w = build_weights(&c, &d, 0.5, 0.0).unwrap();
    // the triangle forces a D^3 contraction
    let tri = parse("q1,2*q2,3*q1,3").unwrap();
    match replica_expectation(&w, &tri, &AttachmentSpec::none()) {
        Err(Error::Capacity { requested, .. }) => assert!(requested > 1e6),
        other => panic!("{other:?}"),
    }
    // a path stays cheap
    assert!(replica_expectation(&w, &parse("q1,2*q2,3").unwrap(), &AttachmentSpec::none()).is_ok());
}

#[test]
fn naive_oracle_refuses_large_enumerations() {
    let w = table("sk:11", 1, 0.5, 0.0);
    let g = parse("q1,2*q2,3").unwrap();
    assert!(matches!(
        naive_replica_expectation(&w, &g, &AttachmentSpec::none()),
        Err(Error::Capacity { .. })
    ));
}

#[test]
fn label_zero_attachment_rejected() {
    let w = table("sk:3", 1, 0.5, 0.0);
    let mut att = AttachmentSpec::none();
    att.attach(0, Attachment::EnergyPerScale).unwrap();
    assert!(matches!(
        replica_expectation(&w, &OverlapPolynomial::constant(1.0), &att),
        Err(Error::Usage(_))
    ));
    let mut twice = AttachmentSpec::energy_on(1);
    assert!(twice.attach(1, Attachment::EnergyPerScale).is_err());
}

fn arb_monomial() -> impl Strategy<Value = OverlapMonomial> {
    prop::collection::vec((1u32..5, 1u32..5, 1u32..3), 0..5).prop_map(|fs| {
        let mut m = OverlapMonomial::one();
        for (k, l, e) in fs {
            if k != l {
                m.mul_pair(k, l, e).unwrap();
            }
        }
        m
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn elimination_matches_brute_force(m in arb_monomial(), seed in 0u64..1000, beta in 0.0f64..2.0, attach in 0u32..5) {
        let w = table("sk:3", seed, beta, 0.3);
        let g = OverlapPolynomial::monomial(m, 1.0);
        let att = if attach == 0 { AttachmentSpec::none() } else { AttachmentSpec::energy_on(attach) };
        let a = replica_expectation(&w, &g, &att).unwrap();
        let b = naive_replica_expectation(&w, &g, &att).unwrap();
        prop_assert!((a - b).abs() <= 1e-12 * b.abs().max(1e-6), "{} vs {}", a, b);
    }

    #[test]
    fn permuting_labels_is_exact(m in arb_monomial(), seed in 0u64..1000) {
        let w = table("ea:2x2", seed, 0.8, 0.0);
        let g = OverlapPolynomial::monomial(m.clone(), 1.0);
        let perm = [0u32, 3, 1, 4, 2];
        let mut pm = OverlapMonomial::one();
        for (k, l, e) in m.factors() {
            pm.mul_pair(perm[k as usize], perm[l as usize], e).unwrap();
        }
        let permuted = OverlapPolynomial::monomial(pm, 1.0);
        prop_assert_eq!(gibbs_mean(&w, &g).unwrap(), gibbs_mean(&w, &permuted).unwrap());
    }
}
