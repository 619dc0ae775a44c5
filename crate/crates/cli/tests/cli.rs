use std::path::Path;
use std::process::{Command, Output};

fn spinstab(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_spinstab"))
        .args(args)
        .env_remove("SPINSTAB_THREADS")
        .output()
        .expect("binary runs")
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn json(path: &Path) -> serde_json::Value {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

#[test]
fn missing_seed_is_a_usage_error() {
    let o = spinstab(&["verify", "theorem2", "--model", "sk:4", "--beta", "0.5"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("--seed"), "{}", stderr(&o));
}

#[test]
fn malformed_inputs_are_usage_errors() {
    for args in [
        &["verify", "theorem2", "--model", "potts:4", "--beta", "0.5", "--seed", "1"][..],
        &["verify", "theorem2", "--model", "sk:4", "--beta", "0.5", "--seed", "1", "--g", "q1,"],
        &["verify", "theorem2", "--model", "sk:4", "--beta", "0", "--seed", "1"],
        &["verify", "theorem1", "--model", "sk:4", "--beta-range", "0.8:0.2", "--seed", "1"],
        &["estimate", "--model", "sk:4", "--beta", "0.5", "--seed", "1", "--estimator", "median"],
        &["estimate", "--model", "sk:4", "--beta", "0.5", "--seed", "1", "--backend", "mc", "--estimator", "delta_g_iden"],
    ] {
        let o = spinstab(args);
        assert_eq!(o.status.code(), Some(2), "{args:?}: {}", stderr(&o));
    }
}

#[test]
fn oversized_exact_run_is_a_capacity_error() {
    let o = spinstab(&["verify", "theorem2", "--model", "ea:8x8", "--beta", "0.5", "--seed", "1"]);
    assert_eq!(o.status.code(), Some(3), "{}", stderr(&o));
}

#[test]
fn selftest_lists_eleven_criteria() {
    let o = spinstab(&["selftest", "--list"]);
    assert!(o.status.success());
    let text = String::from_utf8(o.stdout).unwrap();
    assert_eq!(text.lines().count(), 11);
    assert!(text.contains("determinism"));
}

#[test]
fn mutated_delta_g_fails_selftest() {
    let o = spinstab(&["selftest", "--mutate-delta-g"]);
    assert_eq!(o.status.code(), Some(1));
    let text = String::from_utf8(o.stdout).unwrap();
    assert!(text.lines().any(|l| l.contains("theorem2") && l.contains("FAIL")), "{text}");
}

#[test]
fn theorem2_report_is_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let run = |name: &str, threads: &str| {
        let path = dir.path().join(name);
        let o = spinstab(&[
            "--threads", threads, "verify", "theorem2", "--model", "sk:4", "--beta", "0.5", "--seed", "7",
            "--samples", "1000", "--out-json", path.to_str().unwrap(),
        ]);
        assert!(o.status.success(), "{}", stderr(&o));
        let mut v = json(&path);
        v.as_object_mut().unwrap().remove("wall_time_s");
        v
    };
    let a = run("a.json", "1");
    assert_eq!(a, run("b.json", "1"));
    assert_eq!(a, run("c.json", "2"));
    assert_eq!(a["check"], "theorem2");
    assert_eq!(a["verdict"], "pass");
    assert_eq!(a["sign_convention"], "+");
    assert_eq!(a["primary_comparison"], "iden_vs_rhs");
}

#[test]
fn estimate_writes_one_row_per_point() {
    let dir = tempfile::tempdir().unwrap();
    let csv = dir.path().join("est.csv");
    let o = spinstab(&[
        "estimate", "--model", "sk:4", "--beta-grid", "0.2:0.6:3", "--lambda-grid", "0:0.2:2",
        "--estimator", "mean,delta_g_rhs", "--samples", "200", "--seed", "3", "--out-csv",
        csv.to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    let mut r = csv::Reader::from_path(&csv).unwrap();
    let header: Vec<String> = r.headers().unwrap().iter().map(String::from).collect();
    assert_eq!(header, ["model", "beta", "lambda", "observable", "estimator", "mean", "stderr", "n", "seed"]);
    let rows: Vec<csv::StringRecord> = r.records().map(Result::unwrap).collect();
    assert_eq!(rows.len(), 3 * 2 * 2);
    assert!(rows.iter().all(|r| &r[0] == "sk:4" && &r[7] == "200" && &r[8] == "3"));
    // β = 0.2, λ = 0, mean of q12 is positive and below 1.
    let m: f64 = rows[0][5].parse().unwrap();
    assert!(m > 0.0 && m < 1.0);
}

#[test]
fn flags_override_config() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.cfg");
    std::fs::write(&cfg, "# run\nmodel = sk:4\nbeta = 0.5\nseed = 11\nsamples = 300\n").unwrap();
    let from_cfg = dir.path().join("cfg.json");
    let o = spinstab(&["--config", cfg.to_str().unwrap(), "verify", "theorem2", "--out-json", from_cfg.to_str().unwrap()]);
    assert!(o.status.success(), "{}", stderr(&o));
    let overridden = dir.path().join("flag.json");
    let o = spinstab(&[
        "--config", cfg.to_str().unwrap(), "verify", "theorem2", "--beta", "0.6", "--out-json",
        overridden.to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    let (a, b) = (json(&from_cfg), json(&overridden));
    assert_eq!(a["seed"], 11);
    assert_eq!(a["inputs"]["beta"], "0.5");
    assert_eq!(b["inputs"]["beta"], "0.6");
    std::fs::write(&cfg, "colour = red\n").unwrap();
    let o = spinstab(&["--config", cfg.to_str().unwrap(), "selftest", "--list"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn sweep_rate_reports_slope() {
    let dir = tempfile::tempdir().unwrap();
    let (j, c) = (dir.path().join("r.json"), dir.path().join("r.csv"));
    let o = spinstab(&[
        "sweep-rate", "--models", "sk:4,sk:6,sk:8", "--beta-range", "0.2:0.8", "--nodes", "5", "--samples",
        "400", "--seed", "2", "--out-json", j.to_str().unwrap(), "--out-csv", c.to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    let slope = json(&j)["slope"].as_f64().unwrap();
    assert!((-1.5..-0.5).contains(&slope), "{slope}");
    assert_eq!(csv::Reader::from_path(&c).unwrap().records().count(), 3);
}
