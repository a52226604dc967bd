use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;
use tempfile::TempDir;

fn ksh(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_ksh"))
        .args(args)
        .current_dir(dir)
        .env_remove("KSH_THREADS")
        .output()
        .expect("ksh runs")
}

fn ok(dir: &Path, args: &[&str]) -> Output {
    let out = ksh(dir, args);
    assert!(
        out.status.success(),
        "ksh {args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

fn stdout_json(out: &Output) -> Value {
    serde_json::from_slice(&out.stdout).expect("stdout is JSON")
}

fn read_json(path: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap()
}

fn write_json(path: &Path, value: &Value) {
    fs::write(path, serde_json::to_string(value).unwrap()).unwrap();
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

fn random_grid(dir: &Path, name: &str, n: &str) {
    ok(dir, &["gen", "grid", "--dim", "2", "--n", n, "--trace", "random", "--seed", "5", "--out-dir", name]);
}

#[test]
fn gen_grid_has_n_squared_interior_points() {
    let tmp = TempDir::new().unwrap();
    let out = ok(tmp.path(), &["gen", "grid", "--dim", "2", "--n", "64", "--out-dir", "g"]);
    let manifest = stdout_json(&out);
    assert_eq!(manifest["command"], "gen grid");
    assert_eq!(manifest["seed"], 0);
    let domain = read_json(&tmp.path().join("g/domain.json"));
    assert_eq!(domain["interior"].as_array().unwrap().len(), 64 * 64);
    assert_eq!(domain["metric"], "euclidean");
}

#[test]
fn repeated_generation_is_byte_identical() {
    let tmp = TempDir::new().unwrap();
    random_grid(tmp.path(), "a", "12");
    random_grid(tmp.path(), "b", "12");
    ok(tmp.path(), &["gen", "chain", "--n", "16", "--out-dir", "c1"]);
    ok(tmp.path(), &["gen", "chain", "--n", "16", "--out-dir", "c2"]);
    for (x, y, files) in [
        ("a", "b", &["domain.json", "target.json", "trace.json", "map.json"][..]),
        ("c1", "c2", &["domain.json", "target.json", "trace.json"][..]),
    ] {
        for f in files {
            let p = fs::read(tmp.path().join(x).join(f)).unwrap();
            let q = fs::read(tmp.path().join(y).join(f)).unwrap();
            assert!(p == q, "{f} differs between runs");
        }
    }
}

#[test]
fn numbers_carry_seventeen_significant_digits() {
    let tmp = TempDir::new().unwrap();
    ok(tmp.path(), &["gen", "chain", "--n", "4", "--out-dir", "c"]);
    let text = fs::read_to_string(tmp.path().join("c/target.json")).unwrap();
    assert!(text.contains("\"rho\":1.2000000000000000e0"), "{text}");
}

fn slerp(p: &[f64], q: &[f64], t: f64) -> Vec<f64> {
    let theta = p.iter().zip(q).map(|(a, b)| a * b).sum::<f64>().acos();
    let (a, b) = (((1.0 - t) * theta).sin() / theta.sin(), (t * theta).sin() / theta.sin());
    p.iter().zip(q).map(|(x, y)| a * x + b * y).collect()
}

#[test]
fn chain_solve_matches_slerp() {
    let tmp = TempDir::new().unwrap();
    let dir = tmp.path();
    ok(dir, &["gen", "chain", "--n", "16", "--out-dir", "c"]);
    let out = ok(
        dir,
        &[
            "solve", "--domain", "c/domain.json", "--target", "c/target.json", "--trace", "c/trace.json", "--r", "1.5",
            "--out", "c/result.json", "--map-out", "c/solution.json",
        ],
    );
    assert_eq!(stdout_json(&out)["command"], "solve");
    let result = read_json(&dir.join("c/result.json"));
    let report = &result["report"];
    assert_eq!(report["converged"], true);
    assert_eq!(report["map"]["domain"], "domain.json");
    let values: Vec<Vec<f64>> = serde_json::from_value(report["map"]["values"].clone()).unwrap();
    let coords: Vec<Vec<f64>> = serde_json::from_value(read_json(&dir.join("c/domain.json"))["points"].clone()).unwrap();
    let (s, c) = 0.8f64.sin_cos();
    let (p, q) = ([-s, 0.0, c], [s, 0.0, c]);
    // Exterior points sit at 0 and 17, so interior point x is at t = x / 17.
    let mut worst = 0.0f64;
    for (x, v) in coords.iter().zip(&values) {
        let t = (x[0] / 17.0).clamp(0.0, 1.0);
        let o = slerp(&p, &q, t);
        worst = worst.max(v.iter().zip(&o).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt());
    }
    assert!(worst < 1e-6, "max distance to slerp {worst:e}");
    // The separate map file is usable as input.
    ok(dir, &["energy", "--map", "c/solution.json", "--r", "1.5"]);
}

#[test]
fn results_do_not_depend_on_thread_count() {
    let tmp = TempDir::new().unwrap();
    let dir = tmp.path();
    random_grid(dir, "g", "12");
    let run = |threads: &str| {
        ok(
            dir,
            &[
                "--threads", threads, "solve", "--target", "g/target.json", "--trace", "g/trace.json", "--r", "0.2",
                "--init", "random", "--seed", "9",
            ],
        )
        .stdout
    };
    assert_eq!(run("1"), run("4"));
}

#[test]
fn constant_map_has_zero_energy() {
    let tmp = TempDir::new().unwrap();
    let dir = tmp.path();
    random_grid(dir, "g", "12");
    let mut map = read_json(&dir.join("g/map.json"));
    let center = map["target"]["center"].clone();
    let n = map["values"].as_array().unwrap().len();
    map["values"] = Value::Array(vec![center; n]);
    write_json(&dir.join("g/constant.json"), &map);
    let out = ok(dir, &["energy", "--map", "g/constant.json", "--r", "0.25"]);
    let report = &stdout_json(&out)["report"];
    assert_eq!(report["energy"]["total"].as_f64(), Some(0.0));
}

#[test]
fn modified_energy_reports_gap_bounds() {
    let tmp = TempDir::new().unwrap();
    let dir = tmp.path();
    random_grid(dir, "g", "12");
    let out = ok(
        dir,
        &["energy", "--map", "g/map.json", "--r", "0.25", "--modified", "g/map.json", "g/map.json", "--alpha", "0.05"],
    );
    let report = &stdout_json(&out)["report"];
    let plain = report["energy"]["per_point_ks"].as_array().unwrap();
    let modified = &report["modified"];
    let ks = modified["energy"]["per_point_ks"].as_array().unwrap();
    let bound = modified["gap_bound"].as_array().unwrap();
    for k in 0..plain.len() {
        let gap = plain[k].as_f64().unwrap() - ks[k].as_f64().unwrap();
        assert!(gap.abs() <= bound[k].as_f64().unwrap() + 1e-12, "point {k}");
    }
}

#[test]
fn invalid_values_are_reported_with_pointers() {
    let tmp = TempDir::new().unwrap();
    let dir = tmp.path();
    random_grid(dir, "g", "12");
    let map = read_json(&dir.join("g/map.json"));

    let mut outside = map.clone();
    outside["values"][5] = serde_json::json!([0.0, 0.0, -1.0]);
    write_json(&dir.join("g/outside.json"), &outside);
    let out = ksh(dir, &["energy", "--map", "g/outside.json", "--r", "0.2"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr(&out).contains("g/outside.json#/values/5"), "{}", stderr(&out));

    let mut wrong = map.clone();
    wrong["values"][3] = serde_json::json!("x");
    wrong["target"]["rho"] = serde_json::json!(2.0);
    write_json(&dir.join("g/wrong.json"), &wrong);
    let out = ksh(dir, &["energy", "--map", "g/wrong.json", "--r", "0.2"]);
    assert_eq!(out.status.code(), Some(2));
    let err = stderr(&out);
    assert!(err.contains("g/wrong.json#/values/3"), "{err}");
    assert!(err.contains("g/wrong.json#/target/rho"), "{err}");

    let mut trace = read_json(&dir.join("g/trace.json"));
    trace["ids"][0] = serde_json::json!(trace["ids"][1]);
    write_json(&dir.join("g/trace_bad.json"), &trace);
    let out = ksh(dir, &["solve", "--target", "g/target.json", "--trace", "g/trace_bad.json", "--r", "0.2"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr(&out).contains("g/trace_bad.json#/ids"), "{}", stderr(&out));

    let out = ksh(dir, &["energy", "--map", "g/missing.json", "--r", "0.2"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn solve_rejects_a_domain_the_trace_does_not_use() {
    let tmp = TempDir::new().unwrap();
    let dir = tmp.path();
    random_grid(dir, "g", "12");
    ok(dir, &["gen", "chain", "--n", "4", "--out-dir", "c"]);
    let out = ksh(
        dir,
        &["solve", "--domain", "c/domain.json", "--target", "g/target.json", "--trace", "g/trace.json", "--r", "0.2"],
    );
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr(&out).contains("g/trace.json#/domain"), "{}", stderr(&out));
}

#[test]
fn invalid_parameters_exit_with_two() {
    let tmp = TempDir::new().unwrap();
    let dir = tmp.path();
    assert_eq!(ksh(dir, &["gen", "grid", "--dim", "4", "--n", "8", "--out-dir", "g"]).status.code(), Some(2));
    assert_eq!(ksh(dir, &["gen", "nonsense"]).status.code(), Some(2));
    let far = ksh(dir, &["gen", "chain", "--n", "8", "--boundary", "1,0,0", "0,0,1", "--out-dir", "c"]);
    assert_eq!(far.status.code(), Some(2));
    assert!(stderr(&far).contains("outside the ball"));
}

#[test]
fn failed_assertion_exits_with_three() {
    let tmp = TempDir::new().unwrap();
    let out = ksh(tmp.path(), &["verify", "estimateI", "--samples", "20", "--min-slope", "10"]);
    assert_eq!(out.status.code(), Some(3));
    let report = &stdout_json(&out)["report"];
    assert_eq!(report["pass"], false);
}

#[test]
fn estimate_checks_pass_on_the_sphere() {
    let tmp = TempDir::new().unwrap();
    for kind in ["estimateI", "estimateII"] {
        let out = ok(tmp.path(), &["verify", kind, "--seed", "3"]);
        let report = &stdout_json(&out)["report"];
        assert!(report["study"]["slope"].as_f64().unwrap() >= 2.8, "{kind}");
        assert_eq!(report["pass"], true);
    }
}

#[test]
fn convexity_sweep_emits_a_csv_table() {
    let tmp = TempDir::new().unwrap();
    let out = ok(
        tmp.path(),
        &["--format", "csv", "verify", "convexity", "--n", "24", "--pairs", "2", "--r-sweep", "0.2,0.1"],
    );
    let text = String::from_utf8(out.stdout.clone()).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("case,flat,r,defect,positive_part"));
    assert_eq!(lines.count(), 2 * 2 * 2);
    // The manifest goes to stderr so that stdout stays a single table.
    let manifest: Value = serde_json::from_str(stderr(&out).lines().next().unwrap()).unwrap();
    assert_eq!(manifest["command"], "verify convexity");
}

#[test]
fn radial_check_on_given_maps() {
    let tmp = TempDir::new().unwrap();
    let dir = tmp.path();
    random_grid(dir, "g", "24");
    let out = ok(
        dir,
        &["verify", "radial", "--map", "g/map.json", "--eta", "0", "--r-sweep", "0.3,0.2"],
    );
    let report = &stdout_json(&out)["report"];
    for row in report["rows"].as_array().unwrap() {
        assert_eq!(row["defect"].as_f64(), Some(0.0), "eta = 0 leaves the map unchanged");
    }
}

#[test]
fn sweep_r_checks_consistency_of_real_maps() {
    let tmp = TempDir::new().unwrap();
    let dir = tmp.path();
    ok(
        dir,
        &[
            "gen", "grid", "--dim", "2", "--n", "40", "--collar", "0.3", "--trace", "random", "--target", "euclidean",
            "--target-dim", "1", "--rho", "5", "--out-dir", "g",
        ],
    );
    let out = ok(dir, &["sweep-r", "--map", "g/map.json", "--r-values", "0.2,0.15,0.1", "--out", "sweep.json"]);
    assert_eq!(stdout_json(&out)["command"], "sweep-r");
    let report = &read_json(&dir.join("sweep.json"))["report"];
    assert_eq!(report["rows"].as_array().unwrap().len(), 3);
    let c = &report["consistency"];
    assert!(c["points_used"].as_u64().unwrap() > 0);
    let estimate = c["c_d_estimate"].as_f64().unwrap();
    let reference = c["reference"].as_f64().unwrap();
    assert!((estimate - reference).abs() < 0.1 * reference, "{estimate} vs {reference}");
}

#[test]
fn multistart_reports_agreeing_solutions() {
    let tmp = TempDir::new().unwrap();
    let dir = tmp.path();
    random_grid(dir, "g", "12");
    let out = ok(
        dir,
        &["multistart", "--target", "g/target.json", "--trace", "g/trace.json", "--r", "0.2", "--starts", "3"],
    );
    let report = &stdout_json(&out)["report"];
    assert_eq!(report["all_converged"], true);
    assert_eq!(report["pairs"].as_array().unwrap().len(), 3);
    assert!(report["max_l2_distance"].as_f64().unwrap() < 1e-6);
}

#[test]
fn graph_and_point_domains_from_csv() {
    let tmp = TempDir::new().unwrap();
    let dir = tmp.path();
    fs::write(dir.join("edges.csv"), "a,b,length\n0,1,1.0\n1,2,1.0\n2,3,1.0\n0,3,2.5\n").unwrap();
    ok(dir, &["gen", "graph", "--edges", "edges.csv", "--interior", "1,2", "--out-dir", "graph"]);
    let domain = read_json(&dir.join("graph/domain.json"));
    assert_eq!(domain["points"], serde_json::json!([0, 1, 2, 3]));
    assert_eq!(domain["metric"][0][3].as_f64(), Some(2.5));

    fs::write(
        dir.join("points.csv"),
        "x,y,weight,region\n0,0,1,exterior\n0.5,0,1,interior\n1,0,1,exterior\n",
    )
    .unwrap();
    let out = ok(dir, &["gen", "points", "--csv", "points.csv", "--out-dir", "pts"]);
    assert!(stdout_json(&out)["input_hashes"]["points.csv"].is_string());
    let domain = read_json(&dir.join("pts/domain.json"));
    assert_eq!(domain["interior"], serde_json::json!([1]));

    fs::write(dir.join("bad.csv"), "x,weight,region\n0,1,nowhere\n").unwrap();
    let out = ksh(dir, &["gen", "points", "--csv", "bad.csv", "--out-dir", "bad"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr(&out).contains("line 2"));
}
