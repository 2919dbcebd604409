use std::path::PathBuf;
use std::process::{Command, Output};

use privregion::model::{EncodedSet, SourceSpec};
use privregion::region::grid_oracle;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::{json, Value};

fn write_config(name: &str, cfg: &Value) -> PathBuf {
    let dir = std::env::temp_dir().join(format!("privregion-cli-{}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    let path = dir.join(format!("{name}.json"));
    std::fs::write(&path, serde_json::to_string_pretty(cfg).unwrap()).unwrap();
    path
}

fn run(args: &[&str], config: &PathBuf) -> Output {
    Command::new(env!("CARGO_BIN_EXE_privregion"))
        .args(args)
        .args(["--config", config.to_str().unwrap()])
        .output()
        .unwrap()
}

fn stdout(out: &Output) -> String {
    assert!(out.status.success(), "stderr: {}", String::from_utf8_lossy(&out.stderr));
    String::from_utf8(out.stdout.clone()).unwrap()
}

fn base(joint: Vec<f64>) -> Value {
    json!({
        "source": { "sizes": [2, 2, 2], "revealed": [0], "hidden": [1, 2], "joint": joint },
        "cases": [
            { "name": "R", "attrs": [0] },
            { "name": "R+X1", "attrs": [0, 1] },
            { "name": "K", "attrs": [0, 1, 2] }
        ],
        "d_grid": [0.0, 0.1, 0.2, 0.3, 0.45],
        "verify": { "binary_max_n": 4, "ternary_max_n": 3, "probability_max_n": 6,
                    "continuity_trials": 200, "cardinality_n": [2, 4, 6], "convexity_trials": 10 }
    })
}

const EXAMPLE: [f64; 8] = [0.20, 0.05, 0.10, 0.05, 0.05, 0.10, 0.10, 0.35];

/// `(case, D, rest...)` rows of a CSV body.
fn rows(csv: &str) -> Vec<Vec<String>> {
    csv.lines().skip(1).map(|l| l.split(',').map(String::from).collect()).collect()
}

#[test]
fn invalid_config_exits_2_with_findings() {
    let mut cfg = base(vec![0.5, 0.5, 0.0, 0.0, 0.0, 0.0, 0.0, 0.1]);
    cfg["cases"][0]["attrs"] = json!([1]);
    let path = write_config("invalid", &cfg);
    let out = run(&["table"], &path);
    assert_eq!(out.status.code(), Some(2));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("invalid configuration"), "{err}");
    assert!(err.lines().count() >= 3, "expected several findings: {err}");

    let missing = run(&["table"], &PathBuf::from("/nonexistent/config.json"));
    assert_eq!(missing.status.code(), Some(2));
}

#[test]
fn budget_refusal_exits_3() {
    let mut cfg = base(EXAMPLE.to_vec());
    cfg["simulation"] = json!({ "case": "K", "distortion": 0.2, "n_list": [12], "rate": 0.5,
                                "c": 0.2, "tau": 0.1, "mode": "exact" });
    let out = run(&["simulate"], &write_config("budget", &cfg));
    assert_eq!(out.status.code(), Some(3), "{}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn independent_hidden_attributes_leak_nothing() {
    // X0 independent of (X1, X2).
    let px = [0.3, 0.7];
    let ph = [0.1, 0.2, 0.3, 0.4];
    let joint: Vec<f64> = px.iter().flat_map(|a| ph.iter().map(move |b| a * b)).collect();
    let csv = stdout(&run(&["curve", "--kind", "ld"], &write_config("indep", &base(joint))));
    let body = rows(&csv);
    assert_eq!(body.len(), 15);
    for r in &body {
        assert!(r[1].parse::<f64>().unwrap() >= 0.0);
        assert!(r[2].parse::<f64>().unwrap().abs() < 1e-7, "{r:?}");
        assert_eq!(r[3], "ok");
    }
}

#[test]
fn rate_distortion_columns_coincide() {
    let csv = stdout(&run(&["curve", "--kind", "rd"], &write_config("rd", &base(EXAMPLE.to_vec()))));
    assert!(csv.starts_with("case,D,value,status,witness_hash\n"));
    let body = rows(&csv);
    let col = |name: &str| -> Vec<f64> {
        body.iter().filter(|r| r[0] == name).map(|r| r[2].parse().unwrap()).collect()
    };
    let (r, e, k) = (col("R"), col("R+X1"), col("K"));
    assert_eq!(r.len(), 5);
    for i in 0..r.len() {
        assert!((r[i] - e[i]).abs() <= 1e-4 && (r[i] - k[i]).abs() <= 1e-4);
    }
    // Sorted by case label, then D.
    let keys: Vec<(String, f64)> = body.iter().map(|r| (r[0].clone(), r[1].parse().unwrap())).collect();
    assert!(keys.windows(2).all(|w| w[0].0 < w[1].0 || (w[0].0 == w[1].0 && w[0].1 < w[1].1)));
}

#[test]
fn grid_step_flag_and_rerun_identity() {
    let path = write_config("step", &base(EXAMPLE.to_vec()));
    let a = stdout(&run(&["curve", "--kind", "ld", "--grid-step", "0.1", "--seed", "9"], &path));
    let b = stdout(&run(&["curve", "--kind", "ld", "--grid-step", "0.1", "--seed", "9"], &path));
    assert_eq!(a, b);
    // X0 is 1 with probability 0.6, so the constant reconstruction costs 0.4.
    let ds: Vec<String> = rows(&a).iter().filter(|r| r[0] == "R").map(|r| r[1].clone()).collect();
    assert_eq!(ds, ["0", "0.1", "0.2", "0.3", "0.4"]);
}

#[test]
fn table_at_large_distortion_is_zero_and_infeasible_rows_are_marked() {
    let mut cfg = base(EXAMPLE.to_vec());
    cfg["d_list"] = json!([0.4, 0.45]);
    let csv = stdout(&run(&["table"], &write_config("zero", &cfg)));
    assert!(csv.starts_with("case,D,leakage,rate,status,witness_hash\n"));
    for r in rows(&csv) {
        assert!(r[2].parse::<f64>().unwrap().abs() < 1e-9, "{r:?}");
        assert!(r[3].parse::<f64>().unwrap().abs() < 1e-9, "{r:?}");
    }

    cfg["source"]["distortion"] = json!([[0.1, 1.0], [1.0, 0.1]]);
    cfg["d_list"] = json!([0.05, 0.2]);
    let csv = stdout(&run(&["table"], &write_config("infeasible", &cfg)));
    let body = rows(&csv);
    for r in body.iter().filter(|r| r[1] == "0.05") {
        assert_eq!(r[4], "infeasible");
        assert_eq!(r[2], "");
    }
    assert!(body.iter().filter(|r| r[1] == "0.2").all(|r| r[4] == "ok"));
}

#[test]
fn table_matches_grid_oracle_on_random_source() {
    let mut rng = ChaCha8Rng::seed_from_u64(42);
    let mut joint: Vec<f64> = (0..4).map(|_| rng.gen_range(0.05..1.0)).collect();
    let s: f64 = joint.iter().sum();
    joint.iter_mut().for_each(|p| *p /= s);
    let cfg = json!({
        "source": { "sizes": [2, 2], "revealed": [0], "hidden": [1], "joint": joint },
        "cases": [{ "name": "R", "attrs": [0] }, { "name": "K", "attrs": [0, 1] }],
        "d_grid": [0.05, 0.15, 0.25]
    });
    let csv = stdout(&run(&["table"], &write_config("seed42", &cfg)));
    let src = SourceSpec {
        sizes: vec![2, 2],
        revealed: vec![0],
        hidden: vec![1],
        joint,
        recon_size: None,
        distortion: None,
    }
    .build()
    .unwrap();
    for r in rows(&csv) {
        let e = EncodedSet::new(if r[0] == "R" { vec![0] } else { vec![0, 1] });
        let d: f64 = r[1].parse().unwrap();
        let l: f64 = r[2].parse().unwrap();
        let oracle = grid_oracle(&src, &e, d, 0.02).unwrap();
        // Printed values carry 9 significant digits.
        assert!(l >= oracle.lower_bound - 1e-8 && l <= oracle.leakage + 1e-8, "{r:?} vs {oracle:?}");
    }
}

fn simulate(name: &str, sim: Value) -> Value {
    let mut cfg = base(EXAMPLE.to_vec());
    cfg["simulation"] = sim;
    serde_json::from_str(&stdout(&run(&["simulate"], &write_config(name, &cfg)))).unwrap()
}

#[test]
fn single_codeword_keeps_full_equivocation() {
    let r = simulate(
        "m1",
        json!({ "case": "R+X1", "distortion": 0.2, "n_list": [3, 4], "rate": 0.0, "c": 0.3, "tau": 0.1 }),
    );
    let h = r["hidden_entropy"].as_f64().unwrap();
    for run in r["runs"].as_array().unwrap() {
        assert_eq!(run["m_n"], 1);
        assert!((run["measures"]["e_n"].as_f64().unwrap() - h).abs() < 1e-12);
    }
}

#[test]
fn simulation_sweep_reports_identities_and_trends() {
    let r = simulate(
        "sweep",
        json!({ "case": "R", "distortion": 0.2, "n_list": [3, 4, 5, 6], "rate": 0.6, "c": 0.2, "tau": 0.1, "seed": 4 }),
    );
    let runs = r["runs"].as_array().unwrap();
    assert_eq!(runs.len(), 4);
    for run in runs {
        assert_eq!(run["partition"]["mass_identity"], true);
        assert_eq!(run["equivocation_in_range"], true);
        let checks = run["bounds"]["checks"].as_array().unwrap();
        let identity = checks.iter().find(|c| c["name"] == "mass-identity").unwrap();
        assert_eq!(identity["status"], "satisfied");
    }
    assert_eq!(r["distortion_gap"]["values"].as_array().unwrap().len(), 4);
    assert_eq!(r["equivocation_gap"]["values"].as_array().unwrap().len(), 4);
    assert_eq!(r["pass"], true);
}

#[test]
fn monte_carlo_mode_is_used_past_the_budget() {
    let r = simulate(
        "mc",
        json!({ "case": "K", "distortion": 0.2, "n_list": [9], "rate": 0.5, "c": 0.2, "tau": 0.1, "trials": 500 }),
    );
    let m = &r["runs"][0]["measures"];
    assert_eq!(m["mode"], "monte-carlo");
    assert!(m["e_n"].is_null());
    assert!(r["equivocation_gap"].is_null());
}

#[test]
fn verify_passes_on_example() {
    let path = write_config("verify", &base(EXAMPLE.to_vec()));
    let r: Value = serde_json::from_str(&stdout(&run(&["verify"], &path))).unwrap();
    assert_eq!(r["pass"], true);
    assert_eq!(r["summary"]["implication_counterexamples"], 0);
    // Inclusion of each case in itself: both columns are the same solve.
    let self_rows: Vec<&Value> = r["inclusion"]
        .as_array()
        .unwrap()
        .iter()
        .filter(|x| x["smaller_set"] == x["larger_set"])
        .collect();
    assert_eq!(self_rows.len(), 3);
    for inc in self_rows {
        for row in inc["rows"].as_array().unwrap() {
            assert!((row["smaller"].as_f64().unwrap() - row["larger"].as_f64().unwrap()).abs() < 1e-7);
        }
    }
}

#[test]
fn shipped_example_config_is_valid() {
    let path = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../configs/example.json");
    let out = run(&["table"], &path);
    let csv = stdout(&out);
    assert_eq!(rows(&csv).len(), 21);
}
