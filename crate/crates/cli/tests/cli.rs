use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::{json, Value};
use tempfile::TempDir;

fn lpvgen(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_lpvgen"))
        .current_dir(dir)
        .args(args)
        .output()
        .expect("binary runs")
}

fn write_config(dir: &Path, name: &str, v: &Value) -> PathBuf {
    let p = dir.join(name);
    fs::write(&p, serde_json::to_string_pretty(v).unwrap()).unwrap();
    p
}

fn run_ok(dir: &Path, cmd: &str, cfg: &Value, out: &str, extra: &[&str]) -> String {
    let path = write_config(dir, &format!("{out}.json"), cfg);
    let mut args = vec![cmd, "--config", path.to_str().unwrap(), "--out", out];
    args.extend_from_slice(extra);
    let o = lpvgen(dir, &args);
    assert!(
        o.status.success(),
        "{cmd} failed: {}",
        String::from_utf8_lossy(&o.stderr)
    );
    String::from_utf8(o.stdout).unwrap()
}

fn scalar_lti() -> Value {
    json!({"n_x": 1, "n_in": 1, "n_p": 0, "A": [[[-1.0]]], "B": [[[1.0]]], "C": [[[1.0]]], "b": [[0.0]]})
}

fn scalar_lpv() -> Value {
    json!({
        "n_x": 1, "n_in": 1, "n_p": 1,
        "A": [[[-2.0]], [[0.5]]], "B": [[[1.0]], [[0.0]]],
        "C": [[[1.0]], [[0.0]]], "b": [[0.0], [0.0]]
    })
}

fn csv_rows(text: &str) -> Vec<Vec<f64>> {
    text.lines()
        .skip(1)
        .map(|l| l.split(',').map(|c| c.parse().unwrap()).collect())
        .collect()
}

fn read_json(path: PathBuf) -> Value {
    serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap()
}

fn gap_config() -> Value {
    let mut hyps = Vec::new();
    for a0 in [-2.0, -3.0] {
        for c0 in [0.8, 1.0] {
            hyps.push(json!({
                "n_x": 1, "n_in": 1, "n_p": 1,
                "A": [[[a0]], [[0.5]]], "B": [[[1.0]], [[0.0]]],
                "C": [[[c0]], [[0.0]]], "b": [[0.0], [0.0]]
            }));
        }
    }
    json!({
        "teacher": scalar_lpv(),
        "hypotheses": hyps,
        "input_sampler": {"harmonics": 3, "max_freq": 2.0, "K_u": 1.0, "L_u": 1.0},
        "scheduling_sampler": {"harmonics": 2, "max_freq": 1.0, "amplitude": 1.0},
        "N": 20, "M": 80, "trials": 3, "seed": 7,
        "T": 1.0, "dt": 0.02, "lambda": 1.0, "delta": 0.05,
        "rademacher_draws": 100
    })
}

#[test]
fn simulate_scalar_step_response() {
    let dir = TempDir::new().unwrap();
    let cfg = json!({"system": scalar_lti(), "input": {"constant": [1.0]}, "T": 1.0, "dt": 0.001});
    let stdout = run_ok(dir.path(), "simulate", &cfg, "sim", &[]);
    assert!(stdout.contains("y(T)"));
    let text = fs::read_to_string(dir.path().join("sim/trajectory.csv")).unwrap();
    assert!(text.starts_with("t,x1,y\n"));
    let rows = csv_rows(&text);
    assert_eq!(rows.len(), 1001);
    let y = rows.last().unwrap()[2];
    assert!((y - (1.0 - (-1.0f64).exp())).abs() < 1e-8, "{y}");
    let report = read_json(dir.path().join("sim/report.json"));
    assert_eq!(report["command"], "simulate");
    assert_eq!(report["config_sha256"].as_str().unwrap().len(), 64);
}

#[test]
fn zero_input_gives_zero_trajectory() {
    let dir = TempDir::new().unwrap();
    let cfg = json!({
        "system": scalar_lpv(),
        "input": {"constant": [0.0]},
        "scheduling": {"sampled": {"dt": 0.5, "hold": "linear", "values": [[1.0], [-1.0], [0.3]]}},
        "T": 1.0, "dt": 0.01
    });
    run_ok(dir.path(), "simulate", &cfg, "z", &[]);
    let rows = csv_rows(&fs::read_to_string(dir.path().join("z/trajectory.csv")).unwrap());
    assert!(rows.iter().all(|r| r[1] == 0.0 && r[2] == 0.0));
}

#[test]
fn missing_scheduling_is_a_config_error() {
    let dir = TempDir::new().unwrap();
    let cfg = json!({"system": scalar_lpv(), "input": {"constant": [1.0]}, "T": 1.0, "dt": 0.01});
    let path = write_config(dir.path(), "c.json", &cfg);
    let o = lpvgen(dir.path(), &["simulate", "--config", path.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn malformed_matrix_row_reports_line() {
    let dir = TempDir::new().unwrap();
    let text = "{\"lambda\": 1,\n\"system\": {\"n_x\": 2, \"n_in\": 1, \"n_p\": 0,\n\"A\": [[[-1, 0],\n[0]]],\n\"B\": [[[1], [1]]], \"C\": [[[1, 0]]], \"b\": [[0, 0]]}}\n";
    let path = dir.path().join("bad.json");
    fs::write(&path, text).unwrap();
    let o = lpvgen(dir.path(), &["certify", "--config", path.to_str().unwrap(), "--out", "o"]);
    assert_eq!(o.status.code(), Some(1));
    let err = String::from_utf8_lossy(&o.stderr);
    assert!(err.contains("line"), "{err}");
    assert!(!dir.path().join("o").exists());
}

#[test]
fn certify_scalar_example() {
    let dir = TempDir::new().unwrap();
    let stdout = run_ok(dir.path(), "certify", &json!({"system": scalar_lpv(), "lambda": 1.0}), "c", &[]);
    assert!(stdout.contains("h2_sq"));
    let cert = read_json(dir.path().join("c/certificate.json"));
    let h2 = cert["h2_sq"].as_f64().unwrap();
    assert!((h2 - 4.0 / 11.0).abs() < 1e-9, "{h2}");
    assert!(cert["margin"].as_f64().unwrap() < 0.0);
}

#[test]
fn certify_zero_system_fails_with_margin() {
    let dir = TempDir::new().unwrap();
    let sys = json!({"n_x": 1, "n_in": 1, "n_p": 0, "A": [[[0.0]]], "B": [[[0.0]]], "C": [[[0.0]]], "b": [[0.0]]});
    let path = write_config(dir.path(), "z.json", &json!({"system": sys, "lambda": 0.5}));
    let o = lpvgen(dir.path(), &["certify", "--config", path.to_str().unwrap(), "--out", "o"]);
    assert_eq!(o.status.code(), Some(3));
    let err = String::from_utf8_lossy(&o.stderr);
    assert!(err.contains("margin (Q = I) = 5.0000000000000000e-1"), "{err}");
    assert!(!dir.path().join("o").exists());
}

#[test]
fn certify_unstable_system_fails() {
    let dir = TempDir::new().unwrap();
    let sys = json!({"n_x": 1, "n_in": 1, "n_p": 0, "A": [[[1.0]]], "B": [[[1.0]]], "C": [[[1.0]]], "b": [[0.0]]});
    let path = write_config(dir.path(), "u.json", &json!({"system": sys, "lambda": 0.5}));
    let o = lpvgen(dir.path(), &["certify", "--config", path.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(3));
    let err = String::from_utf8_lossy(&o.stderr);
    assert!(err.contains("not positive definite"), "{err}");
}

#[test]
fn h2norm_methods_agree() {
    let dir = TempDir::new().unwrap();
    let cfg = json!({"system": scalar_lpv(), "lambda": 1.0});
    run_ok(dir.path(), "h2norm", &cfg, "h", &["--method", "both"]);
    let report = read_json(dir.path().join("h/report.json"));
    let trace = report["result"]["trace_h2_sq"].as_f64().unwrap();
    let series = report["result"]["volterra"]["total"].as_f64().unwrap();
    assert!((trace - series).abs() < 1e-6);
    let rows = csv_rows(&fs::read_to_string(dir.path().join("h/h2_series.csv")).unwrap());
    assert_eq!(rows.len(), 9);
    assert!((rows.last().unwrap()[2] - series).abs() < 1e-15);

    run_ok(dir.path(), "h2norm", &cfg, "t", &["--method", "trace"]);
    assert!(!dir.path().join("t/h2_series.csv").exists());
}

#[test]
fn bound_prints_main_term() {
    let dir = TempDir::new().unwrap();
    let cfg = json!({"c1": 1.0, "c2": 1.0, "L_u": 1.0, "K_u": 1.0, "n_p": 1, "K_ell": 1.0, "T": 1.0, "N": 100, "delta": 0.05});
    let stdout = run_ok(dir.path(), "bound", &cfg, "b", &[]);
    assert!(stdout.contains("R_main = 1.98416"), "{stdout}");
    let rep = read_json(dir.path().join("b/bound.json"));
    assert!((rep["R_main"].as_f64().unwrap() - 1.98417).abs() < 1e-5);
}

#[test]
fn embed_tanh_matches() {
    let dir = TempDir::new().unwrap();
    let spec = json!({
        "activation": "tanh",
        "A": [[-1.0, 0.3], [0.2, -0.8]], "B": [[1.0], [0.5]],
        "b": [0.1, -0.2], "C": [[1.0, 1.0]]
    });
    let cfg = json!({"spec": spec, "input": {"constant": [0.7]}, "T": 2.0, "dt": 0.01});
    run_ok(dir.path(), "embed", &cfg, "e", &[]);
    let rep = read_json(dir.path().join("e/report.json"));
    assert!(rep["result"]["max_dev"].as_f64().unwrap() < 1e-6);
    let lpv = read_json(dir.path().join("e/lpv_system.json"));
    assert_eq!(lpv["n_p"], 2);
    let sched = fs::read_to_string(dir.path().join("e/scheduling.csv")).unwrap();
    assert_eq!(csv_rows(&sched).len(), 401);
}

#[test]
fn regions_counts_and_needs_seed() {
    let dir = TempDir::new().unwrap();
    let spec = json!({
        "activation": "relu",
        "A": [[-1.0]], "B": [[1.0]], "b": [0.0], "C": [[1.0]]
    });
    let mut cfg = json!({
        "spec": spec,
        "inputs": [{"constant": [1.0]}, {"constant": [-1.0]}],
        "random_inputs": {"count": 3, "sampler": {"harmonics": 2, "max_freq": 1.0, "K_u": 1.0, "L_u": 1.0}},
        "T": 1.0, "dt": 0.01
    });
    let path = write_config(dir.path(), "r.json", &cfg);
    let o = lpvgen(dir.path(), &["regions", "--config", path.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));

    run_ok(dir.path(), "regions", &cfg, "r", &["--seed", "5"]);
    let text = fs::read_to_string(dir.path().join("r/regions.csv")).unwrap();
    assert_eq!(text.lines().count(), 6);
    let rep = read_json(dir.path().join("r/report.json"));
    assert_eq!(rep["seed"], 5);
    assert!(rep["result"]["distinct_total"].as_u64().unwrap() >= 2);

    cfg["spec"]["activation"] = json!("tanh");
    let path = write_config(dir.path(), "t.json", &cfg);
    let o = lpvgen(dir.path(), &["regions", "--config", path.to_str().unwrap(), "--seed", "5"]);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn rademacher_estimate_written() {
    let dir = TempDir::new().unwrap();
    let cfg = json!({"losses": [[0.0, 1.0], [0.0, 1.0]], "draws": 4000, "seed": 3});
    run_ok(dir.path(), "rademacher", &cfg, "m", &[]);
    let rows = csv_rows(&fs::read_to_string(dir.path().join("m/rademacher.csv")).unwrap());
    // E max(0, (s1 + s2)/2) = 1/4
    assert!((rows[0][0] - 0.25).abs() < 3.0 * rows[0][1] + 1e-12, "{:?}", rows[0]);
    assert_eq!(rows[0][2], 4000.0);
}

#[test]
fn gap_experiment_is_reproducible_across_threads() {
    let dir = TempDir::new().unwrap();
    let cfg = gap_config();
    run_ok(dir.path(), "gap-experiment", &cfg, "a", &["--threads", "1"]);
    run_ok(dir.path(), "gap-experiment", &cfg, "b", &["--threads", "4"]);
    run_ok(dir.path(), "gap-experiment", &cfg, "c", &["--seed", "8"]);
    for f in ["trials.csv", "gap_report.json", "report.json"] {
        let a = fs::read(dir.path().join("a").join(f)).unwrap();
        let b = fs::read(dir.path().join("b").join(f)).unwrap();
        assert_eq!(a, b, "{f} differs between thread counts");
    }
    let a = fs::read_to_string(dir.path().join("a/trials.csv")).unwrap();
    let c = fs::read_to_string(dir.path().join("c/trials.csv")).unwrap();
    assert_ne!(a, c);
    assert_eq!(a.lines().count(), 4);
    assert!(a.starts_with("trial,sup_gap,R_main,R_vc,"));
    assert_eq!(read_json(dir.path().join("c/report.json"))["seed"], 8);
}

#[test]
fn outputs_round_trip() {
    let dir = TempDir::new().unwrap();
    run_ok(dir.path(), "certify", &json!({"system": scalar_lpv(), "lambda": 1.0}), "c", &[]);
    let cert: lpvgen::stability::StabilityCertificate<f64> =
        serde_json::from_str(&fs::read_to_string(dir.path().join("c/certificate.json")).unwrap()).unwrap();
    assert!((cert.h2_sq - 4.0 / 11.0).abs() < 1e-9);

    // a written system feeds back into simulate, and CSV floats parse back exactly
    let spec = json!({"activation": "tanh", "A": [[-1.0]], "B": [[1.0]], "b": [0.0], "C": [[1.0]]});
    run_ok(dir.path(), "embed", &json!({"spec": spec, "input": {"constant": [0.5]}, "T": 1.0, "dt": 0.01}), "e", &[]);
    let sched = fs::read_to_string(dir.path().join("e/scheduling.csv")).unwrap();
    let values: Vec<Value> = csv_rows(&sched).iter().map(|r| json!([r[1]])).collect();
    let cfg = json!({
        "system_file": "e/lpv_system.json",
        "input": {"constant": [0.5]},
        "scheduling": {"sampled": {"dt": 0.005, "hold": "linear", "values": values}},
        "T": 1.0, "dt": 0.01
    });
    run_ok(dir.path(), "simulate", &cfg, "s", &[]);
    let sim = csv_rows(&fs::read_to_string(dir.path().join("s/trajectory.csv")).unwrap());
    let emb = csv_rows(&fs::read_to_string(dir.path().join("e/embedding.csv")).unwrap());
    for (a, b) in sim.iter().zip(&emb) {
        assert_eq!(a[2], b[2]);
    }
}

#[test]
fn rerun_is_byte_identical() {
    let dir = TempDir::new().unwrap();
    let cfg = json!({"system": scalar_lpv(), "input": {"constant": [1.0]},
        "scheduling": {"constant": [0.5]}, "T": 1.0, "dt": 0.01});
    run_ok(dir.path(), "simulate", &cfg, "x", &[]);
    let first = fs::read(dir.path().join("x/trajectory.csv")).unwrap();
    run_ok(dir.path(), "simulate", &cfg, "x", &[]);
    assert_eq!(first, fs::read(dir.path().join("x/trajectory.csv")).unwrap());
}
