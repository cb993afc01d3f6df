use std::fs;
use std::path::Path;
use std::process::Command;

use serde_json::Value;
use sha2::{Digest, Sha256};

use prion_lab::cli::{self, Manifest};

fn run(dir: &Path, args: &[&str]) -> i32 {
    let out = dir.to_str().unwrap();
    let mut argv = vec!["prionlab"];
    argv.extend_from_slice(args);
    argv.extend_from_slice(&["--out", out]);
    cli::run(argv)
}

fn manifest(dir: &Path) -> Manifest {
    serde_json::from_slice(&fs::read(dir.join(cli::MANIFEST)).unwrap()).unwrap()
}

fn json(path: &Path) -> Value {
    serde_json::from_slice(&fs::read(path).unwrap()).unwrap()
}

fn write_config(dir: &Path, text: &str) -> String {
    let p = dir.join("config-in.json");
    fs::write(&p, text).unwrap();
    p.to_str().unwrap().to_string()
}

#[test]
fn stability_scenario_reports_canonical_endemic_state() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("out");
    assert_eq!(run(&out, &["stability"]), cli::EXIT_OK);
    let rep = json(&out.join("stability.json"));
    assert_eq!(rep["R0"], 2.0);
    assert!((rep["v_inf"].as_f64().unwrap() - 1.0).abs() < 1e-12);
    assert!((rep["q_inf"].as_f64().unwrap() - 1.0).abs() < 1e-12);
    for z in rep["eigenvalues"].as_array().unwrap() {
        assert!((z[0].as_f64().unwrap() + 1.0).abs() < 1e-8 && z[1].as_f64().unwrap().abs() < 1e-8);
    }
    let m = manifest(&out);
    assert_eq!(m.status, "ok");
    let names: Vec<&str> = m.files.iter().map(|f| f.path.as_str()).collect();
    assert_eq!(names, ["config.json", "stability.json"]);
    for f in &m.files {
        let bytes = fs::read(out.join(&f.path)).unwrap();
        assert_eq!(f.sha256, hex::encode(Sha256::digest(&bytes)));
        assert_eq!(f.bytes, bytes.len() as u64);
    }
}

#[test]
fn config_is_echoed_verbatim() {
    let tmp = tempfile::tempdir().unwrap();
    let text = "{ \"seed\": 3,\n  \"stability\": {\"mp\": 1.0} }\n";
    let cfg = write_config(tmp.path(), text);
    let out = tmp.path().join("out");
    assert_eq!(run(&out, &["stability", "--config", &cfg]), cli::EXIT_OK);
    assert_eq!(fs::read_to_string(out.join("config.json")).unwrap(), text);
    assert_eq!(manifest(&out).seed, 3);
}

#[test]
fn invalid_gamma_exits_with_config_error_naming_the_assumption() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(
        tmp.path(),
        r#"{"params": {"lambda":2,"delta":1,"tau":1,"mu":1,"beta":1,"gamma":0,"omega":0,"p":1,"r":2}}"#,
    );
    let out = tmp.path().join("out");
    let res = Command::new(env!("CARGO_BIN_EXE_prionlab"))
        .args(["profile", "--config", &cfg, "--out", out.to_str().unwrap()])
        .output()
        .unwrap();
    assert_eq!(res.status.code(), Some(cli::EXIT_CONFIG));
    let stderr = String::from_utf8_lossy(&res.stderr);
    assert!(stderr.contains("beta*x^gamma requires gamma > 0"), "{stderr}");
    let m = manifest(&out);
    assert_eq!(m.status, "config_error");
    assert!(m.files.is_empty());
}

#[test]
fn malformed_configs_are_config_errors() {
    let tmp = tempfile::tempdir().unwrap();
    for (i, text) in ["{", r#"{"unknown": 1}"#, r#"{"scenario": "gap"}"#, r#"{"verify": {"suites": ["x"]}}"#].iter().enumerate() {
        let cfg = write_config(tmp.path(), text);
        let out = tmp.path().join(format!("out{i}"));
        assert_eq!(run(&out, &["stability", "--config", &cfg]), cli::EXIT_CONFIG, "{text}");
    }
    assert_eq!(cli::run(["prionlab", "no-such-command"]), cli::EXIT_CONFIG);
}

#[test]
fn numerical_failure_exits_with_diagnostic_in_manifest() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), r#"{"profile": {"max_steps": 5}}"#);
    let out = tmp.path().join("out");
    assert_eq!(run(&out, &["profile", "--config", &cfg]), cli::EXIT_NUMERICAL);
    let m = manifest(&out);
    assert_eq!(m.status, "numerical_failure");
    assert!(m.diagnostic.unwrap().contains("no convergence"));
    assert_eq!(m.files.len(), 1);
}

#[test]
fn profile_csv_matches_the_exponential() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("out");
    assert_eq!(run(&out, &["profile"]), cli::EXIT_OK);
    let mut rdr = csv::Reader::from_path(out.join("profile.csv")).unwrap();
    let mut err = 0.0;
    let mut rows = 0;
    for rec in rdr.records() {
        let rec = rec.unwrap();
        let (x, w, u): (f64, f64, f64) = (rec[0].parse().unwrap(), rec[1].parse().unwrap(), rec[2].parse().unwrap());
        err += (u - (-x).exp()).abs() * x * w;
        rows += 1;
    }
    assert_eq!(rows, 400);
    assert!(err < 1e-3, "{err}");
    let rep = json(&out.join("profile.json"));
    assert!(rep["closed_form_weighted_l1"].as_f64().unwrap() < 1e-3);
    assert_eq!(rep["truncated"], false);
}

#[test]
fn simulate_then_reduce_pipeline() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), r#"{"simulation": {"horizon": 20, "output_every": 0.1, "snapshot_every": 50}}"#);
    let sim = tmp.path().join("sim");
    assert_eq!(run(&sim, &["simulate", "--config", &cfg]), cli::EXIT_OK);
    let m = manifest(&sim);
    assert!(m.files.iter().any(|f| f.path == "snapshots/snapshot_00004.csv"));
    let summary = json(&sim.join("summary.json"));
    assert_eq!(summary["persistence"]["bounded"], true);

    let red = tmp.path().join("red");
    assert_eq!(run(&red, &["reduce", "--trajectory", sim.to_str().unwrap()]), cli::EXIT_OK);
    let rep = json(&red.join("reduce.json"));
    assert!(rep["max_abs_eps_1"].as_f64().unwrap() <= 1e-10);
    assert!(rep["w_bound_margin"].as_f64().unwrap() >= 1.0 - 1e-8);
    for key in ["sup_v", "sup_w", "sup_q"] {
        assert!(rep["consistency"][key].as_f64().unwrap() < 5e-3, "{key}");
    }
    // one residual per pair of consecutive snapshots
    assert_eq!(rep["v_residual"].as_array().unwrap().len(), 4);
    let header = fs::read_to_string(red.join("reduction.csv")).unwrap();
    assert!(header.starts_with("t,W,h,Q,P,Y,V,eps_0,eps_1,eps_p,eps_r\n"));

    let missing = tmp.path().join("missing");
    assert_eq!(run(&missing, &["reduce"]), cli::EXIT_CONFIG);
}

#[test]
fn repeated_runs_are_byte_identical() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), r#"{"simulation": {"horizon": 5, "snapshot_every": 4}}"#);
    let a = tmp.path().join("a");
    let b = tmp.path().join("b");
    assert_eq!(run(&a, &["simulate", "--config", &cfg]), cli::EXIT_OK);
    assert_eq!(run(&b, &["simulate", "--config", &cfg]), cli::EXIT_OK);
    assert_eq!(fs::read(a.join(cli::MANIFEST)).unwrap(), fs::read(b.join(cli::MANIFEST)).unwrap());
}

#[test]
fn sweep_writes_one_directory_per_run() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(
        tmp.path(),
        r#"{"sweep": {"axes": {"lambda": [0.5, 2, 4], "delta": [0.5, 2]}, "mp": 1.0},
            "params": {"lambda":2,"delta":1,"tau":1,"mu":1,"beta":1,"gamma":1,"omega":1,"p":1,"r":2}}"#,
    );
    let one = tmp.path().join("one");
    let four = tmp.path().join("four");
    assert_eq!(run(&one, &["sweep", "--config", &cfg, "--threads", "1"]), cli::EXIT_OK);
    assert_eq!(run(&four, &["sweep", "--config", &cfg, "--threads", "4"]), cli::EXIT_OK);
    assert_eq!(fs::read(one.join(cli::MANIFEST)).unwrap(), fs::read(four.join(cli::MANIFEST)).unwrap());
    let runs = fs::read_dir(one.join("runs")).unwrap().count();
    assert_eq!(runs, 6);
    let table = fs::read_to_string(one.join("sweep.csv")).unwrap();
    let lines: Vec<&str> = table.lines().collect();
    assert_eq!(lines[0], "delta,lambda,M_p,R0,rh_pass,max_re_eig,cooperative");
    assert_eq!(lines.len(), 7);
    // delta = 0.5, lambda = 0.5: R0 = 1, no endemic state
    assert!(lines[1].starts_with("0.5,0.5,1,1,,,"), "{}", lines[1]);

    let bad = write_config(tmp.path(), r#"{"sweep": {"axes": {"gamma": [0.0]}}}"#);
    assert_eq!(run(&tmp.path().join("bad"), &["sweep", "--config", &bad]), cli::EXIT_CONFIG);
}

#[test]
fn ode_with_synthetic_decay() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(
        tmp.path(),
        r#"{"ode": {"formulation": "YQP", "mp": 1.0, "eps": {"kind": "synthetic_decay", "eps0": 0.5, "a": 1.0}, "horizon": 60}}"#,
    );
    let out = tmp.path().join("out");
    assert_eq!(run(&out, &["ode", "--config", &cfg]), cli::EXIT_OK);
    let rep = json(&out.join("ode.json"));
    assert!((rep["last"]["V"].as_f64().unwrap() - 1.0).abs() < 1e-8);
    assert!((rep["last"]["Q"].as_f64().unwrap() - 1.0).abs() < 1e-8);
}

#[test]
fn verify_stability_suite() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("out");
    assert_eq!(run(&out, &["verify", "--suite", "stability", "--seed", "5"]), cli::EXIT_OK);
    let rep = json(&out.join("verify.json"));
    assert_eq!(rep["pass"], true);
    assert_eq!(rep["seed"], 5);
    let ids: Vec<u64> = rep["suites"][0]["criteria"].as_array().unwrap().iter().map(|c| c["id"].as_u64().unwrap()).collect();
    assert_eq!(ids, [9, 10, 11]);
    assert_eq!(run(&tmp.path().join("bad"), &["verify", "--suite", "nope"]), cli::EXIT_CONFIG);
}
