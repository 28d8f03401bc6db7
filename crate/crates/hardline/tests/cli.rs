use std::path::Path;
use std::process::{Command, Output};

use hardline::report::{check_digest, strip_meta};
use serde_json::Value;

fn hardline(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_hardline"))
        .args(args)
        .env_remove("HARDLINE_THREADS")
        .output()
        .expect("binary runs")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exit code")
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

fn write(dir: &Path, name: &str, text: &str) -> String {
    let p = dir.join(name);
    std::fs::write(&p, text).unwrap();
    p.to_str().unwrap().to_string()
}

#[test]
fn scatter_examples() {
    let o = hardline(&["scatter", "--map", "sigma-star", "--v", "3,2,1"]);
    assert_eq!(code(&o), 0);
    assert_eq!(stdout(&o).lines().next(), Some("1,2,3"));
    assert!(stdout(&o).contains("momentum: 6 -> 6"));
    assert!(stdout(&o).contains("energy: 14 -> 14"));

    let o = hardline(&["scatter", "--v", "1,2,3"]);
    assert_eq!(code(&o), 2);
    assert!(String::from_utf8_lossy(&o.stderr).contains("pre-collisional"));

    let o = hardline(&["scatter", "--map", "reversal", "--v", "2,0,-1"]);
    assert_eq!(code(&o), 0);
    assert_eq!(stdout(&o).lines().next(), Some("-1,0,2"));
}

fn csv_rows(text: &str) -> Vec<Vec<f64>> {
    text.lines().skip(1).map(|l| l.split(',').map(|c| c.parse().unwrap()).collect()).collect()
}

#[test]
fn simulate_examples() {
    let o = hardline(&["simulate", "--x", "0,1,2", "--v", "3,2,1", "--times", "0,1,2"]);
    assert_eq!(code(&o), 0);
    let text = stdout(&o);
    assert_eq!(text.lines().next(), Some("t,x1,x2,x3,v1,v2,v3"));
    let rows = csv_rows(&text);
    assert_eq!(rows[2], vec![2.0, 4.0, 5.0, 6.0, 1.0, 2.0, 3.0]);
    assert_eq!(rows[0], vec![0.0, 0.0, 1.0, 2.0, 3.0, 2.0, 1.0]);

    let o = hardline(&["simulate", "--x", "0,1,2", "--v", "3,2,1", "--t", "0"]);
    assert_eq!(csv_rows(&stdout(&o)), vec![vec![0.0, 0.0, 1.0, 2.0, 3.0, 2.0, 1.0]]);

    let o = hardline(&["simulate", "--x", "0,1,2", "--v", "3,2,0", "--times", "0"]);
    assert_eq!(code(&o), 2);

    let o = hardline(&["simulate", "--x", "0,1,2", "--v", "3,2,1", "--times", "2,1"]);
    assert_eq!(code(&o), 1);
}

#[test]
fn simulate_writes_csv_with_seventeen_digits() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("traj.csv");
    let o = hardline(&["simulate", "--x", "0,1,2", "--v", "3,2,1", "--times", "-0.5,0.3", "--out", out.to_str().unwrap()]);
    assert_eq!(code(&o), 0);
    let text = std::fs::read_to_string(out).unwrap();
    let cell = text.lines().nth(1).unwrap().split(',').nth(1).unwrap().to_string();
    assert_eq!(cell, "-1.5000000000000000");
}

#[test]
fn identities_report() {
    let dir = tempfile::tempdir().unwrap();
    let a = dir.path().join("a.json");
    let b = dir.path().join("b.json");
    for p in [&a, &b] {
        let o = hardline(&["verify", "identities", "--dims", "3,4,5", "--seed", "42", "--out", p.to_str().unwrap()]);
        assert_eq!(code(&o), 0);
    }
    let (ta, tb) = (std::fs::read_to_string(&a).unwrap(), std::fs::read_to_string(&b).unwrap());
    assert!(check_digest(&ta));
    assert_eq!(strip_meta(&ta), strip_meta(&tb));
    let v: Value = serde_json::from_str(&ta).unwrap();
    assert_eq!(v["identities"].as_array().unwrap().len(), 8);
    assert_eq!(v["pass"], Value::Bool(true));
}

#[test]
fn pde_verdicts() {
    let dir = tempfile::tempdir().unwrap();
    let scaled = write(dir.path(), "scaled.json", r#"{"n": 3, "rows": [[1.1, 0, 0], ["0", "1", "0"], [0, 0, 1]]}"#);
    let o = hardline(&["verify", "pde", "--map", &format!("@{scaled}"), "--n", "1000"]);
    assert_eq!(code(&o), 3);
    let v: Value = serde_json::from_str(&stdout(&o)).unwrap();
    assert_eq!(v["entries"][0]["sign"], Value::Null);

    let star = write(dir.path(), "star.json", r#"{"n": 3, "rows": [["-1/3","2/3","2/3"],["2/3","-1/3","2/3"],["2/3","2/3","-1/3"]]}"#);
    assert_eq!(code(&hardline(&["verify", "pde", "--map", &format!("@{star}"), "--n", "1000"])), 0);
    assert_eq!(code(&hardline(&["verify", "pde", "--dims", "3..6", "--n", "2000"])), 0);
}

#[test]
fn certificate_passes() {
    let o = hardline(&["verify", "certificate", "--dims", "3..10"]);
    assert_eq!(code(&o), 0);
    let v: Value = serde_json::from_str(&stdout(&o)).unwrap();
    assert_eq!(v["entries"][1]["det"], Value::String("-1/1".into()));
}

#[test]
fn hausdorff_violation_is_detected() {
    let o = hardline(&["verify", "invariance", "--measure", "hausdorff", "--map", "sigma-star", "--t", "1.5"]);
    assert_eq!(code(&o), 3);
    let v: Value = serde_json::from_str(&stdout(&o)).unwrap();
    assert_eq!(v["verdict"], Value::String("violated".into()));
    assert_eq!(v["t"], serde_json::json!(1.5));
    assert_eq!(v["per_phi"].as_array().unwrap().len(), 8);
}

#[test]
fn liouville_reports_are_reproducible_across_workers() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(
        dir.path(),
        "run.toml",
        "measure = \"liouville\"\nt = [0.5]\nn = 200000\nseed = 9\n\n[[battery]]\ntc = -0.65\nv = [-1.0, 0.0, 1.0]\nradius = 0.8\n\n[[battery]]\ntc = 1.0\nv = [1.0, 0.0, -1.0]\nradius = 0.5\n",
    );
    let run = |workers: &str| {
        Command::new(env!("CARGO_BIN_EXE_hardline"))
            .args(["verify", "invariance", "--config", &cfg])
            .env("HARDLINE_THREADS", workers)
            .output()
            .unwrap()
    };
    let (a, b) = (run("1"), run("3"));
    assert_eq!(code(&a), 0, "{}", String::from_utf8_lossy(&a.stderr));
    assert_eq!(code(&b), 0);
    let (ta, tb) = (stdout(&a), stdout(&b));
    assert!(check_digest(&ta) && check_digest(&tb));
    assert_eq!(strip_meta(&ta), strip_meta(&tb));
    let v: Value = serde_json::from_str(&ta).unwrap();
    assert_eq!(v["per_phi"].as_array().unwrap().len(), 2);
    assert_eq!(v["seed"], serde_json::json!(9));
}

#[test]
fn config_and_usage_errors_exit_one() {
    let dir = tempfile::tempdir().unwrap();
    let unknown = write(dir.path(), "bad.toml", "measure = \"liouville\"\nsamples = 10\n");
    assert_eq!(code(&hardline(&["verify", "invariance", "--config", &unknown])), 1);
    let yaml = write(dir.path(), "run.yaml", "seed: 1\n");
    assert_eq!(code(&hardline(&["verify", "identities", "--config", &yaml])), 1);
    let json = write(dir.path(), "run.json", r#"{"dims": [3], "n": 100, "seed": 1}"#);
    assert_eq!(code(&hardline(&["verify", "identities", "--config", &json])), 0);

    assert_eq!(code(&hardline(&["scatter", "--map", "elastic", "--v", "3,2,1"])), 1);
    assert_eq!(code(&hardline(&["scatter", "--v", "3,x,1"])), 1);
    assert_eq!(code(&hardline(&["scatter"])), 1);
    assert_eq!(code(&hardline(&["frobnicate"])), 1);
    assert_eq!(code(&hardline(&["verify", "identities", "--dims", "2,3"])), 1);
    assert_eq!(code(&hardline(&["verify", "invariance", "--n", "10"])), 1);
    assert_eq!(code(&hardline(&["verify", "invariance", "--measure", "counting"])), 1);
    assert_eq!(code(&hardline(&["verify", "invariance", "--workers", "0"])), 1);
    assert_eq!(code(&hardline(&["--help"])), 0);
    assert_eq!(code(&hardline(&["--version"])), 0);

    let bad_env = Command::new(env!("CARGO_BIN_EXE_hardline"))
        .args(["verify", "invariance"])
        .env("HARDLINE_THREADS", "many")
        .output()
        .unwrap();
    assert_eq!(code(&bad_env), 1);
}

#[test]
fn region_too_small_is_a_domain_error() {
    let o = hardline(&["verify", "invariance", "--n", "20000", "--t", "0.5", "--region", "-2:2,-2:2,-2:2,0.6:1.5,-0.5:0.5"]);
    assert_eq!(code(&o), 2);
    assert!(String::from_utf8_lossy(&o.stderr).contains("region too small"));
}
