use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use cp_oracle::output::RunManifest;
use serde_json::Value;

fn bin() -> Command {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_cp-oracle"));
    cmd.env_remove("CP_ORACLE_OUT").env("SOURCE_DATE_EPOCH", "1700000000");
    cmd
}

fn write(dir: &Path, name: &str, text: &str) -> PathBuf {
    let p = dir.join(name);
    std::fs::write(&p, text).unwrap();
    p
}

fn stderr_json(out: &Output) -> Value {
    let text = String::from_utf8_lossy(&out.stderr);
    serde_json::from_str(text.trim()).unwrap_or_else(|_| panic!("stderr is not JSON: {text}"))
}

struct Fixture {
    dir: tempfile::TempDir,
    family: PathBuf,
    instance: PathBuf,
}

fn fixture() -> Fixture {
    let dir = tempfile::tempdir().unwrap();
    let family = write(dir.path(), "family.json", r#"{"type": "uniform-shrink", "n": 2}"#);
    let instance = write(dir.path(), "instance.json", r#"{"rho": [2.0, 1.0], "sigma2": 1.0}"#);
    Fixture { dir, family, instance }
}

#[test]
fn risk_prints_the_oracle() {
    let f = fixture();
    let out_dir = f.dir.path().join("out");
    let out = bin()
        .args(["risk", "--family"])
        .arg(&f.family)
        .arg("--instance")
        .arg(&f.instance)
        .arg("--out")
        .arg(&out_dir)
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(0));
    let v: Value = serde_json::from_slice(&out.stdout).unwrap();
    assert!((v["theta_mu"].as_f64().unwrap() - 10.0 / 7.0).abs() < 1e-12);
    assert!((v["m_star"].as_f64().unwrap() - 10.0 / 7.0).abs() < 1e-12);
    let manifest = RunManifest::read(&out_dir).unwrap();
    assert_eq!(manifest.subcommand, "risk");
    assert!(manifest.stale_outputs(&out_dir).is_empty());
    assert_eq!(manifest.started, "2023-11-14T22:13:20Z");
}

#[test]
fn malformed_family_names_the_field() {
    let f = fixture();
    let bad = write(f.dir.path(), "bad.json", r#"{"n": 2, "knots": [0, 2], "lambdas": [[0, 0], [1, "x"]]}"#);
    let out = bin()
        .args(["family", "--family"])
        .arg(&bad)
        .arg("--out")
        .arg(f.dir.path().join("o"))
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
    let err = stderr_json(&out);
    assert_eq!(err["error"], "InvalidField");
    assert_eq!(err["field"], "family.lambdas[1][1]");

    let broken = write(f.dir.path(), "broken.json", "{not json");
    let out = bin().args(["family", "--family"]).arg(&broken).output().unwrap();
    assert_eq!(out.status.code(), Some(2));
    assert_eq!(stderr_json(&out)["field"], "family");
}

#[test]
fn non_monotone_family_fails_the_packing_run() {
    let f = fixture();
    let fam = write(
        f.dir.path(),
        "nonmono.json",
        r#"{"n": 2, "knots": [0.0, 1.0, 1.5, 2.0], "lambdas": [[0.0, 0.0], [0.9, 0.1], [0.6, 0.9], [1.0, 1.0]]}"#,
    );
    let out_dir = f.dir.path().join("pack");
    let out = bin()
        .args(["verify-packing", "--family"])
        .arg(&fam)
        .arg("--instance")
        .arg(&f.instance)
        .arg("--out")
        .arg(&out_dir)
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(3));
    assert_eq!(stderr_json(&out)["check"], "family.monotonicity");
    let manifest = RunManifest::read(&out_dir).unwrap();
    assert_eq!(manifest.outputs.iter().map(|o| o.file.as_str()).collect::<Vec<_>>(), ["family_report.json"]);
}

#[test]
fn env_var_overrides_out_flag() {
    let f = fixture();
    let flag = f.dir.path().join("flag");
    let env = f.dir.path().join("env");
    let out = bin()
        .args(["family", "--family"])
        .arg(&f.family)
        .arg("--out")
        .arg(&flag)
        .env("CP_ORACLE_OUT", &env)
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(0));
    assert!(env.join("manifest.json").exists());
    assert!(!flag.exists());
}

#[test]
fn usage_errors_and_help() {
    assert_eq!(bin().args(["risk"]).output().unwrap().status.code(), Some(2));
    assert_eq!(bin().args(["no-such-command"]).output().unwrap().status.code(), Some(2));
    for sub in ["family", "risk", "verify-concentration", "verify-packing", "verify-chaining", "oracle", "report"] {
        let out = bin().args([sub, "--help"]).output().unwrap();
        assert_eq!(out.status.code(), Some(0), "{sub}");
        let text = String::from_utf8_lossy(&out.stdout);
        assert!(text.contains("--"), "{sub} help lists no flags");
    }
    let f = fixture();
    let out = bin().args(["family", "--threads", "0", "--family"]).arg(&f.family).output().unwrap();
    assert_eq!(out.status.code(), Some(2));
    assert_eq!(stderr_json(&out)["field"], "threads");
}

#[test]
fn oracle_and_report() {
    let f = fixture();
    let config = write(
        f.dir.path(),
        "config.json",
        r#"{"family": {"type": "ridge-polynomial", "n": 20, "exponent": 1},
            "instance": {"pattern": "spike", "amplitude": 6.0, "sigma2": 1.0},
            "reps": 600, "seed": 4, "label": "spike-20"}"#,
    );
    let runs: Vec<PathBuf> = (0..2)
        .map(|k| {
            let dir = f.dir.path().join(format!("run{k}"));
            let out = bin().args(["oracle", "--config"]).arg(&config).arg("--out").arg(&dir).output().unwrap();
            assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
            dir
        })
        .collect();
    let records = std::fs::read_to_string(runs[0].join("records.csv")).unwrap();
    assert_eq!(
        records.lines().next().unwrap(),
        "index,theta_hat,g_hat_min,g_loss_hat,g_loss_mu,Z,m_excess,d_hat"
    );
    assert_eq!(records.lines().count(), 601);
    let summary: Value = serde_json::from_str(&std::fs::read_to_string(runs[0].join("summary.json")).unwrap()).unwrap();
    assert_eq!(summary["argmin_violations"], 0);

    let single = bin().arg("report").arg(&runs[0]).output().unwrap();
    assert_eq!(single.status.code(), Some(0));
    let table = String::from_utf8_lossy(&single.stdout);
    assert!(table.lines().nth(1).unwrap().starts_with("spike-20"));

    let report_dir = f.dir.path().join("report");
    let out = bin().arg("report").args(&runs).arg("--out").arg(&report_dir).output().unwrap();
    assert_eq!(out.status.code(), Some(0));
    let csv = std::fs::read_to_string(report_dir.join("report.csv")).unwrap();
    let rows: Vec<&str> = csv.lines().collect();
    assert_eq!(rows[0], "instance,n,m_star,mean_excess,normalized_excess,c2_hat");
    assert_eq!(rows.len(), 3);
    assert_eq!(rows[1], rows[2]);
    let m_star: f64 = rows[1].split(',').nth(2).unwrap().parse().unwrap();
    assert_eq!(m_star, summary["m_star"].as_f64().unwrap());

    let missing = bin().arg("report").arg(f.dir.path()).output().unwrap();
    assert_eq!(missing.status.code(), Some(2));
    assert_eq!(stderr_json(&missing)["error"], "MissingManifest");
}

#[test]
fn concentration_and_chaining_runs_write_their_artifacts() {
    let f = fixture();
    let conc = f.dir.path().join("conc");
    let out = bin()
        .args(["verify-concentration", "--reps", "10000", "--count", "2", "--family"])
        .arg(&f.family)
        .arg("--instance")
        .arg(&f.instance)
        .arg("--out")
        .arg(&conc)
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    for name in ["linear_00.csv", "quadratic_01.csv", "increment_X4.csv", "concentration_summary.json"] {
        assert!(conc.join(name).exists(), "{name}");
    }
    let out = bin().args(["verify-concentration", "--reps", "10"]).output().unwrap();
    assert_eq!(out.status.code(), Some(2));
    assert_eq!(stderr_json(&out)["field"], "reps");

    let chain = f.dir.path().join("chain");
    let out = bin()
        .args(["verify-chaining", "--reps", "1000", "--depth", "8", "--family"])
        .arg(&f.family)
        .arg("--instance")
        .arg(&f.instance)
        .arg("--out")
        .arg(&chain)
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let manifest = RunManifest::read(&chain).unwrap();
    let files: Vec<&str> = manifest.outputs.iter().map(|o| o.file.as_str()).collect();
    for name in ["nets.json", "gamma.json", "stratum_D_hat.csv", "weighted_D_mu_rx.csv", "union_X1.csv"] {
        assert!(files.contains(&name), "{name}");
    }
    assert!(manifest.stale_outputs(&chain).is_empty());
    assert!(manifest.config.get("out").is_none());
}
