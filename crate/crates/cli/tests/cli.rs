use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn bin() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_shiftfunc"));
    c.env_remove("SHIFTFUNC_OUT");
    c
}

fn config(dir: &Path, name: &str, text: &str) -> PathBuf {
    let p = dir.join(name);
    fs::write(&p, text).unwrap();
    p
}

fn run(cmd: &str, cfg: &Path, out: &Path, extra: &[&str]) -> Output {
    bin()
        .arg(cmd)
        .arg("--config")
        .arg(cfg)
        .arg("--out")
        .arg(out)
        .args(extra)
        .output()
        .unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

/// Strips the manifest comment and returns (header, rows).
fn read_csv(path: &Path) -> (Vec<String>, Vec<Vec<String>>) {
    let text = fs::read_to_string(path).unwrap();
    let mut lines = text.lines().filter(|l| !l.starts_with('#'));
    let split = |l: &str| l.split(',').map(str::to_string).collect::<Vec<_>>();
    let header = split(lines.next().unwrap());
    (header, lines.map(split).collect())
}

fn col(header: &[String], row: &[String], name: &str) -> f64 {
    let i = header.iter().position(|h| h == name).unwrap();
    row[i].parse().unwrap()
}

const LINEAR: &str = r#"{"seed": 1,
    "model": {"kind": "isotropic", "sigma2": 0.01, "d": 4},
    "functional": {"kind": "linear", "u": [1.0, 0.0, 0.0, 0.0]},
    "chain": {"k": 0, "n_mc": 1},
    "experiment": {"n_rep": 4000}}"#;

#[test]
fn schema_error_names_the_field() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = config(
        tmp.path(),
        "bad.json",
        r#"{"model": {"kind": "isotropic", "sigma2": "big", "d": 3}}"#,
    );
    let o = run("estimate", &cfg, tmp.path(), &[]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("model"), "{}", stderr(&o));
}

#[test]
fn missing_section_is_a_config_error() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = config(tmp.path(), "c.json", LINEAR);
    let o = run("sweep", &cfg, tmp.path(), &[]);
    assert_eq!(o.status.code(), Some(2), "{}", stderr(&o));
    let o = run("lowerbound", &cfg, tmp.path(), &[]);
    assert_eq!(o.status.code(), Some(2), "{}", stderr(&o));
}

#[test]
fn excessive_chain_order_exits_3() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = config(tmp.path(), "c.json", &LINEAR.replace(r#""k": 0"#, r#""k": 20"#));
    let o = run("estimate", &cfg, tmp.path(), &[]);
    assert_eq!(o.status.code(), Some(3));
    assert!(stderr(&o).contains("chain order exceeds cap"), "{}", stderr(&o));
}

#[test]
fn environment_overrides_out_flag() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = config(tmp.path(), "c.json", LINEAR);
    let env_dir = tmp.path().join("from-env");
    let flag_dir = tmp.path().join("from-flag");
    let o = bin()
        .args(["estimate", "--config"])
        .arg(&cfg)
        .arg("--out")
        .arg(&flag_dir)
        .env("SHIFTFUNC_OUT", &env_dir)
        .output()
        .unwrap();
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(env_dir.join("estimate.csv").exists());
    assert!(!flag_dir.exists());
}

#[test]
fn seed_override_changes_hash_and_report_verifies() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = config(tmp.path(), "c.json", LINEAR);
    let a = tmp.path().join("a");
    let b = tmp.path().join("b");
    assert!(run("estimate", &cfg, &a, &[]).status.success());
    assert!(run("estimate", &cfg, &b, &["--seed", "77"]).status.success());
    let hash = |dir: &Path| {
        let v: serde_json::Value = serde_json::from_str(&fs::read_to_string(dir.join("estimate.json")).unwrap()).unwrap();
        (
            v["manifest"]["config_sha256"].as_str().unwrap().to_string(),
            v["manifest"]["master_seed"].as_u64().unwrap(),
        )
    };
    let (ha, sa) = hash(&a);
    let (hb, sb) = hash(&b);
    assert_eq!((sa, sb), (1, 77));
    assert_ne!(ha, hb);
    for dir in [&a, &b] {
        let o = bin().arg("report").arg(dir.join("estimate.json")).output().unwrap();
        assert!(o.status.success());
        assert!(stdout(&o).contains("(verified)"), "{}", stdout(&o));
    }
    // Editing the config afterwards is detected.
    fs::write(&cfg, LINEAR.replace("4000", "4001")).unwrap();
    let o = bin().arg("report").arg(a.join("estimate.json")).output().unwrap();
    assert!(stdout(&o).contains("MISMATCH"));
}

#[test]
fn linear_estimate_is_efficient() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = config(tmp.path(), "c.json", LINEAR);
    let o = run("estimate", &cfg, tmp.path(), &[]);
    assert!(o.status.success(), "{}", stderr(&o));
    let (h, rows) = read_csv(&tmp.path().join("estimate.csv"));
    assert_eq!(rows.len(), 1);
    let eff = col(&h, &rows[0], "efficiency_ratio");
    assert!((eff - 1.0).abs() < 0.08, "efficiency ratio {eff}");
}

#[test]
fn normtest_reports_small_ks() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = config(
        tmp.path(),
        "c.json",
        r#"{"seed": 3,
            "model": {"kind": "isotropic", "sigma2": 0.0004, "d": 10},
            "functional": {"kind": "exp_linear", "u": {"gen": "basis", "index": 0}},
            "chain": {"k": 2, "n_mc": 50},
            "experiment": {"n_rep": 5000}}"#,
    );
    let o = run("normtest", &cfg, tmp.path(), &[]);
    assert!(o.status.success(), "{}", stderr(&o));
    let v: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(tmp.path().join("normtest.json")).unwrap()).unwrap();
    let ks = v["result"]["ks_statistic"].as_f64().unwrap();
    assert!(ks < 0.03, "ks {ks}");
}

#[test]
fn normtest_with_too_few_samples_exits_3() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = config(tmp.path(), "c.json", &LINEAR.replace("4000", "200"));
    let o = run("normtest", &cfg, tmp.path(), &[]);
    assert_eq!(o.status.code(), Some(3), "{}", stderr(&o));
}

#[test]
fn lowerbound_packing_meets_target() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = config(
        tmp.path(),
        "c.json",
        r#"{"seed": 5, "lowerbound": {"d": 16, "sigma": 0.05, "n_rep": 20}}"#,
    );
    let o = run("lowerbound", &cfg, tmp.path(), &[]);
    assert!(o.status.success(), "{}", stderr(&o));
    let text = fs::read_to_string(tmp.path().join("lowerbound_packing.txt")).unwrap();
    let words: Vec<Vec<i32>> = text
        .lines()
        .filter(|l| !l.starts_with('#') && !l.is_empty())
        .map(|l| l.split_whitespace().map(|t| t.parse().unwrap()).collect())
        .collect();
    assert!(words.len() >= 4);
    for w in &words {
        assert_eq!(w.len(), 16);
    }
    for i in 0..words.len() {
        for j in i + 1..words.len() {
            let h = words[i].iter().zip(&words[j]).filter(|(a, b)| a != b).count();
            assert!(h >= 2);
        }
    }
    let (_, rows) = read_csv(&tmp.path().join("lowerbound.csv"));
    assert_eq!(rows.len(), words.len());
}

#[test]
fn sigma_sweep_recovers_rate() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = config(
        tmp.path(),
        "c.json",
        r#"{"seed": 4,
            "model": {"kind": "isotropic", "sigma2": 0.01, "d": 5},
            "functional": {"kind": "exp_linear", "u": {"gen": "basis", "index": 0}},
            "chain": {"k": 1, "n_mc": 4},
            "experiment": {"n_rep": 1000, "bias_oracle_reps": 50000},
            "sweep": {"sigma": [0.05, 0.07, 0.1, 0.14, 0.2]}}"#,
    );
    let o = run("sweep", &cfg, tmp.path(), &[]);
    assert!(o.status.success(), "{}", stderr(&o));
    let (h, rows) = read_csv(&tmp.path().join("sweep.csv"));
    assert_eq!(rows.len(), 5);
    let (sh, srows) = read_csv(&tmp.path().join("sweep_slopes.csv"));
    assert_eq!(srows.len(), 1);
    let slope = col(&sh, &srows[0], "chain_bias_vs_sigma");
    assert!((slope - 4.0).abs() < 0.3, "slope {slope}");
    assert_eq!(h[0], "sigma");
}

#[test]
fn thread_count_does_not_change_output() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = config(tmp.path(), "c.json", LINEAR);
    let a = tmp.path().join("a");
    let b = tmp.path().join("b");
    assert!(run("estimate", &cfg, &a, &["--threads", "1", "--format", "csv,json,svg"]).status.success());
    assert!(run("estimate", &cfg, &b, &["--threads", "3", "--format", "csv,json,svg"]).status.success());
    for f in ["estimate.csv", "estimate.json", "estimate_ecdf.svg"] {
        assert_eq!(fs::read(a.join(f)).unwrap(), fs::read(b.join(f)).unwrap(), "{f}");
    }
}
