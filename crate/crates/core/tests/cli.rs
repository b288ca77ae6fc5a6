//! End-to-end checks of the `readout` binary: file schemas, determinism,
//! manifests, error reporting and exit codes.

use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn readout(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_readout"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exited normally")
}

fn read_csv(path: &Path) -> (Vec<String>, Vec<Vec<f64>>) {
    let mut r = csv::Reader::from_path(path).unwrap();
    let header = r.headers().unwrap().iter().map(String::from).collect();
    let rows = r
        .records()
        .map(|rec| {
            rec.unwrap()
                .iter()
                .map(|f| f.parse().unwrap_or(f64::NAN))
                .collect()
        })
        .collect();
    (header, rows)
}

fn read_json(path: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap()
}

#[test]
fn run_writes_documented_files_with_fixed_schemas() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("run");
    let o = readout(&["run", "--count", "400", "--out", out.to_str().unwrap()]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));

    let (header, rows) = read_csv(&out.join("trajectories.csv"));
    assert_eq!(header, ["t", "mean_ln_delta", "stderr"]);
    assert_eq!(rows[0][0], 0.0);
    assert!((rows.last().unwrap()[0] - 1.0).abs() < 1e-9);
    assert!(rows.iter().all(|r| r[1].is_finite() && r[2] >= 0.0));

    let (header, rows) = read_csv(&out.join("first_passage.csv"));
    assert_eq!(header, ["epsilon", "mean_T", "stderr", "censored_frac"]);
    assert_eq!(rows.len(), 66);
    assert!(rows.windows(2).all(|w| w[1][0] < w[0][0] && w[1][1] > w[0][1]));
    assert!(rows.iter().all(|r| (0.0..=1.0).contains(&r[3])));

    let summary = read_json(&out.join("summary.json"));
    let slope = summary["slope"]["slope"].as_f64().unwrap();
    assert!((slope / -16.0 - 1.0).abs() < 0.1, "slope {slope}");
    assert_eq!(summary["reference_slope"].as_f64(), Some(-16.0));
    assert_eq!(summary["trajectory_count"].as_u64(), Some(400));
    assert_eq!(summary["policy"], "none");

    let manifest = read_json(&out.join("manifest.json"));
    for key in ["version", "config", "config_text", "integrator", "wall_time_seconds", "censoring", "files"] {
        assert!(manifest.get(key).is_some(), "manifest lacks {key}");
    }
    assert_eq!(manifest["integrator"], "exact");
    let files: Vec<&str> = manifest["files"].as_array().unwrap().iter().map(|f| f.as_str().unwrap()).collect();
    for f in &files {
        assert!(out.join(f).exists(), "{f} listed but missing");
    }
}

#[test]
fn same_seed_gives_identical_bytes_and_manifest_reproduces_them() {
    let dir = tempfile::tempdir().unwrap();
    let a = dir.path().join("a");
    let b = dir.path().join("b");
    let args = |out: &Path| {
        vec![
            "run".to_string(),
            "--n".into(),
            "2".into(),
            "--policy".into(),
            "random_permutation".into(),
            "--count".into(),
            "200".into(),
            "--seed".into(),
            "99".into(),
            "--out".into(),
            out.display().to_string(),
        ]
    };
    for out in [&a, &b] {
        let argv = args(out);
        let argv: Vec<&str> = argv.iter().map(String::as_str).collect();
        assert_eq!(code(&readout(&argv)), 0);
    }
    for f in ["trajectories.csv", "first_passage.csv", "summary.json"] {
        assert_eq!(fs::read(a.join(f)).unwrap(), fs::read(b.join(f)).unwrap(), "{f} differs");
    }

    // regenerate from the manifest's config echo alone
    let manifest = read_json(&a.join("manifest.json"));
    let c = dir.path().join("c");
    let text = manifest["config_text"]
        .as_str()
        .unwrap()
        .replace(&format!("out = {}", a.display()), &format!("out = {}", c.display()));
    let cfg = dir.path().join("replay.cfg");
    fs::write(&cfg, text).unwrap();
    assert_eq!(code(&readout(&["run", "--config", cfg.to_str().unwrap()])), 0);
    for f in ["trajectories.csv", "first_passage.csv", "summary.json"] {
        assert_eq!(fs::read(a.join(f)).unwrap(), fs::read(c.join(f)).unwrap(), "{f} differs on replay");
    }
}

#[test]
fn malformed_cycle_file_is_a_config_error_naming_the_line() {
    let dir = tempfile::tempdir().unwrap();
    let cycle = dir.path().join("cycle.txt");
    fs::write(&cycle, "# P3124\n2 0 1 3\n\n0 1 1 3\n").unwrap();
    let o = readout(&[
        "run",
        "--n",
        "2",
        "--policy",
        "fixed_cycle",
        "--cycle-file",
        cycle.to_str().unwrap(),
        "--out",
        dir.path().join("x").to_str().unwrap(),
    ]);
    assert_eq!(code(&o), 1);
    let err = String::from_utf8_lossy(&o.stderr);
    assert!(err.contains(&format!("{}:4:", cycle.display())), "{err}");
}

#[test]
fn config_file_errors_name_the_line_and_flags_override() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("exp.cfg");
    fs::write(&cfg, "n = 2\ncount = 50\ndt = tiny\n").unwrap();
    let o = readout(&["run", "--config", cfg.to_str().unwrap()]);
    assert_eq!(code(&o), 1);
    assert!(String::from_utf8_lossy(&o.stderr).contains("exp.cfg:3:"));

    fs::write(&cfg, "n = 2\ncount = 50\nepsilons = 0.1, 0.01\n").unwrap();
    let out = dir.path().join("o");
    let o = readout(&["run", "--config", cfg.to_str().unwrap(), "--n", "1", "--out", out.to_str().unwrap()]);
    assert_eq!(code(&o), 0);
    assert_eq!(read_json(&out.join("summary.json"))["n"].as_u64(), Some(1));
    assert_eq!(read_csv(&out.join("first_passage.csv")).1.len(), 2);
}

#[test]
fn sweep_table_and_guard_on_register_size() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("sweep");
    let o = readout(&[
        "sweep",
        "--n-values",
        "2,3",
        "--policies",
        "none,random_permutation",
        "--count",
        "300",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let (header, rows) = read_csv(&out.join("sweep.csv"));
    assert_eq!(header, ["policy", "n", "speedup", "stderr", "bound_lo", "bound_hi"]);
    assert_eq!(rows.len(), 4);
    let text = fs::read_to_string(out.join("sweep.csv")).unwrap();
    for line in text.lines().filter(|l| l.starts_with("none,")) {
        let speedup: f64 = line.split(',').nth(2).unwrap().parse().unwrap();
        assert_eq!(speedup, 1.0);
    }
    let report = read_json(&out.join("sweep.json"));
    assert!(report["sweeps"][1]["fit"]["slope"].is_f64());

    let o = readout(&["sweep", "--n-values", "6", "--count", "10", "--out", out.to_str().unwrap()]);
    assert_eq!(code(&o), 1);
    assert!(String::from_utf8_lossy(&o.stderr).contains("--unsafe-large-n"));
}

#[test]
fn bounds_and_identities_reports() {
    let o = readout(&["bounds", "--n-min", "2", "--n-max", "3", "--format", "json", "--check"]);
    assert_eq!(code(&o), 0);
    let v: Value = serde_json::from_slice(&o.stdout).unwrap();
    let rp = &v["rows"][0]["random_permutation"];
    assert!((rp["lower"].as_f64().unwrap() - 0.889).abs() < 1e-3);
    assert!((rp["upper"].as_f64().unwrap() - 1.333).abs() < 1e-3);
    assert_eq!(v["asymptote"], "0.25n ≤ S_RP ≤ 0.5n");

    let o = readout(&["verify-identities", "--dims", "4", "--check"]);
    assert_eq!(code(&o), 0);
    let text = String::from_utf8_lossy(&o.stdout);
    assert!(text.contains("= 48 (expected 48)") && text.contains("= 16 (expected 16)") && text.contains("PASS"));

    let o = readout(&["verify-identities", "--dims", "16"]);
    assert_eq!(code(&o), 1);
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    // too short a curve for a three-qubit register to show the asymptotic slope
    let o = readout(&[
        "run", "--n", "3", "--count", "100", "--curve-time", "0.2", "--check",
        "--out", dir.path().join("c").to_str().unwrap(),
    ]);
    assert_eq!(code(&o), 3);
    assert!(String::from_utf8_lossy(&o.stderr).contains("[FAIL] collapse slope"));

    assert_eq!(code(&readout(&["run", "--gamma", "-1"])), 1);
    assert_eq!(code(&readout(&["run", "--no-such-flag"])), 1);

    let blocker = dir.path().join("file");
    fs::write(&blocker, "").unwrap();
    let o = readout(&["run", "--count", "10", "--out", blocker.join("sub").to_str().unwrap()]);
    assert_eq!(code(&o), 2);
}
