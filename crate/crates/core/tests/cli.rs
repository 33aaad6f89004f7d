use std::fs;
use std::path::Path;

use clap::Parser;
use solenoid_tower::cli::{run, Cli, ExperimentConfig};

fn run_args(dir: &Path, args: &[&str]) -> solenoid_tower::Result<()> {
    let out = dir.to_str().unwrap();
    let mut argv = vec!["solenoid-tower", "--out", out];
    argv.extend_from_slice(args);
    let cli = Cli::try_parse_from(argv).expect("arguments parse");
    let cfg = ExperimentConfig::resolve(&cli.common)?;
    run(&cli.command, &cfg)
}

fn manifest(dir: &Path) -> serde_json::Value {
    serde_json::from_str(&fs::read_to_string(dir.join("manifest.json")).unwrap()).unwrap()
}

#[test]
fn tails_is_deterministic() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let args = ["--max-time", "256", "--n-max", "512", "tails"];
    run_args(a.path(), &args).unwrap();
    run_args(b.path(), &args).unwrap();
    for f in ["tails.csv", "scheme_report.json"] {
        assert_eq!(
            fs::read(a.path().join(f)).unwrap(),
            fs::read(b.path().join(f)).unwrap(),
            "{f}"
        );
    }
    let m = manifest(a.path());
    assert_eq!(m["subcommand"], "tails");
    assert!(m["summary"]["slope_R"].as_f64().unwrap() < -1.5);
    let header = fs::read_to_string(a.path().join("tails.csv")).unwrap();
    assert!(header.starts_with("n,"));
}

#[test]
fn invalid_gamma_leaves_no_files() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("run");
    assert!(run_args(&out, &["--gamma", "0", "tails"]).is_err());
    let leftover = fs::read_dir(&out).map(|d| d.count()).unwrap_or(0);
    assert_eq!(leftover, 0);
}

#[test]
fn escape_rejects_small_gamma() {
    let dir = tempfile::tempdir().unwrap();
    assert!(run_args(dir.path(), &["--gamma", "0.5", "escape"]).is_err());
}

#[test]
fn flags_override_config_file() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("run.conf");
    fs::write(
        &path,
        "# settings\ngamma = 0.4\nmax-time = 128\nseed=9 # trailing\n",
    )
    .unwrap();
    let p = path.to_str().unwrap();
    let cli =
        Cli::try_parse_from(["solenoid-tower", "--config", p, "--seed", "3", "tails"]).unwrap();
    let cfg = ExperimentConfig::resolve(&cli.common).unwrap();
    assert_eq!(cfg.gamma, 0.4);
    assert_eq!(cfg.max_time, 128);
    assert_eq!(cfg.seed, 3);
    assert_eq!(cfg.degree, 2);
}

#[test]
fn unknown_config_key_is_rejected() {
    let mut cfg = ExperimentConfig::default();
    assert!(cfg.apply_file("gama = 0.3\n").is_err());
    assert!(cfg.apply_file("gamma 0.3\n").is_err());
    assert!(cfg.apply_file("gamma = fast\n").is_err());
}

#[test]
fn e3_audit_bound_holds_rowwise() {
    let dir = tempfile::tempdir().unwrap();
    run_args(dir.path(), &["--horizon", "200", "e3-audit"]).unwrap();
    let text = fs::read_to_string(dir.path().join("e3_check.csv")).unwrap();
    let mut rows = 0;
    for line in text.lines().skip(1) {
        let v: Vec<f64> = line.split(',').map(|x| x.parse().unwrap()).collect();
        assert!(v[1] <= v[2] + 1e-12, "row {line}");
        rows += 1;
    }
    assert_eq!(rows, 200);
    assert_eq!(manifest(dir.path())["summary"]["violations"], 0);
    let ext = fs::read_to_string(dir.path().join("extraction.csv")).unwrap();
    assert_eq!(ext.lines().next(), Some("i,sup_ratio,extracted_mass"));
}

#[test]
fn tower_tv_reports_a_fit() {
    let dir = tempfile::tempdir().unwrap();
    run_args(
        dir.path(),
        &["tower-tv", "--branches", "32", "--steps", "256"],
    )
    .unwrap();
    let m = manifest(dir.path());
    let slope = m["summary"]["fit"]["slope"].as_f64().unwrap();
    assert!(slope <= -1.7, "{slope}");
    assert!(dir.path().join("tv.csv").exists());
    assert!(dir.path().join("tower.csv").exists());
}

#[test]
fn correlate_writes_series() {
    let dir = tempfile::tempdir().unwrap();
    run_args(
        dir.path(),
        &[
            "--orbit-len",
            "20000",
            "--ensemble",
            "2",
            "--burn-in",
            "100",
            "correlate",
            "--lag-max",
            "32",
        ],
    )
    .unwrap();
    let text = fs::read_to_string(dir.path().join("correlation.csv")).unwrap();
    assert_eq!(text.lines().next(), Some("n,c_hat,stderr"));
    assert!(text.lines().count() > 3);
}
