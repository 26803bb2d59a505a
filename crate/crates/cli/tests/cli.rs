use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

const TINY: &str = "\
[experiment]
name = tiny
seed = 5

[motion]
dock_return_period = 20

[dataset]
n_samples = 600
leap = 20

[baseline2]
leap = 20

[train]
epochs = 2
batch_size = 64
";

fn setup() -> (tempfile::TempDir, PathBuf) {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("tiny.ini");
    fs::write(&cfg, TINY).unwrap();
    (dir, cfg)
}

fn npos(cfg: &Path, out: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_npos"))
        .arg("--config")
        .arg(cfg)
        .arg("--out")
        .arg(out)
        .args(args)
        .env_remove("NPOS_OUT_DIR")
        .env_remove("NPOS_THREADS")
        .output()
        .unwrap()
}

fn first_line(path: &Path) -> String {
    fs::read_to_string(path).unwrap().lines().next().unwrap_or_default().to_string()
}

fn files_with_suffix(dir: &Path, suffix: &str) -> Vec<String> {
    fs::read_dir(dir)
        .unwrap()
        .filter_map(|e| e.ok()?.file_name().into_string().ok())
        .filter(|n| n.ends_with(suffix))
        .collect()
}

#[test]
fn staged_pipeline_writes_expected_files() {
    let (dir, cfg) = setup();
    let out = dir.path().join("run");
    for step in [&["simulate"][..], &["featurize"], &["train", "--method", "ours"], &["evaluate", "--method", "ours"]] {
        let o = npos(&cfg, &out, step);
        assert!(o.status.success(), "{step:?}: {}", String::from_utf8_lossy(&o.stderr));
    }
    assert_eq!(first_line(&out.join("tiny_trajectory.csv")), "n,x,y,heading");
    assert_eq!(first_line(&out.join("tiny_displacements.csv")), "n,dx,dy");
    assert_eq!(first_line(&out.join("tiny_anchors.csv")), "a,x,y,var");
    assert_eq!(first_line(&out.join("tiny_triangles.csv")), "m,V,dAx,dAy,dBx,dBy,dCx,dCy");
    assert_eq!(first_line(&out.join("tiny_results.csv")), "method,mean_m,median_m,p95_m");
    assert_eq!(first_line(&out.join("tiny_cdf_ours.csv")), "error_m,cum_prob");
    assert_eq!(files_with_suffix(&out, ".npom").len(), 1);
    let manifest = fs::read_to_string(out.join("tiny_manifest.txt")).unwrap();
    assert!(manifest.contains("config_hash"));
    assert!(manifest.contains("tiny_features.npof"));
    assert!(files_with_suffix(&out, ".partial").is_empty());
}

#[test]
fn all_reports_every_method() {
    let (dir, cfg) = setup();
    let out = dir.path().join("all");
    let o = npos(&cfg, &out, &["all"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let results = fs::read_to_string(out.join("tiny_results.csv")).unwrap();
    let rows: Vec<&str> = results.lines().skip(1).collect();
    assert_eq!(rows.len(), 4);
    for m in ["ours", "baseline1", "baseline2", "baseline3"] {
        assert!(rows.iter().any(|r| r.starts_with(&format!("{m},"))), "{m} missing");
        assert!(out.join(format!("tiny_error_map_{m}.svg")).exists());
    }
    assert!(out.join("tiny_cdf.svg").exists());
    assert_eq!(files_with_suffix(&out, ".npom").len(), 4);
}

#[test]
fn training_without_features_fails_cleanly() {
    let (dir, cfg) = setup();
    let out = dir.path().join("empty");
    let o = npos(&cfg, &out, &["train", "--method", "ours"]);
    assert_eq!(o.status.code(), Some(4), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(!out.exists() || files_with_suffix(&out, ".npom").is_empty());
}

#[test]
fn unknown_method_has_its_own_exit_code() {
    let (dir, cfg) = setup();
    let o = npos(&cfg, &dir.path().join("x"), &["train", "--method", "kalman"]);
    assert_eq!(o.status.code(), Some(5));
    assert!(String::from_utf8_lossy(&o.stderr).contains("kalman"));
}

#[test]
fn config_schema_violations_exit_with_config_code() {
    let dir = tempfile::tempdir().unwrap();
    for body in ["[dataset]\nn_sampels = 10\n", "[nonsense]\na = 1\n", "[dataset]\nleap = many\n"] {
        let cfg = dir.path().join("bad.ini");
        fs::write(&cfg, body).unwrap();
        let o = npos(&cfg, &dir.path().join("out"), &["simulate"]);
        assert_eq!(o.status.code(), Some(3), "{body:?}: {}", String::from_utf8_lossy(&o.stderr));
    }
}

#[test]
fn missing_config_file_is_missing_input() {
    let dir = tempfile::tempdir().unwrap();
    let o = npos(&dir.path().join("absent.ini"), &dir.path().join("out"), &["simulate"]);
    assert_eq!(o.status.code(), Some(4));
}

#[test]
fn environment_overrides_output_dir() {
    let (dir, cfg) = setup();
    let target = dir.path().join("from_env");
    let o = Command::new(env!("CARGO_BIN_EXE_npos"))
        .arg("--config")
        .arg(&cfg)
        .arg("simulate")
        .env("NPOS_OUT_DIR", &target)
        .env("NPOS_THREADS", "1")
        .output()
        .unwrap();
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(target.join("tiny_csi.npos").exists());
}
