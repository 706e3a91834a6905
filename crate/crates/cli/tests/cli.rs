use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;

fn config(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("configs").join(name)
}

fn conewalk(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_conewalk")).args(args).env_remove("CONEWALK_OUT").output().unwrap()
}

fn read_json(path: &Path) -> Value {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

fn with_config(text: &str, dir: &Path) -> PathBuf {
    let p = dir.join("run.cfg");
    std::fs::write(&p, text).unwrap();
    p
}

#[test]
fn bundled_halfline_run_passes() {
    let out = tempfile::tempdir().unwrap();
    let cfg = config("halfline_gaussian.cfg");
    let o = conewalk(&["all", "--config", cfg.to_str().unwrap(), "--out", out.path().to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stdout));

    let tail = read_json(&out.path().join("tail/report.json"));
    let slope = tail["checks"].as_array().unwrap().iter().find(|c| c["name"] == "slope").unwrap();
    let v = slope["value"].as_f64().unwrap();
    assert!((-0.55..=-0.45).contains(&v), "slope {v}");
    assert_eq!(tail["schema_version"], 1);

    let plot = std::fs::read_to_string(out.path().join("tail/plot.csv")).unwrap();
    assert!(plot.starts_with("n,phat,lo,hi,predicted\n"));
    let weak = std::fs::read_to_string(out.path().join("weak_limit/plot.csv")).unwrap();
    assert!(weak.starts_with("n,bin_center_0,observed,predicted\n"));

    let m = read_json(&out.path().join("manifest.json"));
    assert_eq!(m["config_hash"].as_str().unwrap().len(), 64);
    assert_eq!(m["verdicts"]["llt"], "pass");
    assert_eq!(m["spectral"]["p"], 1.0);
    assert_eq!(m["exit_code"], 0);
}

#[test]
fn degenerate_law_is_an_error() {
    let out = tempfile::tempdir().unwrap();
    let cfg = config("degenerate.cfg");
    let o = conewalk(&["llt", "--config", cfg.to_str().unwrap(), "--out", out.path().to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&o.stderr).contains("degenerate covariance"));
}

#[test]
fn same_seed_gives_identical_bytes_under_any_worker_count() {
    let cfg = config("orthant_gaussian.cfg");
    let dirs: Vec<_> = (0..2).map(|_| tempfile::tempdir().unwrap()).collect();
    for (d, workers) in dirs.iter().zip(["1", "3"]) {
        let o = conewalk(&[
            "tail",
            "--config",
            cfg.to_str().unwrap(),
            "--out",
            d.path().to_str().unwrap(),
            "--paths",
            "30000",
            "--workers",
            workers,
        ]);
        assert!(o.status.code().is_some_and(|c| c < 3), "{}", String::from_utf8_lossy(&o.stderr));
    }
    for f in ["tail/rows.csv", "tail/plot.csv", "tail/report.json", "constants/rows.csv"] {
        let (a, b) = (dirs[0].path().join(f), dirs[1].path().join(f));
        if f.starts_with("constants") {
            assert!(!a.exists());
            continue;
        }
        assert_eq!(std::fs::read(a).unwrap(), std::fs::read(b).unwrap(), "{f}");
    }
    let (m0, m1) = (read_json(&dirs[0].path().join("manifest.json")), read_json(&dirs[1].path().join("manifest.json")));
    assert_eq!(m0["config_hash"], m1["config_hash"]);
}

#[test]
fn underpowered_run_is_inconclusive() {
    let out = tempfile::tempdir().unwrap();
    let cfg = config("halfline_gaussian.cfg");
    let o = conewalk(&["tail", "--config", cfg.to_str().unwrap(), "--out", out.path().to_str().unwrap(), "--paths", "1000"]);
    assert_eq!(o.status.code(), Some(2), "{}", String::from_utf8_lossy(&o.stdout));

    let o = conewalk(&["tail", "--config", cfg.to_str().unwrap(), "--out", out.path().to_str().unwrap(), "--paths", "10"]);
    assert_eq!(o.status.code(), Some(3));
    assert!(read_json(&out.path().join("manifest.json"))["errors"]["tail"].is_string());
}

#[test]
fn periodic_law_fails_the_aperiodicity_check() {
    let out = tempfile::tempdir().unwrap();
    let cfg = config("example1_orthant.cfg");
    let o = conewalk(&["aperiodicity", "--config", cfg.to_str().unwrap(), "--out", out.path().to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
    let rows = std::fs::read_to_string(out.path().join("aperiodicity/rows.csv")).unwrap();
    assert!(rows.starts_with("status,modulus,theta_0,theta_1\n1.0,"), "{rows}");
}

#[test]
fn schema_errors_name_the_field_and_line() {
    let dir = tempfile::tempdir().unwrap();
    let text = std::fs::read_to_string(config("halfline_gaussian.cfg")).unwrap().replace("slope_tol = 0.05", "slope_tolerance = 0.05");
    let cfg = with_config(&text, dir.path());
    let o = conewalk(&["tail", "--config", cfg.to_str().unwrap(), "--out", dir.path().to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(3));
    let err = String::from_utf8_lossy(&o.stderr);
    assert!(err.contains("slope_tolerance") && err.contains("line"), "{err}");

    let text = "schema = 1\nseed = 1\n[model]\ncone = \"orthant(2\"\nsteps = \"gaussian(2)\"\n";
    let cfg = with_config(text, dir.path());
    let o = conewalk(&["constants", "--config", cfg.to_str().unwrap(), "--out", dir.path().to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&o.stderr).contains("model.cone"));
}

#[test]
fn missing_section_is_an_error() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = config("degenerate.cfg").to_str().unwrap().to_string();
    let o = conewalk(&["bounds", "--config", &cfg, "--out", dir.path().to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&o.stderr).contains("[bounds]"));
}

#[test]
fn output_directory_defaults_to_the_environment() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = config("example1_orthant.cfg");
    let o = Command::new(env!("CARGO_BIN_EXE_conewalk"))
        .args(["cmu-probe", "--config", cfg.to_str().unwrap()])
        .env("CONEWALK_OUT", dir.path())
        .output()
        .unwrap();
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(dir.path().join("manifest.json").exists());
    assert!(dir.path().join("cmu_probe/rows.csv").exists());
}
