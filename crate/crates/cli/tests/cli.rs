use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use seamlab_cli::record::{rows_from_csv, sha256_hex, METRICS_TABLE, RECORD_FILE};
use seamlab_cli::report::SUMMARY_FILE;
use seamlab_cli::{parse_config, run_config, CliError, ExperimentKind, RunRecord};
use serde_json::{json, Value};

fn seamlab(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_seamlab")).args(args).output().unwrap()
}

fn write_config(dir: &Path, name: &str, config: &Value) -> PathBuf {
    let path = dir.join(name);
    std::fs::write(&path, serde_json::to_string_pretty(config).unwrap()).unwrap();
    path
}

fn tiny_toy() -> Value {
    json!({
        "toy": { "side": 8, "x_levels": 5, "y_levels": 5, "scale_levels": 8, "min_scale": 1.5, "max_scale": 3.0 },
        "d": 3, "hidden": 8, "epochs": 3, "bins": 2, "n_probes": 3, "probe_n_mc": 1
    })
}

fn tiny_linear() -> Value {
    json!({
        "m": 5, "d": 2, "n": 400, "loadings": [2.0, 1.0],
        "phases": [{ "epochs": 3, "lr": 0.01, "batch_size": 50 }]
    })
}

fn tiny_configs() -> Vec<Value> {
    vec![
        json!({ "experiment": "linear-symmetry", "seeds": [0, 1], "output_dir": "ls", "linear_symmetry": tiny_linear() }),
        json!({ "experiment": "beta-sweep", "seeds": [3], "output_dir": "bs",
                "beta_sweep": { "model": tiny_toy(), "betas": [0.5, 2.0], "cov_modes": ["diagonal", "full"] } }),
        json!({ "experiment": "beta-anneal", "seeds": [4], "output_dir": "ba", "beta_anneal": { "model": tiny_toy() } }),
        json!({ "experiment": "seam-geometry", "seeds": [5, 6], "output_dir": "sg" }),
        json!({ "experiment": "identifiability", "seeds": [7], "output_dir": "id", "identifiability": { "n_probes": 3 } }),
    ]
}

#[test]
fn every_experiment_runs_and_reports() {
    let tmp = tempfile::tempdir().unwrap();
    for (k, config) in tiny_configs().iter().enumerate() {
        let path = write_config(tmp.path(), &format!("c{k}.json"), config);
        let out = seamlab(&["run", path.to_str().unwrap()]);
        assert!(out.status.success(), "{}: {}", config["experiment"], String::from_utf8_lossy(&out.stderr));
        let dir = tmp.path().join(config["output_dir"].as_str().unwrap());
        let record: RunRecord = serde_json::from_slice(&std::fs::read(dir.join(RECORD_FILE)).unwrap()).unwrap();
        assert_eq!(record.experiment.name(), config["experiment"].as_str().unwrap());
        assert!(record.manifest.keys().any(|f| f.starts_with("models/") && f.ends_with(".json")));
        for (rel, digest) in &record.manifest {
            assert_eq!(sha256_hex(&std::fs::read(dir.join(rel)).unwrap()), *digest);
        }
        let rows = rows_from_csv(&std::fs::read_to_string(dir.join(METRICS_TABLE)).unwrap()).unwrap();
        let n_seeds = config["seeds"].as_array().unwrap().len();
        assert_eq!(record.seeds.len(), n_seeds);
        assert_eq!(rows.len(), record.seeds.iter().map(|s| s.metrics.len()).sum::<usize>());

        let out = seamlab(&["report", dir.to_str().unwrap()]);
        assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
        let first = std::fs::read(dir.join(SUMMARY_FILE)).unwrap();
        assert!(seamlab(&["report", dir.to_str().unwrap()]).status.success());
        assert_eq!(std::fs::read(dir.join(SUMMARY_FILE)).unwrap(), first);
    }
}

#[test]
fn runs_are_deterministic_across_directories() {
    let config = &tiny_configs()[0];
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let parsed = parse_config(&config.to_string()).unwrap();
    let ra = run_config(&parsed, a.path()).unwrap();
    let rb = run_config(&parsed, b.path()).unwrap();
    assert_eq!(ra.hash(), rb.hash());
    assert_eq!(std::fs::read(a.path().join("ls").join(RECORD_FILE)).unwrap(), ra.to_json().into_bytes());
}

#[test]
fn report_rejects_missing_and_tampered_runs() {
    let tmp = tempfile::tempdir().unwrap();
    let empty = tmp.path().join("empty");
    std::fs::create_dir(&empty).unwrap();
    let out = seamlab(&["report", empty.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(1));
    assert!(matches!(seamlab_cli::report(&empty), Err(CliError::CorruptRun(_))));

    let config = write_config(tmp.path(), "sg.json", &tiny_configs()[3]);
    assert!(seamlab(&["run", config.to_str().unwrap()]).status.success());
    let dir = tmp.path().join("sg");
    let table = dir.join(METRICS_TABLE);
    let text = std::fs::read_to_string(&table).unwrap();
    std::fs::write(&table, text.replacen(",c1,", ",c1,1", 1)).unwrap();
    assert!(matches!(seamlab_cli::report(&dir), Err(CliError::CorruptRun(_))));
    assert_eq!(seamlab(&["report", dir.to_str().unwrap()]).status.code(), Some(1));
}

#[test]
fn validation_errors_exit_with_one() {
    let tmp = tempfile::tempdir().unwrap();
    let cases = [
        json!({ "experiment": "no-such-experiment", "seeds": [0], "output_dir": "x" }),
        json!({ "experiment": "seam-geometry", "seeds": [], "output_dir": "x" }),
        json!({ "experiment": "seam-geometry", "seeds": [0], "output_dir": "x", "stray": 1 }),
        json!({ "experiment": "linear-symmetry", "seeds": [0], "output_dir": "x",
                "linear_symmetry": { "loadings": [1.0, 1.0, 2.0] } }),
        json!({ "experiment": "beta-sweep", "seeds": [0], "output_dir": "x", "beta_sweep": { "betas": [1.0] } }),
    ];
    for (k, config) in cases.iter().enumerate() {
        let path = write_config(tmp.path(), &format!("bad{k}.json"), config);
        let out = seamlab(&["run", path.to_str().unwrap()]);
        assert_eq!(out.status.code(), Some(1), "case {k}");
        assert!(!tmp.path().join("x").exists());
    }
    let err = parse_config(&cases[0].to_string()).unwrap_err().to_string();
    for name in ExperimentKind::ALL {
        assert!(err.contains(name), "{err}");
    }
    assert_eq!(seamlab(&["run", tmp.path().join("absent.json").to_str().unwrap()]).status.code(), Some(1));
    assert_eq!(seamlab(&["frobnicate"]).status.code(), Some(1));
    assert_eq!(seamlab(&[]).status.code(), Some(1));
    assert_eq!(seamlab(&["--help"]).status.code(), Some(0));
}

#[test]
fn numerical_failure_exits_with_two() {
    let tmp = tempfile::tempdir().unwrap();
    let mut linear = tiny_linear();
    linear["grad_clip"] = Value::Null;
    linear["phases"][0]["lr"] = json!(1e6);
    let config = json!({ "experiment": "linear-symmetry", "seeds": [0], "output_dir": "div", "linear_symmetry": linear });
    let path = write_config(tmp.path(), "div.json", &config);
    let out = seamlab(&["run", path.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(String::from_utf8_lossy(&out.stderr).contains("numerical"));
}

#[test]
fn config_hash_ignores_formatting_and_location() {
    let config = &tiny_configs()[3];
    let a = parse_config(&config.to_string()).unwrap();
    let b = parse_config(&serde_json::to_string_pretty(config).unwrap()).unwrap();
    assert_eq!(a.hash(), b.hash());
    let mut other = config.clone();
    other["seeds"] = json!([5]);
    assert_ne!(a.hash(), parse_config(&other.to_string()).unwrap().hash());
}
