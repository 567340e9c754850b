use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;

const TRUTH: &str = r#"{
  "granularity": {"kind": "per_element"},
  "flags": {"readout_on": true, "cnot_dp_on": true, "single_qubit_dp_on": true},
  "readout": [
    {"qubit": 0, "model": "aro", "p0": 0.02, "p1": 0.07},
    {"qubit": 1, "model": "aro", "p0": 0.03, "p1": 0.05},
    {"qubit": 2, "model": "aro", "p0": 0.01, "p1": 0.06}
  ],
  "x_gate": [{"qubit": 0, "p": 0.003}, {"qubit": 1, "p": 0.004}, {"qubit": 2, "p": 0.002}],
  "cnot": [{"qubits": [0, 1], "p_cnot": 0.03}, {"qubits": [1, 2], "p_cnot": 0.02}],
  "hidden_effects": {"state_dependent_readout": 0.02}
}"#;

struct Workspace {
    dir: tempfile::TempDir,
}

impl Workspace {
    fn new() -> Self {
        let dir = tempfile::tempdir().unwrap();
        std::fs::write(dir.path().join("dev.json"), r#"{"num_qubits": 3, "couplings": [[0, 1], [1, 2]]}"#).unwrap();
        std::fs::write(dir.path().join("truth.json"), TRUTH).unwrap();
        Self { dir }
    }

    fn path(&self, name: &str) -> PathBuf {
        self.dir.path().join(name)
    }

    fn run(&self, args: &[&str]) -> Output {
        Command::new(env!("CARGO_BIN_EXE_noisy-circuit"))
            .current_dir(self.dir.path())
            .env("NOISY_CIRCUIT_OUT", self.dir.path().join("out"))
            .args(args)
            .output()
            .unwrap()
    }

    fn ok(&self, args: &[&str]) -> Value {
        let out = self.run(args);
        assert!(out.status.success(), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
        serde_json::from_slice(&out.stdout).unwrap()
    }

    fn characterize(&self) -> Value {
        self.ok(&[
            "characterize", "--device", "dev.json", "--backend", "mock:truth.json", "--shots", "4096", "--seed", "42",
        ])
    }

    fn read(&self, name: &str) -> String {
        std::fs::read_to_string(self.path("out").join(name)).unwrap()
    }
}

fn error_of(out: &Output) -> (i32, String) {
    let err: Value = serde_json::from_slice(&out.stderr).unwrap_or_else(|_| {
        panic!("stderr is not JSON: {}", String::from_utf8_lossy(&out.stderr))
    });
    (out.status.code().unwrap(), err["error"].as_str().unwrap().to_string())
}

#[test]
fn characterize_writes_one_entry_per_test() {
    let ws = Workspace::new();
    let summary = ws.characterize();
    // 3 qubits x 3 tests + 2 couplings
    assert_eq!(summary["entries"], 11);
    assert_eq!(summary["experiment_count"]["total_shots"], 11 * 4096);
    let archive: Value = serde_json::from_str(&ws.read("archive.json")).unwrap();
    assert_eq!(archive["entries"].as_array().unwrap().len(), 11);
}

#[test]
fn characterize_is_byte_identical_across_runs() {
    let ws = Workspace::new();
    ws.characterize();
    let first = ws.read("archive.json");
    ws.characterize();
    assert_eq!(first, ws.read("archive.json"));
}

#[test]
fn missing_device_is_a_usage_error() {
    let ws = Workspace::new();
    let out = ws.run(&["characterize", "--device", "absent.json", "--backend", "mock:truth.json"]);
    assert_eq!(error_of(&out), (2, "FileNotFound".to_string()));
}

#[test]
fn zero_shots_is_rejected() {
    let ws = Workspace::new();
    let out = ws.run(&["characterize", "--device", "dev.json", "--backend", "mock:truth.json", "--shots", "0"]);
    assert_eq!(error_of(&out), (2, "ConfigError".to_string()));
}

#[test]
fn fit_records_provenance_and_feasibility() {
    let ws = Workspace::new();
    ws.characterize();
    let archive = ws.path("out/archive.json");
    let summary = ws.ok(&["fit", "--archive", archive.to_str().unwrap(), "--device", "dev.json"]);
    assert_eq!(summary["all_feasible"], true);
    assert_eq!(summary["parameter_count"], 3 * 2 + 2);

    let model: Value = serde_json::from_str(&ws.read("model.json")).unwrap();
    let digest = sha256sum_of(&archive);
    assert_eq!(model["provenance"], format!("sha256:{digest}"));
    let diag: Value = serde_json::from_str(&ws.read("model.diagnostics.json")).unwrap();
    assert!(diag["estimates"].as_array().unwrap().iter().all(|e| e["feasible"] == true));
}

fn sha256sum_of(path: &Path) -> String {
    let out = Command::new("sha256sum").arg(path).output().unwrap();
    String::from_utf8(out.stdout).unwrap().split_whitespace().next().unwrap().to_string()
}

#[test]
fn sro_register_model_has_one_readout_parameter() {
    let ws = Workspace::new();
    ws.characterize();
    let summary = ws.ok(&[
        "fit", "--archive", "out/archive.json", "--flags", "sro", "--granularity", "register", "--name", "sro",
    ]);
    assert_eq!(summary["parameter_count"], 1);
}

#[test]
fn fit_without_bell_tests_reports_missing_coverage() {
    let ws = Workspace::new();
    ws.characterize();
    let mut archive: Value = serde_json::from_str(&ws.read("archive.json")).unwrap();
    archive["entries"]
        .as_array_mut()
        .unwrap()
        .retain(|e| !e["label"].as_str().unwrap().starts_with("bell:"));
    std::fs::write(ws.path("partial.json"), archive.to_string()).unwrap();
    let out = ws.run(&["fit", "--archive", "partial.json", "--flags", "aro+dp", "--device", "dev.json"]);
    assert_eq!(error_of(&out), (1, "MissingCoverage".to_string()));
}

fn fitted(ws: &Workspace) {
    ws.characterize();
    ws.ok(&["fit", "--archive", "out/archive.json", "--name", "spatial"]);
}

#[test]
fn scaling_writes_per_size_csv() {
    let ws = Workspace::new();
    fitted(&ws);
    ws.ok(&[
        "evaluate", "--device", "dev.json", "--backend", "mock:truth.json", "--app", "ghz:2..3", "--scaling",
        "--model", "out/spatial.json", "--resamples", "5",
    ]);
    let csv = ws.read("scaling.csv");
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines[0], "n,cnot_count,tvd_mean,tvd_std,tvd_per_cnot");
    assert_eq!(lines.len(), 3);
    assert!(lines[1].starts_with("2,1,"));
}

#[test]
fn bv_reports_predicted_and_observed_accuracy() {
    let ws = Workspace::new();
    fitted(&ws);
    ws.ok(&[
        "evaluate", "--device", "dev.json", "--backend", "mock:truth.json", "--app", "bv:11@0,2/1", "--model",
        "out/spatial.json", "--resamples", "3",
    ]);
    let report: Value = serde_json::from_str(&ws.read("evaluate.json")).unwrap();
    let row = &report["bv_accuracy"][0];
    let (p, o) = (row["predicted"].as_f64().unwrap(), row["observed"].as_f64().unwrap());
    assert!(p > 0.5 && p < 1.0 && o > 0.5 && o < 1.0, "{row}");
    assert!(ws.read("bv_accuracy.csv").starts_with("model,secret,predicted,observed"));
}

#[test]
fn compare_ranks_models() {
    let ws = Workspace::new();
    fitted(&ws);
    std::fs::write(
        ws.path("ideal.json"),
        r#"{"granularity": {"kind": "per_element"}, "flags": {"readout_on": false, "cnot_dp_on": false}}"#,
    )
    .unwrap();
    ws.ok(&[
        "evaluate", "--device", "dev.json", "--backend", "mock:truth.json", "--app", "ghz:3", "--compare", "--model",
        "ideal.json", "--model", "fit=out/spatial.json", "--resamples", "5",
    ]);
    let report: Value = serde_json::from_str(&ws.read("evaluate.json")).unwrap();
    let scores = report["rankings"][0]["scores"].as_array().unwrap();
    assert_eq!(scores[0]["id"], "fit");
    assert_eq!(scores[1]["id"], "ideal");
}

#[test]
fn select_requires_threshold() {
    let ws = Workspace::new();
    fitted(&ws);
    let out = ws.run(&[
        "evaluate", "--device", "dev.json", "--backend", "mock:truth.json", "--app", "ghz:3", "--select", "--model",
        "out/spatial.json",
    ]);
    assert_eq!(error_of(&out), (2, "ConfigError".to_string()));
}

#[test]
fn select_walks_the_ladder() {
    let ws = Workspace::new();
    fitted(&ws);
    let summary = ws.ok(&[
        "evaluate", "--device", "dev.json", "--backend", "mock:truth.json", "--app", "ghz:3", "--select",
        "--threshold", "0.5", "--model", "out/spatial.json", "--resamples", "5",
    ]);
    assert!(summary["config_hash"].as_str().unwrap().len() == 64);
    let report: Value = serde_json::from_str(&ws.read("evaluate.json")).unwrap();
    assert_eq!(report["selections"][0]["selected"], "spatial");
    assert_eq!(report["selections"][0]["threshold_unmet"], false);
}

#[test]
fn usage_errors_exit_with_two() {
    let ws = Workspace::new();
    assert_eq!(ws.run(&["characterize"]).status.code(), Some(2));
    assert_eq!(ws.run(&["bogus"]).status.code(), Some(2));
}

#[test]
fn demo_full_paper_writes_reports() {
    let ws = Workspace::new();
    let report = ws.ok(&["demo", "full-paper", "--shots", "1024", "--resamples", "2", "--seed", "7"]);
    assert_eq!(report["bell_ranking"].as_array().unwrap().len(), 6);
    assert_eq!(report["bv_accuracy"].as_array().unwrap().len(), 8);
    for f in ["truth.json", "archive.json", "model_aro_dp.json", "bell_compare.csv", "ghz_scaling.csv", "bv_accuracy.csv"] {
        assert!(ws.path("out").join(f).exists(), "{f}");
    }
}
