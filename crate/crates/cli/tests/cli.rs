use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use tempfile::TempDir;
use troop::{Checkpoint, CgTrace, TrajectoryDataset};

fn troop(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_troop")).args(args).output().expect("binary runs")
}

fn ok(args: &[&str]) -> Output {
    let out = troop(args);
    assert!(out.status.success(), "troop {args:?} failed:\n{}", String::from_utf8_lossy(&out.stderr));
    out
}

struct Workspace {
    dir: TempDir,
}

impl Workspace {
    fn new() -> Self {
        Self { dir: TempDir::new().unwrap() }
    }

    fn path(&self, name: &str) -> PathBuf {
        self.dir.path().join(name)
    }

    fn arg(&self, name: &str) -> String {
        self.path(name).to_string_lossy().into_owned()
    }

    fn training_data(&self) -> String {
        let out = self.arg("train.json");
        ok(&["generate", "--amplitudes", "0.5,1.0", "--out", &out]);
        out
    }
}

fn dataset(path: &Path) -> TrajectoryDataset {
    TrajectoryDataset::from_json(&std::fs::read_to_string(path).unwrap()).unwrap()
}

fn checkpoint(path: &Path) -> Checkpoint {
    Checkpoint::from_json(&std::fs::read_to_string(path).unwrap()).unwrap()
}

#[test]
fn generate_writes_the_training_set_and_a_manifest() {
    let ws = Workspace::new();
    let out = ws.training_data();
    let data = dataset(Path::new(&out));
    assert_eq!(data.len(), 2);
    assert!(data.trajectories().iter().all(|t| t.len() == 11));
    assert_eq!(data.trajectories()[1].observations[0][0], 3.0);
    let manifest: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(ws.path("train.json.manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["command"], "generate");
    assert_eq!(manifest["seed"], 0);
}

#[test]
fn random_amplitudes_follow_the_seed() {
    let ws = Workspace::new();
    let draw = |name: &str, seed: &str| {
        let out = ws.arg(name);
        ok(&["generate", "--amplitudes", "random:100:0,1", "--seed", seed, "--out", &out]);
        dataset(Path::new(&out))
    };
    let (a, b, c) = (draw("a.json", "7"), draw("b.json", "7"), draw("c.json", "8"));
    assert_eq!(a.len(), 100);
    assert_eq!(a.trajectories(), b.trajectories());
    assert_ne!(a.trajectories(), c.trajectories());
    assert!(a.trajectories().iter().all(|t| (0.0..1.0).contains(&t.x0[0])));
}

#[test]
fn zero_amplitude_gives_a_silent_trajectory() {
    let ws = Workspace::new();
    let out = ws.arg("zero.json");
    ok(&["generate", "--amplitudes", "0", "--out", &out]);
    let data = dataset(Path::new(&out));
    assert!(data.trajectories()[0].observations.iter().all(|y| y[0] == 0.0));
}

#[test]
fn baselines_write_checkpoints() {
    let ws = Workspace::new();
    let data = ws.training_data();
    let pod = ws.arg("pod.json");
    let bt = ws.arg("bt.json");
    ok(&["baseline", "--method", "pod", "--data", &data, "--rank", "2", "--out", &pod]);
    ok(&["baseline", "--method", "bt", "--rank", "2", "--out", &bt]);
    let pod = checkpoint(Path::new(&pod));
    assert_eq!((pod.n, pod.r), (3, 2));
    assert_eq!(pod.phi, pod.psi);
    assert_eq!(pod.meta.label.as_deref(), Some("pod"));
    assert!(pod.meta.final_cost.is_some());
    let bt = checkpoint(Path::new(&bt));
    assert_ne!(bt.phi, bt.psi);
    assert!(bt.meta.final_cost.is_none());
}

#[test]
fn zero_iterations_return_the_initial_pair() {
    let ws = Workspace::new();
    let data = ws.training_data();
    let bt = ws.arg("bt.json");
    let out = ws.arg("trained.json");
    ok(&["baseline", "--method", "bt", "--rank", "2", "--out", &bt]);
    ok(&["train", "--data", &data, "--rank", "2", "--max-iters", "0", "--init", &format!("file:{bt}"), "--out", &out]);
    let trace = CgTrace::from_json_lines(&std::fs::read_to_string(ws.path("trained.json.trace.jsonl")).unwrap()).unwrap();
    assert_eq!(trace.len(), 1);
    let (init, trained) = (checkpoint(Path::new(&bt)).to_pair().unwrap(), checkpoint(Path::new(&out)).to_pair().unwrap());
    assert!((init.projector().unwrap() - trained.projector().unwrap()).amax() < 1e-12);
    assert_eq!(checkpoint(Path::new(&out)).meta.iterations, 0);
}

#[test]
fn pod_initialization_starts_without_regularization() {
    let ws = Workspace::new();
    let data = ws.training_data();
    let initial_objective = |gamma: &str| {
        let out = ws.arg(&format!("pod-{gamma}.json"));
        ok(&["train", "--data", &data, "--rank", "2", "--init", "pod", "--gamma", gamma, "--max-iters", "0", "--out", &out]);
        let trace = CgTrace::from_json_lines(&std::fs::read_to_string(format!("{out}.trace.jsonl")).unwrap()).unwrap();
        trace.records[0].objective
    };
    assert_eq!(initial_objective("0"), initial_objective("0.001"));
}

#[test]
fn training_runs_to_convergence_from_balanced_truncation() {
    let ws = Workspace::new();
    let data = ws.training_data();
    let out = ws.arg("trained.json");
    let trace = ws.arg("run.jsonl");
    ok(&["train", "--data", &data, "--rank", "2", "--out", &out, "--trace", &trace]);
    let trace = CgTrace::from_json_lines(&std::fs::read_to_string(&trace).unwrap()).unwrap();
    let last = trace.records.last().unwrap();
    assert!(last.grad_norm_sq <= 1e-8);
    let ck = checkpoint(Path::new(&out));
    assert_eq!(ck.meta.final_cost, Some(last.objective));
    assert_eq!(ck.meta.iterations, trace.len() - 1);
}

#[test]
fn failed_line_search_keeps_the_partial_trace() {
    // the POD model sits next to a blow-up boundary where the steps needed
    // outrun the resolution of the default integrator
    let ws = Workspace::new();
    let data = ws.training_data();
    let out = ws.arg("trained.json");
    let run = troop(&["train", "--data", &data, "--rank", "2", "--init", "pod", "--max-iters", "15", "--out", &out]);
    assert_eq!(run.status.code(), Some(3));
    let stderr = String::from_utf8_lossy(&run.stderr);
    assert!(stderr.contains("line search failed"), "{stderr}");
    let trace = CgTrace::from_json_lines(&std::fs::read_to_string(ws.path("trained.json.trace.jsonl")).unwrap()).unwrap();
    assert!(!trace.is_empty());
    assert!(!ws.path("trained.json").exists());
}

fn full_rank_checkpoint(ws: &Workspace) -> String {
    let path = ws.arg("full.json");
    let identity = [1.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 1.0];
    let ck = serde_json::json!({
        "n": 3, "r": 3, "phi": identity, "psi": identity,
        "meta": { "gamma": 0.0, "iterations": 0, "final_cost": null, "final_grad_norm": null, "label": "full" }
    });
    std::fs::write(&path, ck.to_string()).unwrap();
    path
}

fn error_column(csv_path: &Path) -> Vec<f64> {
    let mut reader = csv::Reader::from_path(csv_path).unwrap();
    let col = reader.headers().unwrap().iter().position(|h| h == "normalized_error").unwrap();
    reader.records().map(|r| r.unwrap()[col].parse().unwrap()).collect()
}

#[test]
fn full_order_pair_reproduces_the_data() {
    let ws = Workspace::new();
    let data = ws.training_data();
    let full = full_rank_checkpoint(&ws);
    let out = ws.arg("eval.csv");
    let stdout = ok(&["evaluate", "--checkpoint", &full, "--data", &data, "--out", &out]).stdout;
    assert!(String::from_utf8(stdout).unwrap().contains("full"));
    let errors = error_column(Path::new(&out));
    assert_eq!(errors.len(), 22);
    assert!(errors.iter().all(|e| *e <= 1e-10), "{errors:?}");
    assert!(ws.path("eval.csv.summary.csv").exists());
}

#[test]
fn sinusoidal_input_evaluation_runs_on_impulse_trained_models() {
    let ws = Workspace::new();
    let bt = ws.arg("bt.json");
    let full = full_rank_checkpoint(&ws);
    let out = ws.arg("sin.csv");
    ok(&["baseline", "--method", "bt", "--rank", "2", "--out", &bt]);
    ok(&["evaluate", "--checkpoint", &bt, "--checkpoint", &full, "--input", "sin:1.0:1.0", "--out", &out]);
    let mut reader = csv::Reader::from_path(&out).unwrap();
    let header: Vec<String> = reader.headers().unwrap().iter().map(str::to_string).collect();
    assert_eq!(header, ["model", "trajectory", "t", "y_true_0", "y_pred_0", "normalized_error"]);
    let rows: Vec<csv::StringRecord> = reader.records().map(Result::unwrap).collect();
    assert_eq!(rows.len(), 2 * 101);
    assert!(rows.iter().all(|r| &r[1] == "sin:1.0:1.0"));
    // zero initial state and u(0) = 0
    assert_eq!(rows[0][3].parse::<f64>().unwrap(), 0.0);
}

#[test]
fn repeated_pipelines_are_bit_identical() {
    let run = || {
        let ws = Workspace::new();
        let data = ws.training_data();
        let test = ws.arg("test.json");
        ok(&["generate", "--amplitudes", "random:5:0,1", "--seed", "3", "--out", &test]);
        let out = ws.arg("trained.json");
        ok(&["train", "--data", &data, "--rank", "2", "--max-iters", "10", "--out", &out]);
        let csv = ws.arg("eval.csv");
        ok(&["--threads", "2", "evaluate", "--checkpoint", &out, "--data", &test, "--out", &csv]);
        (std::fs::read(&csv).unwrap(), std::fs::read(&out).unwrap())
    };
    assert_eq!(run(), run());
}

#[test]
fn rank_beyond_the_data_is_rejected() {
    let ws = Workspace::new();
    let data = ws.arg("single.json");
    ok(&["generate", "--amplitudes", "1.0", "--samples", "1", "--out", &data]);
    let out = troop(&["baseline", "--method", "pod", "--data", &data, "--rank", "2", "--out", &ws.arg("pod.json")]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("rank"));
    assert!(!ws.path("pod.json").exists());
}

#[test]
fn invalid_arguments_exit_with_code_two() {
    let ws = Workspace::new();
    let data = ws.training_data();
    let cases: [&[&str]; 4] = [
        &["train", "--data", &data, "--rank", "3", "--out", "x.json"],
        &["train", "--data", "missing.json", "--rank", "2", "--out", "x.json"],
        &["generate", "--amplitudes", "random:0:0,1", "--out", "x.json"],
        &["evaluate", "--checkpoint", "missing.json", "--input", "cos:1", "--out", "x.csv"],
    ];
    for args in cases {
        let out = troop(args);
        assert_eq!(out.status.code(), Some(2), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
        assert!(!out.stderr.is_empty());
    }
}

#[test]
fn numerical_failures_exit_with_code_three() {
    let ws = Workspace::new();
    let data = ws.training_data();
    // a pair whose pairing is singular cannot define a projector
    let path = ws.arg("singular.json");
    let ck = serde_json::json!({
        "n": 3, "r": 1, "phi": [1.0, 0.0, 0.0], "psi": [0.0, 1.0, 0.0],
        "meta": { "gamma": 0.0, "iterations": 0, "final_cost": null, "final_grad_norm": null }
    });
    std::fs::write(&path, ck.to_string()).unwrap();
    let out = troop(&["evaluate", "--checkpoint", &path, "--data", &data, "--out", &ws.arg("e.csv")]);
    assert_eq!(out.status.code(), Some(3), "{}", String::from_utf8_lossy(&out.stderr));
}
