//! End-to-end tests of the pipeline binary: every subcommand runs against a
//! small synthetic experiment in a temp directory.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn bin() -> &'static str {
    env!("CARGO_BIN_EXE_hypercast")
}

fn run(args: &[&str]) -> Output {
    Command::new(bin())
        .args(args)
        .output()
        .expect("binary runs")
}

fn run_ok(args: &[&str]) -> String {
    let out = run(args);
    assert!(
        out.status.success(),
        "command {args:?} failed:\nstdout: {}\nstderr: {}",
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8_lossy(&out.stdout).into_owned()
}

struct TestDir {
    root: PathBuf,
}

impl TestDir {
    fn new(tag: &str) -> Self {
        let root = std::env::temp_dir().join(format!("hypercast_cli_{tag}_{}", std::process::id()));
        fs::remove_dir_all(&root).ok();
        fs::create_dir_all(&root).unwrap();
        TestDir { root }
    }

    fn path(&self, rel: &str) -> PathBuf {
        self.root.join(rel)
    }

    fn write_config(&self, extra: &str) -> PathBuf {
        let base = "\
data_source = synth
synth_cells = 12
synth_intervals = 450
schema = mlp_desk
epochs = 4
batch_size = 32
store_size = 6
test_tasks = 2
knn_k = 3
meta_features = 4
population = 6
offspring = 30
generations = 3
screen_multiplier = 2.0
screener_epochs = 150
distance_epochs = 60
budget = 20
methods = algorithm1,gs,ss
seed = 7
";
        let path = self.path("experiment.conf");
        fs::write(&path, format!("{base}{extra}")).unwrap();
        path
    }
}

impl Drop for TestDir {
    fn drop(&mut self) {
        fs::remove_dir_all(&self.root).ok();
    }
}

fn cfg_args<'a>(config: &'a Path, out: &'a Path) -> Vec<String> {
    vec![
        "--config".into(),
        config.display().to_string(),
        "--out".into(),
        out.display().to_string(),
    ]
}

fn stage(config: &Path, out: &Path, name: &str) -> String {
    let mut args = cfg_args(config, out);
    args.push(name.into());
    let argrefs: Vec<&str> = args.iter().map(|s| s.as_str()).collect();
    run_ok(&argrefs)
}

#[test]
fn synth_is_byte_identical_for_a_fixed_seed() {
    let dir = TestDir::new("synth_det");
    let config = dir.write_config("");
    let out_a = dir.path("a");
    let out_b = dir.path("b");
    stage(&config, &out_a, "synth");
    stage(&config, &out_b, "synth");
    let a = fs::read(out_a.join("data/grid.csv")).unwrap();
    let b = fs::read(out_b.join("data/grid.csv")).unwrap();
    assert_eq!(a, b, "same seed must produce byte-identical synthetic data");
}

#[test]
fn ingest_reads_toy_records_and_flags_gaps() {
    let dir = TestDir::new("ingest");
    // One cell, 3 intervals, with interval 1 missing.
    let records = dir.path("records.csv");
    fs::write(&records, "0,1,5.0\n2,1,7.0\n").unwrap();
    let config = dir.write_config(&format!("data_source = {}\n", records.display()));
    let out = dir.path("out");
    let stdout = stage(&config, &out, "ingest");
    assert!(stdout.contains("1 cells x 3 intervals"), "stdout: {stdout}");
    assert!(stdout.contains("1 values imputed"), "stdout: {stdout}");
    let sidecar = fs::read_to_string(out.join("data/imputed.csv")).unwrap();
    // Lone cell: the gap falls back to the series' own mean and is flagged.
    assert_eq!(sidecar.trim(), "1,1,series_mean");
    let grid = fs::read_to_string(out.join("data/grid.csv")).unwrap();
    assert!(grid.starts_with("1,0,0,5,6,7"), "grid: {grid}");
}

#[test]
fn missing_prerequisite_stages_fail_with_named_stage() {
    let dir = TestDir::new("prereq");
    let config = dir.write_config("");
    let out = dir.path("out");
    let mut args = cfg_args(&config, &out);
    args.push("optimize".into());
    let argrefs: Vec<&str> = args.iter().map(|s| s.as_str()).collect();
    let result = run(&argrefs);
    assert!(!result.status.success());
    let stderr = String::from_utf8_lossy(&result.stderr);
    assert!(
        stderr.contains("error in stage optimize") && stderr.contains("train-distance"),
        "stderr: {stderr}"
    );
}

#[test]
fn malformed_input_rows_fail_with_line_number() {
    let dir = TestDir::new("badrow");
    let records = dir.path("records.csv");
    fs::write(&records, "0,1,5.0\nbroken row\n").unwrap();
    let config = dir.write_config(&format!("data_source = {}\n", records.display()));
    let out = dir.path("out");
    let mut args = cfg_args(&config, &out);
    args.push("ingest".into());
    let argrefs: Vec<&str> = args.iter().map(|s| s.as_str()).collect();
    let result = run(&argrefs);
    assert!(!result.status.success());
    let stderr = String::from_utf8_lossy(&result.stderr);
    assert!(stderr.contains("line 2"), "stderr: {stderr}");
}

#[test]
fn full_pipeline_produces_consistent_artifacts() {
    let dir = TestDir::new("pipeline");
    let config = dir.write_config("");
    let out = dir.path("out");

    stage(&config, &out, "synth");
    let first = stage(&config, &out, "build-meta");
    assert!(
        first.contains("6 tasks x 36 strategies, 216 new evaluations"),
        "stdout: {first}"
    );
    // Resumable: a second run finds every table complete.
    let second = stage(&config, &out, "build-meta");
    assert!(second.contains("0 new evaluations"), "stdout: {second}");

    let entropy = stage(&config, &out, "entropy-report");
    assert!(entropy.contains("H(n_s)"), "stdout: {entropy}");
    let report_file = fs::read_to_string(out.join("store/entropy_report.txt")).unwrap();
    let mut lines = report_file.lines();
    assert_eq!(
        lines.next().unwrap(),
        "gene,characteristic,H_gene,H_conditional"
    );
    // One marginal row per gene (characteristic `-`) plus one row per pair.
    let marginals = report_file.lines().filter(|l| l.contains(",-,")).count();
    assert_eq!(marginals, 4);

    stage(&config, &out, "train-distance");
    let scr = stage(&config, &out, "train-screener");
    assert!(
        scr.contains("lr=0.0015 batch=128 epochs=150"),
        "stdout: {scr}"
    );

    stage(&config, &out, "optimize");
    stage(&config, &out, "baseline");
    let report = stage(&config, &out, "report");
    assert!(report.contains("algorithm1"));

    // Report columns are the documented format contract.
    let csv = fs::read_to_string(out.join("report.csv")).unwrap();
    assert_eq!(
        csv.lines().next().unwrap(),
        "method,mean_mse,mean_r2,mean_actual_evals,mean_wall_ms"
    );
    let methods: Vec<&str> = csv
        .lines()
        .skip(1)
        .map(|l| l.split(',').next().unwrap())
        .collect();
    assert_eq!(methods, vec!["algorithm1", "gs", "ss"]);

    // Exhaustive grid search cannot be beaten on validation fitness: compare
    // the best_fitness column of the two run logs per task.
    for task_log in fs::read_dir(out.join("runs")).unwrap() {
        let name = task_log.unwrap().file_name().into_string().unwrap();
        if let Some(rest) = name.strip_prefix("gs_task") {
            let task = rest.strip_suffix(".log").unwrap();
            let gs_best = final_best_fitness(&out.join(format!("runs/gs_task{task}.log")));
            let ss_best = final_best_fitness(&out.join(format!("runs/ss_task{task}.log")));
            assert!(
                gs_best >= ss_best,
                "task {task}: gs fitness {gs_best} < ss fitness {ss_best}"
            );
        }
    }

    // The plot-data file carries exactly the run-log trajectory minus the
    // wall-clock column.
    let plot_name = fs::read_dir(out.join("plot"))
        .unwrap()
        .filter_map(|e| e.ok())
        .map(|e| e.file_name().into_string().unwrap())
        .find(|n| n.starts_with("algorithm1_task"))
        .unwrap();
    let plot = fs::read_to_string(out.join("plot").join(&plot_name)).unwrap();
    let matching_log =
        fs::read_to_string(out.join("runs").join(plot_name.replace(".csv", ".log"))).unwrap();
    let log_rows: Vec<String> = matching_log
        .lines()
        .skip(1)
        .map(|l| l.rsplit_once(',').unwrap().0.to_string())
        .collect();
    let plot_rows: Vec<String> = plot.lines().skip(1).map(|l| l.to_string()).collect();
    assert_eq!(log_rows, plot_rows, "plot data must mirror the run log");

    // Results files carry the documented evaluation-report columns.
    let results = fs::read_to_string(out.join("runs/results_algorithm1.csv")).unwrap();
    assert_eq!(
        results.lines().next().unwrap(),
        "task_id,kind,strategy,mse,r2,train_runs"
    );
    assert_eq!(results.lines().count(), 3, "header plus one row per test task");

    // The manifest names every completed stage.
    let manifest = fs::read_to_string(out.join("manifest.txt")).unwrap();
    for stage_name in [
        "synth",
        "build-meta",
        "entropy-report",
        "train-distance",
        "train-screener",
        "optimize",
        "baseline",
        "report",
    ] {
        assert!(
            manifest.contains(&format!("stage {stage_name} ")),
            "manifest missing {stage_name}: {manifest}"
        );
    }
}

fn final_best_fitness(path: &Path) -> f64 {
    let text = fs::read_to_string(path).unwrap();
    let last = text.lines().last().unwrap();
    last.split(',').nth(1).unwrap().parse().unwrap()
}

#[test]
fn changed_config_is_rejected_for_an_existing_out_dir() {
    let dir = TestDir::new("confhash");
    let config = dir.write_config("");
    let out = dir.path("out");
    stage(&config, &out, "synth");
    let changed = dir.write_config("seed = 8\n");
    let mut args = cfg_args(&changed, &out);
    args.push("synth".into());
    let argrefs: Vec<&str> = args.iter().map(|s| s.as_str()).collect();
    let result = run(&argrefs);
    assert!(!result.status.success());
    let stderr = String::from_utf8_lossy(&result.stderr);
    assert!(stderr.contains("config hash mismatch"), "stderr: {stderr}");
}
