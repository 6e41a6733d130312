//! End-to-end tests of the `shrinknas` binary: run directories, exit codes,
//! determinism, and per-command output shapes.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use tempfile::TempDir;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_shrinknas"))
}

fn write_config(dir: &Path, body: &str) -> PathBuf {
    let path = dir.join("config.toml");
    fs::write(&path, body).unwrap();
    path
}

fn stdout_of(out: &Output) -> String {
    String::from_utf8(out.stdout.clone()).unwrap()
}

fn stderr_of(out: &Output) -> String {
    String::from_utf8(out.stderr.clone()).unwrap()
}

/// Runs `search` with the given extra args and returns the run directory.
fn run_search(config: &Path, out_dir: &Path, extra: &[&str]) -> PathBuf {
    let output = bin()
        .arg("search")
        .arg("--config")
        .arg(config)
        .arg("--out")
        .arg(out_dir)
        .args(extra)
        .output()
        .unwrap();
    assert!(output.status.success(), "search failed: {}", stderr_of(&output));
    let dir = PathBuf::from(stdout_of(&output).trim());
    assert!(dir.is_dir(), "stdout should name the run directory");
    dir
}

const SMALL: &str = "[search]\nnodes = 5\nk = 3\nseed = 11\n";

#[test]
fn search_writes_the_run_directory_layout() {
    let tmp = TempDir::new().unwrap();
    let config = write_config(tmp.path(), SMALL);
    let run = run_search(&config, tmp.path(), &[]);

    for name in ["trajectory.csv", "gopt.json", "arch.json", "arch_summary.txt", "manifest.json"] {
        assert!(run.join(name).is_file(), "missing {name}");
    }
    assert!(!run.join("manifest.json.tmp").exists(), "temp manifest should be renamed away");

    // 10 initial edges with k = 3: one start row plus sum of min(3, e) for
    // e = 10..1 candidate rows, plus the header.
    let trajectory = fs::read_to_string(run.join("trajectory.csv")).unwrap();
    assert_eq!(trajectory.lines().count(), 1 + 1 + 27);

    let manifest: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(run.join("manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["seed"], 11);
    assert_eq!(manifest["config"]["nodes"], 5);
    assert!(manifest["wallclock_seconds"].is_number());
    let dir_name = run.file_name().unwrap().to_string_lossy().into_owned();
    assert!(dir_name.starts_with("run-") && dir_name.ends_with("-11"), "got {dir_name}");
}

#[test]
fn search_outputs_are_byte_identical_across_runs_and_worker_counts() {
    let tmp = TempDir::new().unwrap();
    let config = write_config(tmp.path(), SMALL);
    let a = run_search(&config, tmp.path(), &["--workers", "1"]);
    let b = run_search(&config, tmp.path(), &["--workers", "4"]);
    assert_ne!(a, b, "each run gets its own directory");
    for name in ["trajectory.csv", "gopt.json", "arch.json", "arch_summary.txt"] {
        let left = fs::read(a.join(name)).unwrap();
        let right = fs::read(b.join(name)).unwrap();
        assert_eq!(left, right, "{name} should be byte-identical");
    }
}

#[test]
fn seed_flag_overrides_the_config() {
    let tmp = TempDir::new().unwrap();
    let config = write_config(tmp.path(), SMALL);
    let run = run_search(&config, tmp.path(), &["--seed", "99"]);
    assert!(run.file_name().unwrap().to_string_lossy().ends_with("-99"));
    let manifest: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(run.join("manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["seed"], 99);
}

#[test]
fn missing_config_exits_2_without_outputs() {
    let tmp = TempDir::new().unwrap();
    let out_dir = tmp.path().join("runs");
    let output = bin()
        .arg("search")
        .arg("--config")
        .arg(tmp.path().join("nope.toml"))
        .arg("--out")
        .arg(&out_dir)
        .output()
        .unwrap();
    assert_eq!(output.status.code(), Some(2));
    assert!(!out_dir.exists(), "no outputs on config failure");
}

#[test]
fn unknown_config_key_exits_2_naming_the_field() {
    let tmp = TempDir::new().unwrap();
    let config = write_config(tmp.path(), "[search]\nnodez = 5\n");
    let output = bin().arg("search").arg("--config").arg(&config).output().unwrap();
    assert_eq!(output.status.code(), Some(2));
    assert!(stderr_of(&output).contains("nodez"), "stderr: {}", stderr_of(&output));
}

#[test]
fn invalid_kind_exits_2() {
    let tmp = TempDir::new().unwrap();
    let config = write_config(tmp.path(), "[search]\nkind = \"gnn\"\n");
    let output = bin().arg("search").arg("--config").arg(&config).output().unwrap();
    assert_eq!(output.status.code(), Some(2));
    assert!(stderr_of(&output).contains("kind"));
}

#[test]
fn build_renders_summary_and_json() {
    let tmp = TempDir::new().unwrap();
    let config = write_config(tmp.path(), SMALL);
    let run = run_search(&config, tmp.path(), &[]);
    let gopt = run.join("gopt.json");

    let summary = bin().arg("build").arg(&gopt).output().unwrap();
    assert!(summary.status.success());
    let text = stdout_of(&summary);
    assert!(text.contains("stem") && text.contains("classifier") && text.contains("total"));

    let json = bin().arg("build").arg(&gopt).arg("--format").arg("json").output().unwrap();
    assert!(json.status.success());
    let parsed: serde_json::Value = serde_json::from_str(&stdout_of(&json)).unwrap();
    assert_eq!(parsed["kind"], "cnn");

    let csv = bin().arg("build").arg(&gopt).arg("--format").arg("csv").output().unwrap();
    assert_eq!(csv.status.code(), Some(2), "build does not render csv");
}

#[test]
fn build_flags_override_the_arch_section() {
    let tmp = TempDir::new().unwrap();
    let config =
        write_config(tmp.path(), "[search]\nnodes = 5\nk = 3\nseed = 11\n[arch]\nstages = 2\n");
    let run = run_search(&config, tmp.path(), &[]);
    let output = bin()
        .arg("build")
        .arg(run.join("gopt.json"))
        .arg("--config")
        .arg(&config)
        .arg("--stages")
        .arg("1")
        .arg("--format")
        .arg("json")
        .output()
        .unwrap();
    assert!(output.status.success());
    let parsed: serde_json::Value = serde_json::from_str(&stdout_of(&output)).unwrap();
    assert_eq!(parsed["stages"], 1);
}

#[test]
fn export_dot_renders_graphviz() {
    let tmp = TempDir::new().unwrap();
    let config = write_config(tmp.path(), SMALL);
    let run = run_search(&config, tmp.path(), &[]);
    let output = bin().arg("export-dot").arg(run.join("gopt.json")).output().unwrap();
    assert!(output.status.success());
    assert!(stdout_of(&output).starts_with("digraph"));

    let bad = bin()
        .arg("export-dot")
        .arg(run.join("gopt.json"))
        .arg("--format")
        .arg("csv")
        .output()
        .unwrap();
    assert_eq!(bad.status.code(), Some(2));
}

#[test]
fn compare_priors_single_trial_has_zero_spread() {
    let tmp = TempDir::new().unwrap();
    let config = write_config(tmp.path(), SMALL);
    let run = run_search(&config, tmp.path(), &[]);
    let output = bin()
        .arg("compare-priors")
        .arg("--config")
        .arg(&config)
        .arg("--cell")
        .arg(run.join("gopt.json"))
        .arg("--trials")
        .arg("1")
        .arg("--nodes")
        .arg("8")
        .arg("--format")
        .arg("csv")
        .output()
        .unwrap();
    assert!(output.status.success(), "{}", stderr_of(&output));
    let csv = stdout_of(&output);
    let ws = csv.lines().find(|l| l.starts_with("WS,")).unwrap();
    let fields: Vec<&str> = ws.split(',').collect();
    assert_eq!(fields[2], "1", "trials column");
    assert_eq!(fields[4], "0", "perf sd");
    assert_eq!(fields[6], "0", "macs sd");
}

#[test]
fn compare_priors_unknown_family_exits_2() {
    let tmp = TempDir::new().unwrap();
    let config = write_config(
        tmp.path(),
        "[search]\nnodes = 5\nk = 3\nseed = 11\n[priors]\nfamilies = [\"zz\"]\n",
    );
    let output = bin().arg("compare-priors").arg("--config").arg(&config).output().unwrap();
    assert_eq!(output.status.code(), Some(2));
    assert!(stderr_of(&output).contains("zz"));
}

#[test]
fn k_sweep_reports_the_candidate_evaluation_counts() {
    let tmp = TempDir::new().unwrap();
    let config = write_config(tmp.path(), "[search]\nseed = 7\n");
    let output = bin()
        .arg("k-sweep")
        .arg("--config")
        .arg(&config)
        .arg("--ks")
        .arg("10,28")
        .arg("--format")
        .arg("csv")
        .output()
        .unwrap();
    assert!(output.status.success(), "{}", stderr_of(&output));
    let csv = stdout_of(&output);
    assert!(csv.lines().any(|l| l.starts_with("10,235,")), "csv:\n{csv}");
    assert!(csv.lines().any(|l| l.starts_with("28,406,")), "csv:\n{csv}");
}

#[test]
fn selfcheck_passes_and_lists_named_groups() {
    let output = bin().arg("selfcheck").output().unwrap();
    assert!(output.status.success(), "{}", stderr_of(&output));
    let text = stdout_of(&output);
    for group in ["[gradients]", "[cardinality]", "[cost_monotonicity]"] {
        assert!(text.contains(group), "missing {group} in:\n{text}");
    }
    assert!(!text.contains("FAIL"));
}

#[test]
fn corrupted_selfcheck_is_detected() {
    let output = bin()
        .arg("selfcheck")
        .env("SHRINKNAS_SELFCHECK_CORRUPT", "1")
        .output()
        .unwrap();
    assert!(!output.status.success());
    assert!(stdout_of(&output).contains("FAIL"));
}

#[test]
fn outputs_land_in_the_out_directory() {
    let tmp = TempDir::new().unwrap();
    let config = write_config(tmp.path(), SMALL);
    let run = run_search(&config, tmp.path(), &[]);
    let dest = tmp.path().join("artifacts");
    let output = bin()
        .arg("export-dot")
        .arg(run.join("gopt.json"))
        .arg("--out")
        .arg(&dest)
        .output()
        .unwrap();
    assert!(output.status.success());
    assert!(dest.join("cell.dot").is_file());
    assert_eq!(stdout_of(&output).trim(), dest.join("cell.dot").display().to_string());
}
