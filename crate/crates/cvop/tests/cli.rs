//! End-to-end checks of the command-line surface: every subcommand, the
//! documented exit codes, and byte-level determinism of output files.

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn cvop() -> Command {
    Command::new(env!("CARGO_BIN_EXE_cvop"))
}

fn run(args: &[&str]) -> Output {
    cvop().args(args).output().expect("spawn cvop")
}

fn stdout(out: &Output) -> String {
    String::from_utf8_lossy(&out.stdout).into_owned()
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

fn temp_dir(tag: &str) -> PathBuf {
    let dir = std::env::temp_dir().join(format!("cvop-cli-{tag}"));
    std::fs::create_dir_all(&dir).unwrap();
    dir
}

fn fixture(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("tests/fixtures")
        .join(name)
}

const TINY_CONFIG: &str = r#"{
    "problem": {"name": "box_biobjective", "n": 3},
    "primal_arch": {"hidden_widths": [8, 8], "terminal": {"kind": "projection"}},
    "dual_arch": {"hidden_widths": [8, 8], "terminal": {"kind": "relu"}},
    "train": {"epochs": 40, "learning_rate": 1e-3, "eta": 10.0, "k": 4, "sampling": "grid", "seed": 7},
    "test": {"grid_size": 21}
}"#;

#[test]
fn list_problems_prints_five_builtins() {
    let out = run(&["list-problems"]);
    assert!(out.status.success());
    let text = stdout(&out);
    assert_eq!(text.lines().count(), 5);
    for name in [
        "box_biobjective",
        "test_instance_4",
        "hyperball",
        "mean_variance",
        "lvop",
    ] {
        assert!(text.contains(name), "missing {name} in:\n{text}");
    }
}

#[test]
fn unknown_subcommand_and_flags_exit_one() {
    let out = run(&["definitely-not-a-command"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(stderr(&out).starts_with("error[usage]:"));

    let out = run(&["frontier", "--checkpoint", "/nonexistent", "--csv", "/tmp/x.csv"]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn gradcheck_box_passes() {
    let out = run(&[
        "gradcheck",
        "--problem",
        "box_biobjective",
        "--seed",
        "1",
        "--configs",
        "3",
    ]);
    assert!(
        out.status.success(),
        "stdout: {}\nstderr: {}",
        stdout(&out),
        stderr(&out)
    );
    assert!(stdout(&out).contains("max relative error"));
}

#[test]
fn train_frontier_baseline_pipeline() {
    let dir = temp_dir("pipeline");
    let config_path = dir.join("config.json");
    std::fs::write(&config_path, TINY_CONFIG).unwrap();
    let ckpt = dir.join("model.json");

    let out = run(&[
        "train",
        "--config",
        config_path.to_str().unwrap(),
        "--out",
        ckpt.to_str().unwrap(),
    ]);
    assert!(out.status.success(), "stderr: {}", stderr(&out));
    assert!(ckpt.exists());
    let loss_csv = dir.join("model.json.loss.csv");
    assert!(loss_csv.exists());
    let loss_text = std::fs::read_to_string(&loss_csv).unwrap();
    assert_eq!(loss_text.lines().count(), 41); // header + one row per epoch
    assert!(loss_text.starts_with("epoch,total,stationarity,complementary_slackness"));

    // Frontier on a 31-point grid with realized errors.
    let frontier_csv = dir.join("frontier.csv");
    let out = run(&[
        "frontier",
        "--checkpoint",
        ckpt.to_str().unwrap(),
        "--grid",
        "31",
        "--csv",
        frontier_csv.to_str().unwrap(),
        "--realized",
        "--threads",
        "2",
    ]);
    assert!(out.status.success(), "stderr: {}", stderr(&out));
    let text = std::fs::read_to_string(&frontier_csv).unwrap();
    assert_eq!(text.lines().count(), 32);
    assert_eq!(
        text.lines().next().unwrap(),
        "w_1,w_2,f_1,f_2,dual,epsilon,epsilon_realized"
    );
    // Realized refinement never exceeds the raw bound.
    for line in text.lines().skip(1) {
        let cols: Vec<f64> = line.split(',').map(|v| v.parse().unwrap()).collect();
        assert!(cols[6] <= cols[5] + 1e-9);
    }

    // Byte-identical on rerun (end-to-end determinism).
    let frontier_csv2 = dir.join("frontier2.csv");
    let out = run(&[
        "frontier",
        "--checkpoint",
        ckpt.to_str().unwrap(),
        "--grid",
        "31",
        "--csv",
        frontier_csv2.to_str().unwrap(),
        "--realized",
        "--threads",
        "1",
    ]);
    assert!(out.status.success());
    assert_eq!(
        std::fs::read(&frontier_csv).unwrap(),
        std::fs::read(&frontier_csv2).unwrap()
    );

    // Baseline over the config's test grid.
    let baseline_csv = dir.join("baseline.csv");
    let out = run(&[
        "baseline",
        "--config",
        config_path.to_str().unwrap(),
        "--csv",
        baseline_csv.to_str().unwrap(),
        "--seed",
        "3",
    ]);
    assert!(out.status.success(), "stderr: {}", stderr(&out));
    let text = std::fs::read_to_string(&baseline_csv).unwrap();
    assert_eq!(text.lines().count(), 22);
    for line in text.lines().skip(1) {
        let eps: f64 = line.split(',').last().unwrap().parse().unwrap();
        assert!(eps >= -1e-8);
    }
}

#[test]
fn train_requires_grid_dimension_match() {
    // --grid on a P = 3 problem is a usage error.
    let dir = temp_dir("griddim");
    let config = r#"{
        "problem": {"name": "test_instance_4", "p": 3, "n": 4},
        "primal_arch": {"hidden_widths": [6], "terminal": {"kind": "projection"}},
        "dual_arch": {"hidden_widths": [6], "terminal": {"kind": "relu"}},
        "train": {"epochs": 5, "k": 4, "sampling": "uniform", "seed": 0}
    }"#;
    let config_path = dir.join("cfg.json");
    std::fs::write(&config_path, config).unwrap();
    let ckpt = dir.join("m.json");
    let out = run(&[
        "train",
        "--config",
        config_path.to_str().unwrap(),
        "--out",
        ckpt.to_str().unwrap(),
    ]);
    assert!(out.status.success(), "stderr: {}", stderr(&out));
    let out = run(&[
        "frontier",
        "--checkpoint",
        ckpt.to_str().unwrap(),
        "--grid",
        "11",
        "--csv",
        dir.join("f.csv").to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(1));
    assert!(stderr(&out).contains("only defined for P = 2"));

    // --samples works for P = 3.
    let out = run(&[
        "frontier",
        "--checkpoint",
        ckpt.to_str().unwrap(),
        "--samples",
        "17",
        "--csv",
        dir.join("f3.csv").to_str().unwrap(),
    ]);
    assert!(out.status.success(), "stderr: {}", stderr(&out));
    let text = std::fs::read_to_string(dir.join("f3.csv")).unwrap();
    assert_eq!(text.lines().count(), 18);
    assert_eq!(text.lines().next().unwrap().split(',').count(), 8);
}

#[test]
fn ingest_returns_builds_problem_file() {
    let dir = temp_dir("ingest");
    let problem_json = dir.join("mv.json");
    let out = run(&[
        "ingest-returns",
        "--prices",
        fixture("prices_10asset.csv").to_str().unwrap(),
        "--out",
        problem_json.to_str().unwrap(),
    ]);
    assert!(out.status.success(), "stderr: {}", stderr(&out));
    let text = std::fs::read_to_string(&problem_json).unwrap();
    assert!(text.contains("mean_variance"));

    // The produced problem file trains end-to-end with a small setup.
    let config = format!(
        r#"{{
        "problem": {},
        "primal_arch": {{"hidden_widths": [16], "terminal": {{"kind": "projection", "pre_relu": true}}}},
        "dual_arch": {{"hidden_widths": [16], "terminal": {{"kind": "softplus"}}}},
        "train": {{"epochs": 20, "k": 5, "sampling": "grid", "seed": 1}},
        "test": {{"grid_size": 11}}
    }}"#,
        text
    );
    let config_path = dir.join("cfg.json");
    std::fs::write(&config_path, config).unwrap();
    let ckpt = dir.join("m.json");
    let out = run(&[
        "train",
        "--config",
        config_path.to_str().unwrap(),
        "--out",
        ckpt.to_str().unwrap(),
    ]);
    assert!(out.status.success(), "stderr: {}", stderr(&out));
}

#[test]
fn ingest_rejects_nonpositive_prices() {
    let dir = temp_dir("ingest-bad");
    let prices = dir.join("bad.csv");
    std::fs::write(&prices, "date,a,b\n1,1.0,1.0\n2,0.0,1.0\n3,1.0,1.0\n").unwrap();
    let out = run(&[
        "ingest-returns",
        "--prices",
        prices.to_str().unwrap(),
        "--out",
        dir.join("out.json").to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(1));
    assert!(stderr(&out).contains("non-positive"));
}
