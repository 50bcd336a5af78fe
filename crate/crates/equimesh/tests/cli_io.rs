//! File formats, determinism, and exit codes of the experiment driver.

use std::fs;
use std::path::PathBuf;
use std::process::Command;

use equimesh::cli::{cmd_solve, cmd_sweep, Method, RunConfig, SweepAxis};
use equimesh::grid::PhysicalMesh;
use equimesh::monitor::{MonitorParams, TestProblem};
use equimesh::quality::q_eq;

fn temp_dir(tag: &str) -> PathBuf {
    let dir = std::env::temp_dir().join(format!("equimesh-test-{}-{tag}", std::process::id()));
    let _ = fs::remove_dir_all(&dir);
    fs::create_dir_all(&dir).unwrap();
    dir
}

fn small_config(method: Method, out: PathBuf) -> RunConfig {
    RunConfig {
        method,
        n_xi: 8,
        p: Some(2.0),
        out_dir: out,
        ..Default::default()
    }
}

#[test]
fn solve_outputs_are_byte_identical_across_runs() {
    let root = temp_dir("determinism");
    let a = small_config(Method::Classical, root.join("a"));
    let b = small_config(Method::Classical, root.join("b"));
    cmd_solve(&a).unwrap();
    cmd_solve(&b).unwrap();
    for file in ["mesh.csv", "history.json", "history.csv", "quality.csv"] {
        let fa = fs::read(root.join("a").join(file)).unwrap();
        let fb = fs::read(root.join("b").join(file)).unwrap();
        assert_eq!(fa, fb, "{file} differs between identical runs");
    }
    let _ = fs::remove_dir_all(&root);
}

#[test]
fn mesh_csv_round_trips_to_the_same_quality() {
    let root = temp_dir("roundtrip");
    let cfg = small_config(Method::Single, root.clone());
    let summary = cmd_solve(&cfg).unwrap();
    let text = fs::read_to_string(&summary.mesh_file).unwrap();
    let mesh = PhysicalMesh::from_csv(&text).unwrap();
    let params = MonitorParams::new(cfg.a, cfg.b).unwrap();
    let problem = TestProblem::by_name(&cfg.problem).unwrap();
    let q = q_eq(&mesh, &params, &problem).unwrap().q_max;
    assert_eq!(q, summary.q_max, "re-read mesh must reproduce q_max exactly");
    let _ = fs::remove_dir_all(&root);
}

#[test]
fn history_files_have_expected_shape() {
    let root = temp_dir("history");
    let cfg = small_config(Method::LinearRobin, root.clone());
    cmd_solve(&cfg).unwrap();
    let json: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(root.join("history.json")).unwrap()).unwrap();
    assert!(json["config"]["n_xi"].is_number());
    let iterations = json["iterations"].as_array().unwrap();
    assert!(!iterations.is_empty());
    for it in iterations {
        assert!(it["n"].is_number());
        assert_eq!(it["err_x"].as_array().unwrap().len(), 2);
        assert_eq!(it["err_y"].as_array().unwrap().len(), 2);
        assert_eq!(it["newton_iters"].as_array().unwrap().len(), 2);
    }
    let csv = fs::read_to_string(root.join("history.csv")).unwrap();
    assert!(csv.starts_with("n,subdomain,err_x,err_y\n"));
    let quality = fs::read_to_string(root.join("quality.csv")).unwrap();
    assert!(quality.starts_with("iteration,method,q_max\n"));
    assert!(quality.contains("\ninf,linear-robin,"));
    assert!(quality.contains("0,linear-robin,"));
    let _ = fs::remove_dir_all(&root);
}

#[test]
fn sweep_records_partial_failures_in_manifest() {
    let root = temp_dir("sweep");
    let cfg = small_config(Method::Classical, root.clone());
    // overlap 7 is infeasible on 8 columns: the second strip would not
    // exceed the overlap width
    let summary = cmd_sweep(&cfg, &SweepAxis::Overlap(vec![2, 7])).unwrap();
    assert_eq!(summary.runs.len(), 2);
    assert_eq!(summary.runs[0].status, "ok");
    assert_eq!(summary.runs[1].status, "error");
    assert!(summary.runs[1].message.as_deref().unwrap_or("").contains("overlap"));
    let manifest: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(summary.manifest_file).unwrap()).unwrap();
    assert_eq!(manifest["runs"].as_array().unwrap().len(), 2);
    assert!(root.join("overlap-2").join("history.json").exists());
    assert!(!root.join("overlap-7").exists());
    assert!(root.join("combined.csv").exists());
    let _ = fs::remove_dir_all(&root);
}

#[test]
fn p_sweep_emits_six_series() {
    let root = temp_dir("psweep");
    let cfg = small_config(Method::LinearRobin, root.clone());
    let axis = SweepAxis::P {
        values: vec![1.0, 2.0, 3.0],
        kinds: vec![Method::LinearRobin, Method::NonlinearRobin],
    };
    let summary = cmd_sweep(&cfg, &axis).unwrap();
    assert_eq!(summary.runs.len(), 6);
    assert!(summary.runs.iter().all(|r| r.status == "ok"));
    let combined = fs::read_to_string(root.join("combined.csv")).unwrap();
    for id in [
        "linear-robin-p1", "linear-robin-p2", "linear-robin-p3",
        "nonlinear-robin-p1", "nonlinear-robin-p2", "nonlinear-robin-p3",
    ] {
        assert!(combined.contains(id), "combined.csv lacks series {id}");
    }
    let _ = fs::remove_dir_all(&root);
}

#[test]
fn binary_exit_codes() {
    let bin = env!("CARGO_BIN_EXE_equimesh");
    let root = temp_dir("bin");

    let ok = Command::new(bin)
        .args(["solve", "--method", "single", "--n", "8"])
        .arg("--out")
        .arg(root.join("ok"))
        .output()
        .unwrap();
    assert_eq!(ok.status.code(), Some(0), "{}", String::from_utf8_lossy(&ok.stderr));

    // missing Robin parameter: configuration error
    let cfg_err = Command::new(bin)
        .args(["solve", "--method", "linear-robin", "--n", "8"])
        .arg("--out")
        .arg(root.join("cfg"))
        .output()
        .unwrap();
    assert_eq!(cfg_err.status.code(), Some(2));

    // infeasible partition
    let part_err = Command::new(bin)
        .args(["solve", "--method", "classical", "--n", "8", "--n-sub", "2", "--overlap", "7"])
        .arg("--out")
        .arg(root.join("part"))
        .output()
        .unwrap();
    assert_eq!(part_err.status.code(), Some(4));
    let _ = fs::remove_dir_all(&root);
}

#[test]
fn config_file_with_flag_override() {
    let bin = env!("CARGO_BIN_EXE_equimesh");
    let root = temp_dir("cfgfile");
    let cfg = RunConfig {
        method: Method::Classical,
        n_xi: 8,
        out_dir: root.join("from-file"),
        ..Default::default()
    };
    let path = root.join("run.json");
    fs::write(&path, serde_json::to_string_pretty(&cfg).unwrap()).unwrap();

    // flag overrides the file's method
    let out = Command::new(bin)
        .arg("solve")
        .arg("--config")
        .arg(&path)
        .args(["--method", "single"])
        .arg("--out")
        .arg(root.join("flag-won"))
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert!(stdout.contains("method single"), "{stdout}");
    assert!(root.join("flag-won").join("mesh.csv").exists());
    assert!(!root.join("flag-won").join("history.json").exists());
    let _ = fs::remove_dir_all(&root);
}
