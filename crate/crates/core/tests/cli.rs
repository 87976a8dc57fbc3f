use std::fs;
use std::path::{Path, PathBuf};
use std::process::Command;

use contention_lab::cli::main_with_args;
use contention_lab::cli::SweepRow;
use contention_lab::cli::ValidationRow;

fn scenario(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("scenarios").join(name)
}

/// Runs the CLI in-process and returns (exit code, stdout, stderr).
fn cli(args: &[&str]) -> (i32, String, String) {
    let (mut out, mut err) = (Vec::new(), Vec::new());
    let mut argv = vec!["contention-lab"];
    argv.extend_from_slice(args);
    let code = main_with_args(argv, &mut out, &mut err);
    (code, String::from_utf8(out).unwrap(), String::from_utf8(err).unwrap())
}

fn write_scenario(dir: &Path, json: serde_json::Value) -> PathBuf {
    let p = dir.join("scenario.json");
    fs::write(&p, serde_json::to_vec_pretty(&json).unwrap()).unwrap();
    p
}

fn small(d: u64, mpl: u32) -> serde_json::Value {
    serde_json::json!({
        "name": "small",
        "workload": {
            "classes": [{"id": "t", "frequency": 1.0, "k": [4], "step_time_dist": {"kind": "fixed", "mean": 1.0}}],
            "dbrs": [{"id": "db", "D": d}]
        },
        "mode": {"closed": {"mpl": mpl}},
        "horizon": 2000.0,
        "warmup": 200.0,
        "replications": 4,
        "seed": 9
    })
}

fn read_csv<T: serde::de::DeserializeOwned>(p: &Path) -> Vec<T> {
    csv::Reader::from_path(p).unwrap().deserialize().collect::<Result<_, _>>().unwrap()
}

#[test]
fn binary_exit_codes() {
    let bin = env!("CARGO_BIN_EXE_contention-lab");
    let status = |args: &[&str]| Command::new(bin).args(args).output().unwrap().status.code();
    assert_eq!(status(&["solve", "critical"]), Some(0));
    assert_eq!(status(&["solve", "cubic", "--alpha", "0.3"]), Some(2));
    assert_eq!(status(&["solve", "quadratic", "--r", "1", "--a", "0.3"]), Some(2));
    assert_eq!(status(&["analyze", "--scenario", "/nonexistent/x.json"]), Some(1));
    assert_eq!(status(&["frobnicate"]), Some(1));
    assert_eq!(status(&["--help"]), Some(0));
}

#[test]
fn thrashing_scenario_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    let (code, out, _) = cli(&[
        "analyze",
        "--scenario",
        scenario("thrashing.json").to_str().unwrap(),
        "--out",
        dir.path().to_str().unwrap(),
    ]);
    assert_eq!(code, 2, "{out}");
    assert!(dir.path().join("analysis.json").exists());
}

#[test]
fn solve_cubic_values() {
    let (code, out, _) = cli(&["solve", "cubic", "--alpha", "0"]);
    assert_eq!(code, 0);
    let v: serde_json::Value = serde_json::from_str(&out).unwrap();
    assert_eq!(v["beta"].as_f64(), Some(0.0));

    let (code, out, _) = cli(&["solve", "cubic", "--alpha", "0.226"]);
    assert_eq!(code, 0);
    let v: serde_json::Value = serde_json::from_str(&out).unwrap();
    assert!((v["beta"].as_f64().unwrap() - 0.378).abs() <= 0.001, "{out}");
}

#[test]
fn simulate_reruns_are_byte_identical() {
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    let sc = write_scenario(a.path(), small(200, 6));
    for d in [&a, &b] {
        let (code, _, err) =
            cli(&["simulate", "--scenario", sc.to_str().unwrap(), "--out", d.path().to_str().unwrap()]);
        assert_eq!(code, 0, "{err}");
    }
    for f in ["replications.csv", "aggregate.json"] {
        assert_eq!(fs::read(a.path().join(f)).unwrap(), fs::read(b.path().join(f)).unwrap(), "{f}");
    }
    let rows = csv::Reader::from_path(a.path().join("replications.csv")).unwrap().records().count();
    assert_eq!(rows, 4);
}

#[test]
fn seed_override_changes_results() {
    let dir = tempfile::tempdir().unwrap();
    let sc = write_scenario(dir.path(), small(200, 6));
    let agg = |seed: &str| {
        let out = dir.path().join(seed);
        cli(&[
            "simulate",
            "--scenario",
            sc.to_str().unwrap(),
            "--out",
            out.to_str().unwrap(),
            "--seed",
            seed,
            "--replications",
            "2",
        ]);
        fs::read(out.join("aggregate.json")).unwrap()
    };
    assert_ne!(agg("1"), agg("2"));
}

#[test]
fn sweep_single_value_gives_one_row() {
    let dir = tempfile::tempdir().unwrap();
    let sc = write_scenario(dir.path(), small(200, 6));
    let (code, _, err) = cli(&[
        "sweep",
        "--scenario",
        sc.to_str().unwrap(),
        "--out",
        dir.path().to_str().unwrap(),
        "--axis",
        "M",
        "--values",
        "5",
        "--replications",
        "2",
    ]);
    assert_eq!(code, 0, "{err}");
    let rows: Vec<SweepRow> = read_csv(&dir.path().join("sweep.csv"));
    assert_eq!(rows.len(), 1);
    assert_eq!((rows[0].axis.as_str(), rows[0].value.as_str()), ("M", "5"));
}

#[test]
fn sweep_rejects_empty_values() {
    let dir = tempfile::tempdir().unwrap();
    let sc = write_scenario(dir.path(), small(200, 6));
    let (code, _, err) = cli(&[
        "sweep",
        "--scenario",
        sc.to_str().unwrap(),
        "--out",
        dir.path().to_str().unwrap(),
        "--axis",
        "M",
        "--values",
        "",
    ]);
    assert_eq!(code, 1);
    assert!(!err.is_empty());
    assert!(!dir.path().join("sweep.csv").exists());
}

#[test]
fn policy_sweep_has_one_row_per_policy() {
    let dir = tempfile::tempdir().unwrap();
    let sc = write_scenario(dir.path(), small(100, 6));
    let names = "blocking,no_waiting,wait_die,wound_wait,wdl,occ_kill";
    let (code, _, err) = cli(&[
        "sweep",
        "--scenario",
        sc.to_str().unwrap(),
        "--out",
        dir.path().to_str().unwrap(),
        "--axis",
        "policy",
        "--values",
        names,
        "--replications",
        "2",
    ]);
    assert_eq!(code, 0, "{err}");
    let rows: Vec<SweepRow> = read_csv(&dir.path().join("sweep.csv"));
    let got: Vec<&str> = rows.iter().map(|r| r.value.as_str()).collect();
    assert_eq!(got, names.split(',').collect::<Vec<_>>());
    assert!(rows.iter().all(|r| r.axis == "policy" && r.committed > 0));
}

#[test]
fn unknown_policy_in_sweep_is_an_input_error() {
    let dir = tempfile::tempdir().unwrap();
    let sc = write_scenario(dir.path(), small(100, 6));
    let (code, _, _) = cli(&[
        "sweep",
        "--scenario",
        sc.to_str().unwrap(),
        "--out",
        dir.path().to_str().unwrap(),
        "--axis",
        "policy",
        "--values",
        "blocking,nope",
    ]);
    assert_eq!(code, 1);
}

#[test]
fn validate_flags_a_misspecified_database_size() {
    let dir = tempfile::tempdir().unwrap();
    let mut sc = small(1000, 8);
    // The analysis assumes a database four times smaller than simulated.
    sc["analysis"] = serde_json::json!({"assumed_db_size": 250.0});
    let path = write_scenario(dir.path(), sc);
    let (code, out, err) =
        cli(&["validate", "--scenario", path.to_str().unwrap(), "--out", dir.path().to_str().unwrap()]);
    assert_eq!(code, 3, "{out}{err}");
    let rows: Vec<ValidationRow> = read_csv(&dir.path().join("validation.csv"));
    let pc = rows.iter().find(|r| r.quantity == "p_c").unwrap();
    assert!(!pc.pass && pc.rel_error > 0.5, "{pc:?}");
}

#[test]
fn validate_passes_when_the_model_matches() {
    let dir = tempfile::tempdir().unwrap();
    let path = write_scenario(dir.path(), small(1000, 8));
    let (code, out, err) =
        cli(&["validate", "--scenario", path.to_str().unwrap(), "--out", dir.path().to_str().unwrap()]);
    assert_eq!(code, 0, "{out}{err}");
    for f in ["validation.csv", "replications.csv", "aggregate.json", "analysis.json"] {
        assert!(dir.path().join(f).exists(), "{f}");
    }
}

#[test]
fn single_transaction_has_no_contention() {
    let dir = tempfile::tempdir().unwrap();
    let path = write_scenario(dir.path(), small(50, 1));
    let (code, out, err) =
        cli(&["validate", "--scenario", path.to_str().unwrap(), "--out", dir.path().to_str().unwrap()]);
    assert_eq!(code, 0, "{out}{err}");
    let rows: Vec<ValidationRow> = read_csv(&dir.path().join("validation.csv"));
    for q in ["p_c", "beta"] {
        let r = rows.iter().find(|r| r.quantity == q).unwrap();
        assert_eq!((r.analytic, r.simulated), (0.0, 0.0), "{q}");
    }
}
