//! End-to-end runs of the `datastop` binary: output files and exit codes.

use std::path::Path;
use std::process::{Command, Output};

fn datastop(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_datastop"))
        .args(args)
        .output()
        .unwrap()
}

fn path_str(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn simple1_run_writes_csv() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("empty.cfg");
    std::fs::write(&cfg, "").unwrap();
    let out = dir.path().join("res.csv");
    let o = datastop(&[
        "run",
        "--scenario",
        "garch-table1",
        "--seed",
        "3",
        "--config",
        path_str(&cfg),
        "--out",
        path_str(&out),
        "--set",
        "experiment.algorithms=simple1",
        "--set",
        "experiment.repetitions=4",
        "--set",
        "experiment.eval_paths=50",
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let csv = std::fs::read_to_string(&out).unwrap();
    assert!(csv.starts_with("algorithm,repetition,mean_payoff\n"));
    assert!(csv.ends_with("summary\nalgorithm,mean,sd\nsimple1,1.000000,0.000000\n"));
    assert!(String::from_utf8_lossy(&o.stdout).contains("simple1,1.000000,0.000000"));
}

#[test]
fn simulate_then_backtest_custom_data() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("returns.txt");
    let o = datastop(&["simulate", "--seed", "5", "--len", "400", "--out", path_str(&data)]);
    assert!(o.status.success());
    assert_eq!(std::fs::read_to_string(&data).unwrap().lines().count(), 400);

    let cfg = dir.path().join("custom.cfg");
    std::fs::write(
        &cfg,
        format!(
            "experiment.data = {}\nexperiment.train_len = 200\nexperiment.repetitions = 10\nexperiment.algorithms = simple1,simple2,new\n",
            data.display()
        ),
    )
    .unwrap();
    let out = dir.path().join("res.csv");
    let o = datastop(&[
        "run",
        "--scenario",
        "custom-data",
        "--seed",
        "1",
        "--config",
        path_str(&cfg),
        "--out",
        path_str(&out),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let csv = std::fs::read_to_string(&out).unwrap();
    // 3 algorithms x 10 repetitions
    assert_eq!(csv.split("\n\n").next().unwrap().lines().count(), 31);
}

#[test]
fn configuration_errors_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.cfg");
    std::fs::write(&cfg, "experiment.seed = 1\nestimator.bandwidths = 0.1,-2\n").unwrap();
    let out = dir.path().join("res.csv");
    let o = datastop(&[
        "run",
        "--scenario",
        "garch-table1",
        "--seed",
        "1",
        "--config",
        path_str(&cfg),
        "--out",
        path_str(&out),
    ]);
    assert_eq!(o.status.code(), Some(2));
    let err = String::from_utf8_lossy(&o.stderr);
    assert!(err.contains("line 2"), "{err}");
    assert!(!out.exists());

    std::fs::write(&cfg, "").unwrap();
    let o = datastop(&[
        "run",
        "--scenario",
        "garch-table1",
        "--seed",
        "1",
        "--config",
        path_str(&cfg),
        "--out",
        path_str(&out),
        "--set",
        "payoff.nonsense=1",
    ]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn bad_data_exits_3() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("returns.txt");
    std::fs::write(&data, "1.01\n0.99\n-0.5\n").unwrap();
    let cfg = dir.path().join("custom.cfg");
    std::fs::write(&cfg, format!("experiment.data = {}\n", data.display())).unwrap();
    let out = dir.path().join("res.csv");
    let o = datastop(&[
        "run",
        "--scenario",
        "custom-data",
        "--seed",
        "1",
        "--config",
        path_str(&cfg),
        "--out",
        path_str(&out),
    ]);
    assert_eq!(o.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&o.stderr).contains("line 3"));
}

#[test]
fn shipped_configs_build() {
    let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs");
    let mut seen = 0;
    for entry in std::fs::read_dir(dir).unwrap() {
        let path = entry.unwrap().path();
        let text = std::fs::read_to_string(&path).unwrap();
        let file = datastop::config::parse_config(&text).unwrap();
        datastop::config::build_experiment(&file, &[], None, Some(1), None)
            .unwrap_or_else(|e| panic!("{}: {e}", path.display()));
        seen += 1;
    }
    assert!(seen >= 3);
}
