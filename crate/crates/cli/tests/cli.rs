use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use tempfile::TempDir;

fn uavfl(args: &[&str], dir: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_uavfl"))
        .args(args)
        .current_dir(dir)
        .env("LOG_LEVEL", "error")
        .output()
        .expect("binary runs")
}

fn write(dir: &Path, name: &str, text: &str) {
    fs::write(dir.join(name), text).unwrap();
}

fn data_rows(csv: &str) -> Vec<&str> {
    csv.lines().skip(1).collect()
}

#[test]
fn default_run_writes_sixty_rows_and_charts() {
    let tmp = TempDir::new().unwrap();
    write(tmp.path(), "empty.toml", "");
    let out = uavfl(&["run", "--config", "empty.toml", "--out", "o"], tmp.path());
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let csv = fs::read_to_string(tmp.path().join("o/metrics.csv")).unwrap();
    assert!(csv.starts_with(
        "round,scheme,avg_loss,loss_uav_2,loss_uav_3,loss_uav_4,loss_uav_5,loss_uav_6,round_latency_s,cumulative_latency_s,status\n"
    ));
    assert_eq!(data_rows(&csv).len(), 60);
    assert!(data_rows(&csv)[59].ends_with(",budget_exhausted"));
    for f in ["loss.svg", "latency.svg"] {
        assert!(fs::read_to_string(tmp.path().join("o").join(f))
            .unwrap()
            .starts_with("<svg"));
    }
    let manifest = fs::read_to_string(tmp.path().join("o/manifest.toml")).unwrap();
    assert!(manifest.contains("master_seed = 1"));
    assert!(manifest.contains("bandwidth_hz = 400000.0"));
}

#[test]
fn same_flags_give_identical_bytes() {
    let tmp = TempDir::new().unwrap();
    write(tmp.path(), "c.toml", "[scheme]\nmax_rounds = 8\n");
    for out in ["a", "b"] {
        let o = uavfl(
            &[
                "run", "--config", "c.toml", "--seed", "9", "--out", out, "--scheme", "fedavg",
            ],
            tmp.path(),
        );
        assert_eq!(o.status.code(), Some(0));
    }
    for f in ["metrics.csv", "loss.svg", "latency.svg"] {
        let a = fs::read(tmp.path().join("a").join(f)).unwrap();
        let b = fs::read(tmp.path().join("b").join(f)).unwrap();
        assert_eq!(a, b, "{f}");
    }
}

#[test]
fn manifest_reproduces_the_run() {
    let tmp = TempDir::new().unwrap();
    write(
        tmp.path(),
        "c.toml",
        "[scheme]\nmax_rounds = 5\n[training]\nlearning_rate = 0.05\n",
    );
    assert_eq!(
        uavfl(&["run", "--config", "c.toml", "--seed", "4", "--out", "a"], tmp.path())
            .status
            .code(),
        Some(0)
    );
    assert_eq!(
        uavfl(&["run", "--config", "a/manifest.toml", "--out", "b"], tmp.path())
            .status
            .code(),
        Some(0)
    );
    for f in ["metrics.csv", "loss.svg", "latency.svg"] {
        assert_eq!(
            fs::read(tmp.path().join("a").join(f)).unwrap(),
            fs::read(tmp.path().join("b").join(f)).unwrap()
        );
    }
}

#[test]
fn server_failure_halts_fedavg_with_exit_3() {
    let tmp = TempDir::new().unwrap();
    write(
        tmp.path(),
        "f.toml",
        "[failures]\nevents = [{ node = 1, start = 10 }]\n",
    );
    let out = uavfl(
        &["run", "--config", "f.toml", "--out", "o", "--scheme", "fedavg"],
        tmp.path(),
    );
    assert_eq!(out.status.code(), Some(3));
    let csv = fs::read_to_string(tmp.path().join("o/metrics.csv")).unwrap();
    assert_eq!(data_rows(&csv).len(), 10);
    assert!(data_rows(&csv)[9].ends_with(",halted"));
    assert!(tmp.path().join("o/manifest.toml").exists());

    let dfl = uavfl(&["run", "--config", "f.toml", "--out", "d"], tmp.path());
    assert_eq!(dfl.status.code(), Some(0));
}

#[test]
fn config_errors_exit_2_with_path_and_line() {
    let tmp = TempDir::new().unwrap();
    write(
        tmp.path(),
        "bad.toml",
        "[scheme]\nseed = 3\n\n[channel]\nbandwidth_hz = -1\n",
    );
    let out = uavfl(&["validate-config", "--config", "bad.toml"], tmp.path());
    assert_eq!(out.status.code(), Some(2));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("channel.bandwidth_hz") && err.contains("line 5"), "{err}");

    write(tmp.path(), "unknown.toml", "[training]\nlearnig_rate = 0.1\n");
    let out = uavfl(&["run", "--config", "unknown.toml", "--out", "o"], tmp.path());
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("learnig_rate"));

    let out = uavfl(&["run", "--config", "missing.toml", "--out", "o"], tmp.path());
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn validate_config_echoes_defaults() {
    let tmp = TempDir::new().unwrap();
    write(tmp.path(), "empty.toml", "");
    let out = uavfl(&["validate-config", "--config", "empty.toml"], tmp.path());
    assert_eq!(out.status.code(), Some(0));
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(text.contains("learning_rate = 0.025"));
    assert!(text.contains("max_rounds = 60"));
}

#[test]
fn compare_writes_summary_and_three_charts() {
    let tmp = TempDir::new().unwrap();
    write(tmp.path(), "c.toml", "[scheme]\nmax_rounds = 12\n");
    let out = uavfl(
        &["compare", "--config", "c.toml", "--seed", "2", "--out", "o"],
        tmp.path(),
    );
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    for f in ["avg_loss.svg", "individual_loss.svg", "latency.svg", "manifest.toml"] {
        assert!(tmp.path().join("o").join(f).exists(), "{f}");
    }
    let csv = fs::read_to_string(tmp.path().join("o/compare.csv")).unwrap();
    let rows = data_rows(&csv);
    assert_eq!(rows.len(), 12);
    let last: Vec<&str> = rows[11].split(',').collect();
    assert_eq!(last.len(), 8);
    let delta: f64 = last[7].parse().unwrap();
    assert!(delta < 0.0, "latency delta {delta}");
    assert!(rows[0].ends_with(",,,"));
}
