use std::path::Path;
use std::process::{Command, Output};

fn bam(args: &[&str], cwd: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_bam")).args(args).current_dir(cwd).output().expect("spawn bam")
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

const SMALL_INFER: &str = "seeds = [0, 1]\n[infer]\nsteps = 30\n";

#[test]
fn infer_writes_records_summary_and_config() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("cfg.toml"), SMALL_INFER).unwrap();
    let o = bam(&["infer", "--config", "cfg.toml", "--seed", "5", "--out", "out"], dir.path());
    assert!(o.status.success(), "{}", stderr(&o));
    let out = dir.path().join("out");
    let csv = std::fs::read_to_string(out.join("records.csv")).unwrap();
    let mut lines = csv.lines();
    assert_eq!(lines.next().unwrap(), "method,seed,t,theta,mean,log_variance,mixture_mean,changepoint,selected");
    // Five default learners, two seeds, thirty steps.
    assert_eq!(lines.count(), 5 * 2 * 30);
    let summary: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(out.join("records_summary.json")).unwrap()).unwrap();
    assert_eq!(summary["experiment"], "infer");
    let cfg = std::fs::read_to_string(out.join("config.toml")).unwrap();
    assert!(cfg.contains("steps = 30"));

    let stdout = String::from_utf8(o.stdout).unwrap();
    assert_eq!(stdout.lines().count(), 3);
}

#[test]
fn same_seed_gives_identical_files_and_resolved_config_reruns() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("cfg.toml"), SMALL_INFER).unwrap();
    for out in ["a", "b"] {
        let o = bam(&["infer", "--config", "cfg.toml", "--seed", "3", "--out", out], dir.path());
        assert!(o.status.success(), "{}", stderr(&o));
    }
    let o = bam(&["infer", "--config", "a/config.toml", "--seed", "3", "--out", "c"], dir.path());
    assert!(o.status.success(), "{}", stderr(&o));
    for name in ["records.csv", "records_summary.json", "config.toml"] {
        let a = std::fs::read(dir.path().join("a").join(name)).unwrap();
        assert_eq!(a, std::fs::read(dir.path().join("b").join(name)).unwrap(), "{name}");
        assert_eq!(a, std::fs::read(dir.path().join("c").join(name)).unwrap(), "{name}");
    }
    let o = bam(&["infer", "--config", "cfg.toml", "--seed", "4", "--out", "d"], dir.path());
    assert!(o.status.success());
    assert_ne!(
        std::fs::read(dir.path().join("a/records.csv")).unwrap(),
        std::fs::read(dir.path().join("d/records.csv")).unwrap()
    );
}

#[test]
fn bandit_small_run() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("cfg.toml"), "[bandit]\nhorizon = 50\nconfigs = 1\narms = [4]\n").unwrap();
    let o = bam(&["bandit", "--config", "cfg.toml", "--seeds", "0,1", "--out", "out"], dir.path());
    assert!(o.status.success(), "{}", stderr(&o));
    let csv = std::fs::read_to_string(dir.path().join("out/records.csv")).unwrap();
    assert_eq!(csv.lines().next().unwrap(), "arms,config_id,seed,t,agent,regret");
    // Five agents.
    assert_eq!(csv.lines().count() - 1, 5 * 2 * 50);
}

#[test]
fn unknown_key_is_reported_by_name() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("cfg.toml"), "[bandit]\nhorizn = 50\n").unwrap();
    let o = bam(&["bandit", "--config", "cfg.toml", "--out", "out"], dir.path());
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("bandit.horizn"), "{}", stderr(&o));
    assert!(!dir.path().join("out").exists());
}

#[test]
fn invalid_value_is_reported_by_name() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("cfg.toml"), "[infer]\namplitude = 0.9\n").unwrap();
    let o = bam(&["infer", "--config", "cfg.toml"], dir.path());
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("infer.amplitude"), "{}", stderr(&o));
}

#[test]
fn missing_config_file_fails() {
    let dir = tempfile::tempdir().unwrap();
    let o = bam(&["infer", "--config", "nope.toml"], dir.path());
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("nope.toml"));
}

#[test]
fn empty_seed_list_fails() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("cfg.toml"), "seeds = []\n").unwrap();
    let o = bam(&["infer", "--config", "cfg.toml"], dir.path());
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("seeds"));
}

#[test]
fn unknown_experiment_is_a_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    let o = bam(&["cartpole"], dir.path());
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn mnist_without_data_fails_with_diagnostic() {
    let dir = tempfile::tempdir().unwrap();
    let o = bam(&["mnist", "--data-dir", "missing", "--seeds", "0", "--out", "out"], dir.path());
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("mnist failed"), "{}", stderr(&o));
}

#[test]
fn print_config_matches_profile() {
    let dir = tempfile::tempdir().unwrap();
    let o = bam(&["bandit", "--profile", "full", "--print-config"], dir.path());
    assert!(o.status.success());
    let text = String::from_utf8(o.stdout).unwrap();
    assert!(text.contains("profile = \"full\""));
    assert!(text.contains("horizon = 10000"));
}
