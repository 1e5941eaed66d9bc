use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use qvec::envs::LiftConfig;
use qvec::trainer::RunLog;
use qvec::SelectorKind;
use qvec_cli::config::EnvSpec;
use qvec_cli::parse_config;

fn bundled(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("configs")
        .join(format!("{name}.toml"))
}

fn qvec(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_qvec"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exited normally")
}

fn summary_rows(dir: &Path) -> Vec<csv::StringRecord> {
    let mut r = csv::Reader::from_path(dir.join("summary.csv")).unwrap();
    r.records().map(|x| x.unwrap()).collect()
}

#[test]
fn bundled_configs_parse() {
    let cfg = parse_config(&bundled("case1_maximin")).unwrap();
    assert_eq!(cfg.environment, EnvSpec::Lift(LiftConfig::case1()));
    assert_eq!(cfg.trainer.selector, SelectorKind::Maximin);
    assert_eq!(cfg.repetitions, 6);
    for name in [
        "case1_max",
        "case1_nash",
        "case2_max",
        "case2_nash",
        "case2_maximin",
        "stage_case1",
        "stage_case2",
        "matching_pennies",
    ] {
        parse_config(&bundled(name)).unwrap_or_else(|e| panic!("{name}: {e}"));
    }
}

#[test]
fn maximin_runs_lift_both_arms() {
    let dir = tempfile::tempdir().unwrap();
    let out = qvec(&[
        "run",
        bundled("case1_maximin").to_str().unwrap(),
        "--out",
        dir.path().to_str().unwrap(),
    ]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    for k in 0..6 {
        let text = fs::read_to_string(dir.path().join(format!("run_{k}.csv"))).unwrap();
        let rows = RunLog::parse_csv(&text).unwrap();
        assert_eq!(rows.len(), 300);
        assert!(rows.iter().all(|r| r.run_id == k && r.seed == k as u64));
        assert!(dir
            .path()
            .join(format!("checkpoints/run_{k}/agent_2.qnet"))
            .exists());
    }
    let rows = summary_rows(dir.path());
    assert_eq!(rows.len(), 6);
    let lifted = rows
        .iter()
        .filter(|r| &r[5] == "(1 1)" && &r[7] == "MATCH" && &r[8] == "h=(5 5)")
        .count();
    assert!(lifted >= 5, "{rows:?}");
    let oracle = fs::read_to_string(dir.path().join("oracle_maximin.txt")).unwrap();
    assert!(oracle.starts_with("summary selector=maximin gamma=0.3 "));
    assert!(oracle.contains("converged=true initial_action=(1 1)"));
}

#[test]
fn nash_case2_lifts_left_first() {
    let dir = tempfile::tempdir().unwrap();
    let out = qvec(&[
        "run",
        bundled("case2_nash").to_str().unwrap(),
        "--out",
        dir.path().to_str().unwrap(),
    ]);
    assert_eq!(code(&out), 0);
    let rows = summary_rows(dir.path());
    let left = rows.iter().filter(|r| &r[5] == "(1 0)").count();
    assert!(left >= 5, "{rows:?}");
    // Every recorded action is either in the oracle set or flagged.
    for r in &rows {
        assert!(&r[7] == "MATCH" || &r[7] == "MISMATCH");
        assert_eq!(&r[7] == "MATCH", r[6].contains(&r[5]));
    }
}

#[test]
fn zero_repetitions_only_write_the_oracle() {
    let dir = tempfile::tempdir().unwrap();
    let out = qvec(&[
        "run",
        bundled("stage_case2").to_str().unwrap(),
        "--out",
        dir.path().to_str().unwrap(),
        "--reps",
        "0",
        "--selector",
        "nash",
    ]);
    assert_eq!(code(&out), 0);
    assert!(dir.path().join("oracle_nash.txt").exists());
    assert!(!dir.path().join("run_0.csv").exists());
    assert!(summary_rows(dir.path()).is_empty());
}

#[test]
fn solve_reproduces_tables() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path().to_str().unwrap();
    let out = qvec(&["solve", bundled("case1_max").to_str().unwrap(), "--out", d]);
    assert_eq!(code(&out), 0);
    let set = |sel: &str| {
        let text = fs::read_to_string(dir.path().join(format!("oracle_{sel}.txt"))).unwrap();
        let first = text.lines().next().unwrap().to_string();
        first.split("initial_set=").nth(1).unwrap().to_string()
    };
    assert_eq!(set("max"), "{(0 0)}");
    assert_eq!(set("nash"), "{(0 1);(1 0)}");
    assert_eq!(set("maximin"), "{(1 1)}");

    let out = qvec(&[
        "solve",
        bundled("stage_case2").to_str().unwrap(),
        "--out",
        d,
    ]);
    assert_eq!(code(&out), 0);
    assert_eq!(set("max"), "{(1 0)}");
    assert_eq!(set("nash"), "{(1 0)}");
    assert_eq!(set("maximin"), "{(1 1)}");

    let out = qvec(&["solve", bundled("case2_nash").to_str().unwrap(), "--out", d]);
    assert_eq!(code(&out), 0);
    let rewards = fs::read_to_string(dir.path().join("rewards.txt")).unwrap();
    let tilt = rewards.split("h=(1 0)\n").nth(1).unwrap();
    let block: Vec<&str> = tilt.lines().take(3).collect();
    assert_eq!(block, ["2 2 2", "0 12 8 10", "0 7 4 5"]);
}

#[test]
fn exit_codes_distinguish_failures() {
    let dir = tempfile::tempdir().unwrap();
    let write = |name: &str, text: &str| {
        let p = dir.path().join(name);
        fs::write(&p, text).unwrap();
        p.to_str().unwrap().to_string()
    };
    let base = fs::read_to_string(bundled("case1_maximin")).unwrap();
    let syntax = write("syntax.toml", &format!("surprise = true\n{base}"));
    let constraint = write("constraint.toml", &base.replace("p1 = 8.0", "p1 = 4.0"));

    assert_eq!(code(&qvec(&["run", "/no/such/config.toml"])), 3);
    assert_eq!(code(&qvec(&["run", &syntax])), 4);
    let out = qvec(&["solve", &constraint]);
    assert_eq!(code(&out), 5);
    assert!(String::from_utf8_lossy(&out.stderr).contains("p1 > 5"));
    assert_eq!(code(&qvec(&["run"])), 2);
    assert_eq!(code(&qvec(&["run", &syntax, "--selector", "greedy"])), 2);
}

#[test]
fn nash_without_pure_equilibrium_falls_back() {
    let dir = tempfile::tempdir().unwrap();
    let out = qvec(&[
        "run",
        bundled("matching_pennies").to_str().unwrap(),
        "--out",
        dir.path().to_str().unwrap(),
    ]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let rows = summary_rows(dir.path());
    assert_eq!(rows.len(), 2);
    // Every joint action is maximin here, so greedy play always matches.
    assert!(rows.iter().all(|r| &r[7] == "MATCH"));
    let cols = qvec_cli::experiment::summary_columns(2);
    let fb = cols.iter().position(|c| c == "nash_fallbacks").unwrap();
    assert!(
        rows.iter().all(|r| r[fb].parse::<usize>().unwrap() > 0),
        "{rows:?}"
    );
}

#[test]
fn selftest_passes() {
    let out = qvec(&["selftest"]);
    let text = String::from_utf8_lossy(&out.stdout);
    assert_eq!(code(&out), 0, "{text}");
    assert_eq!(text.lines().filter(|l| l.starts_with("PASS")).count(), 5);
}
