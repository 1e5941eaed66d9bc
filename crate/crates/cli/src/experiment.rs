//! Seeded training sweeps and oracle exports.

use std::fs;
use std::path::{Path, PathBuf};

use qvec::envs::LiftConfig;
use qvec::oracle::{format_set, solve_mdp, OracleSolution, DEFAULT_MAX_ITERS, DEFAULT_TOLERANCE};
use qvec::trainer::{evaluate_policy, train, RunLog};
use qvec::{JointAction, PayoffTensor, SelectorKind};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::config::{EnvSpec, RunConfig};
use crate::error::CliError;

/// Greedy behaviour of one finished run.
#[derive(Debug, Clone, PartialEq)]
pub struct RunResult {
    /// First greedy joint action from the reset state.
    pub greedy_action: JointAction,
    pub matches_oracle: bool,
    pub final_state: String,
    pub returns: Vec<f64>,
    pub trajectory: Vec<JointAction>,
    pub nash_fallbacks: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunSummary {
    pub run_id: usize,
    pub seed: u64,
    /// `Err` holds the diagnostic of an aborted run.
    pub outcome: Result<RunResult, String>,
}

#[derive(Debug, Clone)]
pub struct ExperimentReport {
    pub output: PathBuf,
    pub selector: SelectorKind,
    pub oracle: OracleSolution,
    pub runs: Vec<RunSummary>,
}

impl ExperimentReport {
    pub fn matches(&self) -> usize {
        self.runs
            .iter()
            .filter(|r| matches!(&r.outcome, Ok(res) if res.matches_oracle))
            .count()
    }

    /// Fails when every run aborted or the oracle did not converge.
    pub fn status(&self) -> Result<(), CliError> {
        if !self.runs.is_empty() && self.runs.iter().all(|r| r.outcome.is_err()) {
            let first = self.runs[0].outcome.as_ref().unwrap_err();
            return Err(CliError::RunFailure(format!(
                "all runs aborted; first: {first}"
            )));
        }
        if !self.oracle.converged {
            return Err(CliError::NonConvergence(format!(
                "{} after {} sweeps, residual {:e}",
                self.selector, self.oracle.iterations, self.oracle.residual
            )));
        }
        Ok(())
    }
}

fn write(path: &Path, contents: &str) -> Result<(), CliError> {
    fs::write(path, contents).map_err(|e| CliError::io(format!("writing {}", path.display()), e))
}

fn create_dir(path: &Path) -> Result<(), CliError> {
    fs::create_dir_all(path).map_err(|e| CliError::io(format!("creating {}", path.display()), e))
}

fn oracle_for(cfg: &RunConfig, selector: SelectorKind) -> Result<OracleSolution, CliError> {
    let env = cfg.environment.build()?;
    Ok(solve_mdp(
        env.as_ref(),
        selector,
        cfg.trainer.gamma,
        DEFAULT_TOLERANCE,
        DEFAULT_MAX_ITERS,
    )?)
}

fn describe_state(spec: &EnvSpec, state: &[f64]) -> String {
    match spec {
        EnvSpec::Lift(LiftConfig { height, .. }) => {
            let h: Vec<String> = state
                .iter()
                .map(|f| ((f * *height as f64).round() as usize).to_string())
                .collect();
            format!("h=({})", h.join(" "))
        }
        EnvSpec::Stage { .. } => "stage".into(),
    }
}

fn single_run(
    cfg: &RunConfig,
    k: usize,
    oracle: &OracleSolution,
) -> Result<(RunResult, RunLog), String> {
    let seed = cfg.run_seed(k);
    let mut env = cfg.environment.build().map_err(|e| e.to_string())?;
    let mut tc = cfg.trainer.clone();
    tc.seed = seed;
    let (nets, mut log) = train(env.as_mut(), tc).map_err(|e| e.to_string())?;
    log.run_id = k;
    let ckpt = cfg.output.join("checkpoints").join(format!("run_{k}"));
    fs::create_dir_all(&ckpt)
        .and_then(|_| nets.save(&ckpt))
        .map_err(|e| format!("saving checkpoints: {e}"))?;

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let eval = evaluate_policy(
        env.as_mut(),
        &nets,
        cfg.trainer.selector,
        cfg.eval_episodes,
        &mut rng,
    )
    .map_err(|e| e.to_string())?;
    let first = &eval.episodes[0];
    let greedy_action = first.actions[0].clone();
    let result = RunResult {
        matches_oracle: oracle.initial().optimal.contains(&greedy_action),
        greedy_action,
        final_state: describe_state(
            &cfg.environment,
            first.states.last().expect("trace has a start state"),
        ),
        returns: eval.mean_returns,
        trajectory: first.actions.clone(),
        nash_fallbacks: log.episodes.iter().map(|r| r.nash_fallbacks).sum(),
    };
    Ok((result, log))
}

/// Trains `cfg.repetitions` seeded runs, writing `run_<k>.csv` for each, the
/// oracle solution and `summary.csv` into `cfg.output`.
pub fn run_experiment(cfg: &RunConfig) -> Result<ExperimentReport, CliError> {
    create_dir(&cfg.output)?;
    let selector = cfg.trainer.selector;
    let oracle = oracle_for(cfg, selector)?;
    write(
        &cfg.output.join(format!("oracle_{selector}.txt")),
        &oracle.to_text(),
    )?;

    let runs: Vec<RunSummary> = (0..cfg.repetitions)
        .into_par_iter()
        .map(|k| {
            let outcome = single_run(cfg, k, &oracle).and_then(|(res, log)| {
                fs::write(cfg.output.join(format!("run_{k}.csv")), log.to_csv())
                    .map_err(|e| format!("writing run log: {e}"))?;
                Ok(res)
            });
            RunSummary {
                run_id: k,
                seed: cfg.run_seed(k),
                outcome,
            }
        })
        .collect();

    let report = ExperimentReport {
        output: cfg.output.clone(),
        selector,
        oracle,
        runs,
    };
    let agents = cfg.environment.build()?.action_counts().len();
    write(
        &cfg.output.join("summary.csv"),
        &summary_csv(cfg, &report, agents),
    )?;
    Ok(report)
}

pub fn summary_columns(agents: usize) -> Vec<String> {
    let mut cols: Vec<String> = [
        "run_id",
        "seed",
        "selector",
        "config_hash",
        "status",
        "greedy_action",
        "oracle_set",
        "match",
        "final_state",
    ]
    .map(String::from)
    .to_vec();
    cols.extend((1..=agents).map(|i| format!("return_agent_{i}")));
    cols.extend(["return_total", "nash_fallbacks", "trajectory", "diagnostic"].map(String::from));
    cols
}

fn summary_csv(cfg: &RunConfig, report: &ExperimentReport, agents: usize) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    let io = "in-memory csv write cannot fail";
    w.write_record(summary_columns(agents)).expect(io);
    let set = format_set(&report.oracle.initial().optimal);
    let mut tc = cfg.trainer.clone();
    for run in &report.runs {
        tc.seed = run.seed;
        let mut row = vec![
            run.run_id.to_string(),
            run.seed.to_string(),
            report.selector.to_string(),
            tc.hash(),
        ];
        match &run.outcome {
            Ok(r) => {
                row.extend([
                    "ok".to_string(),
                    r.greedy_action.to_string(),
                    set.clone(),
                    if r.matches_oracle {
                        "MATCH"
                    } else {
                        "MISMATCH"
                    }
                    .to_string(),
                    r.final_state.clone(),
                ]);
                row.extend(r.returns.iter().map(f64::to_string));
                row.push(r.returns.iter().sum::<f64>().to_string());
                row.push(r.nash_fallbacks.to_string());
                row.push(r.trajectory.iter().map(|a| a.to_string()).collect());
                row.push(String::new());
            }
            Err(diag) => {
                row.extend([
                    "aborted".to_string(),
                    String::new(),
                    set.clone(),
                    "MISMATCH".into(),
                    String::new(),
                ]);
                row.extend((0..agents + 3).map(|_| String::new()));
                row.push(diag.clone());
            }
        }
        w.write_record(&row).expect(io);
    }
    String::from_utf8(w.into_inner().expect(io)).expect("csv output is utf-8")
}

#[derive(Debug, Clone)]
pub struct SolveReport {
    pub output: PathBuf,
    pub solutions: Vec<OracleSolution>,
}

/// Writes `oracle_<selector>.txt` for every selector plus `rewards.txt` with
/// the immediate reward tensor of each state.
pub fn solve_command(cfg: &RunConfig) -> Result<SolveReport, CliError> {
    create_dir(&cfg.output)?;
    let env = cfg.environment.build()?;
    let mdp = env
        .enumerable()
        .ok_or_else(|| CliError::RunFailure("environment cannot be enumerated".into()))?;
    let mut text = String::new();
    for k in (0..mdp.state_count()).filter(|&k| !mdp.is_terminal_state(k)) {
        let mut q = PayoffTensor::zeros(mdp.action_counts().to_vec())?;
        for j in 0..q.joint_count() {
            let out = mdp.transition(k, &q.joint_action(j));
            for (i, r) in out.rewards.into_iter().enumerate() {
                q.set_value(i, j, r)?;
            }
        }
        text.push_str(&format!("state {k} {}\n", mdp.state_label(k)));
        text.push_str(&q.to_text());
    }
    write(&cfg.output.join("rewards.txt"), &text)?;

    let mut solutions = Vec::new();
    for selector in SelectorKind::ALL {
        let sol = oracle_for(cfg, selector)?;
        write(
            &cfg.output.join(format!("oracle_{selector}.txt")),
            &sol.to_text(),
        )?;
        solutions.push(sol);
    }
    let stuck: Vec<String> = solutions
        .iter()
        .filter(|s| !s.converged)
        .map(|s| format!("{} (residual {:e})", s.selector, s.residual))
        .collect();
    if !stuck.is_empty() {
        return Err(CliError::NonConvergence(stuck.join(", ")));
    }
    Ok(SolveReport {
        output: cfg.output.clone(),
        solutions,
    })
}
