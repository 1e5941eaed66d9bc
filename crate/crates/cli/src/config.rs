//! TOML experiment configuration.
//!
//! ```toml
//! name = "case1_maximin"
//! repetitions = 6          # default 6
//! seed = 0                 # base seed; run k uses seed + k
//! output = "runs/case1"    # default "runs/<name>"
//!
//! [environment]
//! kind = "lift"            # or "stage"
//! cost = [-5.0, -5.0]
//!
//! [trainer]
//! selector = "maximin"
//! episodes = 300
//! ```
//!
//! Lift keys: `height`, `horizon`, `p1`, `p2`, `delta`, `cost`, `gamma_hint`.
//! Stage keys: `p1`, `p2`, `cost`, `episode_length`, or `payoffs` naming a
//! tensor file relative to the config. Trainer keys: `selector`, `episodes`,
//! `gamma` (defaults to the environment's hint), `batch_size`, `target_sync`,
//! `learning_rate`, `epsilon_start`, `epsilon_end`, `epsilon_decay_episodes`,
//! `buffer_capacity`, `min_fill`, `hidden`, `eval_episodes`.
//! Unknown keys are rejected.

use std::fs;
use std::path::{Path, PathBuf};

use qvec::envs::{table_payoffs, validate_table, Environment, LiftConfig, LiftEnv, StageGame};
use qvec::trainer::{EpsilonSchedule, TrainerConfig};
use qvec::{PayoffTensor, SelectorKind};
use serde::Deserialize;

use crate::error::CliError;

pub const DEFAULT_REPETITIONS: usize = 6;

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct FileConfig {
    name: String,
    repetitions: Option<usize>,
    seed: Option<u64>,
    output: Option<PathBuf>,
    environment: EnvSection,
    trainer: TrainerSection,
}

#[derive(Debug, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
enum EnvSection {
    Stage(StageSection),
    Lift(LiftSection),
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct StageSection {
    p1: Option<f64>,
    p2: Option<f64>,
    cost: Option<[f64; 2]>,
    payoffs: Option<PathBuf>,
    episode_length: Option<usize>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct LiftSection {
    height: Option<usize>,
    horizon: Option<usize>,
    p1: Option<f64>,
    p2: Option<f64>,
    delta: Option<f64>,
    cost: [f64; 2],
    gamma_hint: Option<f64>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct TrainerSection {
    selector: SelectorKind,
    episodes: usize,
    gamma: Option<f64>,
    batch_size: Option<usize>,
    target_sync: Option<usize>,
    learning_rate: Option<f64>,
    epsilon_start: Option<f64>,
    epsilon_end: Option<f64>,
    epsilon_decay_episodes: Option<usize>,
    buffer_capacity: Option<usize>,
    min_fill: Option<usize>,
    hidden: Option<Vec<usize>>,
    eval_episodes: Option<usize>,
}

/// A resolved environment description.
#[derive(Debug, Clone, PartialEq)]
pub enum EnvSpec {
    Stage {
        payoffs: PayoffTensor,
        episode_length: usize,
    },
    Lift(LiftConfig),
}

impl EnvSpec {
    pub fn build(&self) -> Result<Box<dyn Environment + Send>, CliError> {
        Ok(match self {
            EnvSpec::Stage {
                payoffs,
                episode_length,
            } => Box::new(StageGame::new(payoffs.clone(), *episode_length)?),
            EnvSpec::Lift(cfg) => Box::new(LiftEnv::new(*cfg)?),
        })
    }

    pub fn kind(&self) -> &'static str {
        match self {
            EnvSpec::Stage { .. } => "stage",
            EnvSpec::Lift(_) => "lift",
        }
    }
}

/// Fully validated experiment settings.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub name: String,
    pub repetitions: usize,
    pub output: PathBuf,
    pub environment: EnvSpec,
    /// Trainer settings; `trainer.seed` is the base seed.
    pub trainer: TrainerConfig,
    pub eval_episodes: usize,
}

/// Command-line values that replace their config counterparts.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub output: Option<PathBuf>,
    pub seed: Option<u64>,
    pub repetitions: Option<usize>,
    pub selector: Option<SelectorKind>,
}

impl RunConfig {
    pub fn apply(&mut self, o: &Overrides) {
        if let Some(out) = &o.output {
            self.output = out.clone();
        }
        if let Some(seed) = o.seed {
            self.trainer.seed = seed;
        }
        if let Some(reps) = o.repetitions {
            self.repetitions = reps;
        }
        if let Some(sel) = o.selector {
            self.trainer.selector = sel;
        }
    }

    /// Seed of run `k`.
    pub fn run_seed(&self, k: usize) -> u64 {
        self.trainer.seed.wrapping_add(k as u64)
    }
}

pub fn parse_config(path: &Path) -> Result<RunConfig, CliError> {
    let text = match fs::read_to_string(path) {
        Ok(t) => t,
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => {
            return Err(CliError::MissingFile(path.to_path_buf()))
        }
        Err(e) => return Err(CliError::io(format!("reading {}", path.display()), e)),
    };
    let base = path.parent().unwrap_or(Path::new("."));
    parse_config_str(&text, base).map_err(|e| match e {
        CliError::Syntax { message, .. } => CliError::Syntax {
            path: path.to_path_buf(),
            message,
        },
        other => other,
    })
}

/// Parses config text; relative payoff files resolve against `base`.
pub fn parse_config_str(text: &str, base: &Path) -> Result<RunConfig, CliError> {
    let file: FileConfig = toml::from_str(text).map_err(|e| CliError::Syntax {
        path: PathBuf::from("<config>"),
        message: e.to_string(),
    })?;
    if file.name.is_empty() || file.name.contains(['/', '\\']) {
        return Err(CliError::Constraint(
            "name must be non-empty and free of path separators".into(),
        ));
    }
    let environment = resolve_env(file.environment, base)?;
    let hint = environment.build()?.gamma_hint();
    let t = file.trainer;
    let mut trainer = TrainerConfig::new(
        t.selector,
        t.gamma.unwrap_or(hint),
        t.episodes,
        file.seed.unwrap_or(0),
    );
    let defaults = EpsilonSchedule::standard(t.episodes);
    trainer.epsilon = EpsilonSchedule {
        start: t.epsilon_start.unwrap_or(defaults.start),
        end: t.epsilon_end.unwrap_or(defaults.end),
        decay_episodes: t.epsilon_decay_episodes.unwrap_or(defaults.decay_episodes),
    };
    trainer.batch_size = t.batch_size.unwrap_or(trainer.batch_size);
    trainer.target_sync = t.target_sync.unwrap_or(trainer.target_sync);
    trainer.learning_rate = t.learning_rate.unwrap_or(trainer.learning_rate);
    trainer.buffer_capacity = t.buffer_capacity.unwrap_or(trainer.buffer_capacity);
    trainer.min_fill = t.min_fill.unwrap_or(trainer.min_fill);
    if let Some(h) = t.hidden {
        trainer.hidden = h;
    }
    trainer
        .validate()
        .map_err(|e| CliError::Constraint(e.to_string()))?;
    let eval_episodes = t.eval_episodes.unwrap_or(1);
    if eval_episodes == 0 {
        return Err(CliError::Constraint(
            "eval_episodes must be at least 1".into(),
        ));
    }
    Ok(RunConfig {
        output: file
            .output
            .unwrap_or_else(|| PathBuf::from("runs").join(&file.name)),
        name: file.name,
        repetitions: file.repetitions.unwrap_or(DEFAULT_REPETITIONS),
        environment,
        trainer,
        eval_episodes,
    })
}

fn resolve_env(section: EnvSection, base: &Path) -> Result<EnvSpec, CliError> {
    match section {
        EnvSection::Lift(l) => {
            let d = LiftConfig::case1();
            let cfg = LiftConfig {
                height: l.height.unwrap_or(d.height),
                horizon: l.horizon.unwrap_or(d.horizon),
                p1: l.p1.unwrap_or(d.p1),
                p2: l.p2.unwrap_or(d.p2),
                cost: l.cost,
                delta: l.delta.unwrap_or(d.delta),
                gamma_hint: l.gamma_hint.unwrap_or(d.gamma_hint),
            };
            cfg.validate()?;
            Ok(EnvSpec::Lift(cfg))
        }
        EnvSection::Stage(s) => {
            let episode_length = s.episode_length.unwrap_or(1);
            if episode_length == 0 {
                return Err(CliError::Constraint(
                    "episode_length must be at least 1".into(),
                ));
            }
            let payoffs = match (s.payoffs, s.p1, s.p2, s.cost) {
                (Some(file), None, None, None) => {
                    let path = base.join(file);
                    let text = fs::read_to_string(&path).map_err(|e| match e.kind() {
                        std::io::ErrorKind::NotFound => CliError::MissingFile(path.clone()),
                        _ => CliError::io(format!("reading {}", path.display()), e),
                    })?;
                    PayoffTensor::from_text(&text).map_err(|e| CliError::Syntax {
                        path: path.clone(),
                        message: e.to_string(),
                    })?
                }
                (None, p1, p2, Some(cost)) => {
                    let d = LiftConfig::case1();
                    let (p1, p2) = (p1.unwrap_or(d.p1), p2.unwrap_or(d.p2));
                    validate_table(p1, p2, cost)?;
                    table_payoffs(p1, p2, cost)
                }
                _ => {
                    return Err(CliError::Constraint(
                        "stage environment needs either `payoffs` or `cost` (with optional p1, p2), not both"
                            .into(),
                    ))
                }
            };
            Ok(EnvSpec::Stage {
                payoffs,
                episode_length,
            })
        }
    }
}
