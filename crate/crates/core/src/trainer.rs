//! The multi-agent DQN loop.
//!
//! Each environment step:
//! 1. evaluate every agent's prediction network at the current state to form
//!    the Q-vector over joint actions;
//! 2. pick a joint action epsilon-greedily around the selector's choice;
//! 3. step the environment and store the transition;
//! 4. once the buffer is ready, sample a batch and build targets
//!    `r_i + gamma * Q_target_i(s', a*)` with `a*` chosen by the selector on the
//!    prediction networks' Q-vector at `s'` (zero bootstrap on terminal steps);
//! 5. take one optimizer step per agent on the mean squared error;
//! 6. every `target_sync` gradient steps copy prediction into target weights.

use std::fmt::Write as _;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

use crate::envs::{Environment, Observation};
use crate::error::{validation, Error, Result};
use crate::gamesolve::{random_joint_action, JointAction, PayoffTensor, SelectorKind};
use crate::neural::{optimizer_step, AdamConfig, DuelingNetwork, OptimizerState, DEFAULT_HIDDEN};
use crate::replay::{ReplayBuffer, Transition, DEFAULT_CAPACITY, DEFAULT_MIN_FILL};

/// Linear decay from `start` to `end` over the first `decay_episodes` episodes.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpsilonSchedule {
    pub start: f64,
    pub end: f64,
    pub decay_episodes: usize,
}

impl EpsilonSchedule {
    /// 1.0 down to 0.05 over the first 60% of `episodes`.
    pub fn standard(episodes: usize) -> Self {
        EpsilonSchedule {
            start: 1.0,
            end: 0.05,
            decay_episodes: episodes * 3 / 5,
        }
    }

    pub fn value(&self, episode: usize) -> f64 {
        if self.decay_episodes == 0 || episode >= self.decay_episodes {
            return self.end;
        }
        let frac = episode as f64 / self.decay_episodes as f64;
        self.start + (self.end - self.start) * frac
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainerConfig {
    pub selector: SelectorKind,
    pub gamma: f64,
    pub episodes: usize,
    pub epsilon: EpsilonSchedule,
    /// Gradient steps between target synchronizations.
    pub target_sync: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub seed: u64,
    pub buffer_capacity: usize,
    pub min_fill: usize,
    pub hidden: Vec<usize>,
}

impl TrainerConfig {
    pub fn new(selector: SelectorKind, gamma: f64, episodes: usize, seed: u64) -> Self {
        TrainerConfig {
            selector,
            gamma,
            episodes,
            epsilon: EpsilonSchedule::standard(episodes),
            target_sync: 200,
            batch_size: 32,
            learning_rate: 1e-3,
            seed,
            buffer_capacity: DEFAULT_CAPACITY,
            min_fill: DEFAULT_MIN_FILL,
            hidden: DEFAULT_HIDDEN.to_vec(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let e = self.epsilon;
        let checks = [
            ((0.0..1.0).contains(&self.gamma), "gamma must lie in [0, 1)"),
            (
                (0.0..=1.0).contains(&e.start) && (0.0..=1.0).contains(&e.end),
                "epsilon must stay within [0, 1]",
            ),
            (self.target_sync >= 1, "target_sync must be at least 1"),
            (self.episodes >= 1, "episodes must be at least 1"),
            (self.batch_size >= 1, "batch_size must be at least 1"),
            (
                self.learning_rate.is_finite() && self.learning_rate > 0.0,
                "learning_rate must be positive",
            ),
            (
                self.buffer_capacity >= 1,
                "buffer_capacity must be at least 1",
            ),
            (
                self.hidden.iter().all(|&h| h >= 1),
                "hidden widths must be positive",
            ),
        ];
        for (ok, msg) in checks {
            if !ok {
                return Err(validation(msg));
            }
        }
        Ok(())
    }

    /// Short stable digest of every field.
    pub fn hash(&self) -> String {
        let digest = Sha256::digest(format!("{self:?}").as_bytes());
        digest.iter().take(8).fold(String::new(), |mut s, b| {
            let _ = write!(s, "{b:02x}");
            s
        })
    }
}

/// Prediction and target networks for every agent.
#[derive(Debug, Clone, PartialEq)]
pub struct AgentNetworks {
    pub prediction: Vec<DuelingNetwork>,
    pub target: Vec<DuelingNetwork>,
}

fn agent_seed(seed: u64, agent: usize) -> u64 {
    seed.wrapping_mul(0x9E37_79B9_7F4A_7C15)
        .wrapping_add(agent as u64 + 1)
}

impl AgentNetworks {
    pub fn new(
        agents: usize,
        state_dim: usize,
        hidden: &[usize],
        joint_actions: usize,
        seed: u64,
    ) -> Result<Self> {
        let mut sizes = vec![state_dim];
        sizes.extend_from_slice(hidden);
        let prediction = (0..agents)
            .map(|i| DuelingNetwork::new(&sizes, joint_actions, agent_seed(seed, i)))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self::from_prediction(prediction))
    }

    /// Targets start as copies of the prediction networks.
    pub fn from_prediction(prediction: Vec<DuelingNetwork>) -> Self {
        let target = prediction.iter().map(|n| n.clone_parameters()).collect();
        AgentNetworks { prediction, target }
    }

    pub fn agents(&self) -> usize {
        self.prediction.len()
    }

    fn stack(
        nets: &[DuelingNetwork],
        action_counts: &[usize],
        state: &[f64],
    ) -> Result<PayoffTensor> {
        let rows = nets
            .iter()
            .map(|n| n.forward(state))
            .collect::<Result<Vec<_>>>()?;
        PayoffTensor::new(action_counts.to_vec(), rows).map_err(|e| match e {
            Error::Validation(m) => Error::Training(format!("network output unusable: {m}")),
            other => other,
        })
    }

    /// Q-vector from the prediction networks.
    pub fn q_vector(&self, action_counts: &[usize], state: &[f64]) -> Result<PayoffTensor> {
        Self::stack(&self.prediction, action_counts, state)
    }

    pub fn target_q_vector(&self, action_counts: &[usize], state: &[f64]) -> Result<PayoffTensor> {
        Self::stack(&self.target, action_counts, state)
    }

    /// Copies every prediction network into its target.
    pub fn sync(&mut self) {
        for (t, p) in self.target.iter_mut().zip(&self.prediction) {
            t.clone_from(p);
        }
    }

    /// Writes `agent_<i>.qnet` (prediction network) for each agent into `dir`.
    pub fn save(&self, dir: &Path) -> std::io::Result<()> {
        for (i, net) in self.prediction.iter().enumerate() {
            net.save(&dir.join(format!("agent_{}.qnet", i + 1)))?;
        }
        Ok(())
    }
}

/// Outcome of one epsilon-greedy choice.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Choice {
    pub action: JointAction,
    pub explored: bool,
    pub fallback: bool,
}

/// With probability `epsilon` a uniformly random joint action, otherwise the
/// selector's choice.
pub fn epsilon_greedy<R: Rng + ?Sized>(
    q: &PayoffTensor,
    epsilon: f64,
    selector: SelectorKind,
    rng: &mut R,
) -> Choice {
    if rng.gen::<f64>() < epsilon {
        Choice {
            action: random_joint_action(q, rng),
            explored: true,
            fallback: false,
        }
    } else {
        let sel = selector.select(q, rng);
        Choice {
            action: sel.action,
            explored: false,
            fallback: sel.fallback,
        }
    }
}

/// Per-agent targets for a batch.
#[derive(Debug, Clone, PartialEq)]
pub struct Targets {
    /// `values[i][k]` is agent `i`'s target for batch item `k`.
    pub values: Vec<Vec<f64>>,
    pub fallbacks: usize,
}

/// Targets `r_i + gamma * Q_target_i(s', a*)`, with `a*` picked from the
/// prediction networks and shared by every agent.
pub fn compute_targets<R: Rng + ?Sized>(
    batch: &[&Transition],
    nets: &AgentNetworks,
    action_counts: &[usize],
    selector: SelectorKind,
    gamma: f64,
    rng: &mut R,
) -> Result<Targets> {
    if batch.is_empty() {
        return Err(validation("target batch is empty"));
    }
    let agents = nets.agents();
    let mut values = vec![Vec::with_capacity(batch.len()); agents];
    let mut fallbacks = 0;
    for t in batch {
        if t.rewards.len() != agents {
            return Err(validation("reward vector length differs from agent count"));
        }
        if t.terminal {
            for (v, r) in values.iter_mut().zip(&t.rewards) {
                v.push(*r);
            }
            continue;
        }
        let q = nets.q_vector(action_counts, &t.next_state)?;
        let sel = selector.select(&q, rng);
        fallbacks += usize::from(sel.fallback);
        let j = q.index_of(&sel.action)?;
        for (i, target_net) in nets.target.iter().enumerate() {
            let boot = target_net.forward(&t.next_state)?[j];
            values[i].push(t.rewards[i] + gamma * boot);
        }
    }
    Ok(Targets { values, fallbacks })
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpisodeRecord {
    pub episode: usize,
    pub returns: Vec<f64>,
    pub total: f64,
    pub epsilon: f64,
    /// Mean training loss over the episode's gradient steps, if any.
    pub mean_loss: Option<f64>,
    pub nash_fallbacks: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunLog {
    pub run_id: usize,
    pub seed: u64,
    pub selector: SelectorKind,
    pub config_hash: String,
    pub agents: usize,
    pub episodes: Vec<EpisodeRecord>,
}

/// One parsed CSV row.
#[derive(Debug, Clone, PartialEq)]
pub struct CsvRow {
    pub run_id: usize,
    pub seed: u64,
    pub record: EpisodeRecord,
}

impl RunLog {
    pub fn csv_columns(agents: usize) -> Vec<String> {
        let mut cols = vec!["run_id".to_string(), "seed".into(), "episode".into()];
        cols.extend((1..=agents).map(|i| format!("return_agent_{i}")));
        cols.extend(["return_total", "epsilon", "mean_loss", "nash_fallbacks"].map(String::from));
        cols
    }

    pub fn csv_header(agents: usize) -> String {
        Self::csv_columns(agents).join(",")
    }

    /// Comma-separated, header row first, newline-terminated rows. Floats use
    /// the shortest representation that parses back exactly.
    pub fn to_csv(&self) -> String {
        let mut w = csv::Writer::from_writer(Vec::new());
        let io = "in-memory csv write cannot fail";
        w.write_record(Self::csv_columns(self.agents)).expect(io);
        for r in &self.episodes {
            let mut row = vec![
                self.run_id.to_string(),
                self.seed.to_string(),
                r.episode.to_string(),
            ];
            row.extend(r.returns.iter().map(f64::to_string));
            row.push(r.total.to_string());
            row.push(r.epsilon.to_string());
            row.push(r.mean_loss.map(|l| l.to_string()).unwrap_or_default());
            row.push(r.nash_fallbacks.to_string());
            w.write_record(&row).expect(io);
        }
        String::from_utf8(w.into_inner().expect(io)).expect("csv output is ascii")
    }

    pub fn parse_csv(text: &str) -> Result<Vec<CsvRow>> {
        let mut reader = csv::Reader::from_reader(text.as_bytes());
        let header = reader
            .headers()
            .map_err(|e| Error::Parse(format!("run log header: {e}")))?
            .clone();
        let cols: Vec<&str> = header.iter().collect();
        let agents = cols
            .len()
            .checked_sub(7)
            .filter(|&n| n >= 1)
            .ok_or_else(|| Error::Parse(format!("run log header has {} columns", cols.len())))?;
        if cols != Self::csv_columns(agents) {
            return Err(Error::Parse(format!(
                "unexpected run log header `{}`",
                cols.join(",")
            )));
        }
        reader
            .records()
            .enumerate()
            .map(|(k, rec)| {
                let f = rec.map_err(|e| Error::Parse(format!("row {}: {e}", k + 1)))?;
                let bad = |c: usize| {
                    Error::Parse(format!("row {} column `{}`: `{}`", k + 1, cols[c], &f[c]))
                };
                let num = |c: usize| f[c].parse::<f64>().map_err(|_| bad(c));
                let int = |c: usize| f[c].parse::<u64>().map_err(|_| bad(c));
                let returns = (0..agents)
                    .map(|i| num(3 + i))
                    .collect::<Result<Vec<_>>>()?;
                let base = 3 + agents;
                let mean_loss = if f[base + 2].is_empty() {
                    None
                } else {
                    Some(num(base + 2)?)
                };
                Ok(CsvRow {
                    run_id: int(0)? as usize,
                    seed: int(1)?,
                    record: EpisodeRecord {
                        episode: int(2)? as usize,
                        returns,
                        total: num(base)?,
                        epsilon: num(base + 1)?,
                        mean_loss,
                        nash_fallbacks: int(base + 3)? as usize,
                    },
                })
            })
            .collect()
    }
}

struct EpisodeState {
    observation: Observation,
    returns: Vec<f64>,
    losses: Vec<f64>,
    fallbacks: usize,
    epsilon: f64,
}

/// Step-level access to one training run.
pub struct Trainer<'e> {
    env: &'e mut dyn Environment,
    config: TrainerConfig,
    action_counts: Vec<usize>,
    nets: AgentNetworks,
    optimizers: Vec<OptimizerState>,
    buffer: ReplayBuffer,
    rng: ChaCha8Rng,
    gradient_steps: u64,
    current: Option<EpisodeState>,
    log: RunLog,
}

impl<'e> Trainer<'e> {
    pub fn new(env: &'e mut dyn Environment, config: TrainerConfig) -> Result<Self> {
        config.validate()?;
        let action_counts = env.action_counts().to_vec();
        let nets = AgentNetworks::new(
            action_counts.len(),
            env.state_dim(),
            &config.hidden,
            env.joint_count(),
            config.seed,
        )?;
        let adam = AdamConfig {
            learning_rate: config.learning_rate,
            ..AdamConfig::default()
        };
        let optimizers = nets
            .prediction
            .iter()
            .map(|n| OptimizerState::for_network(n, adam))
            .collect();
        let min_fill = (config.min_fill > 0).then_some(config.min_fill);
        let buffer = ReplayBuffer::new(config.buffer_capacity, min_fill)?;
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        rng.set_stream(1);
        let log = RunLog {
            run_id: 0,
            seed: config.seed,
            selector: config.selector,
            config_hash: config.hash(),
            agents: action_counts.len(),
            episodes: Vec::with_capacity(config.episodes),
        };
        Ok(Trainer {
            env,
            config,
            action_counts,
            nets,
            optimizers,
            buffer,
            rng,
            gradient_steps: 0,
            current: None,
            log,
        })
    }

    pub fn networks(&self) -> &AgentNetworks {
        &self.nets
    }

    pub fn buffer(&self) -> &ReplayBuffer {
        &self.buffer
    }

    pub fn log(&self) -> &RunLog {
        &self.log
    }

    pub fn gradient_steps(&self) -> u64 {
        self.gradient_steps
    }

    pub fn finished(&self) -> bool {
        self.log.episodes.len() >= self.config.episodes
    }

    /// One environment step plus at most one learning update.
    pub fn step(&mut self) -> Result<()> {
        if self.finished() {
            return Err(Error::Usage("all episodes already completed".into()));
        }
        let episode = self.log.episodes.len();
        let agents = self.action_counts.len();
        let mut ep = match self.current.take() {
            Some(ep) => ep,
            None => EpisodeState {
                observation: self.env.reset(),
                returns: vec![0.0; agents],
                losses: Vec::new(),
                fallbacks: 0,
                epsilon: self.config.epsilon.value(episode),
            },
        };

        let q = self
            .nets
            .q_vector(&self.action_counts, &ep.observation.state)?;
        let choice = epsilon_greedy(&q, ep.epsilon, self.config.selector, &mut self.rng);
        ep.fallbacks += usize::from(choice.fallback);
        let result = self.env.step(&choice.action)?;
        for (acc, r) in ep.returns.iter_mut().zip(&result.rewards) {
            *acc += r;
        }
        self.buffer.push(Transition {
            state: ep.observation.state.clone(),
            next_state: result.observation.state.clone(),
            action: choice.action,
            rewards: result.rewards,
            terminal: result.terminal,
        })?;

        if let Some(loss) = self.learn(episode, &mut ep.fallbacks)? {
            ep.losses.push(loss);
        }

        ep.observation = result.observation;
        if result.terminal {
            let mean_loss = (!ep.losses.is_empty())
                .then(|| ep.losses.iter().sum::<f64>() / ep.losses.len() as f64);
            self.log.episodes.push(EpisodeRecord {
                episode,
                total: ep.returns.iter().sum(),
                returns: ep.returns,
                epsilon: ep.epsilon,
                mean_loss,
                nash_fallbacks: ep.fallbacks,
            });
        } else {
            self.current = Some(ep);
        }
        Ok(())
    }

    fn learn(&mut self, episode: usize, fallbacks: &mut usize) -> Result<Option<f64>> {
        let Some(batch) = self.buffer.sample(self.config.batch_size, &mut self.rng) else {
            return Ok(None);
        };
        let targets = compute_targets(
            &batch,
            &self.nets,
            &self.action_counts,
            self.config.selector,
            self.config.gamma,
            &mut self.rng,
        )?;
        *fallbacks += targets.fallbacks;
        let states: Vec<Vec<f64>> = batch.iter().map(|t| t.state.clone()).collect();
        let joint = PayoffTensor::zeros(self.action_counts.clone())?;
        let actions = batch
            .iter()
            .map(|t| joint.index_of(&t.action))
            .collect::<Result<Vec<_>>>()?;

        let mut loss_sum = 0.0;
        for (i, (net, opt)) in self
            .nets
            .prediction
            .iter_mut()
            .zip(&mut self.optimizers)
            .enumerate()
        {
            let (loss, grads) = net.gradient(&states, &actions, &targets.values[i])?;
            if !loss.is_finite() || !grads.is_finite() {
                return Err(Error::Training(format!(
                    "non-finite loss {loss} for agent {} at episode {episode}, gradient step {}",
                    i + 1,
                    self.gradient_steps + 1
                )));
            }
            optimizer_step(net, &grads, opt)?;
            loss_sum += loss;
        }
        self.gradient_steps += 1;
        if self
            .gradient_steps
            .is_multiple_of(self.config.target_sync as u64)
        {
            self.nets.sync();
        }
        Ok(Some(loss_sum / self.nets.agents() as f64))
    }

    pub fn run(mut self) -> Result<(AgentNetworks, RunLog)> {
        while !self.finished() {
            self.step()?;
        }
        Ok((self.nets, self.log))
    }
}

/// Runs a full training session.
pub fn train(env: &mut dyn Environment, config: TrainerConfig) -> Result<(AgentNetworks, RunLog)> {
    Trainer::new(env, config)?.run()
}

/// Greedy (epsilon 0) joint action at `state`.
pub fn greedy_action<R: Rng + ?Sized>(
    nets: &AgentNetworks,
    action_counts: &[usize],
    state: &[f64],
    selector: SelectorKind,
    rng: &mut R,
) -> Result<JointAction> {
    let q = nets.q_vector(action_counts, state)?;
    Ok(selector.select(&q, rng).action)
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpisodeTrace {
    /// Observed state vectors, starting with the reset observation.
    pub states: Vec<Vec<f64>>,
    pub actions: Vec<JointAction>,
    pub returns: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Evaluation {
    pub mean_returns: Vec<f64>,
    /// First greedy action taken at each distinct visited state, in visit order.
    pub greedy_actions: Vec<(Vec<f64>, JointAction)>,
    pub episodes: Vec<EpisodeTrace>,
}

/// Epsilon-0 rollouts of the prediction networks.
pub fn evaluate_policy<R: Rng + ?Sized>(
    env: &mut dyn Environment,
    nets: &AgentNetworks,
    selector: SelectorKind,
    episodes: usize,
    rng: &mut R,
) -> Result<Evaluation> {
    let counts = env.action_counts().to_vec();
    let agents = counts.len();
    let mut eval = Evaluation {
        mean_returns: vec![0.0; agents],
        greedy_actions: Vec::new(),
        episodes: Vec::with_capacity(episodes),
    };
    for _ in 0..episodes {
        let mut obs = env.reset();
        let mut trace = EpisodeTrace {
            states: vec![obs.state.clone()],
            actions: Vec::new(),
            returns: vec![0.0; agents],
        };
        loop {
            let action = greedy_action(nets, &counts, &obs.state, selector, rng)?;
            if !eval.greedy_actions.iter().any(|(s, _)| *s == obs.state) {
                eval.greedy_actions
                    .push((obs.state.clone(), action.clone()));
            }
            let step = env.step(&action)?;
            for (acc, r) in trace.returns.iter_mut().zip(&step.rewards) {
                *acc += r;
            }
            trace.actions.push(action);
            trace.states.push(step.observation.state.clone());
            obs = step.observation;
            if step.terminal {
                break;
            }
        }
        for (m, r) in eval.mean_returns.iter_mut().zip(&trace.returns) {
            *m += r / episodes as f64;
        }
        eval.episodes.push(trace);
    }
    Ok(eval)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::envs::{table_payoffs, StageGame, LIFT, STAY};

    fn case1_stage() -> StageGame {
        StageGame::new(table_payoffs(8.0, 10.0, [-5.0, -5.0]), 1).unwrap()
    }

    #[test]
    fn epsilon_schedule_is_linear_then_flat() {
        let s = EpsilonSchedule::standard(100);
        assert_eq!(s.decay_episodes, 60);
        assert_eq!(s.value(0), 1.0);
        assert!((s.value(30) - 0.525).abs() < 1e-12);
        assert_eq!(s.value(60), 0.05);
        assert_eq!(s.value(99), 0.05);
    }

    #[test]
    fn config_validation() {
        let base = TrainerConfig::new(SelectorKind::Max, 0.9, 10, 0);
        assert!(base.validate().is_ok());
        assert!(TrainerConfig {
            gamma: 1.0,
            ..base.clone()
        }
        .validate()
        .is_err());
        assert!(TrainerConfig {
            target_sync: 0,
            ..base.clone()
        }
        .validate()
        .is_err());
        assert!(TrainerConfig {
            batch_size: 0,
            ..base.clone()
        }
        .validate()
        .is_err());
        assert!(TrainerConfig {
            episodes: 0,
            ..base.clone()
        }
        .validate()
        .is_err());
        let mut bad = base.clone();
        bad.epsilon.start = 1.5;
        assert!(bad.validate().is_err());
        assert_ne!(
            base.hash(),
            TrainerConfig {
                seed: 1,
                ..base.clone()
            }
            .hash()
        );
        assert_eq!(base.hash(), base.clone().hash());
    }

    #[test]
    fn greedy_choices_follow_selector() {
        let q = table_payoffs(8.0, 10.0, [-5.0, -5.0]);
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let mm = epsilon_greedy(&q, 0.0, SelectorKind::Maximin, &mut rng);
        assert_eq!(mm.action, JointAction::new(vec![LIFT, LIFT]));
        assert!(!mm.explored);
        for _ in 0..100 {
            let a = epsilon_greedy(&q, 0.0, SelectorKind::Nash, &mut rng).action;
            assert!(
                a == JointAction::new(vec![STAY, LIFT]) || a == JointAction::new(vec![LIFT, STAY])
            );
        }
    }

    #[test]
    fn single_episode_bookkeeping() {
        let mut env = case1_stage();
        let mut cfg = TrainerConfig::new(SelectorKind::Max, 0.9, 1, 3);
        cfg.epsilon = EpsilonSchedule {
            start: 1.0,
            end: 1.0,
            decay_episodes: 0,
        };
        let mut trainer = Trainer::new(&mut env, cfg).unwrap();
        trainer.step().unwrap();
        assert!(trainer.finished());
        assert_eq!(trainer.buffer().len(), 1);
        assert_eq!(trainer.log().episodes.len(), 1);
        assert_eq!(trainer.log().episodes[0].mean_loss, None);
        assert!(matches!(trainer.step(), Err(Error::Usage(_))));
    }

    #[test]
    fn terminal_targets_are_rewards() {
        let nets = AgentNetworks::new(2, 1, &[4], 4, 0).unwrap();
        let t = Transition {
            state: vec![1.0],
            next_state: vec![1.0],
            action: JointAction::new(vec![1, 0]),
            rewards: vec![3.0, 8.0],
            terminal: true,
        };
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let out =
            compute_targets(&[&t], &nets, &[2, 2], SelectorKind::Nash, 0.9, &mut rng).unwrap();
        assert_eq!(out.values, vec![vec![3.0], vec![8.0]]);

        let t = Transition {
            terminal: false,
            rewards: vec![8.0, 3.0],
            ..t
        };
        let out = compute_targets(&[&t], &nets, &[2, 2], SelectorKind::Max, 0.0, &mut rng).unwrap();
        assert_eq!(out.values, vec![vec![8.0], vec![3.0]]);
    }

    #[test]
    fn csv_round_trip() {
        let log = RunLog {
            run_id: 2,
            seed: 17,
            selector: SelectorKind::Nash,
            config_hash: "x".into(),
            agents: 2,
            episodes: vec![
                EpisodeRecord {
                    episode: 0,
                    returns: vec![3.0, 8.0],
                    total: 11.0,
                    epsilon: 1.0,
                    mean_loss: None,
                    nash_fallbacks: 0,
                },
                EpisodeRecord {
                    episode: 1,
                    returns: vec![0.1 + 0.2, -1e-300],
                    total: 0.30000000000000004,
                    epsilon: 0.9841666666666666,
                    mean_loss: Some(12.345678901234567),
                    nash_fallbacks: 3,
                },
            ],
        };
        let csv = log.to_csv();
        assert!(csv.starts_with(
            "run_id,seed,episode,return_agent_1,return_agent_2,return_total,epsilon,mean_loss,nash_fallbacks\n"
        ));
        assert!(csv.ends_with('\n'));
        let rows = RunLog::parse_csv(&csv).unwrap();
        assert_eq!(rows.len(), 2);
        for (row, rec) in rows.iter().zip(&log.episodes) {
            assert_eq!(row.run_id, 2);
            assert_eq!(row.seed, 17);
            assert_eq!(&row.record, rec);
        }
        assert!(RunLog::parse_csv("run_id,seed\n").is_err());
        let broken = csv.replace(",3\n", ",x\n");
        let err = RunLog::parse_csv(&broken).unwrap_err().to_string();
        assert!(err.contains("nash_fallbacks"), "{err}");
    }
}
