//! Desk-scale environments: a stage game driven directly by a payoff tensor,
//! and a discrete two-arm lift.
//!
//! In the lift, each arm either stays or lifts by one level per step. The
//! per-agent reward is a shared lifting term, a tilt interaction term and the
//! agent's own action cost:
//!
//! - shared: `p1` when exactly one arm gains height, `p2` when both do, else 0.
//!   An arm already at the top level gains nothing.
//! - interaction, when the arms are at different heights before the step: if the
//!   leading arm lifts while the trailing arm stays, the trailing agent loses
//!   `delta`; if the trailing arm lifts while the leader stays, both gain `delta`.
//! - cost: `cost[i]` whenever arm `i` lifts.
//!
//! At level ground the one-step rewards form the familiar 2x2 table
//! `(0,0) (p1, p1+c2) / (p1+c1, p1) (p2+c1, p2+c2)`.

use crate::error::{validation, Error, Result};
use crate::gamesolve::{JointAction, PayoffTensor};

pub const STAY: usize = 0;
pub const LIFT: usize = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct Observation {
    pub state: Vec<f64>,
    pub step: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepResult {
    pub observation: Observation,
    pub rewards: Vec<f64>,
    pub terminal: bool,
}

/// Common reset/step contract used by the trainer and evaluators.
pub trait Environment {
    fn action_counts(&self) -> &[usize];

    fn agents(&self) -> usize {
        self.action_counts().len()
    }

    fn joint_count(&self) -> usize {
        self.action_counts().iter().product()
    }

    fn state_dim(&self) -> usize;

    fn reset(&mut self) -> Observation;

    /// Fails with a usage error once the episode has ended.
    fn step(&mut self, action: &JointAction) -> Result<StepResult>;

    /// Suggested discount for oracle solves and training.
    fn gamma_hint(&self) -> f64;

    /// Full state enumeration, when the environment supports it.
    fn enumerable(&self) -> Option<&dyn EnumerableMdp> {
        None
    }
}

/// One deterministic transition of an enumerable MDP.
#[derive(Debug, Clone, PartialEq)]
pub struct Outcome {
    pub next: usize,
    pub rewards: Vec<f64>,
    pub terminal: bool,
}

/// Deterministic MDP with a finite, indexable state space.
pub trait EnumerableMdp {
    fn action_counts(&self) -> &[usize];

    fn state_count(&self) -> usize;

    fn initial_state(&self) -> usize;

    /// Absorbing goal states have no actions worth valuing; their Q is zero.
    fn is_terminal_state(&self, state: usize) -> bool;

    fn transition(&self, state: usize, action: &JointAction) -> Outcome;

    /// Observation vector seen by the networks in this state.
    fn features(&self, state: usize) -> Vec<f64>;

    fn state_label(&self, state: usize) -> String;

    /// Step cap for rollouts (the episode horizon).
    fn rollout_limit(&self) -> usize;
}

/// The level-ground one-step reward table for the given payoffs and costs.
pub fn table_payoffs(p1: f64, p2: f64, cost: [f64; 2]) -> PayoffTensor {
    let [c1, c2] = cost;
    PayoffTensor::new(
        vec![2, 2],
        vec![
            vec![0.0, p1, p1 + c1, p2 + c1],
            vec![0.0, p1 + c2, p1, p2 + c2],
        ],
    )
    .expect("2x2 table is well formed for finite inputs")
}

/// Checks the orderings the flat-state tables assume; the message names the
/// first violated inequality.
pub fn validate_table(p1: f64, p2: f64, cost: [f64; 2]) -> Result<()> {
    if ![p1, p2, cost[0], cost[1]].iter().all(|v| v.is_finite()) {
        return Err(Error::Constraint("payoff parameters must be finite".into()));
    }
    let checks = [
        (p1 > 5.0, "p1 > 5"),
        (p2 > p1, "p2 > p1"),
        (p1 > p2 - 5.0, "p1 > p2 - 5"),
    ];
    match checks.iter().find(|(ok, _)| !ok) {
        Some((_, rule)) => Err(Error::Constraint(format!(
            "{rule} violated (p1 = {p1}, p2 = {p2})"
        ))),
        None => Ok(()),
    }
}

/// One-shot (or repeated) game with a constant observation.
#[derive(Debug, Clone)]
pub struct StageGame {
    payoffs: PayoffTensor,
    episode_length: usize,
    step: usize,
}

impl StageGame {
    pub fn new(payoffs: PayoffTensor, episode_length: usize) -> Result<Self> {
        if episode_length == 0 {
            return Err(validation("stage game episode length must be at least 1"));
        }
        Ok(StageGame {
            payoffs,
            episode_length,
            step: 0,
        })
    }

    pub fn payoffs(&self) -> &PayoffTensor {
        &self.payoffs
    }

    pub fn episode_length(&self) -> usize {
        self.episode_length
    }

    fn observation(&self) -> Observation {
        Observation {
            state: vec![1.0],
            step: self.step,
        }
    }
}

/// Rewards of a single stage-game step.
pub fn stage_env_step(payoffs: &PayoffTensor, action: &JointAction) -> Result<Vec<f64>> {
    let j = payoffs.index_of(action)?;
    Ok((0..payoffs.agents())
        .map(|i| payoffs.value_at(i, j))
        .collect())
}

impl Environment for StageGame {
    fn action_counts(&self) -> &[usize] {
        self.payoffs.action_counts()
    }

    fn state_dim(&self) -> usize {
        1
    }

    fn reset(&mut self) -> Observation {
        self.step = 0;
        self.observation()
    }

    fn step(&mut self, action: &JointAction) -> Result<StepResult> {
        if self.step >= self.episode_length {
            return Err(Error::Usage("stage game episode already finished".into()));
        }
        let rewards = stage_env_step(&self.payoffs, action)?;
        self.step += 1;
        Ok(StepResult {
            observation: self.observation(),
            rewards,
            terminal: self.step >= self.episode_length,
        })
    }

    fn gamma_hint(&self) -> f64 {
        0.9
    }

    fn enumerable(&self) -> Option<&dyn EnumerableMdp> {
        Some(self)
    }
}

/// A single state. With an episode length of 1 the game is one-shot
/// (terminal); otherwise it is treated as the discounted infinitely repeated
/// game.
impl EnumerableMdp for StageGame {
    fn action_counts(&self) -> &[usize] {
        self.payoffs.action_counts()
    }

    fn state_count(&self) -> usize {
        1
    }

    fn initial_state(&self) -> usize {
        0
    }

    fn is_terminal_state(&self, _state: usize) -> bool {
        false
    }

    fn transition(&self, _state: usize, action: &JointAction) -> Outcome {
        let rewards = stage_env_step(&self.payoffs, action).expect("valid joint action");
        Outcome {
            next: 0,
            rewards,
            terminal: self.episode_length == 1,
        }
    }

    fn features(&self, _state: usize) -> Vec<f64> {
        vec![1.0]
    }

    fn state_label(&self, _state: usize) -> String {
        "stage".into()
    }

    fn rollout_limit(&self) -> usize {
        self.episode_length
    }
}

/// Parameters of the discrete two-arm lift.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LiftConfig {
    /// Top level `H`.
    pub height: usize,
    pub horizon: usize,
    /// Shared reward when exactly one arm gains height.
    pub p1: f64,
    /// Shared reward when both arms gain height.
    pub p2: f64,
    pub cost: [f64; 2],
    pub delta: f64,
    pub gamma_hint: f64,
}

impl LiftConfig {
    /// Balanced costs `(-5, -5)`.
    pub fn case1() -> Self {
        LiftConfig {
            height: 5,
            horizon: 100,
            p1: 8.0,
            p2: 10.0,
            cost: [-5.0, -5.0],
            delta: 4.0,
            gamma_hint: 0.3,
        }
    }

    /// Unbalanced costs `(0, -5)`.
    pub fn case2() -> Self {
        LiftConfig {
            cost: [0.0, -5.0],
            ..Self::case1()
        }
    }

    /// Checks every ordering the reward tables rely on; the message names
    /// the first violated inequality.
    pub fn validate(&self) -> Result<()> {
        let finite = [
            self.p1,
            self.p2,
            self.delta,
            self.cost[0],
            self.cost[1],
            self.gamma_hint,
        ]
        .iter()
        .all(|v| v.is_finite());
        if !finite {
            return Err(Error::Constraint("lift parameters must be finite".into()));
        }
        let (p1, p2, d) = (self.p1, self.p2, self.delta);
        let checks = [
            (self.height >= 1, "H >= 1"),
            (self.horizon >= 1, "horizon >= 1"),
            (p1 > 5.0, "p1 > 5"),
            (p2 > p1, "p2 > p1"),
            (p1 > p2 - 5.0, "p1 > p2 - 5"),
            (p1 - d < p2 - 5.0, "p1 - delta < p2 - 5"),
            (p1 + d > p2, "p1 + delta > p2"),
            ((0.0..1.0).contains(&self.gamma_hint), "0 <= gamma_hint < 1"),
        ];
        for (ok, rule) in checks {
            if !ok {
                return Err(Error::Constraint(format!(
                    "{rule} violated (p1 = {p1}, p2 = {p2}, delta = {d}, H = {}, horizon = {}, gamma_hint = {})",
                    self.height, self.horizon, self.gamma_hint
                )));
            }
        }
        Ok(())
    }

    pub fn state_count(&self) -> usize {
        (self.height + 1) * (self.height + 1)
    }

    pub fn state_index(&self, heights: [usize; 2]) -> usize {
        heights[0] * (self.height + 1) + heights[1]
    }

    pub fn heights_of(&self, index: usize) -> [usize; 2] {
        [index / (self.height + 1), index % (self.height + 1)]
    }

    pub fn features(&self, heights: [usize; 2]) -> Vec<f64> {
        let h = self.height as f64;
        vec![heights[0] as f64 / h, heights[1] as f64 / h]
    }

    /// One-step reward tensor at the given heights.
    pub fn reward_tensor(&self, heights: [usize; 2]) -> Result<PayoffTensor> {
        let mut q = PayoffTensor::zeros(vec![2, 2])?;
        for j in 0..q.joint_count() {
            let (_, r) = lift_env_step(self, heights, &q.joint_action(j))?;
            for (i, v) in r.into_iter().enumerate() {
                q.set_value(i, j, v)?;
            }
        }
        Ok(q)
    }
}

/// Pure lift dynamics: next heights and per-agent rewards.
pub fn lift_env_step(
    cfg: &LiftConfig,
    heights: [usize; 2],
    action: &JointAction,
) -> Result<([usize; 2], Vec<f64>)> {
    if heights.iter().any(|&h| h > cfg.height) {
        return Err(validation(format!(
            "heights {heights:?} exceed the top level {}",
            cfg.height
        )));
    }
    if action.len() != 2 || action.as_slice().iter().any(|&a| a > LIFT) {
        return Err(validation(format!("invalid lift joint action {action}")));
    }
    let lifts = [action.agent(0) == LIFT, action.agent(1) == LIFT];
    let gaining = (0..2)
        .filter(|&i| lifts[i] && heights[i] < cfg.height)
        .count();
    let shared = match gaining {
        0 => 0.0,
        1 => cfg.p1,
        _ => cfg.p2,
    };
    let mut rewards = vec![shared; 2];

    if heights[0] != heights[1] {
        let lead = usize::from(heights[1] > heights[0]);
        let trail = 1 - lead;
        if lifts[lead] && !lifts[trail] {
            rewards[trail] -= cfg.delta;
        } else if lifts[trail] && !lifts[lead] {
            rewards.iter_mut().for_each(|r| *r += cfg.delta);
        }
    }
    for i in 0..2 {
        if lifts[i] {
            rewards[i] += cfg.cost[i];
        }
    }
    let next = [
        (heights[0] + usize::from(lifts[0])).min(cfg.height),
        (heights[1] + usize::from(lifts[1])).min(cfg.height),
    ];
    Ok((next, rewards))
}

#[derive(Debug, Clone)]
pub struct LiftEnv {
    config: LiftConfig,
    heights: [usize; 2],
    step: usize,
    done: bool,
}

impl LiftEnv {
    pub fn new(config: LiftConfig) -> Result<Self> {
        config.validate()?;
        Ok(LiftEnv {
            config,
            heights: [0, 0],
            step: 0,
            done: false,
        })
    }

    pub fn config(&self) -> &LiftConfig {
        &self.config
    }

    pub fn heights(&self) -> [usize; 2] {
        self.heights
    }

    fn observation(&self) -> Observation {
        Observation {
            state: self.config.features(self.heights),
            step: self.step,
        }
    }
}

const LIFT_ACTIONS: [usize; 2] = [2, 2];

impl Environment for LiftEnv {
    fn action_counts(&self) -> &[usize] {
        &LIFT_ACTIONS
    }

    fn state_dim(&self) -> usize {
        2
    }

    fn reset(&mut self) -> Observation {
        self.heights = [0, 0];
        self.step = 0;
        self.done = false;
        self.observation()
    }

    fn step(&mut self, action: &JointAction) -> Result<StepResult> {
        if self.done {
            return Err(Error::Usage(
                "lift episode already finished; reset first".into(),
            ));
        }
        let (next, rewards) = lift_env_step(&self.config, self.heights, action)?;
        self.heights = next;
        self.step += 1;
        let top = self.config.height;
        self.done = next == [top, top] || self.step >= self.config.horizon;
        Ok(StepResult {
            observation: self.observation(),
            rewards,
            terminal: self.done,
        })
    }

    fn gamma_hint(&self) -> f64 {
        self.config.gamma_hint
    }

    fn enumerable(&self) -> Option<&dyn EnumerableMdp> {
        Some(self)
    }
}

/// States are height pairs; the horizon only caps rollouts.
impl EnumerableMdp for LiftEnv {
    fn action_counts(&self) -> &[usize] {
        &LIFT_ACTIONS
    }

    fn state_count(&self) -> usize {
        self.config.state_count()
    }

    fn initial_state(&self) -> usize {
        0
    }

    fn is_terminal_state(&self, state: usize) -> bool {
        let top = self.config.height;
        self.config.heights_of(state) == [top, top]
    }

    fn transition(&self, state: usize, action: &JointAction) -> Outcome {
        let (next, rewards) = lift_env_step(&self.config, self.config.heights_of(state), action)
            .expect("enumerated states and actions are valid");
        let top = self.config.height;
        Outcome {
            next: self.config.state_index(next),
            rewards,
            terminal: next == [top, top],
        }
    }

    fn features(&self, state: usize) -> Vec<f64> {
        self.config.features(self.config.heights_of(state))
    }

    fn state_label(&self, state: usize) -> String {
        let [a, b] = self.config.heights_of(state);
        format!("h=({a} {b})")
    }

    fn rollout_limit(&self) -> usize {
        self.config.horizon
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ja(a: &[usize]) -> JointAction {
        JointAction::new(a.to_vec())
    }

    #[test]
    fn stage_rewards() {
        let c1 = table_payoffs(8.0, 10.0, [-5.0, -5.0]);
        let c2 = table_payoffs(8.0, 10.0, [0.0, -5.0]);
        assert_eq!(
            stage_env_step(&c1, &ja(&[LIFT, STAY])).unwrap(),
            vec![3.0, 8.0]
        );
        assert_eq!(
            stage_env_step(&c2, &ja(&[LIFT, LIFT])).unwrap(),
            vec![10.0, 5.0]
        );
        assert_eq!(
            stage_env_step(&c1, &ja(&[STAY, STAY])).unwrap(),
            vec![0.0, 0.0]
        );
        assert_eq!(
            stage_env_step(&c2, &ja(&[STAY, STAY])).unwrap(),
            vec![0.0, 0.0]
        );
    }

    #[test]
    fn table_parameter_rules() {
        assert!(validate_table(8.0, 10.0, [-5.0, -5.0]).is_ok());
        let msg = |p1, p2| validate_table(p1, p2, [0.0, -5.0]).unwrap_err().to_string();
        assert!(msg(4.0, 10.0).contains("p1 > 5"));
        assert!(msg(8.0, 8.0).contains("p2 > p1"));
        assert!(msg(8.0, 14.0).contains("p1 > p2 - 5"));
        assert!(validate_table(f64::NAN, 10.0, [0.0, 0.0]).is_err());
    }

    #[test]
    fn stage_episode_length() {
        let mut env = StageGame::new(table_payoffs(8.0, 10.0, [-5.0, -5.0]), 2).unwrap();
        let obs = env.reset();
        assert_eq!(obs.state, vec![1.0]);
        assert!(!env.step(&ja(&[0, 0])).unwrap().terminal);
        assert!(env.step(&ja(&[0, 0])).unwrap().terminal);
        assert!(matches!(env.step(&ja(&[0, 0])), Err(Error::Usage(_))));
        assert!(StageGame::new(table_payoffs(8.0, 10.0, [0.0, 0.0]), 0).is_err());
    }

    #[test]
    fn lift_reset() {
        let mut env = LiftEnv::new(LiftConfig::case1()).unwrap();
        let a = env.reset();
        assert_eq!(a.state, vec![0.0, 0.0]);
        assert_eq!(a.step, 0);
        assert_eq!(env.reset(), a);
    }

    #[test]
    fn lift_flat_and_tilted_rewards() {
        let c1 = LiftConfig::case1();
        let c2 = LiftConfig::case2();
        assert_eq!(
            lift_env_step(&c1, [0, 0], &ja(&[LIFT, STAY])).unwrap().1,
            vec![3.0, 8.0]
        );
        assert_eq!(
            lift_env_step(&c2, [1, 0], &ja(&[STAY, LIFT])).unwrap().1,
            vec![12.0, 7.0]
        );
        assert_eq!(
            lift_env_step(&c2, [1, 0], &ja(&[LIFT, STAY])).unwrap().1,
            vec![8.0, 4.0]
        );
        assert_eq!(
            lift_env_step(&c2, [1, 0], &ja(&[LIFT, LIFT])).unwrap().1,
            vec![10.0, 5.0]
        );
        assert_eq!(
            lift_env_step(&c2, [1, 0], &ja(&[STAY, STAY])).unwrap().1,
            vec![0.0, 0.0]
        );
    }

    #[test]
    fn right_leading_tilt_mirrors() {
        let c1 = LiftConfig::case1();
        // right leads: left catching up earns delta for both.
        assert_eq!(
            lift_env_step(&c1, [0, 1], &ja(&[LIFT, STAY])).unwrap().1,
            vec![7.0, 12.0]
        );
        assert_eq!(
            lift_env_step(&c1, [0, 1], &ja(&[STAY, LIFT])).unwrap().1,
            vec![4.0, 3.0]
        );
    }

    #[test]
    fn capped_arm_earns_no_shared_reward() {
        let c1 = LiftConfig::case1();
        let (next, r) = lift_env_step(&c1, [5, 5], &ja(&[LIFT, LIFT])).unwrap();
        assert_eq!(next, [5, 5]);
        assert_eq!(r, vec![-5.0, -5.0]);
        let (next, r) = lift_env_step(&c1, [5, 4], &ja(&[STAY, LIFT])).unwrap();
        assert_eq!(next, [5, 5]);
        assert_eq!(r, vec![8.0 + 4.0, 8.0 + 4.0 - 5.0]);
    }

    #[test]
    fn out_of_range_heights_rejected() {
        let c1 = LiftConfig::case1();
        assert!(matches!(
            lift_env_step(&c1, [6, 0], &ja(&[0, 0])),
            Err(Error::Validation(_))
        ));
        assert!(lift_env_step(&c1, [0, 0], &ja(&[2, 0])).is_err());
    }

    #[test]
    fn terminal_conditions() {
        let mut env = LiftEnv::new(LiftConfig {
            horizon: 3,
            ..LiftConfig::case1()
        })
        .unwrap();
        env.reset();
        assert!(!env.step(&ja(&[0, 0])).unwrap().terminal);
        assert!(!env.step(&ja(&[0, 0])).unwrap().terminal);
        let last = env.step(&ja(&[0, 0])).unwrap();
        assert!(last.terminal);
        assert_eq!(last.observation.step, 3);
        assert!(matches!(env.step(&ja(&[0, 0])), Err(Error::Usage(_))));

        let mut env = LiftEnv::new(LiftConfig::case1()).unwrap();
        env.reset();
        for k in 0..5 {
            let r = env.step(&ja(&[LIFT, LIFT])).unwrap();
            assert_eq!(r.terminal, k == 4);
        }
        assert_eq!(env.heights(), [5, 5]);
    }

    #[test]
    fn validation_names_the_inequality() {
        let msg = |cfg: LiftConfig| cfg.validate().unwrap_err().to_string();
        assert!(msg(LiftConfig {
            p1: 4.0,
            ..LiftConfig::case1()
        })
        .contains("p1 > 5"));
        assert!(msg(LiftConfig {
            p2: 7.0,
            ..LiftConfig::case1()
        })
        .contains("p2 > p1"));
        assert!(msg(LiftConfig {
            p2: 14.0,
            ..LiftConfig::case1()
        })
        .contains("p1 > p2 - 5"));
        assert!(msg(LiftConfig {
            delta: 2.0,
            ..LiftConfig::case1()
        })
        .contains("p1 - delta < p2 - 5"));
        assert!(msg(LiftConfig {
            delta: 2.5,
            p1: 7.0,
            p2: 9.6,
            ..LiftConfig::case1()
        })
        .contains("p1 + delta > p2"));
        assert!(msg(LiftConfig {
            height: 0,
            ..LiftConfig::case1()
        })
        .contains("H >= 1"));
        assert!(LiftConfig::case1().validate().is_ok());
        assert!(LiftConfig::case2().validate().is_ok());
    }

    #[test]
    fn enumeration_matches_stepping() {
        let env = LiftEnv::new(LiftConfig::case2()).unwrap();
        let cfg = *env.config();
        for s in 0..EnumerableMdp::state_count(&env) {
            let h = cfg.heights_of(s);
            assert_eq!(cfg.state_index(h), s);
            for j in 0..4 {
                let a = ja(&[j / 2, j % 2]);
                let out = env.transition(s, &a);
                let (next, r) = lift_env_step(&cfg, h, &a).unwrap();
                assert_eq!(out.next, cfg.state_index(next));
                assert_eq!(out.rewards, r);
            }
        }
    }
}
