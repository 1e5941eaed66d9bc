//! Exact selector-driven value iteration on enumerable deterministic MDPs.
//!
//! Each sweep applies
//! `Q_i(s, a) <- r_i(s, a) + gamma * Q_i(s', a*(s'))`, where `a*(s')` is the
//! selector applied to the previous sweep's tensor at `s'` with lowest-index
//! tie-breaking, so the fixed point is well defined.

use std::fmt::Write as _;

use crate::envs::{EnumerableMdp, Environment};
use crate::error::{validation, Error, Result};
use crate::gamesolve::{enumerate_nash, JointAction, LowestIndex, PayoffTensor, SelectorKind};

pub const DEFAULT_TOLERANCE: f64 = 1e-6;
pub const DEFAULT_MAX_ITERS: usize = 10_000;
pub const DEFAULT_GAMMA: f64 = 0.9;

#[derive(Debug, Clone, PartialEq)]
pub struct StateSolution {
    pub label: String,
    pub q: PayoffTensor,
    /// Every joint action the selector may return here under some tie-break.
    pub optimal: Vec<JointAction>,
    /// The lowest-index selection used by the fixed point and rollouts.
    pub action: JointAction,
    pub terminal: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct OracleSolution {
    pub selector: SelectorKind,
    pub gamma: f64,
    pub states: Vec<StateSolution>,
    pub initial_state: usize,
    pub iterations: usize,
    pub residual: f64,
    pub converged: bool,
    pub residual_history: Vec<f64>,
    /// Whether the residual never increased after the first sweep.
    pub monotone: bool,
    /// Non-terminal states whose converged tensor has no pure Nash action.
    pub nash_empty_states: Vec<usize>,
    /// Nash-to-maximin fallbacks taken while iterating.
    pub fallback_events: usize,
}

impl OracleSolution {
    pub fn initial(&self) -> &StateSolution {
        &self.states[self.initial_state]
    }

    /// Summary line followed by one labelled tensor block per state.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let init = self.initial();
        let _ = writeln!(
            s,
            "summary selector={} gamma={} iterations={} residual={:e} converged={} initial_action={} initial_set={}",
            self.selector,
            self.gamma,
            self.iterations,
            self.residual,
            self.converged,
            init.action,
            format_set(&init.optimal)
        );
        for (k, st) in self.states.iter().enumerate() {
            let _ = writeln!(
                s,
                "state {k} {} action={} set={}",
                st.label,
                st.action,
                format_set(&st.optimal)
            );
            s.push_str(&st.q.to_text());
        }
        s
    }
}

pub fn format_set(set: &[JointAction]) -> String {
    let items: Vec<String> = set.iter().map(|a| a.to_string()).collect();
    format!("{{{}}}", items.join(";"))
}

/// Solves `env` for `selector`. Fails with `Unsupported` when the environment
/// cannot enumerate its states.
pub fn solve_mdp(
    env: &dyn Environment,
    selector: SelectorKind,
    gamma: f64,
    tolerance: f64,
    max_iters: usize,
) -> Result<OracleSolution> {
    let mdp = env
        .enumerable()
        .ok_or_else(|| Error::Unsupported("environment does not expose its state space".into()))?;
    solve_enumerable(mdp, selector, gamma, tolerance, max_iters)
}

pub fn solve_enumerable(
    mdp: &dyn EnumerableMdp,
    selector: SelectorKind,
    gamma: f64,
    tolerance: f64,
    max_iters: usize,
) -> Result<OracleSolution> {
    if !(0.0..1.0).contains(&gamma) {
        return Err(validation(format!("gamma must lie in [0, 1), got {gamma}")));
    }
    if tolerance.is_nan() || tolerance <= 0.0 || max_iters == 0 {
        return Err(validation(
            "tolerance must be positive and max_iters at least 1",
        ));
    }
    let counts = mdp.action_counts().to_vec();
    let zero = PayoffTensor::zeros(counts.clone())?;
    let n_states = mdp.state_count();
    let agents = counts.len();
    let terminal: Vec<bool> = (0..n_states).map(|s| mdp.is_terminal_state(s)).collect();
    let transitions: Vec<Vec<_>> = (0..n_states)
        .map(|s| {
            zero.joint_actions()
                .map(|a| mdp.transition(s, &a))
                .collect()
        })
        .collect();

    let mut q = vec![zero.clone(); n_states];
    let mut history = Vec::new();
    let mut fallback_events = 0;
    let mut converged = false;

    for _ in 0..max_iters {
        let mut chosen = Vec::with_capacity(n_states);
        for qs in &q {
            let sel = selector.select(qs, &mut LowestIndex);
            fallback_events += usize::from(sel.fallback);
            chosen.push(qs.index_of(&sel.action)?);
        }
        let mut next_q = q.clone();
        let mut residual: f64 = 0.0;
        for s in 0..n_states {
            if terminal[s] {
                continue;
            }
            for (j, out) in transitions[s].iter().enumerate() {
                for i in 0..agents {
                    let boot = if out.terminal {
                        0.0
                    } else {
                        gamma * q[out.next].value_at(i, chosen[out.next])
                    };
                    let v = out.rewards[i] + boot;
                    residual = residual.max((v - q[s].value_at(i, j)).abs());
                    next_q[s].set_value(i, j, v)?;
                }
            }
        }
        q = next_q;
        history.push(residual);
        if residual < tolerance {
            converged = true;
            break;
        }
    }

    let monotone = history.windows(2).skip(1).all(|w| w[1] <= w[0]);
    let mut nash_empty_states = Vec::new();
    let states = q
        .into_iter()
        .enumerate()
        .map(|(s, qs)| {
            if selector == SelectorKind::Nash && !terminal[s] && enumerate_nash(&qs).is_empty() {
                nash_empty_states.push(s);
            }
            StateSolution {
                label: mdp.state_label(s),
                optimal: selector.optimal_set(&qs),
                action: selector.select(&qs, &mut LowestIndex).action,
                terminal: terminal[s],
                q: qs,
            }
        })
        .collect();

    Ok(OracleSolution {
        selector,
        gamma,
        states,
        initial_state: mdp.initial_state(),
        iterations: history.len(),
        residual: history.last().copied().unwrap_or(f64::INFINITY),
        converged,
        residual_history: history,
        monotone,
        nash_empty_states,
        fallback_events,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct Rollout {
    pub states: Vec<usize>,
    pub actions: Vec<JointAction>,
    pub rewards: Vec<Vec<f64>>,
    pub undiscounted: Vec<f64>,
    pub discounted: Vec<f64>,
    pub reached_terminal: bool,
}

impl Rollout {
    pub fn final_state(&self) -> usize {
        *self.states.last().expect("rollout holds the start state")
    }
}

/// Follows the oracle's per-state actions from the initial state.
pub fn greedy_rollout(mdp: &dyn EnumerableMdp, solution: &OracleSolution) -> Rollout {
    let agents = mdp.action_counts().len();
    let mut state = mdp.initial_state();
    let mut out = Rollout {
        states: vec![state],
        actions: Vec::new(),
        rewards: Vec::new(),
        undiscounted: vec![0.0; agents],
        discounted: vec![0.0; agents],
        reached_terminal: false,
    };
    let mut discount = 1.0;
    for _ in 0..mdp.rollout_limit() {
        if mdp.is_terminal_state(state) {
            out.reached_terminal = true;
            break;
        }
        let action = solution.states[state].action.clone();
        let step = mdp.transition(state, &action);
        for i in 0..agents {
            out.undiscounted[i] += step.rewards[i];
            out.discounted[i] += discount * step.rewards[i];
        }
        discount *= solution.gamma;
        state = step.next;
        out.states.push(state);
        out.actions.push(action);
        out.rewards.push(step.rewards);
        if step.terminal {
            out.reached_terminal = true;
            break;
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::envs::{table_payoffs, LiftConfig, LiftEnv, StageGame, LIFT, STAY};

    fn ja(a: &[usize]) -> JointAction {
        JointAction::new(a.to_vec())
    }

    #[test]
    fn one_shot_stage_game_equals_payoffs() {
        let payoffs = table_payoffs(8.0, 10.0, [-5.0, -5.0]);
        let env = StageGame::new(payoffs.clone(), 1).unwrap();
        for sel in SelectorKind::ALL {
            let sol = solve_mdp(&env, sel, 0.9, 1e-6, 100).unwrap();
            assert!(sol.converged);
            assert_eq!(sol.states[0].q, payoffs);
        }
    }

    #[test]
    fn repeated_stage_game_is_geometric() {
        // Closed form: stationary action repeated forever, value r / (1 - gamma).
        let payoffs = table_payoffs(8.0, 10.0, [-5.0, -5.0]);
        let env = StageGame::new(payoffs.clone(), 100).unwrap();
        let gamma = 0.9;
        let sol = solve_mdp(&env, SelectorKind::Max, gamma, 1e-9, 10_000).unwrap();
        assert!(sol.converged);
        let st = &sol.states[0];
        assert_eq!(st.action, ja(&[STAY, STAY]));
        let fixed = payoffs.index_of(&st.action).unwrap();
        for i in 0..2 {
            let expected = payoffs.value_at(i, fixed) / (1.0 - gamma);
            assert!((st.q.value_at(i, fixed) - expected).abs() < 1e-7);
            // Every other entry is its immediate reward plus the discounted stationary value.
            for j in 0..4 {
                let e = payoffs.value_at(i, j) + gamma * expected;
                assert!((st.q.value_at(i, j) - e).abs() < 1e-7);
            }
        }
    }

    #[test]
    fn repeated_maximin_stage_game() {
        let payoffs = table_payoffs(8.0, 10.0, [-5.0, -5.0]);
        let env = StageGame::new(payoffs, 10).unwrap();
        let sol = solve_mdp(&env, SelectorKind::Maximin, 0.9, 1e-9, 10_000).unwrap();
        assert_eq!(sol.states[0].action, ja(&[LIFT, LIFT]));
        assert!((sol.states[0].q.value_at(0, 3) - 50.0).abs() < 1e-6);
    }

    #[test]
    fn gamma_zero_gives_immediate_rewards() {
        let env = LiftEnv::new(LiftConfig::case1()).unwrap();
        let cfg = *env.config();
        let sol = solve_mdp(&env, SelectorKind::Nash, 0.0, 1e-6, 100).unwrap();
        assert!(sol.converged);
        for (s, st) in sol.states.iter().enumerate() {
            if st.terminal {
                continue;
            }
            let r = cfg.reward_tensor(cfg.heights_of(s)).unwrap();
            assert_eq!(st.q, r);
        }
    }

    #[test]
    fn rejects_bad_arguments() {
        let env = LiftEnv::new(LiftConfig::case1()).unwrap();
        assert!(solve_mdp(&env, SelectorKind::Max, 1.0, 1e-6, 10).is_err());
        assert!(solve_mdp(&env, SelectorKind::Max, 0.5, 0.0, 10).is_err());
    }

    struct Opaque(LiftEnv);

    impl Environment for Opaque {
        fn action_counts(&self) -> &[usize] {
            Environment::action_counts(&self.0)
        }
        fn state_dim(&self) -> usize {
            2
        }
        fn reset(&mut self) -> crate::envs::Observation {
            self.0.reset()
        }
        fn step(&mut self, a: &JointAction) -> Result<crate::envs::StepResult> {
            self.0.step(a)
        }
        fn gamma_hint(&self) -> f64 {
            0.5
        }
    }

    #[test]
    fn non_enumerable_is_unsupported() {
        let env = Opaque(LiftEnv::new(LiftConfig::case1()).unwrap());
        assert!(matches!(
            solve_mdp(&env, SelectorKind::Max, 0.5, 1e-6, 10),
            Err(Error::Unsupported(_))
        ));
    }

    #[test]
    fn non_convergence_is_reported() {
        let env = LiftEnv::new(LiftConfig::case1()).unwrap();
        let sol = solve_mdp(&env, SelectorKind::Maximin, 0.9, 1e-6, 2).unwrap();
        assert!(!sol.converged);
        assert_eq!(sol.iterations, 2);
        assert!(sol.to_text().contains("converged=false"));
    }

    #[test]
    fn export_has_summary_and_tensors() {
        let env = StageGame::new(table_payoffs(8.0, 10.0, [-5.0, -5.0]), 1).unwrap();
        let sol = solve_mdp(&env, SelectorKind::Nash, 0.9, 1e-6, 100).unwrap();
        let text = sol.to_text();
        let mut lines = text.lines();
        let summary = lines.next().unwrap();
        assert!(summary.starts_with("summary selector=nash"));
        assert!(summary.contains("initial_set={(0 1);(1 0)}"));
        assert!(lines.next().unwrap().starts_with("state 0 stage"));
        let tensor: Vec<&str> = lines.collect();
        let q = PayoffTensor::from_text(&tensor.join("\n")).unwrap();
        assert_eq!(q, sol.states[0].q);
    }
}
