//! Selection operators over a Q-vector at a single state.
//!
//! A [`PayoffTensor`] holds, for every agent, one value per joint action. The
//! three operators map such a tensor to a joint action:
//!
//! - **Max**: agent `i` contributes its own component of the joint action that
//!   maximizes agent `i`'s values.
//! - **Nash**: a pure joint action from which no unilateral deviation strictly
//!   improves the deviating agent (weak inequality).
//! - **Maximin**: agent `i` picks the action whose worst case over all opponent
//!   combinations is largest.
//!
//! Ties are resolved through a [`TieBreak`]. Any `rand` generator breaks ties
//! uniformly at random; [`LowestIndex`] always takes the first candidate.

use std::fmt;
use std::str::FromStr;

use rand::{Rng, RngCore};
use serde::{Deserialize, Serialize};

use crate::error::{validation, Error, Result};

/// One action index per agent.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct JointAction(Vec<usize>);

impl JointAction {
    pub fn new(actions: Vec<usize>) -> Self {
        JointAction(actions)
    }

    pub fn as_slice(&self) -> &[usize] {
        &self.0
    }

    pub fn agent(&self, i: usize) -> usize {
        self.0[i]
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// Copy of `self` with agent `i`'s component replaced.
    pub fn with_agent(&self, i: usize, action: usize) -> Self {
        let mut v = self.0.clone();
        v[i] = action;
        JointAction(v)
    }
}

impl From<Vec<usize>> for JointAction {
    fn from(v: Vec<usize>) -> Self {
        JointAction(v)
    }
}

impl fmt::Display for JointAction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "(")?;
        for (k, a) in self.0.iter().enumerate() {
            if k > 0 {
                write!(f, " ")?;
            }
            write!(f, "{a}")?;
        }
        write!(f, ")")
    }
}

impl FromStr for JointAction {
    type Err = Error;

    /// Parses the `Display` form, e.g. `(1 0)`.
    fn from_str(s: &str) -> Result<Self> {
        let inner = s
            .trim()
            .strip_prefix('(')
            .and_then(|r| r.strip_suffix(')'))
            .ok_or_else(|| Error::Parse(format!("joint action `{s}` is not parenthesized")))?;
        inner
            .split_whitespace()
            .map(|t| {
                t.parse::<usize>()
                    .map_err(|e| Error::Parse(format!("joint action component `{t}`: {e}")))
            })
            .collect::<Result<Vec<_>>>()
            .map(JointAction)
    }
}

/// Per-agent values over every joint action, stored agent-major and row-major
/// over joint actions (the first agent's index varies slowest).
#[derive(Debug, Clone, PartialEq)]
pub struct PayoffTensor {
    action_counts: Vec<usize>,
    joint_count: usize,
    values: Vec<f64>,
}

impl PayoffTensor {
    /// Builds a tensor from one value row per agent.
    pub fn new(action_counts: Vec<usize>, rows: Vec<Vec<f64>>) -> Result<Self> {
        let joint_count = check_counts(&action_counts)?;
        if rows.len() != action_counts.len() {
            return Err(validation(format!(
                "expected {} value rows, got {}",
                action_counts.len(),
                rows.len()
            )));
        }
        for (i, row) in rows.iter().enumerate() {
            if row.len() != joint_count {
                return Err(validation(format!(
                    "agent {i} has {} values, expected {joint_count}",
                    row.len()
                )));
            }
        }
        Self::from_flat(action_counts, rows.concat())
    }

    /// Builds a tensor from agent-major flat storage.
    pub fn from_flat(action_counts: Vec<usize>, values: Vec<f64>) -> Result<Self> {
        let joint_count = check_counts(&action_counts)?;
        let expected = joint_count * action_counts.len();
        if values.len() != expected {
            return Err(validation(format!(
                "expected {expected} values, got {}",
                values.len()
            )));
        }
        if let Some(k) = values.iter().position(|v| !v.is_finite()) {
            return Err(validation(format!("value {k} is not finite")));
        }
        Ok(PayoffTensor {
            action_counts,
            joint_count,
            values,
        })
    }

    pub fn zeros(action_counts: Vec<usize>) -> Result<Self> {
        let joint_count = check_counts(&action_counts)?;
        let n = action_counts.len();
        Self::from_flat(action_counts, vec![0.0; joint_count * n])
    }

    pub fn agents(&self) -> usize {
        self.action_counts.len()
    }

    pub fn action_counts(&self) -> &[usize] {
        &self.action_counts
    }

    pub fn joint_count(&self) -> usize {
        self.joint_count
    }

    /// All values of one agent, indexed by joint-action index.
    pub fn agent_values(&self, agent: usize) -> &[f64] {
        &self.values[agent * self.joint_count..(agent + 1) * self.joint_count]
    }

    pub fn value_at(&self, agent: usize, joint_index: usize) -> f64 {
        self.values[agent * self.joint_count + joint_index]
    }

    pub fn value(&self, agent: usize, a: &JointAction) -> Result<f64> {
        if agent >= self.agents() {
            return Err(validation(format!("agent {agent} out of range")));
        }
        Ok(self.value_at(agent, self.index_of(a)?))
    }

    pub fn set_value(&mut self, agent: usize, joint_index: usize, v: f64) -> Result<()> {
        if !v.is_finite() {
            return Err(validation("payoff values must be finite"));
        }
        if agent >= self.agents() || joint_index >= self.joint_count {
            return Err(validation(format!(
                "entry ({agent}, {joint_index}) out of range"
            )));
        }
        self.values[agent * self.joint_count + joint_index] = v;
        Ok(())
    }

    pub fn check_action(&self, a: &JointAction) -> Result<()> {
        if a.len() != self.agents() {
            return Err(validation(format!(
                "joint action has {} components, expected {}",
                a.len(),
                self.agents()
            )));
        }
        for (i, (&ai, &k)) in a.as_slice().iter().zip(&self.action_counts).enumerate() {
            if ai >= k {
                return Err(validation(format!(
                    "agent {i} action {ai} out of range (action set size {k})"
                )));
            }
        }
        Ok(())
    }

    /// Row-major index of a joint action.
    pub fn index_of(&self, a: &JointAction) -> Result<usize> {
        self.check_action(a)?;
        Ok(self.index_unchecked(a.as_slice()))
    }

    fn index_unchecked(&self, a: &[usize]) -> usize {
        a.iter()
            .zip(&self.action_counts)
            .fold(0, |acc, (&ai, &k)| acc * k + ai)
    }

    pub fn joint_action(&self, mut index: usize) -> JointAction {
        debug_assert!(index < self.joint_count);
        let mut out = vec![0; self.agents()];
        for (slot, &k) in out.iter_mut().zip(&self.action_counts).rev() {
            *slot = index % k;
            index /= k;
        }
        JointAction(out)
    }

    pub fn joint_actions(&self) -> impl Iterator<Item = JointAction> + '_ {
        (0..self.joint_count).map(|j| self.joint_action(j))
    }

    /// Applies `f` to every value of one agent.
    pub fn map_agent(&self, agent: usize, f: impl Fn(f64) -> f64) -> Result<Self> {
        let mut out = self.clone();
        for v in &mut out.values[agent * self.joint_count..(agent + 1) * self.joint_count] {
            *v = f(*v);
        }
        Self::from_flat(out.action_counts, out.values)
    }

    /// Plain-text form: a header `n k1 .. kn`, then one line of values per agent
    /// in row-major joint-action order.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        s.push_str(&self.agents().to_string());
        for k in &self.action_counts {
            s.push(' ');
            s.push_str(&k.to_string());
        }
        s.push('\n');
        for i in 0..self.agents() {
            let line: Vec<String> = self.agent_values(i).iter().map(|v| v.to_string()).collect();
            s.push_str(&line.join(" "));
            s.push('\n');
        }
        s
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let mut lines = text.lines().filter(|l| !l.trim().is_empty());
        let header = lines
            .next()
            .ok_or_else(|| Error::Parse("empty tensor text".into()))?;
        let head: Vec<usize> = header
            .split_whitespace()
            .map(|t| {
                t.parse::<usize>()
                    .map_err(|e| Error::Parse(format!("header token `{t}`: {e}")))
            })
            .collect::<Result<_>>()?;
        let (&n, counts) = head
            .split_first()
            .ok_or_else(|| Error::Parse("empty header".into()))?;
        if counts.len() != n {
            return Err(Error::Parse(format!(
                "header declares {n} agents but lists {} action counts",
                counts.len()
            )));
        }
        let mut rows = Vec::with_capacity(n);
        for i in 0..n {
            let line = lines
                .next()
                .ok_or_else(|| Error::Parse(format!("missing value line for agent {i}")))?;
            let row = line
                .split_whitespace()
                .map(|t| {
                    t.parse::<f64>()
                        .map_err(|e| Error::Parse(format!("agent {i} value `{t}`: {e}")))
                })
                .collect::<Result<Vec<_>>>()?;
            rows.push(row);
        }
        if lines.next().is_some() {
            return Err(Error::Parse("trailing lines after tensor".into()));
        }
        Self::new(counts.to_vec(), rows)
    }
}

fn check_counts(action_counts: &[usize]) -> Result<usize> {
    if action_counts.len() < 2 {
        return Err(validation(format!(
            "need at least 2 agents, got {}",
            action_counts.len()
        )));
    }
    if let Some(i) = action_counts.iter().position(|&k| k == 0) {
        return Err(validation(format!("agent {i} has an empty action set")));
    }
    action_counts
        .iter()
        .try_fold(1usize, |acc, &k| acc.checked_mul(k))
        .ok_or_else(|| validation("joint action space overflows"))
}

/// Chooses one element out of `n` tied candidates.
pub trait TieBreak {
    fn pick(&mut self, n: usize) -> usize;
}

/// Deterministic tie-break: always the first (lowest-index) candidate.
#[derive(Debug, Clone, Copy, Default)]
pub struct LowestIndex;

impl TieBreak for LowestIndex {
    fn pick(&mut self, _n: usize) -> usize {
        0
    }
}

impl<R: RngCore + ?Sized> TieBreak for R {
    fn pick(&mut self, n: usize) -> usize {
        if n <= 1 {
            0
        } else {
            self.gen_range(0..n)
        }
    }
}

fn choose<T: Clone, B: TieBreak + ?Sized>(items: &[T], tb: &mut B) -> T {
    items[tb.pick(items.len())].clone()
}

fn argmax_indices(values: impl Iterator<Item = f64>) -> Vec<usize> {
    let mut best = f64::NEG_INFINITY;
    let mut out = Vec::new();
    for (k, v) in values.enumerate() {
        if v > best {
            best = v;
            out.clear();
            out.push(k);
        } else if v == best {
            out.push(k);
        }
    }
    out
}

/// Joint-action indices maximizing each agent's own values.
pub fn argmax_joint(q: &PayoffTensor) -> Vec<Vec<usize>> {
    (0..q.agents())
        .map(|i| argmax_indices(q.agent_values(i).iter().copied()))
        .collect()
}

/// Max projection: component `i` comes from agent `i`'s argmax joint action.
pub fn select_max<B: TieBreak + ?Sized>(q: &PayoffTensor, tb: &mut B) -> JointAction {
    let actions = argmax_joint(q)
        .into_iter()
        .enumerate()
        .map(|(i, tied)| q.joint_action(choose(&tied, tb)).agent(i))
        .collect();
    JointAction(actions)
}

/// Per-agent components reachable by [`select_max`] under some tie-break.
pub fn max_component_sets(q: &PayoffTensor) -> Vec<Vec<usize>> {
    argmax_joint(q)
        .into_iter()
        .enumerate()
        .map(|(i, tied)| {
            let mut comps: Vec<usize> = tied.iter().map(|&j| q.joint_action(j).agent(i)).collect();
            comps.sort_unstable();
            comps.dedup();
            comps
        })
        .collect()
}

/// Worst case of agent `i`'s value for each of its own actions.
pub fn security_levels(q: &PayoffTensor, agent: usize) -> Vec<f64> {
    let mut worst = vec![f64::INFINITY; q.action_counts()[agent]];
    for (j, v) in q.agent_values(agent).iter().enumerate() {
        let own = q.joint_action(j).agent(agent);
        if *v < worst[own] {
            worst[own] = *v;
        }
    }
    worst
}

/// Per-agent sets of maximin actions.
pub fn maximin_sets(q: &PayoffTensor) -> Vec<Vec<usize>> {
    (0..q.agents())
        .map(|i| argmax_indices(security_levels(q, i).into_iter()))
        .collect()
}

pub fn select_maximin<B: TieBreak + ?Sized>(q: &PayoffTensor, tb: &mut B) -> JointAction {
    JointAction(maximin_sets(q).iter().map(|s| choose(s, tb)).collect())
}

/// True iff no agent strictly gains by a unilateral deviation from `a`.
pub fn is_nash(q: &PayoffTensor, a: &JointAction) -> Result<bool> {
    let j = q.index_of(a)?;
    Ok(is_nash_index(q, j))
}

fn is_nash_index(q: &PayoffTensor, j: usize) -> bool {
    let a = q.joint_action(j);
    (0..q.agents()).all(|i| {
        let here = q.value_at(i, j);
        let mut dev = a.0.clone();
        (0..q.action_counts()[i]).all(|b| {
            dev[i] = b;
            q.value_at(i, q.index_unchecked(&dev)) <= here
        })
    })
}

/// Every pure Nash joint action, in joint-index order. May be empty.
pub fn enumerate_nash(q: &PayoffTensor) -> Vec<JointAction> {
    (0..q.joint_count())
        .filter(|&j| is_nash_index(q, j))
        .map(|j| q.joint_action(j))
        .collect()
}

/// A uniformly chosen pure Nash action, or the maximin action with
/// `fallback = true` when no pure Nash exists.
pub fn select_nash<B: TieBreak + ?Sized>(q: &PayoffTensor, tb: &mut B) -> (JointAction, bool) {
    let set = enumerate_nash(q);
    if set.is_empty() {
        (select_maximin(q, tb), true)
    } else {
        (choose(&set, tb), false)
    }
}

/// The selection operator applied to a Q-vector.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SelectorKind {
    Max,
    Nash,
    Maximin,
}

/// Result of applying a selector.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Selection {
    pub action: JointAction,
    /// Set when the Nash selector found no pure equilibrium and fell back to maximin.
    pub fallback: bool,
}

impl SelectorKind {
    pub const ALL: [SelectorKind; 3] =
        [SelectorKind::Max, SelectorKind::Nash, SelectorKind::Maximin];

    pub fn select<B: TieBreak + ?Sized>(self, q: &PayoffTensor, tb: &mut B) -> Selection {
        match self {
            SelectorKind::Max => Selection {
                action: select_max(q, tb),
                fallback: false,
            },
            SelectorKind::Maximin => Selection {
                action: select_maximin(q, tb),
                fallback: false,
            },
            SelectorKind::Nash => {
                let (action, fallback) = select_nash(q, tb);
                Selection { action, fallback }
            }
        }
    }

    /// Every joint action this selector can return under some tie-break,
    /// sorted by joint index.
    pub fn optimal_set(self, q: &PayoffTensor) -> Vec<JointAction> {
        match self {
            SelectorKind::Max => cartesian(&max_component_sets(q)),
            SelectorKind::Maximin => cartesian(&maximin_sets(q)),
            SelectorKind::Nash => {
                let set = enumerate_nash(q);
                if set.is_empty() {
                    cartesian(&maximin_sets(q))
                } else {
                    set
                }
            }
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            SelectorKind::Max => "max",
            SelectorKind::Nash => "nash",
            SelectorKind::Maximin => "maximin",
        }
    }
}

impl fmt::Display for SelectorKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for SelectorKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "max" => Ok(SelectorKind::Max),
            "nash" => Ok(SelectorKind::Nash),
            "maximin" | "mm" => Ok(SelectorKind::Maximin),
            other => Err(Error::Parse(format!(
                "unknown selector `{other}` (expected max, nash or maximin)"
            ))),
        }
    }
}

fn cartesian(sets: &[Vec<usize>]) -> Vec<JointAction> {
    let mut out = vec![Vec::with_capacity(sets.len())];
    for set in sets {
        out = out
            .into_iter()
            .flat_map(|prefix| {
                set.iter().map(move |&a| {
                    let mut p = prefix.clone();
                    p.push(a);
                    p
                })
            })
            .collect();
    }
    out.into_iter().map(JointAction).collect()
}

/// Uniformly random joint action.
pub fn random_joint_action<R: Rng + ?Sized>(q: &PayoffTensor, rng: &mut R) -> JointAction {
    q.joint_action(rng.gen_range(0..q.joint_count()))
}
