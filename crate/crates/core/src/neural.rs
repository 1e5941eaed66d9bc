//! Dueling feed-forward Q-network with hand-written backpropagation and an
//! adaptive-moment optimizer.
//!
//! The network maps a state vector through a rectified-linear trunk into two
//! linear heads, a scalar state value `V(s)` and one advantage `A(s, a)` per
//! joint action. They are combined as `Q(s, a) = V(s) + A(s, a) - mean_a A(s, a)`,
//! so the mean of `Q - V` over joint actions is zero by construction.

use std::fmt::Write as _;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{validation, Error, Result};

/// Default hidden widths.
pub const DEFAULT_HIDDEN: [usize; 2] = [64, 64];

const CHECKPOINT_MAGIC: &str = "qvec-dueling-net";
const CHECKPOINT_VERSION: u32 = 1;

/// Fully connected layer, weights stored row-major as `outputs x inputs`.
#[derive(Debug, Clone, PartialEq)]
pub struct Dense {
    inputs: usize,
    outputs: usize,
    weights: Vec<f64>,
    bias: Vec<f64>,
}

impl Dense {
    fn glorot(inputs: usize, outputs: usize, rng: &mut ChaCha8Rng) -> Self {
        let bound = (6.0 / (inputs + outputs) as f64).sqrt();
        let weights = (0..inputs * outputs)
            .map(|_| rng.gen_range(-bound..bound))
            .collect();
        Dense {
            inputs,
            outputs,
            weights,
            bias: vec![0.0; outputs],
        }
    }

    fn apply(&self, x: &[f64]) -> Vec<f64> {
        self.weights
            .chunks_exact(self.inputs)
            .zip(&self.bias)
            .map(|(row, b)| row.iter().zip(x).map(|(w, xi)| w * xi).sum::<f64>() + b)
            .collect()
    }

    /// Accumulates `dW += g x^T`, `db += g` and returns `W^T g`.
    fn backprop(&self, x: &[f64], g: &[f64], dw: &mut [f64], db: &mut [f64]) -> Vec<f64> {
        let mut dx = vec![0.0; self.inputs];
        for (o, &go) in g.iter().enumerate() {
            if go == 0.0 {
                continue;
            }
            db[o] += go;
            let row = &self.weights[o * self.inputs..(o + 1) * self.inputs];
            let drow = &mut dw[o * self.inputs..(o + 1) * self.inputs];
            for k in 0..self.inputs {
                drow[k] += go * x[k];
                dx[k] += go * row[k];
            }
        }
        dx
    }
}

/// Per-agent dueling Q-network over all joint actions.
#[derive(Debug, Clone, PartialEq)]
pub struct DuelingNetwork {
    layer_sizes: Vec<usize>,
    trunk: Vec<Dense>,
    value_head: Dense,
    advantage_head: Dense,
}

/// Both heads evaluated at one state.
#[derive(Debug, Clone, PartialEq)]
pub struct HeadOutput {
    pub q: Vec<f64>,
    pub value: f64,
    pub advantages: Vec<f64>,
}

struct Trace {
    /// Input to each trunk layer followed by the final hidden activation.
    activations: Vec<Vec<f64>>,
    out: HeadOutput,
}

/// Gradients with the same tensor layout as [`DuelingNetwork::parameters`].
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub tensors: Vec<Vec<f64>>,
}

impl Gradients {
    pub fn is_finite(&self) -> bool {
        self.tensors.iter().flatten().all(|g| g.is_finite())
    }

    pub fn max_abs(&self) -> f64 {
        self.tensors
            .iter()
            .flatten()
            .fold(0.0, |m, g| m.max(g.abs()))
    }
}

impl DuelingNetwork {
    /// `layer_sizes` is the state dimension followed by the hidden widths.
    pub fn new(layer_sizes: &[usize], joint_actions: usize, seed: u64) -> Result<Self> {
        if layer_sizes.is_empty() {
            return Err(validation("layer sizes must include the state dimension"));
        }
        if let Some(k) = layer_sizes.iter().position(|&s| s == 0) {
            return Err(validation(format!("layer {k} has zero size")));
        }
        if joint_actions == 0 {
            return Err(validation("joint action count must be at least 1"));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let trunk = layer_sizes
            .windows(2)
            .map(|w| Dense::glorot(w[0], w[1], &mut rng))
            .collect();
        let last = *layer_sizes.last().unwrap();
        let value_head = Dense::glorot(last, 1, &mut rng);
        let advantage_head = Dense::glorot(last, joint_actions, &mut rng);
        Ok(DuelingNetwork {
            layer_sizes: layer_sizes.to_vec(),
            trunk,
            value_head,
            advantage_head,
        })
    }

    pub fn layer_sizes(&self) -> &[usize] {
        &self.layer_sizes
    }

    pub fn input_dim(&self) -> usize {
        self.layer_sizes[0]
    }

    pub fn joint_actions(&self) -> usize {
        self.advantage_head.outputs
    }

    /// Parameter tensors in declaration order: each trunk layer's weight and
    /// bias, then the value head, then the advantage head.
    pub fn parameters(&self) -> Vec<&[f64]> {
        self.layers()
            .flat_map(|l| [l.weights.as_slice(), l.bias.as_slice()])
            .collect()
    }

    pub fn parameters_mut(&mut self) -> Vec<&mut [f64]> {
        self.trunk
            .iter_mut()
            .chain([&mut self.value_head, &mut self.advantage_head])
            .flat_map(|l| [l.weights.as_mut_slice(), l.bias.as_mut_slice()])
            .collect()
    }

    pub fn parameter_names(&self) -> Vec<String> {
        let mut names = Vec::new();
        for k in 0..self.trunk.len() {
            names.push(format!("trunk.{k}.weight"));
            names.push(format!("trunk.{k}.bias"));
        }
        for head in ["value", "advantage"] {
            names.push(format!("{head}.weight"));
            names.push(format!("{head}.bias"));
        }
        names
    }

    pub fn parameter_count(&self) -> usize {
        self.parameters().iter().map(|p| p.len()).sum()
    }

    fn layers(&self) -> impl Iterator<Item = &Dense> {
        self.trunk
            .iter()
            .chain([&self.value_head, &self.advantage_head])
    }

    fn check_state(&self, state: &[f64]) -> Result<()> {
        if state.len() != self.input_dim() {
            return Err(validation(format!(
                "state has dimension {}, network expects {}",
                state.len(),
                self.input_dim()
            )));
        }
        Ok(())
    }

    fn trace(&self, state: &[f64]) -> Trace {
        let mut activations = Vec::with_capacity(self.trunk.len() + 1);
        activations.push(state.to_vec());
        for layer in &self.trunk {
            let mut h = layer.apply(activations.last().unwrap());
            h.iter_mut().for_each(|v| *v = v.max(0.0));
            activations.push(h);
        }
        let hidden = activations.last().unwrap();
        let value = self.value_head.apply(hidden)[0];
        let advantages = self.advantage_head.apply(hidden);
        let mean = advantages.iter().sum::<f64>() / advantages.len() as f64;
        let q = advantages.iter().map(|a| value + a - mean).collect();
        Trace {
            activations,
            out: HeadOutput {
                q,
                value,
                advantages,
            },
        }
    }

    /// Q-values over all joint actions.
    pub fn forward(&self, state: &[f64]) -> Result<Vec<f64>> {
        self.check_state(state)?;
        Ok(self.trace(state).out.q)
    }

    pub fn heads(&self, state: &[f64]) -> Result<HeadOutput> {
        self.check_state(state)?;
        Ok(self.trace(state).out)
    }

    fn check_batch(&self, states: &[Vec<f64>], actions: &[usize], targets: &[f64]) -> Result<()> {
        if states.is_empty() {
            return Err(validation("batch is empty"));
        }
        if states.len() != actions.len() || states.len() != targets.len() {
            return Err(validation(format!(
                "batch lengths differ: {} states, {} actions, {} targets",
                states.len(),
                actions.len(),
                targets.len()
            )));
        }
        for s in states {
            self.check_state(s)?;
        }
        if let Some(&a) = actions.iter().find(|&&a| a >= self.joint_actions()) {
            return Err(validation(format!(
                "action index {a} out of range ({} joint actions)",
                self.joint_actions()
            )));
        }
        Ok(())
    }

    /// Mean squared error between `Q(s, a)` and the targets.
    pub fn loss(&self, states: &[Vec<f64>], actions: &[usize], targets: &[f64]) -> Result<f64> {
        self.check_batch(states, actions, targets)?;
        let total: f64 = states
            .iter()
            .zip(actions)
            .zip(targets)
            .map(|((s, &a), y)| (self.trace(s).out.q[a] - y).powi(2))
            .sum();
        Ok(total / states.len() as f64)
    }

    /// Loss and its exact gradient with respect to every parameter.
    pub fn gradient(
        &self,
        states: &[Vec<f64>],
        actions: &[usize],
        targets: &[f64],
    ) -> Result<(f64, Gradients)> {
        self.check_batch(states, actions, targets)?;
        let mut grads = self.zero_gradients();
        let batch = states.len() as f64;
        let k = self.joint_actions() as f64;
        let nt = self.trunk.len();
        let mut loss = 0.0;

        for ((s, &a), &y) in states.iter().zip(actions).zip(targets) {
            let tr = self.trace(s);
            let err = tr.out.q[a] - y;
            loss += err * err;
            let dq = 2.0 * err / batch;

            // dQ_a/dV = 1, dQ_a/dA_j = [j == a] - 1/K
            let dv = [dq];
            let da: Vec<f64> = (0..self.joint_actions())
                .map(|j| dq * (f64::from(u8::from(j == a)) - 1.0 / k))
                .collect();

            let hidden = &tr.activations[nt];
            let (trunk_grads, head_grads) = grads.tensors.split_at_mut(2 * nt);
            let ((vw, vb), (aw, ab)) = head_grads_split(head_grads);
            let mut dh = self.value_head.backprop(hidden, &dv, vw, vb);
            let dh_a = self.advantage_head.backprop(hidden, &da, aw, ab);
            dh.iter_mut().zip(&dh_a).for_each(|(x, y)| *x += y);

            for (li, layer) in self.trunk.iter().enumerate().rev() {
                let out = &tr.activations[li + 1];
                let dpre: Vec<f64> = dh
                    .iter()
                    .zip(out)
                    .map(|(g, h)| if *h > 0.0 { *g } else { 0.0 })
                    .collect();
                let (w, b) = trunk_grads[2 * li..2 * li + 2].split_at_mut(1);
                dh = layer.backprop(&tr.activations[li], &dpre, &mut w[0], &mut b[0]);
            }
        }
        Ok((loss / batch, grads))
    }

    pub fn zero_gradients(&self) -> Gradients {
        Gradients {
            tensors: self
                .parameters()
                .iter()
                .map(|p| vec![0.0; p.len()])
                .collect(),
        }
    }

    /// Independent, value-identical copy.
    pub fn clone_parameters(&self) -> Self {
        self.clone()
    }

    /// Overwrites this network's parameters with `src`'s.
    pub fn copy_from(&mut self, src: &DuelingNetwork) -> Result<()> {
        if self.layer_sizes != src.layer_sizes || self.joint_actions() != src.joint_actions() {
            return Err(validation(
                "cannot copy parameters between different architectures",
            ));
        }
        self.clone_from(src);
        Ok(())
    }

    pub fn is_finite(&self) -> bool {
        self.parameters()
            .iter()
            .all(|p| p.iter().all(|v| v.is_finite()))
    }

    /// Plain-text checkpoint.
    ///
    /// ```text
    /// qvec-dueling-net 1
    /// layers <state_dim> <hidden...>
    /// joint_actions <k>
    /// <tensor name> <len> <values...>      (one line per tensor, declaration order)
    /// ```
    ///
    /// Values use the shortest decimal form that round-trips exactly.
    pub fn to_text(&self) -> String {
        let mut s = format!("{CHECKPOINT_MAGIC} {CHECKPOINT_VERSION}\nlayers");
        for l in &self.layer_sizes {
            let _ = write!(s, " {l}");
        }
        let _ = writeln!(s, "\njoint_actions {}", self.joint_actions());
        for (name, p) in self.parameter_names().iter().zip(self.parameters()) {
            let _ = write!(s, "{name} {}", p.len());
            for v in p {
                let _ = write!(s, " {v}");
            }
            s.push('\n');
        }
        s
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let parse_err = |m: String| Error::Parse(format!("checkpoint: {m}"));
        let mut lines = text.lines();
        let mut next = |what: &str| {
            lines
                .next()
                .ok_or_else(|| parse_err(format!("missing {what} line")))
        };
        let header = next("header")?;
        let expected = format!("{CHECKPOINT_MAGIC} {CHECKPOINT_VERSION}");
        if header.trim() != expected {
            return Err(parse_err(format!("unsupported header `{header}`")));
        }
        let layers: Vec<usize> = keyed_numbers(next("layers")?, "layers")?;
        let joint: Vec<usize> = keyed_numbers(next("joint_actions")?, "joint_actions")?;
        if joint.len() != 1 {
            return Err(parse_err("joint_actions takes one value".into()));
        }
        let mut net = DuelingNetwork::new(&layers, joint[0], 0)?;
        let names = net.parameter_names();
        for (name, param) in names.iter().zip(net.parameters_mut()) {
            let line = next(name)?;
            let mut tokens = line.split_whitespace();
            if tokens.next() != Some(name.as_str()) {
                return Err(parse_err(format!(
                    "expected tensor `{name}`, found `{line}`"
                )));
            }
            let len: usize = tokens
                .next()
                .and_then(|t| t.parse().ok())
                .ok_or_else(|| parse_err(format!("tensor `{name}` lacks a length")))?;
            if len != param.len() {
                return Err(parse_err(format!(
                    "tensor `{name}` has length {len}, architecture needs {}",
                    param.len()
                )));
            }
            let values = tokens
                .map(|t| {
                    t.parse::<f64>()
                        .map_err(|e| parse_err(format!("`{t}`: {e}")))
                })
                .collect::<Result<Vec<_>>>()?;
            if values.len() != len {
                return Err(parse_err(format!(
                    "tensor `{name}` lists {} values, header says {len}",
                    values.len()
                )));
            }
            param.copy_from_slice(&values);
        }
        if !net.is_finite() {
            return Err(validation("checkpoint contains non-finite parameters"));
        }
        Ok(net)
    }

    pub fn save(&self, path: &Path) -> std::io::Result<()> {
        std::fs::write(path, self.to_text())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Parse(format!("{}: {e}", path.display())))?;
        Self::from_text(&text)
    }
}

type WeightBias<'a> = (&'a mut [f64], &'a mut [f64]);

// Splits the trailing four head tensors into (value w, b) and (advantage w, b).
fn head_grads_split(heads: &mut [Vec<f64>]) -> (WeightBias<'_>, WeightBias<'_>) {
    let [vw, vb, aw, ab] = heads else {
        unreachable!("head gradients always hold four tensors")
    };
    ((vw, vb), (aw, ab))
}

fn keyed_numbers<T: std::str::FromStr>(line: &str, key: &str) -> Result<Vec<T>> {
    let mut tokens = line.split_whitespace();
    if tokens.next() != Some(key) {
        return Err(Error::Parse(format!(
            "checkpoint: expected `{key}` line, found `{line}`"
        )));
    }
    tokens
        .map(|t| {
            t.parse::<T>()
                .map_err(|_| Error::Parse(format!("checkpoint: bad `{key}` value `{t}`")))
        })
        .collect()
}

/// Adaptive-moment optimizer settings.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdamConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig {
            learning_rate: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }
}

/// First and second moment accumulators, one per parameter tensor.
#[derive(Debug, Clone, PartialEq)]
pub struct OptimizerState {
    pub config: AdamConfig,
    pub step: u64,
    first: Vec<Vec<f64>>,
    second: Vec<Vec<f64>>,
}

impl OptimizerState {
    pub fn new(shapes: &[usize], config: AdamConfig) -> Self {
        OptimizerState {
            config,
            step: 0,
            first: shapes.iter().map(|&n| vec![0.0; n]).collect(),
            second: shapes.iter().map(|&n| vec![0.0; n]).collect(),
        }
    }

    pub fn for_network(net: &DuelingNetwork, config: AdamConfig) -> Self {
        let shapes: Vec<usize> = net.parameters().iter().map(|p| p.len()).collect();
        Self::new(&shapes, config)
    }

    /// One bias-corrected update of `params` against `grads`.
    pub fn update(&mut self, params: &mut [&mut [f64]], grads: &[Vec<f64>]) -> Result<()> {
        if params.len() != self.first.len() || grads.len() != self.first.len() {
            return Err(validation("optimizer tensor count mismatch"));
        }
        for (k, (p, g)) in params.iter().zip(grads).enumerate() {
            if p.len() != self.first[k].len() || g.len() != self.first[k].len() {
                return Err(validation(format!(
                    "optimizer shape mismatch in tensor {k}"
                )));
            }
        }
        if let Some(g) = grads.iter().flatten().find(|g| !g.is_finite()) {
            return Err(Error::Training(format!("non-finite gradient entry {g}")));
        }
        self.step += 1;
        let AdamConfig {
            learning_rate,
            beta1,
            beta2,
            epsilon,
        } = self.config;
        let t = self.step as i32;
        let c1 = 1.0 - beta1.powi(t);
        let c2 = 1.0 - beta2.powi(t);
        for (k, p) in params.iter_mut().enumerate() {
            let m = &mut self.first[k];
            let v = &mut self.second[k];
            for (idx, w) in p.iter_mut().enumerate() {
                let g = grads[k][idx];
                m[idx] = beta1 * m[idx] + (1.0 - beta1) * g;
                v[idx] = beta2 * v[idx] + (1.0 - beta2) * g * g;
                let m_hat = m[idx] / c1;
                let v_hat = v[idx] / c2;
                *w -= learning_rate * m_hat / (v_hat.sqrt() + epsilon);
            }
        }
        Ok(())
    }
}

/// Applies one optimizer update to `net`.
pub fn optimizer_step(
    net: &mut DuelingNetwork,
    grads: &Gradients,
    state: &mut OptimizerState,
) -> Result<()> {
    let mut params = net.parameters_mut();
    state.update(&mut params, &grads.tensors)
}
