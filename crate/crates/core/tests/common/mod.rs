//! Brute-force reference implementations shared by the integration tests.
#![allow(dead_code)]

use qvec::neural::DuelingNetwork;
use qvec::{JointAction, PayoffTensor};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Every joint action, first agent slowest.
pub fn all_joint(counts: &[usize]) -> Vec<Vec<usize>> {
    let mut out = vec![vec![]];
    for &k in counts {
        out = out
            .into_iter()
            .flat_map(|p| {
                (0..k).map(move |a| {
                    let mut q = p.clone();
                    q.push(a);
                    q
                })
            })
            .collect();
    }
    out
}

pub fn value(q: &PayoffTensor, agent: usize, a: &[usize]) -> f64 {
    q.value(agent, &JointAction::new(a.to_vec())).unwrap()
}

/// No agent gains strictly by a unilateral deviation.
pub fn brute_is_nash(q: &PayoffTensor, a: &[usize]) -> bool {
    let counts = q.action_counts();
    (0..counts.len()).all(|i| {
        let here = value(q, i, a);
        (0..counts[i]).all(|d| {
            let mut b = a.to_vec();
            b[i] = d;
            value(q, i, &b) <= here
        })
    })
}

pub fn brute_nash_set(q: &PayoffTensor) -> Vec<Vec<usize>> {
    all_joint(q.action_counts())
        .into_iter()
        .filter(|a| brute_is_nash(q, a))
        .collect()
}

/// Per agent, the own actions achieving the best worst case.
pub fn brute_maximin(q: &PayoffTensor) -> Vec<Vec<usize>> {
    let counts = q.action_counts();
    let joint = all_joint(counts);
    (0..counts.len())
        .map(|i| {
            let worst: Vec<f64> = (0..counts[i])
                .map(|ai| {
                    joint
                        .iter()
                        .filter(|a| a[i] == ai)
                        .map(|a| value(q, i, a))
                        .fold(f64::INFINITY, f64::min)
                })
                .collect();
            let best = worst.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            (0..counts[i]).filter(|&ai| worst[ai] == best).collect()
        })
        .collect()
}

/// Per agent, own components of the joint actions maximizing that agent's value.
pub fn brute_max(q: &PayoffTensor) -> Vec<Vec<usize>> {
    let counts = q.action_counts();
    let joint = all_joint(counts);
    (0..counts.len())
        .map(|i| {
            let best = joint
                .iter()
                .map(|a| value(q, i, a))
                .fold(f64::NEG_INFINITY, f64::max);
            let mut own: Vec<usize> = joint
                .iter()
                .filter(|a| value(q, i, a) == best)
                .map(|a| a[i])
                .collect();
            own.dedup();
            own.sort_unstable();
            own.dedup();
            own
        })
        .collect()
}

/// Random tensor with 2–3 agents, 2–3 actions each and small integer payoffs
/// (so ties are common).
pub fn random_tensor<R: Rng>(rng: &mut R) -> PayoffTensor {
    let agents = rng.gen_range(2..=3);
    let counts: Vec<usize> = (0..agents).map(|_| rng.gen_range(2..=3)).collect();
    let joint: usize = counts.iter().product();
    let rows = (0..agents)
        .map(|_| (0..joint).map(|_| rng.gen_range(-3..=3) as f64).collect())
        .collect();
    PayoffTensor::new(counts, rows).unwrap()
}

/// Pearson statistic of observed counts against a uniform expectation.
pub fn chi_squared(counts: &[usize]) -> f64 {
    let n: usize = counts.iter().sum();
    let e = n as f64 / counts.len() as f64;
    counts.iter().map(|&c| (c as f64 - e).powi(2) / e).sum()
}

/// Upper 0.1% critical values of the chi-squared distribution, indexed by
/// degrees of freedom.
pub fn chi_squared_critical_999(df: usize) -> f64 {
    match df {
        1 => 10.828,
        2 => 13.816,
        3 => 16.266,
        4 => 18.467,
        5 => 20.515,
        6 => 22.458,
        7 => 24.322,
        8 => 26.124,
        9 => 27.877,
        11 => 31.264,
        15 => 37.697,
        _ => panic!("no table entry for {df} degrees of freedom"),
    }
}

/// Random architecture, random parameters (including biases) and a random batch.
pub struct Case {
    pub net: DuelingNetwork,
    pub states: Vec<Vec<f64>>,
    pub actions: Vec<usize>,
    pub targets: Vec<f64>,
}

pub fn random_case(seed: u64) -> Case {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let input = rng.gen_range(1..=4);
    let depth = rng.gen_range(1..=2);
    let mut sizes = vec![input];
    sizes.extend((0..depth).map(|_| rng.gen_range(2..=8)));
    let k = rng.gen_range(2..=9);
    let mut net = DuelingNetwork::new(&sizes, k, seed).unwrap();
    for p in net.parameters_mut() {
        for w in p.iter_mut() {
            *w = rng.gen_range(-1.0..1.0);
        }
    }
    let batch = rng.gen_range(1..=8);
    let states = (0..batch)
        .map(|_| (0..input).map(|_| rng.gen_range(-2.0..2.0)).collect())
        .collect();
    let actions = (0..batch).map(|_| rng.gen_range(0..k)).collect();
    let targets = (0..batch).map(|_| rng.gen_range(-5.0..5.0)).collect();
    Case {
        net,
        states,
        actions,
        targets,
    }
}

/// Largest relative gap between the analytic gradient and central differences
/// with step `h`. Entries where both are below `floor` are compared absolutely
/// against `floor`.
pub fn max_relative_error(case: &Case, h: f64, floor: f64) -> f64 {
    let (_, grads) = case
        .net
        .gradient(&case.states, &case.actions, &case.targets)
        .unwrap();
    let mut net = case.net.clone();
    let mut worst = 0.0f64;
    let shapes: Vec<usize> = net.parameters().iter().map(|p| p.len()).collect();
    for (t, &len) in shapes.iter().enumerate() {
        for idx in 0..len {
            let orig = net.parameters()[t][idx];
            net.parameters_mut()[t][idx] = orig + h;
            let up = net
                .loss(&case.states, &case.actions, &case.targets)
                .unwrap();
            net.parameters_mut()[t][idx] = orig - h;
            let down = net
                .loss(&case.states, &case.actions, &case.targets)
                .unwrap();
            net.parameters_mut()[t][idx] = orig;
            let numeric = (up - down) / (2.0 * h);
            let analytic = grads.tensors[t][idx];
            let scale = analytic.abs().max(numeric.abs()).max(floor);
            worst = worst.max((analytic - numeric).abs() / scale);
        }
    }
    worst
}
