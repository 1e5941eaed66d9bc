//! Fast invariant checks runnable from the installed binary.

use qvec::envs::{table_payoffs, LiftConfig, LiftEnv, StageGame};
use qvec::gamesolve::{enumerate_nash, is_nash, LowestIndex};
use qvec::neural::DuelingNetwork;
use qvec::oracle::{solve_mdp, DEFAULT_MAX_ITERS, DEFAULT_TOLERANCE};
use qvec::trainer::{train, RunLog, TrainerConfig};
use qvec::{JointAction, PayoffTensor, SelectorKind};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

#[derive(Debug, Clone, PartialEq)]
pub struct Check {
    pub name: &'static str,
    pub pass: bool,
    pub detail: String,
}

fn check(name: &'static str, pass: bool, detail: impl Into<String>) -> Check {
    Check {
        name,
        pass,
        detail: detail.into(),
    }
}

fn random_tensor(rng: &mut ChaCha8Rng) -> PayoffTensor {
    let agents = rng.gen_range(2..=3);
    let counts: Vec<usize> = (0..agents).map(|_| rng.gen_range(2..=3)).collect();
    let joint: usize = counts.iter().product();
    let values = (0..agents * joint)
        .map(|_| rng.gen_range(-3..=3) as f64)
        .collect();
    PayoffTensor::from_flat(counts, values).expect("valid random tensor")
}

fn selectors() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut bad = 0;
    for _ in 0..500 {
        let q = random_tensor(&mut rng);
        let filtered: Vec<JointAction> = q
            .joint_actions()
            .filter(|a| is_nash(&q, a).expect("in range"))
            .collect();
        let mut ok = filtered == enumerate_nash(&q);
        for kind in SelectorKind::ALL {
            let set = kind.optimal_set(&q);
            ok &= set.contains(&kind.select(&q, &mut rng).action);
            ok &= set.contains(&kind.select(&q, &mut LowestIndex).action);
        }
        bad += usize::from(!ok);
    }
    check(
        "selectors",
        bad == 0,
        format!("500 random tensors, {bad} inconsistent"),
    )
}

fn tables() -> Check {
    let ja = |a: [usize; 2]| JointAction::new(a.to_vec());
    let c1 = table_payoffs(8.0, 10.0, [-5.0, -5.0]);
    let c2 = table_payoffs(8.0, 10.0, [0.0, -5.0]);
    let tilt = LiftConfig::case2()
        .reward_tensor([1, 0])
        .expect("valid heights");
    let expected = [
        (&c1, SelectorKind::Max, vec![ja([0, 0])]),
        (&c1, SelectorKind::Nash, vec![ja([0, 1]), ja([1, 0])]),
        (&c1, SelectorKind::Maximin, vec![ja([1, 1])]),
        (&c2, SelectorKind::Max, vec![ja([1, 0])]),
        (&c2, SelectorKind::Nash, vec![ja([1, 0])]),
        (&c2, SelectorKind::Maximin, vec![ja([1, 1])]),
        (&tilt, SelectorKind::Nash, vec![ja([0, 1])]),
    ];
    let wrong = expected
        .iter()
        .filter(|(q, kind, want)| kind.optimal_set(q) != *want)
        .count();
    check(
        "tables",
        wrong == 0,
        format!(
            "{} flat and tilted selections, {wrong} wrong",
            expected.len()
        ),
    )
}

fn gradients() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut worst = 0.0f64;
    for seed in 0..20 {
        let mut net = DuelingNetwork::new(&[2, 5, 4], 4, seed).expect("valid shape");
        for p in net.parameters_mut() {
            p.iter_mut().for_each(|w| *w = rng.gen_range(-1.0..1.0));
        }
        let states: Vec<Vec<f64>> = (0..4)
            .map(|_| vec![rng.gen_range(-2.0..2.0), rng.gen_range(-2.0..2.0)])
            .collect();
        let actions: Vec<usize> = (0..4).map(|_| rng.gen_range(0..4)).collect();
        let targets: Vec<f64> = (0..4).map(|_| rng.gen_range(-5.0..5.0)).collect();
        let (_, g) = net
            .gradient(&states, &actions, &targets)
            .expect("valid batch");
        let h = 1e-5;
        for t in 0..g.tensors.len() {
            for i in 0..g.tensors[t].len() {
                let orig = net.parameters()[t][i];
                net.parameters_mut()[t][i] = orig + h;
                let up = net.loss(&states, &actions, &targets).expect("valid batch");
                net.parameters_mut()[t][i] = orig - h;
                let down = net.loss(&states, &actions, &targets).expect("valid batch");
                net.parameters_mut()[t][i] = orig;
                let fd = (up - down) / (2.0 * h);
                let a = g.tensors[t][i];
                worst = worst.max((a - fd).abs() / a.abs().max(fd.abs()).max(1e-6));
            }
        }
    }
    check(
        "gradients",
        worst < 1e-4,
        format!("20 nets, max relative error {worst:.2e}"),
    )
}

fn oracle() -> Check {
    let mut notes = Vec::new();
    let mut pass = true;
    for cfg in [LiftConfig::case1(), LiftConfig::case2()] {
        let env = LiftEnv::new(cfg).expect("bundled case is valid");
        for kind in SelectorKind::ALL {
            match solve_mdp(&env, kind, 0.9, DEFAULT_TOLERANCE, DEFAULT_MAX_ITERS) {
                Ok(s) => {
                    pass &= s.converged;
                    notes.push(format!("{kind}:{}", s.iterations));
                }
                Err(e) => {
                    pass = false;
                    notes.push(e.to_string());
                }
            }
        }
    }
    check("oracle", pass, format!("lift sweeps {}", notes.join(" ")))
}

fn run_log() -> Check {
    let run = || {
        let mut env =
            StageGame::new(table_payoffs(8.0, 10.0, [0.0, -5.0]), 2).expect("valid length");
        let mut cfg = TrainerConfig::new(SelectorKind::Nash, 0.9, 30, 5);
        cfg.min_fill = 8;
        cfg.batch_size = 8;
        cfg.hidden = vec![8];
        train(&mut env, cfg).map(|(_, log)| log)
    };
    match (run(), run()) {
        (Ok(a), Ok(b)) => {
            let csv = a.to_csv();
            let parsed = RunLog::parse_csv(&csv);
            let round_trip = matches!(&parsed, Ok(rows)
                if rows.iter().map(|r| &r.record).eq(a.episodes.iter()));
            let same = csv == b.to_csv();
            check(
                "run log",
                round_trip && same,
                format!("csv round trip {round_trip}, reproducible {same}"),
            )
        }
        (Err(e), _) | (_, Err(e)) => check("run log", false, e.to_string()),
    }
}

pub fn run_all() -> Vec<Check> {
    vec![selectors(), tables(), gradients(), oracle(), run_log()]
}
