//! Independent oracles shared by the integration tests.
#![allow(dead_code)]

use mstd::agents::grads::{critic_loss_grad, ddpg_actor_loss_grad, sac_actor_loss_grad};
use mstd::agents::QTable;
use mstd::buffer::MultiStateSample;
use mstd::lab::BehaviorPolicy;
use mstd::mdp::{ActionBounds, FiniteMdp, Transition};
use mstd::nn::{concat_cols, Mlp, OutputActivation, SquashedGaussian};
use mstd::targets::critic_objective;
use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

pub const FD_STEP: f64 = 1e-5;

pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-8)
}

/// Largest relative error between `grad` and central differences of `f`
/// with respect to every parameter of `net`.
pub fn max_fd_error(net: &Mlp, grad: &[f64], f: impl Fn(&Mlp) -> f64) -> f64 {
    let mut probe = net.clone();
    let mut worst: f64 = 0.0;
    for i in 0..grad.len() {
        let orig = probe.params()[i];
        probe.params_mut()[i] = orig + FD_STEP;
        let plus = f(&probe);
        probe.params_mut()[i] = orig - FD_STEP;
        let minus = f(&probe);
        probe.params_mut()[i] = orig;
        let numeric = (plus - minus) / (2.0 * FD_STEP);
        worst = worst.max(relative_error(grad[i], numeric));
    }
    worst
}

fn gaussian(n: usize, d: usize, rng: &mut ChaCha8Rng) -> Array2<f64> {
    Array2::from_shape_simple_fn((n, d), || rng.sample(StandardNormal))
}

/// Worst relative gradient error of the critic, DDPG actor and SAC actor
/// objectives on random small networks for one seed.
pub fn objective_gradient_errors(seed: u64) -> (f64, f64, f64) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (sd, ad, n) = (3, 2, 6);
    let width = rng.random_range(4..=16);
    let depth_two = rng.random_bool(0.5);
    let hidden: Vec<usize> = if depth_two { vec![width, width] } else { vec![width] };
    let sizes = |i: usize, o: usize| {
        let mut s = vec![i];
        s.extend(&hidden);
        s.push(o);
        s
    };
    let bounds = ActionBounds::symmetric(ad, 2.0);
    let (offset, scale) = bounds.affine();
    let states = gaussian(n, sd, &mut rng);
    let actions = gaussian(n, ad, &mut rng);
    let targets: Vec<f64> = (0..n).map(|_| rng.random_range(-3.0..3.0)).collect();

    let critic = Mlp::new(&sizes(sd + ad, 1), OutputActivation::Identity, &mut rng);
    let inputs = concat_cols(states.view(), actions.view());
    let (_, g) = critic_loss_grad(&critic, inputs.view(), &targets).unwrap();
    let critic_err = max_fd_error(&critic, &g, |c| {
        let q = c.predict(inputs.view()).unwrap();
        critic_objective(q.column(0).as_slice().unwrap_or(&q.column(0).to_vec()), &targets).unwrap()
    });

    let actor = Mlp::new(&sizes(sd, ad), OutputActivation::ScaledTanh { scale, offset }, &mut rng);
    let (_, g) = ddpg_actor_loss_grad(&actor, &critic, states.view()).unwrap();
    let ddpg_err = max_fd_error(&actor, &g, |a| {
        let act = a.predict(states.view()).unwrap();
        let q = critic.predict(concat_cols(states.view(), act.view()).view()).unwrap();
        -q.sum() / n as f64
    });

    let head = SquashedGaussian::new(&bounds);
    let sac_actor = Mlp::new(&sizes(sd, 2 * ad), OutputActivation::Identity, &mut rng);
    let c2 = Mlp::new(&sizes(sd + ad, 1), OutputActivation::Identity, &mut rng);
    let noise = gaussian(n, ad, &mut rng);
    let alpha = 0.12;
    let (_, g) = sac_actor_loss_grad(&sac_actor, &head, [&critic, &c2], states.view(), noise.clone(), alpha).unwrap();
    let sac_err = max_fd_error(&sac_actor, &g, |a| {
        let params = a.predict(states.view()).unwrap();
        let draw = head.sample_with_noise(params.view(), noise.clone());
        let x = concat_cols(states.view(), draw.actions.view());
        let q1 = critic.predict(x.view()).unwrap();
        let q2 = c2.predict(x.view()).unwrap();
        (0..n)
            .map(|i| alpha * draw.log_probs[i] - q1[[i, 0]].min(q2[[i, 0]]))
            .sum::<f64>()
            / n as f64
    });
    (critic_err, ddpg_err, sac_err)
}

/// `H^l q` by enumerating every `l`-step path explicitly.
pub fn enumerate_h_l(q: &QTable, mdp: &FiniteMdp, l: usize, behavior: &BehaviorPolicy) -> QTable {
    let (ns, na) = (mdp.num_states, mdp.num_actions);
    let mut out = QTable::zeros(ns, na);
    // depth-first over every path, carrying its probability and discounted reward
    #[allow(clippy::too_many_arguments)]
    fn walk(
        mdp: &FiniteMdp,
        behavior: &BehaviorPolicy,
        q: &QTable,
        l: usize,
        prob: f64,
        acc: f64,
        state: usize,
        action: Option<usize>,
        depth: usize,
    ) -> f64 {
        let gamma = mdp.discount;
        if depth == l {
            let landing = (0..mdp.num_actions).map(|b| q.get(state, b)).fold(f64::NEG_INFINITY, f64::max);
            return prob * (acc + gamma.powi(l as i32) * landing);
        }
        let mut total = 0.0;
        let actions: Vec<(usize, f64)> = match action {
            Some(a) => vec![(a, 1.0)],
            None => behavior.row(state).iter().copied().enumerate().collect(),
        };
        for (a, pa) in actions {
            if pa == 0.0 {
                continue;
            }
            if mdp.is_terminal(state) {
                total += walk(mdp, behavior, q, l, prob * pa, acc, state, None, depth + 1);
                continue;
            }
            for y in 0..mdp.num_states {
                let p = mdp.prob(state, a, y);
                if p == 0.0 {
                    continue;
                }
                let r = mdp.reward(state, a, y) * gamma.powi(depth as i32);
                total += walk(mdp, behavior, q, l, prob * pa * p, acc + r, y, None, depth + 1);
            }
        }
        total
    }
    for s in 0..ns {
        for a in 0..na {
            out.set(s, a, walk(mdp, behavior, q, l, 1.0, 0.0, s, Some(a), 0));
        }
    }
    out
}

/// Random behavior policy with full support.
pub fn random_behavior(ns: usize, na: usize, rng: &mut ChaCha8Rng) -> BehaviorPolicy {
    let mut probs = Vec::with_capacity(ns * na);
    for _ in 0..ns {
        let w: Vec<f64> = (0..na).map(|_| rng.random_range(0.1..1.0)).collect();
        let sum: f64 = w.iter().sum();
        let mut row: Vec<f64> = w.iter().map(|x| x / sum).collect();
        // absorb rounding so the row sums to one within 1e-12
        let drift = 1.0 - row.iter().sum::<f64>();
        row[0] += drift;
        probs.extend(row);
    }
    BehaviorPolicy::new(ns, na, probs).unwrap()
}

/// Padding only ever grows towards the end of a window.
pub fn flags(horizon: usize, real: usize) -> Vec<bool> {
    (0..horizon).map(|k| k >= real).collect()
}

/// Direct evaluation: real rewards are those before the first padded
/// triplet; the `l`-step term bootstraps only when `S_l` is a real,
/// non-terminal state.
pub fn oracle(rewards: &[f64], real: usize, q: &[f64], gamma: f64, terminal: bool) -> f64 {
    let horizon = rewards.len();
    let mut total = 0.0;
    for l in 1..=horizon {
        let mut term = 0.0;
        for i in 0..l.min(real) {
            term += gamma.powi(i as i32) * rewards[i];
        }
        let state_is_real = l < real || (l == horizon && real == horizon);
        let bootstrap = if l == horizon { !terminal && real == horizon } else { state_is_real };
        if bootstrap {
            term += gamma.powi(l as i32) * q[l - 1];
        }
        total += term;
    }
    total / horizon as f64
}

pub fn transition(episode: usize, i: usize, terminated: bool) -> Transition {
    let id = (episode * 1000 + i) as f64;
    Transition {
        state: vec![id],
        action: vec![i as f64],
        reward: i as f64 + 0.5,
        next_state: vec![id + 1.0],
        terminated,
    }
}

/// Windows expected from one episode, written out from the definition.
pub fn expected_windows(episode: usize, len: usize, terminated: bool, horizon: usize) -> Vec<MultiStateSample> {
    let trs: Vec<Transition> = (0..len).map(|i| transition(episode, i, terminated && i + 1 == len)).collect();
    let last = len - 1;
    let starts = if terminated { 0..len } else { 0..(len + 1).saturating_sub(horizon) };
    starts
        .map(|k| {
            let at = |j: usize| &trs[(k + j).min(last)];
            MultiStateSample {
                states: (0..horizon)
                    .map(|j| at(j).state.clone())
                    .chain(std::iter::once(at(horizon - 1).next_state.clone()))
                    .collect(),
                actions: (0..horizon).map(|j| at(j).action.clone()).collect(),
                rewards: (0..horizon).map(|j| at(j).reward).collect(),
                pad_flags: (0..horizon).map(|j| k + j > last).collect(),
                terminal: terminated && k + horizon > last,
            }
        })
        .collect()
}
