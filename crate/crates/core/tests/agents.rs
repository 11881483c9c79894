use mstd::agents::{
    build_agent, rng_stream, run_training, Agent, AgentConfig, Algo, DdpgAgent, SacAgent, TrainingEvent, TrainingOptions,
    TrainingSummary, INIT_STREAM,
};
use mstd::buffer::{MultiStateSample, RingBuffer, WindowBuilder};
use mstd::envs::make_env;
use mstd::mdp::{ActionBounds, Transition};
use mstd::nn::{concat_cols, Checkpoint};
use mstd::targets::{critic_objective, ActionMode};
use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn small(algo: Algo, horizon: usize, mode: ActionMode) -> AgentConfig {
    let mut c = AgentConfig::new(algo).with_horizon(horizon).with_mode(mode);
    c.hidden = vec![16, 16];
    c.batch_size = 16;
    c.warmup = 16;
    c.buffer_capacity = 5000;
    c
}

fn train(config: AgentConfig, env: &str, steps: u64, seed: u64) -> (TrainingSummary, Vec<TrainingEvent>, Vec<(&'static str, Checkpoint)>) {
    let mut env = make_env(env).unwrap();
    let mut init = rng_stream(seed, INIT_STREAM);
    let mut agent = build_agent(config, env.state_dim(), env.action_bounds().clone(), &mut init).unwrap();
    let options = TrainingOptions {
        total_steps: steps,
        eval_every: 0,
        eval_episodes: 0,
    };
    let mut events = Vec::new();
    let summary = run_training(agent.as_mut(), env.as_mut(), None, &options, seed, &mut |e| events.push(e.clone())).unwrap();
    let cks = agent.checkpoints(seed, summary.steps);
    (summary, events, cks)
}

fn params(cks: &[(&'static str, Checkpoint)]) -> Vec<(&'static str, Vec<u64>)> {
    cks.iter().map(|(n, c)| (*n, c.params.iter().map(|p| p.to_bits()).collect())).collect()
}

#[test]
fn horizon_one_collapses_the_ddpg_family() {
    let reference = params(&train(small(Algo::Ddpg, 1, ActionMode::Loaded), "pendulum", 300, 3).2);
    for algo in [Algo::Mpddpg, Algo::Msddpg] {
        for mode in [ActionMode::Loaded, ActionMode::Generated] {
            let got = params(&train(small(algo, 1, mode), "pendulum", 300, 3).2);
            assert!(got == reference, "{algo} {mode:?} differs from ddpg at L = 1");
        }
    }
}

#[test]
fn horizon_one_collapses_the_sac_family() {
    let reference = params(&train(small(Algo::Sac, 1, ActionMode::Generated), "pendulum", 300, 4).2);
    for algo in [Algo::Mpsac, Algo::Mssac] {
        for mode in [ActionMode::Loaded, ActionMode::Generated] {
            let got = params(&train(small(algo, 1, mode), "pendulum", 300, 4).2);
            assert!(got == reference, "{algo} {mode:?} differs from sac at L = 1");
        }
    }
}

#[test]
fn longer_horizons_change_the_result() {
    let one = params(&train(small(Algo::Msddpg, 1, ActionMode::Loaded), "pendulum", 300, 3).2);
    let three = params(&train(small(Algo::Msddpg, 3, ActionMode::Loaded), "pendulum", 300, 3).2);
    assert!(one != three);
}

#[test]
fn training_is_deterministic_per_seed() {
    for algo in [Algo::Msddpg, Algo::Mssac] {
        let a = train(small(algo, 3, ActionMode::Generated), "chain", 400, 8);
        let b = train(small(algo, 3, ActionMode::Generated), "chain", 400, 8);
        assert_eq!(a.0, b.0);
        assert!(params(&a.2) == params(&b.2));
        assert_eq!(a.1.len(), b.1.len());
        let c = train(small(algo, 3, ActionMode::Generated), "chain", 400, 9);
        assert!(params(&a.2) != params(&c.2));
    }
}

#[test]
fn warmup_gates_updates() {
    let config = small(Algo::Ddpg, 1, ActionMode::Loaded);
    let warm = config.warmup_len() as u64;
    let (s, events, _) = train(config.clone(), "pendulum", warm - 1, 0);
    assert_eq!(s.updates, 0);
    assert!(!events.iter().any(|e| matches!(e, TrainingEvent::Update { .. })));
    // pendulum never terminates, so with L = 1 the buffer grows by one per step
    let (s, events, _) = train(config, "pendulum", 100, 0);
    assert_eq!(s.updates, 100 - warm + 1);
    assert_eq!(events.iter().filter(|e| matches!(e, TrainingEvent::Update { .. })).count() as u64, s.updates);
}

#[test]
fn terminated_episodes_are_finalized() {
    let (s, events, _) = train(small(Algo::Msddpg, 3, ActionMode::Loaded), "chain", 600, 2);
    let terminated = events
        .iter()
        .filter(|e| matches!(e, TrainingEvent::Episode { terminated: true, .. }))
        .count() as u64;
    let episodes = events.iter().filter(|e| matches!(e, TrainingEvent::Episode { .. })).count() as u64;
    assert_eq!(s.finalized, terminated);
    assert_eq!(s.episodes, episodes);
    assert!(s.finalized > 0);
}

fn transition(rng: &mut ChaCha8Rng, terminated: bool) -> Transition {
    Transition {
        state: (0..3).map(|_| rng.random_range(-1.0..1.0)).collect(),
        action: vec![rng.random_range(-2.0..2.0)],
        reward: rng.random_range(-1.0..1.0),
        next_state: (0..3).map(|_| rng.random_range(-1.0..1.0)).collect(),
        terminated,
    }
}

/// Windows of one terminated episode of length `len`.
fn terminal_windows(horizon: usize, len: usize, rng: &mut ChaCha8Rng) -> Vec<MultiStateSample> {
    let mut buffer = RingBuffer::new(100, horizon, 3, 1);
    let mut builder = WindowBuilder::new(horizon);
    let mut prev: Option<Transition> = None;
    for i in 0..len {
        let mut t = transition(rng, i + 1 == len);
        if let Some(p) = &prev {
            t.state = p.next_state.clone();
        }
        builder.push_transition(&mut buffer, t.clone()).unwrap();
        prev = Some(t);
    }
    builder.finalize_episode(&mut buffer).unwrap();
    buffer.iter().cloned().collect()
}

#[test]
fn terminal_windows_use_truncated_returns() {
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    let horizon = 4;
    let config = small(Algo::Msddpg, horizon, ActionMode::Loaded);
    let agent = DdpgAgent::new(config.clone(), 3, ActionBounds::symmetric(1, 2.0), &mut rng).unwrap();
    let gamma = config.gamma;
    let windows = terminal_windows(horizon, 2, &mut rng);
    assert_eq!(windows.len(), 2);
    let refs: Vec<&MultiStateSample> = windows.iter().collect();
    let targets = agent.compute_targets(&refs).unwrap();
    for (w, &target) in windows.iter().zip(&targets) {
        let k = w.real_len();
        let mut expected = 0.0;
        for l in 1..=horizon {
            let m = l.min(k);
            let mut term: f64 = (0..m).map(|i| gamma.powi(i as i32) * w.rewards[i]).sum();
            if l < k {
                let s = Array2::from_shape_vec((1, 3), w.states[l].clone()).unwrap();
                let a = Array2::from_shape_vec((1, 1), w.actions[l].clone()).unwrap();
                let q = agent.target_critic.predict(concat_cols(s.view(), a.view()).view()).unwrap()[[0, 0]];
                term += gamma.powi(l as i32) * q;
            }
            expected += term / horizon as f64;
        }
        assert!((target - expected).abs() < 1e-12, "k={k}: {target} vs {expected}");
    }
    // the last window has a single real step, so its target is that reward
    let last = windows.iter().zip(&targets).find(|(w, _)| w.real_len() == 1).unwrap();
    assert!((last.1 - last.0.rewards[0]).abs() < 1e-12);
}

fn random_batch(horizon: usize, n: usize, rng: &mut ChaCha8Rng) -> Vec<MultiStateSample> {
    let mut buffer = RingBuffer::new(1000, horizon, 3, 1);
    let mut builder = WindowBuilder::new(horizon);
    let mut prev: Option<Transition> = None;
    for i in 0..n + horizon {
        let mut t = transition(rng, i % 9 == 8);
        if let Some(p) = prev.as_ref().filter(|p| !p.terminated) {
            t.state = p.next_state.clone();
        }
        builder.push_transition(&mut buffer, t.clone()).unwrap();
        if t.terminated {
            builder.finalize_episode(&mut buffer).unwrap();
        }
        prev = Some(t);
    }
    buffer.iter().take(n).cloned().collect()
}

#[test]
fn critic_step_reduces_loss_on_its_batch() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let trials = 100;
    let mut descents = 0;
    for _ in 0..trials {
        let config = small(Algo::Msddpg, 3, ActionMode::Loaded);
        let mut agent = DdpgAgent::new(config, 3, ActionBounds::symmetric(1, 2.0), &mut rng).unwrap();
        let batch = random_batch(3, 32, &mut rng);
        let refs: Vec<&MultiStateSample> = batch.iter().collect();
        let targets = agent.compute_targets(&refs).unwrap();
        let loss = |agent: &DdpgAgent| {
            let s = Array2::from_shape_fn((refs.len(), 3), |(i, j)| refs[i].states[0][j]);
            let a = Array2::from_shape_fn((refs.len(), 1), |(i, _)| refs[i].actions[0][0]);
            let q = agent.critic.predict(concat_cols(s.view(), a.view()).view()).unwrap();
            critic_objective(&q.column(0).to_vec(), &targets).unwrap()
        };
        let before = loss(&agent);
        agent.update_on(&refs).unwrap();
        if loss(&agent) < before {
            descents += 1;
        }
    }
    assert!(descents * 100 >= 95 * trials, "{descents}/{trials}");
}

#[test]
fn soft_updates_follow_polyak_averaging() {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let config = small(Algo::Mpddpg, 2, ActionMode::Loaded);
    let tau = config.tau;
    let mut agent = DdpgAgent::new(config, 3, ActionBounds::symmetric(1, 2.0), &mut rng).unwrap();
    let batch = random_batch(2, 16, &mut rng);
    let refs: Vec<&MultiStateSample> = batch.iter().collect();
    for _ in 0..3 {
        let old_target = agent.target_critic.params().to_vec();
        let old_actor_target = agent.target_actor.params().to_vec();
        agent.update_on(&refs).unwrap();
        for ((t, o), n) in agent.target_critic.params().iter().zip(&old_target).zip(agent.critic.params()) {
            assert!((t - ((1.0 - tau) * o + tau * n)).abs() < 1e-15);
        }
        for ((t, o), n) in agent.target_actor.params().iter().zip(&old_actor_target).zip(agent.actor.params()) {
            assert!((t - ((1.0 - tau) * o + tau * n)).abs() < 1e-15);
        }
    }

    let config = small(Algo::Mssac, 2, ActionMode::Generated);
    let mut sac = SacAgent::new(config, 3, ActionBounds::symmetric(1, 2.0), &mut rng).unwrap();
    let old: Vec<Vec<f64>> = sac.target_critics.iter().map(|c| c.params().to_vec()).collect();
    sac.update_on(&refs, &mut rng).unwrap();
    for k in 0..2 {
        for ((t, o), n) in sac.target_critics[k].params().iter().zip(&old[k]).zip(sac.critics[k].params()) {
            assert!((t - ((1.0 - tau) * o + tau * n)).abs() < 1e-15);
        }
    }
}

#[test]
fn actions_stay_in_bounds_and_greedy_actions_are_deterministic() {
    let bounds = ActionBounds::new(vec![-1.0, 0.0], vec![3.0, 0.5]);
    for algo in [Algo::Msddpg, Algo::Mssac] {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let mut agent: Box<dyn Agent> = build_agent(small(algo, 2, ActionMode::Loaded), 3, bounds.clone(), &mut rng).unwrap();
        agent.begin_episode();
        for _ in 0..500 {
            let s: Vec<f64> = (0..3).map(|_| rng.random_range(-5.0..5.0)).collect();
            let a = agent.act(&s, true, &mut rng).unwrap();
            assert!(bounds.check(&a).is_ok(), "{a:?}");
            let g1 = agent.act(&s, false, &mut rng).unwrap();
            let g2 = agent.act(&s, false, &mut rng).unwrap();
            assert_eq!(g1, g2);
            assert!(bounds.check(&g1).is_ok());
        }
        assert!(agent.act(&[0.0, 1.0], false, &mut rng).is_err());
    }
}
