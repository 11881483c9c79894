//! Desk-scale environments: parametric finite MDP generators for the
//! convergence lab and a torque-limited pendulum for continuous control.

use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::mdp::{
    ActionBounds, EnvError, Environment, FiniteMdp, FiniteMdpEnv, MdpError, StateVec, Transition,
};

#[derive(Debug, Error)]
pub enum SpecError {
    #[error("chain length {0} must be at least 2")]
    ChainLength(usize),
    #[error("slip probability {0} outside [0, 1)")]
    Slip(f64),
    #[error("discount {0} outside (0, 1)")]
    Discount(f64),
    #[error("non-finite reward in spec")]
    Reward,
    #[error(transparent)]
    Mdp(#[from] MdpError),
}

pub const LEFT: usize = 0;
pub const RIGHT: usize = 1;

/// A 1-D corridor with a rewarding, terminal rightmost cell.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ChainSpec {
    pub length: usize,
    pub slip_prob: f64,
    pub right_reward: f64,
    pub step_reward: f64,
    pub gamma: f64,
}

/// Builds the chain MDP. Action [`LEFT`] / [`RIGHT`] moves as intended with
/// probability `1 - slip_prob` and the opposite way otherwise; the leftmost
/// cell has a wall. Entering the rightmost cell pays `right_reward` and ends
/// the episode; that cell is absorbing with zero reward.
pub fn make_chain(spec: &ChainSpec) -> Result<FiniteMdp, SpecError> {
    if spec.length < 2 {
        return Err(SpecError::ChainLength(spec.length));
    }
    if !(0.0..1.0).contains(&spec.slip_prob) {
        return Err(SpecError::Slip(spec.slip_prob));
    }
    if !(spec.gamma > 0.0 && spec.gamma < 1.0) {
        return Err(SpecError::Discount(spec.gamma));
    }
    if !spec.right_reward.is_finite() || !spec.step_reward.is_finite() {
        return Err(SpecError::Reward);
    }
    let n = spec.length;
    let goal = n - 1;
    let mut mdp = FiniteMdp::new(n, 2, spec.gamma);
    let reward_for = |next: usize| if next == goal { spec.right_reward } else { spec.step_reward };
    for s in 0..goal {
        let left = s.saturating_sub(1);
        let right = s + 1;
        for (action, intended, other) in [(LEFT, left, right), (RIGHT, right, left)] {
            let mut add = |next: usize, p: f64| {
                if p > 0.0 {
                    let i = mdp.index(s, action, next);
                    mdp.trans_prob[i] += p;
                    mdp.reward[i] = reward_for(next);
                }
            };
            add(intended, 1.0 - spec.slip_prob);
            add(other, spec.slip_prob);
        }
    }
    for a in 0..2 {
        mdp.set(goal, a, goal, 1.0, 0.0);
    }
    mdp.terminal_states.insert(goal);
    mdp.reward_bound = Some(spec.right_reward.abs().max(spec.step_reward.abs()));
    mdp.ensure_valid()?;
    Ok(mdp)
}

/// Random dense-ish MDP for property tests: rows drawn from normalized
/// exponential weights with roughly 30% structural zeros, rewards uniform in
/// `[-1, 1]`. With `terminal` set, the last state is absorbing and terminal.
pub fn random_mdp<R: Rng + ?Sized>(
    num_states: usize,
    num_actions: usize,
    gamma: f64,
    terminal: bool,
    rng: &mut R,
) -> FiniteMdp {
    let mut mdp = FiniteMdp::new(num_states, num_actions, gamma);
    for s in 0..num_states {
        for a in 0..num_actions {
            if terminal && s + 1 == num_states {
                mdp.set(s, a, s, 1.0, 0.0);
                continue;
            }
            let mut weights: Vec<f64> = (0..num_states)
                .map(|_| {
                    if rng.random::<f64>() < 0.3 {
                        0.0
                    } else {
                        -(1.0 - rng.random::<f64>()).ln()
                    }
                })
                .collect();
            if weights.iter().all(|&w| w == 0.0) {
                weights[rng.random_range(0..num_states)] = 1.0;
            }
            let total: f64 = weights.iter().sum();
            for (next, w) in weights.into_iter().enumerate() {
                if w > 0.0 {
                    mdp.set(s, a, next, w / total, rng.random_range(-1.0..=1.0));
                }
            }
        }
    }
    if terminal {
        mdp.terminal_states.insert(num_states - 1);
    }
    mdp.reward_bound = Some(1.0);
    mdp
}

/// Classic torque-limited pendulum; `θ = 0` is upright.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PendulumSpec {
    pub gravity: f64,
    pub mass: f64,
    pub length: f64,
    pub dt: f64,
    pub max_torque: f64,
    pub max_speed: f64,
    pub max_episode_steps: usize,
}

impl Default for PendulumSpec {
    fn default() -> Self {
        Self {
            gravity: 10.0,
            mass: 1.0,
            length: 1.0,
            dt: 0.05,
            max_torque: 2.0,
            max_speed: 8.0,
            max_episode_steps: 200,
        }
    }
}

impl PendulumSpec {
    /// Lower reward bound `-(π² + 0.1·ω_max² + 0.001·τ_max²)`.
    pub fn min_reward(&self) -> f64 {
        -(PI * PI + 0.1 * self.max_speed.powi(2) + 0.001 * self.max_torque.powi(2))
    }
}

/// Initial angle is drawn from `[-RESET_ANGLE, RESET_ANGLE)`.
pub const RESET_ANGLE: f64 = PI;
/// Initial angular velocity is drawn from `[-RESET_SPEED, RESET_SPEED)`.
pub const RESET_SPEED: f64 = 1.0;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PendulumState {
    pub theta: f64,
    pub omega: f64,
}

impl PendulumState {
    pub fn observation(&self) -> StateVec {
        vec![self.theta.cos(), self.theta.sin(), self.omega]
    }
}

/// Wraps an angle into `(-π, π]`.
pub fn wrap_angle(theta: f64) -> f64 {
    PI - (PI - theta).rem_euclid(2.0 * PI)
}

/// One semi-implicit Euler step. The reward is charged on the pre-step state
/// and the applied torque.
pub fn pendulum_step(
    spec: &PendulumSpec,
    state: PendulumState,
    torque: f64,
) -> Result<(PendulumState, f64), EnvError> {
    if !(torque >= -spec.max_torque && torque <= spec.max_torque) {
        return Err(EnvError::ActionOutOfBounds {
            dim: 0,
            value: torque,
            low: -spec.max_torque,
            high: spec.max_torque,
        });
    }
    let angle = wrap_angle(state.theta);
    let reward = -(angle * angle + 0.1 * state.omega * state.omega + 0.001 * torque * torque);
    let accel = 1.5 * spec.gravity / spec.length * state.theta.sin()
        + 3.0 * torque / (spec.mass * spec.length * spec.length);
    let omega = (state.omega + accel * spec.dt).clamp(-spec.max_speed, spec.max_speed);
    let theta = state.theta + omega * spec.dt;
    Ok((PendulumState { theta, omega }, reward))
}

#[derive(Debug, Clone)]
pub struct Pendulum {
    spec: PendulumSpec,
    bounds: ActionBounds,
    state: Option<PendulumState>,
}

impl Pendulum {
    pub fn new(spec: PendulumSpec) -> Self {
        Self {
            bounds: ActionBounds::symmetric(1, spec.max_torque),
            spec,
            state: None,
        }
    }

    pub fn spec(&self) -> &PendulumSpec {
        &self.spec
    }

    pub fn physical_state(&self) -> Option<PendulumState> {
        self.state
    }

    pub fn set_physical_state(&mut self, state: PendulumState) {
        self.state = Some(state);
    }
}

impl Default for Pendulum {
    fn default() -> Self {
        Self::new(PendulumSpec::default())
    }
}

impl Environment for Pendulum {
    fn name(&self) -> &str {
        "pendulum"
    }

    fn state_dim(&self) -> usize {
        3
    }

    fn action_bounds(&self) -> &ActionBounds {
        &self.bounds
    }

    fn reward_bound(&self) -> f64 {
        -self.spec.min_reward()
    }

    fn max_episode_steps(&self) -> Option<usize> {
        Some(self.spec.max_episode_steps)
    }

    fn reset(&mut self, seed: u64) -> StateVec {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let state = PendulumState {
            theta: rng.random_range(-RESET_ANGLE..RESET_ANGLE),
            omega: rng.random_range(-RESET_SPEED..RESET_SPEED),
        };
        self.state = Some(state);
        state.observation()
    }

    fn step(&mut self, action: &[f64]) -> Result<Transition, EnvError> {
        let state = self.state.ok_or(EnvError::NotReset)?;
        self.bounds.check(action)?;
        let (next, reward) = pendulum_step(&self.spec, state, action[0])?;
        self.state = Some(next);
        Ok(Transition {
            state: state.observation(),
            action: action.to_vec(),
            reward,
            next_state: next.observation(),
            terminated: false,
        })
    }
}

/// Continuous-control view of a finite MDP: one-hot states and a single
/// action in `[-1, 1]` binned uniformly onto the discrete actions.
#[derive(Debug, Clone)]
pub struct FiniteControlEnv {
    name: String,
    inner: FiniteMdpEnv,
    bounds: ActionBounds,
    max_steps: usize,
}

impl FiniteControlEnv {
    pub fn new(name: &str, mdp: FiniteMdp, start_state: usize, max_steps: usize) -> Result<Self, MdpError> {
        Ok(Self {
            name: name.to_string(),
            inner: FiniteMdpEnv::new(mdp, start_state)?,
            bounds: ActionBounds::symmetric(1, 1.0),
            max_steps,
        })
    }

    /// Chain with the default desk-scale parameters, exposed as `chain` on the CLI.
    pub fn chain() -> Self {
        let mdp = make_chain(&ChainSpec {
            length: 8,
            slip_prob: 0.1,
            right_reward: 10.0,
            step_reward: -0.1,
            gamma: 0.99,
        })
        .expect("default chain is valid");
        Self::new("chain", mdp, 0, 100).expect("default chain is valid")
    }

    pub fn action_index(&self, value: f64) -> usize {
        let n = self.inner.mdp().num_actions;
        let scaled = ((value + 1.0) * 0.5 * n as f64).floor();
        (scaled.max(0.0) as usize).min(n - 1)
    }

    fn one_hot(&self, s: usize) -> StateVec {
        let mut v = vec![0.0; self.inner.mdp().num_states];
        v[s] = 1.0;
        v
    }
}

impl Environment for FiniteControlEnv {
    fn name(&self) -> &str {
        &self.name
    }

    fn state_dim(&self) -> usize {
        self.inner.mdp().num_states
    }

    fn action_bounds(&self) -> &ActionBounds {
        &self.bounds
    }

    fn reward_bound(&self) -> f64 {
        self.inner.mdp().max_abs_reward()
    }

    fn max_episode_steps(&self) -> Option<usize> {
        Some(self.max_steps)
    }

    fn reset(&mut self, seed: u64) -> StateVec {
        let s = self.inner.reset(seed);
        self.one_hot(s)
    }

    fn step(&mut self, action: &[f64]) -> Result<Transition, EnvError> {
        self.bounds.check(action)?;
        let t = self.inner.step(self.action_index(action[0]))?;
        Ok(Transition {
            state: self.one_hot(t.state),
            action: action.to_vec(),
            reward: t.reward,
            next_state: self.one_hot(t.next_state),
            terminated: t.terminated,
        })
    }
}

/// Environment names accepted by [`make_env`].
pub const ENV_NAMES: &[&str] = &["pendulum", "chain"];

pub fn make_env(name: &str) -> Option<Box<dyn Environment + Send>> {
    match name {
        "pendulum" => Some(Box::new(Pendulum::default())),
        "chain" => Some(Box::new(FiniteControlEnv::chain())),
        _ => None,
    }
}
