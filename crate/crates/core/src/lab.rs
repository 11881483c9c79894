//! Exact tools for tabular MSTD Q-learning on finite MDPs: the `l`-step
//! optimality operator `H^l`, its average `H̄ = (1/L) Σ_l H^l`, fixed-point
//! iteration, a value-iteration reference, contraction measurements,
//! Robbins-Monro step sizes and sampled convergence runs.
//!
//! `H^l` maps `q` to `E[Σ_{i≤l} γ^{i-1} r_i + γ^l max_b q(Y_l, b)]`, where the
//! first transition leaves `(s, a)` and later actions follow a fixed behavior
//! policy. Terminal states are absorbing with zero reward; the landing term is
//! kept for them, so `H^l` commutes exactly with constant shifts and
//! `q(terminal, ·) = 0` at every fixed point.

use std::collections::VecDeque;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use thiserror::Error;

use crate::agents::{tabular_mstd_update, AgentError, QTable, TabularWindow};
use crate::mdp::{sample_index, FiniteMdp, MdpError};

/// Rows of a behavior policy must sum to one within this tolerance.
pub const BEHAVIOR_TOLERANCE: f64 = 1e-12;

#[derive(Debug, Error)]
pub enum LabError {
    #[error("operator budget exceeded: |S||A| = {state_actions}, l = {horizon} (limits {max_state_actions}, {max_horizon})")]
    Budget {
        state_actions: usize,
        horizon: usize,
        max_state_actions: usize,
        max_horizon: usize,
    },
    #[error("horizon must be at least 1")]
    Horizon,
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("invalid behavior policy: {0}")]
    Behavior(String),
    #[error("no convergence after {iterations} iterations (residual {residual:e})")]
    NonConvergence { iterations: usize, residual: f64 },
    #[error("invalid step-size schedule: {0}")]
    Schedule(String),
    #[error("{0}")]
    Invalid(String),
    #[error(transparent)]
    Mdp(#[from] MdpError),
    #[error(transparent)]
    Agent(#[from] AgentError),
}

/// Stationary action distribution per state.
#[derive(Debug, Clone, PartialEq)]
pub struct BehaviorPolicy {
    num_states: usize,
    num_actions: usize,
    probs: Vec<f64>,
}

impl BehaviorPolicy {
    pub fn uniform(num_states: usize, num_actions: usize) -> Self {
        Self {
            num_states,
            num_actions,
            probs: vec![1.0 / num_actions as f64; num_states * num_actions],
        }
    }

    pub fn new(num_states: usize, num_actions: usize, probs: Vec<f64>) -> Result<Self, LabError> {
        if num_actions == 0 || probs.len() != num_states * num_actions {
            return Err(LabError::Behavior(format!(
                "{} probabilities for {num_states} states x {num_actions} actions",
                probs.len()
            )));
        }
        for (s, row) in probs.chunks(num_actions).enumerate() {
            if row.iter().any(|p| !(p.is_finite() && *p >= 0.0)) {
                return Err(LabError::Behavior(format!("state {s} has a negative or non-finite entry")));
            }
            let sum: f64 = row.iter().sum();
            if (sum - 1.0).abs() > BEHAVIOR_TOLERANCE {
                return Err(LabError::Behavior(format!("state {s} sums to {sum}")));
            }
        }
        Ok(Self {
            num_states,
            num_actions,
            probs,
        })
    }

    pub fn row(&self, s: usize) -> &[f64] {
        &self.probs[s * self.num_actions..(s + 1) * self.num_actions]
    }

    pub fn has_full_support(&self) -> bool {
        self.probs.iter().all(|&p| p > 0.0)
    }

    fn check_against(&self, mdp: &FiniteMdp) -> Result<(), LabError> {
        if self.num_states != mdp.num_states || self.num_actions != mdp.num_actions {
            return Err(LabError::Shape(format!(
                "behavior is {}x{}, MDP is {}x{}",
                self.num_states, self.num_actions, mdp.num_states, mdp.num_actions
            )));
        }
        Ok(())
    }
}

/// Size limits for building an operator.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct OperatorBudget {
    pub max_state_actions: usize,
    pub max_horizon: usize,
}

impl Default for OperatorBudget {
    fn default() -> Self {
        Self {
            max_state_actions: 64,
            max_horizon: 5,
        }
    }
}

impl OperatorBudget {
    fn check(&self, mdp: &FiniteMdp, horizon: usize) -> Result<(), LabError> {
        let state_actions = mdp.num_states * mdp.num_actions;
        if state_actions > self.max_state_actions || horizon > self.max_horizon {
            return Err(LabError::Budget {
                state_actions,
                horizon,
                max_state_actions: self.max_state_actions,
                max_horizon: self.max_horizon,
            });
        }
        Ok(())
    }
}

/// `H^l` in closed form: for every `(s, a)` the expected discounted reward
/// over `l` steps and the distribution of the landing state, both obtained by
/// propagating the state distribution one transition at a time.
#[derive(Debug, Clone, PartialEq)]
pub struct HOperator {
    horizon: usize,
    num_states: usize,
    num_actions: usize,
    landing_discount: f64,
    reward: Vec<f64>,
    landing: Vec<f64>,
}

impl HOperator {
    pub fn new(mdp: &FiniteMdp, horizon: usize, behavior: &BehaviorPolicy) -> Result<Self, LabError> {
        Self::with_budget(mdp, horizon, behavior, &OperatorBudget::default())
    }

    pub fn with_budget(mdp: &FiniteMdp, horizon: usize, behavior: &BehaviorPolicy, budget: &OperatorBudget) -> Result<Self, LabError> {
        if horizon == 0 {
            return Err(LabError::Horizon);
        }
        mdp.ensure_valid()?;
        behavior.check_against(mdp)?;
        budget.check(mdp, horizon)?;
        let (ns, na) = (mdp.num_states, mdp.num_actions);
        let gamma = mdp.discount;
        let mut reward = vec![0.0; ns * na];
        let mut landing = vec![0.0; ns * na * ns];
        let mut next = vec![0.0; ns];
        for s in 0..ns {
            for a in 0..na {
                let mut dist = vec![0.0; ns];
                let mut expected = 0.0;
                // first transition from (s, a)
                if mdp.is_terminal(s) {
                    dist[s] = 1.0;
                } else {
                    for (y, (&p, &r)) in mdp.row(s, a).iter().zip(mdp.reward_row(s, a)).enumerate() {
                        dist[y] += p;
                        expected += p * r;
                    }
                }
                let mut discount = 1.0;
                for _ in 1..horizon {
                    discount *= gamma;
                    next.iter_mut().for_each(|v| *v = 0.0);
                    for x in 0..ns {
                        let mass = dist[x];
                        if mass == 0.0 {
                            continue;
                        }
                        if mdp.is_terminal(x) {
                            next[x] += mass;
                            continue;
                        }
                        for (b, &pb) in behavior.row(x).iter().enumerate() {
                            let w = mass * pb;
                            if w == 0.0 {
                                continue;
                            }
                            for (y, (&p, &r)) in mdp.row(x, b).iter().zip(mdp.reward_row(x, b)).enumerate() {
                                next[y] += w * p;
                                expected += discount * w * p * r;
                            }
                        }
                    }
                    std::mem::swap(&mut dist, &mut next);
                }
                let k = s * na + a;
                reward[k] = expected;
                landing[k * ns..(k + 1) * ns].copy_from_slice(&dist);
            }
        }
        Ok(Self {
            horizon,
            num_states: ns,
            num_actions: na,
            landing_discount: gamma.powi(horizon as i32),
            reward,
            landing,
        })
    }

    pub fn horizon(&self) -> usize {
        self.horizon
    }

    /// Contraction modulus `γ^l`.
    pub fn modulus(&self) -> f64 {
        self.landing_discount
    }

    /// Expected `l`-step discounted reward from `(s, a)`.
    pub fn expected_reward(&self, s: usize, a: usize) -> f64 {
        self.reward[s * self.num_actions + a]
    }

    /// Probability of landing in `y` after `l` steps from `(s, a)`.
    pub fn landing_prob(&self, s: usize, a: usize, y: usize) -> f64 {
        self.landing[(s * self.num_actions + a) * self.num_states + y]
    }

    pub fn apply(&self, q: &QTable) -> Result<QTable, LabError> {
        if q.num_states() != self.num_states || q.num_actions() != self.num_actions {
            return Err(LabError::Shape(format!(
                "q is {}x{}, operator is {}x{}",
                q.num_states(),
                q.num_actions(),
                self.num_states,
                self.num_actions
            )));
        }
        let maxes: Vec<f64> = (0..self.num_states).map(|y| q.max_value(y)).collect();
        let ns = self.num_states;
        let values = self
            .reward
            .iter()
            .enumerate()
            .map(|(k, &r)| {
                let row = &self.landing[k * ns..(k + 1) * ns];
                let bootstrap: f64 = row.iter().zip(&maxes).map(|(p, m)| p * m).sum();
                r + self.landing_discount * bootstrap
            })
            .collect();
        Ok(QTable::from_values(self.num_states, self.num_actions, values)?)
    }
}

/// `H̄ = (1/L) Σ_{l=1..L} H^l`.
#[derive(Debug, Clone, PartialEq)]
pub struct AveragedOperator {
    parts: Vec<HOperator>,
}

impl AveragedOperator {
    pub fn new(mdp: &FiniteMdp, horizon: usize, behavior: &BehaviorPolicy) -> Result<Self, LabError> {
        Self::with_budget(mdp, horizon, behavior, &OperatorBudget::default())
    }

    pub fn with_budget(mdp: &FiniteMdp, horizon: usize, behavior: &BehaviorPolicy, budget: &OperatorBudget) -> Result<Self, LabError> {
        if horizon == 0 {
            return Err(LabError::Horizon);
        }
        let parts = (1..=horizon)
            .map(|l| HOperator::with_budget(mdp, l, behavior, budget))
            .collect::<Result<_, _>>()?;
        Ok(Self { parts })
    }

    pub fn horizon(&self) -> usize {
        self.parts.len()
    }

    pub fn parts(&self) -> &[HOperator] {
        &self.parts
    }

    /// `(1/L) Σ_l γ^l`, which is below `γ` for `L > 1`.
    pub fn modulus(&self) -> f64 {
        self.parts.iter().map(HOperator::modulus).sum::<f64>() / self.parts.len() as f64
    }

    pub fn apply(&self, q: &QTable) -> Result<QTable, LabError> {
        let mut sum = self.parts[0].apply(q)?;
        for part in &self.parts[1..] {
            let next = part.apply(q)?;
            for (acc, v) in sum.values_mut().iter_mut().zip(next.values()) {
                *acc += v;
            }
        }
        let n = self.parts.len() as f64;
        sum.values_mut().iter_mut().for_each(|v| *v /= n);
        Ok(sum)
    }
}

pub fn apply_h_l(q: &QTable, mdp: &FiniteMdp, l: usize, behavior: &BehaviorPolicy) -> Result<QTable, LabError> {
    HOperator::new(mdp, l, behavior)?.apply(q)
}

pub fn apply_h_bar(q: &QTable, mdp: &FiniteMdp, horizon: usize, behavior: &BehaviorPolicy) -> Result<QTable, LabError> {
    AveragedOperator::new(mdp, horizon, behavior)?.apply(q)
}

#[derive(Debug, Clone, PartialEq)]
pub struct FixedPointResult {
    pub q_f: QTable,
    pub iterations: usize,
    pub final_residual: f64,
    /// `‖q_{k+1} − q_k‖∞` per iteration.
    pub residuals: Vec<f64>,
}

/// Iterates `q <- operator(q)` until successive iterates differ by at most
/// `tol` in the sup norm.
pub fn fixed_point<F>(mut operator: F, q0: QTable, tol: f64, max_iter: usize) -> Result<FixedPointResult, LabError>
where
    F: FnMut(&QTable) -> Result<QTable, LabError>,
{
    if !(tol > 0.0) {
        return Err(LabError::Invalid(format!("tolerance {tol} must be positive")));
    }
    let mut q = q0;
    let mut residuals = Vec::new();
    for it in 1..=max_iter {
        let next = operator(&q)?;
        let residual = next.distance(&q);
        residuals.push(residual);
        q = next;
        if residual <= tol {
            return Ok(FixedPointResult {
                q_f: q,
                iterations: it,
                final_residual: residual,
                residuals,
            });
        }
    }
    Err(LabError::NonConvergence {
        iterations: max_iter,
        residual: residuals.last().copied().unwrap_or(f64::INFINITY),
    })
}

/// Fixed point of `H̄` from `q ≡ 0`.
pub fn averaged_fixed_point(mdp: &FiniteMdp, horizon: usize, behavior: &BehaviorPolicy, tol: f64) -> Result<FixedPointResult, LabError> {
    let op = AveragedOperator::new(mdp, horizon, behavior)?;
    let max_iter = iteration_bound(op.modulus(), mdp.max_abs_reward(), tol);
    fixed_point(|q| op.apply(q), QTable::zeros(mdp.num_states, mdp.num_actions), tol, max_iter)
}

fn iteration_bound(modulus: f64, reward_scale: f64, tol: f64) -> usize {
    let scale = (reward_scale / (1.0 - modulus)).max(1.0);
    let needed = ((tol / scale).ln() / modulus.ln()).ceil();
    (needed.max(0.0) as usize).saturating_mul(2) + 100
}

/// Bellman-optimality Q-values by classical value iteration. Terminal states
/// have value zero. Iteration stops once the a-posteriori bound guarantees
/// `‖Q − Q*‖∞ ≤ tol`.
pub fn value_iteration(mdp: &FiniteMdp, tol: f64) -> Result<QTable, LabError> {
    mdp.ensure_valid()?;
    if !(tol > 0.0) {
        return Err(LabError::Invalid(format!("tolerance {tol} must be positive")));
    }
    let (ns, na, gamma) = (mdp.num_states, mdp.num_actions, mdp.discount);
    let mut v = vec![0.0; ns];
    let mut q = QTable::zeros(ns, na);
    let stop = tol * (1.0 - gamma) / gamma;
    loop {
        let mut delta: f64 = 0.0;
        for s in 0..ns {
            if mdp.is_terminal(s) {
                continue;
            }
            for a in 0..na {
                let mut total = 0.0;
                for y in 0..ns {
                    let p = mdp.prob(s, a, y);
                    if p != 0.0 {
                        total += p * (mdp.reward(s, a, y) + gamma * v[y]);
                    }
                }
                q.set(s, a, total);
            }
        }
        for s in 0..ns {
            let new_v = if mdp.is_terminal(s) { 0.0 } else { q.max_value(s) };
            delta = delta.max((new_v - v[s]).abs());
            v[s] = new_v;
        }
        if delta <= stop {
            return Ok(q);
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ContractionReport {
    pub horizon: usize,
    /// The modulus the ratios must not exceed.
    pub bound: f64,
    pub max_ratio: f64,
    pub trials: usize,
}

impl ContractionReport {
    pub fn holds(&self, slack: f64) -> bool {
        self.max_ratio <= self.bound + slack
    }
}

/// Uniform entries in `[-10, 10]`.
pub fn random_q<R: Rng + ?Sized>(num_states: usize, num_actions: usize, rng: &mut R) -> QTable {
    let values = (0..num_states * num_actions).map(|_| rng.random_range(-10.0..=10.0)).collect();
    QTable::from_values(num_states, num_actions, values).expect("sizes match")
}

fn max_ratio<R, F>(ns: usize, na: usize, trials: usize, rng: &mut R, apply: F) -> Result<f64, LabError>
where
    R: Rng + ?Sized,
    F: Fn(&QTable) -> Result<QTable, LabError>,
{
    if trials == 0 {
        return Err(LabError::Invalid("at least one trial required".into()));
    }
    let mut worst: f64 = 0.0;
    for _ in 0..trials {
        let (q1, q2) = loop {
            let q1 = random_q(ns, na, rng);
            let q2 = random_q(ns, na, rng);
            if q1.distance(&q2) > 0.0 {
                break (q1, q2);
            }
        };
        let ratio = apply(&q1)?.distance(&apply(&q2)?) / q1.distance(&q2);
        worst = worst.max(ratio);
    }
    Ok(worst)
}

/// Largest observed `‖H^l q1 − H^l q2‖∞ / ‖q1 − q2‖∞` over random pairs.
pub fn contraction_test<R: Rng + ?Sized>(
    mdp: &FiniteMdp,
    l: usize,
    behavior: &BehaviorPolicy,
    trials: usize,
    rng: &mut R,
) -> Result<ContractionReport, LabError> {
    let op = HOperator::new(mdp, l, behavior)?;
    let max_ratio = max_ratio(mdp.num_states, mdp.num_actions, trials, rng, |q| op.apply(q))?;
    Ok(ContractionReport {
        horizon: l,
        bound: op.modulus(),
        max_ratio,
        trials,
    })
}

/// Same measurement for `H̄`, bounded by `(1/L) Σ_l γ^l`.
pub fn averaged_contraction_test<R: Rng + ?Sized>(
    mdp: &FiniteMdp,
    horizon: usize,
    behavior: &BehaviorPolicy,
    trials: usize,
    rng: &mut R,
) -> Result<ContractionReport, LabError> {
    let op = AveragedOperator::new(mdp, horizon, behavior)?;
    let max_ratio = max_ratio(mdp.num_states, mdp.num_actions, trials, rng, |q| op.apply(q))?;
    Ok(ContractionReport {
        horizon,
        bound: op.modulus(),
        max_ratio,
        trials,
    })
}

/// Step size `α_t` for update number `t`.
pub trait StepSize {
    fn rate(&self, t: u64) -> f64;
    fn validate(&self) -> Result<(), LabError>;
}

/// `α_t = α0 / (1 + t/t0)^κ`; with `κ ∈ (0.5, 1]` the rates sum to infinity
/// while their squares are summable.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LrSchedule {
    pub alpha0: f64,
    pub t0: f64,
    pub kappa: f64,
}

impl LrSchedule {
    pub fn new(alpha0: f64, t0: f64, kappa: f64) -> Result<Self, LabError> {
        let s = Self { alpha0, t0, kappa };
        s.validate()?;
        Ok(s)
    }
}

impl StepSize for LrSchedule {
    fn rate(&self, t: u64) -> f64 {
        self.alpha0 / (1.0 + t as f64 / self.t0).powf(self.kappa)
    }

    fn validate(&self) -> Result<(), LabError> {
        if !(self.alpha0 > 0.0 && self.alpha0 <= 1.0) {
            return Err(LabError::Schedule(format!("alpha0 = {} outside (0, 1]", self.alpha0)));
        }
        if !(self.t0 > 0.0 && self.t0.is_finite()) {
            return Err(LabError::Schedule(format!("t0 = {} must be positive", self.t0)));
        }
        if !(self.kappa > 0.5 && self.kappa <= 1.0) {
            return Err(LabError::Schedule(format!("kappa = {} outside (0.5, 1]", self.kappa)));
        }
        Ok(())
    }
}

/// Constant step size. Not a Robbins-Monro schedule; useful as a baseline
/// and for frozen-table diagnostics with rate 0.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConstantStep(pub f64);

impl StepSize for ConstantStep {
    fn rate(&self, _t: u64) -> f64 {
        self.0
    }

    fn validate(&self) -> Result<(), LabError> {
        if !(0.0..=1.0).contains(&self.0) {
            return Err(LabError::Schedule(format!("constant rate {} outside [0, 1]", self.0)));
        }
        Ok(())
    }
}

/// Number of updates between residual records.
pub const RESIDUAL_EVERY: u64 = 1000;

#[derive(Debug, Clone, PartialEq)]
pub struct ConvergenceTrace {
    /// `(update count, ‖Q_t − Q^f‖∞)`, starting with the initial table.
    pub residuals: Vec<(u64, f64)>,
    pub q: QTable,
}

impl ConvergenceTrace {
    pub fn final_residual(&self) -> f64 {
        self.residuals.last().map_or(f64::NAN, |r| r.1)
    }
}

#[derive(Debug, Clone, Copy)]
struct PathStep {
    state: usize,
    action: usize,
    reward: f64,
}

/// Tabular MSTD Q-learning from `Q ≡ 0` along simulated behavior-policy
/// trajectories. Every non-terminal time step yields one update of its
/// state-action pair from the following `L` transitions; windows that reach a
/// terminal state continue inside it with zero reward. After termination the
/// next episode starts from a uniformly drawn non-terminal state.
#[allow(clippy::too_many_arguments)]
pub fn run_tabular_convergence(
    mdp: &FiniteMdp,
    horizon: usize,
    behavior: &BehaviorPolicy,
    schedule: &dyn StepSize,
    q_f: &QTable,
    updates: u64,
    seed: u64,
) -> Result<ConvergenceTrace, LabError> {
    schedule.validate()?;
    mdp.ensure_valid()?;
    behavior.check_against(mdp)?;
    if horizon == 0 {
        return Err(LabError::Horizon);
    }
    if q_f.num_states() != mdp.num_states || q_f.num_actions() != mdp.num_actions {
        return Err(LabError::Shape("reference table does not match the MDP".into()));
    }
    let starts: Vec<usize> = (0..mdp.num_states).filter(|&s| !mdp.is_terminal(s)).collect();
    if starts.is_empty() {
        return Err(LabError::Invalid("every state is terminal".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut q = QTable::zeros(mdp.num_states, mdp.num_actions);
    let mut residuals = vec![(0, q.distance(q_f))];

    let mut path: VecDeque<PathStep> = VecDeque::with_capacity(horizon + 1);
    let mut current = starts[rng.random_range(0..starts.len())];
    let mut window = TabularWindow {
        states: Vec::with_capacity(horizon + 1),
        action: 0,
        rewards: Vec::with_capacity(horizon),
    };
    let mut t = 0u64;
    while t < updates {
        if path.is_empty() && mdp.is_terminal(current) {
            current = starts[rng.random_range(0..starts.len())];
        }
        // extend the path until it holds L transitions after its head
        while path.len() < horizon {
            let action = sample_index(behavior.row(current), &mut rng);
            let (next, reward) = if mdp.is_terminal(current) {
                (current, 0.0)
            } else {
                let y = sample_index(mdp.row(current, action), &mut rng);
                (y, mdp.reward(current, action, y))
            };
            path.push_back(PathStep {
                state: current,
                action,
                reward,
            });
            current = next;
        }
        let head = path[0];
        if mdp.is_terminal(head.state) {
            path.clear();
            continue;
        }
        window.states.clear();
        window.rewards.clear();
        window.states.extend(path.iter().map(|p| p.state));
        window.states.push(current);
        window.rewards.extend(path.iter().map(|p| p.reward));
        window.action = head.action;
        tabular_mstd_update(&mut q, &window, schedule.rate(t), mdp.discount)?;
        path.pop_front();
        t += 1;
        if t.is_multiple_of(RESIDUAL_EVERY) || t == updates {
            residuals.push((t, q.distance(q_f)));
        }
    }
    Ok(ConvergenceTrace { residuals, q })
}

/// Acceptance threshold on the final residual: `0.05 · max(1, ‖Q^f‖∞)`.
pub fn residual_tolerance(q_f: &QTable) -> f64 {
    0.05 * q_f.sup_norm().max(1.0)
}
