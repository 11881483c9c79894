//! TD targets and objectives.
//!
//! Everything here is a pure function of rewards, flags and Q evaluations
//! supplied by the caller. Horizon `l` refers to the state `S_l` of a window;
//! `q_values[l - 1]` is the evaluation at that state.
//!
//! Padding flags act as masks: a padded triplet `k` contributes neither its
//! reward `R_{k+1}` nor the Q value at its state `S_k`, and the terminal flag
//! removes the Q value at `S_L`. With these masks a terminal window yields the
//! truncated discounted reward sum exactly.

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TargetError {
    #[error("horizon must be at least 1")]
    Horizon,
    #[error("single-step targets require L = 1, got {0}")]
    SingleStepHorizon(usize),
    #[error("discount {0} outside (0, 1)")]
    Discount(f64),
    #[error("entropy coefficient {0} must be finite and non-negative")]
    Alpha(f64),
    #[error("log-probability missing for horizon {0}")]
    MissingLogProb(usize),
    #[error("expected {expected} Q evaluations, got {got}")]
    EvalCount { expected: usize, got: usize },
    #[error("objective over an empty batch")]
    EmptyBatch,
    #[error("prediction/target length mismatch: {0} vs {1}")]
    LengthMismatch(usize, usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum TargetKind {
    SingleStep,
    MultiStep,
    MultiState,
}

/// Where the actions at intermediate states come from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ActionMode {
    /// Stored actions at `S_1..S_{L-1}`, policy action at `S_L`.
    Loaded,
    /// Policy actions at every `S_l`.
    Generated,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Entropy {
    None,
    Soft(f64),
}

impl Entropy {
    pub fn alpha(&self) -> f64 {
        match *self {
            Entropy::None => 0.0,
            Entropy::Soft(a) => a,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TargetSpec {
    pub kind: TargetKind,
    pub horizon: usize,
    pub action_mode: ActionMode,
    pub entropy: Entropy,
    pub gamma: f64,
}

impl TargetSpec {
    pub fn new(
        kind: TargetKind,
        horizon: usize,
        action_mode: ActionMode,
        entropy: Entropy,
        gamma: f64,
    ) -> Result<Self, TargetError> {
        let spec = Self {
            kind,
            horizon,
            action_mode,
            entropy,
            gamma,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<(), TargetError> {
        if self.horizon == 0 {
            return Err(TargetError::Horizon);
        }
        if self.kind == TargetKind::SingleStep && self.horizon != 1 {
            return Err(TargetError::SingleStepHorizon(self.horizon));
        }
        if !(self.gamma > 0.0 && self.gamma < 1.0) {
            return Err(TargetError::Discount(self.gamma));
        }
        if let Entropy::Soft(a) = self.entropy {
            if !(a.is_finite() && a >= 0.0) {
                return Err(TargetError::Alpha(a));
            }
        }
        Ok(())
    }

    /// Horizons whose Q value enters the target, in increasing order.
    pub fn evaluated_horizons(&self) -> Vec<usize> {
        match self.kind {
            TargetKind::MultiState => (1..=self.horizon).collect(),
            TargetKind::SingleStep | TargetKind::MultiStep => vec![self.horizon],
        }
    }

    /// Whether the action at horizon `l` is taken from the buffer.
    pub fn uses_stored_action(&self, l: usize) -> bool {
        self.kind == TargetKind::MultiState && self.action_mode == ActionMode::Loaded && l < self.horizon
    }

    /// Target for one window. `evals` holds one evaluation per entry of
    /// [`TargetSpec::evaluated_horizons`]; entropy corrections are applied
    /// here according to the action mode.
    pub fn target(&self, rewards: &[f64], pad_flags: &[bool], terminal: bool, evals: &[QEval]) -> Result<f64, TargetError> {
        let expected = self.evaluated_horizons().len();
        if evals.len() != expected {
            return Err(TargetError::EvalCount { expected, got: evals.len() });
        }
        let evals = match self.entropy {
            Entropy::None => evals.to_vec(),
            Entropy::Soft(alpha) => match self.kind {
                TargetKind::MultiState => entropy_adjusted(self.action_mode, evals, alpha)?,
                // a single final term always carries the entropy correction
                TargetKind::SingleStep | TargetKind::MultiStep => entropy_adjusted(ActionMode::Generated, evals, alpha)?,
            },
        };
        Ok(match self.kind {
            TargetKind::SingleStep => single_step_target(rewards[0], evals[0], self.gamma, terminal),
            TargetKind::MultiStep => multi_step_target(rewards, pad_flags, evals[0], self.gamma, terminal),
            TargetKind::MultiState => mstd_target(rewards, pad_flags, &evals, self.gamma, terminal),
        })
    }
}

/// A critic evaluation, with the policy log-density of the evaluated action
/// when that action was sampled from a stochastic actor.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QEval {
    pub value: f64,
    pub log_prob: Option<f64>,
}

impl QEval {
    pub fn new(value: f64) -> Self {
        Self { value, log_prob: None }
    }

    pub fn with_log_prob(value: f64, log_prob: f64) -> Self {
        Self {
            value,
            log_prob: Some(log_prob),
        }
    }
}

/// `r + γ Q(s', a')`, with the bootstrap dropped at terminal states.
pub fn single_step_target(reward: f64, q_next: QEval, gamma: f64, terminal: bool) -> f64 {
    reward + if terminal { 0.0 } else { gamma * q_next.value }
}

/// `Σ_{i=1..L} γ^{i-1} r_i + γ^L Q(S_L, ·)` with padded rewards and a
/// terminal `S_L` masked out.
pub fn multi_step_target(rewards: &[f64], pad_flags: &[bool], q_last: QEval, gamma: f64, terminal: bool) -> f64 {
    assert_eq!(rewards.len(), pad_flags.len(), "rewards and flags must have length L");
    let horizon = rewards.len() as i32;
    let mut sum = 0.0;
    for (i, (&r, &pad)) in rewards.iter().zip(pad_flags).enumerate() {
        sum += if pad { 0.0 } else { gamma.powi(i as i32) * r };
    }
    sum + if terminal { 0.0 } else { gamma.powi(horizon) * q_last.value }
}

/// Multi-state TD target: the mean over `l = 1..L` of the `l`-step targets,
/// each bootstrapping from its own state `S_l`.
pub fn mstd_target(rewards: &[f64], pad_flags: &[bool], q_values: &[QEval], gamma: f64, terminal: bool) -> f64 {
    let horizon = rewards.len();
    assert_eq!(pad_flags.len(), horizon, "rewards and flags must have length L");
    assert_eq!(q_values.len(), horizon, "one Q evaluation per horizon");
    let mut partial = 0.0;
    let mut total = 0.0;
    for l in 1..=horizon {
        if !pad_flags[l - 1] {
            partial += gamma.powi(l as i32 - 1) * rewards[l - 1];
        }
        let q_masked = if l < horizon { pad_flags[l] } else { terminal };
        total += partial + if q_masked { 0.0 } else { gamma.powi(l as i32) * q_values[l - 1].value };
    }
    total / horizon as f64
}

/// Q part of the target in action-loaded mode: `q_loaded` at the stored
/// actions of `S_1..S_{L-1}`, `q_final` at the policy action of `S_L`.
pub fn q_average_loaded(q_loaded: &[QEval], q_final: QEval, gamma: f64) -> f64 {
    let horizon = q_loaded.len() + 1;
    let mut sum = 0.0;
    for (i, q) in q_loaded.iter().enumerate() {
        sum += gamma.powi(i as i32 + 1) * q.value;
    }
    (sum + gamma.powi(horizon as i32) * q_final.value) / horizon as f64
}

/// Q part of the target in action-generated mode.
pub fn q_average_generated(q_gen: &[QEval], gamma: f64) -> f64 {
    assert!(!q_gen.is_empty(), "at least one evaluation required");
    let sum: f64 = q_gen.iter().enumerate().map(|(i, q)| gamma.powi(i as i32 + 1) * q.value).sum();
    sum / q_gen.len() as f64
}

/// Entropy-augmented value `Q - α log π`.
pub fn soft_q(q: f64, log_prob: f64, alpha: f64) -> f64 {
    q - alpha * log_prob
}

/// Applies the entropy correction where the mode calls for it: only the final
/// evaluation in loaded mode (stored actions carry no log-density), every
/// evaluation in generated mode.
pub fn entropy_adjusted(mode: ActionMode, evals: &[QEval], alpha: f64) -> Result<Vec<QEval>, TargetError> {
    let last = evals.len().saturating_sub(1);
    evals
        .iter()
        .enumerate()
        .map(|(i, e)| {
            let soft = mode == ActionMode::Generated || i == last;
            if !soft {
                return Ok(*e);
            }
            let lp = e.log_prob.ok_or(TargetError::MissingLogProb(i + 1))?;
            Ok(QEval {
                value: soft_q(e.value, lp, alpha),
                log_prob: e.log_prob,
            })
        })
        .collect()
}

/// Soft Q average for either mode; `evals` has length `L`, and in loaded mode
/// its first `L - 1` entries are at stored actions.
pub fn soft_q_average(mode: ActionMode, evals: &[QEval], gamma: f64, alpha: f64) -> Result<f64, TargetError> {
    if evals.is_empty() {
        return Err(TargetError::Horizon);
    }
    let adjusted = entropy_adjusted(mode, evals, alpha)?;
    Ok(match mode {
        ActionMode::Loaded => {
            let (last, loaded) = adjusted.split_last().expect("non-empty");
            q_average_loaded(loaded, *last, gamma)
        }
        ActionMode::Generated => q_average_generated(&adjusted, gamma),
    })
}

/// Mean squared error between predictions and targets.
pub fn critic_objective(q_pred: &[f64], targets: &[f64]) -> Result<f64, TargetError> {
    if q_pred.len() != targets.len() {
        return Err(TargetError::LengthMismatch(q_pred.len(), targets.len()));
    }
    if q_pred.is_empty() {
        return Err(TargetError::EmptyBatch);
    }
    let sse: f64 = q_pred.iter().zip(targets).map(|(q, t)| (q - t) * (q - t)).sum();
    Ok(sse / q_pred.len() as f64)
}

/// Deterministic policy objective `-Q(s, π(s))`.
pub fn actor_objective_ddpg(q_at_policy_action: f64) -> f64 {
    -q_at_policy_action
}

#[cfg(test)]
mod tests {
    use super::*;

    fn q(v: f64) -> QEval {
        QEval::new(v)
    }

    #[test]
    fn single_step_examples() {
        assert!((single_step_target(1.0, q(2.0), 0.99, false) - 2.98).abs() < 1e-15);
        assert_eq!(single_step_target(1.0, q(2.0), 0.99, true), 1.0);
        assert_eq!(single_step_target(0.0, q(0.0), 0.7, false), 0.0);
    }

    #[test]
    fn multi_step_examples() {
        let t = multi_step_target(&[1.0, 2.0, 3.0], &[false; 3], q(10.0), 0.9, false);
        assert!((t - 12.52).abs() < 1e-12);
        let t = multi_step_target(&[2.0, 7.0, 9.0], &[false, true, true], q(123.0), 0.9, true);
        assert_eq!(t, 2.0);
    }

    #[test]
    fn mstd_examples() {
        let t = mstd_target(&[1.0, 1.0], &[false, false], &[q(1.0), q(1.0)], 0.5, false);
        assert_eq!(t, 1.625);
        let t = mstd_target(&[2.0, 5.0, 5.0], &[false, true, true], &[q(3.0), q(4.0), q(5.0)], 0.9, true);
        assert_eq!(t, 2.0);
        for (r, v, term) in [(1.5, -2.0, false), (-0.3, 7.1, true), (0.0, 0.0, false)] {
            assert_eq!(
                mstd_target(&[r], &[false], &[q(v)], 0.97, term).to_bits(),
                single_step_target(r, q(v), 0.97, term).to_bits()
            );
        }
    }

    #[test]
    fn q_average_examples() {
        assert_eq!(q_average_loaded(&[q(4.0)], q(8.0), 0.5), 2.0);
        assert_eq!(q_average_loaded(&[], q(8.0), 0.5), 4.0);
        assert_eq!(q_average_loaded(&[q(0.0), q(0.0)], q(0.0), 0.9), 0.0);
        assert_eq!(q_average_generated(&[q(4.0), q(8.0)], 0.5), 2.0);
        assert_eq!(q_average_generated(&[q(1.0), q(1.0)], 0.5), 0.375);
        assert_eq!(
            q_average_loaded(&[q(3.0), q(-1.0)], q(2.0), 0.8),
            q_average_generated(&[q(3.0), q(-1.0), q(2.0)], 0.8)
        );
    }

    #[test]
    fn soft_examples() {
        assert!((soft_q(2.0, -1.0, 0.12) - 2.12).abs() < 1e-15);
        assert_eq!(soft_q(2.0, -1.0, 0.0), 2.0);
        assert_eq!(soft_q(2.0, 0.0, 0.3), 2.0);

        let evals = [q(4.0), QEval::with_log_prob(8.0, -1.0)];
        let v = soft_q_average(ActionMode::Loaded, &evals, 0.5, 0.12).unwrap();
        assert!((v - 2.015).abs() < 1e-15);
        assert_eq!(
            soft_q_average(ActionMode::Loaded, &evals, 0.5, 0.0).unwrap(),
            q_average_loaded(&[q(4.0)], q(8.0), 0.5)
        );
        let gen = [QEval::with_log_prob(4.0, -0.5), QEval::with_log_prob(8.0, 0.25)];
        assert_eq!(
            soft_q_average(ActionMode::Generated, &gen, 0.5, 0.0).unwrap(),
            q_average_generated(&gen, 0.5)
        );
        assert_eq!(
            soft_q_average(ActionMode::Generated, &evals, 0.5, 0.1),
            Err(TargetError::MissingLogProb(1))
        );
    }

    #[test]
    fn objectives() {
        assert_eq!(critic_objective(&[1.0, 2.0], &[1.0, 4.0]).unwrap(), 2.0);
        assert_eq!(critic_objective(&[0.5, -1.0], &[0.5, -1.0]).unwrap(), 0.0);
        assert_eq!(critic_objective(&[3.0], &[0.0]).unwrap(), 9.0);
        assert_eq!(critic_objective(&[], &[]), Err(TargetError::EmptyBatch));
        assert_eq!(actor_objective_ddpg(5.0), -5.0);
        assert_eq!(actor_objective_ddpg(0.0), 0.0);
        assert_eq!(actor_objective_ddpg(-2.0), 2.0);
    }

    #[test]
    fn spec_validation() {
        assert!(TargetSpec::new(TargetKind::SingleStep, 2, ActionMode::Loaded, Entropy::None, 0.9).is_err());
        assert!(TargetSpec::new(TargetKind::MultiState, 0, ActionMode::Loaded, Entropy::None, 0.9).is_err());
        assert!(TargetSpec::new(TargetKind::MultiState, 3, ActionMode::Loaded, Entropy::None, 1.0).is_err());
        assert!(TargetSpec::new(TargetKind::MultiState, 3, ActionMode::Loaded, Entropy::Soft(f64::NAN), 0.9).is_err());
        let spec = TargetSpec::new(TargetKind::MultiState, 3, ActionMode::Loaded, Entropy::None, 0.9).unwrap();
        assert!(spec.uses_stored_action(1) && spec.uses_stored_action(2) && !spec.uses_stored_action(3));
        assert_eq!(spec.evaluated_horizons(), vec![1, 2, 3]);
    }

    #[test]
    fn soft_spec_target_places_entropy_per_mode() {
        let loaded = TargetSpec::new(TargetKind::MultiState, 2, ActionMode::Loaded, Entropy::Soft(0.12), 0.5).unwrap();
        let evals = [q(4.0), QEval::with_log_prob(8.0, -1.0)];
        let t = loaded.target(&[0.0, 0.0], &[false, false], false, &evals).unwrap();
        assert!((t - 2.015).abs() < 1e-15);
        let generated = TargetSpec { action_mode: ActionMode::Generated, ..loaded };
        assert!(generated.target(&[0.0, 0.0], &[false, false], false, &evals).is_err());
    }
}
