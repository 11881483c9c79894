//! Deep actor-critic agents with single-step, multi-step and multi-state
//! targets, the training loop that drives them, and tabular MSTD
//! Q-learning.

mod config;
mod ddpg;
pub mod grads;
mod sac;
mod tabular;
mod training;

pub use config::{action_mode_name, parse_action_mode, AgentConfig, Algo, Family, OuParams};
pub use ddpg::DdpgAgent;
pub use sac::SacAgent;
pub use tabular::{mstd_max_target, tabular_mstd_update, QTable, TabularWindow};
pub use training::{
    evaluate_episode, rng_stream, run_training, TrainingEvent, TrainingOptions, TrainingSummary, EVAL_STEP_LIMIT,
    EVAL_STREAM, INIT_STREAM, TRAIN_STREAM,
};

use ndarray::Array2;
use rand::RngCore;
use thiserror::Error;

use crate::buffer::{BufferError, MultiStateSample};
use crate::mdp::{ActionBounds, ActionVec, EnvError};
use crate::nn::{stack_rows, Checkpoint, Mlp, NnError};
use crate::targets::{QEval, TargetError, TargetSpec};

#[derive(Debug, Error)]
pub enum AgentError {
    #[error("config error: {0}")]
    Config(String),
    #[error("state has {got} components, expected {expected}")]
    StateDimension { expected: usize, got: usize },
    #[error("index error: {0}")]
    Index(String),
    #[error("step size {0} outside [0, 1]")]
    StepSize(f64),
    #[error(transparent)]
    Nn(#[from] NnError),
    #[error(transparent)]
    Buffer(#[from] BufferError),
    #[error(transparent)]
    Target(#[from] TargetError),
    #[error(transparent)]
    Env(#[from] EnvError),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrainStats {
    pub critic_loss: f64,
    pub actor_loss: f64,
}

pub trait Agent: Send {
    fn config(&self) -> &AgentConfig;
    /// Exploratory action when `explore`, otherwise the deterministic policy
    /// action (actor output, or the squashed mean for stochastic actors).
    fn act(&mut self, state: &[f64], explore: bool, rng: &mut dyn RngCore) -> Result<ActionVec, AgentError>;
    /// Called at the start of every training episode.
    fn begin_episode(&mut self);
    /// One gradient update, or `None` while the buffer is below warm-up.
    fn train_step(&mut self, buffer: &crate::buffer::RingBuffer, rng: &mut dyn RngCore) -> Result<Option<TrainStats>, AgentError>;
    /// Every network owned by the agent, by name.
    fn networks(&self) -> Vec<(&'static str, &Mlp)>;

    fn checkpoints(&self, seed: u64, step: u64) -> Vec<(&'static str, Checkpoint)> {
        self.networks()
            .into_iter()
            .map(|(name, net)| (name, Checkpoint::of(net, seed, step)))
            .collect()
    }
}

/// Builds the agent for `config.algo`, drawing initial weights from `rng`.
pub fn build_agent(
    config: AgentConfig,
    state_dim: usize,
    bounds: ActionBounds,
    rng: &mut dyn RngCore,
) -> Result<Box<dyn Agent>, AgentError> {
    Ok(match config.algo.family() {
        Family::Ddpg => Box::new(DdpgAgent::new(config, state_dim, bounds, rng)?),
        Family::Sac => Box::new(SacAgent::new(config, state_dim, bounds, rng)?),
    })
}

pub(crate) fn layer_sizes(input: usize, hidden: &[usize], output: usize) -> Vec<usize> {
    let mut sizes = Vec::with_capacity(hidden.len() + 2);
    sizes.push(input);
    sizes.extend_from_slice(hidden);
    sizes.push(output);
    sizes
}

pub(crate) fn states_at(batch: &[&MultiStateSample], l: usize, dim: usize) -> Array2<f64> {
    stack_rows(batch.iter().map(|s| s.states[l].as_slice()), dim)
}

pub(crate) fn actions_at(batch: &[&MultiStateSample], l: usize, dim: usize) -> Array2<f64> {
    stack_rows(batch.iter().map(|s| s.actions[l].as_slice()), dim)
}

/// `evals[h][i]` is the evaluation of sample `i` at the `h`-th evaluated
/// horizon.
pub(crate) fn combine_targets(spec: &TargetSpec, batch: &[&MultiStateSample], evals: Vec<Vec<QEval>>) -> Result<Vec<f64>, AgentError> {
    let mut per_sample = Vec::with_capacity(evals.len());
    batch
        .iter()
        .enumerate()
        .map(|(i, s)| {
            per_sample.clear();
            per_sample.extend(evals.iter().map(|row| row[i]));
            Ok(spec.target(&s.rewards, &s.pad_flags, s.terminal, &per_sample)?)
        })
        .collect()
}
