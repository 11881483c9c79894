use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::buffer::{RingBuffer, WindowBuilder};
use crate::mdp::Environment;

use super::{Agent, AgentError};

/// Episode length used for evaluation when the environment declares no cap.
pub const EVAL_STEP_LIMIT: usize = 1000;

/// Independent random stream `stream` derived from `seed`.
pub fn rng_stream(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Stream used for network initialization.
pub const INIT_STREAM: u64 = 0;
/// Stream used for environment resets, exploration and minibatches.
pub const TRAIN_STREAM: u64 = 1;
/// Stream used for evaluation episode resets.
pub const EVAL_STREAM: u64 = 2;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TrainingOptions {
    pub total_steps: u64,
    /// Evaluate every this many environment steps; 0 disables evaluation.
    pub eval_every: u64,
    pub eval_episodes: usize,
}

impl Default for TrainingOptions {
    fn default() -> Self {
        Self {
            total_steps: 30_000,
            eval_every: 1000,
            eval_episodes: 5,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum TrainingEvent {
    Update {
        step: u64,
        episode: u64,
        critic_loss: f64,
        actor_loss: f64,
    },
    Episode {
        step: u64,
        episode: u64,
        episode_return: f64,
        length: usize,
        terminated: bool,
        /// Mean losses over the updates made during the episode.
        mean_critic_loss: Option<f64>,
        mean_actor_loss: Option<f64>,
    },
    Evaluation {
        step: u64,
        returns: Vec<f64>,
    },
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct TrainingSummary {
    pub steps: u64,
    pub episodes: u64,
    pub updates: u64,
    /// Number of finalized (terminated) episodes.
    pub finalized: u64,
    /// Evaluation returns keyed by the step at which they were taken.
    pub evaluations: Vec<(u64, Vec<f64>)>,
}

impl TrainingSummary {
    /// Mean over the last `n` evaluation episodes.
    pub fn final_eval_mean(&self, n: usize) -> Option<f64> {
        let all: Vec<f64> = self.evaluations.iter().flat_map(|(_, r)| r.iter().copied()).collect();
        if all.is_empty() {
            return None;
        }
        let tail = &all[all.len().saturating_sub(n)..];
        Some(tail.iter().sum::<f64>() / tail.len() as f64)
    }
}

/// Undiscounted return of one noise-free episode.
pub fn evaluate_episode(agent: &mut dyn Agent, env: &mut dyn Environment, seed: u64, rng: &mut dyn RngCore) -> Result<f64, AgentError> {
    let cap = env.max_episode_steps().unwrap_or(EVAL_STEP_LIMIT);
    let mut state = env.reset(seed);
    let mut total = 0.0;
    for _ in 0..cap {
        let action = agent.act(&state, false, rng)?;
        let t = env.step(&action)?;
        total += t.reward;
        if t.terminated {
            break;
        }
        state = t.next_state;
    }
    Ok(total)
}

#[derive(Default)]
struct EpisodeLosses {
    critic: f64,
    actor: f64,
    count: usize,
}

impl EpisodeLosses {
    fn means(&self) -> (Option<f64>, Option<f64>) {
        if self.count == 0 {
            return (None, None);
        }
        let n = self.count as f64;
        (Some(self.critic / n), Some(self.actor / n))
    }
}

/// Interleaves environment steps, window construction, one gradient update
/// per step once the buffer holds a warm-up's worth of samples, and episode
/// finalization with padding. Time-limit truncation drops the open window.
pub fn run_training(
    agent: &mut dyn Agent,
    env: &mut dyn Environment,
    mut eval_env: Option<&mut dyn Environment>,
    options: &TrainingOptions,
    seed: u64,
    on_event: &mut dyn FnMut(&TrainingEvent),
) -> Result<TrainingSummary, AgentError> {
    let config = agent.config().clone();
    let horizon = config.effective_horizon();
    let mut buffer = RingBuffer::new(config.buffer_capacity, horizon, env.state_dim(), env.action_bounds().dim());
    let mut builder = WindowBuilder::new(horizon);
    let mut rng = rng_stream(seed, TRAIN_STREAM);
    let mut eval_rng = rng_stream(seed, EVAL_STREAM);
    let cap = env.max_episode_steps();
    let mut summary = TrainingSummary::default();

    let mut state = env.reset(rng.next_u64());
    agent.begin_episode();
    let mut episode_return = 0.0;
    let mut episode_len = 0usize;
    let mut losses = EpisodeLosses::default();

    while summary.steps < options.total_steps {
        let action = agent.act(&state, true, &mut rng)?;
        let t = env.step(&action)?;
        summary.steps += 1;
        episode_return += t.reward;
        episode_len += 1;
        let terminated = t.terminated;
        let next_state = t.next_state.clone();
        builder.push_transition(&mut buffer, t)?;

        if let Some(stats) = agent.train_step(&buffer, &mut rng)? {
            summary.updates += 1;
            losses.critic += stats.critic_loss;
            losses.actor += stats.actor_loss;
            losses.count += 1;
            on_event(&TrainingEvent::Update {
                step: summary.steps,
                episode: summary.episodes,
                critic_loss: stats.critic_loss,
                actor_loss: stats.actor_loss,
            });
        }

        let truncated = !terminated && cap.is_some_and(|c| episode_len >= c);
        if terminated || truncated {
            if terminated {
                builder.finalize_episode(&mut buffer)?;
                summary.finalized += 1;
            } else {
                builder.truncate_episode();
            }
            let (mean_critic_loss, mean_actor_loss) = losses.means();
            on_event(&TrainingEvent::Episode {
                step: summary.steps,
                episode: summary.episodes,
                episode_return,
                length: episode_len,
                terminated,
                mean_critic_loss,
                mean_actor_loss,
            });
            summary.episodes += 1;
            state = env.reset(rng.next_u64());
            agent.begin_episode();
            episode_return = 0.0;
            episode_len = 0;
            losses = EpisodeLosses::default();
        } else {
            state = next_state;
        }

        if options.eval_every > 0 && summary.steps % options.eval_every == 0 {
            if let Some(eval_env) = eval_env.as_deref_mut() {
                let mut returns = Vec::with_capacity(options.eval_episodes);
                for _ in 0..options.eval_episodes {
                    let episode_seed = eval_rng.next_u64();
                    returns.push(evaluate_episode(agent, eval_env, episode_seed, &mut eval_rng)?);
                }
                on_event(&TrainingEvent::Evaluation {
                    step: summary.steps,
                    returns: returns.clone(),
                });
                summary.evaluations.push((summary.steps, returns));
            }
        }
    }
    Ok(summary)
}
