use ndarray::{Array2, ArrayView2};
use rand::RngCore;

use crate::buffer::{MultiStateSample, RingBuffer};
use crate::mdp::{ActionBounds, ActionVec};
use crate::nn::{concat_cols, soft_update, AdamState, Mlp, OuNoise, OutputActivation};
use crate::targets::{QEval, TargetSpec};

use super::grads::{critic_loss_grad, ddpg_actor_loss_grad};
use super::{actions_at, combine_targets, layer_sizes, states_at, Agent, AgentConfig, AgentError, Family, TrainStats};

/// Deterministic actor-critic agent covering DDPG, MPDDPG and MSDDPG; the
/// variants differ only in their [`TargetSpec`].
#[derive(Debug, Clone)]
pub struct DdpgAgent {
    config: AgentConfig,
    spec: TargetSpec,
    state_dim: usize,
    action_dim: usize,
    bounds: ActionBounds,
    pub actor: Mlp,
    pub critic: Mlp,
    pub target_actor: Mlp,
    pub target_critic: Mlp,
    actor_opt: AdamState,
    critic_opt: AdamState,
    noise: OuNoise,
}

impl DdpgAgent {
    pub fn new(config: AgentConfig, state_dim: usize, bounds: ActionBounds, rng: &mut dyn RngCore) -> Result<Self, AgentError> {
        config.validate()?;
        if config.algo.family() != Family::Ddpg {
            return Err(AgentError::Config(format!("algo: {} is not a DDPG variant", config.algo)));
        }
        let spec = config.target_spec()?;
        let action_dim = bounds.dim();
        let (offset, scale) = bounds.affine();
        let actor = Mlp::new(
            &layer_sizes(state_dim, &config.hidden, action_dim),
            OutputActivation::ScaledTanh { scale, offset },
            rng,
        );
        let critic = Mlp::new(&layer_sizes(state_dim + action_dim, &config.hidden, 1), OutputActivation::Identity, rng);
        let ou = config.ou;
        Ok(Self {
            spec,
            state_dim,
            action_dim,
            bounds,
            target_actor: actor.clone(),
            target_critic: critic.clone(),
            actor_opt: AdamState::new(actor.params().len(), config.lr),
            critic_opt: AdamState::new(critic.params().len(), config.lr),
            noise: OuNoise::new(action_dim, ou.mu, ou.theta, ou.sigma, ou.dt),
            actor,
            critic,
            config,
        })
    }

    pub fn spec(&self) -> &TargetSpec {
        &self.spec
    }

    /// Regression targets for a minibatch. All Q terms come from the target
    /// critic; policy actions come from the target actor.
    pub fn compute_targets(&self, batch: &[&MultiStateSample]) -> Result<Vec<f64>, AgentError> {
        let mut evals = Vec::new();
        for l in self.spec.evaluated_horizons() {
            let states = states_at(batch, l, self.state_dim);
            let actions = if self.spec.uses_stored_action(l) {
                actions_at(batch, l, self.action_dim)
            } else {
                self.target_actor.predict(states.view())?
            };
            let q = self.target_critic.predict(concat_cols(states.view(), actions.view()).view())?;
            evals.push(q.column(0).iter().map(|&v| QEval::new(v)).collect());
        }
        combine_targets(&self.spec, batch, evals)
    }

    /// One critic and one actor Adam step on the given minibatch followed by
    /// soft target updates.
    pub fn update_on(&mut self, batch: &[&MultiStateSample]) -> Result<TrainStats, AgentError> {
        let targets = self.compute_targets(batch)?;
        let s0 = states_at(batch, 0, self.state_dim);
        let a0 = actions_at(batch, 0, self.action_dim);
        let (critic_loss, g) = critic_loss_grad(&self.critic, concat_cols(s0.view(), a0.view()).view(), &targets)?;
        self.critic_opt.step(self.critic.params_mut(), &g);
        let (actor_loss, g) = ddpg_actor_loss_grad(&self.actor, &self.critic, s0.view())?;
        self.actor_opt.step(self.actor.params_mut(), &g);
        soft_update(&mut self.target_critic, &self.critic, self.config.tau)?;
        soft_update(&mut self.target_actor, &self.actor, self.config.tau)?;
        Ok(TrainStats { critic_loss, actor_loss })
    }

    fn policy(&self, state: &[f64]) -> Result<Array2<f64>, AgentError> {
        let x = ArrayView2::from_shape((1, state.len()), state).map_err(|_| AgentError::StateDimension {
            expected: self.state_dim,
            got: state.len(),
        })?;
        Ok(self.actor.predict(x)?)
    }
}

impl Agent for DdpgAgent {
    fn config(&self) -> &AgentConfig {
        &self.config
    }

    fn act(&mut self, state: &[f64], explore: bool, rng: &mut dyn RngCore) -> Result<ActionVec, AgentError> {
        let mut action: ActionVec = self.policy(state)?.row(0).to_vec();
        if explore {
            for (a, n) in action.iter_mut().zip(self.noise.sample(rng)) {
                *a += n;
            }
            self.bounds.clip(&mut action);
        }
        Ok(action)
    }

    fn begin_episode(&mut self) {
        self.noise.reset();
    }

    fn train_step(&mut self, buffer: &RingBuffer, rng: &mut dyn RngCore) -> Result<Option<TrainStats>, AgentError> {
        if buffer.len() < self.config.warmup_len() {
            return Ok(None);
        }
        let batch = buffer.sample_minibatch(self.config.batch_size, rng)?;
        self.update_on(&batch).map(Some)
    }

    fn networks(&self) -> Vec<(&'static str, &Mlp)> {
        vec![
            ("actor", &self.actor),
            ("critic", &self.critic),
            ("target_actor", &self.target_actor),
            ("target_critic", &self.target_critic),
        ]
    }
}
