use ndarray::{Array2, ArrayView2};
use rand::{Rng, RngCore};
use rand_distr::StandardNormal;

use crate::buffer::{MultiStateSample, RingBuffer};
use crate::mdp::{ActionBounds, ActionVec};
use crate::nn::{concat_cols, soft_update, AdamState, Mlp, OutputActivation, SquashedGaussian};
use crate::targets::{QEval, TargetSpec};

use super::grads::{critic_loss_grad, sac_actor_loss_grad};
use super::{actions_at, combine_targets, layer_sizes, states_at, Agent, AgentConfig, AgentError, Family, TrainStats};

/// Soft actor-critic with twin critics and a fixed entropy coefficient,
/// covering SAC, MPSAC and MSSAC.
///
/// There is no target actor: policy actions inside targets are sampled from
/// the online actor, freshly for every minibatch.
#[derive(Debug, Clone)]
pub struct SacAgent {
    config: AgentConfig,
    spec: TargetSpec,
    state_dim: usize,
    action_dim: usize,
    head: SquashedGaussian,
    pub actor: Mlp,
    pub critics: [Mlp; 2],
    pub target_critics: [Mlp; 2],
    actor_opt: AdamState,
    critic_opts: [AdamState; 2],
}

fn standard_normal(n: usize, d: usize, rng: &mut dyn RngCore) -> Array2<f64> {
    Array2::from_shape_simple_fn((n, d), || rng.sample(StandardNormal))
}

impl SacAgent {
    pub fn new(config: AgentConfig, state_dim: usize, bounds: ActionBounds, rng: &mut dyn RngCore) -> Result<Self, AgentError> {
        config.validate()?;
        if config.algo.family() != Family::Sac {
            return Err(AgentError::Config(format!("algo: {} is not a SAC variant", config.algo)));
        }
        let spec = config.target_spec()?;
        let head = SquashedGaussian::new(&bounds);
        let action_dim = bounds.dim();
        let actor = Mlp::new(
            &layer_sizes(state_dim, &config.hidden, head.param_dim()),
            OutputActivation::Identity,
            rng,
        );
        let critic_sizes = layer_sizes(state_dim + action_dim, &config.hidden, 1);
        let c1 = Mlp::new(&critic_sizes, OutputActivation::Identity, rng);
        let c2 = Mlp::new(&critic_sizes, OutputActivation::Identity, rng);
        let n_critic = c1.params().len();
        Ok(Self {
            spec,
            state_dim,
            action_dim,
            head,
            actor_opt: AdamState::new(actor.params().len(), config.lr),
            critic_opts: [AdamState::new(n_critic, config.lr), AdamState::new(n_critic, config.lr)],
            target_critics: [c1.clone(), c2.clone()],
            critics: [c1, c2],
            actor,
            config,
        })
    }

    pub fn spec(&self) -> &TargetSpec {
        &self.spec
    }

    pub fn head(&self) -> &SquashedGaussian {
        &self.head
    }

    fn min_target_q(&self, inputs: ArrayView2<f64>) -> Result<Vec<f64>, AgentError> {
        let q1 = self.target_critics[0].predict(inputs)?;
        let q2 = self.target_critics[1].predict(inputs)?;
        Ok(q1.column(0).iter().zip(q2.column(0)).map(|(a, b)| a.min(*b)).collect())
    }

    /// Regression targets for a minibatch using the minimum of the twin
    /// target critics. Sampled actions carry their log-density so that the
    /// target spec can place the entropy terms.
    pub fn compute_targets(&self, batch: &[&MultiStateSample], rng: &mut dyn RngCore) -> Result<Vec<f64>, AgentError> {
        let mut evals = Vec::new();
        for l in self.spec.evaluated_horizons() {
            let states = states_at(batch, l, self.state_dim);
            let row: Vec<QEval> = if self.spec.uses_stored_action(l) {
                let actions = actions_at(batch, l, self.action_dim);
                let q = self.min_target_q(concat_cols(states.view(), actions.view()).view())?;
                q.into_iter().map(QEval::new).collect()
            } else {
                let params = self.actor.predict(states.view())?;
                let draw = self.head.sample(params.view(), rng);
                let q = self.min_target_q(concat_cols(states.view(), draw.actions.view()).view())?;
                q.into_iter().zip(draw.log_probs.iter()).map(|(v, &lp)| QEval::with_log_prob(v, lp)).collect()
            };
            evals.push(row);
        }
        combine_targets(&self.spec, batch, evals)
    }

    pub fn update_on(&mut self, batch: &[&MultiStateSample], rng: &mut dyn RngCore) -> Result<TrainStats, AgentError> {
        let targets = self.compute_targets(batch, rng)?;
        let s0 = states_at(batch, 0, self.state_dim);
        let a0 = actions_at(batch, 0, self.action_dim);
        let inputs = concat_cols(s0.view(), a0.view());
        let mut critic_loss = 0.0;
        for (critic, opt) in self.critics.iter_mut().zip(self.critic_opts.iter_mut()) {
            let (loss, g) = critic_loss_grad(critic, inputs.view(), &targets)?;
            opt.step(critic.params_mut(), &g);
            critic_loss += 0.5 * loss;
        }
        let noise = standard_normal(batch.len(), self.action_dim, rng);
        let (actor_loss, g) = sac_actor_loss_grad(
            &self.actor,
            &self.head,
            [&self.critics[0], &self.critics[1]],
            s0.view(),
            noise,
            self.config.alpha,
        )?;
        self.actor_opt.step(self.actor.params_mut(), &g);
        for (target, online) in self.target_critics.iter_mut().zip(&self.critics) {
            soft_update(target, online, self.config.tau)?;
        }
        Ok(TrainStats { critic_loss, actor_loss })
    }
}

impl Agent for SacAgent {
    fn config(&self) -> &AgentConfig {
        &self.config
    }

    fn act(&mut self, state: &[f64], explore: bool, rng: &mut dyn RngCore) -> Result<ActionVec, AgentError> {
        let x = ArrayView2::from_shape((1, state.len()), state).map_err(|_| AgentError::StateDimension {
            expected: self.state_dim,
            got: state.len(),
        })?;
        let params = self.actor.predict(x)?;
        let actions = if explore {
            self.head.sample(params.view(), rng).actions
        } else {
            self.head.mean_action(params.view())
        };
        Ok(actions.row(0).to_vec())
    }

    fn begin_episode(&mut self) {}

    fn train_step(&mut self, buffer: &RingBuffer, rng: &mut dyn RngCore) -> Result<Option<TrainStats>, AgentError> {
        if buffer.len() < self.config.warmup_len() {
            return Ok(None);
        }
        let batch = buffer.sample_minibatch(self.config.batch_size, rng)?;
        self.update_on(&batch, rng).map(Some)
    }

    fn networks(&self) -> Vec<(&'static str, &Mlp)> {
        vec![
            ("actor", &self.actor),
            ("critic1", &self.critics[0]),
            ("critic2", &self.critics[1]),
            ("target_critic1", &self.target_critics[0]),
            ("target_critic2", &self.target_critics[1]),
        ]
    }
}
