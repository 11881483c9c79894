//! Objectives together with their exact parameter gradients.

use ndarray::{s, Array2, ArrayView2};

use crate::nn::{concat_cols, Mlp, SquashedGaussian};
use crate::targets::critic_objective;

use super::AgentError;

/// Mean squared error of `critic(inputs)` against `targets` and its gradient
/// with respect to the critic parameters.
pub fn critic_loss_grad(critic: &Mlp, inputs: ArrayView2<f64>, targets: &[f64]) -> Result<(f64, Vec<f64>), AgentError> {
    let pass = critic.forward(inputs)?;
    let q: Vec<f64> = pass.output.column(0).to_vec();
    let loss = critic_objective(&q, targets)?;
    let n = q.len() as f64;
    let upstream = Array2::from_shape_fn((q.len(), 1), |(i, _)| 2.0 * (q[i] - targets[i]) / n);
    let grads = critic.backward(&pass, upstream.view(), true)?;
    Ok((loss, grads.params.expect("requested")))
}

/// `-mean Q(s, π(s))` and its gradient with respect to the actor parameters.
pub fn ddpg_actor_loss_grad(actor: &Mlp, critic: &Mlp, states: ArrayView2<f64>) -> Result<(f64, Vec<f64>), AgentError> {
    let n = states.nrows();
    let sd = states.ncols();
    let apass = actor.forward(states)?;
    let inputs = concat_cols(states, apass.output.view());
    let cpass = critic.forward(inputs.view())?;
    let loss = -cpass.output.column(0).sum() / n as f64;
    let upstream = Array2::from_elem((n, 1), -1.0 / n as f64);
    let dx = critic.backward(&cpass, upstream.view(), false)?.input;
    let g = actor.backward(&apass, dx.slice(s![.., sd..]), true)?;
    Ok((loss, g.params.expect("requested")))
}

/// `mean(α log π(a|s) - min_i Q_i(s, a))` for reparameterized actions built
/// from the supplied standard normal `noise`, and its gradient with respect to
/// the actor parameters.
pub fn sac_actor_loss_grad(
    actor: &Mlp,
    head: &SquashedGaussian,
    critics: [&Mlp; 2],
    states: ArrayView2<f64>,
    noise: Array2<f64>,
    alpha: f64,
) -> Result<(f64, Vec<f64>), AgentError> {
    let n = states.nrows();
    let sd = states.ncols();
    let apass = actor.forward(states)?;
    let draw = head.sample_with_noise(apass.output.view(), noise);
    let inputs = concat_cols(states, draw.actions.view());
    let p1 = critics[0].forward(inputs.view())?;
    let p2 = critics[1].forward(inputs.view())?;
    let inv_n = 1.0 / n as f64;
    let mut up1 = Array2::zeros((n, 1));
    let mut up2 = Array2::zeros((n, 1));
    let mut loss = 0.0;
    for i in 0..n {
        let (q1, q2) = (p1.output[[i, 0]], p2.output[[i, 0]]);
        if q1 <= q2 {
            up1[[i, 0]] = -inv_n;
        } else {
            up2[[i, 0]] = -inv_n;
        }
        loss += alpha * draw.log_probs[i] - q1.min(q2);
    }
    let mut dx = critics[0].backward(&p1, up1.view(), false)?.input;
    dx += &critics[1].backward(&p2, up2.view(), false)?.input;
    let d_log_probs = ndarray::Array1::from_elem(n, alpha * inv_n);
    let d_head = head.backward(&draw, dx.slice(s![.., sd..]), d_log_probs.view());
    let g = actor.backward(&apass, d_head.view(), true)?;
    Ok((loss * inv_n, g.params.expect("requested")))
}
