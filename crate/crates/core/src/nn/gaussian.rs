use std::f64::consts::{LN_2, PI};

use ndarray::{Array1, Array2, ArrayView1, ArrayView2};
use rand::Rng;
use rand_distr::StandardNormal;

use crate::mdp::ActionBounds;

pub const LOG_STD_MIN: f64 = -20.0;
pub const LOG_STD_MAX: f64 = 2.0;

/// Tanh-squashed diagonal Gaussian policy head. The actor network emits
/// `[mean_1..mean_d, log_std_1..log_std_d]`; actions are
/// `center + half_range * tanh(mean + std * ξ)`.
///
/// `log_prob` is the density of the squashed action in `(-1, 1)^d`, i.e. the
/// Gaussian log-density minus `Σ log(1 - tanh(u)^2)`. The constant affine
/// rescaling to the action bounds is not included.
#[derive(Debug, Clone, PartialEq)]
pub struct SquashedGaussian {
    center: Vec<f64>,
    half_range: Vec<f64>,
}

/// Reparameterized draw for a batch, with everything needed for backward.
#[derive(Debug, Clone)]
pub struct GaussianDraw {
    pub actions: Array2<f64>,
    pub log_probs: Array1<f64>,
    noise: Array2<f64>,
    squashed: Array2<f64>,
    std: Array2<f64>,
    log_std_clamped: Array2<bool>,
}

/// `log(1 - tanh(u)^2)`, stable for large `|u|`.
pub fn log_one_minus_tanh_sq(u: f64) -> f64 {
    2.0 * (LN_2 - u - softplus(-2.0 * u))
}

fn softplus(x: f64) -> f64 {
    if x > 30.0 {
        x
    } else {
        x.exp().ln_1p()
    }
}

impl SquashedGaussian {
    pub fn new(bounds: &ActionBounds) -> Self {
        let (center, half_range) = bounds.affine();
        Self { center, half_range }
    }

    pub fn action_dim(&self) -> usize {
        self.center.len()
    }

    /// Width of the actor output feeding this head.
    pub fn param_dim(&self) -> usize {
        2 * self.action_dim()
    }

    /// `center + half_range * tanh(mean)`.
    pub fn mean_action(&self, head: ArrayView2<f64>) -> Array2<f64> {
        let d = self.action_dim();
        let mut out = Array2::zeros((head.nrows(), d));
        for (mut o, h) in out.rows_mut().into_iter().zip(head.rows()) {
            for j in 0..d {
                o[j] = self.center[j] + self.half_range[j] * h[j].tanh();
            }
        }
        out
    }

    /// Draws one action per row of `head`.
    pub fn sample<R: Rng + ?Sized>(&self, head: ArrayView2<f64>, rng: &mut R) -> GaussianDraw {
        let (n, d) = (head.nrows(), self.action_dim());
        let noise = Array2::from_shape_simple_fn((n, d), || rng.sample::<f64, _>(StandardNormal));
        self.sample_with_noise(head, noise)
    }

    /// Same as [`SquashedGaussian::sample`] with caller-supplied standard
    /// normal noise.
    pub fn sample_with_noise(&self, head: ArrayView2<f64>, noise: Array2<f64>) -> GaussianDraw {
        let (n, d) = (head.nrows(), self.action_dim());
        assert_eq!(head.ncols(), 2 * d, "head width must be 2 * action_dim");
        assert_eq!(noise.dim(), (n, d));
        let mut actions = Array2::zeros((n, d));
        let mut squashed = Array2::zeros((n, d));
        let mut std = Array2::zeros((n, d));
        let mut clamped = Array2::from_elem((n, d), false);
        let mut log_probs = Array1::zeros(n);
        let half_log_2pi = 0.5 * (2.0 * PI).ln();
        for i in 0..n {
            let mut lp = 0.0;
            for j in 0..d {
                let raw = head[[i, j + d]];
                let log_std = raw.clamp(LOG_STD_MIN, LOG_STD_MAX);
                clamped[[i, j]] = raw != log_std;
                let s = log_std.exp();
                let xi = noise[[i, j]];
                let u = head[[i, j]] + s * xi;
                let t = u.tanh();
                std[[i, j]] = s;
                squashed[[i, j]] = t;
                actions[[i, j]] = self.center[j] + self.half_range[j] * t;
                lp += -0.5 * xi * xi - log_std - half_log_2pi - log_one_minus_tanh_sq(u);
            }
            log_probs[i] = lp;
        }
        GaussianDraw {
            actions,
            log_probs,
            noise,
            squashed,
            std,
            log_std_clamped: clamped,
        }
    }

    /// Gradient with respect to the head outputs given upstream gradients on
    /// the actions and on the log-probabilities.
    pub fn backward(&self, draw: &GaussianDraw, d_actions: ArrayView2<f64>, d_log_probs: ArrayView1<f64>) -> Array2<f64> {
        let (n, d) = draw.actions.dim();
        let mut grad = Array2::zeros((n, 2 * d));
        for i in 0..n {
            for j in 0..d {
                let t = draw.squashed[[i, j]];
                let s = draw.std[[i, j]];
                let xi = draw.noise[[i, j]];
                let da_du = self.half_range[j] * (1.0 - t * t);
                let g_u = d_actions[[i, j]] * da_du + d_log_probs[i] * 2.0 * t;
                grad[[i, j]] = g_u;
                if !draw.log_std_clamped[[i, j]] {
                    grad[[i, j + d]] = g_u * s * xi - d_log_probs[i];
                }
            }
        }
        grad
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn vanishing_std_gives_mean_action() {
        let head = SquashedGaussian::new(&ActionBounds::symmetric(1, 2.0));
        let params = array![[0.7, LOG_STD_MIN]];
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let draw = head.sample(params.view(), &mut rng);
        assert!((draw.actions[[0, 0]] - 2.0 * 0.7_f64.tanh()).abs() < 1e-8);
        assert_eq!(head.mean_action(params.view())[[0, 0]], 2.0 * 0.7_f64.tanh());
    }

    #[test]
    fn actions_within_bounds_and_log_probs_finite() {
        let head = SquashedGaussian::new(&ActionBounds::new(vec![-1.0, 0.0], vec![3.0, 0.5]));
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let params = Array2::from_shape_fn((500, 4), |(i, j)| ((i * 7 + j * 3) % 13) as f64 - 6.0);
        let draw = head.sample(params.view(), &mut rng);
        for row in draw.actions.rows() {
            assert!((-1.0..=3.0).contains(&row[0]) && (0.0..=0.5).contains(&row[1]));
        }
        assert!(draw.log_probs.iter().all(|v| v.is_finite()));
    }

    #[test]
    fn stable_log_jacobian() {
        for u in [-40.0, -3.0, 0.0, 0.5, 25.0] {
            let direct = (1.0 - f64::tanh(u).powi(2)).ln();
            let stable = log_one_minus_tanh_sq(u);
            if direct.is_finite() {
                assert!((direct - stable).abs() < 1e-9, "u={u}");
            } else {
                assert!(stable.is_finite());
            }
        }
    }

    #[test]
    fn backward_matches_finite_differences() {
        let head = SquashedGaussian::new(&ActionBounds::symmetric(2, 1.5));
        let params = array![[0.3, -0.8, -0.4, 0.1], [1.2, 0.05, -1.0, -2.5]];
        let noise = array![[0.7, -1.3], [-0.2, 0.9]];
        let w_act = array![[0.4, -1.1], [2.0, 0.3]];
        let w_lp = array![0.6, -0.25];
        let objective = |p: &Array2<f64>| {
            let d = head.sample_with_noise(p.view(), noise.clone());
            (&d.actions * &w_act).sum() + (&d.log_probs * &w_lp).sum()
        };
        let draw = head.sample_with_noise(params.view(), noise.clone());
        let g = head.backward(&draw, w_act.view(), w_lp.view());
        let h = 1e-6;
        for idx in [(0, 0), (0, 1), (0, 2), (0, 3), (1, 0), (1, 1), (1, 2), (1, 3)] {
            let mut plus = params.clone();
            plus[idx] += h;
            let mut minus = params.clone();
            minus[idx] -= h;
            let fd = (objective(&plus) - objective(&minus)) / (2.0 * h);
            assert!((fd - g[idx]).abs() < 1e-6 * fd.abs().max(1.0), "{idx:?}: {fd} vs {}", g[idx]);
        }
    }

    #[test]
    fn entropy_matches_quadrature() {
        // E[-log π] = Gaussian entropy + E[log(1 - tanh(u)^2)], u ~ N(μ, σ²);
        // the expectation of the Jacobian term is computed by Simpson's rule.
        let (mu, log_std) = (0.4_f64, -0.3_f64);
        let sigma = log_std.exp();
        let head = SquashedGaussian::new(&ActionBounds::symmetric(1, 1.0));
        let n = 100_000;
        let params = Array2::from_shape_fn((n, 2), |(_, j)| if j == 0 { mu } else { log_std });
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let draw = head.sample(params.view(), &mut rng);
        let mc = -draw.log_probs.mean().unwrap();

        let gauss_entropy = 0.5 * (2.0 * PI * std::f64::consts::E * sigma * sigma).ln();
        let steps = 4000;
        let (lo, hi) = (mu - 12.0 * sigma, mu + 12.0 * sigma);
        let h = (hi - lo) / steps as f64;
        let f = |u: f64| {
            let z = (u - mu) / sigma;
            (-0.5 * z * z).exp() / (sigma * (2.0 * PI).sqrt()) * log_one_minus_tanh_sq(u)
        };
        let mut acc = f(lo) + f(hi);
        for k in 1..steps {
            acc += f(lo + k as f64 * h) * if k % 2 == 1 { 4.0 } else { 2.0 };
        }
        let jac = acc * h / 3.0;
        let analytic = gauss_entropy + jac;
        assert!((mc - analytic).abs() <= 0.01 * analytic.abs(), "mc {mc} analytic {analytic}");
    }
}
