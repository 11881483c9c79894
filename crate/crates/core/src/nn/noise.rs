use rand::Rng;
use rand_distr::StandardNormal;

/// Ornstein-Uhlenbeck exploration process, one coordinate per action
/// dimension: `x <- x + θ(μ - x)dt + σ sqrt(dt) ξ`.
#[derive(Debug, Clone, PartialEq)]
pub struct OuNoise {
    pub mu: f64,
    pub theta: f64,
    pub sigma: f64,
    pub dt: f64,
    state: Vec<f64>,
}

impl OuNoise {
    pub fn new(dim: usize, mu: f64, theta: f64, sigma: f64, dt: f64) -> Self {
        Self {
            mu,
            theta,
            sigma,
            dt,
            state: vec![mu; dim],
        }
    }

    pub fn state(&self) -> &[f64] {
        &self.state
    }

    pub fn set_state(&mut self, state: &[f64]) {
        self.state.copy_from_slice(state);
    }

    pub fn reset(&mut self) {
        self.state.iter_mut().for_each(|x| *x = self.mu);
    }

    pub fn sample<R: Rng + ?Sized>(&mut self, rng: &mut R) -> Vec<f64> {
        let diffusion = self.sigma * self.dt.sqrt();
        for x in self.state.iter_mut() {
            let xi: f64 = rng.sample(StandardNormal);
            *x += self.theta * (self.mu - *x) * self.dt + diffusion * xi;
        }
        self.state.clone()
    }
}
