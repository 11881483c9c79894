use std::sync::atomic::{AtomicU64, Ordering};

use ndarray::linalg::general_mat_mul;
use ndarray::{Array2, ArrayView1, ArrayView2, ArrayViewMut2, Axis, Zip};
use rand::Rng;

use super::NnError;

static NEXT_NET_ID: AtomicU64 = AtomicU64::new(1);

fn fresh_id() -> u64 {
    NEXT_NET_ID.fetch_add(1, Ordering::Relaxed)
}

/// Activation applied to the last layer. Hidden layers always use ReLU.
#[derive(Debug, Clone, PartialEq)]
pub enum OutputActivation {
    Identity,
    /// `offset + scale * tanh(z)` per output dimension.
    ScaledTanh { scale: Vec<f64>, offset: Vec<f64> },
}

/// Fully connected ReLU network with parameters in one flat vector
/// (per layer: row-major `out x in` weights, then `out` biases).
#[derive(Debug)]
pub struct Mlp {
    sizes: Vec<usize>,
    params: Vec<f64>,
    output: OutputActivation,
    id: u64,
    version: u64,
}

impl Clone for Mlp {
    fn clone(&self) -> Self {
        Self {
            sizes: self.sizes.clone(),
            params: self.params.clone(),
            output: self.output.clone(),
            id: fresh_id(),
            version: 0,
        }
    }
}

/// Activations recorded by [`Mlp::forward`] for a later backward pass.
#[derive(Debug, Clone)]
pub struct ForwardPass {
    net_id: u64,
    version: u64,
    layer_inputs: Vec<Array2<f64>>,
    squashed: Option<Array2<f64>>,
    pub output: Array2<f64>,
}

#[derive(Debug, Clone)]
pub struct Gradients {
    /// Flat gradient aligned with [`Mlp::params`]; absent when not requested.
    pub params: Option<Vec<f64>>,
    /// Gradient with respect to the network input, `batch x input_dim`.
    pub input: Array2<f64>,
}

pub fn param_count(sizes: &[usize]) -> usize {
    sizes.windows(2).map(|w| w[0] * w[1] + w[1]).sum()
}

impl Mlp {
    /// Uniform `±1/sqrt(fan_in)` initialization of weights and biases.
    pub fn new<R: Rng + ?Sized>(sizes: &[usize], output: OutputActivation, rng: &mut R) -> Self {
        assert!(sizes.len() >= 2 && sizes.iter().all(|&s| s > 0), "invalid layer sizes {sizes:?}");
        if let OutputActivation::ScaledTanh { scale, offset } = &output {
            assert_eq!(scale.len(), *sizes.last().unwrap());
            assert_eq!(offset.len(), *sizes.last().unwrap());
        }
        let mut params = Vec::with_capacity(param_count(sizes));
        for w in sizes.windows(2) {
            let bound = 1.0 / (w[0] as f64).sqrt();
            for _ in 0..(w[0] * w[1] + w[1]) {
                params.push(rng.random_range(-bound..bound));
            }
        }
        Self::from_params(sizes, params, output)
    }

    pub fn from_params(sizes: &[usize], params: Vec<f64>, output: OutputActivation) -> Self {
        assert_eq!(params.len(), param_count(sizes), "parameter count mismatch");
        Self {
            sizes: sizes.to_vec(),
            params,
            output,
            id: fresh_id(),
            version: 0,
        }
    }

    pub fn sizes(&self) -> &[usize] {
        &self.sizes
    }

    pub fn input_dim(&self) -> usize {
        self.sizes[0]
    }

    pub fn output_dim(&self) -> usize {
        *self.sizes.last().unwrap()
    }

    pub fn output_activation(&self) -> &OutputActivation {
        &self.output
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    /// Mutable parameter access; invalidates outstanding forward passes.
    pub fn params_mut(&mut self) -> &mut [f64] {
        self.version += 1;
        &mut self.params
    }

    fn layer(&self, k: usize) -> (ArrayView2<'_, f64>, ArrayView1<'_, f64>) {
        let (fan_in, fan_out) = (self.sizes[k], self.sizes[k + 1]);
        let offset: usize = self.sizes[..=k].windows(2).map(|w| w[0] * w[1] + w[1]).sum();
        let w = ArrayView2::from_shape((fan_out, fan_in), &self.params[offset..offset + fan_in * fan_out]).unwrap();
        let b = ArrayView1::from(&self.params[offset + fan_in * fan_out..offset + fan_in * fan_out + fan_out]);
        (w, b)
    }

    fn check_input(&self, input: &ArrayView2<f64>) -> Result<(), NnError> {
        if input.ncols() != self.input_dim() {
            return Err(NnError::Shape {
                expected: self.input_dim(),
                got: input.ncols(),
            });
        }
        Ok(())
    }

    /// Batched forward pass, `batch x input_dim` in, `batch x output_dim` out.
    pub fn forward(&self, input: ArrayView2<f64>) -> Result<ForwardPass, NnError> {
        self.check_input(&input)?;
        let layers = self.sizes.len() - 1;
        let mut layer_inputs = Vec::with_capacity(layers);
        let mut x = input.to_owned();
        for k in 0..layers {
            let z = self.affine(k, x.view());
            layer_inputs.push(x);
            x = if k + 1 < layers { z.mapv_into(|v| v.max(0.0)) } else { z };
        }
        let (output, squashed) = match &self.output {
            OutputActivation::Identity => (x, None),
            OutputActivation::ScaledTanh { scale, offset } => {
                let t = x.mapv_into(f64::tanh);
                let mut out = t.clone();
                for mut row in out.rows_mut() {
                    for ((v, s), o) in row.iter_mut().zip(scale).zip(offset) {
                        *v = o + s * *v;
                    }
                }
                (out, Some(t))
            }
        };
        Ok(ForwardPass {
            net_id: self.id,
            version: self.version,
            layer_inputs,
            squashed,
            output,
        })
    }

    /// Forward pass without recording activations.
    pub fn predict(&self, input: ArrayView2<f64>) -> Result<Array2<f64>, NnError> {
        Ok(self.forward(input)?.output)
    }

    fn affine(&self, k: usize, x: ArrayView2<f64>) -> Array2<f64> {
        let (w, b) = self.layer(k);
        let mut z = Array2::zeros((x.nrows(), w.nrows()));
        for mut row in z.rows_mut() {
            row.assign(&b);
        }
        general_mat_mul(1.0, &x, &w.t(), 1.0, &mut z);
        z
    }

    /// Reverse-mode gradients of `Σ upstream ⊙ output` with respect to the
    /// parameters (when `want_params`) and the input.
    pub fn backward(&self, pass: &ForwardPass, upstream: ArrayView2<f64>, want_params: bool) -> Result<Gradients, NnError> {
        if pass.net_id != self.id || pass.version != self.version {
            return Err(NnError::StaleCache);
        }
        if upstream.dim() != pass.output.dim() {
            return Err(NnError::Shape {
                expected: pass.output.ncols(),
                got: upstream.ncols(),
            });
        }
        let mut delta = upstream.to_owned();
        if let (OutputActivation::ScaledTanh { scale, .. }, Some(t)) = (&self.output, &pass.squashed) {
            for (mut drow, trow) in delta.rows_mut().into_iter().zip(t.rows()) {
                for ((d, s), tv) in drow.iter_mut().zip(scale).zip(trow) {
                    *d *= s * (1.0 - tv * tv);
                }
            }
        }
        let mut grads = want_params.then(|| vec![0.0; self.params.len()]);
        let layers = self.sizes.len() - 1;
        let mut offsets = Vec::with_capacity(layers);
        let mut acc = 0;
        for w in self.sizes.windows(2) {
            offsets.push(acc);
            acc += w[0] * w[1] + w[1];
        }
        for k in (0..layers).rev() {
            let x = &pass.layer_inputs[k];
            let (fan_in, fan_out) = (self.sizes[k], self.sizes[k + 1]);
            if let Some(g) = grads.as_mut() {
                let o = offsets[k];
                let (gw, gb) = g[o..o + fan_in * fan_out + fan_out].split_at_mut(fan_in * fan_out);
                let mut gw = ArrayViewMut2::from_shape((fan_out, fan_in), gw).unwrap();
                general_mat_mul(1.0, &delta.t(), x, 0.0, &mut gw);
                for (b, s) in gb.iter_mut().zip(delta.sum_axis(Axis(0))) {
                    *b = s;
                }
            }
            let (w, _) = self.layer(k);
            let mut dx = Array2::zeros((delta.nrows(), fan_in));
            general_mat_mul(1.0, &delta, &w, 0.0, &mut dx);
            if k > 0 {
                Zip::from(&mut dx).and(x).for_each(|d, &a| {
                    if a <= 0.0 {
                        *d = 0.0;
                    }
                });
            }
            delta = dx;
        }
        Ok(Gradients {
            params: grads,
            input: delta,
        })
    }
}

/// `target <- (1 - τ) target + τ online`, elementwise.
pub fn soft_update(target: &mut Mlp, online: &Mlp, tau: f64) -> Result<(), NnError> {
    if target.sizes != online.sizes {
        return Err(NnError::Architecture);
    }
    if !(tau > 0.0 && tau <= 1.0) {
        return Err(NnError::Tau(tau));
    }
    for (t, &o) in target.params_mut().iter_mut().zip(&online.params) {
        *t = (1.0 - tau) * *t + tau * o;
    }
    Ok(())
}

/// Column-wise concatenation `[a | b]`.
pub fn concat_cols(a: ArrayView2<f64>, b: ArrayView2<f64>) -> Array2<f64> {
    ndarray::concatenate(Axis(1), &[a, b]).expect("row counts match")
}

/// Stacks equal-length rows into a matrix.
pub fn stack_rows<'a, I>(rows: I, dim: usize) -> Array2<f64>
where
    I: IntoIterator<Item = &'a [f64]>,
{
    let mut data = Vec::new();
    let mut n = 0;
    for r in rows {
        assert_eq!(r.len(), dim, "row length mismatch");
        data.extend_from_slice(r);
        n += 1;
    }
    Array2::from_shape_vec((n, dim), data).unwrap()
}

pub fn column(values: &[f64]) -> Array2<f64> {
    Array2::from_shape_vec((values.len(), 1), values.to_vec()).unwrap()
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn zero_network_outputs_zero() {
        let net = Mlp::from_params(&[3, 4, 2], vec![0.0; param_count(&[3, 4, 2])], OutputActivation::Identity);
        let out = net.predict(array![[1.0, -2.0, 3.0]].view()).unwrap();
        assert_eq!(out, array![[0.0, 0.0]]);
    }

    #[test]
    fn single_linear_layer() {
        let net = Mlp::from_params(&[1, 1], vec![2.0, 1.0], OutputActivation::Identity);
        assert_eq!(net.predict(array![[3.0]].view()).unwrap(), array![[7.0]]);
        let pass = net.forward(array![[3.0]].view()).unwrap();
        let g = net.backward(&pass, array![[0.5]].view(), true).unwrap();
        assert_eq!(g.params.unwrap(), vec![1.5, 0.5]);
        assert_eq!(g.input, array![[1.0]]);
    }

    #[test]
    fn dead_relu_blocks_gradient() {
        // hidden unit pre-activation = -1 for input 1
        let net = Mlp::from_params(&[1, 1, 1], vec![-1.0, 0.0, 3.0, 0.0], OutputActivation::Identity);
        let pass = net.forward(array![[1.0]].view()).unwrap();
        let g = net.backward(&pass, array![[1.0]].view(), true).unwrap();
        assert_eq!(g.params.unwrap(), vec![0.0, 0.0, 0.0, 1.0]);
        assert_eq!(g.input, array![[0.0]]);
    }

    #[test]
    fn shape_and_stale_cache_errors() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut net = Mlp::new(&[2, 3, 1], OutputActivation::Identity, &mut rng);
        assert!(matches!(net.forward(array![[1.0]].view()), Err(NnError::Shape { .. })));
        let pass = net.forward(array![[1.0, 2.0]].view()).unwrap();
        net.params_mut()[0] += 1.0;
        assert!(matches!(net.backward(&pass, array![[1.0]].view(), true), Err(NnError::StaleCache)));
        let other = net.clone();
        let pass = net.forward(array![[1.0, 2.0]].view()).unwrap();
        assert!(matches!(other.backward(&pass, array![[1.0]].view(), true), Err(NnError::StaleCache)));
    }

    #[test]
    fn scaled_tanh_respects_bounds() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let net = Mlp::new(
            &[2, 8, 1],
            OutputActivation::ScaledTanh { scale: vec![2.0], offset: vec![0.0] },
            &mut rng,
        );
        let out = net.predict(array![[100.0, -50.0], [0.1, 0.2]].view()).unwrap();
        assert!(out.iter().all(|v| v.abs() <= 2.0 && v.is_finite()));
    }

    #[test]
    fn soft_update_examples() {
        let mut target = Mlp::from_params(&[1, 1], vec![0.0, 0.0], OutputActivation::Identity);
        let online = Mlp::from_params(&[1, 1], vec![1.0, 1.0], OutputActivation::Identity);
        soft_update(&mut target, &online, 0.005).unwrap();
        assert_eq!(target.params(), &[0.005, 0.005]);
        soft_update(&mut target, &online, 1.0).unwrap();
        assert_eq!(target.params(), online.params());
        soft_update(&mut target, &online, 0.3).unwrap();
        assert_eq!(target.params(), online.params());
        let wrong = Mlp::from_params(&[2, 1], vec![0.0; 3], OutputActivation::Identity);
        assert!(matches!(soft_update(&mut target, &wrong, 0.5), Err(NnError::Architecture)));
        assert!(matches!(soft_update(&mut target, &online, 0.0), Err(NnError::Tau(_))));
    }

    #[test]
    fn soft_update_contracts_geometrically() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mut target = Mlp::new(&[3, 5, 2], OutputActivation::Identity, &mut rng);
        let online = Mlp::new(&[3, 5, 2], OutputActivation::Identity, &mut rng);
        let gap = |t: &Mlp| t.params().iter().zip(online.params()).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        let mut prev = gap(&target);
        for _ in 0..50 {
            soft_update(&mut target, &online, 0.1).unwrap();
            let now = gap(&target);
            assert!(now <= 0.9 * prev + 1e-15);
            prev = now;
        }
    }
}
