//! Fully connected network mapping `(t, x)` to the `s x d` stage values.
//!
//! Parameters live in one flat vector, layer by layer, each layer as its
//! row-major weight matrix (`out x in`) followed by its bias. The same layout
//! is used by the generic [`Mlp::forward_with`] (for tape recording) and by
//! the batched forward/backward pair used during training.

use rand::distributions::{Distribution, Uniform};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::grad;
use crate::linalg::{least_squares, Matrix};
use crate::scalar::Real;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Activation {
    Tanh,
    /// `sin(omega0 * z)` hidden units.
    Siren,
}

impl std::str::FromStr for Activation {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "tanh" => Ok(Self::Tanh),
            "siren" | "sin" => Ok(Self::Siren),
            _ => Err(Error::InvalidArchitecture(format!("unknown activation `{s}`"))),
        }
    }
}

pub const DEFAULT_OMEGA0: f64 = 30.0;

/// Hidden-layer shape of a stage network.
#[derive(Debug, Clone, PartialEq)]
pub struct Architecture {
    pub hidden_layers: usize,
    pub width: usize,
    pub activation: Activation,
    pub omega0: f64,
    /// Feed the (rescaled) time as an input besides the state.
    pub include_time: bool,
}

impl Architecture {
    pub fn tanh(hidden_layers: usize, width: usize) -> Self {
        Self { hidden_layers, width, activation: Activation::Tanh, omega0: DEFAULT_OMEGA0, include_time: true }
    }

    pub fn siren(hidden_layers: usize, width: usize) -> Self {
        Self { activation: Activation::Siren, ..Self::tanh(hidden_layers, width) }
    }

    /// Layer sizes for a `d`-dimensional state and `s` stages.
    pub fn layer_sizes(&self, d: usize, s: usize) -> Vec<usize> {
        let mut sizes = vec![d + usize::from(self.include_time)];
        sizes.extend(std::iter::repeat(self.width).take(self.hidden_layers));
        sizes.push(s * d);
        sizes
    }
}

/// Multilayer perceptron with an affine output layer.
#[derive(Debug, Clone, PartialEq)]
pub struct Mlp {
    sizes: Vec<usize>,
    activation: Activation,
    omega0: f64,
    params: Vec<f64>,
}

/// Layer values kept by [`Mlp::forward_batch`] for the backward pass.
#[derive(Debug, Clone)]
pub struct BatchCache {
    /// `acts[0]` is the input batch; `acts[l + 1]` the output of layer `l`.
    acts: Vec<Matrix<f64>>,
    /// Pre-activations of the hidden layers.
    pre: Vec<Matrix<f64>>,
}

impl BatchCache {
    pub fn output(&self) -> &Matrix<f64> {
        self.acts.last().expect("non-empty cache")
    }

    /// Output of the last hidden layer (the input batch for a linear model).
    pub fn features(&self) -> &Matrix<f64> {
        &self.acts[self.acts.len() - 2]
    }
}

impl Mlp {
    /// Seeded initialisation.
    ///
    /// Tanh layers use Xavier-uniform weights `±sqrt(6 / (fan_in + fan_out))`.
    /// SIREN uses `±1 / fan_in` on the first layer and `±sqrt(6 / fan_in) / omega0`
    /// afterwards. Biases start at zero.
    pub fn init(sizes: &[usize], activation: Activation, omega0: f64, seed: u64) -> Result<Self> {
        if sizes.len() < 2 || sizes.contains(&0) {
            return Err(Error::InvalidArchitecture(format!("layer sizes {sizes:?}")));
        }
        if activation == Activation::Siren && !(omega0 > 0.0 && omega0.is_finite()) {
            return Err(Error::InvalidArchitecture(format!("omega0 must be positive, got {omega0}")));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut params = Vec::new();
        for l in 0..sizes.len() - 1 {
            let (fan_in, fan_out) = (sizes[l], sizes[l + 1]);
            let bound = match activation {
                Activation::Tanh => (6.0 / (fan_in + fan_out) as f64).sqrt(),
                Activation::Siren if l == 0 => 1.0 / fan_in as f64,
                Activation::Siren => (6.0 / fan_in as f64).sqrt() / omega0,
            };
            let dist = Uniform::new_inclusive(-bound, bound);
            params.extend((0..fan_in * fan_out).map(|_| dist.sample(&mut rng)));
            params.extend(std::iter::repeat(0.0).take(fan_out));
        }
        Ok(Self { sizes: sizes.to_vec(), activation, omega0, params })
    }

    pub fn sizes(&self) -> &[usize] {
        &self.sizes
    }
    pub fn activation(&self) -> Activation {
        self.activation
    }
    pub fn input_dim(&self) -> usize {
        self.sizes[0]
    }
    pub fn output_dim(&self) -> usize {
        *self.sizes.last().unwrap()
    }
    pub fn num_params(&self) -> usize {
        self.params.len()
    }
    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn set_params(&mut self, params: &[f64]) -> Result<()> {
        if params.len() != self.params.len() {
            return Err(Error::ShapeMismatch { expected: self.params.len(), actual: params.len() });
        }
        self.params.copy_from_slice(params);
        Ok(())
    }

    /// Offsets of the weight block and bias block of layer `l`.
    pub fn layer_offsets(&self, l: usize) -> (usize, usize) {
        let mut off = 0;
        for k in 0..l {
            off += (self.sizes[k] + 1) * self.sizes[k + 1];
        }
        (off, off + self.sizes[l] * self.sizes[l + 1])
    }

    fn hidden<T: Real>(&self, z: T) -> T {
        match self.activation {
            Activation::Tanh => z.tanh(),
            Activation::Siren => z.scale(self.omega0).sin(),
        }
    }

    /// Forward pass with caller-supplied parameters of any [`Real`] type.
    pub fn forward_with<T: Real>(&self, theta: &[T], input: &[T]) -> Result<Vec<T>> {
        if theta.len() != self.params.len() {
            return Err(Error::ShapeMismatch { expected: self.params.len(), actual: theta.len() });
        }
        if input.len() != self.input_dim() {
            return Err(Error::DimensionMismatch { expected: self.input_dim(), actual: input.len() });
        }
        let layers = self.sizes.len() - 1;
        let mut a = input.to_vec();
        let mut terms = Vec::new();
        for l in 0..layers {
            let (n_in, n_out) = (self.sizes[l], self.sizes[l + 1]);
            let (w, b) = self.layer_offsets(l);
            let mut next = Vec::with_capacity(n_out);
            for r in 0..n_out {
                terms.clear();
                terms.extend_from_slice(&a);
                terms.push(T::one());
                let mut row: Vec<T> = theta[w + r * n_in..w + (r + 1) * n_in].to_vec();
                row.push(theta[b + r]);
                let z = T::dot(&terms, &row);
                next.push(if l + 1 < layers { self.hidden(z) } else { z });
            }
            a = next;
        }
        Ok(a)
    }

    pub fn forward(&self, input: &[f64]) -> Result<Vec<f64>> {
        self.forward_with(&self.params, input)
    }

    /// Batched forward pass; one input per row.
    pub fn forward_batch(&self, inputs: &Matrix<f64>) -> Result<BatchCache> {
        if inputs.cols() != self.input_dim() {
            return Err(Error::DimensionMismatch { expected: self.input_dim(), actual: inputs.cols() });
        }
        let n = inputs.rows();
        let layers = self.sizes.len() - 1;
        let mut acts = Vec::with_capacity(layers + 1);
        let mut pre = Vec::with_capacity(layers - 1);
        acts.push(inputs.clone());
        for l in 0..layers {
            let (n_in, n_out) = (self.sizes[l], self.sizes[l + 1]);
            let (w, b) = self.layer_offsets(l);
            let wm = &self.params[w..w + n_in * n_out];
            let bias = &self.params[b..b + n_out];
            let prev = &acts[l];
            let mut z = Matrix::zeros(n, n_out);
            for k in 0..n {
                let x = prev.row(k);
                let o = z.row_mut(k);
                for r in 0..n_out {
                    let wr = &wm[r * n_in..(r + 1) * n_in];
                    o[r] = bias[r] + wr.iter().zip(x).map(|(a, b)| a * b).sum::<f64>();
                }
            }
            if l + 1 < layers {
                acts.push(z.map(|v| self.hidden(v)));
                pre.push(z);
            } else {
                acts.push(z);
            }
        }
        Ok(BatchCache { acts, pre })
    }

    /// Parameter gradient of `Σ_k <grad_out[k], output[k]>` for a cached batch.
    pub fn backward_batch(&self, cache: &BatchCache, grad_out: &Matrix<f64>) -> Vec<f64> {
        let layers = self.sizes.len() - 1;
        let n = grad_out.rows();
        let mut grads = vec![0.0; self.params.len()];
        let mut delta = grad_out.clone();
        for l in (0..layers).rev() {
            let (n_in, n_out) = (self.sizes[l], self.sizes[l + 1]);
            let (w, b) = self.layer_offsets(l);
            if l + 1 < layers {
                let (a, z) = (&cache.acts[l + 1], &cache.pre[l]);
                for k in 0..n {
                    for ((dv, &av), &zv) in delta.row_mut(k).iter_mut().zip(a.row(k)).zip(z.row(k)) {
                        *dv *= match self.activation {
                            Activation::Tanh => 1.0 - av * av,
                            Activation::Siren => self.omega0 * (self.omega0 * zv).cos(),
                        };
                    }
                }
            }
            let prev = &cache.acts[l];
            for k in 0..n {
                let dz = delta.row(k);
                let x = prev.row(k);
                for r in 0..n_out {
                    let g = dz[r];
                    if g == 0.0 {
                        continue;
                    }
                    for (gw, &xv) in grads[w + r * n_in..w + (r + 1) * n_in].iter_mut().zip(x) {
                        *gw += g * xv;
                    }
                    grads[b + r] += g;
                }
            }
            if l > 0 {
                let wm = &self.params[w..w + n_in * n_out];
                let mut up = Matrix::zeros(n, n_in);
                for k in 0..n {
                    let dz = delta.row(k);
                    let u = up.row_mut(k);
                    for r in 0..n_out {
                        let g = dz[r];
                        if g != 0.0 {
                            for (uv, &wv) in u.iter_mut().zip(&wm[r * n_in..(r + 1) * n_in]) {
                                *uv += g * wv;
                            }
                        }
                    }
                }
                delta = up;
            }
        }
        grads
    }

    /// Least-squares fit of the output layer to `targets`, hidden layers fixed.
    ///
    /// `ridge` adds `ridge * |W|^2` to the squared residual.
    pub fn fit_output_layer(&mut self, inputs: &Matrix<f64>, targets: &Matrix<f64>, ridge: f64) -> Result<()> {
        if targets.rows() != inputs.rows() || targets.cols() != self.output_dim() {
            return Err(Error::ShapeMismatch { expected: inputs.rows() * self.output_dim(), actual: targets.rows() * targets.cols() });
        }
        let cache = self.forward_batch(inputs)?;
        let h = cache.features();
        let q = h.cols() + 1;
        let feats = Matrix::from_fn(h.rows(), q, |k, j| if j + 1 == q { 1.0 } else { h.get(k, j) });
        let sol = least_squares(&feats, targets, ridge)?;
        let l = self.sizes.len() - 2;
        let (w, b) = self.layer_offsets(l);
        let n_in = self.sizes[l];
        for r in 0..self.output_dim() {
            for j in 0..n_in {
                self.params[w + r * n_in + j] = sol.get(j, r);
            }
            self.params[b + r] = sol.get(n_in, r);
        }
        Ok(())
    }
}

/// Gradient of a scalar program of the network parameters, recorded on a tape.
pub fn parameter_gradient<F>(mlp: &Mlp, loss: F) -> Result<(f64, Vec<f64>)>
where
    F: for<'t> FnOnce(&Mlp, &[grad::Var<'t>]) -> Result<grad::Var<'t>>,
{
    grad::gradient(mlp.params(), |_, theta| loss(mlp, theta))
}

/// Stage-value network `χ^θ(t, x)` with its input encoding.
#[derive(Debug, Clone, PartialEq)]
pub struct StageNet {
    pub mlp: Mlp,
    pub stages: usize,
    pub dim: usize,
    pub include_time: bool,
    /// Time window mapped onto `[-1, 1]`.
    pub time_span: (f64, f64),
}

impl StageNet {
    pub fn new(arch: &Architecture, d: usize, s: usize, time_span: (f64, f64), seed: u64) -> Result<Self> {
        if d == 0 || s == 0 {
            return Err(Error::InvalidArchitecture("state dimension and stage count must be positive".into()));
        }
        if !(time_span.1 > time_span.0) {
            return Err(Error::InvalidArchitecture("time span must be increasing".into()));
        }
        let mlp = Mlp::init(&arch.layer_sizes(d, s), arch.activation, arch.omega0, seed)?;
        Ok(Self { mlp, stages: s, dim: d, include_time: arch.include_time, time_span })
    }

    /// Network input for sample `(t, x)`.
    pub fn encode(&self, t: f64, x: &[f64]) -> Vec<f64> {
        let mut v = Vec::with_capacity(self.mlp.input_dim());
        if self.include_time {
            let (a, b) = self.time_span;
            v.push(2.0 * (t - a) / (b - a) - 1.0);
        }
        v.extend_from_slice(x);
        v
    }

    /// Input batch for a list of samples.
    pub fn encode_batch(&self, times: &[f64], states: &Matrix<f64>) -> Matrix<f64> {
        let rows: Vec<Vec<f64>> = times.iter().enumerate().map(|(k, &t)| self.encode(t, states.row(k))).collect();
        Matrix::from_rows(&rows)
    }

    /// Predicted stages, one row per stage (segment `i` of the output is stage `i`).
    pub fn forward(&self, t: f64, x: &[f64]) -> Result<Matrix<f64>> {
        if x.len() != self.dim {
            return Err(Error::DimensionMismatch { expected: self.dim, actual: x.len() });
        }
        let out = self.mlp.forward(&self.encode(t, x))?;
        Ok(Matrix::from_vec(self.stages, self.dim, out))
    }
}
