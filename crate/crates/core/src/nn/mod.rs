//! Fully-connected networks with exact backpropagation, and the split
//! network built from them.

mod checkpoint;
mod monolithic;
mod split;

pub use checkpoint::{load_checkpoint, read_checkpoint, save_checkpoint, write_checkpoint};
pub use monolithic::MonolithicNet;
pub use split::{
    central_backward, central_forward, grad_block_weights, local_backward, local_forward, loss,
    mse, output_gradient, sgd_step, ActivationBundle, LossSpec, NetSpec, SplitGrad, SplitNet,
};

use rand::Rng;

use crate::error::{Error, Result};
use crate::linalg::Matrix;

/// Hidden-layer nonlinearity. Output layers are always linear.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Activation {
    Relu,
    Identity,
}

impl Activation {
    pub fn code(self) -> u64 {
        match self {
            Activation::Relu => 0,
            Activation::Identity => 1,
        }
    }

    pub fn from_code(code: u64) -> Option<Self> {
        match code {
            0 => Some(Activation::Relu),
            1 => Some(Activation::Identity),
            _ => None,
        }
    }

    fn apply(self, m: &mut Matrix) {
        if self == Activation::Relu {
            for v in m.as_mut_slice() {
                if *v <= 0.0 {
                    *v = 0.0;
                }
            }
        }
    }

    /// Multiplies `grad` by the derivative evaluated at `pre`.
    fn backprop(self, pre: &Matrix, grad: &mut Matrix) {
        if self == Activation::Relu {
            for (g, &z) in grad.as_mut_slice().iter_mut().zip(pre.as_slice()) {
                if z <= 0.0 {
                    *g = 0.0;
                }
            }
        }
    }
}

/// One affine layer, `z = x·W + b` with `W` stored `in × out`.
#[derive(Clone, Debug, PartialEq)]
pub struct Dense {
    pub weights: Matrix,
    pub bias: Vec<f64>,
}

impl Dense {
    pub fn zeros(input: usize, output: usize) -> Self {
        Self {
            weights: Matrix::zeros(input, output),
            bias: vec![0.0; output],
        }
    }

    /// Weights and biases uniform in `±1/√fan_in`.
    pub fn init<R: Rng + ?Sized>(input: usize, output: usize, rng: &mut R) -> Self {
        let s = 1.0 / (input.max(1) as f64).sqrt();
        let mut d = Self::zeros(input, output);
        for w in d.weights.as_mut_slice() {
            *w = rng.random_range(-s..s);
        }
        for b in d.bias.iter_mut() {
            *b = rng.random_range(-s..s);
        }
        d
    }

    pub fn input_dim(&self) -> usize {
        self.weights.rows()
    }

    pub fn output_dim(&self) -> usize {
        self.weights.cols()
    }

    pub fn param_count(&self) -> usize {
        self.weights.as_slice().len() + self.bias.len()
    }

    fn forward(&self, x: &Matrix) -> Matrix {
        let mut z = x.matmul(&self.weights);
        z.add_row_vector(&self.bias);
        z
    }
}

/// Gradient of one dense layer.
#[derive(Clone, Debug, PartialEq)]
pub struct DenseGrad {
    pub weights: Matrix,
    pub bias: Vec<f64>,
}

/// Forward-pass caches needed by [`Mlp::backward`].
#[derive(Clone, Debug, PartialEq)]
pub struct MlpCache {
    /// Input to each layer.
    pub inputs: Vec<Matrix>,
    /// Pre-activation of each layer.
    pub pre: Vec<Matrix>,
}

/// A stack of dense layers with a shared hidden activation.
#[derive(Clone, Debug, PartialEq)]
pub struct Mlp {
    pub layers: Vec<Dense>,
    pub hidden: Activation,
}

/// Gradient of every layer of an [`Mlp`].
#[derive(Clone, Debug, PartialEq)]
pub struct MlpGrad {
    pub layers: Vec<DenseGrad>,
}

impl MlpGrad {
    pub fn zeros_like(net: &Mlp) -> Self {
        Self {
            layers: net
                .layers
                .iter()
                .map(|l| DenseGrad {
                    weights: Matrix::zeros(l.input_dim(), l.output_dim()),
                    bias: vec![0.0; l.output_dim()],
                })
                .collect(),
        }
    }

    /// Squared Euclidean norm over all entries.
    pub fn sq_norm(&self) -> f64 {
        self.layers
            .iter()
            .map(|l| l.weights.sum_of_squares() + l.bias.iter().map(|b| b * b).sum::<f64>())
            .sum()
    }

    pub fn is_zero(&self) -> bool {
        self.layers.iter().all(|l| {
            l.weights.as_slice().iter().all(|&v| v == 0.0) && l.bias.iter().all(|&v| v == 0.0)
        })
    }

    /// Flattened in layer order: weights row-major, then bias.
    pub fn flatten(&self) -> Vec<f64> {
        let mut v = Vec::new();
        for l in &self.layers {
            v.extend_from_slice(l.weights.as_slice());
            v.extend_from_slice(&l.bias);
        }
        v
    }
}

impl Mlp {
    /// Randomly initialized network with the given layer widths.
    pub fn new<R: Rng + ?Sized>(widths: &[usize], hidden: Activation, rng: &mut R) -> Self {
        Self {
            layers: widths
                .windows(2)
                .map(|w| Dense::init(w[0], w[1], rng))
                .collect(),
            hidden,
        }
    }

    pub fn zeros(widths: &[usize], hidden: Activation) -> Self {
        Self {
            layers: widths.windows(2).map(|w| Dense::zeros(w[0], w[1])).collect(),
            hidden,
        }
    }

    pub fn widths(&self) -> Vec<usize> {
        let mut w: Vec<usize> = self.layers.iter().map(Dense::input_dim).collect();
        if let Some(l) = self.layers.last() {
            w.push(l.output_dim());
        }
        w
    }

    pub fn input_dim(&self) -> usize {
        self.layers.first().map_or(0, Dense::input_dim)
    }

    pub fn output_dim(&self) -> usize {
        self.layers.last().map_or(0, Dense::output_dim)
    }

    pub fn param_count(&self) -> usize {
        self.layers.iter().map(Dense::param_count).sum()
    }

    /// Multiply-accumulate count of one forward pass for one sample.
    pub fn macs_per_sample(&self) -> usize {
        self.layers
            .iter()
            .map(|l| l.input_dim() * l.output_dim())
            .sum()
    }

    pub fn sq_norm(&self) -> f64 {
        self.layers
            .iter()
            .map(|l| l.weights.sum_of_squares() + l.bias.iter().map(|b| b * b).sum::<f64>())
            .sum()
    }

    pub fn is_finite(&self) -> bool {
        self.layers
            .iter()
            .all(|l| l.weights.is_finite() && l.bias.iter().all(|b| b.is_finite()))
    }

    /// Batch forward pass; `x` is `batch × input_dim`.
    pub fn forward(&self, x: &Matrix) -> Result<(Matrix, MlpCache)> {
        if x.cols() != self.input_dim() {
            return Err(Error::DimensionMismatch {
                what: "network input width",
                expected: self.input_dim(),
                got: x.cols(),
            });
        }
        let n = self.layers.len();
        let mut inputs = Vec::with_capacity(n);
        let mut pre = Vec::with_capacity(n);
        let mut h = x.clone();
        for (i, layer) in self.layers.iter().enumerate() {
            let z = layer.forward(&h);
            inputs.push(h);
            let mut a = z.clone();
            if i + 1 < n {
                self.hidden.apply(&mut a);
            }
            pre.push(z);
            h = a;
        }
        Ok((h, MlpCache { inputs, pre }))
    }

    /// Forward pass without caches.
    pub fn predict(&self, x: &Matrix) -> Result<Matrix> {
        if x.cols() != self.input_dim() {
            return Err(Error::DimensionMismatch {
                what: "network input width",
                expected: self.input_dim(),
                got: x.cols(),
            });
        }
        let n = self.layers.len();
        let mut h = x.clone();
        for (i, layer) in self.layers.iter().enumerate() {
            h = layer.forward(&h);
            if i + 1 < n {
                self.hidden.apply(&mut h);
            }
        }
        Ok(h)
    }

    /// Backpropagates `upstream = ∂L/∂output` through the cached pass.
    ///
    /// Returns the parameter gradient and, when `want_input_grad`, the
    /// gradient with respect to the network input.
    pub fn backward(
        &self,
        cache: &MlpCache,
        upstream: &Matrix,
        want_input_grad: bool,
    ) -> Result<(MlpGrad, Option<Matrix>)> {
        let n = self.layers.len();
        if cache.inputs.len() != n || cache.pre.len() != n {
            return Err(Error::Precondition("forward cache does not match network".into()));
        }
        let batch = cache.inputs.first().map_or(0, Matrix::rows);
        if upstream.rows() != batch || upstream.cols() != self.output_dim() {
            return Err(Error::DimensionMismatch {
                what: "upstream gradient shape",
                expected: batch * self.output_dim(),
                got: upstream.rows() * upstream.cols(),
            });
        }
        let mut grads = Vec::with_capacity(n);
        let mut delta = upstream.clone();
        let mut input_grad = None;
        for i in (0..n).rev() {
            if i + 1 < n {
                self.hidden.backprop(&cache.pre[i], &mut delta);
            }
            let layer = &self.layers[i];
            let gw = cache.inputs[i].t_matmul(&delta);
            let gb = delta.column_sums();
            if i > 0 || want_input_grad {
                let prev = delta.matmul_t(&layer.weights);
                if i == 0 {
                    input_grad = Some(prev);
                    delta = Matrix::zeros(0, 0);
                } else {
                    delta = prev;
                }
            }
            grads.push(DenseGrad {
                weights: gw,
                bias: gb,
            });
        }
        grads.reverse();
        Ok((MlpGrad { layers: grads }, input_grad))
    }

    /// Adds `2λθ`, the gradient of `λ‖θ‖²`.
    pub fn add_l2_grad(&self, grad: &mut MlpGrad, lambda: f64) {
        if lambda == 0.0 {
            return;
        }
        for (g, l) in grad.layers.iter_mut().zip(&self.layers) {
            for (gv, &w) in g.weights.as_mut_slice().iter_mut().zip(l.weights.as_slice()) {
                *gv += 2.0 * lambda * w;
            }
            for (gv, &b) in g.bias.iter_mut().zip(&l.bias) {
                *gv += 2.0 * lambda * b;
            }
        }
    }

    /// `θ ← θ − η·g`.
    pub fn apply_gradient(&mut self, grad: &MlpGrad, eta: f64) {
        for (l, g) in self.layers.iter_mut().zip(&grad.layers) {
            for (w, &gv) in l.weights.as_mut_slice().iter_mut().zip(g.weights.as_slice()) {
                *w -= eta * gv;
            }
            for (b, &gv) in l.bias.iter_mut().zip(&g.bias) {
                *b -= eta * gv;
            }
        }
    }

    /// Mutable view of every parameter in flatten order.
    pub fn params_mut(&mut self) -> Vec<&mut f64> {
        let mut v = Vec::with_capacity(self.param_count());
        for l in self.layers.iter_mut() {
            v.extend(l.weights.as_mut_slice().iter_mut());
            v.extend(l.bias.iter_mut());
        }
        v
    }

    pub fn flatten(&self) -> Vec<f64> {
        let mut v = Vec::with_capacity(self.param_count());
        for l in &self.layers {
            v.extend_from_slice(l.weights.as_slice());
            v.extend_from_slice(&l.bias);
        }
        v
    }
}
