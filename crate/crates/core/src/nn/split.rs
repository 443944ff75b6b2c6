//! The split network: `K` local models feeding one central model.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{Activation, Mlp, MlpCache, MlpGrad};
use crate::error::{Error, Result};
use crate::linalg::Matrix;

/// Architecture of the split network.
#[derive(Clone, Debug, PartialEq)]
pub struct NetSpec {
    /// Layer widths of every local model, input first.
    pub local_arch: Vec<usize>,
    /// Layer widths of the central model; input width must be `K·d`.
    pub central_arch: Vec<usize>,
    pub num_su: usize,
    pub hidden: Activation,
}

impl NetSpec {
    /// Network I: wide local models, narrow central model.
    pub fn network_i(num_su: usize, local_hidden: usize) -> Self {
        Self {
            local_arch: vec![203, local_hidden, 8],
            central_arch: vec![8 * num_su, 24, 8],
            num_su,
            hidden: Activation::Relu,
        }
    }

    /// Network II: narrow local models, wide central model.
    pub fn network_ii(num_su: usize) -> Self {
        Self {
            local_arch: vec![203, 32, 8],
            central_arch: vec![8 * num_su, 512, 8],
            num_su,
            hidden: Activation::Relu,
        }
    }

    /// Local output dimension `d`.
    pub fn local_output_dim(&self) -> usize {
        self.local_arch.last().copied().unwrap_or(0)
    }

    pub fn local_input_dim(&self) -> usize {
        self.local_arch.first().copied().unwrap_or(0)
    }

    pub fn output_dim(&self) -> usize {
        self.central_arch.last().copied().unwrap_or(0)
    }

    pub fn validate(&self) -> Result<()> {
        if self.num_su == 0 {
            return Err(Error::InvalidConfig("split network needs at least one SU".into()));
        }
        if self.local_arch.len() < 2 || self.central_arch.len() < 2 {
            return Err(Error::InvalidConfig(
                "each model needs at least an input and an output width".into(),
            ));
        }
        if self.local_arch.iter().chain(&self.central_arch).any(|&w| w == 0) {
            return Err(Error::InvalidConfig("layer widths must be positive".into()));
        }
        let want = self.num_su * self.local_output_dim();
        if self.central_arch[0] != want {
            return Err(Error::DimensionMismatch {
                what: "central input width (K·d)",
                expected: want,
                got: self.central_arch[0],
            });
        }
        Ok(())
    }

    /// Validates against a dataset's feature and label widths.
    pub fn validate_for(&self, feature_dim: usize, label_dim: usize) -> Result<()> {
        self.validate()?;
        if self.local_input_dim() != feature_dim {
            return Err(Error::DimensionMismatch {
                what: "local input width (d_k)",
                expected: feature_dim,
                got: self.local_input_dim(),
            });
        }
        if self.output_dim() != label_dim {
            return Err(Error::DimensionMismatch {
                what: "central output width",
                expected: label_dim,
                got: self.output_dim(),
            });
        }
        Ok(())
    }

    /// Local forward multiply-accumulates per sample.
    pub fn local_macs(&self) -> usize {
        self.local_arch.windows(2).map(|w| w[0] * w[1]).sum()
    }

    /// Central forward multiply-accumulates per sample.
    pub fn central_macs(&self) -> usize {
        self.central_arch.windows(2).map(|w| w[0] * w[1]).sum()
    }
}

/// Regularized loss settings; the regularizer is `λ·‖θ‖²` per block.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LossSpec {
    pub lambda: f64,
}

impl Default for LossSpec {
    fn default() -> Self {
        Self { lambda: 0.0 }
    }
}

impl LossSpec {
    pub fn validate(&self) -> Result<()> {
        if !(self.lambda >= 0.0) {
            return Err(Error::InvalidConfig("lambda must be >= 0".into()));
        }
        Ok(())
    }
}

/// Parameters `Θ = [θ₀, θ₁, …, θ_K]`.
#[derive(Clone, Debug, PartialEq)]
pub struct SplitNet {
    pub spec: NetSpec,
    pub central: Mlp,
    pub locals: Vec<Mlp>,
}

impl SplitNet {
    /// Seeded initialization; each block draws from its own stream.
    pub fn new(spec: NetSpec, seed: u64) -> Result<Self> {
        spec.validate()?;
        let block_rng = |stream: u64| {
            let mut r = ChaCha8Rng::seed_from_u64(seed);
            r.set_stream(stream);
            r
        };
        let central = Mlp::new(&spec.central_arch, spec.hidden, &mut block_rng(0));
        let locals = (0..spec.num_su)
            .map(|k| Mlp::new(&spec.local_arch, spec.hidden, &mut block_rng(k as u64 + 1)))
            .collect();
        Ok(Self {
            spec,
            central,
            locals,
        })
    }

    pub fn num_su(&self) -> usize {
        self.locals.len()
    }

    /// Squared norm of every block, central first.
    pub fn block_sq_norms(&self) -> Vec<f64> {
        std::iter::once(&self.central)
            .chain(&self.locals)
            .map(Mlp::sq_norm)
            .collect()
    }

    pub fn is_finite(&self) -> bool {
        self.central.is_finite() && self.locals.iter().all(Mlp::is_finite)
    }

    /// Full forward pass with fresh local outputs, no caches.
    pub fn predict(&self, features: &[Matrix]) -> Result<Matrix> {
        if features.len() != self.num_su() {
            return Err(Error::DimensionMismatch {
                what: "feature block count",
                expected: self.num_su(),
                got: features.len(),
            });
        }
        let p: Vec<Matrix> = self
            .locals
            .iter()
            .zip(features)
            .map(|(m, x)| m.predict(x))
            .collect::<Result<_>>()?;
        let refs: Vec<&Matrix> = p.iter().collect();
        self.central.predict(&Matrix::hconcat(&refs)?)
    }

    /// Fresh forward for every SU, returning the bundle needed for backward.
    pub fn forward(&self, features: &[Matrix]) -> Result<ActivationBundle> {
        if features.len() != self.num_su() {
            return Err(Error::DimensionMismatch {
                what: "feature block count",
                expected: self.num_su(),
                got: features.len(),
            });
        }
        let mut outputs = Vec::with_capacity(self.num_su());
        let mut caches = Vec::with_capacity(self.num_su());
        for (m, x) in self.locals.iter().zip(features) {
            let (p, c) = local_forward(m, x)?;
            outputs.push(p);
            caches.push(Some(c));
        }
        central_forward(&self.central, outputs, caches)
    }

    /// Exact gradient of the loss for every block at the current parameters.
    pub fn gradient(
        &self,
        features: &[Matrix],
        labels: &Matrix,
        loss_spec: &LossSpec,
    ) -> Result<(f64, SplitGrad)> {
        let bundle = self.forward(features)?;
        let value = loss(&bundle.output, labels, self, loss_spec)?;
        let (g0, upstream) = central_backward(&self.central, &bundle, labels, loss_spec)?;
        let mut locals = Vec::with_capacity(self.num_su());
        for (k, up) in upstream.iter().enumerate() {
            let cache = bundle.local_caches[k].as_ref().expect("fresh forward");
            locals.push(local_backward(&self.locals[k], cache, up, loss_spec)?);
        }
        Ok((
            value,
            SplitGrad {
                central: g0,
                locals,
            },
        ))
    }

    /// `Θ ← Θ − η·g` for every block.
    pub fn apply(&mut self, grad: &SplitGrad, eta: f64) {
        sgd_step(&mut self.central, &grad.central, eta);
        for (m, g) in self.locals.iter_mut().zip(&grad.locals) {
            sgd_step(m, g, eta);
        }
    }
}

/// Gradients of every block, central first.
#[derive(Clone, Debug, PartialEq)]
pub struct SplitGrad {
    pub central: MlpGrad,
    pub locals: Vec<MlpGrad>,
}

impl SplitGrad {
    /// Squared norm per block, central first.
    pub fn block_sq_norms(&self) -> Vec<f64> {
        std::iter::once(&self.central)
            .chain(&self.locals)
            .map(MlpGrad::sq_norm)
            .collect()
    }
}

/// Everything the server and SUs hold after a forward pass.
#[derive(Clone, Debug)]
pub struct ActivationBundle {
    /// `p^k` per SU, `batch × d`; fresh or cached.
    pub local_outputs: Vec<Matrix>,
    /// Forward caches of SUs that computed fresh outputs.
    pub local_caches: Vec<Option<MlpCache>>,
    pub central_cache: MlpCache,
    /// `ŷ`, `batch × label_dim`.
    pub output: Matrix,
}

/// `p^k = C₁(θ_k; x^k)` with caches for backprop.
pub fn local_forward(model: &Mlp, features: &Matrix) -> Result<(Matrix, MlpCache)> {
    model.forward(features)
}

/// Concatenates the SU blocks in index order and runs the central model.
pub fn central_forward(
    central: &Mlp,
    local_outputs: Vec<Matrix>,
    local_caches: Vec<Option<MlpCache>>,
) -> Result<ActivationBundle> {
    let width: usize = local_outputs.iter().map(Matrix::cols).sum();
    if width != central.input_dim() {
        return Err(Error::DimensionMismatch {
            what: "concatenated local output width",
            expected: central.input_dim(),
            got: width,
        });
    }
    if let Some(first) = local_outputs.first() {
        let d = first.cols();
        if let Some(bad) = local_outputs.iter().find(|p| p.cols() != d) {
            return Err(Error::DimensionMismatch {
                what: "local output block width",
                expected: d,
                got: bad.cols(),
            });
        }
    }
    let refs: Vec<&Matrix> = local_outputs.iter().collect();
    let input = Matrix::hconcat(&refs)?;
    let (output, central_cache) = central.forward(&input)?;
    Ok(ActivationBundle {
        local_outputs,
        local_caches,
        central_cache,
        output,
    })
}

/// Mean over the batch of `‖y − ŷ‖²`.
pub fn mse(prediction: &Matrix, labels: &Matrix) -> Result<f64> {
    if prediction.rows() == 0 {
        return Err(Error::EmptyBatch);
    }
    if prediction.rows() != labels.rows() || prediction.cols() != labels.cols() {
        return Err(Error::DimensionMismatch {
            what: "prediction/label shape",
            expected: labels.rows() * labels.cols(),
            got: prediction.rows() * prediction.cols(),
        });
    }
    let mut total = 0.0;
    for i in 0..labels.rows() {
        let row: f64 = prediction
            .row(i)
            .iter()
            .zip(labels.row(i))
            .map(|(p, y)| (y - p) * (y - p))
            .sum();
        total += row;
    }
    Ok(total / labels.rows() as f64)
}

/// `(1/M_b)·Σ‖y − ŷ‖² + λ·Σ_k ‖θ_k‖²`.
pub fn loss(prediction: &Matrix, labels: &Matrix, net: &SplitNet, spec: &LossSpec) -> Result<f64> {
    let data = mse(prediction, labels)?;
    if spec.lambda == 0.0 {
        return Ok(data);
    }
    Ok(data + spec.lambda * net.block_sq_norms().iter().sum::<f64>())
}

/// `∂L/∂ŷ = (2/M_b)(ŷ − y)`.
pub fn output_gradient(prediction: &Matrix, labels: &Matrix) -> Result<Matrix> {
    if prediction.rows() == 0 {
        return Err(Error::EmptyBatch);
    }
    let scale = 2.0 / prediction.rows() as f64;
    let data = prediction
        .as_slice()
        .iter()
        .zip(labels.as_slice())
        .map(|(p, y)| scale * (p - y))
        .collect();
    Matrix::from_vec(prediction.rows(), prediction.cols(), data)
}

/// Server-side backward: `g(θ₀)` and `∂L/∂p^k` for each SU.
pub fn central_backward(
    central: &Mlp,
    bundle: &ActivationBundle,
    labels: &Matrix,
    spec: &LossSpec,
) -> Result<(MlpGrad, Vec<Matrix>)> {
    if bundle.output.rows() != labels.rows() {
        return Err(Error::Precondition(
            "activation bundle was computed for a different batch".into(),
        ));
    }
    let upstream = output_gradient(&bundle.output, labels)?;
    let (mut g0, dinput) = central.backward(&bundle.central_cache, &upstream, true)?;
    central.add_l2_grad(&mut g0, spec.lambda);
    let dinput = dinput.expect("input gradient requested");
    let mut blocks = Vec::with_capacity(bundle.local_outputs.len());
    let mut offset = 0;
    for p in &bundle.local_outputs {
        blocks.push(dinput.column_block(offset, p.cols()));
        offset += p.cols();
    }
    Ok((g0, blocks))
}

/// SU-side backward from the received `∂L/∂p^k`, including `λ` for `θ_k`.
pub fn local_backward(
    model: &Mlp,
    cache: &MlpCache,
    upstream: &Matrix,
    spec: &LossSpec,
) -> Result<MlpGrad> {
    let (mut g, _) = model.backward(cache, upstream, false)?;
    model.add_l2_grad(&mut g, spec.lambda);
    Ok(g)
}

/// `θ ← θ − η·g`.
pub fn sgd_step(model: &mut Mlp, grad: &MlpGrad, eta: f64) {
    model.apply_gradient(grad, eta);
}

/// `v_k = ‖∇_k‖² / Σ_j ‖∇_j‖²` over the `K+1` blocks, central first.
///
/// Returns `None` when every block's gradient is zero (converged).
pub fn grad_block_weights(block_sq_norms: &[f64]) -> Option<Vec<f64>> {
    let total: f64 = block_sq_norms.iter().sum();
    if !(total > 0.0) {
        return None;
    }
    Some(block_sq_norms.iter().map(|&s| s / total).collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny_spec() -> NetSpec {
        NetSpec {
            local_arch: vec![3, 4, 2],
            central_arch: vec![4, 5, 3],
            num_su: 2,
            hidden: Activation::Relu,
        }
    }

    fn features(rows: usize) -> Vec<Matrix> {
        (0..2)
            .map(|k| {
                Matrix::from_vec(
                    rows,
                    3,
                    (0..rows * 3)
                        .map(|i| ((i + 7 * k) as f64 * 0.37).sin())
                        .collect(),
                )
                .unwrap()
            })
            .collect()
    }

    #[test]
    fn presets_validate() {
        NetSpec::network_i(4, 2048).validate().unwrap();
        NetSpec::network_ii(4).validate().unwrap();
        NetSpec::network_ii(8).validate_for(203, 8).unwrap();
        assert_eq!(NetSpec::network_i(4, 2048).central_arch[0], 32);
        let mut bad = NetSpec::network_i(4, 2048);
        bad.num_su = 8;
        assert!(bad.validate().is_err());
    }

    #[test]
    fn loss_examples() {
        let net = SplitNet::new(tiny_spec(), 0).unwrap();
        let y = Matrix::from_rows(&[[1.0, 2.0, 3.0]]).unwrap();
        assert_eq!(loss(&y, &y, &net, &LossSpec::default()).unwrap(), 0.0);
        let y0 = Matrix::zeros(1, 8);
        let ones = Matrix::from_vec(1, 8, vec![1.0; 8]).unwrap();
        assert_eq!(mse(&ones, &y0).unwrap(), 8.0);
        assert!(matches!(
            mse(&Matrix::zeros(0, 8), &Matrix::zeros(0, 8)),
            Err(Error::EmptyBatch)
        ));
    }

    #[test]
    fn regularizer_example() {
        let mut net = SplitNet::new(tiny_spec(), 0).unwrap();
        for m in std::iter::once(&mut net.central).chain(net.locals.iter_mut()) {
            for p in m.params_mut() {
                *p = 0.0;
            }
        }
        net.locals[1].layers[0].weights.set(0, 0, 2.0);
        let y = Matrix::from_rows(&[[1.0, 2.0, 3.0]]).unwrap();
        let l = loss(&y, &y, &net, &LossSpec { lambda: 1.0 }).unwrap();
        assert_eq!(l, 4.0);
    }

    #[test]
    fn central_forward_concatenates_in_order() {
        let mut central = Mlp::zeros(&[4, 4], Activation::Relu);
        for i in 0..4 {
            central.layers[0].weights.set(i, i, 1.0);
        }
        let p1 = Matrix::from_rows(&[[1.0, 2.0]]).unwrap();
        let p2 = Matrix::from_rows(&[[3.0, 4.0]]).unwrap();
        let b = central_forward(&central, vec![p1.clone(), p2.clone()], vec![None, None]).unwrap();
        assert_eq!(b.output.row(0), &[1.0, 2.0, 3.0, 4.0]);

        central.layers[0].weights.set(0, 1, 0.5);
        let a = central_forward(&central, vec![p1.clone(), p2.clone()], vec![None, None]).unwrap();
        let s = central_forward(&central, vec![p2, p1], vec![None, None]).unwrap();
        assert_ne!(a.output, s.output);
    }

    #[test]
    fn central_forward_checks_blocks() {
        let central = Mlp::zeros(&[4, 3], Activation::Relu);
        let p = Matrix::zeros(1, 2);
        assert!(central_forward(&central, vec![p.clone()], vec![None]).is_err());
        let q = Matrix::zeros(1, 1);
        let r = Matrix::zeros(1, 3);
        assert!(central_forward(&central, vec![q, r], vec![None, None]).is_err());
    }

    #[test]
    fn zero_residual_gives_zero_gradients() {
        let net = SplitNet::new(tiny_spec(), 3).unwrap();
        let x = features(4);
        let y = net.predict(&x).unwrap();
        let (l, g) = net.gradient(&x, &y, &LossSpec::default()).unwrap();
        assert_eq!(l, 0.0);
        assert!(g.central.is_zero());
        assert!(g.locals.iter().all(MlpGrad::is_zero));
        assert_eq!(grad_block_weights(&g.block_sq_norms()), None);
    }

    #[test]
    fn linear_central_gradient_closed_form() {
        // single linear layer, single sample: g(W) = 2 pᵀ (ŷ − y), g(b) = 2(ŷ − y)
        let mut central = Mlp::zeros(&[2, 2], Activation::Relu);
        central.layers[0].weights = Matrix::from_rows(&[[1.0, 2.0], [3.0, -1.0]]).unwrap();
        central.layers[0].bias = vec![0.5, 0.0];
        let p = Matrix::from_rows(&[[1.0, 2.0]]).unwrap();
        let y = Matrix::from_rows(&[[1.0, 1.0]]).unwrap();
        let b = central_forward(&central, vec![p], vec![None]).unwrap();
        // ŷ = [1+6+0.5, 2-2+0] = [7.5, 0]; r = [6.5, -1]
        assert_eq!(b.output.row(0), &[7.5, 0.0]);
        let (g, up) = central_backward(&central, &b, &y, &LossSpec::default()).unwrap();
        let gw = &g.layers[0].weights;
        assert_eq!(gw.row(0), &[13.0, -2.0]);
        assert_eq!(gw.row(1), &[26.0, -4.0]);
        assert_eq!(g.layers[0].bias, vec![13.0, -2.0]);
        // ∂L/∂p = W·2r = [13 - 4, 39 + 2]
        assert_eq!(up[0].row(0), &[9.0, 41.0]);
    }

    #[test]
    fn local_backward_zero_upstream() {
        let net = SplitNet::new(tiny_spec(), 5).unwrap();
        let x = features(3);
        let (_, cache) = local_forward(&net.locals[0], &x[0]).unwrap();
        let g = local_backward(
            &net.locals[0],
            &cache,
            &Matrix::zeros(3, 2),
            &LossSpec::default(),
        )
        .unwrap();
        assert!(g.is_zero());
    }

    #[test]
    fn local_backward_linear_outer_product() {
        let mut m = Mlp::zeros(&[2, 2], Activation::Relu);
        m.layers[0].weights.set(0, 0, 1.0);
        m.layers[0].weights.set(1, 1, 1.0);
        let x = Matrix::from_rows(&[[3.0, -2.0]]).unwrap();
        let (_, cache) = local_forward(&m, &x).unwrap();
        let up = Matrix::from_rows(&[[0.5, 4.0]]).unwrap();
        let g = local_backward(&m, &cache, &up, &LossSpec::default()).unwrap();
        // g(W)[i][j] = x_i · up_j with W stored in × out
        assert_eq!(g.layers[0].weights.row(0), &[1.5, 12.0]);
        assert_eq!(g.layers[0].weights.row(1), &[-1.0, -8.0]);
    }

    #[test]
    fn sgd_examples() {
        let mut m = Mlp::zeros(&[1, 1], Activation::Relu);
        m.layers[0].weights.set(0, 0, 1.0);
        let mut g = MlpGrad::zeros_like(&m);
        sgd_step(&mut m, &g, 0.5);
        assert_eq!(m.layers[0].weights.get(0, 0), 1.0);
        g.layers[0].weights.set(0, 0, 2.0);
        sgd_step(&mut m, &g, 0.0);
        assert_eq!(m.layers[0].weights.get(0, 0), 1.0);
        sgd_step(&mut m, &g, 0.5);
        assert_eq!(m.layers[0].weights.get(0, 0), 0.0);
    }

    #[test]
    fn block_weight_examples() {
        assert_eq!(
            grad_block_weights(&[0.0, 3.0, 0.0]).unwrap(),
            vec![0.0, 1.0, 0.0]
        );
        let v = grad_block_weights(&[2.0; 5]).unwrap();
        assert!(v.iter().all(|&x| (x - 0.2).abs() < 1e-15));
        assert_eq!(grad_block_weights(&[0.0, 0.0]), None);
    }
}
