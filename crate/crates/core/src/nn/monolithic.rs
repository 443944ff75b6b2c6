//! Single-network reference for the split model.
//!
//! The local models are folded into one stage of block-diagonal dense
//! layers acting on the concatenated feature vector; the central model is
//! appended unchanged. Off-block weights are structural zeros and are never
//! updated. With every SU active, one step of this network and one step of
//! the split network yield bit-identical parameters.

use super::{Activation, Dense, Mlp, SplitNet};
use crate::error::{Error, Result};
use crate::linalg::Matrix;

/// One block-diagonal layer and the extent of each block.
#[derive(Clone, Debug, PartialEq)]
struct BlockLayer {
    dense: Dense,
    /// `(row_start, rows, col_start, cols)` per SU.
    blocks: Vec<(usize, usize, usize, usize)>,
}

impl BlockLayer {
    fn mask(&self, g: &mut Matrix) {
        let mut keep = Matrix::zeros(g.rows(), g.cols());
        for &(r0, nr, c0, nc) in &self.blocks {
            for r in r0..r0 + nr {
                keep.row_mut(r)[c0..c0 + nc].copy_from_slice(&g.row(r)[c0..c0 + nc]);
            }
        }
        *g = keep;
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct MonolithicNet {
    stage: Vec<BlockLayer>,
    hidden: Activation,
    pub central: Mlp,
}

impl MonolithicNet {
    pub fn from_split(net: &SplitNet) -> Self {
        let depth = net.locals[0].layers.len();
        let mut stage = Vec::with_capacity(depth);
        for l in 0..depth {
            let rows: usize = net.locals.iter().map(|m| m.layers[l].input_dim()).sum();
            let cols: usize = net.locals.iter().map(|m| m.layers[l].output_dim()).sum();
            let mut dense = Dense::zeros(rows, cols);
            let mut blocks = Vec::with_capacity(net.num_su());
            let (mut r0, mut c0) = (0, 0);
            for m in &net.locals {
                let layer = &m.layers[l];
                let (nr, nc) = (layer.input_dim(), layer.output_dim());
                for r in 0..nr {
                    dense.weights.row_mut(r0 + r)[c0..c0 + nc].copy_from_slice(layer.weights.row(r));
                }
                dense.bias[c0..c0 + nc].copy_from_slice(&layer.bias);
                blocks.push((r0, nr, c0, nc));
                r0 += nr;
                c0 += nc;
            }
            stage.push(BlockLayer { dense, blocks });
        }
        Self {
            stage,
            hidden: net.spec.hidden,
            central: net.central.clone(),
        }
    }

    /// Writes the parameters back into the split layout of `template`.
    pub fn to_split(&self, template: &SplitNet) -> SplitNet {
        let mut out = template.clone();
        out.central = self.central.clone();
        for (l, layer) in self.stage.iter().enumerate() {
            for (k, &(r0, nr, c0, nc)) in layer.blocks.iter().enumerate() {
                let dst = &mut out.locals[k].layers[l];
                for r in 0..nr {
                    dst.weights
                        .row_mut(r)
                        .copy_from_slice(&layer.dense.weights.row(r0 + r)[c0..c0 + nc]);
                }
                dst.bias.copy_from_slice(&layer.dense.bias[c0..c0 + nc]);
            }
        }
        out
    }

    /// Output for the concatenated input `[x¹ … x^K]`.
    pub fn predict(&self, x: &Matrix) -> Result<Matrix> {
        let (h, _, _) = self.stage_forward(x)?;
        self.central.predict(&h)
    }

    fn stage_forward(&self, x: &Matrix) -> Result<(Matrix, Vec<Matrix>, Vec<Matrix>)> {
        let expected = self.stage.first().map_or(0, |l| l.dense.input_dim());
        if x.cols() != expected {
            return Err(Error::DimensionMismatch {
                what: "concatenated feature width",
                expected,
                got: x.cols(),
            });
        }
        let n = self.stage.len();
        let mut inputs = Vec::with_capacity(n);
        let mut pre = Vec::with_capacity(n);
        let mut h = x.clone();
        for (l, layer) in self.stage.iter().enumerate() {
            let mut z = h.matmul(&layer.dense.weights);
            z.add_row_vector(&layer.dense.bias);
            inputs.push(h);
            let mut a = z.clone();
            if l + 1 < n && self.hidden == Activation::Relu {
                for v in a.as_mut_slice() {
                    if *v <= 0.0 {
                        *v = 0.0;
                    }
                }
            }
            pre.push(z);
            h = a;
        }
        Ok((h, inputs, pre))
    }

    /// One full-gradient descent step on the MSE loss plus `λ‖θ‖²`.
    /// Returns the loss before the step.
    pub fn step(&mut self, x: &Matrix, labels: &Matrix, eta: f64, lambda: f64) -> Result<f64> {
        let (h, inputs, pre) = self.stage_forward(x)?;
        let (out, central_cache) = self.central.forward(&h)?;
        let mut value = super::mse(&out, labels)?;
        if lambda != 0.0 {
            let norms: f64 = self.central.sq_norm()
                + self
                    .stage
                    .iter()
                    .map(|l| {
                        l.dense.weights.sum_of_squares()
                            + l.dense.bias.iter().map(|b| b * b).sum::<f64>()
                    })
                    .sum::<f64>();
            value += lambda * norms;
        }
        let upstream = super::output_gradient(&out, labels)?;
        let (mut g_central, dh) = self.central.backward(&central_cache, &upstream, true)?;
        self.central.add_l2_grad(&mut g_central, lambda);
        let mut delta = dh.expect("input gradient requested");

        let n = self.stage.len();
        let mut stage_grads = Vec::with_capacity(n);
        for l in (0..n).rev() {
            if l + 1 < n && self.hidden == Activation::Relu {
                for (g, &z) in delta.as_mut_slice().iter_mut().zip(pre[l].as_slice()) {
                    if z <= 0.0 {
                        *g = 0.0;
                    }
                }
            }
            let layer = &self.stage[l];
            let mut gw = inputs[l].t_matmul(&delta);
            let mut gb = delta.column_sums();
            if lambda != 0.0 {
                for (g, &w) in gw.as_mut_slice().iter_mut().zip(layer.dense.weights.as_slice()) {
                    *g += 2.0 * lambda * w;
                }
                for (g, &b) in gb.iter_mut().zip(&layer.dense.bias) {
                    *g += 2.0 * lambda * b;
                }
            }
            layer.mask(&mut gw);
            if l > 0 {
                delta = delta.matmul_t(&layer.dense.weights);
            }
            stage_grads.push((gw, gb));
        }
        stage_grads.reverse();

        self.central.apply_gradient(&g_central, eta);
        for (layer, (gw, gb)) in self.stage.iter_mut().zip(stage_grads) {
            for (w, &g) in layer.dense.weights.as_mut_slice().iter_mut().zip(gw.as_slice()) {
                *w -= eta * g;
            }
            for (b, &g) in layer.dense.bias.iter_mut().zip(&gb) {
                *b -= eta * g;
            }
        }
        Ok(value)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::{LossSpec, NetSpec};

    #[test]
    fn round_trips_split_layout() {
        let spec = NetSpec {
            local_arch: vec![3, 5, 2],
            central_arch: vec![6, 4, 2],
            num_su: 3,
            hidden: Activation::Relu,
        };
        let net = SplitNet::new(spec, 9).unwrap();
        let mono = MonolithicNet::from_split(&net);
        assert_eq!(mono.to_split(&net), net);
    }

    #[test]
    fn one_step_matches_split_bitwise() {
        let spec = NetSpec {
            local_arch: vec![4, 6, 3],
            central_arch: vec![6, 5, 2],
            num_su: 2,
            hidden: Activation::Relu,
        };
        let mut net = SplitNet::new(spec, 4).unwrap();
        let feats: Vec<Matrix> = (0..2)
            .map(|k| {
                Matrix::from_vec(5, 4, (0..20).map(|i| ((i * (k + 2)) as f64).cos()).collect())
                    .unwrap()
            })
            .collect();
        let y = Matrix::from_vec(5, 2, (0..10).map(|i| i as f64 * 0.3).collect()).unwrap();
        let mut mono = MonolithicNet::from_split(&net);
        let refs: Vec<&Matrix> = feats.iter().collect();
        let x = Matrix::hconcat(&refs).unwrap();
        let loss_spec = LossSpec { lambda: 0.01 };
        let (l_split, g) = net.gradient(&feats, &y, &loss_spec).unwrap();
        net.apply(&g, 0.05);
        let l_mono = mono.step(&x, &y, 0.05, 0.01).unwrap();
        assert!((l_split - l_mono).abs() <= 1e-12 * l_split.abs());
        assert_eq!(mono.to_split(&net), net);
    }
}
