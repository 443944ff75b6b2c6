//! Independent oracles shared by the integration tests.

#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use tvfl_core::nn::{loss, Activation, LossSpec, NetSpec, SplitNet};
use tvfl_core::Matrix;

/// Adaptive Simpson quadrature of `f` on `[a, b]` to absolute tolerance `tol`.
pub fn adaptive_simpson<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64, tol: f64) -> f64 {
    let m = 0.5 * (a + b);
    let (fa, fm, fb) = (f(a), f(m), f(b));
    let whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb);
    simpson_step(f, a, b, fa, fm, fb, whole, tol, 60)
}

#[allow(clippy::too_many_arguments)]
fn simpson_step<F: Fn(f64) -> f64>(
    f: &F,
    a: f64,
    b: f64,
    fa: f64,
    fm: f64,
    fb: f64,
    whole: f64,
    tol: f64,
    depth: u32,
) -> f64 {
    let m = 0.5 * (a + b);
    let (lm, rm) = (0.5 * (a + m), 0.5 * (m + b));
    let (flm, frm) = (f(lm), f(rm));
    let left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
    let right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
    let delta = left + right - whole;
    if depth == 0 || delta.abs() <= 15.0 * tol {
        return left + right + delta / 15.0;
    }
    simpson_step(f, a, m, fa, flm, fm, left, 0.5 * tol, depth - 1)
        + simpson_step(f, m, b, fm, frm, fb, right, 0.5 * tol, depth - 1)
}

/// `E₁(x) = ∫ₓ^∞ e^(−u)/u du`, integrated in `w = ln u` where the
/// integrand `exp(−e^w)` is smooth; the tail beyond `u = e^7` is below 1e-400.
pub fn e1_by_quadrature(x: f64) -> f64 {
    let f = |w: f64| (-w.exp()).exp();
    adaptive_simpson(&f, x.ln(), 7.0, 1e-14)
}

/// A random split-network spec with every width at most 16 and `K ≤ 3`.
pub fn random_small_spec<R: Rng>(rng: &mut R) -> NetSpec {
    let num_su = rng.random_range(1..=3);
    let d = rng.random_range(1..=4);
    let local_depth = rng.random_range(1..=2);
    let mut local_arch = vec![rng.random_range(1..=6)];
    for _ in 1..local_depth {
        local_arch.push(rng.random_range(1..=16));
    }
    local_arch.push(d);
    let mut central_arch = vec![num_su * d];
    for _ in 0..rng.random_range(1..=2) {
        central_arch.push(rng.random_range(1..=16));
    }
    central_arch.push(rng.random_range(1..=8));
    NetSpec {
        local_arch,
        central_arch,
        num_su,
        hidden: Activation::Relu,
    }
}

/// Standard-normal-ish matrix from a seeded stream.
pub fn random_matrix<R: Rng>(rows: usize, cols: usize, scale: f64, rng: &mut R) -> Matrix {
    let data = (0..rows * cols)
        .map(|_| scale * (rng.random::<f64>() * 2.0 - 1.0) * 1.7)
        .collect();
    Matrix::from_vec(rows, cols, data).unwrap()
}

pub fn random_features<R: Rng>(spec: &NetSpec, rows: usize, rng: &mut R) -> Vec<Matrix> {
    (0..spec.num_su)
        .map(|_| random_matrix(rows, spec.local_input_dim(), 1.0, rng))
        .collect()
}

/// Smallest `|pre-activation|` over every hidden unit, recomputed here from
/// the raw weights rather than through the library's forward pass.
pub fn min_hidden_margin(net: &SplitNet, features: &[Matrix]) -> f64 {
    fn through(layers: &[tvfl_core::nn::Dense], x: &Matrix, margin: &mut f64) -> Matrix {
        let mut h = x.clone();
        for (l, layer) in layers.iter().enumerate() {
            let mut z = Matrix::zeros(h.rows(), layer.output_dim());
            for i in 0..h.rows() {
                for j in 0..layer.output_dim() {
                    let mut s = layer.bias[j];
                    for r in 0..layer.input_dim() {
                        s += h.get(i, r) * layer.weights.get(r, j);
                    }
                    z.set(i, j, s);
                }
            }
            if l + 1 < layers.len() {
                for v in z.as_mut_slice() {
                    *margin = margin.min(v.abs());
                    *v = v.max(0.0);
                }
            }
            h = z;
        }
        h
    }
    let mut margin = f64::INFINITY;
    let outs: Vec<Matrix> = net
        .locals
        .iter()
        .zip(features)
        .map(|(m, x)| through(&m.layers, x, &mut margin))
        .collect();
    let refs: Vec<&Matrix> = outs.iter().collect();
    through(&net.central.layers, &Matrix::hconcat(&refs).unwrap(), &mut margin);
    margin
}

/// Central finite differences of the full loss for every parameter,
/// central block first, then each local block.
pub fn finite_difference_gradient(
    net: &SplitNet,
    features: &[Matrix],
    labels: &Matrix,
    spec: &LossSpec,
    step: f64,
) -> Vec<Vec<f64>> {
    let eval = |n: &SplitNet| loss(&n.predict(features).unwrap(), labels, n, spec).unwrap();
    let mut blocks = Vec::new();
    for b in 0..=net.num_su() {
        let count = if b == 0 {
            net.central.param_count()
        } else {
            net.locals[b - 1].param_count()
        };
        let mut g = Vec::with_capacity(count);
        for i in 0..count {
            let mut plus = net.clone();
            let mut minus = net.clone();
            {
                let mp = if b == 0 { &mut plus.central } else { &mut plus.locals[b - 1] };
                *mp.params_mut()[i] += step;
                let mm = if b == 0 { &mut minus.central } else { &mut minus.locals[b - 1] };
                *mm.params_mut()[i] -= step;
            }
            g.push((eval(&plus) - eval(&minus)) / (2.0 * step));
        }
        blocks.push(g);
    }
    blocks
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// One pass/fail line per acceptance criterion.
pub fn report(id: u32, name: &str, pass: bool, detail: &str) {
    println!(
        "criterion {id:>2} {:<4} {name}: {detail}",
        if pass { "PASS" } else { "FAIL" }
    );
}
