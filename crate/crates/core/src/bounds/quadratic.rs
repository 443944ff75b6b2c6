//! A separable strongly convex quadratic split into server and SU blocks.
//!
//! `f(θ) = ½ Σ_i a_i (θ_i − θ*_i)²` has `μ = min a_i`, `L = max a_i` and
//! optimum value zero, so measured gaps can be compared with the
//! convergence bound exactly. Scheduling follows the T-VFL protocol: the
//! server block is updated every round, SU block `k` only when scheduled.

use std::ops::Range;

use rand::Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq)]
pub struct QuadraticProblem {
    pub curvature: Vec<f64>,
    pub optimum: Vec<f64>,
    /// Coordinate ranges, server block first.
    pub blocks: Vec<Range<usize>>,
}

/// Trajectory of a scheduled run.
#[derive(Clone, Debug, PartialEq)]
pub struct QuadraticRun {
    /// `f(θ_t) − f*` for `t = 0..=rounds`.
    pub gaps: Vec<f64>,
    /// `v_t` per round from the exact gradient.
    pub v: Vec<f64>,
}

impl QuadraticProblem {
    pub fn new(curvature: Vec<f64>, optimum: Vec<f64>, block_sizes: &[usize]) -> Result<Self> {
        if curvature.len() != optimum.len() {
            return Err(Error::DimensionMismatch {
                what: "optimum length",
                expected: curvature.len(),
                got: optimum.len(),
            });
        }
        if curvature.iter().any(|&a| !(a > 0.0)) {
            return Err(Error::InvalidConfig("curvatures must be > 0".into()));
        }
        let total: usize = block_sizes.iter().sum();
        if total != curvature.len() || block_sizes.is_empty() {
            return Err(Error::DimensionMismatch {
                what: "block sizes sum",
                expected: curvature.len(),
                got: total,
            });
        }
        let mut blocks = Vec::with_capacity(block_sizes.len());
        let mut start = 0;
        for &s in block_sizes {
            blocks.push(start..start + s);
            start += s;
        }
        Ok(Self {
            curvature,
            optimum,
            blocks,
        })
    }

    pub fn smoothness(&self) -> f64 {
        self.curvature.iter().copied().fold(f64::MIN, f64::max)
    }

    pub fn convexity(&self) -> f64 {
        self.curvature.iter().copied().fold(f64::MAX, f64::min)
    }

    pub fn num_su(&self) -> usize {
        self.blocks.len() - 1
    }

    pub fn gap(&self, theta: &[f64]) -> f64 {
        0.5 * self
            .curvature
            .iter()
            .zip(theta.iter().zip(&self.optimum))
            .map(|(a, (t, o))| a * (t - o) * (t - o))
            .sum::<f64>()
    }

    pub fn gradient(&self, theta: &[f64]) -> Vec<f64> {
        self.curvature
            .iter()
            .zip(theta.iter().zip(&self.optimum))
            .map(|(a, (t, o))| a * (t - o))
            .collect()
    }

    /// Runs `rounds` scheduled steps. SU `k` is active with probability
    /// `activation[k]`; updated coordinates receive additive Gaussian
    /// gradient noise of standard deviation `noise_std`.
    pub fn run<R: Rng + ?Sized>(
        &self,
        theta0: &[f64],
        eta: f64,
        rounds: usize,
        activation: &[f64],
        noise_std: f64,
        rng: &mut R,
    ) -> Result<QuadraticRun> {
        if activation.len() != self.num_su() {
            return Err(Error::DimensionMismatch {
                what: "activation probabilities",
                expected: self.num_su(),
                got: activation.len(),
            });
        }
        let noise = Normal::new(0.0, noise_std)
            .map_err(|_| Error::InvalidConfig("noise std must be >= 0".into()))?;
        let mut theta = theta0.to_vec();
        let mut gaps = vec![self.gap(&theta)];
        let mut v = Vec::with_capacity(rounds);
        for _ in 0..rounds {
            let g = self.gradient(&theta);
            let active: Vec<bool> = std::iter::once(true)
                .chain(activation.iter().map(|&p| rng.random::<f64>() < p))
                .collect();
            let sq = |r: &Range<usize>| g[r.clone()].iter().map(|x| x * x).sum::<f64>();
            let total: f64 = self.blocks.iter().map(sq).sum();
            let scheduled: f64 = self
                .blocks
                .iter()
                .zip(&active)
                .filter(|(_, a)| **a)
                .map(|(b, _)| sq(b))
                .sum();
            v.push(if total > 0.0 { scheduled / total } else { 1.0 });
            for (b, &a) in self.blocks.iter().zip(&active) {
                if a {
                    for i in b.clone() {
                        let o = if noise_std > 0.0 { noise.sample(rng) } else { 0.0 };
                        theta[i] -= eta * (g[i] + o);
                    }
                }
            }
            gaps.push(self.gap(&theta));
        }
        Ok(QuadraticRun { gaps, v })
    }
}
