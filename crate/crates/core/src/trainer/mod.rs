//! The T-VFL training loop.
//!
//! Each round draws fresh small-scale fading, schedules the SUs whose fading
//! clears their aligned threshold, and runs one split-network step. Silenced
//! SUs contribute their cached activations, receive no gradient and keep
//! their parameters. The central model is updated every round.

mod metrics;

pub use metrics::{
    evaluate, evaluate_predictions, nearest_level, read_metrics_csv, write_metrics_csv,
    Evaluation, RoundMetrics,
};

use rand::seq::index::sample as sample_indices;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::bounds::LatencyConfig;
use crate::channel::{weakest_su, ChannelConfig};
use crate::error::{Error, Result};
use crate::linalg::Matrix;
use crate::nn::{
    central_backward, central_forward, grad_block_weights, local_backward, local_forward, mse,
    LossSpec, SplitNet,
};
use crate::scenario::{Dataset, LABEL_DIM};

const CHANNEL_STREAM: u64 = 1 << 32;
const BATCH_STREAM: u64 = (1 << 32) + 1;

/// Quantization and compute speeds used for per-round latency.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ComputeModel {
    pub bits_per_symbol: f64,
    /// Server operations per second.
    pub server_speed: f64,
    /// SU operations per second.
    pub su_speed: f64,
}

impl Default for ComputeModel {
    fn default() -> Self {
        Self {
            bits_per_symbol: 32.0,
            server_speed: 1e11,
            su_speed: 1e11 / 4.0,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainConfig {
    /// Step size `η`.
    pub step_size: f64,
    /// Round budget.
    pub rounds: usize,
    /// `None` for full-batch gradient descent.
    pub batch_size: Option<usize>,
    /// Activation ratio `ε₁` of the weakest SU.
    pub activation_ratio: f64,
    pub seed: u64,
    /// Test MSE every this many rounds; 0 disables evaluation.
    pub eval_every: usize,
    /// Stop once the evaluated test MSE is at or below this value.
    pub target_mse: Option<f64>,
    /// Measure gradient block weights every this many rounds; 0 disables.
    pub v_probe_every: usize,
    pub loss: LossSpec,
    pub compute: ComputeModel,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            step_size: 1e-4,
            rounds: 2000,
            batch_size: None,
            activation_ratio: 0.9,
            seed: 1,
            eval_every: 10,
            target_mse: None,
            v_probe_every: 10,
            loss: LossSpec::default(),
            compute: ComputeModel::default(),
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.step_size >= 0.0) || !self.step_size.is_finite() {
            return Err(Error::InvalidConfig("step size must be finite and >= 0".into()));
        }
        if self.batch_size == Some(0) {
            return Err(Error::InvalidConfig("batch size must be >= 1".into()));
        }
        if !(self.activation_ratio > 0.0) {
            return Err(Error::InvalidConfig("activation ratio must be > 0".into()));
        }
        let c = &self.compute;
        if !(c.bits_per_symbol > 0.0 && c.server_speed > 0.0 && c.su_speed > 0.0) {
            return Err(Error::InvalidConfig(
                "bits per symbol and compute speeds must be > 0".into(),
            ));
        }
        self.loss.validate()
    }
}

/// Latest uploaded activations per SU and sample, with the round of upload.
#[derive(Clone, Debug, PartialEq)]
pub struct StaleCache {
    outputs: Vec<Matrix>,
    refreshed: Vec<Vec<Option<usize>>>,
}

impl StaleCache {
    pub fn new(num_su: usize, samples: usize, dim: usize) -> Self {
        Self {
            outputs: vec![Matrix::zeros(samples, dim); num_su],
            refreshed: vec![vec![None; samples]; num_su],
        }
    }

    pub fn num_su(&self) -> usize {
        self.outputs.len()
    }

    pub fn dim(&self) -> usize {
        self.outputs.first().map_or(0, Matrix::cols)
    }

    /// Overwrites SU `k`'s entries for `rows` with the rows of `p`.
    pub fn store(&mut self, k: usize, rows: &[usize], p: &Matrix, round: usize) -> Result<()> {
        if p.rows() != rows.len() || p.cols() != self.dim() {
            return Err(Error::DimensionMismatch {
                what: "cached activation block",
                expected: rows.len() * self.dim(),
                got: p.rows() * p.cols(),
            });
        }
        for (r, &i) in rows.iter().enumerate() {
            self.outputs[k].row_mut(i).copy_from_slice(p.row(r));
            self.refreshed[k][i] = Some(round);
        }
        Ok(())
    }

    /// SU `k`'s cached activations for `rows`.
    pub fn gather(&self, k: usize, rows: &[usize]) -> Result<Matrix> {
        if let Some(&i) = rows.iter().find(|&&i| self.refreshed[k][i].is_none()) {
            return Err(Error::ColdCache { su: k, sample: i });
        }
        Ok(self.outputs[k].select_rows(rows))
    }

    pub fn refreshed_at(&self, k: usize, sample: usize) -> Option<usize> {
        self.refreshed[k][sample]
    }

    /// True when every SU has an entry for every sample.
    pub fn is_warm(&self) -> bool {
        self.refreshed.iter().all(|r| r.iter().all(Option::is_some))
    }
}

/// One round's training data; `rows` index the stale cache.
#[derive(Clone, Debug)]
pub struct Batch {
    pub rows: Vec<usize>,
    /// Normalized features per SU, `rows.len() × d_k`.
    pub features: Vec<Matrix>,
    pub labels: Matrix,
}

impl Batch {
    pub fn from_dataset(dataset: &Dataset, rows: &[usize], cache_rows: Vec<usize>) -> Self {
        Self {
            rows: cache_rows,
            features: (0..dataset.num_su())
                .map(|k| dataset.normalized(k, rows))
                .collect(),
            labels: dataset.labels_of(rows),
        }
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    fn select(&self, local: &[usize]) -> Self {
        Self {
            rows: local.iter().map(|&i| self.rows[i]).collect(),
            features: self.features.iter().map(|f| f.select_rows(local)).collect(),
            labels: self.labels.select_rows(local),
        }
    }
}

/// What one round produced.
#[derive(Clone, Debug, PartialEq)]
pub struct RoundStep {
    /// Server-side loss before the update, with stale inputs where silenced.
    pub train_loss: f64,
    /// `v_{k,t}` over all `K+1` blocks (central first) when probed.
    pub block_weights: Option<Vec<f64>>,
}

/// Which SUs clear their threshold this round. Round 0 schedules everyone
/// so every cache entry exists.
pub fn schedule_round(fading_power: &[f64], thresholds: &[f64], round: usize) -> Vec<bool> {
    if round == 0 {
        return vec![true; fading_power.len()];
    }
    fading_power
        .iter()
        .zip(thresholds)
        .map(|(&h2, &g)| h2 >= g)
        .collect()
}

/// One T-VFL round: forward with fresh or cached activations, server
/// backward, gradient delivery to the active SUs and the updates.
///
/// With `probe`, the block weights are measured from the exact gradient at
/// the pre-update parameters (computed separately when some SU is silent).
#[allow(clippy::too_many_arguments)]
pub fn run_round(
    net: &mut SplitNet,
    batch: &Batch,
    active: &[bool],
    cache: &mut StaleCache,
    round: usize,
    eta: f64,
    loss_spec: &LossSpec,
    probe: bool,
) -> Result<RoundStep> {
    let k_total = net.num_su();
    if active.len() != k_total || batch.features.len() != k_total {
        return Err(Error::DimensionMismatch {
            what: "SUs in active set / batch",
            expected: k_total,
            got: active.len().min(batch.features.len()),
        });
    }
    if batch.is_empty() {
        return Err(Error::EmptyBatch);
    }
    let all_active = active.iter().all(|&a| a);

    let mut outputs = Vec::with_capacity(k_total);
    let mut caches = Vec::with_capacity(k_total);
    for (k, &on) in active.iter().enumerate() {
        if on {
            let (p, c) = local_forward(&net.locals[k], &batch.features[k])?;
            outputs.push(p);
            caches.push(Some(c));
        } else {
            outputs.push(cache.gather(k, &batch.rows)?);
            caches.push(None);
        }
    }
    for k in (0..k_total).filter(|&k| active[k]) {
        cache.store(k, &batch.rows, &outputs[k], round)?;
    }

    let bundle = central_forward(&net.central, outputs, caches)?;
    let mut train_loss = mse(&bundle.output, &batch.labels)?;
    if loss_spec.lambda != 0.0 {
        train_loss += loss_spec.lambda * net.block_sq_norms().iter().sum::<f64>();
    }
    let (g0, upstream) = central_backward(&net.central, &bundle, &batch.labels, loss_spec)?;
    let mut local_grads = Vec::with_capacity(k_total);
    for (k, up) in upstream.iter().enumerate() {
        local_grads.push(match bundle.local_caches[k].as_ref() {
            Some(c) => Some(local_backward(&net.locals[k], c, up, loss_spec)?),
            None => None,
        });
    }

    let block_weights = if !probe {
        None
    } else if all_active {
        let norms: Vec<f64> = std::iter::once(g0.sq_norm())
            .chain(local_grads.iter().flatten().map(|g| g.sq_norm()))
            .collect();
        grad_block_weights(&norms)
    } else {
        let (_, exact) = net.gradient(&batch.features, &batch.labels, loss_spec)?;
        grad_block_weights(&exact.block_sq_norms())
    };

    net.central.apply_gradient(&g0, eta);
    for (m, g) in net.locals.iter_mut().zip(&local_grads) {
        if let Some(g) = g {
            m.apply_gradient(g, eta);
        }
    }
    Ok(RoundStep {
        train_loss,
        block_weights,
    })
}

/// Result of a training run.
#[derive(Clone, Debug, PartialEq)]
pub struct TrainReport {
    pub metrics: Vec<RoundMetrics>,
    /// Updates taken when the target test MSE was first met.
    pub rounds_to_target: Option<usize>,
    /// Cumulative latency at that point, seconds.
    pub latency_to_target: Option<f64>,
    pub thresholds: Vec<f64>,
    pub weakest: usize,
}

impl TrainReport {
    pub fn final_test_mse(&self) -> Option<f64> {
        self.metrics.iter().rev().find_map(|m| m.test_mse)
    }

    pub fn total_latency(&self) -> f64 {
        self.metrics.last().map_or(0.0, |m| m.t_cum)
    }
}

/// Per-round latency model for a network on a channel.
pub fn latency_model(
    net: &SplitNet,
    channel: &ChannelConfig,
    compute: &ComputeModel,
    samples_per_round: usize,
) -> LatencyConfig {
    let (local_ops, central_ops) = LatencyConfig::ops_from_spec(&net.spec);
    LatencyConfig {
        bits_per_symbol: compute.bits_per_symbol,
        samples_per_round,
        local_output_dim: net.spec.local_output_dim(),
        bandwidth: channel.bandwidth,
        power_budget: channel.power_budget,
        noise_power: channel.noise_power,
        su_speed: compute.su_speed,
        server_speed: compute.server_speed,
        local_ops_per_sample: local_ops,
        central_ops_per_sample: central_ops,
    }
}

/// Trains `net` on the train split of `dataset` under truncated scheduling.
pub fn train(
    dataset: &Dataset,
    net: &mut SplitNet,
    cfg: &TrainConfig,
    channel: &ChannelConfig,
) -> Result<TrainReport> {
    cfg.validate()?;
    channel.validate()?;
    net.spec
        .validate_for(dataset.config.feature_dim(), LABEL_DIM)?;
    let k_total = net.num_su();
    for (what, got) in [
        ("SUs in dataset", dataset.num_su()),
        ("SUs in channel config", channel.num_su()),
    ] {
        if got != k_total {
            return Err(Error::DimensionMismatch {
                what,
                expected: k_total,
                got,
            });
        }
    }
    let n_train = dataset.train_count;
    if n_train == 0 {
        return Err(Error::EmptyBatch);
    }
    let batch_size = cfg.batch_size.map_or(n_train, |b| b.min(n_train));

    let rho = channel.rho()?;
    let thresholds = channel.thresholds_for_ratio(cfg.activation_ratio)?;
    let weakest = weakest_su(&rho).expect("at least one SU");
    let latency = latency_model(net, channel, &cfg.compute, batch_size);
    let t_comm = latency.comm_latency(rho[weakest], thresholds[weakest])?;

    let train_rows = dataset.train_indices();
    let full = Batch::from_dataset(dataset, &train_rows, (0..n_train).collect());
    let test_rows = dataset.test_indices();
    let test = if cfg.eval_every > 0 && !test_rows.is_empty() {
        Some((
            (0..k_total)
                .map(|k| dataset.normalized(k, &test_rows))
                .collect::<Vec<_>>(),
            dataset.labels_of(&test_rows),
        ))
    } else {
        None
    };

    let stream = |s: u64| {
        let mut r = ChaCha8Rng::seed_from_u64(cfg.seed);
        r.set_stream(s);
        r
    };
    let mut channel_rng = stream(CHANNEL_STREAM);
    let mut batch_rng = stream(BATCH_STREAM);
    let mut cache = StaleCache::new(k_total, n_train, net.spec.local_output_dim());
    if batch_size < n_train {
        // warm-up upload of every train sample
        for k in 0..k_total {
            let p = net.locals[k].predict(&full.features[k])?;
            cache.store(k, &full.rows, &p, 0)?;
        }
    }

    let mut metrics = Vec::with_capacity(cfg.rounds);
    let mut t_cum = 0.0;
    let mut rounds_to_target = None;
    let mut latency_to_target = None;
    for t in 0..cfg.rounds {
        let state = channel.draw_state(&thresholds, &mut channel_rng)?;
        let active = schedule_round(&state.fading_power, &thresholds, t);
        let probe = cfg.v_probe_every > 0 && t % cfg.v_probe_every == 0;
        let step = if batch_size == n_train {
            run_round(net, &full, &active, &mut cache, t, cfg.step_size, &cfg.loss, probe)?
        } else {
            let mut local = sample_indices(&mut batch_rng, n_train, batch_size).into_vec();
            local.sort_unstable();
            let batch = full.select(&local);
            run_round(net, &batch, &active, &mut cache, t, cfg.step_size, &cfg.loss, probe)?
        };
        if !step.train_loss.is_finite() || !net.is_finite() {
            return Err(Error::Diverged {
                round: t,
                loss: step.train_loss,
            });
        }
        let n_active = active.iter().filter(|&&a| a).count();
        let t_comp = latency.comp_latency(n_active);
        t_cum += t_comm + t_comp;

        let evaluate_now =
            cfg.eval_every > 0 && ((t + 1) % cfg.eval_every == 0 || t + 1 == cfg.rounds);
        let test_mse = match (&test, evaluate_now) {
            (Some((x, y)), true) => Some(mse(&net.predict(x)?, y)?),
            _ => None,
        };
        let v_measured = step.block_weights.as_ref().map(|w| {
            w[0] + active
                .iter()
                .zip(&w[1..])
                .filter(|(a, _)| **a)
                .map(|(_, v)| v)
                .sum::<f64>()
        });
        metrics.push(RoundMetrics {
            round: t,
            active,
            train_mse: step.train_loss,
            test_mse,
            v_measured,
            block_weights: step.block_weights,
            t_comm,
            t_comp,
            t_cum,
        });
        if let (Some(target), Some(m)) = (cfg.target_mse, test_mse) {
            if m <= target {
                rounds_to_target = Some(t + 1);
                latency_to_target = Some(t_cum);
                break;
            }
        }
    }
    Ok(TrainReport {
        metrics,
        rounds_to_target,
        latency_to_target,
        thresholds,
        weakest,
    })
}
