//! Per-round latency model and the convergence / round-count / total
//! latency bounds, plus the measured effective activation level.
//!
//! The smoothness `L`, strong-convexity `μ`, loss range `C` and gradient
//! variance `c` are never assumed: callers supply them, or estimate them
//! from probe snapshots with [`ProbeEstimate`].

pub mod quadratic;

use crate::channel::{exp_integral_e1, uplink_rate};
use crate::error::{Error, Result};
use crate::nn::NetSpec;
use crate::trainer::RoundMetrics;

/// Constants of the convergence analysis.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BoundParams {
    /// Smoothness constant `L`.
    pub smoothness: f64,
    /// Strong-convexity constant `μ`.
    pub convexity: f64,
    /// Loss-range bound `C`.
    pub loss_range: f64,
    /// Gradient-variance bound `c`.
    pub grad_variance: f64,
    pub step_size: f64,
    /// Target accuracy `ε`.
    pub accuracy: f64,
    /// Effective activation level `v`.
    pub activation_level: f64,
}

impl BoundParams {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidConfig(m));
        if !(self.convexity > 0.0 && self.convexity <= self.smoothness) {
            return bad(format!(
                "need 0 < mu <= L (mu={}, L={})",
                self.convexity, self.smoothness
            ));
        }
        if !(self.loss_range > 0.0) {
            return bad("loss range C must be > 0".into());
        }
        if !(self.grad_variance >= 0.0) {
            return bad("gradient variance c must be >= 0".into());
        }
        if !(self.activation_level > 0.0 && self.activation_level <= 1.0) {
            return Err(Error::Domain(format!(
                "effective activation level must lie in (0, 1], got {}",
                self.activation_level
            )));
        }
        if !(self.step_size > 0.0 && self.step_size <= 1.0 / self.smoothness * (1.0 + 1e-12)) {
            return bad(format!(
                "step size must satisfy 0 < eta <= 1/L (eta={}, 1/L={})",
                self.step_size,
                1.0 / self.smoothness
            ));
        }
        Ok(())
    }

    /// Contraction factor `1 − μv/L`.
    pub fn contraction(&self) -> f64 {
        1.0 - self.convexity * self.activation_level / self.smoothness
    }

    /// Asymptotic floor `c / (2μv)`.
    pub fn noise_floor(&self) -> f64 {
        self.grad_variance / (2.0 * self.convexity * self.activation_level)
    }
}

/// `(1 − μv/L)^(t+1)·gap₀ + c/(2μv)`, a bound on `E[L(Θ_{t+1}) − L(Θ*)]`.
pub fn convergence_gap_bound(t: usize, params: &BoundParams, initial_gap: f64) -> Result<f64> {
    params.validate()?;
    let rho = params.contraction().max(0.0);
    Ok(rho.powf(t as f64 + 1.0) * initial_gap + params.noise_floor())
}

/// Upper bound on the rounds needed for `ε`-accuracy,
/// `ln[ε/C − c/(2μvC)] / ln[1 − μv/L]`.
///
/// Targets already met at the start (`ε − c/(2μv) ≥ C`) and the
/// contraction-free case `μv = L` need zero rounds.
pub fn expected_rounds(params: &BoundParams) -> Result<f64> {
    params.validate()?;
    let floor = params.noise_floor();
    if params.accuracy <= floor {
        return Err(Error::UnreachableTarget {
            target: params.accuracy,
            floor,
        });
    }
    let arg = (params.accuracy - floor) / params.loss_range;
    let rho = params.contraction();
    if arg >= 1.0 || rho <= 0.0 {
        return Ok(0.0);
    }
    Ok(arg.ln() / rho.ln())
}

/// Inputs of the per-round latency model.
#[derive(Clone, Debug, PartialEq)]
pub struct LatencyConfig {
    /// Bits per quantized activation value `q`.
    pub bits_per_symbol: f64,
    /// Samples uploaded per round `M`.
    pub samples_per_round: usize,
    /// Local output dimension `d`.
    pub local_output_dim: usize,
    pub bandwidth: f64,
    pub power_budget: f64,
    pub noise_power: f64,
    /// SU compute speed, operations per second.
    pub su_speed: f64,
    /// Server compute speed, operations per second.
    pub server_speed: f64,
    /// Local forward+backward operations per sample.
    pub local_ops_per_sample: f64,
    /// Central forward+backward operations per sample.
    pub central_ops_per_sample: f64,
}

impl LatencyConfig {
    /// Per-sample operation counts from an architecture: two operations per
    /// multiply-accumulate, one forward plus one backward pass.
    pub fn ops_from_spec(spec: &NetSpec) -> (f64, f64) {
        (
            4.0 * spec.local_macs() as f64,
            4.0 * spec.central_macs() as f64,
        )
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("bits_per_symbol", self.bits_per_symbol),
            ("bandwidth", self.bandwidth),
            ("power_budget", self.power_budget),
            ("noise_power", self.noise_power),
            ("su_speed", self.su_speed),
            ("server_speed", self.server_speed),
        ] {
            if !(v > 0.0) {
                return Err(Error::InvalidConfig(format!("{name} must be > 0")));
            }
        }
        if self.samples_per_round == 0 || self.local_output_dim == 0 {
            return Err(Error::InvalidConfig(
                "samples_per_round and local_output_dim must be > 0".into(),
            ));
        }
        Ok(())
    }

    /// Symbols uploaded per SU per round, `D = q·M·d`.
    pub fn upload_symbols(&self) -> f64 {
        self.bits_per_symbol * self.samples_per_round as f64 * self.local_output_dim as f64
    }

    pub fn comm_latency(&self, rho_weakest: f64, g_weakest: f64) -> Result<f64> {
        comm_latency(
            self.bits_per_symbol,
            self.samples_per_round,
            self.local_output_dim,
            self.bandwidth,
            self.power_budget,
            self.noise_power,
            rho_weakest,
            g_weakest,
        )
    }

    /// Computation latency with `active` SUs computing in parallel.
    pub fn comp_latency(&self, active: usize) -> f64 {
        comp_latency(
            self.local_ops_per_sample,
            self.central_ops_per_sample,
            self.samples_per_round,
            active,
            self.su_speed,
            self.server_speed,
        )
    }
}

/// `T_comm = qMd / (B·log₂(1 + (P/σ²)·ρ₁/E₁(G₁)))`, the upload time of the
/// weakest SU, which every aligned SU shares.
#[allow(clippy::too_many_arguments)]
pub fn comm_latency(
    bits_per_symbol: f64,
    samples: usize,
    local_output_dim: usize,
    bandwidth: f64,
    power_budget: f64,
    noise_power: f64,
    rho_weakest: f64,
    g_weakest: f64,
) -> Result<f64> {
    if !(bits_per_symbol > 0.0
        && samples > 0
        && local_output_dim > 0
        && bandwidth > 0.0
        && power_budget > 0.0
        && noise_power > 0.0
        && rho_weakest > 0.0
        && g_weakest > 0.0)
    {
        return Err(Error::Precondition(
            "communication latency inputs must all be positive".into(),
        ));
    }
    let rx = power_budget * rho_weakest / exp_integral_e1(g_weakest)?;
    let rate = uplink_rate(bandwidth, rx, noise_power);
    Ok(bits_per_symbol * samples as f64 * local_output_dim as f64 / rate)
}

/// `T_comp`: one local pass on the (parallel) SUs, zero if none is active,
/// plus the central pass on the server.
pub fn comp_latency(
    local_ops_per_sample: f64,
    central_ops_per_sample: f64,
    samples: usize,
    active: usize,
    su_speed: f64,
    server_speed: f64,
) -> f64 {
    let n = samples as f64;
    let local = if active > 0 {
        local_ops_per_sample * n / su_speed
    } else {
        0.0
    };
    local + central_ops_per_sample * n / server_speed
}

/// `(T_comm + T_comp)·N_expect` with every SU active for `T_comp`.
pub fn total_latency_bound(
    params: &BoundParams,
    latency: &LatencyConfig,
    num_su: usize,
    rho_weakest: f64,
    g_weakest: f64,
) -> Result<f64> {
    latency.validate()?;
    let rounds = expected_rounds(params)?;
    if rounds == 0.0 {
        return Ok(0.0);
    }
    let per_round = latency.comm_latency(rho_weakest, g_weakest)? + latency.comp_latency(num_su);
    Ok(per_round * rounds)
}

/// One row of a `G₁` sweep.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SweepRow {
    pub g_weakest: f64,
    /// `ε₁ = E₁(G₁)`.
    pub activation_ratio: f64,
    pub activation_level: f64,
    pub t_comm: f64,
    /// `None` when the target is unreachable at this `v`.
    pub n_expect: Option<f64>,
    pub t_expect: Option<f64>,
}

/// Evaluates the total-latency bound over thresholds, with `v(G₁)` supplied
/// by the caller since it is not analytically available.
pub fn sweep_thresholds(
    params: &BoundParams,
    latency: &LatencyConfig,
    num_su: usize,
    rho_weakest: f64,
    thresholds: &[f64],
    activation_level: impl Fn(f64) -> f64,
) -> Result<Vec<SweepRow>> {
    thresholds
        .iter()
        .map(|&g| {
            let v = activation_level(g);
            let p = BoundParams {
                activation_level: v,
                ..*params
            };
            let t_comm = latency.comm_latency(rho_weakest, g)?;
            let n = match expected_rounds(&p) {
                Ok(n) => Some(n),
                Err(Error::UnreachableTarget { .. }) => None,
                Err(e) => return Err(e),
            };
            let t = n.map(|n| {
                if n == 0.0 {
                    0.0
                } else {
                    n * (t_comm + latency.comp_latency(num_su))
                }
            });
            Ok(SweepRow {
                g_weakest: g,
                activation_ratio: exp_integral_e1(g)?,
                activation_level: v,
                t_comm,
                n_expect: n,
                t_expect: t,
            })
        })
        .collect()
}

/// Measured effective activation level of a run.
#[derive(Clone, Debug, PartialEq)]
pub struct EmpiricalV {
    /// `(round, v_t)` for rounds where block weights were measured.
    pub series: Vec<(usize, f64)>,
    /// `(round, v_{0,t})`.
    pub server_share: Vec<(usize, f64)>,
    /// `min_t v_t`, or `None` if nothing was measured.
    pub min: Option<f64>,
    pub mean_server_share: Option<f64>,
}

/// `v_t = v_{0,t} + Σ_{k active} v_{k,t}` per measured round and its minimum.
pub fn empirical_v(metrics: &[RoundMetrics]) -> EmpiricalV {
    let mut series = Vec::new();
    let mut server_share = Vec::new();
    for m in metrics {
        if let Some(w) = &m.block_weights {
            let v = w[0]
                + m.active
                    .iter()
                    .zip(&w[1..])
                    .filter(|(a, _)| **a)
                    .map(|(_, v)| v)
                    .sum::<f64>();
            series.push((m.round, v));
            server_share.push((m.round, w[0]));
        }
    }
    let min = series.iter().map(|&(_, v)| v).reduce(f64::min);
    let mean_server_share = if server_share.is_empty() {
        None
    } else {
        Some(server_share.iter().map(|&(_, v)| v).sum::<f64>() / server_share.len() as f64)
    };
    EmpiricalV {
        series,
        server_share,
        min,
        mean_server_share,
    }
}

/// A parameter/gradient/loss snapshot from a probe run.
#[derive(Clone, Debug, PartialEq)]
pub struct Snapshot {
    pub params: Vec<f64>,
    pub gradient: Vec<f64>,
    pub loss: f64,
}

/// Empirical stand-ins for `L`, `μ`, `C` and `c`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ProbeEstimate {
    pub smoothness: f64,
    pub convexity: f64,
    pub loss_range: f64,
    pub grad_variance: f64,
}

impl ProbeEstimate {
    /// `L` and `μ` from the max/min gradient-difference ratio between
    /// consecutive snapshots, `C` from the observed loss range and `c` from
    /// repeated stochastic gradients at one point.
    pub fn from_snapshots(snapshots: &[Snapshot], stochastic_grads: &[Vec<f64>]) -> Result<Self> {
        if snapshots.len() < 2 {
            return Err(Error::Precondition("need at least two snapshots".into()));
        }
        let dist = |a: &[f64], b: &[f64]| {
            a.iter()
                .zip(b)
                .map(|(x, y)| (x - y) * (x - y))
                .sum::<f64>()
                .sqrt()
        };
        let mut hi = f64::NEG_INFINITY;
        let mut lo = f64::INFINITY;
        for w in snapshots.windows(2) {
            let dp = dist(&w[0].params, &w[1].params);
            if dp > 0.0 {
                let r = dist(&w[0].gradient, &w[1].gradient) / dp;
                hi = hi.max(r);
                lo = lo.min(r);
            }
        }
        if !hi.is_finite() {
            return Err(Error::Precondition("snapshots never moved".into()));
        }
        let (lmin, lmax) = snapshots
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), s| {
                (a.min(s.loss), b.max(s.loss))
            });
        Ok(Self {
            smoothness: hi,
            convexity: lo,
            loss_range: lmax - lmin,
            grad_variance: gradient_variance(stochastic_grads),
        })
    }
}

/// `E‖g − ḡ‖²` over a set of stochastic gradients.
pub fn gradient_variance(grads: &[Vec<f64>]) -> f64 {
    if grads.len() < 2 {
        return 0.0;
    }
    let n = grads.len() as f64;
    let dim = grads[0].len();
    let mut mean = vec![0.0; dim];
    for g in grads {
        for (m, v) in mean.iter_mut().zip(g) {
            *m += v / n;
        }
    }
    grads
        .iter()
        .map(|g| g.iter().zip(&mean).map(|(x, m)| (x - m) * (x - m)).sum::<f64>())
        .sum::<f64>()
        / (n - 1.0)
}
