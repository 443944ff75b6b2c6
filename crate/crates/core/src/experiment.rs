//! Scale profiles, network presets and the sweep recipes behind the
//! convergence, latency, power-level and fusion-gain experiments.

use crate::channel::ChannelConfig;
use crate::error::{Error, Result};
use crate::nn::{NetSpec, SplitNet};
use crate::scenario::{Dataset, ScenarioConfig, LABEL_DIM};
use crate::trainer::{evaluate, nearest_level, train, Evaluation, RoundMetrics, TrainConfig, TrainReport};

/// Activation ratios of the weakest SU swept by the convergence figures.
pub const ALPHAS: [f64; 6] = [0.9, 0.8, 0.6, 0.4, 0.2, 0.1];

/// Network I local hidden width at full scale.
pub const NETWORK_I_HIDDEN: usize = 2048;

#[derive(Clone, Debug, PartialEq)]
pub enum Preset {
    NetworkI,
    NetworkII,
    Custom(NetSpec),
}

impl Preset {
    pub fn name(&self) -> &'static str {
        match self {
            Preset::NetworkI => "network-i",
            Preset::NetworkII => "network-ii",
            Preset::Custom(_) => "custom",
        }
    }

    pub fn parse(name: &str) -> Option<Self> {
        match name {
            "network-i" => Some(Preset::NetworkI),
            "network-ii" => Some(Preset::NetworkII),
            _ => None,
        }
    }

    /// The architecture for `num_su` SUs. Without `auto_central` the central
    /// input keeps the 4-SU width of the presets, so other `K` fail
    /// validation.
    pub fn spec(&self, num_su: usize, local_hidden: usize, auto_central: bool) -> NetSpec {
        let mut spec = match self {
            Preset::NetworkI => NetSpec::network_i(num_su, local_hidden),
            Preset::NetworkII => NetSpec::network_ii(num_su),
            Preset::Custom(s) => return s.clone(),
        };
        if !auto_central {
            spec.central_arch[0] = 4 * spec.local_output_dim();
        }
        spec
    }
}

/// Dataset size, widths and round budget; nothing else differs between
/// profiles.
#[derive(Clone, Debug, PartialEq)]
pub struct ScaleProfile {
    pub name: &'static str,
    pub num_samples: usize,
    pub train_count: usize,
    pub network_i_hidden: usize,
    pub rounds: usize,
    pub eval_every: usize,
    pub v_probe_every: usize,
}

impl ScaleProfile {
    /// The full-size setting.
    pub fn paper() -> Self {
        Self {
            name: "paper",
            num_samples: 60_000,
            train_count: 50_000,
            network_i_hidden: NETWORK_I_HIDDEN,
            rounds: 10_000,
            eval_every: 50,
            v_probe_every: 50,
        }
    }

    /// One-core desktop setting.
    pub fn desk() -> Self {
        Self {
            name: "desk",
            num_samples: 6_000,
            train_count: 5_000,
            network_i_hidden: 256,
            rounds: 2_000,
            eval_every: 10,
            v_probe_every: 10,
        }
    }

    /// Reduced setting for automated checks.
    pub fn ci() -> Self {
        Self {
            name: "ci",
            num_samples: 1_200,
            train_count: 1_000,
            network_i_hidden: 256,
            rounds: 600,
            eval_every: 1,
            v_probe_every: 5,
        }
    }

    pub fn by_name(name: &str) -> Option<Self> {
        match name {
            "paper" => Some(Self::paper()),
            "desk" => Some(Self::desk()),
            "ci" => Some(Self::ci()),
            _ => None,
        }
    }

    pub fn scenario(&self, num_su: usize, seed: u64) -> ScenarioConfig {
        ScenarioConfig {
            num_samples: self.num_samples,
            train_count: self.train_count,
            rng_seed: seed,
            ..ScenarioConfig::with_num_su(num_su)
        }
    }

    pub fn train_config(&self, activation_ratio: f64, seed: u64) -> TrainConfig {
        TrainConfig {
            rounds: self.rounds,
            activation_ratio,
            seed,
            eval_every: self.eval_every,
            v_probe_every: self.v_probe_every,
            ..TrainConfig::default()
        }
    }

    pub fn spec(&self, preset: &Preset, num_su: usize) -> NetSpec {
        preset.spec(num_su, self.network_i_hidden, true)
    }
}

/// Uplink geometry: SU `k` sits `250 − 100·k/(K−1)` m from the server, so
/// SU 0 is the weakest; 1 MHz per SU, 0.1 W budget, 10⁻¹¹ W noise.
pub fn uplink_channel(num_su: usize) -> ChannelConfig {
    let span = num_su.saturating_sub(1).max(1) as f64;
    ChannelConfig {
        bandwidth: 1e6,
        noise_power: 1e-11,
        power_budget: 0.1,
        pathloss_exponent: 4.0,
        su_distance: (0..num_su).map(|k| 250.0 - 100.0 * k as f64 / span).collect(),
        su_shadowing: vec![1.0; num_su],
    }
}

/// Seeded network whose output bias starts at the mean training label.
pub fn init_network(spec: NetSpec, dataset: &Dataset, seed: u64) -> Result<SplitNet> {
    let mut net = SplitNet::new(spec, seed)?;
    let n = dataset.train_count;
    if n == 0 {
        return Err(Error::EmptyBatch);
    }
    let mut mean = vec![0.0; LABEL_DIM];
    for i in 0..n {
        for (m, &y) in mean.iter_mut().zip(dataset.labels.row(i)) {
            *m += y;
        }
    }
    let out = net.central.layers.last_mut().expect("non-empty central model");
    if out.bias.len() == LABEL_DIM {
        for (b, m) in out.bias.iter_mut().zip(mean) {
            *b = m / n as f64;
        }
    }
    Ok(net)
}

/// Updates taken and cumulative latency when test MSE first reached `target`.
pub fn rounds_to_target(metrics: &[RoundMetrics], target: f64) -> Option<(usize, f64)> {
    metrics
        .iter()
        .find(|m| m.test_mse.is_some_and(|v| v <= target))
        .map(|m| (m.round + 1, m.t_cum))
}

/// `(max − min) / mean`.
pub fn relative_spread(values: &[f64]) -> f64 {
    if values.is_empty() {
        return 0.0;
    }
    let (lo, hi) = values
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &v| (a.min(v), b.max(v)));
    let mean = values.iter().sum::<f64>() / values.len() as f64;
    (hi - lo) / mean
}

/// Mean `v_{0,t}` over probed rounds.
pub fn mean_server_share(metrics: &[RoundMetrics]) -> Option<f64> {
    crate::bounds::empirical_v(metrics).mean_server_share
}

/// Trailing means over non-overlapping windows of `width`.
pub fn window_means(values: &[f64], width: usize) -> Vec<f64> {
    values
        .chunks_exact(width.max(1))
        .map(|c| c.iter().sum::<f64>() / c.len() as f64)
        .collect()
}

pub fn median(values: &[f64]) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    Some(if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    })
}

/// One training run of an activation-ratio sweep.
#[derive(Clone, Debug, PartialEq)]
pub struct SweepRun {
    pub alpha: f64,
    pub seed: u64,
    pub report: TrainReport,
}

/// Trains a fresh network per `(seed, α)`; the dataset is shared.
pub fn alpha_sweep(
    dataset: &Dataset,
    spec: &NetSpec,
    alphas: &[f64],
    seeds: &[u64],
    base: &TrainConfig,
    channel: &ChannelConfig,
) -> Result<Vec<SweepRun>> {
    let mut runs = Vec::with_capacity(alphas.len() * seeds.len());
    for &seed in seeds {
        for &alpha in alphas {
            let mut net = init_network(spec.clone(), dataset, seed)?;
            let cfg = TrainConfig {
                activation_ratio: alpha,
                seed,
                ..base.clone()
            };
            let report = train(dataset, &mut net, &cfg, channel)?;
            runs.push(SweepRun {
                alpha,
                seed,
                report,
            });
        }
    }
    Ok(runs)
}

/// Predicted vs labelled power level of one test sample.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PowerRow {
    pub pu: usize,
    pub sample: usize,
    pub label: f64,
    pub prediction: f64,
    pub rounded: f64,
}

/// The first `count` test samples' power predictions, per PU.
pub fn power_rows(eval: &Evaluation, dataset: &Dataset, count: usize) -> Vec<PowerRow> {
    let rows = dataset.test_indices();
    let levels = &dataset.config.power_levels;
    let mut out = Vec::new();
    for pu in 0..eval.power_accuracy.len() {
        for (r, &i) in rows.iter().enumerate().take(count) {
            let p = eval.predictions.get(r, pu);
            out.push(PowerRow {
                pu,
                sample: i,
                label: dataset.labels.get(i, pu),
                prediction: p,
                rounded: nearest_level(p, levels),
            });
        }
    }
    out
}

/// Location errors of a `K` vs `2K` comparison on identical samples.
#[derive(Clone, Debug, PartialEq)]
pub struct FusionResult {
    pub few: Evaluation,
    pub many: Evaluation,
    pub few_su: usize,
    pub many_su: usize,
}

impl FusionResult {
    /// Median over both PUs' 3D location errors.
    pub fn medians(&self) -> (f64, f64) {
        let pooled = |e: &Evaluation| {
            let all: Vec<f64> = e.location_errors.iter().flatten().copied().collect();
            median(&all).unwrap_or(f64::NAN)
        };
        (pooled(&self.few), pooled(&self.many))
    }
}

/// Trains on every SU of `dataset` and on every other SU, then evaluates
/// both on the same test samples. With the default ring layout the
/// even-indexed SUs of a `2K` scenario are exactly the `K`-SU layout.
pub fn fusion_pair(
    dataset: &Dataset,
    preset: &Preset,
    local_hidden: usize,
    cfg: &TrainConfig,
) -> Result<FusionResult> {
    let many_su = dataset.num_su();
    if many_su < 2 || !many_su.is_multiple_of(2) {
        return Err(Error::InvalidConfig(format!(
            "fusion comparison needs an even SU count, got {many_su}"
        )));
    }
    let keep: Vec<usize> = (0..many_su).step_by(2).collect();
    let few_ds = dataset.with_sus(&keep)?;
    let run = |ds: &Dataset| -> Result<Evaluation> {
        let k = ds.num_su();
        let mut net = init_network(preset.spec(k, local_hidden, true), ds, cfg.seed)?;
        train(ds, &mut net, cfg, &uplink_channel(k))?;
        evaluate(&net, ds)
    };
    Ok(FusionResult {
        few: run(&few_ds)?,
        many: run(dataset)?,
        few_su: keep.len(),
        many_su,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn presets_and_auto_central() {
        let s = Preset::NetworkII.spec(4, 0, false);
        assert_eq!(s.central_arch, vec![32, 512, 8]);
        s.validate().unwrap();
        assert!(Preset::NetworkI.spec(8, 256, false).validate().is_err());
        assert_eq!(Preset::NetworkI.spec(8, 256, true).central_arch[0], 64);
        assert_eq!(Preset::parse("network-i"), Some(Preset::NetworkI));
        assert_eq!(Preset::parse("net"), None);
    }

    #[test]
    fn profiles_differ_only_in_scale() {
        let (d, p) = (ScaleProfile::desk(), ScaleProfile::paper());
        let (a, b) = (d.train_config(0.5, 3), p.train_config(0.5, 3));
        assert_eq!(a.step_size, b.step_size);
        assert_eq!(a.loss, b.loss);
        assert_eq!(a.batch_size, b.batch_size);
        assert_eq!(d.scenario(4, 1).num_samples, 6000);
        assert_eq!(p.scenario(4, 1).num_samples, 60000);
        assert_eq!(p.spec(&Preset::NetworkI, 4).local_arch, vec![203, 2048, 8]);
        assert!(ScaleProfile::by_name("ci").is_some());
    }

    #[test]
    fn uplink_weakest_first() {
        let c = uplink_channel(4);
        let rho = c.rho().unwrap();
        assert!(rho.windows(2).all(|w| w[0] < w[1]));
        assert_eq!(uplink_channel(1).su_distance, vec![250.0]);
    }

    #[test]
    fn helpers() {
        assert!((relative_spread(&[1.0, 2.0, 3.0]) - 1.0).abs() < 1e-15);
        assert_eq!(median(&[3.0, 1.0, 2.0]), Some(2.0));
        assert_eq!(median(&[4.0, 1.0, 2.0, 3.0]), Some(2.5));
        assert_eq!(window_means(&[1.0, 3.0, 5.0, 7.0, 9.0], 2), vec![2.0, 6.0]);
        let m = vec![
            RoundMetrics {
                round: 0,
                test_mse: Some(5.0),
                t_cum: 1.0,
                ..Default::default()
            },
            RoundMetrics {
                round: 1,
                test_mse: None,
                t_cum: 2.0,
                ..Default::default()
            },
            RoundMetrics {
                round: 2,
                test_mse: Some(2.0),
                t_cum: 3.0,
                ..Default::default()
            },
        ];
        assert_eq!(rounds_to_target(&m, 3.0), Some((3, 3.0)));
        assert_eq!(rounds_to_target(&m, 1.0), None);
    }
}
