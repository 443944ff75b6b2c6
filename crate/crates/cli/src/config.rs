//! Sectioned `key = value` configuration files.
//!
//! A file holds any of the sections `[scenario]`, `[train]`, `[channel]`,
//! `[compute]` and `[bounds]`. A section that appears must list every one of
//! its keys, so a file is always a complete, reproducible description;
//! `print-config` emits a valid starting point.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use tvfl_core::bounds::BoundParams;
use tvfl_core::channel::ChannelConfig;
use tvfl_core::nn::LossSpec;
use tvfl_core::scenario::ScenarioConfig;
use tvfl_core::trainer::{ComputeModel, TrainConfig};

use crate::fail::Failure;

pub const SECTIONS: [&str; 5] = ["scenario", "train", "channel", "compute", "bounds"];

/// `(line, value)` per key, per section.
#[derive(Debug, Default)]
pub struct ConfigFile {
    pub sections: BTreeMap<String, BTreeMap<String, (usize, String)>>,
}

impl ConfigFile {
    pub fn parse(text: &str) -> Result<Self, Failure> {
        let mut out = ConfigFile::default();
        let mut current: Option<String> = None;
        for (i, raw) in text.lines().enumerate() {
            let line_no = i + 1;
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            if let Some(name) = line.strip_prefix('[').and_then(|l| l.strip_suffix(']')) {
                let name = name.trim();
                if !SECTIONS.contains(&name) {
                    return Err(Failure::config(
                        "E_CONFIG_SECTION",
                        name,
                        line_no,
                        "unknown section",
                    ));
                }
                out.sections.entry(name.to_string()).or_default();
                current = Some(name.to_string());
                continue;
            }
            let Some(section) = current.clone() else {
                return Err(Failure::config(
                    "E_CONFIG_SYNTAX",
                    "",
                    line_no,
                    "key outside of a section",
                ));
            };
            let Some((k, v)) = line.split_once('=') else {
                return Err(Failure::config(
                    "E_CONFIG_SYNTAX",
                    "",
                    line_no,
                    "expected `key = value`",
                ));
            };
            let key = k.trim().to_string();
            let entry = out.sections.get_mut(&section).expect("section exists");
            if entry.contains_key(&key) {
                return Err(Failure::config(
                    "E_CONFIG_DUPLICATE",
                    &format!("{section}.{key}"),
                    line_no,
                    "key given twice",
                ));
            }
            entry.insert(key, (line_no, v.trim().to_string()));
        }
        Ok(out)
    }

    pub fn read(path: &std::path::Path) -> Result<Self, Failure> {
        let text = std::fs::read_to_string(path).map_err(|e| {
            Failure::new("E_IO", format!("cannot read {}: {e}", path.display()))
        })?;
        let file = Self::parse(&text)?;
        file.check()?;
        Ok(file)
    }

    /// Parses every present section so a bad key fails even when the
    /// command does not use that section.
    pub fn check(&self) -> Result<(), Failure> {
        self.scenario(ScenarioConfig::default())?;
        self.train(TrainConfig::default())?;
        self.channel(tvfl_core::experiment::uplink_channel(4))?;
        self.compute(ComputeModel::default())?;
        if self.has("bounds") {
            self.bounds()?;
        }
        Ok(())
    }

    pub fn has(&self, section: &str) -> bool {
        self.sections.contains_key(section)
    }

    /// Applies a section through `set`, rejecting unknown and missing keys.
    fn apply<F>(&self, section: &str, keys: &[String], mut set: F) -> Result<(), Failure>
    where
        F: FnMut(&str, &str) -> Result<(), String>,
    {
        let Some(entries) = self.sections.get(section) else {
            return Ok(());
        };
        for (key, (line, value)) in entries {
            if !keys.iter().any(|k| k == key) {
                return Err(Failure::config(
                    "E_CONFIG_UNKNOWN_KEY",
                    &format!("{section}.{key}"),
                    *line,
                    "unknown key",
                ));
            }
            set(key, value).map_err(|msg| {
                Failure::config("E_CONFIG_VALUE", &format!("{section}.{key}"), *line, &msg)
            })?;
        }
        if let Some(missing) = keys.iter().find(|k| !entries.contains_key(*k)) {
            return Err(Failure::config(
                "E_CONFIG_MISSING_KEY",
                &format!("{section}.{missing}"),
                0,
                "required key is missing",
            ));
        }
        Ok(())
    }

    pub fn scenario(&self, base: ScenarioConfig) -> Result<ScenarioConfig, Failure> {
        let mut cfg = base;
        let keys = keys_of(&cfg.canonical_text());
        self.apply("scenario", &keys, |k, v| cfg.set_key(k, v))?;
        Ok(cfg)
    }

    pub fn train(&self, base: TrainConfig) -> Result<TrainConfig, Failure> {
        let mut cfg = base;
        let keys = keys_of(&train_text(&cfg));
        self.apply("train", &keys, |k, v| set_train_key(&mut cfg, k, v))?;
        Ok(cfg)
    }

    pub fn channel(&self, base: ChannelConfig) -> Result<ChannelConfig, Failure> {
        let mut cfg = base;
        let keys = keys_of(&channel_text(&cfg));
        self.apply("channel", &keys, |k, v| set_channel_key(&mut cfg, k, v))?;
        Ok(cfg)
    }

    pub fn compute(&self, base: ComputeModel) -> Result<ComputeModel, Failure> {
        let mut cfg = base;
        let keys = keys_of(&compute_text(&cfg));
        self.apply("compute", &keys, |k, v| set_compute_key(&mut cfg, k, v))?;
        Ok(cfg)
    }

    pub fn bounds(&self) -> Result<BoundsFile, Failure> {
        if !self.has("bounds") {
            return Err(Failure::config(
                "E_CONFIG_MISSING_KEY",
                "bounds",
                0,
                "a [bounds] section is required",
            ));
        }
        let mut b = BoundsFile::default();
        let keys = keys_of(&bounds_text(&b));
        self.apply("bounds", &keys, |k, v| set_bounds_key(&mut b, k, v))?;
        Ok(b)
    }
}

fn keys_of(text: &str) -> Vec<String> {
    text.lines()
        .filter_map(|l| l.split_once('=').map(|(k, _)| k.trim().to_string()))
        .collect()
}

fn parse<T: std::str::FromStr>(v: &str) -> Result<T, String> {
    v.parse().map_err(|_| format!("cannot parse `{v}`"))
}

fn parse_opt<T: std::str::FromStr>(v: &str) -> Result<Option<T>, String> {
    if v == "none" {
        Ok(None)
    } else {
        parse(v).map(Some)
    }
}

fn parse_list(v: &str) -> Result<Vec<f64>, String> {
    v.split(',').map(|x| parse(x.trim())).collect()
}

fn show_opt<T: ToString>(v: Option<T>) -> String {
    v.map_or_else(|| "none".to_string(), |x| x.to_string())
}

fn show_list(v: &[f64]) -> String {
    v.iter().map(|x| format!("{x:?}")).collect::<Vec<_>>().join(", ")
}

pub fn train_text(c: &TrainConfig) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "step_size = {:?}", c.step_size);
    let _ = writeln!(s, "rounds = {}", c.rounds);
    let _ = writeln!(s, "batch_size = {}", show_opt(c.batch_size));
    let _ = writeln!(s, "activation_ratio = {:?}", c.activation_ratio);
    let _ = writeln!(s, "seed = {}", c.seed);
    let _ = writeln!(s, "eval_every = {}", c.eval_every);
    let _ = writeln!(s, "target_mse = {}", show_opt(c.target_mse));
    let _ = writeln!(s, "v_probe_every = {}", c.v_probe_every);
    let _ = writeln!(s, "lambda = {:?}", c.loss.lambda);
    s
}

fn set_train_key(c: &mut TrainConfig, k: &str, v: &str) -> Result<(), String> {
    match k {
        "step_size" => c.step_size = parse(v)?,
        "rounds" => c.rounds = parse(v)?,
        "batch_size" => c.batch_size = parse_opt(v)?,
        "activation_ratio" => c.activation_ratio = parse(v)?,
        "seed" => c.seed = parse(v)?,
        "eval_every" => c.eval_every = parse(v)?,
        "target_mse" => c.target_mse = parse_opt(v)?,
        "v_probe_every" => c.v_probe_every = parse(v)?,
        "lambda" => c.loss = LossSpec { lambda: parse(v)? },
        _ => return Err(format!("unknown key `{k}`")),
    }
    Ok(())
}

pub fn channel_text(c: &ChannelConfig) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "bandwidth = {:?}", c.bandwidth);
    let _ = writeln!(s, "noise_power = {:?}", c.noise_power);
    let _ = writeln!(s, "power_budget = {:?}", c.power_budget);
    let _ = writeln!(s, "pathloss_exponent = {:?}", c.pathloss_exponent);
    let _ = writeln!(s, "su_distance = {}", show_list(&c.su_distance));
    let _ = writeln!(s, "su_shadowing = {}", show_list(&c.su_shadowing));
    s
}

fn set_channel_key(c: &mut ChannelConfig, k: &str, v: &str) -> Result<(), String> {
    match k {
        "bandwidth" => c.bandwidth = parse(v)?,
        "noise_power" => c.noise_power = parse(v)?,
        "power_budget" => c.power_budget = parse(v)?,
        "pathloss_exponent" => c.pathloss_exponent = parse(v)?,
        "su_distance" => c.su_distance = parse_list(v)?,
        "su_shadowing" => c.su_shadowing = parse_list(v)?,
        _ => return Err(format!("unknown key `{k}`")),
    }
    Ok(())
}

pub fn compute_text(c: &ComputeModel) -> String {
    format!(
        "bits_per_symbol = {:?}\nserver_speed = {:?}\nsu_speed = {:?}\n",
        c.bits_per_symbol, c.server_speed, c.su_speed
    )
}

fn set_compute_key(c: &mut ComputeModel, k: &str, v: &str) -> Result<(), String> {
    match k {
        "bits_per_symbol" => c.bits_per_symbol = parse(v)?,
        "server_speed" => c.server_speed = parse(v)?,
        "su_speed" => c.su_speed = parse(v)?,
        _ => return Err(format!("unknown key `{k}`")),
    }
    Ok(())
}

/// Everything the bound calculators need for one operating point.
#[derive(Clone, Debug, PartialEq)]
pub struct BoundsFile {
    pub params: BoundParams,
    /// Weakest SU's large-scale coefficient `ρ₁`.
    pub rho_weakest: f64,
    /// Weakest SU's threshold `G₁` for single-point evaluation.
    pub g_weakest: f64,
    pub num_su: usize,
    pub bits_per_symbol: f64,
    pub samples_per_round: usize,
    pub local_output_dim: usize,
    pub bandwidth: f64,
    pub power_budget: f64,
    pub noise_power: f64,
    pub su_speed: f64,
    pub server_speed: f64,
    pub local_ops_per_sample: f64,
    pub central_ops_per_sample: f64,
    /// Server share of `v` for the swept `v(G₁)` model; `none` keeps `v`
    /// fixed.
    pub v_server: Option<f64>,
}

impl Default for BoundsFile {
    fn default() -> Self {
        Self {
            params: BoundParams {
                smoothness: 1.0,
                convexity: 0.01,
                loss_range: 1.0,
                grad_variance: 0.0,
                step_size: 1.0,
                accuracy: 0.1,
                activation_level: 1.0,
            },
            rho_weakest: 250f64.powi(-4),
            g_weakest: 1.0,
            num_su: 4,
            bits_per_symbol: 32.0,
            samples_per_round: 5000,
            local_output_dim: 8,
            bandwidth: 1e6,
            power_budget: 0.1,
            noise_power: 1e-11,
            su_speed: 2.5e10,
            server_speed: 1e11,
            local_ops_per_sample: 27008.0,
            central_ops_per_sample: 81920.0,
            v_server: None,
        }
    }
}

pub fn bounds_text(b: &BoundsFile) -> String {
    let p = &b.params;
    let mut s = String::new();
    let _ = writeln!(s, "smoothness = {:?}", p.smoothness);
    let _ = writeln!(s, "convexity = {:?}", p.convexity);
    let _ = writeln!(s, "loss_range = {:?}", p.loss_range);
    let _ = writeln!(s, "grad_variance = {:?}", p.grad_variance);
    let _ = writeln!(s, "step_size = {:?}", p.step_size);
    let _ = writeln!(s, "accuracy = {:?}", p.accuracy);
    let _ = writeln!(s, "activation_level = {:?}", p.activation_level);
    let _ = writeln!(s, "rho_weakest = {:?}", b.rho_weakest);
    let _ = writeln!(s, "g_weakest = {:?}", b.g_weakest);
    let _ = writeln!(s, "num_su = {}", b.num_su);
    let _ = writeln!(s, "bits_per_symbol = {:?}", b.bits_per_symbol);
    let _ = writeln!(s, "samples_per_round = {}", b.samples_per_round);
    let _ = writeln!(s, "local_output_dim = {}", b.local_output_dim);
    let _ = writeln!(s, "bandwidth = {:?}", b.bandwidth);
    let _ = writeln!(s, "power_budget = {:?}", b.power_budget);
    let _ = writeln!(s, "noise_power = {:?}", b.noise_power);
    let _ = writeln!(s, "su_speed = {:?}", b.su_speed);
    let _ = writeln!(s, "server_speed = {:?}", b.server_speed);
    let _ = writeln!(s, "local_ops_per_sample = {:?}", b.local_ops_per_sample);
    let _ = writeln!(s, "central_ops_per_sample = {:?}", b.central_ops_per_sample);
    let _ = writeln!(s, "v_server = {}", show_opt(b.v_server));
    s
}

fn set_bounds_key(b: &mut BoundsFile, k: &str, v: &str) -> Result<(), String> {
    let p = &mut b.params;
    match k {
        "smoothness" => p.smoothness = parse(v)?,
        "convexity" => p.convexity = parse(v)?,
        "loss_range" => p.loss_range = parse(v)?,
        "grad_variance" => p.grad_variance = parse(v)?,
        "step_size" => p.step_size = parse(v)?,
        "accuracy" => p.accuracy = parse(v)?,
        "activation_level" => p.activation_level = parse(v)?,
        "rho_weakest" => b.rho_weakest = parse(v)?,
        "g_weakest" => b.g_weakest = parse(v)?,
        "num_su" => b.num_su = parse(v)?,
        "bits_per_symbol" => b.bits_per_symbol = parse(v)?,
        "samples_per_round" => b.samples_per_round = parse(v)?,
        "local_output_dim" => b.local_output_dim = parse(v)?,
        "bandwidth" => b.bandwidth = parse(v)?,
        "power_budget" => b.power_budget = parse(v)?,
        "noise_power" => b.noise_power = parse(v)?,
        "su_speed" => b.su_speed = parse(v)?,
        "server_speed" => b.server_speed = parse(v)?,
        "local_ops_per_sample" => b.local_ops_per_sample = parse(v)?,
        "central_ops_per_sample" => b.central_ops_per_sample = parse(v)?,
        "v_server" => b.v_server = parse_opt(v)?,
        _ => return Err(format!("unknown key `{k}`")),
    }
    Ok(())
}

/// Renders sections as a complete config file.
pub fn render(
    scenario: &ScenarioConfig,
    train: &TrainConfig,
    channel: &ChannelConfig,
    compute: &ComputeModel,
) -> String {
    format!(
        "[scenario]\n{}\n[train]\n{}\n[channel]\n{}\n[compute]\n{}",
        scenario.canonical_text(),
        train_text(train),
        channel_text(channel),
        compute_text(compute)
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rendered_defaults_parse_back() {
        let text = render(
            &ScenarioConfig::default(),
            &TrainConfig::default(),
            &tvfl_core::experiment::uplink_channel(4),
            &ComputeModel::default(),
        );
        let f = ConfigFile::parse(&text).unwrap();
        assert_eq!(f.scenario(ScenarioConfig::default()).unwrap(), ScenarioConfig::default());
        assert_eq!(f.train(TrainConfig::default()).unwrap(), TrainConfig::default());
        let b = ConfigFile::parse(&format!("[bounds]\n{}", bounds_text(&BoundsFile::default())))
            .unwrap()
            .bounds()
            .unwrap();
        assert_eq!(b, BoundsFile::default());
    }

    #[test]
    fn missing_and_unknown_keys_are_named() {
        let f = ConfigFile::parse("[train]\nstep_size = 0.1\n").unwrap();
        let e = f.train(TrainConfig::default()).unwrap_err();
        assert_eq!(e.code, "E_CONFIG_MISSING_KEY");
        assert!(e.detail.contains("train.rounds"));
        let f = ConfigFile::parse("[train]\nspeed = 1\n").unwrap();
        let e = f.train(TrainConfig::default()).unwrap_err();
        assert_eq!(e.code, "E_CONFIG_UNKNOWN_KEY");
        assert!(e.detail.contains("train.speed") && e.detail.contains("line=2"));
        assert_eq!(ConfigFile::parse("x = 1").unwrap_err().code, "E_CONFIG_SYNTAX");
        assert_eq!(ConfigFile::parse("[nope]").unwrap_err().code, "E_CONFIG_SECTION");
    }
}
