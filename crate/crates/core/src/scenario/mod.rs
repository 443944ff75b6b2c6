//! Synthetic cooperative-spectrum-sensing world: PU/SU placement on a 3D
//! terrain, per-mini-slot received signal strength, and PU-state labels.

mod io;

pub use io::{load_dataset, persist_dataset, read_dataset, write_csv, write_dataset, MAGIC};

use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp1, Normal};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::linalg::Matrix;

/// Entries per label: power of PU 1, power of PU 2, then xyz of each PU.
pub const LABEL_DIM: usize = 8;
/// Leading SU-location entries in each local feature vector.
pub const LOCATION_DIM: usize = 3;

const MAX_RESAMPLE: usize = 16;
/// Terrain amplitude in meters; `|z| ≤ TERRAIN_AMPLITUDE`.
pub const TERRAIN_AMPLITUDE: f64 = 20.0;

/// Terrain height `z = 10·(sin(x/100) + cos(y/100))`.
pub fn terrain_height(x: f64, y: f64) -> f64 {
    10.0 * ((x / 100.0).sin() + (y / 100.0).cos())
}

/// A point in the world box.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Point3 {
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

impl Point3 {
    pub fn on_terrain(x: f64, y: f64) -> Self {
        Self {
            x,
            y,
            z: terrain_height(x, y),
        }
    }

    pub fn distance(&self, other: &Point3) -> f64 {
        let (dx, dy, dz) = (self.x - other.x, self.y - other.y, self.z - other.z);
        (dx * dx + dy * dy + dz * dz).sqrt()
    }
}

/// Axis-aligned rectangle in the X-Y plane.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Region {
    pub x_min: f64,
    pub y_min: f64,
    pub x_max: f64,
    pub y_max: f64,
}

impl Region {
    pub fn new(x_min: f64, y_min: f64, x_max: f64, y_max: f64) -> Self {
        Self {
            x_min,
            y_min,
            x_max,
            y_max,
        }
    }

    /// Square of half-width `half` centred at `(cx, cy)`.
    pub fn square(cx: f64, cy: f64, half: f64) -> Self {
        Self::new(cx - half, cy - half, cx + half, cy + half)
    }

    pub fn center(&self) -> (f64, f64) {
        (0.5 * (self.x_min + self.x_max), 0.5 * (self.y_min + self.y_max))
    }

    fn is_inside(&self, side: f64) -> bool {
        self.x_min >= 0.0
            && self.y_min >= 0.0
            && self.x_max <= side
            && self.y_max <= side
            && self.x_min <= self.x_max
            && self.y_min <= self.y_max
    }

    /// Uniform draw; a degenerate extent pins that coordinate to its minimum.
    pub fn draw<R: Rng + ?Sized>(&self, rng: &mut R) -> Point3 {
        let x = if self.x_max > self.x_min {
            rng.random_range(self.x_min..self.x_max)
        } else {
            self.x_min
        };
        let y = if self.y_max > self.y_min {
            rng.random_range(self.y_min..self.y_max)
        } else {
            self.y_min
        };
        Point3::on_terrain(x, y)
    }
}

/// Geometry, propagation constants and dataset shape of the sensing world.
#[derive(Clone, Debug, PartialEq)]
pub struct ScenarioConfig {
    pub area_side: f64,
    pub num_su: usize,
    pub num_pu: usize,
    pub power_levels: Vec<f64>,
    pub pathloss_exponent: f64,
    pub shadowing_std_db: f64,
    pub minislots_per_slot: usize,
    pub num_samples: usize,
    pub train_count: usize,
    pub rss_noise_floor: f64,
    pub su_regions: Vec<Region>,
    pub pu_regions: Vec<Region>,
    pub rng_seed: u64,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        Self::with_num_su(4)
    }
}

impl ScenarioConfig {
    /// Default world with `num_su` SUs placed on a ring around the centre.
    pub fn with_num_su(num_su: usize) -> Self {
        let area_side = 400.0;
        Self {
            area_side,
            num_su,
            num_pu: 2,
            power_levels: vec![1.0, 2.0, 3.0],
            pathloss_exponent: 4.0,
            shadowing_std_db: 3.0,
            minislots_per_slot: 200,
            num_samples: 60_000,
            train_count: 50_000,
            rss_noise_floor: 1e-12,
            su_regions: default_su_regions(num_su, area_side),
            pu_regions: default_pu_regions(area_side),
            rng_seed: 1,
        }
    }

    /// Local feature width `d_k`.
    pub fn feature_dim(&self) -> usize {
        LOCATION_DIM + self.minislots_per_slot
    }

    pub fn test_count(&self) -> usize {
        self.num_samples - self.train_count
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidConfig(m.to_string()));
        if !(self.area_side > 0.0) {
            return bad("area_side must be > 0");
        }
        if !(self.pathloss_exponent > 0.0) {
            return bad("pathloss_exponent must be > 0");
        }
        if self.minislots_per_slot < 1 {
            return bad("minislots_per_slot must be >= 1");
        }
        if self.train_count >= self.num_samples {
            return bad("train_count must be < num_samples");
        }
        if self.train_count == 0 {
            return bad("train_count must be >= 1");
        }
        if self.num_su == 0 {
            return bad("num_su must be >= 1");
        }
        if self.num_pu != 2 {
            return bad("the 8-entry label layout requires num_pu = 2");
        }
        if self.power_levels.is_empty() || self.power_levels.iter().any(|&p| !(p > 0.0)) {
            return bad("power_levels must be non-empty and positive");
        }
        if !(self.shadowing_std_db >= 0.0) {
            return bad("shadowing_std_db must be >= 0");
        }
        if !(self.rss_noise_floor >= 0.0) {
            return bad("rss_noise_floor must be >= 0");
        }
        if self.su_regions.len() != self.num_su {
            return Err(Error::DimensionMismatch {
                what: "su_regions",
                expected: self.num_su,
                got: self.su_regions.len(),
            });
        }
        if self.pu_regions.len() != self.num_pu {
            return Err(Error::DimensionMismatch {
                what: "pu_regions",
                expected: self.num_pu,
                got: self.pu_regions.len(),
            });
        }
        if self
            .su_regions
            .iter()
            .chain(&self.pu_regions)
            .any(|r| !r.is_inside(self.area_side))
        {
            return bad("every region must lie inside [0, area_side]^2");
        }
        Ok(())
    }

    /// Canonical `key = value` rendering; the digest is taken over this text.
    pub fn canonical_text(&self) -> String {
        let mut s = String::new();
        let mut kv = |k: &str, v: String| {
            s.push_str(k);
            s.push_str(" = ");
            s.push_str(&v);
            s.push('\n');
        };
        let list = |v: &[f64]| {
            v.iter()
                .map(|x| format!("{x:?}"))
                .collect::<Vec<_>>()
                .join(", ")
        };
        let regions = |v: &[Region]| {
            v.iter()
                .map(|r| format!("{:?} {:?} {:?} {:?}", r.x_min, r.y_min, r.x_max, r.y_max))
                .collect::<Vec<_>>()
                .join("; ")
        };
        kv("area_side", format!("{:?}", self.area_side));
        kv("num_su", self.num_su.to_string());
        kv("num_pu", self.num_pu.to_string());
        kv("power_levels", list(&self.power_levels));
        kv("pathloss_exponent", format!("{:?}", self.pathloss_exponent));
        kv("shadowing_std_db", format!("{:?}", self.shadowing_std_db));
        kv("minislots_per_slot", self.minislots_per_slot.to_string());
        kv("num_samples", self.num_samples.to_string());
        kv("train_count", self.train_count.to_string());
        kv("rss_noise_floor", format!("{:?}", self.rss_noise_floor));
        kv("su_regions", regions(&self.su_regions));
        kv("pu_regions", regions(&self.pu_regions));
        kv("rng_seed", self.rng_seed.to_string());
        s
    }

    /// Parses the text produced by [`canonical_text`](Self::canonical_text).
    /// Unknown keys are rejected; missing keys keep their defaults.
    pub fn from_canonical_text(text: &str) -> Result<Self> {
        let mut cfg = ScenarioConfig::default();
        let mut su_regions = None;
        for (lineno, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (k, v) = line.split_once('=').ok_or_else(|| {
                Error::InvalidConfig(format!("line {}: expected `key = value`", lineno + 1))
            })?;
            cfg.set_key(k.trim(), v.trim())
                .map_err(|e| Error::InvalidConfig(format!("line {}: {e}", lineno + 1)))?;
            if k.trim() == "su_regions" {
                su_regions = Some(cfg.su_regions.clone());
            }
        }
        if su_regions.is_none() {
            cfg.su_regions = default_su_regions(cfg.num_su, cfg.area_side);
        }
        Ok(cfg)
    }

    /// Sets one configuration key from its textual value.
    pub fn set_key(&mut self, key: &str, value: &str) -> std::result::Result<(), String> {
        fn num<T: std::str::FromStr>(key: &str, v: &str) -> std::result::Result<T, String> {
            v.parse()
                .map_err(|_| format!("key `{key}`: cannot parse `{v}`"))
        }
        fn regions(key: &str, v: &str) -> std::result::Result<Vec<Region>, String> {
            v.split(';')
                .filter(|s| !s.trim().is_empty())
                .map(|r| {
                    let c: Vec<f64> = r
                        .split_whitespace()
                        .map(|x| num::<f64>(key, x))
                        .collect::<std::result::Result<_, _>>()?;
                    if c.len() != 4 {
                        return Err(format!("key `{key}`: a region needs 4 numbers"));
                    }
                    Ok(Region::new(c[0], c[1], c[2], c[3]))
                })
                .collect()
        }
        match key {
            "area_side" => self.area_side = num(key, value)?,
            "num_su" => self.num_su = num(key, value)?,
            "num_pu" => self.num_pu = num(key, value)?,
            "power_levels" => {
                self.power_levels = value
                    .split(',')
                    .map(|x| num::<f64>(key, x.trim()))
                    .collect::<std::result::Result<_, _>>()?
            }
            "pathloss_exponent" => self.pathloss_exponent = num(key, value)?,
            "shadowing_std_db" => self.shadowing_std_db = num(key, value)?,
            "minislots_per_slot" => self.minislots_per_slot = num(key, value)?,
            "num_samples" => self.num_samples = num(key, value)?,
            "train_count" => self.train_count = num(key, value)?,
            "rss_noise_floor" => self.rss_noise_floor = num(key, value)?,
            "su_regions" => self.su_regions = regions(key, value)?,
            "pu_regions" => self.pu_regions = regions(key, value)?,
            "rng_seed" => self.rng_seed = num(key, value)?,
            _ => return Err(format!("unknown key `{key}`")),
        }
        Ok(())
    }

    /// SHA-256 of the canonical text.
    pub fn digest(&self) -> [u8; 32] {
        Sha256::digest(self.canonical_text().as_bytes()).into()
    }

    pub fn digest_hex(&self) -> String {
        hex::encode(self.digest())
    }
}

/// SU regions: 40 m squares on a ring of radius 0.4·side around the centre,
/// starting at 45° so four SUs sit on the diagonals.
pub fn default_su_regions(num_su: usize, side: f64) -> Vec<Region> {
    let c = side / 2.0;
    let radius = 0.4 * side;
    (0..num_su)
        .map(|k| {
            let angle = std::f64::consts::FRAC_PI_4
                + std::f64::consts::TAU * k as f64 / num_su.max(1) as f64;
            Region::square(c + radius * angle.cos(), c + radius * angle.sin(), 0.05 * side)
        })
        .collect()
}

/// PU regions: two 80 m squares in opposite off-centre quadrants.
pub fn default_pu_regions(side: f64) -> Vec<Region> {
    vec![
        Region::square(0.35 * side, 0.65 * side, 0.1 * side),
        Region::square(0.65 * side, 0.35 * side, 0.1 * side),
    ]
}

/// One uniform position per region; `z` follows the terrain.
pub fn sample_positions<R: Rng + ?Sized>(regions: &[Region], rng: &mut R) -> Vec<Point3> {
    regions.iter().map(|r| r.draw(rng)).collect()
}

/// Deterministic RNG stream for time slot `slot` under `seed`.
pub fn slot_rng(seed: u64, slot: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(slot);
    rng
}

/// Linear shadowing factor with log-normal spread `std_db`.
pub fn draw_shadowing<R: Rng + ?Sized>(std_db: f64, rng: &mut R) -> f64 {
    if std_db == 0.0 {
        return 1.0;
    }
    let n: f64 = Normal::new(0.0, std_db)
        .expect("finite std")
        .sample(rng);
    10f64.powf(n / 10.0)
}

/// Propagation constants shared by every RSS computation.
#[derive(Clone, Copy, Debug)]
pub struct RssModel {
    pub pathloss_exponent: f64,
    pub noise_floor: f64,
}

impl RssModel {
    /// RSS per mini-slot from explicit fading draws; `fading[j][m]` is
    /// `|h|²` of PU `j` in mini-slot `m`.
    pub fn rss_from_fading(
        &self,
        pu_positions: &[Point3],
        pu_powers: &[f64],
        su_position: &Point3,
        shadowing: &[f64],
        fading: &[Vec<f64>],
    ) -> Result<Vec<f64>> {
        let minislots = fading.first().map_or(0, Vec::len);
        let mut rss = vec![self.noise_floor; minislots];
        let mut mean_rx = Vec::with_capacity(pu_positions.len());
        for (j, pu) in pu_positions.iter().enumerate() {
            let d = pu.distance(su_position);
            if d == 0.0 {
                return Err(Error::CoincidentPositions);
            }
            mean_rx.push(pu_powers[j] * shadowing[j] * d.powf(-self.pathloss_exponent));
        }
        // PUs are summed in index order for every mini-slot
        for (m, r) in rss.iter_mut().enumerate() {
            let mut acc = 0.0;
            for (j, &g) in mean_rx.iter().enumerate() {
                acc += g * fading[j][m];
            }
            *r += acc;
        }
        Ok(rss)
    }

    /// Draws Rayleigh power fading for every PU and mini-slot, then composes
    /// the RSS vector.
    pub fn synthesize_rss<R: Rng + ?Sized>(
        &self,
        pu_positions: &[Point3],
        pu_powers: &[f64],
        su_position: &Point3,
        shadowing: &[f64],
        minislots: usize,
        rng: &mut R,
    ) -> Result<Vec<f64>> {
        let fading: Vec<Vec<f64>> = pu_positions
            .iter()
            .map(|_| (0..minislots).map(|_| rng.sample(Exp1)).collect())
            .collect();
        self.rss_from_fading(pu_positions, pu_powers, su_position, shadowing, &fading)
    }
}

/// One time slot: every SU's local feature vector plus the shared label.
#[derive(Clone, Debug, PartialEq)]
pub struct Sample {
    /// `[x, y, z, rss_1, …, rss_m]` per SU.
    pub su_features: Vec<Vec<f64>>,
    /// `[p₁, p₂, x₁, y₁, z₁, x₂, y₂, z₂]`.
    pub label: [f64; LABEL_DIM],
}

/// Per-feature affine normalization, one block per SU.
#[derive(Clone, Debug, PartialEq)]
pub struct NormStats {
    pub mean: Vec<Vec<f64>>,
    pub std: Vec<Vec<f64>>,
}

/// Generated samples, stored column-blocked per SU for training.
#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    pub config: ScenarioConfig,
    /// Raw features per SU, `M × d_k`, RSS in linear power.
    pub features: Vec<Matrix>,
    /// Raw labels, `M × 8`.
    pub labels: Matrix,
    /// Samples `0..train_count` form the training subset.
    pub train_count: usize,
    pub stats: NormStats,
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.labels.rows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn num_su(&self) -> usize {
        self.features.len()
    }

    pub fn test_count(&self) -> usize {
        self.len() - self.train_count
    }

    pub fn sample(&self, i: usize) -> Sample {
        let mut label = [0.0; LABEL_DIM];
        label.copy_from_slice(self.labels.row(i));
        Sample {
            su_features: self.features.iter().map(|f| f.row(i).to_vec()).collect(),
            label,
        }
    }

    pub fn train_indices(&self) -> Vec<usize> {
        (0..self.train_count).collect()
    }

    pub fn test_indices(&self) -> Vec<usize> {
        (self.train_count..self.len()).collect()
    }

    /// Normalized features of SU `k` for the given rows.
    pub fn normalized(&self, k: usize, rows: &[usize]) -> Matrix {
        let raw = &self.features[k];
        let (mean, std) = (&self.stats.mean[k], &self.stats.std[k]);
        let mut out = Matrix::zeros(rows.len(), raw.cols());
        for (r, &i) in rows.iter().enumerate() {
            let dst = out.row_mut(r);
            for (j, (&v, d)) in raw.row(i).iter().zip(dst.iter_mut()).enumerate() {
                *d = (transform_feature(j, v) - mean[j]) / std[j];
            }
        }
        out
    }

    pub fn labels_of(&self, rows: &[usize]) -> Matrix {
        self.labels.select_rows(rows)
    }

    /// Keeps only the first `k` SUs.
    pub fn with_first_sus(&self, k: usize) -> Result<Dataset> {
        if k == 0 || k > self.num_su() {
            return Err(Error::InvalidConfig(format!(
                "cannot keep {k} of {} SUs",
                self.num_su()
            )));
        }
        self.with_sus(&(0..k).collect::<Vec<_>>())
    }

    /// Keeps the listed SUs, in the given order, on the same samples.
    pub fn with_sus(&self, keep: &[usize]) -> Result<Dataset> {
        if keep.is_empty() || keep.iter().any(|&k| k >= self.num_su()) {
            return Err(Error::InvalidConfig(format!(
                "SU selection {keep:?} is invalid for {} SUs",
                self.num_su()
            )));
        }
        let mut config = self.config.clone();
        config.num_su = keep.len();
        config.su_regions = keep.iter().map(|&k| self.config.su_regions[k]).collect();
        Ok(Dataset {
            config,
            features: keep.iter().map(|&k| self.features[k].clone()).collect(),
            labels: self.labels.clone(),
            train_count: self.train_count,
            stats: NormStats {
                mean: keep.iter().map(|&k| self.stats.mean[k].clone()).collect(),
                std: keep.iter().map(|&k| self.stats.std[k].clone()).collect(),
            },
        })
    }
}

/// Feature-space transform before standardization: RSS entries go to dB,
/// location entries pass through.
#[inline]
pub fn transform_feature(index: usize, value: f64) -> f64 {
    if index < LOCATION_DIM {
        value
    } else {
        10.0 * value.log10()
    }
}

/// Normalization from the training rows only: locations are centred on the
/// world and scaled by half its side; RSS dimensions use their dB mean and
/// standard deviation.
pub fn compute_stats(config: &ScenarioConfig, features: &[Matrix], train_count: usize) -> NormStats {
    let half = config.area_side / 2.0;
    let loc_mean = [half, half, 0.0];
    let mut means = Vec::with_capacity(features.len());
    let mut stds = Vec::with_capacity(features.len());
    for f in features {
        let d = f.cols();
        let mut mean = vec![0.0; d];
        let mut m2 = vec![0.0; d];
        // Welford, rows in order
        for i in 0..train_count {
            let n = (i + 1) as f64;
            for (j, &v) in f.row(i).iter().enumerate().skip(LOCATION_DIM) {
                let x = transform_feature(j, v);
                let delta = x - mean[j];
                mean[j] += delta / n;
                m2[j] += delta * (x - mean[j]);
            }
        }
        let mut std: Vec<f64> = m2
            .iter()
            .map(|&s| (s / train_count as f64).sqrt())
            .collect();
        for j in 0..LOCATION_DIM.min(d) {
            mean[j] = loc_mean[j];
            std[j] = half;
        }
        for s in std.iter_mut() {
            if !(*s > 0.0) {
                *s = 1.0;
            }
        }
        means.push(mean);
        stds.push(std);
    }
    NormStats {
        mean: means,
        std: stds,
    }
}

/// Draws one sample for time slot `slot`.
pub fn generate_sample(config: &ScenarioConfig, slot: u64) -> Result<Sample> {
    let mut rng = slot_rng(config.rng_seed, slot);
    let model = RssModel {
        pathloss_exponent: config.pathloss_exponent,
        noise_floor: config.rss_noise_floor,
    };
    for _ in 0..MAX_RESAMPLE {
        let pu = sample_positions(&config.pu_regions, &mut rng);
        let su = sample_positions(&config.su_regions, &mut rng);
        let powers: Vec<f64> = (0..config.num_pu)
            .map(|_| *config.power_levels.choose(&mut rng).expect("non-empty"))
            .collect();
        let mut su_features = Vec::with_capacity(config.num_su);
        let mut coincident = false;
        for s in &su {
            let shadowing: Vec<f64> = (0..config.num_pu)
                .map(|_| draw_shadowing(config.shadowing_std_db, &mut rng))
                .collect();
            match model.synthesize_rss(
                &pu,
                &powers,
                s,
                &shadowing,
                config.minislots_per_slot,
                &mut rng,
            ) {
                Ok(rss) => {
                    let mut f = Vec::with_capacity(config.feature_dim());
                    f.extend([s.x, s.y, s.z]);
                    f.extend(rss);
                    su_features.push(f);
                }
                Err(Error::CoincidentPositions) => {
                    coincident = true;
                    break;
                }
                Err(e) => return Err(e),
            }
        }
        if coincident {
            continue;
        }
        let label = [
            powers[0], powers[1], pu[0].x, pu[0].y, pu[0].z, pu[1].x, pu[1].y, pu[1].z,
        ];
        return Ok(Sample { su_features, label });
    }
    Err(Error::CoincidentPositions)
}

/// Generates the full dataset. Sample `i` depends only on `(seed, i)`.
pub fn generate_dataset(config: &ScenarioConfig) -> Result<Dataset> {
    config.validate()?;
    let m = config.num_samples;
    let d = config.feature_dim();
    let mut features = vec![Matrix::zeros(m, d); config.num_su];
    let mut labels = Matrix::zeros(m, LABEL_DIM);
    for i in 0..m {
        let s = generate_sample(config, i as u64)?;
        for (k, f) in s.su_features.iter().enumerate() {
            features[k].row_mut(i).copy_from_slice(f);
        }
        labels.row_mut(i).copy_from_slice(&s.label);
    }
    let stats = compute_stats(config, &features, config.train_count);
    Ok(Dataset {
        config: config.clone(),
        features,
        labels,
        train_count: config.train_count,
        stats,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> ScenarioConfig {
        ScenarioConfig {
            num_samples: 10,
            train_count: 8,
            minislots_per_slot: 20,
            ..ScenarioConfig::default()
        }
    }

    #[test]
    fn terrain_examples() {
        assert!((terrain_height(0.0, 0.0) - 10.0).abs() < 1e-12);
        assert!((terrain_height(100.0 * std::f64::consts::FRAC_PI_2, 0.0) - 20.0).abs() < 1e-12);
        assert!((terrain_height(0.0, 100.0 * std::f64::consts::PI) + 10.0).abs() < 1e-12);
    }

    #[test]
    fn degenerate_region_pins_corner() {
        let mut rng = slot_rng(3, 0);
        let p = Region::new(50.0, 50.0, 50.0, 50.0).draw(&mut rng);
        assert_eq!(p, Point3::on_terrain(50.0, 50.0));
    }

    #[test]
    fn uniform_region_mean() {
        let mut rng = slot_rng(5, 0);
        let r = Region::new(0.0, 0.0, 100.0, 100.0);
        let n = 100_000;
        let mean: f64 = (0..n).map(|_| r.draw(&mut rng).x).sum::<f64>() / n as f64;
        assert!((mean - 50.0).abs() < 1.0, "mean {mean}");
    }

    #[test]
    fn positions_are_deterministic_per_slot() {
        let regions = default_pu_regions(400.0);
        let a = sample_positions(&regions, &mut slot_rng(9, 17));
        let b = sample_positions(&regions, &mut slot_rng(9, 17));
        let c = sample_positions(&regions, &mut slot_rng(9, 18));
        assert_eq!(a, b);
        assert_ne!(a, c);
    }

    #[test]
    fn rss_direct_formula() {
        let model = RssModel {
            pathloss_exponent: 4.0,
            noise_floor: 0.0,
        };
        let pu = [Point3 { x: 0.0, y: 0.0, z: 0.0 }];
        let su = Point3 { x: 10.0, y: 0.0, z: 0.0 };
        let rss = model
            .rss_from_fading(&pu, &[2.0], &su, &[1.0], &[vec![1.0; 5]])
            .unwrap();
        for r in rss {
            assert!((r - 2e-4).abs() < 1e-18);
        }
    }

    #[test]
    fn rss_is_additive_over_pus() {
        let model = RssModel {
            pathloss_exponent: 4.0,
            noise_floor: 0.0,
        };
        let pu = [
            Point3 { x: 0.0, y: 0.0, z: 0.0 },
            Point3 { x: 30.0, y: 5.0, z: 1.0 },
        ];
        let su = Point3 { x: 10.0, y: 2.0, z: 3.0 };
        let fading = vec![vec![0.3, 1.7, 0.9], vec![2.1, 0.2, 1.1]];
        let both = model
            .rss_from_fading(&pu, &[1.0, 3.0], &su, &[1.2, 0.8], &fading)
            .unwrap();
        let a = model
            .rss_from_fading(&pu[..1], &[1.0], &su, &[1.2], &fading[..1])
            .unwrap();
        let b = model
            .rss_from_fading(&pu[1..], &[3.0], &su, &[0.8], &fading[1..])
            .unwrap();
        for m in 0..3 {
            assert!((both[m] - (a[m] + b[m])).abs() <= 1e-18);
        }
    }

    #[test]
    fn rss_mean_matches_large_scale_power() {
        let model = RssModel {
            pathloss_exponent: 4.0,
            noise_floor: 0.0,
        };
        let pu = [
            Point3 { x: 0.0, y: 0.0, z: 0.0 },
            Point3 { x: 20.0, y: 0.0, z: 0.0 },
        ];
        let su = Point3 { x: 10.0, y: 5.0, z: 0.0 };
        let (powers, phi) = ([1.0, 2.0], [1.5, 0.7]);
        let mut rng = slot_rng(2, 0);
        let n = 100_000;
        let rss = model
            .synthesize_rss(&pu, &powers, &su, &phi, n, &mut rng)
            .unwrap();
        let mean = rss.iter().sum::<f64>() / n as f64;
        let expected: f64 = (0..2)
            .map(|j| powers[j] * phi[j] * pu[j].distance(&su).powi(-4))
            .sum();
        assert!((mean / expected - 1.0).abs() < 0.02);
    }

    #[test]
    fn coincident_positions_error() {
        let model = RssModel {
            pathloss_exponent: 4.0,
            noise_floor: 0.0,
        };
        let p = Point3::on_terrain(1.0, 1.0);
        let r = model.rss_from_fading(&[p], &[1.0], &p, &[1.0], &[vec![1.0]]);
        assert!(matches!(r, Err(Error::CoincidentPositions)));
    }

    #[test]
    fn dataset_shape_and_split() {
        let ds = generate_dataset(&small()).unwrap();
        assert_eq!(ds.len(), 10);
        assert_eq!(ds.test_count(), 2);
        assert_eq!(ds.features.len(), 4);
        assert_eq!(ds.features[0].cols(), 23);
        let s = ds.sample(3);
        assert_eq!(s.su_features.len(), 4);
        assert!(s.su_features.iter().all(|f| f.len() == 23));
    }

    #[test]
    fn labels_respect_world() {
        let cfg = small();
        let ds = generate_dataset(&cfg).unwrap();
        for i in 0..ds.len() {
            let l = ds.labels.row(i);
            assert!(cfg.power_levels.contains(&l[0]));
            assert!(cfg.power_levels.contains(&l[1]));
            for p in [&l[2..5], &l[5..8]] {
                assert!(p[0] >= 0.0 && p[0] <= cfg.area_side);
                assert!(p[1] >= 0.0 && p[1] <= cfg.area_side);
                assert_eq!(p[2], terrain_height(p[0], p[1]));
            }
            for f in &ds.features {
                assert!(f.row(i)[LOCATION_DIM..].iter().all(|&r| r > 0.0));
            }
        }
    }

    #[test]
    fn generation_is_deterministic() {
        let a = generate_dataset(&small()).unwrap();
        let b = generate_dataset(&small()).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn stats_depend_only_on_train_rows() {
        let cfg = small();
        let mut ds = generate_dataset(&cfg).unwrap();
        let before = ds.stats.clone();
        for f in ds.features.iter_mut() {
            for v in f.row_mut(9).iter_mut().skip(LOCATION_DIM) {
                *v *= 7.0;
            }
        }
        let after = compute_stats(&cfg, &ds.features, cfg.train_count);
        assert_eq!(before, after);
    }

    #[test]
    fn invalid_configs_rejected() {
        let mut c = small();
        c.train_count = 10;
        assert!(c.validate().is_err());
        let mut c = small();
        c.su_regions[0] = Region::new(-1.0, 0.0, 10.0, 10.0);
        assert!(c.validate().is_err());
        let mut c = small();
        c.power_levels.clear();
        assert!(c.validate().is_err());
        let mut c = small();
        c.minislots_per_slot = 0;
        assert!(c.validate().is_err());
    }

    #[test]
    fn canonical_text_round_trips() {
        let cfg = ScenarioConfig::with_num_su(8);
        let back = ScenarioConfig::from_canonical_text(&cfg.canonical_text()).unwrap();
        assert_eq!(cfg, back);
        assert_eq!(cfg.digest(), back.digest());
        assert!(ScenarioConfig::from_canonical_text("bogus = 1").is_err());
    }

    #[test]
    fn default_regions_inside_world() {
        for k in [1, 4, 8, 12] {
            let c = ScenarioConfig::with_num_su(k);
            c.validate().unwrap();
        }
    }
}
