//! Uplink channel model: Rayleigh block fading, truncated channel inversion
//! and cross-SU threshold alignment.
//!
//! The activation ratio of an SU is `ε = E₁(G)` for truncation threshold `G`.
//! Note that the probability an SU actually transmits in a round is
//! `P(|h|² ≥ G) = e^(−G)`, which is a different quantity; both are reported.

mod expint;

pub use expint::{exp_integral_e1, inv_exp_integral};

use rand::Rng;
use rand_distr::Exp1;

use crate::error::{Error, Result};

/// Large-scale fading coefficient `ρ = φ · distance^(−κ)`.
pub fn large_scale(shadowing: f64, distance: f64, pathloss_exponent: f64) -> Result<f64> {
    if !(distance > 0.0) {
        return Err(Error::Domain(format!("distance must be > 0, got {distance}")));
    }
    Ok(shadowing * distance.powf(-pathloss_exponent))
}

/// Draws `|h|²` for `h ~ CN(0, 1)`, i.e. an `Exp(1)` variate.
pub fn draw_fading_power<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    rng.sample(Exp1)
}

/// Received power under truncated inversion, `ρ·P / E₁(G)`.
pub fn received_power(rho: f64, power_budget: f64, threshold: f64) -> Result<f64> {
    Ok(rho * power_budget / exp_integral_e1(threshold)?)
}

/// Outcome of truncated channel inversion for one SU in one round.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Inversion {
    /// Squared power coefficient `p²`; zero when silenced.
    pub power_sq: f64,
    pub active: bool,
}

impl Inversion {
    pub fn amplitude(&self) -> f64 {
        self.power_sq.sqrt()
    }
}

/// Truncated channel inversion: transmit only when `|h|² ≥ G`, and then
/// with `p² = P_rx / (ρ|h|²)` so the received power equals `P_rx` exactly.
pub fn truncated_inversion(
    rho: f64,
    fading_power: f64,
    threshold: f64,
    power_budget: f64,
) -> Result<Inversion> {
    if !(rho > 0.0) || !(power_budget > 0.0) || !(threshold > 0.0) {
        return Err(Error::Precondition(format!(
            "truncated inversion needs rho, P, G > 0 (rho={rho}, P={power_budget}, G={threshold})"
        )));
    }
    if fading_power >= threshold {
        let rx = received_power(rho, power_budget, threshold)?;
        Ok(Inversion {
            power_sq: rx / (rho * fading_power),
            active: true,
        })
    } else {
        Ok(Inversion {
            power_sq: 0.0,
            active: false,
        })
    }
}

/// Aligns thresholds so that `ρ_k / E₁(G_k)` is the same for every SU.
///
/// `rho[0]` must be the weakest SU; its threshold is `g_weakest`.
pub fn align_thresholds(rho: &[f64], g_weakest: f64) -> Result<Vec<f64>> {
    let Some(&rho_1) = rho.first() else {
        return Err(Error::Precondition("no SUs to align".into()));
    };
    if !(g_weakest > 0.0) {
        return Err(Error::Precondition(format!(
            "weakest-SU threshold must be > 0, got {g_weakest}"
        )));
    }
    if let Some((k, &r)) = rho.iter().enumerate().find(|&(_, &r)| r < rho_1) {
        return Err(Error::Precondition(format!(
            "SU at index 0 (rho={rho_1}) is not the weakest; index {k} has rho={r}"
        )));
    }
    if rho.iter().any(|&r| !(r > 0.0)) {
        return Err(Error::Precondition("large-scale coefficients must be > 0".into()));
    }
    let eps_1 = exp_integral_e1(g_weakest)?;
    rho.iter()
        .map(|&r| {
            if r == rho_1 {
                Ok(g_weakest)
            } else {
                inv_exp_integral(eps_1 * r / rho_1)
            }
        })
        .collect()
}

/// Index of the SU with the smallest `ρ`; ties go to the lowest index.
pub fn weakest_su(rho: &[f64]) -> Option<usize> {
    let mut best: Option<usize> = None;
    for (k, &r) in rho.iter().enumerate() {
        if best.is_none_or(|b| r < rho[b]) {
            best = Some(k);
        }
    }
    best
}

/// Aligns thresholds in the original SU order, picking the weakest SU
/// automatically. Returns `(weakest index, thresholds)`.
pub fn align_to_weakest(rho: &[f64], g_weakest: f64) -> Result<(usize, Vec<f64>)> {
    let w = weakest_su(rho).ok_or_else(|| Error::Precondition("no SUs to align".into()))?;
    let mut order: Vec<usize> = (0..rho.len()).collect();
    order.swap(0, w);
    let permuted: Vec<f64> = order.iter().map(|&k| rho[k]).collect();
    let aligned = align_thresholds(&permuted, g_weakest)?;
    let mut out = vec![0.0; rho.len()];
    for (slot, &k) in order.iter().enumerate() {
        out[k] = aligned[slot];
    }
    Ok((w, out))
}

/// Shannon rate `B·log₂(1 + P_rx/σ²)` in bits per second.
pub fn uplink_rate(bandwidth: f64, rx_power: f64, noise_power: f64) -> f64 {
    bandwidth * (rx_power / noise_power).ln_1p() / std::f64::consts::LN_2
}

/// Static uplink parameters plus per-SU large-scale state.
#[derive(Clone, Debug, PartialEq)]
pub struct ChannelConfig {
    /// Bandwidth per SU in Hz.
    pub bandwidth: f64,
    /// Noise power σ² in watts.
    pub noise_power: f64,
    /// Average transmit power budget P in watts.
    pub power_budget: f64,
    pub pathloss_exponent: f64,
    /// SU-to-server distance in meters.
    pub su_distance: Vec<f64>,
    /// Linear shadowing factor φ per SU.
    pub su_shadowing: Vec<f64>,
}

impl ChannelConfig {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("bandwidth", self.bandwidth),
            ("noise_power", self.noise_power),
            ("power_budget", self.power_budget),
            ("pathloss_exponent", self.pathloss_exponent),
        ] {
            if !(v > 0.0) || !v.is_finite() {
                return Err(Error::InvalidConfig(format!("{name} must be finite and > 0")));
            }
        }
        if self.su_distance.len() != self.su_shadowing.len() {
            return Err(Error::DimensionMismatch {
                what: "per-SU shadowing entries",
                expected: self.su_distance.len(),
                got: self.su_shadowing.len(),
            });
        }
        if self.su_shadowing.iter().any(|&p| !(p > 0.0)) {
            return Err(Error::InvalidConfig("shadowing factors must be > 0".into()));
        }
        Ok(())
    }

    pub fn num_su(&self) -> usize {
        self.su_distance.len()
    }

    /// Large-scale coefficient per SU.
    pub fn rho(&self) -> Result<Vec<f64>> {
        self.su_distance
            .iter()
            .zip(&self.su_shadowing)
            .map(|(&d, &phi)| large_scale(phi, d, self.pathloss_exponent))
            .collect()
    }

    /// Thresholds for every SU given the weakest SU's activation ratio `ε₁`.
    pub fn thresholds_for_ratio(&self, eps_weakest: f64) -> Result<Vec<f64>> {
        let g1 = inv_exp_integral(eps_weakest)?;
        Ok(align_to_weakest(&self.rho()?, g1)?.1)
    }

    /// One round's channel realization under the given thresholds.
    pub fn draw_state<R: Rng + ?Sized>(
        &self,
        thresholds: &[f64],
        rng: &mut R,
    ) -> Result<ChannelState> {
        let rho = self.rho()?;
        if thresholds.len() != rho.len() {
            return Err(Error::DimensionMismatch {
                what: "threshold count",
                expected: rho.len(),
                got: thresholds.len(),
            });
        }
        let fading: Vec<f64> = rho.iter().map(|_| draw_fading_power(rng)).collect();
        let mut activation_ratio = Vec::with_capacity(rho.len());
        let mut rx_power = Vec::with_capacity(rho.len());
        for (&r, &g) in rho.iter().zip(thresholds) {
            let eps = exp_integral_e1(g)?;
            activation_ratio.push(eps);
            rx_power.push(r * self.power_budget / eps);
        }
        Ok(ChannelState {
            rho,
            fading_power: fading,
            threshold: thresholds.to_vec(),
            activation_ratio,
            rx_power,
        })
    }
}

/// Per-SU channel realization for one round.
#[derive(Clone, Debug, PartialEq)]
pub struct ChannelState {
    pub rho: Vec<f64>,
    pub fading_power: Vec<f64>,
    pub threshold: Vec<f64>,
    /// `ε_k = E₁(G_k)`.
    pub activation_ratio: Vec<f64>,
    /// Aligned received power `ρ_k P / E₁(G_k)`.
    pub rx_power: Vec<f64>,
}

impl ChannelState {
    /// SUs whose fading clears their threshold (`|h|² ≥ G`).
    pub fn active(&self) -> Vec<bool> {
        self.fading_power
            .iter()
            .zip(&self.threshold)
            .map(|(&h2, &g)| h2 >= g)
            .collect()
    }

    /// Probability each SU is active in a round, `e^(−G_k)`.
    pub fn activation_probability(&self) -> Vec<f64> {
        self.threshold.iter().map(|&g| (-g).exp()).collect()
    }
}
