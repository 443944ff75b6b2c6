//! The exponential integral `E₁(x) = ∫ₓ^∞ e⁻ᵗ/t dt` and its inverse.

use crate::error::{Error, Result};

const EULER_GAMMA: f64 = 0.577_215_664_901_532_9;
const SERIES_CUTOFF: f64 = 1.0;
const MAX_ITER: usize = 500;

/// `E₁(x)` for `x > 0`.
///
/// Power series below `x = 1`, modified-Lentz continued fraction above.
pub fn exp_integral_e1(x: f64) -> Result<f64> {
    if !(x > 0.0) {
        return Err(Error::Domain(format!("E1 requires x > 0, got {x}")));
    }
    if x.is_infinite() {
        return Ok(0.0);
    }
    Ok(if x <= SERIES_CUTOFF {
        series(x)
    } else {
        continued_fraction(x)
    })
}

fn series(x: f64) -> f64 {
    // E1(x) = -γ - ln x - Σ_{k≥1} (-x)^k / (k·k!)
    let mut sum = 0.0;
    let mut term = 1.0;
    for k in 1..MAX_ITER {
        let kf = k as f64;
        term *= -x / kf;
        let contrib = term / kf;
        sum += contrib;
        if contrib.abs() < sum.abs() * f64::EPSILON * 0.25 {
            break;
        }
    }
    -EULER_GAMMA - x.ln() - sum
}

fn continued_fraction(x: f64) -> f64 {
    let tiny = f64::MIN_POSITIVE / f64::EPSILON;
    let mut b = x + 1.0;
    let mut c = 1.0 / tiny;
    let mut d = 1.0 / b;
    let mut h = d;
    for i in 1..MAX_ITER {
        let an = -((i * i) as f64);
        b += 2.0;
        d = 1.0 / (an * d + b);
        c = b + an / c;
        let del = c * d;
        h *= del;
        if (del - 1.0).abs() <= f64::EPSILON {
            break;
        }
    }
    h * (-x).exp()
}

/// Solves `E₁(G) = target` for `G > 0`.
///
/// `E₁` maps `(0, ∞)` monotonically onto `(0, ∞)`, so every positive target
/// has exactly one solution. The root is bracketed by doubling/halving and
/// then refined by bisection.
pub fn inv_exp_integral(target: f64) -> Result<f64> {
    if !(target > 0.0) || !target.is_finite() {
        return Err(Error::Domain(format!(
            "inverse E1 requires a finite target > 0, got {target}"
        )));
    }
    let e1 = |x: f64| exp_integral_e1(x).expect("positive argument");

    let mut lo = 1.0;
    while e1(lo) < target {
        lo *= 0.5;
        if lo < f64::MIN_POSITIVE {
            return Err(Error::Domain(format!(
                "inverse E1 target {target} needs an argument below the smallest double"
            )));
        }
    }
    let mut hi = 1.0;
    while e1(hi) > target {
        hi *= 2.0;
    }
    // E1(lo) >= target >= E1(hi)
    for _ in 0..2000 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if e1(mid) > target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let (flo, fhi) = (e1(lo) - target, e1(hi) - target);
    Ok(if flo.abs() <= fhi.abs() { lo } else { hi })
}
