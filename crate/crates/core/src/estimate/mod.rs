//! Peak detection, off-grid refinement and the mapping to distance/velocity.

mod bound;
mod cfar;

pub use bound::crb;
pub use cfar::{detect_cfar, CfarParams};

use serde::{Deserialize, Serialize};

use crate::frame::FrameConfig;
use crate::rdm::{delay_profile, doppler_profile, dtft_point, evaluate_profile, ChannelEstimate, RangeDopplerMatrix};
use crate::SPEED_OF_LIGHT;
use num_complex::Complex64;

/// Per-axis convergence threshold of the refinement, in bins.
pub const REFINE_TOL: f64 = 1e-4;
/// Maximum number of alternating (delay, Doppler) sweeps.
pub const REFINE_MAX_SWEEPS: usize = 50;
const GOLDEN_TOL: f64 = 1e-7;

/// An integer range-Doppler bin flagged as a target.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Detection {
    pub bin_nu: usize,
    pub bin_mu: usize,
    pub peak_power: f64,
}

/// Refined parameters of one target.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TargetEstimate {
    pub distance_m: f64,
    pub velocity_mps: f64,
    pub amplitude: Complex64,
    pub refined_nu: f64,
    pub refined_mu: f64,
    pub source: Detection,
    pub converged: bool,
}

impl TargetEstimate {
    /// Whether two estimates are within half a bin on both axes (Doppler
    /// compared modulo M).
    pub fn coincides_with(&self, other: &TargetEstimate, n_symbols: usize) -> bool {
        let m = n_symbols as f64;
        let dmu = (self.refined_mu - other.refined_mu).rem_euclid(m);
        let dmu = dmu.min(m - dmu);
        (self.refined_nu - other.refined_nu).abs() < 0.5 && dmu < 0.5
    }
}

/// Bin of maximum power; ties go to the smallest ν, then the smallest μ.
pub fn detect_max(p: &RangeDopplerMatrix) -> Detection {
    let mut best = Detection {
        bin_nu: 0,
        bin_mu: 0,
        peak_power: f64::NEG_INFINITY,
    };
    for ((nu, mu), v) in p.0.indexed_iter() {
        let power = v.norm_sqr();
        if power > best.peak_power {
            best = Detection {
                bin_nu: nu,
                bin_mu: mu,
                peak_power: power,
            };
        }
    }
    best
}

/// Cells whose power is not exceeded by any of their 8 toroidal neighbours,
/// strongest first (ties in row-major order).
pub fn local_maxima(p: &RangeDopplerMatrix) -> Vec<Detection> {
    let power = p.power();
    let (rows, cols) = power.dim();
    let mut out = Vec::new();
    for ((nu, mu), &v) in power.indexed_iter() {
        let mut is_max = true;
        'scan: for dn in [rows - 1, 0, 1] {
            for dm in [cols - 1, 0, 1] {
                if (dn, dm) == (0, 0) {
                    continue;
                }
                if power[[(nu + dn) % rows, (mu + dm) % cols]] > v {
                    is_max = false;
                    break 'scan;
                }
            }
        }
        if is_max {
            out.push(Detection {
                bin_nu: nu,
                bin_mu: mu,
                peak_power: v,
            });
        }
    }
    out.sort_by(|a, b| b.peak_power.total_cmp(&a.peak_power));
    out
}

/// Golden-section maximization of `f` on `[lo, hi]`.
fn golden_max(lo: f64, hi: f64, f: impl Fn(f64) -> f64) -> f64 {
    let inv_phi = (5f64.sqrt() - 1.0) / 2.0;
    let (mut a, mut b) = (lo, hi);
    let mut c = b - inv_phi * (b - a);
    let mut d = a + inv_phi * (b - a);
    let (mut fc, mut fd) = (f(c), f(d));
    while b - a > GOLDEN_TOL {
        if fc >= fd {
            b = d;
            d = c;
            fd = fc;
            c = b - inv_phi * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + inv_phi * (b - a);
            fd = f(d);
        }
    }
    let mid = 0.5 * (a + b);
    // the interval ends are candidates too when the maximum sits on the boundary
    [(lo, f(lo)), (mid, f(mid)), (hi, f(hi))]
        .into_iter()
        .fold((mid, f64::NEG_INFINITY), |best, (x, v)| if v > best.1 { (x, v) } else { best })
        .0
}

/// Maximizes |DTFT| of `h_hat` over the square `det ± 0.5` bins by alternating
/// golden-section searches along delay and Doppler.
pub fn refine_peak(h_hat: &ChannelEstimate, det: &Detection, cfg: &FrameConfig) -> TargetEstimate {
    let h = h_hat.matrix();
    let (nu0, mu0) = (det.bin_nu as f64, det.bin_mu as f64);
    let (mut nu, mut mu) = (nu0, mu0);
    let mut converged = false;
    for _ in 0..REFINE_MAX_SWEEPS {
        let g = delay_profile(h, mu);
        let new_nu = golden_max(nu0 - 0.5, nu0 + 0.5, |x| evaluate_profile(&g, x, 1.0).norm_sqr());
        let f = doppler_profile(h, new_nu);
        let new_mu = golden_max(mu0 - 0.5, mu0 + 0.5, |x| evaluate_profile(&f, x, -1.0).norm_sqr());
        let step = (new_nu - nu).abs().max((new_mu - mu).abs());
        nu = new_nu;
        mu = new_mu;
        if step < REFINE_TOL {
            converged = true;
            break;
        }
    }
    let amplitude = dtft_point(h_hat, nu, mu);
    let (distance_m, velocity_mps) = to_physical(nu, mu, cfg);
    TargetEstimate {
        distance_m,
        velocity_mps,
        amplitude,
        refined_nu: nu,
        refined_mu: mu,
        source: *det,
        converged,
    }
}

/// Doppler bin folded into (−M/2, M/2].
pub fn wrap_doppler_bin(mu: f64, n_symbols: usize) -> f64 {
    let m = n_symbols as f64;
    let folded = mu.rem_euclid(m);
    if folded > m / 2.0 {
        folded - m
    } else {
        folded
    }
}

/// Continuous bins to (distance, velocity).
pub fn to_physical(nu: f64, mu: f64, cfg: &FrameConfig) -> (f64, f64) {
    let delay = nu / cfg.sample_rate();
    let doppler = wrap_doppler_bin(mu, cfg.n_symbols) / (cfg.n_symbols as f64 * cfg.symbol_duration());
    (
        SPEED_OF_LIGHT * delay / 2.0,
        doppler * SPEED_OF_LIGHT / (2.0 * cfg.carrier_frequency_hz),
    )
}

/// Inverse of [`to_physical`]: (distance, velocity) to (ν, signed μ).
pub fn to_bins(distance_m: f64, velocity_mps: f64, cfg: &FrameConfig) -> (f64, f64) {
    let nu = 2.0 * distance_m / SPEED_OF_LIGHT * cfg.sample_rate();
    let doppler = 2.0 * velocity_mps * cfg.carrier_frequency_hz / SPEED_OF_LIGHT;
    (nu, doppler * cfg.n_symbols as f64 * cfg.symbol_duration())
}
