use std::f64::consts::PI;

use crate::frame::FrameConfig;
use crate::{IsacError, Result, SPEED_OF_LIGHT};

/// Cramér-Rao bounds on distance (m²) and velocity (m²/s²) for a single target
/// with linear per-target SNR `|a|²/σ²_W`.
pub fn crb(cfg: &FrameConfig, snr_target: f64) -> Result<(f64, f64)> {
    if !(snr_target > 0.0) || !snr_target.is_finite() {
        return Err(IsacError::InvalidParameter(format!(
            "per-target SNR must be positive, got {snr_target}"
        )));
    }
    cfg.validate()?;
    let n = cfg.n_subcarriers as f64;
    let m = cfg.n_symbols as f64;
    let noise = snr_target.recip();
    let range_scale = SPEED_OF_LIGHT / (4.0 * PI * cfg.subcarrier_spacing_hz);
    let velocity_scale =
        SPEED_OF_LIGHT / (4.0 * PI * cfg.symbol_duration() * cfg.carrier_frequency_hz);
    let var_d = 6.0 * noise / ((n * n - 1.0) * n * m) * range_scale * range_scale;
    let var_v = 6.0 * noise / ((m * m - 1.0) * n * m) * velocity_scale * velocity_scale;
    Ok((var_d, var_v))
}
