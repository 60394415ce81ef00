//! Multi-reflection sensing channel in the frequency domain.
//!
//! A reflection with amplitude `a`, delay `τ`, Doppler `f_D` and phase `φ`
//! contributes `a·e^{−j2πΔfτn}·e^{+j2πT_S f_D m}·e^{jφ}` to entry `(n, m)`, so
//! that delay shows up at positive delay bins `τ·N·Δf` and Doppler at bins
//! `f_D·M·T_S` of the range-Doppler matrix.

use std::f64::consts::TAU;

use ndarray::{Array2, Zip};
use num_complex::Complex64;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Exp1, Normal, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::frame::{FrameConfig, SymbolFrame};
use crate::{CMatrix, IsacError, Result, SPEED_OF_LIGHT};

/// Ground truth for one point target.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TargetTruth {
    pub distance_m: f64,
    pub velocity_mps: f64,
    #[serde(default = "unit_weight")]
    pub rcs_weight: f64,
}

fn unit_weight() -> f64 {
    1.0
}

impl TargetTruth {
    pub fn new(distance_m: f64, velocity_mps: f64) -> Self {
        Self {
            distance_m,
            velocity_mps,
            rcs_weight: 1.0,
        }
    }

    /// Round-trip delay 2d/c₀.
    pub fn delay(&self) -> f64 {
        2.0 * self.distance_m / SPEED_OF_LIGHT
    }

    /// Doppler shift 2·v·f_c/c₀.
    pub fn doppler(&self, cfg: &FrameConfig) -> f64 {
        2.0 * self.velocity_mps * cfg.carrier_frequency_hz / SPEED_OF_LIGHT
    }

    /// Checks the cyclic-prefix and inter-carrier-interference conditions.
    pub fn check_feasible(&self, cfg: &FrameConfig, index: usize) -> Result<()> {
        let finite = self.distance_m.is_finite()
            && self.velocity_mps.is_finite()
            && self.rcs_weight.is_finite();
        if !finite || self.distance_m <= 0.0 || self.rcs_weight <= 0.0 {
            return Err(IsacError::ScenarioInfeasible(format!(
                "target {index}: distance and rcs weight must be positive and finite \
                 (d = {} m, weight = {})",
                self.distance_m, self.rcs_weight
            )));
        }
        let delay_samples = self.delay() * cfg.sample_rate();
        if delay_samples >= cfg.cp_samples as f64 {
            return Err(IsacError::ScenarioInfeasible(format!(
                "target {index} at {} m has a delay of {delay_samples:.3} samples, \
                 not shorter than the {}-sample cyclic prefix",
                self.distance_m, cfg.cp_samples
            )));
        }
        let doppler = self.doppler(cfg).abs();
        if doppler >= cfg.subcarrier_spacing_hz / 10.0 {
            return Err(IsacError::ScenarioInfeasible(format!(
                "target {index} at {} m/s has a Doppler shift of {doppler:.1} Hz, \
                 not below a tenth of the subcarrier spacing",
                self.velocity_mps
            )));
        }
        Ok(())
    }
}

/// One propagation path.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Reflection {
    pub amplitude: f64,
    pub delay_s: f64,
    pub doppler_hz: f64,
    pub phase_rad: f64,
}

impl Reflection {
    pub fn power(&self) -> f64 {
        self.amplitude * self.amplitude
    }

    pub fn complex_amplitude(&self) -> Complex64 {
        Complex64::from_polar(self.amplitude, self.phase_rad)
    }

    /// Continuous delay bin τ·N·Δf.
    pub fn delay_bin(&self, cfg: &FrameConfig) -> f64 {
        self.delay_s * cfg.sample_rate()
    }

    /// Continuous (signed) Doppler bin f_D·M·T_S.
    pub fn doppler_bin(&self, cfg: &FrameConfig) -> f64 {
        self.doppler_hz * cfg.n_symbols as f64 * cfg.symbol_duration()
    }
}

/// Frequency-domain channel H.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelMatrix(pub CMatrix);

impl ChannelMatrix {
    pub fn matrix(&self) -> &CMatrix {
        &self.0
    }
}

/// Noisy receive matrix Y = X∘H + W.
#[derive(Debug, Clone, PartialEq)]
pub struct ReceiveFrame {
    pub y: CMatrix,
    pub noise_variance: f64,
}

/// Parameters of the diffuse scattering cluster that replaces each specular
/// return when enabled.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScatteringParams {
    pub enabled: bool,
    /// Fraction of the target's power carried by the diffuse rays.
    pub rho: f64,
    /// Number of diffuse rays.
    pub k_s: usize,
    /// Target extent; diffuse delays spread over `2·extent/c₀`.
    pub extent_m: f64,
    /// Standard deviation of the per-ray Doppler jitter.
    pub doppler_jitter_hz: f64,
}

impl ScatteringParams {
    pub fn disabled() -> Self {
        Self {
            enabled: false,
            ..Self::defaults(&FrameConfig::desk())
        }
    }

    /// ρ = 0.9, 8 rays over an 8 m extent, jitter of 0.02 Doppler bins.
    pub fn defaults(cfg: &FrameConfig) -> Self {
        Self {
            enabled: true,
            rho: 0.9,
            k_s: 8,
            extent_m: 8.0,
            doppler_jitter_hz: default_doppler_jitter(cfg),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.rho) {
            return Err(IsacError::InvalidParameter(format!(
                "diffuse energy fraction {} outside [0, 1]",
                self.rho
            )));
        }
        if self.enabled && self.k_s == 0 {
            return Err(IsacError::InvalidParameter(
                "scattering needs at least one diffuse ray".into(),
            ));
        }
        if !(self.extent_m >= 0.0) || !(self.doppler_jitter_hz >= 0.0) {
            return Err(IsacError::InvalidParameter(
                "scattering extent and Doppler jitter must be non-negative".into(),
            ));
        }
        Ok(())
    }
}

pub fn default_doppler_jitter(cfg: &FrameConfig) -> f64 {
    0.02 / (cfg.symbol_duration() * cfg.n_symbols as f64)
}

/// One specular reflection per target, scaled so that Σ|a|²/σ²_W equals the
/// requested SNR. Amplitudes follow `rcs_weight/d²` before the common scaling;
/// the total reflected power is fixed to one and σ²_W derived from it.
pub fn reflections_from_targets(
    targets: &[TargetTruth],
    cfg: &FrameConfig,
    snr_y_db: f64,
    rng: &mut ChaCha8Rng,
) -> Result<(Vec<Reflection>, f64)> {
    if targets.is_empty() {
        return Err(IsacError::InvalidParameter("no targets".into()));
    }
    if !snr_y_db.is_finite() {
        return Err(IsacError::InvalidParameter(format!("SNR of {snr_y_db} dB")));
    }
    for (i, t) in targets.iter().enumerate() {
        t.check_feasible(cfg, i)?;
    }
    let raw: Vec<f64> = targets
        .iter()
        .map(|t| t.rcs_weight / (t.distance_m * t.distance_m))
        .collect();
    let total: f64 = raw.iter().map(|a| a * a).sum();
    let scale = total.sqrt().recip();
    let reflections = targets
        .iter()
        .zip(&raw)
        .map(|(t, a)| Reflection {
            amplitude: a * scale,
            delay_s: t.delay(),
            doppler_hz: t.doppler(cfg),
            phase_rad: rng.random_range(0.0..TAU),
        })
        .collect();
    let noise_variance = 10f64.powf(-snr_y_db / 10.0);
    Ok((reflections, noise_variance))
}

/// Splits a specular return into an attenuated specular ray plus `k_s` diffuse
/// rays. Total power is preserved.
pub fn expand_scattering(
    specular: &Reflection,
    params: &ScatteringParams,
    rng: &mut ChaCha8Rng,
) -> Vec<Reflection> {
    let mut out = vec![Reflection {
        amplitude: specular.amplitude * (1.0 - params.rho).sqrt(),
        ..*specular
    }];
    if !params.enabled || params.rho == 0.0 || params.k_s == 0 {
        out[0] = *specular;
        return out;
    }
    // symmetric Dirichlet(1) split via normalized exponentials
    let weights: Vec<f64> = (0..params.k_s).map(|_| rng.sample::<f64, _>(Exp1)).collect();
    let weight_sum: f64 = weights.iter().sum();
    let diffuse_power = params.rho * specular.power();
    let spread = 2.0 * params.extent_m / SPEED_OF_LIGHT;
    let jitter = Normal::new(0.0, params.doppler_jitter_hz).expect("jitter validated");
    for w in weights {
        let delay_s = specular.delay_s + spread * rng.random::<f64>();
        let doppler_hz = specular.doppler_hz + rng.sample(jitter);
        out.push(Reflection {
            amplitude: (diffuse_power * w / weight_sum).sqrt(),
            delay_s,
            doppler_hz,
            phase_rad: rng.random_range(0.0..TAU),
        });
    }
    out
}

/// Per-subcarrier delay phasors e^{−j2πΔfτn} and per-symbol Doppler phasors
/// e^{+j2πT_S f_D m} of a reflection.
fn phasors(cfg: &FrameConfig, r: &Reflection) -> (Vec<Complex64>, Vec<Complex64>) {
    let delay_step = -TAU * cfg.subcarrier_spacing_hz * r.delay_s;
    let doppler_step = TAU * cfg.symbol_duration() * r.doppler_hz;
    let along_n = (0..cfg.n_subcarriers)
        .map(|n| Complex64::from_polar(1.0, delay_step * n as f64))
        .collect();
    let along_m = (0..cfg.n_symbols)
        .map(|m| Complex64::from_polar(1.0, doppler_step * m as f64))
        .collect();
    (along_n, along_m)
}

pub fn synthesize_channel(cfg: &FrameConfig, reflections: &[Reflection]) -> ChannelMatrix {
    let mut h = Array2::zeros(cfg.shape());
    for r in reflections {
        let (along_n, along_m) = phasors(cfg, r);
        let a = r.complex_amplitude();
        for (mut row, pn) in h.rows_mut().into_iter().zip(&along_n) {
            let ap = a * pn;
            for (h, qm) in row.iter_mut().zip(&along_m) {
                *h += ap * qm;
            }
        }
    }
    ChannelMatrix(h)
}

/// Y = X∘H + W with circularly-symmetric complex Gaussian W of variance σ²_W.
pub fn apply_channel(
    frame: &SymbolFrame,
    h: &ChannelMatrix,
    noise_variance: f64,
    rng: &mut ChaCha8Rng,
) -> Result<ReceiveFrame> {
    if !(noise_variance >= 0.0) || !noise_variance.is_finite() {
        return Err(IsacError::InvalidParameter(format!(
            "noise variance {noise_variance}"
        )));
    }
    let x = frame.symbols();
    if x.dim() != h.0.dim() {
        return Err(IsacError::DimensionMismatch {
            expected: x.dim(),
            found: h.0.dim(),
        });
    }
    let mut y = x * &h.0;
    if noise_variance > 0.0 {
        let sigma = (noise_variance / 2.0).sqrt();
        y.iter_mut().for_each(|v| {
            let re: f64 = rng.sample(StandardNormal);
            let im: f64 = rng.sample(StandardNormal);
            *v += Complex64::new(re, im) * sigma;
        });
    }
    Ok(ReceiveFrame { y, noise_variance })
}

/// Time-domain reference path for a single zero-Doppler reflection delayed by
/// an integer number of samples: IDFT per symbol, cyclic prefix insertion, a
/// delay of the serial sample stream, CP removal and a DFT back to subcarriers.
/// Plain O(N²) transforms, independent of the FFT path.
pub fn time_domain_oracle(
    frame: &SymbolFrame,
    cfg: &FrameConfig,
    delay_samples: i64,
    amplitude: f64,
    phase_rad: f64,
) -> Result<ReceiveFrame> {
    if delay_samples < 0 || delay_samples as usize > cfg.cp_samples {
        return Err(IsacError::OracleDomain {
            delay: delay_samples,
            cp_samples: cfg.cp_samples,
        });
    }
    let (n_sc, n_sym) = cfg.shape();
    if frame.shape() != (n_sc, n_sym) {
        return Err(IsacError::DimensionMismatch {
            expected: (n_sc, n_sym),
            found: frame.shape(),
        });
    }
    let delay = delay_samples as usize;
    let cp = cfg.cp_samples;
    let block = n_sc + cp;
    let kernel = |nk: usize| Complex64::from_polar(1.0, TAU * (nk % n_sc) as f64 / n_sc as f64);

    let mut tx = Vec::with_capacity(block * n_sym);
    for m in 0..n_sym {
        let column = frame.symbols().column(m);
        let body: Vec<Complex64> = (0..n_sc)
            .map(|k| {
                column
                    .iter()
                    .enumerate()
                    .map(|(n, x)| x * kernel(n * k))
                    .sum::<Complex64>()
                    / n_sc as f64
            })
            .collect();
        tx.extend_from_slice(&body[n_sc - cp..]);
        tx.extend_from_slice(&body);
    }

    let gain = Complex64::from_polar(amplitude, phase_rad);
    let rx = |k: usize| {
        if k < delay {
            Complex64::new(0.0, 0.0)
        } else {
            gain * tx[k - delay]
        }
    };

    let mut y = Array2::zeros((n_sc, n_sym));
    for m in 0..n_sym {
        let start = m * block + cp;
        let window: Vec<Complex64> = (0..n_sc).map(|k| rx(start + k)).collect();
        for n in 0..n_sc {
            y[[n, m]] = window
                .iter()
                .enumerate()
                .map(|(k, s)| s * kernel(n * k).conj())
                .sum();
        }
    }
    Ok(ReceiveFrame {
        y,
        noise_variance: 0.0,
    })
}

/// Σ|a|² over a reflection set.
pub fn total_power(reflections: &[Reflection]) -> f64 {
    reflections.iter().map(Reflection::power).sum()
}

/// Largest entrywise relative deviation |a−b| / max(|b|, floor).
pub fn max_relative_error(a: &CMatrix, b: &CMatrix, floor: f64) -> f64 {
    Zip::from(a)
        .and(b)
        .fold(0.0_f64, |acc, x, y| acc.max((x - y).norm() / y.norm().max(floor)))
}
