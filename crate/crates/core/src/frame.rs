//! Modulation alphabets, OFDM frame geometry and random symbol frames.

use std::fmt;
use std::sync::Arc;

use ndarray::Array2;
use num_complex::Complex64;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::{CMatrix, IsacError, Result, SPEED_OF_LIGHT};

/// Tolerance used when checking that an alphabet has unit power and zero mean.
pub const NORMALIZATION_TOL: f64 = 1e-12;

/// Constellation family.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AlphabetKind {
    Qpsk,
    Qam16,
    Qam64,
    Custom,
}

impl fmt::Display for AlphabetKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            AlphabetKind::Qpsk => "qpsk",
            AlphabetKind::Qam16 => "qam16",
            AlphabetKind::Qam64 => "qam64",
            AlphabetKind::Custom => "custom",
        };
        f.write_str(s)
    }
}

/// A finite, equiprobable constellation with unit average power and zero mean.
#[derive(Debug, Clone, PartialEq)]
pub struct ModulationAlphabet {
    kind: AlphabetKind,
    points: Vec<Complex64>,
}

impl ModulationAlphabet {
    pub fn kind(&self) -> AlphabetKind {
        self.kind
    }

    /// Constellation points. For square QAM and QPSK, index `i` carries the
    /// Gray label `i`.
    pub fn points(&self) -> &[Complex64] {
        &self.points
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn mean_power(&self) -> f64 {
        second_moment(&self.points)
    }

    pub fn mean(&self) -> Complex64 {
        mean(&self.points)
    }

    /// Fourth moment of the (normalized) alphabet.
    pub fn kurtosis(&self) -> f64 {
        fourth_moment(&self.points)
    }

    pub fn is_constant_modulus(&self) -> bool {
        self.points
            .iter()
            .all(|p| (p.norm_sqr() - 1.0).abs() < NORMALIZATION_TOL)
    }

    /// Builds a custom alphabet from arbitrary points, shifting to zero mean
    /// and scaling to unit average power.
    pub fn custom(points: &[Complex64]) -> Result<Self> {
        if points.is_empty() {
            return Err(IsacError::InvalidAlphabet("empty point list".into()));
        }
        if let Some(p) = points.iter().find(|p| !p.re.is_finite() || !p.im.is_finite()) {
            return Err(IsacError::InvalidAlphabet(format!("non-finite point {p}")));
        }
        let centre = mean(points);
        let centred: Vec<Complex64> = points.iter().map(|p| p - centre).collect();
        let power = second_moment(&centred);
        if !(power > 0.0) || !power.is_finite() {
            return Err(IsacError::InvalidAlphabet(
                "alphabet has zero power after removing its mean".into(),
            ));
        }
        let scale = power.sqrt().recip();
        Ok(Self {
            kind: AlphabetKind::Custom,
            points: centred.into_iter().map(|p| p * scale).collect(),
        })
    }
}

/// Builds one of the supported alphabets. `custom_points` is required for
/// [`AlphabetKind::Custom`] and ignored otherwise.
pub fn make_alphabet(
    kind: AlphabetKind,
    custom_points: Option<&[Complex64]>,
) -> Result<ModulationAlphabet> {
    match kind {
        AlphabetKind::Qpsk => Ok(square_qam(kind, 4)),
        AlphabetKind::Qam16 => Ok(square_qam(kind, 16)),
        AlphabetKind::Qam64 => Ok(square_qam(kind, 64)),
        AlphabetKind::Custom => {
            let points = custom_points.ok_or_else(|| {
                IsacError::InvalidAlphabet("custom alphabet needs a point list".into())
            })?;
            ModulationAlphabet::custom(points)
        }
    }
}

fn gray_decode(mut g: usize) -> usize {
    let mut b = g;
    g >>= 1;
    while g != 0 {
        b ^= g;
        g >>= 1;
    }
    b
}

// Label bits split into an in-phase half (high bits) and a quadrature half
// (low bits), each Gray-coded onto the odd-integer levels.
fn square_qam(kind: AlphabetKind, order: usize) -> ModulationAlphabet {
    let side = (order as f64).sqrt().round() as usize;
    let bits_per_axis = side.trailing_zeros();
    let level = |g: usize| (2 * gray_decode(g)) as f64 - (side as f64 - 1.0);
    // mean |x|^2 of the odd-integer grid: 2 (side^2 - 1) / 3
    let scale = (2.0 * (side * side - 1) as f64 / 3.0).sqrt().recip();
    let points = (0..order)
        .map(|label| {
            let i = level(label >> bits_per_axis);
            let q = level(label & (side - 1));
            Complex64::new(i, q) * scale
        })
        .collect();
    ModulationAlphabet { kind, points }
}

fn mean(points: &[Complex64]) -> Complex64 {
    points.iter().sum::<Complex64>() / points.len() as f64
}

fn second_moment(points: &[Complex64]) -> f64 {
    points.iter().map(|p| p.norm_sqr()).sum::<f64>() / points.len() as f64
}

/// Raw fourth moment `(1/|X|) Σ |x|⁴` of a point set, with no normalization check.
pub fn fourth_moment(points: &[Complex64]) -> f64 {
    points.iter().map(|p| p.norm_sqr().powi(2)).sum::<f64>() / points.len() as f64
}

/// Kurtosis of a point set that is already normalized to unit power and zero
/// mean; for such sets it equals the fourth moment.
pub fn kurtosis(points: &[Complex64]) -> Result<f64> {
    if points.is_empty() {
        return Err(IsacError::InvalidAlphabet("empty point list".into()));
    }
    let mean_power = second_moment(points);
    let mean_magnitude = mean(points).norm();
    if (mean_power - 1.0).abs() > NORMALIZATION_TOL || mean_magnitude > NORMALIZATION_TOL {
        return Err(IsacError::Unnormalized {
            mean_power,
            mean_magnitude,
        });
    }
    Ok(fourth_moment(points))
}

/// OFDM numerology.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FrameConfig {
    /// Number of subcarriers N.
    pub n_subcarriers: usize,
    /// Number of OFDM symbols per frame M.
    pub n_symbols: usize,
    pub subcarrier_spacing_hz: f64,
    pub cp_samples: usize,
    pub carrier_frequency_hz: f64,
}

impl FrameConfig {
    /// Small numerology used for fast simulations (256 subcarriers, 64 symbols).
    pub fn desk() -> Self {
        Self {
            n_subcarriers: 256,
            n_symbols: 64,
            subcarrier_spacing_hz: 30e3,
            cp_samples: 18,
            carrier_frequency_hz: 3.5e9,
        }
    }

    /// 3.5 GHz numerology with 6552 subcarriers and 96 symbols.
    pub fn paper() -> Self {
        Self {
            n_subcarriers: 6552,
            n_symbols: 96,
            subcarrier_spacing_hz: 30e3,
            cp_samples: 468,
            carrier_frequency_hz: 3.5e9,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_subcarriers < 2 || self.n_symbols < 2 {
            return Err(IsacError::InvalidFrame(format!(
                "need at least 2 subcarriers and 2 symbols, got {}x{}",
                self.n_subcarriers, self.n_symbols
            )));
        }
        if !(self.subcarrier_spacing_hz > 0.0 && self.subcarrier_spacing_hz.is_finite()) {
            return Err(IsacError::InvalidFrame(
                "subcarrier spacing must be positive".into(),
            ));
        }
        if !(self.carrier_frequency_hz > 0.0 && self.carrier_frequency_hz.is_finite()) {
            return Err(IsacError::InvalidFrame(
                "carrier frequency must be positive".into(),
            ));
        }
        Ok(())
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.n_subcarriers, self.n_symbols)
    }

    /// Sampling rate N·Δf.
    pub fn sample_rate(&self) -> f64 {
        self.n_subcarriers as f64 * self.subcarrier_spacing_hz
    }

    /// Symbol duration including the cyclic prefix.
    pub fn symbol_duration(&self) -> f64 {
        (self.n_subcarriers + self.cp_samples) as f64 / self.sample_rate()
    }

    /// Distance spanned by one delay bin, c₀/(2NΔf).
    pub fn range_resolution(&self) -> f64 {
        SPEED_OF_LIGHT / (2.0 * self.sample_rate())
    }

    /// Velocity spanned by one Doppler bin, c₀/(2 f_c M T_S).
    pub fn velocity_resolution(&self) -> f64 {
        SPEED_OF_LIGHT
            / (2.0 * self.carrier_frequency_hz * self.n_symbols as f64 * self.symbol_duration())
    }
}

/// Where a frame's random draws came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SeedRecord {
    pub seed: [u8; 32],
    pub stream: u64,
    pub word_pos: u128,
}

impl SeedRecord {
    pub fn capture(rng: &ChaCha8Rng) -> Self {
        Self {
            seed: rng.get_seed(),
            stream: rng.get_stream(),
            word_pos: rng.get_word_pos(),
        }
    }

    /// Generator positioned where the frame draw started.
    pub fn rng(&self) -> ChaCha8Rng {
        use rand::SeedableRng;
        let mut rng = ChaCha8Rng::from_seed(self.seed);
        rng.set_stream(self.stream);
        rng.set_word_pos(self.word_pos);
        rng
    }
}

/// An N×M matrix of transmit symbols.
#[derive(Debug, Clone)]
pub struct SymbolFrame {
    symbols: CMatrix,
    alphabet: Arc<ModulationAlphabet>,
    seed: Option<SeedRecord>,
}

impl SymbolFrame {
    /// Wraps an explicit symbol matrix. Every entry must be a point of `alphabet`.
    pub fn from_symbols(symbols: CMatrix, alphabet: Arc<ModulationAlphabet>) -> Result<Self> {
        if let Some(bad) = symbols
            .iter()
            .find(|s| !alphabet.points().iter().any(|p| p == *s))
        {
            return Err(IsacError::InvalidParameter(format!(
                "symbol {bad} is not an alphabet point"
            )));
        }
        Ok(Self {
            symbols,
            alphabet,
            seed: None,
        })
    }

    pub fn symbols(&self) -> &CMatrix {
        &self.symbols
    }

    pub fn alphabet(&self) -> &ModulationAlphabet {
        &self.alphabet
    }

    pub fn seed(&self) -> Option<&SeedRecord> {
        self.seed.as_ref()
    }

    pub fn shape(&self) -> (usize, usize) {
        self.symbols.dim()
    }

    /// Entrywise symbol power |X|².
    pub fn power(&self) -> Array2<f64> {
        self.symbols.mapv(|x| x.norm_sqr())
    }
}

/// Draws i.i.d. uniform symbols from `alphabet` into an N×M frame.
pub fn draw_frame(
    cfg: &FrameConfig,
    alphabet: Arc<ModulationAlphabet>,
    rng: &mut ChaCha8Rng,
) -> SymbolFrame {
    let seed = SeedRecord::capture(rng);
    let points = alphabet.points();
    let symbols = Array2::from_shape_fn(cfg.shape(), |_| points[rng.random_range(0..points.len())]);
    SymbolFrame {
        symbols,
        alphabet,
        seed: Some(seed),
    }
}
