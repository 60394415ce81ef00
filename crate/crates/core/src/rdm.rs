//! Matched filtering and range-Doppler processing.
//!
//! The range-Doppler matrix is
//! `P̂[ν, μ] = 1/(NM) Σ_n Σ_m Ĥ[n, m]·e^{−j2πmμ/M}·e^{+j2πnν/N}`,
//! an inverse transform along subcarriers and a forward transform along
//! symbols. With this normalization an on-grid reflection appears as a single
//! bin holding its complex amplitude. No window is applied on either axis.

use std::f64::consts::TAU;

use ndarray::{Array2, Axis, Zip};
use num_complex::Complex64;
use rustfft::FftPlanner;

use crate::channel::ReceiveFrame;
use crate::frame::SymbolFrame;
use crate::{CMatrix, IsacError, Result};

/// Matched-filter output Ĥ = Y∘X*.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelEstimate(pub CMatrix);

impl ChannelEstimate {
    pub fn matrix(&self) -> &CMatrix {
        &self.0
    }

    pub fn shape(&self) -> (usize, usize) {
        self.0.dim()
    }
}

/// Complex range-Doppler matrix; rows are delay bins, columns Doppler bins.
#[derive(Debug, Clone, PartialEq)]
pub struct RangeDopplerMatrix(pub CMatrix);

impl RangeDopplerMatrix {
    pub fn matrix(&self) -> &CMatrix {
        &self.0
    }

    pub fn shape(&self) -> (usize, usize) {
        self.0.dim()
    }

    /// |P̂|² per bin.
    pub fn power(&self) -> Array2<f64> {
        self.0.mapv(|p| p.norm_sqr())
    }

    /// |P̂|² in dB, floored at -300 dB.
    pub fn power_db(&self) -> Array2<f64> {
        self.0.mapv(|p| 10.0 * p.norm_sqr().max(1e-30).log10())
    }
}

pub fn matched_filter(y: &ReceiveFrame, x: &SymbolFrame) -> Result<ChannelEstimate> {
    if y.y.dim() != x.shape() {
        return Err(IsacError::DimensionMismatch {
            expected: x.shape(),
            found: y.y.dim(),
        });
    }
    Ok(ChannelEstimate(Zip::from(&y.y).and(x.symbols()).map_collect(|y, x| y * x.conj())))
}

/// Range-Doppler transform of an arbitrary N×M matrix.
pub fn transform(h: &CMatrix) -> CMatrix {
    let (n_sc, n_sym) = h.dim();
    let mut planner = FftPlanner::<f64>::new();
    let forward = planner.plan_fft_forward(n_sym);
    let inverse = planner.plan_fft_inverse(n_sc);

    let mut out = h.as_standard_layout().into_owned();
    // FFT along symbols: rows are contiguous
    let mut scratch = vec![Complex64::new(0.0, 0.0); forward.get_inplace_scratch_len()];
    for mut row in out.axis_iter_mut(Axis(0)) {
        let row = row.as_slice_mut().expect("standard layout");
        forward.process_with_scratch(row, &mut scratch);
    }
    // IFFT along subcarriers through a column buffer
    let mut column = vec![Complex64::new(0.0, 0.0); n_sc];
    let mut scratch = vec![Complex64::new(0.0, 0.0); inverse.get_inplace_scratch_len()];
    for mut col in out.axis_iter_mut(Axis(1)) {
        column.iter_mut().zip(col.iter()).for_each(|(b, v)| *b = *v);
        inverse.process_with_scratch(&mut column, &mut scratch);
        col.iter_mut().zip(&column).for_each(|(v, b)| *v = *b);
    }
    let norm = (n_sc * n_sym) as f64;
    out.mapv_inplace(|v| v / norm);
    out
}

pub fn compute_rdm(h_hat: &ChannelEstimate) -> RangeDopplerMatrix {
    RangeDopplerMatrix(transform(&h_hat.0))
}

/// e^{sign·j2πkx/len} for k = 0..len.
pub(crate) fn steering(len: usize, x: f64, sign: f64) -> Vec<Complex64> {
    let step = sign * TAU * x / len as f64;
    (0..len)
        .map(|k| Complex64::from_polar(1.0, step * k as f64))
        .collect()
}

/// Row sums weighted along symbols: `g[n] = Σ_m Ĥ[n, m]·e^{−j2πmμ/M}`.
pub(crate) fn delay_profile(h: &CMatrix, mu: f64) -> Vec<Complex64> {
    let w = steering(h.ncols(), mu, -1.0);
    h.rows()
        .into_iter()
        .map(|row| row.iter().zip(&w).map(|(a, b)| a * b).sum())
        .collect()
}

/// Column sums weighted along subcarriers: `f[m] = Σ_n Ĥ[n, m]·e^{+j2πnν/N}`.
pub(crate) fn doppler_profile(h: &CMatrix, nu: f64) -> Vec<Complex64> {
    let w = steering(h.nrows(), nu, 1.0);
    let mut out = vec![Complex64::new(0.0, 0.0); h.ncols()];
    for (row, wn) in h.rows().into_iter().zip(&w) {
        for (o, v) in out.iter_mut().zip(row.iter()) {
            *o += v * wn;
        }
    }
    out
}

/// `Σ_k c[k]·e^{sign·j2πkx/len}` by Horner evaluation.
pub(crate) fn evaluate_profile(coeffs: &[Complex64], x: f64, sign: f64) -> Complex64 {
    let z = Complex64::from_polar(1.0, sign * TAU * x / coeffs.len() as f64);
    coeffs
        .iter()
        .rev()
        .fold(Complex64::new(0.0, 0.0), |acc, c| acc * z + c)
}

/// Continuous-frequency evaluation of the range-Doppler sum at real-valued
/// bins; periodic in ν with period N and in μ with period M. This is the
/// sinc (Dirichlet) interpolant of the periodogram.
pub fn dtft_point(h_hat: &ChannelEstimate, nu: f64, mu: f64) -> Complex64 {
    let (n_sc, n_sym) = h_hat.shape();
    let g = delay_profile(&h_hat.0, mu);
    evaluate_profile(&g, nu, 1.0) / (n_sc * n_sym) as f64
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::{apply_channel, synthesize_channel, Reflection};
    use crate::frame::{draw_frame, make_alphabet, AlphabetKind, FrameConfig};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::PI;
    use std::sync::Arc;

    fn cfg(n: usize, m: usize) -> FrameConfig {
        FrameConfig {
            n_subcarriers: n,
            n_symbols: m,
            ..FrameConfig::desk()
        }
    }

    fn on_grid(cfg: &FrameConfig, nu: f64, mu: f64, a: f64, phi: f64) -> Reflection {
        Reflection {
            amplitude: a,
            delay_s: nu / cfg.sample_rate(),
            doppler_hz: mu / (cfg.n_symbols as f64 * cfg.symbol_duration()),
            phase_rad: phi,
        }
    }

    /// Brute-force double sum at integer bins.
    fn brute_rdm(h: &CMatrix) -> CMatrix {
        let (n_sc, n_sym) = h.dim();
        Array2::from_shape_fn((n_sc, n_sym), |(nu, mu)| {
            let mut acc = Complex64::new(0.0, 0.0);
            for n in 0..n_sc {
                for m in 0..n_sym {
                    let phase = TAU * (n as f64 * nu as f64 / n_sc as f64 - m as f64 * mu as f64 / n_sym as f64);
                    acc += h[[n, m]] * Complex64::from_polar(1.0, phase);
                }
            }
            acc / (n_sc * n_sym) as f64
        })
    }

    fn simulate(cfg: &FrameConfig, kind: AlphabetKind, refl: &[Reflection], seed: u64) -> (SymbolFrame, ChannelEstimate) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let alphabet = Arc::new(make_alphabet(kind, None).unwrap());
        let frame = draw_frame(cfg, alphabet, &mut rng);
        let h = synthesize_channel(cfg, refl);
        let y = apply_channel(&frame, &h, 0.0, &mut rng).unwrap();
        let est = matched_filter(&y, &frame).unwrap();
        (frame, est)
    }

    #[test]
    fn mf_constant_modulus_recovers_channel() {
        let c = cfg(16, 8);
        let refl = [on_grid(&c, 3.0, 2.0, 0.7, 1.0)];
        let (_, est) = simulate(&c, AlphabetKind::Qpsk, &refl, 1);
        let h = synthesize_channel(&c, &refl);
        assert!(Zip::from(&est.0).and(&h.0).all(|a, b| (a - b).norm() < 1e-12));
    }

    #[test]
    fn mf_qam_scales_by_symbol_power() {
        let c = cfg(16, 8);
        let refl = [on_grid(&c, 3.0, 2.0, 0.7, 1.0)];
        let (frame, est) = simulate(&c, AlphabetKind::Qam64, &refl, 2);
        let h = synthesize_channel(&c, &refl);
        Zip::from(&est.0)
            .and(&h.0)
            .and(frame.symbols())
            .for_each(|e, h, x| assert!((e / h - x.norm_sqr()).norm() < 1e-12));
    }

    #[test]
    fn mf_zero_symbol_gives_zero() {
        let alphabet = Arc::new(
            crate::frame::ModulationAlphabet::custom(&[Complex64::new(1.0, 0.0), Complex64::new(0.0, 0.0), Complex64::new(-1.0, 0.0)]).unwrap(),
        );
        let zero = Complex64::new(0.0, 0.0);
        let x = SymbolFrame::from_symbols(Array2::from_elem((2, 2), zero), alphabet).unwrap();
        let y = ReceiveFrame {
            y: Array2::from_elem((2, 2), Complex64::new(3.0, -1.0)),
            noise_variance: 0.0,
        };
        assert!(matched_filter(&y, &x).unwrap().0.iter().all(|v| *v == zero));
    }

    #[test]
    fn rdm_of_constant() {
        let est = ChannelEstimate(Array2::from_elem((8, 4), Complex64::new(1.0, 0.0)));
        let p = compute_rdm(&est);
        for ((nu, mu), v) in p.0.indexed_iter() {
            let expected = if (nu, mu) == (0, 0) { 1.0 } else { 0.0 };
            assert!((v - expected).norm() < 1e-12);
        }
    }

    #[test]
    fn rdm_on_grid_target_matches_brute_force() {
        let c = cfg(8, 4);
        let refl = [on_grid(&c, 2.0, 1.0, 0.5, PI / 3.0)];
        let (_, est) = simulate(&c, AlphabetKind::Qpsk, &refl, 3);
        let p = compute_rdm(&est);
        let brute = brute_rdm(&est.0);
        assert!(Zip::from(&p.0).and(&brute).all(|a, b| (a - b).norm() < 1e-12));
        assert!((brute[[2, 1]] - Complex64::from_polar(0.5, PI / 3.0)).norm() < 1e-12);
        for ((nu, mu), v) in p.0.indexed_iter() {
            if (nu, mu) != (2, 1) {
                assert!(v.norm() < 1e-12);
            }
        }
    }

    #[test]
    fn rdm_negative_doppler_wraps() {
        let c = cfg(16, 8);
        let refl = [on_grid(&c, 4.0, -2.0, 1.0, 0.0)];
        let (_, est) = simulate(&c, AlphabetKind::Qpsk, &refl, 4);
        let p = compute_rdm(&est);
        assert!((p.0[[4, 6]].norm() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn rdm_linearity() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        use rand::Rng;
        let mut random = || Array2::from_shape_fn((16, 8), |_| Complex64::new(rng.random::<f64>() - 0.5, rng.random::<f64>() - 0.5));
        let a = random();
        let b = random();
        let sum = transform(&(&a + &b));
        let parts = transform(&a) + transform(&b);
        assert!(Zip::from(&sum).and(&parts).all(|x, y| (x - y).norm() < 1e-12));
    }

    #[test]
    fn dtft_agrees_with_grid() {
        let c = cfg(16, 8);
        let refl = [on_grid(&c, 3.3, 1.7, 0.9, 0.4), on_grid(&c, 7.0, -1.2, 0.2, 2.0)];
        let (_, est) = simulate(&c, AlphabetKind::Qam16, &refl, 6);
        let p = compute_rdm(&est);
        for ((nu, mu), v) in p.0.indexed_iter() {
            assert!((dtft_point(&est, nu as f64, mu as f64) - v).norm() < 1e-12);
        }
        let zero = ChannelEstimate(Array2::zeros((16, 8)));
        assert_eq!(dtft_point(&zero, 1.3, 2.2), Complex64::new(0.0, 0.0));
    }

    #[test]
    fn dtft_off_grid_peak() {
        let c = cfg(8, 4);
        let a = 0.8;
        let refl = [on_grid(&c, 2.5, 0.0, a, 0.0)];
        let (_, est) = simulate(&c, AlphabetKind::Qpsk, &refl, 7);
        assert!((dtft_point(&est, 2.5, 0.0).norm() - a).abs() < 1e-12);
        let p = compute_rdm(&est);
        let (p2, p3) = (p.0[[2, 0]].norm(), p.0[[3, 0]].norm());
        assert!((p2 - p3).abs() < 1e-12);
        assert!(p2 < a);
        // Dirichlet kernel magnitude at half-bin offset: |sin(π/2)/(N sin(π/(2N)))|
        let expected = a / (8.0 * (PI / 16.0).sin());
        assert!((p2 - expected).abs() < 1e-12);
    }

    #[test]
    fn dtft_is_periodic() {
        let c = cfg(8, 4);
        let (_, est) = simulate(&c, AlphabetKind::Qam64, &[on_grid(&c, 1.4, 0.6, 1.0, 0.0)], 8);
        let a = dtft_point(&est, 1.25, 0.75);
        let b = dtft_point(&est, 1.25 + 8.0, 0.75 - 4.0);
        assert!((a - b).norm() < 1e-12);
    }
}
