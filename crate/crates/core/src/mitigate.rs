//! Coherent successive target cancellation (CSTC) and its two-pass
//! enhancement (ECSTC).
//!
//! Each estimated target is turned into its footprint `|X|²∘ã̂` in the
//! subcarrier/symbol domain. Because the range-Doppler transform is linear,
//! subtracting footprints there is the same as subtracting their RDMs, and it
//! keeps the residual available to the continuous-frequency refinement.

use ndarray::Zip;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::estimate::{local_maxima, refine_peak, wrap_doppler_bin, Detection, TargetEstimate};
use crate::frame::{FrameConfig, SymbolFrame};
use crate::rdm::{compute_rdm, steering, transform, ChannelEstimate, RangeDopplerMatrix};
use crate::CMatrix;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MitigationMode {
    /// Matched filter only, no cancellation.
    Mf,
    Cstc,
    Ecstc,
}

/// Order in which CSTC picks targets.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OrderingPolicy {
    /// Strongest residual peak first.
    Strongest,
    /// Among the strongest remaining candidates, the one at the smallest delay.
    Nearest,
}

/// Contribution of one estimated target.
#[derive(Debug, Clone, PartialEq)]
pub struct InterferenceTemplate {
    /// `|X|²∘ã̂` in the subcarrier/symbol domain.
    pub footprint: CMatrix,
    /// Range-Doppler image of the footprint (Â).
    pub rdm: RangeDopplerMatrix,
    pub amplitude: Complex64,
    pub nu: f64,
    pub mu: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MitigationReport {
    pub first_pass: Vec<TargetEstimate>,
    pub second_pass: Option<Vec<TargetEstimate>>,
    /// Peak |P̂′|² of the residual at the start of each iteration.
    pub residual_peak_power: Vec<f64>,
    pub templates: Vec<InterferenceTemplate>,
}

impl MitigationReport {
    /// Second-pass estimates when present, otherwise the first pass.
    pub fn final_estimates(&self) -> &[TargetEstimate] {
        self.second_pass.as_deref().unwrap_or(&self.first_pass)
    }

    pub fn all_converged(&self) -> bool {
        self.final_estimates().iter().all(|e| e.converged)
    }
}

/// `|X|²∘ã̂` for the estimate's amplitude and continuous bins.
pub fn target_footprint(x: &SymbolFrame, amplitude: Complex64, nu: f64, mu: f64) -> CMatrix {
    let (n_sc, n_sym) = x.shape();
    let along_n = steering(n_sc, nu, -1.0);
    let along_m = steering(n_sym, mu, 1.0);
    let mut out = x.power().mapv(|p| Complex64::new(p, 0.0));
    for (mut row, pn) in out.rows_mut().into_iter().zip(&along_n) {
        let scale = amplitude * pn;
        row.iter_mut().zip(&along_m).for_each(|(v, qm)| *v *= scale * qm);
    }
    out
}

/// Synthesizes the range-Doppler image Â of one target, including the
/// modulation-induced spread from non-constant-modulus symbols.
pub fn synth_target_rdm(x: &SymbolFrame, est: &TargetEstimate, _cfg: &FrameConfig) -> InterferenceTemplate {
    let footprint = target_footprint(x, est.amplitude, est.refined_nu, est.refined_mu);
    let rdm = RangeDopplerMatrix(transform(&footprint));
    InterferenceTemplate {
        footprint,
        rdm,
        amplitude: est.amplitude,
        nu: est.refined_nu,
        mu: est.refined_mu,
    }
}

fn subtract(residual: &mut CMatrix, footprint: &CMatrix) {
    Zip::from(residual).and(footprint).for_each(|r, f| *r -= f);
}

/// Peak sidelobe level of the unwindowed transform, 20·log10(|sinc(1.43)|) ≈ −13.26 dB,
/// as a power ratio.
const PEAK_SIDELOBE_POWER: f64 = 0.047_190;

/// Candidate detections on `rdm` for the next pick under `order`, best first.
///
/// Under the nearest policy, the `remaining` strongest peaks that rise above
/// the sidelobe level of the strongest one are reordered by delay. Weaker
/// peaks could be sidelobes of a target that has not been cancelled yet.
fn candidates(rdm: &RangeDopplerMatrix, order: OrderingPolicy, remaining: usize) -> Vec<Detection> {
    let mut peaks = local_maxima(rdm);
    if order == OrderingPolicy::Nearest && !peaks.is_empty() {
        let floor = peaks[0].peak_power * PEAK_SIDELOBE_POWER;
        let head = peaks
            .iter()
            .take(remaining)
            .take_while(|d| d.peak_power > floor)
            .count();
        peaks[..head].sort_by_key(|d| d.bin_nu);
    }
    peaks
}

/// First refined candidate that does not coincide with an accepted estimate.
fn pick(
    h: &ChannelEstimate,
    peaks: &[Detection],
    accepted: &[TargetEstimate],
    cfg: &FrameConfig,
) -> Option<TargetEstimate> {
    peaks.iter().find_map(|det| {
        let est = refine_peak(h, det, cfg);
        (!accepted.iter().any(|a| est.coincides_with(a, cfg.n_symbols))).then_some(est)
    })
}

/// Plain matched-filter processing: the `l` strongest distinct peaks of the
/// RDM, each refined on the unmodified channel estimate.
pub fn matched_filter_only(h_hat: &ChannelEstimate, l: usize, cfg: &FrameConfig) -> MitigationReport {
    let rdm = compute_rdm(h_hat);
    let peaks = local_maxima(&rdm);
    let mut estimates: Vec<TargetEstimate> = Vec::with_capacity(l);
    let mut start = 0;
    while estimates.len() < l && start < peaks.len() {
        let det = &peaks[start];
        start += 1;
        let est = refine_peak(h_hat, det, cfg);
        if !estimates.iter().any(|a| est.coincides_with(a, cfg.n_symbols)) {
            estimates.push(est);
        }
    }
    MitigationReport {
        residual_peak_power: vec![peaks.first().map_or(0.0, |d| d.peak_power)],
        first_pass: estimates,
        second_pass: None,
        templates: Vec::new(),
    }
}

/// Successive detection, refinement and coherent subtraction of `l` targets.
pub fn cstc(
    h_hat: &ChannelEstimate,
    x: &SymbolFrame,
    l: usize,
    cfg: &FrameConfig,
    order: OrderingPolicy,
) -> MitigationReport {
    let mut residual = h_hat.clone();
    let mut first_pass = Vec::with_capacity(l);
    let mut templates = Vec::with_capacity(l);
    let mut residual_peak_power = Vec::with_capacity(l);
    for iteration in 0..l {
        let rdm = compute_rdm(&residual);
        let peaks = candidates(&rdm, order, l - iteration);
        residual_peak_power.push(peaks.iter().map(|d| d.peak_power).fold(0.0, f64::max));
        let Some(est) = pick(&residual, &peaks, &first_pass, cfg) else {
            break;
        };
        let template = synth_target_rdm(x, &est, cfg);
        subtract(&mut residual.0, &template.footprint);
        first_pass.push(est);
        templates.push(template);
    }
    MitigationReport {
        first_pass,
        second_pass: None,
        residual_peak_power,
        templates,
    }
}

/// Second pass: re-estimates each target with every other first-pass
/// footprint removed. Footprints are reused from the first pass.
pub fn ecstc(
    report: &MitigationReport,
    h_hat: &ChannelEstimate,
    _x: &SymbolFrame,
    cfg: &FrameConfig,
) -> MitigationReport {
    let mut all_removed = h_hat.0.clone();
    for t in &report.templates {
        subtract(&mut all_removed, &t.footprint);
    }
    let (n_sc, n_sym) = cfg.shape();
    let second = report
        .first_pass
        .iter()
        .zip(&report.templates)
        .map(|(first, template)| {
            let isolated = ChannelEstimate(&all_removed + &template.footprint);
            let seed = Detection {
                bin_nu: (first.refined_nu.round().max(0.0) as usize).min(n_sc - 1),
                bin_mu: wrap_doppler_bin(first.refined_mu, n_sym).round().rem_euclid(n_sym as f64) as usize,
                peak_power: first.source.peak_power,
            };
            refine_peak(&isolated, &seed, cfg)
        })
        .collect();
    MitigationReport {
        second_pass: Some(second),
        ..report.clone()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::{apply_channel, synthesize_channel, Reflection};
    use crate::frame::{draw_frame, make_alphabet, AlphabetKind};
    use crate::rdm::{dtft_point, matched_filter};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::sync::Arc;

    fn cfg(n: usize, m: usize) -> FrameConfig {
        FrameConfig {
            n_subcarriers: n,
            n_symbols: m,
            ..FrameConfig::desk()
        }
    }

    fn at_bins(c: &FrameConfig, nu: f64, mu: f64, a: f64, phi: f64) -> Reflection {
        Reflection {
            amplitude: a,
            delay_s: nu / c.sample_rate(),
            doppler_hz: mu / (c.n_symbols as f64 * c.symbol_duration()),
            phase_rad: phi,
        }
    }

    fn oracle_estimate(c: &FrameConfig, r: &Reflection) -> TargetEstimate {
        let (d, v) = crate::estimate::to_physical(r.delay_bin(c), r.doppler_bin(c), c);
        TargetEstimate {
            distance_m: d,
            velocity_mps: v,
            amplitude: r.complex_amplitude(),
            refined_nu: r.delay_bin(c),
            refined_mu: r.doppler_bin(c),
            source: Detection { bin_nu: 0, bin_mu: 0, peak_power: 0.0 },
            converged: true,
        }
    }

    fn scene(c: &FrameConfig, kind: AlphabetKind, refl: &[Reflection], noise: f64, seed: u64) -> (SymbolFrame, ChannelEstimate) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let frame = draw_frame(c, Arc::new(make_alphabet(kind, None).unwrap()), &mut rng);
        let y = apply_channel(&frame, &synthesize_channel(c, refl), noise, &mut rng).unwrap();
        let est = matched_filter(&y, &frame).unwrap();
        (frame, est)
    }

    #[test]
    fn on_grid_template_is_a_delta() {
        let c = cfg(16, 8);
        let r = at_bins(&c, 3.0, 2.0, 0.4, 1.1);
        let (frame, _) = scene(&c, AlphabetKind::Qpsk, &[r], 0.0, 1);
        let t = synth_target_rdm(&frame, &oracle_estimate(&c, &r), &c);
        for ((nu, mu), v) in t.rdm.0.indexed_iter() {
            let expected = if (nu, mu) == (3, 2) { r.complex_amplitude() } else { Complex64::new(0.0, 0.0) };
            assert!((v - expected).norm() < 1e-12);
        }
    }

    #[test]
    fn zero_amplitude_template() {
        let c = cfg(16, 8);
        let r = at_bins(&c, 3.0, 2.0, 0.0, 0.0);
        let (frame, _) = scene(&c, AlphabetKind::Qam64, &[r], 0.0, 2);
        let t = synth_target_rdm(&frame, &oracle_estimate(&c, &r), &c);
        assert!(t.rdm.0.iter().all(|v| v.norm() == 0.0));
    }

    #[test]
    fn exact_parameters_cancel_single_target() {
        let c = cfg(32, 16);
        for kind in [AlphabetKind::Qpsk, AlphabetKind::Qam16, AlphabetKind::Qam64] {
            let r = at_bins(&c, 4.37, -2.71, 0.9, 2.5);
            let (frame, est) = scene(&c, kind, &[r], 0.0, 3);
            let t = synth_target_rdm(&frame, &oracle_estimate(&c, &r), &c);
            let p = compute_rdm(&est);
            let max = (&p.0 - &t.rdm.0).iter().map(|v| v.norm()).fold(0.0, f64::max);
            assert!(max < 1e-9, "{kind}: {max}");
        }
    }

    #[test]
    fn domain_equivalence() {
        let c = cfg(32, 16);
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let (frame, est) = scene(&c, AlphabetKind::Qam64, &[at_bins(&c, 5.2, 1.4, 1.0, 0.0)], 0.1, 5);
        let guess = oracle_estimate(&c, &at_bins(&c, rng.random_range(0.0..10.0), rng.random_range(-4.0..4.0), 0.7, 1.9));
        let t = synth_target_rdm(&frame, &guess, &c);
        let mut residual = est.0.clone();
        subtract(&mut residual, &t.footprint);
        let via_channel = transform(&residual);
        let via_rdm = &compute_rdm(&est).0 - &t.rdm.0;
        assert!(Zip::from(&via_channel).and(&via_rdm).all(|a, b| (a - b).norm() < 1e-12));
    }

    #[test]
    fn single_target_cstc_is_detection_plus_refinement() {
        let c = cfg(64, 16);
        let r = at_bins(&c, 7.3, 2.6, 1.0, 0.2);
        let (frame, est) = scene(&c, AlphabetKind::Qam16, &[r], 0.01, 6);
        let report = cstc(&est, &frame, 1, &c, OrderingPolicy::Strongest);
        let direct = refine_peak(&est, &crate::estimate::detect_max(&compute_rdm(&est)), &c);
        assert_eq!(report.first_pass, vec![direct]);
        assert_eq!(report.residual_peak_power.len(), 1);

        let second = ecstc(&report, &est, &frame, &c);
        let (a, b) = (&report.first_pass[0], &second.final_estimates()[0]);
        assert!((a.refined_nu - b.refined_nu).abs() < 1e-3);
        assert!((a.refined_mu - b.refined_mu).abs() < 1e-3);
    }

    #[test]
    fn strong_and_weak_on_grid_targets() {
        let c = cfg(64, 16);
        let strong = at_bins(&c, 10.0, 3.0, 1.0, 0.5);
        let weak = at_bins(&c, 13.0, 5.0, 0.01, 2.0);
        let (frame, est) = scene(&c, AlphabetKind::Qpsk, &[strong, weak], 0.0, 7);
        let report = cstc(&est, &frame, 2, &c, OrderingPolicy::Strongest);
        let got = report.final_estimates();
        assert_eq!(got.len(), 2);
        assert!((got[0].amplitude - strong.complex_amplitude()).norm() < 1e-6);
        assert!((got[1].amplitude - weak.complex_amplitude()).norm() < 1e-6);
        assert!(report.residual_peak_power[1] < 1e-3);
    }

    #[test]
    fn cstc_shrinks_weak_target_error_under_qam() {
        let c = cfg(64, 16);
        let strong = at_bins(&c, 10.0, 3.0, 1.0, 0.5);
        // 30 dB weaker
        let weak = at_bins(&c, 20.0, 9.0, 10f64.powf(-1.5), 2.0);
        let (frame, est) = scene(&c, AlphabetKind::Qam64, &[strong, weak], 0.0, 8);
        let without = matched_filter_only(&est, 2, &c);
        let with = cstc(&est, &frame, 2, &c, OrderingPolicy::Strongest);
        let err = |e: &[TargetEstimate]| {
            e.iter()
                .map(|t| (t.amplitude - weak.complex_amplitude()).norm())
                .fold(f64::INFINITY, f64::min)
        };
        let (e_mf, e_cstc) = (err(without.final_estimates()), err(with.final_estimates()));
        assert!(20.0 * (e_mf / e_cstc).log10() >= 10.0, "mf {e_mf} cstc {e_cstc}");
    }

    #[test]
    fn oracle_fed_second_pass_isolates_each_target() {
        let c = cfg(64, 16);
        let refl = [
            at_bins(&c, 6.3, 1.2, 1.0, 0.1),
            at_bins(&c, 8.1, -2.4, 0.3, 1.7),
            at_bins(&c, 11.6, 4.4, 0.1, 3.0),
        ];
        let (frame, est) = scene(&c, AlphabetKind::Qam64, &refl, 0.0, 9);
        let first_pass: Vec<TargetEstimate> = refl.iter().map(|r| oracle_estimate(&c, r)).collect();
        let templates = first_pass.iter().map(|e| synth_target_rdm(&frame, e, &c)).collect();
        let report = MitigationReport {
            first_pass,
            second_pass: None,
            residual_peak_power: vec![],
            templates,
        };
        let second = ecstc(&report, &est, &frame, &c);
        for (r, e) in refl.iter().zip(second.final_estimates()) {
            // single-target reference: the isolated component alone
            let (_, alone) = scene(&c, AlphabetKind::Qam64, &[*r], 0.0, 9);
            let reference = refine_peak(&alone, &e.source, &c);
            assert!((e.refined_nu - reference.refined_nu).abs() < 1e-4);
            assert!((e.refined_mu - reference.refined_mu).abs() < 1e-4);
            assert!((e.refined_nu - r.delay_bin(&c)).abs() < 1e-4);
            assert!((dtft_point(&alone, e.refined_nu, e.refined_mu) - e.amplitude).norm() < 1e-6);
        }
    }

    #[test]
    fn exact_cancellation_of_all_targets() {
        let c = cfg(64, 16);
        let refl = [
            at_bins(&c, 3.3, 1.2, 1.0, 0.1),
            at_bins(&c, 8.8, -2.4, 0.3, 1.7),
            at_bins(&c, 11.1, 4.4, 0.1, 3.0),
            at_bins(&c, 14.5, -0.5, 0.05, 5.0),
        ];
        for kind in [AlphabetKind::Qpsk, AlphabetKind::Qam64] {
            let (frame, est) = scene(&c, kind, &refl, 0.0, 10);
            let mut residual = est.0.clone();
            for r in &refl {
                subtract(&mut residual, &synth_target_rdm(&frame, &oracle_estimate(&c, r), &c).footprint);
            }
            let peak = transform(&residual).iter().map(|v| v.norm()).fold(0.0, f64::max);
            assert!(peak < 1e-9);
        }
    }

    #[test]
    fn nearest_policy_processes_by_delay() {
        let c = cfg(64, 16);
        let refl = [at_bins(&c, 12.0, 2.0, 1.0, 0.0), at_bins(&c, 4.0, -3.0, 0.5, 1.0)];
        let (frame, est) = scene(&c, AlphabetKind::Qpsk, &refl, 0.0, 11);
        let nearest = cstc(&est, &frame, 2, &c, OrderingPolicy::Nearest);
        assert!((nearest.first_pass[0].refined_nu - 4.0).abs() < 1e-6);
        let strongest = cstc(&est, &frame, 2, &c, OrderingPolicy::Strongest);
        assert!((strongest.first_pass[0].refined_nu - 12.0).abs() < 1e-6);
    }

    #[test]
    fn nearest_policy_ignores_peaks_below_sidelobe_level() {
        // the near target sits 14 dB below the far one, where a sidelobe of
        // the far target could be; it is only taken once the far one is gone
        let c = cfg(64, 16);
        let weak = 10f64.powf(-14.0 / 20.0);
        let refl = [at_bins(&c, 20.0, 2.0, 1.0, 0.0), at_bins(&c, 5.0, -3.0, weak, 1.0)];
        let (frame, est) = scene(&c, AlphabetKind::Qpsk, &refl, 0.0, 12);
        let nearest = cstc(&est, &frame, 2, &c, OrderingPolicy::Nearest);
        assert!((nearest.first_pass[0].refined_nu - 20.0).abs() < 1e-6);
        assert!((nearest.first_pass[1].refined_nu - 5.0).abs() < 1e-6);

        let louder = [refl[0], at_bins(&c, 5.0, -3.0, 10f64.powf(-12.0 / 20.0), 1.0)];
        let (frame, est) = scene(&c, AlphabetKind::Qpsk, &louder, 0.0, 12);
        let nearest = cstc(&est, &frame, 2, &c, OrderingPolicy::Nearest);
        assert!((nearest.first_pass[0].refined_nu - 5.0).abs() < 1e-6);
    }
}
