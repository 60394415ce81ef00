use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::config::{DetectionMode, SceneSpec, ScenarioConfig};
use super::rng::{stream_rng, trial_seed, Stream};
use super::scene::generate_scene;
use crate::channel::{
    apply_channel, expand_scattering, reflections_from_targets, synthesize_channel, Reflection, TargetTruth,
};
use crate::estimate::{detect_cfar, local_maxima, TargetEstimate};
use crate::frame::{draw_frame, FrameConfig, ModulationAlphabet};
use crate::mitigate::{cstc, ecstc, matched_filter_only, MitigationMode, MitigationReport};
use crate::rdm::{compute_rdm, matched_filter, ChannelEstimate};
use crate::{IsacError, Result};

/// One-to-one assignment between estimates and true targets.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Matching {
    /// For each truth, the index of its estimate, or `None` for a miss.
    pub truth_to_estimate: Vec<Option<usize>>,
    /// Estimates left unassigned.
    pub false_alarms: Vec<usize>,
}

impl Matching {
    pub fn misses(&self) -> usize {
        self.truth_to_estimate.iter().filter(|m| m.is_none()).count()
    }
}

/// Normalized squared distance in resolution cells.
fn cost(est: &TargetEstimate, truth: &TargetTruth, cfg: &FrameConfig) -> f64 {
    let dd = (est.distance_m - truth.distance_m) / cfg.range_resolution();
    let dv = (est.velocity_mps - truth.velocity_mps) / cfg.velocity_resolution();
    dd * dd + dv * dv
}

/// Greedy matching: repeatedly pairs the closest unassigned (estimate, truth)
/// pair until no pair lies within `gate` resolution cells.
pub fn associate(estimates: &[TargetEstimate], truths: &[TargetTruth], cfg: &FrameConfig, gate: f64) -> Matching {
    let gate_sq = gate * gate;
    let mut pairs: Vec<(f64, usize, usize)> = Vec::with_capacity(estimates.len() * truths.len());
    for (e, est) in estimates.iter().enumerate() {
        for (t, truth) in truths.iter().enumerate() {
            let c = cost(est, truth, cfg);
            if c <= gate_sq {
                pairs.push((c, t, e));
            }
        }
    }
    // ties broken by truth index, then by the estimate's own coordinates so
    // the result does not depend on the order of `estimates`
    pairs.sort_by(|a, b| {
        a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)).then_with(|| {
            let (ea, eb) = (&estimates[a.2], &estimates[b.2]);
            ea.distance_m
                .total_cmp(&eb.distance_m)
                .then(ea.velocity_mps.total_cmp(&eb.velocity_mps))
        })
    });
    let mut truth_to_estimate = vec![None; truths.len()];
    let mut used = vec![false; estimates.len()];
    for (_, t, e) in pairs {
        if truth_to_estimate[t].is_none() && !used[e] {
            truth_to_estimate[t] = Some(e);
            used[e] = true;
        }
    }
    let false_alarms = (0..estimates.len()).filter(|&e| !used[e]).collect();
    Matching {
        truth_to_estimate,
        false_alarms,
    }
}

/// One true target of a trial and what was estimated for it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TargetRow {
    pub truth_d: f64,
    pub truth_v: f64,
    /// |a|²/σ²_W of the specular return before any scattering split.
    pub snr: f64,
    pub estimate_d: Option<f64>,
    pub estimate_v: Option<f64>,
    pub sq_err_d: Option<f64>,
    pub sq_err_v: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialDiagnostics {
    /// Number of targets the detector decided to extract.
    pub detected: usize,
    pub misses: usize,
    pub false_alarms: usize,
    /// (distance, velocity) of the estimates left unassociated.
    pub unmatched: Vec<[f64; 2]>,
    /// Estimates whose refinement hit the sweep limit.
    pub unconverged: usize,
    /// Set when the trial could not be run; rows are then empty.
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialResult {
    pub trial: u64,
    pub seed: u64,
    /// One row per true target, in ascending true distance.
    pub rows: Vec<TargetRow>,
    pub diagnostics: TrialDiagnostics,
}

/// Number of targets to extract in CFAR mode: detections that are also
/// local maxima of the RDM.
fn cfar_count(h_hat: &ChannelEstimate, cfg: &ScenarioConfig) -> Result<usize> {
    let rdm = compute_rdm(h_hat);
    let hits = detect_cfar(&rdm, &cfg.cfar)?;
    let peaks = local_maxima(&rdm);
    Ok(hits
        .iter()
        .filter(|d| peaks.iter().any(|p| p.bin_nu == d.bin_nu && p.bin_mu == d.bin_mu))
        .count())
}

fn mitigate(
    h_hat: &ChannelEstimate,
    x: &crate::frame::SymbolFrame,
    l: usize,
    cfg: &ScenarioConfig,
) -> MitigationReport {
    match cfg.mitigation {
        MitigationMode::Mf => matched_filter_only(h_hat, l, &cfg.frame),
        MitigationMode::Cstc => cstc(h_hat, x, l, &cfg.frame, cfg.ordering),
        MitigationMode::Ecstc => {
            let first = cstc(h_hat, x, l, &cfg.frame, cfg.ordering);
            ecstc(&first, h_hat, x, &cfg.frame)
        }
    }
}

/// Ground truth of one trial: targets and their reflections.
pub struct TrialScene {
    pub targets: Vec<TargetTruth>,
    /// Specular reflections, one per target, before scattering.
    pub specular: Vec<Reflection>,
    /// Everything that enters the channel.
    pub reflections: Vec<Reflection>,
    pub noise_variance: f64,
}

pub fn build_scene(cfg: &ScenarioConfig, seed: u64) -> Result<TrialScene> {
    let targets = match &cfg.scene {
        SceneSpec::Targets(t) => t.clone(),
        SceneSpec::Random(r) => generate_scene(r, &cfg.frame, &mut stream_rng(seed, Stream::Scene))?,
    };
    let (specular, noise_variance) =
        reflections_from_targets(&targets, &cfg.frame, cfg.snr_y_db, &mut stream_rng(seed, Stream::Phase))?;
    let scattering = cfg.scattering_params();
    let reflections = if scattering.enabled {
        let mut rng = stream_rng(seed, Stream::Scattering);
        specular
            .iter()
            .flat_map(|r| expand_scattering(r, &scattering, &mut rng))
            .collect()
    } else {
        specular.clone()
    };
    Ok(TrialScene {
        targets,
        specular,
        reflections,
        noise_variance,
    })
}

/// Matched-filter channel estimate of a trial, with the transmitted frame.
pub fn simulate_estimate(
    cfg: &ScenarioConfig,
    alphabet: &Arc<ModulationAlphabet>,
    scene: &TrialScene,
    seed: u64,
) -> Result<(ChannelEstimate, crate::frame::SymbolFrame)> {
    let x = draw_frame(&cfg.frame, Arc::clone(alphabet), &mut stream_rng(seed, Stream::Frame));
    let h = synthesize_channel(&cfg.frame, &scene.reflections);
    let y = apply_channel(&x, &h, scene.noise_variance, &mut stream_rng(seed, Stream::Noise))?;
    let h_hat = matched_filter(&y, &x)?;
    Ok((h_hat, x))
}

fn run_with(cfg: &ScenarioConfig, alphabet: &Arc<ModulationAlphabet>, trial: u64) -> Result<TrialResult> {
    let seed = trial_seed(cfg.seed, trial);
    let scene = build_scene(cfg, seed)?;
    let (h_hat, x) = simulate_estimate(cfg, alphabet, &scene, seed)?;
    let l = match cfg.detection {
        DetectionMode::KnownL => scene.targets.len(),
        DetectionMode::Cfar => cfar_count(&h_hat, cfg)?,
    };
    let report = mitigate(&h_hat, &x, l, cfg);
    let estimates = report.final_estimates();
    let matching = associate(estimates, &scene.targets, &cfg.frame, cfg.association_gate);

    let mut rows: Vec<TargetRow> = scene
        .targets
        .iter()
        .zip(&scene.specular)
        .zip(&matching.truth_to_estimate)
        .map(|((t, r), m)| {
            let est = m.map(|e| &estimates[e]);
            TargetRow {
                truth_d: t.distance_m,
                truth_v: t.velocity_mps,
                snr: r.power() / scene.noise_variance,
                estimate_d: est.map(|e| e.distance_m),
                estimate_v: est.map(|e| e.velocity_mps),
                sq_err_d: est.map(|e| (e.distance_m - t.distance_m).powi(2)),
                sq_err_v: est.map(|e| (e.velocity_mps - t.velocity_mps).powi(2)),
            }
        })
        .collect();
    rows.sort_by(|a, b| a.truth_d.total_cmp(&b.truth_d));
    Ok(TrialResult {
        trial,
        seed,
        rows,
        diagnostics: TrialDiagnostics {
            detected: l,
            misses: matching.misses(),
            false_alarms: matching.false_alarms.len(),
            unmatched: matching
                .false_alarms
                .iter()
                .map(|&e| [estimates[e].distance_m, estimates[e].velocity_mps])
                .collect(),
            unconverged: estimates.iter().filter(|e| !e.converged).count(),
            error: None,
        },
    })
}

fn failed(cfg: &ScenarioConfig, trial: u64, err: IsacError) -> TrialResult {
    TrialResult {
        trial,
        seed: trial_seed(cfg.seed, trial),
        rows: Vec::new(),
        diagnostics: TrialDiagnostics {
            detected: 0,
            misses: 0,
            false_alarms: 0,
            unmatched: Vec::new(),
            unconverged: 0,
            error: Some(err.to_string()),
        },
    }
}

/// Runs trial number `trial` of the batch described by `cfg`. Failures inside
/// the trial are recorded in its diagnostics.
pub fn run_trial(cfg: &ScenarioConfig, trial: u64) -> Result<TrialResult> {
    cfg.validate()?;
    let alphabet = Arc::new(cfg.build_alphabet()?);
    Ok(run_with(cfg, &alphabet, trial).unwrap_or_else(|e| failed(cfg, trial, e)))
}

/// Runs all `cfg.trials` trials in parallel. The output is in trial order and
/// does not depend on the thread count.
pub fn run_trials(cfg: &ScenarioConfig) -> Result<Vec<TrialResult>> {
    cfg.validate()?;
    cfg.check_feasible()?;
    let alphabet = Arc::new(cfg.build_alphabet()?);
    Ok((0..cfg.trials as u64)
        .into_par_iter()
        .map(|k| run_with(cfg, &alphabet, k).unwrap_or_else(|e| failed(cfg, k, e)))
        .collect())
}
