use std::path::Path;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use super::scene::RandomScene;
use crate::channel::{default_doppler_jitter, ScatteringParams, TargetTruth};
use crate::estimate::CfarParams;
use crate::frame::{make_alphabet, AlphabetKind, FrameConfig, ModulationAlphabet};
use crate::mitigate::{MitigationMode, OrderingPolicy};
use crate::{IsacError, Result};

/// Fixed target list or a random scene drawn per trial.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SceneSpec {
    Targets(Vec<TargetTruth>),
    Random(RandomScene),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum DetectionMode {
    /// The number of targets is known; the strongest peaks are taken greedily.
    #[serde(rename = "known-l")]
    KnownL,
    /// The number of targets is the number of CA-CFAR peaks.
    #[serde(rename = "cfar")]
    Cfar,
}

/// Scattering settings as written in a config file. A missing Doppler jitter
/// defaults to 0.02 Doppler bins.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ScatteringConfig {
    pub enabled: bool,
    pub rho: f64,
    pub k_s: usize,
    pub extent_m: f64,
    pub doppler_jitter_hz: Option<f64>,
}

impl Default for ScatteringConfig {
    fn default() -> Self {
        Self {
            enabled: false,
            rho: 0.9,
            k_s: 8,
            extent_m: 8.0,
            doppler_jitter_hz: None,
        }
    }
}

impl ScatteringConfig {
    pub fn resolve(&self, frame: &FrameConfig) -> ScatteringParams {
        ScatteringParams {
            enabled: self.enabled,
            rho: self.rho,
            k_s: self.k_s,
            extent_m: self.extent_m,
            doppler_jitter_hz: self
                .doppler_jitter_hz
                .unwrap_or_else(|| default_doppler_jitter(frame)),
        }
    }
}

/// Everything needed to run a batch of trials.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ScenarioConfig {
    pub frame: FrameConfig,
    pub alphabet: AlphabetKind,
    /// `[re, im]` pairs, used when `alphabet` is `custom`.
    pub custom_points: Option<Vec<[f64; 2]>>,
    pub scene: SceneSpec,
    pub snr_y_db: f64,
    pub scattering: ScatteringConfig,
    pub mitigation: MitigationMode,
    pub ordering: OrderingPolicy,
    pub detection: DetectionMode,
    pub cfar: CfarParams,
    /// Largest normalized distance, in resolution cells, at which an
    /// estimate may be associated with a true target.
    pub association_gate: f64,
    pub trials: usize,
    pub seed: u64,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        Self::desk()
    }
}

impl ScenarioConfig {
    /// 256×64 frame, 8 random targets in [108, 348] m × [−120, 120] m/s,
    /// 64-QAM, ECSTC, 300 trials.
    ///
    /// At this frame size a resolution cell is about 19.5 m by 18.8 m/s. The
    /// scene fills the region allowed by the cyclic prefix and the Doppler
    /// limit, and keeps the 145/45 distance ratio of the full-size scene, so
    /// the spread of per-target SNRs is the same.
    pub fn desk() -> Self {
        Self {
            frame: FrameConfig::desk(),
            alphabet: AlphabetKind::Qam64,
            custom_points: None,
            scene: SceneSpec::Random(RandomScene::new(8, [108.0, 348.0], [-120.0, 120.0])),
            snr_y_db: 0.0,
            scattering: ScatteringConfig::default(),
            mitigation: MitigationMode::Ecstc,
            ordering: OrderingPolicy::Strongest,
            detection: DetectionMode::KnownL,
            cfar: CfarParams::default(),
            association_gate: 2.0,
            trials: 300,
            seed: 1,
        }
    }

    /// Full-size numerology with 16 targets.
    pub fn paper() -> Self {
        Self {
            frame: FrameConfig::paper(),
            scene: SceneSpec::Random(RandomScene::new(16, [45.0, 145.0], [-50.0, 50.0])),
            ordering: OrderingPolicy::Nearest,
            trials: 1000,
            ..Self::desk()
        }
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: Self = serde_json::from_str(text).map_err(|e| IsacError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| IsacError::Config(format!("{}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    pub fn build_alphabet(&self) -> Result<ModulationAlphabet> {
        let points: Option<Vec<Complex64>> = self
            .custom_points
            .as_ref()
            .map(|p| p.iter().map(|[re, im]| Complex64::new(*re, *im)).collect());
        make_alphabet(self.alphabet, points.as_deref())
    }

    pub fn scattering_params(&self) -> ScatteringParams {
        self.scattering.resolve(&self.frame)
    }

    /// Structural checks; violations are configuration errors.
    pub fn validate(&self) -> Result<()> {
        let config_err = |e: IsacError| IsacError::Config(e.to_string());
        self.frame.validate().map_err(config_err)?;
        self.build_alphabet().map_err(config_err)?;
        self.scattering_params().validate().map_err(config_err)?;
        if self.trials == 0 {
            return Err(IsacError::Config("trial count must be at least 1".into()));
        }
        if !self.snr_y_db.is_finite() {
            return Err(IsacError::Config("snr_y_db must be finite".into()));
        }
        if !(self.association_gate > 0.0) {
            return Err(IsacError::Config("association_gate must be positive".into()));
        }
        if self.detection == DetectionMode::Cfar {
            self.cfar.validate(self.frame.shape()).map_err(config_err)?;
        }
        match &self.scene {
            SceneSpec::Targets(t) if t.is_empty() => {
                Err(IsacError::Config("target list is empty".into()))
            }
            SceneSpec::Targets(_) => Ok(()),
            SceneSpec::Random(r) => r.validate(),
        }
    }

    /// Checks that every possible target satisfies the cyclic-prefix and
    /// Doppler conditions of the frame.
    pub fn check_feasible(&self) -> Result<()> {
        match &self.scene {
            SceneSpec::Targets(targets) => targets
                .iter()
                .enumerate()
                .try_for_each(|(i, t)| t.check_feasible(&self.frame, i)),
            SceneSpec::Random(r) => {
                let far = r.distance_m[1];
                let fast = r.velocity_mps[0].abs().max(r.velocity_mps[1].abs());
                TargetTruth::new(far, fast)
                    .check_feasible(&self.frame, 0)
                    .map_err(|e| IsacError::ScenarioInfeasible(format!("random scene range: {e}")))
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_are_valid_and_feasible() {
        for cfg in [ScenarioConfig::desk(), ScenarioConfig::paper()] {
            cfg.validate().unwrap();
            cfg.check_feasible().unwrap();
        }
    }

    #[test]
    fn json_round_trip_and_partial_documents() {
        let cfg = ScenarioConfig::desk();
        let text = serde_json::to_string_pretty(&cfg).unwrap();
        assert_eq!(ScenarioConfig::from_json(&text).unwrap(), cfg);

        let partial = r#"{
            "alphabet": "custom",
            "custom_points": [[2, 0], [-2, 0]],
            "scene": {"targets": [{"distance_m": 60, "velocity_mps": 10}]},
            "mitigation": "mf",
            "detection": "known-l",
            "trials": 3
        }"#;
        let cfg = ScenarioConfig::from_json(partial).unwrap();
        assert_eq!(cfg.trials, 3);
        assert_eq!(cfg.frame, FrameConfig::desk());
        assert_eq!(cfg.build_alphabet().unwrap().points()[0], Complex64::new(1.0, 0.0));
    }

    #[test]
    fn unknown_keys_rejected() {
        assert!(matches!(
            ScenarioConfig::from_json(r#"{"trails": 3}"#),
            Err(IsacError::Config(_))
        ));
        assert!(ScenarioConfig::from_json(r#"{"frame": {"n_subcarriers": 64}}"#).is_err());
        assert!(ScenarioConfig::from_json(r#"{"scattering": {"enabled": true, "beta": 1}}"#).is_err());
    }

    #[test]
    fn invalid_values_rejected() {
        assert!(ScenarioConfig::from_json(r#"{"trials": 0}"#).is_err());
        assert!(ScenarioConfig::from_json(r#"{"alphabet": "custom"}"#).is_err());
        assert!(ScenarioConfig::from_json(r#"{"scattering": {"enabled": true, "rho": 1.5}}"#).is_err());
        assert!(ScenarioConfig::from_json(r#"{"alphabet": "qam256"}"#).is_err());
    }

    #[test]
    fn infeasible_scene_detected() {
        let cfg = ScenarioConfig::from_json(
            r#"{"scene": {"targets": [{"distance_m": 60, "velocity_mps": 0}, {"distance_m": 500, "velocity_mps": 0}]}}"#,
        )
        .unwrap();
        assert!(matches!(cfg.check_feasible(), Err(IsacError::ScenarioInfeasible(_))));
    }
}
