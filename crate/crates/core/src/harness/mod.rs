//! Scenario configuration, seeded Monte-Carlo trials and MSE reporting.

pub mod config;
pub mod report;
pub mod rng;
pub mod scene;
pub mod trial;

pub use config::{DetectionMode, ScatteringConfig, SceneSpec, ScenarioConfig};
pub use report::{aggregate, MseReport, TargetStats};
pub use scene::{generate_scene, RandomScene};
pub use trial::{associate, run_trial, run_trials, Matching, TargetRow, TrialDiagnostics, TrialResult};
