use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::channel::TargetTruth;
use crate::frame::FrameConfig;
use crate::{IsacError, Result};

/// Redraw budget per target before scene generation gives up.
pub const MAX_REDRAWS: usize = 1000;

/// Uniformly drawn targets with unit RCS weight.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RandomScene {
    pub count: usize,
    pub distance_m: [f64; 2],
    pub velocity_mps: [f64; 2],
    /// Minimum distance between any two targets in resolution cells,
    /// measured as sqrt((Δd/Δd_res)² + (Δv/Δv_res)²).
    #[serde(default = "default_separation")]
    pub min_separation_cells: f64,
}

fn default_separation() -> f64 {
    2.0
}

impl RandomScene {
    pub fn new(count: usize, distance_m: [f64; 2], velocity_mps: [f64; 2]) -> Self {
        Self {
            count,
            distance_m,
            velocity_mps,
            min_separation_cells: default_separation(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let ordered = |r: [f64; 2]| r[0].is_finite() && r[1].is_finite() && r[0] < r[1];
        if self.count == 0 {
            return Err(IsacError::Config("random scene needs at least one target".into()));
        }
        if !ordered(self.distance_m) || self.distance_m[0] <= 0.0 {
            return Err(IsacError::Config(format!(
                "distance range {:?} must be positive and non-degenerate",
                self.distance_m
            )));
        }
        if !ordered(self.velocity_mps) {
            return Err(IsacError::Config(format!(
                "velocity range {:?} is degenerate",
                self.velocity_mps
            )));
        }
        if !(self.min_separation_cells >= 0.0) {
            return Err(IsacError::Config("min_separation_cells must be non-negative".into()));
        }
        Ok(())
    }
}

/// Squared distance between two targets in resolution cells.
pub fn cell_distance_sq(a: &TargetTruth, b: &TargetTruth, cfg: &FrameConfig) -> f64 {
    let dd = (a.distance_m - b.distance_m) / cfg.range_resolution();
    let dv = (a.velocity_mps - b.velocity_mps) / cfg.velocity_resolution();
    dd * dd + dv * dv
}

/// Draws `count` targets uniformly over the configured ranges. A target that
/// falls within the minimum separation of an earlier one is redrawn.
pub fn generate_scene(spec: &RandomScene, cfg: &FrameConfig, rng: &mut ChaCha8Rng) -> Result<Vec<TargetTruth>> {
    spec.validate()?;
    let min_sq = spec.min_separation_cells * spec.min_separation_cells;
    let mut targets: Vec<TargetTruth> = Vec::with_capacity(spec.count);
    for i in 0..spec.count {
        let mut placed = false;
        for _ in 0..MAX_REDRAWS {
            let candidate = TargetTruth::new(
                rng.random_range(spec.distance_m[0]..spec.distance_m[1]),
                rng.random_range(spec.velocity_mps[0]..spec.velocity_mps[1]),
            );
            if targets.iter().all(|t| cell_distance_sq(t, &candidate, cfg) >= min_sq) {
                targets.push(candidate);
                placed = true;
                break;
            }
        }
        if !placed {
            return Err(IsacError::SceneGeneration(format!(
                "could not place target {i} of {} after {MAX_REDRAWS} draws",
                spec.count
            )));
        }
    }
    Ok(targets)
}
