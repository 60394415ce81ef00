use ndarray::Array2;
use serde::{Deserialize, Serialize};

use super::Detection;
use crate::rdm::RangeDopplerMatrix;
use crate::{IsacError, Result};

/// Two-dimensional cell-averaging CFAR settings. Axis 0 is delay, axis 1 Doppler.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CfarParams {
    pub guard_cells: [usize; 2],
    pub training_cells: [usize; 2],
    pub false_alarm_rate: f64,
}

impl Default for CfarParams {
    fn default() -> Self {
        Self {
            guard_cells: [2, 2],
            training_cells: [8, 8],
            false_alarm_rate: 1e-4,
        }
    }
}

impl CfarParams {
    fn half_width(&self, axis: usize) -> usize {
        self.guard_cells[axis] + self.training_cells[axis]
    }

    /// Number of training cells T in the window.
    pub fn training_count(&self) -> usize {
        let outer = (2 * self.half_width(0) + 1) * (2 * self.half_width(1) + 1);
        let inner = (2 * self.guard_cells[0] + 1) * (2 * self.guard_cells[1] + 1);
        outer - inner
    }

    /// Threshold factor α = T·(P_FA^{−1/T} − 1) for exponentially distributed cells.
    pub fn threshold_factor(&self) -> f64 {
        let t = self.training_count() as f64;
        t * (self.false_alarm_rate.powf(-1.0 / t) - 1.0)
    }

    pub fn validate(&self, shape: (usize, usize)) -> Result<()> {
        if !(self.false_alarm_rate > 0.0 && self.false_alarm_rate < 1.0) {
            return Err(IsacError::InvalidParameter(format!(
                "false-alarm rate {} outside (0, 1)",
                self.false_alarm_rate
            )));
        }
        if self.training_count() == 0 {
            return Err(IsacError::InvalidParameter("empty CFAR training window".into()));
        }
        let dims = [shape.0, shape.1];
        for axis in 0..2 {
            if 2 * self.half_width(axis) + 1 > dims[axis] {
                return Err(IsacError::InvalidParameter(format!(
                    "CFAR window of {} cells exceeds axis {axis} length {}",
                    2 * self.half_width(axis) + 1,
                    dims[axis]
                )));
            }
        }
        Ok(())
    }
}

/// Summed-area table over a toroidally padded copy of `power`.
struct WrappedSums {
    table: Array2<f64>,
    pad: [usize; 2],
}

impl WrappedSums {
    fn new(power: &Array2<f64>, pad: [usize; 2]) -> Self {
        let (rows, cols) = power.dim();
        let (pr, pc) = (rows + 2 * pad[0], cols + 2 * pad[1]);
        let mut table = Array2::zeros((pr + 1, pc + 1));
        for i in 0..pr {
            let src_r = (i + rows - pad[0] % rows) % rows;
            let mut row_sum = 0.0;
            for j in 0..pc {
                let src_c = (j + cols - pad[1] % cols) % cols;
                row_sum += power[[src_r, src_c]];
                table[[i + 1, j + 1]] = table[[i, j + 1]] + row_sum;
            }
        }
        Self { table, pad }
    }

    /// Sum over the box centred on (r, c) with half-widths (hr, hc).
    fn box_sum(&self, r: usize, c: usize, hr: usize, hc: usize) -> f64 {
        let (r0, c0) = (r + self.pad[0] - hr, c + self.pad[1] - hc);
        let (r1, c1) = (r + self.pad[0] + hr + 1, c + self.pad[1] + hc + 1);
        self.table[[r1, c1]] - self.table[[r0, c1]] - self.table[[r1, c0]] + self.table[[r0, c0]]
    }
}

/// Cell-averaging CFAR on |P̂|² with toroidal edges. Returns detections sorted
/// by descending power.
pub fn detect_cfar(p: &RangeDopplerMatrix, params: &CfarParams) -> Result<Vec<Detection>> {
    params.validate(p.shape())?;
    let power = p.power();
    let (h0, h1) = (params.half_width(0), params.half_width(1));
    let sums = WrappedSums::new(&power, [h0, h1]);
    let t = params.training_count() as f64;
    let alpha = params.threshold_factor();

    let mut out: Vec<Detection> = power
        .indexed_iter()
        .filter_map(|((nu, mu), &v)| {
            let training = sums.box_sum(nu, mu, h0, h1)
                - sums.box_sum(nu, mu, params.guard_cells[0], params.guard_cells[1]);
            (v > alpha * training / t).then_some(Detection {
                bin_nu: nu,
                bin_mu: mu,
                peak_power: v,
            })
        })
        .collect();
    out.sort_by(|a, b| b.peak_power.total_cmp(&a.peak_power));
    Ok(out)
}
