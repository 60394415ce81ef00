use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::config::ScenarioConfig;
use super::trial::TrialResult;
use crate::estimate::crb;
use crate::{IsacError, Result};

/// Statistics of the target with a given distance rank, across trials.
/// MSE fields are NaN when the target was never associated.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TargetStats {
    pub target_index: usize,
    pub truth_d_mean: f64,
    pub mse_d: f64,
    pub crb_d: f64,
    pub mse_v: f64,
    pub crb_v: f64,
    pub miss_rate: f64,
    /// Trials in which the target was associated with an estimate.
    pub matched: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MseReport {
    pub config: ScenarioConfig,
    pub trials: usize,
    pub failed_trials: usize,
    pub targets: Vec<TargetStats>,
    pub total_misses: usize,
    pub total_false_alarms: usize,
    pub total_unconverged: usize,
}

impl MseReport {
    pub fn mean_mse_d(&self) -> f64 {
        mean(self.targets.iter().map(|t| t.mse_d))
    }

    pub fn mean_mse_v(&self) -> f64 {
        mean(self.targets.iter().map(|t| t.mse_v))
    }

    pub fn miss_rate(&self) -> f64 {
        let slots: usize = self.targets.len() * (self.trials - self.failed_trials);
        if slots == 0 {
            return 0.0;
        }
        self.total_misses as f64 / slots as f64
    }
}

fn mean(values: impl Iterator<Item = f64>) -> f64 {
    let (sum, n) = values.fold((0.0, 0usize), |(s, n), v| (s + v, n + 1));
    sum / n as f64
}

/// Per-target-index mean squared errors over all trials. The CRB of each
/// index is the mean of the per-trial bounds at that target's SNR.
pub fn aggregate(results: &[TrialResult], cfg: &ScenarioConfig) -> Result<MseReport> {
    if results.is_empty() {
        return Err(IsacError::InvalidParameter("no trial results to aggregate".into()));
    }
    let l = results.iter().map(|r| r.rows.len()).max().unwrap_or(0);
    let ok: Vec<&TrialResult> = results.iter().filter(|r| r.diagnostics.error.is_none()).collect();
    let mut targets = Vec::with_capacity(l);
    for index in 0..l {
        let rows: Vec<_> = ok.iter().filter_map(|r| r.rows.get(index)).collect();
        let present = rows.len();
        let mut stats = TargetStats {
            target_index: index,
            truth_d_mean: 0.0,
            mse_d: 0.0,
            crb_d: 0.0,
            mse_v: 0.0,
            crb_v: 0.0,
            miss_rate: 0.0,
            matched: 0,
        };
        for row in &rows {
            stats.truth_d_mean += row.truth_d;
            let (cd, cv) = crb(&cfg.frame, row.snr)?;
            stats.crb_d += cd;
            stats.crb_v += cv;
            if let (Some(ed), Some(ev)) = (row.sq_err_d, row.sq_err_v) {
                stats.mse_d += ed;
                stats.mse_v += ev;
                stats.matched += 1;
            }
        }
        let p = present as f64;
        let k = stats.matched as f64;
        stats.truth_d_mean /= p;
        stats.crb_d /= p;
        stats.crb_v /= p;
        stats.mse_d /= k;
        stats.mse_v /= k;
        stats.miss_rate = (present - stats.matched) as f64 / p;
        targets.push(stats);
    }
    Ok(MseReport {
        config: cfg.clone(),
        trials: results.len(),
        failed_trials: results.len() - ok.len(),
        targets,
        total_misses: ok.iter().map(|r| r.diagnostics.misses).sum(),
        total_false_alarms: ok.iter().map(|r| r.diagnostics.false_alarms).sum(),
        total_unconverged: ok.iter().map(|r| r.diagnostics.unconverged).sum(),
    })
}

fn io_err(path: &Path) -> impl Fn(std::io::Error) -> IsacError + '_ {
    move |e| IsacError::Io(format!("{}: {e}", path.display()))
}

pub const CSV_HEADER: &str = "target_index,truth_d_mean,mse_d,crb_d,mse_v,crb_v,miss_rate";

pub fn write_mse_csv(report: &MseReport, path: &Path) -> Result<()> {
    let mut w = BufWriter::new(File::create(path).map_err(io_err(path))?);
    let mut body = String::from(CSV_HEADER);
    body.push('\n');
    for t in &report.targets {
        body.push_str(&format!(
            "{},{},{},{},{},{},{}\n",
            t.target_index, t.truth_d_mean, t.mse_d, t.crb_d, t.mse_v, t.crb_v, t.miss_rate
        ));
    }
    w.write_all(body.as_bytes()).map_err(io_err(path))?;
    w.flush().map_err(io_err(path))
}

pub fn write_trials_jsonl(results: &[TrialResult], path: &Path) -> Result<()> {
    let mut w = BufWriter::new(File::create(path).map_err(io_err(path))?);
    for r in results {
        let line = serde_json::to_string(r).map_err(|e| IsacError::Io(e.to_string()))?;
        writeln!(w, "{line}").map_err(io_err(path))?;
    }
    w.flush().map_err(io_err(path))
}

pub fn write_report_json(report: &MseReport, path: &Path) -> Result<()> {
    let text = serde_json::to_string_pretty(report).map_err(|e| IsacError::Io(e.to_string()))?;
    fs::write(path, text + "\n").map_err(io_err(path))
}

/// Writes `mse_per_target.csv`, `trials.jsonl` and `report.json` into `dir`.
pub fn write_outputs(dir: &Path, report: &MseReport, results: &[TrialResult]) -> Result<()> {
    fs::create_dir_all(dir).map_err(io_err(dir))?;
    write_mse_csv(report, &dir.join("mse_per_target.csv"))?;
    write_trials_jsonl(results, &dir.join("trials.jsonl"))?;
    write_report_json(report, &dir.join("report.json"))
}
