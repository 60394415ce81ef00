use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;

use clap::{Parser, Subcommand};

use ofdm_isac::estimate::crb;
use ofdm_isac::harness::report::write_outputs;
use ofdm_isac::harness::rng::trial_seed;
use ofdm_isac::harness::trial::{build_scene, simulate_estimate};
use ofdm_isac::harness::{aggregate, run_trials, MseReport, ScenarioConfig};
use ofdm_isac::rdm::compute_rdm;
use ofdm_isac::{IsacError, Result};

#[derive(Parser)]
#[command(name = "ofdm-isac", version, about = "OFDM sensing Monte-Carlo simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the configured trials and write MSE reports.
    Simulate {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run the configuration at several SNR values.
    Sweep {
        #[arg(long)]
        config: PathBuf,
        /// start:step:stop in dB, stop inclusive
        #[arg(long, allow_hyphen_values = true)]
        snr: String,
        #[arg(long)]
        out: PathBuf,
    },
    /// Write the matched-filter range-Doppler map of one trial as CSV (dB).
    RdmDump {
        #[arg(long)]
        config: PathBuf,
        /// Master seed; the first trial under this seed is dumped.
        #[arg(long)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Print Cramér-Rao bounds for the configured frame.
    Crb {
        #[arg(long)]
        config: PathBuf,
        /// Per-target SNR in dB. Without it, the bounds of each target in the
        /// first trial's scene are printed.
        #[arg(long, allow_hyphen_values = true)]
        snr: Option<f64>,
    },
}

fn parse_range(spec: &str) -> Result<Vec<f64>> {
    let parts: Vec<f64> = spec
        .split(':')
        .map(|p| p.trim().parse::<f64>())
        .collect::<std::result::Result<_, _>>()
        .map_err(|e| IsacError::Config(format!("bad SNR range {spec:?}: {e}")))?;
    let [start, step, stop] = parts[..] else {
        return Err(IsacError::Config(format!("SNR range {spec:?} is not start:step:stop")));
    };
    if !(step > 0.0) || stop < start || !start.is_finite() || !stop.is_finite() {
        return Err(IsacError::Config(format!("SNR range {spec:?} is empty or unbounded")));
    }
    let count = ((stop - start) / step + 1e-9).floor() as usize + 1;
    Ok((0..count).map(|i| start + step * i as f64).collect())
}

fn simulate(cfg: &ScenarioConfig, out: &Path) -> Result<MseReport> {
    let results = run_trials(cfg)?;
    let report = aggregate(&results, cfg)?;
    write_outputs(out, &report, &results)?;
    Ok(report)
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Simulate { config, out } => {
            let cfg = ScenarioConfig::load(&config)?;
            cfg.check_feasible()?;
            let report = simulate(&cfg, &out)?;
            println!(
                "{} trials, mean MSE_d {} m², mean MSE_v {} m²/s², miss rate {}",
                report.trials,
                report.mean_mse_d(),
                report.mean_mse_v(),
                report.miss_rate()
            );
        }
        Command::Sweep { config, snr, out } => {
            let base = ScenarioConfig::load(&config)?;
            base.check_feasible()?;
            let points = parse_range(&snr)?;
            fs::create_dir_all(&out).map_err(|e| IsacError::Io(e.to_string()))?;
            let mut csv = String::from("snr_db,target_index,mse_d,crb_d,mse_v,crb_v,miss_rate\n");
            for s in points {
                let cfg = ScenarioConfig {
                    snr_y_db: s,
                    ..base.clone()
                };
                let report = simulate(&cfg, &out.join(format!("snr_{s}")))?;
                for t in &report.targets {
                    csv.push_str(&format!(
                        "{s},{},{},{},{},{},{}\n",
                        t.target_index, t.mse_d, t.crb_d, t.mse_v, t.crb_v, t.miss_rate
                    ));
                }
                println!("SNR {s} dB: mean MSE_d {} m²", report.mean_mse_d());
            }
            fs::write(out.join("sweep.csv"), csv).map_err(|e| IsacError::Io(e.to_string()))?;
        }
        Command::RdmDump { config, seed, out } => {
            let cfg = ScenarioConfig::load(&config)?;
            cfg.check_feasible()?;
            let alphabet = Arc::new(cfg.build_alphabet()?);
            let s = trial_seed(seed, 0);
            let scene = build_scene(&cfg, s)?;
            let (h_hat, _) = simulate_estimate(&cfg, &alphabet, &scene, s)?;
            let db = compute_rdm(&h_hat).power_db();
            let mut csv = String::from("delay_bin");
            for m in 0..cfg.frame.n_symbols {
                csv.push_str(&format!(",{m}"));
            }
            csv.push('\n');
            for (nu, row) in db.rows().into_iter().enumerate() {
                csv.push_str(&nu.to_string());
                for v in row {
                    csv.push_str(&format!(",{v}"));
                }
                csv.push('\n');
            }
            fs::write(&out, csv).map_err(|e| IsacError::Io(format!("{}: {e}", out.display())))?;
        }
        Command::Crb { config, snr } => {
            let cfg = ScenarioConfig::load(&config)?;
            match snr {
                Some(db) => {
                    let (d, v) = crb(&cfg.frame, 10f64.powf(db / 10.0))?;
                    println!("snr_db,var_d,var_v");
                    println!("{db},{d},{v}");
                }
                None => {
                    cfg.check_feasible()?;
                    let scene = build_scene(&cfg, trial_seed(cfg.seed, 0))?;
                    let mut rows: Vec<_> = scene.targets.iter().zip(&scene.specular).collect();
                    rows.sort_by(|a, b| a.0.distance_m.total_cmp(&b.0.distance_m));
                    println!("target_index,distance_m,snr_db,var_d,var_v");
                    for (i, (t, r)) in rows.into_iter().enumerate() {
                        let snr = r.power() / scene.noise_variance;
                        let (d, v) = crb(&cfg.frame, snr)?;
                        println!("{i},{},{},{d},{v}", t.distance_m, 10.0 * snr.log10());
                    }
                }
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(match e {
                IsacError::Config(_) => 2,
                IsacError::ScenarioInfeasible(_) | IsacError::SceneGeneration(_) => 3,
                _ => 1,
            })
        }
    }
}
