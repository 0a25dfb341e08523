use serde::Serialize;
use std::fs;
use std::path::Path;

use super::{ExperimentConfig, SweepResult};
use crate::error::{Error, Result};

/// Contents of `meta.json`.
#[derive(Debug, Clone, Serialize)]
pub struct MetaRecord<'a> {
    pub version: &'static str,
    pub master_seed: u64,
    pub config: &'a ExperimentConfig,
    pub snr_convention: &'static str,
    pub detector_convention: &'static str,
    /// Matched-filter rate `log2(1 + N / sigma^2)` for each SNR point.
    pub full_csi_reference: Vec<(f64, f64)>,
    pub failed_trials: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub note: Option<String>,
}

pub const SNR_CONVENTION: &str =
    "per-antenna receive SNR: channels are rescaled to |h|^2 = N and sigma^2 = 10^(-snr_db/10)";

fn detector_convention(cfg: &ExperimentConfig) -> &'static str {
    match cfg.detector_signal {
        crate::policies::DetectorSignal::RawBeamGain => {
            "epsilon compares consecutive noiseless beam gains |h^H w| in pre-normalization amplitude units"
        }
        crate::policies::DetectorSignal::ReceivedMagnitude => {
            "epsilon compares consecutive noisy received magnitudes |y| in normalized units"
        }
    }
}

fn io(path: &Path, e: impl std::fmt::Display) -> Error {
    Error::Config(format!("cannot write {}: {e}", path.display()))
}

/// Writes `summary.csv`, `raw.csv` and `meta.json` into `dir`.
pub fn write_outputs(dir: &Path, config: &ExperimentConfig, result: &SweepResult) -> Result<()> {
    write_outputs_with_note(dir, config, result, None)
}

/// Like [`write_outputs`], with a free-form note recorded in `meta.json`.
pub fn write_outputs_with_note(
    dir: &Path,
    config: &ExperimentConfig,
    result: &SweepResult,
    note: Option<&str>,
) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| io(dir, e))?;

    let path = dir.join("summary.csv");
    let mut wtr = csv::Writer::from_path(&path).map_err(|e| io(&path, e))?;
    wtr.write_record([
        "snr_db",
        "scheme",
        "mean_rate_bps_hz",
        "rate_stderr",
        "mean_overhead",
        "overhead_stderr",
        "convergence_fraction",
    ])
    .map_err(|e| io(&path, e))?;
    for r in &result.summary {
        wtr.write_record([
            r.snr_db.to_string(),
            r.method.label().to_string(),
            r.mean_rate.to_string(),
            r.rate_stderr.to_string(),
            r.mean_overhead.to_string(),
            r.overhead_stderr.to_string(),
            r.convergence_fraction.to_string(),
        ])
        .map_err(|e| io(&path, e))?;
    }
    wtr.flush().map_err(|e| io(&path, e))?;

    let path = dir.join("raw.csv");
    let mut wtr = csv::Writer::from_path(&path).map_err(|e| io(&path, e))?;
    wtr.write_record(["snr_db", "scheme", "trial", "rate", "pilots", "converged", "channel_hash"])
        .map_err(|e| io(&path, e))?;
    for r in &result.raw {
        wtr.write_record([
            r.snr_db.to_string(),
            r.method.label().to_string(),
            r.trial.to_string(),
            r.rate.to_string(),
            r.pilots.to_string(),
            r.converged.to_string(),
            r.channel_hash.clone(),
        ])
        .map_err(|e| io(&path, e))?;
    }
    wtr.flush().map_err(|e| io(&path, e))?;

    let meta = MetaRecord {
        version: env!("CARGO_PKG_VERSION"),
        master_seed: config.master_seed,
        config,
        snr_convention: SNR_CONVENTION,
        detector_convention: detector_convention(config),
        full_csi_reference: config
            .snr_grid_db
            .iter()
            .map(|&s| (s, (1.0 + config.n_antennas as f64 / super::noise_var_from_snr(s)).log2()))
            .collect(),
        failed_trials: result.failed_trials(),
        note: note.map(str::to_owned),
    };
    let path = dir.join("meta.json");
    let text = serde_json::to_string_pretty(&meta).map_err(|e| io(&path, e))?;
    fs::write(&path, text + "\n").map_err(|e| io(&path, e))?;
    Ok(())
}
