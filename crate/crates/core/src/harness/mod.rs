//! Monte-Carlo experiment engine.
//!
//! Every trial owns independent random streams derived from
//! `(master_seed, snr_index, trial_index, substream)`. Substream 0 draws the
//! channel, which is therefore shared by all methods of the trial; each method
//! gets its own substream for posterior sampling and measurement noise.

mod config;
mod output;

pub use config::{parse_method_list, parse_snr_list, ExperimentConfig, Method};
pub use output::{write_outputs, write_outputs_with_note, MetaRecord};

use nalgebra::DVector;
use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::baselines::{achievable_rate, exhaustive_nf_search, full_csi_bound, multi_beam_combination};
use crate::channel::{sample_scenario, ArrayGeometry, ChannelRealization, ScenarioConfig};
use crate::error::{Error, Result};
use crate::policies::{run_training, TrainingConfig, TrainingOutcome};
use crate::posterior::{rbf_prior, GaussianBelief, PriorConfig};
use crate::transform::{dft_matrix, polar_codebook, DftMatrix, PolarCodebook};

/// `sigma^2 = 10^(-snr_db / 10)`: per-antenna receive SNR for channels with `|h|^2 = N`.
pub fn noise_var_from_snr(snr_db: f64) -> f64 {
    10f64.powf(-snr_db / 10.0)
}

/// Random stream for one `(snr, trial, substream)` cell.
pub fn trial_rng(master_seed: u64, snr_index: usize, trial_index: usize, substream: u64) -> ChaCha8Rng {
    let mut seed = [0u8; 32];
    seed[0..8].copy_from_slice(&master_seed.to_le_bytes());
    seed[8..16].copy_from_slice(&(snr_index as u64).to_le_bytes());
    seed[16..24].copy_from_slice(&(trial_index as u64).to_le_bytes());
    seed[24..32].copy_from_slice(&substream.to_le_bytes());
    ChaCha8Rng::from_seed(seed)
}

/// Short digest of the channel vector, used to check pairing across methods.
pub fn channel_hash(h: &DVector<Complex64>) -> String {
    let mut hasher = Sha256::new();
    for z in h.iter() {
        hasher.update(z.re.to_le_bytes());
        hasher.update(z.im.to_le_bytes());
    }
    let digest = hasher.finalize();
    digest[..8].iter().map(|b| format!("{b:02x}")).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TrialRecord {
    pub snr_db: f64,
    pub method: Method,
    pub trial: usize,
    pub rate: f64,
    pub pilots: usize,
    pub converged: bool,
    pub channel_hash: String,
    /// Set when the trial aborted; the rate is then NaN.
    pub error: Option<String>,
}

impl TrialRecord {
    pub fn failed(&self) -> bool {
        self.error.is_some()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SummaryRow {
    pub snr_db: f64,
    pub method: Method,
    pub mean_rate: f64,
    pub rate_stderr: f64,
    pub mean_overhead: f64,
    pub overhead_stderr: f64,
    pub convergence_fraction: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepResult {
    pub summary: Vec<SummaryRow>,
    pub raw: Vec<TrialRecord>,
}

impl SweepResult {
    pub fn failed_trials(&self) -> usize {
        self.raw.iter().filter(|r| r.failed()).count()
    }

    pub fn row(&self, snr_db: f64, method: Method) -> Option<&SummaryRow> {
        self.summary.iter().find(|r| r.snr_db == snr_db && r.method == method)
    }
}

/// Prebuilt pieces shared by every trial of an experiment.
#[derive(Debug, Clone)]
pub struct Experiment {
    pub config: ExperimentConfig,
    pub scenario: ScenarioConfig,
    pub dft: DftMatrix,
    pub codebook: PolarCodebook,
    pub prior: GaussianBelief,
}

/// Per-trial detail, including the training trace when a TS scheme ran.
#[derive(Debug, Clone)]
pub struct TrialDetail {
    pub record: TrialRecord,
    pub channel: ChannelRealization,
    pub training: Option<TrainingOutcome>,
}

impl Experiment {
    pub fn new(config: ExperimentConfig) -> Result<Self> {
        config.validate()?;
        let geometry = ArrayGeometry::from_carrier(config.n_antennas, config.carrier_freq)?;
        let scenario = ScenarioConfig {
            n_paths: config.n_paths,
            distance_range: (config.distance_range[0], config.distance_range[1]),
            angle_range: (config.angle_range[0], config.angle_range[1]),
            geometry: geometry.clone(),
            cosine_argument: config.cosine_argument,
        };
        scenario.validate()?;
        let dft = dft_matrix(config.n_antennas)?;
        let codebook = polar_codebook(&geometry, config.beta, config.n_rings)?;
        let prior_cfg = PriorConfig {
            length_scale: config.length_scale,
            prior_mean: None,
            prior_scale: config.prior_scale,
        };
        let prior = rbf_prior(config.n_antennas, &prior_cfg)?;
        Ok(Self { config, scenario, dft, codebook, prior })
    }

    pub fn draw_channel(&self, snr_index: usize, trial: usize) -> Result<ChannelRealization> {
        let mut rng = trial_rng(self.config.master_seed, snr_index, trial, 0);
        sample_scenario(&self.scenario, &mut rng)
    }

    fn training_config(&self, noise_var: f64) -> TrainingConfig {
        TrainingConfig {
            noise_var,
            budget: self.config.budget,
            epsilon: self.config.epsilon,
            consecutive: self.config.consecutive,
            detector_signal: self.config.detector_signal,
            unconstrained_slot_cap: self.config.unconstrained_slot_cap,
        }
    }

    /// Runs one method on a given channel.
    pub fn run_method(
        &self,
        method: Method,
        channel: &ChannelRealization,
        snr_index: usize,
        trial: usize,
    ) -> Result<TrialDetail> {
        let snr_db = *self
            .config
            .snr_grid_db
            .get(snr_index)
            .ok_or_else(|| Error::InvalidArgument(format!("snr index {snr_index} out of range")))?;
        let noise_var = noise_var_from_snr(snr_db);
        let mut rng = trial_rng(self.config.master_seed, snr_index, trial, method.stream_id());

        let (w_data, pilots, converged, training) = match method.scheme() {
            Some(scheme) => {
                let out = run_training(
                    scheme,
                    channel,
                    &self.dft,
                    Some(&self.codebook),
                    &self.prior,
                    &self.training_config(noise_var),
                    &mut rng,
                )?;
                (out.w_data.clone(), out.pilots_used, out.converged, Some(out))
            }
            None => {
                let out = match method {
                    Method::ExhaustiveNf => exhaustive_nf_search(channel, &self.codebook, noise_var, &mut rng)?,
                    Method::MultiBeam => multi_beam_combination(channel, &self.dft, noise_var, &mut rng)?,
                    Method::FullCsi => full_csi_bound(channel, noise_var)?.0,
                    _ => unreachable!("training schemes handled above"),
                };
                (out.w_data, out.pilots_used, true, None)
            }
        };
        let record = TrialRecord {
            snr_db,
            method,
            trial,
            rate: achievable_rate(&channel.h, &w_data, noise_var),
            pilots,
            converged,
            channel_hash: channel_hash(&channel.h),
            error: None,
        };
        Ok(TrialDetail { record, channel: channel.clone(), training })
    }

    /// One trial of one method, drawing the trial's shared channel first.
    pub fn run_trial(&self, method: Method, snr_index: usize, trial: usize) -> Result<TrialDetail> {
        let channel = self.draw_channel(snr_index, trial)?;
        self.run_method(method, &channel, snr_index, trial)
    }

    /// All methods for one `(snr, trial)` cell on the same channel. Errors are
    /// recorded in the returned records, never dropped.
    fn run_cell(&self, methods: &[Method], snr_index: usize, trial: usize) -> Vec<TrialRecord> {
        let snr_db = self.config.snr_grid_db[snr_index];
        let channel = self.draw_channel(snr_index, trial);
        methods
            .iter()
            .map(|&method| {
                let outcome = channel
                    .as_ref()
                    .map_err(Clone::clone)
                    .and_then(|ch| self.run_method(method, ch, snr_index, trial));
                match outcome {
                    Ok(detail) => detail.record,
                    Err(e) => TrialRecord {
                        snr_db,
                        method,
                        trial,
                        rate: f64::NAN,
                        pilots: 0,
                        converged: false,
                        channel_hash: channel.as_ref().map(|c| channel_hash(&c.h)).unwrap_or_default(),
                        error: Some(e.to_string()),
                    },
                }
            })
            .collect()
    }

    /// Runs the full `snr x scheme x trial` grid. Output order is
    /// `(snr, scheme, trial)` regardless of `workers`.
    pub fn run_sweep(&self, workers: usize) -> Result<SweepResult> {
        let methods = self.config.resolved_methods();
        let n_snr = self.config.snr_grid_db.len();
        let n_trials = self.config.n_trials;
        let cells: Vec<(usize, usize)> =
            (0..n_snr).flat_map(|s| (0..n_trials).map(move |t| (s, t))).collect();

        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(workers.max(1))
            .build()
            .map_err(|e| Error::Config(format!("cannot start worker pool: {e}")))?;
        let per_cell: Vec<Vec<TrialRecord>> =
            pool.install(|| cells.par_iter().map(|&(s, t)| self.run_cell(&methods, s, t)).collect());

        let mut raw = Vec::with_capacity(cells.len() * methods.len());
        for s in 0..n_snr {
            for m in 0..methods.len() {
                for t in 0..n_trials {
                    raw.push(per_cell[s * n_trials + t][m].clone());
                }
            }
        }
        let summary = summarize(&raw);
        Ok(SweepResult { summary, raw })
    }
}

/// Convenience wrapper: build the experiment and run the sweep.
pub fn run_sweep(config: &ExperimentConfig, workers: usize) -> Result<SweepResult> {
    Experiment::new(config.clone())?.run_sweep(workers)
}

fn mean_stderr(values: &[f64]) -> (f64, f64) {
    let n = values.len();
    if n == 0 {
        return (f64::NAN, f64::NAN);
    }
    let mean = values.iter().sum::<f64>() / n as f64;
    if n < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
    (mean, (var / n as f64).sqrt())
}

/// Aggregates raw records into one row per `(snr, method)`, in first-seen order.
/// Failed trials are excluded from the means but count as not converged.
pub fn summarize(raw: &[TrialRecord]) -> Vec<SummaryRow> {
    let mut keys: Vec<(f64, Method)> = Vec::new();
    for r in raw {
        if !keys.iter().any(|&(s, m)| s == r.snr_db && m == r.method) {
            keys.push((r.snr_db, r.method));
        }
    }
    keys.into_iter()
        .map(|(snr_db, method)| {
            let group: Vec<&TrialRecord> =
                raw.iter().filter(|r| r.snr_db == snr_db && r.method == method).collect();
            let ok: Vec<&&TrialRecord> = group.iter().filter(|r| !r.failed()).collect();
            let rates: Vec<f64> = ok.iter().map(|r| r.rate).collect();
            let pilots: Vec<f64> = ok.iter().map(|r| r.pilots as f64).collect();
            let (mean_rate, rate_stderr) = mean_stderr(&rates);
            let (mean_overhead, overhead_stderr) = mean_stderr(&pilots);
            let converged = group.iter().filter(|r| r.converged).count();
            SummaryRow {
                snr_db,
                method,
                mean_rate,
                rate_stderr,
                mean_overhead,
                overhead_stderr,
                convergence_fraction: converged as f64 / group.len() as f64,
            }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small_config() -> ExperimentConfig {
        ExperimentConfig {
            n_antennas: 16,
            n_rings: 3,
            budget: 48,
            n_trials: 3,
            snr_grid_db: vec![10.0, 20.0],
            master_seed: 5,
            ..Default::default()
        }
    }

    #[test]
    fn noise_variance_examples() {
        assert_eq!(noise_var_from_snr(0.0), 1.0);
        assert!((noise_var_from_snr(15.0) - 0.031623).abs() < 1e-6);
        assert!((noise_var_from_snr(20.0) - 0.01).abs() < 1e-15);
        let full = (1.0 + 256.0 / noise_var_from_snr(15.0)).log2();
        assert!((full - 12.98).abs() < 0.01);
    }

    #[test]
    fn trial_is_reproducible() {
        let exp = Experiment::new(small_config()).unwrap();
        let a = exp.run_trial(Method::HybridTs, 1, 2).unwrap();
        let b = exp.run_trial(Method::HybridTs, 1, 2).unwrap();
        assert_eq!(a.record, b.record);
        assert_eq!(a.training, b.training);
    }

    #[test]
    fn full_csi_and_exhaustive_records() {
        let exp = Experiment::new(small_config()).unwrap();
        let full = exp.run_trial(Method::FullCsi, 0, 0).unwrap().record;
        assert_eq!(full.pilots, 0);
        assert!((full.rate - (1.0 + 16.0 / 0.1f64).log2()).abs() < 1e-9);
        let ex = exp.run_trial(Method::ExhaustiveNf, 0, 0).unwrap().record;
        assert_eq!(ex.pilots, 48);
        assert_eq!(ex.channel_hash, full.channel_hash);
    }

    #[test]
    fn sweep_order_and_pairing() {
        let cfg = small_config();
        let result = run_sweep(&cfg, 2).unwrap();
        let methods = cfg.resolved_methods();
        assert_eq!(result.raw.len(), 2 * methods.len() * 3);
        assert_eq!(result.summary.len(), 2 * methods.len());
        let mut idx = 0;
        for &snr in &cfg.snr_grid_db {
            for &m in &methods {
                for t in 0..3 {
                    let r = &result.raw[idx];
                    assert_eq!((r.snr_db, r.method, r.trial), (snr, m, t));
                    idx += 1;
                }
            }
        }
        for r in &result.raw {
            let same_cell = result
                .raw
                .iter()
                .filter(|o| o.snr_db == r.snr_db && o.trial == r.trial)
                .all(|o| o.channel_hash == r.channel_hash);
            assert!(same_cell);
        }
        assert_eq!(result.failed_trials(), 0);
    }

    #[test]
    fn single_trial_summary_equals_trial() {
        let cfg = ExperimentConfig {
            n_trials: 1,
            snr_grid_db: vec![15.0],
            schemes: vec![Method::CodebookTs],
            ..small_config()
        };
        let result = run_sweep(&cfg, 1).unwrap();
        let row = &result.summary[0];
        let rec = &result.raw[0];
        assert_eq!(row.mean_rate, rec.rate);
        assert_eq!(row.rate_stderr, 0.0);
        assert_eq!(row.mean_overhead, rec.pilots as f64);
        assert_eq!(row.convergence_fraction, if rec.converged { 1.0 } else { 0.0 });
    }

    #[test]
    fn failed_records_are_kept_but_excluded_from_means() {
        let ok = |rate: f64, t| TrialRecord {
            snr_db: 5.0,
            method: Method::HybridTs,
            trial: t,
            rate,
            pilots: 10,
            converged: true,
            channel_hash: String::new(),
            error: None,
        };
        let mut bad = ok(f64::NAN, 2);
        bad.error = Some("boom".into());
        bad.converged = false;
        let rows = summarize(&[ok(1.0, 0), ok(3.0, 1), bad]);
        assert_eq!(rows.len(), 1);
        assert_eq!(rows[0].mean_rate, 2.0);
        assert!((rows[0].convergence_fraction - 2.0 / 3.0).abs() < 1e-15);
    }
}
