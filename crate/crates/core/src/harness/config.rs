//! Experiment configuration: defaults, the flat key-value file format, and
//! the list syntaxes accepted on the command line.

use serde::{Deserialize, Serialize};
use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use crate::channel::CosineArgument;
use crate::error::{Error, Result};
use crate::policies::{DetectorSignal, SchemeKind};

/// A training scheme or reference method evaluated by the harness.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    CodebookTs,
    ContinuousTs,
    ContinuousTsUnconstrained,
    HybridTs,
    ExhaustiveNf,
    MultiBeam,
    FullCsi,
}

impl Method {
    pub const ALL: [Method; 7] = [
        Method::CodebookTs,
        Method::ContinuousTs,
        Method::ContinuousTsUnconstrained,
        Method::HybridTs,
        Method::ExhaustiveNf,
        Method::MultiBeam,
        Method::FullCsi,
    ];

    pub fn label(self) -> &'static str {
        match self {
            Method::CodebookTs => "codebook_ts",
            Method::ContinuousTs => "continuous_ts",
            Method::ContinuousTsUnconstrained => "continuous_ts_unconstrained",
            Method::HybridTs => "hybrid_ts",
            Method::ExhaustiveNf => "exhaustive_nf",
            Method::MultiBeam => "multi_beam",
            Method::FullCsi => "full_csi",
        }
    }

    /// Stable id used to derive the method's random substream.
    pub fn stream_id(self) -> u64 {
        match self {
            Method::CodebookTs => 1,
            Method::ContinuousTs => 2,
            Method::ContinuousTsUnconstrained => 3,
            Method::HybridTs => 4,
            Method::ExhaustiveNf => 5,
            Method::MultiBeam => 6,
            Method::FullCsi => 7,
        }
    }

    pub fn scheme(self) -> Option<SchemeKind> {
        match self {
            Method::CodebookTs => Some(SchemeKind::CodebookTs),
            Method::ContinuousTs => Some(SchemeKind::ContinuousTs { unconstrained_budget: false }),
            Method::ContinuousTsUnconstrained => {
                Some(SchemeKind::ContinuousTs { unconstrained_budget: true })
            }
            Method::HybridTs => Some(SchemeKind::HybridTs),
            _ => None,
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let key = s.trim().to_ascii_lowercase().replace('-', "_");
        Method::ALL
            .into_iter()
            .find(|m| m.label() == key)
            .ok_or_else(|| Error::Config(format!("unknown scheme '{}'", s.trim())))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub n_antennas: usize,
    pub carrier_freq: f64,
    pub n_paths: usize,
    pub distance_range: [f64; 2],
    pub angle_range: [f64; 2],
    pub beta: f64,
    pub n_rings: usize,
    pub epsilon: f64,
    pub consecutive: usize,
    pub budget: usize,
    pub length_scale: f64,
    pub prior_scale: f64,
    pub n_trials: usize,
    pub snr_grid_db: Vec<f64>,
    pub schemes: Vec<Method>,
    pub master_seed: u64,
    /// Runs `continuous_ts` without a pilot budget.
    pub unconstrained: bool,
    pub detector_signal: DetectorSignal,
    /// Slot cap for unconstrained runs that never converge.
    pub unconstrained_slot_cap: usize,
    pub cosine_argument: CosineArgument,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            n_antennas: 256,
            carrier_freq: 3e10,
            n_paths: 4,
            distance_range: [7.0, 100.0],
            angle_range: [-PI / 3.0, PI / 3.0],
            beta: 1.1,
            n_rings: 5,
            epsilon: 1e-7,
            consecutive: 10,
            budget: 1280,
            length_scale: 1.0 / 128.0,
            prior_scale: 1.0,
            n_trials: 500,
            snr_grid_db: vec![5.0, 10.0, 15.0, 20.0],
            schemes: vec![
                Method::CodebookTs,
                Method::ContinuousTs,
                Method::HybridTs,
                Method::ExhaustiveNf,
                Method::MultiBeam,
                Method::FullCsi,
            ],
            master_seed: 0,
            unconstrained: false,
            detector_signal: DetectorSignal::RawBeamGain,
            unconstrained_slot_cap: 20_000,
            cosine_argument: CosineArgument::SineValues,
        }
    }
}

impl ExperimentConfig {
    /// Parses a flat `key = value` document; missing keys keep their defaults.
    pub fn from_kv_str(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_kv_string(&self) -> String {
        toml::to_string(self).expect("config is always representable")
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::Config(msg));
        if self.n_antennas == 0 {
            return bad("n_antennas must be at least 1".into());
        }
        if !(self.carrier_freq.is_finite() && self.carrier_freq > 0.0) {
            return bad(format!("carrier_freq must be positive, got {}", self.carrier_freq));
        }
        if self.n_paths == 0 {
            return bad("n_paths must be at least 1".into());
        }
        let [r_min, r_max] = self.distance_range;
        if !(r_min > 0.0 && r_min < r_max && r_max.is_finite()) {
            return bad(format!("distance_range must satisfy 0 < min < max, got [{r_min}, {r_max}]"));
        }
        let [a_min, a_max] = self.angle_range;
        if !(a_min >= -PI / 2.0 && a_max <= PI / 2.0 && a_min < a_max) {
            return bad(format!("angle_range must be an increasing sub-range of [-pi/2, pi/2], got [{a_min}, {a_max}]"));
        }
        if !(self.beta.is_finite() && self.beta > 0.0) {
            return bad(format!("beta must be positive, got {}", self.beta));
        }
        if self.n_rings == 0 {
            return bad("n_rings must be at least 1".into());
        }
        if !(self.epsilon >= 0.0) {
            return bad(format!("epsilon must be non-negative, got {}", self.epsilon));
        }
        if self.consecutive == 0 {
            return bad("consecutive must be at least 1".into());
        }
        if !(self.length_scale.is_finite() && self.length_scale > 0.0) {
            return bad(format!("length_scale must be positive, got {}", self.length_scale));
        }
        if !(self.prior_scale.is_finite() && self.prior_scale > 0.0) {
            return bad(format!("prior_scale must be positive, got {}", self.prior_scale));
        }
        if self.snr_grid_db.is_empty() {
            return bad("snr_grid_db must not be empty".into());
        }
        if let Some(s) = self.snr_grid_db.iter().find(|s| !s.is_finite()) {
            return bad(format!("snr values must be finite, got {s}"));
        }
        if self.schemes.is_empty() {
            return bad("schemes must not be empty".into());
        }
        Ok(())
    }

    /// Schemes after applying the `unconstrained` switch, deduplicated in order.
    pub fn resolved_methods(&self) -> Vec<Method> {
        let mut out: Vec<Method> = Vec::with_capacity(self.schemes.len());
        for &m in &self.schemes {
            let m = if self.unconstrained && m == Method::ContinuousTs {
                Method::ContinuousTsUnconstrained
            } else {
                m
            };
            if !out.contains(&m) {
                out.push(m);
            }
        }
        out
    }
}

/// Parses a comma-separated SNR list such as `5,10,15` or a range `5:20:5`.
pub fn parse_snr_list(text: &str) -> Result<Vec<f64>> {
    let text = text.trim();
    if text.is_empty() {
        return Err(Error::Config("empty SNR list".into()));
    }
    if text.contains(':') {
        let parts: Vec<&str> = text.split(':').collect();
        if parts.len() != 3 {
            return Err(Error::Config(format!("SNR range must be start:stop:step, got '{text}'")));
        }
        let nums: Vec<f64> = parts.iter().map(|p| parse_finite(p)).collect::<Result<_>>()?;
        let (start, stop, step) = (nums[0], nums[1], nums[2]);
        if !(step > 0.0) || stop < start {
            return Err(Error::Config(format!("SNR range '{text}' is empty or has a non-positive step")));
        }
        let count = ((stop - start) / step + 1e-9).floor();
        if !(count < 10_000.0) {
            return Err(Error::Config(format!("SNR range '{text}' has too many points")));
        }
        return Ok((0..=count as usize).map(|i| start + i as f64 * step).collect());
    }
    text.split(',').map(parse_finite).collect()
}

fn parse_finite(s: &str) -> Result<f64> {
    let v: f64 = s
        .trim()
        .parse()
        .map_err(|_| Error::Config(format!("not a number: '{}'", s.trim())))?;
    if !v.is_finite() {
        return Err(Error::Config(format!("value must be finite, got '{}'", s.trim())));
    }
    Ok(v)
}

/// Parses a comma-separated list of scheme labels.
pub fn parse_method_list(text: &str) -> Result<Vec<Method>> {
    let methods: Vec<Method> = text
        .split(',')
        .filter(|s| !s.trim().is_empty())
        .map(str::parse)
        .collect::<Result<_>>()?;
    if methods.is_empty() {
        return Err(Error::Config("empty scheme list".into()));
    }
    Ok(methods)
}
