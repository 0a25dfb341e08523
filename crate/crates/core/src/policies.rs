//! Thompson-sampling beam selection and the training loop.

use nalgebra::DVector;
use num_complex::Complex64;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::channel::{complex_normal, ChannelRealization};
use crate::error::{check_dim, Error, Result};
use crate::posterior::{GaussianBelief, Observation};
use crate::transform::{DftMatrix, PolarCodebook};

/// Attempts at redrawing a zero-norm posterior sample before giving up.
const MAX_RESAMPLES: usize = 8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SchemeKind {
    /// Probe the polar codebook.
    CodebookTs,
    /// Probe the normalized sample directly.
    ContinuousTs { unconstrained_budget: bool },
    /// Codebook stage, then continuous refinement.
    HybridTs,
}

impl SchemeKind {
    pub fn uses_codebook(self) -> bool {
        matches!(self, SchemeKind::CodebookTs | SchemeKind::HybridTs)
    }

    pub fn is_unconstrained(self) -> bool {
        matches!(self, SchemeKind::ContinuousTs { unconstrained_budget: true })
    }
}

/// Stops training once consecutive magnitudes stay within `epsilon` of each
/// other for `required_consecutive` comparisons. The first magnitude has no
/// predecessor, so the earliest possible firing is on call `t' + 1`.
#[derive(Debug, Clone, PartialEq)]
pub struct ConvergenceDetector {
    pub epsilon: f64,
    pub required_consecutive: usize,
    counter: usize,
    last_magnitude: Option<f64>,
}

impl ConvergenceDetector {
    pub fn new(epsilon: f64, required_consecutive: usize) -> Result<Self> {
        if !(epsilon >= 0.0) {
            return Err(Error::InvalidArgument(format!("epsilon must be >= 0, got {epsilon}")));
        }
        if required_consecutive == 0 {
            return Err(Error::InvalidArgument("consecutive count must be at least 1".into()));
        }
        Ok(Self { epsilon, required_consecutive, counter: 0, last_magnitude: None })
    }

    pub fn counter(&self) -> usize {
        self.counter
    }

    pub fn reset(&mut self) {
        self.counter = 0;
        self.last_magnitude = None;
    }

    /// Feeds one magnitude; returns true once the run of small changes is long enough.
    pub fn observe(&mut self, magnitude: f64) -> bool {
        if let Some(last) = self.last_magnitude {
            if (magnitude - last).abs() <= self.epsilon {
                self.counter = (self.counter + 1).min(self.required_consecutive);
            } else {
                self.counter = 0;
            }
        }
        self.last_magnitude = Some(magnitude);
        self.counter >= self.required_consecutive
    }
}

pub fn check_convergence(detector: &mut ConvergenceDetector, y_magnitude: f64) -> bool {
    detector.observe(y_magnitude)
}

/// Quantity the convergence detector watches each slot.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DetectorSignal {
    /// Noiseless beam gain `|h^H w|` in physical (pre-normalization) amplitude units.
    #[default]
    RawBeamGain,
    /// Noisy received magnitude `|y|` in normalized units.
    ReceivedMagnitude,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Stage {
    Codebook,
    Continuous,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SlotRecord {
    pub slot: usize,
    /// `|y|` of the received pilot.
    pub received_magnitude: f64,
    /// Value fed to the convergence detector.
    pub detector_value: f64,
    pub stage: Stage,
    /// Codeword index, or `None` for a continuous beam.
    pub codeword: Option<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainingOutcome {
    pub w_data: DVector<Complex64>,
    pub pilots_used: usize,
    pub converged: bool,
    /// Pilots spent in the codebook stage of the hybrid scheme, else 0.
    pub stage1_pilots: usize,
    /// The posterior mean was zero and the boresight far-field beam was returned instead.
    pub used_fallback_beam: bool,
    pub trace: Vec<SlotRecord>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainingConfig {
    pub noise_var: f64,
    pub budget: usize,
    pub epsilon: f64,
    pub consecutive: usize,
    pub detector_signal: DetectorSignal,
    /// Hard stop for unconstrained runs that never converge.
    pub unconstrained_slot_cap: usize,
}

/// Codeword maximizing `|h~^H w|` for `h~ = F^H g`.
pub fn select_codebook_beam(
    g_sample: &DVector<Complex64>,
    f: &DftMatrix,
    codebook: &PolarCodebook,
) -> Result<(DVector<Complex64>, usize)> {
    if codebook.is_empty() {
        return Err(Error::EmptyCodebook);
    }
    let h = f.to_spatial(g_sample)?;
    let (index, _) = codebook.best_match(&h)?;
    Ok((codebook.codeword(index).into_owned(), index))
}

/// `F^H g / |g|`.
pub fn select_continuous_beam(g_sample: &DVector<Complex64>, f: &DftMatrix) -> Result<DVector<Complex64>> {
    let h = f.to_spatial(g_sample)?;
    normalized(h, "posterior sample")
}

/// `F^H m / |F^H m|` from the posterior mean.
pub fn data_beam(belief: &GaussianBelief, f: &DftMatrix) -> Result<DVector<Complex64>> {
    let h = f.to_spatial(&belief.mean)?;
    normalized(h, "posterior mean")
}

fn normalized(h: DVector<Complex64>, what: &str) -> Result<DVector<Complex64>> {
    let norm = h.norm();
    if !(norm.is_finite() && norm > 0.0) {
        return Err(Error::DegenerateSample(format!("{what} has norm {norm}")));
    }
    Ok(h / Complex64::from(norm))
}

/// Boresight far-field beam, used when the posterior mean carries no direction.
fn boresight_beam(f: &DftMatrix) -> DVector<Complex64> {
    f.bin_beam(f.n() / 2)
}

/// Runs one beam-training episode on a fixed channel.
pub fn run_training<R: Rng + ?Sized>(
    scheme: SchemeKind,
    channel: &ChannelRealization,
    f: &DftMatrix,
    codebook: Option<&PolarCodebook>,
    prior: &GaussianBelief,
    config: &TrainingConfig,
    rng: &mut R,
) -> Result<TrainingOutcome> {
    let n = f.n();
    check_dim(n, channel.n_antennas())?;
    check_dim(n, prior.dim())?;
    let codebook = match (scheme.uses_codebook(), codebook) {
        (true, Some(cb)) if cb.is_empty() => return Err(Error::EmptyCodebook),
        (true, Some(cb)) => {
            check_dim(n, cb.n_antennas())?;
            Some(cb)
        }
        (true, None) => return Err(Error::EmptyCodebook),
        (false, _) => None,
    };
    if !(config.noise_var.is_finite() && config.noise_var > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "noise variance must be positive, got {}",
            config.noise_var
        )));
    }

    let slot_limit = if scheme.is_unconstrained() { config.unconstrained_slot_cap } else { config.budget };
    let noise_std = config.noise_var.sqrt();
    let h = &channel.h;

    let mut belief = prior.clone();
    let mut detector = ConvergenceDetector::new(config.epsilon, config.consecutive)?;
    let mut stage = if scheme.uses_codebook() { Stage::Codebook } else { Stage::Continuous };
    let mut trace = Vec::new();
    let mut converged = false;
    let mut stage1_pilots = 0;

    for slot in 1..=slot_limit {
        let (w, codeword) = match stage {
            Stage::Codebook => {
                let g = belief.sample(rng)?;
                let (w, idx) = select_codebook_beam(&g, f, codebook.expect("checked above"))?;
                (w, Some(idx))
            }
            Stage::Continuous => (continuous_draw(&belief, f, rng)?, None),
        };
        debug_assert!((w.norm() - 1.0).abs() < 1e-10);

        let clean = h.dotc(&w);
        let y_phys = clean + complex_normal(rng) * noise_std;
        belief.update(&Observation::from_measurement(f, &w, y_phys, config.noise_var)?)?;

        let detector_value = match config.detector_signal {
            DetectorSignal::RawBeamGain => clean.norm() / channel.norm_scale,
            DetectorSignal::ReceivedMagnitude => y_phys.norm(),
        };
        trace.push(SlotRecord {
            slot,
            received_magnitude: y_phys.norm(),
            detector_value,
            stage,
            codeword,
        });

        if detector.observe(detector_value) {
            if scheme == SchemeKind::HybridTs && stage == Stage::Codebook {
                stage = Stage::Continuous;
                stage1_pilots = slot;
                detector.reset();
            } else {
                converged = true;
                break;
            }
        }
    }

    let pilots_used = trace.len();
    if scheme == SchemeKind::HybridTs && stage == Stage::Codebook {
        stage1_pilots = pilots_used;
    }
    let (w_data, used_fallback_beam) = if belief.mean.iter().all(|z| *z == Complex64::from(0.0)) {
        (boresight_beam(f), true)
    } else {
        (data_beam(&belief, f)?, false)
    };
    Ok(TrainingOutcome { w_data, pilots_used, converged, stage1_pilots, used_fallback_beam, trace })
}

fn continuous_draw<R: Rng + ?Sized>(
    belief: &GaussianBelief,
    f: &DftMatrix,
    rng: &mut R,
) -> Result<DVector<Complex64>> {
    let mut last_err = None;
    for _ in 0..MAX_RESAMPLES {
        let g = belief.sample(rng)?;
        match select_continuous_beam(&g, f) {
            Ok(w) => return Ok(w),
            Err(e) => last_err = Some(e),
        }
    }
    Err(last_err.expect("at least one attempt"))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::{steering_vector, ArrayGeometry};
    use crate::posterior::{rbf_prior, PriorConfig};
    use crate::transform::{dft_matrix, polar_codebook};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn random_vec(n: usize, rng: &mut ChaCha8Rng) -> DVector<Complex64> {
        DVector::from_fn(n, |_, _| complex_normal(rng))
    }

    #[test]
    fn detector_constant_sequence_fires_on_eleventh_call() {
        let mut d = ConvergenceDetector::new(1e-7, 10).unwrap();
        for call in 1..=10 {
            assert!(!d.observe(0.42), "call {call}");
        }
        assert!(d.observe(0.42));
        assert_eq!(d.counter(), 10);
    }

    #[test]
    fn detector_alternating_never_fires() {
        let mut d = ConvergenceDetector::new(0.5, 2).unwrap();
        for i in 0..100 {
            assert!(!d.observe((i % 2) as f64));
        }
    }

    #[test]
    fn detector_infinite_tolerance() {
        let mut d = ConvergenceDetector::new(f64::INFINITY, 1).unwrap();
        assert!(!d.observe(3.0));
        assert!(d.observe(1e9));
    }

    #[test]
    fn detector_resets_on_jump() {
        let mut d = ConvergenceDetector::new(0.1, 3).unwrap();
        for m in [1.0, 1.0, 1.0] {
            d.observe(m);
        }
        assert_eq!(d.counter(), 2);
        d.observe(5.0);
        assert_eq!(d.counter(), 0);
        assert!(ConvergenceDetector::new(-1.0, 3).is_err());
        assert!(ConvergenceDetector::new(0.1, 0).is_err());
    }

    #[test]
    fn basis_sample_selects_far_field_codeword() {
        let geom = ArrayGeometry::new(16, 0.01).unwrap();
        let f = dft_matrix(16).unwrap();
        let cb = polar_codebook(&geom, 1.1, 3).unwrap();
        for k in 0..16 {
            let mut g = DVector::zeros(16);
            g[k] = Complex64::from(1.0);
            let (_, idx) = select_codebook_beam(&g, &f, &cb).unwrap();
            assert_eq!(cb.meta()[idx].angle_index, k);
            assert_eq!(cb.meta()[idx].ring_index, 0);
        }
    }

    #[test]
    fn codeword_sample_selects_itself() {
        let geom = ArrayGeometry::new(16, 0.01).unwrap();
        let f = dft_matrix(16).unwrap();
        let cb = polar_codebook(&geom, 1.1, 3).unwrap();
        for idx in [1, 2, 17, 40, 47] {
            let g = f.to_dft(&cb.codeword(idx).into_owned()).unwrap();
            let (_, got) = select_codebook_beam(&g, &f, &cb).unwrap();
            assert_eq!(got, idx);
        }
    }

    #[test]
    fn codebook_selection_matches_brute_force() {
        let geom = ArrayGeometry::new(16, 0.01).unwrap();
        let f = dft_matrix(16).unwrap();
        let cb = polar_codebook(&geom, 1.1, 3).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for _ in 0..50 {
            let g = random_vec(16, &mut rng);
            // Independent oracle: rebuild h~ entry by entry and scan all 48 words.
            let mut h = DVector::<Complex64>::zeros(16);
            for m in 0..16 {
                for k in 0..16 {
                    h[m] += f.matrix()[(k, m)].conj() * g[k];
                }
            }
            let mut best = (0, -1.0);
            for i in 0..cb.len() {
                let w = cb.codeword(i);
                let mut acc = Complex64::from(0.0);
                for m in 0..16 {
                    acc += h[m].conj() * w[m];
                }
                if acc.norm() > best.1 {
                    best = (i, acc.norm());
                }
            }
            let (_, got) = select_codebook_beam(&g, &f, &cb).unwrap();
            assert_eq!(got, best.0);
        }
    }

    #[test]
    fn codebook_selection_is_scale_invariant() {
        let geom = ArrayGeometry::new(16, 0.01).unwrap();
        let f = dft_matrix(16).unwrap();
        let cb = polar_codebook(&geom, 1.1, 3).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        for _ in 0..20 {
            let g = random_vec(16, &mut rng);
            let c = complex_normal(&mut rng) * 7.0;
            let a = select_codebook_beam(&g, &f, &cb).unwrap().1;
            let b = select_codebook_beam(&(&g * c), &f, &cb).unwrap().1;
            assert_eq!(a, b);
        }
    }

    #[test]
    fn continuous_beam_properties() {
        let f = dft_matrix(8).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let h = random_vec(8, &mut rng);
        let w = select_continuous_beam(&f.to_dft(&h).unwrap(), &f).unwrap();
        assert!((w.norm() - 1.0).abs() < 1e-12);
        assert!((&w - &h / Complex64::from(h.norm())).norm() < 1e-12);
        let c = Complex64::new(0.0, -3.0);
        let w2 = select_continuous_beam(&(f.to_dft(&h).unwrap() * c), &f).unwrap();
        let phase = c / c.norm();
        assert!((&w2 - &w * phase).norm() < 1e-12);
        let zero = DVector::zeros(8);
        assert!(matches!(select_continuous_beam(&zero, &f), Err(Error::DegenerateSample(_))));
    }

    #[test]
    fn data_beam_from_mean() {
        let f = dft_matrix(8).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let h = random_vec(8, &mut rng);
        let belief = GaussianBelief {
            mean: f.to_dft(&h).unwrap(),
            cov: nalgebra::DMatrix::zeros(8, 8),
            t: 0,
        };
        let w = data_beam(&belief, &f).unwrap();
        assert!((&w - &h / Complex64::from(h.norm())).norm() < 1e-12);
        let empty = GaussianBelief { mean: DVector::zeros(8), ..belief };
        assert!(matches!(data_beam(&empty, &f), Err(Error::DegenerateSample(_))));
    }

    fn single_path_channel(n: usize) -> ChannelRealization {
        let geom = ArrayGeometry::new(n, 0.01).unwrap();
        let h = steering_vector(&geom, 0.23, 3.0).unwrap() * Complex64::new(1e-4, 2e-4);
        ChannelRealization::from_raw(h, vec![]).unwrap()
    }

    fn config(noise_var: f64, budget: usize) -> TrainingConfig {
        TrainingConfig {
            noise_var,
            budget,
            epsilon: 1e-7,
            consecutive: 10,
            detector_signal: DetectorSignal::RawBeamGain,
            unconstrained_slot_cap: 5000,
        }
    }

    #[test]
    fn zero_budget_returns_boresight_fallback() {
        let n = 8;
        let f = dft_matrix(n).unwrap();
        let prior = rbf_prior(n, &PriorConfig::new(1.0 / 128.0)).unwrap();
        let ch = single_path_channel(n);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let scheme = SchemeKind::ContinuousTs { unconstrained_budget: false };
        let out = run_training(scheme, &ch, &f, None, &prior, &config(0.1, 0), &mut rng).unwrap();
        assert_eq!(out.pilots_used, 0);
        assert!(!out.converged);
        assert!(out.used_fallback_beam);
        assert_eq!(out.w_data, f.bin_beam(n / 2));
    }

    #[test]
    fn codebook_scheme_requires_codebook() {
        let f = dft_matrix(8).unwrap();
        let prior = rbf_prior(8, &PriorConfig::new(0.1)).unwrap();
        let ch = single_path_channel(8);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let err = run_training(SchemeKind::HybridTs, &ch, &f, None, &prior, &config(0.1, 5), &mut rng);
        assert_eq!(err.unwrap_err(), Error::EmptyCodebook);
    }

    #[test]
    fn noiseless_continuous_identifies_channel() {
        let n = 8;
        let f = dft_matrix(n).unwrap();
        let prior = rbf_prior(n, &PriorConfig::new(1.0 / 128.0)).unwrap();
        let ch = single_path_channel(n);
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let scheme = SchemeKind::ContinuousTs { unconstrained_budget: true };
        let out = run_training(scheme, &ch, &f, None, &prior, &config(1e-12, 0), &mut rng).unwrap();
        let align = out.w_data.dotc(&ch.h).norm() / ch.h.norm();
        assert!(align >= 0.999, "alignment {align}");
        assert!(out.converged);
    }

    #[test]
    fn training_is_deterministic_and_bounded() {
        let n = 16;
        let geom = ArrayGeometry::new(n, 0.01).unwrap();
        let f = dft_matrix(n).unwrap();
        let cb = polar_codebook(&geom, 1.1, 3).unwrap();
        let prior = rbf_prior(n, &PriorConfig::new(1.0 / 128.0)).unwrap();
        let ch = single_path_channel(n);
        for scheme in [
            SchemeKind::CodebookTs,
            SchemeKind::HybridTs,
            SchemeKind::ContinuousTs { unconstrained_budget: false },
        ] {
            let cfg = config(0.05, 60);
            let a = run_training(scheme, &ch, &f, Some(&cb), &prior, &cfg, &mut ChaCha8Rng::seed_from_u64(3))
                .unwrap();
            let b = run_training(scheme, &ch, &f, Some(&cb), &prior, &cfg, &mut ChaCha8Rng::seed_from_u64(3))
                .unwrap();
            assert_eq!(a, b);
            assert!(a.pilots_used <= 60);
            assert!((a.w_data.norm() - 1.0).abs() < 1e-10);
            assert_eq!(a.trace.len(), a.pilots_used);
            if scheme == SchemeKind::HybridTs {
                let stage2 = a.trace.iter().filter(|r| r.stage == Stage::Continuous).count();
                assert_eq!(a.stage1_pilots + stage2, a.pilots_used);
            } else {
                assert_eq!(a.stage1_pilots, 0);
            }
        }
    }
}
