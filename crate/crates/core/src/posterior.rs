//! Complex-Gaussian belief over the beamspace channel.
//!
//! Observations follow `y = v^H g + n` with `n ~ CN(0, sigma^2)`. The physical
//! measurement `h^H w + n` is conjugated on the way in (see
//! [`Observation::from_measurement`]), which leaves the noise statistics unchanged.

use nalgebra::{Cholesky, DMatrix, DVector, SymmetricEigen};
use num_complex::Complex64;
use rand::Rng;

use crate::channel::complex_normal;
use crate::error::{check_dim, Error, Result};
use crate::transform::{angle_grid, DftMatrix};

/// Ridge added to a singular prior before the batch solve.
const BATCH_RIDGE: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq)]
pub struct GaussianBelief {
    pub mean: DVector<Complex64>,
    pub cov: DMatrix<Complex64>,
    /// Number of updates applied since the prior.
    pub t: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PriorConfig {
    /// Kernel length scale on the beamspace angle grid.
    pub length_scale: f64,
    /// Defaults to zero when absent.
    pub prior_mean: Option<DVector<Complex64>>,
    pub prior_scale: f64,
}

impl PriorConfig {
    pub fn new(length_scale: f64) -> Self {
        Self { length_scale, prior_mean: None, prior_scale: 1.0 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Observation {
    pub v: DVector<Complex64>,
    pub y: Complex64,
    pub noise_var: f64,
}

impl Observation {
    pub fn new(v: DVector<Complex64>, y: Complex64, noise_var: f64) -> Result<Self> {
        if !(noise_var.is_finite() && noise_var > 0.0) {
            return Err(Error::InvalidArgument(format!(
                "noise variance must be positive, got {noise_var}"
            )));
        }
        Ok(Self { v, y, noise_var })
    }

    /// Maps a transmitted beam `w` and the received `y_phys = h^H w + n` into
    /// the model convention: `v = F w`, `y = conj(y_phys)`.
    pub fn from_measurement(
        f: &DftMatrix,
        w: &DVector<Complex64>,
        y_phys: Complex64,
        noise_var: f64,
    ) -> Result<Self> {
        let v = f.to_dft(w)?;
        Self::new(v, y_phys.conj(), noise_var)
    }
}

/// RBF kernel matrix over the beamspace angle grid.
pub fn rbf_kernel(n: usize, length_scale: f64) -> DMatrix<Complex64> {
    let grid = angle_grid(n);
    DMatrix::from_fn(n, n, |i, j| {
        let z = (grid[i] - grid[j]) / length_scale;
        Complex64::from((-0.5 * z * z).exp())
    })
}

pub fn rbf_prior(n: usize, config: &PriorConfig) -> Result<GaussianBelief> {
    if n == 0 {
        return Err(Error::InvalidArgument("belief dimension must be at least 1".into()));
    }
    if !(config.length_scale > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "length scale must be positive, got {}",
            config.length_scale
        )));
    }
    if !(config.prior_scale.is_finite() && config.prior_scale > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "prior scale must be positive, got {}",
            config.prior_scale
        )));
    }
    let mean = match &config.prior_mean {
        Some(m) => {
            check_dim(n, m.len())?;
            m.clone()
        }
        None => DVector::zeros(n),
    };
    let cov = rbf_kernel(n, config.length_scale) * Complex64::from(config.prior_scale);
    Ok(GaussianBelief { mean, cov, t: 0 })
}

/// Returns `C` with `C C^H = cov`.
///
/// Tries a plain Cholesky factorization, then one with a small diagonal
/// jitter, then falls back to an eigendecomposition with negative eigenvalues
/// clamped to zero. The input is never modified.
pub fn hermitian_factor(cov: &DMatrix<Complex64>) -> Result<DMatrix<Complex64>> {
    let n = cov.nrows();
    if let Some(ch) = Cholesky::new(cov.clone()) {
        return Ok(ch.unpack());
    }
    let trace: f64 = cov.diagonal().iter().map(|z| z.re).sum();
    let jitter = 1e-12 * trace / n as f64;
    if jitter > 0.0 {
        let mut jittered = cov.clone();
        for i in 0..n {
            jittered[(i, i)] += Complex64::from(jitter);
        }
        if let Some(ch) = Cholesky::new(jittered) {
            return Ok(ch.unpack());
        }
    }
    if cov.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
        return Err(Error::NumericalDegeneracy("covariance has non-finite entries".into()));
    }
    let eig = SymmetricEigen::new(cov.clone());
    let mut factor = eig.eigenvectors;
    for (j, &lambda) in eig.eigenvalues.iter().enumerate() {
        let s = lambda.max(0.0).sqrt();
        factor.column_mut(j).iter_mut().for_each(|z| *z *= s);
    }
    if factor.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
        return Err(Error::NumericalDegeneracy("covariance factorization failed".into()));
    }
    Ok(factor)
}

impl GaussianBelief {
    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    /// Draw from `CN(mean, cov)`.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Result<DVector<Complex64>> {
        let factor = hermitian_factor(&self.cov)?;
        let z = DVector::from_fn(self.dim(), |_, _| complex_normal(rng));
        Ok(&self.mean + factor * z)
    }

    /// Rank-one conjugate update with one observation.
    pub fn update(&mut self, obs: &Observation) -> Result<()> {
        check_dim(self.dim(), obs.v.len())?;
        let dv = &self.cov * &obs.v;
        let alpha = obs.v.dotc(&dv).re + obs.noise_var;
        if !(alpha.is_finite() && alpha > 0.0) {
            return Err(Error::NumericalDegeneracy(format!("innovation variance {alpha}")));
        }
        let gain = dv / Complex64::from(alpha);
        let innovation = obs.y - obs.v.dotc(&self.mean);
        self.mean.axpy(innovation, &gain, Complex64::from(1.0));
        let vh_d = obs.v.adjoint() * &self.cov;
        self.cov.ger(Complex64::from(-1.0), &gain, &vh_d.transpose(), Complex64::from(1.0));
        symmetrize(&mut self.cov);
        self.t += 1;
        Ok(())
    }

    /// Hermitian asymmetry `max |D - D^H|`.
    pub fn hermitian_error(&self) -> f64 {
        (&self.cov - self.cov.adjoint()).iter().map(|z| z.norm()).fold(0.0, f64::max)
    }

    /// Smallest and largest covariance eigenvalues.
    pub fn eigen_range(&self) -> (f64, f64) {
        let eig = SymmetricEigen::new(self.cov.clone());
        let min = eig.eigenvalues.iter().copied().fold(f64::INFINITY, f64::min);
        let max = eig.eigenvalues.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        (min, max)
    }

    /// `log det(D + 1e-12 I)`, a differential-entropy proxy.
    pub fn log_det_proxy(&self) -> f64 {
        let eig = SymmetricEigen::new(self.cov.clone());
        eig.eigenvalues.iter().map(|&l| (l.max(0.0) + 1e-12).ln()).sum()
    }
}

fn symmetrize(m: &mut DMatrix<Complex64>) {
    let n = m.nrows();
    for i in 0..n {
        m[(i, i)] = Complex64::from(m[(i, i)].re);
        for j in (i + 1)..n {
            let avg = (m[(i, j)] + m[(j, i)].conj()) * 0.5;
            m[(i, j)] = avg;
            m[(j, i)] = avg.conj();
        }
    }
}

pub fn sample_belief<R: Rng + ?Sized>(belief: &GaussianBelief, rng: &mut R) -> Result<DVector<Complex64>> {
    belief.sample(rng)
}

pub fn update(belief: &GaussianBelief, obs: &Observation) -> Result<GaussianBelief> {
    let mut next = belief.clone();
    next.update(obs)?;
    Ok(next)
}

/// Closed-form posterior for a whole batch of observations, in information form:
/// `D = (D0^-1 + sum v v^H / s2)^-1`, `m = D (D0^-1 m0 + sum v y / s2)`.
pub fn batch_posterior(prior: &GaussianBelief, observations: &[Observation]) -> Result<GaussianBelief> {
    if observations.is_empty() {
        return Ok(prior.clone());
    }
    let n = prior.dim();
    let prior_chol = Cholesky::new(prior.cov.clone()).or_else(|| {
        let ridged = &prior.cov + DMatrix::<Complex64>::identity(n, n) * Complex64::from(BATCH_RIDGE);
        Cholesky::new(ridged)
    });
    let prior_chol =
        prior_chol.ok_or_else(|| Error::NumericalDegeneracy("prior covariance is singular".into()))?;
    let mut precision = prior_chol.inverse();
    let mut info = &precision * &prior.mean;
    for obs in observations {
        check_dim(n, obs.v.len())?;
        let w = Complex64::from(1.0 / obs.noise_var);
        precision.ger(w, &obs.v, &obs.v.conjugate(), Complex64::from(1.0));
        info.axpy(obs.y * w, &obs.v, Complex64::from(1.0));
    }
    symmetrize(&mut precision);
    let post_chol = Cholesky::new(precision)
        .ok_or_else(|| Error::NumericalDegeneracy("posterior precision is not positive definite".into()))?;
    let mut cov = post_chol.inverse();
    symmetrize(&mut cov);
    let mean = &cov * info;
    Ok(GaussianBelief { mean, cov, t: prior.t + observations.len() })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    fn identity_belief(n: usize) -> GaussianBelief {
        GaussianBelief { mean: DVector::zeros(n), cov: DMatrix::identity(n, n), t: 0 }
    }

    #[test]
    fn prior_diagonal_is_scale() {
        let mut cfg = PriorConfig::new(0.1);
        cfg.prior_scale = 2.5;
        let b = rbf_prior(9, &cfg).unwrap();
        assert!(b.cov.diagonal().iter().all(|z| *z == c(2.5, 0.0)));
        assert_eq!(b.t, 0);
        assert!(b.mean.iter().all(|z| *z == c(0.0, 0.0)));
    }

    #[test]
    fn adjacent_kernel_entries_at_default_setting() {
        let b = rbf_prior(256, &PriorConfig::new(1.0 / 128.0)).unwrap();
        for i in 0..255 {
            assert!((b.cov[(i, i + 1)].re - (-0.5f64).exp()).abs() < 1e-12);
        }
        assert!(((-0.5f64).exp() - 0.60653).abs() < 1e-5);
    }

    #[test]
    fn tiny_length_scale_gives_identity() {
        let b = rbf_prior(8, &PriorConfig::new(1e-6)).unwrap();
        let err = (&b.cov - DMatrix::<Complex64>::identity(8, 8)).norm();
        assert!(err < 1e-300 || err == 0.0);
    }

    #[test]
    fn prior_rejects_bad_config() {
        assert!(rbf_prior(4, &PriorConfig::new(0.0)).is_err());
        let mut cfg = PriorConfig::new(0.1);
        cfg.prior_mean = Some(DVector::zeros(3));
        assert!(matches!(rbf_prior(4, &cfg), Err(Error::DimensionMismatch { .. })));
    }

    #[test]
    fn zero_covariance_samples_the_mean() {
        let mean = DVector::from_vec(vec![c(1.0, 2.0), c(-0.5, 0.0), c(0.0, 3.0)]);
        let b = GaussianBelief { mean: mean.clone(), cov: DMatrix::zeros(3, 3), t: 0 };
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        assert_eq!(b.sample(&mut rng).unwrap(), mean);
    }

    #[test]
    fn sampling_is_reproducible() {
        let b = rbf_prior(6, &PriorConfig::new(0.3)).unwrap();
        let a = b.sample(&mut ChaCha8Rng::seed_from_u64(9)).unwrap();
        let bb = b.sample(&mut ChaCha8Rng::seed_from_u64(9)).unwrap();
        assert_eq!(a, bb);
    }

    #[test]
    fn hand_evaluated_update() {
        let mut b = identity_belief(3);
        let mut v = DVector::zeros(3);
        v[0] = c(1.0, 0.0);
        b.update(&Observation::new(v, c(1.0, 0.0), 1.0).unwrap()).unwrap();
        assert_eq!(b.mean[0], c(0.5, 0.0));
        assert_eq!(b.mean[1], c(0.0, 0.0));
        assert_eq!(b.cov[(0, 0)], c(0.5, 0.0));
        assert_eq!(b.cov[(1, 1)], c(1.0, 0.0));
        assert_eq!(b.cov[(2, 2)], c(1.0, 0.0));
        for j in 1..3 {
            assert_eq!(b.cov[(0, j)], c(0.0, 0.0));
            assert_eq!(b.cov[(j, 0)], c(0.0, 0.0));
        }
        assert_eq!(b.t, 1);
    }

    #[test]
    fn uninformative_direction_changes_nothing() {
        let mut cov = DMatrix::identity(3, 3);
        cov[(2, 2)] = c(0.0, 0.0);
        let before = GaussianBelief { mean: DVector::zeros(3), cov, t: 0 };
        let mut v = DVector::zeros(3);
        v[2] = c(0.0, 1.0);
        let after = update(&before, &Observation::new(v, c(0.3, 0.2), 0.5).unwrap()).unwrap();
        assert_eq!(after.mean, before.mean);
        assert_eq!(after.cov, before.cov);
    }

    #[test]
    fn observation_validation() {
        let v = DVector::from_element(2, c(0.5f64.sqrt(), 0.0));
        assert!(Observation::new(v.clone(), c(0.0, 0.0), 0.0).is_err());
        let mut b = identity_belief(3);
        let obs = Observation::new(v, c(0.0, 0.0), 1.0).unwrap();
        assert!(matches!(b.update(&obs), Err(Error::DimensionMismatch { .. })));
    }

    #[test]
    fn single_observation_batch_matches_update() {
        let prior = rbf_prior(6, &PriorConfig::new(0.4)).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let v = DVector::from_fn(6, |_, _| complex_normal(&mut rng));
        let v = &v / Complex64::from(v.norm());
        let obs = Observation::new(v, c(0.7, -0.1), 0.2).unwrap();
        let rec = update(&prior, &obs).unwrap();
        let batch = batch_posterior(&prior, &[obs]).unwrap();
        assert!((&rec.mean - &batch.mean).norm() <= 1e-10 * rec.mean.norm().max(1.0));
        assert!((&rec.cov - &batch.cov).norm() <= 1e-10 * rec.cov.norm());
    }

    #[test]
    fn empty_batch_is_prior() {
        let prior = rbf_prior(5, &PriorConfig::new(0.2)).unwrap();
        assert_eq!(batch_posterior(&prior, &[]).unwrap(), prior);
    }

    #[test]
    fn factor_reproduces_covariance() {
        let b = rbf_prior(10, &PriorConfig::new(0.15)).unwrap();
        let f = hermitian_factor(&b.cov).unwrap();
        assert!((&f * f.adjoint() - &b.cov).norm() < 1e-10);
        // Rank deficient: falls through to the eigen route.
        let u = DVector::from_fn(4, |i, _| c(i as f64, 1.0));
        let low_rank = &u * u.adjoint();
        let f = hermitian_factor(&low_rank).unwrap();
        assert!((&f * f.adjoint() - &low_rank).norm() < 1e-9);
    }
}
