//! Near-field multipath channel model for a uniform linear array.
//!
//! The array lies on the y-axis, centred at the origin. A target described by
//! `(theta, r)` with `theta = sin(phi)` sits at `(r * sqrt(1 - theta^2), r * theta)`,
//! so the element distance below is the exact Euclidean distance.

use nalgebra::DVector;
use num_complex::Complex64;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

use crate::error::{Error, Result};

/// Propagation speed used to derive the wavelength from a carrier frequency.
pub const SPEED_OF_LIGHT: f64 = 3.0e8;

/// Scatterers closer than this to the user are redrawn.
const MIN_SCATTERER_USER_DISTANCE: f64 = 1e-6;

/// Uniform linear array description.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArrayGeometry {
    pub n_antennas: usize,
    pub wavelength: f64,
    pub spacing: f64,
    /// `delta_n = (2n - N + 1) / 2`, in units of `spacing`.
    pub element_offsets: Vec<f64>,
}

impl ArrayGeometry {
    /// Half-wavelength ULA.
    pub fn new(n_antennas: usize, wavelength: f64) -> Result<Self> {
        Self::with_spacing(n_antennas, wavelength, wavelength / 2.0)
    }

    pub fn from_carrier(n_antennas: usize, carrier_hz: f64) -> Result<Self> {
        if !(carrier_hz.is_finite() && carrier_hz > 0.0) {
            return Err(Error::InvalidArgument(format!(
                "carrier frequency must be positive, got {carrier_hz}"
            )));
        }
        Self::new(n_antennas, SPEED_OF_LIGHT / carrier_hz)
    }

    pub fn with_spacing(n_antennas: usize, wavelength: f64, spacing: f64) -> Result<Self> {
        if n_antennas == 0 {
            return Err(Error::InvalidArgument("array needs at least one element".into()));
        }
        if !(wavelength.is_finite() && wavelength > 0.0) {
            return Err(Error::InvalidArgument(format!(
                "wavelength must be positive, got {wavelength}"
            )));
        }
        if !(spacing.is_finite() && spacing > 0.0) {
            return Err(Error::InvalidArgument(format!(
                "spacing must be positive, got {spacing}"
            )));
        }
        let element_offsets = (0..n_antennas).map(|n| element_offset(n, n_antennas)).collect();
        Ok(Self { n_antennas, wavelength, spacing, element_offsets })
    }

    /// Physical aperture `(N - 1) * d`.
    pub fn aperture(&self) -> f64 {
        (self.n_antennas as f64 - 1.0) * self.spacing
    }

    pub fn rayleigh_distance(&self) -> f64 {
        2.0 * self.aperture().powi(2) / self.wavelength
    }
}

/// Offset of element `n` from the array centre, in units of the spacing.
pub fn element_offset(n: usize, n_antennas: usize) -> f64 {
    (2.0 * n as f64 - n_antennas as f64 + 1.0) / 2.0
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum PathKind {
    LoS,
    NLoS,
}

/// One propagation path of a channel draw.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PathComponent {
    pub kind: PathKind,
    /// Sine of the angle of departure.
    pub theta: f64,
    /// Distance from the array centre to the user (LoS) or scatterer (NLoS).
    pub r1: f64,
    /// Scatterer-to-user distance, NLoS only.
    pub r2: Option<f64>,
    /// Complex path gain including the propagation phase.
    pub gain: Complex64,
}

/// One quasi-static channel draw.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelRealization {
    /// Spatial channel, rescaled so that `|h|^2 = N`.
    pub h: DVector<Complex64>,
    pub paths: Vec<PathComponent>,
    /// Factor that was applied to the raw channel.
    pub norm_scale: f64,
    /// `|h|^2` before normalization.
    pub raw_norm_sq: f64,
}

impl ChannelRealization {
    /// Wraps a raw channel vector, normalizing it to `|h|^2 = N`.
    pub fn from_raw(h_raw: DVector<Complex64>, paths: Vec<PathComponent>) -> Result<Self> {
        let n = h_raw.len();
        let raw_norm_sq = h_raw.norm_squared();
        if !(raw_norm_sq.is_finite() && raw_norm_sq > 0.0) {
            return Err(Error::NumericalDegeneracy(format!(
                "channel has non-positive energy {raw_norm_sq}"
            )));
        }
        let norm_scale = (n as f64 / raw_norm_sq).sqrt();
        let h = h_raw * Complex64::from(norm_scale);
        Ok(Self { h, paths, norm_scale, raw_norm_sq })
    }

    pub fn n_antennas(&self) -> usize {
        self.h.len()
    }
}

/// How the scatterer-to-user law of cosines treats its angle argument.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CosineArgument {
    /// `cos(theta_u - theta_l)` on the sine values, as the model is usually written.
    #[default]
    SineValues,
    /// `cos(phi_u - phi_l)` on the physical angles.
    PhysicalAngles,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioConfig {
    pub n_paths: usize,
    pub distance_range: (f64, f64),
    /// Physical AoD range in radians.
    pub angle_range: (f64, f64),
    pub geometry: ArrayGeometry,
    pub cosine_argument: CosineArgument,
}

impl ScenarioConfig {
    pub fn validate(&self) -> Result<()> {
        let (r_min, r_max) = self.distance_range;
        let (a_min, a_max) = self.angle_range;
        if self.n_paths == 0 {
            return Err(Error::Config("n_paths must be at least 1".into()));
        }
        if !(r_min > 0.0 && r_min < r_max && r_max.is_finite()) {
            return Err(Error::Config(format!(
                "distance range must satisfy 0 < r_min < r_max, got [{r_min}, {r_max}]"
            )));
        }
        if !(a_min.is_finite() && a_max.is_finite() && a_min < a_max) {
            return Err(Error::Config(format!(
                "angle range must satisfy phi_min < phi_max, got [{a_min}, {a_max}]"
            )));
        }
        if a_min < -PI / 2.0 || a_max > PI / 2.0 {
            return Err(Error::Config(format!(
                "angle range must lie in [-pi/2, pi/2], got [{a_min}, {a_max}]"
            )));
        }
        Ok(())
    }
}

fn check_target(theta: f64, r: f64) -> Result<()> {
    if !(r.is_finite() && r > 0.0) {
        return Err(Error::InvalidArgument(format!("distance must be positive, got {r}")));
    }
    if !(theta.abs() <= 1.0) {
        return Err(Error::InvalidArgument(format!("theta must lie in [-1, 1], got {theta}")));
    }
    Ok(())
}

/// Exact distance from element `n` to a target at `(theta, r)`.
pub fn element_distance(geometry: &ArrayGeometry, n: usize, theta: f64, r: f64) -> Result<f64> {
    check_target(theta, r)?;
    if n >= geometry.n_antennas {
        return Err(Error::InvalidArgument(format!(
            "antenna index {n} out of range for {} elements",
            geometry.n_antennas
        )));
    }
    let y = geometry.element_offsets[n] * geometry.spacing;
    Ok((r * r + y * y - 2.0 * r * y * theta).max(0.0).sqrt())
}

/// `r^(n) - r`, evaluated without cancellation for distant targets.
fn path_difference(offset: f64, theta: f64, r: f64) -> f64 {
    let rn = (r * r + offset * offset - 2.0 * r * offset * theta).max(0.0).sqrt();
    (offset * offset - 2.0 * r * offset * theta) / (rn + r)
}

/// Unit-norm near-field steering vector `b(theta, r)`.
pub fn steering_vector(geometry: &ArrayGeometry, theta: f64, r: f64) -> Result<DVector<Complex64>> {
    check_target(theta, r)?;
    let scale = 1.0 / (geometry.n_antennas as f64).sqrt();
    let k = 2.0 * PI / geometry.wavelength;
    Ok(DVector::from_iterator(
        geometry.n_antennas,
        geometry.element_offsets.iter().map(|&delta| {
            let diff = path_difference(delta * geometry.spacing, theta, r);
            Complex64::from_polar(scale, -k * diff)
        }),
    ))
}

/// Free-space LoS gain `lambda / (4 pi r)` with its propagation phase.
fn los_gain(geometry: &ArrayGeometry, r_u: f64) -> Complex64 {
    let g = geometry.wavelength / (4.0 * PI * r_u);
    Complex64::from_polar(g, -2.0 * PI * r_u / geometry.wavelength)
}

/// Line-of-sight component `sqrt(N) g_u e^{-j 2 pi r_u / lambda} b(theta_u, r_u)`.
pub fn los_channel(geometry: &ArrayGeometry, theta_u: f64, r_u: f64) -> Result<DVector<Complex64>> {
    let b = steering_vector(geometry, theta_u, r_u)?;
    let coeff = los_gain(geometry, r_u) * (geometry.n_antennas as f64).sqrt();
    Ok(b * coeff)
}

/// Scatterer-to-user distance by the law of cosines. The angle arguments are
/// used exactly as given; callers choose sine values or physical angles.
pub fn scatterer_user_distance(r_u: f64, r_l1: f64, angle_u: f64, angle_l: f64) -> f64 {
    (r_l1 * r_l1 + r_u * r_u - 2.0 * r_u * r_l1 * (angle_u - angle_l).cos())
        .max(0.0)
        .sqrt()
}

fn nlos_path(
    geometry: &ArrayGeometry,
    theta_l: f64,
    r_l1: f64,
    r_l2: f64,
    reflection: Complex64,
) -> PathComponent {
    let lambda = geometry.wavelength;
    let amplitude = lambda / (4.0 * PI * r_l1 * r_l2);
    let phase = Complex64::from_polar(1.0, -2.0 * PI * (r_l1 + r_l2) / lambda);
    PathComponent {
        kind: PathKind::NLoS,
        theta: theta_l,
        r1: r_l1,
        r2: Some(r_l2),
        gain: reflection * amplitude * phase,
    }
}

fn accumulate_path(
    geometry: &ArrayGeometry,
    h: &mut DVector<Complex64>,
    path: &PathComponent,
) -> Result<()> {
    let b = steering_vector(geometry, path.theta, path.r1)?;
    let coeff = path.gain * (geometry.n_antennas as f64).sqrt();
    h.axpy(coeff, &b, Complex64::from(1.0));
    Ok(())
}

/// Sum of the scatterer contributions for injected reflection coefficients.
///
/// Angles are sine values; the law of cosines is applied to them directly.
pub fn nlos_channel(
    geometry: &ArrayGeometry,
    user: (f64, f64),
    scatterers: &[(f64, f64)],
    reflection_coeffs: &[Complex64],
) -> Result<DVector<Complex64>> {
    nlos_channel_with(geometry, user, scatterers, reflection_coeffs, CosineArgument::SineValues)
}

pub fn nlos_channel_with(
    geometry: &ArrayGeometry,
    user: (f64, f64),
    scatterers: &[(f64, f64)],
    reflection_coeffs: &[Complex64],
    cosine: CosineArgument,
) -> Result<DVector<Complex64>> {
    if scatterers.len() != reflection_coeffs.len() {
        return Err(Error::InvalidArgument(format!(
            "{} scatterers but {} reflection coefficients",
            scatterers.len(),
            reflection_coeffs.len()
        )));
    }
    let (theta_u, r_u) = user;
    check_target(theta_u, r_u)?;
    let mut h = DVector::zeros(geometry.n_antennas);
    for (&(theta_l, r_l1), &p) in scatterers.iter().zip(reflection_coeffs) {
        check_target(theta_l, r_l1)?;
        let r_l2 = match cosine {
            CosineArgument::SineValues => scatterer_user_distance(r_u, r_l1, theta_u, theta_l),
            CosineArgument::PhysicalAngles => {
                scatterer_user_distance(r_u, r_l1, theta_u.asin(), theta_l.asin())
            }
        };
        if !(r_l2 > 0.0) {
            return Err(Error::InvalidArgument(format!(
                "scatterer at ({theta_l}, {r_l1}) coincides with the user"
            )));
        }
        let path = nlos_path(geometry, theta_l, r_l1, r_l2, p);
        accumulate_path(geometry, &mut h, &path)?;
    }
    Ok(h)
}

/// Circularly-symmetric complex standard normal draw.
pub fn complex_normal<R: Rng + ?Sized>(rng: &mut R) -> Complex64 {
    let re: f64 = StandardNormal.sample(rng);
    let im: f64 = StandardNormal.sample(rng);
    Complex64::new(re, im) * std::f64::consts::FRAC_1_SQRT_2
}

/// Draws one multipath channel: the user first, then `L - 1` scatterers in order.
pub fn sample_scenario<R: Rng + ?Sized>(
    config: &ScenarioConfig,
    rng: &mut R,
) -> Result<ChannelRealization> {
    config.validate()?;
    let geometry = &config.geometry;
    let (r_min, r_max) = config.distance_range;
    let (a_min, a_max) = config.angle_range;

    let phi_u = rng.random_range(a_min..a_max);
    let r_u = rng.random_range(r_min..r_max);
    let theta_u = phi_u.sin();

    let mut paths = Vec::with_capacity(config.n_paths);
    paths.push(PathComponent {
        kind: PathKind::LoS,
        theta: theta_u,
        r1: r_u,
        r2: None,
        gain: los_gain(geometry, r_u),
    });

    for _ in 1..config.n_paths {
        let (phi_l, r_l1, r_l2) = loop {
            let phi_l = rng.random_range(a_min..a_max);
            let r_l1 = rng.random_range(r_min..r_max);
            let r_l2 = match config.cosine_argument {
                CosineArgument::SineValues => {
                    scatterer_user_distance(r_u, r_l1, theta_u, phi_l.sin())
                }
                CosineArgument::PhysicalAngles => scatterer_user_distance(r_u, r_l1, phi_u, phi_l),
            };
            if r_l2 >= MIN_SCATTERER_USER_DISTANCE {
                break (phi_l, r_l1, r_l2);
            }
        };
        let p = complex_normal(rng);
        paths.push(nlos_path(geometry, phi_l.sin(), r_l1, r_l2, p));
    }

    let mut h = DVector::zeros(geometry.n_antennas);
    for path in &paths {
        accumulate_path(geometry, &mut h, path)?;
    }
    ChannelRealization::from_raw(h, paths)
}
