//! Unitary DFT basis and near-field polar codebook.

use nalgebra::{DMatrix, DVector, DVectorView};
use num_complex::Complex64;
use std::f64::consts::PI;
use std::io::Write;

use crate::channel::{element_offset, steering_vector, ArrayGeometry};
use crate::error::{check_dim, Error, Result};

/// Unitary DFT matrix `F = [a(phi_0), ..., a(phi_{N-1})]`.
///
/// `F` is symmetric, so `F^H e_n` is the far-field steering vector toward
/// `theta = phi_n`: the beamspace coordinates `g = F h` put a far-field path at
/// `phi_n` into bin `n`.
#[derive(Debug, Clone, PartialEq)]
pub struct DftMatrix {
    matrix: DMatrix<Complex64>,
    angle_grid: Vec<f64>,
}

/// `phi_n = (2n - N + 1) / N`.
pub fn angle_grid(n: usize) -> Vec<f64> {
    (0..n).map(|i| (2.0 * i as f64 - n as f64 + 1.0) / n as f64).collect()
}

pub fn dft_matrix(n: usize) -> Result<DftMatrix> {
    if n == 0 {
        return Err(Error::InvalidArgument("DFT size must be at least 1".into()));
    }
    let grid = angle_grid(n);
    let scale = 1.0 / (n as f64).sqrt();
    let matrix = DMatrix::from_fn(n, n, |m, col| {
        Complex64::from_polar(scale, -PI * element_offset(m, n) * grid[col])
    });
    Ok(DftMatrix { matrix, angle_grid: grid })
}

impl DftMatrix {
    pub fn n(&self) -> usize {
        self.angle_grid.len()
    }

    pub fn matrix(&self) -> &DMatrix<Complex64> {
        &self.matrix
    }

    pub fn angle_grid(&self) -> &[f64] {
        &self.angle_grid
    }

    /// Column `a(phi_n)` of `F`.
    pub fn column(&self, n: usize) -> DVectorView<'_, Complex64> {
        self.matrix.column(n)
    }

    /// Spatial beam `F^H e_n` that probes beamspace bin `n`.
    pub fn bin_beam(&self, n: usize) -> DVector<Complex64> {
        self.matrix.row(n).adjoint()
    }

    /// `g = F h`.
    pub fn to_dft(&self, h: &DVector<Complex64>) -> Result<DVector<Complex64>> {
        check_dim(self.n(), h.len())?;
        Ok(&self.matrix * h)
    }

    /// `h = F^H g`.
    pub fn to_spatial(&self, g: &DVector<Complex64>) -> Result<DVector<Complex64>> {
        check_dim(self.n(), g.len())?;
        Ok(self.matrix.ad_mul(g))
    }
}

pub fn spatial_to_dft(f: &DftMatrix, h: &DVector<Complex64>) -> Result<DVector<Complex64>> {
    f.to_dft(h)
}

pub fn dft_to_spatial(f: &DftMatrix, g: &DVector<Complex64>) -> Result<DVector<Complex64>> {
    f.to_spatial(g)
}

/// The far-field (DFT) beam set, one beam per beamspace bin.
pub fn far_field_codebook(geometry: &ArrayGeometry) -> Result<Vec<DVector<Complex64>>> {
    let f = dft_matrix(geometry.n_antennas)?;
    Ok((0..f.n()).map(|n| f.bin_beam(n)).collect())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CodewordMeta {
    pub angle_index: usize,
    pub ring_index: usize,
    pub theta: f64,
    /// `None` for the far-field ring.
    pub distance: Option<f64>,
}

/// Polar-domain codebook, angle-major and ring-minor.
#[derive(Debug, Clone, PartialEq)]
pub struct PolarCodebook {
    /// Codewords as columns.
    codewords: DMatrix<Complex64>,
    meta: Vec<CodewordMeta>,
    beta: f64,
    n_rings: usize,
}

/// Ring distance `N^2 d^2 (1 - theta^2) / (2 lambda beta^2 s)` for `s >= 1`.
pub fn ring_distance(geometry: &ArrayGeometry, theta: f64, beta: f64, ring: usize) -> f64 {
    let n = geometry.n_antennas as f64;
    let d = geometry.spacing;
    n * n * d * d * (1.0 - theta * theta) / (2.0 * geometry.wavelength * beta * beta * ring as f64)
}

pub fn polar_codebook(geometry: &ArrayGeometry, beta: f64, n_rings: usize) -> Result<PolarCodebook> {
    if n_rings == 0 {
        return Err(Error::InvalidArgument("codebook needs at least one ring".into()));
    }
    if !(beta.is_finite() && beta > 0.0) {
        return Err(Error::InvalidArgument(format!("beta must be positive, got {beta}")));
    }
    let f = dft_matrix(geometry.n_antennas)?;
    let n = geometry.n_antennas;
    let mut codewords = DMatrix::zeros(n, n * n_rings);
    let mut meta = Vec::with_capacity(n * n_rings);
    for (angle_index, &theta) in f.angle_grid().iter().enumerate() {
        for ring_index in 0..n_rings {
            let col = angle_index * n_rings + ring_index;
            let (beam, distance) = if ring_index == 0 {
                (f.bin_beam(angle_index), None)
            } else {
                let r = ring_distance(geometry, theta, beta, ring_index);
                (steering_vector(geometry, theta, r)?, Some(r))
            };
            codewords.set_column(col, &beam);
            meta.push(CodewordMeta { angle_index, ring_index, theta, distance });
        }
    }
    Ok(PolarCodebook { codewords, meta, beta, n_rings })
}

impl PolarCodebook {
    pub fn len(&self) -> usize {
        self.meta.len()
    }

    pub fn is_empty(&self) -> bool {
        self.meta.is_empty()
    }

    pub fn n_antennas(&self) -> usize {
        self.codewords.nrows()
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }

    pub fn n_rings(&self) -> usize {
        self.n_rings
    }

    pub fn codeword(&self, index: usize) -> DVectorView<'_, Complex64> {
        self.codewords.column(index)
    }

    pub fn meta(&self) -> &[CodewordMeta] {
        &self.meta
    }

    pub fn matrix(&self) -> &DMatrix<Complex64> {
        &self.codewords
    }

    /// Index of the codeword maximizing `|h^H w|`; ties go to the lowest index.
    pub fn best_match(&self, h: &DVector<Complex64>) -> Result<(usize, f64)> {
        if self.is_empty() {
            return Err(Error::EmptyCodebook);
        }
        check_dim(self.n_antennas(), h.len())?;
        let scores = self.codewords.ad_mul(h);
        Ok(argmax_norm(scores.iter().copied()).expect("non-empty codebook"))
    }

    /// Writes the codebook as CSV: metadata columns followed by the real and
    /// imaginary parts of every entry.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let n = self.n_antennas();
        let mut wtr = csv::Writer::from_writer(out);
        let mut header: Vec<String> =
            ["angle_index", "ring_index", "theta", "distance_m"].iter().map(|s| s.to_string()).collect();
        header.extend((0..n).map(|i| format!("re_{i}")));
        header.extend((0..n).map(|i| format!("im_{i}")));
        wtr.write_record(&header).map_err(io_err)?;
        for (i, m) in self.meta.iter().enumerate() {
            let col = self.codewords.column(i);
            let mut rec = vec![
                m.angle_index.to_string(),
                m.ring_index.to_string(),
                m.theta.to_string(),
                m.distance.map(|d| d.to_string()).unwrap_or_default(),
            ];
            rec.extend(col.iter().map(|z| z.re.to_string()));
            rec.extend(col.iter().map(|z| z.im.to_string()));
            wtr.write_record(&rec).map_err(io_err)?;
        }
        wtr.flush().map_err(|e| Error::InvalidArgument(e.to_string()))?;
        Ok(())
    }
}

fn io_err(e: csv::Error) -> Error {
    Error::InvalidArgument(format!("csv write failed: {e}"))
}

/// First index of the largest modulus.
pub(crate) fn argmax_norm<I: IntoIterator<Item = Complex64>>(values: I) -> Option<(usize, f64)> {
    let mut best: Option<(usize, f64)> = None;
    for (i, z) in values.into_iter().enumerate() {
        let mag = z.norm();
        match best {
            Some((_, b)) if mag <= b => {}
            _ => best = Some((i, mag)),
        }
    }
    best
}
