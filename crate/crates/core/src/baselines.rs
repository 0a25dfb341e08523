//! Reference beamformers and the rate metric.

use nalgebra::DVector;
use num_complex::Complex64;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::channel::{complex_normal, ChannelRealization};
use crate::error::{check_dim, Error, Result};
use crate::transform::{argmax_norm, DftMatrix, PolarCodebook};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum BaselineKind {
    ExhaustiveNf,
    MultiBeam,
    FullCsi,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BaselineOutcome {
    pub w_data: DVector<Complex64>,
    pub pilots_used: usize,
    pub label: BaselineKind,
}

/// `log2(1 + |w^H h|^2 / noise_var)`.
pub fn achievable_rate(h: &DVector<Complex64>, w: &DVector<Complex64>, noise_var: f64) -> f64 {
    (1.0 + w.dotc(h).norm_sqr() / noise_var).log2()
}

/// Matched filter `w = h / |h|`.
pub fn full_csi_bound(channel: &ChannelRealization, noise_var: f64) -> Result<(BaselineOutcome, f64)> {
    let norm = channel.h.norm();
    if !(norm > 0.0) {
        return Err(Error::NumericalDegeneracy("channel has zero norm".into()));
    }
    let w = &channel.h / Complex64::from(norm);
    let rate = (1.0 + channel.h.norm_squared() / noise_var).log2();
    Ok((BaselineOutcome { w_data: w, pilots_used: 0, label: BaselineKind::FullCsi }, rate))
}

/// Sweeps every codeword once and keeps the one with the strongest noisy return.
pub fn exhaustive_nf_search<R: Rng + ?Sized>(
    channel: &ChannelRealization,
    codebook: &PolarCodebook,
    noise_var: f64,
    rng: &mut R,
) -> Result<BaselineOutcome> {
    if codebook.is_empty() {
        return Err(Error::EmptyCodebook);
    }
    check_dim(codebook.n_antennas(), channel.n_antennas())?;
    let noise_std = noise_var.sqrt();
    let clean = codebook.matrix().ad_mul(&channel.h);
    // Received sample is h^H w = conj(w^H h); only the modulus matters for the choice.
    let received = clean.iter().map(|z| z.conj() + complex_normal(rng) * noise_std);
    let (best, _) = argmax_norm(received).expect("non-empty codebook");
    Ok(BaselineOutcome {
        w_data: codebook.codeword(best).into_owned(),
        pilots_used: codebook.len(),
        label: BaselineKind::ExhaustiveNf,
    })
}

/// Probes every beamspace bin once and rebuilds the channel from the complex returns.
///
/// Probing bin `n` with `F^H e_n` returns `conj(g_n) + noise`, so `g^_n = conj(y_n)`.
pub fn multi_beam_combination<R: Rng + ?Sized>(
    channel: &ChannelRealization,
    f: &DftMatrix,
    noise_var: f64,
    rng: &mut R,
) -> Result<BaselineOutcome> {
    let estimate = multi_beam_estimate(channel, f, noise_var, rng)?;
    let h_hat = f.to_spatial(&estimate)?;
    let norm = h_hat.norm();
    if !(norm > 0.0) {
        return Err(Error::DegenerateSample("reconstructed channel is zero".into()));
    }
    Ok(BaselineOutcome {
        w_data: h_hat / Complex64::from(norm),
        pilots_used: f.n(),
        label: BaselineKind::MultiBeam,
    })
}

/// Beamspace estimate `g^` from one noisy probe per bin.
pub fn multi_beam_estimate<R: Rng + ?Sized>(
    channel: &ChannelRealization,
    f: &DftMatrix,
    noise_var: f64,
    rng: &mut R,
) -> Result<DVector<Complex64>> {
    let n = f.n();
    check_dim(n, channel.n_antennas())?;
    let noise_std = noise_var.sqrt();
    Ok(DVector::from_fn(n, |k, _| {
        let y = channel.h.dotc(&f.bin_beam(k)) + complex_normal(rng) * noise_std;
        y.conj()
    }))
}
