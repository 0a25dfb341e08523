//! Thompson-sampling beam training for near-field XL-MIMO links.
//!
//! The crate is organised bottom-up:
//!
//! - [`channel`]: ULA geometry, near-field steering vectors and multipath channel draws.
//! - [`transform`]: unitary DFT basis and the polar-domain codebook.
//! - [`posterior`]: complex-Gaussian belief over the beamspace channel with a
//!   correlated RBF prior and rank-one Bayesian updates.
//! - [`policies`]: Thompson-sampling beam selection, convergence detection and
//!   the training loop for the codebook, continuous and hybrid schemes.
//! - [`baselines`]: exhaustive codebook search, multi-beam reconstruction,
//!   the full-CSI bound and the achievable-rate metric.
//! - [`harness`]: seeded Monte-Carlo sweeps and result files.

pub mod baselines;
pub mod channel;
pub mod error;
pub mod harness;
pub mod policies;
pub mod posterior;
pub mod transform;

pub use error::{Error, Result};
