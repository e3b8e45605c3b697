//! Design and analysis of sigma-delta modulators driven by oversampled
//! band-limited Gaussian sources.
//!
//! The crate is organized around four building blocks:
//!
//! - [`spectra`]: power spectral densities, autocorrelations, and the
//!   frequency-domain integrals shared by everything else.
//! - [`channels`]: closed-form rate-distortion evaluation of the sigma-delta
//!   and DPCM test channels, and the noise-variance mapping that makes the
//!   two architectures trade rate for distortion identically.
//! - [`filter_design`]: optimal feedback-filter construction, either as FIR
//!   MMSE predictors of a virtual noisy source or by spectral factorization
//!   of the ideal two-level noise shape.
//! - [`simulate`]: time-domain Monte Carlo of the modulator loop with an
//!   AWGN stand-in or a dithered finite-support uniform quantizer, including
//!   overload statistics.
//!
//! All analysis functions are pure; simulation is deterministic given a seed
//! and parallelizes over independent blocks.

pub mod channels;
pub mod error;
pub mod filter_design;
pub mod simulate;
pub mod spectra;

pub use error::{Error, Result};
pub use spectra::{BandSpec, FirFilter, FrequencyWeight, Psd};
