//! Closed-form rate-distortion evaluation of the sigma-delta and DPCM test
//! channels, the noise-variance mapping under which the two architectures
//! perform identically, and the filter-independent optimality bounds.
//!
//! In both test channels the quantizer is replaced by an additive Gaussian
//! noise of matched variance; the scalar mutual information between the
//! noise channel's input and output stands in for the quantization rate.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::spectra::{
    band_energy, total_energy, weighted_band_energy, BandSpec, FirFilter, FrequencyWeight,
};

/// Which feedback architecture a rate-distortion point belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Architecture {
    SigmaDelta,
    Dpcm,
}

/// One point on a rate-distortion trade-off curve.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RatePoint {
    pub architecture: Architecture,
    /// MSE (or frequency-weighted MSE when a weight was supplied).
    pub distortion: f64,
    /// Scalar mutual information between quantizer input and output, in bits.
    #[serde(rename = "rate_bits")]
    pub mutual_info_bits: f64,
}

/// The pair of noise variances that make the sigma-delta and DPCM test
/// channels achieve the same distortion with the same filter.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoiseMapping {
    /// Sigma-delta channel noise variance `D / band_energy`.
    pub sigma2_sd: f64,
    /// DPCM channel noise variance `L * D`.
    pub sigma2_dpcm: f64,
    /// The shared denominator `(1/2pi) * int_band |1 - C(w)|^2`.
    pub band_energy: f64,
}

/// Scalar MMSE post-scaling of the reconstruction and the distortion it buys.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PostScaling {
    /// Optimal scaling `alpha = sigma2_x / (sigma2_x + D)`.
    pub alpha: f64,
    /// Improved distortion `sigma2_x * D / (sigma2_x + D)`.
    pub d_tilde: f64,
    /// `(1/2L) * log2(sigma2_x / d_tilde)`, the rate-distortion function of
    /// the flat source at `d_tilde`.
    pub rate_bits: f64,
}

fn check_positive(name: &'static str, value: f64) -> Result<()> {
    if !value.is_finite() || value <= 0.0 {
        return Err(Error::domain(name, format!("must be > 0, got {value}")));
    }
    Ok(())
}

fn half_log2(x: f64) -> f64 {
    0.5 * x.log2()
}

/// Distortion and scalar mutual information of the sigma-delta test channel
/// with feedback filter `C` and channel noise variance `sigma2_sd`:
///
/// - `D = sigma2_sd * (1/2pi) * int_band |1 - C(w)|^2`
/// - `I = (1/2) * log2(1 + sum c_n^2 + sigma2_x / sigma2_sd)`
///
/// With `weight` supplied, the distortion integrand gains the factor `P(w)`
/// (frequency-weighted MSE); the mutual information is unaffected.
pub fn sigma_delta_rd(
    spec: &BandSpec,
    filter: &FirFilter,
    sigma2_sd: f64,
    weight: Option<&FrequencyWeight>,
) -> Result<RatePoint> {
    check_positive("sigma2_sd", sigma2_sd)?;
    let l = spec.oversampling();
    let energy = match weight {
        None => band_energy(filter, l),
        Some(w) => weighted_band_energy(filter, l, w),
    };
    Ok(RatePoint {
        architecture: Architecture::SigmaDelta,
        distortion: sigma2_sd * energy,
        mutual_info_bits: half_log2(1.0 + total_energy(filter) + spec.sigma2_x() / sigma2_sd),
    })
}

/// Distortion and scalar mutual information of the DPCM test channel driven
/// by the flat member of the source class, with prediction filter `C` and
/// channel noise variance `sigma2_dpcm`:
///
/// - `D = sigma2_dpcm / L`
/// - `I = (1/2) * log2(1 + sum c_n^2
///        + (L * sigma2_x / sigma2_dpcm) * (1/2pi) * int_band |1 - C(w)|^2)`
pub fn dpcm_rd(spec: &BandSpec, filter: &FirFilter, sigma2_dpcm: f64) -> Result<RatePoint> {
    check_positive("sigma2_dpcm", sigma2_dpcm)?;
    let l = spec.oversampling();
    let snr_term = l * spec.sigma2_x() / sigma2_dpcm * band_energy(filter, l);
    Ok(RatePoint {
        architecture: Architecture::Dpcm,
        distortion: sigma2_dpcm / l,
        mutual_info_bits: half_log2(1.0 + total_energy(filter) + snr_term),
    })
}

/// The noise variances under which both test channels reach distortion
/// `target_d` with the same filter (and then the same mutual information):
/// `sigma2_sd = D / band_energy`, `sigma2_dpcm = L * D`.
pub fn dual_noise_variance(
    spec: &BandSpec,
    filter: &FirFilter,
    target_d: f64,
) -> Result<NoiseMapping> {
    check_positive("target_d", target_d)?;
    let l = spec.oversampling();
    let energy = band_energy(filter, l);
    if energy <= 0.0 {
        return Err(Error::Degenerate(format!(
            "band energy of 1 - C is {energy}; the target distortion is unreachable"
        )));
    }
    Ok(NoiseMapping {
        sigma2_sd: target_d / energy,
        sigma2_dpcm: l * target_d,
        band_energy: energy,
    })
}

/// Filter-independent lower bound `(1/2L) * log2(1 + sigma2_x / D)` on the
/// scalar mutual information of any sigma-delta test channel at distortion
/// `D`, for every source in the class.
pub fn rate_lower_bound(spec: &BandSpec, target_d: f64) -> Result<f64> {
    check_positive("target_d", target_d)?;
    Ok((1.0 / (2.0 * spec.oversampling())) * (1.0 + spec.sigma2_x() / target_d).log2())
}

/// Scalar MMSE estimation of the source from the channel output: scaling by
/// `alpha = sigma2_x / (sigma2_x + D)` improves the distortion to
/// `d_tilde = sigma2_x * D / (sigma2_x + D)`, and
/// `(1/2L) * log2(sigma2_x / d_tilde)` recovers [`rate_lower_bound`] at `D`.
pub fn post_scaling(spec: &BandSpec, d: f64) -> Result<PostScaling> {
    check_positive("d", d)?;
    let s2 = spec.sigma2_x();
    let alpha = s2 / (s2 + d);
    let d_tilde = s2 * d / (s2 + d);
    Ok(PostScaling {
        alpha,
        d_tilde,
        rate_bits: (1.0 / (2.0 * spec.oversampling())) * (s2 / d_tilde).log2(),
    })
}
