//! Power spectral densities, autocorrelations, and frequency-domain
//! quadrature shared by the analysis, design, and simulation modules.
//!
//! Everything here lives on the discrete circle. Grid-sampled spectra use the
//! uniform grid `w_m = -pi + 2*pi*m/M`; band-limited integrals over
//! `[-pi/L, pi/L]` are evaluated through the cosine-series coefficients of
//! the sampled function, for which each harmonic has a closed-form band
//! integral. That route is exact for trigonometric polynomials (all FIR
//! responses) regardless of where the band edge falls relative to the grid,
//! and spectrally accurate for smooth sampled weights.

use std::f64::consts::PI;

use rustfft::num_complex::Complex;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Default grid size for sampled spectra and factorization transforms.
pub const DEFAULT_GRID_SIZE: usize = 1 << 16;

/// Normalized sinc: `sin(pi x) / (pi x)` with `sinc(0) = 1`.
///
/// Near zero a 4-term Taylor expansion avoids the cancellation in the
/// naive quotient.
pub fn sinc(x: f64) -> f64 {
    let t = PI * x;
    if x.abs() < 1e-4 {
        let t2 = t * t;
        1.0 - t2 / 6.0 + t2 * t2 / 120.0 - t2 * t2 * t2 / 5040.0
    } else {
        t.sin() / t
    }
}

/// Grid angle `w_m = -pi + 2*pi*m/M` of point `m` on an `M`-point grid.
pub fn grid_omega(m: usize, grid_size: usize) -> f64 {
    -PI + 2.0 * PI * m as f64 / grid_size as f64
}

/// The compound source class: all stationary Gaussian processes with
/// variance `sigma2_x` whose spectrum vanishes outside `[-pi/L, pi/L]`.
///
/// The flat member of the class has constant in-band density `L * sigma2_x`,
/// which integrates back to `sigma2_x`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "BandSpecRaw")]
pub struct BandSpec {
    /// Oversampling ratio L >= 1.
    #[serde(rename = "L")]
    oversampling: f64,
    /// Source variance, > 0.
    sigma2_x: f64,
}

#[derive(Deserialize)]
struct BandSpecRaw {
    #[serde(rename = "L")]
    oversampling: f64,
    sigma2_x: f64,
}

impl TryFrom<BandSpecRaw> for BandSpec {
    type Error = Error;
    fn try_from(raw: BandSpecRaw) -> Result<Self> {
        BandSpec::new(raw.oversampling, raw.sigma2_x)
    }
}

impl BandSpec {
    pub fn new(oversampling: f64, sigma2_x: f64) -> Result<Self> {
        if !oversampling.is_finite() || oversampling < 1.0 {
            return Err(Error::domain(
                "L",
                format!("must be >= 1, got {oversampling}"),
            ));
        }
        if !sigma2_x.is_finite() || sigma2_x <= 0.0 {
            return Err(Error::domain(
                "sigma2_x",
                format!("must be > 0, got {sigma2_x}"),
            ));
        }
        Ok(Self {
            oversampling,
            sigma2_x,
        })
    }

    /// Oversampling ratio L.
    pub fn oversampling(&self) -> f64 {
        self.oversampling
    }

    /// Source variance.
    pub fn sigma2_x(&self) -> f64 {
        self.sigma2_x
    }

    /// Band edge `pi / L`.
    pub fn band_edge(&self) -> f64 {
        PI / self.oversampling
    }

    /// In-band level `L * sigma2_x` of the flat member of the class.
    pub fn flat_psd_level(&self) -> f64 {
        self.oversampling * self.sigma2_x
    }
}

/// A strictly causal FIR feedback/prediction filter `C(Z) = sum c_n Z^-n`,
/// `n = 1..=p`. The zero-lag coefficient is implicitly zero.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "FirFilterRaw")]
pub struct FirFilter {
    taps: Vec<f64>,
}

#[derive(Deserialize)]
struct FirFilterRaw {
    taps: Vec<f64>,
}

impl TryFrom<FirFilterRaw> for FirFilter {
    type Error = Error;
    fn try_from(raw: FirFilterRaw) -> Result<Self> {
        FirFilter::new(raw.taps)
    }
}

impl FirFilter {
    pub fn new(taps: Vec<f64>) -> Result<Self> {
        if taps.iter().any(|t| !t.is_finite()) {
            return Err(Error::domain("taps", "all taps must be finite"));
        }
        Ok(Self { taps })
    }

    /// The zero filter `C = 0` (no feedback).
    pub fn zero() -> Self {
        Self { taps: Vec::new() }
    }

    /// Tap values `c_1..c_p`.
    pub fn taps(&self) -> &[f64] {
        &self.taps
    }

    /// Number of taps p.
    pub fn order(&self) -> usize {
        self.taps.len()
    }

    /// Frequency response `C(w) = sum c_n e^{-j w n}`.
    pub fn response(&self, omega: f64) -> Complex<f64> {
        let mut acc = Complex::new(0.0, 0.0);
        for (n, &c) in self.taps.iter().enumerate() {
            let phase = -omega * (n as f64 + 1.0);
            acc += c * Complex::new(phase.cos(), phase.sin());
        }
        acc
    }

    /// Coefficients `[1, -c_1, ..., -c_p]` of the noise transfer function
    /// `A(Z) = 1 - C(Z)` seen by the quantization noise.
    pub fn ntf_coeffs(&self) -> Vec<f64> {
        let mut a = Vec::with_capacity(self.taps.len() + 1);
        a.push(1.0);
        a.extend(self.taps.iter().map(|c| -c));
        a
    }
}

fn validate_grid_samples(values: &[f64], what: &'static str) -> Result<()> {
    let m = values.len();
    if m < 8 || !m.is_power_of_two() {
        return Err(Error::domain(
            what,
            format!("grid size must be a power of two >= 8, got {m}"),
        ));
    }
    for (i, &v) in values.iter().enumerate() {
        if !v.is_finite() || v < 0.0 {
            return Err(Error::domain(
                what,
                format!("values must be finite and nonnegative, got {v} at index {i}"),
            ));
        }
        let j = (m - i) % m;
        let tol = 1e-12 * (1.0 + v.abs());
        if (v - values[j]).abs() > tol {
            return Err(Error::domain(
                what,
                format!("values must be even-symmetric; indices {i} and {j} differ"),
            ));
        }
    }
    Ok(())
}

/// A power spectral density sampled on the uniform grid `w_m = -pi + 2*pi*m/M`.
///
/// Values must be nonnegative and even-symmetric in `w`. Serialized as the
/// bare array of samples.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct Psd {
    values: Vec<f64>,
}

/// A nonnegative, even-symmetric frequency weight `P(w)` on the same grid
/// convention as [`Psd`], used by the frequency-weighted distortion measure.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct FrequencyWeight {
    values: Vec<f64>,
}

impl TryFrom<Vec<f64>> for Psd {
    type Error = Error;
    fn try_from(values: Vec<f64>) -> Result<Self> {
        Psd::new(values)
    }
}

impl From<Psd> for Vec<f64> {
    fn from(psd: Psd) -> Self {
        psd.values
    }
}

impl TryFrom<Vec<f64>> for FrequencyWeight {
    type Error = Error;
    fn try_from(values: Vec<f64>) -> Result<Self> {
        FrequencyWeight::new(values)
    }
}

impl From<FrequencyWeight> for Vec<f64> {
    fn from(weight: FrequencyWeight) -> Self {
        weight.values
    }
}

impl Psd {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        validate_grid_samples(&values, "psd")?;
        Ok(Self { values })
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn grid_size(&self) -> usize {
        self.values.len()
    }

    /// Mean of the sampled density over the circle, i.e. the variance of the
    /// process it describes.
    pub fn total_power(&self) -> f64 {
        self.values.iter().sum::<f64>() / self.values.len() as f64
    }
}

impl FrequencyWeight {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        validate_grid_samples(&values, "weight")?;
        Ok(Self { values })
    }

    /// Constant weight `P = 1`, which reduces the weighted distortion to MSE.
    pub fn unit(grid_size: usize) -> Result<Self> {
        Self::new(vec![1.0; grid_size])
    }

    /// Build a weight by sampling `f(w)` on the grid. `f` must be even and
    /// nonnegative.
    pub fn from_fn(grid_size: usize, f: impl Fn(f64) -> f64) -> Result<Self> {
        let mut values: Vec<f64> = (0..grid_size)
            .map(|m| f(grid_omega(m, grid_size)))
            .collect();
        // A kept invariant, not an assumption: resymmetrize exact ties so that
        // f evaluated at +-pi/2-like pairs cannot trip the validator on 1-ulp
        // asymmetries.
        for m in 1..grid_size / 2 {
            let avg = 0.5 * (values[m] + values[grid_size - m]);
            values[m] = avg;
            values[grid_size - m] = avg;
        }
        Self::new(values)
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn grid_size(&self) -> usize {
        self.values.len()
    }
}

/// Cosine-series coefficients `q_k`, `k = 0..=M/2`, of the grid samples, so
/// that the trigonometric interpolant is `sum_k q_k cos(k w)`.
fn cosine_coefficients(values: &[f64]) -> Vec<f64> {
    let m = values.len();
    let mut planner = FftPlanner::new();
    let fft = planner.plan_fft_forward(m);
    // Rotate from the [-pi, pi) layout to FFT (0..2*pi) layout.
    let mut buf: Vec<Complex<f64>> = (0..m)
        .map(|j| Complex::new(values[(j + m / 2) % m], 0.0))
        .collect();
    fft.process(&mut buf);
    let scale = 1.0 / m as f64;
    let mut q = Vec::with_capacity(m / 2 + 1);
    q.push(buf[0].re * scale);
    for k in 1..m / 2 {
        q.push(2.0 * buf[k].re * scale);
    }
    q.push(buf[m / 2].re * scale);
    q
}

/// `(1/2pi) * integral of cos(n w) over [-b, b]`, i.e. `sin(n b)/(pi n)`
/// with the `n = 0` limit `b / pi`.
fn harmonic_band_integral(n: i64, band_edge: f64) -> f64 {
    if n == 0 {
        band_edge / PI
    } else {
        let nf = n as f64;
        (nf * band_edge).sin() / (PI * nf)
    }
}

/// `(1/2pi) * integral over [-pi/L, pi/L]` of the trigonometric interpolant
/// of `values` times `cos(lag * w)`.
pub fn band_cosine_integral(values: &[f64], oversampling: f64, lag: i64) -> f64 {
    let q = cosine_coefficients(values);
    band_cosine_integral_from_coeffs(&q, oversampling, lag)
}

fn band_cosine_integral_from_coeffs(q: &[f64], oversampling: f64, lag: i64) -> f64 {
    let b = PI / oversampling;
    let lag = lag.abs();
    let mut acc = 0.0;
    for (k, &qk) in q.iter().enumerate() {
        let k = k as i64;
        // cos(kw) cos(lag w) splits into two harmonics.
        acc += 0.5 * qk * (harmonic_band_integral(k - lag, b) + harmonic_band_integral(k + lag, b));
    }
    acc
}

/// `(1/2pi)` times the integral of the interpolant of `values` over
/// `[-pi/L, pi/L]`.
pub fn band_integral(values: &[f64], oversampling: f64) -> f64 {
    band_cosine_integral(values, oversampling, 0)
}

/// Autocorrelation `R_S[k] = sigma2_x * sinc(k / L)` of the flat in-band
/// member of the source class (inverse transform of the constant in-band
/// density `L * sigma2_x`).
pub fn flat_band_autocorr(spec: &BandSpec, lag: i64) -> f64 {
    spec.sigma2_x() * sinc(lag as f64 / spec.oversampling())
}

/// Weighted autocorrelation
/// `(1/2pi) * integral over [-pi/L, pi/L] of L * sigma2_x * P(w) * cos(w k)`,
/// the lag-`k` second moment of the virtual source with density
/// `L * sigma2_x * P(w)` in band.
///
/// The integral is taken of the weight's trigonometric interpolant, so it
/// is exact for band-limited weights, spectrally accurate for smooth ones,
/// and first-order in the grid spacing when the sampled weight jumps.
pub fn weighted_band_autocorr(spec: &BandSpec, weight: &FrequencyWeight, lag: i64) -> f64 {
    spec.flat_psd_level() * band_cosine_integral(weight.values(), spec.oversampling(), lag)
}

/// All weighted autocorrelations for lags `0..=max_lag`, sharing one
/// transform of the weight.
pub fn weighted_band_autocorr_seq(
    spec: &BandSpec,
    weight: &FrequencyWeight,
    max_lag: usize,
) -> Vec<f64> {
    let q = cosine_coefficients(weight.values());
    let level = spec.flat_psd_level();
    (0..=max_lag as i64)
        .map(|k| level * band_cosine_integral_from_coeffs(&q, spec.oversampling(), k))
        .collect()
}

/// In-band energy `(1/2pi) * integral over [-pi/L, pi/L] of |1 - C(w)|^2`.
///
/// Evaluated in closed form: with `a = [1, -c_1, .., -c_p]` and
/// `rho[m] = sum_j a_j a_{j+m}`, the integral equals
/// `(1/L) * (rho[0] + 2 * sum_{m>=1} rho[m] * sinc(m/L))`, exact for any
/// band edge.
pub fn band_energy(filter: &FirFilter, oversampling: f64) -> f64 {
    let a = filter.ntf_coeffs();
    let n = a.len();
    let inv_l = 1.0 / oversampling;
    let mut acc = a.iter().map(|x| x * x).sum::<f64>();
    for m in 1..n {
        let mut rho = 0.0;
        for j in 0..n - m {
            rho += a[j] * a[j + m];
        }
        acc += 2.0 * rho * sinc(m as f64 * inv_l);
    }
    acc * inv_l
}

/// Total energy `(1/2pi) * integral over [-pi, pi] of |C(w)|^2 = sum c_n^2`
/// (Parseval).
pub fn total_energy(filter: &FirFilter) -> f64 {
    filter.taps().iter().map(|c| c * c).sum()
}

/// `|1 - C(w)|^2` sampled on the `[-pi, pi)` grid of the given size.
pub fn ntf_power_on_grid(filter: &FirFilter, grid_size: usize) -> Vec<f64> {
    let a = filter.ntf_coeffs();
    let mut planner = FftPlanner::new();
    let fft = planner.plan_fft_forward(grid_size);
    let mut buf = vec![Complex::new(0.0, 0.0); grid_size];
    for (n, &an) in a.iter().enumerate() {
        buf[n].re = an;
    }
    fft.process(&mut buf);
    // FFT bin k sits at w = 2*pi*k/M; rotate into [-pi, pi) order.
    (0..grid_size)
        .map(|m| buf[(m + grid_size / 2) % grid_size].norm_sqr())
        .collect()
}

/// Weighted in-band energy
/// `(1/2pi) * integral over [-pi/L, pi/L] of P(w) |1 - C(w)|^2`.
pub fn weighted_band_energy(
    filter: &FirFilter,
    oversampling: f64,
    weight: &FrequencyWeight,
) -> f64 {
    let grid = weight.grid_size();
    let ntf = ntf_power_on_grid(filter, grid);
    let values: Vec<f64> = ntf
        .iter()
        .zip(weight.values())
        .map(|(n, p)| n * p)
        .collect();
    band_integral(&values, oversampling)
}
