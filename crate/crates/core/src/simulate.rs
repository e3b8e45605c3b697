//! Time-domain Monte Carlo of the modulator loop.
//!
//! A block of the band-limited Gaussian source is synthesized in the
//! frequency domain, fed through the sequential feedback loop with either an
//! AWGN stand-in for the quantizer or a dithered finite-support uniform
//! quantizer, and reconstructed by an ideal per-block lowpass projection.
//! Blocks are independent: the filter memory is zeroed at each block start
//! and every block draws from its own counter-derived random substream, so
//! runs are reproducible and blocks can execute in parallel.

use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use rustfft::num_complex::Complex;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::spectra::{band_energy, total_energy, BandSpec, FirFilter, Psd};

/// A mid-rise uniform quantizer with `2^R` levels, step `sqrt(12 sigma2)`,
/// and support `[-Gamma/2, Gamma/2)` where `Gamma = 2^R * step`.
///
/// Its granular quantization error has variance `sigma2`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "QuantizerSpecRaw")]
pub struct QuantizerSpec {
    rate_bits: u32,
    sigma2: f64,
}

#[derive(Deserialize)]
struct QuantizerSpecRaw {
    rate_bits: u32,
    sigma2: f64,
}

impl TryFrom<QuantizerSpecRaw> for QuantizerSpec {
    type Error = Error;
    fn try_from(raw: QuantizerSpecRaw) -> Result<Self> {
        QuantizerSpec::new(raw.rate_bits, raw.sigma2)
    }
}

impl QuantizerSpec {
    pub fn new(rate_bits: u32, sigma2: f64) -> Result<Self> {
        if rate_bits == 0 {
            return Err(Error::domain("rate_bits", "must be >= 1"));
        }
        if !sigma2.is_finite() || sigma2 <= 0.0 {
            return Err(Error::domain(
                "sigma2",
                format!("must be > 0, got {sigma2}"),
            ));
        }
        Ok(Self { rate_bits, sigma2 })
    }

    pub fn rate_bits(&self) -> u32 {
        self.rate_bits
    }

    /// Granular noise variance.
    pub fn sigma2(&self) -> f64 {
        self.sigma2
    }

    /// Quantization step `sqrt(12 sigma2)`.
    pub fn step(&self) -> f64 {
        (12.0 * self.sigma2).sqrt()
    }

    /// Support width `Gamma = 2^R * step`.
    pub fn support(&self) -> f64 {
        (self.rate_bits as f64).exp2() * self.step()
    }

    /// Quantize one sample. Inside the support this is mid-rise rounding to
    /// the nearest odd multiple of `step/2`, with cell-boundary ties going
    /// toward `+inf`. Outside, the output saturates at the extreme level and
    /// the overload flag is set.
    pub fn quantize(&self, x: f64) -> (f64, bool) {
        let step = self.step();
        let half_support = 0.5 * self.support();
        if x.abs() < half_support {
            ((x / step).floor() * step + 0.5 * step, false)
        } else {
            let top = half_support - 0.5 * step;
            (if x < 0.0 { -top } else { top }, true)
        }
    }
}

/// What sits in place of the quantizer inside the loop.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NoiseModel {
    /// Additive white Gaussian noise of the given variance (the test
    /// channel).
    Awgn { sigma2: f64 },
    /// Subtractively dithered finite-support uniform quantizer.
    Dithered(QuantizerSpec),
}

impl NoiseModel {
    /// Variance of the additive noise the model injects per sample.
    pub fn noise_variance(&self) -> f64 {
        match self {
            NoiseModel::Awgn { sigma2 } => *sigma2,
            NoiseModel::Dithered(q) => q.sigma2(),
        }
    }
}

/// Shape of the source spectrum inside the band.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SourceShape {
    /// Constant in-band density (the flat member of the class).
    #[default]
    Flat,
    /// Arbitrary in-band density sampled on the block grid; it is validated
    /// against the band support and rescaled to the exact source variance.
    Custom(Psd),
}

/// Full description of a Monte Carlo run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    pub spec: BandSpec,
    pub filter: FirFilter,
    pub noise_model: NoiseModel,
    /// Samples per block; even, and larger than the filter order.
    pub block_len: usize,
    pub num_blocks: usize,
    pub seed: u64,
    #[serde(default)]
    pub source_shape: SourceShape,
    /// Samples discarded at the start of each block for steady-state
    /// statistics. Defaults to the filter order.
    #[serde(default)]
    pub guard: Option<usize>,
}

impl SimConfig {
    pub fn effective_guard(&self) -> usize {
        self.guard.unwrap_or_else(|| self.filter.order())
    }

    fn validate(&self) -> Result<()> {
        if self.block_len < 8 || !self.block_len.is_multiple_of(2) {
            return Err(Error::domain("block_len", "must be even and >= 8"));
        }
        if self.block_len <= self.filter.order() {
            return Err(Error::domain("block_len", "must exceed the filter order"));
        }
        if self.num_blocks == 0 {
            return Err(Error::domain("num_blocks", "must be >= 1"));
        }
        if self.effective_guard() >= self.block_len {
            return Err(Error::domain("guard", "must be smaller than block_len"));
        }
        if let NoiseModel::Awgn { sigma2 } = self.noise_model {
            if !sigma2.is_finite() || sigma2 <= 0.0 {
                return Err(Error::domain("sigma2", "AWGN variance must be > 0"));
            }
        }
        Ok(())
    }
}

/// Per-sample record of one block pass through the loop.
#[derive(Debug, Clone, PartialEq)]
pub struct LoopTrace {
    /// Quantizer input `U_n`.
    pub quantizer_input: Vec<f64>,
    /// Injected or measured quantization noise `N_n`.
    pub noise: Vec<f64>,
    /// Dither `Z_n` (empty for the AWGN model).
    pub dither: Vec<f64>,
    /// Reconstruction after the lowpass projection.
    pub reconstruction: Vec<f64>,
    /// Per-sample overload flags (all false for the AWGN model).
    pub overload: Vec<bool>,
}

/// Monte Carlo estimates with their standard errors.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimReport {
    pub blocks: usize,
    pub block_len: usize,
    pub guard: usize,
    pub seed: u64,
    /// Mean squared reconstruction error over all blocks.
    pub mse_all: f64,
    pub mse_all_stderr: f64,
    /// Mean squared error over blocks without any overload; `null` when
    /// every block overloaded.
    pub mse_conditional: Option<f64>,
    pub mse_conditional_stderr: Option<f64>,
    /// Fraction of blocks with at least one overload.
    pub overload_block_rate: f64,
    pub overload_block_rate_stderr: f64,
    pub overload_sample_rate: f64,
    pub overload_sample_rate_stderr: f64,
    pub overloaded_blocks: usize,
    pub overloaded_samples: usize,
    /// Closed-form distortion of the matching test channel.
    pub analytic_d: f64,
    /// Scalar mutual information of the matching test channel, bits.
    pub scalar_info_bits: f64,
    /// Union bound `2N exp(-(3/2) 4^(R - I))` on the block overload
    /// probability; only present for the dithered model.
    pub bound_pol: Option<f64>,
}

struct BlockFfts {
    forward: Arc<dyn Fft<f64>>,
    inverse: Arc<dyn Fft<f64>>,
}

impl BlockFfts {
    fn new(len: usize) -> Self {
        let mut planner = FftPlanner::new();
        Self {
            forward: planner.plan_fft_forward(len),
            inverse: planner.plan_fft_inverse(len),
        }
    }
}

/// True when FFT bin `j` of an `n`-point block lies strictly outside the
/// band `[-pi/L, pi/L]`.
fn bin_outside_band(j: usize, n: usize, oversampling: f64) -> bool {
    let folded = j.min(n - j) as f64;
    folded * 2.0 * oversampling > n as f64
}

/// True when bin `j` sits exactly on the band edge.
fn bin_on_edge(j: usize, n: usize, oversampling: f64) -> bool {
    let folded = j.min(n - j) as f64;
    folded * 2.0 * oversampling == n as f64
}

/// Per-bin density of the source on an `n`-point block, in FFT bin order,
/// rescaled so the block variance is exactly `sigma2_x`. Edge bins carry
/// half the in-band level so the rescaling is the identity whenever the
/// edge falls on a bin.
fn bin_psd(spec: &BandSpec, shape: &SourceShape, n: usize) -> Result<Vec<f64>> {
    let l = spec.oversampling();
    let mut bins = match shape {
        SourceShape::Flat => {
            let level = spec.flat_psd_level();
            (0..n)
                .map(|j| {
                    if bin_outside_band(j, n, l) {
                        0.0
                    } else if bin_on_edge(j, n, l) {
                        0.5 * level
                    } else {
                        level
                    }
                })
                .collect::<Vec<f64>>()
        }
        SourceShape::Custom(psd) => {
            if psd.grid_size() != n {
                return Err(Error::GridMismatch {
                    expected: n,
                    actual: psd.grid_size(),
                });
            }
            let values = psd.values();
            let mut bins = vec![0.0; n];
            for (j, slot) in bins.iter_mut().enumerate() {
                // Rotate from the [-pi, pi) grid to FFT bin order.
                let v = values[(j + n / 2) % n];
                if bin_outside_band(j, n, l) && v != 0.0 {
                    return Err(Error::domain(
                        "source_shape",
                        "custom spectrum has mass outside the band",
                    ));
                }
                *slot = v;
            }
            bins
        }
    };
    let mean = bins.iter().sum::<f64>() / n as f64;
    if mean <= 0.0 {
        return Err(Error::domain("source_shape", "spectrum carries no power"));
    }
    if let SourceShape::Custom(_) = shape {
        let rel = (mean - spec.sigma2_x()).abs() / spec.sigma2_x();
        if rel > 1e-6 {
            return Err(Error::domain(
                "source_shape",
                format!("custom spectrum integrates to {mean}, not sigma2_x"),
            ));
        }
    }
    let scale = spec.sigma2_x() / mean;
    for b in &mut bins {
        *b *= scale;
    }
    Ok(bins)
}

/// One stationary circular Gaussian block: independent Hermitian-symmetric
/// spectral coefficients with per-bin variance proportional to the density,
/// zero outside the band, inverse-transformed to the time domain.
fn synthesize_from_bins<R: Rng + ?Sized>(bins: &[f64], ffts: &BlockFfts, rng: &mut R) -> Vec<f64> {
    let n = bins.len();
    let nf = n as f64;
    let mut g = vec![Complex::new(0.0, 0.0); n];
    let z0: f64 = rng.sample(StandardNormal);
    g[0] = Complex::new((nf * bins[0]).sqrt() * z0, 0.0);
    let zn: f64 = rng.sample(StandardNormal);
    g[n / 2] = Complex::new((nf * bins[n / 2]).sqrt() * zn, 0.0);
    for k in 1..n / 2 {
        let sd = (0.5 * nf * bins[k]).sqrt();
        let re: f64 = rng.sample(StandardNormal);
        let im: f64 = rng.sample(StandardNormal);
        g[k] = Complex::new(sd * re, sd * im);
        g[n - k] = g[k].conj();
    }
    let mut buf = g;
    ffts.inverse.process(&mut buf);
    buf.iter().map(|v| v.re / nf).collect()
}

/// Draw one block of the source class member described by `shape`.
///
/// `len` must be even. The empirical variance converges to `sigma2_x` and
/// the periodogram carries no mass outside `[-pi/L, pi/L]` by construction.
pub fn synthesize_band_limited<R: Rng + ?Sized>(
    spec: &BandSpec,
    shape: &SourceShape,
    len: usize,
    rng: &mut R,
) -> Result<Vec<f64>> {
    if len < 8 || !len.is_multiple_of(2) {
        return Err(Error::domain("len", "must be even and >= 8"));
    }
    let bins = bin_psd(spec, shape, len)?;
    Ok(synthesize_from_bins(&bins, &BlockFfts::new(len), rng))
}

fn lowpass_with(x: &[f64], oversampling: f64, ffts: &BlockFfts) -> Vec<f64> {
    let n = x.len();
    let mut buf: Vec<Complex<f64>> = x.iter().map(|&v| Complex::new(v, 0.0)).collect();
    ffts.forward.process(&mut buf);
    for (j, v) in buf.iter_mut().enumerate() {
        if bin_outside_band(j, n, oversampling) {
            *v = Complex::new(0.0, 0.0);
        }
    }
    ffts.inverse.process(&mut buf);
    buf.iter().map(|v| v.re / n as f64).collect()
}

/// Ideal brick-wall lowpass as a per-block spectral projection: bins with
/// `|w| > pi/L` are zeroed, all others pass with unit gain.
pub fn lowpass_ideal(x: &[f64], oversampling: f64) -> Vec<f64> {
    lowpass_with(x, oversampling, &BlockFfts::new(x.len()))
}

/// Quantizer input sequence: `U_n = X_n - sum_k c_k N_{n-k}` with the
/// filter memory zeroed before the block.
fn feedback(x: f64, taps: &[f64], noise: &[f64], n: usize) -> f64 {
    let mut u = x;
    for (k, &c) in taps.iter().enumerate() {
        if n > k {
            u -= c * noise[n - k - 1];
        }
    }
    u
}

struct LoopCtx {
    ffts: BlockFfts,
    oversampling: f64,
}

/// Run the AWGN test-channel loop on one block. The filter memory starts
/// zeroed; the noise is i.i.d. `N(0, sigma2_sd)`.
pub fn run_awgn_loop<R: Rng + ?Sized>(
    x: &[f64],
    spec: &BandSpec,
    filter: &FirFilter,
    sigma2_sd: f64,
    rng: &mut R,
) -> Result<LoopTrace> {
    if !sigma2_sd.is_finite() || sigma2_sd <= 0.0 {
        return Err(Error::domain("sigma2_sd", "must be > 0"));
    }
    let ctx = LoopCtx {
        ffts: BlockFfts::new(x.len()),
        oversampling: spec.oversampling(),
    };
    Ok(awgn_block(x, filter, sigma2_sd.sqrt(), &ctx, rng))
}

fn awgn_block<R: Rng + ?Sized>(
    x: &[f64],
    filter: &FirFilter,
    sigma: f64,
    ctx: &LoopCtx,
    rng: &mut R,
) -> LoopTrace {
    let n = x.len();
    let taps = filter.taps();
    let mut u = Vec::with_capacity(n);
    let mut noise = Vec::with_capacity(n);
    for i in 0..n {
        u.push(feedback(x[i], taps, &noise, i));
        let z: f64 = rng.sample(StandardNormal);
        noise.push(sigma * z);
    }
    let channel_out: Vec<f64> = u.iter().zip(&noise).map(|(a, b)| a + b).collect();
    let reconstruction = lowpass_with(&channel_out, ctx.oversampling, &ctx.ffts);
    LoopTrace {
        quantizer_input: u,
        noise,
        dither: Vec::new(),
        reconstruction,
        overload: vec![false; n],
    }
}

/// Run the dithered scalar-quantizer loop on one block.
///
/// Per sample: form `U_n`, quantize `U_n + Z_n` with dither
/// `Z_n ~ Uniform[-step/2, step/2)`, subtract the dither, and feed the
/// quantization error `N_n = Q(U_n + Z_n) - (U_n + Z_n)` back through the
/// filter (saturated output when overloaded). The reconstruction is the
/// lowpass of `U_n + N_n`.
pub fn run_dithered_loop<R: Rng + ?Sized>(
    x: &[f64],
    spec: &BandSpec,
    filter: &FirFilter,
    quantizer: &QuantizerSpec,
    rng: &mut R,
) -> LoopTrace {
    let ctx = LoopCtx {
        ffts: BlockFfts::new(x.len()),
        oversampling: spec.oversampling(),
    };
    dithered_block(x, filter, quantizer, &ctx, rng)
}

fn dithered_block<R: Rng + ?Sized>(
    x: &[f64],
    filter: &FirFilter,
    quantizer: &QuantizerSpec,
    ctx: &LoopCtx,
    rng: &mut R,
) -> LoopTrace {
    let n = x.len();
    let taps = filter.taps();
    let step = quantizer.step();
    let mut u = Vec::with_capacity(n);
    let mut noise = Vec::with_capacity(n);
    let mut dither = Vec::with_capacity(n);
    let mut overload = Vec::with_capacity(n);
    for i in 0..n {
        let ui = feedback(x[i], taps, &noise, i);
        let z = (rng.random::<f64>() - 0.5) * step;
        let (level, ol) = quantizer.quantize(ui + z);
        u.push(ui);
        dither.push(z);
        noise.push(level - (ui + z));
        overload.push(ol);
    }
    let channel_out: Vec<f64> = u.iter().zip(&noise).map(|(a, b)| a + b).collect();
    let reconstruction = lowpass_with(&channel_out, ctx.oversampling, &ctx.ffts);
    LoopTrace {
        quantizer_input: u,
        noise,
        dither,
        reconstruction,
        overload,
    }
}

struct BlockStat {
    mse: f64,
    overloaded_samples: usize,
}

/// Run `num_blocks` independent blocks and aggregate distortion and
/// overload statistics.
///
/// Randomness comes from a ChaCha12 generator seeded with `cfg.seed`; block
/// `b` uses stream `b`, so results are bit-reproducible and independent of
/// scheduling. Per-block means are aggregated in block order.
pub fn monte_carlo(cfg: &SimConfig) -> Result<SimReport> {
    cfg.validate()?;
    let n = cfg.block_len;
    let guard = cfg.effective_guard();
    let bins = bin_psd(&cfg.spec, &cfg.source_shape, n)?;
    let l = cfg.spec.oversampling();

    let stats: Vec<BlockStat> = (0..cfg.num_blocks)
        .into_par_iter()
        .map_init(
            || LoopCtx {
                ffts: BlockFfts::new(n),
                oversampling: l,
            },
            |ctx, b| {
                let mut rng = ChaCha12Rng::seed_from_u64(cfg.seed);
                rng.set_stream(b as u64);
                let x = synthesize_from_bins(&bins, &ctx.ffts, &mut rng);
                let trace = match &cfg.noise_model {
                    NoiseModel::Awgn { sigma2 } => {
                        awgn_block(&x, &cfg.filter, sigma2.sqrt(), ctx, &mut rng)
                    }
                    NoiseModel::Dithered(q) => dithered_block(&x, &cfg.filter, q, ctx, &mut rng),
                };
                let mut sq = 0.0;
                for i in guard..n {
                    let e = trace.reconstruction[i] - x[i];
                    sq += e * e;
                }
                BlockStat {
                    mse: sq / (n - guard) as f64,
                    overloaded_samples: trace.overload.iter().filter(|&&f| f).count(),
                }
            },
        )
        .collect();

    let blocks = stats.len();
    let mean_and_stderr = |values: &[f64]| -> (f64, f64) {
        let b = values.len() as f64;
        let mean = values.iter().sum::<f64>() / b;
        if values.len() < 2 {
            return (mean, 0.0);
        }
        let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (b - 1.0);
        (mean, (var / b).sqrt())
    };

    let all_mse: Vec<f64> = stats.iter().map(|s| s.mse).collect();
    let (mse_all, mse_all_stderr) = mean_and_stderr(&all_mse);
    let clean_mse: Vec<f64> = stats
        .iter()
        .filter(|s| s.overloaded_samples == 0)
        .map(|s| s.mse)
        .collect();
    let (mse_conditional, mse_conditional_stderr) = if clean_mse.is_empty() {
        (None, None)
    } else {
        let (m, s) = mean_and_stderr(&clean_mse);
        (Some(m), Some(s))
    };

    let overloaded_blocks = blocks - clean_mse.len();
    let overloaded_samples: usize = stats.iter().map(|s| s.overloaded_samples).sum();
    let binom_stderr = |p: f64, trials: f64| (p * (1.0 - p) / trials).sqrt();
    let overload_block_rate = overloaded_blocks as f64 / blocks as f64;
    let overload_sample_rate = overloaded_samples as f64 / (blocks * n) as f64;

    let sigma2 = cfg.noise_model.noise_variance();
    let scalar_info_bits =
        0.5 * (1.0 + total_energy(&cfg.filter) + cfg.spec.sigma2_x() / sigma2).log2();
    let bound_pol = match &cfg.noise_model {
        NoiseModel::Awgn { .. } => None,
        NoiseModel::Dithered(q) => Some(overload_bound(q.rate_bits() as f64, scalar_info_bits, n)),
    };

    Ok(SimReport {
        blocks,
        block_len: n,
        guard,
        seed: cfg.seed,
        mse_all,
        mse_all_stderr,
        mse_conditional,
        mse_conditional_stderr,
        overload_block_rate,
        overload_block_rate_stderr: binom_stderr(overload_block_rate, blocks as f64),
        overload_sample_rate,
        overload_sample_rate_stderr: binom_stderr(overload_sample_rate, (blocks * n) as f64),
        overloaded_blocks,
        overloaded_samples,
        analytic_d: sigma2 * band_energy(&cfg.filter, l),
        scalar_info_bits,
        bound_pol,
    })
}

/// Re-run one block of a configuration and return its source and full
/// trace. Block `b` reproduces bit-exactly what [`monte_carlo`] computed
/// for that block, because both derive the block's randomness from stream
/// `b` of the seeded generator.
pub fn trace_block(cfg: &SimConfig, block: usize) -> Result<(Vec<f64>, LoopTrace)> {
    cfg.validate()?;
    if block >= cfg.num_blocks {
        return Err(Error::domain("block", "index past num_blocks"));
    }
    let bins = bin_psd(&cfg.spec, &cfg.source_shape, cfg.block_len)?;
    let ctx = LoopCtx {
        ffts: BlockFfts::new(cfg.block_len),
        oversampling: cfg.spec.oversampling(),
    };
    let mut rng = ChaCha12Rng::seed_from_u64(cfg.seed);
    rng.set_stream(block as u64);
    let x = synthesize_from_bins(&bins, &ctx.ffts, &mut rng);
    let trace = match &cfg.noise_model {
        NoiseModel::Awgn { sigma2 } => awgn_block(&x, &cfg.filter, sigma2.sqrt(), &ctx, &mut rng),
        NoiseModel::Dithered(q) => dithered_block(&x, &cfg.filter, q, &ctx, &mut rng),
    };
    Ok((x, trace))
}

/// Union bound `2N exp(-(3/2) * 2^(2(R - I)))` on the probability that any
/// sample in a length-`N` block overloads a rate-`R` quantizer when the
/// loop's scalar mutual information is `I`.
pub fn overload_bound(rate_bits: f64, info_bits: f64, block_len: usize) -> f64 {
    2.0 * block_len as f64 * (-1.5 * (2.0 * (rate_bits - info_bits)).exp2()).exp()
}

/// Additive rate penalty `delta(P_ol) = (1/2) log2(-(2/3) ln(P_ol / 2N))`
/// that drives the block overload probability below `p_ol`; plugging
/// `R = I + delta` back into [`overload_bound`] returns exactly `p_ol`.
pub fn overload_rate_penalty(p_ol: f64, block_len: usize) -> Result<f64> {
    if !(p_ol > 0.0 && p_ol < 1.0) {
        return Err(Error::domain(
            "p_ol",
            format!("must lie in (0, 1), got {p_ol}"),
        ));
    }
    if block_len == 0 {
        return Err(Error::domain("block_len", "must be >= 1"));
    }
    let ratio = 2.0 * block_len as f64 / p_ol;
    Ok(0.5 * ((2.0 / 3.0) * ratio.ln()).log2())
}
