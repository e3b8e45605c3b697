//! Optimal feedback-filter construction.
//!
//! The constrained design problem is linear MMSE prediction of a virtual
//! flat band-limited source `S` from the past of the noisy process `S + W`,
//! where `W` is i.i.d. with variance `L * D`. Its normal equations are
//! Toeplitz and solved by Levinson recursion with a dense Cholesky fallback.
//! The unconstrained problem is solved by spectral factorization of the
//! ideal two-level noise shape via the real cepstrum.

use std::f64::consts::PI;

use rustfft::num_complex::Complex;
use rustfft::FftPlanner;

use crate::channels::rate_lower_bound;
use crate::error::{Error, Result};
use crate::spectra::{
    flat_band_autocorr, ntf_power_on_grid, weighted_band_autocorr_seq, BandSpec, FirFilter,
    FrequencyWeight, DEFAULT_GRID_SIZE,
};

/// Reflection-coefficient magnitude beyond which the Levinson recursion is
/// considered ill-conditioned and the dense solver takes over.
const REFLECTION_GUARD: f64 = 1.0 - 1e-12;

/// The normal equations of the virtual prediction problem: predict `S_n`
/// from `p` past samples of `S + W`.
#[derive(Debug, Clone, PartialEq)]
pub struct PredictionProblem {
    /// `R_Y[0..=p]` with `R_Y[k] = R_S[k] + noise_var * [k == 0]`.
    autocorr: Vec<f64>,
    /// `R_S[1..=p]`, the cross-correlation between target and regressors.
    cross: Vec<f64>,
    /// Variance `L * D` of the i.i.d. noise `W`.
    noise_var: f64,
    order: usize,
}

impl PredictionProblem {
    /// Problem for the flat source under plain MSE.
    pub fn mse(spec: &BandSpec, d: f64, order: usize) -> Result<Self> {
        check_distortion(d)?;
        check_order(order)?;
        let rs: Vec<f64> = (0..=order as i64)
            .map(|k| flat_band_autocorr(spec, k))
            .collect();
        Ok(Self::from_source_autocorr(rs, spec.oversampling() * d))
    }

    /// Problem for the weighted virtual source with in-band density
    /// `L * sigma2_x * P(w)`.
    pub fn fwmse(
        spec: &BandSpec,
        weight: &FrequencyWeight,
        d_fwmse: f64,
        order: usize,
    ) -> Result<Self> {
        check_distortion(d_fwmse)?;
        check_order(order)?;
        let rs = weighted_band_autocorr_seq(spec, weight, order);
        if rs[0] <= 0.0 {
            return Err(Error::Degenerate(
                "weight is identically zero on the band; nothing to predict".into(),
            ));
        }
        Ok(Self::from_source_autocorr(
            rs,
            spec.oversampling() * d_fwmse,
        ))
    }

    fn from_source_autocorr(rs: Vec<f64>, noise_var: f64) -> Self {
        let order = rs.len() - 1;
        let mut autocorr = rs.clone();
        autocorr[0] += noise_var;
        let cross = rs[1..].to_vec();
        Self {
            autocorr,
            cross,
            noise_var,
            order,
        }
    }

    pub fn autocorr(&self) -> &[f64] {
        &self.autocorr
    }

    pub fn cross(&self) -> &[f64] {
        &self.cross
    }

    pub fn noise_var(&self) -> f64 {
        self.noise_var
    }

    pub fn order(&self) -> usize {
        self.order
    }

    /// Solve the normal equations; returns the predictor taps.
    ///
    /// The prediction of `S_n` from past noisy samples and the one-step
    /// prediction of `S_n + W_n` from its own past share the same optimal
    /// taps, because `W` is white and the filter is strictly causal; so the
    /// right-hand side equals the shifted autocorrelation of `S + W` and the
    /// classical Levinson-Durbin recursion applies.
    pub fn solve(&self) -> Result<Vec<f64>> {
        match levinson_durbin(&self.autocorr, self.order) {
            Some(taps) => Ok(taps),
            None => dense_toeplitz_solve(&self.autocorr[..self.order], &self.cross),
        }
    }

    /// Max-norm residual of `Toeplitz(R_Y) * taps - R_S[1..]`.
    pub fn residual(&self, taps: &[f64]) -> f64 {
        let p = self.order;
        let mut worst = 0.0f64;
        for i in 0..p {
            let mut acc = 0.0;
            for j in 0..p {
                acc += self.autocorr[(i as i64 - j as i64).unsigned_abs() as usize] * taps[j];
            }
            worst = worst.max((acc - self.cross[i]).abs());
        }
        worst
    }
}

/// Levinson-Durbin recursion for the Yule-Walker system
/// `Toeplitz(r[0..p]) a = r[1..=p]`.
///
/// Returns `None` when a reflection coefficient approaches the unit circle
/// or the prediction error loses positivity; callers fall back to a dense
/// factorization in that case.
fn levinson_durbin(r: &[f64], order: usize) -> Option<Vec<f64>> {
    if r[0] <= 0.0 {
        return None;
    }
    let mut a = vec![0.0; order];
    let mut err = r[0];
    for i in 0..order {
        let mut acc = r[i + 1];
        for j in 0..i {
            acc -= a[j] * r[i - j];
        }
        let k = acc / err;
        if !k.is_finite() || k.abs() > REFLECTION_GUARD {
            return None;
        }
        for j in 0..i.div_ceil(2) {
            let lo = a[j];
            let hi = a[i - 1 - j];
            a[j] = lo - k * hi;
            a[i - 1 - j] = hi - k * lo;
        }
        a[i] = k;
        err *= 1.0 - k * k;
        if err <= 0.0 || !err.is_finite() {
            return None;
        }
    }
    Some(a)
}

/// Dense Cholesky solve of the symmetric positive definite Toeplitz system
/// with first row `r` and right-hand side `rhs`.
fn dense_toeplitz_solve(r: &[f64], rhs: &[f64]) -> Result<Vec<f64>> {
    let n = rhs.len();
    let mut m = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..n {
            m[i * n + j] = r[(i as i64 - j as i64).unsigned_abs() as usize];
        }
    }
    // In-place Cholesky, lower triangle.
    for k in 0..n {
        let mut diag = m[k * n + k];
        for t in 0..k {
            diag -= m[k * n + t] * m[k * n + t];
        }
        if diag <= 0.0 || !diag.is_finite() {
            return Err(Error::Singular(format!(
                "normal equations lost positive definiteness at pivot {k}"
            )));
        }
        let d = diag.sqrt();
        m[k * n + k] = d;
        for i in k + 1..n {
            let mut v = m[i * n + k];
            for t in 0..k {
                v -= m[i * n + t] * m[k * n + t];
            }
            m[i * n + k] = v / d;
        }
    }
    let mut y = rhs.to_vec();
    for i in 0..n {
        for t in 0..i {
            y[i] -= m[i * n + t] * y[t];
        }
        y[i] /= m[i * n + i];
    }
    for i in (0..n).rev() {
        for t in i + 1..n {
            y[i] -= m[t * n + i] * y[t];
        }
        y[i] /= m[i * n + i];
    }
    Ok(y)
}

/// Result of a filter design, with the quality numbers a caller needs to
/// judge it.
#[derive(Debug, Clone, PartialEq)]
pub struct DesignResult {
    pub filter: FirFilter,
    /// Achieved prediction-error variance `E(S_n - c * (S + W)_n)^2`.
    pub pred_error_var: f64,
    /// `(1/2) * log2(1 + pred_error_var / (L * D))`.
    pub rate_bits: f64,
    pub diagnostics: Diagnostics,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Diagnostics {
    /// Achieved rate minus the filter-independent lower bound.
    pub rate_gap_bits: f64,
    /// Max-norm residual of the normal equations (predictor designs).
    pub normal_eq_residual: Option<f64>,
    /// Spectral-factorization quality (unconstrained designs).
    pub factorization: Option<FactorizationDiagnostics>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FactorizationDiagnostics {
    /// Transition half-width actually applied after clamping.
    pub transition_half_width: f64,
    /// `|a_0 - 1|` of the minimum-phase factor before truncation.
    pub leading_coeff_error: f64,
    /// Grid mean of `log |1 - C(w)|^2` of the truncated filter.
    pub log_integral: f64,
    /// Max relative deviation of the achieved `|1 - C(w)|^2` from the
    /// two-level target, measured outside the transition regions.
    pub max_level_deviation: f64,
    /// Energy of the discarded impulse-response tail.
    pub truncation_tail_energy: f64,
}

fn check_distortion(d: f64) -> Result<()> {
    if !d.is_finite() || d <= 0.0 {
        return Err(Error::domain("d", format!("must be > 0, got {d}")));
    }
    Ok(())
}

fn check_order(order: usize) -> Result<()> {
    if order == 0 {
        return Err(Error::domain("order", "must be >= 1"));
    }
    Ok(())
}

/// Evaluate the prediction objective `E(S_n - c * (S + W)_n)^2` for an
/// arbitrary filter:
/// `R_S[0] - 2 sum_j c_j R_S[j] + sum_{j,k} c_j c_k (R_S[j-k] + L*D*[j=k])`.
///
/// With `weight` supplied, `R_S` comes from the weighted virtual source.
pub fn prediction_objective(
    spec: &BandSpec,
    weight: Option<&FrequencyWeight>,
    d: f64,
    filter: &FirFilter,
) -> Result<f64> {
    check_distortion(d)?;
    let p = filter.order();
    let rs: Vec<f64> = match weight {
        None => (0..=p as i64)
            .map(|k| flat_band_autocorr(spec, k))
            .collect(),
        Some(w) => weighted_band_autocorr_seq(spec, w, p),
    };
    let c = filter.taps();
    let noise_var = spec.oversampling() * d;
    let mut obj = rs[0];
    for (j, &cj) in c.iter().enumerate() {
        obj -= 2.0 * cj * rs[j + 1];
    }
    // Quadratic form through the tap autocorrelation rho[m] = sum c_j c_{j+m}.
    let mut rho0 = 0.0;
    for &cj in c {
        rho0 += cj * cj;
    }
    obj += rho0 * (rs[0] + noise_var);
    for m in 1..p {
        let mut rho = 0.0;
        for j in 0..p - m {
            rho += c[j] * c[j + m];
        }
        obj += 2.0 * rho * rs[m];
    }
    Ok(obj)
}

fn predictor_design(
    spec: &BandSpec,
    problem: &PredictionProblem,
    d: f64,
    weight: Option<&FrequencyWeight>,
) -> Result<DesignResult> {
    let taps = problem.solve()?;
    let residual = problem.residual(&taps);
    let filter = FirFilter::new(taps)?;
    let pred_error_var = prediction_objective(spec, weight, d, &filter)?;
    let rate_bits = 0.5 * (1.0 + pred_error_var / problem.noise_var()).log2();
    let rate_gap_bits = rate_bits - rate_lower_bound(spec, d)?;
    Ok(DesignResult {
        filter,
        pred_error_var,
        rate_bits,
        diagnostics: Diagnostics {
            rate_gap_bits,
            normal_eq_residual: Some(residual),
            factorization: None,
        },
    })
}

/// Optimal `p`-tap feedback filter at target distortion `d`: the MMSE
/// predictor of the flat virtual source from `p` past noisy samples.
pub fn design_fir_predictor(spec: &BandSpec, d: f64, order: usize) -> Result<DesignResult> {
    let problem = PredictionProblem::mse(spec, d, order)?;
    predictor_design(spec, &problem, d, None)
}

/// Frequency-weighted variant: identical machinery with the weighted source
/// autocorrelation and noise variance `L * d_fwmse`.
pub fn design_fwmse_predictor(
    spec: &BandSpec,
    weight: &FrequencyWeight,
    d_fwmse: f64,
    order: usize,
) -> Result<DesignResult> {
    let problem = PredictionProblem::fwmse(spec, weight, d_fwmse, order)?;
    predictor_design(spec, &problem, d_fwmse, Some(weight))
}

/// Infinite-order limit of the constrained designs.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InfiniteOrderLimit {
    /// Limit of the prediction-error variance as the order grows.
    pub pred_limit: f64,
    /// Entropy power `(L*D) * (1 + sigma2_x/D)^(1/L)` of the noisy virtual
    /// process `S + W`.
    pub entropy_power: f64,
}

/// Entropy power of `S + W` and the infinite-order prediction-error
/// variance it implies. The innovation of `S + W` still contains the
/// current `W_n`, so the limit of `E(S - c*(S+W))^2` is the entropy power
/// minus `L * D`.
pub fn entropy_power_limit(spec: &BandSpec, d: f64) -> Result<InfiniteOrderLimit> {
    check_distortion(d)?;
    let l = spec.oversampling();
    let noise_var = l * d;
    let entropy_power = noise_var * (1.0 + spec.sigma2_x() / d).powf(1.0 / l);
    Ok(InfiniteOrderLimit {
        pred_limit: entropy_power - noise_var,
        entropy_power,
    })
}

/// In-band and out-of-band levels of the ideal two-level `|1 - C(w)|^2`
/// at distortion `d`: `(1 + sigma2_x/d)^(-(L-1)/L)` inside the band and
/// `(1 + sigma2_x/d)^(1/L)` outside. Their log-integral over the circle is
/// zero, which is what admits a monic minimum-phase factor.
pub fn two_level_response(spec: &BandSpec, d: f64) -> Result<(f64, f64)> {
    check_distortion(d)?;
    let l = spec.oversampling();
    let k = 1.0 + spec.sigma2_x() / d;
    Ok((k.powf(-(l - 1.0) / l), k.powf(1.0 / l)))
}

/// Unconstrained design at the default transform size.
///
/// See [`design_unconstrained_on_grid`].
pub fn design_unconstrained(
    spec: &BandSpec,
    d: f64,
    m_taps: usize,
    transition_half_width: f64,
) -> Result<DesignResult> {
    let grid = DEFAULT_GRID_SIZE.max((8 * m_taps).next_power_of_two());
    design_unconstrained_on_grid(spec, d, m_taps, transition_half_width, grid)
}

/// Best unconstrained feedback filter at distortion `d`, truncated to
/// `m_taps` coefficients of the noise transfer function `A = 1 - C`.
///
/// The target log-magnitude is the two-level response with the levels
/// joined by a raised-cosine transition at the band edges, re-centered to a
/// zero grid mean so that the minimum-phase factor is monic and `C` stays
/// strictly causal. The factor is computed by the real-cepstrum method and
/// truncated.
///
/// `transition_half_width` is clamped to `8*pi / m_taps`: a transition wider
/// than the tap budget can resolve buys no extra truncation accuracy and
/// only inflates the rate gap, which grows linearly in the applied width.
/// The applied value is reported in the diagnostics, as are the rate gap,
/// the log-integral, and the truncation tail energy; quality shortfalls are
/// reported there rather than turned into errors.
pub fn design_unconstrained_on_grid(
    spec: &BandSpec,
    d: f64,
    m_taps: usize,
    transition_half_width: f64,
    grid_size: usize,
) -> Result<DesignResult> {
    check_distortion(d)?;
    if m_taps < 16 {
        return Err(Error::domain("m_taps", "must be >= 16"));
    }
    if !grid_size.is_power_of_two() || grid_size < 4 * m_taps {
        return Err(Error::domain(
            "grid_size",
            format!("must be a power of two >= 4 * m_taps, got {grid_size}"),
        ));
    }
    let l = spec.oversampling();
    let half_band_gap = 0.5 * PI * (1.0 - 1.0 / l);
    if !transition_half_width.is_finite()
        || transition_half_width < 0.0
        || (transition_half_width > 0.0 && transition_half_width >= half_band_gap)
    {
        return Err(Error::domain(
            "transition_half_width",
            format!("must lie in [0, pi*(1 - 1/L)/2), got {transition_half_width}"),
        ));
    }

    let bound = rate_lower_bound(spec, d)?;
    if l == 1.0 {
        // Both levels coincide; there is nothing to shape.
        let filter = FirFilter::zero();
        let pred_error_var = prediction_objective(spec, None, d, &filter)?;
        let rate_bits = 0.5 * (1.0 + pred_error_var / (l * d)).log2();
        return Ok(DesignResult {
            filter,
            pred_error_var,
            rate_bits,
            diagnostics: Diagnostics {
                rate_gap_bits: rate_bits - bound,
                normal_eq_residual: None,
                factorization: Some(FactorizationDiagnostics {
                    transition_half_width: 0.0,
                    leading_coeff_error: 0.0,
                    log_integral: 0.0,
                    max_level_deviation: 0.0,
                    truncation_tail_energy: 0.0,
                }),
            },
        });
    }

    let (lo, hi) = two_level_response(spec, d)?;
    let (log_lo, log_hi) = (lo.ln(), hi.ln());
    let edge = spec.band_edge();
    let wt = transition_half_width.min(8.0 * PI / m_taps as f64);

    // Target log |A(w)|^2 in FFT bin order.
    let m = grid_size;
    let mut log_target = vec![0.0f64; m];
    for (j, slot) in log_target.iter_mut().enumerate() {
        let omega = if j <= m / 2 {
            2.0 * PI * j as f64 / m as f64
        } else {
            2.0 * PI * j as f64 / m as f64 - 2.0 * PI
        };
        let dist = omega.abs() - edge;
        *slot = if dist <= -wt {
            log_lo
        } else if dist >= wt {
            log_hi
        } else {
            let phase = 0.5 * (1.0 - (PI * (dist + wt) / (2.0 * wt)).cos());
            log_lo + (log_hi - log_lo) * phase
        };
    }
    let mean = log_target.iter().sum::<f64>() / m as f64;
    for v in &mut log_target {
        *v -= mean;
    }

    // Real cepstrum of the log-spectrum, folded onto nonnegative quefrency
    // to select the minimum-phase factor.
    let mut planner = FftPlanner::new();
    let inverse = planner.plan_fft_inverse(m);
    let forward = planner.plan_fft_forward(m);

    let mut buf: Vec<Complex<f64>> = log_target.iter().map(|&v| Complex::new(v, 0.0)).collect();
    inverse.process(&mut buf);
    let scale = 1.0 / m as f64;
    let mut folded = vec![Complex::new(0.0, 0.0); m];
    folded[0] = Complex::new(0.5 * buf[0].re * scale, 0.0);
    for k in 1..m / 2 {
        folded[k] = Complex::new(buf[k].re * scale, 0.0);
    }
    folded[m / 2] = Complex::new(0.5 * buf[m / 2].re * scale, 0.0);

    forward.process(&mut folded);
    for v in &mut folded {
        *v = v.exp();
    }
    inverse.process(&mut folded);
    let impulse: Vec<f64> = folded.iter().map(|v| v.re * scale).collect();

    let leading_coeff_error = (impulse[0] - 1.0).abs();
    let truncation_tail_energy: f64 = impulse[m_taps..].iter().map(|a| a * a).sum();
    let taps: Vec<f64> = impulse[1..m_taps].iter().map(|a| -a).collect();
    let filter = FirFilter::new(taps)?;

    // Quality of the truncated filter against the ideal two-level shape.
    let achieved = ntf_power_on_grid(&filter, m);
    let mut max_level_deviation = 0.0f64;
    let mut log_integral = 0.0f64;
    for (idx, &value) in achieved.iter().enumerate() {
        log_integral += value.ln();
        let omega = -PI + 2.0 * PI * idx as f64 / m as f64;
        let dist = omega.abs() - edge;
        if dist.abs() >= wt {
            let target = if dist < 0.0 { lo } else { hi };
            max_level_deviation = max_level_deviation.max((value / target - 1.0).abs());
        }
    }
    log_integral /= m as f64;

    let pred_error_var = prediction_objective(spec, None, d, &filter)?;
    let rate_bits = 0.5 * (1.0 + pred_error_var / (l * d)).log2();
    Ok(DesignResult {
        filter,
        pred_error_var,
        rate_bits,
        diagnostics: Diagnostics {
            rate_gap_bits: rate_bits - bound,
            normal_eq_residual: None,
            factorization: Some(FactorizationDiagnostics {
                transition_half_width: wt,
                leading_coeff_error,
                log_integral,
                max_level_deviation,
                truncation_tail_energy,
            }),
        },
    })
}
