//! Least-squares fitting of the CPU exponential-decay model and the linear
//! GPU model from profiling samples.

use super::{CpuLatencyCoeffs, GpuLatencyCoeffs};
use crate::error::{Error, Result};

const GAMMA_SCAN_POINTS: usize = 200;
const GAMMA_TOLERANCE: f64 = 1e-9;
const MIN_CPU_CORE_VALUES: usize = 4;
/// Tolerance on `ln(beta)` in the inner refinement.
const BETA_TOLERANCE: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CpuFit {
    pub coeffs: CpuLatencyCoeffs,
    /// Root-mean-square residual over the samples, in seconds.
    pub rms: f64,
    /// The samples show no decay in cores; the fit is the flat line
    /// `gamma = mean latency` with `alpha = 0`.
    pub degenerate: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GpuFit {
    pub coeffs: GpuLatencyCoeffs,
    pub rms: f64,
    /// Set when the fitted slope is not positive, i.e. the profile is too
    /// noisy or too narrow to be trusted.
    pub warning: Option<String>,
}

fn distinct_count(mut xs: Vec<f64>) -> usize {
    xs.sort_by(f64::total_cmp);
    xs.dedup();
    xs.len()
}

/// Ordinary least squares `y = intercept + slope * x`.
fn linear_regression(points: impl Iterator<Item = (f64, f64)> + Clone) -> (f64, f64) {
    let n = points.clone().count() as f64;
    let (sx, sy) = points.clone().fold((0.0, 0.0), |(a, b), (x, y)| (a + x, b + y));
    let (mx, my) = (sx / n, sy / n);
    let (sxy, sxx) = points.fold((0.0, 0.0), |(a, b), (x, y)| {
        let dx = x - mx;
        (a + dx * (y - my), b + dx * dx)
    });
    let slope = sxy / sxx;
    (my - slope * mx, slope)
}

fn sse(samples: &[(f64, f64)], k: &CpuLatencyCoeffs) -> f64 {
    samples.iter().map(|&(c, l)| (k.latency(c) - l).powi(2)).sum()
}

/// Best `alpha` for fixed `beta` and `gamma`, by linear least squares.
fn alpha_at(samples: &[(f64, f64)], beta: f64, gamma: f64) -> f64 {
    let (num, den) = samples.iter().fold((0.0, 0.0), |(n, d), &(c, l)| {
        let e = (-c / beta).exp();
        (n + (l - gamma) * e, d + e * e)
    });
    if den > 0.0 { (num / den).max(0.0) } else { 0.0 }
}

/// Fit at a fixed floor `gamma`.
///
/// Regressing `ln(latency - gamma)` on cores gives a first `(alpha, beta)`;
/// the log transform overweights points near the floor, so `beta` is then
/// refined against the squared residuals in latency space with `alpha`
/// re-solved in closed form. Returns `None` when the data do not decay at
/// this gamma.
fn fit_at_gamma(samples: &[(f64, f64)], gamma: f64) -> Option<(CpuLatencyCoeffs, f64)> {
    let pts = samples.iter().map(move |&(c, l)| (c, (l - gamma).ln()));
    if pts.clone().any(|(_, y)| !y.is_finite()) {
        return None;
    }
    let (intercept, slope) = linear_regression(pts);
    if !(slope < 0.0) {
        return None;
    }
    let seed = CpuLatencyCoeffs { alpha: intercept.exp(), beta: -1.0 / slope, gamma };
    if !(seed.alpha.is_finite() && seed.beta.is_finite()) {
        return None;
    }
    let at = |ln_beta: f64| {
        let beta = ln_beta.exp();
        CpuLatencyCoeffs { alpha: alpha_at(samples, beta, gamma), beta, gamma }
    };
    let ln0 = seed.beta.ln();
    let ln_best = golden_section(|x| sse(samples, &at(x)), ln0 - 3.0, ln0 + 3.0, BETA_TOLERANCE);
    let refined = at(ln_best);
    let (e_seed, e_ref) = (sse(samples, &seed), sse(samples, &refined));
    if e_ref < e_seed && refined.alpha > 0.0 {
        Some((refined, e_ref))
    } else {
        Some((seed, e_seed))
    }
}

/// Fits `alpha * exp(-c / beta) + gamma` to `(cores, latency)` samples.
///
/// The floor `gamma` is scanned over `[0, min latency)` and refined by
/// golden-section search; for each candidate the remaining two parameters
/// come from [`fit_at_gamma`]. The objective is the sum of squared
/// residuals in latency space.
pub fn fit_cpu_coeffs(samples: &[(f64, f64)]) -> Result<CpuFit> {
    for &(c, l) in samples {
        if !(l.is_finite() && l > 0.0) {
            return Err(Error::InvalidSample(format!("latency {l} at {c} cores must be positive")));
        }
        if !(c.is_finite() && c > 0.0) {
            return Err(Error::InvalidSample(format!("core count {c} must be positive")));
        }
    }
    let distinct = distinct_count(samples.iter().map(|s| s.0).collect());
    if distinct < MIN_CPU_CORE_VALUES {
        return Err(Error::InsufficientData(format!(
            "need at least {MIN_CPU_CORE_VALUES} distinct core values, got {distinct}"
        )));
    }

    let l_min = samples.iter().map(|s| s.1).fold(f64::INFINITY, f64::min);
    let grid = |k: usize| l_min * k as f64 / GAMMA_SCAN_POINTS as f64;
    let objective = |g: f64| fit_at_gamma(samples, g).map_or(f64::INFINITY, |(_, sse)| sse);

    let mut best: Option<(usize, f64)> = None;
    for k in 0..GAMMA_SCAN_POINTS {
        let sse = objective(grid(k));
        // strict comparison keeps the smaller gamma on ties
        if sse.is_finite() && best.is_none_or(|(_, b)| sse < b) {
            best = Some((k, sse));
        }
    }

    let Some((k, _)) = best else {
        return Ok(flat_fit(samples));
    };

    let lo = if k == 0 { 0.0 } else { grid(k - 1) };
    // gamma must stay strictly below the smallest sample
    let hi = grid(k + 1).min(l_min * (1.0 - 1e-12));
    let refined = golden_section(objective, lo, hi, GAMMA_TOLERANCE);

    let mut gamma = grid(k);
    if objective(refined) < objective(gamma) {
        gamma = refined;
    }
    let (coeffs, sse) = fit_at_gamma(samples, gamma).expect("best gamma has a valid fit");
    Ok(CpuFit { coeffs, rms: (sse / samples.len() as f64).sqrt(), degenerate: false })
}

fn flat_fit(samples: &[(f64, f64)]) -> CpuFit {
    let n = samples.len() as f64;
    let mean = samples.iter().map(|s| s.1).sum::<f64>() / n;
    let sse: f64 = samples.iter().map(|s| (s.1 - mean).powi(2)).sum();
    CpuFit {
        coeffs: CpuLatencyCoeffs { alpha: 0.0, beta: 1.0, gamma: mean },
        rms: (sse / n).sqrt(),
        degenerate: true,
    }
}

fn golden_section(f: impl Fn(f64) -> f64, mut a: f64, mut b: f64, tol: f64) -> f64 {
    let inv_phi = (5f64.sqrt() - 1.0) / 2.0;
    let mut c = b - inv_phi * (b - a);
    let mut d = a + inv_phi * (b - a);
    let (mut fc, mut fd) = (f(c), f(d));
    while (b - a).abs() > tol {
        if fc <= fd {
            b = d;
            d = c;
            fd = fc;
            c = b - inv_phi * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + inv_phi * (b - a);
            fd = f(d);
        }
    }
    0.5 * (a + b)
}

/// Least-squares line through `(batch, latency)` samples.
pub fn fit_gpu_coeffs(samples: &[(u32, f64)]) -> Result<GpuFit> {
    for &(b, l) in samples {
        if !(l.is_finite() && l > 0.0) {
            return Err(Error::InvalidSample(format!("latency {l} at batch {b} must be positive")));
        }
        if b == 0 {
            return Err(Error::InvalidSample("batch size 0".into()));
        }
    }
    let distinct = distinct_count(samples.iter().map(|s| s.0 as f64).collect());
    if distinct < 2 {
        return Err(Error::InsufficientData(format!(
            "need at least 2 distinct batch sizes, got {distinct}"
        )));
    }
    let (xi2, xi1) = linear_regression(samples.iter().map(|&(b, l)| (b as f64, l)));
    let coeffs = GpuLatencyCoeffs { xi1, xi2 };
    let sse: f64 = samples.iter().map(|&(b, l)| (coeffs.base_latency(b) - l).powi(2)).sum();
    let warning = (xi1 <= 0.0).then(|| {
        format!("fitted GPU slope {xi1} is not positive; the profile is ill-conditioned")
    });
    Ok(GpuFit { coeffs, rms: (sse / samples.len() as f64).sqrt(), warning })
}
