//! Recovering the unit time slice from one exclusive-GPU latency and one
//! maximum latency observed on a partial GPU.

use crate::error::{Error, Result};

pub const DEFAULT_TAU_RANGE: (f64, f64) = (1e-4, 0.1);

/// Relative residual under which two candidate slices are considered
/// equally consistent with the observation.
const ALIAS_TOLERANCE: f64 = 1e-9;
const ACCEPT_TOLERANCE: f64 = 0.10;

#[derive(Debug, Clone, PartialEq)]
pub struct TauEstimate {
    pub tau: f64,
    /// Relative error `|predicted - observed| / observed` at `tau`.
    pub residual: f64,
    /// Every slice length that reproduces the observation equally well,
    /// descending. A single `(l0, max)` pair does not always pin down tau:
    /// the ceiling in the maximum-latency model lets `tau / k` explain the
    /// same measurement for several integers `k`.
    pub aliases: Vec<f64>,
}

/// Solves the maximum-latency model for `tau`.
///
/// Within the branch where the ceiling equals `k` the prediction is linear in
/// tau, so every branch is solved exactly and the best-fitting branch wins;
/// among exact fits the largest slice is reported.
pub fn estimate_tau(l0: f64, observed_max: f64, m: u32, m_max: u32, range: (f64, f64)) -> Result<TauEstimate> {
    let (lo, hi) = range;
    if !(l0 > 0.0 && observed_max.is_finite()) {
        return Err(Error::InvalidParameter(format!("l0 must be positive (got {l0})")));
    }
    if !(observed_max > l0) {
        return Err(Error::InvalidParameter(format!(
            "observed maximum {observed_max} must exceed l0 {l0}"
        )));
    }
    if m < 1 || m >= m_max {
        return Err(Error::InvalidParameter(format!("memory {m} must lie in [1, {m_max})")));
    }
    if !(lo > 0.0 && hi > lo) {
        return Err(Error::InvalidParameter(format!("invalid tau range ({lo}, {hi}]")));
    }
    let (mf, mmax) = (m as f64, m_max as f64);

    // tau in [l0 / (m k), l0 / (m (k - 1)))  <=>  ceil(l0 / (m tau)) = k
    let k_max = (l0 / (mf * lo)).ceil() as u64 + 1;
    let mut candidates: Vec<(f64, f64)> = Vec::new();
    for k in 1..=k_max {
        let kf = k as f64;
        let branch_lo = (l0 / (mf * kf)).max(lo);
        let branch_hi = if k == 1 { hi } else { (l0 / (mf * (kf - 1.0))).min(hi) };
        if branch_lo > branch_hi {
            continue;
        }
        let target = (observed_max - l0) / (kf * (mmax - mf));
        let upper = if k == 1 && branch_hi == hi { hi } else { branch_hi * (1.0 - 1e-12) };
        let tau = target.clamp(branch_lo, upper.max(branch_lo));
        let pred = kf * (mmax - mf) * tau + l0;
        candidates.push((tau, (pred - observed_max).abs() / observed_max));
    }

    let best = candidates.iter().map(|c| c.1).fold(f64::INFINITY, f64::min);
    if !(best <= ACCEPT_TOLERANCE) {
        return Err(Error::TauEstimation(format!(
            "no tau in ({lo}, {hi}] predicts {observed_max} s within 10% (best error {:.1}%)",
            best * 100.0
        )));
    }
    let mut exact: Vec<(f64, f64)> = candidates.into_iter().filter(|c| c.1 <= best + ALIAS_TOLERANCE).collect();
    exact.sort_by(|a, b| b.0.total_cmp(&a.0));
    let (tau, residual) = exact[0];
    let aliases = exact.iter().map(|c| c.0).collect();
    Ok(TauEstimate { tau, residual, aliases })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn predicted_max(l0: f64, m: f64, m_max: f64, tau: f64) -> f64 {
        (l0 / (m * tau)).ceil() * (m_max - m) * tau + l0
    }

    fn close(a: f64, b: f64) -> bool {
        ((a - b) / b).abs() < 1e-9
    }

    #[test]
    fn two_slice_job_is_consistent_with_true_tau() {
        let tau_true = 0.005;
        let (m, m_max) = (4, 24);
        let l0 = 2.0 * m as f64 * tau_true;
        let observed = 2.0 * m_max as f64 * tau_true;
        let est = estimate_tau(l0, observed, m, m_max, DEFAULT_TAU_RANGE).unwrap();
        assert!(est.residual < 1e-9);
        assert!(est.aliases.iter().any(|&t| close(t, tau_true)), "{:?}", est.aliases);
        // every alias reproduces the observation
        for &t in &est.aliases {
            assert!(((predicted_max(l0, 4.0, 24.0, t * (1.0 + 1e-12)) - observed) / observed).abs() < 1e-6);
        }
    }

    #[test]
    fn single_preemption_recovers_tau_exactly() {
        let tau_true = 0.004;
        let (m, m_max) = (6, 24);
        let l0 = 0.4 * m as f64 * tau_true;
        let observed = l0 + (m_max - m) as f64 * tau_true;
        let est = estimate_tau(l0, observed, m, m_max, DEFAULT_TAU_RANGE).unwrap();
        assert!(close(est.tau, tau_true), "{est:?}");
        assert_eq!(est.aliases.len(), 1);
    }

    #[test]
    fn largest_alias_is_reported_when_ambiguous() {
        let tau_true = 0.004;
        let l0 = 0.9 * 6.0 * tau_true;
        let observed = l0 + 18.0 * tau_true;
        let est = estimate_tau(l0, observed, 6, 24, DEFAULT_TAU_RANGE).unwrap();
        assert!(close(est.tau, tau_true));
        assert!(est.aliases.len() > 1);
    }

    #[test]
    fn observed_below_l0_is_rejected() {
        assert!(estimate_tau(0.05, 0.04, 4, 24, DEFAULT_TAU_RANGE).is_err());
        assert!(estimate_tau(0.05, 0.2, 24, 24, DEFAULT_TAU_RANGE).is_err());
    }

    #[test]
    fn unreachable_observation_fails() {
        // largest admissible tau explains at most 0.01 + 20 * 0.1 = 2.01 s
        let err = estimate_tau(0.01, 100.0, 4, 24, DEFAULT_TAU_RANGE).unwrap_err();
        assert!(matches!(err, Error::TauEstimation(_)));
    }
}
