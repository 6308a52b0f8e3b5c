//! Fitted workload coefficients and platform constants.
//!
//! A [`ModelProfile`] bundles everything the latency predictors need for one
//! DNN model: per-batch CPU coefficients (average and maximum variants), the
//! linear GPU model, the GPU memory footprint, the time-slicing platform and
//! the discrete configuration grids the provisioner searches over.
//!
//! Profiles are validated once on construction and never mutated afterwards;
//! re-fitting produces a new profile.

mod file;
mod fit;
mod tau;

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use file::{CpuCoeffEntry, PlatformEntry, ProfileDocument, RangesEntry, PROFILE_FORMAT_VERSION};
pub use fit::{fit_cpu_coeffs, fit_gpu_coeffs, CpuFit, GpuFit};
pub use tau::{estimate_tau, TauEstimate, DEFAULT_TAU_RANGE};

/// `alpha * exp(-cores / beta) + gamma`
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CpuLatencyCoeffs {
    pub alpha: f64,
    pub beta: f64,
    pub gamma: f64,
}

impl CpuLatencyCoeffs {
    pub fn new(alpha: f64, beta: f64, gamma: f64) -> Result<Self> {
        let c = Self { alpha, beta, gamma };
        c.validate()?;
        Ok(c)
    }

    pub fn validate(&self) -> Result<()> {
        let ok = self.alpha.is_finite()
            && self.beta.is_finite()
            && self.gamma.is_finite()
            && self.alpha > 0.0
            && self.beta > 0.0
            && self.gamma >= 0.0;
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidParameter(format!(
                "CPU coefficients need alpha > 0, beta > 0, gamma >= 0 (got {self:?})"
            )))
        }
    }

    #[inline]
    pub fn latency(&self, cores: f64) -> f64 {
        self.alpha * (-cores / self.beta).exp() + self.gamma
    }
}

/// Exclusive-GPU latency `xi1 * batch + xi2`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GpuLatencyCoeffs {
    pub xi1: f64,
    pub xi2: f64,
}

impl GpuLatencyCoeffs {
    pub fn new(xi1: f64, xi2: f64) -> Result<Self> {
        let c = Self { xi1, xi2 };
        c.validate()?;
        Ok(c)
    }

    pub fn validate(&self) -> Result<()> {
        if self.xi1.is_finite() && self.xi2.is_finite() && self.xi1 > 0.0 && self.xi2 >= 0.0 {
            Ok(())
        } else {
            Err(Error::InvalidParameter(format!(
                "GPU coefficients need xi1 > 0, xi2 >= 0 (got {self:?})"
            )))
        }
    }

    #[inline]
    pub fn base_latency(&self, batch: u32) -> f64 {
        self.xi1 * batch as f64 + self.xi2
    }
}

/// cGPU time-slicing platform: `m_max` memory units, each worth one slice of
/// `tau` seconds per scheduling cycle.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GpuPlatform {
    pub m_max: u32,
    pub tau: f64,
    pub mem_step: u32,
}

impl GpuPlatform {
    pub fn new(m_max: u32, tau: f64, mem_step: u32) -> Result<Self> {
        let p = Self { m_max, tau, mem_step };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if self.m_max < 1 || self.mem_step < 1 || !(self.tau.is_finite() && self.tau > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "GPU platform needs m_max >= 1, tau > 0, mem_step >= 1 (got {self:?})"
            )));
        }
        if !self.m_max.is_multiple_of(self.mem_step) {
            return Err(Error::InvalidParameter(format!(
                "mem_step {} does not divide m_max {}",
                self.mem_step, self.m_max
            )));
        }
        Ok(())
    }

    /// Length of one full scheduling cycle.
    pub fn cycle(&self) -> f64 {
        self.m_max as f64 * self.tau
    }

    /// Allocatable memory sizes, ascending.
    pub fn mem_sizes(&self) -> impl Iterator<Item = u32> + '_ {
        (1..=self.m_max / self.mem_step).map(move |k| k * self.mem_step)
    }
}

/// GPU memory footprint `mu0 + mu1 * batch`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MemoryDemandModel {
    pub mu0: f64,
    pub mu1: f64,
}

impl MemoryDemandModel {
    pub fn validate(&self) -> Result<()> {
        if self.mu0.is_finite() && self.mu1.is_finite() && self.mu0 >= 0.0 && self.mu1 >= 0.0 {
            Ok(())
        } else {
            Err(Error::InvalidParameter(format!(
                "memory model needs mu0 >= 0, mu1 >= 0 (got {self:?})"
            )))
        }
    }

    #[inline]
    pub fn demand(&self, batch: u32) -> f64 {
        self.mu0 + self.mu1 * batch as f64
    }
}

/// Uniform vCPU allocation grid `min, min + step, ..., max`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CoreGrid {
    pub min: f64,
    pub max: f64,
    pub step: f64,
}

impl CoreGrid {
    pub fn new(min: f64, max: f64, step: f64) -> Result<Self> {
        let g = Self { min, max, step };
        let ok = min.is_finite() && max.is_finite() && step.is_finite() && min > 0.0 && step > 0.0 && max >= min;
        if !ok {
            return Err(Error::InvalidParameter(format!("invalid core grid {g:?}")));
        }
        let span = (max - min) / step;
        if (span - span.round()).abs() > 1e-6 {
            return Err(Error::InvalidParameter(format!(
                "core range [{min}, {max}] is not a whole number of {step} steps"
            )));
        }
        Ok(g)
    }

    pub fn len(&self) -> usize {
        ((self.max - self.min) / self.step).round() as usize + 1
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    #[inline]
    pub fn value(&self, index: usize) -> f64 {
        // strip accumulated representation noise such as 1.6000000000000003
        ((self.min + index as f64 * self.step) * 1e9).round() / 1e9
    }

    pub fn contains(&self, cores: f64) -> bool {
        let tol = 1e-9 * self.step;
        cores >= self.min - tol && cores <= self.max + tol
    }

    /// Index of the grid point nearest to `cores`, clamped to the grid.
    pub fn nearest_index(&self, cores: f64) -> usize {
        let raw = ((cores - self.min) / self.step).round();
        raw.clamp(0.0, (self.len() - 1) as f64) as usize
    }
}

impl Default for CoreGrid {
    fn default() -> Self {
        Self { min: 0.05, max: 16.0, step: 0.05 }
    }
}

/// Unit prices: `k1` per vCPU-second, `k2` per GPU-memory-unit-second,
/// `k3` per invocation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PricingConfig {
    pub k1: f64,
    pub k2: f64,
    pub k3: f64,
}

impl PricingConfig {
    pub fn new(k1: f64, k2: f64, k3: f64) -> Result<Self> {
        let p = Self { k1, k2, k3 };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if [self.k1, self.k2, self.k3].iter().all(|k| k.is_finite() && *k >= 0.0) {
            Ok(())
        } else {
            Err(Error::InvalidParameter(format!("prices must be >= 0 (got {self:?})")))
        }
    }

    /// Alibaba Function Compute list prices (Shanghai, Nov. 2023).
    pub fn alibaba_2023() -> Self {
        Self { k1: 1.3e-5, k2: 1.5e-5, k3: 1.3e-7 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelProfile {
    cpu_avg: BTreeMap<u32, CpuLatencyCoeffs>,
    cpu_max: BTreeMap<u32, CpuLatencyCoeffs>,
    gpu: GpuLatencyCoeffs,
    mem: MemoryDemandModel,
    platform: GpuPlatform,
    cores: CoreGrid,
    cpu_batch_max: u32,
    gpu_batch_max: u32,
}

impl ModelProfile {
    pub fn new(
        cpu_avg: BTreeMap<u32, CpuLatencyCoeffs>,
        cpu_max: BTreeMap<u32, CpuLatencyCoeffs>,
        gpu: GpuLatencyCoeffs,
        mem: MemoryDemandModel,
        platform: GpuPlatform,
        cores: CoreGrid,
        gpu_batch_max: u32,
    ) -> Result<Self> {
        gpu.validate()?;
        mem.validate()?;
        platform.validate()?;
        if gpu_batch_max < 1 {
            return Err(Error::InvalidParameter("GPU batch range must include 1".into()));
        }
        if cpu_avg.is_empty() {
            return Err(Error::InconsistentProfile("no CPU coefficients".into()));
        }
        if cpu_avg.keys().ne(cpu_max.keys()) {
            return Err(Error::InconsistentProfile(
                "cpu_avg and cpu_max cover different batch sizes".into(),
            ));
        }
        let cpu_batch_max = *cpu_avg.keys().next_back().unwrap();
        if cpu_avg.keys().copied().ne(1..=cpu_batch_max) {
            return Err(Error::InconsistentProfile(format!(
                "CPU batch sizes must cover 1..={cpu_batch_max} without gaps"
            )));
        }
        for c in cpu_avg.values().chain(cpu_max.values()) {
            c.validate()?;
        }
        let profile = Self {
            cpu_avg,
            cpu_max,
            gpu,
            mem,
            platform,
            cores,
            cpu_batch_max,
            gpu_batch_max,
        };
        profile.check_max_dominates_avg()?;
        Ok(profile)
    }

    fn check_max_dominates_avg(&self) -> Result<()> {
        for (b, avg) in &self.cpu_avg {
            let max = &self.cpu_max[b];
            for i in 0..self.cores.len() {
                let c = self.cores.value(i);
                let (la, lm) = (avg.latency(c), max.latency(c));
                if lm < la * (1.0 - 1e-12) {
                    return Err(Error::InconsistentProfile(format!(
                        "max latency {lm} below average {la} at batch {b}, {c} cores"
                    )));
                }
            }
        }
        Ok(())
    }

    pub fn cpu_avg(&self, batch: u32) -> Option<&CpuLatencyCoeffs> {
        self.cpu_avg.get(&batch)
    }

    pub fn cpu_max(&self, batch: u32) -> Option<&CpuLatencyCoeffs> {
        self.cpu_max.get(&batch)
    }

    pub fn gpu(&self) -> &GpuLatencyCoeffs {
        &self.gpu
    }

    pub fn mem(&self) -> &MemoryDemandModel {
        &self.mem
    }

    pub fn platform(&self) -> &GpuPlatform {
        &self.platform
    }

    pub fn cores(&self) -> &CoreGrid {
        &self.cores
    }

    pub fn cpu_batch_max(&self) -> u32 {
        self.cpu_batch_max
    }

    pub fn gpu_batch_max(&self) -> u32 {
        self.gpu_batch_max
    }

    pub fn cpu_batches(&self) -> impl Iterator<Item = u32> {
        1..=self.cpu_batch_max
    }

    pub fn to_document(&self) -> ProfileDocument {
        ProfileDocument::from_profile(self)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let doc: ProfileDocument = serde_json::from_str(text)?;
        doc.into_profile()
    }

    pub fn load(path: impl AsRef<std::path::Path>) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::from_json(&text)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn coeffs(a: f64, b: f64, g: f64) -> CpuLatencyCoeffs {
        CpuLatencyCoeffs::new(a, b, g).unwrap()
    }

    fn profile_with(avg: CpuLatencyCoeffs, max: CpuLatencyCoeffs) -> Result<ModelProfile> {
        ModelProfile::new(
            BTreeMap::from([(1, avg)]),
            BTreeMap::from([(1, max)]),
            GpuLatencyCoeffs::new(0.025, 0.025).unwrap(),
            MemoryDemandModel { mu0: 0.5, mu1: 0.1 },
            GpuPlatform::new(24, 0.005, 1).unwrap(),
            CoreGrid::default(),
            32,
        )
    }

    #[test]
    fn rejects_invalid_coefficients() {
        assert!(CpuLatencyCoeffs::new(0.0, 1.0, 0.1).is_err());
        assert!(CpuLatencyCoeffs::new(1.0, -1.0, 0.1).is_err());
        assert!(CpuLatencyCoeffs::new(1.0, 1.0, -0.1).is_err());
        assert!(GpuLatencyCoeffs::new(0.0, 0.1).is_err());
        assert!(GpuPlatform::new(24, 0.005, 5).is_err());
        assert!(GpuPlatform::new(24, 0.0, 1).is_err());
        assert!(PricingConfig::new(-1.0, 0.0, 0.0).is_err());
    }

    #[test]
    fn max_below_avg_is_a_load_error() {
        let err = profile_with(coeffs(2.0, 1.0, 0.3), coeffs(1.0, 1.0, 0.3)).unwrap_err();
        assert!(matches!(err, Error::InconsistentProfile(_)));
        assert!(profile_with(coeffs(2.0, 1.0, 0.3), coeffs(2.5, 1.0, 0.35)).is_ok());
    }

    #[test]
    fn batch_keys_must_match_and_be_contiguous() {
        let c = coeffs(2.0, 1.0, 0.3);
        let err = ModelProfile::new(
            BTreeMap::from([(1, c), (3, c)]),
            BTreeMap::from([(1, c), (3, c)]),
            GpuLatencyCoeffs::new(0.025, 0.025).unwrap(),
            MemoryDemandModel { mu0: 0.0, mu1: 0.1 },
            GpuPlatform::new(24, 0.005, 1).unwrap(),
            CoreGrid::default(),
            32,
        )
        .unwrap_err();
        assert!(matches!(err, Error::InconsistentProfile(_)));
    }

    #[test]
    fn default_core_grid_has_320_points() {
        let g = CoreGrid::default();
        assert_eq!(g.len(), 320);
        assert!((g.value(319) - 16.0).abs() < 1e-12);
        assert_eq!(g.nearest_index(1.6), 31);
    }

    #[test]
    fn fitted_curve_decreases_in_cores() {
        let c = coeffs(2.0, 1.0, 0.3);
        let g = CoreGrid::default();
        for i in 1..g.len() {
            assert!(c.latency(g.value(i)) < c.latency(g.value(i - 1)));
        }
    }

    #[test]
    fn mem_sizes_follow_step() {
        let p = GpuPlatform::new(24, 0.005, 4).unwrap();
        assert_eq!(p.mem_sizes().collect::<Vec<_>>(), vec![4, 8, 12, 16, 20, 24]);
    }
}
