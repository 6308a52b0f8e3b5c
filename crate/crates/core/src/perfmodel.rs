//! Average and maximum inference latency on CPU and GPU functions.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::profile::{GpuPlatform, ModelProfile};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FunctionKind {
    Cpu,
    Gpu,
}

/// Resources of one serverless function. CPU functions have `mem == 0`,
/// GPU functions have `cores == 0`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FunctionConfig {
    pub kind: FunctionKind,
    pub cores: f64,
    pub mem: u32,
}

impl FunctionConfig {
    pub fn cpu(cores: f64) -> Self {
        Self { kind: FunctionKind::Cpu, cores, mem: 0 }
    }

    pub fn gpu(mem: u32) -> Self {
        Self { kind: FunctionKind::Gpu, cores: 0.0, mem }
    }

    pub fn validate(&self, profile: &ModelProfile) -> Result<()> {
        match self.kind {
            FunctionKind::Cpu => {
                check_cores(profile, self.cores)?;
                if self.mem != 0 {
                    return Err(Error::InvalidParameter("CPU function with GPU memory".into()));
                }
            }
            FunctionKind::Gpu => {
                let p = profile.platform();
                check_mem(p, self.mem)?;
                if !self.mem.is_multiple_of(p.mem_step) {
                    return Err(Error::InvalidParameter(format!(
                        "GPU memory {} is not a multiple of {}",
                        self.mem, p.mem_step
                    )));
                }
                if self.cores != 0.0 {
                    return Err(Error::InvalidParameter("GPU function with vCPU cores".into()));
                }
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LatencyEstimate {
    pub avg: f64,
    pub max: f64,
}

impl LatencyEstimate {
    /// The GPU average can exceed the GPU maximum for small slices; such
    /// configurations are reported as-is and flagged here.
    pub fn avg_exceeds_max(&self) -> bool {
        self.avg > self.max
    }
}

fn check_cores(profile: &ModelProfile, cores: f64) -> Result<()> {
    let g = profile.cores();
    if g.contains(cores) {
        Ok(())
    } else {
        Err(Error::OutOfRange { what: "vCPU cores", value: cores, min: g.min, max: g.max })
    }
}

fn check_mem(platform: &GpuPlatform, mem: u32) -> Result<()> {
    if (1..=platform.m_max).contains(&mem) {
        Ok(())
    } else {
        Err(Error::OutOfRange {
            what: "GPU memory",
            value: mem as f64,
            min: 1.0,
            max: platform.m_max as f64,
        })
    }
}

fn check_gpu_batch(profile: &ModelProfile, batch: u32) -> Result<()> {
    if (1..=profile.gpu_batch_max()).contains(&batch) {
        Ok(())
    } else {
        Err(Error::OutOfRange {
            what: "GPU batch size",
            value: batch as f64,
            min: 1.0,
            max: profile.gpu_batch_max() as f64,
        })
    }
}

pub fn predict_cpu(profile: &ModelProfile, cores: f64, batch: u32) -> Result<LatencyEstimate> {
    let (avg, max) = profile
        .cpu_avg(batch)
        .zip(profile.cpu_max(batch))
        .ok_or(Error::UnknownBatch(batch))?;
    check_cores(profile, cores)?;
    Ok(LatencyEstimate { avg: avg.latency(cores), max: max.latency(cores) })
}

/// Latency with the whole GPU (`m_max` memory units).
pub fn predict_gpu_base(profile: &ModelProfile, batch: u32) -> Result<f64> {
    check_gpu_batch(profile, batch)?;
    Ok(profile.gpu().base_latency(batch))
}

/// Average latency on an `mem`-unit share: the job only progresses during
/// its own `mem / m_max` fraction of every cycle.
#[inline]
pub fn gpu_avg_latency(l0: f64, mem: u32, platform: &GpuPlatform) -> f64 {
    platform.m_max as f64 / mem as f64 * l0
}

/// Worst case: the job arrives just as its slice ends and sits out one
/// preempted stretch of `(m_max - mem) * tau` per owned slice it needs.
#[inline]
pub fn gpu_max_latency(l0: f64, mem: u32, platform: &GpuPlatform) -> f64 {
    let m = mem as f64;
    (l0 / (m * platform.tau)).ceil() * (platform.m_max as f64 - m) * platform.tau + l0
}

pub fn predict_gpu(profile: &ModelProfile, mem: u32, batch: u32) -> Result<LatencyEstimate> {
    let p = profile.platform();
    check_mem(p, mem)?;
    let l0 = predict_gpu_base(profile, batch)?;
    if mem == p.m_max {
        return Ok(LatencyEstimate { avg: l0, max: l0 });
    }
    Ok(LatencyEstimate { avg: gpu_avg_latency(l0, mem, p), max: gpu_max_latency(l0, mem, p) })
}

pub fn predict(profile: &ModelProfile, config: &FunctionConfig, batch: u32) -> Result<LatencyEstimate> {
    match config.kind {
        FunctionKind::Cpu => predict_cpu(profile, config.cores, batch),
        FunctionKind::Gpu => predict_gpu(profile, config.mem, batch),
    }
}
