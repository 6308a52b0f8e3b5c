use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::{
    CoreGrid, CpuLatencyCoeffs, GpuLatencyCoeffs, GpuPlatform, MemoryDemandModel, ModelProfile,
};
use crate::error::{Error, Result};

pub const PROFILE_FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CpuCoeffEntry {
    pub batch: u32,
    pub alpha: f64,
    pub beta: f64,
    pub gamma: f64,
}

impl From<(u32, CpuLatencyCoeffs)> for CpuCoeffEntry {
    fn from((batch, c): (u32, CpuLatencyCoeffs)) -> Self {
        Self { batch, alpha: c.alpha, beta: c.beta, gamma: c.gamma }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PlatformEntry {
    #[serde(default = "default_m_max")]
    pub m_max: u32,
    pub tau: f64,
    #[serde(default = "default_one")]
    pub mem_step: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RangesEntry {
    #[serde(default = "default_cpu_cores")]
    pub cpu_cores: [f64; 3],
    #[serde(default = "default_cpu_batch")]
    pub cpu_batch: [u32; 2],
    #[serde(default = "default_gpu_batch")]
    pub gpu_batch: [u32; 2],
    #[serde(default = "default_one")]
    pub gpu_mem_step: u32,
}

impl Default for RangesEntry {
    fn default() -> Self {
        Self {
            cpu_cores: default_cpu_cores(),
            cpu_batch: default_cpu_batch(),
            gpu_batch: default_gpu_batch(),
            gpu_mem_step: 1,
        }
    }
}

fn default_m_max() -> u32 {
    24
}

fn default_one() -> u32 {
    1
}

fn default_cpu_cores() -> [f64; 3] {
    [0.05, 16.0, 0.05]
}

fn default_cpu_batch() -> [u32; 2] {
    [1, 4]
}

fn default_gpu_batch() -> [u32; 2] {
    [1, 32]
}

fn default_version() -> u32 {
    PROFILE_FORMAT_VERSION
}

/// On-disk profile. Sections may be missing while a profile is being
/// assembled by successive `fit` runs; [`ProfileDocument::into_profile`]
/// requires all of them.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProfileDocument {
    #[serde(default = "default_version")]
    pub format_version: u32,
    #[serde(default)]
    pub cpu_avg: Vec<CpuCoeffEntry>,
    #[serde(default)]
    pub cpu_max: Vec<CpuCoeffEntry>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gpu: Option<GpuLatencyCoeffs>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mem: Option<MemoryDemandModel>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub platform: Option<PlatformEntry>,
    #[serde(default)]
    pub ranges: RangesEntry,
}

impl Default for ProfileDocument {
    fn default() -> Self {
        Self {
            format_version: PROFILE_FORMAT_VERSION,
            cpu_avg: Vec::new(),
            cpu_max: Vec::new(),
            gpu: None,
            mem: None,
            platform: None,
            ranges: RangesEntry::default(),
        }
    }
}

impl ProfileDocument {
    pub fn from_profile(p: &ModelProfile) -> Self {
        let platform = p.platform();
        let cores = p.cores();
        Self {
            format_version: PROFILE_FORMAT_VERSION,
            cpu_avg: p.cpu_avg.iter().map(|(b, c)| (*b, *c).into()).collect(),
            cpu_max: p.cpu_max.iter().map(|(b, c)| (*b, *c).into()).collect(),
            gpu: Some(*p.gpu()),
            mem: Some(*p.mem()),
            platform: Some(PlatformEntry {
                m_max: platform.m_max,
                tau: platform.tau,
                mem_step: platform.mem_step,
            }),
            ranges: RangesEntry {
                cpu_cores: [cores.min, cores.max, cores.step],
                cpu_batch: [1, p.cpu_batch_max()],
                gpu_batch: [1, p.gpu_batch_max()],
                gpu_mem_step: platform.mem_step,
            },
        }
    }

    /// Replaces (or inserts) the coefficients for one CPU batch size.
    pub fn set_cpu(&mut self, max_variant: bool, batch: u32, c: CpuLatencyCoeffs) {
        let list = if max_variant { &mut self.cpu_max } else { &mut self.cpu_avg };
        list.retain(|e| e.batch != batch);
        list.push((batch, c).into());
        list.sort_by_key(|e| e.batch);
    }

    pub fn into_profile(self) -> Result<ModelProfile> {
        if self.format_version != PROFILE_FORMAT_VERSION {
            return Err(Error::Parse(format!(
                "unsupported profile format_version {}",
                self.format_version
            )));
        }
        let missing = |what: &str| Error::InconsistentProfile(format!("profile has no `{what}` section"));
        let gpu = self.gpu.ok_or_else(|| missing("gpu"))?;
        let mem = self.mem.ok_or_else(|| missing("mem"))?;
        let pe = self.platform.ok_or_else(|| missing("platform"))?;
        if pe.mem_step != self.ranges.gpu_mem_step {
            return Err(Error::InconsistentProfile(format!(
                "platform.mem_step ({}) disagrees with ranges.gpu_mem_step ({})",
                pe.mem_step, self.ranges.gpu_mem_step
            )));
        }
        let platform = GpuPlatform::new(pe.m_max, pe.tau, pe.mem_step)?;
        let [cmin, cmax, cstep] = self.ranges.cpu_cores;
        let cores = CoreGrid::new(cmin, cmax, cstep)?;
        let [cb_lo, cb_hi] = self.ranges.cpu_batch;
        let [gb_lo, gb_hi] = self.ranges.gpu_batch;
        if cb_lo != 1 || gb_lo != 1 {
            return Err(Error::InvalidParameter("batch ranges must start at 1".into()));
        }

        let collect = |entries: &[CpuCoeffEntry], name: &str| -> Result<BTreeMap<u32, CpuLatencyCoeffs>> {
            let mut map = BTreeMap::new();
            for e in entries {
                let c = CpuLatencyCoeffs::new(e.alpha, e.beta, e.gamma)?;
                if map.insert(e.batch, c).is_some() {
                    return Err(Error::InconsistentProfile(format!(
                        "duplicate batch {} in {name}",
                        e.batch
                    )));
                }
            }
            Ok(map)
        };
        let cpu_avg = collect(&self.cpu_avg, "cpu_avg")?;
        let cpu_max = collect(&self.cpu_max, "cpu_max")?;
        if cpu_avg.keys().copied().ne(1..=cb_hi) {
            return Err(Error::InconsistentProfile(format!(
                "cpu_avg must cover batch sizes 1..={cb_hi}"
            )));
        }
        ModelProfile::new(cpu_avg, cpu_max, gpu, mem, platform, cores, gb_hi)
    }

    pub fn to_json_pretty(&self) -> String {
        serde_json::to_string_pretty(self).expect("profile document serializes")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"{
        "cpu_avg": [{"batch": 1, "alpha": 2.0, "beta": 1.0, "gamma": 0.3}],
        "cpu_max": [{"batch": 1, "alpha": 2.5, "beta": 1.0, "gamma": 0.35}],
        "gpu": {"xi1": 0.025, "xi2": 0.025},
        "mem": {"mu0": 0.5, "mu1": 0.1},
        "platform": {"tau": 0.005},
        "ranges": {"cpu_batch": [1, 1]}
    }"#;

    #[test]
    fn defaults_fill_missing_ranges() {
        let p = ModelProfile::from_json(MINIMAL).unwrap();
        assert_eq!(p.platform().m_max, 24);
        assert_eq!(p.platform().mem_step, 1);
        assert_eq!(p.gpu_batch_max(), 32);
        assert_eq!(p.cores().len(), 320);
    }

    #[test]
    fn roundtrip_through_document() {
        let p = ModelProfile::from_json(MINIMAL).unwrap();
        let text = p.to_document().to_json_pretty();
        assert_eq!(ModelProfile::from_json(&text).unwrap(), p);
    }

    #[test]
    fn missing_sections_are_reported() {
        let err = ModelProfile::from_json(r#"{"cpu_avg": []}"#).unwrap_err();
        assert!(err.to_string().contains("gpu"));
    }

    #[test]
    fn cpu_batch_range_must_match_entries() {
        let text = MINIMAL.replace("\"cpu_batch\": [1, 1]", "\"cpu_batch\": [1, 4]");
        assert!(ModelProfile::from_json(&text).is_err());
    }
}
