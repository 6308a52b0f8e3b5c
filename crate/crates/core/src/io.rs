//! Workload, sample and report files.

use std::collections::{BTreeMap, BTreeSet};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::batching::AppSpec;
use crate::error::{Error, Result};
use crate::profile::PricingConfig;
use crate::provisioner::ProvisionResult;

pub const FORMAT_VERSION: u32 = 1;

fn default_version() -> u32 {
    FORMAT_VERSION
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WorkloadApp {
    pub id: String,
    pub slo_seconds: f64,
    pub rate_rps: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WorkloadFile {
    #[serde(default = "default_version")]
    pub format_version: u32,
    pub apps: Vec<WorkloadApp>,
    #[serde(default = "PricingConfig::alibaba_2023")]
    pub pricing: PricingConfig,
    /// Relative paths are taken from the workload file's directory.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub profile_path: Option<PathBuf>,
}

impl WorkloadFile {
    pub fn from_json(text: &str) -> Result<Self> {
        let w: WorkloadFile = serde_json::from_str(text)?;
        w.validate()?;
        Ok(w)
    }

    pub fn validate(&self) -> Result<()> {
        if self.format_version != FORMAT_VERSION {
            return Err(Error::Parse(format!("unsupported workload format_version {}", self.format_version)));
        }
        if self.apps.is_empty() {
            return Err(Error::InvalidParameter("workload lists no applications".into()));
        }
        let mut seen = BTreeSet::new();
        for a in &self.apps {
            if !seen.insert(a.id.as_str()) {
                return Err(Error::InvalidParameter(format!("duplicate application id `{}`", a.id)));
            }
        }
        self.pricing.validate()?;
        self.apps().map(|_| ())
    }

    pub fn apps(&self) -> Result<Vec<AppSpec>> {
        self.apps.iter().map(|a| AppSpec::new(a.id.clone(), a.slo_seconds, a.rate_rps)).collect()
    }

    /// Profile location resolved against `base`, the workload's directory.
    pub fn profile_path_from(&self, base: &Path) -> Option<PathBuf> {
        self.profile_path.as_ref().map(|p| if p.is_absolute() { p.clone() } else { base.join(p) })
    }
}

pub fn load_workload(path: &Path) -> Result<WorkloadFile> {
    WorkloadFile::from_json(&std::fs::read_to_string(path)?)
}

pub fn load_pricing(path: &Path) -> Result<PricingConfig> {
    let p: PricingConfig = serde_json::from_str(&std::fs::read_to_string(path)?)?;
    p.validate()?;
    Ok(p)
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    format!("{:x}", Sha256::digest(bytes))
}

pub fn sha256_file(path: &Path) -> Result<String> {
    Ok(sha256_hex(&std::fs::read(path)?))
}

/// Resolved inputs of a run, embedded in every report.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub command: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub profile_sha256: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub workload_sha256: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pricing: Option<PricingConfig>,
    #[serde(default)]
    pub flags: BTreeMap<String, serde_json::Value>,
}

/// Output of the `provision` command; also the plan input of `simulate`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProvisionReport {
    pub format_version: u32,
    pub config: RunConfig,
    /// Plans in tuple notation, one per group.
    pub plans: Vec<String>,
    pub result: ProvisionResult,
}

impl ProvisionReport {
    pub fn new(config: RunConfig, result: ProvisionResult) -> Self {
        let plans = result.plans.iter().map(|p| p.notation()).collect();
        Self { format_version: FORMAT_VERSION, config, plans, result }
    }

    pub fn load(path: &Path) -> Result<Self> {
        let r: ProvisionReport = serde_json::from_str(&std::fs::read_to_string(path)?)?;
        if r.format_version != FORMAT_VERSION {
            return Err(Error::Parse(format!("unsupported plan format_version {}", r.format_version)));
        }
        if r.result.plans.is_empty() {
            return Err(Error::Parse("plan file contains no groups".into()));
        }
        Ok(r)
    }
}

/// Pretty JSON with a trailing newline.
pub fn to_json<T: Serialize>(value: &T) -> Result<String> {
    let mut s = serde_json::to_string_pretty(value)?;
    s.push('\n');
    Ok(s)
}

fn read_rows(path: &Path) -> Result<Vec<csv::StringRecord>> {
    let mut r = csv::ReaderBuilder::new().has_headers(true).trim(csv::Trim::All).comment(Some(b'#')).from_path(path)?;
    let rows = r.records().collect::<std::result::Result<Vec<_>, _>>()?;
    if rows.is_empty() {
        return Err(Error::InsufficientData(format!("{} has no sample rows", path.display())));
    }
    Ok(rows)
}

fn field<T: std::str::FromStr>(row: &csv::StringRecord, i: usize, name: &str) -> Result<T> {
    let line = row.position().map_or(0, |p| p.line());
    row.get(i)
        .ok_or_else(|| Error::Parse(format!("line {line}: missing `{name}` column")))?
        .parse()
        .map_err(|_| Error::Parse(format!("line {line}: `{name}` is not a number")))
}

/// CPU samples `batch,cores,latency_seconds`, grouped by batch size.
pub fn read_cpu_samples(path: &Path) -> Result<BTreeMap<u32, Vec<(f64, f64)>>> {
    let mut out: BTreeMap<u32, Vec<(f64, f64)>> = BTreeMap::new();
    for row in read_rows(path)? {
        let b: u32 = field(&row, 0, "batch")?;
        out.entry(b).or_default().push((field(&row, 1, "cores")?, field(&row, 2, "latency_seconds")?));
    }
    Ok(out)
}

/// GPU samples `batch,latency_seconds`, taken on the whole device.
pub fn read_gpu_samples(path: &Path) -> Result<Vec<(u32, f64)>> {
    read_rows(path)?.iter().map(|row| Ok((field(row, 0, "batch")?, field(row, 1, "latency_seconds")?))).collect()
}

/// Slice observations `mem,l0_seconds,max_seconds`.
pub fn read_tau_samples(path: &Path) -> Result<Vec<(u32, f64, f64)>> {
    read_rows(path)?
        .iter()
        .map(|row| Ok((field(row, 0, "mem")?, field(row, 1, "l0_seconds")?, field(row, 2, "max_seconds")?)))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn workload_roundtrip_and_validation() {
        let text = r#"{"apps":[{"id":"a","slo_seconds":0.5,"rate_rps":5},{"id":"b","slo_seconds":1.0,"rate_rps":20}],
                      "profile_path":"p.json"}"#;
        let w = WorkloadFile::from_json(text).unwrap();
        assert_eq!(w.format_version, 1);
        assert_eq!(w.pricing, PricingConfig::alibaba_2023());
        assert_eq!(w.profile_path_from(Path::new("/x")), Some(PathBuf::from("/x/p.json")));
        assert_eq!(w.apps().unwrap().len(), 2);

        let dup = r#"{"apps":[{"id":"a","slo_seconds":0.5,"rate_rps":5},{"id":"a","slo_seconds":1.0,"rate_rps":20}]}"#;
        assert!(WorkloadFile::from_json(dup).is_err());
        let neg = r#"{"apps":[{"id":"a","slo_seconds":-0.5,"rate_rps":5}]}"#;
        assert!(WorkloadFile::from_json(neg).is_err());
    }

    #[test]
    fn digest_is_hex_sha256() {
        assert_eq!(sha256_hex(b"abc"), "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
    }

    #[test]
    fn empty_sample_file_is_insufficient() {
        let dir = std::env::temp_dir().join(format!("slobatch-io-{}", std::process::id()));
        std::fs::create_dir_all(&dir).unwrap();
        let p = dir.join("empty.csv");
        std::fs::write(&p, "batch,latency_seconds\n").unwrap();
        assert!(matches!(read_gpu_samples(&p), Err(Error::InsufficientData(_))));
        std::fs::write(&p, "batch,latency_seconds\n1,0.05\n4,0.125\n").unwrap();
        assert_eq!(read_gpu_samples(&p).unwrap(), vec![(1, 0.05), (4, 0.125)]);
        std::fs::remove_dir_all(&dir).ok();
    }
}
