//! Provisioning of serverless functions for application groups.
//!
//! [`Provisioner::func_provision`] solves the per-group subproblem: the
//! cheapest CPU or GPU configuration, batch size and timeouts meeting every
//! member's SLO. On top of it sit the two-stage group merging heuristic
//! ([`Provisioner::harmony`]) and two baselines ([`Provisioner::batch_baseline`],
//! [`Provisioner::mbs_plus`]).
//!
//! Timeouts are never searched: each member gets the largest timeout its SLO
//! allows, `slo - L_max`, which maximizes the group's equivalent timeout.

mod baselines;
mod cpu;
mod gpu;
mod knee;
mod two_stage;
pub mod verify;

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::batching::{feasible_batch, pair_unchecked, AppSpec, Group};
use crate::perfmodel::{FunctionConfig, FunctionKind, LatencyEstimate};
use crate::profile::{ModelProfile, PricingConfig};

pub use knee::{CurvePoint, KneeGrid};
pub use two_stage::{MergeEvent, MergeStage};

/// Relative margin below which two costs are treated as equal, so that
/// tie-breaking is not decided by rounding noise.
pub(crate) const COST_TIE: f64 = 1e-12;

#[inline]
pub(crate) fn cheaper(a: f64, b: f64) -> bool {
    a < b * (1.0 - COST_TIE)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Strategy {
    #[serde(rename = "harmony")]
    Harmony,
    #[serde(rename = "batch")]
    Batch,
    #[serde(rename = "mbs+")]
    MbsPlus,
}

impl Strategy {
    pub fn name(&self) -> &'static str {
        match self {
            Strategy::Harmony => "harmony",
            Strategy::Batch => "batch",
            Strategy::MbsPlus => "mbs+",
        }
    }
}

impl std::str::FromStr for Strategy {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "harmony" => Ok(Strategy::Harmony),
            "batch" => Ok(Strategy::Batch),
            "mbs+" | "mbs-plus" | "mbs" => Ok(Strategy::MbsPlus),
            other => Err(format!("unknown strategy `{other}` (expected harmony, batch or mbs+)")),
        }
    }
}

/// Which SLO the knee-point threshold is evaluated at during stage-1 merging.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum KneeMode {
    /// Strictest SLO inside the current merge window.
    #[default]
    PerWindow,
    /// One threshold for the whole workload, at its strictest SLO.
    Global,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProvisionOptions {
    pub knee_mode: KneeMode,
    pub knee_grid: KneeGrid,
    /// Timeout grid of the exhaustive BATCH search, in seconds.
    pub batch_timeout_step: f64,
}

impl Default for ProvisionOptions {
    fn default() -> Self {
        Self { knee_mode: KneeMode::PerWindow, knee_grid: KneeGrid::default(), batch_timeout_step: 1e-3 }
    }
}

/// Provisioning decision for one group.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupPlan {
    /// Members with their batching timeouts set.
    pub group: Group,
    pub config: FunctionConfig,
    pub batch: u32,
    pub eq_timeout: f64,
    /// Predicted cost per request.
    pub predicted_cost: f64,
    pub latency: LatencyEstimate,
    /// Set by baselines that size functions on average latency when the
    /// maximum latency would break an SLO.
    #[serde(default)]
    pub slo_risk: bool,
}

impl GroupPlan {
    pub fn timeouts(&self) -> &BTreeMap<String, f64> {
        self.group.timeouts()
    }

    pub fn kind(&self) -> FunctionKind {
        self.config.kind
    }

    pub fn rate(&self) -> f64 {
        self.group.rate()
    }

    /// Timeouts in ascending-SLO member order.
    pub fn ordered_timeouts(&self) -> Vec<f64> {
        self.group.apps().iter().map(|a| self.timeouts()[&a.id]).collect()
    }

    /// Plan in 3-tuple notation, e.g. `(1.6, 1, [0])_c` or `(2, 13, [0.45, 0.65])_g`.
    pub fn notation(&self) -> String {
        let timeouts: Vec<String> = self.ordered_timeouts().into_iter().map(fmt_short).collect();
        let (resource, suffix) = match self.config.kind {
            FunctionKind::Cpu => (fmt_short(self.config.cores), "c"),
            FunctionKind::Gpu => (self.config.mem.to_string(), "g"),
        };
        format!("({resource}, {}, [{}])_{suffix}", self.batch, timeouts.join(", "))
    }
}

/// Up to two decimals, trailing zeros dropped.
fn fmt_short(x: f64) -> String {
    let s = format!("{:.2}", (x * 100.0).round() / 100.0 + 0.0);
    let s = s.trim_end_matches('0').trim_end_matches('.');
    if s == "-0" { "0".into() } else { s.to_owned() }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProvisionResult {
    pub strategy: Strategy,
    pub plans: Vec<GroupPlan>,
    /// Rate-weighted cost per request over all plans.
    pub total_cost: f64,
    /// Same quantity before any merging (two-stage strategy only).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub singleton_cost: Option<f64>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub merge_log: Vec<MergeEvent>,
}

impl ProvisionResult {
    pub(crate) fn new(strategy: Strategy, plans: Vec<GroupPlan>) -> Self {
        let total_cost = weighted_cost(&plans);
        Self { strategy, plans, total_cost, singleton_cost: None, merge_log: Vec::new() }
    }

    /// Traffic share of each plan; sums to one.
    pub fn weights(&self) -> Vec<f64> {
        let total: f64 = self.plans.iter().map(|p| p.rate()).sum();
        self.plans.iter().map(|p| p.rate() / total).collect()
    }
}

pub(crate) fn weighted_cost(plans: &[GroupPlan]) -> f64 {
    let total: f64 = plans.iter().map(|p| p.rate()).sum();
    plans.iter().map(|p| p.rate() / total * p.predicted_cost).sum()
}

/// No configuration satisfies the constraints for the named applications.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("no feasible provisioning plan for {}", apps.join(", "))]
pub struct Infeasible {
    pub apps: Vec<String>,
}

/// Rates and SLOs of a group in ascending-SLO order, the shape every
/// candidate evaluation needs.
#[derive(Debug, Clone)]
pub(crate) struct GroupShape {
    slos: Vec<f64>,
    rates: Vec<f64>,
    total_rate: f64,
}

impl GroupShape {
    pub(crate) fn of(group: &Group) -> Self {
        let slos = group.apps().iter().map(|a| a.slo).collect();
        let rates: Vec<f64> = group.apps().iter().map(|a| a.rate).collect();
        let total_rate = rates.iter().sum();
        Self { slos, rates, total_rate }
    }

    /// Equivalent timeout when every member waits `slo - lmax`; `None` when
    /// some member's timeout would be negative.
    #[inline]
    pub(crate) fn eq_timeout(&self, lmax: f64) -> Option<f64> {
        let first = self.slos[0] - lmax;
        if first < 0.0 {
            return None;
        }
        let (mut rate, mut eq) = (self.rates[0], first);
        for (s, r) in self.slos[1..].iter().zip(&self.rates[1..]) {
            eq = pair_unchecked(rate, eq, *r, s - lmax);
            rate += r;
        }
        Some(eq)
    }

    #[inline]
    pub(crate) fn admits(&self, lmax: f64, batch: u32) -> Option<f64> {
        self.eq_timeout(lmax).filter(|&t| feasible_batch(self.total_rate, t, batch))
    }
}

fn build_plan(
    group: &Group,
    config: FunctionConfig,
    batch: u32,
    latency: LatencyEstimate,
    eq_timeout: f64,
    cost: f64,
) -> GroupPlan {
    let mut group = group.clone();
    let ids: Vec<(String, f64)> = group.apps().iter().map(|a| (a.id.clone(), a.slo - latency.max)).collect();
    for (id, t) in ids {
        group.set_timeout(&id, t.max(0.0)).expect("member timeout");
    }
    GroupPlan { group, config, batch, eq_timeout, predicted_cost: cost, latency, slo_risk: false }
}

/// Solver bound to one profile and price list.
#[derive(Debug, Clone)]
pub struct Provisioner<'a> {
    profile: &'a ModelProfile,
    pricing: PricingConfig,
    options: ProvisionOptions,
    gpu_binary_search: bool,
}

impl<'a> Provisioner<'a> {
    pub fn new(profile: &'a ModelProfile, pricing: PricingConfig) -> Self {
        Self::with_options(profile, pricing, ProvisionOptions::default())
    }

    pub fn with_options(profile: &'a ModelProfile, pricing: PricingConfig, options: ProvisionOptions) -> Self {
        let gpu_binary_search = gpu::max_latency_monotone_in_batch(profile);
        if !gpu_binary_search {
            log::warn!("GPU maximum latency is not monotone in batch size; falling back to linear batch scan");
        }
        Self { profile, pricing, options, gpu_binary_search }
    }

    pub fn profile(&self) -> &ModelProfile {
        self.profile
    }

    pub fn pricing(&self) -> &PricingConfig {
        &self.pricing
    }

    pub fn options(&self) -> &ProvisionOptions {
        &self.options
    }

    /// Cheapest of the CPU and GPU plans; CPU wins ties.
    pub fn func_provision(&self, group: &Group) -> Option<GroupPlan> {
        match (self.provision_cpu(group), self.provision_gpu(group)) {
            (Some(c), Some(g)) => Some(if cheaper(g.predicted_cost, c.predicted_cost) { g } else { c }),
            (c, g) => c.or(g),
        }
    }

    pub fn provision(&self, strategy: Strategy, apps: &[AppSpec], shards: Option<usize>) -> Result<ProvisionResult, Infeasible> {
        match strategy {
            Strategy::Harmony => self.harmony(apps),
            Strategy::Batch => self.batch_baseline(apps),
            Strategy::MbsPlus => self.mbs_plus(apps, shards),
        }
    }
}
