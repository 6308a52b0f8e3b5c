//! Discrete-event check of provisioning plans.
//!
//! Each group runs on its own function with unlimited instance parallelism:
//! every dispatched batch gets a fresh instance, so batches never queue
//! behind each other. Requests wait only in the batching buffer.

mod arrivals;
mod exec;
mod group;

use std::collections::BTreeMap;
use std::io::Write;

use serde::{Deserialize, Serialize};

pub use arrivals::{generate_arrivals, merge_streams, read_trace, TraceRecord};
pub use exec::{gpu_slice_completion, sample_between, sample_cpu_latency, CpuDraw};

use crate::error::{Error, Result};
use crate::perfmodel::FunctionKind;
use crate::profile::{ModelProfile, PricingConfig};
use crate::provisioner::ProvisionResult;
use arrivals::{rng_for, stream_seed};
use group::{run_group, GroupRun};

/// How GPU execution time is drawn; CPU batches always draw uniformly
/// between the average/maximum envelope.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LatencyMode {
    /// Slice schedule with a uniformly random cycle phase per batch.
    #[default]
    AnalyticSampled,
    /// Slice schedule aligned to the simulation clock: a batch dispatched
    /// at time `t` starts at phase `t mod cycle`.
    SliceExact,
}

impl std::str::FromStr for LatencyMode {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s {
            "analytic-sampled" | "analytic" => Ok(LatencyMode::AnalyticSampled),
            "slice-exact" | "exact" => Ok(LatencyMode::SliceExact),
            other => Err(format!("unknown latency mode `{other}`")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    /// Simulated seconds per replication (ignored for trace replay).
    pub duration: f64,
    pub seed: u64,
    pub latency_mode: LatencyMode,
    pub replications: u32,
    /// Keep one row per request for the CSV log.
    #[serde(default, skip_serializing)]
    pub keep_log: bool,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self { duration: 3600.0, seed: 0, latency_mode: LatencyMode::AnalyticSampled, replications: 1, keep_log: false }
    }
}

impl SimConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.duration.is_finite() && self.duration > 0.0) {
            return Err(Error::InvalidParameter(format!("duration must be positive (got {})", self.duration)));
        }
        if self.replications < 1 {
            return Err(Error::InvalidParameter("replications must be >= 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AppStats {
    pub id: String,
    pub slo: f64,
    pub count: u64,
    pub mean_latency: f64,
    pub p99_latency: f64,
    pub max_latency: f64,
    pub mean_wait: f64,
    pub violations: u64,
    pub violation_rate: f64,
    /// Requests that waited longer than their own timeout.
    pub wait_violations: u64,
    /// Requests whose batch ran longer than the model's maximum latency.
    pub exec_violations: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupStats {
    pub plan: String,
    pub kind: FunctionKind,
    pub batch: u32,
    pub requests: u64,
    pub dispatches: u64,
    pub mean_batch: f64,
    /// Billed cost per request, each dispatch billed at its actual size.
    pub realized_cost: f64,
    pub predicted_cost: f64,
    /// Mean buffer wait of the first request of each batch.
    pub mean_first_wait: f64,
    pub eq_timeout: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimTotals {
    pub requests: u64,
    pub violations: u64,
    pub violation_rate: f64,
    pub realized_cost: f64,
    pub predicted_cost: f64,
    /// `realized / predicted - 1`.
    pub cost_error: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimReport {
    pub config: SimConfig,
    pub apps: Vec<AppStats>,
    pub groups: Vec<GroupStats>,
    pub totals: SimTotals,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub notes: Vec<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RequestRecord {
    pub app: usize,
    pub group: usize,
    pub arrival: f64,
    pub dispatch: f64,
    pub completion: f64,
    pub batch: u32,
}

#[derive(Debug, Clone)]
pub struct SimOutput {
    pub report: SimReport,
    /// Per-request rows, present when `keep_log` is set.
    pub log: Vec<RequestRecord>,
}

impl SimOutput {
    /// `app_id,arrival,dispatch,completion,slo,violated` rows.
    pub fn write_log_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["app_id", "arrival", "dispatch", "completion", "slo", "violated"])?;
        for r in &self.log {
            let app = &self.report.apps[r.app];
            let violated = r.completion - r.arrival > app.slo + SLO_EPS;
            w.write_record([
                app.id.clone(),
                format!("{:.9}", r.arrival),
                format!("{:.9}", r.dispatch),
                format!("{:.9}", r.completion),
                format!("{}", app.slo),
                (violated as u8).to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}

const SLO_EPS: f64 = 1e-9;

/// Where each member of each plan lands in the per-app report.
struct Layout {
    ids: Vec<String>,
    slos: Vec<f64>,
    /// `members[g][k]` = report index of member `k` of plan `g`.
    members: Vec<Vec<usize>>,
}

impl Layout {
    fn of(result: &ProvisionResult) -> Self {
        let mut index: BTreeMap<String, usize> = BTreeMap::new();
        let (mut ids, mut slos) = (Vec::new(), Vec::new());
        let members = result
            .plans
            .iter()
            .map(|p| {
                p.group
                    .apps()
                    .iter()
                    .map(|a| {
                        *index.entry(a.id.clone()).or_insert_with(|| {
                            ids.push(a.id.clone());
                            slos.push(a.slo);
                            ids.len() - 1
                        })
                    })
                    .collect()
            })
            .collect();
        Layout { ids, slos, members }
    }
}

#[derive(Default)]
struct AppAcc {
    latencies: Vec<f64>,
    wait_sum: f64,
    violations: u64,
    wait_violations: u64,
    exec_violations: u64,
}

#[derive(Default)]
struct GroupAcc {
    requests: u64,
    dispatches: u64,
    batch_sum: u64,
    first_wait_sum: f64,
    cost_sum: f64,
}

struct Collector<'r> {
    result: &'r ProvisionResult,
    layout: Layout,
    apps: Vec<AppAcc>,
    groups: Vec<GroupAcc>,
    fallback_draws: u64,
    keep_log: bool,
    log: Vec<RequestRecord>,
}

impl<'r> Collector<'r> {
    fn new(result: &'r ProvisionResult, keep_log: bool) -> Self {
        let layout = Layout::of(result);
        let apps = (0..layout.ids.len()).map(|_| AppAcc::default()).collect();
        let groups = result.plans.iter().map(|_| GroupAcc::default()).collect();
        Self { result, layout, apps, groups, fallback_draws: 0, keep_log, log: Vec::new() }
    }

    fn absorb(&mut self, g: usize, run: GroupRun) {
        let plan = &self.result.plans[g];
        let timeouts = plan.ordered_timeouts();
        let acc = &mut self.groups[g];
        acc.requests += run.served.len() as u64;
        acc.dispatches += run.dispatches;
        acc.batch_sum += run.batch_sum;
        acc.first_wait_sum += run.first_wait_sum;
        acc.cost_sum += run.cost_sum;
        self.fallback_draws += run.fallback_draws;
        for s in run.served {
            let idx = self.layout.members[g][s.app];
            let slo = plan.group.apps()[s.app].slo;
            let a = &mut self.apps[idx];
            let latency = s.completion - s.arrival;
            let wait = s.dispatch - s.arrival;
            a.latencies.push(latency);
            a.wait_sum += wait;
            if latency > slo + SLO_EPS {
                a.violations += 1;
            }
            if wait > timeouts[s.app] + SLO_EPS {
                a.wait_violations += 1;
            }
            if s.exec_over_bound {
                a.exec_violations += 1;
            }
            if self.keep_log {
                self.log.push(RequestRecord {
                    app: idx,
                    group: g,
                    arrival: s.arrival,
                    dispatch: s.dispatch,
                    completion: s.completion,
                    batch: s.batch,
                });
            }
        }
    }

    fn finish(self, config: &SimConfig) -> SimOutput {
        let apps: Vec<AppStats> = self
            .apps
            .into_iter()
            .enumerate()
            .map(|(i, mut a)| {
                a.latencies.sort_by(f64::total_cmp);
                let n = a.latencies.len();
                let nf = n.max(1) as f64;
                let p99 = if n == 0 { 0.0 } else { a.latencies[((0.99 * n as f64).ceil() as usize).clamp(1, n) - 1] };
                AppStats {
                    id: self.layout.ids[i].clone(),
                    slo: self.layout.slos[i],
                    count: n as u64,
                    mean_latency: a.latencies.iter().sum::<f64>() / nf,
                    p99_latency: p99,
                    max_latency: a.latencies.last().copied().unwrap_or(0.0),
                    mean_wait: a.wait_sum / nf,
                    violations: a.violations,
                    violation_rate: a.violations as f64 / nf,
                    wait_violations: a.wait_violations,
                    exec_violations: a.exec_violations,
                }
            })
            .collect();

        let groups: Vec<GroupStats> = self
            .result
            .plans
            .iter()
            .zip(&self.groups)
            .map(|(p, g)| {
                let d = g.dispatches.max(1) as f64;
                GroupStats {
                    plan: p.notation(),
                    kind: p.kind(),
                    batch: p.batch,
                    requests: g.requests,
                    dispatches: g.dispatches,
                    mean_batch: g.batch_sum as f64 / d,
                    realized_cost: g.cost_sum / g.requests.max(1) as f64,
                    predicted_cost: p.predicted_cost,
                    mean_first_wait: g.first_wait_sum / d,
                    eq_timeout: p.eq_timeout,
                }
            })
            .collect();

        let requests: u64 = groups.iter().map(|g| g.requests).sum();
        let violations: u64 = apps.iter().map(|a| a.violations).sum();
        let realized_cost = self.groups.iter().map(|g| g.cost_sum).sum::<f64>() / requests.max(1) as f64;
        let predicted_cost = self.result.total_cost;
        let mut notes = Vec::new();
        if self.fallback_draws > 0 {
            notes.push(format!(
                "{} CPU batches drew from the two-point fallback (2*avg - max < 0)",
                self.fallback_draws
            ));
        }
        for (p, g) in self.result.plans.iter().zip(&groups) {
            if p.latency.avg_exceeds_max() {
                notes.push(format!("{}: average latency exceeds maximum latency", g.plan));
            }
        }
        let report = SimReport {
            config: config.clone(),
            apps,
            groups,
            totals: SimTotals {
                requests,
                violations,
                violation_rate: violations as f64 / requests.max(1) as f64,
                realized_cost,
                predicted_cost,
                cost_error: realized_cost / predicted_cost - 1.0,
            },
            notes,
        };
        SimOutput { report, log: self.log }
    }
}

/// Simulates every group of `result` under Poisson load at the plan's rates.
pub fn simulate(
    result: &ProvisionResult,
    profile: &ModelProfile,
    pricing: &PricingConfig,
    config: &SimConfig,
) -> Result<SimOutput> {
    config.validate()?;
    let mut col = Collector::new(result, config.keep_log);
    for rep in 0..config.replications as u64 {
        for (g, plan) in result.plans.iter().enumerate() {
            let rates: Vec<f64> = plan.group.apps().iter().map(|a| a.rate).collect();
            let streams = generate_arrivals(&rates, config.duration, stream_seed(config.seed, &[g as u64, rep]));
            let arrivals = merge_streams(&streams);
            let mut rng = rng_for(config.seed, &[g as u64, rep, 1]);
            col.absorb(g, run_group(plan, profile, pricing, config.latency_mode, &arrivals, &mut rng));
        }
    }
    Ok(col.finish(config))
}

/// Replays recorded arrivals. An application served by several groups has
/// each request routed to one of them at random, in proportion to the rate
/// the plans assign it.
pub fn simulate_trace(
    result: &ProvisionResult,
    profile: &ModelProfile,
    pricing: &PricingConfig,
    config: &SimConfig,
    trace: &[TraceRecord],
) -> Result<SimOutput> {
    use rand::Rng;

    config.validate()?;
    // app id -> [(group, member index, rate)]
    let mut routes: BTreeMap<&str, Vec<(usize, usize, f64)>> = BTreeMap::new();
    for (g, plan) in result.plans.iter().enumerate() {
        for (k, a) in plan.group.apps().iter().enumerate() {
            routes.entry(a.id.as_str()).or_default().push((g, k, a.rate));
        }
    }
    let mut col = Collector::new(result, config.keep_log);
    for rep in 0..config.replications as u64 {
        let mut router = rng_for(config.seed, &[u64::MAX, rep]);
        let mut per_group: Vec<Vec<(f64, usize)>> = vec![Vec::new(); result.plans.len()];
        for r in trace {
            let options = routes
                .get(r.app.as_str())
                .ok_or_else(|| Error::InvalidParameter(format!("trace names unknown application `{}`", r.app)))?;
            let (g, k) = if options.len() == 1 {
                (options[0].0, options[0].1)
            } else {
                let total: f64 = options.iter().map(|o| o.2).sum();
                let mut x = router.random::<f64>() * total;
                let mut pick = options[options.len() - 1];
                for &o in options {
                    if x < o.2 {
                        pick = o;
                        break;
                    }
                    x -= o.2;
                }
                (pick.0, pick.1)
            };
            per_group[g].push((r.time, k));
        }
        for (g, arrivals) in per_group.iter().enumerate() {
            let mut rng = rng_for(config.seed, &[g as u64, rep, 1]);
            col.absorb(g, run_group(&result.plans[g], profile, pricing, config.latency_mode, arrivals, &mut rng));
        }
    }
    Ok(col.finish(config))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::batching::{AppSpec, Group};
    use crate::perfmodel::fixtures::simple_profile;
    use crate::provisioner::{GroupPlan, Provisioner};
    use crate::FunctionConfig;

    fn plan_with(p: &ModelProfile, config: FunctionConfig, batch: u32, apps: &[(&str, f64, f64, f64)]) -> GroupPlan {
        let group = Group::new(apps.iter().map(|a| AppSpec::new(a.0, a.1, a.2).unwrap()).collect()).unwrap();
        let mut group = group;
        for a in apps {
            group.set_timeout(a.0, a.3).unwrap();
        }
        let latency = crate::perfmodel::predict(p, &config, batch).unwrap();
        let eq = crate::batching::equivalent_timeout_group(&group).unwrap();
        GroupPlan { group, config, batch, eq_timeout: eq, predicted_cost: 1.0, latency, slo_risk: false }
    }

    fn wrap(plans: Vec<GroupPlan>) -> ProvisionResult {
        let total_cost = 1.0;
        ProvisionResult { strategy: crate::provisioner::Strategy::Harmony, plans, total_cost, singleton_cost: None, merge_log: vec![] }
    }

    #[test]
    fn zero_timeout_dispatches_immediately() {
        let p = simple_profile();
        let plan = plan_with(&p, FunctionConfig::cpu(2.0), 1, &[("a", 2.0, 20.0, 0.0)]);
        let out = simulate(&wrap(vec![plan]), &p, &PricingConfig::alibaba_2023(), &SimConfig { duration: 100.0, ..Default::default() }).unwrap();
        let a = &out.report.apps[0];
        assert_eq!(a.mean_wait, 0.0);
        assert_eq!(out.report.groups[0].mean_batch, 1.0);
        assert_eq!(a.violations, 0);
    }

    #[test]
    fn first_request_wait_matches_equivalent_timeout() {
        let p = simple_profile();
        // batch cap never reached
        let plan = plan_with(&p, FunctionConfig::gpu(24), 32, &[("a", 2.0, 1.0, 0.3), ("b", 2.0, 2.0, 0.9)]);
        let eq = plan.eq_timeout;
        let cfg = SimConfig { duration: 20_000.0, seed: 5, ..Default::default() };
        let out = simulate(&wrap(vec![plan]), &p, &PricingConfig::alibaba_2023(), &cfg).unwrap();
        let g = &out.report.groups[0];
        assert!(g.dispatches > 10_000);
        assert!((g.mean_first_wait - eq).abs() / eq < 0.02, "{} vs {eq}", g.mean_first_wait);
    }

    #[test]
    fn every_arrival_served_once_and_batches_capped() {
        let p = simple_profile();
        let prov = Provisioner::new(&p, PricingConfig::alibaba_2023());
        let apps = [AppSpec::new("a", 0.6, 30.0).unwrap(), AppSpec::new("b", 1.0, 20.0).unwrap()];
        let res = prov.harmony(&apps).unwrap();
        let cfg = SimConfig { duration: 200.0, seed: 11, keep_log: true, ..Default::default() };
        let out = simulate(&res, &p, prov.pricing(), &cfg).unwrap();
        let generated: usize = res
            .plans
            .iter()
            .enumerate()
            .map(|(g, plan)| {
                let rates: Vec<f64> = plan.group.apps().iter().map(|a| a.rate).collect();
                generate_arrivals(&rates, 200.0, stream_seed(11, &[g as u64, 0])).iter().map(Vec::len).sum::<usize>()
            })
            .sum();
        assert_eq!(out.log.len(), generated);
        assert_eq!(out.report.totals.requests as usize, generated);
        for r in &out.log {
            assert!(r.arrival <= r.dispatch && r.dispatch <= r.completion);
            assert!(r.batch <= res.plans[r.group].batch);
        }
        assert_eq!(out.report.totals.violations, 0);
    }

    #[test]
    fn reports_are_deterministic() {
        let p = simple_profile();
        let prov = Provisioner::new(&p, PricingConfig::alibaba_2023());
        let res = prov.harmony(&[AppSpec::new("a", 0.8, 12.0).unwrap()]).unwrap();
        let cfg = SimConfig { duration: 100.0, seed: 3, replications: 2, ..Default::default() };
        let a = serde_json::to_string(&simulate(&res, &p, prov.pricing(), &cfg).unwrap().report).unwrap();
        let b = serde_json::to_string(&simulate(&res, &p, prov.pricing(), &cfg).unwrap().report).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn trace_replay_routes_known_apps() {
        let p = simple_profile();
        let prov = Provisioner::new(&p, PricingConfig::alibaba_2023());
        let res = prov.harmony(&[AppSpec::new("a", 0.8, 12.0).unwrap()]).unwrap();
        let trace = vec![TraceRecord { time: 0.1, app: "a".into() }, TraceRecord { time: 0.2, app: "a".into() }];
        let out = simulate_trace(&res, &p, prov.pricing(), &SimConfig::default(), &trace).unwrap();
        assert_eq!(out.report.totals.requests, 2);
        let bad = vec![TraceRecord { time: 0.1, app: "zz".into() }];
        assert!(simulate_trace(&res, &p, prov.pricing(), &SimConfig::default(), &bad).is_err());
    }
}
