//! Event loop for one function serving one group.

use rand::Rng;

use super::exec::{gpu_slice_completion, sample_between};
use super::LatencyMode;
use crate::batching::cost_from_latency;
use crate::perfmodel::{predict, FunctionKind};
use crate::profile::{ModelProfile, PricingConfig};
use crate::provisioner::GroupPlan;

#[derive(Debug, Clone, Copy, PartialEq)]
pub(crate) struct Served {
    /// Index into the plan's member list.
    pub app: usize,
    pub arrival: f64,
    pub dispatch: f64,
    pub completion: f64,
    pub batch: u32,
    pub exec_over_bound: bool,
}

#[derive(Debug, Clone, Default)]
pub(crate) struct GroupRun {
    pub served: Vec<Served>,
    pub dispatches: u64,
    pub batch_sum: u64,
    pub first_wait_sum: f64,
    /// Sum over dispatches of the billed amount for the actual batch size.
    pub cost_sum: f64,
    pub fallback_draws: u64,
}

/// Model latency and billing per actual batch size `1..=plan.batch`.
struct SizeTable {
    avg: Vec<f64>,
    max: Vec<f64>,
    l0: Vec<f64>,
    bill: Vec<f64>,
}

impl SizeTable {
    fn new(plan: &GroupPlan, profile: &ModelProfile, pricing: &PricingConfig) -> Self {
        let n = plan.batch as usize;
        let mut t = SizeTable { avg: vec![0.0; n + 1], max: vec![0.0; n + 1], l0: vec![0.0; n + 1], bill: vec![0.0; n + 1] };
        for b in 1..=plan.batch {
            let e = predict(profile, &plan.config, b).expect("plan within profiled ranges");
            let i = b as usize;
            t.avg[i] = e.avg;
            t.max[i] = e.max;
            t.l0[i] = profile.gpu().base_latency(b);
            t.bill[i] = cost_from_latency(pricing, &plan.config, e.avg, 1);
        }
        t
    }
}

/// Serves `arrivals` (time, member index), chronological, with FIFO
/// buffering: a batch leaves when it is full or when the earliest member
/// deadline `arrival + timeout` passes, whichever comes first.
pub(crate) fn run_group<R: Rng + ?Sized>(
    plan: &GroupPlan,
    profile: &ModelProfile,
    pricing: &PricingConfig,
    mode: LatencyMode,
    arrivals: &[(f64, usize)],
    rng: &mut R,
) -> GroupRun {
    let timeouts = plan.ordered_timeouts();
    let table = SizeTable::new(plan, profile, pricing);
    let cap = plan.batch as usize;
    let platform = *profile.platform();
    let cycle = platform.cycle();

    let mut run = GroupRun { served: Vec::with_capacity(arrivals.len()), ..Default::default() };
    let mut buf: Vec<(f64, usize)> = Vec::with_capacity(cap);
    let mut deadline = f64::INFINITY;

    let mut flush = |buf: &mut Vec<(f64, usize)>, at: f64, run: &mut GroupRun| {
        let size = buf.len();
        let exec = match plan.config.kind {
            FunctionKind::Cpu => {
                let d = sample_between(table.avg[size], table.max[size], rng);
                run.fallback_draws += d.fallback as u64;
                d.latency
            }
            FunctionKind::Gpu => {
                let phase = match mode {
                    LatencyMode::AnalyticSampled => rng.random_range(0.0..cycle),
                    LatencyMode::SliceExact => at.rem_euclid(cycle),
                };
                gpu_slice_completion(table.l0[size], plan.config.mem, &platform, phase)
            }
        };
        let over = exec > table.max[size] * (1.0 + 1e-9);
        run.dispatches += 1;
        run.batch_sum += size as u64;
        run.first_wait_sum += at - buf[0].0;
        run.cost_sum += table.bill[size];
        for &(arrival, app) in buf.iter() {
            run.served.push(Served {
                app,
                arrival,
                dispatch: at,
                completion: at + exec,
                batch: size as u32,
                exec_over_bound: over,
            });
        }
        buf.clear();
    };

    for &(t, app) in arrivals {
        if !buf.is_empty() && deadline <= t {
            flush(&mut buf, deadline, &mut run);
            deadline = f64::INFINITY;
        }
        buf.push((t, app));
        deadline = deadline.min(t + timeouts[app]);
        if buf.len() == cap {
            flush(&mut buf, t, &mut run);
            deadline = f64::INFINITY;
        }
    }
    if !buf.is_empty() {
        flush(&mut buf, deadline, &mut run);
    }
    run
}
