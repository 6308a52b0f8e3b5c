use super::{build_plan, cheaper, GroupPlan, GroupShape, Provisioner};
use crate::batching::{cost_from_latency, Group};
use crate::perfmodel::{FunctionConfig, LatencyEstimate};
use crate::profile::CpuLatencyCoeffs;

/// Best CPU candidate seen so far: (cost, grid index, batch).
type Best = Option<(f64, usize, u32)>;

fn improves(best: Best, cost: f64, idx: usize, batch: u32) -> bool {
    match best {
        None => true,
        Some((c, i, b)) => {
            cheaper(cost, c) || (!cheaper(c, cost) && (idx, batch) < (i, b))
        }
    }
}

/// Sign of d/dc [c * L(c)], which has the sign of the cost slope in `c`.
#[inline]
fn slope(k: &CpuLatencyCoeffs, c: f64) -> f64 {
    k.alpha * (1.0 - c / k.beta) * (-c / k.beta).exp() + k.gamma
}

/// Local minimum of the cost in `[lo, hi]`, if the slope changes sign there.
///
/// The slope decreases on `(0, 2 beta)` and increases afterwards towards
/// `gamma >= 0`, so on `[2 beta, inf)` it has at most one root, a local
/// minimum of the cost.
fn stationary_min(k: &CpuLatencyCoeffs, lo: f64, hi: f64) -> Option<f64> {
    let mut a = lo.max(2.0 * k.beta);
    let mut b = hi;
    if a >= b || slope(k, a) >= 0.0 || slope(k, b) <= 0.0 {
        return None;
    }
    for _ in 0..200 {
        let mid = 0.5 * (a + b);
        if slope(k, mid) < 0.0 { a = mid } else { b = mid }
        if b - a <= 1e-12 * b {
            break;
        }
    }
    Some(0.5 * (a + b))
}

impl Provisioner<'_> {
    /// Cheapest CPU function for `group`, or `None` if no core count and
    /// batch size meet every SLO.
    ///
    /// For each batch size the smallest feasible core count is found by
    /// binary search (a larger allocation only lowers the maximum latency).
    /// The cost is then minimized over the feasible suffix of the grid by
    /// evaluating its ends and the grid neighbours of the cost's interior
    /// local minimum. Ties go to fewer cores, then smaller batches.
    pub fn provision_cpu(&self, group: &Group) -> Option<GroupPlan> {
        let shape = GroupShape::of(group);
        let grid = self.profile.cores();
        let n = grid.len();
        let mut best: Best = None;

        for b in self.profile.cpu_batches() {
            let max = self.profile.cpu_max(b).expect("contiguous batches");
            let avg = self.profile.cpu_avg(b).expect("contiguous batches");
            let feasible = |i: usize| shape.admits(max.latency(grid.value(i)), b).is_some();
            if !feasible(n - 1) {
                continue;
            }
            let first = partition_point(n, |i| !feasible(i));

            let mut candidates = vec![first, n - 1];
            if self.pricing.k1 > 0.0 {
                if let Some(root) = stationary_min(avg, grid.value(first), grid.max) {
                    let below = ((root - grid.min) / grid.step).floor().max(0.0) as usize;
                    candidates.extend([below, below + 1].map(|i| i.clamp(first, n - 1)));
                }
            } else {
                candidates.truncate(1);
            }
            candidates.sort_unstable();
            candidates.dedup();

            for i in candidates {
                let c = grid.value(i);
                let cost = cost_from_latency(&self.pricing, &FunctionConfig::cpu(c), avg.latency(c), b);
                if improves(best, cost, i, b) {
                    best = Some((cost, i, b));
                }
            }
        }

        let (cost, i, b) = best?;
        let c = grid.value(i);
        let latency = LatencyEstimate {
            avg: self.profile.cpu_avg(b)?.latency(c),
            max: self.profile.cpu_max(b)?.latency(c),
        };
        let eq = shape.eq_timeout(latency.max)?;
        Some(build_plan(group, FunctionConfig::cpu(c), b, latency, eq, cost))
    }
}

/// First index in `0..n` where `pred` turns false; `pred` must be true on a
/// prefix and false afterwards.
pub(crate) fn partition_point(n: usize, pred: impl Fn(usize) -> bool) -> usize {
    let (mut lo, mut hi) = (0usize, n);
    while lo < hi {
        let mid = lo + (hi - lo) / 2;
        if pred(mid) { lo = mid + 1 } else { hi = mid }
    }
    lo
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::batching::AppSpec;
    use crate::perfmodel::fixtures::simple_profile;
    use crate::profile::PricingConfig;

    fn single(slo: f64, rate: f64) -> Group {
        Group::singleton(AppSpec::new("a", slo, rate).unwrap()).unwrap()
    }

    #[test]
    fn slope_has_single_root_past_two_beta() {
        let k = CpuLatencyCoeffs::new(2.0, 1.0, 0.05).unwrap();
        let r = stationary_min(&k, 0.05, 16.0).unwrap();
        assert!(r > 2.0 && slope(&k, r).abs() < 1e-9);
        // gamma large enough keeps the slope positive: no interior minimum
        let k = CpuLatencyCoeffs::new(2.0, 1.0, 0.3).unwrap();
        assert!(stationary_min(&k, 0.05, 16.0).is_none());
    }

    #[test]
    fn partition_point_matches_linear_scan() {
        for cut in 0..=10 {
            assert_eq!(partition_point(10, |i| i < cut), cut);
        }
    }

    #[test]
    fn loose_slo_takes_minimum_feasible_cores() {
        // with gamma = 0.3 cost rises with cores everywhere
        let p = simple_profile();
        let prov = Provisioner::new(&p, PricingConfig::alibaba_2023());
        let plan = prov.provision_cpu(&single(1.0, 5.0)).unwrap();
        // max latency 2.5 e^{-c} + 0.35 <= 1.0  <=>  c >= ln(2.5 / 0.65) = 1.347
        assert!((plan.config.cores - 1.35).abs() < 1e-9, "{}", plan.config.cores);
        assert_eq!(plan.batch, 1);
        assert!(plan.latency.max <= 1.0);
    }

    #[test]
    fn unreachable_slo_is_infeasible() {
        let p = simple_profile();
        let prov = Provisioner::new(&p, PricingConfig::alibaba_2023());
        assert!(prov.provision_cpu(&single(0.3, 5.0)).is_none());
    }

    #[test]
    fn zero_core_price_picks_smallest_feasible() {
        let p = simple_profile();
        let prov = Provisioner::new(&p, PricingConfig { k1: 0.0, k2: 1.5e-5, k3: 1.3e-7 });
        let plan = prov.provision_cpu(&single(2.0, 5.0)).unwrap();
        assert_eq!(plan.config.cores, p.cores().value(partition_point(p.cores().len(), |i| {
            p.cpu_max(1).unwrap().latency(p.cores().value(i)) > 2.0
        })));
    }
}
