use super::{build_plan, cheaper, cpu::partition_point, GroupPlan, GroupShape, Provisioner};
use crate::batching::{cost_from_latency, Group};
use crate::perfmodel::{gpu_avg_latency, gpu_max_latency, FunctionConfig, LatencyEstimate};
use crate::profile::ModelProfile;

fn latency(profile: &ModelProfile, mem: u32, batch: u32) -> LatencyEstimate {
    let platform = profile.platform();
    let l0 = profile.gpu().base_latency(batch);
    if mem == platform.m_max {
        return LatencyEstimate { avg: l0, max: l0 };
    }
    LatencyEstimate { avg: gpu_avg_latency(l0, mem, platform), max: gpu_max_latency(l0, mem, platform) }
}

/// Whether the maximum latency never decreases with the batch size for any
/// memory size, which makes batch feasibility downward-closed.
pub(super) fn max_latency_monotone_in_batch(profile: &ModelProfile) -> bool {
    profile.platform().mem_sizes().all(|m| {
        (1..profile.gpu_batch_max()).all(|b| latency(profile, m, b + 1).max >= latency(profile, m, b).max)
    })
}

impl Provisioner<'_> {
    /// Cheapest GPU function for `group`.
    ///
    /// Per memory size the largest feasible batch is located by binary
    /// search; cost per request falls with the batch size, so that batch is
    /// the cheapest for this memory size. Ties go to the smaller memory.
    pub fn provision_gpu(&self, group: &Group) -> Option<GroupPlan> {
        let shape = GroupShape::of(group);
        let bmax = self.profile.gpu_batch_max();
        let mut best: Option<(f64, u32, u32)> = None;

        for m in self.profile.platform().mem_sizes() {
            let feasible = |b: u32| {
                self.profile.mem().demand(b) <= m as f64
                    && shape.admits(latency(self.profile, m, b).max, b).is_some()
            };
            let cost = |b: u32| {
                cost_from_latency(&self.pricing, &FunctionConfig::gpu(m), latency(self.profile, m, b).avg, b)
            };
            let pick = if self.gpu_binary_search {
                // feasible exactly on 1..=b*
                let count = partition_point(bmax as usize, |i| feasible(i as u32 + 1));
                (count > 0).then(|| (cost(count as u32), count as u32))
            } else {
                (1..=bmax)
                    .filter(|&b| feasible(b))
                    .map(|b| (cost(b), b))
                    .reduce(|x, y| if cheaper(y.0, x.0) { y } else { x })
            };
            if let Some((c, b)) = pick {
                if best.is_none_or(|(bc, _, _)| cheaper(c, bc)) {
                    best = Some((c, m, b));
                }
            }
        }

        let (cost, m, b) = best?;
        let lat = latency(self.profile, m, b);
        let eq = shape.eq_timeout(lat.max)?;
        Some(build_plan(group, FunctionConfig::gpu(m), b, lat, eq, cost))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::batching::AppSpec;
    use crate::perfmodel::fixtures::simple_profile;
    use crate::profile::PricingConfig;

    #[test]
    fn fixture_is_monotone() {
        assert!(max_latency_monotone_in_batch(&simple_profile()));
    }

    #[test]
    fn high_rate_fills_large_batches() {
        let p = simple_profile();
        let prov = Provisioner::new(&p, PricingConfig::alibaba_2023());
        let g = Group::singleton(AppSpec::new("a", 1.0, 100.0).unwrap()).unwrap();
        let plan = prov.provision_gpu(&g).unwrap();
        assert!(plan.batch > 16, "{}", plan.notation());
        assert!(p.mem().demand(plan.batch) <= plan.config.mem as f64);
        assert!(plan.latency.max <= 1.0);
    }

    #[test]
    fn gpu_cost_ignores_memory_size() {
        let p = simple_profile();
        let k = PricingConfig::alibaba_2023();
        let a = cost_from_latency(&k, &FunctionConfig::gpu(3), latency(&p, 3, 8).avg, 8);
        let b = cost_from_latency(&k, &FunctionConfig::gpu(17), latency(&p, 17, 8).avg, 8);
        assert!(((a - b) / a).abs() < 1e-12);
    }
}
