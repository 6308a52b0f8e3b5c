use super::{cheaper, weighted_cost, GroupPlan, Infeasible, ProvisionResult, Provisioner, Strategy};
use crate::batching::{cost_from_latency, AppSpec, Group};
use crate::perfmodel::{FunctionConfig, LatencyEstimate};

impl Provisioner<'_> {
    /// CPU-only, one function per application, found by exhaustive search
    /// over cores, batch size and a timeout grid. Latency is taken as
    /// deterministic: the average latency serves for both cost and SLO
    /// checks. Plans whose maximum latency would break the SLO are flagged
    /// with `slo_risk`.
    pub fn batch_baseline(&self, apps: &[AppSpec]) -> Result<ProvisionResult, Infeasible> {
        let mut plans = Vec::new();
        let mut failed = Vec::new();
        for app in apps {
            match self.batch_single(app) {
                Some(p) => plans.push(p),
                None => failed.push(app.id.clone()),
            }
        }
        if !failed.is_empty() || plans.is_empty() {
            return Err(Infeasible { apps: failed });
        }
        Ok(ProvisionResult::new(Strategy::Batch, plans))
    }

    fn batch_single(&self, app: &AppSpec) -> Option<GroupPlan> {
        let grid = self.profile.cores();
        let step = self.options.batch_timeout_step;
        let steps = (app.slo / step).floor() as usize;
        // (cost, core index, batch, timeout index)
        let mut best: Option<(f64, usize, u32, usize)> = None;

        for i in 0..grid.len() {
            let c = grid.value(i);
            for b in self.profile.cpu_batches() {
                let avg = self.profile.cpu_avg(b)?.latency(c);
                let cost = cost_from_latency(&self.pricing, &FunctionConfig::cpu(c), avg, b);
                for j in 0..=steps {
                    let t = j as f64 * step;
                    if t + avg > app.slo || (app.rate * t).floor() + 1.0 < b as f64 {
                        continue;
                    }
                    let better = match best {
                        None => true,
                        Some((bc, bi, bb, bj)) => {
                            cheaper(cost, bc) || (!cheaper(bc, cost) && (i, b, std::cmp::Reverse(j)) < (bi, bb, std::cmp::Reverse(bj)))
                        }
                    };
                    if better {
                        best = Some((cost, i, b, j));
                    }
                }
            }
        }

        let (cost, i, b, j) = best?;
        let c = grid.value(i);
        let t = j as f64 * step;
        let latency = LatencyEstimate {
            avg: self.profile.cpu_avg(b)?.latency(c),
            max: self.profile.cpu_max(b)?.latency(c),
        };
        let mut group = Group::singleton(app.clone()).ok()?;
        group.set_timeout(&app.id, t).ok()?;
        Some(GroupPlan {
            group,
            config: FunctionConfig::cpu(c),
            batch: b,
            eq_timeout: t,
            predicted_cost: cost,
            latency,
            slo_risk: t + latency.max > app.slo,
        })
    }

    /// Even split of the request stream. Applications are laid out on a
    /// rate line in ascending-SLO order and the line is cut into `k`
    /// equal-rate shards; an application straddling a cut is split between
    /// shards. Every member of a shard inherits the shard's strictest SLO.
    /// With `shards = None` every `k` in `1..=apps.len()` is tried and the
    /// cheapest split kept.
    pub fn mbs_plus(&self, apps: &[AppSpec], shards: Option<usize>) -> Result<ProvisionResult, Infeasible> {
        let all = || Infeasible { apps: apps.iter().map(|a| a.id.clone()).collect() };
        if apps.is_empty() {
            return Err(all());
        }
        let ks: Vec<usize> = match shards {
            Some(k) if k >= 1 => vec![k],
            Some(_) => return Err(all()),
            None => (1..=apps.len()).collect(),
        };
        let mut best: Option<Vec<GroupPlan>> = None;
        let mut last_err = None;
        for k in ks {
            match self.mbs_split(apps, k) {
                Ok(plans) => {
                    if best.as_ref().is_none_or(|b| cheaper(weighted_cost(&plans), weighted_cost(b))) {
                        best = Some(plans);
                    }
                }
                Err(e) => last_err = Some(e),
            }
        }
        best.map(|plans| ProvisionResult::new(Strategy::MbsPlus, plans)).ok_or_else(|| last_err.unwrap_or_else(all))
    }

    fn mbs_split(&self, apps: &[AppSpec], k: usize) -> Result<Vec<GroupPlan>, Infeasible> {
        let shards = split_even(apps, k);
        let mut plans = Vec::with_capacity(shards.len());
        let mut failed = Vec::new();
        for members in shards {
            let group = Group::new(members).map_err(|_| Infeasible { apps: vec![] })?;
            match self.func_provision(&group) {
                Some(p) => plans.push(p),
                None => failed.extend(group.apps().iter().map(|a| a.id.clone())),
            }
        }
        if failed.is_empty() { Ok(plans) } else { Err(Infeasible { apps: failed }) }
    }
}

/// Cuts the ascending-SLO rate line into `k` equal-rate pieces.
pub(crate) fn split_even(apps: &[AppSpec], k: usize) -> Vec<Vec<AppSpec>> {
    let mut sorted: Vec<&AppSpec> = apps.iter().collect();
    sorted.sort_by(|a, b| a.slo.total_cmp(&b.slo).then_with(|| a.id.cmp(&b.id)));
    let total: f64 = sorted.iter().map(|a| a.rate).sum();
    let width = total / k as f64;
    let eps = 1e-12 * total;

    let mut shards = Vec::with_capacity(k);
    for s in 0..k {
        let (lo, hi) = (s as f64 * width, if s + 1 == k { total } else { (s + 1) as f64 * width });
        let mut members = Vec::new();
        let mut pos = 0.0;
        for a in &sorted {
            let (a_lo, a_hi) = (pos, pos + a.rate);
            pos = a_hi;
            let overlap = a_hi.min(hi) - a_lo.max(lo);
            if overlap > eps {
                members.push(AppSpec { id: a.id.clone(), slo: a.slo, rate: overlap });
            }
        }
        if let Some(min_slo) = members.iter().map(|m| m.slo).reduce(f64::min) {
            for m in &mut members {
                m.slo = min_slo;
            }
            shards.push(members);
        }
    }
    shards
}
