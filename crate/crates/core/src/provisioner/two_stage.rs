use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use super::{cheaper, weighted_cost, GroupPlan, Infeasible, KneeMode, ProvisionResult, Provisioner, Strategy};
use crate::batching::{AppSpec, Group};
use crate::perfmodel::FunctionKind;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MergeStage {
    Cpu,
    Gpu,
}

/// One attempted merge of consecutive groups.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MergeEvent {
    pub stage: MergeStage,
    /// Member ids of the candidate union.
    pub apps: Vec<String>,
    /// Workload cost per request before the attempt.
    pub total_before: f64,
    /// Workload cost per request had the union been adopted; `None` when the
    /// union has no feasible plan.
    pub total_after: Option<f64>,
    pub accepted: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub plan: Option<String>,
}

struct Merger<'p, 'a> {
    prov: &'p Provisioner<'a>,
    list: Vec<GroupPlan>,
    total_rate: f64,
    log: Vec<MergeEvent>,
}

impl Merger<'_, '_> {
    fn total(&self) -> f64 {
        self.list.iter().map(|p| p.rate() * p.predicted_cost).sum::<f64>() / self.total_rate
    }

    /// Unions `list[low..high]`; keeps the union only if its cost is lower
    /// than the combined cost of the parts.
    fn merge(&mut self, low: usize, high: usize, stage: MergeStage) -> bool {
        let parts = &self.list[low..high];
        let refs: Vec<&Group> = parts.iter().map(|p| &p.group).collect();
        let union = Group::merged(&refs).expect("disjoint members");
        let before: f64 = parts.iter().map(|p| p.rate() * p.predicted_cost).sum();
        let total_before = self.total();
        let candidate = self.prov.func_provision(&union);

        let mut event = MergeEvent {
            stage,
            apps: union.apps().iter().map(|a| a.id.clone()).collect(),
            total_before,
            total_after: None,
            accepted: false,
            plan: candidate.as_ref().map(|p| p.notation()),
        };
        let Some(plan) = candidate else {
            self.log.push(event);
            return false;
        };
        let after = plan.rate() * plan.predicted_cost;
        event.total_after = Some(total_before + (after - before) / self.total_rate);
        event.accepted = cheaper(after, before);
        let accepted = event.accepted;
        self.log.push(event);
        if accepted {
            // list[..low] + union + list[high..]
            self.list.splice(low..high, [plan]);
        }
        accepted
    }
}

impl Provisioner<'_> {
    /// Two-stage group merging.
    ///
    /// Every application starts in its own group, provisioned on its own.
    /// Groups are kept in ascending-SLO order and only neighbours merge.
    /// Stage 1 sweeps CPU-served groups and, once their accumulated rate
    /// passes the knee rate, tries to fold the window into one group (a GPU
    /// function typically). Stage 2 tries to absorb the neighbours of every
    /// GPU-served group. A merge is kept only if it lowers the cost.
    pub fn harmony(&self, apps: &[AppSpec]) -> Result<ProvisionResult, Infeasible> {
        let mut singles = Vec::with_capacity(apps.len());
        let mut failed = Vec::new();
        for app in apps {
            let g = match Group::singleton(app.clone()) {
                Ok(g) => g,
                Err(_) => {
                    failed.push(app.id.clone());
                    continue;
                }
            };
            match self.func_provision(&g) {
                Some(p) => singles.push(p),
                None => failed.push(app.id.clone()),
            }
        }
        if !failed.is_empty() || singles.is_empty() {
            return Err(Infeasible { apps: failed });
        }
        singles.sort_by(|a, b| {
            let (x, y) = (&a.group.apps()[0], &b.group.apps()[0]);
            x.slo.total_cmp(&y.slo).then_with(|| x.id.cmp(&y.id))
        });
        let singleton_cost = weighted_cost(&singles);
        let total_rate = singles.iter().map(|p| p.rate()).sum();
        let global_slo = singles[0].group.min_slo();

        let mut m = Merger { prov: self, list: singles, total_rate, log: Vec::new() };
        let mut knees: HashMap<u64, f64> = HashMap::new();
        let mut knee = |slo: f64| *knees.entry(slo.to_bits()).or_insert_with(|| self.knee_rate(slo));

        // stage 1: CPU groups
        let (mut i, mut j, mut r) = (0usize, 0usize, 0.0f64);
        while i < m.list.len() {
            if m.list[i].kind() == FunctionKind::Cpu {
                r += m.list[i].rate();
                let slo = match self.options.knee_mode {
                    KneeMode::PerWindow => m.list[j].group.min_slo(),
                    KneeMode::Global => global_slo,
                };
                if r > knee(slo) {
                    let merged = i > j && m.merge(j, i + 1, MergeStage::Cpu);
                    if merged {
                        i = j;
                        j += 1;
                    } else {
                        j = i + 1;
                    }
                    r = 0.0;
                }
            } else {
                j = i + 1;
                r = 0.0;
            }
            i += 1;
        }

        // stage 2: around GPU groups
        let mut i: isize = 0;
        while (i as usize) + 1 < m.list.len() {
            let k = i as usize;
            let touches_gpu = m.list[k].kind() == FunctionKind::Gpu || m.list[k + 1].kind() == FunctionKind::Gpu;
            if touches_gpu && m.merge(k, k + 2, MergeStage::Gpu) {
                i -= 1;
            }
            i += 1;
        }

        let Merger { list, log, .. } = m;
        let mut result = ProvisionResult::new(Strategy::Harmony, list);
        result.singleton_cost = Some(singleton_cost);
        result.merge_log = log;
        Ok(result)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::perfmodel::fixtures::simple_profile;
    use crate::profile::PricingConfig;

    #[test]
    fn single_app_matches_func_provision() {
        let p = simple_profile();
        let prov = Provisioner::new(&p, PricingConfig::alibaba_2023());
        let app = AppSpec::new("a", 0.8, 10.0).unwrap();
        let res = prov.harmony(std::slice::from_ref(&app)).unwrap();
        let direct = prov.func_provision(&Group::singleton(app).unwrap()).unwrap();
        assert_eq!(res.plans, vec![direct]);
        assert_eq!(res.total_cost, res.singleton_cost.unwrap());
    }

    #[test]
    fn infeasible_app_is_named() {
        let p = simple_profile();
        let prov = Provisioner::new(&p, PricingConfig::alibaba_2023());
        let apps = [AppSpec::new("ok", 1.0, 5.0).unwrap(), AppSpec::new("tight", 0.01, 5.0).unwrap()];
        assert_eq!(prov.harmony(&apps).unwrap_err().apps, vec!["tight".to_string()]);
    }

    #[test]
    fn accepted_merges_lower_the_total() {
        let p = simple_profile();
        let prov = Provisioner::new(&p, PricingConfig::alibaba_2023());
        let apps: Vec<AppSpec> = (0..6)
            .map(|k| AppSpec::new(format!("a{k}"), 0.5 + 0.1 * k as f64, 2.0 + 3.0 * k as f64).unwrap())
            .collect();
        let res = prov.harmony(&apps).unwrap();
        assert!(res.total_cost <= res.singleton_cost.unwrap());
        for e in res.merge_log.iter().filter(|e| e.accepted) {
            assert!(e.total_after.unwrap() < e.total_before);
        }
        let n: usize = res.plans.iter().map(|p| p.group.len()).sum();
        assert_eq!(n, 6);
    }
}
