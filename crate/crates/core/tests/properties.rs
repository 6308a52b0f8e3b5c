use std::path::Path;

use proptest::prelude::*;

use slobatch::batching::{equivalent_timeout, equivalent_timeout_pair};
use slobatch::provisioner::{verify, Strategy as Algorithm};
use slobatch::simulator::{generate_arrivals, merge_streams};
use slobatch::{AppSpec, ModelProfile, PricingConfig, Provisioner};

fn profile() -> ModelProfile {
    ModelProfile::load(Path::new(env!("CARGO_MANIFEST_DIR")).join("../../data/vgg19_profile.json")).unwrap()
}

fn apps_strategy(max: usize) -> impl Strategy<Value = Vec<AppSpec>> {
    prop::collection::vec((30u32..150, 10u32..300), 1..=max).prop_map(|v| {
        v.into_iter()
            .enumerate()
            .map(|(i, (s, r))| AppSpec::new(format!("a{i}"), s as f64 / 100.0, r as f64 / 10.0).unwrap())
            .collect()
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(40))]

    #[test]
    fn harmony_plans_are_sound(apps in apps_strategy(8)) {
        let p = profile();
        let prov = Provisioner::new(&p, PricingConfig::alibaba_2023());
        let r = prov.harmony(&apps).unwrap();

        // every app served exactly once, by a plan that re-verifies
        let mut served: Vec<&str> = r.plans.iter().flat_map(|pl| pl.group.apps().iter().map(|a| a.id.as_str())).collect();
        served.sort_unstable();
        let mut ids: Vec<&str> = apps.iter().map(|a| a.id.as_str()).collect();
        ids.sort_unstable();
        prop_assert_eq!(served, ids);
        for plan in &r.plans {
            prop_assert!(verify::check_plan(&p, plan).is_empty(), "{}", plan.notation());
        }

        // groups occupy disjoint SLO intervals
        let span = |pl: &slobatch::GroupPlan| (pl.group.min_slo(), pl.group.apps().iter().map(|a| a.slo).fold(0.0, f64::max));
        for (i, a) in r.plans.iter().enumerate() {
            for b in &r.plans[i + 1..] {
                let (a0, a1) = span(a);
                let (b0, b1) = span(b);
                prop_assert!(a1 <= b0 || b1 <= a0, "{} overlaps {}", a.notation(), b.notation());
            }
        }

        // weights and totals
        let w = r.weights();
        prop_assert!((w.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        let total: f64 = w.iter().zip(&r.plans).map(|(w, p)| w * p.predicted_cost).sum();
        prop_assert!((total / r.total_cost - 1.0).abs() < 1e-12);

        // never worse than provisioning each app alone
        prop_assert!(r.total_cost <= r.singleton_cost.unwrap() * (1.0 + 1e-12));
        for e in r.merge_log.iter().filter(|e| e.accepted) {
            prop_assert!(e.total_after.unwrap() < e.total_before);
        }
    }

    #[test]
    fn equal_rate_shards_are_singletons(apps in apps_strategy(5)) {
        // equal-rate cuts coincide with app boundaries only when rates match
        let apps: Vec<AppSpec> = apps.iter().map(|a| AppSpec::new(a.id.clone(), a.slo, apps[0].rate).unwrap()).collect();
        let p = profile();
        let prov = Provisioner::new(&p, PricingConfig::alibaba_2023());
        let h = prov.provision(Algorithm::Harmony, &apps, None).unwrap();
        let m = prov.provision(Algorithm::MbsPlus, &apps, Some(apps.len())).unwrap();
        prop_assert!((m.total_cost / h.singleton_cost.unwrap() - 1.0).abs() < 1e-9);
        for plan in &m.plans {
            prop_assert!(verify::check_plan(&p, plan).is_empty());
        }
    }

    #[test]
    fn fold_of_two_is_the_pair(r1 in 0.1f64..50.0, r2 in 0.1f64..50.0, a in 0.01f64..2.0, b in 0.01f64..2.0) {
        let (t1, t2) = if a <= b { (a, b) } else { (b, a) };
        let pair = equivalent_timeout_pair(r1, t1, r2, t2).unwrap();
        // member order is irrelevant to the fold; it sorts by timeout
        prop_assert_eq!(equivalent_timeout(&[(r2, t2), (r1, t1)]).unwrap(), pair);
    }
}

#[test]
fn single_app_strategies_agree_when_cpu_is_optimal() {
    let p = profile();
    let prov = Provisioner::new(&p, PricingConfig::alibaba_2023());
    let apps = [AppSpec::new("solo", 0.6, 2.0).unwrap()];
    let costs: Vec<f64> = [Algorithm::Harmony, Algorithm::MbsPlus, Algorithm::Batch]
        .iter()
        .map(|&s| prov.provision(s, &apps, None).unwrap().total_cost)
        .collect();
    let h = prov.harmony(&apps).unwrap();
    assert_eq!(h.plans[0].kind(), slobatch::FunctionKind::Cpu);
    assert!((costs[0] / costs[1] - 1.0).abs() < 1e-12, "{costs:?}");
    // BATCH sizes on average latency, so it can only be cheaper or equal
    assert!(costs[2] <= costs[0] * (1.0 + 1e-12), "{costs:?}");
}

/// Kolmogorov-Smirnov distance between sample and the exponential CDF.
fn ks_exponential(mut xs: Vec<f64>, rate: f64) -> f64 {
    xs.sort_by(f64::total_cmp);
    let n = xs.len() as f64;
    xs.iter()
        .enumerate()
        .map(|(i, &x)| {
            let f = 1.0 - (-rate * x).exp();
            (f - i as f64 / n).abs().max(((i + 1) as f64 / n - f).abs())
        })
        .fold(0.0, f64::max)
}

#[test]
fn merged_arrivals_are_poisson_at_the_summed_rate() {
    let rates = [3.0, 7.5, 12.0];
    let streams = generate_arrivals(&rates, 2000.0, 11);
    let merged = merge_streams(&streams);
    let gaps: Vec<f64> = merged.windows(2).map(|w| w[1].0 - w[0].0).collect();
    let n = gaps.len() as f64;
    let total: f64 = rates.iter().sum();
    // 1% critical value of the one-sample KS statistic
    assert!(ks_exponential(gaps, total) < 1.63 / n.sqrt());
    // each stream's share of the merged stream
    for (i, r) in rates.iter().enumerate() {
        let share = merged.iter().filter(|m| m.1 == i).count() as f64 / merged.len() as f64;
        let p = r / total;
        assert!((share - p).abs() < 4.0 * (p * (1.0 - p) / merged.len() as f64).sqrt());
    }
}
