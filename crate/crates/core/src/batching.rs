//! Batching calculus for groups of applications that share one buffer:
//! the equivalent batching timeout of a group and the per-request cost of
//! a function configuration.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::perfmodel::{predict, FunctionConfig, FunctionKind};
use crate::profile::{ModelProfile, PricingConfig};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AppSpec {
    pub id: String,
    /// Latency objective in seconds, batching wait included.
    pub slo: f64,
    /// Poisson arrival rate in requests per second.
    pub rate: f64,
}

impl AppSpec {
    pub fn new(id: impl Into<String>, slo: f64, rate: f64) -> Result<Self> {
        let app = Self { id: id.into(), slo, rate };
        app.validate()?;
        Ok(app)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.slo.is_finite() && self.slo > 0.0) {
            return Err(Error::InvalidParameter(format!("app `{}`: SLO must be positive", self.id)));
        }
        if !(self.rate.is_finite() && self.rate > 0.0) {
            return Err(Error::InvalidParameter(format!("app `{}`: rate must be positive", self.id)));
        }
        Ok(())
    }
}

/// Applications batched together, kept sorted by ascending SLO.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Group {
    apps: Vec<AppSpec>,
    #[serde(default)]
    timeouts: BTreeMap<String, f64>,
}

fn by_slo(a: &AppSpec, b: &AppSpec) -> std::cmp::Ordering {
    a.slo.total_cmp(&b.slo).then_with(|| a.id.cmp(&b.id))
}

impl Group {
    pub fn new(mut apps: Vec<AppSpec>) -> Result<Self> {
        if apps.is_empty() {
            return Err(Error::InvalidParameter("a group needs at least one application".into()));
        }
        for a in &apps {
            a.validate()?;
        }
        apps.sort_by(by_slo);
        let mut ids: Vec<&str> = apps.iter().map(|a| a.id.as_str()).collect();
        ids.sort_unstable();
        if let Some(w) = ids.windows(2).find(|w| w[0] == w[1]) {
            return Err(Error::InvalidParameter(format!("duplicate application `{}`", w[0])));
        }
        Ok(Self { apps, timeouts: BTreeMap::new() })
    }

    pub fn singleton(app: AppSpec) -> Result<Self> {
        Self::new(vec![app])
    }

    /// Union of two groups, re-sorted by SLO.
    pub fn merged(groups: &[&Group]) -> Result<Self> {
        Self::new(groups.iter().flat_map(|g| g.apps.iter().cloned()).collect())
    }

    pub fn apps(&self) -> &[AppSpec] {
        &self.apps
    }

    pub fn len(&self) -> usize {
        self.apps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.apps.is_empty()
    }

    /// Total arrival rate of the group.
    pub fn rate(&self) -> f64 {
        self.apps.iter().map(|a| a.rate).sum()
    }

    pub fn min_slo(&self) -> f64 {
        self.apps[0].slo
    }

    pub fn timeouts(&self) -> &BTreeMap<String, f64> {
        &self.timeouts
    }

    pub fn set_timeout(&mut self, id: &str, timeout: f64) -> Result<()> {
        if !self.apps.iter().any(|a| a.id == id) {
            return Err(Error::InvalidParameter(format!("`{id}` is not a member of the group")));
        }
        if !(timeout.is_finite() && timeout >= 0.0) {
            return Err(Error::InvalidParameter(format!("timeout {timeout} for `{id}` must be >= 0")));
        }
        self.timeouts.insert(id.to_owned(), timeout);
        Ok(())
    }

    pub fn with_timeouts(mut self, timeouts: &BTreeMap<String, f64>) -> Result<Self> {
        for (id, t) in timeouts {
            self.set_timeout(id, *t)?;
        }
        Ok(self)
    }
}

/// Expected wait of the first buffered request when two Poisson streams
/// share a buffer, given `t1 <= t2`.
pub fn equivalent_timeout_pair(r1: f64, t1: f64, r2: f64, t2: f64) -> Result<f64> {
    if !(r1 > 0.0 && r2 >= 0.0) {
        return Err(Error::InvalidParameter(format!("rates must be positive (got {r1}, {r2})")));
    }
    if t1 > t2 {
        return Err(Error::MisorderedTimeouts { t1, t2 });
    }
    Ok(pair_unchecked(r1, t1, r2, t2))
}

#[inline]
pub(crate) fn pair_unchecked(r1: f64, t1: f64, r2: f64, t2: f64) -> f64 {
    let eta2 = r2 / (r1 + r2);
    t1 + eta2 * -(-r1 * (t2 - t1)).exp_m1() / r1
}

/// Folds [`equivalent_timeout_pair`] over `(rate, timeout)` members taken in
/// ascending timeout order; the accumulator acts as one application whose
/// rate is the sum merged so far.
pub fn equivalent_timeout(members: &[(f64, f64)]) -> Result<f64> {
    if members.is_empty() {
        return Err(Error::InvalidParameter("empty group".into()));
    }
    let mut sorted = members.to_vec();
    sorted.sort_by(|a, b| a.1.total_cmp(&b.1));
    let (mut rate, mut eq) = sorted[0];
    for &(r, t) in &sorted[1..] {
        eq = equivalent_timeout_pair(rate, eq, r, t)?;
        rate += r;
    }
    Ok(eq)
}

pub fn equivalent_timeout_group(group: &Group) -> Result<f64> {
    let members = group
        .apps()
        .iter()
        .map(|a| {
            group
                .timeouts
                .get(&a.id)
                .map(|&t| (a.rate, t))
                .ok_or_else(|| Error::IncompleteGroup(a.id.clone()))
        })
        .collect::<Result<Vec<_>>>()?;
    equivalent_timeout(&members)
}

/// Per-request cost of running batches of `batch` requests on `config`.
pub fn cost_per_request(
    profile: &ModelProfile,
    pricing: &PricingConfig,
    config: &FunctionConfig,
    batch: u32,
) -> Result<f64> {
    let latency = predict(profile, config, batch)?;
    Ok(cost_from_latency(pricing, config, latency.avg, batch))
}

#[inline]
pub(crate) fn cost_from_latency(pricing: &PricingConfig, config: &FunctionConfig, avg: f64, batch: u32) -> f64 {
    let rate = match config.kind {
        FunctionKind::Cpu => config.cores * pricing.k1,
        FunctionKind::Gpu => config.mem as f64 * pricing.k2,
    };
    (avg * rate + pricing.k3) / batch as f64
}

/// Whether a buffer fed at `rate` collects `batch` requests within the
/// equivalent timeout: `floor(rate * eq_timeout) + 1 >= batch`.
#[inline]
pub fn feasible_batch(rate: f64, eq_timeout: f64, batch: u32) -> bool {
    (rate * eq_timeout).floor() + 1.0 >= batch as f64
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::perfmodel::fixtures::simple_profile;
    use proptest::prelude::*;

    #[test]
    fn equal_timeouts_collapse() {
        assert_eq!(equivalent_timeout_pair(3.0, 0.4, 7.0, 0.4).unwrap(), 0.4);
    }

    #[test]
    fn vanishing_second_stream() {
        let t = equivalent_timeout_pair(10.0, 0.1, 1e-12, 0.3).unwrap();
        assert!((t - 0.1).abs() < 1e-12);
    }

    #[test]
    fn worked_pair_value() {
        let t = equivalent_timeout_pair(10.0, 0.1, 10.0, 0.3).unwrap();
        let expected = 0.1 + 0.5 * (1.0 - (-2.0f64).exp()) / 10.0;
        assert!((t - expected).abs() < 1e-15);
        assert!((t - 0.143233).abs() < 1e-6);
    }

    #[test]
    fn misordered_pair_is_an_error() {
        assert!(matches!(
            equivalent_timeout_pair(1.0, 0.5, 1.0, 0.2),
            Err(Error::MisorderedTimeouts { .. })
        ));
    }

    #[test]
    fn group_fold() {
        let mut g = Group::singleton(AppSpec::new("a", 1.0, 3.0).unwrap()).unwrap();
        assert!(matches!(equivalent_timeout_group(&g), Err(Error::IncompleteGroup(_))));
        g.set_timeout("a", 0.4).unwrap();
        assert_eq!(equivalent_timeout_group(&g).unwrap(), 0.4);

        let apps = vec![
            AppSpec::new("x", 1.0, 2.0).unwrap(),
            AppSpec::new("y", 2.0, 9.0).unwrap(),
            AppSpec::new("z", 3.0, 0.5).unwrap(),
        ];
        let timeouts = BTreeMap::from([("x".into(), 0.7), ("y".into(), 0.7), ("z".into(), 0.7)]);
        let g = Group::new(apps).unwrap().with_timeouts(&timeouts).unwrap();
        assert!((equivalent_timeout_group(&g).unwrap() - 0.7).abs() < 1e-15);
    }

    #[test]
    fn three_stream_fold_matches_two_pair_steps() {
        let t = equivalent_timeout(&[(5.0, 0.5), (10.0, 0.1), (10.0, 0.3)]).unwrap();
        let first = equivalent_timeout_pair(10.0, 0.1, 10.0, 0.3).unwrap();
        let second = equivalent_timeout_pair(20.0, first, 5.0, 0.5).unwrap();
        assert_eq!(t, second);
    }

    #[test]
    fn group_is_sorted_and_rejects_duplicates() {
        let g = Group::new(vec![
            AppSpec::new("b", 1.0, 1.0).unwrap(),
            AppSpec::new("a", 0.5, 2.0).unwrap(),
        ])
        .unwrap();
        assert_eq!(g.apps()[0].id, "a");
        assert_eq!(g.rate(), 3.0);
        assert!(Group::new(vec![
            AppSpec::new("a", 1.0, 1.0).unwrap(),
            AppSpec::new("a", 0.5, 2.0).unwrap(),
        ])
        .is_err());
        assert!(Group::new(vec![]).is_err());
    }

    #[test]
    fn cpu_single_request_cost() {
        let p = simple_profile();
        let pricing = PricingConfig::alibaba_2023();
        let c = cost_per_request(&p, &pricing, &FunctionConfig::cpu(2.0), 1).unwrap();
        let l = 2.0 * (-2.0f64).exp() + 0.3;
        assert!((c - (l * 2.0 * pricing.k1 + pricing.k3)).abs() < 1e-18);
    }

    #[test]
    fn exclusive_gpu_cost_example() {
        let p = simple_profile();
        let pricing = PricingConfig { k1: 1.3e-5, k2: 1.5e-5, k3: 1.3e-7 };
        let c = cost_per_request(&p, &pricing, &FunctionConfig::gpu(24), 16).unwrap();
        let expected = (0.425 * 24.0 * 1.5e-5 + 1.3e-7) / 16.0;
        assert!((c - expected).abs() < 1e-20);
        assert!((c - 9.5706e-6).abs() < 1e-9);
    }

    #[test]
    fn batch_prerequisite() {
        assert!(feasible_batch(0.1, 0.0, 1));
        assert!(feasible_batch(20.0, 0.6, 13));
        assert!(!feasible_batch(20.0, 0.6, 14));
    }

    proptest! {
        #[test]
        fn pair_is_bounded(r1 in 0.1f64..50.0, r2 in 0.1f64..50.0, a in 0.01f64..2.0, b in 0.01f64..2.0) {
            let (t1, t2) = if a <= b { (a, b) } else { (b, a) };
            let t = equivalent_timeout_pair(r1, t1, r2, t2).unwrap();
            let eta2 = r2 / (r1 + r2);
            prop_assert!(t >= t1);
            prop_assert!(t <= t1 + eta2 / r1 + 1e-15);
            prop_assert!(t <= t2 + 1e-15);
        }

        #[test]
        fn cost_is_monotone(cores_idx in 0usize..319, batch in 1u32..32, scale in 1.01f64..3.0) {
            let p = simple_profile();
            let pricing = PricingConfig::alibaba_2023();
            let c = p.cores().value(cores_idx);
            let cfg = FunctionConfig::cpu(c);
            // fixed latency: cost falls with batch and rises with each price
            let l = 0.5;
            let base = cost_from_latency(&pricing, &cfg, l, batch);
            prop_assert!(cost_from_latency(&pricing, &cfg, l, batch + 1) < base);
            prop_assert!(cost_from_latency(&pricing, &FunctionConfig::cpu(c * scale), l, batch) > base);
            let k1 = PricingConfig { k1: pricing.k1 * scale, ..pricing };
            prop_assert!(cost_from_latency(&k1, &cfg, l, batch) > base);
            let k3 = PricingConfig { k3: pricing.k3 * scale, ..pricing };
            prop_assert!(cost_from_latency(&k3, &cfg, l, batch) > base);
            let gpu = FunctionConfig::gpu(4);
            let gbase = cost_from_latency(&pricing, &gpu, l, batch);
            prop_assert!(cost_from_latency(&pricing, &FunctionConfig::gpu(5), l, batch) > gbase);
            let k2 = PricingConfig { k2: pricing.k2 * scale, ..pricing };
            prop_assert!(cost_from_latency(&k2, &gpu, l, batch) > gbase);
        }
    }
}
