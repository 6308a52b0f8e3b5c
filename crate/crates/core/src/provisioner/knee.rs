use serde::{Deserialize, Serialize};

use super::{cheaper, GroupPlan, Provisioner};
use crate::batching::{AppSpec, Group};
use crate::perfmodel::FunctionKind;

/// Geometric rate grid scanned for the CPU-to-GPU crossover.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KneeGrid {
    pub lo: f64,
    pub hi: f64,
    pub points: usize,
    /// Relative width at which bisection stops.
    pub rel_tol: f64,
}

impl Default for KneeGrid {
    fn default() -> Self {
        Self { lo: 0.1, hi: 200.0, points: 100, rel_tol: 0.01 }
    }
}

impl KneeGrid {
    pub fn rates(&self) -> Vec<f64> {
        let n = self.points.max(2);
        let ratio = self.hi / self.lo;
        (0..n).map(|k| self.lo * ratio.powf(k as f64 / (n - 1) as f64)).collect()
    }
}

/// Optimal cost of a single application on each function type.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    /// The swept quantity: a rate or an SLO.
    pub x: f64,
    pub cpu_cost: Option<f64>,
    pub gpu_cost: Option<f64>,
    pub optimal: Option<FunctionKind>,
}

impl Provisioner<'_> {
    fn singleton_plans(&self, slo: f64, rate: f64) -> (Option<GroupPlan>, Option<GroupPlan>) {
        let g = Group::singleton(AppSpec { id: "probe".into(), slo, rate }).expect("positive slo and rate");
        (self.provision_cpu(&g), self.provision_gpu(&g))
    }

    fn gpu_wins(&self, slo: f64, rate: f64) -> bool {
        match self.singleton_plans(slo, rate) {
            (_, None) => false,
            (None, Some(_)) => true,
            (Some(c), Some(g)) => !cheaper(c.predicted_cost, g.predicted_cost),
        }
    }

    /// Smallest arrival rate at which a lone application with this SLO is
    /// served at least as cheaply on a GPU function as on a CPU one.
    /// Infinite if the GPU never wins inside the scanned range.
    pub fn knee_rate(&self, slo: f64) -> f64 {
        let grid = self.options.knee_grid;
        let rates = grid.rates();
        let Some(k) = rates.iter().position(|&r| self.gpu_wins(slo, r)) else {
            return f64::INFINITY;
        };
        if k == 0 {
            return rates[0];
        }
        let (mut lo, mut hi) = (rates[k - 1], rates[k]);
        while hi - lo > grid.rel_tol * hi {
            let mid = 0.5 * (lo + hi);
            if self.gpu_wins(slo, mid) { hi = mid } else { lo = mid }
        }
        hi
    }

    fn curve_point(&self, x: f64, slo: f64, rate: f64) -> CurvePoint {
        let (c, g) = self.singleton_plans(slo, rate);
        let cpu_cost = c.map(|p| p.predicted_cost);
        let gpu_cost = g.map(|p| p.predicted_cost);
        let optimal = match (cpu_cost, gpu_cost) {
            (Some(c), Some(g)) => Some(if cheaper(g, c) { FunctionKind::Gpu } else { FunctionKind::Cpu }),
            (Some(_), None) => Some(FunctionKind::Cpu),
            (None, Some(_)) => Some(FunctionKind::Gpu),
            (None, None) => None,
        };
        CurvePoint { x, cpu_cost, gpu_cost, optimal }
    }

    /// Optimal CPU and GPU cost of one application at a fixed SLO across rates.
    pub fn rate_curve(&self, slo: f64, rates: &[f64]) -> Vec<CurvePoint> {
        rates.iter().map(|&r| self.curve_point(r, slo, r)).collect()
    }

    /// Optimal CPU and GPU cost of one application at a fixed rate across SLOs.
    pub fn slo_curve(&self, rate: f64, slos: &[f64]) -> Vec<CurvePoint> {
        slos.iter().map(|&s| self.curve_point(s, s, rate)).collect()
    }
}
