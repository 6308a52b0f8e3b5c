//! Re-checks a plan against the profile without reusing any solver state.

use std::fmt;

use super::GroupPlan;
use crate::batching::equivalent_timeout;
use crate::perfmodel::{predict, FunctionKind};
use crate::profile::ModelProfile;

/// Slack for rounding in recomputed quantities.
const TOL: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq)]
pub enum Violation {
    /// The configuration or batch lies outside the profiled ranges.
    Config(String),
    /// GPU memory below the batch's footprint.
    Memory { demand: f64, mem: u32 },
    /// The buffer does not fill the batch within the equivalent timeout.
    Batch { rate: f64, eq_timeout: f64, batch: u32 },
    /// Timeout plus maximum latency exceeds an SLO, or a timeout is negative.
    Slo { app: String, timeout: f64, max_latency: f64, slo: f64 },
    MissingTimeout(String),
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::Config(msg) => write!(f, "invalid configuration: {msg}"),
            Violation::Memory { demand, mem } => write!(f, "memory demand {demand:.3} exceeds {mem} units"),
            Violation::Batch { rate, eq_timeout, batch } => {
                write!(f, "rate {rate} over equivalent timeout {eq_timeout:.4} s cannot fill batch {batch}")
            }
            Violation::Slo { app, timeout, max_latency, slo } => {
                write!(f, "`{app}`: timeout {timeout:.4} + max latency {max_latency:.4} > SLO {slo}")
            }
            Violation::MissingTimeout(app) => write!(f, "`{app}` has no timeout"),
        }
    }
}

/// Every constraint the plan breaks; empty when it is sound.
pub fn check_plan(profile: &ModelProfile, plan: &GroupPlan) -> Vec<Violation> {
    let mut out = Vec::new();
    if let Err(e) = plan.config.validate(profile) {
        out.push(Violation::Config(e.to_string()));
        return out;
    }
    let latency = match predict(profile, &plan.config, plan.batch) {
        Ok(l) => l,
        Err(e) => {
            out.push(Violation::Config(e.to_string()));
            return out;
        }
    };

    if plan.config.kind == FunctionKind::Gpu {
        let demand = profile.mem().demand(plan.batch);
        if demand > plan.config.mem as f64 + TOL {
            out.push(Violation::Memory { demand, mem: plan.config.mem });
        }
    }

    let mut members = Vec::new();
    for app in plan.group.apps() {
        let Some(&t) = plan.timeouts().get(&app.id) else {
            out.push(Violation::MissingTimeout(app.id.clone()));
            continue;
        };
        if t < 0.0 || t + latency.max > app.slo * (1.0 + TOL) + TOL {
            out.push(Violation::Slo { app: app.id.clone(), timeout: t, max_latency: latency.max, slo: app.slo });
        }
        members.push((app.rate, t));
    }
    if members.len() == plan.group.len() {
        let rate: f64 = members.iter().map(|m| m.0).sum();
        match equivalent_timeout(&members) {
            Ok(eq) => {
                // allow rate * T to sit a hair below an integer boundary
                if (rate * eq * (1.0 + TOL) + TOL).floor() + 1.0 < plan.batch as f64 {
                    out.push(Violation::Batch { rate, eq_timeout: eq, batch: plan.batch });
                }
            }
            Err(e) => out.push(Violation::Config(e.to_string())),
        }
    }
    out
}
