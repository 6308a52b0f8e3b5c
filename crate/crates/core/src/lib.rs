//! Cost-minimal provisioning of serverless CPU and GPU functions for sets of
//! DNN inference applications with heterogeneous latency objectives.
//!
//! The crate is organized bottom-up:
//!
//! - [`profile`]: fitted latency coefficients, platform constants, fitting.
//! - [`perfmodel`]: average/maximum latency predictors for CPU and GPU functions.
//! - [`batching`]: equivalent batching timeout of a group and per-request cost.
//! - [`provisioner`]: per-group function provisioning, the two-stage group
//!   merging heuristic and the BATCH / MBS+ style baselines.
//! - [`simulator`]: discrete-event validation of provisioning plans.
//! - [`io`]: workload, plan and report file formats.

pub mod batching;
pub mod error;
pub mod io;
pub mod perfmodel;
pub mod profile;
pub mod provisioner;
pub mod simulator;

pub use batching::{AppSpec, Group};
pub use error::{Error, Result};
pub use perfmodel::{FunctionConfig, FunctionKind, LatencyEstimate};
pub use profile::{ModelProfile, PricingConfig};
pub use provisioner::{GroupPlan, ProvisionResult, Provisioner};
pub use simulator::{SimConfig, SimReport};
