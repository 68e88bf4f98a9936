//! Dynamic operation of computing clusters against electricity market data.
//!
//! Given per-interval carbon intensity and spot prices, a cluster setup and a
//! workload scenario, find the utilisation that minimises total emissions or
//! total cost while scaling hardware to keep the compute output constant.

pub mod cluster;
pub mod dispatch;
pub mod energy_data;
pub mod error;
pub mod exec;
pub mod report;
pub mod sensitivity;
pub mod units;
pub mod validation;

pub use cluster::{ClusterSetup, Registry, TariffModel, WorkloadScenario};
pub use dispatch::{optimise, ObjectiveKind, OptimizationResult};
pub use energy_data::{IntervalSeries, Metric};
pub use error::{Error, ErrorKind, Result};
pub use exec::Execution;
