//! Causal-graph orientation from deployed mechanisms.

mod env;
mod general;
mod per_node;
mod session;

pub use env::{
    DeployDiagnostics, DeploymentRecord, Environment, RecordedEnvironment, Recorder, Recording, SimulatedEnvironment,
};
pub use general::{discover_general, GeneralOptions};
pub use per_node::{discover_per_node, KnownCost, PerNodeOptions};
pub use session::{DiscoveryOutcome, DiscoverySession, LogEntry, TestRecord};
