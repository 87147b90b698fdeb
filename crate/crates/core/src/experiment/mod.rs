//! Configuration-driven experiment scenarios and their reports.

mod config;
mod regret;
mod run;
mod tradeoff;

pub use config::{
    parse_config, parse_config_str, parse_config_str_with, parse_config_with, CostConfig, CostKind, DiscoverySection,
    ExperimentConfig, Overrides, RegretSection, Scenario, ScmConfig, SimulateSection, TradeoffSection, SCHEMA_VERSION,
};
pub use regret::{regret_bench, write_ratios_csv, ArmLoss, GraphRun, RatioRow, RegretReport, BASELINE_NAME};
pub use run::{run, Check, RunReport};
pub use tradeoff::{example_cost, example_scm, tradeoff_demo, ProxyScenario, TradeoffReport, WeakProxyScenario};
