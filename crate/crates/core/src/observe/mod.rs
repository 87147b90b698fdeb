//! Induced distributions, conditional-expectation fits and the shift tests
//! that drive discovery.

mod distribution;
mod induce;
mod regression;
mod shift;

pub use distribution::{DistributionSummary, InducedDistribution, MomentsRecord};
pub use induce::{induce, population_response, InduceOptions, Mode, PopulationResponse};
pub use regression::{fit_conditional, RegressionFamily, RegressionModel, MAX_CONDITION};
pub use shift::{conditional_shift_test, faithfulness_diagnostic, mean_shift_test, ShiftTest, TestOptions};

pub(crate) use induce::apply_rows;
