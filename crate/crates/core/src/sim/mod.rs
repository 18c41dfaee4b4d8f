//! Synthetic survey populations, sampling designs, and the simulation study harness.

pub mod fixture;
pub mod metrics;
pub mod population;
pub mod sampling;
pub mod scenario;

pub use fixture::tiny_fixture;
pub use metrics::{align_classes, compute_metrics, BlockMetrics, ModelMetrics, Truth};
pub use population::{correlated_outcomes, generate_population, PatternSetting, Population, PopulationSpec};
pub use sampling::{draw_sample, Sample, SamplingDesign};
pub use scenario::{run_scenario, Association, MetricsReport, ReplicateRecord, ScenarioOutput, ScenarioSpec};
