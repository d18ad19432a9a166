//! Scenario configuration, batch runs, metrics and export.

pub mod config;
pub mod experiment;
pub mod metrics;
pub mod scenario;
pub mod sweep;

pub use config::{Event, InitialConditions, ScenarioConfig, TimedEvent};
pub use experiment::{paper_experiment, ExperimentConfig, ExperimentSummary};
pub use metrics::{rms_metrics, rms_streaming, RmsAccumulator, RmsReport};
pub use scenario::{run_scenario, write_atomic, LogSample, PostureProfile, TrajectoryLog, LOG_COLUMNS};
pub use sweep::{stiffness_sweep, SweepRow, SweepTable};
