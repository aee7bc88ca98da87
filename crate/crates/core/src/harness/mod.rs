//! End-to-end orchestration: synthetic data, the train → convert → bound →
//! simulate pipeline, figure-data generation, flat-file persistence and the
//! streaming monitor.

pub mod config;
pub mod figures;
pub mod monitor;
pub mod persist;
pub mod pipeline;
pub mod projection;
pub mod sim;
pub mod synth;

pub use config::{load_config, Config};
pub use figures::simulate;
pub use monitor::{monitor, MonitorOptions, MonitorSummary};
pub use pipeline::{accuracy_sweep, run_pipeline, RunReport, SweepRow};
pub use sim::{
    measure_arl, measure_delay, ArlEstimate, DecisionSource, DelaySummary, StreamScenario,
};
pub use synth::{gen_clusters, SyntheticData, SyntheticSpec};
