//! Experiment orchestration: precoder tables, Monte Carlo SER and power
//! measurements, the build benchmark, configuration and CSV output.

pub mod config;
pub mod experiment;
pub mod output;
pub mod stats;
pub mod table;

pub use config::{Config, Mode, Scheme};
pub use experiment::{
    bench, run_powermin_experiment, run_ser_experiment, table_for_config, BenchRow, ExperimentResult, PowerRow,
    SerRow,
};
pub use table::{build_precoder_table, compose_precoder, DesignContext, Entry, OnDemand, PrecoderTable};
