//! Configuration, experiment orchestration, result tables and plot data.

pub mod config;
pub mod experiments;
pub mod plot;
pub mod table;

pub use config::{ExperimentConfig, ExperimentKind};
pub use experiments::{run_conc_sweep, run_custom, run_experiment, run_fig1, run_fig2, run_mf_sweep};
pub use plot::emit_plotdata;
pub use table::{Manifest, ResultTable, Row};
