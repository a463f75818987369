//! Experiment harness for the `statefarm` engine: spec files, sweeps over
//! parallelism degree and flush frequency, and CSV output with the model's
//! predictions next to each measurement.

pub mod cli;
pub mod experiment;
pub mod record;
pub mod spec;

pub use experiment::{run_experiment, Cell, CellRun, ExperimentError, FinalState};
pub use record::{emit_csv, parse_csv, read_csv, write_csv, MetricsRecord};
pub use spec::{AdaptivityEvent, ExperimentSpec, KeySpec, SpecError};
