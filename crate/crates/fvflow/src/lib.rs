//! Host side of the solver: mesh and field files, event logs, perf CSVs,
//! and the run driver behind the `fvflow` binary.

pub mod formats;
pub mod run;
pub mod sweep;
