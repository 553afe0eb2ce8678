//! On-disk formats. Every writer is deterministic: the same input gives the
//! same bytes, so artifacts can be diffed across runs.

mod events;
mod field;
mod mesh_spec;
mod perf;
mod report;

pub use events::{read_event_log, read_state_trace, write_event_log, write_state_trace};
pub use field::{read_field, write_field, write_slice};
pub use mesh_spec::{DirichletCell, MeshSpec, Permeability, MESH_FORMAT};
pub use perf::{model_rows, write_csv, ModelRow, PerfRow, PERF_SCHEMA};
pub use report::ValidationReport;

use std::io;

#[derive(Debug, thiserror::Error)]
pub enum FormatError {
    #[error(transparent)]
    Io(#[from] io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error("invalid TOML: {0}")]
    TomlRead(#[from] toml::de::Error),
    #[error(transparent)]
    TomlWrite(#[from] toml::ser::Error),
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error(transparent)]
    Mesh(#[from] fvflow_core::MeshError),
}

impl FormatError {
    fn parse(line: usize, message: impl Into<String>) -> Self {
        FormatError::Parse {
            line,
            message: message.into(),
        }
    }
}
