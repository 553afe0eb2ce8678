//! Weak-scaling sweeps: many fabric runs, one CSV row each.
//!
//! Schedule file (TOML):
//!
//! ```toml
//! eps = 1e-6            # optional, r^T r threshold
//! k_max = 10000         # optional
//! tick_seconds = 1e-9   # optional; ticks x this = elapsed time for throughput
//!
//! [[run]]
//! demo = [4, 4, 6]
//!
//! [[run]]
//! mesh = "layered.toml" # relative to the schedule file
//! ```

use std::path::{Path, PathBuf};

use serde::Deserialize;

use fvflow_core::fabric::{LogLevel, DEFAULT_MEMORY_BUDGET};
use fvflow_core::reference::{CgOptions, DotOrder};
use fvflow_core::MeshDims;

use crate::formats::{FormatError, PerfRow};
use crate::run::{fabric_newton, label_of, load_mesh, ConfigError, MeshSource, Status};
use fvflow_core::dataflow::FabricConfig;

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSpec {
    pub eps: Option<f64>,
    pub k_max: Option<usize>,
    pub tick_seconds: Option<f64>,
    #[serde(default)]
    pub run: Vec<SweepEntry>,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepEntry {
    pub demo: Option<[usize; 3]>,
    pub mesh: Option<PathBuf>,
}

impl SweepSpec {
    pub fn parse(text: &str) -> Result<Self, FormatError> {
        Ok(toml::from_str(text)?)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        if let Some(eps) = self.eps {
            if !(eps > 0.0 && eps.is_finite()) {
                return Err(ConfigError::new(
                    "sweep.eps",
                    format!("must be positive and finite, got {eps}"),
                ));
            }
        }
        if self.k_max == Some(0) {
            return Err(ConfigError::new("sweep.k_max", "must be at least 1"));
        }
        if let Some(t) = self.tick_seconds {
            if !(t > 0.0 && t.is_finite()) {
                return Err(ConfigError::new(
                    "sweep.tick_seconds",
                    format!("must be positive and finite, got {t}"),
                ));
            }
        }
        for (i, r) in self.run.iter().enumerate() {
            if r.demo.is_some() == r.mesh.is_some() {
                return Err(ConfigError::new(
                    "sweep.run",
                    format!("entry {i} needs exactly one of `demo` or `mesh`"),
                ));
            }
        }
        Ok(())
    }
}

/// Runs every entry in order on the fabric. A failing entry becomes a row
/// with its error in `status`; the sweep carries on.
pub fn run_sweep(
    spec: &SweepSpec,
    base: &Path,
    budget: Option<usize>,
) -> Result<Vec<PerfRow>, ConfigError> {
    spec.validate()?;
    let opts = CgOptions::new(spec.eps.unwrap_or(1e-6), spec.k_max.unwrap_or(10_000))
        .order(DotOrder::Signature);
    let cfg = FabricConfig {
        memory_budget: budget.unwrap_or(DEFAULT_MEMORY_BUDGET),
        enforce_budget: false,
        log_level: LogLevel::Protocol,
    };
    let rows = spec
        .run
        .iter()
        .map(|entry| {
            let source = match (entry.demo, &entry.mesh) {
                (Some([x, y, z]), _) => match MeshDims::new(x, y, z) {
                    Ok(d) => MeshSource::Demo(d),
                    Err(e) => {
                        return PerfRow {
                            label: format!("{x}x{y}x{z}"),
                            status: format!("error: {e}"),
                            ..PerfRow::default()
                        }
                    }
                },
                (None, Some(p)) => MeshSource::File(base.join(p)),
                (None, None) => unreachable!("validated"),
            };
            let mesh = match load_mesh(&source) {
                Ok(m) => m,
                Err(e) => {
                    let label = match &source {
                        MeshSource::Demo(d) => label_of(*d),
                        MeshSource::File(p) => p.display().to_string(),
                    };
                    return PerfRow {
                        label,
                        status: format!("error: {e}"),
                        ..PerfRow::default()
                    };
                }
            };
            let d = mesh.dims();
            match fabric_newton(&mesh, &opts, &cfg) {
                Ok(run) => {
                    let rep = &run.report;
                    let elapsed = spec.tick_seconds.map(|t| rep.stats.ticks as f64 * t);
                    PerfRow::from_run(
                        &label_of(d),
                        d,
                        Status::of_outcome(rep.outcome).name(),
                        rep.converged,
                        &rep.counters,
                        rep.exchanges as u64,
                        rep.stats.barriers,
                        elapsed,
                    )
                }
                Err(e) => PerfRow::failed(&label_of(d), d, format!("error: {e}")),
            }
        })
        .collect();
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parse_and_validate() {
        let s = SweepSpec::parse("tick_seconds = 1e-9\n[[run]]\ndemo = [4, 4, 2]\n").unwrap();
        assert!(s.validate().is_ok());
        assert_eq!(s.run.len(), 1);
        let both = SweepSpec::parse("[[run]]\ndemo = [4, 4, 2]\nmesh = \"m.toml\"\n").unwrap();
        assert_eq!(both.validate().unwrap_err().field, "sweep.run");
        assert!(SweepSpec::parse("[[run]]\nwidth = 3\n").is_err());
    }

    #[test]
    fn failures_become_rows() {
        let s = SweepSpec::parse("[[run]]\ndemo = [1, 2, 1]\n[[run]]\ndemo = [2, 2, 1]\n").unwrap();
        let rows = run_sweep(&s, Path::new("."), None).unwrap();
        assert!(rows[0].status.starts_with("error"));
        assert_eq!(rows[1].status, "ok");
        assert_eq!(rows[1].barriers, rows[1].exchanges.map(|e| 4 * e));
    }
}
