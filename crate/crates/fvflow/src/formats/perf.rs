//! Counter CSVs. The first line names the schema and its version; the column
//! header follows, and is written even when there are no rows.

use std::io::Write;

use serde::Serialize;

use super::FormatError;
use fvflow_core::perf::{
    cg_vector_work, fabric_word, neighbor_term, per_cell_model, roofline, OpCounts, PerfCounters,
};
use fvflow_core::MeshDims;

pub const PERF_SCHEMA: &str = "# schema: fvflow-perf 1";
const MODEL_SCHEMA: &str = "# schema: fvflow-model 1";

/// One solver run. Sweeps write one per configuration; failed runs keep
/// their label and dims, carry the error in `status`, and leave the rest
/// empty.
#[derive(Debug, Clone, PartialEq, Default, Serialize)]
pub struct PerfRow {
    pub label: String,
    pub nx: usize,
    pub ny: usize,
    pub nz: usize,
    pub status: String,
    pub iterations: Option<u64>,
    pub converged: Option<bool>,
    pub ticks: Option<u64>,
    pub exchanges: Option<u64>,
    pub barriers: Option<u64>,
    pub cells: Option<u64>,
    pub fmul: Option<u64>,
    pub fsub: Option<u64>,
    pub fneg: Option<u64>,
    pub fadd: Option<u64>,
    pub fma: Option<u64>,
    pub fmov: Option<u64>,
    pub loads: Option<u64>,
    pub stores: Option<u64>,
    pub fabric_loads: Option<u64>,
    pub flops: Option<u64>,
    pub memory_accesses: Option<u64>,
    pub exchange_words: Option<u64>,
    pub reduce_packets: Option<u64>,
    pub ai_memory: Option<f64>,
    pub ai_fabric: Option<f64>,
    /// Supplied time the throughput columns are computed from.
    pub elapsed_s: Option<f64>,
    pub gcells_per_s: Option<f64>,
    pub gflops: Option<f64>,
}

impl PerfRow {
    pub fn failed(label: &str, dims: MeshDims, status: String) -> Self {
        Self {
            label: label.into(),
            nx: dims.nx,
            ny: dims.ny,
            nz: dims.nz,
            status,
            ..Self::default()
        }
    }

    pub fn from_run(
        label: &str,
        dims: MeshDims,
        status: &str,
        converged: bool,
        counters: &PerfCounters,
        exchanges: u64,
        barriers: u64,
        elapsed_s: Option<f64>,
    ) -> Self {
        let ops = &counters.ops;
        let point = roofline(counters, elapsed_s).ok();
        Self {
            label: label.into(),
            nx: dims.nx,
            ny: dims.ny,
            nz: dims.nz,
            status: status.into(),
            iterations: Some(counters.iterations),
            converged: Some(converged),
            ticks: Some(counters.ticks),
            exchanges: Some(exchanges),
            barriers: Some(barriers),
            cells: Some(counters.cells),
            fmul: Some(ops.fmul),
            fsub: Some(ops.fsub),
            fneg: Some(ops.fneg),
            fadd: Some(ops.fadd),
            fma: Some(ops.fma),
            fmov: Some(ops.fmov),
            loads: Some(ops.loads),
            stores: Some(ops.stores),
            fabric_loads: Some(ops.fabric_loads),
            flops: Some(ops.flops()),
            memory_accesses: Some(ops.memory_accesses()),
            exchange_words: Some(counters.exchange_words),
            reduce_packets: Some(counters.reduce_packets),
            ai_memory: point.map(|p| p.ai_memory),
            ai_fabric: point.map(|p| p.ai_fabric),
            elapsed_s: point.and(elapsed_s),
            gcells_per_s: point.and_then(|p| p.throughput_gcells),
            gflops: point.and_then(|p| p.gflops),
        }
    }
}

/// One component of the per-cell cost model.
#[derive(Debug, Clone, PartialEq, Default, Serialize)]
pub struct ModelRow {
    pub component: String,
    pub fmul: u64,
    pub fsub: u64,
    pub fneg: u64,
    pub fadd: u64,
    pub fma: u64,
    pub fmov: u64,
    pub loads: u64,
    pub stores: u64,
    pub fabric_loads: u64,
    pub flops: u64,
    pub memory_accesses: u64,
}

impl ModelRow {
    fn new(component: &str, c: OpCounts) -> Self {
        Self {
            component: component.into(),
            fmul: c.fmul,
            fsub: c.fsub,
            fneg: c.fneg,
            fadd: c.fadd,
            fma: c.fma,
            fmov: c.fmov,
            loads: c.loads,
            stores: c.stores,
            fabric_loads: c.fabric_loads,
            flops: c.flops(),
            memory_accesses: c.memory_accesses(),
        }
    }
}

pub fn model_rows() -> Vec<ModelRow> {
    let m = per_cell_model();
    vec![
        ModelRow::new("neighbor_term", neighbor_term()),
        ModelRow::new("fabric_word", fabric_word()),
        ModelRow::new("jacobian", m.jacobian),
        ModelRow::new("vector_work", cg_vector_work()),
        ModelRow::new("total", m.total()),
    ]
}

trait Schema {
    const SCHEMA: &'static str;
}

impl Schema for PerfRow {
    const SCHEMA: &'static str = PERF_SCHEMA;
}

impl Schema for ModelRow {
    const SCHEMA: &'static str = MODEL_SCHEMA;
}

#[allow(private_bounds)]
pub fn write_csv<R: Serialize + Default + Schema, W: Write>(
    rows: &[R],
    mut out: W,
) -> Result<(), FormatError> {
    writeln!(out, "{}", R::SCHEMA)?;
    // The column header comes from serializing a blank row, so it cannot
    // drift from the struct.
    let mut probe = csv::Writer::from_writer(Vec::new());
    probe.serialize(R::default())?;
    let probe = probe
        .into_inner()
        .map_err(|e| FormatError::Io(e.into_error()))?;
    let header_end = probe
        .iter()
        .position(|&b| b == b'\n')
        .map_or(probe.len(), |i| i + 1);
    out.write_all(&probe[..header_end])?;
    let mut w = csv::WriterBuilder::new()
        .has_headers(false)
        .from_writer(out);
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}
