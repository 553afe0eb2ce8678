//! Conjugate gradient on the fabric: one z-column of cells per PE, neighbor
//! columns fetched with the four-step exchange, dot products finished with
//! the all-reduce, and Alg.-level control flow as a per-PE state machine.
//!
//! Every PE steps through the same [`CgState`] sequence; branch decisions
//! only depend on all-reduced scalars, which are bit-identical everywhere.
//! Arithmetic is `f32` and mirrors the reference solver operation for
//! operation, so a run matches [`crate::reference::cg_solve`] in
//! [`DotOrder::Signature`](crate::reference::DotOrder::Signature) order bit
//! for bit.

mod program;
mod store;

pub use program::CgPe;
pub use store::{interior_bytes, map_mesh, PeColumnStore, SideColumn, SCALAR_BYTES, SIDES};

use alloc::boxed::Box;
use alloc::vec::Vec;

use crate::comm::{install_all_reduce, install_exchange, FIRST_PROGRAM_COLOR};
use crate::fabric::{
    Color, Ctx, EventLog, Fabric, FabricDims, FabricError, FabricStats, LogLevel, PeCoord,
    PeMemory, DEFAULT_MEMORY_BUDGET,
};
use crate::mesh::{Mesh, MeshError};
use crate::perf::{OpCounts, PerfCounters};
use crate::reference::{CgError, CgOptions, Field, IterRecord};

pub(crate) const START: Color = Color::of(FIRST_PROGRAM_COLOR);
pub(crate) const EXCHANGE_DONE: Color = Color::of(FIRST_PROGRAM_COLOR + 1);
pub(crate) const REDUCE_DONE: Color = Color::of(FIRST_PROGRAM_COLOR + 2);

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum DataflowError {
    #[error("mesh is {}x{} columns but the fabric is {}x{} PEs", .mesh.0, .mesh.1, .fabric.0, .fabric.1)]
    DimsMismatch {
        mesh: (usize, usize),
        fabric: (usize, usize),
    },
    #[error(transparent)]
    Mesh(#[from] MeshError),
    #[error(transparent)]
    Fabric(#[from] FabricError),
    #[error(transparent)]
    Cg(#[from] CgError),
}

/// States of the per-PE CG machine.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum CgState {
    Init,
    Exchange,
    ApplyJ,
    DotXjx,
    Alpha,
    UpdateY,
    UpdateR,
    DotRr,
    ThresCheck,
    Beta,
    UpdateX,
    IterCheck,
    Converged,
    Failed,
}

impl CgState {
    pub const ALL: [CgState; 14] = [
        CgState::Init,
        CgState::Exchange,
        CgState::ApplyJ,
        CgState::DotXjx,
        CgState::Alpha,
        CgState::UpdateY,
        CgState::UpdateR,
        CgState::DotRr,
        CgState::ThresCheck,
        CgState::Beta,
        CgState::UpdateX,
        CgState::IterCheck,
        CgState::Converged,
        CgState::Failed,
    ];

    pub fn code(self) -> u32 {
        Self::ALL.iter().position(|&s| s == self).expect("listed") as u32
    }

    pub fn from_code(code: u32) -> Option<CgState> {
        Self::ALL.get(code as usize).copied()
    }

    pub fn name(self) -> &'static str {
        match self {
            CgState::Init => "INIT",
            CgState::Exchange => "EXCHANGE",
            CgState::ApplyJ => "APPLY_J",
            CgState::DotXjx => "DOT_XJX",
            CgState::Alpha => "ALPHA",
            CgState::UpdateY => "UPDATE_Y",
            CgState::UpdateR => "UPDATE_R",
            CgState::DotRr => "DOT_RR",
            CgState::ThresCheck => "THRES_CHECK",
            CgState::Beta => "BETA",
            CgState::UpdateX => "UPDATE_X",
            CgState::IterCheck => "ITER_CHECK",
            CgState::Converged => "CONVERGED",
            CgState::Failed => "FAILED",
        }
    }

    pub fn from_name(name: &str) -> Option<CgState> {
        Self::ALL.into_iter().find(|s| s.name() == name)
    }
}

/// How a fabric solve ended.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Outcome {
    Converged,
    MaxIterations,
    /// `x^T J x` was exactly zero.
    Breakdown,
}

/// Fabric-side settings of a run.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FabricConfig {
    pub memory_budget: usize,
    pub enforce_budget: bool,
    pub log_level: LogLevel,
}

impl Default for FabricConfig {
    fn default() -> Self {
        Self {
            memory_budget: DEFAULT_MEMORY_BUDGET,
            enforce_budget: false,
            log_level: LogLevel::Protocol,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FabricCgReport {
    pub iterations: usize,
    pub final_rr: f32,
    pub initial_rr: f32,
    pub converged: bool,
    pub outcome: Outcome,
    pub solution: Field<f32>,
    pub history: Vec<IterRecord<f32>>,
    pub log: EventLog,
    pub counters: PerfCounters,
    /// Work charged to each cell (linear index) inside the iteration loop.
    pub cell_costs: Vec<OpCounts>,
    /// Work of computing the starting residual, all cells together.
    pub setup_costs: OpCounts,
    pub stats: FabricStats,
    /// States visited by PE (0, 0), with the tick each was entered.
    pub state_trace: Vec<(u64, CgState)>,
    pub memory: Vec<PeMemory>,
    pub exchanges: usize,
    pub reductions: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) enum Mode {
    Cg,
    Jacobian,
    Dot,
}

fn fabric_dims(mesh: &Mesh) -> FabricDims {
    let d = mesh.dims();
    FabricDims {
        width: d.nx,
        height: d.ny,
    }
}

fn build(
    mesh: &Mesh,
    mode: Mode,
    opts: &CgOptions,
    cfg: &FabricConfig,
) -> Result<Fabric<CgPe>, DataflowError> {
    let dims = fabric_dims(mesh);
    let stores = map_mesh(mesh, dims)?;
    let mut it = stores.into_iter();
    let mut fabric = Fabric::new(dims, cfg.memory_budget, cfg.enforce_budget, |pe| {
        CgPe::new(pe, dims, it.next().expect("one store per PE"), mode, opts)
    });
    fabric.set_log_level(cfg.log_level);
    for i in 0..dims.pe_count() {
        let pe = dims.coord(i);
        for (name, bytes) in fabric.state(pe).store.buffer_list(pe, dims) {
            fabric.alloc(pe, name, bytes)?;
        }
    }
    install_exchange(&mut fabric)?;
    install_all_reduce(&mut fabric)?;
    fabric.on_color_all(
        START,
        Box::new(|s: &mut CgPe, ctx: &mut Ctx, _| s.on_start(ctx)),
    )?;
    fabric.on_color_all(
        EXCHANGE_DONE,
        Box::new(|s: &mut CgPe, ctx: &mut Ctx, _| s.on_exchange_done(ctx)),
    )?;
    fabric.on_color_all(
        REDUCE_DONE,
        Box::new(|s: &mut CgPe, ctx: &mut Ctx, _| s.on_reduce_done(ctx)),
    )?;
    Ok(fabric)
}

fn gather(fabric: &Fabric<CgPe>, mesh: &Mesh, col: impl Fn(&CgPe) -> &[f32]) -> Field<f32> {
    let md = mesh.dims();
    let plane = md.nx * md.ny;
    let mut data = alloc::vec![0.0f32; md.cell_count()];
    for (i, s) in fabric.states().enumerate() {
        for (z, &v) in col(s).iter().enumerate() {
            data[i + plane * z] = v;
        }
    }
    Field::from_vec(md, data).expect("sized from the mesh")
}

/// Solves `J y = b` on a fabric shaped like the mesh's x/y extent.
///
/// A breakdown (`x^T J x == 0`) is reported through [`Outcome::Breakdown`]
/// rather than as an error, so the log and counters up to that point are
/// kept. Fabric failures, including deadlock, are errors.
pub fn fabric_cg_solve(
    mesh: &Mesh,
    b: &Field<f32>,
    opts: &CgOptions,
    cfg: &FabricConfig,
) -> Result<FabricCgReport, DataflowError> {
    opts.validate()?;
    if b.len() != mesh.cell_count() {
        return Err(MeshError::Length {
            what: "field",
            expected: mesh.cell_count(),
            got: b.len(),
        }
        .into());
    }
    let mut fabric = build(mesh, Mode::Cg, opts, cfg)?;
    let dims = fabric.dims();
    let plane = dims.pe_count();
    for i in 0..plane {
        let pe = dims.coord(i);
        let st = fabric.state_mut(pe);
        for z in 0..st.store.nz {
            st.store.r[z] = b.as_slice()[i + plane * z];
        }
    }
    fabric.activate_all(START);
    let log = fabric.run()?;

    let lead = fabric.state(PeCoord::new(0, 0));
    let outcome = lead.outcome.ok_or_else(|| {
        DataflowError::Fabric(FabricError::Program {
            pe: PeCoord::new(0, 0),
            message: "solver stopped without an outcome".into(),
        })
    })?;
    let solution = gather(&fabric, mesh, |s| &s.store.y);
    let history = lead
        .scalars
        .iter()
        .enumerate()
        .map(|(k, sc)| {
            let snap = |f: fn(&CgPe) -> &Vec<Vec<f32>>| {
                if opts.record_history {
                    gather(&fabric, mesh, |s| &f(s)[k]).into_vec()
                } else {
                    Vec::new()
                }
            };
            IterRecord {
                x_jx: sc.x_jx,
                alpha: sc.alpha,
                rr: sc.rr,
                beta: sc.beta,
                y: snap(|s| &s.y_history),
                r: snap(|s| &s.r_history),
            }
        })
        .collect();

    let md = mesh.dims();
    let mut cell_costs = alloc::vec![OpCounts::ZERO; md.cell_count()];
    let mut setup_costs = OpCounts::ZERO;
    let mut exchange_words = 0;
    let mut reduce_packets = 0;
    for (i, s) in fabric.states().enumerate() {
        for (z, c) in s.loop_costs.iter().enumerate() {
            cell_costs[i + plane * z] = *c;
        }
        setup_costs += s.setup_costs;
        exchange_words += s.ex.words_received;
        reduce_packets += s.red.packets_received;
    }
    let stats = fabric.stats();
    let counters = PerfCounters {
        ops: cell_costs.iter().copied().sum(),
        cells: mesh.free_cell_count() as u64,
        iterations: lead.k as u64,
        ticks: stats.ticks,
        exchange_words,
        reduce_packets,
    };
    Ok(FabricCgReport {
        iterations: lead.k,
        final_rr: lead.rr,
        initial_rr: lead.initial_rr,
        converged: outcome == Outcome::Converged,
        outcome,
        solution,
        history,
        counters,
        cell_costs,
        setup_costs,
        stats,
        state_trace: lead.trace.clone(),
        memory: fabric.memory_report(),
        exchanges: lead.exchanges,
        reductions: lead.reductions,
        log,
    })
}

/// One neighbor exchange of `x` followed by the per-column Jacobian
/// product. Returns `Jx` and the run's log.
pub fn fabric_apply_jacobian(
    mesh: &Mesh,
    x: &Field<f32>,
    cfg: &FabricConfig,
) -> Result<(Field<f32>, EventLog, FabricStats), DataflowError> {
    if x.len() != mesh.cell_count() {
        return Err(MeshError::Length {
            what: "field",
            expected: mesh.cell_count(),
            got: x.len(),
        }
        .into());
    }
    let mut fabric = build(mesh, Mode::Jacobian, &CgOptions::new(1.0, 0), cfg)?;
    let plane = fabric.dims().pe_count();
    for i in 0..plane {
        let st = fabric.state_mut(fabric_dims(mesh).coord(i));
        for z in 0..st.store.nz {
            st.store.x[z] = x.as_slice()[i + plane * z];
        }
    }
    fabric.activate_all(START);
    let log = fabric.run()?;
    Ok((gather(&fabric, mesh, |s| &s.store.jx), log, fabric.stats()))
}

/// Global dot product of two fields: per-PE partials over ascending z, then
/// the all-reduce. Returns the value held by each PE, row-major.
pub fn fabric_dot(
    mesh: &Mesh,
    a: &Field<f32>,
    b: &Field<f32>,
    cfg: &FabricConfig,
) -> Result<(Vec<f32>, EventLog), DataflowError> {
    for f in [a, b] {
        if f.len() != mesh.cell_count() {
            return Err(MeshError::Length {
                what: "field",
                expected: mesh.cell_count(),
                got: f.len(),
            }
            .into());
        }
    }
    let mut fabric = build(mesh, Mode::Dot, &CgOptions::new(1.0, 0), cfg)?;
    let plane = fabric.dims().pe_count();
    for i in 0..plane {
        let st = fabric.state_mut(fabric_dims(mesh).coord(i));
        for z in 0..st.store.nz {
            st.store.x[z] = a.as_slice()[i + plane * z];
            st.store.r[z] = b.as_slice()[i + plane * z];
        }
    }
    fabric.activate_all(START);
    let log = fabric.run()?;
    let values = fabric
        .states()
        .map(|s| s.red.result.unwrap_or(f32::NAN))
        .collect();
    Ok((values, log))
}
