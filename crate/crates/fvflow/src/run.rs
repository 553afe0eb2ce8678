use std::fs::{self, File};
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use fvflow_core::dataflow::{
    fabric_cg_solve, interior_bytes, DataflowError, FabricCgReport, FabricConfig, Outcome,
};
use fvflow_core::fabric::{FabricError, LogLevel, DEFAULT_MEMORY_BUDGET};
use fvflow_core::perf::per_cell_model;
use fvflow_core::reference::{newton_step, residual, CgError, CgOptions, CgReport, DotOrder};
use fvflow_core::{Field, Mesh, MeshDims, Real};

use crate::formats::{
    model_rows, read_event_log, write_csv, write_event_log, write_field, write_slice,
    write_state_trace, FormatError, MeshSpec, PerfRow, ValidationReport,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum Mode {
    Reference,
    Fabric,
    Both,
    Perf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Precision {
    Single,
    Double,
}

#[derive(Debug, Clone, PartialEq)]
pub enum MeshSource {
    Demo(MeshDims),
    File(PathBuf),
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub mesh: Option<MeshSource>,
    pub mode: Mode,
    /// Threshold on `r^T r`; defaults to 1e-10 in 64-bit and 1e-6 in 32-bit.
    pub eps: Option<f64>,
    pub k_max: usize,
    pub precision: Precision,
    pub memory_budget: usize,
    pub enforce_budget: bool,
    pub log_level: LogLevel,
    pub out: PathBuf,
    /// Wall-clock seconds to place the fabric run on the roofline with.
    pub elapsed: Option<f64>,
    /// Event log the fabric run must reproduce exactly.
    pub expect_log: Option<PathBuf>,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            mesh: None,
            mode: Mode::Both,
            eps: None,
            k_max: 10_000,
            precision: Precision::Single,
            memory_budget: DEFAULT_MEMORY_BUDGET,
            enforce_budget: false,
            log_level: LogLevel::Protocol,
            out: PathBuf::from("out"),
            elapsed: None,
            expect_log: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
#[error("invalid {field}: {message}")]
pub struct ConfigError {
    pub field: &'static str,
    pub message: String,
}

impl ConfigError {
    pub fn new(field: &'static str, message: impl Into<String>) -> Self {
        Self {
            field,
            message: message.into(),
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum RunError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Format(#[from] FormatError),
    #[error("fabric deadlock: {0}")]
    Deadlock(FabricError),
    #[error("fabric failure: {0}")]
    Fabric(FabricError),
    #[error("event log differs from {path} at event {index}")]
    LogMismatch { path: PathBuf, index: usize },
}

impl From<std::io::Error> for RunError {
    fn from(e: std::io::Error) -> Self {
        RunError::Format(e.into())
    }
}

impl From<DataflowError> for RunError {
    fn from(e: DataflowError) -> Self {
        match e {
            DataflowError::Fabric(f @ FabricError::Deadlock { .. }) => RunError::Deadlock(f),
            DataflowError::Fabric(f) => RunError::Fabric(f),
            DataflowError::Mesh(m) => RunError::Config(ConfigError::new("mesh", m.to_string())),
            DataflowError::DimsMismatch { .. } => {
                RunError::Config(ConfigError::new("mesh", e.to_string()))
            }
            DataflowError::Cg(c) => RunError::Config(ConfigError::new("eps", c.to_string())),
        }
    }
}

/// Process exit codes.
pub mod exit {
    pub const OK: i32 = 0;
    /// IO, format or unexpected fabric failure.
    pub const FAILURE: i32 = 1;
    pub const USAGE: i32 = 2;
    pub const NOT_CONVERGED: i32 = 3;
    pub const BREAKDOWN: i32 = 4;
    pub const DEADLOCK: i32 = 5;
    pub const LOG_MISMATCH: i32 = 6;
}

impl RunError {
    pub fn exit_code(&self) -> i32 {
        match self {
            RunError::Config(_) => exit::USAGE,
            RunError::Deadlock(_) => exit::DEADLOCK,
            RunError::LogMismatch { .. } => exit::LOG_MISMATCH,
            RunError::Format(_) | RunError::Fabric(_) => exit::FAILURE,
        }
    }
}

/// How the solves of a run ended; ordered by severity.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum Status {
    Converged,
    NotConverged,
    Breakdown,
}

impl Status {
    pub fn exit_code(self) -> i32 {
        match self {
            Status::Converged => exit::OK,
            Status::NotConverged => exit::NOT_CONVERGED,
            Status::Breakdown => exit::BREAKDOWN,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Status::Converged => "ok",
            Status::NotConverged => "not_converged",
            Status::Breakdown => "breakdown",
        }
    }

    pub fn of_outcome(outcome: Outcome) -> Self {
        match outcome {
            Outcome::Converged => Status::Converged,
            Outcome::MaxIterations => Status::NotConverged,
            Outcome::Breakdown => Status::Breakdown,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunOutcome {
    pub status: Status,
    /// Human-readable lines for the terminal.
    pub summary: Vec<String>,
    pub artifacts: Vec<PathBuf>,
}

/// Parses `WxHxD`.
pub fn parse_dims(text: &str) -> Result<MeshDims, ConfigError> {
    let bad = || {
        ConfigError::new(
            "dims",
            format!("expected WxHxD with positive integers, got `{text}`"),
        )
    };
    let parts: Vec<usize> = text
        .split('x')
        .map(|p| p.trim().parse().map_err(|_| bad()))
        .collect::<Result<_, _>>()?;
    let [nx, ny, nz] = parts[..] else {
        return Err(bad());
    };
    MeshDims::new(nx, ny, nz).map_err(|e| ConfigError::new("dims", e.to_string()))
}

impl RunConfig {
    pub fn validate(&self) -> Result<(), ConfigError> {
        if let Some(eps) = self.eps {
            if !(eps > 0.0 && eps.is_finite()) {
                return Err(ConfigError::new(
                    "eps",
                    format!("must be positive and finite, got {eps}"),
                ));
            }
        }
        if self.k_max < 1 {
            return Err(ConfigError::new("kmax", "must be at least 1"));
        }
        if matches!(self.mode, Mode::Fabric | Mode::Both) && self.precision == Precision::Double {
            return Err(ConfigError::new(
                "precision",
                "fabric runs are 32-bit; use --precision 32",
            ));
        }
        if self.mesh.is_none() && self.mode != Mode::Perf {
            return Err(ConfigError::new(
                "mesh",
                "one of --demo or --mesh is required",
            ));
        }
        if let Some(t) = self.elapsed {
            if !(t > 0.0 && t.is_finite()) {
                return Err(ConfigError::new(
                    "elapsed",
                    format!("must be positive and finite, got {t}"),
                ));
            }
        }
        Ok(())
    }

    pub fn eps(&self) -> f64 {
        self.eps.unwrap_or(match self.precision {
            Precision::Double => 1e-10,
            Precision::Single => 1e-6,
        })
    }

    fn cg_options(&self) -> CgOptions {
        let order = match self.precision {
            Precision::Single => DotOrder::Signature,
            Precision::Double => DotOrder::Ascending,
        };
        CgOptions::new(self.eps(), self.k_max).order(order)
    }

    fn fabric_config(&self) -> FabricConfig {
        FabricConfig {
            memory_budget: self.memory_budget,
            enforce_budget: self.enforce_budget,
            log_level: self.log_level,
        }
    }
}

pub fn load_mesh(source: &MeshSource) -> Result<Mesh, ConfigError> {
    let spec = match source {
        MeshSource::Demo(d) => {
            return Mesh::demo(*d).map_err(|e| ConfigError::new("demo", e.to_string()));
        }
        MeshSource::File(path) => {
            let text = fs::read_to_string(path)
                .map_err(|e| ConfigError::new("mesh", format!("{}: {e}", path.display())))?;
            MeshSpec::parse(&text)
                .map_err(|e| ConfigError::new("mesh", format!("{}: {e}", path.display())))?
        }
    };
    spec.build()
        .map_err(|e| ConfigError::new("mesh", e.to_string()))
}

fn dims_label(d: MeshDims) -> String {
    format!("{}x{}x{}", d.nx, d.ny, d.nz)
}

/// A finished fabric solve with the pressure it implies.
pub struct FabricRun {
    pub report: FabricCgReport,
    pub pressure: Field<f32>,
}

/// One Newton update from `p = 0` on the fabric: the host forms `b = −r(0)`,
/// the fabric solves `J δ = b`, and the pressure is `0 + δ`, exactly as
/// [`newton_step`] does on the reference path.
pub fn fabric_newton(
    mesh: &Mesh,
    opts: &CgOptions,
    cfg: &FabricConfig,
) -> Result<FabricRun, DataflowError> {
    let p0 = Field::<f32>::zeros(mesh.dims());
    let mut b = residual(mesh, &p0)?;
    for v in b.as_mut_slice() {
        *v = -*v;
    }
    let report = fabric_cg_solve(mesh, &b, opts, cfg)?;
    let data = p0
        .as_slice()
        .iter()
        .zip(report.solution.as_slice())
        .map(|(&a, &d)| a + d)
        .collect();
    let pressure = Field::from_vec(mesh.dims(), data)?;
    Ok(FabricRun { report, pressure })
}

struct Artifacts<'a> {
    dir: &'a Path,
    written: Vec<PathBuf>,
}

impl Artifacts<'_> {
    fn create(&mut self, name: &str) -> Result<BufWriter<File>, RunError> {
        let path = self.dir.join(name);
        let f = File::create(&path)?;
        self.written.push(path);
        Ok(BufWriter::new(f))
    }

    fn field<T: Real + std::fmt::Debug>(
        &mut self,
        tag: &str,
        field: &Field<T>,
    ) -> Result<(), RunError> {
        let mut w = self.create(&format!("field_{tag}.csv"))?;
        write_field(field, &mut w)?;
        w.flush()?;
        let nz = field.dims().nz;
        let mut slices = vec![nz - 1];
        if nz > 1 {
            slices.push(0);
        }
        for z in slices {
            let mut w = self.create(&format!("field_{tag}_z{z}.csv"))?;
            write_slice(field, z, &mut w)?;
            w.flush()?;
        }
        Ok(())
    }

    fn text(&mut self, name: &str, body: &str) -> Result<(), RunError> {
        let mut w = self.create(name)?;
        w.write_all(body.as_bytes())?;
        w.flush()?;
        Ok(())
    }
}

fn cg_summary<T: Real>(rep: &CgReport<T>) -> String {
    format!(
        "iterations: {}\nconverged: {}\ninitial_rr: {:e}\nfinal_rr: {:e}\n",
        rep.iterations,
        rep.converged,
        rep.initial_rr.to_f64(),
        rep.final_rr.to_f64()
    )
}

enum RefResult<T> {
    Solved(Field<T>, CgReport<T>),
    Breakdown(usize),
}

fn reference<T: Real>(mesh: &Mesh, opts: &CgOptions) -> Result<RefResult<T>, RunError> {
    match newton_step(mesh, &Field::<T>::zeros(mesh.dims()), opts) {
        Ok((p, rep)) => Ok(RefResult::Solved(p, rep)),
        Err(CgError::Breakdown { iteration }) => Ok(RefResult::Breakdown(iteration)),
        Err(e) => Err(ConfigError::new("eps", e.to_string()).into()),
    }
}

fn run_reference<T: Real + std::fmt::Debug>(
    mesh: &Mesh,
    cfg: &RunConfig,
    art: &mut Artifacts,
    summary: &mut Vec<String>,
) -> Result<(Status, Option<Field<T>>, usize, bool), RunError> {
    match reference::<T>(mesh, &cfg.cg_options())? {
        RefResult::Solved(p, rep) => {
            art.field("reference", &p)?;
            art.text("report_reference.txt", &cg_summary(&rep))?;
            summary.push(format!(
                "reference: {} iterations, converged {}, r^T r {:e}",
                rep.iterations,
                rep.converged,
                rep.final_rr.to_f64()
            ));
            let status = if rep.converged {
                Status::Converged
            } else {
                Status::NotConverged
            };
            Ok((status, Some(p), rep.iterations, rep.converged))
        }
        RefResult::Breakdown(k) => {
            summary.push(format!("reference: breakdown at iteration {k}"));
            Ok((Status::Breakdown, None, k, false))
        }
    }
}

fn run_fabric(
    mesh: &Mesh,
    cfg: &RunConfig,
    art: &mut Artifacts,
    summary: &mut Vec<String>,
) -> Result<FabricRun, RunError> {
    let run = fabric_newton(mesh, &cfg.cg_options(), &cfg.fabric_config())?;
    let rep = &run.report;
    art.field("fabric", &run.pressure)?;
    let mut w = art.create("events.log")?;
    write_event_log(&rep.log, &mut w)?;
    w.flush()?;
    let mut w = art.create("state_trace.txt")?;
    write_state_trace(&rep.state_trace, &mut w)?;
    w.flush()?;
    let row = PerfRow::from_run(
        &dims_label(mesh.dims()),
        mesh.dims(),
        Status::of_outcome(rep.outcome).name(),
        rep.converged,
        &rep.counters,
        rep.exchanges as u64,
        rep.stats.barriers,
        cfg.elapsed,
    );
    let mut w = art.create("perf.csv")?;
    write_csv(&[row], &mut w)?;
    w.flush()?;
    let mut mem = String::from("pe_x,pe_y,used,budget,over_budget\n");
    for m in &rep.memory {
        mem.push_str(&format!(
            "{},{},{},{},{}\n",
            m.pe.x, m.pe.y, m.used, m.budget, m.over_budget
        ));
    }
    art.text("memory.csv", &mem)?;

    let peak = rep.memory.iter().map(|m| m.used).max().unwrap_or(0);
    let over = rep.memory.iter().filter(|m| m.over_budget).count();
    summary.push(format!(
        "fabric: {} iterations, {:?}, r^T r {:e}, {} ticks, {} events",
        rep.iterations,
        rep.outcome,
        rep.final_rr,
        rep.stats.ticks,
        rep.log.len()
    ));
    summary.push(format!(
        "fabric memory: peak {peak} bytes per PE, {over} PEs over the {}-byte budget",
        cfg.memory_budget
    ));

    if let Some(path) = &cfg.expect_log {
        let f = File::open(path)
            .map_err(|e| ConfigError::new("expect-log", format!("{}: {e}", path.display())))?;
        let pinned = read_event_log(BufReader::new(f))?;
        if let Some(index) = rep.log.first_divergence(&pinned) {
            return Err(RunError::LogMismatch {
                path: path.clone(),
                index,
            });
        }
        summary.push(format!("event log matches {}", path.display()));
    }
    Ok(run)
}

fn run_perf(
    cfg: &RunConfig,
    mesh: Option<&Mesh>,
    art: &mut Artifacts,
    summary: &mut Vec<String>,
) -> Result<(), RunError> {
    let mut w = art.create("perf_model.csv")?;
    write_csv(&model_rows(), &mut w)?;
    w.flush()?;
    let m = per_cell_model();
    let t = m.total();
    summary.push(format!(
        "FLOPs per cell per iteration: {} ({} Jacobian + {} rest)",
        t.flops(),
        m.jacobian.flops(),
        m.rest.flops()
    ));
    summary.push(format!(
        "memory accesses: {}, fabric loads: {}",
        t.memory_accesses(),
        t.fabric_loads
    ));
    let ai_mem = t.flops() as f64 / (4 * t.memory_accesses()) as f64;
    let ai_fab = t.flops() as f64 / (4 * t.fabric_loads) as f64;
    summary.push(format!(
        "arithmetic intensity: {ai_mem:.5} FLOPs/byte (memory), {ai_fab} FLOPs/byte (fabric)"
    ));
    if let Some(mesh) = mesh {
        let nz = mesh.dims().nz;
        summary.push(format!(
            "interior PE footprint at nz = {nz}: {} bytes of {}",
            interior_bytes(nz),
            cfg.memory_budget
        ));
    }
    Ok(())
}

/// Runs one configuration, writing artifacts into `cfg.out`.
pub fn run(cfg: &RunConfig) -> Result<RunOutcome, RunError> {
    cfg.validate()?;
    let mesh = cfg.mesh.as_ref().map(load_mesh).transpose()?;
    fs::create_dir_all(&cfg.out)?;
    let mut art = Artifacts {
        dir: &cfg.out,
        written: Vec::new(),
    };
    let mut summary = Vec::new();

    let status = match (cfg.mode, mesh.as_ref()) {
        (Mode::Perf, m) => {
            run_perf(cfg, m, &mut art, &mut summary)?;
            Status::Converged
        }
        (_, None) => unreachable!("validated"),
        (Mode::Reference, Some(mesh)) => match cfg.precision {
            Precision::Single => run_reference::<f32>(mesh, cfg, &mut art, &mut summary)?.0,
            Precision::Double => run_reference::<f64>(mesh, cfg, &mut art, &mut summary)?.0,
        },
        (Mode::Fabric, Some(mesh)) => Status::of_outcome(
            run_fabric(mesh, cfg, &mut art, &mut summary)?
                .report
                .outcome,
        ),
        (Mode::Both, Some(mesh)) => {
            let (ref_status, ref_p, ref_k, ref_conv) =
                run_reference::<f32>(mesh, cfg, &mut art, &mut summary)?;
            let fab = run_fabric(mesh, cfg, &mut art, &mut summary)?;
            let d = mesh.dims();
            let report = ValidationReport {
                dims: (d.nx, d.ny, d.nz),
                reference_iterations: ref_k,
                fabric_iterations: fab.report.iterations,
                reference_converged: ref_conv,
                fabric_converged: fab.report.converged,
                max_abs_diff: ref_p
                    .as_ref()
                    .map_or(f64::NAN, |p| p.max_abs_diff(&fab.pressure)),
                bitwise_equal: ref_p.as_ref().is_some_and(|p| p.bitwise_eq(&fab.pressure)),
            };
            art.text("validation.txt", &report.to_string())?;
            summary.push(format!(
                "validation: bitwise-equal = {}, max |diff| = {:e}, iteration diff = {}",
                report.bitwise_equal,
                report.max_abs_diff,
                report.iteration_diff()
            ));
            ref_status.max(Status::of_outcome(fab.report.outcome))
        }
    };
    Ok(RunOutcome {
        status,
        summary,
        artifacts: art.written,
    })
}

pub(crate) fn label_of(d: MeshDims) -> String {
    dims_label(d)
}
