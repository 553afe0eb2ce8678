use std::fs;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, ValueEnum};

use fvflow::formats::write_csv;
use fvflow::run::{exit, parse_dims, run, MeshSource, Mode, Precision, RunConfig, RunError};
use fvflow::sweep::{run_sweep, SweepSpec};
use fvflow_core::fabric::LogLevel;

#[derive(Debug, Clone, Copy, ValueEnum)]
enum Bits {
    #[value(name = "32")]
    B32,
    #[value(name = "64")]
    B64,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum Log {
    Full,
    Protocol,
    Off,
}

/// Single-phase pressure solver: a 64/32-bit reference CG and the same CG
/// run on a simulated 2-D PE fabric.
#[derive(Debug, Parser)]
#[command(name = "fvflow", version)]
struct Cli {
    /// Built-in demo mesh, e.g. 8x8x4.
    #[arg(long, value_name = "WxHxD", conflicts_with = "mesh")]
    demo: Option<String>,
    /// Mesh description file (TOML).
    #[arg(long, value_name = "FILE")]
    mesh: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "both")]
    mode: Mode,
    /// Convergence threshold on r^T r [default: 1e-6 at 32-bit, 1e-10 at 64-bit].
    #[arg(long)]
    eps: Option<f64>,
    #[arg(long, default_value_t = 10_000)]
    kmax: usize,
    /// Floating-point width of the reference solver. Fabric runs are 32-bit.
    #[arg(long, value_enum, default_value = "32")]
    precision: Bits,
    /// Per-PE memory budget in bytes.
    #[arg(long, default_value_t = fvflow_core::fabric::DEFAULT_MEMORY_BUDGET)]
    budget_bytes: usize,
    /// Fail allocation past the budget instead of only reporting it.
    #[arg(long)]
    enforce_budget: bool,
    #[arg(long, value_enum, default_value = "protocol")]
    log_level: Log,
    /// Output directory.
    #[arg(long, default_value = "out")]
    out: PathBuf,
    /// Measured seconds for the fabric run; fills the throughput columns.
    #[arg(long)]
    elapsed: Option<f64>,
    /// Fail with exit code 6 unless the fabric event log equals this file.
    #[arg(long, value_name = "FILE")]
    expect_log: Option<PathBuf>,
    /// Run a sweep schedule (TOML) and write sweep.csv; other mesh flags are ignored.
    #[arg(long, value_name = "FILE", conflicts_with_all = ["demo", "mesh"])]
    sweep: Option<PathBuf>,
}

fn config(cli: &Cli) -> Result<RunConfig, RunError> {
    let mesh = match (&cli.demo, &cli.mesh) {
        (Some(d), _) => Some(MeshSource::Demo(parse_dims(d)?)),
        (None, Some(p)) => Some(MeshSource::File(p.clone())),
        (None, None) => None,
    };
    Ok(RunConfig {
        mesh,
        mode: cli.mode,
        eps: cli.eps,
        k_max: cli.kmax,
        precision: match cli.precision {
            Bits::B32 => Precision::Single,
            Bits::B64 => Precision::Double,
        },
        memory_budget: cli.budget_bytes,
        enforce_budget: cli.enforce_budget,
        log_level: match cli.log_level {
            Log::Full => LogLevel::Full,
            Log::Protocol => LogLevel::Protocol,
            Log::Off => LogLevel::Off,
        },
        out: cli.out.clone(),
        elapsed: cli.elapsed,
        expect_log: cli.expect_log.clone(),
    })
}

fn sweep(cli: &Cli, path: &PathBuf) -> Result<i32, RunError> {
    let text = fs::read_to_string(path)?;
    let spec = SweepSpec::parse(&text)?;
    let base = path.parent().map(PathBuf::from).unwrap_or_default();
    let rows = run_sweep(&spec, &base, Some(cli.budget_bytes))?;
    fs::create_dir_all(&cli.out)?;
    let out = cli.out.join("sweep.csv");
    write_csv(&rows, fs::File::create(&out)?)?;
    let failed = rows.iter().filter(|r| r.status != "ok").count();
    println!(
        "sweep: {} runs, {failed} not ok, wrote {}",
        rows.len(),
        out.display()
    );
    Ok(exit::OK)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.sweep {
        Some(path) => sweep(&cli, path),
        None => config(&cli).and_then(|cfg| run(&cfg)).map(|outcome| {
            for line in &outcome.summary {
                println!("{line}");
            }
            for a in &outcome.artifacts {
                println!("wrote {}", a.display());
            }
            outcome.status.exit_code()
        }),
    };
    let code = match result {
        Ok(code) => code,
        Err(e) => {
            eprintln!("fvflow: {e}");
            e.exit_code()
        }
    };
    ExitCode::from(code as u8)
}
