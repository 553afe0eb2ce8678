//! Acceptance suite. Each criterion runs at its stated tolerance and prints
//! one PASS/FAIL line; the process fails if any criterion does.

use std::collections::BTreeMap;
use std::fs;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::process::ExitCode;

use fvflow::formats::write_csv;
use fvflow::run::{run, MeshSource, Mode, RunConfig};
use fvflow::sweep::{run_sweep, SweepSpec};
use fvflow_core::comm::{
    all_reduce, neighbor_exchange, reduce_order_signature, signature_fold, Role, BCAST_COL,
    BCAST_ROW, COMPLETION_COLORS, DATA_COLORS, REDUCE_COL, REDUCE_ROW, SCHEDULE,
};
use fvflow_core::dataflow::{fabric_cg_solve, FabricCgReport, FabricConfig};
use fvflow_core::fabric::{Color, Detail, EventKind, FabricDims, Link, LogLevel};
use fvflow_core::mesh::Axis;
use fvflow_core::perf::{per_cell_model, roofline, PerfCounters};
use fvflow_core::reference::{
    apply_jacobian, cg_solve, newton_step, CgOptions, CgReport, DotOrder, SparseJacobian,
};
use fvflow_core::{CellIndex, Field, Mesh, MeshDims};
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Outcome = Result<String, String>;

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn inf_norm(v: impl IntoIterator<Item = f64>) -> f64 {
    v.into_iter().fold(0.0, |m, x| f64::max(m, x.abs()))
}

fn random_mesh(dims: MeshDims, p_dirichlet: f64, rng: &mut ChaCha8Rng) -> Mesh {
    let coef = |rng: &mut ChaCha8Rng| 10f64.powf(rng.gen_range(-1.0..1.0));
    let trans =
        [Axis::X, Axis::Y, Axis::Z].map(|a| (0..dims.face_count(a)).map(|_| coef(rng)).collect());
    let mobility = (0..dims.cell_count()).map(|_| coef(rng)).collect();
    let mut dirichlet: Vec<(CellIndex, f64)> = Vec::new();
    for k in 0..dims.cell_count() {
        if rng.gen_bool(p_dirichlet) {
            dirichlet.push((dims.coords(k), rng.gen_range(-1.0..1.0)));
        }
    }
    Mesh::from_parts(dims, trans, mobility, &dirichlet).unwrap()
}

fn random_dims(rng: &mut ChaCha8Rng, max: usize) -> MeshDims {
    MeshDims::new(
        rng.gen_range(1..=max),
        rng.gen_range(1..=max),
        rng.gen_range(1..=max),
    )
    .unwrap()
}

fn demo_rhs(mesh: &Mesh) -> Field<f32> {
    Field::from_fn(mesh.dims(), |c| {
        mesh.dirichlet()
            .get(&mesh.dims().index(c))
            .map_or(0.0, |&v| v as f32)
    })
}

fn oracle_equivalence() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(0xacce);
    let (mut worst64, mut worst32) = (0f64, 0f64);
    for case in 0..200 {
        let d = random_dims(&mut rng, 6);
        let p = rng.gen_range(0.0..0.4);
        let mesh = random_mesh(d, p, &mut rng);
        let x = Field::from_fn(d, |_| rng.gen_range(-1.0..1.0f64));
        let oracle = SparseJacobian::assemble(&mesh).matvec(x.as_slice());
        let scale = inf_norm(oracle.iter().copied()).max(f64::MIN_POSITIVE);

        let mf = apply_jacobian(&mesh, &x).unwrap();
        let e64 = inf_norm(mf.as_slice().iter().zip(&oracle).map(|(a, b)| a - b)) / scale;
        let mf32 = apply_jacobian(&mesh, &x.cast::<f32>()).unwrap();
        let e32 = inf_norm(
            mf32.as_slice()
                .iter()
                .zip(&oracle)
                .map(|(&a, b)| a as f64 - b),
        ) / scale;
        ensure(e64 <= 1e-12, || {
            format!("case {case} {d:?}: 64-bit relative error {e64:e}")
        })?;
        ensure(e32 <= 1e-5, || {
            format!("case {case} {d:?}: 32-bit relative error {e32:e}")
        })?;
        worst64 = worst64.max(e64);
        worst32 = worst32.max(e32);
    }
    Ok(format!(
        "200 meshes, worst relative error {worst64:.1e} (64-bit), {worst32:.1e} (32-bit)"
    ))
}

fn cg_correctness() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(0xc9);
    let (mut checked, mut worst) = (0, 0f64);
    while checked < 50 {
        let d = random_dims(&mut rng, 6);
        let mesh = random_mesh(d, 0.15, &mut rng);
        if mesh.dirichlet().is_empty() || mesh.free_cell_count() > 200 {
            continue;
        }
        let b = Field::from_fn(d, |_| rng.gen_range(-1.0..1.0f64));
        let rep = cg_solve(&mesh, &b, &CgOptions::new(1e-24, 20_000)).map_err(|e| e.to_string())?;
        ensure(rep.converged, || {
            format!("{d:?}: no convergence in {} iterations", rep.iterations)
        })?;
        let n = mesh.cell_count();
        let j = DMatrix::from_row_slice(n, n, &SparseJacobian::assemble(&mesh).to_dense());
        let exact = j
            .lu()
            .solve(&DVector::from_column_slice(b.as_slice()))
            .ok_or("singular Jacobian")?;
        let err = inf_norm(
            rep.solution
                .as_slice()
                .iter()
                .zip(exact.iter())
                .map(|(a, e)| a - e),
        );
        ensure(err <= 1e-9, || format!("{d:?}: error {err:e}"))?;
        worst = worst.max(err);
        checked += 1;
    }
    Ok(format!(
        "50 instances, worst error {worst:.1e} against dense LU"
    ))
}

fn same_history(fab: &FabricCgReport, r: &CgReport<f32>) -> Result<(), String> {
    let bits = |v: &[f32]| v.iter().map(|x| x.to_bits()).collect::<Vec<_>>();
    ensure(fab.iterations == r.iterations, || {
        format!("iterations {} vs {}", fab.iterations, r.iterations)
    })?;
    ensure(fab.initial_rr.to_bits() == r.initial_rr.to_bits(), || {
        "initial r^T r differs".into()
    })?;
    ensure(fab.history.len() == r.history.len(), || {
        "history length differs".into()
    })?;
    for (k, (a, b)) in fab.history.iter().zip(&r.history).enumerate() {
        ensure(a.alpha.to_bits() == b.alpha.to_bits(), || {
            format!("alpha at {k}")
        })?;
        ensure(a.beta.map(f32::to_bits) == b.beta.map(f32::to_bits), || {
            format!("beta at {k}")
        })?;
        ensure(a.rr.to_bits() == b.rr.to_bits(), || format!("r^T r at {k}"))?;
        ensure(bits(&a.y) == bits(&b.y) && bits(&a.r) == bits(&b.r), || {
            format!("iterate at {k}")
        })?;
    }
    ensure(fab.solution.bitwise_eq(&r.solution), || {
        "solution differs".into()
    })
}

fn lockstep() -> Outcome {
    let mut counts = Vec::new();
    for (nx, ny, nz) in [(4, 4, 2), (8, 8, 4), (6, 10, 3)] {
        let mesh = Mesh::demo(MeshDims::new(nx, ny, nz).unwrap()).unwrap();
        let b = demo_rhs(&mesh);
        let opts = CgOptions::new(1e-10, 1000)
            .order(DotOrder::Signature)
            .history(true);
        let fab = fabric_cg_solve(&mesh, &b, &opts, &FabricConfig::default())
            .map_err(|e| e.to_string())?;
        let reference = cg_solve(&mesh, &b, &opts).map_err(|e| e.to_string())?;
        same_history(&fab, &reference).map_err(|e| format!("{nx}x{ny}x{nz}: {e}"))?;
        counts.push(format!("{nx}x{ny}x{nz}: {}", fab.iterations));
    }
    Ok(format!(
        "bitwise identical at every iteration ({})",
        counts.join(", ")
    ))
}

fn protocol() -> Outcome {
    let dims = FabricDims::new(4, 4).unwrap();
    let nz = 3;
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let cols: Vec<Vec<f32>> = (0..16)
        .map(|_| (0..nz).map(|_| rng.gen_range(-10.0..10.0)).collect())
        .collect();
    let (bufs, log) = neighbor_exchange(dims, &cols).map_err(|e| e.to_string())?;
    let barriers: Vec<u64> = log.of_kind(EventKind::Barrier).map(|e| e.tick).collect();
    ensure(barriers.len() == 4, || {
        format!("{} barriers", barriers.len())
    })?;

    for s in 0..4 {
        let lo = if s == 0 { 0 } else { barriers[s - 1] + 1 };
        let events: Vec<_> = log
            .events()
            .iter()
            .filter(|e| (lo..=barriers[s]).contains(&e.tick))
            .collect();
        let mut sends = 0;
        for e in events.iter().filter(|e| e.kind == EventKind::Send) {
            let c = e.color.unwrap();
            ensure(DATA_COLORS.contains(&c), || {
                format!("step {s}: send on {c:?}")
            })?;
            ensure(
                SCHEDULE[s]
                    .iter()
                    .any(|a| a.role == Role::Send && a.color == c && a.class.contains(e.pe)),
                || format!("step {s}: unscheduled send {c:?} from {:?}", e.pe),
            )?;
            ensure(
                e.detail
                    == Detail::Words {
                        data: nz as u32,
                        control: 1,
                    },
                || format!("step {s}: payload"),
            )?;
            sends += 1;
        }
        let mut want_sends = 0;
        let mut seen: BTreeMap<(usize, usize), Vec<u8>> = BTreeMap::new();
        for e in events.iter().filter(|e| e.kind == EventKind::Task) {
            let c = e.color.unwrap();
            if COMPLETION_COLORS.contains(&c) {
                seen.entry((e.pe.x, e.pe.y)).or_default().push(c.id());
            }
        }
        for i in 0..16 {
            let pe = dims.coord(i);
            let actions: Vec<_> = SCHEDULE[s]
                .iter()
                .filter(|a| a.class.contains(pe))
                .collect();
            want_sends += actions
                .iter()
                .filter(|a| a.role == Role::Send && dims.neighbor(pe, a.dir).is_some())
                .count();
            let mut want: Vec<u8> = actions.iter().map(|a| a.completion.id()).collect();
            let mut got = seen.remove(&(pe.x, pe.y)).unwrap_or_default();
            want.sort();
            got.sort();
            ensure(got == want, || {
                format!("step {s} pe {pe:?}: completions {got:?}, want {want:?}")
            })?;
        }
        ensure(sends == want_sends, || {
            format!("step {s}: {sends} sends, want {want_sends}")
        })?;
    }
    for i in 0..16 {
        let pe = dims.coord(i);
        for side in [Link::North, Link::South, Link::East, Link::West] {
            let want = dims
                .neighbor(pe, side)
                .map(|n| cols[dims.index(n)].as_slice());
            ensure(bufs[i].get(side) == want, || {
                format!("pe {pe:?} {side:?} buffer")
            })?;
        }
    }
    Ok(format!(
        "4 barriers, schedule respected, 16 PEs' buffers correct, {} events",
        log.len()
    ))
}

fn all_reduce_check() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    for w in 1..=10 {
        for h in 1..=10 {
            let dims = FabricDims::new(w, h).unwrap();
            let values: Vec<f32> = (0..dims.pe_count())
                .map(|_| rng.gen_range(-1e3..1e3))
                .collect();
            let (results, log) =
                all_reduce(dims, &values, |a, b| a + b).map_err(|e| e.to_string())?;
            let ordered: Vec<f32> = reduce_order_signature(dims)
                .iter()
                .map(|&pe| values[dims.index(pe)])
                .collect();
            let serial = signature_fold(w, h, &ordered, |a, b| a + b);
            ensure(
                results.iter().all(|r| r.to_bits() == serial.to_bits()),
                || format!("{w}x{h}: result differs"),
            )?;

            let ticks = |cs: &[Color]| -> Vec<u64> {
                log.of_kind(EventKind::Send)
                    .filter(|e| cs.contains(&e.color.unwrap()))
                    .map(|e| e.tick)
                    .collect()
            };
            let phases = [
                ticks(&[REDUCE_ROW]),
                ticks(&[REDUCE_COL]),
                ticks(&[BCAST_COL, BCAST_ROW]),
            ];
            ensure(
                phases[0].len() == (w - 1) * h && phases[1].len() == h - 1,
                || format!("{w}x{h}: reduce sends"),
            )?;
            for a in 0..3 {
                for b in a + 1..3 {
                    if let (Some(x), Some(y)) = (phases[a].iter().max(), phases[b].iter().min()) {
                        ensure(x < y, || format!("{w}x{h}: phase {a} overlaps phase {b}"))?;
                    }
                }
            }
        }
    }
    Ok(
        "100 fabrics from 1x1 to 10x10, bit-exact on every PE, rows then column then broadcast"
            .into(),
    )
}

fn cost_model() -> Outcome {
    let m = per_cell_model();
    let t = m.total();
    let got = (
        m.jacobian.flops(),
        m.rest.flops(),
        t.flops(),
        t.memory_accesses(),
        t.fabric_loads,
    );
    ensure(got == (84, 12, 96, 268, 8), || {
        format!("model (jacobian, rest, total, mem, fabric) = {got:?}")
    })?;
    let point = roofline(
        &PerfCounters {
            ops: t,
            cells: 1,
            iterations: 1,
            ..Default::default()
        },
        None,
    )
    .map_err(|e| e.to_string())?;
    ensure((point.ai_memory - 0.0895).abs() <= 1e-4, || {
        format!("ai_memory {}", point.ai_memory)
    })?;
    ensure(point.ai_memory == 96.0 / 1072.0, || {
        format!("ai_memory {} is not 96/1072", point.ai_memory)
    })?;
    ensure(point.ai_fabric == 3.0, || {
        format!("ai_fabric {}", point.ai_fabric)
    })?;

    // The 8x8x8 demo's inner 6x6x6 block is all interior cells.
    let d = MeshDims::new(8, 8, 8).unwrap();
    let mesh = Mesh::demo(d).unwrap();
    let iters = 4;
    let rep = fabric_cg_solve(
        &mesh,
        &demo_rhs(&mesh),
        &CgOptions::new(1e-30, iters),
        &FabricConfig::default(),
    )
    .map_err(|e| e.to_string())?;
    ensure(rep.iterations == iters, || {
        format!("ran {} iterations", rep.iterations)
    })?;
    let mut interior = 0;
    for k in 0..d.cell_count() {
        let c = d.coords(k);
        if [c.x, c.y, c.z].iter().all(|v| (1..7).contains(v)) {
            ensure(rep.cell_costs[k] == t.times(iters as u64), || {
                format!("cell {c:?}: {:?}", rep.cell_costs[k])
            })?;
            interior += 1;
        }
    }
    Ok(format!("84 + 12 = 96 FLOPs, 268 accesses, 8 fabric loads, ai {:.5} / 3; {interior} interior cells match", point.ai_memory))
}

fn maximum_principle() -> Outcome {
    let mut worst = (0f64, 0f64);
    let excess = |v: f64| f64::max(-v, v - 1.0).max(0.0);
    for (nx, ny, nz) in [(2, 2, 1), (4, 4, 2), (7, 3, 5), (8, 8, 4), (16, 16, 8)] {
        let d = MeshDims::new(nx, ny, nz).unwrap();
        let mesh = Mesh::demo(d).unwrap();
        let (p, rep) = newton_step(
            &mesh,
            &Field::<f64>::zeros(d),
            &CgOptions::new(1e-24, 50_000),
        )
        .map_err(|e| e.to_string())?;
        ensure(rep.converged, || format!("{d:?}: 64-bit not converged"))?;
        let e64 = inf_norm(p.as_slice().iter().map(|&v| excess(v)));
        ensure(e64 <= 1e-12, || {
            format!("{d:?}: 64-bit pressure leaves [0,1] by {e64:e}")
        })?;

        let opts = CgOptions::new(1e-6, 50_000).order(DotOrder::Signature);
        let (p, rep) =
            newton_step(&mesh, &Field::<f32>::zeros(d), &opts).map_err(|e| e.to_string())?;
        ensure(rep.converged, || format!("{d:?}: 32-bit not converged"))?;
        let fab = fabric_cg_solve(&mesh, &demo_rhs(&mesh), &opts, &FabricConfig::default())
            .map_err(|e| e.to_string())?;
        ensure(fab.converged, || format!("{d:?}: fabric not converged"))?;
        let e32 = inf_norm(
            p.as_slice()
                .iter()
                .chain(fab.solution.as_slice())
                .map(|&v| excess(v as f64)),
        );
        ensure(e32 <= 1e-6, || {
            format!("{d:?}: 32-bit pressure leaves [0,1] by {e32:e}")
        })?;
        worst = (worst.0.max(e64), worst.1.max(e32));
    }
    Ok(format!(
        "up to 16x16x8, worst excursion {:.1e} (64-bit), {:.1e} (32-bit, reference and fabric)",
        worst.0, worst.1
    ))
}

fn snapshot(dir: &Path) -> BTreeMap<String, Vec<u8>> {
    fs::read_dir(dir)
        .unwrap()
        .map(|e| {
            let e = e.unwrap();
            (
                e.file_name().to_string_lossy().into_owned(),
                fs::read(e.path()).unwrap(),
            )
        })
        .collect()
}

fn determinism() -> Outcome {
    let tmp = tempfile::tempdir().map_err(|e| e.to_string())?;
    let configs = [
        RunConfig {
            mesh: Some(MeshSource::Demo(MeshDims::new(6, 5, 3).unwrap())),
            mode: Mode::Both,
            log_level: LogLevel::Full,
            elapsed: Some(1e-3),
            ..RunConfig::default()
        },
        RunConfig {
            mode: Mode::Perf,
            ..RunConfig::default()
        },
    ];
    let spec = SweepSpec::parse(
        "tick_seconds = 1e-9\n[[run]]\ndemo = [3, 3, 2]\n[[run]]\ndemo = [5, 4, 3]\n",
    )
    .map_err(|e| e.to_string())?;
    let mut files = 0;
    for (c, cfg) in configs.iter().enumerate() {
        let mut first = None;
        for rep in 0..10 {
            let out = tmp.path().join(format!("c{c}-{rep}"));
            run(&RunConfig {
                out: out.clone(),
                ..cfg.clone()
            })
            .map_err(|e| e.to_string())?;
            let mut snap = snapshot(&out);
            let mut csv = Vec::new();
            write_csv(
                &run_sweep(&spec, Path::new("."), None).map_err(|e| e.to_string())?,
                &mut csv,
            )
            .map_err(|e| e.to_string())?;
            snap.insert("sweep.csv".into(), csv);
            match &first {
                None => {
                    files += snap.len();
                    first = Some(snap);
                }
                Some(f) => {
                    for (name, bytes) in f {
                        ensure(snap.get(name) == Some(bytes), || {
                            format!("config {c}: {name} differs on run {rep}")
                        })?;
                    }
                    ensure(snap.len() == f.len(), || {
                        format!("config {c}: file set differs on run {rep}")
                    })?;
                }
            }
        }
    }
    Ok(format!("10 repetitions, {files} artifacts byte-identical"))
}

fn main() -> ExitCode {
    let criteria: [(&str, fn() -> Outcome); 8] = [
        ("oracle equivalence", oracle_equivalence),
        ("CG correctness", cg_correctness),
        ("fabric/reference lockstep", lockstep),
        ("exchange protocol conformance", protocol),
        ("all-reduce correctness", all_reduce_check),
        ("cost model", cost_model),
        ("maximum principle", maximum_principle),
        ("determinism", determinism),
    ];
    let mut failed = 0;
    for (name, check) in criteria {
        let result = catch_unwind(AssertUnwindSafe(check)).unwrap_or_else(|p| {
            Err(p
                .downcast_ref::<String>()
                .cloned()
                .or(p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default())
        });
        match result {
            Ok(detail) => println!("PASS {name}: {detail}"),
            Err(why) => {
                failed += 1;
                println!("FAIL {name}: {why}");
            }
        }
    }
    println!(
        "{} of {} criteria passed",
        criteria.len() - failed,
        criteria.len()
    );
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
