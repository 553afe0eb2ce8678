mod common;

use common::{dims_up_to, random_field, random_mesh};
use fvflow_core::dataflow::{
    fabric_apply_jacobian, fabric_cg_solve, fabric_dot, CgState, FabricCgReport, FabricConfig,
    Outcome,
};
use fvflow_core::fabric::EventKind;
use fvflow_core::perf::{cg_vector_work, fabric_word, neighbor_term, per_cell_model, OpCounts};
use fvflow_core::reference::{cg_solve, dot_signature, CgOptions, CgReport, DotOrder};
use fvflow_core::{CellIndex, Direction, Field, Mesh, MeshDims};
use proptest::prelude::*;

fn demo_rhs(mesh: &Mesh) -> Field<f32> {
    // The Newton right-hand side from p = 0: pressure targets on Dirichlet
    // cells, zero elsewhere.
    Field::from_fn(mesh.dims(), |c| {
        mesh.dirichlet()
            .get(&mesh.dims().index(c))
            .map_or(0.0, |&v| v as f32)
    })
}

fn assert_lockstep(fab: &FabricCgReport, reference: &CgReport<f32>) {
    assert_eq!(fab.iterations, reference.iterations);
    assert_eq!(fab.converged, reference.converged);
    assert_eq!(fab.initial_rr.to_bits(), reference.initial_rr.to_bits());
    assert_eq!(fab.history.len(), reference.history.len());
    for (k, (a, r)) in fab.history.iter().zip(&reference.history).enumerate() {
        assert_eq!(a.x_jx.to_bits(), r.x_jx.to_bits(), "x^T J x at {k}");
        assert_eq!(a.alpha.to_bits(), r.alpha.to_bits(), "alpha at {k}");
        assert_eq!(a.rr.to_bits(), r.rr.to_bits(), "r^T r at {k}");
        assert_eq!(
            a.beta.map(f32::to_bits),
            r.beta.map(f32::to_bits),
            "beta at {k}"
        );
        let bits = |v: &[f32]| v.iter().map(|x| x.to_bits()).collect::<Vec<_>>();
        assert_eq!(bits(&a.y), bits(&r.y), "y at {k}");
        assert_eq!(bits(&a.r), bits(&r.r), "r at {k}");
    }
    assert!(fab.solution.bitwise_eq(&reference.solution));
}

#[test]
fn demo_lockstep() {
    for (nx, ny, nz) in [(4, 4, 2), (8, 8, 4), (6, 10, 3)] {
        let mesh = Mesh::demo(MeshDims::new(nx, ny, nz).unwrap()).unwrap();
        let b = demo_rhs(&mesh);
        let opts = CgOptions::new(1e-10, 500)
            .order(DotOrder::Signature)
            .history(true);
        let fab = fabric_cg_solve(&mesh, &b, &opts, &FabricConfig::default()).unwrap();
        let reference = cg_solve(&mesh, &b, &opts).unwrap();
        assert!(fab.iterations > 0);
        assert_lockstep(&fab, &reference);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn random_lockstep(d in dims_up_to(5), seed in any::<u64>(), k_max in 0usize..60) {
        let mut mesh = random_mesh(d, 0.15, seed);
        if mesh.dirichlet().is_empty() {
            mesh = random_mesh(d, 1.0, seed);
        }
        let b = random_field(d, seed ^ 5).cast::<f32>();
        let opts = CgOptions::new(1e-8, k_max).order(DotOrder::Signature).history(true);
        let fab = fabric_cg_solve(&mesh, &b, &opts, &FabricConfig::default()).unwrap();
        let reference = cg_solve(&mesh, &b, &opts).unwrap();
        assert_lockstep(&fab, &reference);
        prop_assert_eq!(fab.exchanges, fab.iterations + 1);
        prop_assert_eq!(fab.reductions, 2 * fab.iterations + 1);
    }
}

#[test]
fn state_coverage_of_a_converged_run() {
    let mesh = Mesh::demo(MeshDims::new(5, 4, 3).unwrap()).unwrap();
    let rep = fabric_cg_solve(
        &mesh,
        &demo_rhs(&mesh),
        &CgOptions::new(1e-10, 500),
        &FabricConfig::default(),
    )
    .unwrap();
    assert_eq!(rep.outcome, Outcome::Converged);
    let k = rep.iterations;
    let count = |s: CgState| rep.state_trace.iter().filter(|(_, t)| *t == s).count();
    assert_eq!(count(CgState::Init), 1);
    assert_eq!(count(CgState::Converged), 1);
    assert_eq!(count(CgState::Failed), 0);
    // The setup pass adds one exchange, Jacobian, residual update, r^T r
    // and threshold check; the last iteration skips BETA and UPDATE_X.
    for (s, n) in [
        (CgState::Exchange, k + 1),
        (CgState::ApplyJ, k + 1),
        (CgState::DotXjx, k),
        (CgState::Alpha, k),
        (CgState::UpdateY, k),
        (CgState::UpdateR, k + 1),
        (CgState::DotRr, k + 1),
        (CgState::ThresCheck, k + 1),
        (CgState::Beta, k - 1),
        (CgState::UpdateX, k - 1),
        (CgState::IterCheck, k),
    ] {
        assert_eq!(count(s), n, "{}", s.name());
    }
    // Every step follows the documented transition diagram.
    let next = |a: CgState, b: CgState| {
        use CgState::*;
        matches!(
            (a, b),
            (Init, Exchange)
                | (Exchange, ApplyJ)
                | (ApplyJ, UpdateR | DotXjx)
                | (DotXjx, Alpha)
                | (Alpha, UpdateY | Failed)
                | (UpdateY, UpdateR)
                | (UpdateR, DotRr)
                | (DotRr, ThresCheck)
                | (ThresCheck, Converged | Beta | IterCheck)
                | (Beta, UpdateX)
                | (UpdateX, IterCheck)
                | (IterCheck, Exchange | Failed)
        )
    };
    assert!(rep.state_trace.windows(2).all(|w| next(w[0].1, w[1].1)));
}

#[test]
fn single_column_moves_no_neighbor_data() {
    for nz in [1, 2, 7] {
        let d = MeshDims::new(1, 1, nz).unwrap();
        let mesh = random_mesh(d, 0.0, nz as u64);
        let mesh = Mesh::from_parts(
            d,
            mesh.face_transmissibilities().clone(),
            mesh.mobilities().to_vec(),
            &[(CellIndex::new(0, 0, 0), 1.0)],
        )
        .unwrap();
        let b = random_field(d, 3).cast::<f32>();
        let rep = fabric_cg_solve(
            &mesh,
            &b,
            &CgOptions::new(1e-10, 50),
            &FabricConfig::default(),
        )
        .unwrap();
        assert_eq!(rep.stats.data_sent, 0);
        assert_eq!(rep.log.count(EventKind::Send), 0);
        assert_eq!(rep.counters.exchange_words, 0);
        if rep.iterations > 0 {
            assert!(rep.counters.ops.fabric_loads > 0);
        }
    }
}

#[test]
fn jacobian_kernel_examples() {
    let d = MeshDims::new(1, 1, 3).unwrap();
    let mesh = Mesh::build(d, &[1.0; 3], 1.0, &[]).unwrap();
    let x = Field::from_vec(d, vec![0.0f32, 1.0, 0.0]).unwrap();
    let (jx, _, stats) = fabric_apply_jacobian(&mesh, &x, &FabricConfig::default()).unwrap();
    assert_eq!(jx.as_slice(), &[1.0, -2.0, 1.0]);
    assert_eq!(stats.data_sent, 0);

    let all: Vec<_> = (0..3).map(|z| (CellIndex::new(0, 0, z), 0.0)).collect();
    let fixed = Mesh::build(d, &[1.0; 3], 1.0, &all).unwrap();
    let (jx, _, _) = fabric_apply_jacobian(&fixed, &x, &FabricConfig::default()).unwrap();
    assert_eq!(jx, x);

    let d = MeshDims::new(2, 1, 1).unwrap();
    let mesh = Mesh::build(d, &[1.0; 2], 1.0, &[]).unwrap();
    let x = Field::from_vec(d, vec![0.0f32, 1.0]).unwrap();
    let (jx, log, stats) = fabric_apply_jacobian(&mesh, &x, &FabricConfig::default()).unwrap();
    assert_eq!(jx.as_slice(), &[1.0, -1.0]);
    assert_eq!(stats.data_sent, 2);
    assert_eq!(log.count(EventKind::Send), 2);
}

#[test]
fn dot_kernel_examples() {
    let d = MeshDims::new(2, 2, 4).unwrap();
    let mesh = Mesh::demo(d).unwrap();
    let ones = Field::from_vec(d, vec![1.0f32; 16]).unwrap();
    let (v, _) = fabric_dot(&mesh, &ones, &ones, &FabricConfig::default()).unwrap();
    assert_eq!(v, [16.0; 4]);
    let zero = Field::zeros(d);
    let (v, _) = fabric_dot(&mesh, &zero, &zero, &FabricConfig::default()).unwrap();
    assert_eq!(v, [0.0; 4]);

    let d = MeshDims::new(2, 2, 3).unwrap();
    let mesh = Mesh::demo(d).unwrap();
    let a = random_field(d, 1).cast::<f32>();
    let b = random_field(d, 2).cast::<f32>();
    let (v, _) = fabric_dot(&mesh, &a, &b, &FabricConfig::default()).unwrap();
    let expect = dot_signature(d, a.as_slice(), b.as_slice());
    assert!(v.iter().all(|x| x.to_bits() == expect.to_bits()));
}

#[test]
fn solver_edge_cases() {
    let d = MeshDims::new(2, 2, 2).unwrap();
    let all: Vec<_> = (0..8).map(|k| (d.coords(k), 0.5)).collect();
    let mesh = Mesh::build(d, &[1.0; 8], 1.0, &all).unwrap();
    let b = random_field(d, 9).cast::<f32>();
    let rep = fabric_cg_solve(
        &mesh,
        &b,
        &CgOptions::new(1e-10, 10),
        &FabricConfig::default(),
    )
    .unwrap();
    assert!(rep.converged);
    assert_eq!(rep.solution, b);

    let mesh = Mesh::demo(d).unwrap();
    let rep = fabric_cg_solve(
        &mesh,
        &demo_rhs(&mesh),
        &CgOptions::new(1e-10, 0),
        &FabricConfig::default(),
    )
    .unwrap();
    assert!(!rep.converged);
    assert_eq!((rep.iterations, rep.outcome), (0, Outcome::MaxIterations));
}

/// Brute-force expected loop cost of one cell per iteration.
fn expected_cost(mesh: &Mesh, k: usize) -> OpCounts {
    let d = mesh.dims();
    let c = d.coords(k);
    let lateral = [
        Direction::MinusX,
        Direction::PlusX,
        Direction::MinusY,
        Direction::PlusY,
    ]
    .iter()
    .filter(|&&dir| d.step(c, dir).is_some())
    .count() as u64;
    let words = fabric_word().times(lateral);
    if mesh.is_dirichlet(k) {
        return words;
    }
    neighbor_term().times(mesh.neighbors(c).len() as u64) + words + cg_vector_work()
}

#[test]
fn measured_counts_match_the_model() {
    // 8x8x8 demo: the inner 6x6x6 block is all six-neighbor free cells.
    let d = MeshDims::new(8, 8, 8).unwrap();
    let mesh = Mesh::demo(d).unwrap();
    let rep = fabric_cg_solve(
        &mesh,
        &demo_rhs(&mesh),
        &CgOptions::new(1e-30, 5),
        &FabricConfig::default(),
    )
    .unwrap();
    assert_eq!(rep.iterations, 5);
    let model = per_cell_model().total();
    let mut interior = 0;
    for k in 0..d.cell_count() {
        let c = d.coords(k);
        let inner = [c.x, c.y, c.z].iter().all(|&v| (1..7).contains(&v));
        if inner {
            assert_eq!(rep.cell_costs[k], model.times(5));
            interior += 1;
        }
        assert_eq!(
            rep.cell_costs[k],
            expected_cost(&mesh, k).times(5),
            "cell {c:?}"
        );
    }
    assert_eq!(interior, 216);
    let total: OpCounts = rep.cell_costs.iter().copied().sum();
    assert_eq!(rep.counters.ops, total);

    let d = MeshDims::new(2, 2, 2).unwrap();
    let fixed: Vec<_> = (0..8).map(|k| (d.coords(k), 0.0)).collect();
    let mesh = Mesh::build(d, &[1.0; 8], 1.0, &fixed).unwrap();
    let rep = fabric_cg_solve(
        &mesh,
        &Field::from_vec(d, vec![1.0; 8]).unwrap(),
        &CgOptions::new(1e-10, 3),
        &FabricConfig::default(),
    )
    .unwrap();
    assert_eq!((rep.counters.ops.fsub, rep.counters.ops.fmul), (0, 0));
}

#[test]
fn repeated_runs_are_identical() {
    let mesh = Mesh::demo(MeshDims::new(4, 3, 2).unwrap()).unwrap();
    let b = demo_rhs(&mesh);
    let cfg = FabricConfig {
        log_level: fvflow_core::fabric::LogLevel::Full,
        ..FabricConfig::default()
    };
    let opts = CgOptions::new(1e-10, 100);
    let first = fabric_cg_solve(&mesh, &b, &opts, &cfg).unwrap();
    for _ in 0..9 {
        assert_eq!(fabric_cg_solve(&mesh, &b, &opts, &cfg).unwrap(), first);
    }
}

#[test]
fn demo_pressure_on_the_fabric_stays_in_range() {
    let mesh = Mesh::demo(MeshDims::new(8, 8, 4).unwrap()).unwrap();
    let rep = fabric_cg_solve(
        &mesh,
        &demo_rhs(&mesh),
        &CgOptions::new(1e-6, 5000),
        &FabricConfig::default(),
    )
    .unwrap();
    assert!(rep.converged);
    assert!(rep
        .solution
        .as_slice()
        .iter()
        .all(|&v| (-1e-6..=1.0 + 1e-6).contains(&v)));
}
