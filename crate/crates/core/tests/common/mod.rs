#![allow(dead_code)]

use fvflow_core::mesh::Axis;
use fvflow_core::{CellIndex, Field, Mesh, MeshDims};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Mesh with log-uniform face transmissibilities and mobilities in
/// [0.1, 10] and each cell Dirichlet with probability `p_dirichlet`.
pub fn random_mesh(dims: MeshDims, p_dirichlet: f64, seed: u64) -> Mesh {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let coef = |rng: &mut ChaCha8Rng| 10f64.powf(rng.gen_range(-1.0..1.0));
    let trans = [Axis::X, Axis::Y, Axis::Z]
        .map(|a| (0..dims.face_count(a)).map(|_| coef(&mut rng)).collect());
    let mobility = (0..dims.cell_count()).map(|_| coef(&mut rng)).collect();
    let mut dirichlet: Vec<(CellIndex, f64)> = Vec::new();
    for k in 0..dims.cell_count() {
        if rng.gen_bool(p_dirichlet) {
            dirichlet.push((dims.coords(k), rng.gen_range(-1.0..1.0)));
        }
    }
    Mesh::from_parts(dims, trans, mobility, &dirichlet).unwrap()
}

pub fn random_field(dims: MeshDims, seed: u64) -> Field<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Field::from_fn(dims, |_| rng.gen_range(-1.0..1.0))
}

pub fn dims_up_to(max: usize) -> impl Strategy<Value = MeshDims> {
    (1..=max, 1..=max, 1..=max).prop_map(|(x, y, z)| MeshDims::new(x, y, z).unwrap())
}

/// Random mesh (dims up to `max` per axis) plus a seed for companion data.
pub fn arb_mesh(max: usize) -> impl Strategy<Value = (Mesh, u64)> {
    (dims_up_to(max), 0.0..0.4f64, any::<u64>()).prop_map(|(d, p, seed)| {
        (
            random_mesh(d, p, seed),
            seed.wrapping_mul(0x9e37_79b9_7f4a_7c15),
        )
    })
}

pub fn inf_norm(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |m, x| f64::max(m, x.abs()))
}
