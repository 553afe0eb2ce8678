//! Sequential TPFA kernels: flux, residual, matrix-free Jacobian product,
//! dot products, and the conjugate-gradient / Newton drivers built on them.
//!
//! Everything is generic over [`Real`] so the same code runs in 32-bit
//! compute mode and 64-bit oracle mode. Mesh coefficients are stored in
//! `f64` and converted with [`Real::from_f64`] at the point of use; the
//! dataflow solver performs exactly the same conversions, which is what makes
//! bitwise comparison between the two possible.

mod cg;
mod sparse;

pub use cg::{cg_solve, newton_step, CgError, CgOptions, CgReport, DotOrder, IterRecord};
pub use sparse::SparseJacobian;

use alloc::vec;
use alloc::vec::Vec;

use crate::comm::signature_fold;
use crate::mesh::{CellIndex, Mesh, MeshDims, MeshError};
use crate::real::Real;

/// One scalar per mesh cell, x-innermost / z-outermost.
#[derive(Debug, Clone, PartialEq)]
pub struct Field<T> {
    dims: MeshDims,
    data: Vec<T>,
}

impl<T: Real> Field<T> {
    pub fn zeros(dims: MeshDims) -> Self {
        Self {
            dims,
            data: vec![T::ZERO; dims.cell_count()],
        }
    }

    pub fn from_vec(dims: MeshDims, data: Vec<T>) -> Result<Self, MeshError> {
        if data.len() != dims.cell_count() {
            return Err(MeshError::Length {
                what: "field",
                expected: dims.cell_count(),
                got: data.len(),
            });
        }
        Ok(Self { dims, data })
    }

    pub fn from_fn(dims: MeshDims, mut f: impl FnMut(CellIndex) -> T) -> Self {
        let data = (0..dims.cell_count()).map(|k| f(dims.coords(k))).collect();
        Self { dims, data }
    }

    pub fn dims(&self) -> MeshDims {
        self.dims
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn as_slice(&self) -> &[T] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [T] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<T> {
        self.data
    }

    pub fn at(&self, c: CellIndex) -> T {
        self.data[self.dims.index(c)]
    }

    pub fn cast<U: Real>(&self) -> Field<U> {
        Field {
            dims: self.dims,
            data: self.data.iter().map(|v| U::from_f64(v.to_f64())).collect(),
        }
    }

    /// Largest absolute entry, as `f64`.
    pub fn max_abs(&self) -> f64 {
        self.data
            .iter()
            .fold(0.0, |m, v| f64::max(m, v.to_f64().abs()))
    }

    pub fn max_abs_diff(&self, other: &Field<T>) -> f64 {
        self.data.iter().zip(&other.data).fold(0.0, |m, (a, b)| {
            f64::max(m, (a.to_f64() - b.to_f64()).abs())
        })
    }

    /// True when both fields hold the same bit patterns in every cell.
    pub fn bitwise_eq(&self, other: &Field<T>) -> bool {
        self.dims == other.dims
            && self
                .data
                .iter()
                .zip(&other.data)
                .all(|(a, b)| a.to_bits_u64() == b.to_bits_u64())
    }
}

fn check_len(mesh: &Mesh, len: usize) -> Result<(), MeshError> {
    if len != mesh.cell_count() {
        return Err(MeshError::Length {
            what: "field",
            expected: mesh.cell_count(),
            got: len,
        });
    }
    Ok(())
}

/// One TPFA neighbor term `t * ((lk + ll) * 0.5) * (xl - xk)`, evaluated in
/// the exact operation order shared with the dataflow solver.
#[inline]
pub fn face_term<T: Real>(t: T, lk: T, ll: T, xk: T, xl: T) -> T {
    (t * ((lk + ll) * T::HALF)) * (xl - xk)
}

/// Flux from `k` towards `l`: `Υ_KL λ_KL (p_L − p_K)`.
pub fn flux<T: Real>(
    mesh: &Mesh,
    p: &Field<T>,
    k: CellIndex,
    l: CellIndex,
) -> Result<T, MeshError> {
    let t = T::from_f64(mesh.transmissibility(k, l)?);
    let dims = mesh.dims();
    let (ik, il) = (dims.index(k), dims.index(l));
    let (lk, ll) = (
        T::from_f64(mesh.mobility(ik)),
        T::from_f64(mesh.mobility(il)),
    );
    Ok(face_term(t, lk, ll, p.as_slice()[ik], p.as_slice()[il]))
}

/// Sum of neighbor terms for free cell `k`, neighbors visited in the fixed
/// -x, +x, -y, +y, -z, +z order, accumulated from zero.
fn flux_sum<T: Real>(mesh: &Mesh, x: &[T], k: usize) -> T {
    let lk = T::from_f64(mesh.mobility(k));
    let xk = x[k];
    let mut acc = T::ZERO;
    for f in mesh.face_neighbors(mesh.dims().coords(k)) {
        let ll = T::from_f64(mesh.mobility(f.index));
        acc = acc + face_term(T::from_f64(f.trans), lk, ll, xk, x[f.index]);
    }
    acc
}

/// Constrained residual: flux balance on free cells, `p_K − p^D_K` on
/// Dirichlet cells.
pub fn residual<T: Real>(mesh: &Mesh, p: &Field<T>) -> Result<Field<T>, MeshError> {
    check_len(mesh, p.len())?;
    let x = p.as_slice();
    let data = (0..mesh.cell_count())
        .map(|k| match mesh.dirichlet().get(&k) {
            Some(&pd) => x[k] - T::from_f64(pd),
            None => flux_sum(mesh, x, k),
        })
        .collect();
    Ok(Field {
        dims: mesh.dims(),
        data,
    })
}

/// Matrix-free Jacobian product. Dirichlet rows are the identity.
pub fn apply_jacobian<T: Real>(mesh: &Mesh, x: &Field<T>) -> Result<Field<T>, MeshError> {
    check_len(mesh, x.len())?;
    let mut out = Field::zeros(mesh.dims());
    apply_jacobian_into(mesh, x.as_slice(), out.as_mut_slice());
    Ok(out)
}

pub(crate) fn apply_jacobian_into<T: Real>(mesh: &Mesh, x: &[T], out: &mut [T]) {
    for (k, o) in out.iter_mut().enumerate() {
        *o = if mesh.is_dirichlet(k) {
            x[k]
        } else {
            flux_sum(mesh, x, k)
        };
    }
}

/// Dot product in ascending cell-index order, accumulated from zero.
pub fn dot_ascending<T: Real>(a: &[T], b: &[T]) -> T {
    a.iter().zip(b).fold(T::ZERO, |acc, (&x, &y)| acc + x * y)
}

/// Dot product in the fabric's reduction order: one partial per `(x, y)`
/// column summed over ascending z, then the partials combined by
/// [`signature_fold`] over an `nx × ny` fabric.
pub fn dot_signature<T: Real>(dims: MeshDims, a: &[T], b: &[T]) -> T {
    let plane = dims.nx * dims.ny;
    let partials: Vec<T> = (0..plane)
        .map(|col| {
            (0..dims.nz).fold(T::ZERO, |acc, z| {
                acc + a[col + plane * z] * b[col + plane * z]
            })
        })
        .collect();
    signature_fold(dims.nx, dims.ny, &partials, |p, q| p + q)
}
