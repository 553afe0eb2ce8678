use alloc::vec::Vec;

use crate::mesh::Mesh;
use crate::real::Real;

/// Assembled Jacobian in CSR form. Only used as a test oracle for the
/// matrix-free product.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseJacobian {
    n: usize,
    row_ptr: Vec<usize>,
    cols: Vec<usize>,
    vals: Vec<f64>,
}

impl SparseJacobian {
    /// Differentiates the residual: Dirichlet rows are unit rows, free rows
    /// carry `+Υλ` off the diagonal and `−ΣΥλ` on it. Columns within a row
    /// are ascending.
    pub fn assemble(mesh: &Mesh) -> Self {
        let n = mesh.cell_count();
        let mut row_ptr = Vec::with_capacity(n + 1);
        let mut cols = Vec::with_capacity(7 * n);
        let mut vals = Vec::with_capacity(7 * n);
        row_ptr.push(0);
        for k in 0..n {
            if mesh.is_dirichlet(k) {
                cols.push(k);
                vals.push(1.0);
            } else {
                let lk = mesh.mobility(k);
                let mut row: Vec<(usize, f64)> = mesh
                    .face_neighbors(mesh.dims().coords(k))
                    .map(|f| (f.index, f.trans * ((lk + mesh.mobility(f.index)) * 0.5)))
                    .collect();
                let diag = -row.iter().map(|&(_, v)| v).sum::<f64>();
                row.push((k, diag));
                row.sort_by_key(|&(c, _)| c);
                for (c, v) in row {
                    cols.push(c);
                    vals.push(v);
                }
            }
            row_ptr.push(cols.len());
        }
        Self {
            n,
            row_ptr,
            cols,
            vals,
        }
    }

    pub fn size(&self) -> usize {
        self.n
    }

    pub fn nnz(&self) -> usize {
        self.vals.len()
    }

    /// `(column, value)` pairs of one row.
    pub fn row(&self, i: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let span = self.row_ptr[i]..self.row_ptr[i + 1];
        self.cols[span.clone()]
            .iter()
            .copied()
            .zip(self.vals[span].iter().copied())
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.row(i).find(|&(c, _)| c == j).map_or(0.0, |(_, v)| v)
    }

    pub fn matvec<T: Real>(&self, x: &[T]) -> Vec<T> {
        (0..self.n)
            .map(|i| {
                self.row(i)
                    .fold(T::ZERO, |acc, (c, v)| acc + T::from_f64(v) * x[c])
            })
            .collect()
    }

    /// Row-major dense copy, for small direct solves in tests.
    pub fn to_dense(&self) -> Vec<f64> {
        let mut out = alloc::vec![0.0; self.n * self.n];
        for i in 0..self.n {
            for (c, v) in self.row(i) {
                out[i * self.n + c] = v;
            }
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::{CellIndex, MeshDims};

    fn line(dirichlet: &[(CellIndex, f64)]) -> Mesh {
        Mesh::build(MeshDims::new(3, 1, 1).unwrap(), &[1.0; 3], 1.0, dirichlet).unwrap()
    }

    #[test]
    fn tridiagonal_line() {
        let j = SparseJacobian::assemble(&line(&[]));
        assert_eq!(
            j.to_dense(),
            [-1.0, 1.0, 0.0, 1.0, -2.0, 1.0, 0.0, 1.0, -1.0]
        );
        for i in 0..3 {
            assert_eq!(j.row(i).map(|(_, v)| v).sum::<f64>(), 0.0);
        }
    }

    #[test]
    fn dirichlet_row_is_unit() {
        let j = SparseJacobian::assemble(&line(&[(CellIndex::new(1, 0, 0), 2.0)]));
        assert_eq!(j.row(1).collect::<Vec<_>>(), [(1, 1.0)]);
        // The free neighbors still couple to it, so J is not symmetric.
        assert_eq!(j.get(0, 1), 1.0);
        assert_eq!(j.get(1, 0), 0.0);
    }
}
