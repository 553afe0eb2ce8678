use alloc::vec::Vec;

use super::{apply_jacobian_into, check_len, dot_ascending, dot_signature, residual, Field};
use crate::mesh::{Mesh, MeshError};
use crate::real::Real;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum CgError {
    #[error("tolerance must be positive and finite, got {0}")]
    InvalidTolerance(f64),
    #[error("x^T J x vanished at iteration {iteration} with r^T r not below tolerance")]
    Breakdown { iteration: usize },
    #[error(transparent)]
    Mesh(#[from] MeshError),
}

/// Summation order used for every dot product of a solve.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum DotOrder {
    /// Plain ascending cell index.
    #[default]
    Ascending,
    /// Column partials combined in the fabric all-reduce order, so results
    /// match the dataflow solver bit for bit.
    Signature,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CgOptions {
    /// Threshold on the squared residual norm `r^T r`.
    pub eps: f64,
    pub k_max: usize,
    pub order: DotOrder,
    /// Keep a copy of `y` and `r` after every iteration.
    pub record_history: bool,
}

impl CgOptions {
    pub fn new(eps: f64, k_max: usize) -> Self {
        Self {
            eps,
            k_max,
            order: DotOrder::Ascending,
            record_history: false,
        }
    }

    pub fn order(mut self, order: DotOrder) -> Self {
        self.order = order;
        self
    }

    pub fn history(mut self, on: bool) -> Self {
        self.record_history = on;
        self
    }

    pub(crate) fn validate(&self) -> Result<(), CgError> {
        if !(self.eps > 0.0 && self.eps.is_finite()) {
            return Err(CgError::InvalidTolerance(self.eps));
        }
        Ok(())
    }
}

/// Scalars of one completed iteration, plus the iterates when requested.
#[derive(Debug, Clone, PartialEq)]
pub struct IterRecord<T> {
    pub x_jx: T,
    pub alpha: T,
    /// `r^T r` after this iteration's residual update.
    pub rr: T,
    /// Absent on the iteration that converged.
    pub beta: Option<T>,
    pub y: Vec<T>,
    pub r: Vec<T>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CgReport<T> {
    pub iterations: usize,
    pub final_rr: T,
    pub converged: bool,
    pub solution: Field<T>,
    /// `r^T r` of the starting residual.
    pub initial_rr: T,
    pub history: Vec<IterRecord<T>>,
}

/// Solves `J y = b` by conjugate gradient.
///
/// The iteration starts from the Dirichlet lift (`y_0 = b` on Dirichlet
/// cells, zero elsewhere), so the residual and search direction vanish on
/// Dirichlet cells and CG only ever sees the symmetric free-cell block.
/// `r^T r < eps` is tested once before the loop and then right after each
/// residual update; `iterations` counts completed updates.
pub fn cg_solve<T: Real>(
    mesh: &Mesh,
    b: &Field<T>,
    opts: &CgOptions,
) -> Result<CgReport<T>, CgError> {
    opts.validate()?;
    check_len(mesh, b.len())?;
    let dims = mesh.dims();
    let n = mesh.cell_count();
    let dot = |a: &[T], c: &[T]| match opts.order {
        DotOrder::Ascending => dot_ascending(a, c),
        DotOrder::Signature => dot_signature(dims, a, c),
    };
    let eps = T::from_f64(opts.eps);
    let bs = b.as_slice();

    let mut y: Vec<T> = (0..n)
        .map(|k| if mesh.is_dirichlet(k) { bs[k] } else { T::ZERO })
        .collect();
    let mut jx = alloc::vec![T::ZERO; n];
    apply_jacobian_into(mesh, &y, &mut jx);
    let mut r: Vec<T> = bs.iter().zip(&jx).map(|(&bk, &j)| bk - j).collect();
    let mut x = r.clone();
    let mut rr = dot(&r, &r);
    let initial_rr = rr;

    let mut history = Vec::new();
    let mut k = 0;
    let done = |y: Vec<T>, k, rr, converged, history| {
        Ok(CgReport {
            iterations: k,
            final_rr: rr,
            converged,
            solution: Field { dims, data: y },
            initial_rr,
            history,
        })
    };
    if rr < eps {
        return done(y, k, rr, true, history);
    }
    loop {
        if k >= opts.k_max {
            return done(y, k, rr, false, history);
        }
        apply_jacobian_into(mesh, &x, &mut jx);
        let x_jx = dot(&x, &jx);
        if x_jx == T::ZERO {
            return Err(CgError::Breakdown { iteration: k });
        }
        let alpha = rr / x_jx;
        for i in 0..n {
            y[i] = y[i] + alpha * x[i];
            r[i] = r[i] - alpha * jx[i];
        }
        let rn = dot(&r, &r);
        k += 1;
        let mut rec = IterRecord {
            x_jx,
            alpha,
            rr: rn,
            beta: None,
            y: Vec::new(),
            r: Vec::new(),
        };
        if opts.record_history {
            rec.y = y.clone();
            rec.r = r.clone();
        }
        if rn < eps {
            history.push(rec);
            return done(y, k, rn, true, history);
        }
        let beta = rn / rr;
        rec.beta = Some(beta);
        history.push(rec);
        for i in 0..n {
            x[i] = r[i] + beta * x[i];
        }
        rr = rn;
    }
}

/// One Newton update `p + δp` with `J δp = −r(p)`.
pub fn newton_step<T: Real>(
    mesh: &Mesh,
    p: &Field<T>,
    opts: &CgOptions,
) -> Result<(Field<T>, CgReport<T>), CgError> {
    let mut b = residual(mesh, p)?;
    for v in b.as_mut_slice() {
        *v = -*v;
    }
    let report = cg_solve(mesh, &b, opts)?;
    let data = p
        .as_slice()
        .iter()
        .zip(report.solution.as_slice())
        .map(|(&a, &d)| a + d)
        .collect();
    Ok((
        Field {
            dims: p.dims(),
            data,
        },
        report,
    ))
}
