//! Matrix-free two-point flux approximation (TPFA) kernels for single-phase
//! incompressible flow, solved by conjugate gradient twice over:
//!
//! * [`reference`] runs the solver as a plain sequential program and doubles
//!   as the numerical ground truth;
//! * [`dataflow`] maps the same solver onto [`fabric`], a deterministic
//!   simulator of a 2D grid of processing elements connected by routers with
//!   colored links, using the collectives in [`comm`].
//!
//! [`perf`] holds the per-cell instruction/traffic model and the roofline
//! arithmetic. The crate is `no_std` and only needs `alloc`; file formats and
//! the command-line driver live in the `fvflow` crate.

#![no_std]
#![forbid(unsafe_code)]

extern crate alloc;

pub mod comm;
pub mod dataflow;
pub mod fabric;
pub mod mesh;
pub mod perf;
pub mod real;
pub mod reference;

pub use mesh::{CellIndex, Direction, Mesh, MeshDims, MeshError};
pub use real::Real;
pub use reference::{CgReport, Field};
