//! Structured 3D Cartesian meshes with TPFA face transmissibilities, per-cell
//! mobility and Dirichlet cells.
//!
//! Cells are unit cubes. A cell `(x, y, z)` has linear index
//! `x + nx * (y + ny * z)` (x innermost, z outermost). Transmissibilities are
//! stored once per interior face, indexed by the face's lower cell, so the
//! lookup from either side returns the same stored value.

use alloc::collections::BTreeMap;
use alloc::vec;
use alloc::vec::Vec;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum MeshError {
    #[error("mesh dimensions must be positive, got {nx}x{ny}x{nz}")]
    EmptyDims { nx: usize, ny: usize, nz: usize },
    #[error("mesh with {nx}x{ny}x{nz} cells overflows the index type")]
    TooLarge { nx: usize, ny: usize, nz: usize },
    #[error("permeability of cell {index} is not positive ({value})")]
    Permeability { index: usize, value: f64 },
    #[error("viscosity must be positive, got {0}")]
    Viscosity(f64),
    #[error("transmissibility on {axis:?} face {index} is not positive ({value})")]
    Transmissibility {
        axis: Axis,
        index: usize,
        value: f64,
    },
    #[error("mobility of cell {index} is not positive ({value})")]
    Mobility { index: usize, value: f64 },
    #[error("expected {expected} values for {what}, got {got}")]
    Length {
        what: &'static str,
        expected: usize,
        got: usize,
    },
    #[error("cell ({x}, {y}, {z}) is outside the mesh")]
    OutOfRange { x: usize, y: usize, z: usize },
    #[error("cell ({x}, {y}, {z}) appears twice in the Dirichlet list")]
    DuplicateDirichlet { x: usize, y: usize, z: usize },
    #[error("cells ({}, {}, {}) and ({}, {}, {}) do not share a face", .0.x, .0.y, .0.z, .1.x, .1.y, .1.z)]
    NotAdjacent(CellIndex, CellIndex),
    #[error("demo problem needs nx >= 2 and ny >= 2, got {nx}x{ny}")]
    DemoTooSmall { nx: usize, ny: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct MeshDims {
    pub nx: usize,
    pub ny: usize,
    pub nz: usize,
}

impl MeshDims {
    pub fn new(nx: usize, ny: usize, nz: usize) -> Result<Self, MeshError> {
        if nx == 0 || ny == 0 || nz == 0 {
            return Err(MeshError::EmptyDims { nx, ny, nz });
        }
        nx.checked_mul(ny)
            .and_then(|p| p.checked_mul(nz))
            .ok_or(MeshError::TooLarge { nx, ny, nz })?;
        Ok(Self { nx, ny, nz })
    }

    pub fn cell_count(&self) -> usize {
        self.nx * self.ny * self.nz
    }

    pub fn contains(&self, c: CellIndex) -> bool {
        c.x < self.nx && c.y < self.ny && c.z < self.nz
    }

    pub fn index(&self, c: CellIndex) -> usize {
        debug_assert!(self.contains(c));
        c.x + self.nx * (c.y + self.ny * c.z)
    }

    pub fn coords(&self, index: usize) -> CellIndex {
        let x = index % self.nx;
        let y = (index / self.nx) % self.ny;
        let z = index / (self.nx * self.ny);
        CellIndex { x, y, z }
    }

    /// Number of interior faces normal to `axis`.
    pub fn face_count(&self, axis: Axis) -> usize {
        match axis {
            Axis::X => (self.nx - 1) * self.ny * self.nz,
            Axis::Y => self.nx * (self.ny - 1) * self.nz,
            Axis::Z => self.nx * self.ny * (self.nz - 1),
        }
    }

    /// Face index of the face between `lower` and its `+axis` neighbor.
    fn face_index(&self, axis: Axis, lower: CellIndex) -> usize {
        match axis {
            Axis::X => lower.x + (self.nx - 1) * (lower.y + self.ny * lower.z),
            Axis::Y => lower.x + self.nx * (lower.y + (self.ny - 1) * lower.z),
            Axis::Z => lower.x + self.nx * (lower.y + self.ny * lower.z),
        }
    }

    /// Neighbor of `c` across `dir`, if it lies inside the grid.
    pub fn step(&self, c: CellIndex, dir: Direction) -> Option<CellIndex> {
        let CellIndex { x, y, z } = c;
        let n = match dir {
            Direction::MinusX => CellIndex::new(x.checked_sub(1)?, y, z),
            Direction::PlusX => CellIndex::new(x + 1, y, z),
            Direction::MinusY => CellIndex::new(x, y.checked_sub(1)?, z),
            Direction::PlusY => CellIndex::new(x, y + 1, z),
            Direction::MinusZ => CellIndex::new(x, y, z.checked_sub(1)?),
            Direction::PlusZ => CellIndex::new(x, y, z + 1),
        };
        self.contains(n).then_some(n)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct CellIndex {
    pub x: usize,
    pub y: usize,
    pub z: usize,
}

impl CellIndex {
    pub const fn new(x: usize, y: usize, z: usize) -> Self {
        Self { x, y, z }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Axis {
    X,
    Y,
    Z,
}

/// The six face directions of a cell, in the fixed accumulation order used by
/// every Jacobian application in this crate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Direction {
    MinusX,
    PlusX,
    MinusY,
    PlusY,
    MinusZ,
    PlusZ,
}

impl Direction {
    pub const ALL: [Direction; 6] = [
        Direction::MinusX,
        Direction::PlusX,
        Direction::MinusY,
        Direction::PlusY,
        Direction::MinusZ,
        Direction::PlusZ,
    ];

    pub fn axis(self) -> Axis {
        match self {
            Direction::MinusX | Direction::PlusX => Axis::X,
            Direction::MinusY | Direction::PlusY => Axis::Y,
            Direction::MinusZ | Direction::PlusZ => Axis::Z,
        }
    }

    pub fn is_positive(self) -> bool {
        matches!(self, Direction::PlusX | Direction::PlusY | Direction::PlusZ)
    }
}

/// One neighbor of a cell as seen by the flux loop.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FaceNeighbor {
    pub dir: Direction,
    pub cell: CellIndex,
    pub index: usize,
    pub trans: f64,
}

/// TPFA mesh. Immutable after construction.
#[derive(Debug, Clone, PartialEq)]
pub struct Mesh {
    dims: MeshDims,
    trans: [Vec<f64>; 3],
    mobility: Vec<f64>,
    dirichlet: BTreeMap<usize, f64>,
    is_dirichlet: Vec<bool>,
}

impl Mesh {
    /// Builds a mesh from cell permeabilities and a constant viscosity.
    ///
    /// Face transmissibility is the harmonic mean `2 k_K k_L / (k_K + k_L)`
    /// (unit cubes: face area and center distance are 1), and every cell gets
    /// mobility `1 / viscosity`.
    pub fn build(
        dims: MeshDims,
        permeability: &[f64],
        viscosity: f64,
        dirichlet: &[(CellIndex, f64)],
    ) -> Result<Self, MeshError> {
        let n = dims.cell_count();
        if permeability.len() != n {
            return Err(MeshError::Length {
                what: "permeability",
                expected: n,
                got: permeability.len(),
            });
        }
        if let Some((index, &value)) = permeability.iter().enumerate().find(|(_, k)| !(**k > 0.0)) {
            return Err(MeshError::Permeability { index, value });
        }
        if !(viscosity > 0.0) || !viscosity.is_finite() {
            return Err(MeshError::Viscosity(viscosity));
        }
        let harmonic = |a: f64, b: f64| 2.0 * a * b / (a + b);
        let mut trans = [Vec::new(), Vec::new(), Vec::new()];
        for (slot, axis) in trans.iter_mut().zip([Axis::X, Axis::Y, Axis::Z]) {
            *slot = vec![0.0; dims.face_count(axis)];
        }
        for index in 0..n {
            let c = dims.coords(index);
            for dir in [Direction::PlusX, Direction::PlusY, Direction::PlusZ] {
                if let Some(l) = dims.step(c, dir) {
                    let axis = dir.axis();
                    trans[axis as usize][dims.face_index(axis, c)] =
                        harmonic(permeability[index], permeability[dims.index(l)]);
                }
            }
        }
        let mobility = vec![1.0 / viscosity; n];
        Self::from_parts(dims, trans, mobility, dirichlet)
    }

    /// Builds a mesh from explicit face transmissibilities (`[x, y, z]` face
    /// arrays, each indexed by the face's lower cell) and cell mobilities.
    pub fn from_parts(
        dims: MeshDims,
        trans: [Vec<f64>; 3],
        mobility: Vec<f64>,
        dirichlet: &[(CellIndex, f64)],
    ) -> Result<Self, MeshError> {
        let n = dims.cell_count();
        for (values, axis) in trans.iter().zip([Axis::X, Axis::Y, Axis::Z]) {
            let expected = dims.face_count(axis);
            if values.len() != expected {
                return Err(MeshError::Length {
                    what: "transmissibility",
                    expected,
                    got: values.len(),
                });
            }
            if let Some((index, &value)) = values
                .iter()
                .enumerate()
                .find(|(_, t)| !(**t > 0.0 && t.is_finite()))
            {
                return Err(MeshError::Transmissibility { axis, index, value });
            }
        }
        if mobility.len() != n {
            return Err(MeshError::Length {
                what: "mobility",
                expected: n,
                got: mobility.len(),
            });
        }
        if let Some((index, &value)) = mobility
            .iter()
            .enumerate()
            .find(|(_, m)| !(**m > 0.0 && m.is_finite()))
        {
            return Err(MeshError::Mobility { index, value });
        }
        let mut map = BTreeMap::new();
        let mut is_dirichlet = vec![false; n];
        for &(c, value) in dirichlet {
            if !dims.contains(c) {
                return Err(MeshError::OutOfRange {
                    x: c.x,
                    y: c.y,
                    z: c.z,
                });
            }
            let k = dims.index(c);
            if map.insert(k, value).is_some() {
                return Err(MeshError::DuplicateDirichlet {
                    x: c.x,
                    y: c.y,
                    z: c.z,
                });
            }
            is_dirichlet[k] = true;
        }
        Ok(Self {
            dims,
            trans,
            mobility,
            dirichlet: map,
            is_dirichlet,
        })
    }

    /// Homogeneous demo problem: permeability and viscosity 1, a source cell
    /// at `(0, 0, 0)` held at pressure 1 and a producer cell at the opposite
    /// corner held at pressure 0.
    pub fn demo(dims: MeshDims) -> Result<Self, MeshError> {
        if dims.nx < 2 || dims.ny < 2 {
            return Err(MeshError::DemoTooSmall {
                nx: dims.nx,
                ny: dims.ny,
            });
        }
        let perm = vec![1.0; dims.cell_count()];
        let producer = CellIndex::new(dims.nx - 1, dims.ny - 1, dims.nz - 1);
        Self::build(
            dims,
            &perm,
            1.0,
            &[(CellIndex::new(0, 0, 0), 1.0), (producer, 0.0)],
        )
    }

    pub fn dims(&self) -> MeshDims {
        self.dims
    }

    pub fn cell_count(&self) -> usize {
        self.dims.cell_count()
    }

    pub fn mobility(&self, index: usize) -> f64 {
        self.mobility[index]
    }

    pub fn mobilities(&self) -> &[f64] {
        &self.mobility
    }

    /// Face arrays for the x, y and z faces.
    pub fn face_transmissibilities(&self) -> &[Vec<f64>; 3] {
        &self.trans
    }

    pub fn is_dirichlet(&self, index: usize) -> bool {
        self.is_dirichlet[index]
    }

    pub fn dirichlet_mask(&self) -> &[bool] {
        &self.is_dirichlet
    }

    /// Dirichlet cells (linear index) and their prescribed pressures, in
    /// ascending index order.
    pub fn dirichlet(&self) -> &BTreeMap<usize, f64> {
        &self.dirichlet
    }

    pub fn free_cell_count(&self) -> usize {
        self.cell_count() - self.dirichlet.len()
    }

    /// Transmissibility of the face across `dir` from `c`, if that face exists.
    pub fn face_trans(&self, c: CellIndex, dir: Direction) -> Option<f64> {
        let l = self.dims.step(c, dir)?;
        let lower = if dir.is_positive() { c } else { l };
        let axis = dir.axis();
        Some(self.trans[axis as usize][self.dims.face_index(axis, lower)])
    }

    /// Transmissibility between two face-adjacent cells.
    pub fn transmissibility(&self, k: CellIndex, l: CellIndex) -> Result<f64, MeshError> {
        let dir = self.direction_between(k, l)?;
        Ok(self
            .face_trans(k, dir)
            .expect("adjacent cells share a face"))
    }

    /// Arithmetic mean of the two cell mobilities.
    pub fn interfacial_mobility(&self, k: CellIndex, l: CellIndex) -> Result<f64, MeshError> {
        self.direction_between(k, l)?;
        let (a, b) = (
            self.mobility[self.dims.index(k)],
            self.mobility[self.dims.index(l)],
        );
        Ok((a + b) * 0.5)
    }

    pub fn direction_between(&self, k: CellIndex, l: CellIndex) -> Result<Direction, MeshError> {
        if self.dims.contains(k) && self.dims.contains(l) {
            for dir in Direction::ALL {
                if self.dims.step(k, dir) == Some(l) {
                    return Ok(dir);
                }
            }
        }
        Err(MeshError::NotAdjacent(k, l))
    }

    /// Face-adjacent cells of `k`, in the fixed order -x, +x, -y, +y, -z, +z.
    pub fn neighbors(&self, k: CellIndex) -> Vec<CellIndex> {
        self.face_neighbors(k).map(|f| f.cell).collect()
    }

    /// Like [`neighbors`](Self::neighbors), with the face data attached.
    pub fn face_neighbors(&self, k: CellIndex) -> impl Iterator<Item = FaceNeighbor> + '_ {
        Direction::ALL.into_iter().filter_map(move |dir| {
            let cell = self.dims.step(k, dir)?;
            Some(FaceNeighbor {
                dir,
                cell,
                index: self.dims.index(cell),
                trans: self.face_trans(k, dir)?,
            })
        })
    }
}
