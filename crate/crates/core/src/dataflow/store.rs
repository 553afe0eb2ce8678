use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use super::DataflowError;
use crate::fabric::{FabricDims, Link, PeCoord};
use crate::mesh::{CellIndex, Direction, Mesh};

/// Coefficients toward one cardinal neighbor column.
#[derive(Debug, Clone, PartialEq)]
pub struct SideColumn {
    /// Face transmissibility per z slot.
    pub trans: Vec<f32>,
    /// The neighbor's cell mobilities, copied at map time so the interfacial
    /// mean can be formed locally.
    pub mobility: Vec<f32>,
}

/// Everything one PE keeps for its z-column of cells.
#[derive(Debug, Clone, PartialEq)]
pub struct PeColumnStore {
    pub nz: usize,
    /// CG iterate; holds the Dirichlet lift after setup.
    pub y: Vec<f32>,
    /// Residual; holds the right-hand side until setup.
    pub r: Vec<f32>,
    /// Search direction.
    pub x: Vec<f32>,
    pub jx: Vec<f32>,
    /// West, east, north, south; `None` on fabric edges.
    pub sides: [Option<SideColumn>; 4],
    /// Face between slots `z` and `z + 1` at index `z`; the last entry is unused.
    pub trans_z: Vec<f32>,
    pub mobility: Vec<f32>,
    pub dirichlet: Vec<bool>,
}

/// Cardinal sides in the order the Jacobian visits them.
pub const SIDES: [Link; 4] = [Link::West, Link::East, Link::North, Link::South];
const SIDE_DIRS: [Direction; 4] = [
    Direction::MinusX,
    Direction::PlusX,
    Direction::MinusY,
    Direction::PlusY,
];

/// Bytes reserved for per-PE scalars (dot partials, rr, alpha, beta,
/// counters and state).
pub const SCALAR_BYTES: usize = 64;

impl PeColumnStore {
    /// Named buffers and their sizes, as registered with the PE ledger.
    /// Receive buffers live in the exchange state but are listed here.
    pub fn buffer_list(
        &self,
        pe: PeCoord,
        dims: FabricDims,
    ) -> Vec<(alloc::string::String, usize)> {
        let col = 4 * self.nz;
        let mut out = vec![
            ("y".into(), col),
            ("r".into(), col),
            ("x".into(), col),
            ("jx".into(), col),
        ];
        for (side, s) in SIDES.iter().zip(&self.sides) {
            if s.is_some() {
                let l = side.letter();
                out.push((format!("recv_{l}"), col));
                out.push((format!("trans_{l}"), col));
                out.push((format!("mobility_{l}"), col));
            }
        }
        debug_assert_eq!(
            self.sides.iter().filter(|s| s.is_some()).count(),
            SIDES
                .iter()
                .filter(|&&l| dims.neighbor(pe, l).is_some())
                .count()
        );
        out.push(("trans_Z".into(), col));
        out.push(("mobility".into(), col));
        out.push(("dirichlet_mask".into(), self.nz));
        out.push(("scalars".into(), SCALAR_BYTES));
        out
    }
}

/// Bytes an interior PE needs for a column of `nz` cells.
pub fn interior_bytes(nz: usize) -> usize {
    // y, r, x, jx; 4 x (receive, face, neighbor mobility); z faces; own
    // mobility: 18 f32 columns, plus the mask and the scalars.
    18 * 4 * nz + nz + SCALAR_BYTES
}

/// Splits the mesh into per-PE z-columns, cell `(x, y, z)` to slot `z` of
/// PE `(x, y)`. Stores come back in row-major PE order.
pub fn map_mesh(mesh: &Mesh, dims: FabricDims) -> Result<Vec<PeColumnStore>, DataflowError> {
    let md = mesh.dims();
    if (md.nx, md.ny) != (dims.width, dims.height) {
        return Err(DataflowError::DimsMismatch {
            mesh: (md.nx, md.ny),
            fabric: (dims.width, dims.height),
        });
    }
    let nz = md.nz;
    let stores = (0..dims.pe_count())
        .map(|i| {
            let pe = dims.coord(i);
            let cell = |z| CellIndex::new(pe.x, pe.y, z);
            let mob = |c: CellIndex| mesh.mobility(md.index(c)) as f32;
            let sides = SIDE_DIRS.map(|dir| {
                let n = md.step(cell(0), dir)?;
                Some(SideColumn {
                    trans: (0..nz)
                        .map(|z| mesh.face_trans(cell(z), dir).expect("neighbor exists") as f32)
                        .collect(),
                    mobility: (0..nz).map(|z| mob(CellIndex::new(n.x, n.y, z))).collect(),
                })
            });
            let trans_z = (0..nz)
                .map(|z| {
                    mesh.face_trans(cell(z), Direction::PlusZ)
                        .map_or(0.0, |t| t as f32)
                })
                .collect();
            PeColumnStore {
                nz,
                y: vec![0.0; nz],
                r: vec![0.0; nz],
                x: vec![0.0; nz],
                jx: vec![0.0; nz],
                sides,
                trans_z,
                mobility: (0..nz).map(|z| mob(cell(z))).collect(),
                dirichlet: (0..nz)
                    .map(|z| mesh.is_dirichlet(md.index(cell(z))))
                    .collect(),
            }
        })
        .collect();
    Ok(stores)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::MeshDims;

    fn mesh(nx: usize, ny: usize, nz: usize) -> Mesh {
        let d = MeshDims::new(nx, ny, nz).unwrap();
        let perm: Vec<f64> = (0..d.cell_count())
            .map(|k| 1.0 + (k % 7) as f64 * 0.37)
            .collect();
        Mesh::build(d, &perm, 2.0, &[]).unwrap()
    }

    #[test]
    fn columns_land_on_their_pe() {
        let m = mesh(2, 2, 3);
        let stores = map_mesh(&m, FabricDims::new(2, 2).unwrap()).unwrap();
        assert_eq!(stores.len(), 4);
        assert!(stores
            .iter()
            .all(|s| s.y.len() == 3 && s.dirichlet.len() == 3));
    }

    #[test]
    fn dims_mismatch() {
        let m = mesh(3, 2, 1);
        assert!(matches!(
            map_mesh(&m, FabricDims::new(2, 2).unwrap()),
            Err(DataflowError::DimsMismatch { .. })
        ));
    }

    #[test]
    fn duplicated_faces_are_identical() {
        let m = mesh(3, 2, 4);
        let d = FabricDims::new(3, 2).unwrap();
        let stores = map_mesh(&m, d).unwrap();
        let at = |x, y| &stores[d.index(PeCoord::new(x, y))];
        let east = &at(0, 1).sides[1].as_ref().unwrap().trans;
        let west = &at(1, 1).sides[0].as_ref().unwrap().trans;
        assert!(east
            .iter()
            .zip(west)
            .all(|(a, b)| a.to_bits() == b.to_bits()));
        let south = &at(2, 0).sides[3].as_ref().unwrap().trans;
        let north = &at(2, 1).sides[2].as_ref().unwrap().trans;
        assert_eq!(south, north);
        assert!(at(0, 0).sides[0].is_none() && at(0, 0).sides[2].is_none());
    }

    #[test]
    fn interior_footprint() {
        assert_eq!(interior_bytes(922), 73 * 922 + 64);
        let m = mesh(3, 3, 5);
        let d = FabricDims::new(3, 3).unwrap();
        let stores = map_mesh(&m, d).unwrap();
        let centre = PeCoord::new(1, 1);
        let listed: usize = stores[d.index(centre)]
            .buffer_list(centre, d)
            .iter()
            .map(|b| b.1)
            .sum();
        assert_eq!(listed, interior_bytes(5));
    }
}
