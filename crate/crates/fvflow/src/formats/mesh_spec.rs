use serde::{Deserialize, Serialize};

use super::FormatError;
use fvflow_core::{CellIndex, Mesh, MeshDims};

pub const MESH_FORMAT: u32 = 1;

/// Mesh description file (TOML):
///
/// ```toml
/// format = 1
/// dims = [4, 4, 2]
/// viscosity = 1.0
/// permeability = 1.0            # or one value per cell, x fastest
///
/// [[dirichlet]]
/// cell = [0, 0, 0]
/// pressure = 1.0
/// ```
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MeshSpec {
    pub format: u32,
    pub dims: [usize; 3],
    pub viscosity: f64,
    pub permeability: Permeability,
    #[serde(default)]
    pub dirichlet: Vec<DirichletCell>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Permeability {
    Uniform(f64),
    PerCell(Vec<f64>),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DirichletCell {
    pub cell: [usize; 3],
    pub pressure: f64,
}

impl MeshSpec {
    /// The spec equivalent of [`Mesh::demo`].
    pub fn demo(dims: MeshDims) -> Self {
        Self {
            format: MESH_FORMAT,
            dims: [dims.nx, dims.ny, dims.nz],
            viscosity: 1.0,
            permeability: Permeability::Uniform(1.0),
            dirichlet: vec![
                DirichletCell {
                    cell: [0, 0, 0],
                    pressure: 1.0,
                },
                DirichletCell {
                    cell: [dims.nx - 1, dims.ny - 1, dims.nz - 1],
                    pressure: 0.0,
                },
            ],
        }
    }

    pub fn parse(text: &str) -> Result<Self, FormatError> {
        let spec: MeshSpec = toml::from_str(text)?;
        if spec.format != MESH_FORMAT {
            return Err(FormatError::parse(
                1,
                format!("unsupported mesh format {}", spec.format),
            ));
        }
        Ok(spec)
    }

    pub fn to_toml(&self) -> Result<String, FormatError> {
        Ok(toml::to_string(self)?)
    }

    pub fn build(&self) -> Result<Mesh, FormatError> {
        let [nx, ny, nz] = self.dims;
        let dims = MeshDims::new(nx, ny, nz)?;
        let perm = match &self.permeability {
            Permeability::Uniform(k) => vec![*k; dims.cell_count()],
            Permeability::PerCell(v) => v.clone(),
        };
        let dirichlet: Vec<(CellIndex, f64)> = self
            .dirichlet
            .iter()
            .map(|d| (CellIndex::new(d.cell[0], d.cell[1], d.cell[2]), d.pressure))
            .collect();
        Ok(Mesh::build(dims, &perm, self.viscosity, &dirichlet)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip() {
        let mut spec = MeshSpec::demo(MeshDims::new(3, 2, 2).unwrap());
        spec.permeability = Permeability::PerCell((0..12).map(|k| 0.1 + k as f64 / 3.0).collect());
        let text = spec.to_toml().unwrap();
        assert_eq!(MeshSpec::parse(&text).unwrap(), spec);
        assert_eq!(spec.build().unwrap(), spec.build().unwrap());
    }

    #[test]
    fn demo_spec_matches_demo_mesh() {
        let d = MeshDims::new(4, 3, 2).unwrap();
        assert_eq!(MeshSpec::demo(d).build().unwrap(), Mesh::demo(d).unwrap());
    }

    #[test]
    fn rejects_bad_files() {
        assert!(
            MeshSpec::parse("format = 1\ndims = [1, 1]\nviscosity = 1.0\npermeability = 1.0")
                .is_err()
        );
        assert!(MeshSpec::parse(
            "format = 2\ndims = [1, 1, 1]\nviscosity = 1.0\npermeability = 1.0"
        )
        .is_err());
        let bad =
            MeshSpec::parse("format = 1\ndims = [2, 1, 1]\nviscosity = 1.0\npermeability = [1.0]")
                .unwrap();
        assert!(matches!(bad.build(), Err(FormatError::Mesh(_))));
    }
}
