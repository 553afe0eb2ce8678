use std::fmt;

/// Reference-versus-fabric comparison written by `--mode both`.
#[derive(Debug, Clone, PartialEq)]
pub struct ValidationReport {
    pub dims: (usize, usize, usize),
    pub reference_iterations: usize,
    pub fabric_iterations: usize,
    pub reference_converged: bool,
    pub fabric_converged: bool,
    pub max_abs_diff: f64,
    pub bitwise_equal: bool,
}

impl ValidationReport {
    pub fn iteration_diff(&self) -> i64 {
        self.fabric_iterations as i64 - self.reference_iterations as i64
    }
}

/// `key: value` lines, one per field.
impl fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let (x, y, z) = self.dims;
        writeln!(f, "dims: {x}x{y}x{z}")?;
        writeln!(f, "reference_iterations: {}", self.reference_iterations)?;
        writeln!(f, "fabric_iterations: {}", self.fabric_iterations)?;
        writeln!(f, "iteration_diff: {}", self.iteration_diff())?;
        writeln!(f, "reference_converged: {}", self.reference_converged)?;
        writeln!(f, "fabric_converged: {}", self.fabric_converged)?;
        writeln!(f, "max_abs_diff: {:e}", self.max_abs_diff)?;
        writeln!(f, "bitwise_equal: {}", self.bitwise_equal)
    }
}
