//! The generalized bilinear form action kernel, represented as data, and its
//! sequential reference execution.

mod instance;
mod io;
mod pointwise;
mod presets;
mod reference;
mod signature;

pub use instance::{
    synthesize_problem, synthesize_with_map, CellMap, MeshConnectivity, ProblemInstance,
    Tabulations,
};
pub use io::{read_instance, read_signature, write_instance, write_signature, FORMAT_VERSION};
pub use pointwise::{Expr, GeometryInputs, Input, OpCount, PointwiseMap, QuadPointInputs};
pub use presets::{preset_map, preset_signature, Operator};
pub use reference::{
    affine_geometry, cell_coords, cell_geometry, local_action, point_geometry, reference_action, reference_action_instrumented,
    reference_flop_count, ActionCounts,
};
pub use signature::{FormSignature, ScalarSpace, SpaceRef, TrialSpace, VectorSpace};

use std::fmt;

use serde::{Deserialize, Serialize};

/// Execution stage named in non-finite diagnostics.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stage {
    Gather,
    Jacobian,
    Evaluation,
    Pointwise,
    Quadrature,
    Scatter,
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Stage::Gather => "gather",
            Stage::Jacobian => "jacobian",
            Stage::Evaluation => "evaluation",
            Stage::Pointwise => "pointwise",
            Stage::Quadrature => "quadrature",
            Stage::Scatter => "scatter",
        };
        f.write_str(s)
    }
}

#[derive(Debug, thiserror::Error)]
pub enum FormError {
    #[error("invalid signature: {0}")]
    InvalidSignature(String),
    #[error("unsupported preset: {0}")]
    Unsupported(String),
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("invalid pointwise map: {0}")]
    Expr(String),
    #[error("non-finite value in cell {cell} during {stage}")]
    NonFinite { cell: usize, stage: Stage },
    #[error("unsupported format version {0}")]
    FormatVersion(u32),
    #[error("parse error: {0}")]
    Parse(#[from] serde_yaml::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Dimension of the degree-`degree` polynomial space on a `d`-simplex.
pub fn simplex_space_dim(degree: usize, d: usize) -> usize {
    // C(degree + d, d), small arguments only
    let mut acc = 1usize;
    for i in 1..=d {
        acc = acc * (degree + i) / i;
    }
    acc
}

/// Dense row-major matrix of doubles.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Matrix {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f64>,
}

impl Matrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Matrix { rows, cols, data: vec![0.0; rows * cols] }
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for i in 0..rows {
            for j in 0..cols {
                data.push(f(i, j));
            }
        }
        Matrix { rows, cols, data }
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.cols + j]
    }

    #[inline]
    pub fn index(&self, i: usize, j: usize) -> usize {
        i * self.cols + j
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    fn check(&self, rows: usize, cols: usize, what: &str) -> Result<(), FormError> {
        if self.rows != rows || self.cols != cols || self.data.len() != rows * cols {
            return Err(FormError::Shape(format!(
                "{what} is {}x{} ({} entries), expected {rows}x{cols}",
                self.rows,
                self.cols,
                self.data.len()
            )));
        }
        if self.data.iter().any(|v| !v.is_finite()) {
            return Err(FormError::Shape(format!("{what} has non-finite entries")));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn simplex_dims() {
        assert_eq!(simplex_space_dim(2, 2), 6);
        assert_eq!(simplex_space_dim(2, 1), 3);
        assert_eq!(simplex_space_dim(0, 3), 1);
        for d in 1..=3 {
            assert_eq!(simplex_space_dim(1, d), d + 1);
        }
        assert_eq!(simplex_space_dim(3, 3), 20);
        assert_eq!(simplex_space_dim(8, 2), 45);
    }

    #[test]
    fn simplex_dim_matches_binomial_recurrence() {
        // C(k+d, d) = C(k+d-1, d-1) + C(k+d-1, d)
        for d in 2..=3 {
            for k in 1..10 {
                assert_eq!(
                    simplex_space_dim(k, d),
                    simplex_space_dim(k, d - 1) + simplex_space_dim(k - 1, d)
                );
            }
        }
    }
}
