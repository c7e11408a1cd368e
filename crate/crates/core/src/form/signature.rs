use serde::{Deserialize, Serialize};

use super::FormError;

/// A scalar trial space: `n` local DOFs, `n_deriv` derivative terms.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ScalarSpace {
    pub n: usize,
    pub n_deriv: usize,
}

/// A vector trial space. Each derivative term `k` acts on component
/// `components[k]` (zero-based, `< d`) of the gathered node values.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct VectorSpace {
    pub n: usize,
    pub n_deriv: usize,
    pub components: Vec<usize>,
    /// Marks the coordinate field of a non-affine mesh.
    #[serde(default)]
    pub geometry: bool,
}

/// Which trial space a derivative variable or tile belongs to.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SpaceRef {
    Scalar(usize),
    Vector(usize),
}

impl SpaceRef {
    pub fn label(self) -> String {
        match self {
            SpaceRef::Scalar(i) => format!("u{i}"),
            SpaceRef::Vector(i) => format!("v{i}"),
        }
    }
}

/// Uniform view of one trial space used by the tiling machinery.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TrialSpace<'a> {
    pub id: SpaceRef,
    pub n: usize,
    pub n_deriv: usize,
    /// Words gathered per local DOF: 1 for scalar spaces, `d` for vector spaces.
    pub gather_width: usize,
    /// Component read by each derivative term (always 0 for scalar spaces).
    pub components: Option<&'a [usize]>,
}

impl TrialSpace<'_> {
    pub fn component(&self, term: usize) -> usize {
        self.components.map_or(0, |c| c[term])
    }
}

/// Structural parameters of the generalized bilinear form whose action is
/// evaluated cell by cell.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct FormSignature {
    /// Spatial dimension `d`.
    pub dim: usize,
    pub scalar_spaces: Vec<ScalarSpace>,
    pub vector_spaces: Vec<VectorSpace>,
    /// Test-space local DOF count `n_W`.
    pub n_test: usize,
    /// Test-function derivative terms `N^deriv_w`.
    pub n_deriv_test: usize,
    /// Quadrature points per cell `Q`.
    pub n_quad: usize,
    /// Coordinate-element DOF count (`d + 1` for affine simplices).
    pub n_coord: usize,
    pub affine: bool,
    /// Floating-point word size in bytes; only byte-counting models use it.
    pub word_bytes: usize,
}

impl FormSignature {
    pub fn validate(&self) -> Result<(), FormError> {
        let bad = |msg: String| Err(FormError::InvalidSignature(msg));
        if !(1..=3).contains(&self.dim) {
            return bad(format!("dimension {} outside 1..=3", self.dim));
        }
        if self.scalar_spaces.is_empty() && self.vector_spaces.is_empty() {
            return bad("at least one trial space is required".into());
        }
        for (i, s) in self.scalar_spaces.iter().enumerate() {
            if s.n == 0 || s.n_deriv == 0 {
                return bad(format!("scalar space {i} has a zero count"));
            }
        }
        for (i, v) in self.vector_spaces.iter().enumerate() {
            if v.n == 0 || v.n_deriv == 0 {
                return bad(format!("vector space {i} has a zero count"));
            }
            if v.components.len() != v.n_deriv {
                return bad(format!(
                    "vector space {i} lists {} components for {} derivative terms",
                    v.components.len(),
                    v.n_deriv
                ));
            }
            if let Some(c) = v.components.iter().find(|&&c| c >= self.dim) {
                return bad(format!("vector space {i} component {c} not below d={}", self.dim));
            }
        }
        if self.n_test == 0 || self.n_deriv_test == 0 || self.n_quad == 0 || self.n_coord == 0 {
            return bad("test, quadrature and coordinate counts must be positive".into());
        }
        if self.word_bytes != 4 && self.word_bytes != 8 {
            return bad(format!("word size {} is neither 4 nor 8", self.word_bytes));
        }
        let geometry: Vec<usize> = self
            .vector_spaces
            .iter()
            .enumerate()
            .filter(|(_, v)| v.geometry)
            .map(|(i, _)| i)
            .collect();
        if self.affine {
            if !geometry.is_empty() {
                return bad("affine signatures carry no coordinate vector space".into());
            }
            if self.n_coord < self.dim + 1 {
                return bad(format!(
                    "affine geometry needs at least d+1={} coordinate DOFs",
                    self.dim + 1
                ));
            }
        } else {
            if geometry.len() != 1 {
                return bad("non-affine signatures need exactly one coordinate vector space".into());
            }
            let g = &self.vector_spaces[geometry[0]];
            let d = self.dim;
            let expected: Vec<usize> = (0..d * d).map(|t| t / d).collect();
            if g.n != self.n_coord || g.components != expected {
                return bad(format!(
                    "coordinate space must have n = n_coord and d·d terms ordered (component, direction)"
                ));
            }
        }
        Ok(())
    }

    /// Trial spaces in canonical order: scalar spaces, then vector spaces.
    pub fn trial_spaces(&self) -> impl Iterator<Item = TrialSpace<'_>> + '_ {
        let scalars = self.scalar_spaces.iter().enumerate().map(|(i, s)| TrialSpace {
            id: SpaceRef::Scalar(i),
            n: s.n,
            n_deriv: s.n_deriv,
            gather_width: 1,
            components: None,
        });
        let vectors = self.vector_spaces.iter().enumerate().map(move |(i, v)| TrialSpace {
            id: SpaceRef::Vector(i),
            n: v.n,
            n_deriv: v.n_deriv,
            gather_width: self.dim,
            components: Some(&v.components),
        });
        scalars.chain(vectors)
    }

    pub fn n_trial_spaces(&self) -> usize {
        self.scalar_spaces.len() + self.vector_spaces.len()
    }

    pub fn geometry_space(&self) -> Option<usize> {
        self.vector_spaces.iter().position(|v| v.geometry)
    }

    /// Returns a copy with curved (non-affine) geometry of the given degree:
    /// the coordinates become an extra vector trial space with `d·d` terms.
    pub fn with_curved_geometry(&self, degree: usize) -> Result<FormSignature, FormError> {
        let mut sig = self.clone();
        sig.vector_spaces.retain(|v| !v.geometry);
        let d = sig.dim;
        let n = super::simplex_space_dim(degree, d);
        sig.affine = false;
        sig.n_coord = n;
        sig.vector_spaces.push(VectorSpace {
            n,
            n_deriv: d * d,
            components: (0..d * d).map(|t| t / d).collect(),
            geometry: true,
        });
        sig.validate()?;
        Ok(sig)
    }
}
