use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{FormError, FormSignature, Matrix, PointwiseMap};

/// Reference tabulations. `scalar[i][k]` and `vector[i][k]` are `Q × n`,
/// `test[k]` is `n_W × Q`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Tabulations {
    pub scalar: Vec<Vec<Matrix>>,
    pub vector: Vec<Vec<Matrix>>,
    pub test: Vec<Matrix>,
    pub weights: Vec<f64>,
}

impl Tabulations {
    pub fn validate(&self, sig: &FormSignature) -> Result<(), FormError> {
        let q = sig.n_quad;
        if self.scalar.len() != sig.scalar_spaces.len() || self.vector.len() != sig.vector_spaces.len() {
            return Err(FormError::Shape("tabulation space count differs from signature".into()));
        }
        for (i, (tabs, s)) in self.scalar.iter().zip(&sig.scalar_spaces).enumerate() {
            if tabs.len() != s.n_deriv {
                return Err(FormError::Shape(format!("scalar space {i}: {} tabulations", tabs.len())));
            }
            for (k, m) in tabs.iter().enumerate() {
                m.check(q, s.n, &format!("phi_u{i}_{k}"))?;
            }
        }
        for (i, (tabs, v)) in self.vector.iter().zip(&sig.vector_spaces).enumerate() {
            if tabs.len() != v.n_deriv {
                return Err(FormError::Shape(format!("vector space {i}: {} tabulations", tabs.len())));
            }
            for (k, m) in tabs.iter().enumerate() {
                m.check(q, v.n, &format!("phi_v{i}_{k}"))?;
            }
        }
        if self.test.len() != sig.n_deriv_test {
            return Err(FormError::Shape(format!("{} test tabulations", self.test.len())));
        }
        for (k, m) in self.test.iter().enumerate() {
            m.check(sig.n_test, q, &format!("psi_{k}"))?;
        }
        if self.weights.len() != q || self.weights.iter().any(|w| !w.is_finite()) {
            return Err(FormError::Shape("weights must be Q finite values".into()));
        }
        Ok(())
    }
}

/// Indirection map `ι`: `n_cells × width` indices into a global array.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct CellMap {
    pub n_cells: usize,
    pub width: usize,
    pub n_global: usize,
    pub indices: Vec<usize>,
}

impl CellMap {
    /// Cell `k` owns globals `k·(n − s) .. k·(n − s) + n` with `s = ⌈n/4⌉`,
    /// so neighbours share `s` entries.
    pub fn chain(n_cells: usize, width: usize) -> CellMap {
        let share = width.div_ceil(4);
        let stride = width - share;
        let n_global = (n_cells - 1) * stride + width;
        let indices = (0..n_cells)
            .flat_map(|k| (0..width).map(move |j| k * stride + j))
            .collect();
        CellMap { n_cells, width, n_global, indices }
    }

    #[inline]
    pub fn get(&self, cell: usize, j: usize) -> usize {
        self.indices[cell * self.width + j]
    }

    pub fn cell(&self, cell: usize) -> &[usize] {
        &self.indices[cell * self.width..(cell + 1) * self.width]
    }

    pub fn is_injective(&self) -> bool {
        let mut seen = vec![false; self.n_global];
        for &i in &self.indices {
            if std::mem::replace(&mut seen[i], true) {
                return false;
            }
        }
        true
    }

    fn validate(&self, n_cells: usize, width: usize, what: &str) -> Result<(), FormError> {
        if self.n_cells != n_cells || self.width != width || self.indices.len() != n_cells * width {
            return Err(FormError::Shape(format!(
                "{what} map is {}x{}, expected {n_cells}x{width}",
                self.n_cells, self.width
            )));
        }
        if let Some(i) = self.indices.iter().find(|&&i| i >= self.n_global) {
            return Err(FormError::Shape(format!("{what} map index {i} out of {}", self.n_global)));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MeshConnectivity {
    pub n_cells: usize,
    pub scalar_maps: Vec<CellMap>,
    pub vector_maps: Vec<CellMap>,
    pub test_map: CellMap,
    pub coord_map: CellMap,
    /// Row-major `coord_map.n_global × d`.
    pub coordinates: Vec<f64>,
}

/// A fully specified action evaluation: form, data and mesh.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProblemInstance {
    pub signature: FormSignature,
    pub map: PointwiseMap,
    pub tabulations: Tabulations,
    pub mesh: MeshConnectivity,
    /// One global DOF vector per scalar trial space.
    pub scalar_dofs: Vec<Vec<f64>>,
    /// One row-major `n_global × d` array per vector trial space.
    pub vector_dofs: Vec<Vec<f64>>,
    pub n_out: usize,
}

impl ProblemInstance {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        signature: FormSignature,
        map: PointwiseMap,
        tabulations: Tabulations,
        mesh: MeshConnectivity,
        scalar_dofs: Vec<Vec<f64>>,
        vector_dofs: Vec<Vec<f64>>,
    ) -> Result<ProblemInstance, FormError> {
        let n_out = mesh.test_map.n_global;
        let p = ProblemInstance { signature, map, tabulations, mesh, scalar_dofs, vector_dofs, n_out };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<(), FormError> {
        let sig = &self.signature;
        sig.validate()?;
        self.map.validate(sig)?;
        self.tabulations.validate(sig)?;
        let m = &self.mesh;
        let n = m.n_cells;
        if n == 0 {
            return Err(FormError::Shape("mesh has no cells".into()));
        }
        let d = sig.dim;
        if m.scalar_maps.len() != sig.scalar_spaces.len() || m.vector_maps.len() != sig.vector_spaces.len() {
            return Err(FormError::Shape("map count differs from signature".into()));
        }
        if self.scalar_dofs.len() != sig.scalar_spaces.len() || self.vector_dofs.len() != sig.vector_spaces.len() {
            return Err(FormError::Shape("DOF vector count differs from signature".into()));
        }
        for (i, (map, s)) in m.scalar_maps.iter().zip(&sig.scalar_spaces).enumerate() {
            map.validate(n, s.n, &format!("u{i}"))?;
            if self.scalar_dofs[i].len() != map.n_global {
                return Err(FormError::Shape(format!("u{i} DOF vector length")));
            }
        }
        for (i, (map, v)) in m.vector_maps.iter().zip(&sig.vector_spaces).enumerate() {
            map.validate(n, v.n, &format!("v{i}"))?;
            if self.vector_dofs[i].len() != map.n_global * d {
                return Err(FormError::Shape(format!("v{i} DOF array length")));
            }
            if v.geometry && (map != &m.coord_map || self.vector_dofs[i] != m.coordinates) {
                return Err(FormError::Shape("coordinate space must reuse the coordinate map and array".into()));
            }
        }
        m.test_map.validate(n, sig.n_test, "w")?;
        m.coord_map.validate(n, sig.n_coord, "coords")?;
        if m.coordinates.len() != m.coord_map.n_global * d {
            return Err(FormError::Shape("coordinate array length".into()));
        }
        let finite = |v: &Vec<f64>| v.iter().all(|x| x.is_finite());
        if !self.scalar_dofs.iter().all(finite) || !self.vector_dofs.iter().all(finite) || !finite(&m.coordinates) {
            return Err(FormError::Shape("non-finite input data".into()));
        }
        if self.n_out != m.test_map.n_global {
            return Err(FormError::Shape("output length differs from test map".into()));
        }
        Ok(())
    }

    pub fn n_cells(&self) -> usize {
        self.mesh.n_cells
    }

    /// Copy with every trial DOF multiplied by `alpha` (coordinates untouched).
    pub fn scaled_inputs(&self, alpha: f64) -> ProblemInstance {
        let mut p = self.clone();
        for v in &mut p.scalar_dofs {
            v.iter_mut().for_each(|x| *x *= alpha);
        }
        for (i, v) in p.vector_dofs.iter_mut().enumerate() {
            if !self.signature.vector_spaces[i].geometry {
                v.iter_mut().for_each(|x| *x *= alpha);
            }
        }
        p
    }

    /// Copy restricted to the given cells, in the given order.
    pub fn select_cells(&self, cells: &[usize]) -> ProblemInstance {
        let pick = |m: &CellMap| CellMap {
            n_cells: cells.len(),
            width: m.width,
            n_global: m.n_global,
            indices: cells.iter().flat_map(|&c| m.cell(c).iter().copied()).collect(),
        };
        let mut p = self.clone();
        p.mesh.n_cells = cells.len();
        p.mesh.scalar_maps = self.mesh.scalar_maps.iter().map(pick).collect();
        p.mesh.vector_maps = self.mesh.vector_maps.iter().map(pick).collect();
        p.mesh.test_map = pick(&self.mesh.test_map);
        p.mesh.coord_map = pick(&self.mesh.coord_map);
        p
    }
}

pub fn synthesize_problem(sig: &FormSignature, n_cells: usize, seed: u64) -> Result<ProblemInstance, FormError> {
    synthesize_with_map(sig, PointwiseMap::generic(sig), n_cells, seed)
}

/// Pseudo-random tabulations and DOF data on a chain mesh in which adjacent
/// cells share a quarter of their DOFs. Equal seeds give identical instances.
pub fn synthesize_with_map(
    sig: &FormSignature,
    map: PointwiseMap,
    n_cells: usize,
    seed: u64,
) -> Result<ProblemInstance, FormError> {
    sig.validate()?;
    if n_cells == 0 {
        return Err(FormError::Shape("n_cells must be at least 1".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let q = sig.n_quad;
    let d = sig.dim;
    let unit = |rng: &mut ChaCha8Rng| rng.random_range(-1.0..1.0);

    let tab = |rng: &mut ChaCha8Rng, r: usize, c: usize| Matrix::from_fn(r, c, |_, _| unit(rng));
    let scalar = sig
        .scalar_spaces
        .iter()
        .map(|s| (0..s.n_deriv).map(|_| tab(&mut rng, q, s.n)).collect())
        .collect();
    let vector = sig
        .vector_spaces
        .iter()
        .map(|v| (0..v.n_deriv).map(|_| tab(&mut rng, q, v.n)).collect())
        .collect();
    let test = (0..sig.n_deriv_test).map(|_| tab(&mut rng, sig.n_test, q)).collect();
    let weights = (0..q).map(|_| rng.random_range(0.1..1.0)).collect();
    let tabulations = Tabulations { scalar, vector, test, weights };

    let coord_map = CellMap::chain(n_cells, sig.n_coord);
    // Node g sits near reference vertex g mod (d+1); consecutive nodes of a
    // cell hit distinct vertices, keeping |det J| close to 1.
    let coordinates: Vec<f64> = (0..coord_map.n_global)
        .flat_map(|g| (0..d).map(move |c| (g, c)))
        .map(|(g, c)| {
            let v = g % (d + 1);
            let base = if v == c + 1 { 1.0 } else { 0.0 };
            base + 0.1 * rng.random_range(-1.0..1.0)
        })
        .collect();

    let scalar_maps: Vec<CellMap> = sig.scalar_spaces.iter().map(|s| CellMap::chain(n_cells, s.n)).collect();
    let vector_maps: Vec<CellMap> = sig
        .vector_spaces
        .iter()
        .map(|v| if v.geometry { coord_map.clone() } else { CellMap::chain(n_cells, v.n) })
        .collect();
    let scalar_dofs = scalar_maps
        .iter()
        .map(|m| (0..m.n_global).map(|_| rng.random_range(-1.0..1.0)).collect())
        .collect();
    let vector_dofs = sig
        .vector_spaces
        .iter()
        .zip(&vector_maps)
        .map(|(v, m)| {
            if v.geometry {
                coordinates.clone()
            } else {
                (0..m.n_global * d).map(|_| rng.random_range(-1.0..1.0)).collect()
            }
        })
        .collect();
    let mesh = MeshConnectivity {
        n_cells,
        scalar_maps,
        vector_maps,
        test_map: CellMap::chain(n_cells, sig.n_test),
        coord_map,
        coordinates,
    };
    ProblemInstance::new(sig.clone(), map, tabulations, mesh, scalar_dofs, vector_dofs)
}
