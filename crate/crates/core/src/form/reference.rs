use serde::{Deserialize, Serialize};

use super::{FormError, FormSignature, GeometryInputs, OpCount, ProblemInstance, QuadPointInputs, Stage};

/// Operation tallies of an instrumented reference run.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ActionCounts {
    pub matvec_muls: u64,
    pub matvec_adds: u64,
    pub pointwise: OpCount,
}

/// `Σ 2·N^deriv·Q·n` over trial spaces plus `2·N^deriv_w·Q·n_W`; vector
/// spaces count their node count `n_V`.
pub fn reference_flop_count(sig: &FormSignature) -> Result<u64, FormError> {
    sig.validate()?;
    let q = sig.n_quad as u64;
    let trial: u64 = sig.trial_spaces().map(|s| 2 * (s.n_deriv * s.n) as u64 * q).sum();
    Ok(trial + 2 * (sig.n_deriv_test * sig.n_test) as u64 * q)
}

/// Gathered cell coordinates, row-major `n_coord × d`.
pub fn cell_coords(p: &ProblemInstance, cell: usize) -> Vec<f64> {
    let d = p.signature.dim;
    p.mesh
        .coord_map
        .cell(cell)
        .iter()
        .flat_map(|&g| p.mesh.coordinates[g * d..(g + 1) * d].iter().copied())
        .collect()
}

/// Affine geometry from the first `d+1` coordinates:
/// `J[r][c] = X[c+1][r] − X[0][r]`.
pub fn affine_geometry(d: usize, coords: &[f64]) -> GeometryInputs {
    let mut jac = [[0.0; 3]; 3];
    for (r, row) in jac.iter_mut().enumerate().take(d) {
        for (c, v) in row.iter_mut().enumerate().take(d) {
            *v = coords[(c + 1) * d + r] - coords[r];
        }
    }
    GeometryInputs::from_jacobian(d, jac)
}

/// Per-cell geometry for affine signatures; `None` when geometry varies per
/// quadrature point.
pub fn cell_geometry(p: &ProblemInstance, cell: usize) -> Option<GeometryInputs> {
    p.signature
        .affine
        .then(|| affine_geometry(p.signature.dim, &cell_coords(p, cell)))
}

/// Geometry at one quadrature point of a non-affine signature, from the
/// evaluated derivatives of the coordinate space.
pub fn point_geometry(sig: &FormSignature, vector_vals: &[Vec<f64>]) -> GeometryInputs {
    let g = sig.geometry_space().expect("non-affine signature has a coordinate space");
    let d = sig.dim;
    let mut jac = [[0.0; 3]; 3];
    for (r, row) in jac.iter_mut().enumerate().take(d) {
        for (c, v) in row.iter_mut().enumerate().take(d) {
            *v = vector_vals[g][r * d + c];
        }
    }
    GeometryInputs::from_jacobian(d, jac)
}

fn finite_or(cell: usize, stage: Stage, vals: &[f64]) -> Result<(), FormError> {
    if vals.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(FormError::NonFinite { cell, stage })
    }
}

/// Local action of one cell (gather through quadrature), length `n_W`.
pub fn local_action(p: &ProblemInstance, cell: usize, counts: &mut ActionCounts) -> Result<Vec<f64>, FormError> {
    let sig = &p.signature;
    let d = sig.dim;
    let tab = &p.tabulations;

    let l_u: Vec<Vec<f64>> = p
        .mesh
        .scalar_maps
        .iter()
        .zip(&p.scalar_dofs)
        .map(|(m, x)| m.cell(cell).iter().map(|&g| x[g]).collect())
        .collect();
    let l_v: Vec<Vec<f64>> = p
        .mesh
        .vector_maps
        .iter()
        .zip(&p.vector_dofs)
        .map(|(m, x)| m.cell(cell).iter().flat_map(|&g| x[g * d..(g + 1) * d].iter().copied()).collect())
        .collect();
    let coords = if sig.affine { cell_coords(p, cell) } else { Vec::new() };
    let geom_cell = sig.affine.then(|| affine_geometry(d, &coords));
    if let Some(g) = &geom_cell {
        if !g.is_finite() {
            return Err(FormError::NonFinite { cell, stage: Stage::Jacobian });
        }
    }

    let mut du: Vec<Vec<f64>> = sig.scalar_spaces.iter().map(|s| vec![0.0; s.n_deriv]).collect();
    let mut dv: Vec<Vec<f64>> = sig.vector_spaces.iter().map(|s| vec![0.0; s.n_deriv]).collect();
    let mut e = vec![0.0; sig.n_deriv_test];
    let mut out = vec![0.0; sig.n_test];
    for iq in 0..sig.n_quad {
        for (i, s) in sig.scalar_spaces.iter().enumerate() {
            for k in 0..s.n_deriv {
                let phi = &tab.scalar[i][k];
                let mut acc = 0.0;
                for j in 0..s.n {
                    acc += phi.get(iq, j) * l_u[i][j];
                }
                du[i][k] = acc;
            }
            counts.matvec_muls += (s.n_deriv * s.n) as u64;
            counts.matvec_adds += (s.n_deriv * s.n) as u64;
            finite_or(cell, Stage::Evaluation, &du[i])?;
        }
        for (i, v) in sig.vector_spaces.iter().enumerate() {
            for k in 0..v.n_deriv {
                let phi = &tab.vector[i][k];
                let c = v.components[k];
                let mut acc = 0.0;
                for j in 0..v.n {
                    acc += phi.get(iq, j) * l_v[i][j * d + c];
                }
                dv[i][k] = acc;
            }
            counts.matvec_muls += (v.n_deriv * v.n) as u64;
            counts.matvec_adds += (v.n_deriv * v.n) as u64;
            finite_or(cell, Stage::Evaluation, &dv[i])?;
        }
        let geom = match &geom_cell {
            Some(g) => *g,
            None => {
                let g = point_geometry(sig, &dv);
                if !g.is_finite() {
                    return Err(FormError::NonFinite { cell, stage: Stage::Jacobian });
                }
                g
            }
        };
        let x = QuadPointInputs {
            scalar: &du,
            vector: &dv,
            geometry: &geom,
            weight: tab.weights[iq],
            coords: &coords,
            dim: d,
        };
        p.map.apply(&x, &mut e, &mut counts.pointwise);
        finite_or(cell, Stage::Pointwise, &e)?;
        for (k, psi) in tab.test.iter().enumerate() {
            for (j, o) in out.iter_mut().enumerate() {
                *o += psi.get(j, iq) * e[k];
            }
        }
        counts.matvec_muls += (sig.n_deriv_test * sig.n_test) as u64;
        counts.matvec_adds += (sig.n_deriv_test * sig.n_test) as u64;
        finite_or(cell, Stage::Quadrature, &out)?;
    }
    Ok(out)
}

/// Sequential action: cells in ascending order, plain accumulation.
pub fn reference_action(p: &ProblemInstance) -> Result<Vec<f64>, FormError> {
    reference_action_instrumented(p).map(|(y, _)| y)
}

pub fn reference_action_instrumented(p: &ProblemInstance) -> Result<(Vec<f64>, ActionCounts), FormError> {
    let mut y = vec![0.0; p.n_out];
    let mut counts = ActionCounts::default();
    for cell in 0..p.n_cells() {
        let local = local_action(p, cell, &mut counts)?;
        for (j, &g) in p.mesh.test_map.cell(cell).iter().enumerate() {
            y[g] += local[j];
            if !y[g].is_finite() {
                return Err(FormError::NonFinite { cell, stage: Stage::Scatter });
            }
        }
    }
    Ok((y, counts))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::form::{preset_map, preset_signature, synthesize_problem, synthesize_with_map, Operator, ScalarSpace};

    fn rel_close(a: &[f64], b: &[f64], tol: f64) -> bool {
        a.len() == b.len() && a.iter().zip(b).all(|(x, y)| (x - y).abs() <= tol * x.abs().max(y.abs()).max(1e-30))
    }

    #[test]
    fn flop_count_examples() {
        let l = preset_signature(Operator::Laplace, 2, 2, 6).unwrap();
        assert_eq!(reference_flop_count(&l).unwrap(), 288);
        let tiny = FormSignature {
            dim: 1,
            scalar_spaces: vec![ScalarSpace { n: 1, n_deriv: 1 }],
            vector_spaces: vec![],
            n_test: 1,
            n_deriv_test: 1,
            n_quad: 1,
            n_coord: 2,
            affine: true,
            word_bytes: 8,
        };
        assert_eq!(reference_flop_count(&tiny).unwrap(), 4);
        let mut empty = tiny.clone();
        empty.scalar_spaces.clear();
        assert!(reference_flop_count(&empty).is_err());
    }

    #[test]
    fn instrumented_counts_match_ops_usable() {
        for op in [Operator::Laplace, Operator::Helmholtz, Operator::Elasticity] {
            let sig = preset_signature(op, 2, 2, 5).unwrap();
            let p = synthesize_with_map(&sig, preset_map(op, &sig).unwrap(), 3, 1).unwrap();
            let (_, c) = reference_action_instrumented(&p).unwrap();
            let usable = reference_flop_count(&sig).unwrap() * 3;
            assert_eq!(c.matvec_muls * 2, usable);
            assert_eq!(c.matvec_adds * 2, usable);
            assert!(c.pointwise.total() > 0);
        }
    }

    #[test]
    fn zero_inputs_give_zero_output() {
        let sig = preset_signature(Operator::Helmholtz, 3, 1, 4).unwrap();
        let p = synthesize_problem(&sig, 5, 2).unwrap().scaled_inputs(0.0);
        assert!(reference_action(&p).unwrap().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn mass_matches_dense_triple_product() {
        let sig = preset_signature(Operator::Mass, 2, 2, 6).unwrap();
        let mut p = synthesize_with_map(&sig, preset_map(Operator::Mass, &sig).unwrap(), 1, 3).unwrap();
        // Ψ = transpose of Φ; the weight enters through the map
        let phi = p.tabulations.scalar[0][0].clone();
        p.tabulations.test[0] = crate::form::Matrix::from_fn(6, 6, |i, q| phi.get(q, i));
        let y = reference_action(&p).unwrap();
        let l: Vec<f64> = p.mesh.scalar_maps[0].cell(0).iter().map(|&g| p.scalar_dofs[0][g]).collect();
        let det = cell_geometry(&p, 0).unwrap().det;
        let w = &p.tabulations.weights;
        let mut oracle = vec![0.0; 6];
        for (i, o) in oracle.iter_mut().enumerate() {
            for q in 0..6 {
                let u_q: f64 = (0..6).map(|j| phi.get(q, j) * l[j]).sum();
                *o += phi.get(q, i) * w[q] * u_q * det;
            }
        }
        let g: Vec<f64> = p.mesh.test_map.cell(0).iter().map(|&g| y[g]).collect();
        assert!(rel_close(&g, &oracle, 1e-12));
    }

    #[test]
    fn shared_dof_is_sum_of_cells() {
        let sig = preset_signature(Operator::Laplace, 2, 2, 4).unwrap();
        let p = synthesize_problem(&sig, 2, 9).unwrap();
        let y = reference_action(&p).unwrap();
        let y0 = reference_action(&p.select_cells(&[0])).unwrap();
        let y1 = reference_action(&p.select_cells(&[1])).unwrap();
        let shared = p.mesh.test_map.get(1, 0);
        assert_eq!(shared, p.mesh.test_map.get(0, 4));
        assert!((y[shared] - (y0[shared] + y1[shared])).abs() <= 1e-14 * y[shared].abs().max(1.0));
    }

    #[test]
    fn non_finite_is_reported_with_cell() {
        let sig = preset_signature(Operator::Laplace, 2, 1, 3).unwrap();
        let mut p = synthesize_with_map(&sig, preset_map(Operator::Laplace, &sig).unwrap(), 4, 1).unwrap();
        // collapse cell 2: all its vertices coincide, det = 0, 1/det = inf
        let nodes: Vec<usize> = p.mesh.coord_map.cell(2).to_vec();
        let first = nodes[0];
        for &g in &nodes[1..] {
            for c in 0..2 {
                p.mesh.coordinates[g * 2 + c] = p.mesh.coordinates[first * 2 + c];
            }
        }
        match reference_action(&p) {
            Err(FormError::NonFinite { cell, stage }) => {
                assert_eq!(cell, 2);
                assert_eq!(stage, Stage::Jacobian);
            }
            other => panic!("expected non-finite error, got {other:?}"),
        }
    }

    #[test]
    fn curved_geometry_runs() {
        let sig = preset_signature(Operator::Mass, 2, 2, 6).unwrap().with_curved_geometry(2).unwrap();
        let p = synthesize_problem(&sig, 4, 5).unwrap();
        let y = reference_action(&p).unwrap();
        assert!(y.iter().any(|v| *v != 0.0));
        assert_eq!(reference_flop_count(&sig).unwrap(), 2 * 6 * 6 + 2 * 4 * 6 * 6 + 2 * 6 * 6);
    }
}
