use num_rational::Ratio;

use crate::form::{affine_geometry, point_geometry, OpCount, ProblemInstance, QuadPointInputs, Stage};
use crate::qoi::{cdiv, Schedule, SUBGROUP};

use super::mlt::{coords_of, dof, phi, RefLayout};
use super::{check_finite, AccessCounters, SimError, SimTrace};

/// Executes the single-cell-per-work-item schedule: 32-wide work-groups,
/// private temporaries, atomic scatter in ascending `(work-group, lane, j)`
/// order.
pub fn run_scpt(p: &ProblemInstance) -> Result<SimTrace, SimError> {
    p.validate()?;
    let sig = &p.signature;
    let d = sig.dim;
    let q_n = sig.n_quad;
    let n_cells = p.n_cells();
    let wg_size = SUBGROUP as usize;
    let n_wg = cdiv(n_cells, wg_size);
    let spaces: Vec<_> = sig.trial_spaces().map(|s| (s.n, s.n_deriv, s.gather_width, s.components)).collect();
    let ns = sig.scalar_spaces.len();
    let refs = RefLayout::new(p);

    let mut y = vec![0.0; p.n_out];
    let mut acc = AccessCounters::default();
    let mut flops = 0u64;
    let mut pointwise = OpCount::default();
    let mut du: Vec<Vec<f64>> = sig.scalar_spaces.iter().map(|s| vec![0.0; s.n_deriv]).collect();
    let mut dv: Vec<Vec<f64>> = sig.vector_spaces.iter().map(|s| vec![0.0; s.n_deriv]).collect();
    let mut e = vec![0.0; sig.n_deriv_test];
    let mut seen = vec![false; refs.total];

    for wg in 0..n_wg {
        for lane in 0..wg_size {
            let cell = wg * wg_size + lane;
            if cell >= n_cells {
                break;
            }
            seen.fill(false);
            let mut ref_read = |i: usize| {
                if !seen[i] {
                    seen[i] = true;
                    acc.reference += 1;
                }
            };
            let ell: Vec<Vec<f64>> = spaces
                .iter()
                .enumerate()
                .map(|(t, &(n, _, w, _))| (0..n * w).map(|x| dof(p, t, cell, x / w, x % w)).collect())
                .collect();
            acc.gather += ell.iter().map(|v| v.len() as u64).sum::<u64>();
            let coords = if sig.affine { coords_of(p, cell) } else { Vec::new() };
            acc.coord_gather += coords.len() as u64;
            let geom_cell = sig.affine.then(|| affine_geometry(d, &coords));
            if geom_cell.is_some_and(|g| !g.is_finite()) {
                return Err(SimError::NonFinite { cell, stage: Stage::Jacobian });
            }

            let mut out = vec![0.0; sig.n_test];
            for q in 0..q_n {
                for (t, &(n, nd, w, comps)) in spaces.iter().enumerate() {
                    let dst = if t < ns { &mut du[t] } else { &mut dv[t - ns] };
                    for (k, v) in dst.iter_mut().enumerate() {
                        let c = comps.map_or(0, |cs| cs[k]);
                        let tab = phi(p, t, k);
                        let mut a = 0.0;
                        for j in 0..n {
                            ref_read(refs.phi(p, t, k, q, j));
                            a += tab.get(q, j) * ell[t][j * w + c];
                        }
                        *v = a;
                    }
                    flops += 2 * (nd * n) as u64;
                }
                du.iter().chain(dv.iter()).try_for_each(|v| check_finite(cell, Stage::Evaluation, v))?;
                let geom = match geom_cell {
                    Some(g) => g,
                    None => {
                        let g = point_geometry(sig, &dv);
                        if !g.is_finite() {
                            return Err(SimError::NonFinite { cell, stage: Stage::Jacobian });
                        }
                        g
                    }
                };
                ref_read(refs.weight(q));
                let x = QuadPointInputs {
                    scalar: &du,
                    vector: &dv,
                    geometry: &geom,
                    weight: p.tabulations.weights[q],
                    coords: &coords,
                    dim: d,
                };
                p.map.apply(&x, &mut e, &mut pointwise);
                check_finite(cell, Stage::Pointwise, &e)?;
                for (k, psi) in p.tabulations.test.iter().enumerate() {
                    for (j, o) in out.iter_mut().enumerate() {
                        ref_read(refs.psi(p, k, j, q));
                        *o += psi.get(j, q) * e[k];
                    }
                }
                flops += 2 * (sig.n_deriv_test * sig.n_test) as u64;
                check_finite(cell, Stage::Quadrature, &out)?;
            }
            for (j, &g) in p.mesh.test_map.cell(cell).iter().enumerate() {
                y[g] += out[j];
                acc.scatter += 1;
                check_finite(cell, Stage::Scatter, &y[g..g + 1])?;
            }
        }
    }

    let lanes_total = SUBGROUP * n_wg as u64;
    let lanes_active = n_cells as u64;
    Ok(SimTrace {
        schedule: Schedule::Scpt,
        n_cells,
        n_workgroups: n_wg,
        output: y,
        barriers_per_workgroup: 0,
        barriers_by_site: Vec::new(),
        flops_matvec: flops,
        flops_masked_padding: 0,
        flops_inactive_cells: 0,
        flops_pointwise: pointwise.total(),
        local_words_highwater: 0,
        access: acc,
        lanes_active,
        lanes_total,
        lanes_per_workgroup: SUBGROUP,
        masked_lane_fraction: Ratio::new(lanes_total - lanes_active, lanes_total),
    })
}
