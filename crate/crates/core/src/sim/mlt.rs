use num_rational::Ratio;

use crate::form::{affine_geometry, point_geometry, GeometryInputs, Matrix, OpCount, ProblemInstance, QuadPointInputs, Stage};
use crate::qoi::{cdiv, Schedule, SUBGROUP};

use super::plan::{BarrierSite, SchedulePlan};
use super::{check_finite, AccessCounters, Arena, Seen, SimError, SimTrace, SiteCount};

/// Private state of one work-item.
struct Lane {
    lid0: usize,
    lid1: usize,
    cell: Option<usize>,
    coords: Vec<f64>,
    geom: GeometryInputs,
    /// Gathered DOFs per trial space, `n·width` words; only the current
    /// column tile is meaningful.
    ell: Vec<Vec<f64>>,
    /// `acc[t][k][s]`: derivative `k` of space `t` at this lane's `s`-th row.
    acc: Vec<Vec<Vec<f64>>>,
    out: Vec<f64>,
}

pub(super) fn identity_geometry(d: usize) -> GeometryInputs {
    let mut j = [[0.0; 3]; 3];
    for (i, row) in j.iter_mut().enumerate().take(d) {
        row[i] = 1.0;
    }
    GeometryInputs::from_jacobian(d, j)
}

pub(super) fn phi<'a>(p: &'a ProblemInstance, t: usize, k: usize) -> &'a Matrix {
    let ns = p.signature.scalar_spaces.len();
    if t < ns {
        &p.tabulations.scalar[t][k]
    } else {
        &p.tabulations.vector[t - ns][k]
    }
}

/// Global value of local DOF `j`, component `c`, of trial space `t`.
pub(super) fn dof(p: &ProblemInstance, t: usize, cell: usize, j: usize, c: usize) -> f64 {
    let ns = p.signature.scalar_spaces.len();
    if t < ns {
        p.scalar_dofs[t][p.mesh.scalar_maps[t].get(cell, j)]
    } else {
        let v = t - ns;
        p.vector_dofs[v][p.mesh.vector_maps[v].get(cell, j) * p.signature.dim + c]
    }
}

pub(super) fn coords_of(p: &ProblemInstance, cell: usize) -> Vec<f64> {
    let d = p.signature.dim;
    p.mesh
        .coord_map
        .cell(cell)
        .iter()
        .flat_map(|&g| p.mesh.coordinates[g * d..(g + 1) * d].iter().copied())
        .collect()
}

/// Flat index layout of every reference array read from global memory.
pub(super) struct RefLayout {
    phi: Vec<Vec<usize>>,
    psi: Vec<usize>,
    weights: usize,
    pub total: usize,
}

impl RefLayout {
    pub fn new(p: &ProblemInstance) -> Self {
        let sig = &p.signature;
        let q = sig.n_quad;
        let mut next = 0;
        let mut bump = |len: usize| {
            let at = next;
            next += len;
            at
        };
        let phi = sig.trial_spaces().map(|s| (0..s.n_deriv).map(|_| bump(q * s.n)).collect()).collect();
        let psi = (0..sig.n_deriv_test).map(|_| bump(sig.n_test * q)).collect();
        let weights = bump(q);
        RefLayout { phi, psi, weights, total: next }
    }

    pub fn phi(&self, p: &ProblemInstance, t: usize, k: usize, row: usize, col: usize) -> usize {
        self.phi[t][k] + row * phi(p, t, k).cols + col
    }

    pub fn psi(&self, p: &ProblemInstance, k: usize, row: usize, col: usize) -> usize {
        self.psi[k] + row * p.signature.n_quad + col
    }

    pub fn weight(&self, q: usize) -> usize {
        self.weights + q
    }
}

#[derive(Default)]
struct Flops {
    usable: u64,
    padding: u64,
    inactive: u64,
}

impl Flops {
    fn add(&mut self, live: bool, masked: bool, n: u64) {
        match (live, masked) {
            (false, _) => self.inactive += n,
            (true, false) => self.usable += n,
            (true, true) => self.padding += n,
        }
    }
}

/// Executes the multi-level tiled schedule described by `plan`.
pub fn run_mlt(p: &ProblemInstance, plan: &SchedulePlan) -> Result<SimTrace, SimError> {
    p.validate()?;
    if plan.signature != p.signature {
        return Err(SimError::PlanMismatch);
    }
    let sig = &p.signature;
    let d = sig.dim;
    let (n_c, n_wi) = (plan.n_c(), plan.n_wi());
    let n_lanes = n_c * n_wi;
    let n_cells = p.n_cells();
    let n_wg = cdiv(n_cells, n_c);
    let n_spaces = plan.spaces.len();
    let n_w = sig.n_deriv_test;
    let width: Vec<usize> = plan.spaces.iter().map(|s| s.n * s.gather_width).collect();
    let components: Vec<Vec<usize>> = sig
        .trial_spaces()
        .map(|s| (0..s.n_deriv).map(|k| s.component(k)).collect())
        .collect();
    let eval_slots = cdiv(plan.params.t_eval_row, n_wi);
    let quad_slots = cdiv(plan.params.t_quad_row, n_wi);
    let ns = sig.scalar_spaces.len();

    let refs = RefLayout::new(p);
    let gather_base: Vec<usize> = width
        .iter()
        .scan(0, |acc, w| {
            let at = *acc;
            *acc += w;
            Some(at)
        })
        .collect();
    let gather_words: usize = width.iter().sum();

    let mut arena = Arena::new(plan.l_words);
    let mut ref_seen = Seen::new(refs.total);
    let mut gather_seen = Seen::new(n_c * gather_words);
    let mut b_read_seen = Seen::new(n_c * plan.l_words);
    let mut e_read_seen = Seen::new(n_c * plan.l_words);
    let mut e_write_seen = Seen::new(n_c * plan.l_words);
    let mut quad_tile_scope = 0u64;

    let mut y = vec![0.0; p.n_out];
    let mut acc = AccessCounters::default();
    let mut flops = Flops::default();
    let mut pointwise = OpCount::default();
    let want_barriers = plan.barriers_per_workgroup();
    let mut sites: Vec<(BarrierSite, u64)> = plan.barrier_sites().into_iter().map(|s| (s, 0)).collect();
    let mut lanes_active = 0u64;

    let mut du: Vec<Vec<f64>> = sig.scalar_spaces.iter().map(|s| vec![0.0; s.n_deriv]).collect();
    let mut dv: Vec<Vec<f64>> = sig.vector_spaces.iter().map(|s| vec![0.0; s.n_deriv]).collect();
    let mut e = vec![0.0; n_w];

    for wg in 0..n_wg {
        let mut barriers = 0u64;
        let mut barrier = |arena: &mut Arena, site: BarrierSite| {
            arena.barrier();
            barriers += 1;
            if wg == 0 {
                if let Some(s) = sites.iter_mut().find(|s| s.0 == site) {
                    s.1 += 1;
                }
            }
        };

        let mut lanes: Vec<Lane> = (0..n_lanes)
            .map(|l| {
                let (lid0, lid1) = (l / n_wi, l % n_wi);
                let c = wg * n_c + lid0;
                Lane {
                    lid0,
                    lid1,
                    cell: (c < n_cells).then_some(c),
                    coords: Vec::new(),
                    geom: identity_geometry(d),
                    ell: width.iter().map(|&w| vec![0.0; w]).collect(),
                    acc: plan.spaces.iter().map(|s| vec![vec![0.0; eval_slots]; s.n_deriv]).collect(),
                    out: vec![0.0; quad_slots],
                }
            })
            .collect();
        lanes_active += lanes.iter().filter(|l| l.cell.is_some()).count() as u64;

        // Cell geometry.
        for lane in lanes.iter_mut() {
            let Some(cell) = lane.cell else { continue };
            if sig.affine {
                lane.coords = coords_of(p, cell);
                if lane.lid1 == 0 {
                    acc.coord_gather += lane.coords.len() as u64;
                }
                lane.geom = affine_geometry(d, &lane.coords);
                if !lane.geom.is_finite() {
                    return Err(SimError::NonFinite { cell, stage: Stage::Jacobian });
                }
            }
        }

        for qt in &plan.quad_tiles {
            quad_tile_scope += 1;
            let q0 = qt.points.start;
            for rt in &qt.eval_rows {
                for lane in lanes.iter_mut() {
                    lane.acc.iter_mut().flatten().for_each(|a| a.fill(0.0));
                }
                for (t, sp) in plan.spaces.iter().enumerate() {
                    for ct in &sp.col_tiles {
                        // Gather the DOF tile and prefetch the Φ tile.
                        let items = sp.n_deriv * rt.len * ct.len;
                        for (l, lane) in lanes.iter_mut().enumerate() {
                            if let Some(cell) = lane.cell {
                                for j in ct.start..ct.start + ct.len {
                                    for c in 0..sp.gather_width {
                                        let w = j * sp.gather_width + c;
                                        lane.ell[t][w] = dof(p, t, cell, j, c);
                                        if gather_seen.first(lane.lid0 * gather_words + gather_base[t] + w, arena.region) {
                                            acc.gather += 1;
                                        }
                                    }
                                }
                            }
                            let mut idx = n_wi * lane.lid0 + lane.lid1;
                            while idx < items {
                                let (k, rem) = (idx / (rt.len * ct.len), idx % (rt.len * ct.len));
                                let (i, j) = (rem / ct.len, rem % ct.len);
                                let (row, col) = (q0 + rt.start + i, ct.start + j);
                                let v = phi(p, t, k).get(row, col);
                                if ref_seen.first(refs.phi(p, t, k, row, col), arena.region) {
                                    acc.reference += 1;
                                }
                                arena.write(l as u32, plan.phi_offset(t, k, i, j), v)?;
                                acc.local_prefetch_write += 1;
                                idx += n_lanes;
                            }
                        }
                        barrier(&mut arena, BarrierSite::EvalPrefetch(t));

                        for (l, lane) in lanes.iter_mut().enumerate() {
                            let live = lane.cell.is_some();
                            let tile_ops = 2 * (sp.n_deriv * ct.len) as u64;
                            for s in 0..cdiv(rt.len, n_wi) {
                                let r = n_wi * s + lane.lid1;
                                if r >= rt.len {
                                    flops.add(live, true, tile_ops);
                                    continue;
                                }
                                for k in 0..sp.n_deriv {
                                    let comp = components[t][k];
                                    let mut a = lane.acc[t][k][s];
                                    for j in 0..ct.len {
                                        let off = plan.phi_offset(t, k, r, j);
                                        let b = arena.read(l as u32, off)?;
                                        if live && b_read_seen.first(lane.lid0 * plan.l_words + off, arena.region) {
                                            acc.local_eval_read += 1;
                                        }
                                        a += b * lane.ell[t][(ct.start + j) * sp.gather_width + comp];
                                    }
                                    lane.acc[t][k][s] = a;
                                }
                                flops.add(live, false, tile_ops);
                            }
                        }
                        barrier(&mut arena, BarrierSite::EvalCompute(t));
                    }
                }

                // Pointwise maps and geometry; results go to e.
                for (l, lane) in lanes.iter_mut().enumerate() {
                    for s in 0..cdiv(rt.len, n_wi) {
                        let r = n_wi * s + lane.lid1;
                        if r >= rt.len {
                            continue;
                        }
                        let q_rel = rt.start + r;
                        let q = q0 + q_rel;
                        if ref_seen.first(refs.weight(q), arena.region) {
                            acc.reference += 1;
                        }
                        match lane.cell {
                            Some(cell) => {
                                for t in 0..n_spaces {
                                    let dst = if t < ns { &mut du[t] } else { &mut dv[t - ns] };
                                    for (k, v) in dst.iter_mut().enumerate() {
                                        *v = lane.acc[t][k][s];
                                    }
                                }
                                du.iter().chain(dv.iter()).try_for_each(|v| check_finite(cell, Stage::Evaluation, v))?;
                                let geom = if sig.affine {
                                    lane.geom
                                } else {
                                    let g = point_geometry(sig, &dv);
                                    if !g.is_finite() {
                                        return Err(SimError::NonFinite { cell, stage: Stage::Jacobian });
                                    }
                                    g
                                };
                                let x = QuadPointInputs {
                                    scalar: &du,
                                    vector: &dv,
                                    geometry: &geom,
                                    weight: p.tabulations.weights[q],
                                    coords: &lane.coords,
                                    dim: d,
                                };
                                p.map.apply(&x, &mut e, &mut pointwise);
                                check_finite(cell, Stage::Pointwise, &e)?;
                            }
                            None => e.fill(0.0),
                        }
                        for (k, &v) in e.iter().enumerate() {
                            let off = plan.e_offset(k, lane.lid0, q_rel);
                            arena.write(l as u32, off, v)?;
                            if lane.cell.is_some() && e_write_seen.first(lane.lid0 * plan.l_words + off, arena.region) {
                                acc.local_eval_write += 1;
                            }
                        }
                    }
                }
            }
            barrier(&mut arena, BarrierSite::EvalQuadSync);

            for rt in &plan.test_rows {
                for lane in lanes.iter_mut() {
                    lane.out.fill(0.0);
                }
                for ct in &qt.quad_cols {
                    let items = n_w * rt.len * ct.len;
                    for (l, lane) in lanes.iter().enumerate() {
                        let mut idx = n_wi * lane.lid0 + lane.lid1;
                        while idx < items {
                            let (k, rem) = (idx / (rt.len * ct.len), idx % (rt.len * ct.len));
                            let (i, j) = (rem / ct.len, rem % ct.len);
                            let (row, col) = (rt.start + i, q0 + ct.start + j);
                            let v = p.tabulations.test[k].get(row, col);
                            if ref_seen.first(refs.psi(p, k, row, col), arena.region) {
                                acc.reference += 1;
                            }
                            arena.write(l as u32, plan.psi_offset(k, i, j), v)?;
                            acc.local_prefetch_write += 1;
                            idx += n_lanes;
                        }
                    }
                    barrier(&mut arena, BarrierSite::QuadPrefetch);

                    for (l, lane) in lanes.iter_mut().enumerate() {
                        let live = lane.cell.is_some();
                        let tile_ops = 2 * (n_w * ct.len) as u64;
                        for s in 0..cdiv(rt.len, n_wi) {
                            let i = n_wi * s + lane.lid1;
                            if i >= rt.len {
                                flops.add(live, true, tile_ops);
                                continue;
                            }
                            let mut a = lane.out[s];
                            for k in 0..n_w {
                                for j in 0..ct.len {
                                    let boff = plan.psi_offset(k, i, j);
                                    let eoff = plan.e_offset(k, lane.lid0, ct.start + j);
                                    let b = arena.read(l as u32, boff)?;
                                    let ev = arena.read(l as u32, eoff)?;
                                    if live {
                                        let base = lane.lid0 * plan.l_words;
                                        if b_read_seen.first(base + boff, arena.region) {
                                            acc.local_quad_read += 1;
                                        }
                                        if e_read_seen.first(base + eoff, quad_tile_scope) {
                                            acc.local_quad_read += 1;
                                        }
                                    }
                                    a += b * ev;
                                }
                            }
                            lane.out[s] = a;
                            flops.add(live, false, tile_ops);
                        }
                    }
                    barrier(&mut arena, BarrierSite::QuadCompute);
                }

                // Atomic scatter, applied in ascending lane order.
                for lane in &lanes {
                    let Some(cell) = lane.cell else { continue };
                    for s in 0..cdiv(rt.len, n_wi) {
                        let i = n_wi * s + lane.lid1;
                        if i >= rt.len {
                            continue;
                        }
                        check_finite(cell, Stage::Quadrature, &lane.out[s..s + 1])?;
                        let g = p.mesh.test_map.get(cell, rt.start + i);
                        y[g] += lane.out[s];
                        acc.scatter += 1;
                        check_finite(cell, Stage::Scatter, &y[g..g + 1])?;
                    }
                }
            }
            barrier(&mut arena, BarrierSite::QuadTileEnd);
        }
        if barriers != want_barriers {
            return Err(SimError::BarrierDivergence { wg, got: barriers, want: want_barriers });
        }
    }

    let per_wg = SUBGROUP * (n_lanes as u64).div_ceil(SUBGROUP);
    let lanes_total = per_wg * n_wg as u64;
    Ok(SimTrace {
        schedule: Schedule::Mlt(plan.params.clone()),
        n_cells,
        n_workgroups: n_wg,
        output: y,
        barriers_per_workgroup: want_barriers,
        barriers_by_site: sites.into_iter().map(|(site, count)| SiteCount { site, count }).collect(),
        flops_matvec: flops.usable,
        flops_masked_padding: flops.padding,
        flops_inactive_cells: flops.inactive,
        flops_pointwise: pointwise.total(),
        local_words_highwater: arena.highwater as u64,
        access: acc,
        lanes_active,
        lanes_total,
        lanes_per_workgroup: n_lanes as u64,
        masked_lane_fraction: Ratio::new(lanes_total - lanes_active, lanes_total),
    })
}
