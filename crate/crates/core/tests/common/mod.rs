//! Test-side oracles. Counts here come from walking the tiled loop nest one
//! tile at a time, not from the library's closed forms.
#![allow(dead_code)]

use std::collections::BTreeSet;

use femtile::form::{preset_map, preset_signature, synthesize_with_map, FormSignature, Operator, ProblemInstance};
use femtile::search::{enumerate, SearchConfig};
use femtile::TilingParams;
use num_rational::Ratio;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Preset sweep used by the equivalence and conformance criteria.
pub const SWEEP: [(Operator, usize, usize, usize); 8] = [
    (Operator::Mass, 2, 1, 3),
    (Operator::Laplace, 2, 2, 6),
    (Operator::Helmholtz, 2, 3, 12),
    (Operator::Mass, 3, 2, 14),
    (Operator::Laplace, 3, 1, 4),
    (Operator::Helmholtz, 3, 3, 24),
    (Operator::Elasticity, 2, 2, 7),
    (Operator::Hyperelasticity, 3, 1, 5),
];

pub fn preset(op: Operator, d: usize, degree: usize, q: usize) -> FormSignature {
    preset_signature(op, d, degree, q).unwrap()
}

pub fn preset_instance(op: Operator, d: usize, degree: usize, q: usize, cells: usize, seed: u64) -> ProblemInstance {
    let sig = preset(op, d, degree, q);
    let map = preset_map(op, &sig).unwrap();
    synthesize_with_map(&sig, map, cells, seed).unwrap()
}

/// `{⌈n/k⌉ : 1 ≤ k ≤ n}` by brute force.
pub fn ceil_divisors(n: usize) -> BTreeSet<usize> {
    (1..=n).map(|k| n.div_ceil(k)).collect()
}

fn tiles(n: usize, t: usize) -> Vec<usize> {
    (0..n).step_by(t).map(|s| t.min(n - s)).collect()
}

/// Lane slots a tile of `rows` rows occupies on `n_wi` work-items.
fn slots(rows: usize, n_wi: usize) -> u64 {
    (n_wi * rows.div_ceil(n_wi)) as u64
}

/// Per-cell and per-work-group quantities of one tiling.
#[derive(Debug, Default, PartialEq, Eq)]
pub struct Walk {
    pub barriers: u64,
    pub ops_usable: u64,
    pub ops_performed: u64,
    pub gather: u64,
    pub scatter: u64,
    pub reference_per_wg: u64,
    pub eval_read: u64,
    pub eval_write: u64,
    pub quad_read: u64,
    pub buffer_b: u64,
    pub l_words: u64,
}

pub fn walk(sig: &FormSignature, p: &TilingParams) -> Walk {
    let mut w = Walk::default();
    let spaces: Vec<(usize, usize, usize)> = sig
        .trial_spaces()
        .map(|s| (s.n, s.n_deriv, s.gather_width))
        .collect();
    let dofs: u64 = spaces.iter().map(|&(n, _, g)| (n * g) as u64).sum();
    let nw = sig.n_deriv_test;
    for tq in tiles(sig.n_quad, p.t_quad) {
        for r in tiles(tq, p.t_eval_row) {
            w.gather += dofs;
            for (&(n, nd, _), &tc) in spaces.iter().zip(&p.t_eval_col) {
                for c in tiles(n, tc) {
                    w.barriers += 2;
                    w.ops_usable += 2 * (r * c * nd) as u64;
                    w.ops_performed += 2 * slots(r, p.n_wi) * (c * nd) as u64;
                    w.eval_read += (r * c * nd) as u64;
                }
            }
            w.eval_write += (r * nw) as u64;
        }
        w.barriers += 1;
        for r in tiles(sig.n_test, p.t_quad_row) {
            for c in tiles(tq, p.t_quad_col) {
                w.barriers += 2;
                w.ops_usable += 2 * (r * c * nw) as u64;
                w.ops_performed += 2 * slots(r, p.n_wi) * (c * nw) as u64;
                w.quad_read += (r * c * nw) as u64;
            }
        }
        w.quad_read += (tq * nw) as u64;
        w.scatter += sig.n_test as u64;
        w.barriers += 1;
    }
    let q = sig.n_quad;
    w.reference_per_wg = spaces.iter().map(|&(n, nd, _)| (n * nd * q) as u64).sum::<u64>() + (nw * sig.n_test * q + q) as u64;
    let foot = footprints(sig, p);
    w.buffer_b = *foot.iter().max().unwrap();
    w.l_words = w.buffer_b + (p.n_cells_wg * p.t_quad * nw) as u64;
    w
}

/// Prefetched tile sizes of every phase: trial spaces, then test.
pub fn footprints(sig: &FormSignature, p: &TilingParams) -> Vec<u64> {
    let mut f: Vec<u64> = sig
        .trial_spaces()
        .zip(&p.t_eval_col)
        .map(|(s, &t)| (s.n_deriv * p.t_eval_row * t) as u64)
        .collect();
    f.push((sig.n_deriv_test * p.t_quad_row * p.t_quad_col) as u64);
    f
}

pub fn simd_efficiency(n_c: usize, n_wi: usize) -> Ratio<u64> {
    let lanes = (n_c * n_wi) as u64;
    let subgroups = lanes.div_ceil(32);
    Ratio::new(lanes, 32 * subgroups)
}

/// Constraints on the tile sizes alone: ceil-divisor membership and the
/// aliasing floor.
pub fn tiles_admissible(sig: &FormSignature, p: &TilingParams, cfg: &SearchConfig) -> bool {
    let spaces: Vec<usize> = sig.trial_spaces().map(|s| s.n).collect();
    if p.t_eval_col.len() != spaces.len() {
        return false;
    }
    let member = |x: usize, n: usize| ceil_divisors(n).contains(&x);
    let ok = member(p.t_quad, sig.n_quad)
        && member(p.t_eval_row, p.t_quad)
        && spaces.iter().zip(&p.t_eval_col).all(|(&n, &t)| member(t, n))
        && member(p.t_quad_row, sig.n_test)
        && member(p.t_quad_col, p.t_quad);
    if !ok {
        return false;
    }
    let f = footprints(sig, p);
    Ratio::new(*f.iter().min().unwrap(), *f.iter().max().unwrap()) >= cfg.alias_floor
}

/// Constraints on the work-group shape alone.
pub fn shape_admissible(n_c: usize, n_wi: usize, cfg: &SearchConfig) -> bool {
    simd_efficiency(n_c, n_wi) >= cfg.simd_floor
        && n_c * n_wi <= cfg.wg_cap
        && n_c <= cfg.max_n_c.unwrap_or(cfg.wg_cap)
        && n_wi <= cfg.max_n_wi.unwrap_or(cfg.wg_cap)
}

/// The four search constraints, checked from their definitions.
pub fn admissible(sig: &FormSignature, p: &TilingParams, cfg: &SearchConfig) -> bool {
    tiles_admissible(sig, p, cfg) && shape_admissible(p.n_cells_wg, p.n_wi, cfg)
}

/// Every tuple with each tile in `1..=bound` and each of `N_c`, `N_WI` in
/// `1..=wg_cap`, filtered by [`admissible`].
pub fn brute_force(sig: &FormSignature, cfg: &SearchConfig) -> BTreeSet<TilingParams> {
    let ns: Vec<usize> = sig.trial_spaces().map(|s| s.n).collect();
    let mut cols: Vec<Vec<usize>> = vec![vec![]];
    for &n in &ns {
        cols = cols.into_iter().flat_map(|c| (1..=n).map(move |t| [c.clone(), vec![t]].concat())).collect();
    }
    let q = sig.n_quad;
    let mut tiles = Vec::new();
    for tq in 1..=q {
        for ter in 1..=q {
            for tec in &cols {
                for tqr in 1..=sig.n_test {
                    for tqc in 1..=q {
                        let p = TilingParams {
                            t_quad: tq,
                            t_eval_row: ter,
                            t_eval_col: tec.clone(),
                            t_quad_row: tqr,
                            t_quad_col: tqc,
                            n_cells_wg: 1,
                            n_wi: 1,
                        };
                        if tiles_admissible(sig, &p, cfg) {
                            tiles.push(p);
                        }
                    }
                }
            }
        }
    }
    let mut shapes = Vec::new();
    for n_c in 1..=cfg.wg_cap {
        for n_wi in 1..=cfg.wg_cap {
            if shape_admissible(n_c, n_wi, cfg) {
                shapes.push((n_c, n_wi));
            }
        }
    }
    let mut out = BTreeSet::new();
    for t in &tiles {
        for &(n_c, n_wi) in &shapes {
            let p = TilingParams { n_cells_wg: n_c, n_wi, ..t.clone() };
            assert!(admissible(sig, &p, cfg));
            out.insert(p);
        }
    }
    out
}

/// `k` distinct members of the search space drawn with a seeded generator.
pub fn sample(sig: &FormSignature, cfg: &SearchConfig, k: usize, seed: u64) -> Vec<TilingParams> {
    let space = enumerate(sig, cfg).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut picked = BTreeSet::new();
    while picked.len() < k.min(space.len()) {
        picked.insert(rng.random_range(0..space.len()));
    }
    picked.into_iter().map(|i| space.get(i)).collect()
}

/// Largest elementwise `|x − r| / |r|`; exact matches count as zero.
pub fn rel_err(x: &[f64], r: &[f64]) -> f64 {
    assert_eq!(x.len(), r.len());
    x.iter()
        .zip(r)
        .map(|(a, b)| if a == b { 0.0 } else { (a - b).abs() / b.abs() })
        .fold(0.0, f64::max)
}
