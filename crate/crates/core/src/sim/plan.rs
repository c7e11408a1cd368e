use serde::{Deserialize, Serialize};

use crate::form::FormSignature;
use crate::qoi::{cdiv, TilingParams};

use super::SimError;

/// A half-open index range `[start, start+len)`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Tile {
    pub start: usize,
    pub len: usize,
}

/// Splits `0..n` into tiles of `t`, the last one possibly shorter.
pub fn split(n: usize, t: usize) -> Vec<Tile> {
    (0..cdiv(n, t))
        .map(|i| Tile { start: i * t, len: t.min(n - i * t) })
        .collect()
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SpacePlan {
    pub label: String,
    pub n: usize,
    pub n_deriv: usize,
    pub gather_width: usize,
    /// `T^c_e` of this space.
    pub t_col: usize,
    pub col_tiles: Vec<Tile>,
}

/// One iteration of the outer quadrature-tile loop.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct QuadTile {
    /// Absolute quadrature range.
    pub points: Tile,
    /// Evaluation row tiles, relative to `points.start`.
    pub eval_rows: Vec<Tile>,
    /// Quadrature-phase column tiles, relative to `points.start`.
    pub quad_cols: Vec<Tile>,
}

/// Static barrier positions of the tiled kernel, in program order.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(tag = "site", content = "space", rename_all = "snake_case")]
pub enum BarrierSite {
    EvalPrefetch(usize),
    EvalCompute(usize),
    EvalQuadSync,
    QuadPrefetch,
    QuadCompute,
    QuadTileEnd,
}

impl BarrierSite {
    pub fn label(&self) -> String {
        match self {
            BarrierSite::EvalPrefetch(t) => format!("eval_prefetch[{t}]"),
            BarrierSite::EvalCompute(t) => format!("eval_compute[{t}]"),
            BarrierSite::EvalQuadSync => "eval_quad_sync".into(),
            BarrierSite::QuadPrefetch => "quad_prefetch".into(),
            BarrierSite::QuadCompute => "quad_compute".into(),
            BarrierSite::QuadTileEnd => "quad_tile_end".into(),
        }
    }
}

/// Loop structure and local-memory layout of a tiled schedule; a pure
/// function of the signature and the tile parameters.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SchedulePlan {
    pub signature: FormSignature,
    pub params: TilingParams,
    pub spaces: Vec<SpacePlan>,
    pub quad_tiles: Vec<QuadTile>,
    /// Row tiles over the test DOFs (`T_q^r`).
    pub test_rows: Vec<Tile>,
    pub buffer_b_words: usize,
    pub l_words: usize,
}

pub fn build_plan(sig: &FormSignature, p: &TilingParams) -> Result<SchedulePlan, SimError> {
    sig.validate()?;
    p.validate(sig)?;
    let spaces = sig
        .trial_spaces()
        .zip(&p.t_eval_col)
        .map(|(s, &t)| SpacePlan {
            label: s.id.label(),
            n: s.n,
            n_deriv: s.n_deriv,
            gather_width: s.gather_width,
            t_col: t,
            col_tiles: split(s.n, t),
        })
        .collect();
    let quad_tiles = split(sig.n_quad, p.t_quad)
        .into_iter()
        .map(|points| QuadTile {
            points,
            eval_rows: split(points.len, p.t_eval_row),
            quad_cols: split(points.len, p.t_quad_col),
        })
        .collect();
    let buffer_b_words = p.buffer_b_words(sig) as usize;
    Ok(SchedulePlan {
        signature: sig.clone(),
        params: p.clone(),
        spaces,
        quad_tiles,
        test_rows: split(sig.n_test, p.t_quad_row),
        buffer_b_words,
        l_words: p.local_mem_words(sig) as usize,
    })
}

impl SchedulePlan {
    pub fn n_c(&self) -> usize {
        self.params.n_cells_wg
    }

    pub fn n_wi(&self) -> usize {
        self.params.n_wi
    }

    /// Offset in buffer B of `Φ[k][i'][j']` of the current evaluation tile.
    pub fn phi_offset(&self, space: usize, k: usize, i: usize, j: usize) -> usize {
        let tc = self.spaces[space].t_col;
        k * self.params.t_eval_row * tc + tc * i + j
    }

    /// Offset in buffer B of `Ψ[k][i'][j']` of the current quadrature tile.
    pub fn psi_offset(&self, k: usize, i: usize, j: usize) -> usize {
        let (tr, tc) = (self.params.t_quad_row, self.params.t_quad_col);
        k * tr * tc + tc * i + j
    }

    /// Offset of `e_k` for cell `lid0` at tile-relative point `q`.
    pub fn e_offset(&self, k: usize, lid0: usize, q: usize) -> usize {
        self.buffer_b_words + (k * self.n_c() + lid0) * self.params.t_quad + q
    }

    /// Barrier sites in program order.
    pub fn barrier_sites(&self) -> Vec<BarrierSite> {
        let mut v = Vec::new();
        for t in 0..self.spaces.len() {
            v.push(BarrierSite::EvalPrefetch(t));
            v.push(BarrierSite::EvalCompute(t));
        }
        v.extend([
            BarrierSite::EvalQuadSync,
            BarrierSite::QuadPrefetch,
            BarrierSite::QuadCompute,
            BarrierSite::QuadTileEnd,
        ]);
        v
    }

    /// Dynamic executions of each barrier site by one work-group.
    pub fn barrier_counts(&self) -> Vec<(BarrierSite, u64)> {
        let n_rows = self.test_rows.len() as u64;
        self.barrier_sites()
            .into_iter()
            .map(|site| {
                let c: u64 = self
                    .quad_tiles
                    .iter()
                    .map(|qt| match site {
                        BarrierSite::EvalPrefetch(t) | BarrierSite::EvalCompute(t) => {
                            (qt.eval_rows.len() * self.spaces[t].col_tiles.len()) as u64
                        }
                        BarrierSite::QuadPrefetch | BarrierSite::QuadCompute => n_rows * qt.quad_cols.len() as u64,
                        BarrierSite::EvalQuadSync | BarrierSite::QuadTileEnd => 1,
                    })
                    .sum();
                (site, c)
            })
            .collect()
    }

    pub fn barriers_per_workgroup(&self) -> u64 {
        self.barrier_counts().iter().map(|c| c.1).sum()
    }

    /// Whether any loop of the schedule runs a shorter remainder tile.
    pub fn has_remainder_tiles(&self) -> bool {
        let short = |ts: &[Tile], t: usize| ts.iter().any(|x| x.len != t);
        let p = &self.params;
        short(&self.quad_tiles.iter().map(|q| q.points).collect::<Vec<_>>(), p.t_quad)
            || self.quad_tiles.iter().any(|q| short(&q.eval_rows, p.t_eval_row) || short(&q.quad_cols, p.t_quad_col))
            || self.spaces.iter().any(|s| short(&s.col_tiles, s.t_col))
            || short(&self.test_rows, p.t_quad_row)
    }
}
