//! Transformation parameters and their closed-form quantities of interest.

use num_rational::Ratio;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::form::{reference_flop_count, FormError, FormSignature};

/// SIMD width of the modeled devices.
pub const SUBGROUP: u64 = 32;

#[derive(Debug, thiserror::Error)]
pub enum QoiError {
    #[error("quantity is undefined for the single-cell-per-work-item schedule")]
    NotTiled,
    #[error("tile parameter out of bounds: {0}")]
    Bounds(String),
    #[error(transparent)]
    Form(#[from] FormError),
}

/// One point of the multi-level tiling space. Field order is the canonical
/// lexicographic order used for enumeration and tie-breaking.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct TilingParams {
    /// `T^Q`
    pub t_quad: usize,
    /// `T_e^r`
    pub t_eval_row: usize,
    /// `T^c_e`, one per trial space (scalar spaces first).
    pub t_eval_col: Vec<usize>,
    /// `T_q^r`
    pub t_quad_row: usize,
    /// `T_q^c`
    pub t_quad_col: usize,
    /// `N_c`
    pub n_cells_wg: usize,
    /// `N_WI`
    pub n_wi: usize,
}

#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Schedule {
    /// Single cell per work-item, 32-wide work-groups.
    Scpt,
    Mlt(TilingParams),
}

impl Schedule {
    pub fn tiling(&self) -> Result<&TilingParams, QoiError> {
        match self {
            Schedule::Scpt => Err(QoiError::NotTiled),
            Schedule::Mlt(p) => Ok(p),
        }
    }

    pub fn label(&self) -> String {
        match self {
            Schedule::Scpt => "scpt".into(),
            Schedule::Mlt(p) => p.label(),
        }
    }
}

#[inline]
pub(crate) fn cdiv(a: usize, b: usize) -> usize {
    a.div_ceil(b)
}

impl TilingParams {
    /// Every tile equal to its loop bound.
    pub fn untiled(sig: &FormSignature, n_cells_wg: usize, n_wi: usize) -> TilingParams {
        TilingParams {
            t_quad: sig.n_quad,
            t_eval_row: sig.n_quad,
            t_eval_col: sig.trial_spaces().map(|s| s.n).collect(),
            t_quad_row: sig.n_test,
            t_quad_col: sig.n_quad,
            n_cells_wg,
            n_wi,
        }
    }

    pub fn label(&self) -> String {
        let cols: Vec<String> = self.t_eval_col.iter().map(|c| c.to_string()).collect();
        format!(
            "TQ={} Ter={} Tec=[{}] Tqr={} Tqc={} Nc={} Nwi={}",
            self.t_quad,
            self.t_eval_row,
            cols.join(","),
            self.t_quad_row,
            self.t_quad_col,
            self.n_cells_wg,
            self.n_wi
        )
    }

    pub fn validate(&self, sig: &FormSignature) -> Result<(), QoiError> {
        let bad = |m: String| Err(QoiError::Bounds(m));
        let q = sig.n_quad;
        if self.t_eval_col.len() != sig.n_trial_spaces() {
            return bad(format!(
                "{} column tiles for {} trial spaces",
                self.t_eval_col.len(),
                sig.n_trial_spaces()
            ));
        }
        if self.t_quad == 0 || self.t_quad > q {
            return bad(format!("T_Q={} not in 1..={q}", self.t_quad));
        }
        if self.t_eval_row == 0 || self.t_eval_row > self.t_quad {
            return bad(format!("T_e_r={} not in 1..=T_Q={}", self.t_eval_row, self.t_quad));
        }
        for (t, s) in self.t_eval_col.iter().zip(sig.trial_spaces()) {
            if *t == 0 || *t > s.n {
                return bad(format!("T_e_c={t} for {} not in 1..={}", s.id.label(), s.n));
            }
        }
        if self.t_quad_row == 0 || self.t_quad_row > sig.n_test {
            return bad(format!("T_q_r={} not in 1..={}", self.t_quad_row, sig.n_test));
        }
        if self.t_quad_col == 0 || self.t_quad_col > self.t_quad {
            return bad(format!("T_q_c={} not in 1..=T_Q={}", self.t_quad_col, self.t_quad));
        }
        if self.n_cells_wg == 0 || self.n_wi == 0 {
            return bad("N_c and N_WI must be positive".into());
        }
        Ok(())
    }

    /// Barriers executed by one quadrature tile of `q` points.
    fn barriers_per_tile(&self, sig: &FormSignature, q: usize) -> u64 {
        if q == 0 {
            return 0;
        }
        let row_tiles = cdiv(q, self.t_eval_row);
        let eval: usize = sig
            .trial_spaces()
            .zip(&self.t_eval_col)
            .map(|(s, &t)| 2 * row_tiles * cdiv(s.n, t))
            .sum();
        let quad = 2 * cdiv(sig.n_test, self.t_quad_row) * cdiv(q, self.t_quad_col);
        (eval + quad + 2) as u64
    }

    pub fn n_sync(&self, sig: &FormSignature) -> u64 {
        let q = sig.n_quad;
        (q / self.t_quad) as u64 * self.barriers_per_tile(sig, self.t_quad)
            + self.barriers_per_tile(sig, q % self.t_quad)
    }

    /// Footprint of each prefetched phase tile: trial spaces, then test.
    pub fn phase_footprints(&self, sig: &FormSignature) -> Vec<u64> {
        let mut v: Vec<u64> = sig
            .trial_spaces()
            .zip(&self.t_eval_col)
            .map(|(s, &t)| (s.n_deriv * self.t_eval_row * t) as u64)
            .collect();
        v.push((sig.n_deriv_test * self.t_quad_row * self.t_quad_col) as u64);
        v
    }

    pub fn buffer_b_words(&self, sig: &FormSignature) -> u64 {
        self.phase_footprints(sig).into_iter().max().unwrap_or(0)
    }

    /// Words of the `e` arrays: `N_c · T^Q · N^deriv_w`.
    pub fn eval_words(&self, sig: &FormSignature) -> u64 {
        (self.n_cells_wg * self.t_quad * sig.n_deriv_test) as u64
    }

    pub fn local_mem_words(&self, sig: &FormSignature) -> u64 {
        self.buffer_b_words(sig) + self.eval_words(sig)
    }

    pub fn eta_alias(&self, sig: &FormSignature) -> Ratio<u64> {
        let f = self.phase_footprints(sig);
        Ratio::new(*f.iter().min().unwrap(), *f.iter().max().unwrap())
    }

    pub fn eta_simd(&self) -> Ratio<u64> {
        eta_simd(self.n_cells_wg, self.n_wi)
    }

    /// Lane-slots spent on `rows` rows split into tiles of `tile`, each tile
    /// padded to a multiple of `N_WI`.
    fn padded_rows(&self, rows: usize, tile: usize) -> u64 {
        let w = self.n_wi;
        ((rows / tile) * w * cdiv(tile, w) + w * cdiv(rows % tile, w)) as u64
    }

    fn eval_ops(&self, sig: &FormSignature, x: usize) -> u64 {
        let per_row: usize = sig.trial_spaces().map(|s| s.n_deriv * s.n).sum();
        2 * self.padded_rows(x, self.t_eval_row) * per_row as u64
    }

    fn quad_ops(&self, sig: &FormSignature, x: usize) -> u64 {
        2 * self.padded_rows(sig.n_test, self.t_quad_row) * (sig.n_deriv_test * x) as u64
    }

    /// Matvec FLOPs per cell including masked-lane padding.
    pub fn ops_performed(&self, sig: &FormSignature) -> u64 {
        let q = sig.n_quad;
        let (full, rem) = ((q / self.t_quad) as u64, q % self.t_quad);
        full * (self.eval_ops(sig, self.t_quad) + self.quad_ops(sig, self.t_quad))
            + self.eval_ops(sig, rem)
            + self.quad_ops(sig, rem)
    }
}

/// `N_c·N_WI / (32·⌈N_c·N_WI/32⌉)`.
pub fn eta_simd(n_c: usize, n_wi: usize) -> Ratio<u64> {
    let p = (n_c * n_wi) as u64;
    Ratio::new(p, SUBGROUP * p.div_ceil(SUBGROUP))
}

pub fn n_sync(sig: &FormSignature, s: &Schedule) -> Result<u64, QoiError> {
    Ok(s.tiling()?.n_sync(sig))
}

/// `(L_words, buffer_B_words)`.
pub fn local_mem_words(sig: &FormSignature, s: &Schedule) -> Result<(u64, u64), QoiError> {
    let p = s.tiling()?;
    Ok((p.local_mem_words(sig), p.buffer_b_words(sig)))
}

pub fn ops_performed(sig: &FormSignature, s: &Schedule) -> Result<u64, QoiError> {
    Ok(s.tiling()?.ops_performed(sig))
}

pub fn eta_alias(sig: &FormSignature, s: &Schedule) -> Result<Ratio<u64>, QoiError> {
    Ok(s.tiling()?.eta_alias(sig))
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct QoIReport {
    pub n_sync: u64,
    pub l_words: u64,
    pub eta_simd: Ratio<u64>,
    pub eta_pred: Ratio<u64>,
    pub eta_alias: Ratio<u64>,
    pub ops_usable: u64,
    pub ops_performed: u64,
    pub buffer_b_words: u64,
}

pub fn ratio_f64(r: Ratio<u64>) -> f64 {
    *r.numer() as f64 / *r.denom() as f64
}

pub fn ratio_str(r: Ratio<u64>) -> String {
    format!("{}/{}", r.numer(), r.denom())
}

impl QoIReport {
    /// Flat key-value record shared by the table and JSON emitters.
    pub fn to_record(&self) -> Vec<(&'static str, Value)> {
        vec![
            ("n_sync", json!(self.n_sync)),
            ("l_words", json!(self.l_words)),
            ("buffer_b_words", json!(self.buffer_b_words)),
            ("eta_simd", json!(ratio_str(self.eta_simd))),
            ("eta_pred", json!(ratio_str(self.eta_pred))),
            ("eta_alias", json!(ratio_str(self.eta_alias))),
            ("ops_usable", json!(self.ops_usable)),
            ("ops_performed", json!(self.ops_performed)),
        ]
    }
}

pub fn qoi_report(sig: &FormSignature, s: &Schedule) -> Result<QoIReport, QoiError> {
    let ops_usable = reference_flop_count(sig)?;
    let one = Ratio::from_integer(1);
    match s {
        Schedule::Scpt => Ok(QoIReport {
            n_sync: 0,
            l_words: 0,
            eta_simd: one,
            eta_pred: one,
            eta_alias: one,
            ops_usable,
            ops_performed: ops_usable,
            buffer_b_words: 0,
        }),
        Schedule::Mlt(p) => {
            p.validate(sig)?;
            let ops_performed = p.ops_performed(sig);
            Ok(QoIReport {
                n_sync: p.n_sync(sig),
                l_words: p.local_mem_words(sig),
                eta_simd: p.eta_simd(),
                eta_pred: Ratio::new(ops_usable, ops_performed),
                eta_alias: p.eta_alias(sig),
                ops_usable,
                ops_performed,
                buffer_b_words: p.buffer_b_words(sig),
            })
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::form::{preset_signature, Operator, ScalarSpace};

    fn one_space(n: usize, n_deriv: usize, n_w: usize, q: usize) -> FormSignature {
        FormSignature {
            dim: 2,
            scalar_spaces: vec![ScalarSpace { n, n_deriv }],
            vector_spaces: vec![],
            n_test: n,
            n_deriv_test: n_w,
            n_quad: q,
            n_coord: 3,
            affine: true,
            word_bytes: 8,
        }
    }

    fn clamp3(sig: &FormSignature) -> TilingParams {
        let p = TilingParams {
            t_quad: 3,
            t_eval_row: 3,
            t_eval_col: vec![3],
            t_quad_row: 3,
            t_quad_col: 3,
            n_cells_wg: 1,
            n_wi: 1,
        };
        p.validate(sig).unwrap();
        p
    }

    #[test]
    fn n_sync_examples() {
        let sig = one_space(6, 2, 2, 6);
        let p = TilingParams::untiled(&sig, 1, 1);
        assert_eq!(p.n_sync(&sig), 6);
        let t = clamp3(&sig);
        // f(3) = 2·1·2 + 2·2·1 + 2 = 10 per tile
        assert_eq!(t.n_sync(&sig), 2 * t.barriers_per_tile(&sig, 3));
        assert_eq!(t.n_sync(&sig), 20);
        assert_eq!(t.barriers_per_tile(&sig, 0), 0);
        let s7 = one_space(6, 2, 2, 7);
        let mut p7 = TilingParams::untiled(&s7, 1, 1);
        p7.t_quad = 4;
        p7.t_eval_row = 4;
        p7.t_quad_col = 4;
        // tiles of 4 and 3: f(4) = 6, f(3) = 6
        assert_eq!(p7.n_sync(&s7), 12);
        assert!(n_sync(&s7, &Schedule::Scpt).is_err());
    }

    #[test]
    fn local_memory_examples() {
        let sig = one_space(6, 1, 1, 6);
        let p = TilingParams::untiled(&sig, 64, 2);
        assert_eq!(local_mem_words(&sig, &Schedule::Mlt(p)).unwrap(), (420, 36));
        let tiny = one_space(1, 1, 1, 1);
        let p = TilingParams::untiled(&tiny, 1, 1);
        assert_eq!((p.local_mem_words(&tiny), p.buffer_b_words(&tiny)), (2, 1));
        let lap = one_space(6, 2, 2, 6);
        assert_eq!(TilingParams::untiled(&lap, 4, 4).eta_alias(&lap), Ratio::from_integer(1));
    }

    #[test]
    fn eta_simd_examples() {
        assert_eq!(eta_simd(64, 2), Ratio::from_integer(1));
        assert_eq!(eta_simd(51, 5), Ratio::new(255, 256));
        assert_eq!(eta_simd(1, 1), Ratio::new(1, 32));
        assert_eq!(eta_simd(21, 12), Ratio::new(252, 256));
        assert_eq!(eta_simd(13, 17), Ratio::new(221, 224));
    }

    #[test]
    fn eta_alias_two_footprints() {
        // trial footprint 1·6·6 = 36, test footprint 2·6·6 = 72
        let sig = one_space(6, 1, 2, 6);
        assert_eq!(TilingParams::untiled(&sig, 1, 1).eta_alias(&sig), Ratio::new(1, 2));
        assert_eq!(TilingParams::untiled(&sig, 1, 1).phase_footprints(&sig), vec![36, 72]);
    }

    #[test]
    fn ops_performed_examples() {
        let sig = preset_signature(Operator::Laplace, 2, 2, 6).unwrap();
        let r = qoi_report(&sig, &Schedule::Mlt(TilingParams::untiled(&sig, 1, 1))).unwrap();
        assert_eq!(r.ops_performed, r.ops_usable);
        assert_eq!(r.eta_pred, Ratio::from_integer(1));
        let r4 = qoi_report(&sig, &Schedule::Mlt(TilingParams::untiled(&sig, 1, 4))).unwrap();
        // 6 rows padded to 8 in both phases
        assert_eq!(r4.ops_performed, 288 * 8 / 6);
        assert!(r4.eta_pred < Ratio::from_integer(1));
        let s7 = one_space(6, 2, 2, 7);
        let mut p = TilingParams::untiled(&s7, 1, 1);
        p.t_quad = 4;
        p.t_eval_row = 4;
        p.t_quad_col = 4;
        assert_eq!(p.ops_performed(&s7), p.eval_ops(&s7, 4) + p.quad_ops(&s7, 4) + p.eval_ops(&s7, 3) + p.quad_ops(&s7, 3));
        assert_eq!(p.ops_performed(&s7), reference_flop_count(&s7).unwrap());
    }

    #[test]
    fn scpt_report_is_neutral() {
        let sig = preset_signature(Operator::Mass, 2, 2, 6).unwrap();
        let r = qoi_report(&sig, &Schedule::Scpt).unwrap();
        let one = Ratio::from_integer(1);
        assert_eq!(
            (r.n_sync, r.l_words, r.eta_simd, r.eta_pred, r.eta_alias, r.ops_usable, r.ops_performed, r.buffer_b_words),
            (0, 0, one, one, one, 144, 144, 0)
        );
    }

    #[test]
    fn bounds_are_checked() {
        let sig = one_space(6, 1, 1, 6);
        let mut p = TilingParams::untiled(&sig, 1, 1);
        p.t_eval_row = 7;
        assert!(p.validate(&sig).is_err());
        let mut p = TilingParams::untiled(&sig, 1, 1);
        p.t_quad = 3;
        assert!(p.validate(&sig).is_err(), "T_e_r and T_q_c exceed T_Q");
        let mut p = TilingParams::untiled(&sig, 1, 1);
        p.t_eval_col.push(1);
        assert!(p.validate(&sig).is_err());
        let mut p = TilingParams::untiled(&sig, 1, 1);
        p.n_wi = 0;
        assert!(p.validate(&sig).is_err());
    }

    #[test]
    fn schedule_serde_shape() {
        let sig = one_space(3, 1, 1, 2);
        let s = Schedule::Mlt(TilingParams::untiled(&sig, 32, 1));
        let y = serde_yaml::to_string(&s).unwrap();
        assert!(y.starts_with("kind: mlt\n"));
        assert_eq!(serde_yaml::from_str::<Schedule>(&y).unwrap(), s);
        assert_eq!(serde_yaml::from_str::<Schedule>("kind: scpt").unwrap(), Schedule::Scpt);
    }
}
