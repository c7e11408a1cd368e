use num_rational::Ratio;
use serde::{Deserialize, Serialize};

use crate::form::{reference_flop_count, FormSignature};
use crate::perf::{access_words, reference_words_per_workgroup};
use crate::qoi::{cdiv, eta_simd, qoi_report, ratio_str, QoiError, Schedule};

use super::SimTrace;

/// Closed-form launch totals that a trace must reproduce exactly.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExpectedCounters {
    pub barriers_per_workgroup: u64,
    pub flops_matvec: u64,
    pub flops_performed: u64,
    pub local_words_highwater: u64,
    pub gather: u64,
    pub scatter: u64,
    pub reference: u64,
    pub local_eval_read: u64,
    pub local_eval_write: u64,
    pub local_quad_read: u64,
    pub eta_simd: Ratio<u64>,
}

pub fn expected_counters(sig: &FormSignature, s: &Schedule, n_cells: usize) -> Result<ExpectedCounters, QoiError> {
    let n = n_cells as u64;
    let qoi = qoi_report(sig, s)?;
    let ops = reference_flop_count(sig)?;
    Ok(match s {
        Schedule::Scpt => {
            let dofs: usize = sig.trial_spaces().map(|t| t.n * t.gather_width).sum();
            ExpectedCounters {
                barriers_per_workgroup: 0,
                flops_matvec: n * ops,
                flops_performed: n * ops,
                local_words_highwater: 0,
                gather: n * dofs as u64,
                scatter: n * sig.n_test as u64,
                reference: n * reference_words_per_workgroup(sig),
                local_eval_read: 0,
                local_eval_write: 0,
                local_quad_read: 0,
                eta_simd: Ratio::from_integer(1),
            }
        }
        Schedule::Mlt(p) => {
            let w = access_words(sig, p);
            let n_wg = cdiv(n_cells, p.n_cells_wg) as u64;
            let reference = w.m_g_ref * Ratio::from_integer(n_wg * p.n_cells_wg as u64);
            ExpectedCounters {
                barriers_per_workgroup: qoi.n_sync,
                flops_matvec: n * qoi.ops_usable,
                flops_performed: n * qoi.ops_performed,
                local_words_highwater: qoi.l_words,
                gather: n * w.m_g_gather,
                scatter: n * w.m_g_scatter,
                reference: reference.to_integer(),
                local_eval_read: n * w.m_l_eval_read,
                local_eval_write: n * w.m_l_eval_write,
                local_quad_read: n * w.m_l_quad_read,
                eta_simd: qoi.eta_simd,
            }
        }
    })
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Check {
    pub quantity: String,
    pub expected: String,
    pub actual: String,
    pub pass: bool,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConformanceReport {
    pub checks: Vec<Check>,
}

impl ConformanceReport {
    pub fn all_pass(&self) -> bool {
        self.checks.iter().all(|c| c.pass)
    }

    pub fn failures(&self) -> Vec<&Check> {
        self.checks.iter().filter(|c| !c.pass).collect()
    }
}

/// Compares every counter of `trace` to its closed form.
pub fn census(trace: &SimTrace, sig: &FormSignature) -> Result<ConformanceReport, QoiError> {
    Ok(census_against(trace, &expected_counters(sig, &trace.schedule, trace.n_cells)?))
}

pub fn census_against(trace: &SimTrace, want: &ExpectedCounters) -> ConformanceReport {
    let a = &trace.access;
    let ints = [
        ("barriers_per_workgroup", want.barriers_per_workgroup, trace.barriers_per_workgroup),
        ("flops_usable", want.flops_matvec, trace.flops_matvec),
        ("flops_performed", want.flops_performed, trace.flops_matvec + trace.flops_masked_padding),
        ("local_words_highwater", want.local_words_highwater, trace.local_words_highwater),
        ("global_gather", want.gather, a.gather),
        ("global_scatter", want.scatter, a.scatter),
        ("global_reference", want.reference, a.reference),
        ("local_eval_read", want.local_eval_read, a.local_eval_read),
        ("local_eval_write", want.local_eval_write, a.local_eval_write),
        ("local_quad_read", want.local_quad_read, a.local_quad_read),
    ];
    let mut checks: Vec<Check> = ints
        .into_iter()
        .map(|(q, e, got)| Check { quantity: q.into(), expected: e.to_string(), actual: got.to_string(), pass: e == got })
        .collect();
    let lanes = trace.lanes_per_workgroup;
    let simd = if lanes == 0 { Ratio::from_integer(0) } else { eta_simd(lanes as usize, 1) };
    checks.push(Check {
        quantity: "eta_simd".into(),
        expected: ratio_str(want.eta_simd),
        actual: ratio_str(simd),
        pass: simd == want.eta_simd,
    });
    ConformanceReport { checks }
}
