//! Deterministic CPU emulation of the two kernel schedules with lock-step
//! work-group semantics and exact counters.

mod census;
mod mlt;
mod plan;
mod scpt;

use num_rational::Ratio;
use serde::{Deserialize, Serialize};

use crate::form::{FormError, ProblemInstance, Stage};
use crate::qoi::{QoiError, Schedule};

pub use census::{census, census_against, expected_counters, Check, ConformanceReport, ExpectedCounters};
pub use mlt::run_mlt;
pub use plan::{build_plan, split, BarrierSite, QuadTile, SchedulePlan, SpacePlan, Tile};
pub use scpt::run_scpt;

#[derive(Debug, thiserror::Error)]
pub enum SimError {
    #[error("non-finite value in cell {cell} during {stage}")]
    NonFinite { cell: usize, stage: Stage },
    #[error("local memory access at word {index} outside the {size}-word arena")]
    LocalOutOfBounds { index: usize, size: usize },
    #[error("data race on local word {word}: lanes {first} and {second} without an intervening barrier")]
    DataRace { word: usize, first: u32, second: u32 },
    #[error("work-group {wg} executed {got} barriers, expected {want}")]
    BarrierDivergence { wg: usize, got: u64, want: u64 },
    #[error("plan does not match the instance signature")]
    PlanMismatch,
    #[error(transparent)]
    Qoi(#[from] QoiError),
    #[error(transparent)]
    Form(#[from] FormError),
}

/// Access counts by array role, summed over the whole launch.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct AccessCounters {
    pub gather: u64,
    /// Affine coordinate gathers, kept apart from trial-space gathers.
    pub coord_gather: u64,
    pub scatter: u64,
    pub reference: u64,
    pub local_eval_read: u64,
    pub local_eval_write: u64,
    pub local_quad_read: u64,
    /// Prefetch stores into buffer B.
    pub local_prefetch_write: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SiteCount {
    pub site: BarrierSite,
    pub count: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SimTrace {
    pub schedule: Schedule,
    pub n_cells: usize,
    pub n_workgroups: usize,
    pub output: Vec<f64>,
    pub barriers_per_workgroup: u64,
    /// Barrier executions of one work-group by static site.
    pub barriers_by_site: Vec<SiteCount>,
    /// Matvec FLOPs of unmasked lanes of live cells.
    pub flops_matvec: u64,
    /// FLOP slots of masked lanes of live cells.
    pub flops_masked_padding: u64,
    /// FLOP slots spent by work-items whose cell index is past the mesh.
    pub flops_inactive_cells: u64,
    pub flops_pointwise: u64,
    pub local_words_highwater: u64,
    pub access: AccessCounters,
    /// Work-items bound to a live cell.
    pub lanes_active: u64,
    /// Lanes of all launched sub-groups.
    pub lanes_total: u64,
    pub lanes_per_workgroup: u64,
    pub masked_lane_fraction: Ratio<u64>,
}

/// Runs `schedule` on `p`.
pub fn simulate(p: &ProblemInstance, schedule: &Schedule) -> Result<SimTrace, SimError> {
    match schedule {
        Schedule::Scpt => run_scpt(p),
        Schedule::Mlt(params) => run_mlt(p, &build_plan(&p.signature, params)?),
    }
}

const NO_LANE: u32 = u32::MAX;
const MANY_LANES: u32 = u32::MAX - 1;

#[derive(Clone, Copy)]
struct Shadow {
    region: u64,
    writer: u32,
    reader: u32,
}

/// Word-addressed local memory with per-region race detection.
struct Arena {
    data: Vec<f64>,
    shadow: Vec<Shadow>,
    region: u64,
    highwater: usize,
}

impl Arena {
    fn new(size: usize) -> Self {
        Arena {
            data: vec![0.0; size],
            shadow: vec![Shadow { region: 0, writer: NO_LANE, reader: NO_LANE }; size],
            region: 1,
            highwater: 0,
        }
    }

    fn touch(&mut self, idx: usize) -> Result<&mut Shadow, SimError> {
        if idx >= self.data.len() {
            return Err(SimError::LocalOutOfBounds { index: idx, size: self.data.len() });
        }
        self.highwater = self.highwater.max(idx + 1);
        let s = &mut self.shadow[idx];
        if s.region != self.region {
            *s = Shadow { region: self.region, writer: NO_LANE, reader: NO_LANE };
        }
        Ok(s)
    }

    fn write(&mut self, lane: u32, idx: usize, v: f64) -> Result<(), SimError> {
        let s = self.touch(idx)?;
        for other in [s.writer, s.reader] {
            if other != NO_LANE && other != lane {
                return Err(SimError::DataRace { word: idx, first: other, second: lane });
            }
        }
        s.writer = lane;
        self.data[idx] = v;
        Ok(())
    }

    fn read(&mut self, lane: u32, idx: usize) -> Result<f64, SimError> {
        let s = self.touch(idx)?;
        if s.writer != NO_LANE && s.writer != lane {
            return Err(SimError::DataRace { word: idx, first: s.writer, second: lane });
        }
        s.reader = match s.reader {
            NO_LANE => lane,
            r if r == lane => r,
            _ => MANY_LANES,
        };
        Ok(self.data[idx])
    }

    fn barrier(&mut self) {
        self.region += 1;
    }
}

/// Distinct-per-scope tally: `first(i, scope)` is true once per scope.
struct Seen {
    stamps: Vec<u64>,
}

impl Seen {
    fn new(size: usize) -> Self {
        Seen { stamps: vec![0; size] }
    }

    fn first(&mut self, idx: usize, scope: u64) -> bool {
        let s = &mut self.stamps[idx];
        if *s == scope {
            false
        } else {
            *s = scope;
            true
        }
    }
}

fn check_finite(cell: usize, stage: Stage, vals: &[f64]) -> Result<(), SimError> {
    if vals.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(SimError::NonFinite { cell, stage })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn arena_detects_cross_lane_conflicts() {
        let mut a = Arena::new(4);
        a.write(0, 1, 2.0).unwrap();
        assert_eq!(a.read(0, 1).unwrap(), 2.0);
        assert!(matches!(a.read(1, 1), Err(SimError::DataRace { .. })));
        a.barrier();
        assert_eq!(a.read(1, 1).unwrap(), 2.0);
        a.read(2, 1).unwrap();
        assert!(a.write(1, 1, 0.0).is_err());
        assert!(matches!(a.write(0, 4, 0.0), Err(SimError::LocalOutOfBounds { index: 4, size: 4 })));
        assert_eq!(a.highwater, 2);
    }

    #[test]
    fn seen_counts_once_per_scope() {
        let mut s = Seen::new(2);
        assert!(s.first(0, 1));
        assert!(!s.first(0, 1));
        assert!(s.first(0, 2));
    }
}
