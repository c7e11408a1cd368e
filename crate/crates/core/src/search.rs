//! Enumeration of the tiling space, cost-model ranking and b-best tuning.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use num_rational::Ratio;
use rayon::prelude::*;
use serde::{Deserialize, Deserializer, Serialize, Serializer};
use serde_json::{json, Value};

use crate::form::{reference_action, reference_flop_count, FormError, FormSignature, ProblemInstance};
use crate::perf::{
    access_words, estimate, modeled_bandwidths, residency, time_per_cell, CostEstimate, DeviceSpec, PerfError,
};
use crate::qoi::{eta_simd, qoi_report, ratio_f64, ratio_str, QoIReport, QoiError, Schedule, TilingParams};
use crate::sim::{census, simulate, ConformanceReport, SimError, SimTrace};

#[derive(Debug, thiserror::Error)]
pub enum SearchError {
    #[error("search space is empty (no feasible multi-level tiling)")]
    EmptySpace,
    #[error("invalid search config: {0}")]
    Config(String),
    #[error("candidate {candidate} failed verification: {detail}")]
    Verification { candidate: String, detail: String },
    #[error("candidate {candidate} reported invalid time {seconds}")]
    InvalidTiming { candidate: String, seconds: f64 },
    #[error("candidate {candidate}: {source}")]
    Executor { candidate: String, source: SimError },
    #[error(transparent)]
    Perf(#[from] PerfError),
    #[error(transparent)]
    Qoi(#[from] QoiError),
    #[error(transparent)]
    Form(#[from] FormError),
}

/// Parses `0.97`, `97/100` or `1` into an exact ratio.
pub fn parse_ratio(s: &str) -> Result<Ratio<u64>, String> {
    let s = s.trim();
    let bad = || format!("'{s}' is not a ratio");
    if let Some((n, d)) = s.split_once('/') {
        let n: u64 = n.trim().parse().map_err(|_| bad())?;
        let d: u64 = d.trim().parse().map_err(|_| bad())?;
        if d == 0 {
            return Err(bad());
        }
        return Ok(Ratio::new(n, d));
    }
    let (int, frac) = s.split_once('.').unwrap_or((s, ""));
    if frac.len() > 18 || !frac.chars().all(|c| c.is_ascii_digit()) {
        return Err(bad());
    }
    let int: u64 = if int.is_empty() { 0 } else { int.parse().map_err(|_| bad())? };
    let den = 10u64.pow(frac.len() as u32);
    let num: u64 = if frac.is_empty() { 0 } else { frac.parse().map_err(|_| bad())? };
    Ok(Ratio::from_integer(int) + Ratio::new(num, den))
}

fn ser_ratio<S: Serializer>(r: &Ratio<u64>, s: S) -> Result<S::Ok, S::Error> {
    s.serialize_str(&ratio_str(*r))
}

fn de_ratio<'de, D: Deserializer<'de>>(d: D) -> Result<Ratio<u64>, D::Error> {
    #[derive(Deserialize)]
    #[serde(untagged)]
    enum Text {
        S(String),
        F(f64),
    }
    let s = match Text::deserialize(d)? {
        Text::S(s) => s,
        Text::F(f) => format!("{f}"),
    };
    parse_ratio(&s).map_err(serde::de::Error::custom)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SearchConfig {
    #[serde(serialize_with = "ser_ratio", deserialize_with = "de_ratio")]
    pub alias_floor: Ratio<u64>,
    #[serde(serialize_with = "ser_ratio", deserialize_with = "de_ratio")]
    pub simd_floor: Ratio<u64>,
    /// Upper bound on `N_c·N_WI`.
    pub wg_cap: usize,
    pub b: usize,
    /// Enumeration caps for `N_c` and `N_WI`; `None` means `wg_cap`.
    pub max_n_c: Option<usize>,
    pub max_n_wi: Option<usize>,
    /// Cells of the modeled launch used for aggregate times.
    pub n_cells: u64,
}

impl Default for SearchConfig {
    fn default() -> Self {
        SearchConfig {
            alias_floor: Ratio::new(4, 5),
            simd_floor: Ratio::new(97, 100),
            wg_cap: 256,
            b: 9,
            max_n_c: None,
            max_n_wi: None,
            n_cells: 500_000,
        }
    }
}

impl SearchConfig {
    pub fn validate(&self) -> Result<(), SearchError> {
        let zero = Ratio::from_integer(0);
        let one = Ratio::from_integer(1);
        for (name, f) in [("alias_floor", self.alias_floor), ("simd_floor", self.simd_floor)] {
            if f <= zero || f > one {
                return Err(SearchError::Config(format!("{name} must lie in (0, 1]")));
            }
        }
        if self.wg_cap == 0 || self.b == 0 || self.n_cells == 0 {
            return Err(SearchError::Config("wg_cap, b and n_cells must be positive".into()));
        }
        if self.max_n_c == Some(0) || self.max_n_wi == Some(0) {
            return Err(SearchError::Config("N_c/N_WI caps must be positive".into()));
        }
        Ok(())
    }
}

/// `{⌈n/k⌉ : k = 1..n}`, deduplicated, descending.
pub fn ceil_divisor_set(n: usize) -> Vec<usize> {
    let mut v: Vec<usize> = (1..=n).map(|k| n.div_ceil(k)).collect();
    v.dedup();
    v
}

/// Tile sizes of one candidate, without the work-group shape.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord)]
pub struct TileChoice {
    pub t_quad: usize,
    pub t_eval_row: usize,
    pub t_eval_col: Vec<usize>,
    pub t_quad_row: usize,
    pub t_quad_col: usize,
}

impl TileChoice {
    pub fn with_shape(&self, n_c: usize, n_wi: usize) -> TilingParams {
        TilingParams {
            t_quad: self.t_quad,
            t_eval_row: self.t_eval_row,
            t_eval_col: self.t_eval_col.clone(),
            t_quad_row: self.t_quad_row,
            t_quad_col: self.t_quad_col,
            n_cells_wg: n_c,
            n_wi,
        }
    }
}

/// The enumerated space as a product of admissible tile choices and
/// admissible work-group shapes, in lexicographic order.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SearchSpace {
    pub tiles: Vec<TileChoice>,
    pub pairs: Vec<(usize, usize)>,
}

impl SearchSpace {
    pub fn len(&self) -> usize {
        self.tiles.len() * self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn get(&self, i: usize) -> TilingParams {
        let (n_c, n_wi) = self.pairs[i % self.pairs.len()];
        self.tiles[i / self.pairs.len()].with_shape(n_c, n_wi)
    }

    pub fn iter(&self) -> impl Iterator<Item = TilingParams> + '_ {
        self.tiles
            .iter()
            .flat_map(move |t| self.pairs.iter().map(move |&(c, w)| t.with_shape(c, w)))
    }
}

/// `(N_c, N_WI)` pairs meeting the SIMD-efficiency floor and the size cap.
pub fn workgroup_shapes(cfg: &SearchConfig) -> Vec<(usize, usize)> {
    let max_c = cfg.max_n_c.unwrap_or(cfg.wg_cap).min(cfg.wg_cap);
    let max_w = cfg.max_n_wi.unwrap_or(cfg.wg_cap).min(cfg.wg_cap);
    let mut v = Vec::new();
    for n_c in 1..=max_c {
        for n_wi in 1..=max_w {
            if n_c * n_wi <= cfg.wg_cap && eta_simd(n_c, n_wi) >= cfg.simd_floor {
                v.push((n_c, n_wi));
            }
        }
    }
    v
}

/// Tile choices from the ceil-divisor sets, filtered by the aliasing floor.
pub fn tile_choices(sig: &FormSignature, cfg: &SearchConfig) -> Vec<TileChoice> {
    let cols: Vec<Vec<usize>> = sig.trial_spaces().map(|s| ceil_divisor_set(s.n)).collect();
    let mut col_combos: Vec<Vec<usize>> = vec![Vec::new()];
    for set in &cols {
        col_combos = col_combos
            .into_iter()
            .flat_map(|prefix| {
                set.iter().map(move |&c| {
                    let mut v = prefix.clone();
                    v.push(c);
                    v
                })
            })
            .collect();
    }
    let quad_rows = ceil_divisor_set(sig.n_test);
    let mut out = Vec::new();
    for t_quad in ceil_divisor_set(sig.n_quad) {
        let inner = ceil_divisor_set(t_quad);
        for &t_eval_row in &inner {
            for t_eval_col in &col_combos {
                for &t_quad_row in &quad_rows {
                    for &t_quad_col in &inner {
                        let t = TileChoice { t_quad, t_eval_row, t_eval_col: t_eval_col.clone(), t_quad_row, t_quad_col };
                        if t.with_shape(1, 1).eta_alias(sig) >= cfg.alias_floor {
                            out.push(t);
                        }
                    }
                }
            }
        }
    }
    out.sort();
    out
}

pub fn enumerate(sig: &FormSignature, cfg: &SearchConfig) -> Result<SearchSpace, SearchError> {
    sig.validate()?;
    cfg.validate()?;
    let pairs = workgroup_shapes(cfg);
    let tiles = if pairs.is_empty() { Vec::new() } else { tile_choices(sig, cfg) };
    Ok(SearchSpace { tiles, pairs })
}

pub fn cardinality(sig: &FormSignature, cfg: &SearchConfig) -> Result<u64, SearchError> {
    Ok(enumerate(sig, cfg)?.len() as u64)
}

/// Which of the four constraints `p` violates, by number.
pub fn violated_constraints(sig: &FormSignature, p: &TilingParams, cfg: &SearchConfig) -> Vec<u8> {
    let mut v = Vec::new();
    let member = |x: usize, n: usize| ceil_divisor_set(n).contains(&x);
    let c1 = p.validate(sig).is_ok()
        && member(p.t_quad, sig.n_quad)
        && member(p.t_eval_row, p.t_quad)
        && sig.trial_spaces().zip(&p.t_eval_col).all(|(s, &t)| member(t, s.n))
        && member(p.t_quad_row, sig.n_test)
        && member(p.t_quad_col, p.t_quad);
    if !c1 {
        v.push(1);
        return v;
    }
    if p.eta_alias(sig) < cfg.alias_floor {
        v.push(2);
    }
    if p.eta_simd() < cfg.simd_floor {
        v.push(3);
    }
    if p.n_cells_wg * p.n_wi > cfg.wg_cap {
        v.push(4);
    }
    v
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Candidate {
    pub schedule: Schedule,
    pub qoi: QoIReport,
    /// `None` for the single-cell-per-work-item schedule, which the cost
    /// model does not cover.
    pub cost: Option<CostEstimate>,
}

impl Candidate {
    pub fn label(&self) -> String {
        self.schedule.label()
    }

    pub fn to_record(&self, rank: usize) -> Vec<(&'static str, Value)> {
        let mut v = vec![("rank", json!(rank)), ("schedule", json!(self.label()))];
        v.extend(self.qoi.to_record());
        match &self.cost {
            Some(c) => v.extend(c.to_record()),
            None => v.extend(CostEstimate::RECORD_KEYS.iter().map(|k| (*k, Value::Null))),
        }
        v
    }
}

#[derive(Clone, Copy, PartialEq)]
struct Key(f64, usize);

impl Eq for Key {}

impl Ord for Key {
    fn cmp(&self, o: &Self) -> Ordering {
        self.0.total_cmp(&o.0).then(self.1.cmp(&o.1))
    }
}

impl PartialOrd for Key {
    fn partial_cmp(&self, o: &Self) -> Option<Ordering> {
        Some(self.cmp(o))
    }
}

/// Modeled per-cell time, or `None` when the candidate cannot launch.
fn per_cell_time(sig: &FormSignature, p: &TilingParams, ops_usable: u64, dev: &DeviceSpec) -> Option<f64> {
    let l = p.local_mem_words(sig);
    let eta_pred = Ratio::new(ops_usable, p.ops_performed(sig));
    let res = residency(p.n_cells_wg, p.n_wi, l, sig.word_bytes, eta_pred, dev).ok()?;
    let w = access_words(sig, p);
    Some(time_per_cell(ratio_f64(w.global()), w.local() as f64, sig.word_bytes, modeled_bandwidths(res.sg_reside_eff, dev)))
}

/// The `b` cheapest feasible candidates by modeled time (ties broken by
/// lexicographic parameter order), followed by the single-cell schedule.
pub fn rank(sig: &FormSignature, dev: &DeviceSpec, cfg: &SearchConfig) -> Result<Vec<Candidate>, SearchError> {
    dev.validate()?;
    let space = enumerate(sig, cfg)?;
    let ops_usable = reference_flop_count(sig)?;
    let b = cfg.b;
    const CHUNK: usize = 4096;
    let n_chunks = space.len().div_ceil(CHUNK);
    let mut best: Vec<Key> = (0..n_chunks)
        .into_par_iter()
        .map(|c| {
            let mut heap: BinaryHeap<Key> = BinaryHeap::with_capacity(b + 1);
            for i in c * CHUNK..((c + 1) * CHUNK).min(space.len()) {
                let Some(t) = per_cell_time(sig, &space.get(i), ops_usable, dev) else { continue };
                let k = Key(t, i);
                if heap.len() < b {
                    heap.push(k);
                } else if k < *heap.peek().unwrap() {
                    heap.pop();
                    heap.push(k);
                }
            }
            heap.into_vec()
        })
        .flatten()
        .collect();
    if best.is_empty() {
        return Err(SearchError::EmptySpace);
    }
    best.sort();
    best.truncate(b);
    let mut out = Vec::with_capacity(best.len() + 1);
    for k in best {
        let s = Schedule::Mlt(space.get(k.1));
        let qoi = qoi_report(sig, &s)?;
        let cost = estimate(sig, s.tiling()?, &qoi, dev, cfg.n_cells)?;
        out.push(Candidate { schedule: s, qoi, cost: Some(cost) });
    }
    out.push(Candidate { schedule: Schedule::Scpt, qoi: qoi_report(sig, &Schedule::Scpt)?, cost: None });
    Ok(out)
}

/// Result of running one candidate.
#[derive(Clone, Debug, PartialEq)]
pub struct Execution {
    pub output: Vec<f64>,
    /// Measured wall time, when the executor measures.
    pub seconds: Option<f64>,
    pub trace: Option<SimTrace>,
}

/// Runs a schedule on an instance.
pub trait Executor: Sync {
    fn execute(&self, p: &ProblemInstance, s: &Schedule) -> Result<Execution, SimError>;
}

/// The CPU simulator; reports counters, no timings.
pub struct SimulatorExecutor;

impl Executor for SimulatorExecutor {
    fn execute(&self, p: &ProblemInstance, s: &Schedule) -> Result<Execution, SimError> {
        let t = simulate(p, s)?;
        Ok(Execution { output: t.output.clone(), seconds: None, trace: Some(t) })
    }
}

/// Largest `|x − r|/max(|r|, 1e-30)` over entries.
pub fn max_relative_error(x: &[f64], r: &[f64]) -> f64 {
    if x.len() != r.len() {
        return f64::INFINITY;
    }
    x.iter()
        .zip(r)
        .map(|(a, b)| {
            let e = (a - b).abs() / b.abs().max(1e-30);
            if e.is_nan() {
                f64::INFINITY
            } else {
                e
            }
        })
        .fold(0.0, f64::max)
}

pub const VERIFY_TOLERANCE: f64 = 1e-10;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Verification {
    pub rank: usize,
    pub schedule: Schedule,
    pub max_rel_error: f64,
    pub census: Option<ConformanceReport>,
    pub measured_seconds: Option<f64>,
    /// Selection metric in seconds; `None` when the candidate cannot be
    /// compared (unmodeled and unmeasured).
    pub metric: Option<f64>,
}

impl Verification {
    pub fn to_record(&self) -> Vec<(&'static str, Value)> {
        vec![
            ("rank", json!(self.rank)),
            ("schedule", json!(self.schedule.label())),
            ("max_rel_error", json!(self.max_rel_error)),
            ("census", json!(self.census.as_ref().map(|c| if c.all_pass() { "pass" } else { "fail" }))),
            ("measured_seconds", json!(self.measured_seconds)),
            ("metric", json!(self.metric)),
        ]
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct TuneResult {
    pub winner: Candidate,
    pub candidates: Vec<Candidate>,
    pub records: Vec<Verification>,
}

/// Modeled time recomputed from a verified trace's counters, scaled to
/// `n_cells`.
pub fn trace_time(sig: &FormSignature, trace: &SimTrace, qoi: &QoIReport, dev: &DeviceSpec, n_cells: u64) -> Result<f64, SearchError> {
    let p = trace.schedule.tiling()?;
    let res = residency(p.n_cells_wg, p.n_wi, trace.local_words_highwater, sig.word_bytes, qoi.eta_pred, dev)?;
    let a = &trace.access;
    let cells = trace.n_cells as f64;
    let global = (a.gather + a.scatter + a.reference) as f64 / cells;
    let local = (a.local_eval_read + a.local_eval_write + a.local_quad_read) as f64 / cells;
    Ok(time_per_cell(global, local, sig.word_bytes, modeled_bandwidths(res.sg_reside_eff, dev)) * n_cells as f64)
}

pub fn tune(p: &ProblemInstance, dev: &DeviceSpec, cfg: &SearchConfig) -> Result<TuneResult, SearchError> {
    tune_with(p, dev, cfg, &SimulatorExecutor)
}

/// Executes every ranked candidate, verifies it against the reference
/// action and picks the one with the smallest metric.
pub fn tune_with(p: &ProblemInstance, dev: &DeviceSpec, cfg: &SearchConfig, exec: &dyn Executor) -> Result<TuneResult, SearchError> {
    let sig = &p.signature;
    let candidates = rank(sig, dev, cfg)?;
    let reference = reference_action(p)?;
    let records = candidates
        .par_iter()
        .enumerate()
        .map(|(i, c)| verify(p, dev, cfg, exec, &reference, i + 1, c))
        .collect::<Result<Vec<_>, _>>()?;
    let best = records
        .iter()
        .enumerate()
        .filter_map(|(i, r)| r.metric.map(|m| (m, i)))
        .min_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)))
        .map(|x| x.1)
        .ok_or(SearchError::EmptySpace)?;
    Ok(TuneResult { winner: candidates[best].clone(), candidates, records })
}

fn verify(
    p: &ProblemInstance,
    dev: &DeviceSpec,
    cfg: &SearchConfig,
    exec: &dyn Executor,
    reference: &[f64],
    rank: usize,
    c: &Candidate,
) -> Result<Verification, SearchError> {
    let label = c.label();
    let run = exec
        .execute(p, &c.schedule)
        .map_err(|source| SearchError::Executor { candidate: label.clone(), source })?;
    let err = max_relative_error(&run.output, reference);
    if !(err <= VERIFY_TOLERANCE) {
        return Err(SearchError::Verification {
            candidate: label,
            detail: format!("max relative error {err:e} exceeds {VERIFY_TOLERANCE:e}"),
        });
    }
    if let Some(s) = run.seconds {
        if !(s.is_finite() && s >= 0.0) {
            return Err(SearchError::InvalidTiming { candidate: label, seconds: s });
        }
    }
    let census = match &run.trace {
        Some(t) => {
            let rep = census(t, &p.signature)?;
            if let Some(f) = rep.failures().first() {
                return Err(SearchError::Verification {
                    candidate: label,
                    detail: format!("{} expected {} counted {}", f.quantity, f.expected, f.actual),
                });
            }
            Some(rep)
        }
        None => None,
    };
    let metric = match (run.seconds, &run.trace, &c.schedule) {
        (Some(s), _, _) => Some(s),
        (None, Some(t), Schedule::Mlt(_)) => Some(trace_time(&p.signature, t, &c.qoi, dev, cfg.n_cells)?),
        _ => None,
    };
    Ok(Verification { rank, schedule: c.schedule.clone(), max_rel_error: err, census, measured_seconds: run.seconds, metric })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::form::{preset_map, preset_signature, synthesize_with_map, Operator, ScalarSpace};

    fn tiny(n: usize, q: usize) -> FormSignature {
        FormSignature {
            dim: 2,
            scalar_spaces: vec![ScalarSpace { n, n_deriv: 1 }],
            vector_spaces: vec![],
            n_test: n,
            n_deriv_test: 1,
            n_quad: q,
            n_coord: 3,
            affine: true,
            word_bytes: 8,
        }
    }

    #[test]
    fn ceil_divisor_examples() {
        assert_eq!(ceil_divisor_set(6), vec![6, 3, 2, 1]);
        assert_eq!(ceil_divisor_set(8), vec![8, 4, 3, 2, 1]);
        assert_eq!(ceil_divisor_set(1), vec![1]);
    }

    #[test]
    fn ratio_parsing() {
        assert_eq!(parse_ratio("0.97").unwrap(), Ratio::new(97, 100));
        assert_eq!(parse_ratio("4/5").unwrap(), Ratio::new(4, 5));
        assert_eq!(parse_ratio("1").unwrap(), Ratio::from_integer(1));
        assert!(parse_ratio("x").is_err());
        assert!(parse_ratio("1/0").is_err());
        let cfg: SearchConfig = serde_yaml::from_str("simd_floor: 0.9\nb: 3\n").unwrap();
        assert_eq!((cfg.simd_floor, cfg.b), (Ratio::new(9, 10), 3));
        assert!(serde_yaml::from_str::<SearchConfig>("bogus: 1\n").is_err());
    }

    #[test]
    fn unit_signature_counts_only_shapes() {
        let sig = tiny(1, 1);
        let cfg = SearchConfig::default();
        let s = enumerate(&sig, &cfg).unwrap();
        assert_eq!(s.tiles.len(), 1);
        assert_eq!(s.len(), workgroup_shapes(&cfg).len());
    }

    #[test]
    fn fig4_tile_membership() {
        let sig = tiny(8, 8);
        let cfg = SearchConfig { max_n_c: Some(32), max_n_wi: Some(1), ..Default::default() };
        let s = enumerate(&sig, &cfg).unwrap();
        assert!(s.tiles.iter().any(|t| t.t_eval_row == 4 && t.t_eval_col == vec![4]));
        assert!(!s.tiles.iter().any(|t| t.t_eval_row == 7 || t.t_eval_col == vec![7]));
    }

    #[test]
    fn stream_is_sorted_and_sound() {
        let sig = tiny(6, 6);
        let cfg = SearchConfig { max_n_c: Some(64), max_n_wi: Some(4), ..Default::default() };
        let s = enumerate(&sig, &cfg).unwrap();
        let all: Vec<_> = s.iter().collect();
        assert!(all.windows(2).all(|w| w[0] < w[1]));
        assert!(all.iter().all(|p| violated_constraints(&sig, p, &cfg).is_empty()));
        assert_eq!(cardinality(&sig, &cfg).unwrap(), all.len() as u64);
        assert_eq!(s.get(5), all[5]);
    }

    #[test]
    fn raising_simd_floor_shrinks_space() {
        let sig = tiny(6, 6);
        let lo = SearchConfig { simd_floor: Ratio::new(9, 10), ..Default::default() };
        let hi = SearchConfig { simd_floor: Ratio::from_integer(1), ..Default::default() };
        assert!(cardinality(&sig, &hi).unwrap() <= cardinality(&sig, &lo).unwrap());
    }

    #[test]
    fn rank_shape_and_determinism() {
        let sig = preset_signature(Operator::Laplace, 2, 2, 6).unwrap();
        let cfg = SearchConfig::default();
        let a = rank(&sig, &DeviceSpec::titan_v(), &cfg).unwrap();
        assert_eq!(a.len(), 10);
        assert_eq!(a.iter().filter(|c| c.schedule == Schedule::Scpt).count(), 1);
        let t: Vec<f64> = a.iter().filter_map(|c| c.cost.as_ref().map(|c| c.t_heur)).collect();
        assert!(t.windows(2).all(|w| w[0] <= w[1]));
        assert_eq!(a, rank(&sig, &DeviceSpec::titan_v(), &cfg).unwrap());
    }

    #[test]
    fn tune_b1_runs_two_candidates() {
        let sig = preset_signature(Operator::Mass, 2, 2, 6).unwrap();
        let p = synthesize_with_map(&sig, preset_map(Operator::Mass, &sig).unwrap(), 12, 1).unwrap();
        let cfg = SearchConfig { b: 1, ..Default::default() };
        let r = tune(&p, &DeviceSpec::k40(), &cfg).unwrap();
        assert_eq!(r.records.len(), 2);
        assert!(matches!(r.winner.schedule, Schedule::Mlt(_)));
        assert!(r.records.iter().all(|v| v.max_rel_error <= VERIFY_TOLERANCE));
    }

    struct NanTimer;

    impl Executor for NanTimer {
        fn execute(&self, p: &ProblemInstance, s: &Schedule) -> Result<Execution, SimError> {
            let t = simulate(p, s)?;
            Ok(Execution { output: t.output, seconds: Some(f64::NAN), trace: None })
        }
    }

    struct Wrong;

    impl Executor for Wrong {
        fn execute(&self, p: &ProblemInstance, _: &Schedule) -> Result<Execution, SimError> {
            Ok(Execution { output: vec![1.0; p.n_out], seconds: Some(1.0), trace: None })
        }
    }

    #[test]
    fn faulty_executors_are_rejected() {
        let sig = preset_signature(Operator::Mass, 2, 1, 3).unwrap();
        let p = synthesize_with_map(&sig, preset_map(Operator::Mass, &sig).unwrap(), 4, 1).unwrap();
        let cfg = SearchConfig { b: 1, ..Default::default() };
        assert!(matches!(tune_with(&p, &DeviceSpec::k40(), &cfg, &NanTimer), Err(SearchError::InvalidTiming { .. })));
        assert!(matches!(tune_with(&p, &DeviceSpec::k40(), &cfg, &Wrong), Err(SearchError::Verification { .. })));
    }
}
