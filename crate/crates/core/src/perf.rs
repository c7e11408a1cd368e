//! Device descriptions, the bandwidth-driven heuristic cost model and the
//! roofline model.

use std::path::{Path, PathBuf};

use num_rational::Ratio;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::form::{reference_flop_count, FormError, FormSignature};
use crate::qoi::{cdiv, qoi_report, ratio_f64, QoIReport, QoiError, Schedule, TilingParams, SUBGROUP};

/// Environment variable holding a `:`-separated list of directories searched
/// for device files named `<name>.yaml`.
pub const DEVICE_PATH_ENV: &str = "FEMTILE_DEVICE_PATH";

#[derive(Debug, thiserror::Error)]
pub enum PerfError {
    #[error("infeasible: {needed} bytes of local memory exceed the device limit of {limit}")]
    Infeasible { needed: u64, limit: u64 },
    #[error("global footprint must be positive")]
    ZeroFootprint,
    #[error("invalid device spec: {0}")]
    Device(String),
    #[error("device '{0}' is neither a preset nor a readable file")]
    UnknownDevice(String),
    #[error(transparent)]
    Qoi(#[from] QoiError),
    #[error(transparent)]
    Form(#[from] FormError),
    #[error("device file: {0}")]
    Parse(#[from] serde_yaml::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Throughput and capacity limits of one GPU.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DeviceSpec {
    #[serde(default)]
    pub name: String,
    /// GFLOP/s
    pub f_peak: f64,
    /// GB/s
    pub beta_global_peak: f64,
    /// GB/s
    pub beta_local_peak: f64,
    /// Local memory per work-group, bytes.
    pub l_max: u64,
    /// Resident work-groups per compute unit.
    pub w_max: u64,
    pub sg_sat_global: f64,
    pub sg_sat_local: f64,
    /// 32-bit registers per work-item; informational only.
    pub max_registers: u32,
}

impl DeviceSpec {
    pub fn k40() -> DeviceSpec {
        DeviceSpec {
            name: "k40".into(),
            f_peak: 1430.0,
            beta_global_peak: 288.0,
            beta_local_peak: 1000.0,
            l_max: 48 * 1024,
            w_max: 32,
            sg_sat_global: 8.0,
            sg_sat_local: 10.0,
            max_registers: 255,
        }
    }

    pub fn titan_v() -> DeviceSpec {
        DeviceSpec {
            name: "titan-v".into(),
            f_peak: 6144.0,
            beta_global_peak: 653.0,
            beta_local_peak: 13800.0,
            l_max: 96 * 1024,
            w_max: 32,
            sg_sat_global: 1.0,
            sg_sat_local: 12.0,
            max_registers: 255,
        }
    }

    pub fn preset(name: &str) -> Option<DeviceSpec> {
        match name.to_ascii_lowercase().as_str() {
            "k40" | "k40c" => Some(DeviceSpec::k40()),
            "titan-v" | "titan_v" | "titanv" => Some(DeviceSpec::titan_v()),
            _ => None,
        }
    }

    pub fn validate(&self) -> Result<(), PerfError> {
        let pos = [self.f_peak, self.beta_global_peak, self.beta_local_peak];
        if pos.iter().any(|v| !(v.is_finite() && *v > 0.0)) {
            return Err(PerfError::Device("peaks must be positive".into()));
        }
        if self.l_max == 0 || self.w_max == 0 {
            return Err(PerfError::Device("l_max and w_max must be positive".into()));
        }
        if !(self.sg_sat_global >= 1.0 && self.sg_sat_local >= 1.0) {
            return Err(PerfError::Device("saturation sub-group counts must be at least 1".into()));
        }
        Ok(())
    }

    pub fn from_yaml(text: &str) -> Result<DeviceSpec, PerfError> {
        let mut v: serde_yaml::Value = serde_yaml::from_str(text)?;
        if let Some(m) = v.as_mapping_mut() {
            if let Some(ver) = m.remove("format_version") {
                if ver.as_u64() != Some(1) {
                    return Err(PerfError::Device(format!("unsupported format_version {ver:?}")));
                }
            }
        }
        let d: DeviceSpec = serde_yaml::from_value(v)?;
        d.validate()?;
        Ok(d)
    }

    pub fn to_yaml(&self) -> String {
        format!("format_version: 1\n{}", serde_yaml::to_string(self).expect("device serializes"))
    }

    pub fn from_file(path: &Path) -> Result<DeviceSpec, PerfError> {
        let mut d = DeviceSpec::from_yaml(&std::fs::read_to_string(path)?)?;
        if d.name.is_empty() {
            d.name = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
        }
        Ok(d)
    }

    /// A preset name, a file path, or `<name>.yaml` in a directory listed in
    /// [`DEVICE_PATH_ENV`].
    pub fn resolve(spec: &str) -> Result<DeviceSpec, PerfError> {
        if let Some(d) = DeviceSpec::preset(spec) {
            return Ok(d);
        }
        let direct = PathBuf::from(spec);
        if direct.is_file() {
            return DeviceSpec::from_file(&direct);
        }
        if let Ok(dirs) = std::env::var(DEVICE_PATH_ENV) {
            for dir in std::env::split_paths(&dirs) {
                for cand in [dir.join(format!("{spec}.yaml")), dir.join(spec)] {
                    if cand.is_file() {
                        return DeviceSpec::from_file(&cand);
                    }
                }
            }
        }
        Err(PerfError::UnknownDevice(spec.into()))
    }
}

/// Per-cell word counts of the cost model.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct AccessWords {
    pub m_g_gather: u64,
    pub m_g_scatter: u64,
    /// Reference tabulations and weights, amortized over the `N_c` cells of a
    /// work-group.
    pub m_g_ref: Ratio<u64>,
    pub m_l_eval_read: u64,
    pub m_l_eval_write: u64,
    pub m_l_quad_read: u64,
}

impl AccessWords {
    pub fn global(&self) -> Ratio<u64> {
        Ratio::from_integer(self.m_g_gather + self.m_g_scatter) + self.m_g_ref
    }

    pub fn local(&self) -> u64 {
        self.m_l_eval_read + self.m_l_eval_write + self.m_l_quad_read
    }
}

/// Words read from the reference tabulations and weights by one work-group.
pub fn reference_words_per_workgroup(sig: &FormSignature) -> u64 {
    let q = sig.n_quad;
    let phi: usize = sig.trial_spaces().map(|s| s.n_deriv * s.n * q).sum();
    (phi + sig.n_deriv_test * sig.n_test * q + q) as u64
}

/// `(M_g_gather, M_g_scatter, M_g_ref)` per cell.
pub fn global_access_words(sig: &FormSignature, p: &TilingParams) -> (u64, u64, Ratio<u64>) {
    let q = sig.n_quad;
    let row_tiles = (q / p.t_quad) * cdiv(p.t_quad, p.t_eval_row) + cdiv(q % p.t_quad, p.t_eval_row);
    let dofs: usize = sig.trial_spaces().map(|s| s.n * s.gather_width).sum();
    let gather = (row_tiles * dofs) as u64;
    let scatter = (cdiv(q, p.t_quad) * sig.n_test) as u64;
    let reference = Ratio::new(reference_words_per_workgroup(sig), p.n_cells_wg as u64);
    (gather, scatter, reference)
}

/// `(M_l_eval_read, M_l_eval_write, M_l_quad_read)` per cell.
pub fn local_access_words(sig: &FormSignature) -> (u64, u64, u64) {
    let q = sig.n_quad;
    let eval_read: usize = sig.trial_spaces().map(|s| s.n_deriv * s.n * q).sum();
    let nw = sig.n_deriv_test;
    (eval_read as u64, (nw * q) as u64, (nw * q + nw * q * sig.n_test) as u64)
}

pub fn access_words(sig: &FormSignature, p: &TilingParams) -> AccessWords {
    let (m_g_gather, m_g_scatter, m_g_ref) = global_access_words(sig, p);
    let (m_l_eval_read, m_l_eval_write, m_l_quad_read) = local_access_words(sig);
    AccessWords { m_g_gather, m_g_scatter, m_g_ref, m_l_eval_read, m_l_eval_write, m_l_quad_read }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Residency {
    pub n_reside: u64,
    pub sg_reside_eff: f64,
}

/// `N_reside = ⌈N_c·N_WI/32⌉·min(⌊L_max/(L·s)⌋, W_max)` and
/// `SG_eff = η_pred·η_simd·N_reside`. `L = 0` is bounded by `W_max` alone.
pub fn residency(
    n_c: usize,
    n_wi: usize,
    l_words: u64,
    word_bytes: usize,
    eta_pred: Ratio<u64>,
    dev: &DeviceSpec,
) -> Result<Residency, PerfError> {
    let bytes = l_words * word_bytes as u64;
    if bytes > dev.l_max {
        return Err(PerfError::Infeasible { needed: bytes, limit: dev.l_max });
    }
    let groups = if bytes == 0 { dev.w_max } else { (dev.l_max / bytes).min(dev.w_max) };
    let lanes = (n_c * n_wi) as u64;
    let n_reside = lanes.div_ceil(SUBGROUP) * groups;
    let eff = eta_pred * crate::qoi::eta_simd(n_c, n_wi) * Ratio::from_integer(n_reside);
    Ok(Residency { n_reside, sg_reside_eff: ratio_f64(eff) })
}

/// Piecewise-linear bandwidths in GB/s, saturating at `SG_sat`.
pub fn modeled_bandwidths(sg_reside_eff: f64, dev: &DeviceSpec) -> (f64, f64) {
    let ramp = |peak: f64, sat: f64| peak.min(peak / sat * sg_reside_eff.max(0.0));
    (ramp(dev.beta_global_peak, dev.sg_sat_global), ramp(dev.beta_local_peak, dev.sg_sat_local))
}

/// Seconds to move `words` of `word_bytes` each at `gbps`; zero bandwidth
/// gives `+∞`.
fn transfer_seconds(words: f64, word_bytes: usize, gbps: f64) -> f64 {
    let bytes = words * word_bytes as f64;
    if bytes == 0.0 {
        0.0
    } else if gbps <= 0.0 {
        f64::INFINITY
    } else {
        bytes / (gbps * 1e9)
    }
}

/// `t = global bytes/β_global + local bytes/β_local` for one cell.
pub fn time_per_cell(global_words: f64, local_words: f64, word_bytes: usize, betas: (f64, f64)) -> f64 {
    transfer_seconds(global_words, word_bytes, betas.0) + transfer_seconds(local_words, word_bytes, betas.1)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CostEstimate {
    pub words: AccessWords,
    pub n_reside: u64,
    pub sg_reside_eff: f64,
    /// GB/s
    pub beta_global_model: f64,
    /// GB/s
    pub beta_local_model: f64,
    pub t_heur_per_cell: f64,
    pub n_cells: u64,
    /// `t_heur_per_cell · n_cells`, seconds.
    pub t_heur: f64,
}

impl CostEstimate {
    /// Keys of [`CostEstimate::to_record`], in order.
    pub const RECORD_KEYS: [&'static str; 12] = [
        "m_g_gather",
        "m_g_scatter",
        "m_g_ref",
        "m_l_eval_read",
        "m_l_eval_write",
        "m_l_quad_read",
        "n_reside",
        "sg_reside_eff",
        "beta_global_model",
        "beta_local_model",
        "t_heur_per_cell",
        "t_heur",
    ];

    pub fn to_record(&self) -> Vec<(&'static str, Value)> {
        let w = &self.words;
        vec![
            ("m_g_gather", json!(w.m_g_gather)),
            ("m_g_scatter", json!(w.m_g_scatter)),
            ("m_g_ref", json!(crate::qoi::ratio_str(w.m_g_ref))),
            ("m_l_eval_read", json!(w.m_l_eval_read)),
            ("m_l_eval_write", json!(w.m_l_eval_write)),
            ("m_l_quad_read", json!(w.m_l_quad_read)),
            ("n_reside", json!(self.n_reside)),
            ("sg_reside_eff", json!(self.sg_reside_eff)),
            ("beta_global_model", json!(self.beta_global_model)),
            ("beta_local_model", json!(self.beta_local_model)),
            ("t_heur_per_cell", json!(self.t_heur_per_cell)),
            ("t_heur", json!(self.t_heur)),
        ]
    }
}

/// Cost of a tiling whose QoIs are already known.
pub fn estimate(
    sig: &FormSignature,
    p: &TilingParams,
    qoi: &QoIReport,
    dev: &DeviceSpec,
    n_cells: u64,
) -> Result<CostEstimate, PerfError> {
    let words = access_words(sig, p);
    let res = residency(p.n_cells_wg, p.n_wi, qoi.l_words, sig.word_bytes, qoi.eta_pred, dev)?;
    let betas = modeled_bandwidths(res.sg_reside_eff, dev);
    let t = time_per_cell(ratio_f64(words.global()), words.local() as f64, sig.word_bytes, betas);
    Ok(CostEstimate {
        words,
        n_reside: res.n_reside,
        sg_reside_eff: res.sg_reside_eff,
        beta_global_model: betas.0,
        beta_local_model: betas.1,
        t_heur_per_cell: t,
        n_cells,
        t_heur: t * n_cells as f64,
    })
}

pub fn t_heur(sig: &FormSignature, s: &Schedule, dev: &DeviceSpec, n_cells: u64) -> Result<CostEstimate, PerfError> {
    let p = s.tiling()?;
    let qoi = qoi_report(sig, s)?;
    estimate(sig, p, &qoi, dev, n_cells)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Binding {
    GlobalBw,
    LocalBw,
    Compute,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RooflineReport {
    /// FLOP/byte
    pub ai_global: f64,
    pub ai_local: f64,
    /// GFLOP/s
    pub f_roofline: f64,
    pub binding_term: Binding,
}

impl RooflineReport {
    pub fn to_record(&self) -> Vec<(&'static str, Value)> {
        vec![
            ("ai_global", json!(self.ai_global)),
            ("ai_local", json!(self.ai_local)),
            ("f_roofline", json!(self.f_roofline)),
            ("binding_term", serde_json::to_value(self.binding_term).unwrap()),
        ]
    }
}

/// Global DOF traffic of a launch over `n_cells` cells (gathers including
/// affine coordinates, scatters) plus each reference array once, in bytes.
pub fn global_footprint_bytes(sig: &FormSignature, n_cells: u64) -> f64 {
    let dofs: usize = sig.trial_spaces().map(|s| s.n * s.gather_width).sum();
    let coords = if sig.affine { sig.n_coord * sig.dim } else { 0 };
    let per_cell = (dofs + coords + sig.n_test) as f64;
    (per_cell * n_cells as f64 + reference_words_per_workgroup(sig) as f64) * sig.word_bytes as f64
}

pub fn roofline(
    sig: &FormSignature,
    dev: &DeviceSpec,
    n_cells: u64,
    global_footprint: f64,
) -> Result<RooflineReport, PerfError> {
    if !(global_footprint > 0.0) {
        return Err(PerfError::ZeroFootprint);
    }
    let ops = reference_flop_count(sig)? as f64;
    let ai_global = ops * n_cells as f64 / global_footprint;
    let (r, w, qr) = local_access_words(sig);
    let ai_local = ops / ((r + w + qr) as f64 * sig.word_bytes as f64);
    let terms = [
        (ai_global * dev.beta_global_peak, Binding::GlobalBw),
        (ai_local * dev.beta_local_peak, Binding::LocalBw),
        (dev.f_peak, Binding::Compute),
    ];
    let (f_roofline, binding_term) = terms
        .into_iter()
        .fold((f64::INFINITY, Binding::Compute), |acc, t| if t.0 < acc.0 { t } else { acc });
    Ok(RooflineReport { ai_global, ai_local, f_roofline, binding_term })
}
