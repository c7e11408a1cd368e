//! Command-line front end. `main.rs` only forwards to [`main_with_args`].

use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::{json, Map, Value};

use crate::codegen::{emit_mlt, emit_scpt, CodegenError, CodegenOptions, Dialect, KernelSource};
use crate::form::{
    preset_map, preset_signature, read_instance, read_signature, reference_action, reference_flop_count,
    simplex_space_dim, synthesize_problem, synthesize_with_map, FormError, FormSignature, Operator, PointwiseMap,
    ProblemInstance,
};
use crate::perf::{global_footprint_bytes, roofline, DeviceSpec, PerfError};
use crate::qoi::{qoi_report, ratio_str, QoiError, Schedule, TilingParams};
use crate::search::{
    cardinality, enumerate, max_relative_error, rank, tune, violated_constraints, SearchConfig, SearchError,
    VERIFY_TOLERANCE,
};
use crate::sim::{census, simulate, SimError, SimTrace};

pub const DEFAULT_SEED: u64 = 2020;
pub const DEFAULT_CELLS: usize = 64;

#[derive(Parser, Debug)]
#[command(name = "femtile", version, about = "Schedule search and verification for matrix-free FEM action kernels")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
    #[arg(long, value_enum, default_value = "table", global = true)]
    pub format: Format,
    /// Worker threads for ranking and verification.
    #[arg(long, global = true)]
    pub jobs: Option<usize>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Table,
    Json,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Signature summary, usable FLOPs and the roofline bound.
    Describe(CommonArgs),
    /// Lists the constraint-satisfying tilings.
    Enumerate {
        #[command(flatten)]
        common: CommonArgs,
        /// Print only the size of the space.
        #[arg(long)]
        count: bool,
        #[arg(long)]
        limit: Option<usize>,
    },
    /// Top-b tilings by modeled time, plus the single-cell schedule.
    Rank(CommonArgs),
    /// Runs one schedule on the work-group simulator and checks its counters.
    Simulate {
        #[command(flatten)]
        common: CommonArgs,
        #[command(flatten)]
        pick: PickArgs,
        #[command(flatten)]
        inst: InstanceArgs,
        /// Writes the full trace as JSON.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Executes and verifies the ranked candidates and picks a winner.
    Tune {
        #[command(flatten)]
        common: CommonArgs,
        #[command(flatten)]
        inst: InstanceArgs,
    },
    /// Emits kernel source and a manifest for one schedule.
    Codegen {
        #[command(flatten)]
        common: CommonArgs,
        #[command(flatten)]
        pick: PickArgs,
        #[arg(long, default_value = "opencl")]
        dialect: Dialect,
        /// Output directory.
        #[arg(long, default_value = ".")]
        out: PathBuf,
    },
}

#[derive(Args, Debug, Clone)]
pub struct CommonArgs {
    #[command(flatten)]
    pub form: FormArgs,
    /// `k40`, `titan-v`, or a device file (also looked up in $FEMTILE_DEVICE_PATH).
    #[arg(long, default_value = "titan-v")]
    pub device: String,
    #[command(flatten)]
    pub search: SearchArgs,
}

#[derive(Args, Debug, Clone)]
#[group(skip)]
#[command(group(clap::ArgGroup::new("source").required(true).multiple(false).args(["form", "instance", "signature"])))]
pub struct FormArgs {
    /// Preset operator: mass, laplace (poisson), helmholtz, elasticity, hyperelasticity.
    #[arg(long, requires_all = ["d", "degree"])]
    pub form: Option<Operator>,
    #[arg(long)]
    pub d: Option<usize>,
    #[arg(long)]
    pub degree: Option<usize>,
    /// Quadrature points; required with --form.
    #[arg(long = "Q")]
    pub q: Option<usize>,
    /// Problem instance file.
    #[arg(long)]
    pub instance: Option<PathBuf>,
    /// Signature file.
    #[arg(long)]
    pub signature: Option<PathBuf>,
}

#[derive(Args, Debug, Clone, Default)]
pub struct SearchArgs {
    /// Search settings file; flags below override it.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long, value_parser = crate::search::parse_ratio)]
    pub alias_floor: Option<num_rational::Ratio<u64>>,
    #[arg(long, value_parser = crate::search::parse_ratio)]
    pub simd_floor: Option<num_rational::Ratio<u64>>,
    #[arg(long)]
    pub wg_cap: Option<usize>,
    #[arg(short = 'b', long = "b")]
    pub b: Option<usize>,
    /// Cells of the modeled launch.
    #[arg(long)]
    pub n_cells: Option<u64>,
}

#[derive(Args, Debug, Clone)]
#[group(skip)]
#[command(group(clap::ArgGroup::new("pick").multiple(false).args(["candidate", "scpt"])))]
pub struct PickArgs {
    /// Tiling file (`Schedule` or bare `TilingParams`, YAML or JSON).
    #[arg(long)]
    pub candidate: Option<PathBuf>,
    #[arg(long)]
    pub scpt: bool,
}

#[derive(Args, Debug, Clone)]
pub struct InstanceArgs {
    /// Cells of the synthesized instance.
    #[arg(long, default_value_t = DEFAULT_CELLS)]
    pub cells: usize,
    #[arg(long, default_value_t = DEFAULT_SEED)]
    pub seed: u64,
}

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("{0}")]
    Infeasible(String),
    #[error("{0}")]
    Verification(String),
    #[error("{0}")]
    Other(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 2,
            CliError::Infeasible(_) => 3,
            CliError::Verification(_) => 4,
            CliError::Other(_) => 1,
        }
    }

    fn kind(&self) -> &'static str {
        match self {
            CliError::Usage(_) => "usage",
            CliError::Infeasible(_) => "infeasible",
            CliError::Verification(_) => "verification",
            CliError::Other(_) => "error",
        }
    }

    /// Machine-readable record written to stderr.
    pub fn to_json(&self) -> Value {
        json!({ "error": self.kind(), "message": self.to_string(), "exit_code": self.exit_code() })
    }
}

impl From<FormError> for CliError {
    fn from(e: FormError) -> Self {
        match e {
            FormError::Unsupported(_) | FormError::InvalidSignature(_) => CliError::Usage(e.to_string()),
            _ => CliError::Other(e.to_string()),
        }
    }
}

impl From<QoiError> for CliError {
    fn from(e: QoiError) -> Self {
        CliError::Infeasible(e.to_string())
    }
}

impl From<PerfError> for CliError {
    fn from(e: PerfError) -> Self {
        match e {
            PerfError::Infeasible { .. } => CliError::Infeasible(e.to_string()),
            PerfError::UnknownDevice(_) | PerfError::Device(_) => CliError::Usage(e.to_string()),
            _ => CliError::Other(e.to_string()),
        }
    }
}

impl From<SimError> for CliError {
    fn from(e: SimError) -> Self {
        CliError::Verification(e.to_string())
    }
}

impl From<SearchError> for CliError {
    fn from(e: SearchError) -> Self {
        match e {
            SearchError::Config(_) => CliError::Usage(e.to_string()),
            SearchError::EmptySpace => CliError::Infeasible(e.to_string()),
            SearchError::Verification { .. } | SearchError::InvalidTiming { .. } | SearchError::Executor { .. } => {
                CliError::Verification(e.to_string())
            }
            SearchError::Perf(p) => p.into(),
            SearchError::Qoi(q) => q.into(),
            SearchError::Form(f) => f.into(),
        }
    }
}

impl From<CodegenError> for CliError {
    fn from(e: CodegenError) -> Self {
        match e {
            CodegenError::Infeasible { .. } | CodegenError::Qoi(_) => CliError::Infeasible(e.to_string()),
            CodegenError::Plan(_) => CliError::Other(e.to_string()),
        }
    }
}

fn io_err(path: &Path, e: std::io::Error) -> CliError {
    CliError::Other(format!("{}: {e}", path.display()))
}

/// One section of a report: a key-value record or a table of records.
#[derive(Clone, Debug, PartialEq)]
pub enum Section {
    Record(Vec<(String, Value)>),
    Table(Vec<Vec<(String, Value)>>),
}

/// Command output, rendered either as text tables or as one JSON object.
#[derive(Clone, Debug, PartialEq)]
pub struct Report {
    pub command: &'static str,
    pub sections: Vec<(String, Section)>,
}

fn owned(rec: Vec<(&'static str, Value)>) -> Vec<(String, Value)> {
    rec.into_iter().map(|(k, v)| (k.to_string(), v)).collect()
}

fn cell(v: &Value) -> String {
    match v {
        Value::String(s) => s.clone(),
        Value::Null => "-".into(),
        other => other.to_string(),
    }
}

impl Report {
    fn new(command: &'static str) -> Self {
        Report { command, sections: Vec::new() }
    }

    fn record(&mut self, title: &str, rec: Vec<(String, Value)>) {
        self.sections.push((title.into(), Section::Record(rec)));
    }

    fn table(&mut self, title: &str, rows: Vec<Vec<(String, Value)>>) {
        self.sections.push((title.into(), Section::Table(rows)));
    }

    pub fn to_json(&self) -> Value {
        let mut m = Map::new();
        m.insert("command".into(), json!(self.command));
        for (title, s) in &self.sections {
            let v = match s {
                Section::Record(r) => Value::Object(r.iter().cloned().collect()),
                Section::Table(rows) => {
                    Value::Array(rows.iter().map(|r| Value::Object(r.iter().cloned().collect())).collect())
                }
            };
            m.insert(title.clone(), v);
        }
        Value::Object(m)
    }

    pub fn to_table(&self) -> String {
        let mut out = String::new();
        for (title, s) in &self.sections {
            out.push_str(&format!("== {title}\n"));
            match s {
                Section::Record(r) => {
                    let w = r.iter().map(|(k, _)| k.len()).max().unwrap_or(0);
                    for (k, v) in r {
                        out.push_str(&format!("{k:<w$}  {}\n", cell(v)));
                    }
                }
                Section::Table(rows) => {
                    let Some(first) = rows.first() else {
                        out.push_str("(none)\n");
                        continue;
                    };
                    let mut heads: Vec<&str> = first.iter().map(|(k, _)| k.as_str()).collect();
                    for r in rows {
                        for (k, _) in r {
                            if !heads.contains(&k.as_str()) {
                                heads.push(k);
                            }
                        }
                    }
                    let cells: Vec<Vec<String>> = rows
                        .iter()
                        .map(|r| {
                            heads.iter().map(|h| r.iter().find(|(k, _)| k == h).map_or("-".into(), |(_, v)| cell(v))).collect()
                        })
                        .collect();
                    let widths: Vec<usize> = (0..heads.len())
                        .map(|j| cells.iter().map(|r| r[j].len()).chain([heads[j].len()]).max().unwrap())
                        .collect();
                    let line = |xs: Vec<&str>| {
                        xs.iter().zip(&widths).map(|(x, w)| format!("{x:<w$}")).collect::<Vec<_>>().join("  ").trim_end().to_string() + "\n"
                    };
                    out.push_str(&line(heads.clone()));
                    for r in &cells {
                        out.push_str(&line(r.iter().map(String::as_str).collect()));
                    }
                }
            }
            out.push('\n');
        }
        out
    }

    pub fn render(&self, format: Format) -> String {
        match format {
            Format::Table => self.to_table(),
            Format::Json => serde_json::to_string_pretty(&self.to_json()).expect("report serializes") + "\n",
        }
    }
}

/// Form data resolved from the command line.
pub struct Source {
    pub signature: FormSignature,
    pub map: Option<PointwiseMap>,
    pub instance: Option<ProblemInstance>,
    pub preset: Option<(Operator, usize, usize)>,
}

impl FormArgs {
    pub fn load(&self) -> Result<Source, CliError> {
        if let Some(op) = self.form {
            let (d, degree) = (self.d.unwrap_or_default(), self.degree.unwrap_or_default());
            let q = self.q.ok_or_else(|| {
                CliError::Usage(format!(
                    "--Q is required with --form; suggested Q = {} (dimension of the degree-{} space)",
                    simplex_space_dim(2 * degree, d),
                    2 * degree
                ))
            })?;
            let signature = preset_signature(op, d, degree, q)?;
            let map = preset_map(op, &signature)?;
            return Ok(Source { signature, map: Some(map), instance: None, preset: Some((op, d, degree)) });
        }
        if self.d.is_some() || self.degree.is_some() || self.q.is_some() {
            return Err(CliError::Usage("--d, --degree and --Q only apply to --form".into()));
        }
        if let Some(path) = &self.instance {
            let p = read_instance(&std::fs::read_to_string(path).map_err(|e| io_err(path, e))?)?;
            return Ok(Source { signature: p.signature.clone(), map: Some(p.map.clone()), instance: Some(p), preset: None });
        }
        let path = self.signature.as_ref().ok_or_else(|| CliError::Usage("no form source given".into()))?;
        let signature = read_signature(&std::fs::read_to_string(path).map_err(|e| io_err(path, e))?)?;
        Ok(Source { signature, map: None, instance: None, preset: None })
    }
}

impl Source {
    /// The instance file, or a synthesized one for presets and signatures.
    pub fn instance(&self, args: &InstanceArgs) -> Result<ProblemInstance, CliError> {
        if let Some(p) = &self.instance {
            return Ok(p.clone());
        }
        Ok(match &self.map {
            Some(m) => synthesize_with_map(&self.signature, m.clone(), args.cells, args.seed)?,
            None => synthesize_problem(&self.signature, args.cells, args.seed)?,
        })
    }
}

impl SearchArgs {
    pub fn config(&self) -> Result<SearchConfig, CliError> {
        let mut cfg = match &self.config {
            Some(path) => {
                let text = std::fs::read_to_string(path).map_err(|e| io_err(path, e))?;
                serde_yaml::from_str(&text).map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))?
            }
            None => SearchConfig::default(),
        };
        if let Some(x) = self.alias_floor {
            cfg.alias_floor = x;
        }
        if let Some(x) = self.simd_floor {
            cfg.simd_floor = x;
        }
        if let Some(x) = self.wg_cap {
            cfg.wg_cap = x;
        }
        if let Some(x) = self.b {
            cfg.b = x;
        }
        if let Some(x) = self.n_cells {
            cfg.n_cells = x;
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

/// Reads a tiling written either as a tagged `Schedule` or as bare params.
pub fn read_candidate(path: &Path) -> Result<Schedule, CliError> {
    let text = std::fs::read_to_string(path).map_err(|e| io_err(path, e))?;
    if let Ok(s) = serde_yaml::from_str::<Schedule>(&text) {
        return Ok(s);
    }
    serde_yaml::from_str::<TilingParams>(&text)
        .map(Schedule::Mlt)
        .map_err(|e| CliError::Usage(format!("{}: not a candidate: {e}", path.display())))
}

fn pick(pick: &PickArgs) -> Result<Option<Schedule>, CliError> {
    if pick.scpt {
        return Ok(Some(Schedule::Scpt));
    }
    pick.candidate.as_deref().map(read_candidate).transpose()
}

/// Rejects tilings outside the search constraints before anything runs.
fn gate(sig: &FormSignature, s: &Schedule, cfg: &SearchConfig) -> Result<(), CliError> {
    if let Schedule::Mlt(p) = s {
        p.validate(sig)?;
        let bad = violated_constraints(sig, p, cfg);
        if !bad.is_empty() {
            let list: Vec<String> = bad
                .iter()
                .map(|c| match c {
                    1 => "tile sizes outside the ceil-divisor sets".to_string(),
                    2 => format!("eta_alias below {}", ratio_str(cfg.alias_floor)),
                    3 => format!("eta_simd below {}", ratio_str(cfg.simd_floor)),
                    _ => format!("N_c*N_WI above {}", cfg.wg_cap),
                })
                .collect();
            return Err(CliError::Infeasible(format!("candidate {} violates: {}", p.label(), list.join("; "))));
        }
    }
    Ok(())
}

fn signature_record(src: &Source) -> Result<Vec<(String, Value)>, CliError> {
    let sig = &src.signature;
    let mut r: Vec<(String, Value)> = Vec::new();
    if let Some((op, d, degree)) = src.preset {
        r.push(("form".into(), json!(op.name())));
        r.push(("degree".into(), json!(degree)));
        r.push(("q_suggested".into(), json!(simplex_space_dim(2 * degree, d))));
    }
    r.push(("dim".into(), json!(sig.dim)));
    r.push(("n_quad".into(), json!(sig.n_quad)));
    r.push(("n_test".into(), json!(sig.n_test)));
    r.push(("n_deriv_test".into(), json!(sig.n_deriv_test)));
    let spaces: Vec<String> =
        sig.trial_spaces().map(|s| format!("{}:{}x{}x{}", s.id.label(), s.n, s.n_deriv, s.gather_width)).collect();
    r.push(("trial_spaces".into(), json!(spaces.join(" "))));
    r.push(("affine".into(), json!(sig.affine)));
    r.push(("word_bytes".into(), json!(sig.word_bytes)));
    r.push(("ops_usable".into(), json!(reference_flop_count(sig)?)));
    Ok(r)
}

fn cmd_describe(c: &CommonArgs) -> Result<Report, CliError> {
    let src = c.form.load()?;
    let dev = DeviceSpec::resolve(&c.device)?;
    let cfg = c.search.config()?;
    let sig = &src.signature;
    let mut rep = Report::new("describe");
    rep.record("signature", signature_record(&src)?);
    let fp = global_footprint_bytes(sig, cfg.n_cells);
    let mut roof = vec![("device".to_string(), json!(dev.name)), ("n_cells".into(), json!(cfg.n_cells)), ("global_bytes".into(), json!(fp))];
    roof.extend(owned(roofline(sig, &dev, cfg.n_cells, fp)?.to_record()));
    rep.record("roofline", roof);
    Ok(rep)
}

fn params_record(index: usize, p: &TilingParams) -> Vec<(String, Value)> {
    let cols: Vec<String> = p.t_eval_col.iter().map(|t| t.to_string()).collect();
    vec![
        ("index".into(), json!(index)),
        ("t_quad".into(), json!(p.t_quad)),
        ("t_eval_row".into(), json!(p.t_eval_row)),
        ("t_eval_col".into(), json!(cols.join(","))),
        ("t_quad_row".into(), json!(p.t_quad_row)),
        ("t_quad_col".into(), json!(p.t_quad_col)),
        ("n_c".into(), json!(p.n_cells_wg)),
        ("n_wi".into(), json!(p.n_wi)),
    ]
}

fn cmd_enumerate(c: &CommonArgs, count: bool, limit: Option<usize>) -> Result<Report, CliError> {
    let src = c.form.load()?;
    let cfg = c.search.config()?;
    let mut rep = Report::new("enumerate");
    rep.record("space", vec![("cardinality".into(), json!(cardinality(&src.signature, &cfg)?))]);
    if !count {
        let space = enumerate(&src.signature, &cfg)?;
        let rows = space.iter().take(limit.unwrap_or(usize::MAX)).enumerate().map(|(i, p)| params_record(i, &p)).collect();
        rep.table("candidates", rows);
    }
    Ok(rep)
}

fn cmd_rank(c: &CommonArgs) -> Result<Report, CliError> {
    let src = c.form.load()?;
    let dev = DeviceSpec::resolve(&c.device)?;
    let cfg = c.search.config()?;
    let ranked = rank(&src.signature, &dev, &cfg)?;
    let mut rep = Report::new("rank");
    rep.record("device", vec![("name".into(), json!(dev.name)), ("n_cells".into(), json!(cfg.n_cells))]);
    rep.table("ranking", ranked.iter().enumerate().map(|(i, c)| owned(c.to_record(i + 1))).collect());
    Ok(rep)
}

/// Scalar fields of a trace, without the output vector.
pub fn trace_record(t: &SimTrace) -> Vec<(String, Value)> {
    let a = &t.access;
    owned(vec![
        ("schedule", json!(t.schedule.label())),
        ("n_cells", json!(t.n_cells)),
        ("n_workgroups", json!(t.n_workgroups)),
        ("barriers_per_workgroup", json!(t.barriers_per_workgroup)),
        ("flops_matvec", json!(t.flops_matvec)),
        ("flops_masked_padding", json!(t.flops_masked_padding)),
        ("flops_inactive_cells", json!(t.flops_inactive_cells)),
        ("flops_pointwise", json!(t.flops_pointwise)),
        ("local_words_highwater", json!(t.local_words_highwater)),
        ("gather", json!(a.gather)),
        ("coord_gather", json!(a.coord_gather)),
        ("scatter", json!(a.scatter)),
        ("reference", json!(a.reference)),
        ("local_eval_read", json!(a.local_eval_read)),
        ("local_eval_write", json!(a.local_eval_write)),
        ("local_quad_read", json!(a.local_quad_read)),
        ("local_prefetch_write", json!(a.local_prefetch_write)),
        ("lanes_active", json!(t.lanes_active)),
        ("lanes_total", json!(t.lanes_total)),
        ("masked_lane_fraction", json!(ratio_str(t.masked_lane_fraction))),
    ])
}

fn cmd_simulate(c: &CommonArgs, pk: &PickArgs, inst: &InstanceArgs, out: Option<&Path>) -> Result<(Report, i32), CliError> {
    let src = c.form.load()?;
    let cfg = c.search.config()?;
    let sched = pick(pk)?.ok_or_else(|| CliError::Usage("simulate needs --candidate <file> or --scpt".into()))?;
    gate(&src.signature, &sched, &cfg)?;
    let p = src.instance(inst)?;
    let trace = simulate(&p, &sched)?;
    let reference = reference_action(&p)?;
    let err = max_relative_error(&trace.output, &reference);
    let conf = census(&trace, &p.signature)?;
    if let Some(path) = out {
        let text = serde_json::to_string_pretty(&trace).expect("trace serializes");
        std::fs::write(path, text).map_err(|e| io_err(path, e))?;
    }
    let mut rep = Report::new("simulate");
    rep.record("trace", trace_record(&trace));
    rep.table(
        "barriers",
        trace.barriers_by_site.iter().map(|s| owned(vec![("site", json!(s.site.label())), ("count", json!(s.count))])).collect(),
    );
    rep.table(
        "census",
        conf.checks
            .iter()
            .map(|k| {
                owned(vec![
                    ("quantity", json!(k.quantity)),
                    ("expected", json!(k.expected)),
                    ("actual", json!(k.actual)),
                    ("pass", json!(k.pass)),
                ])
            })
            .collect(),
    );
    let ok = err <= VERIFY_TOLERANCE && conf.all_pass();
    rep.record(
        "verification",
        owned(vec![
            ("max_rel_error", json!(err)),
            ("tolerance", json!(VERIFY_TOLERANCE)),
            ("census", json!(if conf.all_pass() { "pass" } else { "fail" })),
            ("verified", json!(ok)),
        ]),
    );
    Ok((rep, if ok { 0 } else { 4 }))
}

fn cmd_tune(c: &CommonArgs, inst: &InstanceArgs) -> Result<Report, CliError> {
    let src = c.form.load()?;
    let dev = DeviceSpec::resolve(&c.device)?;
    let cfg = c.search.config()?;
    let p = src.instance(inst)?;
    let res = tune(&p, &dev, &cfg)?;
    let mut rep = Report::new("tune");
    let mut win = owned(vec![("schedule", json!(res.winner.label()))]);
    if let Schedule::Mlt(t) = &res.winner.schedule {
        win.extend(params_record(0, t).into_iter().skip(1));
    }
    win.push(("instance_cells".into(), json!(p.n_cells())));
    rep.record("winner", win);
    rep.table("verification", res.records.iter().map(|r| owned(r.to_record())).collect());
    Ok(rep)
}

fn cmd_codegen(c: &CommonArgs, pk: &PickArgs, dialect: Dialect, out: &Path) -> Result<Report, CliError> {
    let src = c.form.load()?;
    let dev = DeviceSpec::resolve(&c.device)?;
    let cfg = c.search.config()?;
    let sig = &src.signature;
    let sched = match pick(pk)? {
        Some(s) => s,
        None => rank(sig, &dev, &cfg)?.into_iter().next().ok_or(SearchError::EmptySpace)?.schedule,
    };
    gate(sig, &sched, &cfg)?;
    let opts = CodegenOptions { dialect, map: src.map.clone(), device: Some(dev) };
    let k: KernelSource = match &sched {
        Schedule::Scpt => emit_scpt(sig, &opts),
        Schedule::Mlt(p) => emit_mlt(sig, p, &opts)?,
    };
    std::fs::create_dir_all(out).map_err(|e| io_err(out, e))?;
    let src_path = out.join(k.file_name());
    let man_path = out.join(format!("{}.manifest.yaml", k.entry));
    std::fs::write(&src_path, &k.source).map_err(|e| io_err(&src_path, e))?;
    std::fs::write(&man_path, k.manifest_yaml()).map_err(|e| io_err(&man_path, e))?;
    let q = qoi_report(sig, &sched)?;
    let mut rep = Report::new("codegen");
    rep.record(
        "kernel",
        owned(vec![
            ("schedule", json!(sched.label())),
            ("entry", json!(k.entry)),
            ("source", json!(src_path.display().to_string())),
            ("manifest", json!(man_path.display().to_string())),
            ("grid", json!(k.launch.formula())),
            ("barrier_calls", json!(k.barrier_calls())),
            ("atomic_calls", json!(k.atomic_calls())),
            ("buffer_b_words", json!(q.buffer_b_words)),
            ("l_words", json!(q.l_words)),
        ]),
    );
    Ok(rep)
}

/// Runs a parsed command; returns the report and the exit code it implies.
pub fn run(cli: &Cli) -> Result<(Report, i32), CliError> {
    let go = || -> Result<(Report, i32), CliError> {
        match &cli.command {
            Command::Describe(c) => cmd_describe(c).map(|r| (r, 0)),
            Command::Enumerate { common, count, limit } => cmd_enumerate(common, *count, *limit).map(|r| (r, 0)),
            Command::Rank(c) => cmd_rank(c).map(|r| (r, 0)),
            Command::Simulate { common, pick, inst, out } => cmd_simulate(common, pick, inst, out.as_deref()),
            Command::Tune { common, inst } => cmd_tune(common, inst).map(|r| (r, 0)),
            Command::Codegen { common, pick, dialect, out } => cmd_codegen(common, pick, *dialect, out).map(|r| (r, 0)),
        }
    };
    match cli.jobs {
        Some(0) => Err(CliError::Usage("--jobs must be positive".into())),
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .map_err(|e| CliError::Other(e.to_string()))?
            .install(go),
        None => go(),
    }
}

/// Parses `args`, runs the command and writes its report; returns the exit code.
pub fn main_with_args<I, T>(args: I, stdout: &mut dyn Write, stderr: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            use clap::error::ErrorKind;
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                let _ = write!(stdout, "{e}");
                return 0;
            }
            let text = e.to_string();
            let msg = text.split("\n\nUsage").next().unwrap_or("").trim_start_matches("error: ");
            let err = CliError::Usage(msg.split_whitespace().collect::<Vec<_>>().join(" "));
            let _ = writeln!(stderr, "{}", err.to_json());
            return err.exit_code();
        }
    };
    match run(&cli) {
        Ok((rep, code)) => {
            let _ = stdout.write_all(rep.render(cli.format).as_bytes());
            code
        }
        Err(e) => {
            let _ = writeln!(stderr, "{}", e.to_json());
            e.exit_code()
        }
    }
}
