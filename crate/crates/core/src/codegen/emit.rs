use std::fmt::Write as _;

use crate::form::{Expr, FormSignature, Input, PointwiseMap};
use crate::qoi::{cdiv, TilingParams};
use crate::sim::{build_plan, SchedulePlan, Tile};

use super::{ArgRole, ArgSpec, CodegenError, CodegenOptions, Dialect, KernelSource, LaunchGeometry};

/// Line writer with brace-driven indentation.
struct W {
    s: String,
    ind: usize,
}

impl W {
    fn new() -> Self {
        W { s: String::new(), ind: 0 }
    }

    fn l(&mut self, line: impl AsRef<str>) {
        let line = line.as_ref();
        if line.starts_with('}') {
            self.ind = self.ind.saturating_sub(1);
        }
        if line.is_empty() {
            self.s.push('\n');
        } else {
            let _ = writeln!(self.s, "{}{}", "    ".repeat(self.ind), line);
        }
        if line.ends_with('{') {
            self.ind += 1;
        }
    }
}

struct Space {
    label: String,
    n: usize,
    n_deriv: usize,
    width: usize,
    components: Vec<usize>,
    /// Offset of this space's derivatives in the flat `du` array.
    du_offset: usize,
}

fn spaces(sig: &FormSignature) -> Vec<Space> {
    let mut off = 0;
    sig.trial_spaces()
        .map(|s| {
            let sp = Space {
                label: s.id.label(),
                n: s.n,
                n_deriv: s.n_deriv,
                width: s.gather_width,
                components: (0..s.n_deriv).map(|k| s.component(k)).collect(),
                du_offset: off,
            };
            off += s.n_deriv;
            sp
        })
        .collect()
}

fn real(sig: &FormSignature) -> &'static str {
    if sig.word_bytes == 4 {
        "float"
    } else {
        "double"
    }
}

fn preamble(w: &mut W, sig: &FormSignature, dialect: Dialect) {
    let real = real(sig);
    match dialect {
        Dialect::OpenCl => {
            if sig.word_bytes == 8 {
                w.l("#pragma OPENCL EXTENSION cl_khr_fp64 : enable");
                w.l("#pragma OPENCL EXTENSION cl_khr_int64_base_atomics : enable");
            }
            w.l(format!("typedef {real} real_t;"));
            w.l("");
            let (bits, cas) = if sig.word_bytes == 8 { ("ulong", "atom_cmpxchg") } else { ("uint", "atomic_cmpxchg") };
            w.l("inline void atomic_add_real(volatile __global real_t *p, real_t v) {");
            w.l(format!("union {{ real_t f; {bits} i; }} old, upd;"));
            w.l("do {");
            w.l("old.f = *p;");
            w.l("upd.f = old.f + v;");
            w.l(format!("}} while ({cas}((volatile __global {bits} *)p, old.i, upd.i) != old.i);"));
            w.l("}");
        }
        Dialect::Cuda => {
            w.l(format!("typedef {real} real_t;"));
        }
    }
    w.l("");
}

fn fn_qualifier(dialect: Dialect) -> &'static str {
    match dialect {
        Dialect::OpenCl => "inline",
        Dialect::Cuda => "__device__ inline",
    }
}

/// `geo` layout: `J` (row-major 3×3), `adj(J)`, `det`, `1/det`.
fn geometry_fn(w: &mut W, d: usize, dialect: Dialect) {
    w.l(format!("{} void geometry(const real_t *J, real_t *geo) {{", fn_qualifier(dialect)));
    w.l("for (int i = 0; i < 18; ++i) geo[i] = 0;");
    w.l("for (int i = 0; i < 9; ++i) geo[i] = J[i];");
    match d {
        1 => {
            w.l("geo[9] = 1;");
            w.l("geo[18] = J[0];");
        }
        2 => {
            w.l("geo[9] = J[4];");
            w.l("geo[10] = -J[1];");
            w.l("geo[12] = -J[3];");
            w.l("geo[13] = J[0];");
            w.l("geo[18] = J[0] * J[4] - J[1] * J[3];");
        }
        _ => {
            for r in 0..3 {
                for c in 0..3 {
                    let (r0, r1) = ((c + 1) % 3, (c + 2) % 3);
                    let (c0, c1) = ((r + 1) % 3, (r + 2) % 3);
                    w.l(format!(
                        "geo[{}] = J[{}] * J[{}] - J[{}] * J[{}];",
                        9 + 3 * r + c,
                        3 * r0 + c0,
                        3 * r1 + c1,
                        3 * r0 + c1,
                        3 * r1 + c0
                    ));
                }
            }
            w.l("geo[18] = J[0] * geo[9] + J[1] * geo[12] + J[2] * geo[15];");
        }
    }
    w.l("geo[19] = 1 / geo[18];");
    w.l("}");
    w.l("");
}

fn literal(c: f64) -> String {
    let s = format!("{c:?}");
    if s.contains(['.', 'e']) {
        s
    } else {
        format!("{s}.0")
    }
}

fn expr(e: &Expr, sp: &[Space], sig: &FormSignature) -> String {
    match e {
        Expr::Const(c) => literal(*c),
        Expr::Input(i) => match *i {
            Input::ScalarDeriv { space, term } => format!("du[{}]", sp[space].du_offset + term),
            Input::VectorDeriv { space, term } => {
                format!("du[{}]", sp[sig.scalar_spaces.len() + space].du_offset + term)
            }
            Input::Jacobian { row, col } => format!("geo[{}]", 3 * row + col),
            Input::Adjugate { row, col } => format!("geo[{}]", 9 + 3 * row + col),
            Input::Det => "geo[18]".into(),
            Input::InvDet => "geo[19]".into(),
            Input::Weight => "w".into(),
            Input::Coord { node, dim } => format!("X[{}]", node * sig.dim + dim),
        },
        Expr::Add(t) => format!("({})", t.iter().map(|x| expr(x, sp, sig)).collect::<Vec<_>>().join(" + ")),
        Expr::Mul(t) => format!("({})", t.iter().map(|x| expr(x, sp, sig)).collect::<Vec<_>>().join(" * ")),
    }
}

fn pointwise_fn(w: &mut W, sig: &FormSignature, sp: &[Space], map: Option<&PointwiseMap>, dialect: Dialect) {
    let head = "void pointwise(const real_t *du, const real_t *geo, const real_t *X, real_t w, real_t *ev)";
    match map {
        Some(m) => {
            w.l(format!("{} {head} {{", fn_qualifier(dialect)));
            for (j, e) in m.outputs.iter().enumerate() {
                w.l(format!("ev[{j}] = {};", expr(e, sp, sig)));
            }
            w.l("}");
        }
        None => {
            let q = if dialect == Dialect::Cuda { "__device__ " } else { "" };
            w.l(format!("{q}{head};"));
        }
    }
    w.l("");
}

fn arguments(sig: &FormSignature, sp: &[Space], dialect: Dialect) -> (Vec<String>, Vec<ArgSpec>) {
    let mut decl = Vec::new();
    let mut man = Vec::new();
    let s = sig.word_bytes;
    let mut push = |name: String, role: ArgRole, bytes: usize| {
        let ty = match role {
            ArgRole::Map => "int",
            _ => "real_t",
        };
        let constness = if role == ArgRole::Output { "" } else { "const " };
        let d = match (role, dialect) {
            (ArgRole::Scalar, _) => format!("const int {name}"),
            (_, Dialect::OpenCl) => format!("__global {constness}{ty} *restrict {name}"),
            (_, Dialect::Cuda) => format!("{constness}{ty} *__restrict__ {name}"),
        };
        decl.push(d);
        man.push(ArgSpec { name, role, element_bytes: bytes });
    };
    for x in sp {
        push(x.label.clone(), ArgRole::TrialDofs, s);
        push(format!("map_{}", x.label), ArgRole::Map, 4);
    }
    if sig.affine {
        push("coords".into(), ArgRole::Coordinates, s);
        push("map_coords".into(), ArgRole::Map, 4);
    }
    for x in sp {
        push(format!("Phi_{}", x.label), ArgRole::Reference, s);
    }
    push("Psi".into(), ArgRole::Reference, s);
    push("weights".into(), ArgRole::Reference, s);
    push("out".into(), ArgRole::Output, s);
    push("map_out".into(), ArgRole::Map, 4);
    push("N_cell".into(), ArgRole::Scalar, 4);
    (decl, man)
}

fn kernel_head(w: &mut W, dialect: Dialect, entry: &str, decl: &[String]) {
    let q = match dialect {
        Dialect::OpenCl => "__kernel void",
        Dialect::Cuda => "extern \"C\" __global__ void",
    };
    w.l(format!("{q} {entry}("));
    w.ind += 1;
    for (i, d) in decl.iter().enumerate() {
        let sep = if i + 1 == decl.len() { ")" } else { "," };
        w.l(format!("{d}{sep}"));
    }
    w.ind -= 1;
    w.l("{");
}

fn ids(dialect: Dialect) -> (&'static str, &'static str, &'static str) {
    match dialect {
        Dialect::OpenCl => ("get_local_id(0)", "get_local_id(1)", "get_group_id(0)"),
        Dialect::Cuda => ("threadIdx.x", "threadIdx.y", "blockIdx.x"),
    }
}

fn header_comment(w: &mut W, what: &str, sig: &FormSignature) {
    w.l(format!("// {what}"));
    let dims: Vec<String> = spaces(sig).iter().map(|s| format!("{}: n={} terms={}", s.label, s.n, s.n_deriv)).collect();
    w.l(format!(
        "// d={} Q={} n_W={} N_w={} trial [{}]",
        sig.dim,
        sig.n_quad,
        sig.n_test,
        sig.n_deriv_test,
        dims.join("; ")
    ));
    w.l("");
}

fn defines(w: &mut W, sig: &FormSignature, sp: &[Space]) {
    w.l(format!("#define DIM {}", sig.dim));
    w.l(format!("#define Q {}", sig.n_quad));
    w.l(format!("#define n_W {}", sig.n_test));
    w.l(format!("#define N_w {}", sig.n_deriv_test));
    w.l(format!("#define N_COORD {}", sig.n_coord));
    for s in sp {
        w.l(format!("#define n_{} {}", s.label, s.n));
    }
    w.l(format!("#define N_DU {}", sp.iter().map(|s| s.n_deriv).sum::<usize>()));
}

/// Cell coordinates and affine geometry, or the identity for dead lanes.
fn cell_geometry(w: &mut W, sig: &FormSignature, guard: Option<&str>) {
    w.l("real_t J[9] = {0};");
    w.l("real_t geo[20];");
    w.l(format!("real_t X[{}];", if sig.affine { sig.n_coord * sig.dim } else { 1 }));
    if !sig.affine {
        return;
    }
    if let Some(g) = guard {
        w.l(format!("if ({g}) {{"));
    }
    w.l("for (int a = 0; a < N_COORD; ++a)");
    w.l("    for (int b = 0; b < DIM; ++b)");
    w.l("        X[a * DIM + b] = coords[map_coords[i_cell * N_COORD + a] * DIM + b];");
    w.l("for (int r = 0; r < DIM; ++r)");
    w.l("    for (int c = 0; c < DIM; ++c)");
    w.l("        J[3 * r + c] = X[(c + 1) * DIM + r] - X[r];");
    if guard.is_some() {
        w.l("} else {");
        w.l("for (int r = 0; r < DIM; ++r) J[4 * r] = 1;");
        w.l("}");
    }
    w.l("geometry(J, geo);");
}

/// Per-point geometry read from the coordinate space's derivatives.
fn point_geometry(w: &mut W, sig: &FormSignature, sp: &[Space]) {
    if sig.affine {
        return;
    }
    let g = sig.geometry_space().expect("non-affine signature has a coordinate space");
    let off = sp[sig.scalar_spaces.len() + g].du_offset;
    w.l("for (int r = 0; r < DIM; ++r)");
    w.l("    for (int c = 0; c < DIM; ++c)");
    w.l(format!("        J[3 * r + c] = du[{off} + r * DIM + c];"));
    w.l("geometry(J, geo);");
}

fn gather_expr(sig: &FormSignature, s: &Space, j: &str, c: usize) -> String {
    if s.width == 1 {
        format!("{l}[map_{l}[i_cell * n_{l} + {j}]]", l = s.label)
    } else {
        format!("{l}[map_{l}[i_cell * n_{l} + {j}] * {d} + {c}]", l = s.label, d = sig.dim)
    }
}

/// Single cell per work-item: 32-wide work-groups, private temporaries.
pub fn emit_scpt(sig: &FormSignature, opts: &CodegenOptions) -> KernelSource {
    let dialect = opts.dialect;
    let sp = spaces(sig);
    let (lid0, _, gid) = ids(dialect);
    let mut w = W::new();
    header_comment(&mut w, "single cell per work-item", sig);
    preamble(&mut w, sig, dialect);
    defines(&mut w, sig, &sp);
    w.l("");
    geometry_fn(&mut w, sig.dim, dialect);
    pointwise_fn(&mut w, sig, &sp, opts.map.as_ref(), dialect);
    let (decl, manifest) = arguments(sig, &sp, dialect);
    let entry = "scpt_action";
    kernel_head(&mut w, dialect, entry, &decl);
    w.l(format!("const int i_cell = {gid} * 32 + {lid0};"));
    w.l("if (i_cell >= N_cell)");
    w.l("    return;");
    for s in &sp {
        w.l(format!("real_t l_{}[{}];", s.label, s.n * s.width));
        w.l(format!("for (int j = 0; j < n_{}; ++j) {{", s.label));
        for c in 0..s.width {
            w.l(format!("l_{}[j * {} + {c}] = {};", s.label, s.width, gather_expr(sig, s, "j", c)));
        }
        w.l("}");
    }
    cell_geometry(&mut w, sig, None);
    w.l("real_t out_acc[n_W];");
    w.l("for (int j = 0; j < n_W; ++j) out_acc[j] = 0;");
    w.l("for (int i_q = 0; i_q < Q; ++i_q) {");
    w.l("real_t du[N_DU];");
    for s in &sp {
        for k in 0..s.n_deriv {
            let at = s.du_offset + k;
            w.l(format!("du[{at}] = 0;"));
            w.l(format!("for (int j = 0; j < n_{}; ++j)", s.label));
            w.l(format!(
                "    du[{at}] += Phi_{l}[({k} * Q + i_q) * n_{l} + j] * l_{l}[j * {} + {}];",
                s.width,
                s.components[k],
                l = s.label
            ));
        }
    }
    point_geometry(&mut w, sig, &sp);
    w.l("real_t ev[N_w];");
    w.l("pointwise(du, geo, X, weights[i_q], ev);");
    w.l("for (int k = 0; k < N_w; ++k)");
    w.l("    for (int j = 0; j < n_W; ++j)");
    w.l("        out_acc[j] += Psi[(k * n_W + j) * Q + i_q] * ev[k];");
    w.l("}");
    w.l("for (int j = 0; j < n_W; ++j)");
    w.l(format!("    {}(&out[map_out[i_cell * n_W + j]], out_acc[j]);", dialect.atomic_add()));
    w.l("}");
    KernelSource {
        entry: entry.into(),
        dialect,
        source: w.s,
        launch: LaunchGeometry { local_size: [32, 1], cells_per_workgroup: 32 },
        manifest,
    }
}

/// Whether every tile of a loop has the full size.
fn exact(tiles: &[Tile], t: usize) -> bool {
    tiles.iter().all(|x| x.len == t)
}

/// Opens a tile loop; returns the expression for the current tile length.
fn tile_loop(w: &mut W, var: &str, start: &str, len: &str, tile: &str, t: usize, bound: &str, bound_const: Option<usize>, full: bool) {
    let count = match bound_const {
        Some(b) => cdiv(b, t).to_string(),
        None => format!("({bound} + {tile} - 1) / {tile}"),
    };
    w.l(format!("for (int {var} = 0; {var} < {count}; ++{var}) {{"));
    w.l(format!("const int {start} = {var} * {tile};"));
    if full {
        w.l(format!("const int {len} = {tile};"));
    } else {
        w.l(format!("const int {len} = min({tile}, {bound} - {start});"));
    }
}

/// Multi-level tiled kernel with an `N_c × N_WI` work-group.
pub fn emit_mlt(sig: &FormSignature, p: &TilingParams, opts: &CodegenOptions) -> Result<KernelSource, CodegenError> {
    let plan = build_plan(sig, p)?;
    if let Some(dev) = &opts.device {
        let needed = plan.l_words as u64 * sig.word_bytes as u64;
        if needed > dev.l_max {
            return Err(CodegenError::Infeasible { needed, limit: dev.l_max, device: dev.name.clone() });
        }
    }
    Ok(emit_plan(&plan, opts))
}

fn emit_plan(plan: &SchedulePlan, opts: &CodegenOptions) -> KernelSource {
    let sig = &plan.signature;
    let p = &plan.params;
    let dialect = opts.dialect;
    let sp = spaces(sig);
    let (lid0, lid1, gid) = ids(dialect);
    let barrier = dialect.barrier();
    let local = dialect.local_qualifier();
    let n_wi = p.n_wi;

    let quad_full = exact(&plan.quad_tiles.iter().map(|q| q.points).collect::<Vec<_>>(), p.t_quad);
    let rows_full = plan.quad_tiles.iter().all(|q| exact(&q.eval_rows, p.t_eval_row));
    let qcols_full = plan.quad_tiles.iter().all(|q| exact(&q.quad_cols, p.t_quad_col));
    let trows_full = exact(&plan.test_rows, p.t_quad_row);
    let eval_mask = plan.quad_tiles.iter().flat_map(|q| &q.eval_rows).any(|t| t.len % n_wi != 0);
    let quad_mask = plan.test_rows.iter().any(|t| t.len % n_wi != 0);
    let tq_const = quad_full.then_some(p.t_quad);

    let mut w = W::new();
    header_comment(&mut w, &format!("multi-level tiling: {}", p.label()), sig);
    preamble(&mut w, sig, dialect);
    defines(&mut w, sig, &sp);
    w.l(format!("#define N_c {}", p.n_cells_wg));
    w.l(format!("#define N_WI {}", p.n_wi));
    w.l(format!("#define T_Q {}", p.t_quad));
    w.l(format!("#define T_e_r {}", p.t_eval_row));
    for (s, t) in sp.iter().zip(&p.t_eval_col) {
        w.l(format!("#define T_e_c_{} {t}", s.label));
    }
    w.l(format!("#define T_q_r {}", p.t_quad_row));
    w.l(format!("#define T_q_c {}", p.t_quad_col));
    w.l(format!("#define S_e {}", cdiv(p.t_eval_row, n_wi)));
    w.l(format!("#define S_q {}", cdiv(p.t_quad_row, n_wi)));
    w.l("");
    geometry_fn(&mut w, sig.dim, dialect);
    pointwise_fn(&mut w, sig, &sp, opts.map.as_ref(), dialect);
    let (decl, manifest) = arguments(sig, &sp, dialect);
    let entry = "mlt_action";
    kernel_head(&mut w, dialect, entry, &decl);
    w.l(format!("{local} real_t B[{}];", plan.buffer_b_words));
    w.l(format!("{local} real_t e[{}];", plan.l_words - plan.buffer_b_words));
    w.l(format!("const int lid0 = {lid0};"));
    w.l(format!("const int lid1 = {lid1};"));
    w.l(format!("const int i_cell = {gid} * N_c + lid0;"));
    w.l("const bool live = i_cell < N_cell;");
    cell_geometry(&mut w, sig, Some("live"));

    tile_loop(&mut w, "i_quadtile", "q0", "TQ_len", "T_Q", p.t_quad, "Q", Some(sig.n_quad), quad_full);
    tile_loop(&mut w, "i_rowtile", "r0", "Ter_len", "T_e_r", p.t_eval_row, "TQ_len", tq_const, rows_full);
    for s in &sp {
        w.l(format!("real_t acc_{}[{}][S_e];", s.label, s.n_deriv));
        w.l(format!("for (int k = 0; k < {}; ++k)", s.n_deriv));
        w.l("    for (int s = 0; s < S_e; ++s)");
        w.l(format!("        acc_{}[k][s] = 0;", s.label));
    }
    for (t, s) in sp.iter().enumerate() {
        let l = &s.label;
        let tc = format!("T_e_c_{l}");
        let full = exact(&plan.spaces[t].col_tiles, plan.spaces[t].t_col);
        let nl = format!("n_{l}");
        tile_loop(&mut w, "i_coltile", "c0", "Tc_len", &tc, plan.spaces[t].t_col, &nl, Some(s.n), full);
        w.l(format!("real_t l_{l}[{tc} * {}];", s.width));
        w.l("for (int j = 0; j < Tc_len; ++j) {");
        for c in 0..s.width {
            w.l(format!(
                "l_{l}[j * {} + {c}] = live ? {} : 0;",
                s.width,
                gather_expr(sig, s, "c0 + j", c)
            ));
        }
        w.l("}");
        w.l(format!(
            "for (int i = N_WI * lid0 + lid1; i < {} * Ter_len * Tc_len; i += N_c * N_WI) {{",
            s.n_deriv
        ));
        w.l("const int k = i / (Ter_len * Tc_len);");
        w.l("const int i_r = (i % (Ter_len * Tc_len)) / Tc_len;");
        w.l("const int j = i % Tc_len;");
        w.l(format!("B[k * T_e_r * {tc} + {tc} * i_r + j] = Phi_{l}[(k * Q + q0 + r0 + i_r) * {nl} + c0 + j];"));
        w.l("}");
        w.l(format!("{barrier} // eval_prefetch {l}"));
        w.l("for (int s = 0; s < S_e; ++s) {");
        w.l("const int r = N_WI * s + lid1;");
        if eval_mask {
            w.l("if (r < Ter_len) {");
        }
        for k in 0..s.n_deriv {
            w.l("for (int j = 0; j < Tc_len; ++j)");
            w.l(format!(
                "    acc_{l}[{k}][s] += B[{k} * T_e_r * {tc} + {tc} * r + j] * l_{l}[j * {} + {}];",
                s.width, s.components[k]
            ));
        }
        if eval_mask {
            w.l("}");
        }
        w.l("}");
        w.l(format!("{barrier} // eval_compute {l}"));
        w.l("}");
    }
    w.l("for (int s = 0; s < S_e; ++s) {");
    w.l("const int r = N_WI * s + lid1;");
    if eval_mask {
        w.l("if (r < Ter_len) {");
    }
    w.l("real_t du[N_DU];");
    for s in &sp {
        w.l(format!("for (int k = 0; k < {}; ++k)", s.n_deriv));
        w.l(format!("    du[{} + k] = acc_{}[k][s];", s.du_offset, s.label));
    }
    w.l("real_t ev[N_w];");
    w.l("if (live) {");
    point_geometry(&mut w, sig, &sp);
    w.l("pointwise(du, geo, X, weights[q0 + r0 + r], ev);");
    w.l("} else {");
    w.l("for (int k = 0; k < N_w; ++k) ev[k] = 0;");
    w.l("}");
    w.l("for (int k = 0; k < N_w; ++k)");
    w.l("    e[(k * N_c + lid0) * T_Q + r0 + r] = ev[k];");
    if eval_mask {
        w.l("}");
    }
    w.l("}");
    w.l("}");
    w.l(format!("{barrier} // eval_quad_sync"));

    tile_loop(&mut w, "i_rowtile", "i0", "Tqr_len", "T_q_r", p.t_quad_row, "n_W", Some(sig.n_test), trows_full);
    w.l("real_t out_acc[S_q];");
    w.l("for (int s = 0; s < S_q; ++s) out_acc[s] = 0;");
    tile_loop(&mut w, "i_coltile", "c0", "Tqc_len", "T_q_c", p.t_quad_col, "TQ_len", tq_const, qcols_full);
    w.l("for (int i = N_WI * lid0 + lid1; i < N_w * Tqr_len * Tqc_len; i += N_c * N_WI) {");
    w.l("const int k = i / (Tqr_len * Tqc_len);");
    w.l("const int i_r = (i % (Tqr_len * Tqc_len)) / Tqc_len;");
    w.l("const int j = i % Tqc_len;");
    w.l("B[k * T_q_r * T_q_c + T_q_c * i_r + j] = Psi[(k * n_W + i0 + i_r) * Q + q0 + c0 + j];");
    w.l("}");
    w.l(format!("{barrier} // quad_prefetch"));
    w.l("for (int s = 0; s < S_q; ++s) {");
    w.l("const int r = N_WI * s + lid1;");
    if quad_mask {
        w.l("if (r < Tqr_len) {");
    }
    w.l("for (int k = 0; k < N_w; ++k)");
    w.l("    for (int j = 0; j < Tqc_len; ++j)");
    w.l("        out_acc[s] += B[k * T_q_r * T_q_c + T_q_c * r + j] * e[(k * N_c + lid0) * T_Q + c0 + j];");
    if quad_mask {
        w.l("}");
    }
    w.l("}");
    w.l(format!("{barrier} // quad_compute"));
    w.l("}");
    w.l("if (live) {");
    w.l("for (int s = 0; s < S_q; ++s) {");
    w.l("const int r = N_WI * s + lid1;");
    if quad_mask {
        w.l("if (r < Tqr_len)");
        w.ind += 1;
    }
    w.l(format!("{}(&out[map_out[i_cell * n_W + i0 + r]], out_acc[s]);", dialect.atomic_add()));
    if quad_mask {
        w.ind -= 1;
    }
    w.l("}");
    w.l("}");
    w.l("}");
    w.l(format!("{barrier} // quad_tile_end"));
    w.l("}");
    w.l("}");

    KernelSource {
        entry: entry.into(),
        dialect,
        source: w.s,
        launch: LaunchGeometry { local_size: [p.n_cells_wg, p.n_wi], cells_per_workgroup: p.n_cells_wg },
        manifest,
    }
}
