use serde::{Deserialize, Serialize};

use super::{FormError, FormSignature};

/// Symbols a pointwise expression may read at one quadrature point.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(tag = "sym", rename_all = "snake_case")]
pub enum Input {
    /// `∂_term u_space`
    ScalarDeriv { space: usize, term: usize },
    /// `∂_term v_space`
    VectorDeriv { space: usize, term: usize },
    Jacobian { row: usize, col: usize },
    /// Adjugate of the Jacobian, `adj(J) = det(J)·J⁻¹`.
    Adjugate { row: usize, col: usize },
    Det,
    /// `1/det(J)`, precomputed with the geometry.
    InvDet,
    Weight,
    /// Cell coordinate `coords[node][dim]` (affine geometry only).
    Coord { node: usize, dim: usize },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Expr {
    Const(f64),
    Input(Input),
    Add(Vec<Expr>),
    Mul(Vec<Expr>),
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct OpCount {
    pub adds: u64,
    pub muls: u64,
}

impl OpCount {
    pub fn total(&self) -> u64 {
        self.adds + self.muls
    }
}

impl std::ops::AddAssign for OpCount {
    fn add_assign(&mut self, o: OpCount) {
        self.adds += o.adds;
        self.muls += o.muls;
    }
}

/// Jacobian-derived values, per cell (affine) or per quadrature point.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct GeometryInputs {
    pub jac: [[f64; 3]; 3],
    pub adj: [[f64; 3]; 3],
    pub det: f64,
    pub inv_det: f64,
}

impl GeometryInputs {
    pub fn from_jacobian(d: usize, jac: [[f64; 3]; 3]) -> Self {
        let j = |r: usize, c: usize| jac[r][c];
        let mut adj = [[0.0; 3]; 3];
        let det = match d {
            1 => {
                adj[0][0] = 1.0;
                j(0, 0)
            }
            2 => {
                adj[0][0] = j(1, 1);
                adj[0][1] = -j(0, 1);
                adj[1][0] = -j(1, 0);
                adj[1][1] = j(0, 0);
                j(0, 0) * j(1, 1) - j(0, 1) * j(1, 0)
            }
            _ => {
                for r in 0..3 {
                    for c in 0..3 {
                        // cofactor of (c, r)
                        let (r0, r1) = ((c + 1) % 3, (c + 2) % 3);
                        let (c0, c1) = ((r + 1) % 3, (r + 2) % 3);
                        adj[r][c] = j(r0, c0) * j(r1, c1) - j(r0, c1) * j(r1, c0);
                    }
                }
                j(0, 0) * adj[0][0] + j(0, 1) * adj[1][0] + j(0, 2) * adj[2][0]
            }
        };
        GeometryInputs { jac, adj, det, inv_det: 1.0 / det }
    }

    pub fn is_finite(&self) -> bool {
        self.det.is_finite()
            && self.inv_det.is_finite()
            && self.jac.iter().chain(self.adj.iter()).flatten().all(|v| v.is_finite())
    }
}

/// Everything a pointwise expression can see at one quadrature point.
pub struct QuadPointInputs<'a> {
    /// `scalar[i][k]` is `∂_k u_i` at this point.
    pub scalar: &'a [Vec<f64>],
    pub vector: &'a [Vec<f64>],
    pub geometry: &'a GeometryInputs,
    pub weight: f64,
    /// Row-major `n_coord × d` cell coordinates (affine geometry only).
    pub coords: &'a [f64],
    pub dim: usize,
}

impl Expr {
    pub fn constant(c: f64) -> Expr {
        Expr::Const(c)
    }

    pub fn input(i: Input) -> Expr {
        Expr::Input(i)
    }

    pub fn eval(&self, x: &QuadPointInputs<'_>, ops: &mut OpCount) -> f64 {
        match self {
            Expr::Const(c) => *c,
            Expr::Input(i) => match *i {
                Input::ScalarDeriv { space, term } => x.scalar[space][term],
                Input::VectorDeriv { space, term } => x.vector[space][term],
                Input::Jacobian { row, col } => x.geometry.jac[row][col],
                Input::Adjugate { row, col } => x.geometry.adj[row][col],
                Input::Det => x.geometry.det,
                Input::InvDet => x.geometry.inv_det,
                Input::Weight => x.weight,
                Input::Coord { node, dim } => x.coords[node * x.dim + dim],
            },
            Expr::Add(terms) => {
                let mut acc = 0.0;
                for (k, t) in terms.iter().enumerate() {
                    let v = t.eval(x, ops);
                    if k == 0 {
                        acc = v;
                    } else {
                        acc += v;
                        ops.adds += 1;
                    }
                }
                acc
            }
            Expr::Mul(terms) => {
                let mut acc = 1.0;
                for (k, t) in terms.iter().enumerate() {
                    let v = t.eval(x, ops);
                    if k == 0 {
                        acc = v;
                    } else {
                        acc *= v;
                        ops.muls += 1;
                    }
                }
                acc
            }
        }
    }

    fn visit_inputs(&self, f: &mut impl FnMut(&Input)) {
        match self {
            Expr::Const(_) => {}
            Expr::Input(i) => f(i),
            Expr::Add(t) | Expr::Mul(t) => t.iter().for_each(|e| e.visit_inputs(f)),
        }
    }

    fn has_empty_node(&self) -> bool {
        match self {
            Expr::Const(_) | Expr::Input(_) => false,
            Expr::Add(t) | Expr::Mul(t) => t.is_empty() || t.iter().any(Expr::has_empty_node),
        }
    }
}

/// The mappings `g_j`: one expression per test derivative term.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PointwiseMap {
    pub outputs: Vec<Expr>,
}

impl PointwiseMap {
    pub fn validate(&self, sig: &FormSignature) -> Result<(), FormError> {
        if self.outputs.len() != sig.n_deriv_test {
            return Err(FormError::Expr(format!(
                "{} expressions for {} test derivative terms",
                self.outputs.len(),
                sig.n_deriv_test
            )));
        }
        let d = sig.dim;
        for (j, e) in self.outputs.iter().enumerate() {
            if e.has_empty_node() {
                return Err(FormError::Expr(format!("e{j}: empty add/mul node")));
            }
            let mut err = None;
            e.visit_inputs(&mut |i| {
                let ok = match *i {
                    Input::ScalarDeriv { space, term } => sig
                        .scalar_spaces
                        .get(space)
                        .is_some_and(|s| term < s.n_deriv),
                    Input::VectorDeriv { space, term } => sig
                        .vector_spaces
                        .get(space)
                        .is_some_and(|s| term < s.n_deriv),
                    Input::Jacobian { row, col } | Input::Adjugate { row, col } => {
                        row < d && col < d
                    }
                    Input::Det | Input::InvDet | Input::Weight => true,
                    Input::Coord { node, dim } => sig.affine && node < sig.n_coord && dim < d,
                };
                if !ok && err.is_none() {
                    err = Some(format!("e{j} references undeclared symbol {i:?}"));
                }
            });
            if let Some(m) = err {
                return Err(FormError::Expr(m));
            }
        }
        Ok(())
    }

    /// A dense linear combination of every derivative variable, scaled by
    /// `w·det`. Coefficients depend only on indices.
    pub fn generic(sig: &FormSignature) -> PointwiseMap {
        let mut vars = Vec::new();
        for (i, s) in sig.scalar_spaces.iter().enumerate() {
            for k in 0..s.n_deriv {
                vars.push(Input::ScalarDeriv { space: i, term: k });
            }
        }
        for (i, v) in sig.vector_spaces.iter().enumerate() {
            if v.geometry {
                continue;
            }
            for k in 0..v.n_deriv {
                vars.push(Input::VectorDeriv { space: i, term: k });
            }
        }
        let outputs = (0..sig.n_deriv_test)
            .map(|j| {
                let terms = vars
                    .iter()
                    .enumerate()
                    .map(|(v, &inp)| {
                        let c = 1.0 / (1.0 + ((j + 2 * v) % 5) as f64) * if (j + v) % 3 == 0 { -1.0 } else { 1.0 };
                        Expr::Mul(vec![Expr::Const(c), Expr::Input(inp)])
                    })
                    .collect::<Vec<_>>();
                let lin = if terms.is_empty() { Expr::Const(1.0) } else { Expr::Add(terms) };
                Expr::Mul(vec![lin, Expr::Input(Input::Weight), Expr::Input(Input::Det)])
            })
            .collect();
        PointwiseMap { outputs }
    }

    /// Evaluates all outputs at one point.
    pub fn apply(&self, x: &QuadPointInputs<'_>, out: &mut [f64], ops: &mut OpCount) {
        for (o, e) in out.iter_mut().zip(&self.outputs) {
            *o = e.eval(x, ops);
        }
    }
}
