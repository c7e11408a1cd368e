use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::{simplex_space_dim, Expr, FormError, FormSignature, Input, PointwiseMap, ScalarSpace, VectorSpace};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Operator {
    Mass,
    Laplace,
    Helmholtz,
    Elasticity,
    Hyperelasticity,
}

impl Operator {
    pub const ALL: [Operator; 5] = [
        Operator::Mass,
        Operator::Laplace,
        Operator::Helmholtz,
        Operator::Elasticity,
        Operator::Hyperelasticity,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Operator::Mass => "mass",
            Operator::Laplace => "laplace",
            Operator::Helmholtz => "helmholtz",
            Operator::Elasticity => "elasticity",
            Operator::Hyperelasticity => "hyperelasticity",
        }
    }

    fn dims(self) -> &'static [usize] {
        match self {
            Operator::Mass | Operator::Laplace | Operator::Helmholtz => &[1, 2, 3],
            Operator::Elasticity | Operator::Hyperelasticity => &[2, 3],
        }
    }
}

impl fmt::Display for Operator {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Operator {
    type Err = FormError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "mass" => Ok(Operator::Mass),
            "laplace" | "poisson" => Ok(Operator::Laplace),
            "helmholtz" => Ok(Operator::Helmholtz),
            "elasticity" => Ok(Operator::Elasticity),
            "hyperelasticity" => Ok(Operator::Hyperelasticity),
            other => Err(FormError::Unsupported(format!("unknown operator '{other}'"))),
        }
    }
}

/// Signature of a standard operator on affine `P_degree` simplices.
pub fn preset_signature(op: Operator, d: usize, degree: usize, q: usize) -> Result<FormSignature, FormError> {
    if !op.dims().contains(&d) {
        return Err(FormError::Unsupported(format!("{op} in {d}D")));
    }
    if degree == 0 {
        return Err(FormError::Unsupported(format!("{op} needs degree >= 1")));
    }
    if q == 0 {
        return Err(FormError::Unsupported("Q must be at least 1".into()));
    }
    let n = simplex_space_dim(degree, d);
    let scalar = |n_deriv| (vec![ScalarSpace { n, n_deriv }], Vec::new(), n, n_deriv);
    let (scalar_spaces, vector_spaces, n_test, n_deriv_test) = match op {
        Operator::Mass => scalar(1),
        Operator::Laplace => scalar(d),
        Operator::Helmholtz => scalar(d + 1),
        Operator::Elasticity | Operator::Hyperelasticity => (
            Vec::new(),
            vec![VectorSpace {
                n,
                n_deriv: d * d,
                components: (0..d * d).map(|t| t / d).collect(),
                geometry: false,
            }],
            d * n,
            d * d,
        ),
    };
    let sig = FormSignature {
        dim: d,
        scalar_spaces,
        vector_spaces,
        n_test,
        n_deriv_test,
        n_quad: q,
        n_coord: d + 1,
        affine: true,
        word_bytes: 8,
    };
    sig.validate()?;
    Ok(sig)
}

fn inp(i: Input) -> Expr {
    Expr::Input(i)
}

fn adj(r: usize, c: usize) -> Expr {
    inp(Input::Adjugate { row: r, col: c })
}

/// `Σ_b (adj·adjᵀ)_{ab} ∂_b u`, the reference-to-physical gradient metric
/// applied to scalar space 0.
fn metric_row(d: usize, a: usize) -> Expr {
    Expr::Add(
        (0..d)
            .map(|b| {
                let g = Expr::Add((0..d).map(|c| Expr::Mul(vec![adj(a, c), adj(b, c)])).collect());
                Expr::Mul(vec![g, inp(Input::ScalarDeriv { space: 0, term: b })])
            })
            .collect(),
    )
}

/// Physical displacement gradient `G_pb = (1/det) Σ_k ∂_k u_p adj_kb`.
fn phys_grad(d: usize, p: usize, b: usize) -> Expr {
    Expr::Mul(vec![
        inp(Input::InvDet),
        Expr::Add(
            (0..d)
                .map(|k| Expr::Mul(vec![inp(Input::VectorDeriv { space: 0, term: p * d + k }), adj(k, b)]))
                .collect(),
        ),
    ])
}

/// Outputs `e_{(c,a)} = w Σ_j adj_aj Σ_{pb} A[c][j][p][b] G_pb` for a constant
/// fourth-order tangent `A`.
fn tangent_map(d: usize, a4: &[[[[f64; 3]; 3]; 3]; 3]) -> PointwiseMap {
    let mut outputs = Vec::with_capacity(d * d);
    for c in 0..d {
        for a in 0..d {
            let sum_j = (0..d)
                .map(|j| {
                    let terms: Vec<Expr> = (0..d)
                        .flat_map(|p| (0..d).map(move |b| (p, b)))
                        .filter(|&(p, b)| a4[c][j][p][b] != 0.0)
                        .map(|(p, b)| Expr::Mul(vec![Expr::Const(a4[c][j][p][b]), phys_grad(d, p, b)]))
                        .collect();
                    let stress = if terms.is_empty() { Expr::Const(0.0) } else { Expr::Add(terms) };
                    Expr::Mul(vec![adj(a, j), stress])
                })
                .collect();
            outputs.push(Expr::Mul(vec![inp(Input::Weight), Expr::Add(sum_j)]));
        }
    }
    PointwiseMap { outputs }
}

fn delta(i: usize, j: usize) -> f64 {
    if i == j {
        1.0
    } else {
        0.0
    }
}

/// Isotropic linear elasticity, `λ = μ = 1`.
fn linear_elastic_tangent(d: usize) -> [[[[f64; 3]; 3]; 3]; 3] {
    let (lambda, mu) = (1.0, 1.0);
    let mut a = [[[[0.0; 3]; 3]; 3]; 3];
    for c in 0..d {
        for j in 0..d {
            for p in 0..d {
                for b in 0..d {
                    a[c][j][p][b] =
                        lambda * delta(c, j) * delta(p, b) + mu * (delta(c, p) * delta(j, b) + delta(c, b) * delta(j, p));
                }
            }
        }
    }
    a
}

/// Fixed deformation gradient about which the hyperelastic operator is
/// linearized.
pub(crate) fn frozen_deformation(d: usize) -> [[f64; 3]; 3] {
    let mut f = [[0.0; 3]; 3];
    for (i, row) in f.iter_mut().enumerate().take(d) {
        for (j, v) in row.iter_mut().enumerate().take(d) {
            *v = delta(i, j) + 0.05 * (i as f64 + 1.0) - 0.03 * j as f64;
        }
    }
    f
}

/// Tangent of `P = F S`, `S = λ tr(E) I + 2μ E`, `E = (FᵀF − I)/2`
/// (St. Venant–Kirchhoff), at the frozen `F`; `λ = 1`, `μ = 0.5`.
fn svk_tangent(d: usize) -> [[[[f64; 3]; 3]; 3]; 3] {
    let (lambda, mu) = (1.0, 0.5);
    let f = frozen_deformation(d);
    let mut e = [[0.0; 3]; 3];
    for i in 0..d {
        for j in 0..d {
            e[i][j] = 0.5 * ((0..d).map(|k| f[k][i] * f[k][j]).sum::<f64>() - delta(i, j));
        }
    }
    let tr_e: f64 = (0..d).map(|i| e[i][i]).sum();
    let mut s = [[0.0; 3]; 3];
    for i in 0..d {
        for j in 0..d {
            s[i][j] = lambda * tr_e * delta(i, j) + 2.0 * mu * e[i][j];
        }
    }
    let mut a = [[[[0.0; 3]; 3]; 3]; 3];
    // dP[H]_cj = (H S)_cj + Σ_k F_ck dS[H]_kj, linear in H_pb
    for p in 0..d {
        for b in 0..d {
            let mut h = [[0.0; 3]; 3];
            h[p][b] = 1.0;
            let mut de = [[0.0; 3]; 3];
            for i in 0..d {
                for j in 0..d {
                    de[i][j] = 0.5 * (0..d).map(|k| f[k][i] * h[k][j] + h[k][i] * f[k][j]).sum::<f64>();
                }
            }
            let tr_de: f64 = (0..d).map(|i| de[i][i]).sum();
            for c in 0..d {
                for j in 0..d {
                    let hs: f64 = (0..d).map(|k| h[c][k] * s[k][j]).sum();
                    let fds: f64 = (0..d)
                        .map(|k| f[c][k] * (lambda * tr_de * delta(k, j) + 2.0 * mu * de[k][j]))
                        .sum();
                    a[c][j][p][b] = hs + fds;
                }
            }
        }
    }
    a
}

/// Pointwise mappings of a preset operator for a signature produced by
/// [`preset_signature`].
pub fn preset_map(op: Operator, sig: &FormSignature) -> Result<PointwiseMap, FormError> {
    let d = sig.dim;
    let w = || inp(Input::Weight);
    let mass = || Expr::Mul(vec![inp(Input::ScalarDeriv { space: 0, term: 0 }), w(), inp(Input::Det)]);
    let grad = |a| Expr::Mul(vec![metric_row(d, a), w(), inp(Input::InvDet)]);
    let map = match op {
        Operator::Mass => PointwiseMap { outputs: vec![mass()] },
        Operator::Laplace => PointwiseMap { outputs: (0..d).map(grad).collect() },
        Operator::Helmholtz => {
            let mut outputs: Vec<Expr> = (0..d).map(grad).collect();
            outputs.push(Expr::Mul(vec![inp(Input::ScalarDeriv { space: 0, term: d }), w(), inp(Input::Det)]));
            PointwiseMap { outputs }
        }
        Operator::Elasticity => tangent_map(d, &linear_elastic_tangent(d)),
        Operator::Hyperelasticity => tangent_map(d, &svk_tangent(d)),
    };
    map.validate(sig)?;
    Ok(map)
}
