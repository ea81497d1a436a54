//! Sufficient validity conditions on the spline coefficients.
//!
//! Collecting the `k`-th coefficient of every pair into a unit-diagonal
//! matrix `β_k` gives `K + 4` matrices; if all are nonnegative definite the
//! synthesized multivariate covariance is valid. For two components this is
//! the box `|b_k| ≤ 1`.

use serde::{Deserialize, Serialize};

use crate::bspline::KnotConfig;
use crate::error::{Error, Result};
use crate::linalg::{min_eigenvalue, Matrix};
use crate::spectral::{n_pairs, pair_index, pairs, SplineCoherenceSpec};

/// Largest coefficient magnitude reachable by the optimizer's transforms.
pub const COEFF_BOUND: f64 = 1.0 - 1e-6;

/// Eigenvalue tolerance per component.
pub const NND_TOL_PER_COMPONENT: f64 = 1e-10;

/// `β_k`, `k = -3, …, K`, each stored row-major `p × p`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BetaMatrices {
    p: usize,
    mats: Vec<Vec<f64>>,
}

impl BetaMatrices {
    pub fn new(p: usize, mats: Vec<Vec<f64>>) -> Result<Self> {
        for (idx, m) in mats.iter().enumerate() {
            if m.len() != p * p {
                return Err(Error::Dimension(format!(
                    "beta matrix {idx} has {} entries, expected {}",
                    m.len(),
                    p * p
                )));
            }
            for i in 0..p {
                if m[i * p + i] != 1.0 {
                    return Err(Error::InvalidParameter(format!(
                        "beta matrix {idx} has diagonal entry {} at {i}",
                        m[i * p + i]
                    )));
                }
                for j in 0..i {
                    if m[i * p + j] != m[j * p + i] {
                        return Err(Error::InvalidParameter(format!(
                            "beta matrix {idx} is not symmetric at ({i}, {j})"
                        )));
                    }
                }
            }
        }
        Ok(Self { p, mats })
    }

    /// Collects the coefficients of a spline spec.
    pub fn from_spec(spec: &SplineCoherenceSpec) -> Result<Self> {
        let p = spec.p;
        let nb = spec.knots.n_basis();
        let mut mats = vec![identity(p); nb];
        for (i, j) in pairs(p) {
            let b = spec.coeffs(i, j)?;
            if b.len() != nb {
                return Err(Error::Dimension(format!(
                    "pair ({i}, {j}) has {} coefficients, expected {nb}",
                    b.len()
                )));
            }
            for (k, m) in mats.iter_mut().enumerate() {
                m[i * p + j] = b[k];
                m[j * p + i] = b[k];
            }
        }
        Ok(Self { p, mats })
    }

    /// Spline spec whose coefficient `b_k^{(ij)}` is `β_k[i][j]`.
    pub fn to_spec(&self, knots: KnotConfig) -> Result<SplineCoherenceSpec> {
        if self.mats.len() != knots.n_basis() {
            return Err(Error::Dimension(format!(
                "{} beta matrices for {} basis functions",
                self.mats.len(),
                knots.n_basis()
            )));
        }
        let p = self.p;
        let coeffs = pairs(p)
            .map(|(i, j)| self.mats.iter().map(|m| m[i * p + j]).collect())
            .collect();
        SplineCoherenceSpec::from_vectors(knots, p, coeffs)
    }

    pub fn p(&self) -> usize {
        self.p
    }

    pub fn len(&self) -> usize {
        self.mats.len()
    }

    pub fn is_empty(&self) -> bool {
        self.mats.is_empty()
    }

    /// Entry `(i, j)` of the matrix at position `idx` (0 ↔ `k = -3`).
    pub fn get(&self, idx: usize, i: usize, j: usize) -> f64 {
        self.mats[idx][i * self.p + j]
    }

    pub fn matrix(&self, idx: usize) -> Matrix<f64> {
        let p = self.p;
        Matrix::from_fn(p, p, |i, j| self.mats[idx][i * p + j])
    }

    pub fn min_eigenvalues(&self) -> Result<Vec<f64>> {
        (0..self.mats.len())
            .map(|idx| min_eigenvalue(&self.matrix(idx)))
            .collect()
    }
}

fn identity(p: usize) -> Vec<f64> {
    let mut m = vec![0.0; p * p];
    for i in 0..p {
        m[i * p + i] = 1.0;
    }
    m
}

/// Upper-triangular row parameters: for each `k`, the `t_{ij,k}`, `i < j`, in
/// pair order; `t_{ii,k} = 1`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CholeskyRowParams {
    pub p: usize,
    pub t: Vec<Vec<f64>>,
}

/// Per-`k` positions `t_{i,k}` on the real line.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExpDistanceParams {
    pub p: usize,
    pub t: Vec<Vec<f64>>,
}

/// `Λ_ij = Σ_{l ≥ max(i,j)} t_il t_jl / (‖t_i‖ ‖t_j‖)`, the correlation matrix of
/// the rows of a unit upper-triangular matrix.
pub fn beta_from_cholesky_rows(params: &CholeskyRowParams) -> Result<BetaMatrices> {
    let p = params.p;
    let mut mats = Vec::with_capacity(params.t.len());
    for (idx, tk) in params.t.iter().enumerate() {
        if tk.len() != n_pairs(p) {
            return Err(Error::Dimension(format!(
                "Cholesky-row set {idx} has {} entries, expected {}",
                tk.len(),
                n_pairs(p)
            )));
        }
        let mut rows = vec![vec![0.0; p]; p];
        for i in 0..p {
            rows[i][i] = 1.0;
            for j in i + 1..p {
                rows[i][j] = tk[pair_index(p, i, j)];
            }
        }
        let norms: Vec<f64> = rows
            .iter()
            .map(|r| r.iter().map(|v| v * v).sum::<f64>().sqrt())
            .collect();
        if norms.iter().any(|n| !(*n > 0.0 && n.is_finite())) {
            return Err(Error::Degenerate(format!(
                "Cholesky-row set {idx} has a zero or non-finite row norm"
            )));
        }
        let mut m = identity(p);
        for (i, j) in pairs(p) {
            let dot: f64 = (j..p).map(|l| rows[i][l] * rows[j][l]).sum();
            let v = (dot / (norms[i] * norms[j])).clamp(-1.0, 1.0);
            m[i * p + j] = v;
            m[j * p + i] = v;
        }
        mats.push(m);
    }
    Ok(BetaMatrices { p, mats })
}

/// `Λ_ij = exp(-|t_i - t_j|)`.
pub fn beta_from_expdist(params: &ExpDistanceParams) -> Result<BetaMatrices> {
    let p = params.p;
    let mut mats = Vec::with_capacity(params.t.len());
    for (idx, tk) in params.t.iter().enumerate() {
        if tk.len() != p {
            return Err(Error::Dimension(format!(
                "distance set {idx} has {} entries, expected {p}",
                tk.len()
            )));
        }
        let mut m = identity(p);
        for (i, j) in pairs(p) {
            let v = (-(tk[i] - tk[j]).abs()).exp();
            m[i * p + j] = v;
            m[j * p + i] = v;
        }
        mats.push(m);
    }
    Ok(BetaMatrices { p, mats })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Violation {
    /// Basis index in `-3, …, K`.
    pub k: i64,
    /// Offending pair for box violations, absent for eigenvalue failures.
    pub pair: Option<(usize, usize)>,
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValidityReport {
    pub valid: bool,
    pub p: usize,
    /// Smallest eigenvalue of each `β_k`.
    pub min_eigenvalues: Vec<f64>,
    pub tolerance: f64,
    pub violations: Vec<Violation>,
}

/// For `p = 2` checks every coefficient against `[-1, 1]`; for `p > 2` checks
/// the smallest eigenvalue of every `β_k` against `-1e-10 · p`.
pub fn check_validity(spec: &SplineCoherenceSpec, p: usize) -> Result<ValidityReport> {
    if spec.p != p {
        return Err(Error::Dimension(format!(
            "spec has p = {}, check requested for p = {p}",
            spec.p
        )));
    }
    let beta = BetaMatrices::from_spec(spec)?;
    let min_eigenvalues = beta.min_eigenvalues()?;
    let tolerance = NND_TOL_PER_COMPONENT * p as f64;
    let mut violations = Vec::new();
    let first_k = -3i64;
    if p == 2 {
        let b = spec.coeffs(0, 1)?;
        for (idx, v) in b.iter().enumerate() {
            if !(v.abs() <= 1.0) {
                violations.push(Violation {
                    k: first_k + idx as i64,
                    pair: Some((0, 1)),
                    value: *v,
                });
            }
        }
    } else {
        for (idx, ev) in min_eigenvalues.iter().enumerate() {
            if !(*ev >= -tolerance) {
                violations.push(Violation {
                    k: first_k + idx as i64,
                    pair: None,
                    value: *ev,
                });
            }
        }
    }
    Ok(ValidityReport {
        valid: violations.is_empty(),
        p,
        min_eigenvalues,
        tolerance,
        violations,
    })
}
