//! Dense symmetric linear algebra on top of `faer`.

use faer::{Mat, Side};

use crate::error::{Error, Result};

pub use faer::Mat as Matrix;

const JITTER_START: f64 = 1e-10;
const JITTER_MAX: f64 = 1e-4;

/// Lower Cholesky factor `L` of `Σ + εI`.
#[derive(Debug, Clone)]
pub struct Cholesky {
    l: Mat<f64>,
    jitter: f64,
}

impl Cholesky {
    /// Factors `a` (lower triangle read). If the plain factorization fails, a
    /// diagonal jitter of `1e-10 · mean(diag)` is added and raised tenfold until
    /// it succeeds or exceeds `1e-4 · mean(diag)`.
    pub fn new(a: &Mat<f64>) -> Result<Self> {
        let n = a.nrows();
        if a.ncols() != n {
            return Err(Error::Dimension(format!(
                "Cholesky of a {}×{} matrix",
                n,
                a.ncols()
            )));
        }
        if let Ok(llt) = a.llt(Side::Lower) {
            return Ok(Self {
                l: llt.L().to_owned(),
                jitter: 0.0,
            });
        }
        let mean_diag = (0..n).map(|i| a[(i, i)]).sum::<f64>() / n.max(1) as f64;
        let scale = if mean_diag > 0.0 && mean_diag.is_finite() {
            mean_diag
        } else {
            1.0
        };
        let mut rel = JITTER_START;
        let mut work = a.clone();
        while rel <= JITTER_MAX * (1.0 + 1e-9) {
            let eps = rel * scale;
            for i in 0..n {
                work[(i, i)] = a[(i, i)] + eps;
            }
            if let Ok(llt) = work.llt(Side::Lower) {
                log::debug!("Cholesky succeeded with jitter {eps:e}");
                return Ok(Self {
                    l: llt.L().to_owned(),
                    jitter: eps,
                });
            }
            rel *= 10.0;
        }
        Err(Error::Factorization {
            max_jitter: JITTER_MAX * scale,
        })
    }

    pub fn dim(&self) -> usize {
        self.l.nrows()
    }

    /// Diagonal jitter that was needed, 0 if none.
    pub fn jitter(&self) -> f64 {
        self.jitter
    }

    pub fn factor(&self) -> &Mat<f64> {
        &self.l
    }

    pub fn log_det(&self) -> f64 {
        2.0 * (0..self.dim()).map(|i| self.l[(i, i)].ln()).sum::<f64>()
    }

    /// `L⁻¹ x`.
    pub fn whiten(&self, x: &[f64]) -> Vec<f64> {
        let mut rhs = col(x);
        self.l.solve_lower_triangular_in_place(&mut rhs);
        (0..x.len()).map(|i| rhs[(i, 0)]).collect()
    }

    /// `L⁻¹ B` for a block of right-hand sides.
    pub fn whiten_mat(&self, b: &Mat<f64>) -> Mat<f64> {
        let mut rhs = b.clone();
        self.l.solve_lower_triangular_in_place(&mut rhs);
        rhs
    }

    /// `Σ⁻¹ x`.
    pub fn solve(&self, x: &[f64]) -> Vec<f64> {
        let mut rhs = col(x);
        self.l.solve_lower_triangular_in_place(&mut rhs);
        self.l.transpose().solve_upper_triangular_in_place(&mut rhs);
        (0..x.len()).map(|i| rhs[(i, 0)]).collect()
    }

    /// `xᵀ Σ⁻¹ x`.
    pub fn quad_form(&self, x: &[f64]) -> f64 {
        self.whiten(x).iter().map(|v| v * v).sum()
    }

    /// `L z`, used to colour white noise.
    pub fn colour(&self, z: &[f64]) -> Vec<f64> {
        let n = self.dim();
        let mut out = vec![0.0; n];
        for j in 0..n {
            let zj = z[j];
            if zj == 0.0 {
                continue;
            }
            let c = self.l.col(j);
            for i in j..n {
                out[i] += c[i] * zj;
            }
        }
        out
    }
}

fn col(x: &[f64]) -> Mat<f64> {
    Mat::from_fn(x.len(), 1, |i, _| x[i])
}

/// Eigenvalues of a symmetric matrix in nondecreasing order.
pub fn symmetric_eigenvalues(a: &Mat<f64>) -> Result<Vec<f64>> {
    a.self_adjoint_eigenvalues(Side::Lower)
        .map_err(|e| Error::Degenerate(format!("eigenvalue iteration failed: {e:?}")))
}

pub fn min_eigenvalue(a: &Mat<f64>) -> Result<f64> {
    Ok(symmetric_eigenvalues(a)?.first().copied().unwrap_or(f64::NAN))
}

/// Builds a matrix from row-major nested vectors.
pub fn from_rows(rows: &[Vec<f64>]) -> Mat<f64> {
    let n = rows.len();
    let m = rows.first().map_or(0, |r| r.len());
    Mat::from_fn(n, m, |i, j| rows[i][j])
}
