//! Cubic B-splines on a uniform frequency knot grid.
//!
//! Basis `B_k`, `k = -3, …, K`, has support `[kΔ, (k+4)Δ]`. The knot grid is
//! extended to `(K+4)Δ` so that every basis function touching `[0, ω_t]` is
//! fully defined; on `[0, (K+1)Δ]` the basis is a partition of unity.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const ORDER: usize = 4;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KnotConfig {
    delta: f64,
    k: usize,
    omega_t: f64,
}

impl KnotConfig {
    /// Requires `ω_t ∈ (KΔ, (K+1)Δ]`.
    pub fn new(delta: f64, k: usize, omega_t: f64) -> Result<Self> {
        if !(delta > 0.0 && delta.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "knot spacing must be positive, got {delta}"
            )));
        }
        if !(omega_t > 0.0 && omega_t.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "threshold frequency must be positive, got {omega_t}"
            )));
        }
        let lo = k as f64 * delta;
        let hi = (k + 1) as f64 * delta;
        if !(omega_t > lo && omega_t <= hi) {
            return Err(Error::InvalidParameter(format!(
                "threshold frequency {omega_t} not in ({lo}, {hi}] for K = {k}, Δ = {delta}"
            )));
        }
        Ok(Self { delta, k, omega_t })
    }

    /// Derives the smallest admissible `K` for a given spacing.
    pub fn from_delta(delta: f64, omega_t: f64) -> Result<Self> {
        if !(delta > 0.0) || !(omega_t > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "knot spacing {delta} and threshold {omega_t} must be positive"
            )));
        }
        let ratio = omega_t / delta;
        let mut k = ratio.ceil() as i64 - 1;
        // guard against ratio landing a hair above an integer
        if ((k + 1) as f64) * delta < omega_t {
            k += 1;
        }
        Self::new(delta, k.max(0) as usize, omega_t)
    }

    /// Picks `Δ = ω_t / (K + 1/2)`, the midpoint of the admissible spacings.
    pub fn from_k(k: usize, omega_t: f64) -> Result<Self> {
        Self::new(omega_t / (k as f64 + 0.5), k, omega_t)
    }

    pub fn delta(&self) -> f64 {
        self.delta
    }

    /// Index of the last coefficient.
    pub fn k(&self) -> usize {
        self.k
    }

    pub fn omega_t(&self) -> f64 {
        self.omega_t
    }

    /// Number of basis functions, `K + 4`.
    pub fn n_basis(&self) -> usize {
        self.k + ORDER
    }

    /// Basis indices `-3, …, K`.
    pub fn indices(&self) -> impl Iterator<Item = i64> {
        -3..=self.k as i64
    }

    fn knot(&self, j: i64) -> f64 {
        j as f64 * self.delta
    }

    fn check_omega(&self, omega: f64) -> Result<()> {
        if omega >= 0.0 && omega <= self.omega_t {
            Ok(())
        } else {
            Err(Error::OutOfDomain {
                what: "frequency",
                value: omega,
                lo: 0.0,
                hi: self.omega_t,
            })
        }
    }
}

/// Value of `B_k(ω)` by the Cox–de Boor recursion.
pub fn basis_eval(cfg: &KnotConfig, k: i64, omega: f64) -> Result<f64> {
    if k < -3 || k > cfg.k as i64 {
        return Err(Error::BasisIndex {
            index: k,
            lo: -3,
            hi: cfg.k as i64,
        });
    }
    cfg.check_omega(omega)?;
    Ok(cox_de_boor(cfg, k, ORDER - 1, omega))
}

fn cox_de_boor(cfg: &KnotConfig, j: i64, degree: usize, x: f64) -> f64 {
    let tj = cfg.knot(j);
    if degree == 0 {
        return if tj <= x && x < cfg.knot(j + 1) { 1.0 } else { 0.0 };
    }
    let r = degree as i64;
    let left = (x - tj) / (cfg.knot(j + r) - tj) * cox_de_boor(cfg, j, degree - 1, x);
    let t_end = cfg.knot(j + r + 1);
    let right =
        (t_end - x) / (t_end - cfg.knot(j + 1)) * cox_de_boor(cfg, j + 1, degree - 1, x);
    left + right
}

/// All `K + 4` basis values at `ω`, ordered `k = -3, …, K`. At most four
/// entries are nonzero.
pub fn basis_row(cfg: &KnotConfig, omega: f64) -> Result<Vec<f64>> {
    cfg.check_omega(omega)?;
    let mut row = vec![0.0; cfg.n_basis()];
    let (first, vals) = local_basis(cfg, omega);
    for (s, v) in vals.iter().enumerate() {
        let k = first + s as i64;
        if k >= -3 && k <= cfg.k as i64 {
            row[(k + 3) as usize] = *v;
        }
    }
    Ok(row)
}

/// The four basis functions that can be nonzero on the knot interval
/// containing `x`: returns the index of the first and their values.
fn local_basis(cfg: &KnotConfig, x: f64) -> (i64, [f64; ORDER]) {
    let span = (x / cfg.delta).floor() as i64;
    let mut n = [0.0; ORDER];
    let mut left = [0.0; ORDER];
    let mut right = [0.0; ORDER];
    n[0] = 1.0;
    for r in 1..ORDER {
        left[r] = x - cfg.knot(span + 1 - r as i64);
        right[r] = cfg.knot(span + r as i64) - x;
        let mut saved = 0.0;
        for s in 0..r {
            let temp = n[s] / (right[s + 1] + left[r - s]);
            n[s] = saved + right[s + 1] * temp;
            saved = left[r - s] * temp;
        }
        n[r] = saved;
    }
    (span - 3, n)
}
