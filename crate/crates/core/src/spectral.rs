//! Isotropic spectral densities and coherence functions.
//!
//! The marginal density is the Matérn density truncated at the threshold
//! frequency `ω_t`; the cross density between components `i` and `j` is
//! `γ_ij(ω) √(f_ii(ω) f_jj(ω))` with `γ_ij` a cubic B-spline expansion.
//! Coherence formulas for the full bivariate Matérn and for the linear model of
//! coregionalization are provided for comparison; those are defined for all
//! `ω ≥ 0`.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::bspline::{basis_row, KnotConfig};
use crate::error::{Error, Result};
use crate::specfun::ln_gamma;

/// Matérn triple `(σ, ν, a)` of one component plus its nugget variance.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MarginalParams {
    pub sigma: f64,
    pub nu: f64,
    pub a: f64,
    #[serde(default)]
    pub nugget: f64,
}

impl MarginalParams {
    pub fn new(sigma: f64, nu: f64, a: f64) -> Self {
        Self {
            sigma,
            nu,
            a,
            nugget: 0.0,
        }
    }

    pub fn with_nugget(mut self, nugget: f64) -> Self {
        self.nugget = nugget;
        self
    }

    pub fn validate(&self) -> Result<()> {
        let ok = |v: f64| v.is_finite() && v > 0.0;
        if !ok(self.sigma) || !ok(self.nu) || !ok(self.a) {
            return Err(Error::InvalidParameter(format!(
                "Matérn parameters must be positive: sigma={}, nu={}, a={}",
                self.sigma, self.nu, self.a
            )));
        }
        if !(self.nugget.is_finite() && self.nugget >= 0.0) {
            return Err(Error::InvalidParameter(format!(
                "nugget must be nonnegative, got {}",
                self.nugget
            )));
        }
        Ok(())
    }

    pub fn variance(&self) -> f64 {
        self.sigma * self.sigma
    }
}

/// A Matérn spectral density with its normalizing constant precomputed.
#[derive(Debug, Clone, Copy)]
pub struct MaternSpectrum {
    ln_const: f64,
    a2: f64,
    power: f64,
}

impl MaternSpectrum {
    pub fn new(p: &MarginalParams, d: usize) -> Result<Self> {
        p.validate()?;
        Self::from_parts(p.sigma * p.sigma, p.nu, p.a, d)
    }

    /// Density with variance `var` (any sign handled by the caller).
    pub fn from_parts(var: f64, nu: f64, a: f64, d: usize) -> Result<Self> {
        if d == 0 {
            return Err(Error::InvalidParameter("dimension must be ≥ 1".into()));
        }
        if !(var > 0.0 && nu > 0.0 && a > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "Matérn density needs positive variance, smoothness and scale: {var}, {nu}, {a}"
            )));
        }
        let half_d = d as f64 / 2.0;
        let ln_const = var.ln() + ln_gamma(nu + half_d) - ln_gamma(nu) + 2.0 * nu * a.ln()
            - half_d * PI.ln();
        Ok(Self {
            ln_const,
            a2: a * a,
            power: nu + half_d,
        })
    }

    pub fn eval(&self, omega: f64) -> f64 {
        (self.ln_const - self.power * (self.a2 + omega * omega).ln()).exp()
    }

    pub fn ln_eval(&self, omega: f64) -> f64 {
        self.ln_const - self.power * (self.a2 + omega * omega).ln()
    }
}

/// `f_ii(ω) = σ² Γ(ν+d/2) a^{2ν} / (Γ(ν) π^{d/2} (a²+ω²)^{ν+d/2})`.
///
/// Truncation at `ω_t` is the caller's concern.
pub fn matern_sdf(p: &MarginalParams, omega: f64, d: usize) -> Result<f64> {
    if !(omega >= 0.0) {
        return Err(Error::OutOfDomain {
            what: "frequency",
            value: omega,
            lo: 0.0,
            hi: f64::INFINITY,
        });
    }
    Ok(MaternSpectrum::new(p, d)?.eval(omega))
}

/// Frequencies `{δ, 2δ, …, mδ}` with `mδ = ω_t`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FrequencyGrid {
    m: usize,
    omega_t: f64,
}

impl FrequencyGrid {
    pub fn new(omega_t: f64, m: usize) -> Result<Self> {
        if m == 0 || !(omega_t > 0.0 && omega_t.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "frequency grid needs m ≥ 1 and ω_t > 0, got m={m}, ω_t={omega_t}"
            )));
        }
        Ok(Self { m, omega_t })
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn omega_t(&self) -> f64 {
        self.omega_t
    }

    pub fn delta_f(&self) -> f64 {
        self.omega_t / self.m as f64
    }

    /// The `j`-th frequency, `j = 1, …, m`; the last one is `ω_t` exactly.
    pub fn frequency(&self, j: usize) -> f64 {
        self.omega_t * j as f64 / self.m as f64
    }

    pub fn frequencies(&self) -> impl Iterator<Item = f64> + '_ {
        (1..=self.m).map(move |j| self.frequency(j))
    }
}

/// B-spline coefficients of one unordered pair `(i, j)`, `i < j`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairCoefficients {
    pub i: usize,
    pub j: usize,
    pub b: Vec<f64>,
}

/// Knot configuration and coefficient sets `S_ij` for every pair.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplineCoherenceSpec {
    pub knots: KnotConfig,
    pub p: usize,
    pub pairs: Vec<PairCoefficients>,
}

/// Position of pair `(i, j)`, `i < j`, in row-major upper-triangle order.
pub fn pair_index(p: usize, i: usize, j: usize) -> usize {
    let (i, j) = if i < j { (i, j) } else { (j, i) };
    i * p - i * (i + 1) / 2 + (j - i - 1)
}

pub fn n_pairs(p: usize) -> usize {
    p * (p.saturating_sub(1)) / 2
}

/// All pairs `(i, j)`, `i < j`, in `pair_index` order.
pub fn pairs(p: usize) -> impl Iterator<Item = (usize, usize)> {
    (0..p).flat_map(move |i| (i + 1..p).map(move |j| (i, j)))
}

impl SplineCoherenceSpec {
    /// All pairs share the same constant coefficient.
    pub fn constant(knots: KnotConfig, p: usize, value: f64) -> Self {
        let pairs = pairs(p)
            .map(|(i, j)| PairCoefficients {
                i,
                j,
                b: vec![value; knots.n_basis()],
            })
            .collect();
        Self { knots, p, pairs }
    }

    /// Builds a spec from per-pair coefficient vectors in `pair_index` order.
    pub fn from_vectors(knots: KnotConfig, p: usize, coeffs: Vec<Vec<f64>>) -> Result<Self> {
        if coeffs.len() != n_pairs(p) {
            return Err(Error::Dimension(format!(
                "{} coefficient sets for {} pairs",
                coeffs.len(),
                n_pairs(p)
            )));
        }
        let pairs = pairs(p)
            .zip(coeffs)
            .map(|((i, j), b)| PairCoefficients { i, j, b })
            .collect();
        let spec = Self { knots, p, pairs };
        spec.check_shape()?;
        Ok(spec)
    }

    pub fn check_shape(&self) -> Result<()> {
        for pc in &self.pairs {
            if pc.i == pc.j || pc.i >= self.p || pc.j >= self.p {
                return Err(Error::Dimension(format!(
                    "invalid pair ({}, {}) for p = {}",
                    pc.i, pc.j, self.p
                )));
            }
            if pc.b.len() != self.knots.n_basis() {
                return Err(Error::Dimension(format!(
                    "pair ({}, {}) has {} coefficients, expected K+4 = {}",
                    pc.i,
                    pc.j,
                    pc.b.len(),
                    self.knots.n_basis()
                )));
            }
        }
        Ok(())
    }

    /// `S_ij`; symmetric in `(i, j)`.
    pub fn coeffs(&self, i: usize, j: usize) -> Result<&[f64]> {
        let (lo, hi) = if i < j { (i, j) } else { (j, i) };
        self.pairs
            .iter()
            .find(|pc| (pc.i.min(pc.j), pc.i.max(pc.j)) == (lo, hi))
            .map(|pc| pc.b.as_slice())
            .ok_or(Error::MissingPair(i, j))
    }

    pub fn coeffs_mut(&mut self, i: usize, j: usize) -> Result<&mut Vec<f64>> {
        let (lo, hi) = if i < j { (i, j) } else { (j, i) };
        self.pairs
            .iter_mut()
            .find(|pc| (pc.i.min(pc.j), pc.i.max(pc.j)) == (lo, hi))
            .map(|pc| &mut pc.b)
            .ok_or(Error::MissingPair(i, j))
    }
}

/// `γ_ij(ω) = Σ_k b_k B_k(ω)` on `[0, ω_t]`; `γ_ii = 1`.
pub fn coherence_semiparam(spec: &SplineCoherenceSpec, pair: (usize, usize), omega: f64) -> Result<f64> {
    let (i, j) = pair;
    let row = basis_row(&spec.knots, omega)?;
    if i == j {
        return Ok(1.0);
    }
    let b = spec.coeffs(i, j)?;
    Ok(b.iter().zip(&row).map(|(b, r)| b * r).sum())
}

/// `f_ij(ω) = γ_ij(ω) √(f_ii(ω) f_jj(ω))` for `ω ∈ [0, ω_t]`, where `fi` and
/// `fj` are the marginal density values at `ω`.
pub fn cross_sdf(
    spec: &SplineCoherenceSpec,
    pair: (usize, usize),
    fi: f64,
    fj: f64,
    omega: f64,
) -> Result<f64> {
    Ok(coherence_semiparam(spec, pair, omega)? * (fi * fj).sqrt())
}

/// Full bivariate Matérn: marginals plus cross scale, smoothness and
/// colocated correlation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BivariateMaternParams {
    pub m1: MarginalParams,
    pub m2: MarginalParams,
    pub a12: f64,
    pub nu12: f64,
    pub rho12: f64,
}

impl BivariateMaternParams {
    pub fn validate_shape(&self) -> Result<()> {
        self.m1.validate()?;
        self.m2.validate()?;
        if !(self.a12 > 0.0 && self.nu12 > 0.0) || !self.rho12.is_finite() {
            return Err(Error::InvalidParameter(format!(
                "cross parameters must satisfy a12 > 0, nu12 > 0: a12={}, nu12={}",
                self.a12, self.nu12
            )));
        }
        Ok(())
    }

    /// Largest admissible `|ρ_12|` given the other parameters:
    /// `inf_ω √(f_11 f_22) / f̃_12` where `f̃_12` is the cross density at unit
    /// colocated correlation. Evaluated on a dense log grid with an exact
    /// tail check.
    pub fn rho_bound(&self, d: usize) -> f64 {
        let half_d = d as f64 / 2.0;
        let (m1, m2) = (&self.m1, &self.m2);
        let tail = 0.5 * (m1.nu + m2.nu) - self.nu12;
        if tail > 1e-12 {
            // coherence at unit ρ grows without bound as ω → ∞
            return 0.0;
        }
        let ln_ratio_const = ln_gamma(self.nu12 + half_d) + 0.5 * ln_gamma(m1.nu)
            + 0.5 * ln_gamma(m2.nu)
            + 2.0 * self.nu12 * self.a12.ln()
            - 0.5 * ln_gamma(m1.nu + half_d)
            - 0.5 * ln_gamma(m2.nu + half_d)
            - ln_gamma(self.nu12)
            - m1.nu * m1.a.ln()
            - m2.nu * m2.a.ln();
        let ln_coh = |w: f64| {
            let w2 = w * w;
            ln_ratio_const
                + (0.5 * m1.nu + 0.5 * half_d) * (m1.a * m1.a + w2).ln()
                + (0.5 * m2.nu + 0.5 * half_d) * (m2.a * m2.a + w2).ln()
                - (self.nu12 + half_d) * (self.a12 * self.a12 + w2).ln()
        };
        let mut sup = ln_coh(0.0);
        let scale = m1.a.max(m2.a).max(self.a12);
        for i in 0..=4000 {
            let w = scale * 10f64.powf(-4.0 + 10.0 * i as f64 / 4000.0);
            sup = sup.max(ln_coh(w));
        }
        if tail.abs() <= 1e-12 {
            // limit as ω → ∞ is finite
            sup = sup.max(ln_ratio_const);
        }
        (-sup).exp()
    }
}

/// Coherence implied by the full bivariate Matérn model, any `ω ≥ 0`.
pub fn coherence_bimatern(params: &BivariateMaternParams, omega: f64, d: usize) -> Result<f64> {
    params.validate_shape()?;
    if !(omega >= 0.0) {
        return Err(Error::OutOfDomain {
            what: "frequency",
            value: omega,
            lo: 0.0,
            hi: f64::INFINITY,
        });
    }
    let half_d = d as f64 / 2.0;
    let (m1, m2) = (&params.m1, &params.m2);
    let w2 = omega * omega;
    let ln_num = ln_gamma(params.nu12 + half_d)
        + 0.5 * ln_gamma(m1.nu)
        + 0.5 * ln_gamma(m2.nu)
        + 2.0 * params.nu12 * params.a12.ln()
        + (0.5 * m1.nu + 0.25 * d as f64) * (m1.a * m1.a + w2).ln()
        + (0.5 * m2.nu + 0.25 * d as f64) * (m2.a * m2.a + w2).ln();
    let ln_den = 0.5 * ln_gamma(m1.nu + half_d)
        + 0.5 * ln_gamma(m2.nu + half_d)
        + ln_gamma(params.nu12)
        + m1.nu * m1.a.ln()
        + m2.nu * m2.a.ln()
        + (params.nu12 + half_d) * (params.a12 * params.a12 + w2).ln();
    Ok(params.rho12 * (ln_num - ln_den).exp())
}

/// Linear model of coregionalization `X = B Z` with independent Matérn
/// latent fields.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LmcParams {
    /// Row-major `p × p` coregionalization matrix.
    pub b: Vec<Vec<f64>>,
    pub latent: Vec<MarginalParams>,
}

impl LmcParams {
    pub fn p(&self) -> usize {
        self.b.len()
    }

    pub fn validate_shape(&self) -> Result<()> {
        let p = self.b.len();
        if p == 0 || self.b.iter().any(|r| r.len() != p) || self.latent.len() != p {
            return Err(Error::Dimension(format!(
                "coregionalization matrix must be p × p with p latent fields (p = {p})"
            )));
        }
        if self.b.iter().flatten().any(|v| !v.is_finite()) {
            return Err(Error::InvalidParameter(
                "coregionalization entries must be finite".into(),
            ));
        }
        for z in &self.latent {
            z.validate()?;
        }
        Ok(())
    }

    /// Spectral matrix entry `Σ_l b_il b_jl f_l(ω)` (untruncated latent
    /// densities).
    pub fn spectral_entry(&self, i: usize, j: usize, omega: f64, d: usize) -> Result<f64> {
        let mut acc = 0.0;
        for (l, z) in self.latent.iter().enumerate() {
            acc += self.b[i][l] * self.b[j][l] * matern_sdf(z, omega, d)?;
        }
        Ok(acc)
    }

    pub fn coherence(&self, i: usize, j: usize, omega: f64, d: usize) -> Result<f64> {
        self.validate_shape()?;
        let fij = self.spectral_entry(i, j, omega, d)?;
        let fii = self.spectral_entry(i, i, omega, d)?;
        let fjj = self.spectral_entry(j, j, omega, d)?;
        let den = (fii * fjj).sqrt();
        if den == 0.0 {
            return Err(Error::Degenerate(format!(
                "LMC coherence denominator vanishes at ω = {omega}"
            )));
        }
        Ok(fij / den)
    }
}

/// Bivariate LMC coherence
/// `(b11 b21 f1 + b12 b22 f2) / (√(b11² f1 + b12² f2) √(b21² f1 + b22² f2))`.
pub fn coherence_lmc(
    b: [[f64; 2]; 2],
    z1: &MarginalParams,
    z2: &MarginalParams,
    omega: f64,
    d: usize,
) -> Result<f64> {
    let f1 = matern_sdf(z1, omega, d)?;
    let f2 = matern_sdf(z2, omega, d)?;
    let num = b[0][0] * b[1][0] * f1 + b[0][1] * b[1][1] * f2;
    let d1 = b[0][0] * b[0][0] * f1 + b[0][1] * b[0][1] * f2;
    let d2 = b[1][0] * b[1][0] * f1 + b[1][1] * b[1][1] * f2;
    let den = (d1 * d2).sqrt();
    if den == 0.0 {
        return Err(Error::Degenerate(format!(
            "LMC coherence denominator vanishes at ω = {omega}"
        )));
    }
    Ok(num / den)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::specfun::{bessel_j, bessel_k, BesselOrder};

    fn oscillating_spec() -> SplineCoherenceSpec {
        let knots = KnotConfig::new(1.0, 4, 4.5).unwrap();
        SplineCoherenceSpec::from_vectors(
            knots,
            2,
            vec![vec![-0.99, -0.99, 0.99, 0.99, 0.99, 0.99, -0.99, -0.99]],
        )
        .unwrap()
    }

    #[test]
    fn matern_sdf_at_origin() {
        let p = MarginalParams::new(1.0, 1.0, 1.0);
        let v = matern_sdf(&p, 0.0, 2).unwrap();
        assert!((v - 1.0 / PI).abs() < 1e-15);
        assert!(matern_sdf(&p, 1.0, 2).unwrap() < v);
        assert!(matern_sdf(&MarginalParams::new(0.0, 1.0, 1.0), 0.0, 2).is_err());
        assert!(matern_sdf(&MarginalParams::new(1.0, -1.0, 1.0), 0.0, 2).is_err());
    }

    #[test]
    fn matern_sdf_strictly_decreasing() {
        let p = MarginalParams::new(1.3, 2.5, 0.7);
        let mut prev = f64::INFINITY;
        for i in 0..200 {
            let v = matern_sdf(&p, i as f64 * 0.05, 2).unwrap();
            assert!(v > 0.0 && v < prev);
            prev = v;
        }
    }

    /// Forward Hankel transform of the closed-form Matérn covariance,
    /// `f(ω) = (2π)^{-1} ∫ h J_0(ωh) M(h) dh` in `d = 2`, by composite
    /// Simpson on `[0, 60]`.
    #[test]
    fn matern_sdf_matches_forward_transform() {
        let (nu, a) = (3.0, 1.0);
        let matern = |h: f64| {
            if h == 0.0 {
                return 1.0;
            }
            let x = a * h;
            2f64.powf(1.0 - nu) / crate::specfun::gamma(nu).unwrap()
                * x.powf(nu)
                * bessel_k(nu, x).unwrap()
        };
        let omega = 2.0;
        let n = 24_000;
        let upper = 60.0;
        let step = upper / n as f64;
        let j0 = BesselOrder::new(0.0).unwrap();
        let mut acc = 0.0;
        for i in 0..=n {
            let h = i as f64 * step;
            let w = if i == 0 || i == n {
                1.0
            } else if i % 2 == 1 {
                4.0
            } else {
                2.0
            };
            acc += w * h * bessel_j(j0, omega * h) * matern(h);
        }
        let quad = acc * step / 3.0 / (2.0 * PI);
        let direct = matern_sdf(&MarginalParams::new(1.0, nu, a), omega, 2).unwrap();
        assert!(((quad - direct) / direct).abs() < 1e-8, "{quad} vs {direct}");
    }

    #[test]
    fn matern_sdf_integrates_to_variance() {
        // radial measure in d dimensions: 2 π^{d/2} / Γ(d/2) ω^{d-1}
        // the mass beyond ω_t is (a²/(a²+ω_t²))^ν in d = 2, under 0.5% for ν ≥ 1
        for (d, sigma, nu, a) in [(2, 1.5, 1.0, 1.0), (2, 1.0, 2.0, 2.0), (3, 1.0, 2.0, 0.5)] {
            let p = MarginalParams::new(sigma, nu, a);
            let upper = 50.0 * a;
            let n = 200_000;
            let step = upper / n as f64;
            let surf = 2.0 * PI.powf(d as f64 / 2.0) / crate::specfun::gamma(d as f64 / 2.0).unwrap();
            let mut acc = 0.0;
            for i in 0..=n {
                let w = i as f64 * step;
                let wt = if i == 0 || i == n { 0.5 } else { 1.0 };
                acc += wt * surf * w.powi(d as i32 - 1) * matern_sdf(&p, w, d).unwrap();
            }
            let total = acc * step;
            assert!(
                ((total - sigma * sigma) / (sigma * sigma)).abs() < 5e-3,
                "d={d} nu={nu}: {total}"
            );
        }
    }

    #[test]
    fn frequency_grid_layout() {
        let g = FrequencyGrid::new(4.5, 380).unwrap();
        assert_eq!(g.frequency(380), 4.5);
        assert!((g.frequency(1) - 4.5 / 380.0).abs() < 1e-15);
        assert_eq!(g.frequencies().count(), 380);
        assert!(FrequencyGrid::new(4.5, 0).is_err());
    }

    #[test]
    fn pair_indexing() {
        let p = 4;
        let all: Vec<_> = pairs(p).collect();
        assert_eq!(all.len(), n_pairs(p));
        for (idx, (i, j)) in all.iter().enumerate() {
            assert_eq!(pair_index(p, *i, *j), idx);
            assert_eq!(pair_index(p, *j, *i), idx);
        }
    }

    #[test]
    fn constant_coefficients_give_constant_coherence() {
        let knots = KnotConfig::new(1.0, 4, 4.5).unwrap();
        for c in [0.0, 0.5, 1.0, -0.3] {
            let spec = SplineCoherenceSpec::constant(knots, 2, c);
            for i in 0..=90 {
                let w = i as f64 * 0.05;
                let g = coherence_semiparam(&spec, (0, 1), w).unwrap();
                assert!((g - c).abs() < 1e-12);
                let f = cross_sdf(&spec, (0, 1), 2.0, 0.5, w).unwrap();
                assert!((f - c).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn oscillating_coherence_signs() {
        let spec = oscillating_spec();
        assert!(coherence_semiparam(&spec, (0, 1), 0.0).unwrap() < 0.0);
        assert!(coherence_semiparam(&spec, (0, 1), 0.2).unwrap() < 0.0);
        assert!(coherence_semiparam(&spec, (0, 1), 2.5).unwrap() > 0.9);
        // the two positive and two negative tail coefficients cancel at ω_t
        assert!(coherence_semiparam(&spec, (0, 1), 4.5).unwrap().abs() < 1e-12);
        assert!(coherence_semiparam(&spec, (0, 1), 4.4).unwrap() > 0.0);
        assert!(coherence_semiparam(&spec, (0, 1), 4.6).is_err());
        // linear in the coefficients
        let mut neg = spec.clone();
        for b in neg.coeffs_mut(0, 1).unwrap().iter_mut() {
            *b = -*b;
        }
        for i in 0..=45 {
            let w = i as f64 * 0.1;
            let a = coherence_semiparam(&spec, (0, 1), w).unwrap();
            let b = coherence_semiparam(&neg, (1, 0), w).unwrap();
            assert_eq!(a, -b);
        }
    }

    #[test]
    fn missing_pair_is_reported() {
        let spec = oscillating_spec();
        assert!(matches!(spec.coeffs(0, 2), Err(Error::MissingPair(0, 2))));
        assert!(coherence_semiparam(&spec, (0, 2), 1.0).is_err());
    }

    #[test]
    fn bounded_coherence_under_box_constraint() {
        let knots = KnotConfig::new(1.0, 4, 4.5).unwrap();
        let coeffs = vec![vec![1.0, -1.0, 1.0, -1.0, 1.0, -1.0, 1.0, -1.0]];
        let spec = SplineCoherenceSpec::from_vectors(knots, 2, coeffs).unwrap();
        let f1 = MarginalParams::new(1.0, 1.0, 1.0);
        let f2 = MarginalParams::new(2.0, 2.0, 0.5);
        for i in 0..=4500 {
            let w = i as f64 * 1e-3;
            let g = coherence_semiparam(&spec, (0, 1), w).unwrap();
            assert!(g.abs() <= 1.0 + 1e-12);
            let fi = matern_sdf(&f1, w, 2).unwrap();
            let fj = matern_sdf(&f2, w, 2).unwrap();
            let fij = cross_sdf(&spec, (0, 1), fi, fj, w).unwrap();
            assert!(fij * fij <= fi * fj * (1.0 + 1e-12));
        }
    }

    #[test]
    fn bimatern_formula_matches_density_ratio() {
        let params = BivariateMaternParams {
            m1: MarginalParams::new(1.0, 1.0, 0.5),
            m2: MarginalParams::new(1.7, 2.0, 1.3),
            a12: 1.1,
            nu12: 2.0,
            rho12: 0.3,
        };
        for d in [1, 2, 3] {
            for i in 0..100 {
                let w = i as f64 * 0.1;
                let f11 = matern_sdf(&params.m1, w, d).unwrap();
                let f22 = matern_sdf(&params.m2, w, d).unwrap();
                let cross = MarginalParams::new(
                    (params.m1.sigma * params.m2.sigma).sqrt(),
                    params.nu12,
                    params.a12,
                );
                let f12 = params.rho12 * matern_sdf(&cross, w, d).unwrap();
                let oracle = f12 / (f11 * f22).sqrt();
                let got = coherence_bimatern(&params, w, d).unwrap();
                assert!((got - oracle).abs() < 1e-10, "d={d} w={w}");
            }
        }
    }

    #[test]
    fn bimatern_parsimonious_case_is_constant() {
        let (nu1, nu2, d) = (1.0, 2.0, 2usize);
        let params = BivariateMaternParams {
            m1: MarginalParams::new(1.0, nu1, 0.8),
            m2: MarginalParams::new(1.0, nu2, 0.8),
            a12: 0.8,
            nu12: 0.5 * (nu1 + nu2),
            rho12: 0.4,
        };
        let g0 = coherence_bimatern(&params, 0.0, d).unwrap();
        for i in 1..200 {
            let g = coherence_bimatern(&params, i as f64 * 0.37, d).unwrap();
            assert!((g - g0).abs() < 1e-12);
        }
        // γ = ρ / 𝒞(ν1, ν2, d)
        let c = crate::covariance::parsimonious_constant(nu1, nu2, d);
        assert!((g0 - 0.4 / c).abs() < 1e-12);
    }

    #[test]
    fn bimatern_increasing_case() {
        // a1 = a2 = 1, ν1 = ν2 = 1, a12 = √2, ν12 = 1, ρ = 0.5
        let params = BivariateMaternParams {
            m1: MarginalParams::new(1.0, 1.0, 1.0),
            m2: MarginalParams::new(1.0, 1.0, 1.0),
            a12: 2f64.sqrt(),
            nu12: 1.0,
            rho12: 0.5,
        };
        let mut prev = -1.0;
        for i in 0..=450 {
            let g = coherence_bimatern(&params, i as f64 * 0.01, 2).unwrap();
            assert!(g > prev);
            prev = g;
        }
    }

    #[test]
    fn bimatern_rho_bound() {
        let mut params = BivariateMaternParams {
            m1: MarginalParams::new(1.0, 1.0, 1.0),
            m2: MarginalParams::new(1.0, 1.0, 1.0),
            a12: 1.0,
            nu12: 1.0,
            rho12: 0.5,
        };
        assert!((params.rho_bound(2) - 1.0).abs() < 1e-9);
        params.nu12 = 0.8;
        assert_eq!(params.rho_bound(2), 0.0);
        params.nu12 = 1.5;
        let bound = params.rho_bound(2);
        assert!(bound > 0.0 && bound < 10.0);
        params.rho12 = bound;
        let sup = (0..5000)
            .map(|i| coherence_bimatern(&params, i as f64 * 0.01, 2).unwrap().abs())
            .fold(0.0, f64::max);
        assert!(sup <= 1.0 + 1e-6, "{sup}");
    }

    #[test]
    fn lmc_coherence_shape_and_bounds() {
        let b = [[1.0, 0.4], [0.9, 7.5]];
        let z1 = MarginalParams::new(1.0, 1.0, 0.5);
        let z2 = MarginalParams::new(1.0, 2.0, 0.5);
        let vals: Vec<f64> = (0..=980)
            .map(|i| coherence_lmc(b, &z1, &z2, i as f64 * 0.01, 2).unwrap())
            .collect();
        assert!(vals.iter().all(|g| g.abs() <= 1.0));
        let (imin, _) = vals
            .iter()
            .enumerate()
            .fold((0, f64::INFINITY), |acc, (i, &v)| if v < acc.1 { (i, v) } else { acc });
        assert!(imin > 0 && imin < vals.len() - 1, "minimum at {imin}");
        assert!(vals[0] > vals[imin] && vals[vals.len() - 1] > vals[imin]);

        let independent = [[1.0, 0.0], [0.0, 7.5]];
        for i in 0..50 {
            let g = coherence_lmc(independent, &z1, &z2, i as f64 * 0.2, 2).unwrap();
            assert_eq!(g, 0.0);
        }
        assert!(coherence_lmc([[0.0, 0.0], [0.9, 1.0]], &z1, &z2, 1.0, 2).is_err());

        let general = LmcParams {
            b: vec![vec![1.0, 0.4], vec![0.9, 7.5]],
            latent: vec![z1, z2],
        };
        for i in 0..50 {
            let w = i as f64 * 0.2;
            let g = general.coherence(0, 1, w, 2).unwrap();
            assert!((g - coherence_lmc(b, &z1, &z2, w, 2).unwrap()).abs() < 1e-14);
        }
    }
}
