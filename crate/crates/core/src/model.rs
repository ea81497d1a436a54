//! The semiparametric model and the reference models it is compared with.

use serde::{Deserialize, Serialize};

use crate::bspline::KnotConfig;
use crate::covariance::parsimonious_constant;
use crate::error::{Error, Result};
use crate::linalg::min_eigenvalue;
use crate::spectral::{
    n_pairs, pair_index, pairs, BivariateMaternParams, FrequencyGrid, LmcParams, MarginalParams,
    SplineCoherenceSpec,
};
use crate::validity::check_validity;

fn default_d() -> usize {
    2
}

/// Truncated Matérn marginals tied together by B-spline coherences, synthesized
/// on a frequency grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SemiparamModel {
    #[serde(default = "default_d")]
    pub d: usize,
    pub marginals: Vec<MarginalParams>,
    pub coherence: SplineCoherenceSpec,
    pub grid: FrequencyGrid,
}

impl SemiparamModel {
    /// Model with all coherences zero.
    pub fn independent(d: usize, marginals: Vec<MarginalParams>, knots: KnotConfig, m: usize) -> Result<Self> {
        let p = marginals.len();
        Ok(Self {
            d,
            coherence: SplineCoherenceSpec::constant(knots, p, 0.0),
            grid: FrequencyGrid::new(knots.omega_t(), m)?,
            marginals,
        })
    }

    pub fn p(&self) -> usize {
        self.marginals.len()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IndependentModel {
    #[serde(default = "default_d")]
    pub d: usize,
    pub marginals: Vec<MarginalParams>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BivariateMaternModel {
    #[serde(default = "default_d")]
    pub d: usize,
    #[serde(flatten)]
    pub params: BivariateMaternParams,
}

/// Common scale `a`, cross smoothness `(ν_i + ν_j)/2` and constant coherence
/// `τ_ij`, so that the colocated correlation is `τ_ij 𝒞(ν_i, ν_j, d)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParsimoniousModel {
    #[serde(default = "default_d")]
    pub d: usize,
    pub a: f64,
    pub sigma: Vec<f64>,
    pub nu: Vec<f64>,
    #[serde(default)]
    pub nugget: Vec<f64>,
    /// Coherences in pair order `(0,1), (0,2), …`.
    pub tau: Vec<f64>,
}

impl ParsimoniousModel {
    pub fn marginal(&self, i: usize) -> MarginalParams {
        MarginalParams {
            sigma: self.sigma[i],
            nu: self.nu[i],
            a: self.a,
            nugget: self.nugget.get(i).copied().unwrap_or(0.0),
        }
    }

    /// Colocated correlation `ρ_ij = τ_ij 𝒞(ν_i, ν_j, d)`.
    pub fn rho(&self, i: usize, j: usize) -> f64 {
        let p = self.sigma.len();
        self.tau[pair_index(p, i, j)] * parsimonious_constant(self.nu[i], self.nu[j], self.d)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LmcModel {
    #[serde(default = "default_d")]
    pub d: usize,
    #[serde(flatten)]
    pub lmc: LmcParams,
    /// Nugget of each observed component.
    #[serde(default)]
    pub nugget: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Model {
    Semiparametric(SemiparamModel),
    Independent(IndependentModel),
    BivariateMatern(BivariateMaternModel),
    Parsimonious(ParsimoniousModel),
    Lmc(LmcModel),
}

impl Model {
    pub fn p(&self) -> usize {
        match self {
            Model::Semiparametric(m) => m.p(),
            Model::Independent(m) => m.marginals.len(),
            Model::BivariateMatern(_) => 2,
            Model::Parsimonious(m) => m.sigma.len(),
            Model::Lmc(m) => m.lmc.p(),
        }
    }

    pub fn d(&self) -> usize {
        match self {
            Model::Semiparametric(m) => m.d,
            Model::Independent(m) => m.d,
            Model::BivariateMatern(m) => m.d,
            Model::Parsimonious(m) => m.d,
            Model::Lmc(m) => m.d,
        }
    }

    pub fn kind(&self) -> &'static str {
        match self {
            Model::Semiparametric(_) => "semiparametric",
            Model::Independent(_) => "independent",
            Model::BivariateMatern(_) => "bivariate_matern",
            Model::Parsimonious(_) => "parsimonious",
            Model::Lmc(_) => "lmc",
        }
    }

    /// Nugget variance of each component.
    pub fn nuggets(&self) -> Vec<f64> {
        let p = self.p();
        let v = match self {
            Model::Semiparametric(m) => m.marginals.iter().map(|m| m.nugget).collect(),
            Model::Independent(m) => m.marginals.iter().map(|m| m.nugget).collect(),
            Model::BivariateMatern(m) => vec![m.params.m1.nugget, m.params.m2.nugget],
            Model::Parsimonious(m) => m.nugget.clone(),
            Model::Lmc(m) => m.nugget.clone(),
        };
        let mut v: Vec<f64> = v;
        v.resize(p, 0.0);
        v
    }

    pub fn has_nugget(&self) -> bool {
        self.nuggets().iter().any(|&t| t > 0.0)
    }

    pub fn validate(&self) -> Result<()> {
        let d = self.d();
        if d == 0 {
            return Err(Error::InvalidParameter("dimension must be ≥ 1".into()));
        }
        if self.p() == 0 {
            return Err(Error::InvalidParameter("model has no components".into()));
        }
        for t in self.nuggets() {
            if !(t >= 0.0 && t.is_finite()) {
                return Err(Error::InvalidParameter(format!("nugget {t} must be ≥ 0")));
            }
        }
        match self {
            Model::Semiparametric(m) => {
                for mp in &m.marginals {
                    mp.validate()?;
                }
                let knots = &m.coherence.knots;
                KnotConfig::new(knots.delta(), knots.k(), knots.omega_t())?;
                if m.coherence.p != m.p() {
                    return Err(Error::Dimension(format!(
                        "coherence spec for p = {} with {} marginals",
                        m.coherence.p,
                        m.p()
                    )));
                }
                if m.grid.omega_t() != knots.omega_t() {
                    return Err(Error::InvalidParameter(format!(
                        "frequency grid ends at {} but the knots at {}",
                        m.grid.omega_t(),
                        knots.omega_t()
                    )));
                }
                FrequencyGrid::new(m.grid.omega_t(), m.grid.m())?;
                m.coherence.check_shape()?;
                let report = check_validity(&m.coherence, m.p())?;
                if !report.valid {
                    return Err(Error::Validity(format!("{:?}", report.violations)));
                }
            }
            Model::Independent(m) => {
                for mp in &m.marginals {
                    mp.validate()?;
                }
            }
            Model::BivariateMatern(m) => {
                m.params.validate_shape()?;
                let bound = m.params.rho_bound(d);
                if m.params.rho12.abs() > bound * (1.0 + 1e-9) {
                    return Err(Error::Validity(format!(
                        "|rho12| = {} exceeds the admissible bound {bound}",
                        m.params.rho12.abs()
                    )));
                }
            }
            Model::Parsimonious(m) => {
                let p = m.sigma.len();
                if m.nu.len() != p || m.tau.len() != n_pairs(p) || (m.nugget.len() != p && !m.nugget.is_empty()) {
                    return Err(Error::Dimension(format!(
                        "parsimonious model with {p} components needs {p} smoothness values and {} coherences",
                        n_pairs(p)
                    )));
                }
                for i in 0..p {
                    m.marginal(i).validate()?;
                }
                let tau = crate::linalg::Matrix::from_fn(p, p, |i, j| {
                    if i == j {
                        1.0
                    } else {
                        m.tau[pair_index(p, i, j)]
                    }
                });
                let ev = min_eigenvalue(&tau)?;
                if ev < -1e-10 * p as f64 {
                    return Err(Error::Validity(format!(
                        "coherence matrix has eigenvalue {ev}"
                    )));
                }
            }
            Model::Lmc(m) => {
                m.lmc.validate_shape()?;
                if !m.nugget.is_empty() && m.nugget.len() != m.lmc.p() {
                    return Err(Error::Dimension("one nugget per component expected".into()));
                }
            }
        }
        Ok(())
    }

    /// Coherence `γ_ij(ω)` implied by the model.
    pub fn coherence(&self, i: usize, j: usize, omega: f64) -> Result<f64> {
        let p = self.p();
        if i >= p || j >= p {
            return Err(Error::MissingPair(i, j));
        }
        if i == j {
            return Ok(1.0);
        }
        match self {
            Model::Semiparametric(m) => {
                crate::spectral::coherence_semiparam(&m.coherence, (i, j), omega)
            }
            Model::Independent(_) => Ok(0.0),
            Model::BivariateMatern(m) => crate::spectral::coherence_bimatern(&m.params, omega, m.d),
            Model::Parsimonious(m) => Ok(m.tau[pair_index(p, i, j)]),
            Model::Lmc(m) => m.lmc.coherence(i, j, omega, m.d),
        }
    }

    /// Display name in the style of a model comparison table.
    pub fn label(&self) -> String {
        let base = match self {
            Model::Semiparametric(m) => {
                format!("Semiparametric (Δ={})", trim_float(m.coherence.knots.delta()))
            }
            Model::Independent(_) => "Independent Matérn".to_string(),
            Model::BivariateMatern(_) => "Bivariate Matérn".to_string(),
            Model::Parsimonious(_) => "Parsimonious Matérn".to_string(),
            Model::Lmc(_) => "LMC".to_string(),
        };
        if self.has_nugget() {
            format!("{base} + Nugget")
        } else {
            base
        }
    }

    /// All `(i, j)` with `i < j`.
    pub fn pairs(&self) -> Vec<(usize, usize)> {
        pairs(self.p()).collect()
    }
}

fn trim_float(v: f64) -> String {
    let s = format!("{v:.6}");
    s.trim_end_matches('0').trim_end_matches('.').to_string()
}
