//! Exact Gaussian likelihood and maximum likelihood fitting.
//!
//! Every model parameter is a named slot with a natural value (variance,
//! scale, coefficient, …) and a transform onto the real line. The optimizer
//! works on the transformed free slots only, and every point it visits
//! decodes to a valid model.

use std::collections::BTreeMap;
use std::time::Instant;

use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::covariance::Synthesizer;
use crate::data::SpatialDataset;
use crate::error::{Error, Result};
use crate::linalg::Cholesky;
use crate::model::Model;
use crate::par;
use crate::rng::{substream, RESTARTS};
use crate::spectral::{n_pairs, pair_index, pairs};
use crate::validity::{beta_from_cholesky_rows, BetaMatrices, CholeskyRowParams, COEFF_BOUND};

const LN_2PI: f64 = 1.837_877_066_409_345_5;

/// `-½ (log det Σ + xᵀ Σ⁻¹ x + np log 2π)` of the stacked observations.
pub fn loglik(model: &Model, data: &SpatialDataset) -> Result<f64> {
    let syn = Synthesizer::new(data.coords(), data.d())?;
    loglik_with(&syn, model, data)
}

/// As [`loglik`], reusing lags and Hankel weights of `syn`, which must have
/// been built on the locations of `data`.
pub fn loglik_with(syn: &Synthesizer, model: &Model, data: &SpatialDataset) -> Result<f64> {
    if data.p() != model.p() {
        return Err(Error::Dimension(format!(
            "model has {} components, data {}",
            model.p(),
            data.p()
        )));
    }
    if syn.n() != data.n() {
        return Err(Error::Dimension(format!(
            "synthesizer built for {} locations, data has {}",
            syn.n(),
            data.n()
        )));
    }
    data.require_complete()?;
    let sigma = syn.sigma(model)?;
    let chol = Cholesky::new(&sigma)?;
    let x = data.stacked();
    Ok(-0.5 * (chol.log_det() + chol.quad_form(x) + x.len() as f64 * LN_2PI))
}

/// `2k - 2ℓ`.
pub fn aic(loglik: f64, n_params: usize) -> f64 {
    2.0 * n_params as f64 - 2.0 * loglik
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Transform {
    /// `x = ln v`.
    Log,
    /// `v = (1 - 1e-6) tanh x`.
    Tanh,
    Identity,
    /// `v = ρ_max (1 - 1e-6) tanh x` with `ρ_max` from the other parameters.
    RhoBound,
    /// `v = (ν_1 + ν_2)/2 + eˣ`.
    LogExcess,
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum SlotKind {
    Sigma2(usize),
    Scale(usize),
    Smooth(usize),
    Nugget(usize),
    Coef { pair: usize, k: usize },
    CholT { pair: usize, k: usize },
    CrossScale,
    CrossSmooth,
    CrossRho,
    CommonScale,
    Tau(usize),
    TauT(usize),
    LmcB(usize, usize),
    LatentSigma2(usize),
    LatentScale(usize),
    LatentSmooth(usize),
}

#[derive(Debug, Clone, PartialEq)]
pub struct ParamSlot {
    pub name: String,
    pub transform: Transform,
    kind: SlotKind,
}

/// A model with its free/fixed split.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelTemplate {
    /// Starting point and values of fixed parameters.
    pub model: Model,
    /// Parameters held at the given natural values. A bare group name such
    /// as `nu` applies to every component.
    #[serde(default)]
    pub fixed: BTreeMap<String, f64>,
    /// Whether nugget variances are estimated; when false they stay at the
    /// template's values.
    #[serde(default)]
    pub nugget: bool,
}

impl ModelTemplate {
    pub fn new(model: Model) -> Self {
        Self {
            model,
            fixed: BTreeMap::new(),
            nugget: false,
        }
    }

    pub fn with_nugget(mut self, on: bool) -> Self {
        self.nugget = on;
        self
    }

    pub fn fix(mut self, name: &str, value: f64) -> Self {
        self.fixed.insert(name.to_string(), value);
        self
    }

    /// Fixes every `ν_i` (marginal or latent) at its template value.
    pub fn fix_smoothness(mut self) -> Result<Self> {
        let par = Parameterization::new(&self.model, &BTreeMap::new(), true)?;
        for (s, v) in par.slots.iter().zip(&par.values) {
            if matches!(s.kind, SlotKind::Smooth(_) | SlotKind::LatentSmooth(_)) {
                self.fixed.insert(s.name.clone(), *v);
            }
        }
        Ok(self)
    }
}

/// Named slots of a model, their current natural values and which are free.
#[derive(Debug, Clone)]
pub struct Parameterization {
    template: Model,
    slots: Vec<ParamSlot>,
    values: Vec<f64>,
    free: Vec<usize>,
}

fn slot(name: String, transform: Transform, kind: SlotKind) -> ParamSlot {
    ParamSlot {
        name,
        transform,
        kind,
    }
}

fn marginal_slots(out: &mut Vec<ParamSlot>, i: usize, scale: bool) {
    let c = i + 1;
    out.push(slot(format!("sigma2_{c}"), Transform::Log, SlotKind::Sigma2(i)));
    if scale {
        out.push(slot(format!("a_{c}"), Transform::Log, SlotKind::Scale(i)));
    }
    out.push(slot(format!("nu_{c}"), Transform::Log, SlotKind::Smooth(i)));
}

fn nugget_slots(out: &mut Vec<ParamSlot>, p: usize) {
    for i in 0..p {
        out.push(slot(format!("nugget_{}", i + 1), Transform::Log, SlotKind::Nugget(i)));
    }
}

fn slots_for(model: &Model) -> Vec<ParamSlot> {
    let p = model.p();
    let mut out = Vec::new();
    match model {
        Model::Semiparametric(m) => {
            for i in 0..p {
                marginal_slots(&mut out, i, true);
            }
            nugget_slots(&mut out, p);
            let nb = m.coherence.knots.n_basis();
            for (pi, (i, j)) in pairs(p).enumerate() {
                for k in 0..nb {
                    let ki = k as i64 - 3;
                    if p == 2 {
                        out.push(slot(
                            format!("b{}{}[{ki}]", i + 1, j + 1),
                            Transform::Tanh,
                            SlotKind::Coef { pair: pi, k },
                        ));
                    } else {
                        out.push(slot(
                            format!("t{}{}[{ki}]", i + 1, j + 1),
                            Transform::Identity,
                            SlotKind::CholT { pair: pi, k },
                        ));
                    }
                }
            }
        }
        Model::Independent(_) => {
            for i in 0..p {
                marginal_slots(&mut out, i, true);
            }
            nugget_slots(&mut out, p);
        }
        Model::BivariateMatern(_) => {
            for i in 0..2 {
                marginal_slots(&mut out, i, true);
            }
            nugget_slots(&mut out, 2);
            out.push(slot("a_12".into(), Transform::Log, SlotKind::CrossScale));
            out.push(slot("nu_12".into(), Transform::LogExcess, SlotKind::CrossSmooth));
            out.push(slot("rho_12".into(), Transform::RhoBound, SlotKind::CrossRho));
        }
        Model::Parsimonious(_) => {
            for i in 0..p {
                marginal_slots(&mut out, i, false);
            }
            nugget_slots(&mut out, p);
            out.push(slot("a_common".into(), Transform::Log, SlotKind::CommonScale));
            for (pi, (i, j)) in pairs(p).enumerate() {
                if p == 2 {
                    out.push(slot(format!("tau_{}{}", i + 1, j + 1), Transform::Tanh, SlotKind::Tau(pi)));
                } else {
                    out.push(slot(format!("t_{}{}", i + 1, j + 1), Transform::Identity, SlotKind::TauT(pi)));
                }
            }
        }
        Model::Lmc(_) => {
            for i in 0..p {
                for l in 0..p {
                    out.push(slot(format!("b{}{}", i + 1, l + 1), Transform::Identity, SlotKind::LmcB(i, l)));
                }
            }
            for l in 0..p {
                let c = l + 1;
                out.push(slot(format!("sigma2_z{c}"), Transform::Log, SlotKind::LatentSigma2(l)));
                out.push(slot(format!("a_z{c}"), Transform::Log, SlotKind::LatentScale(l)));
                out.push(slot(format!("nu_z{c}"), Transform::Log, SlotKind::LatentSmooth(l)));
            }
            nugget_slots(&mut out, p);
        }
    }
    out
}

/// Unit upper-triangular row parameters `t` reproducing a correlation matrix:
/// `β = U Uᵀ` with `U` upper triangular, `t_ij = U_ij / U_ii`.
fn cholesky_rows_from_beta(beta: &BetaMatrices, idx: usize) -> Vec<f64> {
    let p = beta.p();
    let mut jitter = 0.0;
    loop {
        // reversed Cholesky: J β J = L Lᵀ, U = J L J
        let mut l = vec![0.0; p * p];
        let mut ok = true;
        for a in 0..p {
            for b in 0..=a {
                let (ia, ib) = (p - 1 - a, p - 1 - b);
                let mut s = beta.get(idx, ia, ib) + if a == b { jitter } else { 0.0 };
                for c in 0..b {
                    s -= l[a * p + c] * l[b * p + c];
                }
                if a == b {
                    if s <= 0.0 {
                        ok = false;
                        break;
                    }
                    l[a * p + a] = s.sqrt();
                } else {
                    l[a * p + b] = s / l[b * p + b];
                }
            }
            if !ok {
                break;
            }
        }
        if ok {
            let u = |i: usize, j: usize| l[(p - 1 - i) * p + (p - 1 - j)];
            return pairs(p).map(|(i, j)| u(i, j) / u(i, i)).collect();
        }
        jitter = if jitter == 0.0 { 1e-12 } else { jitter * 10.0 };
    }
}

fn extract(model: &Model, slots: &[ParamSlot]) -> Vec<f64> {
    let p = model.p();
    let nug = model.nuggets();
    let chol_t: Option<Vec<Vec<f64>>> = match model {
        Model::Semiparametric(m) if p > 2 => BetaMatrices::from_spec(&m.coherence)
            .ok()
            .map(|b| (0..b.len()).map(|k| cholesky_rows_from_beta(&b, k)).collect()),
        _ => None,
    };
    let tau_t: Option<Vec<f64>> = match model {
        Model::Parsimonious(m) if p > 2 => {
            let mut mat = vec![0.0; p * p];
            for i in 0..p {
                mat[i * p + i] = 1.0;
            }
            for (i, j) in pairs(p) {
                mat[i * p + j] = m.tau[pair_index(p, i, j)];
                mat[j * p + i] = m.tau[pair_index(p, i, j)];
            }
            BetaMatrices::new(p, vec![mat]).ok().map(|b| cholesky_rows_from_beta(&b, 0))
        }
        _ => None,
    };
    slots
        .iter()
        .map(|s| match (model, s.kind) {
            (_, SlotKind::Nugget(i)) => nug[i],
            (Model::Semiparametric(m), SlotKind::Sigma2(i)) => m.marginals[i].variance(),
            (Model::Semiparametric(m), SlotKind::Scale(i)) => m.marginals[i].a,
            (Model::Semiparametric(m), SlotKind::Smooth(i)) => m.marginals[i].nu,
            (Model::Semiparametric(m), SlotKind::Coef { pair, k }) => m.coherence.pairs[pair].b[k],
            (Model::Semiparametric(_), SlotKind::CholT { pair, k }) => {
                chol_t.as_ref().map_or(0.0, |t| t[k][pair])
            }
            (Model::Independent(m), SlotKind::Sigma2(i)) => m.marginals[i].variance(),
            (Model::Independent(m), SlotKind::Scale(i)) => m.marginals[i].a,
            (Model::Independent(m), SlotKind::Smooth(i)) => m.marginals[i].nu,
            (Model::BivariateMatern(m), k) => {
                let b = &m.params;
                let mg = |i: usize| if i == 0 { &b.m1 } else { &b.m2 };
                match k {
                    SlotKind::Sigma2(i) => mg(i).variance(),
                    SlotKind::Scale(i) => mg(i).a,
                    SlotKind::Smooth(i) => mg(i).nu,
                    SlotKind::CrossScale => b.a12,
                    SlotKind::CrossSmooth => b.nu12,
                    SlotKind::CrossRho => b.rho12,
                    _ => f64::NAN,
                }
            }
            (Model::Parsimonious(m), k) => match k {
                SlotKind::Sigma2(i) => m.sigma[i] * m.sigma[i],
                SlotKind::Smooth(i) => m.nu[i],
                SlotKind::CommonScale => m.a,
                SlotKind::Tau(pi) => m.tau[pi],
                SlotKind::TauT(pi) => tau_t.as_ref().map_or(0.0, |t| t[pi]),
                _ => f64::NAN,
            },
            (Model::Lmc(m), k) => match k {
                SlotKind::LmcB(i, l) => m.lmc.b[i][l],
                SlotKind::LatentSigma2(l) => m.lmc.latent[l].variance(),
                SlotKind::LatentScale(l) => m.lmc.latent[l].a,
                SlotKind::LatentSmooth(l) => m.lmc.latent[l].nu,
                _ => f64::NAN,
            },
            _ => f64::NAN,
        })
        .collect()
}

/// `(ν_1 + ν_2)/2` for models with a cross-smoothness slot.
fn nu_base(slots: &[ParamSlot], v: &[f64]) -> f64 {
    let nu = |i: usize| {
        slots
            .iter()
            .position(|s| s.kind == SlotKind::Smooth(i))
            .map_or(0.0, |k| v[k])
    };
    0.5 * (nu(0) + nu(1))
}

fn to_unconstrained(t: Transform, v: f64, rho_max: f64, nu_base: f64) -> f64 {
    match t {
        Transform::LogExcess => (v - nu_base).ln(),
        Transform::Log => v.ln(),
        Transform::Tanh => (v / COEFF_BOUND).clamp(-1.0 + 1e-15, 1.0 - 1e-15).atanh(),
        Transform::Identity => v,
        Transform::RhoBound => {
            let den = rho_max * COEFF_BOUND;
            if den > 0.0 {
                (v / den).clamp(-1.0 + 1e-15, 1.0 - 1e-15).atanh()
            } else {
                0.0
            }
        }
    }
}

fn from_unconstrained(t: Transform, x: f64) -> f64 {
    match t {
        Transform::Log => x.exp(),
        Transform::Tanh => COEFF_BOUND * x.tanh(),
        Transform::Identity => x,
        // scaled once the other parameters are known
        Transform::RhoBound => COEFF_BOUND * x.tanh(),
        Transform::LogExcess => x.exp(),
    }
}

impl Parameterization {
    pub fn from_template(t: &ModelTemplate) -> Result<Self> {
        Self::new(&t.model, &t.fixed, t.nugget)
    }

    pub fn new(model: &Model, fixed: &BTreeMap<String, f64>, nugget: bool) -> Result<Self> {
        let slots = slots_for(model);
        let mut values = extract(model, &slots);
        let mut is_fixed = vec![false; slots.len()];
        for (name, v) in fixed {
            let mut hit = false;
            for (k, s) in slots.iter().enumerate() {
                let group = s.name.rsplit_once('_').map(|(g, _)| g);
                if s.name == *name || group == Some(name.as_str()) {
                    values[k] = *v;
                    is_fixed[k] = true;
                    hit = true;
                }
            }
            if !hit {
                return Err(Error::InvalidParameter(format!(
                    "unknown parameter {name:?}; known: {}",
                    slots.iter().map(|s| s.name.as_str()).collect::<Vec<_>>().join(", ")
                )));
            }
        }
        for (k, s) in slots.iter().enumerate() {
            if matches!(s.kind, SlotKind::Nugget(_)) && !nugget {
                is_fixed[k] = true;
            }
        }
        let free: Vec<usize> = (0..slots.len()).filter(|&k| !is_fixed[k]).collect();
        let base = nu_base(&slots, &values);
        for &k in &free {
            if slots[k].transform == Transform::LogExcess && values[k] <= base {
                values[k] = base + 0.25;
            }
            if let SlotKind::Nugget(i) = slots[k].kind {
                if values[k] <= 0.0 {
                    let var = slots
                        .iter()
                        .position(|s| s.kind == SlotKind::Sigma2(i))
                        .map_or(1.0, |q| values[q]);
                    values[k] = 0.05 * var;
                }
            }
        }
        let par = Self {
            template: model.clone(),
            slots,
            values,
            free,
        };
        for &k in &par.free {
            let v = par.values[k];
            let s = &par.slots[k];
            let bad = match s.transform {
                Transform::Log => !(v > 0.0),
                Transform::LogExcess => !(v > nu_base(&par.slots, &par.values)),
                Transform::Tanh => !(v.abs() < 1.0),
                _ => !v.is_finite(),
            };
            if bad {
                return Err(Error::InvalidParameter(format!(
                    "starting value {v} of {} is outside its domain",
                    s.name
                )));
            }
        }
        Ok(par)
    }

    pub fn slots(&self) -> &[ParamSlot] {
        &self.slots
    }

    pub fn n_free(&self) -> usize {
        self.free.len()
    }

    pub fn free_names(&self) -> Vec<String> {
        self.free.iter().map(|&k| self.slots[k].name.clone()).collect()
    }

    pub fn is_free(&self, name: &str) -> bool {
        self.free.iter().any(|&k| self.slots[k].name == name)
    }

    /// Natural values of all slots at the current point.
    pub fn values(&self) -> BTreeMap<String, f64> {
        self.slots
            .iter()
            .zip(&self.values)
            .map(|(s, v)| (s.name.clone(), *v))
            .collect()
    }

    /// Overrides the current natural value of a free or fixed slot.
    pub fn set(&mut self, name: &str, value: f64) -> Result<()> {
        let k = self
            .slots
            .iter()
            .position(|s| s.name == name)
            .ok_or_else(|| Error::InvalidParameter(format!("unknown parameter {name:?}")))?;
        self.values[k] = value;
        Ok(())
    }

    /// Moves the current point to `model`'s values (free slots only).
    pub fn set_from_model(&mut self, model: &Model) {
        let v = extract(model, &self.slots);
        for &k in &self.free {
            self.values[k] = v[k];
        }
    }

    fn rho_max_of(&self, model: &Model) -> f64 {
        match model {
            Model::BivariateMatern(m) => m.params.rho_bound(m.d),
            _ => 1.0,
        }
    }

    /// Unconstrained coordinates of the free slots at the current point.
    pub fn encode(&self) -> Vec<f64> {
        let rho_max = self
            .build(&self.values)
            .map(|m| self.rho_max_of(&m))
            .unwrap_or(1.0);
        let base = nu_base(&self.slots, &self.values);
        self.free
            .iter()
            .map(|&k| to_unconstrained(self.slots[k].transform, self.values[k], rho_max, base))
            .collect()
    }

    /// Unconstrained coordinates of `model`'s free parameters.
    pub fn encode_model(&self, model: &Model) -> Vec<f64> {
        let mut other = self.clone();
        other.set_from_model(model);
        other.encode()
    }

    /// Natural values of all slots for unconstrained free coordinates `x`.
    pub fn natural(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.free.len() {
            return Err(Error::Dimension(format!(
                "{} coordinates for {} free parameters",
                x.len(),
                self.free.len()
            )));
        }
        let mut v = self.values.clone();
        let mut rho_slot = None;
        for (xi, &k) in x.iter().zip(&self.free) {
            v[k] = from_unconstrained(self.slots[k].transform, *xi);
            if self.slots[k].transform == Transform::RhoBound {
                rho_slot = Some(k);
            }
        }
        if let Some(k) = self.free.iter().copied().find(|&k| self.slots[k].transform == Transform::LogExcess) {
            v[k] += nu_base(&self.slots, &v);
        }
        if let Some(k) = rho_slot {
            let unit = v[k];
            v[k] = 0.0;
            let rho_max = self.rho_max_of(&self.build(&v)?);
            v[k] = unit * rho_max;
        }
        Ok(v)
    }

    pub fn decode(&self, x: &[f64]) -> Result<Model> {
        self.build(&self.natural(x)?)
    }

    fn build(&self, v: &[f64]) -> Result<Model> {
        let mut model = self.template.clone();
        let p = model.p();
        let mut chol: Option<Vec<Vec<f64>>> = None;
        let mut tau_t: Option<Vec<f64>> = None;
        for (s, &val) in self.slots.iter().zip(v) {
            match (&mut model, s.kind) {
                (Model::Semiparametric(m), k) => match k {
                    SlotKind::Sigma2(i) => m.marginals[i].sigma = val.sqrt(),
                    SlotKind::Scale(i) => m.marginals[i].a = val,
                    SlotKind::Smooth(i) => m.marginals[i].nu = val,
                    SlotKind::Nugget(i) => m.marginals[i].nugget = val,
                    SlotKind::Coef { pair, k } => m.coherence.pairs[pair].b[k] = val,
                    SlotKind::CholT { pair, k } => {
                        let nb = m.coherence.knots.n_basis();
                        chol.get_or_insert_with(|| vec![vec![0.0; n_pairs(p)]; nb])[k][pair] = val;
                    }
                    _ => {}
                },
                (Model::Independent(m), k) => match k {
                    SlotKind::Sigma2(i) => m.marginals[i].sigma = val.sqrt(),
                    SlotKind::Scale(i) => m.marginals[i].a = val,
                    SlotKind::Smooth(i) => m.marginals[i].nu = val,
                    SlotKind::Nugget(i) => m.marginals[i].nugget = val,
                    _ => {}
                },
                (Model::BivariateMatern(m), k) => {
                    let b = &mut m.params;
                    match k {
                        SlotKind::Sigma2(i) | SlotKind::Scale(i) | SlotKind::Smooth(i) | SlotKind::Nugget(i) => {
                            let mg = if i == 0 { &mut b.m1 } else { &mut b.m2 };
                            match k {
                                SlotKind::Sigma2(_) => mg.sigma = val.sqrt(),
                                SlotKind::Scale(_) => mg.a = val,
                                SlotKind::Smooth(_) => mg.nu = val,
                                _ => mg.nugget = val,
                            }
                        }
                        SlotKind::CrossScale => b.a12 = val,
                        SlotKind::CrossSmooth => b.nu12 = val,
                        SlotKind::CrossRho => b.rho12 = val,
                        _ => {}
                    }
                }
                (Model::Parsimonious(m), k) => {
                    m.nugget.resize(p, 0.0);
                    match k {
                        SlotKind::Sigma2(i) => m.sigma[i] = val.sqrt(),
                        SlotKind::Smooth(i) => m.nu[i] = val,
                        SlotKind::Nugget(i) => m.nugget[i] = val,
                        SlotKind::CommonScale => m.a = val,
                        SlotKind::Tau(pi) => m.tau[pi] = val,
                        SlotKind::TauT(pi) => {
                            tau_t.get_or_insert_with(|| vec![0.0; n_pairs(p)])[pi] = val
                        }
                        _ => {}
                    }
                }
                (Model::Lmc(m), k) => {
                    m.nugget.resize(p, 0.0);
                    match k {
                        SlotKind::LmcB(i, l) => m.lmc.b[i][l] = val,
                        SlotKind::LatentSigma2(l) => m.lmc.latent[l].sigma = val.sqrt(),
                        SlotKind::LatentScale(l) => m.lmc.latent[l].a = val,
                        SlotKind::LatentSmooth(l) => m.lmc.latent[l].nu = val,
                        SlotKind::Nugget(i) => m.nugget[i] = val,
                        _ => {}
                    }
                }
            }
        }
        if let (Model::Semiparametric(m), Some(t)) = (&mut model, chol) {
            let beta = beta_from_cholesky_rows(&CholeskyRowParams { p, t })?;
            m.coherence = beta.to_spec(m.coherence.knots)?;
        }
        if let (Model::Parsimonious(m), Some(t)) = (&mut model, tau_t) {
            let beta = beta_from_cholesky_rows(&CholeskyRowParams { p, t: vec![t] })?;
            for (i, j) in pairs(p) {
                m.tau[pair_index(p, i, j)] = beta.get(0, i, j);
            }
        }
        Ok(model)
    }
}

/// How the free parameters are initialized before optimization.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Init {
    /// Empirical variances, `a = 1/median distance`, `ν = 1`, nugget
    /// `0.05 σ²`, zero coherence.
    #[default]
    Data,
    /// The template's own values.
    Template,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FitOptions {
    /// Additional starts from randomly perturbed initial values.
    pub restarts: usize,
    pub max_evals: usize,
    /// Relative tolerance on the spread of the simplex values.
    pub ftol: f64,
    pub seed: u64,
    pub init: Init,
    /// Initial simplex edge in transformed coordinates.
    pub step: f64,
    /// Standard deviation of the restart perturbation in transformed
    /// coordinates.
    pub restart_scale: f64,
}

impl Default for FitOptions {
    fn default() -> Self {
        Self {
            restarts: 3,
            max_evals: 20_000,
            ftol: 1e-8,
            seed: 0,
            init: Init::Data,
            step: 0.5,
            restart_scale: 0.5,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StartSummary {
    pub loglik: f64,
    pub n_evals: usize,
    pub converged: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitResult {
    pub model: Model,
    /// Natural values of every parameter, free and fixed.
    pub estimates: BTreeMap<String, f64>,
    pub free: Vec<String>,
    pub loglik: f64,
    pub aic: f64,
    pub n_params: usize,
    pub converged: bool,
    pub n_evals: usize,
    pub runtime_s: f64,
    pub starts: Vec<StartSummary>,
    /// Best log-likelihood after each evaluation of the winning start.
    #[serde(skip)]
    pub trace: Vec<f64>,
}

fn median_distance(data: &SpatialDataset) -> f64 {
    let n = data.n();
    let mut d = Vec::with_capacity(n * (n.saturating_sub(1)) / 2);
    for q in 0..n {
        for r in q + 1..n {
            let h: f64 = data
                .location(q)
                .iter()
                .zip(data.location(r))
                .map(|(a, b)| (a - b) * (a - b))
                .sum::<f64>()
                .sqrt();
            d.push(h);
        }
    }
    if d.is_empty() {
        return 1.0;
    }
    let mid = d.len() / 2;
    let (_, m, _) = d.select_nth_unstable_by(mid, |a, b| a.total_cmp(b));
    if *m > 0.0 {
        *m
    } else {
        1.0
    }
}

/// Applies the data-driven starting values to the free slots.
fn init_from_data(par: &mut Parameterization, data: &SpatialDataset) {
    let moments = data.moments();
    let var: Vec<f64> = moments.iter().map(|(_, s)| (s * s).max(1e-12)).collect();
    let inv_med = 1.0 / median_distance(data);
    let free: Vec<usize> = par.free.clone();
    for k in free {
        let v = match par.slots[k].kind {
            SlotKind::Sigma2(i) => var[i],
            SlotKind::Scale(_) | SlotKind::CrossScale | SlotKind::CommonScale => inv_med,
            SlotKind::LatentScale(_) => inv_med,
            SlotKind::Smooth(_) | SlotKind::LatentSmooth(_) => 1.0,
            SlotKind::Nugget(i) => 0.05 * var[i],
            SlotKind::Coef { .. }
            | SlotKind::CholT { .. }
            | SlotKind::Tau(_)
            | SlotKind::TauT(_)
            | SlotKind::CrossRho => 0.0,
            // set below, once the marginal ν are known
            SlotKind::CrossSmooth => f64::NAN,
            SlotKind::LmcB(i, l) => {
                if i == l {
                    var[i].sqrt()
                } else {
                    0.0
                }
            }
            SlotKind::LatentSigma2(_) => 1.0,
        };
        par.values[k] = v;
    }
    if let Some(k) = par.free.iter().copied().find(|&k| par.slots[k].kind == SlotKind::CrossSmooth) {
        par.values[k] = nu_base(&par.slots, &par.values) + 0.25;
    }
}

/// Maximizes the log-likelihood over the free parameters of `template`.
pub fn fit(template: &ModelTemplate, data: &SpatialDataset, opts: &FitOptions) -> Result<FitResult> {
    let start_time = Instant::now();
    data.require_complete()?;
    if data.p() != template.model.p() || data.d() != template.model.d() {
        return Err(Error::Dimension(format!(
            "model is {}-variate in d = {}, data {}-variate in d = {}",
            template.model.p(),
            template.model.d(),
            data.p(),
            data.d()
        )));
    }
    let mut par = Parameterization::from_template(template)?;
    if opts.init == Init::Data {
        init_from_data(&mut par, data);
    }
    let syn = Synthesizer::new(data.coords(), data.d())?;
    let objective = |x: &[f64]| -> f64 {
        match par.decode(x).and_then(|m| loglik_with(&syn, &m, data)) {
            Ok(l) if l.is_finite() => -l,
            _ => f64::INFINITY,
        }
    };
    let x0 = par.encode();
    let k = par.n_free();
    if k == 0 {
        let model = par.decode(&[])?;
        let ll = loglik_with(&syn, &model, data)?;
        return Ok(FitResult {
            model,
            estimates: par.values(),
            free: Vec::new(),
            loglik: ll,
            aic: aic(ll, 0),
            n_params: 0,
            converged: true,
            n_evals: 1,
            runtime_s: start_time.elapsed().as_secs_f64(),
            starts: vec![StartSummary {
                loglik: ll,
                n_evals: 1,
                converged: true,
            }],
            trace: vec![ll],
        });
    }
    let starts: Vec<Vec<f64>> = (0..=opts.restarts)
        .map(|s| {
            if s == 0 {
                x0.clone()
            } else {
                let mut rng = substream(opts.seed, RESTARTS, s as u64);
                x0.iter()
                    .map(|v| {
                        let z: f64 = StandardNormal.sample(&mut rng);
                        v + opts.restart_scale * z
                    })
                    .collect()
            }
        })
        .collect();
    let runs = par::map(&starts, |x| {
        nelder_mead(&objective, x, opts.step, opts.ftol, opts.max_evals)
    });
    let summaries: Vec<StartSummary> = runs
        .iter()
        .map(|r| StartSummary {
            loglik: -r.f,
            n_evals: r.n_evals,
            converged: r.converged,
        })
        .collect();
    let best = runs
        .into_iter()
        .min_by(|a, b| a.f.total_cmp(&b.f))
        .expect("at least one start");
    if !best.f.is_finite() {
        return Err(Error::Factorization { max_jitter: 1e-4 });
    }
    let model = par.decode(&best.x)?;
    let natural = par.natural(&best.x)?;
    let estimates = par
        .slots
        .iter()
        .zip(&natural)
        .map(|(s, v)| (s.name.clone(), *v))
        .collect();
    let ll = -best.f;
    Ok(FitResult {
        model,
        estimates,
        free: par.free_names(),
        loglik: ll,
        aic: aic(ll, k),
        n_params: k,
        converged: best.converged,
        n_evals: summaries.iter().map(|s| s.n_evals).sum(),
        runtime_s: start_time.elapsed().as_secs_f64(),
        starts: summaries,
        trace: best.trace.iter().map(|f| -f).collect(),
    })
}

#[derive(Debug, Clone)]
pub struct NelderMeadResult {
    pub x: Vec<f64>,
    pub f: f64,
    pub n_evals: usize,
    pub converged: bool,
    /// Best value after each evaluation.
    pub trace: Vec<f64>,
}

/// Minimizes `f` with the adaptive-coefficient Nelder–Mead simplex.
/// Converges when the spread of simplex values falls below
/// `ftol · (|f_best| + 1e-10)` and a fresh simplex around the best point
/// brings no further improvement.
pub fn nelder_mead<F>(f: F, x0: &[f64], step: f64, ftol: f64, max_evals: usize) -> NelderMeadResult
where
    F: Fn(&[f64]) -> f64,
{
    let n = x0.len();
    let nf = n as f64;
    let (alpha, gamma, rho, shrink) = if n >= 2 {
        (1.0, 1.0 + 2.0 / nf, 0.75 - 1.0 / (2.0 * nf), 1.0 - 1.0 / nf)
    } else {
        (1.0, 2.0, 0.5, 0.5)
    };
    let mut evals = 0usize;
    let mut trace = Vec::new();
    let mut best_f = f64::INFINITY;
    let mut eval = |x: &[f64], evals: &mut usize, trace: &mut Vec<f64>| -> f64 {
        let v = f(x);
        let v = if v.is_nan() { f64::INFINITY } else { v };
        *evals += 1;
        if v < best_f {
            best_f = v;
        }
        trace.push(best_f);
        v
    };
    let mut best_x = x0.to_vec();
    let mut best_val = eval(x0, &mut evals, &mut trace);
    let mut converged = false;
    let mut scale = step;
    'outer: loop {
        let mut simplex: Vec<(Vec<f64>, f64)> = Vec::with_capacity(n + 1);
        simplex.push((best_x.clone(), best_val));
        for i in 0..n {
            if evals >= max_evals {
                break 'outer;
            }
            let mut x = best_x.clone();
            x[i] += scale;
            let v = eval(&x, &mut evals, &mut trace);
            simplex.push((x, v));
        }
        let entry = best_val;
        loop {
            simplex.sort_by(|a, b| a.1.total_cmp(&b.1));
            let (fb, fw) = (simplex[0].1, simplex[n].1);
            if fb < best_val {
                best_val = fb;
                best_x = simplex[0].0.clone();
            }
            if fb.is_finite() && (fw - fb) <= ftol * (fb.abs() + 1e-10) {
                break;
            }
            if evals >= max_evals {
                break 'outer;
            }
            let mut centroid = vec![0.0; n];
            for (x, _) in &simplex[..n] {
                for (c, v) in centroid.iter_mut().zip(x) {
                    *c += v / nf;
                }
            }
            let along = |t: f64| -> Vec<f64> {
                centroid
                    .iter()
                    .zip(&simplex[n].0)
                    .map(|(c, w)| c + t * (c - w))
                    .collect()
            };
            let xr = along(alpha);
            let fr = eval(&xr, &mut evals, &mut trace);
            if fr < simplex[0].1 {
                let xe = along(alpha * gamma);
                let fe = eval(&xe, &mut evals, &mut trace);
                simplex[n] = if fe < fr { (xe, fe) } else { (xr, fr) };
            } else if fr < simplex[n - 1].1 {
                simplex[n] = (xr, fr);
            } else {
                let (xc, fc) = if fr < simplex[n].1 {
                    let xc = along(alpha * rho);
                    let fc = eval(&xc, &mut evals, &mut trace);
                    (xc, fc)
                } else {
                    let xc = along(-rho);
                    let fc = eval(&xc, &mut evals, &mut trace);
                    (xc, fc)
                };
                if fc < simplex[n].1.min(fr) {
                    simplex[n] = (xc, fc);
                } else {
                    let x0 = simplex[0].0.clone();
                    for item in simplex.iter_mut().skip(1) {
                        let xs: Vec<f64> = x0
                            .iter()
                            .zip(&item.0)
                            .map(|(b, x)| b + shrink * (x - b))
                            .collect();
                        let fs = eval(&xs, &mut evals, &mut trace);
                        *item = (xs, fs);
                        if evals >= max_evals {
                            break;
                        }
                    }
                }
            }
        }
        // restart test: a fresh, smaller simplex must not find anything better
        if best_val.is_finite() && entry - best_val <= ftol * (best_val.abs() + 1e-10) {
            converged = true;
            break;
        }
        scale = (scale * 0.5).max(step * 0.05);
    }
    NelderMeadResult {
        x: best_x,
        f: best_val,
        n_evals: evals,
        converged,
        trace,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bspline::KnotConfig;
    use crate::data::grid_coords;
    use crate::linalg::{from_rows, symmetric_eigenvalues, Matrix};
    use crate::model::{BivariateMaternModel, IndependentModel, LmcModel, ParsimoniousModel, SemiparamModel};
    use crate::simulate::simulate_grf;
    use crate::spectral::{BivariateMaternParams, FrequencyGrid, LmcParams, MarginalParams, SplineCoherenceSpec};
    use crate::validity::check_validity;
    use rand::{Rng, SeedableRng};

    fn semi(p: usize, delta: f64, omega_t: f64, m: usize) -> Model {
        let knots = KnotConfig::from_delta(delta, omega_t).unwrap();
        Model::Semiparametric(SemiparamModel {
            d: 2,
            marginals: vec![MarginalParams::new(1.0, 1.0, 1.0); p],
            coherence: SplineCoherenceSpec::constant(knots, p, 0.0),
            grid: FrequencyGrid::new(omega_t, m).unwrap(),
        })
    }

    fn bimatern() -> Model {
        Model::BivariateMatern(BivariateMaternModel {
            d: 2,
            params: BivariateMaternParams {
                m1: MarginalParams::new(1.0, 1.0, 1.0),
                m2: MarginalParams::new(1.0, 1.0, 1.0),
                a12: 1.0,
                nu12: 1.0,
                rho12: 0.0,
            },
        })
    }

    fn lmc() -> Model {
        Model::Lmc(LmcModel {
            d: 2,
            lmc: LmcParams {
                b: vec![vec![1.0, 0.4], vec![0.9, 7.5]],
                latent: vec![MarginalParams::new(1.0, 1.0, 0.5), MarginalParams::new(1.0, 2.0, 0.5)],
            },
            nugget: vec![0.0, 0.0],
        })
    }

    fn independent(p: usize) -> Model {
        Model::Independent(IndependentModel {
            d: 2,
            marginals: vec![MarginalParams::new(1.0, 1.0, 1.0); p],
        })
    }

    #[test]
    fn loglik_of_single_standard_normal() {
        let model = independent(1);
        let data = SpatialDataset::new(2, vec![0.0, 0.0], vec![0.0], vec!["x".into()]).unwrap();
        let ll = loglik(&model, &data).unwrap();
        assert!((ll + 0.918_938_533_204_672_7).abs() < 1e-12);
    }

    #[test]
    fn loglik_matches_dense_formula() {
        let coords = grid_coords(3, 3, 0.7, 0.9, [0.0, 0.0]);
        let model = Model::Semiparametric(match semi(2, 1.0, 4.5, 380) {
            Model::Semiparametric(mut s) => {
                s.coherence = SplineCoherenceSpec::from_vectors(
                    s.coherence.knots,
                    2,
                    vec![vec![-0.5, 0.2, 0.9, 0.3, -0.1, 0.4, 0.6, -0.8]],
                )
                .unwrap();
                s.marginals[1] = MarginalParams::new(1.7, 2.0, 0.6).with_nugget(0.1);
                s
            }
            _ => unreachable!(),
        });
        let x: Vec<f64> = (0..18).map(|i| (i as f64 * 1.3).sin()).collect();
        let data = SpatialDataset::new(2, coords.clone(), x.clone(), vec!["a".into(), "b".into()]).unwrap();
        let sigma = crate::covariance::assemble_sigma(&model, &coords).unwrap();
                let det: f64 = symmetric_eigenvalues(&sigma).unwrap().iter().map(|v| v.ln()).sum();
        let xv = Matrix::from_fn(18, 1, |i, _| x[i]);
        let sol = {
            use faer::linalg::solvers::Solve;
            sigma.partial_piv_lu().solve(&xv)
        };
        let q = (xv.transpose() * &sol)[(0, 0)];
        let direct = -0.5 * (det + q + 18.0 * LN_2PI);
        let ll = loglik(&model, &data).unwrap();
        assert!(((ll - direct) / direct).abs() < 1e-8);

        // rescaling the data by c and the variances by c²
        let c: f64 = 2.5;
        let scaled = match &model {
            Model::Semiparametric(s) => {
                let mut s = s.clone();
                for m in s.marginals.iter_mut() {
                    m.sigma *= c;
                    m.nugget *= c * c;
                }
                Model::Semiparametric(s)
            }
            _ => unreachable!(),
        };
        let sdata = data.with_values(x.iter().map(|v| v * c).collect()).unwrap();
        let ll2 = loglik(&scaled, &sdata).unwrap();
        assert!((ll2 - (ll - 18.0 * c.ln())).abs() < 1e-9);

        // location order does not matter
        let perm: Vec<usize> = vec![4, 0, 8, 2, 6, 1, 7, 3, 5];
        let ll3 = loglik(&model, &data.subset(&perm)).unwrap();
        assert!((ll3 - ll).abs() < 1e-9);
        let _ = from_rows(&[vec![1.0]]);
    }

    #[test]
    fn aic_arithmetic() {
        assert!((aic(-308.092, 14) - 644.184).abs() < 1e-9);
        assert!((aic(-312.226, 12) - 648.452).abs() < 1e-9);
        assert_eq!(aic(0.0, 0), 0.0);
    }

    #[test]
    fn parameter_counts() {
        let count = |m: Model, nugget: bool, fix_nu: bool| {
            let mut t = ModelTemplate::new(m).with_nugget(nugget);
            if fix_nu {
                t = t.fix_smoothness().unwrap();
            }
            Parameterization::from_template(&t).unwrap().n_free()
        };
        assert_eq!(count(independent(2), true, false), 8);
        assert_eq!(count(bimatern(), true, false), 11);
        assert_eq!(count(lmc(), true, false), 12);
        assert_eq!(count(semi(2, 2.0, 9.0, 299), true, false), 16);
        assert_eq!(count(semi(2, 4.0, 9.0, 299), true, false), 14);
        assert_eq!(count(semi(2, 5.0, 9.0, 299), true, false), 13);
        assert_eq!(count(semi(2, 1.0, 4.5, 380), false, true), 12);
        assert_eq!(count(semi(2, 2.0, 9.8, 299), false, false), 14);
        let pars = Model::Parsimonious(ParsimoniousModel {
            d: 2,
            a: 1.0,
            sigma: vec![1.0; 3],
            nu: vec![1.0; 3],
            nugget: vec![],
            tau: vec![0.0; 3],
        });
        assert_eq!(count(pars, false, false), 3 + 3 + 1 + 3);
    }

    #[test]
    fn fixing_by_name_and_group() {
        let t = ModelTemplate::new(semi(2, 1.0, 4.5, 380)).fix("nu", 3.0).fix("b12[0]", 0.25);
        let par = Parameterization::from_template(&t).unwrap();
        assert_eq!(par.n_free(), 6 + 8 - 2 - 1);
        let m = par.decode(&par.encode()).unwrap();
        if let Model::Semiparametric(s) = &m {
            assert_eq!(s.marginals[0].nu, 3.0);
            assert_eq!(s.marginals[1].nu, 3.0);
            assert_eq!(s.coherence.pairs[0].b[3], 0.25);
        }
        assert!(Parameterization::from_template(&ModelTemplate::new(independent(2)).fix("zeta", 1.0)).is_err());
    }

    #[test]
    fn encode_decode_round_trip() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        let pars = Model::Parsimonious(ParsimoniousModel {
            d: 2,
            a: 1.0,
            sigma: vec![1.0; 3],
            nu: vec![1.0; 3],
            nugget: vec![0.1; 3],
            tau: vec![0.0; 3],
        });
        for template in [semi(2, 1.0, 4.5, 50), semi(3, 1.0, 4.5, 50), bimatern(), lmc(), independent(2), pars] {
            let par = Parameterization::from_template(&ModelTemplate::new(template).with_nugget(true)).unwrap();
            for _ in 0..200 {
                let x: Vec<f64> = (0..par.n_free()).map(|_| rng.random_range(-2.0..2.0)).collect();
                let m = par.decode(&x).unwrap();
                m.validate().unwrap();
                let back = par.encode_model(&m);
                for (a, b) in x.iter().zip(&back) {
                    assert!((a - b).abs() < 1e-9, "{a} vs {b} for {}", m.kind());
                }
            }
        }
    }

    #[test]
    fn nelder_mead_minimizes_rosenbrock_and_trace_is_monotone() {
        let f = |x: &[f64]| (1.0 - x[0]).powi(2) + 100.0 * (x[1] - x[0] * x[0]).powi(2);
        let r = nelder_mead(f, &[-1.2, 1.0], 0.5, 1e-12, 20_000);
        assert!(r.converged);
        assert!((r.x[0] - 1.0).abs() < 1e-4 && (r.x[1] - 1.0).abs() < 1e-4);
        assert!(r.trace.windows(2).all(|w| w[1] <= w[0]));
        assert_eq!(r.trace.len(), r.n_evals);
        let quad = |x: &[f64]| x.iter().enumerate().map(|(i, v)| (i as f64 + 1.0) * (v - 0.5).powi(2)).sum::<f64>();
        let r = nelder_mead(quad, &[0.0; 6], 0.5, 1e-12, 20_000);
        assert!(r.x.iter().all(|v| (v - 0.5).abs() < 1e-3));
        let capped = nelder_mead(quad, &[0.0; 6], 0.5, 1e-12, 30);
        assert!(!capped.converged && capped.n_evals <= 31);
    }

    #[test]
    fn fit_with_everything_fixed_evaluates_once() {
        let coords = grid_coords(3, 3, 1.0, 1.0, [0.0, 0.0]);
        let data = simulate_grf(&independent(2), &coords, 1, 1).unwrap().remove(0);
        let t = ModelTemplate::new(independent(2))
            .fix("sigma2", 1.0)
            .fix("a", 1.0)
            .fix("nu", 1.0);
        let r = fit(&t, &data, &FitOptions::default()).unwrap();
        assert_eq!(r.n_evals, 1);
        assert_eq!(r.n_params, 0);
        assert!((r.loglik - loglik(&independent(2), &data).unwrap()).abs() < 1e-12);
    }

    #[test]
    fn fit_recovers_independent_scale_and_iterates_stay_valid() {
        let truth = Model::Independent(IndependentModel {
            d: 2,
            marginals: vec![MarginalParams::new(1.0, 1.0, 0.5); 1],
        });
        let coords = grid_coords(12, 12, 1.0, 1.0, [0.0, 0.0]);
        let reps = simulate_grf(&truth, &coords, 5, 21).unwrap();
        let t = ModelTemplate::new(truth.clone()).fix_smoothness().unwrap();
        let opts = FitOptions {
            restarts: 0,
            ..FitOptions::default()
        };
        let mut est: Vec<f64> = reps
            .iter()
            .map(|d| {
                let r = fit(&t, d, &opts).unwrap();
                assert!(r.trace.windows(2).all(|w| w[1] >= w[0]));
                assert!((r.aic - (2.0 * r.n_params as f64 - 2.0 * r.loglik)).abs() < 1e-9);
                r.estimates["a_1"]
            })
            .collect();
        est.sort_by(|a, b| a.total_cmp(b));
        let med = est[2];
        assert!((med - 0.5).abs() < 0.125, "median a = {med}");

        let semi_t = ModelTemplate::new(semi(2, 1.0, 4.5, 60));
        let par = Parameterization::from_template(&semi_t).unwrap();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(5);
        for _ in 0..100 {
            let x: Vec<f64> = (0..par.n_free()).map(|_| rng.random_range(-20.0..20.0)).collect();
            if let Model::Semiparametric(s) = par.decode(&x).unwrap() {
                assert!(check_validity(&s.coherence, 2).unwrap().valid);
            }
        }
    }
}
