//! Covariance synthesis and assembly of the block covariance matrix.
//!
//! The semiparametric model is turned into covariances by the finite Hankel
//! sum
//!
//! ```text
//! Ĉ_ij(h) = Σ_{ω ∈ F} (2πω)^{κ+1} h^{-κ} J_κ(ωh) f_ij(ω) δ,   κ = d/2 - 1,
//! ```
//!
//! followed by the rescaling `C_ij = √(c_i c_j) Ĉ_ij` with `c_i = σ_i² / Ĉ_ii(0)`.
//! Reference models use their closed forms. For a fixed set of locations the
//! unique lags and the Hankel weights are computed once and reused across
//! parameter values.

use std::collections::HashMap;
use std::sync::{Arc, Mutex};

use faer::Mat;

use crate::error::{Error, Result};
use crate::model::{Model, SemiparamModel};
use crate::par;
use crate::specfun::{bessel_j, bessel_k, bessel_k_scaled, ln_gamma, BesselOrder};
use crate::spectral::{FrequencyGrid, MaternSpectrum};

/// Default bound on `n·p` for dense assembly.
pub const DEFAULT_CAP: usize = 5000;

/// Matérn correlation `2^{1-ν}/Γ(ν) (ah)^ν K_ν(ah)` with constants precomputed.
#[derive(Debug, Clone, Copy)]
pub struct MaternKernel {
    nu: f64,
    a: f64,
    ln_c: f64,
}

impl MaternKernel {
    pub fn new(nu: f64, a: f64) -> Result<Self> {
        if !(nu > 0.0 && a > 0.0 && nu.is_finite() && a.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "Matérn smoothness and scale must be positive: nu={nu}, a={a}"
            )));
        }
        Ok(Self {
            nu,
            a,
            ln_c: (1.0 - nu) * std::f64::consts::LN_2 - ln_gamma(nu),
        })
    }

    pub fn correlation(&self, h: f64) -> f64 {
        let x = self.a * h;
        if x < 1e-100 {
            return 1.0;
        }
        if (self.nu - 0.5).abs() < 1e-15 {
            return (-x).exp();
        }
        let ln_k = if x > 1.0 {
            match bessel_k_scaled(self.nu, x) {
                Ok(v) => v.ln() - x,
                Err(_) => return 0.0,
            }
        } else {
            match bessel_k(self.nu, x) {
                Ok(v) if v.is_finite() => v.ln(),
                _ => return 1.0,
            }
        };
        (self.ln_c + self.nu * x.ln() + ln_k).exp().min(1.0)
    }
}

/// `M(h | σ, ν, a) = σ² 2^{1-ν}/Γ(ν) (ah)^ν K_ν(ah)`, with `M(0) = σ²`.
pub fn matern_cov(h: f64, sigma: f64, nu: f64, a: f64) -> Result<f64> {
    if !(sigma > 0.0) {
        return Err(Error::InvalidParameter(format!("sigma must be positive, got {sigma}")));
    }
    if !(h >= 0.0) {
        return Err(Error::OutOfDomain {
            what: "distance",
            value: h,
            lo: 0.0,
            hi: f64::INFINITY,
        });
    }
    Ok(sigma * sigma * MaternKernel::new(nu, a)?.correlation(h))
}

/// `𝒞(ν_i, ν_j, d) = Γ(ν_i+d/2)^{1/2} Γ(ν_j+d/2)^{1/2} Γ((ν_i+ν_j)/2)
///   / (Γ(ν_i)^{1/2} Γ(ν_j)^{1/2} Γ((ν_i+ν_j)/2 + d/2))`.
pub fn parsimonious_constant(nu_i: f64, nu_j: f64, d: usize) -> f64 {
    let hd = d as f64 / 2.0;
    let nbar = 0.5 * (nu_i + nu_j);
    (0.5 * ln_gamma(nu_i + hd) + 0.5 * ln_gamma(nu_j + hd) + ln_gamma(nbar)
        - 0.5 * ln_gamma(nu_i)
        - 0.5 * ln_gamma(nu_j)
        - ln_gamma(nbar + hd))
        .exp()
}

/// `τ 𝒞(ν_i, ν_j, d) · M(h | √(σ_i σ_j), (ν_i+ν_j)/2, a)`.
#[allow(clippy::too_many_arguments)]
pub fn parsimonious_cross_cov(
    tau_ij: f64,
    sig_i: f64,
    sig_j: f64,
    nu_i: f64,
    nu_j: f64,
    a: f64,
    d: usize,
    h: f64,
) -> Result<f64> {
    if !(sig_i > 0.0 && sig_j > 0.0 && nu_i > 0.0 && nu_j > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "parsimonious cross-covariance needs positive σ and ν: {sig_i}, {sig_j}, {nu_i}, {nu_j}"
        )));
    }
    let rho = tau_ij * parsimonious_constant(nu_i, nu_j, d);
    Ok(rho * matern_cov(h, (sig_i * sig_j).sqrt(), 0.5 * (nu_i + nu_j), a)?)
}

/// `(2πω)^{κ+1} h^{-κ} J_κ(ωh)`; at `h = 0` the factor `h^{-κ} J_κ(ωh)` is
/// replaced by its limit `(ω/2)^κ / Γ(κ+1)`.
pub fn hankel_weight(kappa: BesselOrder, omega: f64, h: f64) -> f64 {
    let k = kappa.value();
    let pre = (2.0 * std::f64::consts::PI * omega).powf(k + 1.0);
    if h == 0.0 {
        pre * (0.5 * omega).powf(k) * (-ln_gamma(k + 1.0)).exp()
    } else {
        pre * h.powf(-k) * bessel_j(kappa, omega * h)
    }
}

/// Unnormalized finite sum `Σ_{ω ∈ F} w(ω, h) s(ω) δ` for a spectral function `s`.
pub fn hankel_sum_raw(
    grid: &FrequencyGrid,
    d: usize,
    s: impl Fn(f64) -> f64,
    h: f64,
) -> Result<f64> {
    let kappa = BesselOrder::for_dimension(d)?;
    let delta = grid.delta_f();
    Ok(grid
        .frequencies()
        .map(|w| hankel_weight(kappa, w, h) * s(w))
        .sum::<f64>()
        * delta)
}

/// Marginal spectra, coherences and normalizing factors of a semiparametric
/// model on its frequency grid.
struct SemiparamSpectra {
    /// Spectral series per symmetric pair, length `m`.
    series: Vec<Vec<f64>>,
    /// `c_i = σ_i² / Ĉ_ii(0)`.
    norm: Vec<f64>,
}

fn semiparam_spectra(model: &SemiparamModel) -> Result<SemiparamSpectra> {
    let p = model.p();
    let d = model.d;
    let grid = &model.grid;
    let freqs: Vec<f64> = grid.frequencies().collect();
    let mut marg = Vec::with_capacity(p);
    for mp in &model.marginals {
        let sp = MaternSpectrum::new(mp, d)?;
        marg.push(freqs.iter().map(|&w| sp.eval(w)).collect::<Vec<f64>>());
    }
    let rows: Vec<Vec<f64>> = freqs
        .iter()
        .map(|&w| crate::bspline::basis_row(&model.coherence.knots, w))
        .collect::<Result<_>>()?;
    let kappa = BesselOrder::for_dimension(d)?;
    let delta = grid.delta_f();
    let w0: Vec<f64> = freqs.iter().map(|&w| hankel_weight(kappa, w, 0.0) * delta).collect();
    let mut series = vec![Vec::new(); sym_count(p)];
    let mut norm = vec![0.0; p];
    for i in 0..p {
        let raw0: f64 = w0.iter().zip(&marg[i]).map(|(a, b)| a * b).sum();
        if !(raw0 > 0.0) {
            return Err(Error::Degenerate(format!(
                "finite sum of component {i} vanishes at lag 0"
            )));
        }
        norm[i] = model.marginals[i].variance() / raw0;
        series[sym_index(p, i, i)] = marg[i].clone();
        for j in i + 1..p {
            let b = model.coherence.coeffs(i, j)?;
            series[sym_index(p, i, j)] = rows
                .iter()
                .enumerate()
                .map(|(t, row)| {
                    let g: f64 = row.iter().zip(b).map(|(r, c)| r * c).sum();
                    g * (marg[i][t] * marg[j][t]).sqrt()
                })
                .collect();
        }
    }
    Ok(SemiparamSpectra { series, norm })
}

/// Normalized semiparametric covariance `C_ij(h)` at a single lag.
pub fn hankel_sum_cov(model: &SemiparamModel, pair: (usize, usize), h: f64) -> Result<f64> {
    let (i, j) = pair;
    let p = model.p();
    if i >= p || j >= p {
        return Err(Error::MissingPair(i, j));
    }
    if !(h >= 0.0) {
        return Err(Error::OutOfDomain {
            what: "distance",
            value: h,
            lo: 0.0,
            hi: f64::INFINITY,
        });
    }
    let sp = semiparam_spectra(model)?;
    let s = &sp.series[sym_index(p, i, j)];
    let kappa = BesselOrder::for_dimension(model.d)?;
    let delta = model.grid.delta_f();
    let raw: f64 = model
        .grid
        .frequencies()
        .zip(s)
        .map(|(w, v)| hankel_weight(kappa, w, h) * v)
        .sum::<f64>()
        * delta;
    Ok((sp.norm[i] * sp.norm[j]).sqrt() * raw)
}

/// One term `coef · σ-free Matérn correlation` of a closed-form covariance.
#[derive(Debug, Clone, Copy)]
struct Term {
    coef: f64,
    kernel: MaternKernel,
}

/// Closed-form covariance of each symmetric pair as a sum of Matérn terms.
fn closed_form_terms(model: &Model) -> Result<Vec<Vec<Term>>> {
    let p = model.p();
    let mut terms = vec![Vec::new(); sym_count(p)];
    match model {
        Model::Semiparametric(_) => {
            return Err(Error::InvalidParameter(
                "semiparametric covariance has no closed form".into(),
            ))
        }
        Model::Independent(m) => {
            for (i, mp) in m.marginals.iter().enumerate() {
                mp.validate()?;
                terms[sym_index(p, i, i)].push(Term {
                    coef: mp.variance(),
                    kernel: MaternKernel::new(mp.nu, mp.a)?,
                });
            }
        }
        Model::BivariateMatern(m) => {
            let b = &m.params;
            b.validate_shape()?;
            terms[sym_index(2, 0, 0)].push(Term {
                coef: b.m1.variance(),
                kernel: MaternKernel::new(b.m1.nu, b.m1.a)?,
            });
            terms[sym_index(2, 1, 1)].push(Term {
                coef: b.m2.variance(),
                kernel: MaternKernel::new(b.m2.nu, b.m2.a)?,
            });
            terms[sym_index(2, 0, 1)].push(Term {
                coef: b.rho12 * b.m1.sigma * b.m2.sigma,
                kernel: MaternKernel::new(b.nu12, b.a12)?,
            });
        }
        Model::Parsimonious(m) => {
            for i in 0..p {
                m.marginal(i).validate()?;
                terms[sym_index(p, i, i)].push(Term {
                    coef: m.sigma[i] * m.sigma[i],
                    kernel: MaternKernel::new(m.nu[i], m.a)?,
                });
                for j in i + 1..p {
                    terms[sym_index(p, i, j)].push(Term {
                        coef: m.rho(i, j) * m.sigma[i] * m.sigma[j],
                        kernel: MaternKernel::new(0.5 * (m.nu[i] + m.nu[j]), m.a)?,
                    });
                }
            }
        }
        Model::Lmc(m) => {
            m.lmc.validate_shape()?;
            for (l, z) in m.lmc.latent.iter().enumerate() {
                let kernel = MaternKernel::new(z.nu, z.a)?;
                for i in 0..p {
                    for j in i..p {
                        let coef = m.lmc.b[i][l] * m.lmc.b[j][l] * z.variance();
                        if coef != 0.0 {
                            terms[sym_index(p, i, j)].push(Term { coef, kernel });
                        }
                    }
                }
            }
        }
    }
    Ok(terms)
}

/// Closed-form `C_ij(h)` of a reference model.
pub fn reference_cov(model: &Model, pair: (usize, usize), h: f64) -> Result<f64> {
    let (i, j) = pair;
    let p = model.p();
    if i >= p || j >= p {
        return Err(Error::MissingPair(i, j));
    }
    if !(h >= 0.0) {
        return Err(Error::OutOfDomain {
            what: "distance",
            value: h,
            lo: 0.0,
            hi: f64::INFINITY,
        });
    }
    let terms = closed_form_terms(model)?;
    Ok(terms[sym_index(p, i, j)]
        .iter()
        .map(|t| t.coef * t.kernel.correlation(h))
        .sum())
}

/// `C_ij(h)` for any model, without nugget.
pub fn model_cov(model: &Model, pair: (usize, usize), h: f64) -> Result<f64> {
    match model {
        Model::Semiparametric(m) => hankel_sum_cov(m, pair, h),
        _ => reference_cov(model, pair, h),
    }
}

/// Number of unordered pairs with repetition, `p(p+1)/2`.
pub fn sym_count(p: usize) -> usize {
    p * (p + 1) / 2
}

/// Position of `(i, j)`, `i ≤ j`, among the `p(p+1)/2` symmetric pairs.
pub fn sym_index(p: usize, i: usize, j: usize) -> usize {
    let (i, j) = if i <= j { (i, j) } else { (j, i) };
    i * (2 * p - i + 1) / 2 + (j - i)
}

fn lag_key(h: f64) -> (i32, i64) {
    if h == 0.0 {
        return (i32::MIN, 0);
    }
    let e = h.log10().floor() as i32;
    let mant = (h / 10f64.powi(e) * 1e11).round() as i64;
    (e, mant)
}

/// Unique Euclidean distances between locations (12 significant digits) and
/// the lag index of every location pair.
#[derive(Debug, Clone)]
pub struct LagTable {
    n: usize,
    lags: Vec<f64>,
    index: Vec<u32>,
}

impl LagTable {
    /// `coords` holds `n` points of dimension `d` back to back.
    pub fn new(coords: &[f64], d: usize) -> Result<Self> {
        if d == 0 || coords.len() % d != 0 {
            return Err(Error::Dimension(format!(
                "{} coordinates do not split into points of dimension {d}",
                coords.len()
            )));
        }
        if coords.iter().any(|c| !c.is_finite()) {
            return Err(Error::Data("non-finite coordinate".into()));
        }
        let n = coords.len() / d;
        let mut lags = vec![0.0];
        let mut keys: HashMap<(i32, i64), u32> = HashMap::new();
        keys.insert(lag_key(0.0), 0);
        let mut index = vec![0u32; n * n];
        for q in 0..n {
            let xq = &coords[q * d..(q + 1) * d];
            for r in q + 1..n {
                let xr = &coords[r * d..(r + 1) * d];
                let h = xq
                    .iter()
                    .zip(xr)
                    .map(|(a, b)| (a - b) * (a - b))
                    .sum::<f64>()
                    .sqrt();
                let id = *keys.entry(lag_key(h)).or_insert_with(|| {
                    lags.push(h);
                    (lags.len() - 1) as u32
                });
                index[q * n + r] = id;
                index[r * n + q] = id;
            }
        }
        Ok(Self { n, lags, index })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn lags(&self) -> &[f64] {
        &self.lags
    }

    pub fn lag_index(&self, q: usize, r: usize) -> usize {
        self.index[q * self.n + r] as usize
    }
}

/// Hankel weights `w(ω, h) δ` for every lag of a table and every grid
/// frequency, stored as a `n_lags × m` matrix.
#[derive(Debug, Clone)]
pub struct HankelKernel {
    d: usize,
    grid: FrequencyGrid,
    w: Mat<f64>,
}

impl HankelKernel {
    pub fn new(lags: &[f64], grid: FrequencyGrid, d: usize) -> Result<Self> {
        let kappa = BesselOrder::for_dimension(d)?;
        let m = grid.m();
        let delta = grid.delta_f();
        let freqs: Vec<f64> = grid.frequencies().collect();
        let mut flat = vec![0.0; lags.len() * m];
        par::for_each_chunk_mut(&mut flat, m, |l, row| {
            let h = lags[l];
            for (t, v) in row.iter_mut().enumerate() {
                *v = hankel_weight(kappa, freqs[t], h) * delta;
            }
        });
        let w = Mat::from_fn(lags.len(), m, |l, t| flat[l * m + t]);
        Ok(Self { d, grid, w })
    }

    pub fn matches(&self, grid: &FrequencyGrid, d: usize) -> bool {
        self.d == d && self.grid == *grid
    }
}

/// Covariance value of every symmetric pair at every lag of a table.
#[derive(Debug, Clone)]
pub struct CovTable {
    p: usize,
    values: Vec<Vec<f64>>,
}

impl CovTable {
    pub fn get(&self, i: usize, j: usize, lag: usize) -> f64 {
        self.values[sym_index(self.p, i, j)][lag]
    }

    pub fn p(&self) -> usize {
        self.p
    }
}

fn semiparam_table(model: &SemiparamModel, kernel: &HankelKernel) -> Result<CovTable> {
    let p = model.p();
    let sp = semiparam_spectra(model)?;
    let m = model.grid.m();
    let s = Mat::from_fn(m, sp.series.len(), |t, c| sp.series[c][t]);
    let raw = &kernel.w * &s;
    let mut values = vec![Vec::new(); sym_count(p)];
    for i in 0..p {
        for j in i..p {
            let c = sym_index(p, i, j);
            let scale = (sp.norm[i] * sp.norm[j]).sqrt();
            values[c] = (0..raw.nrows()).map(|l| scale * raw[(l, c)]).collect();
        }
    }
    Ok(CovTable { p, values })
}

fn closed_form_table(model: &Model, lags: &[f64]) -> Result<CovTable> {
    let p = model.p();
    let terms = closed_form_terms(model)?;
    let per_lag: Vec<Vec<f64>> = par::map(lags, |&h| {
        terms
            .iter()
            .map(|ts| ts.iter().map(|t| t.coef * t.kernel.correlation(h)).sum())
            .collect()
    });
    let values = (0..terms.len())
        .map(|c| per_lag.iter().map(|row| row[c]).collect())
        .collect();
    Ok(CovTable { p, values })
}

/// Covariances of `model` at an explicit list of lags.
pub fn cov_table_at(model: &Model, lags: &[f64]) -> Result<CovTable> {
    match model {
        Model::Semiparametric(m) => {
            let kernel = HankelKernel::new(lags, m.grid, m.d)?;
            semiparam_table(m, &kernel)
        }
        _ => closed_form_table(model, lags),
    }
}

/// Lags of a fixed location set plus a lazily built Hankel kernel, reused
/// across models evaluated on the same locations.
#[derive(Debug)]
pub struct Synthesizer {
    d: usize,
    lags: LagTable,
    kernel: Mutex<Option<Arc<HankelKernel>>>,
    cap: usize,
}

impl Synthesizer {
    pub fn new(coords: &[f64], d: usize) -> Result<Self> {
        Ok(Self {
            d,
            lags: LagTable::new(coords, d)?,
            kernel: Mutex::new(None),
            cap: DEFAULT_CAP,
        })
    }

    pub fn with_cap(mut self, cap: usize) -> Self {
        self.cap = cap;
        self
    }

    pub fn lag_table(&self) -> &LagTable {
        &self.lags
    }

    pub fn n(&self) -> usize {
        self.lags.n()
    }

    fn kernel_for(&self, grid: &FrequencyGrid, d: usize) -> Result<Arc<HankelKernel>> {
        let mut guard = self.kernel.lock().unwrap_or_else(|e| e.into_inner());
        if let Some(k) = guard.as_ref() {
            if k.matches(grid, d) {
                return Ok(Arc::clone(k));
            }
        }
        let k = Arc::new(HankelKernel::new(self.lags.lags(), *grid, d)?);
        *guard = Some(Arc::clone(&k));
        Ok(k)
    }

    pub fn table(&self, model: &Model) -> Result<CovTable> {
        if model.d() != self.d {
            return Err(Error::Dimension(format!(
                "model dimension {} but locations in dimension {}",
                model.d(),
                self.d
            )));
        }
        match model {
            Model::Semiparametric(m) => {
                let kernel = self.kernel_for(&m.grid, m.d)?;
                semiparam_table(m, &kernel)
            }
            _ => closed_form_table(model, self.lags.lags()),
        }
    }

    /// The `np × np` block covariance matrix, index `q·p + i` for component
    /// `i` at location `q`, nuggets on the diagonal.
    pub fn sigma(&self, model: &Model) -> Result<Mat<f64>> {
        let p = model.p();
        let n = self.n();
        if n * p > self.cap {
            return Err(Error::Capacity {
                size: n * p,
                cap: self.cap,
            });
        }
        let table = self.table(model)?;
        Ok(sigma_from_table(&table, &self.lags, &model.nuggets()))
    }
}

fn sigma_from_table(table: &CovTable, lags: &LagTable, nuggets: &[f64]) -> Mat<f64> {
    let p = table.p();
    let n = lags.n();
    Mat::from_fn(n * p, n * p, |r, c| {
        let (q, i) = (r / p, r % p);
        let (s, j) = (c / p, c % p);
        let v = table.get(i, j, lags.lag_index(q, s));
        if r == c {
            v + nuggets[i]
        } else {
            v
        }
    })
}

/// Block covariance matrix of `model` at `coords` (points of dimension `d`).
pub fn assemble_sigma(model: &Model, coords: &[f64]) -> Result<Mat<f64>> {
    Synthesizer::new(coords, model.d())?.sigma(model)
}
