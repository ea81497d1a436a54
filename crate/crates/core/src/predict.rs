//! Co-kriging and scoring of Gaussian predictive distributions.

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};
use statrs::function::erf::erfc;

use crate::covariance::Synthesizer;
use crate::data::SpatialDataset;
use crate::error::{Error, Result};
use crate::linalg::Cholesky;
use crate::model::Model;
use crate::par;
use crate::rng::{substream, SPLITS};

const FRAC_1_SQRT_2PI: f64 = 0.398_942_280_401_432_7;
const FRAC_1_SQRT_PI: f64 = 0.564_189_583_547_756_3;

/// Gaussian predictive distributions at (location, component) targets.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictiveDistribution {
    /// Index into the test locations.
    pub location: Vec<usize>,
    pub component: Vec<usize>,
    pub mean: Vec<f64>,
    pub sd: Vec<f64>,
}

impl PredictiveDistribution {
    pub fn len(&self) -> usize {
        self.mean.len()
    }

    pub fn is_empty(&self) -> bool {
        self.mean.is_empty()
    }

    /// Maps means and sds back through `x ↦ m + s·x` per component.
    pub fn destandardized(&self, moments: &[(f64, f64)]) -> Self {
        let mut out = self.clone();
        for k in 0..self.len() {
            let (m, s) = moments[self.component[k]];
            out.mean[k] = m + s * self.mean[k];
            out.sd[k] = s * self.sd[k];
        }
        out
    }

    /// Entries for component `i` only.
    pub fn component_subset(&self, i: usize) -> Self {
        let idx: Vec<usize> = (0..self.len()).filter(|&k| self.component[k] == i).collect();
        Self {
            location: idx.iter().map(|&k| self.location[k]).collect(),
            component: idx.iter().map(|&k| self.component[k]).collect(),
            mean: idx.iter().map(|&k| self.mean[k]).collect(),
            sd: idx.iter().map(|&k| self.sd[k]).collect(),
        }
    }

    /// Observed values at the targets, read from `test` (same locations).
    pub fn actuals(&self, test: &SpatialDataset) -> Vec<f64> {
        self.location
            .iter()
            .zip(&self.component)
            .map(|(&q, &i)| test.value(q, i))
            .collect()
    }
}

/// Conditional mean and sd of `model` at `test_locations` (flat, points of
/// the model's dimension) given `train`, for each component with
/// `components[i]` set. The sd includes the target's nugget.
pub fn cokrige(
    model: &Model,
    train: &SpatialDataset,
    test_locations: &[f64],
    components: &[bool],
) -> Result<PredictiveDistribution> {
    let p = model.p();
    let d = model.d();
    if train.p() != p || train.d() != d {
        return Err(Error::Dimension(format!(
            "model is {p}-variate in d = {d}, training data {}-variate in d = {}",
            train.p(),
            train.d()
        )));
    }
    if components.len() != p {
        return Err(Error::Dimension(format!("component mask has {} entries for p = {p}", components.len())));
    }
    if train.n() == 0 {
        return Err(Error::Data("empty training set".into()));
    }
    if test_locations.len() % d != 0 {
        return Err(Error::Dimension("test locations do not split into points".into()));
    }
    train.require_complete()?;
    let n = train.n();
    let n_test = test_locations.len() / d;
    for t in 0..n_test {
        let x = &test_locations[t * d..(t + 1) * d];
        if (0..n).any(|q| train.location(q) == x) {
            log::warn!("test location {t} coincides with a training location");
        }
    }

    let mut coords = train.coords().to_vec();
    coords.extend_from_slice(test_locations);
    let syn = Synthesizer::new(&coords, d)?;
    let table = syn.table(model)?;
    let lags = syn.lag_table();
    let nuggets = model.nuggets();

    let np = n * p;
    let sigma = faer::Mat::from_fn(np, np, |r, c| {
        let (q, i) = (r / p, r % p);
        let (s, j) = (c / p, c % p);
        let v = table.get(i, j, lags.lag_index(q, s));
        if r == c {
            v + nuggets[i]
        } else {
            v
        }
    });
    let chol = Cholesky::new(&sigma)?;
    let z = chol.whiten(train.stacked());

    let targets: Vec<(usize, usize)> = (0..n_test)
        .flat_map(|t| (0..p).filter(|&i| components[i]).map(move |i| (t, i)))
        .collect();
    let out = par::map(&targets, |&(t, i)| {
        let loc = n + t;
        let cross: Vec<f64> = (0..np)
            .map(|r| table.get(r % p, i, lags.lag_index(r / p, loc)))
            .collect();
        let w = chol.whiten(&cross);
        let mean: f64 = w.iter().zip(&z).map(|(a, b)| a * b).sum();
        let explained: f64 = w.iter().map(|v| v * v).sum();
        let var = (table.get(i, i, 0) - explained).max(0.0) + nuggets[i];
        (mean, var.sqrt())
    });
    Ok(PredictiveDistribution {
        location: targets.iter().map(|t| t.0).collect(),
        component: targets.iter().map(|t| t.1).collect(),
        mean: out.iter().map(|o| o.0).collect(),
        sd: out.iter().map(|o| o.1).collect(),
    })
}

/// How `nmse` is computed, stored with every report.
pub const NMSE_DEFINITION: &str = "mean of (y - mu)^2 / sigma^2";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreReport {
    pub rmspe: f64,
    pub mae: f64,
    pub nmse: f64,
    pub mcrps: f64,
    pub mlogs: f64,
    pub n: usize,
    pub nmse_definition: String,
}

/// Standard normal CDF.
pub fn norm_cdf(z: f64) -> f64 {
    0.5 * erfc(-z * std::f64::consts::FRAC_1_SQRT_2)
}

pub fn norm_pdf(z: f64) -> f64 {
    FRAC_1_SQRT_2PI * (-0.5 * z * z).exp()
}

/// CRPS of `N(μ, σ²)` at `y`.
pub fn crps_gaussian(mu: f64, sigma: f64, y: f64) -> f64 {
    let z = (y - mu) / sigma;
    sigma * (z * (2.0 * norm_cdf(z) - 1.0) + 2.0 * norm_pdf(z) - FRAC_1_SQRT_PI)
}

/// Negative log density of `N(μ, σ²)` at `y`.
pub fn logs_gaussian(mu: f64, sigma: f64, y: f64) -> f64 {
    let z = (y - mu) / sigma;
    0.5 * z * z + sigma.ln() + 0.918_938_533_204_672_7
}

/// Scores of `pred` against `actual`; targets with a missing actual are
/// skipped.
pub fn score(pred: &PredictiveDistribution, actual: &[f64]) -> Result<ScoreReport> {
    if actual.len() != pred.len() {
        return Err(Error::Dimension(format!(
            "{} actuals for {} predictions",
            actual.len(),
            pred.len()
        )));
    }
    let idx: Vec<usize> = (0..actual.len()).filter(|&k| !actual[k].is_nan()).collect();
    if idx.is_empty() {
        return Err(Error::Data("no observed values to score against".into()));
    }
    if let Some(&k) = idx.iter().find(|&&k| !(pred.sd[k] > 0.0)) {
        return Err(Error::ZeroVariance(format!(
            "predictive sd {} at target {k}",
            pred.sd[k]
        )));
    }
    let n = idx.len() as f64;
    let mean = |f: &dyn Fn(usize) -> f64| idx.iter().map(|&k| f(k)).sum::<f64>() / n;
    let err = |k: usize| actual[k] - pred.mean[k];
    Ok(ScoreReport {
        rmspe: mean(&|k| err(k) * err(k)).sqrt(),
        mae: mean(&|k| err(k).abs()),
        nmse: mean(&|k| (err(k) / pred.sd[k]).powi(2)),
        mcrps: mean(&|k| crps_gaussian(pred.mean[k], pred.sd[k], actual[k])),
        mlogs: mean(&|k| logs_gaussian(pred.mean[k], pred.sd[k], actual[k])),
        n: idx.len(),
        nmse_definition: NMSE_DEFINITION.to_string(),
    })
}

/// Random split of `0..n` into `n - n_test` training and `n_test` test
/// indices, each sorted, from the `splits` substream.
pub fn train_test_split(n: usize, n_test: usize, seed: u64) -> Result<(Vec<usize>, Vec<usize>)> {
    if n_test == 0 || n_test >= n {
        return Err(Error::InvalidParameter(format!(
            "test size {n_test} must lie in 1..{n}"
        )));
    }
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(&mut substream(seed, SPLITS, 0));
    let mut test = idx[..n_test].to_vec();
    let mut train = idx[n_test..].to_vec();
    test.sort_unstable();
    train.sort_unstable();
    Ok((train, test))
}
