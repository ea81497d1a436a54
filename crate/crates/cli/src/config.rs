//! Run configuration: a JSON file overlaid with command-line flags.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use semicoh::bspline::KnotConfig;
use semicoh::inference::{FitOptions, Init, ModelTemplate};
use semicoh::model::{
    BivariateMaternModel, IndependentModel, LmcModel, Model, ParsimoniousModel, SemiparamModel,
};
use semicoh::spectral::{
    n_pairs, BivariateMaternParams, FrequencyGrid, LmcParams, MarginalParams, SplineCoherenceSpec,
};

use crate::failure::Failure;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum ModelKind {
    #[serde(alias = "semiparametric")]
    #[value(alias = "semiparametric")]
    Semiparam,
    #[serde(alias = "bivariate_matern")]
    Bimatern,
    Parsimonious,
    Lmc,
    Independent,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSpec {
    #[serde(default = "default_omega_t")]
    pub omega_t: f64,
    #[serde(default = "default_m")]
    pub m: usize,
    /// Knot spacing; `K` is derived from it.
    #[serde(default)]
    pub delta: Option<f64>,
    /// Last coefficient index; used when `delta` is absent.
    #[serde(default)]
    pub k: Option<usize>,
}

fn default_omega_t() -> f64 {
    4.5
}

fn default_m() -> usize {
    380
}

impl Default for GridSpec {
    fn default() -> Self {
        Self {
            omega_t: default_omega_t(),
            m: default_m(),
            delta: None,
            k: None,
        }
    }
}

impl GridSpec {
    pub fn knots(&self) -> Result<KnotConfig, Failure> {
        let knots = match (self.delta, self.k) {
            (Some(delta), Some(k)) => KnotConfig::new(delta, k, self.omega_t),
            (Some(delta), None) => KnotConfig::from_delta(delta, self.omega_t),
            (None, Some(k)) => KnotConfig::from_k(k, self.omega_t),
            (None, None) => KnotConfig::from_delta(1.0, self.omega_t),
        };
        knots.map_err(|e| Failure::config(format!("grid: {e}")))
    }

    pub fn frequency_grid(&self) -> Result<FrequencyGrid, Failure> {
        FrequencyGrid::new(self.omega_t, self.m).map_err(|e| Failure::config(format!("grid: {e}")))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSpec {
    #[serde(default)]
    pub kind: Option<ModelKind>,
    /// Number of components; taken from the data when absent.
    #[serde(default)]
    pub p: Option<usize>,
    #[serde(default = "default_d")]
    pub d: usize,
    #[serde(default)]
    pub grid: GridSpec,
    /// Complete parameter values, in the format of `model.json`.
    #[serde(default)]
    pub params: Option<Model>,
    /// Path of a `model.json` to load instead of `params`.
    #[serde(default)]
    pub file: Option<PathBuf>,
    #[serde(default)]
    pub fixed: BTreeMap<String, f64>,
    #[serde(default)]
    pub nugget: bool,
}

fn default_d() -> usize {
    2
}

impl Default for ModelSpec {
    fn default() -> Self {
        Self {
            kind: None,
            p: None,
            d: default_d(),
            grid: GridSpec::default(),
            params: None,
            file: None,
            fixed: BTreeMap::new(),
            nugget: false,
        }
    }
}

fn kind_of(model: &Model) -> ModelKind {
    match model {
        Model::Semiparametric(_) => ModelKind::Semiparam,
        Model::Independent(_) => ModelKind::Independent,
        Model::BivariateMatern(_) => ModelKind::Bimatern,
        Model::Parsimonious(_) => ModelKind::Parsimonious,
        Model::Lmc(_) => ModelKind::Lmc,
    }
}

impl ModelSpec {
    /// The model given explicitly through `params` or `file`, if any.
    pub fn explicit(&self) -> Result<Option<Model>, Failure> {
        let model = match (&self.params, &self.file) {
            (Some(_), Some(_)) => {
                return Err(Failure::config("model: give either params or file, not both"));
            }
            (Some(m), None) => m.clone(),
            (None, Some(path)) => load_model(path)?,
            (None, None) => return Ok(None),
        };
        if let Some(kind) = self.kind {
            if kind != kind_of(&model) {
                return Err(Failure::config(format!(
                    "model: kind {kind:?} does not match the given {} parameters",
                    model.kind()
                )));
            }
        }
        model
            .validate()
            .map_err(|e| Failure::config(format!("model parameters: {e}")))?;
        Ok(Some(model))
    }

    /// Explicit parameters or a neutral default of the requested kind.
    pub fn model(&self, p_data: Option<usize>) -> Result<Model, Failure> {
        if let Some(m) = self.explicit()? {
            if let Some(p) = p_data {
                if p != m.p() {
                    return Err(Failure::data(format!(
                        "data has {p} components, model {}",
                        m.p()
                    )));
                }
            }
            return Ok(m);
        }
        let p = match (self.p, p_data) {
            (Some(a), Some(b)) if a != b => {
                return Err(Failure::config(format!("model.p = {a} but data has {b} components")));
            }
            (Some(a), _) => a,
            (None, Some(b)) => b,
            (None, None) => 2,
        };
        let d = self.d;
        let unit = MarginalParams::new(1.0, 1.0, 1.0);
        let kind = self.kind.unwrap_or(ModelKind::Semiparam);
        let model = match kind {
            ModelKind::Semiparam => Model::Semiparametric(SemiparamModel {
                d,
                marginals: vec![unit; p],
                coherence: SplineCoherenceSpec::constant(self.grid.knots()?, p, 0.0),
                grid: self.grid.frequency_grid()?,
            }),
            ModelKind::Independent => Model::Independent(IndependentModel {
                d,
                marginals: vec![unit; p],
            }),
            ModelKind::Bimatern => {
                if p != 2 {
                    return Err(Failure::config(format!(
                        "the bivariate Matérn model needs 2 components, got {p}"
                    )));
                }
                Model::BivariateMatern(BivariateMaternModel {
                    d,
                    params: BivariateMaternParams {
                        m1: unit,
                        m2: unit,
                        a12: 1.0,
                        nu12: 1.25,
                        rho12: 0.0,
                    },
                })
            }
            ModelKind::Parsimonious => Model::Parsimonious(ParsimoniousModel {
                d,
                a: 1.0,
                sigma: vec![1.0; p],
                nu: vec![1.0; p],
                nugget: vec![0.0; p],
                tau: vec![0.0; n_pairs(p)],
            }),
            ModelKind::Lmc => Model::Lmc(LmcModel {
                d,
                lmc: LmcParams {
                    b: (0..p)
                        .map(|i| (0..p).map(|l| if i == l { 1.0 } else { 0.0 }).collect())
                        .collect(),
                    latent: vec![unit; p],
                },
                nugget: vec![0.0; p],
            }),
        };
        Ok(model)
    }

    pub fn template(&self, p_data: Option<usize>) -> Result<ModelTemplate, Failure> {
        Ok(ModelTemplate {
            model: self.model(p_data)?,
            fixed: self.fixed.clone(),
            nugget: self.nugget,
        })
    }

    /// Whether starting values come from the data or from explicit params.
    pub fn init(&self) -> Init {
        if self.params.is_some() || self.file.is_some() {
            Init::Template
        } else {
            Init::Data
        }
    }
}

pub fn load_model(path: &Path) -> Result<Model, Failure> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Failure::config(format!("{}: {e}", path.display())))?;
    let value: serde_json::Value = serde_json::from_str(&text)
        .map_err(|e| Failure::config(format!("{}: {e}", path.display())))?;
    // accept a bare model or a fit report that contains one
    let inner = value.get("model").filter(|m| m.get("kind").is_some()).cloned().unwrap_or(value);
    serde_json::from_value(inner).map_err(|e| Failure::config(format!("{}: {e}", path.display())))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RegularGridSpec {
    pub nx: usize,
    pub ny: usize,
    #[serde(default = "one")]
    pub dx: f64,
    #[serde(default = "one")]
    pub dy: f64,
    #[serde(default = "unit_origin")]
    pub origin: [f64; 2],
}

fn one() -> f64 {
    1.0
}

fn unit_origin() -> [f64; 2] {
    [1.0, 1.0]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulateSpec {
    #[serde(default)]
    pub grid: Option<RegularGridSpec>,
    /// CSV whose leading coordinate columns give the locations.
    #[serde(default)]
    pub locations: Option<PathBuf>,
    #[serde(default = "one_rep")]
    pub n_reps: usize,
}

fn one_rep() -> usize {
    1
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PredictSpec {
    /// Held-out locations drawn at random from `data`.
    #[serde(default)]
    pub n_test: Option<usize>,
    /// Separate validation file; replaces the random split.
    #[serde(default)]
    pub test: Option<PathBuf>,
    /// Standardize each component with training moments before fitting.
    #[serde(default = "yes")]
    pub standardize: bool,
    /// Report predictions and scores in the data's own units.
    #[serde(default)]
    pub original_units: bool,
    /// Use the model as given instead of fitting it to the training set.
    #[serde(default)]
    pub skip_fit: bool,
}

fn yes() -> bool {
    true
}

impl Default for PredictSpec {
    fn default() -> Self {
        Self {
            n_test: None,
            test: None,
            standardize: true,
            original_units: false,
            skip_fit: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CoherenceSpec {
    #[serde(default)]
    pub omega_max: Option<f64>,
    #[serde(default = "default_points")]
    pub n_points: usize,
}

fn default_points() -> usize {
    201
}

impl Default for CoherenceSpec {
    fn default() -> Self {
        Self {
            omega_max: None,
            n_points: default_points(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_out")]
    pub out: PathBuf,
    #[serde(default)]
    pub threads: Option<usize>,
    #[serde(default)]
    pub data: Option<PathBuf>,
    #[serde(default)]
    pub model: ModelSpec,
    #[serde(default)]
    pub optimizer: FitOptions,
    #[serde(default)]
    pub simulate: Option<SimulateSpec>,
    #[serde(default)]
    pub predict: Option<PredictSpec>,
    #[serde(default)]
    pub coherence: Option<CoherenceSpec>,
}

fn default_out() -> PathBuf {
    PathBuf::from("out")
}

impl Default for RunConfig {
    fn default() -> Self {
        serde_json::from_str("{}").expect("empty config is valid")
    }
}

/// Flags shared by every subcommand; each overrides its JSON key.
#[derive(Debug, Clone, Default, clap::Args)]
pub struct Overrides {
    /// JSON run configuration.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Output directory.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Worker threads (1 runs sequentially).
    #[arg(long)]
    pub threads: Option<usize>,
    /// Data CSV.
    #[arg(long)]
    pub data: Option<PathBuf>,
    #[arg(long, value_enum)]
    pub model: Option<ModelKind>,
    /// Knot spacing Δ.
    #[arg(long = "delta-knot")]
    pub delta_knot: Option<f64>,
    /// Truncation frequency ω_t.
    #[arg(long = "omega-t")]
    pub omega_t: Option<f64>,
    /// Number of Hankel frequencies.
    #[arg(long)]
    pub m: Option<usize>,
    /// Hold a parameter fixed, e.g. `nu=3` or `b12[0]=0.5`.
    #[arg(long = "fix", value_name = "PARAM=VALUE", value_parser = parse_fix)]
    pub fix: Vec<(String, f64)>,
    /// Estimate nugget variances.
    #[arg(long)]
    pub nugget: bool,
}

fn parse_fix(s: &str) -> Result<(String, f64), String> {
    let (name, value) = s
        .split_once('=')
        .ok_or_else(|| format!("expected PARAM=VALUE, got {s:?}"))?;
    let value: f64 = value
        .trim()
        .parse()
        .map_err(|_| format!("cannot parse {value:?} as a number"))?;
    Ok((name.trim().to_string(), value))
}

impl RunConfig {
    pub fn from_file(path: &Path) -> Result<Self, Failure> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Failure::config(format!("{}: {e}", path.display())))?;
        serde_json::from_str(&text).map_err(|e| Failure::config(format!("{}: {e}", path.display())))
    }

    /// Loads `--config` (or defaults) and applies the flags on top.
    pub fn resolve(o: &Overrides) -> Result<Self, Failure> {
        let mut cfg = match &o.config {
            Some(path) => Self::from_file(path)?,
            None => Self::default(),
        };
        cfg.apply(o);
        Ok(cfg)
    }

    pub fn apply(&mut self, o: &Overrides) {
        if let Some(s) = o.seed {
            self.seed = s;
        }
        if let Some(out) = &o.out {
            self.out = out.clone();
        }
        if let Some(t) = o.threads {
            self.threads = Some(t);
        }
        if let Some(d) = &o.data {
            self.data = Some(d.clone());
        }
        if let Some(k) = o.model {
            self.model.kind = Some(k);
        }
        if let Some(delta) = o.delta_knot {
            self.model.grid.delta = Some(delta);
            self.model.grid.k = None;
        }
        if let Some(w) = o.omega_t {
            self.model.grid.omega_t = w;
        }
        if let Some(m) = o.m {
            self.model.grid.m = m;
        }
        for (name, v) in &o.fix {
            self.model.fixed.insert(name.clone(), *v);
        }
        if o.nugget {
            self.model.nugget = true;
        }
        self.optimizer.seed = self.seed;
        if self.model.params.is_some() || self.model.file.is_some() {
            self.optimizer.init = self.model.init();
        }
    }

    pub fn data_path(&self) -> Result<&Path, Failure> {
        self.data
            .as_deref()
            .ok_or_else(|| Failure::config("no data file: set \"data\" or pass --data"))
    }
}
