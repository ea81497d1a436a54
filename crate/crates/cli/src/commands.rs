use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;

use semicoh::data::{grid_coords, SpatialDataset};
use semicoh::inference::{fit, FitResult};
use semicoh::model::Model;
use semicoh::predict::{cokrige, score, train_test_split, PredictiveDistribution, ScoreReport, NMSE_DEFINITION};
use semicoh::simulate::simulate_grf;

use crate::config::{CoherenceSpec, PredictSpec, RunConfig};
use crate::failure::Failure;

/// Every JSON artifact carries the resolved configuration and seed.
#[derive(Serialize)]
struct Report<'a, T: Serialize> {
    command: &'a str,
    seed: u64,
    config: &'a RunConfig,
    #[serde(flatten)]
    body: T,
}

fn write_json<T: Serialize>(path: &Path, command: &str, cfg: &RunConfig, body: T) -> Result<(), Failure> {
    let report = Report {
        command,
        seed: cfg.seed,
        config: cfg,
        body,
    };
    let text = serde_json::to_string_pretty(&report)?;
    fs::write(path, text + "\n").map_err(|e| Failure::data(format!("{}: {e}", path.display())))
}

fn prepare_out(cfg: &RunConfig) -> Result<PathBuf, Failure> {
    fs::create_dir_all(&cfg.out).map_err(|e| Failure::data(format!("{}: {e}", cfg.out.display())))?;
    Ok(cfg.out.clone())
}

fn read_data(path: &Path) -> Result<SpatialDataset, Failure> {
    SpatialDataset::read_csv(path).map_err(|e| Failure::from(e).context(path.display()))
}

fn write_model(path: &Path, model: &Model) -> Result<(), Failure> {
    let text = serde_json::to_string_pretty(model)?;
    fs::write(path, text + "\n").map_err(|e| Failure::data(format!("{}: {e}", path.display())))
}

#[derive(Serialize)]
struct FitBody<'a> {
    label: String,
    #[serde(flatten)]
    result: &'a FitResult,
}

fn run_fit(cfg: &RunConfig, data: &SpatialDataset) -> Result<FitResult, Failure> {
    let template = cfg.model.template(Some(data.p()))?;
    if template.model.d() != data.d() {
        return Err(Failure::data(format!(
            "data locations have dimension {}, model {}",
            data.d(),
            template.model.d()
        )));
    }
    log::info!("fitting {} to {} locations", template.model.label(), data.n());
    let result = fit(&template, data, &cfg.optimizer)?;
    if !result.converged {
        log::warn!("optimizer stopped after {} evaluations without converging", result.n_evals);
    }
    Ok(result)
}

pub fn cmd_fit(cfg: &RunConfig) -> Result<(), Failure> {
    let data = read_data(cfg.data_path()?)?;
    let out = prepare_out(cfg)?;
    let result = run_fit(cfg, &data)?;
    write_json(
        &out.join("fit.json"),
        "fit",
        cfg,
        FitBody {
            label: result.model.label(),
            result: &result,
        },
    )?;
    write_model(&out.join("model.json"), &result.model)?;
    println!(
        "{}: loglik {:.3}, AIC {:.3}, {} parameters",
        result.model.label(),
        result.loglik,
        result.aic,
        result.n_params
    );
    Ok(())
}

#[derive(Serialize)]
struct SimulateBody {
    label: String,
    n_locations: usize,
    files: Vec<String>,
}

pub fn cmd_simulate(cfg: &RunConfig) -> Result<(), Failure> {
    let spec = cfg
        .simulate
        .clone()
        .ok_or_else(|| Failure::config("simulate: missing \"simulate\" section"))?;
    let model = cfg
        .model
        .explicit()?
        .ok_or_else(|| Failure::config("simulate: the model needs explicit params or a model file"))?;
    let coords = match (&spec.grid, &spec.locations) {
        (Some(g), None) => {
            if model.d() != 2 {
                return Err(Failure::config("simulate: grid locations are two-dimensional"));
            }
            grid_coords(g.nx, g.ny, g.dx, g.dy, g.origin)
        }
        (None, Some(path)) => {
            let ds = read_data(path)?;
            if ds.d() != model.d() {
                return Err(Failure::data("location file dimension differs from the model"));
            }
            ds.coords().to_vec()
        }
        _ => return Err(Failure::config("simulate: give exactly one of grid or locations")),
    };
    if spec.n_reps == 0 {
        return Err(Failure::config("simulate: n_reps must be at least 1"));
    }
    let out = prepare_out(cfg)?;
    let reps = simulate_grf(&model, &coords, spec.n_reps, cfg.seed)?;
    let mut files = Vec::with_capacity(reps.len());
    for (r, ds) in reps.iter().enumerate() {
        let name = format!("sim_{}.csv", r + 1);
        ds.write_csv(out.join(&name))?;
        files.push(name);
    }
    write_json(
        &out.join("simulate.json"),
        "simulate",
        cfg,
        SimulateBody {
            label: model.label(),
            n_locations: coords.len() / model.d(),
            files,
        },
    )?;
    println!("wrote {} realizations to {}", reps.len(), out.display());
    Ok(())
}

#[derive(Serialize)]
struct FitSummary {
    label: String,
    loglik: f64,
    aic: f64,
    n_params: usize,
    converged: bool,
}

impl From<&FitResult> for FitSummary {
    fn from(r: &FitResult) -> Self {
        Self {
            label: r.model.label(),
            loglik: r.loglik,
            aic: r.aic,
            n_params: r.n_params,
            converged: r.converged,
        }
    }
}

#[derive(Serialize)]
struct ScoresBody {
    n_train: usize,
    n_test: usize,
    test_indices: Option<Vec<usize>>,
    units: &'static str,
    fit: Option<FitSummary>,
    model_label: String,
    pooled: ScoreReport,
    per_component: BTreeMap<String, ScoreReport>,
    nmse_definition: &'static str,
}

pub struct PredictOutcome {
    pub pooled: ScoreReport,
}

/// Splits, standardizes, fits, co-kriges and scores; writes nothing.
fn predict_core(
    cfg: &RunConfig,
    spec: &PredictSpec,
) -> Result<(PredictOutcome, Model, SpatialDataset, PredictiveDistribution, ScoresBody), Failure> {
    let data = read_data(cfg.data_path()?)?;
    let (train, test, test_indices) = match (&spec.test, spec.n_test) {
        (Some(path), None) => {
            let test = read_data(path)?;
            if test.p() != data.p() || test.d() != data.d() {
                return Err(Failure::data("test file layout differs from the training data"));
            }
            (data, test, None)
        }
        (None, Some(n_test)) => {
            let (tr, te) = train_test_split(data.n(), n_test, cfg.seed)
                .map_err(|e| Failure::config(format!("predict: {e}")))?;
            (data.subset(&tr), data.subset(&te), Some(te))
        }
        _ => return Err(Failure::config("predict: give exactly one of n_test or test")),
    };
    train.require_complete()?;
    let moments = if spec.standardize {
        train.moments()
    } else {
        vec![(0.0, 1.0); train.p()]
    };
    let train_std = train.standardized(&moments)?;
    let test_std = test.standardized(&moments)?;

    let (model, fitted) = if spec.skip_fit {
        let m = cfg
            .model
            .explicit()?
            .ok_or_else(|| Failure::config("predict: skip_fit needs explicit model params or a model file"))?;
        (m, None)
    } else {
        let r = run_fit(cfg, &train_std)?;
        (r.model.clone(), Some(r))
    };
    let mask = vec![true; train.p()];
    let mut pred = cokrige(&model, &train_std, test_std.coords(), &mask)?;
    let mut actual = pred.actuals(&test_std);
    let units = if spec.original_units && spec.standardize {
        pred = pred.destandardized(&moments);
        actual = pred.actuals(&test);
        "original"
    } else if spec.standardize {
        "standardized"
    } else {
        "original"
    };
    let pooled = score(&pred, &actual)?;
    let mut per_component = BTreeMap::new();
    for (i, name) in train.names().iter().enumerate() {
        let sub = pred.component_subset(i);
        let act: Vec<f64> = (0..pred.len()).filter(|&k| pred.component[k] == i).map(|k| actual[k]).collect();
        if act.iter().any(|v| !v.is_nan()) {
            per_component.insert(name.clone(), score(&sub, &act)?);
        }
    }
    let body = ScoresBody {
        n_train: train.n(),
        n_test: test.n(),
        test_indices,
        units,
        fit: fitted.as_ref().map(FitSummary::from),
        model_label: model.label(),
        pooled: pooled.clone(),
        per_component,
        nmse_definition: NMSE_DEFINITION,
    };
    let report_units = if units == "original" { test.clone() } else { test_std };
    Ok((PredictOutcome { pooled }, model, report_units, pred, body))
}

pub fn cmd_predict(cfg: &RunConfig) -> Result<(), Failure> {
    let spec = cfg.predict.clone().unwrap_or_default();
    let out = prepare_out(cfg)?;
    let (outcome, model, test, pred, body) = predict_core(cfg, &spec)?;
    write_predictions(&out.join("predictions.csv"), &test, &pred)?;
    write_json(&out.join("scores.json"), "predict", cfg, body)?;
    write_model(&out.join("model.json"), &model)?;
    let s = &outcome.pooled;
    println!(
        "RMSPE {:.4}  MAE {:.4}  NMSE {:.4}  mCRPS {:.4}  mLogS {:.4}",
        s.rmspe, s.mae, s.nmse, s.mcrps, s.mlogs
    );
    Ok(())
}

fn write_predictions(path: &Path, test: &SpatialDataset, pred: &PredictiveDistribution) -> Result<(), Failure> {
    let mut w = csv::Writer::from_path(path).map_err(|e| Failure::data(format!("{}: {e}", path.display())))?;
    let csv_err = |e: csv::Error| Failure::data(e.to_string());
    let mut header: Vec<String> = (1..=test.d()).map(|k| format!("x{k}")).collect();
    header.extend(["component", "actual", "mean", "sd"].map(String::from));
    w.write_record(&header).map_err(csv_err)?;
    for k in 0..pred.len() {
        let (q, i) = (pred.location[k], pred.component[k]);
        let mut row: Vec<String> = test.location(q).iter().map(|v| v.to_string()).collect();
        let actual = test.value(q, i);
        row.push(test.names()[i].clone());
        row.push(if actual.is_nan() { String::new() } else { actual.to_string() });
        row.push(pred.mean[k].to_string());
        row.push(pred.sd[k].to_string());
        w.write_record(&row).map_err(csv_err)?;
    }
    w.flush()?;
    Ok(())
}

#[derive(Serialize)]
struct CoherenceBody {
    label: String,
    omega_max: f64,
    n_points: usize,
    /// Spline coefficients per pair, semiparametric models only.
    coefficients: Option<BTreeMap<String, Vec<f64>>>,
}

pub fn cmd_coherence(cfg: &RunConfig) -> Result<(), Failure> {
    let spec: CoherenceSpec = cfg.coherence.clone().unwrap_or_default();
    let model = cfg.model.model(None)?;
    if model.p() < 2 {
        return Err(Failure::config("coherence: the model has a single component"));
    }
    let omega_max = match (spec.omega_max, &model) {
        (Some(w), _) => w,
        (None, Model::Semiparametric(m)) => m.grid.omega_t(),
        (None, _) => cfg.model.grid.omega_t,
    };
    if !(omega_max > 0.0) || spec.n_points < 2 {
        return Err(Failure::config("coherence: need omega_max > 0 and at least 2 points"));
    }
    let out = prepare_out(cfg)?;
    let pairs = model.pairs();
    let path = out.join("coherence.csv");
    let mut w = csv::Writer::from_path(&path).map_err(|e| Failure::data(format!("{}: {e}", path.display())))?;
    let csv_err = |e: csv::Error| Failure::data(e.to_string());
    let mut header = vec!["omega".to_string()];
    header.extend(pairs.iter().map(|(i, j)| format!("gamma_{}{}", i + 1, j + 1)));
    w.write_record(&header).map_err(csv_err)?;
    for k in 0..spec.n_points {
        let omega = omega_max * k as f64 / (spec.n_points - 1) as f64;
        let mut row = vec![omega.to_string()];
        for &(i, j) in &pairs {
            row.push(model.coherence(i, j, omega)?.to_string());
        }
        w.write_record(&row).map_err(csv_err)?;
    }
    w.flush()?;
    let coefficients = match &model {
        Model::Semiparametric(m) => Some(
            m.coherence
                .pairs
                .iter()
                .map(|pc| (format!("b{}{}", pc.i + 1, pc.j + 1), pc.b.clone()))
                .collect(),
        ),
        _ => None,
    };
    write_json(
        &out.join("coherence.json"),
        "coherence",
        cfg,
        CoherenceBody {
            label: model.label(),
            omega_max,
            n_points: spec.n_points,
            coefficients,
        },
    )?;
    println!("wrote {}", path.display());
    Ok(())
}

#[derive(Serialize)]
struct CompareRow {
    name: String,
    kind: String,
    n_params: usize,
    loglik: f64,
    aic: f64,
    converged: bool,
    runtime_s: f64,
    scores: Option<ScoreReport>,
}

#[derive(Serialize)]
struct CompareBody<'a> {
    candidates: &'a [RunConfig],
    rows: Vec<CompareRow>,
}

/// Fits every candidate to its data, scores it when the candidate has a
/// `predict` section, and ranks by AIC.
pub fn cmd_compare(base: &RunConfig, candidates: &[RunConfig]) -> Result<(), Failure> {
    if candidates.is_empty() {
        return Err(Failure::config("compare: no candidate configurations"));
    }
    let out = prepare_out(base)?;
    let mut rows = Vec::with_capacity(candidates.len());
    for (c, cfg) in candidates.iter().enumerate() {
        let data = read_data(cfg.data_path()?)?;
        let result = run_fit(cfg, &data).map_err(|e| e.context(format!("candidate {}", c + 1)))?;
        let scores = match &cfg.predict {
            Some(spec) => Some(predict_core(cfg, spec)?.0.pooled),
            None => None,
        };
        rows.push(CompareRow {
            name: result.model.label(),
            kind: result.model.kind().to_string(),
            n_params: result.n_params,
            loglik: result.loglik,
            aic: result.aic,
            converged: result.converged,
            runtime_s: result.runtime_s,
            scores,
        });
    }
    rows.sort_by(|a, b| a.aic.total_cmp(&b.aic));
    println!("{:<36} {:>8} {:>12} {:>12}", "model", "params", "loglik", "AIC");
    for r in &rows {
        println!("{:<36} {:>8} {:>12.3} {:>12.3}", r.name, r.n_params, r.loglik, r.aic);
    }
    write_json(
        &out.join("compare.json"),
        "compare",
        base,
        CompareBody { candidates, rows },
    )
}
