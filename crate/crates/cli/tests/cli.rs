use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::{json, Value};

use semicoh::data::{grid_coords, SpatialDataset};
use semicoh::model::{BivariateMaternModel, Model};
use semicoh::simulate::simulate_grf;
use semicoh::spectral::{coherence_bimatern, BivariateMaternParams, MarginalParams};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_semicoh"))
}

fn configs() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("configs")
}

fn run(args: &[&str]) -> Output {
    let out = bin().args(args).output().expect("binary runs");
    if !out.status.success() {
        eprintln!("{}", String::from_utf8_lossy(&out.stderr));
    }
    out
}

fn read_json(path: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap()
}

fn write_json(path: &Path, v: &Value) {
    fs::write(path, serde_json::to_string_pretty(v).unwrap()).unwrap();
}

fn model2() -> Model {
    let m = MarginalParams::new(1.0, 3.0, 1.0);
    Model::BivariateMatern(BivariateMaternModel {
        d: 2,
        params: BivariateMaternParams {
            m1: m,
            m2: m,
            a12: 1.0,
            nu12: 4.0,
            rho12: 0.4,
        },
    })
}

fn small_data(dir: &Path, nx: usize, seed: u64) -> PathBuf {
    let coords = grid_coords(nx, nx, 1.0, 1.0, [1.0, 1.0]);
    let ds = simulate_grf(&model2(), &coords, 1, seed).unwrap().remove(0);
    let path = dir.join(format!("data_{nx}_{seed}.csv"));
    ds.write_csv(&path).unwrap();
    path
}

#[test]
fn simulate_writes_fifty_grids_reproducibly() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = configs().join("sim1_simulate.json");
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    for out in [&a, &b] {
        let o = run(&["simulate", "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()]);
        assert!(o.status.success());
    }
    for r in 1..=50 {
        let name = format!("sim_{r}.csv");
        let bytes = fs::read(a.join(&name)).unwrap();
        assert_eq!(bytes, fs::read(b.join(&name)).unwrap(), "{name} differs");
        if r == 1 {
            let ds = SpatialDataset::from_reader(bytes.as_slice()).unwrap();
            assert_eq!((ds.n(), ds.d(), ds.p()), (900, 2, 2));
            let text = String::from_utf8(bytes).unwrap();
            assert_eq!(text.lines().count(), 901);
            assert_eq!(text.lines().next().unwrap().split(',').count(), 4);
        }
    }
    assert!(!a.join("sim_51.csv").exists());
    let manifest = read_json(&a.join("simulate.json"));
    assert_eq!(manifest["seed"], 1);
    assert_eq!(manifest["config"]["simulate"]["n_reps"], 50);

    let c = tmp.path().join("c");
    run(&["simulate", "--config", cfg.to_str().unwrap(), "--out", c.to_str().unwrap(), "--seed", "2"]);
    assert_ne!(fs::read(a.join("sim_1.csv")).unwrap(), fs::read(c.join("sim_1.csv")).unwrap());
}

fn fit_with(tmp: &Path, cfg: &str, data: &Path, extra: &[&str]) -> Value {
    let out = tmp.join(format!("fit_{}", cfg.replace(".json", "")));
    let mut cfg_v = read_json(&configs().join(cfg));
    cfg_v["optimizer"] = json!({ "restarts": 0, "max_evals": 40 });
    let local = tmp.join(cfg);
    write_json(&local, &cfg_v);
    let mut args = vec![
        "fit",
        "--config",
        local.to_str().unwrap(),
        "--data",
        data.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
    ];
    args.extend_from_slice(extra);
    let o = run(&args);
    assert!(o.status.success());
    let fit = read_json(&out.join("fit.json"));
    let model: Model = serde_json::from_str(&fs::read_to_string(out.join("model.json")).unwrap()).unwrap();
    model.validate().unwrap();
    fit
}

#[test]
fn fit_reports_parameter_counts_and_echoes_config() {
    let tmp = tempfile::tempdir().unwrap();
    let data = small_data(tmp.path(), 5, 3);
    let sim1 = fit_with(tmp.path(), "sim1_fit.json", &data, &[]);
    assert_eq!(sim1["n_params"], 12);
    assert_eq!(sim1["seed"], 1);
    assert_eq!(sim1["config"]["model"]["fixed"]["nu"], 3.0);
    for key in ["estimates", "loglik", "aic", "converged", "n_evals"] {
        assert!(sim1.get(key).is_some(), "{key} missing");
    }
    let (ll, aic) = (sim1["loglik"].as_f64().unwrap(), sim1["aic"].as_f64().unwrap());
    assert!((aic - (24.0 - 2.0 * ll)).abs() < 1e-9);

    let sim2 = fit_with(tmp.path(), "sim2_fit.json", &data, &["--seed", "5"]);
    assert_eq!(sim2["n_params"], 14);
    assert_eq!(sim2["seed"], 5);
}

#[test]
fn fully_fixed_fit_evaluates_once() {
    let tmp = tempfile::tempdir().unwrap();
    let data = small_data(tmp.path(), 4, 1);
    let out = tmp.path().join("o");
    let o = run(&[
        "fit",
        "--model",
        "independent",
        "--data",
        data.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
        "--fix",
        "sigma2=1",
        "--fix",
        "a=1",
        "--fix",
        "nu=1.5",
    ]);
    assert!(o.status.success());
    let fit = read_json(&out.join("fit.json"));
    assert_eq!(fit["n_evals"], 1);
    assert_eq!(fit["n_params"], 0);
    assert_eq!(fit["estimates"]["nu_2"], 1.5);
}

#[test]
fn predict_splits_and_scores() {
    let tmp = tempfile::tempdir().unwrap();
    // 481 scattered locations
    let coords: Vec<f64> = (0..481)
        .flat_map(|q| {
            let t = q as f64;
            [(t * 0.618_034).fract() * 30.0, (t * 0.414_214).fract() * 30.0]
        })
        .collect();
    let ds = simulate_grf(&model2(), &coords, 1, 9).unwrap().remove(0);
    let data = tmp.path().join("data.csv");
    ds.write_csv(&data).unwrap();
    let cfg = tmp.path().join("predict.json");
    write_json(
        &cfg,
        &json!({
            "seed": 4,
            "data": data,
            "model": { "params": serde_json::to_value(model2()).unwrap() },
            "predict": { "n_test": 100, "skip_fit": true, "standardize": false }
        }),
    );
    let mut test_sets = Vec::new();
    for name in ["p1", "p2"] {
        let out = tmp.path().join(name);
        let o = run(&["predict", "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()]);
        assert!(o.status.success());
        let scores = read_json(&out.join("scores.json"));
        assert_eq!(scores["n_train"], 381);
        assert_eq!(scores["n_test"], 100);
        for m in ["rmspe", "mae", "nmse", "mcrps", "mlogs"] {
            assert!(scores["pooled"][m].is_number(), "{m}");
            assert!(scores["per_component"]["X1"][m].is_number());
        }
        assert!(scores["nmse_definition"].is_string());
        let rows = fs::read_to_string(out.join("predictions.csv")).unwrap();
        assert_eq!(rows.lines().count(), 201);
        test_sets.push(scores["test_indices"].clone());
    }
    assert_eq!(test_sets[0], test_sets[1]);
}

#[test]
fn predict_with_fit_on_standardized_data() {
    let tmp = tempfile::tempdir().unwrap();
    let data = small_data(tmp.path(), 6, 2);
    let out = tmp.path().join("o");
    let cfg = tmp.path().join("c.json");
    write_json(
        &cfg,
        &json!({
            "model": { "kind": "independent", "nugget": true },
            "optimizer": { "restarts": 0, "max_evals": 60 },
            "predict": { "n_test": 6, "original_units": true }
        }),
    );
    let o = run(&[
        "predict",
        "--config",
        cfg.to_str().unwrap(),
        "--data",
        data.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
    ]);
    assert!(o.status.success());
    let scores = read_json(&out.join("scores.json"));
    assert_eq!(scores["units"], "original");
    assert_eq!(scores["fit"]["n_params"], 8);
    assert!(out.join("model.json").exists());
}

#[test]
fn coherence_curves() {
    let tmp = tempfile::tempdir().unwrap();
    let model_file = tmp.path().join("model.json");
    write_json(&model_file, &serde_json::to_value(model2()).unwrap());
    let out = tmp.path().join("bm");
    let o = run(&[
        "coherence",
        "--model-file",
        model_file.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
    ]);
    assert!(o.status.success());
    let text = fs::read_to_string(out.join("coherence.csv")).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next().unwrap(), "omega,gamma_12");
    let params = match model2() {
        Model::BivariateMatern(m) => m.params,
        _ => unreachable!(),
    };
    let mut n = 0;
    for line in lines {
        let (w, g) = line.split_once(',').unwrap();
        let (w, g): (f64, f64) = (w.parse().unwrap(), g.parse().unwrap());
        assert!((g - coherence_bimatern(&params, w, 2).unwrap()).abs() < 1e-12);
        n += 1;
    }
    assert_eq!(n, 201);

    // default semiparametric model at constant zero coherence
    let out = tmp.path().join("const");
    let o = run(&[
        "coherence",
        "--omega-t",
        "9.0",
        "--m",
        "299",
        "--delta-knot",
        "2",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert!(o.status.success());
    let text = fs::read_to_string(out.join("coherence.csv")).unwrap();
    assert!(text.lines().skip(1).all(|l| l.ends_with(",0")));
    let report = read_json(&out.join("coherence.json"));
    assert_eq!(report["coefficients"]["b12"].as_array().unwrap().len(), 8);
}

#[test]
fn compare_ranks_by_aic() {
    let tmp = tempfile::tempdir().unwrap();
    let data = small_data(tmp.path(), 5, 8);
    let mut paths = Vec::new();
    for (name, kind) in [("a", "independent"), ("b", "independent"), ("c", "bimatern")] {
        let p = tmp.path().join(format!("{name}.json"));
        write_json(
            &p,
            &json!({
                "data": data,
                "model": { "kind": kind },
                "optimizer": { "restarts": 0, "max_evals": 80 }
            }),
        );
        paths.push(p);
    }
    let out = tmp.path().join("cmp");
    let mut args = vec!["compare", "--out", out.to_str().unwrap()];
    args.extend(paths.iter().map(|p| p.to_str().unwrap()));
    let o = run(&args);
    assert!(o.status.success());
    let report = read_json(&out.join("compare.json"));
    let rows = report["rows"].as_array().unwrap();
    assert_eq!(rows.len(), 3);
    let aic: Vec<f64> = rows.iter().map(|r| r["aic"].as_f64().unwrap()).collect();
    assert!(aic.windows(2).all(|w| w[0] <= w[1]));
    let indep: Vec<&Value> = rows.iter().filter(|r| r["kind"] == "independent").collect();
    assert_eq!(indep[0]["loglik"], indep[1]["loglik"]);
    assert_eq!(indep[0]["n_params"], 6);
    assert_eq!(report["candidates"].as_array().unwrap().len(), 3);
}

#[test]
fn exit_codes() {
    let tmp = tempfile::tempdir().unwrap();
    let bad = tmp.path().join("bad.json");
    fs::write(&bad, "{\n  \"sed\": 3\n}").unwrap();
    let o = run(&["fit", "--config", bad.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("line 2"));

    let o = run(&["fit", "--data", tmp.path().join("missing.csv").to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(3));

    let junk = tmp.path().join("junk.csv");
    fs::write(&junk, "x1,x2,v\n1,abc,3\n").unwrap();
    let o = run(&["fit", "--data", junk.to_str().unwrap(), "--out", tmp.path().to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(3));

    let o = run(&["fit", "--m", "notanumber"]);
    assert_eq!(o.status.code(), Some(2));

    let data = small_data(tmp.path(), 3, 1);
    let o = run(&[
        "fit",
        "--data",
        data.to_str().unwrap(),
        "--omega-t",
        "4.5",
        "--delta-knot",
        "-1",
        "--out",
        tmp.path().to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(2));
}
