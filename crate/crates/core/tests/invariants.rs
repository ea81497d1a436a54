use proptest::prelude::*;

use semicoh::bspline::KnotConfig;
use semicoh::covariance::assemble_sigma;
use semicoh::data::SpatialDataset;
use semicoh::inference::{ModelTemplate, Parameterization};
use semicoh::linalg::min_eigenvalue;
use semicoh::model::{Model, SemiparamModel};
use semicoh::predict::{crps_gaussian, logs_gaussian, score, PredictiveDistribution};
use semicoh::spectral::{FrequencyGrid, MarginalParams, SplineCoherenceSpec};

fn semiparam(p: usize) -> Model {
    let knots = KnotConfig::from_delta(1.0, 4.5).unwrap();
    let m = MarginalParams::new(1.0, 1.0, 1.0);
    Model::Semiparametric(SemiparamModel {
        d: 2,
        marginals: vec![m; p],
        coherence: SplineCoherenceSpec::constant(knots, p, 0.0),
        grid: FrequencyGrid::new(4.5, 380).unwrap(),
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn decode_encode_round_trip(p in 2usize..=3, seed in prop::collection::vec(-2.5f64..2.5, 64)) {
        let par = Parameterization::from_template(&ModelTemplate::new(semiparam(p)).with_nugget(true)).unwrap();
        let x: Vec<f64> = seed[..par.n_free()].to_vec();
        let model = par.decode(&x).unwrap();
        let back = par.encode_model(&model);
        for (a, b) in x.iter().zip(&back) {
            prop_assert!((a - b).abs() < 1e-8, "{a} vs {b}");
        }
    }

    #[test]
    fn decoded_models_are_positive_definite(
        p in 2usize..=3,
        x in prop::collection::vec(-3.0f64..3.0, 64),
        coords in prop::collection::vec(0.0f64..8.0, 24),
    ) {
        let par = Parameterization::from_template(&ModelTemplate::new(semiparam(p))).unwrap();
        let model = par.decode(&x[..par.n_free()]).unwrap();
        let sigma = assemble_sigma(&model, &coords).unwrap();
        let n = sigma.nrows();
        let mean_diag = (0..n).map(|k| sigma[(k, k)]).sum::<f64>() / n as f64;
        prop_assert!(min_eigenvalue(&sigma).unwrap() >= -1e-8 * mean_diag);
    }

    #[test]
    fn scores_shift_and_scale(
        mu in -5.0f64..5.0, sd in 0.1f64..3.0, y in -5.0f64..5.0,
        shift in -10.0f64..10.0, scale in 0.2f64..5.0,
    ) {
        let base = crps_gaussian(mu, sd, y);
        let moved = crps_gaussian(scale * mu + shift, scale * sd, scale * y + shift);
        prop_assert!((moved - scale * base).abs() < 1e-9 * (1.0 + base * scale));
        let dl = logs_gaussian(scale * mu + shift, scale * sd, scale * y + shift) - logs_gaussian(mu, sd, y);
        prop_assert!((dl - scale.ln()).abs() < 1e-9);

        let pred = PredictiveDistribution {
            location: vec![0],
            component: vec![0],
            mean: vec![mu],
            sd: vec![sd],
        };
        let r = score(&pred, &[y]).unwrap();
        prop_assert!((r.mcrps - base).abs() < 1e-12);
        prop_assert!((r.rmspe - (y - mu).abs()).abs() < 1e-12);
    }

    #[test]
    fn csv_round_trip(
        n in 1usize..20,
        vals in prop::collection::vec(-1e6f64..1e6, 80),
    ) {
        let coords = vals[..2 * n].to_vec();
        let obs = vals[40..40 + 2 * n].to_vec();
        let ds = SpatialDataset::new(2, coords, obs, SpatialDataset::default_names(2)).unwrap();
        let mut buf = Vec::new();
        ds.to_writer(&mut buf).unwrap();
        let back = SpatialDataset::from_reader(buf.as_slice()).unwrap();
        prop_assert_eq!(back.coords(), ds.coords());
        prop_assert_eq!(back.stacked(), ds.stacked());
    }
}
