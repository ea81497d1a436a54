use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use semicoh::bspline::KnotConfig;
use semicoh::covariance::Synthesizer;
use semicoh::data::SpatialDataset;
use semicoh::inference::loglik_with;
use semicoh::model::{Model, SemiparamModel};
use semicoh::par;
use semicoh::spectral::{FrequencyGrid, MarginalParams, SplineCoherenceSpec};

fn setup(n: usize) -> (Synthesizer, Model, SpatialDataset) {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let coords: Vec<f64> = (0..2 * n).map(|_| rng.random_range(0.0..30.0)).collect();
    let obs: Vec<f64> = (0..2 * n).map(|_| rng.random_range(-2.0..2.0)).collect();
    let knots = KnotConfig::from_delta(1.0, 4.5).unwrap();
    let model = Model::Semiparametric(SemiparamModel {
        d: 2,
        marginals: vec![
            MarginalParams::new(1.0, 1.0, 1.0).with_nugget(0.1),
            MarginalParams::new(1.5, 2.0, 0.7).with_nugget(0.1),
        ],
        coherence: SplineCoherenceSpec::constant(knots, 2, 0.5),
        grid: FrequencyGrid::new(4.5, 380).unwrap(),
    });
    let data = SpatialDataset::new(2, coords.clone(), obs, SpatialDataset::default_names(2)).unwrap();
    (Synthesizer::new(&coords, 2).unwrap(), model, data)
}

fn bench(c: &mut Criterion) {
    let mut group = c.benchmark_group("parallel_vs_sequential");
    group.sample_size(10);
    for n in [100, 300] {
        let (syn, model, data) = setup(n);
        for (label, on) in [("sequential", false), ("parallel", true)] {
            par::set_parallel(on);
            group.bench_with_input(BenchmarkId::new(format!("sigma/{label}"), n), &n, |b, _| {
                b.iter(|| syn.sigma(&model).unwrap())
            });
            group.bench_with_input(BenchmarkId::new(format!("loglik/{label}"), n), &n, |b, _| {
                b.iter(|| loglik_with(&syn, &model, &data).unwrap())
            });
        }
    }
    par::set_parallel(true);
    group.finish();
}

criterion_group!(benches, bench);
criterion_main!(benches);
