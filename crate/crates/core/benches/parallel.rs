use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use fdfm::eval::{rolling_forecast_eval, RollingSpec};
use fdfm::fdfm::{CurvePanel, FdfmConfig};
use fdfm::models::{DnsFactory, FdfmFactory, ModelFactory};
use fdfm::par;
use fdfm::sim::{self, SimSpec};

fn panel(n: usize, m: usize) -> CurvePanel {
    let spec = SimSpec::standard(3, n, m, &[0.9, 0.7, 0.5], 0.1);
    sim::simulate(&spec, &mut ChaCha8Rng::seed_from_u64(11)).unwrap().panel
}

fn rolling(c: &mut Criterion) {
    let data = panel(96, 12);
    let spec = RollingSpec { window: 72, horizons: vec![1, 6], min_maturity: None };
    let dns = DnsFactory::default();
    let fdfm = FdfmFactory { config: FdfmConfig::default().with_factors(3).with_fixed_lambdas(vec![1.0; 3]) };
    let factories: [(&str, &dyn ModelFactory); 2] = [("dns", &dns), ("fdfm", &fdfm)];

    let mut group = c.benchmark_group("rolling_eval");
    group.sample_size(10);
    for (name, factory) in factories {
        group.bench_with_input(BenchmarkId::new("pooled", name), &factory, |b, f| {
            b.iter(|| rolling_forecast_eval(&data, *f, &spec).unwrap())
        });
        group.bench_with_input(BenchmarkId::new("sequential", name), &factory, |b, f| {
            b.iter(|| par::sequential(|| rolling_forecast_eval(&data, *f, &spec).unwrap()))
        });
    }
    group.finish();
}

criterion_group!(benches, rolling);
criterion_main!(benches);
