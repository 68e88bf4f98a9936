use std::hint::black_box;

use chrono::{Duration, TimeZone, Utc};
use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use flexcompute::cluster::Registry;
use flexcompute::dispatch::{optimise_model, ObjectiveModel};
use flexcompute::energy_data::{Interval, IntervalSeries};
use flexcompute::sensitivity::{sweep_with, SweepParam, SweepSpec};
use flexcompute::{Execution, ObjectiveKind};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// A leap year of quarter-hour intervals with a daily solar dip and noise.
fn synthetic_year() -> IntervalSeries {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let t0 = Utc.with_ymd_and_hms(2024, 1, 1, 0, 0, 0).unwrap();
    let intervals = (0..366 * 96)
        .map(|i| {
            let hour = (i % 96) as f64 / 4.0;
            let dip = (-((hour - 13.0) / 3.0).powi(2)).exp();
            let intensity = 550.0 - 250.0 * dip + rng.random_range(-60.0..60.0);
            Interval {
                start: t0 + Duration::minutes(15 * i as i64),
                duration_h: 0.25,
                intensity,
                price: intensity / 5.0 + rng.random_range(-20.0..20.0),
            }
        })
        .collect();
    IntervalSeries::new(intervals).unwrap()
}

fn modes() -> Vec<(&'static str, Execution)> {
    let mut m = vec![("sequential", Execution::Sequential)];
    if cfg!(feature = "parallel") {
        m.push(("parallel", Execution::Parallel));
    }
    m
}

fn bench_optimise(c: &mut Criterion) {
    let series = synthetic_year();
    let reg = Registry::builtin();
    let model = ObjectiveModel::emission(reg.setup("baf_modern").unwrap(), reg.workload("backfilling").unwrap()).unwrap();
    let mut group = c.benchmark_group("optimise_year");
    for (name, exec) in modes() {
        group.bench_function(BenchmarkId::from_parameter(name), |b| {
            b.iter(|| optimise_model(black_box(&series), &model, exec).unwrap())
        });
    }
    group.finish();
}

fn bench_sweep(c: &mut Criterion) {
    let series = synthetic_year();
    let reg = Registry::builtin();
    let spec = SweepSpec {
        parameter: SweepParam::IdleRatio,
        values: (0..=50).map(|i| i as f64 / 50.0).collect(),
        setup: reg.setup("baf_modern").unwrap().clone(),
        workload: reg.workload("backfilling").unwrap().clone(),
        objective: ObjectiveKind::Emission,
        tariff: None,
    };
    let mut group = c.benchmark_group("idle_ratio_sweep_51");
    group.sample_size(10);
    for (name, exec) in modes() {
        group.bench_function(BenchmarkId::from_parameter(name), |b| {
            b.iter(|| sweep_with(&spec, black_box(&series), exec).unwrap())
        });
    }
    group.finish();
}

criterion_group!(benches, bench_optimise, bench_sweep);
criterion_main!(benches);
