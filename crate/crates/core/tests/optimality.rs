//! On a fine grid the optimum satisfies the first-order condition of
//! E(u) = (n/u)·(e·T + P_avg·R(u) + P_idle·(S − R(u))) with R'(u) = T·X(u), which gives
//! E(u_opt)/E(1) = (P_avg − P_idle)·X / (e + P_avg·m) where m is the mean intensity.

use chrono::{Duration, TimeZone, Utc};
use flexcompute::cluster::{average_power, Registry};
use flexcompute::dispatch::{optimise, ObjectiveKind};
use flexcompute::energy_data::{Interval, IntervalSeries, Metric};

/// Intensities on a fine deterministic grid in [100, 900], shuffled in time.
fn fine_series(n: usize) -> IntervalSeries {
    let t0 = Utc.with_ymd_and_hms(2024, 1, 1, 0, 0, 0).unwrap();
    IntervalSeries::new(
        (0..n)
            .map(|i| {
                // 7919 is prime and coprime to n, so this permutes the grid
                let j = (i * 7919) % n;
                Interval {
                    start: t0 + Duration::minutes(15 * i as i64),
                    duration_h: 0.25,
                    intensity: 100.0 + 800.0 * (j as f64 + 0.5) / n as f64,
                    price: 0.0,
                }
            })
            .collect(),
    )
    .unwrap()
}

#[test]
fn relative_emission_matches_first_order_condition() {
    let series = fine_series(20_000);
    let m = series.time_weighted_mean(Metric::Intensity);
    let reg = Registry::builtin();
    let mut interior = 0;
    for setup in reg.setups() {
        for workload in reg.workloads() {
            let r = optimise(&series, setup, workload, ObjectiveKind::Emission, None).unwrap();
            let Some(x) = r.threshold else { continue };
            interior += 1;
            let p_avg = average_power(setup, workload).unwrap() * 1e-6;
            let p_idle = setup.p_idle_w * 1e-6;
            let predicted = (p_avg - p_idle) * x / (setup.embedded_kg_per_core_hour + p_avg * m);
            assert!(
                (predicted - r.relative_objective).abs() < 1e-4,
                "{}/{}: {predicted} vs {}",
                setup.name,
                workload.name,
                r.relative_objective
            );
        }
    }
    assert!(interior >= 3, "only {interior} interior optima");
}
