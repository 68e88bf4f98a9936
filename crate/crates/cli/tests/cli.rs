use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;
use tempfile::TempDir;

fn bin() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_flexcompute"));
    c.arg("--quiet");
    c
}

fn run(args: &[&str], out: &Path) -> Output {
    bin().args(args).arg("--out").arg(out).output().unwrap()
}

fn ok(o: &Output) {
    assert!(
        o.status.success(),
        "status {:?}\nstderr: {}",
        o.status,
        String::from_utf8_lossy(&o.stderr)
    );
}

/// `days` of quarter-hour generation starting at `start_day` (YYYY-MM-DD),
/// coal constant and solar around midday, plus matching hourly prices.
fn write_raw(dir: &Path, tag: &str, start_day: &str, days: usize, solar_peak: f64) -> (PathBuf, PathBuf) {
    let mut gen = String::from("Date (UTC),Fossil brown coal / lignite (MWh),Solar (MWh),Wind onshore (MWh)\n");
    let mut prices = String::from("Date (UTC),Day Ahead Auction price (EUR/MWh)\n");
    for d in 0..days {
        for q in 0..96 {
            let hour = q as f64 / 4.0;
            let solar = if (6.0..18.0).contains(&hour) {
                (solar_peak * (1.0 - ((hour - 12.0) / 6.0).abs())).round()
            } else {
                0.0
            };
            let wind = 20.0 + ((d * 96 + q) % 7) as f64;
            let day = shift_day(start_day, d);
            gen.push_str(&format!("{day}T{:02}:{:02}:00Z,100,{solar},{wind}\n", q / 4, 15 * (q % 4)));
            if q % 4 == 0 {
                let price = 120.0 - solar / 3.0;
                prices.push_str(&format!("{day}T{:02}:00:00Z,{price}\n", q / 4));
            }
        }
    }
    let g = dir.join(format!("gen_{tag}.csv"));
    let p = dir.join(format!("prices_{tag}.csv"));
    fs::write(&g, gen).unwrap();
    fs::write(&p, prices).unwrap();
    (g, p)
}

/// Day-of-month offset within a test month; tests stay inside one month.
fn shift_day(day: &str, offset: usize) -> String {
    let (prefix, dd) = day.split_at(8);
    format!("{prefix}{:02}", dd.parse::<usize>().unwrap() + offset)
}

const FACTORS: &str = "source,kg_per_mwh\nfossil_brown_coal_lignite,1100\nsolar,40\nwind_onshore,10\n";

struct Fixture {
    tmp: TempDir,
    intervals: PathBuf,
}

fn fixture() -> Fixture {
    let tmp = TempDir::new().unwrap();
    let raw = tmp.path().join("raw");
    fs::create_dir_all(&raw).unwrap();
    let (g, p) = write_raw(&raw, "2024", "2024-06-10", 3, 300.0);
    let f = raw.join("factors.csv");
    fs::write(&f, FACTORS).unwrap();
    let data = tmp.path().join("data");
    ok(&run(
        &[
            "ingest",
            "--generation",
            g.to_str().unwrap(),
            "--prices",
            p.to_str().unwrap(),
            "--factors",
            f.to_str().unwrap(),
        ],
        &data,
    ));
    let intervals = data.join("intervals.csv");
    Fixture { tmp, intervals }
}

fn read_json(p: &Path) -> Value {
    serde_json::from_slice(&fs::read(p).unwrap()).unwrap()
}

#[test]
fn ingest_writes_interval_file_and_provenance() {
    let fx = fixture();
    let text = fs::read_to_string(&fx.intervals).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next().unwrap(), "start_utc,duration_h,intensity_kg_per_mwh,price_eur_per_mwh");
    assert_eq!(lines.count(), 3 * 96);
    let prov = read_json(&fx.intervals.with_file_name("intervals.csv.provenance.json"));
    assert_eq!(prov["inputs"].as_array().unwrap().len(), 3);
    assert_eq!(prov["inputs"][0]["sha256"].as_str().unwrap().len(), 64);
}

#[test]
fn optimize_outputs_are_consistent_and_deterministic() {
    let fx = fixture();
    let out = fx.tmp.path().join("opt");
    let args = [
        "optimize",
        "--data",
        fx.intervals.to_str().unwrap(),
        "--setup",
        "baf_modern",
        "--workload",
        "backfilling",
    ];
    ok(&run(&args, &out));
    let first = fs::read(out.join("result.json")).unwrap();
    ok(&run(&args, &out));
    assert_eq!(first, fs::read(out.join("result.json")).unwrap());

    let doc = read_json(&out.join("result.json"));
    let u = doc["u_opt"].as_f64().unwrap();
    assert!(u < 1.0, "midday solar should make pausing worthwhile");
    assert!(doc["threshold"].is_f64());

    // the marked curve row carries the reported optimum
    let curve = fs::read_to_string(out.join("curve.csv")).unwrap();
    let rows: Vec<Vec<f64>> = curve
        .lines()
        .skip(1)
        .map(|l| l.split(',').map(|c| c.parse().unwrap()).collect())
        .collect();
    assert_eq!(rows.len(), 3 * 96);
    let best = rows.iter().find(|r| r[7] == 1.0).unwrap();
    assert_eq!(best[0], u);
    assert_eq!(best[1], doc["threshold"].as_f64().unwrap());
    let last = rows.last().unwrap();
    assert_eq!(last[0], 1.0);
    assert_eq!(best[5] / last[5], doc["relative_objective"].as_f64().unwrap());

    // schedule runs exactly the intervals at or below the threshold
    let x = doc["threshold"].as_f64().unwrap();
    let intervals = fs::read_to_string(&fx.intervals).unwrap();
    let schedule = fs::read_to_string(out.join("schedule.csv")).unwrap();
    for (iv, s) in intervals.lines().skip(1).zip(schedule.lines().skip(1)) {
        let intensity: f64 = iv.split(',').nth(2).unwrap().parse().unwrap();
        assert_eq!(s.ends_with(",1"), intensity <= x, "{iv} / {s}");
    }
}

#[test]
fn missing_factor_file_fails_without_outputs() {
    let fx = fixture();
    let raw = fx.tmp.path().join("raw");
    let out = fx.tmp.path().join("failed");
    let o = run(
        &[
            "ingest",
            "--generation",
            raw.join("gen_2024.csv").to_str().unwrap(),
            "--prices",
            raw.join("prices_2024.csv").to_str().unwrap(),
            "--factors",
            raw.join("nope.csv").to_str().unwrap(),
        ],
        &out,
    );
    assert_eq!(o.status.code(), Some(2));
    let stderr = String::from_utf8_lossy(&o.stderr);
    assert!(stderr.starts_with("error[energy_data]:"), "{stderr}");
    assert!(!out.exists());
}

#[test]
fn long_gap_is_a_data_quality_failure() {
    let tmp = TempDir::new().unwrap();
    let (g, p) = write_raw(tmp.path(), "gap", "2024-06-10", 1, 300.0);
    let text = fs::read_to_string(&g).unwrap();
    // drop 02:00-03:59, a two-hour hole
    let kept: String = text
        .lines()
        .filter(|l| !l.contains("T02:") && !l.contains("T03:"))
        .map(|l| format!("{l}\n"))
        .collect();
    fs::write(&g, kept).unwrap();
    let f = tmp.path().join("factors.csv");
    fs::write(&f, FACTORS).unwrap();
    let out = tmp.path().join("out");
    let o = run(
        &["ingest", "--generation", g.to_str().unwrap(), "--prices", p.to_str().unwrap(), "--factors", f.to_str().unwrap()],
        &out,
    );
    assert_eq!(o.status.code(), Some(3), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(!out.exists());
}

#[test]
fn unknown_setup_is_an_input_error() {
    let fx = fixture();
    let out = fx.tmp.path().join("x");
    let o = run(
        &["optimize", "--data", fx.intervals.to_str().unwrap(), "--setup", "nope", "--workload", "medium"],
        &out,
    );
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("error[cluster_model]"));
}

#[test]
fn cost_on_setup_without_acquisition_cost_fails() {
    let fx = fixture();
    let out = fx.tmp.path().join("x");
    let o = run(
        &[
            "optimize",
            "--data",
            fx.intervals.to_str().unwrap(),
            "--setup",
            "deep_dam",
            "--workload",
            "medium",
            "--objective",
            "cost",
        ],
        &out,
    );
    assert_eq!(o.status.code(), Some(2));
    assert!(!out.exists());
}

#[test]
fn study_then_report() {
    let fx = fixture();
    let study = fx.tmp.path().join("study");
    ok(&run(&["study", "--data", fx.intervals.to_str().unwrap()], &study));
    let table = fs::read_to_string(study.join("table_emission.csv")).unwrap();
    assert_eq!(table.lines().count(), 16);
    assert_eq!(table.lines().next().unwrap(), "setup,workload,objective,u_opt,X,relative");
    for line in table.lines().skip(1) {
        let cells: Vec<&str> = line.split(',').collect();
        // empty threshold exactly for constant operation
        assert_eq!(cells[3] == "1.000", cells[4].is_empty(), "{line}");
    }

    ok(&run(
        &["study", "--data", fx.intervals.to_str().unwrap(), "--objective", "cost"],
        &study.join("cost"),
    ));
    let cost = fs::read_to_string(study.join("cost/table_cost.csv")).unwrap();
    assert_eq!(cost.lines().count(), 7);

    let report = fx.tmp.path().join("report");
    ok(&run(&["report", "--from", study.to_str().unwrap()], &report));
    assert_eq!(fs::read_to_string(report.join("table_emission.csv")).unwrap().lines().count(), 16);
    assert_eq!(fs::read_to_string(report.join("table_cost.csv")).unwrap().lines().count(), 7);
    assert!(report.join("report.provenance.json").exists());
}

#[test]
fn idle_ratio_sweep_is_monotone() {
    let fx = fixture();
    let out = fx.tmp.path().join("sweep");
    ok(&run(
        &[
            "sweep",
            "--data",
            fx.intervals.to_str().unwrap(),
            "--setup",
            "baf_modern",
            "--workload",
            "backfilling",
            "--param",
            "idle-ratio",
            "--from",
            "0",
            "--to",
            "1",
            "--steps",
            "21",
        ],
        &out,
    ));
    let text = fs::read_to_string(out.join("sweep.csv")).unwrap();
    assert_eq!(text.lines().next().unwrap(), "param,value,u_opt,X,relative_objective");
    let rel: Vec<f64> = text.lines().skip(1).map(|l| l.rsplit(',').next().unwrap().parse().unwrap()).collect();
    assert_eq!(rel.len(), 21);
    assert!(rel.iter().all(|r| *r <= 1.0));
    assert!(rel.windows(2).all(|w| w[0] <= w[1]));
}

#[test]
fn frequency_comparison_matches_hand_calculation() {
    let tmp = TempDir::new().unwrap();
    // flat 380 kg/MWh for a day
    let mut csv = String::from("start_utc,duration_h,intensity_kg_per_mwh,price_eur_per_mwh\n");
    for h in 0..24 {
        csv.push_str(&format!("2024-03-01T{h:02}:00:00Z,1,380,50\n"));
    }
    let data = tmp.path().join("flat.csv");
    fs::write(&data, csv).unwrap();
    let out = tmp.path().join("freq");
    ok(&run(
        &["compare-freq", "--data", data.to_str().unwrap(), "--setup", "gridka_arm", "--workload", "backfilling", "--dynamic"],
        &out,
    ));
    let doc = read_json(&out.join("freq_compare.json"));
    // per core-hour: embedded + P_avg[MW] * 380, limited side scaled by 1 / 0.81
    let p_avg = 0.05 * 0.9 + 0.95 * 2.9;
    let p_avg_limited = 0.05 * 0.9 + 0.95 * (0.6 * 2.9);
    let nominal = 1.8e-4 + p_avg * 1e-6 * 380.0;
    let limited = (1.8e-4 + p_avg_limited * 1e-6 * 380.0) / 0.81;
    let ratio = doc["ratio"].as_f64().unwrap();
    assert!((ratio - limited / nominal).abs() < 1e-12, "{ratio}");
    assert!((ratio - 0.819).abs() < 5e-4);
    // a flat series gives nothing to shift
    assert_eq!(doc["dynamic"]["u_opt"].as_f64().unwrap(), 1.0);
}

#[test]
fn validate_carries_threshold_into_other_year() {
    let tmp = TempDir::new().unwrap();
    let raw = tmp.path().join("raw");
    fs::create_dir_all(&raw).unwrap();
    let f = raw.join("factors.csv");
    fs::write(&f, FACTORS).unwrap();
    let data = tmp.path().join("data");
    for (year, peak) in [("2024", 300.0), ("2023", 250.0)] {
        let (g, p) = write_raw(&raw, year, &format!("{year}-06-10"), 2, peak);
        ok(&run(
            &[
                "ingest",
                "--generation",
                g.to_str().unwrap(),
                "--prices",
                p.to_str().unwrap(),
                "--factors",
                f.to_str().unwrap(),
                "--name",
                &format!("intervals_{year}.csv"),
            ],
            &data,
        ));
    }
    let shares = data.join("shares.csv");
    fs::write(
        &shares,
        "year,renewable_share_pct,mean_intensity_kg_per_mwh\n2021,40,480\n2022,44,460\n2023,50,430\n2024,55,400\n",
    )
    .unwrap();
    let out = tmp.path().join("val");
    ok(&run(
        &[
            "validate",
            "--base",
            data.join("intervals_2024.csv").to_str().unwrap(),
            "--target",
            data.join("intervals_2023.csv").to_str().unwrap(),
            "--shares",
            shares.to_str().unwrap(),
            "--setup",
            "baf_modern",
            "--workload",
            "backfilling",
        ],
        &out,
    ));
    let v = read_json(&out.join("validation.json"));
    assert_eq!(v["base_year"], 2024);
    assert_eq!(v["target_year"], 2023);
    let f = |k: &str| v[k].as_f64().unwrap();
    let slope = v["regression"]["slope"].as_f64().unwrap();
    assert!((f("x_extra") - (f("x_base") + slope * (50.0 - 55.0))).abs() < 1e-9);
    assert_eq!(f("u_deviation"), f("u_extra") - f("u_target"));
}

#[test]
fn summarize_partial_year() {
    let tmp = TempDir::new().unwrap();
    let (g, _) = write_raw(tmp.path(), "s", "2024-06-10", 2, 300.0);
    let f = tmp.path().join("factors.csv");
    fs::write(&f, FACTORS).unwrap();
    let out = tmp.path().join("out");
    let args = ["summarize", "--generation", g.to_str().unwrap(), "--factors", f.to_str().unwrap()];
    let o = run(&args, &out);
    assert_eq!(o.status.code(), Some(3), "two days are not a year");
    let mut with_partial = args.to_vec();
    with_partial.push("--allow-partial");
    ok(&run(&with_partial, &out));
    let text = fs::read_to_string(out.join("shares.csv")).unwrap();
    assert!(text.starts_with("year,renewable_share_pct,mean_intensity_kg_per_mwh\n2024,"));
}
