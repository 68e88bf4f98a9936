use std::collections::BTreeMap;
use std::fs::File;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use chrono::Datelike;
use log::{info, warn};
use serde::Serialize;

use flexcompute::cluster::{read_tariff, ClusterSetup, Registry, TariffModel, WorkloadScenario};
use flexcompute::dispatch::{optimise_model, ObjectiveKind, ObjectiveModel, OptimizationResult};
use flexcompute::energy_data::{
    blend_intensity, interval_intensities, parse_factors, parse_generation, parse_prices, read_intervals_path,
    renewable_sources, write_intervals, write_share_table, yearly_summary, FactorSchedule, GenerationRecord,
    InputFormat, IntervalSeries, PriceRecord, RenewableShareTable, YearInput,
};
use flexcompute::report::{
    read_sweep_csv, write_curve_csv, write_schedule_csv, write_sweep_csv, Provenance, ResultDocument, ResultTable,
    TableRow,
};
use flexcompute::sensitivity::{
    freq_limited_dynamic, freq_limited_emission, sweep, FreqComparison, FreqLimitSpec, SweepParam, SweepSpec,
};
use flexcompute::validation::{fit_share_regression, ShareRegression, ValidationReport};
use flexcompute::{Error, Execution};

use crate::output::Staged;
use crate::{
    Cli, Command, CompareFreqArgs, FetchArgs, FormatArg, IngestArgs, ObjectiveArg, OptimizeArgs, ReportArgs,
    StudyArgs, SummarizeArgs, SweepArgs, ValidateArgs,
};

pub fn run(cli: &Cli) -> Result<()> {
    let staged = match &cli.command {
        Command::Ingest(a) => ingest(cli, a)?,
        Command::Fetch(a) => fetch(cli, a)?,
        Command::Summarize(a) => summarize(cli, a)?,
        Command::Optimize(a) => optimize(cli, a)?,
        Command::Study(a) => study(cli, a)?,
        Command::Sweep(a) => sweep_cmd(cli, a)?,
        Command::Validate(a) => validate(cli, a)?,
        Command::CompareFreq(a) => compare_freq(cli, a)?,
        Command::Report(a) => report(a)?,
    };
    for path in staged.commit(&cli.out)? {
        info!("wrote {}", path.display());
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// shared plumbing

/// Every input must be readable before any work starts.
fn require_files<'a>(paths: impl IntoIterator<Item = &'a Path>) -> Result<()> {
    for p in paths {
        File::open(p)
            .map_err(Error::from)
            .with_context(|| format!("cannot read {}", p.display()))?;
    }
    Ok(())
}

fn registry(cli: &Cli) -> Result<Registry> {
    let mut reg = Registry::builtin();
    if let Some(path) = &cli.config {
        reg.merge_config_path(path)
            .with_context(|| format!("loading config {}", path.display()))?;
    }
    Ok(reg)
}

fn tariff(reg: &Registry, path: Option<&PathBuf>) -> Result<TariffModel> {
    match path {
        Some(p) => read_tariff(p).with_context(|| format!("loading tariff {}", p.display())),
        None => Ok(reg.tariff),
    }
}

fn format_of(arg: FormatArg, path: &Path) -> InputFormat {
    match arg {
        FormatArg::Csv => InputFormat::Csv,
        FormatArg::Json => InputFormat::Json,
        FormatArg::Auto => match path.extension().and_then(|e| e.to_str()) {
            Some(e) if e.eq_ignore_ascii_case("json") => InputFormat::Json,
            _ => InputFormat::Csv,
        },
    }
}

fn read_series(path: &Path) -> Result<IntervalSeries> {
    read_intervals_path(path).with_context(|| format!("reading {}", path.display()))
}

fn provenance(inputs: &[&Path], config: Option<&PathBuf>) -> Result<Provenance> {
    let mut paths: Vec<&Path> = inputs.to_vec();
    paths.extend(config.map(|p| p.as_path()));
    Ok(Provenance::for_files(&paths)?)
}

fn read_generation(paths: &[PathBuf], format: FormatArg) -> Result<Vec<GenerationRecord>> {
    let mut records = Vec::new();
    for p in paths {
        let f = File::open(p).map_err(Error::from)?;
        records.extend(parse_generation(f, format_of(format, p)).with_context(|| format!("parsing {}", p.display()))?);
    }
    records.sort_by_key(|r| r.start);
    if let Some(w) = records.windows(2).find(|w| w[0].start == w[1].start) {
        return Err(Error::DuplicateTimestamp {
            row: 0,
            timestamp: w[1].start.to_rfc3339(),
        })
        .context("generation files overlap");
    }
    Ok(records)
}

fn read_prices(paths: &[PathBuf], format: FormatArg) -> Result<Vec<PriceRecord>> {
    let mut prices = Vec::new();
    for p in paths {
        let f = File::open(p).map_err(Error::from)?;
        prices.extend(parse_prices(f, format_of(format, p)).with_context(|| format!("parsing {}", p.display()))?);
    }
    Ok(prices)
}

fn read_factors(path: &Path) -> Result<FactorSchedule> {
    let f = File::open(path).map_err(Error::from)?;
    let tables = parse_factors(f).with_context(|| format!("parsing {}", path.display()))?;
    Ok(FactorSchedule::new(tables)?)
}

struct Selection<'a> {
    setup: &'a ClusterSetup,
    workload: &'a WorkloadScenario,
}

fn select<'a>(reg: &'a Registry, setup: &str, workload: &str) -> Result<Selection<'a>> {
    Ok(Selection {
        setup: reg.setup(setup)?,
        workload: reg.workload(workload)?,
    })
}

fn run_optimisation(
    series: &IntervalSeries,
    sel: &Selection<'_>,
    objective: ObjectiveKind,
    tariff: &TariffModel,
    exec: Execution,
) -> Result<OptimizationResult> {
    let model = ObjectiveModel::new(objective, sel.setup, sel.workload, Some(tariff))?;
    Ok(optimise_model(series, &model, exec)?)
}

fn stage_result(
    staged: &mut Staged,
    dir: &Path,
    series: &IntervalSeries,
    sel: &Selection<'_>,
    r: &OptimizationResult,
) -> Result<ResultDocument> {
    let doc = ResultDocument::new(&sel.setup.name, &sel.workload.name, series, r);
    staged.add_json(dir.join("result.json"), &doc)?;
    staged.add_with(dir.join("curve.csv"), |w| write_curve_csv(r, w))?;
    staged.add_with(dir.join("schedule.csv"), |w| write_schedule_csv(series, &r.policy.run_mask, w))?;
    Ok(doc)
}

fn log_result(doc: &ResultDocument) {
    let x = doc.threshold.map(|x| format!("{x:.2}")).unwrap_or_else(|| "-".into());
    info!(
        "{}/{}: u_opt {:.3}, X {x}, relative {:.3}, {} pauses",
        doc.setup, doc.workload, doc.u_opt, doc.relative_objective, doc.pauses
    );
}

// ---------------------------------------------------------------------------
// commands

fn ingest(cli: &Cli, a: &IngestArgs) -> Result<Staged> {
    require_files(
        a.generation
            .iter()
            .chain(&a.prices)
            .chain(std::iter::once(&a.factors))
            .map(PathBuf::as_path),
    )?;
    let factors = read_factors(&a.factors)?;
    let records = read_generation(&a.generation, a.format)?;
    let prices = read_prices(&a.prices, a.format)?;
    let series = blend_intensity(&records, &factors, &prices)?;
    info!(
        "{} intervals, {:.1} h, mean intensity {:.2} kg/MWh, mean price {:.2} EUR/MWh",
        series.len(),
        series.t_total(),
        series.time_weighted_mean(flexcompute::Metric::Intensity),
        series.time_weighted_mean(flexcompute::Metric::Price)
    );

    let mut inputs: Vec<&Path> = a.generation.iter().map(PathBuf::as_path).collect();
    inputs.extend(a.prices.iter().map(PathBuf::as_path));
    inputs.push(&a.factors);
    let mut staged = Staged::default();
    staged.add_with(&a.name, |w| write_intervals(&series, w))?;
    staged.add_json(format!("{}.provenance.json", a.name), &provenance(&inputs, cli.config.as_ref())?)?;
    Ok(staged)
}

#[cfg(feature = "fetch")]
fn fetch(_cli: &Cli, a: &FetchArgs) -> Result<Staged> {
    let mut staged = Staged::default();
    let (generation, prices) = crate::fetch::year(a.year, &a.country, &a.bzn)?;
    staged.add(format!("generation_{}.json", a.year), generation);
    staged.add(format!("prices_{}.json", a.year), prices);
    Ok(staged)
}

#[cfg(not(feature = "fetch"))]
fn fetch(_cli: &Cli, a: &FetchArgs) -> Result<Staged> {
    bail!(
        "this build has no network support; rebuild with `--features fetch` or download generation and \
         prices for {} manually",
        a.year
    )
}

fn summarize(cli: &Cli, a: &SummarizeArgs) -> Result<Staged> {
    require_files(a.generation.iter().chain(std::iter::once(&a.factors)).map(PathBuf::as_path))?;
    let factors = read_factors(&a.factors)?;
    let records = read_generation(&a.generation, a.format)?;
    let intensities = interval_intensities(&records, &factors)?;

    let mut by_year: BTreeMap<i32, (usize, usize)> = BTreeMap::new();
    for (i, r) in records.iter().enumerate() {
        let e = by_year.entry(r.start.year()).or_insert((i, i));
        e.1 = i + 1;
    }
    let inputs: Vec<YearInput<'_>> = by_year
        .iter()
        .map(|(&year, &(lo, hi))| YearInput {
            year,
            generation: &records[lo..hi],
            intensities: &intensities[lo..hi],
        })
        .collect();
    let renewable: Vec<&str> = if a.renewable.is_empty() {
        renewable_sources().to_vec()
    } else {
        a.renewable.iter().map(String::as_str).collect()
    };
    let table = yearly_summary(&inputs, &renewable, a.allow_partial)?;
    for r in table.rows() {
        info!(
            "{}: renewable share {:.2} %, mean intensity {:.2} kg/MWh",
            r.year, r.renewable_share, r.mean_intensity
        );
    }
    let inputs: Vec<&Path> = a
        .generation
        .iter()
        .chain(std::iter::once(&a.factors))
        .map(PathBuf::as_path)
        .collect();
    let mut staged = Staged::default();
    staged.add_with("shares.csv", |w| write_share_table(&table, w))?;
    staged.add_json("shares.provenance.json", &provenance(&inputs, cli.config.as_ref())?)?;
    Ok(staged)
}

fn optimize(cli: &Cli, a: &OptimizeArgs) -> Result<Staged> {
    require_files(std::iter::once(a.data.as_path()).chain(a.tariff.as_deref()))?;
    let reg = registry(cli)?;
    let sel = select(&reg, &a.setup, &a.workload)?;
    let tariff = tariff(&reg, a.tariff.as_ref())?;
    let series = read_series(&a.data)?;
    let r = run_optimisation(&series, &sel, a.objective.into(), &tariff, Execution::default())?;

    let mut staged = Staged::default();
    let doc = stage_result(&mut staged, Path::new(""), &series, &sel, &r)?;
    log_result(&doc);
    let mut inputs = vec![a.data.as_path()];
    inputs.extend(a.tariff.as_deref());
    staged.add_json("provenance.json", &provenance(&inputs, cli.config.as_ref())?)?;
    Ok(staged)
}

fn study(cli: &Cli, a: &StudyArgs) -> Result<Staged> {
    require_files(std::iter::once(a.data.as_path()).chain(a.tariff.as_deref()))?;
    let reg = registry(cli)?;
    let tariff = tariff(&reg, a.tariff.as_ref())?;
    let objective: ObjectiveKind = a.objective.into();
    let setups: Vec<String> = if a.setups.is_empty() {
        reg.setups()
            .filter(|s| a.objective == ObjectiveArg::Emission || s.acq_eur_per_core_hour.is_some())
            .map(|s| s.name.clone())
            .collect()
    } else {
        a.setups.clone()
    };
    let mut cells = Vec::new();
    for s in &setups {
        for w in &a.workloads {
            cells.push(select(&reg, s, w)?);
        }
    }
    let series = read_series(&a.data)?;

    // cells in parallel, each optimisation sequential inside
    let results: Vec<_> = Execution::default().map_slice(&cells, |sel| {
        run_optimisation(&series, sel, objective, &tariff, Execution::Sequential)
    });

    let mut staged = Staged::default();
    let mut rows = Vec::with_capacity(cells.len());
    for (sel, r) in cells.iter().zip(results) {
        let r = r.with_context(|| format!("{}/{}", sel.setup.name, sel.workload.name))?;
        let dir = PathBuf::from(format!("{}__{}", sel.setup.name, sel.workload.name));
        let doc = stage_result(&mut staged, &dir, &series, sel, &r)?;
        log_result(&doc);
        rows.push(TableRow::from(&doc));
    }
    let mut inputs = vec![a.data.as_path()];
    inputs.extend(a.tariff.as_deref());
    let table = ResultTable {
        rows,
        provenance: Some(provenance(&inputs, cli.config.as_ref())?),
    };
    let name = objective_name(objective);
    staged.add_with(format!("table_{name}.csv"), |w| table.write_csv(w))?;
    staged.add_json(format!("table_{name}.json"), &table)?;
    Ok(staged)
}

fn objective_name(o: ObjectiveKind) -> &'static str {
    match o {
        ObjectiveKind::Emission => "emission",
        ObjectiveKind::Cost => "cost",
    }
}

fn sweep_values(a: &SweepArgs) -> Result<Vec<f64>> {
    match (a.from, a.to, a.steps) {
        (Some(from), Some(to), Some(steps)) => {
            if steps == 0 {
                return Err(Error::InvalidParameter {
                    module: flexcompute::error::Module::Sensitivity,
                    what: "steps",
                    msg: "must be at least 1".into(),
                }
                .into());
            }
            if steps == 1 {
                return Ok(vec![from]);
            }
            let step = (to - from) / (steps - 1) as f64;
            // last point pinned to `to` so the range end is exact
            Ok((0..steps)
                .map(|i| if i + 1 == steps { to } else { from + step * i as f64 })
                .collect())
        }
        _ => Ok(a.values.clone()),
    }
}

fn sweep_cmd(cli: &Cli, a: &SweepArgs) -> Result<Staged> {
    require_files(std::iter::once(a.data.as_path()).chain(a.tariff.as_deref()))?;
    let reg = registry(cli)?;
    let sel = select(&reg, &a.setup, &a.workload)?;
    let tariff = tariff(&reg, a.tariff.as_ref())?;
    let parameter: SweepParam = a.param.parse()?;
    let spec = SweepSpec {
        parameter,
        values: sweep_values(a)?,
        setup: sel.setup.clone(),
        workload: sel.workload.clone(),
        objective: a.objective.into(),
        tariff: Some(tariff),
    };
    spec.validate()?;
    let series = read_series(&a.data)?;
    let rows = sweep(&spec, &series)?;
    info!(
        "{} points of {} on {}/{}",
        rows.len(),
        parameter.name(),
        sel.setup.name,
        sel.workload.name
    );

    let mut staged = Staged::default();
    staged.add_with("sweep.csv", |w| write_sweep_csv(parameter, &rows, w))?;
    let mut inputs = vec![a.data.as_path()];
    inputs.extend(a.tariff.as_deref());
    staged.add_json("sweep.provenance.json", &provenance(&inputs, cli.config.as_ref())?)?;
    Ok(staged)
}

fn validate(cli: &Cli, a: &ValidateArgs) -> Result<Staged> {
    require_files([a.base.as_path(), a.target.as_path(), a.shares.as_path()])?;
    let reg = registry(cli)?;
    let sel = select(&reg, &a.setup, &a.workload)?;
    let base = read_series(&a.base)?;
    let target = read_series(&a.target)?;
    let shares = RenewableShareTable::from_path(&a.shares).with_context(|| format!("reading {}", a.shares.display()))?;
    let regression: ShareRegression = fit_share_regression(&shares)?;
    info!(
        "share regression over {}-{}: slope {:.3} +/- {:.3} kg/MWh per pp",
        regression.first_year, regression.last_year, regression.slope, regression.slope_std
    );

    let r = run_optimisation(&base, &sel, ObjectiveKind::Emission, &reg.tariff, Execution::default())?;
    let Some(x_base) = r.threshold else {
        bail!(
            "{}/{} is optimal at constant operation in {}; there is no threshold to carry over",
            sel.setup.name,
            sel.workload.name,
            base.year()
        );
    };
    let report = ValidationReport::build(
        &target,
        flexcompute::Metric::Intensity,
        base.year(),
        target.year(),
        &shares,
        regression,
        x_base,
        r.u_opt,
    )?;
    if report.u_extra == 0.0 {
        warn!("extrapolated threshold lies below every interval of {}", report.target_year);
    }
    info!(
        "{} -> {}: X_extra {:.2}, u_extra {:.3} (target {:.3}), X_target {:.2}, deviation {:.2} %",
        report.base_year,
        report.target_year,
        report.x_extra,
        report.u_extra,
        report.u_target,
        report.x_target,
        100.0 * report.x_relative_deviation
    );

    let mut staged = Staged::default();
    staged.add_json("validation.json", &report)?;
    staged.add_json(
        "validation.provenance.json",
        &provenance(&[&a.base, &a.target, &a.shares], cli.config.as_ref())?,
    )?;
    Ok(staged)
}

#[derive(Serialize)]
struct FreqDocument {
    setup: String,
    workload: String,
    #[serde(flatten)]
    constant: FreqComparison,
    dynamic: Option<FreqDynamic>,
}

#[derive(Serialize)]
struct FreqDynamic {
    u_opt: f64,
    threshold: Option<f64>,
    total: f64,
    /// Optimum of the limited setup over nominal constant operation.
    ratio: f64,
}

fn compare_freq(cli: &Cli, a: &CompareFreqArgs) -> Result<Staged> {
    require_files([a.data.as_path()])?;
    let reg = registry(cli)?;
    let sel = select(&reg, &a.setup, &a.workload)?;
    let spec = FreqLimitSpec {
        power_reduction: a.power_reduction,
        performance_drop: a.performance_drop,
    };
    spec.validate()?;
    let series = read_series(&a.data)?;
    let constant = freq_limited_emission(&series, sel.setup, sel.workload, &spec)?;
    info!(
        "{}/{}: clock-limited constant operation at {:.3} of nominal emissions",
        sel.setup.name, sel.workload.name, constant.ratio
    );
    let dynamic = if a.dynamic {
        let (r, ratio) = freq_limited_dynamic(&series, sel.setup, sel.workload, &spec)?;
        info!("clock-limited dynamic operation: u_opt {:.3}, {:.3} of nominal", r.u_opt, ratio);
        Some(FreqDynamic {
            u_opt: r.u_opt,
            threshold: r.threshold,
            total: r.breakdown.total(),
            ratio,
        })
    } else {
        None
    };
    let doc = FreqDocument {
        setup: sel.setup.name.clone(),
        workload: sel.workload.name.clone(),
        constant,
        dynamic,
    };
    let mut staged = Staged::default();
    staged.add_json("freq_compare.json", &doc)?;
    staged.add_json("freq_compare.provenance.json", &provenance(&[&a.data], cli.config.as_ref())?)?;
    Ok(staged)
}

fn report(a: &ReportArgs) -> Result<Staged> {
    if !a.from.is_dir() {
        return Err(Error::from(std::io::Error::new(
            std::io::ErrorKind::NotFound,
            format!("{} is not a directory", a.from.display()),
        ))
        .into());
    }
    let mut results: BTreeMap<&'static str, Vec<TableRow>> = BTreeMap::new();
    let mut sweeps = Vec::new();
    let mut validations = Vec::new();
    let mut sources = Vec::new();

    let files = walkdir::WalkDir::new(&a.from).sort_by_file_name().into_iter();
    for entry in files {
        let entry = entry.map_err(|e| anyhow::anyhow!(e))?;
        if !entry.file_type().is_file() {
            continue;
        }
        let path = entry.path();
        let name = entry.file_name().to_string_lossy();
        let read = || std::fs::read(path).map_err(Error::from).with_context(|| format!("reading {}", path.display()));
        if name == "result.json" {
            let doc: ResultDocument =
                serde_json::from_slice(&read()?).map_err(Error::from).with_context(|| format!("parsing {}", path.display()))?;
            results.entry(objective_name(doc.objective)).or_default().push(TableRow::from(&doc));
        } else if name.ends_with("sweep.csv") {
            let (param, rows) = read_sweep_csv(read()?.as_slice()).with_context(|| format!("parsing {}", path.display()))?;
            sweeps.push((path.to_path_buf(), param, rows));
        } else if name == "validation.json" {
            let v: ValidationReport =
                serde_json::from_slice(&read()?).map_err(Error::from).with_context(|| format!("parsing {}", path.display()))?;
            validations.push(v);
        } else {
            continue;
        }
        sources.push(path.to_path_buf());
    }
    if sources.is_empty() {
        bail!("no result.json, sweep.csv or validation.json under {}", a.from.display());
    }

    let mut staged = Staged::default();
    for (name, rows) in results {
        let table = ResultTable { rows, provenance: None };
        staged.add_with(format!("table_{name}.csv"), |w| table.write_csv(w))?;
    }
    if !sweeps.is_empty() {
        let mut csv = String::from("source,param,value,u_opt,X,relative\n");
        for (path, param, rows) in &sweeps {
            let src = path.strip_prefix(&a.from).unwrap_or(path).display().to_string();
            for r in rows {
                csv.push_str(&format!(
                    "{src},{},{},{:.3},{},{:.3}\n",
                    param.name(),
                    r.value,
                    r.u_opt,
                    r.threshold.map(|x| format!("{x:.2}")).unwrap_or_default(),
                    r.relative_objective
                ));
            }
        }
        staged.add("table_sweeps.csv", csv.into_bytes());
    }
    if !validations.is_empty() {
        validations.sort_by_key(|v| (v.base_year, v.target_year));
        let mut csv = String::from("base_year,target_year,u_extra,X_extra,u_target,X_target,X_relative_deviation_pct\n");
        for v in &validations {
            csv.push_str(&format!(
                "{},{},{:.3},{:.2},{:.3},{:.2},{:.2}\n",
                v.base_year,
                v.target_year,
                v.u_extra,
                v.x_extra,
                v.u_target,
                v.x_target,
                100.0 * v.x_relative_deviation
            ));
        }
        staged.add("table_validation.csv", csv.into_bytes());
    }
    let refs: Vec<&Path> = sources.iter().map(PathBuf::as_path).collect();
    staged.add_json("report.provenance.json", &Provenance::for_files(&refs)?)?;
    Ok(staged)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn args(from: f64, to: f64, steps: usize) -> SweepArgs {
        SweepArgs {
            data: PathBuf::new(),
            setup: String::new(),
            workload: String::new(),
            param: "idle-ratio".into(),
            from: Some(from),
            to: Some(to),
            steps: Some(steps),
            values: vec![],
            objective: ObjectiveArg::Emission,
            tariff: None,
        }
    }

    #[test]
    fn sweep_range_hits_both_ends() {
        let v = sweep_values(&args(0.0, 1.0, 51)).unwrap();
        assert_eq!(v.len(), 51);
        assert_eq!(v[0], 0.0);
        assert_eq!(v[50], 1.0);
        assert!((v[25] - 0.5).abs() < 1e-15);
        assert_eq!(sweep_values(&args(0.3, 1.0, 1)).unwrap(), vec![0.3]);
        assert!(sweep_values(&args(0.0, 1.0, 0)).is_err());
    }
}
