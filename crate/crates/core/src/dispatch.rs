//! Threshold dispatch: evaluate total emissions or total cost as a function of
//! the cluster utilisation `u` and find the minimising utilisation.
//!
//! A utilisation is realised as a duration-weighted quantile of the interval
//! metric. The cluster runs in the cheapest intervals (ascending metric, earlier
//! timestamp first on ties) and idles in the rest, while the installed hardware
//! is scaled by `1/u` to keep the total compute output constant.

use std::cmp::Ordering;

use serde::{Deserialize, Serialize};

use crate::cluster::{average_power, ClusterSetup, TariffModel, WorkloadScenario};
use crate::energy_data::{IntervalSeries, Metric};
use crate::error::{Error, Module, Result};
use crate::exec::Execution;
use crate::units::{watts_to_kilowatts, watts_to_megawatts, yearly_to_period};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ObjectiveKind {
    Emission,
    Cost,
}

impl ObjectiveKind {
    /// The interval quantity the threshold is placed on.
    pub fn metric(self) -> Metric {
        match self {
            ObjectiveKind::Emission => Metric::Intensity,
            ObjectiveKind::Cost => Metric::Price,
        }
    }
}

impl std::str::FromStr for ObjectiveKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "emission" | "emissions" => Ok(ObjectiveKind::Emission),
            "cost" | "costs" => Ok(ObjectiveKind::Cost),
            other => Err(Error::invalid(Module::Dispatch, "objective", other.to_string())),
        }
    }
}

/// Run/idle partition of a series.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DispatchPolicy {
    pub metric: Metric,
    /// Realised utilisation: run duration over total duration.
    pub u: f64,
    /// Metric value of the most expensive interval still in the run set.
    pub threshold: f64,
    /// Chronological; `true` means the cluster operates in that interval.
    pub run_mask: Vec<bool>,
}

/// Emission terms in kg CO2.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EmissionBreakdown {
    pub embedded: f64,
    pub operation: f64,
    pub idle: f64,
    pub total: f64,
}

/// Cost terms in EUR.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CostBreakdown {
    pub acquisition: f64,
    pub demand: f64,
    pub operation: f64,
    pub idle: f64,
    pub total: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "objective", rename_all = "lowercase")]
pub enum Breakdown {
    Emission(EmissionBreakdown),
    Cost(CostBreakdown),
}

impl Breakdown {
    pub fn total(&self) -> f64 {
        match self {
            Breakdown::Emission(b) => b.total,
            Breakdown::Cost(b) => b.total,
        }
    }

    pub fn operation(&self) -> f64 {
        match self {
            Breakdown::Emission(b) => b.operation,
            Breakdown::Cost(b) => b.operation,
        }
    }

    pub fn idle(&self) -> f64 {
        match self {
            Breakdown::Emission(b) => b.idle,
            Breakdown::Cost(b) => b.idle,
        }
    }

    pub fn as_emission(&self) -> Option<&EmissionBreakdown> {
        match self {
            Breakdown::Emission(b) => Some(b),
            Breakdown::Cost(_) => None,
        }
    }

    pub fn as_cost(&self) -> Option<&CostBreakdown> {
        match self {
            Breakdown::Cost(b) => Some(b),
            Breakdown::Emission(_) => None,
        }
    }
}

/// Per-core constants of one objective, with power already in MW / kW.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ObjectiveModel {
    pub kind: ObjectiveKind,
    /// Cores needed at `u = 1`. Fractional when hardware is rescaled.
    pub n_cores: f64,
    /// Embedded kg CO2 or acquisition EUR per core-hour.
    pub hardware_per_core_hour: f64,
    /// Demand charge per core per year, EUR (cost objective only).
    pub demand_per_core_year: f64,
    pub run_power_mw: f64,
    pub idle_power_mw: f64,
}

impl ObjectiveModel {
    pub fn emission(setup: &ClusterSetup, workload: &WorkloadScenario) -> Result<Self> {
        setup.validate()?;
        workload.validate()?;
        Ok(ObjectiveModel {
            kind: ObjectiveKind::Emission,
            n_cores: setup.n_cores as f64,
            hardware_per_core_hour: setup.embedded_kg_per_core_hour,
            demand_per_core_year: 0.0,
            run_power_mw: watts_to_megawatts(average_power(setup, workload)?),
            idle_power_mw: watts_to_megawatts(setup.p_idle_w),
        })
    }

    pub fn cost(setup: &ClusterSetup, workload: &WorkloadScenario, tariff: &TariffModel) -> Result<Self> {
        setup.validate()?;
        workload.validate()?;
        tariff.validate()?;
        Ok(ObjectiveModel {
            kind: ObjectiveKind::Cost,
            n_cores: setup.n_cores as f64,
            hardware_per_core_hour: setup.acquisition_rate()?,
            demand_per_core_year: watts_to_kilowatts(setup.p_max_w) * tariff.c_yearly_demand_eur_per_kw,
            run_power_mw: watts_to_megawatts(average_power(setup, workload)?),
            idle_power_mw: watts_to_megawatts(setup.p_idle_w),
        })
    }

    pub fn new(
        kind: ObjectiveKind,
        setup: &ClusterSetup,
        workload: &WorkloadScenario,
        tariff: Option<&TariffModel>,
    ) -> Result<Self> {
        match kind {
            ObjectiveKind::Emission => Self::emission(setup, workload),
            ObjectiveKind::Cost => Self::cost(setup, workload, tariff.unwrap_or(&TariffModel::default())),
        }
    }

    /// Objective terms for utilisation `u` given the metric-times-duration sums
    /// over the run and idle sets.
    pub fn breakdown(&self, u: f64, t_total: f64, run_sum: f64, idle_sum: f64) -> Breakdown {
        let scale = self.n_cores / u;
        let hardware = scale * self.hardware_per_core_hour * t_total;
        let operation = scale * self.run_power_mw * run_sum;
        let idle = scale * self.idle_power_mw * idle_sum;
        match self.kind {
            ObjectiveKind::Emission => Breakdown::Emission(EmissionBreakdown {
                embedded: hardware,
                operation,
                idle,
                total: hardware + operation + idle,
            }),
            ObjectiveKind::Cost => {
                let demand = scale * yearly_to_period(self.demand_per_core_year, t_total);
                Breakdown::Cost(CostBreakdown {
                    acquisition: hardware,
                    demand,
                    operation,
                    idle,
                    total: hardware + demand + operation + idle,
                })
            }
        }
    }
}

/// Series indices ordered by ascending metric, earlier interval first on ties.
pub fn dispatch_order(series: &IntervalSeries, metric: Metric) -> Vec<usize> {
    let values = series.metric_values(metric);
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| match values[a].total_cmp(&values[b]) {
        Ordering::Equal => a.cmp(&b),
        o => o,
    });
    order
}

/// Prefix sums over the dispatch order; every quantile is one lookup.
struct QuantileTable {
    order: Vec<usize>,
    metric: Vec<f64>,
    /// Run duration of the first k sorted intervals.
    cum_duration: Vec<f64>,
    /// Σ metric·t over the first k sorted intervals, summed left to right.
    run_sum: Vec<f64>,
    /// Σ metric·t over sorted intervals k.., summed right to left.
    idle_sum: Vec<f64>,
    t_total: f64,
}

impl QuantileTable {
    fn new(series: &IntervalSeries, metric: Metric) -> Self {
        let order = dispatch_order(series, metric);
        let ivs = series.intervals();
        let n = order.len();
        let mut cum_duration = vec![0.0; n + 1];
        let mut run_sum = vec![0.0; n + 1];
        let mut idle_sum = vec![0.0; n + 1];
        for (k, &i) in order.iter().enumerate() {
            cum_duration[k + 1] = cum_duration[k] + ivs[i].duration_h;
            run_sum[k + 1] = run_sum[k] + ivs[i].metric(metric) * ivs[i].duration_h;
        }
        for k in (0..n).rev() {
            let i = order[k];
            idle_sum[k] = idle_sum[k + 1] + ivs[i].metric(metric) * ivs[i].duration_h;
        }
        QuantileTable {
            metric: order.iter().map(|&i| ivs[i].metric(metric)).collect(),
            order,
            cum_duration,
            run_sum,
            idle_sum,
            t_total: series.t_total(),
        }
    }

    fn len(&self) -> usize {
        self.order.len()
    }

    /// Utilisation when the first `k` sorted intervals run.
    fn utilisation(&self, k: usize) -> f64 {
        if k == self.len() {
            1.0
        } else {
            self.cum_duration[k] / self.t_total
        }
    }

    /// Number of sorted intervals whose cumulative duration is nearest to
    /// `u · t_total`; the larger count wins a tie.
    fn count_for(&self, u: f64) -> usize {
        let target = u * self.t_total;
        let upper = self.cum_duration.partition_point(|&d| d < target);
        if upper > self.len() {
            return self.len();
        }
        if upper == 0 {
            return 0;
        }
        let below = target - self.cum_duration[upper - 1];
        let above = self.cum_duration[upper] - target;
        if below < above {
            upper - 1
        } else {
            upper
        }
    }

    fn threshold(&self, k: usize) -> f64 {
        self.metric[k - 1]
    }

    fn mask(&self, k: usize) -> Vec<bool> {
        let mut mask = vec![false; self.len()];
        for &i in &self.order[..k] {
            mask[i] = true;
        }
        mask
    }
}

fn check_utilisation(u: f64) -> Result<()> {
    if u.is_finite() && u > 0.0 && u <= 1.0 {
        Ok(())
    } else {
        Err(Error::invalid(
            Module::Dispatch,
            "utilisation",
            format!("{u} is outside (0, 1]"),
        ))
    }
}

/// Run set for utilisation `u`: the cheapest intervals whose summed duration is
/// nearest to `u · t_total`.
pub fn policy_from_utilisation(series: &IntervalSeries, metric: Metric, u: f64) -> Result<DispatchPolicy> {
    check_utilisation(u)?;
    let table = QuantileTable::new(series, metric);
    let k = table.count_for(u);
    if k == 0 {
        return Err(Error::EmptyRunSet(u));
    }
    Ok(DispatchPolicy {
        metric,
        u: table.utilisation(k),
        threshold: table.threshold(k),
        run_mask: table.mask(k),
    })
}

/// Objective terms for an explicit run mask. The utilisation is the run
/// duration over the total duration; sums run in chronological order.
pub fn evaluate_mask(series: &IntervalSeries, model: &ObjectiveModel, run_mask: &[bool]) -> Result<Breakdown> {
    if run_mask.len() != series.len() {
        return Err(Error::Invariant(format!(
            "mask has {} entries for {} intervals",
            run_mask.len(),
            series.len()
        )));
    }
    let metric = model.kind.metric();
    let mut run_duration = 0.0;
    let mut run_sum = 0.0;
    let mut idle_sum = 0.0;
    for (iv, &run) in series.intervals().iter().zip(run_mask) {
        let weighted = iv.metric(metric) * iv.duration_h;
        if run {
            run_duration += iv.duration_h;
            run_sum += weighted;
        } else {
            idle_sum += weighted;
        }
    }
    if run_duration <= 0.0 {
        return Err(Error::EmptyRunSet(0.0));
    }
    let u = run_duration / series.t_total();
    Ok(model.breakdown(u, series.t_total(), run_sum, idle_sum))
}

/// Total emissions when operating at utilisation `u`.
pub fn emission_total(
    series: &IntervalSeries,
    setup: &ClusterSetup,
    workload: &WorkloadScenario,
    u: f64,
) -> Result<EmissionBreakdown> {
    let model = ObjectiveModel::emission(setup, workload)?;
    let policy = policy_from_utilisation(series, Metric::Intensity, u)?;
    match evaluate_mask(series, &model, &policy.run_mask)? {
        Breakdown::Emission(b) => Ok(b),
        Breakdown::Cost(_) => unreachable!("emission model yields emission breakdown"),
    }
}

/// Total cost when operating at utilisation `u`.
pub fn cost_total(
    series: &IntervalSeries,
    setup: &ClusterSetup,
    workload: &WorkloadScenario,
    tariff: &TariffModel,
    u: f64,
) -> Result<CostBreakdown> {
    let model = ObjectiveModel::cost(setup, workload, tariff)?;
    let policy = policy_from_utilisation(series, Metric::Price, u)?;
    match evaluate_mask(series, &model, &policy.run_mask)? {
        Breakdown::Cost(b) => Ok(b),
        Breakdown::Emission(_) => unreachable!("cost model yields cost breakdown"),
    }
}

/// One attainable utilisation on the quantile grid.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    pub u: f64,
    pub threshold: f64,
    pub breakdown: Breakdown,
    /// Cores installed to keep the compute target: `n_cores / u`.
    pub scaled_cores: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OptimizationResult {
    pub objective: ObjectiveKind,
    pub u_opt: f64,
    /// `None` when constant operation (`u = 1`) is optimal.
    pub threshold: Option<f64>,
    pub breakdown: Breakdown,
    /// Objective terms at `u = 1`.
    pub baseline: Breakdown,
    /// objective(u_opt) / objective(1).
    pub relative_objective: f64,
    pub scaled_cores: f64,
    /// Index of the optimum in `curve`.
    pub optimum_index: usize,
    /// Every attainable utilisation in ascending order; the last point is `u = 1`.
    #[serde(skip)]
    pub curve: Vec<CurvePoint>,
    #[serde(skip)]
    pub policy: DispatchPolicy,
}

impl OptimizationResult {
    pub fn is_constant_operation(&self) -> bool {
        self.threshold.is_none()
    }
}

/// Minimises the objective over every attainable utilisation `k/N`.
pub fn optimise(
    series: &IntervalSeries,
    setup: &ClusterSetup,
    workload: &WorkloadScenario,
    objective: ObjectiveKind,
    tariff: Option<&TariffModel>,
) -> Result<OptimizationResult> {
    let model = ObjectiveModel::new(objective, setup, workload, tariff)?;
    optimise_model(series, &model, Execution::default())
}

/// Exhaustive search over the quantile grid for a prepared objective model.
///
/// Ties between grid points go to the larger utilisation, so constant
/// operation wins whenever dynamic operation brings no strict improvement.
pub fn optimise_model(series: &IntervalSeries, model: &ObjectiveModel, exec: Execution) -> Result<OptimizationResult> {
    let table = QuantileTable::new(series, model.kind.metric());
    let n = table.len();
    let curve: Vec<CurvePoint> = exec.map_range(1..n + 1, |k| {
        let u = table.utilisation(k);
        CurvePoint {
            u,
            threshold: table.threshold(k),
            breakdown: model.breakdown(u, table.t_total, table.run_sum[k], table.idle_sum[k]),
            scaled_cores: model.n_cores / u,
        }
    });

    let mut best = n - 1;
    for idx in (0..n - 1).rev() {
        if curve[idx].breakdown.total() < curve[best].breakdown.total() {
            best = idx;
        }
    }
    let opt = curve[best];
    let baseline = curve[n - 1].breakdown;
    let k = best + 1;
    let relative_objective = opt.breakdown.total() / baseline.total();
    if (relative_objective > 1.0 || relative_objective.is_nan()) && baseline.total() > 0.0 {
        return Err(Error::Invariant(format!(
            "relative objective {relative_objective} exceeds 1"
        )));
    }
    Ok(OptimizationResult {
        objective: model.kind,
        u_opt: opt.u,
        threshold: (k < n).then_some(opt.threshold),
        breakdown: opt.breakdown,
        baseline,
        relative_objective,
        scaled_cores: opt.scaled_cores,
        optimum_index: best,
        policy: DispatchPolicy {
            metric: model.kind.metric(),
            u: opt.u,
            threshold: opt.threshold,
            run_mask: table.mask(k),
        },
        curve,
    })
}

/// Number of pause events: run→idle transitions in chronological order.
pub fn switching_count(policy: &DispatchPolicy) -> usize {
    policy
        .run_mask
        .windows(2)
        .filter(|w| w[0] && !w[1])
        .count()
}
