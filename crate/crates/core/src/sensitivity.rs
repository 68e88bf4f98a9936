//! Parameter sweeps around a base setup and the clock-frequency-limit comparison.

use serde::{Deserialize, Serialize};

use crate::cluster::{ClusterSetup, TariffModel, WorkloadScenario};
use crate::dispatch::{evaluate_mask, optimise_model, ObjectiveKind, ObjectiveModel, OptimizationResult};
use crate::energy_data::IntervalSeries;
use crate::error::{Error, Module, Result};
use crate::exec::Execution;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepParam {
    /// P_idle / P_max; sets `P_idle = value · P_max`.
    IdleRatio,
    /// Absolute embedded emissions, kg CO2 per core-hour.
    EmbeddedRate,
    /// Multiplier on the base embedded rate.
    EmbeddedFactor,
    /// Absolute acquisition cost, EUR per core-hour.
    AcqRate,
    /// Multiplier on the base acquisition rate.
    AcqFactor,
}

impl SweepParam {
    pub fn name(self) -> &'static str {
        match self {
            SweepParam::IdleRatio => "idle_ratio",
            SweepParam::EmbeddedRate => "embedded_rate",
            SweepParam::EmbeddedFactor => "embedded_factor",
            SweepParam::AcqRate => "acq_rate",
            SweepParam::AcqFactor => "acq_factor",
        }
    }

    fn check(self, v: f64) -> Result<()> {
        let ok = match self {
            SweepParam::IdleRatio => (0.0..=1.0).contains(&v),
            SweepParam::EmbeddedFactor | SweepParam::AcqFactor => v.is_finite() && v > 0.0,
            SweepParam::EmbeddedRate | SweepParam::AcqRate => v.is_finite() && v >= 0.0,
        };
        if ok {
            Ok(())
        } else {
            Err(Error::invalid(
                Module::Sensitivity,
                "sweep value",
                format!("{v} is out of range for {}", self.name()),
            ))
        }
    }

    /// Copy of `base` with this parameter set to `value`.
    pub fn apply(self, base: &ClusterSetup, value: f64) -> Result<ClusterSetup> {
        self.check(value)?;
        let mut s = base.clone();
        match self {
            SweepParam::IdleRatio => return base.with_idle_ratio(value),
            SweepParam::EmbeddedRate => s.embedded_kg_per_core_hour = value,
            SweepParam::EmbeddedFactor => s.embedded_kg_per_core_hour *= value,
            SweepParam::AcqRate => s.acq_eur_per_core_hour = Some(value),
            SweepParam::AcqFactor => s.acq_eur_per_core_hour = Some(base.acquisition_rate()? * value),
        }
        Ok(s)
    }
}

impl std::str::FromStr for SweepParam {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().replace('-', "_").as_str() {
            "idle_ratio" => Ok(SweepParam::IdleRatio),
            "embedded_rate" => Ok(SweepParam::EmbeddedRate),
            "embedded_factor" => Ok(SweepParam::EmbeddedFactor),
            "acq_rate" => Ok(SweepParam::AcqRate),
            "acq_factor" => Ok(SweepParam::AcqFactor),
            other => Err(Error::invalid(Module::Sensitivity, "sweep parameter", other.to_string())),
        }
    }
}

#[derive(Debug, Clone)]
pub struct SweepSpec {
    pub parameter: SweepParam,
    pub values: Vec<f64>,
    pub setup: ClusterSetup,
    pub workload: WorkloadScenario,
    pub objective: ObjectiveKind,
    pub tariff: Option<TariffModel>,
}

impl SweepSpec {
    pub fn validate(&self) -> Result<()> {
        if self.values.is_empty() {
            return Err(Error::invalid(Module::Sensitivity, "sweep", "no values"));
        }
        self.values.iter().try_for_each(|v| self.parameter.check(*v))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub value: f64,
    pub u_opt: f64,
    pub threshold: Option<f64>,
    pub relative_objective: f64,
}

impl SweepRow {
    fn from_result(value: f64, r: &OptimizationResult) -> Self {
        SweepRow {
            value,
            u_opt: r.u_opt,
            threshold: r.threshold,
            relative_objective: r.relative_objective,
        }
    }
}

/// One optimisation per sweep value; rows follow the order of `spec.values`.
pub fn sweep(spec: &SweepSpec, series: &IntervalSeries) -> Result<Vec<SweepRow>> {
    sweep_with(spec, series, Execution::default())
}

pub fn sweep_with(spec: &SweepSpec, series: &IntervalSeries, exec: Execution) -> Result<Vec<SweepRow>> {
    spec.validate()?;
    exec.map_slice(&spec.values, |&value| {
        let setup = spec.parameter.apply(&spec.setup, value)?;
        let model = ObjectiveModel::new(spec.objective, &setup, &spec.workload, spec.tariff.as_ref())?;
        let r = optimise_model(series, &model, Execution::Sequential)?;
        Ok(SweepRow::from_result(value, &r))
    })
    .into_iter()
    .collect()
}

/// Emission optimum with the embedded rate multiplied by each factor.
pub fn embedded_variation(
    series: &IntervalSeries,
    setup: &ClusterSetup,
    workload: &WorkloadScenario,
    factors: &[f64],
) -> Result<Vec<SweepRow>> {
    sweep(
        &SweepSpec {
            parameter: SweepParam::EmbeddedFactor,
            values: factors.to_vec(),
            setup: setup.clone(),
            workload: workload.clone(),
            objective: ObjectiveKind::Emission,
            tariff: None,
        },
        series,
    )
}

/// A permanently lowered clock frequency: less power per core, less
/// performance per core.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FreqLimitSpec {
    /// Fractional reduction of full-load power.
    pub power_reduction: f64,
    /// Fractional drop in per-core performance.
    pub performance_drop: f64,
}

impl Default for FreqLimitSpec {
    fn default() -> Self {
        FreqLimitSpec {
            power_reduction: 0.40,
            performance_drop: 0.19,
        }
    }
}

impl FreqLimitSpec {
    pub fn validate(&self) -> Result<()> {
        for (what, v) in [
            ("power reduction", self.power_reduction),
            ("performance drop", self.performance_drop),
        ] {
            if !(0.0..1.0).contains(&v) {
                return Err(Error::invalid(
                    Module::Sensitivity,
                    "frequency limit",
                    format!("{what} {v} must lie in [0, 1)"),
                ));
            }
        }
        Ok(())
    }

    /// Extra hardware needed to keep the compute output: `1 / (1 - drop)`.
    pub fn hardware_scale(&self) -> f64 {
        1.0 / (1.0 - self.performance_drop)
    }

    /// Setup running at the limited clock. Idle power is left unchanged.
    pub fn limited_setup(&self, setup: &ClusterSetup) -> Result<ClusterSetup> {
        self.validate()?;
        let limited = ClusterSetup {
            name: format!("{}_freq_limited", setup.name),
            p_max_w: (1.0 - self.power_reduction) * setup.p_max_w,
            ..setup.clone()
        };
        limited.validate()?;
        Ok(limited)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FreqComparison {
    pub spec: FreqLimitSpec,
    pub hardware_scale: f64,
    /// E_total of the nominal setup at constant operation, kg CO2.
    pub nominal_total: f64,
    /// E_total of the clock-limited, enlarged setup at constant operation, kg CO2.
    pub limited_total: f64,
    /// limited_total / nominal_total.
    pub ratio: f64,
}

fn limited_model(setup: &ClusterSetup, workload: &WorkloadScenario, spec: &FreqLimitSpec) -> Result<ObjectiveModel> {
    let mut model = ObjectiveModel::emission(&spec.limited_setup(setup)?, workload)?;
    model.n_cores *= spec.hardware_scale();
    Ok(model)
}

/// Constant operation at a limited clock, with hardware added to keep the
/// compute target, relative to nominal constant operation.
pub fn freq_limited_emission(
    series: &IntervalSeries,
    setup: &ClusterSetup,
    workload: &WorkloadScenario,
    spec: &FreqLimitSpec,
) -> Result<FreqComparison> {
    spec.validate()?;
    let all_run = vec![true; series.len()];
    let nominal = evaluate_mask(series, &ObjectiveModel::emission(setup, workload)?, &all_run)?;
    let limited = evaluate_mask(series, &limited_model(setup, workload, spec)?, &all_run)?;
    Ok(FreqComparison {
        spec: *spec,
        hardware_scale: spec.hardware_scale(),
        nominal_total: nominal.total(),
        limited_total: limited.total(),
        ratio: limited.total() / nominal.total(),
    })
}

/// Dynamic operation of the clock-limited setup. Returns the optimisation on
/// the enlarged limited cluster and its optimum relative to nominal constant
/// operation.
pub fn freq_limited_dynamic(
    series: &IntervalSeries,
    setup: &ClusterSetup,
    workload: &WorkloadScenario,
    spec: &FreqLimitSpec,
) -> Result<(OptimizationResult, f64)> {
    let all_run = vec![true; series.len()];
    let nominal = evaluate_mask(series, &ObjectiveModel::emission(setup, workload)?, &all_run)?;
    let r = optimise_model(series, &limited_model(setup, workload, spec)?, Execution::default())?;
    let ratio = r.breakdown.total() / nominal.total();
    Ok((r, ratio))
}
