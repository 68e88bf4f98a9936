//! Carrying an optimised threshold into other years.
//!
//! Yearly mean intensity is regressed on the renewable share; a threshold found
//! for one year is shifted along that line to the share of another year, and the
//! utilisation it achieves there is compared with the original target.

use serde::{Deserialize, Serialize};

use crate::dispatch::policy_from_utilisation;
use crate::energy_data::{IntervalSeries, Metric, RenewableShareTable};
use crate::error::{Error, Module, Result};

/// Ordinary least squares fit `mean_intensity = intercept + slope · share`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ShareRegression {
    /// kg CO2/MWh per percentage point of renewable share (negative when
    /// renewables lower the intensity).
    pub slope: f64,
    /// Standard error of the slope.
    pub slope_std: f64,
    pub intercept: f64,
    pub r_squared: f64,
    pub first_year: i32,
    pub last_year: i32,
}

pub fn fit_share_regression(table: &RenewableShareTable) -> Result<ShareRegression> {
    let rows = table.rows();
    let n = rows.len();
    if n < 3 {
        return Err(Error::DegenerateRegression(format!(
            "need at least 3 years, got {n}"
        )));
    }
    let nf = n as f64;
    let mean_x = rows.iter().map(|r| r.renewable_share).sum::<f64>() / nf;
    let mean_y = rows.iter().map(|r| r.mean_intensity).sum::<f64>() / nf;
    let (mut sxx, mut sxy, mut syy) = (0.0, 0.0, 0.0);
    for r in rows {
        let dx = r.renewable_share - mean_x;
        let dy = r.mean_intensity - mean_y;
        sxx += dx * dx;
        sxy += dx * dy;
        syy += dy * dy;
    }
    if sxx <= f64::EPSILON * mean_x.abs().max(1.0) {
        return Err(Error::DegenerateRegression(
            "renewable share is constant across years".into(),
        ));
    }
    let slope = sxy / sxx;
    let intercept = mean_y - slope * mean_x;
    let residual: f64 = rows
        .iter()
        .map(|r| {
            let e = r.mean_intensity - (intercept + slope * r.renewable_share);
            e * e
        })
        .sum();
    let slope_std = (residual / (nf - 2.0) / sxx).sqrt();
    let r_squared = if syy > 0.0 { 1.0 - residual / syy } else { 1.0 };
    Ok(ShareRegression {
        slope,
        slope_std,
        intercept,
        r_squared,
        first_year: rows[0].year,
        last_year: rows[n - 1].year,
    })
}

fn check_share(what: &'static str, share: f64) -> Result<()> {
    if (0.0..=100.0).contains(&share) {
        Ok(())
    } else {
        Err(Error::invalid(
            Module::Validation,
            what,
            format!("{share} is outside [0, 100]"),
        ))
    }
}

/// `threshold + slope · (share_target − share_base)`.
pub fn extrapolate_threshold(
    threshold_base: f64,
    share_base: f64,
    share_target: f64,
    regression: &ShareRegression,
) -> Result<f64> {
    check_share("base share", share_base)?;
    check_share("target share", share_target)?;
    Ok(threshold_base + regression.slope * (share_target - share_base))
}

/// Duration-weighted fraction of intervals whose metric is at or below `threshold`.
pub fn achieved_utilisation(series: &IntervalSeries, threshold: f64, metric: Metric) -> f64 {
    let run: f64 = series
        .intervals()
        .iter()
        .filter(|iv| iv.metric(metric) <= threshold)
        .map(|iv| iv.duration_h)
        .sum();
    let u = run / series.t_total();
    if u == 0.0 {
        log::warn!("threshold {threshold} lies below every interval: utilisation 0");
    }
    u
}

/// Threshold that realises `u_target` on this series (same quantile convention
/// as the optimiser).
pub fn matching_threshold(series: &IntervalSeries, u_target: f64, metric: Metric) -> Result<f64> {
    Ok(policy_from_utilisation(series, metric, u_target)?.threshold)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub base_year: i32,
    pub target_year: i32,
    pub share_base: f64,
    pub share_target: f64,
    pub regression: ShareRegression,
    /// Threshold optimised on the base year.
    pub x_base: f64,
    /// Base threshold shifted to the target year's renewable share.
    pub x_extra: f64,
    /// Optimal utilisation in the base year.
    pub u_target: f64,
    /// Utilisation reached in the target year with `x_extra`.
    pub u_extra: f64,
    /// `u_extra − u_target`.
    pub u_deviation: f64,
    /// Threshold reaching `u_target` in the target year.
    pub x_target: f64,
    /// `|x_extra − x_target| / x_target`.
    pub x_relative_deviation: f64,
}

impl ValidationReport {
    #[allow(clippy::too_many_arguments)]
    pub fn build(
        target_series: &IntervalSeries,
        metric: Metric,
        base_year: i32,
        target_year: i32,
        shares: &RenewableShareTable,
        regression: ShareRegression,
        x_base: f64,
        u_target: f64,
    ) -> Result<Self> {
        let share = |year: i32| {
            shares
                .get(year)
                .map(|r| r.renewable_share)
                .ok_or_else(|| Error::invalid(Module::Validation, "share table", format!("no row for year {year}")))
        };
        let share_base = share(base_year)?;
        let share_target = share(target_year)?;
        let x_extra = extrapolate_threshold(x_base, share_base, share_target, &regression)?;
        let u_extra = achieved_utilisation(target_series, x_extra, metric);
        let x_target = matching_threshold(target_series, u_target, metric)?;
        Ok(ValidationReport {
            base_year,
            target_year,
            share_base,
            share_target,
            regression,
            x_base,
            x_extra,
            u_target,
            u_extra,
            u_deviation: u_extra - u_target,
            x_target,
            x_relative_deviation: (x_extra - x_target).abs() / x_target,
        })
    }
}
