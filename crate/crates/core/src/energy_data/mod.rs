//! Electricity data ingestion: generation mix, emission factors and spot prices
//! combined into a validated [`IntervalSeries`].

mod blend;
mod canonical;
mod parse;
mod summary;

use std::collections::BTreeMap;

use chrono::{DateTime, Datelike, Duration, Utc};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Module, Result};

pub use blend::{blend_intensity, fill_gaps, interval_intensities, MAX_INTERPOLATED_GAP_H};
pub use canonical::{read_intervals, read_intervals_path, write_intervals, write_intervals_path};
pub use parse::{
    canonical_source_name, is_storage_source, parse_factors, parse_generation, parse_prices,
    InputFormat,
};
pub use summary::{
    read_share_table, renewable_sources, write_share_table, yearly_summary, YearInput,
};

/// Net generation by source for one interval.
#[derive(Debug, Clone, PartialEq)]
pub struct GenerationRecord {
    pub start: DateTime<Utc>,
    pub duration_h: f64,
    /// Canonical source name to net generation in MWh.
    pub per_source_mwh: BTreeMap<String, f64>,
}

impl GenerationRecord {
    pub fn end(&self) -> DateTime<Utc> {
        self.start + hours(self.duration_h)
    }

    /// Sum of non-negative generation terms. Storage charging is not generation.
    pub fn total_generation(&self) -> f64 {
        self.per_source_mwh.values().filter(|v| **v > 0.0).sum()
    }
}

/// Emission factors (kg CO2 per MWh) per canonical source name.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct EmissionFactorTable {
    pub year: Option<i32>,
    pub per_source: BTreeMap<String, f64>,
}

impl EmissionFactorTable {
    pub fn factor(&self, source: &str) -> Option<f64> {
        self.per_source.get(source).copied()
    }
}

/// Factor tables keyed by year. A table without a year applies to every year.
#[derive(Debug, Clone, Default)]
pub struct FactorSchedule {
    any_year: Option<EmissionFactorTable>,
    by_year: BTreeMap<i32, EmissionFactorTable>,
}

impl FactorSchedule {
    pub fn new(tables: impl IntoIterator<Item = EmissionFactorTable>) -> Result<Self> {
        let mut schedule = FactorSchedule::default();
        for table in tables {
            if let Some(v) = table.per_source.values().find(|v| !(v.is_finite() && **v >= 0.0)) {
                return Err(Error::invalid(
                    Module::EnergyData,
                    "emission factor",
                    format!("{v} is negative or not finite"),
                ));
            }
            match table.year {
                Some(y) => {
                    schedule.by_year.insert(y, table);
                }
                None => schedule.any_year = Some(table),
            }
        }
        if schedule.any_year.is_none() && schedule.by_year.is_empty() {
            return Err(Error::invalid(
                Module::EnergyData,
                "emission factors",
                "no factor table given",
            ));
        }
        Ok(schedule)
    }

    /// Table for a calendar year: exact match, else the year-independent table,
    /// else the nearest year (earlier wins a tie).
    pub fn for_year(&self, year: i32) -> Result<&EmissionFactorTable> {
        if let Some(t) = self.by_year.get(&year) {
            return Ok(t);
        }
        if let Some(t) = &self.any_year {
            return Ok(t);
        }
        self.by_year
            .iter()
            .min_by_key(|(y, _)| ((**y - year).abs(), **y))
            .map(|(_, t)| t)
            .ok_or(Error::MissingFactorYear(year))
    }
}

/// Day-ahead price for one delivery period.
#[derive(Debug, Clone, PartialEq)]
pub struct PriceRecord {
    pub start: DateTime<Utc>,
    pub duration_h: f64,
    /// EUR/MWh; may be negative.
    pub price: f64,
}

impl PriceRecord {
    pub fn end(&self) -> DateTime<Utc> {
        self.start + hours(self.duration_h)
    }
}

/// Which per-interval quantity drives a dispatch decision.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Metric {
    /// Carbon intensity, kg CO2/MWh.
    Intensity,
    /// Spot price, EUR/MWh.
    Price,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Interval {
    pub start: DateTime<Utc>,
    pub duration_h: f64,
    /// kg CO2/MWh
    pub intensity: f64,
    /// EUR/MWh
    pub price: f64,
}

impl Interval {
    pub fn end(&self) -> DateTime<Utc> {
        self.start + hours(self.duration_h)
    }

    pub fn metric(&self, metric: Metric) -> f64 {
        match metric {
            Metric::Intensity => self.intensity,
            Metric::Price => self.price,
        }
    }
}

/// Chronologically ordered, non-overlapping intervals with intensity and price.
#[derive(Debug, Clone, PartialEq)]
pub struct IntervalSeries {
    intervals: Vec<Interval>,
    t_total: f64,
}

impl IntervalSeries {
    pub fn new(intervals: Vec<Interval>) -> Result<Self> {
        if intervals.is_empty() {
            return Err(Error::EmptySeries);
        }
        for (i, iv) in intervals.iter().enumerate() {
            if !(iv.duration_h.is_finite() && iv.duration_h > 0.0) {
                return Err(Error::MalformedRow {
                    row: i,
                    msg: format!("duration {} h is not positive", iv.duration_h),
                });
            }
            if !(iv.intensity.is_finite() && iv.intensity >= 0.0) {
                return Err(Error::MalformedRow {
                    row: i,
                    msg: format!("intensity {} is negative or not finite", iv.intensity),
                });
            }
            if !iv.price.is_finite() {
                return Err(Error::MalformedRow {
                    row: i,
                    msg: format!("price {} is not finite", iv.price),
                });
            }
        }
        for pair in intervals.windows(2) {
            if pair[1].start < pair[0].end() {
                return Err(Error::Overlap(pair[1].start.to_rfc3339()));
            }
        }
        let t_total = intervals.iter().map(|iv| iv.duration_h).sum();
        Ok(IntervalSeries { intervals, t_total })
    }

    pub fn intervals(&self) -> &[Interval] {
        &self.intervals
    }

    pub fn len(&self) -> usize {
        self.intervals.len()
    }

    pub fn is_empty(&self) -> bool {
        self.intervals.is_empty()
    }

    /// Total covered time in hours.
    pub fn t_total(&self) -> f64 {
        self.t_total
    }

    pub fn metric_values(&self, metric: Metric) -> Vec<f64> {
        self.intervals.iter().map(|iv| iv.metric(metric)).collect()
    }

    /// Duration-weighted mean of a metric.
    pub fn time_weighted_mean(&self, metric: Metric) -> f64 {
        self.intervals
            .iter()
            .map(|iv| iv.metric(metric) * iv.duration_h)
            .sum::<f64>()
            / self.t_total
    }

    /// Calendar year (UTC) containing the midpoint of the covered span.
    pub fn year(&self) -> i32 {
        let first = self.intervals[0].start;
        let last = self.intervals[self.intervals.len() - 1].end();
        (first + (last - first) / 2).year()
    }

    /// Restricts the series to intervals starting in `[from, to)`.
    pub fn slice_time(&self, from: DateTime<Utc>, to: DateTime<Utc>) -> Result<Self> {
        let intervals = self
            .intervals
            .iter()
            .filter(|iv| iv.start >= from && iv.start < to)
            .copied()
            .collect();
        IntervalSeries::new(intervals)
    }
}

/// Per-year renewable share and energy-weighted mean intensity.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct YearShare {
    pub year: i32,
    /// Percent of net generation.
    pub renewable_share: f64,
    /// kg CO2/MWh
    pub mean_intensity: f64,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct RenewableShareTable {
    rows: Vec<YearShare>,
}

impl RenewableShareTable {
    /// Rows are sorted by year; years must be contiguous.
    pub fn new(mut rows: Vec<YearShare>) -> Result<Self> {
        rows.sort_by_key(|r| r.year);
        for r in &rows {
            if !(0.0..=100.0).contains(&r.renewable_share) {
                return Err(Error::invalid(
                    Module::EnergyData,
                    "renewable share",
                    format!("{} for year {} is outside [0, 100]", r.renewable_share, r.year),
                ));
            }
            if !(r.mean_intensity.is_finite() && r.mean_intensity >= 0.0) {
                return Err(Error::invalid(
                    Module::EnergyData,
                    "mean intensity",
                    format!("{} for year {}", r.mean_intensity, r.year),
                ));
            }
        }
        for pair in rows.windows(2) {
            if pair[1].year != pair[0].year + 1 {
                return Err(Error::invalid(
                    Module::EnergyData,
                    "share table",
                    format!("years {} and {} are not contiguous", pair[0].year, pair[1].year),
                ));
            }
        }
        Ok(RenewableShareTable { rows })
    }

    pub fn rows(&self) -> &[YearShare] {
        &self.rows
    }

    pub fn get(&self, year: i32) -> Option<&YearShare> {
        self.rows.iter().find(|r| r.year == year)
    }
}

pub(crate) fn hours(h: f64) -> Duration {
    Duration::milliseconds((h * 3_600_000.0).round() as i64)
}
