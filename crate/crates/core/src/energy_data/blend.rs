use std::collections::BTreeSet;

use chrono::Datelike;

use super::{hours, FactorSchedule, GenerationRecord, Interval, IntervalSeries, PriceRecord};
use crate::error::{Error, Result};

/// Gaps strictly shorter than this are interpolated; longer ones abort ingestion.
pub const MAX_INTERPOLATED_GAP_H: f64 = 1.0;

const TIME_EPS_H: f64 = 1.0e-6;
const MAX_LISTED: usize = 10;

fn list_truncated(mut items: Vec<String>) -> Vec<String> {
    if items.len() > MAX_LISTED {
        let rest = items.len() - MAX_LISTED;
        items.truncate(MAX_LISTED);
        items.push(format!("... and {rest} more"));
    }
    items
}

/// Generation-weighted carbon intensity per record, kg CO2/MWh.
///
/// Only non-negative generation terms enter numerator and denominator. The
/// factor table is chosen by the calendar year of the interval start.
pub fn interval_intensities(
    records: &[GenerationRecord],
    factors: &FactorSchedule,
) -> Result<Vec<f64>> {
    let mut missing = BTreeSet::new();
    let mut out = Vec::with_capacity(records.len());
    for rec in records {
        let table = factors.for_year(rec.start.year())?;
        let mut weighted = 0.0;
        let mut total = 0.0;
        for (source, &mwh) in &rec.per_source_mwh {
            let Some(factor) = table.factor(source) else {
                missing.insert(source.clone());
                continue;
            };
            if mwh > 0.0 {
                weighted += mwh * factor;
                total += mwh;
            }
        }
        if !missing.is_empty() {
            continue;
        }
        if total <= 0.0 {
            return Err(Error::ZeroGeneration(rec.start.to_rfc3339()));
        }
        out.push(weighted / total);
    }
    if !missing.is_empty() {
        return Err(Error::MissingFactor(missing.into_iter().collect()));
    }
    Ok(out)
}

/// Combines generation, emission factors and prices into an [`IntervalSeries`].
///
/// A price record matches a generation interval when it fully covers it, so
/// hourly prices align with quarter-hourly generation.
pub fn blend_intensity(
    records: &[GenerationRecord],
    factors: &FactorSchedule,
    prices: &[PriceRecord],
) -> Result<IntervalSeries> {
    if records.is_empty() {
        return Err(Error::EmptySeries);
    }
    let intensities = interval_intensities(records, factors)?;

    let mut sorted_prices: Vec<&PriceRecord> = prices.iter().collect();
    sorted_prices.sort_by_key(|p| p.start);

    let mut unmatched = Vec::new();
    let mut intervals = Vec::with_capacity(records.len());
    for (rec, intensity) in records.iter().zip(intensities) {
        let idx = sorted_prices.partition_point(|p| p.start <= rec.start);
        let covering = idx
            .checked_sub(1)
            .map(|i| sorted_prices[i])
            .filter(|p| p.end() >= rec.end());
        match covering {
            Some(p) => intervals.push(Interval {
                start: rec.start,
                duration_h: rec.duration_h,
                intensity,
                price: p.price,
            }),
            None => unmatched.push(rec.start.to_rfc3339()),
        }
    }
    if !unmatched.is_empty() {
        return Err(Error::UnmatchedPrice(list_truncated(unmatched)));
    }
    IntervalSeries::new(fill_gaps(intervals)?)
}

/// Fills gaps shorter than one hour by linear interpolation of intensity and
/// price, using the preceding interval's duration as step. Input must be sorted.
pub fn fill_gaps(intervals: Vec<Interval>) -> Result<Vec<Interval>> {
    let mut out: Vec<Interval> = Vec::with_capacity(intervals.len());
    for next in intervals {
        if let Some(prev) = out.last().copied() {
            let gap_h = (next.start - prev.end()).num_milliseconds() as f64 / 3_600_000.0;
            if gap_h < -TIME_EPS_H {
                return Err(Error::Overlap(next.start.to_rfc3339()));
            }
            if gap_h > TIME_EPS_H {
                if gap_h >= MAX_INTERPOLATED_GAP_H - TIME_EPS_H {
                    return Err(Error::Gap {
                        after: prev.start.to_rfc3339(),
                        hours: gap_h,
                    });
                }
                let span_h = (next.start - prev.start).num_milliseconds() as f64 / 3_600_000.0;
                let mut offset_h = prev.duration_h;
                let mut remaining = gap_h;
                while remaining > TIME_EPS_H {
                    let duration_h = prev.duration_h.min(remaining);
                    let f = offset_h / span_h;
                    out.push(Interval {
                        start: prev.start + hours(offset_h),
                        duration_h,
                        intensity: prev.intensity + f * (next.intensity - prev.intensity),
                        price: prev.price + f * (next.price - prev.price),
                    });
                    offset_h += duration_h;
                    remaining -= duration_h;
                }
            }
        }
        out.push(next);
    }
    Ok(out)
}
