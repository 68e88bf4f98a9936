use std::fs::File;
use std::io::{Read, Write};
use std::path::Path;

use chrono::{Datelike, NaiveDate};

use super::{GenerationRecord, RenewableShareTable, YearShare};
use crate::error::{Error, Result};

/// Minimum fraction of a calendar year that must be covered.
pub const MIN_YEAR_COVERAGE: f64 = 0.95;

const RENEWABLE: &[&str] = &[
    "biomass",
    "geothermal",
    "hydro_run_of_river",
    "hydro_water_reservoir",
    "solar",
    "wind_offshore",
    "wind_onshore",
];

/// Canonical source names counted as renewable by default.
pub fn renewable_sources() -> &'static [&'static str] {
    RENEWABLE
}

/// One year of generation with the blended intensity of each record.
#[derive(Debug, Clone, Copy)]
pub struct YearInput<'a> {
    pub year: i32,
    pub generation: &'a [GenerationRecord],
    /// Aligned with `generation`, kg CO2/MWh.
    pub intensities: &'a [f64],
}

fn hours_in_year(year: i32) -> f64 {
    let days = NaiveDate::from_ymd_opt(year, 12, 31)
        .map(|d| d.ordinal())
        .unwrap_or(365);
    days as f64 * 24.0
}

/// Renewable share and generation-weighted mean intensity per year.
pub fn yearly_summary(
    inputs: &[YearInput<'_>],
    renewable: &[&str],
    allow_partial: bool,
) -> Result<RenewableShareTable> {
    let mut rows = Vec::with_capacity(inputs.len());
    for input in inputs {
        if input.generation.len() != input.intensities.len() {
            return Err(Error::Invariant(format!(
                "year {}: {} records but {} intensities",
                input.year,
                input.generation.len(),
                input.intensities.len()
            )));
        }
        let covered: f64 = input
            .generation
            .iter()
            .filter(|r| r.start.year() == input.year)
            .map(|r| r.duration_h)
            .sum();
        let coverage = covered / hours_in_year(input.year);
        if coverage < MIN_YEAR_COVERAGE && !allow_partial {
            return Err(Error::PartialYear {
                year: input.year,
                coverage,
            });
        }
        let mut total = 0.0;
        let mut renewable_mwh = 0.0;
        let mut weighted_intensity = 0.0;
        for (rec, intensity) in input.generation.iter().zip(input.intensities) {
            let gen = rec.total_generation();
            total += gen;
            weighted_intensity += gen * intensity;
            renewable_mwh += rec
                .per_source_mwh
                .iter()
                .filter(|(s, v)| **v > 0.0 && renewable.contains(&s.as_str()))
                .map(|(_, v)| *v)
                .sum::<f64>();
        }
        if total <= 0.0 {
            return Err(Error::ZeroGeneration(format!("year {}", input.year)));
        }
        rows.push(YearShare {
            year: input.year,
            renewable_share: renewable_mwh / total * 100.0,
            mean_intensity: weighted_intensity / total,
        });
    }
    RenewableShareTable::new(rows)
}

const SHARE_HEADER: [&str; 3] = ["year", "renewable_share_pct", "mean_intensity_kg_per_mwh"];

pub fn write_share_table(table: &RenewableShareTable, writer: impl Write) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(SHARE_HEADER)?;
    for r in table.rows() {
        w.write_record([
            r.year.to_string(),
            r.renewable_share.to_string(),
            r.mean_intensity.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_share_table(reader: impl Read) -> Result<RenewableShareTable> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    if rdr.headers()?.iter().ne(SHARE_HEADER.iter().copied()) {
        return Err(Error::MalformedRow {
            row: 0,
            msg: format!("expected header {}", SHARE_HEADER.join(",")),
        });
    }
    let mut rows = Vec::new();
    for (idx, rec) in rdr.records().enumerate() {
        let row = idx + 1;
        let rec = rec?;
        let bad = |i: usize| Error::MalformedRow {
            row,
            msg: format!("bad value {:?} in column {}", &rec[i], SHARE_HEADER[i]),
        };
        rows.push(YearShare {
            year: rec[0].parse().map_err(|_| bad(0))?,
            renewable_share: rec[1].parse().map_err(|_| bad(1))?,
            mean_intensity: rec[2].parse().map_err(|_| bad(2))?,
        });
    }
    RenewableShareTable::new(rows)
}

impl RenewableShareTable {
    pub fn from_path(path: impl AsRef<Path>) -> Result<Self> {
        read_share_table(File::open(path)?)
    }
}
