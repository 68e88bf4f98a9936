//! Adapters for raw generation, price and emission-factor exports.
//!
//! CSV generation files carry one timestamp column (RFC 3339 with explicit
//! offset), an optional `duration_h` column and one column per source holding
//! net generation in MWh for that interval. JSON files follow the public
//! energy-charts API layout (`unix_seconds` plus per-source series in MW).

use std::collections::{BTreeMap, HashMap};
use std::io::Read;

use chrono::{DateTime, FixedOffset, Utc};
use serde::Deserialize;

use super::{EmissionFactorTable, GenerationRecord, PriceRecord};
use crate::error::{Error, Module, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum InputFormat {
    Csv,
    Json,
}

impl std::str::FromStr for InputFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "csv" => Ok(InputFormat::Csv),
            "json" => Ok(InputFormat::Json),
            other => Err(Error::invalid(Module::EnergyData, "format", other.to_string())),
        }
    }
}

/// Columns that appear next to generation in public exports but are not generation.
const NON_GENERATION: &[&str] = &[
    "load",
    "residual_load",
    "renewable_share_of_generation",
    "renewable_share_of_load",
    "cross_border_electricity_trading",
];

/// Lowercase, unit suffix stripped, non-alphanumerics collapsed to `_`.
pub fn canonical_source_name(raw: &str) -> String {
    let base = match raw.find('(') {
        Some(i) => &raw[..i],
        None => raw,
    };
    let mut out = String::with_capacity(base.len());
    for c in base.trim().chars() {
        if c.is_alphanumeric() {
            out.extend(c.to_lowercase());
        } else if !out.ends_with('_') {
            out.push('_');
        }
    }
    out.trim_matches('_').to_string()
}

/// Sources whose net value may legitimately be negative (storage charging).
pub fn is_storage_source(name: &str) -> bool {
    ["pumped", "storage", "battery", "consumption"]
        .iter()
        .any(|k| name.contains(k))
}

fn parse_timestamp(row: usize, raw: &str) -> Result<DateTime<Utc>> {
    let raw = raw.trim();
    DateTime::parse_from_rfc3339(raw)
        .or_else(|_| DateTime::<FixedOffset>::parse_from_str(raw, "%Y-%m-%dT%H:%M%:z"))
        .or_else(|_| DateTime::<FixedOffset>::parse_from_str(raw, "%Y-%m-%d %H:%M:%S%:z"))
        .map(|t| t.with_timezone(&Utc))
        .map_err(|_| Error::Timestamp {
            row,
            value: raw.to_string(),
        })
}

fn parse_number(row: usize, column: &str, raw: &str) -> Result<f64> {
    let raw = raw.trim();
    if raw.is_empty() {
        return Err(Error::MalformedRow {
            row,
            msg: format!("empty value in column {column:?}"),
        });
    }
    match raw.parse::<f64>() {
        Ok(v) if v.is_finite() => Ok(v),
        _ => Err(Error::MalformedRow {
            row,
            msg: format!("{raw:?} in column {column:?} is not a finite number"),
        }),
    }
}

/// Most common positive spacing between consecutive sorted timestamps, in hours.
fn infer_duration(starts: &[DateTime<Utc>]) -> f64 {
    let mut counts: BTreeMap<i64, usize> = BTreeMap::new();
    for pair in starts.windows(2) {
        let secs = (pair[1] - pair[0]).num_seconds();
        if secs > 0 {
            *counts.entry(secs).or_default() += 1;
        }
    }
    counts
        .into_iter()
        .max_by_key(|(secs, n)| (*n, -*secs))
        .map(|(secs, _)| secs as f64 / 3600.0)
        .unwrap_or(0.25)
}

fn check_positive_duration(row: usize, d: f64) -> Result<f64> {
    if d.is_finite() && d > 0.0 {
        Ok(d)
    } else {
        Err(Error::MalformedRow {
            row,
            msg: format!("duration {d} h is not positive"),
        })
    }
}

/// Sorts rows by start time and rejects duplicates. `rows` holds (row index, start, payload).
fn sort_unique<T>(mut rows: Vec<(usize, DateTime<Utc>, T)>) -> Result<Vec<(usize, DateTime<Utc>, T)>> {
    rows.sort_by_key(|(row, t, _)| (*t, *row));
    for pair in rows.windows(2) {
        if pair[0].1 == pair[1].1 {
            return Err(Error::DuplicateTimestamp {
                row: pair[1].0,
                timestamp: pair[1].1.to_rfc3339(),
            });
        }
    }
    Ok(rows)
}

fn read_all(mut reader: impl Read) -> Result<Vec<u8>> {
    let mut buf = Vec::new();
    reader.read_to_end(&mut buf)?;
    Ok(buf)
}

/// Parses a raw generation export. Records come back sorted by start time.
pub fn parse_generation(reader: impl Read, format: InputFormat) -> Result<Vec<GenerationRecord>> {
    let rows = match format {
        InputFormat::Csv => generation_rows_csv(reader)?,
        InputFormat::Json => generation_rows_json(reader)?,
    };
    let rows = sort_unique(rows)?;
    let starts: Vec<_> = rows.iter().map(|(_, t, _)| *t).collect();
    let inferred = infer_duration(&starts);

    let mut records = Vec::with_capacity(rows.len());
    for (row, start, (duration, values, in_mw)) in rows {
        let duration_h = check_positive_duration(row, duration.unwrap_or(inferred))?;
        let mut per_source_mwh = BTreeMap::new();
        for (name, v) in values {
            if v < 0.0 && !is_storage_source(&name) {
                return Err(Error::NegativeGeneration {
                    row,
                    source_name: name,
                    value: v,
                });
            }
            let mwh = if in_mw { v * duration_h } else { v };
            per_source_mwh.insert(name, mwh);
        }
        records.push(GenerationRecord {
            start,
            duration_h,
            per_source_mwh,
        });
    }
    Ok(records)
}

type GenRow = (usize, DateTime<Utc>, (Option<f64>, Vec<(String, f64)>, bool));

fn generation_rows_csv(reader: impl Read) -> Result<Vec<GenRow>> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let headers = rdr.headers()?.clone();
    if headers.len() < 2 {
        return Err(Error::MalformedRow {
            row: 0,
            msg: "header needs a timestamp column and at least one source".into(),
        });
    }
    let names: Vec<String> = headers.iter().map(canonical_source_name).collect();
    let duration_col = names.iter().position(|n| n == "duration_h");
    let source_cols: Vec<usize> = (1..names.len())
        .filter(|i| Some(*i) != duration_col && !NON_GENERATION.contains(&names[*i].as_str()))
        .collect();

    let mut rows = Vec::new();
    for (idx, rec) in rdr.records().enumerate() {
        let row = idx + 1;
        let rec = rec.map_err(|e| Error::MalformedRow {
            row,
            msg: e.to_string(),
        })?;
        if rec.len() != names.len() {
            return Err(Error::MalformedRow {
                row,
                msg: format!("expected {} fields, found {}", names.len(), rec.len()),
            });
        }
        let start = parse_timestamp(row, &rec[0])?;
        let duration = duration_col
            .map(|c| parse_number(row, "duration_h", &rec[c]))
            .transpose()?;
        let values = source_cols
            .iter()
            .map(|&c| Ok((names[c].clone(), parse_number(row, &names[c], &rec[c])?)))
            .collect::<Result<Vec<_>>>()?;
        rows.push((row, start, (duration, values, false)));
    }
    Ok(rows)
}

#[derive(Deserialize)]
struct PowerJson {
    unix_seconds: Vec<i64>,
    production_types: Vec<ProductionType>,
}

#[derive(Deserialize)]
struct ProductionType {
    name: String,
    data: Vec<Option<f64>>,
}

fn unix_to_utc(row: usize, secs: i64) -> Result<DateTime<Utc>> {
    DateTime::from_timestamp(secs, 0).ok_or(Error::Timestamp {
        row,
        value: secs.to_string(),
    })
}

fn generation_rows_json(reader: impl Read) -> Result<Vec<GenRow>> {
    let parsed: PowerJson = serde_json::from_slice(&read_all(reader)?)?;
    let n = parsed.unix_seconds.len();
    let series: Vec<(String, &[Option<f64>])> = parsed
        .production_types
        .iter()
        .map(|p| (canonical_source_name(&p.name), p.data.as_slice()))
        .filter(|(name, _)| !NON_GENERATION.contains(&name.as_str()))
        .collect();
    for (name, data) in &series {
        if data.len() != n {
            return Err(Error::MalformedRow {
                row: 0,
                msg: format!("series {name:?} has {} points, expected {n}", data.len()),
            });
        }
    }
    let mut rows = Vec::with_capacity(n);
    for (i, &secs) in parsed.unix_seconds.iter().enumerate() {
        let row = i + 1;
        let start = unix_to_utc(row, secs)?;
        let values = series
            .iter()
            .map(|(name, data)| match data[i] {
                Some(v) if v.is_finite() => Ok((name.clone(), v)),
                _ => Err(Error::MalformedRow {
                    row,
                    msg: format!("missing value for {name:?}"),
                }),
            })
            .collect::<Result<Vec<_>>>()?;
        rows.push((row, start, (None, values, true)));
    }
    Ok(rows)
}

#[derive(Deserialize)]
struct PriceJson {
    unix_seconds: Vec<i64>,
    price: Vec<Option<f64>>,
}

/// Parses spot prices. CSV: timestamp column, optional `duration_h`, and a price
/// column (the first header containing "price", else the last column).
/// (row index, start, (explicit duration, price))
type PriceRow = (usize, DateTime<Utc>, (Option<f64>, f64));

pub fn parse_prices(reader: impl Read, format: InputFormat) -> Result<Vec<PriceRecord>> {
    let mut rows: Vec<PriceRow> = Vec::new();
    match format {
        InputFormat::Csv => {
            let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
            let names: Vec<String> = rdr.headers()?.iter().map(canonical_source_name).collect();
            if names.len() < 2 {
                return Err(Error::MalformedRow {
                    row: 0,
                    msg: "header needs a timestamp and a price column".into(),
                });
            }
            let duration_col = names.iter().position(|n| n == "duration_h");
            let price_col = names
                .iter()
                .skip(1)
                .position(|n| n.contains("price"))
                .map(|p| p + 1)
                .unwrap_or(names.len() - 1);
            for (idx, rec) in rdr.records().enumerate() {
                let row = idx + 1;
                let rec = rec.map_err(|e| Error::MalformedRow {
                    row,
                    msg: e.to_string(),
                })?;
                let start = parse_timestamp(row, &rec[0])?;
                let duration = duration_col
                    .map(|c| parse_number(row, "duration_h", &rec[c]))
                    .transpose()?;
                let price = parse_number(row, &names[price_col], &rec[price_col])?;
                rows.push((row, start, (duration, price)));
            }
        }
        InputFormat::Json => {
            let parsed: PriceJson = serde_json::from_slice(&read_all(reader)?)?;
            if parsed.price.len() != parsed.unix_seconds.len() {
                return Err(Error::MalformedRow {
                    row: 0,
                    msg: "price and unix_seconds lengths differ".into(),
                });
            }
            for (i, (&secs, p)) in parsed.unix_seconds.iter().zip(&parsed.price).enumerate() {
                let row = i + 1;
                let price = p.filter(|v| v.is_finite()).ok_or(Error::MalformedRow {
                    row,
                    msg: "missing price".into(),
                })?;
                rows.push((row, unix_to_utc(row, secs)?, (None, price)));
            }
        }
    }
    let rows = sort_unique(rows)?;
    let starts: Vec<_> = rows.iter().map(|(_, t, _)| *t).collect();
    let inferred = infer_duration(&starts);
    rows.into_iter()
        .map(|(row, start, (duration, price))| {
            Ok(PriceRecord {
                start,
                duration_h: check_positive_duration(row, duration.unwrap_or(inferred))?,
                price,
            })
        })
        .collect()
}

/// Parses an emission-factor file with header `source,kg_per_mwh`, optionally
/// preceded by a `year` column to hold several yearly tables in one file.
pub fn parse_factors(reader: impl Read) -> Result<Vec<EmissionFactorTable>> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let names: Vec<String> = rdr.headers()?.iter().map(canonical_source_name).collect();
    let col = |n: &str| names.iter().position(|h| h == n);
    let source_col = col("source").ok_or(Error::MalformedRow {
        row: 0,
        msg: "missing `source` column".into(),
    })?;
    let factor_col = col("kg_per_mwh").ok_or(Error::MalformedRow {
        row: 0,
        msg: "missing `kg_per_mwh` column".into(),
    })?;
    let year_col = col("year");

    let mut tables: HashMap<Option<i32>, BTreeMap<String, f64>> = HashMap::new();
    for (idx, rec) in rdr.records().enumerate() {
        let row = idx + 1;
        let rec = rec.map_err(|e| Error::MalformedRow {
            row,
            msg: e.to_string(),
        })?;
        let year = year_col
            .map(|c| {
                rec[c].trim().parse::<i32>().map_err(|_| Error::MalformedRow {
                    row,
                    msg: format!("bad year {:?}", &rec[c]),
                })
            })
            .transpose()?;
        let factor = parse_number(row, "kg_per_mwh", &rec[factor_col])?;
        if factor < 0.0 {
            return Err(Error::MalformedRow {
                row,
                msg: format!("negative emission factor {factor}"),
            });
        }
        let source = canonical_source_name(&rec[source_col]);
        if tables.entry(year).or_default().insert(source.clone(), factor).is_some() {
            return Err(Error::MalformedRow {
                row,
                msg: format!("duplicate factor for {source:?}"),
            });
        }
    }
    let mut out: Vec<_> = tables
        .into_iter()
        .map(|(year, per_source)| EmissionFactorTable { year, per_source })
        .collect();
    out.sort_by_key(|t| t.year);
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    const FOUR_ROWS: &str = "\
timestamp,Solar (MWh),Fossil hard coal
2024-06-01T00:00:00+02:00,0,500
2024-06-01T00:15:00+02:00,0,510
2024-06-01T00:45:00+02:00,10,490
2024-06-01T00:30:00+02:00,5,505
";

    #[test]
    fn canonical_names() {
        assert_eq!(canonical_source_name("Fossil brown coal / lignite"), "fossil_brown_coal_lignite");
        assert_eq!(canonical_source_name("Hydro Run-of-River (MW)"), "hydro_run_of_river");
        assert_eq!(canonical_source_name("  Solar "), "solar");
        assert!(is_storage_source("hydro_pumped_storage_consumption"));
        assert!(!is_storage_source("solar"));
    }

    #[test]
    fn csv_four_rows_two_sources() {
        let recs = parse_generation(FOUR_ROWS.as_bytes(), InputFormat::Csv).unwrap();
        assert_eq!(recs.len(), 4);
        assert!(recs.iter().all(|r| r.per_source_mwh.len() == 2));
        assert!(recs.windows(2).all(|w| w[0].start < w[1].start));
        assert_eq!(recs[0].duration_h, 0.25);
        assert_eq!(recs[2].per_source_mwh["solar"], 5.0);
        assert_eq!(recs[0].start.to_rfc3339(), "2024-05-31T22:00:00+00:00");
    }

    #[test]
    fn empty_cell_names_row() {
        let data = "t,solar,coal\n2024-01-01T00:00:00Z,1,2\n2024-01-01T00:15:00Z,,2\n";
        let err = parse_generation(data.as_bytes(), InputFormat::Csv).unwrap_err();
        match err {
            Error::MalformedRow { row, msg } => {
                assert_eq!(row, 2);
                assert!(msg.contains("solar"));
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn timestamp_without_offset_rejected() {
        let data = "t,solar\n2024-01-01T00:00:00,1\n";
        assert!(matches!(
            parse_generation(data.as_bytes(), InputFormat::Csv),
            Err(Error::Timestamp { row: 1, .. })
        ));
    }

    #[test]
    fn duplicate_timestamp_rejected() {
        // same instant written with two different offsets
        let data = "t,solar\n2024-01-01T01:00:00+01:00,1\n2024-01-01T00:00:00Z,1\n";
        assert!(matches!(
            parse_generation(data.as_bytes(), InputFormat::Csv),
            Err(Error::DuplicateTimestamp { row: 2, .. })
        ));
    }

    #[test]
    fn negative_generation_only_for_storage() {
        let ok = "t,solar,Hydro pumped storage consumption\n2024-01-01T00:00:00Z,1,-3\n";
        let recs = parse_generation(ok.as_bytes(), InputFormat::Csv).unwrap();
        assert_eq!(recs[0].per_source_mwh["hydro_pumped_storage_consumption"], -3.0);
        let bad = "t,solar,coal\n2024-01-01T00:00:00Z,1,-3\n";
        assert!(matches!(
            parse_generation(bad.as_bytes(), InputFormat::Csv),
            Err(Error::NegativeGeneration { .. })
        ));
    }

    #[test]
    fn non_generation_columns_dropped() {
        let data = "t,solar,Load,Residual load\n2024-01-01T00:00:00Z,1,50,49\n";
        let recs = parse_generation(data.as_bytes(), InputFormat::Csv).unwrap();
        assert_eq!(recs[0].per_source_mwh.len(), 1);
    }

    /// Spring-forward day in central Europe: 23 local hours of 15-minute data.
    #[test]
    fn dst_day_has_92_intervals() {
        let mut csv = String::from("t,solar\n");
        for h in 0..24u32 {
            if h == 2 {
                continue;
            }
            let offset = if h < 2 { "+01:00" } else { "+02:00" };
            for m in [0, 15, 30, 45] {
                csv.push_str(&format!("2024-03-31T{h:02}:{m:02}:00{offset},1\n"));
            }
        }
        let recs = parse_generation(csv.as_bytes(), InputFormat::Csv).unwrap();
        assert_eq!(recs.len(), 92);
        let hours: f64 = recs.iter().map(|r| r.duration_h).sum();
        assert_eq!(hours, 23.0);
        assert!(recs.windows(2).all(|w| (w[1].start - w[0].start).num_minutes() == 15));
    }

    #[test]
    fn json_power_converted_to_energy() {
        let data = r#"{"unix_seconds":[1704067200,1704068100],
            "production_types":[{"name":"Solar","data":[4.0,8.0]},
                                {"name":"Load","data":[1.0,1.0]},
                                {"name":"Fossil gas","data":[40.0,null]}]}"#;
        let err = parse_generation(data.as_bytes(), InputFormat::Json).unwrap_err();
        assert!(matches!(err, Error::MalformedRow { row: 2, .. }));

        let data = data.replace("null", "0.0");
        let recs = parse_generation(data.as_bytes(), InputFormat::Json).unwrap();
        assert_eq!(recs.len(), 2);
        assert_eq!(recs[0].per_source_mwh["solar"], 1.0);
        assert_eq!(recs[0].per_source_mwh["fossil_gas"], 10.0);
        assert!(!recs[0].per_source_mwh.contains_key("load"));
    }

    #[test]
    fn prices_csv_and_json() {
        let csv = "time,duration_h,Day Ahead Auction price\n2024-01-01T00:00:00Z,1,-5.5\n";
        let p = parse_prices(csv.as_bytes(), InputFormat::Csv).unwrap();
        assert_eq!(p[0].price, -5.5);
        assert_eq!(p[0].duration_h, 1.0);

        let json = r#"{"unix_seconds":[0,3600,7200],"price":[1.0,2.0,3.0]}"#;
        let p = parse_prices(json.as_bytes(), InputFormat::Json).unwrap();
        assert_eq!(p.len(), 3);
        assert_eq!(p[2].duration_h, 1.0);
    }

    #[test]
    fn factors_with_and_without_year() {
        let plain = "source,kg_per_mwh\nSolar,50\nFossil hard coal,950\n";
        let t = parse_factors(plain.as_bytes()).unwrap();
        assert_eq!(t.len(), 1);
        assert_eq!(t[0].year, None);
        assert_eq!(t[0].factor("fossil_hard_coal"), Some(950.0));

        let yearly = "year,source,kg_per_mwh\n2023,solar,50\n2024,solar,45\n";
        let t = parse_factors(yearly.as_bytes()).unwrap();
        assert_eq!(t.len(), 2);
        assert_eq!(t[1].year, Some(2024));

        let neg = "source,kg_per_mwh\nsolar,-1\n";
        assert!(parse_factors(neg.as_bytes()).is_err());
    }
}
