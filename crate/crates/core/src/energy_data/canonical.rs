//! The canonical interval exchange format:
//! `start_utc,duration_h,intensity_kg_per_mwh,price_eur_per_mwh`.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use chrono::{DateTime, Utc};

use super::{Interval, IntervalSeries};
use crate::error::{Error, Result};

pub const HEADER: [&str; 4] = [
    "start_utc",
    "duration_h",
    "intensity_kg_per_mwh",
    "price_eur_per_mwh",
];

pub(crate) fn format_utc(t: &DateTime<Utc>) -> String {
    t.format("%Y-%m-%dT%H:%M:%SZ").to_string()
}

pub fn write_intervals(series: &IntervalSeries, writer: impl Write) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(HEADER)?;
    for iv in series.intervals() {
        w.write_record([
            format_utc(&iv.start),
            iv.duration_h.to_string(),
            iv.intensity.to_string(),
            iv.price.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_intervals_path(series: &IntervalSeries, path: impl AsRef<Path>) -> Result<()> {
    write_intervals(series, BufWriter::new(File::create(path)?))
}

pub fn read_intervals(reader: impl Read) -> Result<IntervalSeries> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let headers = rdr.headers()?.clone();
    if headers.iter().ne(HEADER.iter().copied()) {
        return Err(Error::MalformedRow {
            row: 0,
            msg: format!("expected header {}", HEADER.join(",")),
        });
    }
    let mut intervals = Vec::new();
    for (idx, rec) in rdr.records().enumerate() {
        let row = idx + 1;
        let rec = rec.map_err(|e| Error::MalformedRow {
            row,
            msg: e.to_string(),
        })?;
        let start = DateTime::parse_from_rfc3339(&rec[0])
            .map_err(|_| Error::Timestamp {
                row,
                value: rec[0].to_string(),
            })?
            .with_timezone(&Utc);
        let num = |i: usize| -> Result<f64> {
            rec[i].parse::<f64>().map_err(|_| Error::MalformedRow {
                row,
                msg: format!("{:?} in column {} is not a number", &rec[i], HEADER[i]),
            })
        };
        intervals.push(Interval {
            start,
            duration_h: num(1)?,
            intensity: num(2)?,
            price: num(3)?,
        });
    }
    IntervalSeries::new(intervals)
}

pub fn read_intervals_path(path: impl AsRef<Path>) -> Result<IntervalSeries> {
    read_intervals(BufReader::new(File::open(path)?))
}
