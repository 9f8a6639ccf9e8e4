//! CSV and JSON-lines file formats for trips, GPS traces, skip reports and
//! prepared examples.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{GpsSample, SkipRecord, TrainingExample, TripRecord};
use crate::error::{Error, Result};

pub const TRIP_CSV_HEADER: &str = "trip_id,day,weekday,section,entry_time_s,travel_time_s";
pub const GPS_CSV_HEADER: &str = "trip_id,timestamp_s,route_distance_m";
pub const SKIP_CSV_HEADER: &str = "trip_id,day,m,reason,section";

/// Entry times written to CSV and read back must chain within this many seconds.
pub const CHAIN_TOLERANCE_S: f64 = 1e-6;

#[derive(Debug, Serialize, Deserialize)]
struct TripRow {
    trip_id: u64,
    day: u32,
    weekday: u8,
    section: usize,
    entry_time_s: f64,
    travel_time_s: f64,
}

pub fn write_trips_csv<W: Write>(w: W, trips: &[TripRecord]) -> Result<()> {
    let mut wr = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(w);
    for t in trips {
        for n in 1..=t.n_sections() {
            wr.serialize(TripRow {
                trip_id: t.trip_id,
                day: t.day,
                weekday: t.weekday,
                section: n,
                entry_time_s: t.entry(n),
                travel_time_s: t.travel(n),
            })?;
        }
    }
    // header only, for an empty trip list
    if trips.is_empty() {
        wr.write_record(TRIP_CSV_HEADER.split(','))?;
    }
    wr.flush()?;
    Ok(())
}

fn check_header(rdr: &mut csv::Reader<impl Read>, expected: &str) -> Result<()> {
    let got: Vec<String> = rdr.headers()?.iter().map(|s| s.trim().to_string()).collect();
    let want: Vec<&str> = expected.split(',').collect();
    if got != want {
        return Err(Error::CsvRow {
            row: 1,
            msg: format!("header must be '{expected}', found '{}'", got.join(",")),
        });
    }
    Ok(())
}

/// Reads and validates a trip CSV. Rows of one trip must list sections 1..N
/// in order; line numbers in errors count the header as line 1.
pub fn read_trips_csv<R: Read>(r: R) -> Result<Vec<TripRecord>> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(r);
    check_header(&mut rdr, TRIP_CSV_HEADER)?;
    let mut trips: Vec<TripRecord> = Vec::new();
    let mut pos: BTreeMap<u64, usize> = BTreeMap::new();
    let mut first_line: Vec<usize> = Vec::new();
    for (i, rec) in rdr.deserialize::<TripRow>().enumerate() {
        let line = i + 2;
        let row = rec.map_err(|e| Error::CsvRow {
            row: line,
            msg: e.to_string(),
        })?;
        let bad = |msg: String| Error::CsvRow { row: line, msg };
        if row.weekday > 6 {
            return Err(bad(format!("weekday {} out of range 0-6", row.weekday)));
        }
        if !row.entry_time_s.is_finite() || !row.travel_time_s.is_finite() || row.travel_time_s <= 0.0 {
            return Err(bad("entry/travel time must be finite with positive travel time".into()));
        }
        let idx = *pos.entry(row.trip_id).or_insert_with(|| {
            trips.push(TripRecord {
                trip_id: row.trip_id,
                day: row.day,
                weekday: row.weekday,
                entry_times: Vec::new(),
                travel_times: Vec::new(),
            });
            first_line.push(line);
            trips.len() - 1
        });
        let t = &mut trips[idx];
        if t.day != row.day || t.weekday != row.weekday {
            return Err(bad(format!("trip {} changes day/weekday mid-trip", row.trip_id)));
        }
        if row.section != t.n_sections() + 1 {
            return Err(bad(format!(
                "trip {}: expected section {}, found {}",
                row.trip_id,
                t.n_sections() + 1,
                row.section
            )));
        }
        t.entry_times.push(row.entry_time_s);
        t.travel_times.push(row.travel_time_s);
    }
    let mut weekday_of_day: BTreeMap<u32, u8> = BTreeMap::new();
    for (t, line) in trips.iter().zip(&first_line) {
        t.validate(CHAIN_TOLERANCE_S).map_err(|e| Error::CsvRow {
            row: *line,
            msg: e.to_string(),
        })?;
        let wd = *weekday_of_day.entry(t.day).or_insert(t.weekday);
        if wd != t.weekday {
            return Err(Error::CsvRow {
                row: *line,
                msg: format!("day {} has trips on different weekdays", t.day),
            });
        }
    }
    if let Some(n) = trips.first().map(|t| t.n_sections()) {
        if let Some((t, line)) = trips.iter().zip(&first_line).find(|(t, _)| t.n_sections() != n) {
            return Err(Error::CsvRow {
                row: *line,
                msg: format!("trip {} has {} sections, expected {n}", t.trip_id, t.n_sections()),
            });
        }
    }
    Ok(trips)
}

pub fn read_trips_file(path: &Path) -> Result<Vec<TripRecord>> {
    read_trips_csv(BufReader::new(File::open(path)?))
}

pub fn write_trips_file(path: &Path, trips: &[TripRecord]) -> Result<()> {
    let f = BufWriter::new(File::create(path)?);
    write_trips_csv(f, trips)
}

#[derive(Debug, Deserialize)]
struct GpsRow {
    trip_id: u64,
    timestamp_s: f64,
    route_distance_m: f64,
}

/// GPS samples grouped by trip, in file order. Timestamps count seconds from
/// midnight of day 0 (a Monday).
pub fn read_gps_csv<R: Read>(r: R) -> Result<BTreeMap<u64, Vec<GpsSample>>> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(r);
    check_header(&mut rdr, GPS_CSV_HEADER)?;
    let mut out: BTreeMap<u64, Vec<GpsSample>> = BTreeMap::new();
    for (i, rec) in rdr.deserialize::<GpsRow>().enumerate() {
        let row = rec.map_err(|e| Error::CsvRow {
            row: i + 2,
            msg: e.to_string(),
        })?;
        if !row.timestamp_s.is_finite() || !row.route_distance_m.is_finite() {
            return Err(Error::CsvRow {
                row: i + 2,
                msg: "non-finite timestamp or distance".into(),
            });
        }
        out.entry(row.trip_id).or_default().push(GpsSample {
            t: row.timestamp_s,
            d: row.route_distance_m,
        });
    }
    Ok(out)
}

pub fn write_skip_report<W: Write>(w: W, skipped: &[SkipRecord]) -> Result<()> {
    let mut wr = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(w);
    wr.write_record(SKIP_CSV_HEADER.split(','))?;
    for s in skipped {
        wr.write_record([
            s.trip_id.to_string(),
            s.day.to_string(),
            s.m.to_string(),
            s.reason.code().to_string(),
            s.section.map(|n| n.to_string()).unwrap_or_default(),
        ])?;
    }
    wr.flush()?;
    Ok(())
}

/// One JSON document per line.
pub fn write_examples<W: Write>(mut w: W, examples: &[TrainingExample]) -> Result<()> {
    for e in examples {
        serde_json::to_writer(&mut w, e)?;
        w.write_all(b"\n")?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_examples<R: Read>(r: R) -> Result<Vec<TrainingExample>> {
    let mut out = Vec::new();
    for (i, line) in BufReader::new(r).lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(&line).map_err(|e| Error::CsvRow {
            row: i + 1,
            msg: e.to_string(),
        })?);
    }
    Ok(out)
}
