//! CSV ingestion and emission for the documented on-disk schemas.
//!
//! - counts: `station_id,timestamp,count` — ISO-8601 local timestamps on the
//!   15-minute grid; an empty count cell is a missing interval.
//! - stations: `station_id,kind,lat,lon,record_count` with kind CCS | NCCS.
//! - travel times: `from_id,to_id,seconds` (direct) or
//!   `from_id,to_id,distance_m,speed_mps` (derived); see the graph module
//!   loader for the read side.

use super::{DataError, FlowFrame, Result, StationKind, StationMeta, INTERVAL_MINUTES};
use chrono::{NaiveDateTime, Timelike};
use ndarray::Array2;
use std::collections::HashMap;
use std::io::Write;
use std::path::Path;

fn io_err(path: &Path, source: std::io::Error) -> DataError {
    DataError::Io { path: path.display().to_string(), source }
}

fn parse_err(path: &Path, line: u64, msg: impl Into<String>) -> DataError {
    DataError::Parse { path: path.display().to_string(), line, msg: msg.into() }
}

fn parse_timestamp(s: &str) -> Option<NaiveDateTime> {
    NaiveDateTime::parse_from_str(s, "%Y-%m-%dT%H:%M:%S")
        .or_else(|_| NaiveDateTime::parse_from_str(s, "%Y-%m-%d %H:%M:%S"))
        .or_else(|_| NaiveDateTime::parse_from_str(s, "%Y-%m-%dT%H:%M"))
        .ok()
}

/// Load station metadata.
pub fn load_stations(path: &Path) -> Result<Vec<StationMeta>> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_path(path)
        .map_err(|e| parse_err(path, 1, e.to_string()))?;
    let mut out = Vec::new();
    let mut seen: HashMap<String, ()> = HashMap::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| parse_err(path, 0, e.to_string()))?;
        let line = rec.position().map(|p| p.line()).unwrap_or(0);
        if rec.len() != 5 {
            return Err(parse_err(path, line, format!("expected 5 fields, got {}", rec.len())));
        }
        let station_id = rec[0].to_string();
        if seen.insert(station_id.clone(), ()).is_some() {
            return Err(DataError::DuplicateStation(station_id));
        }
        let kind = StationKind::parse(&rec[1])
            .ok_or_else(|| parse_err(path, line, format!("kind must be CCS or NCCS, got {:?}", &rec[1])))?;
        let lat: f64 = rec[2]
            .parse()
            .map_err(|_| parse_err(path, line, format!("bad latitude {:?}", &rec[2])))?;
        let lon: f64 = rec[3]
            .parse()
            .map_err(|_| parse_err(path, line, format!("bad longitude {:?}", &rec[3])))?;
        let record_count: u64 = rec[4]
            .parse()
            .map_err(|_| parse_err(path, line, format!("bad record_count {:?}", &rec[4])))?;
        out.push(StationMeta { station_id, kind, lat, lon, record_count });
    }
    if out.is_empty() {
        return Err(DataError::Size(format!("{}: no stations", path.display())));
    }
    Ok(out)
}

/// Load a counts CSV against its station metadata.
///
/// The returned frame spans the full 15-minute grid from the earliest to the
/// latest timestamp seen; intervals without a record become NaN sentinels.
/// Column order follows the metadata list.
pub fn load_counts(counts_path: &Path, meta_path: &Path) -> Result<(FlowFrame, Vec<StationMeta>)> {
    let meta = load_stations(meta_path)?;
    let col_of: HashMap<&str, usize> =
        meta.iter().enumerate().map(|(i, m)| (m.station_id.as_str(), i)).collect();

    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_path(counts_path)
        .map_err(|e| parse_err(counts_path, 1, e.to_string()))?;

    // (column, timestamp, value)
    let mut rows: Vec<(usize, NaiveDateTime, f64)> = Vec::new();
    let mut last_ts: Vec<Option<NaiveDateTime>> = vec![None; meta.len()];

    for rec in rdr.records() {
        let rec = rec.map_err(|e| parse_err(counts_path, 0, e.to_string()))?;
        let line = rec.position().map(|p| p.line()).unwrap_or(0);
        if rec.len() != 3 {
            return Err(parse_err(counts_path, line, format!("expected 3 fields, got {}", rec.len())));
        }
        let station = &rec[0];
        let col = *col_of
            .get(station)
            .ok_or_else(|| DataError::UnknownStation(station.to_string()))?;
        let ts = parse_timestamp(&rec[1])
            .ok_or_else(|| parse_err(counts_path, line, format!("bad timestamp {:?}", &rec[1])))?;
        if ts.time().minute() % INTERVAL_MINUTES as u32 != 0 || ts.time().second() != 0 {
            return Err(parse_err(
                counts_path,
                line,
                format!("timestamp {ts} is not on the {INTERVAL_MINUTES}-minute grid"),
            ));
        }
        match last_ts[col] {
            Some(prev) if ts == prev => {
                return Err(DataError::Duplicate { station: station.to_string(), timestamp: ts })
            }
            Some(prev) if ts < prev => {
                return Err(DataError::Order {
                    station: station.to_string(),
                    previous: prev,
                    current: ts,
                })
            }
            _ => last_ts[col] = Some(ts),
        }
        let value = if rec[2].is_empty() {
            f64::NAN
        } else {
            let count: u64 = rec[2]
                .parse()
                .map_err(|_| parse_err(counts_path, line, format!("bad count {:?}", &rec[2])))?;
            count as f64
        };
        rows.push((col, ts, value));
    }

    if rows.is_empty() {
        return Err(DataError::Size(format!("{}: no count records", counts_path.display())));
    }

    let origin = rows.iter().map(|r| r.1).min().unwrap();
    let end = rows.iter().map(|r| r.1).max().unwrap();
    let step = INTERVAL_MINUTES * 60;
    let n_rows = ((end - origin).num_seconds() / step) as usize + 1;
    let mut values = Array2::from_elem((n_rows, meta.len()), f64::NAN);
    for (col, ts, value) in rows {
        let idx = ((ts - origin).num_seconds() / step) as usize;
        values[[idx, col]] = value;
    }

    let ids = meta.iter().map(|m| m.station_id.clone()).collect();
    let frame = FlowFrame::new(values, origin, ids)?;
    Ok((frame, meta))
}

/// Counts CSV text (inverse of [`load_counts`], station-major order).
pub fn counts_csv(frame: &FlowFrame) -> String {
    let mut out = String::from("station_id,timestamp,count\n");
    for (s, id) in frame.station_ids().iter().enumerate() {
        for t in 0..frame.timesteps() {
            let v = frame.values()[[t, s]];
            let ts = frame.timestamp(t).format("%Y-%m-%dT%H:%M:%S");
            if v.is_nan() {
                out.push_str(&format!("{id},{ts},\n"));
            } else {
                out.push_str(&format!("{id},{ts},{}\n", v as u64));
            }
        }
    }
    out
}

pub fn write_counts_csv(frame: &FlowFrame, path: &Path) -> Result<()> {
    write_file(path, counts_csv(frame).as_bytes())
}

/// Stations CSV text.
pub fn stations_csv(meta: &[StationMeta]) -> String {
    let mut out = String::from("station_id,kind,lat,lon,record_count\n");
    for m in meta {
        out.push_str(&format!(
            "{},{},{},{},{}\n",
            m.station_id,
            m.kind.as_str(),
            m.lat,
            m.lon,
            m.record_count
        ));
    }
    out
}

pub fn write_stations_csv(meta: &[StationMeta], path: &Path) -> Result<()> {
    write_file(path, stations_csv(meta).as_bytes())
}

/// Travel-time CSV text in the direct `seconds` schema. Non-finite entries
/// mean "no route" and are omitted.
pub fn travel_times_csv(station_ids: &[String], seconds: &Array2<f64>) -> String {
    let mut out = String::from("from_id,to_id,seconds\n");
    for i in 0..seconds.nrows() {
        for j in 0..seconds.ncols() {
            if i == j || !seconds[[i, j]].is_finite() {
                continue;
            }
            out.push_str(&format!("{},{},{}\n", station_ids[i], station_ids[j], seconds[[i, j]]));
        }
    }
    out
}

pub fn write_travel_times_csv(station_ids: &[String], seconds: &Array2<f64>, path: &Path) -> Result<()> {
    write_file(path, travel_times_csv(station_ids, seconds).as_bytes())
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    let mut f = std::fs::File::create(path).map_err(|e| io_err(path, e))?;
    f.write_all(bytes).map_err(|e| io_err(path, e))
}
