//! Outage and weather CSV ingest: parsing, validation, cleaning, and
//! association of outages with their nearest weather station.
//!
//! Timestamps are handled at one-minute resolution throughout. Rows that
//! fail validation are rejected individually with a machine-readable
//! reason; parsing never drops data silently.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{Read, Write};
use std::path::{Path, PathBuf};

use chrono::{DateTime, NaiveDateTime, TimeZone, Utc};
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Mean Earth radius in km (WGS-84 sphere).
pub const EARTH_RADIUS_KM: f64 = 6371.0088;

/// Default maximum gap between an outage start and the nearest wind sample,
/// in minutes. Outages farther than this from any sample are dropped.
pub const DEFAULT_MAX_GAP_MINUTES: i64 = 201;

/// One component outage. Times are minutes since the Unix epoch.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OutageRecord {
    pub id: String,
    pub latitude: f64,
    pub longitude: f64,
    pub start: i64,
    pub restore: i64,
    pub customers: u64,
    pub cause_code: Option<String>,
}

impl OutageRecord {
    /// Outage duration in minutes (always >= 0 for a valid record).
    pub fn duration_minutes(&self) -> i64 {
        self.restore - self.start
    }
}

/// One wind-speed sample: minute timestamp and average speed in mph.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WindSample {
    pub time: i64,
    pub speed: f64,
}

/// A weather station with its time-ordered wind samples.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Station {
    pub id: String,
    pub latitude: f64,
    pub longitude: f64,
    pub samples: Vec<WindSample>,
}

/// All outages nearer to one station than to any other.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Area {
    pub station: Station,
    pub outages: Vec<OutageRecord>,
}

/// Column mapping for outage CSV files.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct OutageSchema {
    /// Column holding the record id; if `None`, the 1-based row number is used.
    pub id: Option<String>,
    pub latitude: String,
    pub longitude: String,
    pub start: String,
    pub restore: String,
    pub customers: String,
    pub cause_code: Option<String>,
}

impl Default for OutageSchema {
    fn default() -> Self {
        Self {
            id: Some("id".into()),
            latitude: "latitude".into(),
            longitude: "longitude".into(),
            start: "start".into(),
            restore: "restore".into(),
            customers: "customers".into(),
            cause_code: Some("cause_code".into()),
        }
    }
}

/// Column mapping for wind CSV files.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct WindSchema {
    pub time: String,
    pub speed: String,
}

impl Default for WindSchema {
    fn default() -> Self {
        Self {
            time: "time".into(),
            speed: "speed".into(),
        }
    }
}

/// Why a row was rejected during parsing or cleaning.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RejectReason {
    MissingLocation,
    MalformedLocation,
    InvalidCoordinates,
    MalformedTimestamp,
    NegativeDuration,
    MalformedCustomers,
    MalformedSpeed,
    NegativeSpeed,
    MissingField,
    StaleWindAlignment,
}

impl RejectReason {
    pub fn label(&self) -> &'static str {
        match self {
            RejectReason::MissingLocation => "missing location",
            RejectReason::MalformedLocation => "malformed location",
            RejectReason::InvalidCoordinates => "invalid coordinates",
            RejectReason::MalformedTimestamp => "malformed timestamp",
            RejectReason::NegativeDuration => "negative duration",
            RejectReason::MalformedCustomers => "malformed customers",
            RejectReason::MalformedSpeed => "malformed speed",
            RejectReason::NegativeSpeed => "negative speed",
            RejectReason::MissingField => "missing field",
            RejectReason::StaleWindAlignment => "stale or uncovered wind alignment",
        }
    }
}

/// One rejected row: 1-based data row number (header excluded) and reason.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Rejection {
    pub row: u64,
    pub reason: RejectReason,
}

/// Rejections grouped by reason, for the JSON rejection report.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct RejectionReport {
    pub groups: Vec<RejectionGroup>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RejectionGroup {
    pub reason: String,
    pub count: usize,
    pub rows: Vec<u64>,
}

impl RejectionReport {
    pub fn from_rejections(rejections: &[Rejection]) -> Self {
        let mut by_reason: BTreeMap<RejectReason, Vec<u64>> = BTreeMap::new();
        for r in rejections {
            by_reason.entry(r.reason).or_default().push(r.row);
        }
        let groups = by_reason
            .into_iter()
            .map(|(reason, mut rows)| {
                rows.sort_unstable();
                RejectionGroup {
                    reason: reason.label().to_string(),
                    count: rows.len(),
                    rows,
                }
            })
            .collect();
        Self { groups }
    }

    pub fn total(&self) -> usize {
        self.groups.iter().map(|g| g.count).sum()
    }
}

#[derive(Debug, Error)]
pub enum IngestError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("unparsable header: missing column '{0}'")]
    MissingColumn(String),
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
    #[error("insufficient samples: station '{id}' has {count} valid wind samples, need at least 2")]
    InsufficientSamples { id: String, count: usize },
    #[error("no stations provided")]
    NoStations,
}

/// Parse an ISO-8601-ish timestamp and round it half-up to the minute.
///
/// Accepts RFC 3339 (`2020-08-10T14:23:37+00:00`, `...Z`), the same with a
/// space separator, and naive timestamps (assumed UTC), with or without a
/// seconds field.
pub fn parse_minute(text: &str) -> Option<i64> {
    let text = text.trim();
    if text.is_empty() {
        return None;
    }
    let secs = if let Ok(dt) = DateTime::parse_from_rfc3339(text) {
        dt.timestamp()
    } else if let Ok(dt) = DateTime::parse_from_str(text, "%Y-%m-%d %H:%M:%S%#z") {
        dt.timestamp()
    } else {
        const NAIVE_FORMATS: [&str; 4] = [
            "%Y-%m-%d %H:%M:%S",
            "%Y-%m-%dT%H:%M:%S",
            "%Y-%m-%d %H:%M",
            "%Y-%m-%dT%H:%M",
        ];
        let naive = NAIVE_FORMATS
            .iter()
            .find_map(|fmt| NaiveDateTime::parse_from_str(text, fmt).ok())?;
        naive.and_utc().timestamp()
    };
    Some((secs + 30).div_euclid(60))
}

/// Format a minute timestamp as canonical UTC ISO-8601.
pub fn format_minute(minute: i64) -> String {
    let dt = Utc
        .timestamp_opt(minute * 60, 0)
        .single()
        .expect("minute timestamp in range");
    dt.format("%Y-%m-%dT%H:%M:%SZ").to_string()
}

/// Great-circle distance between two (lat, lon) points in km.
pub fn haversine_km(lat1: f64, lon1: f64, lat2: f64, lon2: f64) -> f64 {
    let (phi1, phi2) = (lat1.to_radians(), lat2.to_radians());
    let dphi = (lat2 - lat1).to_radians();
    let dlambda = (lon2 - lon1).to_radians();
    let a = (dphi / 2.0).sin().powi(2) + phi1.cos() * phi2.cos() * (dlambda / 2.0).sin().powi(2);
    2.0 * EARTH_RADIUS_KM * a.sqrt().min(1.0).asin()
}

fn open_reader(path: &Path) -> Result<csv::Reader<File>, IngestError> {
    let file = File::open(path).map_err(|source| IngestError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    Ok(csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .flexible(true)
        .from_reader(file))
}

fn column_index(headers: &csv::StringRecord, name: &str) -> Result<usize, IngestError> {
    headers
        .iter()
        .position(|h| h.trim() == name)
        .ok_or_else(|| IngestError::MissingColumn(name.to_string()))
}

/// Parse an outage CSV. Valid rows become records; invalid rows are
/// rejected with a reason and the 1-based data row number.
pub fn parse_outages(
    path: &Path,
    schema: &OutageSchema,
) -> Result<(Vec<OutageRecord>, Vec<Rejection>), IngestError> {
    let mut reader = open_reader(path)?;
    let headers = reader.headers()?.clone();
    let idx_id = schema
        .id
        .as_ref()
        .map(|c| column_index(&headers, c))
        .transpose()?;
    let idx_lat = column_index(&headers, &schema.latitude)?;
    let idx_lon = column_index(&headers, &schema.longitude)?;
    let idx_start = column_index(&headers, &schema.start)?;
    let idx_restore = column_index(&headers, &schema.restore)?;
    let idx_customers = column_index(&headers, &schema.customers)?;
    // The cause-code column is optional in both the schema and the file.
    let idx_cause = schema
        .cause_code
        .as_ref()
        .and_then(|c| headers.iter().position(|h| h.trim() == c.as_str()));

    let mut records = Vec::new();
    let mut rejections = Vec::new();
    for (i, row) in reader.records().enumerate() {
        let row_no = i as u64 + 1;
        let mut reject = |reason| rejections.push(Rejection { row: row_no, reason });
        let row = row?;
        let field = |idx: usize| row.get(idx).map(str::trim);

        let (lat_raw, lon_raw) = match (field(idx_lat), field(idx_lon)) {
            (Some(a), Some(b)) => (a, b),
            _ => {
                reject(RejectReason::MissingField);
                continue;
            }
        };
        if lat_raw.is_empty() || lon_raw.is_empty() {
            reject(RejectReason::MissingLocation);
            continue;
        }
        let (latitude, longitude) = match (lat_raw.parse::<f64>(), lon_raw.parse::<f64>()) {
            (Ok(a), Ok(b)) => (a, b),
            _ => {
                reject(RejectReason::MalformedLocation);
                continue;
            }
        };
        if !(-90.0..=90.0).contains(&latitude)
            || !(-180.0..=180.0).contains(&longitude)
            || latitude.is_nan()
            || longitude.is_nan()
        {
            reject(RejectReason::InvalidCoordinates);
            continue;
        }

        let (start_raw, restore_raw) = match (field(idx_start), field(idx_restore)) {
            (Some(a), Some(b)) => (a, b),
            _ => {
                reject(RejectReason::MissingField);
                continue;
            }
        };
        let (start, restore) = match (parse_minute(start_raw), parse_minute(restore_raw)) {
            (Some(s), Some(r)) => (s, r),
            _ => {
                reject(RejectReason::MalformedTimestamp);
                continue;
            }
        };
        if restore < start {
            reject(RejectReason::NegativeDuration);
            continue;
        }

        let customers = match field(idx_customers).and_then(|c| c.parse::<u64>().ok()) {
            Some(c) => c,
            None => {
                reject(RejectReason::MalformedCustomers);
                continue;
            }
        };

        let id = match idx_id {
            Some(idx) => match field(idx) {
                Some(v) if !v.is_empty() => v.to_string(),
                _ => row_no.to_string(),
            },
            None => row_no.to_string(),
        };
        let cause_code = idx_cause
            .and_then(|idx| field(idx))
            .filter(|v| !v.is_empty())
            .map(str::to_string);

        records.push(OutageRecord {
            id,
            latitude,
            longitude,
            start,
            restore,
            customers,
            cause_code,
        });
    }
    Ok((records, rejections))
}

/// Parse a wind CSV into a station. Samples are sorted by time and
/// duplicate timestamps collapse to their mean speed. Irregular cadence is
/// preserved as-is.
pub fn parse_wind(
    path: &Path,
    schema: &WindSchema,
    id: &str,
    latitude: f64,
    longitude: f64,
) -> Result<(Station, Vec<Rejection>), IngestError> {
    let mut reader = open_reader(path)?;
    let headers = reader.headers()?.clone();
    let idx_time = column_index(&headers, &schema.time)?;
    let idx_speed = column_index(&headers, &schema.speed)?;

    let mut rejections = Vec::new();
    let mut by_minute: BTreeMap<i64, (f64, u32)> = BTreeMap::new();
    for (i, row) in reader.records().enumerate() {
        let row_no = i as u64 + 1;
        let mut reject = |reason| rejections.push(Rejection { row: row_no, reason });
        let row = row?;
        let (time_raw, speed_raw) = match (row.get(idx_time), row.get(idx_speed)) {
            (Some(a), Some(b)) => (a.trim(), b.trim()),
            _ => {
                reject(RejectReason::MissingField);
                continue;
            }
        };
        let time = match parse_minute(time_raw) {
            Some(t) => t,
            None => {
                reject(RejectReason::MalformedTimestamp);
                continue;
            }
        };
        let speed = match speed_raw.parse::<f64>() {
            Ok(s) if s.is_finite() => s,
            _ => {
                reject(RejectReason::MalformedSpeed);
                continue;
            }
        };
        if speed < 0.0 {
            reject(RejectReason::NegativeSpeed);
            continue;
        }
        let slot = by_minute.entry(time).or_insert((0.0, 0));
        slot.0 += speed;
        slot.1 += 1;
    }

    let samples: Vec<WindSample> = by_minute
        .into_iter()
        .map(|(time, (sum, n))| WindSample {
            time,
            speed: sum / n as f64,
        })
        .collect();
    if samples.len() < 2 {
        return Err(IngestError::InsufficientSamples {
            id: id.to_string(),
            count: samples.len(),
        });
    }
    Ok((
        Station {
            id: id.to_string(),
            latitude,
            longitude,
            samples,
        },
        rejections,
    ))
}

/// Partition outages into areas by nearest station (great-circle distance,
/// ties broken toward the lexicographically smaller station id). Areas come
/// back sorted by station id; stations with no outages yield empty areas.
pub fn associate_areas(
    outages: &[OutageRecord],
    stations: &[Station],
) -> Result<Vec<Area>, IngestError> {
    if stations.is_empty() {
        return Err(IngestError::NoStations);
    }
    let mut order: Vec<usize> = (0..stations.len()).collect();
    order.sort_by(|&a, &b| stations[a].id.cmp(&stations[b].id));

    let mut areas: Vec<Area> = order
        .iter()
        .map(|&i| Area {
            station: stations[i].clone(),
            outages: Vec::new(),
        })
        .collect();
    for outage in outages {
        let mut best = 0usize;
        let mut best_dist = f64::INFINITY;
        // Areas are in id order, so `<` keeps the smaller id on ties.
        for (k, area) in areas.iter().enumerate() {
            let d = haversine_km(
                outage.latitude,
                outage.longitude,
                area.station.latitude,
                area.station.longitude,
            );
            if d < best_dist {
                best = k;
                best_dist = d;
            }
        }
        areas[best].outages.push(outage.clone());
    }
    Ok(areas)
}

/// Remove outages whose start cannot be aligned with the area's wind data:
/// either outside the sample coverage window, or farther than `max_gap`
/// minutes from the nearest sample. Removed records are returned alongside
/// the cleaned area.
pub fn filter_stale_outages(area: &Area, max_gap: i64) -> (Area, Vec<OutageRecord>) {
    debug_assert!(max_gap > 0);
    let times: Vec<i64> = area.station.samples.iter().map(|s| s.time).collect();
    let (first, last) = (times[0], *times.last().expect("station has samples"));

    let mut kept = Vec::new();
    let mut rejected = Vec::new();
    for outage in &area.outages {
        let t = outage.start;
        let in_domain = t >= first && t <= last;
        let gap = match times.binary_search(&t) {
            Ok(_) => 0,
            Err(pos) => {
                let before = pos.checked_sub(1).map(|p| t - times[p]);
                let after = times.get(pos).map(|&n| n - t);
                match (before, after) {
                    (Some(a), Some(b)) => a.min(b),
                    (Some(a), None) => a,
                    (None, Some(b)) => b,
                    (None, None) => i64::MAX,
                }
            }
        };
        if in_domain && gap <= max_gap {
            kept.push(outage.clone());
        } else {
            rejected.push(outage.clone());
        }
    }
    (
        Area {
            station: area.station.clone(),
            outages: kept,
        },
        rejected,
    )
}

/// Write records as canonical CSV: fixed column order, ISO-8601 UTC
/// timestamps. Re-parsing the output with the default schema yields
/// identical records.
pub fn write_canonical_outages<W: Write>(
    writer: W,
    records: &[OutageRecord],
) -> Result<(), csv::Error> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record([
        "id",
        "latitude",
        "longitude",
        "start",
        "restore",
        "customers",
        "cause_code",
    ])?;
    for r in records {
        w.write_record([
            r.id.as_str(),
            &r.latitude.to_string(),
            &r.longitude.to_string(),
            &format_minute(r.start),
            &format_minute(r.restore),
            &r.customers.to_string(),
            r.cause_code.as_deref().unwrap_or(""),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Write a station's samples as canonical CSV (time, speed).
pub fn write_canonical_wind<W: Write>(writer: W, station: &Station) -> Result<(), csv::Error> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["time", "speed"])?;
    for s in &station.samples {
        w.write_record([format_minute(s.time).as_str(), &s.speed.to_string()])?;
    }
    w.flush()?;
    Ok(())
}

/// Read a whole file to a string with a path-tagged error.
pub fn read_to_string(path: &Path) -> Result<String, IngestError> {
    let mut buf = String::new();
    File::open(path)
        .and_then(|mut f| f.read_to_string(&mut buf))
        .map_err(|source| IngestError::Io {
            path: path.to_path_buf(),
            source,
        })?;
    Ok(buf)
}
