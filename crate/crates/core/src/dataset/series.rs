use std::collections::BTreeMap;
use std::io::Write;
use std::path::Path;

use super::{format_timestamp, parse_timestamp, SECONDS_PER_HOUR};
use crate::error::{Error, Result};

pub const SERIES_HEADER: [&str; 4] = ["timestamp", "sensor_id", "streamflow_cfs", "precip_mm"];

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HourlyPoint {
    pub timestamp: i64,
    pub streamflow: Option<f64>,
    pub precip: Option<f64>,
}

/// Hourly streamflow (cfs) and watershed-aggregated precipitation (mm/h) for
/// one gauge. Timestamps are hour-aligned and strictly increasing.
#[derive(Debug, Clone, PartialEq)]
pub struct SensorSeries {
    sensor_id: String,
    points: Vec<HourlyPoint>,
}

pub type SeriesSet = BTreeMap<String, SensorSeries>;

impl SensorSeries {
    pub fn new(sensor_id: impl Into<String>, points: Vec<HourlyPoint>) -> Result<Self> {
        let sensor_id = sensor_id.into();
        for (i, p) in points.iter().enumerate() {
            if p.timestamp.rem_euclid(SECONDS_PER_HOUR) != 0 {
                return Err(Error::Dataset(format!(
                    "sensor {sensor_id}: timestamp {} is not aligned to an hour",
                    format_timestamp(p.timestamp)
                )));
            }
            if i > 0 && p.timestamp <= points[i - 1].timestamp {
                let what = if p.timestamp == points[i - 1].timestamp {
                    "duplicate"
                } else {
                    "out-of-order"
                };
                return Err(Error::Dataset(format!(
                    "sensor {sensor_id}: {what} timestamp {}",
                    format_timestamp(p.timestamp)
                )));
            }
            check_non_negative(&sensor_id, p.timestamp, p.streamflow, "streamflow")?;
            check_non_negative(&sensor_id, p.timestamp, p.precip, "precipitation")?;
        }
        Ok(SensorSeries { sensor_id, points })
    }

    pub fn sensor_id(&self) -> &str {
        &self.sensor_id
    }

    pub fn points(&self) -> &[HourlyPoint] {
        &self.points
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn first_timestamp(&self) -> Option<i64> {
        self.points.first().map(|p| p.timestamp)
    }

    pub fn last_timestamp(&self) -> Option<i64> {
        self.points.last().map(|p| p.timestamp)
    }
}

fn check_non_negative(sensor: &str, ts: i64, v: Option<f64>, what: &str) -> Result<()> {
    match v {
        Some(x) if !(x >= 0.0 && x.is_finite()) => Err(Error::Dataset(format!(
            "sensor {sensor}: {what} {x} at {} must be a finite non-negative number",
            format_timestamp(ts)
        ))),
        _ => Ok(()),
    }
}

/// One row of a series file before hourly validation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RawReading {
    pub timestamp: i64,
    pub streamflow: Option<f64>,
    pub precip: Option<f64>,
}

struct Row {
    line: u64,
    sensor_id: String,
    reading: RawReading,
}

fn read_rows(path: &Path) -> Result<Vec<Row>> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| csv_error(path, e))?;
    let parse_err = |line: u64, message: String| Error::Parse {
        path: path.to_path_buf(),
        line,
        message,
    };
    let headers = reader.headers().map_err(|e| csv_error(path, e))?.clone();
    if headers.iter().collect::<Vec<_>>() != SERIES_HEADER {
        return Err(parse_err(
            1,
            format!(
                "expected header `{}`, found `{}`",
                SERIES_HEADER.join(","),
                headers.iter().collect::<Vec<_>>().join(",")
            ),
        ));
    }
    let mut rows = Vec::new();
    for record in reader.records() {
        let record = record.map_err(|e| csv_error(path, e))?;
        let line = record.position().map_or(0, |p| p.line());
        if record.len() != 4 {
            return Err(parse_err(line, format!("expected 4 fields, found {}", record.len())));
        }
        let timestamp = parse_timestamp(&record[0])
            .ok_or_else(|| parse_err(line, format!("invalid timestamp `{}`", &record[0])))?;
        let sensor_id = record[1].to_string();
        if sensor_id.is_empty() {
            return Err(parse_err(line, "empty sensor_id".into()));
        }
        let number = |i: usize, name: &str| -> Result<Option<f64>> {
            let field = &record[i];
            if field.is_empty() {
                return Ok(None);
            }
            let v: f64 = field
                .parse()
                .map_err(|_| parse_err(line, format!("invalid {name} `{field}`")))?;
            if !(v >= 0.0 && v.is_finite()) {
                return Err(parse_err(line, format!("{name} must be finite and non-negative, got {v}")));
            }
            Ok(Some(v))
        };
        let reading = RawReading {
            timestamp,
            streamflow: number(2, "streamflow_cfs")?,
            precip: number(3, "precip_mm")?,
        };
        rows.push(Row {
            line,
            sensor_id,
            reading,
        });
    }
    Ok(rows)
}

fn csv_error(path: &Path, e: csv::Error) -> Error {
    let line = e.position().map_or(0, |p| p.line());
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::io(path, io),
        kind => Error::Parse {
            path: path.to_path_buf(),
            line,
            message: format!("{kind:?}"),
        },
    }
}

/// Reads an hourly series file (`timestamp,sensor_id,streamflow_cfs,precip_mm`;
/// empty field = missing) and groups rows by sensor.
pub fn load_series(path: impl AsRef<Path>) -> Result<SeriesSet> {
    let path = path.as_ref();
    let mut grouped: BTreeMap<String, Vec<(u64, RawReading)>> = BTreeMap::new();
    for row in read_rows(path)? {
        if row.reading.timestamp.rem_euclid(SECONDS_PER_HOUR) != 0 {
            return Err(Error::Parse {
                path: path.to_path_buf(),
                line: row.line,
                message: format!(
                    "timestamp {} is not on an exact hour",
                    format_timestamp(row.reading.timestamp)
                ),
            });
        }
        grouped.entry(row.sensor_id).or_default().push((row.line, row.reading));
    }
    let mut set = SeriesSet::new();
    for (sensor_id, mut rows) in grouped {
        rows.sort_by_key(|(_, r)| r.timestamp);
        for pair in rows.windows(2) {
            if pair[0].1.timestamp == pair[1].1.timestamp {
                return Err(Error::Parse {
                    path: path.to_path_buf(),
                    line: pair[1].0.max(pair[0].0),
                    message: format!(
                        "duplicate timestamp {} for sensor {sensor_id}",
                        format_timestamp(pair[1].1.timestamp)
                    ),
                });
            }
        }
        let points = rows
            .into_iter()
            .map(|(_, r)| HourlyPoint {
                timestamp: r.timestamp,
                streamflow: r.streamflow,
                precip: r.precip,
            })
            .collect();
        set.insert(sensor_id.clone(), SensorSeries::new(sensor_id, points)?);
    }
    Ok(set)
}

/// Reads a sub-hourly file in the series format, keeping raw readings per
/// sensor in time order.
pub fn load_raw_series(path: impl AsRef<Path>) -> Result<BTreeMap<String, Vec<RawReading>>> {
    let mut grouped: BTreeMap<String, Vec<RawReading>> = BTreeMap::new();
    for row in read_rows(path.as_ref())? {
        grouped.entry(row.sensor_id).or_default().push(row.reading);
    }
    for readings in grouped.values_mut() {
        readings.sort_by_key(|r| r.timestamp);
    }
    Ok(grouped)
}

/// Buckets readings into hours `[h, h + 1h)`.
///
/// Streamflow is the mean of the readings present in the hour; precipitation
/// accumulations are summed. An hour with no reading of a variable is
/// missing for that variable. The output covers every hour from the first
/// reading's hour through the last reading's hour.
pub fn aggregate_hourly(sensor_id: &str, raw: &[RawReading]) -> Result<SensorSeries> {
    let hour_of = |ts: i64| ts.div_euclid(SECONDS_PER_HOUR) * SECONDS_PER_HOUR;
    let (Some(first), Some(last)) = (
        raw.iter().map(|r| r.timestamp).min(),
        raw.iter().map(|r| r.timestamp).max(),
    ) else {
        return SensorSeries::new(sensor_id, Vec::new());
    };
    let start = hour_of(first);
    let hours = ((hour_of(last) - start) / SECONDS_PER_HOUR + 1) as usize;
    let mut flow = vec![(0.0, 0usize); hours];
    let mut rain = vec![(0.0, 0usize); hours];
    for r in raw {
        let slot = ((hour_of(r.timestamp) - start) / SECONDS_PER_HOUR) as usize;
        if let Some(q) = r.streamflow {
            flow[slot].0 += q;
            flow[slot].1 += 1;
        }
        if let Some(p) = r.precip {
            rain[slot].0 += p;
            rain[slot].1 += 1;
        }
    }
    let points = (0..hours)
        .map(|i| HourlyPoint {
            timestamp: start + i as i64 * SECONDS_PER_HOUR,
            streamflow: (flow[i].1 > 0).then(|| flow[i].0 / flow[i].1 as f64),
            precip: (rain[i].1 > 0).then_some(rain[i].0),
        })
        .collect();
    SensorSeries::new(sensor_id, points)
}

/// Writes series in the file format read by [`load_series`], sensor by sensor.
pub fn write_series<'a>(path: impl AsRef<Path>, series: impl IntoIterator<Item = &'a SensorSeries>) -> Result<()> {
    let path = path.as_ref();
    let mut out = Vec::new();
    writeln!(out, "{}", SERIES_HEADER.join(",")).expect("write to Vec");
    let fmt = |v: Option<f64>| v.map(|x| format!("{x}")).unwrap_or_default();
    for s in series {
        for p in s.points() {
            writeln!(
                out,
                "{},{},{},{}",
                format_timestamp(p.timestamp),
                s.sensor_id(),
                fmt(p.streamflow),
                fmt(p.precip)
            )
            .expect("write to Vec");
        }
    }
    crate::binfmt::write_file(path, &out)
}
