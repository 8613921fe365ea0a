//! Sensor series and river graph ingestion, normalization, snapshot
//! construction, time-based splits and the binary snapshot cache.
//!
//! Timestamps are UTC seconds since the Unix epoch. An hourly value stamped
//! `t` covers the hour `[t, t + 1h)`.

mod cache;
mod graph_file;
mod normalize;
mod series;
mod snapshots;

pub use cache::{build_cache, read_cache, write_cache, SnapshotCache, CACHE_FORMAT_VERSION};
pub use graph_file::{load_graph, GraphFile, GraphOptions};
pub use normalize::{compute_normalization, denormalize, normalize, NormalizationConstants, NORMALIZED_MAX};
pub use series::{
    aggregate_hourly, load_raw_series, load_series, write_series, HourlyPoint, RawReading, SensorSeries,
    SeriesSet,
};
pub use snapshots::{
    build_snapshots, split_snapshots, DatasetSplit, Snapshot, SplitBoundaries, SplitName, Splits, CHANNEL_FUTURE_PRECIP,
    CHANNEL_PAST_FLOW, CHANNEL_PAST_PRECIP,
};

use chrono::{DateTime, NaiveDateTime, Utc};

pub const SECONDS_PER_HOUR: i64 = 3600;

/// Parses an ISO-8601 / RFC 3339 timestamp. A timestamp without offset is
/// taken as UTC.
pub fn parse_timestamp(s: &str) -> Option<i64> {
    let s = s.trim();
    if let Ok(dt) = DateTime::parse_from_rfc3339(s) {
        return Some(dt.timestamp());
    }
    for fmt in ["%Y-%m-%dT%H:%M:%S", "%Y-%m-%d %H:%M:%S", "%Y-%m-%dT%H:%M"] {
        if let Ok(dt) = NaiveDateTime::parse_from_str(s, fmt) {
            return Some(dt.and_utc().timestamp());
        }
    }
    None
}

/// Formats as `YYYY-MM-DDTHH:MM:SSZ`.
pub fn format_timestamp(ts: i64) -> String {
    DateTime::<Utc>::from_timestamp(ts, 0)
        .map(|dt| dt.format("%Y-%m-%dT%H:%M:%SZ").to_string())
        .unwrap_or_else(|| format!("@{ts}"))
}
