use serde::{Deserialize, Serialize};

use super::{format_timestamp, NormalizationConstants, SeriesSet, SECONDS_PER_HOUR};
use crate::error::{Error, Result};
use crate::graph::SensorGraph;
use crate::tensor::Tensor;

/// Input channel order within a snapshot.
pub const CHANNEL_PAST_FLOW: usize = 0;
pub const CHANNEL_PAST_PRECIP: usize = 1;
pub const CHANNEL_FUTURE_PRECIP: usize = 2;

/// One training example anchored at hour `t`.
///
/// `input[n][c][k]` holds, for node `n`:
/// - `c = 0`: streamflow at `t − T_in + 1 + k`,
/// - `c = 1`: precipitation at `t − T_in + 1 + k`,
/// - `c = 2`: precipitation at `t + 1 + k`,
///
/// and `target[n][k]` is streamflow at `t + 1 + k`. Values are normalized;
/// missing observations are stored as normalized 0 and, for the target,
/// flagged false in `target_mask`. The outlet's past and future streamflow are
/// always complete.
#[derive(Debug, Clone, PartialEq)]
pub struct Snapshot {
    pub anchor: i64,
    pub input: Tensor,
    pub target: Tensor,
    pub target_mask: Vec<bool>,
}

impl Snapshot {
    pub fn num_nodes(&self) -> usize {
        self.input.shape()[0]
    }

    pub fn t_in(&self) -> usize {
        self.input.shape()[2]
    }

    pub fn t_out(&self) -> usize {
        self.target.shape()[1]
    }

    /// Normalized future streamflow of one node.
    pub fn target_row(&self, node: usize) -> &[f64] {
        let t = self.t_out();
        &self.target.data()[node * t..(node + 1) * t]
    }

    /// Normalized input series `channel` of one node.
    pub fn input_series(&self, node: usize, channel: usize) -> &[f64] {
        let t = self.t_in();
        let start = (node * 3 + channel) * t;
        &self.input.data()[start..start + t]
    }

    /// Latest normalized streamflow of `node` at the anchor hour.
    pub fn last_flow(&self, node: usize) -> f64 {
        *self
            .input_series(node, CHANNEL_PAST_FLOW)
            .last()
            .expect("T_in ≥ 1")
    }
}

/// Dense hourly view of one node over the global grid.
struct NodeGrid {
    flow: Vec<Option<f64>>,
    precip: Vec<Option<f64>>,
}

/// Builds every valid snapshot, ordered by anchor.
///
/// An anchor qualifies iff the outlet has streamflow for all `T_in` past and
/// `T_out` future hours. The future-precipitation channel covers `T_in`
/// hours; hours beyond the data are treated as missing.
pub fn build_snapshots(
    series: &SeriesSet,
    graph: &SensorGraph,
    t_in: usize,
    t_out: usize,
    norm: &NormalizationConstants,
) -> Result<Vec<Snapshot>> {
    if t_in == 0 || t_out == 0 {
        return Err(Error::InvalidArgument("T_in and T_out must be ≥ 1".into()));
    }
    let node_series = graph
        .nodes()
        .iter()
        .map(|n| {
            series.get(&n.sensor_id).ok_or_else(|| {
                Error::Dataset(format!(
                    "graph node {} (sensor {}) has no series",
                    n.index, n.sensor_id
                ))
            })
        })
        .collect::<Result<Vec<_>>>()?;

    let start = node_series.iter().filter_map(|s| s.first_timestamp()).min();
    let end = node_series.iter().filter_map(|s| s.last_timestamp()).max();
    let (Some(start), Some(end)) = (start, end) else {
        return Ok(Vec::new());
    };
    let hours = ((end - start) / SECONDS_PER_HOUR + 1) as usize;
    let grids: Vec<NodeGrid> = node_series
        .iter()
        .map(|s| {
            let mut g = NodeGrid {
                flow: vec![None; hours],
                precip: vec![None; hours],
            };
            for p in s.points() {
                let i = ((p.timestamp - start) / SECONDS_PER_HOUR) as usize;
                g.flow[i] = p.streamflow;
                g.precip[i] = p.precip;
            }
            g
        })
        .collect();

    let outlet = &grids[graph.outlet()].flow;
    // missing_before[i] = number of missing outlet hours in [0, i)
    let mut missing_before = Vec::with_capacity(hours + 1);
    missing_before.push(0usize);
    for v in outlet {
        missing_before.push(missing_before.last().unwrap() + usize::from(v.is_none()));
    }

    let n = graph.num_nodes();
    let mut snapshots = Vec::new();
    if hours < t_in + t_out {
        return Ok(snapshots);
    }
    for a in (t_in - 1)..(hours - t_out) {
        let (lo, hi) = (a + 1 - t_in, a + t_out + 1);
        if missing_before[hi] - missing_before[lo] > 0 {
            continue;
        }
        let mut input = Vec::with_capacity(n * 3 * t_in);
        let mut target = Vec::with_capacity(n * t_out);
        let mut mask = Vec::with_capacity(n * t_out);
        for g in &grids {
            let past = lo..=a;
            input.extend(past.clone().map(|i| g.flow[i].map_or(0.0, |q| norm.flow(q))));
            input.extend(past.map(|i| g.precip[i].map_or(0.0, |p| norm.precip(p))));
            input.extend((a + 1..a + 1 + t_in).map(|i| {
                g.precip
                    .get(i)
                    .copied()
                    .flatten()
                    .map_or(0.0, |p| norm.precip(p))
            }));
            for i in a + 1..hi {
                target.push(g.flow[i].map_or(0.0, |q| norm.flow(q)));
                mask.push(g.flow[i].is_some());
            }
        }
        snapshots.push(Snapshot {
            anchor: start + a as i64 * SECONDS_PER_HOUR,
            input: Tensor::new(vec![n, 3, t_in], input)?,
            target: Tensor::new(vec![n, t_out], target)?,
            target_mask: mask,
        });
    }
    Ok(snapshots)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SplitName {
    Train,
    Validation,
    Test,
}

impl SplitName {
    pub fn as_str(&self) -> &'static str {
        match self {
            SplitName::Train => "train",
            SplitName::Validation => "validation",
            SplitName::Test => "test",
        }
    }
}

impl std::str::FromStr for SplitName {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "train" => Ok(SplitName::Train),
            "validation" | "val" => Ok(SplitName::Validation),
            "test" => Ok(SplitName::Test),
            other => Err(Error::InvalidArgument(format!("unknown split `{other}`"))),
        }
    }
}

/// Half-open windows `[train_start, validation_start)`,
/// `[validation_start, test_start)`, `[test_start, test_end)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitBoundaries {
    pub train_start: i64,
    pub validation_start: i64,
    pub test_start: i64,
    pub test_end: i64,
}

impl SplitBoundaries {
    pub fn new(train_start: i64, validation_start: i64, test_start: i64, test_end: i64) -> Result<Self> {
        let b = SplitBoundaries {
            train_start,
            validation_start,
            test_start,
            test_end,
        };
        b.validate()?;
        Ok(b)
    }

    pub fn validate(&self) -> Result<()> {
        if self.train_start < self.validation_start
            && self.validation_start < self.test_start
            && self.test_start < self.test_end
        {
            Ok(())
        } else {
            Err(Error::InvalidArgument(format!(
                "split boundaries must be strictly increasing: {} < {} < {} < {}",
                format_timestamp(self.train_start),
                format_timestamp(self.validation_start),
                format_timestamp(self.test_start),
                format_timestamp(self.test_end)
            )))
        }
    }

    /// Splits `hours` hourly slots starting at `start` by the given train and
    /// validation fractions (the remainder is test), rounding to whole hours.
    pub fn by_fraction(start: i64, hours: usize, train: f64, validation: f64) -> Result<Self> {
        let at = |frac: f64| start + (frac * hours as f64).round() as i64 * SECONDS_PER_HOUR;
        Self::new(
            start,
            at(train),
            at(train + validation),
            start + hours as i64 * SECONDS_PER_HOUR,
        )
    }

    pub fn window(&self, name: SplitName) -> (i64, i64) {
        match name {
            SplitName::Train => (self.train_start, self.validation_start),
            SplitName::Validation => (self.validation_start, self.test_start),
            SplitName::Test => (self.test_start, self.test_end),
        }
    }

    pub fn classify(&self, anchor: i64) -> Option<SplitName> {
        [SplitName::Train, SplitName::Validation, SplitName::Test]
            .into_iter()
            .find(|&name| {
                let (s, e) = self.window(name);
                anchor >= s && anchor < e
            })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DatasetSplit {
    pub name: SplitName,
    pub start: i64,
    pub end: i64,
    pub snapshots: Vec<Snapshot>,
}

impl DatasetSplit {
    pub fn len(&self) -> usize {
        self.snapshots.len()
    }

    pub fn is_empty(&self) -> bool {
        self.snapshots.is_empty()
    }

    pub fn find(&self, anchor: i64) -> Option<&Snapshot> {
        self.snapshots
            .binary_search_by_key(&anchor, |s| s.anchor)
            .ok()
            .map(|i| &self.snapshots[i])
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Splits {
    pub train: DatasetSplit,
    pub validation: DatasetSplit,
    pub test: DatasetSplit,
    /// Snapshots whose anchor fell outside every window.
    pub dropped: usize,
}

impl Splits {
    pub fn get(&self, name: SplitName) -> &DatasetSplit {
        match name {
            SplitName::Train => &self.train,
            SplitName::Validation => &self.validation,
            SplitName::Test => &self.test,
        }
    }

    pub fn iter(&self) -> impl Iterator<Item = &DatasetSplit> {
        [&self.train, &self.validation, &self.test].into_iter()
    }
}

/// Partitions snapshots by anchor; an anchor on a boundary goes to the later
/// split. Snapshots outside all windows are dropped and counted.
pub fn split_snapshots(snapshots: Vec<Snapshot>, boundaries: &SplitBoundaries) -> Result<Splits> {
    boundaries.validate()?;
    let empty = |name| {
        let (start, end) = boundaries.window(name);
        DatasetSplit {
            name,
            start,
            end,
            snapshots: Vec::new(),
        }
    };
    let mut splits = Splits {
        train: empty(SplitName::Train),
        validation: empty(SplitName::Validation),
        test: empty(SplitName::Test),
        dropped: 0,
    };
    for s in snapshots {
        match boundaries.classify(s.anchor) {
            Some(SplitName::Train) => splits.train.snapshots.push(s),
            Some(SplitName::Validation) => splits.validation.snapshots.push(s),
            Some(SplitName::Test) => splits.test.snapshots.push(s),
            None => splits.dropped += 1,
        }
    }
    if splits.dropped > 0 {
        log::warn!(
            "{} snapshot(s) fell outside every split window and were dropped",
            splits.dropped
        );
    }
    Ok(splits)
}
