//! Snapshot cache file.
//!
//! ```text
//! magic      8 bytes  "SGCACHE\0"
//! version    u32
//! t_in, t_out, num_nodes, outlet          u32 each
//! q_min, q_max, p_min, p_max              f64 each
//! train_start, validation_start, test_start, test_end   i64 each
//! fingerprint                             u32 length + UTF-8 bytes
//! 3 × split (train, validation, test):
//!     count u64, then per snapshot:
//!         anchor i64
//!         input  N·3·T_in f64
//!         target N·T_out f64
//!         mask   N·T_out u8 (0/1)
//! crc32      u32 over everything above
//! ```
//!
//! All integers and floats are little-endian.

use std::path::Path;

use super::{
    build_snapshots, compute_normalization, split_snapshots, DatasetSplit, NormalizationConstants, SeriesSet, Snapshot,
    SplitBoundaries, SplitName, Splits,
};
use crate::graph::SensorGraph;
use crate::binfmt::{read_file, write_file, BinReader, BinWriter};
use crate::error::{Error, Result};
use crate::tensor::Tensor;

const MAGIC: &[u8; 8] = b"SGCACHE\0";
pub const CACHE_FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct SnapshotCache {
    pub t_in: usize,
    pub t_out: usize,
    pub num_nodes: usize,
    pub outlet: usize,
    pub normalization: NormalizationConstants,
    pub boundaries: SplitBoundaries,
    pub graph_fingerprint: String,
    pub splits: Splits,
}

impl SnapshotCache {
    pub fn split(&self, name: SplitName) -> &DatasetSplit {
        self.splits.get(name)
    }

    /// Snapshot with the given anchor in any split.
    pub fn find(&self, anchor: i64) -> Option<&Snapshot> {
        self.splits.iter().find_map(|s| s.find(anchor))
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut w = BinWriter::new();
        w.bytes(MAGIC);
        w.u32(CACHE_FORMAT_VERSION);
        for v in [self.t_in, self.t_out, self.num_nodes, self.outlet] {
            w.u32(v as u32);
        }
        let c = &self.normalization;
        for v in [c.q_min, c.q_max, c.p_min, c.p_max] {
            w.f64(v);
        }
        let b = &self.boundaries;
        for v in [b.train_start, b.validation_start, b.test_start, b.test_end] {
            w.i64(v);
        }
        w.blob(self.graph_fingerprint.as_bytes());
        for split in self.splits.iter() {
            w.u64(split.snapshots.len() as u64);
            for s in &split.snapshots {
                w.i64(s.anchor);
                w.f64s(s.input.data());
                w.f64s(s.target.data());
                for &m in &s.target_mask {
                    w.u8(u8::from(m));
                }
            }
        }
        w.finish()
    }

    pub fn from_bytes(bytes: &[u8], path: &Path) -> Result<Self> {
        let mut r = BinReader::verified(bytes, path)?;
        if r.bytes(MAGIC.len())? != MAGIC {
            return Err(r.err("not a snapshot cache (bad magic)"));
        }
        let version = r.u32()?;
        if version != CACHE_FORMAT_VERSION {
            return Err(Error::VersionMismatch {
                expected: CACHE_FORMAT_VERSION,
                found: version,
            });
        }
        let t_in = r.u32()? as usize;
        let t_out = r.u32()? as usize;
        let num_nodes = r.u32()? as usize;
        let outlet = r.u32()? as usize;
        let normalization = NormalizationConstants::new(r.f64()?, r.f64()?, r.f64()?, r.f64()?)?;
        let boundaries = SplitBoundaries::new(r.i64()?, r.i64()?, r.i64()?, r.i64()?)?;
        let graph_fingerprint = String::from_utf8(r.blob()?.to_vec())
            .map_err(|_| r.err("fingerprint is not UTF-8"))?;
        if t_in == 0 || t_out == 0 || num_nodes == 0 || outlet >= num_nodes {
            return Err(r.err("invalid header dimensions"));
        }

        let mut read_split = |name: SplitName| -> Result<DatasetSplit> {
            let count = r.u64()? as usize;
            let mut snapshots = Vec::with_capacity(count.min(1 << 20));
            for _ in 0..count {
                let anchor = r.i64()?;
                let input = Tensor::new(vec![num_nodes, 3, t_in], r.f64s(num_nodes * 3 * t_in)?)?;
                let target = Tensor::new(vec![num_nodes, t_out], r.f64s(num_nodes * t_out)?)?;
                let target_mask = r
                    .bytes(num_nodes * t_out)?
                    .iter()
                    .map(|&b| b != 0)
                    .collect();
                snapshots.push(Snapshot {
                    anchor,
                    input,
                    target,
                    target_mask,
                });
            }
            let (start, end) = boundaries.window(name);
            Ok(DatasetSplit {
                name,
                start,
                end,
                snapshots,
            })
        };
        let train = read_split(SplitName::Train)?;
        let validation = read_split(SplitName::Validation)?;
        let test = read_split(SplitName::Test)?;
        r.expect_end()?;
        Ok(SnapshotCache {
            t_in,
            t_out,
            num_nodes,
            outlet,
            normalization,
            boundaries,
            graph_fingerprint,
            splits: Splits {
                train,
                validation,
                test,
                dropped: 0,
            },
        })
    }
}

/// Normalizes against the outlet over the training window, builds every
/// snapshot and partitions them by `boundaries`.
pub fn build_cache(
    series: &SeriesSet,
    graph: &SensorGraph,
    t_in: usize,
    t_out: usize,
    boundaries: SplitBoundaries,
) -> Result<SnapshotCache> {
    boundaries.validate()?;
    let outlet_id = graph.sensor_id(graph.outlet());
    let outlet_series = series
        .get(outlet_id)
        .ok_or_else(|| Error::Dataset(format!("outlet sensor {outlet_id} has no series")))?;
    let normalization =
        compute_normalization(outlet_series, boundaries.train_start, boundaries.validation_start)?;
    let snapshots = build_snapshots(series, graph, t_in, t_out, &normalization)?;
    let splits = split_snapshots(snapshots, &boundaries)?;
    Ok(SnapshotCache {
        t_in,
        t_out,
        num_nodes: graph.num_nodes(),
        outlet: graph.outlet(),
        normalization,
        boundaries,
        graph_fingerprint: graph.fingerprint(),
        splits,
    })
}

pub fn write_cache(path: impl AsRef<Path>, cache: &SnapshotCache) -> Result<()> {
    write_file(path.as_ref(), &cache.to_bytes())
}

pub fn read_cache(path: impl AsRef<Path>) -> Result<SnapshotCache> {
    let path = path.as_ref();
    SnapshotCache::from_bytes(&read_file(path)?, path)
}
