use std::io::Write;
use std::path::Path;

use crate::error::{Error, Result};
use crate::graph::{Edge, SensorGraph};

const NODE_HEADER: [&str; 3] = ["node_index", "sensor_id", "is_outlet"];
const EDGE_HEADER: [&str; 3] = ["src_index", "dst_index", "distance_km"];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct GraphOptions {
    /// Use `1/distance_km` as the edge weight instead of the raw distance.
    pub inverse_distance: bool,
}

impl Default for GraphOptions {
    fn default() -> Self {
        GraphOptions {
            inverse_distance: true,
        }
    }
}

/// Contents of a graph file: a node section followed by an edge section
/// whose third column is the gauge-to-gauge distance in kilometres.
#[derive(Debug, Clone, PartialEq)]
pub struct GraphFile {
    pub sensor_ids: Vec<String>,
    pub outlet: usize,
    /// `(src_index, dst_index, distance_km)`, upstream to downstream.
    pub edges: Vec<(usize, usize, f64)>,
}

enum Section {
    Start,
    Nodes,
    Edges,
}

impl GraphFile {
    pub fn read(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let err = |line: usize, message: String| Error::Parse {
            path: path.to_path_buf(),
            line: line as u64,
            message,
        };

        let mut section = Section::Start;
        let mut nodes: Vec<(usize, String, bool, usize)> = Vec::new();
        let mut edges = Vec::new();
        for (i, raw) in text.lines().enumerate() {
            let line = i + 1;
            let trimmed = raw.trim();
            if trimmed.is_empty() {
                continue;
            }
            let fields: Vec<&str> = trimmed.split(',').map(str::trim).collect();
            if fields == NODE_HEADER {
                if !matches!(section, Section::Start) {
                    return Err(err(line, "node header must come first".into()));
                }
                section = Section::Nodes;
                continue;
            }
            if fields == EDGE_HEADER {
                if !matches!(section, Section::Nodes) {
                    return Err(err(line, "edge header before node section".into()));
                }
                section = Section::Edges;
                continue;
            }
            if fields.len() != 3 {
                return Err(err(line, format!("expected 3 fields, found {}", fields.len())));
            }
            match section {
                Section::Start => {
                    return Err(err(
                        line,
                        format!("expected header `{}`", NODE_HEADER.join(",")),
                    ))
                }
                Section::Nodes => {
                    let index: usize = fields[0]
                        .parse()
                        .map_err(|_| err(line, format!("invalid node_index `{}`", fields[0])))?;
                    let outlet = match fields[2].to_ascii_lowercase().as_str() {
                        "true" | "1" | "yes" => true,
                        "false" | "0" | "no" => false,
                        other => return Err(err(line, format!("invalid is_outlet `{other}`"))),
                    };
                    if fields[1].is_empty() {
                        return Err(err(line, "empty sensor_id".into()));
                    }
                    nodes.push((index, fields[1].to_string(), outlet, line));
                }
                Section::Edges => {
                    let idx = |s: &str, name: &str| {
                        s.parse::<usize>()
                            .map_err(|_| err(line, format!("invalid {name} `{s}`")))
                    };
                    let src = idx(fields[0], "src_index")?;
                    let dst = idx(fields[1], "dst_index")?;
                    let dist: f64 = fields[2]
                        .parse()
                        .map_err(|_| err(line, format!("invalid distance_km `{}`", fields[2])))?;
                    if !(dist > 0.0 && dist.is_finite()) {
                        return Err(err(line, format!("distance must be positive, got {dist}")));
                    }
                    edges.push((src, dst, dist, line));
                }
            }
        }

        nodes.sort_by_key(|n| n.0);
        for (expected, node) in nodes.iter().enumerate() {
            if node.0 != expected {
                return Err(err(
                    node.3,
                    format!("node indices must be 0..N-1 without gaps; expected {expected}, found {}", node.0),
                ));
            }
        }
        let n = nodes.len();
        if n == 0 {
            return Err(err(0, "graph file defines no nodes".into()));
        }
        let outlets: Vec<usize> = nodes.iter().filter(|x| x.2).map(|x| x.0).collect();
        if outlets.len() != 1 {
            return Err(err(0, format!("exactly one outlet required, found {}", outlets.len())));
        }
        for &(src, dst, _, line) in &edges {
            for idx in [src, dst] {
                if idx >= n {
                    return Err(err(line, format!("edge references unknown node index {idx}")));
                }
            }
        }
        Ok(GraphFile {
            sensor_ids: nodes.into_iter().map(|x| x.1).collect(),
            outlet: outlets[0],
            edges: edges.into_iter().map(|(s, d, w, _)| (s, d, w)).collect(),
        })
    }

    pub fn write(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut out = Vec::new();
        writeln!(out, "{}", NODE_HEADER.join(",")).expect("write to Vec");
        for (i, id) in self.sensor_ids.iter().enumerate() {
            writeln!(out, "{i},{id},{}", i == self.outlet).expect("write to Vec");
        }
        writeln!(out, "{}", EDGE_HEADER.join(",")).expect("write to Vec");
        for (s, d, km) in &self.edges {
            writeln!(out, "{s},{d},{km}").expect("write to Vec");
        }
        crate::binfmt::write_file(path.as_ref(), &out)
    }

    pub fn to_graph(&self, options: GraphOptions) -> Result<SensorGraph> {
        let edges = self
            .edges
            .iter()
            .map(|&(src, dst, km)| Edge {
                src,
                dst,
                weight: if options.inverse_distance { 1.0 / km } else { km },
            })
            .collect();
        SensorGraph::new(self.sensor_ids.clone(), edges, self.outlet)
    }
}

pub fn load_graph(path: impl AsRef<Path>, options: GraphOptions) -> Result<SensorGraph> {
    GraphFile::read(path)?.to_graph(options)
}
