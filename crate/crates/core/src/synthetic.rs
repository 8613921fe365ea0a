//! Synthetic river networks with linear-reservoir runoff and delayed
//! downstream routing.
//!
//! Every node owns a reservoir fed by its local rain:
//! `s[t+1] = k·s[t] + rain[t]`, local runoff `(1 − k)·s[t]`. A node's
//! discharge is its local runoff plus each child's discharge shifted by the
//! child's edge delay. Observed discharge carries multiplicative uniform
//! noise. The precipitation written for a gauge is the mean rain over its
//! upstream watershed (the gauge itself and everything draining into it).

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::dataset::{GraphFile, HourlyPoint, SensorSeries, SeriesSet, SECONDS_PER_HOUR};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SyntheticConfig {
    pub num_nodes: usize,
    pub topology_seed: u64,
    /// Explicit downstream neighbour of every node (`None` for the outlet);
    /// overrides the random tree.
    pub parents: Option<Vec<Option<usize>>>,
    /// Chance per hour that a storm starts.
    pub event_probability: f64,
    pub event_max_hours: usize,
    /// Storm intensity in mm/h, drawn uniformly per storm.
    pub intensity_min: f64,
    pub intensity_max: f64,
    /// Each node scales a storm's intensity by a factor drawn from
    /// `[1 − v, 1 + v]`.
    pub spatial_variability: f64,
    pub storage_min: f64,
    pub storage_max: f64,
    pub delay_min: usize,
    pub delay_max: usize,
    pub hours: usize,
    /// Relative amplitude of the multiplicative discharge noise.
    pub noise: f64,
    /// Converts travel delay to reach length for the graph file.
    pub km_per_hour: f64,
    /// First timestamp, UTC seconds.
    pub start: i64,
}

impl Default for SyntheticConfig {
    fn default() -> Self {
        SyntheticConfig {
            num_nodes: 8,
            topology_seed: 7,
            parents: None,
            event_probability: 0.015,
            event_max_hours: 8,
            intensity_min: 0.5,
            intensity_max: 8.0,
            spatial_variability: 0.5,
            storage_min: 0.80,
            storage_max: 0.95,
            delay_min: 1,
            delay_max: 6,
            hours: 4000,
            noise: 0.02,
            km_per_hour: 3.6,
            // 2011-10-01T00:00:00Z
            start: 1_317_427_200,
        }
    }
}

impl SyntheticConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidArgument(format!("synthetic config: {m}")));
        if self.num_nodes == 0 || self.hours == 0 {
            return bad("num_nodes and hours must be positive");
        }
        if !(0.0..=1.0).contains(&self.event_probability) {
            return bad("event_probability must lie in [0, 1]");
        }
        if self.event_max_hours == 0 {
            return bad("event_max_hours must be positive");
        }
        if !(self.intensity_min >= 0.0 && self.intensity_min <= self.intensity_max) {
            return bad("intensity bounds must satisfy 0 <= min <= max");
        }
        if !(0.0..1.0).contains(&self.spatial_variability) {
            return bad("spatial_variability must lie in [0, 1)");
        }
        if !(self.storage_min > 0.0 && self.storage_min <= self.storage_max && self.storage_max < 1.0) {
            return bad("storage coefficients must lie in (0, 1)");
        }
        if self.delay_min == 0 || self.delay_min > self.delay_max {
            return bad("delays must satisfy 1 <= min <= max");
        }
        if !(self.noise >= 0.0 && self.noise < 1.0) {
            return bad("noise must lie in [0, 1)");
        }
        if !(self.km_per_hour > 0.0) {
            return bad("km_per_hour must be positive");
        }
        if self.start % SECONDS_PER_HOUR != 0 {
            return bad("start must be hour-aligned");
        }
        Ok(())
    }
}

/// A directed tree of reservoirs draining to a single outlet.
#[derive(Debug, Clone, PartialEq)]
pub struct RiverNetwork {
    parents: Vec<Option<usize>>,
    storage: Vec<f64>,
    /// Delay in hours of the edge to the parent; 0 at the outlet.
    delays: Vec<usize>,
    outlet: usize,
    /// Children before parents.
    order: Vec<usize>,
}

impl RiverNetwork {
    pub fn new(parents: Vec<Option<usize>>, storage: Vec<f64>, delays: Vec<usize>) -> Result<Self> {
        let n = parents.len();
        if n == 0 || storage.len() != n || delays.len() != n {
            return Err(Error::InvalidArgument(
                "river network needs equal, non-zero numbers of parents, storages and delays".into(),
            ));
        }
        let roots: Vec<usize> = (0..n).filter(|&i| parents[i].is_none()).collect();
        if roots.len() != 1 {
            return Err(Error::Graph(format!(
                "river network needs exactly one outlet, found {}",
                roots.len()
            )));
        }
        let outlet = roots[0];
        for (i, p) in parents.iter().enumerate() {
            if let Some(p) = *p {
                if p >= n || p == i {
                    return Err(Error::Graph(format!("node {i} has invalid parent {p}")));
                }
                if delays[i] == 0 {
                    return Err(Error::InvalidArgument(format!("edge {i}->{p} has zero delay")));
                }
            }
            if !(storage[i] > 0.0 && storage[i] < 1.0) {
                return Err(Error::InvalidArgument(format!(
                    "storage coefficient of node {i} is {}, expected (0, 1)",
                    storage[i]
                )));
            }
        }
        // Depth along parent links; a walk longer than n means a cycle.
        let mut depth = vec![0usize; n];
        for (i, d) in depth.iter_mut().enumerate() {
            let mut cur = i;
            while let Some(p) = parents[cur] {
                *d += 1;
                if *d > n {
                    return Err(Error::Graph(format!("cycle through node {i}")));
                }
                cur = p;
            }
        }
        let mut order: Vec<usize> = (0..n).collect();
        order.sort_by_key(|&i| (std::cmp::Reverse(depth[i]), i));
        Ok(RiverNetwork {
            parents,
            storage,
            delays,
            outlet,
            order,
        })
    }

    /// Random tree in which every node drains to a higher index; the last
    /// node is the outlet.
    pub fn random(config: &SyntheticConfig) -> Result<Self> {
        config.validate()?;
        let n = config.num_nodes;
        let mut rng = ChaCha8Rng::seed_from_u64(config.topology_seed);
        let parents = match &config.parents {
            Some(p) => {
                if p.len() != n {
                    return Err(Error::InvalidArgument(format!(
                        "{} parents given for {n} nodes",
                        p.len()
                    )));
                }
                p.clone()
            }
            None => (0..n)
                .map(|i| (i + 1 < n).then(|| rng.gen_range(i + 1..n)))
                .collect(),
        };
        let storage = (0..n)
            .map(|_| rng.gen_range(config.storage_min..=config.storage_max))
            .collect();
        let delays = parents
            .iter()
            .map(|p| match p {
                Some(_) => rng.gen_range(config.delay_min..=config.delay_max),
                None => 0,
            })
            .collect();
        Self::new(parents, storage, delays)
    }

    pub fn num_nodes(&self) -> usize {
        self.parents.len()
    }

    pub fn outlet(&self) -> usize {
        self.outlet
    }

    pub fn parent(&self, node: usize) -> Option<usize> {
        self.parents[node]
    }

    pub fn storage(&self, node: usize) -> f64 {
        self.storage[node]
    }

    pub fn delay(&self, node: usize) -> usize {
        self.delays[node]
    }

    /// `node` and every node draining into it.
    pub fn watershed(&self, node: usize) -> Vec<usize> {
        (0..self.num_nodes())
            .filter(|&i| {
                let mut cur = Some(i);
                while let Some(c) = cur {
                    if c == node {
                        return true;
                    }
                    cur = self.parents[c];
                }
                false
            })
            .collect()
    }

    /// Noise-free discharge `[node][hour]` for rain `[node][hour]`, starting
    /// from empty reservoirs and channels.
    pub fn route(&self, rain: &[Vec<f64>]) -> Result<Vec<Vec<f64>>> {
        let n = self.num_nodes();
        if rain.len() != n {
            return Err(Error::shape("route", &[rain.len()], &[n]));
        }
        let hours = rain[0].len();
        if rain.iter().any(|r| r.len() != hours) {
            return Err(Error::InvalidArgument("rain series differ in length".into()));
        }
        let mut discharge = vec![vec![0.0; hours]; n];
        for &i in &self.order {
            let k = self.storage[i];
            let mut s = 0.0;
            for t in 0..hours {
                discharge[i][t] += (1.0 - k) * s;
                s = k * s + rain[i][t];
            }
            if let Some(p) = self.parents[i] {
                let d = self.delays[i];
                for t in d..hours {
                    discharge[p][t] += discharge[i][t - d];
                }
            }
        }
        Ok(discharge)
    }
}

/// Storm rain `[node][hour]`.
pub fn generate_rain(config: &SyntheticConfig, num_nodes: usize, rng: &mut impl Rng) -> Vec<Vec<f64>> {
    let mut rain = vec![vec![0.0; config.hours]; num_nodes];
    let v = config.spatial_variability;
    for t in 0..config.hours {
        if !rng.gen_bool(config.event_probability) {
            continue;
        }
        let duration = rng.gen_range(1..=config.event_max_hours);
        let intensity = rng.gen_range(config.intensity_min..=config.intensity_max);
        for r in rain.iter_mut() {
            let factor = if v > 0.0 { rng.gen_range(1.0 - v..=1.0 + v) } else { 1.0 };
            for cell in r.iter_mut().skip(t).take(duration) {
                *cell += intensity * factor;
            }
        }
    }
    rain
}

#[derive(Debug, Clone)]
pub struct SyntheticData {
    pub config: SyntheticConfig,
    pub network: RiverNetwork,
    pub sensor_ids: Vec<String>,
    /// Rain falling on each node's own reservoir.
    pub rain: Vec<Vec<f64>>,
    /// Watershed-mean rain reported at each gauge.
    pub precip: Vec<Vec<f64>>,
    pub clean_discharge: Vec<Vec<f64>>,
    pub discharge: Vec<Vec<f64>>,
}

/// Deterministic in `(config, seed)`. `seed` drives rain and noise; the
/// tree and routing constants come from `config.topology_seed`.
pub fn generate(config: &SyntheticConfig, seed: u64) -> Result<SyntheticData> {
    let network = RiverNetwork::random(config)?;
    let n = network.num_nodes();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let rain = generate_rain(config, n, &mut rng);
    let clean_discharge = network.route(&rain)?;
    let discharge = clean_discharge
        .iter()
        .map(|q| {
            q.iter()
                .map(|&v| {
                    let e = if config.noise > 0.0 {
                        rng.gen_range(-config.noise..=config.noise)
                    } else {
                        0.0
                    };
                    v * (1.0 + e)
                })
                .collect()
        })
        .collect();
    let precip = (0..n)
        .map(|i| {
            let ws = network.watershed(i);
            (0..config.hours)
                .map(|t| ws.iter().map(|&j| rain[j][t]).sum::<f64>() / ws.len() as f64)
                .collect()
        })
        .collect();
    Ok(SyntheticData {
        config: config.clone(),
        sensor_ids: (0..n).map(|i| format!("SYN{i:02}")).collect(),
        network,
        rain,
        precip,
        clean_discharge,
        discharge,
    })
}

impl SyntheticData {
    pub fn timestamp(&self, hour: usize) -> i64 {
        self.config.start + hour as i64 * SECONDS_PER_HOUR
    }

    pub fn series_set(&self) -> Result<SeriesSet> {
        let mut set = BTreeMap::new();
        for (i, id) in self.sensor_ids.iter().enumerate() {
            let points = (0..self.config.hours)
                .map(|t| HourlyPoint {
                    timestamp: self.timestamp(t),
                    streamflow: Some(self.discharge[i][t]),
                    precip: Some(self.precip[i][t]),
                })
                .collect();
            set.insert(id.clone(), SensorSeries::new(id.clone(), points)?);
        }
        Ok(set)
    }

    /// Edges point downstream; lengths are travel delay times speed.
    pub fn graph_file(&self) -> GraphFile {
        let net = &self.network;
        GraphFile {
            sensor_ids: self.sensor_ids.clone(),
            outlet: net.outlet(),
            edges: (0..net.num_nodes())
                .filter_map(|i| {
                    net.parent(i)
                        .map(|p| (i, p, net.delay(i) as f64 * self.config.km_per_hour))
                })
                .collect(),
        }
    }

    /// Writes `series.csv` and `graph.csv` into `dir`.
    pub fn write(&self, dir: impl AsRef<Path>) -> Result<(PathBuf, PathBuf)> {
        let dir = dir.as_ref();
        let series = dir.join("series.csv");
        let graph = dir.join("graph.csv");
        crate::dataset::write_series(&series, self.series_set()?.values())?;
        self.graph_file().write(&graph)?;
        Ok((series, graph))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn chain() -> RiverNetwork {
        // 0 -> 1 -> 2 (outlet)
        RiverNetwork::new(vec![Some(1), Some(2), None], vec![0.5, 0.8, 0.9], vec![2, 3, 0]).unwrap()
    }

    #[test]
    fn zero_rain_gives_zero_discharge() {
        let q = chain().route(&vec![vec![0.0; 50]; 3]).unwrap();
        assert!(q.iter().flatten().all(|&v| v == 0.0));
    }

    #[test]
    fn routing_is_linear() {
        let net = chain();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let rain: Vec<Vec<f64>> = (0..3).map(|_| (0..40).map(|_| rng.gen_range(0.0..3.0)).collect()).collect();
        let double: Vec<Vec<f64>> = rain.iter().map(|r| r.iter().map(|v| 2.0 * v).collect()).collect();
        let a = net.route(&rain).unwrap();
        let b = net.route(&double).unwrap();
        for (x, y) in a.iter().flatten().zip(b.iter().flatten()) {
            assert!((2.0 * x - y).abs() <= 1e-12 * y.abs().max(1.0));
        }
    }

    #[test]
    fn leaf_impulse_reaches_outlet_attenuated_and_delayed() {
        let net = chain();
        let hours = 400;
        let mut rain = vec![vec![0.0; hours]; 3];
        rain[0][0] = 1.0;
        let q = net.route(&rain).unwrap();
        // Leaf response: (1−k)·k^(t−1) for t ≥ 1.
        for t in 1..10 {
            let expected = 0.5 * 0.5f64.powi(t as i32 - 1);
            assert!((q[0][t] - expected).abs() < 1e-15);
        }
        // Nothing reaches the outlet before 1 h of storage plus 5 h of travel.
        assert!(q[2][..6].iter().all(|&v| v == 0.0));
        assert!((q[2][6] - 0.5).abs() < 1e-15);
        assert!(q[2][6] < 1.0);
        let total: f64 = q[2].iter().sum();
        assert!((total - 1.0).abs() < 1e-9, "mass {total}");
    }

    #[test]
    fn outlet_collects_all_rain_over_long_horizons() {
        let cfg = SyntheticConfig {
            noise: 0.0,
            hours: 3000,
            ..SyntheticConfig::default()
        };
        let mut data = generate(&cfg, 3).unwrap();
        // Stop the rain well before the end so reservoirs drain.
        for r in data.rain.iter_mut() {
            r[2000..].iter_mut().for_each(|v| *v = 0.0);
        }
        let q = data.network.route(&data.rain).unwrap();
        let injected: f64 = data.rain.iter().flatten().sum();
        let out: f64 = q[data.network.outlet()].iter().sum();
        assert!(injected > 0.0);
        assert!((out - injected).abs() / injected < 1e-6, "{out} vs {injected}");
    }

    #[test]
    fn generation_is_deterministic() {
        let cfg = SyntheticConfig {
            hours: 300,
            ..SyntheticConfig::default()
        };
        let a = generate(&cfg, 5).unwrap();
        let b = generate(&cfg, 5).unwrap();
        assert_eq!(a.discharge, b.discharge);
        assert_eq!(a.precip, b.precip);
        assert_ne!(generate(&cfg, 6).unwrap().discharge, a.discharge);
    }

    #[test]
    fn random_tree_drains_to_last_node() {
        let net = RiverNetwork::random(&SyntheticConfig::default()).unwrap();
        assert_eq!(net.outlet(), 7);
        assert_eq!(net.watershed(7).len(), 8);
        for i in 0..7 {
            assert!(net.parent(i).unwrap() > i);
            assert!((1..=6).contains(&net.delay(i)));
        }
    }

    #[test]
    fn invalid_networks_are_rejected() {
        let cyc = RiverNetwork::new(vec![Some(1), Some(0), None], vec![0.5; 3], vec![1, 1, 0]);
        assert!(cyc.is_err());
        let two_roots = RiverNetwork::new(vec![None, None], vec![0.5; 2], vec![0, 0]);
        assert!(two_roots.is_err());
        let zero_delay = RiverNetwork::new(vec![Some(1), None], vec![0.5; 2], vec![0, 0]);
        assert!(zero_delay.is_err());
        let bad_k = RiverNetwork::new(vec![Some(1), None], vec![1.0, 0.5], vec![1, 0]);
        assert!(bad_k.is_err());
        let cfg = SyntheticConfig {
            storage_max: 1.0,
            ..SyntheticConfig::default()
        };
        assert!(generate(&cfg, 0).is_err());
    }

    #[test]
    fn written_files_load_back() {
        let cfg = SyntheticConfig {
            hours: 120,
            ..SyntheticConfig::default()
        };
        let data = generate(&cfg, 1).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let (series, graph) = data.write(dir.path()).unwrap();
        let loaded = crate::dataset::load_series(&series).unwrap();
        assert_eq!(loaded, data.series_set().unwrap());
        let g = crate::dataset::load_graph(&graph, Default::default()).unwrap();
        assert_eq!(g.num_nodes(), 8);
        assert_eq!(g.outlet(), 7);
    }
}
