//! River-gauge graphs and Chebyshev spectral graph convolution.
//!
//! The directed river network is symmetrized for the Laplacian; flow
//! direction survives only through which node is the outlet. With
//! `L = I − D^(−1/2)·W·D^(−1/2)` (zero-degree rows keep a unit diagonal) and
//! `λ_max` from power iteration, the scaled Laplacian `L̃ = (2/λ_max)·L − I`
//! has its spectrum in `[−1, 1]`, which is where Chebyshev polynomials are
//! well conditioned.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::tensor::{Tape, Tensor, Var};

/// Stopping tolerance on the power-iteration residual `‖Lv − λv‖`.
pub const POWER_ITERATION_TOL: f64 = 1e-8;
pub const POWER_ITERATION_MAX_ITERS: usize = 10_000;

#[derive(Debug, Clone, PartialEq)]
pub struct SensorNode {
    pub index: usize,
    pub sensor_id: String,
}

/// Directed edge `src → dst` (upstream to downstream) with positive weight.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Edge {
    pub src: usize,
    pub dst: usize,
    pub weight: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SensorGraph {
    nodes: Vec<SensorNode>,
    edges: Vec<Edge>,
    outlet: usize,
}

impl SensorGraph {
    /// Node `i` gets graph index `i`.
    pub fn new(sensor_ids: Vec<String>, edges: Vec<Edge>, outlet: usize) -> Result<Self> {
        let n = sensor_ids.len();
        if n == 0 {
            return Err(Error::Graph("graph has no nodes".into()));
        }
        let mut seen = std::collections::HashSet::new();
        for id in &sensor_ids {
            if !seen.insert(id.as_str()) {
                return Err(Error::Graph(format!("duplicate sensor id {id}")));
            }
        }
        if outlet >= n {
            return Err(Error::Graph(format!(
                "outlet index {outlet} out of range for {n} nodes"
            )));
        }
        let mut pairs = std::collections::HashSet::new();
        for e in &edges {
            if e.src >= n || e.dst >= n {
                return Err(Error::Graph(format!(
                    "edge {}→{} references a node outside 0..{n}",
                    e.src, e.dst
                )));
            }
            if e.src == e.dst {
                return Err(Error::Graph(format!("self-loop on node {}", e.src)));
            }
            if !(e.weight > 0.0 && e.weight.is_finite()) {
                return Err(Error::Graph(format!(
                    "edge {}→{} has non-positive weight {}",
                    e.src, e.dst, e.weight
                )));
            }
            if !pairs.insert((e.src.min(e.dst), e.src.max(e.dst))) {
                return Err(Error::Graph(format!(
                    "duplicate edge between nodes {} and {}",
                    e.src, e.dst
                )));
            }
        }
        let nodes = sensor_ids
            .into_iter()
            .enumerate()
            .map(|(index, sensor_id)| SensorNode { index, sensor_id })
            .collect();
        Ok(SensorGraph {
            nodes,
            edges,
            outlet,
        })
    }

    pub fn num_nodes(&self) -> usize {
        self.nodes.len()
    }

    pub fn nodes(&self) -> &[SensorNode] {
        &self.nodes
    }

    pub fn edges(&self) -> &[Edge] {
        &self.edges
    }

    pub fn outlet(&self) -> usize {
        self.outlet
    }

    pub fn sensor_id(&self, index: usize) -> &str {
        &self.nodes[index].sensor_id
    }

    pub fn index_of(&self, sensor_id: &str) -> Option<usize> {
        self.nodes.iter().position(|n| n.sensor_id == sensor_id)
    }

    /// Hex SHA-256 over node ids, edges (with exact weight bits) and outlet.
    pub fn fingerprint(&self) -> String {
        let mut h = Sha256::new();
        h.update((self.nodes.len() as u64).to_le_bytes());
        for n in &self.nodes {
            h.update((n.sensor_id.len() as u64).to_le_bytes());
            h.update(n.sensor_id.as_bytes());
        }
        h.update((self.edges.len() as u64).to_le_bytes());
        for e in &self.edges {
            h.update((e.src as u64).to_le_bytes());
            h.update((e.dst as u64).to_le_bytes());
            h.update(e.weight.to_bits().to_le_bytes());
        }
        h.update((self.outlet as u64).to_le_bytes());
        h.finalize().iter().map(|b| format!("{b:02x}")).collect()
    }

    /// Symmetric weighted adjacency.
    pub fn adjacency(&self) -> Tensor {
        let n = self.num_nodes();
        let mut w = Tensor::zeros(vec![n, n]);
        let d = w.data_mut();
        for e in &self.edges {
            d[e.src * n + e.dst] = e.weight;
            d[e.dst * n + e.src] = e.weight;
        }
        w
    }

    /// Symmetric-normalized Laplacian `I − D^(−1/2)·W·D^(−1/2)`, with 0/0 → 0.
    pub fn normalized_laplacian(&self) -> Tensor {
        let n = self.num_nodes();
        let w = self.adjacency();
        let inv_sqrt_deg: Vec<f64> = (0..n)
            .map(|i| {
                let deg: f64 = w.data()[i * n..(i + 1) * n].iter().sum();
                if deg > 0.0 {
                    1.0 / deg.sqrt()
                } else {
                    0.0
                }
            })
            .collect();
        let mut l = Tensor::identity(n);
        let ld = l.data_mut();
        for i in 0..n {
            for j in 0..n {
                let wij = w.data()[i * n + j];
                if wij != 0.0 {
                    ld[i * n + j] -= inv_sqrt_deg[i] * wij * inv_sqrt_deg[j];
                }
            }
        }
        l
    }
}

/// Rescaled Laplacian `L̃ = (2/λ_max)·L − I`. Immutable once built.
#[derive(Debug, Clone, PartialEq)]
pub struct ScaledLaplacian {
    matrix: Tensor,
    lambda_max: f64,
    graph_fingerprint: String,
}

impl ScaledLaplacian {
    pub fn matrix(&self) -> &Tensor {
        &self.matrix
    }

    pub fn lambda_max(&self) -> f64 {
        self.lambda_max
    }

    pub fn num_nodes(&self) -> usize {
        self.matrix.shape()[0]
    }

    pub fn graph_fingerprint(&self) -> &str {
        &self.graph_fingerprint
    }

    /// Records the matrix on `tape` as a constant.
    pub fn bind<'t>(&self, tape: &'t Tape) -> BoundLaplacian<'t> {
        BoundLaplacian {
            var: tape.constant(self.matrix.clone()),
            n: self.num_nodes(),
        }
    }
}

/// A scaled Laplacian recorded on a tape.
#[derive(Debug, Clone, Copy)]
pub struct BoundLaplacian<'t> {
    var: Var<'t>,
    n: usize,
}

impl<'t> BoundLaplacian<'t> {
    pub fn var(&self) -> Var<'t> {
        self.var
    }

    pub fn num_nodes(&self) -> usize {
        self.n
    }
}

pub fn scaled_laplacian(graph: &SensorGraph) -> Result<ScaledLaplacian> {
    for e in graph.edges() {
        if !(e.weight > 0.0) {
            return Err(Error::Graph(format!("non-positive weight {}", e.weight)));
        }
    }
    let n = graph.num_nodes();
    let l = graph.normalized_laplacian();
    let lambda_max = if graph.edges().is_empty() {
        2.0
    } else {
        power_iteration(&l, POWER_ITERATION_TOL, POWER_ITERATION_MAX_ITERS)
    };
    let mut scaled = l;
    for (i, v) in scaled.data_mut().iter_mut().enumerate() {
        *v *= 2.0 / lambda_max;
        if i / n == i % n {
            *v -= 1.0;
        }
    }
    Ok(ScaledLaplacian {
        matrix: scaled,
        lambda_max,
        graph_fingerprint: graph.fingerprint(),
    })
}

/// Dominant eigenvalue (by magnitude) of a symmetric matrix.
///
/// Starts from a fixed pseudo-random vector and stops once the residual
/// `‖Av − λv‖` falls below `tol` or after `max_iters` iterations.
pub fn power_iteration(a: &Tensor, tol: f64, max_iters: usize) -> f64 {
    let n = a.shape()[0];
    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed_1a91);
    let mut v: Vec<f64> = (0..n).map(|_| rng.gen_range(0.5..1.5) * sign_alternating(&mut rng)).collect();
    normalize(&mut v);
    let mut lambda = 0.0;
    let mut av = vec![0.0; n];
    for _ in 0..max_iters {
        mat_vec(a.data(), &v, &mut av, n);
        lambda = dot(&v, &av);
        let residual = av
            .iter()
            .zip(&v)
            .map(|(x, y)| (x - lambda * y).powi(2))
            .sum::<f64>()
            .sqrt();
        if residual < tol {
            break;
        }
        let norm = dot(&av, &av).sqrt();
        if norm == 0.0 {
            return 0.0;
        }
        for (vi, &x) in v.iter_mut().zip(&av) {
            *vi = x / norm;
        }
    }
    lambda.abs()
}

fn sign_alternating(rng: &mut ChaCha8Rng) -> f64 {
    if rng.gen_bool(0.5) {
        1.0
    } else {
        -1.0
    }
}

fn mat_vec(a: &[f64], v: &[f64], out: &mut [f64], n: usize) {
    for (i, o) in out.iter_mut().enumerate() {
        *o = dot(&a[i * n..(i + 1) * n], v);
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn normalize(v: &mut [f64]) {
    let norm = dot(v, v).sqrt();
    for x in v {
        *x /= norm;
    }
}

/// `[T_0(L̃)x | T_1(L̃)x | … | T_{K−1}(L̃)x]`, an `N×(K·F)` matrix.
///
/// Uses `T_0 = I`, `T_1 = L̃`, `T_k = 2·L̃·T_{k−1} − T_{k−2}` applied to `x`.
pub fn chebyshev_basis<'t>(x: Var<'t>, lap: &BoundLaplacian<'t>, k: usize) -> Result<Var<'t>> {
    if k < 1 {
        return Err(Error::InvalidArgument("Chebyshev order K must be ≥ 1".into()));
    }
    let shape = x.shape();
    if shape.len() != 2 || shape[0] != lap.n {
        return Err(Error::shape("chebyshev_basis", &shape, &[lap.n, lap.n]));
    }
    if k == 1 {
        return Ok(x);
    }
    let mut terms = Vec::with_capacity(k);
    terms.push(x);
    terms.push(lap.var.matmul(x)?);
    for i in 2..k {
        let next = lap.var.matmul(terms[i - 1])?.scale(2.0).sub(terms[i - 2])?;
        terms.push(next);
    }
    Var::concat(&terms, 1)
}

/// `Σ_{k<K} T_k(L̃)·x·θ_k` for `x: N×F_in` and `theta: K×F_in×F_out`.
pub fn chebyshev_conv<'t>(
    x: Var<'t>,
    lap: &BoundLaplacian<'t>,
    theta: Var<'t>,
    k: usize,
) -> Result<Var<'t>> {
    let ts = theta.shape();
    let xs = x.shape();
    if ts.len() != 3 || xs.len() != 2 || ts[0] != k || ts[1] != xs[1] {
        return Err(Error::shape("chebyshev_conv", &xs, &ts));
    }
    let basis = chebyshev_basis(x, lap, k)?;
    basis.matmul(theta.reshape(vec![ts[0] * ts[1], ts[2]])?)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn graph(n: usize, edges: &[(usize, usize, f64)]) -> SensorGraph {
        SensorGraph::new(
            (0..n).map(|i| format!("s{i}")).collect(),
            edges
                .iter()
                .map(|&(src, dst, weight)| Edge { src, dst, weight })
                .collect(),
            n - 1,
        )
        .unwrap()
    }

    #[test]
    fn two_node_graph_any_weight() {
        for w in [0.1, 1.0, 37.5] {
            let lap = scaled_laplacian(&graph(2, &[(0, 1, w)])).unwrap();
            assert!((lap.lambda_max() - 2.0).abs() < 1e-9);
            let m = lap.matrix().data();
            let expected = [0.0, -1.0, -1.0, 0.0];
            for (a, b) in m.iter().zip(expected) {
                assert!((a - b).abs() < 1e-9, "{m:?}");
            }
        }
    }

    #[test]
    fn single_isolated_node() {
        let g = graph(1, &[]);
        assert_eq!(g.normalized_laplacian().data(), &[1.0]);
        let lap = scaled_laplacian(&g).unwrap();
        assert_eq!(lap.lambda_max(), 2.0);
        assert_eq!(lap.matrix().data(), &[0.0]);
    }

    #[test]
    fn rejects_invalid_graphs() {
        let ids = || vec!["a".to_string(), "b".to_string()];
        let e = |src, dst, weight| vec![Edge { src, dst, weight }];
        assert!(SensorGraph::new(ids(), e(0, 1, 0.0), 1).is_err());
        assert!(SensorGraph::new(ids(), e(0, 1, -1.0), 1).is_err());
        assert!(SensorGraph::new(ids(), e(0, 2, 1.0), 1).is_err());
        assert!(SensorGraph::new(ids(), e(1, 1, 1.0), 1).is_err());
        assert!(SensorGraph::new(ids(), e(0, 1, 1.0), 2).is_err());
        assert!(SensorGraph::new(vec!["a".into(), "a".into()], vec![], 0).is_err());
    }

    #[test]
    fn laplacian_is_symmetric() {
        let g = graph(4, &[(0, 1, 2.0), (1, 3, 0.5), (2, 3, 1.0)]);
        let lap = scaled_laplacian(&g).unwrap();
        let m = lap.matrix().data();
        for i in 0..4 {
            for j in 0..4 {
                assert!((m[i * 4 + j] - m[j * 4 + i]).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn order_one_is_plain_feature_transform() {
        let g = graph(3, &[(0, 2, 1.0), (1, 2, 1.0)]);
        let lap = scaled_laplacian(&g).unwrap();
        let tape = Tape::new();
        let bl = lap.bind(&tape);
        let x = tape.constant(Tensor::matrix(3, 2, vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0]).unwrap());
        let theta_t = Tensor::new(vec![1, 2, 1], vec![0.5, -1.0]).unwrap();
        let theta = tape.constant(theta_t.clone());
        let out = chebyshev_conv(x, &bl, theta, 1).unwrap().value();
        let expected = x.value().matmul(&theta_t.reshaped(vec![2, 1]).unwrap()).unwrap();
        assert_eq!(out, expected);
    }

    #[test]
    fn conv_rejects_bad_order() {
        let lap = scaled_laplacian(&graph(2, &[(0, 1, 1.0)])).unwrap();
        let tape = Tape::new();
        let bl = lap.bind(&tape);
        let x = tape.constant(Tensor::zeros(vec![2, 1]));
        let theta = tape.constant(Tensor::zeros(vec![2, 1, 1]));
        assert!(chebyshev_conv(x, &bl, theta, 3).is_err());
        assert!(chebyshev_basis(x, &bl, 0).is_err());
        let wrong = tape.constant(Tensor::zeros(vec![3, 1]));
        assert!(chebyshev_basis(wrong, &bl, 2).is_err());
    }

    #[test]
    fn fingerprint_tracks_weights() {
        let a = graph(2, &[(0, 1, 1.0)]);
        let b = graph(2, &[(0, 1, 1.0 + 1e-15)]);
        assert_eq!(a.fingerprint(), a.clone().fingerprint());
        assert_ne!(a.fingerprint(), b.fingerprint());
    }
}
