use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::cells::{BoundGConvGru, BoundLinear, GConvGruCell, GConvGruConfig, Linear};
use crate::error::{Error, Result};
use crate::graph::{BoundLaplacian, ScaledLaplacian};
use crate::params::{prefixed, prefixed_mut, ParamBinder, Parameterized};
use crate::tensor::{Tape, Tensor, Var};

/// Names of the three input sequences, in snapshot channel order.
const SUBNETWORKS: [&str; 3] = ["past_flow", "past_precip", "future_precip"];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct StreamConfig {
    pub hidden_size: usize,
    pub cheb_k: usize,
    /// Stacked GConvGRU layers per subnetwork.
    pub layers: usize,
    pub bias: bool,
    pub t_in: usize,
    pub t_out: usize,
}

impl Default for StreamConfig {
    fn default() -> Self {
        StreamConfig {
            hidden_size: 32,
            cheb_k: 2,
            layers: 1,
            bias: true,
            t_in: 36,
            t_out: 36,
        }
    }
}

/// Three GConvGRU subnetworks (past streamflow, past precipitation, future
/// precipitation) whose final hidden states are summed and mapped per node by
/// a shared linear head `H → T_out`.
#[derive(Debug, Clone, PartialEq)]
pub struct StreamGConvGru {
    config: StreamConfig,
    num_nodes: usize,
    graph_fingerprint: String,
    subnetworks: [Vec<GConvGruCell>; 3],
    head: Linear,
}

impl StreamGConvGru {
    pub fn init(config: StreamConfig, laplacian: &ScaledLaplacian, seed: u64) -> Result<Self> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut build = |input_size| GConvGruCell::init(cell_config(&config, input_size), &mut rng);
        let mut subnetworks: [Vec<GConvGruCell>; 3] = Default::default();
        Self::validate(&config)?;
        for net in subnetworks.iter_mut() {
            for layer in 0..config.layers {
                net.push(build(if layer == 0 { 1 } else { config.hidden_size })?);
            }
        }
        let head = Linear::init(config.hidden_size, config.t_out, &mut rng)?;
        Ok(StreamGConvGru {
            config,
            num_nodes: laplacian.num_nodes(),
            graph_fingerprint: laplacian.graph_fingerprint().to_string(),
            subnetworks,
            head,
        })
    }

    /// All parameters zero.
    pub fn zeros(config: StreamConfig, num_nodes: usize, graph_fingerprint: impl Into<String>) -> Result<Self> {
        Self::validate(&config)?;
        let mut subnetworks: [Vec<GConvGruCell>; 3] = Default::default();
        for net in subnetworks.iter_mut() {
            for layer in 0..config.layers {
                let input = if layer == 0 { 1 } else { config.hidden_size };
                net.push(GConvGruCell::zeros(cell_config(&config, input))?);
            }
        }
        Ok(StreamGConvGru {
            config,
            num_nodes,
            graph_fingerprint: graph_fingerprint.into(),
            subnetworks,
            head: Linear::zeros(config.hidden_size, config.t_out)?,
        })
    }

    fn validate(config: &StreamConfig) -> Result<()> {
        if config.layers == 0 || config.t_in == 0 || config.t_out == 0 {
            return Err(Error::InvalidArgument(format!(
                "invalid StreamGConvGRU config {config:?}"
            )));
        }
        Ok(())
    }

    pub fn config(&self) -> StreamConfig {
        self.config
    }

    pub fn num_nodes(&self) -> usize {
        self.num_nodes
    }

    pub fn graph_fingerprint(&self) -> &str {
        &self.graph_fingerprint
    }

    pub fn check_laplacian(&self, laplacian: &ScaledLaplacian) -> Result<()> {
        if laplacian.graph_fingerprint() != self.graph_fingerprint {
            return Err(Error::FingerprintMismatch {
                expected: self.graph_fingerprint.clone(),
                found: laplacian.graph_fingerprint().to_string(),
            });
        }
        Ok(())
    }

    pub fn bind<'t>(&self, b: &mut ParamBinder<'t>) -> Result<BoundStreamGConvGru<'t>> {
        let mut subnetworks: [Vec<BoundGConvGru<'t>>; 3] = Default::default();
        for (bound, cells) in subnetworks.iter_mut().zip(&self.subnetworks) {
            for cell in cells {
                bound.push(cell.bind(b)?);
            }
        }
        Ok(BoundStreamGConvGru {
            config: self.config,
            num_nodes: self.num_nodes,
            subnetworks,
            head: self.head.bind(b),
        })
    }

    /// Inference on one snapshot input `N×3×T_in`, returning `N×T_out`
    /// normalized predictions.
    pub fn predict(&self, input: &Tensor, laplacian: &ScaledLaplacian) -> Result<Tensor> {
        self.check_laplacian(laplacian)?;
        let tape = Tape::new();
        let mut binder = ParamBinder::new(&tape, false);
        let bound = self.bind(&mut binder)?;
        let lap = laplacian.bind(&tape);
        let out = bound.forward(tape.constant(input.clone()), &lap)?;
        Ok(out.value())
    }
}

fn cell_config(config: &StreamConfig, input_size: usize) -> GConvGruConfig {
    GConvGruConfig {
        cheb_k: config.cheb_k,
        input_size,
        hidden_size: config.hidden_size,
        bias: config.bias,
    }
}

impl Parameterized for StreamGConvGru {
    fn named_params(&self) -> Vec<(String, &Tensor)> {
        let mut v = Vec::new();
        for (name, cells) in SUBNETWORKS.iter().zip(&self.subnetworks) {
            for (layer, cell) in cells.iter().enumerate() {
                v.extend(prefixed(&format!("{name}.{layer}"), cell.named_params()));
            }
        }
        v.extend(prefixed("head", self.head.named_params()));
        v
    }

    fn named_params_mut(&mut self) -> Vec<(String, &mut Tensor)> {
        let mut v = Vec::new();
        for (name, cells) in SUBNETWORKS.iter().zip(self.subnetworks.iter_mut()) {
            for (layer, cell) in cells.iter_mut().enumerate() {
                v.extend(prefixed_mut(&format!("{name}.{layer}"), cell.named_params_mut()));
            }
        }
        v.extend(prefixed_mut("head", self.head.named_params_mut()));
        v
    }
}

/// Merges the three subnetwork outputs (`N×H` each) by summation.
pub fn combine_subnetworks<'t>(outputs: [Var<'t>; 3]) -> Result<Var<'t>> {
    outputs[0].add(outputs[1])?.add(outputs[2])
}

pub struct BoundStreamGConvGru<'t> {
    config: StreamConfig,
    num_nodes: usize,
    subnetworks: [Vec<BoundGConvGru<'t>>; 3],
    head: BoundLinear<'t>,
}

impl<'t> BoundStreamGConvGru<'t> {
    /// Final hidden state (`N×H`) of each subnetwork.
    pub fn subnetwork_states(&self, input: Var<'t>, lap: &BoundLaplacian<'t>) -> Result<[Var<'t>; 3]> {
        let (n, t_in) = (self.num_nodes, self.config.t_in);
        let s = input.shape();
        if s != [n, 3, t_in] {
            return Err(Error::shape("stream_gconvgru input", &s, &[n, 3, t_in]));
        }
        if lap.num_nodes() != n {
            return Err(Error::shape("stream_gconvgru laplacian", &[lap.num_nodes()], &[n]));
        }
        let mut finals = Vec::with_capacity(3);
        for (channel, cells) in self.subnetworks.iter().enumerate() {
            // N×1×T → T×N×1
            let mut seq = input
                .slice(1, channel, channel + 1)?
                .reshape(vec![n, t_in])?
                .transpose()?
                .reshape(vec![t_in, n, 1])?;
            let (last, lower) = cells.split_last().expect("at least one layer");
            for cell in lower {
                seq = cell.unroll(seq, lap, None)?.0;
            }
            finals.push(last.unroll_final(seq, lap, None)?);
        }
        Ok([finals[0], finals[1], finals[2]])
    }

    /// `N×3×T_in` → `N×T_out`.
    pub fn forward(&self, input: Var<'t>, lap: &BoundLaplacian<'t>) -> Result<Var<'t>> {
        let states = self.subnetwork_states(input, lap)?;
        self.head.forward(combine_subnetworks(states)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::{scaled_laplacian, Edge, SensorGraph};

    fn study_like_graph() -> SensorGraph {
        let edges = [(0, 2), (1, 2), (2, 7), (3, 5), (4, 5), (5, 7), (6, 7)]
            .iter()
            .map(|&(src, dst)| Edge {
                src,
                dst,
                weight: 1.0 / (1.0 + src as f64),
            })
            .collect();
        SensorGraph::new((0..8).map(|i| format!("g{i}")).collect(), edges, 7).unwrap()
    }

    #[test]
    fn output_shape_for_eight_nodes() {
        let lap = scaled_laplacian(&study_like_graph()).unwrap();
        let cfg = StreamConfig {
            hidden_size: 4,
            ..StreamConfig::default()
        };
        let model = StreamGConvGru::init(cfg, &lap, 1).unwrap();
        let input = Tensor::filled(vec![8, 3, 36], 0.3);
        assert_eq!(model.predict(&input, &lap).unwrap().shape(), &[8, 36]);
    }

    #[test]
    fn zero_model_zero_input_gives_zero_output() {
        let lap = scaled_laplacian(&study_like_graph()).unwrap();
        let cfg = StreamConfig {
            hidden_size: 3,
            t_in: 5,
            t_out: 4,
            ..StreamConfig::default()
        };
        let model = StreamGConvGru::zeros(cfg, 8, lap.graph_fingerprint()).unwrap();
        let out = model.predict(&Tensor::zeros(vec![8, 3, 5]), &lap).unwrap();
        assert!(out.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn fingerprint_mismatch_is_rejected() {
        let lap = scaled_laplacian(&study_like_graph()).unwrap();
        let model = StreamGConvGru::zeros(StreamConfig::default(), 8, "other").unwrap();
        let err = model.predict(&Tensor::zeros(vec![8, 3, 36]), &lap).unwrap_err();
        assert!(matches!(err, Error::FingerprintMismatch { .. }));
    }

    #[test]
    fn wrong_input_shape_is_rejected() {
        let lap = scaled_laplacian(&study_like_graph()).unwrap();
        let model = StreamGConvGru::init(
            StreamConfig {
                hidden_size: 2,
                ..StreamConfig::default()
            },
            &lap,
            0,
        )
        .unwrap();
        assert!(model.predict(&Tensor::zeros(vec![8, 3, 35]), &lap).is_err());
        assert!(model.predict(&Tensor::zeros(vec![7, 3, 36]), &lap).is_err());
    }

    #[test]
    fn subnetwork_sum_is_order_independent() {
        let lap = scaled_laplacian(&study_like_graph()).unwrap();
        let cfg = StreamConfig {
            hidden_size: 4,
            t_in: 6,
            t_out: 3,
            ..StreamConfig::default()
        };
        let model = StreamGConvGru::init(cfg, &lap, 9).unwrap();
        let tape = Tape::new();
        let mut b = ParamBinder::new(&tape, false);
        let bound = model.bind(&mut b).unwrap();
        let bl = lap.bind(&tape);
        let data = (0..8 * 3 * 6).map(|i| ((i * 37) % 11) as f64 / 3.0).collect();
        let input = tape.constant(Tensor::new(vec![8, 3, 6], data).unwrap());
        let [a, b2, c] = bound.subnetwork_states(input, &bl).unwrap();
        let forward = combine_subnetworks([a, b2, c]).unwrap().value();
        for perm in [[c, a, b2], [b2, c, a], [c, b2, a]] {
            let other = combine_subnetworks(perm).unwrap().value();
            for (x, y) in forward.data().iter().zip(other.data()) {
                assert!((x - y).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn stacked_layers_run() {
        let lap = scaled_laplacian(&study_like_graph()).unwrap();
        let cfg = StreamConfig {
            hidden_size: 3,
            layers: 2,
            t_in: 4,
            t_out: 2,
            ..StreamConfig::default()
        };
        let model = StreamGConvGru::init(cfg, &lap, 2).unwrap();
        let out = model.predict(&Tensor::filled(vec![8, 3, 4], 0.5), &lap).unwrap();
        assert_eq!(out.shape(), &[8, 2]);
        assert!(out.is_finite());
    }
}
