use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::cells::{
    BidirectionalGru, BoundBidirectionalGru, BoundLinear, BoundTemporalConv, GruCell, GruConfig, Linear,
    TemporalConv, TemporalConvConfig,
};
use crate::error::{Error, Result};
use crate::params::{prefixed, prefixed_mut, ParamBinder, Parameterized};
use crate::tensor::{Tape, Tensor, Var};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct ConvBiGruConfig {
    /// Flattened node×channel inputs, `3·N`.
    pub in_channels: usize,
    pub conv_channels: usize,
    pub kernel_size: usize,
    pub hidden_size: usize,
    pub t_in: usize,
    pub t_out: usize,
}

impl ConvBiGruConfig {
    pub fn for_nodes(num_nodes: usize) -> Self {
        ConvBiGruConfig {
            in_channels: 3 * num_nodes,
            ..Self::default()
        }
    }
}

impl Default for ConvBiGruConfig {
    fn default() -> Self {
        ConvBiGruConfig {
            in_channels: 24,
            conv_channels: 32,
            kernel_size: 3,
            hidden_size: 64,
            t_in: 36,
            t_out: 36,
        }
    }
}

/// Graph-agnostic baseline: a temporal convolution over all node channels,
/// a bidirectional GRU over time, and a linear head on the two final states.
#[derive(Debug, Clone, PartialEq)]
pub struct ConvBiGru {
    config: ConvBiGruConfig,
    conv: TemporalConv,
    bigru: BidirectionalGru,
    head: Linear,
}

impl ConvBiGru {
    pub fn init(config: ConvBiGruConfig, seed: u64) -> Result<Self> {
        validate(&config)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Ok(ConvBiGru {
            config,
            conv: TemporalConv::init(conv_config(&config), &mut rng)?,
            bigru: BidirectionalGru::init(gru_config(&config), &mut rng)?,
            head: Linear::init(2 * config.hidden_size, config.t_out, &mut rng)?,
        })
    }

    pub fn zeros(config: ConvBiGruConfig) -> Result<Self> {
        validate(&config)?;
        let g = gru_config(&config);
        Ok(ConvBiGru {
            config,
            conv: TemporalConv::zeros(conv_config(&config))?,
            bigru: BidirectionalGru::new(GruCell::zeros(g)?, GruCell::zeros(g)?)?,
            head: Linear::zeros(2 * config.hidden_size, config.t_out)?,
        })
    }

    pub fn config(&self) -> ConvBiGruConfig {
        self.config
    }

    pub fn bind<'t>(&self, b: &mut ParamBinder<'t>) -> Result<BoundConvBiGru<'t>> {
        Ok(BoundConvBiGru {
            config: self.config,
            conv: self.conv.bind(b),
            bigru: self.bigru.bind(b)?,
            head: self.head.bind(b),
        })
    }

    /// Inference on a snapshot input `N×3×T_in`; returns `[T_out]`.
    pub fn predict(&self, input: &Tensor) -> Result<Tensor> {
        let tape = Tape::new();
        let mut binder = ParamBinder::new(&tape, false);
        let bound = self.bind(&mut binder)?;
        Ok(bound.forward(tape.constant(input.clone()))?.value())
    }
}

fn validate(config: &ConvBiGruConfig) -> Result<()> {
    if config.in_channels % 3 != 0 || config.t_in == 0 || config.t_out == 0 {
        return Err(Error::InvalidArgument(format!("invalid ConvBiGRU config {config:?}")));
    }
    Ok(())
}

fn conv_config(config: &ConvBiGruConfig) -> TemporalConvConfig {
    TemporalConvConfig {
        in_channels: config.in_channels,
        out_channels: config.conv_channels,
        kernel_size: config.kernel_size,
    }
}

fn gru_config(config: &ConvBiGruConfig) -> GruConfig {
    GruConfig {
        input_size: config.conv_channels,
        hidden_size: config.hidden_size,
    }
}

impl Parameterized for ConvBiGru {
    fn named_params(&self) -> Vec<(String, &Tensor)> {
        let mut v = prefixed("conv", self.conv.named_params());
        v.extend(prefixed("bigru", self.bigru.named_params()));
        v.extend(prefixed("head", self.head.named_params()));
        v
    }

    fn named_params_mut(&mut self) -> Vec<(String, &mut Tensor)> {
        let mut v = prefixed_mut("conv", self.conv.named_params_mut());
        v.extend(prefixed_mut("bigru", self.bigru.named_params_mut()));
        v.extend(prefixed_mut("head", self.head.named_params_mut()));
        v
    }
}

pub struct BoundConvBiGru<'t> {
    config: ConvBiGruConfig,
    conv: BoundTemporalConv<'t>,
    bigru: BoundBidirectionalGru<'t>,
    head: BoundLinear<'t>,
}

impl<'t> BoundConvBiGru<'t> {
    /// `N×3×T_in` (flattened node-major to `3N×T_in`) → `[T_out]`.
    pub fn forward(&self, input: Var<'t>) -> Result<Var<'t>> {
        let c = self.config;
        let s = input.shape();
        let expected = [c.in_channels / 3, 3, c.t_in];
        if s != expected {
            return Err(Error::shape("conv_bigru input", &s, &expected));
        }
        let x = input.reshape(vec![c.in_channels, c.t_in])?;
        let features = self.conv.forward(x)?.transpose()?;
        let out = self.bigru.unroll(features)?;
        let both = Var::concat(&[out.final_forward, out.final_backward], 1)?;
        self.head.forward(both)?.reshape(vec![c.t_out])
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> ConvBiGruConfig {
        ConvBiGruConfig {
            in_channels: 6,
            conv_channels: 4,
            kernel_size: 3,
            hidden_size: 5,
            t_in: 7,
            t_out: 3,
        }
    }

    #[test]
    fn predicts_one_value_per_lead() {
        let m = ConvBiGru::init(ConvBiGruConfig::for_nodes(8), 3).unwrap();
        let out = m.predict(&Tensor::filled(vec![8, 3, 36], 0.2)).unwrap();
        assert_eq!(out.shape(), &[36]);
        assert!(out.is_finite());
    }

    #[test]
    fn zero_model_predicts_zero() {
        let m = ConvBiGru::zeros(small()).unwrap();
        let out = m.predict(&Tensor::filled(vec![2, 3, 7], 1.5)).unwrap();
        assert!(out.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn rejects_wrong_node_count() {
        let m = ConvBiGru::init(small(), 0).unwrap();
        assert!(m.predict(&Tensor::zeros(vec![3, 3, 7])).is_err());
    }

    #[test]
    fn seeded_init_is_reproducible() {
        assert_eq!(ConvBiGru::init(small(), 11).unwrap(), ConvBiGru::init(small(), 11).unwrap());
        assert_ne!(ConvBiGru::init(small(), 11).unwrap(), ConvBiGru::init(small(), 12).unwrap());
    }

    #[test]
    fn parameter_names_are_unique() {
        let m = ConvBiGru::init(small(), 0).unwrap();
        let names: std::collections::BTreeSet<_> = m.named_params().into_iter().map(|(n, _)| n).collect();
        assert_eq!(names.len(), m.named_params().len());
        assert!(names.iter().any(|n| n.starts_with("bigru.bwd.")));
    }
}
