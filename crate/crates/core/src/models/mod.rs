//! Complete predictors: StreamGConvGRU, ConvBiGRU and persistence, plus
//! checkpoint serialization for the trainable ones.

mod checkpoint;
mod conv_bigru;
mod persistence;
mod stream;

pub use checkpoint::{
    load_checkpoint, save_checkpoint, ModelCheckpoint, TrainingMetadata, CHECKPOINT_FORMAT_VERSION,
};
pub use conv_bigru::{BoundConvBiGru, ConvBiGru, ConvBiGruConfig};
pub use persistence::persistence_forecast;
pub use stream::{combine_subnetworks, BoundStreamGConvGru, StreamConfig, StreamGConvGru};

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::dataset::Snapshot;
use crate::error::{Error, Result};
use crate::graph::ScaledLaplacian;
use crate::params::Parameterized;
use crate::tensor::Tensor;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelKind {
    StreamGconvgru,
    ConvBigru,
    Persistence,
}

impl ModelKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            ModelKind::StreamGconvgru => "stream_gconvgru",
            ModelKind::ConvBigru => "conv_bigru",
            ModelKind::Persistence => "persistence",
        }
    }
}

impl fmt::Display for ModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ModelKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().replace('-', "_").as_str() {
            "stream_gconvgru" | "streamgconvgru" => Ok(ModelKind::StreamGconvgru),
            "conv_bigru" | "convbigru" => Ok(ModelKind::ConvBigru),
            "persistence" => Ok(ModelKind::Persistence),
            _ => Err(Error::InvalidArgument(format!(
                "unknown model kind `{s}` (expected stream_gconvgru, conv_bigru or persistence)"
            ))),
        }
    }
}

/// A trainable model.
#[derive(Debug, Clone, PartialEq)]
pub enum Model {
    StreamGConvGru(StreamGConvGru),
    ConvBiGru(ConvBiGru),
}

impl Model {
    pub fn kind(&self) -> ModelKind {
        match self {
            Model::StreamGConvGru(_) => ModelKind::StreamGconvgru,
            Model::ConvBiGru(_) => ModelKind::ConvBigru,
        }
    }

    pub fn t_out(&self) -> usize {
        match self {
            Model::StreamGConvGru(m) => m.config().t_out,
            Model::ConvBiGru(m) => m.config().t_out,
        }
    }
}

impl Parameterized for Model {
    fn named_params(&self) -> Vec<(String, &Tensor)> {
        match self {
            Model::StreamGConvGru(m) => m.named_params(),
            Model::ConvBiGru(m) => m.named_params(),
        }
    }

    fn named_params_mut(&mut self) -> Vec<(String, &mut Tensor)> {
        match self {
            Model::StreamGConvGru(m) => m.named_params_mut(),
            Model::ConvBiGru(m) => m.named_params_mut(),
        }
    }
}

/// Anything that turns a snapshot into a normalized outlet forecast of
/// length `T_out`.
pub trait Forecaster {
    fn name(&self) -> String;
    fn forecast(&self, snapshot: &Snapshot, outlet: usize) -> Result<Vec<f64>>;
}

/// Repeats the outlet's latest observed streamflow.
#[derive(Debug, Clone, Copy)]
pub struct Persistence {
    pub horizon: usize,
}

impl Forecaster for Persistence {
    fn name(&self) -> String {
        ModelKind::Persistence.to_string()
    }

    fn forecast(&self, snapshot: &Snapshot, outlet: usize) -> Result<Vec<f64>> {
        persistence_forecast(
            snapshot.input_series(outlet, crate::dataset::CHANNEL_PAST_FLOW),
            self.horizon,
        )
    }
}

/// A trained model paired with the Laplacian it runs on.
pub struct ModelForecaster<'a> {
    pub model: &'a Model,
    pub laplacian: &'a ScaledLaplacian,
}

impl Forecaster for ModelForecaster<'_> {
    fn name(&self) -> String {
        self.model.kind().to_string()
    }

    fn forecast(&self, snapshot: &Snapshot, outlet: usize) -> Result<Vec<f64>> {
        match self.model {
            Model::StreamGConvGru(m) => {
                let out = m.predict(&snapshot.input, self.laplacian)?;
                let t = out.shape()[1];
                Ok(out.data()[outlet * t..(outlet + 1) * t].to_vec())
            }
            Model::ConvBiGru(m) => Ok(m.predict(&snapshot.input)?.into_data()),
        }
    }
}
