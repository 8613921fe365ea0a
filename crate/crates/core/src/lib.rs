//! Graph convolutional GRU streamflow forecasting.
//!
//! The crate is organized bottom-up:
//!
//! - [`tensor`]: dense tensors with tape-based reverse-mode autodiff.
//! - [`graph`]: river-gauge graphs, scaled Laplacians and Chebyshev convolution.
//! - [`cells`]: GConvGRU, GRU, bidirectional GRU, temporal convolution and linear layers.
//! - [`models`]: the StreamGConvGRU and ConvBiGRU predictors, persistence, and checkpoints.
//! - [`dataset`]: series/graph ingestion, normalization, snapshots, splits and the snapshot cache.
//! - [`training`]: RMSprop and the best-on-validation training loop.
//! - [`evaluation`]: Nash-Sutcliffe efficiency, per-lead reports, CSV and SVG output.
//! - [`synthetic`]: a linear-reservoir river network generator for desk-scale experiments.

pub mod cells;
pub mod dataset;
pub mod error;
pub mod evaluation;
pub mod gradcheck;
pub mod graph;
pub mod models;
mod params;
pub mod synthetic;
pub mod tensor;
pub mod training;
mod binfmt;

pub use error::{Error, Result};
pub use params::{ParamBinder, Parameterized};
pub use tensor::{Gradients, Tape, Tensor, Var};
