//! Fixed-point neural network inference kernels.
//!
//! The crate is organised bottom-up:
//!
//! - [`packedops`]: bit-exact models of the packed 32-bit word instructions
//!   (`SXTB16`, `SMLAD`, `QSUB8`, ...) the kernels are written against.
//! - [`quant`]: power-of-two fixed-point scalars, requantization and the
//!   q7 to q15 expansion routines.
//! - [`kernels`]: the layer functions (fully-connected, HWC convolution with
//!   partial im2col, depthwise convolution, in-situ pooling, SWAR ReLU and
//!   table-based sigmoid/tanh).
//! - [`reference`]: naive nested-loop oracles with 64-bit accumulation.
//! - [`graph`]: model description, op counting, memory planning, on-disk
//!   container and the sequential runner.
//!
//! With the default `parallel` feature, convolutions and batched inference
//! can be spread over a rayon pool; the sequential kernels are always
//! available and produce bit-identical results.

pub mod error;
pub mod graph;
pub mod kernels;
pub mod packedops;
pub mod par;
pub mod quant;
pub mod reference;

pub use error::{Error, Result};
pub use kernels::tensor::{QTensor, Shape};
pub use quant::QuantParams;
