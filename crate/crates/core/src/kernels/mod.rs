//! Layer kernels.
//!
//! All kernels operate on HWC tensors (channel stride 1) and never allocate
//! large buffers on their own: im2col columns and expanded vectors live in
//! caller-provided scratch. The `*_par` variants split the output into row
//! bands and give each band its own scratch; they produce bit-identical
//! results to the sequential kernels.

pub mod conv;
pub mod depthwise;
pub mod fc;
pub mod im2col;
pub mod lut;
pub mod matmul;
pub mod pool;
pub mod relu;
pub mod tensor;

pub use conv::{conv_hwc_q7, conv_hwc_q7_into, conv_hwc_q7_par, conv_hwc_q7_par_into, ConvParams};
pub use depthwise::{depthwise_conv_hwc_q7, depthwise_conv_hwc_q7_into, depthwise_conv_hwc_q7_par_into};
pub use fc::{
    fully_connected_mixed, fully_connected_q7_basic, fully_connected_q7_opt, weight_reorder_1x4, ReorderedWeights,
    WeightLayout,
};
pub use im2col::im2col_partial;
pub use lut::{
    activation_lut_apply_q15, activation_lut_apply_q7, activation_lut_q15_to_q7, build_lut, sweep_max_error, LutFunc,
    LutMode, LutTable, SweepInput,
};
pub use matmul::matmul_q15_2x2;
pub use pool::{avgpool_insitu, avgpool_insitu_slice, maxpool_insitu, maxpool_insitu_slice, PoolGeometry};
pub use relu::relu_swar_q7;
pub use tensor::{QElem, QTensor, Shape};

use crate::error::{Error, Result};

/// Output extent of a sliding window: `floor((n + 2p - k) / s) + 1`.
///
/// Geometries whose window does not fit even once are rejected.
pub fn output_dim(n: usize, kernel: usize, stride: usize, pad: usize) -> Result<usize> {
    if kernel == 0 || stride == 0 {
        return Err(Error::param(format!("kernel ({kernel}) and stride ({stride}) must be positive")));
    }
    let padded = n + 2 * pad;
    if n == 0 || padded < kernel {
        return Err(Error::param(format!(
            "window {kernel} does not fit input extent {n} with padding {pad}"
        )));
    }
    Ok((padded - kernel) / stride + 1)
}
