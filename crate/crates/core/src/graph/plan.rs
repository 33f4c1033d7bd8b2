//! Static memory plan.
//!
//! Activations live in two buffers. The model input starts in buffer 0; a
//! weighted layer reads one buffer and writes the other, while pooling and
//! activations work in place and keep the current buffer. Each buffer is
//! sized to the largest tensor ever assigned to it. Scratch is shared by all
//! layers and sized to the largest single requirement.

use super::model::{LayerKind, LayerSpec, Model};
use crate::error::Result;
use crate::kernels::conv::ConvParams;
use crate::kernels::pool::{avgpool_scratch_bytes, maxpool_scratch_bytes};

/// How convolutions build their im2col columns.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Im2col {
    /// This many output pixels at a time (even, at least 2).
    Partial(usize),
    /// Every output pixel of the layer at once.
    Full,
}

impl Default for Im2col {
    fn default() -> Self {
        Im2col::Partial(ConvParams::DEFAULT_PARTIAL_COLS)
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct LayerMemory {
    pub name: String,
    pub kind: LayerKind,
    pub input_bytes: usize,
    pub output_bytes: usize,
    /// Buffer index (0 or 1) holding the input and the output.
    pub input_buffer: usize,
    pub output_buffer: usize,
    pub scratch_bytes: usize,
    pub weight_bytes: usize,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct MemoryPlan {
    pub im2col: Im2col,
    pub layers: Vec<LayerMemory>,
    /// Sizes of the two activation buffers.
    pub buffers: [usize; 2],
    pub scratch_bytes: usize,
    /// Filter weights plus biases.
    pub weight_bytes: usize,
    /// Largest `input + output` over the layers that write a fresh buffer,
    /// with the layer index.
    pub largest_pair: (usize, usize),
    /// Sum of every layer's output tensor.
    pub total_activation_bytes: usize,
}

impl MemoryPlan {
    pub fn activation_bytes(&self) -> usize {
        self.buffers[0] + self.buffers[1]
    }

    /// Activation buffers, scratch and weights resident together.
    pub fn peak_bytes(&self) -> usize {
        self.activation_bytes() + self.scratch_bytes + self.weight_bytes
    }
}

/// Resolves the partial column count a conv layer uses under `im2col`.
pub fn conv_params_for(layer: &LayerSpec, im2col: Im2col) -> Result<ConvParams> {
    let p = layer.conv_params();
    match im2col {
        Im2col::Partial(n) => p.with_partial_cols(n),
        Im2col::Full => p.full_im2col(layer.in_shape),
    }
}

/// Scratch bytes one layer needs.
pub fn layer_scratch_bytes(layer: &LayerSpec, im2col: Im2col) -> Result<usize> {
    Ok(match layer.kind {
        LayerKind::Conv => conv_params_for(layer, im2col)?.scratch_len(layer.in_shape.channels) * 2,
        LayerKind::FullyConnected => layer.in_shape.len() * 2,
        LayerKind::Maxpool => maxpool_scratch_bytes(layer.in_shape, layer.pool_geometry())?,
        LayerKind::Avgpool => avgpool_scratch_bytes(layer.in_shape, layer.pool_geometry())?,
        LayerKind::DepthwiseConv | LayerKind::Relu | LayerKind::Sigmoid | LayerKind::Tanh => 0,
    })
}

pub fn plan_memory(model: &Model, im2col: Im2col) -> Result<MemoryPlan> {
    let mut buffers = [model.input_shape.len(), 0];
    let mut current = 0;
    let mut layers = Vec::with_capacity(model.layers.len());
    for l in &model.layers {
        let next = if l.kind.in_place() { current } else { 1 - current };
        buffers[next] = buffers[next].max(l.out_shape.len());
        layers.push(LayerMemory {
            name: l.name.clone(),
            kind: l.kind,
            input_bytes: l.in_shape.len(),
            output_bytes: l.out_shape.len(),
            input_buffer: current,
            output_buffer: next,
            scratch_bytes: layer_scratch_bytes(l, im2col)?,
            weight_bytes: l.expected_weights() + l.expected_bias(),
        });
        current = next;
    }
    if model.layers.is_empty() {
        buffers = [0, 0];
    }
    let largest_pair = layers
        .iter()
        .enumerate()
        .filter(|(_, l)| l.input_buffer != l.output_buffer)
        .map(|(i, l)| (l.input_bytes + l.output_bytes, i))
        .max_by_key(|(bytes, _)| *bytes)
        .unwrap_or((0, 0));
    Ok(MemoryPlan {
        im2col,
        scratch_bytes: layers.iter().map(|l| l.scratch_bytes).max().unwrap_or(0),
        weight_bytes: model.filter_bytes() + model.bias_bytes(),
        total_activation_bytes: layers.iter().map(|l| l.output_bytes).sum(),
        largest_pair,
        buffers,
        layers,
    })
}
