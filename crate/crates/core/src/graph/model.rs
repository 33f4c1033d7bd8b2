use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kernels::conv::ConvParams;
use crate::kernels::fc::weight_reorder_1x4;
use crate::kernels::lut::{build_lut, LutFunc, LutMode, LutTable};
use crate::kernels::pool::PoolGeometry;
use crate::kernels::tensor::Shape;
use crate::quant::{QuantParams, Width};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LayerKind {
    Conv,
    DepthwiseConv,
    Maxpool,
    Avgpool,
    FullyConnected,
    Relu,
    Sigmoid,
    Tanh,
}

impl LayerKind {
    pub const ALL: [LayerKind; 8] = [
        LayerKind::Conv,
        LayerKind::DepthwiseConv,
        LayerKind::Maxpool,
        LayerKind::Avgpool,
        LayerKind::FullyConnected,
        LayerKind::Relu,
        LayerKind::Sigmoid,
        LayerKind::Tanh,
    ];

    pub const fn name(self) -> &'static str {
        match self {
            LayerKind::Conv => "conv",
            LayerKind::DepthwiseConv => "depthwise_conv",
            LayerKind::Maxpool => "maxpool",
            LayerKind::Avgpool => "avgpool",
            LayerKind::FullyConnected => "fully_connected",
            LayerKind::Relu => "relu",
            LayerKind::Sigmoid => "sigmoid",
            LayerKind::Tanh => "tanh",
        }
    }

    pub fn from_name(name: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|k| k.name() == name)
    }

    pub const fn has_weights(self) -> bool {
        matches!(self, LayerKind::Conv | LayerKind::DepthwiseConv | LayerKind::FullyConnected)
    }

    /// Layers that overwrite their input buffer instead of producing a new one.
    pub const fn in_place(self) -> bool {
        !self.has_weights()
    }
}

/// A byte range inside the model's weight store.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct BlobRef {
    pub offset: usize,
    pub len: usize,
}

/// Table settings for sigmoid and tanh layers.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct LutSpec {
    pub mode: LutMode,
    pub range_pow: u32,
    pub entries: usize,
    pub entry_bits: u32,
    #[serde(default)]
    pub interpolate: bool,
}

impl Default for LutSpec {
    fn default() -> Self {
        LutSpec { mode: LutMode::Unified, range_pow: 3, entries: 256, entry_bits: 8, interpolate: false }
    }
}

impl LutSpec {
    pub fn build(&self, func: LutFunc) -> Result<LutTable> {
        build_lut(func, self.mode, self.range_pow, self.entries, Width::from_bits(self.entry_bits)?)
    }
}

/// One layer of a model.
///
/// `in_frac`/`out_frac` are the activation formats on either side. Weighted
/// layers also record their weight and bias formats, which together with
/// `quant` must satisfy the usual scale identity.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct LayerSpec {
    pub name: String,
    pub kind: LayerKind,
    #[serde(default)]
    pub kernel: usize,
    #[serde(default)]
    pub stride: usize,
    #[serde(default)]
    pub pad: usize,
    pub in_shape: Shape,
    pub out_shape: Shape,
    pub in_frac: i32,
    pub out_frac: i32,
    #[serde(default)]
    pub weight_frac: i32,
    #[serde(default)]
    pub bias_frac: i32,
    #[serde(default)]
    pub quant: QuantParams,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub weights: Option<BlobRef>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bias: Option<BlobRef>,
    /// Fully-connected only: the weight blob is stored 1x4-interleaved.
    #[serde(default)]
    pub reordered: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lut: Option<LutSpec>,
}

impl LayerSpec {
    pub fn conv_params(&self) -> ConvParams {
        ConvParams::new(self.kernel, self.stride, self.pad, self.quant)
    }

    pub fn pool_geometry(&self) -> PoolGeometry {
        PoolGeometry::new(self.kernel, self.stride, self.pad)
    }

    /// Number of weight values the layer's filter shape implies.
    pub fn expected_weights(&self) -> usize {
        let k2 = self.kernel * self.kernel;
        match self.kind {
            LayerKind::Conv => self.out_shape.channels * k2 * self.in_shape.channels,
            LayerKind::DepthwiseConv => k2 * self.in_shape.channels,
            LayerKind::FullyConnected => self.out_shape.len() * self.in_shape.len(),
            _ => 0,
        }
    }

    pub fn expected_bias(&self) -> usize {
        match self.kind {
            LayerKind::Conv | LayerKind::DepthwiseConv => self.out_shape.channels,
            LayerKind::FullyConnected => self.out_shape.len(),
            _ => 0,
        }
    }

    /// Output shape from the layer's shape law.
    pub fn computed_out_shape(&self) -> Result<Shape> {
        match self.kind {
            LayerKind::Conv => self.conv_params().output_shape(self.in_shape, self.out_shape.channels),
            LayerKind::DepthwiseConv => self.conv_params().output_shape(self.in_shape, self.in_shape.channels),
            LayerKind::Maxpool | LayerKind::Avgpool => self.pool_geometry().output_shape(self.in_shape),
            LayerKind::FullyConnected => Ok(Shape::vector(self.out_shape.len())),
            LayerKind::Relu | LayerKind::Sigmoid | LayerKind::Tanh => Ok(self.in_shape),
        }
    }

    fn validate(&self, store_len: usize) -> Result<()> {
        let bad = |msg: String| Error::Manifest(format!("layer '{}': {msg}", self.name));
        let computed = self.computed_out_shape().map_err(|e| bad(e.to_string()))?;
        if computed != self.out_shape {
            return Err(bad(format!("declared output {} but shape law gives {computed}", self.out_shape)));
        }
        if self.kind.has_weights() {
            self.conv_params().quant.validate().map_err(|e| bad(e.to_string()))?;
            self.quant
                .check_scales(self.in_frac, self.weight_frac, self.bias_frac, self.out_frac)
                .map_err(|e| bad(e.to_string()))?;
            for (what, blob, need) in
                [("weights", self.weights, self.expected_weights()), ("bias", self.bias, self.expected_bias())]
            {
                let blob = blob.ok_or_else(|| bad(format!("missing {what} blob")))?;
                if blob.len != need {
                    return Err(bad(format!("{what} blob holds {} values, filter shape needs {need}", blob.len)));
                }
                if blob.offset + blob.len > store_len {
                    return Err(Error::BlobSize {
                        what: format!("{} {what}", self.name),
                        needed: blob.offset + blob.len,
                        available: store_len,
                    });
                }
            }
        } else {
            if self.out_frac != self.in_frac && matches!(self.kind, LayerKind::Maxpool | LayerKind::Avgpool | LayerKind::Relu) {
                return Err(bad(format!("{} keeps its input format", self.kind.name())));
            }
            if matches!(self.kind, LayerKind::Sigmoid | LayerKind::Tanh) {
                if self.out_frac != 7 {
                    return Err(bad("sigmoid/tanh produce q0.7 outputs (out_frac 7)".into()));
                }
                if !(0..8).contains(&self.in_frac) {
                    return Err(bad(format!("activation input frac {} outside 0..8", self.in_frac)));
                }
                let func = if self.kind == LayerKind::Sigmoid { LutFunc::Sigmoid } else { LutFunc::Tanh };
                self.lut.unwrap_or_default().build(func).map_err(|e| bad(e.to_string()))?;
            }
        }
        if self.reordered && self.kind != LayerKind::FullyConnected {
            return Err(bad("only fully-connected layers can be reordered".into()));
        }
        Ok(())
    }
}

/// A network: layer list plus the q7 weight store the layers point into.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Model {
    pub input_shape: Shape,
    pub input_frac: i32,
    pub layers: Vec<LayerSpec>,
    pub store: Vec<i8>,
}

impl Model {
    pub fn empty(input_shape: Shape, input_frac: i32) -> Self {
        Model { input_shape, input_frac, layers: Vec::new(), store: Vec::new() }
    }

    /// Checks shape chaining, shape laws, scale identities and blob bounds.
    pub fn validate(&self) -> Result<()> {
        let (mut shape, mut frac) = (self.input_shape, self.input_frac);
        for layer in &self.layers {
            if layer.in_shape != shape || layer.in_frac != frac {
                return Err(Error::Manifest(format!(
                    "layer '{}' expects {} (frac {}) but receives {shape} (frac {frac})",
                    layer.name, layer.in_shape, layer.in_frac
                )));
            }
            layer.validate(self.store.len())?;
            shape = layer.out_shape;
            frac = layer.out_frac;
        }
        Ok(())
    }

    pub fn output_shape(&self) -> Shape {
        self.layers.last().map_or(self.input_shape, |l| l.out_shape)
    }

    pub fn output_frac(&self) -> i32 {
        self.layers.last().map_or(self.input_frac, |l| l.out_frac)
    }

    pub fn blob(&self, r: Option<BlobRef>) -> &[i8] {
        r.map_or(&[], |r| &self.store[r.offset..r.offset + r.len])
    }

    /// `(weights, bias)` of a layer; empty for unweighted layers.
    pub fn layer_params(&self, layer: &LayerSpec) -> (&[i8], &[i8]) {
        (self.blob(layer.weights), self.blob(layer.bias))
    }

    /// Bytes of filter weights (biases excluded).
    pub fn filter_bytes(&self) -> usize {
        self.layers.iter().map(|l| l.expected_weights()).sum()
    }

    pub fn bias_bytes(&self) -> usize {
        self.layers.iter().map(|l| l.expected_bias()).sum()
    }
}

/// Weights and format of a weighted layer, as handed to [`ModelBuilder`].
#[derive(Clone, Debug)]
pub struct Weighted {
    pub weights: Vec<i8>,
    pub bias: Vec<i8>,
    pub weight_frac: i32,
    pub quant: QuantParams,
}

/// Appends layers one at a time, deriving shapes and formats from the
/// previous layer.
#[derive(Clone, Debug)]
pub struct ModelBuilder {
    model: Model,
}

impl ModelBuilder {
    pub fn new(input_shape: Shape, input_frac: i32) -> Self {
        ModelBuilder { model: Model::empty(input_shape, input_frac) }
    }

    fn head(&self) -> (Shape, i32) {
        (self.model.output_shape(), self.model.output_frac())
    }

    fn push_blob(&mut self, data: &[i8]) -> BlobRef {
        let r = BlobRef { offset: self.model.store.len(), len: data.len() };
        self.model.store.extend_from_slice(data);
        r
    }

    fn blank(&self, name: &str, kind: LayerKind) -> LayerSpec {
        let (shape, frac) = self.head();
        LayerSpec {
            name: name.to_string(),
            kind,
            kernel: 0,
            stride: 0,
            pad: 0,
            in_shape: shape,
            out_shape: shape,
            in_frac: frac,
            out_frac: frac,
            weight_frac: 0,
            bias_frac: 0,
            quant: QuantParams::default(),
            weights: None,
            bias: None,
            reordered: false,
            lut: None,
        }
    }

    fn push(mut self, mut layer: LayerSpec, w: Option<(&Weighted, &[i8])>) -> Result<Self> {
        if let Some((p, stored)) = w {
            layer.weight_frac = p.weight_frac;
            layer.quant = p.quant;
            let acc = layer.in_frac + p.weight_frac;
            layer.bias_frac = acc - p.quant.bias_left_shift as i32;
            layer.out_frac = acc - p.quant.out_right_shift as i32;
            layer.weights = Some(self.push_blob(stored));
            layer.bias = Some(self.push_blob(&p.bias));
        }
        layer.validate(self.model.store.len())?;
        self.model.layers.push(layer);
        Ok(self)
    }

    fn windowed(&self, name: &str, kind: LayerKind, kernel: usize, stride: usize, pad: usize, out_channels: usize) -> Result<LayerSpec> {
        let mut l = self.blank(name, kind);
        l.kernel = kernel;
        l.stride = stride;
        l.pad = pad;
        l.out_shape.channels = out_channels;
        l.out_shape = l.computed_out_shape()?;
        Ok(l)
    }

    pub fn conv(self, name: &str, kernel: usize, stride: usize, pad: usize, p: Weighted) -> Result<Self> {
        let l = self.windowed(name, LayerKind::Conv, kernel, stride, pad, p.bias.len())?;
        self.push(l, Some((&p, &p.weights)))
    }

    pub fn depthwise_conv(self, name: &str, kernel: usize, stride: usize, pad: usize, p: Weighted) -> Result<Self> {
        let c = self.head().0.channels;
        let l = self.windowed(name, LayerKind::DepthwiseConv, kernel, stride, pad, c)?;
        self.push(l, Some((&p, &p.weights)))
    }

    pub fn maxpool(self, name: &str, kernel: usize, stride: usize, pad: usize) -> Result<Self> {
        let c = self.head().0.channels;
        let l = self.windowed(name, LayerKind::Maxpool, kernel, stride, pad, c)?;
        self.push(l, None)
    }

    pub fn avgpool(self, name: &str, kernel: usize, stride: usize, pad: usize) -> Result<Self> {
        let c = self.head().0.channels;
        let l = self.windowed(name, LayerKind::Avgpool, kernel, stride, pad, c)?;
        self.push(l, None)
    }

    /// Fully-connected layer; `p.weights` is row-major `[outputs][inputs]`.
    /// With `reordered` the blob is stored 1x4-interleaved.
    pub fn fully_connected(self, name: &str, p: Weighted, reordered: bool) -> Result<Self> {
        let mut l = self.blank(name, LayerKind::FullyConnected);
        l.out_shape = Shape::vector(p.bias.len());
        l.reordered = reordered;
        let stored = if reordered {
            weight_reorder_1x4(&p.weights, p.bias.len(), l.in_shape.len())?.blob().to_vec()
        } else {
            p.weights.clone()
        };
        self.push(l, Some((&p, &stored)))
    }

    pub fn relu(self, name: &str) -> Result<Self> {
        let l = self.blank(name, LayerKind::Relu);
        self.push(l, None)
    }

    pub fn activation(self, name: &str, func: LutFunc, lut: LutSpec) -> Result<Self> {
        let kind = match func {
            LutFunc::Sigmoid => LayerKind::Sigmoid,
            LutFunc::Tanh => LayerKind::Tanh,
        };
        let mut l = self.blank(name, kind);
        l.out_frac = 7;
        l.lut = Some(lut);
        self.push(l, None)
    }

    pub fn build(self) -> Model {
        self.model
    }
}

/// Random weights with shifts picked so activations keep a useful spread.
///
/// `input_rms` is the expected RMS of the layer input (in LSBs). Uniform q7
/// weights have an RMS of about 74, so the accumulator RMS is roughly
/// `sqrt(fan_in) * 74 * input_rms`; the output shift brings that down to
/// about 32 LSBs. Weights are labelled with `out_shift` fractional bits so
/// the output keeps the input's format.
pub fn random_weighted(rng: &mut impl Rng, n_weights: usize, n_bias: usize, fan_in: usize, input_rms: f64) -> Weighted {
    let acc_rms = (fan_in.max(1) as f64).sqrt() * 74.0 * input_rms;
    let out_shift = (acc_rms / 32.0).log2().round().clamp(0.0, 24.0) as u32;
    Weighted {
        weights: (0..n_weights).map(|_| rng.gen()).collect(),
        bias: (0..n_bias).map(|_| rng.gen_range(-16..=16)).collect(),
        weight_frac: out_shift as i32,
        quant: QuantParams { bias_left_shift: out_shift, out_right_shift: out_shift },
    }
}

/// The CIFAR-10 network: three 5x5 conv layers (32, 32, 64 filters), each
/// followed by 3x3 stride-2 max pooling, then a 10-way fully-connected layer.
/// Input is a 32x32x3 q0.7 image.
///
/// With `relu`, a ReLU follows every convolution. Weights are random and
/// deterministic in `seed`.
pub fn cifar10(seed: u64, relu: bool) -> Result<Model> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut b = ModelBuilder::new(Shape::new(32, 32, 3), 7);
    let mut input_rms = 74.0;
    for (i, (c_in, c_out)) in [(3, 32), (32, 32), (32, 64)].into_iter().enumerate() {
        let w = random_weighted(&mut rng, c_out * 25 * c_in, c_out, 25 * c_in, input_rms);
        b = b.conv(&format!("conv{}", 2 * i + 1), 5, 1, 2, w)?;
        if relu {
            b = b.relu(&format!("relu{}", 2 * i + 1))?;
        }
        b = b.maxpool(&format!("pool{}", 2 * i + 2), 3, 2, 1)?;
        input_rms = 40.0;
    }
    let w = random_weighted(&mut rng, 10 * 1024, 10, 1024, input_rms);
    Ok(b.fully_connected("fc7", w, true)?.build())
}
