use super::model::{LayerKind, LayerSpec, Model};

/// Operation count of one layer.
///
/// Convolutions and fully-connected layers count two ops per
/// multiply-accumulate; pooling counts one op per window element;
/// element-wise activations count one op per value.
pub fn layer_ops(l: &LayerSpec) -> u64 {
    let k2 = (l.kernel * l.kernel) as u64;
    let out = l.out_shape;
    let pixels = out.pixels() as u64;
    match l.kind {
        LayerKind::Conv => 2 * k2 * l.in_shape.channels as u64 * pixels * out.channels as u64,
        LayerKind::DepthwiseConv => 2 * k2 * pixels * out.channels as u64,
        LayerKind::FullyConnected => 2 * l.in_shape.len() as u64 * out.len() as u64,
        LayerKind::Maxpool | LayerKind::Avgpool => pixels * out.channels as u64 * k2,
        LayerKind::Relu | LayerKind::Sigmoid | LayerKind::Tanh => out.len() as u64,
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct OpCount {
    pub per_layer: Vec<u64>,
    pub total: u64,
}

pub fn count_ops(model: &Model) -> OpCount {
    let per_layer: Vec<u64> = model.layers.iter().map(layer_ops).collect();
    let total = per_layer.iter().sum();
    OpCount { per_layer, total }
}

/// Formats a count the way the op tables print it: `4.9 M`, `73.7 K`.
pub fn format_ops(n: u64) -> String {
    fn sig3(v: f64) -> String {
        let digits = if v >= 100.0 {
            0
        } else if v >= 10.0 {
            1
        } else {
            2
        };
        let s = format!("{v:.digits$}");
        if s.contains('.') {
            s.trim_end_matches('0').trim_end_matches('.').to_string()
        } else {
            s
        }
    }
    let n = n as f64;
    if n >= 1e6 {
        format!("{} M", sig3(n / 1e6))
    } else if n >= 1e3 {
        format!("{} K", sig3(n / 1e3))
    } else {
        sig3(n)
    }
}
