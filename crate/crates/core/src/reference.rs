//! Naive oracles for every kernel.
//!
//! These are direct nested loops over the textbook definitions with 128-bit
//! accumulators. They share nothing with [`crate::kernels`] beyond the data
//! types, so an accumulator that wraps in a packed kernel shows up as a
//! divergence here. They also serve as the baseline in benchmarks.

use crate::error::{Error, Result};
use crate::kernels::conv::ConvParams;
use crate::kernels::lut::{LutFunc, LutMode, LutTable};
use crate::kernels::pool::PoolGeometry;
use crate::kernels::tensor::{QTensor, Shape};
use crate::quant::{QuantParams, Width};

/// `(acc + 2^(s-1)) / 2^s` rounded towards negative infinity, then saturated.
pub fn ref_requantize(acc: i128, out_right_shift: u32, width: Width) -> i32 {
    let v = if out_right_shift == 0 {
        acc
    } else {
        (acc + (1i128 << (out_right_shift - 1))).div_euclid(1i128 << out_right_shift)
    };
    v.clamp(width.min() as i128, width.max() as i128) as i32
}

fn bias_term(bias: i8, quant: QuantParams) -> i128 {
    (bias as i128) << quant.bias_left_shift
}

fn window_dim(n: usize, k: usize, s: usize, p: usize) -> Result<usize> {
    if k == 0 || s == 0 || n == 0 || n + 2 * p < k {
        return Err(Error::param(format!("window k={k} s={s} p={p} does not fit extent {n}")));
    }
    Ok((n + 2 * p - k) / s + 1)
}

/// Input pixel under output `(oy, ox)` and tap `(dy, dx)`, or `None` in padding.
fn tap(shape: Shape, p: &ConvParams, oy: usize, ox: usize, dy: usize, dx: usize) -> Option<(usize, usize)> {
    let iy = (oy * p.stride + dy) as isize - p.pad as isize;
    let ix = (ox * p.stride + dx) as isize - p.pad as isize;
    if iy < 0 || ix < 0 || iy as usize >= shape.height || ix as usize >= shape.width {
        None
    } else {
        Some((iy as usize, ix as usize))
    }
}

/// Direct convolution with `[C_out][K][K][C_in]` weights.
pub fn ref_conv(input: &QTensor<i8>, weights: &[i8], bias: &[i8], p: &ConvParams) -> Result<QTensor<i8>> {
    let s = input.shape();
    let (k, cin, cout) = (p.kernel, s.channels, bias.len());
    if weights.len() != cout * k * k * cin {
        return Err(Error::shape(format!(
            "weights have {} values, expected {cout}x{k}x{k}x{cin}",
            weights.len()
        )));
    }
    let out_shape = Shape::new(
        window_dim(s.height, k, p.stride, p.pad)?,
        window_dim(s.width, k, p.stride, p.pad)?,
        cout,
    );
    let mut out = QTensor::zeros(out_shape, input.frac_bits());
    for oy in 0..out_shape.height {
        for ox in 0..out_shape.width {
            for co in 0..cout {
                let mut acc = bias_term(bias[co], p.quant);
                for dy in 0..k {
                    for dx in 0..k {
                        let Some((iy, ix)) = tap(s, p, oy, ox, dy, dx) else { continue };
                        for ci in 0..cin {
                            let w = weights[((co * k + dy) * k + dx) * cin + ci];
                            acc += input.get(iy, ix, ci) as i128 * w as i128;
                        }
                    }
                }
                let off = out_shape.offset(oy, ox, co);
                out.data_mut()[off] = ref_requantize(acc, p.quant.out_right_shift, Width::Q7) as i8;
            }
        }
    }
    Ok(out)
}

/// Direct depthwise convolution with `[K][K][C]` weights.
pub fn ref_depthwise_conv(input: &QTensor<i8>, weights: &[i8], bias: &[i8], p: &ConvParams) -> Result<QTensor<i8>> {
    let s = input.shape();
    let (k, c) = (p.kernel, s.channels);
    if bias.len() != c || weights.len() != k * k * c {
        return Err(Error::shape(format!(
            "depthwise conv over {c} channels got {} weights and {} biases",
            weights.len(),
            bias.len()
        )));
    }
    let out_shape = Shape::new(
        window_dim(s.height, k, p.stride, p.pad)?,
        window_dim(s.width, k, p.stride, p.pad)?,
        c,
    );
    let mut out = QTensor::zeros(out_shape, input.frac_bits());
    for oy in 0..out_shape.height {
        for ox in 0..out_shape.width {
            for ch in 0..c {
                let mut acc = bias_term(bias[ch], p.quant);
                for dy in 0..k {
                    for dx in 0..k {
                        if let Some((iy, ix)) = tap(s, p, oy, ox, dy, dx) {
                            acc += input.get(iy, ix, ch) as i128 * weights[(dy * k + dx) * c + ch] as i128;
                        }
                    }
                }
                let off = out_shape.offset(oy, ox, ch);
                out.data_mut()[off] = ref_requantize(acc, p.quant.out_right_shift, Width::Q7) as i8;
            }
        }
    }
    Ok(out)
}

fn check_fc(x: usize, w: usize, bias: usize) -> Result<()> {
    if w != x * bias {
        return Err(Error::shape(format!("weights have {w} values, expected {bias}x{x}")));
    }
    Ok(())
}

/// Matrix-vector product with a row-major `[rows][cols]` q7 matrix.
pub fn ref_fc(x: &[i8], w: &[i8], bias: &[i8], quant: QuantParams) -> Result<Vec<i8>> {
    check_fc(x.len(), w.len(), bias.len())?;
    let cols = x.len();
    Ok(bias
        .iter()
        .enumerate()
        .map(|(r, b)| {
            let acc = w[r * cols..(r + 1) * cols]
                .iter()
                .zip(x)
                .fold(bias_term(*b, quant), |acc, (w, x)| acc + *w as i128 * *x as i128);
            ref_requantize(acc, quant.out_right_shift, Width::Q7) as i8
        })
        .collect())
}

/// q15 activations times an un-swapped row-major q7 matrix, q15 output.
pub fn ref_fc_mixed(x: &[i16], w: &[i8], bias: &[i8], quant: QuantParams) -> Result<Vec<i16>> {
    check_fc(x.len(), w.len(), bias.len())?;
    let cols = x.len();
    Ok(bias
        .iter()
        .enumerate()
        .map(|(r, b)| {
            let mut acc = bias_term(*b, quant);
            for c in 0..cols {
                acc += w[r * cols + c] as i128 * x[c] as i128;
            }
            ref_requantize(acc, quant.out_right_shift, Width::Q15) as i16
        })
        .collect())
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum PoolKind {
    Max,
    Average,
}

/// Windowed pooling: for each output, scan its `K x K` window directly.
///
/// Max ignores padded positions; average sums the in-bounds values and
/// divides by `K*K`, rounding half away from zero.
pub fn ref_pool_window(input: &QTensor<i8>, g: PoolGeometry, kind: PoolKind) -> Result<QTensor<i8>> {
    let s = input.shape();
    let out_shape = Shape::new(
        window_dim(s.height, g.kernel, g.stride, g.pad)?,
        window_dim(s.width, g.kernel, g.stride, g.pad)?,
        s.channels,
    );
    let p = ConvParams::new(g.kernel, g.stride, g.pad, QuantParams::default());
    let area = (g.kernel * g.kernel) as f64;
    let mut out = QTensor::zeros(out_shape, input.frac_bits());
    for oy in 0..out_shape.height {
        for ox in 0..out_shape.width {
            for c in 0..s.channels {
                let vals = (0..g.kernel)
                    .flat_map(|dy| (0..g.kernel).map(move |dx| (dy, dx)))
                    .filter_map(|(dy, dx)| tap(s, &p, oy, ox, dy, dx))
                    .map(|(iy, ix)| input.get(iy, ix, c) as i32);
                let v = match kind {
                    PoolKind::Max => vals.max().unwrap_or(0),
                    PoolKind::Average => (vals.sum::<i32>() as f64 / area).round() as i32,
                };
                let off = out_shape.offset(oy, ox, c);
                out.data_mut()[off] = v as i8;
            }
        }
    }
    Ok(out)
}

pub fn ref_relu(x: &[i8]) -> Vec<i8> {
    x.iter().map(|v| (*v).max(0)).collect()
}

/// The real-valued activation.
pub fn ref_activation(func: LutFunc, x: f64) -> f64 {
    match func {
        LutFunc::Sigmoid => 1.0 / (1.0 + (-x).exp()),
        LutFunc::Tanh => x.tanh(),
    }
}

/// Table evaluation done in floating point.
///
/// The input is placed on the table's sample grid as a real position; the
/// output is the sample (or linear blend of neighbouring samples) scaled to
/// `out_width` and rounded half up. Every intermediate is a dyadic rational
/// well inside f64 precision, so this is exact.
pub fn ref_lut_value(table: &LutTable, v: i32, in_frac: i32, interpolate: bool, out_width: Width) -> i32 {
    let rp = table.range_pow() as i32;
    let u = (v as f64 * (2f64).powi(15 - rp - in_frac)).floor().clamp(-32768.0, 32767.0);
    let (entries, t) = if table.mode() == LutMode::TwoRegion && (-8192.0..8192.0).contains(&u) {
        let e = table.fine();
        (e, (u + 8192.0) / (16384.0 / e.len() as f64))
    } else {
        let e = table.coarse();
        (e, (u + 32768.0) / (65536.0 / e.len() as f64))
    };
    let idx = t.floor() as usize;
    let a = entries[idx] as f64;
    let val = if interpolate {
        let b = entries[(idx + 1).min(entries.len() - 1)] as f64;
        a + (b - a) * (t - idx as f64)
    } else {
        a
    };
    let scaled = val * (2f64).powi(out_width.bits() as i32 - table.entry_width().bits() as i32);
    ((scaled + 0.5).floor() as i64).clamp(out_width.min() as i64, out_width.max() as i64) as i32
}

pub fn ref_lut_apply_q7(x: &[i8], in_frac: i32, table: &LutTable, interpolate: bool) -> Vec<i8> {
    x.iter().map(|v| ref_lut_value(table, *v as i32, in_frac, interpolate, Width::Q7) as i8).collect()
}

pub fn ref_lut_apply_q15(x: &[i16], in_frac: i32, table: &LutTable, interpolate: bool) -> Vec<i16> {
    x.iter().map(|v| ref_lut_value(table, *v as i32, in_frac, interpolate, Width::Q15) as i16).collect()
}
