//! Depthwise HWC q7 convolution: one `K x K` filter per channel.
//!
//! Because HWC keeps a pixel's channels adjacent, each window tap is a
//! multiply-accumulate of two contiguous channel runs into a row of
//! per-channel accumulators.

use super::conv::ConvParams;
use super::tensor::{QElem, QTensor, Shape};
use crate::error::{Error, Result};
use crate::par;

fn check(in_len: usize, in_shape: Shape, weights: &[i8], bias: &[i8], params: &ConvParams) -> Result<Shape> {
    params.validate()?;
    let c = in_shape.channels;
    if in_len != in_shape.len() {
        return Err(Error::shape(format!("input buffer has {in_len} values, shape {in_shape} needs {}", in_shape.len())));
    }
    if bias.len() != c {
        return Err(Error::shape(format!("depthwise conv needs C_out == C_in ({c}), bias has {}", bias.len())));
    }
    if weights.len() != params.kernel * params.kernel * c {
        return Err(Error::shape(format!(
            "depthwise weights [{k}][{k}][{c}] need {} values, got {}",
            params.kernel * params.kernel * c,
            weights.len(),
            k = params.kernel
        )));
    }
    params.output_shape(in_shape, c)
}

#[allow(clippy::too_many_arguments)]
fn run_rows(
    input: &[i8],
    in_shape: Shape,
    out_shape: Shape,
    weights: &[i8],
    bias: &[i8],
    params: &ConvParams,
    first_row: usize,
    out: &mut [i8],
) {
    let c = in_shape.channels;
    let k = params.kernel;
    let q = params.quant;
    let mut acc = vec![0i32; c];
    let rows = out.len() / (out_shape.width * c);
    for r in 0..rows {
        let oy = first_row + r;
        let base_y = (oy * params.stride) as isize - params.pad as isize;
        for ox in 0..out_shape.width {
            let base_x = (ox * params.stride) as isize - params.pad as isize;
            for (a, b) in acc.iter_mut().zip(bias) {
                *a = q.bias_acc(*b as i32);
            }
            for dy in 0..k {
                let iy = base_y + dy as isize;
                if iy < 0 || iy as usize >= in_shape.height {
                    continue;
                }
                for dx in 0..k {
                    let ix = base_x + dx as isize;
                    if ix < 0 || ix as usize >= in_shape.width {
                        continue;
                    }
                    let off = in_shape.offset(iy as usize, ix as usize, 0);
                    let px = &input[off..off + c];
                    let w = &weights[(dy * k + dx) * c..(dy * k + dx + 1) * c];
                    for ((a, x), w) in acc.iter_mut().zip(px).zip(w) {
                        *a = a.wrapping_add(*x as i32 * *w as i32);
                    }
                }
            }
            let dst = &mut out[(r * out_shape.width + ox) * c..(r * out_shape.width + ox + 1) * c];
            for (d, a) in dst.iter_mut().zip(&acc) {
                *d = i8::requantize(*a, q.out_right_shift);
            }
        }
    }
}

/// Depthwise convolution with `[K][K][C]` weights and one bias per channel.
pub fn depthwise_conv_hwc_q7_into(
    input: &[i8],
    in_shape: Shape,
    weights: &[i8],
    bias: &[i8],
    params: &ConvParams,
    out: &mut [i8],
) -> Result<Shape> {
    let out_shape = check(input.len(), in_shape, weights, bias, params)?;
    if out.len() < out_shape.len() {
        return Err(Error::shape(format!("output buffer holds {}, need {}", out.len(), out_shape.len())));
    }
    run_rows(input, in_shape, out_shape, weights, bias, params, 0, &mut out[..out_shape.len()]);
    Ok(out_shape)
}

/// Row-band parallel version of [`depthwise_conv_hwc_q7_into`].
pub fn depthwise_conv_hwc_q7_par_into(
    input: &[i8],
    in_shape: Shape,
    weights: &[i8],
    bias: &[i8],
    params: &ConvParams,
    out: &mut [i8],
) -> Result<Shape> {
    let out_shape = check(input.len(), in_shape, weights, bias, params)?;
    if out.len() < out_shape.len() {
        return Err(Error::shape(format!("output buffer holds {}, need {}", out.len(), out_shape.len())));
    }
    let band_rows = par::rows_per_band(out_shape.height);
    let row_len = out_shape.width * out_shape.channels;
    par::for_each_chunk_mut(&mut out[..out_shape.len()], band_rows * row_len, |band, chunk| {
        run_rows(input, in_shape, out_shape, weights, bias, params, band * band_rows, chunk);
    });
    Ok(out_shape)
}

pub fn depthwise_conv_hwc_q7(
    input: &QTensor<i8>,
    weights: &[i8],
    bias: &[i8],
    params: &ConvParams,
) -> Result<QTensor<i8>> {
    let out_shape = params.output_shape(input.shape(), input.shape().channels)?;
    let mut out = vec![0i8; out_shape.len()];
    depthwise_conv_hwc_q7_into(input.data(), input.shape(), weights, bias, params, &mut out)?;
    QTensor::new(out_shape, input.frac_bits(), out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::quant::QuantParams;
    use crate::reference::ref_depthwise_conv;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn unit_pointwise_filter_is_identity() {
        let t = QTensor::new(Shape::new(2, 3, 4), 7, (0..24).map(|v| v as i8 * 5 - 60).collect()).unwrap();
        let p = ConvParams::new(1, 1, 0, QuantParams::default());
        assert_eq!(depthwise_conv_hwc_q7(&t, &[1; 4], &[0; 4], &p).unwrap(), t);
    }

    #[test]
    fn channels_stay_isolated() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let shape = Shape::new(6, 6, 8);
        let mut data = vec![0i8; shape.len()];
        for y in 0..6 {
            for x in 0..6 {
                data[shape.offset(y, x, 3)] = rng.gen_range(1..100);
            }
        }
        let t = QTensor::new(shape, 7, data).unwrap();
        let w: Vec<i8> = (0..9 * 8).map(|_| rng.gen_range(1..50)).collect();
        let p = ConvParams::new(3, 1, 1, QuantParams::new(0, 6).unwrap());
        let out = depthwise_conv_hwc_q7(&t, &w, &[0; 8], &p).unwrap();
        for (i, v) in out.data().iter().enumerate() {
            if i % 8 == 3 {
                assert!(*v > 0);
            } else {
                assert_eq!(*v, 0);
            }
        }
    }

    #[test]
    fn random_matches_per_channel_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(10);
        let shape = Shape::new(6, 6, 8);
        let t = QTensor::new(shape, 7, (0..shape.len()).map(|_| rng.gen()).collect()).unwrap();
        let w: Vec<i8> = (0..9 * 8).map(|_| rng.gen()).collect();
        let bias: Vec<i8> = (0..8).map(|_| rng.gen()).collect();
        for &(s, pad) in &[(1, 1), (2, 1), (1, 0), (2, 2)] {
            let p = ConvParams::new(3, s, pad, QuantParams::new(4, 8).unwrap());
            let got = depthwise_conv_hwc_q7(&t, &w, &bias, &p).unwrap();
            assert_eq!(got, ref_depthwise_conv(&t, &w, &bias, &p).unwrap());
            let mut par_out = vec![0i8; got.data().len()];
            depthwise_conv_hwc_q7_par_into(t.data(), shape, &w, &bias, &p, &mut par_out).unwrap();
            assert_eq!(par_out, got.data());
        }
    }

    #[test]
    fn mismatched_channels_rejected() {
        let t = QTensor::<i8>::zeros(Shape::new(3, 3, 2), 7);
        let p = ConvParams::new(3, 1, 1, QuantParams::default());
        assert!(depthwise_conv_hwc_q7(&t, &[0; 18], &[0; 3], &p).is_err());
        assert!(depthwise_conv_hwc_q7(&t, &[0; 17], &[0; 2], &p).is_err());
    }
}
