//! HWC q7 convolution: partial im2col followed by the 2x2 matmul kernel.

use super::im2col::gather_columns;
use super::matmul::mat_mult_q7_q15_2x2;
use super::output_dim;
use super::tensor::{QTensor, Shape};
use crate::error::{Error, Result};
use crate::par;
use crate::quant::QuantParams;

/// Square-window convolution geometry plus quantization.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ConvParams {
    pub kernel: usize,
    pub stride: usize,
    pub pad: usize,
    pub quant: QuantParams,
    /// im2col columns expanded per matmul call. Even, at least 2.
    pub partial_cols: usize,
}

impl ConvParams {
    pub const DEFAULT_PARTIAL_COLS: usize = 2;

    pub fn new(kernel: usize, stride: usize, pad: usize, quant: QuantParams) -> Self {
        ConvParams { kernel, stride, pad, quant, partial_cols: Self::DEFAULT_PARTIAL_COLS }
    }

    pub fn with_partial_cols(mut self, partial_cols: usize) -> Result<Self> {
        self.partial_cols = partial_cols;
        self.validate()?;
        Ok(self)
    }

    /// Buffers every output pixel at once (classic full im2col). The count
    /// is rounded up to keep the column pairs intact.
    pub fn full_im2col(self, in_shape: Shape) -> Result<Self> {
        let pixels = self.output_shape(in_shape, 1)?.pixels();
        self.with_partial_cols(pixels.max(2).next_multiple_of(2))
    }

    pub fn validate(&self) -> Result<()> {
        self.quant.validate()?;
        if self.kernel == 0 || self.stride == 0 {
            return Err(Error::param("kernel and stride must be positive"));
        }
        if self.partial_cols < 2 || !self.partial_cols.is_multiple_of(2) {
            return Err(Error::param(format!(
                "partial_cols must be even and >= 2, got {}",
                self.partial_cols
            )));
        }
        Ok(())
    }

    pub fn output_shape(&self, input: Shape, out_channels: usize) -> Result<Shape> {
        Ok(Shape::new(
            output_dim(input.height, self.kernel, self.stride, self.pad)?,
            output_dim(input.width, self.kernel, self.stride, self.pad)?,
            out_channels,
        ))
    }

    /// Entries in one im2col column.
    pub fn column_len(&self, in_channels: usize) -> usize {
        self.kernel * self.kernel * in_channels
    }

    /// q15 entries of scratch the sequential kernel needs.
    pub fn scratch_len(&self, in_channels: usize) -> usize {
        self.partial_cols * self.column_len(in_channels)
    }
}

struct ConvJob<'a> {
    input: &'a [i8],
    in_shape: Shape,
    out_shape: Shape,
    weights: &'a [i8],
    bias: &'a [i8],
    params: &'a ConvParams,
}

impl ConvJob<'_> {
    fn check(&self, in_len: usize) -> Result<()> {
        self.params.validate()?;
        if in_len != self.in_shape.len() {
            return Err(Error::shape(format!(
                "input buffer has {in_len} values, shape {} needs {}",
                self.in_shape,
                self.in_shape.len()
            )));
        }
        let need = self.out_shape.channels * self.params.column_len(self.in_shape.channels);
        if self.weights.len() != need {
            return Err(Error::shape(format!(
                "conv weights for {} filters of {k}x{k}x{} need {need} values, got {}",
                self.out_shape.channels,
                self.in_shape.channels,
                self.weights.len(),
                k = self.params.kernel,
            )));
        }
        Ok(())
    }

    /// Computes output pixels `first..first + out.len() / C_out`.
    fn run_band(&self, scratch: &mut [i16], out: &mut [i8], first: usize) {
        let c_out = self.out_shape.channels;
        let inner = self.params.column_len(self.in_shape.channels);
        let n_patches = out.len() / c_out;
        let mut done = 0;
        while done < n_patches {
            let n = self.params.partial_cols.min(n_patches - done);
            gather_columns(self.input, self.in_shape, self.params, self.out_shape.width, scratch, first + done, n);
            mat_mult_q7_q15_2x2(
                self.weights,
                c_out,
                inner,
                scratch,
                n,
                self.bias,
                self.params.quant,
                &mut out[done * c_out..(done + n) * c_out],
            );
            done += n;
        }
    }
}

/// Convolves an HWC q7 input with `[C_out][K][K][C_in]` weights into `out`.
///
/// `scratch` must hold [`ConvParams::scratch_len`] q15 values. The number of
/// filters is taken from `bias.len()`. Returns the output shape.
#[allow(clippy::too_many_arguments)]
pub fn conv_hwc_q7_into(
    input: &[i8],
    in_shape: Shape,
    weights: &[i8],
    bias: &[i8],
    params: &ConvParams,
    scratch: &mut [i16],
    out: &mut [i8],
) -> Result<Shape> {
    let out_shape = params.output_shape(in_shape, bias.len())?;
    let job = ConvJob { input, in_shape, out_shape, weights, bias, params };
    job.check(input.len())?;
    let need = params.scratch_len(in_shape.channels);
    if scratch.len() < need {
        return Err(Error::shape(format!("im2col scratch holds {} values, need {need}", scratch.len())));
    }
    if out.len() < out_shape.len() {
        return Err(Error::shape(format!("output buffer holds {}, need {}", out.len(), out_shape.len())));
    }
    job.run_band(scratch, &mut out[..out_shape.len()], 0);
    Ok(out_shape)
}

/// Like [`conv_hwc_q7_into`], with output row bands computed in parallel.
/// Each band allocates its own im2col scratch.
pub fn conv_hwc_q7_par_into(
    input: &[i8],
    in_shape: Shape,
    weights: &[i8],
    bias: &[i8],
    params: &ConvParams,
    out: &mut [i8],
) -> Result<Shape> {
    let out_shape = params.output_shape(in_shape, bias.len())?;
    let job = ConvJob { input, in_shape, out_shape, weights, bias, params };
    job.check(input.len())?;
    if out.len() < out_shape.len() {
        return Err(Error::shape(format!("output buffer holds {}, need {}", out.len(), out_shape.len())));
    }
    let band_pixels = par::rows_per_band(out_shape.height) * out_shape.width;
    let scratch_len = params.scratch_len(in_shape.channels);
    let c_out = out_shape.channels.max(1);
    par::for_each_chunk_mut(&mut out[..out_shape.len()], band_pixels * c_out, |band, chunk| {
        let mut scratch = vec![0i16; scratch_len];
        job.run_band(&mut scratch, chunk, band * band_pixels);
    });
    Ok(out_shape)
}

/// Tensor-level convolution. The output keeps the input's `frac_bits`;
/// callers that track formats relabel it.
pub fn conv_hwc_q7(
    input: &QTensor<i8>,
    weights: &[i8],
    bias: &[i8],
    params: &ConvParams,
    scratch: &mut [i16],
) -> Result<QTensor<i8>> {
    let out_shape = params.output_shape(input.shape(), bias.len())?;
    let mut out = vec![0i8; out_shape.len()];
    conv_hwc_q7_into(input.data(), input.shape(), weights, bias, params, scratch, &mut out)?;
    QTensor::new(out_shape, input.frac_bits(), out)
}

pub fn conv_hwc_q7_par(input: &QTensor<i8>, weights: &[i8], bias: &[i8], params: &ConvParams) -> Result<QTensor<i8>> {
    let out_shape = params.output_shape(input.shape(), bias.len())?;
    let mut out = vec![0i8; out_shape.len()];
    conv_hwc_q7_par_into(input.data(), input.shape(), weights, bias, params, &mut out)?;
    QTensor::new(out_shape, input.frac_bits(), out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::reference::ref_conv;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_tensor(rng: &mut ChaCha8Rng, shape: Shape) -> QTensor<i8> {
        QTensor::new(shape, 7, (0..shape.len()).map(|_| rng.gen()).collect()).unwrap()
    }

    #[test]
    fn pointwise_identity() {
        let t = QTensor::new(Shape::new(3, 3, 1), 7, (0..9).map(|v| v as i8 * 11 - 40).collect()).unwrap();
        let p = ConvParams::new(1, 1, 0, QuantParams::default());
        let mut scratch = vec![0i16; p.scratch_len(1)];
        let out = conv_hwc_q7(&t, &[1], &[0], &p, &mut scratch).unwrap();
        assert_eq!(out, t);
    }

    #[test]
    fn first_cifar_layer_shape() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let t = random_tensor(&mut rng, Shape::new(32, 32, 3));
        let w: Vec<i8> = (0..5 * 5 * 3 * 32).map(|_| rng.gen_range(-8..8)).collect();
        assert_eq!(w.len(), 2400);
        let bias = vec![0i8; 32];
        let p = ConvParams::new(5, 1, 2, QuantParams::new(0, 9).unwrap());
        let mut scratch = vec![0i16; p.scratch_len(3)];
        assert_eq!(scratch.len(), 150);
        let out = conv_hwc_q7(&t, &w, &bias, &p, &mut scratch).unwrap();
        assert_eq!(out.shape(), Shape::new(32, 32, 32));
        assert_eq!(out.data().len(), 32 * 1024);
        assert_eq!(out, ref_conv(&t, &w, &bias, &p).unwrap());
    }

    #[test]
    fn random_matches_direct_convolution() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let t = random_tensor(&mut rng, Shape::new(8, 8, 4));
        for &(k, s, pad, c_out) in &[(3, 1, 1, 5), (3, 2, 1, 4), (5, 1, 2, 3), (1, 1, 0, 7), (2, 2, 0, 2)] {
            let w: Vec<i8> = (0..k * k * 4 * c_out).map(|_| rng.gen()).collect();
            let bias: Vec<i8> = (0..c_out).map(|_| rng.gen()).collect();
            let p = ConvParams::new(k, s, pad, QuantParams::new(5, 9).unwrap());
            let mut scratch = vec![0i16; p.scratch_len(4)];
            let got = conv_hwc_q7(&t, &w, &bias, &p, &mut scratch).unwrap();
            assert_eq!(got, ref_conv(&t, &w, &bias, &p).unwrap());
            assert_eq!(got, conv_hwc_q7_par(&t, &w, &bias, &p).unwrap());
        }
    }

    #[test]
    fn partial_and_full_im2col_agree() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let t = random_tensor(&mut rng, Shape::new(7, 5, 3));
        let w: Vec<i8> = (0..9 * 3 * 6).map(|_| rng.gen()).collect();
        let bias: Vec<i8> = (0..6).map(|_| rng.gen()).collect();
        let p = ConvParams::new(3, 1, 1, QuantParams::new(2, 8).unwrap());
        let full = p.full_im2col(t.shape()).unwrap();
        assert_eq!(full.partial_cols, 36);
        let mut s1 = vec![0i16; p.scratch_len(3)];
        let mut s2 = vec![0i16; full.scratch_len(3)];
        assert_eq!(conv_hwc_q7(&t, &w, &bias, &p, &mut s1).unwrap(), conv_hwc_q7(&t, &w, &bias, &full, &mut s2).unwrap());
    }

    #[test]
    fn parameter_errors() {
        let t = QTensor::<i8>::zeros(Shape::new(4, 4, 2), 7);
        let p = ConvParams::new(3, 1, 0, QuantParams::default());
        let mut scratch = vec![0i16; p.scratch_len(2)];
        // wrong weight count
        assert!(conv_hwc_q7(&t, &[0; 17], &[0], &p, &mut scratch).is_err());
        // scratch too small
        assert!(conv_hwc_q7(&t, &[0; 18], &[0], &p, &mut scratch[..10]).is_err());
        // window larger than padded input
        let big = ConvParams::new(7, 1, 1, QuantParams::default());
        assert!(conv_hwc_q7(&t, &[0; 98], &[0], &big, &mut vec![0; 200]).is_err());
        assert!(p.with_partial_cols(3).is_err());
        assert!(p.with_partial_cols(0).is_err());
    }
}
