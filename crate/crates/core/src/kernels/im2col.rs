//! Partial im2col for HWC q7 input.
//!
//! Only a handful of output pixels are expanded at a time. A column holds
//! one receptive field in `(dy, dx, c)` order, widened to q15; since every
//! pixel's channels are contiguous in HWC, each tap is a single run copy.

use super::conv::ConvParams;
use super::tensor::{QTensor, Shape};
use crate::error::{Error, Result};
use crate::quant::q7_to_q15_ordered;

/// Fills `n_patches` columns of `col_buf` for output pixels starting at
/// `start_patch` (row-major over the output plane). Returns the number of
/// columns written.
pub fn im2col_partial(
    input: &QTensor<i8>,
    params: &ConvParams,
    col_buf: &mut [i16],
    start_patch: usize,
    n_patches: usize,
) -> Result<usize> {
    params.validate()?;
    let in_shape = input.shape();
    let out = params.output_shape(in_shape, 1)?;
    if n_patches > params.partial_cols {
        return Err(Error::param(format!(
            "{n_patches} patches requested but the buffer is sized for {}",
            params.partial_cols
        )));
    }
    if start_patch + n_patches > out.pixels() {
        return Err(Error::param(format!(
            "patches {start_patch}..{} out of range (output has {})",
            start_patch + n_patches,
            out.pixels()
        )));
    }
    let col_len = params.column_len(in_shape.channels);
    if col_buf.len() < n_patches * col_len {
        return Err(Error::shape(format!(
            "column buffer holds {} values, need {}",
            col_buf.len(),
            n_patches * col_len
        )));
    }
    gather_columns(input.data(), in_shape, params, out.width, col_buf, start_patch, n_patches);
    Ok(n_patches)
}

pub(crate) fn gather_columns(
    input: &[i8],
    in_shape: Shape,
    params: &ConvParams,
    out_width: usize,
    col_buf: &mut [i16],
    start_patch: usize,
    n_patches: usize,
) {
    let k = params.kernel;
    let c = in_shape.channels;
    let col_len = k * k * c;
    for j in 0..n_patches {
        let patch = start_patch + j;
        let (oy, ox) = (patch / out_width, patch % out_width);
        let col = &mut col_buf[j * col_len..(j + 1) * col_len];
        let base_y = (oy * params.stride) as isize - params.pad as isize;
        let base_x = (ox * params.stride) as isize - params.pad as isize;
        let mut idx = 0;
        for dy in 0..k as isize {
            let iy = base_y + dy;
            let row_ok = iy >= 0 && (iy as usize) < in_shape.height;
            for dx in 0..k as isize {
                let ix = base_x + dx;
                let dst = &mut col[idx..idx + c];
                if row_ok && ix >= 0 && (ix as usize) < in_shape.width {
                    let off = in_shape.offset(iy as usize, ix as usize, 0);
                    q7_to_q15_ordered(&input[off..off + c], dst);
                } else {
                    dst.fill(0);
                }
                idx += c;
            }
        }
    }
}
