//! 2x2 blocked matrix multiplication on packed q15 pairs.
//!
//! Every inner iteration loads two values from each of two rows and two
//! columns and issues four `SMLAD`s, producing a 2x2 output block. Odd
//! leftover rows and columns fall back to 1-wide loops.
//!
//! Operand layout: `a` is row-major (`rows x inner`), the right operand is
//! column-major (column `j` is `b[j * inner..(j + 1) * inner]`), and so is
//! the output (column `j` is `out[j * rows..(j + 1) * rows]`). For a
//! convolution this makes each column an im2col patch and each output column
//! the channel vector of one HWC output pixel.

use super::tensor::QElem;
use crate::error::{Error, Result};
use crate::packedops::{smlad, PackedWord};
use crate::quant::{expand_ordered, QuantParams};

/// `out = requantize(bias << bls + a * b)` with q15 operands and q31 bias.
#[allow(clippy::too_many_arguments)]
pub fn matmul_q15_2x2<T: QElem>(
    a: &[i16],
    b_cols: &[i16],
    rows: usize,
    inner: usize,
    cols: usize,
    bias: &[i32],
    quant: QuantParams,
    out: &mut [T],
) -> Result<()> {
    quant.validate()?;
    if a.len() != rows * inner || b_cols.len() != inner * cols || bias.len() != rows || out.len() != rows * cols {
        return Err(Error::shape(format!(
            "matmul {rows}x{inner} * {inner}x{cols}: got a={}, b={}, bias={}, out={}",
            a.len(),
            b_cols.len(),
            bias.len(),
            out.len()
        )));
    }
    let shift = quant.out_right_shift;
    let pairs = inner / 2;

    let dot2 = |ra: &[i16], rb: &[i16], mut acc: i32| {
        for k in 0..pairs {
            acc = smlad(PackedWord::load_q15x2(&ra[2 * k..]), PackedWord::load_q15x2(&rb[2 * k..]), acc);
        }
        if inner % 2 == 1 {
            acc = acc.wrapping_add(ra[inner - 1] as i32 * rb[inner - 1] as i32);
        }
        acc
    };

    let mut c = 0;
    while c + 1 < cols {
        let b0 = &b_cols[c * inner..(c + 1) * inner];
        let b1 = &b_cols[(c + 1) * inner..(c + 2) * inner];
        let mut r = 0;
        while r + 1 < rows {
            let a0 = &a[r * inner..(r + 1) * inner];
            let a1 = &a[(r + 1) * inner..(r + 2) * inner];
            let mut s00 = quant.bias_acc(bias[r]);
            let mut s01 = s00;
            let mut s10 = quant.bias_acc(bias[r + 1]);
            let mut s11 = s10;
            for k in 0..pairs {
                let wa0 = PackedWord::load_q15x2(&a0[2 * k..]);
                let wa1 = PackedWord::load_q15x2(&a1[2 * k..]);
                let wb0 = PackedWord::load_q15x2(&b0[2 * k..]);
                let wb1 = PackedWord::load_q15x2(&b1[2 * k..]);
                s00 = smlad(wa0, wb0, s00);
                s01 = smlad(wa0, wb1, s01);
                s10 = smlad(wa1, wb0, s10);
                s11 = smlad(wa1, wb1, s11);
            }
            if inner % 2 == 1 {
                let k = inner - 1;
                s00 = s00.wrapping_add(a0[k] as i32 * b0[k] as i32);
                s01 = s01.wrapping_add(a0[k] as i32 * b1[k] as i32);
                s10 = s10.wrapping_add(a1[k] as i32 * b0[k] as i32);
                s11 = s11.wrapping_add(a1[k] as i32 * b1[k] as i32);
            }
            out[c * rows + r] = T::requantize(s00, shift);
            out[c * rows + r + 1] = T::requantize(s10, shift);
            out[(c + 1) * rows + r] = T::requantize(s01, shift);
            out[(c + 1) * rows + r + 1] = T::requantize(s11, shift);
            r += 2;
        }
        if r < rows {
            let a0 = &a[r * inner..(r + 1) * inner];
            let b = quant.bias_acc(bias[r]);
            out[c * rows + r] = T::requantize(dot2(a0, b0, b), shift);
            out[(c + 1) * rows + r] = T::requantize(dot2(a0, b1, b), shift);
        }
        c += 2;
    }
    if c < cols {
        let b0 = &b_cols[c * inner..(c + 1) * inner];
        for r in 0..rows {
            let a0 = &a[r * inner..(r + 1) * inner];
            out[c * rows + r] = T::requantize(dot2(a0, b0, quant.bias_acc(bias[r])), shift);
        }
    }
    Ok(())
}

/// q7 weights times q15 im2col columns, used by the convolution.
///
/// The weights are expanded on the fly, four at a time, for each pair of
/// rows; the columns were already expanded while gathering. The output
/// column `j` is written to `out[j * rows..]`.
#[allow(clippy::too_many_arguments)]
pub(crate) fn mat_mult_q7_q15_2x2(
    weights: &[i8],
    rows: usize,
    inner: usize,
    columns: &[i16],
    n_cols: usize,
    bias: &[i8],
    quant: QuantParams,
    out: &mut [i8],
) {
    debug_assert_eq!(weights.len(), rows * inner);
    debug_assert!(columns.len() >= n_cols * inner);
    debug_assert!(out.len() >= n_cols * rows);
    let shift = quant.out_right_shift;
    let quads = inner / 4;
    let tail = quads * 4;

    let mut c = 0;
    while c + 1 < n_cols {
        let b0 = &columns[c * inner..(c + 1) * inner];
        let b1 = &columns[(c + 1) * inner..(c + 2) * inner];
        let mut r = 0;
        while r + 1 < rows {
            let a0 = &weights[r * inner..(r + 1) * inner];
            let a1 = &weights[(r + 1) * inner..(r + 2) * inner];
            let mut s00 = quant.bias_acc(bias[r] as i32);
            let mut s01 = s00;
            let mut s10 = quant.bias_acc(bias[r + 1] as i32);
            let mut s11 = s10;
            for q in 0..quads {
                let k = 4 * q;
                let (a0_lo, a0_hi) = expand_ordered(PackedWord::load_q7x4(&a0[k..]));
                let (a1_lo, a1_hi) = expand_ordered(PackedWord::load_q7x4(&a1[k..]));
                let b0_lo = PackedWord::load_q15x2(&b0[k..]);
                let b0_hi = PackedWord::load_q15x2(&b0[k + 2..]);
                let b1_lo = PackedWord::load_q15x2(&b1[k..]);
                let b1_hi = PackedWord::load_q15x2(&b1[k + 2..]);
                s00 = smlad(a0_hi, b0_hi, smlad(a0_lo, b0_lo, s00));
                s01 = smlad(a0_hi, b1_hi, smlad(a0_lo, b1_lo, s01));
                s10 = smlad(a1_hi, b0_hi, smlad(a1_lo, b0_lo, s10));
                s11 = smlad(a1_hi, b1_hi, smlad(a1_lo, b1_lo, s11));
            }
            for k in tail..inner {
                let (w0, w1) = (a0[k] as i32, a1[k] as i32);
                let (x0, x1) = (b0[k] as i32, b1[k] as i32);
                s00 = s00.wrapping_add(w0 * x0);
                s01 = s01.wrapping_add(w0 * x1);
                s10 = s10.wrapping_add(w1 * x0);
                s11 = s11.wrapping_add(w1 * x1);
            }
            out[c * rows + r] = i8::requantize(s00, shift);
            out[c * rows + r + 1] = i8::requantize(s10, shift);
            out[(c + 1) * rows + r] = i8::requantize(s01, shift);
            out[(c + 1) * rows + r + 1] = i8::requantize(s11, shift);
            r += 2;
        }
        if r < rows {
            let a0 = &weights[r * inner..(r + 1) * inner];
            let bias_acc = quant.bias_acc(bias[r] as i32);
            out[c * rows + r] = i8::requantize(dot_q7_q15(a0, b0, bias_acc), shift);
            out[(c + 1) * rows + r] = i8::requantize(dot_q7_q15(a0, b1, bias_acc), shift);
        }
        c += 2;
    }
    if c < n_cols {
        let b0 = &columns[c * inner..(c + 1) * inner];
        for r in 0..rows {
            let a0 = &weights[r * inner..(r + 1) * inner];
            let acc = dot_q7_q15(a0, b0, quant.bias_acc(bias[r] as i32));
            out[c * rows + r] = i8::requantize(acc, shift);
        }
    }
}

/// Dot product of a q7 row with a q15 vector, four weights per step.
#[inline]
pub(crate) fn dot_q7_q15(w: &[i8], x: &[i16], mut acc: i32) -> i32 {
    let n = w.len();
    let quads = n / 4;
    for q in 0..quads {
        let k = 4 * q;
        let (lo, hi) = expand_ordered(PackedWord::load_q7x4(&w[k..]));
        acc = smlad(lo, PackedWord::load_q15x2(&x[k..]), acc);
        acc = smlad(hi, PackedWord::load_q15x2(&x[k + 2..]), acc);
    }
    for k in quads * 4..n {
        acc = acc.wrapping_add(w[k] as i32 * x[k] as i32);
    }
    acc
}
