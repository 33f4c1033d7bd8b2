//! Fully-connected (matrix-vector) kernels, batch size one.
//!
//! Three variants:
//!
//! - [`fully_connected_q7_basic`]: works on a plain row-major weight matrix
//!   of any size.
//! - [`fully_connected_q7_opt`]: consumes a 1x4-interleaved weight blob
//!   produced by [`weight_reorder_1x4`], so that one pointer streams four
//!   rows at a time and the activation vector needs no reordering after
//!   expansion.
//! - [`fully_connected_mixed`]: q15 activations with q7 weights that went
//!   were byte-swapped row by row with [`crate::quant::weight_byteswap_rows`].

use super::matmul::dot_q7_q15;
use crate::error::{Error, Result};
use crate::packedops::{smlad, sxtb16, sxtb16_ror8, PackedWord};
use crate::quant::{expand_noreorder, q7_to_q15_noreorder, q7_to_q15_ordered, requantize_q15, requantize_q7, QuantParams};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum WeightLayout {
    RowMajor,
    Interleaved1x4,
}

impl WeightLayout {
    pub const fn name(self) -> &'static str {
        match self {
            WeightLayout::RowMajor => "row-major",
            WeightLayout::Interleaved1x4 => "interleaved-1x4",
        }
    }
}

/// A weight matrix together with the layout its blob is stored in.
///
/// Interleaved layout, for each band of four rows `r0..r3`:
///
/// - every full group of four columns `c0..c3` emits 16 bytes:
///   `r0c0 r1c0 r0c2 r1c2 r0c1 r1c1 r0c3 r1c3` followed by the same pattern
///   for `r2`/`r3`. `SXTB16` of the first word yields `(r0c0, r0c2)`, which
///   lines up with the activation pair `(x0, x2)` produced by the
///   non-reordering expansion.
/// - every leftover column `c` emits `r0c r1c r2c r3c`.
///
/// The last `rows % 4` rows are stored unchanged, row-major.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ReorderedWeights {
    rows: usize,
    cols: usize,
    layout: WeightLayout,
    blob: Vec<i8>,
}

impl ReorderedWeights {
    /// Wraps an existing blob, e.g. read from a model file.
    pub fn from_raw(rows: usize, cols: usize, blob: Vec<i8>, layout: WeightLayout) -> Result<Self> {
        if blob.len() != rows * cols {
            return Err(Error::shape(format!(
                "{rows}x{cols} weights need {} bytes, blob has {}",
                rows * cols,
                blob.len()
            )));
        }
        Ok(ReorderedWeights { rows, cols, layout, blob })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn layout(&self) -> WeightLayout {
        self.layout
    }

    pub fn blob(&self) -> &[i8] {
        &self.blob
    }

    /// Leftover rows and columns that fall outside the 4x4 main part.
    pub fn leftovers(&self) -> (usize, usize) {
        (self.rows % 4, self.cols % 4)
    }

    /// Recovers the row-major matrix.
    pub fn deinterleave(&self) -> Vec<i8> {
        match self.layout {
            WeightLayout::RowMajor => self.blob.clone(),
            WeightLayout::Interleaved1x4 => {
                let mut w = vec![0i8; self.rows * self.cols];
                visit_interleaved(self.rows, self.cols, |blob_idx, r, c| {
                    w[r * self.cols + c] = self.blob[blob_idx];
                });
                w
            }
        }
    }
}

/// Calls `f(blob_index, row, col)` for every entry of the interleaved layout,
/// in blob order. Shared by the reorder and its inverse so both agree.
fn visit_interleaved(rows: usize, cols: usize, mut f: impl FnMut(usize, usize, usize)) {
    const PATTERN: [(usize, usize); 8] = [(0, 0), (1, 0), (0, 2), (1, 2), (0, 1), (1, 1), (0, 3), (1, 3)];
    let mut i = 0;
    let bands = rows / 4;
    let groups = cols / 4;
    for band in 0..bands {
        let r0 = band * 4;
        for g in 0..groups {
            let c0 = g * 4;
            for pair in [0, 2] {
                for (dr, dc) in PATTERN {
                    f(i, r0 + pair + dr, c0 + dc);
                    i += 1;
                }
            }
        }
        for c in groups * 4..cols {
            for dr in 0..4 {
                f(i, r0 + dr, c);
                i += 1;
            }
        }
    }
    for r in bands * 4..rows {
        for c in 0..cols {
            f(i, r, c);
            i += 1;
        }
    }
}

/// Interleaves a row-major `rows x cols` matrix for [`fully_connected_q7_opt`].
pub fn weight_reorder_1x4(w: &[i8], rows: usize, cols: usize) -> Result<ReorderedWeights> {
    if w.len() != rows * cols {
        return Err(Error::shape(format!("{rows}x{cols} weights need {} bytes, got {}", rows * cols, w.len())));
    }
    let mut blob = vec![0i8; w.len()];
    visit_interleaved(rows, cols, |i, r, c| blob[i] = w[r * cols + c]);
    Ok(ReorderedWeights { rows, cols, layout: WeightLayout::Interleaved1x4, blob })
}

fn check_fc(x_len: usize, w_len: usize, bias_len: usize, out_len: usize, buf_len: usize) -> Result<()> {
    let (rows, cols) = (bias_len, x_len);
    if w_len != rows * cols || out_len != rows {
        return Err(Error::shape(format!(
            "fully-connected {rows}x{cols}: weights {w_len}, output {out_len}"
        )));
    }
    if buf_len < cols {
        return Err(Error::shape(format!("vector buffer holds {buf_len} values, need {cols}")));
    }
    Ok(())
}

/// Plain matrix-vector product over a row-major weight matrix.
///
/// `x` is expanded into `vec_buf` once; each row's weights are expanded in
/// registers, four at a time.
pub fn fully_connected_q7_basic(
    x: &[i8],
    w: &[i8],
    bias: &[i8],
    quant: QuantParams,
    vec_buf: &mut [i16],
    out: &mut [i8],
) -> Result<()> {
    quant.validate()?;
    check_fc(x.len(), w.len(), bias.len(), out.len(), vec_buf.len())?;
    let cols = x.len();
    let xv = &mut vec_buf[..cols];
    q7_to_q15_ordered(x, xv);
    for (r, o) in out.iter_mut().enumerate() {
        let acc = dot_q7_q15(&w[r * cols..(r + 1) * cols], xv, quant.bias_acc(bias[r] as i32));
        *o = requantize_q7(acc, quant.out_right_shift);
    }
    Ok(())
}

/// Matrix-vector product over 1x4-interleaved weights.
///
/// Each inner iteration expands one activation quad and performs two 1x4
/// multiply-accumulates (rows `r0`/`r1`, then `r2`/`r3`) against it.
pub fn fully_connected_q7_opt(
    x: &[i8],
    w: &ReorderedWeights,
    bias: &[i8],
    quant: QuantParams,
    vec_buf: &mut [i16],
    out: &mut [i8],
) -> Result<()> {
    quant.validate()?;
    if w.layout != WeightLayout::Interleaved1x4 {
        return Err(Error::Layout { expected: WeightLayout::Interleaved1x4.name(), found: w.layout.name() });
    }
    if w.cols != x.len() || w.rows != bias.len() {
        return Err(Error::shape(format!(
            "weights are {}x{}, input {} and bias {}",
            w.rows,
            w.cols,
            x.len(),
            bias.len()
        )));
    }
    check_fc(x.len(), w.blob.len(), bias.len(), out.len(), vec_buf.len())?;
    let (rows, cols) = (w.rows, w.cols);
    let shift = quant.out_right_shift;
    let xv = &mut vec_buf[..cols];
    q7_to_q15_noreorder(x, xv);

    let groups = cols / 4;
    let blob = &w.blob[..];
    let mut p = 0;

    for band in 0..rows / 4 {
        let r0 = band * 4;
        let mut acc = [
            quant.bias_acc(bias[r0] as i32),
            quant.bias_acc(bias[r0 + 1] as i32),
            quant.bias_acc(bias[r0 + 2] as i32),
            quant.bias_acc(bias[r0 + 3] as i32),
        ];
        for g in 0..groups {
            let x02 = PackedWord::load_q15x2(&xv[4 * g..]);
            let x13 = PackedWord::load_q15x2(&xv[4 * g + 2..]);
            // rows 0 and 1
            let w0 = PackedWord::load_q7x4(&blob[p..]);
            let w1 = PackedWord::load_q7x4(&blob[p + 4..]);
            acc[0] = smlad(sxtb16(w0), x02, acc[0]);
            acc[1] = smlad(sxtb16_ror8(w0), x02, acc[1]);
            acc[0] = smlad(sxtb16(w1), x13, acc[0]);
            acc[1] = smlad(sxtb16_ror8(w1), x13, acc[1]);
            // rows 2 and 3
            let w2 = PackedWord::load_q7x4(&blob[p + 8..]);
            let w3 = PackedWord::load_q7x4(&blob[p + 12..]);
            acc[2] = smlad(sxtb16(w2), x02, acc[2]);
            acc[3] = smlad(sxtb16_ror8(w2), x02, acc[3]);
            acc[2] = smlad(sxtb16(w3), x13, acc[2]);
            acc[3] = smlad(sxtb16_ror8(w3), x13, acc[3]);
            p += 16;
        }
        for &xc in &xv[groups * 4..cols] {
            let xc = xc as i32;
            for a in acc.iter_mut() {
                *a = a.wrapping_add(blob[p] as i32 * xc);
                p += 1;
            }
        }
        for (i, a) in acc.iter().enumerate() {
            out[r0 + i] = requantize_q7(*a, shift);
        }
    }

    // leftover rows: stored row-major, matched to the reordered vector by
    // expanding them the same way
    for r in (rows / 4) * 4..rows {
        let row = &blob[p..p + cols];
        let mut acc = quant.bias_acc(bias[r] as i32);
        for g in 0..groups {
            let (even, odd) = expand_noreorder(PackedWord::load_q7x4(&row[4 * g..]));
            acc = smlad(even, PackedWord::load_q15x2(&xv[4 * g..]), acc);
            acc = smlad(odd, PackedWord::load_q15x2(&xv[4 * g + 2..]), acc);
        }
        for c in groups * 4..cols {
            acc = acc.wrapping_add(row[c] as i32 * xv[c] as i32);
        }
        out[r] = requantize_q7(acc, shift);
        p += cols;
    }
    Ok(())
}

/// q15 activations times q7 weights whose 4-byte groups were byte-swapped
/// within each row (`[a, b, c, d]` stored as `[a, c, b, d]`).
pub fn fully_connected_mixed(
    x: &[i16],
    w_swapped: &[i8],
    bias: &[i8],
    quant: QuantParams,
    out: &mut [i16],
) -> Result<()> {
    quant.validate()?;
    check_fc(x.len(), w_swapped.len(), bias.len(), out.len(), x.len())?;
    let cols = x.len();
    let quads = cols / 4;
    for (r, o) in out.iter_mut().enumerate() {
        let row = &w_swapped[r * cols..(r + 1) * cols];
        let mut acc = quant.bias_acc(bias[r] as i32);
        for q in 0..quads {
            let k = 4 * q;
            // non-reordering expansion undoes the byte swap
            let (lo, hi) = expand_noreorder(PackedWord::load_q7x4(&row[k..]));
            acc = smlad(lo, PackedWord::load_q15x2(&x[k..]), acc);
            acc = smlad(hi, PackedWord::load_q15x2(&x[k + 2..]), acc);
        }
        for k in quads * 4..cols {
            acc = acc.wrapping_add(row[k] as i32 * x[k] as i32);
        }
        *o = requantize_q15(acc, quant.out_right_shift);
    }
    Ok(())
}
