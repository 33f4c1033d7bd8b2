//! Power-of-two fixed-point formats.
//!
//! A value is stored as an integer `v` with `frac_bits = n`, representing
//! `v * 2^-n`. Rescaling between formats is a shift, so bias alignment and
//! output requantization never touch floating point.

use crate::error::{Error, Result};
use crate::packedops::{pkhbt, pkhtb, ssat_q15, ssat_q7, sxtb16, sxtb16_ror8, PackedWord};

/// Storage width of a fixed-point element.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, serde::Serialize, serde::Deserialize)]
pub enum Width {
    Q7,
    Q15,
}

impl Width {
    pub const fn bits(self) -> u32 {
        match self {
            Width::Q7 => 8,
            Width::Q15 => 16,
        }
    }

    pub const fn min(self) -> i32 {
        match self {
            Width::Q7 => i8::MIN as i32,
            Width::Q15 => i16::MIN as i32,
        }
    }

    pub const fn max(self) -> i32 {
        match self {
            Width::Q7 => i8::MAX as i32,
            Width::Q15 => i16::MAX as i32,
        }
    }

    pub fn from_bits(bits: u32) -> Result<Self> {
        match bits {
            8 => Ok(Width::Q7),
            16 => Ok(Width::Q15),
            other => Err(Error::param(format!("unsupported element width {other}"))),
        }
    }

    #[inline]
    pub fn saturate(self, v: i64) -> i32 {
        v.clamp(self.min() as i64, self.max() as i64) as i32
    }
}

/// A single fixed-point number.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct QScalar {
    value: i32,
    frac_bits: u32,
    width: Width,
}

impl QScalar {
    pub fn new(value: i32, frac_bits: u32, width: Width) -> Result<Self> {
        if frac_bits >= width.bits() {
            return Err(Error::param(format!(
                "frac_bits {frac_bits} out of range for {}-bit value",
                width.bits()
            )));
        }
        if value < width.min() || value > width.max() {
            return Err(Error::param(format!(
                "value {value} does not fit {}-bit storage",
                width.bits()
            )));
        }
        Ok(QScalar { value, frac_bits, width })
    }

    pub fn value(self) -> i32 {
        self.value
    }

    pub fn frac_bits(self) -> u32 {
        self.frac_bits
    }

    pub fn width(self) -> Width {
        self.width
    }

    pub fn dequantize(self) -> f64 {
        self.value as f64 * (-(self.frac_bits as f64)).exp2()
    }
}

/// Rounds `x * 2^frac_bits` to nearest (ties away from zero) and saturates.
pub fn quantize_real(x: f64, frac_bits: u32, width: Width) -> Result<QScalar> {
    if frac_bits >= width.bits() {
        return Err(Error::param(format!(
            "frac_bits {frac_bits} out of range for {}-bit value",
            width.bits()
        )));
    }
    if x.is_nan() {
        return Err(Error::param("cannot quantize NaN"));
    }
    let scaled = (x * (frac_bits as f64).exp2()).round();
    let value = scaled.clamp(width.min() as f64, width.max() as f64) as i32;
    QScalar::new(value, frac_bits, width)
}

/// Per-layer shift amounts.
///
/// With input, weight, bias and output formats `fi`, `fw`, `fb`, `fo` the
/// accumulator lives at `fi + fw` fractional bits. The bias is shifted left
/// by `bias_left_shift` to reach it, and the accumulator is shifted right by
/// `out_right_shift` to produce the output.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, serde::Serialize, serde::Deserialize)]
pub struct QuantParams {
    pub bias_left_shift: u32,
    pub out_right_shift: u32,
}

impl QuantParams {
    pub fn new(bias_left_shift: u32, out_right_shift: u32) -> Result<Self> {
        let q = QuantParams { bias_left_shift, out_right_shift };
        q.validate()?;
        Ok(q)
    }

    pub fn validate(&self) -> Result<()> {
        if self.bias_left_shift > 31 || self.out_right_shift > 31 {
            return Err(Error::param(format!(
                "shifts must be <= 31 (bias_left_shift={}, out_right_shift={})",
                self.bias_left_shift, self.out_right_shift
            )));
        }
        Ok(())
    }

    /// Checks `fi + fw == fb + bias_left_shift == fo + out_right_shift`.
    pub fn check_scales(&self, input_frac: i32, weight_frac: i32, bias_frac: i32, output_frac: i32) -> Result<()> {
        let acc = input_frac + weight_frac;
        let via_bias = bias_frac + self.bias_left_shift as i32;
        let via_out = output_frac + self.out_right_shift as i32;
        if acc != via_bias || acc != via_out {
            return Err(Error::param(format!(
                "inconsistent scales: input+weight={acc}, bias+shift={via_bias}, output+shift={via_out}"
            )));
        }
        Ok(())
    }

    /// Bias moved to accumulator scale. Wraps for absurd shifts.
    #[inline(always)]
    pub fn bias_acc(&self, bias: i32) -> i32 {
        bias.wrapping_shl(self.bias_left_shift)
    }
}

/// Rounded arithmetic right shift followed by saturation to `width`.
///
/// `(acc + 2^(shift-1)) >> shift`, evaluated without intermediate overflow.
#[inline(always)]
pub fn requantize(acc: i32, out_right_shift: u32, width: Width) -> i32 {
    width.saturate(round_shift(acc, out_right_shift))
}

#[inline(always)]
pub fn requantize_q7(acc: i32, out_right_shift: u32) -> i8 {
    ssat_q7(round_shift(acc, out_right_shift).clamp(i32::MIN as i64, i32::MAX as i64) as i32)
}

#[inline(always)]
pub fn requantize_q15(acc: i32, out_right_shift: u32) -> i16 {
    ssat_q15(round_shift(acc, out_right_shift).clamp(i32::MIN as i64, i32::MAX as i64) as i32)
}

#[inline(always)]
fn round_shift(acc: i32, shift: u32) -> i64 {
    if shift == 0 {
        acc as i64
    } else {
        (acc as i64 + (1i64 << (shift - 1))) >> shift
    }
}

/// Expands q7 to q15 preserving element order.
///
/// The aligned body goes through `SXTB16`/`SXTB16 ROR 8` and is repacked
/// with `PKHBT`/`PKHTB`; a length remainder is converted one element at a time.
pub fn q7_to_q15_ordered(src: &[i8], dst: &mut [i16]) {
    assert!(dst.len() >= src.len(), "destination too short");
    let body = src.len() & !3;
    for (s, d) in src[..body].chunks_exact(4).zip(dst.chunks_exact_mut(4)) {
        let (lo, hi) = expand_ordered(PackedWord::load_q7x4(s));
        lo.store_q15x2(&mut d[..2]);
        hi.store_q15x2(&mut d[2..]);
    }
    for (s, d) in src[body..].iter().zip(&mut dst[body..src.len()]) {
        *d = *s as i16;
    }
}

/// Expands q7 to q15 without the reordering step.
///
/// Every group `[a, b, c, d]` comes out as `[a, c, b, d]`. The remainder of
/// a length that is not a multiple of four is copied in order.
pub fn q7_to_q15_noreorder(src: &[i8], dst: &mut [i16]) {
    assert!(dst.len() >= src.len(), "destination too short");
    let body = src.len() & !3;
    for (s, d) in src[..body].chunks_exact(4).zip(dst.chunks_exact_mut(4)) {
        let (even, odd) = expand_noreorder(PackedWord::load_q7x4(s));
        even.store_q15x2(&mut d[..2]);
        odd.store_q15x2(&mut d[2..]);
    }
    for (s, d) in src[body..].iter().zip(&mut dst[body..src.len()]) {
        *d = *s as i16;
    }
}

/// In-register ordered expansion: `[a,b,c,d]` to words `(a,b)` and `(c,d)`.
#[inline(always)]
pub(crate) fn expand_ordered(w: PackedWord) -> (PackedWord, PackedWord) {
    let odd = sxtb16_ror8(w);
    let even = sxtb16(w);
    (pkhbt(even, odd, 16), pkhtb(odd, even, 16))
}

/// In-register expansion without reorder: `[a,b,c,d]` to `(a,c)` and `(b,d)`.
#[inline(always)]
pub(crate) fn expand_noreorder(w: PackedWord) -> (PackedWord, PackedWord) {
    (sxtb16(w), sxtb16_ror8(w))
}

pub fn q7_to_q15_ordered_vec(src: &[i8]) -> Vec<i16> {
    let mut out = vec![0; src.len()];
    q7_to_q15_ordered(src, &mut out);
    out
}

pub fn q7_to_q15_noreorder_vec(src: &[i8]) -> Vec<i16> {
    let mut out = vec![0; src.len()];
    q7_to_q15_noreorder(src, &mut out);
    out
}

/// Swaps the second and third byte of every 4-byte group, in place.
///
/// Bytes past the last full group are left where they are, matching the
/// in-order tail of [`q7_to_q15_noreorder`]. The operation is its own inverse.
pub fn weight_byteswap_in_place(w: &mut [i8]) {
    for g in w.chunks_exact_mut(4) {
        g.swap(1, 2);
    }
}

pub fn weight_byteswap_preprocess(w: &[i8]) -> Vec<i8> {
    let mut out = w.to_vec();
    weight_byteswap_in_place(&mut out);
    out
}

/// Byte-swaps each `cols`-long row of a row-major matrix on its own, so
/// groups never straddle two rows. Identical to the flat version when
/// `cols` is a multiple of four.
pub fn weight_byteswap_rows(w: &[i8], cols: usize) -> Vec<i8> {
    let mut out = w.to_vec();
    if cols > 0 {
        out.chunks_mut(cols).for_each(weight_byteswap_in_place);
    }
    out
}
