//! Packed 32-bit word operations.
//!
//! Each function models one Arm DSP-extension instruction as a pure function
//! on a [`PackedWord`]. Lane numbering is defined on the 32-bit value: lane 0
//! always occupies the least-significant bits. Loads and stores from byte
//! buffers are little-endian, so results do not depend on host byte order.

use std::fmt;

/// A 32-bit register viewed either as four signed 8-bit lanes or two signed
/// 16-bit lanes.
#[derive(Clone, Copy, PartialEq, Eq, Hash, Default)]
pub struct PackedWord(pub u32);

impl PackedWord {
    pub const ZERO: PackedWord = PackedWord(0);

    #[inline(always)]
    pub const fn bits(self) -> u32 {
        self.0
    }

    #[inline(always)]
    pub fn from_q7_lanes(lanes: [i8; 4]) -> Self {
        PackedWord(u32::from_le_bytes(lanes.map(|l| l as u8)))
    }

    #[inline(always)]
    pub fn q7_lanes(self) -> [i8; 4] {
        self.0.to_le_bytes().map(|b| b as i8)
    }

    #[inline(always)]
    pub fn from_q15_lanes(lanes: [i16; 2]) -> Self {
        PackedWord((lanes[0] as u16 as u32) | ((lanes[1] as u16 as u32) << 16))
    }

    #[inline(always)]
    pub fn q15_lanes(self) -> [i16; 2] {
        [self.0 as u16 as i16, (self.0 >> 16) as u16 as i16]
    }

    /// Loads four q7 values starting at `src[0]`.
    #[inline(always)]
    pub fn load_q7x4(src: &[i8]) -> Self {
        Self::from_q7_lanes([src[0], src[1], src[2], src[3]])
    }

    /// Loads two q15 values starting at `src[0]`.
    #[inline(always)]
    pub fn load_q15x2(src: &[i16]) -> Self {
        Self::from_q15_lanes([src[0], src[1]])
    }

    #[inline(always)]
    pub fn store_q7x4(self, dst: &mut [i8]) {
        dst[..4].copy_from_slice(&self.q7_lanes());
    }

    #[inline(always)]
    pub fn store_q15x2(self, dst: &mut [i16]) {
        dst[..2].copy_from_slice(&self.q15_lanes());
    }

    #[inline(always)]
    pub const fn rotate_right(self, n: u32) -> Self {
        PackedWord(self.0.rotate_right(n))
    }
}

impl fmt::Debug for PackedWord {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "PackedWord({:#010x})", self.0)
    }
}

impl From<u32> for PackedWord {
    fn from(bits: u32) -> Self {
        PackedWord(bits)
    }
}

/// `SXTB16`: sign-extends 8-bit lanes 0 and 2 into 16-bit lanes 0 and 1.
#[inline(always)]
pub fn sxtb16(w: PackedWord) -> PackedWord {
    let lo = (w.0 as u8 as i8) as i16;
    let hi = ((w.0 >> 16) as u8 as i8) as i16;
    PackedWord::from_q15_lanes([lo, hi])
}

/// `SXTB16` with `ROR #8`: sign-extends 8-bit lanes 1 and 3.
#[inline(always)]
pub fn sxtb16_ror8(w: PackedWord) -> PackedWord {
    sxtb16(w.rotate_right(8))
}

/// `SMLAD`: dual signed 16x16 multiply with 32-bit accumulate.
///
/// Accumulation wraps like the instruction does; callers size their
/// accumulators so that valid networks never wrap.
#[inline(always)]
pub fn smlad(x: PackedWord, y: PackedWord, acc: i32) -> i32 {
    let [x0, x1] = x.q15_lanes();
    let [y0, y1] = y.q15_lanes();
    let p0 = x0 as i32 * y0 as i32;
    let p1 = x1 as i32 * y1 as i32;
    acc.wrapping_add(p0).wrapping_add(p1)
}

/// `QSUB8`: per-lane saturating signed byte subtraction.
#[inline(always)]
pub fn qsub8(x: PackedWord, y: PackedWord) -> PackedWord {
    let a = x.q7_lanes();
    let b = y.q7_lanes();
    PackedWord::from_q7_lanes([
        a[0].saturating_sub(b[0]),
        a[1].saturating_sub(b[1]),
        a[2].saturating_sub(b[2]),
        a[3].saturating_sub(b[3]),
    ])
}

/// `PKHBT`: bottom half of `x`, top half from `y << shift`.
#[inline(always)]
pub fn pkhbt(x: PackedWord, y: PackedWord, shift: u32) -> PackedWord {
    PackedWord((x.0 & 0x0000_FFFF) | ((y.0 << shift) & 0xFFFF_0000))
}

/// `PKHTB`: top half of `x`, bottom half from `y >> shift` (arithmetic).
#[inline(always)]
pub fn pkhtb(x: PackedWord, y: PackedWord, shift: u32) -> PackedWord {
    PackedWord((x.0 & 0xFFFF_0000) | (((y.0 as i32) >> shift) as u32 & 0x0000_FFFF))
}

#[inline(always)]
pub fn ssat_q7(v: i32) -> i8 {
    v.clamp(i8::MIN as i32, i8::MAX as i32) as i8
}

#[inline(always)]
pub fn ssat_q15(v: i32) -> i16 {
    v.clamp(i16::MIN as i32, i16::MAX as i32) as i16
}
