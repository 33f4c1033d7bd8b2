//! Table-based sigmoid and tanh.
//!
//! Inputs are mapped onto a 16-bit position `u` covering `[-R, R)` with
//! `R = 2^range_pow` (so `u = x * 2^(15 - range_pow)`, clamped). The top bits
//! of the biased position select a table entry; the remaining low bits
//! optionally interpolate linearly towards the next entry.
//!
//! A unified table samples `[-R, R)` uniformly. A two-region table splits
//! its entries into a fine table over `[-R/4, R/4)` and a coarse table over
//! the whole range; the region is picked from the top three bits of `u`.
//! Entries are q0.7 or q0.15.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::quant::{quantize_real, Width};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LutFunc {
    Sigmoid,
    Tanh,
}

impl LutFunc {
    pub fn eval(self, x: f64) -> f64 {
        match self {
            LutFunc::Sigmoid => 1.0 / (1.0 + (-x).exp()),
            LutFunc::Tanh => x.tanh(),
        }
    }

    pub const fn id(self) -> u8 {
        match self {
            LutFunc::Sigmoid => 0,
            LutFunc::Tanh => 1,
        }
    }

    pub fn from_id(id: u8) -> Result<Self> {
        match id {
            0 => Ok(LutFunc::Sigmoid),
            1 => Ok(LutFunc::Tanh),
            _ => Err(Error::Format(format!("unknown table function id {id}"))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LutMode {
    Unified,
    TwoRegion,
}

impl LutMode {
    pub const fn id(self) -> u8 {
        match self {
            LutMode::Unified => 0,
            LutMode::TwoRegion => 1,
        }
    }

    pub fn from_id(id: u8) -> Result<Self> {
        match id {
            0 => Ok(LutMode::Unified),
            1 => Ok(LutMode::TwoRegion),
            _ => Err(Error::Format(format!("unknown table mode id {id}"))),
        }
    }
}

/// Positions below this magnitude use the fine table (`R/4` on the 16-bit grid).
const FINE_LIMIT: i32 = 1 << 13;

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct LutTable {
    func: LutFunc,
    mode: LutMode,
    range_pow: u32,
    entry_width: Width,
    /// Whole-range table (unified mode, or the coarse half of two-region).
    coarse: Vec<i16>,
    /// Inner-region table; empty in unified mode.
    fine: Vec<i16>,
}

/// One sampled region: `len` entries starting at `-half_range`.
struct Region {
    half_range: f64,
    len: usize,
}

fn sample(func: LutFunc, region: Region, width: Width) -> Result<Vec<i16>> {
    let step = 2.0 * region.half_range / region.len as f64;
    (0..region.len)
        .map(|i| {
            let x = -region.half_range + i as f64 * step;
            Ok(quantize_real(func.eval(x), width.bits() - 1, width)?.value() as i16)
        })
        .collect()
}

/// Builds a table with `entries` values in total.
pub fn build_lut(func: LutFunc, mode: LutMode, range_pow: u32, entries: usize, entry_width: Width) -> Result<LutTable> {
    if !(2..=3).contains(&range_pow) {
        return Err(Error::param(format!("range_pow must be 2 or 3 (range +-4 or +-8), got {range_pow}")));
    }
    let (min, max) = match mode {
        LutMode::Unified => (2, 1 << 16),
        LutMode::TwoRegion => (4, 1 << 17),
    };
    if !entries.is_power_of_two() || entries < min || entries > max {
        return Err(Error::param(format!(
            "entries must be a power of two in [{min}, {max}] for {mode:?} tables, got {entries}"
        )));
    }
    let range = (range_pow as f64).exp2();
    let (coarse, fine) = match mode {
        LutMode::Unified => (sample(func, Region { half_range: range, len: entries }, entry_width)?, Vec::new()),
        LutMode::TwoRegion => (
            sample(func, Region { half_range: range, len: entries / 2 }, entry_width)?,
            sample(func, Region { half_range: range / 4.0, len: entries / 2 }, entry_width)?,
        ),
    };
    Ok(LutTable { func, mode, range_pow, entry_width, coarse, fine })
}

impl LutTable {
    pub fn func(&self) -> LutFunc {
        self.func
    }

    pub fn mode(&self) -> LutMode {
        self.mode
    }

    pub fn range_pow(&self) -> u32 {
        self.range_pow
    }

    pub fn entry_width(&self) -> Width {
        self.entry_width
    }

    pub fn entries(&self) -> usize {
        self.coarse.len() + self.fine.len()
    }

    pub fn coarse(&self) -> &[i16] {
        &self.coarse
    }

    pub fn fine(&self) -> &[i16] {
        &self.fine
    }

    /// Fractional bits an input must carry to span exactly `[-R, R)` in
    /// `width` storage.
    pub fn native_input_frac(&self, width: Width) -> i32 {
        width.bits() as i32 - 1 - self.range_pow as i32
    }

    /// Maps an input value with `in_frac` fractional bits onto the 16-bit
    /// table position.
    #[inline]
    fn position(&self, v: i32, in_frac: i32) -> i32 {
        let shift = 15 - self.range_pow as i32 - in_frac;
        let u = if shift >= 0 { (v as i64) << shift } else { (v as i64) >> (-shift) };
        u.clamp(i16::MIN as i64, i16::MAX as i64) as i32
    }

    /// Table output for position `u`, scaled to `out_width` (which must not
    /// exceed the entry width).
    #[inline]
    fn lookup(&self, u: i32, interpolate: bool, out_width: Width) -> i32 {
        let (table, pos) = if self.mode == LutMode::TwoRegion && (-FINE_LIMIT..FINE_LIMIT).contains(&u) {
            (&self.fine, ((u + FINE_LIMIT) << 2) as u32)
        } else {
            (&self.coarse, (u + 32768) as u32)
        };
        let index_bits = table.len().trailing_zeros();
        let low_bits = 16 - index_bits;
        let idx = (pos >> low_bits) as usize;
        let a = table[idx] as i64;
        let mut v = a << low_bits;
        if interpolate && low_bits > 0 {
            let b = table[(idx + 1).min(table.len() - 1)] as i64;
            let low = (pos & ((1 << low_bits) - 1)) as i64;
            v += (b - a) * low;
        }
        let shift = low_bits + self.entry_width.bits() - out_width.bits();
        let rounded = if shift == 0 { v } else { (v + (1i64 << (shift - 1))) >> shift };
        out_width.saturate(rounded)
    }

    fn check_input(&self, in_frac: i32, input: Width, output: Width) -> Result<()> {
        if output.bits() > self.entry_width.bits() {
            return Err(Error::param(format!(
                "table/format mismatch: {}-bit entries cannot produce {}-bit outputs",
                self.entry_width.bits(),
                output.bits()
            )));
        }
        if in_frac < 0 || in_frac >= input.bits() as i32 {
            return Err(Error::param(format!(
                "table/format mismatch: input frac_bits {in_frac} invalid for {}-bit data",
                input.bits()
            )));
        }
        Ok(())
    }

    /// Serialises the table: a 16-byte header followed by little-endian entries.
    ///
    /// Header: `b"QLUT"`, func id, mode id, range_pow, entry bits (8/16),
    /// total entries (u32 LE), 4 reserved zero bytes. Two-region tables store
    /// the fine entries before the coarse ones.
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(16 + self.entries() * 2);
        out.extend_from_slice(b"QLUT");
        out.push(self.func.id());
        out.push(self.mode.id());
        out.push(self.range_pow as u8);
        out.push(self.entry_width.bits() as u8);
        out.extend_from_slice(&(self.entries() as u32).to_le_bytes());
        out.extend_from_slice(&[0; 4]);
        for v in self.fine.iter().chain(&self.coarse) {
            match self.entry_width {
                Width::Q7 => out.push(*v as i8 as u8),
                Width::Q15 => out.extend_from_slice(&v.to_le_bytes()),
            }
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        if bytes.len() < 16 || &bytes[..4] != b"QLUT" {
            return Err(Error::Format("missing QLUT table header".into()));
        }
        let func = LutFunc::from_id(bytes[4])?;
        let mode = LutMode::from_id(bytes[5])?;
        let range_pow = bytes[6] as u32;
        let entry_width = Width::from_bits(bytes[7] as u32)?;
        let entries = u32::from_le_bytes(bytes[8..12].try_into().unwrap()) as usize;
        // validates entries/range and gives the expected shape
        let mut table = build_lut(func, mode, range_pow, entries, entry_width)?;
        let per = entry_width.bits() as usize / 8;
        let body = &bytes[16..];
        if body.len() != entries * per {
            return Err(Error::Format(format!("table body has {} bytes, expected {}", body.len(), entries * per)));
        }
        let values: Vec<i16> = match entry_width {
            Width::Q7 => body.iter().map(|b| *b as i8 as i16).collect(),
            Width::Q15 => body.chunks_exact(2).map(|c| i16::from_le_bytes([c[0], c[1]])).collect(),
        };
        let n_fine = table.fine.len();
        table.fine.copy_from_slice(&values[..n_fine]);
        table.coarse.copy_from_slice(&values[n_fine..]);
        Ok(table)
    }
}

/// Applies the table in place to q7 data with `in_frac` fractional bits.
/// Outputs are q0.7.
pub fn activation_lut_apply_q7(data: &mut [i8], in_frac: i32, table: &LutTable, interpolate: bool) -> Result<()> {
    table.check_input(in_frac, Width::Q7, Width::Q7)?;
    for v in data {
        *v = table.lookup(table.position(*v as i32, in_frac), interpolate, Width::Q7) as i8;
    }
    Ok(())
}

/// Applies the table in place to q15 data. Outputs are q0.15, so the table
/// must hold q15 entries.
pub fn activation_lut_apply_q15(data: &mut [i16], in_frac: i32, table: &LutTable, interpolate: bool) -> Result<()> {
    table.check_input(in_frac, Width::Q15, Width::Q15)?;
    for v in data {
        *v = table.lookup(table.position(*v as i32, in_frac), interpolate, Width::Q15) as i16;
    }
    Ok(())
}

/// Evaluates q15 inputs but writes q0.7 outputs.
pub fn activation_lut_q15_to_q7(input: &[i16], in_frac: i32, table: &LutTable, interpolate: bool, out: &mut [i8]) -> Result<()> {
    table.check_input(in_frac, Width::Q15, Width::Q7)?;
    if out.len() != input.len() {
        return Err(Error::shape(format!("output holds {}, input has {}", out.len(), input.len())));
    }
    for (o, v) in out.iter_mut().zip(input) {
        *o = table.lookup(table.position(*v as i32, in_frac), interpolate, Width::Q7) as i8;
    }
    Ok(())
}

/// How the accuracy sweep feeds the table.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SweepInput {
    /// q7 inputs in the table's native format (e.g. q3.4 for +-8).
    Q7,
    /// q15 inputs in the table's native format (e.g. q3.12 for +-8).
    Q15,
}

/// Largest `|table(x) - f(x)|` over `points` evenly spaced reals in
/// `[-R, R]`, with outputs read as q0.7.
///
/// Each real is first quantized to the sweep's input format; the error is
/// measured against the exact function at that quantized input, so it
/// reflects the table and not the input resolution.
pub fn sweep_max_error(table: &LutTable, input: SweepInput, interpolate: bool, points: usize) -> Result<f64> {
    let range = (table.range_pow as f64).exp2();
    let in_width = match input {
        SweepInput::Q7 => Width::Q7,
        SweepInput::Q15 => Width::Q15,
    };
    let frac = table.native_input_frac(in_width);
    let mut worst: f64 = 0.0;
    for i in 0..points {
        let x = -range + 2.0 * range * i as f64 / (points.max(2) - 1) as f64;
        let q = quantize_real(x, frac as u32, in_width)?;
        let out = match input {
            SweepInput::Q7 => {
                let mut d = [q.value() as i8];
                activation_lut_apply_q7(&mut d, frac, table, interpolate)?;
                d[0]
            }
            SweepInput::Q15 => {
                let mut d = [0i8];
                activation_lut_q15_to_q7(&[q.value() as i16], frac, table, interpolate, &mut d)?;
                d[0]
            }
        };
        let err = (out as f64 / 128.0 - table.func.eval(q.dequantize())).abs();
        worst = worst.max(err);
    }
    Ok(worst)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn entry_validation() {
        assert!(build_lut(LutFunc::Sigmoid, LutMode::Unified, 3, 3, Width::Q7).is_err());
        assert!(build_lut(LutFunc::Sigmoid, LutMode::Unified, 3, 0, Width::Q7).is_err());
        assert!(build_lut(LutFunc::Sigmoid, LutMode::TwoRegion, 3, 2, Width::Q7).is_err());
        assert!(build_lut(LutFunc::Sigmoid, LutMode::Unified, 5, 256, Width::Q7).is_err());
        assert!(build_lut(LutFunc::Tanh, LutMode::Unified, 2, 256, Width::Q15).is_ok());
    }

    #[test]
    fn sigmoid_center_and_ends() {
        let t = build_lut(LutFunc::Sigmoid, LutMode::Unified, 3, 256, Width::Q7).unwrap();
        assert_eq!(t.coarse()[128], 64);
        // last sample at 8 - 1/16: sigmoid ~0.99966, saturates in q0.7
        assert_eq!(*t.coarse().last().unwrap(), 127);
        let t = build_lut(LutFunc::Tanh, LutMode::Unified, 3, 256, Width::Q15).unwrap();
        assert_eq!(t.coarse()[128], 0);
        assert_eq!(*t.coarse().last().unwrap(), 32767);
        assert_eq!(t.coarse()[0], -32768);
    }

    #[test]
    fn apply_at_zero_and_beyond_range() {
        let t = build_lut(LutFunc::Sigmoid, LutMode::Unified, 3, 256, Width::Q7).unwrap();
        let mut d = [0i8];
        activation_lut_apply_q7(&mut d, 4, &t, false).unwrap();
        assert_eq!(d, [64]);
        // q5.2: 127 means 31.75, beyond +8
        let mut d = [127i8, -128];
        activation_lut_apply_q7(&mut d, 2, &t, true).unwrap();
        assert_eq!(d[0], *t.coarse().last().unwrap() as i8);
        assert_eq!(d[1], t.coarse()[0] as i8);
    }

    #[test]
    fn format_mismatch() {
        let t = build_lut(LutFunc::Tanh, LutMode::Unified, 3, 256, Width::Q7).unwrap();
        assert!(activation_lut_apply_q15(&mut [0i16; 2], 12, &t, false).is_err());
        assert!(activation_lut_apply_q7(&mut [0i8; 2], 8, &t, false).is_err());
    }

    #[test]
    fn two_region_picks_fine_table_near_zero() {
        let t = build_lut(LutFunc::Tanh, LutMode::TwoRegion, 3, 256, Width::Q15).unwrap();
        assert_eq!(t.fine().len(), 128);
        assert_eq!(t.coarse().len(), 128);
        // x = 1/32 is a fine-table sample (step 4/128) but not a coarse one (step 1/8)
        let mut d = [128i16]; // q3.12
        activation_lut_apply_q15(&mut d, 12, &t, false).unwrap();
        assert_eq!(d[0], t.fine()[65]);
    }

    #[test]
    fn serialisation_roundtrip() {
        for (mode, width) in [(LutMode::Unified, Width::Q7), (LutMode::TwoRegion, Width::Q15)] {
            let t = build_lut(LutFunc::Sigmoid, mode, 2, 64, width).unwrap();
            let bytes = t.to_bytes();
            assert_eq!(&bytes[..4], b"QLUT");
            assert_eq!(bytes.len(), 16 + 64 * width.bits() as usize / 8);
            assert_eq!(LutTable::from_bytes(&bytes).unwrap(), t);
            assert!(LutTable::from_bytes(&bytes[..bytes.len() - 1]).is_err());
        }
    }

    #[test]
    fn sweep_bounds() {
        let t = build_lut(LutFunc::Sigmoid, LutMode::Unified, 3, 256, Width::Q7).unwrap();
        let e = sweep_max_error(&t, SweepInput::Q7, false, 10_001).unwrap();
        assert!(e <= 2.0 / 128.0, "{e}");
    }
}
