//! Split x-y pooling, computed in situ.
//!
//! Pooling runs first along the width (each element is a pixel's channel
//! array) and then along the height (each element is an x-pooled row), so
//! partial results along x are reused by every y window. Results overwrite
//! the input buffer and the final `H_out x W_out x C` tensor ends up at its
//! front; the input is destroyed.
//!
//! An output element is written back only once no pending window still needs
//! the input elements it overlaps. For the usual `stride >= 2` geometries this
//! happens immediately and the only extra storage is one element; the worst
//! case (stride 1 with padding) keeps `pad + 1` elements pending.
//!
//! Max pooling ignores padded positions. Average pooling divides by the full
//! window area `K*K` including padded positions and rounds half away from
//! zero; its x-sums are kept in a ring of `K` widened rows so the division
//! happens once.

use super::output_dim;
use super::tensor::{QTensor, Shape};
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct PoolGeometry {
    pub kernel: usize,
    pub stride: usize,
    pub pad: usize,
}

impl PoolGeometry {
    pub const fn new(kernel: usize, stride: usize, pad: usize) -> Self {
        PoolGeometry { kernel, stride, pad }
    }

    /// Output shape, rejecting windows that cannot be pooled in situ.
    pub fn output_shape(&self, input: Shape) -> Result<Shape> {
        if self.pad >= self.kernel {
            return Err(Error::param(format!(
                "pad {} must be smaller than the window {}",
                self.pad, self.kernel
            )));
        }
        let out = Shape::new(
            output_dim(input.height, self.kernel, self.stride, self.pad)?,
            output_dim(input.width, self.kernel, self.stride, self.pad)?,
            input.channels,
        );
        if out.height > input.height || out.width > input.width {
            return Err(Error::param(format!("pooled output {out} does not fit in input {input}")));
        }
        Ok(out)
    }
}

/// One 1-D in-situ pass over `n_in` blocks of `block` bytes.
struct Pass {
    n_in: usize,
    n_out: usize,
    read_stride: usize,
    write_stride: usize,
    block: usize,
    geom: PoolGeometry,
}

impl Pass {
    fn window(&self, o: usize) -> (usize, usize) {
        let start = (o * self.geom.stride) as isize - self.geom.pad as isize;
        let lo = start.max(0) as usize;
        let hi = ((start + self.geom.kernel as isize) as usize).min(self.n_in);
        (lo, hi)
    }

    /// First input index still needed once outputs `0..=o` are computed.
    fn next_live(&self, o: usize) -> usize {
        if o + 1 < self.n_out {
            self.window(o + 1).0
        } else {
            self.n_in
        }
    }

    /// Last input index whose block overlaps output block `j`.
    fn last_overlap(&self, j: usize) -> usize {
        (j * self.write_stride + self.block - 1) / self.read_stride
    }

    /// Most outputs that are ever computed but not yet written back.
    fn max_pending(&self) -> usize {
        let mut committed = 0;
        let mut worst = 1;
        for o in 0..self.n_out {
            worst = worst.max(o + 1 - committed);
            let live = self.next_live(o);
            while committed <= o && self.last_overlap(committed) < live {
                committed += 1;
            }
        }
        worst
    }

    fn run_max(&self, buf: &mut [i8], base: usize, ring: &mut [i8]) {
        let cap = ring.len() / self.block;
        let mut committed = 0;
        for o in 0..self.n_out {
            let slot = (o % cap) * self.block;
            let acc = &mut ring[slot..slot + self.block];
            let (lo, hi) = self.window(o);
            let first = base + lo * self.read_stride;
            acc.copy_from_slice(&buf[first..first + self.block]);
            for i in lo + 1..hi {
                let src = &buf[base + i * self.read_stride..base + i * self.read_stride + self.block];
                for (a, v) in acc.iter_mut().zip(src) {
                    *a = (*a).max(*v);
                }
            }
            let live = self.next_live(o);
            while committed <= o && self.last_overlap(committed) < live {
                let slot = (committed % cap) * self.block;
                let dst = base + committed * self.write_stride;
                buf[dst..dst + self.block].copy_from_slice(&ring[slot..slot + self.block]);
                committed += 1;
            }
        }
        debug_assert_eq!(committed, self.n_out);
    }
}

fn check_buffer(len: usize, shape: Shape) -> Result<()> {
    if len < shape.len() {
        return Err(Error::shape(format!("buffer holds {len} values, shape {shape} needs {}", shape.len())));
    }
    Ok(())
}

/// Extra bytes the in-situ max pooling keeps for not-yet-written outputs.
pub fn maxpool_scratch_bytes(input: Shape, geom: PoolGeometry) -> Result<usize> {
    let out = geom.output_shape(input)?;
    let (x, y) = passes(input, out, geom);
    Ok((x.max_pending() * x.block).max(y.max_pending() * y.block))
}

/// Bytes of widened x-sum rows used by average pooling.
pub fn avgpool_scratch_bytes(input: Shape, geom: PoolGeometry) -> Result<usize> {
    let out = geom.output_shape(input)?;
    Ok(geom.kernel * out.width * out.channels * std::mem::size_of::<i16>())
}

fn passes(input: Shape, out: Shape, geom: PoolGeometry) -> (Pass, Pass) {
    let c = input.channels;
    let x = Pass { n_in: input.width, n_out: out.width, read_stride: c, write_stride: c, block: c, geom };
    let y = Pass {
        n_in: input.height,
        n_out: out.height,
        read_stride: input.width * c,
        write_stride: out.width * c,
        block: out.width * c,
        geom,
    };
    (x, y)
}

/// Max pooling over the leading `shape.len()` bytes of `buf`. Returns the
/// output shape; the result occupies `buf[..out.len()]`.
pub fn maxpool_insitu_slice(buf: &mut [i8], shape: Shape, geom: PoolGeometry) -> Result<Shape> {
    let out = geom.output_shape(shape)?;
    check_buffer(buf.len(), shape)?;
    if shape.channels == 0 {
        return Ok(out);
    }
    let (x, y) = passes(shape, out, geom);
    let mut ring = vec![0i8; (x.max_pending() * x.block).max(y.max_pending() * y.block)];
    let row = shape.width * shape.channels;
    for r in 0..shape.height {
        let ring_len = x.max_pending() * x.block;
        x.run_max(buf, r * row, &mut ring[..ring_len]);
    }
    let ring_len = y.max_pending() * y.block;
    y.run_max(buf, 0, &mut ring[..ring_len]);
    Ok(out)
}

/// Average pooling over the leading `shape.len()` bytes of `buf`.
pub fn avgpool_insitu_slice(buf: &mut [i8], shape: Shape, geom: PoolGeometry) -> Result<Shape> {
    let out = geom.output_shape(shape)?;
    check_buffer(buf.len(), shape)?;
    if geom.kernel > 256 {
        return Err(Error::param("average pooling windows are limited to 256 so x-sums fit q15"));
    }
    let c = shape.channels;
    if c == 0 {
        return Ok(out);
    }
    let k = geom.kernel;
    let (xp, yp) = passes(shape, out, geom);
    let out_row = out.width * c;
    let in_row = shape.width * c;
    let divisor = (k * k) as i32;
    let mut sums = vec![0i16; k * out_row];
    let mut next_row = 0;
    for oy in 0..out.height {
        let (lo, hi) = yp.window(oy);
        next_row = next_row.max(lo);
        while next_row < hi {
            let slot = (next_row % k) * out_row;
            let src = &buf[next_row * in_row..(next_row + 1) * in_row];
            let dst = &mut sums[slot..slot + out_row];
            for ox in 0..out.width {
                let (xl, xh) = xp.window(ox);
                let acc = &mut dst[ox * c..(ox + 1) * c];
                acc.fill(0);
                for ix in xl..xh {
                    for (a, v) in acc.iter_mut().zip(&src[ix * c..(ix + 1) * c]) {
                        *a += *v as i16;
                    }
                }
            }
            next_row += 1;
        }
        // every input row overlapping this output row has been summed
        let dst = &mut buf[oy * out_row..(oy + 1) * out_row];
        for (i, d) in dst.iter_mut().enumerate() {
            let total: i32 = (lo..hi).map(|r| sums[(r % k) * out_row + i] as i32).sum();
            *d = div_round(total, divisor) as i8;
        }
    }
    Ok(out)
}

/// Integer division rounding half away from zero.
#[inline]
pub(crate) fn div_round(v: i32, d: i32) -> i32 {
    if v >= 0 {
        (v + d / 2) / d
    } else {
        -((-v + d / 2) / d)
    }
}

pub fn maxpool_insitu(t: &mut QTensor<i8>, geom: PoolGeometry) -> Result<()> {
    let shape = t.shape();
    let out = maxpool_insitu_slice(t.data_mut(), shape, geom)?;
    t.truncate_to(out);
    Ok(())
}

pub fn avgpool_insitu(t: &mut QTensor<i8>, geom: PoolGeometry) -> Result<()> {
    let shape = t.shape();
    let out = avgpool_insitu_slice(t.data_mut(), shape, geom)?;
    t.truncate_to(out);
    Ok(())
}
