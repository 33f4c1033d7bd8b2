use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::packedops::{ssat_q15, ssat_q7};
use crate::quant::{requantize_q15, requantize_q7, Width};

/// Height, width and channel extents of an HWC tensor.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Shape {
    pub height: usize,
    pub width: usize,
    pub channels: usize,
}

impl Shape {
    pub const fn new(height: usize, width: usize, channels: usize) -> Self {
        Shape { height, width, channels }
    }

    /// A flat vector, stored as `1 x 1 x n`.
    pub const fn vector(n: usize) -> Self {
        Shape::new(1, 1, n)
    }

    pub const fn len(&self) -> usize {
        self.height * self.width * self.channels
    }

    pub const fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub const fn pixels(&self) -> usize {
        self.height * self.width
    }

    /// Offset of `(y, x, c)`: channel stride 1, width stride C, height stride W*C.
    #[inline(always)]
    pub const fn offset(&self, y: usize, x: usize, c: usize) -> usize {
        (y * self.width + x) * self.channels + c
    }
}

impl std::fmt::Display for Shape {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}x{}x{}", self.height, self.width, self.channels)
    }
}

/// Fixed-point element type.
pub trait QElem: Copy + Default + PartialEq + Send + Sync + std::fmt::Debug + 'static {
    const WIDTH: Width;

    fn to_i32(self) -> i32;

    fn saturate(v: i32) -> Self;

    /// Rounded shift plus saturation, see [`crate::quant::requantize`].
    fn requantize(acc: i32, out_right_shift: u32) -> Self;
}

impl QElem for i8 {
    const WIDTH: Width = Width::Q7;

    #[inline(always)]
    fn to_i32(self) -> i32 {
        self as i32
    }

    #[inline(always)]
    fn saturate(v: i32) -> Self {
        ssat_q7(v)
    }

    #[inline(always)]
    fn requantize(acc: i32, out_right_shift: u32) -> Self {
        requantize_q7(acc, out_right_shift)
    }
}

impl QElem for i16 {
    const WIDTH: Width = Width::Q15;

    #[inline(always)]
    fn to_i32(self) -> i32 {
        self as i32
    }

    #[inline(always)]
    fn saturate(v: i32) -> Self {
        ssat_q15(v)
    }

    #[inline(always)]
    fn requantize(acc: i32, out_right_shift: u32) -> Self {
        requantize_q15(acc, out_right_shift)
    }
}

/// HWC buffer of q7 or q15 values sharing one power-of-two scale.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct QTensor<T: QElem = i8> {
    shape: Shape,
    frac_bits: i32,
    data: Vec<T>,
}

impl<T: QElem> QTensor<T> {
    pub fn new(shape: Shape, frac_bits: i32, data: Vec<T>) -> Result<Self> {
        if data.len() != shape.len() {
            return Err(Error::shape(format!(
                "tensor {shape} needs {} elements, got {}",
                shape.len(),
                data.len()
            )));
        }
        Ok(QTensor { shape, frac_bits, data })
    }

    pub fn zeros(shape: Shape, frac_bits: i32) -> Self {
        QTensor { shape, frac_bits, data: vec![T::default(); shape.len()] }
    }

    pub fn shape(&self) -> Shape {
        self.shape
    }

    pub fn frac_bits(&self) -> i32 {
        self.frac_bits
    }

    pub fn set_frac_bits(&mut self, frac_bits: i32) {
        self.frac_bits = frac_bits;
    }

    pub fn with_frac_bits(mut self, frac_bits: i32) -> Self {
        self.frac_bits = frac_bits;
        self
    }

    pub fn data(&self) -> &[T] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [T] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<T> {
        self.data
    }

    #[inline]
    pub fn get(&self, y: usize, x: usize, c: usize) -> T {
        self.data[self.shape.offset(y, x, c)]
    }

    /// Reinterprets the buffer under a new shape with the same element count.
    pub fn reshape(mut self, shape: Shape) -> Result<Self> {
        if shape.len() != self.data.len() {
            return Err(Error::shape(format!("cannot reshape {} into {shape}", self.shape)));
        }
        self.shape = shape;
        Ok(self)
    }

    /// Shrinks the tensor to `shape`, keeping the leading elements. Used after
    /// in-situ kernels that compact their output to the front of the buffer.
    pub(crate) fn truncate_to(&mut self, shape: Shape) {
        debug_assert!(shape.len() <= self.data.len());
        self.data.truncate(shape.len());
        self.shape = shape;
    }

    pub fn dequantize(&self) -> Vec<f64> {
        let scale = (-(self.frac_bits as f64)).exp2();
        self.data.iter().map(|v| v.to_i32() as f64 * scale).collect()
    }
}
