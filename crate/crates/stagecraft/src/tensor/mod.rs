//! Dense tensors, scalar-precision abstraction, and the differentiation graph.
//!
//! The numeric core is deliberately small: row-major [`Tensor`]s over a
//! [`Scalar`] type (`f64` by default, `f32` selectable per experiment), and a
//! tape-based reverse-mode differentiation [`Graph`] in [`graph`]. There is no
//! GPU path and no convolution — the built-in models are embedding + GRU +
//! linear heads, which this op set covers.

pub mod graph;
pub mod params;

pub use graph::{Graph, Var};
pub use params::{
    bytes_digest, decode_params, encode_params, layout_digest, manifest_entries, value_digest,
    ParamEntry,
};

use std::fmt;

/// On-disk / on-wire scalar precision identifier.
///
/// Stored in parameter-file manifests and checked on load so that an `f32`
/// run never silently consumes `f64` weights or vice versa.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Dtype {
    F32,
    F64,
}

impl Dtype {
    /// Bytes per scalar in the little-endian encoding.
    pub fn byte_width(self) -> usize {
        match self {
            Dtype::F32 => 4,
            Dtype::F64 => 8,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Dtype::F32 => "f32",
            Dtype::F64 => "f64",
        }
    }
}

impl fmt::Display for Dtype {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Scalar element type for tensors and parameters.
///
/// Everything numeric in the crate is generic over this trait; experiments
/// choose `f64` (default, used by all correctness tests) or `f32` (roughly
/// twice the arithmetic throughput on the desk-scale runs).
///
/// Random draws are always made in `f64` and then converted, so the *sequence*
/// of consumed random numbers — and therefore every sampled action and task
/// layout — is identical across precisions for a fixed seed.
pub trait Scalar:
    num_traits::Float + Default + fmt::Debug + fmt::Display + Send + Sync + 'static
{
    const DTYPE: Dtype;

    fn from_f64(x: f64) -> Self;
    fn to_f64(self) -> f64;

    /// Append the little-endian encoding of `self` to `out`.
    fn write_le(self, out: &mut Vec<u8>);

    /// Decode one scalar from exactly `Self::DTYPE.byte_width()` bytes.
    fn read_le(bytes: &[u8]) -> Self;
}

impl Scalar for f32 {
    const DTYPE: Dtype = Dtype::F32;

    fn from_f64(x: f64) -> Self {
        x as f32
    }
    fn to_f64(self) -> f64 {
        self as f64
    }
    fn write_le(self, out: &mut Vec<u8>) {
        out.extend_from_slice(&self.to_le_bytes());
    }
    fn read_le(bytes: &[u8]) -> Self {
        f32::from_le_bytes(bytes.try_into().expect("f32 scalar needs exactly 4 bytes"))
    }
}

impl Scalar for f64 {
    const DTYPE: Dtype = Dtype::F64;

    fn from_f64(x: f64) -> Self {
        x
    }
    fn to_f64(self) -> f64 {
        self
    }
    fn write_le(self, out: &mut Vec<u8>) {
        out.extend_from_slice(&self.to_le_bytes());
    }
    fn read_le(bytes: &[u8]) -> Self {
        f64::from_le_bytes(bytes.try_into().expect("f64 scalar needs exactly 8 bytes"))
    }
}

/// Dense row-major tensor.
///
/// Plain storage plus shape; all arithmetic that should be differentiated
/// goes through [`Graph`], which records operations on an append-only tape.
/// Zero-extent shapes are permitted and carry empty data.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor<F> {
    shape: Vec<usize>,
    data: Vec<F>,
}

impl<F: Scalar> Tensor<F> {
    /// Build a tensor from a flat row-major buffer.
    ///
    /// Panics if `data.len()` does not equal the product of `shape`.
    pub fn new(shape: &[usize], data: Vec<F>) -> Self {
        let numel: usize = shape.iter().product();
        assert_eq!(
            data.len(),
            numel,
            "tensor: data length {} does not match shape {:?} (expected {})",
            data.len(),
            shape,
            numel
        );
        Tensor { shape: shape.to_vec(), data }
    }

    pub fn zeros(shape: &[usize]) -> Self {
        let numel: usize = shape.iter().product();
        Tensor { shape: shape.to_vec(), data: vec![F::zero(); numel] }
    }

    pub fn full(shape: &[usize], value: F) -> Self {
        let numel: usize = shape.iter().product();
        Tensor { shape: shape.to_vec(), data: vec![value; numel] }
    }

    /// A rank-2 `[1, 1]` tensor holding one value (the shape every loss
    /// reduces to).
    pub fn scalar(value: F) -> Self {
        Tensor { shape: vec![1, 1], data: vec![value] }
    }

    /// A `[n, 1]` column tensor, the shape used for per-row constants such
    /// as advantages and returns.
    pub fn column(values: Vec<F>) -> Self {
        Tensor { shape: vec![values.len(), 1], data: values }
    }

    /// A `[1, n]` row tensor (the shape of biases).
    pub fn row(values: Vec<F>) -> Self {
        Tensor { shape: vec![1, values.len()], data: values }
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn numel(&self) -> usize {
        self.data.len()
    }

    pub fn data(&self) -> &[F] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [F] {
        &mut self.data
    }

    /// The single element of a `[1, 1]` tensor.
    ///
    /// Panics if the tensor holds more than one element.
    pub fn item(&self) -> F {
        assert_eq!(
            self.numel(),
            1,
            "tensor: item() requires exactly one element, got shape {:?}",
            self.shape
        );
        self.data[0]
    }

    /// Interpret as 2-D, returning `(rows, cols)`.
    ///
    /// Panics (naming `op`) if the tensor is not rank 2.
    pub fn dims2(&self, op: &str) -> (usize, usize) {
        assert_eq!(
            self.shape.len(),
            2,
            "{op}: expected a rank-2 tensor, got shape {:?}",
            self.shape
        );
        (self.shape[0], self.shape[1])
    }

    /// Element at `(row, col)` of a rank-2 tensor.
    pub fn at2(&self, row: usize, col: usize) -> F {
        let (r, c) = self.dims2("at2");
        assert!(row < r && col < c, "at2: index ({row},{col}) out of bounds for shape {:?}", self.shape);
        self.data[row * c + col]
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn shape_and_data_must_agree() {
        let t = Tensor::new(&[2, 3], vec![0.0f64; 6]);
        assert_eq!(t.shape(), &[2, 3]);
        assert_eq!(t.numel(), 6);
    }

    #[test]
    #[should_panic(expected = "does not match shape")]
    fn mismatched_length_panics() {
        let _ = Tensor::new(&[2, 3], vec![0.0f64; 5]);
    }

    #[test]
    fn zero_extent_shapes_are_permitted() {
        let t = Tensor::<f64>::zeros(&[0, 4]);
        assert_eq!(t.numel(), 0);
    }

    #[test]
    fn scalar_roundtrips_through_le_bytes() {
        let mut buf = Vec::new();
        1.5f32.write_le(&mut buf);
        (-2.25f32).write_le(&mut buf);
        assert_eq!(buf.len(), 8);
        assert_eq!(f32::read_le(&buf[0..4]), 1.5);
        assert_eq!(f32::read_le(&buf[4..8]), -2.25);

        let mut buf = Vec::new();
        std::f64::consts::PI.write_le(&mut buf);
        assert_eq!(f64::read_le(&buf[0..8]), std::f64::consts::PI);
    }

    #[test]
    fn random_draws_convert_identically_across_precisions() {
        // The f32 path must consume the same f64 stream, merely narrowed.
        let x = 0.123456789f64;
        assert_eq!(f32::from_f64(x), x as f32);
        assert_eq!(f64::from_f64(x), x);
    }
}
