//! Dense row-major tensors and the reverse-mode autodiff graph built on them.

mod graph;
mod ops;

use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::scalar::{DType, Scalar};

pub use graph::{BackwardFn, Gradients, Graph, Var};
pub use ops::{Elementwise, Reduce};

/// Immutable n-dimensional array. Cloning shares the buffer.
#[derive(Clone, PartialEq)]
pub struct Tensor<T: Scalar> {
    dims: Vec<usize>,
    data: Arc<Vec<T>>,
}

impl<T: Scalar> std::fmt::Debug for Tensor<T> {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let mut s = f.debug_struct("Tensor");
        s.field("dtype", &T::DTYPE).field("dims", &self.dims);
        if self.data.len() <= 16 {
            s.field("data", &self.data);
        }
        s.finish()
    }
}

/// Checked element count of a shape. The empty shape holds one element.
pub fn numel(dims: &[usize]) -> Result<usize> {
    dims.iter()
        .try_fold(1usize, |acc, &d| acc.checked_mul(d))
        .ok_or_else(|| Error::SizeOverflow(dims.to_vec()))
}

/// Row-major strides for `dims`.
pub(crate) fn strides(dims: &[usize]) -> Vec<usize> {
    let mut s = vec![1; dims.len()];
    for i in (0..dims.len().saturating_sub(1)).rev() {
        s[i] = s[i + 1] * dims[i + 1];
    }
    s
}

impl<T: Scalar> Tensor<T> {
    pub fn from_vec(dims: &[usize], data: Vec<T>) -> Result<Self> {
        let n = numel(dims)?;
        if n != data.len() {
            return Err(Error::ElementCount {
                dims: dims.to_vec(),
                len: data.len(),
            });
        }
        Ok(Self {
            dims: dims.to_vec(),
            data: Arc::new(data),
        })
    }

    pub fn full(dims: &[usize], value: T) -> Result<Self> {
        let n = numel(dims)?;
        Self::from_vec(dims, vec![value; n])
    }

    pub fn zeros(dims: &[usize]) -> Result<Self> {
        Self::full(dims, T::zero())
    }

    pub fn ones(dims: &[usize]) -> Result<Self> {
        Self::full(dims, T::one())
    }

    pub fn scalar(value: T) -> Self {
        Self {
            dims: Vec::new(),
            data: Arc::new(vec![value]),
        }
    }

    /// Uniform samples in `[low, high)`, bit-reproducible for a given seed.
    pub fn uniform(dims: &[usize], low: f64, high: f64, seed: u64) -> Result<Self> {
        let n = numel(dims)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let data = (0..n)
            .map(|_| T::from_f64_lossy(low + (high - low) * rng.gen::<f64>()))
            .collect();
        Self::from_vec(dims, data)
    }

    /// Normal samples via Box-Muller, bit-reproducible for a given seed.
    pub fn normal(dims: &[usize], mean: f64, std: f64, seed: u64) -> Result<Self> {
        let n = numel(dims)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut data = Vec::with_capacity(n);
        while data.len() < n {
            let u1: f64 = 1.0 - rng.gen::<f64>();
            let u2: f64 = rng.gen();
            let r = (-2.0 * u1.ln()).sqrt();
            let theta = 2.0 * std::f64::consts::PI * u2;
            data.push(T::from_f64_lossy(mean + std * r * theta.cos()));
            if data.len() < n {
                data.push(T::from_f64_lossy(mean + std * r * theta.sin()));
            }
        }
        Self::from_vec(dims, data)
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn rank(&self) -> usize {
        self.dims.len()
    }

    pub fn dtype(&self) -> DType {
        T::DTYPE
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn data(&self) -> &[T] {
        &self.data
    }

    /// Mutable access; copies the buffer first if it is shared.
    pub fn data_mut(&mut self) -> &mut [T] {
        Arc::make_mut(&mut self.data).as_mut_slice()
    }

    pub fn into_vec(self) -> Vec<T> {
        Arc::try_unwrap(self.data).unwrap_or_else(|arc| (*arc).clone())
    }

    /// Value of a rank-0 (or single element) tensor.
    pub fn item(&self) -> T {
        self.data[0]
    }

    pub fn at(&self, index: &[usize]) -> T {
        debug_assert_eq!(index.len(), self.dims.len());
        let flat = index
            .iter()
            .zip(strides(&self.dims))
            .map(|(i, s)| i * s)
            .sum::<usize>();
        self.data[flat]
    }

    pub fn reshaped(&self, dims: &[usize]) -> Result<Self> {
        let n = numel(dims)?;
        if n != self.len() {
            return Err(Error::ShapeMismatch {
                op: "reshape",
                lhs: self.dims.clone(),
                rhs: dims.to_vec(),
            });
        }
        Ok(Self {
            dims: dims.to_vec(),
            data: Arc::clone(&self.data),
        })
    }

    pub fn map(&self, f: impl Fn(T) -> T) -> Self {
        Self {
            dims: self.dims.clone(),
            data: Arc::new(self.data.iter().map(|&v| f(v)).collect()),
        }
    }

    /// Converts to another scalar type, rounding when narrowing.
    pub fn cast<U: Scalar>(&self) -> Tensor<U> {
        Tensor {
            dims: self.dims.clone(),
            data: Arc::new(self.data.iter().map(|v| U::from_f64_lossy(v.as_f64())).collect()),
        }
    }

    pub fn max_abs_diff(&self, other: &Self) -> f64 {
        assert_eq!(self.dims, other.dims);
        self.data
            .iter()
            .zip(other.data.iter())
            .map(|(a, b)| (a.as_f64() - b.as_f64()).abs())
            .fold(0.0, f64::max)
    }

    pub fn all_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub(crate) fn from_parts(dims: Vec<usize>, data: Vec<T>) -> Self {
        debug_assert_eq!(numel(&dims).ok(), Some(data.len()));
        Self {
            dims,
            data: Arc::new(data),
        }
    }
}
