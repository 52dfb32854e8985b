//! Dense row-major tensors.

use alloc::vec;
use alloc::vec::Vec;

use crate::error::{shape_err, Error, Result};
use crate::linalg;
use crate::scalar::{DType, Scalar};

/// A dense, row-major, contiguous array.
///
/// `dims` is never empty, every extent is at least 1, and `data.len()` is
/// always the product of `dims`.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor<T> {
    dims: Vec<usize>,
    data: Vec<T>,
}

fn check_dims(dims: &[usize]) -> Result<usize> {
    if dims.is_empty() {
        return Err(Error::InvalidArgument("tensor needs at least one dimension".into()));
    }
    if dims.contains(&0) {
        return Err(Error::InvalidArgument(alloc::format!(
            "tensor extents must be positive, got {dims:?}"
        )));
    }
    Ok(dims.iter().product())
}

impl<T: Scalar> Tensor<T> {
    pub fn from_vec(dims: &[usize], data: Vec<T>) -> Result<Self> {
        let n = check_dims(dims)?;
        if n != data.len() {
            return Err(shape_err("from_vec", dims, &[data.len()]));
        }
        Ok(Tensor {
            dims: dims.to_vec(),
            data,
        })
    }

    pub fn full(dims: &[usize], value: T) -> Result<Self> {
        let n = check_dims(dims)?;
        Ok(Tensor {
            dims: dims.to_vec(),
            data: vec![value; n],
        })
    }

    /// # Panics
    /// If `dims` is empty or contains a zero extent.
    pub fn zeros(dims: &[usize]) -> Self {
        Self::full(dims, T::ZERO).expect("invalid tensor dims")
    }

    pub fn zeros_like(other: &Self) -> Self {
        Tensor {
            dims: other.dims.clone(),
            data: vec![T::ZERO; other.data.len()],
        }
    }

    pub fn from_rows(rows: &[&[T]]) -> Result<Self> {
        let cols = rows.first().map_or(0, |r| r.len());
        if rows.iter().any(|r| r.len() != cols) {
            return Err(Error::InvalidArgument("ragged rows".into()));
        }
        let data = rows.iter().flat_map(|r| r.iter().copied()).collect();
        Self::from_vec(&[rows.len(), cols], data)
    }

    pub fn identity(n: usize) -> Self {
        let mut t = Self::zeros(&[n, n]);
        for i in 0..n {
            t.data[i * n + i] = T::ONE;
        }
        t
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn ndim(&self) -> usize {
        self.dims.len()
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn dtype(&self) -> DType {
        T::DTYPE
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

    pub fn reshape(mut self, dims: &[usize]) -> Result<Self> {
        let n = check_dims(dims)?;
        if n != self.data.len() {
            return Err(shape_err("reshape", &self.dims, dims));
        }
        self.dims = dims.to_vec();
        Ok(self)
    }

    /// Rows and columns of a 2-D tensor.
    pub fn shape2(&self) -> Result<(usize, usize)> {
        match self.dims[..] {
            [r, c] => Ok((r, c)),
            _ => Err(Error::InvalidArgument(alloc::format!(
                "expected a 2-D tensor, got dims {:?}",
                self.dims
            ))),
        }
    }

    /// Matrix product with a fixed `i, k, j` loop order, so every output entry
    /// is accumulated in ascending `k`.
    pub fn matmul(&self, other: &Self) -> Result<Self> {
        let (m, k) = self.shape2()?;
        let (k2, n) = other.shape2()?;
        if k != k2 {
            return Err(shape_err("matmul", &self.dims, &other.dims));
        }
        let mut out = Self::zeros(&[m, n]);
        linalg::gemm_nn(m, k, n, &self.data, &other.data, &mut out.data);
        Ok(out)
    }

    pub fn transpose(&self) -> Result<Self> {
        let (r, c) = self.shape2()?;
        let mut out = Self::zeros(&[c, r]);
        for i in 0..r {
            for j in 0..c {
                out.data[j * r + i] = self.data[i * c + j];
            }
        }
        Ok(out)
    }

    /// Column means of a 2-D tensor.
    pub fn reduce_mean_axis0(&self) -> Result<Self> {
        let (rows, cols) = self.shape2()?;
        let mut sums = vec![T::ZERO; cols];
        for row in self.data.chunks_exact(cols) {
            for (s, &v) in sums.iter_mut().zip(row) {
                *s += v;
            }
        }
        let m = T::from_usize(rows);
        for s in &mut sums {
            *s /= m;
        }
        Self::from_vec(&[cols], sums)
    }

    pub fn map(&self, f: impl Fn(T) -> T) -> Self {
        Tensor {
            dims: self.dims.clone(),
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn zip_with(&self, other: &Self, op: &'static str, f: impl Fn(T, T) -> T) -> Result<Self> {
        if self.dims != other.dims {
            return Err(shape_err(op, &self.dims, &other.dims));
        }
        Ok(Tensor {
            dims: self.dims.clone(),
            data: self.data.iter().zip(&other.data).map(|(&a, &b)| f(a, b)).collect(),
        })
    }

    pub fn add(&self, other: &Self) -> Result<Self> {
        self.zip_with(other, "add", |a, b| a + b)
    }

    pub fn sub(&self, other: &Self) -> Result<Self> {
        self.zip_with(other, "sub", |a, b| a - b)
    }

    pub fn scale(&self, s: T) -> Self {
        self.map(|v| v * s)
    }

    pub fn sum(&self) -> T {
        linalg::sum(&self.data)
    }

    pub fn l2_norm(&self) -> T {
        linalg::norm2(&self.data)
    }

    pub fn max_abs(&self) -> T {
        linalg::max_abs(&self.data)
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    /// Element-wise conversion to another scalar type.
    pub fn cast<U: Scalar>(&self) -> Tensor<U> {
        Tensor {
            dims: self.dims.clone(),
            data: self.data.iter().map(|v| U::from_f64(v.to_f64())).collect(),
        }
    }
}
