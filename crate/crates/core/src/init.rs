//! Weight initializers.

use crate::error::{Error, Result};
use crate::rng::RngStream;
use crate::scalar::Scalar;
use crate::tensor::Tensor;

/// I.i.d. `N(0, 2/fan_in)` samples (He/Kaiming normal).
pub fn kaiming_normal<T: Scalar>(dims: &[usize], fan_in: usize, rng: &mut RngStream) -> Result<Tensor<T>> {
    if fan_in == 0 {
        return Err(Error::InvalidArgument("kaiming_normal: fan_in must be >= 1".into()));
    }
    let mut t = Tensor::zeros_checked(dims)?;
    let std = libm::sqrt(2.0 / fan_in as f64);
    rng.fill_normal(t.data_mut(), 0.0, std);
    Ok(t)
}

/// I.i.d. uniform samples on `±sqrt(6 / (fan_in + fan_out))` (Glorot/Xavier uniform).
pub fn xavier_uniform<T: Scalar>(
    dims: &[usize],
    fan_in: usize,
    fan_out: usize,
    rng: &mut RngStream,
) -> Result<Tensor<T>> {
    if fan_in == 0 || fan_out == 0 {
        return Err(Error::InvalidArgument("xavier_uniform: fans must be >= 1".into()));
    }
    let mut t = Tensor::zeros_checked(dims)?;
    let bound = libm::sqrt(6.0 / (fan_in + fan_out) as f64);
    for v in t.data_mut() {
        *v = T::from_f64(rng.uniform(-bound, bound));
    }
    Ok(t)
}

impl<T: Scalar> Tensor<T> {
    pub(crate) fn zeros_checked(dims: &[usize]) -> Result<Self> {
        Tensor::full(dims, T::ZERO)
    }
}

/// Mean and (population) standard deviation, accumulated in f64.
#[cfg(test)]
fn moments<T: Scalar>(xs: &[T]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().map(|v| v.to_f64()).sum::<f64>() / n;
    let var = xs.iter().map(|v| (v.to_f64() - mean).powi(2)).sum::<f64>() / n;
    (mean, var.sqrt())
}
