use alloc::format;

use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

/// Mean softmax cross-entropy over the batch and its gradient with respect
/// to the logits, `(softmax − onehot) / batch`.
pub fn softmax_ce<T: Scalar>(logits: &Tensor<T>, targets: &[usize]) -> Result<(T, Tensor<T>)> {
    let (batch, k) = logits.shape2()?;
    if targets.len() != batch {
        return Err(Error::Data(format!("{} targets for a batch of {batch}", targets.len())));
    }
    if let Some(&bad) = targets.iter().find(|&&t| t >= k) {
        return Err(Error::Data(format!("target {bad} out of range for {k} classes")));
    }
    let inv_batch = T::ONE / T::from_usize(batch);
    let mut grad = Tensor::zeros(&[batch, k]);
    let mut total = T::ZERO;
    for ((row, g), &target) in logits
        .data()
        .chunks_exact(k)
        .zip(grad.data_mut().chunks_exact_mut(k))
        .zip(targets)
    {
        let max = row.iter().copied().fold(row[0], T::max);
        let mut denom = T::ZERO;
        for (gv, &z) in g.iter_mut().zip(row) {
            *gv = (z - max).exp();
            denom += *gv;
        }
        total += denom.ln() - (row[target] - max);
        for gv in g.iter_mut() {
            *gv = *gv / denom * inv_batch;
        }
        g[target] -= inv_batch;
    }
    Ok((total * inv_batch, grad))
}

/// Number of rows whose arg-max (first on ties) equals the target.
pub fn correct_count<T: Scalar>(logits: &Tensor<T>, targets: &[usize]) -> usize {
    let k = logits.dims()[logits.ndim() - 1];
    logits
        .data()
        .chunks_exact(k)
        .zip(targets)
        .filter(|(row, &t)| {
            let mut best = 0;
            for (i, &v) in row.iter().enumerate() {
                if v > row[best] {
                    best = i;
                }
            }
            best == t
        })
        .count()
}
