use alloc::format;

use crate::error::{shape_err, Error, Result};
use crate::gc::Unfolding;
use crate::linalg;
use crate::nn::ParamTensor;
use crate::scalar::Scalar;
use crate::tensor::Tensor;

/// `y = x·W + b` for `x: batch×C_in`, `W: C_in×C_out`, `b: C_out`.
pub fn dense_forward<T: Scalar>(x: &Tensor<T>, w: &Tensor<T>, b: &Tensor<T>) -> Result<Tensor<T>> {
    let (batch, c_in) = x.shape2()?;
    let (w_in, c_out) = w.shape2()?;
    if c_in != w_in {
        return Err(shape_err("dense_forward", x.dims(), w.dims()));
    }
    if b.dims() != [c_out] {
        return Err(shape_err("dense_forward bias", w.dims(), b.dims()));
    }
    let mut y = Tensor::zeros(&[batch, c_out]);
    linalg::gemm_nn(batch, c_in, c_out, x.data(), w.data(), y.data_mut());
    for row in y.data_mut().chunks_exact_mut(c_out) {
        for (v, &bv) in row.iter_mut().zip(b.data()) {
            *v += bv;
        }
    }
    Ok(y)
}

/// Gradients of a dense layer: `(dx, dW, db)`.
pub fn dense_backward<T: Scalar>(
    x: &Tensor<T>,
    w: &Tensor<T>,
    dy: &Tensor<T>,
) -> Result<(Tensor<T>, Tensor<T>, Tensor<T>)> {
    let (batch, c_in) = x.shape2()?;
    let (_, c_out) = w.shape2()?;
    if dy.dims() != [batch, c_out] {
        return Err(shape_err("dense_backward", dy.dims(), &[batch, c_out]));
    }
    let mut dw = Tensor::zeros(&[c_in, c_out]);
    linalg::gemm_tn(c_in, batch, c_out, x.data(), dy.data(), dw.data_mut());
    let mut db = Tensor::zeros(&[c_out]);
    for row in dy.data().chunks_exact(c_out) {
        for (d, &g) in db.data_mut().iter_mut().zip(row) {
            *d += g;
        }
    }
    let mut dx = Tensor::zeros(&[batch, c_in]);
    linalg::gemm_nt(batch, c_out, c_in, dy.data(), w.data(), dx.data_mut());
    Ok((dx, dw, db))
}

#[derive(Debug, Clone)]
pub struct Dense<T> {
    pub weight: ParamTensor<T>,
    pub bias: ParamTensor<T>,
    input: Option<Tensor<T>>,
}

impl<T: Scalar> Dense<T> {
    pub fn new(prefix: &str, weight: Tensor<T>, bias: Tensor<T>) -> Result<Self> {
        let (c_in, c_out) = weight.shape2()?;
        if bias.dims() != [c_out] {
            return Err(shape_err("dense bias", weight.dims(), bias.dims()));
        }
        Ok(Dense {
            weight: ParamTensor::new(format!("{prefix}.weight"), weight, Some(Unfolding::fc(c_in, c_out))),
            bias: ParamTensor::new(format!("{prefix}.bias"), bias, None),
            input: None,
        })
    }

    pub fn in_features(&self) -> usize {
        self.weight.value.dims()[0]
    }

    pub fn out_features(&self) -> usize {
        self.weight.value.dims()[1]
    }

    pub fn forward(&mut self, x: &Tensor<T>) -> Result<Tensor<T>> {
        let y = dense_forward(x, &self.weight.value, &self.bias.value)?;
        self.input = Some(x.clone());
        Ok(y)
    }

    pub fn backward(&mut self, dy: &Tensor<T>) -> Result<Tensor<T>> {
        let x = self
            .input
            .as_ref()
            .ok_or(Error::State("dense backward before forward"))?;
        let (dx, dw, db) = dense_backward(x, &self.weight.value, dy)?;
        self.weight.grad = dw;
        self.bias.grad = db;
        Ok(dx)
    }
}
