//! Batch normalization over the channel axis (axis 1) of `batch×C` or
//! `batch×C×H×W` inputs. `ε = 1e-5`; running statistics follow
//! `running ← 0.9·running + 0.1·batch_stat` with the biased batch variance.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use crate::error::{shape_err, Error, Result};
use crate::nn::ParamTensor;
use crate::scalar::Scalar;
use crate::tensor::Tensor;

pub const BN_EPS: f64 = 1e-5;
pub const BN_MOMENTUM: f64 = 0.9;

#[derive(Debug, Clone)]
struct BnCache<T> {
    dims: Vec<usize>,
    x_hat: Vec<T>,
    inv_std: Vec<T>,
    train: bool,
}

#[derive(Debug, Clone)]
pub struct BatchNormLite<T> {
    pub gamma: ParamTensor<T>,
    pub beta: ParamTensor<T>,
    pub running_mean: Vec<T>,
    pub running_var: Vec<T>,
    cache: Option<BnCache<T>>,
}

/// `(batch, channels, spatial)` of a channel-major tensor.
fn split_dims(dims: &[usize]) -> Result<(usize, usize, usize)> {
    if dims.len() < 2 {
        return Err(Error::InvalidArgument(format!(
            "batchnorm needs batch×C[×…] input, got {dims:?}"
        )));
    }
    Ok((dims[0], dims[1], dims[2..].iter().product()))
}

impl<T: Scalar> BatchNormLite<T> {
    pub fn new(prefix: &str, channels: usize) -> Self {
        BatchNormLite {
            gamma: ParamTensor::new(
                format!("{prefix}.gamma"),
                Tensor::full(&[channels], T::ONE).unwrap(),
                None,
            ),
            beta: ParamTensor::new(format!("{prefix}.beta"), Tensor::zeros(&[channels]), None),
            running_mean: vec![T::ZERO; channels],
            running_var: vec![T::ONE; channels],
            cache: None,
        }
    }

    pub fn channels(&self) -> usize {
        self.running_mean.len()
    }

    pub fn forward(&mut self, x: &Tensor<T>, train: bool) -> Result<Tensor<T>> {
        let (batch, ch, spatial) = split_dims(x.dims())?;
        if ch != self.channels() {
            return Err(shape_err("batchnorm channels", x.dims(), &[self.channels()]));
        }
        if train && batch < 2 {
            return Err(Error::InvalidArgument(
                "batchnorm in train mode needs batch >= 2".into(),
            ));
        }
        let eps = T::from_f64(BN_EPS);
        let xd = x.data();
        let at = |b: usize, c: usize, s: usize| (b * ch + c) * spatial + s;

        let (mean, var) = if train {
            let count = T::from_usize(batch * spatial);
            let mut mean = vec![T::ZERO; ch];
            let mut var = vec![T::ZERO; ch];
            for c in 0..ch {
                let mut s = T::ZERO;
                for b in 0..batch {
                    for p in 0..spatial {
                        s += xd[at(b, c, p)];
                    }
                }
                mean[c] = s / count;
                let mut q = T::ZERO;
                for b in 0..batch {
                    for p in 0..spatial {
                        let d = xd[at(b, c, p)] - mean[c];
                        q += d * d;
                    }
                }
                var[c] = q / count;
            }
            let keep = T::from_f64(BN_MOMENTUM);
            let take = T::from_f64(1.0 - BN_MOMENTUM);
            for c in 0..ch {
                self.running_mean[c] = keep * self.running_mean[c] + take * mean[c];
                self.running_var[c] = keep * self.running_var[c] + take * var[c];
            }
            (mean, var)
        } else {
            (self.running_mean.clone(), self.running_var.clone())
        };

        let inv_std: Vec<T> = var.iter().map(|&v| T::ONE / (v + eps).sqrt()).collect();
        let mut x_hat = vec![T::ZERO; xd.len()];
        let mut y = Tensor::zeros(x.dims());
        let (g, bshift) = (self.gamma.value.data(), self.beta.value.data());
        for b in 0..batch {
            for c in 0..ch {
                for p in 0..spatial {
                    let i = at(b, c, p);
                    x_hat[i] = (xd[i] - mean[c]) * inv_std[c];
                    y.data_mut()[i] = g[c] * x_hat[i] + bshift[c];
                }
            }
        }
        self.cache = Some(BnCache {
            dims: x.dims().to_vec(),
            x_hat,
            inv_std,
            train,
        });
        Ok(y)
    }

    pub fn backward(&mut self, dy: &Tensor<T>) -> Result<Tensor<T>> {
        let cache = self
            .cache
            .as_ref()
            .ok_or(Error::State("batchnorm backward before forward"))?;
        if dy.dims() != cache.dims.as_slice() {
            return Err(shape_err("batchnorm_backward", dy.dims(), &cache.dims));
        }
        let (batch, ch, spatial) = split_dims(&cache.dims)?;
        let at = |b: usize, c: usize, s: usize| (b * ch + c) * spatial + s;
        let dyd = dy.data();
        let count = T::from_usize(batch * spatial);
        let mut dgamma = Tensor::zeros(&[ch]);
        let mut dbeta = Tensor::zeros(&[ch]);
        let mut dx = Tensor::zeros(&cache.dims);
        for c in 0..ch {
            let mut sum_dy = T::ZERO;
            let mut sum_dy_xhat = T::ZERO;
            for b in 0..batch {
                for p in 0..spatial {
                    let i = at(b, c, p);
                    sum_dy += dyd[i];
                    sum_dy_xhat += dyd[i] * cache.x_hat[i];
                }
            }
            dbeta.data_mut()[c] = sum_dy;
            dgamma.data_mut()[c] = sum_dy_xhat;
            let scale = self.gamma.value.data()[c] * cache.inv_std[c];
            for b in 0..batch {
                for p in 0..spatial {
                    let i = at(b, c, p);
                    dx.data_mut()[i] = if cache.train {
                        scale / count * (count * dyd[i] - sum_dy - cache.x_hat[i] * sum_dy_xhat)
                    } else {
                        scale * dyd[i]
                    };
                }
            }
        }
        self.gamma.grad = dgamma;
        self.beta.grad = dbeta;
        Ok(dx)
    }
}
