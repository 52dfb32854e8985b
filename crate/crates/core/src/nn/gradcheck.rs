//! Central-difference gradient checking.

use alloc::string::String;
use alloc::vec::Vec;

use crate::error::Result;
use crate::nn::Model;
use crate::tensor::Tensor;

#[derive(Debug, Clone, PartialEq)]
pub struct TensorCheck {
    pub name: String,
    pub max_rel_err: f64,
    pub checked: usize,
    /// Entries whose perturbation carried a ReLU input across zero.
    pub skipped: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FdReport {
    pub tensors: Vec<TensorCheck>,
    pub tolerance: f64,
}

impl FdReport {
    pub fn max_rel_err(&self) -> f64 {
        self.tensors.iter().map(|t| t.max_rel_err).fold(0.0, f64::max)
    }

    pub fn checked(&self) -> usize {
        self.tensors.iter().map(|t| t.checked).sum()
    }

    pub fn passed(&self) -> bool {
        self.max_rel_err() <= self.tolerance
    }
}

/// A loss head: returns the scalar loss and its gradient with respect to the model output.
pub type LossFn<'a> = &'a dyn Fn(&Tensor<f64>) -> Result<(f64, Tensor<f64>)>;

fn relu_signs(model: &Model<f64>) -> Vec<bool> {
    model
        .relu_preactivations()
        .into_iter()
        .flat_map(|z| z.iter().map(|&v| v > 0.0))
        .collect()
}

/// Compares analytic parameter gradients against central differences
/// `(L(θ+h) − L(θ−h)) / 2h`, per entry, as `|analytic − fd| / max(1, |fd|)`.
///
/// An entry is skipped when either perturbed pass moves some ReLU input to
/// the other side of zero, where the one-sided slopes differ; with step `h`
/// this covers every unit within the `10h` band that the entry can actually
/// push across. Works on a copy, so `model` is untouched.
pub fn fd_gradient_check(
    model: &Model<f64>,
    x: &Tensor<f64>,
    loss: LossFn<'_>,
    h: f64,
    tolerance: f64,
) -> Result<FdReport> {
    let mut work = model.clone();
    let out = work.forward(x)?;
    let (_, dout) = loss(&out)?;
    work.backward(&dout)?;
    let base_signs = relu_signs(&work);
    let analytic: Vec<(String, Vec<f64>)> = work
        .params()
        .iter()
        .map(|p| (p.name.clone(), p.grad.data().to_vec()))
        .collect();

    let mut tensors = Vec::with_capacity(analytic.len());
    for (pi, (name, grads)) in analytic.iter().enumerate() {
        let mut check = TensorCheck {
            name: name.clone(),
            max_rel_err: 0.0,
            checked: 0,
            skipped: 0,
        };
        for (i, &a) in grads.iter().enumerate() {
            let eval = |delta: f64| -> Result<(f64, bool)> {
                let mut probe = model.clone();
                probe.params_mut()[pi].value.data_mut()[i] += delta;
                let out = probe.forward(x)?;
                let (l, _) = loss(&out)?;
                Ok((l, relu_signs(&probe) == base_signs))
            };
            let (lp, same_p) = eval(h)?;
            let (lm, same_m) = eval(-h)?;
            if !(same_p && same_m) {
                check.skipped += 1;
                continue;
            }
            let fd = (lp - lm) / (2.0 * h);
            let err = (a - fd).abs() / fd.abs().max(1.0);
            check.max_rel_err = check.max_rel_err.max(err);
            check.checked += 1;
        }
        tensors.push(check);
    }
    Ok(FdReport { tensors, tolerance })
}
