//! A small reverse-mode network engine.
//!
//! Models are plain layer stacks. Each layer caches what its backward pass
//! needs during `forward`; `backward` takes the gradient of the loss with
//! respect to the layer output, overwrites the layer's parameter gradients
//! and returns the gradient with respect to its input.

mod batchnorm;
mod conv;
mod dense;
mod gradcheck;
mod loss;

use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;
use core::fmt;

pub use batchnorm::{BatchNormLite, BN_EPS, BN_MOMENTUM};
pub use conv::{conv2d_direct, conv2d_forward, Conv2d, ConvGeometry};
pub use dense::{dense_backward, dense_forward, Dense};
pub use gradcheck::{fd_gradient_check, FdReport, LossFn, TensorCheck};
pub use loss::{correct_count, softmax_ce};

use crate::error::{Error, Result};
use crate::gc::Unfolding;
use crate::init;
use crate::rng::RngStream;
use crate::scalar::Scalar;
use crate::tensor::Tensor;

/// A named trainable tensor and its gradient.
///
/// Only dense and convolution weights carry an [`Unfolding`]; those are the
/// GC-eligible parameters. Biases and normalization parameters never do.
#[derive(Debug, Clone)]
pub struct ParamTensor<T> {
    pub name: String,
    pub value: Tensor<T>,
    pub grad: Tensor<T>,
    unfolding: Option<Unfolding>,
}

impl<T: Scalar> ParamTensor<T> {
    pub fn new(name: String, value: Tensor<T>, unfolding: Option<Unfolding>) -> Self {
        let grad = Tensor::zeros_like(&value);
        ParamTensor {
            name,
            value,
            grad,
            unfolding,
        }
    }

    pub fn unfolding(&self) -> Option<Unfolding> {
        self.unfolding
    }

    pub fn gc_eligible(&self) -> bool {
        self.unfolding.is_some()
    }

    /// `(M, N)` of the fan-in matrix, for eligible parameters.
    pub fn fan(&self) -> Option<(usize, usize)> {
        self.unfolding.map(|u| (u.m(), u.n()))
    }
}

#[derive(Debug, Clone, Default)]
pub struct Relu<T> {
    input: Option<Tensor<T>>,
}

impl<T: Scalar> Relu<T> {
    pub fn forward(&mut self, x: &Tensor<T>) -> Tensor<T> {
        self.input = Some(x.clone());
        x.map(|v| if v > T::ZERO { v } else { T::ZERO })
    }

    pub fn backward(&mut self, dy: &Tensor<T>) -> Result<Tensor<T>> {
        let x = self
            .input
            .as_ref()
            .ok_or(Error::State("relu backward before forward"))?;
        x.zip_with(dy, "relu_backward", |x, g| if x > T::ZERO { g } else { T::ZERO })
    }

    /// Inputs seen by the last forward pass.
    pub fn preactivations(&self) -> Option<&[T]> {
        self.input.as_ref().map(|t| t.data())
    }
}

#[derive(Debug, Clone, Default)]
pub struct Flatten {
    input_dims: Option<Vec<usize>>,
}

impl Flatten {
    pub fn forward<T: Scalar>(&mut self, x: &Tensor<T>) -> Result<Tensor<T>> {
        let batch = x.dims()[0];
        self.input_dims = Some(x.dims().to_vec());
        x.clone().reshape(&[batch, x.len() / batch])
    }

    pub fn backward<T: Scalar>(&mut self, dy: &Tensor<T>) -> Result<Tensor<T>> {
        let dims = self
            .input_dims
            .as_ref()
            .ok_or(Error::State("flatten backward before forward"))?;
        dy.clone().reshape(dims)
    }
}

#[derive(Debug, Clone)]
pub enum Layer<T> {
    Dense(Dense<T>),
    Conv2d(Conv2d<T>),
    Relu(Relu<T>),
    Flatten(Flatten),
    BatchNorm(BatchNormLite<T>),
}

impl<T: Scalar> Layer<T> {
    pub fn forward(&mut self, x: &Tensor<T>, train: bool) -> Result<Tensor<T>> {
        match self {
            Layer::Dense(l) => l.forward(x),
            Layer::Conv2d(l) => l.forward(x),
            Layer::Relu(l) => Ok(l.forward(x)),
            Layer::Flatten(l) => l.forward(x),
            Layer::BatchNorm(l) => l.forward(x, train),
        }
    }

    pub fn backward(&mut self, dy: &Tensor<T>) -> Result<Tensor<T>> {
        match self {
            Layer::Dense(l) => l.backward(dy),
            Layer::Conv2d(l) => l.backward(dy),
            Layer::Relu(l) => l.backward(dy),
            Layer::Flatten(l) => l.backward(dy),
            Layer::BatchNorm(l) => l.backward(dy),
        }
    }

    pub fn params(&self) -> Vec<&ParamTensor<T>> {
        match self {
            Layer::Dense(l) => alloc::vec![&l.weight, &l.bias],
            Layer::Conv2d(l) => alloc::vec![&l.weight, &l.bias],
            Layer::BatchNorm(l) => alloc::vec![&l.gamma, &l.beta],
            Layer::Relu(_) | Layer::Flatten(_) => Vec::new(),
        }
    }

    pub fn params_mut(&mut self) -> Vec<&mut ParamTensor<T>> {
        match self {
            Layer::Dense(l) => alloc::vec![&mut l.weight, &mut l.bias],
            Layer::Conv2d(l) => alloc::vec![&mut l.weight, &mut l.bias],
            Layer::BatchNorm(l) => alloc::vec![&mut l.gamma, &mut l.beta],
            Layer::Relu(_) | Layer::Flatten(_) => Vec::new(),
        }
    }
}

/// One entry of a model description.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LayerSpec {
    Dense {
        out: usize,
    },
    Conv {
        out: usize,
        kernel: usize,
        stride: usize,
        pad: usize,
    },
    Relu,
    Flatten,
    BatchNorm,
}

impl LayerSpec {
    /// Parses `dense:OUT`, `conv:OUT:K[:STRIDE[:PAD]]`, `relu`, `flatten`, `bn`.
    pub fn parse(s: &str) -> Result<Self> {
        let parts: Vec<&str> = s.trim().split(':').collect();
        let num = |i: usize, default: Option<usize>| -> Result<usize> {
            match parts.get(i) {
                Some(p) => p
                    .parse::<usize>()
                    .ok()
                    .filter(|&v| v > 0 || i == 4)
                    .ok_or_else(|| Error::Config(format!("bad number `{p}` in layer `{s}`"))),
                None => default.ok_or_else(|| Error::Config(format!("layer `{s}` is missing a field"))),
            }
        };
        let spec = match parts[0] {
            "dense" => LayerSpec::Dense { out: num(1, None)? },
            "conv" => LayerSpec::Conv {
                out: num(1, None)?,
                kernel: num(2, None)?,
                stride: num(3, Some(1))?,
                pad: num(4, Some(0))?,
            },
            "relu" => LayerSpec::Relu,
            "flatten" => LayerSpec::Flatten,
            "bn" => LayerSpec::BatchNorm,
            other => return Err(Error::Config(format!("unknown layer kind `{other}`"))),
        };
        let max_fields = match spec {
            LayerSpec::Dense { .. } => 2,
            LayerSpec::Conv { .. } => 5,
            _ => 1,
        };
        if parts.len() > max_fields {
            return Err(Error::Config(format!("too many fields in layer `{s}`")));
        }
        Ok(spec)
    }

    /// Parses a comma-separated layer list.
    pub fn parse_list(s: &str) -> Result<Vec<Self>> {
        s.split(',').filter(|p| !p.trim().is_empty()).map(Self::parse).collect()
    }
}

impl fmt::Display for LayerSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            LayerSpec::Dense { out } => write!(f, "dense:{out}"),
            LayerSpec::Conv {
                out,
                kernel,
                stride,
                pad,
            } => write!(f, "conv:{out}:{kernel}:{stride}:{pad}"),
            LayerSpec::Relu => f.write_str("relu"),
            LayerSpec::Flatten => f.write_str("flatten"),
            LayerSpec::BatchNorm => f.write_str("bn"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum InitScheme {
    #[default]
    KaimingNormal,
    XavierUniform,
}

#[derive(Debug, Clone)]
pub struct Model<T> {
    pub layers: Vec<Layer<T>>,
    input_dims: Vec<usize>,
    training: bool,
}

impl<T: Scalar> Model<T> {
    /// Builds a model for per-sample inputs of shape `input_dims` (`[D]` or
    /// `[C, H, W]`). Weights are drawn from `rng`, biases start at zero.
    pub fn build(specs: &[LayerSpec], input_dims: &[usize], scheme: InitScheme, rng: &mut RngStream) -> Result<Self> {
        let mut shape = input_dims.to_vec();
        let mut layers = Vec::with_capacity(specs.len());
        for (idx, spec) in specs.iter().enumerate() {
            let layer = match *spec {
                LayerSpec::Dense { out } => {
                    let [c_in] = shape[..] else {
                        return Err(Error::Config(format!(
                            "dense layer {idx} needs a flat input, got {shape:?}"
                        )));
                    };
                    let w = draw(scheme, &[c_in, out], c_in, out, rng)?;
                    shape = alloc::vec![out];
                    Layer::Dense(Dense::new(&format!("{idx}.dense"), w, Tensor::zeros(&[out]))?)
                }
                LayerSpec::Conv {
                    out,
                    kernel,
                    stride,
                    pad,
                } => {
                    let [c, h, w] = shape[..] else {
                        return Err(Error::Config(format!(
                            "conv layer {idx} needs a C×H×W input, got {shape:?}"
                        )));
                    };
                    let g = ConvGeometry::new([c, h, w], [out, c, kernel, kernel], stride, pad)?;
                    let k = draw(
                        scheme,
                        &[out, c, kernel, kernel],
                        g.patch_rows(),
                        out * kernel * kernel,
                        rng,
                    )?;
                    shape = alloc::vec![out, g.out_h, g.out_w];
                    Layer::Conv2d(Conv2d::new(
                        &format!("{idx}.conv"),
                        k,
                        Tensor::zeros(&[out]),
                        stride,
                        pad,
                    )?)
                }
                LayerSpec::Relu => Layer::Relu(Relu::default()),
                LayerSpec::Flatten => {
                    shape = alloc::vec![shape.iter().product()];
                    Layer::Flatten(Flatten::default())
                }
                LayerSpec::BatchNorm => Layer::BatchNorm(BatchNormLite::new(&format!("{idx}.bn"), shape[0])),
            };
            layers.push(layer);
        }
        let model = Model {
            layers,
            input_dims: input_dims.to_vec(),
            training: true,
        };
        model.assert_fan_convention()?;
        Ok(model)
    }

    pub fn from_layers(layers: Vec<Layer<T>>, input_dims: &[usize]) -> Result<Self> {
        let model = Model {
            layers,
            input_dims: input_dims.to_vec(),
            training: true,
        };
        model.assert_fan_convention()?;
        Ok(model)
    }

    /// Dense weights must unfold to `M = C_in`, convolution kernels to
    /// `M = C_in·k₁·k₂`, with `N = C_out` in both cases; nothing else is eligible.
    fn assert_fan_convention(&self) -> Result<()> {
        for layer in &self.layers {
            let (w, expected) = match layer {
                Layer::Dense(l) => (&l.weight, (l.in_features(), l.out_features())),
                Layer::Conv2d(l) => {
                    let d = l.weight.value.dims();
                    (&l.weight, (d[1] * d[2] * d[3], d[0]))
                }
                _ => {
                    if layer.params().iter().any(|p| p.gc_eligible()) {
                        return Err(Error::State("non-weight parameter marked GC-eligible"));
                    }
                    continue;
                }
            };
            if w.fan() != Some(expected) {
                return Err(Error::Incompatible {
                    tensor: w.name.clone(),
                    reason: format!("fan {:?} does not match {expected:?}", w.fan()),
                });
            }
            if layer.params().iter().filter(|p| p.gc_eligible()).count() != 1 {
                return Err(Error::State("only the weight of a layer may be GC-eligible"));
            }
        }
        Ok(())
    }

    pub fn input_dims(&self) -> &[usize] {
        &self.input_dims
    }

    pub fn set_training(&mut self, training: bool) {
        self.training = training;
    }

    pub fn is_training(&self) -> bool {
        self.training
    }

    pub fn forward(&mut self, x: &Tensor<T>) -> Result<Tensor<T>> {
        let mut h = x.clone();
        for layer in &mut self.layers {
            h = layer.forward(&h, self.training)?;
        }
        Ok(h)
    }

    /// Backpropagates `dout` and returns the gradient with respect to the input.
    pub fn backward(&mut self, dout: &Tensor<T>) -> Result<Tensor<T>> {
        let mut g = dout.clone();
        for layer in self.layers.iter_mut().rev() {
            g = layer.backward(&g)?;
        }
        Ok(g)
    }

    /// Forward, softmax cross-entropy and backward in one go. Returns the mean
    /// loss and the number of correct predictions.
    pub fn loss_and_grad(&mut self, x: &Tensor<T>, targets: &[usize]) -> Result<(T, usize)> {
        let logits = self.forward(x)?;
        let correct = correct_count(&logits, targets);
        let (loss, dlogits) = softmax_ce(&logits, targets)?;
        self.backward(&dlogits)?;
        Ok((loss, correct))
    }

    pub fn params(&self) -> Vec<&ParamTensor<T>> {
        self.layers.iter().flat_map(|l| l.params()).collect()
    }

    pub fn params_mut(&mut self) -> Vec<&mut ParamTensor<T>> {
        self.layers.iter_mut().flat_map(|l| l.params_mut()).collect()
    }

    pub fn param_count(&self) -> usize {
        self.params().iter().map(|p| p.value.len()).sum()
    }

    /// Non-trainable state (batch-norm running statistics), by name.
    pub fn buffers(&self) -> Vec<(String, &[T])> {
        let mut out = Vec::new();
        for l in &self.layers {
            if let Layer::BatchNorm(bn) = l {
                let prefix = bn.gamma.name.trim_end_matches(".gamma").to_string();
                out.push((format!("{prefix}.running_mean"), bn.running_mean.as_slice()));
                out.push((format!("{prefix}.running_var"), bn.running_var.as_slice()));
            }
        }
        out
    }

    pub fn buffers_mut(&mut self) -> Vec<(String, &mut Vec<T>)> {
        let mut out = Vec::new();
        for l in &mut self.layers {
            if let Layer::BatchNorm(bn) = l {
                let prefix = bn.gamma.name.trim_end_matches(".gamma").to_string();
                out.push((format!("{prefix}.running_mean"), &mut bn.running_mean));
                out.push((format!("{prefix}.running_var"), &mut bn.running_var));
            }
        }
        out
    }

    /// Inputs of every ReLU from the last forward pass.
    pub fn relu_preactivations(&self) -> Vec<&[T]> {
        self.layers
            .iter()
            .filter_map(|l| match l {
                Layer::Relu(r) => r.preactivations(),
                _ => None,
            })
            .collect()
    }
}

fn draw<T: Scalar>(
    scheme: InitScheme,
    dims: &[usize],
    fan_in: usize,
    fan_out: usize,
    rng: &mut RngStream,
) -> Result<Tensor<T>> {
    match scheme {
        InitScheme::KaimingNormal => init::kaiming_normal(dims, fan_in, rng),
        InitScheme::XavierUniform => init::xavier_uniform(dims, fan_in, fan_out, rng),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cnn(rng: &mut RngStream) -> Model<f64> {
        let specs = LayerSpec::parse_list("conv:3:3:1:1,bn,relu,flatten,dense:4").unwrap();
        Model::build(&specs, &[2, 4, 4], InitScheme::KaimingNormal, rng).unwrap()
    }

    #[test]
    fn layer_spec_parsing() {
        assert_eq!(LayerSpec::parse("dense:10").unwrap(), LayerSpec::Dense { out: 10 });
        assert_eq!(
            LayerSpec::parse("conv:8:3").unwrap(),
            LayerSpec::Conv {
                out: 8,
                kernel: 3,
                stride: 1,
                pad: 0
            }
        );
        assert!(LayerSpec::parse("dense").is_err());
        assert!(LayerSpec::parse("dense:0").is_err());
        assert!(LayerSpec::parse("pool:2").is_err());
        let list = LayerSpec::parse_list("conv:4:3:2:1, relu,flatten,dense:3").unwrap();
        let round: Vec<String> = list.iter().map(|s| s.to_string()).collect();
        assert_eq!(round.join(","), "conv:4:3:2:1,relu,flatten,dense:3");
    }

    #[test]
    fn eligibility_and_fans() {
        let m = cnn(&mut RngStream::new(1));
        let eligible: Vec<(&str, (usize, usize))> = m
            .params()
            .iter()
            .filter_map(|p| p.fan().map(|f| (p.name.as_str(), f)))
            .collect();
        assert_eq!(eligible, [("0.conv.weight", (18, 3)), ("4.dense.weight", (48, 4))]);
        assert_eq!(m.params().len(), 6);
    }

    #[test]
    fn backward_fills_every_grad() {
        let mut rng = RngStream::new(2);
        let mut m = cnn(&mut rng);
        let x = Tensor::from_vec(&[3, 2, 4, 4], (0..96).map(|_| rng.normal()).collect()).unwrap();
        m.loss_and_grad(&x, &[0, 1, 3]).unwrap();
        for p in m.params() {
            assert_eq!(p.grad.dims(), p.value.dims());
            assert!(p.grad.data().iter().any(|&v| v != 0.0), "{}", p.name);
        }
    }

    #[test]
    fn backward_is_deterministic() {
        let run = || {
            let mut rng = RngStream::new(3);
            let mut m = cnn(&mut rng);
            let x = Tensor::from_vec(&[2, 2, 4, 4], (0..64).map(|_| rng.normal()).collect()).unwrap();
            m.loss_and_grad(&x, &[1, 2]).unwrap();
            m.params()
                .iter()
                .flat_map(|p| p.grad.data().iter().map(|v| v.to_bits()))
                .collect::<Vec<_>>()
        };
        assert_eq!(run(), run());
    }

    #[test]
    fn linear_model_quadratic_loss_is_exact() {
        let mut rng = RngStream::new(4);
        let model = Model::<f64>::build(
            &[LayerSpec::Dense { out: 3 }],
            &[5],
            InitScheme::KaimingNormal,
            &mut rng,
        )
        .unwrap();
        let x = Tensor::from_vec(&[4, 5], (0..20).map(|_| rng.normal()).collect()).unwrap();
        let target = Tensor::from_vec(&[4, 3], (0..12).map(|_| rng.normal()).collect()).unwrap();
        let loss = |y: &Tensor<f64>| -> Result<(f64, Tensor<f64>)> {
            let d = y.sub(&target)?;
            Ok((0.5 * d.data().iter().map(|v| v * v).sum::<f64>(), d))
        };
        let report = fd_gradient_check(&model, &x, &loss, 1e-4, 1e-9).unwrap();
        assert!(report.passed(), "{report:?}");
        assert_eq!(report.checked(), 18);
    }

    #[test]
    fn conv_bn_relu_dense_stack_passes_fd() {
        let mut rng = RngStream::new(5);
        let model = cnn(&mut rng);
        let x = Tensor::from_vec(&[4, 2, 4, 4], (0..128).map(|_| rng.normal()).collect()).unwrap();
        let targets = [0usize, 1, 2, 3];
        let loss = |y: &Tensor<f64>| softmax_ce(y, &targets);
        let report = fd_gradient_check(&model, &x, &loss, 1e-5, 1e-4).unwrap();
        assert!(report.passed(), "{report:?}");
        assert!(report.checked() > 0);
    }

    #[test]
    fn kink_entries_are_skipped() {
        // One ReLU input sits exactly at zero; the weight feeding it gets skipped.
        let w = Tensor::from_vec(&[1, 1], std::vec![1.0]).unwrap();
        let dense = Dense::new("0.dense", w, Tensor::zeros(&[1])).unwrap();
        let model = Model::from_layers(std::vec![Layer::Dense(dense), Layer::Relu(Relu::default())], &[1]).unwrap();
        let x = Tensor::from_vec(&[1, 1], std::vec![0.0]).unwrap();
        let loss = |y: &Tensor<f64>| Ok((y.sum(), Tensor::full(y.dims(), 1.0)?));
        let report = fd_gradient_check(&model, &x, &loss, 1e-5, 1e-4).unwrap();
        let bias = report.tensors.iter().find(|t| t.name == "0.dense.bias").unwrap();
        assert_eq!(bias.skipped, 1);
    }

    #[test]
    fn buffers_are_named() {
        let m = cnn(&mut RngStream::new(6));
        let names: Vec<String> = m.buffers().into_iter().map(|(n, _)| n).collect();
        assert_eq!(names, ["1.bn.running_mean", "1.bn.running_var"]);
    }
}
