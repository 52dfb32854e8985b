//! Deterministic minibatch training over in-memory data.
//!
//! A [`Trainer`] owns the model, one optimizer state per parameter and the
//! run RNG. The model is initialized from the run RNG first; every epoch then
//! draws its shuffle from the same stream. Two runs that differ only in the
//! GC flag therefore see identical initial weights and identical batch order.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::linalg;
use crate::nn::{correct_count, softmax_ce, InitScheme, LayerSpec, Model};
use crate::optim::{OptimizerConfig, OptimizerState, StepStats};
use crate::rng::RngStream;
use crate::scalar::Scalar;
use crate::tensor::Tensor;

/// Labelled samples stored as one `N × sample_dims…` tensor.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset<T> {
    pub features: Tensor<T>,
    pub labels: Vec<usize>,
    pub classes: usize,
}

impl<T: Scalar> Dataset<T> {
    pub fn new(features: Tensor<T>, labels: Vec<usize>, classes: usize) -> Result<Self> {
        if features.dims()[0] != labels.len() {
            return Err(Error::Data(format!(
                "{} samples but {} labels",
                features.dims()[0],
                labels.len()
            )));
        }
        if let Some(&bad) = labels.iter().find(|&&l| l >= classes) {
            return Err(Error::Data(format!("label {bad} out of range for {classes} classes")));
        }
        Ok(Dataset {
            features,
            labels,
            classes,
        })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn sample_dims(&self) -> &[usize] {
        &self.features.dims()[1..]
    }

    pub fn sample_len(&self) -> usize {
        self.sample_dims().iter().product()
    }

    /// Gathers the given samples into a batch tensor.
    pub fn batch(&self, indices: &[usize]) -> (Tensor<T>, Vec<usize>) {
        let len = self.sample_len();
        let mut data = Vec::with_capacity(indices.len() * len);
        let mut labels = Vec::with_capacity(indices.len());
        for &i in indices {
            data.extend_from_slice(&self.features.data()[i * len..(i + 1) * len]);
            labels.push(self.labels[i]);
        }
        let mut dims = Vec::with_capacity(self.features.ndim());
        dims.push(indices.len());
        dims.extend_from_slice(self.sample_dims());
        (Tensor::from_vec(&dims, data).expect("batch dims"), labels)
    }

    /// Splits off the first `train` samples; the rest form the second set.
    pub fn split_at(&self, train: usize) -> Result<(Self, Self)> {
        if train == 0 || train >= self.len() {
            return Err(Error::Data(format!("cannot split {} samples at {train}", self.len())));
        }
        let a: Vec<usize> = (0..train).collect();
        let b: Vec<usize> = (train..self.len()).collect();
        let (fa, la) = self.batch(&a);
        let (fb, lb) = self.batch(&b);
        Ok((Dataset::new(fa, la, self.classes)?, Dataset::new(fb, lb, self.classes)?))
    }
}

/// `lr = base · factor^(number of milestones ≤ epoch)`.
#[derive(Debug, Clone, PartialEq)]
pub struct LrSchedule {
    pub factor: f64,
    pub milestones: Vec<u32>,
}

impl Default for LrSchedule {
    fn default() -> Self {
        LrSchedule {
            factor: 0.1,
            milestones: alloc::vec![60, 120, 180],
        }
    }
}

impl LrSchedule {
    pub fn lr_at(&self, base: f64, epoch: u32) -> f64 {
        let hits = self.milestones.iter().filter(|&&m| m <= epoch).count();
        let mut lr = base;
        for _ in 0..hits {
            lr *= self.factor;
        }
        lr
    }
}

/// Where a run stands. `epoch` and `batch` index the next batch to train on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct Position {
    pub epoch: u32,
    pub batch: u32,
    /// Optimizer steps taken so far.
    pub step: u64,
}

/// What one training step produced.
#[derive(Debug, Clone, PartialEq)]
pub struct StepOutcome {
    pub loss: f64,
    pub correct: usize,
    pub count: usize,
    /// L2 norm and max-abs of the backprop gradient over all parameters.
    pub grad_l2: f64,
    pub grad_max: f64,
    /// Per-parameter norms before and after GC, when traced.
    pub per_param: Vec<(String, StepStats)>,
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct EvalResult {
    pub loss: f64,
    pub acc: f64,
}

#[derive(Debug, Clone)]
pub struct Trainer<T> {
    pub model: Model<T>,
    pub optimizer: OptimizerConfig,
    base_lr: f64,
    pub schedule: LrSchedule,
    pub batch_size: usize,
    pub states: Vec<OptimizerState<T>>,
    rng: RngStream,
    epoch_rng: [u64; 4],
    order: Vec<usize>,
    position: Position,
}

impl<T: Scalar> Trainer<T> {
    /// Builds the model from `seed`'s run stream and zeroed optimizer states.
    pub fn new(
        specs: &[LayerSpec],
        input_dims: &[usize],
        init: InitScheme,
        optimizer: OptimizerConfig,
        schedule: LrSchedule,
        batch_size: usize,
        seed: u64,
    ) -> Result<Self> {
        optimizer.validate()?;
        if batch_size == 0 {
            return Err(Error::Config("batch_size must be >= 1".into()));
        }
        let mut rng = RngStream::new(seed);
        let model = Model::build(specs, input_dims, init, &mut rng)?;
        let states = model
            .params()
            .iter()
            .map(|p| OptimizerState::new(p.name.clone(), p.value.len()))
            .collect();
        Ok(Trainer {
            model,
            base_lr: optimizer.lr,
            optimizer,
            schedule,
            batch_size,
            states,
            epoch_rng: rng.state(),
            rng,
            order: Vec::new(),
            position: Position::default(),
        })
    }

    pub fn position(&self) -> Position {
        self.position
    }

    pub fn base_lr(&self) -> f64 {
        self.base_lr
    }

    /// Run-stream state at the start of the current epoch, before its shuffle.
    pub fn epoch_rng_state(&self) -> [u64; 4] {
        self.epoch_rng
    }

    pub fn seed(&self) -> u64 {
        self.rng.seed()
    }

    /// Restores a saved position. The epoch order is regenerated from the
    /// saved stream state on the next step.
    pub fn restore(&mut self, position: Position, epoch_rng: [u64; 4]) {
        self.position = position;
        self.epoch_rng = epoch_rng;
        self.rng = RngStream::from_state(self.rng.seed(), epoch_rng);
        self.order.clear();
    }

    pub fn batches_per_epoch(&self, train_len: usize) -> usize {
        train_len.div_ceil(self.batch_size)
    }

    fn ensure_order(&mut self, train_len: usize) {
        if self.order.len() == train_len {
            return;
        }
        self.rng = RngStream::from_state(self.rng.seed(), self.epoch_rng);
        self.order = (0..train_len).collect();
        self.rng.shuffle(&mut self.order);
    }

    /// Trains on the next batch of the current epoch. Returns `None` once the
    /// epoch is exhausted; call [`end_epoch`](Self::end_epoch) then.
    pub fn next_step(&mut self, data: &Dataset<T>, trace: bool) -> Result<Option<StepOutcome>> {
        self.ensure_order(data.len());
        let start = self.position.batch as usize * self.batch_size;
        if start >= data.len() {
            return Ok(None);
        }
        let end = (start + self.batch_size).min(data.len());
        let indices: Vec<usize> = self.order[start..end].to_vec();
        let outcome = self.train_batch(data, &indices, trace)?;
        self.position.batch += 1;
        self.position.step += 1;
        Ok(Some(outcome))
    }

    /// Moves to the next epoch. The next shuffle continues the run stream.
    pub fn end_epoch(&mut self) {
        self.position.epoch += 1;
        self.position.batch = 0;
        self.epoch_rng = self.rng.state();
        self.order.clear();
    }

    fn train_batch(&mut self, data: &Dataset<T>, indices: &[usize], trace: bool) -> Result<StepOutcome> {
        let (x, y) = data.batch(indices);
        self.model.set_training(true);
        let (loss, correct) = self.model.loss_and_grad(&x, &y)?;
        let mut outcome = StepOutcome {
            loss: loss.to_f64(),
            correct,
            count: indices.len(),
            grad_l2: 0.0,
            grad_max: 0.0,
            per_param: Vec::new(),
        };
        if !outcome.loss.is_finite() {
            return Ok(outcome);
        }
        if trace {
            let mut sq = 0.0;
            let mut mx: f64 = 0.0;
            for p in self.model.params() {
                sq += linalg::dot(p.grad.data(), p.grad.data()).to_f64();
                mx = mx.max(linalg::max_abs(p.grad.data()).to_f64());
            }
            outcome.grad_l2 = libm::sqrt(sq);
            outcome.grad_max = mx;
        }
        let mut cfg = self.optimizer.clone();
        cfg.lr = self.schedule.lr_at(self.base_lr, self.position.epoch);
        for (p, state) in self.model.params_mut().into_iter().zip(&mut self.states) {
            let u = p.unfolding();
            if trace {
                let stats = cfg.step_traced(p.value.data_mut(), p.grad.data(), state, u)?;
                outcome.per_param.push((p.name.clone(), stats));
            } else {
                cfg.step(p.value.data_mut(), p.grad.data(), state, u)?;
            }
        }
        Ok(outcome)
    }

    /// Mean loss and accuracy in evaluation mode, in batches of `batch_size`.
    pub fn evaluate(&mut self, data: &Dataset<T>) -> Result<EvalResult> {
        self.model.set_training(false);
        let mut loss = 0.0;
        let mut correct = 0;
        let indices: Vec<usize> = (0..data.len()).collect();
        for chunk in indices.chunks(self.batch_size) {
            let (x, y) = data.batch(chunk);
            let logits = self.model.forward(&x)?;
            let (l, _) = softmax_ce(&logits, &y)?;
            loss += l.to_f64() * chunk.len() as f64;
            correct += correct_count(&logits, &y);
        }
        self.model.set_training(true);
        let n = data.len().max(1) as f64;
        Ok(EvalResult {
            loss: loss / n,
            acc: correct as f64 / n,
        })
    }
}
