//! Gradient centralization (GC) for first-order optimizers.
//!
//! GC removes the mean of every fan-in column of a weight gradient before the
//! optimizer consumes it. Viewed as a matrix, this is the projection
//! `P = I - (1/M) 11ᵀ` applied to each column, which keeps `1ᵀw` fixed for
//! the whole of training and never increases the gradient norm.
//!
//! The crate is `no_std` (it needs `alloc`) and contains only computation:
//!
//! - [`tensor`], [`rng`], [`init`]: dense arrays, a fixed xoshiro256++ stream,
//!   Kaiming and Xavier initializers.
//! - [`gc`]: column unfolding of dense and convolution gradients and the
//!   centralization operator itself.
//! - [`optim`]: SGDM, SGDW, Adagrad, Adam and AdamW with a GC toggle.
//! - [`nn`]: a small reverse-mode network engine and a finite-difference checker.
//! - [`train`]: a deterministic minibatch training loop over in-memory data.
//! - [`verify`]: executable checks of the projection algebra, the norm and
//!   Hessian contraction identities and the output-invariance property.
//!
//! IO, file formats and the command-line runner live in the companion `gcopt` crate.

#![no_std]

extern crate alloc;
#[cfg(test)]
extern crate std;

pub mod error;
pub mod gc;
pub mod init;
pub mod linalg;
pub mod nn;
pub mod optim;
pub mod rng;
pub mod scalar;
pub mod tensor;
pub mod train;
pub mod verify;

pub use error::{Error, Result};
pub use gc::{centralize, unfold, GcPolicy, GradView, LayerKind};
pub use optim::{DecayMode, MomentumForm, OptimizerConfig, OptimizerKind, OptimizerState};
pub use rng::RngStream;
pub use scalar::{DType, Scalar};
pub use tensor::Tensor;
