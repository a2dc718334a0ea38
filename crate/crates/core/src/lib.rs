//! Regularized LSTM language modeling on the CPU.
//!
//! The crate is organised bottom-up:
//!
//! * [`numerics`]: dense tensors, a reverse-mode tape, seeded randomness and
//!   a finite-difference gradient checker.
//! * [`corpus`]: vocabularies, continuous batching and the variable-length
//!   BPTT sampler.
//! * [`model`]: the weight-dropped LSTM language model with locked dropout,
//!   embedding dropout, weight tying and AR/TAR.
//! * [`optim`]: clipped SGD and the non-monotonically triggered averaging
//!   bookkeeping.
//! * [`cache`]: continuous-cache pointer inference on top of a trained model.
//! * [`harness`]: configuration, checkpoints, the training loop, evaluation
//!   and ablations.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cache;
pub mod corpus;
pub mod error;
pub mod harness;
pub mod model;
pub mod numerics;
pub mod optim;

pub use error::{Error, Result};
