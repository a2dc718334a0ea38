//! Dense arrays, reverse-mode differentiation and seeded randomness.

mod gradcheck;
mod rng;
mod scalar;
mod tape;
mod tensor;

pub use gradcheck::{check_gradient, GradCheckReport};
pub use rng::{sample_bernoulli_mask, Rng, RngState};
pub use scalar::Scalar;
pub use tape::{row_log_softmax_at, Gradients, Tape, Var};
pub use tensor::Tensor;
