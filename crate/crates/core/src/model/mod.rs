//! The weight-dropped LSTM language model.
//!
//! Layout conventions: per-timestep activations are `batch x width` matrices;
//! whole windows are stacked time-major, so row `t * batch + b` belongs to
//! timestep `t` of stream `b`. Gate columns are ordered `[i, f, o, c̃]`.

mod forward;
mod inference;
mod loss;
mod lstm;
mod masks;
mod params;

pub use forward::{embed, forward, forward_vars, ForwardOutput, HiddenState, ParamVars};
pub use inference::{evaluate_ids, scan_windows, EvalResult};
pub use loss::{lm_loss, LossTerms};
pub use lstm::{lstm_cell, lstm_step, CellVars};
pub use masks::{apply_weight_drop, DropoutRates, MaskSet};
pub use params::{init_parameters, LMParameters, LstmLayer, ModelDims};
