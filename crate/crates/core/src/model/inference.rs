use crate::corpus::{batchify, next_window, Window};
use crate::error::{invalid, Result};
use crate::numerics::{row_log_softmax_at, Scalar, Tape};

use super::{forward, ForwardOutput, HiddenState, LMParameters, MaskSet};

/// Perplexity of a token stream.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EvalResult {
    pub perplexity: f64,
    pub mean_loss: f64,
    pub tokens: usize,
}

impl EvalResult {
    pub fn from_loss_sum(sum: f64, tokens: usize) -> Self {
        let mean_loss = sum / tokens as f64;
        Self {
            perplexity: mean_loss.exp(),
            mean_loss,
            tokens,
        }
    }
}

/// Dropout-free pass over `ids` in fixed windows of `bptt` steps with
/// `batch` parallel streams, carrying state across windows. `visit` sees
/// each window's tape, forward output and natural-log target probabilities.
///
/// No random numbers are drawn.
pub fn scan_windows<F, V>(params: &LMParameters<F>, ids: &[usize], batch: usize, bptt: usize, mut visit: V) -> Result<()>
where
    F: Scalar,
    V: FnMut(&Tape<F>, &ForwardOutput<F>, &Window, &[f64]) -> Result<()>,
{
    if bptt == 0 {
        return Err(invalid("evaluation window must be positive"));
    }
    let data = batchify(ids, batch)?;
    let masks = MaskSet::none(params.dims.layers);
    let mut state = HiddenState::zeros(params.dims, batch);
    let mut cursor = 0;
    while let Some(w) = next_window(&data, cursor, bptt) {
        let mut tape = Tape::new();
        let out = forward(&mut tape, params, &masks, &w.inputs, batch, &state)?;
        let logp = row_log_softmax_at(tape.value(out.logits), params.dims.vocab, &w.targets);
        visit(&tape, &out, &w, &logp)?;
        state = out.state;
        cursor = w.next_cursor;
    }
    Ok(())
}

/// Perplexity `exp(mean −ln p(target))` with all dropout disabled.
pub fn evaluate_ids<F: Scalar>(params: &LMParameters<F>, ids: &[usize], batch: usize, bptt: usize) -> Result<EvalResult> {
    let mut sum = 0.0;
    let mut tokens = 0;
    scan_windows(params, ids, batch, bptt, |_, _, _, logp| {
        for &lp in logp {
            sum -= lp;
        }
        tokens += logp.len();
        Ok(())
    })?;
    if tokens == 0 {
        return Err(invalid("evaluation stream is too short to score"));
    }
    Ok(EvalResult::from_loss_sum(sum, tokens))
}
