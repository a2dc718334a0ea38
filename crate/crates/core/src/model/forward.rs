use crate::error::{invalid, Error, Result};
use crate::numerics::{Gradients, Scalar, Tape, Tensor, Var};

use super::{CellVars, LMParameters, MaskSet, ModelDims};

/// Per-layer `(h, c)` carried between windows, detached from any tape.
#[derive(Debug, Clone, PartialEq)]
pub struct HiddenState<F> {
    pub h: Vec<Tensor<F>>,
    pub c: Vec<Tensor<F>>,
}

impl<F: Scalar> HiddenState<F> {
    pub fn zeros(dims: ModelDims, batch: usize) -> Self {
        let shapes: Vec<[usize; 2]> = (0..dims.layers).map(|l| [batch, dims.layer_output(l)]).collect();
        Self {
            h: shapes.iter().map(|s| Tensor::zeros(s)).collect(),
            c: shapes.iter().map(|s| Tensor::zeros(s)).collect(),
        }
    }

    pub fn batch(&self) -> usize {
        self.h.first().map_or(0, |t| t.shape()[0])
    }
}

/// Tape handles of the raw parameters of one pass.
#[derive(Debug, Clone)]
pub struct ParamVars {
    pub embedding: Var,
    pub cells: Vec<CellVars>,
    pub decoder_bias: Var,
}

impl ParamVars {
    pub fn register<F: Scalar>(tape: &mut Tape<F>, params: &LMParameters<F>) -> Self {
        let embedding = tape.leaf(&params.embedding);
        let cells = params
            .layers
            .iter()
            .map(|l| CellVars {
                w_input: tape.leaf(&l.w_input),
                w_hidden: tape.leaf(&l.w_hidden),
                bias: tape.leaf(&l.bias),
            })
            .collect();
        let decoder_bias = tape.leaf(&params.decoder_bias);
        Self {
            embedding,
            cells,
            decoder_bias,
        }
    }

    /// Inverse of [`ParamVars::vars`] for a model with `layers` layers.
    pub fn from_vars(vars: &[Var], layers: usize) -> Result<Self> {
        if vars.len() != 3 * layers + 2 {
            return Err(invalid(format!(
                "{} handles do not describe a {layers}-layer model",
                vars.len()
            )));
        }
        Ok(Self {
            embedding: vars[0],
            cells: vars[1..1 + 3 * layers]
                .chunks_exact(3)
                .map(|c| CellVars {
                    w_input: c[0],
                    w_hidden: c[1],
                    bias: c[2],
                })
                .collect(),
            decoder_bias: vars[3 * layers + 1],
        })
    }

    /// Handles in the order of [`LMParameters::tensors`].
    pub fn vars(&self) -> Vec<Var> {
        let mut out = vec![self.embedding];
        for c in &self.cells {
            out.extend([c.w_input, c.w_hidden, c.bias]);
        }
        out.push(self.decoder_bias);
        out
    }
}

impl<F: Scalar> LMParameters<F> {
    /// Adds the gradients of one pass into every parameter's `grad`.
    pub fn accumulate_grads(&mut self, grads: &Gradients<F>, vars: &ParamVars) -> Result<()> {
        for (t, v) in self.tensors_mut().into_iter().zip(vars.vars()) {
            grads.accumulate_into(v, t)?;
        }
        Ok(())
    }
}

/// Result of one forward pass over a window.
#[derive(Debug, Clone)]
pub struct ForwardOutput<F> {
    /// `len·batch x vocab`
    pub logits: Var,
    /// final-layer outputs before output dropout, `len·batch x embed`
    pub raw_output: Var,
    /// final-layer outputs after output dropout
    pub dropped_output: Var,
    /// per layer, the stacked inputs after dropout
    pub layer_inputs: Vec<Var>,
    /// per layer, the recurrent matrix actually used at every step
    pub recurrent: Vec<Var>,
    pub params: ParamVars,
    pub state: HiddenState<F>,
    pub len: usize,
    pub batch: usize,
}

/// Embedding lookup for time-major `ids`, with optional per-word scaling
/// (embedding dropout: a dropped word is zero at every position).
pub fn embed<F: Scalar>(tape: &mut Tape<F>, table: Var, ids: &[usize], row_mask: Option<&[F]>) -> Result<Var> {
    let rows = tape.gather_rows(table, ids)?;
    match row_mask {
        None => Ok(rows),
        Some(mask) => {
            let scale: Vec<F> = ids.iter().map(|&id| mask[id]).collect();
            tape.scale_rows(rows, &scale)
        }
    }
}

fn tiled_mask<F: Scalar>(tape: &mut Tape<F>, mask: &Tensor<F>, len: usize, batch: usize, width: usize) -> Result<Var> {
    if mask.shape() != [batch, width] {
        return Err(Error::ShapeMismatch {
            op: "dropout mask",
            lhs: mask.shape().to_vec(),
            rhs: vec![batch, width],
        });
    }
    let mut data = Vec::with_capacity(len * mask.numel());
    for _ in 0..len {
        data.extend_from_slice(mask.data());
    }
    tape.constant_from(&[len * batch, width], data)
}

fn locked_dropout<F: Scalar>(
    tape: &mut Tape<F>,
    x: Var,
    mask: Option<&Tensor<F>>,
    len: usize,
    batch: usize,
) -> Result<Var> {
    match mask {
        None => Ok(x),
        Some(m) => {
            let width = tape.shape(x)[1];
            let tiled = tiled_mask(tape, m, len, batch, width)?;
            tape.mul(x, tiled)
        }
    }
}

/// Runs the model over one window of time-major `inputs` (`len·batch` ids).
pub fn forward<F: Scalar>(
    tape: &mut Tape<F>,
    params: &LMParameters<F>,
    masks: &MaskSet<F>,
    inputs: &[usize],
    batch: usize,
    state: &HiddenState<F>,
) -> Result<ForwardOutput<F>> {
    let pv = ParamVars::register(tape, params);
    forward_vars(tape, params.dims, pv, masks, inputs, batch, state)
}

/// [`forward`] over parameters already on the tape.
pub fn forward_vars<F: Scalar>(
    tape: &mut Tape<F>,
    dims: ModelDims,
    pv: ParamVars,
    masks: &MaskSet<F>,
    inputs: &[usize],
    batch: usize,
    state: &HiddenState<F>,
) -> Result<ForwardOutput<F>> {
    if batch == 0 || inputs.is_empty() || !inputs.len().is_multiple_of(batch) {
        return Err(invalid(format!(
            "{} inputs do not form whole timesteps of batch {batch}",
            inputs.len()
        )));
    }
    if state.batch() != batch || state.h.len() != dims.layers {
        return Err(invalid(format!(
            "stale hidden state: batch {} x {} layers, expected batch {batch} x {} layers",
            state.batch(),
            state.h.len(),
            dims.layers
        )));
    }
    if masks.weight.len() != dims.layers || masks.hidden.len() + 1 != dims.layers {
        return Err(invalid("mask set does not match the layer count"));
    }
    let len = inputs.len() / batch;

    let mut x = embed(tape, pv.embedding, inputs, masks.embedding.as_deref())?;

    let mut layer_inputs = Vec::with_capacity(dims.layers);
    let mut recurrent = Vec::with_capacity(dims.layers);
    let mut new_h = Vec::with_capacity(dims.layers);
    let mut new_c = Vec::with_capacity(dims.layers);
    for (l, cell) in pv.cells.iter().enumerate() {
        let mask = if l == 0 {
            masks.input.as_ref()
        } else {
            masks.hidden[l - 1].as_ref()
        };
        x = locked_dropout(tape, x, mask, len, batch)?;
        layer_inputs.push(x);

        let u = match &masks.weight[l] {
            None => cell.w_hidden,
            Some(m) => {
                let mv = tape.constant(m);
                tape.mul(cell.w_hidden, mv)?
            }
        };
        recurrent.push(u);

        let xw = tape.matmul(x, cell.w_input)?;
        let projected = tape.add_row_bias(xw, cell.bias)?;
        let mut h = tape.constant(&state.h[l]);
        let mut c = tape.constant(&state.c[l]);
        let mut outputs = Vec::with_capacity(len);
        for t in 0..len {
            let p_t = tape.slice_rows(projected, t * batch, (t + 1) * batch)?;
            (h, c) = super::lstm_step(tape, p_t, h, c, u)?;
            outputs.push(h);
        }
        new_h.push(tape.to_tensor(h));
        new_c.push(tape.to_tensor(c));
        x = tape.concat_rows(&outputs)?;
    }

    let raw_output = x;
    let dropped_output = locked_dropout(tape, raw_output, masks.output.as_ref(), len, batch)?;
    let scores = tape.matmul_t(dropped_output, pv.embedding)?;
    let logits = tape.add_row_bias(scores, pv.decoder_bias)?;

    Ok(ForwardOutput {
        logits,
        raw_output,
        dropped_output,
        layer_inputs,
        recurrent,
        params: pv,
        state: HiddenState { h: new_h, c: new_c },
        len,
        batch,
    })
}
