use crate::error::Result;
use crate::numerics::{Scalar, Tape, Var};

/// Tape handles of one layer's weights. `w_hidden` may be the DropConnect
/// product rather than the raw parameter.
#[derive(Debug, Clone, Copy)]
pub struct CellVars {
    pub w_input: Var,
    pub w_hidden: Var,
    pub bias: Var,
}

/// One LSTM step given the input projection `x·W + b` (`batch x 4·width`).
///
/// ```text
/// i, f, o = σ(xW + hU + b)     c̃ = tanh(xW + hU + b)
/// c = i ⊙ c̃ + f ⊙ c_prev       h = o ⊙ tanh(c)
/// ```
pub fn lstm_step<F: Scalar>(
    tape: &mut Tape<F>,
    projected: Var,
    h_prev: Var,
    c_prev: Var,
    w_hidden: Var,
) -> Result<(Var, Var)> {
    let width = tape.shape(w_hidden)[0];
    let rec = tape.matmul(h_prev, w_hidden)?;
    let gates = tape.add(projected, rec)?;
    let i = tape.slice_cols(gates, 0, width)?;
    let f = tape.slice_cols(gates, width, 2 * width)?;
    let o = tape.slice_cols(gates, 2 * width, 3 * width)?;
    let g = tape.slice_cols(gates, 3 * width, 4 * width)?;
    let i = tape.sigmoid(i);
    let f = tape.sigmoid(f);
    let o = tape.sigmoid(o);
    let g = tape.tanh(g);
    let ig = tape.mul(i, g)?;
    let fc = tape.mul(f, c_prev)?;
    let c = tape.add(ig, fc)?;
    let tc = tape.tanh(c);
    let h = tape.mul(o, tc)?;
    Ok((h, c))
}

pub fn lstm_cell<F: Scalar>(
    tape: &mut Tape<F>,
    x: Var,
    h_prev: Var,
    c_prev: Var,
    w: &CellVars,
) -> Result<(Var, Var)> {
    let xw = tape.matmul(x, w.w_input)?;
    let projected = tape.add_row_bias(xw, w.bias)?;
    lstm_step(tape, projected, h_prev, c_prev, w.w_hidden)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::{check_gradient, Rng, Tensor};

    fn zero_cell(tape: &mut Tape<f64>, input: usize, width: usize) -> CellVars {
        CellVars {
            w_input: tape.constant(&Tensor::zeros(&[input, 4 * width])),
            w_hidden: tape.constant(&Tensor::zeros(&[width, 4 * width])),
            bias: tape.constant(&Tensor::zeros(&[4 * width])),
        }
    }

    #[test]
    fn zero_weights_unit_cell() {
        let mut tape = Tape::new();
        let w = zero_cell(&mut tape, 2, 1);
        let x = tape.constant(&Tensor::full(&[1, 2], 0.3));
        let h0 = tape.constant(&Tensor::zeros(&[1, 1]));
        let c0 = tape.constant(&Tensor::full(&[1, 1], 1.0));
        let (h, c) = lstm_cell(&mut tape, x, h0, c0, &w).unwrap();
        assert!((tape.value(c)[0] - 0.5).abs() < 1e-15);
        let want = 0.5 * 0.5f64.tanh();
        assert!((tape.value(h)[0] - want).abs() < 1e-15);
        assert!((want - 0.2311).abs() < 1e-4);
    }

    #[test]
    fn zero_fixed_point() {
        let mut tape = Tape::new();
        let w = zero_cell(&mut tape, 3, 2);
        let x = tape.constant(&Tensor::full(&[2, 3], -1.0));
        let z = tape.constant(&Tensor::zeros(&[2, 2]));
        let (h, c) = lstm_cell(&mut tape, x, z, z, &w).unwrap();
        assert!(tape.value(h).iter().chain(tape.value(c)).all(|&v| v == 0.0));
    }

    #[test]
    fn shape_mismatch_rejected() {
        let mut tape = Tape::new();
        let w = zero_cell(&mut tape, 3, 2);
        let x = tape.constant(&Tensor::zeros(&[2, 4]));
        let z = tape.constant(&Tensor::zeros(&[2, 2]));
        assert!(lstm_cell(&mut tape, x, z, z, &w).is_err());
    }

    #[test]
    fn cell_gradients_match_finite_differences() {
        let mut rng = Rng::new(21);
        let (b, input, width) = (3, 4, 5);
        let mut r = |shape: &[usize]| Tensor::<f64>::from_fn(shape, || rng.uniform_range(-0.8, 0.8));
        let point = vec![
            r(&[b, input]),
            r(&[b, width]),
            r(&[b, width]),
            r(&[input, 4 * width]),
            r(&[width, 4 * width]),
            r(&[4 * width]),
            r(&[b, width]),
            r(&[b, width]),
        ];
        let report = check_gradient(
            |t, v| {
                let w = CellVars {
                    w_input: v[3],
                    w_hidden: v[4],
                    bias: v[5],
                };
                let (h, c) = lstm_cell(t, v[0], v[1], v[2], &w)?;
                // second step to exercise the recurrence
                let (h2, c2) = lstm_cell(t, v[0], h, c, &w)?;
                let a = t.mul(h2, v[6])?;
                let bb = t.mul(c2, v[7])?;
                let s = t.add(a, bb)?;
                Ok(t.sum(s))
            },
            &point,
            1e-5,
            1e-4,
        )
        .unwrap();
        assert!(report.passed(), "{} at {:?}", report.max_rel_error, report.worst);
    }
}
