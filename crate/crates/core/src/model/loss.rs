use crate::error::{invalid, Result};
use crate::numerics::{Scalar, Tape, Var};

/// Components of the training objective.
#[derive(Debug, Clone, Copy)]
pub struct LossTerms {
    pub total: Var,
    pub cross_entropy: Var,
    pub ar: Option<Var>,
    pub tar: Option<Var>,
}

/// Cross-entropy averaged over all `len·batch` positions, plus
///
/// * AR:  `α · mean_{t,b} ‖m ⊙ h_t‖₂` over the dropped final-layer outputs;
/// * TAR: `β · mean_{t,b} ‖h_t − h_{t+1}‖₂` over the raw final-layer outputs
///   (zero when the window has a single step).
///
/// Inputs are stacked time-major with `batch` rows per step.
#[allow(clippy::too_many_arguments)]
pub fn lm_loss<F: Scalar>(
    tape: &mut Tape<F>,
    logits: Var,
    targets: &[usize],
    raw_output: Var,
    dropped_output: Var,
    batch: usize,
    alpha: f64,
    beta: f64,
) -> Result<LossTerms> {
    if !(alpha >= 0.0 && beta >= 0.0) {
        return Err(invalid(format!("AR/TAR coefficients must be non-negative, got {alpha}, {beta}")));
    }
    let rows = tape.shape(raw_output)[0];
    if batch == 0 || rows == 0 || !rows.is_multiple_of(batch) {
        return Err(invalid(format!("{rows} output rows do not split into batch {batch}")));
    }
    let len = rows / batch;

    let cross_entropy = tape.softmax_cross_entropy(logits, targets)?;
    let mut total = cross_entropy;

    let ar = if alpha > 0.0 {
        let norms = tape.row_l2_norm(dropped_output);
        let mean = tape.mean(norms);
        let term = tape.scale(mean, F::from_f64_lossy(alpha));
        total = tape.add(total, term)?;
        Some(term)
    } else {
        None
    };

    let tar = if beta > 0.0 && len > 1 {
        let now = tape.slice_rows(raw_output, 0, rows - batch)?;
        let next = tape.slice_rows(raw_output, batch, rows)?;
        let diff = tape.sub(now, next)?;
        let norms = tape.row_l2_norm(diff);
        let mean = tape.mean(norms);
        let term = tape.scale(mean, F::from_f64_lossy(beta));
        total = tape.add(total, term)?;
        Some(term)
    } else {
        None
    };

    Ok(LossTerms {
        total,
        cross_entropy,
        ar,
        tar,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::Tensor;

    fn c(tape: &mut Tape<f64>, shape: &[usize], data: &[f64]) -> Var {
        tape.constant_from(shape, data.to_vec()).unwrap()
    }

    #[test]
    fn pure_cross_entropy_of_uniform_logits() {
        let mut tape = Tape::<f64>::new();
        let logits = tape.constant(&Tensor::zeros(&[2, 4]));
        let h = tape.constant(&Tensor::full(&[2, 3], 1.0));
        let l = lm_loss(&mut tape, logits, &[1, 3], h, h, 1, 0.0, 0.0).unwrap();
        assert!((tape.scalar(l.total) - 1.3863).abs() < 1e-4);
        assert_eq!(tape.scalar(l.total), tape.scalar(l.cross_entropy));
    }

    #[test]
    fn activation_regularization_single_step() {
        let mut tape = Tape::<f64>::new();
        let logits = tape.constant(&Tensor::zeros(&[1, 4]));
        let h = c(&mut tape, &[1, 2], &[3.0, 4.0]);
        let l = lm_loss(&mut tape, logits, &[0], h, h, 1, 2.0, 1.0).unwrap();
        assert_eq!(tape.scalar(l.ar.unwrap()), 10.0);
        assert!(l.tar.is_none());
        assert!((tape.scalar(l.total) - (4f64.ln() + 10.0)).abs() < 1e-12);
    }

    #[test]
    fn temporal_regularization_pair() {
        let mut tape = Tape::<f64>::new();
        let logits = tape.constant(&Tensor::zeros(&[2, 4]));
        let h = c(&mut tape, &[2, 2], &[1.0, 1.0, 1.0, 2.0]);
        let l = lm_loss(&mut tape, logits, &[0, 0], h, h, 1, 0.0, 1.0).unwrap();
        assert_eq!(tape.scalar(l.tar.unwrap()), 1.0);
    }

    #[test]
    fn negative_coefficients_rejected() {
        let mut tape = Tape::<f64>::new();
        let logits = tape.constant(&Tensor::zeros(&[1, 4]));
        let h = tape.constant(&Tensor::zeros(&[1, 2]));
        assert!(lm_loss(&mut tape, logits, &[0], h, h, 1, -1.0, 0.0).is_err());
        assert!(lm_loss(&mut tape, logits, &[0], h, h, 1, 0.0, -0.5).is_err());
    }

    #[test]
    fn tar_pairs_consecutive_steps_within_streams() {
        // batch 2: stream 0 moves by (0, 3), stream 1 by (4, 0) → mean 3.5
        let mut tape = Tape::<f64>::new();
        let logits = tape.constant(&Tensor::zeros(&[4, 3]));
        let h = c(&mut tape, &[4, 2], &[0.0, 0.0, 1.0, 1.0, 0.0, 3.0, 5.0, 1.0]);
        let l = lm_loss(&mut tape, logits, &[0, 1, 2, 0], h, h, 2, 0.0, 1.0).unwrap();
        assert_eq!(tape.scalar(l.tar.unwrap()), 3.5);
    }
}
