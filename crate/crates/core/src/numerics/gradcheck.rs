use crate::error::{Error, Result};

use super::{Tape, Tensor, Var};

/// Outcome of comparing tape gradients to central differences.
#[derive(Debug, Clone)]
pub struct GradCheckReport {
    pub max_rel_error: f64,
    /// (tensor index, element index) of the worst coordinate.
    pub worst: (usize, usize),
    pub analytic: Vec<Vec<f64>>,
    pub numeric: Vec<Vec<f64>>,
    pub coordinates: usize,
    pub tolerance: f64,
}

impl GradCheckReport {
    pub fn passed(&self) -> bool {
        self.max_rel_error < self.tolerance
    }
}

// Gradients smaller than this are compared absolutely.
const REL_FLOOR: f64 = 1e-6;

fn rel_error(a: f64, n: f64) -> f64 {
    let diff = (a - n).abs();
    if diff == 0.0 {
        return 0.0;
    }
    diff / a.abs().max(n.abs()).max(REL_FLOOR)
}

fn evaluate<G>(f: &G, point: &[Tensor<f64>]) -> Result<f64>
where
    G: Fn(&mut Tape<f64>, &[Var]) -> Result<Var>,
{
    let mut tape = Tape::new();
    let vars: Vec<Var> = point.iter().map(|t| tape.leaf(t)).collect();
    let out = f(&mut tape, &vars)?;
    if tape.value(out).len() != 1 {
        return Err(Error::NonScalarLoss(tape.shape(out).to_vec()));
    }
    Ok(tape.scalar(out))
}

/// Checks the tape gradient of a scalar function of several tensors against
/// central finite differences, coordinate by coordinate.
///
/// `f` receives one [`Var`] per tensor of `point` and must be deterministic;
/// two evaluations at `point` that differ bitwise are rejected.
pub fn check_gradient<G>(f: G, point: &[Tensor<f64>], step: f64, tolerance: f64) -> Result<GradCheckReport>
where
    G: Fn(&mut Tape<f64>, &[Var]) -> Result<Var>,
{
    let first = evaluate(&f, point)?;
    let second = evaluate(&f, point)?;
    if first.to_bits() != second.to_bits() {
        return Err(Error::NonDeterministic { first, second });
    }

    let leaves: Vec<Tensor<f64>> = point.iter().map(|t| t.clone().into_param()).collect();
    let mut tape = Tape::new();
    let vars: Vec<Var> = leaves.iter().map(|t| tape.leaf(t)).collect();
    let out = f(&mut tape, &vars)?;
    let grads = tape.backward(out)?;
    let analytic: Vec<Vec<f64>> = vars
        .iter()
        .zip(&leaves)
        .map(|(&v, t)| grads.get(v).map(<[f64]>::to_vec).unwrap_or_else(|| vec![0.0; t.numel()]))
        .collect();

    let mut probe: Vec<Tensor<f64>> = point.to_vec();
    let mut numeric = Vec::with_capacity(point.len());
    let mut max_rel_error = 0.0;
    let mut worst = (0, 0);
    let mut coordinates = 0;
    #[allow(clippy::needless_range_loop)]
    for ti in 0..probe.len() {
        let mut col = Vec::with_capacity(probe[ti].numel());
        for ei in 0..probe[ti].numel() {
            let orig = probe[ti].data()[ei];
            probe[ti].data_mut()[ei] = orig + step;
            let plus = evaluate(&f, &probe)?;
            probe[ti].data_mut()[ei] = orig - step;
            let minus = evaluate(&f, &probe)?;
            probe[ti].data_mut()[ei] = orig;
            let d = (plus - minus) / (2.0 * step);
            let err = rel_error(analytic[ti][ei], d);
            if err > max_rel_error {
                max_rel_error = err;
                worst = (ti, ei);
            }
            col.push(d);
            coordinates += 1;
        }
        numeric.push(col);
    }

    Ok(GradCheckReport {
        max_rel_error,
        worst,
        analytic,
        numeric,
        coordinates,
        tolerance,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::Rng;

    fn random(rng: &mut Rng, shape: &[usize]) -> Tensor<f64> {
        Tensor::from_fn(shape, || rng.uniform_range(-1.0, 1.0))
    }

    #[test]
    fn squared_norm_is_exact() {
        let mut rng = Rng::new(3);
        let w = random(&mut rng, &[5]);
        let r = check_gradient(
            |t, v| {
                let sq = t.mul(v[0], v[0])?;
                Ok(t.sum(sq))
            },
            &[w],
            1e-5,
            1e-8,
        )
        .unwrap();
        assert!(r.passed(), "{}", r.max_rel_error);
    }

    #[test]
    fn constant_function_has_zero_gradients() {
        let w = Tensor::<f64>::full(&[3], 0.7);
        let r = check_gradient(
            |t, _| t.constant_from(&[1], vec![4.0]),
            &[w],
            1e-5,
            1e-8,
        )
        .unwrap();
        assert!(r.analytic[0].iter().all(|&x| x == 0.0));
        assert!(r.numeric[0].iter().all(|&x| x == 0.0));
        assert_eq!(r.max_rel_error, 0.0);
    }

    #[test]
    fn rejects_nondeterministic_function() {
        let calls = std::cell::Cell::new(0.0);
        let w = Tensor::<f64>::full(&[1], 1.0);
        let err = check_gradient(
            |t, v| {
                calls.set(calls.get() + 1.0);
                let c = t.constant_from(&[1], vec![calls.get()])?;
                let y = t.mul(v[0], c)?;
                Ok(t.sum(y))
            },
            &[w],
            1e-5,
            1e-8,
        )
        .unwrap_err();
        assert!(matches!(err, Error::NonDeterministic { .. }));
    }

    // Every op kind, composed on random inputs.
    #[test]
    fn all_op_kinds_match_finite_differences() {
        let mut rng = Rng::new(11);
        let a = random(&mut rng, &[3, 4]);
        let b = random(&mut rng, &[4, 5]);
        let c = random(&mut rng, &[5, 4]);
        let bias = random(&mut rng, &[5]);
        let table = random(&mut rng, &[6, 5]);
        let scale = [0.0, 1.25, 2.0, -0.5];
        let r = check_gradient(
            |t, v| {
                let ab = t.matmul(v[0], v[1])?; // 3x5
                let abt = t.matmul_t(v[0], v[2])?; // 3x5
                let s = t.add(ab, abt)?;
                let s = t.add_row_bias(s, v[3])?;
                let sg = t.sigmoid(s);
                let th = t.tanh(s);
                let m = t.mul(sg, th)?;
                let d = t.sub(m, ab)?;
                let d = t.scale(d, 1.5);
                let left = t.slice_cols(d, 0, 2)?;
                let right = t.slice_cols(d, 3, 5)?;
                let lr = t.concat_rows(&[left, right])?; // 6x2
                let top = t.slice_rows(lr, 1, 5)?; // 4x2
                let top = t.scale_rows(top, &scale)?;
                let norms = t.row_l2_norm(top);
                let emb = t.gather_rows(v[4], &[1, 3, 1, 5])?; // 4x5
                let head = t_first_rows(t, s)?;
                let logits = t.add(emb, head)?;
                let ce = t.softmax_cross_entropy(logits, &[0, 4, 2, 2])?;
                let n = t.mean(norms);
                let tot = t.concat_rows(&[ce, n])?;
                Ok(t.sum(tot))
            },
            &[a, b, c, bias, table],
            1e-5,
            1e-6,
        )
        .unwrap();
        assert!(r.passed(), "max rel error {} at {:?}", r.max_rel_error, r.worst);
    }

    fn t_first_rows(t: &mut Tape<f64>, s: Var) -> Result<Var> {
        let r = t.slice_rows(s, 0, 3)?;
        let extra = t.slice_rows(s, 2, 3)?;
        t.concat_rows(&[r, extra])
    }
}
