//! Clipped SGD and non-monotonically triggered iterate averaging.

use crate::error::{invalid, Error, Result};
use crate::numerics::{Scalar, Tensor};

/// Euclidean norm of all gradients taken together.
pub fn global_grad_norm<F: Scalar>(tensors: &[&mut Tensor<F>]) -> f64 {
    tensors
        .iter()
        .filter_map(|t| t.grad())
        .flat_map(|g| g.iter())
        .map(|x| x.as_f64() * x.as_f64())
        .sum::<f64>()
        .sqrt()
}

/// Rescales every gradient by `max_norm / g` when the global norm `g`
/// exceeds `max_norm`. Returns the norm before clipping.
pub fn clip_global_norm<F: Scalar>(tensors: &mut [&mut Tensor<F>], max_norm: f64) -> Result<f64> {
    if !(max_norm > 0.0) {
        return Err(invalid(format!("clip norm must be positive, got {max_norm}")));
    }
    let norm = global_grad_norm(tensors);
    if norm > max_norm {
        let s = F::from_f64_lossy(max_norm / norm);
        for t in tensors.iter_mut() {
            if let Some(g) = t.grad_mut() {
                g.iter_mut().for_each(|x| *x = *x * s);
            }
        }
    }
    Ok(norm)
}

/// `w ← w − lr·grad`, then zeroes the gradients.
pub fn sgd_step<F: Scalar>(tensors: &mut [&mut Tensor<F>], lr: f64) {
    let lr = F::from_f64_lossy(lr);
    for t in tensors.iter_mut() {
        let (w, g) = t.data_and_grad_mut();
        if let Some(g) = g {
            for (w, g) in w.iter_mut().zip(g.iter_mut()) {
                *w = *w - lr * *g;
                *g = F::zero();
            }
        }
    }
}

/// Decoupled L2 decay: `w ← w − lr·λ·w`, applied outside gradient clipping.
pub fn decay_weights<F: Scalar>(tensors: &mut [&mut Tensor<F>], lr: f64, weight_decay: f64) {
    if weight_decay == 0.0 {
        return;
    }
    let factor = F::from_f64_lossy(1.0 - lr * weight_decay);
    for t in tensors.iter_mut() {
        t.data_mut().iter_mut().for_each(|w| *w = *w * factor);
    }
}

/// How often validation is computed.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LogInterval {
    /// once per pass over the training data
    Epoch,
    /// every `n` SGD steps
    Steps(u64),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OptimConfig {
    pub lr: f64,
    pub clip_norm: f64,
    pub log_interval: LogInterval,
    pub nonmono: usize,
    pub max_epochs: usize,
}

impl OptimConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.lr > 0.0) || !(self.clip_norm > 0.0) {
            return Err(invalid("learning rate and clip norm must be positive"));
        }
        if self.nonmono == 0 || self.log_interval == LogInterval::Steps(0) {
            return Err(invalid("non-monotone interval and logging interval must be at least 1"));
        }
        Ok(())
    }
}

/// The non-monotone condition: with `t = logs.len()` previous checks,
/// `t > n` and `v` exceeds the minimum of the last `n + 1` logged values.
pub fn nonmonotone_criterion(logs: &[f64], v: f64, n: usize) -> bool {
    let t = logs.len();
    if t <= n {
        return false;
    }
    let best = logs[t - n - 1..].iter().copied().fold(f64::INFINITY, f64::min);
    v > best
}

/// Bookkeeping for NT-ASGD.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainerState {
    /// SGD steps taken
    pub k: u64,
    /// validation checks recorded
    pub t: u64,
    /// step at which averaging was triggered
    pub trigger: Option<u64>,
    pub logs: Vec<f64>,
    /// running sum of iterates since the trigger, per parameter tensor
    pub iterate_sum: Vec<Vec<f64>>,
    pub avg_count: u64,
}

/// Parameters returned by [`TrainerState::finalize`].
#[derive(Debug, Clone, PartialEq)]
pub struct Averaged<F> {
    pub values: Vec<Vec<F>>,
    /// true when nothing was averaged and the last iterate is returned
    pub fallback: bool,
    pub count: u64,
}

impl Default for TrainerState {
    fn default() -> Self {
        Self::new()
    }
}

impl TrainerState {
    pub fn new() -> Self {
        Self {
            k: 0,
            t: 0,
            trigger: None,
            logs: Vec::new(),
            iterate_sum: Vec::new(),
            avg_count: 0,
        }
    }

    pub fn triggered(&self) -> bool {
        self.trigger.is_some()
    }

    /// Records that one SGD step was taken.
    pub fn step(&mut self) {
        self.k += 1;
    }

    /// Logging-boundary check. Sets the trigger to the current step when the
    /// non-monotone condition holds, then appends `v`. The trigger is never
    /// changed once set. Returns whether averaging became active on this call.
    pub fn nt_asgd_check(&mut self, v: f64, n: usize) -> bool {
        let fire = self.trigger.is_none() && nonmonotone_criterion(&self.logs, v, n);
        if fire {
            self.trigger = Some(self.k);
        }
        self.logs.push(v);
        self.t += 1;
        fire
    }

    /// Starts averaging at the current step regardless of validation history.
    pub fn force_trigger(&mut self) {
        if self.trigger.is_none() {
            self.trigger = Some(self.k);
        }
    }

    /// Adds the current iterate to the running sum.
    pub fn accumulate_average<F: Scalar>(&mut self, tensors: &[&Tensor<F>]) -> Result<()> {
        if self.trigger.is_none() {
            return Err(invalid("averaging accumulated before the trigger fired"));
        }
        if self.iterate_sum.is_empty() {
            self.iterate_sum = tensors.iter().map(|t| vec![0.0; t.numel()]).collect();
        }
        if self.iterate_sum.len() != tensors.len()
            || self.iterate_sum.iter().zip(tensors).any(|(s, t)| s.len() != t.numel())
        {
            return Err(Error::ShapeMismatch {
                op: "accumulate_average",
                lhs: self.iterate_sum.iter().map(Vec::len).collect(),
                rhs: tensors.iter().map(|t| t.numel()).collect(),
            });
        }
        for (sum, t) in self.iterate_sum.iter_mut().zip(tensors) {
            for (s, w) in sum.iter_mut().zip(t.data()) {
                *s += w.as_f64();
            }
        }
        self.avg_count += 1;
        Ok(())
    }

    /// Average of the accumulated iterates, or `current` when nothing was
    /// accumulated.
    pub fn finalize<F: Scalar>(&self, current: &[&Tensor<F>]) -> Averaged<F> {
        if self.avg_count == 0 {
            log::warn!("averaging never triggered; returning the last iterate");
            return Averaged {
                values: current.iter().map(|t| t.data().to_vec()).collect(),
                fallback: true,
                count: 0,
            };
        }
        let n = self.avg_count as f64;
        Averaged {
            values: self
                .iterate_sum
                .iter()
                .map(|s| s.iter().map(|&x| F::from_f64_lossy(x / n)).collect())
                .collect(),
            fallback: false,
            count: self.avg_count,
        }
    }
}

/// Early-stopping rule for fine-tuning: the same non-monotone condition,
/// read as "stop" instead of "start averaging".
#[derive(Debug, Clone, Default, PartialEq)]
pub struct StoppingRule {
    pub logs: Vec<f64>,
    pub nonmono: usize,
}

impl StoppingRule {
    pub fn new(nonmono: usize) -> Self {
        Self {
            logs: Vec::new(),
            nonmono,
        }
    }

    /// Records a validation value; returns true when training should stop.
    pub fn check(&mut self, v: f64) -> bool {
        let stop = nonmonotone_criterion(&self.logs, v, self.nonmono);
        self.logs.push(v);
        stop
    }
}
