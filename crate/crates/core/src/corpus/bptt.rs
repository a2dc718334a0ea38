use crate::error::{invalid, Result};
use crate::numerics::Rng;

/// Two-step random BPTT length: pick the full base length with probability
/// `p_full` (else half of it), then jitter with a gaussian of `std` and clamp.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BpttSchedule {
    pub base_seq: usize,
    pub p_full: f64,
    pub std: f64,
    pub min_len: usize,
    pub max_len: usize,
}

/// A sampled length and which base it came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BpttSample {
    pub full_base: bool,
    pub len: usize,
}

impl BpttSchedule {
    /// Clamps default to `[min(5, base_seq), base_seq + ceil(4 * std)]`.
    pub fn new(base_seq: usize, p_full: f64, std: f64) -> Result<Self> {
        let min_len = base_seq.min(5);
        let max_len = base_seq + (4.0 * std).ceil() as usize;
        Self::with_clamps(base_seq, p_full, std, min_len, max_len)
    }

    pub fn with_clamps(base_seq: usize, p_full: f64, std: f64, min_len: usize, max_len: usize) -> Result<Self> {
        if base_seq == 0 {
            return Err(invalid("base sequence length must be positive"));
        }
        if !(p_full > 0.0 && p_full <= 1.0) {
            return Err(invalid(format!("p must be in (0, 1], got {p_full}")));
        }
        if !(std >= 0.0 && std.is_finite()) {
            return Err(invalid(format!("stddev must be non-negative, got {std}")));
        }
        if min_len == 0 || min_len > max_len {
            return Err(invalid(format!("bad clamps [{min_len}, {max_len}]")));
        }
        Ok(Self {
            base_seq,
            p_full,
            std,
            min_len,
            max_len,
        })
    }

    /// Always `base_seq`; used for evaluation and the static-length ablation.
    pub fn fixed(base_seq: usize) -> Result<Self> {
        Self::with_clamps(base_seq, 1.0, 0.0, base_seq, base_seq)
    }

    pub fn sample(&self, rng: &mut Rng) -> BpttSample {
        let full_base = rng.uniform() < self.p_full;
        let base = if full_base {
            self.base_seq as f64
        } else {
            self.base_seq as f64 / 2.0
        };
        let raw = rng.normal(base, self.std).round();
        let len = raw.clamp(self.min_len as f64, self.max_len as f64) as usize;
        BpttSample { full_base, len }
    }
}

pub fn sample_bptt_length(schedule: &BpttSchedule, rng: &mut Rng) -> usize {
    schedule.sample(rng).len
}

/// Linear learning-rate rescaling by window length.
pub fn rescale_lr(base_lr: f64, sampled_len: usize, base_seq: usize) -> f64 {
    base_lr * sampled_len as f64 / base_seq as f64
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn degenerate_schedule_is_constant() {
        let s = BpttSchedule::new(70, 1.0, 0.0).unwrap();
        let mut rng = Rng::new(5);
        assert!((0..1000).all(|_| sample_bptt_length(&s, &mut rng) == 70));
    }

    #[test]
    fn samples_stay_within_clamps() {
        let s = BpttSchedule::with_clamps(10, 0.5, 30.0, 3, 12).unwrap();
        let mut rng = Rng::new(5);
        for _ in 0..10_000 {
            let l = sample_bptt_length(&s, &mut rng);
            assert!((3..=12).contains(&l));
        }
    }

    #[test]
    fn default_clamps() {
        let s = BpttSchedule::new(70, 0.95, 5.0).unwrap();
        assert_eq!((s.min_len, s.max_len), (5, 90));
    }

    #[test]
    fn invalid_schedules() {
        assert!(BpttSchedule::new(70, 0.0, 5.0).is_err());
        assert!(BpttSchedule::new(70, 1.1, 5.0).is_err());
        assert!(BpttSchedule::new(70, 0.9, -1.0).is_err());
        assert!(BpttSchedule::with_clamps(70, 0.9, 1.0, 10, 5).is_err());
        assert!(BpttSchedule::new(0, 0.9, 1.0).is_err());
    }

    #[test]
    fn mixture_mean_near_68() {
        // 0.95 * 70 + 0.05 * 35 = 68.25
        let s = BpttSchedule::new(70, 0.95, 5.0).unwrap();
        let mut rng = Rng::new(2017);
        let n = 100_000;
        let mean = (0..n).map(|_| sample_bptt_length(&s, &mut rng) as f64).sum::<f64>() / n as f64;
        assert!((66.0..=70.0).contains(&mean), "{mean}");
    }

    #[test]
    fn lr_rescaling() {
        assert_eq!(rescale_lr(30.0, 70, 70), 30.0);
        assert_eq!(rescale_lr(30.0, 35, 70), 15.0);
        assert_eq!(rescale_lr(30.0, 77, 70), 33.0);
    }
}
