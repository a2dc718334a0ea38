use rand::{Rng as _, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{invalid, Result};

use super::{Scalar, Tensor};

/// Seeded, counter-based random stream.
///
/// The full state is `(seed, word position)`, so a stream can be saved and
/// resumed bit-exactly. Mask sampling calls are counted separately so callers
/// can assert that evaluation paths never draw masks.
#[derive(Debug, Clone)]
pub struct Rng {
    seed: u64,
    inner: ChaCha8Rng,
    mask_draws: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RngState {
    pub seed: u64,
    pub word_pos: u128,
    pub mask_draws: u64,
}

impl Rng {
    pub fn new(seed: u64) -> Self {
        Self {
            seed,
            inner: ChaCha8Rng::seed_from_u64(seed),
            mask_draws: 0,
        }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn state(&self) -> RngState {
        RngState {
            seed: self.seed,
            word_pos: self.inner.get_word_pos(),
            mask_draws: self.mask_draws,
        }
    }

    pub fn from_state(state: RngState) -> Self {
        let mut inner = ChaCha8Rng::seed_from_u64(state.seed);
        inner.set_word_pos(state.word_pos);
        Self {
            seed: state.seed,
            inner,
            mask_draws: state.mask_draws,
        }
    }

    /// Number of dropout masks sampled from this stream so far.
    pub fn mask_draws(&self) -> u64 {
        self.mask_draws
    }

    /// Uniform in `[0, 1)`.
    pub fn uniform(&mut self) -> f64 {
        self.inner.random::<f64>()
    }

    pub fn uniform_range(&mut self, lo: f64, hi: f64) -> f64 {
        lo + (hi - lo) * self.uniform()
    }

    pub fn normal(&mut self, mean: f64, std: f64) -> f64 {
        let z: f64 = StandardNormal.sample(&mut self.inner);
        mean + std * z
    }

    pub fn bernoulli(&mut self, p: f64) -> bool {
        self.uniform() < p
    }

    /// Uniform integer in `[0, n)`.
    pub fn below(&mut self, n: usize) -> usize {
        self.inner.random_range(0..n)
    }

    pub fn shuffle<T>(&mut self, items: &mut [T]) {
        for i in (1..items.len()).rev() {
            let j = self.below(i + 1);
            items.swap(i, j);
        }
    }
}

/// Inverted-dropout mask: each entry is `1/keep_prob` with probability
/// `keep_prob`, else zero.
pub fn sample_bernoulli_mask<F: Scalar>(
    rng: &mut Rng,
    shape: &[usize],
    keep_prob: f64,
) -> Result<Tensor<F>> {
    if !(keep_prob > 0.0 && keep_prob <= 1.0) {
        return Err(invalid(format!("keep probability must be in (0, 1], got {keep_prob}")));
    }
    rng.mask_draws += 1;
    if keep_prob == 1.0 {
        return Ok(Tensor::full(shape, F::one()));
    }
    let scale = F::from_f64_lossy(1.0 / keep_prob);
    Ok(Tensor::from_fn(shape, || {
        if rng.bernoulli(keep_prob) {
            scale
        } else {
            F::zero()
        }
    }))
}
