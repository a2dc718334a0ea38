//! Continuous-cache pointer inference.
//!
//! A trained model's next-word distribution is mixed with a distribution
//! over words that recently followed hidden states similar to the current
//! one:
//!
//! ```text
//! p_cache(w) ∝ Σ_{i : target_i = w} exp(θ · ⟨h_t, h_i⟩)
//! p(w)       = (1 − λ) · p_lm(w) + λ · p_cache(w)
//! ```
//!
//! The stored vectors are the final layer's outputs (the inputs to the tied
//! softmax). A position's own `(h_t, target)` pair is pushed only after the
//! target has been scored.

use std::collections::{BTreeMap, VecDeque};
use std::fmt::Write as _;

use crate::corpus::Vocabulary;
use crate::error::{invalid, Result};
use crate::model::{scan_windows, EvalResult, LMParameters};
use crate::numerics::Scalar;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CacheConfig {
    pub window: usize,
    pub lambda: f64,
    pub theta: f64,
}

impl CacheConfig {
    pub fn validate(&self) -> Result<()> {
        if self.window == 0 {
            return Err(invalid("cache window must be positive"));
        }
        if !(0.0..=1.0).contains(&self.lambda) {
            return Err(invalid(format!("λ must be in [0, 1], got {}", self.lambda)));
        }
        if !(self.theta >= 0.0 && self.theta.is_finite()) {
            return Err(invalid(format!("θ must be non-negative, got {}", self.theta)));
        }
        Ok(())
    }
}

/// Bounded FIFO of `(hidden vector, next-token id)` pairs.
#[derive(Debug, Clone)]
pub struct CacheWindow {
    capacity: usize,
    entries: VecDeque<(Vec<f64>, usize)>,
}

impl CacheWindow {
    pub fn new(capacity: usize) -> Self {
        Self {
            capacity,
            entries: VecDeque::with_capacity(capacity.min(1 << 16)),
        }
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Appends an entry, evicting the oldest when full.
    pub fn push(&mut self, hidden: Vec<f64>, target: usize) {
        if self.capacity == 0 {
            return;
        }
        if self.entries.len() == self.capacity {
            self.entries.pop_front();
        }
        self.entries.push_back((hidden, target));
    }

    /// Entries from oldest to newest.
    pub fn iter(&self) -> impl Iterator<Item = (&[f64], usize)> {
        self.entries.iter().map(|(h, t)| (h.as_slice(), *t))
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Cache distribution over `vocab` words for `query`, or `None` when the
/// window is empty. Words that are not a target in the window get zero.
pub fn cache_distribution(window: &CacheWindow, query: &[f64], theta: f64, vocab: usize) -> Option<Vec<f64>> {
    if window.is_empty() {
        return None;
    }
    let scores: Vec<f64> = window.iter().map(|(h, _)| theta * dot(query, h)).collect();
    let max = scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut p = vec![0.0; vocab];
    let mut z = 0.0;
    for ((_, target), s) in window.iter().zip(&scores) {
        let e = (s - max).exp();
        p[target] += e;
        z += e;
    }
    p.iter_mut().for_each(|x| *x /= z);
    Some(p)
}

/// `(1 − λ)·p_lm + λ·p_cache`; `p_lm` unchanged when the cache is absent.
pub fn mix(p_lm: &[f64], p_cache: Option<&[f64]>, lambda: f64) -> Result<Vec<f64>> {
    if !(0.0..=1.0).contains(&lambda) {
        return Err(invalid(format!("λ must be in [0, 1], got {lambda}")));
    }
    let Some(pc) = p_cache else {
        return Ok(p_lm.to_vec());
    };
    if pc.len() != p_lm.len() {
        return Err(invalid("distributions differ in length"));
    }
    if lambda == 0.0 {
        return Ok(p_lm.to_vec());
    }
    if lambda == 1.0 {
        return Ok(pc.to_vec());
    }
    Ok(p_lm
        .iter()
        .zip(pc)
        .map(|(a, b)| (1.0 - lambda) * a + lambda * b)
        .collect())
}

/// Perplexity and per-position losses of a cache-augmented pass.
#[derive(Debug, Clone, PartialEq)]
pub struct CacheEval {
    pub result: EvalResult,
    pub losses: Vec<f64>,
    pub targets: Vec<usize>,
}

/// Single sequential pass (one stream) over `ids` in windows of `bptt`.
pub fn evaluate_with_cache<F: Scalar>(
    params: &LMParameters<F>,
    ids: &[usize],
    config: &CacheConfig,
    bptt: usize,
) -> Result<CacheEval> {
    config.validate()?;
    let vocab = params.dims.vocab;
    let mut window = CacheWindow::new(config.window);
    let mut losses = Vec::new();
    let mut targets = Vec::new();
    scan_windows(params, ids, 1, bptt, |tape, out, w, logp| {
        let logits = tape.value(out.logits);
        let hidden = tape.value(out.raw_output);
        let e = params.dims.embed;
        for (pos, (&target, &lp)) in w.targets.iter().zip(logp).enumerate() {
            let h: Vec<f64> = hidden[pos * e..(pos + 1) * e].iter().map(|x| x.as_f64()).collect();
            let p_cache = if config.lambda > 0.0 {
                cache_distribution(&window, &h, config.theta, vocab)
            } else {
                None
            };
            let loss = match p_cache {
                None => -lp,
                Some(pc) => {
                    let row = &logits[pos * vocab..(pos + 1) * vocab];
                    let p_lm = softmax_row(row);
                    let p = mix(&p_lm, Some(&pc), config.lambda)?;
                    -p[target].ln()
                }
            };
            losses.push(loss);
            targets.push(target);
            window.push(h, target);
        }
        Ok(())
    })?;
    if losses.is_empty() {
        return Err(invalid("evaluation stream is too short to score"));
    }
    let sum = losses.iter().sum();
    Ok(CacheEval {
        result: EvalResult::from_loss_sum(sum, losses.len()),
        losses,
        targets,
    })
}

fn softmax_row<F: Scalar>(row: &[F]) -> Vec<f64> {
    let max = row.iter().fold(f64::NEG_INFINITY, |m, x| m.max(x.as_f64()));
    let exps: Vec<f64> = row.iter().map(|x| (x.as_f64() - max).exp()).collect();
    let z: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / z).collect()
}

/// Model outputs needed to score any cache configuration: per position the
/// LM log-probability of the target, the final hidden vector and the target.
#[derive(Debug, Clone)]
pub struct StreamTrace {
    pub log_probs: Vec<f64>,
    pub hidden: Vec<Vec<f64>>,
    pub targets: Vec<usize>,
}

impl StreamTrace {
    pub fn collect<F: Scalar>(params: &LMParameters<F>, ids: &[usize], bptt: usize) -> Result<Self> {
        let e = params.dims.embed;
        let mut trace = Self {
            log_probs: Vec::new(),
            hidden: Vec::new(),
            targets: Vec::new(),
        };
        scan_windows(params, ids, 1, bptt, |tape, out, w, logp| {
            let hidden = tape.value(out.raw_output);
            trace.log_probs.extend_from_slice(logp);
            trace.targets.extend_from_slice(&w.targets);
            trace
                .hidden
                .extend(hidden.chunks_exact(e).map(|h| h.iter().map(|x| x.as_f64()).collect::<Vec<_>>()));
            Ok(())
        })?;
        Ok(trace)
    }

    pub fn len(&self) -> usize {
        self.targets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.targets.is_empty()
    }

    /// Sum of per-position losses for every `(window, θ, λ)` combination.
    /// Only the target's probability is needed, so no full distributions
    /// are formed. Result is indexed `[window][theta][lambda]`.
    fn loss_sums(&self, windows: &[usize], thetas: &[f64], lambdas: &[f64]) -> Vec<Vec<Vec<f64>>> {
        let wmax = windows.iter().copied().max().unwrap_or(0);
        let mut sums = vec![vec![vec![0.0; lambdas.len()]; thetas.len()]; windows.len()];
        let mut dots = Vec::with_capacity(wmax);
        for t in 0..self.len() {
            let lp = self.log_probs[t];
            let p_lm = lp.exp();
            let target = self.targets[t];
            let start = t.saturating_sub(wmax);
            dots.clear();
            dots.extend((start..t).map(|i| dot(&self.hidden[t], &self.hidden[i])));
            for (wi, &w) in windows.iter().enumerate() {
                let lo = t.saturating_sub(w);
                let avail = &dots[lo - start..];
                for (ti, &theta) in thetas.iter().enumerate() {
                    let p_cache = if avail.is_empty() {
                        None
                    } else {
                        let max = avail.iter().fold(f64::NEG_INFINITY, |m, &d| m.max(theta * d));
                        let (mut z, mut hit) = (0.0, 0.0);
                        for (k, &d) in avail.iter().enumerate() {
                            let e = (theta * d - max).exp();
                            z += e;
                            if self.targets[lo + k] == target {
                                hit += e;
                            }
                        }
                        Some(hit / z)
                    };
                    for (li, &lambda) in lambdas.iter().enumerate() {
                        let loss = match p_cache {
                            Some(pc) if lambda > 0.0 => -((1.0 - lambda) * p_lm + lambda * pc).ln(),
                            _ => -lp,
                        };
                        sums[wi][ti][li] += loss;
                    }
                }
            }
        }
        sums
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CacheGrid {
    pub windows: Vec<usize>,
    pub lambdas: Vec<f64>,
    pub thetas: Vec<f64>,
}

impl Default for CacheGrid {
    fn default() -> Self {
        Self {
            windows: vec![100, 500, 2000],
            lambdas: vec![0.0, 0.05, 0.1, 0.2],
            thetas: vec![0.3, 0.662, 1.0],
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TuneResult {
    pub best: CacheConfig,
    pub best_perplexity: f64,
    /// perplexity with the cache disabled
    pub baseline_perplexity: f64,
    /// every grid point with its validation perplexity
    pub table: Vec<(CacheConfig, f64)>,
}

/// Exhaustive grid search for the lowest validation perplexity. Ties go to
/// the smaller λ, then the smaller window, then the smaller θ.
pub fn tune_cache<F: Scalar>(params: &LMParameters<F>, valid: &[usize], grid: &CacheGrid, bptt: usize) -> Result<TuneResult> {
    let trace = StreamTrace::collect(params, valid, bptt)?;
    tune_on_trace(&trace, grid)
}

pub fn tune_on_trace(trace: &StreamTrace, grid: &CacheGrid) -> Result<TuneResult> {
    if grid.windows.is_empty() || grid.lambdas.is_empty() || grid.thetas.is_empty() {
        return Err(invalid("cache grid is empty"));
    }
    if !grid.lambdas.contains(&0.0) {
        return Err(invalid("cache grid must include λ = 0"));
    }
    if trace.is_empty() {
        return Err(invalid("validation stream is too short to score"));
    }
    let mut configs = Vec::new();
    for &window in &grid.windows {
        for &theta in &grid.thetas {
            for &lambda in &grid.lambdas {
                let c = CacheConfig { window, lambda, theta };
                c.validate()?;
                configs.push(c);
            }
        }
    }
    let sums = trace.loss_sums(&grid.windows, &grid.thetas, &grid.lambdas);
    let n = trace.len();
    let mut table = Vec::with_capacity(configs.len());
    for (wi, by_theta) in sums.iter().enumerate() {
        for (ti, by_lambda) in by_theta.iter().enumerate() {
            for (li, &sum) in by_lambda.iter().enumerate() {
                let c = CacheConfig {
                    window: grid.windows[wi],
                    theta: grid.thetas[ti],
                    lambda: grid.lambdas[li],
                };
                table.push((c, EvalResult::from_loss_sum(sum, n).perplexity));
            }
        }
    }
    let baseline_perplexity =
        EvalResult::from_loss_sum(trace.log_probs.iter().map(|lp| -lp).sum(), n).perplexity;
    let (best, best_perplexity) = table
        .iter()
        .copied()
        .min_by(|(a, pa), (b, pb)| {
            pa.total_cmp(pb)
                .then(a.lambda.total_cmp(&b.lambda))
                .then(a.window.cmp(&b.window))
                .then(a.theta.total_cmp(&b.theta))
        })
        .expect("non-empty grid");
    Ok(TuneResult {
        best,
        best_perplexity,
        baseline_perplexity,
        table,
    })
}

/// Per-word cumulative loss difference between two aligned passes.
#[derive(Debug, Clone, PartialEq)]
pub struct WordDelta {
    pub word: String,
    pub count: usize,
    /// Σ (loss without cache − loss with cache); positive where the cache helped
    pub delta: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct WordLossReport {
    /// sorted by `delta`, largest first
    pub rows: Vec<WordDelta>,
}

pub fn word_loss_diff(
    losses_base: &[f64],
    losses_cache: &[f64],
    targets: &[usize],
    vocab: &Vocabulary,
) -> Result<WordLossReport> {
    if losses_base.len() != losses_cache.len() || losses_base.len() != targets.len() {
        return Err(invalid(format!(
            "misaligned inputs: {} base losses, {} cache losses, {} targets",
            losses_base.len(),
            losses_cache.len(),
            targets.len()
        )));
    }
    let mut acc: BTreeMap<usize, (usize, f64)> = BTreeMap::new();
    for ((&b, &c), &t) in losses_base.iter().zip(losses_cache).zip(targets) {
        let e = acc.entry(t).or_insert((0, 0.0));
        e.0 += 1;
        e.1 += b - c;
    }
    let mut rows = acc
        .into_iter()
        .map(|(id, (count, delta))| {
            let word = vocab
                .token(id)
                .map(str::to_owned)
                .ok_or_else(|| invalid(format!("target id {id} not in vocabulary")))?;
            Ok(WordDelta { word, count, delta })
        })
        .collect::<Result<Vec<_>>>()?;
    rows.sort_by(|a, b| b.delta.total_cmp(&a.delta).then_with(|| a.word.cmp(&b.word)));
    Ok(WordLossReport { rows })
}

impl WordLossReport {
    /// The `k` words the cache helped most.
    pub fn top_gains(&self, k: usize) -> &[WordDelta] {
        &self.rows[..k.min(self.rows.len())]
    }

    /// The `k` words the cache hurt most, worst first.
    pub fn top_losses(&self, k: usize) -> Vec<&WordDelta> {
        self.rows.iter().rev().take(k).collect()
    }

    /// `word \t count \t Δloss` for every word, sorted descending.
    pub fn to_tsv(&self) -> String {
        let mut out = String::from("word\tcount\tdelta_loss\n");
        for r in &self.rows {
            let _ = writeln!(out, "{}\t{}\t{:.2}", r.word, r.count, r.delta);
        }
        out
    }

    /// Two side-by-side columns: the `k` most deteriorated words on the left,
    /// the `k` most improved on the right.
    pub fn extremes_tsv(&self, k: usize) -> String {
        let left = self.top_losses(k);
        let right = self.top_gains(k);
        let mut out = String::from("word\tcount\tdelta_loss\tword\tcount\tdelta_loss\n");
        for i in 0..left.len().max(right.len()) {
            let cell = |r: Option<&WordDelta>| match r {
                Some(r) => format!("{}\t{}\t{:.2}", r.word, r.count, r.delta),
                None => "\t\t".to_string(),
            };
            let _ = writeln!(out, "{}\t{}", cell(left.get(i).copied()), cell(right.get(i)));
        }
        out
    }
}
