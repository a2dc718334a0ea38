//! Synthetic corpora in the one-sentence-per-line, space-separated format
//! used by the standard word-level benchmarks.

use crate::numerics::Rng;

/// Lines totalling about `tokens` words (counting the end-of-line marker)
/// from a first-order Markov chain whose transition rows are Zipfian over a
/// random permutation of `vocab` words.
pub fn markov_text(tokens: usize, vocab: usize, seed: u64) -> String {
    let mut rng = Rng::new(seed);
    let vocab = vocab.max(2);
    let words: Vec<String> = (0..vocab).map(|i| format!("w{i}")).collect();
    // each state prefers a handful of successors
    let fanout = vocab.min(24);
    let succ: Vec<Vec<usize>> = (0..vocab)
        .map(|_| (0..fanout).map(|_| zipf(&mut rng, vocab, 1.1)).collect())
        .collect();
    let mut out = String::new();
    let mut produced = 0;
    let mut state = 0;
    while produced < tokens {
        let len = 4 + rng.below(16);
        let mut line = Vec::with_capacity(len);
        for _ in 0..len {
            state = succ[state][zipf(&mut rng, fanout, 1.3)];
            line.push(words[state].as_str());
        }
        out.push_str(&line.join(" "));
        out.push('\n');
        produced += len + 1;
    }
    out
}

/// Train, validation and test texts cut from one Markov stream, sized in
/// tokens.
pub fn markov_splits(train: usize, valid: usize, test: usize, vocab: usize, seed: u64) -> [String; 3] {
    let text = markov_text(train + valid + test, vocab, seed);
    split_lines(&text, [train, valid, test])
}

/// Cuts `text` at line boundaries into consecutive parts of roughly the
/// given token counts (end-of-line markers included).
pub fn split_lines<const N: usize>(text: &str, sizes: [usize; N]) -> [String; N] {
    let mut parts: [String; N] = std::array::from_fn(|_| String::new());
    let mut part = 0;
    let mut used = 0;
    for line in text.lines() {
        while part + 1 < N && used >= sizes[part] {
            part += 1;
            used = 0;
        }
        parts[part].push_str(line);
        parts[part].push('\n');
        used += line.split_whitespace().count() + 1;
    }
    parts
}

/// Documents of `doc_len` words in which a few document-specific rare words
/// recur often, on top of a common filler vocabulary. A recency cache can
/// predict the rare words; a small language model cannot.
pub fn repetitive_text(docs: usize, doc_len: usize, seed: u64) -> String {
    let mut rng = Rng::new(seed);
    let filler: Vec<String> = (0..40).map(|i| format!("f{i}")).collect();
    let pool: Vec<String> = (0..400).map(|i| format!("n{i}")).collect();
    let mut out = String::new();
    for _ in 0..docs {
        let topic: Vec<&str> = (0..4).map(|_| pool[rng.below(pool.len())].as_str()).collect();
        let mut written = 0;
        while written < doc_len {
            let len = 6 + rng.below(8);
            let line: Vec<&str> = (0..len)
                .map(|_| {
                    if rng.uniform() < 0.35 {
                        topic[rng.below(topic.len())]
                    } else {
                        filler[zipf(&mut rng, filler.len(), 1.0)].as_str()
                    }
                })
                .collect();
            out.push_str(&line.join(" "));
            out.push('\n');
            written += len + 1;
        }
    }
    out
}

/// A fixed text of exactly `tokens` tokens (including end-of-line markers)
/// over `vocab` distinct words.
pub fn memorization_text(tokens: usize, vocab: usize, seed: u64) -> String {
    let mut rng = Rng::new(seed);
    let mut out = String::new();
    let mut produced = 0;
    while produced < tokens {
        let len = (3 + rng.below(8)).min(tokens - produced - 1).max(1);
        let line: Vec<String> = (0..len).map(|_| format!("m{}", rng.below(vocab))).collect();
        out.push_str(&line.join(" "));
        out.push('\n');
        produced += len + 1;
    }
    out
}

/// Rank in `0..n` with probability proportional to `1 / (rank + 1)^s`.
fn zipf(rng: &mut Rng, n: usize, s: f64) -> usize {
    let total: f64 = (1..=n).map(|k| (k as f64).powf(-s)).sum();
    let mut u = rng.uniform() * total;
    for k in 1..=n {
        u -= (k as f64).powf(-s);
        if u <= 0.0 {
            return k - 1;
        }
    }
    n - 1
}
