use crate::error::{invalid, Result};

/// Token ids laid out as `streams` parallel streams of equal length.
///
/// Stream `b` holds `ids[b * stream_len .. (b + 1) * stream_len]`; the
/// trailing `N mod streams` tokens are dropped.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BatchedCorpus {
    data: Vec<usize>,
    streams: usize,
    stream_len: usize,
    source_len: usize,
}

impl BatchedCorpus {
    pub fn streams(&self) -> usize {
        self.streams
    }

    pub fn stream_len(&self) -> usize {
        self.stream_len
    }

    pub fn source_len(&self) -> usize {
        self.source_len
    }

    pub fn dropped(&self) -> usize {
        self.source_len - self.streams * self.stream_len
    }

    pub fn get(&self, stream: usize, t: usize) -> usize {
        self.data[stream * self.stream_len + t]
    }

    pub fn stream(&self, b: usize) -> &[usize] {
        &self.data[b * self.stream_len..(b + 1) * self.stream_len]
    }

    /// Concatenation of all streams: the kept prefix of the source.
    pub fn unbatchify(&self) -> Vec<usize> {
        self.data.clone()
    }
}

pub fn batchify(ids: &[usize], streams: usize) -> Result<BatchedCorpus> {
    if streams == 0 {
        return Err(invalid("batch size must be positive"));
    }
    if streams > ids.len() {
        return Err(invalid(format!(
            "batch size {streams} exceeds corpus length {}",
            ids.len()
        )));
    }
    let stream_len = ids.len() / streams;
    Ok(BatchedCorpus {
        data: ids[..streams * stream_len].to_vec(),
        streams,
        stream_len,
        source_len: ids.len(),
    })
}

/// One BPTT window. Ids are stored time-major: position `t * batch + b`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Window {
    pub inputs: Vec<usize>,
    pub targets: Vec<usize>,
    pub len: usize,
    pub batch: usize,
    pub next_cursor: usize,
}

impl Window {
    pub fn input(&self, b: usize, t: usize) -> usize {
        self.inputs[t * self.batch + b]
    }

    pub fn target(&self, b: usize, t: usize) -> usize {
        self.targets[t * self.batch + b]
    }

    /// Input ids of timestep `t` across the batch.
    pub fn step_inputs(&self, t: usize) -> &[usize] {
        &self.inputs[t * self.batch..(t + 1) * self.batch]
    }
}

/// Window of up to `len` steps starting at `cursor`, shortened to fit the
/// stream. `None` once fewer than two tokens remain (end of epoch).
pub fn next_window(corpus: &BatchedCorpus, cursor: usize, len: usize) -> Option<Window> {
    if cursor + 1 >= corpus.stream_len {
        return None;
    }
    let len = len.max(1).min(corpus.stream_len - 1 - cursor);
    let b = corpus.streams;
    let mut inputs = Vec::with_capacity(len * b);
    let mut targets = Vec::with_capacity(len * b);
    for t in cursor..cursor + len {
        for s in 0..b {
            inputs.push(corpus.get(s, t));
            targets.push(corpus.get(s, t + 1));
        }
    }
    Some(Window {
        inputs,
        targets,
        len,
        batch: b,
        next_cursor: cursor + len,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn exact_division() {
        let ids: Vec<usize> = (0..100).collect();
        let c = batchify(&ids, 4).unwrap();
        assert_eq!((c.streams(), c.stream_len(), c.dropped()), (4, 25, 0));
    }

    #[test]
    fn remainder_dropped() {
        let ids: Vec<usize> = (0..103).collect();
        let c = batchify(&ids, 4).unwrap();
        assert_eq!((c.stream_len(), c.dropped()), (25, 3));
    }

    #[test]
    fn layout() {
        let ids: Vec<usize> = (0..10).collect();
        let c = batchify(&ids, 2).unwrap();
        assert_eq!(c.stream(0), &[0, 1, 2, 3, 4]);
        assert_eq!(c.stream(1), &[5, 6, 7, 8, 9]);
    }

    #[test]
    fn too_many_streams() {
        assert!(batchify(&[1, 2, 3], 4).is_err());
        assert!(batchify(&[1, 2, 3], 0).is_err());
    }

    #[test]
    fn shift_by_one() {
        let c = batchify(&[0, 1, 2, 3], 1).unwrap();
        let w = next_window(&c, 0, 2).unwrap();
        assert_eq!(w.inputs, vec![0, 1]);
        assert_eq!(w.targets, vec![1, 2]);
        assert_eq!(w.next_cursor, 2);
        assert!(next_window(&c, 3, 2).is_none());
    }

    #[test]
    fn epoch_covers_stream_once() {
        let ids: Vec<usize> = (0..50).collect();
        let c = batchify(&ids, 1).unwrap();
        let lens = [7, 3, 11, 1, 9];
        let (mut cursor, mut seen, mut i) = (0, Vec::new(), 0);
        while let Some(w) = next_window(&c, cursor, lens[i % lens.len()]) {
            seen.extend_from_slice(&w.inputs);
            cursor = w.next_cursor;
            i += 1;
        }
        assert_eq!(seen, (0..49).collect::<Vec<_>>());
    }

    proptest! {
        #[test]
        fn round_trip_recovers_prefix(n in 1usize..300, b in 1usize..17) {
            prop_assume!(b <= n);
            let ids: Vec<usize> = (0..n).map(|i| (i * 7919) % 101).collect();
            let c = batchify(&ids, b).unwrap();
            prop_assert_eq!(c.unbatchify(), ids[..b * (n / b)].to_vec());
            for s in 0..b {
                for t in 0..c.stream_len() {
                    prop_assert_eq!(c.get(s, t), ids[s * (n / b) + t]);
                }
            }
        }
    }
}
