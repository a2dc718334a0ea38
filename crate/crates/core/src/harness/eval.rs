use crate::corpus::Corpus;
use crate::error::{invalid, Result};
use crate::model::{evaluate_ids, EvalResult};
use crate::numerics::Scalar;

use super::checkpoint::Checkpoint;
use super::train::check_vocab;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Split {
    Train,
    Valid,
    Test,
}

impl Split {
    pub fn ids(self, corpus: &Corpus) -> &[usize] {
        match self {
            Self::Train => &corpus.train,
            Self::Valid => &corpus.valid,
            Self::Test => &corpus.test,
        }
    }
}

impl std::str::FromStr for Split {
    type Err = crate::Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "train" => Ok(Self::Train),
            "valid" => Ok(Self::Valid),
            "test" => Ok(Self::Test),
            _ => Err(invalid(format!("unknown split {s:?}; expected train, valid or test"))),
        }
    }
}

/// Dropout-free perplexity of a checkpoint's parameters on one split.
pub fn evaluate<F: Scalar>(
    ckpt: &Checkpoint<F>,
    corpus: &Corpus,
    split: Split,
    batch: usize,
    bptt: usize,
) -> Result<EvalResult> {
    check_vocab(&ckpt.vocab, corpus)?;
    evaluate_ids(&ckpt.params, split.ids(corpus), batch, bptt)
}
