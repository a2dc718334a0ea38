//! Tokenised corpora, continuous batching and variable-length BPTT.

mod batch;
mod bptt;
mod vocab;

pub use batch::{batchify, next_window, BatchedCorpus, Window};
pub use bptt::{rescale_lr, sample_bptt_length, BpttSample, BpttSchedule};
pub use vocab::{tokenize, Vocabulary, EOS, UNK};

use std::path::{Path, PathBuf};

use crate::error::{Error, Result};

/// Train/validation/test id streams sharing one vocabulary.
#[derive(Debug, Clone)]
pub struct Corpus {
    pub vocab: Vocabulary,
    pub train: Vec<usize>,
    pub valid: Vec<usize>,
    pub test: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CorpusPaths {
    pub train: PathBuf,
    pub valid: PathBuf,
    pub test: PathBuf,
}

impl CorpusPaths {
    /// `train.txt`, `valid.txt` and `test.txt` inside `dir`.
    pub fn in_dir(dir: impl AsRef<Path>) -> Self {
        let dir = dir.as_ref();
        Self {
            train: dir.join("train.txt"),
            valid: dir.join("valid.txt"),
            test: dir.join("test.txt"),
        }
    }

    pub fn check_exist(&self) -> Result<()> {
        for p in [&self.train, &self.valid, &self.test] {
            if !p.is_file() {
                return Err(Error::Corpus(format!("missing corpus file {}", p.display())));
            }
        }
        Ok(())
    }
}

impl Corpus {
    /// Builds the vocabulary from the training text and encodes all three
    /// splits with it; unseen tokens map to `<unk>`.
    pub fn from_texts(train: &str, valid: &str, test: &str) -> Result<Self> {
        let vocab = Vocabulary::build(train)?;
        Ok(Self {
            train: vocab.encode(train),
            valid: vocab.encode(valid),
            test: vocab.encode(test),
            vocab,
        })
    }

    pub fn load(paths: &CorpusPaths) -> Result<Self> {
        paths.check_exist()?;
        let read = |p: &Path| std::fs::read_to_string(p).map_err(Error::from);
        Self::from_texts(&read(&paths.train)?, &read(&paths.valid)?, &read(&paths.test)?)
    }

    /// Re-encodes text with an existing vocabulary, e.g. one restored from a
    /// checkpoint.
    pub fn load_with_vocab(paths: &CorpusPaths, vocab: Vocabulary) -> Result<Self> {
        paths.check_exist()?;
        let read = |p: &Path| std::fs::read_to_string(p).map_err(Error::from);
        Ok(Self {
            train: vocab.encode(&read(&paths.train)?),
            valid: vocab.encode(&read(&paths.valid)?),
            test: vocab.encode(&read(&paths.test)?),
            vocab,
        })
    }
}
