use std::collections::HashMap;
use std::path::Path;

use crate::error::{Error, Result};

pub const EOS: &str = "<eos>";
pub const UNK: &str = "<unk>";

/// Whitespace tokens with `<eos>` appended at the end of every line.
pub fn tokenize(text: &str) -> impl Iterator<Item = &str> {
    text.lines()
        .flat_map(|line| line.split_whitespace().chain(std::iter::once(EOS)))
}

/// Dense bijection between tokens and ids `0..len`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Vocabulary {
    ids: HashMap<String, usize>,
    tokens: Vec<String>,
}

impl Vocabulary {
    /// Assigns ids in order of first appearance; `<unk>` is appended if the
    /// text never contains it.
    pub fn build(text: &str) -> Result<Self> {
        let mut vocab = Self {
            ids: HashMap::new(),
            tokens: Vec::new(),
        };
        for tok in tokenize(text) {
            vocab.insert(tok);
        }
        if vocab.tokens.is_empty() {
            return Err(Error::Corpus("cannot build a vocabulary from empty text".into()));
        }
        vocab.insert(EOS);
        vocab.insert(UNK);
        Ok(vocab)
    }

    /// Like [`Vocabulary::build`] but keeps only the `max_words` most frequent
    /// tokens (ties broken by first appearance); the rest map to `<unk>`.
    pub fn build_capped(text: &str, max_words: usize) -> Result<Self> {
        let full = Self::build(text)?;
        let mut counts = vec![0usize; full.len()];
        for tok in tokenize(text) {
            counts[full.ids[tok]] += 1;
        }
        let mut order: Vec<usize> = (0..full.len())
            .filter(|&i| full.tokens[i] != EOS && full.tokens[i] != UNK)
            .collect();
        order.sort_by(|&a, &b| counts[b].cmp(&counts[a]).then(a.cmp(&b)));
        order.truncate(max_words);
        order.sort_unstable();
        let mut vocab = Self {
            ids: HashMap::new(),
            tokens: Vec::new(),
        };
        for i in order {
            vocab.insert(&full.tokens[i]);
        }
        vocab.insert(EOS);
        vocab.insert(UNK);
        Ok(vocab)
    }

    pub fn from_tokens(tokens: Vec<String>) -> Result<Self> {
        let mut ids = HashMap::with_capacity(tokens.len());
        for (i, t) in tokens.iter().enumerate() {
            if ids.insert(t.clone(), i).is_some() {
                return Err(Error::Corpus(format!("duplicate vocabulary entry {t:?}")));
            }
        }
        for special in [EOS, UNK] {
            if !ids.contains_key(special) {
                return Err(Error::Corpus(format!("vocabulary lacks {special}")));
            }
        }
        Ok(Self { ids, tokens })
    }

    fn insert(&mut self, tok: &str) -> usize {
        if let Some(&id) = self.ids.get(tok) {
            return id;
        }
        let id = self.tokens.len();
        self.ids.insert(tok.to_owned(), id);
        self.tokens.push(tok.to_owned());
        id
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn get(&self, tok: &str) -> Option<usize> {
        self.ids.get(tok).copied()
    }

    /// Id of `tok`, or of `<unk>` for out-of-vocabulary tokens.
    pub fn id(&self, tok: &str) -> usize {
        self.get(tok).unwrap_or_else(|| self.unk_id())
    }

    pub fn token(&self, id: usize) -> Option<&str> {
        self.tokens.get(id).map(String::as_str)
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    pub fn eos_id(&self) -> usize {
        self.ids[EOS]
    }

    pub fn unk_id(&self) -> usize {
        self.ids[UNK]
    }

    pub fn encode(&self, text: &str) -> Vec<usize> {
        tokenize(text).map(|t| self.id(t)).collect()
    }

    /// One token per line; the line number is the id.
    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut out = self.tokens.join("\n");
        out.push('\n');
        std::fs::write(path, out)?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::from_tokens(text.lines().map(str::to_owned).collect())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hand_counted_example() {
        let v = Vocabulary::build("a b a\n").unwrap();
        assert_eq!(v.tokens(), &["a", "b", EOS, UNK]);
        assert_eq!(v.encode("a b a\n"), vec![0, 1, 0, 2]);
    }

    #[test]
    fn unknown_tokens_map_to_unk() {
        let v = Vocabulary::build("a b\n").unwrap();
        assert_eq!(v.encode("a zebra b\n"), vec![0, v.unk_id(), 1, v.eos_id()]);
    }

    #[test]
    fn empty_text_rejected() {
        assert!(Vocabulary::build("").is_err());
    }

    #[test]
    fn literal_unk_is_not_duplicated() {
        let v = Vocabulary::build("x <unk> y\n").unwrap();
        assert_eq!(v.len(), 4);
        assert_eq!(v.id("<unk>"), 1);
    }

    #[test]
    fn capped_keeps_most_frequent() {
        let v = Vocabulary::build_capped("c a a b b b c c c d\n", 2).unwrap();
        assert_eq!(v.tokens(), &["c", "b", EOS, UNK]);
        assert_eq!(v.id("a"), v.unk_id());
    }

    #[test]
    fn file_round_trip() {
        let v = Vocabulary::build("the cat sat\non the mat\n").unwrap();
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("vocab.txt");
        v.save(&p).unwrap();
        assert_eq!(Vocabulary::load(&p).unwrap(), v);
    }

    #[test]
    fn from_tokens_validates() {
        assert!(Vocabulary::from_tokens(vec!["a".into(), "a".into()]).is_err());
        assert!(Vocabulary::from_tokens(vec!["a".into(), EOS.into()]).is_err());
        assert!(Vocabulary::from_tokens(vec![EOS.into(), UNK.into()]).is_ok());
    }
}
