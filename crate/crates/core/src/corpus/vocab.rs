use std::collections::{BTreeMap, HashMap};
use std::path::Path;

use super::{Corpus, Sentence};
use crate::error::{read_to_string, write_file, Error, Result};

pub const BOS: &str = "<bos>";
pub const EOS: &str = "<eos>";
pub const UNK: &str = "<unk>";

/// Token ↔ id bijection with the three special tokens at ids 0, 1, 2.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Vocabulary {
    tokens: Vec<String>,
    id_of: HashMap<String, usize>,
}

impl Vocabulary {
    pub const BOS_ID: usize = 0;
    pub const EOS_ID: usize = 1;
    pub const UNK_ID: usize = 2;

    fn with_specials() -> Vocabulary {
        let mut v = Vocabulary {
            tokens: Vec::new(),
            id_of: HashMap::new(),
        };
        for s in [BOS, EOS, UNK] {
            v.insert(s);
        }
        v
    }

    fn insert(&mut self, token: &str) -> bool {
        if self.id_of.contains_key(token) {
            return false;
        }
        self.id_of.insert(token.to_string(), self.tokens.len());
        self.tokens.push(token.to_string());
        true
    }

    /// Tokens seen at least `min_count` times, most frequent first, ties
    /// broken lexicographically.
    pub fn build(corpus: &Corpus, min_count: usize) -> Result<Vocabulary> {
        if corpus.is_empty() {
            return Err(Error::Empty("corpus"));
        }
        let mut counts: BTreeMap<&str, usize> = BTreeMap::new();
        for s in corpus.sentences() {
            for t in s.norms() {
                *counts.entry(t).or_default() += 1;
            }
        }
        let mut ranked: Vec<(&str, usize)> = counts
            .into_iter()
            .filter(|&(_, c)| c >= min_count)
            .collect();
        ranked.sort_by(|a, b| b.1.cmp(&a.1).then(a.0.cmp(b.0)));
        let mut v = Vocabulary::with_specials();
        for (t, _) in ranked {
            v.insert(t);
        }
        Ok(v)
    }

    /// Adds any tokens of `corpus` not yet present, in first-seen order.
    pub fn extend_with(&mut self, corpus: &Corpus) {
        for s in corpus.sentences() {
            for t in s.norms() {
                self.insert(t);
            }
        }
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn id(&self, token: &str) -> usize {
        self.id_of.get(token).copied().unwrap_or(Self::UNK_ID)
    }

    pub fn get(&self, token: &str) -> Option<usize> {
        self.id_of.get(token).copied()
    }

    pub fn token(&self, id: usize) -> Option<&str> {
        self.tokens.get(id).map(String::as_str)
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    pub fn encode(&self, sentence: &Sentence) -> Vec<usize> {
        sentence.norms().map(|t| self.id(t)).collect()
    }

    /// Fraction of corpus tokens that map to the unknown id.
    pub fn unknown_rate(&self, corpus: &Corpus) -> f64 {
        let mut total = 0usize;
        let mut unk = 0usize;
        for s in corpus.sentences() {
            for t in s.norms() {
                total += 1;
                if self.get(t).is_none() {
                    unk += 1;
                }
            }
        }
        if total == 0 {
            0.0
        } else {
            unk as f64 / total as f64
        }
    }

    /// One token per line in id order.
    pub fn save(&self, path: &Path) -> Result<()> {
        let mut s = self.tokens.join("\n");
        s.push('\n');
        write_file(path, s)
    }

    pub fn load(path: &Path) -> Result<Vocabulary> {
        let text = read_to_string(path)?;
        let mut v = Vocabulary {
            tokens: Vec::new(),
            id_of: HashMap::new(),
        };
        for (i, line) in text.lines().enumerate() {
            if !v.insert(line) {
                return Err(Error::Parse {
                    file: path.display().to_string(),
                    line: i + 1,
                    msg: format!("duplicate token {line:?}"),
                });
            }
        }
        if v.tokens.len() < 3 || v.tokens[..3] != [BOS, EOS, UNK] {
            return Err(Error::invalid("vocabulary file must start with <bos>, <eos>, <unk>"));
        }
        Ok(v)
    }
}
