//! Sentences, corpora, vocabularies and the synthetic skewed-corpus generator.

mod splits;
mod synthetic;
mod vocab;

use std::fmt;
use std::path::Path;

use crate::error::{read_to_string, write_file, Error, Result};

pub use splits::{split_validation_by_gender, swap_gender_split};
pub use synthetic::{
    generate_synthetic_corpus, parse_word_classes, Grammar, SkewSpec, SKEW_KEYS, Stereotype, WordClass,
    DESCRIPTOR_FRAMES, OCCUPATION_FRAMES, SPEECH_FRAMES, SUBJECT_PAIRS,
};
pub use vocab::{Vocabulary, BOS, EOS, UNK};

/// Case pattern of a surface token, re-applied after substitution.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Casing {
    Lower,
    Capitalized,
    Upper,
}

impl Casing {
    pub fn of(surface: &str) -> Casing {
        let letters: Vec<char> = surface.chars().filter(|c| c.is_alphabetic()).collect();
        if letters.len() > 1 && letters.iter().all(|c| c.is_uppercase()) {
            Casing::Upper
        } else if surface.chars().next().is_some_and(|c| c.is_uppercase()) {
            Casing::Capitalized
        } else {
            Casing::Lower
        }
    }

    pub fn apply(self, lower: &str) -> String {
        match self {
            Casing::Lower => lower.to_string(),
            Casing::Upper => lower.to_uppercase(),
            Casing::Capitalized => {
                let mut chars = lower.chars();
                match chars.next() {
                    Some(first) => first.to_uppercase().chain(chars).collect(),
                    None => String::new(),
                }
            }
        }
    }
}

/// One token: the original surface form plus its lowercase canonical form.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Token {
    surface: String,
    norm: String,
}

impl Token {
    pub fn new(surface: impl Into<String>) -> Token {
        let surface = surface.into();
        let norm = surface.to_lowercase();
        Token { surface, norm }
    }

    pub fn surface(&self) -> &str {
        &self.surface
    }

    pub fn norm(&self) -> &str {
        &self.norm
    }

    pub fn casing(&self) -> Casing {
        Casing::of(&self.surface)
    }
}

fn is_punct(c: char) -> bool {
    c.is_ascii_punctuation() || matches!(c, '“' | '”' | '‘' | '’' | '…' | '—' | '–' | '«' | '»')
}

/// Whitespace tokenizer that detaches leading and trailing punctuation as
/// single-character tokens. Internal punctuation (`son-in-law`, `don't`) stays.
pub fn tokenize(text: &str) -> Vec<Token> {
    let mut out = Vec::new();
    for chunk in text.split_whitespace() {
        let chars: Vec<char> = chunk.chars().collect();
        let mut start = 0;
        let mut end = chars.len();
        while start < end && is_punct(chars[start]) {
            start += 1;
        }
        if start == end {
            out.extend(chars.iter().map(|c| Token::new(c.to_string())));
            continue;
        }
        while end > start && is_punct(chars[end - 1]) {
            end -= 1;
        }
        out.extend(chars[..start].iter().map(|c| Token::new(c.to_string())));
        out.push(Token::new(chars[start..end].iter().collect::<String>()));
        out.extend(chars[end..].iter().map(|c| Token::new(c.to_string())));
    }
    out
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Default)]
pub struct Sentence {
    tokens: Vec<Token>,
}

impl Sentence {
    pub fn parse(text: &str) -> Sentence {
        Sentence {
            tokens: tokenize(text),
        }
    }

    pub fn from_tokens(tokens: Vec<Token>) -> Sentence {
        Sentence { tokens }
    }

    pub fn tokens(&self) -> &[Token] {
        &self.tokens
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn norms(&self) -> impl Iterator<Item = &str> {
        self.tokens.iter().map(|t| t.norm())
    }

    pub fn push(&mut self, token: Token) {
        self.tokens.push(token);
    }

    /// Serialized form: surfaces joined by single spaces.
    pub fn to_line(&self) -> String {
        let mut s = String::new();
        for (i, t) in self.tokens.iter().enumerate() {
            if i > 0 {
                s.push(' ');
            }
            s.push_str(&t.surface);
        }
        s
    }
}

impl fmt::Display for Sentence {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.to_line())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Provenance {
    Synthetic,
    File,
    Augmented,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Corpus {
    sentences: Vec<Sentence>,
    provenance: Provenance,
}

impl Corpus {
    /// Builds a corpus; blank sentences are dropped and at least one must remain.
    pub fn new(sentences: Vec<Sentence>, provenance: Provenance) -> Result<Corpus> {
        let sentences: Vec<Sentence> = sentences.into_iter().filter(|s| !s.is_empty()).collect();
        if sentences.is_empty() {
            return Err(Error::Empty("corpus"));
        }
        Ok(Corpus {
            sentences,
            provenance,
        })
    }

    /// Result sets of filtering operations may legitimately be empty.
    pub(crate) fn possibly_empty(sentences: Vec<Sentence>, provenance: Provenance) -> Corpus {
        Corpus {
            sentences,
            provenance,
        }
    }

    pub fn from_lines(text: &str, provenance: Provenance) -> Result<Corpus> {
        Corpus::new(text.lines().map(Sentence::parse).collect(), provenance)
    }

    pub fn load(path: &Path) -> Result<Corpus> {
        Corpus::from_lines(&read_to_string(path)?, Provenance::File)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        write_file(path, self.to_text())
    }

    /// One sentence per line, LF endings, trailing newline.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        for sent in &self.sentences {
            s.push_str(&sent.to_line());
            s.push('\n');
        }
        s
    }

    pub fn sentences(&self) -> &[Sentence] {
        &self.sentences
    }

    pub fn len(&self) -> usize {
        self.sentences.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sentences.is_empty()
    }

    pub fn provenance(&self) -> Provenance {
        self.provenance
    }

    pub fn concat(&self, other: &Corpus, provenance: Provenance) -> Corpus {
        let mut sentences = self.sentences.clone();
        sentences.extend(other.sentences.iter().cloned());
        Corpus::possibly_empty(sentences, provenance)
    }
}
