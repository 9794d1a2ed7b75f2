use std::collections::HashMap;
use std::path::{Path, PathBuf};
use std::process::Command;

use crate::corpus::Sentence;
use crate::error::{read_to_string, write_file, Error, Result};

/// Assigns a score in [0, 1] to each sentence.
pub trait Scorer: Send + Sync {
    fn score_batch(&self, sentences: &[Sentence]) -> Result<Vec<f64>>;
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ScorerKind {
    Toxicity,
    NegativeSentiment,
}

/// Bag-of-words scorer: matched weights over sentence length.
#[derive(Debug, Clone, PartialEq)]
pub struct ScorerLexicon {
    kind: ScorerKind,
    weights: HashMap<String, f64>,
}

impl ScorerLexicon {
    pub fn new<I, S>(kind: ScorerKind, entries: I) -> Result<ScorerLexicon>
    where
        I: IntoIterator<Item = (S, f64)>,
        S: Into<String>,
    {
        let mut weights = HashMap::new();
        for (term, w) in entries {
            let term = term.into();
            if term.is_empty() || term != term.to_lowercase() {
                return Err(Error::Lexicon(format!("scorer term {term:?} must be nonempty lowercase")));
            }
            if !(0.0..=1.0).contains(&w) {
                return Err(Error::Lexicon(format!("weight {w} for {term:?} outside [0, 1]")));
            }
            if weights.insert(term.clone(), w).is_some() {
                return Err(Error::Lexicon(format!("duplicate scorer term {term:?}")));
            }
        }
        Ok(ScorerLexicon { kind, weights })
    }

    pub fn parse(kind: ScorerKind, file: &str, text: &str) -> Result<ScorerLexicon> {
        let mut entries = Vec::new();
        for (i, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let err = |msg: String| Error::Parse {
                file: file.to_string(),
                line: i + 1,
                msg,
            };
            let (term, w) = line
                .split_once('\t')
                .ok_or_else(|| err("expected term<TAB>weight".into()))?;
            let w: f64 = w.trim().parse().map_err(|_| err(format!("bad weight {w:?}")))?;
            entries.push((term.trim().to_string(), w));
        }
        ScorerLexicon::new(kind, entries)
    }

    pub fn load(kind: ScorerKind, path: &Path) -> Result<ScorerLexicon> {
        ScorerLexicon::parse(kind, &path.display().to_string(), &read_to_string(path)?)
    }

    pub fn kind(&self) -> ScorerKind {
        self.kind
    }

    pub fn weight(&self, term: &str) -> Option<f64> {
        self.weights.get(term).copied()
    }

    pub fn lexicon_score(&self, sentence: &Sentence) -> f64 {
        if sentence.is_empty() {
            return 0.0;
        }
        let total: f64 = sentence.norms().filter_map(|t| self.weight(t)).sum();
        (total / sentence.len() as f64).clamp(0.0, 1.0)
    }
}

impl Scorer for ScorerLexicon {
    fn score_batch(&self, sentences: &[Sentence]) -> Result<Vec<f64>> {
        Ok(sentences.iter().map(|s| self.lexicon_score(s)).collect())
    }
}

/// Writes one sentence per line.
pub fn export_sentences(path: &Path, sentences: &[Sentence]) -> Result<()> {
    let mut text = String::new();
    for s in sentences {
        text.push_str(&s.to_line());
        text.push('\n');
    }
    write_file(path, text)
}

/// Reads one decimal score per line, expecting exactly `expected` lines.
pub fn import_scores(path: &Path, expected: usize) -> Result<Vec<f64>> {
    let file = path.display().to_string();
    let text = read_to_string(path)?;
    let mut scores = Vec::with_capacity(expected);
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let v: f64 = line.parse().map_err(|_| Error::Parse {
            file: file.clone(),
            line: i + 1,
            msg: format!("bad score {line:?}"),
        })?;
        if !(0.0..=1.0).contains(&v) {
            return Err(Error::Parse {
                file: file.clone(),
                line: i + 1,
                msg: format!("score {v} outside [0, 1]"),
            });
        }
        scores.push(v);
    }
    if scores.len() != expected {
        return Err(Error::Shape {
            expected,
            got: scores.len(),
        });
    }
    Ok(scores)
}

/// Delegates scoring to an external program invoked as
/// `program [args..] <sentences-file> <scores-file>`.
#[derive(Debug, Clone)]
pub struct ExternalScorer {
    pub program: PathBuf,
    pub args: Vec<String>,
    pub workdir: PathBuf,
}

impl Scorer for ExternalScorer {
    fn score_batch(&self, sentences: &[Sentence]) -> Result<Vec<f64>> {
        let tag = crate::seed::sha256_hex(
            sentences
                .iter()
                .map(|s| s.to_line())
                .collect::<Vec<_>>()
                .join("\n"),
        );
        let input = self.workdir.join(format!("score-{}.in.txt", &tag[..16]));
        let output = self.workdir.join(format!("score-{}.out.txt", &tag[..16]));
        export_sentences(&input, sentences)?;
        let status = Command::new(&self.program)
            .args(&self.args)
            .arg(&input)
            .arg(&output)
            .status()
            .map_err(|e| Error::io(&self.program, e))?;
        if !status.success() {
            return Err(Error::invalid(format!(
                "scorer {} exited with {status}",
                self.program.display()
            )));
        }
        import_scores(&output, sentences.len())
    }
}
