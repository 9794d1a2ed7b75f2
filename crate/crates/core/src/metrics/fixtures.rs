use std::path::Path;

use crate::assets;
use crate::cda::{Gender, GenderLexicon};
use crate::corpus::Sentence;
use crate::error::{read_to_string, Error, Result};

use super::scorer::{ScorerKind, ScorerLexicon};

/// Two contexts that differ in exactly one gendered token.
#[derive(Debug, Clone, PartialEq)]
pub struct PromptPair {
    pub template_id: String,
    pub male: Sentence,
    pub female: Sentence,
}

impl PromptPair {
    pub fn new(template_id: impl Into<String>, male: Sentence, female: Sentence, lexicon: &GenderLexicon) -> Result<Self> {
        if male.len() != female.len() || male.is_empty() {
            return Err(Error::invalid("prompt pair contexts must be nonempty and equally long"));
        }
        let diffs: Vec<(&str, &str)> = male.norms().zip(female.norms()).filter(|(a, b)| a != b).collect();
        match diffs.as_slice() {
            [(m, f)] if lexicon.gender_of(m) == Some(Gender::Male) && lexicon.antonym(m) == Some(*f) => {}
            _ => {
                return Err(Error::invalid(format!(
                    "prompt pair {:?} / {:?} must differ in exactly one lexicon pair",
                    male.to_line(),
                    female.to_line()
                )))
            }
        }
        Ok(PromptPair {
            template_id: template_id.into(),
            male,
            female,
        })
    }

    pub fn swapped(&self) -> (Sentence, Sentence) {
        (self.female.clone(), self.male.clone())
    }
}

fn data_lines(text: &str) -> impl Iterator<Item = (usize, &str)> {
    text.lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.trim_end_matches('\r')))
        .filter(|(_, l)| !l.trim().is_empty() && !l.starts_with('#'))
}

fn fields<'a>(file: &str, line: usize, text: &'a str, n: usize) -> Result<Vec<&'a str>> {
    let cells: Vec<&str> = text.split('\t').map(str::trim).collect();
    if cells.len() != n {
        return Err(Error::Parse {
            file: file.to_string(),
            line,
            msg: format!("expected {n} tab-separated fields, got {}", cells.len()),
        });
    }
    Ok(cells)
}

/// Parses `template_id<TAB>male_context<TAB>female_context` lines.
pub fn parse_prompt_pairs(file: &str, text: &str, lexicon: &GenderLexicon) -> Result<Vec<PromptPair>> {
    data_lines(text)
        .map(|(line, l)| {
            let c = fields(file, line, l, 3)?;
            PromptPair::new(c[0], Sentence::parse(c[1]), Sentence::parse(c[2]), lexicon).map_err(|e| Error::Parse {
                file: file.to_string(),
                line,
                msg: e.to_string(),
            })
        })
        .collect()
}

/// A gender-neutral prompt for counting gendered continuations.
#[derive(Debug, Clone, PartialEq)]
pub struct NeutralPrompt {
    pub id: String,
    pub context: Sentence,
}

/// Parses `prompt_id<TAB>prompt` lines.
pub fn parse_neutral_prompts(file: &str, text: &str) -> Result<Vec<NeutralPrompt>> {
    data_lines(text)
        .map(|(line, l)| {
            let c = fields(file, line, l, 2)?;
            Ok(NeutralPrompt {
                id: c[0].to_string(),
                context: Sentence::parse(c[1]),
            })
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct StereoTriple {
    pub category: String,
    pub stereo: Sentence,
    pub anti: Sentence,
    pub unrelated: Sentence,
}

/// Parses `category<TAB>stereo<TAB>anti<TAB>unrelated` lines.
pub fn parse_triples(file: &str, text: &str) -> Result<Vec<StereoTriple>> {
    data_lines(text)
        .map(|(line, l)| {
            let c = fields(file, line, l, 4)?;
            let t = StereoTriple {
                category: c[0].to_string(),
                stereo: Sentence::parse(c[1]),
                anti: Sentence::parse(c[2]),
                unrelated: Sentence::parse(c[3]),
            };
            let one_slot = |a: &Sentence, b: &Sentence| {
                a.len() == b.len() && a.norms().zip(b.norms()).filter(|(x, y)| x != y).count() == 1
            };
            if !one_slot(&t.stereo, &t.anti) || !one_slot(&t.stereo, &t.unrelated) {
                return Err(Error::Parse {
                    file: file.to_string(),
                    line,
                    msg: "triple sentences must differ in exactly one slot".into(),
                });
            }
            Ok(t)
        })
        .collect()
}

/// Occupation words, one per line, minus any that are gendered lexicon words.
pub fn parse_occupations(text: &str, lexicon: &GenderLexicon) -> Vec<String> {
    let mut words: Vec<String> = data_lines(text)
        .map(|(_, l)| l.trim().to_lowercase())
        .filter(|w| !lexicon.contains(w))
        .collect();
    words.sort();
    words.dedup();
    words
}

/// Everything `full_report` evaluates against.
#[derive(Debug, Clone)]
pub struct EvalFixtures {
    pub lexicon: GenderLexicon,
    /// Prompt pairs whose completions are scored for toxicity.
    pub toxicity_prompts: Vec<PromptPair>,
    /// Prompt pairs whose completions are scored for negative sentiment.
    pub sentiment_prompts: Vec<PromptPair>,
    pub neutral_prompts: Vec<NeutralPrompt>,
    pub triples: Vec<StereoTriple>,
    pub occupations: Vec<String>,
    pub toxicity: ScorerLexicon,
    pub sentiment: ScorerLexicon,
}

impl EvalFixtures {
    pub fn builtin(lexicon: GenderLexicon) -> Result<EvalFixtures> {
        Ok(EvalFixtures {
            toxicity_prompts: parse_prompt_pairs("honest_prompts.tsv", assets::HONEST_PROMPTS, &lexicon)?,
            sentiment_prompts: parse_prompt_pairs("regard_prompts.tsv", assets::REGARD_PROMPTS, &lexicon)?,
            neutral_prompts: parse_neutral_prompts("bold_prompts.tsv", assets::BOLD_PROMPTS)?,
            triples: parse_triples("stereo_triples.tsv", assets::STEREO_TRIPLES)?,
            occupations: parse_occupations(assets::OCCUPATIONS, &lexicon),
            toxicity: ScorerLexicon::parse(ScorerKind::Toxicity, "toxicity_lexicon.tsv", assets::TOXICITY_LEXICON)?,
            sentiment: ScorerLexicon::parse(
                ScorerKind::NegativeSentiment,
                "sentiment_lexicon.tsv",
                assets::SENTIMENT_LEXICON,
            )?,
            lexicon,
        })
    }

    /// Replaces the built-in files with any present in `dir` (same names).
    pub fn with_overrides(mut self, dir: &Path) -> Result<EvalFixtures> {
        let read = |name: &str| -> Result<Option<(String, String)>> {
            let p = dir.join(name);
            if p.exists() {
                Ok(Some((p.display().to_string(), read_to_string(&p)?)))
            } else {
                Ok(None)
            }
        };
        if let Some((f, t)) = read("honest_prompts.tsv")? {
            self.toxicity_prompts = parse_prompt_pairs(&f, &t, &self.lexicon)?;
        }
        if let Some((f, t)) = read("regard_prompts.tsv")? {
            self.sentiment_prompts = parse_prompt_pairs(&f, &t, &self.lexicon)?;
        }
        if let Some((f, t)) = read("bold_prompts.tsv")? {
            self.neutral_prompts = parse_neutral_prompts(&f, &t)?;
        }
        if let Some((f, t)) = read("stereo_triples.tsv")? {
            self.triples = parse_triples(&f, &t)?;
        }
        if let Some((_, t)) = read("occupations.txt")? {
            self.occupations = parse_occupations(&t, &self.lexicon);
        }
        if let Some((f, t)) = read("toxicity_lexicon.tsv")? {
            self.toxicity = ScorerLexicon::parse(ScorerKind::Toxicity, &f, &t)?;
        }
        if let Some((f, t)) = read("sentiment_lexicon.tsv")? {
            self.sentiment = ScorerLexicon::parse(ScorerKind::NegativeSentiment, &f, &t)?;
        }
        Ok(self)
    }

    /// All gendered prompt pairs (toxicity then sentiment sets).
    pub fn all_pairs(&self) -> Vec<&PromptPair> {
        self.toxicity_prompts.iter().chain(&self.sentiment_prompts).collect()
    }
}
