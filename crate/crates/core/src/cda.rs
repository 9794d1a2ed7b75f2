//! Counterfactual data augmentation: gendered-word substitution and
//! mixing-ratio corpus augmentation.

use std::collections::{BTreeMap, HashMap};
use std::path::Path;

use rand::seq::index;

use crate::assets;
use crate::corpus::{Corpus, Provenance, Sentence, Token};
use crate::error::{read_to_string, Error, Result};
use crate::seed;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Gender {
    Male,
    Female,
}

impl Gender {
    pub fn opposite(self) -> Gender {
        match self {
            Gender::Male => Gender::Female,
            Gender::Female => Gender::Male,
        }
    }
}

/// Bidirectional male ↔ female word map.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GenderLexicon {
    pairs: Vec<(String, String)>,
    male_to_female: HashMap<String, String>,
    female_to_male: HashMap<String, String>,
}

impl GenderLexicon {
    pub fn from_pairs<I, S>(pairs: I) -> Result<GenderLexicon>
    where
        I: IntoIterator<Item = (S, S)>,
        S: Into<String>,
    {
        let mut lex = GenderLexicon {
            pairs: Vec::new(),
            male_to_female: HashMap::new(),
            female_to_male: HashMap::new(),
        };
        for (m, f) in pairs {
            let (m, f) = (m.into(), f.into());
            for w in [&m, &f] {
                if w.is_empty() || *w != w.to_lowercase() || w.chars().any(char::is_whitespace) {
                    return Err(Error::Lexicon(format!(
                        "entry {w:?} must be a single lowercase word"
                    )));
                }
                if lex.male_to_female.contains_key(w) || lex.female_to_male.contains_key(w) {
                    return Err(Error::Lexicon(format!("{w:?} listed more than once")));
                }
            }
            if m == f {
                return Err(Error::Lexicon(format!("{m:?} paired with itself")));
            }
            lex.male_to_female.insert(m.clone(), f.clone());
            lex.female_to_male.insert(f.clone(), m.clone());
            lex.pairs.push((m, f));
        }
        if lex.pairs.is_empty() {
            return Err(Error::Empty("lexicon"));
        }
        Ok(lex)
    }

    /// Parses `male<TAB>female` lines; `#` starts a comment line.
    pub fn parse(file: &str, text: &str) -> Result<GenderLexicon> {
        let mut pairs = Vec::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.trim_end_matches('\r');
            if line.trim().is_empty() || line.starts_with('#') {
                continue;
            }
            match line.split('\t').collect::<Vec<_>>()[..] {
                [m, f] => pairs.push((m.trim().to_string(), f.trim().to_string())),
                _ => {
                    return Err(Error::Parse {
                        file: file.to_string(),
                        line: i + 1,
                        msg: "expected male<TAB>female".into(),
                    })
                }
            }
        }
        GenderLexicon::from_pairs(pairs)
    }

    pub fn load(path: &Path) -> Result<GenderLexicon> {
        GenderLexicon::parse(&path.display().to_string(), &read_to_string(path)?)
    }

    /// The shipped 124-pair list.
    pub fn default_list() -> GenderLexicon {
        GenderLexicon::parse("gender_lexicon.tsv", assets::GENDER_LEXICON)
            .expect("bundled lexicon is valid")
    }

    pub fn pairs(&self) -> &[(String, String)] {
        &self.pairs
    }

    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    pub fn gender_of(&self, word: &str) -> Option<Gender> {
        if self.male_to_female.contains_key(word) {
            Some(Gender::Male)
        } else if self.female_to_male.contains_key(word) {
            Some(Gender::Female)
        } else {
            None
        }
    }

    pub fn antonym(&self, word: &str) -> Option<&str> {
        self.male_to_female
            .get(word)
            .or_else(|| self.female_to_male.get(word))
            .map(String::as_str)
    }

    pub fn contains(&self, word: &str) -> bool {
        self.gender_of(word).is_some()
    }

    /// (male-side, female-side) token counts.
    pub fn count(&self, sentence: &Sentence) -> (usize, usize) {
        sentence
            .norms()
            .fold((0, 0), |(m, f), t| match self.gender_of(t) {
                Some(Gender::Male) => (m + 1, f),
                Some(Gender::Female) => (m, f + 1),
                None => (m, f),
            })
    }
}

fn swap_token(token: &Token, replacement: &str) -> Token {
    Token::new(token.casing().apply(replacement))
}

/// Replaces every lexicon word with its antonym, re-applying the original
/// casing pattern.
pub fn counterfactual(sentence: &Sentence, lexicon: &GenderLexicon) -> Sentence {
    Sentence::from_tokens(
        sentence
            .tokens()
            .iter()
            .map(|t| match lexicon.antonym(t.norm()) {
                Some(a) => swap_token(t, a),
                None => t.clone(),
            })
            .collect(),
    )
}

/// One-directional swap: only words of the other gender are replaced, so the
/// result carries no words of `target.opposite()`.
pub fn counterfactual_toward(sentence: &Sentence, lexicon: &GenderLexicon, target: Gender) -> Sentence {
    Sentence::from_tokens(
        sentence
            .tokens()
            .iter()
            .map(|t| match lexicon.gender_of(t.norm()) {
                Some(g) if g != target => swap_token(t, lexicon.antonym(t.norm()).expect("gendered")),
                _ => t.clone(),
            })
            .collect(),
    )
}

/// Fraction of a corpus whose counterfactual copies are mixed in.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd)]
pub struct MixingRatio(f64);

impl MixingRatio {
    pub fn new(value: f64) -> Result<MixingRatio> {
        if (0.0..=1.0).contains(&value) {
            Ok(MixingRatio(value))
        } else {
            Err(Error::invalid(format!("mixing ratio {value} outside [0, 1]")))
        }
    }

    pub fn value(self) -> f64 {
        self.0
    }

    /// `ceil(ratio * n)`, robust to representation error in the product.
    pub fn copies(self, n: usize) -> usize {
        ((self.0 * n as f64) - 1e-9).ceil().max(0.0) as usize
    }
}

/// Original corpus in order, followed by counterfactual copies of a uniformly
/// sampled `ceil(ratio * N)` subset (in original order).
pub fn augment(corpus: &Corpus, ratio: MixingRatio, lexicon: &GenderLexicon, seed: u64) -> Corpus {
    let n = corpus.len();
    let k = ratio.copies(n);
    let mut rng = seed::rng(seed, "cda-augment");
    let mut picked = index::sample(&mut rng, n, k).into_vec();
    picked.sort_unstable();
    let mut sentences = corpus.sentences().to_vec();
    sentences.extend(
        picked
            .into_iter()
            .map(|i| counterfactual(&corpus.sentences()[i], lexicon)),
    );
    let provenance = if k == 0 {
        corpus.provenance()
    } else {
        Provenance::Augmented
    };
    Corpus::possibly_empty(sentences, provenance)
}

/// Gender-marked pronouns checked by [`lint_ambiguities`].
pub const MARKED_PRONOUNS: &[&str] = &["he", "she", "him", "his", "her", "hers", "himself", "herself"];

/// Gender-marked words found in the corpus that the lexicon cannot swap.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct AmbiguityReport {
    pub entries: Vec<(String, usize)>,
}

impl AmbiguityReport {
    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn count(&self, word: &str) -> usize {
        self.entries
            .iter()
            .find(|(w, _)| w == word)
            .map_or(0, |(_, c)| *c)
    }
}

pub fn lint_ambiguities(corpus: &Corpus, lexicon: &GenderLexicon) -> AmbiguityReport {
    lint_ambiguities_with(corpus, lexicon, MARKED_PRONOUNS)
}

pub fn lint_ambiguities_with(corpus: &Corpus, lexicon: &GenderLexicon, marked: &[&str]) -> AmbiguityReport {
    let mut counts: BTreeMap<String, usize> = BTreeMap::new();
    for s in corpus.sentences() {
        for t in s.norms() {
            if marked.contains(&t) && !lexicon.contains(t) {
                *counts.entry(t.to_string()).or_default() += 1;
            }
        }
    }
    AmbiguityReport {
        entries: counts.into_iter().collect(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn lex() -> GenderLexicon {
        GenderLexicon::default_list()
    }

    fn cf(text: &str) -> String {
        counterfactual(&Sentence::parse(text), &lex()).to_line()
    }

    #[test]
    fn bundled_list_has_124_pairs() {
        let l = lex();
        assert_eq!(l.len(), 124);
        assert_eq!(l.antonym("he"), Some("she"));
        assert_eq!(l.antonym("governesses"), Some("tutors"));
        assert_eq!(l.gender_of("son-in-law"), Some(Gender::Male));
    }

    #[test]
    fn swaps_single_word() {
        assert_eq!(cf("A man works as a doctor"), "A woman works as a doctor");
    }

    #[test]
    fn identity_without_lexicon_words() {
        assert_eq!(cf("the cat sat on the mat ."), "the cat sat on the mat .");
    }

    #[test]
    fn his_is_not_in_the_list() {
        assert_eq!(cf("He told his grandmother"), "She told his grandfather");
    }

    #[test]
    fn casing_and_hyphenated_forms() {
        assert_eq!(cf("HE met the Son-in-law"), "SHE met the Daughter-in-law");
    }

    #[test]
    fn toward_removes_other_side() {
        let s = Sentence::parse("he and his sister met the king");
        let a = counterfactual_toward(&s, &lex(), Gender::Female);
        assert_eq!(a.to_line(), "she and his sister met the queen");
        let b = counterfactual_toward(&s, &lex(), Gender::Male);
        assert_eq!(b.to_line(), "he and his brother met the king");
    }

    #[test]
    fn lexicon_validation() {
        assert!(GenderLexicon::from_pairs([("a", "b"), ("b", "c")]).is_err());
        assert!(GenderLexicon::from_pairs([("a", "a")]).is_err());
        assert!(GenderLexicon::from_pairs([("A", "b")]).is_err());
        assert!(GenderLexicon::from_pairs(Vec::<(String, String)>::new()).is_err());
        assert!(GenderLexicon::parse("x", "a\tb\tc\n").is_err());
        let l = GenderLexicon::parse("x", "# m\tf\nsir\tmadam\n").unwrap();
        assert_eq!(l.len(), 1);
    }

    #[test]
    fn mixing_ratio_bounds() {
        assert!(MixingRatio::new(-0.1).is_err());
        assert!(MixingRatio::new(1.1).is_err());
        assert_eq!(MixingRatio::new(0.25).unwrap().copies(10), 3);
        assert_eq!(MixingRatio::new(0.1).unwrap().copies(30), 3);
        assert_eq!(MixingRatio::new(1.0).unwrap().copies(7), 7);
    }

    fn small_corpus(n: usize) -> Corpus {
        let lines: Vec<String> = (0..n)
            .map(|i| format!("the man number{i} met his sister"))
            .collect();
        Corpus::from_lines(&lines.join("\n"), Provenance::File).unwrap()
    }

    #[test]
    fn augment_ratio_zero_is_identity() {
        let c = small_corpus(10);
        let out = augment(&c, MixingRatio::new(0.0).unwrap(), &lex(), 1);
        assert_eq!(out, c);
    }

    #[test]
    fn augment_ratio_one_pairs_every_sentence() {
        let c = small_corpus(10);
        let out = augment(&c, MixingRatio::new(1.0).unwrap(), &lex(), 1);
        assert_eq!(out.len(), 20);
        assert_eq!(out.provenance(), Provenance::Augmented);
        for (i, s) in c.sentences().iter().enumerate() {
            assert_eq!(&out.sentences()[i], s);
            assert!(out.sentences()[10..].contains(&counterfactual(s, &lex())));
        }
    }

    #[test]
    fn augment_half_appends_counterfactuals_of_distinct_originals() {
        let c = small_corpus(10);
        let out = augment(&c, MixingRatio::new(0.5).unwrap(), &lex(), 42);
        assert_eq!(out.len(), 15);
        assert_eq!(&out.sentences()[..10], c.sentences());
        // every appended sentence maps back to a distinct original
        let mut origins: Vec<usize> = out.sentences()[10..]
            .iter()
            .map(|s| {
                let back = counterfactual(s, &lex());
                c.sentences().iter().position(|o| *o == back).expect("has an original")
            })
            .collect();
        origins.dedup();
        assert_eq!(origins.len(), 5);
        assert_eq!(out, augment(&c, MixingRatio::new(0.5).unwrap(), &lex(), 42));
    }

    #[test]
    fn lint_reports_unswappable_pronouns() {
        let c = Corpus::from_lines("her book", Provenance::File).unwrap();
        assert_eq!(lint_ambiguities(&c, &lex()).entries, vec![("her".to_string(), 1)]);
        let c = Corpus::from_lines("he she", Provenance::File).unwrap();
        assert!(lint_ambiguities(&c, &lex()).is_empty());
        let c = Corpus::from_lines("a plain sentence", Provenance::File).unwrap();
        assert!(lint_ambiguities(&c, &lex()).is_empty());
    }

    fn sentence_strategy() -> impl Strategy<Value = Sentence> {
        let words: Vec<String> = lex()
            .pairs()
            .iter()
            .flat_map(|(m, f)| [m.clone(), f.clone()])
            .chain(["the", "a", "doctor", "his", "her", "."].map(String::from))
            .collect();
        prop::collection::vec((prop::sample::select(words), 0..3u8), 0..12).prop_map(|ws| {
            Sentence::from_tokens(
                ws.into_iter()
                    .map(|(w, case)| match case {
                        0 => Token::new(w),
                        1 => Token::new(crate::corpus::Casing::Capitalized.apply(&w)),
                        _ => Token::new(w.to_uppercase()),
                    })
                    .collect(),
            )
        })
    }

    proptest! {
        #[test]
        fn counterfactual_algebra(s in sentence_strategy()) {
            let l = lex();
            let c = counterfactual(&s, &l);
            prop_assert_eq!(counterfactual(&c, &l), s.clone());
            prop_assert_eq!(c.len(), s.len());
            let (m, f) = l.count(&s);
            let (cm, cf) = l.count(&c);
            prop_assert_eq!((cm, cf), (f, m));
        }
    }
}
