//! Template-grammar generator for corpora with a controlled gender ↔
//! occupation / descriptor skew.

use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::ChaCha20Rng;

use super::{Corpus, Provenance, Sentence};
use crate::assets;
use crate::config::KeyValues;
use crate::error::{read_to_string, Error, Result};
use crate::seed;

/// Which gender a word is stereotypically associated with.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Stereotype {
    Male,
    Female,
    Neutral,
}

impl Stereotype {
    fn parse(s: &str) -> Option<Stereotype> {
        match s {
            "m" | "male" => Some(Stereotype::Male),
            "f" | "female" => Some(Stereotype::Female),
            "n" | "neutral" => Some(Stereotype::Neutral),
            _ => None,
        }
    }

    pub fn opposite(self) -> Stereotype {
        match self {
            Stereotype::Male => Stereotype::Female,
            Stereotype::Female => Stereotype::Male,
            Stereotype::Neutral => Stereotype::Neutral,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct WordClass {
    pub word: String,
    pub stereotype: Stereotype,
}

/// Parses `word<TAB>m|f|n` lines (`#` comments allowed).
pub fn parse_word_classes(file: &str, text: &str) -> Result<Vec<WordClass>> {
    let mut out = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.trim_end_matches('\r');
        if line.trim().is_empty() || line.starts_with('#') {
            continue;
        }
        let mut parts = line.split('\t');
        let word = parts.next().unwrap_or("").trim().to_lowercase();
        let class = parts.next().map(str::trim).and_then(Stereotype::parse);
        match (word.is_empty(), class) {
            (false, Some(stereotype)) => out.push(WordClass { word, stereotype }),
            _ => {
                return Err(Error::Parse {
                    file: file.to_string(),
                    line: i + 1,
                    msg: "expected word<TAB>m|f|n".into(),
                })
            }
        }
    }
    Ok(out)
}

/// Template grammar identifier.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Grammar {
    /// Occupation, descriptor, reported-speech and multi-subject templates.
    OccupationalV1,
}

impl Grammar {
    pub fn id(self) -> &'static str {
        match self {
            Grammar::OccupationalV1 => "occupational-v1",
        }
    }

    pub fn parse(s: &str) -> Result<Grammar> {
        match s {
            "occupational-v1" => Ok(Grammar::OccupationalV1),
            other => Err(Error::invalid(format!("unknown grammar {other:?}"))),
        }
    }
}

/// Gendered subject phrases, male form first. Every content word here is in
/// the default gender lexicon.
pub const SUBJECT_PAIRS: &[(&str, &str)] = &[
    ("the man", "the woman"),
    ("the boy", "the girl"),
    ("the father", "the mother"),
    ("my brother", "my sister"),
    ("the uncle", "the aunt"),
    ("the king", "the queen"),
    ("the husband", "the wife"),
    ("my son", "my daughter"),
    ("he", "she"),
];

pub const OCCUPATION_FRAMES: &[&str] = &[
    "works as a",
    "should work as a",
    "dreams of being a",
    "has earned a living as a",
    "had a job as a",
    "was hired as a",
];

pub const DESCRIPTOR_FRAMES: &[&str] = &["is known to be", "was described as", "seems", "was regarded as"];

pub const SPEECH_FRAMES: &[&str] = &["said that", "told me that", "thinks that", "knew that"];

#[derive(Debug, Clone, PartialEq)]
pub struct SkewSpec {
    pub occupations: Vec<WordClass>,
    pub descriptors: Vec<WordClass>,
    /// Fraction of gendered sentences that follow the stereotype direction.
    pub rho: f64,
    /// Fraction of gendered subjects that are male.
    pub male_share: f64,
    pub n_sentences: usize,
    pub grammar: Grammar,
    pub seed: u64,
}

pub const SKEW_KEYS: &[&str] = &[
    "rho",
    "n_sentences",
    "seed",
    "occupations_file",
    "descriptors_file",
    "male_share",
    "grammar",
];

impl SkewSpec {
    /// The shipped word sets with the desk-scale defaults.
    pub fn desk_default(seed: u64) -> SkewSpec {
        SkewSpec {
            occupations: parse_word_classes("occupations", assets::SYNTHETIC_OCCUPATIONS)
                .expect("bundled occupations parse"),
            descriptors: parse_word_classes("descriptors", assets::SYNTHETIC_DESCRIPTORS)
                .expect("bundled descriptors parse"),
            rho: 0.9,
            male_share: 0.7,
            n_sentences: 10_000,
            grammar: Grammar::OccupationalV1,
            seed,
        }
    }

    /// Reads a `key = value` file; relative word-list paths resolve against
    /// the config file's directory. Missing keys keep desk defaults.
    pub fn load(path: &Path) -> Result<SkewSpec> {
        let text = read_to_string(path)?;
        let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
        SkewSpec::from_config(&KeyValues::parse(&path.display().to_string(), &text)?, &base)
    }

    pub fn from_config(kv: &KeyValues, base: &Path) -> Result<SkewSpec> {
        kv.check_keys(SKEW_KEYS)?;
        let mut spec = SkewSpec::desk_default(0);
        spec.apply_config(kv, base)?;
        Ok(spec)
    }

    pub fn apply_config(&mut self, kv: &KeyValues, base: &Path) -> Result<()> {
        let resolve = |p: &str| -> PathBuf {
            let p = PathBuf::from(p);
            if p.is_absolute() {
                p
            } else {
                base.join(p)
            }
        };
        if let Some(v) = kv.parse_value("rho")? {
            self.rho = v;
        }
        if let Some(v) = kv.parse_value("n_sentences")? {
            self.n_sentences = v;
        }
        if let Some(v) = kv.parse_value("seed")? {
            self.seed = v;
        }
        if let Some(v) = kv.parse_value("male_share")? {
            self.male_share = v;
        }
        if let Some(v) = kv.get("grammar") {
            self.grammar = Grammar::parse(v)?;
        }
        if let Some(p) = kv.get("occupations_file") {
            let p = resolve(p);
            self.occupations = parse_word_classes(&p.display().to_string(), &read_to_string(&p)?)?;
        }
        if let Some(p) = kv.get("descriptors_file") {
            let p = resolve(p);
            self.descriptors = parse_word_classes(&p.display().to_string(), &read_to_string(&p)?)?;
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.rho) {
            return Err(Error::invalid(format!("rho {} outside [0, 1]", self.rho)));
        }
        if !(0.0..=1.0).contains(&self.male_share) {
            return Err(Error::invalid(format!("male_share {} outside [0, 1]", self.male_share)));
        }
        if self.n_sentences == 0 {
            return Err(Error::invalid("n_sentences must be at least 1"));
        }
        for (name, set) in [("occupation", &self.occupations), ("descriptor", &self.descriptors)] {
            if set.is_empty() {
                return Err(Error::invalid(format!("empty {name} set")));
            }
            for g in [Stereotype::Male, Stereotype::Female] {
                if !set.iter().any(|w| w.stereotype == g) {
                    return Err(Error::invalid(format!(
                        "{name} set needs at least one {g:?}-stereotyped word"
                    )));
                }
            }
        }
        Ok(())
    }

    fn words(set: &[WordClass], class: Stereotype) -> Vec<&str> {
        set.iter()
            .filter(|w| w.stereotype == class)
            .map(|w| w.word.as_str())
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Template {
    /// `<subject> <occupation frame> <occupation> .`
    Occupation,
    /// `<subject> <descriptor frame> <descriptor> .`
    Descriptor,
    /// `the <occupation> <speech frame> <pronoun> <descriptor frame> <descriptor> .`
    Speech,
    /// `<s1> , <s2> and <s3> told <s4> that <pronoun> <occupation frame> <occupation> .`
    Group,
}

const TEMPLATE_WEIGHTS: &[(Template, f64)] = &[
    (Template::Occupation, 0.40),
    (Template::Descriptor, 0.25),
    (Template::Speech, 0.25),
    (Template::Group, 0.10),
];

#[derive(Debug)]
struct Plan {
    template: Template,
    gender: Stereotype,
    /// Occupation slot takes a neutral occupation.
    neutral_occupation: bool,
    /// Descriptor slot takes a neutral descriptor.
    neutral_descriptor: bool,
}

fn pick_template(rng: &mut ChaCha20Rng) -> Template {
    let mut u: f64 = rng.gen();
    for &(t, w) in TEMPLATE_WEIGHTS {
        if u < w {
            return t;
        }
        u -= w;
    }
    TEMPLATE_WEIGHTS[TEMPLATE_WEIGHTS.len() - 1].0
}

/// Exactly `round(rho * n)` true flags in random order.
fn exact_flags(rho: f64, n: usize, rng: &mut ChaCha20Rng) -> Vec<bool> {
    let k = (rho * n as f64).round() as usize;
    let mut flags: Vec<bool> = (0..n).map(|i| i < k).collect();
    flags.shuffle(rng);
    flags
}

fn choose<'a>(rng: &mut ChaCha20Rng, words: &[&'a str]) -> &'a str {
    words[rng.gen_range(0..words.len())]
}

/// Generates `n_sentences` sentences. Among sentences that pair a gendered
/// word with a stereotyped occupation, exactly `round(rho * M)` use the
/// stereotype-assigned occupation; the same holds separately for
/// stereotyped descriptors. Pure function of `spec`.
pub fn generate_synthetic_corpus(spec: &SkewSpec) -> Result<Corpus> {
    spec.validate()?;
    let mut rng = seed::rng(spec.seed, "synthetic-corpus");

    let neutral_occ = SkewSpec::words(&spec.occupations, Stereotype::Neutral);
    let neutral_desc = SkewSpec::words(&spec.descriptors, Stereotype::Neutral);
    let p_neutral_occ = neutral_occ.len() as f64 / spec.occupations.len() as f64;
    let p_neutral_desc = neutral_desc.len() as f64 / spec.descriptors.len() as f64;

    let plans: Vec<Plan> = (0..spec.n_sentences)
        .map(|_| {
            let template = pick_template(&mut rng);
            let gender = if rng.gen_bool(spec.male_share) {
                Stereotype::Male
            } else {
                Stereotype::Female
            };
            Plan {
                template,
                gender,
                neutral_occupation: rng.gen_bool(p_neutral_occ),
                neutral_descriptor: rng.gen_bool(p_neutral_desc),
            }
        })
        .collect();

    let uses_occ = |p: &Plan| matches!(p.template, Template::Occupation | Template::Speech | Template::Group);
    let uses_desc = |p: &Plan| matches!(p.template, Template::Descriptor | Template::Speech);
    let n_occ = plans.iter().filter(|p| uses_occ(p) && !p.neutral_occupation).count();
    let n_desc = plans.iter().filter(|p| uses_desc(p) && !p.neutral_descriptor).count();
    let occ_flags = exact_flags(spec.rho, n_occ, &mut rng);
    let desc_flags = exact_flags(spec.rho, n_desc, &mut rng);
    let mut occ_flags = occ_flags.into_iter();
    let mut desc_flags = desc_flags.into_iter();

    let male_occ = SkewSpec::words(&spec.occupations, Stereotype::Male);
    let female_occ = SkewSpec::words(&spec.occupations, Stereotype::Female);
    let male_desc = SkewSpec::words(&spec.descriptors, Stereotype::Male);
    let female_desc = SkewSpec::words(&spec.descriptors, Stereotype::Female);

    let mut sentences = Vec::with_capacity(plans.len());
    for plan in &plans {
        let g = plan.gender;
        let subject = |rng: &mut ChaCha20Rng, nouns_only: bool| -> &'static str {
            let pool = if nouns_only {
                &SUBJECT_PAIRS[..SUBJECT_PAIRS.len() - 1]
            } else {
                SUBJECT_PAIRS
            };
            let (m, f) = pool[rng.gen_range(0..pool.len())];
            if g == Stereotype::Male {
                m
            } else {
                f
            }
        };
        let pronoun = if g == Stereotype::Male { "he" } else { "she" };

        let mut occupation = |rng: &mut ChaCha20Rng| -> String {
            if plan.neutral_occupation {
                return choose(rng, &neutral_occ).to_string();
            }
            let stereo = occ_flags.next().expect("one flag per stereotyped occupation slot");
            let class = if stereo { g } else { g.opposite() };
            let pool = if class == Stereotype::Male { &male_occ } else { &female_occ };
            choose(rng, pool).to_string()
        };
        let mut descriptor = |rng: &mut ChaCha20Rng| -> String {
            if plan.neutral_descriptor {
                return choose(rng, &neutral_desc).to_string();
            }
            let stereo = desc_flags.next().expect("one flag per stereotyped descriptor slot");
            let class = if stereo { g } else { g.opposite() };
            let pool = if class == Stereotype::Male { &male_desc } else { &female_desc };
            choose(rng, pool).to_string()
        };

        let line = match plan.template {
            Template::Occupation => {
                let s = subject(&mut rng, false);
                let frame = choose(&mut rng, OCCUPATION_FRAMES);
                format!("{s} {frame} {} .", occupation(&mut rng))
            }
            Template::Descriptor => {
                let s = subject(&mut rng, false);
                let frame = choose(&mut rng, DESCRIPTOR_FRAMES);
                format!("{s} {frame} {} .", descriptor(&mut rng))
            }
            Template::Speech => {
                let occ = occupation(&mut rng);
                let speech = choose(&mut rng, SPEECH_FRAMES);
                let frame = choose(&mut rng, DESCRIPTOR_FRAMES);
                format!("the {occ} {speech} {pronoun} {frame} {} .", descriptor(&mut rng))
            }
            Template::Group => {
                let s1 = subject(&mut rng, true);
                let s2 = subject(&mut rng, true);
                let s3 = subject(&mut rng, true);
                let s4 = subject(&mut rng, true);
                let frame = choose(&mut rng, OCCUPATION_FRAMES);
                format!(
                    "{s1} , {s2} and {s3} told {s4} that {pronoun} {frame} {} .",
                    occupation(&mut rng)
                )
            }
        };
        sentences.push(Sentence::parse(&line));
    }
    Corpus::new(sentences, Provenance::Synthetic)
}
