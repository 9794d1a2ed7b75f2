//! Binary gender bias metrics over a trained model: generation-based
//! toxicity, sentiment, occupation and gender-count differences,
//! distribution distances between gendered contexts, and stereotype
//! preference on sentence triples.

mod divergence;
mod fixtures;
mod report;
mod scorer;

use std::collections::BTreeMap;

pub use divergence::{average_kl, hellinger, kl};
pub use fixtures::{
    parse_neutral_prompts, parse_occupations, parse_prompt_pairs, parse_triples, EvalFixtures, NeutralPrompt,
    PromptPair, StereoTriple,
};
pub use report::{full_report, BiasReport, ReportMeta, METRIC_NAMES};
pub use scorer::{export_sentences, import_scores, ExternalScorer, Scorer, ScorerKind, ScorerLexicon};

use crate::cda::GenderLexicon;
use crate::corpus::Sentence;
use crate::error::{Error, Result};
use crate::model::{Decoding, LanguageModel};
use crate::seed;

/// Sampling settings for the generation-based metrics.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GenConfig {
    pub n_tokens: usize,
    pub decoding: Decoding,
    /// Completions per prompt side.
    pub samples: usize,
    pub seed: u64,
}

impl Default for GenConfig {
    fn default() -> Self {
        GenConfig {
            n_tokens: 50,
            decoding: Decoding::Sample { temperature: 1.0 },
            samples: 1,
            seed: 0,
        }
    }
}

/// One generated sentence split into the prompt and what followed it.
#[derive(Debug, Clone, PartialEq)]
pub struct Generation {
    pub full: Sentence,
    pub continuation: Sentence,
}

impl Generation {
    fn from_full(full: Sentence, prompt_len: usize) -> Generation {
        let continuation = Sentence::from_tokens(full.tokens()[prompt_len.min(full.len())..].to_vec());
        Generation { full, continuation }
    }
}

/// Completions of both sides of a prompt pair. Both sides use the same seed,
/// so a model that treats the two contexts identically produces identical text.
#[derive(Debug, Clone, PartialEq)]
pub struct PairGeneration {
    pub male: Generation,
    pub female: Generation,
}

fn prompt_seed(base: u64, id: &str, context: &Sentence, sample: usize) -> u64 {
    seed::derive(base, &[id, &context.to_line(), &sample.to_string()])
}

pub fn generate_pairs(model: &LanguageModel, prompts: &[PromptPair], gen: &GenConfig) -> Result<Vec<PairGeneration>> {
    let mut out = Vec::with_capacity(prompts.len() * gen.samples);
    for p in prompts {
        for k in 0..gen.samples {
            let s = prompt_seed(gen.seed, &p.template_id, &p.male, k);
            let male = model.generate(&p.male, gen.n_tokens, s, gen.decoding)?;
            let female = model.generate(&p.female, gen.n_tokens, s, gen.decoding)?;
            out.push(PairGeneration {
                male: Generation::from_full(male, p.male.len()),
                female: Generation::from_full(female, p.female.len()),
            });
        }
    }
    Ok(out)
}

pub fn generate_neutral(model: &LanguageModel, prompts: &[NeutralPrompt], gen: &GenConfig) -> Result<Vec<Generation>> {
    let mut out = Vec::with_capacity(prompts.len() * gen.samples);
    for p in prompts {
        for k in 0..gen.samples {
            let s = prompt_seed(gen.seed, &p.id, &p.context, k);
            let full = model.generate(&p.context, gen.n_tokens, s, gen.decoding)?;
            out.push(Generation::from_full(full, p.context.len()));
        }
    }
    Ok(out)
}

/// Sum after sorting, so the result does not depend on input order.
fn sorted_sum(mut xs: Vec<f64>) -> f64 {
    xs.sort_by(f64::total_cmp);
    xs.iter().sum()
}

/// Mean absolute difference of paired scores.
pub fn mean_abs_difference(pairs: &[(f64, f64)]) -> Result<f64> {
    if pairs.is_empty() {
        return Err(Error::Empty("prompt set"));
    }
    Ok(sorted_sum(pairs.iter().map(|(a, b)| (a - b).abs()).collect()) / pairs.len() as f64)
}

/// Scores the continuations on each side and averages the absolute gaps.
pub fn score_gap(generations: &[PairGeneration], scorer: &dyn Scorer) -> Result<f64> {
    if generations.is_empty() {
        return Err(Error::Empty("prompt set"));
    }
    let males: Vec<Sentence> = generations.iter().map(|g| g.male.continuation.clone()).collect();
    let females: Vec<Sentence> = generations.iter().map(|g| g.female.continuation.clone()).collect();
    let a = scorer.score_batch(&males)?;
    let b = scorer.score_batch(&females)?;
    let pairs: Vec<(f64, f64)> = a.into_iter().zip(b).collect();
    mean_abs_difference(&pairs)
}

pub fn toxicity_bias(model: &LanguageModel, prompts: &[PromptPair], scorer: &dyn Scorer, gen: &GenConfig) -> Result<f64> {
    score_gap(&generate_pairs(model, prompts, gen)?, scorer)
}

pub fn sentiment_bias(model: &LanguageModel, prompts: &[PromptPair], scorer: &dyn Scorer, gen: &GenConfig) -> Result<f64> {
    score_gap(&generate_pairs(model, prompts, gen)?, scorer)
}

/// `(1/|O|) Σ_o |n_m(o) − n_f(o)|`, where `n_g(o)` counts sentences in which
/// occupation `o` appears together with a word of gender `g`.
pub fn occupation_bias_from(sentences: &[Sentence], occupations: &[String], lexicon: &GenderLexicon) -> Result<f64> {
    if occupations.is_empty() {
        return Err(Error::Empty("occupation set"));
    }
    let mut counts: BTreeMap<&str, (i64, i64)> = occupations.iter().map(|o| (o.as_str(), (0, 0))).collect();
    for s in sentences {
        let (m, f) = lexicon.count(s);
        if m == 0 && f == 0 {
            continue;
        }
        let mut seen: Vec<&str> = s.norms().filter(|t| counts.contains_key(t)).collect();
        seen.sort_unstable();
        seen.dedup();
        for o in seen {
            let c = counts.get_mut(o).expect("present");
            c.0 += i64::from(m > 0);
            c.1 += i64::from(f > 0);
        }
    }
    let total: i64 = counts.values().map(|(m, f)| (m - f).abs()).sum();
    Ok(total as f64 / occupations.len() as f64)
}

pub fn occupation_bias(
    model: &LanguageModel,
    prompts: &[PromptPair],
    occupations: &[String],
    lexicon: &GenderLexicon,
    gen: &GenConfig,
) -> Result<f64> {
    let gens = generate_pairs(model, prompts, gen)?;
    occupation_bias_from(&pair_sentences(&gens), occupations, lexicon)
}

pub(crate) fn pair_sentences(gens: &[PairGeneration]) -> Vec<Sentence> {
    gens.iter().flat_map(|g| [g.male.full.clone(), g.female.full.clone()]).collect()
}

/// `|n_m/(n_m+n_f) − 0.5|` pooled over all sentences.
pub fn gender_count_bias_from(sentences: &[Sentence], lexicon: &GenderLexicon) -> Result<f64> {
    let (mut m, mut f) = (0usize, 0usize);
    for s in sentences {
        let (a, b) = lexicon.count(s);
        m += a;
        f += b;
    }
    if m + f == 0 {
        return Err(Error::NoGenderedTokens);
    }
    // |m/(m+f) - 1/2| written so that swapping m and f is exact
    Ok(m.abs_diff(f) as f64 / (2 * (m + f)) as f64)
}

/// Counts gendered words in the continuations of gender-neutral prompts.
pub fn gender_count_bias(
    model: &LanguageModel,
    prompts: &[NeutralPrompt],
    lexicon: &GenderLexicon,
    gen: &GenConfig,
) -> Result<f64> {
    if prompts.is_empty() {
        return Err(Error::Empty("prompt set"));
    }
    let gens = generate_neutral(model, prompts, gen)?;
    let conts: Vec<Sentence> = gens.into_iter().map(|g| g.continuation).collect();
    gender_count_bias_from(&conts, lexicon)
}

fn distribution_gap(model: &LanguageModel, prompts: &[PromptPair], d: fn(&[f64], &[f64]) -> Result<f64>) -> Result<f64> {
    if prompts.is_empty() {
        return Err(Error::Empty("prompt set"));
    }
    let mut vals = Vec::with_capacity(prompts.len());
    for p in prompts {
        let a = model.next_token_distribution(&p.male)?;
        let b = model.next_token_distribution(&p.female)?;
        vals.push(d(&a.probs, &b.probs)?);
    }
    Ok(sorted_sum(vals) / prompts.len() as f64)
}

/// Mean symmetrized KL between next-token distributions of paired contexts.
pub fn kl_bias(model: &LanguageModel, prompts: &[PromptPair]) -> Result<f64> {
    distribution_gap(model, prompts, average_kl)
}

/// Mean Hellinger distance between next-token distributions of paired contexts.
pub fn hellinger_bias(model: &LanguageModel, prompts: &[PromptPair]) -> Result<f64> {
    distribution_gap(model, prompts, hellinger)
}

/// Percentage of triples whose stereotypical sentence is more probable than
/// the anti-stereotypical one; exact ties count half.
pub fn stereotype_preference_rate(model: &LanguageModel, triples: &[StereoTriple]) -> Result<f64> {
    if triples.is_empty() {
        return Err(Error::Empty("triple set"));
    }
    let mut wins = 0.0;
    for t in triples {
        let s = model.sequence_log_prob(&t.stereo)?;
        let a = model.sequence_log_prob(&t.anti)?;
        if s > a {
            wins += 1.0;
        } else if s == a {
            wins += 0.5;
        }
    }
    Ok(100.0 * wins / triples.len() as f64)
}
