//! Gender-based validation splits.

use rand::seq::SliceRandom;

use super::{Corpus, Provenance};
use crate::cda::{counterfactual_toward, Gender, GenderLexicon};
use crate::seed;

/// Sentences with at least `min_gendered` female-side tokens go to the
/// female set, likewise for male. A sentence may land in both.
pub fn split_validation_by_gender(
    corpus: &Corpus,
    lexicon: &GenderLexicon,
    min_gendered: usize,
) -> (Corpus, Corpus) {
    let mut female = Vec::new();
    let mut male = Vec::new();
    for s in corpus.sentences() {
        let (m, f) = lexicon.count(s);
        if f >= min_gendered {
            female.push(s.clone());
        }
        if m >= min_gendered {
            male.push(s.clone());
        }
    }
    (
        Corpus::possibly_empty(female, corpus.provenance()),
        Corpus::possibly_empty(male, corpus.provenance()),
    )
}

/// Randomly halves the corpus; in split A every male word becomes female, in
/// split B every female word becomes male. Both are then cut to the same
/// size by random subsetting (original order kept).
pub fn swap_gender_split(corpus: &Corpus, lexicon: &GenderLexicon, seed: u64) -> (Corpus, Corpus) {
    let mut rng = seed::rng(seed, "swap-gender-split");
    let mut order: Vec<usize> = (0..corpus.len()).collect();
    order.shuffle(&mut rng);
    let half = corpus.len() / 2;
    let (a_idx, b_idx) = order.split_at(half);
    let size = a_idx.len().min(b_idx.len());

    let mut take = |idx: &[usize]| -> Vec<usize> {
        let mut idx = idx.to_vec();
        idx.shuffle(&mut rng);
        idx.truncate(size);
        idx.sort_unstable();
        idx
    };
    let a_idx = take(a_idx);
    let b_idx = take(b_idx);

    let build = |idx: &[usize], target: Gender| {
        Corpus::possibly_empty(
            idx.iter()
                .map(|&i| counterfactual_toward(&corpus.sentences()[i], lexicon, target))
                .collect(),
            Provenance::Augmented,
        )
    };
    (build(&a_idx, Gender::Female), build(&b_idx, Gender::Male))
}
