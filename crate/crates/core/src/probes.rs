//! Gradient- and perplexity-disparity diagnostics on gendered validation
//! splits, and the swapped-gender split experiment.

use std::fmt::Write as _;
use std::path::Path;

use crate::cda::{augment, GenderLexicon, MixingRatio};
use crate::corpus::{swap_gender_split, Corpus};
use crate::dp::{train, DPConfig, NoObserver, TrainData, TrainingLog};
use crate::error::{write_file, Error, Result};
use crate::metrics::{toxicity_bias, EvalFixtures, GenConfig};
use crate::model::{Activations, LMParams, LanguageModel};
use crate::table::fmt_opt;

/// Ratios with a denominator at or below this are reported as undefined.
pub const RATIO_FLOOR: f64 = 1e-12;

/// Aggregate gradient magnitudes of a split, measured without clipping or noise.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GradientStats {
    /// L1 norm of the mean per-sentence gradient.
    pub l1_of_mean: f64,
    /// Mean of the per-sentence gradient L1 norms.
    pub mean_l1: f64,
}

/// Gradient statistics of encoded sentences, or `None` for an empty split.
pub fn gradient_stats(params: &LMParams, split: &[Vec<usize>]) -> Result<Option<GradientStats>> {
    if split.is_empty() {
        return Ok(None);
    }
    let len = params.len();
    let mut sum = vec![0.0; len];
    let mut grad = vec![0.0; len];
    let mut act = Activations::default();
    let mut norms = Vec::with_capacity(split.len());
    for ids in split {
        grad.iter_mut().for_each(|g| *g = 0.0);
        params.sentence_loss_and_grad(ids, &mut grad, &mut act)?;
        norms.push(grad.iter().map(|g| g.abs()).sum::<f64>());
        for (s, g) in sum.iter_mut().zip(&grad) {
            *s += g;
        }
    }
    let n = split.len() as f64;
    norms.sort_by(f64::total_cmp);
    Ok(Some(GradientStats {
        l1_of_mean: sum.iter().map(|s| (s / n).abs()).sum(),
        mean_l1: norms.iter().sum::<f64>() / n,
    }))
}

/// L1 norm of the mean unclipped sentence gradient over `split`.
pub fn split_gradient_l1(model: &LanguageModel, split: &Corpus) -> Result<f64> {
    let ids: Vec<Vec<usize>> = split.sentences().iter().map(|s| model.encode(s)).collect();
    gradient_stats(&model.params, &ids)?
        .map(|g| g.l1_of_mean)
        .ok_or(Error::Empty("split"))
}

pub fn ratio(num: f64, den: f64) -> Option<f64> {
    (den.abs() > RATIO_FLOOR).then(|| num / den)
}

#[derive(Debug, Clone, PartialEq)]
pub struct DisparityRecord {
    pub epoch: usize,
    pub l1_female: f64,
    pub l1_male: f64,
    pub ppl_female: f64,
    pub ppl_male: f64,
    pub mean_l1_female: f64,
    pub mean_l1_male: f64,
}

impl DisparityRecord {
    pub fn ratio(&self) -> Option<f64> {
        ratio(self.l1_female, self.l1_male)
    }

    pub fn ppl_ratio(&self) -> Option<f64> {
        ratio(self.ppl_female, self.ppl_male)
    }

    pub fn mean_l1_ratio(&self) -> Option<f64> {
        ratio(self.mean_l1_female, self.mean_l1_male)
    }
}

/// Per-epoch female/male gradient and perplexity comparison.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct DisparityTrace {
    pub records: Vec<DisparityRecord>,
}

impl DisparityTrace {
    /// Extracts the trace from a training log that evaluated both splits.
    pub fn from_log(log: &TrainingLog) -> Result<DisparityTrace> {
        let mut records = Vec::with_capacity(log.records.len());
        for r in &log.records {
            let (Some(f), Some(m), Some(pf), Some(pm)) = (r.grad_female, r.grad_male, r.ppl_female, r.ppl_male)
            else {
                return Err(Error::Empty("gender validation split"));
            };
            records.push(DisparityRecord {
                epoch: r.epoch,
                l1_female: f.l1_of_mean,
                l1_male: m.l1_of_mean,
                ppl_female: pf,
                ppl_male: pm,
                mean_l1_female: f.mean_l1,
                mean_l1_male: m.mean_l1,
            });
        }
        Ok(DisparityTrace { records })
    }

    pub fn last(&self) -> Option<&DisparityRecord> {
        self.records.last()
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from(
            "epoch,l1_female,l1_male,ratio,ppl_female,ppl_male,ppl_ratio,mean_l1_female,mean_l1_male,mean_l1_ratio\n",
        );
        for r in &self.records {
            let _ = writeln!(
                out,
                "{},{},{},{},{},{},{},{},{},{}",
                r.epoch,
                r.l1_female,
                r.l1_male,
                fmt_opt(r.ratio()),
                r.ppl_female,
                r.ppl_male,
                fmt_opt(r.ppl_ratio()),
                r.mean_l1_female,
                r.mean_l1_male,
                fmt_opt(r.mean_l1_ratio()),
            );
        }
        out
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        write_file(path, self.to_csv())
    }
}

/// Outcome of training and then probing the two swapped-gender halves.
#[derive(Debug, Clone, PartialEq)]
pub struct SwapResult {
    /// Gradient L1 ratio of split A (female-heavy) to split B (male-heavy).
    pub grad_ratio: Option<f64>,
    pub ppl_a: f64,
    pub ppl_b: f64,
    pub toxicity_bias: f64,
}

/// Inputs of [`swapped_experiment`]. `model` holds the initial parameters
/// and a vocabulary covering both the training and probe corpora.
pub struct SwapSetup<'a> {
    pub model: &'a LanguageModel,
    pub train: &'a Corpus,
    pub probe: &'a Corpus,
    pub lexicon: &'a GenderLexicon,
    pub mixing_ratio: MixingRatio,
    pub config: &'a DPConfig,
    pub fixtures: &'a EvalFixtures,
    pub gen: GenConfig,
}

/// Splits `probe` into female-heavy and male-heavy halves, trains on
/// `train` (augmented at the mixing ratio), and reports the gradient ratio,
/// both perplexities and the toxicity bias of the trained model.
pub fn swapped_experiment(setup: &SwapSetup<'_>, seed: u64) -> Result<SwapResult> {
    let (a, b) = swap_gender_split(setup.probe, setup.lexicon, crate::seed::derive(seed, &["swap-split"]));
    if a.is_empty() || b.is_empty() {
        return Err(Error::Empty("swap split"));
    }
    let train_corpus = augment(
        setup.train,
        setup.mixing_ratio,
        setup.lexicon,
        crate::seed::derive(seed, &["augment"]),
    );
    let data = TrainData {
        train: &train_corpus,
        valid: None,
        female: Some(&a),
        male: Some(&b),
    };
    let outcome = train(setup.model, data, setup.config, seed, &mut NoObserver)?;
    let trained = LanguageModel::new(setup.model.vocab.clone(), outcome.params)?;
    let last = outcome.log.records.last().ok_or(Error::Empty("training log"))?;
    let (ga, gb) = match (last.grad_female, last.grad_male) {
        (Some(x), Some(y)) => (x.l1_of_mean, y.l1_of_mean),
        _ => return Err(Error::Empty("swap split")),
    };
    Ok(SwapResult {
        grad_ratio: ratio(ga, gb),
        ppl_a: trained.perplexity(&a)?,
        ppl_b: trained.perplexity(&b)?,
        toxicity_bias: toxicity_bias(
            &trained,
            &setup.fixtures.toxicity_prompts,
            &setup.fixtures.toxicity,
            &setup.gen,
        )?,
    })
}
