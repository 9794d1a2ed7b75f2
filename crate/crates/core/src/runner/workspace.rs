use std::path::{Path, PathBuf};

use crate::cda::{augment, counterfactual, GenderLexicon, MixingRatio};
use crate::corpus::{generate_synthetic_corpus, split_validation_by_gender, Corpus, Provenance, Sentence, Vocabulary};
use crate::dp::{train, DPConfig, TrainData, TrainObserver, TrainOutcome, TrainingLog};
use crate::error::{Error, Result};
use crate::metrics::{full_report, BiasReport, EvalFixtures, GenConfig, ReportMeta};
use crate::model::{Dims, LMParams, LanguageModel};
use crate::probes::DisparityTrace;
use crate::seed;

use super::spec::{CellKey, CorpusSource, RunSpec};

/// Data shared by every cell of a run: corpora, gendered validation splits,
/// vocabulary and evaluation fixtures.
#[derive(Debug, Clone)]
pub struct Workspace {
    pub train: Corpus,
    pub validation: Corpus,
    pub female: Corpus,
    pub male: Corpus,
    pub lexicon: GenderLexicon,
    pub fixtures: EvalFixtures,
    pub vocab: Vocabulary,
}

fn fixture_corpus(fixtures: &EvalFixtures) -> Corpus {
    let mut sentences: Vec<Sentence> = Vec::new();
    for p in fixtures.all_pairs() {
        sentences.push(p.male.clone());
        sentences.push(p.female.clone());
    }
    for p in &fixtures.neutral_prompts {
        sentences.push(p.context.clone());
    }
    for t in &fixtures.triples {
        sentences.extend([t.stereo.clone(), t.anti.clone(), t.unrelated.clone()]);
    }
    Corpus::possibly_empty(sentences, Provenance::File)
}

impl Workspace {
    pub fn prepare(spec: &RunSpec) -> Result<Workspace> {
        let lexicon = match &spec.lexicon {
            Some(p) => GenderLexicon::load(p)?,
            None => GenderLexicon::default_list(),
        };
        let fixtures = EvalFixtures::builtin(lexicon.clone())?;
        let fixtures = match &spec.fixtures_dir {
            Some(dir) => fixtures.with_overrides(dir)?,
            None => fixtures,
        };
        let (train, generated_validation) = match &spec.corpus {
            CorpusSource::Synthetic(skew) => {
                let train = generate_synthetic_corpus(skew)?;
                let mut vskew = skew.clone();
                vskew.seed = seed::derive(skew.seed, &["validation"]);
                vskew.n_sentences = spec.validation_size;
                (train, Some(generate_synthetic_corpus(&vskew)?))
            }
            CorpusSource::File(p) => (Corpus::load(p)?, None),
        };
        let validation = match (&spec.validation, generated_validation) {
            (Some(p), _) => Corpus::load(p)?,
            (None, Some(v)) => v,
            (None, None) => train.clone(),
        };
        Workspace::from_parts(train, validation, lexicon, fixtures, spec.min_gendered, spec.min_count)
    }

    /// Builds the vocabulary over the corpus, its full counterfactual image,
    /// the validation corpus and the fixture texts.
    pub fn from_parts(
        train: Corpus,
        validation: Corpus,
        lexicon: GenderLexicon,
        fixtures: EvalFixtures,
        min_gendered: usize,
        min_count: usize,
    ) -> Result<Workspace> {
        let (female, male) = split_validation_by_gender(&validation, &lexicon, min_gendered);
        if female.is_empty() || male.is_empty() {
            log::warn!(
                "gender validation splits have {} female and {} male sentences",
                female.len(),
                male.len()
            );
        }
        let image = Corpus::possibly_empty(
            train.sentences().iter().map(|s| counterfactual(s, &lexicon)).collect(),
            Provenance::Augmented,
        );
        let mut vocab = Vocabulary::build(&train.concat(&image, Provenance::Augmented), min_count)?;
        vocab.extend_with(&validation);
        vocab.extend_with(&fixture_corpus(&fixtures));
        Ok(Workspace {
            train,
            validation,
            female,
            male,
            lexicon,
            fixtures,
            vocab,
        })
    }

    pub fn dims(&self, spec: &RunSpec) -> Dims {
        Dims::new(self.vocab.len(), spec.shape.embed, spec.shape.window, spec.shape.hidden)
    }

    /// A digest of the shared data, so cached cells are invalidated when any
    /// input changes.
    pub fn digest(&self) -> String {
        seed::sha256_hex(format!(
            "{}\n--\n{}\n--\n{}",
            self.train.to_text(),
            self.validation.to_text(),
            self.vocab.tokens().join("\n")
        ))
    }
}

/// Outputs of one trained and evaluated cell.
#[derive(Debug, Clone)]
pub struct CellOutput {
    pub key: CellKey,
    pub params: LMParams,
    pub report: BiasReport,
    pub log: TrainingLog,
    pub trace: Option<DisparityTrace>,
}

impl CellOutput {
    /// Final-epoch female/male gradient L1 ratio.
    pub fn final_grad_ratio(&self) -> Option<f64> {
        self.trace.as_ref()?.last()?.ratio()
    }
}

pub fn cell_config(spec: &RunSpec, key: &CellKey) -> DPConfig {
    DPConfig {
        privacy: key.mode,
        ..spec.dp.clone()
    }
}

pub fn cell_gen(spec: &RunSpec, key: &CellKey) -> GenConfig {
    GenConfig {
        seed: seed::derive(key.seed, &["generate"]),
        ..spec.gen
    }
}

/// Trains one cell on the augmented corpus and evaluates it.
pub fn run_cell(
    ws: &Workspace,
    spec: &RunSpec,
    key: &CellKey,
    observer: &mut dyn TrainObserver,
) -> Result<CellOutput> {
    let ratio = MixingRatio::new(key.mixing_ratio)?;
    let corpus = augment(&ws.train, ratio, &ws.lexicon, seed::derive(key.seed, &["augment"]));
    let init = LMParams::init(ws.dims(spec), seed::derive(key.seed, &["init"]));
    let model = LanguageModel::new(ws.vocab.clone(), init)?;
    let config = cell_config(spec, key);
    let data = TrainData {
        train: &corpus,
        valid: Some(&ws.validation),
        female: (!ws.female.is_empty()).then_some(&ws.female),
        male: (!ws.male.is_empty()).then_some(&ws.male),
    };
    let TrainOutcome {
        params,
        log,
        mechanism,
        ..
    } = train(&model, data, &config, seed::derive(key.seed, &["train"]), observer)?;
    let trained = LanguageModel::new(ws.vocab.clone(), params)?;
    let perplexity = log.records.last().and_then(|r| r.ppl_all);
    let meta = ReportMeta {
        mode: key.mode.label(),
        epsilon: match key.mode {
            crate::dp::PrivacyTarget::Epsilon(e) => Some(e),
            _ => None,
        },
        sigma: mechanism.sigma,
        mixing_ratio: key.mixing_ratio,
        seed: key.seed,
        decoding: String::new(),
        n_tokens: 0,
        samples: 0,
        perplexity,
    };
    let report = full_report(&trained, &ws.fixtures, None, &cell_gen(spec, key), meta)?;
    let trace = DisparityTrace::from_log(&log).ok();
    Ok(CellOutput {
        key: *key,
        params: trained.params,
        report,
        log,
        trace,
    })
}

pub(crate) fn cell_dir(out_dir: &Path, key: &CellKey) -> PathBuf {
    out_dir.join("cells").join(key.label())
}

pub(crate) fn check_nonempty(ws: &Workspace) -> Result<()> {
    if ws.train.is_empty() {
        return Err(Error::Empty("training corpus"));
    }
    Ok(())
}
