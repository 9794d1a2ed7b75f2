#![allow(dead_code)]

use dpbias::cda::GenderLexicon;
use dpbias::corpus::{Corpus, Provenance, Sentence, Vocabulary};

/// (q, sigma, alpha, rdp) computed offline by an independent accountant.
pub const REFERENCE_RDP: [(f64, f64, f64, f64); 10] = [
    (0.01, 1.0, 32.0, 11.246275937048072),
    (0.01, 1.0, 2.0, 0.00017181342207455162),
    (0.0016, 0.8, 8.0, 0.00011084561649213538),
    (0.0016, 1.2, 1.5, 1.9311805730786e-06),
    (0.05, 2.0, 4.5, 0.0016581222633079342),
    (0.1, 0.7, 3.0, 0.24606477989660014),
    (0.001, 5.0, 64.0, 1.3093021994478085e-06),
    (0.02, 1.5, 12.25, 0.0016003687515142057),
    (0.3, 3.0, 20.0, 0.20315529185169712),
    (0.004, 0.9, 256.0, 152.48157765224926),
];

/// RDP of the subsampled Gaussian by direct numerical integration of
/// `E_{z~N(0,σ²)}[((1-q) + q·exp((2z-1)/(2σ²)))^α]`.
pub fn rdp_by_quadrature(q: f64, sigma: f64, alpha: f64) -> f64 {
    let s2 = sigma * sigma;
    let lo = -40.0 * sigma - 5.0;
    let hi = 40.0 * sigma + alpha + 5.0;
    let n = 400_000;
    let h = (hi - lo) / n as f64;
    let log_norm = -(2.0 * std::f64::consts::PI * s2).sqrt().ln();
    let mut terms = Vec::with_capacity(n + 1);
    for i in 0..=n {
        let z = lo + h * i as f64;
        let x = (2.0 * z - 1.0) / (2.0 * s2);
        // ln((1-q) + q e^x) without overflow
        let mix = if x > 0.0 {
            x + ((1.0 - q) * (-x).exp() + q).ln()
        } else {
            ((1.0 - q) + q * x.exp()).ln()
        };
        let w: f64 = if i == 0 || i == n { 0.5 } else { 1.0 };
        terms.push(w.ln() + log_norm - z * z / (2.0 * s2) + alpha * mix);
    }
    let m = terms.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let log_a = m + terms.iter().map(|t| (t - m).exp()).sum::<f64>().ln() + h.ln();
    log_a / (alpha - 1.0)
}

pub fn lexicon() -> GenderLexicon {
    GenderLexicon::default_list()
}

pub fn corpus(lines: &[&str]) -> Corpus {
    Corpus::new(lines.iter().map(|l| Sentence::parse(l)).collect(), Provenance::File).unwrap()
}

/// A small gender-balanced corpus in the synthetic grammar's style.
pub fn fixture_corpus() -> Corpus {
    corpus(&[
        "the man works as a surgeon .",
        "the woman works as a nurse .",
        "he is known to be brave .",
        "she is known to be gentle .",
        "the king was hired as a banker .",
        "the queen was hired as a librarian .",
        "my brother seems tired .",
        "my sister seems busy .",
        "the teacher said that he works as a baker .",
        "the teacher said that she works as a baker .",
    ])
}

pub fn vocab_for(c: &Corpus) -> Vocabulary {
    Vocabulary::build(c, 1).unwrap()
}

/// Random sentence over lexicon words, their hyphenated forms and filler,
/// with mixed casing.
pub fn random_sentence(rng: &mut impl rand::Rng, lex: &GenderLexicon) -> Sentence {
    use dpbias::corpus::{Casing, Token};
    const FILLER: &[&str] = &["the", "a", "doctor", "his", "her", "said", ".", ",", "brave", "x"];
    let len = rng.gen_range(0..16);
    let tokens = (0..len)
        .map(|_| {
            let word = if rng.gen_bool(0.5) {
                let (m, f) = &lex.pairs()[rng.gen_range(0..lex.len())];
                if rng.gen_bool(0.5) { m.clone() } else { f.clone() }
            } else {
                FILLER[rng.gen_range(0..FILLER.len())].to_string()
            };
            match rng.gen_range(0..3) {
                0 => Token::new(word),
                1 => Token::new(Casing::Capitalized.apply(&word)),
                _ => Token::new(word.to_uppercase()),
            }
        })
        .collect();
    Sentence::from_tokens(tokens)
}

pub struct Setup {
    pub model: dpbias::model::LanguageModel,
    pub train: Corpus,
    pub valid: Corpus,
    pub female: Corpus,
    pub male: Corpus,
}

/// A small synthetic training problem with gendered validation splits.
pub fn small_setup(n: usize) -> Setup {
    use dpbias::corpus::{generate_synthetic_corpus, split_validation_by_gender, SkewSpec};
    use dpbias::model::{Dims, LMParams, LanguageModel};
    let train = generate_synthetic_corpus(&SkewSpec {
        n_sentences: n,
        ..SkewSpec::desk_default(5)
    })
    .unwrap();
    let valid = generate_synthetic_corpus(&SkewSpec {
        n_sentences: 200,
        ..SkewSpec::desk_default(6)
    })
    .unwrap();
    let (female, male) = split_validation_by_gender(&valid, &lexicon(), 1);
    let mut vocab = Vocabulary::build(&train, 1).unwrap();
    vocab.extend_with(&valid);
    let dims = Dims::new(vocab.len(), 8, 3, 16);
    let model = LanguageModel::new(vocab, LMParams::init(dims, 1)).unwrap();
    Setup {
        model,
        train,
        valid,
        female,
        male,
    }
}

impl Setup {
    pub fn data(&self) -> dpbias::dp::TrainData<'_> {
        dpbias::dp::TrainData {
            train: &self.train,
            valid: Some(&self.valid),
            female: Some(&self.female),
            male: Some(&self.male),
        }
    }
}

/// Records every clipping call.
#[derive(Default)]
pub struct ClipRecorder {
    pub calls: Vec<(f64, f64)>,
}

impl dpbias::dp::TrainObserver for ClipRecorder {
    fn on_clip(&mut self, pre: f64, post: f64) {
        self.calls.push((pre, post));
    }
}

/// Workspace over the small setup's corpora with the built-in fixtures.
pub fn fixture_workspace() -> dpbias::runner::Workspace {
    use dpbias::metrics::EvalFixtures;
    let s = small_setup(400);
    dpbias::runner::Workspace::from_parts(s.train, s.valid, lexicon(), EvalFixtures::builtin(lexicon()).unwrap(), 1, 1)
        .unwrap()
}

/// A briefly trained non-private model over the workspace vocabulary.
pub fn trained_model(ws: &dpbias::runner::Workspace) -> dpbias::model::LanguageModel {
    use dpbias::dp::{train, DPConfig, NoObserver, PrivacyTarget, TrainData};
    use dpbias::model::{Dims, LMParams, LanguageModel};
    let dims = Dims::new(ws.vocab.len(), 8, 4, 16);
    let model = LanguageModel::new(ws.vocab.clone(), LMParams::init(dims, 2)).unwrap();
    let cfg = DPConfig {
        privacy: PrivacyTarget::NonPrivate,
        lr: 0.01,
        epochs: 2,
        ..DPConfig::default()
    };
    let data = TrainData {
        train: &ws.train,
        valid: None,
        female: None,
        male: None,
    };
    let out = train(&model, data, &cfg, 0, &mut NoObserver).unwrap();
    LanguageModel::new(ws.vocab.clone(), out.params).unwrap()
}

/// Copies each male word's embedding row onto its female counterpart.
pub fn tie_gendered_embeddings(model: &mut dpbias::model::LanguageModel, lex: &GenderLexicon) {
    for (m, f) in lex.pairs() {
        if let (Some(mi), Some(fi)) = (model.vocab.get(m), model.vocab.get(f)) {
            let row = model.params.embedding(mi).to_vec();
            model.params.embedding_mut(fi).copy_from_slice(&row);
        }
    }
}

/// A matrix small enough to run in a few seconds.
pub fn tiny_spec(out: &std::path::Path) -> dpbias::runner::RunSpec {
    use dpbias::corpus::SkewSpec;
    use dpbias::runner::{CorpusSource, ModelShape, RunSpec};
    let mut spec = RunSpec::desk_default();
    spec.corpus = CorpusSource::Synthetic(SkewSpec {
        n_sentences: 120,
        ..SkewSpec::desk_default(0)
    });
    spec.validation_size = 80;
    spec.min_gendered = 1;
    spec.modes = vec![dpbias::dp::PrivacyTarget::Epsilon(3.0), dpbias::dp::PrivacyTarget::NonPrivate];
    spec.mixing_ratios = vec![0.0];
    spec.seeds = vec![0];
    spec.shape = ModelShape {
        embed: 6,
        window: 3,
        hidden: 8,
    };
    spec.dp.lr = 0.01;
    spec.dp.epochs = 2;
    spec.gen.n_tokens = 8;
    spec.out_dir = out.to_path_buf();
    spec
}

/// Relative path and contents of every file under `dir`, sorted.
pub fn snapshot(dir: &std::path::Path) -> Vec<(String, Vec<u8>)> {
    fn walk(root: &std::path::Path, dir: &std::path::Path, out: &mut Vec<(String, Vec<u8>)>) {
        for entry in std::fs::read_dir(dir).unwrap() {
            let path = entry.unwrap().path();
            if path.is_dir() {
                walk(root, &path, out);
            } else {
                let rel = path.strip_prefix(root).unwrap().display().to_string();
                out.push((rel, std::fs::read(&path).unwrap()));
            }
        }
    }
    let mut out = Vec::new();
    walk(dir, dir, &mut out);
    out.sort();
    out
}
