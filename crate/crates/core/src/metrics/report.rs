use std::fmt::Write as _;
use std::path::Path;

use crate::table::{fmt_opt, parse_opt};
use crate::error::{read_to_string, write_file, Error, Result};
use crate::model::LanguageModel;

use super::{
    gender_count_bias, generate_pairs, hellinger_bias, kl_bias, occupation_bias_from, pair_sentences, score_gap,
    stereotype_preference_rate, EvalFixtures, GenConfig, Scorer,
};

/// Column names of the six bias metrics, in report order.
pub const METRIC_NAMES: [&str; 6] = [
    "toxicity_bias",
    "sentiment_bias",
    "occupation_bias",
    "gender_count_bias",
    "kl_bias",
    "hellinger_bias",
];

/// How the evaluated model was produced and evaluated.
#[derive(Debug, Clone, PartialEq)]
pub struct ReportMeta {
    pub mode: String,
    /// Target ε; `None` for non-private training.
    pub epsilon: Option<f64>,
    pub sigma: f64,
    pub mixing_ratio: f64,
    pub seed: u64,
    pub decoding: String,
    pub n_tokens: usize,
    pub samples: usize,
    pub perplexity: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BiasReport {
    pub meta: ReportMeta,
    pub toxicity_bias: f64,
    pub sentiment_bias: f64,
    pub occupation_bias: f64,
    /// `None` when no generation contained a gendered word.
    pub gender_count_bias: Option<f64>,
    pub kl_bias: f64,
    pub hellinger_bias: f64,
    pub stereotype_preference_rate: f64,
}

const HEADER: &str = "mode,epsilon,sigma,mixing_ratio,seed,decoding,n_tokens,samples,perplexity,\
toxicity_bias,sentiment_bias,occupation_bias,gender_count_bias,kl_bias,hellinger_bias,stereotype_preference_rate";

impl BiasReport {
    pub fn metric(&self, name: &str) -> Option<f64> {
        match name {
            "toxicity_bias" => Some(self.toxicity_bias),
            "sentiment_bias" => Some(self.sentiment_bias),
            "occupation_bias" => Some(self.occupation_bias),
            "gender_count_bias" => self.gender_count_bias,
            "kl_bias" => Some(self.kl_bias),
            "hellinger_bias" => Some(self.hellinger_bias),
            "stereotype_preference_rate" => Some(self.stereotype_preference_rate),
            _ => None,
        }
    }

    pub fn csv_header() -> &'static str {
        HEADER
    }

    pub fn csv_row(&self) -> String {
        let m = &self.meta;
        let mut row = String::new();
        let _ = write!(
            row,
            "{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{}",
            m.mode,
            fmt_opt(m.epsilon),
            m.sigma,
            m.mixing_ratio,
            m.seed,
            m.decoding,
            m.n_tokens,
            m.samples,
            fmt_opt(m.perplexity),
            self.toxicity_bias,
            self.sentiment_bias,
            self.occupation_bias,
            fmt_opt(self.gender_count_bias),
            self.kl_bias,
            self.hellinger_bias,
            self.stereotype_preference_rate,
        );
        row
    }

    pub fn to_csv(reports: &[BiasReport]) -> String {
        let mut out = format!("{HEADER}\n");
        for r in reports {
            out.push_str(&r.csv_row());
            out.push('\n');
        }
        out
    }

    pub fn from_csv(file: &str, text: &str) -> Result<Vec<BiasReport>> {
        let perr = |line: usize, msg: String| Error::Parse {
            file: file.to_string(),
            line,
            msg,
        };
        let mut lines = text.lines().enumerate();
        match lines.next() {
            Some((_, h)) if h.trim() == HEADER => {}
            _ => return Err(perr(1, "unexpected header".into())),
        }
        let mut out = Vec::new();
        for (i, line) in lines {
            let n = i + 1;
            if line.trim().is_empty() {
                continue;
            }
            let c: Vec<&str> = line.split(',').collect();
            if c.len() != 16 {
                return Err(perr(n, format!("expected 16 columns, got {}", c.len())));
            }
            let opt = |s: &str| parse_opt(file, n, s);
            let req = |s: &str| opt(s)?.ok_or_else(|| perr(n, "missing value".into()));
            let int = |s: &str| s.parse::<u64>().map_err(|_| perr(n, format!("bad integer {s:?}")));
            out.push(BiasReport {
                meta: ReportMeta {
                    mode: c[0].to_string(),
                    epsilon: opt(c[1])?,
                    sigma: req(c[2])?,
                    mixing_ratio: req(c[3])?,
                    seed: int(c[4])?,
                    decoding: c[5].to_string(),
                    n_tokens: int(c[6])? as usize,
                    samples: int(c[7])? as usize,
                    perplexity: opt(c[8])?,
                },
                toxicity_bias: req(c[9])?,
                sentiment_bias: req(c[10])?,
                occupation_bias: req(c[11])?,
                gender_count_bias: opt(c[12])?,
                kl_bias: req(c[13])?,
                hellinger_bias: req(c[14])?,
                stereotype_preference_rate: req(c[15])?,
            });
        }
        Ok(out)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        write_file(path, BiasReport::to_csv(std::slice::from_ref(self)))
    }

    pub fn load(path: &Path) -> Result<BiasReport> {
        let mut rows = BiasReport::from_csv(&path.display().to_string(), &read_to_string(path)?)?;
        if rows.len() != 1 {
            return Err(Error::Shape {
                expected: 1,
                got: rows.len(),
            });
        }
        Ok(rows.remove(0))
    }
}

/// Computes all seven measures, scoring completions with `toxicity` and
/// `sentiment` (the fixtures' lexicon scorers when `None`).
pub fn full_report(
    model: &LanguageModel,
    fixtures: &EvalFixtures,
    scorers: Option<(&dyn Scorer, &dyn Scorer)>,
    gen: &GenConfig,
    mut meta: ReportMeta,
) -> Result<BiasReport> {
    let (tox, sent): (&dyn Scorer, &dyn Scorer) = scorers.unwrap_or((&fixtures.toxicity, &fixtures.sentiment));
    let tox_gens = generate_pairs(model, &fixtures.toxicity_prompts, gen)?;
    let sent_gens = generate_pairs(model, &fixtures.sentiment_prompts, gen)?;
    let mut all = pair_sentences(&tox_gens);
    all.extend(pair_sentences(&sent_gens));
    let gender_count = match gender_count_bias(model, &fixtures.neutral_prompts, &fixtures.lexicon, gen) {
        Ok(v) => Some(v),
        Err(Error::NoGenderedTokens) => {
            log::warn!("no gendered tokens in neutral-prompt completions; gender_count_bias left empty");
            None
        }
        Err(e) => return Err(e),
    };
    let pairs: Vec<_> = fixtures.all_pairs().into_iter().cloned().collect();
    meta.decoding = gen.decoding.label();
    meta.n_tokens = gen.n_tokens;
    meta.samples = gen.samples;
    Ok(BiasReport {
        toxicity_bias: score_gap(&tox_gens, tox)?,
        sentiment_bias: score_gap(&sent_gens, sent)?,
        occupation_bias: occupation_bias_from(&all, &fixtures.occupations, &fixtures.lexicon)?,
        gender_count_bias: gender_count,
        kl_bias: kl_bias(model, &pairs)?,
        hellinger_bias: hellinger_bias(model, &pairs)?,
        stereotype_preference_rate: stereotype_preference_rate(model, &fixtures.triples)?,
        meta,
    })
}
