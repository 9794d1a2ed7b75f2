use std::fmt::Write as _;
use std::path::Path;

use rand::Rng;

use super::accountant::{calibrate_sigma, AccountantState};
use super::adam::OptimizerState;
use super::mechanism::{Aggregator, Mechanism};
use crate::corpus::Corpus;
use crate::error::{read_to_string, write_file, Error, Result};
use crate::model::{Activations, LMParams, LanguageModel};
use crate::probes::{gradient_stats, GradientStats};
use crate::seed;
use crate::table::{fmt_opt, parse_opt};

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum PrivacyTarget {
    NonPrivate,
    /// Calibrate the noise multiplier to spend this ε over the whole run.
    Epsilon(f64),
    /// Use this noise multiplier directly.
    NoiseMultiplier(f64),
}

impl PrivacyTarget {
    pub fn label(&self) -> String {
        match self {
            PrivacyTarget::NonPrivate => "non-private".to_string(),
            PrivacyTarget::Epsilon(e) => format!("eps{e}"),
            PrivacyTarget::NoiseMultiplier(s) => format!("sigma{s}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DPConfig {
    pub privacy: PrivacyTarget,
    pub clip: f64,
    pub batch_size: usize,
    pub lr: f64,
    pub epochs: usize,
    pub delta: f64,
}

impl Default for DPConfig {
    fn default() -> Self {
        DPConfig {
            privacy: PrivacyTarget::Epsilon(3.0),
            clip: 0.1,
            batch_size: 16,
            lr: 3e-4,
            epochs: 3,
            delta: 1e-5,
        }
    }
}

impl DPConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.clip > 0.0) {
            return Err(Error::invalid("clip norm must be positive"));
        }
        if self.batch_size == 0 || self.epochs == 0 {
            return Err(Error::invalid("batch size and epochs must be positive"));
        }
        if !(self.lr > 0.0) {
            return Err(Error::invalid("learning rate must be positive"));
        }
        if !(self.delta > 0.0 && self.delta < 1.0) {
            return Err(Error::invalid("delta must lie in (0, 1)"));
        }
        match self.privacy {
            PrivacyTarget::Epsilon(e) if !(e > 0.0) => Err(Error::invalid("target epsilon must be positive")),
            PrivacyTarget::NoiseMultiplier(s) if !(s >= 0.0) => {
                Err(Error::invalid("noise multiplier must be nonnegative"))
            }
            _ => Ok(()),
        }
    }
}

pub fn steps_per_epoch(n: usize, batch_size: usize) -> usize {
    n.div_ceil(batch_size)
}

/// Corpora used by one training run. The splits are only evaluated.
#[derive(Debug, Clone, Copy)]
pub struct TrainData<'a> {
    pub train: &'a Corpus,
    pub valid: Option<&'a Corpus>,
    pub female: Option<&'a Corpus>,
    pub male: Option<&'a Corpus>,
}

/// Hooks into the training loop.
pub trait TrainObserver {
    /// Called for each per-example gradient when clipping applies.
    fn on_clip(&mut self, _pre: f64, _post: f64) {}
    fn on_epoch_end(&mut self, _record: &EpochRecord, _params: &LMParams) {}
}

pub struct NoObserver;

impl TrainObserver for NoObserver {}

#[derive(Debug, Clone, PartialEq)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub ppl_all: Option<f64>,
    pub ppl_female: Option<f64>,
    pub ppl_male: Option<f64>,
    pub grad_female: Option<GradientStats>,
    pub grad_male: Option<GradientStats>,
    pub epsilon_spent: f64,
}

impl EpochRecord {
    pub fn l1_female(&self) -> Option<f64> {
        self.grad_female.map(|g| g.l1_of_mean)
    }

    pub fn l1_male(&self) -> Option<f64> {
        self.grad_male.map(|g| g.l1_of_mean)
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct TrainingLog {
    pub records: Vec<EpochRecord>,
}

const LOG_HEADER: &str = "epoch,train_loss,ppl_all,ppl_female,ppl_male,l1_female,l1_male,epsilon_spent,\
mean_norm_female,mean_norm_male";

impl TrainingLog {
    pub fn to_csv(&self) -> String {
        let mut out = String::from(LOG_HEADER);
        out.push('\n');
        for r in &self.records {
            let _ = writeln!(
                out,
                "{},{},{},{},{},{},{},{},{},{}",
                r.epoch,
                r.train_loss,
                fmt_opt(r.ppl_all),
                fmt_opt(r.ppl_female),
                fmt_opt(r.ppl_male),
                fmt_opt(r.l1_female()),
                fmt_opt(r.l1_male()),
                r.epsilon_spent,
                fmt_opt(r.grad_female.map(|g| g.mean_l1)),
                fmt_opt(r.grad_male.map(|g| g.mean_l1)),
            );
        }
        out
    }

    pub fn from_csv(file: &str, text: &str) -> Result<TrainingLog> {
        let mut lines = text.lines().enumerate();
        match lines.next() {
            Some((_, h)) if h.trim() == LOG_HEADER => {}
            _ => {
                return Err(Error::Parse {
                    file: file.to_string(),
                    line: 1,
                    msg: "unexpected header".into(),
                })
            }
        }
        let mut records = Vec::new();
        for (i, line) in lines {
            let line_no = i + 1;
            let cells: Vec<&str> = line.split(',').collect();
            if cells.len() != 10 {
                return Err(Error::Parse {
                    file: file.to_string(),
                    line: line_no,
                    msg: format!("expected 10 columns, got {}", cells.len()),
                });
            }
            let num = |c: &str| parse_opt(file, line_no, c);
            let required = |c: &str| {
                num(c)?.ok_or_else(|| Error::Parse {
                    file: file.to_string(),
                    line: line_no,
                    msg: "missing value".into(),
                })
            };
            let stats = |l1: Option<f64>, mean: Option<f64>| match (l1, mean) {
                (Some(l1_of_mean), Some(mean_l1)) => Some(GradientStats { l1_of_mean, mean_l1 }),
                _ => None,
            };
            records.push(EpochRecord {
                epoch: required(cells[0])? as usize,
                train_loss: required(cells[1])?,
                ppl_all: num(cells[2])?,
                ppl_female: num(cells[3])?,
                ppl_male: num(cells[4])?,
                grad_female: stats(num(cells[5])?, num(cells[8])?),
                grad_male: stats(num(cells[6])?, num(cells[9])?),
                epsilon_spent: required(cells[7])?,
            });
        }
        Ok(TrainingLog { records })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        write_file(path, self.to_csv())
    }

    pub fn load(path: &Path) -> Result<TrainingLog> {
        TrainingLog::from_csv(&path.display().to_string(), &read_to_string(path)?)
    }
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub params: LMParams,
    pub log: TrainingLog,
    pub mechanism: Mechanism,
    pub epsilon: f64,
}

fn encode_all(model: &LanguageModel, corpus: &Corpus) -> Vec<Vec<usize>> {
    corpus.sentences().iter().map(|s| model.encode(s)).collect()
}

fn perplexity(params: &LMParams, data: &[Vec<usize>], act: &mut Activations) -> Result<Option<f64>> {
    if data.is_empty() {
        return Ok(None);
    }
    let (mut nll, mut n) = (0.0, 0usize);
    for ids in data {
        let (l, c) = params.sentence_loss(ids, act)?;
        nll += l;
        n += c;
    }
    Ok(Some((nll / n as f64).exp()))
}

/// Trains `model.params` with Poisson-subsampled batches at rate `B/N`,
/// per-sentence clipping, Gaussian noise and Adam. The update divides the
/// noisy sum by the expected batch size in every mode.
pub fn train(
    model: &LanguageModel,
    data: TrainData<'_>,
    config: &DPConfig,
    seed: u64,
    observer: &mut dyn TrainObserver,
) -> Result<TrainOutcome> {
    config.validate()?;
    let n = data.train.len();
    if n == 0 {
        return Err(Error::Empty("training corpus"));
    }
    let q = (config.batch_size as f64 / n as f64).min(1.0);
    let steps = steps_per_epoch(n, config.batch_size);
    let total_steps = (steps * config.epochs) as u64;
    let mechanism = match config.privacy {
        PrivacyTarget::NonPrivate => Mechanism::NON_PRIVATE,
        PrivacyTarget::Epsilon(target) => {
            let sigma = calibrate_sigma(target, config.delta, q, total_steps)?;
            Mechanism::private(config.clip, sigma)?
        }
        PrivacyTarget::NoiseMultiplier(sigma) => Mechanism::private(config.clip, sigma)?,
    };
    log::info!(
        "training {} on {n} sentences: q={q:.5}, {total_steps} steps, sigma={}",
        config.privacy.label(),
        mechanism.sigma
    );

    let train_ids = encode_all(model, data.train);
    let valid_ids = data.valid.map(|c| encode_all(model, c)).unwrap_or_default();
    let female_ids = data.female.map(|c| encode_all(model, c)).unwrap_or_default();
    let male_ids = data.male.map(|c| encode_all(model, c)).unwrap_or_default();

    let mut params = model.params.clone();
    let len = params.len();
    let mut opt = OptimizerState::new(len);
    let mut accountant = AccountantState::default();
    let mut act = Activations::default();
    let mut grad = vec![0.0; len];
    let denominator = q * n as f64;
    let mut log = TrainingLog::default();
    let mut step_index = 0u64;

    for epoch in 1..=config.epochs {
        let (mut loss_sum, mut token_count) = (0.0, 0usize);
        for _ in 0..steps {
            let mut batch_rng = seed::stream(seed, "batch", step_index);
            let mut agg = Aggregator::new(mechanism, len);
            for ids in &train_ids {
                if batch_rng.gen::<f64>() >= q {
                    continue;
                }
                grad.iter_mut().for_each(|g| *g = 0.0);
                let (l, c) = params.sentence_loss_and_grad(ids, &mut grad, &mut act)?;
                loss_sum += l;
                token_count += c;
                if let Some((pre, post)) = agg.add(&mut grad)? {
                    observer.on_clip(pre, post);
                }
            }
            if agg.count() > 0 || mechanism.noise_std() > 0.0 {
                let mut noise_rng = seed::stream(seed, "noise", step_index);
                let update = agg.finish(denominator, &mut noise_rng);
                opt.adam_step(params.flat_mut(), &update, config.lr)?;
                if params.flat().iter().any(|p| !p.is_finite()) {
                    return Err(Error::Numeric(format!("non-finite parameters after step {step_index}")));
                }
            }
            step_index += 1;
        }
        let epsilon_spent = if mechanism.is_private() {
            accountant.compose(q, mechanism.sigma, steps as u64)?;
            accountant.epsilon(config.delta)?.0
        } else {
            f64::INFINITY
        };
        let record = EpochRecord {
            epoch,
            train_loss: if token_count > 0 {
                loss_sum / token_count as f64
            } else {
                f64::NAN
            },
            ppl_all: perplexity(&params, &valid_ids, &mut act)?,
            ppl_female: perplexity(&params, &female_ids, &mut act)?,
            ppl_male: perplexity(&params, &male_ids, &mut act)?,
            grad_female: gradient_stats(&params, &female_ids)?,
            grad_male: gradient_stats(&params, &male_ids)?,
            epsilon_spent,
        };
        log::debug!("epoch {epoch}: loss {:.4}, eps {:.3}", record.train_loss, epsilon_spent);
        observer.on_epoch_end(&record, &params);
        log.records.push(record);
    }
    let epsilon = log.records.last().map(|r| r.epsilon_spent).unwrap_or(0.0);
    Ok(TrainOutcome {
        params,
        log,
        mechanism,
        epsilon,
    })
}
