use std::path::{Path, PathBuf};

use crate::config::KeyValues;
use crate::corpus::{SkewSpec, SKEW_KEYS};
use crate::dp::{DPConfig, PrivacyTarget};
use crate::error::{read_to_string, Error, Result};
use crate::metrics::GenConfig;
use crate::model::Decoding;

/// Where the training corpus comes from.
#[derive(Debug, Clone, PartialEq)]
pub enum CorpusSource {
    Synthetic(SkewSpec),
    File(PathBuf),
}

/// Hidden sizes of the language model (the vocabulary size comes from data).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ModelShape {
    pub embed: usize,
    pub window: usize,
    pub hidden: usize,
}

impl Default for ModelShape {
    fn default() -> Self {
        ModelShape {
            embed: 32,
            window: 8,
            hidden: 64,
        }
    }
}

/// Everything needed to run a matrix of (privacy mode, mixing ratio, seed) cells.
#[derive(Debug, Clone, PartialEq)]
pub struct RunSpec {
    pub corpus: CorpusSource,
    /// Validation corpus file; synthetic runs generate one when absent.
    pub validation: Option<PathBuf>,
    pub validation_size: usize,
    pub min_gendered: usize,
    pub min_count: usize,
    pub modes: Vec<PrivacyTarget>,
    pub mixing_ratios: Vec<f64>,
    pub seeds: Vec<u64>,
    /// Base optimizer settings; the privacy field is replaced per cell.
    pub dp: DPConfig,
    pub shape: ModelShape,
    /// Generation settings; the seed is replaced per cell.
    pub gen: GenConfig,
    pub lexicon: Option<PathBuf>,
    pub fixtures_dir: Option<PathBuf>,
    pub out_dir: PathBuf,
}

/// Keys accepted in a run configuration file.
pub const RUN_KEYS: &[&str] = &[
    "corpus",
    "validation",
    "validation_size",
    "min_gendered",
    "min_count",
    "epsilons",
    "mixing_ratios",
    "seeds",
    "clip",
    "batch_size",
    "lr",
    "epochs",
    "delta",
    "embed",
    "window",
    "hidden",
    "n_tokens",
    "samples",
    "decoding",
    "temperature",
    "lexicon",
    "fixtures_dir",
    "out_dir",
];

pub fn parse_mode(s: &str) -> Result<PrivacyTarget> {
    match s.trim() {
        "non-private" | "nonprivate" | "inf" => Ok(PrivacyTarget::NonPrivate),
        v => match v.parse::<f64>() {
            Ok(e) if e > 0.0 && e.is_finite() => Ok(PrivacyTarget::Epsilon(e)),
            _ => Err(Error::invalid(format!(
                "privacy mode {v:?} must be a positive epsilon or non-private"
            ))),
        },
    }
}

impl RunSpec {
    /// Desk-scale defaults: synthetic corpus, ε ∈ {3, non-private}, all five
    /// mixing ratios, five seeds.
    pub fn desk_default() -> RunSpec {
        RunSpec {
            corpus: CorpusSource::Synthetic(SkewSpec::desk_default(0)),
            validation: None,
            validation_size: 2000,
            min_gendered: 5,
            min_count: 1,
            modes: vec![PrivacyTarget::Epsilon(3.0), PrivacyTarget::NonPrivate],
            mixing_ratios: vec![0.0, 0.25, 0.5, 0.75, 1.0],
            seeds: vec![0, 1, 2, 3, 4],
            dp: DPConfig::default(),
            shape: ModelShape::default(),
            gen: GenConfig::default(),
            lexicon: None,
            fixtures_dir: None,
            out_dir: PathBuf::from("runs"),
        }
    }

    pub fn load(path: &Path) -> Result<RunSpec> {
        let kv = KeyValues::parse(&path.display().to_string(), &read_to_string(path)?)?;
        let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
        let mut spec = RunSpec::desk_default();
        spec.apply_config(&kv, &base)?;
        Ok(spec)
    }

    /// Applies `key = value` settings over the current values. Corpus
    /// generation keys are accepted alongside run keys; relative paths
    /// resolve against `base`.
    pub fn apply_config(&mut self, kv: &KeyValues, base: &Path) -> Result<()> {
        let allowed: Vec<&str> = RUN_KEYS.iter().chain(SKEW_KEYS).copied().collect();
        kv.check_keys(&allowed)?;
        let resolve = |p: &str| -> PathBuf {
            let p = PathBuf::from(p);
            if p.is_absolute() {
                p
            } else {
                base.join(p)
            }
        };
        if let Some(c) = kv.get("corpus") {
            if c != "synthetic" {
                self.corpus = CorpusSource::File(resolve(c));
            } else if !matches!(self.corpus, CorpusSource::Synthetic(_)) {
                self.corpus = CorpusSource::Synthetic(SkewSpec::desk_default(0));
            }
        }
        let skew = kv.subset(SKEW_KEYS);
        if skew.keys().next().is_some() {
            match &mut self.corpus {
                CorpusSource::Synthetic(s) => s.apply_config(&skew, base)?,
                CorpusSource::File(_) => {
                    return Err(Error::invalid("corpus generation keys given with a corpus file"))
                }
            }
        }
        if let Some(v) = kv.get("validation") {
            self.validation = Some(resolve(v));
        }
        if let Some(v) = kv.parse_value("validation_size")? {
            self.validation_size = v;
        }
        if let Some(v) = kv.parse_value("min_gendered")? {
            self.min_gendered = v;
        }
        if let Some(v) = kv.parse_value("min_count")? {
            self.min_count = v;
        }
        if let Some(v) = kv.parse_list::<String>("epsilons")? {
            self.modes = v.iter().map(|s| parse_mode(s)).collect::<Result<_>>()?;
        }
        if let Some(v) = kv.parse_list("mixing_ratios")? {
            self.mixing_ratios = v;
        }
        if let Some(v) = kv.parse_list("seeds")? {
            self.seeds = v;
        }
        if let Some(v) = kv.parse_value("clip")? {
            self.dp.clip = v;
        }
        if let Some(v) = kv.parse_value("batch_size")? {
            self.dp.batch_size = v;
        }
        if let Some(v) = kv.parse_value("lr")? {
            self.dp.lr = v;
        }
        if let Some(v) = kv.parse_value("epochs")? {
            self.dp.epochs = v;
        }
        if let Some(v) = kv.parse_value("delta")? {
            self.dp.delta = v;
        }
        if let Some(v) = kv.parse_value("embed")? {
            self.shape.embed = v;
        }
        if let Some(v) = kv.parse_value("window")? {
            self.shape.window = v;
        }
        if let Some(v) = kv.parse_value("hidden")? {
            self.shape.hidden = v;
        }
        if let Some(v) = kv.parse_value("n_tokens")? {
            self.gen.n_tokens = v;
        }
        if let Some(v) = kv.parse_value("samples")? {
            self.gen.samples = v;
        }
        let temperature = match self.gen.decoding {
            Decoding::Sample { temperature } => temperature,
            Decoding::Greedy => 1.0,
        };
        let temperature = kv.parse_value("temperature")?.unwrap_or(temperature);
        match kv.get("decoding") {
            Some("greedy") => self.gen.decoding = Decoding::Greedy,
            Some("sample") => self.gen.decoding = Decoding::Sample { temperature },
            Some(other) => return Err(Error::invalid(format!("unknown decoding {other:?}"))),
            None => {
                if let Decoding::Sample { .. } = self.gen.decoding {
                    self.gen.decoding = Decoding::Sample { temperature };
                }
            }
        }
        if let Some(v) = kv.get("lexicon") {
            self.lexicon = Some(resolve(v));
        }
        if let Some(v) = kv.get("fixtures_dir") {
            self.fixtures_dir = Some(resolve(v));
        }
        if let Some(v) = kv.get("out_dir") {
            self.out_dir = resolve(v);
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        if self.modes.is_empty() || self.mixing_ratios.is_empty() || self.seeds.is_empty() {
            return Err(Error::invalid("privacy modes, mixing ratios and seeds must be nonempty"));
        }
        for r in &self.mixing_ratios {
            crate::cda::MixingRatio::new(*r)?;
        }
        let mut seen = std::collections::BTreeSet::new();
        for key in self.cells() {
            if !seen.insert(key.label()) {
                return Err(Error::invalid(format!("duplicate cell {}", key.label())));
            }
        }
        if let CorpusSource::Synthetic(s) = &self.corpus {
            s.validate()?;
        }
        if self.shape.embed == 0 || self.shape.window == 0 || self.shape.hidden == 0 {
            return Err(Error::invalid("model sizes must be positive"));
        }
        if self.gen.samples == 0 {
            return Err(Error::invalid("samples per prompt must be positive"));
        }
        let mut dp = self.dp.clone();
        for m in &self.modes {
            dp.privacy = *m;
            dp.validate()?;
        }
        Ok(())
    }

    /// Cells in mode, ratio, seed order.
    pub fn cells(&self) -> Vec<CellKey> {
        let mut out = Vec::new();
        for &mode in &self.modes {
            for &mixing_ratio in &self.mixing_ratios {
                for &seed in &self.seeds {
                    out.push(CellKey {
                        mode,
                        mixing_ratio,
                        seed,
                    });
                }
            }
        }
        out
    }

    /// Description of every setting shared by all cells, used for hashing.
    pub fn shared_description(&self) -> String {
        format!(
            "corpus={:?}\nvalidation={:?}\nvalidation_size={}\nmin_gendered={}\nmin_count={}\nclip={}\n\
             batch_size={}\nlr={}\nepochs={}\ndelta={}\nshape={:?}\nn_tokens={}\nsamples={}\ndecoding={}\n\
             lexicon={:?}\nfixtures_dir={:?}\n",
            self.corpus,
            self.validation,
            self.validation_size,
            self.min_gendered,
            self.min_count,
            self.dp.clip,
            self.dp.batch_size,
            self.dp.lr,
            self.dp.epochs,
            self.dp.delta,
            self.shape,
            self.gen.n_tokens,
            self.gen.samples,
            self.gen.decoding.label(),
            self.lexicon,
            self.fixtures_dir,
        )
    }

    /// SHA-256 of the full run specification.
    pub fn content_hash(&self) -> String {
        let cells: Vec<String> = self.cells().iter().map(CellKey::label).collect();
        crate::seed::sha256_hex(format!("{}cells={}\n", self.shared_description(), cells.join(",")))
    }
}

/// One cell of the run matrix.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CellKey {
    pub mode: PrivacyTarget,
    pub mixing_ratio: f64,
    pub seed: u64,
}

impl CellKey {
    pub fn label(&self) -> String {
        format!("{}_r{}_s{}", self.mode.label(), self.mixing_ratio, self.seed)
    }

    pub fn is_private(&self) -> bool {
        !matches!(self.mode, PrivacyTarget::NonPrivate)
    }
}
