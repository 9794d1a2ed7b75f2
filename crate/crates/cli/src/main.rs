use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use dpbias::cda::{augment, lint_ambiguities, GenderLexicon, MixingRatio};
use dpbias::config::KeyValues;
use dpbias::corpus::{generate_synthetic_corpus, split_validation_by_gender, Corpus, SkewSpec, Vocabulary};
use dpbias::dp::NoObserver;
use dpbias::metrics::{full_report, EvalFixtures, ReportMeta};
use dpbias::model::{LMParams, LanguageModel};
use dpbias::probes::{ratio, split_gradient_l1, swapped_experiment, SwapSetup};
use dpbias::runner::{
    aggregate, cell_gen, collect_from_disk, parse_mode, run_cell, run_matrix, worker_count, write_outputs, CellKey,
    RunSpec, Workspace,
};
use dpbias::Error;

#[derive(Parser)]
#[command(name = "dpbias", version, about = "Measure how private training and data augmentation move gender bias")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic skewed corpus.
    GenCorpus(GenCorpusArgs),
    /// Append counterfactual copies of a fraction of a corpus.
    Augment(AugmentArgs),
    /// Train and evaluate a single cell of a run.
    Train(CellArgs),
    /// Compute the bias report of a saved checkpoint.
    Evaluate(EvaluateArgs),
    /// Gradient and perplexity disparity of a checkpoint, or the swapped-split experiment.
    Probe(ProbeArgs),
    /// Run the full (privacy mode × mixing ratio × seed) matrix.
    Matrix(MatrixArgs),
    /// Rebuild aggregate tables and plot data from a finished run directory.
    Report(RunArgs),
}

#[derive(Args)]
struct GenCorpusArgs {
    /// `key = value` corpus specification.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    rho: Option<f64>,
    #[arg(long)]
    male_share: Option<f64>,
    #[arg(long)]
    n_sentences: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    occupations_file: Option<PathBuf>,
    #[arg(long)]
    descriptors_file: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct AugmentArgs {
    #[arg(long)]
    input: PathBuf,
    #[arg(long)]
    ratio: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Tab-separated male/female word pairs; the bundled list when omitted.
    #[arg(long)]
    lexicon: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
}

/// Run settings shared by the run-level subcommands. Flags override the
/// config file, which overrides the built-in defaults.
#[derive(Args, Clone, Default)]
struct RunArgs {
    /// `key = value` run specification.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    out_dir: Option<PathBuf>,
    /// Corpus file, or `synthetic`.
    #[arg(long)]
    corpus: Option<String>,
    /// Comma list of target epsilons and/or `non-private`.
    #[arg(long)]
    epsilons: Option<String>,
    #[arg(long)]
    mixing_ratios: Option<String>,
    #[arg(long)]
    seeds: Option<String>,
    #[arg(long)]
    rho: Option<f64>,
    #[arg(long)]
    n_sentences: Option<usize>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    lr: Option<f64>,
    #[arg(long)]
    clip: Option<f64>,
    #[arg(long)]
    batch_size: Option<usize>,
    #[arg(long)]
    delta: Option<f64>,
    #[arg(long)]
    samples: Option<usize>,
    #[arg(long)]
    n_tokens: Option<usize>,
    /// `sample` or `greedy`.
    #[arg(long)]
    decoding: Option<String>,
    #[arg(long)]
    temperature: Option<f64>,
    #[arg(long)]
    fixtures_dir: Option<PathBuf>,
    #[arg(long)]
    lexicon: Option<PathBuf>,
}

impl RunArgs {
    fn flags(&self) -> KeyValues {
        let mut kv = KeyValues::default();
        let mut put = |k: &str, v: Option<String>| {
            if let Some(v) = v {
                kv.set(k, v);
            }
        };
        let path = |p: &Option<PathBuf>| p.as_ref().map(|p| absolute(p).display().to_string());
        put("out_dir", path(&self.out_dir));
        put(
            "corpus",
            self.corpus.as_ref().map(|c| {
                if c == "synthetic" {
                    c.clone()
                } else {
                    absolute(Path::new(c)).display().to_string()
                }
            }),
        );
        put("epsilons", self.epsilons.clone());
        put("mixing_ratios", self.mixing_ratios.clone());
        put("seeds", self.seeds.clone());
        put("rho", self.rho.map(|v| v.to_string()));
        put("n_sentences", self.n_sentences.map(|v| v.to_string()));
        put("epochs", self.epochs.map(|v| v.to_string()));
        put("lr", self.lr.map(|v| v.to_string()));
        put("clip", self.clip.map(|v| v.to_string()));
        put("batch_size", self.batch_size.map(|v| v.to_string()));
        put("delta", self.delta.map(|v| v.to_string()));
        put("samples", self.samples.map(|v| v.to_string()));
        put("n_tokens", self.n_tokens.map(|v| v.to_string()));
        put("decoding", self.decoding.clone());
        put("temperature", self.temperature.map(|v| v.to_string()));
        put("fixtures_dir", path(&self.fixtures_dir));
        put("lexicon", path(&self.lexicon));
        kv
    }

    fn spec(&self) -> Result<RunSpec, Error> {
        let mut spec = RunSpec::desk_default();
        if let Some(p) = &self.config {
            let text = std::fs::read_to_string(p).map_err(|e| Error::io(p, e))?;
            let kv = KeyValues::parse(&p.display().to_string(), &text)?;
            spec.apply_config(&kv, p.parent().unwrap_or(Path::new(".")))?;
        }
        spec.apply_config(&self.flags(), Path::new("."))?;
        spec.validate()?;
        Ok(spec)
    }
}

fn absolute(p: &Path) -> PathBuf {
    std::path::absolute(p).unwrap_or_else(|_| p.to_path_buf())
}

#[derive(Args)]
struct CellArgs {
    #[command(flatten)]
    run: RunArgs,
    /// Target epsilon or `non-private`.
    #[arg(long)]
    mode: String,
    #[arg(long, default_value_t = 0.0)]
    ratio: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Args)]
struct EvaluateArgs {
    #[command(flatten)]
    run: RunArgs,
    #[arg(long)]
    checkpoint: PathBuf,
    #[arg(long)]
    vocab: PathBuf,
    /// Seed for generation.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Output CSV; printed to stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct ProbeArgs {
    #[command(flatten)]
    run: RunArgs,
    #[arg(long)]
    checkpoint: Option<PathBuf>,
    #[arg(long)]
    vocab: Option<PathBuf>,
    /// Validation corpus split by gender; the run's validation data when omitted.
    #[arg(long)]
    validation: Option<PathBuf>,
    /// Train on the run corpus and probe swapped-gender halves instead.
    #[arg(long)]
    swap: bool,
    #[arg(long)]
    mode: Option<String>,
    #[arg(long, default_value_t = 0.0)]
    ratio: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Args)]
struct MatrixArgs {
    #[command(flatten)]
    run: RunArgs,
    /// Worker threads; overrides the environment variable.
    #[arg(long)]
    workers: Option<usize>,
}

enum Failure {
    Validation(String),
    Cells(Vec<(String, String)>),
    Io(String),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        if e.is_io() {
            Failure::Io(e.to_string())
        } else {
            Failure::Validation(e.to_string())
        }
    }
}

fn gen_corpus(a: &GenCorpusArgs) -> Result<(), Failure> {
    let mut spec = match &a.config {
        Some(p) => SkewSpec::load(p)?,
        None => SkewSpec::desk_default(0),
    };
    let mut kv = KeyValues::default();
    for (k, v) in [
        ("rho", a.rho.map(|v| v.to_string())),
        ("male_share", a.male_share.map(|v| v.to_string())),
        ("n_sentences", a.n_sentences.map(|v| v.to_string())),
        ("seed", a.seed.map(|v| v.to_string())),
        ("occupations_file", a.occupations_file.as_ref().map(|p| p.display().to_string())),
        ("descriptors_file", a.descriptors_file.as_ref().map(|p| p.display().to_string())),
    ] {
        if let Some(v) = v {
            kv.set(k, v);
        }
    }
    spec.apply_config(&kv, Path::new("."))?;
    let corpus = generate_synthetic_corpus(&spec)?;
    corpus.save(&a.out)?;
    println!("wrote {} sentences to {}", corpus.len(), a.out.display());
    Ok(())
}

fn augment_cmd(a: &AugmentArgs) -> Result<(), Failure> {
    let lexicon = match &a.lexicon {
        Some(p) => GenderLexicon::load(p)?,
        None => GenderLexicon::default_list(),
    };
    let corpus = Corpus::load(&a.input)?;
    let lint = lint_ambiguities(&corpus, &lexicon);
    if !lint.is_empty() {
        for (word, n) in &lint.entries {
            eprintln!("warning: {n} occurrences of {word:?} cannot be swapped by the lexicon");
        }
    }
    let out = augment(&corpus, MixingRatio::new(a.ratio)?, &lexicon, a.seed);
    out.save(&a.out)?;
    println!("wrote {} sentences ({} added) to {}", out.len(), out.len() - corpus.len(), a.out.display());
    Ok(())
}

fn train_cmd(a: &CellArgs) -> Result<(), Failure> {
    let spec = a.run.spec()?;
    let key = CellKey {
        mode: parse_mode(&a.mode)?,
        mixing_ratio: a.ratio,
        seed: a.seed,
    };
    let ws = Workspace::prepare(&spec)?;
    let out = run_cell(&ws, &spec, &key, &mut NoObserver)?;
    let dir = spec.out_dir.join(key.label());
    out.params.save(&dir.join("checkpoint.bin"))?;
    ws.vocab.save(&dir.join("vocab.txt"))?;
    out.report.save(&dir.join("report.csv"))?;
    out.log.save(&dir.join("training_log.csv"))?;
    if let Some(t) = &out.trace {
        t.save(&dir.join("disparity.csv"))?;
    }
    print!("{}", out.log.to_csv());
    println!("{}\n{}", dpbias::metrics::BiasReport::csv_header(), out.report.csv_row());
    Ok(())
}

fn load_model(checkpoint: &Path, vocab: &Path) -> Result<LanguageModel, Failure> {
    Ok(LanguageModel::new(Vocabulary::load(vocab)?, LMParams::load(checkpoint)?)?)
}

fn evaluate_cmd(a: &EvaluateArgs) -> Result<(), Failure> {
    let spec = a.run.spec()?;
    let model = load_model(&a.checkpoint, &a.vocab)?;
    let lexicon = match &spec.lexicon {
        Some(p) => GenderLexicon::load(p)?,
        None => GenderLexicon::default_list(),
    };
    let mut fixtures = EvalFixtures::builtin(lexicon)?;
    if let Some(d) = &spec.fixtures_dir {
        fixtures = fixtures.with_overrides(d)?;
    }
    let key = CellKey {
        mode: dpbias::dp::PrivacyTarget::NonPrivate,
        mixing_ratio: 0.0,
        seed: a.seed,
    };
    let meta = ReportMeta {
        mode: "checkpoint".into(),
        epsilon: None,
        sigma: 0.0,
        mixing_ratio: 0.0,
        seed: a.seed,
        decoding: String::new(),
        n_tokens: 0,
        samples: 0,
        perplexity: None,
    };
    let report = full_report(&model, &fixtures, None, &cell_gen(&spec, &key), meta)?;
    match &a.out {
        Some(p) => report.save(p)?,
        None => println!("{}\n{}", dpbias::metrics::BiasReport::csv_header(), report.csv_row()),
    }
    Ok(())
}

fn probe_cmd(a: &ProbeArgs) -> Result<(), Failure> {
    let spec = a.run.spec()?;
    if a.swap {
        let ws = Workspace::prepare(&spec)?;
        let mode = parse_mode(a.mode.as_deref().unwrap_or("non-private"))?;
        let key = CellKey {
            mode,
            mixing_ratio: a.ratio,
            seed: a.seed,
        };
        let init = LMParams::init(ws.dims(&spec), dpbias::seed::derive(a.seed, &["init"]));
        let model = LanguageModel::new(ws.vocab.clone(), init)?;
        let config = dpbias::runner::cell_config(&spec, &key);
        let setup = SwapSetup {
            model: &model,
            train: &ws.train,
            probe: &ws.validation,
            lexicon: &ws.lexicon,
            mixing_ratio: MixingRatio::new(a.ratio)?,
            config: &config,
            fixtures: &ws.fixtures,
            gen: cell_gen(&spec, &key),
        };
        let r = swapped_experiment(&setup, a.seed)?;
        println!("grad_ratio_a_over_b,ppl_a,ppl_b,toxicity_bias");
        println!(
            "{},{},{},{}",
            r.grad_ratio.map(|v| v.to_string()).unwrap_or_default(),
            r.ppl_a,
            r.ppl_b,
            r.toxicity_bias
        );
        return Ok(());
    }
    let (Some(ck), Some(vocab)) = (&a.checkpoint, &a.vocab) else {
        return Err(Failure::Validation("probe needs --checkpoint and --vocab, or --swap".into()));
    };
    let model = load_model(ck, vocab)?;
    let lexicon = match &spec.lexicon {
        Some(p) => GenderLexicon::load(p)?,
        None => GenderLexicon::default_list(),
    };
    let validation = match &a.validation {
        Some(p) => Corpus::load(p)?,
        None => Workspace::prepare(&spec)?.validation,
    };
    let (female, male) = split_validation_by_gender(&validation, &lexicon, spec.min_gendered);
    let lf = split_gradient_l1(&model, &female)?;
    let lm = split_gradient_l1(&model, &male)?;
    let pf = model.perplexity(&female)?;
    let pm = model.perplexity(&male)?;
    println!("l1_female,l1_male,ratio,ppl_female,ppl_male,ppl_ratio");
    println!(
        "{lf},{lm},{},{pf},{pm},{}",
        ratio(lf, lm).map(|v| v.to_string()).unwrap_or_default(),
        ratio(pf, pm).map(|v| v.to_string()).unwrap_or_default()
    );
    Ok(())
}

fn print_summary(spec: &RunSpec, result: &dpbias::runner::RunMatrixResult) {
    let agg = aggregate(spec, result);
    println!("run-spec sha256 {}", result.spec_hash);
    for row in &agg.increases {
        let cells: Vec<String> = row
            .increases
            .iter()
            .map(|v| v.map(|x| format!("{x:.5}")).unwrap_or_else(|| "-".into()))
            .collect();
        println!("increase at mixing ratio {}: {}", row.mixing_ratio, cells.join(" "));
    }
    for (m, v) in &agg.pearson {
        println!("pearson {m}: {}", v.map(|x| format!("{x:.4}")).unwrap_or_else(|| "-".into()));
    }
}

fn matrix_cmd(a: &MatrixArgs) -> Result<(), Failure> {
    let spec = a.run.spec()?;
    let workers = worker_count(a.workers)?;
    let result = run_matrix(&spec, workers)?;
    print_summary(&spec, &result);
    let failures = result.failures();
    if failures.is_empty() {
        Ok(())
    } else {
        Err(Failure::Cells(failures))
    }
}

fn report_cmd(a: &RunArgs) -> Result<(), Failure> {
    let spec = a.spec()?;
    let result = collect_from_disk(&spec)?;
    write_outputs(&spec, &result)?;
    print_summary(&spec, &result);
    let failures = result.failures();
    if failures.is_empty() {
        Ok(())
    } else {
        Err(Failure::Cells(failures))
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    let outcome = match &cli.command {
        Command::GenCorpus(a) => gen_corpus(a),
        Command::Augment(a) => augment_cmd(a),
        Command::Train(a) => train_cmd(a),
        Command::Evaluate(a) => evaluate_cmd(a),
        Command::Probe(a) => probe_cmd(a),
        Command::Matrix(a) => matrix_cmd(a),
        Command::Report(a) => report_cmd(a),
    };
    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Validation(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
        Err(Failure::Cells(list)) => {
            eprintln!("error: {} cell(s) failed", list.len());
            for (cell, msg) in list {
                eprintln!("  {cell}: {msg}");
            }
            ExitCode::from(2)
        }
        Err(Failure::Io(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(3)
        }
    }
}
