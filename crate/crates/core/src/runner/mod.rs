//! Experiment orchestration: run matrices over privacy mode, mixing ratio
//! and seed, with resumable per-cell artifacts, aggregate tables and
//! plot-ready CSV series.

mod plot;
mod spec;
mod stats;
mod workspace;

use std::path::{Path, PathBuf};

use rayon::prelude::*;

pub use plot::{aggregate, emit_plot_data, Aggregates, IncreaseRow, MeanRow, HEADLINE_METRICS, TABLE_METRICS};
pub use spec::{parse_mode, CellKey, CorpusSource, ModelShape, RunSpec, RUN_KEYS};
pub use stats::{mean, pearson};
pub use workspace::{cell_config, cell_gen, run_cell, CellOutput, Workspace};

use crate::dp::{NoObserver, TrainingLog};
use crate::error::{read_to_string, write_file, Error, Result};
use crate::metrics::BiasReport;
use crate::model::LMParams;
use crate::probes::DisparityTrace;
use crate::seed;
use workspace::{cell_dir, check_nonempty};

/// Environment variable holding the worker-pool size.
pub const WORKERS_ENV: &str = "DPBIAS_WORKERS";

/// Worker count from the flag, else the environment, else the core count.
pub fn worker_count(flag: Option<usize>) -> Result<usize> {
    if let Some(n) = flag {
        return if n == 0 {
            Err(Error::invalid("worker count must be positive"))
        } else {
            Ok(n)
        };
    }
    match std::env::var(WORKERS_ENV) {
        Ok(v) => match v.trim().parse::<usize>() {
            Ok(n) if n > 0 => Ok(n),
            _ => Err(Error::invalid(format!("{WORKERS_ENV}={v:?} is not a positive integer"))),
        },
        Err(_) => Ok(std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1)),
    }
}

#[derive(Debug, Clone)]
pub struct CellResult {
    pub key: CellKey,
    pub outcome: std::result::Result<CellOutput, String>,
    pub resumed: bool,
}

#[derive(Debug, Clone)]
pub struct RunMatrixResult {
    pub spec_hash: String,
    pub cells: Vec<CellResult>,
}

impl RunMatrixResult {
    pub fn outputs(&self) -> impl Iterator<Item = &CellOutput> {
        self.cells.iter().filter_map(|c| c.outcome.as_ref().ok())
    }

    pub fn failures(&self) -> Vec<(String, String)> {
        self.cells
            .iter()
            .filter_map(|c| c.outcome.as_ref().err().map(|e| (c.key.label(), e.clone())))
            .collect()
    }
}

const CHECKPOINT: &str = "checkpoint.bin";
const REPORT: &str = "report.csv";
const LOG: &str = "training_log.csv";
const DISPARITY: &str = "disparity.csv";
const HASH: &str = "cell.hash";

fn cell_hash(spec: &RunSpec, digest: &str, key: &CellKey) -> String {
    seed::sha256_hex(format!("{}data={digest}\ncell={}\n", spec.shared_description(), key.label()))
}

fn save_cell(dir: &Path, out: &CellOutput, hash: &str) -> Result<()> {
    out.params.save(&dir.join(CHECKPOINT))?;
    out.report.save(&dir.join(REPORT))?;
    out.log.save(&dir.join(LOG))?;
    if let Some(t) = &out.trace {
        t.save(&dir.join(DISPARITY))?;
    }
    write_file(&dir.join(HASH), format!("{hash}\n"))
}

/// Reads a previously persisted cell.
pub fn load_cell(out_dir: &Path, key: &CellKey) -> Result<CellOutput> {
    let dir = cell_dir(out_dir, key);
    let log = TrainingLog::load(&dir.join(LOG))?;
    Ok(CellOutput {
        key: *key,
        params: LMParams::load(&dir.join(CHECKPOINT))?,
        report: BiasReport::load(&dir.join(REPORT))?,
        trace: DisparityTrace::from_log(&log).ok(),
        log,
    })
}

fn cached(dir: &Path, hash: &str) -> bool {
    read_to_string(&dir.join(HASH)).is_ok_and(|h| h.trim() == hash)
        && [CHECKPOINT, REPORT, LOG].iter().all(|f| dir.join(f).exists())
}

/// Runs every cell of `spec` on a pool of `workers` threads, persisting
/// per-cell artifacts under `spec.out_dir/cells` and skipping cells whose
/// stored hash matches. Aggregates and plot data are written afterwards.
pub fn run_matrix(spec: &RunSpec, workers: usize) -> Result<RunMatrixResult> {
    spec.validate()?;
    let ws = Workspace::prepare(spec)?;
    check_nonempty(&ws)?;
    ws.vocab.save(&spec.out_dir.join("vocab.txt"))?;
    let digest = ws.digest();
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| Error::invalid(format!("worker pool: {e}")))?;
    let keys = spec.cells();
    log::info!("running {} cells on {workers} workers", keys.len());
    let cells: Vec<CellResult> = pool.install(|| {
        keys.par_iter()
            .map(|key| {
                let dir = cell_dir(&spec.out_dir, key);
                let hash = cell_hash(spec, &digest, key);
                if cached(&dir, &hash) {
                    if let Ok(out) = load_cell(&spec.out_dir, key) {
                        log::info!("cell {} resumed", key.label());
                        return CellResult {
                            key: *key,
                            outcome: Ok(out),
                            resumed: true,
                        };
                    }
                }
                let outcome = run_cell(&ws, spec, key, &mut NoObserver)
                    .and_then(|out| save_cell(&dir, &out, &hash).map(|_| out))
                    .map_err(|e| e.to_string());
                match &outcome {
                    Ok(_) => log::info!("cell {} done", key.label()),
                    Err(e) => log::error!("cell {} failed: {e}", key.label()),
                }
                CellResult {
                    key: *key,
                    outcome,
                    resumed: false,
                }
            })
            .collect()
    });
    let result = RunMatrixResult {
        spec_hash: spec.content_hash(),
        cells,
    };
    write_outputs(spec, &result)?;
    Ok(result)
}

/// Rebuilds a result from persisted cells without training.
pub fn collect_from_disk(spec: &RunSpec) -> Result<RunMatrixResult> {
    spec.validate()?;
    let cells = spec
        .cells()
        .iter()
        .map(|key| CellResult {
            key: *key,
            outcome: load_cell(&spec.out_dir, key).map_err(|e| e.to_string()),
            resumed: true,
        })
        .collect();
    Ok(RunMatrixResult {
        spec_hash: spec.content_hash(),
        cells,
    })
}

/// Writes the combined report table, failure list, plot data and manifest.
pub fn write_outputs(spec: &RunSpec, result: &RunMatrixResult) -> Result<Vec<PathBuf>> {
    let out = &spec.out_dir;
    let reports: Vec<BiasReport> = result.outputs().map(|c| c.report.clone()).collect();
    let mut artifacts: Vec<(PathBuf, &'static str)> = Vec::new();
    write_file(&out.join("reports.csv"), BiasReport::to_csv(&reports))?;
    artifacts.push((out.join("reports.csv"), "bias-reports"));
    let failures = result.failures();
    let failures_path = out.join("failures.txt");
    if failures.is_empty() {
        if failures_path.exists() {
            std::fs::remove_file(&failures_path).map_err(|e| Error::io(&failures_path, e))?;
        }
    } else {
        let text: String = failures.iter().map(|(k, e)| format!("{k}\t{e}\n")).collect();
        write_file(&failures_path, text)?;
        artifacts.push((failures_path, "failures"));
    }
    let vocab = out.join("vocab.txt");
    if vocab.exists() {
        artifacts.push((vocab, "vocabulary"));
    }
    for c in result.outputs() {
        let dir = cell_dir(out, &c.key);
        for (f, role) in [
            (CHECKPOINT, "checkpoint"),
            (REPORT, "cell-report"),
            (LOG, "training-log"),
            (DISPARITY, "disparity-trace"),
        ] {
            if dir.join(f).exists() {
                artifacts.push((dir.join(f), role));
            }
        }
    }
    let (plots, warnings) = emit_plot_data(spec, result, &out.join("plots"))?;
    artifacts.extend(plots);
    write_manifest(out, &result.spec_hash, &artifacts, &warnings)?;
    Ok(artifacts.into_iter().map(|(p, _)| p).collect())
}

/// One line per artifact: relative path, role, SHA-256 of its contents.
pub fn write_manifest(out: &Path, spec_hash: &str, artifacts: &[(PathBuf, &str)], warnings: &[String]) -> Result<()> {
    let mut text = format!("# run-spec sha256 {spec_hash}\n");
    for w in warnings {
        text.push_str(&format!("# warning: {w}\n"));
    }
    for (path, role) in artifacts {
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        let rel = path.strip_prefix(out).unwrap_or(path);
        text.push_str(&format!("{}\t{role}\t{}\n", rel.display(), seed::sha256_hex(&bytes)));
    }
    write_file(&out.join("manifest.tsv"), text)
}
