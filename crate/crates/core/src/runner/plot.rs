use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use crate::dp::PrivacyTarget;
use crate::error::{write_file, Result};
use crate::metrics::METRIC_NAMES;
use crate::table::fmt_opt;

use super::stats::{mean, pearson};
use super::{CellOutput, RunMatrixResult, RunSpec};

/// Metrics carried through the aggregate tables: the six bias metrics and
/// the stereotype preference rate.
pub const TABLE_METRICS: [&str; 7] = [
    "toxicity_bias",
    "sentiment_bias",
    "occupation_bias",
    "gender_count_bias",
    "kl_bias",
    "hellinger_bias",
    "stereotype_preference_rate",
];

/// Metrics shown in the headline correlation table.
pub const HEADLINE_METRICS: [&str; 4] = ["gender_count_bias", "occupation_bias", "toxicity_bias", "sentiment_bias"];

/// Seed means of one (privacy mode, mixing ratio) group.
#[derive(Debug, Clone, PartialEq)]
pub struct MeanRow {
    pub mode: PrivacyTarget,
    pub mixing_ratio: f64,
    pub n_seeds: usize,
    pub metrics: Vec<Option<f64>>,
    pub perplexity: Option<f64>,
    pub final_grad_ratio: Option<f64>,
}

/// Mean over private modes of (private mean − non-private mean) at one ratio.
#[derive(Debug, Clone, PartialEq)]
pub struct IncreaseRow {
    pub mixing_ratio: f64,
    pub increases: Vec<Option<f64>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Aggregates {
    pub means: Vec<MeanRow>,
    pub increases: Vec<IncreaseRow>,
    /// Correlation of mixing ratio with the increase, per bias metric.
    pub pearson: Vec<(String, Option<f64>)>,
}

impl Aggregates {
    pub fn mean_row(&self, mode: PrivacyTarget, mixing_ratio: f64) -> Option<&MeanRow> {
        self.means.iter().find(|r| r.mode == mode && r.mixing_ratio == mixing_ratio)
    }

    pub fn pearson_of(&self, metric: &str) -> Option<f64> {
        self.pearson.iter().find(|(m, _)| m == metric).and_then(|(_, v)| *v)
    }
}

fn metric_index(name: &str) -> usize {
    TABLE_METRICS.iter().position(|m| *m == name).expect("known metric")
}

/// Seed means, bias-increase table and correlations, in run-spec order.
pub fn aggregate(spec: &RunSpec, result: &RunMatrixResult) -> Aggregates {
    let outputs: Vec<&CellOutput> = result.outputs().collect();
    let mut means = Vec::new();
    for &mode in &spec.modes {
        for &r in &spec.mixing_ratios {
            let group: Vec<&&CellOutput> = outputs
                .iter()
                .filter(|c| c.key.mode == mode && c.key.mixing_ratio == r)
                .collect();
            if group.is_empty() {
                continue;
            }
            means.push(MeanRow {
                mode,
                mixing_ratio: r,
                n_seeds: group.len(),
                metrics: TABLE_METRICS
                    .iter()
                    .map(|m| mean(group.iter().map(|c| c.report.metric(m))))
                    .collect(),
                perplexity: mean(group.iter().map(|c| c.report.meta.perplexity)),
                final_grad_ratio: mean(group.iter().map(|c| c.final_grad_ratio())),
            });
        }
    }
    let find = |mode: PrivacyTarget, r: f64| means.iter().find(|m| m.mode == mode && m.mixing_ratio == r);
    let private: Vec<PrivacyTarget> = spec
        .modes
        .iter()
        .copied()
        .filter(|m| *m != PrivacyTarget::NonPrivate)
        .collect();
    let mut increases = Vec::new();
    if spec.modes.contains(&PrivacyTarget::NonPrivate) && !private.is_empty() {
        for &r in &spec.mixing_ratios {
            let Some(base) = find(PrivacyTarget::NonPrivate, r) else {
                continue;
            };
            let inc = (0..TABLE_METRICS.len())
                .map(|i| {
                    let diffs: Vec<Option<f64>> = private
                        .iter()
                        .map(|&m| Some(find(m, r)?.metrics[i]? - base.metrics[i]?))
                        .collect();
                    if diffs.iter().any(Option::is_none) {
                        None
                    } else {
                        mean(diffs)
                    }
                })
                .collect();
            increases.push(IncreaseRow {
                mixing_ratio: r,
                increases: inc,
            });
        }
    }
    let pearson = METRIC_NAMES
        .iter()
        .map(|&m| {
            let i = metric_index(m);
            let pts: Option<Vec<(f64, f64)>> = increases
                .iter()
                .map(|row| row.increases[i].map(|v| (row.mixing_ratio, v)))
                .collect();
            let value = pts.and_then(|pts| {
                let (xs, ys): (Vec<f64>, Vec<f64>) = pts.into_iter().unzip();
                pearson(&xs, &ys).ok()
            });
            (m.to_string(), value)
        })
        .collect();
    Aggregates {
        means,
        increases,
        pearson,
    }
}

fn epsilon_cell(mode: PrivacyTarget) -> String {
    match mode {
        PrivacyTarget::Epsilon(e) => e.to_string(),
        PrivacyTarget::NoiseMultiplier(_) => String::new(),
        PrivacyTarget::NonPrivate => "inf".to_string(),
    }
}

/// Writes the figure and table series into `dir`. Metric columns with no
/// values anywhere are dropped and reported in the returned warnings.
pub fn emit_plot_data(
    spec: &RunSpec,
    result: &RunMatrixResult,
    dir: &Path,
) -> Result<(Vec<(PathBuf, &'static str)>, Vec<String>)> {
    let agg = aggregate(spec, result);
    let mut warnings = Vec::new();
    let mut files = Vec::new();

    let present: Vec<usize> = (0..TABLE_METRICS.len())
        .filter(|&i| {
            let any = agg.means.iter().any(|r| r.metrics[i].is_some());
            if !any {
                warnings.push(format!("metric {} has no values; column omitted", TABLE_METRICS[i]));
            }
            any
        })
        .collect();

    let mut fig1 = String::from("mode,epsilon,mixing_ratio,n_seeds");
    for &i in &present {
        let _ = write!(fig1, ",{}", TABLE_METRICS[i]);
    }
    fig1.push_str(",perplexity,final_grad_ratio\n");
    for r in &agg.means {
        let _ = write!(
            fig1,
            "{},{},{},{}",
            r.mode.label(),
            epsilon_cell(r.mode),
            r.mixing_ratio,
            r.n_seeds
        );
        for &i in &present {
            let _ = write!(fig1, ",{}", fmt_opt(r.metrics[i]));
        }
        let _ = writeln!(fig1, ",{},{}", fmt_opt(r.perplexity), fmt_opt(r.final_grad_ratio));
    }
    let p = dir.join("fig1_bias_by_epsilon.csv");
    write_file(&p, fig1)?;
    files.push((p, "plot-bias-by-epsilon"));

    let mut fig2 = String::from("mixing_ratio");
    for &i in &present {
        let _ = write!(fig2, ",{}", TABLE_METRICS[i]);
    }
    fig2.push('\n');
    for r in &agg.increases {
        let _ = write!(fig2, "{}", r.mixing_ratio);
        for &i in &present {
            let _ = write!(fig2, ",{}", fmt_opt(r.increases[i]));
        }
        fig2.push('\n');
    }
    let p = dir.join("fig2_bias_increase_by_mixing_ratio.csv");
    write_file(&p, fig2)?;
    files.push((p, "plot-bias-increase"));

    // gradient disparity per epoch, at the first listed mixing ratio
    let mut fig3 = String::from("mode,epoch,mixing_ratio,n_seeds,ratio,mean_l1_ratio,ppl_ratio\n");
    if let Some(&r0) = spec.mixing_ratios.first() {
        for &mode in &spec.modes {
            let traces: Vec<_> = result
                .outputs()
                .filter(|c| c.key.mode == mode && c.key.mixing_ratio == r0)
                .filter_map(|c| c.trace.as_ref())
                .collect();
            let epochs = traces.iter().map(|t| t.records.len()).max().unwrap_or(0);
            for e in 0..epochs {
                let recs: Vec<_> = traces.iter().filter_map(|t| t.records.get(e)).collect();
                let _ = writeln!(
                    fig3,
                    "{},{},{},{},{},{},{}",
                    mode.label(),
                    e + 1,
                    r0,
                    recs.len(),
                    fmt_opt(mean(recs.iter().map(|r| r.ratio()))),
                    fmt_opt(mean(recs.iter().map(|r| r.mean_l1_ratio()))),
                    fmt_opt(mean(recs.iter().map(|r| r.ppl_ratio()))),
                );
            }
        }
    }
    let p = dir.join("fig3_gradient_ratio_by_epoch.csv");
    write_file(&p, fig3)?;
    files.push((p, "plot-gradient-ratio"));

    let mut table = String::from("metric,pearson,headline\n");
    for (m, v) in &agg.pearson {
        let _ = writeln!(table, "{m},{},{}", fmt_opt(*v), HEADLINE_METRICS.contains(&m.as_str()));
    }
    let p = dir.join("table4_pearson.csv");
    write_file(&p, table)?;
    files.push((p, "table-pearson"));

    Ok((files, warnings))
}
