use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::config::RunConfig;
use super::exec::{prepare_dataset, PreparedDataset};
use super::matrix::{enumerate_matrix, CellStatus, RunManifest};
use super::RunnerError;
use crate::analysis::{
    comparison_table, gain_plot, learning_style_gain, rank_models, rank_plot, render_comparison_markdown,
    variance_decomposition, variance_plot, Aggregation, ExperimentCell, Factor, VarianceShare,
};
use crate::gateway::load_records;
use crate::metrics::evaluate_run_with;
use crate::prompt::PromptStyle;
use crate::reasoning::{esi, esi_aggregate, write_esi_table, EsiGroupKey};
use crate::similarity::ShotType;

/// One row of the run-level metrics table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsRow {
    pub fingerprint: String,
    pub dataset: String,
    pub model: String,
    pub shot: ShotType,
    pub style: PromptStyle,
    pub temperature: f64,
    pub n: u64,
    pub accuracy: f64,
    pub precision_macro: f64,
    pub recall_macro: f64,
    pub f1_macro: f64,
    pub f1_weighted: f64,
    pub dist_mae: Option<f64>,
    pub jsd: Option<f64>,
    pub cross_entropy: Option<f64>,
    pub invalid_count: u64,
    pub esi_mean: f64,
}

impl MetricsRow {
    pub fn cell(&self) -> ExperimentCell {
        ExperimentCell {
            model: self.model.clone(),
            dataset: self.dataset.clone(),
            shot: self.shot,
            style: self.style,
            temperature: self.temperature,
            f1_weighted: self.f1_weighted,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReportSummary {
    pub report_dir: PathBuf,
    pub rows: Vec<MetricsRow>,
    /// `(stem, status, persisted, n_test)` of every unfinished cell.
    pub incomplete: Vec<(String, CellStatus, usize, usize)>,
    pub notes: Vec<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AnalysisOutputs {
    pub variance: Vec<(String, VarianceShare)>,
    pub notes: Vec<String>,
}

fn write_csv<T: Serialize>(path: &Path, rows: &[T]) -> Result<(), RunnerError> {
    let mut w = csv::Writer::from_path(path)?;
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), RunnerError> {
    std::fs::write(path, serde_json::to_string_pretty(value)? + "\n")?;
    Ok(())
}

#[derive(Serialize)]
struct VarianceRow<'a> {
    dataset: &'a str,
    factor: Factor,
    sum_of_squares: f64,
    share: f64,
    aggregation: Aggregation,
}

#[derive(Serialize)]
struct RankRow<'a> {
    dataset: &'a str,
    shot: ShotType,
    rank: usize,
    model: &'a str,
    mean_f1: f64,
    cells: usize,
}

/// Reads experiment cells from a delimiter-separated table with at least
/// the columns model, dataset, shot, style, temperature and f1_weighted.
pub fn read_cells_table(path: impl AsRef<Path>) -> Result<Vec<ExperimentCell>, RunnerError> {
    let mut r = csv::Reader::from_path(path)?;
    Ok(r.deserialize().collect::<Result<Vec<ExperimentCell>, _>>()?)
}

/// Variance decomposition per dataset, model ranking, learning-style gains
/// and the comparison table, written to `out_dir`. Analyses whose
/// preconditions fail are skipped and explained in the returned notes.
pub fn analyze_cells(
    cells: &[ExperimentCell],
    aggregation: Aggregation,
    out_dir: &Path,
) -> Result<AnalysisOutputs, RunnerError> {
    let plots = out_dir.join("plots");
    std::fs::create_dir_all(&plots)?;
    let mut notes = Vec::new();

    let mut by_dataset: BTreeMap<&str, Vec<ExperimentCell>> = BTreeMap::new();
    for c in cells {
        by_dataset.entry(&c.dataset).or_default().push(c.clone());
    }
    let mut variance = Vec::new();
    for (dataset, members) in &by_dataset {
        match variance_decomposition(members, &Factor::WITHIN_DATASET, aggregation) {
            Ok(v) => variance.push((dataset.to_string(), v)),
            Err(e) => notes.push(format!("variance decomposition for `{dataset}` skipped: {e}")),
        }
    }
    let rows: Vec<VarianceRow> = variance
        .iter()
        .flat_map(|(d, v)| {
            v.factors.iter().map(move |f| VarianceRow {
                dataset: d,
                factor: f.factor,
                sum_of_squares: f.sum_of_squares,
                share: f.share,
                aggregation: v.aggregation,
            })
        })
        .collect();
    write_csv(&out_dir.join("variance.csv"), &rows)?;
    write_json(&plots.join("variance.json"), &variance_plot(&variance))?;

    match rank_models(cells) {
        Ok(groups) => {
            let rows: Vec<RankRow> = groups
                .iter()
                .flat_map(|g| {
                    g.entries.iter().map(move |e| RankRow {
                        dataset: &g.dataset,
                        shot: g.shot,
                        rank: e.rank,
                        model: &e.model,
                        mean_f1: e.mean_f1,
                        cells: e.cells,
                    })
                })
                .collect();
            write_csv(&out_dir.join("ranks.csv"), &rows)?;
            write_json(&plots.join("ranks.json"), &rank_plot(&groups))?;
        }
        Err(e) => notes.push(format!("model ranking skipped: {e}")),
    }

    match learning_style_gain(cells) {
        Ok(gains) => {
            write_csv(&out_dir.join("gains.csv"), &gains)?;
            write_json(&plots.join("gains.json"), &gain_plot(&gains))?;
        }
        Err(e) => notes.push(format!("learning-style gains skipped: {e}")),
    }

    match comparison_table(cells) {
        Ok(rows) => std::fs::write(out_dir.join("comparison.md"), render_comparison_markdown(&rows))?,
        Err(e) => notes.push(format!("comparison table skipped: {e}")),
    }
    Ok(AnalysisOutputs { variance, notes })
}

/// Scores every complete cell of the configured matrix and writes the
/// run-level tables under `{output_dir}/report`.
pub fn build_report(config: &RunConfig) -> Result<ReportSummary, RunnerError> {
    let template = config.template()?;
    let output_dir = config.output_dir();
    let manifest = RunManifest::scan(enumerate_matrix(config, &template)?, &output_dir)?;
    let report_dir = output_dir.join("report");
    std::fs::create_dir_all(&report_dir)?;

    let mut datasets: BTreeMap<String, PreparedDataset> = BTreeMap::new();
    let mut rows = Vec::new();
    let mut esi_groups: Vec<(EsiGroupKey, Vec<f64>)> = Vec::new();
    let mut incomplete = Vec::new();
    for entry in &manifest.entries {
        let c = &entry.config;
        if entry.status != CellStatus::Complete {
            incomplete.push((c.stem(), entry.status, entry.persisted, c.n_test));
            continue;
        }
        if !datasets.contains_key(&c.dataset) {
            let d = config.dataset(&c.dataset).expect("validated");
            datasets.insert(c.dataset.clone(), prepare_dataset(config, d)?);
        }
        let data = &datasets[&c.dataset];
        let records: Vec<_> = load_records(c.records_path(&output_dir))?
            .into_iter()
            .filter(|r| r.config_fingerprint == entry.fingerprint)
            .collect();
        let m = evaluate_run_with(&records, &data.truths(), &data.schema.mode_labels, config.run.epsilon)?;
        let scores: Vec<f64> = records
            .iter()
            .map(|r| esi(&r.reasoning, &config.reasoning.lexicon, config.reasoning.token_boundaries).value)
            .collect();
        let esi_mean = scores.iter().sum::<f64>() / scores.len() as f64;
        let key = EsiGroupKey { model: c.model.clone(), shot: c.shot.to_string(), style: c.style, temperature: c.temperature };
        match esi_groups.iter_mut().find(|(k, _)| *k == key) {
            Some((_, v)) => v.extend(scores),
            None => esi_groups.push((key, scores)),
        }
        rows.push(MetricsRow {
            fingerprint: entry.fingerprint.clone(),
            dataset: c.dataset.clone(),
            model: c.model.clone(),
            shot: c.shot,
            style: c.style,
            temperature: c.temperature,
            n: m.n,
            accuracy: m.accuracy,
            precision_macro: m.precision_macro,
            recall_macro: m.recall_macro,
            f1_macro: m.f1_macro,
            f1_weighted: m.f1_weighted,
            dist_mae: m.dist_mae,
            jsd: m.jsd,
            cross_entropy: m.cross_entropy,
            invalid_count: m.invalid_count,
            esi_mean,
        });
    }

    write_csv(&report_dir.join("metrics.csv"), &rows)?;
    write_json(&report_dir.join("manifest.json"), &manifest)?;
    let esi_rows = esi_aggregate(esi_groups);
    write_esi_table(std::fs::File::create(report_dir.join("esi.csv"))?, &esi_rows)?;

    let mut notes = Vec::new();
    if rows.is_empty() {
        notes.push("no complete cells; analysis sections are empty".to_string());
    } else {
        let cells: Vec<ExperimentCell> = rows.iter().map(MetricsRow::cell).collect();
        notes.extend(analyze_cells(&cells, config.analysis.aggregation, &report_dir)?.notes);
    }

    let mut md = String::new();
    let _ = writeln!(md, "# Run summary\n");
    let _ = writeln!(md, "- cells planned: {}", manifest.entries.len());
    let _ = writeln!(md, "- cells complete: {}", manifest.count(CellStatus::Complete));
    let _ = writeln!(md, "- cells partial: {}", manifest.count(CellStatus::Partial));
    let _ = writeln!(md, "- cells pending: {}", manifest.count(CellStatus::Pending));
    let _ = writeln!(md, "- records: {} of {} planned calls", manifest.persisted_calls(), manifest.planned_calls());
    let invalid: u64 = rows.iter().map(|r| r.invalid_count).sum();
    let _ = writeln!(md, "- INVALID records in complete cells: {invalid}");
    let _ = writeln!(md, "\n## Incomplete cells\n");
    if incomplete.is_empty() {
        let _ = writeln!(md, "None.");
    }
    for (stem, status, persisted, n) in &incomplete {
        let _ = writeln!(md, "- {stem}: {} ({persisted}/{n})", status.as_str());
    }
    let _ = writeln!(md, "\n## Notes\n");
    if notes.is_empty() {
        let _ = writeln!(md, "None.");
    }
    for n in &notes {
        let _ = writeln!(md, "- {n}");
    }
    std::fs::write(report_dir.join("summary.md"), md)?;

    Ok(ReportSummary { report_dir, rows, incomplete, notes })
}
