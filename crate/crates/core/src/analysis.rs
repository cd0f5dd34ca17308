//! Cross-cell analysis of weighted F1: main-effect variance decomposition
//! over balanced designs, model ranking, learning-style gains and the
//! per-regime comparison table.

use std::collections::{BTreeMap, HashMap};
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::prompt::PromptStyle;
use crate::reasoning::quantile;
use crate::similarity::ShotType;

const TIE_TOLERANCE: f64 = 1e-12;

#[derive(Debug, Error, PartialEq)]
pub enum AnalysisError {
    #[error("no experiment cells")]
    Empty,
    #[error("no factors given")]
    NoFactors,
    #[error("factor {0} listed twice")]
    DuplicateFactor(Factor),
    #[error("design is not balanced: {0}")]
    Unbalanced(String),
    #[error("all factor sums of squares are zero; shares are undefined")]
    Degenerate,
    #[error("incomplete coverage: {0}")]
    Coverage(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentCell {
    pub model: String,
    pub dataset: String,
    pub shot: ShotType,
    pub style: PromptStyle,
    pub temperature: f64,
    pub f1_weighted: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Factor {
    Model,
    Dataset,
    Shot,
    Style,
    Temperature,
}

impl Factor {
    /// The four factors of a per-dataset decomposition.
    pub const WITHIN_DATASET: [Factor; 4] = [Factor::Model, Factor::Shot, Factor::Style, Factor::Temperature];

    pub fn as_str(&self) -> &'static str {
        match self {
            Factor::Model => "model",
            Factor::Dataset => "dataset",
            Factor::Shot => "shot",
            Factor::Style => "style",
            Factor::Temperature => "temperature",
        }
    }

    pub fn level(&self, cell: &ExperimentCell) -> String {
        match self {
            Factor::Model => cell.model.clone(),
            Factor::Dataset => cell.dataset.clone(),
            Factor::Shot => cell.shot.as_str().to_string(),
            Factor::Style => cell.style.as_str().to_string(),
            Factor::Temperature => cell.temperature.to_string(),
        }
    }
}

impl std::fmt::Display for Factor {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

/// How repeated observations of one factor combination enter the
/// decomposition.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Aggregation {
    /// Average the observations of each combination first.
    #[default]
    CellMeans,
    /// Use every observation.
    Pooled,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FactorShare {
    pub factor: Factor,
    pub sum_of_squares: f64,
    pub share: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VarianceShare {
    pub aggregation: Aggregation,
    pub observations: usize,
    pub factors: Vec<FactorShare>,
}

impl VarianceShare {
    pub fn share(&self, factor: Factor) -> Option<f64> {
        self.factors.iter().find(|f| f.factor == factor).map(|f| f.share)
    }
}

/// Main-effect sums of squares `Σ n_level (mean_level − grand)²` normalized
/// to shares. Requires a fully crossed design with the same number of
/// observations per combination, where this equals the Type II
/// decomposition of the additive model.
pub fn variance_decomposition(
    cells: &[ExperimentCell],
    factors: &[Factor],
    aggregation: Aggregation,
) -> Result<VarianceShare, AnalysisError> {
    if cells.is_empty() {
        return Err(AnalysisError::Empty);
    }
    if factors.is_empty() {
        return Err(AnalysisError::NoFactors);
    }
    for (i, f) in factors.iter().enumerate() {
        if factors[..i].contains(f) {
            return Err(AnalysisError::DuplicateFactor(*f));
        }
    }

    let mut combos: BTreeMap<Vec<String>, Vec<f64>> = BTreeMap::new();
    for c in cells {
        combos
            .entry(factors.iter().map(|f| f.level(c)).collect())
            .or_default()
            .push(c.f1_weighted);
    }
    let expected: usize = (0..factors.len())
        .map(|i| combos.keys().map(|k| &k[i]).collect::<std::collections::BTreeSet<_>>().len())
        .product();
    if combos.len() != expected {
        return Err(AnalysisError::Unbalanced(format!(
            "{} of {expected} level combinations present",
            combos.len()
        )));
    }
    let reps = combos.values().next().map_or(0, Vec::len);
    if let Some((key, v)) = combos.iter().find(|(_, v)| v.len() != reps) {
        return Err(AnalysisError::Unbalanced(format!(
            "combination {key:?} has {} observations, expected {reps}",
            v.len()
        )));
    }

    let observations: Vec<(&[String], f64)> = match aggregation {
        Aggregation::CellMeans => combos
            .iter()
            .map(|(k, v)| (k.as_slice(), v.iter().sum::<f64>() / v.len() as f64))
            .collect(),
        Aggregation::Pooled => combos
            .iter()
            .flat_map(|(k, v)| v.iter().map(move |y| (k.as_slice(), *y)))
            .collect(),
    };
    let grand = observations.iter().map(|(_, y)| y).sum::<f64>() / observations.len() as f64;

    let mut out = Vec::with_capacity(factors.len());
    for (i, &factor) in factors.iter().enumerate() {
        let mut levels: BTreeMap<&str, (f64, usize)> = BTreeMap::new();
        for (k, y) in &observations {
            let e = levels.entry(k[i].as_str()).or_default();
            e.0 += y;
            e.1 += 1;
        }
        let ss = levels
            .values()
            .map(|(sum, n)| *n as f64 * (sum / *n as f64 - grand).powi(2))
            .sum();
        out.push(FactorShare { factor, sum_of_squares: ss, share: 0.0 });
    }
    let total: f64 = out.iter().map(|f| f.sum_of_squares).sum();
    if total <= 0.0 {
        return Err(AnalysisError::Degenerate);
    }
    for f in &mut out {
        f.share = f.sum_of_squares / total;
    }
    Ok(VarianceShare { aggregation, observations: observations.len(), factors: out })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankEntry {
    pub model: String,
    pub mean_f1: f64,
    pub rank: usize,
    pub cells: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankGroup {
    pub dataset: String,
    pub shot: ShotType,
    pub entries: Vec<RankEntry>,
}

/// Groups `(key, value)` pairs preserving first-appearance order of keys.
fn group_ordered<K: Eq + std::hash::Hash + Clone, V>(items: impl IntoIterator<Item = (K, V)>) -> Vec<(K, Vec<V>)> {
    let mut index: HashMap<K, usize> = HashMap::new();
    let mut groups: Vec<(K, Vec<V>)> = Vec::new();
    for (k, v) in items {
        let i = *index.entry(k.clone()).or_insert_with(|| {
            groups.push((k, Vec::new()));
            groups.len() - 1
        });
        groups[i].1.push(v);
    }
    groups
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

/// Competition ranking (1, 1, 3) of models by mean weighted F1 within each
/// (dataset, shot) group. Equal means within 1e-12 share a rank and are
/// listed by model name.
pub fn rank_models(cells: &[ExperimentCell]) -> Result<Vec<RankGroup>, AnalysisError> {
    if cells.is_empty() {
        return Err(AnalysisError::Empty);
    }
    let groups = group_ordered(cells.iter().map(|c| ((c.dataset.clone(), c.shot), c)));
    groups
        .into_iter()
        .map(|((dataset, shot), members)| {
            let per_model = group_ordered(members.iter().map(|c| (c.model.clone(), c.f1_weighted)));
            let n = per_model[0].1.len();
            if let Some((m, v)) = per_model.iter().find(|(_, v)| v.len() != n) {
                return Err(AnalysisError::Coverage(format!(
                    "{dataset}/{shot}: model `{m}` has {} cells, expected {n}",
                    v.len()
                )));
            }
            let mut entries: Vec<RankEntry> = per_model
                .into_iter()
                .map(|(model, v)| RankEntry { model, mean_f1: mean(&v), rank: 0, cells: v.len() })
                .collect();
            entries.sort_by(|a, b| {
                if (a.mean_f1 - b.mean_f1).abs() <= TIE_TOLERANCE {
                    a.model.cmp(&b.model)
                } else {
                    b.mean_f1.total_cmp(&a.mean_f1)
                }
            });
            for i in 0..entries.len() {
                entries[i].rank = if i > 0 && (entries[i - 1].mean_f1 - entries[i].mean_f1).abs() <= TIE_TOLERANCE {
                    entries[i - 1].rank
                } else {
                    i + 1
                };
            }
            Ok(RankGroup { dataset, shot, entries })
        })
        .collect()
}

/// `100 (b − a) / a`; `None` when the baseline is zero.
pub fn percentage_gain(a: f64, b: f64) -> Option<f64> {
    (a != 0.0).then(|| 100.0 * (b - a) / a)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GainRow {
    pub model: String,
    pub dataset: String,
    pub zeroshot_f1: f64,
    pub random_f1: f64,
    pub targeted_f1: f64,
    /// Zero-shot to random few-shot, percent.
    pub zero_to_random: Option<f64>,
    /// Random to targeted few-shot, percent.
    pub random_to_targeted: Option<f64>,
    pub negative_zero_to_random: bool,
    pub negative_random_to_targeted: bool,
}

/// Percentage changes of per-shot mean weighted F1 for every
/// (model, dataset). A negative change is flagged as negative learning.
pub fn learning_style_gain(cells: &[ExperimentCell]) -> Result<Vec<GainRow>, AnalysisError> {
    if cells.is_empty() {
        return Err(AnalysisError::Empty);
    }
    let groups = group_ordered(cells.iter().map(|c| ((c.model.clone(), c.dataset.clone()), c)));
    groups
        .into_iter()
        .map(|((model, dataset), members)| {
            let shot_mean = |shot: ShotType| {
                let v: Vec<f64> = members.iter().filter(|c| c.shot == shot).map(|c| c.f1_weighted).collect();
                if v.is_empty() {
                    Err(AnalysisError::Coverage(format!("{model}/{dataset} has no {shot} cells")))
                } else {
                    Ok(mean(&v))
                }
            };
            let zero = shot_mean(ShotType::Zeroshot)?;
            let random = shot_mean(ShotType::FewshotRandom)?;
            let targeted = shot_mean(ShotType::FewshotTargeted)?;
            let zr = percentage_gain(zero, random);
            let rt = percentage_gain(random, targeted);
            Ok(GainRow {
                negative_zero_to_random: zr.is_some_and(|g| g < 0.0),
                negative_random_to_targeted: rt.is_some_and(|g| g < 0.0),
                model,
                dataset,
                zeroshot_f1: zero,
                random_f1: random,
                targeted_f1: targeted,
                zero_to_random: zr,
                random_to_targeted: rt,
            })
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Leader {
    pub value: f64,
    pub model: String,
}

/// Best models of one (dataset, shot) regime.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonRow {
    pub dataset: String,
    pub shot: ShotType,
    pub top_mean: Leader,
    pub top_peak: Leader,
    pub tightest_iqr: Leader,
}

/// Per dataset and shot type: highest mean, highest single run and smallest
/// interquartile range of weighted F1 across each model's runs. Ties go to
/// the model seen first.
pub fn comparison_table(cells: &[ExperimentCell]) -> Result<Vec<ComparisonRow>, AnalysisError> {
    if cells.is_empty() {
        return Err(AnalysisError::Empty);
    }
    let mut rows = Vec::new();
    for ((dataset, shot), members) in group_ordered(cells.iter().map(|c| ((c.dataset.clone(), c.shot), c))) {
        let mut best: Option<(Leader, Leader, Leader)> = None;
        for (model, mut v) in group_ordered(members.iter().map(|c| (c.model.clone(), c.f1_weighted))) {
            v.sort_by(f64::total_cmp);
            let stats = [mean(&v), v[v.len() - 1], quantile(&v, 0.75) - quantile(&v, 0.25)];
            let lead = |value| Leader { value, model: model.clone() };
            match &mut best {
                None => best = Some((lead(stats[0]), lead(stats[1]), lead(stats[2]))),
                Some((m, p, i)) => {
                    if stats[0] > m.value {
                        *m = lead(stats[0]);
                    }
                    if stats[1] > p.value {
                        *p = lead(stats[1]);
                    }
                    if stats[2] < i.value {
                        *i = lead(stats[2]);
                    }
                }
            }
        }
        let (top_mean, top_peak, tightest_iqr) = best.expect("group has members");
        rows.push(ComparisonRow { dataset, shot, top_mean, top_peak, tightest_iqr });
    }
    rows.sort_by(|a, b| a.dataset.cmp(&b.dataset).then(a.shot.cmp(&b.shot)));
    Ok(rows)
}

/// One markdown table per dataset in the regime / top mean / top peak /
/// tightest IQR layout.
pub fn render_comparison_markdown(rows: &[ComparisonRow]) -> String {
    let mut out = String::new();
    let mut current: Option<&str> = None;
    for r in rows {
        if current != Some(r.dataset.as_str()) {
            if current.is_some() {
                out.push('\n');
            }
            current = Some(&r.dataset);
            let _ = writeln!(out, "### {}: top model performance per learning style\n", r.dataset);
            out.push_str("| Regime | Top Mean (Model) | Top Peak (Model) | Tightest IQR (Model) |\n");
            out.push_str("|---|---|---|---|\n");
        }
        let _ = writeln!(
            out,
            "| {} | {:.3} ({}) | {:.3} ({}) | {:.4} ({}) |",
            r.shot.title(),
            r.top_mean.value,
            r.top_mean.model,
            r.top_peak.value,
            r.top_peak.model,
            r.tightest_iqr.value,
            r.tightest_iqr.model
        );
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlotSeries {
    pub name: String,
    pub x: Vec<String>,
    pub y: Vec<f64>,
}

/// Data behind one chart, independent of any plotting library.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlotDocument {
    pub kind: String,
    pub title: String,
    pub y_label: String,
    pub series: Vec<PlotSeries>,
}

pub fn variance_plot(per_dataset: &[(String, VarianceShare)]) -> PlotDocument {
    PlotDocument {
        kind: "bar".into(),
        title: "Share of explained variance in weighted F1".into(),
        y_label: "share".into(),
        series: per_dataset
            .iter()
            .map(|(name, v)| PlotSeries {
                name: name.clone(),
                x: v.factors.iter().map(|f| f.factor.to_string()).collect(),
                y: v.factors.iter().map(|f| f.share).collect(),
            })
            .collect(),
    }
}

pub fn rank_plot(groups: &[RankGroup]) -> PlotDocument {
    PlotDocument {
        kind: "rank".into(),
        title: "Model rank by mean weighted F1".into(),
        y_label: "rank".into(),
        series: groups
            .iter()
            .map(|g| PlotSeries {
                name: format!("{}/{}", g.dataset, g.shot),
                x: g.entries.iter().map(|e| e.model.clone()).collect(),
                y: g.entries.iter().map(|e| e.rank as f64).collect(),
            })
            .collect(),
    }
}

/// Undefined gains are omitted from their series.
pub fn gain_plot(rows: &[GainRow]) -> PlotDocument {
    let series = |name: &str, pick: fn(&GainRow) -> Option<f64>| {
        let (x, y) = rows
            .iter()
            .filter_map(|r| pick(r).map(|g| (format!("{}/{}", r.dataset, r.model), g)))
            .unzip();
        PlotSeries { name: name.into(), x, y }
    };
    PlotDocument {
        kind: "bar".into(),
        title: "Change in weighted F1 between learning styles".into(),
        y_label: "percent".into(),
        series: vec![
            series("zero_to_random", |r| r.zero_to_random),
            series("random_to_targeted", |r| r.random_to_targeted),
        ],
    }
}
