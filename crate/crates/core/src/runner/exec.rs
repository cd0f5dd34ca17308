use std::collections::{BTreeMap, HashMap};
use std::path::Path;
use std::sync::atomic::{AtomicBool, AtomicUsize, Ordering};
use std::sync::mpsc;
use std::thread;

use serde::{Deserialize, Serialize};

use super::config::{DatasetConfig, RunConfig};
use super::matrix::{enumerate_matrix, CellStatus, ExperimentConfig};
use super::RunnerError;
use crate::dataset::{
    fit_normalizer, load_dataset, split_train_test, AttributeSchema, ChoiceInstance, NumericNormalizer,
    TrainTestSplit,
};
use crate::gateway::{
    decide, AliasTable, ChatBackend, ChatRequest, DecisionRecord, ExemplarRef, GatewayError, GenerationParams,
    HttpBackend, MockBackend, RecordStore,
};
use crate::metrics::{evaluate_run_with, MetricsReport};
use crate::prompt::{PromptForge, PromptTemplate};
use crate::similarity::{derive_seed, select_random, EncodedInstance, ShotType, SimilarityModel, SimilarityWeights};

/// A loaded dataset with its example pool, test rows and fitted scaling.
#[derive(Debug, Clone)]
pub struct PreparedDataset {
    pub name: String,
    pub schema: AttributeSchema,
    pub split: TrainTestSplit,
    pub normalizer: NumericNormalizer,
    pub aliases: AliasTable,
    /// Example pool encoded for similarity; weights do not enter the
    /// encoding.
    pub pool_encoded: Vec<EncodedInstance>,
}

impl PreparedDataset {
    pub fn new(
        name: &str,
        schema: AttributeSchema,
        data: &[ChoiceInstance],
        n_respondents: usize,
        n_test: usize,
        seed: u64,
        aliases: AliasTable,
    ) -> Result<Self, RunnerError> {
        let split = split_train_test(data, n_respondents, n_test, seed)?;
        let normalizer = fit_normalizer(&split.train, &schema)?;
        let encoder = SimilarityModel::new(&schema, SimilarityWeights::default(), &normalizer);
        let pool_encoded = split.train.iter().map(|d| encoder.encode(d)).collect();
        Ok(Self { name: name.to_string(), schema, split, normalizer, aliases, pool_encoded })
    }

    /// Ground-truth mode per test agent.
    pub fn truths(&self) -> BTreeMap<String, String> {
        self.split.test.iter().map(|d| (d.id.clone(), d.chosen_mode.clone())).collect()
    }
}

pub fn prepare_dataset(config: &RunConfig, dataset: &DatasetConfig) -> Result<PreparedDataset, RunnerError> {
    let schema = config.schema(dataset)?;
    let data = load_dataset(config.resolve(&dataset.path), &schema, &dataset.load_options()?)?;
    log::info!("dataset `{}`: {} rows", dataset.name, data.len());
    PreparedDataset::new(
        &dataset.name,
        schema,
        &data,
        dataset.n_respondents,
        dataset.n_test,
        config.run.seed,
        dataset.aliases.clone(),
    )
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellReport {
    pub fingerprint: String,
    pub config: ExperimentConfig,
    pub metrics: MetricsReport,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CellSummary {
    pub stem: String,
    pub fingerprint: String,
    /// Records written by this invocation.
    pub new_records: usize,
    pub persisted: usize,
    pub status: CellStatus,
    pub metrics: Option<MetricsReport>,
    /// Endpoint failure that stopped the cell early.
    pub error: Option<String>,
}

/// Execution settings shared by all cells of an invocation.
#[derive(Debug, Clone)]
pub struct ExecOptions<'a> {
    pub output_dir: &'a Path,
    pub parallel: usize,
    pub epsilon: f64,
    pub template: &'a PromptTemplate,
}

fn agent_record(
    cell: &ExperimentConfig,
    fingerprint: &str,
    data: &PreparedDataset,
    forge: &PromptForge<'_>,
    backend: &dyn ChatBackend,
    test: &ChoiceInstance,
) -> Result<DecisionRecord, GatewayError> {
    let pool = &data.split.train;
    let invalid = |msg: String| DecisionRecord::invalid(&test.id, fingerprint, forge.template_hash(), Some(msg));
    let chosen: Vec<ExemplarRef> = match cell.shot {
        ShotType::Zeroshot => Vec::new(),
        ShotType::FewshotRandom => {
            let seed = derive_seed(cell.seed, fingerprint, &test.id);
            match select_random(pool.len(), cell.k, seed) {
                Ok(idx) => idx.into_iter().map(|i| ExemplarRef { id: pool[i].id.clone(), similarity: None }).collect(),
                Err(e) => return Ok(invalid(e.to_string())),
            }
        }
        ShotType::FewshotTargeted => {
            let model = SimilarityModel::new(&data.schema, cell.weights, &data.normalizer);
            match model.select_targeted_encoded(&model.encode(test), &data.pool_encoded, cell.k) {
                Ok(scored) => scored
                    .into_iter()
                    .map(|s| ExemplarRef { id: pool[s.index].id.clone(), similarity: Some(s.similarity) })
                    .collect(),
                Err(e) => return Ok(invalid(e.to_string())),
            }
        }
    };
    let by_id: HashMap<&str, &ChoiceInstance> = pool.iter().map(|d| (d.id.as_str(), d)).collect();
    let examples: Vec<&ChoiceInstance> = chosen.iter().map(|e| by_id[e.id.as_str()]).collect();
    let bundle = match forge.assemble(test, &examples, cell.style) {
        Ok(b) => b,
        Err(e) => return Ok(invalid(e.to_string())),
    };
    let params = GenerationParams { temperature: cell.temperature, max_tokens: cell.max_tokens, seed: None };
    let request = ChatRequest { model: &cell.model_name, agent_id: &test.id, bundle: &bundle, params: &params };
    let mut record = decide(backend, &request, &data.aliases, fingerprint)?;
    record.exemplars = chosen;
    Ok(record)
}

/// Runs the missing agents of one cell and, once every test agent has a
/// record, evaluates the cell. Workers complete out of order but records
/// are persisted in test-set order by a single writer, so the store does
/// not depend on `parallel`. An endpoint failure stops the cell after the
/// records preceding it; rerunning resumes from there.
pub fn run_experiment(
    cell: &ExperimentConfig,
    data: &PreparedDataset,
    backend: &dyn ChatBackend,
    opts: &ExecOptions<'_>,
) -> Result<CellSummary, RunnerError> {
    let fingerprint = cell.fingerprint();
    let stem = cell.stem();
    let forge = PromptForge::new(&data.schema, opts.template, cell.k);
    if forge.template_hash() != cell.template_hash {
        return Err(RunnerError::Config(format!("{stem}: template differs from the planned one")));
    }
    let mut store = RecordStore::open(cell.records_path(opts.output_dir))?;
    let pending: Vec<&ChoiceInstance> =
        data.split.test.iter().filter(|d| !store.contains(&d.id, &fingerprint)).collect();
    if !pending.is_empty() {
        log::info!("{stem}: {} of {} agents to query", pending.len(), data.split.test.len());
    }

    let next = AtomicUsize::new(0);
    let abort = AtomicBool::new(false);
    let mut written = 0;
    let mut failure: Option<GatewayError> = None;
    let mut persist_error: Option<RunnerError> = None;
    thread::scope(|scope| {
        let (tx, rx) = mpsc::channel();
        for _ in 0..opts.parallel.clamp(1, pending.len().max(1)) {
            let tx = tx.clone();
            let (next, abort, pending, forge, fingerprint) = (&next, &abort, &pending, &forge, &fingerprint);
            scope.spawn(move || loop {
                if abort.load(Ordering::SeqCst) {
                    break;
                }
                let i = next.fetch_add(1, Ordering::SeqCst);
                let Some(test) = pending.get(i) else { break };
                let result = agent_record(cell, fingerprint, data, forge, backend, test);
                if result.is_err() {
                    abort.store(true, Ordering::SeqCst);
                }
                if tx.send((i, result)).is_err() {
                    break;
                }
            });
        }
        drop(tx);

        let mut buffer = BTreeMap::new();
        let mut halted = false;
        for (i, result) in rx {
            if halted {
                continue;
            }
            buffer.insert(i, result);
            while let Some(result) = buffer.remove(&written) {
                match result {
                    Ok(record) => {
                        if let Err(e) = store.persist(&record) {
                            persist_error = Some(e.into());
                            halted = true;
                            abort.store(true, Ordering::SeqCst);
                            break;
                        }
                        written += 1;
                    }
                    Err(e) => {
                        failure = Some(e);
                        halted = true;
                        break;
                    }
                }
            }
        }
    });
    if let Some(e) = persist_error {
        return Err(e);
    }

    let persisted = store.count(&fingerprint);
    let status = CellStatus::from_count(persisted, cell.n_test);
    if let Some(e) = failure {
        log::warn!("{stem}: stopped after {persisted} records: {e}");
        return Ok(CellSummary {
            stem,
            fingerprint,
            new_records: written,
            persisted,
            status,
            metrics: None,
            error: Some(e.to_string()),
        });
    }

    let metrics = if status == CellStatus::Complete {
        let records = store.records(&fingerprint)?;
        let metrics = evaluate_run_with(&records, &data.truths(), &data.schema.mode_labels, opts.epsilon)?;
        let report = CellReport { fingerprint: fingerprint.clone(), config: cell.clone(), metrics: metrics.clone() };
        std::fs::write(cell.report_path(opts.output_dir), serde_json::to_string_pretty(&report)? + "\n")?;
        Some(metrics)
    } else {
        None
    };
    Ok(CellSummary { stem, fingerprint, new_records: written, persisted, status, metrics, error: None })
}

/// Builds the backend for one cell.
pub type BackendFactory<'a> =
    dyn Fn(&ExperimentConfig, &PreparedDataset) -> Result<Box<dyn ChatBackend>, RunnerError> + 'a;

/// Deterministic synthetic respondents standing in for every endpoint.
pub fn mock_factory(seed: u64) -> impl Fn(&ExperimentConfig, &PreparedDataset) -> Result<Box<dyn ChatBackend>, RunnerError> {
    move |_, data| Ok(Box::new(MockBackend::synthetic(data.truths().into_iter().collect(), seed)))
}

/// HTTP backends for the configured endpoints, with the bearer token read
/// from the configured environment variable.
pub fn http_factory(
    config: &RunConfig,
) -> impl Fn(&ExperimentConfig, &PreparedDataset) -> Result<Box<dyn ChatBackend>, RunnerError> + '_ {
    move |cell, _| {
        let endpoint = config
            .endpoint(&cell.model)
            .ok_or_else(|| RunnerError::Config(format!("no endpoint `{}`", cell.model)))?;
        let key = std::env::var(&config.run.api_key_env).ok().filter(|k| !k.is_empty());
        Ok(Box::new(HttpBackend::new(endpoint.to_endpoint(key)).map_err(|e| RunnerError::Config(e.to_string()))?))
    }
}

/// Selects cells whose fingerprint starts with, or whose stem equals, any
/// of `only`.
pub fn select_cells(cells: Vec<ExperimentConfig>, only: &[String]) -> Result<Vec<ExperimentConfig>, RunnerError> {
    if only.is_empty() {
        return Ok(cells);
    }
    for o in only {
        if !cells.iter().any(|c| c.fingerprint().starts_with(o.as_str()) || c.stem() == *o) {
            return Err(RunnerError::Config(format!("`{o}` matches no planned cell")));
        }
    }
    Ok(cells
        .into_iter()
        .filter(|c| only.iter().any(|o| c.fingerprint().starts_with(o.as_str()) || c.stem() == *o))
        .collect())
}

/// Runs every selected cell in plan order. Endpoint failures are reported
/// per cell and do not stop the remaining cells.
pub fn run_campaign(
    config: &RunConfig,
    only: &[String],
    parallel: Option<usize>,
    factory: &BackendFactory<'_>,
) -> Result<Vec<CellSummary>, RunnerError> {
    let template = config.template()?;
    let cells = select_cells(enumerate_matrix(config, &template)?, only)?;
    let output_dir = config.output_dir();
    std::fs::create_dir_all(&output_dir)?;
    let opts = ExecOptions {
        output_dir: &output_dir,
        parallel: parallel.unwrap_or(config.run.parallel).max(1),
        epsilon: config.run.epsilon,
        template: &template,
    };
    let mut datasets: BTreeMap<String, PreparedDataset> = BTreeMap::new();
    let mut summaries = Vec::with_capacity(cells.len());
    for cell in &cells {
        if !datasets.contains_key(&cell.dataset) {
            let d = config.dataset(&cell.dataset).expect("validated");
            datasets.insert(cell.dataset.clone(), prepare_dataset(config, d)?);
        }
        let data = &datasets[&cell.dataset];
        let backend = factory(cell, data)?;
        summaries.push(run_experiment(cell, data, backend.as_ref(), &opts)?);
    }
    Ok(summaries)
}
