use std::collections::{BTreeMap, HashSet};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::config::RunConfig;
use super::RunnerError;
use crate::gateway::load_records;
use crate::prompt::{PromptStyle, PromptTemplate};
use crate::similarity::{ShotType, SimilarityWeights};

/// Everything that determines the records of one experiment cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    /// Endpoint name from the configuration.
    pub model: String,
    /// Identifier sent to the server.
    pub model_name: String,
    pub dataset: String,
    pub shot: ShotType,
    pub style: PromptStyle,
    pub temperature: f64,
    pub k: usize,
    pub seed: u64,
    pub max_tokens: u32,
    pub n_test: usize,
    pub n_respondents: usize,
    pub weights: SimilarityWeights,
    pub template_version: String,
    pub template_hash: String,
}

fn file_token(s: &str) -> String {
    s.chars()
        .map(|c| if c.is_ascii_alphanumeric() || c == '.' || c == '-' { c } else { '-' })
        .collect()
}

impl ExperimentConfig {
    /// First 16 hex digits of the SHA-256 of the canonical JSON encoding.
    pub fn fingerprint(&self) -> String {
        let json = serde_json::to_vec(self).expect("config serializes");
        hex::encode(&Sha256::digest(&json)[..8])
    }

    /// `{dataset}_{model}_{shot}_{style}_{temp}` with unsafe characters
    /// replaced.
    pub fn stem(&self) -> String {
        format!(
            "{}_{}_{}_{}_{}",
            file_token(&self.dataset),
            file_token(&self.model),
            self.shot,
            self.style,
            self.temperature
        )
    }

    pub fn records_path(&self, output_dir: &Path) -> PathBuf {
        output_dir.join(format!("{}.records.jsonl", self.stem()))
    }

    pub fn report_path(&self, output_dir: &Path) -> PathBuf {
        output_dir.join(format!("{}.report.json", self.stem()))
    }
}

/// Cartesian product in model, dataset, shot, style, temperature order.
pub fn enumerate_matrix(config: &RunConfig, template: &PromptTemplate) -> Result<Vec<ExperimentConfig>, RunnerError> {
    config.validate()?;
    let m = &config.matrix;
    let template_hash = template.hash();
    let mut out = Vec::with_capacity(
        m.models.len() * m.datasets.len() * m.shots.len() * m.styles.len() * m.temperatures.len(),
    );
    for model in &m.models {
        let endpoint = config.endpoint(model).expect("validated");
        for dataset in &m.datasets {
            let d = config.dataset(dataset).expect("validated");
            for &shot in &m.shots {
                for &style in &m.styles {
                    for &temperature in &m.temperatures {
                        out.push(ExperimentConfig {
                            model: model.clone(),
                            model_name: endpoint.model_name().to_string(),
                            dataset: dataset.clone(),
                            shot,
                            style,
                            temperature,
                            k: config.run.k,
                            seed: config.run.seed,
                            max_tokens: config.run.max_tokens,
                            n_test: d.n_test,
                            n_respondents: d.n_respondents,
                            weights: d.weights,
                            template_version: template.version.clone(),
                            template_hash: template_hash.clone(),
                        });
                    }
                }
            }
        }
    }
    let mut seen = HashSet::new();
    let mut stems = HashSet::new();
    for c in &out {
        if !seen.insert(c.fingerprint()) || !stems.insert(c.stem()) {
            return Err(RunnerError::Config(format!("cell {} is not unique", c.stem())));
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CellStatus {
    Pending,
    Partial,
    Complete,
}

impl CellStatus {
    pub fn from_count(persisted: usize, n_test: usize) -> Self {
        match persisted {
            0 => CellStatus::Pending,
            n if n >= n_test => CellStatus::Complete,
            _ => CellStatus::Partial,
        }
    }

    pub fn as_str(&self) -> &'static str {
        match self {
            CellStatus::Pending => "pending",
            CellStatus::Partial => "partial",
            CellStatus::Complete => "complete",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub fingerprint: String,
    pub config: ExperimentConfig,
    pub persisted: usize,
    pub status: CellStatus,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub entries: Vec<ManifestEntry>,
}

impl RunManifest {
    /// Status of every cell from the record counts found in `output_dir`.
    pub fn scan(configs: Vec<ExperimentConfig>, output_dir: &Path) -> Result<Self, RunnerError> {
        let mut counts: BTreeMap<PathBuf, BTreeMap<String, usize>> = BTreeMap::new();
        let mut entries = Vec::with_capacity(configs.len());
        for config in configs {
            let fingerprint = config.fingerprint();
            let path = config.records_path(output_dir);
            if !counts.contains_key(&path) {
                let mut per_fp = BTreeMap::new();
                for r in load_records(&path)? {
                    *per_fp.entry(r.config_fingerprint).or_insert(0) += 1;
                }
                counts.insert(path.clone(), per_fp);
            }
            let persisted = counts[&path].get(&fingerprint).copied().unwrap_or(0);
            entries.push(ManifestEntry {
                status: CellStatus::from_count(persisted, config.n_test),
                fingerprint,
                config,
                persisted,
            });
        }
        Ok(Self { entries })
    }

    pub fn planned_calls(&self) -> usize {
        self.entries.iter().map(|e| e.config.n_test).sum()
    }

    pub fn persisted_calls(&self) -> usize {
        self.entries.iter().map(|e| e.persisted.min(e.config.n_test)).sum()
    }

    pub fn count(&self, status: CellStatus) -> usize {
        self.entries.iter().filter(|e| e.status == status).count()
    }
}
