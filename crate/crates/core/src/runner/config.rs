use std::collections::BTreeSet;
use std::path::{Path, PathBuf};
use std::time::Duration;

use serde::{Deserialize, Serialize};

use super::RunnerError;
use crate::analysis::Aggregation;
use crate::dataset::{AttributeSchema, LoadOptions, DEFAULT_N_RESPONDENTS, DEFAULT_N_TEST};
use crate::gateway::{AliasTable, ModelEndpoint};
use crate::metrics::DEFAULT_EPSILON;
use crate::prompt::{PromptStyle, PromptTemplate};
use crate::reasoning::FactorLexicon;
use crate::similarity::{ShotType, SimilarityWeights, DEFAULT_K};

fn default_output_dir() -> PathBuf {
    PathBuf::from("results")
}
fn default_seed() -> u64 {
    7
}
fn default_k() -> usize {
    DEFAULT_K
}
fn default_parallel() -> usize {
    1
}
fn default_max_tokens() -> u32 {
    512
}
fn default_api_key_env() -> String {
    "MCBENCH_API_KEY".into()
}
fn default_epsilon() -> f64 {
    DEFAULT_EPSILON
}
fn default_delimiter() -> char {
    ','
}
fn default_missing_tokens() -> Vec<String> {
    LoadOptions::default().missing_tokens
}
fn default_n_respondents() -> usize {
    DEFAULT_N_RESPONDENTS
}
fn default_n_test() -> usize {
    DEFAULT_N_TEST
}
fn default_timeout_secs() -> u64 {
    120
}
fn default_max_retries() -> u32 {
    3
}
fn default_backoff_ms() -> u64 {
    500
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunSection {
    /// Relative paths resolve against the config file's directory.
    #[serde(default = "default_output_dir")]
    pub output_dir: PathBuf,
    #[serde(default = "default_seed")]
    pub seed: u64,
    #[serde(default = "default_k")]
    pub k: usize,
    /// In-flight requests per cell.
    #[serde(default = "default_parallel")]
    pub parallel: usize,
    #[serde(default = "default_max_tokens")]
    pub max_tokens: u32,
    /// Environment variable holding the bearer token.
    #[serde(default = "default_api_key_env")]
    pub api_key_env: String,
    #[serde(default = "default_epsilon")]
    pub epsilon: f64,
}

impl Default for RunSection {
    fn default() -> Self {
        toml::from_str("").expect("all fields have defaults")
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetConfig {
    pub name: String,
    pub path: PathBuf,
    #[serde(default = "default_delimiter")]
    pub delimiter: char,
    #[serde(default = "default_missing_tokens")]
    pub missing_tokens: Vec<String>,
    #[serde(default = "default_n_respondents")]
    pub n_respondents: usize,
    #[serde(default = "default_n_test")]
    pub n_test: usize,
    #[serde(default)]
    pub weights: SimilarityWeights,
    #[serde(default)]
    pub aliases: AliasTable,
    /// Inline schema; exclusive with `schema_file`.
    #[serde(default)]
    pub schema: Option<AttributeSchema>,
    /// TOML file holding the schema.
    #[serde(default)]
    pub schema_file: Option<PathBuf>,
}

impl DatasetConfig {
    pub fn load_options(&self) -> Result<LoadOptions, RunnerError> {
        if !self.delimiter.is_ascii() {
            return Err(RunnerError::Config(format!("dataset `{}`: delimiter must be ASCII", self.name)));
        }
        Ok(LoadOptions { delimiter: self.delimiter as u8, missing_tokens: self.missing_tokens.clone() })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EndpointConfig {
    /// Name used in the matrix and in file names.
    pub name: String,
    pub base_url: String,
    /// Model identifier sent to the server; defaults to `name`.
    #[serde(default)]
    pub model: Option<String>,
    #[serde(default = "default_timeout_secs")]
    pub timeout_secs: u64,
    #[serde(default = "default_max_retries")]
    pub max_retries: u32,
    #[serde(default = "default_backoff_ms")]
    pub backoff_ms: u64,
}

impl EndpointConfig {
    pub fn model_name(&self) -> &str {
        self.model.as_deref().unwrap_or(&self.name)
    }

    pub fn to_endpoint(&self, api_key: Option<String>) -> ModelEndpoint {
        let mut e = ModelEndpoint::new(&self.base_url, self.model_name());
        e.api_key = api_key;
        e.timeout = Duration::from_secs(self.timeout_secs);
        e.max_retries = self.max_retries;
        e.backoff = Duration::from_millis(self.backoff_ms);
        e
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MatrixAxes {
    /// Endpoint names.
    pub models: Vec<String>,
    /// Dataset names.
    pub datasets: Vec<String>,
    #[serde(default = "all_shots")]
    pub shots: Vec<ShotType>,
    #[serde(default = "all_styles")]
    pub styles: Vec<PromptStyle>,
    #[serde(default = "default_temperatures")]
    pub temperatures: Vec<f64>,
}

fn all_shots() -> Vec<ShotType> {
    ShotType::ALL.to_vec()
}
fn all_styles() -> Vec<PromptStyle> {
    PromptStyle::ALL.to_vec()
}
fn default_temperatures() -> Vec<f64> {
    vec![0.5, 1.0]
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReasoningSection {
    #[serde(default)]
    pub lexicon: FactorLexicon,
    /// Match factors as whole tokens instead of substrings.
    #[serde(default)]
    pub token_boundaries: bool,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AnalysisSection {
    #[serde(default)]
    pub aggregation: Aggregation,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PromptSection {
    /// TOML prompt template; the built-in wording is used when absent.
    #[serde(default)]
    pub template: Option<PathBuf>,
}

/// The single configuration document of a campaign.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default)]
    pub run: RunSection,
    #[serde(default)]
    pub datasets: Vec<DatasetConfig>,
    #[serde(default)]
    pub endpoints: Vec<EndpointConfig>,
    pub matrix: MatrixAxes,
    #[serde(default)]
    pub reasoning: ReasoningSection,
    #[serde(default)]
    pub analysis: AnalysisSection,
    #[serde(default)]
    pub prompt: PromptSection,
    #[serde(skip)]
    pub base_dir: PathBuf,
}

fn check_unique<T: std::fmt::Debug>(axis: &str, items: &[T], key: impl Fn(&T) -> String) -> Result<(), RunnerError> {
    if items.is_empty() {
        return Err(RunnerError::Config(format!("matrix axis `{axis}` is empty")));
    }
    let mut seen = BTreeSet::new();
    for it in items {
        if !seen.insert(key(it)) {
            return Err(RunnerError::Config(format!("matrix axis `{axis}` lists {it:?} twice")));
        }
    }
    Ok(())
}

impl RunConfig {
    pub fn load(path: impl AsRef<Path>) -> Result<Self, RunnerError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)
            .map_err(|e| RunnerError::Config(format!("cannot read {}: {e}", path.display())))?;
        let mut config = Self::parse(&text)?;
        config.base_dir = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Ok(config)
    }

    pub fn parse(text: &str) -> Result<Self, RunnerError> {
        let config: RunConfig = toml::from_str(text).map_err(|e| RunnerError::Config(e.to_string()))?;
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<(), RunnerError> {
        let err = |m: String| Err(RunnerError::Config(m));
        if self.run.k == 0 || self.run.parallel == 0 || self.run.max_tokens == 0 {
            return err("run.k, run.parallel and run.max_tokens must be positive".into());
        }
        if !(self.run.epsilon > 0.0 && self.run.epsilon < 1.0) {
            return err(format!("run.epsilon {} outside (0, 1)", self.run.epsilon));
        }
        let m = &self.matrix;
        check_unique("models", &m.models, |s| s.clone())?;
        check_unique("datasets", &m.datasets, |s| s.clone())?;
        check_unique("shots", &m.shots, |s| s.to_string())?;
        check_unique("styles", &m.styles, |s| s.to_string())?;
        check_unique("temperatures", &m.temperatures, |t| t.to_string())?;
        if let Some(t) = m.temperatures.iter().find(|t| !(0.0..=2.0).contains(*t)) {
            return err(format!("temperature {t} outside [0, 2]"));
        }
        check_unique("endpoints", &self.endpoints, |e| e.name.clone()).or_else(|e| {
            if self.endpoints.is_empty() {
                err("no endpoints declared".into())
            } else {
                Err(e)
            }
        })?;
        check_unique("dataset declarations", &self.datasets, |d| d.name.clone()).or_else(|e| {
            if self.datasets.is_empty() {
                err("no datasets declared".into())
            } else {
                Err(e)
            }
        })?;
        for name in &m.models {
            if self.endpoint(name).is_none() {
                return err(format!("matrix model `{name}` has no [[endpoints]] entry"));
            }
        }
        for name in &m.datasets {
            if self.dataset(name).is_none() {
                return err(format!("matrix dataset `{name}` has no [[datasets]] entry"));
            }
        }
        for d in &self.datasets {
            if d.schema.is_some() == d.schema_file.is_some() {
                return err(format!("dataset `{}` needs exactly one of `schema` and `schema_file`", d.name));
            }
            if d.n_test == 0 || d.n_respondents == 0 {
                return err(format!("dataset `{}`: n_test and n_respondents must be positive", d.name));
            }
            d.weights.validate().map_err(|e| RunnerError::Config(format!("dataset `{}`: {e}", d.name)))?;
            d.load_options()?;
        }
        Ok(())
    }

    pub fn endpoint(&self, name: &str) -> Option<&EndpointConfig> {
        self.endpoints.iter().find(|e| e.name == name)
    }

    pub fn dataset(&self, name: &str) -> Option<&DatasetConfig> {
        self.datasets.iter().find(|d| d.name == name)
    }

    pub fn resolve(&self, path: &Path) -> PathBuf {
        if path.is_absolute() {
            path.to_path_buf()
        } else {
            self.base_dir.join(path)
        }
    }

    pub fn output_dir(&self) -> PathBuf {
        self.resolve(&self.run.output_dir)
    }

    pub fn template(&self) -> Result<PromptTemplate, RunnerError> {
        match &self.prompt.template {
            Some(p) => Ok(PromptTemplate::load(self.resolve(p))?),
            None => Ok(PromptTemplate::default()),
        }
    }

    pub fn schema(&self, dataset: &DatasetConfig) -> Result<AttributeSchema, RunnerError> {
        let schema = match (&dataset.schema, &dataset.schema_file) {
            (Some(s), _) => s.clone(),
            (None, Some(p)) => {
                let p = self.resolve(p);
                let text = std::fs::read_to_string(&p)
                    .map_err(|e| RunnerError::Config(format!("cannot read {}: {e}", p.display())))?;
                toml::from_str(&text).map_err(|e| RunnerError::Config(format!("{}: {e}", p.display())))?
            }
            (None, None) => unreachable!("validated"),
        };
        schema.validate()?;
        Ok(schema)
    }
}
