//! Supervised fine-tuning inputs: an instruction corpus built from training
//! respondents, answer-only loss masks and the adapter training
//! configuration. Training itself happens in external tooling.

use std::collections::HashSet;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dataset::ChoiceInstance;
use crate::prompt::{PromptError, PromptForge, PromptStyle};

/// Label value ignored by the training loss.
pub const IGNORE_INDEX: i64 = -100;
pub const VALIDATION_FRACTION: f64 = 0.1;
pub const CORPUS_FILE: &str = "corpus.jsonl";
pub const CONFIG_FILE: &str = "finetune_config.json";

#[derive(Debug, Error)]
pub enum FinetuneError {
    #[error("training corpus is empty")]
    Empty,
    #[error("instance `{0}` is also in the test split")]
    Leakage(String),
    #[error("instruction for `{0}` contains its own answer")]
    AnswerInInstruction(String),
    #[error("prompt length must be positive")]
    NoPrompt,
    #[error("prompt length {prompt_len} leaves no answer tokens in a sequence of {len}")]
    EmptyAnswer { prompt_len: usize, len: usize },
    #[error(transparent)]
    Prompt(#[from] PromptError),
    #[error("cannot access fine-tuning bundle: {0}")]
    Io(#[from] std::io::Error),
    #[error("malformed fine-tuning bundle: {0}")]
    Format(#[from] serde_json::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Split {
    Train,
    Validation,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TrainingExample {
    pub id: String,
    pub instruction: String,
    pub selected_mode: String,
    pub split: Split,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorpusManifest {
    pub seed: u64,
    pub template_hash: String,
    pub n_train: usize,
    pub n_validation: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainingCorpus {
    pub manifest: CorpusManifest,
    pub examples: Vec<TrainingExample>,
}

/// Number of validation examples for a corpus of `n`.
pub fn validation_size(n: usize) -> usize {
    (n as f64 * VALIDATION_FRACTION).round() as usize
}

/// One example per training instance, rendered as a direct-style prompt
/// without the answer, then partitioned 90/10 by a seeded shuffle.
pub fn build_training_corpus(
    train: &[ChoiceInstance],
    test: &[ChoiceInstance],
    forge: &PromptForge<'_>,
    seed: u64,
) -> Result<TrainingCorpus, FinetuneError> {
    if train.is_empty() {
        return Err(FinetuneError::Empty);
    }
    let test_ids: HashSet<&str> = test.iter().map(|d| d.id.as_str()).collect();
    if let Some(d) = train.iter().find(|d| test_ids.contains(d.id.as_str())) {
        return Err(FinetuneError::Leakage(d.id.clone()));
    }

    let mut order: Vec<usize> = (0..train.len()).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let n_validation = validation_size(train.len());
    let mut split = vec![Split::Train; train.len()];
    for &i in &order[..n_validation] {
        split[i] = Split::Validation;
    }

    let examples = train
        .iter()
        .zip(split)
        .map(|(d, split)| {
            let bundle = forge.assemble(d, &[], PromptStyle::Direct)?;
            let instruction = format!("{}\n\n{}", bundle.system, bundle.user_message());
            if instruction.contains(&forge.template().answer_line(&d.chosen_mode)) {
                return Err(FinetuneError::AnswerInInstruction(d.id.clone()));
            }
            Ok(TrainingExample { id: d.id.clone(), instruction, selected_mode: d.chosen_mode.clone(), split })
        })
        .collect::<Result<Vec<_>, FinetuneError>>()?;

    Ok(TrainingCorpus {
        manifest: CorpusManifest {
            seed,
            template_hash: forge.template_hash().to_string(),
            n_train: train.len() - n_validation,
            n_validation,
        },
        examples,
    })
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MaskedSequence {
    pub tokens: Vec<i64>,
    pub labels: Vec<i64>,
    pub prompt_len: usize,
}

/// Labels copy `tokens` except the first `prompt_len`, which are set to
/// [`IGNORE_INDEX`] so only answer tokens carry loss.
pub fn mask_labels(tokens: &[i64], prompt_len: usize) -> Result<MaskedSequence, FinetuneError> {
    if prompt_len == 0 {
        return Err(FinetuneError::NoPrompt);
    }
    if prompt_len >= tokens.len() {
        return Err(FinetuneError::EmptyAnswer { prompt_len, len: tokens.len() });
    }
    let labels = tokens
        .iter()
        .enumerate()
        .map(|(j, &t)| if j < prompt_len { IGNORE_INDEX } else { t })
        .collect();
    Ok(MaskedSequence { tokens: tokens.to_vec(), labels, prompt_len })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FinetuneConfig {
    pub lora_rank: u32,
    pub lora_alpha: u32,
    /// Layers receiving adapters, in the usual projection naming.
    pub target_modules: Vec<String>,
    /// Adapted forward pass, documented for the external trainer.
    pub adapter_update: String,
    pub quantization: String,
    pub compute_dtype: String,
    pub optimizer: String,
    pub learning_rate: f64,
    pub lr_schedule: String,
    pub max_epochs: u32,
    pub early_stop_patience: u32,
    pub selection_metric: String,
    pub train_fraction: f64,
    pub validation_fraction: f64,
    pub ignore_index: i64,
    pub loss: String,
}

impl Default for FinetuneConfig {
    fn default() -> Self {
        Self {
            lora_rank: 32,
            lora_alpha: 64,
            target_modules: ["q_proj", "k_proj", "v_proj", "o_proj", "gate_proj", "up_proj", "down_proj"]
                .map(String::from)
                .to_vec(),
            adapter_update: "h = W0 z + (lora_alpha / lora_rank) V U z".into(),
            quantization: "nf4".into(),
            compute_dtype: "float16".into(),
            optimizer: "paged_adamw".into(),
            learning_rate: 2e-5,
            lr_schedule: "constant".into(),
            max_epochs: 5,
            early_stop_patience: 2,
            selection_metric: "f1_weighted".into(),
            train_fraction: 1.0 - VALIDATION_FRACTION,
            validation_fraction: VALIDATION_FRACTION,
            ignore_index: IGNORE_INDEX,
            loss: "cross-entropy over answer tokens only".into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct ConfigDocument {
    training: FinetuneConfig,
    corpus: CorpusManifest,
}

/// Writes `corpus.jsonl` and `finetune_config.json` into `dir`.
pub fn export_finetune_bundle(
    corpus: &TrainingCorpus,
    config: &FinetuneConfig,
    dir: impl AsRef<Path>,
) -> Result<PathBuf, FinetuneError> {
    if corpus.examples.is_empty() {
        return Err(FinetuneError::Empty);
    }
    let dir = dir.as_ref();
    std::fs::create_dir_all(dir)?;
    let mut w = BufWriter::new(File::create(dir.join(CORPUS_FILE))?);
    for ex in &corpus.examples {
        serde_json::to_writer(&mut w, ex)?;
        w.write_all(b"\n")?;
    }
    w.flush()?;
    let doc = ConfigDocument { training: config.clone(), corpus: corpus.manifest.clone() };
    std::fs::write(dir.join(CONFIG_FILE), serde_json::to_string_pretty(&doc)? + "\n")?;
    Ok(dir.to_path_buf())
}

pub fn load_finetune_bundle(dir: impl AsRef<Path>) -> Result<(TrainingCorpus, FinetuneConfig), FinetuneError> {
    let dir = dir.as_ref();
    let doc: ConfigDocument = serde_json::from_str(&std::fs::read_to_string(dir.join(CONFIG_FILE))?)?;
    let mut examples = Vec::new();
    for line in BufReader::new(File::open(dir.join(CORPUS_FILE))?).lines() {
        examples.push(serde_json::from_str(&line?)?);
    }
    Ok((TrainingCorpus { manifest: doc.corpus, examples }, doc.training))
}
