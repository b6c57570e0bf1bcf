//! Training, evaluation, analysis and report emission.

mod data;
mod eval;
mod pipeline;
mod project;
mod report;
mod train;

pub use data::{
    blm_probe, blm_synthetic_store, corpus_probe, corpus_synthetic_store, load_blm, load_corpus,
    synthetic_store, ProbeDataset, ProbeInstance,
};
pub use eval::{
    confusion, error_analysis, evaluate, f1_single_choice, latent_ranges, latent_traversal,
    predict, predict_with_latent, ErrorAnalysis, Evaluation, TraversalStep,
};
pub use pipeline::{
    checkpoint_path, evaluate_checkpoints, load_dataset, projection_for, run_pipeline, train_runs,
    traversal_for, write_run_manifest, PipelineOutput, TrainedRun,
};
pub use project::{project_latents_2d, silhouette, Projection};
pub use report::{
    emit_report, mean_std, ConfusionMatrix, Metrics, PairResult, ProjectionArtifact, Report, RunF1,
    METRICS_SCHEMA_VERSION,
};
pub use train::{train, EpochLog, TrainOutcome};

use std::path::PathBuf;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::blm::{BlmError, BlmTask, LexType};
use crate::corpus::CorpusError;
use crate::embed::{EmbedError, Layout};
use crate::models::{LossWeights, ModelError, Preset};
use crate::nn::NnError;

#[derive(Debug, Error)]
pub enum ExperimentError {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error(transparent)]
    Corpus(#[from] CorpusError),
    #[error(transparent)]
    Blm(#[from] BlmError),
    #[error(transparent)]
    Embed(#[from] EmbedError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Nn(#[from] NnError),
    #[error("empty {0} set")]
    EmptySplit(&'static str),
    #[error("training diverged at epoch {epoch}: {msg}")]
    Diverged { epoch: usize, msg: String },
    #[error("candidate {index} of instance {instance} has no label")]
    Unlabeled { instance: String, index: usize },
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("{path}:{line}: {msg}")]
    Csv {
        path: String,
        line: usize,
        msg: String,
    },
}

pub(crate) fn io_err(
    path: &std::path::Path,
) -> impl FnOnce(std::io::Error) -> ExperimentError + '_ {
    move |source| ExperimentError::Io {
        path: path.display().to_string(),
        source,
    }
}

/// Which probe is trained and on what data.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TaskKind {
    #[default]
    Sentence,
    BlmAgreement,
    BlmAltG1,
    BlmAltG2,
}

impl TaskKind {
    pub fn as_str(self) -> &'static str {
        match self {
            TaskKind::Sentence => "sentence",
            TaskKind::BlmAgreement => "blm_agreement",
            TaskKind::BlmAltG1 => "blm_alt_g1",
            TaskKind::BlmAltG2 => "blm_alt_g2",
        }
    }

    pub fn blm_task(self) -> Option<BlmTask> {
        match self {
            TaskKind::Sentence => None,
            TaskKind::BlmAgreement => Some(BlmTask::Agreement),
            TaskKind::BlmAltG1 => Some(BlmTask::AlternationG1),
            TaskKind::BlmAltG2 => Some(BlmTask::AlternationG2),
        }
    }
}

impl std::fmt::Display for TaskKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for TaskKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "sentence" => Ok(TaskKind::Sentence),
            "blm_agreement" => Ok(TaskKind::BlmAgreement),
            "blm_alt_g1" => Ok(TaskKind::BlmAltG1),
            "blm_alt_g2" => Ok(TaskKind::BlmAltG2),
            other => Err(format!(
                "unknown task {other:?} (expected sentence, blm_agreement, blm_alt_g1 or blm_alt_g2)"
            )),
        }
    }
}

/// Everything a train/eval run depends on. Defaults are the published
/// training settings.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub task: TaskKind,
    /// BLM lexical types trained on; each gets its own runs.
    pub lex_train: Vec<LexType>,
    /// BLM lexical types every trained model is tested on.
    pub lex_test: Vec<LexType>,
    pub epochs: usize,
    pub batch: usize,
    pub lr: f64,
    pub seeds: Vec<u64>,
    pub preset: Preset,
    pub kl_weight: f64,
    /// Two-level model: average the 7 sentence-level terms instead of summing.
    pub sentence_mean: bool,
    pub layout: Layout,
    /// Evaluation threads.
    pub workers: usize,
    pub traversal_steps: usize,
    /// Dataset directory (corpus or BLM).
    pub data: PathBuf,
    /// Embedding store file.
    pub embeddings: PathBuf,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            task: TaskKind::Sentence,
            lex_train: LexType::ALL.to_vec(),
            lex_test: LexType::ALL.to_vec(),
            epochs: 300,
            batch: 100,
            lr: 0.001,
            seeds: vec![0, 1, 2],
            preset: Preset::Default,
            kl_weight: 1.0,
            sentence_mean: true,
            layout: Layout::RowMajor,
            workers: 1,
            traversal_steps: 10,
            data: PathBuf::from("data"),
            embeddings: PathBuf::from("embeddings.sebemb"),
        }
    }
}

impl RunConfig {
    pub fn validate(&self) -> Result<(), ExperimentError> {
        let bad = |m: &str| Err(ExperimentError::Config(m.to_string()));
        if self.epochs == 0 {
            return bad("epochs must be positive");
        }
        if self.batch == 0 {
            return bad("batch must be positive");
        }
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return bad("lr must be a positive number");
        }
        if !(self.kl_weight >= 0.0 && self.kl_weight.is_finite()) {
            return bad("kl_weight must be non-negative");
        }
        if self.seeds.is_empty() {
            return bad("at least one seed is required");
        }
        if self.workers == 0 {
            return bad("workers must be positive");
        }
        if self.traversal_steps < 2 {
            return bad("traversal_steps must be at least 2");
        }
        if self.task != TaskKind::Sentence
            && (self.lex_train.is_empty() || self.lex_test.is_empty())
        {
            return bad("BLM runs need lex_train and lex_test");
        }
        Ok(())
    }

    pub fn loss_weights(&self) -> LossWeights {
        LossWeights {
            kl: self.kl_weight,
            sentence_mean: self.sentence_mean,
        }
    }

    /// Lexical types to train on; a single `None` for the sentence task.
    pub fn train_groups(&self) -> Vec<Option<LexType>> {
        match self.task {
            TaskKind::Sentence => vec![None],
            _ => self.lex_train.iter().copied().map(Some).collect(),
        }
    }

    pub fn test_groups(&self) -> Vec<Option<LexType>> {
        match self.task {
            TaskKind::Sentence => vec![None],
            _ => self.lex_test.iter().copied().map(Some).collect(),
        }
    }
}
