//! Sentence and two-level VAE probes, their losses and checkpoints.

mod checkpoint;
mod gradcheck;
mod loss;
mod vae;

pub use checkpoint::{
    read_checkpoint, write_checkpoint, Checkpoint, CheckpointHeader, Model, ModelKind,
};
pub use gradcheck::{gradcheck_suite, GradCheckCase, LOSS_TOLERANCE, OP_TOLERANCE};
pub use loss::{
    accumulate_grads, sentence_loss, sentence_loss_on, two_level_loss, two_level_loss_on,
    LossWeights,
};
pub use vae::{
    ArchConfig, BoundSentence, BoundTask, BoundTwoLevel, ConvDecoder, ConvEncoder,
    LatentDistribution, Preset, SentenceVae, TaskVae, TwoLevelOutput, TwoLevelVae, CONTEXT_LEN,
    SENTENCE_PARAM_NAMES, TASK_PARAM_NAMES,
};

use rand::RngCore;
use thiserror::Error;

use crate::nn::{cosine_similarity, NnError};

#[derive(Debug, Error)]
pub enum ModelError {
    #[error(transparent)]
    Nn(#[from] NnError),
    #[error("non-finite values in {0}")]
    NonFinite(String),
    #[error("context must hold exactly 7 sentences, got {0}")]
    Context(usize),
    #[error("answer set of {n} candidates with correct index {correct}")]
    Answers { n: usize, correct: usize },
    #[error("no candidates to choose from")]
    NoCandidates,
    #[error("checkpoint {path}: {msg}")]
    Checkpoint { path: String, msg: String },
    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

/// Whether latents are sampled (training) or taken as the mean (evaluation).
pub enum Mode<'a> {
    Train(&'a mut dyn RngCore),
    Eval,
}

/// Index of the candidate with the highest cosine similarity to `pred`.
/// Ties go to the lowest index.
pub fn predict_answer(pred: &[f64], candidates: &[&[f64]]) -> Result<usize, ModelError> {
    if candidates.is_empty() {
        return Err(ModelError::NoCandidates);
    }
    let mut best = (0, f64::NEG_INFINITY);
    for (i, c) in candidates.iter().enumerate() {
        let s = cosine_similarity(pred, c)?;
        if s > best.1 {
            best = (i, s);
        }
    }
    Ok(best.0)
}

/// For a 7-sentence context, each sentence paired with itself as the
/// positive and the other six as negatives.
pub fn make_onthefly_triples<T: Clone>(context: &[T]) -> Result<Vec<(T, T, Vec<T>)>, ModelError> {
    if context.len() != CONTEXT_LEN {
        return Err(ModelError::Context(context.len()));
    }
    Ok(context
        .iter()
        .enumerate()
        .map(|(i, s)| {
            let negs = context
                .iter()
                .enumerate()
                .filter(|&(k, _)| k != i)
                .map(|(_, t)| t.clone())
                .collect();
            (s.clone(), s.clone(), negs)
        })
        .collect())
}
