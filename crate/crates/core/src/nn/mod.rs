//! Minimal reverse-mode differentiation: only the layers, losses and
//! optimizer the probe models need, plus a finite-difference checker.

mod adam;
mod gradcheck;
pub mod kernels;
mod layers;
mod tape;
mod tensor;

pub use adam::{adam_step, AdamState};
pub use gradcheck::{grad_check, GradCheckOptions};
pub use layers::{Activation, Conv2dParams, LinearParams};
pub use tape::{Tape, Var};
pub use tensor::Tensor;

use thiserror::Error;

/// `logvar` is clamped to `[-LOGVAR_CLAMP, LOGVAR_CLAMP]` before exponentiation.
pub const LOGVAR_CLAMP: f64 = 20.0;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum NnError {
    #[error("shape error: {0}")]
    Shape(String),
    #[error("degenerate input: {0}")]
    Degenerate(String),
    #[error("non-finite value in {0}")]
    NonFinite(String),
    #[error("max-margin loss needs at least one negative score")]
    EmptyNegatives,
}

/// Cosine similarity of two plain vectors; errors on zero norm.
pub fn cosine_similarity(a: &[f64], b: &[f64]) -> Result<f64, NnError> {
    if a.len() != b.len() {
        return Err(NnError::Shape(format!(
            "cosine: lengths {} and {}",
            a.len(),
            b.len()
        )));
    }
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let na = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    if na == 0.0 || nb == 0.0 || !na.is_finite() || !nb.is_finite() {
        return Err(NnError::Degenerate(format!(
            "cosine similarity of a zero-norm or non-finite vector (norms {na}, {nb})"
        )));
    }
    Ok((dot / (na * nb)).clamp(-1.0, 1.0))
}

/// `max(0, 1 - score_pos + mean(scores_neg))`.
pub fn max_margin(score_pos: f64, scores_neg: &[f64]) -> Result<f64, NnError> {
    if scores_neg.is_empty() {
        return Err(NnError::EmptyNegatives);
    }
    let mean = scores_neg.iter().sum::<f64>() / scores_neg.len() as f64;
    Ok((1.0 - score_pos + mean).max(0.0))
}

/// `1/2 * sum(mu^2 + exp(logvar) - 1 - logvar)`.
pub fn kl_standard_normal(mu: &[f64], logvar: &[f64]) -> Result<f64, NnError> {
    if mu.len() != logvar.len() {
        return Err(NnError::Shape(format!(
            "kl: mu {} vs logvar {}",
            mu.len(),
            logvar.len()
        )));
    }
    if mu.iter().chain(logvar).any(|v| !v.is_finite()) {
        return Err(NnError::NonFinite("kl inputs".into()));
    }
    Ok(0.5
        * mu.iter()
            .zip(logvar)
            .map(|(m, l)| m * m + l.clamp(-LOGVAR_CLAMP, LOGVAR_CLAMP).exp() - 1.0 - l)
            .sum::<f64>())
}
