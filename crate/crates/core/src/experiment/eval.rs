use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::models::{predict_answer, Model, SentenceVae};

use super::data::ProbeDataset;
use super::report::ConfusionMatrix;
use super::ExperimentError;

fn candidates(ds: &ProbeDataset, i: usize) -> Vec<&[f64]> {
    ds.instances[i]
        .candidates
        .iter()
        .map(|&c| ds.grid(c))
        .collect()
}

fn predict_one(model: &Model, ds: &ProbeDataset, i: usize) -> Result<usize, ExperimentError> {
    let x = &ds.instances[i];
    let pred = match model {
        Model::Sentence(m) => m.reconstruct(ds.grid(x.inputs[0]))?,
        Model::TwoLevel(m) => {
            let ctx: Vec<&[f64]> = x.inputs.iter().map(|&c| ds.grid(c)).collect();
            m.forward(&ctx)?.answer
        }
    };
    Ok(predict_answer(&pred, &candidates(ds, i))?)
}

/// Run `f` over `idx` on up to `workers` threads; results keep `idx` order.
fn parallel_map<T, F>(idx: &[usize], workers: usize, f: F) -> Result<Vec<T>, ExperimentError>
where
    T: Send,
    F: Fn(usize) -> Result<T, ExperimentError> + Sync,
{
    let workers = workers.clamp(1, idx.len().max(1));
    if workers == 1 {
        return idx.iter().map(|&i| f(i)).collect();
    }
    let per = idx.len().div_ceil(workers);
    std::thread::scope(|s| {
        let handles: Vec<_> = idx
            .chunks(per)
            .map(|part| {
                let f = &f;
                s.spawn(move || part.iter().map(|&i| f(i)).collect::<Result<Vec<T>, _>>())
            })
            .collect();
        let mut out = Vec::with_capacity(idx.len());
        for h in handles {
            out.extend(h.join().expect("evaluation worker panicked")?);
        }
        Ok(out)
    })
}

/// Chosen candidate index for every instance in `idx` (eval mode).
pub fn predict(
    model: &Model,
    ds: &ProbeDataset,
    idx: &[usize],
    workers: usize,
) -> Result<Vec<usize>, ExperimentError> {
    parallel_map(idx, workers, |i| predict_one(model, ds, i))
}

/// Positive-class F1 where an instance is a hit iff its correct candidate
/// was chosen.
///
/// Each instance yields exactly one prediction, so a miss is both a false
/// positive (the wrong candidate) and a false negative (the correct one).
/// Precision and recall are therefore both `tp / n`, and F1 equals accuracy;
/// the equality is asserted.
pub fn f1_single_choice(hits: &[bool]) -> Result<f64, ExperimentError> {
    if hits.is_empty() {
        return Err(ExperimentError::EmptySplit("test"));
    }
    let n = hits.len() as f64;
    let tp = hits.iter().filter(|&&h| h).count() as f64;
    let (fp, fn_) = (n - tp, n - tp);
    let accuracy = tp / n;
    let f1 = if tp == 0.0 {
        0.0
    } else {
        let p = tp / (tp + fp);
        let r = tp / (tp + fn_);
        2.0 * p * r / (p + r)
    };
    assert!(
        (f1 - accuracy).abs() <= 1e-12,
        "F1 {f1} differs from accuracy {accuracy}"
    );
    Ok(f1)
}

/// Cell `(true label, label of the chosen candidate)` per instance.
pub fn confusion(
    ds: &ProbeDataset,
    idx: &[usize],
    chosen: &[usize],
) -> Result<ConfusionMatrix, ExperimentError> {
    let mut m = ConfusionMatrix::new(ds.labels.clone());
    for (&i, &c) in idx.iter().zip(chosen) {
        let x = &ds.instances[i];
        let label = x
            .candidate_labels
            .get(c)
            .ok_or_else(|| ExperimentError::Unlabeled {
                instance: x.id.clone(),
                index: c,
            })?;
        if !m.add(&x.true_label, label) {
            return Err(ExperimentError::Unlabeled {
                instance: x.id.clone(),
                index: c,
            });
        }
    }
    Ok(m)
}

/// Wrongly chosen labels.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ErrorAnalysis {
    pub counts: BTreeMap<String, u64>,
    pub total: u64,
    /// Errors on sequence-error labels (WN1/WN2 for agreement).
    pub sequence: u64,
    pub other: u64,
}

impl ErrorAnalysis {
    /// `log10` of each label's share of all errors, in percent.
    pub fn log_percent(&self) -> BTreeMap<String, f64> {
        self.counts
            .iter()
            .map(|(k, &v)| (k.clone(), (100.0 * v as f64 / self.total as f64).log10()))
            .collect()
    }
}

pub fn error_analysis(
    ds: &ProbeDataset,
    idx: &[usize],
    chosen: &[usize],
    sequence_labels: &[&str],
) -> ErrorAnalysis {
    let mut out = ErrorAnalysis::default();
    for (&i, &c) in idx.iter().zip(chosen) {
        let x = &ds.instances[i];
        if c == x.correct {
            continue;
        }
        let label = &x.candidate_labels[c];
        *out.counts.entry(label.clone()).or_default() += 1;
        out.total += 1;
        if sequence_labels.contains(&label.as_str()) {
            out.sequence += 1;
        } else {
            out.other += 1;
        }
    }
    out
}

/// Predictions, F1 and the derived tables for one test set.
#[derive(Clone, Debug, PartialEq)]
pub struct Evaluation {
    pub chosen: Vec<usize>,
    pub f1: f64,
    pub confusion: ConfusionMatrix,
    pub errors: ErrorAnalysis,
}

pub fn evaluate(
    model: &Model,
    ds: &ProbeDataset,
    idx: &[usize],
    workers: usize,
) -> Result<Evaluation, ExperimentError> {
    if idx.is_empty() {
        return Err(ExperimentError::EmptySplit("test"));
    }
    let chosen = predict(model, ds, idx, workers)?;
    let hits: Vec<bool> = idx
        .iter()
        .zip(&chosen)
        .map(|(&i, &c)| ds.instances[i].correct == c)
        .collect();
    let f1 = f1_single_choice(&hits)?;
    let seq = ds
        .task
        .blm_task()
        .map(|t| t.sequence_error_labels())
        .unwrap_or(&[]);
    Ok(Evaluation {
        confusion: confusion(ds, idx, &chosen)?,
        errors: error_analysis(ds, idx, &chosen, seq),
        chosen,
        f1,
    })
}

fn input_mu(model: &SentenceVae, ds: &ProbeDataset, i: usize) -> Result<Vec<f64>, ExperimentError> {
    Ok(model
        .encode_sentence(ds.grid(ds.instances[i].inputs[0]))?
        .mu)
}

/// Per latent unit, `(min, max)` of the mean latent over the inputs of `train_idx`.
pub fn latent_ranges(
    model: &SentenceVae,
    ds: &ProbeDataset,
    train_idx: &[usize],
) -> Result<Vec<(f64, f64)>, ExperimentError> {
    if train_idx.is_empty() {
        return Err(ExperimentError::EmptySplit("train"));
    }
    let mut ranges = vec![(f64::INFINITY, f64::NEG_INFINITY); model.arch.latent];
    for &i in train_idx {
        for (r, v) in ranges.iter_mut().zip(input_mu(model, ds, i)?) {
            *r = (r.0.min(v), r.1.max(v));
        }
    }
    Ok(ranges)
}

/// Predictions after replacing each instance's mean latent by `edit(mu)`.
pub fn predict_with_latent<F>(
    model: &SentenceVae,
    ds: &ProbeDataset,
    idx: &[usize],
    workers: usize,
    edit: F,
) -> Result<Vec<usize>, ExperimentError>
where
    F: Fn(&[f64]) -> Vec<f64> + Sync,
{
    parallel_map(idx, workers, |i| {
        let z = edit(&input_mu(model, ds, i)?);
        let pred = model.decode_sentence(&z)?;
        Ok(predict_answer(&pred, &candidates(ds, i))?)
    })
}

#[derive(Clone, Debug, PartialEq)]
pub struct TraversalStep {
    pub unit: usize,
    pub step: usize,
    pub value: f64,
    pub accuracy: f64,
    pub confusion: ConfusionMatrix,
}

/// For each latent unit and each of `steps` evenly spaced values in its
/// range, set that unit to the value for every test instance, decode and
/// re-predict.
pub fn latent_traversal(
    model: &SentenceVae,
    ds: &ProbeDataset,
    test_idx: &[usize],
    ranges: &[(f64, f64)],
    steps: usize,
    workers: usize,
) -> Result<Vec<TraversalStep>, ExperimentError> {
    if test_idx.is_empty() {
        return Err(ExperimentError::EmptySplit("test"));
    }
    if steps < 2 {
        return Err(ExperimentError::Config(
            "traversal needs at least 2 steps".into(),
        ));
    }
    let mus = parallel_map(test_idx, workers, |i| input_mu(model, ds, i))?;
    let mut out = Vec::with_capacity(ranges.len() * steps);
    for (unit, &(lo, hi)) in ranges.iter().enumerate() {
        for step in 0..steps {
            let value = lo + (hi - lo) * step as f64 / (steps - 1) as f64;
            let positions: Vec<usize> = (0..test_idx.len()).collect();
            let chosen = parallel_map(&positions, workers, |k| {
                let mut z = mus[k].clone();
                z[unit] = value;
                let pred = model.decode_sentence(&z)?;
                Ok(predict_answer(&pred, &candidates(ds, test_idx[k]))?)
            })?;
            let hits = test_idx
                .iter()
                .zip(&chosen)
                .filter(|&(&i, &c)| ds.instances[i].correct == c)
                .count();
            out.push(TraversalStep {
                unit,
                step,
                value,
                accuracy: hits as f64 / test_idx.len() as f64,
                confusion: confusion(ds, test_idx, &chosen)?,
            });
        }
    }
    Ok(out)
}
