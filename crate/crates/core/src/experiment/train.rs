use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::models::{
    accumulate_grads, sentence_loss_on, two_level_loss_on, ArchConfig, LossWeights, Mode, Model,
    ModelKind, SentenceVae, TwoLevelVae,
};
use crate::nn::{adam_step, AdamState, Tape, Var};
use crate::util::derive_seed;

use super::data::ProbeDataset;
use super::eval::predict;
use super::{ExperimentError, RunConfig, TaskKind};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochLog {
    pub epoch: usize,
    pub train_loss: f64,
    pub dev_accuracy: Option<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainOutcome {
    pub model: Model,
    /// Highest dev accuracy seen (earliest epoch on ties); the final model
    /// when there is no dev set.
    pub best_model: Model,
    pub best_epoch: usize,
    pub log: Vec<EpochLog>,
}

/// Instances per tape. Gradients of one batch are accumulated over several
/// tapes to bound memory.
fn tape_chunk(kind: ModelKind) -> usize {
    match kind {
        ModelKind::Sentence => 25,
        ModelKind::TwoLevel => 5,
    }
}

fn instance_loss(
    model: &Model,
    tape: &mut Tape,
    params: &Bound,
    ds: &ProbeDataset,
    i: usize,
    w: LossWeights,
    rng: &mut ChaCha8Rng,
) -> Result<Var, ExperimentError> {
    let x = &ds.instances[i];
    let cands: Vec<&[f64]> = x.candidates.iter().map(|&c| ds.grid(c)).collect();
    let mut mode = Mode::Train(rng);
    Ok(match (model, params) {
        (Model::Sentence(m), Bound::Sentence(b)) => {
            let negs: Vec<&[f64]> = cands
                .iter()
                .enumerate()
                .filter(|&(k, _)| k != x.correct)
                .map(|(_, c)| *c)
                .collect();
            let input = ds.grid(x.inputs[0]);
            sentence_loss_on(m, tape, *b, input, cands[x.correct], &negs, w, &mut mode)?.0
        }
        (Model::TwoLevel(m), Bound::TwoLevel(b)) => {
            let ctx: Vec<&[f64]> = x.inputs.iter().map(|&c| ds.grid(c)).collect();
            two_level_loss_on(m, tape, *b, &ctx, &cands, x.correct, w, &mut mode)?
        }
        _ => unreachable!("binding matches model"),
    })
}

enum Bound {
    Sentence(crate::models::BoundSentence),
    TwoLevel(crate::models::BoundTwoLevel),
}

impl Bound {
    fn new(model: &Model, tape: &mut Tape) -> (Self, Vec<Var>) {
        match model {
            Model::Sentence(m) => {
                let b = m.bind(tape);
                (Bound::Sentence(b), SentenceVae::param_vars(&b))
            }
            Model::TwoLevel(m) => {
                let b = m.bind(tape);
                (Bound::TwoLevel(b), TwoLevelVae::param_vars(&b))
            }
        }
    }
}

/// Train one model with Adam on mini-batches; the batch loss is the mean
/// instance loss. Deterministic for a given `seed`.
pub fn train(
    ds: &ProbeDataset,
    train_idx: &[usize],
    dev_idx: &[usize],
    cfg: &RunConfig,
    seed: u64,
) -> Result<TrainOutcome, ExperimentError> {
    cfg.validate()?;
    if train_idx.is_empty() {
        return Err(ExperimentError::EmptySplit("train"));
    }
    let kind = if ds.task == TaskKind::Sentence {
        ModelKind::Sentence
    } else {
        ModelKind::TwoLevel
    };
    let mut init_rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, "train/init"));
    let mut model = Model::new(kind, ArchConfig::preset(cfg.preset), &mut init_rng)?;
    let mut order_rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, "train/order"));
    let mut sample_rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, "train/sample"));
    let mut adam = AdamState::new(cfg.lr);
    let chunk = tape_chunk(kind);

    let mut log = Vec::with_capacity(cfg.epochs);
    let mut best: Option<(f64, usize, Model)> = None;
    let weights = cfg.loss_weights();
    let mut order = train_idx.to_vec();
    for epoch in 1..=cfg.epochs {
        order.shuffle(&mut order_rng);
        let mut epoch_loss = 0.0;
        for batch in order.chunks(cfg.batch) {
            let scale = 1.0 / batch.len() as f64;
            let mut grads: Vec<Vec<f64>> = model
                .params_mut()
                .iter()
                .map(|t| vec![0.0; t.len()])
                .collect();
            for part in batch.chunks(chunk) {
                let mut tape = Tape::new();
                let (bound, vars) = Bound::new(&model, &mut tape);
                let mut losses = Vec::with_capacity(part.len());
                for &i in part {
                    losses.push(instance_loss(
                        &model,
                        &mut tape,
                        &bound,
                        ds,
                        i,
                        weights,
                        &mut sample_rng,
                    )?);
                }
                let total = tape.sum(&losses)?;
                let value = tape.scalar(total);
                if !value.is_finite() {
                    return Err(ExperimentError::Diverged {
                        epoch,
                        msg: format!("batch loss {value}"),
                    });
                }
                epoch_loss += value;
                let mean = tape.scale(total, scale);
                tape.backward(mean)?;
                accumulate_grads(&tape, &vars, &mut grads);
            }
            if let Some(k) = grads.iter().position(|g| g.iter().any(|v| !v.is_finite())) {
                return Err(ExperimentError::Diverged {
                    epoch,
                    msg: format!("non-finite gradient in parameter {k}"),
                });
            }
            adam_step(&mut model.params_mut(), &grads, &mut adam)?;
        }
        let train_loss = epoch_loss / order.len() as f64;
        let dev_accuracy = if dev_idx.is_empty() {
            None
        } else {
            let chosen = predict(&model, ds, dev_idx, cfg.workers)?;
            let hits = dev_idx
                .iter()
                .zip(&chosen)
                .filter(|&(&i, &c)| ds.instances[i].correct == c)
                .count();
            Some(hits as f64 / dev_idx.len() as f64)
        };
        log::info!(
            "seed {seed} epoch {epoch}/{}: train loss {train_loss:.6}{}",
            cfg.epochs,
            dev_accuracy
                .map(|a| format!(", dev accuracy {a:.4}"))
                .unwrap_or_default()
        );
        if let Some(acc) = dev_accuracy {
            if best.as_ref().is_none_or(|b| acc > b.0) {
                best = Some((acc, epoch, model.clone()));
            }
        }
        log.push(EpochLog {
            epoch,
            train_loss,
            dev_accuracy,
        });
    }
    let (best_epoch, best_model) = match best {
        Some((_, e, m)) => (e, m),
        None => (cfg.epochs, model.clone()),
    };
    Ok(TrainOutcome {
        model,
        best_model,
        best_epoch,
        log,
    })
}
