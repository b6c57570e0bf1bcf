use crate::nn::{Tape, Var};

use super::vae::{BoundSentence, BoundTwoLevel, SentenceVae, TwoLevelVae, CONTEXT_LEN};
use super::{make_onthefly_triples, Mode, ModelError};

fn grid(tape: &mut Tape, g: &[f64]) -> Result<Var, ModelError> {
    SentenceVae::input(tape, g)
}

/// Weighting of the loss terms. The default is the unweighted objective with
/// the two-level sentence terms averaged over the context.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LossWeights {
    pub kl: f64,
    /// Two-level model: mean (true) or sum (false) over the 7 sentence terms.
    pub sentence_mean: bool,
}

impl Default for LossWeights {
    fn default() -> Self {
        Self {
            kl: 1.0,
            sentence_mean: true,
        }
    }
}

impl LossWeights {
    pub fn with_kl(kl: f64) -> Self {
        Self {
            kl,
            ..Self::default()
        }
    }
}

/// Max-margin over cosine(reconstruction, candidate) plus weighted KL.
///
/// Returns `(loss, reconstruction)` with `loss = margin + w.kl * kl`.
#[allow(clippy::too_many_arguments)]
pub fn sentence_loss_on(
    model: &SentenceVae,
    tape: &mut Tape,
    b: BoundSentence,
    input: &[f64],
    positive: &[f64],
    negatives: &[&[f64]],
    w: LossWeights,
    mode: &mut Mode<'_>,
) -> Result<(Var, Var), ModelError> {
    if negatives.is_empty() {
        return Err(ModelError::Nn(crate::nn::NnError::EmptyNegatives));
    }
    let x = grid(tape, input)?;
    let (mu, lv) = model.encode(tape, b, x)?;
    let z = SentenceVae::latent(tape, mu, lv, mode)?;
    let recon = model.decode(tape, b, z)?;
    let pos = grid(tape, positive)?;
    let s_pos = tape.cosine_similarity(recon, pos)?;
    let mut s_neg = Vec::with_capacity(negatives.len());
    for n in negatives {
        let n = grid(tape, n)?;
        s_neg.push(tape.cosine_similarity(recon, n)?);
    }
    let margin = tape.max_margin(s_pos, &s_neg)?;
    let kl = tape.kl_standard_normal(mu, lv)?;
    let kl = tape.scale(kl, w.kl);
    Ok((tape.sum(&[margin, kl])?, recon))
}

/// Two-level objective for one instance.
///
/// Sentence part: the mean (or sum, see [`LossWeights`]) over the 7 context
/// sentences of margin + KL,
/// where each sentence's own embedding is the positive and the other six
/// are negatives. Task part: margin of the decoded answer against the
/// correct candidate versus the mean of the incorrect ones, plus task KL.
#[allow(clippy::too_many_arguments)]
pub fn two_level_loss_on(
    model: &TwoLevelVae,
    tape: &mut Tape,
    b: BoundTwoLevel,
    context: &[&[f64]],
    answers: &[&[f64]],
    correct: usize,
    w: LossWeights,
    mode: &mut Mode<'_>,
) -> Result<Var, ModelError> {
    if correct >= answers.len() || answers.len() < 2 {
        return Err(ModelError::Answers {
            n: answers.len(),
            correct,
        });
    }
    let (sent, (mu_t, lv_t, answer)) = model.forward_on(tape, b, context, mode)?;
    let sb = b.sentence;
    let idx: Vec<usize> = (0..CONTEXT_LEN).collect();
    let mut per_sentence = Vec::with_capacity(CONTEXT_LEN);
    for (i, _pos, negs) in make_onthefly_triples(&idx)? {
        let (x, mu, lv, z) = sent[i];
        let recon = model.sentence.decode(tape, sb, z)?;
        let s_pos = tape.cosine_similarity(recon, x)?;
        let mut s_neg = Vec::with_capacity(negs.len());
        for k in negs {
            s_neg.push(tape.cosine_similarity(recon, sent[k].0)?);
        }
        let margin = tape.max_margin(s_pos, &s_neg)?;
        let kl = tape.kl_standard_normal(mu, lv)?;
        let kl = tape.scale(kl, w.kl);
        per_sentence.push(tape.sum(&[margin, kl])?);
    }
    let sentence_total = tape.sum(&per_sentence)?;
    let sentence_term = if w.sentence_mean {
        tape.scale(sentence_total, 1.0 / CONTEXT_LEN as f64)
    } else {
        sentence_total
    };

    let ans: Vec<Var> = answers
        .iter()
        .map(|a| grid(tape, a))
        .collect::<Result<_, _>>()?;
    let s_pos = tape.cosine_similarity(answer, ans[correct])?;
    let mut s_neg = Vec::with_capacity(ans.len() - 1);
    for (j, &a) in ans.iter().enumerate() {
        if j != correct {
            s_neg.push(tape.cosine_similarity(answer, a)?);
        }
    }
    let task_margin = tape.max_margin(s_pos, &s_neg)?;
    let task_kl = tape.kl_standard_normal(mu_t, lv_t)?;
    let task_kl = tape.scale(task_kl, w.kl);
    Ok(tape.sum(&[sentence_term, task_margin, task_kl])?)
}

/// Untracked sentence loss; eval mode uses the mean latent.
pub fn sentence_loss(
    model: &SentenceVae,
    input: &[f64],
    positive: &[f64],
    negatives: &[&[f64]],
    w: LossWeights,
    mode: &mut Mode<'_>,
) -> Result<f64, ModelError> {
    let mut tape = Tape::new();
    let b = model.bind_frozen(&mut tape);
    let (loss, _) = sentence_loss_on(model, &mut tape, b, input, positive, negatives, w, mode)?;
    Ok(tape.scalar(loss))
}

/// Untracked two-level loss.
pub fn two_level_loss(
    model: &TwoLevelVae,
    context: &[&[f64]],
    answers: &[&[f64]],
    correct: usize,
    w: LossWeights,
    mode: &mut Mode<'_>,
) -> Result<f64, ModelError> {
    let mut tape = Tape::new();
    let b = model.bind_frozen(&mut tape);
    let loss = two_level_loss_on(model, &mut tape, b, context, answers, correct, w, mode)?;
    Ok(tape.scalar(loss))
}

/// Add the gradients of `params` after `backward` into `acc` (same order).
/// Parameters the loss did not reach contribute nothing.
pub fn accumulate_grads(tape: &Tape, params: &[Var], acc: &mut [Vec<f64>]) {
    for (&v, a) in params.iter().zip(acc.iter_mut()) {
        if let Some(g) = tape.grad(v) {
            a.iter_mut().zip(g).for_each(|(a, g)| *a += g);
        }
    }
}
