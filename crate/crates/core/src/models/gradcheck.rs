//! Finite-difference checks of every differentiable op and of both full
//! losses, as run by the `gradcheck` command.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::Serialize;

use crate::nn::{grad_check, GradCheckOptions, NnError, Tape, Tensor, Var};
use crate::util::derive_seed;

use super::loss::{sentence_loss_on, two_level_loss_on, LossWeights};
use super::vae::{ArchConfig, Preset, SentenceVae, TwoLevelVae};
use super::{Mode, ModelError};

pub const OP_TOLERANCE: f64 = 1e-4;
pub const LOSS_TOLERANCE: f64 = 1e-3;

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct GradCheckCase {
    pub name: String,
    pub instances: usize,
    /// Largest relative error over all instances.
    pub max_rel_error: f64,
    pub tolerance: f64,
}

impl GradCheckCase {
    pub fn passed(&self) -> bool {
        self.max_rel_error < self.tolerance
    }
}

fn randn(rng: &mut impl Rng, shape: &[usize]) -> Tensor {
    let n = shape.iter().product();
    Tensor::new(
        shape.to_vec(),
        (0..n).map(|_| rng.sample(StandardNormal)).collect(),
    )
    .expect("consistent shape")
}

/// Weighted sum of every entry of `y` with fixed random weights.
fn reduce(t: &mut Tape, y: Var, weights: &Tensor) -> Result<Var, NnError> {
    let w = t.constant(weights.clone());
    let s = t.linear(y, w, None)?;
    t.reshape(s, &[])
}

fn weights_for(rng: &mut impl Rng, n: usize) -> Tensor {
    randn(rng, &[1, n])
}

type OpCase = fn(&mut ChaCha8Rng) -> Result<f64, NnError>;

fn op_cases() -> Vec<(&'static str, OpCase)> {
    vec![
        ("conv2d", |rng| {
            let stride = (rng.random_range(1..3), rng.random_range(1..3));
            let inputs = [
                randn(rng, &[2, 7, 6]),
                randn(rng, &[3, 2, 3, 2]),
                randn(rng, &[3]),
            ];
            let out = 3 * ((7 - 3) / stride.0 + 1) * ((6 - 2) / stride.1 + 1);
            let w = weights_for(rng, out);
            grad_check(
                |t, v| {
                    let y = t.conv2d(v[0], v[1], Some(v[2]), stride)?;
                    reduce(t, y, &w)
                },
                &inputs,
                &GradCheckOptions::default(),
            )
        }),
        ("transposed_conv2d", |rng| {
            let stride = (rng.random_range(1..3), rng.random_range(1..3));
            let inputs = [
                randn(rng, &[3, 4, 3]),
                randn(rng, &[3, 2, 3, 2]),
                randn(rng, &[2]),
            ];
            let out = 2 * (3 * stride.0 + 3) * (2 * stride.1 + 2);
            let w = weights_for(rng, out);
            grad_check(
                |t, v| {
                    let y = t.transposed_conv2d(v[0], v[1], Some(v[2]), stride, None)?;
                    reduce(t, y, &w)
                },
                &inputs,
                &GradCheckOptions::default(),
            )
        }),
        ("linear", |rng| {
            let inputs = [randn(rng, &[6]), randn(rng, &[4, 6]), randn(rng, &[4])];
            let w = weights_for(rng, 4);
            grad_check(
                |t, v| {
                    let y = t.linear(v[0], v[1], Some(v[2]))?;
                    reduce(t, y, &w)
                },
                &inputs,
                &GradCheckOptions::default(),
            )
        }),
        ("tanh", |rng| {
            let w = weights_for(rng, 8);
            grad_check(
                |t, v| {
                    let y = t.tanh(v[0]);
                    reduce(t, y, &w)
                },
                &[randn(rng, &[8])],
                &GradCheckOptions::default(),
            )
        }),
        ("reshape_slice_stack", |rng| {
            let w = weights_for(rng, 6);
            grad_check(
                |t, v| {
                    let a = t.reshape(v[0], &[12])?;
                    let a = t.slice(a, 2, 3)?;
                    let b = t.slice(v[1], 0, 3)?;
                    let s = t.stack(&[a, b])?;
                    reduce(t, s, &w)
                },
                &[randn(rng, &[3, 4]), randn(rng, &[5])],
                &GradCheckOptions::default(),
            )
        }),
        ("reparameterize", |rng| {
            let eps: Vec<f64> = (0..5).map(|_| rng.sample(StandardNormal)).collect();
            let w = weights_for(rng, 5);
            grad_check(
                |t, v| {
                    let z = t.reparameterize_with_noise(v[0], v[1], eps.clone())?;
                    reduce(t, z, &w)
                },
                &[randn(rng, &[5]), randn(rng, &[5])],
                &GradCheckOptions::default(),
            )
        }),
        ("cosine_similarity", |rng| {
            grad_check(
                |t, v| t.cosine_similarity(v[0], v[1]),
                &[randn(rng, &[9]), randn(rng, &[9])],
                &GradCheckOptions::default(),
            )
        }),
        ("max_margin", |rng| {
            // scores kept inside the hinge's active region
            let pos = Tensor::scalar(rng.random_range(-0.5..0.5));
            let negs: Vec<Tensor> = (0..4)
                .map(|_| Tensor::scalar(rng.random_range(-0.5..0.5)))
                .collect();
            let mut inputs = vec![pos];
            inputs.extend(negs);
            grad_check(
                |t, v| t.max_margin(v[0], &v[1..]),
                &inputs,
                &GradCheckOptions::default(),
            )
        }),
        ("kl_standard_normal", |rng| {
            grad_check(
                |t, v| t.kl_standard_normal(v[0], v[1]),
                &[randn(rng, &[5]), randn(rng, &[5])],
                &GradCheckOptions::default(),
            )
        }),
        ("sum_scale", |rng| {
            let k: f64 = rng.random_range(-2.0..2.0);
            grad_check(
                |t, v| {
                    let a = t.scale(v[0], k);
                    let c = t.cosine_similarity(v[1], v[2])?;
                    t.sum(&[a, c, v[0]])
                },
                &[randn(rng, &[]), randn(rng, &[4]), randn(rng, &[4])],
                &GradCheckOptions::default(),
            )
        }),
    ]
}

fn grids(rng: &mut impl Rng, n: usize) -> Vec<Vec<f64>> {
    (0..n)
        .map(|_| (0..768).map(|_| rng.sample(StandardNormal)).collect())
        .collect()
}

fn as_nn(e: ModelError) -> NnError {
    match e {
        ModelError::Nn(e) => e,
        other => NnError::Degenerate(other.to_string()),
    }
}

fn sentence_case(seed: u64) -> Result<f64, ModelError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let model = SentenceVae::new(ArchConfig::preset(Preset::Default), &mut rng)?;
    let g = grids(&mut rng, 9);
    let inputs: Vec<Tensor> = model.params().into_iter().cloned().collect();
    let noise_seed = rng.random();
    let opts = GradCheckOptions {
        h: 1e-5,
        max_entries_per_input: Some(4),
        seed,
    };
    Ok(grad_check(
        |tape, vars| {
            let negs: Vec<&[f64]> = g[2..].iter().map(Vec::as_slice).collect();
            let mut noise = ChaCha8Rng::seed_from_u64(noise_seed);
            let b = SentenceVae::bound_from(vars);
            let (loss, _) = sentence_loss_on(
                &model,
                tape,
                b,
                &g[0],
                &g[1],
                &negs,
                LossWeights::default(),
                &mut Mode::Train(&mut noise),
            )
            .map_err(as_nn)?;
            Ok(loss)
        },
        &inputs,
        &opts,
    )?)
}

fn two_level_case(seed: u64) -> Result<f64, ModelError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let model = TwoLevelVae::new(ArchConfig::preset(Preset::Default), &mut rng)?;
    let g = grids(&mut rng, 7 + 6);
    let correct = rng.random_range(0..6);
    let inputs: Vec<Tensor> = model.params().into_iter().cloned().collect();
    let noise_seed = rng.random();
    let opts = GradCheckOptions {
        h: 1e-5,
        max_entries_per_input: Some(2),
        seed,
    };
    Ok(grad_check(
        |tape, vars| {
            let ctx: Vec<&[f64]> = g[..7].iter().map(Vec::as_slice).collect();
            let answers: Vec<&[f64]> = g[7..].iter().map(Vec::as_slice).collect();
            let mut noise = ChaCha8Rng::seed_from_u64(noise_seed);
            let b = TwoLevelVae::bound_from(vars);
            two_level_loss_on(
                &model,
                tape,
                b,
                &ctx,
                &answers,
                correct,
                LossWeights::default(),
                &mut Mode::Train(&mut noise),
            )
            .map_err(as_nn)
        },
        &inputs,
        &opts,
    )?)
}

/// Check every op and both losses on `instances` random instances each.
pub fn gradcheck_suite(instances: usize, seed: u64) -> Result<Vec<GradCheckCase>, ModelError> {
    let mut out = Vec::new();
    for (name, case) in op_cases() {
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, &format!("gradcheck/{name}")));
        let mut worst: f64 = 0.0;
        for _ in 0..instances {
            worst = worst.max(case(&mut rng)?);
        }
        out.push(GradCheckCase {
            name: name.to_string(),
            instances,
            max_rel_error: worst,
            tolerance: OP_TOLERANCE,
        });
    }
    for (name, case) in [
        (
            "sentence_loss",
            sentence_case as fn(u64) -> Result<f64, ModelError>,
        ),
        ("two_level_loss", two_level_case),
    ] {
        let mut worst: f64 = 0.0;
        for k in 0..instances {
            worst = worst.max(case(derive_seed(seed, &format!("gradcheck/{name}/{k}")))?);
        }
        out.push(GradCheckCase {
            name: name.to_string(),
            instances,
            max_rel_error: worst,
            tolerance: LOSS_TOLERANCE,
        });
    }
    Ok(out)
}
