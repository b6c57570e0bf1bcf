use std::collections::{BTreeMap, HashSet};
use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::blm::LexType;
use crate::corpus::Split;
use crate::embed::EmbeddingStore;
use crate::models::{read_checkpoint, write_checkpoint, Model};
use crate::util::{write_json, write_jsonl};

use super::data::{load_blm, load_corpus, ProbeDataset};
use super::eval::{evaluate, latent_ranges, latent_traversal, ErrorAnalysis, TraversalStep};
use super::project::project_latents_2d;
use super::report::{
    emit_report, mean_std, Metrics, PairResult, ProjectionArtifact, Report, RunF1,
};
use super::train::{train, EpochLog};
use super::{io_err, ExperimentError, RunConfig, TaskKind, METRICS_SCHEMA_VERSION};

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct TrainedRun {
    pub lex_train: Option<LexType>,
    pub seed: u64,
    pub final_path: PathBuf,
    /// Auxiliary: highest dev accuracy. Reported metrics use the final model.
    pub best_path: PathBuf,
    pub best_epoch: usize,
    pub log: Vec<EpochLog>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct PipelineOutput {
    pub runs: Vec<TrainedRun>,
    pub report: Report,
    pub files: Vec<PathBuf>,
}

fn run_stem(lex: Option<LexType>, seed: u64) -> String {
    match lex {
        Some(l) => format!("lex{l}_seed{seed}"),
        None => format!("seed{seed}"),
    }
}

pub fn checkpoint_path(out: &Path, lex: Option<LexType>, seed: u64, which: &str) -> PathBuf {
    out.join("checkpoints")
        .join(format!("{}.{which}.ckpt", run_stem(lex, seed)))
}

/// Dataset named by `cfg.data` with embeddings from `cfg.embeddings`.
pub fn load_dataset(cfg: &RunConfig) -> Result<ProbeDataset, ExperimentError> {
    let store = EmbeddingStore::read(&cfg.embeddings)?;
    let ds = match cfg.task {
        TaskKind::Sentence => load_corpus(&cfg.data, &store, cfg.layout)?,
        _ => load_blm(&cfg.data, &store, cfg.layout)?,
    };
    if ds.task != cfg.task {
        return Err(ExperimentError::Config(format!(
            "dataset in {} holds {} instances but the task is {}",
            cfg.data.display(),
            ds.task,
            cfg.task
        )));
    }
    Ok(ds)
}

/// Train every (lexical type, seed) run; checkpoints and epoch logs go under `out`.
pub fn train_runs(
    cfg: &RunConfig,
    ds: &ProbeDataset,
    out: &Path,
) -> Result<Vec<TrainedRun>, ExperimentError> {
    cfg.validate()?;
    let echo = serde_json::to_value(cfg).expect("config serializes");
    let mut runs = Vec::new();
    for lex in cfg.train_groups() {
        let train_idx = ds.select(Split::Train, lex);
        let dev_idx = ds.select(Split::Dev, lex);
        for &seed in &cfg.seeds {
            log::info!(
                "training {} run {} on {} instances",
                cfg.task,
                run_stem(lex, seed),
                train_idx.len()
            );
            let outcome = train(ds, &train_idx, &dev_idx, cfg, seed)?;
            let final_path = checkpoint_path(out, lex, seed, "final");
            let best_path = checkpoint_path(out, lex, seed, "best");
            write_checkpoint(&final_path, &outcome.model, cfg.preset, seed, echo.clone())?;
            write_checkpoint(
                &best_path,
                &outcome.best_model,
                cfg.preset,
                seed,
                echo.clone(),
            )?;
            let log_path = out
                .join("logs")
                .join(format!("{}.jsonl", run_stem(lex, seed)));
            write_jsonl(&log_path, &outcome.log).map_err(io_err(&log_path))?;
            runs.push(TrainedRun {
                lex_train: lex,
                seed,
                final_path,
                best_path,
                best_epoch: outcome.best_epoch,
                log: outcome.log,
            });
        }
    }
    Ok(runs)
}

fn load_model(path: &Path) -> Result<Model, ExperimentError> {
    Ok(read_checkpoint(path)?.model)
}

/// Metrics of the final checkpoints under `out` for every train/test pairing.
pub fn evaluate_checkpoints(
    cfg: &RunConfig,
    ds: &ProbeDataset,
    out: &Path,
) -> Result<Report, ExperimentError> {
    cfg.validate()?;
    let mut results = Vec::new();
    let mut errors: Vec<(String, ErrorAnalysis)> = Vec::new();
    for lex_a in cfg.train_groups() {
        let models = cfg
            .seeds
            .iter()
            .map(|&s| load_model(&checkpoint_path(out, lex_a, s, "final")))
            .collect::<Result<Vec<_>, _>>()?;
        for lex_b in cfg.test_groups() {
            let test_idx = ds.select(Split::Test, lex_b);
            let mut runs = Vec::with_capacity(models.len());
            let mut first = None;
            for (model, &seed) in models.iter().zip(&cfg.seeds) {
                let ev = evaluate(model, ds, &test_idx, cfg.workers)?;
                runs.push(RunF1 { seed, f1: ev.f1 });
                first.get_or_insert(ev);
            }
            let first = first.expect("at least one seed");
            let (f1_mean, f1_std) = mean_std(&runs.iter().map(|r| r.f1).collect::<Vec<_>>());
            let pair = PairResult {
                task: cfg.task.to_string(),
                lex_train: lex_a,
                lex_test: lex_b,
                runs,
                f1_mean,
                f1_std,
                confusion: first.confusion,
                errors: first.errors.counts.clone(),
            };
            log::info!("{} {}: F1 {f1_mean:.4} ({f1_std:.4})", cfg.task, pair.tag());
            errors.push((pair.tag(), first.errors));
            results.push(pair);
        }
    }
    let metrics = Metrics {
        schema_version: METRICS_SCHEMA_VERSION,
        task: cfg.task.to_string(),
        model: cfg.preset.to_string(),
        results,
    };
    Ok(Report {
        metrics: Some(metrics),
        errors,
        ..Report::default()
    })
}

fn first_run(cfg: &RunConfig) -> (Option<LexType>, u64) {
    (cfg.train_groups()[0], cfg.seeds[0])
}

/// Latent traversal of the first run's final sentence model.
pub fn traversal_for(
    cfg: &RunConfig,
    ds: &ProbeDataset,
    out: &Path,
) -> Result<Vec<TraversalStep>, ExperimentError> {
    let (lex, seed) = first_run(cfg);
    let Model::Sentence(model) = load_model(&checkpoint_path(out, lex, seed, "final"))? else {
        return Err(ExperimentError::Config(
            "latent traversal needs a sentence-task model".into(),
        ));
    };
    let ranges = latent_ranges(&model, ds, &ds.select(Split::Train, lex))?;
    latent_traversal(
        &model,
        ds,
        &ds.select(Split::Test, lex),
        &ranges,
        cfg.traversal_steps,
        cfg.workers,
    )
}

/// Sentence-level mean latents of the distinct input sentences of the test
/// split, projected to 2-D and labelled by pattern or structure.
pub fn projection_for(
    cfg: &RunConfig,
    ds: &ProbeDataset,
    out: &Path,
) -> Result<ProjectionArtifact, ExperimentError> {
    let (lex, seed) = first_run(cfg);
    let model = load_model(&checkpoint_path(out, lex, seed, "final"))?;
    let sentence = model.sentence();
    let mut seen = HashSet::new();
    let mut grids = Vec::new();
    for i in ds.select(Split::Test, lex) {
        for &g in &ds.instances[i].inputs {
            if seen.insert(g) {
                grids.push(g);
            }
        }
    }
    let latents = grids
        .iter()
        .map(|&g| Ok(sentence.encode_sentence(ds.grid(g))?.mu))
        .collect::<Result<Vec<_>, ExperimentError>>()?;
    let labels: Vec<String> = grids.iter().map(|&g| ds.grid_labels[g].clone()).collect();
    let projection = project_latents_2d(&latents, &labels)?;
    Ok(ProjectionArtifact {
        ids: grids.iter().map(|&g| ds.grid_ids[g].clone()).collect(),
        latents,
        projection,
    })
}

#[derive(Serialize)]
struct RunManifest<'a> {
    kind: &'static str,
    config: &'a RunConfig,
    parameters: usize,
    runs: Vec<BTreeMap<&'static str, serde_json::Value>>,
}

/// Summary of a training invocation: effective config and per-run outcomes.
pub fn write_run_manifest(
    cfg: &RunConfig,
    runs: &[TrainedRun],
    out: &Path,
) -> Result<(), ExperimentError> {
    let parameters = runs
        .first()
        .map(|r| load_model(&r.final_path))
        .transpose()?
        .map_or(0, |m| m.param_count());
    let manifest = RunManifest {
        kind: "train",
        config: cfg,
        parameters,
        runs: runs
            .iter()
            .map(|r| {
                BTreeMap::from([
                    (
                        "lex_train",
                        serde_json::to_value(r.lex_train).expect("serializes"),
                    ),
                    ("seed", r.seed.into()),
                    ("best_epoch", r.best_epoch.into()),
                    ("final_loss", r.log.last().map(|l| l.train_loss).into()),
                ])
            })
            .collect(),
    };
    let p = out.join("run_manifest.json");
    write_json(&p, &manifest).map_err(io_err(&p))
}

/// Train, evaluate, traverse (sentence task) and project; write everything under `out`.
pub fn run_pipeline(
    cfg: &RunConfig,
    ds: &ProbeDataset,
    out: &Path,
) -> Result<PipelineOutput, ExperimentError> {
    let runs = train_runs(cfg, ds, out)?;
    write_run_manifest(cfg, &runs, out)?;
    let mut report = evaluate_checkpoints(cfg, ds, out)?;
    if cfg.task == TaskKind::Sentence {
        report.traversal = traversal_for(cfg, ds, out)?;
    }
    report.projection = Some(projection_for(cfg, ds, out)?);
    let files = emit_report(&report, out)?;
    Ok(PipelineOutput {
        runs,
        report,
        files,
    })
}
