//! Command-line front end. Every command resolves its settings as
//! flag > config file section > built-in default and echoes the result
//! into the manifest it writes.

use std::ffi::OsString;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use chunkprobe::blm::{
    generate_blm, parse_alternation_file, unique_sentences, write_blm, BlmConfig, BlmManifest,
    BlmSeeds, BlmTask, LexType, INSTANCES_FILE,
};
use chunkprobe::corpus::{
    generate_corpus, parse_seed_file, read_dataset, write_dataset, CorpusConfig, CorpusManifest,
    Language,
};
use chunkprobe::embed::synthetic::{SyntheticCoder, DEFAULT_NOISE, DEFAULT_SUBSPACE};
use chunkprobe::embed::{fetch_remote, RetryPolicy};
use chunkprobe::embed::{EmbeddingStore, Layout};
use chunkprobe::experiment::{
    blm_synthetic_store, corpus_synthetic_store, emit_report, evaluate_checkpoints, load_dataset,
    projection_for, run_pipeline, train_runs, traversal_for, write_run_manifest, Report, RunConfig,
    TaskKind,
};
use chunkprobe::models::{gradcheck_suite, Preset};
use chunkprobe::util::write_json;

#[derive(Parser)]
#[command(
    name = "chunkprobe",
    version,
    about = "Probe chunk structure in sentence embeddings with VAE models"
)]
struct Cli {
    #[command(flatten)]
    global: Global,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Global {
    /// Random seed (base seed of the runs for train/eval)
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// TOML or JSON config file with [corpus], [blm], [embed], [run] or [gradcheck] sections
    #[arg(long, global = true, value_name = "FILE")]
    config: Option<PathBuf>,
    /// Output file or directory
    #[arg(long, global = true, value_name = "PATH")]
    out: Option<PathBuf>,
    /// Only log warnings and errors
    #[arg(long, short, global = true)]
    quiet: bool,
}

#[derive(Subcommand)]
enum Command {
    /// Generate the chunk-pattern sentence corpus and its triples
    GenCorpus(GenCorpusArgs),
    /// Generate a Blackbird Language Matrices dataset
    GenBlm(GenBlmArgs),
    /// Build an embedding store from synthetic codes or a JSONL file
    EmbedImport(EmbedImportArgs),
    /// Build an embedding store from a remote /embed service
    EmbedFetch(EmbedFetchArgs),
    /// Train sentence or two-level models
    Train(TrainArgs),
    /// Evaluate trained checkpoints: F1, confusion matrices, error analysis
    Eval(RunArgs),
    /// Latent traversal of a trained sentence model
    Traverse(RunArgs),
    /// 2-D projection of sentence latents
    Project(RunArgs),
    /// Evaluate, traverse and project, then write every report file
    Report(RunArgs),
    /// Finite-difference gradient checks of all ops and both losses
    Gradcheck(GradcheckArgs),
}

#[derive(Args)]
struct GenCorpusArgs {
    /// Seed-lexicon TSV
    #[arg(long, value_name = "FILE")]
    seed_file: Option<PathBuf>,
    /// Seed file language [en, fr]
    #[arg(long)]
    language: Option<Language>,
    /// Approximate number of triples
    #[arg(long)]
    target: Option<usize>,
    /// Negatives per triple
    #[arg(long)]
    n_negs: Option<usize>,
}

#[derive(Args)]
struct GenBlmArgs {
    /// Task [agreement, alternation_g1, alternation_g2]
    #[arg(long)]
    task: Option<BlmTask>,
    /// Seed-lexicon TSV (agreement) or alternation TSV
    #[arg(long, value_name = "FILE")]
    seed_file: Option<PathBuf>,
    /// Seed file language for agreement [en, fr]
    #[arg(long)]
    language: Option<Language>,
    /// Lexical types to generate, comma separated [I, II, III]
    #[arg(long, value_delimiter = ',')]
    lex_types: Option<Vec<LexType>>,
    /// Instances generated per lexical type before splitting
    #[arg(long)]
    pool: Option<usize>,
    /// Training instances per lexical type (dev included)
    #[arg(long)]
    train_size: Option<usize>,
}

#[derive(Args)]
struct EmbedImportArgs {
    /// Dataset directory (corpus or BLM) whose sentences are covered
    #[arg(long, value_name = "DIR")]
    data: Option<PathBuf>,
    /// Coded synthetic embeddings instead of an input file
    #[arg(long)]
    synthetic: bool,
    /// JSONL input with one {"sentence_id", "vector"} object per line
    #[arg(long, value_name = "FILE", conflicts_with = "synthetic")]
    from: Option<PathBuf>,
    /// Model name recorded in the store
    #[arg(long)]
    model: Option<String>,
    /// Synthetic code subspace dimension
    #[arg(long)]
    subspace: Option<usize>,
    /// Synthetic per-sentence noise standard deviation
    #[arg(long)]
    noise: Option<f64>,
}

#[derive(Args)]
struct EmbedFetchArgs {
    /// Dataset directory (corpus or BLM) whose sentences are embedded
    #[arg(long, value_name = "DIR")]
    data: Option<PathBuf>,
    /// Encoder model name sent to the service
    #[arg(long)]
    model: Option<String>,
    /// Service base URL
    #[arg(long, env = "EMBED_ENDPOINT")]
    endpoint: Option<String>,
    /// Sentences per request
    #[arg(long)]
    batch: Option<usize>,
}

#[derive(Args, Clone)]
struct RunArgs {
    /// Task [sentence, blm_agreement, blm_alt_g1, blm_alt_g2]
    #[arg(long)]
    task: Option<TaskKind>,
    /// Dataset directory
    #[arg(long, value_name = "DIR")]
    data: Option<PathBuf>,
    /// Embedding store file
    #[arg(long, value_name = "FILE")]
    embeddings: Option<PathBuf>,
    /// Architecture preset [default, paper-240, linear]
    #[arg(long)]
    preset: Option<Preset>,
    /// Fill order of the 32x24 grid [rowmajor, colmajor]
    #[arg(long, alias = "reshape")]
    layout: Option<Layout>,
    /// Lexical types trained on, comma separated
    #[arg(long, value_delimiter = ',')]
    lex_train: Option<Vec<LexType>>,
    /// Lexical types tested on, comma separated
    #[arg(long, value_delimiter = ',')]
    lex_test: Option<Vec<LexType>>,
    /// Number of runs; seeds are --seed, --seed+1, ...
    #[arg(long)]
    runs: Option<usize>,
    /// Evaluation threads
    #[arg(long)]
    workers: Option<usize>,
    /// Traversal values per latent unit
    #[arg(long)]
    steps: Option<usize>,
}

#[derive(Args)]
struct TrainArgs {
    #[command(flatten)]
    run: RunArgs,
    /// Training epochs
    #[arg(long)]
    epochs: Option<usize>,
    /// Batch size
    #[arg(long)]
    batch: Option<usize>,
    /// Adam learning rate
    #[arg(long)]
    lr: Option<f64>,
    /// Weight of the KL terms
    #[arg(long)]
    kl_weight: Option<f64>,
    /// Sum the two-level sentence terms instead of averaging them
    #[arg(long)]
    sentence_sum: bool,
    /// Also evaluate, traverse and project after training
    #[arg(long)]
    report: bool,
}

#[derive(Args)]
struct GradcheckArgs {
    /// Random instances per op and per loss
    #[arg(long)]
    instances: Option<usize>,
}

/// Config sections; absent sections fall back to defaults.
#[derive(Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct ConfigFile {
    corpus: Option<serde_json::Value>,
    blm: Option<serde_json::Value>,
    embed: Option<serde_json::Value>,
    run: Option<serde_json::Value>,
    gradcheck: Option<serde_json::Value>,
}

impl ConfigFile {
    fn load(path: Option<&Path>) -> Result<Self> {
        let Some(path) = path else {
            return Ok(Self::default());
        };
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("reading config {}", path.display()))?;
        let parsed = if path.extension().is_some_and(|e| e == "json") {
            serde_json::from_str(&text)?
        } else {
            toml::from_str(&text)?
        };
        Ok(parsed)
    }

    fn section<T: DeserializeOwned + Default>(
        value: &Option<serde_json::Value>,
        name: &str,
    ) -> Result<T> {
        match value {
            None => Ok(T::default()),
            Some(v) => serde_json::from_value(v.clone())
                .with_context(|| format!("config section [{name}]")),
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct CorpusSection {
    seed_file: Option<PathBuf>,
    language: Language,
    #[serde(flatten)]
    corpus: CorpusConfig,
}

impl Default for CorpusSection {
    fn default() -> Self {
        Self {
            seed_file: None,
            language: Language::En,
            corpus: CorpusConfig::default(),
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default)]
struct BlmSection {
    seed_file: Option<PathBuf>,
    language: Language,
    #[serde(flatten)]
    blm: BlmConfig,
}

impl Default for BlmSection {
    fn default() -> Self {
        Self {
            seed_file: None,
            language: Language::En,
            blm: BlmConfig::default(),
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct EmbedSection {
    data: PathBuf,
    synthetic: bool,
    from: Option<PathBuf>,
    model: Option<String>,
    subspace: usize,
    noise: f64,
    seed: u64,
    endpoint: Option<String>,
    batch: usize,
}

impl Default for EmbedSection {
    fn default() -> Self {
        Self {
            data: PathBuf::from("data"),
            synthetic: false,
            from: None,
            model: None,
            subspace: DEFAULT_SUBSPACE,
            noise: DEFAULT_NOISE,
            seed: 0,
            endpoint: None,
            batch: RetryPolicy::default().batch_size,
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct GradcheckSection {
    instances: usize,
    seed: u64,
}

impl Default for GradcheckSection {
    fn default() -> Self {
        Self {
            instances: 10,
            seed: 0,
        }
    }
}

/// Parse `argv` and run; returns the process exit code.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    let level = if cli.global.quiet { "warn" } else { "info" };
    let _ = env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level))
        .format_timestamp(None)
        .try_init();
    match dispatch(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            1
        }
    }
}

fn dispatch(cli: Cli) -> Result<i32> {
    let file = ConfigFile::load(cli.global.config.as_deref())?;
    let g = &cli.global;
    match cli.command {
        Command::GenCorpus(a) => gen_corpus(g, &file, a),
        Command::GenBlm(a) => gen_blm(g, &file, a),
        Command::EmbedImport(a) => embed_import(g, &file, a),
        Command::EmbedFetch(a) => embed_fetch(g, &file, a),
        Command::Train(a) => train(g, &file, a),
        Command::Eval(a) => analyse(g, &file, a, Analysis::Eval),
        Command::Traverse(a) => analyse(g, &file, a, Analysis::Traverse),
        Command::Project(a) => analyse(g, &file, a, Analysis::Project),
        Command::Report(a) => analyse(g, &file, a, Analysis::Report),
        Command::Gradcheck(a) => gradcheck(g, &file, a),
    }
}

fn gen_corpus(g: &Global, file: &ConfigFile, a: GenCorpusArgs) -> Result<i32> {
    let mut cfg: CorpusSection = ConfigFile::section(&file.corpus, "corpus")?;
    cfg.seed_file = a.seed_file.or(cfg.seed_file);
    cfg.language = a.language.unwrap_or(cfg.language);
    cfg.corpus.target = a.target.unwrap_or(cfg.corpus.target);
    cfg.corpus.n_negs = a.n_negs.unwrap_or(cfg.corpus.n_negs);
    cfg.corpus.seed = g.seed.unwrap_or(cfg.corpus.seed);
    let Some(seed_file) = &cfg.seed_file else {
        bail!("gen-corpus needs --seed-file")
    };
    let out = g
        .out
        .clone()
        .unwrap_or_else(|| PathBuf::from("data/corpus"));

    let seeds = parse_seed_file(seed_file, cfg.language)?;
    let ds = generate_corpus(&seeds, &cfg.corpus)?;
    let manifest = CorpusManifest::new(&ds, seeds.len(), &cfg.corpus, serde_json::to_value(&cfg)?);
    write_dataset(&out, &ds, &manifest)?;
    let (tr, dv, te) = ds.triples.sizes();
    log::info!(
        "wrote {} sentences and {tr}:{dv}:{te} triples to {}",
        ds.sentences.len(),
        out.display()
    );
    Ok(0)
}

fn gen_blm(g: &Global, file: &ConfigFile, a: GenBlmArgs) -> Result<i32> {
    let mut cfg: BlmSection = ConfigFile::section(&file.blm, "blm")?;
    cfg.seed_file = a.seed_file.or(cfg.seed_file);
    cfg.language = a.language.unwrap_or(cfg.language);
    cfg.blm.task = a.task.unwrap_or(cfg.blm.task);
    cfg.blm.lex_types = a.lex_types.unwrap_or(cfg.blm.lex_types);
    cfg.blm.pool = a.pool.or(cfg.blm.pool);
    cfg.blm.train_size = a.train_size.unwrap_or(cfg.blm.train_size);
    cfg.blm.seed = g.seed.unwrap_or(cfg.blm.seed);
    let Some(seed_file) = &cfg.seed_file else {
        bail!("gen-blm needs --seed-file")
    };
    let out = g
        .out
        .clone()
        .unwrap_or_else(|| PathBuf::from(format!("data/blm_{}", cfg.blm.task)));

    let (agr, alt);
    let seeds = if cfg.blm.task == BlmTask::Agreement {
        agr = parse_seed_file(seed_file, cfg.language)?;
        BlmSeeds::Agreement(&agr)
    } else {
        alt = parse_alternation_file(seed_file)?;
        BlmSeeds::Alternation(&alt)
    };
    let rows = match seeds {
        BlmSeeds::Agreement(s) => s.len(),
        BlmSeeds::Alternation(s) => s.len(),
    };
    let instances = generate_blm(seeds, &cfg.blm)?;
    let manifest = BlmManifest::new(&instances, rows, &cfg.blm, serde_json::to_value(&cfg)?);
    write_blm(&out, &instances, &manifest)?;
    log::info!(
        "wrote {} {} instances to {}",
        instances.len(),
        cfg.blm.task,
        out.display()
    );
    Ok(0)
}

struct DatasetSentence {
    id: String,
    text: String,
}

fn is_blm_dir(dir: &Path) -> bool {
    dir.join(INSTANCES_FILE).exists()
}

fn dataset_sentences(dir: &Path) -> Result<Vec<DatasetSentence>> {
    Ok(if is_blm_dir(dir) {
        let blm = chunkprobe::blm::read_blm(dir)?;
        unique_sentences(&blm)
            .into_iter()
            .map(|s| DatasetSentence {
                id: s.sentence_id,
                text: s.text,
            })
            .collect()
    } else {
        read_dataset(dir)?
            .sentences
            .into_iter()
            .map(|s| DatasetSentence {
                id: s.sentence_id,
                text: s.text,
            })
            .collect()
    })
}

fn store_path(g: &Global) -> PathBuf {
    g.out
        .clone()
        .unwrap_or_else(|| PathBuf::from("embeddings.sebemb"))
}

#[derive(Deserialize)]
struct ImportRow {
    sentence_id: String,
    vector: Vec<f32>,
}

fn embed_import(g: &Global, file: &ConfigFile, a: EmbedImportArgs) -> Result<i32> {
    let mut cfg: EmbedSection = ConfigFile::section(&file.embed, "embed")?;
    cfg.data = a.data.unwrap_or(cfg.data);
    cfg.synthetic |= a.synthetic;
    cfg.from = a.from.or(cfg.from);
    cfg.model = a.model.or(cfg.model);
    cfg.subspace = a.subspace.unwrap_or(cfg.subspace);
    cfg.noise = a.noise.unwrap_or(cfg.noise);
    cfg.seed = g.seed.unwrap_or(cfg.seed);
    let out = store_path(g);

    let store = match (&cfg.from, cfg.synthetic) {
        (None, true) => {
            if cfg.subspace == 0 || cfg.subspace > chunkprobe::embed::EMBEDDING_DIM {
                bail!("subspace must be in 1..=768");
            }
            let coder = SyntheticCoder::new(cfg.seed, cfg.subspace, cfg.noise);
            if is_blm_dir(&cfg.data) {
                blm_synthetic_store(&chunkprobe::blm::read_blm(&cfg.data)?, &coder)?
            } else {
                corpus_synthetic_store(&read_dataset(&cfg.data)?, &coder)?
            }
        }
        (Some(from), false) => {
            let rows: Vec<ImportRow> = chunkprobe::util::read_jsonl(from)
                .with_context(|| format!("reading {}", from.display()))?;
            let mut store =
                EmbeddingStore::new(cfg.model.clone().unwrap_or_else(|| "imported".into()));
            for r in &rows {
                store.push(r.sentence_id.clone(), &r.vector)?;
            }
            if cfg.data.exists() {
                let ids = dataset_sentences(&cfg.data)?;
                store.check_complete(ids.iter().map(|s| s.id.as_str()))?;
            }
            store
        }
        (Some(_), true) => bail!("--synthetic and --from are exclusive"),
        (None, false) => bail!("embed-import needs --synthetic or --from FILE"),
    };
    store.write(&out)?;
    write_json(&out.with_extension("config.json"), &cfg)?;
    log::info!(
        "wrote {} embeddings ({}) to {}",
        store.len(),
        store.model_name(),
        out.display()
    );
    Ok(0)
}

fn embed_fetch(g: &Global, file: &ConfigFile, a: EmbedFetchArgs) -> Result<i32> {
    let mut cfg: EmbedSection = ConfigFile::section(&file.embed, "embed")?;
    cfg.data = a.data.unwrap_or(cfg.data);
    cfg.model = a.model.or(cfg.model);
    cfg.endpoint = a.endpoint.or(cfg.endpoint);
    cfg.batch = a.batch.unwrap_or(cfg.batch);
    let Some(endpoint) = cfg.endpoint.clone() else {
        bail!("no endpoint: set EMBED_ENDPOINT or pass --endpoint")
    };
    let Some(model) = cfg.model.clone() else {
        bail!("embed-fetch needs --model")
    };
    if cfg.batch == 0 {
        bail!("batch must be positive");
    }
    let out = store_path(g);

    let sentences = dataset_sentences(&cfg.data)?;
    let texts: Vec<String> = sentences.iter().map(|s| s.text.clone()).collect();
    let policy = RetryPolicy {
        batch_size: cfg.batch,
        ..RetryPolicy::default()
    };
    let vectors = fetch_remote(&endpoint, &texts, &model, &policy)?;
    let mut store = EmbeddingStore::new(model);
    for (s, v) in sentences.iter().zip(&vectors) {
        store.push(s.id.clone(), v)?;
    }
    store.write(&out)?;
    write_json(&out.with_extension("config.json"), &cfg)?;
    log::info!("wrote {} embeddings to {}", store.len(), out.display());
    Ok(0)
}

fn run_config(g: &Global, file: &ConfigFile, a: &RunArgs) -> Result<RunConfig> {
    let mut cfg: RunConfig = ConfigFile::section(&file.run, "run")?;
    cfg.task = a.task.unwrap_or(cfg.task);
    cfg.data = a.data.clone().unwrap_or(cfg.data);
    cfg.embeddings = a.embeddings.clone().unwrap_or(cfg.embeddings);
    cfg.preset = a.preset.unwrap_or(cfg.preset);
    cfg.layout = a.layout.unwrap_or(cfg.layout);
    cfg.lex_train = a.lex_train.clone().unwrap_or(cfg.lex_train);
    cfg.lex_test = a.lex_test.clone().unwrap_or(cfg.lex_test);
    cfg.workers = a.workers.unwrap_or(cfg.workers);
    cfg.traversal_steps = a.steps.unwrap_or(cfg.traversal_steps);
    if g.seed.is_some() || a.runs.is_some() {
        let base = g.seed.or(cfg.seeds.first().copied()).unwrap_or(0);
        let runs = a.runs.unwrap_or(cfg.seeds.len().max(1)) as u64;
        cfg.seeds = (base..base + runs).collect();
    }
    Ok(cfg)
}

fn run_dir(g: &Global, cfg: &RunConfig) -> PathBuf {
    g.out
        .clone()
        .unwrap_or_else(|| PathBuf::from("runs").join(cfg.task.as_str()))
}

#[derive(Serialize)]
struct CommandManifest<'a> {
    command: &'a str,
    config: &'a RunConfig,
    files: Vec<String>,
}

fn write_command_manifest(
    out: &Path,
    command: &str,
    cfg: &RunConfig,
    files: &[PathBuf],
) -> Result<()> {
    let files = files
        .iter()
        .map(|p| p.strip_prefix(out).unwrap_or(p).display().to_string())
        .collect();
    let m = CommandManifest {
        command,
        config: cfg,
        files,
    };
    write_json(&out.join(format!("{command}_manifest.json")), &m)?;
    Ok(())
}

fn train(g: &Global, file: &ConfigFile, a: TrainArgs) -> Result<i32> {
    let mut cfg = run_config(g, file, &a.run)?;
    cfg.epochs = a.epochs.unwrap_or(cfg.epochs);
    cfg.batch = a.batch.unwrap_or(cfg.batch);
    cfg.lr = a.lr.unwrap_or(cfg.lr);
    cfg.kl_weight = a.kl_weight.unwrap_or(cfg.kl_weight);
    if a.sentence_sum {
        cfg.sentence_mean = false;
    }
    cfg.validate()?;
    let out = run_dir(g, &cfg);
    let ds = load_dataset(&cfg)?;
    if a.report {
        let res = run_pipeline(&cfg, &ds, &out)?;
        write_command_manifest(&out, "report", &cfg, &res.files)?;
    } else {
        let runs = train_runs(&cfg, &ds, &out)?;
        write_run_manifest(&cfg, &runs, &out)?;
    }
    log::info!(
        "trained {} run(s) into {}",
        cfg.seeds.len() * cfg.train_groups().len(),
        out.display()
    );
    Ok(0)
}

#[derive(Clone, Copy, PartialEq)]
enum Analysis {
    Eval,
    Traverse,
    Project,
    Report,
}

impl Analysis {
    fn name(self) -> &'static str {
        match self {
            Analysis::Eval => "eval",
            Analysis::Traverse => "traverse",
            Analysis::Project => "project",
            Analysis::Report => "report",
        }
    }
}

fn analyse(g: &Global, file: &ConfigFile, a: RunArgs, what: Analysis) -> Result<i32> {
    let cfg = run_config(g, file, &a)?;
    cfg.validate()?;
    let out = run_dir(g, &cfg);
    let ds = load_dataset(&cfg)?;
    let mut report = Report::default();
    if matches!(what, Analysis::Eval | Analysis::Report) {
        report = evaluate_checkpoints(&cfg, &ds, &out)?;
        if let Some(m) = &report.metrics {
            for r in &m.results {
                println!("{}\t{:.4}\t{:.4}", r.tag(), r.f1_mean, r.f1_std);
            }
        }
    }
    if what == Analysis::Traverse || (what == Analysis::Report && cfg.task == TaskKind::Sentence) {
        report.traversal = traversal_for(&cfg, &ds, &out)?;
    }
    if matches!(what, Analysis::Project | Analysis::Report) {
        report.projection = Some(projection_for(&cfg, &ds, &out)?);
    }
    let files = emit_report(&report, &out)?;
    write_command_manifest(&out, what.name(), &cfg, &files)?;
    Ok(0)
}

fn gradcheck(g: &Global, file: &ConfigFile, a: GradcheckArgs) -> Result<i32> {
    let mut cfg: GradcheckSection = ConfigFile::section(&file.gradcheck, "gradcheck")?;
    cfg.instances = a.instances.unwrap_or(cfg.instances);
    cfg.seed = g.seed.unwrap_or(cfg.seed);
    if cfg.instances == 0 {
        bail!("instances must be positive");
    }
    let cases = gradcheck_suite(cfg.instances, cfg.seed)?;
    for c in &cases {
        let verdict = if c.passed() { "ok" } else { "FAIL" };
        println!(
            "{:<22}{:>12.3e}  < {:.0e}  {verdict}",
            c.name, c.max_rel_error, c.tolerance
        );
    }
    if let Some(out) = &g.out {
        write_json(out, &serde_json::json!({"config": cfg, "cases": cases}))?;
    }
    Ok(if cases.iter().all(|c| c.passed()) {
        0
    } else {
        1
    })
}
