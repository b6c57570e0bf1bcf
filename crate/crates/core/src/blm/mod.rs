//! Blackbird Language Matrix instances: a 7-sentence context generated from a
//! template plus a labelled answer set with exactly one correct candidate.

pub mod agreement;
pub mod alternation;

pub use agreement::AgrSpec;
pub use alternation::{
    parse_alternation_file, parse_alternation_str, AltChunk, AltSeedRow, AltSpec, Role,
};

use std::collections::HashSet;
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{SeedRow, Split};
use crate::util::{derive_seed, read_jsonl, short_hash, write_json, write_jsonl};

pub const CORRECT: &str = "Correct";
pub const DEFAULT_TRAIN_SIZE: usize = 2000;

#[derive(Debug, Error)]
pub enum BlmError {
    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("seed lexicon line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error("lexical variation type {lex} needs {needed} seed row(s), got {got}")]
    InsufficientSeeds {
        lex: LexType,
        needed: usize,
        got: usize,
    },
    #[error("no seed row differs from the current one in slot {0}")]
    NoVariation(&'static str),
    #[error("wrong seed lexicon for task {0}")]
    WrongSeeds(BlmTask),
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> BlmError + '_ {
    move |source| BlmError::Io {
        path: path.display().to_string(),
        source,
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BlmTask {
    Agreement,
    AlternationG1,
    AlternationG2,
}

impl BlmTask {
    pub fn as_str(self) -> &'static str {
        match self {
            BlmTask::Agreement => "agreement",
            BlmTask::AlternationG1 => "alternation_g1",
            BlmTask::AlternationG2 => "alternation_g2",
        }
    }

    /// Answer labels in template order.
    pub fn labels(self) -> Vec<&'static str> {
        match self {
            BlmTask::Agreement => agreement::ANSWERS.iter().map(|a| a.0).collect(),
            _ => alternation::template(Role::Loc, Role::Theme)
                .1
                .iter()
                .map(|a| a.0)
                .collect(),
        }
    }

    /// Labels counted as sequence errors by the error analysis.
    pub fn sequence_error_labels(self) -> &'static [&'static str] {
        match self {
            BlmTask::Agreement => &["WN1", "WN2"],
            _ => &[],
        }
    }

    /// Instances generated per lexical type before splitting; ten times the
    /// published test sizes so that the 90:10 split reproduces them.
    pub fn default_pool(self, lex: LexType) -> usize {
        match (self, lex) {
            (BlmTask::Agreement, LexType::I) => 2520,
            (BlmTask::Agreement, LexType::II) => 48660,
            (BlmTask::Agreement, LexType::III) => 48690,
            (_, LexType::I) => 3750,
            (_, _) => 15000,
        }
    }

    fn roles(self) -> (Role, Role) {
        match self {
            BlmTask::AlternationG2 => (Role::Theme, Role::Loc),
            _ => (Role::Loc, Role::Theme),
        }
    }
}

impl fmt::Display for BlmTask {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for BlmTask {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "agreement" => Ok(BlmTask::Agreement),
            "alternation_g1" => Ok(BlmTask::AlternationG1),
            "alternation_g2" => Ok(BlmTask::AlternationG2),
            other => Err(format!("unknown BLM task {other:?}")),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum LexType {
    I,
    II,
    III,
}

impl LexType {
    pub const ALL: [LexType; 3] = [LexType::I, LexType::II, LexType::III];

    fn min_rows(self) -> usize {
        match self {
            LexType::II => 2,
            _ => 1,
        }
    }
}

impl fmt::Display for LexType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            LexType::I => "I",
            LexType::II => "II",
            LexType::III => "III",
        })
    }
}

impl FromStr for LexType {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "I" | "i" | "1" => Ok(LexType::I),
            "II" | "ii" | "2" => Ok(LexType::II),
            "III" | "iii" | "3" => Ok(LexType::III),
            other => Err(format!("unknown lexical variation type {other:?}")),
        }
    }
}

/// Seed row chosen for each of the four lexical slots of a sentence.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Lexicon(pub [usize; 4]);

impl Lexicon {
    pub fn uniform(row: usize) -> Self {
        Lexicon([row; 4])
    }

    pub fn hamming(&self, other: &Lexicon) -> usize {
        self.0.iter().zip(&other.0).filter(|(a, b)| a != b).count()
    }
}

#[derive(Clone, Copy, Debug)]
pub enum BlmSeeds<'a> {
    Agreement(&'a [SeedRow]),
    Alternation(&'a [AltSeedRow]),
}

impl BlmSeeds<'_> {
    fn len(&self) -> usize {
        match self {
            BlmSeeds::Agreement(s) => s.len(),
            BlmSeeds::Alternation(s) => s.len(),
        }
    }

    fn slot_differs(&self, slot: usize, a: usize, b: usize) -> bool {
        match self {
            BlmSeeds::Agreement(s) => agreement::slot_differs(s, slot, a, b),
            BlmSeeds::Alternation(s) => alternation::slot_differs(s, slot, a, b),
        }
    }

    fn slot_names(&self) -> [&'static str; 4] {
        match self {
            BlmSeeds::Agreement(_) => agreement::SLOTS,
            BlmSeeds::Alternation(_) => alternation::SLOTS,
        }
    }

    fn language(&self) -> &'static str {
        match self {
            BlmSeeds::Agreement(s) => s.first().map_or("en", |r| r.language.as_str()),
            BlmSeeds::Alternation(_) => "en",
        }
    }
}

/// Abstract sentence of either template.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Spec {
    Agr(AgrSpec),
    Alt(AltSpec),
}

impl Spec {
    pub fn structure(&self) -> String {
        match self {
            Spec::Agr(s) => s.structure(),
            Spec::Alt(s) => s.structure(),
        }
    }

    pub fn realized_slots(&self) -> [bool; 4] {
        match self {
            Spec::Agr(s) => s.realized_slots(),
            Spec::Alt(s) => s.realized_slots(),
        }
    }

    pub fn realize(&self, seeds: BlmSeeds<'_>, lex: &Lexicon) -> Result<String, BlmError> {
        match (self, seeds) {
            (Spec::Agr(s), BlmSeeds::Agreement(rows)) => Ok(s.realize(rows, lex)),
            (Spec::Alt(s), BlmSeeds::Alternation(rows)) => Ok(s.realize(rows, lex)),
            _ => Err(BlmError::WrongSeeds(BlmTask::Agreement)),
        }
    }
}

/// The 7 context specs and the labelled answer specs of `task`.
pub fn template(task: BlmTask) -> (Vec<Spec>, Vec<(&'static str, Spec)>) {
    match task {
        BlmTask::Agreement => (
            agreement::CONTEXT.iter().map(|s| Spec::Agr(*s)).collect(),
            agreement::ANSWERS
                .iter()
                .map(|(l, s)| (*l, Spec::Agr(*s)))
                .collect(),
        ),
        _ => {
            let (obj, obl) = task.roles();
            let (ctx, ans) = alternation::template(obj, obl);
            (
                ctx.into_iter().map(Spec::Alt).collect(),
                ans.into_iter().map(|(l, s)| (l, Spec::Alt(s))).collect(),
            )
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct BlmSentence {
    pub sentence_id: String,
    pub text: String,
    pub structure: String,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct BlmAnswer {
    pub sentence_id: String,
    pub text: String,
    pub label: String,
    pub structure: String,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct BlmInstance {
    pub instance_id: String,
    pub task: BlmTask,
    pub lex_type: LexType,
    pub context: Vec<BlmSentence>,
    pub answers: Vec<BlmAnswer>,
    pub correct_index: usize,
    /// Lexicon of each context row, then the one shared by the answers.
    pub lexicons: Vec<Lexicon>,
    #[serde(default)]
    pub split: Split,
}

impl BlmInstance {
    pub fn correct(&self) -> &BlmAnswer {
        &self.answers[self.correct_index]
    }

    pub fn sentence_ids(&self) -> impl Iterator<Item = &str> {
        self.context
            .iter()
            .map(|s| s.sentence_id.as_str())
            .chain(self.answers.iter().map(|a| a.sentence_id.as_str()))
    }
}

fn sentence_id(task: BlmTask, lang: &str, text: &str) -> String {
    let prefix = if task == BlmTask::Agreement {
        "agr"
    } else {
        "alt"
    };
    format!("{prefix}-{}", short_hash(&[lang, text]))
}

/// Per-row lexicons for the context (7) and answers (1).
pub fn lexical_schedule(
    specs: &[Spec],
    answer: &Spec,
    seeds: BlmSeeds<'_>,
    lex: LexType,
    rng: &mut impl Rng,
) -> Result<Vec<Lexicon>, BlmError> {
    let n = seeds.len();
    if n < lex.min_rows() {
        return Err(BlmError::InsufficientSeeds {
            lex,
            needed: lex.min_rows(),
            got: n,
        });
    }
    let rows = specs.len() + 1;
    match lex {
        LexType::I => Ok(vec![Lexicon::uniform(rng.random_range(0..n)); rows]),
        LexType::III => Ok((0..rows)
            .map(|_| Lexicon::uniform(rng.random_range(0..n)))
            .collect()),
        LexType::II => {
            // one slot changes per step, round-robin over the slots realised
            // in both neighbouring sentences
            let mut cur = Lexicon::uniform(rng.random_range(0..n));
            let mut out = vec![cur];
            let mut next_slot = 0usize;
            let all: Vec<&Spec> = specs.iter().chain(std::iter::once(answer)).collect();
            for w in all.windows(2) {
                let (a, b) = (w[0].realized_slots(), w[1].realized_slots());
                let slot = (0..4)
                    .map(|k| (next_slot + k) % 4)
                    .find(|&s| a[s] && b[s])
                    .expect("verb slot is always realised");
                next_slot = (slot + 1) % 4;
                let candidates: Vec<usize> = (0..n)
                    .filter(|&r| seeds.slot_differs(slot, r, cur.0[slot]))
                    .collect();
                if candidates.is_empty() {
                    return Err(BlmError::NoVariation(seeds.slot_names()[slot]));
                }
                cur.0[slot] = candidates[rng.random_range(0..candidates.len())];
                out.push(cur);
            }
            Ok(out)
        }
    }
}

/// One instance; answers are shuffled so the correct one has no fixed position.
pub fn gen_instance(
    task: BlmTask,
    seeds: BlmSeeds<'_>,
    lex: LexType,
    instance_id: String,
    rng: &mut impl Rng,
) -> Result<BlmInstance, BlmError> {
    match (task, seeds) {
        (BlmTask::Agreement, BlmSeeds::Agreement(_))
        | (BlmTask::AlternationG1 | BlmTask::AlternationG2, BlmSeeds::Alternation(_)) => {}
        _ => return Err(BlmError::WrongSeeds(task)),
    }
    let (ctx_specs, mut answer_specs) = template(task);
    let correct_spec = answer_specs
        .iter()
        .find(|a| a.0 == CORRECT)
        .expect("template has a correct answer")
        .1
        .clone();
    let lexicons = lexical_schedule(&ctx_specs, &correct_spec, seeds, lex, rng)?;
    let lang = seeds.language();
    let context = ctx_specs
        .iter()
        .zip(&lexicons)
        .map(|(s, l)| {
            let text = s.realize(seeds, l)?;
            Ok(BlmSentence {
                sentence_id: sentence_id(task, lang, &text),
                text,
                structure: s.structure(),
            })
        })
        .collect::<Result<Vec<_>, BlmError>>()?;
    answer_specs.shuffle(rng);
    let ans_lex = lexicons[ctx_specs.len()];
    let answers = answer_specs
        .iter()
        .map(|(label, s)| {
            let text = s.realize(seeds, &ans_lex)?;
            Ok(BlmAnswer {
                sentence_id: sentence_id(task, lang, &text),
                text,
                label: (*label).to_string(),
                structure: s.structure(),
            })
        })
        .collect::<Result<Vec<_>, BlmError>>()?;
    let correct_index = answers
        .iter()
        .position(|a| a.label == CORRECT)
        .expect("correct answer present");
    Ok(BlmInstance {
        instance_id,
        task,
        lex_type: lex,
        context,
        answers,
        correct_index,
        lexicons,
        split: Split::Unassigned,
    })
}

/// Label of `text` under the instance's answer lexicon, if exactly one
/// answer spec realises to it.
pub fn invert_label(
    task: BlmTask,
    seeds: BlmSeeds<'_>,
    lex: &Lexicon,
    text: &str,
) -> Option<&'static str> {
    let (_, answers) = template(task);
    let hits: Vec<&'static str> = answers
        .iter()
        .filter(|(_, s)| s.realize(seeds, lex).ok().as_deref() == Some(text))
        .map(|a| a.0)
        .collect();
    (hits.len() == 1).then(|| hits[0])
}

pub fn gen_pool(
    task: BlmTask,
    seeds: BlmSeeds<'_>,
    lex: LexType,
    size: usize,
    seed: u64,
) -> Result<Vec<BlmInstance>, BlmError> {
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, &format!("blm/{task}/{lex}")));
    (0..size)
        .map(|i| gen_instance(task, seeds, lex, format!("{task}-{lex}-{i:06}"), &mut rng))
        .collect()
}

/// 90:10 train:test, then at most `train_size` sampled from the train part,
/// of which 20% are held out as dev.
pub fn dataset_split(
    mut pool: Vec<BlmInstance>,
    train_size: usize,
    rng: &mut impl Rng,
) -> Vec<BlmInstance> {
    pool.shuffle(rng);
    let n_test = pool.len() / 10;
    let mut rest = pool.split_off(n_test);
    if rest.len() < train_size {
        log::warn!(
            "BLM pool leaves {} training instances, fewer than the requested {train_size}",
            rest.len()
        );
    }
    rest.truncate(train_size);
    let n_dev = rest.len() / 5;
    let mut out = Vec::with_capacity(pool.len() + rest.len());
    for (i, mut inst) in rest.into_iter().enumerate() {
        inst.split = if i < n_dev { Split::Dev } else { Split::Train };
        out.push(inst);
    }
    for mut inst in pool {
        inst.split = Split::Test;
        out.push(inst);
    }
    out
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BlmConfig {
    pub task: BlmTask,
    pub lex_types: Vec<LexType>,
    /// Pool size per lexical type; the task default when absent.
    pub pool: Option<usize>,
    pub train_size: usize,
    pub seed: u64,
}

impl Default for BlmConfig {
    fn default() -> Self {
        Self {
            task: BlmTask::Agreement,
            lex_types: LexType::ALL.to_vec(),
            pool: None,
            train_size: DEFAULT_TRAIN_SIZE,
            seed: 0,
        }
    }
}

/// Pools for every configured lexical type, each split independently.
pub fn generate_blm(seeds: BlmSeeds<'_>, cfg: &BlmConfig) -> Result<Vec<BlmInstance>, BlmError> {
    let mut out = Vec::new();
    for &lex in &cfg.lex_types {
        let size = cfg.pool.unwrap_or_else(|| cfg.task.default_pool(lex));
        let pool = gen_pool(cfg.task, seeds, lex, size, cfg.seed)?;
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(
            cfg.seed,
            &format!("blm/split/{}/{lex}", cfg.task),
        ));
        out.extend(dataset_split(pool, cfg.train_size, &mut rng));
    }
    Ok(out)
}

/// Unique sentences in first-appearance order.
pub fn unique_sentences(instances: &[BlmInstance]) -> Vec<BlmSentence> {
    let mut seen = HashSet::new();
    let mut out = Vec::new();
    for inst in instances {
        let ctx = inst.context.iter().cloned();
        let ans = inst.answers.iter().map(|a| BlmSentence {
            sentence_id: a.sentence_id.clone(),
            text: a.text.clone(),
            structure: a.structure.clone(),
        });
        for s in ctx.chain(ans) {
            if seen.insert(s.sentence_id.clone()) {
                out.push(s);
            }
        }
    }
    out
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LexCounts {
    pub lex_type: LexType,
    pub train: usize,
    pub dev: usize,
    pub test: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BlmManifest {
    pub kind: String,
    pub task: BlmTask,
    pub seed: u64,
    pub seed_rows: usize,
    pub sentences: usize,
    pub per_lex_type: Vec<LexCounts>,
    pub config: serde_json::Value,
}

impl BlmManifest {
    pub fn new(
        instances: &[BlmInstance],
        seed_rows: usize,
        cfg: &BlmConfig,
        config: serde_json::Value,
    ) -> Self {
        let per_lex_type = cfg
            .lex_types
            .iter()
            .map(|&lex| {
                let count = |s: Split| {
                    instances
                        .iter()
                        .filter(|i| i.lex_type == lex && i.split == s)
                        .count()
                };
                LexCounts {
                    lex_type: lex,
                    train: count(Split::Train),
                    dev: count(Split::Dev),
                    test: count(Split::Test),
                }
            })
            .collect();
        Self {
            kind: "blm".into(),
            task: cfg.task,
            seed: cfg.seed,
            seed_rows,
            sentences: unique_sentences(instances).len(),
            per_lex_type,
            config,
        }
    }
}

pub const INSTANCES_FILE: &str = "blm_instances.jsonl";
pub const SENTENCES_FILE: &str = "blm_sentences.jsonl";
pub const MANIFEST_FILE: &str = "manifest.json";

pub fn write_blm(
    dir: &Path,
    instances: &[BlmInstance],
    manifest: &BlmManifest,
) -> Result<(), BlmError> {
    std::fs::create_dir_all(dir).map_err(io_err(dir))?;
    let p = dir.join(INSTANCES_FILE);
    write_jsonl(&p, instances).map_err(io_err(&p))?;
    let p = dir.join(SENTENCES_FILE);
    write_jsonl(&p, unique_sentences(instances)).map_err(io_err(&p))?;
    let p = dir.join(MANIFEST_FILE);
    write_json(&p, manifest).map_err(io_err(&p))
}

pub fn read_blm(dir: &Path) -> Result<Vec<BlmInstance>, BlmError> {
    let p = dir.join(INSTANCES_FILE);
    read_jsonl(&p).map_err(io_err(&p))
}
