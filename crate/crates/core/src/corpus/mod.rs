//! Chunk-structured sentence corpus: seed rows, the 14 chunk patterns,
//! (input, positive, negatives) triples and the train/dev/test split.

mod pattern;
mod seed;

pub use pattern::{enumerate_patterns, ChunkKind, ChunkPattern, Number};
pub use seed::{parse_seed_file, parse_seed_str, Language, SeedRow, SEED_COLUMNS};

use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use rand::seq::{index::sample, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::util::{derive_seed, read_jsonl, short_hash, write_json, write_jsonl};

pub const N_PATTERNS: usize = 14;
pub const DEFAULT_N_NEGS: usize = 7;
pub const DEFAULT_TARGET: usize = 4000;

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("seed file line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error("need {needed} distinct negative patterns but only {available} other patterns are populated")]
    InsufficientPatterns { needed: usize, available: usize },
    #[error("invalid dataset: {0}")]
    Invalid(String),
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> CorpusError + '_ {
    move |source| CorpusError::Io {
        path: path.display().to_string(),
        source,
    }
}

#[derive(
    Clone, Copy, Debug, Default, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize,
)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Dev,
    Test,
    #[default]
    Unassigned,
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Split::Train => "train",
            Split::Dev => "dev",
            Split::Test => "test",
            Split::Unassigned => "unassigned",
        })
    }
}

impl FromStr for Split {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "train" => Ok(Split::Train),
            "dev" => Ok(Split::Dev),
            "test" => Ok(Split::Test),
            "unassigned" => Ok(Split::Unassigned),
            other => Err(format!("unknown split {other:?}")),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SentenceRecord {
    pub sentence_id: String,
    pub text: String,
    pub pattern: ChunkPattern,
    pub seed_row_id: usize,
    pub language: Language,
    #[serde(default)]
    pub split: Split,
}

impl SentenceRecord {
    pub fn new(row: &SeedRow, pattern: ChunkPattern) -> Self {
        let pat = pattern.to_string();
        Self {
            sentence_id: format!(
                "{}-{}",
                row.language,
                short_hash(&[row.language.as_str(), &row.row_id.to_string(), &pat])
            ),
            text: row.realize(&pattern),
            pattern,
            seed_row_id: row.row_id,
            language: row.language,
            split: Split::Unassigned,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TripleInstance {
    pub input: String,
    pub positive: String,
    pub negatives: Vec<String>,
    /// Pattern of `input` (and `positive`).
    pub pattern: ChunkPattern,
    #[serde(default)]
    pub split: Split,
}

/// Sentence sets `S_p` in canonical pattern order.
pub type PatternSets = Vec<(ChunkPattern, Vec<SentenceRecord>)>;

/// Every grammatical sentence of every seed row, grouped by pattern.
pub fn generate_sentences(seeds: &[SeedRow]) -> PatternSets {
    enumerate_patterns()
        .into_iter()
        .map(|p| {
            let set = seeds
                .iter()
                .map(|row| SentenceRecord::new(row, p.clone()))
                .collect();
            (p, set)
        })
        .collect()
}

/// One triple per ordered pair of distinct sentences sharing a pattern; the
/// negatives come from `n_negs` distinct other patterns.
pub fn build_instances(
    sets: &PatternSets,
    n_negs: usize,
    rng: &mut impl Rng,
) -> Result<Vec<TripleInstance>, CorpusError> {
    if n_negs == 0 {
        return Err(CorpusError::Invalid("n_negs must be at least 1".into()));
    }
    let mut out = Vec::new();
    for (pi, (pattern, set)) in sets.iter().enumerate() {
        if set.len() < 2 {
            log::warn!("pattern {pattern} has {} sentence(s); skipped", set.len());
            continue;
        }
        let others: Vec<usize> = (0..sets.len())
            .filter(|&q| q != pi && !sets[q].1.is_empty())
            .collect();
        if others.len() < n_negs {
            return Err(CorpusError::InsufficientPatterns {
                needed: n_negs,
                available: others.len(),
            });
        }
        for (i, a) in set.iter().enumerate() {
            for (j, b) in set.iter().enumerate() {
                if i == j {
                    continue;
                }
                let negatives = sample(rng, others.len(), n_negs)
                    .into_iter()
                    .map(|k| {
                        let pool = &sets[others[k]].1;
                        pool[rng.random_range(0..pool.len())].sentence_id.clone()
                    })
                    .collect();
                out.push(TripleInstance {
                    input: a.sentence_id.clone(),
                    positive: b.sentence_id.clone(),
                    negatives,
                    pattern: pattern.clone(),
                    split: Split::Unassigned,
                });
            }
        }
    }
    Ok(out)
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct SplitTriples {
    pub train: Vec<TripleInstance>,
    pub dev: Vec<TripleInstance>,
    pub test: Vec<TripleInstance>,
}

impl SplitTriples {
    pub fn sizes(&self) -> (usize, usize, usize) {
        (self.train.len(), self.dev.len(), self.test.len())
    }

    pub fn iter(&self) -> impl Iterator<Item = &TripleInstance> {
        self.train.iter().chain(&self.dev).chain(&self.test)
    }
}

/// Per-pattern quota `ceil(target / 14)`, then within each pattern a 80:20
/// train:test split followed by 80:20 train:dev on the train part. Each
/// split takes `floor(n / 5)` items.
pub fn sample_and_split(
    instances: Vec<TripleInstance>,
    target: usize,
    rng: &mut impl Rng,
) -> SplitTriples {
    let mut out = SplitTriples::default();
    if target == 0 {
        return out;
    }
    let quota = target.div_ceil(N_PATTERNS);
    let mut groups: BTreeMap<usize, Vec<TripleInstance>> = BTreeMap::new();
    for t in instances {
        groups.entry(t.pattern.index()).or_default().push(t);
    }
    let available: usize = groups.values().map(Vec::len).sum();
    if available < target {
        log::warn!("requested {target} instances but only {available} are available; taking all");
    }
    for (_, mut group) in groups {
        group.shuffle(rng);
        group.truncate(quota);
        let n_test = group.len() / 5;
        let n_dev = (group.len() - n_test) / 5;
        let mut it = group.into_iter();
        let mut take = |n: usize, split: Split, dst: &mut Vec<TripleInstance>| {
            dst.extend(it.by_ref().take(n).map(|mut t| {
                t.split = split;
                t
            }));
        };
        take(n_test, Split::Test, &mut out.test);
        take(n_dev, Split::Dev, &mut out.dev);
        take(usize::MAX, Split::Train, &mut out.train);
    }
    out
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CorpusConfig {
    pub target: usize,
    pub n_negs: usize,
    pub seed: u64,
}

impl Default for CorpusConfig {
    fn default() -> Self {
        Self {
            target: DEFAULT_TARGET,
            n_negs: DEFAULT_N_NEGS,
            seed: 0,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct CorpusDataset {
    pub sentences: Vec<SentenceRecord>,
    pub triples: SplitTriples,
    pub available_instances: usize,
}

impl CorpusDataset {
    pub fn sentence_index(&self) -> HashMap<&str, &SentenceRecord> {
        self.sentences
            .iter()
            .map(|s| (s.sentence_id.as_str(), s))
            .collect()
    }
}

/// Full pipeline: sentences, triples, sampling and split, with a sentence's
/// split set to that of the triples it is the input of (`unassigned` when
/// those disagree or it is never an input).
pub fn generate_corpus(
    seeds: &[SeedRow],
    cfg: &CorpusConfig,
) -> Result<CorpusDataset, CorpusError> {
    let sets = generate_sentences(seeds);
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(cfg.seed, "corpus/negatives"));
    let instances = build_instances(&sets, cfg.n_negs, &mut rng)?;
    let available_instances = instances.len();
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(cfg.seed, "corpus/split"));
    let triples = sample_and_split(instances, cfg.target, &mut rng);

    let mut seen: HashMap<&str, Option<Split>> = HashMap::new();
    for t in triples.iter() {
        seen.entry(t.input.as_str())
            .and_modify(|s| {
                if *s != Some(t.split) {
                    *s = None;
                }
            })
            .or_insert(Some(t.split));
    }
    let splits: HashMap<String, Split> = seen
        .into_iter()
        .map(|(k, v)| (k.to_string(), v.unwrap_or(Split::Unassigned)))
        .collect();
    let sentences = sets
        .into_iter()
        .flat_map(|(_, set)| set)
        .map(|mut s| {
            s.split = splits.get(&s.sentence_id).copied().unwrap_or_default();
            s
        })
        .collect();
    Ok(CorpusDataset {
        sentences,
        triples,
        available_instances,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PatternCount {
    pub pattern: String,
    pub sentences: usize,
    pub instances: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SplitSizes {
    pub train: usize,
    pub dev: usize,
    pub test: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CorpusManifest {
    pub kind: String,
    pub language: Option<Language>,
    pub seed: u64,
    pub seed_rows: usize,
    pub available_instances: usize,
    pub per_pattern: Vec<PatternCount>,
    pub split_sizes: SplitSizes,
    pub config: serde_json::Value,
}

impl CorpusManifest {
    pub fn new(
        ds: &CorpusDataset,
        seed_rows: usize,
        cfg: &CorpusConfig,
        config: serde_json::Value,
    ) -> Self {
        let per_pattern = enumerate_patterns()
            .into_iter()
            .map(|p| PatternCount {
                pattern: p.to_string(),
                sentences: ds.sentences.iter().filter(|s| s.pattern == p).count(),
                instances: ds.triples.iter().filter(|t| t.pattern == p).count(),
            })
            .collect();
        let (train, dev, test) = ds.triples.sizes();
        Self {
            kind: "corpus".into(),
            language: ds.sentences.first().map(|s| s.language),
            seed: cfg.seed,
            seed_rows,
            available_instances: ds.available_instances,
            per_pattern,
            split_sizes: SplitSizes { train, dev, test },
            config,
        }
    }
}

pub const SENTENCES_FILE: &str = "sentences.jsonl";
pub const TRIPLES_FILE: &str = "triples.jsonl";
pub const MANIFEST_FILE: &str = "manifest.json";

pub fn write_dataset(
    dir: &Path,
    ds: &CorpusDataset,
    manifest: &CorpusManifest,
) -> Result<(), CorpusError> {
    std::fs::create_dir_all(dir).map_err(io_err(dir))?;
    let p = dir.join(SENTENCES_FILE);
    write_jsonl(&p, &ds.sentences).map_err(io_err(&p))?;
    let p = dir.join(TRIPLES_FILE);
    write_jsonl(&p, ds.triples.iter()).map_err(io_err(&p))?;
    let p = dir.join(MANIFEST_FILE);
    write_json(&p, manifest).map_err(io_err(&p))
}

pub fn read_dataset(dir: &Path) -> Result<CorpusDataset, CorpusError> {
    let p = dir.join(SENTENCES_FILE);
    let sentences: Vec<SentenceRecord> = read_jsonl(&p).map_err(io_err(&p))?;
    let p = dir.join(TRIPLES_FILE);
    let all: Vec<TripleInstance> = read_jsonl(&p).map_err(io_err(&p))?;
    let available_instances = all.len();
    let mut triples = SplitTriples::default();
    for t in all {
        match t.split {
            Split::Train => triples.train.push(t),
            Split::Dev => triples.dev.push(t),
            Split::Test => triples.test.push(t),
            Split::Unassigned => {
                return Err(CorpusError::Invalid(format!(
                    "triple for {} has no split",
                    t.input
                )))
            }
        }
    }
    Ok(CorpusDataset {
        sentences,
        triples,
        available_instances,
    })
}
