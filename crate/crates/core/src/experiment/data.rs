use std::collections::HashMap;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::blm::{read_blm, BlmInstance, LexType, CORRECT};
use crate::corpus::{enumerate_patterns, read_dataset, CorpusDataset, Split};
use crate::embed::synthetic::SyntheticCoder;
use crate::embed::{EmbedError, EmbeddingStore, Layout};
use crate::util::derive_seed;

use super::{ExperimentError, TaskKind};

/// One scored multiple-choice item: encode `inputs`, pick a candidate.
#[derive(Clone, Debug, PartialEq)]
pub struct ProbeInstance {
    pub id: String,
    pub split: Split,
    pub lex: Option<LexType>,
    /// Grid indices: one input sentence, or the 7 context sentences.
    pub inputs: Vec<usize>,
    pub candidates: Vec<usize>,
    pub candidate_labels: Vec<String>,
    pub correct: usize,
    /// Row label in the confusion matrix.
    pub true_label: String,
}

/// Instances plus the embedding grids they index into.
#[derive(Clone, Debug, PartialEq)]
pub struct ProbeDataset {
    pub task: TaskKind,
    pub grids: Vec<Vec<f64>>,
    pub grid_ids: Vec<String>,
    /// Pattern or structure string of each grid.
    pub grid_labels: Vec<String>,
    pub instances: Vec<ProbeInstance>,
    /// Confusion matrix axis.
    pub labels: Vec<String>,
}

impl ProbeDataset {
    /// Indices of instances in `split`, restricted to `lex` when given.
    pub fn select(&self, split: Split, lex: Option<LexType>) -> Vec<usize> {
        self.instances
            .iter()
            .enumerate()
            .filter(|(_, x)| x.split == split && (lex.is_none() || x.lex == lex))
            .map(|(i, _)| i)
            .collect()
    }

    pub fn grid(&self, i: usize) -> &[f64] {
        &self.grids[i]
    }
}

struct GridTable<'a> {
    store: &'a EmbeddingStore,
    layout: Layout,
    index: HashMap<String, usize>,
    grids: Vec<Vec<f64>>,
    ids: Vec<String>,
    labels: Vec<String>,
}

impl<'a> GridTable<'a> {
    fn new(store: &'a EmbeddingStore, layout: Layout) -> Self {
        Self {
            store,
            layout,
            index: HashMap::new(),
            grids: Vec::new(),
            ids: Vec::new(),
            labels: Vec::new(),
        }
    }

    fn intern(&mut self, id: &str, label: &str) -> Result<usize, ExperimentError> {
        if let Some(&i) = self.index.get(id) {
            return Ok(i);
        }
        let m = self.store.matrix(id, self.layout)?;
        let i = self.grids.len();
        self.grids.push(m.grid().to_vec());
        self.ids.push(id.to_string());
        self.labels.push(label.to_string());
        self.index.insert(id.to_string(), i);
        Ok(i)
    }
}

/// Candidate order is shuffled per instance, keyed by its id, so that the
/// correct candidate does not sit at a fixed position.
fn shuffled(id: &str, n: usize) -> Vec<usize> {
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(derive_seed(
        0,
        &format!("candidates\0{id}"),
    )));
    order
}

/// Sentence-task instances from a corpus dataset directory.
pub fn load_corpus(
    dir: &Path,
    store: &EmbeddingStore,
    layout: Layout,
) -> Result<ProbeDataset, ExperimentError> {
    let ds = read_dataset(dir)?;
    corpus_probe(&ds, store, layout)
}

pub fn corpus_probe(
    ds: &CorpusDataset,
    store: &EmbeddingStore,
    layout: Layout,
) -> Result<ProbeDataset, ExperimentError> {
    let index = ds.sentence_index();
    store.check_complete(ds.triples.iter().flat_map(|t| {
        std::iter::once(t.input.as_str())
            .chain(std::iter::once(t.positive.as_str()))
            .chain(t.negatives.iter().map(String::as_str))
    }))?;
    let pattern_of = |id: &str| -> Result<String, ExperimentError> {
        index
            .get(id)
            .map(|s| s.pattern.to_string())
            .ok_or_else(|| EmbedError::Missing(vec![id.to_string()]).into())
    };
    let mut table = GridTable::new(store, layout);
    let mut instances =
        Vec::with_capacity(ds.triples.sizes().0 + ds.triples.sizes().1 + ds.triples.sizes().2);
    for (n, t) in ds.triples.iter().enumerate() {
        let id = format!("{}#{n}", t.input);
        let input = table.intern(&t.input, &pattern_of(&t.input)?)?;
        let raw: Vec<&str> = std::iter::once(t.positive.as_str())
            .chain(t.negatives.iter().map(String::as_str))
            .collect();
        let order = shuffled(&id, raw.len());
        let mut candidates = Vec::with_capacity(raw.len());
        let mut candidate_labels = Vec::with_capacity(raw.len());
        for &k in &order {
            let label = pattern_of(raw[k])?;
            candidates.push(table.intern(raw[k], &label)?);
            candidate_labels.push(label);
        }
        let correct = order
            .iter()
            .position(|&k| k == 0)
            .expect("positive present");
        instances.push(ProbeInstance {
            id,
            split: t.split,
            lex: None,
            inputs: vec![input],
            candidates,
            candidate_labels,
            correct,
            true_label: t.pattern.to_string(),
        });
    }
    Ok(ProbeDataset {
        task: TaskKind::Sentence,
        grids: table.grids,
        grid_ids: table.ids,
        grid_labels: table.labels,
        instances,
        labels: enumerate_patterns()
            .iter()
            .map(ToString::to_string)
            .collect(),
    })
}

/// Two-level instances from a BLM dataset directory.
pub fn load_blm(
    dir: &Path,
    store: &EmbeddingStore,
    layout: Layout,
) -> Result<ProbeDataset, ExperimentError> {
    let instances = read_blm(dir)?;
    blm_probe(&instances, store, layout)
}

pub fn blm_probe(
    blm: &[BlmInstance],
    store: &EmbeddingStore,
    layout: Layout,
) -> Result<ProbeDataset, ExperimentError> {
    let Some(first) = blm.first() else {
        return Err(ExperimentError::EmptySplit("BLM instance"));
    };
    let task = match first.task {
        crate::blm::BlmTask::Agreement => TaskKind::BlmAgreement,
        crate::blm::BlmTask::AlternationG1 => TaskKind::BlmAltG1,
        crate::blm::BlmTask::AlternationG2 => TaskKind::BlmAltG2,
    };
    if let Some(other) = blm.iter().find(|x| x.task != first.task) {
        return Err(ExperimentError::Config(format!(
            "mixed BLM tasks in one dataset: {} and {}",
            first.task, other.task
        )));
    }
    store.check_complete(blm.iter().flat_map(BlmInstance::sentence_ids))?;
    let mut table = GridTable::new(store, layout);
    let mut instances = Vec::with_capacity(blm.len());
    for x in blm {
        let inputs = x
            .context
            .iter()
            .map(|s| table.intern(&s.sentence_id, &s.structure))
            .collect::<Result<Vec<_>, _>>()?;
        let mut candidates = Vec::with_capacity(x.answers.len());
        let mut candidate_labels = Vec::with_capacity(x.answers.len());
        for (k, a) in x.answers.iter().enumerate() {
            if a.label.is_empty() {
                return Err(ExperimentError::Unlabeled {
                    instance: x.instance_id.clone(),
                    index: k,
                });
            }
            candidates.push(table.intern(&a.sentence_id, &a.structure)?);
            candidate_labels.push(a.label.clone());
        }
        instances.push(ProbeInstance {
            id: x.instance_id.clone(),
            split: x.split,
            lex: Some(x.lex_type),
            inputs,
            candidates,
            candidate_labels,
            correct: x.correct_index,
            true_label: CORRECT.to_string(),
        });
    }
    Ok(ProbeDataset {
        task,
        grids: table.grids,
        grid_ids: table.ids,
        grid_labels: table.labels,
        instances,
        labels: first.task.labels().into_iter().map(String::from).collect(),
    })
}

/// Coded synthetic store for `(sentence_id, structure)` pairs; duplicate ids
/// are written once.
pub fn synthetic_store<'a>(
    entries: impl IntoIterator<Item = (&'a str, &'a str)>,
    coder: &SyntheticCoder,
) -> Result<EmbeddingStore, EmbedError> {
    let mut store = EmbeddingStore::new("synthetic");
    let mut seen = std::collections::HashSet::new();
    for (id, structure) in entries {
        if seen.insert(id) {
            let v: Vec<f32> = coder
                .embed(id, structure)
                .iter()
                .map(|&x| x as f32)
                .collect();
            store.push(id, &v)?;
        }
    }
    Ok(store)
}

/// Synthetic store covering every sentence of a corpus dataset, coded by pattern.
pub fn corpus_synthetic_store(
    ds: &CorpusDataset,
    coder: &SyntheticCoder,
) -> Result<EmbeddingStore, EmbedError> {
    let labelled: Vec<(&str, String)> = ds
        .sentences
        .iter()
        .map(|s| (s.sentence_id.as_str(), s.pattern.to_string()))
        .collect();
    synthetic_store(labelled.iter().map(|(id, p)| (*id, p.as_str())), coder)
}

/// Synthetic store covering every sentence of a BLM dataset, coded by structure.
pub fn blm_synthetic_store(
    instances: &[BlmInstance],
    coder: &SyntheticCoder,
) -> Result<EmbeddingStore, EmbedError> {
    let sentences = crate::blm::unique_sentences(instances);
    synthetic_store(
        sentences
            .iter()
            .map(|s| (s.sentence_id.as_str(), s.structure.as_str())),
        coder,
    )
}
