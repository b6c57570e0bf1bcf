#![allow(dead_code)]

use std::path::{Path, PathBuf};

use chunkprobe::blm::{generate_blm, BlmConfig, BlmInstance, BlmSeeds, BlmTask, LexType};
use chunkprobe::corpus::{
    generate_corpus, parse_seed_file, CorpusConfig, CorpusDataset, Language, SeedRow,
};
use chunkprobe::embed::synthetic::SyntheticCoder;
use chunkprobe::embed::Layout;
use chunkprobe::experiment::{
    blm_probe, blm_synthetic_store, corpus_probe, corpus_synthetic_store, ProbeDataset,
};

pub fn data(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("data")
        .join(name)
}

pub fn en_seeds() -> Vec<SeedRow> {
    parse_seed_file(&data("seeds_en.tsv"), Language::En).unwrap()
}

pub fn corpus(target: usize, seed: u64) -> CorpusDataset {
    generate_corpus(
        &en_seeds(),
        &CorpusConfig {
            target,
            n_negs: 7,
            seed,
        },
    )
    .unwrap()
}

pub fn sentence_probe(target: usize) -> ProbeDataset {
    let ds = corpus(target, 0);
    let store = corpus_synthetic_store(&ds, &SyntheticCoder::with_defaults(0)).unwrap();
    corpus_probe(&ds, &store, Layout::RowMajor).unwrap()
}

pub fn agreement(lex: &[LexType], pool: usize, train_size: usize) -> Vec<BlmInstance> {
    let seeds = en_seeds();
    let cfg = BlmConfig {
        task: BlmTask::Agreement,
        lex_types: lex.to_vec(),
        pool: Some(pool),
        train_size,
        seed: 0,
    };
    generate_blm(BlmSeeds::Agreement(&seeds), &cfg).unwrap()
}

pub fn agreement_probe(lex: &[LexType], pool: usize, train_size: usize) -> ProbeDataset {
    let blm = agreement(lex, pool, train_size);
    let store = blm_synthetic_store(&blm, &SyntheticCoder::with_defaults(0)).unwrap();
    blm_probe(&blm, &store, Layout::RowMajor).unwrap()
}

/// Every file under `dir`, relative path and bytes, sorted by path.
pub fn tree(dir: &Path) -> Vec<(PathBuf, Vec<u8>)> {
    let mut out = Vec::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for e in std::fs::read_dir(&d).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                out.push((
                    p.strip_prefix(dir).unwrap().to_path_buf(),
                    std::fs::read(&p).unwrap(),
                ));
            }
        }
    }
    out.sort();
    out
}
