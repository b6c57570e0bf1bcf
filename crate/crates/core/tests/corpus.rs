use std::collections::HashMap;
use std::path::PathBuf;

use chunkprobe::corpus::*;
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

const EXAMPLE: &str = "Subj_sg\tSubj_pl\tP1_sg\tP1_pl\tP2_sg\tP2_pl\tV_sg\tV_pl\n\
The computer\tThe computers\twith the program\twith the programs\tof the experiment\tof the experiments\tis broken\tare broken\n";

fn shipped(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("data")
        .join(name)
}

fn seeds_en() -> Vec<SeedRow> {
    parse_seed_file(&shipped("seeds_en.tsv"), Language::En).unwrap()
}

#[test]
fn example_row_parses() {
    let rows = parse_seed_str(EXAMPLE, Language::En).unwrap();
    assert_eq!(rows.len(), 1);
    assert_eq!(rows[0].subj_sg, "The computer");
    assert_eq!(rows[0].v_pl, "are broken");
}

#[test]
fn empty_file_gives_no_rows() {
    assert!(parse_seed_str("", Language::En).unwrap().is_empty());
}

#[test]
fn empty_cell_reports_its_line() {
    let text = format!("{EXAMPLE}A\tB\tc\td\te\tf\tg\t\n");
    match parse_seed_str(&text, Language::En) {
        Err(CorpusError::Parse { line, msg }) => {
            assert_eq!(line, 3);
            assert!(msg.contains("V_pl"), "{msg}");
        }
        other => panic!("{other:?}"),
    }
}

#[test]
fn missing_column_is_rejected() {
    let text = "Subj_sg\tSubj_pl\tP1_sg\tP1_pl\tP2_sg\tP2_pl\tV_sg\nA\tB\tc\td\te\tf\tg\n";
    assert!(matches!(
        parse_seed_str(text, Language::En),
        Err(CorpusError::Parse { line: 1, .. })
    ));
}

#[test]
fn identical_sg_pl_cells_rejected() {
    let text = format!("{EXAMPLE}A\tA\tc\td\te\tf\tg\th\n");
    assert!(matches!(
        parse_seed_str(&text, Language::En),
        Err(CorpusError::Parse { line: 3, .. })
    ));
}

#[test]
fn fourteen_patterns() {
    let pats = enumerate_patterns();
    assert_eq!(pats.len(), 14);
    let names: Vec<String> = pats.iter().map(ToString::to_string).collect();
    assert!(names.contains(&"np-s vp-s".to_string()));
    assert!(names.contains(&"np-p pp1-p pp2-p vp-p".to_string()));
    assert!(!names.contains(&"np-s pp1-s vp-p".to_string()));
    assert!("np-s pp1-s vp-p".parse::<ChunkPattern>().is_err());
    assert!("np-s pp2-s vp-s".parse::<ChunkPattern>().is_err());
    for (i, p) in pats.iter().enumerate() {
        assert_eq!(p.index(), i);
        assert_eq!(p.to_string().parse::<ChunkPattern>().unwrap(), *p);
    }
}

#[test]
fn one_row_gives_one_sentence_per_pattern() {
    let rows = parse_seed_str(EXAMPLE, Language::En).unwrap();
    let sets = generate_sentences(&rows);
    assert_eq!(sets.iter().map(|(_, s)| s.len()).sum::<usize>(), 14);
    let p: ChunkPattern = "np-s pp1-s vp-s".parse().unwrap();
    let s = &sets.iter().find(|(q, _)| *q == p).unwrap().1[0];
    assert_eq!(s.text, "The computer with the program is broken.");
    let p: ChunkPattern = "np-p pp1-p pp2-p vp-p".parse().unwrap();
    assert_eq!(
        rows[0].realize(&p),
        "The computers with the programs of the experiments are broken."
    );
    assert!(generate_sentences(&[]).iter().all(|(_, s)| s.is_empty()));
}

#[test]
fn shipped_seed_files_are_valid() {
    for (name, lang) in [
        ("seeds_en.tsv", Language::En),
        ("seeds_fr.tsv", Language::Fr),
    ] {
        let rows = parse_seed_file(&shipped(name), lang).unwrap();
        assert_eq!(rows.len(), 20);
        for (p, set) in generate_sentences(&rows) {
            for (s, row) in set.iter().zip(&rows) {
                assert_eq!(row.segment(&s.text), Some(p.clone()), "{}", s.text);
            }
        }
    }
}

fn three_row_sets() -> PatternSets {
    let rows: Vec<SeedRow> = seeds_en().into_iter().take(3).collect();
    generate_sentences(&rows)
}

#[test]
fn triple_count_and_constraints() {
    let sets = three_row_sets();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let triples = build_instances(&sets, 5, &mut rng).unwrap();
    assert_eq!(triples.len(), 14 * 3 * 2);
    let pattern_of: HashMap<String, ChunkPattern> = sets
        .iter()
        .flat_map(|(_, s)| s)
        .map(|s| (s.sentence_id.clone(), s.pattern.clone()))
        .collect();
    for t in &triples {
        assert_ne!(t.input, t.positive);
        assert_eq!(pattern_of[&t.positive], pattern_of[&t.input]);
        assert_eq!(t.pattern, pattern_of[&t.input]);
        assert_eq!(t.negatives.len(), 5);
        let mut neg_pats: Vec<usize> = t.negatives.iter().map(|n| pattern_of[n].index()).collect();
        assert!(neg_pats.iter().all(|&q| q != t.pattern.index()));
        neg_pats.sort_unstable();
        neg_pats.dedup();
        assert_eq!(neg_pats.len(), 5);
    }
}

#[test]
fn too_many_negatives_is_an_error() {
    let sets = three_row_sets();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    assert!(matches!(
        build_instances(&sets, 14, &mut rng),
        Err(CorpusError::InsufficientPatterns {
            needed: 14,
            available: 13
        })
    ));
    assert!(build_instances(&sets, 13, &mut rng).is_ok());
}

#[test]
fn singleton_patterns_are_skipped() {
    let rows: Vec<SeedRow> = seeds_en().into_iter().take(1).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    assert!(build_instances(&generate_sentences(&rows), 7, &mut rng)
        .unwrap()
        .is_empty());
}

#[test]
fn full_scale_split_is_exact() {
    let ds = generate_corpus(&seeds_en(), &CorpusConfig::default()).unwrap();
    assert_eq!(ds.triples.sizes(), (2576, 630, 798));
    let fr = parse_seed_file(&shipped("seeds_fr.tsv"), Language::Fr).unwrap();
    let ds = generate_corpus(
        &fr,
        &CorpusConfig {
            seed: 9,
            ..CorpusConfig::default()
        },
    )
    .unwrap();
    assert_eq!(ds.triples.sizes(), (2576, 630, 798));
}

#[test]
fn splits_are_eighty_twenty_twice_within_rounding() {
    let rows = seeds_en();
    let sets = generate_sentences(&rows);
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let all = build_instances(&sets, 7, &mut rng).unwrap();
    for target in [14, 100, 1000, 4030, 5320] {
        let s = sample_and_split(all.clone(), target, &mut rng);
        let (tr, dv, te) = s.sizes();
        let n = tr + dv + te;
        assert!(
            n >= target.min(all.len()) && n < target + 14,
            "{target}: {n}"
        );
        // one rounding step per pattern group
        assert!(
            (n as f64 * 0.2 - te as f64).abs() < 14.0,
            "{target}: test {te} of {n}"
        );
        assert!(
            ((tr + dv) as f64 * 0.2 - dv as f64).abs() < 14.0,
            "{target}: dev {dv}"
        );
    }
    let s = sample_and_split(all.clone(), 4030, &mut rng);
    assert_eq!(s.sizes(), (2590, 644, 798));
}

#[test]
fn zero_target_is_empty_and_oversize_takes_all() {
    let sets = three_row_sets();
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let all = build_instances(&sets, 7, &mut rng).unwrap();
    assert_eq!(
        sample_and_split(all.clone(), 0, &mut rng).sizes(),
        (0, 0, 0)
    );
    let s = sample_and_split(all.clone(), 10_000, &mut rng);
    let (a, b, c) = s.sizes();
    assert_eq!(a + b + c, all.len());
}

#[test]
fn per_pattern_counts_differ_by_at_most_one() {
    let ds = generate_corpus(
        &seeds_en(),
        &CorpusConfig {
            target: 1000,
            ..CorpusConfig::default()
        },
    )
    .unwrap();
    let mut counts = [0usize; 14];
    for t in ds.triples.iter() {
        counts[t.pattern.index()] += 1;
    }
    assert!(
        counts.iter().max().unwrap() - counts.iter().min().unwrap() <= 1,
        "{counts:?}"
    );
}

#[test]
fn rerun_is_byte_identical() {
    let rows = seeds_en();
    let cfg = CorpusConfig {
        target: 700,
        seed: 3,
        ..CorpusConfig::default()
    };
    let mut bytes = Vec::new();
    for _ in 0..2 {
        let dir = tempfile::tempdir().unwrap();
        let ds = generate_corpus(&rows, &cfg).unwrap();
        let m = CorpusManifest::new(&ds, rows.len(), &cfg, serde_json::to_value(&cfg).unwrap());
        write_dataset(dir.path(), &ds, &m).unwrap();
        let read = |f: &str| std::fs::read(dir.path().join(f)).unwrap();
        bytes.push((
            read(SENTENCES_FILE),
            read(TRIPLES_FILE),
            read(MANIFEST_FILE),
        ));
        let back = read_dataset(dir.path()).unwrap();
        assert_eq!(back.sentences, ds.sentences);
        assert_eq!(back.triples, ds.triples);
    }
    assert_eq!(bytes[0], bytes[1]);
    let ds = generate_corpus(&rows, &CorpusConfig { seed: 4, ..cfg }).unwrap();
    let other = generate_corpus(&rows, &cfg).unwrap();
    assert_ne!(ds.triples, other.triples);
}

#[test]
fn sentence_split_follows_its_input_triples() {
    let ds = generate_corpus(
        &seeds_en(),
        &CorpusConfig {
            target: 700,
            ..CorpusConfig::default()
        },
    )
    .unwrap();
    let idx = ds.sentence_index();
    let mut n_assigned = 0;
    for t in ds.triples.iter() {
        let s = idx[t.input.as_str()];
        assert!(s.split == t.split || s.split == Split::Unassigned);
        n_assigned += usize::from(s.split != Split::Unassigned);
    }
    assert!(n_assigned > 0);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn sentences_round_trip_through_segmentation(row in 0usize..20, pat in 0usize..14) {
        let rows = seeds_en();
        let p = enumerate_patterns()[pat].clone();
        let s = SentenceRecord::new(&rows[row], p.clone());
        prop_assert_eq!(rows[row].segment(&s.text), Some(p));
    }

    #[test]
    fn triples_respect_pattern_constraints(seed in any::<u64>(), n_negs in 1usize..=13, n_rows in 2usize..5) {
        let rows: Vec<SeedRow> = seeds_en().into_iter().take(n_rows).collect();
        let sets = generate_sentences(&rows);
        let pattern_of: HashMap<String, usize> =
            sets.iter().flat_map(|(_, s)| s).map(|s| (s.sentence_id.clone(), s.pattern.index())).collect();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let triples = build_instances(&sets, n_negs, &mut rng).unwrap();
        prop_assert_eq!(triples.len(), 14 * n_rows * (n_rows - 1));
        for t in &triples {
            let p = pattern_of[&t.input];
            prop_assert_eq!(pattern_of[&t.positive], p);
            let mut q: Vec<usize> = t.negatives.iter().map(|n| pattern_of[n]).collect();
            prop_assert!(q.iter().all(|&x| x != p));
            q.sort_unstable();
            q.dedup();
            prop_assert_eq!(q.len(), n_negs);
        }
    }
}
