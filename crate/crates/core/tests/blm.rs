use std::collections::HashMap;
use std::path::PathBuf;

use chunkprobe::blm::*;
use chunkprobe::corpus::{parse_seed_file, parse_seed_str, Language, SeedRow, Split};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn data(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("data")
        .join(name)
}

fn agr_seeds() -> Vec<SeedRow> {
    parse_seed_file(&data("seeds_en.tsv"), Language::En).unwrap()
}

fn alt_seeds() -> Vec<AltSeedRow> {
    parse_alternation_file(&data("alternation_en.tsv")).unwrap()
}

fn one_instance(task: BlmTask, seeds: BlmSeeds<'_>, lex: LexType, seed: u64) -> BlmInstance {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    gen_instance(task, seeds, lex, "x".into(), &mut rng).unwrap()
}

fn answer<'a>(inst: &'a BlmInstance, label: &str) -> &'a BlmAnswer {
    inst.answers.iter().find(|a| a.label == label).unwrap()
}

#[test]
fn agreement_example_instance() {
    let rows: Vec<SeedRow> = agr_seeds().into_iter().take(1).collect();
    let inst = one_instance(
        BlmTask::Agreement,
        BlmSeeds::Agreement(&rows),
        LexType::I,
        0,
    );
    assert_eq!(
        inst.context[0].text,
        "The computer with the program is broken."
    );
    assert_eq!(
        inst.context[6].text,
        "The computer with the programs of the experiment is broken."
    );
    assert_eq!(
        inst.correct().text,
        "The computers with the programs of the experiment are broken."
    );
    assert_eq!(inst.correct().label, "Correct");
    assert_eq!(
        answer(&inst, "Coord").text,
        "The computer with the program and the experiment is broken."
    );
    assert_eq!(
        answer(&inst, "AE_V").text,
        "The computers with the programs of the experiments is broken."
    );
    assert_eq!(
        answer(&inst, "WNA").text,
        "The computer with the program is broken."
    );
}

#[test]
fn french_coordination_uses_et() {
    let fr = parse_seed_file(&data("seeds_fr.tsv"), Language::Fr).unwrap();
    let rows = &fr[..1];
    let inst = one_instance(BlmTask::Agreement, BlmSeeds::Agreement(rows), LexType::I, 0);
    assert_eq!(
        answer(&inst, "Coord").text,
        "L'ordinateur avec le programme et l'expérience est en panne."
    );
    assert_eq!(
        inst.correct().text,
        "Les ordinateurs avec les programmes de l'expérience sont en panne."
    );
}

#[test]
fn ae_v_breaks_only_verb_agreement() {
    let rows = agr_seeds();
    let inst = one_instance(
        BlmTask::Agreement,
        BlmSeeds::Agreement(&rows),
        LexType::III,
        5,
    );
    let lex = inst.lexicons[7];
    let ae = AgrSpec::parse(&answer(&inst, "AE_V").text, &rows, &lex).unwrap();
    let ok = AgrSpec::parse(&inst.correct().text, &rows, &lex).unwrap();
    assert!(!ae.is_grammatical());
    assert_eq!((ae.subj, ae.p1), (ok.subj, ok.p1));
    assert_ne!(ae.verb, ok.verb);
}

#[test]
fn alternation_group1_example() {
    let rows = alt_seeds();
    let first = &rows[..1];
    let inst = one_instance(
        BlmTask::AlternationG1,
        BlmSeeds::Alternation(first),
        LexType::I,
        0,
    );
    let ctx: Vec<&str> = inst.context.iter().map(|s| s.text.as_str()).collect();
    assert_eq!(
        ctx,
        [
            "The buyer can load the tools in bags.",
            "The tools were loaded by the buyer.",
            "The tools were loaded in bags by the buyer.",
            "The tools were loaded in bags.",
            "Bags were loaded by the buyer.",
            "Bags were loaded with the tools by the buyer.",
            "Bags were loaded with the tools.",
        ]
    );
    let expected = [
        ("Correct", "The buyer can load bags with the tools."),
        ("AgentAct", "The buyer was loaded bags with the tools."),
        ("Alt1", "The buyer can load bags the tools."),
        ("Alt2", "The buyer can load in bags with the tools."),
        ("NoEmb", "The buyer can load bags on sale."),
        ("LexPrep", "The buyer can load bags under the tools."),
        ("SSM1", "Bags can load the buyer with the tools."),
        ("SSM2", "The tools can load the buyer in bags."),
        ("AASSM", "Bags can load the tools in the buyer."),
    ];
    for (label, text) in expected {
        assert_eq!(answer(&inst, label).text, text, "{label}");
    }
}

#[test]
fn alternation_group2_swaps_roles() {
    let rows = alt_seeds();
    let inst = one_instance(
        BlmTask::AlternationG2,
        BlmSeeds::Alternation(&rows[..1]),
        LexType::I,
        0,
    );
    assert_eq!(
        inst.context[0].text,
        "The buyer can load bags with the tools."
    );
    assert_eq!(inst.context[0].structure, "NP-Agent Verb NP-Loc PP-Theme");
    assert_eq!(inst.correct().text, "The buyer can load the tools in bags.");
    assert_eq!(inst.correct().structure, "NP-Agent Verb NP-Theme PP-Loc");
    // theme moved into subject position with an active verb
    assert_eq!(
        answer(&inst, "SSM1").structure,
        "NP-Theme Verb NP-Agent PP-Loc"
    );
    assert_eq!(
        answer(&inst, "SSM1").text,
        "The tools can load the buyer in bags."
    );
    assert_eq!(
        answer(&inst, "SSM2").structure,
        "NP-Loc Verb NP-Agent PP-Theme"
    );
}

#[test]
fn label_sets() {
    let agr = BlmTask::Agreement.labels();
    for l in [
        "Correct", "Coord", "WNA", "AE_V", "AE_N1", "AE_N2", "WN1", "WN2",
    ] {
        assert!(agr.contains(&l));
    }
    assert_eq!(
        BlmTask::AlternationG1.labels(),
        ["Correct", "AgentAct", "Alt1", "Alt2", "NoEmb", "LexPrep", "SSM1", "SSM2", "AASSM"]
    );
}

#[test]
fn lexical_type_one_shares_everything() {
    let rows = agr_seeds();
    let inst = one_instance(
        BlmTask::Agreement,
        BlmSeeds::Agreement(&rows),
        LexType::I,
        3,
    );
    assert!(inst.lexicons.windows(2).all(|w| w[0] == w[1]));
}

#[test]
fn lexical_type_two_changes_one_slot_per_step() {
    let rows = agr_seeds();
    for seed in 0..20 {
        let inst = one_instance(
            BlmTask::Agreement,
            BlmSeeds::Agreement(&rows),
            LexType::II,
            seed,
        );
        for (i, w) in inst.lexicons.windows(2).enumerate() {
            assert_eq!(w[0].hamming(&w[1]), 1, "step {i}");
        }
        // the change is visible: consecutive context sentences differ in exactly one chunk's words
        for w in inst.context.windows(2) {
            assert_ne!(w[0].text, w[1].text);
        }
        let alt = alt_seeds();
        let inst = one_instance(
            BlmTask::AlternationG1,
            BlmSeeds::Alternation(&alt),
            LexType::II,
            seed,
        );
        assert!(inst.lexicons.windows(2).all(|w| w[0].hamming(&w[1]) == 1));
    }
}

#[test]
fn lexical_type_two_needs_two_rows() {
    let rows: Vec<SeedRow> = agr_seeds().into_iter().take(1).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let r = gen_instance(
        BlmTask::Agreement,
        BlmSeeds::Agreement(&rows),
        LexType::II,
        "x".into(),
        &mut rng,
    );
    assert!(matches!(
        r,
        Err(BlmError::InsufficientSeeds {
            needed: 2,
            got: 1,
            ..
        })
    ));
}

#[test]
fn lexical_type_three_varies_rows() {
    let rows = agr_seeds();
    let mut distinct_total = 0;
    for seed in 0..50 {
        let inst = one_instance(
            BlmTask::Agreement,
            BlmSeeds::Agreement(&rows),
            LexType::III,
            seed,
        );
        let mut ids: Vec<usize> = inst.lexicons[..7].iter().map(|l| l.0[0]).collect();
        assert!(inst.lexicons[..7]
            .iter()
            .all(|l| l.0.iter().all(|&r| r == l.0[0])));
        ids.sort_unstable();
        ids.dedup();
        assert!(ids.len() > 1);
        distinct_total += ids.len();
    }
    // 7 draws from 20 rows: about 6.0 distinct on average
    let mean = distinct_total as f64 / 50.0;
    assert!(mean > 5.5, "{mean}");
}

#[test]
fn wrong_seed_kind_is_rejected() {
    let rows = agr_seeds();
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    assert!(gen_instance(
        BlmTask::AlternationG1,
        BlmSeeds::Agreement(&rows),
        LexType::I,
        "x".into(),
        &mut rng
    )
    .is_err());
}

#[test]
fn table_shapes_at_configured_scale() {
    let rows = agr_seeds();
    let cfg = BlmConfig {
        task: BlmTask::Agreement,
        lex_types: vec![LexType::I],
        ..BlmConfig::default()
    };
    let inst = generate_blm(BlmSeeds::Agreement(&rows), &cfg).unwrap();
    let count = |s: Split| inst.iter().filter(|i| i.split == s).count();
    assert_eq!(
        (count(Split::Train) + count(Split::Dev), count(Split::Test)),
        (2000, 252)
    );
    assert_eq!(count(Split::Dev), 400);

    let alt = alt_seeds();
    let cfg = BlmConfig {
        task: BlmTask::AlternationG1,
        lex_types: vec![LexType::II],
        ..BlmConfig::default()
    };
    let inst = generate_blm(BlmSeeds::Alternation(&alt), &cfg).unwrap();
    let count = |s: Split| inst.iter().filter(|i| i.split == s).count();
    assert_eq!(
        (count(Split::Train) + count(Split::Dev), count(Split::Test)),
        (2000, 1500)
    );
}

#[test]
fn small_pool_splits_ninety_ten_only() {
    let rows = agr_seeds();
    let cfg = BlmConfig {
        lex_types: vec![LexType::III],
        pool: Some(100),
        ..BlmConfig::default()
    };
    let inst = generate_blm(BlmSeeds::Agreement(&rows), &cfg).unwrap();
    let count = |s: Split| inst.iter().filter(|i| i.split == s).count();
    assert_eq!(count(Split::Test), 10);
    assert_eq!(count(Split::Train) + count(Split::Dev), 90);
}

fn check_invariants(inst: &BlmInstance, seeds: BlmSeeds<'_>) {
    assert_eq!(inst.context.len(), 7);
    assert_eq!(
        inst.answers.iter().filter(|a| a.label == "Correct").count(),
        1
    );
    assert_eq!(inst.answers[inst.correct_index].label, "Correct");
    let mut labels: Vec<&str> = inst.answers.iter().map(|a| a.label.as_str()).collect();
    labels.sort_unstable();
    labels.dedup();
    assert_eq!(labels.len(), inst.answers.len());
    let lex = inst.lexicons[7];
    for a in &inst.answers {
        assert_eq!(
            invert_label(inst.task, seeds, &lex, &a.text),
            Some(a.label.as_str()),
            "{}",
            a.text
        );
    }
    if let BlmSeeds::Agreement(rows) = seeds {
        for (s, l) in inst.context.iter().zip(&inst.lexicons) {
            assert!(
                AgrSpec::parse(&s.text, rows, l).unwrap().is_grammatical(),
                "{}",
                s.text
            );
        }
        let correct = AgrSpec::parse(&inst.correct().text, rows, &lex).unwrap();
        for label in ["WN1", "WN2"] {
            let wn = AgrSpec::parse(&answer(inst, label).text, rows, &lex).unwrap();
            assert!(wn.is_grammatical(), "{label}");
            assert_ne!(wn, correct, "{label}");
            assert_ne!(wn.structure(), correct.structure());
        }
    }
}

#[test]
fn answer_sets_are_well_formed() {
    let rows = agr_seeds();
    let alt = alt_seeds();
    for lex in LexType::ALL {
        for inst in gen_pool(BlmTask::Agreement, BlmSeeds::Agreement(&rows), lex, 50, 1).unwrap() {
            check_invariants(&inst, BlmSeeds::Agreement(&rows));
        }
        for task in [BlmTask::AlternationG1, BlmTask::AlternationG2] {
            for inst in gen_pool(task, BlmSeeds::Alternation(&alt), lex, 50, 1).unwrap() {
                check_invariants(&inst, BlmSeeds::Alternation(&alt));
            }
        }
    }
}

#[test]
fn sentence_ids_determine_text_and_structure() {
    let rows = agr_seeds();
    let pool = gen_pool(
        BlmTask::Agreement,
        BlmSeeds::Agreement(&rows),
        LexType::II,
        300,
        2,
    )
    .unwrap();
    let mut seen: HashMap<String, (String, String)> = HashMap::new();
    for inst in &pool {
        for s in &inst.context {
            let v = seen
                .entry(s.sentence_id.clone())
                .or_insert((s.text.clone(), s.structure.clone()));
            assert_eq!(*v, (s.text.clone(), s.structure.clone()));
        }
        for a in &inst.answers {
            let v = seen
                .entry(a.sentence_id.clone())
                .or_insert((a.text.clone(), a.structure.clone()));
            assert_eq!(*v, (a.text.clone(), a.structure.clone()));
        }
    }
}

#[test]
fn generation_is_byte_reproducible() {
    let rows = agr_seeds();
    let cfg = BlmConfig {
        pool: Some(60),
        seed: 11,
        ..BlmConfig::default()
    };
    let mut files = Vec::new();
    for _ in 0..2 {
        let dir = tempfile::tempdir().unwrap();
        let inst = generate_blm(BlmSeeds::Agreement(&rows), &cfg).unwrap();
        let m = BlmManifest::new(&inst, rows.len(), &cfg, serde_json::to_value(&cfg).unwrap());
        write_blm(dir.path(), &inst, &m).unwrap();
        assert_eq!(read_blm(dir.path()).unwrap(), inst);
        let read = |f: &str| std::fs::read(dir.path().join(f)).unwrap();
        files.push((
            read(INSTANCES_FILE),
            read(SENTENCES_FILE),
            read(MANIFEST_FILE),
        ));
    }
    assert_eq!(files[0], files[1]);
}

#[test]
fn alternation_seed_parse_errors() {
    let header = "Agent\tAgent_num\tVerb\tPass_sg\tPass_pl\tTheme\tTheme_num\tTheme_prep\tLoc\tLoc_num\tLoc_prep\tAgent_prep\tWrong_prep\tDistractor_pp\n";
    let bad_num = format!("{header}a\tx\tv\tw\tws\tt\tp\twith\tl\tp\tin\tby\tunder\ton sale\n");
    assert!(matches!(
        parse_alternation_str(&bad_num),
        Err(BlmError::Parse { line: 2, .. })
    ));
    let empty = format!("{header}a\ts\tv\tw\tws\tt\tp\twith\tl\tp\tin\tby\tunder\t\n");
    assert!(matches!(
        parse_alternation_str(&empty),
        Err(BlmError::Parse { line: 2, .. })
    ));
    assert!(parse_alternation_str("").unwrap().is_empty());
}

#[test]
fn corpus_and_blm_share_the_seed_format() {
    let text = std::fs::read_to_string(data("seeds_en.tsv")).unwrap();
    assert_eq!(parse_seed_str(&text, Language::En).unwrap(), agr_seeds());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn every_instance_has_one_invertible_correct_answer(seed in any::<u64>(), lex in 0usize..3, task in 0usize..3) {
        let lex = LexType::ALL[lex];
        let rows = agr_seeds();
        let alt = alt_seeds();
        let (task, seeds) = match task {
            0 => (BlmTask::Agreement, BlmSeeds::Agreement(&rows)),
            1 => (BlmTask::AlternationG1, BlmSeeds::Alternation(&alt)),
            _ => (BlmTask::AlternationG2, BlmSeeds::Alternation(&alt)),
        };
        let inst = one_instance(task, seeds, lex, seed);
        check_invariants(&inst, seeds);
    }
}
