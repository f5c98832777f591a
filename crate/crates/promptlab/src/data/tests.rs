use super::synth::{synth_corpus, SynthConfig};
use super::*;

fn example(pair_id: &str, language: &str, label: Label) -> NliExample {
    NliExample {
        pair_id: pair_id.to_string(),
        language: language.to_string(),
        label,
        premise: format!("premise of {pair_id} in {language}"),
        hypothesis: format!("hypothesis of {pair_id} in {language}"),
    }
}

fn tiny_dataset(per_class: usize, languages: &[&str]) -> Dataset {
    let build = |split: &str, enforce: bool| {
        let mut examples = Vec::new();
        let mut idx = 0;
        for label in Label::ALL {
            for _ in 0..per_class {
                let id = format!("{split}-{idx:03}");
                idx += 1;
                for lang in languages {
                    examples.push(example(&id, lang, label));
                }
            }
        }
        ParallelCorpus::from_examples(split, examples, enforce).unwrap()
    };
    Dataset {
        train: build("train", false),
        dev: build("dev", true),
        test: build("test", true),
    }
}

#[test]
fn complete_corpus_loads() {
    let mut examples = Vec::new();
    for id in ["p1", "p2", "p3"] {
        for lang in ["EN", "TR"] {
            examples.push(example(id, lang, Label::Neutral));
        }
    }
    let corpus = ParallelCorpus::from_examples("test", examples, true).unwrap();
    assert_eq!(corpus.len(), 6);
    assert_eq!(corpus.languages().collect::<Vec<_>>(), vec!["EN", "TR"]);
}

#[test]
fn missing_translation_lists_offenders() {
    let examples = vec![
        example("p1", "EN", Label::Neutral),
        example("p1", "TR", Label::Neutral),
        example("p2", "EN", Label::Neutral),
    ];
    let err = ParallelCorpus::from_examples("dev", examples, true).unwrap_err();
    let msg = err.to_string();
    assert!(msg.contains("p2/TR"), "unhelpful error: {msg}");
}

#[test]
fn unknown_label_reports_line_number() {
    let tsv = "pair_id\tlanguage\tlabel\tpremise\thypothesis\np1\tEN\tmaybe\ta\tb\n";
    let err = ParallelCorpus::from_tsv("test", "test.tsv", tsv, false).unwrap_err();
    let msg = err.to_string();
    assert!(msg.contains("line 2") && msg.contains("maybe"), "{msg}");
}

#[test]
fn label_disagreement_rejected() {
    let mut a = example("p1", "EN", Label::Neutral);
    a.label = Label::Entailment;
    let b = example("p1", "TR", Label::Neutral);
    let err = ParallelCorpus::from_examples("dev", vec![a, b], false).unwrap_err();
    assert!(matches!(err, DataError::LabelDisagreement { .. }));
}

#[test]
fn tsv_round_trip() {
    let corpus = tiny_dataset(2, &["EN", "TR"]).test;
    let parsed = ParallelCorpus::from_tsv("test", "t.tsv", &corpus.to_tsv(), true).unwrap();
    assert_eq!(parsed.to_tsv(), corpus.to_tsv());
}

#[test]
fn k2_gives_six_train_and_six_dev() {
    let ds = tiny_dataset(5, &["EN", "TR"]);
    let split = sample_few_shot(&ds, "EN", 2, 1).unwrap();
    assert_eq!(split.train.len(), 6);
    assert_eq!(split.dev.len(), 6);
    for label in Label::ALL {
        assert_eq!(split.train.iter().filter(|e| e.label == label).count(), 2);
        assert_eq!(split.dev.iter().filter(|e| e.label == label).count(), 2);
    }
}

#[test]
fn same_seed_same_pair_ids() {
    let ds = tiny_dataset(8, &["EN"]);
    let a = sample_few_shot(&ds, "EN", 3, 4).unwrap();
    let b = sample_few_shot(&ds, "EN", 3, 4).unwrap();
    assert_eq!(a, b);
    let c = sample_few_shot(&ds, "EN", 3, 5).unwrap();
    assert_ne!(a, c);
}

#[test]
fn forced_sample_when_exactly_k_available() {
    let ds = tiny_dataset(1, &["EN"]);
    let split = sample_few_shot(&ds, "EN", 1, 9).unwrap();
    assert_eq!(split.train.len(), 3);
}

#[test]
fn insufficient_examples_names_class_and_count() {
    let ds = tiny_dataset(2, &["EN"]);
    let err = sample_few_shot(&ds, "EN", 3, 1).unwrap_err();
    let msg = err.to_string();
    assert!(msg.contains("entailment") && msg.contains('2') && msg.contains('3'), "{msg}");
}

#[test]
fn train_and_dev_pair_ids_disjoint() {
    let ds = tiny_dataset(6, &["EN"]);
    let split = sample_few_shot(&ds, "EN", 4, 2).unwrap();
    for t in &split.train {
        assert!(split.dev.iter().all(|d| d.pair_id != t.pair_id));
    }
}

#[test]
fn align_round_trips_and_preserves_ids_and_labels() {
    let ds = tiny_dataset(4, &["EN", "TR"]);
    let split = sample_few_shot(&ds, "EN", 2, 3).unwrap();
    let tr = align_translations(&split, &ds, "TR").unwrap();
    assert_eq!(tr.language, "TR");
    for (a, b) in split.train.iter().zip(&tr.train) {
        assert_eq!(a.pair_id, b.pair_id);
        assert_eq!(a.label, b.label);
        assert_ne!(a.premise, b.premise);
    }
    let back = align_translations(&tr, &ds, "EN").unwrap();
    assert_eq!(back, split);
}

#[test]
fn align_missing_language_fails() {
    let ds = tiny_dataset(4, &["EN"]);
    let split = sample_few_shot(&ds, "EN", 1, 3).unwrap();
    assert!(align_translations(&split, &ds, "TR").is_err());
}

#[test]
fn synth_shapes_and_balance() {
    let config = SynthConfig {
        languages: 3,
        train_pairs_per_class: 100,
        dev_pairs_per_class: 10,
        test_pairs_per_class: 10,
        words_per_language: 40,
        seed: 7,
    };
    let out = synth_corpus(&config).unwrap();
    // 300 pair ids × 3 languages per split.
    assert_eq!(out.dataset.train.len(), 900);
    assert_eq!(out.dataset.train.pair_ids().len(), 300);
    for label in Label::ALL {
        let count = out
            .dataset
            .train
            .in_language("l0")
            .filter(|e| e.label == label)
            .count();
        assert_eq!(count, 100);
    }
    assert_eq!(out.languages, vec!["l0", "l1", "l2"]);
    assert_eq!(out.packs.len(), 3);
}

#[test]
fn cipher_round_trips_token_for_token() {
    let out = synth_corpus(&SynthConfig {
        train_pairs_per_class: 5,
        dev_pairs_per_class: 2,
        test_pairs_per_class: 2,
        words_per_language: 30,
        ..SynthConfig::default()
    })
    .unwrap();
    for id in out.dataset.train.pair_ids() {
        let l1 = out.dataset.train.get(&id, "l1").unwrap();
        let l0 = out.dataset.train.get(&id, "l0").unwrap();
        assert_eq!(out.cipher_text(1, 0, &l1.premise).unwrap(), l0.premise);
        assert_eq!(out.cipher_text(1, 0, &l1.hypothesis).unwrap(), l0.hypothesis);
        assert_eq!(out.cipher_text(0, 1, &l0.premise).unwrap(), l1.premise);
    }
}

#[test]
fn synth_rejects_tiny_vocabulary() {
    let err = synth_corpus(&SynthConfig { words_per_language: 5, ..SynthConfig::default() }).unwrap_err();
    assert!(matches!(err, DataError::VocabTooSmall { .. }));
}

#[test]
fn synth_label_rules_hold() {
    let out = synth_corpus(&SynthConfig {
        train_pairs_per_class: 30,
        dev_pairs_per_class: 2,
        test_pairs_per_class: 2,
        words_per_language: 40,
        ..SynthConfig::default()
    })
    .unwrap();
    for ex in out.dataset.train.in_language("l0") {
        let premise: Vec<&str> = ex.premise.split_whitespace().collect();
        let hyp: Vec<&str> = ex.hypothesis.split_whitespace().collect();
        let has_neg = hyp.iter().any(|w| ["not", "never"].contains(w));
        let unmatched = hyp
            .iter()
            .filter(|w| !["not", "never", "."].contains(*w))
            .any(|w| !premise.contains(w));
        match ex.label {
            Label::Entailment => {
                assert!(!has_neg && !unmatched, "not a subsequence restatement: {ex:?}")
            }
            Label::Contradiction => assert!(has_neg, "missing negation marker: {ex:?}"),
            Label::Neutral => assert!(!has_neg && unmatched, "no unverifiable token: {ex:?}"),
        }
    }
}

#[test]
fn fixtures_have_the_documented_labels() {
    let fx = fixtures();
    assert_eq!(fx.len(), 3);
    assert_eq!(fx[0].label, Label::Contradiction);
    assert!(fx[0].hypothesis.contains("wasn't"));
    assert_eq!(fx[1].label, Label::Neutral);
    assert!(fx[1].hypothesis.contains("8pm"));
    assert_eq!(fx[2].label, Label::Entailment);
    assert!(fx[2].hypothesis.contains("talk soon"));
}

mod properties {
    use super::*;
    use proptest::prelude::*;

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]
        #[test]
        fn stratification_holds(per_class in 1usize..12, k in 1usize..12, seed in 1u64..500) {
            prop_assume!(k <= per_class);
            let ds = tiny_dataset(per_class, &["EN"]);
            let split = sample_few_shot(&ds, "EN", k, seed).unwrap();
            for label in Label::ALL {
                prop_assert_eq!(split.train.iter().filter(|e| e.label == label).count(), k);
                prop_assert_eq!(split.dev.iter().filter(|e| e.label == label).count(), k);
            }
            // Without replacement: no duplicated pair id within train or dev.
            let mut ids: Vec<_> = split.train.iter().map(|e| &e.pair_id).collect();
            ids.sort();
            ids.dedup();
            prop_assert_eq!(ids.len(), 3 * k);
        }
    }
}
