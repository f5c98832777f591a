use super::*;
use crate::data::fixtures;
use crate::rng;
use rand::Rng;

const DP_EN: &str = "{premise} . Question: {hypothesis} ? Answer: {mask} .";
const SP_EN: &str = "{premise} . {hypothesis} ? {soft:1}{soft:2}{soft:3}{soft:4} {mask} .";

fn lit(s: &str) -> Segment {
    Segment::Literal(s.to_string())
}

#[test]
fn dp_template_segments() {
    let t = PromptTemplate::parse(DP_EN).unwrap();
    assert_eq!(
        t.segments(),
        &[
            Segment::Premise,
            lit(" . Question: "),
            Segment::Hypothesis,
            lit(" ? Answer: "),
            Segment::Mask,
            lit(" ."),
        ]
    );
    assert_eq!(t.soft_count(), 0);
}

#[test]
fn sp_template_has_four_soft_tokens() {
    let t = PromptTemplate::parse(SP_EN).unwrap();
    assert_eq!(t.soft_count(), 4);
}

#[test]
fn missing_mask_is_an_error() {
    assert_eq!(PromptTemplate::parse("no mask here").unwrap_err(), TemplateError::MissingMask);
}

#[test]
fn second_mask_is_an_error() {
    let err = PromptTemplate::parse("{mask} and {mask}").unwrap_err();
    assert!(matches!(err, TemplateError::MultipleMasks { offset: 11 }));
}

#[test]
fn malformed_placeholder_reports_byte_offset() {
    let err = PromptTemplate::parse("ab {nope} {mask}").unwrap_err();
    assert_eq!(
        err,
        TemplateError::UnknownPlaceholder { offset: 3, name: "nope".to_string() }
    );
    let err = PromptTemplate::parse("x {premise").unwrap_err();
    assert!(matches!(err, TemplateError::Unclosed { offset: 2 }));
}

#[test]
fn non_contiguous_soft_indices_rejected() {
    let err = PromptTemplate::parse("{soft:1}{soft:3} {mask}").unwrap_err();
    assert!(matches!(err, TemplateError::NonContiguousSoft { .. }));
    let err = PromptTemplate::parse("{soft:1}{soft:1} {mask}").unwrap_err();
    assert!(matches!(err, TemplateError::NonContiguousSoft { .. }));
}

#[test]
fn escapes_round_trip() {
    let t = PromptTemplate::parse(r"a \{literal\} \\ {mask}").unwrap();
    assert_eq!(t.segments()[0], lit(r"a {literal} \ "));
    assert_eq!(t.render(), r"a \{literal\} \\ {mask}");
    assert_eq!(PromptTemplate::parse(&t.render()).unwrap(), t);
}

#[test]
fn parse_render_identity_on_random_canonical_templates() {
    let mut r = rng::rng(41, rng::Stream::Synth);
    let words = ["alpha", "beta?", "x y", ". ,", "Frage:", "答案"];
    for _ in 0..1000 {
        let mut segments = Vec::new();
        let soft_total = r.gen_range(0..4usize);
        let mut pending: Vec<Segment> = (1..=soft_total).map(Segment::Soft).collect();
        pending.push(Segment::Mask);
        if r.gen_bool(0.8) {
            pending.push(Segment::Premise);
        }
        if r.gen_bool(0.8) {
            pending.push(Segment::Hypothesis);
        }
        rng::shuffle(&mut r, &mut pending);
        // Interleave literals so no two literals are adjacent (canonical form).
        for seg in pending {
            if r.gen_bool(0.7) {
                segments.push(lit(words[r.gen_range(0..words.len())]));
            }
            segments.push(seg);
        }
        if r.gen_bool(0.5) {
            segments.push(lit(words[r.gen_range(0..words.len())]));
        }
        // Soft slots must be contiguous from 1 in any order; they already are.
        let template = PromptTemplate { segments, soft_count: soft_total };
        let reparsed = PromptTemplate::parse(&template.render()).unwrap();
        assert_eq!(reparsed, template, "source: {}", template.render());
    }
}

fn en_vocab() -> Vocabulary {
    Vocabulary::build(
        [
            "They whinnied, eyes wide",
            "Their eyes were open wide",
            "Question: Answer: ? .",
            "yes no maybe",
            "a b c d e f g h i j k l",
        ],
        256,
        4,
    )
    .unwrap()
}

#[test]
fn dp_assembly_reproduces_the_reference_scaffold() {
    let vocab = en_vocab();
    let t = PromptTemplate::parse(DP_EN).unwrap();
    let a = assemble(&t, "They whinnied, eyes wide", "Their eyes were open wide", &vocab, 256).unwrap();
    assert_eq!(a.ids[0], BOS);
    assert_eq!(*a.ids.last().unwrap(), EOS);
    let body = vocab.decode(&a.ids[1..a.ids.len() - 1]);
    assert_eq!(
        body,
        "They whinnied, eyes wide . Question: Their eyes were open wide ? Answer: <mask> ."
    );
    assert_eq!(a.ids[a.mask_pos], MASK);
    assert!(a.soft_positions.is_empty());
}

#[test]
fn tr_pack_uses_translated_literals() {
    let pack = PromptPack::parse(
        "language: TR\n\
         verbalizer.entailment: Evet\n\
         verbalizer.contradiction: hiçbir\n\
         verbalizer.neutral: belki\n\
         template.DP: {premise} . Soru: {hypothesis} ? Cevap: {mask} .\n\
         template.SP: {premise} . {hypothesis} ? {soft:1}{soft:2}{soft:3}{soft:4} {mask} .\n\
         template.MP: {premise} . Soru: {hypothesis} ? {soft:1}{soft:2}{soft:3}{soft:4} Cevap: {mask} .\n",
    )
    .unwrap();
    let rendered = pack.dp.render();
    assert!(rendered.contains("Soru:") && rendered.contains("Cevap:"));
    assert_eq!(pack.verbalizer.words, ["Evet", "hiçbir", "belki"]);
}

#[test]
fn code_switched_assembly_keeps_scaffold_ids() {
    let vocab = Vocabulary::build(
        ["Question: Answer: ? .", "en_a en_b en_c", "tr_a tr_b tr_c"],
        64,
        4,
    )
    .unwrap();
    let t = PromptTemplate::parse(DP_EN).unwrap();
    let en = assemble(&t, "en_a en_b", "en_c", &vocab, 64).unwrap();
    let tr = assemble(&t, "tr_a tr_b", "tr_c", &vocab, 64).unwrap();
    // Same positions hold the scaffold because slot contents have equal
    // lengths; the scaffold ids must be identical.
    let en_scaffold: Vec<u32> = scaffold_ids(&en, &vocab);
    let tr_scaffold: Vec<u32> = scaffold_ids(&tr, &vocab);
    assert_eq!(en_scaffold, tr_scaffold);
    assert!(!en_scaffold.is_empty());

    fn scaffold_ids(a: &AssembledExample, vocab: &Vocabulary) -> Vec<u32> {
        let slot: Vec<u32> = ["en_a", "en_b", "en_c", "tr_a", "tr_b", "tr_c"]
            .iter()
            .map(|w| vocab.encode(w)[0])
            .collect();
        a.ids.iter().copied().filter(|id| !slot.contains(id)).collect()
    }
}

#[test]
fn truncation_cuts_premise_end_first_then_hypothesis() {
    let vocab = Vocabulary::build(["p1 p2 p3 p4 h1 h2 h3 . Q: A:"], 64, 0).unwrap();
    let t = PromptTemplate::parse("{premise} Q: {hypothesis} A: {mask}").unwrap();
    // Scaffold: bos Q: A: mask eos = 5 tokens.
    let a = assemble(&t, "p1 p2 p3 p4", "h1 h2 h3", &vocab, 9).unwrap();
    let body = vocab.decode(&a.ids[1..a.ids.len() - 1]);
    assert_eq!(body, "p1 Q: h1 h2 h3 A: <mask>");
    // Premise exhausted, hypothesis shrinks next.
    let a = assemble(&t, "p1 p2 p3 p4", "h1 h2 h3", &vocab, 6).unwrap();
    let body = vocab.decode(&a.ids[1..a.ids.len() - 1]);
    assert_eq!(body, "Q: h1 A: <mask>");
}

#[test]
fn oversized_scaffold_is_an_error() {
    let vocab = Vocabulary::build(["w1 w2 w3 w4 w5"], 64, 0).unwrap();
    let t = PromptTemplate::parse("w1 w2 w3 w4 w5 {premise} {hypothesis} {mask}").unwrap();
    let err = assemble(&t, "x", "y", &vocab, 6).unwrap_err();
    assert!(matches!(err, AssembleError::ScaffoldTooLong { scaffold: 8, max_len: 6 }));
}

#[test]
fn fixtures_assemble_under_the_en_template() {
    let fx = fixtures();
    let vocab = Vocabulary::build(
        fx.iter()
            .flat_map(|e| [e.premise.clone(), e.hypothesis.clone()])
            .chain(["Question: Answer: ? .".to_string()]),
        512,
        4,
    )
    .unwrap();
    let t = PromptTemplate::parse(DP_EN).unwrap();
    for ex in &fx {
        let a = assemble_nli(&t, ex, &vocab, 256).unwrap();
        assert_eq!(a.gold, Some(ex.label));
        assert_eq!(a.ids.iter().filter(|&&id| id == MASK).count(), 1);
    }
}

fn resolved(vocab: &Vocabulary) -> ResolvedVerbalizer {
    Verbalizer {
        language: "EN".to_string(),
        words: ["yes".to_string(), "no".to_string(), "maybe".to_string()],
    }
    .resolve(vocab)
    .unwrap()
}

#[test]
fn max_at_yes_predicts_entailment() {
    let vocab = en_vocab();
    let rv = resolved(&vocab);
    let mut logits = vec![0.0f64; vocab.size()];
    logits[rv.ids[0] as usize] = 3.0;
    let scores = cloze_scores(&logits, &rv);
    assert_eq!(predict(&scores), Label::Entailment);
}

#[test]
fn all_equal_scores_tie_to_lowest_label_index() {
    assert_eq!(predict(&[0.5f64, 0.5, 0.5]), Label::Entailment);
    assert_eq!(predict(&[0.1f64, 0.7, 0.7]), Label::Contradiction);
}

#[test]
fn adding_a_constant_shifts_nothing() {
    let vocab = en_vocab();
    let rv = resolved(&vocab);
    let mut r = rng::rng(17, rng::Stream::Synth);
    for _ in 0..100 {
        let logits: Vec<f64> = (0..vocab.size()).map(|_| r.gen_range(-4.0..4.0)).collect();
        let shifted: Vec<f64> = logits.iter().map(|v| v + 2.75).collect();
        let a = predict(&cloze_scores(&logits, &rv));
        let b = predict(&cloze_scores(&shifted, &rv));
        assert_eq!(a, b);
    }
}

#[test]
fn uniform_scores_lose_ln3() {
    let loss = cloze_loss(&[0.0f64, 0.0, 0.0], Label::Neutral);
    assert!((loss - 3.0f64.ln()).abs() < 1e-12);
}

#[test]
fn confident_correct_score_is_near_zero() {
    let loss = cloze_loss(&[10.0f64, -10.0, -10.0], Label::Entailment);
    let expected = (1.0 + 2.0 * (-20.0f64).exp()).ln(); // ≈ 4.1e-9
    assert!((loss - expected).abs() < 1e-15, "{loss} vs {expected}");
    assert!(loss > 0.0 && loss < 1e-8);
}

#[test]
fn restricted_argmax_equals_full_softmax_argmax() {
    let vocab = en_vocab();
    let rv = resolved(&vocab);
    let mut r = rng::rng(23, rng::Stream::Synth);
    for _ in 0..1000 {
        let logits: Vec<f64> = (0..vocab.size()).map(|_| r.gen_range(-6.0..6.0)).collect();
        let restricted = predict(&cloze_scores(&logits, &rv));
        // Full-vocabulary softmax, then restrict the probabilities.
        let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let z: f64 = logits.iter().map(|v| (v - max).exp()).sum();
        let probs: Vec<f64> = logits.iter().map(|v| (v - max).exp() / z).collect();
        let full = predict(&cloze_scores(&probs, &rv));
        assert_eq!(restricted, full);
    }
}

#[test]
fn multi_token_verbalizer_rejected() {
    let vocab = Vocabulary::build(["evet yok bel ki"], 64, 0).unwrap();
    let v = Verbalizer {
        language: "TR".to_string(),
        words: ["evet".to_string(), "yok".to_string(), "bel ki".to_string()],
    };
    let err = v.resolve(&vocab).unwrap_err();
    assert!(matches!(err, PackError::NotSingleToken { .. }), "{err}");
}

#[test]
fn out_of_vocabulary_verbalizer_rejected() {
    let vocab = Vocabulary::build(["evet yok"], 64, 0).unwrap();
    let v = Verbalizer {
        language: "TR".to_string(),
        words: ["evet".to_string(), "yok".to_string(), "belki".to_string()],
    };
    assert!(v.resolve(&vocab).is_err());
}

#[test]
fn pack_missing_key_is_reported() {
    let err = PromptPack::parse("language: EN\n").unwrap_err();
    assert!(matches!(err, PackError::MissingKey { .. }));
}

#[test]
fn soft_positions_hold_pseudo_ids_in_index_order() {
    let vocab = en_vocab();
    let t = PromptTemplate::parse(SP_EN).unwrap();
    let a = assemble(&t, "a b", "c d", &vocab, 64).unwrap();
    assert_eq!(a.soft_positions.len(), 4);
    for (j, &pos) in a.soft_positions.iter().enumerate() {
        assert_eq!(a.ids[pos], vocab.pseudo_id(j + 1));
    }
}
