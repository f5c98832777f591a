//! Synthetic multilingual NLI corpus.
//!
//! Sentences are generated in a base language of pseudo-words; every other
//! language is derived by a deterministic bijective token-substitution
//! cipher, so the corpus is parallel by construction. Punctuation and the
//! negation markers are mapped to themselves — the synthetic family shares
//! its closed-class anchors the way real multilingual vocabularies share
//! subwords, which is what makes crosslingual transfer possible for a model
//! pretrained on the mixed corpus.
//!
//! Labels follow fixed rules: an entailed hypothesis is an ordered
//! subsequence of the premise; a contradiction inserts a negation marker
//! into such a subsequence; a neutral hypothesis inserts a content word the
//! premise cannot verify.

use std::collections::{HashMap, HashSet};

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use super::{DataError, Dataset, Label, NliExample, ParallelCorpus};
use crate::rng::{self, Stream};

/// Tokens shared verbatim by every synthetic language.
pub const SHARED_TOKENS: [&str; 4] = [".", "?", "not", "never"];
const NEG_MARKERS: [&str; 2] = ["not", "never"];

const PREMISE_MIN: usize = 5;
const PREMISE_MAX: usize = 9;
/// Content words needed for the sentence rules to have room to move.
const MIN_WORDS: usize = 20;

#[derive(Debug, Clone)]
pub struct SynthConfig {
    pub languages: usize,
    pub train_pairs_per_class: usize,
    pub dev_pairs_per_class: usize,
    pub test_pairs_per_class: usize,
    pub words_per_language: usize,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            languages: 3,
            train_pairs_per_class: 300,
            dev_pairs_per_class: 60,
            test_pairs_per_class: 300,
            words_per_language: 120,
            seed: 7,
        }
    }
}

struct LangWords {
    content: Vec<String>,
    question: String,
    answer: String,
    verbalizer: [String; 3],
}

/// Generated dataset plus per-language prompt-pack sources and the cipher.
#[derive(Debug)]
pub struct SynthOutput {
    pub dataset: Dataset,
    pub languages: Vec<String>,
    /// `(language, pack file text)` pairs, parseable by the prompt module.
    pub packs: Vec<(String, String)>,
    to_base: Vec<HashMap<String, String>>,
    from_base: Vec<HashMap<String, String>>,
}

impl SynthOutput {
    /// Maps one token between languages through the cipher. Shared tokens
    /// map to themselves; unknown tokens yield `None`.
    pub fn cipher_token(&self, from: usize, to: usize, token: &str) -> Option<String> {
        if SHARED_TOKENS.contains(&token) {
            return Some(token.to_string());
        }
        let base = self.to_base[from].get(token)?;
        self.from_base[to].get(base).cloned()
    }

    /// Token-for-token translation of whitespace-separated text.
    pub fn cipher_text(&self, from: usize, to: usize, text: &str) -> Option<String> {
        let words: Option<Vec<String>> = text
            .split_whitespace()
            .map(|w| self.cipher_token(from, to, w))
            .collect();
        Some(words?.join(" "))
    }
}

/// Generates the parallel corpus, one prompt pack per language, and the
/// cipher tables.
pub fn synth_corpus(config: &SynthConfig) -> Result<SynthOutput, DataError> {
    if config.languages == 0 {
        return Err(DataError::NoLanguages);
    }
    if config.words_per_language < MIN_WORDS {
        return Err(DataError::VocabTooSmall {
            available: config.words_per_language,
            needed: MIN_WORDS,
        });
    }

    let words = generate_word_lists(config);
    let languages: Vec<String> = (0..config.languages).map(|k| format!("l{k}")).collect();

    let mut to_base: Vec<HashMap<String, String>> = Vec::new();
    let mut from_base: Vec<HashMap<String, String>> = Vec::new();
    for lang in &words {
        let mut fwd = HashMap::new();
        let mut back = HashMap::new();
        for (base_tok, lang_tok) in all_words(&words[0]).zip(all_words(lang)) {
            fwd.insert(base_tok.to_string(), lang_tok.to_string());
            back.insert(lang_tok.to_string(), base_tok.to_string());
        }
        from_base.push(fwd);
        to_base.push(back);
    }

    let gen_split = |name: &str, pairs_per_class: usize, salt: u64| -> Result<ParallelCorpus, DataError> {
        let mut r = rng::rng_salted(config.seed, Stream::Synth, salt);
        let mut examples = Vec::new();
        let mut pair_idx = 0usize;
        for label in Label::ALL {
            for _ in 0..pairs_per_class {
                let pair_id = format!("{name}-{pair_idx:05}");
                pair_idx += 1;
                let (premise, hypothesis) = generate_pair(&mut r, &words[0].content, label);
                for (k, lang) in languages.iter().enumerate() {
                    let map = |tokens: &[String]| -> String {
                        tokens
                            .iter()
                            .map(|t| {
                                if SHARED_TOKENS.contains(&t.as_str()) {
                                    t.clone()
                                } else {
                                    from_base[k][t].clone()
                                }
                            })
                            .collect::<Vec<_>>()
                            .join(" ")
                    };
                    examples.push(NliExample {
                        pair_id: pair_id.clone(),
                        language: lang.clone(),
                        label,
                        premise: map(&premise),
                        hypothesis: map(&hypothesis),
                    });
                }
            }
        }
        ParallelCorpus::from_examples(name, examples, salt != 0)
    };

    let dataset = Dataset {
        train: gen_split("train", config.train_pairs_per_class, 0)?,
        dev: gen_split("dev", config.dev_pairs_per_class, 1)?,
        test: gen_split("test", config.test_pairs_per_class, 2)?,
    };

    let packs = languages
        .iter()
        .zip(&words)
        .map(|(lang, w)| (lang.clone(), pack_source(lang, w)))
        .collect();

    Ok(SynthOutput { dataset, languages, packs, to_base, from_base })
}

fn all_words(lang: &LangWords) -> impl Iterator<Item = &str> {
    lang.content
        .iter()
        .map(|s| s.as_str())
        .chain([lang.question.as_str(), lang.answer.as_str()])
        .chain(lang.verbalizer.iter().map(|s| s.as_str()))
}

fn generate_word_lists(config: &SynthConfig) -> Vec<LangWords> {
    let mut used: HashSet<String> = SHARED_TOKENS.iter().map(|s| s.to_string()).collect();
    let mut out = Vec::new();
    for k in 0..config.languages {
        let mut r = rng::rng_salted(config.seed, Stream::Synth, 100 + k as u64);
        if k == 0 {
            for w in ["Question:", "Answer:", "yes", "no", "maybe"] {
                used.insert(w.to_string());
            }
        }
        let content = (0..config.words_per_language)
            .map(|_| fresh_word(&mut r, &mut used, false))
            .collect();
        let (question, answer, verbalizer) = if k == 0 {
            (
                "Question:".to_string(),
                "Answer:".to_string(),
                ["yes".to_string(), "no".to_string(), "maybe".to_string()],
            )
        } else {
            (
                fresh_word(&mut r, &mut used, true),
                fresh_word(&mut r, &mut used, true),
                [
                    fresh_word(&mut r, &mut used, false),
                    fresh_word(&mut r, &mut used, false),
                    fresh_word(&mut r, &mut used, false),
                ],
            )
        };
        out.push(LangWords { content, question, answer, verbalizer });
    }
    out
}

fn fresh_word(r: &mut ChaCha8Rng, used: &mut HashSet<String>, scaffold: bool) -> String {
    const CONSONANTS: [&str; 14] = ["b", "d", "f", "g", "k", "l", "m", "n", "p", "r", "s", "t", "v", "z"];
    const VOWELS: [&str; 5] = ["a", "e", "i", "o", "u"];
    loop {
        let syllables = r.gen_range(2..=3);
        let mut w = String::new();
        for _ in 0..syllables {
            w.push_str(CONSONANTS[r.gen_range(0..CONSONANTS.len())]);
            w.push_str(VOWELS[r.gen_range(0..VOWELS.len())]);
        }
        if scaffold {
            let mut chars = w.chars();
            let first = chars.next().unwrap().to_uppercase().to_string();
            w = format!("{first}{}:", chars.as_str());
        }
        if used.insert(w.clone()) {
            return w;
        }
    }
}

/// Premise and hypothesis token lists in the base language, terminal
/// punctuation included.
fn generate_pair(r: &mut ChaCha8Rng, content: &[String], label: Label) -> (Vec<String>, Vec<String>) {
    let len = r.gen_range(PREMISE_MIN..=PREMISE_MAX);
    let premise_words: Vec<String> = rng::sample_without_replacement(r, content.len(), len)
        .into_iter()
        .map(|i| content[i].clone())
        .collect();

    // Ordered subsequence keeping at least two words.
    let drop = r.gen_range(1..=3.min(len - 2));
    let dropped: HashSet<usize> = rng::sample_without_replacement(r, len, drop).into_iter().collect();
    let mut hyp: Vec<String> = premise_words
        .iter()
        .enumerate()
        .filter(|(i, _)| !dropped.contains(i))
        .map(|(_, w)| w.clone())
        .collect();

    match label {
        Label::Entailment => {}
        Label::Contradiction => {
            let marker = NEG_MARKERS[r.gen_range(0..NEG_MARKERS.len())];
            let at = r.gen_range(0..=hyp.len());
            hyp.insert(at, marker.to_string());
        }
        Label::Neutral => {
            let extra = loop {
                let w = &content[r.gen_range(0..content.len())];
                if !premise_words.contains(w) {
                    break w.clone();
                }
            };
            let at = r.gen_range(0..=hyp.len());
            hyp.insert(at, extra);
        }
    }

    let mut premise = premise_words;
    premise.push(".".to_string());
    hyp.push(".".to_string());
    (premise, hyp)
}

fn pack_source(lang: &str, w: &LangWords) -> String {
    let q = &w.question;
    let a = &w.answer;
    format!(
        "# synthetic prompt pack\n\
         language: {lang}\n\
         verbalizer.entailment: {}\n\
         verbalizer.contradiction: {}\n\
         verbalizer.neutral: {}\n\
         template.DP: {{premise}} . {q} {{hypothesis}} ? {a} {{mask}} .\n\
         template.SP: {{premise}} . {{hypothesis}} ? {{soft:1}}{{soft:2}}{{soft:3}}{{soft:4}} {{mask}} .\n\
         template.MP: {{premise}} . {q} {{hypothesis}} ? {{soft:1}}{{soft:2}}{{soft:3}}{{soft:4}} {a} {{mask}} .\n",
        w.verbalizer[0], w.verbalizer[1], w.verbalizer[2]
    )
}
