//! Translation-aligned NLI corpora and few-shot sampling.
//!
//! Corpora are TSV files (UTF-8, header row) with columns
//! `pair_id  language  label  premise  hypothesis`, one file per split.
//! Labels are the literal strings `entailment | contradiction | neutral`.
//! Dev and test splits must be parallel: every pair id present in every
//! declared language, with labels agreeing across languages.

pub mod synth;

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::path::Path;

use thiserror::Error;

use crate::rng::{self, Stream};

/// NLI class. The order (entailment, contradiction, neutral) is fixed
/// everywhere: label indices, verbalizer entries, tie-breaking.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Label {
    Entailment,
    Contradiction,
    Neutral,
}

impl Label {
    pub const ALL: [Label; 3] = [Label::Entailment, Label::Contradiction, Label::Neutral];

    pub fn index(self) -> usize {
        match self {
            Label::Entailment => 0,
            Label::Contradiction => 1,
            Label::Neutral => 2,
        }
    }

    pub fn from_index(i: usize) -> Label {
        Self::ALL[i]
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Label::Entailment => "entailment",
            Label::Contradiction => "contradiction",
            Label::Neutral => "neutral",
        }
    }

    pub fn parse(s: &str) -> Option<Label> {
        match s {
            "entailment" => Some(Label::Entailment),
            "contradiction" => Some(Label::Contradiction),
            "neutral" => Some(Label::Neutral),
            _ => None,
        }
    }
}

impl fmt::Display for Label {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// One premise–hypothesis pair in one language.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NliExample {
    pub pair_id: String,
    pub language: String,
    pub label: Label,
    pub premise: String,
    pub hypothesis: String,
}

#[derive(Debug, Error)]
pub enum DataError {
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("{file}, line {line}: {msg}")]
    Malformed { file: String, line: usize, msg: String },
    #[error("{split}: missing translations: {}{}", offenders.join(", "), if *truncated { ", …" } else { "" })]
    MissingTranslations {
        split: String,
        offenders: Vec<String>,
        truncated: bool,
    },
    #[error("{split}: labels disagree across languages for pair {pair_id}")]
    LabelDisagreement { split: String, pair_id: String },
    #[error("{split}: empty premise or hypothesis for pair {pair_id} ({language})")]
    EmptyText { split: String, pair_id: String, language: String },
    #[error("{split}: class {label} has {available} examples in {language}, need {needed}")]
    InsufficientExamples {
        split: String,
        label: Label,
        language: String,
        available: usize,
        needed: usize,
    },
    #[error("no translation of pair {pair_id} into {language}")]
    MissingTranslation { pair_id: String, language: String },
    #[error("synthetic corpus: vocabulary of {available} words per language cannot support the sentence rules (need ≥ {needed})")]
    VocabTooSmall { available: usize, needed: usize },
    #[error("synthetic corpus needs at least one language")]
    NoLanguages,
}

/// One split of a corpus, indexed by `(pair_id, language)`.
#[derive(Debug, Clone)]
pub struct ParallelCorpus {
    pub split: String,
    examples: BTreeMap<(String, String), NliExample>,
    languages: BTreeSet<String>,
}

impl ParallelCorpus {
    /// Validates and indexes `examples`. `enforce_parallel` additionally
    /// requires every pair id in every declared language (dev/test).
    pub fn from_examples(
        split: &str,
        examples: Vec<NliExample>,
        enforce_parallel: bool,
    ) -> Result<Self, DataError> {
        let mut map = BTreeMap::new();
        let mut languages = BTreeSet::new();
        let mut labels: BTreeMap<String, Label> = BTreeMap::new();
        for ex in examples {
            if ex.premise.trim().is_empty() || ex.hypothesis.trim().is_empty() {
                return Err(DataError::EmptyText {
                    split: split.to_string(),
                    pair_id: ex.pair_id,
                    language: ex.language,
                });
            }
            if let Some(&prev) = labels.get(&ex.pair_id) {
                if prev != ex.label {
                    return Err(DataError::LabelDisagreement {
                        split: split.to_string(),
                        pair_id: ex.pair_id,
                    });
                }
            } else {
                labels.insert(ex.pair_id.clone(), ex.label);
            }
            languages.insert(ex.language.clone());
            map.insert((ex.pair_id.clone(), ex.language.clone()), ex);
        }
        let corpus = ParallelCorpus { split: split.to_string(), examples: map, languages };
        if enforce_parallel {
            let mut offenders = Vec::new();
            for pair_id in corpus.pair_ids() {
                for lang in &corpus.languages {
                    if !corpus.examples.contains_key(&(pair_id.clone(), lang.clone())) {
                        offenders.push(format!("{pair_id}/{lang}"));
                    }
                }
            }
            if !offenders.is_empty() {
                let truncated = offenders.len() > 8;
                offenders.truncate(8);
                return Err(DataError::MissingTranslations {
                    split: split.to_string(),
                    offenders,
                    truncated,
                });
            }
        }
        Ok(corpus)
    }

    pub fn len(&self) -> usize {
        self.examples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.examples.is_empty()
    }

    pub fn languages(&self) -> impl Iterator<Item = &str> {
        self.languages.iter().map(|s| s.as_str())
    }

    pub fn pair_ids(&self) -> BTreeSet<String> {
        self.examples.keys().map(|(id, _)| id.clone()).collect()
    }

    pub fn get(&self, pair_id: &str, language: &str) -> Option<&NliExample> {
        self.examples.get(&(pair_id.to_string(), language.to_string()))
    }

    /// Examples of one language in pair-id order.
    pub fn in_language<'a>(&'a self, language: &'a str) -> impl Iterator<Item = &'a NliExample> {
        self.examples.values().filter(move |ex| ex.language == language)
    }

    pub fn iter(&self) -> impl Iterator<Item = &NliExample> {
        self.examples.values()
    }

    pub fn to_tsv(&self) -> String {
        let mut out = String::from("pair_id\tlanguage\tlabel\tpremise\thypothesis\n");
        for ex in self.examples.values() {
            out.push_str(&format!(
                "{}\t{}\t{}\t{}\t{}\n",
                ex.pair_id, ex.language, ex.label, ex.premise, ex.hypothesis
            ));
        }
        out
    }

    pub fn from_tsv(split: &str, file: &str, text: &str, enforce_parallel: bool) -> Result<Self, DataError> {
        let examples = parse_tsv(file, text)?;
        Self::from_examples(split, examples, enforce_parallel)
    }
}

fn parse_tsv(file: &str, text: &str) -> Result<Vec<NliExample>, DataError> {
    let mut lines = text.lines().enumerate();
    let malformed = |line: usize, msg: String| DataError::Malformed {
        file: file.to_string(),
        line,
        msg,
    };
    let (_, header) = lines
        .next()
        .ok_or_else(|| malformed(0, "empty file".into()))?;
    if header != "pair_id\tlanguage\tlabel\tpremise\thypothesis" {
        return Err(malformed(1, format!("unexpected header {header:?}")));
    }
    let mut out = Vec::new();
    for (idx, line) in lines {
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split('\t').collect();
        if fields.len() != 5 {
            return Err(malformed(idx + 1, format!("expected 5 tab-separated fields, found {}", fields.len())));
        }
        let label = Label::parse(fields[2]).ok_or_else(|| {
            malformed(
                idx + 1,
                format!(
                    "unknown label {:?} (labels are class names entailment|contradiction|neutral, not verbalizer words)",
                    fields[2]
                ),
            )
        })?;
        out.push(NliExample {
            pair_id: fields[0].to_string(),
            language: fields[1].to_string(),
            label,
            premise: fields[3].to_string(),
            hypothesis: fields[4].to_string(),
        });
    }
    Ok(out)
}

/// Train/dev/test corpora of one task.
#[derive(Debug, Clone)]
pub struct Dataset {
    pub train: ParallelCorpus,
    pub dev: ParallelCorpus,
    pub test: ParallelCorpus,
}

impl Dataset {
    /// Loads `train.tsv`, `dev.tsv`, `test.tsv` from a directory.
    /// Parallelism is enforced for dev and test only.
    pub fn load_dir(dir: &Path) -> Result<Self, DataError> {
        let read = |name: &str| -> Result<String, DataError> {
            let path = dir.join(name);
            std::fs::read_to_string(&path).map_err(|source| DataError::Io {
                path: path.display().to_string(),
                source,
            })
        };
        Ok(Dataset {
            train: ParallelCorpus::from_tsv("train", "train.tsv", &read("train.tsv")?, false)?,
            dev: ParallelCorpus::from_tsv("dev", "dev.tsv", &read("dev.tsv")?, true)?,
            test: ParallelCorpus::from_tsv("test", "test.tsv", &read("test.tsv")?, true)?,
        })
    }

    pub fn save_dir(&self, dir: &Path) -> Result<(), DataError> {
        let write = |name: &str, text: String| -> Result<(), DataError> {
            let path = dir.join(name);
            std::fs::write(&path, text).map_err(|source| DataError::Io {
                path: path.display().to_string(),
                source,
            })
        };
        write("train.tsv", self.train.to_tsv())?;
        write("dev.tsv", self.dev.to_tsv())?;
        write("test.tsv", self.test.to_tsv())
    }

    /// Languages present in the test split, sorted.
    pub fn languages(&self) -> Vec<String> {
        self.test.languages().map(|s| s.to_string()).collect()
    }
}

/// A K-shot-per-class training set plus an equally sized development set.
#[derive(Debug, Clone, PartialEq)]
pub struct FewShotSplit {
    pub k: usize,
    pub seed: u64,
    pub language: String,
    pub train: Vec<NliExample>,
    pub dev: Vec<NliExample>,
}

/// Samples `k` shots per class for train and dev, stratified, seeded, and
/// without replacement. Train shots come from the training split, dev shots
/// from the development split (disjoint pair-id spaces by construction);
/// the two phases use independent streams of the same seed.
pub fn sample_few_shot(
    dataset: &Dataset,
    language: &str,
    k: usize,
    seed: u64,
) -> Result<FewShotSplit, DataError> {
    let train = sample_stratified(&dataset.train, language, k, seed, Stream::FewShotTrain)?;
    let dev = sample_stratified(&dataset.dev, language, k, seed, Stream::FewShotDev)?;
    Ok(FewShotSplit { k, seed, language: language.to_string(), train, dev })
}

fn sample_stratified(
    corpus: &ParallelCorpus,
    language: &str,
    k: usize,
    seed: u64,
    stream: Stream,
) -> Result<Vec<NliExample>, DataError> {
    let mut r = rng::rng(seed, stream);
    let mut out = Vec::with_capacity(3 * k);
    for label in Label::ALL {
        let candidates: Vec<&NliExample> = corpus
            .in_language(language)
            .filter(|ex| ex.label == label)
            .collect();
        if candidates.len() < k {
            return Err(DataError::InsufficientExamples {
                split: corpus.split.clone(),
                label,
                language: language.to_string(),
                available: candidates.len(),
                needed: k,
            });
        }
        for idx in rng::sample_without_replacement(&mut r, candidates.len(), k) {
            out.push(candidates[idx].clone());
        }
    }
    Ok(out)
}

/// Same pair ids and labels with texts swapped to `target_language`,
/// retrieved from the corresponding splits of `dataset`.
pub fn align_translations(
    split: &FewShotSplit,
    dataset: &Dataset,
    target_language: &str,
) -> Result<FewShotSplit, DataError> {
    let swap = |examples: &[NliExample], corpus: &ParallelCorpus| -> Result<Vec<NliExample>, DataError> {
        examples
            .iter()
            .map(|ex| {
                corpus
                    .get(&ex.pair_id, target_language)
                    .cloned()
                    .ok_or_else(|| DataError::MissingTranslation {
                        pair_id: ex.pair_id.clone(),
                        language: target_language.to_string(),
                    })
            })
            .collect()
    };
    Ok(FewShotSplit {
        k: split.k,
        seed: split.seed,
        language: target_language.to_string(),
        train: swap(&split.train, &dataset.train)?,
        dev: swap(&split.dev, &dataset.dev)?,
    })
}

/// Three hand-checkable reference pairs with gold labels contradiction,
/// neutral, entailment.
pub fn fixtures() -> Vec<NliExample> {
    let mk = |n: usize, label, premise: &str, hypothesis: &str| NliExample {
        pair_id: format!("fixture-{n}"),
        language: "EN".to_string(),
        label,
        premise: premise.to_string(),
        hypothesis: hypothesis.to_string(),
    };
    vec![
        mk(
            1,
            Label::Contradiction,
            "This was the temper of the times.",
            "This wasn't the temper of the times.",
        ),
        mk(2, Label::Neutral, "We would go in there.", "We would enter there at 8pm."),
        mk(3, Label::Entailment, "I hope to hear from you soon.", "I hope we talk soon."),
    ]
}

#[cfg(test)]
mod tests;
