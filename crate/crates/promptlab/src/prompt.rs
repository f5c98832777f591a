//! Prompt templates, verbalizers, and cloze scoring.
//!
//! Template DSL: literal text is kept verbatim; `{premise}`, `{hypothesis}`,
//! `{mask}` and `{soft:i}` are placeholders; backslash escapes `{`, `}` and
//! `\`. A template carries exactly one mask slot, at most one premise and
//! one hypothesis slot, and soft-token indices that are distinct and
//! contiguous from 1.
//!
//! A prompt pack bundles, for one language, the verbalizer and the DP/SP/MP
//! templates, as a line-based text file:
//!
//! ```text
//! language: EN
//! verbalizer.entailment: yes
//! verbalizer.contradiction: no
//! verbalizer.neutral: maybe
//! template.DP: {premise} . Question: {hypothesis} ? Answer: {mask} .
//! template.SP: {premise} . {hypothesis} ? {soft:1}{soft:2}{soft:3}{soft:4} {mask} .
//! template.MP: {premise} . Question: {hypothesis} ? {soft:1}{soft:2}{soft:3}{soft:4} Answer: {mask} .
//! ```

use std::fmt;
use std::path::Path;

use thiserror::Error;

use crate::data::{Label, NliExample};
use crate::tensor::Scalar;
use crate::tokenizer::{TokenSeq, Vocabulary, BOS, EOS, MASK};

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Segment {
    Literal(String),
    Premise,
    Hypothesis,
    Soft(usize),
    Mask,
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum TemplateError {
    #[error("byte {offset}: unknown placeholder {{{name}}}")]
    UnknownPlaceholder { offset: usize, name: String },
    #[error("byte {offset}: unclosed placeholder")]
    Unclosed { offset: usize },
    #[error("byte {offset}: unexpected '}}' outside a placeholder")]
    StrayBrace { offset: usize },
    #[error("byte {offset}: invalid escape '\\{found}' (only braces and backslash can be escaped)")]
    InvalidEscape { offset: usize, found: char },
    #[error("byte {offset}: dangling backslash")]
    DanglingEscape { offset: usize },
    #[error("template has no {{mask}} slot")]
    MissingMask,
    #[error("byte {offset}: template has more than one {{mask}} slot")]
    MultipleMasks { offset: usize },
    #[error("byte {offset}: duplicate {{{name}}} slot")]
    DuplicateSlot { offset: usize, name: String },
    #[error("soft-token indices must be distinct and contiguous from 1, found {found:?}")]
    NonContiguousSoft { found: Vec<usize> },
}

/// Parsed prompt template: an ordered list of literals and slots.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PromptTemplate {
    segments: Vec<Segment>,
    soft_count: usize,
}

impl PromptTemplate {
    /// Parses DSL source. Errors carry the byte offset of the offending
    /// construct.
    pub fn parse(source: &str) -> Result<Self, TemplateError> {
        let mut segments: Vec<Segment> = Vec::new();
        let mut literal = String::new();
        let mut chars = source.char_indices().peekable();
        let mut mask_seen: Option<usize> = None;
        let mut premise_seen = false;
        let mut hypothesis_seen = false;
        let mut soft_indices: Vec<usize> = Vec::new();

        let flush = |segments: &mut Vec<Segment>, literal: &mut String| {
            if !literal.is_empty() {
                segments.push(Segment::Literal(std::mem::take(literal)));
            }
        };

        while let Some((pos, ch)) = chars.next() {
            match ch {
                '\\' => match chars.next() {
                    Some((_, c @ ('{' | '}' | '\\'))) => literal.push(c),
                    Some((p, c)) => return Err(TemplateError::InvalidEscape { offset: p, found: c }),
                    None => return Err(TemplateError::DanglingEscape { offset: pos }),
                },
                '}' => return Err(TemplateError::StrayBrace { offset: pos }),
                '{' => {
                    let mut name = String::new();
                    loop {
                        match chars.next() {
                            Some((_, '}')) => break,
                            Some((_, c)) => name.push(c),
                            None => return Err(TemplateError::Unclosed { offset: pos }),
                        }
                    }
                    let segment = match name.as_str() {
                        "premise" => {
                            if premise_seen {
                                return Err(TemplateError::DuplicateSlot { offset: pos, name });
                            }
                            premise_seen = true;
                            Segment::Premise
                        }
                        "hypothesis" => {
                            if hypothesis_seen {
                                return Err(TemplateError::DuplicateSlot { offset: pos, name });
                            }
                            hypothesis_seen = true;
                            Segment::Hypothesis
                        }
                        "mask" => {
                            if mask_seen.is_some() {
                                return Err(TemplateError::MultipleMasks { offset: pos });
                            }
                            mask_seen = Some(pos);
                            Segment::Mask
                        }
                        _ => match name.strip_prefix("soft:").and_then(|n| n.parse::<usize>().ok()) {
                            Some(i) if i >= 1 => {
                                soft_indices.push(i);
                                Segment::Soft(i)
                            }
                            _ => return Err(TemplateError::UnknownPlaceholder { offset: pos, name }),
                        },
                    };
                    flush(&mut segments, &mut literal);
                    segments.push(segment);
                }
                c => literal.push(c),
            }
        }
        flush(&mut segments, &mut literal);

        if mask_seen.is_none() {
            return Err(TemplateError::MissingMask);
        }
        let mut sorted = soft_indices.clone();
        sorted.sort_unstable();
        sorted.dedup();
        if sorted.len() != soft_indices.len() || sorted.iter().enumerate().any(|(i, &v)| v != i + 1) {
            return Err(TemplateError::NonContiguousSoft { found: soft_indices });
        }

        Ok(PromptTemplate { segments, soft_count: soft_indices.len() })
    }

    pub fn segments(&self) -> &[Segment] {
        &self.segments
    }

    /// Number of `{soft:i}` slots.
    pub fn soft_count(&self) -> usize {
        self.soft_count
    }

    pub fn has_premise(&self) -> bool {
        self.segments.iter().any(|s| matches!(s, Segment::Premise))
    }

    pub fn has_hypothesis(&self) -> bool {
        self.segments.iter().any(|s| matches!(s, Segment::Hypothesis))
    }

    /// Canonical DSL source; `parse ∘ render` is the identity.
    pub fn render(&self) -> String {
        let mut out = String::new();
        for seg in &self.segments {
            match seg {
                Segment::Literal(text) => {
                    for c in text.chars() {
                        if matches!(c, '{' | '}' | '\\') {
                            out.push('\\');
                        }
                        out.push(c);
                    }
                }
                Segment::Premise => out.push_str("{premise}"),
                Segment::Hypothesis => out.push_str("{hypothesis}"),
                Segment::Soft(i) => {
                    out.push_str("{soft:");
                    out.push_str(&i.to_string());
                    out.push('}');
                }
                Segment::Mask => out.push_str("{mask}"),
            }
        }
        out
    }
}

impl fmt::Display for PromptTemplate {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.render())
    }
}

// ── Verbalizer ──────────────────────────────────────────────────────

/// Label → vocabulary-word mapping for one language, in the fixed order
/// (entailment, contradiction, neutral).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Verbalizer {
    pub language: String,
    pub words: [String; 3],
}

/// Verbalizer bound to a vocabulary: one id per label, pairwise distinct.
#[derive(Debug, Clone)]
pub struct ResolvedVerbalizer {
    pub ids: [u32; 3],
}

impl Verbalizer {
    pub fn word(&self, label: Label) -> &str {
        &self.words[label.index()]
    }

    /// Enforces the single-token requirement: each word must encode to
    /// exactly one ordinary id, and the three ids must be distinct.
    pub fn resolve(&self, vocab: &Vocabulary) -> Result<ResolvedVerbalizer, PackError> {
        let mut ids = [0u32; 3];
        for (slot, word) in ids.iter_mut().zip(&self.words) {
            let encoded = vocab.encode(word);
            if encoded.len() != 1 || vocab.is_reserved(encoded[0]) {
                return Err(PackError::NotSingleToken {
                    language: self.language.clone(),
                    word: word.clone(),
                    pieces: encoded.iter().map(|&id| vocab.token(id).to_string()).collect(),
                });
            }
            *slot = encoded[0];
        }
        if ids[0] == ids[1] || ids[0] == ids[2] || ids[1] == ids[2] {
            return Err(PackError::VerbalizerCollision {
                language: self.language.clone(),
                words: self.words.clone(),
            });
        }
        Ok(ResolvedVerbalizer { ids })
    }
}

// ── Prompt packs ────────────────────────────────────────────────────

#[derive(Debug, Error)]
pub enum PackError {
    #[error("pack line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error("pack line {line}: template {key}: {source}")]
    Template {
        line: usize,
        key: String,
        #[source]
        source: TemplateError,
    },
    #[error("pack is missing key {key}")]
    MissingKey { key: String },
    #[error("{language} verbalizer word {word:?} is not a single vocabulary token (got {pieces:?})")]
    NotSingleToken {
        language: String,
        word: String,
        pieces: Vec<String>,
    },
    #[error("{language} verbalizer words {words:?} do not map to three distinct ids")]
    VerbalizerCollision { language: String, words: [String; 3] },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// One language's verbalizer plus its DP, SP, and MP templates.
#[derive(Debug, Clone)]
pub struct PromptPack {
    pub language: String,
    pub verbalizer: Verbalizer,
    pub dp: PromptTemplate,
    pub sp: PromptTemplate,
    pub mp: PromptTemplate,
}

impl PromptPack {
    pub fn parse(text: &str) -> Result<Self, PackError> {
        let mut language = None;
        let mut words: [Option<String>; 3] = [None, None, None];
        let mut templates: [Option<(usize, String)>; 3] = [None, None, None];

        for (idx, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line.split_once(':').ok_or_else(|| PackError::Parse {
                line: idx + 1,
                msg: format!("expected 'key: value', found {line:?}"),
            })?;
            let value = value.strip_prefix(' ').unwrap_or(value);
            match key.trim() {
                "language" => language = Some(value.trim().to_string()),
                "verbalizer.entailment" => words[0] = Some(value.trim().to_string()),
                "verbalizer.contradiction" => words[1] = Some(value.trim().to_string()),
                "verbalizer.neutral" => words[2] = Some(value.trim().to_string()),
                "template.DP" => templates[0] = Some((idx + 1, value.to_string())),
                "template.SP" => templates[1] = Some((idx + 1, value.to_string())),
                "template.MP" => templates[2] = Some((idx + 1, value.to_string())),
                other => {
                    return Err(PackError::Parse {
                        line: idx + 1,
                        msg: format!("unknown key {other:?}"),
                    })
                }
            }
        }

        let language = language.ok_or(PackError::MissingKey { key: "language".into() })?;
        let mut word_values = Vec::new();
        for (word, key) in words.into_iter().zip([
            "verbalizer.entailment",
            "verbalizer.contradiction",
            "verbalizer.neutral",
        ]) {
            word_values.push(word.ok_or(PackError::MissingKey { key: key.into() })?);
        }
        let mut parsed_templates = Vec::new();
        for (slot, key) in templates.into_iter().zip(["template.DP", "template.SP", "template.MP"]) {
            let (line, source) = slot.ok_or(PackError::MissingKey { key: key.into() })?;
            let template = PromptTemplate::parse(&source).map_err(|source| PackError::Template {
                line,
                key: key.to_string(),
                source,
            })?;
            if !template.has_premise() || !template.has_hypothesis() {
                return Err(PackError::Parse {
                    line,
                    msg: format!("{key} must contain both {{premise}} and {{hypothesis}}"),
                });
            }
            parsed_templates.push(template);
        }
        let mp = parsed_templates.pop().expect("three templates");
        let sp = parsed_templates.pop().expect("three templates");
        let dp = parsed_templates.pop().expect("three templates");

        Ok(PromptPack {
            verbalizer: Verbalizer {
                language: language.clone(),
                words: [
                    word_values[0].clone(),
                    word_values[1].clone(),
                    word_values[2].clone(),
                ],
            },
            language,
            dp,
            sp,
            mp,
        })
    }

    pub fn load(path: &Path) -> Result<Self, PackError> {
        Self::parse(&std::fs::read_to_string(path)?)
    }

    /// Every word the pack needs in the vocabulary: template literals
    /// split on whitespace, plus the verbalizer words.
    pub fn vocab_words(&self) -> Vec<String> {
        let mut out = Vec::new();
        for template in [&self.dp, &self.sp, &self.mp] {
            for seg in template.segments() {
                if let Segment::Literal(text) = seg {
                    out.extend(text.split_whitespace().map(|w| w.to_string()));
                }
            }
        }
        out.extend(self.verbalizer.words.iter().cloned());
        out.sort();
        out.dedup();
        out
    }
}

// ── Assembly ────────────────────────────────────────────────────────

#[derive(Debug, Error)]
pub enum AssembleError {
    #[error("template scaffold alone is {scaffold} tokens, exceeding max_len {max_len}")]
    ScaffoldTooLong { scaffold: usize, max_len: usize },
}

/// One prompt rendered to token ids, with the mask position, the soft-slot
/// positions (index order, length 0 or m), and the gold label when known.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AssembledExample {
    pub ids: TokenSeq,
    pub mask_pos: usize,
    pub soft_positions: Vec<usize>,
    pub gold: Option<Label>,
}

/// Fills the template slots, encodes text segments, places pseudo ids, and
/// wraps the sequence in bos/eos. If the result exceeds `max_len`, tokens
/// are cut from the end of the premise first, then the end of the
/// hypothesis; the scaffold, soft tokens, and mask are never cut.
pub fn assemble(
    template: &PromptTemplate,
    premise: &str,
    hypothesis: &str,
    vocab: &Vocabulary,
    max_len: usize,
) -> Result<AssembledExample, AssembleError> {
    enum Piece {
        Fixed(TokenSeq),
        Premise,
        Hypothesis,
        Soft(usize),
        Mask,
    }

    let mut premise_ids = vocab.encode(premise);
    let mut hypothesis_ids = vocab.encode(hypothesis);

    let mut pieces = vec![Piece::Fixed(vec![BOS])];
    for seg in template.segments() {
        pieces.push(match seg {
            Segment::Literal(text) => Piece::Fixed(vocab.encode(text)),
            Segment::Premise => Piece::Premise,
            Segment::Hypothesis => Piece::Hypothesis,
            Segment::Soft(i) => Piece::Soft(*i),
            Segment::Mask => Piece::Mask,
        });
    }
    pieces.push(Piece::Fixed(vec![EOS]));

    let scaffold: usize = pieces
        .iter()
        .map(|p| match p {
            Piece::Fixed(ids) => ids.len(),
            Piece::Soft(_) | Piece::Mask => 1,
            Piece::Premise | Piece::Hypothesis => 0,
        })
        .sum();
    if scaffold > max_len {
        return Err(AssembleError::ScaffoldTooLong { scaffold, max_len });
    }
    let mut over = (scaffold + premise_ids.len() + hypothesis_ids.len()).saturating_sub(max_len);
    let cut = over.min(premise_ids.len());
    premise_ids.truncate(premise_ids.len() - cut);
    over -= cut;
    hypothesis_ids.truncate(hypothesis_ids.len() - over);

    let mut ids = Vec::with_capacity(max_len);
    let mut mask_pos = 0;
    let mut soft_positions = vec![0usize; template.soft_count()];
    for piece in &pieces {
        match piece {
            Piece::Fixed(part) => ids.extend_from_slice(part),
            Piece::Premise => ids.extend_from_slice(&premise_ids),
            Piece::Hypothesis => ids.extend_from_slice(&hypothesis_ids),
            Piece::Soft(i) => {
                soft_positions[i - 1] = ids.len();
                ids.push(vocab.pseudo_id(*i));
            }
            Piece::Mask => {
                mask_pos = ids.len();
                ids.push(MASK);
            }
        }
    }
    debug_assert!(ids.len() <= max_len);

    Ok(AssembledExample { ids, mask_pos, soft_positions, gold: None })
}

/// [`assemble`] for a corpus example, carrying its gold label.
pub fn assemble_nli(
    template: &PromptTemplate,
    example: &NliExample,
    vocab: &Vocabulary,
    max_len: usize,
) -> Result<AssembledExample, AssembleError> {
    let mut out = assemble(template, &example.premise, &example.hypothesis, vocab, max_len)?;
    out.gold = Some(example.label);
    Ok(out)
}

// ── Cloze scoring ───────────────────────────────────────────────────

/// Restricts full-vocabulary logits at the mask to the three verbalizer
/// ids, in label order.
pub fn cloze_scores<T: Scalar>(logits_at_mask: &[T], verbalizer: &ResolvedVerbalizer) -> [T; 3] {
    [
        logits_at_mask[verbalizer.ids[0] as usize],
        logits_at_mask[verbalizer.ids[1] as usize],
        logits_at_mask[verbalizer.ids[2] as usize],
    ]
}

/// Argmax over label scores; ties resolve to the lowest label index.
pub fn predict<T: Scalar>(scores: &[T; 3]) -> Label {
    let mut best = 0;
    for i in 1..3 {
        if scores[i] > scores[best] {
            best = i;
        }
    }
    Label::from_index(best)
}

/// Cross-entropy of the softmax over the three restricted scores against
/// the gold label.
pub fn cloze_loss<T: Scalar>(scores: &[T; 3], gold: Label) -> T {
    let max = scores.iter().copied().fold(T::neg_infinity(), T::max);
    let sum: T = scores.iter().map(|&v| (v - max).exp()).sum();
    max + sum.ln() - scores[gold.index()]
}

#[cfg(test)]
mod tests;
