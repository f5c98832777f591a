//! Deterministic word-level tokenizer and vocabulary.
//!
//! The vocabulary is laid out as: five special tokens, `m` reserved
//! pseudo-token slots `<v1>..<vm>` for soft prompts, then corpus tokens
//! ordered by descending frequency with lexicographic tie-breaking. Ids are
//! dense in `[0, |V|)`.
//!
//! Encoding NFC-normalizes, splits on Unicode whitespace, and looks words
//! up among *ordinary* tokens only; special and pseudo tokens are never
//! produced from text, so a literal `"<mask>"` in the input encodes as
//! ordinary pieces (or `<unk>`), never as the mask id. Unknown words fall
//! back to greedy longest-match segmentation over in-vocabulary pieces; if
//! any position fails to match, the whole word becomes `<unk>`.

use std::collections::HashMap;
use std::fmt::Write as _;
use std::path::Path;

use thiserror::Error;
use unicode_normalization::UnicodeNormalization;

/// Token ids of one encoded text. Every id is `< |V|`.
pub type TokenSeq = Vec<u32>;

pub const PAD: u32 = 0;
pub const BOS: u32 = 1;
pub const EOS: u32 = 2;
pub const MASK: u32 = 3;
pub const UNK: u32 = 4;

const SPECIALS: [&str; 5] = ["<pad>", "<s>", "</s>", "<mask>", "<unk>"];

#[derive(Debug, Error)]
pub enum TokenizerError {
    #[error("corpus contains no tokens")]
    EmptyCorpus,
    #[error("size cap {cap} is below the {required} special and pseudo slots")]
    CapTooSmall { cap: usize, required: usize },
    #[error("vocab file, line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Immutable token-string ↔ id mapping with special and pseudo ids.
#[derive(Debug, Clone)]
pub struct Vocabulary {
    tokens: Vec<String>,
    /// Ordinary tokens only; specials and pseudos are not text-encodable.
    text_index: HashMap<String, u32>,
    pseudo_count: usize,
}

impl Vocabulary {
    /// Builds a vocabulary from whitespace-delimited corpus lines.
    ///
    /// `size_cap` bounds the total vocabulary including the 5 specials and
    /// `pseudo_count` pseudo slots. Corpus tokens are admitted most-frequent
    /// first, ties broken lexicographically, until the cap is reached.
    pub fn build<I, S>(corpus: I, size_cap: usize, pseudo_count: usize) -> Result<Self, TokenizerError>
    where
        I: IntoIterator<Item = S>,
        S: AsRef<str>,
    {
        let reserved = SPECIALS.len() + pseudo_count;
        if size_cap < reserved {
            return Err(TokenizerError::CapTooSmall { cap: size_cap, required: reserved });
        }
        let mut counts: HashMap<String, u64> = HashMap::new();
        for line in corpus {
            let line: String = line.as_ref().nfc().collect();
            for word in line.split_whitespace() {
                *counts.entry(word.to_string()).or_insert(0) += 1;
            }
        }
        if counts.is_empty() {
            return Err(TokenizerError::EmptyCorpus);
        }
        let mut ranked: Vec<(String, u64)> = counts.into_iter().collect();
        ranked.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(&b.0)));

        let mut tokens: Vec<String> = SPECIALS.iter().map(|s| s.to_string()).collect();
        tokens.extend((1..=pseudo_count).map(|i| format!("<v{i}>")));
        tokens.extend(
            ranked
                .into_iter()
                .take(size_cap - reserved)
                .map(|(word, _)| word),
        );
        Ok(Self::from_tokens(tokens, pseudo_count))
    }

    fn from_tokens(tokens: Vec<String>, pseudo_count: usize) -> Self {
        let ordinary_start = SPECIALS.len() + pseudo_count;
        let text_index = tokens
            .iter()
            .enumerate()
            .skip(ordinary_start)
            .map(|(i, t)| (t.clone(), i as u32))
            .collect();
        Vocabulary { tokens, text_index, pseudo_count }
    }

    pub fn size(&self) -> usize {
        self.tokens.len()
    }

    pub fn pseudo_count(&self) -> usize {
        self.pseudo_count
    }

    /// Id of the reserved pseudo token `<vi>`, `i` counted from 1.
    pub fn pseudo_id(&self, i: usize) -> u32 {
        assert!(
            i >= 1 && i <= self.pseudo_count,
            "pseudo token index {i} outside 1..={}",
            self.pseudo_count
        );
        (SPECIALS.len() + i - 1) as u32
    }

    pub fn is_reserved(&self, id: u32) -> bool {
        (id as usize) < SPECIALS.len() + self.pseudo_count
    }

    pub fn token(&self, id: u32) -> &str {
        &self.tokens[id as usize]
    }

    /// Id of an ordinary (text-encodable) token, if present.
    pub fn lookup(&self, word: &str) -> Option<u32> {
        self.text_index.get(word).copied()
    }

    /// Deterministic encoding of `text`; never emits special or pseudo ids
    /// except `<unk>`.
    pub fn encode(&self, text: &str) -> TokenSeq {
        let normalized: String = text.nfc().collect();
        let mut ids = Vec::new();
        for word in normalized.split_whitespace() {
            match self.text_index.get(word) {
                Some(&id) => ids.push(id),
                None => self.encode_fallback(word, &mut ids),
            }
        }
        ids
    }

    /// Greedy longest-match over in-vocabulary pieces; on any failure the
    /// whole word degrades to a single `<unk>`.
    fn encode_fallback(&self, word: &str, out: &mut Vec<u32>) {
        let mut pieces = Vec::new();
        let mut rest = word;
        'outer: while !rest.is_empty() {
            let mut end = rest.len();
            loop {
                if rest.is_char_boundary(end) {
                    if let Some(&id) = self.text_index.get(&rest[..end]) {
                        pieces.push(id);
                        rest = &rest[end..];
                        continue 'outer;
                    }
                }
                if end == 0 {
                    out.push(UNK);
                    return;
                }
                end -= 1;
            }
        }
        out.extend(pieces);
    }

    /// Token strings joined by single spaces. Inverse of [`encode`] for
    /// in-vocabulary words.
    ///
    /// [`encode`]: Vocabulary::encode
    pub fn decode(&self, ids: &[u32]) -> String {
        let mut out = String::new();
        for (i, &id) in ids.iter().enumerate() {
            assert!((id as usize) < self.tokens.len(), "decode: id {id} out of range");
            if i > 0 {
                out.push(' ');
            }
            out.push_str(&self.tokens[id as usize]);
        }
        out
    }

    /// Text format: `#` header lines, then one token per line where the
    /// non-header line index is the id.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "# promptlab vocabulary v1");
        let _ = writeln!(
            out,
            "# specials: {}",
            SPECIALS
                .iter()
                .enumerate()
                .map(|(i, s)| format!("{s}={i}"))
                .collect::<Vec<_>>()
                .join(" ")
        );
        let _ = writeln!(out, "# pseudo-count: {}", self.pseudo_count);
        for t in &self.tokens {
            let _ = writeln!(out, "{t}");
        }
        out
    }

    pub fn from_text(text: &str) -> Result<Self, TokenizerError> {
        let mut pseudo_count: Option<usize> = None;
        let mut tokens = Vec::new();
        for (lineno, line) in text.lines().enumerate() {
            if let Some(rest) = line.strip_prefix('#') {
                let rest = rest.trim();
                if let Some(v) = rest.strip_prefix("pseudo-count:") {
                    pseudo_count = Some(v.trim().parse().map_err(|_| TokenizerError::Parse {
                        line: lineno + 1,
                        msg: format!("bad pseudo-count {v:?}"),
                    })?);
                }
                continue;
            }
            tokens.push(line.to_string());
        }
        let pseudo_count = pseudo_count.ok_or(TokenizerError::Parse {
            line: 0,
            msg: "missing '# pseudo-count:' header".into(),
        })?;
        if tokens.len() < SPECIALS.len() + pseudo_count {
            return Err(TokenizerError::Parse {
                line: 0,
                msg: format!(
                    "{} tokens cannot hold {} special/pseudo slots",
                    tokens.len(),
                    SPECIALS.len() + pseudo_count
                ),
            });
        }
        for (i, s) in SPECIALS.iter().enumerate() {
            if tokens[i] != *s {
                return Err(TokenizerError::Parse {
                    line: i + 1,
                    msg: format!("expected special {s:?} at id {i}, found {:?}", tokens[i]),
                });
            }
        }
        for i in 1..=pseudo_count {
            let want = format!("<v{i}>");
            let at = SPECIALS.len() + i - 1;
            if tokens[at] != want {
                return Err(TokenizerError::Parse {
                    line: at + 1,
                    msg: format!("expected pseudo {want:?} at id {at}, found {:?}", tokens[at]),
                });
            }
        }
        Ok(Self::from_tokens(tokens, pseudo_count))
    }

    pub fn save(&self, path: &Path) -> Result<(), TokenizerError> {
        std::fs::write(path, self.to_text())?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self, TokenizerError> {
        Self::from_text(&std::fs::read_to_string(path)?)
    }
}
