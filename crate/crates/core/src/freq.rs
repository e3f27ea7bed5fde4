//! Token-frequency detector.
//!
//! Counts how often each token occurs in the machine-generated and human
//! halves of a training set, then attributes every token of a new text to the
//! half where it is relatively more frequent and compares the two tallies.

use std::collections::{BTreeMap, HashSet};
use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{Dataset, DetectorVerdict, Label, TextSample};
use crate::util;

pub const COMMON_TOKEN: &str = "common_token";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TokenizerKind {
    CharUnigram,
    CharBigram,
    ExternalVocab,
}

impl fmt::Display for TokenizerKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            TokenizerKind::CharUnigram => "char_unigram",
            TokenizerKind::CharBigram => "char_bigram",
            TokenizerKind::ExternalVocab => "external_vocab",
        })
    }
}

/// Splits text into tokens. Every character is covered by some token.
#[derive(Debug, Clone, PartialEq)]
pub struct Tokenizer {
    kind: TokenizerKind,
    vocab: HashSet<String>,
    max_token_chars: usize,
    fingerprint: u64,
}

impl Tokenizer {
    pub fn char_unigram() -> Self {
        Tokenizer::plain(TokenizerKind::CharUnigram)
    }

    pub fn char_bigram() -> Self {
        Tokenizer::plain(TokenizerKind::CharBigram)
    }

    fn plain(kind: TokenizerKind) -> Self {
        Tokenizer {
            kind,
            vocab: HashSet::new(),
            max_token_chars: 0,
            fingerprint: 0,
        }
    }

    /// Longest-match segmentation over `vocab`; unknown spans fall back to
    /// single characters.
    pub fn external_vocab<I, S>(vocab: I) -> Result<Self>
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        let vocab: HashSet<String> = vocab.into_iter().map(Into::into).filter(|t| !t.is_empty()).collect();
        if vocab.is_empty() {
            return Err(Error::Config("external_vocab tokenizer needs a nonempty vocabulary".into()));
        }
        let max_token_chars = vocab.iter().map(|t| t.chars().count()).max().unwrap_or(1);
        let mut sorted: Vec<&str> = vocab.iter().map(String::as_str).collect();
        sorted.sort_unstable();
        let fingerprint = util::fnv1a(sorted.join("\n").as_bytes());
        Ok(Tokenizer {
            kind: TokenizerKind::ExternalVocab,
            vocab,
            max_token_chars,
            fingerprint,
        })
    }

    /// Vocabulary file: one token per line, UTF-8.
    pub fn load_vocab(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Tokenizer::external_vocab(text.lines().map(|l| l.trim_end_matches('\r').to_string()))
    }

    pub fn kind(&self) -> TokenizerKind {
        self.kind
    }

    fn signature(&self) -> TokenizerSignature {
        TokenizerSignature {
            kind: self.kind,
            vocab_fingerprint: (self.kind == TokenizerKind::ExternalVocab).then_some(self.fingerprint),
        }
    }

    pub fn tokenize<'a>(&self, text: &'a str) -> Vec<&'a str> {
        let bounds: Vec<usize> = text.char_indices().map(|(i, _)| i).chain([text.len()]).collect();
        let n_chars = bounds.len() - 1;
        match self.kind {
            TokenizerKind::CharUnigram => (0..n_chars).map(|i| &text[bounds[i]..bounds[i + 1]]).collect(),
            TokenizerKind::CharBigram => {
                if n_chars == 1 {
                    vec![text]
                } else {
                    (0..n_chars.saturating_sub(1)).map(|i| &text[bounds[i]..bounds[i + 2]]).collect()
                }
            }
            TokenizerKind::ExternalVocab => {
                let mut out = Vec::new();
                let mut i = 0;
                while i < n_chars {
                    let longest = self.max_token_chars.min(n_chars - i);
                    let len = (2..=longest)
                        .rev()
                        .find(|&len| self.vocab.contains(&text[bounds[i]..bounds[i + len]]))
                        .unwrap_or(1);
                    out.push(&text[bounds[i]..bounds[i + len]]);
                    i += len;
                }
                out
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
struct TokenizerSignature {
    kind: TokenizerKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    vocab_fingerprint: Option<u64>,
}

impl fmt::Display for TokenizerSignature {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.vocab_fingerprint {
            Some(fp) => write!(f, "{}#{fp:016x}", self.kind),
            None => write!(f, "{}", self.kind),
        }
    }
}

/// How a token is assigned to one half of the training data.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Attribution {
    /// Smoothed relative frequency `(count + a) / (total + a * vocab)`.
    #[default]
    RelativeFrequency,
    /// Raw occurrence counts.
    RawCount,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TokenFrequencyTable {
    llm_counts: BTreeMap<String, u64>,
    human_counts: BTreeMap<String, u64>,
    llm_total: u64,
    human_total: u64,
    smoothing: f64,
    tokenizer: TokenizerSignature,
    #[serde(default)]
    attribution: Attribution,
    #[serde(skip)]
    distinct_tokens: usize,
}

impl TokenFrequencyTable {
    pub fn llm_counts(&self) -> &BTreeMap<String, u64> {
        &self.llm_counts
    }

    pub fn human_counts(&self) -> &BTreeMap<String, u64> {
        &self.human_counts
    }

    pub fn llm_total(&self) -> u64 {
        self.llm_total
    }

    pub fn human_total(&self) -> u64 {
        self.human_total
    }

    pub fn smoothing(&self) -> f64 {
        self.smoothing
    }

    pub fn with_smoothing(mut self, smoothing: f64) -> Result<Self> {
        if !(smoothing > 0.0 && smoothing.is_finite()) {
            return Err(Error::Config(format!("smoothing must be positive, got {smoothing}")));
        }
        self.smoothing = smoothing;
        Ok(self)
    }

    pub fn with_attribution(mut self, attribution: Attribution) -> Self {
        self.attribution = attribution;
        self
    }

    pub fn vocab_size(&self) -> usize {
        if self.distinct_tokens > 0 {
            return self.distinct_tokens;
        }
        self.count_distinct()
    }

    fn count_distinct(&self) -> usize {
        self.llm_counts.len()
            + self
                .human_counts
                .keys()
                .filter(|k| !self.llm_counts.contains_key(*k))
                .count()
    }

    /// Which half a token leans toward, or `None` on a tie or an unseen token.
    pub fn attribute(&self, token: &str) -> Option<Label> {
        let llm = self.llm_counts.get(token).copied().unwrap_or(0);
        let human = self.human_counts.get(token).copied().unwrap_or(0);
        if llm == 0 && human == 0 {
            return None;
        }
        let (l, h) = match self.attribution {
            Attribution::RawCount => (llm as f64, human as f64),
            Attribution::RelativeFrequency => {
                let a = self.smoothing;
                let v = self.vocab_size() as f64;
                (
                    (llm as f64 + a) / (self.llm_total as f64 + a * v),
                    (human as f64 + a) / (self.human_total as f64 + a * v),
                )
            }
        };
        if l > h {
            Some(Label::Llm)
        } else if h > l {
            Some(Label::Human)
        } else {
            None
        }
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let mut table: TokenFrequencyTable = util::read_json(path.as_ref())?;
        table.distinct_tokens = table.count_distinct();
        if table.smoothing.is_nan() || table.smoothing <= 0.0 {
            return Err(Error::Config(format!("{}: smoothing must be positive", path.as_ref().display())));
        }
        Ok(table)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        util::write_json(path.as_ref(), self)
    }
}

pub fn build_token_table(train: &Dataset, tok: &Tokenizer) -> Result<TokenFrequencyTable> {
    if !train.counts().has_both() {
        return Err(Error::SingleLabel("token table".into()));
    }
    let mut table = TokenFrequencyTable {
        llm_counts: BTreeMap::new(),
        human_counts: BTreeMap::new(),
        llm_total: 0,
        human_total: 0,
        smoothing: 1.0,
        tokenizer: tok.signature(),
        attribution: Attribution::default(),
        distinct_tokens: 0,
    };
    for sample in train {
        let (counts, total) = match sample.gold_label() {
            Some(Label::Llm) => (&mut table.llm_counts, &mut table.llm_total),
            Some(Label::Human) => (&mut table.human_counts, &mut table.human_total),
            None => continue,
        };
        for token in tok.tokenize(sample.text()) {
            *counts.entry(token.to_string()).or_insert(0) += 1;
            *total += 1;
        }
    }
    table.distinct_tokens = table.count_distinct();
    Ok(table)
}

/// LLM iff more tokens lean machine-generated than human; ties are human.
/// The raw score is the difference of the two tallies.
pub fn classify_common_token(sample: &TextSample, table: &TokenFrequencyTable, tok: &Tokenizer) -> Result<DetectorVerdict> {
    let given = tok.signature();
    if given != table.tokenizer {
        return Err(Error::TokenizerMismatch {
            table: table.tokenizer.to_string(),
            given: given.to_string(),
        });
    }
    let (mut llm, mut human) = (0i64, 0i64);
    for token in tok.tokenize(sample.text()) {
        match table.attribute(token) {
            Some(Label::Llm) => llm += 1,
            Some(Label::Human) => human += 1,
            None => {}
        }
    }
    let prediction = if llm > human { Label::Llm } else { Label::Human };
    Ok(DetectorVerdict::new(COMMON_TOKEN, prediction, Some((llm - human) as f64)))
}
