//! Pattern-based detectors.
//!
//! Each detector is a pure function of a sample and a [`RuleConfig`]. Empty
//! texts are always judged human: there is no machine-generation evidence in
//! them.

use std::collections::{BTreeSet, HashMap, HashSet};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{Dataset, DetectorVerdict, Label, TextSample};
use crate::util;

pub const SPECIAL_TOKEN: &str = "special_token";
pub const CONSECUTIVE_PUNCTUATION: &str = "consecutive_punctuation";
pub const COMMON_PHRASE: &str = "common_phrase";
pub const SENTENCE_SEGMENT: &str = "sentence_segment";

const DEFAULT_PUNCT: &str = "。！？，、；：…～.!?,;:~";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RuleConfig {
    pub special_tokens: Vec<String>,
    #[serde(skip)]
    pub phrase_lexicon: PhraseLexicon,
    /// Commas per 100 characters at or above which a text reads as human.
    pub clause_rate_threshold: f64,
    pub consecutive_punct_min_run: usize,
    pub punct_class: BTreeSet<char>,
}

impl Default for RuleConfig {
    fn default() -> Self {
        RuleConfig {
            special_tokens: vec!["\n\n".to_string()],
            phrase_lexicon: PhraseLexicon::default(),
            clause_rate_threshold: 4.0,
            consecutive_punct_min_run: 2,
            punct_class: DEFAULT_PUNCT.chars().collect(),
        }
    }
}

impl RuleConfig {
    pub fn with_lexicon(mut self, lexicon: PhraseLexicon) -> Self {
        self.phrase_lexicon = lexicon;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !self.clause_rate_threshold.is_finite() {
            return Err(Error::Config("clause_rate_threshold must be finite".into()));
        }
        if self.consecutive_punct_min_run < 2 {
            return Err(Error::Config("consecutive_punct_min_run must be at least 2".into()));
        }
        if self.special_tokens.iter().any(String::is_empty) {
            return Err(Error::Config("special tokens must be nonempty".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Phrase {
    pub phrase: String,
    pub polarity: Label,
    pub weight: f64,
}

/// Weighted phrases, each pointing toward one label.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct PhraseLexicon {
    phrases: Vec<Phrase>,
}

impl PhraseLexicon {
    pub fn new(phrases: Vec<Phrase>) -> Result<Self> {
        let mut seen = HashSet::new();
        for p in &phrases {
            if p.phrase.is_empty() {
                return Err(Error::InvalidInput("lexicon phrase must be nonempty".into()));
            }
            if !(p.weight > 0.0 && p.weight.is_finite()) {
                return Err(Error::InvalidInput(format!(
                    "lexicon weight for `{}` must be positive, got {}",
                    p.phrase, p.weight
                )));
            }
            if !seen.insert(p.phrase.as_str()) {
                return Err(Error::InvalidInput(format!("duplicate lexicon phrase `{}`", p.phrase)));
            }
        }
        Ok(PhraseLexicon { phrases })
    }

    pub fn phrases(&self) -> &[Phrase] {
        &self.phrases
    }

    pub fn len(&self) -> usize {
        self.phrases.len()
    }

    pub fn is_empty(&self) -> bool {
        self.phrases.is_empty()
    }

    pub fn get(&self, phrase: &str) -> Option<&Phrase> {
        self.phrases.iter().find(|p| p.phrase == phrase)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        PhraseLexicon::new(util::read_jsonl(path.as_ref())?)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        util::write_jsonl(path.as_ref(), &self.phrases)
    }
}

/// LLM iff any configured special token occurs; the score counts occurrences.
pub fn detect_special_token(sample: &TextSample, cfg: &RuleConfig) -> DetectorVerdict {
    let count: usize = cfg
        .special_tokens
        .iter()
        .map(|tok| sample.text().matches(tok.as_str()).count())
        .sum();
    let prediction = if count > 0 { Label::Llm } else { Label::Human };
    DetectorVerdict::new(SPECIAL_TOKEN, prediction, Some(count as f64))
}

/// Net weight of matched phrases; positive means LLM. Each phrase counts once
/// however often it occurs.
pub fn detect_common_phrase(sample: &TextSample, cfg: &RuleConfig) -> Result<DetectorVerdict> {
    if cfg.phrase_lexicon.is_empty() {
        return Err(Error::Config("common phrase detector needs a nonempty lexicon".into()));
    }
    let text = sample.text();
    let sum: f64 = cfg
        .phrase_lexicon
        .phrases()
        .iter()
        .filter(|p| text.contains(p.phrase.as_str()))
        .map(|p| match p.polarity {
            Label::Llm => p.weight,
            Label::Human => -p.weight,
        })
        .sum();
    let prediction = if sum > 0.0 { Label::Llm } else { Label::Human };
    Ok(DetectorVerdict::new(COMMON_PHRASE, prediction, Some(sum)))
}

pub(crate) fn comma_count(text: &str) -> usize {
    text.chars().filter(|&c| c == '，' || c == ',').count()
}

/// Commas per 100 characters; dense clauses read as human.
pub fn detect_sentence_segment(sample: &TextSample, cfg: &RuleConfig) -> DetectorVerdict {
    if sample.char_length() == 0 {
        return DetectorVerdict::new(SENTENCE_SEGMENT, Label::Human, Some(0.0));
    }
    let rate = 100.0 * comma_count(sample.text()) as f64 / sample.char_length() as f64;
    let prediction = if rate >= cfg.clause_rate_threshold {
        Label::Human
    } else {
        Label::Llm
    };
    DetectorVerdict::new(SENTENCE_SEGMENT, prediction, Some(rate))
}

/// Human iff some punctuation mark repeats at least `min_run` times in a row.
pub fn detect_consecutive_punctuation(sample: &TextSample, cfg: &RuleConfig) -> DetectorVerdict {
    if sample.char_length() == 0 {
        return DetectorVerdict::new(CONSECUTIVE_PUNCTUATION, Label::Human, Some(0.0));
    }
    let mut longest = 0usize;
    let mut run = 0usize;
    let mut prev: Option<char> = None;
    for c in sample.text().chars() {
        if cfg.punct_class.contains(&c) {
            run = if prev == Some(c) { run + 1 } else { 1 };
            longest = longest.max(run);
            prev = Some(c);
        } else {
            run = 0;
            prev = None;
        }
    }
    let prediction = if longest >= cfg.consecutive_punct_min_run {
        Label::Human
    } else {
        Label::Llm
    };
    DetectorVerdict::new(CONSECUTIVE_PUNCTUATION, prediction, Some(longest as f64))
}

/// Mines character n-grams whose document frequency differs most between the
/// two labels.
///
/// Score = |df(LLM) - df(Human)| with df the fraction of texts of that label
/// containing the n-gram. Zero-score n-grams are dropped; ties break on the
/// phrase in lexicographic order.
pub fn mine_phrases(train: &Dataset, top_k: usize, min_len: usize, max_len: usize) -> Result<PhraseLexicon> {
    if min_len == 0 || min_len > max_len {
        return Err(Error::InvalidInput(format!(
            "phrase length range [{min_len}, {max_len}] is invalid"
        )));
    }
    let counts = train.counts();
    if !counts.has_both() {
        return Err(Error::SingleLabel("phrase mining".into()));
    }
    if top_k == 0 {
        return Ok(PhraseLexicon::default());
    }

    // phrase -> (llm docs, human docs)
    let mut df: HashMap<String, (usize, usize)> = HashMap::new();
    let mut seen: HashSet<&str> = HashSet::new();
    for sample in train {
        let Some(label) = sample.gold_label() else { continue };
        let text = sample.text();
        let bounds: Vec<usize> = text.char_indices().map(|(i, _)| i).chain([text.len()]).collect();
        seen.clear();
        for n in min_len..=max_len {
            for start in 0..bounds.len().saturating_sub(n) {
                seen.insert(&text[bounds[start]..bounds[start + n]]);
            }
        }
        for gram in &seen {
            let entry = df.entry((*gram).to_string()).or_default();
            match label {
                Label::Llm => entry.0 += 1,
                Label::Human => entry.1 += 1,
            }
        }
    }

    let (n_llm, n_human) = (counts.llm as f64, counts.human as f64);
    let mut scored: Vec<Phrase> = df
        .into_iter()
        .filter_map(|(phrase, (l, h))| {
            let diff = l as f64 / n_llm - h as f64 / n_human;
            (diff != 0.0).then(|| Phrase {
                phrase,
                polarity: if diff > 0.0 { Label::Llm } else { Label::Human },
                weight: diff.abs(),
            })
        })
        .collect();
    scored.sort_by(|a, b| b.weight.total_cmp(&a.weight).then_with(|| a.phrase.cmp(&b.phrase)));
    scored.truncate(top_k);
    PhraseLexicon::new(scored)
}
