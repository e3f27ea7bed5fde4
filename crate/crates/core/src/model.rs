//! Samples, labels, datasets and detector verdicts.
//!
//! Datasets travel as JSONL, one object per line:
//! `{"id": "...", "text": "...", "label": 0|1, "subset": "..."}` where
//! `label` and `subset` are optional and `1` means machine-generated.
//! Predictions travel as `{"id": "...", "pred": 0|1}`.

use std::collections::HashSet;
use std::fmt;
use std::path::Path;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};
use crate::util;

/// Binary target. `Llm` is the positive class and encodes as `1`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Label {
    Human = 0,
    Llm = 1,
}

impl Label {
    pub const ALL: [Label; 2] = [Label::Human, Label::Llm];

    pub fn from_bit(bit: u8) -> Option<Label> {
        match bit {
            0 => Some(Label::Human),
            1 => Some(Label::Llm),
            _ => None,
        }
    }

    pub fn bit(self) -> u8 {
        self as u8
    }

    /// Signed vote: `+1` for `Llm`, `-1` for `Human`.
    pub fn vote(self) -> i8 {
        2 * self.bit() as i8 - 1
    }

    pub fn flip(self) -> Label {
        match self {
            Label::Human => Label::Llm,
            Label::Llm => Label::Human,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Label::Human => "human",
            Label::Llm => "llm",
        }
    }
}

impl fmt::Display for Label {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl Serialize for Label {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_u8(self.bit())
    }
}

impl<'de> Deserialize<'de> for Label {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let bit = u8::deserialize(d)?;
        Label::from_bit(bit).ok_or_else(|| serde::de::Error::custom(format!("label must be 0 or 1, got {bit}")))
    }
}

/// One text, with its cached length in Unicode scalar values.
#[derive(Debug, Clone, PartialEq)]
pub struct TextSample {
    id: String,
    text: String,
    gold_label: Option<Label>,
    subset: Option<String>,
    char_length: usize,
}

impl TextSample {
    pub fn new(id: impl Into<String>, text: impl Into<String>) -> Self {
        let text = text.into();
        let char_length = text.chars().count();
        TextSample {
            id: id.into(),
            text,
            gold_label: None,
            subset: None,
            char_length,
        }
    }

    pub fn with_label(mut self, label: Label) -> Self {
        self.gold_label = Some(label);
        self
    }

    pub fn with_gold(mut self, label: Option<Label>) -> Self {
        self.gold_label = label;
        self
    }

    pub fn with_subset(mut self, subset: impl Into<String>) -> Self {
        self.subset = Some(subset.into());
        self
    }

    pub fn with_id(mut self, id: impl Into<String>) -> Self {
        self.id = id.into();
        self
    }

    pub fn with_text(self, text: impl Into<String>) -> Self {
        TextSample {
            subset: self.subset,
            gold_label: self.gold_label,
            ..TextSample::new(self.id, text)
        }
    }

    pub fn id(&self) -> &str {
        &self.id
    }

    pub fn text(&self) -> &str {
        &self.text
    }

    pub fn gold_label(&self) -> Option<Label> {
        self.gold_label
    }

    pub fn subset(&self) -> Option<&str> {
        self.subset.as_deref()
    }

    pub fn char_length(&self) -> usize {
        self.char_length
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabelCounts {
    pub human: usize,
    pub llm: usize,
}

impl LabelCounts {
    pub fn get(&self, label: Label) -> usize {
        match label {
            Label::Human => self.human,
            Label::Llm => self.llm,
        }
    }

    pub fn has_both(&self) -> bool {
        self.human > 0 && self.llm > 0
    }
}

/// Ordered collection of samples with unique, nonempty ids.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Dataset {
    samples: Vec<TextSample>,
    counts: LabelCounts,
}

impl Dataset {
    pub fn new(samples: Vec<TextSample>) -> Result<Self> {
        let mut seen = HashSet::with_capacity(samples.len());
        let mut counts = LabelCounts::default();
        for (pos, s) in samples.iter().enumerate() {
            if s.id.is_empty() {
                return Err(Error::EmptyId(pos));
            }
            if !seen.insert(s.id.as_str()) {
                return Err(Error::DuplicateId(s.id.clone()));
            }
            match s.gold_label {
                Some(Label::Human) => counts.human += 1,
                Some(Label::Llm) => counts.llm += 1,
                None => {}
            }
        }
        Ok(Dataset { samples, counts })
    }

    pub fn samples(&self) -> &[TextSample] {
        &self.samples
    }

    pub fn iter(&self) -> std::slice::Iter<'_, TextSample> {
        self.samples.iter()
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn counts(&self) -> LabelCounts {
        self.counts
    }

    pub fn is_fully_labeled(&self) -> bool {
        self.samples.iter().all(|s| s.gold_label.is_some())
    }

    /// Gold labels in order; errors naming the first unlabeled id.
    pub fn gold_labels(&self) -> Result<Vec<Label>> {
        let missing: Vec<String> = self
            .samples
            .iter()
            .filter(|s| s.gold_label.is_none())
            .map(|s| s.id.clone())
            .take(5)
            .collect();
        if !missing.is_empty() {
            return Err(Error::MissingIds {
                what: "gold label",
                ids: missing,
            });
        }
        Ok(self.samples.iter().filter_map(|s| s.gold_label).collect())
    }

    /// Sub-dataset of the samples whose positions are listed, in that order.
    pub fn select(&self, positions: &[usize]) -> Dataset {
        let samples = positions.iter().map(|&i| self.samples[i].clone()).collect();
        // ids stay unique because positions index a valid dataset
        Dataset::new(samples).expect("subset of a valid dataset")
    }
}

impl<'a> IntoIterator for &'a Dataset {
    type Item = &'a TextSample;
    type IntoIter = std::slice::Iter<'a, TextSample>;

    fn into_iter(self) -> Self::IntoIter {
        self.samples.iter()
    }
}

/// One detector's binary verdict on one text.
///
/// The signed vote is derived from the prediction, so the two can never
/// disagree.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetectorVerdict {
    detector_id: String,
    prediction: Label,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    raw_score: Option<f64>,
}

impl DetectorVerdict {
    pub fn new(detector_id: impl Into<String>, prediction: Label, raw_score: Option<f64>) -> Self {
        DetectorVerdict {
            detector_id: detector_id.into(),
            prediction,
            raw_score,
        }
    }

    pub fn detector_id(&self) -> &str {
        &self.detector_id
    }

    pub fn prediction(&self) -> Label {
        self.prediction
    }

    pub fn vote(&self) -> i8 {
        self.prediction.vote()
    }

    pub fn raw_score(&self) -> Option<f64> {
        self.raw_score
    }
}

#[derive(Serialize, Deserialize)]
struct SampleRecord {
    id: String,
    text: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    label: Option<Label>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    subset: Option<String>,
}

#[derive(Serialize, Deserialize)]
struct PredictionRecord {
    id: String,
    pred: Label,
}

pub fn load_dataset(path: impl AsRef<Path>) -> Result<Dataset> {
    let records: Vec<SampleRecord> = util::read_jsonl(path.as_ref())?;
    let samples = records
        .into_iter()
        .map(|r| {
            let s = TextSample::new(r.id, r.text).with_gold(r.label);
            match r.subset {
                Some(tag) => s.with_subset(tag),
                None => s,
            }
        })
        .collect();
    Dataset::new(samples)
}

pub fn save_dataset(dataset: &Dataset, path: impl AsRef<Path>) -> Result<()> {
    util::write_jsonl(
        path.as_ref(),
        dataset.iter().map(|s| SampleRecord {
            id: s.id.clone(),
            text: s.text.clone(),
            label: s.gold_label,
            subset: s.subset.clone(),
        }),
    )
}

pub fn save_predictions(dataset: &Dataset, predictions: &[Label], path: impl AsRef<Path>) -> Result<()> {
    if predictions.len() != dataset.len() {
        return Err(Error::LengthMismatch {
            expected: dataset.len(),
            actual: predictions.len(),
        });
    }
    util::write_jsonl(
        path.as_ref(),
        dataset.iter().zip(predictions).map(|(s, &pred)| PredictionRecord {
            id: s.id.clone(),
            pred,
        }),
    )
}

pub fn load_predictions(path: impl AsRef<Path>) -> Result<Vec<(String, Label)>> {
    let records: Vec<PredictionRecord> = util::read_jsonl(path.as_ref())?;
    Ok(records.into_iter().map(|r| (r.id, r.pred)).collect())
}

/// Lines up a prediction file with a dataset by id.
pub fn align_predictions(dataset: &Dataset, predictions: &[(String, Label)]) -> Result<Vec<Label>> {
    let by_id: std::collections::HashMap<&str, Label> =
        predictions.iter().map(|(id, l)| (id.as_str(), *l)).collect();
    let mut missing = Vec::new();
    let aligned: Vec<Label> = dataset
        .iter()
        .filter_map(|s| {
            let got = by_id.get(s.id()).copied();
            if got.is_none() {
                missing.push(s.id().to_string());
            }
            got
        })
        .collect();
    if !missing.is_empty() {
        return Err(Error::MissingIds {
            what: "prediction",
            ids: missing,
        });
    }
    Ok(aligned)
}
