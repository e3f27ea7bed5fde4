//! Continuous scores from external detectors, and the per-length thresholds
//! that turn them into binary verdicts.
//!
//! Score files are JSONL `{"id": "...", "score": <real>}`. HTTP sources
//! answer `POST` with body `{"id", "text"}` and reply `{"score": <real>}`.

use std::collections::HashMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::eval::ConfusionMatrix;
use crate::model::{Dataset, DetectorVerdict, Label, TextSample};
use crate::{http, util};

/// Length bucket edges in characters: `[0,75) [75,150) [150,300) [300,∞)`.
pub const DEFAULT_BUCKET_EDGES: [usize; 3] = [75, 150, 300];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Orientation {
    #[default]
    HigherIsLlm,
    LowerIsLlm,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SourceKind {
    ScoreFile,
    HttpEndpoint,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreSource {
    pub detector_id: String,
    pub kind: SourceKind,
    /// File path or endpoint URL.
    pub location: String,
    #[serde(default)]
    pub orientation: Orientation,
}

#[derive(Deserialize)]
struct ScoreRecord {
    id: String,
    score: f64,
}

#[derive(Serialize)]
struct ScoreRequest<'a> {
    id: &'a str,
    text: &'a str,
}

#[derive(Deserialize)]
struct ScoreResponse {
    score: f64,
}

/// One finite score per sample id of `dataset`. Ids in a score file that the
/// dataset does not contain are ignored.
pub fn load_scores(source: &ScoreSource, dataset: &Dataset) -> Result<HashMap<String, f64>> {
    let mut out = HashMap::with_capacity(dataset.len());
    match source.kind {
        SourceKind::ScoreFile => {
            let records: Vec<ScoreRecord> = util::read_jsonl(Path::new(&source.location))?;
            let by_id: HashMap<String, f64> = records.into_iter().map(|r| (r.id, r.score)).collect();
            let mut missing = Vec::new();
            for s in dataset {
                match by_id.get(s.id()) {
                    Some(&score) => {
                        out.insert(s.id().to_string(), score);
                    }
                    None => missing.push(s.id().to_string()),
                }
            }
            if !missing.is_empty() {
                return Err(Error::MissingIds { what: "score", ids: missing });
            }
        }
        SourceKind::HttpEndpoint => {
            let agent = http::agent();
            for s in dataset {
                let body = ScoreRequest { id: s.id(), text: s.text() };
                let resp: ScoreResponse = http::post_json(&agent, &source.location, &body)?;
                out.insert(s.id().to_string(), resp.score);
            }
        }
    }
    for s in dataset {
        if !out[s.id()].is_finite() {
            return Err(Error::NonFiniteScore(s.id().to_string()));
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThresholdBucket {
    /// Exclusive upper bound on character length; `None` is unbounded.
    pub max_char_length: Option<usize>,
    #[serde(with = "util::extended_f64")]
    pub threshold: f64,
}

/// Per-length-bucket thresholds for one detector.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThresholdProfile {
    pub detector_id: String,
    #[serde(default)]
    pub orientation: Orientation,
    pub buckets: Vec<ThresholdBucket>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub warnings: Vec<String>,
}

impl ThresholdProfile {
    pub fn new(detector_id: impl Into<String>, orientation: Orientation, buckets: Vec<ThresholdBucket>) -> Result<Self> {
        let profile = ThresholdProfile {
            detector_id: detector_id.into(),
            orientation,
            buckets,
            warnings: Vec::new(),
        };
        profile.validate()?;
        Ok(profile)
    }

    pub fn validate(&self) -> Result<()> {
        let Some(last) = self.buckets.last() else {
            return Err(Error::Config(format!("profile `{}` has no buckets", self.detector_id)));
        };
        if last.max_char_length.is_some() {
            return Err(Error::Config(format!("profile `{}`: last bucket must be unbounded", self.detector_id)));
        }
        let bounds: Vec<usize> = self.buckets.iter().filter_map(|b| b.max_char_length).collect();
        if bounds.len() != self.buckets.len() - 1 || bounds.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::Config(format!(
                "profile `{}`: bucket bounds must be strictly increasing",
                self.detector_id
            )));
        }
        if self.buckets.iter().any(|b| b.threshold.is_nan()) {
            return Err(Error::Config(format!("profile `{}`: NaN threshold", self.detector_id)));
        }
        Ok(())
    }

    pub fn bucket_index(&self, char_length: usize) -> usize {
        self.buckets
            .iter()
            .position(|b| b.max_char_length.is_none_or(|max| char_length < max))
            .expect("last bucket is unbounded")
    }

    pub fn threshold_for(&self, char_length: usize) -> f64 {
        self.buckets[self.bucket_index(char_length)].threshold
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let p: ThresholdProfile = util::read_json(path.as_ref())?;
        p.validate()?;
        Ok(p)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        util::write_json(path.as_ref(), self)
    }
}

pub(crate) fn predict(score: f64, threshold: f64, orientation: Orientation) -> Label {
    let llm = match orientation {
        Orientation::HigherIsLlm => score >= threshold,
        Orientation::LowerIsLlm => score <= threshold,
    };
    if llm {
        Label::Llm
    } else {
        Label::Human
    }
}

pub fn score_to_verdict(sample: &TextSample, score: f64, profile: &ThresholdProfile) -> DetectorVerdict {
    let threshold = profile.threshold_for(sample.char_length());
    DetectorVerdict::new(
        profile.detector_id.clone(),
        predict(score, threshold, profile.orientation),
        Some(score),
    )
}

/// Best threshold on one set of (score, gold) pairs.
///
/// Candidates are `-inf`, the midpoints between consecutive distinct scores,
/// and `+inf`. Each is scored by macro-F1; the smallest threshold among the
/// maxima wins. Runs in O(n log n).
pub fn best_threshold(pairs: &[(f64, Label)], orientation: Orientation) -> (f64, f64) {
    let mut sorted: Vec<(f64, Label)> = pairs.to_vec();
    sorted.sort_by(|a, b| a.0.total_cmp(&b.0));

    let positives = sorted.iter().filter(|p| p.1 == Label::Llm).count() as u64;
    let negatives = sorted.len() as u64 - positives;
    // Threshold below every score: higher_is_llm predicts all LLM, lower_is_llm all human.
    let mut cm = match orientation {
        Orientation::HigherIsLlm => ConfusionMatrix { tp: positives, fp: negatives, tn: 0, fn_: 0 },
        Orientation::LowerIsLlm => ConfusionMatrix { tp: 0, fp: 0, tn: negatives, fn_: positives },
    };
    let mut best = (f64::NEG_INFINITY, cm.macro_f1());

    let mut i = 0;
    while i < sorted.len() {
        let value = sorted[i].0;
        let mut j = i;
        while j < sorted.len() && sorted[j].0 == value {
            let is_llm = sorted[j].1 == Label::Llm;
            // crossing `value` flips the group's prediction
            match (orientation, is_llm) {
                (Orientation::HigherIsLlm, true) => {
                    cm.tp -= 1;
                    cm.fn_ += 1;
                }
                (Orientation::HigherIsLlm, false) => {
                    cm.fp -= 1;
                    cm.tn += 1;
                }
                (Orientation::LowerIsLlm, true) => {
                    cm.fn_ -= 1;
                    cm.tp += 1;
                }
                (Orientation::LowerIsLlm, false) => {
                    cm.tn -= 1;
                    cm.fp += 1;
                }
            }
            j += 1;
        }
        let threshold = if j < sorted.len() {
            value + (sorted[j].0 - value) / 2.0
        } else {
            f64::INFINITY
        };
        let f1 = cm.macro_f1();
        if f1 > best.1 {
            best = (threshold, f1);
        }
        i = j;
    }
    if sorted.is_empty() {
        // all-human policy is the only other candidate
        let f1 = ConfusionMatrix::default().macro_f1();
        if f1 > best.1 {
            best = (f64::INFINITY, f1);
        }
    }
    best
}

/// Per-bucket threshold calibration maximizing in-bucket macro-F1.
///
/// `bucket_edges` are exclusive upper bounds; a final unbounded bucket is
/// always appended. A bucket lacking one of the two classes inherits the
/// all-lengths threshold, and a warning is recorded in the profile.
pub fn calibrate_thresholds(
    detector_id: &str,
    scores: &HashMap<String, f64>,
    labeled: &Dataset,
    bucket_edges: &[usize],
    orientation: Orientation,
) -> Result<ThresholdProfile> {
    let mut buckets: Vec<ThresholdBucket> = bucket_edges
        .iter()
        .map(|&e| ThresholdBucket { max_char_length: Some(e), threshold: 0.0 })
        .collect();
    buckets.push(ThresholdBucket { max_char_length: None, threshold: 0.0 });
    let mut profile = ThresholdProfile::new(detector_id, orientation, buckets)?;

    let mut all = Vec::with_capacity(labeled.len());
    let mut per_bucket: Vec<Vec<(f64, Label)>> = vec![Vec::new(); profile.buckets.len()];
    let mut missing = Vec::new();
    for s in labeled {
        let Some(gold) = s.gold_label() else {
            return Err(Error::MissingIds { what: "gold label", ids: vec![s.id().to_string()] });
        };
        let Some(&score) = scores.get(s.id()) else {
            missing.push(s.id().to_string());
            continue;
        };
        all.push((score, gold));
        per_bucket[profile.bucket_index(s.char_length())].push((score, gold));
    }
    if !missing.is_empty() {
        return Err(Error::MissingIds { what: "score", ids: missing });
    }

    let (global, _) = best_threshold(&all, orientation);
    for (idx, pairs) in per_bucket.iter().enumerate() {
        let has_both = pairs.iter().any(|p| p.1 == Label::Llm) && pairs.iter().any(|p| p.1 == Label::Human);
        profile.buckets[idx].threshold = if has_both {
            best_threshold(pairs, orientation).0
        } else {
            let msg = format!(
                "bucket {idx} ({} samples) lacks one class; using global threshold {global}",
                pairs.len()
            );
            log::warn!("{detector_id}: {msg}");
            profile.warnings.push(msg);
            global
        };
    }
    Ok(profile)
}
