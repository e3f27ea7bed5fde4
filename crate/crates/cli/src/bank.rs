//! Fitted detectors and their on-disk artifacts.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use mgtd_core::freq::{self, TokenFrequencyTable, Tokenizer, TokenizerKind};
use mgtd_core::model::{Dataset, DetectorVerdict};
use mgtd_core::rules::{self, PhraseLexicon, RuleConfig};
use mgtd_core::scores::{self, ScoreSource, ThresholdProfile};
use mgtd_core::strategy::VerdictTable;

use crate::config::{DetectorConfig, RunConfig};
use crate::CliError;

pub const BOOK_FILE: &str = "strategy_book.json";
pub const FIT_REPORT_FILE: &str = "fit_report.json";

pub fn lexicon_path(dir: &Path, id: &str) -> PathBuf {
    dir.join(format!("{id}.lexicon.jsonl"))
}

pub fn token_table_path(dir: &Path, id: &str) -> PathBuf {
    dir.join(format!("{id}.tokens.json"))
}

pub fn thresholds_path(dir: &Path, id: &str) -> PathBuf {
    dir.join(format!("{id}.thresholds.json"))
}

enum Fitted {
    SpecialToken,
    ConsecutivePunctuation,
    SentenceSegment,
    CommonPhrase(RuleConfig),
    CommonToken(Tokenizer, TokenFrequencyTable),
    Score(ScoreSource, ThresholdProfile),
}

/// Every configured detector, ready to judge.
pub struct DetectorBank {
    detectors: Vec<(String, Fitted)>,
    rules: RuleConfig,
}

/// Verdicts for a dataset, plus each score detector's raw scores.
pub struct Judged {
    pub table: VerdictTable,
    pub raw_scores: BTreeMap<String, Vec<f64>>,
}

impl Judged {
    /// Per-sample verdict lists in registry order.
    pub fn per_sample(&self, registry: &[String], n: usize) -> Vec<Vec<DetectorVerdict>> {
        (0..n)
            .map(|i| registry.iter().map(|id| self.table[id][i].clone()).collect())
            .collect()
    }
}

fn tokenizer(kind: TokenizerKind, vocab: Option<&Path>) -> Result<Tokenizer, CliError> {
    Ok(match kind {
        TokenizerKind::CharUnigram => Tokenizer::char_unigram(),
        TokenizerKind::CharBigram => Tokenizer::char_bigram(),
        TokenizerKind::ExternalVocab => {
            Tokenizer::load_vocab(vocab.ok_or_else(|| CliError::Config("external_vocab needs `vocab`".into()))?)?
        }
    })
}

fn score_source(id: &str, det: &DetectorConfig) -> Option<ScoreSource> {
    match det {
        DetectorConfig::Score { source, location, orientation, .. } => Some(ScoreSource {
            detector_id: id.to_string(),
            kind: *source,
            location: location.clone(),
            orientation: *orientation,
        }),
        _ => None,
    }
}

/// Threshold profiles for every score detector, fitted on `train`.
pub fn calibrate_all(cfg: &RunConfig, train: &Dataset) -> Result<Vec<ThresholdProfile>, CliError> {
    let mut out = Vec::new();
    for det in &cfg.detectors {
        if let Some(source) = score_source(det.id(), det) {
            let scores = scores::load_scores(&source, train)?;
            out.push(scores::calibrate_thresholds(
                det.id(),
                &scores,
                train,
                &cfg.threshold_edges,
                source.orientation,
            )?);
        }
    }
    Ok(out)
}

impl DetectorBank {
    /// Fits lexicons, token tables and thresholds on `train` and writes them
    /// to the artifacts directory.
    pub fn fit(cfg: &RunConfig, train: &Dataset) -> Result<DetectorBank, CliError> {
        let dir = &cfg.artifacts_dir;
        let mut profiles: BTreeMap<String, ThresholdProfile> =
            calibrate_all(cfg, train)?.into_iter().map(|p| (p.detector_id.clone(), p)).collect();
        let mut detectors = Vec::with_capacity(cfg.detectors.len());
        for det in &cfg.detectors {
            let id = det.id().to_string();
            let fitted = match det {
                DetectorConfig::SpecialToken { .. } => Fitted::SpecialToken,
                DetectorConfig::ConsecutivePunctuation { .. } => Fitted::ConsecutivePunctuation,
                DetectorConfig::SentenceSegment { .. } => Fitted::SentenceSegment,
                DetectorConfig::CommonPhrase { top_k, min_len, max_len, .. } => {
                    let lexicon = rules::mine_phrases(train, *top_k, *min_len, *max_len)?;
                    lexicon.save(lexicon_path(dir, &id))?;
                    Fitted::CommonPhrase(cfg.rules.clone().with_lexicon(lexicon))
                }
                DetectorConfig::CommonToken { tokenizer: kind, vocab, attribution, .. } => {
                    let tok = tokenizer(*kind, vocab.as_deref())?;
                    let table = freq::build_token_table(train, &tok)?.with_attribution(*attribution);
                    table.save(token_table_path(dir, &id))?;
                    Fitted::CommonToken(tok, table)
                }
                DetectorConfig::Score { .. } => {
                    let profile = profiles.remove(&id).expect("calibrated above");
                    profile.save(thresholds_path(dir, &id))?;
                    Fitted::Score(score_source(&id, det).expect("score det"), profile)
                }
            };
            detectors.push((id, fitted));
        }
        Ok(DetectorBank { detectors, rules: cfg.rules.clone() })
    }

    /// Reloads the artifacts written by [`DetectorBank::fit`].
    pub fn load(cfg: &RunConfig) -> Result<DetectorBank, CliError> {
        let dir = &cfg.artifacts_dir;
        let mut detectors = Vec::with_capacity(cfg.detectors.len());
        for det in &cfg.detectors {
            let id = det.id().to_string();
            let fitted = match det {
                DetectorConfig::SpecialToken { .. } => Fitted::SpecialToken,
                DetectorConfig::ConsecutivePunctuation { .. } => Fitted::ConsecutivePunctuation,
                DetectorConfig::SentenceSegment { .. } => Fitted::SentenceSegment,
                DetectorConfig::CommonPhrase { .. } => {
                    Fitted::CommonPhrase(cfg.rules.clone().with_lexicon(PhraseLexicon::load(lexicon_path(dir, &id))?))
                }
                DetectorConfig::CommonToken { tokenizer: kind, vocab, .. } => Fitted::CommonToken(
                    tokenizer(*kind, vocab.as_deref())?,
                    TokenFrequencyTable::load(token_table_path(dir, &id))?,
                ),
                DetectorConfig::Score { .. } => Fitted::Score(
                    score_source(&id, det).expect("score det"),
                    ThresholdProfile::load(thresholds_path(dir, &id))?,
                ),
            };
            detectors.push((id, fitted));
        }
        Ok(DetectorBank { detectors, rules: cfg.rules.clone() })
    }

    /// Runs every detector on every sample.
    pub fn judge(&self, dataset: &Dataset) -> Result<Judged, CliError> {
        let mut table = VerdictTable::new();
        let mut raw_scores = BTreeMap::new();
        for (id, fitted) in &self.detectors {
            let column = match fitted {
                Fitted::SpecialToken => dataset.iter().map(|s| rules::detect_special_token(s, &self.rules)).collect(),
                Fitted::ConsecutivePunctuation => {
                    dataset.iter().map(|s| rules::detect_consecutive_punctuation(s, &self.rules)).collect()
                }
                Fitted::SentenceSegment => {
                    dataset.iter().map(|s| rules::detect_sentence_segment(s, &self.rules)).collect()
                }
                Fitted::CommonPhrase(rc) => dataset
                    .iter()
                    .map(|s| rules::detect_common_phrase(s, rc))
                    .collect::<Result<Vec<_>, _>>()?,
                Fitted::CommonToken(tok, t) => dataset
                    .iter()
                    .map(|s| freq::classify_common_token(s, t, tok))
                    .collect::<Result<Vec<_>, _>>()?,
                Fitted::Score(source, profile) => {
                    let scores = scores::load_scores(source, dataset)?;
                    let raw: Vec<f64> = dataset.iter().map(|s| scores[s.id()]).collect();
                    let column = dataset
                        .iter()
                        .zip(&raw)
                        .map(|(s, &x)| scores::score_to_verdict(s, x, profile))
                        .collect();
                    raw_scores.insert(id.clone(), raw);
                    column
                }
            };
            // rule detectors name themselves; keep the configured id
            let column: Vec<DetectorVerdict> = column_with_id(id, column);
            table.insert(id.clone(), column);
        }
        Ok(Judged { table, raw_scores })
    }
}

fn column_with_id(id: &str, column: Vec<DetectorVerdict>) -> Vec<DetectorVerdict> {
    column
        .into_iter()
        .map(|v| {
            if v.detector_id() == id {
                v
            } else {
                DetectorVerdict::new(id, v.prediction(), v.raw_score())
            }
        })
        .collect()
}
