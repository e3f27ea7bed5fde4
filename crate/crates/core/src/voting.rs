//! Weighted voting: score, support gate, threshold and override rules.
//!
//! For a strategy with weights `w`, the score is `s = sum(w_i * v_i)` over
//! detectors with `w_i > 0` and votes `v_i` in `{-1, +1}`. The text is LLM
//! iff `s + lambda * d >= tau`, where `d` is the support signal. The
//! provider is consulted only when `lambda > 0` and `|s - tau|` lies within
//! the strategy's uncertainty band; otherwise `d = 0`.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{DetectorVerdict, Label, TextSample};
use crate::strategy::{Strategy, StrategyBook};
use crate::support::{SupportProvider, SupportSignal};
use crate::util;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Contribution {
    pub detector_id: String,
    pub weight: f64,
    pub vote: i8,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VoteOutcome {
    pub sample_id: String,
    pub strategy_id: String,
    pub score: f64,
    /// Present only if the provider was consulted.
    pub support_signal: Option<SupportSignal>,
    /// Decision before override rules.
    pub vote_decision: Label,
    pub decision: Label,
    pub override_rule: Option<String>,
    pub per_detector: Vec<Contribution>,
}

/// Forces a label when `pattern` occurs in the text. Disabled unless
/// `enabled` is set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OverrideRule {
    pub rule_id: String,
    pub pattern: String,
    pub forced_label: Label,
    #[serde(default)]
    pub enabled: bool,
}

fn contributions(verdicts: &[DetectorVerdict], strategy: &Strategy) -> Result<Vec<Contribution>> {
    strategy
        .active()
        .map(|(id, weight)| {
            let v = verdicts
                .iter()
                .find(|v| v.detector_id() == id)
                .ok_or_else(|| Error::MissingVerdict(id.to_string()))?;
            Ok(Contribution { detector_id: id.to_string(), weight, vote: v.vote() })
        })
        .collect()
}

pub fn compute_score(verdicts: &[DetectorVerdict], strategy: &Strategy) -> Result<f64> {
    Ok(contributions(verdicts, strategy)?
        .iter()
        .map(|c| c.weight * f64::from(c.vote))
        .sum())
}

pub fn final_decision(score: f64, support: f64, strategy: &Strategy) -> Result<Label> {
    if !(-1.0..=1.0).contains(&support) {
        return Err(Error::SupportOutOfRange(support));
    }
    Ok(if score + strategy.lambda * support >= strategy.tau {
        Label::Llm
    } else {
        Label::Human
    })
}

/// Whether a sample with this score is close enough to `tau` to ask for support.
pub fn needs_support(score: f64, strategy: &Strategy) -> bool {
    strategy.lambda > 0.0 && (score - strategy.tau).abs() <= strategy.uncertainty_band()
}

/// The first enabled rule whose pattern occurs in the text.
pub fn apply_overrides<'a>(sample: &TextSample, rules: &'a [OverrideRule]) -> Option<&'a OverrideRule> {
    rules
        .iter()
        .find(|r| r.enabled && !r.pattern.is_empty() && sample.text().contains(&r.pattern))
}

/// Full decision for one sample.
pub fn judge(
    sample: &TextSample,
    verdicts: &[DetectorVerdict],
    book: &StrategyBook,
    provider: Option<&dyn SupportProvider>,
    rules: &[OverrideRule],
    perplexity: Option<f64>,
) -> Result<VoteOutcome> {
    let strategy = book.assign(sample, perplexity);
    let per_detector = contributions(verdicts, strategy)?;
    let score: f64 = per_detector.iter().map(|c| c.weight * f64::from(c.vote)).sum();
    let support_signal = match provider {
        Some(p) if needs_support(score, strategy) => Some(p.query(sample)),
        _ => None,
    };
    let d = support_signal.as_ref().map_or(0.0, |s| s.value);
    let vote_decision = final_decision(score, d, strategy)?;
    let rule = apply_overrides(sample, rules);
    Ok(VoteOutcome {
        sample_id: sample.id().to_string(),
        strategy_id: strategy.strategy_id.clone(),
        score,
        support_signal,
        vote_decision,
        decision: rule.map_or(vote_decision, |r| r.forced_label),
        override_rule: rule.map(|r| r.rule_id.clone()),
        per_detector,
    })
}

pub fn load_override_rules(path: impl AsRef<Path>) -> Result<Vec<OverrideRule>> {
    util::read_jsonl(path.as_ref())
}

/// One JSON object per line, in input order.
pub fn write_audit(path: impl AsRef<Path>, outcomes: &[VoteOutcome]) -> Result<()> {
    util::write_jsonl(path.as_ref(), outcomes)
}
