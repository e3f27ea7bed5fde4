//! Strategies: which detectors vote on a text, and how heavily.
//!
//! A [`StrategyBook`] maps every text to exactly one [`Strategy`], either by
//! half-open character-length intervals (first match wins) or by the nearest
//! feature-space centroid.

mod features;
mod search;

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::TextSample;
use crate::util;

pub use features::{extract_features, fit_clusters, ClusterModel, FeatureVector, Standardizer};
pub use search::{
    ensemble_macro_f1, fit_strategy_book, optimize_weights, BookFitOptions, SearchGrid, VerdictTable,
    DEFAULT_WEIGHT_GRID,
};

/// Detector ids in the registry order the default book's weights follow.
pub const STANDARD_REGISTRY: [&str; 18] = [
    "special_token",
    "consecutive_punctuation",
    "common_phrase",
    "sentence_segment",
    "common_token",
    "fast_detect_qwen",
    "fast_detect_analytic_qwen",
    "fast_detect_analytic_glm",
    "binoculars_qwen",
    "chinese_bert",
    "chinese_roberta",
    "chinese_roberta_ext_short",
    "glm4_lora",
    "qwen_lora",
    "qwen_lora_ext_short",
    "qwen_lora_short",
    "hybrid_roberta",
    "hybrid_roberta_ext_short",
];

/// Id, length bounds, weights over [`STANDARD_REGISTRY`], lambda, tau.
type DefaultRow = (&'static str, usize, Option<usize>, [f64; 18], f64, f64);

/// Weights over [`STANDARD_REGISTRY`], then lambda and tau, per text type.
const DEFAULT_ROWS: [DefaultRow; 4] = [
    (
        "ext_short",
        0,
        Some(75),
        [0., 10., 0., 10., 10., 60., 60., 55., 60., 0., 0., 0., 0., 0., 95., 400., 10., 0.],
        250.,
        0.,
    ),
    (
        "short",
        75,
        Some(150),
        [0., 10., 0., 10., 40., 40., 40., 35., 40., 0., 0., 0., 0., 40., 95., 400., 40., 0.],
        150.,
        0.,
    ),
    (
        "medium",
        150,
        Some(300),
        [0., 10., 0., 10., 40., 40., 40., 35., 40., 0., 0., 0., 0., 100., 80., 90., 40., 0.],
        0.,
        0.,
    ),
    (
        "general",
        0,
        None,
        [0., 10., 10., 10., 40., 70., 70., 70., 75., 50., 60., 0., 85., 400., 40., 60., 80., 0.],
        0.,
        0.,
    ),
];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Predicate {
    /// Half-open interval `[lo, hi)` on character length; `hi = None` is unbounded.
    Length { lo: usize, hi: Option<usize> },
    Cluster { centroid: usize },
}

impl Predicate {
    pub const CATCH_ALL: Predicate = Predicate::Length { lo: 0, hi: None };

    fn contains_length(&self, n: usize) -> bool {
        match *self {
            Predicate::Length { lo, hi } => n >= lo && hi.is_none_or(|h| n < h),
            Predicate::Cluster { .. } => false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Strategy {
    pub strategy_id: String,
    /// Detector id -> non-negative weight. Zero or absent means excluded.
    pub weights: BTreeMap<String, f64>,
    pub lambda: f64,
    pub tau: f64,
    pub predicate: Predicate,
    /// Half-width of the band around `tau` in which the support provider is
    /// consulted. Defaults to twice the smallest positive weight.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub support_band: Option<f64>,
}

impl Strategy {
    pub fn weight(&self, detector_id: &str) -> f64 {
        self.weights.get(detector_id).copied().unwrap_or(0.0)
    }

    /// Detectors with strictly positive weight, in id order.
    pub fn active(&self) -> impl Iterator<Item = (&str, f64)> {
        self.weights.iter().filter(|(_, &w)| w > 0.0).map(|(k, &w)| (k.as_str(), w))
    }

    pub fn uncertainty_band(&self) -> f64 {
        self.support_band.unwrap_or_else(|| {
            2.0 * self.active().map(|(_, w)| w).fold(f64::INFINITY, f64::min)
        })
    }

    /// Multiplies every weight, lambda, tau and an explicit support band by `c`.
    pub fn scaled(&self, c: f64) -> Strategy {
        Strategy {
            weights: self.weights.iter().map(|(k, w)| (k.clone(), w * c)).collect(),
            lambda: self.lambda * c,
            tau: self.tau * c,
            support_band: self.support_band.map(|b| b * c),
            ..self.clone()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let id = &self.strategy_id;
        if let Some((k, w)) = self.weights.iter().find(|(_, w)| !(w.is_finite() && **w >= 0.0)) {
            return Err(Error::Config(format!("strategy `{id}`: weight of `{k}` must be finite and >= 0, got {w}")));
        }
        if self.active().next().is_none() {
            return Err(Error::Config(format!("strategy `{id}` has no positive weight")));
        }
        if !(self.lambda.is_finite() && self.lambda >= 0.0) {
            return Err(Error::Config(format!("strategy `{id}`: lambda must be finite and >= 0")));
        }
        if !self.tau.is_finite() {
            return Err(Error::Config(format!("strategy `{id}`: tau must be finite")));
        }
        if let Some(b) = self.support_band {
            if !(b.is_finite() && b >= 0.0) {
                return Err(Error::Config(format!("strategy `{id}`: support_band must be finite and >= 0")));
            }
        }
        if let Predicate::Length { lo, hi: Some(hi) } = self.predicate {
            if hi <= lo {
                return Err(Error::Config(format!("strategy `{id}`: empty length interval [{lo}, {hi})")));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BookMode {
    LengthBuckets,
    Clusters,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StrategyBook {
    pub mode: BookMode,
    pub strategies: Vec<Strategy>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub centroids: Option<Vec<FeatureVector>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub standardizer: Option<Standardizer>,
    #[serde(default)]
    pub uses_perplexity: bool,
}

impl StrategyBook {
    pub fn length_buckets(strategies: Vec<Strategy>) -> Result<Self> {
        let book = StrategyBook {
            mode: BookMode::LengthBuckets,
            strategies,
            centroids: None,
            standardizer: None,
            uses_perplexity: false,
        };
        book.validate()?;
        Ok(book)
    }

    pub fn validate(&self) -> Result<()> {
        if self.strategies.is_empty() {
            return Err(Error::Config("strategy book is empty".into()));
        }
        let mut ids = std::collections::HashSet::new();
        for s in &self.strategies {
            s.validate()?;
            if !ids.insert(s.strategy_id.as_str()) {
                return Err(Error::Config(format!("duplicate strategy id `{}`", s.strategy_id)));
            }
        }
        match self.mode {
            BookMode::LengthBuckets => self.validate_coverage(),
            BookMode::Clusters => self.validate_clusters(),
        }
    }

    fn validate_coverage(&self) -> Result<()> {
        let mut intervals = Vec::new();
        for s in &self.strategies {
            match s.predicate {
                Predicate::Length { lo, hi } => intervals.push((lo, hi)),
                Predicate::Cluster { .. } => {
                    return Err(Error::Config(format!(
                        "strategy `{}` has a cluster predicate in a length-bucket book",
                        s.strategy_id
                    )))
                }
            }
        }
        intervals.sort();
        let mut covered_to = Some(0usize); // None = everything covered
        for (lo, hi) in intervals {
            let Some(upto) = covered_to else { break };
            if lo > upto {
                return Err(Error::Config(format!("no strategy covers lengths [{upto}, {lo})")));
            }
            covered_to = hi.map(|h| upto.max(h));
        }
        match covered_to {
            None => Ok(()),
            Some(upto) => Err(Error::Config(format!(
                "no catch-all strategy: lengths >= {upto} are uncovered"
            ))),
        }
    }

    fn validate_clusters(&self) -> Result<()> {
        let (Some(centroids), Some(standardizer)) = (&self.centroids, &self.standardizer) else {
            return Err(Error::Config("cluster book needs centroids and standardization stats".into()));
        };
        let dims = 4 + usize::from(self.uses_perplexity);
        if standardizer.dims() != dims || standardizer.std.len() != dims {
            return Err(Error::Config("standardization stats have the wrong dimension".into()));
        }
        let mut owner = vec![None; centroids.len()];
        for s in &self.strategies {
            match s.predicate {
                Predicate::Cluster { centroid } if centroid < centroids.len() => {
                    if owner[centroid].replace(&s.strategy_id).is_some() {
                        return Err(Error::Config(format!("centroid {centroid} has two strategies")));
                    }
                }
                _ => {
                    return Err(Error::Config(format!(
                        "strategy `{}` does not name a valid centroid",
                        s.strategy_id
                    )))
                }
            }
        }
        if let Some(idx) = owner.iter().position(Option::is_none) {
            return Err(Error::Config(format!("centroid {idx} has no strategy")));
        }
        Ok(())
    }

    pub fn get(&self, strategy_id: &str) -> Option<&Strategy> {
        self.strategies.iter().find(|s| s.strategy_id == strategy_id)
    }

    /// The strategy governing `sample`. Assumes a validated book.
    pub fn assign(&self, sample: &TextSample, perplexity: Option<f64>) -> &Strategy {
        match self.mode {
            BookMode::LengthBuckets => self
                .strategies
                .iter()
                .find(|s| s.predicate.contains_length(sample.char_length()))
                .expect("validated book covers every length"),
            BookMode::Clusters => {
                let standardizer = self.standardizer.as_ref().expect("validated cluster book");
                let centroids: Vec<Vec<f64>> = self
                    .centroids
                    .as_deref()
                    .expect("validated cluster book")
                    .iter()
                    .map(|c| features::standardized_row(c, standardizer, self.uses_perplexity))
                    .collect();
                let f = extract_features(sample, perplexity);
                let idx = features::nearest(
                    &features::standardized_row(&f, standardizer, self.uses_perplexity),
                    &centroids,
                );
                self.strategies
                    .iter()
                    .find(|s| s.predicate == Predicate::Cluster { centroid: idx })
                    .expect("validated book has a strategy per centroid")
            }
        }
    }

    /// Every strategy scaled by `c` (see [`Strategy::scaled`]).
    pub fn scaled(&self, c: f64) -> StrategyBook {
        StrategyBook {
            strategies: self.strategies.iter().map(|s| s.scaled(c)).collect(),
            ..self.clone()
        }
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let book: StrategyBook = util::read_json(path.as_ref())?;
        book.validate()?;
        Ok(book)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        util::write_json(path.as_ref(), self)
    }
}

pub fn assign_strategy<'a>(sample: &TextSample, book: &'a StrategyBook, perplexity: Option<f64>) -> &'a Strategy {
    book.assign(sample, perplexity)
}

/// The hand-tuned four-row book keyed by text length, with weights laid out
/// over `registry`, which must list exactly 18 detectors.
pub fn default_strategy_book_for<S: AsRef<str>>(registry: &[S]) -> Result<StrategyBook> {
    if registry.len() != STANDARD_REGISTRY.len() {
        return Err(Error::Config(format!(
            "default strategy book needs {} detectors, registry has {}",
            STANDARD_REGISTRY.len(),
            registry.len()
        )));
    }
    let strategies = DEFAULT_ROWS
        .iter()
        .map(|(id, lo, hi, weights, lambda, tau)| Strategy {
            strategy_id: id.to_string(),
            weights: registry
                .iter()
                .zip(weights)
                .map(|(d, &w)| (d.as_ref().to_string(), w))
                .collect(),
            lambda: *lambda,
            tau: *tau,
            predicate: Predicate::Length { lo: *lo, hi: *hi },
            support_band: None,
        })
        .collect();
    StrategyBook::length_buckets(strategies)
}

pub fn default_strategy_book() -> StrategyBook {
    default_strategy_book_for(&STANDARD_REGISTRY).expect("standard registry matches the default rows")
}
