//! The run configuration: one JSON file drives every command.
//!
//! Relative paths resolve against the directory holding the config file.

use std::collections::HashSet;
use std::path::{Path, PathBuf};

use mgtd_core::augment::Transform;
use mgtd_core::freq::{Attribution, TokenizerKind};
use mgtd_core::rules::RuleConfig;
use mgtd_core::scores::{Orientation, SourceKind, DEFAULT_BUCKET_EDGES};
use mgtd_core::strategy::{BookFitOptions, SearchGrid};
use mgtd_core::support::DEFAULT_PROMPT_TEMPLATE;
use serde::{Deserialize, Serialize};

use crate::CliError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default)]
    pub seed: u64,
    /// The label value that means machine-generated in dataset and
    /// prediction files (1 or 0). Audit and verdict files always use 1.
    #[serde(default = "default_llm_label")]
    pub label_for_llm: u8,
    /// Labeled training data for `fit` and `calibrate`.
    pub train: Option<PathBuf>,
    /// Data for `predict`, `eval` and `augment`.
    pub input: Option<PathBuf>,
    pub artifacts_dir: PathBuf,
    pub output_dir: PathBuf,
    pub detectors: Vec<DetectorConfig>,
    #[serde(default)]
    pub rules: RuleConfig,
    #[serde(default)]
    pub strategy: StrategyConfig,
    #[serde(default)]
    pub support: SupportConfig,
    /// JSONL of override rules, applied after voting.
    pub overrides: Option<PathBuf>,
    #[serde(default)]
    pub augment: AugmentConfig,
    /// Threshold bucket edges for score detectors.
    #[serde(default = "default_edges")]
    pub threshold_edges: Vec<usize>,
}

fn default_llm_label() -> u8 {
    1
}

fn default_edges() -> Vec<usize> {
    DEFAULT_BUCKET_EDGES.to_vec()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum DetectorConfig {
    SpecialToken { id: String },
    ConsecutivePunctuation { id: String },
    SentenceSegment { id: String },
    CommonPhrase {
        id: String,
        #[serde(default = "default_top_k")]
        top_k: usize,
        #[serde(default = "default_min_len")]
        min_len: usize,
        #[serde(default = "default_max_len")]
        max_len: usize,
    },
    CommonToken {
        id: String,
        #[serde(default = "default_tokenizer")]
        tokenizer: TokenizerKind,
        /// Vocabulary file, one token per line, for `external_vocab`.
        vocab: Option<PathBuf>,
        #[serde(default)]
        attribution: Attribution,
    },
    Score {
        id: String,
        source: SourceKind,
        /// Score file path or endpoint URL.
        location: String,
        #[serde(default)]
        orientation: Orientation,
    },
}

fn default_top_k() -> usize {
    200
}

fn default_min_len() -> usize {
    2
}

fn default_max_len() -> usize {
    4
}

fn default_tokenizer() -> TokenizerKind {
    TokenizerKind::CharUnigram
}

impl DetectorConfig {
    pub fn id(&self) -> &str {
        match self {
            DetectorConfig::SpecialToken { id }
            | DetectorConfig::ConsecutivePunctuation { id }
            | DetectorConfig::SentenceSegment { id }
            | DetectorConfig::CommonPhrase { id, .. }
            | DetectorConfig::CommonToken { id, .. }
            | DetectorConfig::Score { id, .. } => id,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BookSource {
    /// The built-in four-row length book; needs the 18-detector registry.
    Default,
    /// Search weights on the training data during `fit`.
    Fit,
    /// A previously saved book.
    File(PathBuf),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct StrategyConfig {
    pub book: BookSource,
    pub fit: BookFitOptions,
    pub grid: SearchGrid,
    /// Score detector whose raw score feeds the perplexity feature in cluster mode.
    pub perplexity_detector: Option<String>,
}

impl Default for StrategyConfig {
    fn default() -> Self {
        StrategyConfig {
            book: BookSource::Fit,
            fit: BookFitOptions::default(),
            grid: SearchGrid::default(),
            perplexity_detector: None,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum SupportConfig {
    #[default]
    None,
    Stub { path: PathBuf },
    Http {
        endpoint: String,
        demonstrations: Option<PathBuf>,
        #[serde(default = "default_template")]
        template: String,
    },
}

fn default_template() -> String {
    DEFAULT_PROMPT_TEMPLATE.to_string()
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum MtConfig {
    /// Translations pass through unchanged.
    #[default]
    Identity,
    /// Recorded translations; unknown inputs pass through unless `strict`.
    Stub {
        path: PathBuf,
        #[serde(default)]
        strict: bool,
    },
    Http { endpoint: String },
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AugmentConfig {
    pub transforms: Vec<Transform>,
    pub mt: MtConfig,
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<RunConfig, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        let mut cfg: RunConfig = serde_json::from_str(&text)
            .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        let base = path.parent().unwrap_or(Path::new("."));
        cfg.resolve(base);
        cfg.validate().map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        Ok(cfg)
    }

    fn resolve(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        self.train.as_mut().map(fix);
        self.input.as_mut().map(fix);
        fix(&mut self.artifacts_dir);
        fix(&mut self.output_dir);
        self.overrides.as_mut().map(fix);
        for d in &mut self.detectors {
            match d {
                DetectorConfig::CommonToken { vocab: Some(p), .. } => fix(p),
                DetectorConfig::Score { source: SourceKind::ScoreFile, location, .. } => {
                    let mut p = PathBuf::from(&*location);
                    fix(&mut p);
                    *location = p.to_string_lossy().into_owned();
                }
                _ => {}
            }
        }
        if let BookSource::File(p) = &mut self.strategy.book {
            fix(p);
        }
        match &mut self.support {
            SupportConfig::Stub { path } => fix(path),
            SupportConfig::Http { demonstrations: Some(p), .. } => fix(p),
            _ => {}
        }
        if let MtConfig::Stub { path, .. } = &mut self.augment.mt {
            fix(path);
        }
    }

    fn validate(&self) -> Result<(), String> {
        if self.label_for_llm > 1 {
            return Err("`label_for_llm` must be 0 or 1".into());
        }
        if self.detectors.is_empty() {
            return Err("`detectors` is empty".into());
        }
        let mut seen = HashSet::new();
        for d in &self.detectors {
            if d.id().is_empty() {
                return Err("detector with empty `id`".into());
            }
            if !seen.insert(d.id()) {
                return Err(format!("duplicate detector id `{}`", d.id()));
            }
            if let DetectorConfig::CommonToken { id, tokenizer: TokenizerKind::ExternalVocab, vocab: None, .. } = d {
                return Err(format!("detector `{id}`: external_vocab tokenizer needs `vocab`"));
            }
        }
        if let Some(p) = &self.strategy.perplexity_detector {
            if !self.detectors.iter().any(|d| matches!(d, DetectorConfig::Score { id, .. } if id == p)) {
                return Err(format!("`strategy.perplexity_detector` `{p}` is not a score detector"));
            }
        }
        self.rules.validate().map_err(|e| format!("`rules`: {e}"))?;
        for t in &self.augment.transforms {
            t.validate().map_err(|e| format!("`augment.transforms`: {e}"))?;
        }
        Ok(())
    }

    /// Detector ids in configuration order.
    pub fn registry(&self) -> Vec<String> {
        self.detectors.iter().map(|d| d.id().to_string()).collect()
    }
}
