//! Adversarial transforms: excerpting and back-translation.
//!
//! Machine translation lives behind [`MtClient`]. [`HttpMt`] speaks
//! `POST {"text","src","tgt"} -> {"text"}`; [`StubMt`] replays recorded
//! `{"in","out"}` pairs.

use std::collections::HashMap;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{Dataset, TextSample};
use crate::{http, util};

fn default_source_language() -> String {
    "zh".to_string()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Transform {
    Identity,
    Excerpt {
        target_len: usize,
        seed: u64,
    },
    BackTranslate {
        pivot_language: String,
        #[serde(default = "default_source_language")]
        source_language: String,
        /// MT endpoint; `None` uses whatever client the caller supplies.
        #[serde(default, skip_serializing_if = "Option::is_none")]
        endpoint: Option<String>,
    },
}

impl Transform {
    pub fn kind_name(&self) -> &'static str {
        match self {
            Transform::Identity => "identity",
            Transform::Excerpt { .. } => "excerpt",
            Transform::BackTranslate { .. } => "back_translate",
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            Transform::Excerpt { target_len: 0, .. } => Err(Error::Config("excerpt target_len must be at least 1".into())),
            Transform::BackTranslate { pivot_language, .. } if pivot_language.is_empty() => {
                Err(Error::Config("back-translation needs a pivot language".into()))
            }
            _ => Ok(()),
        }
    }
}

pub trait MtClient {
    fn translate(&self, text: &str, src: &str, tgt: &str) -> Result<String>;
}

/// Replays recorded translations. Unknown inputs pass through unchanged
/// unless the stub is strict.
#[derive(Debug, Clone, Default)]
pub struct StubMt {
    pairs: HashMap<String, String>,
    strict: bool,
}

#[derive(Serialize, Deserialize)]
struct MtPair {
    #[serde(rename = "in")]
    input: String,
    out: String,
}

impl StubMt {
    pub fn identity() -> Self {
        StubMt::default()
    }

    pub fn from_pairs<I, A, B>(pairs: I) -> Self
    where
        I: IntoIterator<Item = (A, B)>,
        A: Into<String>,
        B: Into<String>,
    {
        StubMt {
            pairs: pairs.into_iter().map(|(a, b)| (a.into(), b.into())).collect(),
            strict: false,
        }
    }

    pub fn strict(mut self) -> Self {
        self.strict = true;
        self
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let pairs: Vec<MtPair> = util::read_jsonl(path.as_ref())?;
        Ok(StubMt::from_pairs(pairs.into_iter().map(|p| (p.input, p.out))))
    }
}

impl MtClient for StubMt {
    fn translate(&self, text: &str, _src: &str, _tgt: &str) -> Result<String> {
        match self.pairs.get(text) {
            Some(out) => Ok(out.clone()),
            None if self.strict => Err(Error::external("stub-mt", format!("no recorded translation for {text:?}"))),
            None => Ok(text.to_string()),
        }
    }
}

pub struct HttpMt {
    endpoint: String,
    agent: ureq::Agent,
}

impl HttpMt {
    pub fn new(endpoint: impl Into<String>) -> Self {
        HttpMt {
            endpoint: endpoint.into(),
            agent: http::agent(),
        }
    }
}

#[derive(Serialize)]
struct TranslateRequest<'a> {
    text: &'a str,
    src: &'a str,
    tgt: &'a str,
}

#[derive(Deserialize)]
struct TranslateResponse {
    text: String,
}

impl MtClient for HttpMt {
    fn translate(&self, text: &str, src: &str, tgt: &str) -> Result<String> {
        let resp: TranslateResponse = http::post_json(&self.agent, &self.endpoint, &TranslateRequest { text, src, tgt })?;
        Ok(resp.text)
    }
}

/// Contiguous window of `target_len` characters at a seeded offset. Texts
/// that are already short enough are kept whole. The offset depends on both
/// the seed and the sample id, so one seed spreads across a dataset.
pub fn excerpt(sample: &TextSample, target_len: usize, seed: u64) -> TextSample {
    let id = format!("{}#ex{target_len}", sample.id());
    let n = sample.char_length();
    if n <= target_len {
        return sample.clone().with_id(id);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ util::fnv1a(sample.id().as_bytes()));
    let offset = rng.random_range(0..=n - target_len);
    let text: String = sample.text().chars().skip(offset).take(target_len).collect();
    sample.clone().with_text(text).with_id(id)
}

/// Source -> pivot -> source round trip through `mt`.
pub fn back_translate(sample: &TextSample, pivot: &str, source: &str, mt: &dyn MtClient) -> Result<TextSample> {
    let there = mt.translate(sample.text(), source, pivot)?;
    let back = mt.translate(&there, pivot, source)?;
    Ok(sample.clone().with_text(back).with_id(format!("{}#bt{pivot}", sample.id())))
}

pub fn apply_transform(sample: &TextSample, transform: &Transform, mt: &dyn MtClient) -> Result<TextSample> {
    let out = match transform {
        Transform::Identity => sample.clone().with_id(format!("{}#id", sample.id())),
        Transform::Excerpt { target_len, seed } => excerpt(sample, *target_len, *seed),
        Transform::BackTranslate {
            pivot_language,
            source_language,
            endpoint,
        } => match endpoint {
            Some(url) => back_translate(sample, pivot_language, source_language, &HttpMt::new(url.as_str()))?,
            None => back_translate(sample, pivot_language, source_language, mt)?,
        },
    };
    Ok(out.with_subset(transform.kind_name()))
}

/// Every transform applied to every sample, transform-major: all samples
/// under the first transform, then all under the second, and so on.
pub fn build_adversarial_set(dataset: &Dataset, transforms: &[Transform], mt: &dyn MtClient) -> Result<Dataset> {
    if transforms.is_empty() {
        return Err(Error::InvalidInput("at least one transform is required".into()));
    }
    let mut out = Vec::with_capacity(dataset.len() * transforms.len());
    let mut seen = std::collections::HashSet::new();
    for (k, t) in transforms.iter().enumerate() {
        t.validate()?;
        for s in dataset {
            let mut variant = apply_transform(s, t, mt)?;
            if !seen.insert(variant.id().to_string()) {
                // repeated transform kinds get the transform index appended
                let id = format!("{}~{k}", variant.id());
                seen.insert(id.clone());
                variant = variant.with_id(id);
            }
            out.push(variant);
        }
    }
    Dataset::new(out)
}
