//! Support signals for borderline samples.
//!
//! A provider answers with a value in `[-1, 1]`; positive leans
//! machine-generated. Providers never fail: transport errors and malformed
//! replies come back as a neutral `0` with rationale `provider_error`.

use std::collections::HashMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{Label, TextSample};
use crate::{http, util};

pub const PROVIDER_ERROR: &str = "provider_error";

pub const DEFAULT_PROMPT_TEMPLATE: &str = "Decide whether each text was written by a human or generated by a language model. \
Some machine-generated texts were translated to another language and back.\n\n{examples}Text: {input}\nAnswer:";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SupportSignal {
    pub value: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rationale: Option<String>,
}

impl SupportSignal {
    pub fn neutral() -> Self {
        SupportSignal { value: 0.0, rationale: None }
    }

    fn provider_error() -> Self {
        SupportSignal {
            value: 0.0,
            rationale: Some(PROVIDER_ERROR.to_string()),
        }
    }
}

pub trait SupportProvider: Send + Sync {
    fn query(&self, sample: &TextSample) -> SupportSignal;
}

/// Convenience wrapper matching the provider trait.
pub fn query_support(provider: &dyn SupportProvider, sample: &TextSample) -> SupportSignal {
    provider.query(sample)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Demonstration {
    pub text: String,
    pub label: Label,
}

impl Demonstration {
    pub fn load_all(path: impl AsRef<Path>) -> Result<Vec<Demonstration>> {
        util::read_jsonl(path.as_ref())
    }
}

/// Renders `template`, filling `{examples}` with the demonstrations in order
/// and `{input}` with the sample text.
pub fn build_prompt(template: &str, demonstrations: &[Demonstration], sample: &TextSample) -> Result<String> {
    for slot in ["{examples}", "{input}"] {
        if !template.contains(slot) {
            return Err(Error::Config(format!("prompt template is missing the {slot} slot")));
        }
    }
    let examples: String = demonstrations
        .iter()
        .map(|d| format!("Text: {}\nAnswer: {}\n\n", d.text, d.label.name()))
        .collect();
    Ok(template
        .replace("{examples}", &examples)
        .replace("{input}", sample.text()))
}

/// Keyed lookup table; unknown ids get 0.
#[derive(Debug, Clone, Default)]
pub struct StubSupport {
    table: HashMap<String, f64>,
}

#[derive(Deserialize)]
struct StubRecord {
    id: String,
    value: f64,
}

impl StubSupport {
    pub fn new<I, S>(entries: I) -> Result<Self>
    where
        I: IntoIterator<Item = (S, f64)>,
        S: Into<String>,
    {
        let mut table = HashMap::new();
        for (id, value) in entries {
            let id = id.into();
            if !(-1.0..=1.0).contains(&value) {
                return Err(Error::InvalidInput(format!("stub support value {value} for `{id}` outside [-1, 1]")));
            }
            table.insert(id, value);
        }
        Ok(StubSupport { table })
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let records: Vec<StubRecord> = util::read_jsonl(path.as_ref())?;
        StubSupport::new(records.into_iter().map(|r| (r.id, r.value)))
    }
}

impl SupportProvider for StubSupport {
    fn query(&self, sample: &TextSample) -> SupportSignal {
        SupportSignal {
            value: self.table.get(sample.id()).copied().unwrap_or(0.0),
            rationale: None,
        }
    }
}

/// Few-shot prompted external judge.
///
/// Wire contract: `POST {"prompt": "..."}`, reply
/// `{"verdict": "llm"|"human", "confidence": 0..1}`.
pub struct HttpLlmSupport {
    endpoint: String,
    template: String,
    demonstrations: Vec<Demonstration>,
    agent: ureq::Agent,
}

#[derive(Serialize)]
struct SupportRequest<'a> {
    prompt: &'a str,
}

#[derive(Deserialize)]
struct SupportResponse {
    verdict: String,
    confidence: f64,
}

impl HttpLlmSupport {
    pub fn new(endpoint: impl Into<String>, template: impl Into<String>, demonstrations: Vec<Demonstration>) -> Result<Self> {
        let endpoint = endpoint.into();
        let template = template.into();
        if endpoint.is_empty() {
            return Err(Error::Config("http_llm support provider needs an endpoint".into()));
        }
        if demonstrations.is_empty() {
            return Err(Error::Config("http_llm support provider needs demonstrations".into()));
        }
        // reject broken templates up front rather than on every query
        build_prompt(&template, &demonstrations, &TextSample::new("probe", ""))?;
        Ok(HttpLlmSupport {
            endpoint,
            template,
            demonstrations,
            agent: http::agent(),
        })
    }

    fn try_query(&self, sample: &TextSample) -> Result<SupportSignal> {
        let prompt = build_prompt(&self.template, &self.demonstrations, sample)?;
        let resp: SupportResponse = http::post_json(&self.agent, &self.endpoint, &SupportRequest { prompt: &prompt })?;
        parse_response(&resp.verdict, resp.confidence)
            .ok_or_else(|| Error::external(&self.endpoint, "verdict or confidence out of contract"))
    }
}

fn parse_response(verdict: &str, confidence: f64) -> Option<SupportSignal> {
    if !(0.0..=1.0).contains(&confidence) {
        return None;
    }
    let value = match verdict {
        "llm" => confidence,
        "human" => -confidence,
        _ => return None,
    };
    Some(SupportSignal {
        value,
        rationale: Some(verdict.to_string()),
    })
}

impl SupportProvider for HttpLlmSupport {
    fn query(&self, sample: &TextSample) -> SupportSignal {
        self.try_query(sample).unwrap_or_else(|e| {
            log::warn!("support provider failed for `{}`: {e}", sample.id());
            SupportSignal::provider_error()
        })
    }
}
