use std::time::Duration;

use serde::de::DeserializeOwned;
use serde::Serialize;

use crate::error::{Error, Result};

/// Environment variable holding the HTTP adapter timeout in seconds.
pub const TIMEOUT_ENV: &str = "MGTD_HTTP_TIMEOUT_SECS";
const DEFAULT_TIMEOUT_SECS: u64 = 30;

pub(crate) fn timeout() -> Duration {
    let secs = std::env::var(TIMEOUT_ENV)
        .ok()
        .and_then(|v| v.trim().parse::<f64>().ok())
        .filter(|s| *s > 0.0 && s.is_finite());
    match secs {
        Some(s) => Duration::from_secs_f64(s),
        None => Duration::from_secs(DEFAULT_TIMEOUT_SECS),
    }
}

pub(crate) fn agent() -> ureq::Agent {
    ureq::Agent::config_builder()
        .timeout_global(Some(timeout()))
        .build()
        .into()
}

/// POSTs `body` as JSON and decodes a JSON response. Non-2xx statuses,
/// transport failures and undecodable bodies all map to `Error::External`.
pub(crate) fn post_json<B: Serialize, R: DeserializeOwned>(agent: &ureq::Agent, url: &str, body: &B) -> Result<R> {
    let mut response = agent.post(url).send_json(body).map_err(|e| Error::external(url, e))?;
    response
        .body_mut()
        .read_json::<R>()
        .map_err(|e| Error::external(url, format!("malformed response: {e}")))
}
