//! Blocking JSON-over-HTTP exchange used by the external decision client
//! and the external scorer.

use std::time::Duration;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

/// Endpoint plus timeout and retry policy.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HttpEndpoint {
    pub url: String,
    #[serde(default = "default_timeout_ms")]
    pub timeout_ms: u64,
    /// Extra attempts after the first failure.
    #[serde(default = "default_retries")]
    pub retries: u32,
}

fn default_timeout_ms() -> u64 {
    10_000
}

fn default_retries() -> u32 {
    2
}

impl HttpEndpoint {
    pub fn new(url: impl Into<String>) -> Self {
        HttpEndpoint {
            url: url.into(),
            timeout_ms: default_timeout_ms(),
            retries: default_retries(),
        }
    }
}

#[derive(Debug)]
pub(crate) enum ExchangeError {
    /// Connection, timeout or non-2xx status after all retries.
    Transport(String),
    /// The body arrived but was not the expected JSON.
    Decode(String),
}

pub(crate) fn post_json<Req: Serialize, Resp: DeserializeOwned>(
    endpoint: &HttpEndpoint,
    body: &Req,
) -> Result<Resp, ExchangeError> {
    let agent: ureq::Agent = ureq::Agent::config_builder()
        .timeout_global(Some(Duration::from_millis(endpoint.timeout_ms)))
        .build()
        .into();
    let mut last = String::new();
    for _ in 0..=endpoint.retries {
        match agent.post(&endpoint.url).send_json(body) {
            Ok(resp) => {
                let text = resp
                    .into_body()
                    .read_to_string()
                    .map_err(|e| ExchangeError::Transport(e.to_string()))?;
                return serde_json::from_str(&text).map_err(|e| ExchangeError::Decode(e.to_string()));
            }
            Err(e) => last = e.to_string(),
        }
    }
    Err(ExchangeError::Transport(format!(
        "{} after {} attempt(s): {last}",
        endpoint.url,
        endpoint.retries + 1
    )))
}
