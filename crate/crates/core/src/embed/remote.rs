use std::thread::sleep;
use std::time::Duration;

use serde::{Deserialize, Serialize};

use super::{EmbedError, EMBEDDING_DIM};

/// Body of `POST /embed`.
#[derive(Debug, Serialize, Deserialize)]
pub struct EmbedRequest {
    pub model: String,
    pub sentences: Vec<String>,
}

/// Response of `POST /embed`.
#[derive(Debug, Serialize, Deserialize)]
pub struct EmbedResponse {
    pub dim: usize,
    pub vectors: Vec<Vec<f32>>,
}

#[derive(Clone, Debug)]
pub struct RetryPolicy {
    pub attempts: u32,
    /// Delay before the second attempt; doubled after each failure.
    pub base_delay: Duration,
    pub batch_size: usize,
    pub timeout: Duration,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        Self {
            attempts: 3,
            base_delay: Duration::from_millis(200),
            batch_size: 64,
            timeout: Duration::from_secs(120),
        }
    }
}

enum Failure {
    Retryable(String),
    Fatal(EmbedError),
}

fn embed_url(endpoint: &str) -> String {
    let base = endpoint.trim_end_matches('/');
    if base.ends_with("/embed") {
        base.to_string()
    } else {
        format!("{base}/embed")
    }
}

fn post_once(agent: &ureq::Agent, url: &str, req: &EmbedRequest) -> Result<EmbedResponse, Failure> {
    let mut resp = agent
        .post(url)
        .send_json(req)
        .map_err(|e| Failure::Retryable(e.to_string()))?;
    let status = resp.status().as_u16();
    if status >= 500 {
        return Err(Failure::Retryable(format!("server returned {status}")));
    }
    if status != 200 {
        let body = resp.body_mut().read_to_string().unwrap_or_default();
        return Err(Failure::Fatal(EmbedError::Remote(format!(
            "server returned {status}: {body}"
        ))));
    }
    resp.body_mut()
        .read_json::<EmbedResponse>()
        .map_err(|e| Failure::Fatal(EmbedError::Remote(format!("malformed response: {e}"))))
}

/// Embed `sentences` through the `/embed` HTTP contract, preserving order.
/// Transport errors and 5xx responses are retried with exponential backoff;
/// any batch that still fails aborts the whole call.
pub fn fetch_remote(
    endpoint: &str,
    sentences: &[String],
    model_name: &str,
    policy: &RetryPolicy,
) -> Result<Vec<Vec<f32>>, EmbedError> {
    let agent: ureq::Agent = ureq::Agent::config_builder()
        .http_status_as_error(false)
        .timeout_global(Some(policy.timeout))
        .build()
        .into();
    let url = embed_url(endpoint);
    let mut out = Vec::with_capacity(sentences.len());
    for batch in sentences.chunks(policy.batch_size.max(1)) {
        let req = EmbedRequest {
            model: model_name.to_string(),
            sentences: batch.to_vec(),
        };
        let mut delay = policy.base_delay;
        let mut attempt = 0;
        let resp = loop {
            attempt += 1;
            match post_once(&agent, &url, &req) {
                Ok(r) => break r,
                Err(Failure::Fatal(e)) => return Err(e),
                Err(Failure::Retryable(msg)) if attempt >= policy.attempts => {
                    return Err(EmbedError::Remote(format!(
                        "giving up after {attempt} attempts: {msg}"
                    )));
                }
                Err(Failure::Retryable(msg)) => {
                    log::warn!(
                        "embed request attempt {attempt} failed ({msg}); retrying in {delay:?}"
                    );
                    sleep(delay);
                    delay *= 2;
                }
            }
        };
        if resp.dim != EMBEDDING_DIM {
            return Err(EmbedError::Dimension {
                got: resp.dim,
                expected: EMBEDDING_DIM,
            });
        }
        if resp.vectors.len() != batch.len() {
            return Err(EmbedError::Remote(format!(
                "asked for {} vectors, received {}",
                batch.len(),
                resp.vectors.len()
            )));
        }
        for v in resp.vectors {
            if v.len() != resp.dim {
                return Err(EmbedError::Dimension {
                    got: v.len(),
                    expected: resp.dim,
                });
            }
            out.push(v);
        }
    }
    Ok(out)
}
