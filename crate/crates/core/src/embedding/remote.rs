//! Blocking client for JSON embedding services.
//!
//! Request: `{"model": <id>, "input": [<text>, ...]}`. The response is either
//! `{"data": [{"embedding": [...], "index": i}, ...]}` or a bare list of
//! `{"embedding": [...]}` objects, in input order unless `index` says
//! otherwise.

use std::time::Duration;

use serde::{Deserialize, Serialize};
use ureq::Agent;

use super::{EmbeddingError, EmbeddingVector};

pub const API_KEY_ENV: &str = "EMBED_API_KEY";
pub const MAX_ATTEMPTS: u32 = 3;
const INITIAL_BACKOFF: Duration = Duration::from_millis(500);
const REQUEST_TIMEOUT: Duration = Duration::from_secs(30);
const BODY_EXCERPT: usize = 200;

#[derive(Serialize)]
struct Request<'a> {
    model: &'a str,
    input: &'a [&'a str],
}

#[derive(Deserialize)]
struct Item {
    embedding: Vec<f32>,
    #[serde(default)]
    index: Option<usize>,
}

#[derive(Deserialize)]
#[serde(untagged)]
enum Response {
    Wrapped { data: Vec<Item> },
    Bare(Vec<Item>),
}

pub struct RemoteClient {
    agent: Agent,
    endpoint: String,
    auth_header: String,
    model_id: String,
    initial_backoff: Duration,
}

impl RemoteClient {
    pub fn new(endpoint: &str, auth_header: &str, model_id: &str) -> Self {
        let agent: Agent = Agent::config_builder()
            .timeout_global(Some(REQUEST_TIMEOUT))
            .http_status_as_error(false)
            .build()
            .into();
        RemoteClient {
            agent,
            endpoint: endpoint.to_string(),
            auth_header: auth_header.to_string(),
            model_id: model_id.to_string(),
            initial_backoff: INITIAL_BACKOFF,
        }
    }

    pub fn with_initial_backoff(mut self, backoff: Duration) -> Self {
        self.initial_backoff = backoff;
        self
    }

    /// Embeds one batch, retrying transport failures, 429 and 5xx up to
    /// [`MAX_ATTEMPTS`] times with doubling backoff.
    pub fn embed(&self, texts: &[&str], dimension: usize) -> Result<Vec<EmbeddingVector>, EmbeddingError> {
        let mut backoff = self.initial_backoff;
        let mut attempt = 1;
        loop {
            match self.try_once(texts, dimension) {
                Ok(vectors) => return Ok(vectors),
                Err(err) if attempt < MAX_ATTEMPTS && retryable(&err) => {
                    log::warn!(
                        "embedding request failed (attempt {attempt}/{MAX_ATTEMPTS}): {err}; retrying in {backoff:?}"
                    );
                    std::thread::sleep(backoff);
                    backoff *= 2;
                    attempt += 1;
                }
                Err(err) => return Err(err),
            }
        }
    }

    fn try_once(&self, texts: &[&str], dimension: usize) -> Result<Vec<EmbeddingVector>, EmbeddingError> {
        let mut request = self.agent.post(&self.endpoint);
        if let Ok(key) = std::env::var(API_KEY_ENV) {
            let value = if self.auth_header.eq_ignore_ascii_case("authorization") {
                format!("Bearer {key}")
            } else {
                key
            };
            request = request.header(self.auth_header.as_str(), value);
        }
        let mut response = request
            .send_json(Request {
                model: &self.model_id,
                input: texts,
            })
            .map_err(|e| EmbeddingError::Transport(e.to_string()))?;
        let status = response.status().as_u16();
        let body = response
            .body_mut()
            .read_to_string()
            .map_err(|e| EmbeddingError::Transport(e.to_string()))?;
        if !(200..300).contains(&status) {
            return Err(EmbeddingError::Remote {
                status,
                body: body.chars().take(BODY_EXCERPT).collect(),
            });
        }
        let parsed: Response = serde_json::from_str(&body).map_err(|e| EmbeddingError::Remote {
            status,
            body: format!("unparseable response ({e}): {}", body.chars().take(BODY_EXCERPT).collect::<String>()),
        })?;
        let mut items = match parsed {
            Response::Wrapped { data } => data,
            Response::Bare(items) => items,
        };
        if items.len() != texts.len() {
            return Err(EmbeddingError::Remote {
                status,
                body: format!("expected {} embeddings, got {}", texts.len(), items.len()),
            });
        }
        if items.iter().all(|it| it.index.is_some()) {
            items.sort_by_key(|it| it.index);
        }
        items
            .into_iter()
            .map(|item| {
                if item.embedding.len() != dimension {
                    return Err(EmbeddingError::DimensionMismatch {
                        expected: dimension,
                        got: item.embedding.len(),
                    });
                }
                Ok(EmbeddingVector::normalized(item.embedding))
            })
            .collect()
    }
}

fn retryable(err: &EmbeddingError) -> bool {
    match err {
        EmbeddingError::Transport(_) => true,
        EmbeddingError::Remote { status, .. } => *status == 429 || *status >= 500,
        _ => false,
    }
}
