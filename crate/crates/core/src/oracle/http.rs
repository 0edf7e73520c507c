use std::time::Duration;

use serde::Deserialize;

use super::{Backend, ChatRequest, EmbedRequest, OracleError};

/// An OpenAI-compatible endpoint (`/v1/chat/completions`, `/v1/embeddings`).
pub struct HttpBackend {
    agent: ureq::Agent,
    base_url: String,
    api_key: Option<String>,
    attempts: u32,
    backoff: Duration,
}

impl HttpBackend {
    pub fn new(base_url: impl Into<String>, api_key: Option<String>, timeout: Duration) -> Self {
        let agent = ureq::Agent::config_builder()
            .timeout_global(Some(timeout))
            .http_status_as_error(false)
            .build()
            .into();
        Self {
            agent,
            base_url: base_url.into().trim_end_matches('/').to_string(),
            api_key,
            attempts: 3,
            backoff: Duration::from_millis(500),
        }
    }

    fn url(&self, path: &str) -> String {
        // Accept base URLs with or without the `/v1` suffix.
        if self.base_url.ends_with("/v1") {
            format!("{}/{path}", self.base_url)
        } else {
            format!("{}/v1/{path}", self.base_url)
        }
    }

    fn post<T: for<'de> Deserialize<'de>>(&self, path: &str, body: &impl serde::Serialize) -> Result<T, OracleError> {
        let url = self.url(path);
        let mut last = None;
        for attempt in 0..self.attempts {
            if attempt > 0 {
                std::thread::sleep(self.backoff * 2u32.pow(attempt - 1));
            }
            let mut req = self.agent.post(&url);
            if let Some(key) = &self.api_key {
                req = req.header("Authorization", &format!("Bearer {key}"));
            }
            match req.send_json(body) {
                Ok(mut resp) => {
                    let status = resp.status().as_u16();
                    if status == 200 {
                        return resp
                            .body_mut()
                            .read_json::<T>()
                            .map_err(|e| OracleError::Malformed(e.to_string()));
                    }
                    let text = resp.body_mut().read_to_string().unwrap_or_default();
                    let err = OracleError::Provider { status, body: text };
                    if status == 429 || status >= 500 {
                        log::warn!("{url}: status {status}, attempt {}", attempt + 1);
                        last = Some(err);
                        continue;
                    }
                    return Err(err);
                }
                Err(e) => {
                    log::warn!("{url}: {e}, attempt {}", attempt + 1);
                    last = Some(OracleError::Network(e.to_string()));
                }
            }
        }
        Err(last.unwrap_or_else(|| OracleError::Network("no attempts made".into())))
    }
}

#[derive(Deserialize)]
struct ChatResponse {
    choices: Vec<Choice>,
}

#[derive(Deserialize)]
struct Choice {
    message: ChoiceMessage,
}

#[derive(Deserialize)]
struct ChoiceMessage {
    #[serde(default)]
    content: Option<String>,
}

#[derive(Deserialize)]
struct EmbedResponse {
    data: Vec<EmbedDatum>,
}

#[derive(Deserialize)]
struct EmbedDatum {
    index: usize,
    embedding: Vec<f32>,
}

impl Backend for HttpBackend {
    fn chat(&self, req: &ChatRequest) -> Result<String, OracleError> {
        let resp: ChatResponse = self.post("chat/completions", req)?;
        resp.choices
            .into_iter()
            .next()
            .and_then(|c| c.message.content)
            .ok_or_else(|| OracleError::Malformed("response has no message content".into()))
    }

    fn embed(&self, req: &EmbedRequest) -> Result<Vec<Vec<f32>>, OracleError> {
        let mut resp: EmbedResponse = self.post("embeddings", req)?;
        resp.data.sort_by_key(|d| d.index);
        if resp.data.len() != req.input.len() {
            return Err(OracleError::Malformed(format!(
                "{} embeddings for {} inputs",
                resp.data.len(),
                req.input.len()
            )));
        }
        Ok(resp.data.into_iter().map(|d| d.embedding).collect())
    }
}
