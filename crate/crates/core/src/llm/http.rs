use super::{ChatRequest, ChatResponse, EndpointProfile, LlmError, Provider, Transport, TransportError, Usage};
use serde_json::{json, Value};
use std::time::Duration;

/// Live transport speaking each provider's chat wire format.
pub struct HttpTransport {
    profile: EndpointProfile,
    api_key: String,
    client: reqwest::blocking::Client,
}

impl HttpTransport {
    pub fn from_profile(profile: EndpointProfile) -> Result<Self, LlmError> {
        let api_key = profile.api_key()?;
        let client = reqwest::blocking::Client::builder().build().map_err(|e| LlmError::Config(e.to_string()))?;
        Ok(Self { profile, api_key, client })
    }

    fn body(&self, req: &ChatRequest) -> Value {
        match self.profile.provider {
            Provider::Anthropic => json!({
                "model": req.model,
                "system": req.system,
                "messages": [{"role": "user", "content": req.user.join("\n\n")}],
                "max_tokens": req.max_tokens,
                "temperature": req.temperature,
            }),
            Provider::OpenAi | Provider::Together => {
                let mut messages = vec![json!({"role": "system", "content": req.system})];
                messages.extend(req.user.iter().map(|u| json!({"role": "user", "content": u})));
                let mut body = json!({
                    "model": req.model,
                    "messages": messages,
                    "max_tokens": req.max_tokens,
                    "temperature": req.temperature,
                });
                if let Some(seed) = req.seed {
                    body["seed"] = json!(seed);
                }
                body
            }
        }
    }

    fn parse(&self, v: &Value) -> Option<ChatResponse> {
        match self.profile.provider {
            Provider::Anthropic => Some(ChatResponse {
                text: v["content"].as_array()?.iter().filter_map(|c| c["text"].as_str()).collect(),
                usage: Usage {
                    prompt_tokens: v["usage"]["input_tokens"].as_u64().unwrap_or(0),
                    completion_tokens: v["usage"]["output_tokens"].as_u64().unwrap_or(0),
                },
            }),
            Provider::OpenAi | Provider::Together => Some(ChatResponse {
                text: v["choices"][0]["message"]["content"].as_str()?.to_string(),
                usage: Usage {
                    prompt_tokens: v["usage"]["prompt_tokens"].as_u64().unwrap_or(0),
                    completion_tokens: v["usage"]["completion_tokens"].as_u64().unwrap_or(0),
                },
            }),
        }
    }
}

impl Transport for HttpTransport {
    fn send(&self, req: &ChatRequest, timeout: Duration) -> Result<ChatResponse, TransportError> {
        let base = self.profile.base_url.trim_end_matches('/');
        let builder = match self.profile.provider {
            Provider::Anthropic => self
                .client
                .post(format!("{base}/messages"))
                .header("x-api-key", &self.api_key)
                .header("anthropic-version", "2023-06-01"),
            Provider::OpenAi | Provider::Together => {
                self.client.post(format!("{base}/chat/completions")).bearer_auth(&self.api_key)
            }
        };
        let resp = builder.timeout(timeout).json(&self.body(req)).send().map_err(|e| {
            if e.is_timeout() || e.is_connect() || e.is_request() {
                TransportError::Transient(e.to_string())
            } else {
                TransportError::Fatal(e.to_string())
            }
        })?;
        let status = resp.status();
        let text = resp.text().map_err(|e| TransportError::Transient(e.to_string()))?;
        match status.as_u16() {
            200..=299 => {}
            401 | 403 => return Err(TransportError::Auth(format!("{status}: {text}"))),
            408 | 409 | 429 | 500..=599 => return Err(TransportError::Transient(format!("{status}: {text}"))),
            _ => return Err(TransportError::Fatal(format!("{status}: {text}"))),
        }
        let v: Value = serde_json::from_str(&text).map_err(|e| TransportError::Malformed(e.to_string()))?;
        self.parse(&v).ok_or_else(|| TransportError::Malformed(text.chars().take(200).collect()))
    }
}
