use std::time::Duration;

use serde::{Deserialize, Serialize};

use super::{ChatBackend, ChatMessage, LlmError};

/// Where and how to reach a chat-completion endpoint.
#[derive(Debug, Clone, PartialEq)]
pub struct LlmEndpointConfig {
    /// Server root; requests go to `{base_url}/v1/chat/completions`.
    pub base_url: String,
    pub model: String,
    pub temperature: f64,
    pub timeout: Duration,
    pub max_retries: u32,
    /// Environment variable holding a bearer token, if any.
    pub api_key_env: Option<String>,
    /// Pause before retry `n` is `n * retry_backoff`.
    pub retry_backoff: Duration,
}

impl LlmEndpointConfig {
    pub fn new(base_url: impl Into<String>, model: impl Into<String>) -> Self {
        Self {
            base_url: base_url.into(),
            model: model.into(),
            temperature: 0.0,
            timeout: Duration::from_secs(120),
            max_retries: 2,
            api_key_env: None,
            retry_backoff: Duration::from_millis(250),
        }
    }

    pub fn validate(&self) -> Result<(), LlmError> {
        let fail = |m: &str| Err(LlmError::Config(m.to_string()));
        if self.base_url.trim().is_empty() {
            return fail("endpoint URL is empty");
        }
        if self.model.trim().is_empty() {
            return fail("model name is empty");
        }
        if self.temperature.is_nan() || self.temperature < 0.0 {
            return fail("temperature must be >= 0");
        }
        if self.timeout.is_zero() {
            return fail("timeout must be > 0");
        }
        Ok(())
    }

    pub fn completions_url(&self) -> String {
        format!(
            "{}/v1/chat/completions",
            self.base_url.trim_end_matches('/')
        )
    }
}

/// Request body of the chat-completion wire format.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChatRequest {
    pub model: String,
    pub messages: Vec<ChatMessage>,
    #[serde(default)]
    pub temperature: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ChatResponse {
    pub choices: Vec<Choice>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Choice {
    pub message: ChatMessage,
}

impl ChatResponse {
    pub fn first_content(self) -> Option<String> {
        self.choices.into_iter().next().map(|c| c.message.content)
    }
}

/// Blocking HTTP client with retries on transport errors, 429 and 5xx.
#[derive(Debug, Clone)]
pub struct HttpChatClient {
    config: LlmEndpointConfig,
    agent: ureq::Agent,
}

enum Attempt {
    Done(Result<String, LlmError>),
    Retry(String),
}

impl HttpChatClient {
    pub fn new(config: LlmEndpointConfig) -> Result<Self, LlmError> {
        config.validate()?;
        let agent = ureq::Agent::config_builder()
            .timeout_global(Some(config.timeout))
            .http_status_as_error(false)
            .build()
            .into();
        Ok(Self { config, agent })
    }

    pub fn config(&self) -> &LlmEndpointConfig {
        &self.config
    }

    fn attempt(&self, body: &str) -> Attempt {
        let mut req = self
            .agent
            .post(self.config.completions_url())
            .header("Content-Type", "application/json");
        if let Some(key) = self
            .config
            .api_key_env
            .as_deref()
            .and_then(|var| std::env::var(var).ok())
        {
            req = req.header("Authorization", format!("Bearer {key}"));
        }
        let response = match req.send(body) {
            Ok(r) => r,
            Err(e) => return Attempt::Retry(e.to_string()),
        };
        let status = response.status().as_u16();
        let text = match response.into_body().read_to_string() {
            Ok(t) => t,
            Err(e) => return Attempt::Retry(e.to_string()),
        };
        if status == 429 || status >= 500 {
            return Attempt::Retry(format!("HTTP {status}: {text}"));
        }
        if !(200..300).contains(&status) {
            return Attempt::Done(Err(LlmError::Status { status, body: text }));
        }
        let parsed = serde_json::from_str::<ChatResponse>(&text)
            .map_err(|e| LlmError::BadResponse(e.to_string()))
            .and_then(|r| {
                r.first_content()
                    .ok_or_else(|| LlmError::BadResponse("no choices".to_string()))
            });
        Attempt::Done(parsed)
    }
}

impl ChatBackend for HttpChatClient {
    fn model(&self) -> &str {
        &self.config.model
    }

    fn complete(&self, messages: &[ChatMessage]) -> Result<String, LlmError> {
        let body = serde_json::to_string(&ChatRequest {
            model: self.config.model.clone(),
            messages: messages.to_vec(),
            temperature: self.config.temperature,
        })
        .expect("request serializes");
        let attempts = self.config.max_retries + 1;
        let mut last = String::new();
        for n in 0..attempts {
            if n > 0 {
                std::thread::sleep(self.config.retry_backoff * n);
            }
            match self.attempt(&body) {
                Attempt::Done(result) => return result,
                Attempt::Retry(message) => last = message,
            }
        }
        Err(LlmError::Transport {
            attempts,
            message: last,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn config_validation() {
        let ok = LlmEndpointConfig::new("http://localhost:8080/", "m");
        assert!(ok.validate().is_ok());
        assert_eq!(
            ok.completions_url(),
            "http://localhost:8080/v1/chat/completions"
        );
        for bad in [
            LlmEndpointConfig {
                temperature: -0.1,
                ..ok.clone()
            },
            LlmEndpointConfig {
                temperature: f64::NAN,
                ..ok.clone()
            },
            LlmEndpointConfig {
                timeout: Duration::ZERO,
                ..ok.clone()
            },
            LlmEndpointConfig {
                model: " ".into(),
                ..ok.clone()
            },
            LlmEndpointConfig {
                base_url: "".into(),
                ..ok.clone()
            },
        ] {
            assert!(matches!(bad.validate(), Err(LlmError::Config(_))));
        }
    }

    #[test]
    fn wire_format() {
        let req = ChatRequest {
            model: "m".into(),
            messages: vec![ChatMessage::system("s"), ChatMessage::user("u")],
            temperature: 0.0,
        };
        assert_eq!(
            serde_json::to_string(&req).unwrap(),
            r#"{"model":"m","messages":[{"role":"system","content":"s"},{"role":"user","content":"u"}],"temperature":0.0}"#
        );
        let resp: ChatResponse = serde_json::from_str(
            r#"{"id":"x","choices":[{"index":0,"message":{"role":"assistant","content":"hi"},"finish_reason":"stop"}]}"#,
        )
        .unwrap();
        assert_eq!(resp.first_content().as_deref(), Some("hi"));
    }

    #[test]
    fn unreachable_endpoint_exhausts_retries() {
        let cfg = LlmEndpointConfig {
            max_retries: 1,
            retry_backoff: Duration::ZERO,
            timeout: Duration::from_secs(2),
            ..LlmEndpointConfig::new("http://127.0.0.1:9", "m")
        };
        let err = HttpChatClient::new(cfg).unwrap().complete(&[]).unwrap_err();
        assert!(
            matches!(err, LlmError::Transport { attempts: 2, .. }),
            "{err}"
        );
    }
}
