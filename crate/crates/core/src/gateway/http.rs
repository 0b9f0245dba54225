//! Live gateway for OpenAI-compatible chat-completions endpoints.

use std::sync::{Arc, Mutex};
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::error::{Error, Result};
use crate::gateway::audit::{AuditEntry, AuditLog};
use crate::gateway::{fingerprint, schemas, ChatRequest, Gateway};
use crate::prompts;

fn default_api_key_env() -> String {
    "DSRECON_API_KEY".to_owned()
}
fn default_timeout() -> u64 {
    60
}
fn default_retries() -> u32 {
    2
}
fn default_backoff() -> u64 {
    500
}
fn default_true() -> bool {
    true
}

/// Connection settings for one live stage.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GatewayConfig {
    pub endpoint_url: String,
    pub model_name: String,
    #[serde(default = "default_api_key_env")]
    pub api_key_env: String,
    #[serde(default = "default_timeout")]
    pub timeout_secs: u64,
    #[serde(default = "default_retries")]
    pub max_retries: u32,
    #[serde(default)]
    pub seed: Option<u64>,
    #[serde(default)]
    pub requests_per_minute: Option<u32>,
    /// Ask the endpoint for its JSON-schema response format. Local
    /// validation applies either way.
    #[serde(default = "default_true")]
    pub use_json_schema: bool,
    #[serde(default = "default_backoff")]
    pub backoff_ms: u64,
}

impl Default for GatewayConfig {
    fn default() -> Self {
        Self {
            endpoint_url: "https://api.openai.com/v1".into(),
            model_name: "gpt-4o".into(),
            api_key_env: default_api_key_env(),
            timeout_secs: default_timeout(),
            max_retries: default_retries(),
            seed: None,
            requests_per_minute: None,
            use_json_schema: default_true(),
            backoff_ms: default_backoff(),
        }
    }
}

pub struct HttpGateway {
    config: GatewayConfig,
    api_key: String,
    agent: ureq::Agent,
    last_call: Mutex<Option<Instant>>,
    audit: Option<Arc<AuditLog>>,
}

impl HttpGateway {
    /// Build a live gateway; fails when the configured API key variable is
    /// absent from the environment.
    pub fn new(config: GatewayConfig) -> Result<Self> {
        if config.max_retries > 10 {
            return Err(Error::Config(format!(
                "max_retries {} is unreasonable",
                config.max_retries
            )));
        }
        let api_key = std::env::var(&config.api_key_env).map_err(|_| {
            Error::Config(format!(
                "live mode requires the API key in ${}",
                config.api_key_env
            ))
        })?;
        let agent = ureq::AgentBuilder::new()
            .timeout(Duration::from_secs(config.timeout_secs))
            .build();
        Ok(Self {
            config,
            api_key,
            agent,
            last_call: Mutex::new(None),
            audit: None,
        })
    }

    pub fn with_audit(mut self, audit: Arc<AuditLog>) -> Self {
        self.audit = Some(audit);
        self
    }

    /// Serialize bursts down to the configured requests/minute.
    fn throttle(&self) {
        let Some(rpm) = self.config.requests_per_minute else {
            return;
        };
        let min_gap = Duration::from_secs_f64(60.0 / rpm.max(1) as f64);
        let mut last = self.last_call.lock().expect("throttle lock");
        if let Some(prev) = *last {
            let elapsed = prev.elapsed();
            if elapsed < min_gap {
                std::thread::sleep(min_gap - elapsed);
            }
        }
        *last = Some(Instant::now());
    }

    fn body(&self, request: &ChatRequest, user_text: &str) -> Value {
        let mut messages = Vec::new();
        if !request.system_text.is_empty() {
            messages.push(json!({"role": "system", "content": request.system_text}));
        }
        messages.push(json!({"role": "user", "content": user_text}));
        let mut body = json!({
            "model": self.config.model_name,
            "messages": messages,
            "temperature": request.temperature,
            "max_tokens": request.max_output_tokens,
        });
        if let Some(seed) = self.config.seed {
            body["seed"] = json!(seed);
        }
        if self.config.use_json_schema {
            body["response_format"] = json!({
                "type": "json_schema",
                "json_schema": {
                    "name": request.schema_id.as_str(),
                    "schema": schemas::json_schema(request.schema_id),
                    "strict": true
                }
            });
        }
        body
    }

    fn call_once(&self, request: &ChatRequest, user_text: &str) -> std::result::Result<String, String> {
        let url = format!(
            "{}/chat/completions",
            self.config.endpoint_url.trim_end_matches('/')
        );
        let response = self
            .agent
            .post(&url)
            .set("Authorization", &format!("Bearer {}", self.api_key))
            .set("Content-Type", "application/json")
            .send_json(self.body(request, user_text))
            .map_err(|e| format!("transport: {e}"))?;
        let payload: Value = response
            .into_json()
            .map_err(|e| format!("non-JSON response body: {e}"))?;
        payload
            .get("choices")
            .and_then(Value::as_array)
            .and_then(|c| c.first())
            .and_then(|c| c.get("message"))
            .and_then(|m| m.get("content"))
            .and_then(Value::as_str)
            .map(str::to_owned)
            .ok_or_else(|| format!("response has no choices[0].message.content: {payload}"))
    }

    fn record(&self, fp: &str, request: &ChatRequest, response: Option<&Value>, error: Option<String>, started: Instant) {
        if let Some(audit) = &self.audit {
            audit.record(AuditEntry {
                fingerprint: fp.to_owned(),
                request: request.clone(),
                response: response.cloned(),
                error,
                latency_ms: started.elapsed().as_millis() as u64,
            });
        }
    }
}

impl Gateway for HttpGateway {
    /// Transport failures retry with exponential backoff up to
    /// `max_retries`; one schema violation earns a single re-ask with a
    /// "valid JSON only" nudge before failing.
    fn complete_structured(&self, request: &ChatRequest) -> Result<Value> {
        let fp = fingerprint(request);
        let mut user_text = request.user_text.clone();
        let mut transport_failures = 0u32;
        let mut nudged = false;

        loop {
            self.throttle();
            let started = Instant::now();
            let raw = match self.call_once(request, &user_text) {
                Ok(raw) => raw,
                Err(detail) => {
                    self.record(&fp, request, None, Some(detail.clone()), started);
                    transport_failures += 1;
                    if transport_failures > self.config.max_retries {
                        return Err(Error::Transport {
                            attempts: transport_failures,
                            detail,
                        });
                    }
                    let backoff = self.config.backoff_ms << (transport_failures - 1);
                    std::thread::sleep(Duration::from_millis(backoff));
                    continue;
                }
            };

            match parse_structured(&raw, request) {
                Ok(value) => {
                    self.record(&fp, request, Some(&value), None, started);
                    return Ok(value);
                }
                Err(detail) => {
                    self.record(&fp, request, None, Some(detail.clone()), started);
                    if nudged {
                        return Err(Error::SchemaViolation {
                            schema: request.schema_id,
                            detail,
                            raw,
                        });
                    }
                    nudged = true;
                    user_text = format!("{}{}", request.user_text, prompts::SCHEMA_NUDGE);
                }
            }
        }
    }
}

/// Parse a model reply into validated JSON: strip markdown fences, parse,
/// then apply the local schema check.
fn parse_structured(raw: &str, request: &ChatRequest) -> std::result::Result<Value, String> {
    let cleaned = strip_fences(raw);
    let value: Value = serde_json::from_str(cleaned)
        .or_else(|_| {
            // Last resort: the outermost brace span.
            let start = cleaned.find('{').ok_or(())?;
            let end = cleaned.rfind('}').ok_or(())?;
            serde_json::from_str::<Value>(&cleaned[start..=end]).map_err(|_| ())
        })
        .map_err(|_| format!("response is not valid JSON: {}", truncate(raw, 200)))?;
    schemas::validate(request.schema_id, &value)?;
    Ok(value)
}

fn strip_fences(raw: &str) -> &str {
    let trimmed = raw.trim();
    let Some(rest) = trimmed.strip_prefix("```") else {
        return trimmed;
    };
    let rest = rest.strip_prefix("json").unwrap_or(rest);
    let rest = rest.strip_suffix("```").unwrap_or(rest);
    rest.trim()
}

fn truncate(s: &str, limit: usize) -> String {
    if s.chars().count() <= limit {
        s.to_owned()
    } else {
        let cut: String = s.chars().take(limit).collect();
        format!("{cut}...")
    }
}
