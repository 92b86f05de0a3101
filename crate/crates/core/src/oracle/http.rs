//! OpenAI-compatible chat-completions client.

use std::sync::{Condvar, Mutex};
use std::time::Duration;

use serde_json::{json, Value};

use super::{OracleBackend, OracleConfig, OracleError, OracleRequest, Repair, Reply, TemplateSet};

/// Pulls the JSON object out of a model reply: the first fenced block if
/// there is one, else the outermost braces.
pub fn extract_json(text: &str) -> Result<Value, String> {
    let fenced = text.find("```").and_then(|open| {
        let body = &text[open + 3..];
        let body = body.strip_prefix("json").unwrap_or(body);
        body.find("```").map(|close| &body[..close])
    });
    let candidate = match fenced {
        Some(block) => block.trim(),
        None => {
            let start = text.find('{').ok_or("reply contains no JSON object")?;
            let end = text.rfind('}').ok_or("reply contains no JSON object")?;
            if end < start {
                return Err("reply contains no JSON object".into());
            }
            &text[start..=end]
        }
    };
    serde_json::from_str(candidate).map_err(|e| format!("reply is not valid JSON: {e}"))
}

/// Counting semaphore bounding concurrent requests.
struct Slots {
    free: Mutex<usize>,
    cv: Condvar,
}

impl Slots {
    fn acquire(&self) -> SlotGuard<'_> {
        let mut free = self.free.lock().unwrap();
        while *free == 0 {
            free = self.cv.wait(free).unwrap();
        }
        *free -= 1;
        SlotGuard(self)
    }
}

struct SlotGuard<'a>(&'a Slots);

impl Drop for SlotGuard<'_> {
    fn drop(&mut self) {
        *self.0.free.lock().unwrap() += 1;
        self.0.cv.notify_one();
    }
}

pub struct HttpBackend {
    agent: ureq::Agent,
    endpoint: String,
    model: String,
    api_key: Option<String>,
    timeout_ms: u64,
    templates: TemplateSet,
    slots: Slots,
}

impl HttpBackend {
    pub fn from_config(config: &OracleConfig) -> Result<Self, OracleError> {
        let base = config
            .base_url
            .as_deref()
            .ok_or_else(|| OracleError::Config("http backend requires base_url".into()))?;
        let model = config
            .model
            .clone()
            .ok_or_else(|| OracleError::Config("http backend requires model".into()))?;
        if config.max_in_flight == 0 {
            return Err(OracleError::Config(
                "max_in_flight must be at least 1".into(),
            ));
        }
        let templates = match &config.template_dir {
            Some(dir) => TemplateSet::from_dir(dir)?,
            None => TemplateSet::builtin(),
        };
        let agent = ureq::Agent::config_builder()
            .timeout_global(Some(Duration::from_millis(config.timeout_ms)))
            .http_status_as_error(false)
            .build()
            .into();
        Ok(Self {
            agent,
            endpoint: format!("{}/chat/completions", base.trim_end_matches('/')),
            model,
            api_key: std::env::var(&config.api_key_env).ok(),
            timeout_ms: config.timeout_ms,
            templates,
            slots: Slots {
                free: Mutex::new(config.max_in_flight),
                cv: Condvar::new(),
            },
        })
    }

    fn body(&self, request: &OracleRequest, repair: Option<&Repair>) -> Value {
        let mut messages = vec![
            json!({"role": "system", "content": self.templates.system()}),
            json!({"role": "user", "content": self.templates.render(request)}),
        ];
        if let Some(r) = repair {
            messages.push(json!({"role": "assistant", "content": r.previous}));
            messages.push(json!({
                "role": "user",
                "content": format!(
                    "That reply was rejected: {}. Answer again with one fenced JSON object of the requested shape.",
                    r.reason
                ),
            }));
        }
        json!({"model": self.model, "temperature": 0, "messages": messages})
    }
}

impl OracleBackend for HttpBackend {
    fn complete(
        &self,
        request: &OracleRequest,
        repair: Option<&Repair>,
    ) -> Result<Reply, OracleError> {
        let _slot = self.slots.acquire();
        let mut req = self
            .agent
            .post(&self.endpoint)
            .header("Content-Type", "application/json");
        if let Some(key) = &self.api_key {
            req = req.header("Authorization", format!("Bearer {key}"));
        }
        let mut response =
            req.send(self.body(request, repair).to_string())
                .map_err(|e| match e {
                    ureq::Error::Timeout(_) => OracleError::Timeout(self.timeout_ms),
                    other => OracleError::Transport(other.to_string()),
                })?;
        let status = response.status();
        let text = response
            .body_mut()
            .read_to_string()
            .map_err(|e| OracleError::Transport(e.to_string()))?;
        if !status.is_success() {
            return Err(OracleError::Transport(format!("HTTP {status}: {text}")));
        }
        let body: Value = serde_json::from_str(&text)
            .map_err(|e| OracleError::Transport(format!("bad response body: {e}")))?;
        let content = body["choices"][0]["message"]["content"]
            .as_str()
            .ok_or_else(|| OracleError::Transport("response has no message content".into()))?;
        Ok(Reply::Text(content.to_owned()))
    }
}
