//! Model gateway wiring: the live HTTP backend, the mock backend loaded from
//! a rule file, retries and latency accounting.
//!
//! This is the only module that talks to model endpoints.

use std::collections::BTreeSet;
use std::path::Path;
use std::sync::Mutex;
use std::time::{Duration, Instant};

use attune_core::gateway::{
    invoke_with_retry, Backend, GatewayError, MockBackend, MockRuleError, MockRules, ModelGateway,
    ModelKind, ModelRequest, ModelResponse, RetryPolicy,
};
use attune_core::latency::{LatencyStats, LatencyTracker};
use base64::Engine as _;
use serde_json::{json, Value};
use thiserror::Error;

use crate::config::{BackendKind, EngineConfig};

/// Client for an OpenAI-compatible HTTP API (`/chat/completions`,
/// `/audio/transcriptions`).
pub struct LiveBackend {
    client: reqwest::blocking::Client,
    endpoint: String,
    token: Option<String>,
    temperature: f64,
    known_models: Option<BTreeSet<String>>,
}

impl LiveBackend {
    pub fn new(endpoint: impl Into<String>, token: Option<String>, temperature: f64) -> Self {
        LiveBackend {
            client: reqwest::blocking::Client::new(),
            endpoint: endpoint.into().trim_end_matches('/').to_owned(),
            token,
            temperature,
            known_models: None,
        }
    }

    pub fn with_known_models<I: IntoIterator<Item = String>>(mut self, models: I) -> Self {
        self.known_models = Some(models.into_iter().collect());
        self
    }

    fn image_url(image_ref: &str) -> Result<String, GatewayError> {
        if ["http://", "https://", "data:"]
            .iter()
            .any(|p| image_ref.starts_with(p))
        {
            return Ok(image_ref.to_owned());
        }
        let bytes = std::fs::read(image_ref)
            .map_err(|e| GatewayError::Transport(format!("cannot read image {image_ref}: {e}")))?;
        let mime = match Path::new(image_ref)
            .extension()
            .and_then(|e| e.to_str())
            .map(str::to_ascii_lowercase)
            .as_deref()
        {
            Some("png") => "image/png",
            Some("webp") => "image/webp",
            _ => "image/jpeg",
        };
        Ok(format!(
            "data:{mime};base64,{}",
            base64::engine::general_purpose::STANDARD.encode(bytes)
        ))
    }

    fn authorize(
        &self,
        rb: reqwest::blocking::RequestBuilder,
    ) -> reqwest::blocking::RequestBuilder {
        match &self.token {
            Some(t) => rb.bearer_auth(t),
            None => rb,
        }
    }

    fn send(
        &self,
        req: &ModelRequest,
        rb: reqwest::blocking::RequestBuilder,
    ) -> Result<Value, GatewayError> {
        let resp = self
            .authorize(rb)
            .timeout(req.max_latency)
            .send()
            .map_err(|e| classify(req, e))?;
        let status = resp.status();
        if status == reqwest::StatusCode::NOT_FOUND {
            return Err(GatewayError::NoRouteForModel(req.model_id.clone()));
        }
        if !status.is_success() {
            return Err(GatewayError::Transport(format!("HTTP {status}")));
        }
        resp.json::<Value>().map_err(|e| classify(req, e))
    }

    fn chat(&self, req: &ModelRequest) -> Result<String, GatewayError> {
        let user = match &req.image_ref {
            Some(image) => json!([
                {"type": "text", "text": req.user_content},
                {"type": "image_url", "image_url": {"url": Self::image_url(image)?}},
            ]),
            None => json!(req.user_content),
        };
        let body = json!({
            "model": req.model_id,
            "temperature": self.temperature,
            "messages": [
                {"role": "system", "content": req.system_prompt},
                {"role": "user", "content": user},
            ],
        });
        let url = format!("{}/chat/completions", self.endpoint);
        let v = self.send(req, self.client.post(url).json(&body))?;
        v.pointer("/choices/0/message/content")
            .and_then(Value::as_str)
            .map(str::to_owned)
            .ok_or_else(|| GatewayError::Transport("response has no message content".into()))
    }

    fn transcribe(&self, req: &ModelRequest) -> Result<String, GatewayError> {
        let audio = req
            .audio_ref
            .as_deref()
            .ok_or(GatewayError::InvalidRequest(
                "transcription needs audio_ref",
            ))?;
        let bytes = std::fs::read(audio)
            .map_err(|e| GatewayError::Transport(format!("cannot read audio {audio}: {e}")))?;
        let file_name = Path::new(audio)
            .file_name()
            .and_then(|n| n.to_str())
            .unwrap_or("audio.wav")
            .to_owned();
        let form = reqwest::blocking::multipart::Form::new()
            .text("model", req.model_id.clone())
            .text("prompt", req.system_prompt.clone())
            .part(
                "file",
                reqwest::blocking::multipart::Part::bytes(bytes).file_name(file_name),
            );
        let url = format!("{}/audio/transcriptions", self.endpoint);
        let v = self.send(req, self.client.post(url).multipart(form))?;
        v.get("text")
            .and_then(Value::as_str)
            .map(str::to_owned)
            .ok_or_else(|| GatewayError::Transport("response has no text".into()))
    }
}

fn classify(req: &ModelRequest, e: reqwest::Error) -> GatewayError {
    if e.is_timeout() {
        GatewayError::Timeout {
            model_id: req.model_id.clone(),
            attempts: 1,
        }
    } else {
        GatewayError::Transport(e.to_string())
    }
}

impl ModelGateway for LiveBackend {
    fn invoke(&self, req: &ModelRequest) -> Result<ModelResponse, GatewayError> {
        req.validate()?;
        if let Some(known) = &self.known_models {
            if !known.contains(&req.model_id) {
                return Err(GatewayError::NoRouteForModel(req.model_id.clone()));
            }
        }
        if req.max_latency.is_zero() {
            return Err(GatewayError::Timeout {
                model_id: req.model_id.clone(),
                attempts: 1,
            });
        }
        let started = Instant::now();
        let text = match req.kind {
            ModelKind::Caption | ModelKind::Completion => self.chat(req)?,
            ModelKind::Transcription => self.transcribe(req)?,
        };
        Ok(ModelResponse {
            text,
            latency: started.elapsed(),
            backend: Backend::Live,
            kind: req.kind,
            model_id: req.model_id.clone(),
        })
    }
}

#[derive(Debug, Error)]
pub enum GatewaySetupError {
    #[error("cannot read mock rules {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("mock rules {path}: {source}")]
    Rules { path: String, source: MockRuleError },
    #[error("mock backend selected but no rule file configured")]
    NoMockRules,
    #[error("live backend selected but no endpoint configured")]
    NoEndpoint,
}

pub fn load_mock_rules(path: &Path) -> Result<MockRules, GatewaySetupError> {
    let text = std::fs::read_to_string(path).map_err(|source| GatewaySetupError::Io {
        path: path.display().to_string(),
        source,
    })?;
    MockRules::from_json(&text).map_err(|source| GatewaySetupError::Rules {
        path: path.display().to_string(),
        source,
    })
}

/// The gateway every pipeline uses: retries transient failures and records
/// the latency of each successful response.
pub struct Gateway {
    backend: Box<dyn ModelGateway + Send + Sync>,
    policy: RetryPolicy,
    real_sleep: bool,
    latency: Mutex<LatencyTracker>,
}

impl Gateway {
    /// Mock gateways never sleep between retries.
    pub fn mock(rules: MockRules, policy: RetryPolicy) -> Self {
        Gateway {
            backend: Box::new(MockBackend::new(rules)),
            policy,
            real_sleep: false,
            latency: Mutex::new(LatencyTracker::new()),
        }
    }

    pub fn live(backend: LiveBackend, policy: RetryPolicy) -> Self {
        Gateway {
            backend: Box::new(backend),
            policy,
            real_sleep: true,
            latency: Mutex::new(LatencyTracker::new()),
        }
    }

    pub fn from_config(cfg: &EngineConfig) -> Result<Self, GatewaySetupError> {
        let g = &cfg.gateway;
        let policy = RetryPolicy {
            retries: g.retries,
            initial_backoff: Duration::from_millis(g.initial_backoff_ms),
        };
        match g.backend {
            BackendKind::Mock => {
                let path = g
                    .mock_rules
                    .as_ref()
                    .ok_or(GatewaySetupError::NoMockRules)?;
                Ok(Gateway::mock(load_mock_rules(path)?, policy))
            }
            BackendKind::Live => {
                let endpoint = g.endpoint.clone().ok_or(GatewaySetupError::NoEndpoint)?;
                let backend = LiveBackend::new(endpoint, g.api_token.clone(), g.temperature)
                    .with_known_models(cfg.models.all().iter().map(|m| m.to_string()));
                Ok(Gateway::live(backend, policy))
            }
        }
    }

    pub fn latency_snapshot(&self) -> Vec<LatencyStats> {
        self.latency.lock().expect("latency lock").snapshot()
    }

    pub fn latency_for(&self, kind: ModelKind, model_id: &str) -> LatencyStats {
        self.latency
            .lock()
            .expect("latency lock")
            .get(kind, model_id)
    }
}

impl ModelGateway for Gateway {
    fn invoke(&self, req: &ModelRequest) -> Result<ModelResponse, GatewayError> {
        let real = self.real_sleep;
        let mut sleep = |d: Duration| {
            if real {
                std::thread::sleep(d);
            }
        };
        let result = invoke_with_retry(&*self.backend, req, &self.policy, &mut sleep);
        match &result {
            Ok(resp) => {
                self.latency.lock().expect("latency lock").record(resp);
            }
            Err(e) => {
                tracing::warn!(model = %req.model_id, kind = ?req.kind, error = %e, "model call failed")
            }
        }
        result
    }
}
