//! Model gateway boundary.
//!
//! Every caption, completion and transcription request in the engine is a
//! [`ModelRequest`] handed to a [`ModelGateway`]. This module owns the request
//! contract, the deterministic [`MockBackend`], and the retry loop; the live
//! HTTP transport is provided by the std crate.

use alloc::boxed::Box;
use alloc::collections::BTreeSet;
use alloc::string::{String, ToString};
use alloc::sync::Arc;
use alloc::vec::Vec;
use core::fmt;
use core::time::Duration;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelKind {
    Caption,
    Completion,
    Transcription,
}

impl fmt::Display for ModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ModelKind::Caption => "caption",
            ModelKind::Completion => "completion",
            ModelKind::Transcription => "transcription",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Backend {
    Live,
    Mock,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ModelRequest {
    pub kind: ModelKind,
    pub model_id: String,
    pub system_prompt: String,
    pub user_content: String,
    /// Opaque image reference; present only for captions.
    pub image_ref: Option<String>,
    /// Opaque audio reference; present only for transcriptions.
    pub audio_ref: Option<String>,
    pub max_latency: Duration,
}

impl ModelRequest {
    pub fn completion(
        model_id: impl Into<String>,
        system_prompt: impl Into<String>,
        user_content: impl Into<String>,
        max_latency: Duration,
    ) -> Self {
        ModelRequest {
            kind: ModelKind::Completion,
            model_id: model_id.into(),
            system_prompt: system_prompt.into(),
            user_content: user_content.into(),
            image_ref: None,
            audio_ref: None,
            max_latency,
        }
    }

    pub fn caption(
        model_id: impl Into<String>,
        system_prompt: impl Into<String>,
        user_content: impl Into<String>,
        image_ref: impl Into<String>,
        max_latency: Duration,
    ) -> Self {
        ModelRequest {
            kind: ModelKind::Caption,
            model_id: model_id.into(),
            system_prompt: system_prompt.into(),
            user_content: user_content.into(),
            image_ref: Some(image_ref.into()),
            audio_ref: None,
            max_latency,
        }
    }

    pub fn transcription(
        model_id: impl Into<String>,
        system_prompt: impl Into<String>,
        audio_ref: impl Into<String>,
        max_latency: Duration,
    ) -> Self {
        ModelRequest {
            kind: ModelKind::Transcription,
            model_id: model_id.into(),
            system_prompt: system_prompt.into(),
            user_content: String::new(),
            image_ref: None,
            audio_ref: Some(audio_ref.into()),
            max_latency,
        }
    }

    pub fn validate(&self) -> Result<(), GatewayError> {
        if self.system_prompt.trim().is_empty() {
            return Err(GatewayError::InvalidRequest("system prompt is empty"));
        }
        let ok = match self.kind {
            ModelKind::Caption => self.image_ref.is_some() && self.audio_ref.is_none(),
            ModelKind::Completion => self.image_ref.is_none() && self.audio_ref.is_none(),
            ModelKind::Transcription => self.audio_ref.is_some() && self.image_ref.is_none(),
        };
        if !ok {
            return Err(GatewayError::InvalidRequest(
                "media reference does not match request kind",
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelResponse {
    pub text: String,
    pub latency: Duration,
    pub backend: Backend,
    pub kind: ModelKind,
    pub model_id: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum GatewayError {
    #[error(
        "model `{model_id}` did not answer within its latency budget after {attempts} attempt(s)"
    )]
    Timeout { model_id: String, attempts: u32 },
    #[error("no route for model `{0}`")]
    NoRouteForModel(String),
    #[error("mock backend has no rule matching a {kind} request to `{model_id}`")]
    MockMiss { kind: ModelKind, model_id: String },
    #[error("invalid model request: {0}")]
    InvalidRequest(&'static str),
    #[error("transport error: {0}")]
    Transport(String),
}

impl GatewayError {
    /// Errors worth another attempt.
    pub fn is_transient(&self) -> bool {
        matches!(
            self,
            GatewayError::Timeout { .. } | GatewayError::Transport(_)
        )
    }
}

/// Anything that can answer a [`ModelRequest`].
pub trait ModelGateway {
    fn invoke(&self, req: &ModelRequest) -> Result<ModelResponse, GatewayError>;
}

impl<T: ModelGateway + ?Sized> ModelGateway for &T {
    fn invoke(&self, req: &ModelRequest) -> Result<ModelResponse, GatewayError> {
        (**self).invoke(req)
    }
}

impl<T: ModelGateway + ?Sized> ModelGateway for Box<T> {
    fn invoke(&self, req: &ModelRequest) -> Result<ModelResponse, GatewayError> {
        (**self).invoke(req)
    }
}

impl<T: ModelGateway + ?Sized> ModelGateway for Arc<T> {
    fn invoke(&self, req: &ModelRequest) -> Result<ModelResponse, GatewayError> {
        (**self).invoke(req)
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MatchScope {
    /// System prompt, user content and media reference.
    #[default]
    Any,
    System,
    User,
    Media,
}

/// One canned answer of the mock backend.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MockRule {
    /// Substring that must occur in the scoped request text.
    pub matcher: String,
    pub response: String,
    pub priority: i64,
    #[serde(default)]
    pub scope: MatchScope,
    /// Restrict the rule to one request kind.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub kind: Option<ModelKind>,
    /// Simulated latency reported for matches.
    #[serde(default)]
    pub latency_ms: u64,
}

impl MockRule {
    pub fn new(matcher: impl Into<String>, response: impl Into<String>, priority: i64) -> Self {
        MockRule {
            matcher: matcher.into(),
            response: response.into(),
            priority,
            scope: MatchScope::Any,
            kind: None,
            latency_ms: 0,
        }
    }

    pub fn with_scope(mut self, scope: MatchScope) -> Self {
        self.scope = scope;
        self
    }

    pub fn with_kind(mut self, kind: ModelKind) -> Self {
        self.kind = Some(kind);
        self
    }

    pub fn with_latency_ms(mut self, ms: u64) -> Self {
        self.latency_ms = ms;
        self
    }

    pub fn matches(&self, req: &ModelRequest) -> bool {
        if self.kind.is_some_and(|k| k != req.kind) {
            return false;
        }
        let media = req
            .image_ref
            .as_deref()
            .or(req.audio_ref.as_deref())
            .unwrap_or("");
        let needle = self.matcher.as_str();
        match self.scope {
            MatchScope::System => req.system_prompt.contains(needle),
            MatchScope::User => req.user_content.contains(needle),
            MatchScope::Media => media.contains(needle),
            MatchScope::Any => {
                req.system_prompt.contains(needle)
                    || req.user_content.contains(needle)
                    || media.contains(needle)
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum MockRuleError {
    #[error("duplicate mock rule priority {0}")]
    DuplicatePriority(i64),
    #[error("mock rule with empty matcher (priority {0})")]
    EmptyMatcher(i64),
    #[error("malformed mock rule set: {0}")]
    Malformed(String),
}

/// Immutable rule set, ordered by descending priority.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct MockRules {
    rules: Vec<MockRule>,
}

impl MockRules {
    pub fn new(mut rules: Vec<MockRule>) -> Result<Self, MockRuleError> {
        let mut seen = BTreeSet::new();
        for r in &rules {
            if r.matcher.is_empty() {
                return Err(MockRuleError::EmptyMatcher(r.priority));
            }
            if !seen.insert(r.priority) {
                return Err(MockRuleError::DuplicatePriority(r.priority));
            }
        }
        rules.sort_by_key(|r| core::cmp::Reverse(r.priority));
        Ok(MockRules { rules })
    }

    /// Parses the JSON rule file format: an array of `{matcher, response, priority}`.
    pub fn from_json(text: &str) -> Result<Self, MockRuleError> {
        let rules: Vec<MockRule> =
            serde_json::from_str(text).map_err(|e| MockRuleError::Malformed(e.to_string()))?;
        MockRules::new(rules)
    }

    pub fn find(&self, req: &ModelRequest) -> Option<&MockRule> {
        self.rules.iter().find(|r| r.matches(req))
    }

    pub fn rules(&self) -> &[MockRule] {
        &self.rules
    }
}

/// Deterministic stand-in for remote models.
#[derive(Debug, Clone, Default)]
pub struct MockBackend {
    rules: MockRules,
    /// When set, only these model ids are routable.
    known_models: Option<BTreeSet<String>>,
}

impl MockBackend {
    pub fn new(rules: MockRules) -> Self {
        MockBackend {
            rules,
            known_models: None,
        }
    }

    pub fn with_known_models<I, S>(mut self, models: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        self.known_models = Some(models.into_iter().map(Into::into).collect());
        self
    }

    pub fn rules(&self) -> &MockRules {
        &self.rules
    }
}

impl ModelGateway for MockBackend {
    fn invoke(&self, req: &ModelRequest) -> Result<ModelResponse, GatewayError> {
        req.validate()?;
        if let Some(known) = &self.known_models {
            if !known.contains(&req.model_id) {
                return Err(GatewayError::NoRouteForModel(req.model_id.clone()));
            }
        }
        let rule = self.rules.find(req).ok_or_else(|| GatewayError::MockMiss {
            kind: req.kind,
            model_id: req.model_id.clone(),
        })?;
        let latency = Duration::from_millis(rule.latency_ms);
        if latency > req.max_latency {
            return Err(GatewayError::Timeout {
                model_id: req.model_id.clone(),
                attempts: 1,
            });
        }
        Ok(ModelResponse {
            text: rule.response.clone(),
            latency,
            backend: Backend::Mock,
            kind: req.kind,
            model_id: req.model_id.clone(),
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct RetryPolicy {
    pub retries: u32,
    #[serde(with = "duration_ms")]
    pub initial_backoff: Duration,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        RetryPolicy {
            retries: 2,
            initial_backoff: Duration::from_secs(1),
        }
    }
}

impl RetryPolicy {
    pub fn none() -> Self {
        RetryPolicy {
            retries: 0,
            initial_backoff: Duration::ZERO,
        }
    }

    /// Backoff before retry number `retry` (0-based): initial × 2^retry.
    pub fn backoff(&self, retry: u32) -> Duration {
        self.initial_backoff
            .checked_mul(1u32 << retry.min(16))
            .unwrap_or(Duration::MAX)
    }

    /// Upper bound on total time spent waiting between attempts.
    pub fn total_backoff(&self) -> Duration {
        (0..self.retries).map(|r| self.backoff(r)).sum()
    }
}

/// Runs `req` against `backend`, retrying transient failures per `policy`.
///
/// `sleep` is called with each backoff; mock-backed gateways pass a no-op so
/// tests never wait on the wall clock.
pub fn invoke_with_retry<G: ModelGateway + ?Sized>(
    backend: &G,
    req: &ModelRequest,
    policy: &RetryPolicy,
    sleep: &mut dyn FnMut(Duration),
) -> Result<ModelResponse, GatewayError> {
    req.validate()?;
    let mut attempt = 0;
    loop {
        match backend.invoke(req) {
            Ok(resp) => return Ok(resp),
            Err(e) if e.is_transient() && attempt < policy.retries => {
                sleep(policy.backoff(attempt));
                attempt += 1;
            }
            Err(GatewayError::Timeout { model_id, .. }) => {
                return Err(GatewayError::Timeout {
                    model_id,
                    attempts: attempt + 1,
                })
            }
            Err(e) => return Err(e),
        }
    }
}

pub(crate) mod duration_ms {
    use core::time::Duration;
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(d: &Duration, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_u64(d.as_millis() as u64)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Duration, D::Error> {
        Ok(Duration::from_millis(u64::deserialize(d)?))
    }
}
