//! Task agents: transcript scanning for actionable items, tool registry and
//! the exactly-once action log.

pub mod drafts;
pub mod when;

use alloc::boxed::Box;
use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;
use core::fmt;
use core::time::Duration;

use chrono::NaiveDateTime;
use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

use crate::clock::VirtualTime;
use crate::gateway::{GatewayError, ModelGateway, ModelRequest};
use crate::ingest::{AudioPayload, AudioSegment};
use crate::prompts::{PromptCatalog, PromptId};

pub use when::{resolve_when, Unresolved};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ActionKind {
    Email,
    CalendarEvent,
    Other,
}

impl ActionKind {
    pub fn as_str(self) -> &'static str {
        match self {
            ActionKind::Email => "email",
            ActionKind::CalendarEvent => "calendar_event",
            ActionKind::Other => "other",
        }
    }
}

impl fmt::Display for ActionKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Confidence {
    Explicit,
    Inferred,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EmailPayload {
    pub recipient_hint: Option<String>,
    pub subject: String,
    pub body_draft: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CalendarPayload {
    pub title: String,
    /// The time as spoken.
    pub when_text: String,
    pub start: Option<NaiveDateTime>,
    /// Set exactly when `start` is `None`.
    pub unresolved: Option<Unresolved>,
    pub duration_minutes: Option<u32>,
    pub attendees_hint: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct OtherPayload {
    pub summary: String,
    /// Kind label the model used when it was not a supported kind.
    pub label: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ActionPayload {
    Email(EmailPayload),
    CalendarEvent(CalendarPayload),
    Other(OtherPayload),
}

impl ActionPayload {
    pub fn kind(&self) -> ActionKind {
        match self {
            ActionPayload::Email(_) => ActionKind::Email,
            ActionPayload::CalendarEvent(_) => ActionKind::CalendarEvent,
            ActionPayload::Other(_) => ActionKind::Other,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SegmentRef {
    pub index: u32,
    pub start: VirtualTime,
    pub end: VirtualTime,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ActionItem {
    /// `act-<segment>-<n>`, stable across replays.
    pub id: String,
    pub payload: ActionPayload,
    pub source_segment: SegmentRef,
    pub confidence: Confidence,
}

impl ActionItem {
    pub fn kind(&self) -> ActionKind {
        self.payload.kind()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ActionParseError {
    #[error("no JSON array in output")]
    NoArray,
    #[error("invalid JSON: {0}")]
    InvalidJson(String),
    #[error("item {index}: {reason}")]
    BadItem { index: usize, reason: &'static str },
}

fn str_field(obj: &serde_json::Map<String, Value>, key: &str) -> Option<String> {
    obj.get(key)
        .and_then(Value::as_str)
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(String::from)
}

fn parse_item(
    index: usize,
    v: &Value,
    now: NaiveDateTime,
) -> Result<(ActionPayload, Confidence), ActionParseError> {
    let bad = |reason| ActionParseError::BadItem { index, reason };
    let obj = v.as_object().ok_or(bad("not an object"))?;
    let kind = str_field(obj, "kind").ok_or(bad("missing kind"))?;
    let confidence = match str_field(obj, "confidence").as_deref() {
        Some("explicit") => Confidence::Explicit,
        _ => Confidence::Inferred,
    };
    let payload = match kind.as_str() {
        "email" => {
            let subject = str_field(obj, "subject");
            let body = obj
                .get("body_draft")
                .and_then(Value::as_str)
                .map(String::from);
            if subject.is_none() && body.is_none() {
                return Err(bad("email needs a subject or body"));
            }
            ActionPayload::Email(EmailPayload {
                recipient_hint: str_field(obj, "recipient_hint"),
                subject: subject.unwrap_or_default(),
                body_draft: body.unwrap_or_default(),
            })
        }
        "calendar_event" => {
            let title = str_field(obj, "title").ok_or(bad("calendar event needs a title"))?;
            let when_text = str_field(obj, "when").unwrap_or_default();
            let (start, unresolved) = match resolve_when(&when_text, now) {
                Ok(t) => (Some(t), None),
                Err(e) => (None, Some(e)),
            };
            let duration_minutes = match obj.get("duration_minutes") {
                None | Some(Value::Null) => None,
                Some(d) => Some(
                    d.as_u64()
                        .and_then(|m| u32::try_from(m).ok())
                        .filter(|m| *m > 0)
                        .ok_or(bad("duration_minutes must be a positive integer"))?,
                ),
            };
            let attendees_hint = match obj.get("attendees_hint") {
                Some(Value::Array(a)) => a
                    .iter()
                    .filter_map(Value::as_str)
                    .map(String::from)
                    .collect(),
                Some(Value::String(s)) => alloc::vec![s.clone()],
                _ => Vec::new(),
            };
            ActionPayload::CalendarEvent(CalendarPayload {
                title,
                when_text,
                start,
                unresolved,
                duration_minutes,
                attendees_hint,
            })
        }
        other => ActionPayload::Other(OtherPayload {
            summary: str_field(obj, "summary")
                .or_else(|| str_field(obj, "title"))
                .or_else(|| str_field(obj, "subject"))
                .ok_or(bad("other item needs a summary"))?,
            label: (other != "other").then(|| other.to_string()),
        }),
    };
    Ok((payload, confidence))
}

/// Parses the extraction output: a JSON array of items. Relative times are
/// resolved against `now`.
pub fn parse_actions(
    text: &str,
    now: NaiveDateTime,
) -> Result<Vec<(ActionPayload, Confidence)>, ActionParseError> {
    let arr: Vec<Value> = crate::jsontext::parse_first(text, '[', ']')
        .ok_or(ActionParseError::NoArray)?
        .map_err(|e| ActionParseError::InvalidJson(e.to_string()))?;
    arr.iter()
        .enumerate()
        .map(|(i, v)| parse_item(i, v, now))
        .collect()
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "outcome", rename_all = "snake_case")]
pub enum SegmentOutcome {
    NoActions,
    Actions {
        items: Vec<ActionItem>,
    },
    ManualReview {
        reason: String,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        first_output: Option<String>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        retry_output: Option<String>,
    },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SegmentReport {
    pub segment: SegmentRef,
    pub transcript: Option<String>,
    #[serde(flatten)]
    pub outcome: SegmentOutcome,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AgentsConfig {
    pub extraction_model: String,
    pub transcription_model: String,
    #[serde(with = "crate::gateway::duration_ms")]
    pub max_latency: Duration,
}

impl Default for AgentsConfig {
    fn default() -> Self {
        AgentsConfig {
            extraction_model: "llama-3.1-70b".into(),
            transcription_model: "whisper-1".into(),
            max_latency: Duration::from_secs(60),
        }
    }
}

pub const ACTIONS_FORMAT_REMINDER: &str =
    "Respond with a JSON array only, using the kinds and fields listed above, or [] if there is nothing to do.";

pub const TRANSCRIPTION_INSTRUCTION: &str = "Transcribe the speech in this audio verbatim.";

#[derive(Debug, Clone)]
pub struct TaskAgents {
    prompts: PromptCatalog,
    config: AgentsConfig,
}

impl TaskAgents {
    pub fn new(prompts: PromptCatalog, config: AgentsConfig) -> Self {
        TaskAgents { prompts, config }
    }

    /// Transcript passthrough, or the gateway's transcription route.
    pub fn transcribe<G: ModelGateway + ?Sized>(
        &self,
        gateway: &G,
        seg: &AudioSegment,
    ) -> Result<String, GatewayError> {
        match &seg.payload {
            AudioPayload::Transcript(t) => Ok(t.clone()),
            AudioPayload::AudioRef(r) => Ok(gateway
                .invoke(&ModelRequest::transcription(
                    self.config.transcription_model.clone(),
                    TRANSCRIPTION_INSTRUCTION,
                    r.clone(),
                    self.config.max_latency,
                ))?
                .text),
        }
    }

    pub fn extraction_request(&self, transcript: &str) -> ModelRequest {
        ModelRequest::completion(
            self.config.extraction_model.clone(),
            self.prompts.text(PromptId::ActionExtraction),
            format!("Transcript:\n{}\nOutput:", transcript.trim()),
            self.config.max_latency,
        )
    }

    /// Scans one transcript. Never fails: problems end in manual review.
    pub fn extract<G: ModelGateway + ?Sized>(
        &self,
        gateway: &G,
        transcript: &str,
        segment: SegmentRef,
        now: NaiveDateTime,
    ) -> SegmentOutcome {
        if transcript.trim().is_empty() {
            return SegmentOutcome::NoActions;
        }
        let review = |reason: String, first: Option<String>, retry: Option<String>| {
            SegmentOutcome::ManualReview {
                reason,
                first_output: first,
                retry_output: retry,
            }
        };
        let req = self.extraction_request(transcript);
        let first = match gateway.invoke(&req) {
            Ok(r) => r.text,
            Err(e) => return review(e.to_string(), None, None),
        };
        let parsed = match parse_actions(&first, now) {
            Ok(p) => p,
            Err(_) => {
                let mut retry = req.clone();
                retry.user_content = format!(
                    "{}\n\nYour previous output could not be parsed:\n{first}\n{ACTIONS_FORMAT_REMINDER}",
                    req.user_content
                );
                let second = match gateway.invoke(&retry) {
                    Ok(r) => r.text,
                    Err(e) => return review(e.to_string(), Some(first), None),
                };
                match parse_actions(&second, now) {
                    Ok(p) => p,
                    Err(e) => {
                        return review(
                            format!("unparseable actions: {e}"),
                            Some(first),
                            Some(second),
                        )
                    }
                }
            }
        };
        if parsed.is_empty() {
            return SegmentOutcome::NoActions;
        }
        let items = parsed
            .into_iter()
            .enumerate()
            .map(|(n, (payload, confidence))| ActionItem {
                id: format!("act-{:04}-{}", segment.index, n + 1),
                payload,
                source_segment: segment,
                confidence,
            })
            .collect();
        SegmentOutcome::Actions { items }
    }

    /// Transcribes and scans one segment; `now` is the wall-clock time at
    /// the segment end.
    pub fn process_segment<G: ModelGateway + ?Sized>(
        &self,
        gateway: &G,
        seg: &AudioSegment,
        index: u32,
        now: NaiveDateTime,
    ) -> SegmentReport {
        let segment = SegmentRef {
            index,
            start: seg.start,
            end: seg.end(),
        };
        match self.transcribe(gateway, seg) {
            Ok(t) => SegmentReport {
                segment,
                outcome: self.extract(gateway, &t, segment, now),
                transcript: Some(t),
            },
            Err(e) => SegmentReport {
                segment,
                transcript: None,
                outcome: SegmentOutcome::ManualReview {
                    reason: format!("transcription failed: {e}"),
                    first_output: None,
                    retry_output: None,
                },
            },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct HandlerDescriptor {
    pub name: String,
    pub version: String,
    pub kind: ActionKind,
}

/// A tool that turns an action item into an artifact.
pub trait ToolHandler: Send {
    fn descriptor(&self) -> HandlerDescriptor;
    /// Returns an artifact reference (for example a file path).
    fn handle(&mut self, item: &ActionItem) -> Result<String, String>;
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum RegistryError {
    #[error("a handler for {kind} is already registered ({existing})")]
    Duplicate { kind: ActionKind, existing: String },
}

#[derive(Default)]
pub struct ToolRegistry {
    handlers: BTreeMap<ActionKind, Box<dyn ToolHandler>>,
}

impl fmt::Debug for ToolRegistry {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_list().entries(self.descriptors()).finish()
    }
}

impl ToolRegistry {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn register(&mut self, handler: Box<dyn ToolHandler>) -> Result<(), RegistryError> {
        let d = handler.descriptor();
        if let Some(existing) = self.handlers.get(&d.kind) {
            return Err(RegistryError::Duplicate {
                kind: d.kind,
                existing: existing.descriptor().name,
            });
        }
        self.handlers.insert(d.kind, handler);
        Ok(())
    }

    pub fn descriptors(&self) -> Vec<HandlerDescriptor> {
        self.handlers.values().map(|h| h.descriptor()).collect()
    }

    pub fn handler_mut(&mut self, kind: ActionKind) -> Option<&mut (dyn ToolHandler + 'static)> {
        self.handlers.get_mut(&kind).map(|h| h.as_mut())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ActionStatus {
    Queued,
    Done,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ActionRecord {
    pub item: ActionItem,
    pub status: ActionStatus,
    pub attempts: u32,
    pub handler: Option<HandlerDescriptor>,
    pub artifact: Option<String>,
    pub last_error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ToolResult {
    pub id: String,
    pub handler: HandlerDescriptor,
    pub artifact: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum DispatchError {
    #[error("unknown action `{0}`")]
    UnknownId(String),
    #[error("no handler registered for {0}")]
    NoHandler(ActionKind),
    #[error("handler {handler} failed: {error}")]
    HandlerFailed { handler: String, error: String },
}

/// Every extracted item, in extraction order, with its dispatch state.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct ActionLog {
    records: Vec<ActionRecord>,
}

impl ActionLog {
    pub fn new() -> Self {
        Self::default()
    }

    /// Queues `item`; an id already present is left as is.
    pub fn enqueue(&mut self, item: ActionItem) -> bool {
        if self.get(&item.id).is_some() {
            return false;
        }
        self.records.push(ActionRecord {
            item,
            status: ActionStatus::Queued,
            attempts: 0,
            handler: None,
            artifact: None,
            last_error: None,
        });
        true
    }

    pub fn get(&self, id: &str) -> Option<&ActionRecord> {
        self.records.iter().find(|r| r.item.id == id)
    }

    pub fn records(&self) -> &[ActionRecord] {
        &self.records
    }

    /// Runs the registered handler once per item. Re-dispatching a done
    /// item returns the recorded result without invoking the handler.
    pub fn dispatch(
        &mut self,
        id: &str,
        registry: &mut ToolRegistry,
    ) -> Result<ToolResult, DispatchError> {
        let rec = self
            .records
            .iter_mut()
            .find(|r| r.item.id == id)
            .ok_or_else(|| DispatchError::UnknownId(id.into()))?;
        if rec.status == ActionStatus::Done {
            return Ok(ToolResult {
                id: id.into(),
                handler: rec.handler.clone().expect("done records carry a handler"),
                artifact: rec
                    .artifact
                    .clone()
                    .expect("done records carry an artifact"),
            });
        }
        let kind = rec.item.kind();
        let handler = registry.handler_mut(kind).ok_or_else(|| {
            rec.last_error = Some(format!("no handler registered for {kind}"));
            DispatchError::NoHandler(kind)
        })?;
        let descriptor = handler.descriptor();
        rec.attempts += 1;
        match handler.handle(&rec.item) {
            Ok(artifact) => {
                rec.status = ActionStatus::Done;
                rec.handler = Some(descriptor.clone());
                rec.artifact = Some(artifact.clone());
                rec.last_error = None;
                Ok(ToolResult {
                    id: id.into(),
                    handler: descriptor,
                    artifact,
                })
            }
            Err(error) => {
                rec.last_error = Some(error.clone());
                Err(DispatchError::HandlerFailed {
                    handler: descriptor.name,
                    error,
                })
            }
        }
    }

    /// Dispatches every queued item, returning per-item results.
    pub fn dispatch_queued(
        &mut self,
        registry: &mut ToolRegistry,
    ) -> Vec<(String, Result<ToolResult, DispatchError>)> {
        let queued: Vec<String> = self
            .records
            .iter()
            .filter(|r| r.status == ActionStatus::Queued)
            .map(|r| r.item.id.clone())
            .collect();
        queued
            .into_iter()
            .map(|id| {
                let r = self.dispatch(&id, registry);
                (id, r)
            })
            .collect()
    }
}
