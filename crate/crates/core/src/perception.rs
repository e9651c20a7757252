//! Vision pipeline: caption requests for egocentric and screen frames, the
//! previous-activity correction, insight extraction and its bracket-pipe
//! output format, and the screen-activity buffer.

use alloc::collections::VecDeque;
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;
use core::fmt;
use core::str::FromStr;
use core::time::Duration;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::clock::VirtualTime;
use crate::gateway::{GatewayError, ModelGateway, ModelRequest};
use crate::ingest::{FrameEvent, FramePayload, FrameSource};
use crate::prompts::{PromptCatalog, PromptId, PREVIOUS_ACTIVITY_SLOT};

pub const SCREEN_BUFFER_CAPACITY: usize = 10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum ActivityClass {
    #[serde(rename = "Desk_Work")]
    DeskWork,
    Commuting,
    Eating,
    #[serde(rename = "In_Meeting")]
    InMeeting,
    Other,
}

impl ActivityClass {
    pub const ALL: [ActivityClass; 5] = [
        ActivityClass::DeskWork,
        ActivityClass::Commuting,
        ActivityClass::Eating,
        ActivityClass::InMeeting,
        ActivityClass::Other,
    ];

    pub fn token(self) -> &'static str {
        match self {
            ActivityClass::DeskWork => "Desk_Work",
            ActivityClass::Commuting => "Commuting",
            ActivityClass::Eating => "Eating",
            ActivityClass::InMeeting => "In_Meeting",
            ActivityClass::Other => "Other",
        }
    }
}

impl fmt::Display for ActivityClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.token())
    }
}

impl FromStr for ActivityClass {
    type Err = InsightParseError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let s = s.trim();
        ActivityClass::ALL
            .into_iter()
            .find(|c| c.token().eq_ignore_ascii_case(s))
            .ok_or_else(|| InsightParseError::UnknownClass(s.into()))
    }
}

/// Focus demand of the current task. Ordered `Low < Mid < High`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Criticality {
    Low,
    Mid,
    High,
}

impl Criticality {
    pub const ALL: [Criticality; 3] = [Criticality::Low, Criticality::Mid, Criticality::High];

    pub fn token(self) -> &'static str {
        match self {
            Criticality::Low => "Low",
            Criticality::Mid => "Mid",
            Criticality::High => "High",
        }
    }
}

impl fmt::Display for Criticality {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.token())
    }
}

impl FromStr for Criticality {
    type Err = InsightParseError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let s = s.trim();
        Criticality::ALL
            .into_iter()
            .find(|c| c.token().eq_ignore_ascii_case(s))
            .ok_or_else(|| InsightParseError::UnknownCriticality(s.into()))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FrameInsight {
    pub timestamp: VirtualTime,
    pub activity_description: String,
    pub activity_class: ActivityClass,
    pub criticality: Criticality,
    pub surrounding: String,
    pub source_caption: String,
}

/// The four fields of one bracket-pipe line.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct InsightFields {
    pub activity_description: String,
    pub activity_class: ActivityClass,
    pub criticality: Criticality,
    pub surrounding: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum InsightParseError {
    #[error("no `[... | ... | ... | ...]` line found")]
    NoBracketLine,
    #[error("expected 4 pipe-separated fields, found {0}")]
    FieldCount(usize),
    #[error("unknown activity class `{0}`")]
    UnknownClass(String),
    #[error("unknown criticality `{0}`")]
    UnknownCriticality(String),
    #[error("empty description or surrounding")]
    EmptyField,
}

fn sanitize_field(s: &str) -> String {
    s.chars()
        .map(|c| if matches!(c, '|' | '[' | ']') { '/' } else { c })
        .collect::<String>()
        .split_whitespace()
        .collect::<Vec<_>>()
        .join(" ")
}

/// Formats `[desc | class | crit | surrounding]`, replacing delimiter
/// characters inside free-text fields with `/`.
pub fn format_insight_line(i: &InsightFields) -> String {
    format!(
        "[{} | {} | {} | {}]",
        sanitize_field(&i.activity_description),
        i.activity_class,
        i.criticality,
        sanitize_field(&i.surrounding)
    )
}

fn parse_bracket_body(body: &str) -> Result<InsightFields, InsightParseError> {
    let body = body.split_whitespace().collect::<Vec<_>>().join(" ");
    let pipes: Vec<usize> = body.match_indices('|').map(|(i, _)| i).collect();
    if pipes.len() < 3 {
        return Err(InsightParseError::FieldCount(pipes.len() + 1));
    }
    // Class, criticality and surrounding are taken from the right so stray
    // pipes can only land in the description.
    let k = pipes.len();
    let desc = body[..pipes[k - 3]].trim();
    let class = body[pipes[k - 3] + 1..pipes[k - 2]].trim();
    let crit = body[pipes[k - 2] + 1..pipes[k - 1]].trim();
    let surrounding = body[pipes[k - 1] + 1..].trim();
    let activity_class = class.parse()?;
    let criticality = crit.parse()?;
    if desc.is_empty() || surrounding.is_empty() {
        return Err(InsightParseError::EmptyField);
    }
    Ok(InsightFields {
        activity_description: desc.into(),
        activity_class,
        criticality,
        surrounding: surrounding.into(),
    })
}

/// Finds the first `[...]` group in model output that parses as an insight.
/// Groups may wrap across lines. Returns the error of the first candidate
/// when none parses.
pub fn parse_insight_line(output: &str) -> Result<InsightFields, InsightParseError> {
    let mut first_err = None;
    let mut rest = output;
    while let Some(open) = rest.find('[') {
        let after = &rest[open + 1..];
        let Some(close) = after.find(']') else { break };
        match parse_bracket_body(&after[..close]) {
            Ok(fields) => return Ok(fields),
            Err(e) => {
                first_err.get_or_insert(e);
            }
        }
        rest = &after[close + 1..];
    }
    Err(first_err.unwrap_or(InsightParseError::NoBracketLine))
}

/// Descriptions of the most recent screen snapshots, oldest first.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScreenActivityBuffer {
    entries: VecDeque<(VirtualTime, String)>,
}

impl ScreenActivityBuffer {
    pub fn push(&mut self, at: VirtualTime, description: String) {
        if self.entries.len() == SCREEN_BUFFER_CAPACITY {
            self.entries.pop_front();
        }
        self.entries.push_back((at, description));
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn snapshot(&self) -> Vec<(VirtualTime, String)> {
        self.entries.iter().cloned().collect()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PerceptionConfig {
    pub caption_model: String,
    pub insight_model: String,
    #[serde(with = "crate::gateway::duration_ms")]
    pub max_latency: Duration,
}

impl Default for PerceptionConfig {
    fn default() -> Self {
        PerceptionConfig {
            caption_model: "llama-3.2-11b-vision".into(),
            insight_model: "llama-3.1-8b".into(),
            max_latency: Duration::from_secs(30),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum PerceptionError {
    #[error(transparent)]
    Gateway(#[from] GatewayError),
    #[error("insight output unparseable after retry ({reason})")]
    UnparseableInsight {
        reason: InsightParseError,
        first_output: String,
        retry_output: String,
    },
    #[error("frame from the {0:?} source sent to the wrong pipeline")]
    WrongSource(FrameSource),
    #[error("empty caption")]
    EmptyCaption,
}

pub const EGOCENTRIC_USER_CONTENT: &str = "Describe this egocentric frame.";
pub const SCREEN_USER_CONTENT: &str = "Describe the activity shown in this screen snapshot.";
pub const INSIGHT_FORMAT_REMINDER: &str = "Reply with exactly one line in the format [<activity> | <activity class> | <criticality> | <surrounding>], using one of Desk_Work, Commuting, Eating, In_Meeting, Other and one of Low, Mid, High.";

/// Per-session vision pipeline state.
#[derive(Debug, Clone)]
pub struct Perceiver {
    prompts: PromptCatalog,
    config: PerceptionConfig,
    screen: ScreenActivityBuffer,
    /// Parsed activity of the immediately preceding egocentric frame.
    previous_activity: Option<String>,
}

impl Perceiver {
    pub fn new(prompts: PromptCatalog, config: PerceptionConfig) -> Self {
        Perceiver {
            prompts,
            config,
            screen: ScreenActivityBuffer::default(),
            previous_activity: None,
        }
    }

    pub fn previous_activity(&self) -> Option<&str> {
        self.previous_activity.as_deref()
    }

    /// Egocentric caption system prompt with the previous activity substituted.
    pub fn caption_prompt(&self, prev_activity: Option<&str>) -> String {
        self.prompts
            .text(PromptId::CaptionEgocentric)
            .replace(PREVIOUS_ACTIVITY_SLOT, prev_activity.unwrap_or("none"))
    }

    pub fn caption_frame<G: ModelGateway + ?Sized>(
        &self,
        gateway: &G,
        frame: &FrameEvent,
        prev_activity: Option<&str>,
    ) -> Result<String, PerceptionError> {
        if frame.source != FrameSource::Egocentric {
            return Err(PerceptionError::WrongSource(frame.source));
        }
        match &frame.payload {
            FramePayload::Caption(text) => Ok(text.clone()),
            FramePayload::ImageRef(image) => {
                let req = ModelRequest::caption(
                    self.config.caption_model.clone(),
                    self.caption_prompt(prev_activity),
                    EGOCENTRIC_USER_CONTENT,
                    image.clone(),
                    self.config.max_latency,
                );
                Ok(gateway.invoke(&req)?.text)
            }
        }
    }

    pub fn caption_screen<G: ModelGateway + ?Sized>(
        &mut self,
        gateway: &G,
        frame: &FrameEvent,
    ) -> Result<String, PerceptionError> {
        if frame.source != FrameSource::Screen {
            return Err(PerceptionError::WrongSource(frame.source));
        }
        let description = match &frame.payload {
            FramePayload::Caption(text) => text.clone(),
            FramePayload::ImageRef(image) => {
                let req = ModelRequest::caption(
                    self.config.caption_model.clone(),
                    self.prompts.text(PromptId::CaptionScreen),
                    SCREEN_USER_CONTENT,
                    image.clone(),
                    self.config.max_latency,
                );
                gateway.invoke(&req)?.text.trim().to_string()
            }
        };
        self.screen.push(frame.timestamp, description.clone());
        Ok(description)
    }

    fn insight_system_prompt(&self) -> String {
        format!(
            "{}\n{}",
            self.prompts.text(PromptId::InsightExtraction),
            self.prompts.text(PromptId::InsightFewShot)
        )
    }

    pub fn extract_insights<G: ModelGateway + ?Sized>(
        &self,
        gateway: &G,
        caption: &str,
        timestamp: VirtualTime,
    ) -> Result<FrameInsight, PerceptionError> {
        if caption.trim().is_empty() {
            return Err(PerceptionError::EmptyCaption);
        }
        let system = self.insight_system_prompt();
        let user = format!("Description:\n{}\nOutput:", caption.trim());
        let req = ModelRequest::completion(
            self.config.insight_model.clone(),
            system.clone(),
            user.clone(),
            self.config.max_latency,
        );
        let first = gateway.invoke(&req)?.text;
        let fields = match parse_insight_line(&first) {
            Ok(f) => f,
            Err(_) => {
                let retry = ModelRequest::completion(
                    self.config.insight_model.clone(),
                    system,
                    format!(
                        "{user}\n\nYour previous output could not be parsed:\n{first}\n{INSIGHT_FORMAT_REMINDER}"
                    ),
                    self.config.max_latency,
                );
                let second = gateway.invoke(&retry)?.text;
                parse_insight_line(&second).map_err(|reason| {
                    PerceptionError::UnparseableInsight {
                        reason,
                        first_output: first.clone(),
                        retry_output: second.clone(),
                    }
                })?
            }
        };
        Ok(FrameInsight {
            timestamp,
            activity_description: fields.activity_description,
            activity_class: fields.activity_class,
            criticality: fields.criticality,
            surrounding: fields.surrounding,
            source_caption: caption.into(),
        })
    }

    /// Captions and analyses one egocentric frame, feeding its parsed
    /// activity into the next frame's caption prompt. A failed frame resets
    /// the carried activity to none.
    pub fn process_egocentric<G: ModelGateway + ?Sized>(
        &mut self,
        gateway: &G,
        frame: &FrameEvent,
    ) -> Result<FrameInsight, PerceptionError> {
        let prev = self.previous_activity.take();
        let caption = self.caption_frame(gateway, frame, prev.as_deref())?;
        let insight = self.extract_insights(gateway, &caption, frame.timestamp)?;
        self.previous_activity = Some(insight.activity_description.clone());
        Ok(insight)
    }

    pub fn latest_screen_context(&self) -> Vec<(VirtualTime, String)> {
        self.screen.snapshot()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gateway::{MatchScope, MockBackend, MockRule, MockRules};
    use alloc::vec;

    #[test]
    fn parses_first_fewshot_example() {
        let f = parse_insight_line(
            "[typing on a laptop | Desk_Work | Mid | office desk with papers and a coffee cup]",
        )
        .unwrap();
        assert_eq!(f.activity_description, "typing on a laptop");
        assert_eq!(f.activity_class, ActivityClass::DeskWork);
        assert_eq!(f.criticality, Criticality::Mid);
        assert_eq!(f.surrounding, "office desk with papers and a coffee cup");
    }

    #[test]
    fn parses_wrapped_output_with_preamble() {
        let f = parse_insight_line(
            "Output:\n[walking while using a phone | Commuting | Mid | \noffice hallway with doors on both sides]",
        )
        .unwrap();
        assert_eq!(f.activity_class, ActivityClass::Commuting);
        assert_eq!(f.surrounding, "office hallway with doors on both sides");
    }

    #[test]
    fn tokens_are_case_insensitive() {
        let f = parse_insight_line("[eating | eating | low | canteen]").unwrap();
        assert_eq!(f.activity_class, ActivityClass::Eating);
        assert_eq!(f.criticality, Criticality::Low);
    }

    #[test]
    fn rejects_bad_lines() {
        assert_eq!(
            parse_insight_line("I cannot determine the activity"),
            Err(InsightParseError::NoBracketLine)
        );
        assert_eq!(
            parse_insight_line("[a | Desk_Work | Mid]"),
            Err(InsightParseError::FieldCount(3))
        );
        assert!(matches!(
            parse_insight_line("[a | Socializing | Mid | room]"),
            Err(InsightParseError::UnknownClass(_))
        ));
        assert!(matches!(
            parse_insight_line("[a | Other | Extreme | room]"),
            Err(InsightParseError::UnknownCriticality(_))
        ));
    }

    #[test]
    fn stray_pipe_stays_in_description() {
        let f = parse_insight_line("[reading a | b chart | Desk_Work | Low | desk]").unwrap();
        assert_eq!(f.activity_description, "reading a | b chart");
    }

    #[test]
    fn screen_buffer_keeps_last_ten() {
        let mut b = ScreenActivityBuffer::default();
        for i in 1..=11u64 {
            b.push(VirtualTime(i), format!("s{i}"));
        }
        let snap = b.snapshot();
        assert_eq!(snap.len(), 10);
        assert_eq!(snap[0].1, "s2");
        assert_eq!(snap[9].1, "s11");
    }

    fn perceiver() -> Perceiver {
        Perceiver::new(PromptCatalog::embedded(), PerceptionConfig::default())
    }

    fn frame(ts: u64, payload: FramePayload, source: FrameSource) -> FrameEvent {
        FrameEvent {
            timestamp: VirtualTime(ts),
            payload,
            source,
        }
    }

    #[test]
    fn precomputed_caption_bypasses_gateway() {
        let gw = MockBackend::new(MockRules::default());
        let f = frame(
            0,
            FramePayload::Caption("desk with laptop".into()),
            FrameSource::Egocentric,
        );
        assert_eq!(
            perceiver().caption_frame(&gw, &f, None).unwrap(),
            "desk with laptop"
        );
    }

    #[test]
    fn default_previous_activity_is_none() {
        let p = perceiver();
        assert!(p
            .caption_prompt(None)
            .contains("Previous frame detected activity: \"none\""));
        assert!(p
            .caption_prompt(Some("washing hands in a basin"))
            .contains("washing hands in a basin"));
    }

    #[test]
    fn retry_then_typed_error() {
        let gw = MockBackend::new(
            MockRules::new(vec![MockRule::new(
                "Description:",
                "I cannot determine the activity",
                1,
            )
            .with_scope(MatchScope::User)])
            .unwrap(),
        );
        let err = perceiver()
            .extract_insights(&gw, "a blurry frame", VirtualTime(0))
            .unwrap_err();
        match err {
            PerceptionError::UnparseableInsight {
                first_output,
                retry_output,
                ..
            } => {
                assert_eq!(first_output, "I cannot determine the activity");
                assert_eq!(retry_output, "I cannot determine the activity");
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn wrong_source_rejected() {
        let gw = MockBackend::new(MockRules::default());
        let f = frame(0, FramePayload::Caption("x".into()), FrameSource::Screen);
        assert_eq!(
            perceiver().caption_frame(&gw, &f, None),
            Err(PerceptionError::WrongSource(FrameSource::Screen))
        );
    }
}
