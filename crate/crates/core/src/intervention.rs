//! Personalized intervention pipeline: request context assembly, output
//! parsing, criticality gating and the accept/reject lifecycle.

use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;
use core::fmt;
use core::time::Duration;

use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

use crate::clock::VirtualTime;
use crate::gateway::{GatewayError, ModelGateway, ModelRequest};
use crate::perception::{Criticality, FrameInsight};
use crate::physio::StressLevel;
use crate::prompts::{PromptCatalog, PromptId};
use crate::routine::{render_for_prompt, RenderOptions, RoutineError, RoutineTable};

/// Words kept from the latest surrounding description.
pub const SURROUNDING_WORDS: usize = 6;

pub const STRESSED: &str = "stressed";
pub const NOT_STRESSED: &str = "not stressed";

/// High and Moderate count as stressed; only Low is "not stressed".
pub fn map_stress_token(level: StressLevel) -> &'static str {
    match level {
        StressLevel::High | StressLevel::Moderate => STRESSED,
        StressLevel::Low => NOT_STRESSED,
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct InterventionRequestContext {
    pub stress_level: String,
    pub activity_timetable: String,
    pub surrounding_type: String,
    pub screen_capture_data: String,
}

/// Removes any heart-rate-variability mention from free text bound for the
/// intervention prompt.
fn scrub_hrv(text: &str) -> String {
    let mut out = String::with_capacity(text.len());
    let lower = text.to_ascii_lowercase();
    let mut i = 0;
    while i < text.len() {
        let rest = &lower[i..];
        if let Some(len) = ["pnn50", "hrv"]
            .iter()
            .find(|w| rest.starts_with(**w))
            .map(|w| w.len())
        {
            out.push_str("[redacted]");
            i += len;
        } else {
            let c = text[i..].chars().next().expect("in bounds");
            out.push(c);
            i += c.len_utf8();
        }
    }
    out
}

pub fn compress_surrounding(surrounding: &str) -> String {
    surrounding
        .split_whitespace()
        .take(SURROUNDING_WORDS)
        .collect::<Vec<_>>()
        .join(" ")
}

impl InterventionRequestContext {
    /// Assembles the context from the last `rows` routine rows (rendered
    /// without physiology), the latest insight's surrounding and the screen
    /// buffer.
    pub fn build(
        stress: StressLevel,
        table: &RoutineTable,
        rows: usize,
        latest: Option<&FrameInsight>,
        screen: &[(VirtualTime, String)],
    ) -> Result<Self, RoutineError> {
        let timetable = render_for_prompt(table, rows, RenderOptions::activities_only())?;
        let screen_capture_data = screen
            .iter()
            .enumerate()
            .map(|(k, (_, d))| format!("Frame {}: {}", k + 1, d.trim()))
            .collect::<Vec<_>>()
            .join("\n");
        Ok(InterventionRequestContext {
            stress_level: map_stress_token(stress).into(),
            activity_timetable: timetable,
            surrounding_type: latest
                .map(|i| compress_surrounding(&i.surrounding))
                .unwrap_or_else(|| "unknown".into()),
            screen_capture_data,
        })
    }

    /// The user turn in the few-shot `Input: {...}` layout.
    pub fn render(&self) -> String {
        let indent = |block: &str| {
            block
                .lines()
                .map(|l| format!("        {l}"))
                .collect::<Vec<_>>()
                .join("\n")
        };
        let quote = |s: &str| Value::String(scrub_hrv(s)).to_string();
        format!(
            "Input: {{\n    \"stress_level\": {},\n    \"activity_timetable\": \"\"\"\n{}\n    \"\"\",\n    \"surrounding_type\": {},\n    \"screen_capture_data\": \"\"\"\n{}\n    \"\"\"\n}}\nOutput:",
            quote(&self.stress_level),
            indent(&scrub_hrv(&self.activity_timetable)),
            quote(&self.surrounding_type),
            indent(&scrub_hrv(&self.screen_capture_data)),
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InterventionStatus {
    Pending,
    Delivered,
    Accepted,
    Rejected,
    Expired,
    Blocked,
}

impl InterventionStatus {
    pub const ALL: [InterventionStatus; 6] = [
        InterventionStatus::Pending,
        InterventionStatus::Delivered,
        InterventionStatus::Accepted,
        InterventionStatus::Rejected,
        InterventionStatus::Expired,
        InterventionStatus::Blocked,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            InterventionStatus::Pending => "pending",
            InterventionStatus::Delivered => "delivered",
            InterventionStatus::Accepted => "accepted",
            InterventionStatus::Rejected => "rejected",
            InterventionStatus::Expired => "expired",
            InterventionStatus::Blocked => "blocked",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        InterventionStatus::ALL
            .into_iter()
            .find(|st| st.as_str() == s)
    }

    /// The lifecycle state machine.
    pub fn can_become(self, next: InterventionStatus) -> bool {
        use InterventionStatus::*;
        matches!(
            (self, next),
            (Pending, Delivered | Blocked | Expired)
                | (Blocked, Delivered | Expired)
                | (Delivered, Accepted | Rejected | Expired)
        )
    }
}

impl fmt::Display for InterventionStatus {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Intervention {
    pub id: String,
    pub created_at: VirtualTime,
    pub analysis: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub task_improvement: Option<String>,
    pub immediate_action: String,
    pub follow_up: String,
    pub status: InterventionStatus,
    pub blocked_reason: Option<Criticality>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub delivered_at: Option<VirtualTime>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub decided_at: Option<VirtualTime>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ParsedIntervention {
    pub analysis: String,
    pub task_improvement: Option<String>,
    pub immediate_action: String,
    pub follow_up: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum InterventionParseError {
    #[error("no JSON object in output")]
    NoJson,
    #[error("invalid JSON: {0}")]
    InvalidJson(String),
    #[error("missing field `{0}`")]
    MissingField(&'static str),
}

fn normalize_key(k: &str) -> String {
    k.chars()
        .filter(|c| c.is_alphanumeric())
        .flat_map(char::to_lowercase)
        .collect()
}

fn lookup<'a>(obj: &'a Value, key: &str) -> Option<&'a Value> {
    let want = normalize_key(key);
    obj.as_object()?
        .iter()
        .find(|(k, _)| normalize_key(k) == want)
        .map(|(_, v)| v)
}

fn text_field(obj: &Value, key: &'static str) -> Result<String, InterventionParseError> {
    lookup(obj, key)
        .and_then(Value::as_str)
        .map(|s| s.split_whitespace().collect::<Vec<_>>().join(" "))
        .filter(|s| !s.is_empty())
        .ok_or(InterventionParseError::MissingField(key))
}

pub fn parse_intervention_output(text: &str) -> Result<ParsedIntervention, InterventionParseError> {
    let value: Value = crate::jsontext::parse_first(text, '{', '}')
        .ok_or(InterventionParseError::NoJson)?
        .map_err(|e| InterventionParseError::InvalidJson(e.to_string()))?;
    let interventions = lookup(&value, "Interventions")
        .ok_or(InterventionParseError::MissingField("Interventions"))?;
    Ok(ParsedIntervention {
        analysis: text_field(&value, "Analysis")?,
        task_improvement: text_field(&value, "Task Improvement").ok(),
        immediate_action: text_field(interventions, "Immediate Action")?,
        follow_up: text_field(interventions, "Follow-Up")?,
    })
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct InterventionConfig {
    pub model: String,
    #[serde(with = "crate::gateway::duration_ms")]
    pub max_latency: Duration,
    /// Routine interval: generation cadence and blocked-intervention lifetime.
    #[serde(with = "crate::gateway::duration_ms")]
    pub interval: Duration,
    /// Routine rows included in the timetable.
    pub context_rows: usize,
}

impl Default for InterventionConfig {
    fn default() -> Self {
        InterventionConfig {
            model: "llama-3.1-70b".into(),
            max_latency: Duration::from_secs(60),
            interval: Duration::from_secs(15 * 60),
            context_rows: 4,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum InterventionError {
    #[error(transparent)]
    Gateway(#[from] GatewayError),
    #[error("intervention output unparseable after retry ({reason})")]
    Unparseable {
        reason: InterventionParseError,
        first_output: String,
        retry_output: String,
    },
    #[error("generation already ran at {last}; next allowed at {next}")]
    TooSoon {
        last: VirtualTime,
        next: VirtualTime,
    },
    #[error("unknown intervention `{0}`")]
    UnknownId(String),
    #[error("cannot move intervention from {from} to {to}")]
    InvalidTransition {
        from: InterventionStatus,
        to: InterventionStatus,
    },
}

pub const INTERVENTION_FORMAT_REMINDER: &str = "Respond with a single JSON object with the keys \"Analysis\" and \"Interventions\", where \"Interventions\" is an object with the keys \"Immediate Action\" and \"Follow-Up\".";

/// Applies criticality gating to a pending or blocked intervention.
///
/// A blocked intervention older than `max_age` expires instead of firing.
/// Otherwise Low or Mid criticality delivers it and High blocks it. An
/// unknown criticality (no frame perceived yet) does not block.
pub fn gate(
    mut iv: Intervention,
    current: Option<Criticality>,
    now: VirtualTime,
    max_age: Duration,
) -> Intervention {
    if !matches!(
        iv.status,
        InterventionStatus::Pending | InterventionStatus::Blocked
    ) {
        return iv;
    }
    if iv.status == InterventionStatus::Blocked && now.saturating_sub(iv.created_at) > max_age {
        iv.status = InterventionStatus::Expired;
        return iv;
    }
    match current {
        Some(Criticality::High) => {
            iv.status = InterventionStatus::Blocked;
            iv.blocked_reason = Some(Criticality::High);
        }
        _ => {
            iv.status = InterventionStatus::Delivered;
            iv.delivered_at = Some(now);
        }
    }
    iv
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Decision {
    Accepted,
    Rejected,
}

impl Decision {
    pub fn status(self) -> InterventionStatus {
        match self {
            Decision::Accepted => InterventionStatus::Accepted,
            Decision::Rejected => InterventionStatus::Rejected,
        }
    }
}

/// Status change worth announcing.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Transition {
    pub id: String,
    pub from: InterventionStatus,
    pub to: InterventionStatus,
}

/// Builds intervention requests and parses their output. Holds no session
/// state, so it can run without access to the lifecycle store.
#[derive(Debug, Clone)]
pub struct InterventionGenerator {
    prompts: PromptCatalog,
    config: InterventionConfig,
}

impl InterventionGenerator {
    pub fn new(prompts: PromptCatalog, config: InterventionConfig) -> Self {
        InterventionGenerator { prompts, config }
    }

    pub fn system_prompt(&self) -> String {
        format!(
            "{}\n{}",
            self.prompts.text(PromptId::Intervention),
            self.prompts.text(PromptId::InterventionFewShot)
        )
    }

    pub fn request_for(&self, ctx: &InterventionRequestContext) -> ModelRequest {
        ModelRequest::completion(
            self.config.model.clone(),
            self.system_prompt(),
            ctx.render(),
            self.config.max_latency,
        )
    }

    /// Issues the request, retrying once with a format reminder when the
    /// output does not parse.
    pub fn fetch<G: ModelGateway + ?Sized>(
        &self,
        gateway: &G,
        ctx: &InterventionRequestContext,
    ) -> Result<ParsedIntervention, InterventionError> {
        let req = self.request_for(ctx);
        let first = gateway.invoke(&req)?.text;
        if let Ok(p) = parse_intervention_output(&first) {
            return Ok(p);
        }
        let mut retry = req.clone();
        retry.user_content = format!(
            "{}\n\nYour previous output could not be parsed:\n{first}\n{INTERVENTION_FORMAT_REMINDER}",
            req.user_content
        );
        let second = gateway.invoke(&retry)?.text;
        parse_intervention_output(&second).map_err(|reason| InterventionError::Unparseable {
            reason,
            first_output: first.clone(),
            retry_output: second.clone(),
        })
    }
}

/// Generation, gating and lifecycle store for one session.
#[derive(Debug, Clone)]
pub struct InterventionEngine {
    generator: InterventionGenerator,
    items: Vec<Intervention>,
    held: Option<usize>,
    last_generated: Option<VirtualTime>,
}

impl InterventionEngine {
    pub fn new(prompts: PromptCatalog, config: InterventionConfig) -> Self {
        InterventionEngine {
            generator: InterventionGenerator::new(prompts, config),
            items: Vec::new(),
            held: None,
            last_generated: None,
        }
    }

    pub fn config(&self) -> &InterventionConfig {
        &self.generator.config
    }

    pub fn generator(&self) -> &InterventionGenerator {
        &self.generator
    }

    /// Whether a generation at `now` respects the one-per-interval cadence.
    pub fn check_cadence(&self, now: VirtualTime) -> Result<(), InterventionError> {
        match self.last_generated {
            Some(last) if now < last + self.config().interval => Err(InterventionError::TooSoon {
                last,
                next: last + self.config().interval,
            }),
            _ => Ok(()),
        }
    }

    /// Stores a generated intervention as pending. Any intervention still
    /// held as blocked expires, since only the latest one is kept.
    pub fn admit(
        &mut self,
        parsed: ParsedIntervention,
        now: VirtualTime,
    ) -> Result<(String, Vec<Transition>), InterventionError> {
        self.check_cadence(now)?;
        self.last_generated = Some(now);
        let mut transitions = Vec::new();
        if let Some(idx) = self.held.take() {
            transitions.extend(self.set_status(idx, InterventionStatus::Expired));
        }
        let id = format!("iv-{:04}", self.items.len() + 1);
        self.items.push(Intervention {
            id: id.clone(),
            created_at: now,
            analysis: parsed.analysis,
            task_improvement: parsed.task_improvement,
            immediate_action: parsed.immediate_action,
            follow_up: parsed.follow_up,
            status: InterventionStatus::Pending,
            blocked_reason: None,
            delivered_at: None,
            decided_at: None,
        });
        Ok((id, transitions))
    }

    /// [`admit`](Self::admit) followed by gating against `current`.
    pub fn admit_and_gate(
        &mut self,
        parsed: ParsedIntervention,
        current: Option<Criticality>,
        now: VirtualTime,
    ) -> Result<(String, Vec<Transition>), InterventionError> {
        let (id, mut transitions) = self.admit(parsed, now)?;
        transitions.extend(self.gate_id(&id, current, now)?);
        Ok((id, transitions))
    }

    /// Fetches and admits a new pending intervention.
    pub fn generate<G: ModelGateway + ?Sized>(
        &mut self,
        gateway: &G,
        ctx: &InterventionRequestContext,
        now: VirtualTime,
    ) -> Result<(&Intervention, Vec<Transition>), InterventionError> {
        self.check_cadence(now)?;
        let parsed = self.generator.fetch(gateway, ctx)?;
        let (_, transitions) = self.admit(parsed, now)?;
        Ok((self.items.last().expect("just pushed"), transitions))
    }

    fn set_status(&mut self, idx: usize, to: InterventionStatus) -> Option<Transition> {
        let iv = &mut self.items[idx];
        if iv.status == to || !iv.status.can_become(to) {
            return None;
        }
        let from = iv.status;
        iv.status = to;
        Some(Transition {
            id: iv.id.clone(),
            from,
            to,
        })
    }

    /// Gates the intervention `id` against the current criticality.
    pub fn gate_id(
        &mut self,
        id: &str,
        current: Option<Criticality>,
        now: VirtualTime,
    ) -> Result<Option<Transition>, InterventionError> {
        let idx = self.index_of(id)?;
        let before = self.items[idx].clone();
        let after = gate(before.clone(), current, now, self.config().interval);
        if after.status == before.status {
            return Ok(None);
        }
        self.items[idx] = after;
        let to = self.items[idx].status;
        self.held = match to {
            InterventionStatus::Blocked => Some(idx),
            _ if self.held == Some(idx) => None,
            _ => self.held,
        };
        Ok(Some(Transition {
            id: id.into(),
            from: before.status,
            to,
        }))
    }

    /// Re-gates the held blocked intervention, if any.
    pub fn regate_held(
        &mut self,
        current: Option<Criticality>,
        now: VirtualTime,
    ) -> Option<Transition> {
        let idx = self.held?;
        let id = self.items[idx].id.clone();
        self.gate_id(&id, current, now).ok().flatten()
    }

    pub fn decide(
        &mut self,
        id: &str,
        decision: Decision,
        now: VirtualTime,
    ) -> Result<&Intervention, InterventionError> {
        let idx = self.index_of(id)?;
        let iv = &mut self.items[idx];
        let to = decision.status();
        if iv.status != InterventionStatus::Delivered {
            return Err(InterventionError::InvalidTransition {
                from: iv.status,
                to,
            });
        }
        iv.status = to;
        iv.decided_at = Some(now);
        Ok(iv)
    }

    fn index_of(&self, id: &str) -> Result<usize, InterventionError> {
        self.items
            .iter()
            .position(|iv| iv.id == id)
            .ok_or_else(|| InterventionError::UnknownId(id.into()))
    }

    pub fn get(&self, id: &str) -> Option<&Intervention> {
        self.items.iter().find(|iv| iv.id == id)
    }

    pub fn all(&self) -> &[Intervention] {
        &self.items
    }

    pub fn with_status(&self, status: InterventionStatus) -> impl Iterator<Item = &Intervention> {
        self.items.iter().filter(move |iv| iv.status == status)
    }

    pub fn count_by_status(&self) -> alloc::collections::BTreeMap<InterventionStatus, usize> {
        let mut out = alloc::collections::BTreeMap::new();
        for s in InterventionStatus::ALL {
            out.insert(s, 0);
        }
        for iv in &self.items {
            *out.entry(iv.status).or_insert(0) += 1;
        }
        out
    }

    pub fn held(&self) -> Option<&Intervention> {
        self.held.map(|i| &self.items[i])
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gateway::{MockBackend, MockRule, MockRules};
    use alloc::vec;

    const EXAMPLE_ONE: &str = r#"Output:{
  "Analysis": "Frequent context-switching
  between different tasks leads to reduced
  focus and increased stress.",
  "Task Improvement": "Allocate dedicated time
  blocks for focused work to minimize
  distractions.",
  "Interventions": {
    "Immediate Action": "Take a 5-minute break
    with deep breathing exercises.",
    "Follow-Up":
    "Implement the Pomodoro technique to
    balance work and rest intervals."
  }
}"#;

    #[test]
    fn parses_wrapped_example_output() {
        let p = parse_intervention_output(EXAMPLE_ONE).unwrap();
        assert_eq!(
            p.analysis,
            "Frequent context-switching between different tasks leads to reduced focus and increased stress."
        );
        assert_eq!(
            p.immediate_action,
            "Take a 5-minute break with deep breathing exercises."
        );
        assert_eq!(
            p.follow_up,
            "Implement the Pomodoro technique to balance work and rest intervals."
        );
        assert!(p
            .task_improvement
            .unwrap()
            .starts_with("Allocate dedicated"));
    }

    #[test]
    fn task_improvement_is_optional() {
        let p = parse_intervention_output(
            r#"{"Analysis":"a","Interventions":{"Immediate Action":"b","Follow-Up":"c"}}"#,
        )
        .unwrap();
        assert_eq!(p.task_improvement, None);
    }

    #[test]
    fn missing_pieces_are_errors() {
        assert_eq!(
            parse_intervention_output("Take a break."),
            Err(InterventionParseError::NoJson)
        );
        assert_eq!(
            parse_intervention_output(r#"{"Analysis":"a"}"#),
            Err(InterventionParseError::MissingField("Interventions"))
        );
    }

    #[test]
    fn stress_tokens() {
        assert_eq!(map_stress_token(StressLevel::High), "stressed");
        assert_eq!(map_stress_token(StressLevel::Moderate), "stressed");
        assert_eq!(map_stress_token(StressLevel::Low), "not stressed");
    }

    #[test]
    fn state_machine_edges() {
        use InterventionStatus::*;
        let allowed = [
            (Pending, Delivered),
            (Pending, Blocked),
            (Pending, Expired),
            (Blocked, Delivered),
            (Blocked, Expired),
            (Delivered, Accepted),
            (Delivered, Rejected),
            (Delivered, Expired),
        ];
        for from in InterventionStatus::ALL {
            for to in InterventionStatus::ALL {
                assert_eq!(
                    from.can_become(to),
                    allowed.contains(&(from, to)),
                    "{from}->{to}"
                );
            }
        }
    }

    fn pending(created: u64) -> Intervention {
        Intervention {
            id: "iv-0001".into(),
            created_at: VirtualTime(created),
            analysis: "a".into(),
            task_improvement: None,
            immediate_action: "b".into(),
            follow_up: "c".into(),
            status: InterventionStatus::Pending,
            blocked_reason: None,
            delivered_at: None,
            decided_at: None,
        }
    }

    const FIFTEEN: Duration = Duration::from_secs(900);

    #[test]
    fn gating_rules() {
        let now = VirtualTime(0);
        assert_eq!(
            gate(pending(0), Some(Criticality::Low), now, FIFTEEN).status,
            InterventionStatus::Delivered
        );
        assert_eq!(
            gate(pending(0), Some(Criticality::Mid), now, FIFTEEN).status,
            InterventionStatus::Delivered
        );
        let blocked = gate(pending(0), Some(Criticality::High), now, FIFTEEN);
        assert_eq!(blocked.status, InterventionStatus::Blocked);
        assert_eq!(blocked.blocked_reason, Some(Criticality::High));
        let later = VirtualTime(FIFTEEN.as_millis() as u64 + 60_000);
        assert_eq!(
            gate(blocked.clone(), Some(Criticality::Mid), later, FIFTEEN).status,
            InterventionStatus::Expired
        );
        assert_eq!(
            gate(
                blocked,
                Some(Criticality::Mid),
                VirtualTime(300_000),
                FIFTEEN
            )
            .status,
            InterventionStatus::Delivered
        );
    }

    fn engine_with(response: &str) -> (InterventionEngine, MockBackend) {
        let gw = MockBackend::new(
            MockRules::new(vec![MockRule::new(
                "workplace wellness assistant",
                response,
                1,
            )])
            .unwrap(),
        );
        (
            InterventionEngine::new(PromptCatalog::embedded(), InterventionConfig::default()),
            gw,
        )
    }

    fn ctx() -> InterventionRequestContext {
        InterventionRequestContext {
            stress_level: "stressed".into(),
            activity_timetable: "Time,Desk Work (min),Commuting (min),Eating (min),In-Meeting (min)\n10:00-10:15,15,0,0,0".into(),
            surrounding_type: "cubicle".into(),
            screen_capture_data: "Frame 1: Debugging Python code.".into(),
        }
    }

    #[test]
    fn generate_then_decide() {
        let (mut eng, gw) = engine_with(EXAMPLE_ONE);
        let (iv, _) = eng.generate(&gw, &ctx(), VirtualTime(900_000)).unwrap();
        assert_eq!(iv.status, InterventionStatus::Pending);
        let id = iv.id.clone();
        assert!(matches!(
            eng.decide(&id, Decision::Accepted, VirtualTime(900_000)),
            Err(InterventionError::InvalidTransition { .. })
        ));
        eng.gate_id(&id, Some(Criticality::Low), VirtualTime(900_000))
            .unwrap();
        let iv = eng
            .decide(&id, Decision::Accepted, VirtualTime(960_000))
            .unwrap();
        assert_eq!(iv.status, InterventionStatus::Accepted);
        assert_eq!(iv.decided_at, Some(VirtualTime(960_000)));
        assert!(matches!(
            eng.decide(&id, Decision::Rejected, VirtualTime(970_000)),
            Err(InterventionError::InvalidTransition { .. })
        ));
        assert!(matches!(
            eng.decide("nope", Decision::Rejected, VirtualTime(970_000)),
            Err(InterventionError::UnknownId(_))
        ));
    }

    #[test]
    fn prose_twice_is_unparseable() {
        let (mut eng, gw) = engine_with("You should take a walk.");
        assert!(matches!(
            eng.generate(&gw, &ctx(), VirtualTime(0)),
            Err(InterventionError::Unparseable { .. })
        ));
    }

    #[test]
    fn one_generation_per_interval() {
        let (mut eng, gw) = engine_with(EXAMPLE_ONE);
        eng.generate(&gw, &ctx(), VirtualTime(900_000)).unwrap();
        assert!(matches!(
            eng.generate(&gw, &ctx(), VirtualTime(1_000_000)),
            Err(InterventionError::TooSoon { .. })
        ));
        eng.generate(&gw, &ctx(), VirtualTime(1_800_000)).unwrap();
    }

    #[test]
    fn newer_generation_expires_held_intervention() {
        let (mut eng, gw) = engine_with(EXAMPLE_ONE);
        let id = eng
            .generate(&gw, &ctx(), VirtualTime(0))
            .unwrap()
            .0
            .id
            .clone();
        eng.gate_id(&id, Some(Criticality::High), VirtualTime(0))
            .unwrap();
        assert_eq!(eng.held().unwrap().id, id);
        let (_, transitions) = eng.generate(&gw, &ctx(), VirtualTime(900_000)).unwrap();
        assert_eq!(transitions[0].to, InterventionStatus::Expired);
        assert_eq!(eng.get(&id).unwrap().status, InterventionStatus::Expired);
    }

    #[test]
    fn rendered_context_never_mentions_hrv() {
        let mut c = ctx();
        c.screen_capture_data = "Frame 1: reading about HRV and pNN50 metrics".into();
        let text = c.render();
        assert!(!text.contains("HRV"));
        assert!(!text.contains("pNN50"));
        assert!(text.contains("\"stress_level\": \"stressed\""));
        assert!(text.contains("        Frame 1: reading about [redacted] and [redacted] metrics"));
    }

    #[test]
    fn surrounding_is_compressed() {
        assert_eq!(
            compress_surrounding("open plan office with many desks and bright windows"),
            "open plan office with many desks"
        );
    }
}
