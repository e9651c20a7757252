//! Tone-adaptive conversation agent.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;
use core::fmt;
use core::time::Duration;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::clock::VirtualTime;
use crate::gateway::{GatewayError, ModelGateway, ModelRequest};
use crate::physio::StressLevel;
use crate::prompts::{PromptCatalog, PromptId};
use crate::routine::{render_for_prompt, PhysioColumns, RenderOptions, RoutineTable};

/// User turns per one-level tone decay.
pub const TURNS_PER_DECAY: u32 = 3;
/// Messages of history sent with each request.
pub const HISTORY_MESSAGES: usize = 12;
/// Prefix of the injected tone line; appears once per request.
pub const TONE_DIRECTIVE_PREFIX: &str = "Tone directive:";

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ToneLevel {
    NeutralSubtle,
    ModeratelyMotivational,
    HighlyMotivational,
}

impl ToneLevel {
    pub fn as_str(self) -> &'static str {
        match self {
            ToneLevel::NeutralSubtle => "neutral_subtle",
            ToneLevel::ModeratelyMotivational => "moderately_motivational",
            ToneLevel::HighlyMotivational => "highly_motivational",
        }
    }

    fn instruction(self) -> &'static str {
        match self {
            ToneLevel::HighlyMotivational => {
                "use a highly motivational and encouraging tone with actionable advice"
            }
            ToneLevel::ModeratelyMotivational => {
                "use a moderately motivational tone that reinforces progress"
            }
            ToneLevel::NeutralSubtle => "use a subtle, straightforward and neutral tone",
        }
    }

    pub fn directive(self) -> String {
        format!(
            "{TONE_DIRECTIVE_PREFIX} {} ({})",
            self.as_str(),
            self.instruction()
        )
    }

    fn step_down(self) -> ToneLevel {
        match self {
            ToneLevel::HighlyMotivational => ToneLevel::ModeratelyMotivational,
            _ => ToneLevel::NeutralSubtle,
        }
    }
}

impl fmt::Display for ToneLevel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

pub fn select_base_tone(stress: StressLevel) -> ToneLevel {
    match stress {
        StressLevel::High => ToneLevel::HighlyMotivational,
        StressLevel::Moderate => ToneLevel::ModeratelyMotivational,
        StressLevel::Low => ToneLevel::NeutralSubtle,
    }
}

/// Tone for user turn `turn` (1-based): one level lower every
/// [`TURNS_PER_DECAY`] turns, floored at neutral.
pub fn effective_tone(base: ToneLevel, turn: u32) -> ToneLevel {
    let steps = turn.saturating_sub(1) / TURNS_PER_DECAY;
    (0..steps.min(2)).fold(base, |t, _| t.step_down())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Role {
    User,
    Assistant,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChatMessage {
    pub role: Role,
    pub text: String,
    pub at: VirtualTime,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tone: Option<ToneLevel>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConversationState {
    pub messages: Vec<ChatMessage>,
    pub turn_count: u32,
    pub base_tone: ToneLevel,
    pub effective_tone: ToneLevel,
}

impl Default for ConversationState {
    fn default() -> Self {
        ConversationState {
            messages: Vec::new(),
            turn_count: 0,
            base_tone: ToneLevel::NeutralSubtle,
            effective_tone: ToneLevel::NeutralSubtle,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TcaConfig {
    pub model: String,
    #[serde(with = "crate::gateway::duration_ms")]
    pub max_latency: Duration,
    /// Routine rows included as context.
    pub context_rows: usize,
}

impl Default for TcaConfig {
    fn default() -> Self {
        TcaConfig {
            model: "llama-3.1-70b".into(),
            max_latency: Duration::from_secs(60),
            context_rows: 8,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum TcaError {
    #[error("empty query")]
    EmptyQuery,
    #[error("assistant unavailable: {0}")]
    Gateway(#[from] GatewayError),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Reply {
    pub text: String,
    pub tone: ToneLevel,
    pub turn: u32,
}

#[derive(Debug, Clone)]
pub struct ToneAgent {
    prompts: PromptCatalog,
    config: TcaConfig,
}

impl ToneAgent {
    pub fn new(prompts: PromptCatalog, config: TcaConfig) -> Self {
        ToneAgent { prompts, config }
    }

    /// Request for the next user turn. `stress` is the latest estimate; with
    /// none available the base tone is neutral.
    pub fn request_for(
        &self,
        state: &ConversationState,
        query: &str,
        table: &RoutineTable,
        stress: Option<StressLevel>,
    ) -> (ModelRequest, ToneLevel, ToneLevel) {
        let turn = state.turn_count + 1;
        let base = stress.map_or(ToneLevel::NeutralSubtle, select_base_tone);
        let tone = effective_tone(base, turn);
        let system = format!(
            "{}\n\n{}",
            self.prompts.text(PromptId::ToneAdaptation).trim_end(),
            tone.directive()
        );
        let routine = render_for_prompt(
            table,
            self.config.context_rows,
            RenderOptions::with_physio(PhysioColumns::StressToken),
        )
        .unwrap_or_else(|_| String::from("(no routine data yet)"));
        let mut user = format!("Routine Table\n{routine}\n\nConversation\n");
        let skip = state.messages.len().saturating_sub(HISTORY_MESSAGES);
        for m in &state.messages[skip..] {
            let who = match m.role {
                Role::User => "User",
                Role::Assistant => "Assistant",
            };
            user.push_str(&format!("{who}: {}\n", m.text));
        }
        user.push_str(&format!("User: {}\nAssistant:", query.trim()));
        (
            ModelRequest::completion(
                self.config.model.clone(),
                system,
                user,
                self.config.max_latency,
            ),
            base,
            tone,
        )
    }

    /// Answers one user turn. On failure the state is left untouched.
    pub fn respond<G: ModelGateway + ?Sized>(
        &self,
        gateway: &G,
        state: &mut ConversationState,
        query: &str,
        table: &RoutineTable,
        stress: Option<StressLevel>,
        now: VirtualTime,
    ) -> Result<Reply, TcaError> {
        if query.trim().is_empty() {
            return Err(TcaError::EmptyQuery);
        }
        let (req, base, tone) = self.request_for(state, query, table, stress);
        let text = gateway.invoke(&req)?.text.trim().into();
        state.turn_count += 1;
        state.base_tone = base;
        state.effective_tone = tone;
        state.messages.push(ChatMessage {
            role: Role::User,
            text: query.trim().into(),
            at: now,
            tone: None,
        });
        state.messages.push(ChatMessage {
            role: Role::Assistant,
            text: String::clone(&text),
            at: now,
            tone: Some(tone),
        });
        Ok(Reply {
            text,
            tone,
            turn: state.turn_count,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::clock::TimeOfDay;
    use crate::gateway::{MockBackend, MockRule, MockRules};
    use crate::physio::PhysioWindow;
    use crate::routine::RoutineBuilder;
    use alloc::vec;

    #[test]
    fn base_tone_branches() {
        assert_eq!(
            select_base_tone(StressLevel::High),
            ToneLevel::HighlyMotivational
        );
        assert_eq!(
            select_base_tone(StressLevel::Moderate),
            ToneLevel::ModeratelyMotivational
        );
        assert_eq!(select_base_tone(StressLevel::Low), ToneLevel::NeutralSubtle);
    }

    #[test]
    fn decay_schedule() {
        let h = ToneLevel::HighlyMotivational;
        assert_eq!(effective_tone(h, 1), h);
        assert_eq!(effective_tone(h, 3), h);
        assert_eq!(effective_tone(h, 4), ToneLevel::ModeratelyMotivational);
        assert_eq!(effective_tone(h, 7), ToneLevel::NeutralSubtle);
        assert_eq!(effective_tone(h, u32::MAX), ToneLevel::NeutralSubtle);
        for t in 1..20 {
            assert_eq!(
                effective_tone(ToneLevel::NeutralSubtle, t),
                ToneLevel::NeutralSubtle
            );
        }
    }

    fn table_with_pnn50(p: f64) -> RoutineTable {
        let mut b = RoutineBuilder::new(TimeOfDay::new(10, 0).unwrap(), Duration::from_secs(900));
        let (start, end) = b.open_window();
        let mut w = PhysioWindow::steps_only((start, end), 0);
        w.pnn50 = Some(p);
        w.valid = true;
        b.close_row(&w).unwrap();
        b.into_table()
    }

    #[test]
    fn conversation_flow() {
        let gw = MockBackend::new(
            MockRules::new(vec![MockRule::new(
                "binary cross-entropy",
                "canned reply",
                1,
            )])
            .unwrap(),
        );
        let agent = ToneAgent::new(PromptCatalog::embedded(), TcaConfig::default());
        let table = table_with_pnn50(15.0);
        let mut state = ConversationState::default();
        let (req, _, _) = agent.request_for(
            &state,
            "explain binary cross-entropy",
            &table,
            Some(StressLevel::High),
        );
        assert!(req
            .system_prompt
            .contains(&ToneLevel::HighlyMotivational.directive()));
        assert_eq!(req.system_prompt.matches(TONE_DIRECTIVE_PREFIX).count(), 1);
        assert!(req.user_content.contains(",high"));
        assert!(req.system_prompt.starts_with(
            PromptCatalog::embedded()
                .text(PromptId::ToneAdaptation)
                .trim_end()
        ));

        let mut tones = Vec::new();
        for _ in 0..10 {
            let r = agent
                .respond(
                    &gw,
                    &mut state,
                    "explain binary cross-entropy",
                    &table,
                    Some(StressLevel::High),
                    VirtualTime(0),
                )
                .unwrap();
            assert_eq!(r.text, "canned reply");
            tones.push(r.tone);
        }
        assert_eq!(state.messages.len(), 20);
        assert_eq!(state.turn_count, 10);
        assert!(tones.windows(2).all(|w| w[1] <= w[0]));
        assert!(state.effective_tone <= state.base_tone);
    }

    #[test]
    fn gateway_failure_leaves_state() {
        let gw = MockBackend::new(MockRules::new(vec![]).unwrap());
        let agent = ToneAgent::new(PromptCatalog::embedded(), TcaConfig::default());
        let mut state = ConversationState::default();
        let err = agent
            .respond(
                &gw,
                &mut state,
                "hi",
                &table_with_pnn50(60.0),
                None,
                VirtualTime(0),
            )
            .unwrap_err();
        assert!(matches!(err, TcaError::Gateway(_)));
        assert_eq!(state, ConversationState::default());
        assert_eq!(
            agent.respond(
                &gw,
                &mut state,
                "  ",
                &table_with_pnn50(60.0),
                None,
                VirtualTime(0)
            ),
            Err(TcaError::EmptyQuery)
        );
    }
}
