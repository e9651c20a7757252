//! Versioned prompt templates.
//!
//! Each template is a text asset (`assets/prompts/<name>.v<N>.txt`). The
//! catalog embeds the shipped versions; the std crate can replace them with
//! files from a prompt directory. Every template carries a SHA-256 checksum so
//! startup logs and tests can pin the exact bytes sent to models.

use alloc::collections::BTreeMap;
use alloc::string::String;
use alloc::vec::Vec;

use serde::Serialize;
use sha2::{Digest, Sha256};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum PromptId {
    CaptionEgocentric,
    CaptionScreen,
    InsightExtraction,
    InsightFewShot,
    Intervention,
    InterventionFewShot,
    ToneAdaptation,
    ActionExtraction,
}

impl PromptId {
    pub const ALL: [PromptId; 8] = [
        PromptId::CaptionEgocentric,
        PromptId::CaptionScreen,
        PromptId::InsightExtraction,
        PromptId::InsightFewShot,
        PromptId::Intervention,
        PromptId::InterventionFewShot,
        PromptId::ToneAdaptation,
        PromptId::ActionExtraction,
    ];

    pub fn asset_name(self) -> &'static str {
        match self {
            PromptId::CaptionEgocentric => "caption_egocentric",
            PromptId::CaptionScreen => "caption_screen",
            PromptId::InsightExtraction => "insight_extraction",
            PromptId::InsightFewShot => "insight_fewshot",
            PromptId::Intervention => "intervention",
            PromptId::InterventionFewShot => "intervention_fewshot",
            PromptId::ToneAdaptation => "tca",
            PromptId::ActionExtraction => "action_extraction",
        }
    }

    fn embedded(self) -> &'static str {
        match self {
            PromptId::CaptionEgocentric => {
                include_str!("../assets/prompts/caption_egocentric.v1.txt")
            }
            PromptId::CaptionScreen => include_str!("../assets/prompts/caption_screen.v1.txt"),
            PromptId::InsightExtraction => {
                include_str!("../assets/prompts/insight_extraction.v1.txt")
            }
            PromptId::InsightFewShot => include_str!("../assets/prompts/insight_fewshot.v1.txt"),
            PromptId::Intervention => include_str!("../assets/prompts/intervention.v1.txt"),
            PromptId::InterventionFewShot => {
                include_str!("../assets/prompts/intervention_fewshot.v1.txt")
            }
            PromptId::ToneAdaptation => include_str!("../assets/prompts/tca.v1.txt"),
            PromptId::ActionExtraction => {
                include_str!("../assets/prompts/action_extraction.v1.txt")
            }
        }
    }
}

/// Placeholder in the egocentric caption template.
pub const PREVIOUS_ACTIVITY_SLOT: &str = "{pre_frame_act}";

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct PromptTemplate {
    pub id: PromptId,
    pub version: u32,
    pub text: String,
    pub sha256: String,
}

impl PromptTemplate {
    pub fn new(id: PromptId, version: u32, text: impl Into<String>) -> Self {
        let text = text.into();
        let sha256 = sha256_hex(text.as_bytes());
        PromptTemplate {
            id,
            version,
            text,
            sha256,
        }
    }

    pub fn file_name(&self) -> String {
        alloc::format!("{}.v{}.txt", self.id.asset_name(), self.version)
    }
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    use core::fmt::Write;
    let digest = Sha256::digest(bytes);
    let mut out = String::with_capacity(64);
    for b in digest {
        let _ = write!(out, "{b:02x}");
    }
    out
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PromptCatalog {
    templates: BTreeMap<PromptId, PromptTemplate>,
}

impl Default for PromptCatalog {
    fn default() -> Self {
        Self::embedded()
    }
}

impl PromptCatalog {
    /// The templates compiled into this crate.
    pub fn embedded() -> Self {
        let templates = PromptId::ALL
            .into_iter()
            .map(|id| (id, PromptTemplate::new(id, 1, id.embedded())))
            .collect();
        PromptCatalog { templates }
    }

    pub fn replace(&mut self, template: PromptTemplate) {
        self.templates.insert(template.id, template);
    }

    pub fn get(&self, id: PromptId) -> &PromptTemplate {
        &self.templates[&id]
    }

    pub fn text(&self, id: PromptId) -> &str {
        &self.get(id).text
    }

    pub fn templates(&self) -> Vec<&PromptTemplate> {
        self.templates.values().collect()
    }
}
