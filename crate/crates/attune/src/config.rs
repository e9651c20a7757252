//! Engine configuration, read from a TOML file.

use std::fmt;
use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::time::Duration;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Environment variable that overrides the model endpoint token.
pub const API_TOKEN_ENV: &str = "ATTUNE_API_TOKEN";
/// Environment variable that overrides the service bearer token.
pub const BEARER_TOKEN_ENV: &str = "ATTUNE_BEARER_TOKEN";

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("invalid config: {0}")]
    Parse(#[from] toml::de::Error),
    #[error("invalid config: {0}")]
    Invalid(String),
}

/// Replay pacing: virtual seconds per wall second, or unpaced.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Speed {
    Factor(f64),
    Max,
}

impl Default for Speed {
    fn default() -> Self {
        Speed::Factor(1.0)
    }
}

impl FromStr for Speed {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        if s.eq_ignore_ascii_case("max") {
            return Ok(Speed::Max);
        }
        match s.parse::<f64>() {
            Ok(f) if f > 0.0 && f.is_finite() => Ok(Speed::Factor(f)),
            _ => Err(format!(
                "speed must be a positive number or \"max\", got {s:?}"
            )),
        }
    }
}

impl fmt::Display for Speed {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Speed::Factor(x) => write!(f, "{x}"),
            Speed::Max => f.write_str("max"),
        }
    }
}

impl Serialize for Speed {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        match self {
            Speed::Factor(x) => s.serialize_f64(*x),
            Speed::Max => s.serialize_str("max"),
        }
    }
}

impl<'de> Deserialize<'de> for Speed {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Num(f64),
            Text(String),
        }
        match Raw::deserialize(d)? {
            Raw::Num(x) => x.to_string().parse(),
            Raw::Text(s) => s.parse(),
        }
        .map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EngineSection {
    pub frame_cadence_s: u64,
    pub routine_interval_s: u64,
    pub audio_segment_s: u64,
    pub speed: Speed,
    /// Routine rows sent with intervention requests.
    pub intervention_rows: usize,
    /// Routine rows sent with chat requests.
    pub chat_rows: usize,
    /// Calendar date used when a trace manifest has none.
    pub default_session_date: NaiveDate,
}

impl Default for EngineSection {
    fn default() -> Self {
        EngineSection {
            frame_cadence_s: 60,
            routine_interval_s: 15 * 60,
            audio_segment_s: 60,
            speed: Speed::default(),
            intervention_rows: 4,
            chat_rows: 8,
            default_session_date: NaiveDate::from_ymd_opt(2025, 1, 6).expect("valid date"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelRoutes {
    pub caption: String,
    pub insight: String,
    pub intervention: String,
    pub tca: String,
    pub extraction: String,
    pub transcription: String,
}

impl Default for ModelRoutes {
    fn default() -> Self {
        ModelRoutes {
            caption: "llama-3.2-11b-vision".into(),
            insight: "llama-3.1-8b".into(),
            intervention: "llama-3.1-70b".into(),
            tca: "llama-3.1-70b".into(),
            extraction: "llama-3.1-70b".into(),
            transcription: "whisper-large-v3-turbo".into(),
        }
    }
}

impl ModelRoutes {
    pub fn all(&self) -> [&str; 6] {
        [
            &self.caption,
            &self.insight,
            &self.intervention,
            &self.tca,
            &self.extraction,
            &self.transcription,
        ]
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BackendKind {
    #[default]
    Mock,
    Live,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GatewaySection {
    pub backend: BackendKind,
    pub mock_rules: Option<PathBuf>,
    /// Base URL of an OpenAI-compatible API, e.g. `https://host/v1`.
    pub endpoint: Option<String>,
    pub api_token: Option<String>,
    pub temperature: f64,
    pub retries: u32,
    pub initial_backoff_ms: u64,
    pub max_latency_s: u64,
    pub caption_max_latency_s: u64,
}

impl Default for GatewaySection {
    fn default() -> Self {
        GatewaySection {
            backend: BackendKind::Mock,
            mock_rules: None,
            endpoint: None,
            api_token: None,
            temperature: 0.0,
            retries: 2,
            initial_backoff_ms: 1000,
            max_latency_s: 60,
            caption_max_latency_s: 30,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PathsSection {
    /// Directory of `<name>.v<N>.txt` prompt overrides.
    pub prompt_dir: Option<PathBuf>,
    pub store: PathBuf,
    pub outbox: PathBuf,
    /// Trace replayed by `serve`.
    pub trace: Option<PathBuf>,
}

impl Default for PathsSection {
    fn default() -> Self {
        PathsSection {
            prompt_dir: None,
            store: PathBuf::from("store"),
            outbox: PathBuf::from("outbox"),
            trace: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ServiceSection {
    pub listen: SocketAddr,
    pub bearer_token: Option<String>,
}

impl Default for ServiceSection {
    fn default() -> Self {
        ServiceSection {
            listen: "127.0.0.1:8080".parse().expect("valid address"),
            bearer_token: None,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EngineConfig {
    pub engine: EngineSection,
    pub models: ModelRoutes,
    pub gateway: GatewaySection,
    pub paths: PathsSection,
    pub service: ServiceSection,
}

impl EngineConfig {
    /// Reads `path`; relative paths inside resolve against its directory.
    /// Tokens from the environment take precedence over the file.
    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.to_owned(),
            source,
        })?;
        let mut cfg: EngineConfig = toml::from_str(&text)?;
        let base = path.parent().unwrap_or(Path::new("."));
        cfg.resolve_paths(base);
        cfg.apply_env();
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_toml(text: &str) -> Result<Self, ConfigError> {
        let cfg: EngineConfig = toml::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn resolve_paths(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        fix(&mut self.paths.store);
        fix(&mut self.paths.outbox);
        for p in [
            &mut self.paths.prompt_dir,
            &mut self.paths.trace,
            &mut self.gateway.mock_rules,
        ]
        .into_iter()
        .flatten()
        {
            fix(p);
        }
    }

    pub fn apply_env(&mut self) {
        if let Ok(t) = std::env::var(API_TOKEN_ENV) {
            self.gateway.api_token = Some(t);
        }
        if let Ok(t) = std::env::var(BEARER_TOKEN_ENV) {
            self.service.bearer_token = Some(t);
        }
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let e = &self.engine;
        let bad = |m: &str| Err(ConfigError::Invalid(m.into()));
        if e.frame_cadence_s == 0 || e.routine_interval_s == 0 || e.audio_segment_s == 0 {
            return bad("cadences must be positive");
        }
        if !e.routine_interval_s.is_multiple_of(e.frame_cadence_s) {
            return bad("routine_interval_s must be a multiple of frame_cadence_s");
        }
        if e.intervention_rows == 0 || e.chat_rows == 0 {
            return bad("row counts must be at least 1");
        }
        if let Speed::Factor(f) = e.speed {
            if !(f > 0.0 && f.is_finite()) {
                return bad("speed must be positive");
            }
        }
        if self.models.all().iter().any(|m| m.trim().is_empty()) {
            return bad("model routes must be non-empty");
        }
        if self.gateway.backend == BackendKind::Live && self.gateway.endpoint.is_none() {
            return bad("live backend needs gateway.endpoint");
        }
        Ok(())
    }

    pub fn frame_cadence(&self) -> Duration {
        Duration::from_secs(self.engine.frame_cadence_s)
    }

    pub fn routine_interval(&self) -> Duration {
        Duration::from_secs(self.engine.routine_interval_s)
    }

    pub fn audio_segment(&self) -> Duration {
        Duration::from_secs(self.engine.audio_segment_s)
    }
}
