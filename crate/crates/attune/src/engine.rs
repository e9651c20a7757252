//! The replay engine: one deterministic virtual-clock loop that drives
//! perception, routine aggregation, intervention generation and task agents
//! over a trace, plus the shared state the HTTP service reads and mutates.

use std::collections::{BTreeMap, VecDeque};
use std::path::PathBuf;
use std::sync::{Arc, Mutex};
use std::time::{Duration, Instant};

use attune_core::agents::{
    ActionItem, ActionLog, ActionRecord, ActionStatus, AgentsConfig, HandlerDescriptor,
    RegistryError, SegmentOutcome, SegmentReport, TaskAgents, ToolRegistry,
};
use attune_core::clock::{duration_ms, TimeOfDay, VirtualTime};
use attune_core::ingest::{
    AudioSegment, EcgSample, Event, FrameEvent, FrameSource, ImuSample, Trace, TraceError,
};
use attune_core::intervention::{
    Decision, Intervention, InterventionConfig, InterventionEngine, InterventionError,
    InterventionGenerator, InterventionRequestContext, InterventionStatus, Transition,
};
use attune_core::latency::LatencyStats;
use attune_core::perception::{Criticality, FrameInsight, Perceiver, PerceptionConfig};
use attune_core::physio::PhysioWindow;
use attune_core::prompts::PromptCatalog;
use attune_core::routine::{RoutineBuilder, RoutineRow, RoutineTable};
use attune_core::tca::{ConversationState, Reply, TcaConfig, TcaError, ToneAgent};
use chrono::{NaiveDate, NaiveDateTime, TimeDelta};
use serde::Serialize;
use thiserror::Error;
use tokio::sync::broadcast;

use crate::config::{EngineConfig, Speed};
use crate::gateway::Gateway;
use crate::outbox::{builtin_registry, JsonDropHandler, Outbox};
use crate::store::{write_json, RoutineStore, StoreError};

pub const INTERVENTIONS_FILE: &str = "interventions.json";
pub const ACTIONS_FILE: &str = "actions.json";
pub const SEGMENTS_FILE: &str = "segments.json";
pub const SUMMARY_FILE: &str = "summary.json";

/// Samples kept before a row boundary so step detection has filter context.
const IMU_CONTEXT_MS: u64 = 2_000;

#[derive(Debug, Error)]
pub enum EngineError {
    #[error(transparent)]
    Trace(#[from] TraceError),
    #[error(transparent)]
    Store(#[from] StoreError),
    #[error("cannot create outbox {path}: {source}")]
    Outbox {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error(transparent)]
    Registry(#[from] RegistryError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Pipeline {
    Frame,
    Screen,
    Audio,
    Routine,
    Intervention,
    Dispatch,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct TickCounts {
    pub ok: u64,
    pub skipped: u64,
    pub error: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct TickError {
    pub pipeline: Pipeline,
    pub at: VirtualTime,
    pub detail: String,
}

/// Events pushed to service subscribers.
#[derive(Debug, Clone, Serialize)]
#[serde(untagged)]
pub enum ServerEvent {
    Intervention(Intervention),
    RoutineRow(RoutineRow),
    Action(ActionRecord),
}

impl ServerEvent {
    pub fn name(&self) -> &'static str {
        match self {
            ServerEvent::Intervention(_) => "intervention",
            ServerEvent::RoutineRow(_) => "routine_row",
            ServerEvent::Action(_) => "action",
        }
    }
}

/// Where virtual time zero sits on the wall clock.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct SessionClock {
    pub start: TimeOfDay,
    pub date: NaiveDate,
}

impl SessionClock {
    pub fn origin(&self) -> NaiveDateTime {
        self.date
            .and_hms_opt(self.start.hour(), self.start.minute(), 0)
            .expect("valid time of day")
    }

    pub fn wall(&self, t: VirtualTime) -> NaiveDateTime {
        self.origin() + TimeDelta::milliseconds(t.0 as i64)
    }
}

/// Mutable state shared between the replay loop and the service.
pub struct EngineState {
    pub now: VirtualTime,
    pub routine: RoutineTable,
    pub interventions: InterventionEngine,
    pub actions: ActionLog,
    pub registry: ToolRegistry,
    pub segments: Vec<SegmentReport>,
    pub latest_criticality: Option<Criticality>,
    pub latest_insight: Option<FrameInsight>,
    pub screen_context: Vec<(VirtualTime, String)>,
    pub ticks: BTreeMap<Pipeline, TickCounts>,
    pub errors: Vec<TickError>,
    pub finished: bool,
}

impl EngineState {
    fn count(&mut self, p: Pipeline, f: impl FnOnce(&mut TickCounts)) {
        f(self.ticks.entry(p).or_default());
    }

    fn fail(&mut self, pipeline: Pipeline, at: VirtualTime, detail: String) {
        tracing::warn!(pipeline = ?pipeline, at_ms = at.0, %detail, "tick failed");
        self.count(pipeline, |c| c.error += 1);
        self.errors.push(TickError {
            pipeline,
            at,
            detail,
        });
    }
}

#[derive(Debug, Error)]
pub enum ChatError {
    #[error("unknown conversation `{0}`")]
    UnknownConversation(String),
    #[error(transparent)]
    Tca(#[from] TcaError),
}

#[derive(Debug, Clone, Serialize)]
pub struct ChatReply {
    pub conversation_id: String,
    pub reply: String,
    pub tone: attune_core::tca::ToneLevel,
    pub turn: u32,
}

#[derive(Debug, Error)]
pub enum RegisterError {
    #[error(transparent)]
    Registry(#[from] RegistryError),
}

type Conversation = Arc<Mutex<ConversationState>>;

/// Everything one running engine owns.
pub struct Shared {
    pub config: EngineConfig,
    pub prompts: PromptCatalog,
    pub gateway: Arc<Gateway>,
    pub clock: SessionClock,
    pub outbox: Outbox,
    pub state: Mutex<EngineState>,
    pub events: broadcast::Sender<ServerEvent>,
    tca: ToneAgent,
    conversations: Mutex<BTreeMap<String, Conversation>>,
}

impl Shared {
    pub fn new(
        config: EngineConfig,
        prompts: PromptCatalog,
        gateway: Arc<Gateway>,
        clock: SessionClock,
    ) -> Result<Arc<Self>, EngineError> {
        let outbox = Outbox::new(&config.paths.outbox, clock.origin()).map_err(|source| {
            EngineError::Outbox {
                path: config.paths.outbox.clone(),
                source,
            }
        })?;
        let registry = builtin_registry(&outbox)?;
        let interventions = InterventionEngine::new(prompts.clone(), intervention_config(&config));
        let tca = ToneAgent::new(
            prompts.clone(),
            TcaConfig {
                model: config.models.tca.clone(),
                max_latency: Duration::from_secs(config.gateway.max_latency_s),
                context_rows: config.engine.chat_rows,
            },
        );
        let (events, _) = broadcast::channel(1024);
        Ok(Arc::new(Shared {
            state: Mutex::new(EngineState {
                now: VirtualTime::ZERO,
                routine: RoutineTable::new(clock.start, config.routine_interval()),
                interventions,
                actions: ActionLog::new(),
                registry,
                segments: Vec::new(),
                latest_criticality: None,
                latest_insight: None,
                screen_context: Vec::new(),
                ticks: BTreeMap::new(),
                errors: Vec::new(),
                finished: false,
            }),
            config,
            prompts,
            gateway,
            clock,
            outbox,
            events,
            tca,
            conversations: Mutex::new(BTreeMap::new()),
        }))
    }

    pub fn lock(&self) -> std::sync::MutexGuard<'_, EngineState> {
        self.state.lock().expect("engine state lock")
    }

    fn publish(&self, events: Vec<ServerEvent>) {
        for e in events {
            let _ = self.events.send(e);
        }
    }

    /// One chat turn. The model call runs without holding the engine lock;
    /// turns within one conversation are serialized.
    pub fn chat(
        &self,
        conversation_id: Option<&str>,
        message: &str,
    ) -> Result<ChatReply, ChatError> {
        let (id, conv) = {
            let mut convs = self.conversations.lock().expect("conversations lock");
            match conversation_id {
                Some(id) => {
                    let c = convs
                        .get(id)
                        .cloned()
                        .ok_or_else(|| ChatError::UnknownConversation(id.into()))?;
                    (id.to_owned(), c)
                }
                None => {
                    let id = format!("conv-{:04}", convs.len() + 1);
                    let c = Conversation::default();
                    convs.insert(id.clone(), c.clone());
                    (id, c)
                }
            }
        };
        let (table, stress, now) = {
            let st = self.lock();
            (st.routine.clone(), st.routine.latest_stress(), st.now)
        };
        let mut state = conv.lock().expect("conversation lock");
        let Reply { text, tone, turn } =
            self.tca
                .respond(&*self.gateway, &mut state, message, &table, stress, now)?;
        Ok(ChatReply {
            conversation_id: id,
            reply: text,
            tone,
            turn,
        })
    }

    pub fn conversation(&self, id: &str) -> Option<ConversationState> {
        let convs = self.conversations.lock().expect("conversations lock");
        convs
            .get(id)
            .map(|c| c.lock().expect("conversation lock").clone())
    }

    pub fn decide(&self, id: &str, decision: Decision) -> Result<Intervention, InterventionError> {
        let mut st = self.lock();
        let now = st.now;
        st.interventions.decide(id, decision, now).cloned()
    }

    /// Registers a user agent whose items are dropped into the outbox as JSON.
    pub fn register_agent(&self, descriptor: HandlerDescriptor) -> Result<(), RegisterError> {
        let handler = JsonDropHandler {
            descriptor,
            outbox: self.outbox.clone(),
        };
        self.lock().registry.register(Box::new(handler))?;
        Ok(())
    }

    pub fn latency(&self) -> Vec<LatencyStats> {
        self.gateway.latency_snapshot()
    }

    /// Deterministic end-of-session summary.
    pub fn summary(&self) -> Summary {
        let st = self.lock();
        let mut segments = BTreeMap::new();
        for s in &st.segments {
            let k = match s.outcome {
                SegmentOutcome::NoActions => "no_actions",
                SegmentOutcome::Actions { .. } => "actions",
                SegmentOutcome::ManualReview { .. } => "manual_review",
            };
            *segments.entry(k).or_insert(0) += 1;
        }
        let records = st.actions.records();
        Summary {
            session_date: self.clock.date,
            session_start: self.clock.start,
            virtual_end: st.now,
            rows_sealed: st.routine.rows.len(),
            ticks: st.ticks.clone(),
            interventions: st
                .interventions
                .count_by_status()
                .into_iter()
                .map(|(k, v)| (k.as_str(), v))
                .collect(),
            segments,
            actions_extracted: records.len(),
            actions_dispatched: records
                .iter()
                .filter(|r| r.status == ActionStatus::Done)
                .count(),
            latency: self.latency(),
            prompts: self
                .prompts
                .templates()
                .into_iter()
                .map(|t| (t.file_name(), t.sha256.clone()))
                .collect(),
            errors: st.errors.clone(),
        }
    }

    /// Writes the session records next to the routine store.
    pub fn write_records(&self) -> Result<Summary, StoreError> {
        let dir = &self.config.paths.store;
        {
            let st = self.lock();
            write_json(&dir.join(INTERVENTIONS_FILE), st.interventions.all())?;
            write_json(&dir.join(ACTIONS_FILE), st.actions.records())?;
            write_json(&dir.join(SEGMENTS_FILE), &st.segments)?;
        }
        let summary = self.summary();
        write_json(&dir.join(SUMMARY_FILE), &summary)?;
        Ok(summary)
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct Summary {
    pub session_date: NaiveDate,
    pub session_start: TimeOfDay,
    pub virtual_end: VirtualTime,
    pub rows_sealed: usize,
    pub ticks: BTreeMap<Pipeline, TickCounts>,
    pub interventions: BTreeMap<&'static str, usize>,
    pub segments: BTreeMap<&'static str, usize>,
    pub actions_extracted: usize,
    pub actions_dispatched: usize,
    pub latency: Vec<LatencyStats>,
    pub prompts: BTreeMap<String, String>,
    pub errors: Vec<TickError>,
}

pub fn intervention_config(cfg: &EngineConfig) -> InterventionConfig {
    InterventionConfig {
        model: cfg.models.intervention.clone(),
        max_latency: Duration::from_secs(cfg.gateway.max_latency_s),
        interval: cfg.routine_interval(),
        context_rows: cfg.engine.intervention_rows,
    }
}

pub fn session_clock(cfg: &EngineConfig, trace: &Trace) -> SessionClock {
    SessionClock {
        start: trace.manifest.session_start,
        date: trace
            .manifest
            .session_date
            .unwrap_or(cfg.engine.default_session_date),
    }
}

/// Virtual end of the session: the manifest duration, or the last event
/// (including audio segment ends) rounded up to the frame cadence.
pub fn session_end(trace: &Trace, cadence: Duration) -> VirtualTime {
    if let Some(d) = trace.manifest.duration_ms {
        return VirtualTime(d);
    }
    let last_point = trace.last_timestamp().map_or(0, |t| t.0 + 1);
    let last_audio = trace.audio.iter().map(|a| a.end().0).max().unwrap_or(0);
    VirtualTime(last_point.max(last_audio)).ceil_to(cadence)
}

struct Schedule {
    cadence: u64,
    audio: u64,
    interval: u64,
    end: u64,
    next_frame: u64,
    next_audio: u64,
    next_routine: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Tick {
    Frame,
    Audio,
    Routine,
}

impl Schedule {
    /// Next instant and the ticks due at it, in processing order.
    fn next(&mut self) -> Option<(u64, Vec<Tick>)> {
        let t = [self.next_frame, self.next_audio, self.next_routine]
            .into_iter()
            .filter(|&t| t <= self.end)
            .min()?;
        let mut due = Vec::new();
        if self.next_frame == t {
            due.push(Tick::Frame);
            self.next_frame += self.cadence;
        }
        if self.next_audio == t {
            due.push(Tick::Audio);
            self.next_audio = t + self.audio;
            if self.next_audio > self.end && t < self.end {
                self.next_audio = self.end;
            }
        }
        if self.next_routine == t {
            due.push(Tick::Routine);
            self.next_routine += self.interval;
        }
        Some((t, due))
    }
}

/// Replays `trace` against `shared`, pacing virtual time by the configured
/// speed, and writes the session records when done.
pub fn run_replay(shared: &Arc<Shared>, trace: Trace) -> Result<Summary, EngineError> {
    let cfg = &shared.config;
    let cadence = cfg.frame_cadence();
    let end = session_end(&trace, cadence);
    let store = RoutineStore::create(&cfg.paths.store)?;
    let mut replay = Replay {
        shared: shared.clone(),
        session: trace.into_session()?,
        perceiver: Perceiver::new(
            shared.prompts.clone(),
            PerceptionConfig {
                caption_model: cfg.models.caption.clone(),
                insight_model: cfg.models.insight.clone(),
                max_latency: Duration::from_secs(cfg.gateway.caption_max_latency_s),
            },
        ),
        builder: RoutineBuilder::new(shared.clock.start, cfg.routine_interval()),
        agents: TaskAgents::new(
            shared.prompts.clone(),
            AgentsConfig {
                extraction_model: cfg.models.extraction.clone(),
                transcription_model: cfg.models.transcription.clone(),
                max_latency: Duration::from_secs(cfg.gateway.max_latency_s),
            },
        ),
        generator: InterventionGenerator::new(shared.prompts.clone(), intervention_config(cfg)),
        store,
        ecg: Vec::new(),
        imu: Vec::new(),
        frames: Vec::new(),
        screen: Vec::new(),
        audio: VecDeque::new(),
        audio_index: 0,
    };
    let mut schedule = Schedule {
        cadence: duration_ms(cadence),
        audio: duration_ms(cfg.audio_segment()),
        interval: duration_ms(cfg.routine_interval()),
        end: end.0,
        next_frame: duration_ms(cadence),
        next_audio: duration_ms(cfg.audio_segment()).min(end.0),
        next_routine: duration_ms(cfg.routine_interval()),
    };
    tracing::info!(end_ms = end.0, "replay started");
    let started = Instant::now();
    while let Some((t, due)) = schedule.next() {
        pace(cfg.engine.speed, started, t);
        let now = VirtualTime(t);
        replay.poll(VirtualTime(t.saturating_sub(1)))?;
        shared.lock().now = now;
        for tick in due {
            match tick {
                Tick::Frame => {
                    replay.frame_tick(now);
                    replay.screen_tick(now);
                }
                Tick::Audio => replay.audio_tick(now),
                Tick::Routine => replay.routine_tick(now),
            }
        }
    }
    {
        let mut st = shared.lock();
        st.now = end;
        st.finished = true;
    }
    let summary = shared.write_records()?;
    tracing::info!(rows = summary.rows_sealed, "replay finished");
    Ok(summary)
}

fn pace(speed: Speed, started: Instant, t_ms: u64) {
    if let Speed::Factor(f) = speed {
        let target = Duration::from_secs_f64(t_ms as f64 / 1000.0 / f);
        if let Some(wait) = target.checked_sub(started.elapsed()) {
            std::thread::sleep(wait);
        }
    }
}

struct Replay {
    shared: Arc<Shared>,
    session: attune_core::ingest::TraceSession,
    perceiver: Perceiver,
    builder: RoutineBuilder,
    agents: TaskAgents,
    generator: InterventionGenerator,
    store: RoutineStore,
    ecg: Vec<EcgSample>,
    imu: Vec<ImuSample>,
    frames: Vec<FrameEvent>,
    screen: Vec<FrameEvent>,
    audio: VecDeque<AudioSegment>,
    audio_index: u32,
}

impl Replay {
    fn poll(&mut self, until: VirtualTime) -> Result<(), TraceError> {
        for e in self.session.next_events(until)? {
            match e {
                Event::Ecg(s) => self.ecg.push(s),
                Event::Imu(s) => self.imu.push(s),
                Event::Frame(f) if f.source == FrameSource::Screen => self.screen.push(f),
                Event::Frame(f) => self.frames.push(f),
                Event::Audio(a) => self.audio.push_back(a),
            }
        }
        Ok(())
    }

    /// Perceives the latest egocentric frame of the cadence window ending at
    /// `now`; a window without frames is a gap.
    fn frame_tick(&mut self, now: VirtualTime) {
        let Some(frame) = self.frames.pop() else {
            self.shared
                .lock()
                .count(Pipeline::Frame, |c| c.skipped += 1);
            return;
        };
        self.frames.clear();
        let gw = self.shared.gateway.clone();
        let result = self.perceiver.process_egocentric(&*gw, &frame);
        let mut events = Vec::new();
        {
            let mut st = self.shared.lock();
            match result {
                Ok(insight) => {
                    match self
                        .builder
                        .accumulate(&insight, self.shared.config.frame_cadence())
                    {
                        Ok(()) => st.count(Pipeline::Frame, |c| c.ok += 1),
                        Err(e) => st.fail(Pipeline::Frame, now, e.to_string()),
                    }
                    st.latest_criticality = Some(insight.criticality);
                    st.latest_insight = Some(insight);
                    let current = st.latest_criticality;
                    if let Some(tr) = st.interventions.regate_held(current, now) {
                        events.extend(delivered(&st, &[tr]));
                    }
                }
                Err(e) => st.fail(Pipeline::Frame, now, e.to_string()),
            }
        }
        self.shared.publish(events);
    }

    fn screen_tick(&mut self, now: VirtualTime) {
        let Some(frame) = self.screen.pop() else {
            return;
        };
        self.screen.clear();
        let gw = self.shared.gateway.clone();
        let result = self.perceiver.caption_screen(&*gw, &frame);
        let mut st = self.shared.lock();
        match result {
            Ok(_) => {
                st.count(Pipeline::Screen, |c| c.ok += 1);
                st.screen_context = self.perceiver.latest_screen_context();
            }
            Err(e) => st.fail(Pipeline::Screen, now, e.to_string()),
        }
    }

    /// Processes every buffered audio segment that has ended by `now`.
    fn audio_tick(&mut self, now: VirtualTime) {
        let gw = self.shared.gateway.clone();
        while self.audio.front().is_some_and(|a| a.end() <= now) {
            let seg = self.audio.pop_front().expect("checked");
            self.audio_index += 1;
            let wall = self.shared.clock.wall(seg.end());
            let report = self
                .agents
                .process_segment(&*gw, &seg, self.audio_index, wall);
            let mut events = Vec::new();
            let mut fresh = Vec::new();
            {
                let mut st = self.shared.lock();
                match &report.outcome {
                    SegmentOutcome::ManualReview { reason, .. } => st.fail(
                        Pipeline::Audio,
                        now,
                        format!("segment {}: {reason}", self.audio_index),
                    ),
                    SegmentOutcome::Actions { items } => {
                        st.count(Pipeline::Audio, |c| c.ok += 1);
                        for item in items {
                            if st.actions.enqueue(ActionItem::clone(item)) {
                                fresh.push(item.id.clone());
                            }
                        }
                    }
                    SegmentOutcome::NoActions => st.count(Pipeline::Audio, |c| c.ok += 1),
                }
                st.segments.push(report);
                let st = &mut *st;
                for id in fresh {
                    match st.actions.dispatch(&id, &mut st.registry) {
                        Ok(_) => st.count(Pipeline::Dispatch, |c| c.ok += 1),
                        Err(e) => st.fail(Pipeline::Dispatch, now, format!("{id}: {e}")),
                    }
                    if let Some(rec) = st.actions.get(&id) {
                        events.push(ServerEvent::Action(rec.clone()));
                    }
                }
            }
            self.shared.publish(events);
        }
    }

    /// Seals the row ending at `now` and runs intervention generation.
    fn routine_tick(&mut self, now: VirtualTime) {
        let window = self.builder.open_window();
        let physio = PhysioWindow::compute(window, &self.ecg, &self.imu);
        let sealed = self.builder.close_row(&physio);
        let keep_from = now.0.saturating_sub(IMU_CONTEXT_MS);
        self.ecg.retain(|s| s.timestamp.0 >= now.0);
        self.imu.retain(|s| s.timestamp.0 >= keep_from);
        let row = match sealed {
            Ok(row) => row,
            Err(e) => {
                self.shared
                    .lock()
                    .fail(Pipeline::Routine, now, e.to_string());
                return;
            }
        };
        let table = self.builder.table().clone();
        let (stress, ctx) = {
            let mut st = self.shared.lock();
            if let Err(e) = self.store.seal(&row, &table) {
                st.fail(Pipeline::Routine, now, e.to_string());
            } else {
                st.count(Pipeline::Routine, |c| c.ok += 1);
            }
            st.routine = table.clone();
            let stress = row.stress().or(table.latest_stress());
            let ctx = stress.map(|s| {
                InterventionRequestContext::build(
                    s,
                    &table,
                    self.shared.config.engine.intervention_rows,
                    st.latest_insight.as_ref(),
                    &st.screen_context,
                )
            });
            (stress, ctx)
        };
        self.shared.publish(vec![ServerEvent::RoutineRow(row)]);

        let Some(ctx) = ctx else {
            tracing::info!(at_ms = now.0, "no stress estimate; intervention skipped");
            self.shared
                .lock()
                .count(Pipeline::Intervention, |c| c.skipped += 1);
            return;
        };
        debug_assert!(stress.is_some());
        let ctx = match ctx {
            Ok(c) => c,
            Err(e) => {
                self.shared
                    .lock()
                    .fail(Pipeline::Intervention, now, e.to_string());
                return;
            }
        };
        if let Err(e) = self.shared.lock().interventions.check_cadence(now) {
            self.shared
                .lock()
                .fail(Pipeline::Intervention, now, e.to_string());
            return;
        }
        let gw = self.shared.gateway.clone();
        let fetched = self.generator.fetch(&*gw, &ctx);
        let mut events = Vec::new();
        {
            let mut st = self.shared.lock();
            let current = st.latest_criticality;
            match fetched.and_then(|p| st.interventions.admit_and_gate(p, current, now)) {
                Ok((_, transitions)) => {
                    st.count(Pipeline::Intervention, |c| c.ok += 1);
                    events.extend(delivered(&st, &transitions));
                }
                Err(e) => st.fail(Pipeline::Intervention, now, e.to_string()),
            }
        }
        self.shared.publish(events);
    }
}

/// Events for the transitions that delivered an intervention.
fn delivered(st: &EngineState, transitions: &[Transition]) -> Vec<ServerEvent> {
    transitions
        .iter()
        .filter(|t| t.to == InterventionStatus::Delivered)
        .filter_map(|t| st.interventions.get(&t.id).cloned())
        .map(ServerEvent::Intervention)
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn schedule_orders_ticks_and_flushes_audio() {
        let mut s = Schedule {
            cadence: 60,
            audio: 90,
            interval: 120,
            end: 200,
            next_frame: 60,
            next_audio: 90,
            next_routine: 120,
        };
        let mut seen = Vec::new();
        while let Some(x) = s.next() {
            seen.push(x);
        }
        assert_eq!(
            seen,
            vec![
                (60, vec![Tick::Frame]),
                (90, vec![Tick::Audio]),
                (120, vec![Tick::Frame, Tick::Routine]),
                (180, vec![Tick::Frame, Tick::Audio]),
                (200, vec![Tick::Audio]),
            ]
        );
    }

    #[test]
    fn session_end_rounds_up() {
        use attune_core::ingest::{AudioPayload, TraceManifest};
        let mut trace = Trace {
            manifest: TraceManifest::default(),
            ecg: vec![EcgSample {
                timestamp: VirtualTime(61_000),
                value: 0.0,
            }],
            imu: vec![],
            frames: vec![],
            screen: vec![],
            audio: vec![AudioSegment {
                start: VirtualTime(0),
                duration_ms: 150_000,
                payload: AudioPayload::Transcript("x".into()),
            }],
        };
        assert_eq!(
            session_end(&trace, Duration::from_secs(60)),
            VirtualTime(180_000)
        );
        trace.manifest.duration_ms = Some(5);
        assert_eq!(session_end(&trace, Duration::from_secs(60)), VirtualTime(5));
    }
}
