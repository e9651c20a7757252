//! Deterministic synthetic workday traces with a matching mock rule set.
//!
//! The day cycles through a fixed two-hour plan of activity blocks. Each
//! block sets the heart rhythm (mean RR and beat-to-beat spread), whether the
//! wearer walks, which frames and screen snapshots are captured, and the
//! criticality the mock insight model reports.

use std::path::{Path, PathBuf};

use attune_core::clock::{TimeOfDay, VirtualTime};
use attune_core::gateway::{MatchScope, MockRule, ModelKind};
use attune_core::ingest::{
    AudioPayload, AudioSegment, EcgSample, FrameEvent, FramePayload, FrameSource, ImuSample, Trace,
    TraceManifest,
};
use chrono::NaiveDate;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::trace::write_trace;

pub const ECG_PERIOD_MS: u64 = 5;
pub const IMU_PERIOD_MS: u64 = 20;
pub const FRAME_PERIOD_MS: u64 = 5_000;
pub const SCREEN_PERIOD_MS: u64 = 30_000;
pub const AUDIO_SEGMENT_MS: u64 = 60_000;
const BLOCK_MS: u64 = 15 * 60_000;
const GRAVITY: f64 = 9.81;

/// Simulated model latencies in milliseconds.
pub const CAPTION_LATENCY_MS: u64 = 2_700;
pub const INSIGHT_LATENCY_MS: u64 = 1_690;
pub const INTERVENTION_LATENCY_MS: u64 = 8_200;
pub const TCA_LATENCY_MS: u64 = 5_230;
pub const EXTRACTION_LATENCY_MS: u64 = 3_100;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Activity {
    Desk,
    Meeting,
    Commute,
    Lunch,
}

impl Activity {
    fn tag(self) -> &'static str {
        match self {
            Activity::Desk => "desk",
            Activity::Meeting => "meeting",
            Activity::Commute => "commute",
            Activity::Lunch => "lunch",
        }
    }

    fn caption(self) -> &'static str {
        match self {
            Activity::Desk => "A person is typing on a laptop at an office desk covered with papers and a coffee mug.",
            Activity::Meeting => "A person is presenting slides to colleagues seated around a long conference table.",
            Activity::Commute => "A person is walking along a busy city sidewalk past parked bicycles.",
            Activity::Lunch => "A person is eating a sandwich at a cafeteria table near a window.",
        }
    }

    fn insight(self) -> &'static str {
        match self {
            Activity::Desk => "[typing on a laptop | Desk_Work | Mid | office desk with papers and a coffee mug]",
            Activity::Meeting => "[presenting slides to colleagues | In_Meeting | High | conference room with a long table]",
            Activity::Commute => "[walking along a sidewalk | Commuting | Low | city street with parked bicycles]",
            Activity::Lunch => "[eating a sandwich | Eating | Low | cafeteria table near a window]",
        }
    }
}

/// One 15-minute block: activity, mean RR (ms) and RR standard deviation (ms).
#[derive(Debug, Clone, Copy)]
struct Block {
    activity: Activity,
    mean_rr: f64,
    rr_sd: f64,
}

const PLAN: [Block; 8] = [
    Block {
        activity: Activity::Desk,
        mean_rr: 800.0,
        rr_sd: 35.0,
    },
    Block {
        activity: Activity::Desk,
        mean_rr: 700.0,
        rr_sd: 14.0,
    },
    Block {
        activity: Activity::Meeting,
        mean_rr: 680.0,
        rr_sd: 12.0,
    },
    Block {
        activity: Activity::Commute,
        mean_rr: 620.0,
        rr_sd: 90.0,
    },
    Block {
        activity: Activity::Lunch,
        mean_rr: 900.0,
        rr_sd: 80.0,
    },
    Block {
        activity: Activity::Desk,
        mean_rr: 820.0,
        rr_sd: 38.0,
    },
    Block {
        activity: Activity::Meeting,
        mean_rr: 690.0,
        rr_sd: 13.0,
    },
    Block {
        activity: Activity::Desk,
        mean_rr: 720.0,
        rr_sd: 15.0,
    },
];

fn block_at(t_ms: u64) -> Block {
    PLAN[((t_ms / BLOCK_MS) as usize) % PLAN.len()]
}

const SCREEN_CAPTIONS: [(&str, &str); 2] = [
    (
        "code",
        "Editing Rust source code in an IDE with a failing test panel open",
    ),
    (
        "mail",
        "Reading a long email thread about the quarterly report in a mail client",
    ),
];

const CHATTER: [&str; 6] = [
    "Yeah I think the build is green again, let me check the dashboard.",
    "Did anyone see the new coffee machine on the third floor?",
    "I'll take another look at that function after lunch.",
    "Hmm, this test keeps timing out on my machine.",
    "Okay, moving on to the next item on the agenda.",
    "Let me just finish this paragraph first.",
];

/// Scripted requests at fixed minutes of each two-hour cycle.
const REQUESTS: [(u64, &str); 3] = [
    (
        7,
        "Could you please email the report summary to the team before the end of the day.",
    ),
    (
        37,
        "Let's schedule a sync with Dana tomorrow at 3pm for 30 minutes to go over the numbers.",
    ),
    (
        98,
        "We should set up a design review with the whole team sometime soon.",
    ),
];

#[derive(Debug, Clone)]
pub struct SynthOptions {
    pub hours: f64,
    pub seed: u64,
    pub session_start: TimeOfDay,
    pub session_date: NaiveDate,
}

impl Default for SynthOptions {
    fn default() -> Self {
        SynthOptions {
            hours: 2.0,
            seed: 7,
            session_start: TimeOfDay::new(9, 0).expect("valid"),
            session_date: NaiveDate::from_ymd_opt(2025, 3, 4).expect("valid"),
        }
    }
}

/// ECG value of one beat's P-QRS-T complex at offset `dt` ms from the R peak.
fn beat_shape(dt: f64) -> f64 {
    let g = |mu: f64, sigma: f64, a: f64| a * (-(dt - mu).powi(2) / (2.0 * sigma * sigma)).exp();
    g(-160.0, 25.0, 0.12)
        + g(-25.0, 8.0, -0.15)
        + g(0.0, 9.0, 1.1)
        + g(28.0, 9.0, -0.25)
        + g(260.0, 45.0, 0.3)
}

/// Beat times (ms) covering `[0, end_ms)`.
fn beat_times(end_ms: u64, rng: &mut ChaCha8Rng) -> Vec<f64> {
    let mut beats = Vec::new();
    let mut t = 400.0;
    while t < end_ms as f64 {
        beats.push(t);
        let b = block_at(t as u64);
        let rr = Normal::new(b.mean_rr, b.rr_sd)
            .expect("valid normal")
            .sample(rng);
        t += rr.clamp(380.0, 1500.0);
    }
    beats
}

fn ecg(end_ms: u64, rng: &mut ChaCha8Rng) -> Vec<EcgSample> {
    let n = (end_ms / ECG_PERIOD_MS) as usize;
    let mut values = vec![0.0; n];
    for beat in beat_times(end_ms, rng) {
        let lo = ((beat - 400.0).max(0.0) / ECG_PERIOD_MS as f64).ceil() as usize;
        let hi = (((beat + 500.0) / ECG_PERIOD_MS as f64) as usize).min(n.saturating_sub(1));
        for (i, v) in values.iter_mut().enumerate().take(hi + 1).skip(lo) {
            *v += beat_shape((i as u64 * ECG_PERIOD_MS) as f64 - beat);
        }
    }
    let noise = Normal::new(0.0, 0.03).expect("valid normal");
    values
        .into_iter()
        .enumerate()
        .map(|(i, v)| EcgSample {
            timestamp: VirtualTime(i as u64 * ECG_PERIOD_MS),
            value: round(v + noise.sample(rng), 4),
        })
        .collect()
}

fn imu(end_ms: u64, rng: &mut ChaCha8Rng) -> Vec<ImuSample> {
    let noise = Normal::new(0.0, 0.05).expect("valid normal");
    (0..end_ms / IMU_PERIOD_MS)
        .map(|i| {
            let t = i * IMU_PERIOD_MS;
            let walk = if block_at(t).activity == Activity::Commute {
                3.0 * (2.0 * std::f64::consts::PI * 1.8 * t as f64 / 1000.0).sin()
            } else {
                0.0
            };
            ImuSample {
                timestamp: VirtualTime(t),
                accel: [
                    round(noise.sample(rng), 3),
                    round(noise.sample(rng), 3),
                    round(GRAVITY + walk + noise.sample(rng), 3),
                ],
            }
        })
        .collect()
}

fn round(x: f64, digits: i32) -> f64 {
    let p = 10f64.powi(digits);
    (x * p).round() / p
}

/// Builds the trace in memory.
pub fn generate(opts: &SynthOptions) -> Trace {
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let end_ms = (opts.hours * 3_600_000.0).round() as u64;
    let ecg = ecg(end_ms, &mut rng);
    let imu = imu(end_ms, &mut rng);
    let frames = (0..end_ms / FRAME_PERIOD_MS)
        .map(|i| {
            let t = i * FRAME_PERIOD_MS + 2_000;
            FrameEvent {
                timestamp: VirtualTime(t),
                payload: FramePayload::ImageRef(format!(
                    "frames/{i:06}_{}.jpg",
                    block_at(t).activity.tag()
                )),
                source: FrameSource::Egocentric,
            }
        })
        .collect();
    let screen = (0..end_ms / SCREEN_PERIOD_MS)
        .map(|i| i * SCREEN_PERIOD_MS + 1_000)
        .filter(|&t| block_at(t).activity == Activity::Desk)
        .map(|t| {
            let (tag, _) = SCREEN_CAPTIONS[((t / BLOCK_MS) % 2) as usize];
            FrameEvent {
                timestamp: VirtualTime(t),
                payload: FramePayload::ImageRef(format!("screen/{:06}_{tag}.png", t / 1000)),
                source: FrameSource::Screen,
            }
        })
        .collect();
    let cycle_minutes = (PLAN.len() as u64 * BLOCK_MS) / 60_000;
    let audio = (0..end_ms / AUDIO_SEGMENT_MS)
        .map(|m| {
            let scripted = REQUESTS
                .iter()
                .find(|(at, _)| *at == m % cycle_minutes)
                .map(|(_, text)| *text);
            let text = scripted.unwrap_or_else(|| CHATTER[rng.gen_range(0..CHATTER.len())]);
            AudioSegment {
                start: VirtualTime(m * AUDIO_SEGMENT_MS),
                duration_ms: AUDIO_SEGMENT_MS,
                payload: AudioPayload::Transcript(text.into()),
            }
        })
        .collect();
    Trace {
        manifest: TraceManifest {
            session_start: opts.session_start,
            session_date: Some(opts.session_date),
            duration_ms: Some(end_ms),
        },
        ecg,
        imu,
        frames,
        screen,
        audio,
    }
}

const STRESSED_INTERVENTION: &str = r#"{
  "Analysis": "Long stretches of desk work and meetings without breaks coincide with elevated stress.",
  "Task Improvement": "Split the remaining work into short focused blocks with a clear goal each.",
  "Interventions": {
    "Immediate Action": "Stand up, stretch and take five slow breaths before continuing.",
    "Follow-Up": "Schedule a ten-minute walk within the next hour."
  }
}"#;

const CALM_INTERVENTION: &str = r#"{
  "Analysis": "Activity is balanced and stress indicators are low.",
  "Interventions": {
    "Immediate Action": "Keep the current pace and drink some water.",
    "Follow-Up": "Plan the next focused work block before starting it."
  }
}"#;

const EMAIL_ACTION: &str = r#"[{"kind":"email","recipient_hint":"the team","subject":"Report summary","body_draft":"Hi all,\n\nPlease find the report summary below.\n\nBest regards"}]"#;
const CALENDAR_ACTION: &str = r#"[{"kind":"calendar_event","title":"Sync with Dana","when":"tomorrow at 3pm","duration_minutes":30,"attendees_hint":"Dana"}]"#;
const VAGUE_ACTION: &str = r#"[{"kind":"calendar_event","title":"Design review","when":"sometime soon","attendees_hint":"the whole team"}]"#;

/// Mock rules answering every request the synthetic day produces.
pub fn mock_rules() -> Vec<MockRule> {
    let mut rules = Vec::new();
    let mut priority = 1000;
    let mut push = |rule: MockRule| {
        rules.push(MockRule { priority, ..rule });
        priority -= 1;
    };
    for a in [
        Activity::Desk,
        Activity::Meeting,
        Activity::Commute,
        Activity::Lunch,
    ] {
        push(
            MockRule::new(format!("_{}.jpg", a.tag()), a.caption(), 0)
                .with_scope(MatchScope::Media)
                .with_kind(ModelKind::Caption)
                .with_latency_ms(CAPTION_LATENCY_MS),
        );
        push(
            MockRule::new(format!("Description:\n{}", a.caption()), a.insight(), 0)
                .with_scope(MatchScope::User)
                .with_kind(ModelKind::Completion)
                .with_latency_ms(INSIGHT_LATENCY_MS),
        );
    }
    for (tag, caption) in SCREEN_CAPTIONS {
        push(
            MockRule::new(format!("_{tag}.png"), caption, 0)
                .with_scope(MatchScope::Media)
                .with_kind(ModelKind::Caption)
                .with_latency_ms(CAPTION_LATENCY_MS),
        );
    }
    for (matcher, response) in [
        ("report summary to the team", EMAIL_ACTION),
        ("sync with Dana", CALENDAR_ACTION),
        ("design review with the whole team", VAGUE_ACTION),
    ] {
        push(
            MockRule::new(matcher, response, 0)
                .with_scope(MatchScope::User)
                .with_kind(ModelKind::Completion)
                .with_latency_ms(EXTRACTION_LATENCY_MS),
        );
    }
    push(
        MockRule::new("one-minute transcript", "[]", 0)
            .with_scope(MatchScope::System)
            .with_kind(ModelKind::Completion)
            .with_latency_ms(EXTRACTION_LATENCY_MS),
    );
    push(
        MockRule::new("\"not stressed\"", CALM_INTERVENTION, 0)
            .with_scope(MatchScope::User)
            .with_kind(ModelKind::Completion)
            .with_latency_ms(INTERVENTION_LATENCY_MS),
    );
    push(
        MockRule::new("workplace wellness assistant", STRESSED_INTERVENTION, 0)
            .with_scope(MatchScope::System)
            .with_kind(ModelKind::Completion)
            .with_latency_ms(INTERVENTION_LATENCY_MS),
    );
    push(
        MockRule::new(
            "User: explain binary cross-entropy",
            "Binary cross-entropy measures how far predicted probabilities are from 0/1 labels: the loss is -[y log p + (1 - y) log(1 - p)], averaged over examples. Take it one step at a time; you are doing fine.",
            0,
        )
        .with_scope(MatchScope::User)
        .with_kind(ModelKind::Completion)
        .with_latency_ms(TCA_LATENCY_MS),
    );
    push(
        MockRule::new("dynamically", "Sure. Let's take it one step at a time.", 0)
            .with_scope(MatchScope::System)
            .with_kind(ModelKind::Completion)
            .with_latency_ms(TCA_LATENCY_MS),
    );
    rules
}

pub const TRACE_DIR: &str = "trace";
pub const RULES_FILE: &str = "mock_rules.json";
pub const CONFIG_FILE: &str = "attune.toml";

/// Writes `<out>/trace/`, `<out>/mock_rules.json` and `<out>/attune.toml`;
/// returns the config path.
pub fn write_bundle(out: &Path, opts: &SynthOptions, speed: &str) -> std::io::Result<PathBuf> {
    std::fs::create_dir_all(out)?;
    write_trace(&out.join(TRACE_DIR), &generate(opts))?;
    std::fs::write(
        out.join(RULES_FILE),
        serde_json::to_string_pretty(&mock_rules())? + "\n",
    )?;
    let config = format!(
        "[engine]\nspeed = {speed}\n\n[gateway]\nbackend = \"mock\"\nmock_rules = \"{RULES_FILE}\"\n\n[paths]\ntrace = \"{TRACE_DIR}\"\nstore = \"store\"\noutbox = \"outbox\"\n"
    );
    let path = out.join(CONFIG_FILE);
    std::fs::write(&path, config)?;
    Ok(path)
}
