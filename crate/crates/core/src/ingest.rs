//! Sensor event types and the exactly-once replay session over an in-memory
//! trace. Reading trace files from disk is done by the std crate.

use alloc::string::String;
use alloc::vec::Vec;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::clock::{TimeOfDay, VirtualTime};

/// Nominal ECG sampling period at 200 Hz.
pub const ECG_NOMINAL_PERIOD_MS: u64 = 5;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EcgSample {
    pub timestamp: VirtualTime,
    /// Millivolts.
    pub value: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ImuSample {
    pub timestamp: VirtualTime,
    /// Acceleration in m/s².
    pub accel: [f64; 3],
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FrameSource {
    Egocentric,
    Screen,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FramePayload {
    ImageRef(String),
    Caption(String),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FrameEvent {
    pub timestamp: VirtualTime,
    pub payload: FramePayload,
    pub source: FrameSource,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AudioPayload {
    AudioRef(String),
    Transcript(String),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AudioSegment {
    pub start: VirtualTime,
    pub duration_ms: u64,
    pub payload: AudioPayload,
}

impl AudioSegment {
    pub fn end(&self) -> VirtualTime {
        VirtualTime(self.start.0 + self.duration_ms)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Event {
    Ecg(EcgSample),
    Imu(ImuSample),
    Frame(FrameEvent),
    Audio(AudioSegment),
}

impl Event {
    pub fn timestamp(&self) -> VirtualTime {
        match self {
            Event::Ecg(s) => s.timestamp,
            Event::Imu(s) => s.timestamp,
            Event::Frame(f) => f.timestamp,
            Event::Audio(a) => a.start,
        }
    }
}

/// `manifest.json` of a trace directory.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TraceManifest {
    /// Local time of day at virtual time zero.
    pub session_start: TimeOfDay,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub session_date: Option<NaiveDate>,
    /// Explicit session length; defaults to the last event rounded up to the frame cadence.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub duration_ms: Option<u64>,
}

impl Default for TraceManifest {
    fn default() -> Self {
        TraceManifest {
            session_start: TimeOfDay::new(9, 0).expect("valid"),
            session_date: None,
            duration_ms: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stream {
    Ecg,
    Imu,
    Frames,
    Screen,
    Audio,
}

impl Stream {
    pub fn file_name(self) -> &'static str {
        match self {
            Stream::Ecg => "ecg.csv",
            Stream::Imu => "imu.csv",
            Stream::Frames => "frames.jsonl",
            Stream::Screen => "screen.jsonl",
            Stream::Audio => "audio.jsonl",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum TraceError {
    /// `index` is the 0-based position of the offending record within its stream.
    #[error("{} timestamps go backwards at record {index}", stream.file_name())]
    NonMonotonicTimestamps { stream: Stream, index: usize },
    #[error("audio segment {index} is empty or overlaps its predecessor")]
    BadAudioSegment { index: usize },
    #[error("frame {index} in {} has the wrong source", stream.file_name())]
    WrongFrameSource { stream: Stream, index: usize },
    #[error("session is closed")]
    SessionClosed,
    #[error("poll at {until} is earlier than the previous poll at {last}")]
    PollBackwards {
        until: VirtualTime,
        last: VirtualTime,
    },
}

/// A validated, fully loaded trace.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Trace {
    pub manifest: TraceManifest,
    pub ecg: Vec<EcgSample>,
    pub imu: Vec<ImuSample>,
    pub frames: Vec<FrameEvent>,
    pub screen: Vec<FrameEvent>,
    pub audio: Vec<AudioSegment>,
}

fn check_monotonic<T>(
    items: &[T],
    stream: Stream,
    ts: impl Fn(&T) -> VirtualTime,
) -> Result<(), TraceError> {
    for (i, w) in items.windows(2).enumerate() {
        if ts(&w[1]) < ts(&w[0]) {
            return Err(TraceError::NonMonotonicTimestamps {
                stream,
                index: i + 1,
            });
        }
    }
    Ok(())
}

impl Trace {
    pub fn validate(&self) -> Result<(), TraceError> {
        check_monotonic(&self.ecg, Stream::Ecg, |s| s.timestamp)?;
        check_monotonic(&self.imu, Stream::Imu, |s| s.timestamp)?;
        check_monotonic(&self.frames, Stream::Frames, |f| f.timestamp)?;
        check_monotonic(&self.screen, Stream::Screen, |f| f.timestamp)?;
        check_monotonic(&self.audio, Stream::Audio, |a| a.start)?;
        for (stream, frames, want) in [
            (Stream::Frames, &self.frames, FrameSource::Egocentric),
            (Stream::Screen, &self.screen, FrameSource::Screen),
        ] {
            if let Some(index) = frames.iter().position(|f| f.source != want) {
                return Err(TraceError::WrongFrameSource { stream, index });
            }
        }
        for (i, seg) in self.audio.iter().enumerate() {
            if seg.duration_ms == 0 || (i > 0 && self.audio[i - 1].end() > seg.start) {
                return Err(TraceError::BadAudioSegment { index: i });
            }
        }
        Ok(())
    }

    /// Timestamp of the latest event (audio counts by its end).
    pub fn last_timestamp(&self) -> Option<VirtualTime> {
        [
            self.ecg.last().map(|s| s.timestamp),
            self.imu.last().map(|s| s.timestamp),
            self.frames.last().map(|f| f.timestamp),
            self.screen.last().map(|f| f.timestamp),
            self.audio.last().map(|a| a.end()),
        ]
        .into_iter()
        .flatten()
        .max()
    }

    /// Consecutive ECG samples further apart than `threshold_ms`, as (before, after).
    pub fn ecg_gaps(&self, threshold_ms: u64) -> Vec<(VirtualTime, VirtualTime)> {
        self.ecg
            .windows(2)
            .filter(|w| w[1].timestamp.0 - w[0].timestamp.0 > threshold_ms)
            .map(|w| (w[0].timestamp, w[1].timestamp))
            .collect()
    }

    /// ECG gaps larger than twice the nominal 200 Hz period.
    pub fn flagged_ecg_gaps(&self) -> Vec<(VirtualTime, VirtualTime)> {
        self.ecg_gaps(2 * ECG_NOMINAL_PERIOD_MS)
    }

    pub fn into_session(self) -> Result<TraceSession, TraceError> {
        TraceSession::new(self)
    }
}

/// Single-consumer replay cursor that hands out every event exactly once, in
/// timestamp order. Ties across streams resolve in the order ECG, IMU,
/// egocentric frames, screen frames, audio.
#[derive(Debug, Clone)]
pub struct TraceSession {
    trace: Trace,
    cursors: [usize; 5],
    last_poll: Option<VirtualTime>,
    closed: bool,
}

impl TraceSession {
    pub fn new(trace: Trace) -> Result<Self, TraceError> {
        trace.validate()?;
        Ok(TraceSession {
            trace,
            cursors: [0; 5],
            last_poll: None,
            closed: false,
        })
    }

    pub fn manifest(&self) -> &TraceManifest {
        &self.trace.manifest
    }

    pub fn trace(&self) -> &Trace {
        &self.trace
    }

    pub fn close(&mut self) {
        self.closed = true;
    }

    pub fn is_exhausted(&self) -> bool {
        self.cursors[0] >= self.trace.ecg.len()
            && self.cursors[1] >= self.trace.imu.len()
            && self.cursors[2] >= self.trace.frames.len()
            && self.cursors[3] >= self.trace.screen.len()
            && self.cursors[4] >= self.trace.audio.len()
    }

    fn head(&self, stream: usize) -> Option<VirtualTime> {
        let c = self.cursors[stream];
        match stream {
            0 => self.trace.ecg.get(c).map(|s| s.timestamp),
            1 => self.trace.imu.get(c).map(|s| s.timestamp),
            2 => self.trace.frames.get(c).map(|f| f.timestamp),
            3 => self.trace.screen.get(c).map(|f| f.timestamp),
            _ => self.trace.audio.get(c).map(|a| a.start),
        }
    }

    fn take(&mut self, stream: usize) -> Event {
        let c = self.cursors[stream];
        self.cursors[stream] += 1;
        match stream {
            0 => Event::Ecg(self.trace.ecg[c]),
            1 => Event::Imu(self.trace.imu[c]),
            2 => Event::Frame(self.trace.frames[c].clone()),
            3 => Event::Frame(self.trace.screen[c].clone()),
            _ => Event::Audio(self.trace.audio[c].clone()),
        }
    }

    /// All not-yet-delivered events with timestamp `<= until`.
    pub fn next_events(&mut self, until: VirtualTime) -> Result<Vec<Event>, TraceError> {
        if self.closed {
            return Err(TraceError::SessionClosed);
        }
        if let Some(last) = self.last_poll {
            if until < last {
                return Err(TraceError::PollBackwards { until, last });
            }
        }
        self.last_poll = Some(until);
        let mut out = Vec::new();
        loop {
            let next = (0..5)
                .filter_map(|s| self.head(s).map(|t| (t, s)))
                .filter(|(t, _)| *t <= until)
                .min();
            match next {
                Some((_, s)) => out.push(self.take(s)),
                None => break,
            }
        }
        Ok(out)
    }
}
