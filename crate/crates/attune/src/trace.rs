//! Trace directories: `ecg.csv`, `imu.csv`, `frames.jsonl`, `screen.jsonl`,
//! `audio.jsonl` and an optional `manifest.json`. Every file is optional.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use attune_core::clock::VirtualTime;
use attune_core::ingest::{
    AudioPayload, AudioSegment, EcgSample, FrameEvent, FramePayload, FrameSource, ImuSample,
    Stream, Trace, TraceError, TraceManifest,
};
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const MANIFEST_FILE: &str = "manifest.json";

#[derive(Debug, Error)]
pub enum TraceLoadError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("{file} line {line}: {reason}")]
    Malformed {
        file: String,
        line: usize,
        reason: String,
    },
    /// `line` counts data records from 1, excluding any header.
    #[error("{file} line {line}: timestamps go backwards")]
    NonMonotonicTimestamps { file: String, line: usize },
    #[error(transparent)]
    Invalid(TraceError),
}

impl From<TraceError> for TraceLoadError {
    fn from(e: TraceError) -> Self {
        match e {
            TraceError::NonMonotonicTimestamps { stream, index } => {
                TraceLoadError::NonMonotonicTimestamps {
                    file: stream.file_name().into(),
                    line: index + 1,
                }
            }
            other => TraceLoadError::Invalid(other),
        }
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct EcgRow {
    timestamp_ms: u64,
    mv: f64,
}

#[derive(Debug, Serialize, Deserialize)]
struct ImuRow {
    timestamp_ms: u64,
    ax: f64,
    ay: f64,
    az: f64,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct FrameLine {
    ts_ms: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    image_ref: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    caption: Option<String>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct AudioLine {
    start_ms: u64,
    dur_ms: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    audio_ref: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    transcript: Option<String>,
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> TraceLoadError + '_ {
    move |source| TraceLoadError::Io {
        path: path.to_owned(),
        source,
    }
}

fn read_csv<R: for<'de> Deserialize<'de>>(
    path: &Path,
    file: &str,
    header: &[&str],
) -> Result<Vec<R>, TraceLoadError> {
    let mut rdr = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| TraceLoadError::Malformed {
            file: file.into(),
            line: 0,
            reason: e.to_string(),
        })?;
    let got: Vec<String> = rdr
        .headers()
        .map_err(|e| TraceLoadError::Malformed {
            file: file.into(),
            line: 0,
            reason: e.to_string(),
        })?
        .iter()
        .map(str::to_owned)
        .collect();
    if got != header {
        return Err(TraceLoadError::Malformed {
            file: file.into(),
            line: 0,
            reason: format!("expected header {}", header.join(",")),
        });
    }
    rdr.deserialize()
        .enumerate()
        .map(|(i, r)| {
            r.map_err(|e| TraceLoadError::Malformed {
                file: file.into(),
                line: i + 1,
                reason: e.to_string(),
            })
        })
        .collect()
}

fn read_jsonl<R: for<'de> Deserialize<'de>>(
    path: &Path,
    file: &str,
) -> Result<Vec<R>, TraceLoadError> {
    let f = File::open(path).map_err(io_err(path))?;
    let mut out = Vec::new();
    for (i, line) in BufReader::new(f).lines().enumerate() {
        let line = line.map_err(io_err(path))?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(
            serde_json::from_str(&line).map_err(|e| TraceLoadError::Malformed {
                file: file.into(),
                line: i + 1,
                reason: e.to_string(),
            })?,
        );
    }
    Ok(out)
}

fn resolve_ref(dir: &Path, r: String) -> String {
    if r.contains("://") || Path::new(&r).is_absolute() {
        r
    } else {
        dir.join(r).display().to_string()
    }
}

fn frames(dir: &Path, file: &str, source: FrameSource) -> Result<Vec<FrameEvent>, TraceLoadError> {
    let path = dir.join(file);
    if !path.exists() {
        return Ok(Vec::new());
    }
    read_jsonl::<FrameLine>(&path, file)?
        .into_iter()
        .enumerate()
        .map(|(i, l)| {
            let payload = match (l.image_ref, l.caption) {
                (Some(r), None) => FramePayload::ImageRef(resolve_ref(dir, r)),
                (None, Some(c)) => FramePayload::Caption(c),
                _ => {
                    return Err(TraceLoadError::Malformed {
                        file: file.into(),
                        line: i + 1,
                        reason: "exactly one of image_ref and caption is required".into(),
                    })
                }
            };
            Ok(FrameEvent {
                timestamp: VirtualTime(l.ts_ms),
                payload,
                source,
            })
        })
        .collect()
}

/// Loads and validates a trace directory.
pub fn load_trace(dir: &Path) -> Result<Trace, TraceLoadError> {
    if !dir.is_dir() {
        return Err(TraceLoadError::Io {
            path: dir.to_owned(),
            source: std::io::Error::new(std::io::ErrorKind::NotFound, "not a directory"),
        });
    }
    let manifest_path = dir.join(MANIFEST_FILE);
    let manifest = if manifest_path.exists() {
        let text = std::fs::read_to_string(&manifest_path).map_err(io_err(&manifest_path))?;
        serde_json::from_str(&text).map_err(|e| TraceLoadError::Malformed {
            file: MANIFEST_FILE.into(),
            line: e.line(),
            reason: e.to_string(),
        })?
    } else {
        TraceManifest::default()
    };
    let ecg_path = dir.join(Stream::Ecg.file_name());
    let ecg = if ecg_path.exists() {
        read_csv::<EcgRow>(&ecg_path, Stream::Ecg.file_name(), &["timestamp_ms", "mv"])?
            .into_iter()
            .map(|r| EcgSample {
                timestamp: VirtualTime(r.timestamp_ms),
                value: r.mv,
            })
            .collect()
    } else {
        Vec::new()
    };
    let imu_path = dir.join(Stream::Imu.file_name());
    let imu = if imu_path.exists() {
        read_csv::<ImuRow>(
            &imu_path,
            Stream::Imu.file_name(),
            &["timestamp_ms", "ax", "ay", "az"],
        )?
        .into_iter()
        .map(|r| ImuSample {
            timestamp: VirtualTime(r.timestamp_ms),
            accel: [r.ax, r.ay, r.az],
        })
        .collect()
    } else {
        Vec::new()
    };
    let audio_file = Stream::Audio.file_name();
    let audio_path = dir.join(audio_file);
    let audio = if audio_path.exists() {
        read_jsonl::<AudioLine>(&audio_path, audio_file)?
            .into_iter()
            .enumerate()
            .map(|(i, l)| {
                let payload = match (l.audio_ref, l.transcript) {
                    (Some(r), None) => AudioPayload::AudioRef(resolve_ref(dir, r)),
                    (None, Some(t)) => AudioPayload::Transcript(t),
                    _ => {
                        return Err(TraceLoadError::Malformed {
                            file: audio_file.into(),
                            line: i + 1,
                            reason: "exactly one of audio_ref and transcript is required".into(),
                        })
                    }
                };
                Ok(AudioSegment {
                    start: VirtualTime(l.start_ms),
                    duration_ms: l.dur_ms,
                    payload,
                })
            })
            .collect::<Result<_, _>>()?
    } else {
        Vec::new()
    };
    let trace = Trace {
        manifest,
        ecg,
        imu,
        frames: frames(dir, Stream::Frames.file_name(), FrameSource::Egocentric)?,
        screen: frames(dir, Stream::Screen.file_name(), FrameSource::Screen)?,
        audio,
    };
    trace.validate()?;
    Ok(trace)
}

fn write_jsonl<T: Serialize>(path: &Path, items: impl Iterator<Item = T>) -> std::io::Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    for item in items {
        serde_json::to_writer(&mut w, &item)?;
        w.write_all(b"\n")?;
    }
    w.flush()
}

fn frame_line(f: &FrameEvent) -> FrameLine {
    let (image_ref, caption) = match &f.payload {
        FramePayload::ImageRef(r) => (Some(r.clone()), None),
        FramePayload::Caption(c) => (None, Some(c.clone())),
    };
    FrameLine {
        ts_ms: f.timestamp.0,
        image_ref,
        caption,
    }
}

/// Writes `trace` in the directory format read by [`load_trace`]. Empty
/// streams produce no file.
pub fn write_trace(dir: &Path, trace: &Trace) -> std::io::Result<()> {
    std::fs::create_dir_all(dir)?;
    std::fs::write(
        dir.join(MANIFEST_FILE),
        serde_json::to_string_pretty(&trace.manifest)? + "\n",
    )?;
    if !trace.ecg.is_empty() {
        let mut w = csv::Writer::from_path(dir.join(Stream::Ecg.file_name()))?;
        for s in &trace.ecg {
            w.serialize(EcgRow {
                timestamp_ms: s.timestamp.0,
                mv: s.value,
            })?;
        }
        w.flush()?;
    }
    if !trace.imu.is_empty() {
        let mut w = csv::Writer::from_path(dir.join(Stream::Imu.file_name()))?;
        for s in &trace.imu {
            w.serialize(ImuRow {
                timestamp_ms: s.timestamp.0,
                ax: s.accel[0],
                ay: s.accel[1],
                az: s.accel[2],
            })?;
        }
        w.flush()?;
    }
    if !trace.frames.is_empty() {
        write_jsonl(
            &dir.join(Stream::Frames.file_name()),
            trace.frames.iter().map(frame_line),
        )?;
    }
    if !trace.screen.is_empty() {
        write_jsonl(
            &dir.join(Stream::Screen.file_name()),
            trace.screen.iter().map(frame_line),
        )?;
    }
    if !trace.audio.is_empty() {
        write_jsonl(
            &dir.join(Stream::Audio.file_name()),
            trace.audio.iter().map(|a| {
                let (audio_ref, transcript) = match &a.payload {
                    AudioPayload::AudioRef(r) => (Some(r.clone()), None),
                    AudioPayload::Transcript(t) => (None, Some(t.clone())),
                };
                AudioLine {
                    start_ms: a.start.0,
                    dur_ms: a.duration_ms,
                    audio_ref,
                    transcript,
                }
            }),
        )?;
    }
    Ok(())
}
