use std::path::{Path, PathBuf};
use std::sync::Arc;

use anyhow::{bail, Context, Result};
use attune::config::{BackendKind, EngineConfig, Speed};
use attune::engine::{run_replay, session_clock, Shared};
use attune::gateway::Gateway;
use attune::prompts::load_catalog;
use attune::synth::{write_bundle, SynthOptions};
use attune::trace::load_trace;
use attune_core::ingest::{Trace, TraceManifest};
use clap::{Parser, Subcommand};

#[derive(Parser)]
#[command(name = "attune", version, about = "Context-aware well-being engine")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Replay a trace through every pipeline and write the session records.
    Run {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        replay: PathBuf,
        /// Virtual seconds per wall second, or "max".
        #[arg(long)]
        speed: Option<Speed>,
        /// Use the mock backend with this rule file.
        #[arg(long)]
        mock_llm: Option<PathBuf>,
    },
    /// Serve the HTTP API, replaying the configured trace if any.
    Serve {
        #[arg(long)]
        config: PathBuf,
    },
    /// Check a trace directory and print a short report.
    ValidateTrace { dir: PathBuf },
    /// Write a synthetic trace, mock rules and config into a directory.
    Synth {
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 2.0)]
        hours: f64,
        #[arg(long, default_value_t = 7)]
        seed: u64,
        #[arg(long, default_value = "120")]
        speed: Speed,
    },
}

fn load_config(path: Option<&Path>) -> Result<EngineConfig> {
    match path {
        Some(p) => EngineConfig::load(p).with_context(|| format!("loading {}", p.display())),
        None => {
            let mut cfg = EngineConfig::default();
            cfg.apply_env();
            Ok(cfg)
        }
    }
}

fn build(cfg: EngineConfig, trace: &Trace) -> Result<Arc<Shared>> {
    let prompts = load_catalog(cfg.paths.prompt_dir.as_deref()).context("loading prompts")?;
    for t in prompts.templates() {
        tracing::info!(template = %t.file_name(), sha256 = %t.sha256, "prompt loaded");
    }
    let gateway = Arc::new(Gateway::from_config(&cfg)?);
    let clock = session_clock(&cfg, trace);
    Ok(Shared::new(cfg, prompts, gateway, clock)?)
}

fn main() -> Result<()> {
    tracing_subscriber::fmt()
        .json()
        .with_env_filter(
            tracing_subscriber::EnvFilter::try_from_default_env().unwrap_or_else(|_| "info".into()),
        )
        .with_writer(std::io::stderr)
        .init();
    match Cli::parse().command {
        Command::Run {
            config,
            replay,
            speed,
            mock_llm,
        } => {
            let mut cfg = load_config(config.as_deref())?;
            if let Some(s) = speed {
                cfg.engine.speed = s;
            }
            if let Some(rules) = mock_llm {
                cfg.gateway.backend = BackendKind::Mock;
                cfg.gateway.mock_rules = Some(rules);
            }
            let trace = load_trace(&replay)?;
            let shared = build(cfg, &trace)?;
            let summary = run_replay(&shared, trace)?;
            println!("{}", serde_json::to_string_pretty(&summary)?);
        }
        Command::Serve { config } => {
            let cfg = load_config(Some(&config))?;
            let trace = match &cfg.paths.trace {
                Some(dir) => Some(load_trace(dir)?),
                None => None,
            };
            let idle = Trace {
                manifest: TraceManifest::default(),
                ecg: vec![],
                imu: vec![],
                frames: vec![],
                screen: vec![],
                audio: vec![],
            };
            let shared = build(cfg, trace.as_ref().unwrap_or(&idle))?;
            serve(shared, trace)?;
        }
        Command::ValidateTrace { dir } => {
            let trace = load_trace(&dir)?;
            let gaps = trace.flagged_ecg_gaps();
            println!(
                "{}",
                serde_json::to_string_pretty(&serde_json::json!({
                    "ecg_samples": trace.ecg.len(),
                    "imu_samples": trace.imu.len(),
                    "frames": trace.frames.len(),
                    "screen_frames": trace.screen.len(),
                    "audio_segments": trace.audio.len(),
                    "last_timestamp_ms": trace.last_timestamp(),
                    "ecg_gaps": gaps,
                }))?
            );
        }
        Command::Synth {
            out,
            hours,
            seed,
            speed,
        } => {
            if hours.is_nan() || hours <= 0.0 {
                bail!("--hours must be positive");
            }
            let opts = SynthOptions {
                hours,
                seed,
                ..SynthOptions::default()
            };
            let cfg = write_bundle(&out, &opts, &speed_literal(speed))?;
            println!("{}", cfg.display());
        }
    }
    Ok(())
}

fn speed_literal(s: Speed) -> String {
    match s {
        Speed::Max => "\"max\"".into(),
        Speed::Factor(f) => format!("{f:?}"),
    }
}

fn serve(shared: Arc<Shared>, trace: Option<Trace>) -> Result<()> {
    let rt = tokio::runtime::Runtime::new()?;
    rt.block_on(async move {
        let listener = tokio::net::TcpListener::bind(shared.config.service.listen).await?;
        tracing::info!(addr = %listener.local_addr()?, "listening");
        if let Some(trace) = trace {
            let s = shared.clone();
            tokio::task::spawn_blocking(move || {
                if let Err(e) = run_replay(&s, trace) {
                    tracing::error!(error = %e, "replay failed");
                }
            });
        }
        axum::serve(listener, attune::service::router(shared))
            .with_graceful_shutdown(async {
                let _ = tokio::signal::ctrl_c().await;
            })
            .await?;
        Ok(())
    })
}
