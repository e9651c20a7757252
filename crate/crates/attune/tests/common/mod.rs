#![allow(dead_code)]

use std::path::{Path, PathBuf};
use std::sync::Arc;

use attune::config::EngineConfig;
use attune::engine::{session_clock, Shared};
use attune::gateway::Gateway;
use attune::prompts::load_catalog;
use attune::synth::{write_bundle, SynthOptions};
use attune::trace::load_trace;
use attune_core::ingest::Trace;

/// A synthetic bundle in a temp dir plus a ready engine for it.
pub struct Fixture {
    pub dir: tempfile::TempDir,
    pub config: EngineConfig,
    pub trace: Trace,
    pub shared: Arc<Shared>,
}

pub fn bundle(out: &Path, hours: f64, speed: &str) -> PathBuf {
    let opts = SynthOptions {
        hours,
        ..SynthOptions::default()
    };
    write_bundle(out, &opts, speed).unwrap()
}

pub fn engine(config: EngineConfig) -> (Trace, Arc<Shared>) {
    let trace = load_trace(config.paths.trace.as_ref().unwrap()).unwrap();
    let prompts = load_catalog(config.paths.prompt_dir.as_deref()).unwrap();
    let gateway = Arc::new(Gateway::from_config(&config).unwrap());
    let clock = session_clock(&config, &trace);
    let shared = Shared::new(config, prompts, gateway, clock).unwrap();
    (trace, shared)
}

pub fn fixture(hours: f64, bearer: Option<&str>) -> Fixture {
    let dir = tempfile::tempdir().unwrap();
    let path = bundle(dir.path(), hours, "\"max\"");
    let mut config = EngineConfig::load(&path).unwrap();
    config.service.bearer_token = bearer.map(str::to_owned);
    let (trace, shared) = engine(config.clone());
    Fixture {
        dir,
        config,
        trace,
        shared,
    }
}
