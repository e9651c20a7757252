//! The attune engine runtime: configuration, trace files, the model gateway
//! with its live and mock backends, the routine store, draft outbox, the
//! replay engine and the HTTP/SSE service.

pub mod config;
pub mod engine;
pub mod gateway;
pub mod outbox;
pub mod prompts;
pub mod service;
pub mod store;
pub mod synth;
pub mod trace;
