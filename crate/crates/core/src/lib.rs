//! Core logic of the attune engine.
//!
//! Everything here is pure computation over in-memory data: heartbeat and
//! step detection, heart-rate-variability metrics, the caption/insight prompt
//! and parser layer, Routine Table aggregation, intervention gating and
//! lifecycle, tone policy for the conversation agent, and action-item
//! extraction for task agents. Model calls go through the [`gateway::ModelGateway`]
//! trait; transport, retries with real sleeping, file formats and the HTTP
//! service live in the `attune` crate.
//!
//! The crate is `no_std` and needs only `alloc`.
#![cfg_attr(not(any(test, feature = "std")), no_std)]

extern crate alloc;

pub mod agents;
pub mod clock;
pub mod gateway;
pub mod ingest;
pub mod intervention;
pub mod jsontext;
pub mod latency;
pub mod perception;
pub mod physio;
pub mod prompts;
pub mod routine;
pub mod tca;

pub use clock::{TimeOfDay, VirtualTime};
