//! Running latency statistics per (request kind, model id).

use alloc::collections::BTreeMap;
use alloc::string::String;
use alloc::vec::Vec;
use core::time::Duration;

use serde::{Deserialize, Serialize};

use crate::gateway::{ModelKind, ModelResponse};

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
struct Accumulator {
    samples: u64,
    total_nanos: u128,
    max: Duration,
}

/// Statistics for one (kind, model) route. `mean_s`/`max_s` are absent when
/// nothing has been recorded.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LatencyStats {
    pub kind: ModelKind,
    pub model_id: String,
    pub samples: u64,
    pub mean_s: Option<f64>,
    pub max_s: Option<f64>,
}

impl LatencyStats {
    pub fn has_samples(&self) -> bool {
        self.samples > 0
    }
}

#[derive(Debug, Clone, Default)]
pub struct LatencyTracker {
    routes: BTreeMap<(ModelKind, String), Accumulator>,
}

impl LatencyTracker {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn record(&mut self, resp: &ModelResponse) -> LatencyStats {
        let key = (resp.kind, resp.model_id.clone());
        let acc = self.routes.entry(key).or_default();
        acc.samples += 1;
        acc.total_nanos += resp.latency.as_nanos();
        acc.max = acc.max.max(resp.latency);
        to_stats(resp.kind, &resp.model_id, acc)
    }

    pub fn get(&self, kind: ModelKind, model_id: &str) -> LatencyStats {
        self.routes
            .get(&(kind, String::from(model_id)))
            .map(|acc| to_stats(kind, model_id, acc))
            .unwrap_or_else(|| LatencyStats {
                kind,
                model_id: model_id.into(),
                samples: 0,
                mean_s: None,
                max_s: None,
            })
    }

    pub fn snapshot(&self) -> Vec<LatencyStats> {
        self.routes
            .iter()
            .map(|((kind, model), acc)| to_stats(*kind, model, acc))
            .collect()
    }

    pub fn is_empty(&self) -> bool {
        self.routes.is_empty()
    }
}

fn to_stats(kind: ModelKind, model_id: &str, acc: &Accumulator) -> LatencyStats {
    let (mean_s, max_s) = if acc.samples == 0 {
        (None, None)
    } else {
        (
            Some(acc.total_nanos as f64 / acc.samples as f64 / 1e9),
            Some(acc.max.as_secs_f64()),
        )
    };
    LatencyStats {
        kind,
        model_id: model_id.into(),
        samples: acc.samples,
        mean_s,
        max_s,
    }
}
