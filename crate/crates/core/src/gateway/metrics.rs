use std::collections::BTreeMap;

use parking_lot::Mutex;
use serde::{Deserialize, Serialize};

use crate::prompt::PromptKind;

/// Latency summary for one (kind, profile) pair. `mean`, `min` and `max`
/// cover completed calls only; timeouts are counted separately.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LatencySummary {
    pub kind: PromptKind,
    pub profile: String,
    pub count: usize,
    pub mean: f64,
    pub min: f64,
    pub max: f64,
    pub timeouts: usize,
}

#[derive(Debug, Default, Clone)]
struct Acc {
    count: usize,
    sum: f64,
    min: f64,
    max: f64,
    timeouts: usize,
}

/// Thread-safe latency aggregation shared by gateways.
#[derive(Debug, Default)]
pub struct Metrics {
    table: Mutex<BTreeMap<(PromptKind, String), Acc>>,
}

impl Metrics {
    pub fn record(&self, kind: PromptKind, profile: &str, latency: f64) {
        let mut t = self.table.lock();
        let a = t.entry((kind, profile.to_string())).or_default();
        if a.count == 0 {
            a.min = latency;
            a.max = latency;
        } else {
            a.min = a.min.min(latency);
            a.max = a.max.max(latency);
        }
        a.count += 1;
        a.sum += latency;
    }

    pub fn record_timeout(&self, kind: PromptKind, profile: &str) {
        self.table.lock().entry((kind, profile.to_string())).or_default().timeouts += 1;
    }

    /// Summaries sorted by (kind, profile).
    pub fn summary(&self) -> Vec<LatencySummary> {
        self.table
            .lock()
            .iter()
            .map(|((kind, profile), a)| LatencySummary {
                kind: *kind,
                profile: profile.clone(),
                count: a.count,
                mean: if a.count == 0 { 0.0 } else { a.sum / a.count as f64 },
                min: a.min,
                max: a.max,
                timeouts: a.timeouts,
            })
            .collect()
    }

    /// Mean over every completed call of one profile.
    pub fn profile_mean(&self, profile: &str) -> Option<f64> {
        let t = self.table.lock();
        let (n, sum) =
            t.iter().filter(|((_, p), _)| p == profile).fold((0usize, 0.0), |(n, s), (_, a)| (n + a.count, s + a.sum));
        (n > 0).then(|| sum / n as f64)
    }
}
