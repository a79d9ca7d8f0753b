use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::types::Phase;

/// Exact counters for one epoch. Depth vectors are indexed
/// `[instance][replica]` and hold the step depth at delivery or decision
/// for correct replicas.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct EpochMetrics {
    pub epoch: u64,
    /// First start to last finalization among correct replicas, in ticks.
    pub latency: u64,
    pub start_time: u64,
    pub end_time: u64,
    pub messages: u64,
    pub bytes: u64,
    pub rbc_messages: Vec<u64>,
    pub aba_messages: Vec<u64>,
    pub rbc_depth: Vec<Vec<Option<u32>>>,
    pub aba_depth: Vec<Vec<Option<u32>>>,
    /// Highest backup round in which a correct replica decided.
    pub aba_rounds: u16,
    /// Correct (replica, instance) pairs that decided in the one-step phase.
    pub one_step_decisions: u64,
    /// Largest epoch-level causal depth at finalization.
    pub max_depth: u32,
    pub verdict_ones: usize,
    /// Correct replicas that finalized this epoch.
    pub finalized_by: usize,
}

impl EpochMetrics {
    pub(crate) fn new(epoch: u64, n: usize) -> Self {
        EpochMetrics {
            epoch,
            rbc_messages: vec![0; n],
            aba_messages: vec![0; n],
            rbc_depth: vec![vec![None; n]; n],
            aba_depth: vec![vec![None; n]; n],
            ..EpochMetrics::default()
        }
    }

    /// Largest step depth at RBC delivery over all instances and replicas.
    pub fn max_rbc_depth(&self) -> Option<u32> {
        self.rbc_depth.iter().flatten().flatten().copied().max()
    }

    pub fn max_aba_depth(&self) -> Option<u32> {
        self.aba_depth.iter().flatten().flatten().copied().max()
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct RunMetrics {
    pub protocol: String,
    pub n: usize,
    pub f: usize,
    pub fault_mode: String,
    pub seed: u64,
    pub delay: String,
    pub batch_size: usize,
    pub epochs: Vec<EpochMetrics>,
    pub total_messages: u64,
    pub total_bytes: u64,
    /// Dropped envelopes by fault kind.
    pub dropped_invalid: BTreeMap<String, u64>,
    pub events: u64,
    /// SHA-256 over every processed event, hex encoded.
    pub trace_digest: String,
}

pub const CSV_HEADER: &str =
    "protocol,n,f,fault_mode,seed,epoch,latency,messages,bytes,max_depth,aba_rounds";

impl RunMetrics {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("metrics serialize")
    }

    /// One CSV row per epoch, without the header.
    pub fn csv_rows(&self) -> Vec<String> {
        self.epochs
            .iter()
            .map(|e| {
                format!(
                    "{},{},{},{},{},{},{},{},{},{},{}",
                    self.protocol,
                    self.n,
                    self.f,
                    self.fault_mode,
                    self.seed,
                    e.epoch,
                    e.latency,
                    e.messages,
                    e.bytes,
                    e.max_depth,
                    e.aba_rounds
                )
            })
            .collect()
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from(CSV_HEADER);
        out.push('\n');
        for row in self.csv_rows() {
            out.push_str(&row);
            out.push('\n');
        }
        out
    }
}

/// Step depths of one instance across correct replicas.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DepthSummary {
    pub epoch: u64,
    pub phase: Phase,
    pub instance: usize,
    pub replicas: usize,
    pub min: u32,
    pub median: u32,
    pub max: u32,
}

/// Per-instance depth at first delivery (RBC) or decision (ABA).
/// Instances no correct replica completed are omitted.
pub fn depth_report(metrics: &RunMetrics) -> Vec<DepthSummary> {
    let mut out = Vec::new();
    for e in &metrics.epochs {
        for (phase, table) in [(Phase::Rbc, &e.rbc_depth), (Phase::Aba, &e.aba_depth)] {
            for (instance, row) in table.iter().enumerate() {
                let mut depths: Vec<u32> = row.iter().flatten().copied().collect();
                if depths.is_empty() {
                    continue;
                }
                depths.sort_unstable();
                out.push(DepthSummary {
                    epoch: e.epoch,
                    phase,
                    instance,
                    replicas: depths.len(),
                    min: depths[0],
                    median: depths[depths.len() / 2],
                    max: depths[depths.len() - 1],
                });
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn csv_layout() {
        let mut m = RunMetrics {
            protocol: "mib5".into(),
            n: 6,
            f: 1,
            fault_mode: "none".into(),
            seed: 4,
            ..RunMetrics::default()
        };
        let mut e = EpochMetrics::new(0, 6);
        e.latency = 7;
        e.messages = 100;
        e.bytes = 2000;
        e.max_depth = 3;
        m.epochs.push(e);
        let csv = m.to_csv();
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines[0], CSV_HEADER);
        assert_eq!(lines[1], "mib5,6,1,none,4,0,7,100,2000,3,0");
        let back: RunMetrics = serde_json::from_str(&m.to_json()).unwrap();
        assert_eq!(back, m);
    }

    #[test]
    fn depth_summary() {
        let mut e = EpochMetrics::new(0, 3);
        e.rbc_depth[1] = vec![Some(2), Some(4), Some(3)];
        e.aba_depth[0] = vec![Some(1), None, Some(1)];
        let m = RunMetrics {
            epochs: vec![e],
            ..RunMetrics::default()
        };
        let r = depth_report(&m);
        assert_eq!(r.len(), 2);
        assert_eq!(
            (r[0].phase, r[0].instance, r[0].min, r[0].median, r[0].max),
            (Phase::Rbc, 1, 2, 3, 4)
        );
        assert_eq!((r[1].phase, r[1].replicas, r[1].max), (Phase::Aba, 2, 1));
    }
}
