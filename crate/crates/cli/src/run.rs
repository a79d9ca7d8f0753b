use std::fmt::Write as _;

use mib_core::netsim::{check_safety, run, RunMetrics, SimConfig, SimError, CSV_HEADER};
use rayon::prelude::*;
use serde::Serialize;

use crate::config::Format;
use crate::error::{EXIT_LIVENESS, EXIT_OK, EXIT_SAFETY};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Status {
    Ok,
    Safety,
    Liveness,
}

/// One cell of the run matrix.
#[derive(Debug, Clone, Serialize)]
pub struct RunRecord {
    pub protocol: String,
    pub n: usize,
    pub f: usize,
    pub fault_mode: String,
    pub seed: u64,
    pub status: Status,
    pub violations: Vec<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub metrics: Option<RunMetrics>,
}

pub fn run_one(cfg: &SimConfig) -> RunRecord {
    let mut rec = RunRecord {
        protocol: cfg.protocol.to_string(),
        n: cfg.n,
        f: cfg.f,
        fault_mode: cfg.faults.mode_label(),
        seed: cfg.seed,
        status: Status::Ok,
        violations: Vec::new(),
        error: None,
        metrics: None,
    };
    match run(cfg) {
        Ok(out) => {
            let violations = check_safety(&out);
            if violations.iter().any(|v| v.property() != "liveness") {
                rec.status = Status::Safety;
            } else if !violations.is_empty() {
                rec.status = Status::Liveness;
            }
            rec.violations = violations
                .iter()
                .map(|v| format!("{}: {v}", v.property()))
                .collect();
            rec.metrics = Some(out.metrics);
        }
        Err(e @ SimError::Liveness { .. }) => {
            rec.status = Status::Liveness;
            rec.error = Some(e.to_string());
        }
        Err(e) => {
            rec.status = Status::Liveness;
            rec.error = Some(format!("run rejected: {e}"));
        }
    }
    rec
}

/// Runs the matrix in parallel. Records come back in matrix order.
pub fn run_matrix(cfgs: &[SimConfig]) -> Vec<RunRecord> {
    cfgs.par_iter().map(run_one).collect()
}

/// Safety violations dominate liveness failures.
pub fn exit_code(records: &[RunRecord]) -> i32 {
    if records.iter().any(|r| r.status == Status::Safety) {
        EXIT_SAFETY
    } else if records.iter().any(|r| r.status == Status::Liveness) {
        EXIT_LIVENESS
    } else {
        EXIT_OK
    }
}

pub fn render(records: &[RunRecord], format: Format) -> String {
    match format {
        Format::Json => {
            let mut s = serde_json::to_string_pretty(records).expect("records serialize");
            s.push('\n');
            s
        }
        Format::Csv => {
            let mut s = String::from(CSV_HEADER);
            s.push('\n');
            for row in records
                .iter()
                .filter_map(|r| r.metrics.as_ref())
                .flat_map(|m| m.csv_rows())
            {
                s.push_str(&row);
                s.push('\n');
            }
            s
        }
    }
}

/// Human-readable per-run summary.
pub fn summary(records: &[RunRecord]) -> String {
    let mut s = String::new();
    let _ = writeln!(
        s,
        "{:<8} {:>4} {:>3} {:<8} {:>6} {:>10} {:>9} {:>6}  status",
        "protocol", "n", "f", "faults", "seed", "messages", "max-depth", "rounds"
    );
    for r in records {
        let (messages, depth, rounds) = r
            .metrics
            .as_ref()
            .map(|m| {
                (
                    m.total_messages.to_string(),
                    m.epochs
                        .iter()
                        .map(|e| e.max_depth)
                        .max()
                        .unwrap_or(0)
                        .to_string(),
                    m.epochs
                        .iter()
                        .map(|e| e.aba_rounds)
                        .max()
                        .unwrap_or(0)
                        .to_string(),
                )
            })
            .unwrap_or_else(|| ("-".into(), "-".into(), "-".into()));
        let status = match r.status {
            Status::Ok => "ok".to_string(),
            Status::Safety => format!(
                "SAFETY {}",
                r.violations.first().map(String::as_str).unwrap_or("")
            ),
            Status::Liveness => format!(
                "LIVENESS {}",
                r.error
                    .as_deref()
                    .or(r.violations.first().map(String::as_str))
                    .unwrap_or("")
            ),
        };
        let _ = writeln!(
            s,
            "{:<8} {:>4} {:>3} {:<8} {:>6} {:>10} {:>9} {:>6}  {status}",
            r.protocol, r.n, r.f, r.fault_mode, r.seed, messages, depth, rounds
        );
    }
    s
}
