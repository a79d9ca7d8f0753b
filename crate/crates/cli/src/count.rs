use std::fmt::Write as _;

use mib_core::rbc::{analytic_message_count, measure_failure_free, RbcConfig};
use mib_core::types::{Deployment, ProtocolName, RbcKind, ReplicaId, Resilience};
use serde::Serialize;

use crate::config::Format;
use crate::error::CliError;

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct CountRow {
    pub variant: String,
    pub selected: bool,
    pub active: usize,
    pub analytic: u64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub measured: Option<u64>,
}

impl CountRow {
    pub fn matches(&self) -> bool {
        self.measured.is_none_or(|m| m == self.analytic)
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct CountReport {
    pub n: usize,
    pub f: usize,
    pub resilience: String,
    pub rows: Vec<CountRow>,
}

/// Resolves a protocol or RBC variant name to its resilience rule and
/// the variant to highlight.
fn resolve(name: &str) -> Result<(Resilience, RbcKind), CliError> {
    if let Ok(p) = name.parse::<ProtocolName>() {
        let spec = p.spec();
        return Ok((spec.resilience, spec.rbc));
    }
    name.parse::<RbcKind>()
        .map(|v| (v.resilience(), v))
        .map_err(|_| CliError::Field {
            field: "protocol".into(),
            reason: format!(
                "{name:?} is neither a protocol nor an RBC variant (avid, mbc, avid-l, mbc-l)"
            ),
        })
}

pub fn count(
    name: &str,
    n: Option<usize>,
    f: Option<usize>,
    measure: bool,
) -> Result<CountReport, CliError> {
    let (resilience, selected) = resolve(name)?;
    let dep = match (n, f) {
        (Some(n), None) => Deployment::with_n(resilience, n),
        (None, Some(f)) => Deployment::with_f(resilience, f),
        _ => {
            return Err(CliError::Field {
                field: "n".into(),
                reason: "give exactly one of --n and --f".into(),
            })
        }
    }
    .map_err(|e| CliError::Field {
        field: if n.is_some() { "n" } else { "f" }.into(),
        reason: e.to_string(),
    })?;

    let mut rows = Vec::new();
    for variant in RbcKind::ALL {
        // A variant fits when the deployment meets its own resilience rule.
        if dep.n() < variant.resilience().min_n(dep.f())
            || RbcConfig::new(dep, ReplicaId(0), variant).is_err()
        {
            continue;
        }
        let measured = if measure {
            let m =
                measure_failure_free(dep, ReplicaId(0), variant, b"count probe").map_err(|e| {
                    CliError::Field {
                        field: "protocol".into(),
                        reason: e.to_string(),
                    }
                })?;
            Some(m.messages)
        } else {
            None
        };
        rows.push(CountRow {
            variant: variant.to_string(),
            selected: variant == selected,
            active: variant.active_size(dep.n(), dep.f()),
            analytic: analytic_message_count(variant, &dep),
            measured,
        });
    }
    Ok(CountReport {
        n: dep.n(),
        f: dep.f(),
        resilience: resilience.to_string(),
        rows,
    })
}

pub fn render(report: &CountReport, format: Option<Format>) -> String {
    match format {
        Some(Format::Json) => {
            let mut s = serde_json::to_string_pretty(report).expect("report serializes");
            s.push('\n');
            s
        }
        Some(Format::Csv) => {
            let mut s = String::from("variant,n,f,active,analytic,measured,match\n");
            for r in &report.rows {
                let _ = writeln!(
                    s,
                    "{},{},{},{},{},{},{}",
                    r.variant,
                    report.n,
                    report.f,
                    r.active,
                    r.analytic,
                    r.measured.map(|m| m.to_string()).unwrap_or_default(),
                    r.matches()
                );
            }
            s
        }
        None => {
            let mut s = String::new();
            let measured = report.rows.iter().any(|r| r.measured.is_some());
            let _ = writeln!(
                s,
                "n = {}, f = {}, resilience {}",
                report.n, report.f, report.resilience
            );
            let _ = write!(s, "  {:<8} {:>6} {:>9}", "variant", "active", "analytic");
            if measured {
                let _ = write!(s, " {:>9}  match", "measured");
            }
            s.push('\n');
            for r in &report.rows {
                let mark = if r.selected { '*' } else { ' ' };
                let _ = write!(
                    s,
                    "{mark} {:<8} {:>6} {:>9}",
                    r.variant, r.active, r.analytic
                );
                if let Some(m) = r.measured {
                    let _ = write!(
                        s,
                        " {m:>9}  {}",
                        if r.matches() { "match" } else { "MISMATCH" }
                    );
                }
                s.push('\n');
            }
            s
        }
    }
}
