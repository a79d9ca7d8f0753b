//! Experiment configuration files.
//!
//! A config is TOML: top-level keys describe the run matrix and optional
//! `[protocol.<name>]` sections override batch, epochs or transaction size
//! for a single protocol.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use mib_core::netsim::{DelayPolicy, FaultMode, SimConfig};
use mib_core::types::ProtocolName;
use serde::{Deserialize, Serialize};

use crate::error::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    #[default]
    Json,
    Csv,
}

/// Seeds as an explicit list or a half-open range.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Seeds {
    List(Vec<u64>),
    Range { start: u64, end: u64 },
}

impl Default for Seeds {
    fn default() -> Self {
        Seeds::List(vec![0])
    }
}

impl Seeds {
    pub fn expand(&self) -> Vec<u64> {
        match self {
            Seeds::List(v) => v.clone(),
            Seeds::Range { start, end } => (*start..*end).collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub path: Option<PathBuf>,
    #[serde(default)]
    pub format: Format,
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProtocolOverride {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub batch: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub epochs: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tx_size: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    /// Protocol names, or `"all"` for the whole registry.
    pub protocols: Vec<String>,
    /// Same-n study: every protocol runs at this `n` with its largest `f`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n: Option<usize>,
    /// Same-f study: every protocol runs at its smallest `n` for this `f`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub f: Option<usize>,
    /// Global batch size; defaults to `8n`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub batch: Option<usize>,
    #[serde(default = "default_epochs")]
    pub epochs: u64,
    #[serde(default)]
    pub seeds: Seeds,
    #[serde(default = "default_faults")]
    pub faults: Vec<FaultMode>,
    #[serde(default = "default_delay")]
    pub delay: DelayPolicy,
    #[serde(default = "default_tx_size")]
    pub tx_size: usize,
    #[serde(default)]
    pub output: OutputConfig,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub protocol: BTreeMap<String, ProtocolOverride>,
}

fn default_epochs() -> u64 {
    1
}

fn default_faults() -> Vec<FaultMode> {
    vec![FaultMode::None]
}

fn default_delay() -> DelayPolicy {
    DelayPolicy::Uniform { lo: 1, hi: 10 }
}

fn default_tx_size() -> usize {
    250
}

fn field(field: &str, reason: impl Into<String>) -> CliError {
    CliError::Field {
        field: field.to_string(),
        reason: reason.into(),
    }
}

impl ExperimentConfig {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|source| CliError::Read {
            path: path.to_path_buf(),
            source,
        })?;
        let cfg = Self::parse(&text).map_err(|e| e.at(path))?;
        Ok(cfg)
    }

    /// Parses and validates a config.
    pub fn parse(text: &str) -> Result<Self, CliError> {
        let cfg: ExperimentConfig =
            toml::from_str(text).map_err(|e| CliError::Parse(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn protocol_names(&self) -> Result<Vec<ProtocolName>, CliError> {
        let mut out = Vec::new();
        for name in &self.protocols {
            if name.trim().eq_ignore_ascii_case("all") {
                out.extend(ProtocolName::ALL);
            } else {
                out.push(
                    name.parse()
                        .map_err(|e| field("protocols", format!("{e}")))?,
                );
            }
        }
        out.sort();
        out.dedup();
        Ok(out)
    }

    pub fn validate(&self) -> Result<(), CliError> {
        if self.protocols.is_empty() {
            return Err(field("protocols", "at least one protocol name is required"));
        }
        let names = self.protocol_names()?;
        match (self.n, self.f) {
            (Some(_), Some(_)) => {
                return Err(field("n", "give exactly one of `n` and `f`, not both"))
            }
            (None, None) => return Err(field("n", "give exactly one of `n` and `f`")),
            _ => {}
        }
        for key in self.protocol.keys() {
            let p: ProtocolName = key
                .parse()
                .map_err(|e| field(&format!("protocol.{key}"), format!("{e}")))?;
            if !names.contains(&p) {
                return Err(field(
                    &format!("protocol.{key}"),
                    "section for a protocol that is not run",
                ));
            }
        }
        if self.epochs == 0 {
            return Err(field("epochs", "must be at least 1"));
        }
        if self.batch == Some(0) {
            return Err(field("batch", "must be at least 1"));
        }
        if self.tx_size == 0 {
            return Err(field("tx_size", "must be at least 1"));
        }
        if self.seeds.expand().is_empty() {
            return Err(field("seeds", "the seed list is empty"));
        }
        if self.faults.is_empty() {
            return Err(field("faults", "at least one fault mode is required"));
        }
        self.delay.validate().map_err(|e| field("delay", e))?;
        for p in names {
            let sim = self.base_config(p);
            p.spec().deployment(sim.n, sim.f).map_err(|e| {
                field(
                    if self.n.is_some() { "n" } else { "f" },
                    format!("{p}: {e}"),
                )
            })?;
        }
        Ok(())
    }

    fn base_config(&self, p: ProtocolName) -> SimConfig {
        let mut sim = match (self.n, self.f) {
            (Some(n), _) => SimConfig::same_n(p, n),
            (_, Some(f)) => SimConfig::same_f(p, f),
            (None, None) => SimConfig::same_f(p, 1),
        };
        let o = self.protocol.get(p.as_str()).cloned().unwrap_or_default();
        let batch = o.batch.or(self.batch).unwrap_or(8 * sim.n);
        sim.batch_size = batch;
        sim.buffer = batch;
        sim.epochs = o.epochs.unwrap_or(self.epochs);
        sim.tx_size = o.tx_size.unwrap_or(self.tx_size);
        sim.delay = self.delay;
        sim
    }

    /// The run matrix in protocol, fault mode, seed order.
    pub fn expand(&self) -> Result<Vec<SimConfig>, CliError> {
        let mut out = Vec::new();
        for p in self.protocol_names()? {
            for &mode in &self.faults {
                for seed in self.seeds.expand() {
                    let sim = self
                        .base_config(p)
                        .with_seed(seed)
                        .with_fault_mode(mode)
                        .map_err(|e| field("faults", e.to_string()))?;
                    out.push(sim);
                }
            }
        }
        Ok(out)
    }
}
