use std::collections::BTreeSet;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::aba::AbaMessage;
use crate::types::{Deployment, MessageEnvelope, Payload, ReplicaId};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FaultMode {
    None,
    Crash,
    ByzAba,
    ByzRbc,
}

impl FaultMode {
    pub const ALL: [FaultMode; 4] = [
        FaultMode::None,
        FaultMode::Crash,
        FaultMode::ByzAba,
        FaultMode::ByzRbc,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            FaultMode::None => "none",
            FaultMode::Crash => "crash",
            FaultMode::ByzAba => "byz-aba",
            FaultMode::ByzRbc => "byz-rbc",
        }
    }
}

impl fmt::Display for FaultMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for FaultMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        FaultMode::ALL
            .into_iter()
            .find(|m| m.as_str() == s.trim())
            .ok_or_else(|| {
                format!("unknown fault mode {s:?}; valid modes: none, crash, byz-aba, byz-rbc")
            })
    }
}

/// Which replicas misbehave and how. A replica in several sets follows
/// the strongest fault: a crash silences it entirely.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct FaultPlan {
    pub crashed: BTreeSet<ReplicaId>,
    pub byz_aba: BTreeSet<ReplicaId>,
    pub byz_rbc: BTreeSet<ReplicaId>,
    /// Virtual time at which crashed replicas stop; 0 means they never start.
    pub crash_time: u64,
}

impl FaultPlan {
    pub fn none() -> Self {
        FaultPlan::default()
    }

    /// A single-mode plan with the given victims.
    pub fn with_mode(
        mode: FaultMode,
        victims: impl IntoIterator<Item = ReplicaId>,
        crash_time: u64,
    ) -> Self {
        let victims: BTreeSet<ReplicaId> = victims.into_iter().collect();
        let mut plan = FaultPlan {
            crash_time,
            ..FaultPlan::default()
        };
        match mode {
            FaultMode::None => {}
            FaultMode::Crash => plan.crashed = victims,
            FaultMode::ByzAba => plan.byz_aba = victims,
            FaultMode::ByzRbc => plan.byz_rbc = victims,
        }
        plan
    }

    /// The standard plan for `mode`: the last `f` replicas are victims.
    pub fn standard(mode: FaultMode, dep: &Deployment) -> Self {
        let victims = (dep.n() - dep.f()..dep.n()).map(ReplicaId::from);
        FaultPlan::with_mode(mode, victims, 0)
    }

    pub fn victims(&self) -> BTreeSet<ReplicaId> {
        self.crashed
            .iter()
            .chain(&self.byz_aba)
            .chain(&self.byz_rbc)
            .copied()
            .collect()
    }

    pub fn is_correct(&self, r: ReplicaId) -> bool {
        !self.crashed.contains(&r) && !self.byz_aba.contains(&r) && !self.byz_rbc.contains(&r)
    }

    pub fn is_crashed(&self, r: ReplicaId, now: u64) -> bool {
        self.crashed.contains(&r) && now >= self.crash_time
    }

    pub fn is_byz_aba(&self, r: ReplicaId) -> bool {
        self.byz_aba.contains(&r) && !self.crashed.contains(&r)
    }

    pub fn is_byz_rbc(&self, r: ReplicaId) -> bool {
        self.byz_rbc.contains(&r) && !self.crashed.contains(&r)
    }

    /// Label for reports: the single active mode, or "mixed".
    pub fn mode_label(&self) -> String {
        let modes: Vec<FaultMode> = [
            (FaultMode::Crash, &self.crashed),
            (FaultMode::ByzAba, &self.byz_aba),
            (FaultMode::ByzRbc, &self.byz_rbc),
        ]
        .into_iter()
        .filter(|(_, s)| !s.is_empty())
        .map(|(m, _)| m)
        .collect();
        match modes.as_slice() {
            [] => FaultMode::None.to_string(),
            [m] => m.to_string(),
            _ => "mixed".to_string(),
        }
    }

    pub fn validate(&self, dep: &Deployment) -> Result<(), String> {
        let victims = self.victims();
        if victims.len() > dep.f() {
            return Err(format!(
                "fault plan names {} victims but f = {}",
                victims.len(),
                dep.f()
            ));
        }
        if let Some(r) = victims.iter().find(|r| !dep.contains(**r)) {
            return Err(format!("fault victim {r} outside the deployment"));
        }
        Ok(())
    }
}

/// Equivocating agreement votes: the victim tells even-indexed replicas 0
/// and odd-indexed replicas 1, in the one-step phase and every `bval`.
pub(crate) fn equivocate_aba(env: &mut MessageEnvelope) {
    let value = env.receiver.index() % 2 == 1;
    if let Payload::Aba(msg) = &mut env.payload {
        match msg {
            AbaMessage::OneStep(v) => *v = value,
            AbaMessage::Bval { value: v, .. } => *v = value,
            _ => {}
        }
    }
}
