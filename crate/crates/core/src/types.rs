//! Shared domain types: replica identity, deployments, the protocol registry,
//! quorum thresholds, transactions and message envelopes.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::aba::AbaMessage;
use crate::rbc::RbcMessage;

/// Configuration errors: invalid deployments, unknown names, bad parameters.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ConfigError {
    #[error("deployment n={n}, f={f} violates resilience {resilience} (needs n >= {min})")]
    Resilience {
        n: usize,
        f: usize,
        resilience: Resilience,
        min: usize,
    },
    #[error("a deployment needs at least one replica")]
    NoReplicas,
    #[error(
        "unknown protocol {0:?}; valid names: beat, mib5, mib5a, mib5b, mib7, mib7a, mib7b, mib7c"
    )]
    UnknownProtocol(String),
    #[error("unknown threshold {0:?}; valid names: n-f, n-2f, f+1, 2f+1, n1-f, n1-2f")]
    UnknownThreshold(String),
    #[error("threshold {0:?} needs the active-set size n1")]
    MissingActiveSize(String),
    #[error("unknown RBC variant {0:?}; valid names: avid, mbc, avid-l, mbc-l")]
    UnknownRbc(String),
    #[error("replica index {index} out of range for n={n}")]
    ReplicaOutOfRange { index: usize, n: usize },
    #[error("active set of size {n1} does not fit in n={n} replicas")]
    ActiveSetTooLarge { n1: usize, n: usize },
    #[error("{0}")]
    Invalid(String),
}

/// Index of a replica `p_i`, `0 <= i < n`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ReplicaId(pub u16);

impl ReplicaId {
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

impl From<usize> for ReplicaId {
    fn from(i: usize) -> Self {
        ReplicaId(u16::try_from(i).expect("replica index fits in u16"))
    }
}

impl fmt::Display for ReplicaId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "p{}", self.0)
    }
}

/// Resilience rule relating `n` to `f`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Resilience {
    #[serde(rename = "3f+1")]
    ThreeF,
    #[serde(rename = "5f+1")]
    FiveF,
    #[serde(rename = "7f+1")]
    SevenF,
}

impl Resilience {
    pub fn factor(self) -> usize {
        match self {
            Resilience::ThreeF => 3,
            Resilience::FiveF => 5,
            Resilience::SevenF => 7,
        }
    }

    pub fn min_n(self, f: usize) -> usize {
        self.factor() * f + 1
    }

    /// Largest `f` tolerated by `n` replicas under this rule.
    pub fn max_f(self, n: usize) -> usize {
        n.saturating_sub(1) / self.factor()
    }
}

impl fmt::Display for Resilience {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}f+1", self.factor())
    }
}

/// A validated `(n, f, resilience)` triple.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Deployment {
    n: usize,
    f: usize,
    resilience: Resilience,
}

impl Deployment {
    pub fn new(n: usize, f: usize, resilience: Resilience) -> Result<Self, ConfigError> {
        if n == 0 {
            return Err(ConfigError::NoReplicas);
        }
        if n > u16::MAX as usize {
            return Err(ConfigError::Invalid(format!(
                "n={n} exceeds the supported maximum"
            )));
        }
        let min = resilience.min_n(f);
        if n < min {
            return Err(ConfigError::Resilience {
                n,
                f,
                resilience,
                min,
            });
        }
        Ok(Deployment { n, f, resilience })
    }

    /// Same-`n` study mode: the largest `f` the rule allows.
    pub fn with_n(resilience: Resilience, n: usize) -> Result<Self, ConfigError> {
        Self::new(n, resilience.max_f(n), resilience)
    }

    /// Same-`f` study mode: the smallest `n` the rule allows.
    pub fn with_f(resilience: Resilience, f: usize) -> Result<Self, ConfigError> {
        Self::new(resilience.min_n(f), f, resilience)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn f(&self) -> usize {
        self.f
    }

    pub fn resilience(&self) -> Resilience {
        self.resilience
    }

    pub fn replicas(&self) -> impl Iterator<Item = ReplicaId> + Clone {
        (0..self.n).map(ReplicaId::from)
    }

    pub fn contains(&self, id: ReplicaId) -> bool {
        id.index() < self.n
    }

    pub fn threshold(&self, t: Threshold) -> usize {
        let (n, f) = (self.n, self.f);
        match t {
            Threshold::NMinusF => n - f,
            Threshold::NMinus2F => n - 2 * f,
            Threshold::FPlus1 => f + 1,
            Threshold::TwoFPlus1 => 2 * f + 1,
            Threshold::N1MinusF { n1 } => n1 - f,
            Threshold::N1Minus2F { n1 } => n1 - 2 * f,
        }
    }
}

/// Every literal quorum size the protocols use. Protocol code never does
/// this arithmetic itself.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Threshold {
    NMinusF,
    NMinus2F,
    FPlus1,
    TwoFPlus1,
    /// `n1 - f` over an active set of size `n1`.
    N1MinusF {
        n1: usize,
    },
    /// `n1 - 2f` over an active set of size `n1`.
    N1Minus2F {
        n1: usize,
    },
}

impl Threshold {
    /// Parses a threshold name; `n1` is required for the active-set forms.
    pub fn parse(name: &str, n1: Option<usize>) -> Result<Self, ConfigError> {
        let need_n1 = || n1.ok_or_else(|| ConfigError::MissingActiveSize(name.to_string()));
        match name.trim() {
            "n-f" => Ok(Threshold::NMinusF),
            "n-2f" => Ok(Threshold::NMinus2F),
            "f+1" => Ok(Threshold::FPlus1),
            "2f+1" => Ok(Threshold::TwoFPlus1),
            "n1-f" => Ok(Threshold::N1MinusF { n1: need_n1()? }),
            "n1-2f" => Ok(Threshold::N1Minus2F { n1: need_n1()? }),
            _ => Err(ConfigError::UnknownThreshold(name.to_string())),
        }
    }
}

/// Looks up a named threshold for a deployment.
pub fn quorum_threshold(
    dep: &Deployment,
    name: &str,
    n1: Option<usize>,
) -> Result<usize, ConfigError> {
    let t = Threshold::parse(name, n1)?;
    if let Threshold::N1MinusF { n1 } | Threshold::N1Minus2F { n1 } = t {
        if n1 > dep.n() || n1 < 2 * dep.f() + 1 {
            return Err(ConfigError::ActiveSetTooLarge { n1, n: dep.n() });
        }
    }
    Ok(dep.threshold(t))
}

/// Reliable broadcast variant.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum RbcKind {
    #[serde(rename = "AVID")]
    Avid,
    #[serde(rename = "MBC")]
    Mbc,
    #[serde(rename = "AVID-L")]
    AvidL,
    #[serde(rename = "MBC-L")]
    MbcL,
}

impl RbcKind {
    pub const ALL: [RbcKind; 4] = [RbcKind::Avid, RbcKind::Mbc, RbcKind::AvidL, RbcKind::MbcL];

    /// Minimum resilience rule the variant needs on its own.
    pub fn resilience(self) -> Resilience {
        match self {
            RbcKind::Avid => Resilience::ThreeF,
            RbcKind::Mbc => Resilience::FiveF,
            RbcKind::AvidL => Resilience::FiveF,
            RbcKind::MbcL => Resilience::SevenF,
        }
    }

    pub fn has_learners(self) -> bool {
        matches!(self, RbcKind::AvidL | RbcKind::MbcL)
    }

    /// Size of the active set for a fault bound `f` and `n` replicas.
    pub fn active_size(self, n: usize, f: usize) -> usize {
        match self {
            RbcKind::Avid | RbcKind::Mbc => n,
            RbcKind::AvidL => 3 * f + 1,
            RbcKind::MbcL => 5 * f + 1,
        }
    }
}

impl fmt::Display for RbcKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            RbcKind::Avid => "AVID",
            RbcKind::Mbc => "MBC",
            RbcKind::AvidL => "AVID-L",
            RbcKind::MbcL => "MBC-L",
        })
    }
}

impl FromStr for RbcKind {
    type Err = ConfigError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "avid" => Ok(RbcKind::Avid),
            "mbc" => Ok(RbcKind::Mbc),
            "avid-l" | "avidl" => Ok(RbcKind::AvidL),
            "mbc-l" | "mbcl" => Ok(RbcKind::MbcL),
            _ => Err(ConfigError::UnknownRbc(s.to_string())),
        }
    }
}

/// Binary agreement composition.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum AbaKind {
    #[serde(rename = "cobalt")]
    Cobalt,
    #[serde(rename = "w1s+cobalt")]
    W1sCobalt,
    #[serde(rename = "s1s+cobalt")]
    S1sCobalt,
}

impl AbaKind {
    pub fn one_step(self) -> bool {
        !matches!(self, AbaKind::Cobalt)
    }
}

impl fmt::Display for AbaKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            AbaKind::Cobalt => "cobalt",
            AbaKind::W1sCobalt => "w1s+cobalt",
            AbaKind::S1sCobalt => "s1s+cobalt",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ProtocolName {
    Beat,
    Mib5,
    Mib5a,
    Mib5b,
    Mib7,
    Mib7a,
    Mib7b,
    Mib7c,
}

impl ProtocolName {
    pub const ALL: [ProtocolName; 8] = [
        ProtocolName::Beat,
        ProtocolName::Mib5,
        ProtocolName::Mib5a,
        ProtocolName::Mib5b,
        ProtocolName::Mib7,
        ProtocolName::Mib7a,
        ProtocolName::Mib7b,
        ProtocolName::Mib7c,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            ProtocolName::Beat => "beat",
            ProtocolName::Mib5 => "mib5",
            ProtocolName::Mib5a => "mib5a",
            ProtocolName::Mib5b => "mib5b",
            ProtocolName::Mib7 => "mib7",
            ProtocolName::Mib7a => "mib7a",
            ProtocolName::Mib7b => "mib7b",
            ProtocolName::Mib7c => "mib7c",
        }
    }

    pub fn spec(self) -> ProtocolSpec {
        use AbaKind::*;
        use RbcKind::*;
        use Resilience::*;
        let (rbc, aba, resilience) = match self {
            ProtocolName::Beat => (Avid, Cobalt, ThreeF),
            ProtocolName::Mib5 => (Mbc, W1sCobalt, FiveF),
            ProtocolName::Mib5a => (Avid, W1sCobalt, FiveF),
            ProtocolName::Mib5b => (AvidL, W1sCobalt, FiveF),
            ProtocolName::Mib7 => (MbcL, S1sCobalt, SevenF),
            ProtocolName::Mib7a => (Avid, S1sCobalt, SevenF),
            ProtocolName::Mib7b => (Mbc, S1sCobalt, SevenF),
            ProtocolName::Mib7c => (AvidL, S1sCobalt, SevenF),
        };
        ProtocolSpec {
            name: self,
            rbc,
            aba,
            resilience,
        }
    }
}

impl fmt::Display for ProtocolName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ProtocolName {
    type Err = ConfigError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let key = s.trim().to_ascii_lowercase();
        ProtocolName::ALL
            .into_iter()
            .find(|p| p.as_str() == key)
            .ok_or_else(|| ConfigError::UnknownProtocol(s.to_string()))
    }
}

/// One registry row: which RBC, ABA and resilience rule a protocol runs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ProtocolSpec {
    pub name: ProtocolName,
    pub rbc: RbcKind,
    pub aba: AbaKind,
    pub resilience: Resilience,
}

impl ProtocolSpec {
    /// Validates `(n, f)` against this protocol's resilience rule.
    pub fn deployment(&self, n: usize, f: usize) -> Result<Deployment, ConfigError> {
        Deployment::new(n, f, self.resilience)
    }
}

/// Looks up a protocol by name.
pub fn protocol_registry(name: &str) -> Result<ProtocolSpec, ConfigError> {
    name.parse::<ProtocolName>().map(ProtocolName::spec)
}

/// A client transaction. The payload is opaque.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Transaction {
    pub id: u64,
    pub payload: Vec<u8>,
}

/// Causal step depth carried by every envelope.
///
/// `step` counts hops within a single RBC or ABA instance (local input is
/// depth 0). `chain` counts hops within the whole epoch, so an ABA input
/// inherits the depth of the RBC delivery that triggered it.
#[derive(
    Debug, Clone, Copy, Default, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize,
)]
pub struct Depth {
    pub step: u32,
    pub chain: u32,
}

impl Depth {
    pub const ZERO: Depth = Depth { step: 0, chain: 0 };

    /// A local input whose epoch-level causal history has depth `chain`.
    pub fn local(chain: u32) -> Self {
        Depth { step: 0, chain }
    }

    pub fn join(self, other: Depth) -> Depth {
        Depth {
            step: self.step.max(other.step),
            chain: self.chain.max(other.chain),
        }
    }

    /// Depth of a message sent in reaction to an event of depth `self`.
    pub fn next(self) -> Depth {
        Depth {
            step: self.step + 1,
            chain: self.chain + 1,
        }
    }

    pub fn join_all<I: IntoIterator<Item = Depth>>(it: I) -> Depth {
        it.into_iter().fold(Depth::ZERO, Depth::join)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Phase {
    Rbc,
    Aba,
}

/// Routes an envelope to the `index`-th RBC or ABA instance of an epoch.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct InstanceTag {
    pub phase: Phase,
    pub index: u16,
}

impl InstanceTag {
    pub fn rbc(index: usize) -> Self {
        InstanceTag {
            phase: Phase::Rbc,
            index: index as u16,
        }
    }

    pub fn aba(index: usize) -> Self {
        InstanceTag {
            phase: Phase::Aba,
            index: index as u16,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Payload {
    Rbc(RbcMessage),
    Aba(AbaMessage),
}

impl Payload {
    pub fn encode(&self) -> Vec<u8> {
        match self {
            Payload::Rbc(m) => m.encode(),
            Payload::Aba(m) => m.encode().to_vec(),
        }
    }

    pub fn encoded_len(&self) -> usize {
        match self {
            Payload::Rbc(m) => m.encoded_len(),
            Payload::Aba(_) => AbaMessage::ENCODED_LEN,
        }
    }
}

/// Authenticated point-to-point message.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MessageEnvelope {
    pub sender: ReplicaId,
    pub receiver: ReplicaId,
    pub epoch: u64,
    pub instance: InstanceTag,
    pub payload: Payload,
    pub depth: Depth,
}

/// A message a state machine wants sent.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Outgoing<M> {
    pub to: ReplicaId,
    pub message: M,
    pub depth: Depth,
}

/// Misbehaviour observed while handling a message. The message is dropped.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum FaultKind {
    InvalidProof,
    WrongLeafIndex,
    NotFromSender,
    NotActive,
    BadActiveSet,
    ConflictingRoot,
    UnexpectedKind,
    InvalidValue,
    Duplicate,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Fault {
    pub from: ReplicaId,
    pub kind: FaultKind,
}

/// Result of feeding one input or message to a state machine.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Step<M, O> {
    pub messages: Vec<Outgoing<M>>,
    pub output: Option<O>,
    pub faults: Vec<Fault>,
}

impl<M, O> Default for Step<M, O> {
    fn default() -> Self {
        Step {
            messages: Vec::new(),
            output: None,
            faults: Vec::new(),
        }
    }
}

impl<M, O> Step<M, O> {
    pub fn fault(from: ReplicaId, kind: FaultKind) -> Self {
        Step {
            messages: Vec::new(),
            output: None,
            faults: vec![Fault { from, kind }],
        }
    }

    pub fn extend(&mut self, other: Step<M, O>) {
        self.messages.extend(other.messages);
        self.faults.extend(other.faults);
        if other.output.is_some() {
            debug_assert!(self.output.is_none(), "two outputs in one step");
            self.output = other.output;
        }
    }
}
