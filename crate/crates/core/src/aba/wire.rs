//! Four-byte ABA payloads: `tag | round (u16 BE) | bit or bitset`.

use std::fmt;

use thiserror::Error;

/// A subset of `{0, 1}`: bit 0 marks value 0, bit 1 marks value 1.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct BinSet(u8);

impl BinSet {
    pub const EMPTY: BinSet = BinSet(0);
    pub const BOTH: BinSet = BinSet(0b11);

    pub fn single(v: bool) -> Self {
        BinSet(1 << u8::from(v))
    }

    pub fn from_bits(bits: u8) -> Option<Self> {
        (bits <= 0b11).then_some(BinSet(bits))
    }

    pub fn bits(self) -> u8 {
        self.0
    }

    pub fn contains(self, v: bool) -> bool {
        self.0 & (1 << u8::from(v)) != 0
    }

    pub fn insert(&mut self, v: bool) {
        self.0 |= 1 << u8::from(v);
    }

    pub fn union(self, other: BinSet) -> BinSet {
        BinSet(self.0 | other.0)
    }

    pub fn is_subset(self, other: BinSet) -> bool {
        self.0 & !other.0 == 0
    }

    pub fn is_empty(self) -> bool {
        self.0 == 0
    }

    /// The value if this is a singleton.
    pub fn single_value(self) -> Option<bool> {
        match self.0 {
            0b01 => Some(false),
            0b10 => Some(true),
            _ => None,
        }
    }
}

impl fmt::Display for BinSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.0 {
            0 => f.write_str("{}"),
            0b01 => f.write_str("{0}"),
            0b10 => f.write_str("{1}"),
            _ => f.write_str("{0,1}"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum AbaMessage {
    /// One-step phase vote.
    OneStep(bool),
    Bval {
        round: u16,
        value: bool,
    },
    Aux {
        round: u16,
        value: bool,
    },
    Conf {
        round: u16,
        values: BinSet,
    },
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum AbaWireError {
    #[error("ABA payload must be 4 bytes, got {0}")]
    Length(usize),
    #[error("unknown ABA tag {0}")]
    UnknownTag(u8),
    #[error("invalid ABA value byte {0:#04x}")]
    BadValue(u8),
}

impl AbaMessage {
    pub const ENCODED_LEN: usize = 4;

    pub fn round(&self) -> u16 {
        match *self {
            AbaMessage::OneStep(_) => 0,
            AbaMessage::Bval { round, .. }
            | AbaMessage::Aux { round, .. }
            | AbaMessage::Conf { round, .. } => round,
        }
    }

    pub fn encode(&self) -> [u8; 4] {
        let (tag, round, byte) = match *self {
            AbaMessage::OneStep(v) => (0, 0, u8::from(v)),
            AbaMessage::Bval { round, value } => (1, round, u8::from(value)),
            AbaMessage::Aux { round, value } => (2, round, u8::from(value)),
            AbaMessage::Conf { round, values } => (3, round, values.bits()),
        };
        let r = round.to_be_bytes();
        [tag, r[0], r[1], byte]
    }

    pub fn decode(bytes: &[u8]) -> Result<Self, AbaWireError> {
        let [tag, r0, r1, byte]: [u8; 4] = bytes
            .try_into()
            .map_err(|_| AbaWireError::Length(bytes.len()))?;
        let round = u16::from_be_bytes([r0, r1]);
        let bit = || match byte {
            0 => Ok(false),
            1 => Ok(true),
            b => Err(AbaWireError::BadValue(b)),
        };
        Ok(match tag {
            0 => AbaMessage::OneStep(bit()?),
            1 => AbaMessage::Bval {
                round,
                value: bit()?,
            },
            2 => AbaMessage::Aux {
                round,
                value: bit()?,
            },
            3 => AbaMessage::Conf {
                round,
                values: BinSet::from_bits(byte).ok_or(AbaWireError::BadValue(byte))?,
            },
            t => return Err(AbaWireError::UnknownTag(t)),
        })
    }
}
