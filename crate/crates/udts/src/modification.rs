//! Memory modifications: state transitions after which a region can no
//! longer be proven unchanged, tagged with the error class they were
//! generated for.
//!
//! Payloads are self-contained for replay. Bit copies are resolved against a
//! structure at application time, because what a bitwise copy transports
//! depends on which structure the copied object was encoded with.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::memory::{Cell, Memory, MemoryError};
use crate::semantics::{SemanticStructure, SemanticsError, Value};
use crate::space::{Addr, ByteValue};

/// One of the five modification classes:
/// 1 unspecified contents, 2 constant bytes, 3 foreign object
/// representation, 4 slice of object representations, 5 bitwise copy.
#[derive(
    Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize,
)]
#[serde(transparent)]
pub struct ErrorClassId(u8);

impl ErrorClassId {
    pub const UNSPECIFIED: ErrorClassId = ErrorClassId(1);
    pub const CONSTANT: ErrorClassId = ErrorClassId(2);
    pub const FOREIGN_REPRESENTATION: ErrorClassId = ErrorClassId(3);
    pub const SLICE: ErrorClassId = ErrorClassId(4);
    pub const BITWISE_COPY: ErrorClassId = ErrorClassId(5);

    pub const ALL: [ErrorClassId; 5] = [
        Self::UNSPECIFIED,
        Self::CONSTANT,
        Self::FOREIGN_REPRESENTATION,
        Self::SLICE,
        Self::BITWISE_COPY,
    ];

    pub fn new(id: u8) -> Option<Self> {
        (1..=5).contains(&id).then_some(ErrorClassId(id))
    }

    pub fn get(&self) -> u8 {
        self.0
    }
}

impl std::fmt::Display for ErrorClassId {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// Half-open address interval `[start, end)`, serialized as `[start, end]`.
#[derive(
    Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize,
)]
pub struct Span(pub Addr, pub Addr);

impl Span {
    pub fn start(&self) -> Addr {
        self.0
    }

    pub fn end(&self) -> Addr {
        self.1
    }

    pub fn len(&self) -> usize {
        self.1.saturating_sub(self.0)
    }

    pub fn is_empty(&self) -> bool {
        self.1 <= self.0
    }

    pub fn contains(&self, a: Addr) -> bool {
        self.0 <= a && a < self.1
    }

    pub fn overlaps(&self, other: &Span) -> bool {
        self.0 < other.1 && other.0 < self.1
    }
}

/// Bit position within a target range: bit `bit_index` of the byte at
/// `byte_offset` from the range start.
#[derive(
    Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize,
)]
pub struct BitPos {
    pub byte_offset: usize,
    pub bit_index: u8,
}

/// One fragment of a slice write: which structure encoded which value (at
/// which address, for address-dependent encodings).
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RepPart {
    pub structure: String,
    pub value: Value,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub source_addr: Option<Addr>,
    /// Length of this fragment's full representation.
    pub rep_len: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Payload {
    /// Class 1: the range becomes indeterminate.
    UnknownFill,
    /// Class 2: every byte of the range becomes `byte`.
    ConstantFill { byte: ByteValue },
    /// Class 3: a complete foreign object representation, precomputed at
    /// generation time since it does not depend on the reader's choice.
    RepresentationWrite {
        structure: String,
        value: Value,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        source_addr: Option<Addr>,
        bytes: Vec<ByteValue>,
    },
    /// Class 4: a window of a concatenation of object representations.
    SliceWrite { parts: Vec<RepPart>, offset: usize, bytes: Vec<ByteValue> },
    /// Class 5: selected bits of an object representation of the reader's
    /// own type. The bytes are resolved against the chosen structure when
    /// the modification is applied.
    BitCopy {
        source_type: String,
        structure: String,
        value: Value,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        source_addr: Option<Addr>,
        bits: Vec<BitPos>,
    },
}

#[derive(Debug, Error)]
pub enum ApplyError {
    #[error(transparent)]
    Memory(#[from] MemoryError),
    #[error(transparent)]
    Semantics(#[from] SemanticsError),
    #[error("payload bytes have length {got}, target range has length {want}")]
    PayloadLength { want: usize, got: usize },
    #[error("bit copy needs a source structure for type {0}")]
    MissingSource(String),
    #[error("bit position {byte_offset}.{bit_index} outside the target range")]
    BitOutsideRange { byte_offset: usize, bit_index: u8 },
}

/// A generated state transition in one of the five error classes.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MemoryModification {
    pub class: ErrorClassId,
    pub range: Span,
    pub payload: Payload,
}

impl MemoryModification {
    /// Apply the modification to a snapshot. `class5_source` must name the
    /// structure the copied object was encoded with (the chosen structure
    /// for the payload's source type); it is ignored by other payloads.
    pub fn apply(
        &self,
        m: &Memory,
        class5_source: Option<&SemanticStructure>,
    ) -> Result<Memory, ApplyError> {
        let len = self.range.len();
        if self.range.end() > m.size() {
            return Err(MemoryError::OutOfRange {
                start: self.range.start(),
                end: self.range.end(),
                size: m.size(),
            }
            .into());
        }
        match &self.payload {
            Payload::UnknownFill => {
                Ok(m.write(self.range.start(), &vec![Cell::Unknown; len])?)
            }
            Payload::ConstantFill { byte } => {
                Ok(m.write_bytes(self.range.start(), &vec![*byte; len])?)
            }
            Payload::RepresentationWrite { bytes, .. }
            | Payload::SliceWrite { bytes, .. } => {
                if bytes.len() != len {
                    return Err(ApplyError::PayloadLength { want: len, got: bytes.len() });
                }
                Ok(m.write_bytes(self.range.start(), bytes)?)
            }
            Payload::BitCopy { source_type, value, source_addr, bits, .. } => {
                let source = class5_source
                    .ok_or_else(|| ApplyError::MissingSource(source_type.clone()))?;
                let rep = source.encode(value, *source_addr)?;
                let mut next = m.clone();
                for pos in bits {
                    if pos.byte_offset >= len
                        || pos.byte_offset >= rep.bytes.len()
                        || pos.bit_index >= m.space().bits_per_byte()
                    {
                        return Err(ApplyError::BitOutsideRange {
                            byte_offset: pos.byte_offset,
                            bit_index: pos.bit_index,
                        });
                    }
                    let bit = m.space().bit_of(rep.bytes[pos.byte_offset], pos.bit_index);
                    let target = crate::memory::BitAddress::new(
                        self.range.start() + pos.byte_offset,
                        pos.bit_index,
                    );
                    next = next.bit_write(target, bit)?;
                }
                Ok(next)
            }
        }
    }
}
