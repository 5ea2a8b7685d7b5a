//! Byte universe configuration: how many distinct values a memory cell can
//! hold, and how many bits address one cell.
//!
//! Realistic runs use radix 256; exhaustive desk-scale checks use radix 4 so
//! that whole byte-list spaces can be enumerated.

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Byte addresses into a `Memory`.
pub type Addr = usize;

/// A single bit value, 0 or 1.
pub type Bit = u8;

#[derive(Debug, Error, PartialEq, Eq)]
#[error("radix must be at least 2, got {0}")]
pub struct RadixError(pub u32);

/// One value of a memory cell, in `[0, radix)`.
#[derive(
    Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize,
)]
#[serde(transparent)]
pub struct ByteValue(pub u32);

impl std::fmt::Display for ByteValue {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// The byte universe: `radix` distinct cell values, `ceil(log2(radix))` bits
/// per cell.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ByteSpace {
    radix: u32,
    bits_per_byte: u8,
}

impl ByteSpace {
    pub fn new(radix: u32) -> Result<Self, RadixError> {
        if radix < 2 {
            return Err(RadixError(radix));
        }
        let bits_per_byte = (32 - (radix - 1).leading_zeros()).max(1) as u8;
        Ok(ByteSpace { radix, bits_per_byte })
    }

    /// Desk-scale space with four byte values.
    pub fn desk() -> Self {
        ByteSpace::new(4).expect("radix 4 is valid")
    }

    /// Realistic space with 256 byte values.
    pub fn octet() -> Self {
        ByteSpace::new(256).expect("radix 256 is valid")
    }

    pub fn radix(&self) -> u32 {
        self.radix
    }

    pub fn bits_per_byte(&self) -> u8 {
        self.bits_per_byte
    }

    pub fn contains(&self, b: ByteValue) -> bool {
        b.0 < self.radix
    }

    /// All byte values in ascending order.
    pub fn byte_values(&self) -> impl Iterator<Item = ByteValue> + '_ {
        (0..self.radix).map(ByteValue)
    }

    /// Number of byte lists of length `len` (radix^len).
    pub fn list_count(&self, len: usize) -> u128 {
        (self.radix as u128).pow(len as u32)
    }

    /// All byte lists of length `len`, lexicographically ascending.
    pub fn byte_lists(&self, len: usize) -> ByteLists {
        ByteLists { radix: self.radix, next: Some(vec![ByteValue(0); len]) }
    }

    /// Bit `index` (least significant = 0) of `b`.
    pub fn bit_of(&self, b: ByteValue, index: u8) -> Bit {
        debug_assert!(index < self.bits_per_byte);
        ((b.0 >> index) & 1) as Bit
    }

    /// `b` with bit `index` set to `bit`, or `None` when the result would
    /// fall outside the radix (possible only for non-power-of-two radices).
    pub fn with_bit(&self, b: ByteValue, index: u8, bit: Bit) -> Option<ByteValue> {
        debug_assert!(index < self.bits_per_byte);
        debug_assert!(bit <= 1);
        let v = if bit == 1 { b.0 | (1 << index) } else { b.0 & !(1 << index) };
        if v < self.radix {
            Some(ByteValue(v))
        } else {
            None
        }
    }
}

/// Lexicographic odometer over byte lists of a fixed length.
pub struct ByteLists {
    radix: u32,
    next: Option<Vec<ByteValue>>,
}

impl Iterator for ByteLists {
    type Item = Vec<ByteValue>;

    fn next(&mut self) -> Option<Vec<ByteValue>> {
        let current = self.next.take()?;
        let mut succ = current.clone();
        let mut i = succ.len();
        loop {
            if i == 0 {
                // odometer wrapped; `current` was the last list
                self.next = None;
                break;
            }
            i -= 1;
            if succ[i].0 + 1 < self.radix {
                succ[i].0 += 1;
                self.next = Some(succ);
                break;
            }
            succ[i].0 = 0;
        }
        Some(current)
    }
}
