//! Byte/bit-granular memory model.
//!
//! Cells are either `Concrete` or `Unknown`; an `Unknown` cell stands for an
//! indeterminate value that any completion may replace. On top of the byte
//! store sits an overlay of individually addressed bits, used as external
//! state for protected-bit encodings: byte writes and byte copies never touch
//! the overlay. A reserve bit address `r` backs requests for bit storage
//! outside the configured free set, via a transparent address swap.
//!
//! Memories are immutable snapshots: every write returns a new value, so
//! snapshots can be shared between enumeration workers without
//! synchronization.

use std::collections::{BTreeMap, BTreeSet};

use serde::de::Error as _;
use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

use crate::space::{Addr, Bit, ByteSpace, ByteValue};

/// A bit-granular address: bit `bit` of the byte at `byte`.
#[derive(
    Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize,
)]
pub struct BitAddress {
    pub byte: Addr,
    pub bit: u8,
}

impl BitAddress {
    pub fn new(byte: Addr, bit: u8) -> Self {
        BitAddress { byte, bit }
    }
}

impl std::fmt::Display for BitAddress {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}.{}", self.byte, self.bit)
    }
}

/// One memory cell.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Cell {
    Concrete(ByteValue),
    /// Indeterminate contents; any completion ranges over the whole radix.
    Unknown,
}

impl Cell {
    pub fn is_unknown(&self) -> bool {
        matches!(self, Cell::Unknown)
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum MemoryError {
    #[error("range [{start}, {end}) out of bounds for memory of size {size}")]
    OutOfRange { start: Addr, end: Addr, size: usize },
    #[error("no free bit addresses configured")]
    NoFreeBits,
    #[error("reserve bit {0} is not in the free-bit set")]
    ReserveNotFree(BitAddress),
    #[error("memories differ in size: {0} vs {1}")]
    SizeMismatch(usize, usize),
    #[error("bit address {0} is not backed by a cell or overlay entry")]
    UnbackedBit(BitAddress),
    #[error("setting bit {addr} would push the byte outside radix {radix}")]
    BitOverflow { addr: BitAddress, radix: u32 },
    #[error("byte value {0} outside radix {1}")]
    ByteOutOfRadix(u32, u32),
}

/// Total byte store over `[0, size)` with a protected-bit overlay.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Memory {
    space: ByteSpace,
    cells: Vec<Cell>,
    /// Externally stored bits, keyed by their (post-swap) storage address.
    overlay: BTreeMap<BitAddress, Bit>,
    /// The constant `r`, substituted for protected-bit requests outside `free_bits`.
    reserve_bit: BitAddress,
    /// The free-bit set `AF` (a safe approximation supplied by configuration).
    free_bits: BTreeSet<BitAddress>,
    /// Installed indirection: accesses to the requested address reach the
    /// reserve's storage and vice versa. Not a physical content swap, so
    /// resolving twice is harmless.
    swap: Option<(BitAddress, BitAddress)>,
}

impl Memory {
    /// All-unknown memory with a free-bit set and reserve bit.
    pub fn new(
        space: ByteSpace,
        size: usize,
        free_bits: BTreeSet<BitAddress>,
        reserve_bit: BitAddress,
    ) -> Result<Self, MemoryError> {
        if !free_bits.is_empty() && !free_bits.contains(&reserve_bit) {
            return Err(MemoryError::ReserveNotFree(reserve_bit));
        }
        Ok(Memory {
            space,
            cells: vec![Cell::Unknown; size],
            overlay: BTreeMap::new(),
            reserve_bit,
            free_bits,
            swap: None,
        })
    }

    /// All-unknown memory with no free bits; protected-bit resolution will
    /// report `NoFreeBits`.
    pub fn unknown(space: ByteSpace, size: usize) -> Self {
        Memory {
            space,
            cells: vec![Cell::Unknown; size],
            overlay: BTreeMap::new(),
            reserve_bit: BitAddress::new(0, 0),
            free_bits: BTreeSet::new(),
            swap: None,
        }
    }

    pub fn space(&self) -> ByteSpace {
        self.space
    }

    pub fn size(&self) -> usize {
        self.cells.len()
    }

    pub fn free_bits(&self) -> &BTreeSet<BitAddress> {
        &self.free_bits
    }

    pub fn reserve_bit(&self) -> BitAddress {
        self.reserve_bit
    }

    pub fn overlay(&self) -> &BTreeMap<BitAddress, Bit> {
        &self.overlay
    }

    fn check_range(&self, start: Addr, len: usize) -> Result<(), MemoryError> {
        let end = start.checked_add(len).ok_or(MemoryError::OutOfRange {
            start,
            end: usize::MAX,
            size: self.size(),
        })?;
        if end > self.size() {
            return Err(MemoryError::OutOfRange { start, end, size: self.size() });
        }
        Ok(())
    }

    /// Cells at `[a, a+n)` in address order.
    pub fn read(&self, a: Addr, n: usize) -> Result<Vec<Cell>, MemoryError> {
        self.check_range(a, n)?;
        Ok(self.cells[a..a + n].to_vec())
    }

    pub fn cell(&self, a: Addr) -> Result<Cell, MemoryError> {
        self.check_range(a, 1)?;
        Ok(self.cells[a])
    }

    /// Snapshot with `[a, a+len)` replaced by `cells`.
    pub fn write(&self, a: Addr, cells: &[Cell]) -> Result<Memory, MemoryError> {
        self.check_range(a, cells.len())?;
        for c in cells {
            if let Cell::Concrete(b) = c {
                if !self.space.contains(*b) {
                    return Err(MemoryError::ByteOutOfRadix(b.0, self.space.radix()));
                }
            }
        }
        let mut next = self.clone();
        next.cells[a..a + cells.len()].copy_from_slice(cells);
        Ok(next)
    }

    /// Snapshot with `[a, a+len)` replaced by concrete bytes.
    pub fn write_bytes(&self, a: Addr, bytes: &[ByteValue]) -> Result<Memory, MemoryError> {
        let cells: Vec<Cell> = bytes.iter().map(|b| Cell::Concrete(*b)).collect();
        self.write(a, &cells)
    }

    /// Whether the cell at `a` is modified between `self` and `other`:
    /// false only when both cells are concrete and equal. An `Unknown` cell
    /// on either side counts as modified, since identity is not provable.
    pub fn modified_at(&self, other: &Memory, a: Addr) -> Result<bool, MemoryError> {
        if self.size() != other.size() {
            return Err(MemoryError::SizeMismatch(self.size(), other.size()));
        }
        self.check_range(a, 1)?;
        Ok(match (self.cells[a], other.cells[a]) {
            (Cell::Concrete(x), Cell::Concrete(y)) => x != y,
            _ => true,
        })
    }

    /// Storage location for a client-visible bit address, following the
    /// reserve swap in both directions.
    fn bit_loc(&self, b: BitAddress) -> BitAddress {
        match self.swap {
            Some((requested, reserve)) if b == requested => reserve,
            Some((requested, reserve)) if b == reserve => requested,
            _ => b,
        }
    }

    /// Read the bit at `b`: overlay entries shadow cell bits; a bit of an
    /// `Unknown` cell reads as `None`.
    pub fn bit_read(&self, b: BitAddress) -> Result<Option<Bit>, MemoryError> {
        let loc = self.bit_loc(b);
        if let Some(bit) = self.overlay.get(&loc) {
            return Ok(Some(*bit));
        }
        if loc.byte < self.size() && loc.bit < self.space.bits_per_byte() {
            return Ok(match self.cells[loc.byte] {
                Cell::Concrete(v) => Some(self.space.bit_of(v, loc.bit)),
                Cell::Unknown => None,
            });
        }
        Err(MemoryError::UnbackedBit(b))
    }

    /// Write the bit at `b`. Overlaid bits stay in the overlay; a bit of a
    /// concrete cell is written in place; a bit of an `Unknown` cell is
    /// promoted into the overlay (byte-level reads still see `Unknown`, but
    /// completions are constrained, see [`Memory::unknown_bit_constraints`]).
    pub fn bit_write(&self, b: BitAddress, bit: Bit) -> Result<Memory, MemoryError> {
        debug_assert!(bit <= 1);
        let loc = self.bit_loc(b);
        let mut next = self.clone();
        if let Some(slot) = next.overlay.get_mut(&loc) {
            *slot = bit;
            return Ok(next);
        }
        if loc.byte < self.size() && loc.bit < self.space.bits_per_byte() {
            match self.cells[loc.byte] {
                Cell::Concrete(v) => {
                    let updated = self
                        .space
                        .with_bit(v, loc.bit, bit)
                        .ok_or(MemoryError::BitOverflow { addr: b, radix: self.space.radix() })?;
                    next.cells[loc.byte] = Cell::Concrete(updated);
                }
                Cell::Unknown => {
                    next.overlay.insert(loc, bit);
                }
            }
            return Ok(next);
        }
        Err(MemoryError::UnbackedBit(b))
    }

    /// Combined read-and-optionally-write: returns the bit stored at `b`
    /// before the write (or `None` when unknown) together with the updated
    /// snapshot.
    pub fn bit_rw(
        &self,
        b: BitAddress,
        new: Option<Bit>,
    ) -> Result<(Option<Bit>, Memory), MemoryError> {
        let old = self.bit_read(b)?;
        let next = match new {
            Some(bit) => self.bit_write(b, bit)?,
            None => self.clone(),
        };
        Ok((old, next))
    }

    /// Store an externally kept bit at `b`, unconditionally in the overlay.
    /// This is the storage path for protected bits: byte writes and byte
    /// copies can never reach it.
    pub fn write_overlay_bit(&self, b: BitAddress, bit: Bit) -> Memory {
        debug_assert!(bit <= 1);
        let loc = self.bit_loc(b);
        let mut next = self.clone();
        next.overlay.insert(loc, bit);
        next
    }

    /// Read an externally kept bit; `None` when it was never stored and no
    /// concrete cell bit backs it.
    pub fn protected_bit_read(&self, b: BitAddress) -> Option<Bit> {
        let loc = self.bit_loc(b);
        if let Some(bit) = self.overlay.get(&loc) {
            return Some(*bit);
        }
        if loc.byte < self.size() && loc.bit < self.space.bits_per_byte() {
            if let Cell::Concrete(v) = self.cells[loc.byte] {
                return Some(self.space.bit_of(v, loc.bit));
            }
        }
        None
    }

    /// Bits of the `Unknown` cell at `a` that are pinned by overlay entries;
    /// completions of the cell must agree with them.
    pub fn unknown_bit_constraints(&self, a: Addr) -> Vec<(u8, Bit)> {
        let mut out = Vec::new();
        for bit in 0..self.space.bits_per_byte() {
            let loc = self.bit_loc(BitAddress::new(a, bit));
            if let Some(v) = self.overlay.get(&loc) {
                out.push((bit, *v));
            }
        }
        out
    }

    /// Resolve where a structure's protected bit actually lives: `requested`
    /// itself when it is free, otherwise the reserve bit `r`, installing a
    /// transparent swap so that later accesses to `requested` reach `r` and
    /// vice versa.
    pub fn resolve_protected_bit(
        &self,
        requested: BitAddress,
    ) -> Result<(BitAddress, Memory), MemoryError> {
        if self.free_bits.is_empty() {
            return Err(MemoryError::NoFreeBits);
        }
        if self.free_bits.contains(&requested) {
            return Ok((requested, self.clone()));
        }
        let mut next = self.clone();
        next.swap = Some((requested, self.reserve_bit));
        Ok((self.reserve_bit, next))
    }
}

// Snapshot JSON: {"radix", "size", "cells": [int or "U", ...],
// "overlay": [[byte, bit, value], ...], "reserve": [byte, bit],
// "free_bits": [[byte, bit], ...]}. The swap indirection is session state
// and is re-established by the interpreter, so it is not serialized.
#[derive(Serialize, Deserialize)]
struct MemoryRepr {
    radix: u32,
    size: usize,
    cells: Vec<CellRepr>,
    overlay: Vec<(Addr, u8, Bit)>,
    reserve: (Addr, u8),
    free_bits: Vec<(Addr, u8)>,
}

#[derive(Serialize, Deserialize)]
#[serde(untagged)]
enum CellRepr {
    Byte(u32),
    Tag(String),
}

impl Serialize for Memory {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        let repr = MemoryRepr {
            radix: self.space.radix(),
            size: self.size(),
            cells: self
                .cells
                .iter()
                .map(|c| match c {
                    Cell::Concrete(b) => CellRepr::Byte(b.0),
                    Cell::Unknown => CellRepr::Tag("U".to_string()),
                })
                .collect(),
            overlay: self.overlay.iter().map(|(k, v)| (k.byte, k.bit, *v)).collect(),
            reserve: (self.reserve_bit.byte, self.reserve_bit.bit),
            free_bits: self.free_bits.iter().map(|b| (b.byte, b.bit)).collect(),
        };
        repr.serialize(serializer)
    }
}

impl<'de> Deserialize<'de> for Memory {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let repr = MemoryRepr::deserialize(deserializer)?;
        let space = ByteSpace::new(repr.radix).map_err(D::Error::custom)?;
        if repr.cells.len() != repr.size {
            return Err(D::Error::custom(format!(
                "declared size {} but {} cells",
                repr.size,
                repr.cells.len()
            )));
        }
        let mut cells = Vec::with_capacity(repr.cells.len());
        for c in &repr.cells {
            cells.push(match c {
                CellRepr::Byte(v) => {
                    if *v >= repr.radix {
                        return Err(D::Error::custom(format!(
                            "cell value {v} outside radix {}",
                            repr.radix
                        )));
                    }
                    Cell::Concrete(ByteValue(*v))
                }
                CellRepr::Tag(t) if t == "U" => Cell::Unknown,
                CellRepr::Tag(t) => {
                    return Err(D::Error::custom(format!("unknown cell tag {t:?}")))
                }
            });
        }
        let free_bits: BTreeSet<BitAddress> =
            repr.free_bits.iter().map(|(b, i)| BitAddress::new(*b, *i)).collect();
        let reserve_bit = BitAddress::new(repr.reserve.0, repr.reserve.1);
        if !free_bits.is_empty() && !free_bits.contains(&reserve_bit) {
            return Err(D::Error::custom(MemoryError::ReserveNotFree(reserve_bit).to_string()));
        }
        Ok(Memory {
            space,
            cells,
            overlay: repr
                .overlay
                .iter()
                .map(|(b, i, v)| (BitAddress::new(*b, *i), *v))
                .collect(),
            reserve_bit,
            free_bits,
            swap: None,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn desk_memory(size: usize) -> Memory {
        Memory::unknown(ByteSpace::desk(), size)
    }

    #[test]
    fn identity_read() {
        let m = desk_memory(2)
            .write_bytes(0, &[ByteValue(0), ByteValue(1)])
            .unwrap();
        assert_eq!(
            m.read(0, 2).unwrap(),
            vec![Cell::Concrete(ByteValue(0)), Cell::Concrete(ByteValue(1))]
        );
    }

    #[test]
    fn fresh_memory_reads_unknown() {
        let m = desk_memory(4);
        assert_eq!(m.read(0, 1).unwrap(), vec![Cell::Unknown]);
    }

    #[test]
    fn read_past_end_is_out_of_range() {
        let m = desk_memory(4);
        assert_eq!(
            m.read(3, 2),
            Err(MemoryError::OutOfRange { start: 3, end: 5, size: 4 })
        );
    }

    #[test]
    fn read_after_write() {
        let m = desk_memory(4).write_bytes(0, &[ByteValue(3)]).unwrap();
        assert_eq!(m.read(0, 1).unwrap(), vec![Cell::Concrete(ByteValue(3))]);
    }

    #[test]
    fn empty_write_is_identity() {
        let m = desk_memory(4);
        let m2 = m.write(2, &[]).unwrap();
        assert_eq!(m, m2);
    }

    #[test]
    fn write_past_end_is_out_of_range() {
        let m = desk_memory(4);
        assert!(matches!(
            m.write_bytes(4, &[ByteValue(0)]),
            Err(MemoryError::OutOfRange { .. })
        ));
    }

    #[test]
    fn modified_at_cases() {
        let space = ByteSpace::octet();
        let a = Memory::unknown(space, 1).write_bytes(0, &[ByteValue(5)]).unwrap();
        let b = a.clone();
        let c = Memory::unknown(space, 1).write_bytes(0, &[ByteValue(6)]).unwrap();
        let u = Memory::unknown(space, 1);
        assert!(!a.modified_at(&b, 0).unwrap());
        assert!(a.modified_at(&c, 0).unwrap());
        // identity with an unknown cell is not provable
        assert!(a.modified_at(&u, 0).unwrap());
        assert!(u.modified_at(&a, 0).unwrap());
        assert!(a.modified_at(&b, 1).is_err());
    }

    #[test]
    fn overlay_shadows_cells() {
        let b = BitAddress::new(9, 0);
        let m = desk_memory(2).write_overlay_bit(b, 1);
        assert_eq!(m.bit_read(b).unwrap(), Some(1));
    }

    #[test]
    fn cell_bit_read_uses_binary_expansion() {
        // Concrete(2) at radix 4 is "10"
        let m = desk_memory(1).write_bytes(0, &[ByteValue(2)]).unwrap();
        assert_eq!(m.bit_read(BitAddress::new(0, 1)).unwrap(), Some(1));
        assert_eq!(m.bit_read(BitAddress::new(0, 0)).unwrap(), Some(0));
    }

    #[test]
    fn bit_of_unknown_cell_reads_unknown() {
        let m = desk_memory(1);
        assert_eq!(m.bit_read(BitAddress::new(0, 0)).unwrap(), None);
    }

    #[test]
    fn bit_write_into_unknown_cell_promotes_to_overlay() {
        let m = desk_memory(1);
        let b = BitAddress::new(0, 1);
        let m2 = m.bit_write(b, 1).unwrap();
        assert_eq!(m2.bit_read(b).unwrap(), Some(1));
        // the byte itself stays unknown, but completions are constrained
        assert_eq!(m2.cell(0).unwrap(), Cell::Unknown);
        assert_eq!(m2.unknown_bit_constraints(0), vec![(1, 1)]);
    }

    #[test]
    fn resolve_keeps_free_requests_and_swaps_others() {
        let reserve = BitAddress::new(7, 1);
        let free: BTreeSet<_> = [reserve, BitAddress::new(7, 0)].into_iter().collect();
        let m = Memory::new(ByteSpace::desk(), 8, free, reserve).unwrap();

        let (kept, m2) = m.resolve_protected_bit(BitAddress::new(7, 0)).unwrap();
        assert_eq!(kept, BitAddress::new(7, 0));
        assert_eq!(m2.swap, None);

        let outside = BitAddress::new(3, 0);
        let (swapped, m3) = m.resolve_protected_bit(outside).unwrap();
        assert_eq!(swapped, reserve);
        // the swap is transparent: writing through the requested address and
        // reading it back round-trips
        let m4 = m3.write_overlay_bit(outside, 1);
        assert_eq!(m4.bit_read(outside).unwrap(), Some(1));
    }

    #[test]
    fn resolve_without_free_bits_fails() {
        let m = desk_memory(4);
        assert_eq!(
            m.resolve_protected_bit(BitAddress::new(0, 0)),
            Err(MemoryError::NoFreeBits)
        );
    }

    #[test]
    fn reserve_must_be_free() {
        let free: BTreeSet<_> = [BitAddress::new(7, 0)].into_iter().collect();
        assert_eq!(
            Memory::new(ByteSpace::desk(), 8, free, BitAddress::new(6, 0)),
            Err(MemoryError::ReserveNotFree(BitAddress::new(6, 0)))
        );
    }

    #[test]
    fn write_then_read_bit_round_trips_for_all_requested_addresses() {
        // exhaustive at desk scale, with and without a swap in the way
        let reserve = BitAddress::new(7, 1);
        let free: BTreeSet<_> = [reserve].into_iter().collect();
        let base = Memory::new(ByteSpace::desk(), 8, free, reserve).unwrap();
        for byte in 0..8 {
            for bit in 0..2 {
                let requested = BitAddress::new(byte, bit);
                let (_, m) = base.resolve_protected_bit(requested).unwrap();
                for v in [0u8, 1u8] {
                    let m2 = m.bit_write(requested, v).unwrap();
                    assert_eq!(m2.bit_read(requested).unwrap(), Some(v), "at {requested}");
                }
            }
        }
    }

    #[test]
    fn snapshot_json_round_trip() {
        let reserve = BitAddress::new(7, 1);
        let free: BTreeSet<_> = [reserve].into_iter().collect();
        let m = Memory::new(ByteSpace::desk(), 8, free, reserve)
            .unwrap()
            .write_bytes(0, &[ByteValue(2), ByteValue(0)])
            .unwrap()
            .write_overlay_bit(BitAddress::new(7, 1), 1);
        let json = serde_json::to_string(&m).unwrap();
        assert!(json.contains("\"U\""));
        let back: Memory = serde_json::from_str(&json).unwrap();
        assert_eq!(m, back);
    }

    proptest! {
        #[test]
        fn read_after_write_holds(
            addr in 0usize..6,
            bytes in proptest::collection::vec(0u32..4, 0..3),
        ) {
            let m = desk_memory(8);
            let cells: Vec<Cell> = bytes.iter().map(|b| Cell::Concrete(ByteValue(*b))).collect();
            let m2 = m.write(addr, &cells).unwrap();
            prop_assert_eq!(m2.read(addr, cells.len()).unwrap(), cells);
        }

        #[test]
        fn frame_rule_holds(
            addr in 0usize..6,
            bytes in proptest::collection::vec(0u32..4, 0..3),
            probe in 0usize..8,
        ) {
            let m = desk_memory(8).write_bytes(0, &[ByteValue(1); 8]).unwrap();
            let cells: Vec<Cell> = bytes.iter().map(|b| Cell::Concrete(ByteValue(*b))).collect();
            let m2 = m.write(addr, &cells).unwrap();
            if probe < addr || probe >= addr + cells.len() {
                prop_assert_eq!(m.cell(probe).unwrap(), m2.cell(probe).unwrap());
            }
        }

        #[test]
        fn modified_at_is_symmetric(a in 0u32..4, b in 0u32..4) {
            let m1 = desk_memory(1).write_bytes(0, &[ByteValue(a)]).unwrap();
            let m2 = desk_memory(1).write_bytes(0, &[ByteValue(b)]).unwrap();
            prop_assert_eq!(
                m1.modified_at(&m2, 0).unwrap(),
                m2.modified_at(&m1, 0).unwrap()
            );
            prop_assert_eq!(m1.modified_at(&m1, 0).unwrap(), false);
        }
    }
}
