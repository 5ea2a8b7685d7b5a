//! Generators and a classifier for the five modification classes, relative
//! to a specific typed read.
//!
//! A class is a set of memory modifications; the generators enumerate a
//! finite, deterministic representative list at desk scale. Classification
//! goes by payload provenance, not by the bytes a modification happens to
//! produce.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::family::StructureFamily;
use crate::modification::{
    BitPos, ErrorClassId, MemoryModification, Payload, RepPart, Span,
};
use crate::semantics::{SemanticStructure, SemanticsError, Variant};
use crate::space::Addr;

/// The read access the classes are defined against: its structure (for the
/// window size), its address, and the families of other types whose
/// representations may leak into the window.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ClassContext {
    pub reader: SemanticStructure,
    pub reader_type: String,
    pub read_address: Addr,
    /// Families of types other than the reader's; the generators assume the
    /// reader's own family is not among them.
    pub foreign: Vec<StructureFamily>,
}

impl ClassContext {
    pub fn new(
        reader: SemanticStructure,
        reader_type: impl Into<String>,
        read_address: Addr,
        foreign: Vec<StructureFamily>,
    ) -> Self {
        debug_assert!(reader.addresses().contains(&read_address));
        ClassContext { reader, reader_type: reader_type.into(), read_address, foreign }
    }

    /// The window a read at the context address covers.
    pub fn target_range(&self) -> Span {
        Span(self.read_address, self.read_address + self.reader.size())
    }
}

/// Generation limits: a cap on the number of emitted modifications and the
/// maximum number of representations concatenated for slice writes.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct GenLimits {
    pub enum_cap: u128,
    pub slice_parts: usize,
}

impl Default for GenLimits {
    fn default() -> Self {
        GenLimits { enum_cap: 1 << 20, slice_parts: 2 }
    }
}

#[derive(Debug, Error)]
pub enum GenError {
    #[error("generator would emit {need} modifications, cap is {bound}")]
    BoundExceeded { need: u128, bound: u128 },
    #[error(transparent)]
    Semantics(#[from] SemanticsError),
}

fn encode_addresses(s: &SemanticStructure) -> Vec<Option<Addr>> {
    match s.variant() {
        Variant::Plain => vec![None],
        _ => s.addresses().iter().map(|a| Some(*a)).collect(),
    }
}

/// Enumerate the modifications of one class for the given read context.
pub fn gen_modifications(
    class: ErrorClassId,
    ctx: &ClassContext,
    limits: &GenLimits,
) -> Result<Vec<MemoryModification>, GenError> {
    let range = ctx.target_range();
    let space = ctx.reader.space();
    let mut out = Vec::new();
    let mut push = |m: MemoryModification, cap: u128| -> Result<(), GenError> {
        if out.len() as u128 >= cap {
            return Err(GenError::BoundExceeded { need: out.len() as u128 + 1, bound: cap });
        }
        out.push(m);
        Ok(())
    };

    match class {
        ErrorClassId::UNSPECIFIED => {
            push(
                MemoryModification { class, range, payload: Payload::UnknownFill },
                limits.enum_cap,
            )?;
        }
        ErrorClassId::CONSTANT => {
            for byte in space.byte_values() {
                push(
                    MemoryModification {
                        class,
                        range,
                        payload: Payload::ConstantFill { byte },
                    },
                    limits.enum_cap,
                )?;
            }
        }
        ErrorClassId::FOREIGN_REPRESENTATION => {
            for family in &ctx.foreign {
                for member in family.members() {
                    if member.size() != ctx.reader.size() {
                        continue;
                    }
                    for value in member.values() {
                        for source_addr in encode_addresses(member) {
                            let rep = member.encode(value, source_addr)?;
                            push(
                                MemoryModification {
                                    class,
                                    range,
                                    payload: Payload::RepresentationWrite {
                                        structure: member.id().to_string(),
                                        value: value.clone(),
                                        source_addr,
                                        bytes: rep.bytes,
                                    },
                                },
                                limits.enum_cap,
                            )?;
                        }
                    }
                }
            }
        }
        ErrorClassId::SLICE => {
            // pool of foreign representations of any size
            let mut pool: Vec<(RepPart, Vec<crate::space::ByteValue>)> = Vec::new();
            for family in &ctx.foreign {
                for member in family.members() {
                    for value in member.values() {
                        for source_addr in encode_addresses(member) {
                            let rep = member.encode(value, source_addr)?;
                            pool.push((
                                RepPart {
                                    structure: member.id().to_string(),
                                    value: value.clone(),
                                    source_addr,
                                    rep_len: rep.bytes.len(),
                                },
                                rep.bytes,
                            ));
                        }
                    }
                }
            }
            // concatenations of up to slice_parts representations in
            // lexicographic index order, every window of the target length
            for k in 1..=limits.slice_parts.max(1) {
                if pool.is_empty() {
                    break;
                }
                let mut indices = vec![0usize; k];
                loop {
                    let total: usize = indices.iter().map(|i| pool[*i].1.len()).sum();
                    if total >= range.len() {
                        let concat: Vec<_> =
                            indices.iter().flat_map(|i| pool[*i].1.iter().copied()).collect();
                        for offset in 0..=(total - range.len()) {
                            push(
                                MemoryModification {
                                    class,
                                    range,
                                    payload: Payload::SliceWrite {
                                        parts: indices
                                            .iter()
                                            .map(|i| pool[*i].0.clone())
                                            .collect(),
                                        offset,
                                        bytes: concat[offset..offset + range.len()].to_vec(),
                                    },
                                },
                                limits.enum_cap,
                            )?;
                        }
                    }
                    // advance the odometer
                    let mut slot = k;
                    loop {
                        if slot == 0 {
                            break;
                        }
                        slot -= 1;
                        indices[slot] += 1;
                        if indices[slot] < pool.len() {
                            break;
                        }
                        indices[slot] = 0;
                    }
                    if indices.iter().all(|i| *i == 0) {
                        break;
                    }
                }
            }
        }
        ErrorClassId::BITWISE_COPY => {
            let bit_count = ctx.reader.size() as u32 * space.bits_per_byte() as u32;
            if bit_count > 16 {
                return Err(GenError::BoundExceeded {
                    need: 1u128 << bit_count,
                    bound: 1 << 16,
                });
            }
            for value in ctx.reader.values() {
                for source_addr in encode_addresses(&ctx.reader) {
                    // full copy first, then every proper non-empty subset
                    let full = (1u32 << bit_count) - 1;
                    for mask in (1..=full).rev() {
                        let bits: Vec<BitPos> = (0..bit_count)
                            .filter(|t| mask & (1 << t) != 0)
                            .map(|t| BitPos {
                                byte_offset: (t / space.bits_per_byte() as u32) as usize,
                                bit_index: (t % space.bits_per_byte() as u32) as u8,
                            })
                            .collect();
                        push(
                            MemoryModification {
                                class,
                                range,
                                payload: Payload::BitCopy {
                                    source_type: ctx.reader_type.clone(),
                                    structure: ctx.reader.id().to_string(),
                                    value: value.clone(),
                                    source_addr,
                                    bits,
                                },
                            },
                            limits.enum_cap,
                        )?;
                    }
                }
            }
        }
        other => unreachable!("exhaustive over class ids, got {other}"),
    }
    Ok(out)
}

/// The classes whose (unbounded) generator would contain the modification.
pub fn classify(modification: &MemoryModification, ctx: &ClassContext) -> BTreeSet<ErrorClassId> {
    let mut classes = BTreeSet::new();
    match &modification.payload {
        Payload::UnknownFill => {
            classes.insert(ErrorClassId::UNSPECIFIED);
        }
        Payload::ConstantFill { .. } => {
            classes.insert(ErrorClassId::CONSTANT);
        }
        Payload::RepresentationWrite { bytes, .. } => {
            classes.insert(ErrorClassId::FOREIGN_REPRESENTATION);
            // a complete representation filling the window is the
            // single-part slice case
            if bytes.len() == modification.range.len() {
                classes.insert(ErrorClassId::SLICE);
            }
        }
        Payload::SliceWrite { parts, offset, bytes } => {
            classes.insert(ErrorClassId::SLICE);
            if parts.len() == 1 && *offset == 0 && bytes.len() == parts[0].rep_len {
                classes.insert(ErrorClassId::FOREIGN_REPRESENTATION);
            }
        }
        Payload::BitCopy { bits, .. } => {
            debug_assert!(!bits.is_empty());
            classes.insert(ErrorClassId::BITWISE_COPY);
        }
    }
    debug_assert!(
        modification.range.overlaps(&ctx.target_range())
            || modification.range.is_empty()
    );
    classes
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::family::{bool_pair_family, uint2_family};
    use crate::space::ByteSpace;
    use std::collections::BTreeSet as Set;

    fn desk_ctx() -> ClassContext {
        let addrs: Set<Addr> = [0].into_iter().collect();
        let bool_family = bool_pair_family(ByteSpace::desk(), addrs.clone()).unwrap();
        let foreign = uint2_family(ByteSpace::desk(), addrs);
        ClassContext::new(
            bool_family.members()[0].clone(),
            "bool",
            0,
            vec![foreign],
        )
    }

    #[test]
    fn class2_emits_one_fill_per_byte_value() {
        let mods =
            gen_modifications(ErrorClassId::CONSTANT, &desk_ctx(), &GenLimits::default())
                .unwrap();
        assert_eq!(mods.len(), 4);
        let bytes: Set<_> = mods
            .iter()
            .map(|m| match &m.payload {
                Payload::ConstantFill { byte } => byte.0,
                other => panic!("unexpected payload {other:?}"),
            })
            .collect();
        assert_eq!(bytes, (0..4).collect());
    }

    #[test]
    fn class3_count_is_members_times_values() {
        let ctx = desk_ctx();
        let mods =
            gen_modifications(ErrorClassId::FOREIGN_REPRESENTATION, &ctx, &GenLimits::default())
                .unwrap();
        let expected: usize = ctx
            .foreign
            .iter()
            .flat_map(|f| f.members())
            .filter(|m| m.size() == ctx.reader.size())
            .map(|m| m.values().len())
            .sum();
        assert_eq!(mods.len(), expected);
        assert_eq!(mods.len(), 4);
    }

    #[test]
    fn class5_full_copy_comes_first() {
        let ctx = desk_ctx();
        let mods =
            gen_modifications(ErrorClassId::BITWISE_COPY, &ctx, &GenLimits::default()).unwrap();
        // 2 values x (2^2 - 1) masks
        assert_eq!(mods.len(), 6);
        match &mods[0].payload {
            Payload::BitCopy { bits, .. } => assert_eq!(bits.len(), 2),
            other => panic!("unexpected payload {other:?}"),
        }
        for m in &mods {
            match &m.payload {
                Payload::BitCopy { bits, .. } => assert!(!bits.is_empty()),
                other => panic!("unexpected payload {other:?}"),
            }
        }
    }

    #[test]
    fn generator_outputs_classify_back_to_their_class() {
        let ctx = desk_ctx();
        for class in ErrorClassId::ALL {
            let mods = gen_modifications(class, &ctx, &GenLimits::default()).unwrap();
            assert!(!mods.is_empty(), "class {class} generated nothing");
            for m in mods {
                assert!(
                    classify(&m, &ctx).contains(&class),
                    "class {class} output {m:?} does not classify back"
                );
            }
        }
    }

    #[test]
    fn class3_outputs_are_class4_outputs() {
        let ctx = desk_ctx();
        let threes =
            gen_modifications(ErrorClassId::FOREIGN_REPRESENTATION, &ctx, &GenLimits::default())
                .unwrap();
        let fours =
            gen_modifications(ErrorClassId::SLICE, &ctx, &GenLimits::default()).unwrap();
        // every class-3 byte image appears among the class-4 single-part
        // slices at offset 0
        for three in &threes {
            let Payload::RepresentationWrite { structure, value, bytes, .. } = &three.payload
            else {
                unreachable!()
            };
            assert!(
                fours.iter().any(|four| match &four.payload {
                    Payload::SliceWrite { parts, offset, bytes: slice_bytes } =>
                        parts.len() == 1
                            && *offset == 0
                            && parts[0].structure == *structure
                            && parts[0].value == *value
                            && slice_bytes == bytes,
                    _ => false,
                }),
                "class-3 output {three:?} has no class-4 counterpart"
            );
        }
    }

    #[test]
    fn classify_examples() {
        let ctx = desk_ctx();
        let unknown = MemoryModification {
            class: ErrorClassId::UNSPECIFIED,
            range: ctx.target_range(),
            payload: Payload::UnknownFill,
        };
        assert_eq!(
            classify(&unknown, &ctx),
            [ErrorClassId::UNSPECIFIED].into_iter().collect()
        );

        let constant = MemoryModification {
            class: ErrorClassId::CONSTANT,
            range: ctx.target_range(),
            payload: Payload::ConstantFill { byte: crate::space::ByteValue(0) },
        };
        assert_eq!(
            classify(&constant, &ctx),
            [ErrorClassId::CONSTANT].into_iter().collect()
        );

        let rep = gen_modifications(
            ErrorClassId::FOREIGN_REPRESENTATION,
            &ctx,
            &GenLimits::default(),
        )
        .unwrap()
        .remove(0);
        assert_eq!(
            classify(&rep, &ctx),
            [ErrorClassId::FOREIGN_REPRESENTATION, ErrorClassId::SLICE]
                .into_iter()
                .collect()
        );
    }

    #[test]
    fn cap_is_enforced() {
        let ctx = desk_ctx();
        let limits = GenLimits { enum_cap: 2, slice_parts: 2 };
        assert!(matches!(
            gen_modifications(ErrorClassId::CONSTANT, &ctx, &limits),
            Err(GenError::BoundExceeded { .. })
        ));
    }
}
