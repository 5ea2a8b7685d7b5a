//! Underspecified data-type semantics as an executable model.
//!
//! Low-level code stores typed values as untyped byte lists; the conversion
//! back is a partial function, and which conversion a compiler actually uses
//! is underspecified. This crate models that discipline: a byte/bit-granular
//! memory with unknown cells and a protected-bit overlay, semantic
//! structures with partial decoders in three variants, the five classes of
//! memory modifications that cause type errors, executable sufficient
//! conditions plus a brute-force sensitivity oracle, and a toy typed
//! interpreter whose verifier enumerates every admissible structure choice.
//!
//! Everything is deterministic at fixed seeds; desk-scale configurations
//! (radix 4, sizes of one or two, a handful of cells) keep all the
//! quantifiers exhaustively checkable.

pub mod case_study;
pub mod classes;
pub mod family;
pub mod interp;
pub mod memory;
pub mod modification;
pub mod rng;
pub mod semantics;
pub mod sensitivity;
pub mod space;

pub use classes::{classify, gen_modifications, ClassContext, GenLimits};
pub use family::{
    bool_pair_family, gcc_bool_family, make_address_family, make_bool_pair,
    make_bool_total, make_protected_family, make_uint2, permutation_closure,
    uint2_family, FamilyFile, StructureChoice, StructureFamily,
};
pub use interp::{run, verify, verify_with_workers, Outcome, Program, Statement, Verdict};
pub use memory::{BitAddress, Cell, Memory, MemoryError};
pub use modification::{ErrorClassId, MemoryModification, Payload, Span};
pub use semantics::{Decoded, SemanticStructure, SemanticsError, Value, Variant};
pub use sensitivity::{
    check_lemma1, check_lemma2, check_lemma3, check_lemma4, sensitive_for_modifications,
    type_sensitive_bruteforce, visible, visible_in_family, LemmaReport, SensitivityVerdict,
    SensitivityWitness,
};
pub use space::{Addr, Bit, ByteSpace, ByteValue};
