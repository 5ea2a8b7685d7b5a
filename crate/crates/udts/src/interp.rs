//! A toy typed imperative language over the byte memory, parameterized by a
//! structure choice, and a verifier that enumerates every admissible choice.
//! A program is verified only when it terminates normally under all of them.
//!
//! Reads over unknown cells get stuck when some completion falls outside the
//! decoder's domain; when the decoder accepts every completion the read
//! yields an unknown-value marker, which poisons assertions.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::family::{ChoiceError, StructureChoice, StructureFamily};
use crate::memory::{BitAddress, Cell, Memory, MemoryError};
use crate::modification::{ApplyError, MemoryModification, Payload};
use crate::semantics::{
    Decoded, ProtectedSpec, SemanticStructure, SemanticsError, Value,
};
use crate::sensitivity::SensitivityWitness;
use crate::space::{Addr, Bit, ByteSpace, ByteValue};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Decl {
    pub var: String,
    #[serde(rename = "type")]
    pub type_name: String,
    pub addr: Addr,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub size: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "op", rename_all = "snake_case")]
pub enum Statement {
    /// Typed store of a value into a variable's window.
    Write { var: String, value: Value },
    /// Typed load; gets stuck on undecodable contents.
    Read { var: String },
    /// Typed load through another type's structure (an implicit cast).
    ReadAs {
        var: String,
        #[serde(rename = "type")]
        type_name: String,
    },
    /// Raw cell copy; never touches the protected-bit overlay.
    Bytecopy { dst: Addr, src: Addr, n: usize },
    /// A hardware effect applying a memory modification.
    Hw {
        #[serde(rename = "mod")]
        modification: MemoryModification,
    },
    /// Typed load compared against an expected value.
    Assert { var: String, value: Value },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Program {
    pub decls: Vec<Decl>,
    pub stmts: Vec<Statement>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StuckReason {
    UndefinedDecode,
    AssertFailed,
    UnknownValueUsed,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "outcome", rename_all = "snake_case")]
pub enum Outcome {
    Terminated,
    Stuck { step: usize, reason: StuckReason },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "verdict", rename_all = "snake_case")]
pub enum Verdict {
    Verified,
    Fails { choice: StructureChoice, step: usize, reason: StuckReason },
}

impl Verdict {
    pub fn is_verified(&self) -> bool {
        matches!(self, Verdict::Verified)
    }
}

#[derive(Debug, Error)]
pub enum InterpError {
    #[error("ill-formed program: {0}")]
    IllFormed(String),
    #[error("choice enumeration has {product} products, cap is {cap}")]
    CapExceeded { product: u128, cap: u128 },
    #[error("choice assigns more than one protected structure")]
    InadmissibleChoice,
    #[error(transparent)]
    Memory(#[from] MemoryError),
    #[error(transparent)]
    Semantics(#[from] SemanticsError),
    #[error(transparent)]
    Apply(#[from] ApplyError),
    #[error(transparent)]
    Choice(#[from] ChoiceError),
}

/// Types a program mentions: in declarations, implicit casts, and bit-copy
/// hardware effects.
pub fn used_types(p: &Program) -> BTreeSet<String> {
    let mut out: BTreeSet<String> = p.decls.iter().map(|d| d.type_name.clone()).collect();
    for stmt in &p.stmts {
        match stmt {
            Statement::ReadAs { type_name, .. } => {
                out.insert(type_name.clone());
            }
            Statement::Hw { modification } => {
                if let Payload::BitCopy { source_type, .. } = &modification.payload {
                    out.insert(source_type.clone());
                }
            }
            _ => {}
        }
    }
    out
}

fn find_decl<'a>(p: &'a Program, var: &str) -> Result<&'a Decl, InterpError> {
    p.decls
        .iter()
        .find(|d| d.var == var)
        .ok_or_else(|| InterpError::IllFormed(format!("unbound variable {var}")))
}

fn validate(
    p: &Program,
    families: &[StructureFamily],
    m0: &Memory,
) -> Result<(), InterpError> {
    let mut seen = BTreeSet::new();
    for d in &p.decls {
        if !seen.insert(&d.var) {
            return Err(InterpError::IllFormed(format!("duplicate variable {}", d.var)));
        }
    }
    for ty in used_types(p) {
        if !families.iter().any(|f| f.type_name() == ty) {
            return Err(InterpError::IllFormed(format!("missing family for type {ty}")));
        }
    }
    let family = |ty: &str| families.iter().find(|f| f.type_name() == ty).unwrap();
    for stmt in &p.stmts {
        match stmt {
            Statement::Write { var, value } | Statement::Assert { var, value } => {
                let d = find_decl(p, var)?;
                if !family(&d.type_name).common_values().contains(value) {
                    return Err(InterpError::IllFormed(format!(
                        "value {value} is not common to family {}",
                        d.type_name
                    )));
                }
            }
            Statement::Read { var } => {
                find_decl(p, var)?;
            }
            Statement::ReadAs { var, .. } => {
                find_decl(p, var)?;
            }
            Statement::Bytecopy { dst, src, n } => {
                if src + n > m0.size() || dst + n > m0.size() {
                    return Err(InterpError::IllFormed(format!(
                        "byte copy [{src}..{}) -> [{dst}..{}) leaves memory of size {}",
                        src + n,
                        dst + n,
                        m0.size()
                    )));
                }
            }
            Statement::Hw { modification } => {
                if modification.range.end() > m0.size() {
                    return Err(InterpError::IllFormed(format!(
                        "hardware effect range {:?} leaves memory of size {}",
                        modification.range,
                        m0.size()
                    )));
                }
            }
        }
    }
    Ok(())
}

/// Whether the choice can place every typed access of the program: each
/// accessed variable's address must be in the chosen structure's address
/// set. Choices that cannot place a variable yield no execution at all, so
/// `run` terminates vacuously under them.
pub fn placements_admissible(
    p: &Program,
    choice: &StructureChoice,
    families: &[StructureFamily],
) -> Result<bool, InterpError> {
    let resolved = choice.resolve(families)?;
    let placed = |ty: &str, addr: Addr| -> Result<bool, InterpError> {
        let s = resolved
            .get(ty)
            .ok_or_else(|| InterpError::IllFormed(format!("choice misses type {ty}")))?;
        Ok(s.addresses().contains(&addr))
    };
    for stmt in &p.stmts {
        let ok = match stmt {
            Statement::Write { var, .. }
            | Statement::Read { var }
            | Statement::Assert { var, .. } => {
                let d = find_decl(p, var)?;
                placed(&d.type_name, d.addr)?
            }
            Statement::ReadAs { var, type_name } => {
                let d = find_decl(p, var)?;
                placed(type_name, d.addr)?
            }
            _ => true,
        };
        if !ok {
            return Ok(false);
        }
    }
    Ok(true)
}

enum ReadResult {
    Value(Value),
    /// The decoder accepted every completion of unknown contents.
    UnknownMarker,
    Stuck,
}

fn typed_read(m: &Memory, s: &SemanticStructure, addr: Addr) -> Result<ReadResult, InterpError> {
    let space = m.space();
    let cells = m.read(addr, s.size())?;
    // completions of unknown cells, restricted by overlay-pinned bits
    let mut unknown_choices: Vec<(usize, Vec<ByteValue>)> = Vec::new();
    for (i, cell) in cells.iter().enumerate() {
        if cell.is_unknown() {
            let constraints = m.unknown_bit_constraints(addr + i);
            let options: Vec<ByteValue> = space
                .byte_values()
                .filter(|b| constraints.iter().all(|(j, bit)| space.bit_of(*b, *j) == *bit))
                .collect();
            unknown_choices.push((i, options));
        }
    }
    let pbit_options: Vec<Option<Bit>> = match s.protected_bit(addr) {
        Some(target) => match m.protected_bit_read(target) {
            Some(bit) => vec![Some(bit)],
            // never stored: the stale bit could be either value
            None => vec![Some(0), Some(1)],
        },
        None => vec![None],
    };

    let mut bytes: Vec<ByteValue> = cells
        .iter()
        .map(|c| match c {
            Cell::Concrete(b) => *b,
            Cell::Unknown => ByteValue(0),
        })
        .collect();
    let had_unknowns = !unknown_choices.is_empty() || pbit_options.len() > 1;

    let mut combo = vec![0usize; unknown_choices.len()];
    loop {
        for (slot, (i, options)) in unknown_choices.iter().enumerate() {
            bytes[*i] = options[combo[slot]];
        }
        for pbit in &pbit_options {
            match s.decode(&bytes, Some(addr), *pbit)? {
                Decoded::Undefined => return Ok(ReadResult::Stuck),
                Decoded::Value(_) => {}
            }
        }
        // advance the completion odometer
        let mut slot = unknown_choices.len();
        loop {
            if slot == 0 {
                if had_unknowns {
                    return Ok(ReadResult::UnknownMarker);
                }
                let v = match s.decode(&bytes, Some(addr), pbit_options[0])? {
                    Decoded::Value(v) => v,
                    Decoded::Undefined => unreachable!("checked above"),
                };
                return Ok(ReadResult::Value(v));
            }
            slot -= 1;
            combo[slot] += 1;
            if combo[slot] < unknown_choices[slot].1.len() {
                break;
            }
            combo[slot] = 0;
        }
        if combo.iter().all(|c| *c == 0) {
            // odometer wrapped: every completion decoded
            return Ok(ReadResult::UnknownMarker);
        }
    }
}

/// Execute the program under one fixed structure choice. Pure in
/// `(program, choice, initial memory)`.
pub fn run(
    p: &Program,
    choice: &StructureChoice,
    families: &[StructureFamily],
    m0: &Memory,
) -> Result<(Outcome, Memory), InterpError> {
    validate(p, families, m0)?;
    let resolved = choice.resolve(families)?;
    for ty in used_types(p) {
        if !resolved.contains_key(ty.as_str()) {
            return Err(InterpError::IllFormed(format!("choice misses type {ty}")));
        }
    }
    let protected: Vec<&ProtectedSpec> =
        resolved.values().filter_map(|s| s.protected_spec()).collect();
    if protected.len() > 1 {
        return Err(InterpError::InadmissibleChoice);
    }
    // per-choice region bounds
    for d in &p.decls {
        let s = resolved[d.type_name.as_str()];
        let region = d.size.unwrap_or(s.size()).max(s.size());
        if d.addr + region > m0.size() {
            return Err(InterpError::IllFormed(format!(
                "variable {} at {} with window {} leaves memory of size {}",
                d.var,
                d.addr,
                region,
                m0.size()
            )));
        }
    }
    if !placements_admissible(p, choice, families)? {
        // no execution exists under this choice
        return Ok((Outcome::Terminated, m0.clone()));
    }

    // the protected-bit location is fixed once per structure-choice session
    let mut m = m0.clone();
    if let Some(spec) = protected.first() {
        let (_, next) = m.resolve_protected_bit(spec.bit_addr)?;
        m = next;
    }

    for (step, stmt) in p.stmts.iter().enumerate() {
        match stmt {
            Statement::Write { var, value } => {
                let d = find_decl(p, var)?;
                let s = resolved[d.type_name.as_str()];
                let enc = s.encode(value, Some(d.addr))?;
                m = m.write_bytes(d.addr, &enc.bytes)?;
                if let Some(target) = s.protected_bit(d.addr) {
                    m = m.write_overlay_bit(target, enc.bit);
                }
            }
            Statement::Read { var } => {
                let d = find_decl(p, var)?;
                let s = resolved[d.type_name.as_str()];
                if let ReadResult::Stuck = typed_read(&m, s, d.addr)? {
                    return Ok((
                        Outcome::Stuck { step, reason: StuckReason::UndefinedDecode },
                        m,
                    ));
                }
            }
            Statement::ReadAs { var, type_name } => {
                let d = find_decl(p, var)?;
                let s = resolved[type_name.as_str()];
                if d.addr + s.size() > m.size() {
                    return Err(InterpError::IllFormed(format!(
                        "cast read of {var} as {type_name} leaves memory"
                    )));
                }
                if let ReadResult::Stuck = typed_read(&m, s, d.addr)? {
                    return Ok((
                        Outcome::Stuck { step, reason: StuckReason::UndefinedDecode },
                        m,
                    ));
                }
            }
            Statement::Bytecopy { dst, src, n } => {
                let cells = m.read(*src, *n)?;
                m = m.write(*dst, &cells)?;
            }
            Statement::Hw { modification } => {
                let source = match &modification.payload {
                    Payload::BitCopy { source_type, .. } => {
                        Some(*resolved.get(source_type.as_str()).ok_or_else(|| {
                            InterpError::IllFormed(format!(
                                "choice misses bit-copy source type {source_type}"
                            ))
                        })?)
                    }
                    _ => None,
                };
                m = modification.apply(&m, source)?;
            }
            Statement::Assert { var, value } => {
                let d = find_decl(p, var)?;
                let s = resolved[d.type_name.as_str()];
                match typed_read(&m, s, d.addr)? {
                    ReadResult::Stuck => {
                        return Ok((
                            Outcome::Stuck { step, reason: StuckReason::UndefinedDecode },
                            m,
                        ))
                    }
                    ReadResult::UnknownMarker => {
                        return Ok((
                            Outcome::Stuck { step, reason: StuckReason::UnknownValueUsed },
                            m,
                        ))
                    }
                    ReadResult::Value(v) => {
                        if v != *value {
                            return Ok((
                                Outcome::Stuck { step, reason: StuckReason::AssertFailed },
                                m,
                            ));
                        }
                    }
                }
            }
        }
    }
    Ok((Outcome::Terminated, m))
}

/// All choices over the families of the program's types, in lexicographic
/// (type name, member id) order.
pub fn enumerate_choices(
    p: &Program,
    families: &[StructureFamily],
    cap: u128,
) -> Result<Vec<StructureChoice>, InterpError> {
    let types = used_types(p);
    let mut lists: Vec<(String, Vec<String>)> = Vec::new();
    let mut product: u128 = 1;
    for ty in &types {
        let family = families
            .iter()
            .find(|f| f.type_name() == *ty)
            .ok_or_else(|| InterpError::IllFormed(format!("missing family for type {ty}")))?;
        let ids: Vec<String> = family.members().iter().map(|m| m.id().to_string()).collect();
        if ids.is_empty() {
            return Err(InterpError::IllFormed(format!("family {ty} is empty")));
        }
        product = product.saturating_mul(ids.len() as u128);
        lists.push((ty.clone(), ids));
    }
    if product > cap {
        return Err(InterpError::CapExceeded { product, cap });
    }
    let mut out = Vec::with_capacity(product as usize);
    let mut indices = vec![0usize; lists.len()];
    loop {
        let mut assignment = BTreeMap::new();
        for (slot, (ty, ids)) in lists.iter().enumerate() {
            assignment.insert(ty.clone(), ids[indices[slot]].clone());
        }
        out.push(StructureChoice { assignment });
        let mut slot = lists.len();
        loop {
            if slot == 0 {
                return Ok(out);
            }
            slot -= 1;
            indices[slot] += 1;
            if indices[slot] < lists[slot].1.len() {
                break;
            }
            indices[slot] = 0;
        }
        if indices.iter().all(|i| *i == 0) {
            return Ok(out);
        }
    }
}

/// Verify the program against every admissible structure choice; `Verified`
/// only when all of them terminate. The least failing choice (in enumeration
/// order) is reported.
pub fn verify(
    p: &Program,
    families: &[StructureFamily],
    m0: &Memory,
    cap: u128,
) -> Result<Verdict, InterpError> {
    verify_with_workers(p, families, m0, cap, 1)
}

/// Enumeration index of the failing choice, the stuck step, and its reason.
type ChoiceFailure = (usize, usize, StuckReason);

/// Like [`verify`], with the choice enumeration partitioned over worker
/// threads. The merge keeps the least failing choice, so the verdict does
/// not depend on the worker count.
pub fn verify_with_workers(
    p: &Program,
    families: &[StructureFamily],
    m0: &Memory,
    cap: u128,
    workers: usize,
) -> Result<Verdict, InterpError> {
    validate(p, families, m0)?;
    let choices = enumerate_choices(p, families, cap)?;
    let admissible: Vec<(usize, &StructureChoice)> = choices
        .iter()
        .enumerate()
        .filter(|(_, c)| c.is_admissible(families).unwrap_or(false))
        .collect();

    let workers = workers.clamp(1, admissible.len().max(1));
    let run_one =
        |idx: usize, choice: &StructureChoice| -> Result<Option<ChoiceFailure>, InterpError> {
        let (outcome, _) = run(p, choice, families, m0)?;
        Ok(match outcome {
            Outcome::Terminated => None,
            Outcome::Stuck { step, reason } => Some((idx, step, reason)),
        })
    };

    let first_failure: Option<ChoiceFailure> = if workers <= 1 {
        let mut found = None;
        for (idx, choice) in &admissible {
            if let Some(failure) = run_one(*idx, choice)? {
                found = Some(failure);
                break;
            }
        }
        found
    } else {
        let chunk = admissible.len().div_ceil(workers);
        let results: Vec<Result<Option<ChoiceFailure>, InterpError>> =
            std::thread::scope(|scope| {
                let mut handles = Vec::new();
                for part in admissible.chunks(chunk) {
                    let run_one = &run_one;
                    handles.push(scope.spawn(move || {
                        for (idx, choice) in part {
                            match run_one(*idx, choice) {
                                Ok(Some(failure)) => return Ok(Some(failure)),
                                Ok(None) => {}
                                Err(e) => return Err(e),
                            }
                        }
                        Ok(None)
                    }));
                }
                handles.into_iter().map(|h| h.join().expect("worker panicked")).collect()
            });
        // least failing choice wins, independent of worker count
        let mut min: Option<ChoiceFailure> = None;
        for r in results {
            if let Some(failure) = r? {
                min = Some(match min {
                    Some(best) if best.0 <= failure.0 => best,
                    _ => failure,
                });
            }
        }
        min
    };

    Ok(match first_failure {
        None => Verdict::Verified,
        Some((idx, step, reason)) => {
            Verdict::Fails { choice: choices[idx].clone(), step, reason }
        }
    })
}

/// Build a replay fixture for an oracle witness: memory pre-seeded with the
/// witness bytes and stale bits, and a program that applies the modification
/// and reads the window. Verifying it must succeed despite the injected
/// modification - that is what the witness asserts.
pub fn witness_replay(
    witness: &SensitivityWitness,
    families: &[StructureFamily],
    space: ByteSpace,
) -> Result<(Program, Memory), InterpError> {
    let reader_type = witness
        .choice
        .assignment
        .keys()
        .next()
        .cloned()
        .ok_or_else(|| InterpError::IllFormed("witness choice is empty".to_string()))?;
    let family = families
        .iter()
        .find(|f| f.type_name() == reader_type)
        .ok_or_else(|| InterpError::IllFormed(format!("missing family {reader_type}")))?;
    let max_size = family.members().iter().map(|m| m.size()).max().unwrap_or(1);
    let size = witness
        .modification
        .range
        .end()
        .max(witness.read_address + max_size)
        .max(witness.prestate.keys().next_back().map(|a| a + 1).unwrap_or(0));

    let mut free_bits: BTreeSet<BitAddress> = family
        .members()
        .iter()
        .filter_map(|m| m.protected_spec())
        .map(|p| p.bit_addr)
        .collect();
    for (addr, _) in &witness.stale_bits {
        free_bits.insert(*addr);
    }
    let mut m0 = match free_bits.iter().next() {
        Some(reserve) => Memory::new(space, size, free_bits.clone(), *reserve)?,
        None => Memory::unknown(space, size),
    };
    for (addr, byte) in &witness.prestate {
        m0 = m0.write_bytes(*addr, &[*byte])?;
    }
    for (addr, bit) in &witness.stale_bits {
        m0 = m0.write_overlay_bit(*addr, *bit);
    }

    let program = Program {
        decls: vec![Decl {
            var: "x".to_string(),
            type_name: reader_type,
            addr: witness.read_address,
            size: None,
        }],
        stmts: vec![
            Statement::Hw { modification: witness.modification.clone() },
            Statement::Read { var: "x".to_string() },
        ],
    };
    Ok((program, m0))
}
