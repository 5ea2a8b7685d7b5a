//! A desk-scale kernel scheduler fragment: thread control blocks whose list
//! nodes are non-trivially copyable, a priority byte, pointer cells for the
//! list insert, and a message copy.
//!
//! The buggy build copies the sender's TCB node bytes over the receiver's
//! node; a byte copy misses the protected bit, so the external-state family
//! rejects the later node read. The fixed build copies the message buffer
//! into a disjoint region instead. Under a plain TCB family the buggy copy
//! lands a valid same-typed representation and goes undetected.

use std::collections::{BTreeMap, BTreeSet};

use crate::family::{make_protected_family, StructureFamily};
use crate::interp::{Decl, Program, Statement};
use crate::memory::{BitAddress, Memory};
use crate::semantics::{DecodeMap, EncodeMap, SemanticStructure, Value, Variant};
use crate::space::{Addr, ByteSpace, ByteValue};

/// Memory layout of the scenario (radix 4, 8 cells):
/// sender TCB node at 0, sender message byte at 2, priority at 3, receiver
/// TCB node at 4, list head pointer at 5, receive buffer at 6. The free bit
/// 7.1 backs protected-bit storage.
pub const SENDER_NODE: Addr = 0;
pub const SENDER_MSG: Addr = 2;
pub const PRIORITY: Addr = 3;
pub const RECEIVER_NODE: Addr = 4;
pub const LIST_HEAD: Addr = 5;
pub const RECEIVE_BUFFER: Addr = 6;

pub const FREE_BIT: BitAddress = BitAddress { byte: 7, bit: 1 };

fn plain_pair(
    id: &str,
    space: ByteSpace,
    addresses: BTreeSet<Addr>,
    pairs: &[(&str, u32)],
) -> SemanticStructure {
    let enc: BTreeMap<Value, Vec<ByteValue>> = pairs
        .iter()
        .map(|(v, b)| (Value::new(*v), vec![ByteValue(*b)]))
        .collect();
    let dec: BTreeMap<Vec<ByteValue>, Value> =
        enc.iter().map(|(v, bytes)| (bytes.clone(), v.clone())).collect();
    SemanticStructure::from_parts(
        id,
        space,
        enc.keys().cloned().collect(),
        addresses,
        1,
        Variant::Plain,
        EncodeMap::Plain(enc),
        DecodeMap::Plain(dec),
        None,
    )
}

/// The families of the scenario: the TCB node type (external-state by
/// default, plain when `plain_tcb`), the priority byte, and the opaque list
/// pointer.
pub fn case_study_families(plain_tcb: bool) -> Vec<StructureFamily> {
    let space = ByteSpace::desk();
    let node_values: BTreeSet<Value> =
        [Value::new("tcb_idle"), Value::new("tcb_run")].into_iter().collect();
    let node_addrs: BTreeSet<Addr> = [SENDER_NODE, RECEIVER_NODE].into_iter().collect();
    let tcb = if plain_tcb {
        StructureFamily::new(
            "tcb",
            vec![plain_pair(
                "tcb_plain",
                space,
                node_addrs,
                &[("tcb_idle", 0), ("tcb_run", 1)],
            )],
        )
        .expect("one member")
    } else {
        let bits: BTreeSet<BitAddress> = [FREE_BIT].into_iter().collect();
        make_protected_family("tcb", space, &node_values, &node_addrs, &bits)
            .expect("non-empty inputs")
    };
    let prio = StructureFamily::new(
        "prio",
        vec![plain_pair(
            "prio_pair",
            space,
            [PRIORITY].into_iter().collect(),
            &[("prio_lo", 2), ("prio_hi", 3)],
        )],
    )
    .expect("one member");
    let ptr = StructureFamily::new(
        "ptr",
        vec![plain_pair(
            "ptr_pair",
            space,
            [LIST_HEAD].into_iter().collect(),
            &[("ptr_nil", 0), ("ptr_node", 1)],
        )],
    )
    .expect("one member");
    vec![tcb, prio, ptr]
}

/// Initial memory: everything unknown, one free bit for protected storage.
pub fn case_study_memory() -> Memory {
    Memory::new(
        ByteSpace::desk(),
        8,
        [FREE_BIT].into_iter().collect(),
        FREE_BIT,
    )
    .expect("reserve bit is free")
}

/// The scheduler fragment. With `buggy`, the message copy reads the sender's
/// TCB node and lands on the receiver's node; fixed, it moves the message
/// byte into the receive buffer.
pub fn build_case_study(buggy: bool) -> Program {
    let (copy_dst, copy_src) =
        if buggy { (RECEIVER_NODE, SENDER_NODE) } else { (RECEIVE_BUFFER, SENDER_MSG) };
    Program {
        decls: vec![
            Decl {
                var: "tcb_snd".to_string(),
                type_name: "tcb".to_string(),
                addr: SENDER_NODE,
                size: None,
            },
            Decl {
                var: "tcb_rcv".to_string(),
                type_name: "tcb".to_string(),
                addr: RECEIVER_NODE,
                size: None,
            },
            Decl {
                var: "prio".to_string(),
                type_name: "prio".to_string(),
                addr: PRIORITY,
                size: None,
            },
            Decl {
                var: "head".to_string(),
                type_name: "ptr".to_string(),
                addr: LIST_HEAD,
                size: None,
            },
        ],
        stmts: vec![
            Statement::Write { var: "tcb_snd".to_string(), value: Value::new("tcb_run") },
            Statement::Write { var: "tcb_rcv".to_string(), value: Value::new("tcb_idle") },
            Statement::Write { var: "prio".to_string(), value: Value::new("prio_hi") },
            Statement::Write { var: "head".to_string(), value: Value::new("ptr_nil") },
            // the IPC copy
            Statement::Bytecopy { dst: copy_dst, src: copy_src, n: 1 },
            // preemption path: read the priority, walk both nodes, insert
            Statement::Read { var: "prio".to_string() },
            Statement::Read { var: "tcb_snd".to_string() },
            Statement::Read { var: "tcb_rcv".to_string() },
            Statement::Read { var: "head".to_string() },
            Statement::Write { var: "head".to_string(), value: Value::new("ptr_node") },
            Statement::Assert { var: "prio".to_string(), value: Value::new("prio_hi") },
        ],
    }
}

/// Step index of the receiver-node read the buggy copy breaks.
pub const RECEIVER_READ_STEP: usize = 7;

/// Step index of the byte copy.
pub const BYTECOPY_STEP: usize = 4;
