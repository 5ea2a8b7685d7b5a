//! Families of semantic structures and the constructors used throughout the
//! checks: the total gcc-style boolean, two-point partial booleans, the
//! permutation closure of a partial structure, seeded address-dependent
//! scrambles, and protected-bit families.
//!
//! Verification quantifies over a family: a program property holds only if it
//! holds under every member. A structure choice fixes one member per type.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::memory::BitAddress;
use crate::rng::SplitMix64;
use crate::semantics::{
    DecodeMap, EncodeMap, ProtectedSpec, SemanticStructure, SemanticsError, Value, Variant,
    WellformedReport,
};
use crate::space::{Addr, ByteSpace, ByteValue};

/// The admissible structures for one type.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct StructureFamily {
    type_name: String,
    members: Vec<SemanticStructure>,
    common_values: BTreeSet<Value>,
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum FamilyError {
    #[error("family {0} has no members")]
    Empty(String),
    #[error("member {member}: common value {value} is not representable")]
    CommonValueMissing { member: String, value: Value },
    #[error("duplicate member id {0}")]
    DuplicateId(String),
}

impl StructureFamily {
    /// Family over `members`, with the common value set defaulting to the
    /// intersection of the members' value sets.
    pub fn new(
        type_name: impl Into<String>,
        members: Vec<SemanticStructure>,
    ) -> Result<Self, FamilyError> {
        let type_name = type_name.into();
        if members.is_empty() {
            return Err(FamilyError::Empty(type_name));
        }
        let mut common = members[0].values().clone();
        for m in &members[1..] {
            common = common.intersection(m.values()).cloned().collect();
        }
        Self::with_common_values(type_name, members, common)
    }

    pub fn with_common_values(
        type_name: impl Into<String>,
        mut members: Vec<SemanticStructure>,
        common_values: BTreeSet<Value>,
    ) -> Result<Self, FamilyError> {
        let type_name = type_name.into();
        members.sort_by(|a, b| a.id().cmp(b.id()));
        for pair in members.windows(2) {
            if pair[0].id() == pair[1].id() {
                return Err(FamilyError::DuplicateId(pair[0].id().to_string()));
            }
        }
        for m in &members {
            for v in &common_values {
                if !m.values().contains(v) {
                    return Err(FamilyError::CommonValueMissing {
                        member: m.id().to_string(),
                        value: v.clone(),
                    });
                }
            }
        }
        Ok(StructureFamily { type_name, members, common_values })
    }

    /// Degenerate empty family; useful only for vacuous checks.
    pub fn empty(type_name: impl Into<String>) -> Self {
        StructureFamily {
            type_name: type_name.into(),
            members: Vec::new(),
            common_values: BTreeSet::new(),
        }
    }

    pub fn type_name(&self) -> &str {
        &self.type_name
    }

    pub fn members(&self) -> &[SemanticStructure] {
        &self.members
    }

    pub fn member(&self, id: &str) -> Option<&SemanticStructure> {
        self.members.iter().find(|m| m.id() == id)
    }

    pub fn common_values(&self) -> &BTreeSet<Value> {
        &self.common_values
    }

    /// Well-formedness reports for every member.
    pub fn check_all(&self) -> Vec<WellformedReport> {
        self.members.iter().map(|m| m.check_wellformed()).collect()
    }

    pub fn is_wellformed(&self) -> bool {
        self.check_all().iter().all(|r| r.ok())
    }

    /// Whether any member has a protected bit (external state).
    pub fn has_protected_member(&self) -> bool {
        self.members.iter().any(|m| m.protected_spec().is_some())
    }

    /// Whether some member carries no protected bit.
    pub fn has_unprotected_member(&self) -> bool {
        self.members.iter().any(|m| m.protected_spec().is_none())
    }
}

/// One fixed assignment of a member to each type in scope.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize, Default)]
pub struct StructureChoice {
    /// type name -> member id
    pub assignment: BTreeMap<String, String>,
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum ChoiceError {
    #[error("no family for type {0}")]
    MissingFamily(String),
    #[error("family {family} has no member {member}")]
    MissingMember { family: String, member: String },
}

impl StructureChoice {
    pub fn single(type_name: impl Into<String>, member_id: impl Into<String>) -> Self {
        let mut assignment = BTreeMap::new();
        assignment.insert(type_name.into(), member_id.into());
        StructureChoice { assignment }
    }

    /// Resolve member ids against the families in scope.
    pub fn resolve<'a>(
        &self,
        families: &'a [StructureFamily],
    ) -> Result<BTreeMap<&str, &'a SemanticStructure>, ChoiceError> {
        let mut out = BTreeMap::new();
        for (ty, id) in &self.assignment {
            let family = families
                .iter()
                .find(|f| f.type_name() == ty)
                .ok_or_else(|| ChoiceError::MissingFamily(ty.clone()))?;
            let member = family.member(id).ok_or_else(|| ChoiceError::MissingMember {
                family: ty.clone(),
                member: id.clone(),
            })?;
            out.insert(ty.as_str(), member);
        }
        Ok(out)
    }

    /// At most one assigned structure, across all types, may define a
    /// protected bit.
    pub fn is_admissible(&self, families: &[StructureFamily]) -> Result<bool, ChoiceError> {
        let resolved = self.resolve(families)?;
        let protected = resolved.values().filter(|s| s.protected_spec().is_some()).count();
        Ok(protected <= 1)
    }
}

// ---------------------------------------------------------------------------
// Constructors
// ---------------------------------------------------------------------------

/// The total boolean structure: false encodes as byte 0, true as byte 1, and
/// every byte decodes (0 to false, everything else to true). Incapable of
/// detecting type errors - its decoder never gets stuck.
pub fn make_bool_total(space: ByteSpace, addresses: BTreeSet<Addr>) -> SemanticStructure {
    let t = Value::new("true");
    let f = Value::new("false");
    SemanticStructure::from_parts(
        "gcc_bool",
        space,
        [t.clone(), f.clone()].into_iter().collect(),
        addresses,
        1,
        Variant::Plain,
        EncodeMap::Plain(
            [(f, vec![ByteValue(0)]), (t, vec![ByteValue(1)])].into_iter().collect(),
        ),
        DecodeMap::Plain(space.byte_values().map(|b| {
            (vec![b], if b == ByteValue(0) { Value::new("false") } else { Value::new("true") })
        }).collect()),
        None,
    )
}

/// Total boolean over a large radix, keeping the decoder intensional instead
/// of tabulating the whole byte space.
pub fn make_bool_total_intensional(space: ByteSpace, addresses: BTreeSet<Addr>) -> SemanticStructure {
    let t = Value::new("true");
    let f = Value::new("false");
    SemanticStructure::from_parts(
        "gcc_bool",
        space,
        [t.clone(), f.clone()].into_iter().collect(),
        addresses,
        1,
        Variant::Plain,
        EncodeMap::Plain(
            [(f, vec![ByteValue(0)]), (t, vec![ByteValue(1)])].into_iter().collect(),
        ),
        DecodeMap::TotalBool,
        None,
    )
}

/// Partial boolean defined on exactly two byte values: true encodes as `t`,
/// false as `f`, and decoding is undefined for every other byte.
pub fn make_bool_pair(
    space: ByteSpace,
    addresses: BTreeSet<Addr>,
    t: ByteValue,
    f: ByteValue,
) -> Result<SemanticStructure, SemanticsError> {
    if t == f {
        return Err(SemanticsError::EqualPair(t, f));
    }
    let tv = Value::new("true");
    let fv = Value::new("false");
    let (lo, hi) = if t.0 < f.0 { (t, f) } else { (f, t) };
    Ok(SemanticStructure::from_parts(
        format!("bool_pair_{:02x}_{:02x}", lo.0, hi.0),
        space,
        [tv.clone(), fv.clone()].into_iter().collect(),
        addresses,
        1,
        Variant::Plain,
        EncodeMap::Plain([(tv.clone(), vec![t]), (fv.clone(), vec![f])].into_iter().collect()),
        DecodeMap::Plain([(vec![t], tv), (vec![f], fv)].into_iter().collect()),
        None,
    ))
}

/// The two-member boolean family over bytes {0,1} and {2,3}: no single byte
/// value decodes under every member.
pub fn bool_pair_family(
    space: ByteSpace,
    addresses: BTreeSet<Addr>,
) -> Result<StructureFamily, SemanticsError> {
    let s01 = make_bool_pair(space, addresses.clone(), ByteValue(1), ByteValue(0))?;
    let s23 = make_bool_pair(space, addresses, ByteValue(2), ByteValue(3))?;
    Ok(StructureFamily::new("bool", vec![s01, s23]).expect("two members"))
}

/// Single-member family around the total boolean.
pub fn gcc_bool_family(space: ByteSpace, addresses: BTreeSet<Addr>) -> StructureFamily {
    StructureFamily::new("bool", vec![make_bool_total(space, addresses)]).expect("one member")
}

/// A small unsigned type: values u0..u3 encode as bytes 0..3 in one byte.
/// Serves as the foreign type for implicit-cast scenarios.
pub fn make_uint2(space: ByteSpace, addresses: BTreeSet<Addr>) -> SemanticStructure {
    let pairs: Vec<(Value, ByteValue)> =
        (0..4u32).map(|i| (Value::new(format!("u{i}")), ByteValue(i))).collect();
    SemanticStructure::from_parts(
        "uint2",
        space,
        pairs.iter().map(|(v, _)| v.clone()).collect(),
        addresses,
        1,
        Variant::Plain,
        EncodeMap::Plain(pairs.iter().map(|(v, b)| (v.clone(), vec![*b])).collect()),
        DecodeMap::Plain(pairs.iter().map(|(v, b)| (vec![*b], v.clone())).collect()),
        None,
    )
}

pub fn uint2_family(space: ByteSpace, addresses: BTreeSet<Addr>) -> StructureFamily {
    StructureFamily::new("uint2", vec![make_uint2(space, addresses)]).expect("one member")
}

/// The member of the permutation closure that swaps the undefined
/// representation `bl` with `other`: its decoder first applies the swap, its
/// encoder applies it afterwards. The swap is an involution, so the
/// left-inverse law carries over from the base structure.
pub fn permutation_member(
    base: &SemanticStructure,
    bl: &[ByteValue],
    other: &[ByteValue],
) -> Result<SemanticStructure, SemanticsError> {
    if bl.len() != base.size() || other.len() != base.size() {
        return Err(SemanticsError::LengthMismatch {
            expected: base.size(),
            got: bl.len().max(other.len()),
        });
    }
    let swap = |x: &[ByteValue]| -> Vec<ByteValue> {
        if x == bl {
            other.to_vec()
        } else if x == other {
            bl.to_vec()
        } else {
            x.to_vec()
        }
    };
    let EncodeMap::Plain(enc) = base.encode_map() else {
        return Err(SemanticsError::MissingAddress);
    };
    let DecodeMap::Plain(dec) = base.decode_map() else {
        return Err(SemanticsError::MissingAddress);
    };
    let enc2: BTreeMap<Value, Vec<ByteValue>> =
        enc.iter().map(|(v, bytes)| (v.clone(), swap(bytes))).collect();
    // decoder' (x) = decoder(swap(x)), tabulated over the swapped domain
    let dec2: BTreeMap<Vec<ByteValue>, Value> =
        dec.iter().map(|(bytes, v)| (swap(bytes), v.clone())).collect();
    Ok(SemanticStructure::from_parts(
        format!("{}.pi_{}_{}", base.id(), fmt_bytes(bl), fmt_bytes(other)),
        base.space(),
        base.values().clone(),
        base.addresses().clone(),
        base.size(),
        Variant::Plain,
        EncodeMap::Plain(enc2),
        DecodeMap::Plain(dec2),
        None,
    ))
}

/// Closure of a plain partial structure under permutation of undefined
/// object representations: for every byte list outside the decoder's domain
/// and every byte list of the same length, the member obtained by swapping
/// the two.
pub fn permutation_closure(
    type_name: impl Into<String>,
    base: &SemanticStructure,
    universe_bound: u128,
) -> Result<StructureFamily, SemanticsError> {
    let undefined = base.undefined_representations(universe_bound)?;
    if undefined.is_empty() {
        return Err(SemanticsError::NoUndefinedRep);
    }
    let mut members = Vec::new();
    for bl in &undefined {
        for other in base.space().byte_lists(base.size()) {
            members.push(permutation_member(base, bl, &other)?);
        }
    }
    Ok(StructureFamily::new(type_name, members).expect("closure is non-empty"))
}

fn fmt_bytes(bytes: &[ByteValue]) -> String {
    bytes.iter().map(|b| format!("{:02x}", b.0)).collect::<Vec<_>>().join("-")
}

fn list_index(space: ByteSpace, bytes: &[ByteValue]) -> usize {
    bytes.iter().fold(0usize, |acc, b| acc * space.radix() as usize + b.0 as usize)
}

fn index_list(space: ByteSpace, mut index: usize, len: usize) -> Vec<ByteValue> {
    let mut out = vec![ByteValue(0); len];
    for slot in out.iter_mut().rev() {
        *slot = ByteValue((index % space.radix() as usize) as u32);
        index /= space.radix() as usize;
    }
    out
}

/// Address-dependent family scrambled from a plain base: each member applies
/// a seed-deterministic permutation of the byte-list space per address, so
/// the left-inverse law holds per address while representations differ
/// across addresses.
pub fn make_address_family(
    type_name: impl Into<String>,
    base: &SemanticStructure,
    scramble_seed: u64,
    member_count: usize,
) -> Result<StructureFamily, SemanticsError> {
    assert!(base.variant() == Variant::Plain, "base must be plain");
    assert!(member_count > 0);
    let space = base.space();
    let list_count = space.list_count(base.size());
    if list_count > (1 << 16) {
        return Err(SemanticsError::BoundExceeded { need: list_count, bound: 1 << 16 });
    }
    let n = list_count as usize;
    let EncodeMap::Plain(enc) = base.encode_map() else {
        return Err(SemanticsError::MissingAddress);
    };
    let DecodeMap::Plain(dec) = base.decode_map() else {
        return Err(SemanticsError::MissingAddress);
    };

    let mut members = Vec::new();
    for k in 0..member_count {
        // retry with a bumped stream until every address pair encodes some
        // value differently
        'retry: for retry in 0u64.. {
            let mut perms: BTreeMap<Addr, Vec<usize>> = BTreeMap::new();
            for a in base.addresses() {
                let mut rng = SplitMix64::new(
                    scramble_seed
                        ^ (k as u64).wrapping_mul(0x9E37_79B9)
                        ^ (*a as u64).wrapping_mul(0x85EB_CA6B)
                        ^ retry.wrapping_mul(0xC2B2_AE35),
                );
                let mut perm: Vec<usize> = (0..n).collect();
                rng.shuffle(&mut perm);
                perms.insert(*a, perm);
            }
            let addrs: Vec<Addr> = base.addresses().iter().copied().collect();
            let distinct = addrs.iter().enumerate().all(|(i, a)| {
                addrs[i + 1..].iter().all(|a2| {
                    enc.values().any(|bytes| {
                        let idx = list_index(space, bytes);
                        perms[a][idx] != perms[a2][idx]
                    })
                })
            });
            if !distinct {
                continue 'retry;
            }
            let mut enc2 = BTreeMap::new();
            let mut dec2 = BTreeMap::new();
            for a in &addrs {
                for (v, bytes) in enc {
                    let scrambled = index_list(space, perms[a][list_index(space, bytes)], base.size());
                    enc2.insert((*a, v.clone()), scrambled);
                }
                for (bytes, v) in dec {
                    let scrambled = index_list(space, perms[a][list_index(space, bytes)], base.size());
                    dec2.insert((*a, scrambled), v.clone());
                }
            }
            members.push(SemanticStructure::from_parts(
                format!("{}.scramble{}", base.id(), k),
                space,
                base.values().clone(),
                base.addresses().clone(),
                base.size(),
                Variant::AddressDependent,
                EncodeMap::ByAddress(enc2),
                DecodeMap::ByAddress(dec2),
                None,
            ));
            break 'retry;
        }
    }
    Ok(StructureFamily::new(type_name, members).expect("members non-empty"))
}

/// Protected-bit family: for each bit target, each address `a`, and each
/// value `v`, a member guarding exactly the pair `(a, v)`. All members share
/// one underlying byte encoding; the external bit is 1 exactly when the
/// guarded pair is encoded, and decoding at the guarded address fails when
/// the presented bit disagrees.
pub fn make_protected_family(
    type_name: impl Into<String>,
    space: ByteSpace,
    values: &BTreeSet<Value>,
    addresses: &BTreeSet<Addr>,
    bit_targets: &BTreeSet<BitAddress>,
) -> Result<StructureFamily, SemanticsError> {
    if values.is_empty() {
        return Err(SemanticsError::EmptyInput("values"));
    }
    if addresses.is_empty() {
        return Err(SemanticsError::EmptyInput("addresses"));
    }
    if bit_targets.is_empty() {
        return Err(SemanticsError::EmptyInput("bit_targets"));
    }
    // shared underlying encoding: the i-th value in order becomes the
    // base-radix digits of i
    let mut size = 1usize;
    while space.list_count(size) < values.len() as u128 {
        size += 1;
    }
    let enc: BTreeMap<Value, Vec<ByteValue>> = values
        .iter()
        .enumerate()
        .map(|(i, v)| (v.clone(), index_list(space, i, size)))
        .collect();
    let dec: BTreeMap<Vec<ByteValue>, Value> =
        enc.iter().map(|(v, bytes)| (bytes.clone(), v.clone())).collect();

    let mut members = Vec::new();
    for target in bit_targets {
        for addr in addresses {
            for value in values {
                members.push(SemanticStructure::from_parts(
                    format!("prot_a{}_{}_b{}_{}", addr, value, target.byte, target.bit),
                    space,
                    values.clone(),
                    addresses.clone(),
                    size,
                    Variant::ExternalState,
                    EncodeMap::Plain(enc.clone()),
                    DecodeMap::Plain(dec.clone()),
                    Some(ProtectedSpec {
                        addr: *addr,
                        bit_addr: *target,
                        value: value.clone(),
                    }),
                ));
            }
        }
    }
    Ok(StructureFamily::new(type_name, members).expect("members non-empty"))
}

// ---------------------------------------------------------------------------
// Family description files
// ---------------------------------------------------------------------------

/// On-disk family description. Encode keys are the value tag for plain
/// members and `"addr:value"` otherwise; `decode_domain`, when present,
/// replaces the inverse-of-encode default; `protected_bit` names the guarded
/// address, the storage bit, and the guarded value.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FamilyFile {
    #[serde(rename = "type")]
    pub type_name: String,
    pub radix: u32,
    pub size: usize,
    pub values: Vec<String>,
    pub addresses: Vec<Addr>,
    pub variant: Variant,
    pub members: Vec<FamilyFileMember>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FamilyFileMember {
    pub id: String,
    pub encode: BTreeMap<String, Vec<u32>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub decode_domain: Option<Vec<DecodeEntry>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub protected_bit: Option<ProtectedBitRepr>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DecodeEntry {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub addr: Option<Addr>,
    pub bytes: Vec<u32>,
    pub value: String,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ProtectedBitRepr {
    pub addr: Addr,
    /// [byte address, bit index]
    pub bit: (Addr, u8),
    pub value: String,
}

#[derive(Debug, Error)]
pub enum FamilyFileError {
    #[error("invalid radix: {0}")]
    Radix(u32),
    #[error("member {member}: bad encode key {key:?} for variant")]
    BadKey { member: String, key: String },
    #[error("member {member}: byte value {value} outside radix")]
    BadByte { member: String, value: u32 },
    #[error(transparent)]
    Family(#[from] FamilyError),
}

impl FamilyFile {
    pub fn to_family(&self) -> Result<StructureFamily, FamilyFileError> {
        let space = ByteSpace::new(self.radix).map_err(|e| FamilyFileError::Radix(e.0))?;
        let values: BTreeSet<Value> = self.values.iter().map(Value::new).collect();
        let addresses: BTreeSet<Addr> = self.addresses.iter().copied().collect();
        let mut members = Vec::new();
        for m in &self.members {
            let check_bytes = |bytes: &[u32]| -> Result<Vec<ByteValue>, FamilyFileError> {
                bytes
                    .iter()
                    .map(|b| {
                        if *b >= self.radix {
                            Err(FamilyFileError::BadByte { member: m.id.clone(), value: *b })
                        } else {
                            Ok(ByteValue(*b))
                        }
                    })
                    .collect()
            };
            // keys carry an "addr:" prefix only for per-address encodings;
            // external-state members with a shared encoding use bare values
            let by_address = m.encode.keys().any(|k| k.contains(':'));
            let encode_map = if by_address {
                let mut map = BTreeMap::new();
                for (key, bytes) in &m.encode {
                    let (addr, value) =
                        key.split_once(':').ok_or_else(|| FamilyFileError::BadKey {
                            member: m.id.clone(),
                            key: key.clone(),
                        })?;
                    let addr: Addr =
                        addr.parse().map_err(|_| FamilyFileError::BadKey {
                            member: m.id.clone(),
                            key: key.clone(),
                        })?;
                    map.insert((addr, Value::new(value)), check_bytes(bytes)?);
                }
                EncodeMap::ByAddress(map)
            } else {
                let mut map = BTreeMap::new();
                for (key, bytes) in &m.encode {
                    map.insert(Value::new(key), check_bytes(bytes)?);
                }
                EncodeMap::Plain(map)
            };
            let decode_map = match (&m.decode_domain, &encode_map) {
                (Some(entries), _) => {
                    if entries.iter().any(|e| e.addr.is_some()) {
                        let mut map = BTreeMap::new();
                        for e in entries {
                            let addr = e.addr.ok_or_else(|| FamilyFileError::BadKey {
                                member: m.id.clone(),
                                key: "decode_domain entry without addr".to_string(),
                            })?;
                            map.insert((addr, check_bytes(&e.bytes)?), Value::new(&e.value));
                        }
                        DecodeMap::ByAddress(map)
                    } else {
                        let mut map = BTreeMap::new();
                        for e in entries {
                            map.insert(check_bytes(&e.bytes)?, Value::new(&e.value));
                        }
                        DecodeMap::Plain(map)
                    }
                }
                // default: decoder is the inverse of the encoder
                (None, EncodeMap::Plain(enc)) => DecodeMap::Plain(
                    enc.iter().map(|(v, bytes)| (bytes.clone(), v.clone())).collect(),
                ),
                (None, EncodeMap::ByAddress(enc)) => DecodeMap::ByAddress(
                    enc.iter()
                        .map(|((a, v), bytes)| ((*a, bytes.clone()), v.clone()))
                        .collect(),
                ),
            };
            let protected = m.protected_bit.as_ref().map(|p| ProtectedSpec {
                addr: p.addr,
                bit_addr: BitAddress::new(p.bit.0, p.bit.1),
                value: Value::new(&p.value),
            });
            members.push(SemanticStructure::from_parts(
                m.id.clone(),
                space,
                values.clone(),
                addresses.clone(),
                self.size,
                self.variant,
                encode_map,
                decode_map,
                protected,
            ));
        }
        Ok(StructureFamily::with_common_values(
            self.type_name.clone(),
            members,
            values,
        )?)
    }

    pub fn from_family(family: &StructureFamily) -> Self {
        let first = family.members().first();
        let space = first.map(|m| m.space()).unwrap_or(ByteSpace::desk());
        let variant = first.map(|m| m.variant()).unwrap_or(Variant::Plain);
        let members = family
            .members()
            .iter()
            .map(|m| {
                let encode = match m.encode_map() {
                    EncodeMap::Plain(map) => map
                        .iter()
                        .map(|(v, bytes)| {
                            (v.to_string(), bytes.iter().map(|b| b.0).collect())
                        })
                        .collect(),
                    EncodeMap::ByAddress(map) => map
                        .iter()
                        .map(|((a, v), bytes)| {
                            (format!("{a}:{v}"), bytes.iter().map(|b| b.0).collect())
                        })
                        .collect(),
                };
                let decode_domain = match m.decode_map() {
                    DecodeMap::Plain(map) => Some(
                        map.iter()
                            .map(|(bytes, v)| DecodeEntry {
                                addr: None,
                                bytes: bytes.iter().map(|b| b.0).collect(),
                                value: v.to_string(),
                            })
                            .collect(),
                    ),
                    DecodeMap::ByAddress(map) => Some(
                        map.iter()
                            .map(|((a, bytes), v)| DecodeEntry {
                                addr: Some(*a),
                                bytes: bytes.iter().map(|b| b.0).collect(),
                                value: v.to_string(),
                            })
                            .collect(),
                    ),
                    // tabulate the intensional decoder
                    DecodeMap::TotalBool => Some(
                        m.space()
                            .byte_values()
                            .map(|b| DecodeEntry {
                                addr: None,
                                bytes: vec![b.0],
                                value: if b.0 == 0 { "false" } else { "true" }.to_string(),
                            })
                            .collect(),
                    ),
                };
                FamilyFileMember {
                    id: m.id().to_string(),
                    encode,
                    decode_domain,
                    protected_bit: m.protected_spec().map(|p| ProtectedBitRepr {
                        addr: p.addr,
                        bit: (p.bit_addr.byte, p.bit_addr.bit),
                        value: p.value.to_string(),
                    }),
                }
            })
            .collect();
        FamilyFile {
            type_name: family.type_name().to_string(),
            radix: space.radix(),
            size: first.map(|m| m.size()).unwrap_or(1),
            values: family.common_values().iter().map(|v| v.to_string()).collect(),
            addresses: first
                .map(|m| m.addresses().iter().copied().collect())
                .unwrap_or_default(),
            variant,
            members,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::semantics::Decoded;

    fn a0() -> BTreeSet<Addr> {
        [0].into_iter().collect()
    }

    #[test]
    fn pair_family_members_are_wellformed_and_sorted() {
        let family = bool_pair_family(ByteSpace::desk(), a0()).unwrap();
        assert_eq!(family.members().len(), 2);
        assert!(family.is_wellformed());
        assert_eq!(family.members()[0].id(), "bool_pair_00_01");
        assert_eq!(family.members()[1].id(), "bool_pair_02_03");
        assert_eq!(family.common_values().len(), 2);
    }

    #[test]
    fn no_byte_decodes_under_every_pair_member() {
        // at radix 4 with members {0,1} and {2,3}, every byte is undefined
        // in at least one member
        let family = bool_pair_family(ByteSpace::desk(), a0()).unwrap();
        for b in ByteSpace::desk().byte_values() {
            assert!(
                family.members().iter().any(|m| !m.is_defined(&[b], None, None)),
                "byte {b} decodes everywhere"
            );
        }
    }

    #[test]
    fn permutation_member_swaps_undefined_with_defined() {
        // radix 256: swapping [0x05] (undefined) with [0x00] (false)
        let base =
            make_bool_pair(ByteSpace::octet(), a0(), ByteValue(1), ByteValue(0)).unwrap();
        let member =
            permutation_member(&base, &[ByteValue(5)], &[ByteValue(0)]).unwrap();
        assert_eq!(member.decode(&[ByteValue(0)], None, None).unwrap(), Decoded::Undefined);
        assert_eq!(
            member.decode(&[ByteValue(5)], None, None).unwrap(),
            Decoded::Value(Value::new("false"))
        );
        assert!(member.check_wellformed().ok());
    }

    #[test]
    fn closure_has_one_member_per_undefined_and_target_list() {
        let base = make_bool_pair(ByteSpace::desk(), a0(), ByteValue(1), ByteValue(0)).unwrap();
        let closure = permutation_closure("bool", &base, 1 << 16).unwrap();
        // 2 undefined representations x 4 byte lists
        assert_eq!(closure.members().len(), 8);
        for report in closure.check_all() {
            assert!(report.ok(), "{report:?}");
        }
    }

    #[test]
    fn closure_domains_change_exactly_when_the_swap_hits_the_domain() {
        let base = make_bool_pair(ByteSpace::desk(), a0(), ByteValue(1), ByteValue(0)).unwrap();
        let base_domain: BTreeSet<Vec<ByteValue>> = ByteSpace::desk()
            .byte_lists(1)
            .filter(|bl| base.is_defined(bl, None, None))
            .collect();
        let closure = permutation_closure("bool", &base, 1 << 16).unwrap();
        let mut swapped_domains = Vec::new();
        for m in closure.members() {
            let domain: BTreeSet<Vec<ByteValue>> = ByteSpace::desk()
                .byte_lists(1)
                .filter(|bl| m.is_defined(bl, None, None))
                .collect();
            // the member id carries the swapped pair; recover the target list
            let target_in_domain = domain != base_domain;
            if target_in_domain {
                swapped_domains.push(domain);
            }
        }
        // swaps whose target was defined each produce a distinct new domain
        let distinct: BTreeSet<_> = swapped_domains.iter().cloned().collect();
        assert_eq!(swapped_domains.len(), 4, "two undefined lists x two defined targets");
        assert_eq!(distinct.len(), swapped_domains.len());
    }

    #[test]
    fn closure_of_a_total_decoder_is_rejected() {
        let total = make_bool_total(ByteSpace::desk(), a0());
        assert_eq!(
            permutation_closure("bool", &total, 1 << 16).unwrap_err(),
            SemanticsError::NoUndefinedRep
        );
    }

    #[test]
    fn address_family_satisfies_the_per_address_inverse() {
        let addrs: BTreeSet<Addr> = [0, 1].into_iter().collect();
        let base = make_bool_pair(ByteSpace::desk(), addrs, ByteValue(1), ByteValue(0)).unwrap();
        let family = make_address_family("bool", &base, 11, 4).unwrap();
        assert_eq!(family.members().len(), 4);
        for m in family.members() {
            assert!(m.check_wellformed().ok());
            // some value encodes differently at the two addresses
            assert!(m.values().iter().any(|v| {
                m.encode(v, Some(0)).unwrap().bytes != m.encode(v, Some(1)).unwrap().bytes
            }));
        }
    }

    #[test]
    fn address_family_decodes_only_at_the_encoding_address() {
        let addrs: BTreeSet<Addr> = [0, 1].into_iter().collect();
        let base = make_bool_pair(ByteSpace::desk(), addrs, ByteValue(1), ByteValue(0)).unwrap();
        let family = make_address_family("bool", &base, 11, 4).unwrap();
        // exhaustive: some member maps some value's representation at one
        // address to an undefined representation at the other
        let found = family.members().iter().any(|m| {
            m.values().iter().any(|v| {
                let at0 = m.encode(v, Some(0)).unwrap().bytes;
                m.decode(&at0, Some(1), None).unwrap().is_undefined()
            })
        });
        assert!(found, "no member distinguishes the two addresses");
    }

    #[test]
    fn protected_family_guards_one_pair_per_member() {
        let values: BTreeSet<Value> =
            [Value::new("x"), Value::new("y")].into_iter().collect();
        let addrs: BTreeSet<Addr> = [0, 4].into_iter().collect();
        let bits: BTreeSet<BitAddress> = [BitAddress::new(7, 1)].into_iter().collect();
        let family =
            make_protected_family("tcb", ByteSpace::desk(), &values, &addrs, &bits).unwrap();
        assert_eq!(family.members().len(), 4);
        for m in family.members() {
            assert!(m.check_wellformed().ok());
            let spec = m.protected_spec().unwrap();
            // the external bit is 1 exactly for the guarded pair
            let enc = m.encode(&spec.value, Some(spec.addr)).unwrap();
            assert_eq!(enc.bit, 1);
            for v in m.values() {
                for a in m.addresses() {
                    if *a != spec.addr || v != &spec.value {
                        assert_eq!(m.encode(v, Some(*a)).unwrap().bit, 0);
                    }
                }
            }
        }
    }

    #[test]
    fn protected_decode_fails_on_a_flipped_bit() {
        let values: BTreeSet<Value> =
            [Value::new("x"), Value::new("y")].into_iter().collect();
        let addrs: BTreeSet<Addr> = [0].into_iter().collect();
        let bits: BTreeSet<BitAddress> = [BitAddress::new(7, 0)].into_iter().collect();
        let family =
            make_protected_family("tcb", ByteSpace::desk(), &values, &addrs, &bits).unwrap();
        let m = &family.members()[0];
        let spec = m.protected_spec().unwrap();
        let enc = m.encode(&spec.value, Some(spec.addr)).unwrap();
        assert_eq!(
            m.decode(&enc.bytes, Some(spec.addr), Some(enc.bit)).unwrap(),
            Decoded::Value(spec.value.clone())
        );
        assert_eq!(
            m.decode(&enc.bytes, Some(spec.addr), Some(1 - enc.bit)).unwrap(),
            Decoded::Undefined
        );
    }

    #[test]
    fn empty_inputs_are_rejected() {
        let values: BTreeSet<Value> = [Value::new("x")].into_iter().collect();
        let addrs: BTreeSet<Addr> = [0].into_iter().collect();
        let bits: BTreeSet<BitAddress> = [BitAddress::new(1, 0)].into_iter().collect();
        assert!(matches!(
            make_protected_family("t", ByteSpace::desk(), &BTreeSet::new(), &addrs, &bits),
            Err(SemanticsError::EmptyInput("values"))
        ));
        assert!(matches!(
            make_protected_family("t", ByteSpace::desk(), &values, &BTreeSet::new(), &bits),
            Err(SemanticsError::EmptyInput("addresses"))
        ));
        assert!(matches!(
            make_protected_family("t", ByteSpace::desk(), &values, &addrs, &BTreeSet::new()),
            Err(SemanticsError::EmptyInput("bit_targets"))
        ));
    }

    #[test]
    fn choice_admissibility_counts_protected_assignments() {
        let values: BTreeSet<Value> =
            [Value::new("x"), Value::new("y")].into_iter().collect();
        let addrs: BTreeSet<Addr> = [0].into_iter().collect();
        let bits: BTreeSet<BitAddress> = [BitAddress::new(7, 0)].into_iter().collect();
        let prot_a =
            make_protected_family("ta", ByteSpace::desk(), &values, &addrs, &bits).unwrap();
        let prot_b =
            make_protected_family("tb", ByteSpace::desk(), &values, &addrs, &bits).unwrap();
        let families = vec![prot_a.clone(), prot_b.clone()];

        let mut choice = StructureChoice::default();
        choice
            .assignment
            .insert("ta".to_string(), prot_a.members()[0].id().to_string());
        assert!(choice.is_admissible(&families).unwrap());
        choice
            .assignment
            .insert("tb".to_string(), prot_b.members()[0].id().to_string());
        assert!(!choice.is_admissible(&families).unwrap());
    }

    #[test]
    fn family_file_round_trip() {
        let family = bool_pair_family(ByteSpace::desk(), a0()).unwrap();
        let file = FamilyFile::from_family(&family);
        let json = serde_json::to_string_pretty(&file).unwrap();
        let parsed: FamilyFile = serde_json::from_str(&json).unwrap();
        let back = parsed.to_family().unwrap();
        assert_eq!(back.members().len(), 2);
        assert!(back.is_wellformed());
        for (orig, round) in family.members().iter().zip(back.members()) {
            assert_eq!(orig.id(), round.id());
            for bl in ByteSpace::desk().byte_lists(1) {
                assert_eq!(
                    orig.decode(&bl, None, None).unwrap(),
                    round.decode(&bl, None, None).unwrap()
                );
            }
        }
    }

    #[test]
    fn protected_family_file_round_trip() {
        let values: BTreeSet<Value> =
            [Value::new("x"), Value::new("y")].into_iter().collect();
        let addrs: BTreeSet<Addr> = [0, 4].into_iter().collect();
        let bits: BTreeSet<BitAddress> = [BitAddress::new(7, 1)].into_iter().collect();
        let family =
            make_protected_family("tcb", ByteSpace::desk(), &values, &addrs, &bits).unwrap();
        let file = FamilyFile::from_family(&family);
        let back = file.to_family().unwrap();
        assert!(back.is_wellformed());
        assert_eq!(back.members().len(), family.members().len());
        assert!(back.members().iter().all(|m| m.protected_spec().is_some()));
    }
}
