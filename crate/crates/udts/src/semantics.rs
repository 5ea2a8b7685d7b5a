//! Semantic structures: one possible encoding of a type's values as byte
//! lists, given by a total encoder and a partial decoder.
//!
//! Three variants with increasing checking power:
//!
//! * `Plain` — the encoding is address-independent and decoding is the left
//!   inverse of encoding.
//! * `AddressDependent` — encoder and decoder take the object's address; the
//!   left-inverse law holds per address.
//! * `ExternalState` — additionally one address carries a protected bit
//!   stored outside the object's bytes; decoding fails when the presented
//!   bit disagrees with what encoding would have produced.
//!
//! Decoders are extensional tables at desk scale so that their undefined
//! domains can be enumerated; a total-boolean intensional decoder covers the
//! realistic radix-256 configuration.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::memory::BitAddress;
use crate::space::{Addr, Bit, ByteSpace, ByteValue};

/// A typed value, identified by its tag within a finite universe.
#[derive(
    Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize,
)]
#[serde(transparent)]
pub struct Value(pub String);

impl Value {
    pub fn new(tag: impl Into<String>) -> Self {
        Value(tag.into())
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl From<&str> for Value {
    fn from(s: &str) -> Self {
        Value(s.to_string())
    }
}

impl std::fmt::Display for Value {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Variant {
    Plain,
    AddressDependent,
    ExternalState,
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum SemanticsError {
    #[error("value {0} is not in the structure's value set")]
    ValueNotInV(Value),
    #[error("address {0} is not in the structure's address set")]
    AddressNotAligned(Addr),
    #[error("byte list has length {got}, structure size is {expected}")]
    LengthMismatch { expected: usize, got: usize },
    #[error("this variant requires an address argument")]
    MissingAddress,
    #[error("decoding at the protected address requires the external bit")]
    MissingBit,
    #[error("object representations {0} and {1} must differ")]
    EqualPair(ByteValue, ByteValue),
    #[error("decoder is total: no undefined object representation to permute")]
    NoUndefinedRep,
    #[error("enumeration needs {need} steps, bound is {bound}")]
    BoundExceeded { need: u128, bound: u128 },
    #[error("empty input: {0}")]
    EmptyInput(&'static str),
    #[error("structure sizes differ: {0} vs {1}")]
    SizeMismatch(usize, usize),
}

/// Encoder table.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub(crate) enum EncodeMap {
    Plain(BTreeMap<Value, Vec<ByteValue>>),
    ByAddress(BTreeMap<(Addr, Value), Vec<ByteValue>>),
}

/// Decoder table, or the intensional total-boolean escape hatch.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub(crate) enum DecodeMap {
    Plain(BTreeMap<Vec<ByteValue>, Value>),
    ByAddress(BTreeMap<(Addr, Vec<ByteValue>), Value>),
    /// Size-1 total decoder: byte 0 is false, everything else is true.
    TotalBool,
}

/// Protected-bit parameters of an external-state structure: the one address
/// it guards, the bit-granular storage location, and the one guarded value.
/// Encoding at the guarded address emits bit 1 exactly for the guarded value;
/// decoding there fails when the presented bit disagrees.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ProtectedSpec {
    pub addr: Addr,
    pub bit_addr: BitAddress,
    pub value: Value,
}

/// Encoder output: the object's bytes plus the external bit (a dummy 0
/// unless the address is protected).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Encoded {
    pub bytes: Vec<ByteValue>,
    pub bit: Bit,
}

/// Decoder output. `Undefined` is a value of the semantics (a detected type
/// error), not a caller error.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Decoded {
    Value(Value),
    Undefined,
}

impl Decoded {
    pub fn is_undefined(&self) -> bool {
        matches!(self, Decoded::Undefined)
    }

    pub fn value(&self) -> Option<&Value> {
        match self {
            Decoded::Value(v) => Some(v),
            Decoded::Undefined => None,
        }
    }
}

/// One semantic structure for a type.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SemanticStructure {
    id: String,
    space: ByteSpace,
    values: BTreeSet<Value>,
    addresses: BTreeSet<Addr>,
    size: usize,
    variant: Variant,
    encode_map: EncodeMap,
    decode_map: DecodeMap,
    protected: Option<ProtectedSpec>,
}

impl SemanticStructure {
    /// Assemble a structure from raw parts without validation; use
    /// [`SemanticStructure::check_wellformed`] to report violations.
    #[allow(clippy::too_many_arguments)]
    pub(crate) fn from_parts(
        id: impl Into<String>,
        space: ByteSpace,
        values: BTreeSet<Value>,
        addresses: BTreeSet<Addr>,
        size: usize,
        variant: Variant,
        encode_map: EncodeMap,
        decode_map: DecodeMap,
        protected: Option<ProtectedSpec>,
    ) -> Self {
        SemanticStructure {
            id: id.into(),
            space,
            values,
            addresses,
            size,
            variant,
            encode_map,
            decode_map,
            protected,
        }
    }

    /// Plain structure from explicit encode and decode tables; the value set
    /// is the encoder's key set. The decoder may cover byte lists outside
    /// the encoder's image.
    pub fn plain(
        id: impl Into<String>,
        space: ByteSpace,
        addresses: BTreeSet<Addr>,
        size: usize,
        encode: BTreeMap<Value, Vec<ByteValue>>,
        decode: BTreeMap<Vec<ByteValue>, Value>,
    ) -> Self {
        let values = encode.keys().cloned().collect();
        SemanticStructure::from_parts(
            id,
            space,
            values,
            addresses,
            size,
            Variant::Plain,
            EncodeMap::Plain(encode),
            DecodeMap::Plain(decode),
            None,
        )
    }

    pub fn id(&self) -> &str {
        &self.id
    }

    pub fn space(&self) -> ByteSpace {
        self.space
    }

    pub fn values(&self) -> &BTreeSet<Value> {
        &self.values
    }

    pub fn addresses(&self) -> &BTreeSet<Addr> {
        &self.addresses
    }

    pub fn size(&self) -> usize {
        self.size
    }

    pub fn variant(&self) -> Variant {
        self.variant
    }

    pub fn protected_spec(&self) -> Option<&ProtectedSpec> {
        self.protected.as_ref()
    }

    /// The protected-bit map, defined on at most one address.
    pub fn protected_bit(&self, addr: Addr) -> Option<BitAddress> {
        match &self.protected {
            Some(p) if p.addr == addr => Some(p.bit_addr),
            _ => None,
        }
    }

    /// Addresses the encoder needs: `None` once for plain structures, each
    /// alignment address otherwise.
    pub fn encode_addresses(&self) -> Vec<Option<Addr>> {
        match self.variant {
            Variant::Plain => vec![None],
            _ => self.addresses.iter().map(|a| Some(*a)).collect(),
        }
    }

    /// Translate a value into its object representation.
    pub fn encode(&self, v: &Value, addr: Option<Addr>) -> Result<Encoded, SemanticsError> {
        if !self.values.contains(v) {
            return Err(SemanticsError::ValueNotInV(v.clone()));
        }
        let addr = match self.variant {
            Variant::Plain => None,
            _ => {
                let a = addr.ok_or(SemanticsError::MissingAddress)?;
                if !self.addresses.contains(&a) {
                    return Err(SemanticsError::AddressNotAligned(a));
                }
                Some(a)
            }
        };
        let bytes = match (&self.encode_map, addr) {
            (EncodeMap::Plain(map), _) => map.get(v).cloned(),
            (EncodeMap::ByAddress(map), Some(a)) => map.get(&(a, v.clone())).cloned(),
            (EncodeMap::ByAddress(_), None) => return Err(SemanticsError::MissingAddress),
        }
        .ok_or_else(|| SemanticsError::ValueNotInV(v.clone()))?;
        let bit = match (&self.protected, addr) {
            (Some(p), Some(a)) if p.addr == a => (v == &p.value) as Bit,
            _ => 0, // dummy bit
        };
        Ok(Encoded { bytes, bit })
    }

    /// Translate an object representation back into a value, or `Undefined`
    /// when the representation (with its address and external bit, where
    /// applicable) is outside the decoder's domain.
    pub fn decode(
        &self,
        bytes: &[ByteValue],
        addr: Option<Addr>,
        pbit: Option<Bit>,
    ) -> Result<Decoded, SemanticsError> {
        if bytes.len() != self.size {
            return Err(SemanticsError::LengthMismatch {
                expected: self.size,
                got: bytes.len(),
            });
        }
        let addr = match self.variant {
            Variant::Plain => None,
            _ => Some(addr.ok_or(SemanticsError::MissingAddress)?),
        };
        let decoded = match (&self.decode_map, addr) {
            (DecodeMap::Plain(map), _) => map.get(bytes).cloned(),
            (DecodeMap::ByAddress(map), Some(a)) => map.get(&(a, bytes.to_vec())).cloned(),
            (DecodeMap::ByAddress(_), None) => return Err(SemanticsError::MissingAddress),
            (DecodeMap::TotalBool, _) => Some(if bytes[0] == ByteValue(0) {
                Value::new("false")
            } else {
                Value::new("true")
            }),
        };
        let Some(v) = decoded else {
            return Ok(Decoded::Undefined);
        };
        if let (Some(p), Some(a)) = (&self.protected, addr) {
            if p.addr == a {
                let presented = pbit.ok_or(SemanticsError::MissingBit)?;
                let expected = (v == p.value) as Bit;
                if presented != expected {
                    return Ok(Decoded::Undefined);
                }
            }
        }
        Ok(Decoded::Value(v))
    }

    /// Whether `bytes` (with address and bit as applicable) decodes to a
    /// value. Propagates caller errors such as length mismatches as panics in
    /// enumeration contexts where inputs are constructed correctly.
    pub fn is_defined(&self, bytes: &[ByteValue], addr: Option<Addr>, pbit: Option<Bit>) -> bool {
        matches!(self.decode(bytes, addr, pbit), Ok(Decoded::Value(_)))
    }

    /// Exhaustive well-formedness check over the structure's value and
    /// address sets.
    pub fn check_wellformed(&self) -> WellformedReport {
        let mut violations = Vec::new();
        if self.values.is_empty() {
            violations.push(Violation::new("values", "value set is empty"));
        }
        if self.size == 0 {
            violations.push(Violation::new("size", "size must be positive"));
        }
        match (self.variant, &self.protected) {
            (Variant::ExternalState, None) => violations.push(Violation::new(
                "protected-bit",
                "external-state structure without a protected bit",
            )),
            (Variant::ExternalState, Some(p)) => {
                if !self.addresses.contains(&p.addr) {
                    violations.push(Violation::new(
                        "protected-bit",
                        format!("protected address {} not in the address set", p.addr),
                    ));
                }
                if p.bit_addr.bit >= self.space.bits_per_byte() {
                    violations.push(Violation::new(
                        "protected-bit",
                        format!("bit index {} exceeds bits per byte", p.bit_addr.bit),
                    ));
                }
                if !self.values.contains(&p.value) {
                    violations.push(Violation::new(
                        "protected-bit",
                        format!("guarded value {} not in the value set", p.value),
                    ));
                }
            }
            (_, Some(_)) => violations.push(Violation::new(
                "protected-bit",
                "only external-state structures may define a protected bit",
            )),
            _ => {}
        }
        if self.size > 0 {
            for v in &self.values {
                for addr in self.encode_addresses() {
                    match self.encode(v, addr) {
                        Err(e) => violations.push(Violation::new(
                            "length",
                            format!("encode({v}{}) failed: {e}", fmt_addr(addr)),
                        )),
                        Ok(enc) => {
                            if enc.bytes.len() != self.size {
                                violations.push(Violation::new(
                                    "length",
                                    format!(
                                        "encode({v}{}) has length {}, size is {}",
                                        fmt_addr(addr),
                                        enc.bytes.len(),
                                        self.size
                                    ),
                                ));
                                continue;
                            }
                            if let Some(b) = enc.bytes.iter().find(|b| !self.space.contains(**b)) {
                                violations.push(Violation::new(
                                    "byte-range",
                                    format!(
                                        "encode({v}{}) emits byte {b} outside radix {}",
                                        fmt_addr(addr),
                                        self.space.radix()
                                    ),
                                ));
                                continue;
                            }
                            match self.decode(&enc.bytes, addr, Some(enc.bit)) {
                                Ok(Decoded::Value(w)) if w == *v => {}
                                other => violations.push(Violation::new(
                                    "left-inverse",
                                    format!(
                                        "decode(encode({v}{})) yielded {other:?}",
                                        fmt_addr(addr)
                                    ),
                                )),
                            }
                        }
                    }
                }
            }
        }
        WellformedReport { structure_id: self.id.clone(), violations }
    }

    /// Structure equivalence: same values, addresses, size, variant, and
    /// byte space; encoders and decoders may differ.
    pub fn equivalent(&self, other: &SemanticStructure) -> bool {
        self.values == other.values
            && self.addresses == other.addresses
            && self.size == other.size
            && self.variant == other.variant
            && self.space == other.space
    }

    /// Byte lists of length `size` outside the decoder's domain (plain
    /// structures only), in lexicographic order.
    pub fn undefined_representations(
        &self,
        bound: u128,
    ) -> Result<Vec<Vec<ByteValue>>, SemanticsError> {
        let need = self.space.list_count(self.size);
        if need > bound {
            return Err(SemanticsError::BoundExceeded { need, bound });
        }
        Ok(self
            .space
            .byte_lists(self.size)
            .filter(|bl| !self.is_defined(bl, None, None))
            .collect())
    }

    pub(crate) fn encode_map(&self) -> &EncodeMap {
        &self.encode_map
    }

    pub(crate) fn decode_map(&self) -> &DecodeMap {
        &self.decode_map
    }
}

fn fmt_addr(addr: Option<Addr>) -> String {
    match addr {
        Some(a) => format!(", {a}"),
        None => String::new(),
    }
}

/// One well-formedness violation; `rule` names the broken side condition.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Violation {
    pub rule: String,
    pub detail: String,
}

impl Violation {
    fn new(rule: &str, detail: impl Into<String>) -> Self {
        Violation { rule: rule.to_string(), detail: detail.into() }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct WellformedReport {
    pub structure_id: String,
    pub violations: Vec<Violation>,
}

impl WellformedReport {
    pub fn ok(&self) -> bool {
        self.violations.is_empty()
    }

    pub fn has_violation(&self, rule: &str) -> bool {
        self.violations.iter().any(|v| v.rule == rule)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::family::{make_bool_pair, make_bool_total};

    fn addrs() -> BTreeSet<Addr> {
        [0].into_iter().collect()
    }

    #[test]
    fn gcc_bool_maps_false_to_zero() {
        let s = make_bool_total(ByteSpace::octet(), addrs());
        let enc = s.encode(&Value::new("false"), None).unwrap();
        assert_eq!(enc.bytes, vec![ByteValue(0)]);
        assert_eq!(enc.bit, 0);
    }

    #[test]
    fn gcc_bool_decoder_is_total() {
        let s = make_bool_total(ByteSpace::octet(), addrs());
        assert_eq!(
            s.decode(&[ByteValue(0x37)], None, None).unwrap(),
            Decoded::Value(Value::new("true"))
        );
        for b in s.space().byte_values() {
            assert!(s.is_defined(&[b], None, None));
        }
        assert_eq!(s.undefined_representations(1 << 16).unwrap().len(), 0);
    }

    #[test]
    fn pair_structure_encodes_its_two_representations() {
        let s = make_bool_pair(ByteSpace::octet(), addrs(), ByteValue(2), ByteValue(3)).unwrap();
        assert_eq!(
            s.encode(&Value::new("true"), None).unwrap().bytes,
            vec![ByteValue(2)]
        );
        assert_eq!(
            s.decode(&[ByteValue(2)], None, None).unwrap(),
            Decoded::Value(Value::new("true"))
        );
    }

    #[test]
    fn pair_structure_is_undefined_elsewhere() {
        let s = make_bool_pair(ByteSpace::octet(), addrs(), ByteValue(1), ByteValue(0)).unwrap();
        assert_eq!(s.decode(&[ByteValue(2)], None, None).unwrap(), Decoded::Undefined);
        assert_eq!(s.decode(&[ByteValue(5)], None, None).unwrap(), Decoded::Undefined);
    }

    #[test]
    fn decode_length_mismatch_is_an_error_not_undefined() {
        let s = make_bool_pair(ByteSpace::desk(), addrs(), ByteValue(1), ByteValue(0)).unwrap();
        assert_eq!(
            s.decode(&[ByteValue(0), ByteValue(0)], None, None),
            Err(SemanticsError::LengthMismatch { expected: 1, got: 2 })
        );
    }

    #[test]
    fn wellformed_flags_size_zero() {
        let s = SemanticStructure::from_parts(
            "broken_size",
            ByteSpace::desk(),
            [Value::new("x")].into_iter().collect(),
            addrs(),
            0,
            Variant::Plain,
            EncodeMap::Plain([(Value::new("x"), vec![])].into_iter().collect()),
            DecodeMap::Plain(BTreeMap::new()),
            None,
        );
        let report = s.check_wellformed();
        assert!(!report.ok());
        assert!(report.has_violation("size"));
    }

    #[test]
    fn wellformed_flags_broken_left_inverse() {
        // decode(encode(true)) = false
        let t = Value::new("true");
        let f = Value::new("false");
        let s = SemanticStructure::from_parts(
            "broken_inverse",
            ByteSpace::desk(),
            [t.clone(), f.clone()].into_iter().collect(),
            addrs(),
            1,
            Variant::Plain,
            EncodeMap::Plain(
                [(t.clone(), vec![ByteValue(1)]), (f.clone(), vec![ByteValue(0)])]
                    .into_iter()
                    .collect(),
            ),
            DecodeMap::Plain(
                [(vec![ByteValue(1)], f.clone()), (vec![ByteValue(0)], f)]
                    .into_iter()
                    .collect(),
            ),
            None,
        );
        let report = s.check_wellformed();
        assert!(report.has_violation("left-inverse"));
    }

    #[test]
    fn equivalence_ignores_conversion_functions() {
        let a = addrs();
        let s01 = make_bool_pair(ByteSpace::desk(), a.clone(), ByteValue(1), ByteValue(0)).unwrap();
        let s23 = make_bool_pair(ByteSpace::desk(), a.clone(), ByteValue(2), ByteValue(3)).unwrap();
        assert!(s01.equivalent(&s23));
        assert!(s01.equivalent(&s01));
        assert!(s23.equivalent(&s01), "equivalence is symmetric");

        let wider: BTreeSet<Addr> = [0, 1].into_iter().collect();
        let other = make_bool_pair(ByteSpace::desk(), wider, ByteValue(1), ByteValue(0)).unwrap();
        assert!(!s01.equivalent(&other));
    }

    #[test]
    fn equal_pair_is_rejected() {
        assert_eq!(
            make_bool_pair(ByteSpace::desk(), addrs(), ByteValue(2), ByteValue(2)).unwrap_err(),
            SemanticsError::EqualPair(ByteValue(2), ByteValue(2))
        );
    }

    #[test]
    fn equivalence_is_an_equivalence_relation() {
        let a = addrs();
        let wider: BTreeSet<Addr> = [0, 1].into_iter().collect();
        let set = [
            make_bool_pair(ByteSpace::desk(), a.clone(), ByteValue(1), ByteValue(0)).unwrap(),
            make_bool_pair(ByteSpace::desk(), a.clone(), ByteValue(2), ByteValue(3)).unwrap(),
            make_bool_total(ByteSpace::desk(), a),
            make_bool_pair(ByteSpace::desk(), wider, ByteValue(1), ByteValue(0)).unwrap(),
        ];
        for x in &set {
            assert!(x.equivalent(x));
            for y in &set {
                assert_eq!(x.equivalent(y), y.equivalent(x));
                for z in &set {
                    if x.equivalent(y) && y.equivalent(z) {
                        assert!(x.equivalent(z));
                    }
                }
            }
        }
    }
}
