//! BER primitives and the SNMP value types.
//!
//! Encoding is definite-length with minimal length octets and minimal
//! two's-complement integers. Decoding is strict: anything the encoder would
//! not have produced is rejected with the byte offset where it was found.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

use super::oid::Oid;

pub mod tag {
    pub const INTEGER: u8 = 0x02;
    pub const OCTET_STRING: u8 = 0x04;
    pub const NULL: u8 = 0x05;
    pub const OBJECT_IDENTIFIER: u8 = 0x06;
    pub const SEQUENCE: u8 = 0x30;

    pub const IP_ADDRESS: u8 = 0x40;
    pub const COUNTER32: u8 = 0x41;
    pub const GAUGE32: u8 = 0x42;
    pub const TIMETICKS: u8 = 0x43;
    /// Highest single-octet primitive application tag.
    pub const APPLICATION_MAX: u8 = 0x5E;

    pub const NO_SUCH_OBJECT: u8 = 0x80;
    pub const NO_SUCH_INSTANCE: u8 = 0x81;
    pub const END_OF_MIB_VIEW: u8 = 0x82;

    pub const GET_REQUEST: u8 = 0xA0;
    pub const GET_NEXT_REQUEST: u8 = 0xA1;
    pub const RESPONSE: u8 = 0xA2;
    pub const SET_REQUEST: u8 = 0xA3;
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum BerValue {
    Integer(i64),
    OctetString(Vec<u8>),
    Null,
    ObjectIdentifier(Oid),
    IpAddress([u8; 4]),
    Counter32(u32),
    Gauge32(u32),
    TimeTicks(u32),
    /// Application-class primitive this codec has no model for (Opaque,
    /// Counter64, ...). Carried through untouched.
    Unknown { tag: u8, data: Vec<u8> },
    NoSuchObject,
    NoSuchInstance,
    EndOfMibView,
}

/// Value syntax without a payload, as named in MIB registry files.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum ValueKind {
    Integer,
    OctetString,
    Null,
    ObjectIdentifier,
    IpAddress,
    Counter32,
    Gauge32,
    TimeTicks,
    Opaque,
    NoSuchObject,
    NoSuchInstance,
    EndOfMibView,
}

impl ValueKind {
    pub fn as_str(self) -> &'static str {
        match self {
            ValueKind::Integer => "Integer",
            ValueKind::OctetString => "OctetString",
            ValueKind::Null => "Null",
            ValueKind::ObjectIdentifier => "ObjectIdentifier",
            ValueKind::IpAddress => "IpAddress",
            ValueKind::Counter32 => "Counter32",
            ValueKind::Gauge32 => "Gauge32",
            ValueKind::TimeTicks => "TimeTicks",
            ValueKind::Opaque => "Opaque",
            ValueKind::NoSuchObject => "NoSuchObject",
            ValueKind::NoSuchInstance => "NoSuchInstance",
            ValueKind::EndOfMibView => "EndOfMibView",
        }
    }
}

impl fmt::Display for ValueKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ValueKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Ok(match s.trim() {
            "Integer" | "INTEGER" | "Integer32" => ValueKind::Integer,
            "OctetString" | "OCTET STRING" | "DisplayString" => ValueKind::OctetString,
            "Null" | "NULL" => ValueKind::Null,
            "ObjectIdentifier" | "OBJECT IDENTIFIER" => ValueKind::ObjectIdentifier,
            "IpAddress" => ValueKind::IpAddress,
            "Counter32" | "Counter" => ValueKind::Counter32,
            "Gauge32" | "Gauge" | "Unsigned32" => ValueKind::Gauge32,
            "TimeTicks" => ValueKind::TimeTicks,
            "Opaque" => ValueKind::Opaque,
            "NoSuchObject" => ValueKind::NoSuchObject,
            "NoSuchInstance" => ValueKind::NoSuchInstance,
            "EndOfMibView" => ValueKind::EndOfMibView,
            other => return Err(format!("unknown value syntax '{other}'")),
        })
    }
}

impl BerValue {
    pub fn kind(&self) -> ValueKind {
        match self {
            BerValue::Integer(_) => ValueKind::Integer,
            BerValue::OctetString(_) => ValueKind::OctetString,
            BerValue::Null => ValueKind::Null,
            BerValue::ObjectIdentifier(_) => ValueKind::ObjectIdentifier,
            BerValue::IpAddress(_) => ValueKind::IpAddress,
            BerValue::Counter32(_) => ValueKind::Counter32,
            BerValue::Gauge32(_) => ValueKind::Gauge32,
            BerValue::TimeTicks(_) => ValueKind::TimeTicks,
            BerValue::Unknown { .. } => ValueKind::Opaque,
            BerValue::NoSuchObject => ValueKind::NoSuchObject,
            BerValue::NoSuchInstance => ValueKind::NoSuchInstance,
            BerValue::EndOfMibView => ValueKind::EndOfMibView,
        }
    }

    pub fn octets(s: impl AsRef<[u8]>) -> Self {
        BerValue::OctetString(s.as_ref().to_vec())
    }

    /// True for the v2c exception markers.
    pub fn is_exception(&self) -> bool {
        matches!(
            self,
            BerValue::NoSuchObject | BerValue::NoSuchInstance | BerValue::EndOfMibView
        )
    }

    pub fn tag(&self) -> u8 {
        match self {
            BerValue::Integer(_) => tag::INTEGER,
            BerValue::OctetString(_) => tag::OCTET_STRING,
            BerValue::Null => tag::NULL,
            BerValue::ObjectIdentifier(_) => tag::OBJECT_IDENTIFIER,
            BerValue::IpAddress(_) => tag::IP_ADDRESS,
            BerValue::Counter32(_) => tag::COUNTER32,
            BerValue::Gauge32(_) => tag::GAUGE32,
            BerValue::TimeTicks(_) => tag::TIMETICKS,
            BerValue::Unknown { tag, .. } => *tag,
            BerValue::NoSuchObject => tag::NO_SUCH_OBJECT,
            BerValue::NoSuchInstance => tag::NO_SUCH_INSTANCE,
            BerValue::EndOfMibView => tag::END_OF_MIB_VIEW,
        }
    }

    /// Builds a value of `kind` from its text form (as used in seed files and
    /// the API). Octet strings may be given as `hex:..`.
    pub fn parse_as(kind: ValueKind, text: &str) -> Result<Self, String> {
        let int = |t: &str| t.trim().parse::<i64>().map_err(|e| format!("'{t}': {e}"));
        let uint = |t: &str| t.trim().parse::<u32>().map_err(|e| format!("'{t}': {e}"));
        Ok(match kind {
            ValueKind::Integer => BerValue::Integer(int(text)?),
            ValueKind::OctetString => match text.strip_prefix("hex:") {
                Some(h) => BerValue::OctetString(hex::decode(h).map_err(|e| e.to_string())?),
                None => BerValue::octets(text),
            },
            ValueKind::Null => BerValue::Null,
            ValueKind::ObjectIdentifier => {
                BerValue::ObjectIdentifier(text.parse().map_err(|e: super::oid::OidError| e.to_string())?)
            }
            ValueKind::IpAddress => {
                let ip: std::net::Ipv4Addr = text.trim().parse().map_err(|e| format!("'{text}': {e}"))?;
                BerValue::IpAddress(ip.octets())
            }
            ValueKind::Counter32 => BerValue::Counter32(uint(text)?),
            ValueKind::Gauge32 => BerValue::Gauge32(uint(text)?),
            ValueKind::TimeTicks => BerValue::TimeTicks(uint(text)?),
            ValueKind::Opaque => BerValue::Unknown {
                tag: 0x44,
                data: hex::decode(text.trim_start_matches("hex:")).map_err(|e| e.to_string())?,
            },
            ValueKind::NoSuchObject => BerValue::NoSuchObject,
            ValueKind::NoSuchInstance => BerValue::NoSuchInstance,
            ValueKind::EndOfMibView => BerValue::EndOfMibView,
        })
    }
}

impl fmt::Display for BerValue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            BerValue::Integer(v) => write!(f, "{v}"),
            BerValue::OctetString(b) => match std::str::from_utf8(b) {
                Ok(s)
                    if !s.starts_with("hex:")
                        && !s.chars().any(|c| c.is_control() && c != '\n' && c != '\t') =>
                {
                    f.write_str(s)
                }
                _ => write!(f, "hex:{}", hex::encode(b)),
            },
            BerValue::Null => f.write_str("null"),
            BerValue::ObjectIdentifier(o) => write!(f, "{o}"),
            BerValue::IpAddress(a) => write!(f, "{}.{}.{}.{}", a[0], a[1], a[2], a[3]),
            BerValue::Counter32(v) | BerValue::Gauge32(v) | BerValue::TimeTicks(v) => {
                write!(f, "{v}")
            }
            BerValue::Unknown { data, .. } => write!(f, "hex:{}", hex::encode(data)),
            BerValue::NoSuchObject => f.write_str("noSuchObject"),
            BerValue::NoSuchInstance => f.write_str("noSuchInstance"),
            BerValue::EndOfMibView => f.write_str("endOfMibView"),
        }
    }
}

/// JSON form: `{"type": "OctetString", "value": "text"}`; unknown tags keep
/// their tag number.
#[derive(Serialize, Deserialize)]
struct ValueRepr {
    #[serde(rename = "type")]
    kind: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    value: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    tag: Option<u8>,
}

impl Serialize for BerValue {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        let (value, tag) = match self {
            BerValue::Null
            | BerValue::NoSuchObject
            | BerValue::NoSuchInstance
            | BerValue::EndOfMibView => (None, None),
            BerValue::Unknown { tag, data } => (Some(format!("hex:{}", hex::encode(data))), Some(*tag)),
            other => (Some(other.to_string()), None),
        };
        ValueRepr {
            kind: self.kind().as_str().to_string(),
            value,
            tag,
        }
        .serialize(s)
    }
}

impl<'de> Deserialize<'de> for BerValue {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let repr = ValueRepr::deserialize(d)?;
        let kind: ValueKind = repr.kind.parse().map_err(serde::de::Error::custom)?;
        let text = repr.value.unwrap_or_default();
        let mut v = BerValue::parse_as(kind, &text).map_err(serde::de::Error::custom)?;
        if let (BerValue::Unknown { tag, .. }, Some(t)) = (&mut v, repr.tag) {
            *tag = t;
        }
        Ok(v)
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum EncodeError {
    #[error("value out of range for tag 0x{tag:02x}: {reason}")]
    OutOfRange { tag: u8, reason: String },
    #[error("invalid message: {0}")]
    Invalid(String),
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("decode error at offset {offset}: {kind}")]
pub struct DecodeError {
    pub offset: usize,
    pub kind: DecodeErrorKind,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum DecodeErrorKind {
    #[error("truncated input")]
    Truncated,
    #[error("length overflow")]
    LengthOverflow,
    #[error("non-minimal length encoding")]
    NonMinimalLength,
    #[error("indefinite length not allowed")]
    IndefiniteLength,
    #[error("trailing data")]
    TrailingData,
    #[error("expected tag 0x{expected:02x}, found 0x{found:02x}")]
    UnexpectedTag { expected: u8, found: u8 },
    #[error("unsupported tag 0x{0:02x}")]
    UnsupportedTag(u8),
    #[error("non-minimal integer encoding")]
    NonMinimalInteger,
    #[error("integer does not fit its type")]
    IntegerOverflow,
    #[error("malformed object identifier")]
    BadOid,
    #[error("malformed value: {0}")]
    BadValue(String),
    #[error("unsupported SNMP version {0}")]
    UnsupportedVersion(i64),
}

pub(crate) fn write_length(len: usize, out: &mut Vec<u8>) {
    if len < 0x80 {
        out.push(len as u8);
    } else {
        let bytes = (len as u64).to_be_bytes();
        let skip = bytes.iter().take_while(|b| **b == 0).count();
        out.push(0x80 | (8 - skip) as u8);
        out.extend_from_slice(&bytes[skip..]);
    }
}

pub(crate) fn write_tlv(tag: u8, content: &[u8], out: &mut Vec<u8>) {
    out.push(tag);
    write_length(content.len(), out);
    out.extend_from_slice(content);
}

/// Minimal two's-complement content octets.
pub(crate) fn integer_content(v: i64) -> Vec<u8> {
    let bytes = v.to_be_bytes();
    let mut start = 0;
    while start < 7 {
        let (b, next) = (bytes[start], bytes[start + 1]);
        if (b == 0x00 && next & 0x80 == 0) || (b == 0xFF && next & 0x80 != 0) {
            start += 1;
        } else {
            break;
        }
    }
    bytes[start..].to_vec()
}

fn oid_content(oid: &Oid) -> Vec<u8> {
    let arcs = oid.arcs();
    let mut out = Vec::with_capacity(arcs.len() + 4);
    let first = arcs[0] as u64 * 40 + arcs[1] as u64;
    push_base128(first, &mut out);
    for &a in &arcs[2..] {
        push_base128(a as u64, &mut out);
    }
    out
}

fn push_base128(mut v: u64, out: &mut Vec<u8>) {
    let mut tmp = [0u8; 10];
    let mut i = tmp.len();
    loop {
        i -= 1;
        tmp[i] = (v & 0x7F) as u8;
        v >>= 7;
        if v == 0 {
            break;
        }
    }
    let last = tmp.len() - 1;
    for (j, b) in tmp.iter_mut().enumerate().skip(i) {
        if j != last {
            *b |= 0x80;
        }
    }
    out.extend_from_slice(&tmp[i..]);
}

pub fn encode_value(v: &BerValue, out: &mut Vec<u8>) -> Result<(), EncodeError> {
    match v {
        BerValue::Integer(i) => write_tlv(tag::INTEGER, &integer_content(*i), out),
        BerValue::OctetString(b) => write_tlv(tag::OCTET_STRING, b, out),
        BerValue::Null => write_tlv(tag::NULL, &[], out),
        BerValue::ObjectIdentifier(o) => write_tlv(tag::OBJECT_IDENTIFIER, &oid_content(o), out),
        BerValue::IpAddress(a) => write_tlv(tag::IP_ADDRESS, a, out),
        BerValue::Counter32(n) | BerValue::Gauge32(n) | BerValue::TimeTicks(n) => {
            write_tlv(v.tag(), &integer_content(*n as i64), out)
        }
        BerValue::Unknown { tag: t, data } => {
            if !(tag::TIMETICKS + 1..=tag::APPLICATION_MAX).contains(t) {
                return Err(EncodeError::OutOfRange {
                    tag: *t,
                    reason: "opaque values must use an unmodelled application tag".into(),
                });
            }
            write_tlv(*t, data, out)
        }
        BerValue::NoSuchObject | BerValue::NoSuchInstance | BerValue::EndOfMibView => {
            write_tlv(v.tag(), &[], out)
        }
    }
    Ok(())
}

/// Cursor over a byte buffer that reports absolute offsets.
#[derive(Debug, Clone)]
pub(crate) struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
    base: usize,
}

pub(crate) struct Tlv<'a> {
    pub tag: u8,
    pub content: Reader<'a>,
    pub offset: usize,
}

impl<'a> Reader<'a> {
    pub fn new(buf: &'a [u8]) -> Self {
        Reader { buf, pos: 0, base: 0 }
    }

    pub fn offset(&self) -> usize {
        self.base + self.pos
    }

    pub fn is_empty(&self) -> bool {
        self.pos >= self.buf.len()
    }

    pub fn err(&self, kind: DecodeErrorKind) -> DecodeError {
        DecodeError {
            offset: self.offset(),
            kind,
        }
    }

    pub fn bytes(&self) -> &'a [u8] {
        &self.buf[self.pos..]
    }

    pub fn expect_end(&self) -> Result<(), DecodeError> {
        if self.is_empty() {
            Ok(())
        } else {
            Err(self.err(DecodeErrorKind::TrailingData))
        }
    }

    fn byte(&mut self) -> Result<u8, DecodeError> {
        let b = *self
            .buf
            .get(self.pos)
            .ok_or_else(|| self.err(DecodeErrorKind::Truncated))?;
        self.pos += 1;
        Ok(b)
    }

    pub fn read_tlv(&mut self) -> Result<Tlv<'a>, DecodeError> {
        let offset = self.offset();
        let tag = self.byte()?;
        if tag & 0x1F == 0x1F {
            return Err(DecodeError {
                offset,
                kind: DecodeErrorKind::UnsupportedTag(tag),
            });
        }
        let len_offset = self.offset();
        let first = self.byte()?;
        let len = if first < 0x80 {
            first as usize
        } else if first == 0x80 {
            return Err(DecodeError {
                offset: len_offset,
                kind: DecodeErrorKind::IndefiniteLength,
            });
        } else {
            let n = (first & 0x7F) as usize;
            if n > 4 {
                return Err(DecodeError {
                    offset: len_offset,
                    kind: DecodeErrorKind::LengthOverflow,
                });
            }
            let mut len = 0usize;
            for i in 0..n {
                let b = self.byte()?;
                if i == 0 && b == 0 {
                    return Err(DecodeError {
                        offset: len_offset,
                        kind: DecodeErrorKind::NonMinimalLength,
                    });
                }
                len = (len << 8) | b as usize;
            }
            if len < 0x80 {
                return Err(DecodeError {
                    offset: len_offset,
                    kind: DecodeErrorKind::NonMinimalLength,
                });
            }
            len
        };
        let start = self.pos;
        if self.buf.len() - start < len {
            return Err(DecodeError {
                offset: len_offset,
                kind: DecodeErrorKind::Truncated,
            });
        }
        self.pos += len;
        Ok(Tlv {
            tag,
            content: Reader {
                buf: &self.buf[start..start + len],
                pos: 0,
                base: self.base + start,
            },
            offset,
        })
    }

    pub fn read_expected(&mut self, expected: u8) -> Result<Tlv<'a>, DecodeError> {
        let tlv = self.read_tlv()?;
        if tlv.tag != expected {
            return Err(DecodeError {
                offset: tlv.offset,
                kind: DecodeErrorKind::UnexpectedTag {
                    expected,
                    found: tlv.tag,
                },
            });
        }
        Ok(tlv)
    }

    pub fn read_integer(&mut self) -> Result<i64, DecodeError> {
        let tlv = self.read_expected(tag::INTEGER)?;
        decode_integer(&tlv.content)
    }
}

pub(crate) fn decode_integer(r: &Reader<'_>) -> Result<i64, DecodeError> {
    let b = r.bytes();
    if b.is_empty() {
        return Err(r.err(DecodeErrorKind::BadValue("empty integer".into())));
    }
    if b.len() > 8 {
        return Err(r.err(DecodeErrorKind::IntegerOverflow));
    }
    if b.len() > 1
        && ((b[0] == 0x00 && b[1] & 0x80 == 0) || (b[0] == 0xFF && b[1] & 0x80 != 0))
    {
        return Err(r.err(DecodeErrorKind::NonMinimalInteger));
    }
    let mut v: i64 = if b[0] & 0x80 != 0 { -1 } else { 0 };
    for &byte in b {
        v = (v << 8) | byte as i64;
    }
    Ok(v)
}

fn decode_unsigned32(r: &Reader<'_>) -> Result<u32, DecodeError> {
    let b = r.bytes();
    if b.len() > 5 {
        return Err(r.err(DecodeErrorKind::IntegerOverflow));
    }
    let v = decode_integer(r)?;
    u32::try_from(v).map_err(|_| r.err(DecodeErrorKind::IntegerOverflow))
}

fn decode_oid(r: &Reader<'_>) -> Result<Oid, DecodeError> {
    let b = r.bytes();
    if b.is_empty() {
        return Err(r.err(DecodeErrorKind::BadOid));
    }
    let mut subids = Vec::new();
    let mut cur: u64 = 0;
    let mut fresh = true;
    for (i, &byte) in b.iter().enumerate() {
        if fresh && byte == 0x80 {
            return Err(DecodeError {
                offset: r.offset() + i,
                kind: DecodeErrorKind::BadOid,
            });
        }
        if cur > (u64::MAX >> 7) {
            return Err(r.err(DecodeErrorKind::BadOid));
        }
        cur = (cur << 7) | (byte & 0x7F) as u64;
        fresh = byte & 0x80 == 0;
        if fresh {
            subids.push(cur);
            cur = 0;
        }
    }
    if !fresh {
        return Err(r.err(DecodeErrorKind::BadOid));
    }
    let first = subids[0];
    let (a, bb) = match first {
        0..=39 => (0, first),
        40..=79 => (1, first - 40),
        _ => (2, first - 80),
    };
    let mut arcs = Vec::with_capacity(subids.len() + 1);
    arcs.push(a);
    arcs.push(u32::try_from(bb).map_err(|_| r.err(DecodeErrorKind::BadOid))?);
    for s in &subids[1..] {
        arcs.push(u32::try_from(*s).map_err(|_| r.err(DecodeErrorKind::BadOid))?);
    }
    Oid::new(arcs).map_err(|_| r.err(DecodeErrorKind::BadOid))
}

pub(crate) fn decode_value(r: &mut Reader<'_>) -> Result<BerValue, DecodeError> {
    let tlv = r.read_tlv()?;
    let c = &tlv.content;
    let empty = |v: BerValue| {
        if c.is_empty() {
            Ok(v)
        } else {
            Err(c.err(DecodeErrorKind::BadValue("expected empty content".into())))
        }
    };
    match tlv.tag {
        tag::INTEGER => Ok(BerValue::Integer(decode_integer(c)?)),
        tag::OCTET_STRING => Ok(BerValue::OctetString(c.bytes().to_vec())),
        tag::NULL => empty(BerValue::Null),
        tag::OBJECT_IDENTIFIER => Ok(BerValue::ObjectIdentifier(decode_oid(c)?)),
        tag::IP_ADDRESS => {
            let b: [u8; 4] = c
                .bytes()
                .try_into()
                .map_err(|_| c.err(DecodeErrorKind::BadValue("IpAddress needs 4 octets".into())))?;
            Ok(BerValue::IpAddress(b))
        }
        tag::COUNTER32 => Ok(BerValue::Counter32(decode_unsigned32(c)?)),
        tag::GAUGE32 => Ok(BerValue::Gauge32(decode_unsigned32(c)?)),
        tag::TIMETICKS => Ok(BerValue::TimeTicks(decode_unsigned32(c)?)),
        t @ 0x44..=tag::APPLICATION_MAX => Ok(BerValue::Unknown {
            tag: t,
            data: c.bytes().to_vec(),
        }),
        tag::NO_SUCH_OBJECT => empty(BerValue::NoSuchObject),
        tag::NO_SUCH_INSTANCE => empty(BerValue::NoSuchInstance),
        tag::END_OF_MIB_VIEW => empty(BerValue::EndOfMibView),
        other => Err(DecodeError {
            offset: tlv.offset,
            kind: DecodeErrorKind::UnsupportedTag(other),
        }),
    }
}

pub(crate) fn decode_oid_tlv(r: &mut Reader<'_>) -> Result<Oid, DecodeError> {
    let tlv = r.read_expected(tag::OBJECT_IDENTIFIER)?;
    decode_oid(&tlv.content)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn enc(v: &BerValue) -> Vec<u8> {
        let mut out = Vec::new();
        encode_value(v, &mut out).unwrap();
        out
    }

    fn dec(b: &[u8]) -> Result<BerValue, DecodeError> {
        let mut r = Reader::new(b);
        let v = decode_value(&mut r)?;
        r.expect_end()?;
        Ok(v)
    }

    // Frozen from pyasn1's BER encoder.
    #[test]
    fn matches_reference_encoder() {
        let oid: Oid = "1.3.6.1.2.1.1.1.0".parse().unwrap();
        assert_eq!(hex::encode(enc(&BerValue::ObjectIdentifier(oid))), "06082b06010201010100");
        assert_eq!(hex::encode(enc(&BerValue::Integer(130))), "02020082");
        let cases: &[(i64, &str)] = &[
            (0, "020100"),
            (127, "02017f"),
            (128, "02020080"),
            (-1, "0201ff"),
            (-129, "0202ff7f"),
            (255, "020200ff"),
            (256, "02020100"),
            (2147483647, "02047fffffff"),
            (i64::MAX, "02087fffffffffffffff"),
        ];
        for (v, hexs) in cases {
            assert_eq!(hex::encode(enc(&BerValue::Integer(*v))), *hexs, "{v}");
        }
        let big_arc: Oid = "2.999.3".parse().unwrap();
        assert_eq!(hex::encode(enc(&BerValue::ObjectIdentifier(big_arc))), "06038837 03".replace(' ', ""));
        let cisco: Oid = "1.3.6.1.4.1.9.1.620".parse().unwrap();
        assert_eq!(hex::encode(enc(&BerValue::ObjectIdentifier(cisco))), "06092b06010401090184 6c".replace(' ', ""));
        let long = enc(&BerValue::octets(vec![b'x'; 200]));
        assert_eq!(&long[..3], &[0x04, 0x81, 0xC8]);
    }

    // X.690 minimal forms for negative powers of two (the reference encoder
    // pads these with an extra 0xff).
    #[test]
    fn negative_powers_of_two_are_minimal() {
        assert_eq!(hex::encode(enc(&BerValue::Integer(-128))), "020180");
        assert_eq!(hex::encode(enc(&BerValue::Integer(-2147483648))), "020480000000");
        assert_eq!(hex::encode(enc(&BerValue::Integer(i64::MIN))), "02088000000000000000");
    }

    #[test]
    fn unsigned_types_use_leading_zero() {
        assert_eq!(hex::encode(enc(&BerValue::Counter32(u32::MAX))), "410500ffffffff");
        assert_eq!(dec(&[0x41, 0x05, 0x00, 0xff, 0xff, 0xff, 0xff]).unwrap(), BerValue::Counter32(u32::MAX));
        assert_eq!(dec(&[0x42, 0x01, 0x80]).unwrap_err().kind, DecodeErrorKind::IntegerOverflow);
    }

    #[test]
    fn strictness() {
        assert_eq!(dec(&[0x02, 0x02, 0x00, 0x01]).unwrap_err().kind, DecodeErrorKind::NonMinimalInteger);
        assert_eq!(dec(&[0x02, 0x81, 0x01, 0x01]).unwrap_err().kind, DecodeErrorKind::NonMinimalLength);
        assert_eq!(dec(&[0x04, 0x80]).unwrap_err().kind, DecodeErrorKind::IndefiniteLength);
        assert_eq!(dec(&[0x04, 0x05, 0x61]).unwrap_err(), DecodeError { offset: 1, kind: DecodeErrorKind::Truncated });
        assert_eq!(dec(&[0x05, 0x00, 0x00]).unwrap_err().kind, DecodeErrorKind::TrailingData);
        assert_eq!(dec(&[0x06, 0x02, 0x2b, 0x86]).unwrap_err().kind, DecodeErrorKind::BadOid);
        assert_eq!(dec(&[0x06, 0x02, 0x2b, 0x80]).unwrap_err().kind, DecodeErrorKind::BadOid);
        assert_eq!(dec(&[0x65, 0x00]).unwrap_err().kind, DecodeErrorKind::UnsupportedTag(0x65));
    }

    #[test]
    fn unknown_application_tags_survive() {
        let v = dec(&[0x46, 0x02, 0x01, 0x02]).unwrap();
        assert_eq!(v, BerValue::Unknown { tag: 0x46, data: vec![1, 2] });
        assert_eq!(enc(&v), vec![0x46, 0x02, 0x01, 0x02]);
        let mut out = Vec::new();
        assert!(encode_value(&BerValue::Unknown { tag: 0x41, data: vec![] }, &mut out).is_err());
    }

    #[test]
    fn json_form() {
        let v = BerValue::octets("noc@example.net");
        let j = serde_json::to_string(&v).unwrap();
        assert_eq!(j, r#"{"type":"OctetString","value":"noc@example.net"}"#);
        assert_eq!(serde_json::from_str::<BerValue>(&j).unwrap(), v);
        let bin = BerValue::OctetString(vec![0, 1, 255]);
        let back: BerValue = serde_json::from_str(&serde_json::to_string(&bin).unwrap()).unwrap();
        assert_eq!(back, bin);
        let ip: BerValue = serde_json::from_str(r#"{"type":"IpAddress","value":"10.0.0.1"}"#).unwrap();
        assert_eq!(ip, BerValue::IpAddress([10, 0, 0, 1]));
    }
}
