//! SNMPv2c messages and PDUs.

use serde::{Deserialize, Serialize};

use super::ber::{
    decode_oid_tlv, decode_value, encode_value, integer_content, tag, write_tlv, BerValue,
    DecodeError, DecodeErrorKind, EncodeError, Reader,
};
use super::oid::Oid;

/// The version field value for SNMPv2c.
pub const VERSION_2C: i64 = 1;

pub mod error_status {
    pub const NO_ERROR: i32 = 0;
    pub const TOO_BIG: i32 = 1;
    pub const NO_SUCH_NAME: i32 = 2;
    pub const BAD_VALUE: i32 = 3;
    pub const READ_ONLY: i32 = 4;
    pub const GEN_ERR: i32 = 5;
    pub const NO_ACCESS: i32 = 6;
    pub const WRONG_TYPE: i32 = 7;
    pub const WRONG_LENGTH: i32 = 8;
    pub const WRONG_VALUE: i32 = 10;
    pub const NO_CREATION: i32 = 11;
    pub const INCONSISTENT_VALUE: i32 = 12;
    pub const COMMIT_FAILED: i32 = 14;
    pub const UNDO_FAILED: i32 = 15;
    pub const NOT_WRITABLE: i32 = 17;

    pub fn name(status: i32) -> &'static str {
        match status {
            NO_ERROR => "noError",
            TOO_BIG => "tooBig",
            NO_SUCH_NAME => "noSuchName",
            BAD_VALUE => "badValue",
            READ_ONLY => "readOnly",
            GEN_ERR => "genErr",
            NO_ACCESS => "noAccess",
            WRONG_TYPE => "wrongType",
            WRONG_LENGTH => "wrongLength",
            WRONG_VALUE => "wrongValue",
            NO_CREATION => "noCreation",
            INCONSISTENT_VALUE => "inconsistentValue",
            COMMIT_FAILED => "commitFailed",
            UNDO_FAILED => "undoFailed",
            NOT_WRITABLE => "notWritable",
            _ => "unknownError",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum PduType {
    Get,
    GetNext,
    Response,
    Set,
}

impl PduType {
    pub fn tag(self) -> u8 {
        match self {
            PduType::Get => tag::GET_REQUEST,
            PduType::GetNext => tag::GET_NEXT_REQUEST,
            PduType::Response => tag::RESPONSE,
            PduType::Set => tag::SET_REQUEST,
        }
    }

    pub fn from_tag(t: u8) -> Option<Self> {
        Some(match t {
            tag::GET_REQUEST => PduType::Get,
            tag::GET_NEXT_REQUEST => PduType::GetNext,
            tag::RESPONSE => PduType::Response,
            tag::SET_REQUEST => PduType::Set,
            _ => return None,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct VarBind {
    pub oid: Oid,
    pub value: BerValue,
}

impl VarBind {
    pub fn new(oid: Oid, value: BerValue) -> Self {
        VarBind { oid, value }
    }

    pub fn null(oid: Oid) -> Self {
        VarBind {
            oid,
            value: BerValue::Null,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Pdu {
    pub pdu_type: PduType,
    pub request_id: i32,
    pub error_status: i32,
    pub error_index: i32,
    pub varbinds: Vec<VarBind>,
}

impl Pdu {
    pub fn request(pdu_type: PduType, request_id: i32, varbinds: Vec<VarBind>) -> Self {
        Pdu {
            pdu_type,
            request_id,
            error_status: 0,
            error_index: 0,
            varbinds,
        }
    }

    pub fn response(request_id: i32, error_status: i32, error_index: i32, varbinds: Vec<VarBind>) -> Self {
        Pdu {
            pdu_type: PduType::Response,
            request_id,
            error_status,
            error_index,
            varbinds,
        }
    }

    fn check(&self) -> Result<(), String> {
        if self.error_status < 0 {
            return Err("negative error_status".into());
        }
        if self.error_index < 0 || self.error_index as usize > self.varbinds.len() {
            return Err(format!(
                "error_index {} outside [0, {}]",
                self.error_index,
                self.varbinds.len()
            ));
        }
        if self.pdu_type != PduType::Response && (self.error_status != 0 || self.error_index != 0) {
            return Err("request PDUs carry error_status = 0".into());
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Message {
    pub version: i64,
    #[serde(with = "community_text")]
    pub community: Vec<u8>,
    pub pdu: Pdu,
}

impl Message {
    pub fn v2c(community: impl AsRef<[u8]>, pdu: Pdu) -> Self {
        Message {
            version: VERSION_2C,
            community: community.as_ref().to_vec(),
            pdu,
        }
    }
}

mod community_text {
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(c: &[u8], s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&String::from_utf8_lossy(c))
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<u8>, D::Error> {
        Ok(String::deserialize(d)?.into_bytes())
    }
}

pub fn encode_message(msg: &Message) -> Result<Vec<u8>, EncodeError> {
    if msg.version != VERSION_2C {
        return Err(EncodeError::Invalid(format!("version {} is not v2c", msg.version)));
    }
    msg.pdu.check().map_err(EncodeError::Invalid)?;

    let mut vbl = Vec::new();
    for vb in &msg.pdu.varbinds {
        let mut one = Vec::new();
        encode_value(&BerValue::ObjectIdentifier(vb.oid.clone()), &mut one)?;
        encode_value(&vb.value, &mut one)?;
        write_tlv(tag::SEQUENCE, &one, &mut vbl);
    }
    let mut pdu = Vec::new();
    write_tlv(tag::INTEGER, &integer_content(msg.pdu.request_id as i64), &mut pdu);
    write_tlv(tag::INTEGER, &integer_content(msg.pdu.error_status as i64), &mut pdu);
    write_tlv(tag::INTEGER, &integer_content(msg.pdu.error_index as i64), &mut pdu);
    write_tlv(tag::SEQUENCE, &vbl, &mut pdu);

    let mut body = Vec::new();
    write_tlv(tag::INTEGER, &integer_content(msg.version), &mut body);
    write_tlv(tag::OCTET_STRING, &msg.community, &mut body);
    write_tlv(msg.pdu.pdu_type.tag(), &pdu, &mut body);

    let mut out = Vec::with_capacity(body.len() + 4);
    write_tlv(tag::SEQUENCE, &body, &mut out);
    Ok(out)
}

pub fn decode_message(bytes: &[u8]) -> Result<Message, DecodeError> {
    let mut top = Reader::new(bytes);
    let mut outer = top.read_expected(tag::SEQUENCE)?;
    top.expect_end()?;
    let body = &mut outer.content;

    let version_at = body.offset();
    let version = body.read_integer()?;
    if version != VERSION_2C {
        return Err(DecodeError {
            offset: version_at,
            kind: DecodeErrorKind::UnsupportedVersion(version),
        });
    }
    let community = body.read_expected(tag::OCTET_STRING)?.content.bytes().to_vec();

    let pdu_tlv = body.read_tlv()?;
    let pdu_type = PduType::from_tag(pdu_tlv.tag).ok_or(DecodeError {
        offset: pdu_tlv.offset,
        kind: DecodeErrorKind::UnsupportedTag(pdu_tlv.tag),
    })?;
    body.expect_end()?;

    let mut p = pdu_tlv.content;
    let int32 = |r: &mut Reader<'_>| -> Result<i32, DecodeError> {
        let at = r.offset();
        let v = r.read_integer()?;
        i32::try_from(v).map_err(|_| DecodeError {
            offset: at,
            kind: DecodeErrorKind::IntegerOverflow,
        })
    };
    let request_id = int32(&mut p)?;
    let error_status = int32(&mut p)?;
    let error_index = int32(&mut p)?;
    let mut list = p.read_expected(tag::SEQUENCE)?.content;
    p.expect_end()?;

    let mut varbinds = Vec::new();
    while !list.is_empty() {
        let mut vb = list.read_expected(tag::SEQUENCE)?.content;
        let oid = decode_oid_tlv(&mut vb)?;
        let value = decode_value(&mut vb)?;
        vb.expect_end()?;
        varbinds.push(VarBind { oid, value });
    }
    let pdu = Pdu {
        pdu_type,
        request_id,
        error_status,
        error_index,
        varbinds,
    };
    pdu.check().map_err(|reason| DecodeError {
        offset: pdu_tlv.offset,
        kind: DecodeErrorKind::BadValue(reason),
    })?;
    Ok(Message {
        version,
        community,
        pdu,
    })
}
