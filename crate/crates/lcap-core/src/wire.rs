//! Framed broker/consumer protocol.
//!
//! Every frame is an 8-byte header (magic u16, version u8, msg_type u8,
//! payload_len u32, all little-endian) followed by the payload. Record
//! payloads reuse the record codec byte-for-byte, so a record travels
//! the wire exactly as it sits in a journal segment.

use thiserror::Error;

use crate::record::{decode_record_prefix, encode_record, ChangelogRecord, CodecError};

pub const WIRE_MAGIC: u16 = 0x4C43;
pub const WIRE_VERSION: u8 = 1;
pub const FRAME_HEADER_LEN: usize = 8;
pub const MAX_PAYLOAD_LEN: u32 = 16 * 1024 * 1024;
pub const DEFAULT_PORT: u16 = 5658;

pub const MSG_HELLO: u8 = 1;
pub const MSG_HELLO_ACK: u8 = 2;
pub const MSG_RECS: u8 = 3;
pub const MSG_ACK: u8 = 4;
pub const MSG_FIN: u8 = 5;
pub const MSG_STATS_REQ: u8 = 6;
pub const MSG_STATS: u8 = 7;
pub const MSG_ERROR: u8 = 8;

/// ERROR frame codes.
pub const ERR_PROTOCOL: u16 = 1;
pub const ERR_BAD_MASK: u16 = 2;
pub const ERR_BAD_ACK: u16 = 3;
pub const ERR_EPHEMERAL_OVERFLOW: u16 = 4;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum WireError {
    #[error("bad frame magic {0:#06x}")]
    BadMagic(u16),
    #[error("unsupported protocol version {0}")]
    BadVersion(u8),
    #[error("unknown message type {0}")]
    UnknownMsgType(u8),
    #[error("payload of {len} bytes exceeds the {MAX_PAYLOAD_LEN} byte cap")]
    PayloadTooLarge { len: u32 },
    #[error("truncated {field}: need {need} bytes, have {have}")]
    Truncated { field: &'static str, need: usize, have: usize },
    #[error("{0} trailing bytes after payload")]
    TrailingBytes(usize),
    #[error("unknown consumer role {0}")]
    BadRole(u8),
    #[error("{field} is not valid utf-8")]
    BadUtf8 { field: &'static str },
    #[error("record codec: {0}")]
    Codec(#[from] CodecError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u8)]
pub enum Role {
    Persistent = 1,
    Ephemeral = 2,
}

impl Role {
    fn from_u8(v: u8) -> Result<Role, WireError> {
        match v {
            1 => Ok(Role::Persistent),
            2 => Ok(Role::Ephemeral),
            other => Err(WireError::BadRole(other)),
        }
    }
}

/// One protocol message. The HELLO mask travels as raw bits so the
/// broker can reject reserved bits with an ERROR frame instead of a
/// decode failure.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Message {
    Hello { role: Role, window: u32, mask_bits: u16, group: String },
    HelloAck { consumer_id: u64, heads: Vec<(u32, u64)> },
    Recs { mdt_id: u32, records: Vec<ChangelogRecord> },
    Ack { mdt_id: u32, indices: Vec<u64> },
    Fin,
    StatsReq,
    Stats { text: String },
    Error { code: u16, msg: String },
}

impl Message {
    pub fn msg_type(&self) -> u8 {
        match self {
            Message::Hello { .. } => MSG_HELLO,
            Message::HelloAck { .. } => MSG_HELLO_ACK,
            Message::Recs { .. } => MSG_RECS,
            Message::Ack { .. } => MSG_ACK,
            Message::Fin => MSG_FIN,
            Message::StatsReq => MSG_STATS_REQ,
            Message::Stats { .. } => MSG_STATS,
            Message::Error { .. } => MSG_ERROR,
        }
    }
}

pub fn frame_encode(msg: &Message) -> Vec<u8> {
    let payload = encode_payload(msg);
    let mut out = Vec::with_capacity(FRAME_HEADER_LEN + payload.len());
    out.extend_from_slice(&WIRE_MAGIC.to_le_bytes());
    out.push(WIRE_VERSION);
    out.push(msg.msg_type());
    out.extend_from_slice(&(payload.len() as u32).to_le_bytes());
    out.extend_from_slice(&payload);
    out
}

fn encode_payload(msg: &Message) -> Vec<u8> {
    let mut p = Vec::new();
    match msg {
        Message::Hello { role, window, mask_bits, group } => {
            p.push(*role as u8);
            p.extend_from_slice(&window.to_le_bytes());
            p.extend_from_slice(&mask_bits.to_le_bytes());
            p.extend_from_slice(&(group.len() as u16).to_le_bytes());
            p.extend_from_slice(group.as_bytes());
        }
        Message::HelloAck { consumer_id, heads } => {
            p.extend_from_slice(&consumer_id.to_le_bytes());
            p.extend_from_slice(&(heads.len() as u32).to_le_bytes());
            for (mdt_id, head) in heads {
                p.extend_from_slice(&mdt_id.to_le_bytes());
                p.extend_from_slice(&head.to_le_bytes());
            }
        }
        Message::Recs { mdt_id, records } => {
            p.extend_from_slice(&mdt_id.to_le_bytes());
            p.extend_from_slice(&(records.len() as u32).to_le_bytes());
            for rec in records {
                let bytes = encode_record(rec)
                    .expect("records on the send path were validated at ingest");
                p.extend_from_slice(&bytes);
            }
        }
        Message::Ack { mdt_id, indices } => {
            p.extend_from_slice(&mdt_id.to_le_bytes());
            p.extend_from_slice(&(indices.len() as u32).to_le_bytes());
            for idx in indices {
                p.extend_from_slice(&idx.to_le_bytes());
            }
        }
        Message::Fin | Message::StatsReq => {}
        Message::Stats { text } => p.extend_from_slice(text.as_bytes()),
        Message::Error { code, msg } => {
            p.extend_from_slice(&code.to_le_bytes());
            p.extend_from_slice(&(msg.len() as u16).to_le_bytes());
            p.extend_from_slice(msg.as_bytes());
        }
    }
    p
}

/// Decodes one frame from the front of `buf`. Returns None when the
/// buffer does not yet hold a complete frame, the message and its byte
/// length when it does.
pub fn frame_decode_stream(buf: &[u8]) -> Result<Option<(Message, usize)>, WireError> {
    if buf.len() < FRAME_HEADER_LEN {
        return Ok(None);
    }
    let magic = u16::from_le_bytes([buf[0], buf[1]]);
    if magic != WIRE_MAGIC {
        return Err(WireError::BadMagic(magic));
    }
    if buf[2] != WIRE_VERSION {
        return Err(WireError::BadVersion(buf[2]));
    }
    let msg_type = buf[3];
    let payload_len = u32::from_le_bytes([buf[4], buf[5], buf[6], buf[7]]);
    if payload_len > MAX_PAYLOAD_LEN {
        return Err(WireError::PayloadTooLarge { len: payload_len });
    }
    let total = FRAME_HEADER_LEN + payload_len as usize;
    if buf.len() < total {
        return Ok(None);
    }
    let msg = decode_payload(msg_type, &buf[FRAME_HEADER_LEN..total])?;
    Ok(Some((msg, total)))
}

/// Decodes exactly one frame occupying the whole buffer.
pub fn frame_decode(buf: &[u8]) -> Result<Message, WireError> {
    match frame_decode_stream(buf)? {
        Some((msg, used)) if used == buf.len() => Ok(msg),
        Some((_, used)) => Err(WireError::TrailingBytes(buf.len() - used)),
        None => Err(WireError::Truncated {
            field: "frame",
            need: FRAME_HEADER_LEN.max(buf.len() + 1),
            have: buf.len(),
        }),
    }
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, field: &'static str, n: usize) -> Result<&'a [u8], WireError> {
        if self.buf.len() - self.pos < n {
            return Err(WireError::Truncated {
                field,
                need: n,
                have: self.buf.len() - self.pos,
            });
        }
        let s = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u8(&mut self, field: &'static str) -> Result<u8, WireError> {
        Ok(self.take(field, 1)?[0])
    }

    fn u16(&mut self, field: &'static str) -> Result<u16, WireError> {
        Ok(u16::from_le_bytes(self.take(field, 2)?.try_into().unwrap()))
    }

    fn u32(&mut self, field: &'static str) -> Result<u32, WireError> {
        Ok(u32::from_le_bytes(self.take(field, 4)?.try_into().unwrap()))
    }

    fn u64(&mut self, field: &'static str) -> Result<u64, WireError> {
        Ok(u64::from_le_bytes(self.take(field, 8)?.try_into().unwrap()))
    }

    fn utf8(&mut self, field: &'static str, n: usize) -> Result<String, WireError> {
        let bytes = self.take(field, n)?;
        String::from_utf8(bytes.to_vec()).map_err(|_| WireError::BadUtf8 { field })
    }

    fn finish(self) -> Result<(), WireError> {
        if self.pos != self.buf.len() {
            return Err(WireError::TrailingBytes(self.buf.len() - self.pos));
        }
        Ok(())
    }
}

fn decode_payload(msg_type: u8, payload: &[u8]) -> Result<Message, WireError> {
    let mut r = Reader { buf: payload, pos: 0 };
    let msg = match msg_type {
        MSG_HELLO => {
            let role = Role::from_u8(r.u8("role")?)?;
            let window = r.u32("window")?;
            let mask_bits = r.u16("mask")?;
            let group_len = r.u16("group length")? as usize;
            let group = r.utf8("group", group_len)?;
            Message::Hello { role, window, mask_bits, group }
        }
        MSG_HELLO_ACK => {
            let consumer_id = r.u64("consumer id")?;
            let count = r.u32("mdt count")? as usize;
            let mut heads = Vec::with_capacity(count.min(4096));
            for _ in 0..count {
                let mdt_id = r.u32("head mdt_id")?;
                let head = r.u64("head index")?;
                heads.push((mdt_id, head));
            }
            Message::HelloAck { consumer_id, heads }
        }
        MSG_RECS => {
            let mdt_id = r.u32("recs mdt_id")?;
            let count = r.u32("record count")? as usize;
            let mut records = Vec::with_capacity(count.min(65536));
            for _ in 0..count {
                let rest = &r.buf[r.pos..];
                let (rec, used) = decode_record_prefix(rest, mdt_id)?;
                records.push(rec);
                r.pos += used;
            }
            Message::Recs { mdt_id, records }
        }
        MSG_ACK => {
            let mdt_id = r.u32("ack mdt_id")?;
            let count = r.u32("ack count")? as usize;
            let mut indices = Vec::with_capacity(count.min(65536));
            for _ in 0..count {
                indices.push(r.u64("ack index")?);
            }
            Message::Ack { mdt_id, indices }
        }
        MSG_FIN => Message::Fin,
        MSG_STATS_REQ => Message::StatsReq,
        MSG_STATS => {
            let text = r.utf8("stats text", payload.len())?;
            Message::Stats { text }
        }
        MSG_ERROR => {
            let code = r.u16("error code")?;
            let msg_len = r.u16("error message length")? as usize;
            let msg = r.utf8("error message", msg_len)?;
            Message::Error { code, msg }
        }
        other => return Err(WireError::UnknownMsgType(other)),
    };
    r.finish()?;
    Ok(msg)
}
