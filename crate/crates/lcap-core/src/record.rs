//! Changelog records and their canonical binary encoding.
//!
//! A record describes one modifying metadata operation. Beyond the fixed
//! header (index, opcode, timestamp, target and parent FIDs), a record
//! carries optional extension fields described by a bitmask: a job
//! identifier, the source location of a rename, and the caller's uid/gid.
//! Consumers request the extensions they need and records are remapped to
//! that shape before delivery, so heterogeneous records coexist without
//! wasting space on empty fields.
//!
//! Encoded layout, all integers little-endian:
//!
//! ```text
//! reclen  u32   total encoded length, including this field
//! opcode  u8
//! mask    u16   extension bits, reserved bits must be zero
//! pad     u8    always zero
//! index   u64
//! time_ns u64
//! target  fid   seq u64, oid u32, ver u32
//! parent  fid
//! -- 56 byte fixed header, then extensions in ascending bit order --
//! jobid          32 raw bytes                      (bit 0)
//! rename_source  fid + fid + len u16 + name bytes  (bit 1)
//! uid_gid        u32 + u32                         (bit 2)
//! -- final variable-length field --
//! name    len u16 + name bytes
//! ```

use std::fmt;

use thiserror::Error;

/// Fixed header length in bytes: reclen + opcode + mask + pad + index +
/// time_ns + two FIDs.
pub const FIXED_HEADER_LEN: usize = 56;

/// Smallest possible encoded record: fixed header plus an empty name.
pub const MIN_RECORD_LEN: usize = FIXED_HEADER_LEN + 2;

/// Width of the jobid extension.
pub const JOBID_LEN: usize = 32;

/// Maximum length of `name` and `source_name`.
pub const MAX_NAME_LEN: usize = 255;

/// Errors from encoding or decoding a changelog record.
#[derive(Debug, Error, PartialEq, Eq)]
pub enum CodecError {
    #[error("{field} exceeds {MAX_NAME_LEN} bytes ({len})")]
    NameTooLong { field: &'static str, len: usize },
    #[error("{field} contains forbidden byte {byte:#04x}")]
    ForbiddenNameByte { field: &'static str, byte: u8 },
    #[error("reserved extension mask bits set: {bits:#06x}")]
    ReservedMaskBits { bits: u16 },
    #[error("unknown opcode {code}")]
    UnknownOpcode { code: u8 },
    #[error("record index must be positive")]
    ZeroIndex,
    #[error("nonzero pad byte {byte:#04x}")]
    NonzeroPad { byte: u8 },
    #[error("truncated while reading {field}: need {need} bytes, have {have}")]
    Truncated { field: &'static str, need: usize, have: usize },
    #[error("declared length {declared} does not match consumed length {actual}")]
    LengthMismatch { declared: usize, actual: usize },
    #[error("field offset for {field} requires the concrete record")]
    NeedsRecord { field: &'static str },
}

/// Filesystem-wide unique file identifier.
///
/// The zero FID is reserved to mean "absent".
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default)]
pub struct Fid {
    pub seq: u64,
    pub oid: u32,
    pub ver: u32,
}

impl Fid {
    pub const NULL: Fid = Fid { seq: 0, oid: 0, ver: 0 };

    pub const fn new(seq: u64, oid: u32, ver: u32) -> Fid {
        Fid { seq, oid, ver }
    }

    pub fn is_null(&self) -> bool {
        *self == Fid::NULL
    }
}

impl fmt::Display for Fid {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}:{}", self.seq, self.oid, self.ver)
    }
}

/// Operation type of a changelog record.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
#[repr(u8)]
pub enum OpCode {
    Mark = 0,
    Creat = 1,
    Mkdir = 2,
    Hlink = 3,
    Slink = 4,
    Mknod = 5,
    Unlink = 6,
    Rmdir = 7,
    Rename = 8,
    Sattr = 9,
    Xattr = 10,
    Close = 11,
}

impl OpCode {
    pub const ALL: [OpCode; 12] = [
        OpCode::Mark,
        OpCode::Creat,
        OpCode::Mkdir,
        OpCode::Hlink,
        OpCode::Slink,
        OpCode::Mknod,
        OpCode::Unlink,
        OpCode::Rmdir,
        OpCode::Rename,
        OpCode::Sattr,
        OpCode::Xattr,
        OpCode::Close,
    ];

    pub fn from_u8(code: u8) -> Result<OpCode, CodecError> {
        Self::ALL
            .get(code as usize)
            .copied()
            .ok_or(CodecError::UnknownOpcode { code })
    }

    pub fn name(&self) -> &'static str {
        match self {
            OpCode::Mark => "mark",
            OpCode::Creat => "creat",
            OpCode::Mkdir => "mkdir",
            OpCode::Hlink => "hlink",
            OpCode::Slink => "slink",
            OpCode::Mknod => "mknod",
            OpCode::Unlink => "unlink",
            OpCode::Rmdir => "rmdir",
            OpCode::Rename => "rename",
            OpCode::Sattr => "sattr",
            OpCode::Xattr => "xattr",
            OpCode::Close => "close",
        }
    }

    pub fn from_name(name: &str) -> Option<OpCode> {
        Self::ALL.iter().copied().find(|op| op.name() == name)
    }

    /// True for operations that bring a new object into the namespace.
    pub fn creates_target(&self) -> bool {
        matches!(
            self,
            OpCode::Creat | OpCode::Mkdir | OpCode::Slink | OpCode::Mknod
        )
    }

    /// True for operations that remove an object from the namespace.
    pub fn removes_target(&self) -> bool {
        matches!(self, OpCode::Unlink | OpCode::Rmdir)
    }
}

impl fmt::Display for OpCode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Bitmask describing which extension fields a record carries (or a
/// consumer requests). Bits 3..15 are reserved and must stay zero.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub struct ExtMask(u16);

impl ExtMask {
    pub const EMPTY: ExtMask = ExtMask(0);
    pub const JOBID: ExtMask = ExtMask(1 << 0);
    pub const RENAME_SOURCE: ExtMask = ExtMask(1 << 1);
    pub const UIDGID: ExtMask = ExtMask(1 << 2);
    pub const ALL: ExtMask = ExtMask(0b111);

    pub fn from_bits(bits: u16) -> Result<ExtMask, CodecError> {
        if bits & !Self::ALL.0 != 0 {
            return Err(CodecError::ReservedMaskBits { bits });
        }
        Ok(ExtMask(bits))
    }

    pub fn bits(&self) -> u16 {
        self.0
    }

    pub fn contains(&self, other: ExtMask) -> bool {
        self.0 & other.0 == other.0
    }

    pub fn is_empty(&self) -> bool {
        self.0 == 0
    }
}

impl std::ops::BitOr for ExtMask {
    type Output = ExtMask;
    fn bitor(self, rhs: ExtMask) -> ExtMask {
        ExtMask(self.0 | rhs.0)
    }
}

impl std::ops::BitOrAssign for ExtMask {
    fn bitor_assign(&mut self, rhs: ExtMask) {
        self.0 |= rhs.0;
    }
}

impl fmt::Display for ExtMask {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:#06x}", self.0)
    }
}

/// Fixed-width job identifier, zero-padded to 32 bytes.
///
/// Equality and hashing ignore the padding: only bytes before the first
/// NUL take part in comparisons, so a decoded id compares equal to the id
/// it was built from regardless of trailing bytes.
#[derive(Clone, Copy)]
pub struct JobId([u8; JOBID_LEN]);

impl JobId {
    pub const ZERO: JobId = JobId([0; JOBID_LEN]);

    /// Builds a zero-padded id from up to 32 bytes of content.
    pub fn new(content: &[u8]) -> Result<JobId, CodecError> {
        if content.len() > JOBID_LEN {
            return Err(CodecError::NameTooLong { field: "jobid", len: content.len() });
        }
        let mut raw = [0u8; JOBID_LEN];
        raw[..content.len()].copy_from_slice(content);
        Ok(JobId(raw))
    }

    pub fn from_raw(raw: [u8; JOBID_LEN]) -> JobId {
        JobId(raw)
    }

    pub fn as_raw(&self) -> &[u8; JOBID_LEN] {
        &self.0
    }

    /// Content bytes before the first NUL.
    pub fn effective(&self) -> &[u8] {
        let end = self.0.iter().position(|&b| b == 0).unwrap_or(JOBID_LEN);
        &self.0[..end]
    }

    pub fn is_zero(&self) -> bool {
        self.effective().is_empty()
    }
}

impl Default for JobId {
    fn default() -> JobId {
        JobId::ZERO
    }
}

impl PartialEq for JobId {
    fn eq(&self, other: &JobId) -> bool {
        self.effective() == other.effective()
    }
}

impl Eq for JobId {}

impl std::hash::Hash for JobId {
    fn hash<H: std::hash::Hasher>(&self, state: &mut H) {
        self.effective().hash(state);
    }
}

impl fmt::Debug for JobId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "JobId({:?})", String::from_utf8_lossy(self.effective()))
    }
}

impl fmt::Display for JobId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", String::from_utf8_lossy(self.effective()))
    }
}

/// Source location of a rename: the overwritten victim (zero FID when the
/// destination name was free), the previous parent directory, and the
/// previous entry name.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RenameSource {
    pub source: Fid,
    pub source_parent: Fid,
    pub source_name: Vec<u8>,
}

impl RenameSource {
    pub fn encoded_len(&self) -> usize {
        16 + 16 + 2 + self.source_name.len()
    }
}

/// One metadata event.
///
/// `mdt_id` travels in framing and journal context, never in the encoded
/// record body. An extension field is materialized exactly when its mask
/// bit is set; the mask is derived from which options are populated.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ChangelogRecord {
    pub mdt_id: u32,
    pub index: u64,
    pub opcode: OpCode,
    pub time_ns: u64,
    pub target: Fid,
    pub parent: Fid,
    pub jobid: Option<JobId>,
    pub rename_source: Option<RenameSource>,
    pub uid_gid: Option<(u32, u32)>,
    pub name: Vec<u8>,
}

impl ChangelogRecord {
    /// Extension mask implied by the materialized fields.
    pub fn ext_mask(&self) -> ExtMask {
        let mut mask = ExtMask::EMPTY;
        if self.jobid.is_some() {
            mask |= ExtMask::JOBID;
        }
        if self.rename_source.is_some() {
            mask |= ExtMask::RENAME_SOURCE;
        }
        if self.uid_gid.is_some() {
            mask |= ExtMask::UIDGID;
        }
        mask
    }

    /// Total encoded length in bytes.
    pub fn encoded_len(&self) -> usize {
        let mut len = FIXED_HEADER_LEN;
        if self.jobid.is_some() {
            len += JOBID_LEN;
        }
        if let Some(rs) = &self.rename_source {
            len += rs.encoded_len();
        }
        if self.uid_gid.is_some() {
            len += 8;
        }
        len + 2 + self.name.len()
    }

    pub fn name_lossy(&self) -> std::borrow::Cow<'_, str> {
        String::from_utf8_lossy(&self.name)
    }
}

/// A record body, as handed to the journal for appending; the journal
/// assigns the index.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RecordBody {
    pub opcode: OpCode,
    pub time_ns: u64,
    pub target: Fid,
    pub parent: Fid,
    pub jobid: Option<JobId>,
    pub rename_source: Option<RenameSource>,
    pub uid_gid: Option<(u32, u32)>,
    pub name: Vec<u8>,
}

impl RecordBody {
    pub fn into_record(self, mdt_id: u32, index: u64) -> ChangelogRecord {
        ChangelogRecord {
            mdt_id,
            index,
            opcode: self.opcode,
            time_ns: self.time_ns,
            target: self.target,
            parent: self.parent,
            jobid: self.jobid,
            rename_source: self.rename_source,
            uid_gid: self.uid_gid,
            name: self.name,
        }
    }
}

fn check_name(field: &'static str, name: &[u8]) -> Result<(), CodecError> {
    if name.len() > MAX_NAME_LEN {
        return Err(CodecError::NameTooLong { field, len: name.len() });
    }
    if let Some(&byte) = name.iter().find(|&&b| b == 0 || b == b'/') {
        return Err(CodecError::ForbiddenNameByte { field, byte });
    }
    Ok(())
}

/// Encodes a record to its canonical byte form.
pub fn encode_record(rec: &ChangelogRecord) -> Result<Vec<u8>, CodecError> {
    if rec.index == 0 {
        return Err(CodecError::ZeroIndex);
    }
    check_name("name", &rec.name)?;
    if let Some(rs) = &rec.rename_source {
        check_name("source_name", &rs.source_name)?;
    }

    let total = rec.encoded_len();
    let mut buf = Vec::with_capacity(total);
    buf.extend_from_slice(&(total as u32).to_le_bytes());
    buf.push(rec.opcode as u8);
    buf.extend_from_slice(&rec.ext_mask().bits().to_le_bytes());
    buf.push(0);
    buf.extend_from_slice(&rec.index.to_le_bytes());
    buf.extend_from_slice(&rec.time_ns.to_le_bytes());
    put_fid(&mut buf, rec.target);
    put_fid(&mut buf, rec.parent);

    if let Some(jobid) = &rec.jobid {
        buf.extend_from_slice(jobid.as_raw());
    }
    if let Some(rs) = &rec.rename_source {
        put_fid(&mut buf, rs.source);
        put_fid(&mut buf, rs.source_parent);
        buf.extend_from_slice(&(rs.source_name.len() as u16).to_le_bytes());
        buf.extend_from_slice(&rs.source_name);
    }
    if let Some((uid, gid)) = rec.uid_gid {
        buf.extend_from_slice(&uid.to_le_bytes());
        buf.extend_from_slice(&gid.to_le_bytes());
    }
    buf.extend_from_slice(&(rec.name.len() as u16).to_le_bytes());
    buf.extend_from_slice(&rec.name);

    debug_assert_eq!(buf.len(), total);
    Ok(buf)
}

fn put_fid(buf: &mut Vec<u8>, fid: Fid) {
    buf.extend_from_slice(&fid.seq.to_le_bytes());
    buf.extend_from_slice(&fid.oid.to_le_bytes());
    buf.extend_from_slice(&fid.ver.to_le_bytes());
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize, field: &'static str) -> Result<&'a [u8], CodecError> {
        if self.buf.len() - self.pos < n {
            return Err(CodecError::Truncated {
                field,
                need: n,
                have: self.buf.len() - self.pos,
            });
        }
        let out = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(out)
    }

    fn u8(&mut self, field: &'static str) -> Result<u8, CodecError> {
        Ok(self.take(1, field)?[0])
    }

    fn u16(&mut self, field: &'static str) -> Result<u16, CodecError> {
        Ok(u16::from_le_bytes(self.take(2, field)?.try_into().unwrap()))
    }

    fn u32(&mut self, field: &'static str) -> Result<u32, CodecError> {
        Ok(u32::from_le_bytes(self.take(4, field)?.try_into().unwrap()))
    }

    fn u64(&mut self, field: &'static str) -> Result<u64, CodecError> {
        Ok(u64::from_le_bytes(self.take(8, field)?.try_into().unwrap()))
    }

    fn fid(&mut self, field: &'static str) -> Result<Fid, CodecError> {
        Ok(Fid {
            seq: self.u64(field)?,
            oid: self.u32(field)?,
            ver: self.u32(field)?,
        })
    }

    fn name(&mut self, field: &'static str) -> Result<Vec<u8>, CodecError> {
        let len = self.u16(field)? as usize;
        if len > MAX_NAME_LEN {
            return Err(CodecError::NameTooLong { field, len });
        }
        let bytes = self.take(len, field)?.to_vec();
        check_name(field, &bytes)?;
        Ok(bytes)
    }
}

/// Decodes exactly one record occupying the whole buffer. Trailing bytes
/// beyond the declared record length are an error.
pub fn decode_record(buf: &[u8], mdt_id: u32) -> Result<ChangelogRecord, CodecError> {
    let (rec, consumed) = decode_record_prefix(buf, mdt_id)?;
    if consumed != buf.len() {
        return Err(CodecError::LengthMismatch {
            declared: consumed,
            actual: buf.len(),
        });
    }
    Ok(rec)
}

/// Decodes one record from the front of `buf`, returning it along with
/// the number of bytes consumed. Bytes past the record are left alone.
pub fn decode_record_prefix(buf: &[u8], mdt_id: u32) -> Result<(ChangelogRecord, usize), CodecError> {
    let mut r = Reader { buf, pos: 0 };
    let reclen = r.u32("reclen")? as usize;
    if reclen < MIN_RECORD_LEN {
        return Err(CodecError::LengthMismatch { declared: reclen, actual: MIN_RECORD_LEN });
    }
    if buf.len() < reclen {
        return Err(CodecError::Truncated {
            field: "record body",
            need: reclen,
            have: buf.len(),
        });
    }
    // Bound all further reads by the declared length.
    let mut r = Reader { buf: &buf[..reclen], pos: 4 };

    let opcode = OpCode::from_u8(r.u8("opcode")?)?;
    let mask = ExtMask::from_bits(r.u16("ext_mask")?)?;
    let pad = r.u8("pad")?;
    if pad != 0 {
        return Err(CodecError::NonzeroPad { byte: pad });
    }
    let index = r.u64("index")?;
    if index == 0 {
        return Err(CodecError::ZeroIndex);
    }
    let time_ns = r.u64("time_ns")?;
    let target = r.fid("target")?;
    let parent = r.fid("parent")?;

    let jobid = if mask.contains(ExtMask::JOBID) {
        let raw: [u8; JOBID_LEN] = r.take(JOBID_LEN, "jobid")?.try_into().unwrap();
        Some(JobId::from_raw(raw))
    } else {
        None
    };
    let rename_source = if mask.contains(ExtMask::RENAME_SOURCE) {
        Some(RenameSource {
            source: r.fid("rename_source")?,
            source_parent: r.fid("rename_source")?,
            source_name: r.name("source_name")?,
        })
    } else {
        None
    };
    let uid_gid = if mask.contains(ExtMask::UIDGID) {
        Some((r.u32("uid_gid")?, r.u32("uid_gid")?))
    } else {
        None
    };
    let name = r.name("name")?;

    if r.pos != reclen {
        return Err(CodecError::LengthMismatch { declared: reclen, actual: r.pos });
    }

    Ok((
        ChangelogRecord {
            mdt_id,
            index,
            opcode,
            time_ns,
            target,
            parent,
            jobid,
            rename_source,
            uid_gid,
            name,
        },
        reclen,
    ))
}

/// Streaming decode: `Ok(None)` means the buffer holds only a partial
/// record and more bytes are needed; errors mean corruption.
pub fn decode_record_stream(
    buf: &[u8],
    mdt_id: u32,
) -> Result<Option<(ChangelogRecord, usize)>, CodecError> {
    if buf.len() < 4 {
        return Ok(None);
    }
    let reclen = u32::from_le_bytes(buf[..4].try_into().unwrap()) as usize;
    if reclen < MIN_RECORD_LEN {
        return Err(CodecError::LengthMismatch { declared: reclen, actual: MIN_RECORD_LEN });
    }
    if buf.len() < reclen {
        return Ok(None);
    }
    decode_record_prefix(buf, mdt_id).map(Some)
}

/// Extension fields (plus the final name) addressable by offset.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExtField {
    Jobid,
    RenameSource,
    UidGid,
    Name,
}

impl ExtField {
    fn mask_bit(&self) -> Option<ExtMask> {
        match self {
            ExtField::Jobid => Some(ExtMask::JOBID),
            ExtField::RenameSource => Some(ExtMask::RENAME_SOURCE),
            ExtField::UidGid => Some(ExtMask::UIDGID),
            ExtField::Name => None,
        }
    }
}

/// Byte offset of a field's first byte within a record encoded under
/// `mask`, or `None` when the field's bit is unset.
///
/// When a variable-size rename source precedes the requested field, the
/// concrete record must be supplied to size it.
pub fn field_offset(
    mask: ExtMask,
    field: ExtField,
    rec: Option<&ChangelogRecord>,
) -> Result<Option<usize>, CodecError> {
    if let Some(bit) = field.mask_bit() {
        if !mask.contains(bit) {
            return Ok(None);
        }
    }

    let mut offset = FIXED_HEADER_LEN;
    if let ExtField::Jobid = field {
        return Ok(Some(offset));
    }
    if mask.contains(ExtMask::JOBID) {
        offset += JOBID_LEN;
    }
    if let ExtField::RenameSource = field {
        return Ok(Some(offset));
    }
    if mask.contains(ExtMask::RENAME_SOURCE) {
        let rs = rec
            .and_then(|r| r.rename_source.as_ref())
            .ok_or(CodecError::NeedsRecord { field: "rename_source" })?;
        offset += rs.encoded_len();
    }
    if let ExtField::UidGid = field {
        return Ok(Some(offset));
    }
    if mask.contains(ExtMask::UIDGID) {
        offset += 8;
    }
    Ok(Some(offset))
}

/// Converts a record to carry exactly the extensions in `target_mask`.
///
/// Fields present in both masks are copied unchanged; fields only in the
/// target are filled with neutral defaults; fields only in the source are
/// dropped. Everything outside the extensions is untouched.
pub fn remap_record(rec: &ChangelogRecord, target_mask: ExtMask) -> ChangelogRecord {
    let mut out = rec.clone();
    out.jobid = if target_mask.contains(ExtMask::JOBID) {
        Some(rec.jobid.unwrap_or_default())
    } else {
        None
    };
    out.rename_source = if target_mask.contains(ExtMask::RENAME_SOURCE) {
        Some(rec.rename_source.clone().unwrap_or(RenameSource {
            source: Fid::NULL,
            source_parent: Fid::NULL,
            source_name: Vec::new(),
        }))
    } else {
        None
    };
    out.uid_gid = if target_mask.contains(ExtMask::UIDGID) {
        Some(rec.uid_gid.unwrap_or((0, 0)))
    } else {
        None
    };
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn minimal(index: u64) -> ChangelogRecord {
        ChangelogRecord {
            mdt_id: 1,
            index,
            opcode: OpCode::Mark,
            time_ns: 0,
            target: Fid::NULL,
            parent: Fid::NULL,
            jobid: None,
            rename_source: None,
            uid_gid: None,
            name: Vec::new(),
        }
    }

    fn sample() -> ChangelogRecord {
        ChangelogRecord {
            mdt_id: 3,
            index: 7,
            opcode: OpCode::Rename,
            time_ns: 1_000,
            target: Fid::new(0x1111, 5, 0),
            parent: Fid::new(0x2222, 9, 0),
            jobid: Some(JobId::new(b"job42").unwrap()),
            rename_source: Some(RenameSource {
                source: Fid::NULL,
                source_parent: Fid::new(0x3333, 3, 0),
                source_name: b"old".to_vec(),
            }),
            uid_gid: Some((1000, 1000)),
            name: b"new".to_vec(),
        }
    }

    #[test]
    fn minimal_record_is_58_bytes() {
        let rec = minimal(1);
        let buf = encode_record(&rec).unwrap();
        assert_eq!(buf.len(), 58);
        assert_eq!(u32::from_le_bytes(buf[..4].try_into().unwrap()), 58);

        let mut expected = vec![0u8; 58];
        expected[0] = 58; // reclen, LE
        expected[8] = 1; // index
        assert_eq!(buf, expected);
    }

    #[test]
    fn sizes_match_width_table() {
        let mut rec = minimal(1);
        rec.jobid = Some(JobId::new(b"x").unwrap());
        rec.name = b"foo".to_vec();
        assert_eq!(encode_record(&rec).unwrap().len(), 93); // 56 + 32 + 2 + 3

        let mut rec = minimal(2);
        rec.jobid = Some(JobId::ZERO);
        rec.uid_gid = Some((0, 0));
        rec.name = b"f".to_vec();
        assert_eq!(encode_record(&rec).unwrap().len(), 99); // 56 + 32 + 8 + 2 + 1
    }

    #[test]
    fn round_trip_full_record() {
        let rec = sample();
        let buf = encode_record(&rec).unwrap();
        assert_eq!(buf.len(), 138);
        let back = decode_record(&buf, rec.mdt_id).unwrap();
        assert_eq!(back, rec);
        assert_eq!(encode_record(&back).unwrap(), buf);
    }

    #[test]
    fn decode_minimal_record() {
        let buf = encode_record(&minimal(1)).unwrap();
        let rec = decode_record(&buf, 1).unwrap();
        assert!(rec.name.is_empty());
        assert_eq!(rec.ext_mask(), ExtMask::EMPTY);
    }

    #[test]
    fn truncated_buffer_is_an_error() {
        let buf = encode_record(&minimal(1)).unwrap();
        let err = decode_record(&buf[..57], 1).unwrap_err();
        assert!(matches!(err, CodecError::Truncated { .. }));
    }

    #[test]
    fn trailing_garbage_is_an_error() {
        let mut buf = encode_record(&minimal(1)).unwrap();
        buf.push(0xAA);
        let err = decode_record(&buf, 1).unwrap_err();
        assert!(matches!(err, CodecError::LengthMismatch { .. }));
    }

    #[test]
    fn reserved_mask_bits_rejected() {
        let mut buf = encode_record(&minimal(1)).unwrap();
        buf[5] = 0x08; // bit 3 is reserved
        let err = decode_record(&buf, 1).unwrap_err();
        assert_eq!(err, CodecError::ReservedMaskBits { bits: 0x08 });
    }

    #[test]
    fn unknown_opcode_rejected() {
        let mut buf = encode_record(&minimal(1)).unwrap();
        buf[4] = 12;
        let err = decode_record(&buf, 1).unwrap_err();
        assert_eq!(err, CodecError::UnknownOpcode { code: 12 });
    }

    #[test]
    fn overlong_name_rejected() {
        let mut rec = minimal(1);
        rec.name = vec![b'a'; 256];
        let err = encode_record(&rec).unwrap_err();
        assert!(matches!(err, CodecError::NameTooLong { field: "name", .. }));
    }

    #[test]
    fn name_with_slash_or_nul_rejected() {
        let mut rec = minimal(1);
        rec.name = b"a/b".to_vec();
        assert!(matches!(
            encode_record(&rec).unwrap_err(),
            CodecError::ForbiddenNameByte { field: "name", byte: b'/' }
        ));
        rec.name = b"a\0b".to_vec();
        assert!(matches!(
            encode_record(&rec).unwrap_err(),
            CodecError::ForbiddenNameByte { field: "name", byte: 0 }
        ));
    }

    #[test]
    fn stream_decode_reports_incomplete() {
        let buf = encode_record(&sample()).unwrap();
        assert!(decode_record_stream(&buf[..3], 3).unwrap().is_none());
        assert!(decode_record_stream(&buf[..buf.len() - 1], 3).unwrap().is_none());
        let (rec, used) = decode_record_stream(&buf, 3).unwrap().unwrap();
        assert_eq!(used, buf.len());
        assert_eq!(rec, sample());
    }

    #[test]
    fn offsets_for_fixed_width_extensions() {
        let mask = ExtMask::JOBID | ExtMask::UIDGID;
        assert_eq!(field_offset(mask, ExtField::Jobid, None).unwrap(), Some(56));
        assert_eq!(field_offset(mask, ExtField::UidGid, None).unwrap(), Some(88));
        assert_eq!(field_offset(mask, ExtField::Name, None).unwrap(), Some(96));
        assert_eq!(field_offset(ExtMask::UIDGID, ExtField::Jobid, None).unwrap(), None);
    }

    #[test]
    fn offset_after_rename_source_needs_record() {
        let mask = ExtMask::RENAME_SOURCE | ExtMask::UIDGID;
        let err = field_offset(mask, ExtField::UidGid, None).unwrap_err();
        assert!(matches!(err, CodecError::NeedsRecord { .. }));

        let rec = sample();
        let off = field_offset(rec.ext_mask(), ExtField::UidGid, Some(&rec))
            .unwrap()
            .unwrap();
        // 56 + jobid 32 + rename source (16 + 16 + 2 + 3)
        assert_eq!(off, 125);
    }

    #[test]
    fn remap_drops_and_fills() {
        let rec = sample();

        let stripped = remap_record(&rec, ExtMask::JOBID);
        assert_eq!(stripped.ext_mask(), ExtMask::JOBID);
        assert_eq!(stripped.jobid, rec.jobid);
        assert_eq!(stripped.rename_source, None);
        assert_eq!(stripped.uid_gid, None);
        assert_eq!(stripped.name, rec.name);

        let filled = remap_record(&minimal(1), ExtMask::JOBID);
        assert_eq!(filled.jobid, Some(JobId::ZERO));
        assert_eq!(filled.jobid.unwrap().as_raw(), &[0u8; 32]);
    }

    #[test]
    fn remap_restores_under_superset() {
        let rec = sample();
        let widened = remap_record(&rec, ExtMask::ALL);
        let back = remap_record(&widened, rec.ext_mask());
        assert_eq!(back, rec);
    }

    #[test]
    fn jobid_equality_ignores_padding() {
        let a = JobId::new(b"alpha").unwrap();
        let mut raw = *a.as_raw();
        raw[10] = b'x'; // garbage after the first NUL does not take part
        let b = JobId::from_raw(raw);
        assert_eq!(a, b);
        assert_eq!(b.effective(), b"alpha");
        assert_ne!(JobId::new(b"alpha").unwrap(), JobId::new(b"beta").unwrap());
    }
}
