//! Per-MDT append-only changelog journal with registered readers.
//!
//! Records live in fixed-size segment files; a sidecar `meta` file holds
//! the reader table and the retention floor. A record is retained until
//! every registered reader has cleared it; the floor (`first_index`)
//! advances exactly to min(cleared)+1 on clear and deregister, while
//! segment files are deleted lazily once they hold no retained record.
//! The newest segment is never deleted out from under the writer.
//!
//! Layout under the journal directory:
//!   meta                          reader table sidecar
//!   seg-<first-index, 20 digits>.log   record segments
//!
//! Segment files start with a 10-byte header (magic "LCJL", version u16,
//! mdt_id u32) followed by concatenated encoded records. The meta file is
//! magic "LCJM", version u16, mdt_id u32, first_index u64, reader_count
//! u32, then per reader: id_len u16 + id bytes + cleared u64. All
//! integers little-endian.

use std::collections::{BTreeMap, VecDeque};
use std::fs::{self, File, OpenOptions};
use std::io::{Read, Write};
use std::path::{Path, PathBuf};

use thiserror::Error;

use crate::record::{
    decode_record_stream, encode_record, ChangelogRecord, CodecError, RecordBody,
};

const SEGMENT_MAGIC: &[u8; 4] = b"LCJL";
const META_MAGIC: &[u8; 4] = b"LCJM";
const FORMAT_VERSION: u16 = 1;
pub const SEGMENT_HEADER_LEN: u64 = 10;
pub const DEFAULT_SEGMENT_BYTES: u64 = 4 * 1024 * 1024;

#[derive(Debug, Error)]
pub enum JournalError {
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("journal already exists at {0}")]
    AlreadyExists(PathBuf),
    #[error("no journal at {0}")]
    NotFound(PathBuf),
    #[error("corrupt journal: {0}")]
    Corrupt(String),
    #[error("record codec: {0}")]
    Codec(#[from] CodecError),
    #[error("reader {0:?} already registered")]
    DuplicateReader(String),
    #[error("unknown reader {0:?}")]
    UnknownReader(String),
    #[error("clear index {index} is at or past next index {next}")]
    ClearBeyondEnd { index: u64, next: u64 },
    #[error("journal holds mdt_id {found}, not {requested}")]
    MdtMismatch { found: u32, requested: u32 },
}

/// Tuning knobs. `segment_bytes` is small in tests to exercise rolling.
#[derive(Debug, Clone, Copy)]
pub struct JournalOptions {
    pub fsync: bool,
    pub segment_bytes: u64,
}

impl Default for JournalOptions {
    fn default() -> JournalOptions {
        JournalOptions { fsync: false, segment_bytes: DEFAULT_SEGMENT_BYTES }
    }
}

/// Read position of one registered reader. Plain token: all access goes
/// back through the journal, which clamps the position to retention.
#[derive(Debug, Clone)]
pub struct Cursor {
    reader: String,
    position: u64,
}

impl Cursor {
    pub fn reader(&self) -> &str {
        &self.reader
    }

    /// Next index this cursor will deliver.
    pub fn position(&self) -> u64 {
        self.position
    }
}

#[derive(Debug)]
struct SegmentInfo {
    first: u64,
    path: PathBuf,
}

#[derive(Debug)]
struct TailPos {
    /// First index of the segment the tail scan is parked in.
    seg_first: u64,
    /// Byte offset of the first unparsed byte in that segment.
    offset: u64,
}

/// One MDT's changelog journal. Single writer; any number of cursors.
#[derive(Debug)]
pub struct Journal {
    dir: PathBuf,
    mdt_id: u32,
    opts: JournalOptions,
    next_index: u64,
    first_index: u64,
    readers: BTreeMap<String, u64>,
    segments: Vec<SegmentInfo>,
    writer: Option<File>,
    active_len: u64,
    /// Retained records, indices [first_index, next_index).
    cache: VecDeque<ChangelogRecord>,
    tail: TailPos,
}

fn segment_path(dir: &Path, first: u64) -> PathBuf {
    dir.join(format!("seg-{first:020}.log"))
}

fn meta_path(dir: &Path) -> PathBuf {
    dir.join("meta")
}

fn segment_header(mdt_id: u32) -> [u8; SEGMENT_HEADER_LEN as usize] {
    let mut h = [0u8; SEGMENT_HEADER_LEN as usize];
    h[0..4].copy_from_slice(SEGMENT_MAGIC);
    h[4..6].copy_from_slice(&FORMAT_VERSION.to_le_bytes());
    h[6..10].copy_from_slice(&mdt_id.to_le_bytes());
    h
}

impl Journal {
    /// Creates a fresh journal directory. Fails if one is already there.
    pub fn create(dir: &Path, mdt_id: u32, opts: JournalOptions) -> Result<Journal, JournalError> {
        if meta_path(dir).exists() {
            return Err(JournalError::AlreadyExists(dir.to_path_buf()));
        }
        fs::create_dir_all(dir)?;
        let journal = Journal {
            dir: dir.to_path_buf(),
            mdt_id,
            opts,
            next_index: 1,
            first_index: 1,
            readers: BTreeMap::new(),
            segments: Vec::new(),
            writer: None,
            active_len: 0,
            cache: VecDeque::new(),
            tail: TailPos { seg_first: 0, offset: 0 },
        };
        journal.write_meta()?;
        Ok(journal)
    }

    /// Opens an existing journal, scanning segments to rebuild state.
    pub fn open(dir: &Path, opts: JournalOptions) -> Result<Journal, JournalError> {
        if !meta_path(dir).exists() {
            return Err(JournalError::NotFound(dir.to_path_buf()));
        }
        let (mdt_id, first_index, readers) = read_meta(&meta_path(dir))?;
        let mut journal = Journal {
            dir: dir.to_path_buf(),
            mdt_id,
            opts,
            next_index: first_index,
            first_index,
            readers,
            segments: Vec::new(),
            writer: None,
            active_len: 0,
            cache: VecDeque::new(),
            tail: TailPos { seg_first: 0, offset: 0 },
        };
        journal.load_segments()?;
        Ok(journal)
    }

    pub fn open_or_create(
        dir: &Path,
        mdt_id: u32,
        opts: JournalOptions,
    ) -> Result<Journal, JournalError> {
        if meta_path(dir).exists() {
            let journal = Journal::open(dir, opts)?;
            if journal.mdt_id != mdt_id {
                return Err(JournalError::MdtMismatch {
                    found: journal.mdt_id,
                    requested: mdt_id,
                });
            }
            Ok(journal)
        } else {
            Journal::create(dir, mdt_id, opts)
        }
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    pub fn mdt_id(&self) -> u32 {
        self.mdt_id
    }

    /// Index the next appended record receives.
    pub fn next_index(&self) -> u64 {
        self.next_index
    }

    /// Oldest retained index; `next_index` when nothing is retained.
    pub fn first_index(&self) -> u64 {
        self.first_index
    }

    pub fn retained(&self) -> u64 {
        self.next_index - self.first_index
    }

    pub fn readers(&self) -> impl Iterator<Item = (&str, u64)> {
        self.readers.iter().map(|(id, cleared)| (id.as_str(), *cleared))
    }

    pub fn cleared_of(&self, id: &str) -> Option<u64> {
        self.readers.get(id).copied()
    }

    /// Retained record by index, if it has not been purged.
    pub fn record_at(&self, index: u64) -> Option<&ChangelogRecord> {
        if index < self.first_index || index >= self.next_index {
            return None;
        }
        self.cache.get((index - self.first_index) as usize)
    }

    /// Adds a reader that sees everything currently retained.
    pub fn reader_register(&mut self, id: &str) -> Result<(), JournalError> {
        if self.readers.contains_key(id) {
            return Err(JournalError::DuplicateReader(id.to_string()));
        }
        self.readers.insert(id.to_string(), self.first_index - 1);
        self.write_meta()?;
        Ok(())
    }

    /// Removes a reader; its unacked records no longer pin retention.
    pub fn reader_deregister(&mut self, id: &str) -> Result<(), JournalError> {
        if self.readers.remove(id).is_none() {
            return Err(JournalError::UnknownReader(id.to_string()));
        }
        if self.readers.is_empty() {
            self.advance_floor(self.next_index)?;
        } else {
            self.reevaluate_floor()?;
        }
        Ok(())
    }

    /// Appends one record, durable before return. Returns its index.
    pub fn append(&mut self, body: RecordBody) -> Result<u64, JournalError> {
        let index = self.append_unflushed(body)?;
        self.flush_writer()?;
        Ok(index)
    }

    /// Appends many records with a single flush at the end (group
    /// commit). Returns the index range assigned.
    pub fn append_batch(
        &mut self,
        bodies: Vec<RecordBody>,
    ) -> Result<std::ops::Range<u64>, JournalError> {
        let start = self.next_index;
        for body in bodies {
            self.append_unflushed(body)?;
        }
        if self.next_index > start {
            self.flush_writer()?;
        }
        Ok(start..self.next_index)
    }

    fn append_unflushed(&mut self, body: RecordBody) -> Result<u64, JournalError> {
        let index = self.next_index;
        let record = body.into_record(self.mdt_id, index);
        let bytes = encode_record(&record)?;
        self.ensure_writer()?;
        self.writer.as_mut().unwrap().write_all(&bytes)?;
        self.active_len += bytes.len() as u64;
        // The refresh tail tracks our own writes so a handle that both
        // writes and tails never rescans what it wrote itself.
        self.tail = TailPos {
            seg_first: self.segments.last().unwrap().first,
            offset: self.active_len,
        };
        self.cache.push_back(record);
        self.next_index += 1;
        Ok(index)
    }

    fn flush_writer(&mut self) -> Result<(), JournalError> {
        if let Some(w) = self.writer.as_mut() {
            w.flush()?;
            if self.opts.fsync {
                w.sync_data()?;
            }
        }
        Ok(())
    }

    /// Opens (or rolls) the active segment for appending.
    fn ensure_writer(&mut self) -> Result<(), JournalError> {
        if self.segments.is_empty()
            || (self.writer.is_some() && self.active_len >= self.opts.segment_bytes)
        {
            return self.roll_segment();
        }
        if self.writer.is_none() {
            // Reopened journal: append to the newest segment, truncating
            // any torn tail a crash mid-append left behind.
            let info = self.segments.last().unwrap();
            let file = OpenOptions::new().append(true).open(&info.path)?;
            let len = file.metadata()?.len();
            let valid =
                if info.first == self.tail.seg_first { self.tail.offset } else { len };
            if len > valid {
                file.set_len(valid)?;
            }
            self.active_len = valid;
            self.tail = TailPos { seg_first: info.first, offset: valid };
            self.writer = Some(file);
            if self.active_len >= self.opts.segment_bytes {
                return self.roll_segment();
            }
        }
        Ok(())
    }

    fn roll_segment(&mut self) -> Result<(), JournalError> {
        let path = segment_path(&self.dir, self.next_index);
        let mut file = OpenOptions::new().create_new(true).append(true).open(&path)?;
        file.write_all(&segment_header(self.mdt_id))?;
        self.segments.push(SegmentInfo { first: self.next_index, path });
        self.writer = Some(file);
        self.active_len = SEGMENT_HEADER_LEN;
        self.tail = TailPos { seg_first: self.next_index, offset: SEGMENT_HEADER_LEN };
        Ok(())
    }

    /// Opens a cursor for a registered reader, clamped to retention.
    pub fn start(&self, reader_id: &str, start_index: u64) -> Result<Cursor, JournalError> {
        if !self.readers.contains_key(reader_id) {
            return Err(JournalError::UnknownReader(reader_id.to_string()));
        }
        let position = start_index.max(self.first_index).min(self.next_index);
        Ok(Cursor { reader: reader_id.to_string(), position })
    }

    /// Returns the record at the cursor and advances it, or None at
    /// end of stream. A cursor overtaken by purge resumes at the floor.
    pub fn recv(&self, cursor: &mut Cursor) -> Option<ChangelogRecord> {
        if cursor.position < self.first_index {
            cursor.position = self.first_index;
        }
        if cursor.position >= self.next_index {
            return None;
        }
        let rec = self.cache[(cursor.position - self.first_index) as usize].clone();
        cursor.position += 1;
        Some(rec)
    }

    /// Raises the reader's cleared index (monotone) and purges the
    /// prefix every reader has cleared.
    pub fn clear(&mut self, reader_id: &str, index: u64) -> Result<(), JournalError> {
        let next = self.next_index;
        let cleared = self
            .readers
            .get_mut(reader_id)
            .ok_or_else(|| JournalError::UnknownReader(reader_id.to_string()))?;
        if index >= next {
            return Err(JournalError::ClearBeyondEnd { index, next });
        }
        if index <= *cleared {
            return Ok(());
        }
        *cleared = index;
        self.reevaluate_floor()
    }

    fn reevaluate_floor(&mut self) -> Result<(), JournalError> {
        let min_cleared = self.readers.values().copied().min();
        if let Some(min_cleared) = min_cleared {
            let target = (min_cleared + 1).max(self.first_index);
            self.advance_floor(target)?;
        }
        Ok(())
    }

    fn advance_floor(&mut self, target: u64) -> Result<(), JournalError> {
        if target <= self.first_index {
            // Still persist reader-table changes that led here.
            return self.write_meta().map(|_| ());
        }
        let drop_count = target - self.first_index;
        for _ in 0..drop_count {
            self.cache.pop_front();
        }
        self.first_index = target;
        self.write_meta()?;
        self.delete_cleared_segments()?;
        Ok(())
    }

    /// Deletes segments whose records all sit below the floor. The
    /// newest segment survives regardless: the writer owns it.
    fn delete_cleared_segments(&mut self) -> Result<(), JournalError> {
        while self.segments.len() > 1 {
            let covered_end = self.segments[1].first;
            if covered_end <= self.first_index {
                let info = self.segments.remove(0);
                fs::remove_file(&info.path)?;
            } else {
                break;
            }
        }
        Ok(())
    }

    /// Forces pending bytes to disk (used on daemon shutdown).
    pub fn sync(&mut self) -> Result<(), JournalError> {
        if let Some(w) = self.writer.as_mut() {
            w.flush()?;
            w.sync_data()?;
        }
        Ok(())
    }

    /// Re-reads the reader table written by another process. Keeps the
    /// floor high-water: a stale on-disk floor never regresses ours.
    pub fn reload_meta(&mut self) -> Result<(), JournalError> {
        let (mdt_id, first_index, readers) = read_meta(&meta_path(&self.dir))?;
        if mdt_id != self.mdt_id {
            return Err(JournalError::MdtMismatch { found: mdt_id, requested: self.mdt_id });
        }
        self.readers = readers;
        if first_index > self.first_index {
            let drop_count = (first_index - self.first_index).min(self.cache.len() as u64);
            for _ in 0..drop_count {
                self.cache.pop_front();
            }
            self.first_index = first_index;
        }
        Ok(())
    }

    /// Scans for records appended by another process since the last
    /// load or refresh. Returns how many new records became visible.
    /// Tolerates a partially written record at the tail (left for the
    /// next refresh).
    pub fn refresh(&mut self) -> Result<u64, JournalError> {
        let before = self.next_index;
        // Pick up segments the writer rolled to since our last look.
        let mut on_disk = list_segments(&self.dir)?;
        on_disk.retain(|s| self.segments.last().map_or(true, |last| s.first > last.first));
        if !on_disk.is_empty() {
            // Another handle rolled past our open writer; its fd points
            // at a segment that is no longer the newest.
            self.writer = None;
        }
        self.segments.extend(on_disk);

        loop {
            let (seg_pos, is_last) = match self.current_tail_segment() {
                Some(v) => v,
                None => break,
            };
            let path = self.segments[seg_pos].path.clone();
            let bytes = fs::read(&path)?;
            if self.tail.offset == 0 {
                if bytes.len() < SEGMENT_HEADER_LEN as usize {
                    break; // header not fully written yet
                }
                check_segment_header(&bytes, self.mdt_id, &path)?;
                self.tail.offset = SEGMENT_HEADER_LEN;
            }
            let mut offset = self.tail.offset as usize;
            while let Some((record, used)) =
                decode_record_stream(&bytes[offset..], self.mdt_id)?
            {
                if record.index != self.next_index {
                    return Err(JournalError::Corrupt(format!(
                        "segment {} holds index {} where {} was expected",
                        path.display(),
                        record.index,
                        self.next_index
                    )));
                }
                self.cache.push_back(record);
                self.next_index += 1;
                offset += used;
            }
            self.tail.offset = offset as u64;
            if is_last {
                if self.writer.is_some() {
                    // Appends from other handles count toward this
                    // handle's roll threshold too.
                    self.active_len = self.tail.offset;
                }
                break;
            }
            if offset != bytes.len() {
                return Err(JournalError::Corrupt(format!(
                    "segment {} has {} trailing bytes but is not the newest",
                    path.display(),
                    bytes.len() - offset
                )));
            }
            // Move the tail into the next segment.
            self.tail = TailPos { seg_first: self.segments[seg_pos + 1].first, offset: 0 };
        }
        Ok(self.next_index - before)
    }

    fn current_tail_segment(&mut self) -> Option<(usize, bool)> {
        if self.segments.is_empty() {
            return None;
        }
        if self.tail.seg_first == 0 {
            self.tail = TailPos { seg_first: self.segments[0].first, offset: 0 };
        }
        let pos = match self.segments.iter().position(|s| s.first == self.tail.seg_first) {
            Some(pos) => pos,
            None => {
                // The parked segment was purged (it was fully consumed,
                // or deletion could not have happened); move on.
                let pos = self.segments.iter().position(|s| s.first > self.tail.seg_first)?;
                self.tail = TailPos { seg_first: self.segments[pos].first, offset: 0 };
                pos
            }
        };
        Some((pos, pos + 1 == self.segments.len()))
    }

    /// Full startup scan: reads every segment, skips purged prefixes,
    /// leaves the tail parked for refresh().
    fn load_segments(&mut self) -> Result<(), JournalError> {
        self.segments = list_segments(&self.dir)?;
        let count = self.segments.len();
        for (i, info) in self.segments.iter().enumerate() {
            let is_last = i + 1 == count;
            let bytes = fs::read(&info.path)?;
            check_segment_header(&bytes, self.mdt_id, &info.path)?;
            let mut offset = SEGMENT_HEADER_LEN as usize;
            loop {
                match decode_record_stream(&bytes[offset..], self.mdt_id)? {
                    Some((record, used)) => {
                        if record.index != self.next_index && record.index >= self.first_index {
                            // The first record of the first segment may
                            // predate the floor; anything else must be
                            // contiguous.
                            if !self.cache.is_empty() || record.index > self.next_index {
                                return Err(JournalError::Corrupt(format!(
                                    "segment {} holds index {} where {} was expected",
                                    info.path.display(),
                                    record.index,
                                    self.next_index
                                )));
                            }
                        }
                        if record.index >= self.first_index {
                            if self.cache.is_empty() {
                                self.next_index = record.index;
                            }
                            self.cache.push_back(record);
                            self.next_index += 1;
                        }
                        offset += used;
                    }
                    None => {
                        if offset != bytes.len() && !is_last {
                            return Err(JournalError::Corrupt(format!(
                                "segment {} has a torn record but is not the newest",
                                info.path.display()
                            )));
                        }
                        break;
                    }
                }
            }
            if is_last {
                self.tail = TailPos { seg_first: info.first, offset: offset as u64 };
            }
        }
        if self.cache.is_empty() {
            // Nothing retained on disk above the floor.
            self.next_index = self.next_index.max(self.first_index);
        } else {
            // Floor may sit inside the first scanned segment.
            let first_cached = self.cache[0].index;
            debug_assert!(first_cached >= self.first_index);
            let skip = first_cached - self.first_index;
            if skip > 0 {
                // Records between floor and first on disk were purged
                // with their segment; tighten the floor to what exists.
                self.first_index = first_cached;
            }
        }
        Ok(())
    }

    fn write_meta(&self) -> Result<(), JournalError> {
        let mut buf = Vec::with_capacity(64);
        buf.extend_from_slice(META_MAGIC);
        buf.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
        buf.extend_from_slice(&self.mdt_id.to_le_bytes());
        buf.extend_from_slice(&self.first_index.to_le_bytes());
        buf.extend_from_slice(&(self.readers.len() as u32).to_le_bytes());
        for (id, cleared) in &self.readers {
            buf.extend_from_slice(&(id.len() as u16).to_le_bytes());
            buf.extend_from_slice(id.as_bytes());
            buf.extend_from_slice(&cleared.to_le_bytes());
        }
        let tmp = self.dir.join("meta.tmp");
        let mut file = File::create(&tmp)?;
        file.write_all(&buf)?;
        if self.opts.fsync {
            file.sync_data()?;
        }
        drop(file);
        fs::rename(&tmp, meta_path(&self.dir))?;
        Ok(())
    }
}

fn check_segment_header(bytes: &[u8], mdt_id: u32, path: &Path) -> Result<(), JournalError> {
    if bytes.len() < SEGMENT_HEADER_LEN as usize {
        return Err(JournalError::Corrupt(format!(
            "segment {} shorter than its header",
            path.display()
        )));
    }
    if &bytes[0..4] != SEGMENT_MAGIC {
        return Err(JournalError::Corrupt(format!("segment {} bad magic", path.display())));
    }
    let version = u16::from_le_bytes([bytes[4], bytes[5]]);
    if version != FORMAT_VERSION {
        return Err(JournalError::Corrupt(format!(
            "segment {} version {version}, expected {FORMAT_VERSION}",
            path.display()
        )));
    }
    let found = u32::from_le_bytes([bytes[6], bytes[7], bytes[8], bytes[9]]);
    if found != mdt_id {
        return Err(JournalError::MdtMismatch { found, requested: mdt_id });
    }
    Ok(())
}

fn list_segments(dir: &Path) -> Result<Vec<SegmentInfo>, JournalError> {
    let mut segments = Vec::new();
    for entry in fs::read_dir(dir)? {
        let entry = entry?;
        let name = entry.file_name();
        let name = name.to_string_lossy();
        if let Some(digits) = name.strip_prefix("seg-").and_then(|n| n.strip_suffix(".log")) {
            match digits.parse::<u64>() {
                Ok(first) => segments.push(SegmentInfo { first, path: entry.path() }),
                Err(_) => {
                    return Err(JournalError::Corrupt(format!(
                        "unparseable segment name {name}"
                    )))
                }
            }
        }
    }
    segments.sort_by_key(|s| s.first);
    Ok(segments)
}

fn read_meta(path: &Path) -> Result<(u32, u64, BTreeMap<String, u64>), JournalError> {
    let mut bytes = Vec::new();
    File::open(path)?.read_to_end(&mut bytes)?;
    let fail = |what: &str| JournalError::Corrupt(format!("meta: {what}"));
    if bytes.len() < 22 {
        return Err(fail("truncated header"));
    }
    if &bytes[0..4] != META_MAGIC {
        return Err(fail("bad magic"));
    }
    let version = u16::from_le_bytes([bytes[4], bytes[5]]);
    if version != FORMAT_VERSION {
        return Err(fail(&format!("version {version}")));
    }
    let mdt_id = u32::from_le_bytes(bytes[6..10].try_into().unwrap());
    let first_index = u64::from_le_bytes(bytes[10..18].try_into().unwrap());
    let reader_count = u32::from_le_bytes(bytes[18..22].try_into().unwrap());
    let mut readers = BTreeMap::new();
    let mut off = 22usize;
    for _ in 0..reader_count {
        if bytes.len() < off + 2 {
            return Err(fail("truncated reader id length"));
        }
        let id_len = u16::from_le_bytes(bytes[off..off + 2].try_into().unwrap()) as usize;
        off += 2;
        if bytes.len() < off + id_len + 8 {
            return Err(fail("truncated reader entry"));
        }
        let id = String::from_utf8(bytes[off..off + id_len].to_vec())
            .map_err(|_| fail("reader id not utf-8"))?;
        off += id_len;
        let cleared = u64::from_le_bytes(bytes[off..off + 8].try_into().unwrap());
        off += 8;
        readers.insert(id, cleared);
    }
    if off != bytes.len() {
        return Err(fail("trailing bytes"));
    }
    Ok((mdt_id, first_index, readers))
}
