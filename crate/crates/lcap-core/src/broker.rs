//! The aggregation broker: greedy per-journal ingestion through the
//! preprocessing pipeline, load-balanced distribution to consumer
//! groups, at-least-once redelivery, and collective upstream clearing.
//!
//! This core is sans-IO. Hosts (the TCP daemon, the deterministic
//! simulator, tests) feed it decoded messages and drain two queues:
//! protocol outputs to route to connections, and trace events for
//! verification. All state transitions happen here; hosts only move
//! bytes and decide connection lifecycle.

use std::collections::{BTreeMap, BTreeSet, VecDeque};
use std::sync::Arc;

use thiserror::Error;

use crate::config::BrokerConfig;
use crate::journal::{Cursor, Journal, JournalError, JournalOptions};
use crate::pipeline::{pipeline_apply, PipelineModule, PipelineWindow};
use crate::record::{remap_record, ChangelogRecord, ExtMask, RecordBody};
use crate::tracker::AckTracker;
use crate::wire::{Message, Role};

/// Reader id the broker registers on every source journal.
pub const BROKER_READER: &str = "broker";

#[derive(Debug, Error)]
pub enum BrokerError {
    #[error("journal: {0}")]
    Journal(#[from] JournalError),
    #[error("mask {0:#06x} has reserved bits set")]
    BadMask(u16),
    #[error("persistent consumers need a window of at least 1")]
    WindowZero,
    #[error("unknown consumer {0}")]
    UnknownConsumer(u64),
    #[error("unknown mdt {0}")]
    UnknownMdt(u32),
    #[error("consumer {consumer_id} acked ({mdt_id}, {index}) which was never assigned to it")]
    AckNeverAssigned { consumer_id: u64, mdt_id: u32, index: u64 },
    #[error("two sources claim mdt_id {0}")]
    DuplicateMdt(u32),
}

#[derive(Debug, Clone, Copy)]
pub struct BrokerOptions {
    pub hwm: usize,
    pub batch: usize,
    pub eq_limit: usize,
    pub auto_ack_no_groups: bool,
}

impl Default for BrokerOptions {
    fn default() -> BrokerOptions {
        BrokerOptions { hwm: 65536, batch: 1024, eq_limit: 1024, auto_ack_no_groups: false }
    }
}

impl BrokerOptions {
    pub fn from_config(cfg: &BrokerConfig) -> BrokerOptions {
        BrokerOptions {
            hwm: cfg.hwm,
            batch: cfg.batch,
            eq_limit: cfg.eq_limit,
            auto_ack_no_groups: cfg.auto_ack_no_groups,
        }
    }
}

/// Something the host must do: send a frame or drop a connection.
#[derive(Debug, Clone, PartialEq)]
pub enum BrokerOutput {
    Send { consumer_id: u64, msg: Message },
    Disconnect { consumer_id: u64 },
}

/// Trace of every state transition that matters to delivery semantics.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum BrokerEvent {
    Appended { mdt_id: u32, index: u64 },
    Ingested { mdt_id: u32, index: u64 },
    DroppedByPipeline { mdt_id: u32, index: u64 },
    Assigned { group: String, consumer_id: u64, mdt_id: u32, index: u64, redelivery: bool },
    Acked { group: String, consumer_id: u64, mdt_id: u32, index: u64 },
    ClearedUpstream { mdt_id: u32, index: u64 },
    EphemeralDelivered { consumer_id: u64, mdt_id: u32, index: u64 },
    ConsumerJoined { consumer_id: u64, group: Option<String> },
    ConsumerLeft { consumer_id: u64, crash: bool },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LeaveReason {
    Graceful,
    Crash,
}

#[derive(Debug)]
struct SourceState {
    journal: Journal,
    cursor: Cursor,
    /// Preprocessed records not yet cleared upstream, oldest first.
    fetched: VecDeque<Arc<ChangelogRecord>>,
    /// Pipeline-dropped indices not yet cleared upstream; late-joining
    /// groups must auto-ack these or their prefix would stall.
    dropped_unclear: BTreeSet<u64>,
}

impl SourceState {
    /// Next index ingestion will fetch.
    fn position(&self) -> u64 {
        self.cursor.position()
    }
}

#[derive(Debug)]
struct PendingRec {
    rec: Arc<ChangelogRecord>,
    redelivery: bool,
}

#[derive(Debug)]
struct MemberState {
    window: u32,
    mask: ExtMask,
    in_flight: BTreeSet<(u32, u64)>,
}

#[derive(Debug)]
struct GroupState {
    pending: BTreeMap<u32, VecDeque<PendingRec>>,
    trackers: BTreeMap<u32, AckTracker>,
    members: BTreeMap<u64, MemberState>,
    /// Records assigned and not yet acked, for byte-identical redelivery.
    assigned: BTreeMap<(u32, u64), Arc<ChangelogRecord>>,
    /// Consumer that received the most recent assignment.
    rr_cursor: u64,
}

#[derive(Debug)]
struct EphemeralState {
    mask: ExtMask,
    /// Head index per MDT at join; only later records are delivered.
    snapshot: BTreeMap<u32, u64>,
}

#[derive(Debug, Clone)]
enum ConsumerRef {
    Persistent { group: String },
    Ephemeral,
}

#[derive(Debug)]
pub struct BrokerCore {
    opts: BrokerOptions,
    pipeline: Vec<PipelineModule>,
    sources: BTreeMap<u32, SourceState>,
    groups: BTreeMap<String, GroupState>,
    ephemerals: BTreeMap<u64, EphemeralState>,
    consumers: BTreeMap<u64, ConsumerRef>,
    next_consumer_id: u64,
    outputs: VecDeque<BrokerOutput>,
    events: Vec<BrokerEvent>,
    record_events: bool,
}

impl BrokerCore {
    pub fn new(
        journals: Vec<Journal>,
        pipeline: Vec<PipelineModule>,
        opts: BrokerOptions,
    ) -> Result<BrokerCore, BrokerError> {
        let mut sources = BTreeMap::new();
        for mut journal in journals {
            let mdt_id = journal.mdt_id();
            if journal.cleared_of(BROKER_READER).is_none() {
                journal.reader_register(BROKER_READER)?;
            }
            let resume = journal.cleared_of(BROKER_READER).unwrap() + 1;
            let cursor = journal.start(BROKER_READER, resume)?;
            let prev = sources.insert(
                mdt_id,
                SourceState {
                    journal,
                    cursor,
                    fetched: VecDeque::new(),
                    dropped_unclear: BTreeSet::new(),
                },
            );
            if prev.is_some() {
                return Err(BrokerError::DuplicateMdt(mdt_id));
            }
        }
        Ok(BrokerCore {
            opts,
            pipeline,
            sources,
            groups: BTreeMap::new(),
            ephemerals: BTreeMap::new(),
            consumers: BTreeMap::new(),
            next_consumer_id: 1,
            outputs: VecDeque::new(),
            events: Vec::new(),
            record_events: true,
        })
    }

    /// Opens every configured source journal and builds the core. The
    /// daemon path: journals must already exist on disk.
    pub fn open_from_config(cfg: &BrokerConfig) -> Result<BrokerCore, BrokerError> {
        let mut journals = Vec::new();
        for src in &cfg.sources {
            let journal = Journal::open(&src.dir, JournalOptions::default())?;
            if journal.mdt_id() != src.mdt_id {
                return Err(BrokerError::Journal(JournalError::MdtMismatch {
                    found: journal.mdt_id(),
                    requested: src.mdt_id,
                }));
            }
            journals.push(journal);
        }
        BrokerCore::new(journals, cfg.pipeline.clone(), BrokerOptions::from_config(cfg))
    }

    pub fn set_event_recording(&mut self, on: bool) {
        self.record_events = on;
        if !on {
            self.events.clear();
        }
    }

    pub fn take_outputs(&mut self) -> Vec<BrokerOutput> {
        self.outputs.drain(..).collect()
    }

    pub fn take_events(&mut self) -> Vec<BrokerEvent> {
        std::mem::take(&mut self.events)
    }

    fn event(&mut self, ev: BrokerEvent) {
        if self.record_events {
            self.events.push(ev);
        }
    }

    pub fn mdt_ids(&self) -> Vec<u32> {
        self.sources.keys().copied().collect()
    }

    pub fn journal(&self, mdt_id: u32) -> Option<&Journal> {
        self.sources.get(&mdt_id).map(|s| &s.journal)
    }

    pub fn group_names(&self) -> Vec<String> {
        self.groups.keys().cloned().collect()
    }

    pub fn group_prefix(&self, group: &str, mdt_id: u32) -> Option<u64> {
        Some(self.groups.get(group)?.trackers.get(&mdt_id)?.prefix())
    }

    pub fn eq_limit(&self) -> usize {
        self.opts.eq_limit
    }

    pub fn is_ephemeral(&self, consumer_id: u64) -> bool {
        matches!(self.consumers.get(&consumer_id), Some(ConsumerRef::Ephemeral))
    }

    /// Appends to a source journal in-process (simulator and tests; the
    /// daemon's journals are fed by an external producer instead).
    pub fn append_upstream(&mut self, mdt_id: u32, body: RecordBody) -> Result<u64, BrokerError> {
        let src = self.sources.get_mut(&mdt_id).ok_or(BrokerError::UnknownMdt(mdt_id))?;
        let index = src.journal.append(body)?;
        self.event(BrokerEvent::Appended { mdt_id, index });
        Ok(index)
    }

    /// Picks up records an external producer appended since the last
    /// look. Returns how many records became visible.
    pub fn refresh_sources(&mut self) -> Result<u64, BrokerError> {
        let mut found = 0;
        for src in self.sources.values_mut() {
            found += src.journal.refresh()?;
        }
        Ok(found)
    }

    /// One greedy fetch pass over a single source: read up to
    /// min(batch, hwm - buffered) records, preprocess the window,
    /// auto-ack dropped indices, buffer and broadcast survivors.
    pub fn ingest_tick(&mut self, mdt_id: u32) -> Result<usize, BrokerError> {
        let src = self.sources.get_mut(&mdt_id).ok_or(BrokerError::UnknownMdt(mdt_id))?;
        let room = self.opts.hwm.saturating_sub(src.fetched.len());
        let take = room.min(self.opts.batch);
        if take == 0 {
            return Ok(0);
        }
        let mut window = Vec::with_capacity(take.min(256));
        while window.len() < take {
            match src.journal.recv(&mut src.cursor) {
                Some(rec) => window.push(rec),
                None => break,
            }
        }
        if window.is_empty() {
            return Ok(0);
        }
        let count = window.len();
        if self.record_events {
            for rec in &window {
                self.events.push(BrokerEvent::Ingested { mdt_id, index: rec.index });
            }
        }

        let result = pipeline_apply(&self.pipeline, PipelineWindow { mdt_id, records: window });

        let src = self.sources.get_mut(&mdt_id).unwrap();
        for &index in &result.dropped {
            src.dropped_unclear.insert(index);
            if self.record_events {
                self.events.push(BrokerEvent::DroppedByPipeline { mdt_id, index });
            }
        }
        let kept: Vec<Arc<ChangelogRecord>> =
            result.kept.into_iter().map(Arc::new).collect();
        src.fetched.extend(kept.iter().cloned());

        // Dropped indices are auto-acked in every group so they never
        // stall the collective prefix.
        for group in self.groups.values_mut() {
            let tracker = group.trackers.get_mut(&mdt_id).expect("tracker per source");
            for &index in &result.dropped {
                tracker.add(index);
            }
            let queue = group.pending.entry(mdt_id).or_default();
            for rec in &kept {
                queue.push_back(PendingRec { rec: rec.clone(), redelivery: false });
            }
        }

        self.broadcast_ephemeral(mdt_id, &kept);
        Ok(count)
    }

    /// Ingests every source once. Returns total records fetched.
    pub fn ingest_all(&mut self) -> Result<usize, BrokerError> {
        let mut total = 0;
        for mdt_id in self.mdt_ids() {
            total += self.ingest_tick(mdt_id)?;
        }
        Ok(total)
    }

    fn broadcast_ephemeral(&mut self, mdt_id: u32, kept: &[Arc<ChangelogRecord>]) {
        if self.ephemerals.is_empty() || kept.is_empty() {
            return;
        }
        for (&consumer_id, eph) in &self.ephemerals {
            let snapshot = eph.snapshot.get(&mdt_id).copied().unwrap_or(u64::MAX);
            let fresh: Vec<ChangelogRecord> = kept
                .iter()
                .filter(|rec| rec.index > snapshot)
                .map(|rec| remap_record(rec, eph.mask))
                .collect();
            if fresh.is_empty() {
                continue;
            }
            if self.record_events {
                for rec in &fresh {
                    self.events.push(BrokerEvent::EphemeralDelivered {
                        consumer_id,
                        mdt_id,
                        index: rec.index,
                    });
                }
            }
            self.outputs.push_back(BrokerOutput::Send {
                consumer_id,
                msg: Message::Recs { mdt_id, records: fresh },
            });
        }
    }

    /// Handles a HELLO: registers the consumer and queues HELLO_ACK.
    /// On error the host should reply with an ERROR frame and close.
    pub fn client_hello(
        &mut self,
        role: Role,
        window: u32,
        mask_bits: u16,
        group: &str,
    ) -> Result<u64, BrokerError> {
        let mask = ExtMask::from_bits(mask_bits).map_err(|_| BrokerError::BadMask(mask_bits))?;
        let heads: Vec<(u32, u64)> = self
            .sources
            .iter()
            .map(|(&mdt_id, src)| (mdt_id, src.journal.next_index() - 1))
            .collect();
        let consumer_id = self.next_consumer_id;
        self.next_consumer_id += 1;

        match role {
            Role::Persistent => {
                if window == 0 {
                    return Err(BrokerError::WindowZero);
                }
                self.ensure_group(group);
                let g = self.groups.get_mut(group).unwrap();
                g.members.insert(
                    consumer_id,
                    MemberState { window, mask, in_flight: BTreeSet::new() },
                );
                self.consumers
                    .insert(consumer_id, ConsumerRef::Persistent { group: group.to_string() });
                self.event(BrokerEvent::ConsumerJoined {
                    consumer_id,
                    group: Some(group.to_string()),
                });
            }
            Role::Ephemeral => {
                let snapshot: BTreeMap<u32, u64> = heads.iter().copied().collect();
                self.ephemerals.insert(consumer_id, EphemeralState { mask, snapshot });
                self.consumers.insert(consumer_id, ConsumerRef::Ephemeral);
                self.event(BrokerEvent::ConsumerJoined { consumer_id, group: None });
            }
        }
        self.outputs.push_back(BrokerOutput::Send {
            consumer_id,
            msg: Message::HelloAck { consumer_id, heads },
        });
        Ok(consumer_id)
    }

    /// Creates the group if new. A new group inherits the whole staged
    /// buffer: everything not yet cleared upstream is owed to it.
    fn ensure_group(&mut self, name: &str) {
        if self.groups.contains_key(name) {
            return;
        }
        let mut pending = BTreeMap::new();
        let mut trackers = BTreeMap::new();
        for (&mdt_id, src) in &self.sources {
            let floor = match src.fetched.front() {
                Some(front) => front.index - 1,
                None => src.position() - 1,
            };
            let mut tracker = AckTracker::new(floor);
            // Pipeline-dropped indices above the floor are vacuously
            // acked for this group too.
            for &idx in src.dropped_unclear.range(floor + 1..) {
                tracker.add(idx);
            }
            trackers.insert(mdt_id, tracker);
            let queue: VecDeque<PendingRec> = src
                .fetched
                .iter()
                .map(|rec| PendingRec { rec: rec.clone(), redelivery: false })
                .collect();
            pending.insert(mdt_id, queue);
        }
        self.groups.insert(
            name.to_string(),
            GroupState {
                pending,
                trackers,
                members: BTreeMap::new(),
                assigned: BTreeMap::new(),
                rr_cursor: 0,
            },
        );
    }

    /// Round-robin assignment of pending records to members with spare
    /// window, for every group. Queues RECS outputs remapped per member.
    pub fn dispatch_all(&mut self) {
        for name in self.group_names() {
            self.dispatch_group(&name);
        }
    }

    fn dispatch_group(&mut self, name: &str) {
        let mdts: Vec<u32> = self.sources.keys().copied().collect();
        let g = match self.groups.get_mut(name) {
            Some(g) => g,
            None => return,
        };
        if g.members.is_empty() {
            return;
        }
        let ids: Vec<u64> = g.members.keys().copied().collect();
        // Resume the rotation just past the member served last.
        let mut pos = ids.iter().position(|&id| id > g.rr_cursor).unwrap_or(0);
        let mut batches: BTreeMap<(u64, u32), Vec<ChangelogRecord>> = BTreeMap::new();

        for mdt_id in mdts {
            let queue = match g.pending.get_mut(&mdt_id) {
                Some(q) => q,
                None => continue,
            };
            'queue: while !queue.is_empty() {
                let mut tried = 0;
                let member_id = loop {
                    if tried == ids.len() {
                        break 'queue; // every member is at its window
                    }
                    let id = ids[pos % ids.len()];
                    pos += 1;
                    tried += 1;
                    let m = &g.members[&id];
                    if (m.in_flight.len() as u32) < m.window {
                        break id;
                    }
                };
                let PendingRec { rec, redelivery } = queue.pop_front().unwrap();
                let member = g.members.get_mut(&member_id).unwrap();
                member.in_flight.insert((mdt_id, rec.index));
                let remapped = remap_record(&rec, member.mask);
                g.assigned.insert((mdt_id, rec.index), rec.clone());
                g.rr_cursor = member_id;
                if self.record_events {
                    self.events.push(BrokerEvent::Assigned {
                        group: name.to_string(),
                        consumer_id: member_id,
                        mdt_id,
                        index: rec.index,
                        redelivery,
                    });
                }
                batches.entry((member_id, mdt_id)).or_default().push(remapped);
            }
        }
        for ((consumer_id, mdt_id), records) in batches {
            self.outputs.push_back(BrokerOutput::Send {
                consumer_id,
                msg: Message::Recs { mdt_id, records },
            });
        }
    }

    /// Processes an ACK frame from a persistent consumer. Duplicate
    /// acks (after crash redelivery) are tolerated; an ack for an index
    /// never assigned to this consumer is a protocol error and the host
    /// should disconnect the sender.
    pub fn client_ack(
        &mut self,
        consumer_id: u64,
        mdt_id: u32,
        indices: &[u64],
    ) -> Result<(), BrokerError> {
        let group_name = match self.consumers.get(&consumer_id) {
            Some(ConsumerRef::Persistent { group }) => group.clone(),
            Some(ConsumerRef::Ephemeral) | None => {
                return Err(BrokerError::UnknownConsumer(consumer_id))
            }
        };
        let g = self.groups.get_mut(&group_name).unwrap();
        let tracker_known = |g: &GroupState, idx: u64| {
            g.trackers.get(&mdt_id).map_or(false, |t| t.contains(idx))
        };
        for &index in indices {
            let member = g.members.get_mut(&consumer_id).expect("member of its group");
            if member.in_flight.remove(&(mdt_id, index)) {
                g.assigned.remove(&(mdt_id, index));
                g.trackers
                    .get_mut(&mdt_id)
                    .ok_or(BrokerError::UnknownMdt(mdt_id))?
                    .add(index);
                if self.record_events {
                    self.events.push(BrokerEvent::Acked {
                        group: group_name.clone(),
                        consumer_id,
                        mdt_id,
                        index,
                    });
                }
            } else if tracker_known(g, index) {
                // Already acknowledged, possibly by a member that got
                // the redelivery. Tolerated no-op.
            } else {
                return Err(BrokerError::AckNeverAssigned { consumer_id, mdt_id, index });
            }
        }
        Ok(())
    }

    /// Removes a consumer. A persistent member's in-flight records are
    /// requeued at the head of the group's pending, in index order, for
    /// redelivery to surviving members.
    pub fn client_leave(&mut self, consumer_id: u64, reason: LeaveReason) {
        let reference = match self.consumers.remove(&consumer_id) {
            Some(r) => r,
            None => return, // double disconnect
        };
        let crash = reason == LeaveReason::Crash;
        match reference {
            ConsumerRef::Ephemeral => {
                self.ephemerals.remove(&consumer_id);
            }
            ConsumerRef::Persistent { group } => {
                if let Some(g) = self.groups.get_mut(&group) {
                    if let Some(member) = g.members.remove(&consumer_id) {
                        // Descending so push_front lands them ascending.
                        for &(mdt_id, index) in member.in_flight.iter().rev() {
                            let rec = g
                                .assigned
                                .remove(&(mdt_id, index))
                                .expect("in-flight record is held");
                            g.pending
                                .entry(mdt_id)
                                .or_default()
                                .push_front(PendingRec { rec, redelivery: true });
                        }
                    }
                }
            }
        }
        self.event(BrokerEvent::ConsumerLeft { consumer_id, crash });
    }

    /// Drops a whole group (administrative, library-level only). Its
    /// unacked records stop pinning the upstream prefix.
    pub fn remove_group(&mut self, name: &str) -> bool {
        if let Some(g) = self.groups.remove(name) {
            for id in g.members.keys() {
                self.consumers.remove(id);
                self.outputs.push_back(BrokerOutput::Disconnect { consumer_id: *id });
            }
            true
        } else {
            false
        }
    }

    /// The host reports an ephemeral consumer whose outbound queue hit
    /// eq_limit: disconnect it with an ERROR frame (slow listener).
    pub fn ephemeral_overflow(&mut self, consumer_id: u64) {
        if self.ephemerals.remove(&consumer_id).is_some() {
            self.consumers.remove(&consumer_id);
            self.outputs.push_back(BrokerOutput::Send {
                consumer_id,
                msg: Message::Error {
                    code: crate::wire::ERR_EPHEMERAL_OVERFLOW,
                    msg: format!("outbound queue exceeded {} records", self.opts.eq_limit),
                },
            });
            self.outputs.push_back(BrokerOutput::Disconnect { consumer_id });
            self.event(BrokerEvent::ConsumerLeft { consumer_id, crash: false });
        }
    }

    /// Collective upstream acknowledgment: per MDT, clear the min of
    /// all persistent groups' tracker prefixes. With no groups, clear
    /// the ingestion position when configured to, else withhold.
    pub fn sweep_upstream(&mut self) -> Result<(), BrokerError> {
        let mdts: Vec<u32> = self.sources.keys().copied().collect();
        for mdt_id in mdts {
            let target = if self.groups.is_empty() {
                if self.opts.auto_ack_no_groups {
                    Some(self.sources[&mdt_id].position() - 1)
                } else {
                    None
                }
            } else {
                self.groups
                    .values()
                    .map(|g| g.trackers.get(&mdt_id).map_or(0, |t| t.prefix()))
                    .min()
            };
            let Some(target) = target else { continue };
            let src = self.sources.get_mut(&mdt_id).unwrap();
            let cleared = src.journal.cleared_of(BROKER_READER).unwrap_or(0);
            if target <= cleared {
                continue;
            }
            src.journal.clear(BROKER_READER, target)?;
            while src.fetched.front().map_or(false, |rec| rec.index <= target) {
                src.fetched.pop_front();
            }
            src.dropped_unclear = src.dropped_unclear.split_off(&(target + 1));
            self.event(BrokerEvent::ClearedUpstream { mdt_id, index: target });
        }
        Ok(())
    }

    /// One full pass: ingest, distribute, clear. The daemon loop is
    /// refresh_sources + tick; the simulator sequences phases itself.
    pub fn tick(&mut self) -> Result<usize, BrokerError> {
        let fetched = self.ingest_all()?;
        self.dispatch_all();
        self.sweep_upstream()?;
        Ok(fetched)
    }

    /// Queues a STATS reply for the requesting consumer.
    pub fn stats_reply(&mut self, consumer_id: u64) {
        let text = self.stats_text();
        self.outputs
            .push_back(BrokerOutput::Send { consumer_id, msg: Message::Stats { text } });
    }

    /// Queues FIN to every connected consumer and flushes upstream
    /// state to disk. The daemon calls this on SIGTERM/SIGINT.
    pub fn shutdown(&mut self) -> Result<(), BrokerError> {
        self.sweep_upstream()?;
        let ids: Vec<u64> = self.consumers.keys().copied().collect();
        for consumer_id in ids {
            self.outputs
                .push_back(BrokerOutput::Send { consumer_id, msg: Message::Fin });
            self.outputs.push_back(BrokerOutput::Disconnect { consumer_id });
        }
        for src in self.sources.values_mut() {
            src.journal.sync()?;
        }
        Ok(())
    }

    /// True when every source is drained and no group holds work.
    pub fn quiescent(&self) -> bool {
        self.sources
            .values()
            .all(|s| s.position() == s.journal.next_index())
            && self.groups.values().all(|g| {
                g.pending.values().all(VecDeque::is_empty)
                    && g.members.values().all(|m| m.in_flight.is_empty())
            })
    }

    /// Human-readable state dump served over STATS_REQ.
    pub fn stats_text(&self) -> String {
        use std::fmt::Write;
        let mut out = String::new();
        for (mdt_id, src) in &self.sources {
            let cleared = src.journal.cleared_of(BROKER_READER).unwrap_or(0);
            writeln!(
                out,
                "mdt {mdt_id}: position {} cleared {} buffered {}",
                src.position(),
                cleared,
                src.fetched.len()
            )
            .unwrap();
        }
        for (name, g) in &self.groups {
            writeln!(out, "group {name}: members {}", g.members.len()).unwrap();
            for (mdt_id, tracker) in &g.trackers {
                let pending = g.pending.get(mdt_id).map_or(0, VecDeque::len);
                let in_flight = g
                    .members
                    .values()
                    .flat_map(|m| m.in_flight.iter())
                    .filter(|(m, _)| m == mdt_id)
                    .count();
                writeln!(
                    out,
                    "  mdt {mdt_id}: pending {pending} in_flight {in_flight} prefix {}",
                    tracker.prefix()
                )
                .unwrap();
            }
        }
        writeln!(out, "ephemerals: {}", self.ephemerals.len()).unwrap();
        out
    }

    /// Structural sanity: disjoint queues, window bounds, tracker
    /// consistency. The log-based property checks live in the harness;
    /// this is the cheap in-process cross-check.
    pub fn validate(&self) -> Result<(), String> {
        for (name, g) in &self.groups {
            for (id, m) in &g.members {
                if m.in_flight.len() as u32 > m.window {
                    return Err(format!(
                        "group {name} member {id} holds {} in-flight over window {}",
                        m.in_flight.len(),
                        m.window
                    ));
                }
                for key in &m.in_flight {
                    if !g.assigned.contains_key(key) {
                        return Err(format!(
                            "group {name} member {id} in-flight {key:?} has no held record"
                        ));
                    }
                    if g.trackers.get(&key.0).map_or(false, |t| t.contains(key.1)) {
                        return Err(format!(
                            "group {name} {key:?} both in-flight and acked"
                        ));
                    }
                }
            }
            for (mdt_id, queue) in &g.pending {
                for p in queue {
                    let key = (*mdt_id, p.rec.index);
                    if g.trackers.get(mdt_id).map_or(false, |t| t.contains(p.rec.index)) {
                        return Err(format!("group {name} {key:?} both pending and acked"));
                    }
                    if g.members.values().any(|m| m.in_flight.contains(&key)) {
                        return Err(format!(
                            "group {name} {key:?} both pending and in-flight"
                        ));
                    }
                }
            }
        }
        Ok(())
    }
}
