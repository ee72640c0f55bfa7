//! Deterministic single-threaded scenario executor.
//!
//! Drives a real broker core over in-memory byte channels. Every message
//! between broker and consumers round-trips through the wire codec, and
//! the source journals live on disk in a temporary directory, so a run
//! exercises exactly the encodings the TCP daemon does, minus sockets
//! and threads. Time is logical: each step runs a fixed phase order
//! (faults, joins, production, broker inbound, ingest, dispatch, sweep,
//! routing, consumption), so the event log is a pure function of the
//! scenario and its seed.

use std::collections::{BTreeMap, BTreeSet, VecDeque};

use lcap_core::broker::{BrokerCore, BrokerError, BrokerOptions, BrokerOutput, LeaveReason};
use lcap_core::journal::{Journal, JournalError, JournalOptions};
use lcap_core::wire::{frame_decode_stream, frame_encode, Message, Role, WireError};
use lcap_core::workload::{OpsMix, WorkloadGen};
use thiserror::Error;

use crate::log::{ConsumerMeta, DeliveryLog, Event};
use crate::spec::{FaultAction, GroupSpec, ScenarioSpec};

#[derive(Debug, Error)]
pub enum RunError {
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("broker: {0}")]
    Broker(#[from] BrokerError),
    #[error("journal: {0}")]
    Journal(#[from] JournalError),
    #[error("wire: {0}")]
    Wire(#[from] WireError),
}

/// Hard ceiling on run length, independent of the grace mechanism.
/// Purely a safety valve against executor bugs; real scenarios finish
/// orders of magnitude sooner or get declared stuck by grace first.
const MAX_STEPS: u64 = 10_000_000;

struct Producer {
    mdt_id: u32,
    gen: WorkloadGen,
    remaining: u64,
    burst: u64,
}

enum Kind {
    Member {
        delay: u64,
        /// (ready_at_step, mdt_id, index); acked once ready_at <= now.
        working: VecDeque<(u64, u32, u64)>,
    },
    Ephemeral {
        drain: u64,
        /// Outbound records sent and not yet consumed by the listener.
        queued: usize,
    },
}

struct Conn {
    kind: Kind,
    consumer_id: Option<u64>,
    alive: bool,
    /// Client to broker bytes, decoded next inbound phase.
    outbox: Vec<u8>,
    /// Broker to client bytes, decoded at this step's consume phase.
    inbox: Vec<u8>,
}

struct Sim<'a> {
    spec: &'a ScenarioSpec,
    core: BrokerCore,
    conns: BTreeMap<u64, Conn>,
    next_conn: u64,
    by_consumer: BTreeMap<u64, u64>,
    /// Latest connection per (group, slot), for fault addressing.
    slot_conn: BTreeMap<(String, usize), u64>,
    producers: Vec<Producer>,
    seen_groups: BTreeSet<String>,
    fault_pos: usize,
    log: DeliveryLog,
    activity: bool,
}

/// Executes the scenario to quiescence (or a stuck verdict) and returns
/// the complete delivery log.
pub fn run_scenario(spec: &ScenarioSpec) -> Result<DeliveryLog, RunError> {
    let tmp = tempfile::tempdir()?;
    let mut journals = Vec::new();
    for m in &spec.mdts {
        let dir = tmp.path().join(format!("mdt-{}", m.mdt_id));
        journals.push(Journal::create(&dir, m.mdt_id, JournalOptions::default())?);
    }
    let opts = BrokerOptions {
        hwm: spec.hwm,
        batch: spec.batch,
        eq_limit: spec.eq_limit,
        auto_ack_no_groups: spec.auto_ack_no_groups,
    };
    let core = BrokerCore::new(journals, spec.pipeline.clone(), opts)?;

    let producers = spec
        .mdts
        .iter()
        .map(|m| Producer {
            mdt_id: m.mdt_id,
            // Distinct stream per source, still seed-determined.
            gen: WorkloadGen::new(
                spec.seed.wrapping_add(m.mdt_id as u64),
                OpsMix::default_mix(),
                4,
            ),
            remaining: m.records,
            burst: m.burst,
        })
        .collect();

    let mut sim = Sim {
        spec,
        core,
        conns: BTreeMap::new(),
        next_conn: 1,
        by_consumer: BTreeMap::new(),
        slot_conn: BTreeMap::new(),
        producers,
        seen_groups: BTreeSet::new(),
        fault_pos: 0,
        log: DeliveryLog::default(),
        activity: false,
    };
    sim.run()?;
    Ok(sim.log)
}

impl<'a> Sim<'a> {
    fn run(&mut self) -> Result<(), RunError> {
        let last_scheduled = self
            .spec
            .groups
            .iter()
            .map(|g| g.join_at)
            .chain(self.spec.ephemerals.iter().map(|e| e.join_at))
            .chain(self.spec.faults.iter().map(|f| f.at))
            .max()
            .unwrap_or(0);

        let mut step = 0;
        let mut last_activity = 0;
        loop {
            self.activity = false;
            self.step(step)?;
            if self.activity {
                last_activity = step;
            }
            if self.done(step, last_scheduled) {
                self.log.quiescent = true;
                break;
            }
            let idle_since = last_activity.max(last_scheduled);
            if step.saturating_sub(idle_since) > self.spec.grace || step >= MAX_STEPS {
                self.log.stuck = Some(self.stuck_dump(step));
                break;
            }
            step += 1;
        }
        self.log.steps = step;
        for mdt_id in self.core.mdt_ids() {
            let head = self.core.journal(mdt_id).unwrap().next_index() - 1;
            self.log.heads.insert(mdt_id, head);
        }
        Ok(())
    }

    fn step(&mut self, step: u64) -> Result<(), RunError> {
        self.fire_faults(step);
        self.fire_joins(step);
        self.produce(step)?;
        self.broker_inbound(step)?;
        self.core.ingest_all()?;
        self.core.dispatch_all();
        self.core.sweep_upstream()?;
        self.pump(step);
        self.route_outputs(step);
        self.consume(step)?;
        Ok(())
    }

    fn pump(&mut self, step: u64) {
        for ev in self.core.take_events() {
            self.activity = true;
            self.log.entries.push((step, Event::Broker(ev)));
        }
    }

    fn fire_faults(&mut self, step: u64) {
        while self.fault_pos < self.spec.faults.len()
            && self.spec.faults[self.fault_pos].at <= step
        {
            let fault = self.spec.faults[self.fault_pos].clone();
            self.fault_pos += 1;
            self.activity = true;
            let key = (fault.group.clone(), fault.slot);
            match fault.action {
                FaultAction::Crash => {
                    let Some(&conn_id) = self.slot_conn.get(&key) else { continue };
                    let conn = self.conns.get_mut(&conn_id).unwrap();
                    if !conn.alive {
                        continue;
                    }
                    // Connection reset: in-flight bytes in both
                    // directions are lost with the socket.
                    conn.alive = false;
                    conn.inbox.clear();
                    conn.outbox.clear();
                    if let Some(cid) = conn.consumer_id {
                        self.core.client_leave(cid, LeaveReason::Crash);
                        self.pump(step);
                    }
                }
                FaultAction::Reconnect => {
                    let gspec = self
                        .spec
                        .groups
                        .iter()
                        .find(|g| g.name == fault.group)
                        .expect("fault group validated at parse");
                    self.open_member(gspec, fault.slot);
                }
            }
        }
    }

    fn fire_joins(&mut self, step: u64) {
        let groups: Vec<GroupSpec> = self
            .spec
            .groups
            .iter()
            .filter(|g| g.join_at == step)
            .cloned()
            .collect();
        for gspec in groups {
            for slot in 0..gspec.members {
                self.open_member(&gspec, slot);
            }
        }
        for espec in self.spec.ephemerals.iter().filter(|e| e.join_at == step) {
            let hello = Message::Hello {
                role: Role::Ephemeral,
                window: 0,
                mask_bits: espec.mask.bits(),
                group: String::new(),
            };
            let conn = Conn {
                kind: Kind::Ephemeral { drain: espec.drain, queued: 0 },
                consumer_id: None,
                alive: true,
                outbox: frame_encode(&hello),
                inbox: Vec::new(),
            };
            let conn_id = self.next_conn;
            self.next_conn += 1;
            self.conns.insert(conn_id, conn);
            self.activity = true;
        }
    }

    fn open_member(&mut self, gspec: &GroupSpec, slot: usize) {
        let hello = Message::Hello {
            role: Role::Persistent,
            window: gspec.windows[slot],
            mask_bits: gspec.mask.bits(),
            group: gspec.name.clone(),
        };
        let conn = Conn {
            kind: Kind::Member { delay: gspec.delays[slot], working: VecDeque::new() },
            consumer_id: None,
            alive: true,
            outbox: frame_encode(&hello),
            inbox: Vec::new(),
        };
        let conn_id = self.next_conn;
        self.next_conn += 1;
        self.conns.insert(conn_id, conn);
        self.slot_conn.insert((gspec.name.clone(), slot), conn_id);
        self.activity = true;
    }

    fn broker_inbound(&mut self, step: u64) -> Result<(), RunError> {
        let ids: Vec<u64> = self.conns.keys().copied().collect();
        for conn_id in ids {
            let conn = self.conns.get_mut(&conn_id).unwrap();
            if !conn.alive || conn.outbox.is_empty() {
                continue;
            }
            let buf = std::mem::take(&mut conn.outbox);
            let mut off = 0;
            while let Some((msg, used)) = frame_decode_stream(&buf[off..])? {
                off += used;
                self.activity = true;
                self.handle_inbound(step, conn_id, msg)?;
            }
            debug_assert_eq!(off, buf.len(), "sim writes whole frames");
        }
        Ok(())
    }

    fn handle_inbound(&mut self, step: u64, conn_id: u64, msg: Message) -> Result<(), RunError> {
        match msg {
            Message::Hello { role, window, mask_bits, group } => {
                let cid = self.core.client_hello(role, window, mask_bits, &group)?;
                self.pump(step);
                let conn = self.conns.get_mut(&conn_id).unwrap();
                conn.consumer_id = Some(cid);
                self.by_consumer.insert(cid, conn_id);
                let (group_name, slot) = match role {
                    Role::Persistent => {
                        let slot = self
                            .slot_conn
                            .iter()
                            .find(|(_, &c)| c == conn_id)
                            .map(|((_, s), _)| *s);
                        (Some(group.clone()), slot)
                    }
                    Role::Ephemeral => (None, None),
                };
                self.log.consumers.insert(
                    cid,
                    ConsumerMeta {
                        group: group_name,
                        window,
                        slot,
                        snapshot: BTreeMap::new(),
                    },
                );
                if role == Role::Persistent && self.seen_groups.insert(group.clone()) {
                    for mdt_id in self.core.mdt_ids() {
                        let prefix = self
                            .core
                            .group_prefix(&group, mdt_id)
                            .expect("group exists after hello");
                        self.log
                            .entries
                            .push((step, Event::GroupStart { group: group.clone(), mdt_id, prefix }));
                    }
                }
            }
            Message::Ack { mdt_id, indices } => {
                let cid = self.conns[&conn_id]
                    .consumer_id
                    .expect("acks follow hello on the same connection");
                self.core.client_ack(cid, mdt_id, &indices)?;
                self.pump(step);
            }
            Message::Fin => {
                let conn = self.conns.get_mut(&conn_id).unwrap();
                conn.alive = false;
                if let Some(cid) = conn.consumer_id {
                    self.core.client_leave(cid, LeaveReason::Graceful);
                    self.pump(step);
                }
            }
            // Consumers in scenarios never send the rest.
            _ => {}
        }
        Ok(())
    }

    fn produce(&mut self, step: u64) -> Result<(), RunError> {
        for p in &mut self.producers {
            if p.remaining == 0 {
                continue;
            }
            let n = p.burst.min(p.remaining);
            for _ in 0..n {
                let body = p.gen.next_body();
                self.core.append_upstream(p.mdt_id, body)?;
            }
            p.remaining -= n;
        }
        self.pump(step);
        Ok(())
    }

    fn route_outputs(&mut self, step: u64) {
        loop {
            let outs = self.core.take_outputs();
            if outs.is_empty() {
                break;
            }
            for out in outs {
                match out {
                    BrokerOutput::Send { consumer_id, msg } => {
                        let Some(&conn_id) = self.by_consumer.get(&consumer_id) else {
                            continue;
                        };
                        if !self.conns[&conn_id].alive {
                            continue;
                        }
                        let records_in = match &msg {
                            Message::Recs { records, .. } => records.len(),
                            _ => 0,
                        };
                        // The host enforces the ephemeral queue cap: a
                        // listener that cannot keep up is cut off rather
                        // than allowed to pin broker memory.
                        let overflow = matches!(
                            &self.conns[&conn_id].kind,
                            Kind::Ephemeral { queued, .. }
                                if queued + records_in > self.spec.eq_limit
                        ) && records_in > 0;
                        if overflow {
                            self.core.ephemeral_overflow(consumer_id);
                            self.pump(step);
                            continue;
                        }
                        let conn = self.conns.get_mut(&conn_id).unwrap();
                        if let Kind::Ephemeral { queued, .. } = &mut conn.kind {
                            *queued += records_in;
                        }
                        conn.inbox.extend(frame_encode(&msg));
                        self.activity = true;
                    }
                    BrokerOutput::Disconnect { consumer_id } => {
                        if let Some(&conn_id) = self.by_consumer.get(&consumer_id) {
                            // Already-queued frames still reach the
                            // client, like a flushed socket close.
                            self.conns.get_mut(&conn_id).unwrap().alive = false;
                        }
                    }
                }
            }
        }
    }

    fn consume(&mut self, step: u64) -> Result<(), RunError> {
        let ids: Vec<u64> = self.conns.keys().copied().collect();
        for conn_id in ids {
            let conn = self.conns.get_mut(&conn_id).unwrap();
            let buf = std::mem::take(&mut conn.inbox);
            let mut off = 0;
            while let Some((msg, used)) = frame_decode_stream(&buf[off..])? {
                off += used;
                let conn = self.conns.get_mut(&conn_id).unwrap();
                match msg {
                    Message::HelloAck { consumer_id, heads } => {
                        debug_assert_eq!(Some(consumer_id), conn.consumer_id);
                        if let Some(meta) = self.log.consumers.get_mut(&consumer_id) {
                            meta.snapshot = heads.into_iter().collect();
                        }
                    }
                    Message::Recs { mdt_id, records } => {
                        let cid = conn.consumer_id.expect("recs follow hello ack");
                        for rec in &records {
                            self.log.entries.push((
                                step,
                                Event::Delivered { consumer_id: cid, mdt_id, index: rec.index },
                            ));
                        }
                        self.activity = true;
                        if let Kind::Member { delay, working } = &mut conn.kind {
                            for rec in &records {
                                working.push_back((step + *delay, mdt_id, rec.index));
                            }
                        }
                    }
                    _ => {}
                }
            }
            let conn = self.conns.get_mut(&conn_id).unwrap();
            if !conn.alive {
                continue;
            }
            match &mut conn.kind {
                Kind::Member { working, .. } => {
                    let mut due: BTreeMap<u32, Vec<u64>> = BTreeMap::new();
                    while working.front().map_or(false, |&(ready, _, _)| ready <= step) {
                        let (_, mdt_id, index) = working.pop_front().unwrap();
                        due.entry(mdt_id).or_default().push(index);
                    }
                    for (mdt_id, indices) in due {
                        conn.outbox
                            .extend(frame_encode(&Message::Ack { mdt_id, indices }));
                        self.activity = true;
                    }
                }
                Kind::Ephemeral { drain, queued } => {
                    *queued = queued.saturating_sub(*drain as usize);
                }
            }
        }
        Ok(())
    }

    fn done(&self, step: u64, last_scheduled: u64) -> bool {
        step >= last_scheduled
            && self.producers.iter().all(|p| p.remaining == 0)
            && self.core.quiescent()
            && self.conns.values().all(|c| {
                if !c.alive {
                    return true;
                }
                match &c.kind {
                    Kind::Member { working, .. } => {
                        working.is_empty() && c.outbox.is_empty() && c.inbox.is_empty()
                    }
                    // A slow radio listener never holds the run open.
                    Kind::Ephemeral { .. } => true,
                }
            })
    }

    fn stuck_dump(&self, step: u64) -> String {
        use std::fmt::Write;
        let mut out = format!("no progress by step {step}\n");
        out.push_str(&self.core.stats_text());
        for (conn_id, conn) in &self.conns {
            let state = match &conn.kind {
                Kind::Member { working, .. } => format!("member working {}", working.len()),
                Kind::Ephemeral { queued, .. } => format!("ephemeral queued {queued}"),
            };
            writeln!(
                out,
                "conn {conn_id}: {} {state} out {} in {}",
                if conn.alive { "alive" } else { "dead" },
                conn.outbox.len(),
                conn.inbox.len()
            )
            .unwrap();
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use lcap_core::broker::BrokerEvent;

    fn parse(text: &str) -> ScenarioSpec {
        ScenarioSpec::parse(text).unwrap()
    }

    #[test]
    fn single_group_run_delivers_everything() {
        let log = run_scenario(&parse(
            "mdt.1.records = 100\n\
             group.g.members = 2\n\
             group.g.window = 8\n",
        ))
        .unwrap();
        assert!(log.quiescent, "stuck: {:?}", log.stuck);
        assert_eq!(log.delivered_count(), 100);
        assert_eq!(log.acked_count(), 100);
        assert_eq!(log.last_cleared(1), Some(100));
        assert_eq!(log.heads[&1], 100);
    }

    #[test]
    fn empty_scenario_terminates_immediately() {
        let log = run_scenario(&parse("mdt.1.records = 0\n")).unwrap();
        assert!(log.quiescent);
        assert_eq!(log.entries.len(), 0);
        assert_eq!(log.heads[&1], 0);
    }

    #[test]
    fn no_groups_withholds_clearing() {
        let log = run_scenario(&parse("mdt.1.records = 50\n")).unwrap();
        assert!(log.quiescent);
        assert_eq!(log.last_cleared(1), None);
        assert_eq!(log.count(|e| matches!(e, Event::Broker(BrokerEvent::Ingested { .. }))), 50);
    }

    #[test]
    fn auto_ack_clears_without_consumers() {
        let log = run_scenario(&parse(
            "mdt.1.records = 50\nauto_ack_no_groups = true\n",
        ))
        .unwrap();
        assert!(log.quiescent);
        assert_eq!(log.last_cleared(1), Some(50));
    }

    #[test]
    fn crash_triggers_redelivery() {
        let log = run_scenario(&parse(
            "mdt.1.records = 200\n\
             mdt.1.burst = 10\n\
             group.g.members = 2\n\
             group.g.window = 4\n\
             group.g.delay = 3\n\
             fault.1.at = 6\n\
             fault.1.action = crash\n\
             fault.1.member = g:0\n\
             fault.2.at = 10\n\
             fault.2.action = reconnect\n\
             fault.2.member = g:0\n",
        ))
        .unwrap();
        assert!(log.quiescent, "stuck: {:?}", log.stuck);
        let redelivered = log.count(|e| {
            matches!(e, Event::Broker(BrokerEvent::Assigned { redelivery: true, .. }))
        });
        assert!(redelivered > 0, "crash with in-flight records must redeliver");
        assert_eq!(log.last_cleared(1), Some(200));
    }

    #[test]
    fn same_spec_same_log() {
        let spec = parse(
            "seed = 9\n\
             mdt.1.records = 300\n\
             mdt.2.records = 150\n\
             pipeline = compensation, reorder\n\
             group.a.members = 3\n\
             group.a.window = 2,4,8\n\
             group.b.members = 1\n\
             ephemeral.1.join_at = 3\n\
             fault.1.at = 8\n\
             fault.1.action = crash\n\
             fault.1.member = a:1\n",
        );
        let one = run_scenario(&spec).unwrap();
        let two = run_scenario(&spec).unwrap();
        assert_eq!(one.entries, two.entries);
        assert_eq!(one.consumers, two.consumers);
        assert_eq!(one.heads, two.heads);
    }

    #[test]
    fn stalled_ephemeral_overflows_and_is_cut() {
        let log = run_scenario(&parse(
            "mdt.1.records = 600\n\
             mdt.1.burst = 50\n\
             eq_limit = 100\n\
             group.g.members = 1\n\
             group.g.window = 64\n\
             ephemeral.1.join_at = 0\n\
             ephemeral.1.drain = 0\n",
        ))
        .unwrap();
        assert!(log.quiescent, "stuck: {:?}", log.stuck);
        // The ephemeral joined at step 0 and never drained; it must have
        // been disconnected without ever blocking the persistent group.
        let eph_left = log.count(|e| {
            matches!(e, Event::Broker(BrokerEvent::ConsumerLeft { crash: false, .. }))
        });
        assert!(eph_left >= 1);
        assert_eq!(log.last_cleared(1), Some(600));
    }
}
