//! Threaded TCP host around [`BrokerCore`]: a reader thread per
//! connection feeds decoded frames to the single core loop over a
//! channel; a writer thread per connection drains outbound frames.
//! The core loop also tails source journals and runs the
//! ingest/dispatch/sweep cycle.

use std::collections::HashMap;
use std::io::{ErrorKind, Read, Write};
use std::net::{Shutdown, TcpListener, TcpStream};
use std::sync::atomic::{AtomicBool, AtomicUsize, Ordering};
use std::sync::{mpsc, Arc};
use std::thread;
use std::time::{Duration, Instant};

use crate::broker::{BrokerCore, BrokerError, BrokerOutput, LeaveReason};
use crate::wire::{
    frame_decode_stream, frame_encode, Message, ERR_BAD_ACK, ERR_BAD_MASK, ERR_PROTOCOL,
};

const READ_POLL: Duration = Duration::from_millis(200);
const INBOUND_WAIT: Duration = Duration::from_millis(1);
const REFRESH_INTERVAL: Duration = Duration::from_millis(10);

enum InEvent {
    Msg { conn_id: u64, msg: Message },
    Gone { conn_id: u64 },
}

enum WriteCmd {
    Frame(Vec<u8>, usize),
    Close,
}

struct Conn {
    writer: mpsc::Sender<WriteCmd>,
    consumer_id: Option<u64>,
    ephemeral: bool,
    queued_records: Arc<AtomicUsize>,
}

/// Serves the broker on an already-bound listener until `shutdown` is
/// set. Binding is the caller's job so an in-use port surfaces before
/// any state is touched.
pub fn run(
    mut core: BrokerCore,
    listener: TcpListener,
    shutdown: Arc<AtomicBool>,
) -> std::io::Result<()> {
    core.set_event_recording(false);
    listener.set_nonblocking(true)?;

    let (tx, rx) = mpsc::channel::<InEvent>();
    let mut conns: HashMap<u64, Conn> = HashMap::new();
    let mut by_consumer: HashMap<u64, u64> = HashMap::new();
    let mut next_conn_id: u64 = 1;
    let mut threads: Vec<thread::JoinHandle<()>> = Vec::new();
    let mut last_refresh = Instant::now() - REFRESH_INTERVAL;

    loop {
        if shutdown.load(Ordering::SeqCst) {
            let _ = core.shutdown();
            route_outputs(&mut core, &mut conns, &mut by_consumer);
            for conn in conns.values() {
                let _ = conn.writer.send(WriteCmd::Close);
            }
            break;
        }

        // New connections.
        loop {
            match listener.accept() {
                Ok((stream, _)) => {
                    let conn_id = next_conn_id;
                    next_conn_id += 1;
                    match spawn_conn(conn_id, stream, tx.clone(), shutdown.clone()) {
                        Ok((conn, reader, writer)) => {
                            conns.insert(conn_id, conn);
                            threads.push(reader);
                            threads.push(writer);
                        }
                        Err(e) => log::warn!("connection setup failed: {e}"),
                    }
                }
                Err(e) if e.kind() == ErrorKind::WouldBlock => break,
                Err(e) => {
                    log::warn!("accept failed: {e}");
                    break;
                }
            }
        }

        // Inbound frames: block briefly on the first, drain the rest.
        match rx.recv_timeout(INBOUND_WAIT) {
            Ok(ev) => {
                handle_inbound(&mut core, &mut conns, &mut by_consumer, ev);
                while let Ok(ev) = rx.try_recv() {
                    handle_inbound(&mut core, &mut conns, &mut by_consumer, ev);
                }
            }
            Err(mpsc::RecvTimeoutError::Timeout) => {}
            Err(mpsc::RecvTimeoutError::Disconnected) => {}
        }

        if last_refresh.elapsed() >= REFRESH_INTERVAL {
            if let Err(e) = core.refresh_sources() {
                log::error!("journal refresh failed: {e}");
            }
            last_refresh = Instant::now();
        }
        if let Err(e) = core.tick() {
            log::error!("broker tick failed: {e}");
        }
        route_outputs(&mut core, &mut conns, &mut by_consumer);
    }

    drop(conns);
    drop(tx);
    for t in threads {
        let _ = t.join();
    }
    Ok(())
}

fn spawn_conn(
    conn_id: u64,
    stream: TcpStream,
    tx: mpsc::Sender<InEvent>,
    shutdown: Arc<AtomicBool>,
) -> std::io::Result<(Conn, thread::JoinHandle<()>, thread::JoinHandle<()>)> {
    stream.set_nodelay(true)?;
    let read_half = stream.try_clone()?;
    read_half.set_read_timeout(Some(READ_POLL))?;
    let (wtx, wrx) = mpsc::channel::<WriteCmd>();
    let queued_records = Arc::new(AtomicUsize::new(0));

    let reader = thread::Builder::new()
        .name(format!("lcap-read-{conn_id}"))
        .spawn(move || reader_loop(conn_id, read_half, tx, shutdown))?;

    let queued = queued_records.clone();
    let writer = thread::Builder::new()
        .name(format!("lcap-write-{conn_id}"))
        .spawn(move || writer_loop(stream, wrx, queued))?;

    Ok((
        Conn { writer: wtx, consumer_id: None, ephemeral: false, queued_records },
        reader,
        writer,
    ))
}

fn reader_loop(
    conn_id: u64,
    mut stream: TcpStream,
    tx: mpsc::Sender<InEvent>,
    shutdown: Arc<AtomicBool>,
) {
    let mut inbound = Vec::new();
    let mut chunk = [0u8; 65536];
    loop {
        if shutdown.load(Ordering::SeqCst) {
            return; // main loop closes every conn on shutdown
        }
        match stream.read(&mut chunk) {
            Ok(0) => break,
            Ok(n) => {
                inbound.extend_from_slice(&chunk[..n]);
                loop {
                    match frame_decode_stream(&inbound) {
                        Ok(Some((msg, used))) => {
                            inbound.drain(..used);
                            if tx.send(InEvent::Msg { conn_id, msg }).is_err() {
                                return;
                            }
                        }
                        Ok(None) => break,
                        Err(e) => {
                            log::debug!("conn {conn_id}: bad frame: {e}");
                            let _ = tx.send(InEvent::Gone { conn_id });
                            return;
                        }
                    }
                }
            }
            Err(e) if e.kind() == ErrorKind::WouldBlock || e.kind() == ErrorKind::TimedOut => {
                continue;
            }
            Err(_) => break,
        }
    }
    let _ = tx.send(InEvent::Gone { conn_id });
}

fn writer_loop(stream: TcpStream, rx: mpsc::Receiver<WriteCmd>, queued: Arc<AtomicUsize>) {
    let mut stream = stream;
    loop {
        match rx.recv() {
            Ok(WriteCmd::Frame(bytes, records)) => {
                let ok = stream.write_all(&bytes).is_ok();
                queued.fetch_sub(records, Ordering::SeqCst);
                if !ok {
                    break; // reader sees the close and reports Gone
                }
            }
            Ok(WriteCmd::Close) | Err(_) => break,
        }
    }
    let _ = stream.shutdown(Shutdown::Both);
}

fn handle_inbound(
    core: &mut BrokerCore,
    conns: &mut HashMap<u64, Conn>,
    by_consumer: &mut HashMap<u64, u64>,
    ev: InEvent,
) {
    match ev {
        InEvent::Gone { conn_id } => {
            if let Some(conn) = conns.remove(&conn_id) {
                let _ = conn.writer.send(WriteCmd::Close);
                if let Some(cid) = conn.consumer_id {
                    by_consumer.remove(&cid);
                    core.client_leave(cid, LeaveReason::Crash);
                    core.dispatch_all();
                }
            }
        }
        InEvent::Msg { conn_id, msg } => {
            let Some(conn) = conns.get_mut(&conn_id) else { return };
            match (conn.consumer_id, msg) {
                (None, Message::Hello { role, window, mask_bits, group }) => {
                    match core.client_hello(role, window, mask_bits, &group) {
                        Ok(cid) => {
                            conn.consumer_id = Some(cid);
                            conn.ephemeral = core.is_ephemeral(cid);
                            by_consumer.insert(cid, conn_id);
                            core.dispatch_all();
                        }
                        Err(e @ BrokerError::BadMask(_)) => {
                            reject(conn, ERR_BAD_MASK, &e.to_string());
                        }
                        Err(e) => reject(conn, ERR_PROTOCOL, &e.to_string()),
                    }
                }
                (Some(cid), Message::Ack { mdt_id, indices }) => {
                    match core.client_ack(cid, mdt_id, &indices) {
                        Ok(()) => core.dispatch_all(),
                        Err(e @ BrokerError::AckNeverAssigned { .. }) => {
                            reject(conn, ERR_BAD_ACK, &e.to_string());
                            conn.consumer_id = None;
                            by_consumer.remove(&cid);
                            core.client_leave(cid, LeaveReason::Crash);
                            core.dispatch_all();
                        }
                        Err(e) => {
                            reject(conn, ERR_PROTOCOL, &e.to_string());
                            conn.consumer_id = None;
                            by_consumer.remove(&cid);
                            core.client_leave(cid, LeaveReason::Crash);
                            core.dispatch_all();
                        }
                    }
                }
                (Some(cid), Message::Fin) => {
                    conn.consumer_id = None;
                    by_consumer.remove(&cid);
                    core.client_leave(cid, LeaveReason::Graceful);
                    core.dispatch_all();
                    let _ = conn.writer.send(WriteCmd::Close);
                }
                (Some(cid), Message::StatsReq) => {
                    core.stats_reply(cid);
                }
                (state, other) => {
                    log::debug!(
                        "conn {conn_id}: protocol violation: {:?} while consumer={state:?}",
                        other.msg_type()
                    );
                    reject(conn, ERR_PROTOCOL, "unexpected message");
                    if let Some(cid) = state {
                        conn.consumer_id = None;
                        by_consumer.remove(&cid);
                        core.client_leave(cid, LeaveReason::Crash);
                        core.dispatch_all();
                    }
                }
            }
        }
    }
}

fn reject(conn: &Conn, code: u16, msg: &str) {
    let frame = frame_encode(&Message::Error { code, msg: msg.to_string() });
    let _ = conn.writer.send(WriteCmd::Frame(frame, 0));
    let _ = conn.writer.send(WriteCmd::Close);
}

/// Drains core outputs into connection writer queues, enforcing the
/// ephemeral queue bound. Loops because an overflow generates further
/// outputs (the ERROR and Disconnect for the slow consumer).
fn route_outputs(
    core: &mut BrokerCore,
    conns: &mut HashMap<u64, Conn>,
    by_consumer: &mut HashMap<u64, u64>,
) {
    loop {
        let outputs = core.take_outputs();
        if outputs.is_empty() {
            return;
        }
        for out in outputs {
            match out {
                BrokerOutput::Send { consumer_id, msg } => {
                    let Some(&conn_id) = by_consumer.get(&consumer_id) else { continue };
                    let Some(conn) = conns.get(&conn_id) else { continue };
                    let records = match &msg {
                        Message::Recs { records, .. } => records.len(),
                        _ => 0,
                    };
                    if conn.ephemeral && records > 0 {
                        let queued = conn.queued_records.load(Ordering::SeqCst);
                        if queued + records > core.eq_limit() {
                            core.ephemeral_overflow(consumer_id);
                            continue;
                        }
                    }
                    conn.queued_records.fetch_add(records, Ordering::SeqCst);
                    let frame = frame_encode(&msg);
                    let _ = conn.writer.send(WriteCmd::Frame(frame, records));
                }
                BrokerOutput::Disconnect { consumer_id } => {
                    if let Some(conn_id) = by_consumer.remove(&consumer_id) {
                        if let Some(conn) = conns.get_mut(&conn_id) {
                            conn.consumer_id = None;
                            let _ = conn.writer.send(WriteCmd::Close);
                        }
                    }
                }
            }
        }
    }
}
