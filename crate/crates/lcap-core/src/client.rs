//! Blocking consumer-side session: HELLO handshake, framed reads with
//! an acknowledgment timer, batched ACK writes.

use std::io::{ErrorKind, Read, Write};
use std::net::{TcpStream, ToSocketAddrs};
use std::time::{Duration, Instant};

use thiserror::Error;

use crate::record::{ChangelogRecord, ExtMask};
use crate::wire::{frame_decode_stream, frame_encode, Message, Role, WireError};

/// Acks are flushed when this many are queued or when the timer fires,
/// whichever comes first.
pub const ACK_FLUSH_INTERVAL: Duration = Duration::from_millis(100);

#[derive(Debug, Error)]
pub enum ClientError {
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("wire: {0}")]
    Wire(#[from] WireError),
    #[error("broker rejected the session (code {code}): {msg}")]
    Rejected { code: u16, msg: String },
    #[error("connection closed by the broker")]
    Disconnected,
    #[error("unexpected {0} during handshake")]
    UnexpectedMessage(&'static str),
}

#[derive(Debug, Clone, Copy)]
pub struct SessionOptions {
    pub role: Role,
    pub window: u32,
    pub mask: ExtMask,
    pub ack_batch: usize,
}

impl Default for SessionOptions {
    fn default() -> SessionOptions {
        SessionOptions { role: Role::Persistent, window: 64, mask: ExtMask::EMPTY, ack_batch: 32 }
    }
}

/// What a read produced, after frame reassembly.
#[derive(Debug)]
pub enum ClientEvent {
    Records { mdt_id: u32, records: Vec<ChangelogRecord> },
    Stats(String),
    /// The broker is shutting down cleanly.
    Fin,
    /// The broker is kicking this session.
    Error { code: u16, msg: String },
}

pub struct Session {
    stream: TcpStream,
    inbound: Vec<u8>,
    consumer_id: u64,
    heads: Vec<(u32, u64)>,
    ack_batch: usize,
    pending_acks: Vec<(u32, u64)>,
    last_flush: Instant,
}

impl Session {
    /// Connects and completes the HELLO handshake.
    pub fn connect<A: ToSocketAddrs>(
        addr: A,
        group: &str,
        opts: SessionOptions,
    ) -> Result<Session, ClientError> {
        let mut stream = TcpStream::connect(addr)?;
        stream.set_nodelay(true)?;
        let hello = Message::Hello {
            role: opts.role,
            window: opts.window,
            mask_bits: opts.mask.bits(),
            group: group.to_string(),
        };
        stream.write_all(&frame_encode(&hello))?;

        let mut session = Session {
            stream,
            inbound: Vec::new(),
            consumer_id: 0,
            heads: Vec::new(),
            ack_batch: opts.ack_batch.max(1),
            pending_acks: Vec::new(),
            last_flush: Instant::now(),
        };
        loop {
            match session.read_message(None)? {
                Message::HelloAck { consumer_id, heads } => {
                    session.consumer_id = consumer_id;
                    session.heads = heads;
                    break;
                }
                Message::Error { code, msg } => return Err(ClientError::Rejected { code, msg }),
                other => return Err(ClientError::UnexpectedMessage(message_name(&other))),
            }
        }
        session.stream.set_read_timeout(Some(ACK_FLUSH_INTERVAL))?;
        Ok(session)
    }

    pub fn consumer_id(&self) -> u64 {
        self.consumer_id
    }

    /// Per-MDT head index the broker reported at connect.
    pub fn heads(&self) -> &[(u32, u64)] {
        &self.heads
    }

    /// Blocks for the next event, flushing queued acks whenever the
    /// flush timer fires between frames.
    pub fn next(&mut self) -> Result<ClientEvent, ClientError> {
        loop {
            if let Some(ev) = self.next_timeout(ACK_FLUSH_INTERVAL)? {
                return Ok(ev);
            }
        }
    }

    /// Like [`Session::next`] but gives up after `timeout`, returning
    /// `Ok(None)`. Queued acks are still flushed on the timer.
    pub fn next_timeout(
        &mut self,
        timeout: Duration,
    ) -> Result<Option<ClientEvent>, ClientError> {
        self.flush_if_due()?;
        match self.read_message(Some(timeout)) {
            Ok(Message::Recs { mdt_id, records }) => {
                Ok(Some(ClientEvent::Records { mdt_id, records }))
            }
            Ok(Message::Stats { text }) => Ok(Some(ClientEvent::Stats(text))),
            Ok(Message::Fin) => {
                self.flush_acks()?;
                Ok(Some(ClientEvent::Fin))
            }
            Ok(Message::Error { code, msg }) => Ok(Some(ClientEvent::Error { code, msg })),
            Ok(other) => Err(ClientError::UnexpectedMessage(message_name(&other))),
            Err(ClientError::Io(e))
                if e.kind() == ErrorKind::WouldBlock || e.kind() == ErrorKind::TimedOut =>
            {
                self.flush_if_due()?;
                Ok(None)
            }
            Err(e) => Err(e),
        }
    }

    /// Queues an acknowledgment; flushes when the batch fills.
    pub fn ack(&mut self, mdt_id: u32, index: u64) -> Result<(), ClientError> {
        self.pending_acks.push((mdt_id, index));
        if self.pending_acks.len() >= self.ack_batch {
            self.flush_acks()?;
        }
        Ok(())
    }

    pub fn flush_acks(&mut self) -> Result<(), ClientError> {
        if !self.pending_acks.is_empty() {
            let mut by_mdt: std::collections::BTreeMap<u32, Vec<u64>> =
                std::collections::BTreeMap::new();
            for (mdt_id, index) in self.pending_acks.drain(..) {
                by_mdt.entry(mdt_id).or_default().push(index);
            }
            for (mdt_id, indices) in by_mdt {
                let frame = frame_encode(&Message::Ack { mdt_id, indices });
                self.stream.write_all(&frame)?;
            }
        }
        self.last_flush = Instant::now();
        Ok(())
    }

    fn flush_if_due(&mut self) -> Result<(), ClientError> {
        if !self.pending_acks.is_empty() && self.last_flush.elapsed() >= ACK_FLUSH_INTERVAL {
            self.flush_acks()?;
        }
        Ok(())
    }

    pub fn request_stats(&mut self) -> Result<(), ClientError> {
        self.stream.write_all(&frame_encode(&Message::StatsReq))?;
        Ok(())
    }

    /// Graceful leave: flush acks, send FIN. Write errors after FIN are
    /// ignored since the broker may already have closed.
    pub fn finish(mut self) -> Result<(), ClientError> {
        self.flush_acks()?;
        let _ = self.stream.write_all(&frame_encode(&Message::Fin));
        let _ = self.stream.shutdown(std::net::Shutdown::Write);
        Ok(())
    }

    /// Reads one message, buffering partial frames. `timeout` None
    /// means block indefinitely (handshake).
    fn read_message(&mut self, timeout: Option<Duration>) -> Result<Message, ClientError> {
        self.stream.set_read_timeout(timeout)?;
        loop {
            if let Some((msg, used)) = frame_decode_stream(&self.inbound)? {
                self.inbound.drain(..used);
                return Ok(msg);
            }
            let mut chunk = [0u8; 65536];
            match self.stream.read(&mut chunk) {
                Ok(0) => return Err(ClientError::Disconnected),
                Ok(n) => self.inbound.extend_from_slice(&chunk[..n]),
                Err(e) => return Err(ClientError::Io(e)),
            }
        }
    }
}

fn message_name(msg: &Message) -> &'static str {
    match msg {
        Message::Hello { .. } => "HELLO",
        Message::HelloAck { .. } => "HELLO_ACK",
        Message::Recs { .. } => "RECS",
        Message::Ack { .. } => "ACK",
        Message::Fin => "FIN",
        Message::StatsReq => "STATS_REQ",
        Message::Stats { .. } => "STATS",
        Message::Error { .. } => "ERROR",
    }
}
