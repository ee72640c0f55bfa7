//! Streaming consumer: joins a group (or attaches as an ephemeral
//! listener), prints one line per record, and acks as it goes.
//!
//! Exit codes: 0 on broker FIN, 1 on a mid-stream error, 2 bad
//! arguments, 5 if the broker refuses the connection.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, ValueEnum};

use lcap_core::client::{ClientError, ClientEvent, Session, SessionOptions};
use lcap_core::wire::Role;

#[derive(Clone, Copy, ValueEnum)]
enum Mode {
    /// Group member: load-balanced, acked, counted for clearing.
    Persistent,
    /// Listener: new records only, never acks, may be dropped.
    Ephemeral,
}

#[derive(Parser)]
#[command(name = "lcap-consumer", about = "Changelog stream consumer")]
struct Args {
    /// Broker address, host:port.
    #[arg(long)]
    server: String,

    /// Consumer group to join.
    #[arg(long, default_value = "default")]
    group: String,

    #[arg(long, value_enum, default_value_t = Mode::Persistent)]
    mode: Mode,

    /// Extension fields to request: "jobid,rename,uidgid" or "none".
    #[arg(long, default_value = "none")]
    fields: String,

    /// Acks queued before a flush.
    #[arg(long, default_value_t = 32)]
    ack_batch: usize,

    /// In-flight record cap granted to the broker.
    #[arg(long, default_value_t = 64)]
    window: u32,

    /// Output file (defaults to stdout).
    #[arg(long)]
    out: Option<PathBuf>,
}

fn main() -> ExitCode {
    lcap_tools::init_logging();
    let args = Args::parse();

    let mask = match lcap_tools::parse_fields(&args.fields) {
        Ok(mask) => mask,
        Err(e) => {
            eprintln!("lcap-consumer: --fields: {e}");
            return ExitCode::from(2);
        }
    };

    let mut out: BufWriter<Box<dyn Write>> = match &args.out {
        Some(path) => match File::create(path) {
            Ok(f) => BufWriter::new(Box::new(f)),
            Err(e) => {
                eprintln!("lcap-consumer: {}: {e}", path.display());
                return ExitCode::from(2);
            }
        },
        None => BufWriter::new(Box::new(std::io::stdout())),
    };

    let (role, persistent) = match args.mode {
        Mode::Persistent => (Role::Persistent, true),
        Mode::Ephemeral => (Role::Ephemeral, false),
    };
    let opts = SessionOptions { role, window: args.window, mask, ack_batch: args.ack_batch };
    let mut session = match Session::connect(&args.server, &args.group, opts) {
        Ok(s) => s,
        Err(ClientError::Io(e)) if e.kind() == std::io::ErrorKind::ConnectionRefused => {
            eprintln!("lcap-consumer: {}: connection refused", args.server);
            return ExitCode::from(5);
        }
        Err(e) => {
            eprintln!("lcap-consumer: connect: {e}");
            return ExitCode::FAILURE;
        }
    };
    log::info!(
        "connected as consumer {} ({} mdt source(s))",
        session.consumer_id(),
        session.heads().len()
    );

    loop {
        match session.next() {
            Ok(ClientEvent::Records { mdt_id, records }) => {
                for rec in &records {
                    if writeln!(out, "{}", lcap_tools::record_line(mdt_id, rec)).is_err() {
                        eprintln!("lcap-consumer: output write failed");
                        return ExitCode::FAILURE;
                    }
                }
                if persistent {
                    for rec in &records {
                        if let Err(e) = session.ack(mdt_id, rec.index) {
                            eprintln!("lcap-consumer: ack: {e}");
                            return ExitCode::FAILURE;
                        }
                    }
                }
            }
            Ok(ClientEvent::Fin) => {
                if out.flush().is_err() {
                    eprintln!("lcap-consumer: output flush failed");
                    return ExitCode::FAILURE;
                }
                // Best effort: the broker is already tearing down.
                let _ = session.finish();
                return ExitCode::SUCCESS;
            }
            Ok(ClientEvent::Stats(text)) => {
                log::info!("stats:\n{text}");
            }
            Ok(ClientEvent::Error { code, msg }) => {
                eprintln!("lcap-consumer: broker error {code}: {msg}");
                return ExitCode::FAILURE;
            }
            Err(e) => {
                eprintln!("lcap-consumer: {e}");
                return ExitCode::FAILURE;
            }
        }
    }
}
