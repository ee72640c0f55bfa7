//! One-shot status probe: attaches as an ephemeral listener, asks for
//! the broker's counters, prints them, and leaves.
//!
//! Exit codes: 0 stats printed, 1 timeout or mid-stream error, 5 if
//! the broker refuses the connection.

use std::process::ExitCode;
use std::time::{Duration, Instant};

use clap::Parser;

use lcap_core::client::{ClientError, ClientEvent, Session, SessionOptions};
use lcap_core::record::ExtMask;
use lcap_core::wire::Role;

const REPLY_DEADLINE: Duration = Duration::from_secs(5);

#[derive(Parser)]
#[command(name = "lcap-stat", about = "Broker status probe")]
struct Args {
    /// Broker address, host:port.
    #[arg(long)]
    server: String,
}

fn main() -> ExitCode {
    lcap_tools::init_logging();
    let args = Args::parse();

    let opts = SessionOptions {
        role: Role::Ephemeral,
        window: 0,
        mask: ExtMask::EMPTY,
        ack_batch: 1,
    };
    let mut session = match Session::connect(&args.server, "", opts) {
        Ok(s) => s,
        Err(ClientError::Io(e)) if e.kind() == std::io::ErrorKind::ConnectionRefused => {
            eprintln!("lcap-stat: {}: connection refused", args.server);
            return ExitCode::from(5);
        }
        Err(e) => {
            eprintln!("lcap-stat: connect: {e}");
            return ExitCode::FAILURE;
        }
    };

    if let Err(e) = session.request_stats() {
        eprintln!("lcap-stat: {e}");
        return ExitCode::FAILURE;
    }

    let deadline = Instant::now() + REPLY_DEADLINE;
    loop {
        if Instant::now() >= deadline {
            eprintln!("lcap-stat: no stats reply within {REPLY_DEADLINE:?}");
            return ExitCode::FAILURE;
        }
        match session.next_timeout(Duration::from_millis(200)) {
            Ok(Some(ClientEvent::Stats(text))) => {
                print!("{text}");
                let _ = session.finish();
                return ExitCode::SUCCESS;
            }
            // A live broker streams records at ephemerals; skip them.
            Ok(Some(ClientEvent::Records { .. })) | Ok(None) => continue,
            Ok(Some(ClientEvent::Fin)) => {
                eprintln!("lcap-stat: broker shut down before replying");
                return ExitCode::FAILURE;
            }
            Ok(Some(ClientEvent::Error { code, msg })) => {
                eprintln!("lcap-stat: broker error {code}: {msg}");
                return ExitCode::FAILURE;
            }
            Err(e) => {
                eprintln!("lcap-stat: {e}");
                return ExitCode::FAILURE;
            }
        }
    }
}
