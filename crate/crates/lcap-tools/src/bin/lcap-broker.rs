//! Broker daemon: loads a config file, binds the listen address, and
//! serves until SIGTERM or SIGINT.
//!
//! Exit codes: 0 clean shutdown, 2 bad config, 3 listen address in
//! use.

use std::io::Write;
use std::net::TcpListener;
use std::path::PathBuf;
use std::process::ExitCode;
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::{Arc, OnceLock};

use clap::Parser;

use lcap_core::broker::BrokerCore;
use lcap_core::config::BrokerConfig;
use lcap_core::server;

#[derive(Parser)]
#[command(name = "lcap-broker", about = "Changelog aggregation broker")]
struct Args {
    /// Path to the broker config file.
    config: PathBuf,
}

static SHUTDOWN: OnceLock<Arc<AtomicBool>> = OnceLock::new();

extern "C" fn on_signal(_sig: libc::c_int) {
    if let Some(flag) = SHUTDOWN.get() {
        flag.store(true, Ordering::SeqCst);
    }
}

fn main() -> ExitCode {
    lcap_tools::init_logging();
    let args = Args::parse();

    let cfg = match BrokerConfig::load(&args.config) {
        Ok(cfg) => cfg,
        Err(e) => {
            eprintln!("lcap-broker: {}: {e}", args.config.display());
            return ExitCode::from(2);
        }
    };

    let core = match BrokerCore::open_from_config(&cfg) {
        Ok(core) => core,
        Err(e) => {
            eprintln!("lcap-broker: {e}");
            return ExitCode::from(2);
        }
    };

    let listener = match TcpListener::bind(&cfg.listen) {
        Ok(l) => l,
        Err(e) if e.kind() == std::io::ErrorKind::AddrInUse => {
            eprintln!("lcap-broker: {}: {e}", cfg.listen);
            return ExitCode::from(3);
        }
        Err(e) => {
            eprintln!("lcap-broker: {}: {e}", cfg.listen);
            return ExitCode::from(2);
        }
    };

    // The config may ask for port 0; report what the kernel picked so
    // scripts can find us.
    match listener.local_addr() {
        Ok(addr) => {
            println!("listening on {addr}");
            let _ = std::io::stdout().flush();
        }
        Err(e) => log::warn!("local_addr failed: {e}"),
    }

    let shutdown = Arc::new(AtomicBool::new(false));
    let _ = SHUTDOWN.set(shutdown.clone());
    let handler = on_signal as extern "C" fn(libc::c_int);
    unsafe {
        libc::signal(libc::SIGTERM, handler as libc::sighandler_t);
        libc::signal(libc::SIGINT, handler as libc::sighandler_t);
    }

    log::info!(
        "serving {} source(s), hwm {}, batch {}",
        core.mdt_ids().len(),
        cfg.hwm,
        cfg.batch
    );

    match server::run(core, listener, shutdown) {
        Ok(()) => {
            log::info!("shut down cleanly");
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("lcap-broker: {e}");
            ExitCode::FAILURE
        }
    }
}
