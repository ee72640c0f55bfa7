//! Synthetic changelog producer: appends a deterministic workload to
//! a journal directory. Stands in for an MDT when exercising the
//! broker.
//!
//! Exit codes: 0 done, 2 bad arguments, 4 another producer holds the
//! journal lock.

use std::fs::OpenOptions;
use std::os::fd::AsRawFd;
use std::path::PathBuf;
use std::process::ExitCode;
use std::time::{Duration, Instant};

use clap::Parser;

use lcap_core::journal::{Journal, JournalOptions};
use lcap_core::workload::{OpsMix, WorkloadGen};

#[derive(Parser)]
#[command(name = "lcap-producer", about = "Deterministic changelog workload producer")]
struct Args {
    /// Journal directory (created if missing).
    #[arg(long)]
    journal: PathBuf,

    /// MDT id stamped on every record.
    #[arg(long)]
    mdt_id: u32,

    /// Number of records to append.
    #[arg(long)]
    count: u64,

    /// Records per second; 0 means unthrottled.
    #[arg(long, default_value_t = 0)]
    rate: u64,

    /// Workload RNG seed. Same seed, same records.
    #[arg(long, default_value_t = 0)]
    seed: u64,

    /// Operation mix as "op:weight,..." (empty for the default mix).
    #[arg(long, default_value = "")]
    ops_mix: String,

    /// Number of distinct job ids to cycle through.
    #[arg(long, default_value_t = 4)]
    jobid_pool: usize,
}

fn main() -> ExitCode {
    lcap_tools::init_logging();
    let args = Args::parse();

    let mix = if args.ops_mix.is_empty() {
        OpsMix::default_mix()
    } else {
        match OpsMix::parse(&args.ops_mix) {
            Ok(mix) => mix,
            Err(e) => {
                eprintln!("lcap-producer: --ops-mix: {e}");
                return ExitCode::from(2);
            }
        }
    };

    if let Err(e) = std::fs::create_dir_all(&args.journal) {
        eprintln!("lcap-producer: {}: {e}", args.journal.display());
        return ExitCode::from(2);
    }

    // One writer per journal. The lock file outlives us so a crashed
    // producer never wedges the directory.
    let lock_path = args.journal.join("producer.lock");
    let lock_file = match OpenOptions::new().create(true).write(true).open(&lock_path) {
        Ok(f) => f,
        Err(e) => {
            eprintln!("lcap-producer: {}: {e}", lock_path.display());
            return ExitCode::from(2);
        }
    };
    let rc = unsafe { libc::flock(lock_file.as_raw_fd(), libc::LOCK_EX | libc::LOCK_NB) };
    if rc != 0 {
        let err = std::io::Error::last_os_error();
        if err.raw_os_error() == Some(libc::EWOULDBLOCK) {
            eprintln!(
                "lcap-producer: {} is locked by another producer",
                args.journal.display()
            );
            return ExitCode::from(4);
        }
        eprintln!("lcap-producer: flock {}: {err}", lock_path.display());
        return ExitCode::from(2);
    }

    let mut journal =
        match Journal::open_or_create(&args.journal, args.mdt_id, JournalOptions::default()) {
            Ok(j) => j,
            Err(e) => {
                eprintln!("lcap-producer: {}: {e}", args.journal.display());
                return ExitCode::from(2);
            }
        };

    let mut gen = WorkloadGen::new(args.seed, mix, args.jobid_pool.max(1));
    let start = Instant::now();

    let result = if args.rate == 0 {
        append_unthrottled(&mut journal, &mut gen, args.count)
    } else {
        append_paced(&mut journal, &mut gen, args.count, args.rate)
    };
    if let Err(e) = result.and_then(|()| journal.sync().map_err(|e| e.to_string())) {
        eprintln!("lcap-producer: append failed: {e}");
        return ExitCode::FAILURE;
    }

    log::info!(
        "appended {} record(s) to mdt {} in {:?}, next index {}",
        args.count,
        args.mdt_id,
        start.elapsed(),
        journal.next_index()
    );
    drop(lock_file);
    ExitCode::SUCCESS
}

fn append_unthrottled(
    journal: &mut Journal,
    gen: &mut WorkloadGen,
    count: u64,
) -> Result<(), String> {
    let mut remaining = count;
    while remaining > 0 {
        let chunk = remaining.min(256) as usize;
        let bodies = (0..chunk).map(|_| gen.next_body()).collect();
        journal.append_batch(bodies).map_err(|e| e.to_string())?;
        remaining -= chunk as u64;
    }
    Ok(())
}

fn append_paced(
    journal: &mut Journal,
    gen: &mut WorkloadGen,
    count: u64,
    rate: u64,
) -> Result<(), String> {
    let start = Instant::now();
    let per_record = 1.0 / rate as f64;
    for i in 0..count {
        let due = start + Duration::from_secs_f64(i as f64 * per_record);
        let now = Instant::now();
        if due > now {
            std::thread::sleep(due - now);
        }
        journal.append(gen.next_body()).map_err(|e| e.to_string())?;
    }
    Ok(())
}
