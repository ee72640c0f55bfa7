//! Runs a scenario file and reports one PROP line per delivery property.
//!
//! Usage: lcap-sim <scenario-file> [--events]
//!
//! Exit status: 0 when every property holds, 1 when any fails, 2 on a
//! scenario or execution error.

use std::path::Path;
use std::process::ExitCode;

use lcap_sim::spec::ScenarioSpec;
use lcap_sim::{run_scenario, verify_properties};

fn main() -> ExitCode {
    let mut args = std::env::args().skip(1);
    let Some(path) = args.next() else {
        eprintln!("usage: lcap-sim <scenario-file> [--events]");
        return ExitCode::from(2);
    };
    let mut dump_events = false;
    for arg in args {
        match arg.as_str() {
            "--events" => dump_events = true,
            other => {
                eprintln!("unknown argument {other:?}");
                return ExitCode::from(2);
            }
        }
    }

    let spec = match ScenarioSpec::load(Path::new(&path)) {
        Ok(spec) => spec,
        Err(err) => {
            eprintln!("{path}: {err}");
            return ExitCode::from(2);
        }
    };
    let log = match run_scenario(&spec) {
        Ok(log) => log,
        Err(err) => {
            eprintln!("run failed: {err}");
            return ExitCode::from(2);
        }
    };

    if dump_events {
        for (step, event) in &log.entries {
            println!("{step:>8} {event:?}");
        }
    }

    println!(
        "run: steps {} entries {} quiescent {}",
        log.steps,
        log.entries.len(),
        log.quiescent
    );
    let mut failed = false;
    for result in verify_properties(&log, &spec) {
        if result.pass {
            println!("PROP {} PASS", result.name);
        } else {
            failed = true;
            println!("PROP {} FAIL {}", result.name, result.witness);
        }
    }
    if failed {
        ExitCode::from(1)
    } else {
        ExitCode::SUCCESS
    }
}
