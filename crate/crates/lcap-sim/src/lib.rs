//! Deterministic scenario harness for the changelog broker.
//!
//! A scenario text file describes sources, consumer groups, ephemeral
//! listeners and injected faults; `run_scenario` executes it against a
//! real broker core over in-memory byte channels and returns a totally
//! ordered event log; `verify_properties` checks the delivery guarantees
//! against that log alone. Same scenario, same seed, same log.

pub mod log;
pub mod oracle;
pub mod run;
pub mod spec;
pub mod verify;

pub use log::{ConsumerMeta, DeliveryLog, Event};
pub use oracle::{oracle_replay, NamespaceModel, OracleError};
pub use run::{run_scenario, RunError};
pub use spec::{ScenarioSpec, SpecError};
pub use verify::{verify_properties, PropertyResult};
