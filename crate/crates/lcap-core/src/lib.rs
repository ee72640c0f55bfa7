//! Changelog aggregation broker core: record codec, per-source
//! journals, the preprocessing pipeline, consumer-group distribution
//! state, and the TCP wire protocol plus blocking host/client shells.

pub mod broker;
pub mod client;
pub mod config;
pub mod journal;
pub mod pipeline;
pub mod record;
pub mod server;
pub mod tracker;
pub mod wire;
pub mod workload;

pub use broker::{BrokerCore, BrokerError, BrokerEvent, BrokerOptions, BrokerOutput, LeaveReason};
pub use config::{BrokerConfig, ConfigError, SourceConfig};
pub use journal::{Cursor, Journal, JournalError, JournalOptions};
pub use pipeline::{pipeline_apply, PipelineModule, PipelineResult, PipelineWindow};
pub use record::{
    decode_record, decode_record_stream, encode_record, remap_record, ChangelogRecord, CodecError,
    ExtMask, Fid, JobId, OpCode, RecordBody, RenameSource,
};
pub use tracker::AckTracker;
pub use wire::{frame_decode, frame_decode_stream, frame_encode, Message, Role, WireError};
pub use workload::{OpsMix, WorkloadGen, ROOT_FID};
