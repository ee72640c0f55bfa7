//! Line-oriented `key = value` broker configuration.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use thiserror::Error;

use crate::pipeline::PipelineModule;
use crate::wire::DEFAULT_PORT;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("line {line_no}: expected `key = value`, got {line:?}")]
    Syntax { line_no: usize, line: String },
    #[error("line {line_no}: unknown key {key:?}")]
    UnknownKey { line_no: usize, key: String },
    #[error("line {line_no}: bad value for {key}: {reason}")]
    BadValue { line_no: usize, key: String, reason: String },
    #[error("source.{n} is missing {what}")]
    IncompleteSource { n: u32, what: &'static str },
    #[error("sources {a} and {b} both claim mdt_id {mdt_id}")]
    DuplicateMdt { a: u32, b: u32, mdt_id: u32 },
    #[error("no sources configured")]
    NoSources,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SourceConfig {
    pub dir: PathBuf,
    pub mdt_id: u32,
}

#[derive(Debug, Clone)]
pub struct BrokerConfig {
    pub listen: String,
    pub sources: Vec<SourceConfig>,
    /// Max records buffered per source before ingestion pauses.
    pub hwm: usize,
    /// Max records fetched per ingest pass; also the pipeline window span.
    pub batch: usize,
    /// Outbound queue bound per ephemeral consumer.
    pub eq_limit: usize,
    /// Clear upstream immediately while no persistent group exists.
    pub auto_ack_no_groups: bool,
    pub pipeline: Vec<PipelineModule>,
}

impl Default for BrokerConfig {
    fn default() -> BrokerConfig {
        BrokerConfig {
            listen: format!("127.0.0.1:{DEFAULT_PORT}"),
            sources: Vec::new(),
            hwm: 65536,
            batch: 1024,
            eq_limit: 1024,
            auto_ack_no_groups: false,
            pipeline: Vec::new(),
        }
    }
}

impl BrokerConfig {
    pub fn load(path: &Path) -> Result<BrokerConfig, ConfigError> {
        let text = std::fs::read_to_string(path)?;
        BrokerConfig::parse(&text)
    }

    pub fn parse(text: &str) -> Result<BrokerConfig, ConfigError> {
        let mut cfg = BrokerConfig::default();
        // source number -> (dir, mdt_id), ordered by number
        let mut sources: BTreeMap<u32, (Option<PathBuf>, Option<u32>)> = BTreeMap::new();

        for (i, raw) in text.lines().enumerate() {
            let line_no = i + 1;
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| ConfigError::Syntax {
                line_no,
                line: raw.to_string(),
            })?;
            let key = key.trim();
            let value = value.trim();
            let bad = |reason: String| ConfigError::BadValue {
                line_no,
                key: key.to_string(),
                reason,
            };

            if let Some(rest) = key.strip_prefix("source.") {
                let (n, field) = rest.split_once('.').ok_or_else(|| ConfigError::UnknownKey {
                    line_no,
                    key: key.to_string(),
                })?;
                let n: u32 = n.parse().map_err(|_| ConfigError::UnknownKey {
                    line_no,
                    key: key.to_string(),
                })?;
                let entry = sources.entry(n).or_insert((None, None));
                match field {
                    "dir" => entry.0 = Some(PathBuf::from(value)),
                    "mdt_id" => {
                        entry.1 =
                            Some(value.parse().map_err(|e| bad(format!("{e}")))?)
                    }
                    _ => {
                        return Err(ConfigError::UnknownKey { line_no, key: key.to_string() })
                    }
                }
                continue;
            }

            match key {
                "listen" => cfg.listen = value.to_string(),
                "hwm" => cfg.hwm = parse_positive(value).map_err(bad)?,
                "batch" => cfg.batch = parse_positive(value).map_err(bad)?,
                "eq_limit" => cfg.eq_limit = parse_positive(value).map_err(bad)?,
                "auto_ack_no_groups" => {
                    cfg.auto_ack_no_groups = match value {
                        "true" => true,
                        "false" => false,
                        other => return Err(bad(format!("expected true or false, got {other:?}"))),
                    }
                }
                "pipeline" => {
                    cfg.pipeline = value
                        .split(',')
                        .map(str::trim)
                        .filter(|s| !s.is_empty())
                        .map(PipelineModule::from_str)
                        .collect::<Result<Vec<_>, _>>()
                        .map_err(bad)?;
                }
                _ => return Err(ConfigError::UnknownKey { line_no, key: key.to_string() }),
            }
        }

        for (n, (dir, mdt_id)) in sources {
            let dir = dir.ok_or(ConfigError::IncompleteSource { n, what: "dir" })?;
            let mdt_id = mdt_id.ok_or(ConfigError::IncompleteSource { n, what: "mdt_id" })?;
            cfg.sources.push(SourceConfig { dir, mdt_id });
        }
        for (i, a) in cfg.sources.iter().enumerate() {
            for (j, b) in cfg.sources.iter().enumerate().skip(i + 1) {
                if a.mdt_id == b.mdt_id {
                    return Err(ConfigError::DuplicateMdt {
                        a: i as u32,
                        b: j as u32,
                        mdt_id: a.mdt_id,
                    });
                }
            }
        }
        if cfg.sources.is_empty() {
            return Err(ConfigError::NoSources);
        }
        Ok(cfg)
    }
}

fn parse_positive(value: &str) -> Result<usize, String> {
    match value.parse::<usize>() {
        Ok(0) => Err("must be at least 1".to_string()),
        Ok(n) => Ok(n),
        Err(e) => Err(e.to_string()),
    }
}
