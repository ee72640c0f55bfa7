//! Independent namespace replay model.
//!
//! Replays a changelog stream against a reference namespace and reports
//! the final state, erroring on any internally inconsistent transition.
//! Used to check that preprocessing (drops plus reordering) leaves the
//! stream's effect untouched: the filtered output must replay to exactly
//! the state the raw input does.
//!
//! The model keys objects by FID with a single link each, mirroring how
//! the workload generator treats hard links (a relink of the one entry)
//! and renames (the record's source field names a replaced victim).

use std::collections::BTreeMap;

use lcap_core::record::{ChangelogRecord, Fid, OpCode};
use lcap_core::workload::ROOT_FID;
use thiserror::Error;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum OracleError {
    #[error("record {index}: {op} targets unknown fid {fid}")]
    UnknownTarget { index: u64, op: &'static str, fid: Fid },
    #[error("record {index}: {op} creates {fid} which already exists")]
    DuplicateCreate { index: u64, op: &'static str, fid: Fid },
    #[error("record {index}: {op} references missing parent {parent}")]
    MissingParent { index: u64, op: &'static str, parent: Fid },
    #[error("record {index}: rmdir of non-empty directory {fid}")]
    NonEmptyRmdir { index: u64, fid: Fid },
    #[error("record {index}: rename victim {fid} does not exist")]
    MissingVictim { index: u64, fid: Fid },
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ModelEntry {
    pub parent: Fid,
    pub name: Vec<u8>,
    /// Bumped by each attribute-changing operation. A count is
    /// permutation-invariant, so reordered replays still match exactly.
    pub attr_version: u64,
}

/// Final namespace state after a replay. Two streams are equivalent when
/// their models compare equal.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct NamespaceModel {
    pub entries: BTreeMap<Fid, ModelEntry>,
}

impl NamespaceModel {
    fn parent_ok(&self, parent: Fid) -> bool {
        parent == ROOT_FID || self.entries.contains_key(&parent)
    }

    fn apply(&mut self, rec: &ChangelogRecord) -> Result<(), OracleError> {
        let index = rec.index;
        let op = rec.opcode.name();
        let fid = rec.target;
        match rec.opcode {
            code if code.creates_target() => {
                if self.entries.contains_key(&fid) {
                    return Err(OracleError::DuplicateCreate { index, op, fid });
                }
                if !self.parent_ok(rec.parent) {
                    return Err(OracleError::MissingParent { index, op, parent: rec.parent });
                }
                self.entries.insert(
                    fid,
                    ModelEntry { parent: rec.parent, name: rec.name.clone(), attr_version: 0 },
                );
            }
            OpCode::Unlink | OpCode::Rmdir => {
                if self.entries.remove(&fid).is_none() {
                    return Err(OracleError::UnknownTarget { index, op, fid });
                }
                if rec.opcode == OpCode::Rmdir
                    && self.entries.values().any(|e| e.parent == fid)
                {
                    return Err(OracleError::NonEmptyRmdir { index, fid });
                }
            }
            OpCode::Hlink | OpCode::Rename => {
                if rec.opcode == OpCode::Rename {
                    if let Some(rs) = &rec.rename_source {
                        if !rs.source.is_null()
                            && self.entries.remove(&rs.source).is_none()
                        {
                            return Err(OracleError::MissingVictim { index, fid: rs.source });
                        }
                    }
                }
                if !self.parent_ok(rec.parent) {
                    return Err(OracleError::MissingParent { index, op, parent: rec.parent });
                }
                let entry = self
                    .entries
                    .get_mut(&fid)
                    .ok_or(OracleError::UnknownTarget { index, op, fid })?;
                entry.parent = rec.parent;
                entry.name = rec.name.clone();
            }
            OpCode::Sattr | OpCode::Xattr => {
                let entry = self
                    .entries
                    .get_mut(&fid)
                    .ok_or(OracleError::UnknownTarget { index, op, fid })?;
                entry.attr_version += 1;
            }
            OpCode::Close => {
                if !self.entries.contains_key(&fid) {
                    return Err(OracleError::UnknownTarget { index, op, fid });
                }
            }
            OpCode::Mark => {}
            _ => {}
        }
        Ok(())
    }
}

/// Replays `records` from an empty namespace.
pub fn oracle_replay(records: &[ChangelogRecord]) -> Result<NamespaceModel, OracleError> {
    let mut model = NamespaceModel::default();
    for rec in records {
        model.apply(rec)?;
    }
    Ok(model)
}

#[cfg(test)]
mod tests {
    use super::*;
    use lcap_core::pipeline::{pipeline_apply, PipelineModule, PipelineWindow};
    use lcap_core::record::RecordBody;
    use lcap_core::workload::{OpsMix, WorkloadGen};

    fn to_records(bodies: Vec<RecordBody>) -> Vec<ChangelogRecord> {
        bodies
            .into_iter()
            .enumerate()
            .map(|(k, b)| b.into_record(1, k as u64 + 1))
            .collect()
    }

    #[test]
    fn create_then_remove_leaves_empty_model() {
        let mut gen = WorkloadGen::new(1, OpsMix::parse("creat:1").unwrap(), 0);
        let mut records = to_records(gen.generate(3));
        let target = records[1].target;
        records.push(ChangelogRecord {
            index: 4,
            opcode: OpCode::Unlink,
            ..records[1].clone()
        });
        let model = oracle_replay(&records).unwrap();
        assert_eq!(model.entries.len(), 2);
        assert!(!model.entries.contains_key(&target));
    }

    #[test]
    fn unlink_of_unknown_fid_is_inconsistent() {
        let rec = ChangelogRecord {
            mdt_id: 1,
            index: 1,
            opcode: OpCode::Unlink,
            time_ns: 0,
            target: Fid::new(9, 1, 0),
            parent: ROOT_FID,
            jobid: None,
            rename_source: None,
            uid_gid: None,
            name: b"x".to_vec(),
        };
        assert!(matches!(
            oracle_replay(&[rec]),
            Err(OracleError::UnknownTarget { index: 1, .. })
        ));
    }

    #[test]
    fn preprocessing_preserves_replay_across_seeds() {
        let modules = [PipelineModule::Compensation, PipelineModule::Reorder];
        for seed in 0..20 {
            let mut gen = WorkloadGen::new(seed, OpsMix::default_mix(), 3);
            let records = to_records(gen.generate(1000));
            let raw = oracle_replay(&records).unwrap_or_else(|e| {
                panic!("raw stream seed {seed} inconsistent: {e}")
            });
            let out = pipeline_apply(
                &modules,
                PipelineWindow { mdt_id: 1, records: records.clone() },
            );
            let processed = oracle_replay(&out.kept).unwrap_or_else(|e| {
                panic!("processed stream seed {seed} inconsistent: {e}")
            });
            assert_eq!(raw, processed, "replay diverged for seed {seed}");
        }
    }

    #[test]
    fn attribute_churn_is_counted_per_fid() {
        let mut gen = WorkloadGen::new(2, OpsMix::parse("creat:1").unwrap(), 0);
        let mut records = to_records(gen.generate(1));
        let base = records[0].clone();
        for k in 0..3u64 {
            records.push(ChangelogRecord {
                index: 2 + k,
                opcode: OpCode::Sattr,
                ..base.clone()
            });
        }
        let model = oracle_replay(&records).unwrap();
        assert_eq!(model.entries[&base.target].attr_version, 3);
    }
}
