//! Pluggable preprocessing applied to ingested record windows.
//!
//! Two modules exist beyond the identity: a compensation filter that
//! drops create/unlink pairs whose whole lifetime sits inside the window,
//! and a locality reorder that groups records by parent directory. Both
//! preserve the delivered stream's effect on the namespace: replaying a
//! filtered, reordered window must leave a model namespace in exactly the
//! state the original window would.

use std::collections::{BTreeSet, HashMap, HashSet};
use std::str::FromStr;

use crate::record::{ChangelogRecord, Fid, OpCode};

/// An index-ordered slice of one MDT's stream, handed to the pipeline.
///
/// Records are strictly increasing by index; the window never spans MDTs.
#[derive(Debug, Clone)]
pub struct PipelineWindow {
    pub mdt_id: u32,
    pub records: Vec<ChangelogRecord>,
}

/// Pipeline output: surviving records in delivery order plus the indices
/// that were dropped. Kept and dropped together partition the input.
#[derive(Debug, Clone)]
pub struct PipelineResult {
    pub kept: Vec<ChangelogRecord>,
    pub dropped: BTreeSet<u64>,
}

/// A compiled-in pipeline stage, selected by name in the broker config.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PipelineModule {
    Compensation,
    Reorder,
    Identity,
}

impl PipelineModule {
    pub fn name(&self) -> &'static str {
        match self {
            PipelineModule::Compensation => "compensation",
            PipelineModule::Reorder => "reorder",
            PipelineModule::Identity => "identity",
        }
    }
}

impl FromStr for PipelineModule {
    type Err = String;

    fn from_str(s: &str) -> Result<PipelineModule, String> {
        match s {
            "compensation" => Ok(PipelineModule::Compensation),
            "reorder" => Ok(PipelineModule::Reorder),
            "identity" => Ok(PipelineModule::Identity),
            other => Err(format!("unknown pipeline module \"{other}\"")),
        }
    }
}

/// FIDs referenced as a parent (or rename source parent) anywhere in the
/// window.
fn parent_refs(records: &[ChangelogRecord]) -> HashSet<Fid> {
    let mut refs = HashSet::new();
    for rec in records {
        if !rec.parent.is_null() {
            refs.insert(rec.parent);
        }
        if let Some(rs) = &rec.rename_source {
            if !rs.source_parent.is_null() {
                refs.insert(rs.source_parent);
            }
        }
    }
    refs
}

/// Drops operation pairs that compensate each other.
///
/// A target FID qualifies when its create and its unlink/rmdir both sit
/// in the window with no rename or hard link touching the FID in between;
/// the create, the removal, and every intermediate record targeting the
/// FID are dropped together. A FID that any window record references as a
/// parent never qualifies: dropping it would orphan the surviving
/// reference and replay of the filtered stream would diverge.
pub fn compensation_filter(window: &PipelineWindow) -> PipelineResult {
    let records = &window.records;
    let shared_dirs = parent_refs(records);

    let mut drop_at = vec![false; records.len()];
    // fid -> positions of the open lifetime (create plus intermediates)
    let mut open: HashMap<Fid, Vec<usize>> = HashMap::new();

    for (pos, rec) in records.iter().enumerate() {
        let fid = rec.target;
        match rec.opcode {
            op if op.creates_target() => {
                if !shared_dirs.contains(&fid) {
                    open.insert(fid, vec![pos]);
                }
            }
            OpCode::Unlink | OpCode::Rmdir => {
                if let Some(mut lifetime) = open.remove(&fid) {
                    lifetime.push(pos);
                    for p in lifetime {
                        drop_at[p] = true;
                    }
                }
            }
            OpCode::Rename => {
                // The rename moves the target and removes any victim;
                // both escape the window's knowledge.
                open.remove(&fid);
                if let Some(rs) = &rec.rename_source {
                    if !rs.source.is_null() {
                        open.remove(&rs.source);
                    }
                }
            }
            OpCode::Hlink => {
                open.remove(&fid);
            }
            OpCode::Mark => {}
            OpCode::Sattr | OpCode::Xattr | OpCode::Close => {
                if let Some(lifetime) = open.get_mut(&fid) {
                    lifetime.push(pos);
                }
            }
            _ => {}
        }
    }

    let mut kept = Vec::with_capacity(records.len());
    let mut dropped = BTreeSet::new();
    for (pos, rec) in records.iter().enumerate() {
        if drop_at[pos] {
            dropped.insert(rec.index);
        } else {
            kept.push(rec.clone());
        }
    }
    PipelineResult { kept, dropped }
}

/// Stable bucket sort by parent FID, buckets ordered by first occurrence.
///
/// Records sharing a parent keep their relative order. Renames and hard
/// links act as barriers (nothing crosses them), as does any create or
/// remove of a FID that serves as a parent elsewhere in the window; this
/// keeps per-target causality and parent/child ordering intact.
pub fn reorder_by_parent(records: Vec<ChangelogRecord>) -> Vec<ChangelogRecord> {
    let shared_dirs = parent_refs(&records);

    let mut out = Vec::with_capacity(records.len());
    let mut bucket_order: Vec<Fid> = Vec::new();
    let mut buckets: HashMap<Fid, Vec<ChangelogRecord>> = HashMap::new();

    fn flush(
        out: &mut Vec<ChangelogRecord>,
        bucket_order: &mut Vec<Fid>,
        buckets: &mut HashMap<Fid, Vec<ChangelogRecord>>,
    ) {
        for parent in bucket_order.drain(..) {
            if let Some(bucket) = buckets.remove(&parent) {
                out.extend(bucket);
            }
        }
    }

    for rec in records {
        let barrier = matches!(rec.opcode, OpCode::Rename | OpCode::Hlink)
            || ((rec.opcode.creates_target() || rec.opcode.removes_target())
                && shared_dirs.contains(&rec.target));
        if barrier {
            flush(&mut out, &mut bucket_order, &mut buckets);
            out.push(rec);
        } else {
            let parent = rec.parent;
            buckets
                .entry(parent)
                .or_insert_with(|| {
                    bucket_order.push(parent);
                    Vec::new()
                })
                .push(rec);
        }
    }
    flush(&mut out, &mut bucket_order, &mut buckets);
    out
}

/// Applies the configured modules in order. Dropped sets union; the kept
/// list is the final module's output.
pub fn pipeline_apply(modules: &[PipelineModule], window: PipelineWindow) -> PipelineResult {
    let mdt_id = window.mdt_id;
    let mut kept = window.records;
    let mut dropped = BTreeSet::new();
    for module in modules {
        match module {
            PipelineModule::Compensation => {
                let result = compensation_filter(&PipelineWindow { mdt_id, records: kept });
                kept = result.kept;
                dropped.extend(result.dropped);
            }
            PipelineModule::Reorder => {
                kept = reorder_by_parent(kept);
            }
            PipelineModule::Identity => {}
        }
    }
    PipelineResult { kept, dropped }
}
