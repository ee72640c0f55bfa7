//! Contiguous acknowledgment prefix tracking.
//!
//! Group members complete records out of order, but the upstream journal
//! clears a prefix. The tracker reconstructs the low-water mark: the
//! highest index such that everything at or below it is acknowledged.

use std::collections::BTreeSet;

/// Per (group, MDT) acknowledgment state: a contiguous acked prefix plus
/// a sparse set of acked indices above it.
///
/// Invariants: `prefix + 1` is never in `above` (it would have been
/// absorbed), and `above` holds nothing at or below `prefix`.
#[derive(Debug, Clone)]
pub struct AckTracker {
    prefix: u64,
    above: BTreeSet<u64>,
}

impl AckTracker {
    /// Starts a tracker considering everything at or below `prefix`
    /// already acknowledged.
    pub fn new(prefix: u64) -> AckTracker {
        AckTracker { prefix, above: BTreeSet::new() }
    }

    pub fn prefix(&self) -> u64 {
        self.prefix
    }

    /// True when `index` has been acknowledged (directly or via the
    /// starting prefix).
    pub fn contains(&self, index: u64) -> bool {
        index <= self.prefix || self.above.contains(&index)
    }

    /// Number of acked indices parked above the prefix.
    pub fn above_count(&self) -> usize {
        self.above.len()
    }

    /// Records an acknowledgment and absorbs the prefix as far as it now
    /// reaches. Idempotent. Returns the new prefix.
    pub fn add(&mut self, index: u64) -> u64 {
        if index > self.prefix {
            self.above.insert(index);
            while self.above.remove(&(self.prefix + 1)) {
                self.prefix += 1;
            }
        }
        self.prefix
    }
}
