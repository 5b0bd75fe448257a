use std::collections::BTreeMap;

use crate::error::Failure;

/// Counters every table variant keeps about itself.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct TableStats {
    /// Failure events answered by a reconstruction.
    pub rebuilds: u64,
    /// Reconstruction attempts, including ones that failed again.
    pub rebuild_attempts: u64,
    pub failures: BTreeMap<&'static str, u64>,
    /// Self-loop samples drawn by word writes.
    pub samples: u64,
    /// Largest number of samples drawn within one operation.
    pub max_op_samples: u64,
}

impl TableStats {
    pub fn record_failure(&mut self, f: Failure) {
        *self.failures.entry(f.kind()).or_default() += 1;
    }

    pub fn failure_count(&self, kind: &str) -> u64 {
        self.failures.get(kind).copied().unwrap_or(0)
    }
}
