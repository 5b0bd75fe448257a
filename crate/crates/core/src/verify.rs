//! Reference models and state validation.

use std::collections::{BTreeSet, HashMap};
use std::fmt;

use crate::error::{Failure, TableError};
use crate::fixed::FixedTable;
use crate::ram::EMPTY;
use crate::resizable::ResizableTable;
use crate::stats::TableStats;
use crate::trace::Op;
use crate::warmup::WarmupTable;

/// Outcome of one named invariant check.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Check {
    pub name: &'static str,
    pub passed: bool,
    /// First counterexample, when the check failed.
    pub detail: Option<String>,
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct ValidationReport {
    pub checks: Vec<Check>,
}

impl ValidationReport {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn pass(&mut self, name: &'static str) {
        self.checks.push(Check { name, passed: true, detail: None });
    }

    pub fn fail(&mut self, name: &'static str, detail: impl Into<String>) {
        self.checks.push(Check { name, passed: false, detail: Some(detail.into()) });
    }

    /// Records `name` as passed when `first_violation` is `None`.
    pub fn record(&mut self, name: &'static str, first_violation: Option<String>) {
        match first_violation {
            None => self.pass(name),
            Some(d) => self.fail(name, d),
        }
    }

    pub fn is_ok(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn failures(&self) -> impl Iterator<Item = &Check> {
        self.checks.iter().filter(|c| !c.passed)
    }

    pub fn get(&self, name: &str) -> Option<&Check> {
        self.checks.iter().find(|c| c.name == name)
    }

    pub fn merge(&mut self, other: ValidationReport) {
        self.checks.extend(other.checks);
    }
}

impl fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for c in &self.checks {
            match &c.detail {
                None => writeln!(f, "{}: ok", c.name)?,
                Some(d) => writeln!(f, "{}: FAILED ({d})", c.name)?,
            }
        }
        Ok(())
    }
}

/// Keys of `slots` other than `empty`, sorted, and the first key seen twice.
pub fn sorted_keys(slots: &[u64], empty: u64) -> (Vec<u64>, Option<u64>) {
    let mut v: Vec<u64> = slots.iter().copied().filter(|&k| k != empty).collect();
    v.sort_unstable();
    let dup = v.windows(2).find(|w| w[0] == w[1]).map(|w| w[0]);
    (v, dup)
}

/// Explicit key set plus explicit word memory.
#[derive(Clone, Debug, Default)]
pub struct ReferenceSet {
    keys: BTreeSet<u64>,
    words: HashMap<usize, u64>,
}

impl ReferenceSet {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, key: u64) -> bool {
        self.keys.insert(key)
    }

    pub fn remove(&mut self, key: u64) -> bool {
        self.keys.remove(&key)
    }

    pub fn contains(&self, key: u64) -> bool {
        self.keys.contains(&key)
    }

    pub fn len(&self) -> usize {
        self.keys.len()
    }

    pub fn is_empty(&self) -> bool {
        self.keys.is_empty()
    }

    pub fn keys(&self) -> impl Iterator<Item = u64> + '_ {
        self.keys.iter().copied()
    }

    /// The `i`-th smallest key.
    pub fn nth(&self, i: usize) -> Option<u64> {
        self.keys.iter().nth(i).copied()
    }

    pub fn write_word(&mut self, i: usize, v: u64) {
        if v == 0 {
            self.words.remove(&i);
        } else {
            self.words.insert(i, v);
        }
    }

    /// Unwritten words read as zero.
    pub fn read_word(&self, i: usize) -> u64 {
        self.words.get(&i).copied().unwrap_or(0)
    }
}

/// Operations common to every table variant.
pub trait Dictionary {
    /// Slot holding `x`, with the number of slot probes made.
    fn query(&self, x: u64) -> (Option<usize>, u32);
    fn insert(&mut self, x: u64) -> Result<(), TableError>;
    fn delete(&mut self, x: u64) -> Result<(), TableError>;
    fn len(&self) -> usize;
    fn is_empty(&self) -> bool {
        self.len() == 0
    }
    fn slots(&self) -> &[u64];
    /// Inclusive range of supported key counts. Inserts are refused at the
    /// top and deletes at the bottom.
    fn band(&self) -> (usize, usize);
    fn validate(&self) -> ValidationReport;
    fn stats(&self) -> &TableStats;
}

macro_rules! dictionary {
    ($t:ty, $band:expr) => {
        impl Dictionary for $t {
            fn query(&self, x: u64) -> (Option<usize>, u32) {
                <$t>::query(self, x)
            }
            fn insert(&mut self, x: u64) -> Result<(), TableError> {
                <$t>::insert(self, x)
            }
            fn delete(&mut self, x: u64) -> Result<(), TableError> {
                <$t>::delete(self, x)
            }
            fn len(&self) -> usize {
                <$t>::len(self)
            }
            fn slots(&self) -> &[u64] {
                <$t>::slots(self)
            }
            fn band(&self) -> (usize, usize) {
                let f: fn(&$t) -> (usize, usize) = $band;
                f(self)
            }
            fn validate(&self) -> ValidationReport {
                <$t>::validate(self)
            }
            fn stats(&self) -> &TableStats {
                <$t>::stats(self)
            }
        }
    };
}

dictionary!(WarmupTable, |t| t.config().band());
dictionary!(FixedTable, |t| (t.capacity() - 1, t.capacity()));
dictionary!(ResizableTable, |_| (0, usize::MAX));

/// Result the reference predicts for `op` on a table whose band is `band`.
pub fn expected_outcome(reference: &ReferenceSet, band: (usize, usize), op: Op) -> Result<bool, TableError> {
    match op {
        Op::Query(k) => Ok(reference.contains(k)),
        Op::Insert(k) if reference.contains(k) => Err(TableError::AlreadyPresent(k)),
        Op::Delete(k) if !reference.contains(k) => Err(TableError::NotPresent(k)),
        Op::Insert(_) if reference.len() >= band.1 => Err(TableError::OutOfBand),
        Op::Delete(_) if reference.len() <= band.0 => Err(TableError::OutOfBand),
        Op::Insert(_) | Op::Delete(_) => Ok(true),
    }
}

/// Applies `op` to the reference when the table is expected to accept it.
pub fn apply_expected(reference: &mut ReferenceSet, band: (usize, usize), op: Op) -> Result<bool, TableError> {
    let out = expected_outcome(reference, band, op);
    if out.is_ok() {
        match op {
            Op::Insert(k) => {
                reference.insert(k);
            }
            Op::Delete(k) => {
                reference.remove(k);
            }
            Op::Query(_) => {}
        }
    }
    out
}

/// First place where a table and the reference disagree.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Divergence {
    pub index: usize,
    pub op: Op,
    pub expected: String,
    pub got: String,
    /// The table's error, when the operation itself went wrong.
    pub error: Option<TableError>,
}

impl fmt::Display for Divergence {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "op {} ({}): expected {}, got {}", self.index, self.op, self.expected, self.got)
    }
}

/// Runs `op` on `table` and compares the outcome, the membership of its
/// key afterwards and the key count with the reference, which is updated.
pub fn diff_step<T: Dictionary + ?Sized>(
    table: &mut T,
    reference: &mut ReferenceSet,
    index: usize,
    op: Op,
) -> Result<u32, Divergence> {
    let band = table.band();
    let expected = apply_expected(reference, band, op);
    let diverge = |e: String, g: String| Divergence { index, op, expected: e, got: g, error: None };
    let got = match op {
        Op::Query(_) => Ok(true),
        Op::Insert(k) => table.insert(k).map(|_| true),
        Op::Delete(k) => table.delete(k).map(|_| true),
    };
    match (&expected, &got) {
        (Ok(_), Ok(_)) => {}
        (Err(e), Err(g)) if e == g => {}
        _ => {
            return Err(Divergence { error: got.clone().err(), ..diverge(format!("{expected:?}"), format!("{got:?}")) });
        }
    }
    let k = op.key();
    let (at, probes) = table.query(k);
    let present = reference.contains(k);
    match at {
        Some(s) if table.slots().get(s) != Some(&k) => {
            return Err(diverge(format!("slot holding {k}"), format!("slot {s} holding {:?}", table.slots().get(s))));
        }
        _ if at.is_some() != present => {
            return Err(diverge(format!("present = {present}"), format!("present = {}", at.is_some())));
        }
        _ => {}
    }
    if table.len() != reference.len() {
        return Err(diverge(format!("{} keys", reference.len()), format!("{} keys", table.len())));
    }
    Ok(probes)
}

/// Replays `trace` through `table` and `reference`; `None` when they agree
/// throughout.
pub fn diff_run<T: Dictionary + ?Sized>(trace: &[Op], table: &mut T, reference: &mut ReferenceSet) -> Option<Divergence> {
    trace
        .iter()
        .enumerate()
        .find_map(|(i, &op)| diff_step(table, reference, i, op).err())
}

/// Largest key count [`brute_layout`] accepts.
pub const BRUTE_MAX_KEYS: usize = 1 << 12;

/// Slot array of a single-group binned table with contiguous bins, built
/// straight from the definition.
///
/// Bin `k` holds the keys with `h(key) == k` as a prefix, in input order.
/// Word `i` lives at index slot `(i / (B/2), i % (B/2))` of the first `m/2`
/// bins; a nonzero value `v` swaps that slot with the lowest-offset
/// self-loop of partner bin `m/2 + (v ^ r(i))`. Zero words stay uncoupled.
/// An infeasible word reports its partner bin.
pub fn brute_layout(
    keys: &[u64],
    bins: usize,
    bin_size: usize,
    h: impl Fn(u64) -> usize,
    r: impl Fn(usize) -> u32,
    words: &[u32],
) -> Result<Vec<u64>, Failure> {
    assert!(keys.len() <= BRUTE_MAX_KEYS, "brute_layout is for toy instances");
    let mut arr = vec![EMPTY; bins * bin_size];
    let mut fill = vec![0usize; bins];
    for &k in keys {
        let b = h(k);
        if fill[b] == bin_size {
            return Err(Failure::BinOverflow { bin: b });
        }
        arr[b * bin_size + fill[b]] = k;
        fill[b] += 1;
    }
    let half = bin_size / 2;
    for (i, &v) in words.iter().enumerate() {
        if v == 0 {
            continue;
        }
        let s = (i / half) * bin_size + i % half;
        let p = bins / 2 + (v ^ r(i)) as usize;
        let a = (p * bin_size..(p + 1) * bin_size)
            .find(|&a| arr[a] != EMPTY && h(arr[a]) == p)
            .ok_or(Failure::SelfLoopShortage { bin: p })?;
        arr.swap(s, a);
    }
    Ok(arr)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::resizable::ResizableConfig;

    #[test]
    fn empty_trace_has_no_divergence() {
        let mut t = ResizableTable::new(ResizableConfig::new(1)).unwrap();
        assert_eq!(diff_run(&[], &mut t, &mut ReferenceSet::new()), None);
    }

    #[test]
    fn single_key_round_trip_agrees() {
        let mut t = ResizableTable::new(ResizableConfig::new(2)).unwrap();
        let ops = [Op::Insert(9), Op::Query(9), Op::Delete(9), Op::Query(9), Op::Delete(9)];
        assert_eq!(diff_run(&ops, &mut t, &mut ReferenceSet::new()), None);
    }

    #[test]
    fn out_of_band_follows_the_band() {
        let r = ReferenceSet::new();
        assert_eq!(expected_outcome(&r, (0, 0), Op::Insert(1)), Err(TableError::OutOfBand));
        assert_eq!(expected_outcome(&r, (0, 5), Op::Insert(1)), Ok(true));
        assert_eq!(expected_outcome(&r, (0, 5), Op::Delete(1)), Err(TableError::NotPresent(1)));
    }

    #[test]
    fn brute_layout_without_words_is_the_logical_layout() {
        let keys = [5u64, 1, 6, 2, 9];
        let arr = brute_layout(&keys, 4, 4, |k| (k % 4) as usize, |_| 0, &[]).unwrap();
        assert_eq!(arr[4..8], [5, 1, 9, EMPTY]);
        assert_eq!(arr[8..12], [6, 2, EMPTY, EMPTY]);
        assert!(arr[..4].iter().chain(&arr[12..]).all(|&k| k == EMPTY));
    }

    #[test]
    fn brute_layout_reports_infeasible_words() {
        let keys = [0u64, 4];
        let err = brute_layout(&keys, 4, 4, |k| (k % 4) as usize, |_| 0, &[1]).unwrap_err();
        assert_eq!(err, Failure::SelfLoopShortage { bin: 3 });
    }
}
