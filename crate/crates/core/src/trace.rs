//! Operation traces: seeded workload profiles and the text format
//! `I <key>`, `D <key>`, `Q <key>`, one record per line.

use std::collections::HashMap;
use std::fmt;
use std::io::{self, BufRead, Write};
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Op {
    Insert(u64),
    Delete(u64),
    Query(u64),
}

impl Op {
    pub fn key(self) -> u64 {
        match self {
            Op::Insert(k) | Op::Delete(k) | Op::Query(k) => k,
        }
    }
}

impl fmt::Display for Op {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Op::Insert(k) => write!(f, "I {k}"),
            Op::Delete(k) => write!(f, "D {k}"),
            Op::Query(k) => write!(f, "Q {k}"),
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum TraceError {
    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error(transparent)]
    Io(#[from] io::Error),
}

impl FromStr for Op {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let mut it = s.split_whitespace();
        let (Some(tag), Some(key), None) = (it.next(), it.next(), it.next()) else {
            return Err(format!("expected `<I|D|Q> <key>`, got {s:?}"));
        };
        let k: u64 = key.parse().map_err(|e| format!("bad key {key:?}: {e}"))?;
        match tag {
            "I" => Ok(Op::Insert(k)),
            "D" => Ok(Op::Delete(k)),
            "Q" => Ok(Op::Query(k)),
            _ => Err(format!("unknown record type {tag:?}")),
        }
    }
}

pub fn write_trace<W: Write>(mut w: W, ops: &[Op]) -> io::Result<()> {
    for op in ops {
        writeln!(w, "{op}")?;
    }
    w.flush()
}

/// Parses a trace; blank lines are skipped.
pub fn read_trace<R: BufRead>(r: R) -> Result<Vec<Op>, TraceError> {
    let mut out = Vec::new();
    for (i, line) in r.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(line.parse().map_err(|msg| TraceError::Parse { line: i + 1, msg })?);
    }
    Ok(out)
}

/// Distinct keys of the leading run of inserts.
pub fn initial_fill(ops: &[Op]) -> Vec<u64> {
    let mut seen = std::collections::HashSet::new();
    ops.iter()
        .map_while(|op| match op {
            Op::Insert(k) if seen.insert(*k) => Some(*k),
            _ => None,
        })
        .collect()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Profile {
    /// Inserts only.
    Fill,
    /// A fill of a quarter of the size, then deletes and inserts in turn.
    Churn,
    /// A small fill, then biased phases between `size/64` and `size/4` keys.
    GrowShrink,
    /// A fill, then 80% queries (half of them misses) and paired updates.
    QueryHeavy,
    /// A fill, then bursts of 64 inserts and 64 deletes that push past any
    /// narrow band of supported sizes.
    AdversarialBand,
}

impl Profile {
    pub const ALL: [Profile; 5] =
        [Profile::Fill, Profile::Churn, Profile::GrowShrink, Profile::QueryHeavy, Profile::AdversarialBand];

    pub fn name(self) -> &'static str {
        match self {
            Profile::Fill => "fill",
            Profile::Churn => "churn",
            Profile::GrowShrink => "grow-shrink",
            Profile::QueryHeavy => "query-heavy",
            Profile::AdversarialBand => "adversarial-band",
        }
    }
}

impl fmt::Display for Profile {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Profile {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Profile::ALL
            .into_iter()
            .find(|p| p.name() == s)
            .ok_or_else(|| format!("unknown profile {s:?}"))
    }
}

/// Trace generation settings.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GenParams {
    pub profile: Profile,
    /// Number of records.
    pub size: usize,
    pub seed: u64,
    /// Keys inserted before the profile's main phase; `None` picks the
    /// profile default.
    pub fill: Option<usize>,
    /// Fraction of records replaced by an insert of a present key or a
    /// delete of an absent one.
    pub raw_rate: f64,
}

impl GenParams {
    pub fn new(profile: Profile, size: usize, seed: u64) -> Self {
        GenParams { profile, size, seed, fill: None, raw_rate: 0.0 }
    }
}

struct Gen {
    rng: ChaCha8Rng,
    live: Vec<u64>,
    pos: HashMap<u64, usize>,
    out: Vec<Op>,
    raw_rate: f64,
}

impl Gen {
    fn fresh(&mut self) -> u64 {
        loop {
            let k = self.rng.random::<u64>() >> 2;
            if !self.pos.contains_key(&k) {
                return k;
            }
        }
    }

    fn insert(&mut self) {
        if self.raw_rate > 0.0 && !self.live.is_empty() && self.rng.random_bool(self.raw_rate) {
            let k = self.live[self.rng.random_range(0..self.live.len())];
            self.out.push(Op::Insert(k));
            return;
        }
        let k = self.fresh();
        self.pos.insert(k, self.live.len());
        self.live.push(k);
        self.out.push(Op::Insert(k));
    }

    fn delete(&mut self) {
        if self.live.is_empty() || (self.raw_rate > 0.0 && self.rng.random_bool(self.raw_rate)) {
            let k = self.fresh();
            self.out.push(Op::Delete(k));
            return;
        }
        let i = self.rng.random_range(0..self.live.len());
        let k = self.live.swap_remove(i);
        self.pos.remove(&k);
        if i < self.live.len() {
            self.pos.insert(self.live[i], i);
        }
        self.out.push(Op::Delete(k));
    }

    fn query(&mut self) {
        let k = if !self.live.is_empty() && self.rng.random_bool(0.5) {
            self.live[self.rng.random_range(0..self.live.len())]
        } else {
            self.fresh()
        };
        self.out.push(Op::Query(k));
    }
}

/// Generates the trace described by `p`; the same parameters always give
/// the same trace.
pub fn generate(p: &GenParams) -> Vec<Op> {
    let size = p.size;
    let mut g = Gen {
        rng: ChaCha8Rng::seed_from_u64(p.seed),
        live: Vec::new(),
        pos: HashMap::new(),
        out: Vec::with_capacity(size),
        raw_rate: 0.0,
    };
    let default_fill = match p.profile {
        Profile::Fill => size,
        Profile::GrowShrink => size / 64,
        _ => size / 4,
    };
    let fill = p.fill.unwrap_or(default_fill).min(size);
    for _ in 0..fill {
        g.insert();
    }
    g.raw_rate = p.raw_rate;
    let mut delete_next = true;
    let mut growing = true;
    let (low, high) = (fill.max(1), (size / 4).max(fill + 1));
    let mut burst = 0usize;
    while g.out.len() < size {
        match p.profile {
            Profile::Fill => g.insert(),
            Profile::Churn => {
                if delete_next {
                    g.delete()
                } else {
                    g.insert()
                }
                delete_next = !delete_next;
            }
            Profile::QueryHeavy => {
                if g.rng.random_bool(0.8) {
                    g.query();
                } else {
                    if delete_next {
                        g.delete()
                    } else {
                        g.insert()
                    }
                    delete_next = !delete_next;
                }
            }
            Profile::GrowShrink => {
                let n = g.live.len();
                if growing && n >= high {
                    growing = false;
                } else if !growing && n <= low {
                    growing = true;
                }
                let r: f64 = g.rng.random();
                if r < 0.1 {
                    g.query();
                } else if (r < 0.775) == growing {
                    g.insert();
                } else {
                    g.delete();
                }
            }
            Profile::AdversarialBand => {
                if g.rng.random_bool(0.1) {
                    g.query();
                } else {
                    if burst < 64 {
                        g.insert()
                    } else {
                        g.delete()
                    }
                    burst = (burst + 1) % 128;
                }
            }
        }
    }
    g.out
}
