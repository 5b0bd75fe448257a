//! Resizable table kept at load factor 1.
//!
//! With `n` keys the slots `[0, n)` are cut into power-of-two segments:
//!
//! * X = `[0, 2^x)`, keys indexed by a position retrieval;
//! * Y_i = `[2^i, 2^(i+1))` for `x <= i < L`, each a full fixed table;
//! * Z = `[2^L, n)`, a fixed table of capacity `2^L` grown as a prefix.
//!
//! Inserts append to Z. A delete outside Z swaps in a random key taken off
//! the end of Z. When Z fills it becomes Y_L; when a delete finds Z empty,
//! Y_(L-1) becomes Z. The small record describing the layout lives in the
//! advanced RAM of Y_(L-4), mirrored into its two neighbours. X is kept near
//! `delta * n` slots by migrations that do constant work per operation.
//! Below `floor` keys the table is a sorted array.

use std::collections::{BTreeSet, HashSet, VecDeque};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::advanced::{AdvancedParams, AdvancedStats};
use crate::error::{ConfigError, Failure, TableError};
use crate::fixed::{CoreParams, FixedCore, FixedGeometry, FixedLayout, Move, DEFAULT_BACKYARD_Z};
use crate::hashing::{SeedStream, UniverseReducer};
use crate::ram::{bits_for, fitting_key_bits, map_retrieval, DEFAULT_INDEPENDENCE, EMPTY};
use crate::retrieval::{Retrieval, RetrievalParams};
use crate::stats::TableStats;
use crate::store::{CellBatch, ScratchStore};
use crate::verify::{sorted_keys, ValidationReport};

/// Query probe bound: one X slot, three per fixed segment.
pub const RESIZABLE_C_PROBE: u32 = 40;
pub const DEFAULT_DELTA: f64 = 1.0 / 64.0;
pub const DEFAULT_FLOOR: usize = 1024;
/// Default largest bin size of a segment.
pub const MAX_BIN_TARGET: usize = 4096;
/// Core record: three 6-bit levels and a 2-bit phase.
const RECORD_BITS: u32 = 20;

/// Work allowed per operation for each background task.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct MigrationBudget {
    /// Keys staged into a new Y while X shrinks.
    pub x_moves: usize,
    /// Slots indexed by the next X retrieval.
    pub x_cursor: usize,
}

impl Default for MigrationBudget {
    fn default() -> Self {
        MigrationBudget { x_moves: 2, x_cursor: 2 }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ResizableConfig {
    pub delta: f64,
    /// Sorted-array mode below this many keys.
    pub floor: usize,
    pub backyard_z: f64,
    /// Largest bin size a segment aims for.
    pub bin_target: usize,
    /// X shrinks above `x_high * delta * n` and grows below `x_low * delta * n`.
    pub x_low: f64,
    pub x_high: f64,
    pub budget: MigrationBudget,
    pub adv: AdvancedParams,
    pub independence: usize,
    pub rebuild_cap: u32,
    pub seed: u64,
}

impl ResizableConfig {
    pub fn new(seed: u64) -> Self {
        ResizableConfig {
            delta: DEFAULT_DELTA,
            floor: DEFAULT_FLOOR,
            backyard_z: DEFAULT_BACKYARD_Z,
            bin_target: MAX_BIN_TARGET,
            x_low: 0.15,
            x_high: 0.85,
            budget: MigrationBudget::default(),
            adv: AdvancedParams::default(),
            independence: DEFAULT_INDEPENDENCE,
            rebuild_cap: 32,
            seed,
        }
    }

    fn check(&self) -> Result<(), ConfigError> {
        if !(self.delta > 0.0 && self.delta <= 1.0 / 64.0) {
            return Err(ConfigError::Invalid(format!("delta {} outside (0, 1/64]", self.delta)));
        }
        if self.bin_target < 16 {
            return Err(ConfigError::Invalid(format!("bin target {} below 16", self.bin_target)));
        }
        if self.floor < 64 {
            return Err(ConfigError::Invalid(format!("floor {} below 64", self.floor)));
        }
        if !(0.1..self.x_high).contains(&self.x_low) || self.x_high > 0.9 {
            return Err(ConfigError::Invalid("X thresholds must satisfy 0.1 <= low < high <= 0.9".into()));
        }
        if self.budget.x_moves == 0 || self.budget.x_cursor == 0 {
            return Err(ConfigError::Invalid("migration budgets must be positive".into()));
        }
        Ok(())
    }

    /// Segments reduce keys to the widest universe their cells allow; a
    /// small segment's `N^3` would collide often.
    fn core_params(&self) -> CoreParams {
        CoreParams {
            layout: FixedLayout::Interleaved,
            ram: true,
            adv: self.adv,
            independence: self.independence,
            key_bits: 60,
        }
    }

    /// Geometry of a segment of `2^level` slots.
    pub fn segment_geometry(&self, level: u32) -> FixedGeometry {
        let size = 1usize << level;
        FixedGeometry::plan(size, (size / 16).min(self.bin_target), self.backyard_z)
    }
}

/// Key to slot map for X.
#[derive(Clone, Debug)]
struct PosMap {
    reducer: UniverseReducer,
    retr: Retrieval,
    store: ScratchStore,
}

impl PosMap {
    fn new(capacity: usize, seed: u64) -> Result<Self, ConfigError> {
        let mut seeds = SeedStream::new(seed);
        let value_bits = bits_for(capacity.max(2));
        let capacity = capacity + (capacity / 8).max(16);
        let key_bits = fitting_key_bits(capacity, value_bits, 60);
        let reducer = UniverseReducer::new(key_bits, seeds.next_seed())?;
        let retr = Retrieval::new(
            RetrievalParams { capacity, key_bits, value_bits, seed: seeds.next_seed() },
            0,
        )?;
        let store = ScratchStore::new(retr.cell_count(), retr.cell_bits());
        Ok(PosMap { reducer, retr, store })
    }

    #[inline]
    fn get(&self, key: u64) -> usize {
        self.retr.query(&self.store, self.reducer.reduce(key)) as usize
    }

    fn insert<R: Rng>(&mut self, key: u64, pos: usize, rng: &mut R) -> Result<(), Failure> {
        let mut b = CellBatch::new();
        self.retr
            .insert(&self.store, &mut b, self.reducer.reduce(key), pos as u64, rng)
            .map_err(map_retrieval)?;
        self.store.commit(&b);
        Ok(())
    }

    fn update(&mut self, key: u64, pos: usize) -> Result<(), Failure> {
        let mut b = CellBatch::new();
        self.retr
            .update(&self.store, &mut b, self.reducer.reduce(key), pos as u64)
            .map_err(map_retrieval)?;
        self.store.commit(&b);
        Ok(())
    }

    fn remove(&mut self, key: u64) -> Result<(), Failure> {
        let mut b = CellBatch::new();
        self.retr
            .delete(&self.store, &mut b, self.reducer.reduce(key))
            .map_err(map_retrieval)?;
        self.store.commit(&b);
        Ok(())
    }

    fn len(&self) -> usize {
        self.retr.len(&self.store)
    }

    /// Mirrors a key move into a map that covers slots below `cursor`.
    fn mirror<R: Rng>(&mut self, cursor: usize, m: Move, rng: &mut R) -> Result<(), Failure> {
        let from = m.from.is_some_and(|f| f < cursor);
        match (from, m.to.filter(|&t| t < cursor)) {
            (true, Some(t)) => self.update(m.key, t),
            (true, None) => self.remove(m.key),
            (false, Some(t)) => self.insert(m.key, t, rng),
            (false, None) => Ok(()),
        }
    }
}

/// Background change of the X boundary.
#[derive(Clone, Debug)]
#[allow(clippy::large_enum_variant)]
enum XMigration {
    Idle,
    /// The upper half of X is restaged as a fixed table while the next map
    /// indexes the lower half.
    Shrink { stage: FixedCore, next: PosMap, cursor: usize },
    /// The next map indexes X together with the first Y.
    Grow { next: PosMap, cursor: usize },
}

impl XMigration {
    fn phase(&self) -> u32 {
        match self {
            XMigration::Idle => 0,
            XMigration::Shrink { .. } => 1,
            XMigration::Grow { .. } => 2,
        }
    }
}

/// Where a slot belongs.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Segment {
    X,
    /// Part of X already restaged by a shrink.
    Stage,
    Y(u32),
    Z,
}

/// Counters of structural events.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct ResizeStats {
    pub promotions: u64,
    pub demotions: u64,
    pub x_shrinks: u64,
    pub x_grows: u64,
    pub core_moves: u64,
    pub conversions: u64,
    pub collapses: u64,
    pub record_writes: u64,
    pub clears: u64,
}

#[derive(Clone, Debug)]
struct Segments {
    x_len: usize,
    x_map: PosMap,
    /// `ys[k]` is Y at level `log2(x_len) + k`.
    ys: VecDeque<FixedCore>,
    z: FixedCore,
    level: u32,
    core_level: u32,
    mig: XMigration,
    /// Layout record; also written into the RAM of the core segment and its neighbours.
    record: u64,
    /// Levels whose RAM may hold a record.
    dirty: BTreeSet<u32>,
    /// Empty Z left by the last demotion, reused by the next promotion.
    spare: Option<FixedCore>,
    /// `(n, level)` at every change of the core level.
    core_history: Vec<(usize, u32)>,
}

impl Segments {
    fn x_log(&self) -> u32 {
        self.x_len.trailing_zeros()
    }

    fn y(&self, level: u32) -> Option<&FixedCore> {
        self.ys.get(level.checked_sub(self.x_log())? as usize)
    }

    fn y_mut(&mut self, level: u32) -> Option<&mut FixedCore> {
        let k = level.checked_sub(self.x_log())? as usize;
        self.ys.get_mut(k)
    }

    fn segment_of(&self, s: usize) -> Segment {
        if s >= 1 << self.level {
            return Segment::Z;
        }
        if s >= self.x_len {
            return Segment::Y(usize::BITS - 1 - s.leading_zeros());
        }
        if let XMigration::Shrink { stage, .. } = &self.mig {
            let h = self.x_len / 2;
            if s >= h && s < h + stage.extent() {
                return Segment::Stage;
            }
        }
        Segment::X
    }

    fn encode_record(&self) -> u64 {
        self.core_level as u64 | (self.x_log() as u64) << 6 | (self.level as u64) << 12 | (self.mig.phase() as u64) << 18
    }

    fn locate(&self, arr: &[u64], x: u64) -> (Option<usize>, u32) {
        let p = self.x_map.get(x);
        let mut probes = 1;
        if p < self.x_len && arr[p] == x {
            return (Some(p), probes);
        }
        if let XMigration::Shrink { stage, .. } = &self.mig {
            let (s, pr) = stage.query(arr, x);
            probes += pr;
            if s.is_some() {
                return (s, probes);
            }
        }
        for y in &self.ys {
            let (s, pr) = y.query(arr, x);
            probes += pr;
            if s.is_some() {
                return (s, probes);
            }
        }
        let (s, pr) = self.z.query(arr, x);
        (s, probes + pr)
    }
}

#[derive(Clone, Debug)]
enum Mode {
    /// Keys kept sorted in the slot array.
    Small,
    Segmented(Box<Segments>),
}

/// Dynamic set whose `n` keys occupy exactly slots `[0, n)`.
#[derive(Clone, Debug)]
pub struct ResizableTable {
    cfg: ResizableConfig,
    arr: Vec<u64>,
    mode: Mode,
    rng: ChaCha8Rng,
    seeds: SeedStream,
    stats: TableStats,
    resize: ResizeStats,
    /// Keys held outside the array while an operation runs.
    pending: Vec<u64>,
}

/// Mutable state an operation on the segments needs besides the segments.
struct Ctx<'a> {
    arr: &'a mut Vec<u64>,
    rng: &'a mut ChaCha8Rng,
    seeds: &'a mut SeedStream,
    cfg: &'a ResizableConfig,
    resize: &'a mut ResizeStats,
    /// Keys held outside the array while an operation runs.
    pending: &'a mut Vec<u64>,
}

fn floor_log2(n: usize) -> u32 {
    usize::BITS - 1 - n.leading_zeros()
}

fn new_core(cfg: &ResizableConfig, level: u32, seed: u64) -> Result<FixedCore, Failure> {
    let size = 1usize << level;
    FixedCore::new(cfg.segment_geometry(level), size, &cfg.core_params(), seed)
        .map_err(|_| Failure::Structure("segment parameters"))
}

fn new_map(capacity: usize, seed: u64) -> Result<PosMap, Failure> {
    PosMap::new(capacity, seed).map_err(|_| Failure::Structure("X retrieval parameters"))
}

/// Words the record takes in a segment's RAM; 0 when it does not fit.
fn record_digits(core: &FixedCore) -> usize {
    let d = core.ram().map_or(0, |r| RECORD_BITS.div_ceil(r.digit_bits()) as usize);
    if d > core.user_words() {
        0
    } else {
        d
    }
}

/// Reads the record stored in a segment's RAM.
fn read_record(core: &FixedCore, arr: &[u64]) -> Result<u64, Failure> {
    let Some(ram) = core.ram() else {
        return Err(Failure::Structure("no advanced RAM"));
    };
    let bits = ram.digit_bits();
    let mut v = 0u64;
    for i in 0..record_digits(core) {
        v |= (core.read_adv(arr, i)? as u64) << (i as u32 * bits);
    }
    Ok(v)
}

impl Segments {
    /// Lays `keys` out over `arr` with a fresh layout.
    fn layout(keys: &[u64], c: &mut Ctx<'_>) -> Result<Segments, Failure> {
        let n = keys.len();
        let level = floor_log2(n);
        let want = (0.5 * c.cfg.delta * n as f64).max(1.0);
        let x_len = 1usize << floor_log2(want as usize);
        let x_log = x_len.trailing_zeros();
        if x_log + 1 >= level {
            return Err(Failure::Structure("too few keys for segments"));
        }
        c.arr.clear();
        c.arr.resize(n, EMPTY);
        let mut x_map = new_map(x_len, c.seeds.next_seed())?;
        for (p, &k) in keys[..x_len].iter().enumerate() {
            c.arr[p] = k;
            x_map.insert(k, p, c.rng)?;
        }
        let mut ys = VecDeque::new();
        for lvl in x_log..level {
            let size = 1usize << lvl;
            let mut y = new_core(c.cfg, lvl, c.seeds.next_seed())?;
            y.build(c.arr, &keys[size..2 * size], size, &[], c.rng)?;
            ys.push_back(y);
        }
        let top = 1usize << level;
        let mut z = new_core(c.cfg, level, c.seeds.next_seed())?;
        z.build(c.arr, &keys[top..], n - top, &[], c.rng)?;
        let mut s = Segments {
            x_len,
            x_map,
            ys,
            z,
            level,
            core_level: 0,
            mig: XMigration::Idle,
            record: u64::MAX,
            dirty: BTreeSet::new(),
            spare: None,
            core_history: Vec::new(),
        };
        s.sync_record(c)?;
        Ok(s)
    }

    fn preferred_core(&self) -> u32 {
        self.level.saturating_sub(4).max(self.x_log() + 1)
    }

    fn window(&self) -> [u32; 3] {
        [self.core_level.saturating_sub(1), self.core_level, self.core_level + 1]
    }

    /// Re-decides the core level, rewrites the record where it changed and
    /// clears segments that left the window.
    fn sync_record(&mut self, c: &mut Ctx<'_>) -> Result<(), Failure> {
        let core = self.preferred_core();
        if core != self.core_level {
            self.core_level = core;
            c.resize.core_moves += 1;
            self.core_history.push((c.arr.len(), core));
        }
        let rec = self.encode_record();
        let window = self.window();
        for lvl in window {
            let Some(y) = self.y_mut(lvl) else { continue };
            let Some(bits) = y.ram().map(|r| r.digit_bits()) else { continue };
            let mask = (1u64 << bits) - 1;
            for i in 0..record_digits(y) {
                let d = ((rec >> (i as u32 * bits)) & mask) as u32;
                if y.read_adv(c.arr, i)? != d {
                    y.write_adv(c.arr, i, d, None, c.rng)?;
                }
            }
            self.dirty.insert(lvl);
        }
        let stale: Vec<u32> = self.dirty.iter().copied().filter(|l| !window.contains(l)).collect();
        for lvl in stale {
            if let Some(y) = self.y_mut(lvl) {
                let d = record_digits(y);
                y.clear_words(c.arr, d, c.rng)?;
                c.resize.clears += 1;
            }
            self.dirty.remove(&lvl);
        }
        if rec != self.record {
            c.resize.record_writes += 1;
        }
        self.record = rec;
        Ok(())
    }

    fn insert(&mut self, x: u64, c: &mut Ctx<'_>) -> Result<(), Failure> {
        c.pending.push(x);
        c.arr.push(EMPTY);
        self.z.append(c.arr, x, c.rng)?;
        if self.z.extent() == self.z.geometry().slots {
            self.promote(c)?;
        }
        Ok(())
    }

    /// Z is full: it becomes the last Y and a fresh Z starts behind it.
    fn promote(&mut self, c: &mut Ctx<'_>) -> Result<(), Failure> {
        let level = self.level + 1;
        let fresh = match self.spare.take() {
            Some(z) if z.base() == 1 << level => z,
            _ => new_core(c.cfg, level, c.seeds.next_seed())?,
        };
        let full = std::mem::replace(&mut self.z, fresh);
        self.ys.push_back(full);
        self.level = level;
        c.resize.promotions += 1;
        self.sync_record(c)
    }

    /// Z is empty: the last Y becomes Z.
    fn demote(&mut self, c: &mut Ctx<'_>) -> Result<(), Failure> {
        if self.ys.len() < 2 {
            return Err(Failure::Structure("no Y left to demote"));
        }
        if self.dirty.contains(&(self.level - 1)) {
            return Err(Failure::Structure("demoted segment still holds a record"));
        }
        let y = self.ys.pop_back().expect("checked above");
        if cfg!(debug_assertions) && !y.all_at_home(c.arr) {
            return Err(Failure::Structure("demoted segment holds a coupled pair"));
        }
        self.spare = Some(std::mem::replace(&mut self.z, y));
        self.level -= 1;
        c.resize.demotions += 1;
        self.sync_record(c)
    }

    /// Takes a random key off the end of Z.
    fn take_from_z(&mut self, c: &mut Ctx<'_>) -> Result<u64, Failure> {
        let lo = 1usize << self.level;
        let t = c.rng.random_range(lo..c.arr.len());
        let k = c.arr[t];
        c.pending.push(k);
        self.z.remove(c.arr, k, t, c.rng)?;
        c.arr.pop();
        Ok(k)
    }

    fn mirror_moves(&mut self, moves: Vec<Move>, c: &mut Ctx<'_>) -> Result<(), Failure> {
        match &mut self.mig {
            XMigration::Grow { next, cursor } | XMigration::Shrink { next, cursor, .. } => {
                for m in moves {
                    next.mirror(*cursor, m, c.rng)?;
                }
                Ok(())
            }
            XMigration::Idle => Ok(()),
        }
    }

    fn delete(&mut self, x: u64, at: usize, c: &mut Ctx<'_>) -> Result<(), Failure> {
        if self.z.extent() == 0 {
            self.demote(c)?;
        }
        let seg = self.segment_of(at);
        if seg == Segment::Z {
            self.z.remove(c.arr, x, at, c.rng)?;
            c.arr.pop();
            return Ok(());
        }
        let zk = self.take_from_z(c)?;
        match seg {
            Segment::Y(lvl) => {
                let absorbing = matches!(self.mig, XMigration::Grow { .. }) && lvl == self.x_log();
                let y = self.y_mut(lvl).ok_or(Failure::Structure("slot outside every Y"))?;
                y.remove(c.arr, x, at, c.rng)?;
                y.append(c.arr, zk, c.rng)?;
                if absorbing {
                    let moves = y.take_moves();
                    self.mirror_moves(moves, c)?;
                }
            }
            Segment::Stage => {
                let XMigration::Shrink { stage, .. } = &mut self.mig else { unreachable!() };
                stage.remove(c.arr, x, at, c.rng)?;
                stage.append(c.arr, zk, c.rng)?;
            }
            Segment::X => {
                c.arr[at] = zk;
                self.x_map.remove(x)?;
                self.x_map.insert(zk, at, c.rng)?;
                let moves = vec![
                    Move { key: x, from: Some(at), to: None },
                    Move { key: zk, from: None, to: Some(at) },
                ];
                self.mirror_moves(moves, c)?;
            }
            Segment::Z => unreachable!(),
        }
        Ok(())
    }

    /// One step of background work on the X boundary.
    fn migrate(&mut self, c: &mut Ctx<'_>) -> Result<(), Failure> {
        let target = c.cfg.delta * c.arr.len() as f64;
        let b = c.cfg.budget;
        match &mut self.mig {
            XMigration::Idle => {
                if self.x_len >= 2 && self.x_len as f64 > c.cfg.x_high * target {
                    let h = self.x_len / 2;
                    let lvl = h.trailing_zeros();
                    let stage = new_core(c.cfg, lvl, c.seeds.next_seed())?;
                    let next = new_map(h, c.seeds.next_seed())?;
                    self.mig = XMigration::Shrink { stage, next, cursor: 0 };
                    self.sync_record(c)?;
                } else if (self.x_len as f64) < c.cfg.x_low * target && self.ys.len() > 1 {
                    let next = new_map(2 * self.x_len, c.seeds.next_seed())?;
                    self.ys[0].track_moves(true);
                    self.mig = XMigration::Grow { next, cursor: 0 };
                    self.sync_record(c)?;
                }
            }
            XMigration::Shrink { stage, next, cursor } => {
                let h = self.x_len / 2;
                for _ in 0..b.x_moves {
                    let q = stage.extent();
                    if q == h {
                        break;
                    }
                    let k = c.arr[h + q];
                    c.pending.push(k);
                    self.x_map.remove(k)?;
                    stage.append(c.arr, k, c.rng)?;
                }
                for _ in 0..b.x_cursor {
                    if *cursor == h {
                        break;
                    }
                    next.insert(c.arr[*cursor], *cursor, c.rng)?;
                    *cursor += 1;
                }
                if stage.extent() == h && *cursor == h {
                    let XMigration::Shrink { stage, next, .. } = std::mem::replace(&mut self.mig, XMigration::Idle) else {
                        unreachable!()
                    };
                    self.x_map = next;
                    self.x_len = h;
                    self.ys.push_front(stage);
                    c.resize.x_shrinks += 1;
                    self.sync_record(c)?;
                }
            }
            XMigration::Grow { next, cursor } => {
                let end = 2 * self.x_len;
                for _ in 0..b.x_cursor {
                    if *cursor == end {
                        break;
                    }
                    next.insert(c.arr[*cursor], *cursor, c.rng)?;
                    *cursor += 1;
                }
                if *cursor == end {
                    let XMigration::Grow { next, .. } = std::mem::replace(&mut self.mig, XMigration::Idle) else {
                        unreachable!()
                    };
                    self.x_map = next;
                    self.x_len = end;
                    self.ys.pop_front();
                    c.resize.x_grows += 1;
                    self.sync_record(c)?;
                }
            }
        }
        Ok(())
    }
}

macro_rules! ctx {
    ($t:ident) => {
        Ctx {
            arr: &mut $t.arr,
            rng: &mut $t.rng,
            seeds: &mut $t.seeds,
            cfg: &$t.cfg,
            resize: &mut $t.resize,
            pending: &mut $t.pending,
        }
    };
}

/// Layout summary for reports.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct LayoutInfo {
    pub level: u32,
    pub x_len: usize,
    pub y_count: usize,
    pub z_extent: usize,
    pub core_level: u32,
    pub phase: u32,
}

impl ResizableTable {
    pub fn new(cfg: ResizableConfig) -> Result<Self, TableError> {
        Self::build(cfg, &[])
    }

    /// Builds a table holding `keys`, which must be distinct.
    pub fn build(cfg: ResizableConfig, keys: &[u64]) -> Result<Self, TableError> {
        cfg.check()?;
        let mut seen = HashSet::with_capacity(keys.len());
        for &k in keys {
            if k == EMPTY {
                return Err(ConfigError::Invalid("key u64::MAX is reserved".into()).into());
            }
            if !seen.insert(k) {
                return Err(TableError::AlreadyPresent(k));
            }
        }
        let mut seeds = SeedStream::new(cfg.seed);
        let rng = ChaCha8Rng::seed_from_u64(seeds.next_seed());
        let mut t = ResizableTable {
            cfg,
            arr: Vec::new(),
            mode: Mode::Small,
            rng,
            seeds,
            stats: TableStats::default(),
            resize: ResizeStats::default(),
            pending: Vec::new(),
        };
        t.settle(keys.to_vec(), None)?;
        Ok(t)
    }

    /// Lays `keys` out in the mode their count calls for. After a failure
    /// every attempt counts as a reconstruction.
    fn settle(&mut self, mut keys: Vec<u64>, failure: Option<Failure>) -> Result<(), TableError> {
        self.pending.clear();
        if keys.len() < self.cfg.floor {
            keys.sort_unstable();
            self.arr = keys;
            self.mode = Mode::Small;
            return Ok(());
        }
        self.mode = Mode::Small;
        let mut last = failure;
        if failure.is_some() {
            self.stats.rebuilds += 1;
        }
        for _ in 0..self.cfg.rebuild_cap {
            if last.is_some() {
                self.stats.rebuild_attempts += 1;
            }
            let mut c = ctx!(self);
            match Segments::layout(&keys, &mut c) {
                Ok(s) => {
                    self.mode = Mode::Segmented(Box::new(s));
                    return Ok(());
                }
                Err(f) => {
                    if last.is_none() {
                        self.stats.rebuilds += 1;
                    }
                    self.stats.record_failure(f);
                    last = Some(f);
                }
            }
        }
        Err(TableError::RebuildCapExceeded { cap: self.cfg.rebuild_cap, last: last.expect("at least one attempt") })
    }

    fn recover(&mut self, f: Failure, drop: Option<u64>) -> Result<(), TableError> {
        self.stats.record_failure(f);
        let mut seen = HashSet::with_capacity(self.arr.len() + self.pending.len());
        let keys: Vec<u64> = self
            .arr
            .iter()
            .chain(self.pending.iter())
            .copied()
            .filter(|&k| k != EMPTY && Some(k) != drop && seen.insert(k))
            .collect();
        self.settle(keys, Some(f))
    }

    fn finish(&mut self, res: Result<(), Failure>, drop: Option<u64>) -> Result<(), TableError> {
        match res {
            Ok(()) => {
                self.pending.clear();
                Ok(())
            }
            Err(f) => self.recover(f, drop),
        }
    }

    /// Slot holding `x`, with the number of slot probes made.
    pub fn query(&self, x: u64) -> (Option<usize>, u32) {
        if x == EMPTY {
            return (None, 0);
        }
        match &self.mode {
            Mode::Small => {
                let (mut lo, mut hi, mut probes) = (0usize, self.arr.len(), 0u32);
                while lo < hi {
                    let mid = (lo + hi) / 2;
                    probes += 1;
                    match self.arr[mid].cmp(&x) {
                        std::cmp::Ordering::Equal => return (Some(mid), probes),
                        std::cmp::Ordering::Less => lo = mid + 1,
                        std::cmp::Ordering::Greater => hi = mid,
                    }
                }
                (None, probes)
            }
            Mode::Segmented(s) => s.locate(&self.arr, x),
        }
    }

    pub fn contains(&self, x: u64) -> bool {
        self.query(x).0.is_some()
    }

    pub fn insert(&mut self, x: u64) -> Result<(), TableError> {
        if x == EMPTY {
            return Err(ConfigError::Invalid("key u64::MAX is reserved".into()).into());
        }
        if self.contains(x) {
            return Err(TableError::AlreadyPresent(x));
        }
        match &mut self.mode {
            Mode::Small => {
                let p = self.arr.partition_point(|&k| k < x);
                self.arr.insert(p, x);
                if self.arr.len() >= self.cfg.floor {
                    self.resize.conversions += 1;
                    let keys = std::mem::take(&mut self.arr);
                    self.settle(keys, None)?;
                }
                Ok(())
            }
            Mode::Segmented(s) => {
                let mut c = ctx!(self);
                let res = s.insert(x, &mut c).and_then(|_| s.migrate(&mut c));
                self.finish(res, None)
            }
        }
    }

    pub fn delete(&mut self, x: u64) -> Result<(), TableError> {
        let Some(at) = self.query(x).0 else {
            return Err(TableError::NotPresent(x));
        };
        match &mut self.mode {
            Mode::Small => {
                self.arr.remove(at);
                Ok(())
            }
            Mode::Segmented(s) => {
                let mut c = ctx!(self);
                let res = s.delete(x, at, &mut c).and_then(|_| s.migrate(&mut c));
                self.finish(res, Some(x))?;
                if matches!(self.mode, Mode::Segmented(_)) && self.arr.len() < self.cfg.floor / 2 {
                    self.resize.collapses += 1;
                    self.arr.sort_unstable();
                    self.mode = Mode::Small;
                }
                Ok(())
            }
        }
    }

    /// Forces a failure and the reconstruction that answers it.
    pub fn inject_failure(&mut self) -> Result<(), TableError> {
        self.recover(Failure::Structure("injected"), None)
    }

    /// Swaps two slots behind the table's back, for validator tests.
    pub fn corrupt_swap(&mut self, a: usize, b: usize) {
        self.arr.swap(a, b);
    }

    pub fn len(&self) -> usize {
        self.arr.len()
    }

    pub fn is_empty(&self) -> bool {
        self.arr.is_empty()
    }

    pub fn slots(&self) -> &[u64] {
        &self.arr
    }

    pub fn config(&self) -> &ResizableConfig {
        &self.cfg
    }

    pub fn stats(&self) -> &TableStats {
        &self.stats
    }

    pub fn resize_stats(&self) -> ResizeStats {
        self.resize
    }

    pub fn is_small(&self) -> bool {
        matches!(self.mode, Mode::Small)
    }

    /// `None` while the table is a sorted array.
    pub fn layout(&self) -> Option<LayoutInfo> {
        let Mode::Segmented(s) = &self.mode else {
            return None;
        };
        Some(LayoutInfo {
            level: s.level,
            x_len: s.x_len,
            y_count: s.ys.len(),
            z_extent: s.z.extent(),
            core_level: s.core_level,
            phase: s.mig.phase(),
        })
    }

    /// Smallest self-loop slack over the full Y segments.
    pub fn selfloop_slack(&self) -> Option<i64> {
        let Mode::Segmented(s) = &self.mode else {
            return None;
        };
        s.ys.iter().filter_map(|y| y.selfloop_slack()).min()
    }

    /// RAM counters summed over the live segments; `high_water` is the
    /// largest of them.
    pub fn adv_stats(&self) -> AdvancedStats {
        let mut t = AdvancedStats::default();
        let Mode::Segmented(s) = &self.mode else {
            return t;
        };
        for c in s.ys.iter().chain(std::iter::once(&s.z)) {
            let a = c.adv_stats();
            t.writes += a.writes;
            t.nontrivial_writes += a.nontrivial_writes;
            t.nontrivial_drains += a.nontrivial_drains;
            t.drains += a.drains;
            t.high_water = t.high_water.max(a.high_water);
            t.dense_giveups += a.dense_giveups;
            t.sparse_giveups += a.sparse_giveups;
            t.dense_samples += a.dense_samples;
            t.sparse_samples += a.sparse_samples;
        }
        t
    }

    /// `(n, level)` at every change of the core level since the last layout.
    pub fn core_history(&self) -> &[(usize, u32)] {
        match &self.mode {
            Mode::Segmented(s) => &s.core_history,
            Mode::Small => &[],
        }
    }

    pub fn segment_of(&self, slot: usize) -> Option<Segment> {
        match &self.mode {
            Mode::Segmented(s) if slot < self.arr.len() => Some(s.segment_of(slot)),
            _ => None,
        }
    }
}

// Validation.
impl ResizableTable {
    pub fn validate(&self) -> ValidationReport {
        let mut r = ValidationReport::new();
        let (keys, dup) = sorted_keys(&self.arr, EMPTY);
        r.record(
            "permutation",
            match dup {
                Some(k) => Some(format!("key {k} repeated")),
                None if keys.len() != self.arr.len() => Some(format!("{} empty slots", self.arr.len() - keys.len())),
                None => None,
            },
        );
        match &self.mode {
            Mode::Small => r.record(
                "sorted",
                self.arr.windows(2).position(|w| w[0] >= w[1]).map(|i| format!("slots {i} and {}", i + 1)),
            ),
            Mode::Segmented(s) => s.validate(&self.arr, &self.cfg, &mut r),
        }
        r
    }
}

impl Segments {
    fn cores(&self) -> Vec<(String, &FixedCore)> {
        let x_log = self.x_log();
        let mut v: Vec<(String, &FixedCore)> = self
            .ys
            .iter()
            .enumerate()
            .map(|(k, y)| (format!("Y_{}", x_log as usize + k), y))
            .collect();
        v.push(("Z".into(), &self.z));
        if let XMigration::Shrink { stage, .. } = &self.mig {
            v.push(("stage".into(), stage));
        }
        v
    }

    fn validate(&self, arr: &[u64], cfg: &ResizableConfig, r: &mut ValidationReport) {
        let n = arr.len();
        let top = 1usize << self.level;
        let x_log = self.x_log();
        let h = self.x_len / 2;
        let staged = match &self.mig {
            XMigration::Shrink { stage, .. } => h..h + stage.extent(),
            _ => 0..0,
        };

        let mut tiling = None;
        if !self.x_len.is_power_of_two() {
            tiling = Some(format!("|X| = {}", self.x_len));
        } else if !(top <= n && n < 2 * top) {
            tiling = Some(format!("n = {n} outside [2^{}, 2^{})", self.level, self.level + 1));
        } else if self.z.base() != top || self.z.geometry().slots != top || self.z.extent() != n - top {
            tiling = Some(format!("Z at {} with extent {} of {}", self.z.base(), self.z.extent(), self.z.geometry().slots));
        } else if x_log as usize + self.ys.len() != self.level as usize {
            tiling = Some(format!("{} Y segments between 2^{x_log} and 2^{}", self.ys.len(), self.level));
        } else if let Some((k, _)) = self.ys.iter().enumerate().find(|(k, y)| {
            let size = 1usize << (x_log as usize + k);
            y.base() != size || y.extent() != size || y.geometry().slots != size
        }) {
            tiling = Some(format!("Y_{} does not cover its range", x_log as usize + k));
        } else if let XMigration::Shrink { stage, .. } = &self.mig {
            if stage.base() != h || stage.geometry().slots != h {
                tiling = Some(format!("stage at {} of {} slots", stage.base(), stage.geometry().slots));
            }
        }
        r.record("tiling", tiling);

        let window = self.window();
        let mut segs = None;
        let mut clean = self
            .dirty
            .iter()
            .find(|l| !window.contains(l))
            .map(|l| format!("Y_{l} outside the window still marked"));
        for (k, (name, core)) in self.cores().into_iter().enumerate() {
            let (rep, coupled) = core.validate_counting(arr, true);
            if let Some(c) = rep.failures().next() {
                segs.get_or_insert_with(|| format!("{name}: {}: {}", c.name, c.detail.clone().unwrap_or_default()));
            }
            let may_hold = k < self.ys.len() && self.dirty.contains(&(x_log + k as u32));
            if coupled > 0 && !may_hold {
                clean.get_or_insert_with(|| format!("{name} holds {coupled} coupled keys"));
            }
        }
        r.record("segments", segs);

        let mut xbad = None;
        let mut count = 0usize;
        for p in (0..self.x_len).filter(|p| !staged.contains(p)) {
            count += 1;
            let got = self.x_map.get(arr[p]);
            if got != p && xbad.is_none() {
                xbad = Some(format!("key at {p} maps to {got}"));
            }
        }
        let entries = self.x_map.len();
        if xbad.is_none() && entries != count {
            xbad = Some(format!("{entries} entries for {count} X keys"));
        }
        r.record("x_positions", xbad);

        let mig = match &self.mig {
            XMigration::Idle => None,
            XMigration::Shrink { next, cursor, .. } => check_next(arr, next, *cursor, h),
            XMigration::Grow { next, cursor } => check_next(arr, next, *cursor, 2 * self.x_len),
        };
        r.record("migration", mig);

        let ratio = self.x_len as f64 / (cfg.delta * n as f64);
        r.record(
            "x_band",
            (self.x_len > 1 && !(0.1..=0.9).contains(&ratio)).then(|| format!("|X| = {} is {ratio:.3} of delta * n", self.x_len)),
        );

        let l = self.level;
        r.record(
            "core_window",
            (self.core_level + 5 < l || self.core_level + 3 > l)
                .then(|| format!("core level {} with L = {l}", self.core_level)),
        );

        let mut rec = None;
        if self.record != self.encode_record() {
            rec = Some(format!("record {:#x} but layout encodes {:#x}", self.record, self.encode_record()));
        }
        for lvl in self.window() {
            let Some(y) = self.y(lvl) else { continue };
            if rec.is_some() || record_digits(y) == 0 {
                continue;
            }
            match read_record(y, arr) {
                Ok(v) if v == self.record => {}
                Ok(v) => rec = Some(format!("Y_{lvl} holds {v:#x}")),
                Err(f) => rec = Some(format!("Y_{lvl}: {f}")),
            }
        }
        r.record("core_record", rec);

        r.record("clean_ram", clean);
    }
}

fn check_next(arr: &[u64], next: &PosMap, cursor: usize, end: usize) -> Option<String> {
    if cursor > end {
        return Some(format!("cursor {cursor} past {end}"));
    }
    if let Some(p) = (0..cursor).find(|&p| next.get(arr[p]) != p) {
        return Some(format!("next map sends the key at {p} to {}", next.get(arr[p])));
    }
    let entries = next.len();
    (entries != cursor).then(|| format!("next map has {entries} entries below cursor {cursor}"))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::seq::SliceRandom;

    fn keys(count: usize, seed: u64) -> Vec<u64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut seen = HashSet::new();
        let mut v = Vec::with_capacity(count);
        while v.len() < count {
            let k = rng.random::<u64>() >> 4;
            if seen.insert(k) {
                v.push(k);
            }
        }
        v
    }

    fn assert_valid(t: &ResizableTable) {
        let r = t.validate();
        assert!(r.is_ok(), "{r}");
    }

    #[test]
    fn small_mode_is_sorted() {
        let mut t = ResizableTable::new(ResizableConfig::new(1)).unwrap();
        let ks = keys(300, 2);
        for &k in &ks {
            t.insert(k).unwrap();
        }
        assert!(t.is_small());
        assert_valid(&t);
        for &k in &ks[..100] {
            t.delete(k).unwrap();
        }
        assert_eq!(t.len(), 200);
        assert!(ks[100..].iter().all(|&k| t.contains(k)));
        assert!(ks[..100].iter().all(|&k| !t.contains(k)));
        assert_eq!(t.insert(ks[150]), Err(TableError::AlreadyPresent(ks[150])));
        assert_eq!(t.delete(ks[0]), Err(TableError::NotPresent(ks[0])));
    }

    #[test]
    fn grows_and_shrinks_across_levels() {
        let mut t = ResizableTable::new(ResizableConfig::new(3)).unwrap();
        let ks = keys(1 << 14, 4);
        for (i, &k) in ks.iter().enumerate() {
            t.insert(k).unwrap();
            if i % 997 == 0 {
                assert_valid(&t);
            }
        }
        assert_valid(&t);
        let info = t.layout().unwrap();
        assert_eq!(info.level, 14);
        assert!(t.resize_stats().promotions >= 4);
        assert!(t.resize_stats().x_grows >= 1, "{:?}", t.resize_stats());
        let mut order = ks.clone();
        order.shuffle(&mut ChaCha8Rng::seed_from_u64(5));
        for (i, &k) in order.iter().enumerate() {
            t.delete(k).unwrap();
            if i % 997 == 0 {
                assert_valid(&t);
                let (hit, probes) = t.query(order[order.len() - 1]);
                assert!(hit.is_some() && probes <= RESIZABLE_C_PROBE);
            }
        }
        assert!(t.is_empty());
        let rs = t.resize_stats();
        assert!(rs.demotions >= 4 && rs.x_shrinks >= 1 && rs.collapses == 1, "{rs:?}");
        assert_eq!(t.stats().rebuilds, 0, "{:?}", t.stats().failures);
    }

    #[test]
    fn churn_keeps_every_invariant() {
        let ks = keys(6000, 6);
        let mut t = ResizableTable::build(ResizableConfig::new(7), &ks[..3000]).unwrap();
        let mut live: Vec<u64> = ks[..3000].to_vec();
        let mut spare: Vec<u64> = ks[3000..].to_vec();
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        for i in 0..20_000 {
            if rng.random_bool(0.5) && !spare.is_empty() {
                let k = spare.swap_remove(rng.random_range(0..spare.len()));
                t.insert(k).unwrap();
                live.push(k);
            } else if !live.is_empty() {
                let k = live.swap_remove(rng.random_range(0..live.len()));
                t.delete(k).unwrap();
                spare.push(k);
            }
            assert_eq!(t.len(), live.len());
            if i % 500 == 0 {
                assert_valid(&t);
                assert!(live.iter().all(|&k| t.contains(k)));
                assert!(spare.iter().all(|&k| !t.contains(k)));
            }
        }
        assert_valid(&t);
    }

    #[test]
    fn injected_failure_keeps_keys() {
        let ks = keys(5000, 9);
        let mut t = ResizableTable::build(ResizableConfig::new(10), &ks).unwrap();
        t.inject_failure().unwrap();
        assert_eq!(t.stats().rebuilds, 1);
        assert_valid(&t);
        assert!(ks.iter().all(|&k| t.contains(k)));
    }

    #[test]
    fn corrupted_swap_is_detected() {
        let ks = keys(5000, 11);
        let mut t = ResizableTable::build(ResizableConfig::new(12), &ks).unwrap();
        t.corrupt_swap(3, 4000);
        assert!(!t.validate().is_ok());
    }
}
