//! Fixed-capacity table: a backyard of `T` overflow slots followed by a
//! frontyard of `m` full bins of `B` slots, holding `N` or `N-1` keys in
//! `N` slots.
//!
//! The frontyard is a two-group encoded RAM; group 0 is the dense basic RAM
//! and group 1 the sparse one of an [`AdvancedRam`]. Backyard keys are found
//! through a key-to-position retrieval structure and chained into one list
//! per hash bin, so a frontyard delete can pull a same-bin key back in.
//!
//! [`FixedCore`] works on a segment of a caller-owned array and also speaks
//! a prefix protocol (append at the end, remove by filling from the end),
//! which the resizable table uses for its segments.

use std::collections::HashSet;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::advanced::{read_basic, reencode_shadows, AdvancedParams, AdvancedRam, AdvancedStats, RamCtx, DENSE, SPARSE};
use crate::backyard::Backyard;
use crate::error::{ConfigError, Failure, TableError};
use crate::hashing::SeedStream;
use crate::ram::{bits_for, Frontyard, FrontyardParams, Shadow, SlotMap, DEFAULT_INDEPENDENCE, EMPTY};
use crate::stats::TableStats;
use crate::verify::{sorted_keys, ValidationReport};

/// Worst-case slot probes of one query: two frontyard hops, one backyard probe.
pub const FIXED_C_PROBE: u32 = 3;

/// Backyard slack in standard deviations of a bin's load.
pub const DEFAULT_BACKYARD_Z: f64 = 7.0;

/// Below these the table keeps everything in the backyard.
pub const MIN_BINS: usize = 16;
pub const MIN_BIN_SIZE: usize = 16;

/// How far ahead validation loops start loading retrieval cells.
const PREFETCH_AHEAD: usize = 16;

/// Sizes of one fixed table.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct FixedGeometry {
    /// Total slots `N`.
    pub slots: usize,
    /// Frontyard bins `m`; 0 when the table is backyard-only.
    pub bins: usize,
    pub bin_size: usize,
    /// Backyard slots `T = N - mB`.
    pub backyard: usize,
}

impl FixedGeometry {
    /// Picks `m` as the power of two nearest `N / bin_target` and leaves a
    /// backyard of at least `z * N / sqrt(bin_target)` slots.
    pub fn plan(slots: usize, bin_target: usize, z: f64) -> Self {
        let all_back = FixedGeometry { slots, bins: 0, bin_size: 0, backyard: slots };
        if slots == 0 || bin_target < 2 {
            return all_back;
        }
        let t0 = ((z * slots as f64 / (bin_target as f64).sqrt()).ceil() as usize).min(slots);
        let ratio = slots as f64 / bin_target as f64;
        if ratio < 1.0 {
            return all_back;
        }
        let m = 1usize << (ratio.log2().round() as u32);
        if m < MIN_BINS {
            return all_back;
        }
        let b = ((slots - t0) / m) & !1;
        if b < MIN_BIN_SIZE {
            return all_back;
        }
        FixedGeometry { slots, bins: m, bin_size: b, backyard: slots - m * b }
    }

    pub fn has_frontyard(&self) -> bool {
        self.bins > 0
    }

    pub fn frontyard_slots(&self) -> usize {
        self.bins * self.bin_size
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum FixedLayout {
    /// Backyard, then bin after bin.
    #[default]
    Contiguous,
    /// Backyard, then slot `T + t*m + b` for bin `b`, offset `t`.
    Interleaved,
}

/// Construction parameters shared by [`FixedCore`] users.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CoreParams {
    pub layout: FixedLayout,
    /// Whether the frontyard hosts an advanced RAM.
    pub ram: bool,
    pub adv: AdvancedParams,
    pub independence: usize,
    pub key_bits: u32,
}

impl Default for CoreParams {
    fn default() -> Self {
        CoreParams {
            layout: FixedLayout::Contiguous,
            ram: true,
            adv: AdvancedParams::default(),
            independence: DEFAULT_INDEPENDENCE,
            key_bits: 60,
        }
    }
}

/// A key changing slot inside a segment; `None` means entering or leaving.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Move {
    pub key: u64,
    pub from: Option<usize>,
    pub to: Option<usize>,
}

/// One fixed table over the segment `[base, base + N)` of a shared array.
#[derive(Clone, Debug)]
pub struct FixedCore {
    geo: FixedGeometry,
    base: usize,
    fy: Option<Frontyard>,
    by: Backyard,
    ram: Option<AdvancedRam>,
    free: Option<usize>,
    len: usize,
    extent: usize,
    shadows: Vec<Shadow>,
    moves: Option<Vec<Move>>,
}

impl FixedCore {
    pub fn new(geo: FixedGeometry, base: usize, p: &CoreParams, seed: u64) -> Result<Self, ConfigError> {
        let mut seeds = SeedStream::new(seed);
        let fy = if geo.has_frontyard() {
            let map = match p.layout {
                FixedLayout::Contiguous => SlotMap::Contiguous {
                    base: base + geo.backyard,
                    bins: geo.bins,
                    bin_size: geo.bin_size,
                },
                FixedLayout::Interleaved => SlotMap::Interleaved {
                    base,
                    backyard: geo.backyard,
                    bins: geo.bins,
                    bin_size: geo.bin_size,
                },
            };
            Some(Frontyard::new(FrontyardParams {
                map,
                groups: 2,
                independence: p.independence,
                key_bits: p.key_bits,
                seed: seeds.next_seed(),
            })?)
        } else {
            None
        };
        let by = Backyard::new(geo.backyard, geo.bins, p.key_bits, seeds.next_seed())?;
        let ram = match (&fy, p.ram) {
            (Some(f), true) => AdvancedRam::new(f, p.adv).ok(),
            _ => None,
        };
        Ok(FixedCore {
            geo,
            base,
            fy,
            by,
            ram,
            free: None,
            len: 0,
            extent: 0,
            shadows: Vec::new(),
            moves: None,
        })
    }

    pub fn geometry(&self) -> FixedGeometry {
        self.geo
    }

    /// First array slot of the segment.
    pub fn base(&self) -> usize {
        self.base
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    /// Slots currently in existence (`N` unless a prefix).
    pub fn extent(&self) -> usize {
        self.extent
    }

    pub fn frontyard(&self) -> Option<&Frontyard> {
        self.fy.as_ref()
    }

    pub fn backyard(&self) -> &Backyard {
        &self.by
    }

    pub fn ram(&self) -> Option<&AdvancedRam> {
        self.ram.as_ref()
    }

    pub fn adv_stats(&self) -> AdvancedStats {
        self.ram.as_ref().map(|r| r.stats).unwrap_or_default()
    }

    pub fn set_adv_stats(&mut self, s: AdvancedStats) {
        if let Some(r) = self.ram.as_mut() {
            r.stats = s;
        }
    }

    /// Advanced words offered to callers.
    pub fn user_words(&self) -> usize {
        self.ram.as_ref().map_or(0, |r| r.words())
    }

    /// Caller word values are in `[0, word_domain)`.
    pub fn word_domain(&self) -> u32 {
        self.ram.as_ref().map_or(0, |r| r.domain())
    }

    /// Keys stored in the segment, in slot order.
    pub fn keys<'a>(&self, arr: &'a [u64]) -> impl Iterator<Item = u64> + 'a {
        arr[self.base..self.base + self.extent].iter().copied().filter(|&k| k != EMPTY)
    }

    /// Starts or stops logging key moves made by the prefix protocol.
    /// Coupling swaps are not logged; callers track segments whose RAM is
    /// empty.
    pub fn track_moves(&mut self, on: bool) {
        self.moves = on.then(Vec::new);
    }

    pub fn take_moves(&mut self) -> Vec<Move> {
        self.moves.as_mut().map(std::mem::take).unwrap_or_default()
    }

    #[inline]
    fn note_move(&mut self, key: u64, from: Option<usize>, to: Option<usize>) {
        if let Some(m) = self.moves.as_mut() {
            m.push(Move { key, from, to });
        }
    }

    #[inline]
    fn bin_for(&self, key: u64) -> usize {
        self.fy.as_ref().map_or(0, |f| f.bin_of(key))
    }

    /// Lays out `keys` over the first `extent` slots of the segment. With
    /// `extent - 1` keys the last used backyard position stays free. `words`
    /// seeds the caller words and needs a full segment.
    pub fn build<R: Rng>(&mut self, arr: &mut [u64], keys: &[u64], extent: usize, words: &[u32], rng: &mut R) -> Result<(), Failure> {
        let geo = self.geo;
        if extent > geo.slots {
            return Err(Failure::Structure("extent beyond segment"));
        }
        let free = if keys.len() == extent {
            false
        } else if keys.len() + 1 == extent && extent.min(geo.backyard) > 0 {
            true
        } else {
            return Err(Failure::Structure("key count does not match the extent"));
        };
        let end = self.base + extent;
        arr[self.base..end].fill(EMPTY);
        let mut back = Vec::new();
        if let Some(fy) = self.fy.as_mut() {
            let mut room = vec![0usize; geo.bins];
            for (j, r) in room.iter_mut().enumerate() {
                *r = (0..geo.bin_size).take_while(|&o| fy.map.addr(j, o) < end).count();
            }
            let mut fill = vec![0usize; geo.bins];
            for &k in keys {
                let j = fy.bin_of(k);
                if fill[j] < room[j] {
                    arr[fy.map.addr(j, fill[j])] = k;
                    fy.offsets_insert(k, fill[j], rng)?;
                    fill[j] += 1;
                } else {
                    back.push(k);
                }
            }
            if let Some(j) = (0..geo.bins).find(|&j| fill[j] < room[j]) {
                return Err(Failure::BinUnderflow { bin: j });
            }
            fy.recount_selfloops(arr);
        } else {
            back.extend_from_slice(keys);
        }
        if back.len() + free as usize != geo.backyard.min(extent) {
            return Err(Failure::Structure("backyard count mismatch"));
        }
        for (p, &k) in back.iter().enumerate() {
            arr[self.base + p] = k;
            let bin = self.bin_for(k);
            self.by.insert(k, p, bin, rng)?;
        }
        self.len = keys.len();
        self.extent = extent;
        self.free = free.then_some(back.len());
        let Some(ram) = self.ram.as_ref() else {
            if !words.is_empty() {
                return Err(Failure::Structure("no advanced RAM for caller words"));
            }
            return Ok(());
        };
        if words.len() > self.user_words() {
            return Err(Failure::Structure("too many caller words"));
        }
        let budget = ram.params.reencode_budget;
        if words.iter().any(|&v| v != 0) && extent < geo.slots {
            return Err(Failure::Structure("caller words need a full segment"));
        }
        let fy = self.fy.as_mut().expect("RAM implies a frontyard");
        for (i, &v) in words.iter().enumerate() {
            if v != 0 && !fy.write_word(arr, DENSE, i, Some(v), budget, rng)?.done {
                return Err(Failure::SampleBudget);
            }
        }
        if extent == geo.slots && (fy.min_selfloops() as usize) < geo.bin_size / 4 {
            return Err(Failure::SelfLoopShortage { bin: 0 });
        }
        Ok(())
    }
}

// Word access.
impl FixedCore {
    fn adv_read(&self, arr: &[u64], i: usize) -> Result<u32, Failure> {
        let (Some(fy), Some(ram)) = (self.fy.as_ref(), self.ram.as_ref()) else {
            return Err(Failure::Structure("no advanced RAM"));
        };
        ram.read_at(fy, arr, &self.shadows, i)
    }

    fn adv_write<R: Rng>(&mut self, arr: &mut [u64], i: usize, v: u32, drain: Option<u32>, rng: &mut R) -> Result<(), Failure> {
        let (Some(fy), Some(ram)) = (self.fy.as_mut(), self.ram.as_mut()) else {
            return Err(Failure::Structure("no advanced RAM"));
        };
        let d = drain.unwrap_or(ram.params.drain_budget);
        let mut c = RamCtx { fy, arr, shadows: &mut self.shadows, rng };
        ram.write_with_drain(&mut c, i, v, d)
    }

    /// Caller word `i`.
    pub fn read_adv(&self, arr: &[u64], i: usize) -> Result<u32, Failure> {
        debug_assert!(i < self.user_words());
        self.adv_read(arr, i)
    }

    /// Writes caller word `i`; `drain` overrides the drain budget.
    pub fn write_adv<R: Rng>(&mut self, arr: &mut [u64], i: usize, v: u32, drain: Option<u32>, rng: &mut R) -> Result<(), Failure> {
        debug_assert!(i < self.user_words());
        self.adv_write(arr, i, v, drain, rng)
    }

    /// Recorded free backyard position.
    pub fn free_slot(&self) -> Option<usize> {
        self.free
    }

    fn decouple(&mut self, arr: &mut [u64], key: u64) -> Result<(), Failure> {
        if let Some(fy) = self.fy.as_mut() {
            if let Some(sh) = fy.decouple(arr, key)? {
                self.shadows.push(sh);
            }
        }
        Ok(())
    }

    fn reencode<R: Rng>(&mut self, arr: &mut [u64], rng: &mut R) -> Result<(), Failure> {
        if self.shadows.is_empty() {
            return Ok(());
        }
        let (Some(fy), Some(ram)) = (self.fy.as_mut(), self.ram.as_mut()) else {
            return Err(Failure::Structure("shadow without advanced RAM"));
        };
        let budget = ram.params.reencode_budget;
        reencode_shadows(&mut RamCtx { fy, arr, shadows: &mut self.shadows, rng }, budget)
    }

    /// Shadow copies left behind by a failed operation.
    pub fn pending_shadows(&self) -> &[Shadow] {
        &self.shadows
    }

    /// Drains the buffer queue completely.
    pub fn flush<R: Rng>(&mut self, arr: &mut [u64], rng: &mut R) -> Result<(), Failure> {
        let (Some(fy), Some(ram)) = (self.fy.as_mut(), self.ram.as_mut()) else {
            return Ok(());
        };
        ram.flush(&mut RamCtx { fy, arr, shadows: &mut self.shadows, rng })
    }

    /// Empties word `i` of basic group `g`.
    pub fn erase_basic(&mut self, arr: &mut [u64], g: usize, i: usize) -> Result<(), Failure> {
        let fy = self.fy.as_mut().ok_or(Failure::Structure("no frontyard"))?;
        self.shadows.retain(|s| !(s.group == g && s.word == i));
        fy.erase_word(arr, g, i)?;
        Ok(())
    }

    /// Flushes the queue, empties the first `count` caller words in both
    /// groups and zeroes the ring pointers.
    pub fn clear_words<R: Rng>(&mut self, arr: &mut [u64], count: usize, rng: &mut R) -> Result<(), Failure> {
        if self.ram.is_none() {
            return Ok(());
        }
        self.flush(arr, rng)?;
        let count = count.min(self.user_words());
        for g in [DENSE, SPARSE] {
            for i in 0..count {
                self.erase_basic(arr, g, i)?;
            }
        }
        let (Some(fy), Some(ram)) = (self.fy.as_mut(), self.ram.as_mut()) else {
            unreachable!()
        };
        ram.reset_pointers(&mut RamCtx { fy, arr, shadows: &mut self.shadows, rng })
    }

    /// Words per basic group, 0 without a RAM.
    pub fn basic_words(&self) -> usize {
        match (&self.fy, &self.ram) {
            (Some(f), Some(_)) => f.groups[DENSE].word_count(),
            _ => 0,
        }
    }

    /// Does every frontyard key of the prefix sit at its logical address?
    /// For a full segment this is the same as an empty RAM.
    /// Smallest partner-bin self-loop count minus `B/4`; `None` unless the
    /// core is full and carries a RAM.
    pub fn selfloop_slack(&self) -> Option<i64> {
        let fy = self.fy.as_ref()?;
        self.ram.as_ref()?;
        (self.extent == self.geo.slots).then(|| fy.min_selfloops() as i64 - (self.geo.bin_size / 4) as i64)
    }

    pub fn all_at_home(&self, arr: &[u64]) -> bool {
        let Some(fy) = self.fy.as_ref() else {
            return true;
        };
        let start = self.base + self.geo.backyard.min(self.extent);
        (start..self.base + self.extent).all(|s| arr[s] == EMPTY || fy.logical_address(arr[s]) == s)
    }

    /// Is every word of both basic groups empty?
    pub fn ram_is_empty(&self, arr: &[u64]) -> Result<bool, Failure> {
        let Some(fy) = self.fy.as_ref() else {
            return Ok(true);
        };
        if self.ram.is_none() {
            return Ok(true);
        }
        for g in 0..fy.groups.len() {
            for i in 0..fy.groups[g].word_count() {
                if read_basic(fy, arr, &self.shadows, g, i)?.is_some() {
                    return Ok(false);
                }
            }
        }
        Ok(true)
    }
}

// Key operations.
impl FixedCore {
    /// Slot holding `x`, with the number of slot probes made.
    pub fn query(&self, arr: &[u64], x: u64) -> (Option<usize>, u32) {
        let end = self.base + self.extent;
        let mut probes = 0;
        if let Some(fy) = self.fy.as_ref() {
            let (s, p) = fy.lookup(&arr[..end], x);
            probes += p;
            if s.is_some() {
                return (s, probes);
            }
        }
        let p = self.by.position(x);
        if p < self.geo.backyard.min(self.extent) {
            probes += 1;
            if arr[self.base + p] == x {
                return (Some(self.base + p), probes);
            }
        }
        (None, probes)
    }

    /// Places `x` in the recorded free backyard slot.
    pub fn insert_free<R: Rng>(&mut self, arr: &mut [u64], x: u64, rng: &mut R) -> Result<(), Failure> {
        let p = self.free.ok_or(Failure::Structure("no free slot recorded"))?;
        if p >= self.geo.backyard || arr[self.base + p] != EMPTY {
            return Err(Failure::Structure("recorded free slot is not free"));
        }
        arr[self.base + p] = x;
        let bin = self.bin_for(x);
        self.by.insert(x, p, bin, rng)?;
        self.len += 1;
        self.free = None;
        Ok(())
    }

    /// Deletes `x`, found at slot `at`, leaving one free backyard slot.
    pub fn delete_to_free<R: Rng>(&mut self, arr: &mut [u64], x: u64, at: usize, rng: &mut R) -> Result<(), Failure> {
        let rel = at - self.base;
        if rel < self.geo.backyard {
            let bin = self.bin_for(x);
            self.by.remove(x, rel, bin)?;
            arr[at] = EMPTY;
            self.len -= 1;
            self.free = Some(rel);
            return Ok(());
        }
        let pz = self.pull_into_place(arr, x, rng)?;
        arr[self.base + pz] = EMPTY;
        self.len -= 1;
        self.free = Some(pz);
        self.reencode(arr, rng)
    }

    /// Replaces frontyard key `x` by a backyard key of the same bin. Returns
    /// the backyard position that key came from, which still holds it.
    fn pull_into_place<R: Rng>(&mut self, arr: &mut [u64], x: u64, rng: &mut R) -> Result<usize, Failure> {
        let fy = self.fy.as_ref().ok_or(Failure::Structure("frontyard key without frontyard"))?;
        let k = fy.bin_of(x);
        let pz = self.by.head(k).ok_or(Failure::OverflowListEmpty { bin: k })?;
        self.decouple(arr, x)?;
        let fy = self.fy.as_mut().expect("checked above");
        let t = fy.offset_of(x);
        let lx = fy.map.addr(k, t);
        let z = arr[self.base + pz];
        arr[lx] = z;
        fy.offsets_delete(x)?;
        fy.offsets_insert(z, t, rng)?;
        self.by.remove(z, pz, k)?;
        self.note_move(z, Some(self.base + pz), Some(lx));
        Ok(pz)
    }

    /// Appends `x` in a new last slot; `arr` must already cover it.
    pub fn append<R: Rng>(&mut self, arr: &mut [u64], x: u64, rng: &mut R) -> Result<(), Failure> {
        let q = self.extent;
        if q >= self.geo.slots || self.len != self.extent {
            return Err(Failure::Structure("append to a full segment"));
        }
        if q < self.geo.backyard {
            arr[self.base + q] = x;
            let bin = self.bin_for(x);
            self.by.insert(x, q, bin, rng)?;
            self.note_move(x, None, Some(self.base + q));
        } else {
            let fy = self.fy.as_mut().ok_or(Failure::Structure("no frontyard"))?;
            let a = self.base + q;
            let (j, o) = fy.map.locate(a).ok_or(Failure::Structure("slot outside frontyard"))?;
            let pw = self.by.head(j).ok_or(Failure::OverflowListEmpty { bin: j })?;
            let w = arr[self.base + pw];
            arr[a] = w;
            self.by.remove(w, pw, j)?;
            fy.offsets_insert(w, o, rng)?;
            fy.note_selfloop(j, 1);
            arr[self.base + pw] = x;
            let bx = fy.bin_of(x);
            self.by.insert(x, pw, bx, rng)?;
            self.note_move(w, Some(self.base + pw), Some(a));
            self.note_move(x, None, Some(self.base + pw));
        }
        self.len += 1;
        self.extent += 1;
        Ok(())
    }

    /// Removes `x`, found at slot `at`, and shrinks the segment by its last
    /// slot, which is left empty.
    pub fn remove<R: Rng>(&mut self, arr: &mut [u64], x: u64, at: usize, rng: &mut R) -> Result<(), Failure> {
        if self.len != self.extent || self.extent == 0 {
            return Err(Failure::Structure("remove from a non-prefix segment"));
        }
        let last = self.base + self.extent - 1;
        let rel = at - self.base;
        self.note_move(x, Some(at), None);
        let hole = if rel < self.geo.backyard {
            let bin = self.bin_for(x);
            self.by.remove(x, rel, bin)?;
            rel
        } else {
            let fy = self.fy.as_ref().ok_or(Failure::Structure("no frontyard"))?;
            let k = fy.bin_of(x);
            if fy.logical_address(x) == last {
                self.decouple(arr, x)?;
                let fy = self.fy.as_mut().expect("checked above");
                fy.offsets_delete(x)?;
                fy.note_selfloop(k, -1);
                arr[last] = EMPTY;
                self.len -= 1;
                self.extent -= 1;
                return self.reencode(arr, rng);
            }
            self.pull_into_place(arr, x, rng)?
        };
        self.fill_from_end(arr, hole, rng)?;
        self.len -= 1;
        self.extent -= 1;
        self.reencode(arr, rng)
    }

    /// Moves the key of the last slot into backyard position `hole`.
    fn fill_from_end<R: Rng>(&mut self, arr: &mut [u64], hole: usize, rng: &mut R) -> Result<(), Failure> {
        let last_rel = self.extent - 1;
        let a = self.base + last_rel;
        if hole == last_rel {
            arr[a] = EMPTY;
            return Ok(());
        }
        if last_rel < self.geo.backyard {
            let w = arr[a];
            let bin = self.bin_for(w);
            arr[self.base + hole] = w;
            self.by.remove(w, last_rel, bin)?;
            self.by.insert(w, hole, bin, rng)?;
            arr[a] = EMPTY;
            self.note_move(w, Some(a), Some(self.base + hole));
            return Ok(());
        }
        let occ = arr[a];
        self.decouple(arr, occ)?;
        let fy = self.fy.as_mut().ok_or(Failure::Structure("no frontyard"))?;
        let (j, _) = fy.map.locate(a).ok_or(Failure::Structure("slot outside frontyard"))?;
        let w = arr[a];
        arr[self.base + hole] = w;
        fy.offsets_delete(w)?;
        fy.note_selfloop(j, -1);
        self.by.insert(w, hole, j, rng)?;
        arr[a] = EMPTY;
        self.note_move(w, Some(a), Some(self.base + hole));
        Ok(())
    }
}

// Validation.
impl FixedCore {
    pub fn validate(&self, arr: &[u64]) -> ValidationReport {
        self.validate_counting(arr, false).0
    }

    /// Validates and also counts frontyard keys away from their logical
    /// address.
    /// Validation that also returns the number of coupled keys. With
    /// `distinct` the caller has already checked that the keys are distinct,
    /// so they are only counted here.
    pub fn validate_counting(&self, arr: &[u64], distinct: bool) -> (ValidationReport, usize) {
        let mut r = ValidationReport::new();
        let geo = self.geo;
        let end = self.base + self.extent;
        let by_end = self.base + geo.backyard.min(self.extent);

        let (stored, mut bad) = if distinct {
            (arr[self.base..end].iter().filter(|&&k| k != EMPTY).count(), None)
        } else {
            let (keys, dup) = sorted_keys(&arr[self.base..end], EMPTY);
            (keys.len(), dup.map(|k| format!("key {k} repeated")))
        };
        if bad.is_none() && stored != self.len {
            bad = Some(format!("{stored} keys stored, count says {}", self.len));
        }
        if bad.is_none() && !(self.len == self.extent || self.len + 1 == self.extent) {
            bad = Some(format!("count {} in extent {}", self.len, self.extent));
        }
        r.record("permutation", bad);

        r.record(
            "free_slot",
            match self.free {
                None if self.len + 1 == self.extent => Some("free slot not recorded".into()),
                Some(p) if self.len == self.extent => Some(format!("stale record {p}")),
                Some(p) if p >= geo.backyard || arr[self.base + p] != EMPTY => {
                    Some(format!("recorded slot {p} is not a free backyard slot"))
                }
                _ => None,
            },
        );

        let back: Vec<(usize, u64)> = (self.base..by_end)
            .filter(|&s| arr[s] != EMPTY)
            .map(|s| (s - self.base, arr[s]))
            .collect();
        r.record(
            "backyard_positions",
            back.iter()
                .find(|&&(p, k)| self.by.position(k) != p)
                .map(|(p, k)| format!("key {k} at {p} maps to {}", self.by.position(*k))),
        );
        let entries = self.by.entries();
        r.record(
            "backyard_entries",
            (entries != back.len()).then(|| format!("{entries} entries for {} keys", back.len())),
        );

        let Some(fy) = self.fy.as_ref() else {
            return (r, 0);
        };
        let mut lists = None;
        let mut listed = 0usize;
        for j in 0..geo.bins {
            let l = self.by.list(j);
            listed += l.len();
            if lists.is_none() {
                if l.len() != self.by.list_len(j) as usize {
                    lists = Some(format!("bin {j}: list length {} vs counter {}", l.len(), self.by.list_len(j)));
                } else if let Some(&p) = l.iter().find(|&&p| {
                    self.base + p >= by_end || arr[self.base + p] == EMPTY || fy.bin_of(arr[self.base + p]) != j
                }) {
                    lists = Some(format!("bin {j}: position {p} does not hold a key of the bin"));
                }
            }
        }
        if lists.is_none() && listed != back.len() {
            lists = Some(format!("{listed} listed positions for {} backyard keys", back.len()));
        }
        r.record("overflow_lists", lists);

        let mut full = None;
        let mut inv = None;
        let mut front = 0usize;
        let mut coupled = 0usize;
        let mut loops: Vec<Vec<u32>> = fy.groups.iter().map(|g| vec![0; g.index_bins()]).collect();
        for s in by_end..end {
            if let Some(&y) = arr.get(s + PREFETCH_AHEAD).filter(|&&y| y != EMPTY && s + PREFETCH_AHEAD < end) {
                fy.prefetch_offset(y);
            }
            let x = arr[s];
            if x == EMPTY {
                if full.is_none() {
                    full = Some(format!("frontyard slot {s} is empty"));
                }
                continue;
            }
            front += 1;
            let hb = fy.bin_of(x);
            if fy.map.locate(s).is_some_and(|(b, _)| b == hb) {
                let g = fy.group_of(hb);
                if let Some(ord) = fy.groups[g].partner_ordinal(hb) {
                    loops[g][ord] += 1;
                }
            }
            let p = fy.map.addr(hb, fy.offset_of(x));
            if p == s {
                continue;
            }
            coupled += 1;
            if (p >= end || arr[p] == EMPTY || fy.find_partner(arr[p]) != s)
                && inv.is_none() {
                    inv = Some(format!("slot {s} (partner {p})"));
                }
        }
        r.record("frontyard_full", full);
        r.record("partner_involution", inv);
        let fe = fy.offsets_len();
        r.record(
            "frontyard_entries",
            (fe != front).then(|| format!("{fe} entries for {front} frontyard keys")),
        );
        r.record(
            "selfloop_counters",
            (loops != fy.maintained_selfloops())
                .then(|| "maintained self-loop counts differ from the array".to_string()),
        );

        if let Some(ram) = self.ram.as_ref() {
            if self.extent == geo.slots {
                r.record(
                    "selfloop_floor",
                    ((fy.min_selfloops() as usize) < geo.bin_size / 4)
                        .then(|| format!("minimum {} below B/4", fy.min_selfloops())),
                );
                r.record("queue", self.check_queue(arr, ram).err());
            }
        }
        (r, coupled)
    }

    fn check_queue(&self, arr: &[u64], ram: &AdvancedRam) -> Result<(), String> {
        let fy = self.fy.as_ref().expect("RAM implies a frontyard");
        let stored = ram.stored_pointers(fy, arr, &self.shadows).map_err(|f| f.to_string())?;
        if Ok(stored) != ram.pointers(fy, arr, &self.shadows) {
            return Err(format!("stored ring pointers {stored:?} differ from the working copy"));
        }
        let q = ram.queue_contents(fy, arr, &self.shadows).map_err(|f| f.to_string())?;
        if q.len() > ram.queue_limit() {
            return Err(format!("occupancy {} above limit {}", q.len(), ram.queue_limit()));
        }
        let mut queued: Vec<usize> = q.clone();
        queued.sort_unstable();
        queued.dedup();
        if queued.len() != q.len() {
            return Err("index queued twice".into());
        }
        let mut buffered = Vec::new();
        for i in 0..ram.words() {
            if read_basic(fy, arr, &self.shadows, crate::advanced::SPARSE, i).map_err(|f| f.to_string())?.is_some() {
                buffered.push(i);
            }
        }
        if buffered != queued {
            return Err(format!("{} buffered words, {} queued", buffered.len(), queued.len()));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct FixedConfig {
    /// Capacity `N`.
    pub slots: usize,
    /// Desired bin size.
    pub bin_target: usize,
    pub backyard_z: f64,
    /// Explicit sizes, overriding `bin_target` and `backyard_z`.
    pub geometry: Option<FixedGeometry>,
    pub layout: FixedLayout,
    pub ram: bool,
    pub adv: AdvancedParams,
    pub independence: usize,
    /// Reduced key universe is `N^key_exponent` (at most 60 bits).
    pub key_exponent: u32,
    /// Reconstruction attempts allowed per failure before giving up.
    pub rebuild_cap: u32,
    pub seed: u64,
}

impl FixedConfig {
    pub fn new(slots: usize, seed: u64) -> Self {
        FixedConfig {
            slots,
            bin_target: (slots / 16).clamp(2, 4096),
            backyard_z: DEFAULT_BACKYARD_Z,
            geometry: None,
            layout: FixedLayout::Contiguous,
            ram: true,
            adv: AdvancedParams::default(),
            independence: DEFAULT_INDEPENDENCE,
            key_exponent: 3,
            rebuild_cap: 32,
            seed,
        }
    }

    pub fn geometry(&self) -> FixedGeometry {
        self.geometry
            .unwrap_or_else(|| FixedGeometry::plan(self.slots, self.bin_target, self.backyard_z))
    }

    fn core_params(&self) -> CoreParams {
        CoreParams {
            layout: self.layout,
            ram: self.ram,
            adv: self.adv,
            independence: self.independence,
            key_bits: (bits_for(self.slots.max(2)) * self.key_exponent).clamp(8, 60),
        }
    }

    fn check(&self) -> Result<(), ConfigError> {
        let g = self.geometry();
        if g.slots != self.slots || g.bins * g.bin_size + g.backyard != g.slots {
            return Err(ConfigError::Invalid(format!("geometry {g:?} does not tile {} slots", self.slots)));
        }
        if g.bins > 0 && (!g.bins.is_power_of_two() || g.bins < 8 || g.bin_size < 4 || !g.bin_size.is_multiple_of(2)) {
            return Err(ConfigError::Invalid(format!("unsupported bins {} x {}", g.bins, g.bin_size)));
        }
        if g.backyard == 0 {
            return Err(ConfigError::Invalid("backyard must hold at least one slot".into()));
        }
        Ok(())
    }
}

/// Standalone fixed table owning its array.
#[derive(Clone, Debug)]
pub struct FixedTable {
    cfg: FixedConfig,
    arr: Vec<u64>,
    core: FixedCore,
    rng: ChaCha8Rng,
    seeds: SeedStream,
    stats: TableStats,
}

impl FixedTable {
    /// Builds a table holding `keys`: `N` or `N - 1` distinct keys.
    pub fn build(cfg: FixedConfig, keys: &[u64]) -> Result<Self, TableError> {
        Self::build_with(cfg, keys, &[])
    }

    /// Builds with initial caller words.
    pub fn build_with(cfg: FixedConfig, keys: &[u64], words: &[u32]) -> Result<Self, TableError> {
        cfg.check()?;
        if keys.len() + 1 < cfg.slots || keys.len() > cfg.slots {
            return Err(TableError::OutOfBand);
        }
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
        let geo = cfg.geometry();
        let core = FixedCore::new(geo, 0, &cfg.core_params(), seeds.next_seed())?;
        if words.len() > core.user_words() {
            return Err(ConfigError::Invalid(format!("{} caller words do not fit in {}", words.len(), core.user_words())).into());
        }
        if words.iter().any(|&v| v >= core.word_domain()) {
            return Err(ConfigError::Invalid(format!("word values must be below {}", core.word_domain())).into());
        }
        let mut t = FixedTable { arr: vec![EMPTY; cfg.slots], core, rng, seeds, stats: TableStats::default(), cfg };
        if let Err(f) = t.core.build(&mut t.arr, keys, t.cfg.slots, words, &mut t.rng) {
            t.stats.record_failure(f);
            t.rebuild_from(keys.to_vec(), words.to_vec(), f)?;
        }
        Ok(t)
    }

    fn init(&mut self, keys: &[u64], words: &[u32], seed: u64) -> Result<(), Failure> {
        let carried = self.core.adv_stats();
        self.core = FixedCore::new(self.cfg.geometry(), 0, &self.cfg.core_params(), seed)
            .map_err(|_| Failure::Structure("fixed table config"))?;
        self.core.set_adv_stats(carried);
        self.core.build(&mut self.arr, keys, self.cfg.slots, words, &mut self.rng)
    }

    fn rebuild_from(&mut self, keys: Vec<u64>, words: Vec<u32>, first: Failure) -> Result<(), TableError> {
        let mut last = first;
        self.stats.rebuilds += 1;
        for _ in 0..self.cfg.rebuild_cap {
            self.stats.rebuild_attempts += 1;
            let seed = self.seeds.next_seed();
            match self.init(&keys, &words, seed) {
                Ok(()) => return Ok(()),
                Err(f) => {
                    self.stats.record_failure(f);
                    last = f;
                }
            }
        }
        Err(TableError::RebuildCapExceeded { cap: self.cfg.rebuild_cap, last })
    }

    /// Rebuilds after a failure, keeping every key except `drop` and adding `add`.
    fn recover(&mut self, f: Failure, add: Option<u64>, drop: Option<u64>, word: Option<(usize, u32)>) -> Result<(), TableError> {
        self.stats.record_failure(f);
        let mut seen = HashSet::with_capacity(self.arr.len());
        let mut keys: Vec<u64> = self
            .arr
            .iter()
            .copied()
            .filter(|&k| k != EMPTY && Some(k) != drop && seen.insert(k))
            .collect();
        if let Some(a) = add {
            if seen.insert(a) {
                keys.push(a);
            }
        }
        let mut words: Vec<u32> = (0..self.core.user_words())
            .map(|i| self.core.read_adv(&self.arr, i).unwrap_or(0))
            .collect();
        if let Some((i, v)) = word {
            words[i] = v;
        }
        self.rebuild_from(keys, words, f)
    }

    fn samples_now(&self) -> u64 {
        let s = self.core.adv_stats();
        s.dense_samples + s.sparse_samples
    }

    fn finish<T>(&mut self, before: u64, res: Result<T, Failure>, add: Option<u64>, drop: Option<u64>, word: Option<(usize, u32)>) -> Result<(), TableError> {
        match res {
            Ok(_) => {
                let d = self.samples_now().saturating_sub(before);
                self.stats.samples += d;
                self.stats.max_op_samples = self.stats.max_op_samples.max(d);
                Ok(())
            }
            Err(f) => self.recover(f, add, drop, word),
        }
    }

    /// Slot holding `x`, with the number of slot probes made.
    pub fn query(&self, x: u64) -> (Option<usize>, u32) {
        if x == EMPTY {
            return (None, 0);
        }
        self.core.query(&self.arr, x)
    }

    pub fn contains(&self, x: u64) -> bool {
        self.query(x).0.is_some()
    }

    /// Inserts `x`; the table must hold `N - 1` keys.
    pub fn insert(&mut self, x: u64) -> Result<(), TableError> {
        if x == EMPTY {
            return Err(ConfigError::Invalid("key u64::MAX is reserved".into()).into());
        }
        if self.contains(x) {
            return Err(TableError::AlreadyPresent(x));
        }
        if self.core.len() + 1 != self.cfg.slots {
            return Err(TableError::OutOfBand);
        }
        let before = self.samples_now();
        let res = self.core.insert_free(&mut self.arr, x, &mut self.rng);
        self.finish(before, res, Some(x), None, None)
    }

    /// Deletes `x`; the table must hold `N` keys.
    pub fn delete(&mut self, x: u64) -> Result<(), TableError> {
        let Some(at) = self.query(x).0 else {
            return Err(TableError::NotPresent(x));
        };
        if self.core.len() != self.cfg.slots {
            return Err(TableError::OutOfBand);
        }
        let before = self.samples_now();
        let res = self.core.delete_to_free(&mut self.arr, x, at, &mut self.rng);
        self.finish(before, res, None, Some(x), None)
    }

    /// Caller word `i`.
    pub fn read_adv(&self, i: usize) -> u32 {
        assert!(i < self.user_words(), "caller word {i} out of range");
        self.core.read_adv(&self.arr, i).unwrap_or(0)
    }

    pub fn write_adv(&mut self, i: usize, v: u32) -> Result<(), TableError> {
        self.write_adv_with_drain(i, v, None)
    }

    /// [`write_adv`](Self::write_adv) with an explicit drain budget; 0
    /// leaves the update buffered.
    pub fn write_adv_with_drain(&mut self, i: usize, v: u32, drain: Option<u32>) -> Result<(), TableError> {
        assert!(i < self.user_words(), "caller word {i} out of range");
        if v >= self.word_domain() {
            return Err(ConfigError::Invalid(format!("word value {v} out of domain")).into());
        }
        let before = self.samples_now();
        let res = self.core.write_adv(&mut self.arr, i, v, drain, &mut self.rng);
        self.finish(before, res, None, None, Some((i, v)))
    }

    /// Drains the buffer queue completely.
    pub fn flush(&mut self) -> Result<(), TableError> {
        let res = self.core.flush(&mut self.arr, &mut self.rng);
        self.finish(0, res.map(|_| ()), None, None, None)
    }

    /// Rebuilds when a maintained counter has breached its bound.
    pub fn check_failure_and_rebuild(&mut self) -> Result<bool, TableError> {
        let geo = self.core.geometry();
        if let (Some(fy), Some(ram)) = (self.core.frontyard(), self.core.ram()) {
            if (fy.min_selfloops() as usize) < geo.bin_size / 4 {
                self.recover(Failure::SelfLoopShortage { bin: 0 }, None, None, None)?;
                return Ok(true);
            }
            let occ = ram.occupancy(fy, &self.arr, self.core.pending_shadows());
            if !matches!(occ, Ok(o) if o <= ram.queue_limit()) {
                self.recover(Failure::QueueOverflow, None, None, None)?;
                return Ok(true);
            }
        }
        Ok(false)
    }

    /// Test hook: treat the current state as failed and rebuild once.
    pub fn inject_failure(&mut self) -> Result<(), TableError> {
        self.recover(Failure::Structure("injected"), None, None, None)
    }

    /// Test hook: exchanges two slots without touching metadata.
    pub fn corrupt_swap(&mut self, a: usize, b: usize) {
        self.arr.swap(a, b);
    }

    pub fn len(&self) -> usize {
        self.core.len()
    }

    pub fn is_empty(&self) -> bool {
        self.core.is_empty()
    }

    pub fn capacity(&self) -> usize {
        self.cfg.slots
    }

    pub fn config(&self) -> &FixedConfig {
        &self.cfg
    }

    pub fn geometry(&self) -> FixedGeometry {
        self.core.geometry()
    }

    pub fn stats(&self) -> &TableStats {
        &self.stats
    }

    pub fn adv_stats(&self) -> AdvancedStats {
        self.core.adv_stats()
    }

    pub fn selfloop_slack(&self) -> Option<i64> {
        self.core.selfloop_slack()
    }

    pub fn core(&self) -> &FixedCore {
        &self.core
    }

    pub fn slots(&self) -> &[u64] {
        &self.arr
    }

    pub fn keys(&self) -> impl Iterator<Item = u64> + '_ {
        self.arr.iter().copied().filter(|&k| k != EMPTY)
    }

    pub fn user_words(&self) -> usize {
        self.core.user_words()
    }

    pub fn word_domain(&self) -> u32 {
        self.core.word_domain()
    }

    pub fn free_slot(&self) -> Option<usize> {
        self.core.free_slot()
    }

    pub fn validate(&self) -> ValidationReport {
        self.core.validate(&self.arr)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::HashMap;

    fn keys(n: usize, seed: u64) -> Vec<u64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut s = HashSet::new();
        while s.len() < n {
            s.insert(rng.random::<u64>() >> 1);
        }
        s.into_iter().collect()
    }

    #[test]
    fn plan_tiles_the_slots() {
        let g = FixedGeometry::plan(1 << 20, 1 << 12, DEFAULT_BACKYARD_Z);
        assert_eq!(g.bins, 256);
        assert_eq!(g.bins * g.bin_size + g.backyard, 1 << 20);
        assert!(g.backyard as f64 >= 7.0 * (1u64 << 20) as f64 / 64.0);
        let small = FixedGeometry::plan(100, 64, DEFAULT_BACKYARD_Z);
        assert!(!small.has_frontyard());
        assert_eq!(small.backyard, 100);
    }

    #[test]
    fn churn_with_words_keeps_invariants() {
        let n = 1 << 14;
        let cfg = FixedConfig::new(n, 3);
        let mut live = keys(n - 1, 1);
        let mut t = FixedTable::build(cfg, &live).unwrap();
        assert!(t.validate().is_ok(), "{}", t.validate());
        assert!(t.user_words() > 0);
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mut words: HashMap<usize, u32> = HashMap::new();
        let mut next = 1u64 << 62;
        for step in 0..4000 {
            if t.len() + 1 == n {
                next += 1;
                t.insert(next).unwrap();
                live.push(next);
            } else {
                let i = rng.random_range(0..live.len());
                let x = live.swap_remove(i);
                t.delete(x).unwrap();
            }
            let i = rng.random_range(0..t.user_words());
            let v = rng.random_range(0..t.word_domain());
            t.write_adv(i, v).unwrap();
            words.insert(i, v);
            if step % 500 == 0 {
                let r = t.validate();
                assert!(r.is_ok(), "step {step}: {r}");
                for &k in live.iter().take(200) {
                    assert!(t.contains(k));
                }
            }
        }
        for &k in &live {
            let (s, p) = t.query(k);
            assert!(s.is_some() && p <= FIXED_C_PROBE);
        }
        for (&i, &v) in &words {
            assert_eq!(t.read_adv(i), v);
        }
        assert!(t.adv_stats().high_water <= t.core().ram().unwrap().queue_limit());
    }

    #[test]
    fn delete_pulls_from_backyard() {
        let n = 1 << 13;
        let live = keys(n, 2);
        let mut t = FixedTable::build(FixedConfig::new(n, 4), &live).unwrap();
        let t_size = t.geometry().backyard;
        let x = *live.iter().find(|&&k| t.query(k).0.unwrap() >= t_size).unwrap();
        let before = t.core().backyard().entries();
        t.delete(x).unwrap();
        assert_eq!(t.core().backyard().entries(), before - 1);
        assert!(t.free_slot().is_some());
        assert!(t.validate().is_ok());
        t.insert(x).unwrap();
        assert_eq!(t.free_slot(), None);
        assert!(t.validate().is_ok());
    }

    #[test]
    fn zero_drain_buffers_overwrite() {
        let n = 1 << 14;
        let mut t = FixedTable::build(FixedConfig::new(n, 6), &keys(n, 3)).unwrap();
        t.write_adv_with_drain(7, 1, Some(0)).unwrap();
        t.write_adv_with_drain(7, 2, Some(0)).unwrap();
        let core = t.core();
        let ram = core.ram().unwrap();
        let q = ram.queue_contents(core.frontyard().unwrap(), t.slots(), &[]).unwrap();
        assert_eq!(q, vec![7]);
        assert_eq!(t.read_adv(7), 2);
        t.flush().unwrap();
        assert_eq!(t.read_adv(7), 2);
        assert!(t.validate().is_ok());
    }

    #[test]
    fn backyard_only_table() {
        let n = 64;
        let mut live = keys(n - 1, 4);
        let mut t = FixedTable::build(FixedConfig::new(n, 1), &live).unwrap();
        assert!(!t.geometry().has_frontyard());
        for i in 0..200u64 {
            t.insert(1000 + i).unwrap();
            let x = live.remove(0);
            t.delete(x).unwrap();
            live.push(1000 + i);
            assert!(t.validate().is_ok());
        }
        assert!(live.iter().all(|&k| t.contains(k)));
    }

    #[test]
    fn injected_failure_preserves_keys_and_words() {
        let n = 1 << 13;
        let live = keys(n, 9);
        let mut t = FixedTable::build(FixedConfig::new(n, 2), &live).unwrap();
        t.write_adv(3, 3).unwrap();
        t.inject_failure().unwrap();
        assert_eq!(t.stats().rebuilds, 1);
        assert!(live.iter().all(|&k| t.contains(k)));
        assert_eq!(t.read_adv(3), 3);
        assert!(t.validate().is_ok());
    }

    #[test]
    fn corrupted_swap_is_detected() {
        let n = 1 << 13;
        let mut t = FixedTable::build(FixedConfig::new(n, 2), &keys(n, 10)).unwrap();
        let a = t.geometry().backyard + 1;
        t.corrupt_swap(a, n - 1);
        assert!(!t.validate().is_ok());
    }

    /// Prefix protocol on an interleaved segment, growing past the backyard
    /// and shrinking back.
    #[test]
    fn prefix_grow_and_shrink() {
        let geo = FixedGeometry::plan(1 << 12, 256, DEFAULT_BACKYARD_Z);
        assert!(geo.has_frontyard());
        let p = CoreParams { layout: FixedLayout::Interleaved, ram: false, ..CoreParams::default() };
        let mut core = FixedCore::new(geo, 0, &p, 11).unwrap();
        let mut arr: Vec<u64> = Vec::new();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        core.build(&mut arr, &[], 0, &[], &mut rng).unwrap();
        let mut live = Vec::new();
        let mut next = 0u64;
        let mut failures = 0;
        for step in 0..12_000 {
            let grow = step < 3500 || (step < 9000 && rng.random_bool(0.5)) || live.is_empty();
            let res = if grow && core.extent() < geo.slots {
                next += 1;
                arr.push(EMPTY);
                let r = core.append(&mut arr, next, &mut rng);
                live.push(next);
                r
            } else {
                let i = rng.random_range(0..live.len());
                let x = live.swap_remove(i);
                let at = core.query(&arr, x).0.unwrap();
                let r = core.remove(&mut arr, x, at, &mut rng);
                arr.pop();
                r
            };
            if res.is_err() {
                failures += 1;
                break;
            }
            assert_eq!(arr.len(), core.extent());
            if step % 250 == 0 {
                let r = core.validate(&arr);
                assert!(r.is_ok(), "step {step}: {r}");
                assert!(live.iter().all(|&k| core.query(&arr, k).0.is_some()));
            }
        }
        assert_eq!(failures, 0);
    }

    /// Full interleaved segment with live words: remove a key, then append
    /// another one at the vacated last slot.
    #[test]
    fn full_segment_swap_keeps_words() {
        let n = 1 << 14;
        let geo = FixedGeometry::plan(n, 1024, DEFAULT_BACKYARD_Z);
        let p = CoreParams { layout: FixedLayout::Interleaved, ..CoreParams::default() };
        let mut core = FixedCore::new(geo, 0, &p, 21).unwrap();
        assert!(core.ram().is_some());
        let mut live = keys(n, 7);
        let mut arr = vec![EMPTY; n];
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        core.build(&mut arr, &live, n, &[], &mut rng).unwrap();
        let mut words = vec![0u32; core.user_words()];
        let mut next = 1u64 << 62;
        for step in 0..3000 {
            let i = rng.random_range(0..words.len());
            let v = rng.random_range(0..core.word_domain());
            core.write_adv(&mut arr, i, v, None, &mut rng).unwrap();
            words[i] = v;
            let j = rng.random_range(0..live.len());
            let x = live.swap_remove(j);
            let at = core.query(&arr, x).0.unwrap();
            core.remove(&mut arr, x, at, &mut rng).unwrap();
            assert_eq!(arr[n - 1], EMPTY);
            next += 1;
            core.append(&mut arr, next, &mut rng).unwrap();
            live.push(next);
            if step % 300 == 0 {
                let r = core.validate(&arr);
                assert!(r.is_ok(), "step {step}: {r}");
            }
        }
        for (i, &v) in words.iter().enumerate() {
            assert_eq!(core.read_adv(&arr, i).unwrap(), v);
        }
        assert!(live.iter().all(|&k| core.query(&arr, k).0.is_some()));
    }
}
