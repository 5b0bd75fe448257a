//! Permutation-encoded RAM over a binned slot array.
//!
//! A [`Frontyard`] owns the hash `h`, the logical-offset retrieval structure
//! and one or more bin groups. Each [`Group`] splits its bins into index
//! bins (first half) and partner bins (second half). The first `B/2` slots of
//! every index bin are index slots, and index slot `i` carries word `i`: the
//! word is empty when its occupant is a self-loop, and `k ^ r_i` when the
//! occupant is coupled with a key of partner bin ordinal `k`.

use rand::Rng;

use crate::error::{ConfigError, Failure};
use crate::hashing::{HashFamily, SeedStream, UniverseReducer};
use crate::retrieval::{Retrieval, RetrievalError, RetrievalParams};
use crate::store::{CellBatch, ScratchStore};

/// Marker for a free slot. Tables reject this value as a key.
pub const EMPTY: u64 = u64::MAX;

/// Sample budget meaning "keep sampling until a self-loop turns up".
pub const UNBOUNDED: u32 = u32::MAX;

/// Default hash independence.
pub const DEFAULT_INDEPENDENCE: usize = 8;

/// Where bin `b`, offset `t` lives in the slot array.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SlotMap {
    /// Bin `b` occupies `[base + b*B, base + (b+1)*B)`.
    Contiguous { base: usize, bins: usize, bin_size: usize },
    /// Frontyard slot `t*M + b` after a `backyard`-slot prefix; used inside
    /// the resizable table so any prefix fills bins round-robin.
    Interleaved { base: usize, backyard: usize, bins: usize, bin_size: usize },
}

impl SlotMap {
    #[inline]
    pub fn addr(&self, bin: usize, offset: usize) -> usize {
        match *self {
            SlotMap::Contiguous { base, bin_size, .. } => base + bin * bin_size + offset,
            SlotMap::Interleaved { base, backyard, bins, .. } => base + backyard + offset * bins + bin,
        }
    }

    /// Inverse of [`addr`](Self::addr) for frontyard slots.
    pub fn locate(&self, addr: usize) -> Option<(usize, usize)> {
        match *self {
            SlotMap::Contiguous { base, bins, bin_size } => {
                let rel = addr.checked_sub(base)?;
                (rel < bins * bin_size).then(|| (rel / bin_size, rel % bin_size))
            }
            SlotMap::Interleaved { base, backyard, bins, bin_size } => {
                let rel = addr.checked_sub(base + backyard)?;
                (rel < bins * bin_size).then(|| (rel % bins, rel / bins))
            }
        }
    }

    pub fn bins(&self) -> usize {
        match *self {
            SlotMap::Contiguous { bins, .. } | SlotMap::Interleaved { bins, .. } => bins,
        }
    }

    pub fn bin_size(&self) -> usize {
        match *self {
            SlotMap::Contiguous { bin_size, .. } | SlotMap::Interleaved { bin_size, .. } => bin_size,
        }
    }

    pub fn with_base(self, new_base: usize) -> Self {
        match self {
            SlotMap::Contiguous { bins, bin_size, .. } => SlotMap::Contiguous { base: new_base, bins, bin_size },
            SlotMap::Interleaved { backyard, bins, bin_size, .. } => SlotMap::Interleaved {
                base: new_base,
                backyard,
                bins,
                bin_size,
            },
        }
    }
}

/// One group of bins hosting a basic RAM.
#[derive(Clone, Debug)]
pub struct Group {
    pub first_bin: usize,
    pub bins: usize,
    half_b: usize,
    /// `r_i` for every word, tabulated from a hash of `i`.
    shifts: Vec<u32>,
    selfloops: Vec<u32>,
}

impl Group {
    fn new(first_bin: usize, bins: usize, bin_size: usize, seed: u64) -> Result<Self, ConfigError> {
        if bins < 2 || !bins.is_power_of_two() {
            return Err(ConfigError::Invalid(format!("group of {bins} bins")));
        }
        let shift = HashFamily::new(DEFAULT_INDEPENDENCE, 64, (bins / 2) as u64, seed)?;
        let words = (bins / 2) * (bin_size / 2);
        Ok(Group {
            first_bin,
            bins,
            half_b: bin_size / 2,
            shifts: (0..words as u64).map(|i| shift.eval(i) as u32).collect(),
            selfloops: vec![0; bins / 2],
        })
    }

    pub fn index_bins(&self) -> usize {
        self.bins / 2
    }

    pub fn partner_first(&self) -> usize {
        self.first_bin + self.bins / 2
    }

    /// Size of the word domain (number of partner bins).
    pub fn domain(&self) -> u32 {
        (self.bins / 2) as u32
    }

    pub fn word_count(&self) -> usize {
        self.index_bins() * self.half_b
    }

    /// `(bin, offset)` of index slot `i`.
    #[inline]
    pub fn index_slot(&self, i: usize) -> (usize, usize) {
        (self.first_bin + i / self.half_b, i % self.half_b)
    }

    /// Word carried by index slot `(bin, offset)`, if it is one.
    #[inline]
    pub fn word_at(&self, bin: usize, offset: usize) -> Option<usize> {
        let rel = bin.checked_sub(self.first_bin)?;
        (rel < self.index_bins() && offset < self.half_b).then(|| rel * self.half_b + offset)
    }

    #[inline]
    pub fn partner_ordinal(&self, bin: usize) -> Option<usize> {
        let rel = bin.checked_sub(self.partner_first())?;
        (rel < self.bins / 2).then_some(rel)
    }

    #[inline]
    pub fn is_index_bin(&self, bin: usize) -> bool {
        bin >= self.first_bin && bin < self.partner_first()
    }

    #[inline]
    pub fn shift(&self, i: usize) -> u32 {
        self.shifts[i]
    }

    pub fn selfloops(&self, ordinal: usize) -> u32 {
        self.selfloops[ordinal]
    }

    pub fn min_selfloops(&self) -> u32 {
        self.selfloops.iter().copied().min().unwrap_or(0)
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct WriteOutcome {
    pub done: bool,
    pub samples: u32,
}

/// A word erased by decoupling, to be re-encoded before the operation ends.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Shadow {
    pub group: usize,
    pub word: usize,
    pub value: u32,
}

/// Configuration of a [`Frontyard`].
#[derive(Clone, Copy, Debug)]
pub struct FrontyardParams {
    pub map: SlotMap,
    pub groups: usize,
    pub independence: usize,
    pub key_bits: u32,
    pub seed: u64,
}

/// Binned region of a table together with its offset retrieval and RAM
/// groups. All methods take the slot array explicitly.
#[derive(Clone, Debug)]
pub struct Frontyard {
    pub map: SlotMap,
    h: HashFamily,
    reducer: UniverseReducer,
    offsets: Retrieval,
    offset_store: ScratchStore,
    pub groups: Vec<Group>,
    bins_per_group: usize,
    offset_bits: u32,
}

pub fn bits_for(count: usize) -> u32 {
    usize::BITS - count.saturating_sub(1).leading_zeros()
}

/// Largest reduced-key width for which a retrieval cell still fits 64 bits.
pub fn fitting_key_bits(capacity: usize, value_bits: u32, wanted: u32) -> u32 {
    let buckets = (capacity.max(1) as f64 / (crate::retrieval::SLOTS_PER_BUCKET as f64 * crate::retrieval::TARGET_LOAD)).ceil() as u64;
    let bucket_bits = 63 - buckets.max(2).leading_zeros();
    wanted.min(62 - value_bits + bucket_bits).min(60)
}

pub(crate) fn map_retrieval(e: RetrievalError) -> Failure {
    match e {
        RetrievalError::Duplicate => Failure::ReductionCollision,
        RetrievalError::Full => Failure::RetrievalFull,
        RetrievalError::NotFound => Failure::Structure("retrieval entry missing"),
    }
}

impl Frontyard {
    pub fn new(p: FrontyardParams) -> Result<Self, ConfigError> {
        let bins = p.map.bins();
        let bin_size = p.map.bin_size();
        if !bins.is_power_of_two() || bins < 2 * p.groups || p.groups == 0 {
            return Err(ConfigError::Invalid(format!("{bins} bins in {} groups", p.groups)));
        }
        if bin_size < 2 {
            return Err(ConfigError::Invalid(format!("bin size {bin_size}")));
        }
        let mut seeds = SeedStream::new(p.seed);
        let h = HashFamily::new(p.independence, 64, bins as u64, seeds.next_seed())?;
        let capacity = bins * bin_size;
        let offset_bits = bits_for(bin_size);
        let key_bits = fitting_key_bits(capacity, offset_bits, p.key_bits);
        let reducer = UniverseReducer::new(key_bits, seeds.next_seed())?;
        let offsets = Retrieval::new(
            RetrievalParams { capacity, key_bits, value_bits: offset_bits, seed: seeds.next_seed() },
            0,
        )?;
        let offset_store = ScratchStore::new(offsets.cell_count(), offsets.cell_bits());
        let per = bins / p.groups;
        let groups = (0..p.groups)
            .map(|g| Group::new(g * per, per, bin_size, seeds.next_seed()))
            .collect::<Result<Vec<_>, _>>()?;
        Ok(Frontyard {
            map: p.map,
            h,
            reducer,
            offsets,
            offset_store,
            groups,
            bins_per_group: per,
            offset_bits,
        })
    }

    pub fn bins(&self) -> usize {
        self.map.bins()
    }

    pub fn bin_size(&self) -> usize {
        self.map.bin_size()
    }

    pub fn slots(&self) -> usize {
        self.bins() * self.bin_size()
    }

    pub fn hash(&self) -> &HashFamily {
        &self.h
    }

    pub fn retrieval(&self) -> &Retrieval {
        &self.offsets
    }

    pub fn offset_bits(&self) -> u32 {
        self.offset_bits
    }

    #[inline]
    pub fn bin_of(&self, key: u64) -> usize {
        self.h.eval(key) as usize
    }

    #[inline]
    pub fn reduced(&self, key: u64) -> u64 {
        self.reducer.reduce(key)
    }

    #[inline]
    pub fn group_of(&self, bin: usize) -> usize {
        bin / self.bins_per_group
    }

    /// Stored logical offset, clamped into `[B)` for absent keys.
    #[inline]
    pub fn offset_of(&self, key: u64) -> usize {
        let v = self.offsets.query(&self.offset_store, self.reducer.reduce(key)) as usize;
        if v >= self.bin_size() {
            v % self.bin_size()
        } else {
            v
        }
    }

    /// Starts loading the retrieval cells [`offset_of`](Self::offset_of) reads.
    #[inline]
    pub fn prefetch_offset(&self, key: u64) {
        self.offsets.prefetch(&self.offset_store, self.reducer.reduce(key));
    }

    /// Raw retrieval answer; may be `>= B` for absent keys.
    #[inline]
    pub fn raw_offset(&self, key: u64) -> usize {
        self.offsets.query(&self.offset_store, self.reducer.reduce(key)) as usize
    }

    #[inline]
    pub fn logical_address(&self, key: u64) -> usize {
        self.map.addr(self.bin_of(key), self.offset_of(key))
    }

    /// Physical address of `key`'s partner (of `key` itself for a self-loop).
    #[inline]
    pub fn find_partner(&self, key: u64) -> usize {
        self.logical_address(key)
    }

    /// Two-hop lookup. Returns the slot holding `key` and the number of
    /// slot probes made. Slots past the end of `arr` read as empty.
    pub fn lookup(&self, arr: &[u64], key: u64) -> (Option<usize>, u32) {
        let off = self.raw_offset(key);
        if off >= self.bin_size() {
            return (None, 0);
        }
        let s1 = self.map.addr(self.bin_of(key), off);
        let y = arr.get(s1).copied().unwrap_or(EMPTY);
        if y == EMPTY {
            return (None, 1);
        }
        if y == key {
            return (Some(s1), 1);
        }
        let off = self.raw_offset(y);
        if off >= self.bin_size() {
            return (None, 1);
        }
        let s2 = self.map.addr(self.bin_of(y), off);
        (if arr.get(s2) == Some(&key) { Some(s2) } else { None }, 2)
    }

    pub fn offsets_insert<R: Rng>(&mut self, key: u64, offset: usize, rng: &mut R) -> Result<(), Failure> {
        let mut b = CellBatch::new();
        self.offsets
            .insert(&self.offset_store, &mut b, self.reducer.reduce(key), offset as u64, rng)
            .map_err(map_retrieval)?;
        self.offset_store.commit(&b);
        Ok(())
    }

    pub fn offsets_update(&mut self, key: u64, offset: usize) -> Result<(), Failure> {
        let mut b = CellBatch::new();
        self.offsets
            .update(&self.offset_store, &mut b, self.reducer.reduce(key), offset as u64)
            .map_err(map_retrieval)?;
        self.offset_store.commit(&b);
        Ok(())
    }

    pub fn offsets_delete(&mut self, key: u64) -> Result<(), Failure> {
        let mut b = CellBatch::new();
        self.offsets
            .delete(&self.offset_store, &mut b, self.reducer.reduce(key))
            .map_err(map_retrieval)?;
        self.offset_store.commit(&b);
        Ok(())
    }

    pub fn offsets_contains(&self, key: u64) -> bool {
        self.offsets.contains(&self.offset_store, self.reducer.reduce(key))
    }

    /// Adjusts the self-loop counter when a self-loop enters (`+1`) or
    /// leaves (`-1`) bin `bin`. Index bins are ignored.
    #[inline]
    pub fn note_selfloop(&mut self, bin: usize, delta: i32) {
        let g = self.group_of(bin);
        if let Some(ord) = self.groups[g].partner_ordinal(bin) {
            let c = &mut self.groups[g].selfloops[ord];
            *c = (*c as i32 + delta) as u32;
        }
    }

    /// Is the key sitting at physical `(bin, offset)` a self-loop there?
    /// Exact for partner bins and for non-index offsets.
    #[inline]
    pub fn is_selfloop_at(&self, key: u64, bin: usize) -> bool {
        key != EMPTY && self.bin_of(key) == bin
    }

    pub fn read_word(&self, arr: &[u64], g: usize, i: usize) -> Result<Option<u32>, Failure> {
        let grp = &self.groups[g];
        let (b, t) = grp.index_slot(i);
        let x = arr[self.map.addr(b, t)];
        if x == EMPTY {
            return Err(Failure::EmptyIndexSlot { word: i });
        }
        Ok(grp
            .partner_ordinal(self.bin_of(x))
            .map(|k| k as u32 ^ grp.shift(i)))
    }

    /// Breaks the pair at index slot `i`, if any. Returns the slot address.
    pub fn erase_word(&mut self, arr: &mut [u64], g: usize, i: usize) -> Result<usize, Failure> {
        let (b, t) = self.groups[g].index_slot(i);
        let s = self.map.addr(b, t);
        let x = arr[s];
        if x == EMPTY {
            return Err(Failure::EmptyIndexSlot { word: i });
        }
        let xb = self.bin_of(x);
        if let Some(ord) = self.groups[g].partner_ordinal(xb) {
            let home = self.map.addr(xb, self.offset_of(x));
            arr.swap(s, home);
            self.groups[g].selfloops[ord] += 1;
        }
        Ok(s)
    }

    /// Encodes `v` into word `i` of group `g`. An existing pair is broken
    /// first; that erase stands even if sampling then runs out of budget.
    pub fn write_word<R: Rng>(
        &mut self,
        arr: &mut [u64],
        g: usize,
        i: usize,
        v: Option<u32>,
        budget: u32,
        rng: &mut R,
    ) -> Result<WriteOutcome, Failure> {
        let s = self.erase_word(arr, g, i)?;
        let Some(v) = v else {
            return Ok(WriteOutcome { done: true, samples: 0 });
        };
        debug_assert!(v < self.groups[g].domain());
        let ord = (v ^ self.groups[g].shift(i)) as usize;
        let pbin = self.groups[g].partner_first() + ord;
        if self.groups[g].selfloops[ord] == 0 {
            return Err(Failure::SelfLoopShortage { bin: pbin });
        }
        let (found, samples) = self.sample_self_loop(arr, pbin, budget, rng);
        match found {
            Some(a) => {
                arr.swap(s, a);
                self.groups[g].selfloops[ord] -= 1;
                Ok(WriteOutcome { done: true, samples })
            }
            None => Ok(WriteOutcome { done: false, samples }),
        }
    }

    /// Deterministic [`write_word`](Self::write_word): couples with the
    /// lowest-offset self-loop of the target partner bin.
    pub fn write_word_lowest(&mut self, arr: &mut [u64], g: usize, i: usize, v: Option<u32>) -> Result<(), Failure> {
        let s = self.erase_word(arr, g, i)?;
        let Some(v) = v else {
            return Ok(());
        };
        let ord = (v ^ self.groups[g].shift(i)) as usize;
        let pbin = self.groups[g].partner_first() + ord;
        let a = (0..self.bin_size())
            .map(|t| self.map.addr(pbin, t))
            .find(|&a| self.is_selfloop_at(arr[a], pbin))
            .ok_or(Failure::SelfLoopShortage { bin: pbin })?;
        arr.swap(s, a);
        self.groups[g].selfloops[ord] -= 1;
        Ok(())
    }

    /// Samples offsets of `bin` with replacement until one holds a self-loop.
    pub fn sample_self_loop<R: Rng>(&self, arr: &[u64], bin: usize, budget: u32, rng: &mut R) -> (Option<usize>, u32) {
        let bsize = self.bin_size();
        let mut samples = 0;
        while samples < budget {
            samples += 1;
            let a = self.map.addr(bin, rng.random_range(0..bsize));
            if self.is_selfloop_at(arr[a], bin) {
                return (Some(a), samples);
            }
        }
        (None, samples)
    }

    /// Breaks the coupling pair containing `key`, if any, returning the word
    /// that was erased with its value.
    pub fn decouple(&mut self, arr: &mut [u64], key: u64) -> Result<Option<Shadow>, Failure> {
        let kb = self.bin_of(key);
        let home = self.map.addr(kb, self.offset_of(key));
        let other = arr[home];
        if other == key {
            return Ok(None);
        }
        if other == EMPTY {
            return Err(Failure::Structure("logical slot of a stored key is empty"));
        }
        let g = self.group_of(kb);
        let (ib, it) = if self.groups[g].is_index_bin(kb) {
            (kb, self.offset_of(key))
        } else {
            (self.bin_of(other), self.offset_of(other))
        };
        let word = self.groups[g]
            .word_at(ib, it)
            .ok_or(Failure::Structure("coupled key outside an index slot"))?;
        let value = self.read_word(arr, g, word)?.ok_or(Failure::Structure("coupled word reads empty"))?;
        self.erase_word(arr, g, word)?;
        Ok(Some(Shadow { group: g, word, value }))
    }

    /// Recomputes every self-loop counter from the array.
    pub fn recount_selfloops(&mut self, arr: &[u64]) {
        let bsize = self.bin_size();
        for g in 0..self.groups.len() {
            let pf = self.groups[g].partner_first();
            for ord in 0..self.groups[g].bins / 2 {
                let bin = pf + ord;
                let c = (0..bsize)
                    .filter(|&t| self.is_selfloop_at(arr.get(self.map.addr(bin, t)).copied().unwrap_or(EMPTY), bin))
                    .count();
                self.groups[g].selfloops[ord] = c as u32;
            }
        }
    }

    /// Self-loop counts recomputed from the array, per group and ordinal.
    pub fn counted_selfloops(&self, arr: &[u64]) -> Vec<Vec<u32>> {
        let bsize = self.bin_size();
        self.groups
            .iter()
            .map(|grp| {
                (0..grp.bins / 2)
                    .map(|ord| {
                        let bin = grp.partner_first() + ord;
                        (0..bsize)
                            .filter(|&t| self.is_selfloop_at(arr.get(self.map.addr(bin, t)).copied().unwrap_or(EMPTY), bin))
                            .count() as u32
                    })
                    .collect()
            })
            .collect()
    }

    pub fn maintained_selfloops(&self) -> Vec<Vec<u32>> {
        self.groups.iter().map(|g| g.selfloops.clone()).collect()
    }

    pub fn min_selfloops(&self) -> u32 {
        self.groups.iter().map(|g| g.min_selfloops()).min().unwrap_or(0)
    }

    /// Number of retrieval entries (full scan).
    pub fn offsets_len(&self) -> usize {
        self.offsets.len(&self.offset_store)
    }

    /// Retrieval footprint in bits.
    pub fn offsets_footprint(&self) -> u64 {
        self.offsets.footprint_bits()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn contiguous_index_slots() {
        let g = Group::new(0, 4, 4, 1).unwrap();
        let m = SlotMap::Contiguous { base: 0, bins: 4, bin_size: 4 };
        let addr = |i| {
            let (b, t) = g.index_slot(i);
            m.addr(b, t)
        };
        assert_eq!(addr(0), 0);
        assert_eq!(addr(1), 1);
        assert_eq!(addr(2), 4);
        assert_eq!(addr(3), 5);
        assert_eq!(g.word_count(), 4);
    }

    #[test]
    fn slot_maps_invert() {
        let maps = [
            SlotMap::Contiguous { base: 7, bins: 8, bin_size: 5 },
            SlotMap::Interleaved { base: 3, backyard: 11, bins: 8, bin_size: 5 },
        ];
        for m in maps {
            for b in 0..8 {
                for t in 0..5 {
                    assert_eq!(m.locate(m.addr(b, t)), Some((b, t)));
                }
            }
            assert_eq!(m.locate(2), None);
        }
    }

    fn filled(bins: usize, bin_size: usize, seed: u64) -> (Frontyard, Vec<u64>) {
        testutil::filled(bins, bin_size, 1, seed)
    }

    #[test]
    fn write_read_roundtrip_and_involution() {
        let (mut fy, mut arr) = filled(8, 16, 3);
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let words = fy.groups[0].word_count();
        let mut expect = vec![None; words];
        for step in 0..2000 {
            let i = rng.random_range(0..words);
            let v = if step % 3 == 0 { None } else { Some(rng.random_range(0..4u32)) };
            let out = fy.write_word(&mut arr, 0, i, v, UNBOUNDED, &mut rng).unwrap();
            assert!(out.done);
            expect[i] = v;
            if step % 97 == 0 {
                for (j, e) in expect.iter().enumerate() {
                    assert_eq!(fy.read_word(&arr, 0, j).unwrap(), *e);
                }
                for &x in &arr {
                    assert_eq!(arr[fy.find_partner(arr[fy.find_partner(x)])], x);
                }
                assert_eq!(fy.counted_selfloops(&arr), fy.maintained_selfloops());
            }
        }
    }

    #[test]
    fn zero_budget_erases_then_gives_up() {
        let (mut fy, mut arr) = filled(8, 16, 4);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        fy.write_word(&mut arr, 0, 5, Some(2), UNBOUNDED, &mut rng).unwrap();
        let out = fy.write_word(&mut arr, 0, 5, Some(1), 0, &mut rng).unwrap();
        assert!(!out.done);
        assert_eq!(fy.read_word(&arr, 0, 5).unwrap(), None);
    }

    #[test]
    fn decouple_reports_erased_word() {
        let (mut fy, mut arr) = filled(8, 16, 5);
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        fy.write_word(&mut arr, 0, 9, Some(3), UNBOUNDED, &mut rng).unwrap();
        let (b, t) = fy.groups[0].index_slot(9);
        let occupant = arr[fy.map.addr(b, t)];
        let sh = fy.decouple(&mut arr, occupant).unwrap().unwrap();
        assert_eq!(sh, Shadow { group: 0, word: 9, value: 3 });
        assert_eq!(fy.read_word(&arr, 0, 9).unwrap(), None);
        assert_eq!(fy.decouple(&mut arr, occupant).unwrap(), None);
    }

    #[test]
    fn lookup_finds_every_key() {
        let (mut fy, mut arr) = filled(8, 16, 6);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for i in 0..fy.groups[0].word_count() {
            fy.write_word(&mut arr, 0, i, Some((i % 4) as u32), UNBOUNDED, &mut rng).unwrap();
        }
        for (s, &x) in arr.iter().enumerate() {
            let (found, probes) = fy.lookup(&arr, x);
            assert_eq!(found, Some(s));
            assert!(probes <= 2);
        }
        assert_eq!(fy.lookup(&arr, 1 << 50).0, None);
    }
}

#[cfg(test)]
pub(crate) mod testutil {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    /// Fills every bin with keys hashing to it, all self-loops.
    pub(crate) fn filled(bins: usize, bin_size: usize, groups: usize, seed: u64) -> (Frontyard, Vec<u64>) {
        let map = SlotMap::Contiguous { base: 0, bins, bin_size };
        let mut fy = Frontyard::new(FrontyardParams { map, groups, independence: 8, key_bits: 40, seed }).unwrap();
        let mut arr = vec![EMPTY; bins * bin_size];
        let mut fill = vec![0usize; bins];
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut k = 0u64;
        while fill.iter().any(|&f| f < bin_size) {
            k += 1;
            let b = fy.bin_of(k);
            if fill[b] < bin_size {
                arr[map.addr(b, fill[b])] = k;
                fy.offsets_insert(k, fill[b], &mut rng).unwrap();
                fill[b] += 1;
            }
        }
        fy.recount_selfloops(&arr);
        (fy, arr)
    }
}
