//! Dynamic retrieval structure over a [`WordStore`].
//!
//! Keys from a `key_bits`-bit universe are scrambled by a seeded bijection
//! and quotiented: the quotient picks a primary bucket, the remainder is
//! stored. Each key may live in its primary bucket or in an alternate bucket
//! derived from the remainder alone, so entries can be displaced
//! cuckoo-style without knowing the original key. A choice bit in every cell
//! records which of the two buckets holds the entry, which makes
//! `(bucket, choice, remainder)` identify the key exactly.
//!
//! Queries read at most `2 * slots_per_bucket` cells. Updates never touch
//! the store: they collect their writes in a [`CellBatch`] which the owner
//! commits.

use rand::Rng;

use crate::error::ConfigError;
use crate::hashing::{HashFamily, SeedStream};
use crate::store::{CellBatch, Overlay, WordStore};

pub const SLOTS_PER_BUCKET: usize = 4;
pub const TARGET_LOAD: f64 = 0.9;
pub const KICK_LIMIT: usize = 500;

#[derive(Clone, Copy, Debug, PartialEq, Eq, thiserror::Error)]
pub enum RetrievalError {
    #[error("key already stored")]
    Duplicate,
    #[error("no room after {KICK_LIMIT} displacements")]
    Full,
    #[error("key not stored")]
    NotFound,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct RetrievalParams {
    pub capacity: usize,
    pub key_bits: u32,
    pub value_bits: u32,
    pub seed: u64,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Retrieval {
    params: RetrievalParams,
    buckets: u64,
    rem_bits: u32,
    key_mask: u64,
    mul_a: u64,
    mul_b: u64,
    alt: HashFamily,
    base: usize,
}

#[derive(Clone, Copy, Debug)]
struct Entry {
    choice: u64,
    rem: u64,
    value: u64,
}

impl Retrieval {
    /// Lays out a structure occupying cells `[base, base + cell_count())`.
    pub fn new(params: RetrievalParams, base: usize) -> Result<Self, ConfigError> {
        if params.key_bits == 0 || params.key_bits > 63 {
            return Err(ConfigError::Invalid(format!("retrieval key width {}", params.key_bits)));
        }
        let capacity = params.capacity.max(1);
        let buckets = ((capacity as f64) / (SLOTS_PER_BUCKET as f64 * TARGET_LOAD)).ceil() as u64;
        let buckets = buckets.max(2);
        let key_mask = (1u64 << params.key_bits) - 1;
        let max_rem = key_mask / buckets;
        let rem_bits = 64 - max_rem.leading_zeros();
        if 2 + rem_bits + params.value_bits > 64 {
            return Err(ConfigError::Invalid(format!(
                "retrieval cell needs {} bits",
                2 + rem_bits + params.value_bits
            )));
        }
        let mut seeds = SeedStream::new(params.seed);
        let mul_a = (seeds.next_seed() | 1) & key_mask;
        let mul_b = (seeds.next_seed() | 1) & key_mask;
        let alt = HashFamily::new(2, 61, 1 << 60, seeds.next_seed())?;
        Ok(Retrieval {
            params,
            buckets,
            rem_bits,
            key_mask,
            mul_a: mul_a | 1,
            mul_b: mul_b | 1,
            alt,
            base,
        })
    }

    pub fn params(&self) -> &RetrievalParams {
        &self.params
    }

    pub fn cell_bits(&self) -> u32 {
        2 + self.rem_bits + self.params.value_bits
    }

    pub fn cell_count(&self) -> usize {
        self.buckets as usize * SLOTS_PER_BUCKET
    }

    pub fn base(&self) -> usize {
        self.base
    }

    /// Worst-case cells read by one query.
    pub fn max_query_reads(&self) -> usize {
        2 * SLOTS_PER_BUCKET
    }

    /// Storage in bits.
    pub fn footprint_bits(&self) -> u64 {
        self.cell_count() as u64 * self.cell_bits() as u64
    }

    /// `footprint / (capacity * (value_bits + ceil(log2 log2 capacity)))`.
    pub fn beta(&self) -> f64 {
        let cap = self.params.capacity.max(4) as f64;
        let loglog = cap.log2().log2().ceil();
        self.footprint_bits() as f64 / (cap * (self.params.value_bits as f64 + loglog))
    }

    fn scramble(&self, key: u64) -> u64 {
        let k = self.params.key_bits;
        let mut x = key & self.key_mask;
        x = x.wrapping_mul(self.mul_a) & self.key_mask;
        x ^= x >> (k / 2 + 1);
        x.wrapping_mul(self.mul_b) & self.key_mask
    }

    #[inline]
    fn split(&self, key: u64) -> (u64, u64) {
        let x = self.scramble(key);
        (x % self.buckets, x / self.buckets)
    }

    #[inline]
    fn other_bucket(&self, bucket: u64, rem: u64) -> u64 {
        let f = self.alt.field_value(rem) % self.buckets;
        (f + self.buckets - bucket) % self.buckets
    }

    #[inline]
    fn cell_index(&self, bucket: u64, slot: usize) -> usize {
        self.base + bucket as usize * SLOTS_PER_BUCKET + slot
    }

    fn encode(&self, e: Entry) -> u64 {
        1 | (e.choice << 1) | (e.rem << 2) | (e.value << (2 + self.rem_bits))
    }

    fn decode(&self, cell: u64) -> Option<Entry> {
        if cell & 1 == 0 {
            return None;
        }
        Some(Entry {
            choice: (cell >> 1) & 1,
            rem: (cell >> 2) & ((1u64 << self.rem_bits) - 1),
            value: cell >> (2 + self.rem_bits),
        })
    }

    fn value_mask(&self) -> u64 {
        if self.params.value_bits >= 64 {
            u64::MAX
        } else {
            (1u64 << self.params.value_bits) - 1
        }
    }

    fn locate<S: WordStore + ?Sized>(&self, store: &S, key: u64) -> (Option<(usize, Entry)>, usize) {
        let (b1, rem) = self.split(key);
        let b2 = self.other_bucket(b1, rem);
        let mut reads = 0;
        for (choice, bucket) in [(0u64, b1), (1u64, b2)] {
            for slot in 0..SLOTS_PER_BUCKET {
                let idx = self.cell_index(bucket, slot);
                reads += 1;
                if let Some(e) = self.decode(store.read(idx)) {
                    if e.choice == choice && e.rem == rem {
                        return (Some((idx, e)), reads);
                    }
                }
            }
        }
        (None, reads)
    }

    /// Starts loading the cells a query for `key` reads.
    #[inline]
    pub fn prefetch<S: WordStore + ?Sized>(&self, store: &S, key: u64) {
        let (b1, rem) = self.split(key);
        store.prefetch(self.cell_index(b1, 0));
        store.prefetch(self.cell_index(self.other_bucket(b1, rem), 0));
    }

    /// Stored value for a present key; some in-range value otherwise.
    pub fn query<S: WordStore + ?Sized>(&self, store: &S, key: u64) -> u64 {
        self.query_counted(store, key).0
    }

    /// As [`query`](Self::query), also returning the number of cells read.
    pub fn query_counted<S: WordStore + ?Sized>(&self, store: &S, key: u64) -> (u64, usize) {
        match self.locate(store, key) {
            (Some((_, e)), reads) => (e.value, reads),
            (None, reads) => (0, reads),
        }
    }

    /// Exact membership (the structure stores full remainders).
    pub fn contains<S: WordStore + ?Sized>(&self, store: &S, key: u64) -> bool {
        self.locate(store, key).0.is_some()
    }

    pub fn insert<S: WordStore + ?Sized, R: Rng>(
        &self,
        store: &S,
        batch: &mut CellBatch,
        key: u64,
        value: u64,
        rng: &mut R,
    ) -> Result<(), RetrievalError> {
        debug_assert_eq!(value & !self.value_mask(), 0, "value wider than value_bits");
        let value = value & self.value_mask();
        if self.locate(&Overlay { base: store, pending: batch }, key).0.is_some() {
            return Err(RetrievalError::Duplicate);
        }
        let (b1, rem) = self.split(key);
        let b2 = self.other_bucket(b1, rem);
        for (choice, bucket) in [(0u64, b1), (1u64, b2)] {
            if let Some(slot) = self.free_slot(store, batch, bucket) {
                batch.write(self.cell_index(bucket, slot), self.encode(Entry { choice, rem, value }));
                return Ok(());
            }
        }
        let (mut choice, mut bucket) = if rng.random::<bool>() { (0, b1) } else { (1, b2) };
        let mut carried = Entry { choice, rem, value };
        for _ in 0..KICK_LIMIT {
            let slot = rng.random_range(0..SLOTS_PER_BUCKET);
            let idx = self.cell_index(bucket, slot);
            let victim = {
                let view = Overlay { base: store, pending: batch };
                self.decode(view.read(idx)).expect("full bucket has occupied cells")
            };
            carried.choice = choice;
            batch.write(idx, self.encode(carried));
            carried = victim;
            bucket = self.other_bucket(bucket, victim.rem);
            choice = 1 - victim.choice;
            if let Some(slot) = self.free_slot(store, batch, bucket) {
                carried.choice = choice;
                batch.write(self.cell_index(bucket, slot), self.encode(carried));
                return Ok(());
            }
        }
        Err(RetrievalError::Full)
    }

    fn free_slot<S: WordStore + ?Sized>(&self, store: &S, batch: &CellBatch, bucket: u64) -> Option<usize> {
        let view = Overlay { base: store, pending: batch };
        (0..SLOTS_PER_BUCKET).find(|&s| view.read(self.cell_index(bucket, s)) & 1 == 0)
    }

    pub fn update<S: WordStore + ?Sized>(
        &self,
        store: &S,
        batch: &mut CellBatch,
        key: u64,
        value: u64,
    ) -> Result<(), RetrievalError> {
        let found = self.locate(&Overlay { base: store, pending: batch }, key).0;
        let (idx, mut e) = found.ok_or(RetrievalError::NotFound)?;
        e.value = value & self.value_mask();
        batch.write(idx, self.encode(e));
        Ok(())
    }

    pub fn delete<S: WordStore + ?Sized>(
        &self,
        store: &S,
        batch: &mut CellBatch,
        key: u64,
    ) -> Result<(), RetrievalError> {
        let found = self.locate(&Overlay { base: store, pending: batch }, key).0;
        let (idx, _) = found.ok_or(RetrievalError::NotFound)?;
        batch.write(idx, 0);
        Ok(())
    }

    /// Inserts, or overwrites the value when the key is already stored.
    pub fn upsert<S: WordStore + ?Sized, R: Rng>(
        &self,
        store: &S,
        batch: &mut CellBatch,
        key: u64,
        value: u64,
        rng: &mut R,
    ) -> Result<(), RetrievalError> {
        match self.update(store, batch, key, value) {
            Err(RetrievalError::NotFound) => self.insert(store, batch, key, value, rng),
            other => other,
        }
    }

    /// Deletes when present; reports whether anything was removed.
    pub fn remove_if_present<S: WordStore + ?Sized>(&self, store: &S, batch: &mut CellBatch, key: u64) -> bool {
        self.delete(store, batch, key).is_ok()
    }

    /// Occupied cells (full scan).
    pub fn len<S: WordStore + ?Sized>(&self, store: &S) -> usize {
        (0..self.cell_count())
            .filter(|&c| store.read(self.base + c) & 1 == 1)
            .count()
    }

    /// Inserts `count` placeholder keys from the top of the key universe.
    /// A tiny structure hosted inside a large table is padded this way so
    /// its failure probability tracks the host's size.
    pub fn insert_dummies<S: WordStore + ?Sized, R: Rng>(
        &self,
        store: &S,
        batch: &mut CellBatch,
        count: usize,
        rng: &mut R,
    ) -> Result<(), RetrievalError> {
        for j in 0..count as u64 {
            self.insert(store, batch, self.key_mask - j, 0, rng)?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::store::ScratchStore;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use std::collections::HashMap;

    fn setup(capacity: usize, value_bits: u32, seed: u64) -> (Retrieval, ScratchStore) {
        let r = Retrieval::new(
            RetrievalParams { capacity, key_bits: 42, value_bits, seed },
            0,
        )
        .unwrap();
        let s = ScratchStore::new(r.cell_count(), r.cell_bits());
        (r, s)
    }

    #[test]
    fn insert_then_query() {
        let (r, mut s) = setup(64, 8, 1);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let mut b = CellBatch::new();
        r.insert(&s, &mut b, 77, 0, &mut rng).unwrap();
        s.commit(&b);
        assert_eq!(r.query(&s, 77), 0);
        let mut b = CellBatch::new();
        r.update(&s, &mut b, 77, 200).unwrap();
        s.commit(&b);
        assert_eq!(r.query(&s, 77), 200);
    }

    #[test]
    fn uncommitted_batch_leaves_store_untouched() {
        let (r, s) = setup(64, 8, 2);
        let before = s.clone();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let mut b = CellBatch::new();
        r.insert(&s, &mut b, 5, 9, &mut rng).unwrap();
        r.insert(&s, &mut b, 6, 10, &mut rng).unwrap();
        assert_eq!(s, before);
        assert!(r.contains(&Overlay { base: &s, pending: &b }, 6));
    }

    #[test]
    fn duplicate_and_missing_keys() {
        let (r, mut s) = setup(64, 8, 3);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let mut b = CellBatch::new();
        r.insert(&s, &mut b, 1, 1, &mut rng).unwrap();
        s.commit(&b);
        let mut b = CellBatch::new();
        assert_eq!(r.insert(&s, &mut b, 1, 2, &mut rng), Err(RetrievalError::Duplicate));
        assert_eq!(r.delete(&s, &mut b, 2), Err(RetrievalError::NotFound));
        assert_eq!(r.update(&s, &mut b, 2, 0), Err(RetrievalError::NotFound));
    }

    #[test]
    fn delete_then_reinsert() {
        let (r, mut s) = setup(64, 8, 4);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let mut b = CellBatch::new();
        r.insert(&s, &mut b, 10, 3, &mut rng).unwrap();
        s.commit(&b);
        let mut b = CellBatch::new();
        r.delete(&s, &mut b, 10).unwrap();
        s.commit(&b);
        assert!(r.query(&s, 10) < 256);
        assert!(!r.contains(&s, 10));
        let mut b = CellBatch::new();
        r.insert(&s, &mut b, 10, 4, &mut rng).unwrap();
        s.commit(&b);
        assert_eq!(r.query(&s, 10), 4);
    }

    #[test]
    fn fills_to_capacity_exactly() {
        let cap = 1 << 12;
        let (r, mut s) = setup(cap, 8, 5);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let keys: Vec<u64> = (0..cap as u64).map(|i| i.wrapping_mul(0x9e37_79b9) & ((1 << 42) - 1)).collect();
        for &k in &keys {
            let mut b = CellBatch::new();
            r.insert(&s, &mut b, k, k % 256, &mut rng).unwrap();
            s.commit(&b);
        }
        for &k in &keys {
            assert_eq!(r.query(&s, k), k % 256);
        }
        assert_eq!(r.len(&s), cap);
    }

    #[test]
    fn churn_matches_map() {
        let cap = 2000;
        let (r, mut s) = setup(cap, 10, 6);
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let mut oracle: HashMap<u64, u64> = HashMap::new();
        for _ in 0..50_000 {
            let mut b = CellBatch::new();
            if oracle.len() < cap && (oracle.is_empty() || rng.random::<bool>()) {
                let k = rng.random_range(0..1u64 << 42);
                let v = rng.random_range(0..1024);
                match r.insert(&s, &mut b, k, v, &mut rng) {
                    Ok(()) => {
                        assert!(oracle.insert(k, v).is_none());
                    }
                    Err(RetrievalError::Duplicate) => assert!(oracle.contains_key(&k)),
                    Err(e) => panic!("{e}"),
                }
            } else {
                let k = *oracle.keys().next().unwrap();
                if rng.random::<bool>() {
                    r.delete(&s, &mut b, k).unwrap();
                    oracle.remove(&k);
                } else {
                    let v = rng.random_range(0..1024);
                    r.update(&s, &mut b, k, v).unwrap();
                    oracle.insert(k, v);
                }
            }
            s.commit(&b);
        }
        for (&k, &v) in &oracle {
            assert_eq!(r.query(&s, k), v);
        }
    }

    #[test]
    fn query_reads_are_bounded() {
        let (r, mut s) = setup(512, 8, 7);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for k in 0..512u64 {
            let mut b = CellBatch::new();
            r.insert(&s, &mut b, k * 31 + 7, 1, &mut rng).unwrap();
            s.commit(&b);
        }
        for k in 0..20_000u64 {
            assert!(r.query_counted(&s, k).1 <= r.max_query_reads());
        }
    }
}
