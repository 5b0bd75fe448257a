//! Overflow region of a fixed table: a key-to-position retrieval structure
//! plus one doubly linked list of positions per frontyard bin.

use rand::Rng;

use crate::error::{ConfigError, Failure};
use crate::hashing::{SeedStream, UniverseReducer};
use crate::ram::{bits_for, fitting_key_bits, map_retrieval};
use crate::retrieval::{Retrieval, RetrievalParams};
use crate::store::{CellBatch, ScratchStore};

const NIL: u32 = u32::MAX;

#[derive(Clone, Debug)]
pub struct Backyard {
    slots: usize,
    reducer: UniverseReducer,
    retr: Retrieval,
    store: ScratchStore,
    next: Vec<u32>,
    prev: Vec<u32>,
    heads: Vec<u32>,
    list_len: Vec<u32>,
}

impl Backyard {
    /// `slots` positions, lists for `bins` bins.
    pub fn new(slots: usize, bins: usize, key_bits: u32, seed: u64) -> Result<Self, ConfigError> {
        let mut seeds = SeedStream::new(seed);
        let value_bits = bits_for(slots.max(2));
        // Headroom keeps small structures well below the displacement limit.
        let capacity = slots + (slots / 8).max(16);
        let key_bits = fitting_key_bits(capacity, value_bits, key_bits);
        let reducer = UniverseReducer::new(key_bits, seeds.next_seed())?;
        let retr = Retrieval::new(
            RetrievalParams { capacity, key_bits, value_bits, seed: seeds.next_seed() },
            0,
        )?;
        let store = ScratchStore::new(retr.cell_count(), retr.cell_bits());
        Ok(Backyard {
            slots,
            reducer,
            retr,
            store,
            next: vec![NIL; slots],
            prev: vec![NIL; slots],
            heads: vec![NIL; bins],
            list_len: vec![0; bins],
        })
    }

    pub fn slots(&self) -> usize {
        self.slots
    }

    pub fn bins(&self) -> usize {
        self.heads.len()
    }

    /// Recorded position of `key`; arbitrary (possibly `>= slots`) if absent.
    #[inline]
    pub fn position(&self, key: u64) -> usize {
        self.retr.query(&self.store, self.reducer.reduce(key)) as usize
    }

    pub fn contains(&self, key: u64) -> bool {
        self.retr.contains(&self.store, self.reducer.reduce(key))
    }

    /// Registers `key` at `pos`, on the list of `bin` when lists are kept.
    pub fn insert<R: Rng>(&mut self, key: u64, pos: usize, bin: usize, rng: &mut R) -> Result<(), Failure> {
        let mut b = CellBatch::new();
        self.retr
            .insert(&self.store, &mut b, self.reducer.reduce(key), pos as u64, rng)
            .map_err(map_retrieval)?;
        self.store.commit(&b);
        if !self.heads.is_empty() {
            self.link(pos, bin);
        }
        Ok(())
    }

    /// Forgets `key`, which sits at `pos` on the list of `bin`.
    pub fn remove(&mut self, key: u64, pos: usize, bin: usize) -> Result<(), Failure> {
        let mut b = CellBatch::new();
        self.retr
            .delete(&self.store, &mut b, self.reducer.reduce(key))
            .map_err(map_retrieval)?;
        self.store.commit(&b);
        if !self.heads.is_empty() {
            self.unlink(pos, bin);
        }
        Ok(())
    }

    /// First position on the list of `bin`.
    pub fn head(&self, bin: usize) -> Option<usize> {
        let h = self.heads[bin];
        (h != NIL).then_some(h as usize)
    }

    pub fn list_len(&self, bin: usize) -> u32 {
        self.list_len[bin]
    }

    pub fn min_list_len(&self) -> u32 {
        self.list_len.iter().copied().min().unwrap_or(0)
    }

    fn link(&mut self, pos: usize, bin: usize) {
        let h = self.heads[bin];
        self.next[pos] = h;
        self.prev[pos] = NIL;
        if h != NIL {
            self.prev[h as usize] = pos as u32;
        }
        self.heads[bin] = pos as u32;
        self.list_len[bin] += 1;
    }

    fn unlink(&mut self, pos: usize, bin: usize) {
        let (p, n) = (self.prev[pos], self.next[pos]);
        if p == NIL {
            debug_assert_eq!(self.heads[bin], pos as u32);
            self.heads[bin] = n;
        } else {
            self.next[p as usize] = n;
        }
        if n != NIL {
            self.prev[n as usize] = p;
        }
        self.next[pos] = NIL;
        self.prev[pos] = NIL;
        self.list_len[bin] -= 1;
    }

    /// Positions on the list of `bin`, head first.
    pub fn list(&self, bin: usize) -> Vec<usize> {
        let mut out = Vec::new();
        let mut c = self.heads[bin];
        while c != NIL && out.len() <= self.slots {
            out.push(c as usize);
            c = self.next[c as usize];
        }
        out
    }

    pub fn entries(&self) -> usize {
        self.retr.len(&self.store)
    }

    pub fn footprint_bits(&self) -> u64 {
        self.retr.footprint_bits()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn lists_track_positions() {
        let mut by = Backyard::new(16, 4, 40, 1).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        for p in 0..8 {
            by.insert(100 + p as u64, p, p % 4, &mut rng).unwrap();
        }
        assert_eq!(by.list(1), vec![5, 1]);
        assert_eq!(by.position(103), 3);
        by.remove(105, 5, 1).unwrap();
        assert_eq!(by.list(1), vec![1]);
        by.remove(101, 1, 1).unwrap();
        assert_eq!(by.head(1), None);
        assert_eq!(by.list(2), vec![6, 2]);
        by.remove(102, 2, 2).unwrap();
        assert_eq!(by.list(2), vec![6]);
        assert_eq!(by.min_list_len(), 0);
        assert!(!by.contains(101));
        assert_eq!(by.entries(), 5);
    }
}
