//! Advanced RAM: a dense basic RAM (group 0) plus a sparse one (group 1)
//! that buffers recent writes.
//!
//! Word `i < mB/10` reads from the sparse RAM when its sparse word is set
//! and from the dense RAM otherwise. The sparse words past the user region
//! hold a ring of pending word indices together with head and tail cells.
//! Every write lands in the sparse RAM and is then followed by a drain that
//! moves buffered words into the dense RAM under a fixed sample budget.
//!
//! Dense words and ring cells use 0 as the empty word. Buffered sparse words
//! store their value as-is, so a buffered 0 still reads as buffered.

use rand::Rng;

use crate::error::Failure;
use crate::ram::{bits_for, Frontyard, Shadow, WriteOutcome};

pub const DENSE: usize = 0;
pub const SPARSE: usize = 1;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AdvancedParams {
    /// Dense samples allowed per drain.
    pub drain_budget: u32,
    /// Samples allowed for one sparse word write.
    pub sparse_budget: u32,
    /// Samples allowed per word when re-encoding shadows or flushing.
    pub reencode_budget: u32,
    /// Ring occupancy may not exceed `queue_k * sqrt(B)`.
    pub queue_k: f64,
}

impl Default for AdvancedParams {
    fn default() -> Self {
        AdvancedParams { drain_budget: 100, sparse_budget: 100, reencode_budget: 100_000, queue_k: 8.0 }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct AdvancedStats {
    pub writes: u64,
    /// Drains that stopped with the ring still non-empty.
    pub nontrivial_writes: u64,
    /// Entries moved by those drains.
    pub nontrivial_drains: u64,
    pub drains: u64,
    pub high_water: usize,
    pub dense_giveups: u64,
    /// Sparse writes that ran out of samples.
    pub sparse_giveups: u64,
    pub dense_samples: u64,
    pub sparse_samples: u64,
}

/// Reads word `i` of group `g`, preferring a shadow copy.
pub fn read_basic(fy: &Frontyard, arr: &[u64], shadows: &[Shadow], g: usize, i: usize) -> Result<Option<u32>, Failure> {
    if let Some(s) = shadows.iter().find(|s| s.group == g && s.word == i) {
        return Ok(Some(s.value));
    }
    fy.read_word(arr, g, i)
}

/// Writes word `i` of group `g`; a shadow copy of the word is dropped.
#[allow(clippy::too_many_arguments)]
pub fn write_basic<R: Rng>(
    fy: &mut Frontyard,
    arr: &mut [u64],
    shadows: &mut Vec<Shadow>,
    g: usize,
    i: usize,
    v: Option<u32>,
    budget: u32,
    rng: &mut R,
) -> Result<WriteOutcome, Failure> {
    shadows.retain(|s| !(s.group == g && s.word == i));
    fy.write_word(arr, g, i, v, budget, rng)
}

/// Mutable view handed to the advanced RAM for one call.
pub struct RamCtx<'a, R> {
    pub fy: &'a mut Frontyard,
    pub arr: &'a mut [u64],
    pub shadows: &'a mut Vec<Shadow>,
    pub rng: &'a mut R,
}

#[derive(Clone, Debug, PartialEq)]
pub struct AdvancedRam {
    words: usize,
    digit_bits: u32,
    queue_base: usize,
    ptr_digits: usize,
    ring: usize,
    limit: usize,
    /// Copies of the ring pointers stored in the sparse RAM.
    head: usize,
    tail: usize,
    pub params: AdvancedParams,
    pub stats: AdvancedStats,
}

impl AdvancedRam {
    /// Layout over a two-group frontyard.
    pub fn new(fy: &Frontyard, params: AdvancedParams) -> Result<Self, Failure> {
        if fy.groups.len() != 2 {
            return Err(Failure::Structure("advanced RAM needs two groups"));
        }
        let per_group = fy.groups[SPARSE].word_count().min(fy.groups[DENSE].word_count());
        let words = fy.bins() * fy.bin_size() / 10;
        let digit_bits = fy.groups[SPARSE].domain().min(fy.groups[DENSE].domain()).trailing_zeros();
        if digit_bits == 0 || words == 0 || words >= per_group {
            return Err(Failure::Structure("advanced RAM too small"));
        }
        let ptr_bits = bits_for(words).max(bits_for(per_group));
        let ptr_digits = (ptr_bits as usize).div_ceil(digit_bits as usize);
        let queue_base = words;
        let ring = (per_group - queue_base).saturating_sub(2 * ptr_digits) / ptr_digits;
        if ring < 2 {
            return Err(Failure::Structure("no room for the buffer queue"));
        }
        let limit = (params.queue_k * (fy.bin_size() as f64).sqrt()).floor() as usize;
        Ok(AdvancedRam {
            words,
            digit_bits,
            queue_base,
            ptr_digits,
            ring,
            limit: limit.clamp(1, ring - 1),
            head: 0,
            tail: 0,
            params,
            stats: AdvancedStats::default(),
        })
    }

    pub fn words(&self) -> usize {
        self.words
    }

    /// Values are in `[0, domain)`.
    pub fn domain(&self) -> u32 {
        1 << self.digit_bits
    }

    pub fn digit_bits(&self) -> u32 {
        self.digit_bits
    }

    pub fn queue_limit(&self) -> usize {
        self.limit
    }

    pub fn ring_slots(&self) -> usize {
        self.ring
    }

    pub fn queue_base(&self) -> usize {
        self.queue_base
    }

    /// Sparse words used by the ring and its pointers.
    pub fn queue_words(&self) -> usize {
        (self.ring + 2) * self.ptr_digits
    }

    fn read_cell(&self, fy: &Frontyard, arr: &[u64], sh: &[Shadow], first: usize) -> Result<usize, Failure> {
        let mut v = 0usize;
        for j in 0..self.ptr_digits {
            let d = read_basic(fy, arr, sh, SPARSE, first + j)?.unwrap_or(0) as usize;
            v |= d << (j as u32 * self.digit_bits);
        }
        Ok(v)
    }

    fn write_cell<R: Rng>(&mut self, c: &mut RamCtx<'_, R>, first: usize, value: usize) -> Result<(), Failure> {
        let mask = (1usize << self.digit_bits) - 1;
        for j in 0..self.ptr_digits {
            let new = ((value >> (j as u32 * self.digit_bits)) & mask) as u32;
            let old = read_basic(c.fy, c.arr, c.shadows, SPARSE, first + j)?.unwrap_or(0);
            if old != new {
                let out = write_basic(
                    c.fy,
                    c.arr,
                    c.shadows,
                    SPARSE,
                    first + j,
                    (new != 0).then_some(new),
                    self.params.sparse_budget,
                    c.rng,
                )?;
                self.stats.sparse_samples += out.samples as u64;
                if !out.done {
                    self.stats.sparse_giveups += 1;
                    return Err(Failure::SampleBudget);
                }
            }
        }
        Ok(())
    }

    fn head_cell(&self) -> usize {
        self.queue_base
    }

    fn tail_cell(&self) -> usize {
        self.queue_base + self.ptr_digits
    }

    fn entry_cell(&self, e: usize) -> usize {
        self.queue_base + (2 + e) * self.ptr_digits
    }

    /// `(head, tail)` ring pointers.
    pub fn pointers(&self, _fy: &Frontyard, _arr: &[u64], _sh: &[Shadow]) -> Result<(usize, usize), Failure> {
        Ok((self.head, self.tail))
    }

    /// Ring pointers as decoded from the sparse RAM.
    pub fn stored_pointers(&self, fy: &Frontyard, arr: &[u64], sh: &[Shadow]) -> Result<(usize, usize), Failure> {
        let h = self.read_cell(fy, arr, sh, self.head_cell())?;
        let t = self.read_cell(fy, arr, sh, self.tail_cell())?;
        if h >= self.ring || t >= self.ring {
            return Err(Failure::Structure("ring pointer out of range"));
        }
        Ok((h, t))
    }

    pub fn occupancy(&self, fy: &Frontyard, arr: &[u64], sh: &[Shadow]) -> Result<usize, Failure> {
        let (h, t) = self.pointers(fy, arr, sh)?;
        Ok((t + self.ring - h) % self.ring)
    }

    /// Buffered word indices, oldest first.
    pub fn queue_contents(&self, fy: &Frontyard, arr: &[u64], sh: &[Shadow]) -> Result<Vec<usize>, Failure> {
        let (mut h, t) = self.stored_pointers(fy, arr, sh)?;
        let mut out = Vec::new();
        while h != t {
            out.push(self.read_cell(fy, arr, sh, self.entry_cell(h))?);
            h = (h + 1) % self.ring;
        }
        Ok(out)
    }

    fn push<R: Rng>(&mut self, c: &mut RamCtx<'_, R>, i: usize) -> Result<(), Failure> {
        let (h, t) = self.pointers(c.fy, c.arr, c.shadows)?;
        let occ = (t + self.ring - h) % self.ring;
        if occ + 1 > self.limit {
            return Err(Failure::QueueOverflow);
        }
        self.write_cell(c, self.entry_cell(t), i)?;
        self.write_cell(c, self.tail_cell(), (t + 1) % self.ring)?;
        self.tail = (t + 1) % self.ring;
        self.stats.high_water = self.stats.high_water.max(occ + 1);
        Ok(())
    }

    /// Value of advanced word `i`.
    pub fn read_at(&self, fy: &Frontyard, arr: &[u64], sh: &[Shadow], i: usize) -> Result<u32, Failure> {
        debug_assert!(i < self.words);
        match read_basic(fy, arr, sh, SPARSE, i)? {
            Some(v) => Ok(v),
            None => Ok(read_basic(fy, arr, sh, DENSE, i)?.unwrap_or(0)),
        }
    }

    pub fn write<R: Rng>(&mut self, c: &mut RamCtx<'_, R>, i: usize, v: u32) -> Result<(), Failure> {
        self.write_with_drain(c, i, v, self.params.drain_budget)
    }

    /// [`write`](Self::write) with an explicit drain budget.
    pub fn write_with_drain<R: Rng>(&mut self, c: &mut RamCtx<'_, R>, i: usize, v: u32, drain: u32) -> Result<(), Failure> {
        debug_assert!(i < self.words && v < self.domain());
        self.stats.writes += 1;
        if read_basic(c.fy, c.arr, c.shadows, SPARSE, i)?.is_none() {
            self.push(c, i)?;
        }
        let out = write_basic(c.fy, c.arr, c.shadows, SPARSE, i, Some(v), self.params.sparse_budget, c.rng)?;
        self.stats.sparse_samples += out.samples as u64;
        if !out.done {
            self.stats.sparse_giveups += 1;
            return Err(Failure::SampleBudget);
        }
        if drain > 0 {
            self.drain(c, drain)?;
        }
        Ok(())
    }

    /// Moves buffered words into the dense RAM until the ring empties or
    /// `budget` dense samples are spent. Returns the number moved.
    pub fn drain<R: Rng>(&mut self, c: &mut RamCtx<'_, R>, budget: u32) -> Result<usize, Failure> {
        let mut left = budget;
        let mut moved = 0usize;
        let (mut h, t) = self.pointers(c.fy, c.arr, c.shadows)?;
        while h != t && left > 0 {
            let i = self.read_cell(c.fy, c.arr, c.shadows, self.entry_cell(h))?;
            if i >= self.words {
                return Err(Failure::Structure("queued index out of range"));
            }
            let v = read_basic(c.fy, c.arr, c.shadows, SPARSE, i)?
                .ok_or(Failure::Structure("queued word is not buffered"))?;
            let out = write_basic(c.fy, c.arr, c.shadows, DENSE, i, (v != 0).then_some(v), left, c.rng)?;
            left = left.saturating_sub(out.samples);
            self.stats.dense_samples += out.samples as u64;
            if !out.done {
                self.stats.dense_giveups += 1;
                break;
            }
            write_basic(c.fy, c.arr, c.shadows, SPARSE, i, None, 0, c.rng)?;
            self.write_cell(c, self.entry_cell(h), 0)?;
            h = (h + 1) % self.ring;
            self.write_cell(c, self.head_cell(), h)?;
            self.head = h;
            moved += 1;
        }
        self.stats.drains += moved as u64;
        if h != t {
            self.stats.nontrivial_writes += 1;
            self.stats.nontrivial_drains += moved as u64;
        }
        Ok(moved)
    }

    /// Zeroes the ring pointers of an empty ring.
    pub fn reset_pointers<R: Rng>(&mut self, c: &mut RamCtx<'_, R>) -> Result<(), Failure> {
        if self.head != self.tail {
            return Err(Failure::Structure("reset of a non-empty ring"));
        }
        self.write_cell(c, self.head_cell(), 0)?;
        self.write_cell(c, self.tail_cell(), 0)?;
        self.head = 0;
        self.tail = 0;
        Ok(())
    }

    /// Drains until the ring is empty. Not counted as write traffic.
    pub fn flush<R: Rng>(&mut self, c: &mut RamCtx<'_, R>) -> Result<(), Failure> {
        let (nw, nd) = (self.stats.nontrivial_writes, self.stats.nontrivial_drains);
        let mut rounds = 0;
        while self.occupancy(c.fy, c.arr, c.shadows)? > 0 {
            self.drain(c, self.params.reencode_budget)?;
            rounds += 1;
            if rounds > self.ring {
                return Err(Failure::SampleBudget);
            }
        }
        self.stats.nontrivial_writes = nw;
        self.stats.nontrivial_drains = nd;
        Ok(())
    }
}

/// Re-encodes all pending shadows. A shadow whose write fails is kept.
pub fn reencode_shadows<R: Rng>(c: &mut RamCtx<'_, R>, budget: u32) -> Result<(), Failure> {
    while let Some(&s) = c.shadows.last() {
        match write_basic(c.fy, c.arr, c.shadows, s.group, s.word, Some(s.value), budget, c.rng) {
            Ok(out) if out.done => {}
            Ok(_) => {
                c.shadows.push(s);
                return Err(Failure::SampleBudget);
            }
            Err(f) => {
                c.shadows.push(s);
                return Err(f);
            }
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ram::testutil::filled;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn writes_read_back_through_buffer() {
        let (mut fy, mut arr) = filled(32, 64, 2, 7);
        let mut ram = AdvancedRam::new(&fy, AdvancedParams::default()).unwrap();
        let mut sh = Vec::new();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let words = ram.words();
        let mut expect = vec![0u32; words];
        for _ in 0..3000 {
            let i = rng.random_range(0..words);
            let v = rng.random_range(0..ram.domain());
            let mut c = RamCtx { fy: &mut fy, arr: &mut arr, shadows: &mut sh, rng: &mut rng };
            ram.write(&mut c, i, v).unwrap();
            expect[i] = v;
        }
        for (i, &e) in expect.iter().enumerate() {
            assert_eq!(ram.read_at(&fy, &arr, &sh, i).unwrap(), e);
        }
        assert!(ram.stats.high_water <= ram.queue_limit());
        let mut c = RamCtx { fy: &mut fy, arr: &mut arr, shadows: &mut sh, rng: &mut rng };
        ram.flush(&mut c).unwrap();
        assert_eq!(ram.occupancy(&fy, &arr, &sh).unwrap(), 0);
        for (i, &e) in expect.iter().enumerate() {
            assert_eq!(fy.read_word(&arr, SPARSE, i).unwrap(), None);
            assert_eq!(ram.read_at(&fy, &arr, &sh, i).unwrap(), e);
        }
        assert_eq!(fy.counted_selfloops(&arr), fy.maintained_selfloops());
    }

    #[test]
    fn zero_drain_builds_backlog_then_overflows() {
        let (mut fy, mut arr) = filled(32, 64, 2, 8);
        let mut ram = AdvancedRam::new(&fy, AdvancedParams::default()).unwrap();
        let mut sh = Vec::new();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let limit = ram.queue_limit();
        for i in 0..limit {
            let mut c = RamCtx { fy: &mut fy, arr: &mut arr, shadows: &mut sh, rng: &mut rng };
            ram.write_with_drain(&mut c, i, 1, 0).unwrap();
        }
        assert_eq!(ram.queue_contents(&fy, &arr, &sh).unwrap(), (0..limit).collect::<Vec<_>>());
        let mut c = RamCtx { fy: &mut fy, arr: &mut arr, shadows: &mut sh, rng: &mut rng };
        // Rewriting a buffered word does not grow the ring.
        ram.write_with_drain(&mut c, 0, 2, 0).unwrap();
        assert_eq!(ram.write_with_drain(&mut c, limit, 1, 0), Err(Failure::QueueOverflow));
        let moved = ram.drain(&mut c, 3).unwrap();
        assert!(moved > 0);
        assert_eq!(ram.stats.nontrivial_writes, 1);
        assert_eq!(ram.read_at(&fy, &arr, &sh, 0).unwrap(), 2);
    }
}
