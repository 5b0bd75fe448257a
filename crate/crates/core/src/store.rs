//! Fixed-width cell memories.
//!
//! [`WordStore`] is the read side of a memory of `cell_count` cells of
//! `cell_bits` bits. Mutation goes through [`CellBatch`]: a structure that
//! updates itself first collects every write, then the owner commits the
//! batch in one step, so no reader ever observes a half-applied update.

use std::collections::HashMap;

pub trait WordStore {
    fn cell_bits(&self) -> u32;
    fn cell_count(&self) -> usize;
    fn read(&self, cell: usize) -> u64;

    /// Hint that `cell` is about to be read.
    #[inline]
    fn prefetch(&self, _cell: usize) {}
}

/// A pending set of cell writes, in write order with the final value per cell.
#[derive(Clone, Debug, Default)]
pub struct CellBatch {
    order: Vec<usize>,
    values: HashMap<usize, u64>,
}

impl CellBatch {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn write(&mut self, cell: usize, value: u64) {
        if self.values.insert(cell, value).is_none() {
            self.order.push(cell);
        }
    }

    pub fn get(&self, cell: usize) -> Option<u64> {
        self.values.get(&cell).copied()
    }

    pub fn is_empty(&self) -> bool {
        self.order.is_empty()
    }

    pub fn len(&self) -> usize {
        self.order.len()
    }

    pub fn iter(&self) -> impl Iterator<Item = (usize, u64)> + '_ {
        self.order.iter().map(move |c| (*c, self.values[c]))
    }

    pub fn clear(&mut self) {
        self.order.clear();
        self.values.clear();
    }
}

/// Reads through a pending batch onto its base store.
pub struct Overlay<'a, S: WordStore + ?Sized> {
    pub base: &'a S,
    pub pending: &'a CellBatch,
}

impl<S: WordStore + ?Sized> WordStore for Overlay<'_, S> {
    fn cell_bits(&self) -> u32 {
        self.base.cell_bits()
    }

    fn cell_count(&self) -> usize {
        self.base.cell_count()
    }

    fn read(&self, cell: usize) -> u64 {
        self.pending.get(cell).unwrap_or_else(|| self.base.read(cell))
    }
}

/// Plain array memory.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ScratchStore {
    cells: Vec<u64>,
    bits: u32,
}

impl ScratchStore {
    pub fn new(cell_count: usize, cell_bits: u32) -> Self {
        assert!((1..=64).contains(&cell_bits), "cell width {cell_bits}");
        ScratchStore {
            cells: vec![0; cell_count],
            bits: cell_bits,
        }
    }

    pub fn write(&mut self, cell: usize, value: u64) {
        debug_assert!(self.bits == 64 || value >> self.bits == 0, "value wider than cell");
        self.cells[cell] = value;
    }

    pub fn commit(&mut self, batch: &CellBatch) {
        for (c, v) in batch.iter() {
            self.write(c, v);
        }
    }
}

impl WordStore for ScratchStore {
    fn cell_bits(&self) -> u32 {
        self.bits
    }

    fn cell_count(&self) -> usize {
        self.cells.len()
    }

    #[inline]
    fn read(&self, cell: usize) -> u64 {
        self.cells[cell]
    }

    #[inline]
    fn prefetch(&self, cell: usize) {
        #[cfg(target_arch = "x86_64")]
        if let Some(c) = self.cells.get(cell) {
            // SAFETY: prefetching is a hint and never faults; the pointer is in bounds.
            unsafe { std::arch::x86_64::_mm_prefetch::<{ std::arch::x86_64::_MM_HINT_T0 }>((c as *const u64).cast()) }
        }
        #[cfg(not(target_arch = "x86_64"))]
        let _ = cell;
    }
}

/// Splits cell values into little-endian digits of `digit_bits` bits.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct DigitCodec {
    pub digit_bits: u32,
    pub digits: usize,
}

impl DigitCodec {
    pub fn new(value_bits: u32, digit_bits: u32) -> Self {
        assert!((1..=32).contains(&digit_bits));
        let digits = value_bits.div_ceil(digit_bits).max(1) as usize;
        DigitCodec { digit_bits, digits }
    }

    #[inline]
    pub fn digit(&self, value: u64, k: usize) -> u32 {
        let shift = k as u32 * self.digit_bits;
        if shift >= 64 {
            0
        } else {
            ((value >> shift) & ((1u64 << self.digit_bits) - 1)) as u32
        }
    }

    #[inline]
    pub fn assemble(&self, digits: impl IntoIterator<Item = u32>) -> u64 {
        let mut v = 0u64;
        for (k, d) in digits.into_iter().enumerate() {
            let shift = k as u32 * self.digit_bits;
            if shift < 64 {
                v |= (d as u64) << shift;
            }
        }
        v
    }
}
