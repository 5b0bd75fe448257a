//! Binned table with one encoded RAM group and empty slots at the end of
//! every bin.
//!
//! Bins are filled as prefixes. Per-bin counts `n_k` live in the encoded RAM
//! when there is room for them (otherwise next to the table), and the rest of
//! the RAM up to a quarter of its free words is offered to callers as plain
//! word storage.

use std::collections::HashSet;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{ConfigError, Failure, TableError};
use crate::hashing::SeedStream;
use crate::ram::{bits_for, Frontyard, FrontyardParams, Shadow, SlotMap, DEFAULT_INDEPENDENCE, EMPTY};
use crate::stats::TableStats;
use crate::verify::{sorted_keys, ValidationReport};

/// Worst-case slot probes of one query.
pub const WARMUP_C_PROBE: u32 = 2;

#[derive(Clone, Debug, PartialEq)]
pub struct WarmupConfig {
    /// Bin count `m`, a power of two.
    pub bins: usize,
    /// Bin size `B`, even.
    pub bin_size: usize,
    /// Fraction of slots left free; `None` means `min(B^-1/4, 1/4)`.
    pub slack: Option<f64>,
    /// Allowed deviation of the live count from its target.
    pub band_extra: usize,
    pub independence: usize,
    /// Reduced key universe is `capacity^key_exponent` (at most 60 bits).
    pub key_exponent: u32,
    pub sample_budget: u32,
    /// Reconstruction attempts allowed per failure before giving up.
    pub rebuild_cap: u32,
    /// Size of the caller word region; `None` picks the default.
    pub user_words: Option<usize>,
    pub seed: u64,
}

impl WarmupConfig {
    pub fn new(bins: usize, bin_size: usize, seed: u64) -> Self {
        WarmupConfig {
            bins,
            bin_size,
            slack: None,
            band_extra: 2,
            independence: DEFAULT_INDEPENDENCE,
            key_exponent: 3,
            sample_budget: 10_000,
            rebuild_cap: 32,
            user_words: None,
            seed,
        }
    }

    pub fn slots(&self) -> usize {
        self.bins * self.bin_size
    }

    pub fn slack_fraction(&self) -> f64 {
        self.slack
            .unwrap_or_else(|| (self.bin_size as f64).powf(-0.25).min(0.25))
    }

    pub fn target_count(&self) -> usize {
        (self.slots() as f64 * (1.0 - self.slack_fraction())).round() as usize
    }

    /// Inclusive range of supported live counts.
    pub fn band(&self) -> (usize, usize) {
        let t = self.target_count();
        (t.saturating_sub(self.band_extra), (t + self.band_extra).min(self.slots()))
    }

    fn check(&self) -> Result<(), ConfigError> {
        if self.bins < 4 || !self.bins.is_power_of_two() {
            return Err(ConfigError::Invalid(format!("bin count {} must be a power of two >= 4", self.bins)));
        }
        if self.bin_size < 4 || !self.bin_size.is_multiple_of(2) {
            return Err(ConfigError::Invalid(format!("bin size {} must be even and >= 4", self.bin_size)));
        }
        let s = self.slack_fraction();
        if !(0.0..0.5).contains(&s) {
            return Err(ConfigError::Invalid(format!("slack {s} outside [0, 1/2)")));
        }
        Ok(())
    }
}

/// How initialization picks the self-loop a word is coupled with.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum PickPolicy {
    #[default]
    Random,
    /// Lowest-offset self-loop; makes layouts reproducible by an oracle.
    Lowest,
}

#[derive(Clone, Debug, PartialEq, Eq)]
enum Counters {
    Ram { digits: usize, digit_bits: u32 },
    Side(Vec<u32>),
}

#[derive(Clone, Debug)]
pub struct WarmupTable {
    cfg: WarmupConfig,
    arr: Vec<u64>,
    fy: Frontyard,
    counters: Counters,
    user_base: usize,
    user_words: usize,
    len: usize,
    rng: ChaCha8Rng,
    seeds: SeedStream,
    policy: PickPolicy,
    shadows: Vec<Shadow>,
    floor_breach: Option<usize>,
    op_samples: u64,
    stats: TableStats,
}

impl WarmupTable {
    /// Builds a table holding `keys`, which must be distinct and within the band.
    pub fn build(cfg: WarmupConfig, keys: &[u64]) -> Result<Self, TableError> {
        Self::build_with(cfg, keys, &[], PickPolicy::Random)
    }

    /// Builds with initial caller words and an explicit pick policy.
    pub fn build_with(cfg: WarmupConfig, keys: &[u64], user: &[u32], policy: PickPolicy) -> Result<Self, TableError> {
        cfg.check()?;
        let (lo, hi) = cfg.band();
        if keys.len() < lo || keys.len() > hi {
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
        let m = cfg.bins;
        let b = cfg.bin_size;
        let digit_bits = (m / 2).trailing_zeros();
        let words = (m / 2) * (b / 2);
        let digits = (bits_for(b + 1) as usize).div_ceil(digit_bits as usize);
        let (counters, counter_words) = if m * digits <= words / 2 {
            (Counters::Ram { digits, digit_bits }, m * digits)
        } else {
            (Counters::Side(vec![0; m]), 0)
        };
        let user_words = match cfg.user_words {
            Some(u) if counter_words + u > words => {
                return Err(ConfigError::Invalid(format!("{u} caller words do not fit in {words}")).into())
            }
            Some(u) => u,
            None => (words - counter_words) / 4,
        };
        if user.len() > user_words {
            return Err(ConfigError::Invalid("too many initial words".into()).into());
        }
        let domain = (m / 2) as u32;
        if user.iter().any(|&v| v >= domain) {
            return Err(ConfigError::Invalid(format!("word values must be below {domain}")).into());
        }
        let mut seeds = SeedStream::new(cfg.seed);
        let rng = ChaCha8Rng::seed_from_u64(seeds.next_seed());
        let fy = Frontyard::new(Self::fy_params(&cfg, seeds.next_seed()))?;
        let mut t = WarmupTable {
            arr: vec![EMPTY; cfg.slots()],
            fy,
            counters,
            user_base: counter_words,
            user_words,
            len: 0,
            rng,
            seeds,
            policy,
            shadows: Vec::new(),
            floor_breach: None,
            op_samples: 0,
            stats: TableStats::default(),
            cfg,
        };
        let mut image = vec![0u32; user_words];
        image[..user.len()].copy_from_slice(user);
        let seed = t.fy_seed_initial();
        match t.init(keys, &image, seed) {
            Ok(()) => Ok(t),
            Err(f) => {
                t.stats.record_failure(f);
                t.rebuild_from(keys.to_vec(), image, f)?;
                Ok(t)
            }
        }
    }

    fn fy_seed_initial(&mut self) -> u64 {
        self.seeds.next_seed()
    }

    fn fy_params(cfg: &WarmupConfig, seed: u64) -> FrontyardParams {
        let key_bits = (bits_for(cfg.slots()) * cfg.key_exponent).clamp(8, 60);
        FrontyardParams {
            map: SlotMap::Contiguous { base: 0, bins: cfg.bins, bin_size: cfg.bin_size },
            groups: 1,
            independence: cfg.independence,
            key_bits,
            seed,
        }
    }

    /// Initialization from scratch with hash seed `seed`.
    fn init(&mut self, keys: &[u64], user: &[u32], seed: u64) -> Result<(), Failure> {
        self.fy = Frontyard::new(Self::fy_params(&self.cfg, seed)).map_err(|_| Failure::Structure("frontyard config"))?;
        self.arr.fill(EMPTY);
        self.shadows.clear();
        self.floor_breach = None;
        self.len = 0;
        let m = self.cfg.bins;
        let b = self.cfg.bin_size;
        let mut per_bin: Vec<Vec<u64>> = vec![Vec::new(); m];
        for &k in keys {
            let bin = self.fy.bin_of(k);
            per_bin[bin].push(k);
            if per_bin[bin].len() > b {
                return Err(Failure::BinOverflow { bin });
            }
        }
        if let Some(bin) = (0..m).find(|&k| per_bin[k].len() < b / 2) {
            return Err(Failure::BinUnderflow { bin });
        }
        for (bin, ks) in per_bin.iter().enumerate() {
            for (t, &k) in ks.iter().enumerate() {
                self.arr[self.fy.map.addr(bin, t)] = k;
                self.fy.offsets_insert(k, t, &mut self.rng)?;
            }
        }
        self.len = keys.len();
        self.fy.recount_selfloops(&self.arr);
        let mut image = vec![0u32; self.user_base];
        match &mut self.counters {
            Counters::Ram { digits, digit_bits } => {
                let mask = (1u32 << *digit_bits) - 1;
                for (bin, ks) in per_bin.iter().enumerate() {
                    for j in 0..*digits {
                        image[bin * *digits + j] = (ks.len() as u32 >> (j as u32 * *digit_bits)) & mask;
                    }
                }
            }
            Counters::Side(c) => {
                for (bin, ks) in per_bin.iter().enumerate() {
                    c[bin] = ks.len() as u32;
                }
            }
        }
        image.extend_from_slice(user);
        for (i, &v) in image.iter().enumerate() {
            if v != 0 {
                self.encode_fresh(i, v)?;
            }
        }
        if self.fy.min_selfloops() < (b / 4) as u32 {
            let g = &self.fy.groups[0];
            let ord = (0..g.bins / 2).min_by_key(|&o| g.selfloops(o)).unwrap_or(0);
            return Err(Failure::SelfLoopShortage { bin: g.partner_first() + ord });
        }
        Ok(())
    }

    fn encode_fresh(&mut self, i: usize, v: u32) -> Result<(), Failure> {
        match self.policy {
            PickPolicy::Lowest => self.fy.write_word_lowest(&mut self.arr, 0, i, Some(v)),
            PickPolicy::Random => {
                let out = self
                    .fy
                    .write_word(&mut self.arr, 0, i, Some(v), self.cfg.sample_budget, &mut self.rng)?;
                self.stats.samples += out.samples as u64;
                if out.done {
                    Ok(())
                } else {
                    Err(Failure::SampleBudget)
                }
            }
        }
    }

    fn rebuild_from(&mut self, keys: Vec<u64>, user: Vec<u32>, first: Failure) -> Result<(), TableError> {
        let mut last = first;
        self.stats.rebuilds += 1;
        for _ in 0..self.cfg.rebuild_cap {
            self.stats.rebuild_attempts += 1;
            let seed = self.seeds.next_seed();
            match self.init(&keys, &user, seed) {
                Ok(()) => return Ok(()),
                Err(f) => {
                    self.stats.record_failure(f);
                    last = f;
                }
            }
        }
        Err(TableError::RebuildCapExceeded { cap: self.cfg.rebuild_cap, last })
    }

    fn snapshot_user(&self) -> Vec<u32> {
        (0..self.user_words)
            .map(|i| self.word(self.user_base + i).unwrap_or(0))
            .collect()
    }

    /// Rebuilds after a failure, keeping every key except `drop` and adding `add`.
    fn recover(&mut self, f: Failure, add: Option<u64>, drop: Option<u64>, word: Option<(usize, u32)>) -> Result<(), TableError> {
        self.stats.record_failure(f);
        let mut keys: Vec<u64> = self.arr.iter().copied().filter(|&k| k != EMPTY && Some(k) != drop).collect();
        if let Some(a) = add {
            if !keys.contains(&a) {
                keys.push(a);
            }
        }
        let mut user = self.snapshot_user();
        if let Some((i, v)) = word {
            user[i] = v;
        }
        self.rebuild_from(keys, user, f)
    }

    fn finish_op(&mut self) -> Result<(), TableError> {
        self.stats.max_op_samples = self.stats.max_op_samples.max(self.op_samples);
        self.op_samples = 0;
        if let Some(bin) = self.floor_breach.take() {
            return self.recover(Failure::SelfLoopShortage { bin }, None, None, None);
        }
        Ok(())
    }

    /// Word `i` of the RAM, consulting shadow copies; empty reads as 0.
    pub fn word(&self, i: usize) -> Result<u32, Failure> {
        if let Some(s) = self.shadows.iter().find(|s| s.word == i) {
            return Ok(s.value);
        }
        Ok(self.fy.read_word(&self.arr, 0, i)?.unwrap_or(0))
    }

    fn set_word(&mut self, i: usize, v: u32) -> Result<(), Failure> {
        let out = self.fy.write_word(
            &mut self.arr,
            0,
            i,
            (v != 0).then_some(v),
            self.cfg.sample_budget,
            &mut self.rng,
        )?;
        self.stats.samples += out.samples as u64;
        self.op_samples += out.samples as u64;
        if !out.done {
            return Err(Failure::SampleBudget);
        }
        self.shadows.retain(|s| s.word != i);
        if v != 0 {
            let g = &self.fy.groups[0];
            let bin = g.partner_first() + (v ^ g.shift(i)) as usize;
            self.watch_floor(bin);
        }
        Ok(())
    }

    fn watch_floor(&mut self, bin: usize) {
        let g = &self.fy.groups[0];
        if let Some(ord) = g.partner_ordinal(bin) {
            if (g.selfloops(ord) as usize) < self.cfg.bin_size / 4 {
                self.floor_breach = Some(bin);
            }
        }
    }

    /// Occupancy `n_k` of bin `k`.
    pub fn bin_count(&self, k: usize) -> Result<u32, Failure> {
        match &self.counters {
            Counters::Side(c) => Ok(c[k]),
            Counters::Ram { digits, digit_bits } => {
                let mut v = 0u32;
                for j in 0..*digits {
                    v |= self.word(k * digits + j)? << (j as u32 * digit_bits);
                }
                Ok(v)
            }
        }
    }

    fn set_bin_count(&mut self, k: usize, v: u32) -> Result<(), Failure> {
        match &mut self.counters {
            Counters::Side(c) => {
                c[k] = v;
                Ok(())
            }
            Counters::Ram { digits, digit_bits } => {
                let (d, bits) = (*digits, *digit_bits);
                let mask = (1u32 << bits) - 1;
                for j in 0..d {
                    let new = (v >> (j as u32 * bits)) & mask;
                    if self.word(k * d + j)? != new {
                        self.set_word(k * d + j, new)?;
                    }
                }
                Ok(())
            }
        }
    }

    /// Slot holding `x`, with the number of slot probes made.
    pub fn query(&self, x: u64) -> (Option<usize>, u32) {
        if x == EMPTY {
            return (None, 0);
        }
        self.fy.lookup(&self.arr, x)
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
        if self.len >= self.cfg.band().1 {
            return Err(TableError::OutOfBand);
        }
        match self.try_insert(x) {
            Ok(()) => self.finish_op(),
            Err(f) => {
                self.op_samples = 0;
                self.recover(f, Some(x), None, None)
            }
        }
    }

    fn try_insert(&mut self, x: u64) -> Result<(), Failure> {
        let k = self.fy.bin_of(x);
        let nk = self.bin_count(k)? as usize;
        if nk >= self.cfg.bin_size {
            return Err(Failure::BinOverflow { bin: k });
        }
        let s = self.fy.map.addr(k, nk);
        self.arr[s] = x;
        if let Err(f) = self.fy.offsets_insert(x, nk, &mut self.rng) {
            self.arr[s] = EMPTY;
            return Err(f);
        }
        self.len += 1;
        self.fy.note_selfloop(k, 1);
        self.set_bin_count(k, nk as u32 + 1)
    }

    pub fn delete(&mut self, x: u64) -> Result<(), TableError> {
        if !self.contains(x) {
            return Err(TableError::NotPresent(x));
        }
        if self.len <= self.cfg.band().0 {
            return Err(TableError::OutOfBand);
        }
        match self.try_delete(x) {
            Ok(()) => self.finish_op(),
            Err(f) => {
                self.op_samples = 0;
                self.recover(f, None, Some(x), None)
            }
        }
    }

    fn try_delete(&mut self, x: u64) -> Result<(), Failure> {
        let k = self.fy.bin_of(x);
        let nk = self.bin_count(k)? as usize;
        if nk <= self.cfg.bin_size / 2 {
            return Err(Failure::BinUnderflow { bin: k });
        }
        let t = self.fy.offset_of(x);
        let s_last = self.fy.map.addr(k, nk - 1);
        let occ = self.arr[s_last];
        let y = if self.fy.bin_of(occ) == k { occ } else { self.arr[self.fy.logical_address(occ)] };
        self.shadows.clear();
        if let Some(sh) = self.fy.decouple(&mut self.arr, x)? {
            self.shadows.push(sh);
        }
        if y != x {
            if let Some(sh) = self.fy.decouple(&mut self.arr, y)? {
                self.shadows.push(sh);
            }
            self.arr[self.fy.map.addr(k, t)] = y;
            self.fy.offsets_update(y, t)?;
        }
        self.arr[s_last] = EMPTY;
        self.fy.offsets_delete(x)?;
        self.len -= 1;
        self.fy.note_selfloop(k, -1);
        self.watch_floor(k);
        self.set_bin_count(k, nk as u32 - 1)?;
        while let Some(&sh) = self.shadows.last() {
            self.set_word(sh.word, sh.value)?;
        }
        Ok(())
    }

    /// Caller word `i`, in `[m/2)`.
    pub fn read_user(&self, i: usize) -> u32 {
        assert!(i < self.user_words, "caller word {i} out of range");
        self.word(self.user_base + i).unwrap_or(0)
    }

    pub fn write_user(&mut self, i: usize, v: u32) -> Result<(), TableError> {
        assert!(i < self.user_words, "caller word {i} out of range");
        if v >= self.word_domain() {
            return Err(ConfigError::Invalid(format!("word value {v} out of domain")).into());
        }
        match self.set_word(self.user_base + i, v) {
            Ok(()) => self.finish_op(),
            Err(f) => {
                self.op_samples = 0;
                self.recover(f, None, None, Some((i, v)))
            }
        }
    }

    /// Scans all counters for a breached bound and rebuilds if one is found.
    pub fn check_failure_and_rebuild(&mut self) -> Result<bool, TableError> {
        let b = self.cfg.bin_size as u32;
        for k in 0..self.cfg.bins {
            let c = self.bin_count(k).unwrap_or(0);
            let f = if c > b {
                Some(Failure::BinOverflow { bin: k })
            } else if c < b / 2 {
                Some(Failure::BinUnderflow { bin: k })
            } else {
                None
            };
            if let Some(f) = f {
                self.recover(f, None, None, None)?;
                return Ok(true);
            }
        }
        let g = &self.fy.groups[0];
        if let Some(ord) = (0..g.bins / 2).find(|&o| g.selfloops(o) < b / 4) {
            let bin = g.partner_first() + ord;
            self.recover(Failure::SelfLoopShortage { bin }, None, None, None)?;
            return Ok(true);
        }
        Ok(false)
    }

    /// Test hook: treat the current state as failed and rebuild once.
    pub fn inject_failure(&mut self) -> Result<(), TableError> {
        self.recover(Failure::Structure("injected"), None, None, None)
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn capacity(&self) -> usize {
        self.arr.len()
    }

    pub fn config(&self) -> &WarmupConfig {
        &self.cfg
    }

    pub fn stats(&self) -> &TableStats {
        &self.stats
    }

    pub fn slots(&self) -> &[u64] {
        &self.arr
    }

    pub fn frontyard(&self) -> &Frontyard {
        &self.fy
    }

    pub fn word_count(&self) -> usize {
        self.fy.groups[0].word_count()
    }

    pub fn word_domain(&self) -> u32 {
        self.fy.groups[0].domain()
    }

    pub fn user_words(&self) -> usize {
        self.user_words
    }

    /// First word of the caller region; words below it hold counters.
    pub fn user_base(&self) -> usize {
        self.user_base
    }

    pub fn counters_in_ram(&self) -> bool {
        matches!(self.counters, Counters::Ram { .. })
    }

    /// Every RAM word as currently decoded (0 for empty).
    pub fn word_image(&self) -> Vec<u32> {
        (0..self.word_count()).map(|i| self.word(i).unwrap_or(0)).collect()
    }

    pub fn min_selfloops(&self) -> u32 {
        self.fy.min_selfloops()
    }

    pub fn keys(&self) -> impl Iterator<Item = u64> + '_ {
        self.arr.iter().copied().filter(|&k| k != EMPTY)
    }

    /// Test hook: exchanges two slots without touching metadata.
    pub fn corrupt_swap(&mut self, a: usize, b: usize) {
        self.arr.swap(a, b);
    }

    pub fn validate(&self) -> ValidationReport {
        let mut r = ValidationReport::new();
        let b = self.cfg.bin_size;
        let m = self.cfg.bins;
        let map = self.fy.map;

        let (keys, dup) = sorted_keys(&self.arr, EMPTY);
        let mut dup = dup.map(|k| format!("key {k} repeated"));
        if dup.is_none() && keys.len() != self.len {
            dup = Some(format!("{} keys stored, count says {}", keys.len(), self.len));
        }
        r.record("permutation", dup);

        let (lo, hi) = self.cfg.band();
        r.record(
            "band",
            (self.len < lo || self.len > hi).then(|| format!("count {} outside [{lo}, {hi}]", self.len)),
        );

        let mut prefix = None;
        let mut counts = None;
        for k in 0..m {
            let occ = (0..b).take_while(|&t| self.arr[map.addr(k, t)] != EMPTY).count();
            if prefix.is_none() {
                if let Some(t) = (occ..b).find(|&t| self.arr[map.addr(k, t)] != EMPTY) {
                    prefix = Some(format!("bin {k}: slot {} occupied past prefix {occ}", map.addr(k, t)));
                }
            }
            if counts.is_none() {
                match self.bin_count(k) {
                    Ok(c) if c as usize == occ && occ >= b / 2 => {}
                    Ok(c) => counts = Some(format!("bin {k}: counter {c}, occupancy {occ}")),
                    Err(f) => counts = Some(format!("bin {k}: {f}")),
                }
            }
        }
        r.record("bin_prefix", prefix);
        r.record("bin_counters", counts);

        let mut inv = None;
        let mut loc = None;
        let g = &self.fy.groups[0];
        for (s, &x) in self.arr.iter().enumerate() {
            if x == EMPTY {
                continue;
            }
            let p = self.fy.find_partner(x);
            let back = self.fy.find_partner(self.arr[p]);
            if self.arr[p] == EMPTY || self.arr[back] != x {
                if inv.is_none() {
                    inv = Some(format!("slots {s} and {p}"));
                }
                continue;
            }
            if p != s && loc.is_none() {
                let (lb, lt) = map.locate(p).unwrap_or((usize::MAX, 0));
                let (pb, pt) = map.locate(s).unwrap_or((usize::MAX, 0));
                let ok = (g.word_at(lb, lt).is_some() && g.partner_ordinal(pb).is_some())
                    || (g.word_at(pb, pt).is_some() && g.partner_ordinal(lb).is_some());
                if !ok {
                    loc = Some(format!("pair at slots {s} and {p}"));
                }
            }
        }
        r.record("partner_involution", inv);
        r.record("pair_locality", loc);

        r.record(
            "selfloop_counters",
            (self.fy.counted_selfloops(&self.arr) != self.fy.maintained_selfloops())
                .then(|| "maintained self-loop counts differ from the array".to_string()),
        );
        let entries = self.fy.offsets_len();
        r.record(
            "retrieval_entries",
            (entries != self.len).then(|| format!("{entries} entries for {} keys", self.len)),
        );
        r.record(
            "index_slots",
            (0..g.word_count()).find_map(|i| {
                let (bb, t) = g.index_slot(i);
                (self.arr[map.addr(bb, t)] == EMPTY).then(|| format!("word {i}"))
            }),
        );
        r
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    fn keys(n: usize, seed: u64) -> Vec<u64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut s = HashSet::new();
        while s.len() < n {
            s.insert(rng.random_range(0..1u64 << 62));
        }
        s.into_iter().collect()
    }

    #[test]
    fn band_arithmetic() {
        let c = WarmupConfig::new(64, 256, 0);
        assert_eq!(c.slack_fraction(), 0.25);
        assert_eq!(c.target_count(), 12288);
        assert_eq!(c.band(), (12286, 12290));
    }

    #[test]
    fn empty_words_give_logical_layout() {
        let cfg = WarmupConfig { user_words: Some(0), ..WarmupConfig::new(4, 8, 1) };
        let ks = keys(cfg.target_count(), 1);
        let t = WarmupTable::build(cfg, &ks).unwrap();
        assert!(!t.counters_in_ram());
        for (s, &x) in t.slots().iter().enumerate() {
            if x != EMPTY {
                assert_eq!(t.frontyard().find_partner(x), s);
            }
        }
        assert!(t.validate().is_ok(), "{}", t.validate());
    }

    #[test]
    fn churn_keeps_invariants() {
        let cfg = WarmupConfig::new(32, 64, 7);
        let mut ks = keys(cfg.target_count(), 2);
        let mut t = WarmupTable::build(cfg.clone(), &ks).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut words = vec![0u32; t.user_words()];
        for step in 0..4000 {
            match step % 3 {
                0 if t.len() > cfg.band().0 => {
                    let j = rng.random_range(0..ks.len());
                    let x = ks.swap_remove(j);
                    t.delete(x).unwrap();
                }
                1 if t.len() < cfg.band().1 => {
                    let x = rng.random_range(0..1u64 << 62);
                    if !ks.contains(&x) {
                        t.insert(x).unwrap();
                        ks.push(x);
                    }
                }
                _ => {
                    let i = rng.random_range(0..words.len());
                    let v = rng.random_range(0..t.word_domain());
                    t.write_user(i, v).unwrap();
                    words[i] = v;
                }
            }
            if step % 500 == 0 {
                let rep = t.validate();
                assert!(rep.is_ok(), "step {step}: {rep}");
                for &x in &ks {
                    assert!(t.contains(x));
                }
                for (i, &w) in words.iter().enumerate() {
                    assert_eq!(t.read_user(i), w, "word {i}");
                }
            }
        }
    }

    #[test]
    fn corrupted_swap_breaks_involution() {
        let cfg = WarmupConfig::new(16, 64, 9);
        let ks = keys(cfg.target_count(), 4);
        let mut t = WarmupTable::build(cfg, &ks).unwrap();
        let a = t.frontyard().map.addr(3, 40);
        let b = t.frontyard().map.addr(5, 41);
        t.corrupt_swap(a, b);
        let rep = t.validate();
        let c = rep.get("partner_involution").unwrap();
        assert!(!c.passed);
    }

    #[test]
    fn injected_failure_rebuilds_once() {
        let cfg = WarmupConfig::new(16, 64, 11);
        let ks = keys(cfg.target_count(), 5);
        let mut t = WarmupTable::build(cfg, &ks).unwrap();
        t.write_user(3, 5).unwrap();
        let before = t.stats().rebuilds;
        t.inject_failure().unwrap();
        assert_eq!(t.stats().rebuilds, before + 1);
        assert_eq!(t.read_user(3), 5);
        for &x in &ks {
            assert!(t.contains(x));
        }
        assert!(!t.check_failure_and_rebuild().unwrap());
    }
}
