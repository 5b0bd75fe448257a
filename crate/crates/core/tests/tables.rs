use partner_hashing::fixed::{FixedConfig, FixedTable, FIXED_C_PROBE};
use partner_hashing::resizable::{ResizableConfig, ResizableTable, RESIZABLE_C_PROBE};
use partner_hashing::trace::Op;
use partner_hashing::verify::{diff_step, Dictionary, ReferenceSet};
use partner_hashing::warmup::{WarmupConfig, WarmupTable, WARMUP_C_PROBE};
use proptest::prelude::*;

fn op_strategy(universe: u64) -> impl Strategy<Value = Op> {
    (0u8..3, 0..universe).prop_map(|(t, k)| match t {
        0 => Op::Insert(k),
        1 => Op::Delete(k),
        _ => Op::Query(k),
    })
}

/// Replays `ops`, checking every step against the reference and the slot
/// invariants after each one.
fn replay<T: Dictionary>(t: &mut T, reference: &mut ReferenceSet, ops: &[Op], c_probe: u32) -> Result<(), TestCaseError> {
    for (i, &op) in ops.iter().enumerate() {
        let probes = diff_step(t, reference, i, op).map_err(|d| TestCaseError::fail(d.to_string()))?;
        prop_assert!(probes <= c_probe, "op {i}: {probes} probes");
        let (lo, hi) = t.band();
        prop_assert!(t.len() >= lo && t.len() <= hi);
        let stored = t.slots().iter().filter(|&&k| k != partner_hashing::ram::EMPTY).count();
        prop_assert_eq!(stored, reference.len());
    }
    let v = t.validate();
    prop_assert!(v.is_ok(), "{:?}", v.failures().collect::<Vec<_>>());
    Ok(())
}

fn seeded(keys: std::ops::Range<u64>) -> ReferenceSet {
    let mut r = ReferenceSet::new();
    for k in keys {
        r.insert(k);
    }
    r
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn warmup_tracks_the_reference(seed in any::<u64>(), ops in proptest::collection::vec(op_strategy(4000), 0..400)) {
        let mut cfg = WarmupConfig::new(8, 256, seed);
        cfg.band_extra = 16;
        let n = cfg.target_count() as u64;
        let mut t = WarmupTable::build(cfg, &(0..n).collect::<Vec<_>>()).unwrap();
        let mut r = seeded(0..n);
        replay(&mut t, &mut r, &ops, WARMUP_C_PROBE)?;
    }

    #[test]
    fn fixed_tracks_the_reference(seed in any::<u64>(), full in any::<bool>(), ops in proptest::collection::vec(op_strategy(8000), 0..400)) {
        let n = 1 << 12;
        let fill = if full { n } else { n - 1 };
        let mut t = FixedTable::build(FixedConfig::new(n, seed), &(0..fill as u64).collect::<Vec<_>>()).unwrap();
        prop_assert!(t.core().frontyard().is_some());
        let mut r = seeded(0..fill as u64);
        replay(&mut t, &mut r, &ops, FIXED_C_PROBE)?;
    }

    #[test]
    fn small_fixed_tables_are_backyard_only(seed in any::<u64>(), ops in proptest::collection::vec(op_strategy(200), 0..300)) {
        let n = 64;
        let mut t = FixedTable::build(FixedConfig::new(n, seed), &(0..n as u64).collect::<Vec<_>>()).unwrap();
        prop_assert!(t.core().frontyard().is_none());
        let mut r = seeded(0..n as u64);
        replay(&mut t, &mut r, &ops, FIXED_C_PROBE)?;
    }

    #[test]
    fn resizable_tracks_the_reference(seed in any::<u64>(), ops in proptest::collection::vec(op_strategy(600), 0..1500)) {
        let mut t = ResizableTable::new(ResizableConfig::new(seed)).unwrap();
        let mut r = ReferenceSet::new();
        replay(&mut t, &mut r, &ops, RESIZABLE_C_PROBE)?;
        prop_assert_eq!(t.slots().len(), r.len());
    }

    #[test]
    fn fixed_words_survive_key_churn(seed in any::<u64>(), writes in proptest::collection::vec((0usize..200, 0u32..1000), 1..50)) {
        let n = 1 << 12;
        let mut t = FixedTable::build(FixedConfig::new(n, seed), &(0..n as u64).collect::<Vec<_>>()).unwrap();
        let mut r = ReferenceSet::new();
        let domain = t.word_domain();
        for (j, &(i, v)) in writes.iter().enumerate() {
            let v = v % domain;
            t.write_adv(i, v).unwrap();
            r.write_word(i, v as u64);
            let k = j as u64;
            t.delete(k).unwrap();
            t.insert(k + n as u64).unwrap();
        }
        for i in 0..200 {
            prop_assert_eq!(t.read_adv(i) as u64, r.read_word(i));
        }
        prop_assert!(t.validate().is_ok());
    }
}

#[test]
fn resizable_length_equals_key_count_through_growth_and_shrink() {
    let mut t = ResizableTable::new(ResizableConfig::new(4)).unwrap();
    let n = 40_000u64;
    for k in 0..n {
        t.insert(k).unwrap();
        assert_eq!(t.slots().len(), t.len());
    }
    assert!(t.validate().is_ok());
    for k in 0..n {
        t.delete(k).unwrap();
        assert_eq!(t.slots().len(), t.len());
        if k % 4096 == 0 {
            assert!(t.validate().is_ok(), "after {k} deletes");
        }
    }
    assert!(t.is_empty());
}
