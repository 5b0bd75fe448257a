//! Acceptance run: one PASS/FAIL line per criterion.
//!
//! `ACCEPTANCE_OPS` shrinks the trace length for quick local runs; the
//! verdicts only count at the default of 10^6.

use std::collections::HashMap;
use std::process::ExitCode;
use std::time::Instant;

use partner_bench::runner::{build_table, replay, run, AnyTable, Outcome, RunConfig, Variant};
use partner_hashing::fixed::{FixedConfig, FixedGeometry, FixedTable};
use partner_hashing::ram::DEFAULT_INDEPENDENCE;
use partner_hashing::retrieval::{Retrieval, RetrievalParams};
use partner_hashing::store::{CellBatch, ScratchStore};
use partner_hashing::trace::{initial_fill, Profile};
use partner_hashing::verify::ReferenceSet;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const SEEDS: [u64; 5] = [1, 2, 3, 4, 5];
const PROFILES: [Profile; 3] = [Profile::Churn, Profile::GrowShrink, Profile::QueryHeavy];
const VARIANTS: [Variant; 3] = [Variant::Warmup, Variant::Fixed, Variant::Resizable];
const RUNTIME_TARGET_SECS: f64 = 300.0;
const BIG_N: usize = 1 << 20;
const BIG_B: usize = 1 << 12;
const MAX_REBUILDS_PER_MILLION: f64 = 3.0;
const QUEUE_FACTOR: f64 = 8.0;
const MAX_SPARSE_GIVEUP_RATE: f64 = 1e-4;
const MIN_MEAN_DRAINS: f64 = 20.0;
const BETA_TOLERANCE: f64 = 0.10;

struct Verdicts {
    failed: bool,
}

impl Verdicts {
    fn line(&mut self, n: u32, name: &str, pass: bool, detail: String) {
        self.failed |= !pass;
        println!("criterion {n} ({name}): {} {detail}", if pass { "PASS" } else { "FAIL" });
    }
}

fn ops_scale() -> usize {
    std::env::var("ACCEPTANCE_OPS").ok().and_then(|s| s.parse().ok()).unwrap_or(1_000_000)
}

struct Run {
    label: String,
    out: Outcome,
    secs: f64,
}

fn timed(label: String, f: impl FnOnce() -> Outcome) -> Run {
    let t = Instant::now();
    let out = f();
    let secs = t.elapsed().as_secs_f64();
    let r = &out.report;
    eprintln!(
        "  {label}: {} in {secs:.1}s, probe_max {}, checks {}, rebuilds {}",
        r.status, r.probe_max(), r.checks, r.rebuilds
    );
    Run { label, out, secs }
}

fn differential_runs(ops: usize) -> Vec<Run> {
    let mut runs = Vec::new();
    for v in VARIANTS {
        for p in PROFILES {
            for seed in SEEDS {
                let mut cfg = RunConfig::new(v, ops, seed, p);
                cfg.check_every = if v == Variant::Resizable { 1 << 10 } else { 1 << 14 };
                let trace = cfg.generate().expect("config");
                runs.push(timed(format!("{v}/{p}/{seed}"), || run(&cfg, &trace).expect("config")));
            }
        }
    }
    runs
}

fn exact_geometry() -> FixedGeometry {
    let bins = 128;
    FixedGeometry { slots: BIG_N, bins, bin_size: BIG_B, backyard: BIG_N - bins * BIG_B }
}

/// Fixed `N = 2^20` churn, once with the planned geometry and once with
/// bins of exactly `2^12` slots.
fn big_fixed_runs(ops: usize) -> Vec<Run> {
    let mut runs = Vec::new();
    for seed in [1, 2] {
        for exact in [false, true] {
            let mut cfg = RunConfig::new(Variant::Fixed, BIG_N + ops, seed, Profile::Churn);
            cfg.capacity = Some(BIG_N);
            cfg.bin_size = Some(BIG_B);
            cfg.check_every = 1 << 14;
            let trace = cfg.generate().expect("config");
            let label = format!("fixed N=2^20 {} seed {seed}", if exact { "B=4096" } else { "planned" });
            runs.push(timed(label, || {
                let (table, start) = if exact {
                    let mut fc = FixedConfig::new(BIG_N, seed);
                    fc.geometry = Some(exact_geometry());
                    let fill = initial_fill(&trace);
                    let t = FixedTable::build(fc, &fill).expect("build");
                    (AnyTable::Fixed(t), fill.len())
                } else {
                    build_table(&cfg, &trace).expect("build")
                };
                replay(&cfg, table, start, &trace)
            }));
        }
    }
    runs
}

fn criterion_1(v: &mut Verdicts, runs: &[Run]) {
    let bad: Vec<&str> = runs
        .iter()
        .filter(|r| r.out.report.status != "ok" || r.out.report.divergences > 0)
        .map(|r| r.label.as_str())
        .collect();
    let mut times = Vec::new();
    let mut slow = Vec::new();
    for var in VARIANTS {
        let t: f64 = runs.iter().filter(|r| r.label.starts_with(var.name())).map(|r| r.secs).sum();
        times.push(format!("{var}={t:.0}s"));
        if t > RUNTIME_TARGET_SECS {
            slow.push(var.name());
        }
    }
    v.line(
        1,
        "differential correctness",
        bad.is_empty(),
        format!(
            "runs={} failing={:?} runtime[{}] target<{RUNTIME_TARGET_SECS:.0}s/variant over_target={:?}",
            runs.len(),
            bad,
            times.join(" "),
            slow
        ),
    );
}

fn criterion_2(v: &mut Verdicts, runs: &[Run]) {
    let rs: Vec<&Run> = runs.iter().filter(|r| r.label.starts_with("resizable")).collect();
    let lf: u64 = rs.iter().map(|r| r.out.report.load_factor_violations).sum();
    let checks: u64 = rs.iter().map(|r| r.out.report.checks).sum();
    let failed = rs.iter().filter(|r| r.out.report.status != "ok").count();
    let period = rs.iter().all(|r| r.out.report.check_every == 1 << 10);
    v.line(
        2,
        "resizable load factor 1",
        lf == 0 && failed == 0 && period,
        format!("length_mismatches={lf} validator_checks={checks} failed_runs={failed} period=1024"),
    );
}

fn criterion_3(v: &mut Verdicts, runs: &[Run], big: &[Run]) {
    let fx: Vec<&Run> = runs.iter().filter(|r| r.label.starts_with("fixed")).chain(big).collect();
    let occ: u64 = fx.iter().map(|r| r.out.report.occupancy_violations).sum();
    let ops: u64 = fx.iter().map(|r| r.out.report.ops_done).sum();
    v.line(3, "fixed occupancy in {N-1, N}", occ == 0, format!("violations={occ} ops={ops}"));
}

fn criterion_4(v: &mut Verdicts, runs: &[Run], big: &[Run]) {
    let mut parts = Vec::new();
    let mut pass = true;
    for var in VARIANTS {
        let rs: Vec<&Run> = runs.iter().chain(big).filter(|r| r.label.starts_with(var.name())).collect();
        let max = rs.iter().map(|r| r.out.report.probe_max()).max().unwrap_or(0);
        let viol: u64 = rs.iter().map(|r| r.out.report.probe_violations).sum();
        pass &= viol == 0 && max <= var.c_probe();
        parts.push(format!("{var} max={max}/{}", var.c_probe()));
    }
    v.line(4, "probe bound", pass, parts.join(" "));
}

fn criterion_5(v: &mut Verdicts) {
    let ops = 100_000;
    let n = 1 << 16;
    let mut rng = ChaCha8Rng::seed_from_u64(55);
    let mut keys: Vec<u64> = Vec::with_capacity(n);
    let mut oracle = ReferenceSet::new();
    while keys.len() < n {
        let k = rng.random::<u64>() >> 2;
        if oracle.insert(k) {
            keys.push(k);
        }
    }
    let mut t = FixedTable::build(FixedConfig::new(n, 55), &keys).expect("build");
    let words = t.user_words();
    let domain = t.word_domain();
    let (mut reads, mut writes, mut key_ops, mut mismatches) = (0u64, 0u64, 0u64, 0u64);
    let mut first: Option<String> = None;
    let mut delete_next = true;
    for step in 0..ops {
        let r: f64 = rng.random();
        if r < 0.4 {
            let i = rng.random_range(0..words);
            let val = rng.random_range(0..domain);
            let drain = (rng.random_range(0..4) == 0).then_some(0);
            t.write_adv_with_drain(i, val, drain).expect("write_adv");
            oracle.write_word(i, val as u64);
            writes += 1;
        } else if r < 0.7 {
            let i = rng.random_range(0..words);
            let got = t.read_adv(i) as u64;
            reads += 1;
            if got != oracle.read_word(i) {
                mismatches += 1;
                first.get_or_insert(format!("op {step}: word {i} read {got}, oracle {}", oracle.read_word(i)));
            }
        } else {
            if delete_next {
                let k = keys.swap_remove(rng.random_range(0..keys.len()));
                t.delete(k).expect("delete");
                oracle.remove(k);
            } else {
                let k = loop {
                    let k = rng.random::<u64>() >> 2;
                    if !oracle.contains(k) {
                        break k;
                    }
                };
                t.insert(k).expect("insert");
                oracle.insert(k);
                keys.push(k);
            }
            delete_next = !delete_next;
            key_ops += 1;
            if t.len() != oracle.len() {
                mismatches += 1;
                first.get_or_insert(format!("op {step}: {} keys, oracle {}", t.len(), oracle.len()));
            }
        }
    }
    for i in 0..words {
        if t.read_adv(i) as u64 != oracle.read_word(i) {
            mismatches += 1;
            first.get_or_insert(format!("final sweep: word {i}"));
        }
    }
    let key_diff = oracle.keys().filter(|&k| !t.contains(k)).count();
    let valid = t.validate().is_ok();
    v.line(
        5,
        "word log equivalence",
        mismatches == 0 && key_diff == 0 && valid,
        format!(
            "ops={ops} reads={reads} writes={writes} key_ops={key_ops} words={words} mismatches={mismatches} \
             missing_keys={key_diff} validator={} {}",
            if valid { "ok" } else { "failed" },
            first.unwrap_or_default()
        ),
    );
}

fn criterion_6(v: &mut Verdicts, runs: &[Run], big: &[Run]) {
    let gs: Vec<&Run> = runs.iter().filter(|r| r.label.starts_with("resizable/grow-shrink")).collect();
    let all: Vec<&Run> = big.iter().chain(gs.iter().copied()).collect();
    let mut pass = DEFAULT_INDEPENDENCE == 8;
    let mut parts = vec![format!("independence={DEFAULT_INDEPENDENCE}")];
    let mut total_rebuilds = 0u64;
    let mut total_ops = 0u64;
    for r in &all {
        let rep = &r.out.report;
        total_rebuilds += rep.rebuilds;
        total_ops += rep.ops_done;
        // Runs that rebuilt may dip below the bounds at the checkpoint before the rebuild.
        if rep.rebuilds > 0 {
            continue;
        }
        let slack = rep.selfloop_slack_min();
        let under = rep.failures.get("bin_underflow").copied().unwrap_or(0);
        let empty = rep.failures.get("overflow_list_empty").copied().unwrap_or(0);
        let ok = rep.status == "ok" && slack.is_some_and(|s| s >= 0) && under == 0 && empty == 0;
        pass &= ok;
        if !ok {
            parts.push(format!("{}: slack={slack:?} underflow={under} list_empty={empty}", r.label));
        }
    }
    let mins: Vec<String> = all
        .iter()
        .map(|r| r.out.report.selfloop_slack_min().map_or("-".into(), |s| s.to_string()).to_string())
        .collect();
    parts.push(format!("min_selfloop_slack[{}]", mins.join(",")));
    let grow_cross = gs.iter().all(|r| {
        let ns: Vec<u64> = r.out.report.timeline.iter().map(|p| p.n).collect();
        let lo = ns.iter().copied().min().unwrap_or(0);
        let hi = ns.iter().copied().max().unwrap_or(0);
        lo <= 1 << 14 && hi >= 1 << 17
    });
    pass &= grow_cross;
    parts.push(format!("resizable_spans_2^14..2^17={grow_cross}"));
    let per_million = total_rebuilds as f64 * 1e6 / total_ops.max(1) as f64;
    pass &= per_million <= MAX_REBUILDS_PER_MILLION;
    parts.push(format!("rebuilds={total_rebuilds} per_1e6_ops={per_million:.2} limit={MAX_REBUILDS_PER_MILLION}"));
    v.line(6, "bin and self-loop bounds", pass, parts.join(" "));
}

fn big_exact_table(seed: u64) -> (FixedTable, Vec<u64>, ChaCha8Rng) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut seen = std::collections::HashSet::new();
    let mut keys = Vec::with_capacity(BIG_N);
    while keys.len() < BIG_N {
        let k = rng.random::<u64>() >> 2;
        if seen.insert(k) {
            keys.push(k);
        }
    }
    let mut fc = FixedConfig::new(BIG_N, seed);
    fc.geometry = Some(exact_geometry());
    (FixedTable::build(fc, &keys).expect("build"), keys, rng)
}

fn criterion_7(v: &mut Verdicts, ops: usize) {
    let (mut t, mut keys, mut rng) = big_exact_table(77);
    let words = t.user_words();
    let domain = t.word_domain();
    let mut delete_next = true;
    for _ in 0..ops {
        if rng.random_bool(0.9) {
            let i = rng.random_range(0..words);
            let val = rng.random_range(0..domain);
            t.write_adv(i, val).expect("write_adv");
        } else {
            if delete_next {
                let k = keys.swap_remove(rng.random_range(0..keys.len()));
                t.delete(k).expect("delete");
            } else {
                let k = rng.random::<u64>() >> 2;
                if t.insert(k).is_ok() {
                    keys.push(k);
                } else {
                    continue;
                }
            }
            delete_next = !delete_next;
        }
    }
    let s = t.adv_stats();
    let limit = QUEUE_FACTOR * (BIG_B as f64).sqrt();
    let rate = s.sparse_giveups as f64 / s.writes.max(1) as f64;
    v.line(
        7,
        "queue and sparse budget",
        (s.high_water as f64) <= limit && rate < MAX_SPARSE_GIVEUP_RATE,
        format!(
            "writes={} high_water={} limit=8*sqrt({BIG_B})={limit:.0} sparse_giveups={} rate={rate:.2e} \
             limit_rate={MAX_SPARSE_GIVEUP_RATE:.0e} rebuilds={}",
            s.writes,
            s.high_water,
            s.sparse_giveups,
            t.stats().rebuilds
        ),
    );
}

fn criterion_8(v: &mut Verdicts, ops: usize) {
    let (mut t, _, mut rng) = big_exact_table(88);
    let words = t.user_words();
    let domain = t.word_domain();
    let burst = 200;
    for step in 0..ops {
        let i = rng.random_range(0..words);
        let val = rng.random_range(0..domain);
        let drain = ((step / burst) % 2 == 0).then_some(0);
        t.write_adv_with_drain(i, val, drain).expect("write_adv");
    }
    let s = t.adv_stats();
    let mean = s.nontrivial_drains as f64 / s.nontrivial_writes.max(1) as f64;
    v.line(
        8,
        "drain throughput",
        s.nontrivial_writes > 0 && mean >= MIN_MEAN_DRAINS,
        format!(
            "writes={} nontrivial_writes={} drained={} mean={mean:.1} min={MIN_MEAN_DRAINS}",
            s.writes, s.nontrivial_writes, s.nontrivial_drains
        ),
    );
}

struct RetrievalRun {
    errors: u64,
    beta: f64,
    first: Option<String>,
}

fn retrieval_churn(seed: u64, ops: usize) -> RetrievalRun {
    let cap = 1 << 16;
    let params = RetrievalParams { capacity: cap, key_bits: 60, value_bits: 16, seed };
    let r = Retrieval::new(params, 0).expect("params");
    let mut store = ScratchStore::new(r.cell_count(), r.cell_bits());
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed);
    let mut oracle: HashMap<u64, u64> = HashMap::new();
    let mut live: Vec<u64> = Vec::new();
    let mut errors = 0u64;
    let mut first = None;
    let fresh = |rng: &mut ChaCha8Rng, oracle: &HashMap<u64, u64>| loop {
        let k = rng.random::<u64>() >> 4;
        if !oracle.contains_key(&k) {
            break k;
        }
    };
    let insert = |store: &mut ScratchStore, rng: &mut ChaCha8Rng, oracle: &mut HashMap<u64, u64>, live: &mut Vec<u64>| {
        let k = fresh(rng, oracle);
        let val = rng.random_range(0..1u64 << 16);
        let mut b = CellBatch::new();
        let res = r.insert(&*store, &mut b, k, val, rng);
        store.commit(&b);
        if res.is_ok() {
            oracle.insert(k, val);
            live.push(k);
        }
        res.is_ok()
    };
    while live.len() < cap {
        if !insert(&mut store, &mut rng, &mut oracle, &mut live) {
            errors += 1;
            first.get_or_insert(format!("fill failed at {}", live.len()));
            break;
        }
    }
    for step in 0..ops {
        if step % 2 == 0 {
            let k = live.swap_remove(rng.random_range(0..live.len()));
            let mut b = CellBatch::new();
            if r.delete(&store, &mut b, k).is_err() {
                errors += 1;
                first.get_or_insert(format!("op {step}: delete of stored key failed"));
            }
            store.commit(&b);
            oracle.remove(&k);
            if r.contains(&store, k) {
                errors += 1;
                first.get_or_insert(format!("op {step}: deleted key still found"));
            }
        } else if !insert(&mut store, &mut rng, &mut oracle, &mut live) {
            errors += 1;
            first.get_or_insert(format!("op {step}: insert failed"));
        }
        let probe = live[rng.random_range(0..live.len())];
        if r.query(&store, probe) != oracle[&probe] {
            errors += 1;
            first.get_or_insert(format!("op {step}: wrong value"));
        }
        if step % 10_000 == 9_999 {
            let wrong = oracle.iter().filter(|(&k, &val)| r.query(&store, k) != val).count();
            errors += wrong as u64;
            if wrong > 0 {
                first.get_or_insert(format!("sweep at op {step}: {wrong} wrong values"));
            }
        }
    }
    let n = live.len() as f64;
    let beta = r.footprint_bits() as f64 / (n * (16.0 + n.log2().log2().ceil()));
    RetrievalRun { errors, beta, first }
}

fn criterion_9(v: &mut Verdicts) {
    let runs: Vec<RetrievalRun> = SEEDS.iter().map(|&s| retrieval_churn(s, 100_000)).collect();
    let errors: u64 = runs.iter().map(|r| r.errors).sum();
    let betas: Vec<f64> = runs.iter().map(|r| r.beta).collect();
    let mean = betas.iter().sum::<f64>() / betas.len() as f64;
    let spread = betas.iter().map(|b| (b - mean).abs() / mean).fold(0.0, f64::max);
    let first = runs.iter().find_map(|r| r.first.clone()).unwrap_or_default();
    let list: Vec<String> = betas.iter().map(|b| format!("{b:.3}")).collect();
    v.line(
        9,
        "retrieval exactness",
        errors == 0 && spread <= BETA_TOLERANCE,
        format!(
            "seeds={} errors={errors} beta=[{}] mean={mean:.3} max_dev={:.1}% tol={:.0}% {first}",
            SEEDS.len(),
            list.join(","),
            spread * 100.0,
            BETA_TOLERANCE * 100.0
        ),
    );
}

fn main() -> ExitCode {
    let ops = ops_scale();
    if ops != 1_000_000 {
        println!("note: ACCEPTANCE_OPS={ops}; verdicts below are for the reduced trace length");
    }
    let mut v = Verdicts { failed: false };
    eprintln!("differential runs");
    let runs = differential_runs(ops);
    eprintln!("fixed N=2^20 runs");
    let big = big_fixed_runs(ops);
    criterion_1(&mut v, &runs);
    criterion_2(&mut v, &runs);
    criterion_3(&mut v, &runs, &big);
    criterion_4(&mut v, &runs, &big);
    eprintln!("word log");
    criterion_5(&mut v);
    criterion_6(&mut v, &runs, &big);
    eprintln!("advanced RAM");
    criterion_7(&mut v, ops);
    criterion_8(&mut v, ops);
    eprintln!("retrieval");
    criterion_9(&mut v);
    if v.failed {
        ExitCode::FAILURE
    } else {
        ExitCode::SUCCESS
    }
}
