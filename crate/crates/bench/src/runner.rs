//! Builds a table variant, replays a trace against the reference set and
//! collects metrics.

use std::fmt;
use std::str::FromStr;

use partner_hashing::advanced::AdvancedStats;
use partner_hashing::error::{ConfigError, TableError};
use partner_hashing::fixed::{FixedConfig, FixedTable, FIXED_C_PROBE};
use partner_hashing::resizable::{ResizableConfig, ResizableTable, DEFAULT_DELTA, MAX_BIN_TARGET, RESIZABLE_C_PROBE};
use partner_hashing::stats::TableStats;
use partner_hashing::trace::{generate, initial_fill, GenParams, Op, Profile};
use partner_hashing::verify::{diff_step, Dictionary, ReferenceSet, ValidationReport};
use partner_hashing::warmup::{WarmupConfig, WarmupTable, WARMUP_C_PROBE};

use crate::metrics::{Report, SegmentPoint};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Variant {
    Warmup,
    Fixed,
    Resizable,
}

impl Variant {
    pub fn name(self) -> &'static str {
        match self {
            Variant::Warmup => "warmup",
            Variant::Fixed => "fixed",
            Variant::Resizable => "resizable",
        }
    }

    pub fn c_probe(self) -> u32 {
        match self {
            Variant::Warmup => WARMUP_C_PROBE,
            Variant::Fixed => FIXED_C_PROBE,
            Variant::Resizable => RESIZABLE_C_PROBE,
        }
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Variant {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "warmup" => Ok(Variant::Warmup),
            "fixed" => Ok(Variant::Fixed),
            "resizable" => Ok(Variant::Resizable),
            _ => Err(format!("unknown variant {s:?}")),
        }
    }
}

/// Default bin size of the warmup table.
pub const DEFAULT_WARMUP_BIN: usize = 256;
/// Fraction of generated records that break the valid-trace rules in raw mode.
pub const RAW_RATE: f64 = 0.05;

#[derive(Clone, Debug, PartialEq)]
pub struct RunConfig {
    pub variant: Variant,
    pub ops: usize,
    pub seed: u64,
    pub profile: Profile,
    /// Generate invalid inserts and deletes as well.
    pub raw: bool,
    /// Validator period in operations; 0 runs it only at the end.
    pub check_every: usize,
    pub bin_size: Option<usize>,
    /// Slot count for warmup and fixed tables, initial fill for resizable.
    pub capacity: Option<usize>,
    pub delta: Option<f64>,
    pub budget_samples: u32,
    pub rebuild_cap: u32,
}

impl RunConfig {
    pub fn new(variant: Variant, ops: usize, seed: u64, profile: Profile) -> Self {
        RunConfig {
            variant,
            ops,
            seed,
            profile,
            raw: false,
            check_every: 1 << 10,
            bin_size: None,
            capacity: None,
            delta: None,
            budget_samples: 100,
            rebuild_cap: 32,
        }
    }

    fn warmup_bin(&self) -> usize {
        self.bin_size.unwrap_or(DEFAULT_WARMUP_BIN)
    }

    /// Keys the generated trace starts with.
    pub fn fill(&self) -> Result<Option<usize>, ConfigError> {
        Ok(match self.variant {
            Variant::Fixed => Some(self.capacity.unwrap_or(self.ops / 4)),
            Variant::Resizable => self.capacity,
            Variant::Warmup => {
                let b = self.warmup_bin();
                let m = match self.capacity {
                    Some(c) => {
                        if c % b != 0 || !(c / b).is_power_of_two() {
                            return Err(ConfigError::Invalid(format!(
                                "warmup capacity {c} is not a power-of-two multiple of bin size {b}"
                            )));
                        }
                        c / b
                    }
                    None => nearest_bins(self.ops / 4, b),
                };
                let mut w = WarmupConfig::new(m, b, 0);
                w.slack = None;
                Some(w.target_count())
            }
        })
    }

    /// Generates the trace for this configuration and pins `capacity` to
    /// the generated fill, so a build does not take later inserts for part
    /// of it.
    pub fn generate(&mut self) -> Result<Vec<Op>, ConfigError> {
        let fill = self.fill()?;
        let mut p = GenParams::new(self.profile, self.ops, self.seed);
        p.fill = fill;
        if self.raw {
            p.raw_rate = RAW_RATE;
        }
        match self.variant {
            Variant::Fixed => self.capacity = fill,
            Variant::Warmup if self.capacity.is_none() => {
                self.capacity = Some(nearest_bins(self.ops / 4, self.warmup_bin()) * self.warmup_bin())
            }
            _ => {}
        }
        Ok(generate(&p))
    }
}

fn default_slack(b: usize) -> f64 {
    (b as f64).powf(-0.25).min(0.25)
}

/// Power-of-two bin count (at least 4) whose default target is closest to `keys`.
fn nearest_bins(keys: usize, b: usize) -> usize {
    let ideal = keys as f64 / (b as f64 * (1.0 - default_slack(b)));
    let lo = (ideal.max(4.0) as usize).next_power_of_two().max(4);
    let cands = [lo / 2, lo];
    cands
        .into_iter()
        .filter(|&m| m >= 4)
        .min_by(|&a, &c| (a as f64 - ideal).abs().total_cmp(&(c as f64 - ideal).abs()))
        .unwrap_or(4)
}

/// Any of the three variants behind one interface.
#[allow(clippy::large_enum_variant)]
pub enum AnyTable {
    Warmup(WarmupTable),
    Fixed(FixedTable),
    Resizable(ResizableTable),
}

macro_rules! each {
    ($self:expr, $t:ident => $e:expr) => {
        match $self {
            AnyTable::Warmup($t) => $e,
            AnyTable::Fixed($t) => $e,
            AnyTable::Resizable($t) => $e,
        }
    };
}

impl Dictionary for AnyTable {
    fn query(&self, x: u64) -> (Option<usize>, u32) {
        each!(self, t => Dictionary::query(t, x))
    }
    fn insert(&mut self, x: u64) -> Result<(), TableError> {
        each!(self, t => Dictionary::insert(t, x))
    }
    fn delete(&mut self, x: u64) -> Result<(), TableError> {
        each!(self, t => Dictionary::delete(t, x))
    }
    fn len(&self) -> usize {
        each!(self, t => Dictionary::len(t))
    }
    fn slots(&self) -> &[u64] {
        each!(self, t => Dictionary::slots(t))
    }
    fn band(&self) -> (usize, usize) {
        each!(self, t => Dictionary::band(t))
    }
    fn validate(&self) -> ValidationReport {
        each!(self, t => Dictionary::validate(t))
    }
    fn stats(&self) -> &TableStats {
        each!(self, t => Dictionary::stats(t))
    }
}

impl AnyTable {
    pub fn adv_stats(&self) -> AdvancedStats {
        match self {
            AnyTable::Warmup(_) => AdvancedStats::default(),
            AnyTable::Fixed(t) => t.adv_stats(),
            AnyTable::Resizable(t) => t.adv_stats(),
        }
    }

    /// Smallest partner-bin self-loop count minus `B/4`.
    pub fn selfloop_slack(&self) -> Option<i64> {
        match self {
            AnyTable::Warmup(t) => Some(t.min_selfloops() as i64 - (t.config().bin_size / 4) as i64),
            AnyTable::Fixed(t) => t.selfloop_slack(),
            AnyTable::Resizable(t) => t.selfloop_slack(),
        }
    }

    /// Queue bound `queue_k * sqrt(B)` of the bins in use.
    pub fn queue_limit(&self) -> Option<usize> {
        match self {
            AnyTable::Warmup(_) => None,
            AnyTable::Fixed(t) => t.core().ram().map(|r| r.queue_limit()),
            AnyTable::Resizable(_) => None,
        }
    }
}

/// How a run ended.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Status {
    Ok,
    /// A table gave up after its rebuild cap.
    FailureCap(String),
    /// The validator or the reference comparison found a fault.
    Validator(String),
}

impl Status {
    pub fn exit_code(&self) -> i32 {
        match self {
            Status::Ok => 0,
            Status::FailureCap(_) => 2,
            Status::Validator(_) => 3,
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Status::Ok => "ok",
            Status::FailureCap(_) => "failure_cap",
            Status::Validator(_) => "validator_failure",
        }
    }
}

/// Builds the table for `cfg` from the leading inserts of `ops`. Returns the
/// table and how many records the build consumed.
pub fn build_table(cfg: &RunConfig, ops: &[Op]) -> Result<(AnyTable, usize), TableError> {
    match cfg.variant {
        Variant::Warmup => {
            let fill = initial_fill(ops);
            let b = cfg.warmup_bin();
            let m = match cfg.capacity {
                Some(c) => {
                    if c % b != 0 || !(c / b).is_power_of_two() {
                        return Err(ConfigError::Invalid(format!(
                            "warmup capacity {c} is not a power-of-two multiple of bin size {b}"
                        ))
                        .into());
                    }
                    c / b
                }
                None => nearest_bins(fill.len(), b),
            };
            let mut w = WarmupConfig::new(m, b, cfg.seed);
            let fill = match cfg.capacity {
                Some(_) => &fill[..fill.len().min(w.target_count())],
                None => &fill[..],
            };
            let slack = 1.0 - fill.len() as f64 / (m * b) as f64;
            if !(0.0..0.5).contains(&slack) || fill.len() < m * b / 2 {
                return Err(ConfigError::Invalid(format!(
                    "initial fill of {} keys does not suit {m} bins of {b} slots",
                    fill.len()
                ))
                .into());
            }
            w.slack = Some(slack);
            w.sample_budget = cfg.budget_samples;
            w.rebuild_cap = cfg.rebuild_cap;
            Ok((AnyTable::Warmup(WarmupTable::build(w, fill)?), fill.len()))
        }
        Variant::Fixed => {
            let fill = initial_fill(ops);
            let n = cfg.capacity.unwrap_or(fill.len());
            if n < 2 {
                return Err(ConfigError::Invalid(format!("capacity {n} below 2")).into());
            }
            let fill = &fill[..fill.len().min(n)];
            let mut f = FixedConfig::new(n, cfg.seed);
            if let Some(b) = cfg.bin_size {
                f.bin_target = b;
            }
            f.adv.drain_budget = cfg.budget_samples;
            f.adv.sparse_budget = cfg.budget_samples;
            f.rebuild_cap = cfg.rebuild_cap;
            Ok((AnyTable::Fixed(FixedTable::build(f, fill)?), fill.len()))
        }
        Variant::Resizable => {
            let mut r = ResizableConfig::new(cfg.seed);
            r.delta = cfg.delta.unwrap_or(DEFAULT_DELTA);
            r.bin_target = cfg.bin_size.unwrap_or(MAX_BIN_TARGET);
            r.adv.drain_budget = cfg.budget_samples;
            r.adv.sparse_budget = cfg.budget_samples;
            r.rebuild_cap = cfg.rebuild_cap;
            Ok((AnyTable::Resizable(ResizableTable::new(r)?), 0))
        }
    }
}

/// Result of [`run`].
pub struct Outcome {
    pub report: Report,
    pub status: Status,
}

/// Rejects settings no variant can use.
pub fn check(cfg: &RunConfig) -> Result<(), ConfigError> {
    if cfg.budget_samples == 0 {
        return Err(ConfigError::Invalid("--budget-samples must be positive".into()));
    }
    if let Some(d) = cfg.delta {
        if cfg.variant != Variant::Resizable {
            return Err(ConfigError::Invalid("--delta applies to the resizable table only".into()));
        }
        if !(d > 0.0 && d <= DEFAULT_DELTA) {
            return Err(ConfigError::Invalid(format!("delta {d} outside (0, 1/64]")));
        }
    }
    if let Some(b) = cfg.bin_size {
        if b < 4 || b % 2 != 0 {
            return Err(ConfigError::Invalid(format!("bin size {b} must be even and >= 4")));
        }
    }
    Ok(())
}

/// Replays `ops` through the configured variant and the reference set.
pub fn run(cfg: &RunConfig, ops: &[Op]) -> Result<Outcome, ConfigError> {
    check(cfg)?;
    let mut report = Report::new(cfg);
    report.trace_ops = ops.len() as u64;
    let (table, start) = match build_table(cfg, ops) {
        Ok(t) => t,
        Err(TableError::Config(e)) => return Err(e),
        Err(e @ (TableError::OutOfBand | TableError::AlreadyPresent(_))) => {
            return Err(ConfigError::Invalid(format!("initial fill does not suit the table: {e}")))
        }
        Err(e) => {
            let status = match e {
                TableError::RebuildCapExceeded { cap, last } => {
                    // The table is gone; only the final failure kind is known.
                    report.rebuilds = 1;
                    report.rebuild_attempts = cap as u64;
                    *report.failures.entry(last.kind()).or_default() += 1;
                    Status::FailureCap(format!("build: {e}"))
                }
                _ => Status::Validator(format!("build: {e}")),
            };
            report.status = status.name();
            report.status_detail = status_detail(&status);
            return Ok(Outcome { report, status });
        }
    };
    Ok(replay(cfg, table, start, ops))
}

/// Replays `ops[start..]` through `table`, which holds the keys of
/// `ops[..start]`.
pub fn replay(cfg: &RunConfig, mut table: AnyTable, start: usize, ops: &[Op]) -> Outcome {
    let mut report = Report::new(cfg);
    report.trace_ops = ops.len() as u64;
    let mut reference = ReferenceSet::new();
    for op in &ops[..start] {
        reference.insert(op.key());
    }
    report.build_keys = start as u64;
    report.queue_limit = table.queue_limit();
    let fixed_n = match &table {
        AnyTable::Fixed(t) => Some(t.capacity()),
        _ => None,
    };
    let c_probe = cfg.variant.c_probe();
    let mut status = Status::Ok;
    let checkpoint = |table: &AnyTable, report: &mut Report, index: usize| -> Option<String> {
        report.checks += 1;
        observe(table, report, index);
        let v = table.validate();
        (!v.is_ok()).then(|| {
            let f: Vec<String> = v.failures().map(|c| format!("{}: {}", c.name, c.detail.as_deref().unwrap_or(""))).collect();
            format!("validator at op {index}: {}", f.join("; "))
        })
    };
    if let Some(msg) = checkpoint(&table, &mut report, start) {
        status = Status::Validator(msg);
    }
    let mut i = start;
    while status == Status::Ok && i < ops.len() {
        let op = ops[i];
        match op {
            Op::Insert(_) => report.inserts += 1,
            Op::Delete(_) => report.deletes += 1,
            Op::Query(_) => report.queries += 1,
        }
        let expected_ok = partner_hashing::verify::expected_outcome(&reference, table.band(), op);
        match &expected_ok {
            Err(TableError::AlreadyPresent(_)) => report.rejected_present += 1,
            Err(TableError::NotPresent(_)) => report.rejected_absent += 1,
            Err(TableError::OutOfBand) => report.rejected_band += 1,
            _ => {}
        }
        match diff_step(&mut table, &mut reference, i, op) {
            Ok(probes) => {
                report.record_probes(probes);
                if probes > c_probe {
                    report.probe_violations += 1;
                }
                if matches!(op, Op::Query(_)) && reference.contains(op.key()) {
                    report.query_hits += 1;
                }
            }
            Err(d) => {
                status = match &d.error {
                    Some(e @ TableError::RebuildCapExceeded { .. }) => Status::FailureCap(format!("op {i}: {e}")),
                    _ => Status::Validator(format!("divergence at {d}")),
                };
                report.divergences += 1;
                break;
            }
        }
        if table.slots().len() != table.len() && cfg.variant == Variant::Resizable {
            report.load_factor_violations += 1;
        }
        if let Some(n) = fixed_n {
            if table.len() + 1 < n || table.len() > n {
                report.occupancy_violations += 1;
            }
        }
        i += 1;
        if cfg.check_every > 0 && (i - start).is_multiple_of(cfg.check_every) {
            if let Some(msg) = checkpoint(&table, &mut report, i) {
                status = Status::Validator(msg);
            }
        }
    }
    if status == Status::Ok && (cfg.check_every == 0 || !(i - start).is_multiple_of(cfg.check_every)) {
        if let Some(msg) = checkpoint(&table, &mut report, i) {
            status = Status::Validator(msg);
        }
    }
    report.ops_done = (i - start) as u64;
    report.final_len = table.len() as u64;
    report.absorb(&table);
    report.status = status.name();
    report.status_detail = status_detail(&status);
    Outcome { report, status }
}

fn status_detail(s: &Status) -> Option<String> {
    match s {
        Status::Ok => None,
        Status::FailureCap(m) | Status::Validator(m) => Some(m.clone()),
    }
}

/// Samples the per-checkpoint series.
fn observe(table: &AnyTable, report: &mut Report, index: usize) {
    if let Some(s) = table.selfloop_slack() {
        report.selfloop_slack.push(s);
    }
    if let AnyTable::Resizable(t) = table {
        let point = match t.layout() {
            Some(l) => SegmentPoint {
                op: index as u64,
                n: t.len() as u64,
                level: l.level,
                x_len: l.x_len as u64,
                y_count: l.y_count as u64,
                z_extent: l.z_extent as u64,
                core_level: l.core_level,
                phase: l.phase,
            },
            None => SegmentPoint { op: index as u64, n: t.len() as u64, ..SegmentPoint::default() },
        };
        report.timeline.push(point);
    }
}
