//! Run report: flat `key=value` lines, lists as comma-separated values.

use std::collections::BTreeMap;
use std::fmt::Write;

use partner_hashing::resizable::ResizableTable;
use partner_hashing::verify::Dictionary;

use crate::runner::{AnyTable, RunConfig};

/// Resizable layout at one checkpoint.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct SegmentPoint {
    pub op: u64,
    pub n: u64,
    /// 0 while the table is a sorted array.
    pub level: u32,
    pub x_len: u64,
    pub y_count: u64,
    pub z_extent: u64,
    pub core_level: u32,
    pub phase: u32,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct Report {
    pub variant: &'static str,
    pub profile: &'static str,
    pub seed: u64,
    pub ops: u64,
    pub raw: bool,
    pub check_every: u64,
    pub c_probe: u32,
    pub budget_samples: u32,
    pub rebuild_cap: u32,

    pub status: &'static str,
    pub status_detail: Option<String>,
    pub trace_ops: u64,
    pub build_keys: u64,
    pub ops_done: u64,
    pub final_len: u64,
    pub inserts: u64,
    pub deletes: u64,
    pub queries: u64,
    pub query_hits: u64,
    pub rejected_present: u64,
    pub rejected_absent: u64,
    pub rejected_band: u64,
    pub divergences: u64,
    pub checks: u64,
    pub load_factor_violations: u64,
    pub occupancy_violations: u64,

    /// Count of queries by slot probes made.
    pub probe_hist: Vec<u64>,
    pub probe_violations: u64,

    pub samples: u64,
    pub max_op_samples: u64,
    pub rebuilds: u64,
    pub rebuild_attempts: u64,
    pub failures: BTreeMap<&'static str, u64>,

    pub adv_writes: u64,
    pub adv_nontrivial_writes: u64,
    pub adv_nontrivial_drains: u64,
    pub adv_drains: u64,
    pub queue_high_water: u64,
    pub queue_limit: Option<usize>,
    pub sparse_giveups: u64,
    pub dense_giveups: u64,

    /// Smallest self-loop count minus `B/4` at every checkpoint.
    pub selfloop_slack: Vec<i64>,
    pub timeline: Vec<SegmentPoint>,
    pub core_history: Vec<(usize, u32)>,
    pub promotions: u64,
    pub demotions: u64,
    pub x_shrinks: u64,
    pub x_grows: u64,
    pub core_moves: u64,
}

impl Report {
    pub fn new(cfg: &RunConfig) -> Self {
        Report {
            variant: cfg.variant.name(),
            profile: cfg.profile.name(),
            seed: cfg.seed,
            ops: cfg.ops as u64,
            raw: cfg.raw,
            check_every: cfg.check_every as u64,
            c_probe: cfg.variant.c_probe(),
            budget_samples: cfg.budget_samples,
            rebuild_cap: cfg.rebuild_cap,
            status: "ok",
            ..Report::default()
        }
    }

    pub fn record_probes(&mut self, p: u32) {
        let p = p as usize;
        if self.probe_hist.len() <= p {
            self.probe_hist.resize(p + 1, 0);
        }
        self.probe_hist[p] += 1;
    }

    pub fn probe_count(&self) -> u64 {
        self.probe_hist.iter().sum()
    }

    /// Smallest probe count `p` with at least a `q` fraction of queries at or below it.
    pub fn probe_percentile(&self, q: f64) -> u32 {
        let total = self.probe_count();
        if total == 0 {
            return 0;
        }
        let need = ((q * total as f64).ceil() as u64).max(1);
        let mut seen = 0;
        for (p, &c) in self.probe_hist.iter().enumerate() {
            seen += c;
            if seen >= need {
                return p as u32;
            }
        }
        self.probe_max()
    }

    pub fn probe_max(&self) -> u32 {
        self.probe_hist.iter().rposition(|&c| c > 0).unwrap_or(0) as u32
    }

    /// Mean entries moved per write that left its queue non-empty.
    pub fn mean_nontrivial_drains(&self) -> Option<f64> {
        (self.adv_nontrivial_writes > 0).then(|| self.adv_nontrivial_drains as f64 / self.adv_nontrivial_writes as f64)
    }

    pub fn sparse_giveup_rate(&self) -> Option<f64> {
        (self.adv_writes > 0).then(|| self.sparse_giveups as f64 / self.adv_writes as f64)
    }

    pub fn selfloop_slack_min(&self) -> Option<i64> {
        self.selfloop_slack.iter().copied().min()
    }

    /// Copies the end-of-run counters out of `table`.
    pub fn absorb(&mut self, table: &AnyTable) {
        let s = table.stats();
        self.samples = s.samples;
        self.max_op_samples = s.max_op_samples;
        self.rebuilds = s.rebuilds;
        self.rebuild_attempts = s.rebuild_attempts;
        self.failures = s.failures.clone();
        let a = table.adv_stats();
        self.adv_writes = a.writes;
        self.adv_nontrivial_writes = a.nontrivial_writes;
        self.adv_nontrivial_drains = a.nontrivial_drains;
        self.adv_drains = a.drains;
        self.queue_high_water = a.high_water as u64;
        self.sparse_giveups = a.sparse_giveups;
        self.dense_giveups = a.dense_giveups;
        if let AnyTable::Resizable(t) = table {
            self.absorb_resizable(t);
        }
    }

    fn absorb_resizable(&mut self, t: &ResizableTable) {
        let r = t.resize_stats();
        self.promotions = r.promotions;
        self.demotions = r.demotions;
        self.x_shrinks = r.x_shrinks;
        self.x_grows = r.x_grows;
        self.core_moves = r.core_moves;
        self.core_history = t.core_history().to_vec();
    }

    /// The report text. Equal runs give equal bytes.
    pub fn render(&self) -> String {
        let mut o = String::new();
        let mut kv = |k: &str, v: &dyn std::fmt::Display| {
            let _ = writeln!(o, "{k}={v}");
        };
        kv("variant", &self.variant);
        kv("profile", &self.profile);
        kv("seed", &self.seed);
        kv("ops", &self.ops);
        kv("raw", &self.raw);
        kv("check_every", &self.check_every);
        kv("c_probe", &self.c_probe);
        kv("budget_samples", &self.budget_samples);
        kv("rebuild_cap", &self.rebuild_cap);
        kv("status", &self.status);
        kv("status_detail", &self.status_detail.as_deref().unwrap_or("-"));
        kv("trace_ops", &self.trace_ops);
        kv("build_keys", &self.build_keys);
        kv("ops_done", &self.ops_done);
        kv("final_len", &self.final_len);
        kv("inserts", &self.inserts);
        kv("deletes", &self.deletes);
        kv("queries", &self.queries);
        kv("query_hits", &self.query_hits);
        kv("rejected_present", &self.rejected_present);
        kv("rejected_absent", &self.rejected_absent);
        kv("rejected_band", &self.rejected_band);
        kv("divergences", &self.divergences);
        kv("checks", &self.checks);
        kv("load_factor_violations", &self.load_factor_violations);
        kv("occupancy_violations", &self.occupancy_violations);
        kv("probe_count", &self.probe_count());
        kv("probe_p50", &self.probe_percentile(0.5));
        kv("probe_p99", &self.probe_percentile(0.99));
        kv("probe_p9999", &self.probe_percentile(0.9999));
        kv("probe_max", &self.probe_max());
        kv("probe_violations", &self.probe_violations);
        kv("probe_hist", &join(&self.probe_hist));
        kv("samples", &self.samples);
        kv("max_op_samples", &self.max_op_samples);
        kv("rebuilds", &self.rebuilds);
        kv("rebuild_attempts", &self.rebuild_attempts);
        for (k, v) in &self.failures {
            kv(&format!("failures.{k}"), v);
        }
        kv("adv_writes", &self.adv_writes);
        kv("adv_nontrivial_writes", &self.adv_nontrivial_writes);
        kv("adv_nontrivial_drains", &self.adv_nontrivial_drains);
        kv("adv_drains", &self.adv_drains);
        kv("mean_nontrivial_drains", &opt(self.mean_nontrivial_drains().map(|m| format!("{m:.3}"))));
        kv("queue_high_water", &self.queue_high_water);
        kv("queue_limit", &opt(self.queue_limit));
        kv("sparse_giveups", &self.sparse_giveups);
        kv("sparse_giveup_rate", &opt(self.sparse_giveup_rate().map(|r| format!("{r:.3e}"))));
        kv("dense_giveups", &self.dense_giveups);
        kv("selfloop_slack_min", &opt(self.selfloop_slack_min()));
        kv("selfloop_slack", &join(&self.selfloop_slack));
        if self.variant == "resizable" {
            kv("promotions", &self.promotions);
            kv("demotions", &self.demotions);
            kv("x_shrinks", &self.x_shrinks);
            kv("x_grows", &self.x_grows);
            kv("core_moves", &self.core_moves);
            let h: Vec<String> = self.core_history.iter().map(|(n, l)| format!("{n}:{l}")).collect();
            kv("core_history", &h.join(","));
            let t: Vec<String> = self
                .timeline
                .iter()
                .map(|p| {
                    format!(
                        "{}:{}:{}:{}:{}:{}:{}:{}",
                        p.op, p.n, p.level, p.x_len, p.y_count, p.z_extent, p.core_level, p.phase
                    )
                })
                .collect();
            kv("timeline_fields", &"op:n:level:x_len:y_count:z_extent:core_level:phase");
            kv("timeline", &t.join(","));
        }
        o
    }

    /// Probe histogram as CSV.
    pub fn probe_csv(&self) -> String {
        let mut o = String::from("probes,queries\n");
        for (p, c) in self.probe_hist.iter().enumerate() {
            let _ = writeln!(o, "{p},{c}");
        }
        o
    }

    /// Per-checkpoint series as CSV.
    pub fn checkpoint_csv(&self) -> String {
        let mut o = String::from("checkpoint,selfloop_slack,op,n,level,x_len,y_count,z_extent,core_level,phase\n");
        let rows = self.selfloop_slack.len().max(self.timeline.len());
        for i in 0..rows {
            let s = self.selfloop_slack.get(i).map(|s| s.to_string()).unwrap_or_default();
            let t = self
                .timeline
                .get(i)
                .map(|p| {
                    format!(
                        "{},{},{},{},{},{},{},{}",
                        p.op, p.n, p.level, p.x_len, p.y_count, p.z_extent, p.core_level, p.phase
                    )
                })
                .unwrap_or_else(|| ",,,,,,,".into());
            let _ = writeln!(o, "{i},{s},{t}");
        }
        o
    }
}

fn join<T: ToString>(v: &[T]) -> String {
    v.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(",")
}

fn opt<T: ToString>(v: Option<T>) -> String {
    v.map(|x| x.to_string()).unwrap_or_else(|| "-".into())
}
