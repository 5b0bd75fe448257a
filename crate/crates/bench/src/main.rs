use std::fs::File;
use std::io::{self, BufReader, BufWriter, Write};
use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Instant;

use clap::error::ErrorKind;
use clap::Parser;
use partner_bench::runner::{run, RunConfig, Variant};
use partner_hashing::trace::{read_trace, write_trace, Profile};

/// Generate or replay a trace against one table variant and write a report.
///
/// Exit status: 0 ok, 1 configuration error, 2 rebuild cap exceeded,
/// 3 validator failure or divergence from the reference set.
#[derive(Parser, Debug)]
#[command(name = "partner-bench", version)]
struct Cli {
    #[arg(long, value_parser = |s: &str| s.parse::<Variant>())]
    variant: Variant,
    /// Records to generate.
    #[arg(long, default_value_t = 100_000)]
    ops: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// fill, churn, grow-shrink, query-heavy or adversarial-band.
    #[arg(long, default_value = "churn", value_parser = |s: &str| s.parse::<Profile>())]
    profile: Profile,
    /// Also generate inserts of present keys and deletes of absent ones.
    #[arg(long)]
    raw: bool,
    /// Replay this trace instead of generating one.
    #[arg(long)]
    trace_in: Option<PathBuf>,
    /// Write the trace used to this file.
    #[arg(long)]
    trace_out: Option<PathBuf>,
    /// Only write the trace; needs --trace-out.
    #[arg(long, requires = "trace_out")]
    gen_only: bool,
    /// Report file; stdout when absent.
    #[arg(long)]
    report: Option<PathBuf>,
    /// Probe histogram CSV.
    #[arg(long)]
    csv: Option<PathBuf>,
    /// Per-checkpoint CSV (self-loop slack, resizable layout).
    #[arg(long)]
    checkpoint_csv: Option<PathBuf>,
    /// Validator period in operations; 0 validates only at the end.
    #[arg(long, default_value_t = 1024)]
    check_every: usize,
    #[arg(long)]
    bin_size: Option<usize>,
    /// Slots of a warmup or fixed table; initial fill of a resizable one.
    #[arg(long)]
    capacity: Option<usize>,
    #[arg(long)]
    delta: Option<f64>,
    #[arg(long, default_value_t = 100)]
    budget_samples: u32,
    #[arg(long, default_value_t = 32)]
    rebuild_cap: u32,
}

fn config_error(msg: impl std::fmt::Display) -> ExitCode {
    eprintln!("error: {msg}");
    ExitCode::from(1)
}

fn write_file(path: &PathBuf, text: &str) -> io::Result<()> {
    std::fs::write(path, text)
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) => {
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(1);
        }
    };
    let mut cfg = RunConfig::new(cli.variant, cli.ops, cli.seed, cli.profile);
    cfg.raw = cli.raw;
    cfg.check_every = cli.check_every;
    cfg.bin_size = cli.bin_size;
    cfg.capacity = cli.capacity;
    cfg.delta = cli.delta;
    cfg.budget_samples = cli.budget_samples;
    cfg.rebuild_cap = cli.rebuild_cap;

    let ops = match &cli.trace_in {
        Some(p) => {
            let f = match File::open(p) {
                Ok(f) => f,
                Err(e) => return config_error(format!("{}: {e}", p.display())),
            };
            match read_trace(BufReader::new(f)) {
                Ok(ops) => ops,
                Err(e) => return config_error(format!("{}: {e}", p.display())),
            }
        }
        None => match cfg.generate() {
            Ok(ops) => ops,
            Err(e) => return config_error(e),
        },
    };
    if cli.trace_in.is_some() {
        cfg.ops = ops.len();
    }
    if let Some(p) = &cli.trace_out {
        let res = File::create(p).and_then(|f| write_trace(BufWriter::new(f), &ops));
        if let Err(e) = res {
            return config_error(format!("{}: {e}", p.display()));
        }
    }
    if cli.gen_only {
        return ExitCode::SUCCESS;
    }

    let start = Instant::now();
    let out = match run(&cfg, &ops) {
        Ok(o) => o,
        Err(e) => return config_error(e),
    };
    let secs = start.elapsed().as_secs_f64();
    let text = out.report.render();
    let res = match &cli.report {
        Some(p) => write_file(p, &text),
        None => io::stdout().lock().write_all(text.as_bytes()),
    };
    if let Err(e) = res {
        return config_error(format!("report: {e}"));
    }
    for (path, body) in [(&cli.csv, out.report.probe_csv()), (&cli.checkpoint_csv, out.report.checkpoint_csv())] {
        if let Some(p) = path {
            if let Err(e) = write_file(p, &body) {
                return config_error(format!("{}: {e}", p.display()));
            }
        }
    }
    eprintln!(
        "wall_seconds={secs:.3} us_per_op={:.3} status={}",
        secs * 1e6 / out.report.ops_done.max(1) as f64,
        out.status.name()
    );
    if let Some(d) = &out.report.status_detail {
        eprintln!("{d}");
    }
    ExitCode::from(out.status.exit_code() as u8)
}
