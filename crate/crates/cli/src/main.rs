//! Batch experiment runner.
//!
//! Every command writes line-delimited JSON: a versioned header, a line with
//! the creation time, one record per session, sweep cell or report, and a
//! trailer with timings. The timestamp line and the trailer carry
//! `"nondeterministic": true`; every other line is a pure function of the
//! flags.
//!
//! Exit codes: 0 all checks pass, 1 a check failed, 2 bad configuration or
//! I/O trouble, 3 the oracle budget is too small.

mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use adder_spir::capacity::capacity_report_with;
use adder_spir::harness::{maximal_sizing, run_trials, summarize, sweep};
use adder_spir::oracle::{audit, otp_lemma_check, AuditConfig, Conditioning, ProtocolMode, DEFAULT_BUDGET};
use adder_spir::protocol::Mutation;
use adder_spir::{Error, PartitionStrategy, ProtocolParams, Reduction};
use clap::{Args, Parser, Subcommand};
use serde_json::json;

use output::{Output, Timer};

/// Leakage allowed by `audit` before it reports a failure, in bits.
const LEAKAGE_TOLERANCE: f64 = 1e-9;

#[derive(Parser, Debug)]
#[command(
    name = "adder-spir",
    version,
    about = "SPIR over a binary adder channel: sessions, sweeps, audits"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Run seeded sessions and write one transcript per session.
    Run(RunArgs),
    /// Monte Carlo abort rates and achieved rates over a grid of n and alpha.
    Sweep(SweepArgs),
    /// Exact leakage audit of a tiny instance.
    Audit(AuditArgs),
    /// Numerical checks of the entropy bound and the rate region.
    Capacity(CapacityArgs),
    /// Exhaustive check of the one-time-pad lemma.
    OtpCheck(OtpArgs),
}

#[derive(Args, Debug, Clone)]
struct Common {
    /// Master seed.
    #[arg(long, default_value_t = 1)]
    seed: u64,
    /// Output file; standard output when absent.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Worker threads; all cores when absent.
    #[arg(long, env = "ADDER_SPIR_WORKERS", value_parser = positive)]
    workers: Option<usize>,
}

#[derive(Args, Debug, Clone)]
struct Shape {
    /// Exponent of the abort threshold n^-t, in (0, 1/2).
    #[arg(long, default_value_t = 0.4, value_parser = exponent)]
    t: f64,
    /// Files at server 1.
    #[arg(long = "L1", default_value_t = 2, value_parser = file_count)]
    l1: usize,
    /// Files at server 2.
    #[arg(long = "L2", default_value_t = 2, value_parser = file_count)]
    l2: usize,
    /// Skip the |G|/n deviation test (capacity shortfalls still abort).
    #[arg(long)]
    no_abort: bool,
    /// lowest-index or randomized.
    #[arg(long, default_value = "randomized")]
    partition: PartitionStrategy,
    /// auto, equal-counts or general.
    #[arg(long, default_value = "auto")]
    reduction: Reduction,
}

impl Shape {
    fn params(&self, n: usize, alpha: f64, ell1: usize, ell2: usize) -> ProtocolParams {
        let mut p = ProtocolParams::two_file(n, self.t, alpha, ell1, ell2)
            .with_counts(self.l1, self.l2)
            .with_partition(self.partition)
            .with_reduction(self.reduction);
        p.abort_rule = !self.no_abort;
        p
    }
}

#[derive(Args, Debug)]
struct RunArgs {
    #[command(flatten)]
    common: Common,
    #[command(flatten)]
    shape: Shape,
    /// Channel uses per round.
    #[arg(long, default_value_t = 4096, value_parser = positive)]
    n: usize,
    /// Fraction of decodable positions given to server 1, in [0, 1].
    #[arg(long, default_value_t = 0.5, value_parser = unit_interval)]
    alpha: f64,
    /// File length at server 1; the largest safe length when absent.
    #[arg(long)]
    ell1: Option<usize>,
    /// File length at server 2; the largest safe length when absent.
    #[arg(long)]
    ell2: Option<usize>,
    #[arg(long, default_value_t = 1, value_parser = positive)]
    trials: usize,
}

#[derive(Args, Debug)]
struct SweepArgs {
    #[command(flatten)]
    common: Common,
    #[command(flatten)]
    shape: Shape,
    /// Comma-separated block lengths.
    #[arg(long, value_delimiter = ',', default_value = "1024,2048,4096,8192,16384,32768,65536", value_parser = positive)]
    n: Vec<usize>,
    /// Comma-separated splits.
    #[arg(long, value_delimiter = ',', default_value = "0,0.25,0.5,0.75,1", value_parser = unit_interval)]
    alpha: Vec<f64>,
    #[arg(long, default_value_t = 100, value_parser = positive)]
    trials: usize,
    /// Also write the cells as a tab-separated table.
    #[arg(long)]
    table: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct AuditArgs {
    #[command(flatten)]
    common: Common,
    #[command(flatten)]
    shape: Shape,
    #[arg(long, default_value_t = 4, value_parser = positive)]
    n: usize,
    #[arg(long, default_value_t = 0.5, value_parser = unit_interval)]
    alpha: f64,
    /// File length at both servers.
    #[arg(long, default_value_t = 1)]
    ell: usize,
    /// Overrides --ell for server 1.
    #[arg(long)]
    ell1: Option<usize>,
    /// Overrides --ell for server 2.
    #[arg(long)]
    ell2: Option<usize>,
    /// none, mask-reuse, leak-selection or no-pad.
    #[arg(long, default_value = "none")]
    mutate: Mutation,
    /// Exact rational arithmetic.
    #[arg(long)]
    exact_rational: bool,
    /// Condition every quantity on the session not aborting.
    #[arg(long)]
    condition_nonabort: bool,
    /// Largest number of weighted assignments to enumerate.
    #[arg(long, default_value_t = DEFAULT_BUDGET)]
    budget: u128,
}

#[derive(Args, Debug)]
struct CapacityArgs {
    #[arg(long)]
    out: Option<PathBuf>,
    /// Samples of (0, 1/2] for the monotonicity check.
    #[arg(long, default_value_t = 10_000, value_parser = positive)]
    samples: usize,
    /// Grid step of the unconstrained search.
    #[arg(long, default_value_t = 1e-3, value_parser = grid_step)]
    grid_step: f64,
    /// Also write the region table as tab-separated text.
    #[arg(long)]
    table: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct OtpArgs {
    #[arg(long)]
    out: Option<PathBuf>,
    /// Pad length; both 1 and 2 when absent.
    #[arg(long, value_parser = clap::value_parser!(u8).range(1..=2))]
    m: Option<u8>,
}

fn positive(s: &str) -> Result<usize, String> {
    let v: usize = s.parse().map_err(|e| format!("`{s}` is not a whole number: {e}"))?;
    if v == 0 {
        return Err("must be at least 1".into());
    }
    Ok(v)
}

fn file_count(s: &str) -> Result<usize, String> {
    let v: usize = s.parse().map_err(|e| format!("`{s}` is not a whole number: {e}"))?;
    if v < 2 {
        return Err(format!("each server needs at least 2 files, got {v}"));
    }
    Ok(v)
}

fn real(s: &str) -> Result<f64, String> {
    let v: f64 = s.parse().map_err(|e| format!("`{s}` is not a number: {e}"))?;
    if !v.is_finite() {
        return Err(format!("`{s}` is not finite"));
    }
    Ok(v)
}

fn exponent(s: &str) -> Result<f64, String> {
    let v = real(s)?;
    if !(v > 0.0 && v < 0.5) {
        return Err(format!("must lie in (0, 0.5), got {v}"));
    }
    Ok(v)
}

fn unit_interval(s: &str) -> Result<f64, String> {
    let v = real(s)?;
    if !(0.0..=1.0).contains(&v) {
        return Err(format!("must lie in [0, 1], got {v}"));
    }
    Ok(v)
}

fn grid_step(s: &str) -> Result<f64, String> {
    let v = real(s)?;
    if !(1e-4..=0.1).contains(&v) {
        return Err(format!("must lie in [1e-4, 0.1], got {v}"));
    }
    Ok(v)
}

/// A failure that ends the command with a specific exit code.
#[derive(Debug)]
struct Failure {
    code: u8,
    message: String,
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let code = match e {
            Error::BudgetExceeded { .. } => 3,
            _ => 2,
        };
        Failure {
            code,
            message: e.to_string(),
        }
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure {
            code: 2,
            message: format!("i/o error: {e}"),
        }
    }
}

impl From<serde_json::Error> for Failure {
    fn from(e: serde_json::Error) -> Self {
        Failure {
            code: 2,
            message: format!("serialization error: {e}"),
        }
    }
}

type CmdResult = Result<bool, Failure>;

fn cmd_run(a: &RunArgs) -> CmdResult {
    let timer = Timer::start();
    let mut params = a.shape.params(a.n, a.alpha, 0, 0);
    params.validate()?;
    let (max1, max2) = maximal_sizing(&params)?;
    params.ell1 = a.ell1.unwrap_or(max1);
    params.ell2 = a.ell2.unwrap_or(max2);
    let records = run_trials(&params, a.common.seed, a.trials, true, a.common.workers)?;
    let cell = summarize(&params, &records)?;

    let mut out = Output::open(a.common.out.as_deref())?;
    out.header(
        "run",
        json!({ "params": params, "seed": a.common.seed, "trials": a.trials }),
    )?;
    for r in &records {
        out.record("session", r)?;
    }
    out.record("summary", &cell)?;
    out.finish(&timer)?;
    let passed = cell.failures == 0;
    eprintln!(
        "run: {} sessions, {} aborted, {} wrong; mean rates ({:.6}, {:.6})",
        cell.trials, cell.aborts, cell.failures, cell.mean_r1, cell.mean_r2
    );
    Ok(passed)
}

fn cmd_sweep(a: &SweepArgs) -> CmdResult {
    let timer = Timer::start();
    let base = a.shape.params(a.n[0], a.alpha[0], 0, 0);
    let cells = sweep(&base, &a.n, &a.alpha, a.trials, a.common.seed, a.common.workers)?;

    let mut out = Output::open(a.common.out.as_deref())?;
    out.header(
        "sweep",
        json!({ "params": base, "n": a.n, "alpha": a.alpha, "seed": a.common.seed, "trials": a.trials }),
    )?;
    for c in &cells {
        out.record("cell", c)?;
    }
    out.finish(&timer)?;
    if let Some(path) = &a.table {
        let mut text = String::from("n\talpha\tabort_rate\tabort_bound\tsampling_slack\tmean_r1\ttarget_r1\tmean_r2\ttarget_r2\tregion_margin\n");
        for c in &cells {
            text.push_str(&format!(
                "{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\n",
                c.n,
                c.alpha,
                c.abort_rate,
                c.abort_bound,
                c.sampling_slack,
                c.mean_r1,
                c.target_r1,
                c.mean_r2,
                c.target_r2,
                c.region_margin
            ));
        }
        std::fs::write(path, text)?;
    }
    let bad: Vec<_> = cells
        .iter()
        .filter(|c| !(c.abort_ok && c.region_ok && c.failures == 0))
        .map(|c| format!("(n={}, alpha={})", c.n, c.alpha))
        .collect();
    eprintln!("sweep: {} cells, {} failing {}", cells.len(), bad.len(), bad.join(" "));
    Ok(bad.is_empty())
}

fn cmd_audit(a: &AuditArgs) -> CmdResult {
    let timer = Timer::start();
    let params = a
        .shape
        .params(a.n, a.alpha, a.ell1.unwrap_or(a.ell), a.ell2.unwrap_or(a.ell));
    let mode = if params.l1 == 2 && params.l2 == 2 {
        ProtocolMode::TwoFile
    } else {
        ProtocolMode::Multifile
    };
    let config = AuditConfig::new(params, mode)
        .with_mutation(a.mutate)
        .with_budget(a.budget)
        .exact(a.exact_rational);
    let conditioning = if a.condition_nonabort {
        Conditioning::NonAbort
    } else {
        Conditioning::Unconditioned
    };
    let report = audit(&config, conditioning)?;

    let mut out = Output::open(a.common.out.as_deref())?;
    out.header("audit", json!({ "config": config, "conditioning": conditioning }))?;
    let mut value = serde_json::to_value(&report)?;
    if let Some(map) = value.as_object_mut() {
        map.remove("wall_time_ms");
    }
    out.record("leakage", &value)?;
    out.note("wall_time_ms", json!(report.wall_time_ms));
    out.finish(&timer)?;
    eprintln!("{report}");
    let passed = report.passes(LEAKAGE_TOLERANCE);
    if !passed {
        for (name, v) in report.leakages() {
            if v > LEAKAGE_TOLERANCE {
                eprintln!("audit: {name} leaks {v:.6} bits");
            }
        }
        if report.reliability_error != 0.0 {
            eprintln!("audit: reliability error {}", report.reliability_error);
        }
    }
    Ok(passed)
}

fn cmd_capacity(a: &CapacityArgs) -> CmdResult {
    let timer = Timer::start();
    let report = capacity_report_with(a.samples, a.grid_step)?;

    let mut out = Output::open(a.out.as_deref())?;
    out.header("capacity", json!({ "samples": a.samples, "grid_step": a.grid_step }))?;
    out.record("maximize", &report.maximize)?;
    out.record("monotone", &report.monotone)?;
    out.record("derivative", &report.derivative)?;
    for row in &report.region {
        out.record("region", row)?;
    }
    out.record("verdict", &json!({ "passed": report.passed }))?;
    out.finish(&timer)?;
    if let Some(path) = &a.table {
        let mut text = String::from("L1\tL2\tr1_max\tr2_max\tbalanced_r1\tbalanced_r2\n");
        for r in &report.region {
            text.push_str(&format!(
                "{}\t{}\t{}\t{}\t{}\t{}\n",
                r.l1, r.l2, r.r1_max, r.r2_max, r.balanced.r1, r.balanced.r2
            ));
        }
        std::fs::write(path, text)?;
    }
    eprintln!(
        "capacity: max {:.12} at ({:.9}, {:.9}); g monotone {}; worst derivative residual {:.3e}",
        report.maximize.value,
        report.maximize.argmax.p1,
        report.maximize.argmax.p2,
        report.monotone.monotone,
        report.derivative.worst_residual
    );
    Ok(report.passed)
}

fn cmd_otp(a: &OtpArgs) -> CmdResult {
    let timer = Timer::start();
    let ms: Vec<usize> = match a.m {
        Some(m) => vec![m as usize],
        None => vec![1, 2],
    };
    let mut out = Output::open(a.out.as_deref())?;
    out.header("otp-check", json!({ "m": ms }))?;
    let mut passed = true;
    for m in ms {
        let r = otp_lemma_check(m)?;
        eprintln!(
            "otp-check m={m}: {} cases, slack {:.3e} / {:.3e}",
            r.cases, r.max_slack_first, r.max_slack_second
        );
        passed &= r.passed();
        out.record("otp", &r)?;
    }
    out.finish(&timer)?;
    Ok(passed)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Run(a) => cmd_run(a),
        Command::Sweep(a) => cmd_sweep(a),
        Command::Audit(a) => cmd_audit(a),
        Command::Capacity(a) => cmd_capacity(a),
        Command::OtpCheck(a) => cmd_otp(a),
    };
    match result {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}
