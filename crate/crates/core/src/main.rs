use std::fs;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use num_rational::BigRational;
use serde_json::json;

use trimarkov::error::{Error, Result};
use trimarkov::fpfactor::select_model;
use trimarkov::harness::{
    compare, dist_csv, hausdorff_table, parse_model, run_model, sweep, CompareConfig, PrimeFilter, Target,
};
use trimarkov::markov::{parse_rational, ModelId, DEFAULT_MAX_SUPPORT};
use trimarkov::theorems::{report_passes, theorem_report, ReportConfig, Verdict};

#[derive(Parser)]
#[command(name = "trimarkov", version, about = "Markov models, Markov groups and prime sweeps for PCF cubics")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Clone, Copy, ValueEnum, PartialEq, Eq)]
enum Format {
    Json,
    Csv,
}

#[derive(Args)]
struct Common {
    /// Output file (stdout when absent).
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "json")]
    format: Format,
}

#[derive(Args)]
struct PolyArgs {
    /// Catalog id (see data/catalog.json) or comma-separated coefficients, top degree first.
    #[arg(long)]
    poly: String,
    /// Target value t; factors f^n - t.
    #[arg(long, default_value = "0", allow_hyphen_values = true)]
    t: String,
    /// Family parameter a of f_a(z) = f(z + a) - a.
    #[arg(long, default_value = "0", allow_hyphen_values = true)]
    a: String,
}

#[derive(Subcommand)]
enum Cmd {
    /// Propagate a Markov model and write its data and cycle marginal.
    Model {
        /// m1-model4, 1:4, or a bare number together with --orbit-length.
        #[arg(long)]
        model: Option<String>,
        #[arg(long)]
        orbit_length: Option<u8>,
        /// Pick the model from a polynomial and t instead.
        #[arg(long)]
        poly: Option<String>,
        #[arg(long, default_value = "0", allow_hyphen_values = true)]
        t: String,
        #[arg(long, default_value = "0", allow_hyphen_values = true)]
        a: String,
        #[arg(long, default_value_t = 1)]
        level: usize,
        #[arg(long, default_value_t = DEFAULT_MAX_SUPPORT)]
        max_support: usize,
        /// Monte Carlo instead of exact propagation.
        #[arg(long)]
        simulate: bool,
        #[arg(long, default_value_t = 100_000)]
        samples: usize,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        #[command(flatten)]
        common: Common,
    },
    /// Build the groups at one level and check the structural statements.
    Group {
        #[arg(long, default_value_t = 1)]
        orbit_length: u8,
        #[arg(long, default_value_t = 2)]
        level: usize,
        #[arg(long, default_value_t = 100_000)]
        samples: u64,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        #[command(flatten)]
        common: Common,
    },
    /// Sweep primes and record factorization shapes of f^n - t.
    Factor {
        #[command(flatten)]
        poly: PolyArgs,
        #[arg(long, default_value_t = 1)]
        level: usize,
        #[arg(long, default_value_t = 100_000)]
        prime_bound: u64,
        /// Visit every prime instead of p = 1 mod 3.
        #[arg(long)]
        all_primes: bool,
        /// Also write one JSON line per prime here.
        #[arg(long)]
        records: Option<PathBuf>,
        #[command(flatten)]
        common: Common,
    },
    /// Model vs group vs empirical frequencies at one level.
    Compare {
        #[command(flatten)]
        poly: PolyArgs,
        #[arg(long, default_value_t = 2)]
        level: usize,
        #[arg(long, default_value_t = 100_000)]
        prime_bound: u64,
        #[arg(long)]
        model: Option<String>,
        #[arg(long, default_value_t = 100_000)]
        samples: u64,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        #[arg(long, default_value_t = DEFAULT_MAX_SUPPORT)]
        max_support: usize,
        #[command(flatten)]
        common: Common,
    },
    /// log|M_n| / log|Aut(T_n)| per level, with the limits.
    Hausdorff {
        #[arg(long, default_value_t = 12)]
        max_level: usize,
        #[command(flatten)]
        common: Common,
    },
}

fn rational(s: &str) -> Result<BigRational> {
    parse_rational(s)
}

fn emit(common: &Common, json_value: serde_json::Value, csv: impl FnOnce() -> String) -> Result<()> {
    let text = match common.format {
        Format::Json => serde_json::to_string_pretty(&json_value).expect("values serialize") + "\n",
        Format::Csv => csv(),
    };
    match &common.out {
        Some(p) => fs::write(p, text).map_err(|e| Error::InvalidArgument(format!("cannot write {}: {e}", p.display()))),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

/// Runs a subcommand; `Ok(false)` means a hard assertion failed.
fn run(cli: Cli) -> Result<bool> {
    match cli.cmd {
        Cmd::Model { model, orbit_length, poly, t, a, level, max_support, simulate, samples, seed, common } => {
            let id = match (model, poly) {
                (Some(m), _) => parse_model(&m, orbit_length)?,
                (None, Some(p)) => {
                    let Target::Catalog { cubic, t } = Target::parse(&p, &rational(&a)?, &rational(&t)?)? else {
                        return Err(Error::InvalidArgument("model selection needs a catalog polynomial".into()));
                    };
                    ModelId::new(cubic.orbit_length(), select_model(&cubic, &t)?)?
                }
                (None, None) => return Err(Error::InvalidArgument("give --model or --poly".into())),
            };
            let out = run_model(&id, level, max_support, simulate.then_some((samples, seed)))?;
            let dist = out.distribution();
            emit(&common, out.to_json(&id, level), || dist_csv(&id.to_string(), &dist))?;
            Ok(true)
        }
        Cmd::Group { orbit_length, level, samples, seed, common } => {
            let cfg = ReportConfig { samples, seed, ..ReportConfig::default() };
            let items = theorem_report(level, orbit_length, &cfg)?;
            let ok = report_passes(&items);
            emit(&common, json!({"orbit_length": orbit_length, "level": level, "items": items}), || {
                let mut s = String::from("claim,verdict\n");
                for i in &items {
                    let v = match i.verdict {
                        Verdict::Pass => "pass",
                        Verdict::Fail => "fail",
                        Verdict::Info => "info",
                    };
                    s.push_str(&format!("\"{}\",{v}\n", i.claim.replace('"', "'")));
                }
                s
            })?;
            Ok(ok)
        }
        Cmd::Factor { poly, level, prime_bound, all_primes, records, common } => {
            let target = Target::parse(&poly.poly, &rational(&poly.a)?, &rational(&poly.t)?)?;
            let filter = if all_primes { PrimeFilter::All } else { PrimeFilter::OneModThree };
            let sw = sweep(&target, level, prime_bound, filter)?;
            if let Some(p) = records {
                fs::write(&p, sw.json_lines())
                    .map_err(|e| Error::InvalidArgument(format!("cannot write {}: {e}", p.display())))?;
            }
            let ok = sw.violations().is_empty();
            let freq = sw.frequencies();
            emit(&common, json!({"target": target.describe(), "sweep": sw.summary()}), || dist_csv("empirical", &freq))?;
            Ok(ok)
        }
        Cmd::Compare { poly, level, prime_bound, model, samples, seed, max_support, common } => {
            let target = Target::parse(&poly.poly, &rational(&poly.a)?, &rational(&poly.t)?)?;
            let orbit = match &target {
                Target::Catalog { cubic, .. } => Some(cubic.orbit_length()),
                Target::Plain { .. } => None,
            };
            let mut cfg = CompareConfig::new(target, level, prime_bound);
            cfg.model = model.map(|m| parse_model(&m, orbit)).transpose()?;
            cfg.samples = samples;
            cfg.seed = seed;
            cfg.max_support = max_support;
            let r = compare(&cfg)?;
            let failures = r.hard_failures();
            for f in &failures {
                eprintln!("hard assertion failed: {f}");
            }
            let value = serde_json::to_value(&r).expect("report serializes");
            emit(&common, value, || {
                let mut s = dist_csv("model", &r.model_distribution.iter().cloned().collect());
                s.push_str(&dist_csv("group", &r.group.frequencies.iter().cloned().collect()));
                s
            })?;
            Ok(failures.is_empty())
        }
        Cmd::Hausdorff { max_level, common } => {
            let (rows, limits) = hausdorff_table(max_level)?;
            emit(&common, json!({"rows": rows, "limits": limits}), || {
                let mut s = String::from("level,m1,m2\n");
                for r in &rows {
                    s.push_str(&format!("{},{},{}\n", r.level, r.m1, r.m2.map(|v| v.to_string()).unwrap_or_default()));
                }
                s
            })?;
            Ok(true)
        }
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
