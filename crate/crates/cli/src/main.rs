use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{Context, Result};
use bcc_cli::{parse_config, run, RawConfig, Subcommand, SEED_ENV};
use clap::{Args, Parser};

/// Straggler-mitigation experiments for distributed gradient descent.
///
/// Parameters come from an optional `key = value` config file and from
/// `key=value` arguments, which take precedence. The default seed is read
/// from BCC_SEED.
#[derive(Parser, Debug)]
#[command(version)]
enum Cli {
    /// Recovery threshold versus computational load, closed form and Monte-Carlo.
    Tradeoff(Common),
    /// Monte-Carlo iterations of one scheme on a simulated cluster.
    Simulate {
        #[command(flatten)]
        common: Common,
        /// Write every trial's message arrivals to this CSV.
        #[arg(long, value_name = "FILE")]
        trace: Option<PathBuf>,
    },
    /// Load balancing versus generalized BCC on a heterogeneous cluster.
    Hetero {
        #[command(flatten)]
        common: Common,
        /// Where to write `lower,upper,c` [default: next to --out].
        #[arg(long, value_name = "FILE")]
        bounds: Option<PathBuf>,
    },
    /// Logistic regression with Nesterov's method through a scheme.
    Train(Common),
    /// Coupon collector draws.
    Coupon(Common),
}

#[derive(Args, Debug)]
struct Common {
    /// Config file of `key = value` lines.
    #[arg(long, value_name = "FILE")]
    config: Option<PathBuf>,
    /// Main CSV output [default: stdout].
    #[arg(long, value_name = "FILE")]
    out: Option<PathBuf>,
    /// `key=value` overrides.
    #[arg(value_name = "KEY=VALUE")]
    params: Vec<String>,
}

fn bounds_path(out: &Path) -> PathBuf {
    let stem = out
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    out.with_file_name(format!("{stem}_bounds.csv"))
}

fn execute(cli: Cli) -> Result<()> {
    let (cmd, common, trace, bounds) = match cli {
        Cli::Tradeoff(c) => (Subcommand::Tradeoff, c, None, None),
        Cli::Simulate { common, trace } => (Subcommand::Simulate, common, trace, None),
        Cli::Hetero { common, bounds } => (Subcommand::Hetero, common, None, bounds),
        Cli::Train(c) => (Subcommand::Train, c, None, None),
        Cli::Coupon(c) => (Subcommand::Coupon, c, None, None),
    };
    let mut raw = match &common.config {
        Some(path) => {
            let text =
                fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
            RawConfig::from_file_text(&text)
                .with_context(|| format!("parsing {}", path.display()))?
        }
        None => RawConfig::default(),
    };
    raw.apply_overrides(&common.params)?;
    let env_seed = std::env::var(SEED_ENV).ok();
    let config = parse_config(cmd, &raw, env_seed.as_deref())?;
    let report = run(&config, trace.is_some())?;

    if let (Some(path), Some(text)) = (&trace, &report.trace) {
        fs::write(path, text).with_context(|| format!("writing {}", path.display()))?;
    }
    let bounds = bounds.or_else(|| common.out.as_deref().map(bounds_path));
    match &common.out {
        Some(path) => {
            fs::write(path, &report.csv).with_context(|| format!("writing {}", path.display()))?;
            println!("{}", report.summary);
        }
        None => {
            std::io::stdout().write_all(report.csv.as_bytes())?;
            eprintln!("{}", report.summary);
        }
    }
    if let Some(text) = &report.bounds {
        match &bounds {
            Some(path) => {
                fs::write(path, text).with_context(|| format!("writing {}", path.display()))?
            }
            None => eprint!("{text}"),
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match execute(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::FAILURE
        }
    }
}
