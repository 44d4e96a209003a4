use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use rslab::commands::{execute, replay};
use rslab::config::RunConfig;
use rslab::error::{CliError, CliResult};

/// Regularity-structure and dynamic Φ⁴ experiments.
#[derive(Parser, Debug)]
#[command(name = "rslab", version)]
struct Cli {
    #[command(subcommand)]
    command: Cmd,
}

#[derive(Subcommand, Debug)]
enum Cmd {
    /// Symbol table of a regularity structure
    Symbols(RunArgs),
    /// Sample white noise (and its mollification)
    Sample(RunArgs),
    /// Solve dynamic Φ⁴ (naive, renormalized or remainder form)
    Solve(RunArgs),
    /// Glauber dynamics of the Kac-Ising model
    Ising(RunArgs),
    /// Estimate the regularity exponent of an RSF1 field
    Estimate(RunArgs),
    /// Renormalization constants over a range of δ
    Wick(RunArgs),
    /// Abstract fixed point on the Φ⁴₂ grid model
    Reconstruct(RunArgs),
    /// Run the acceptance suite
    Verify(RunArgs),
    /// Re-run a manifest and compare RSF1 digests
    Replay {
        manifest: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Args, Debug)]
struct RunArgs {
    /// Sectioned key = value config (a manifest works too)
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory
    #[arg(long, default_value = "out")]
    out: PathBuf,
    /// Override `section.key=value`; repeatable
    #[arg(long = "set", value_name = "SECTION.KEY=VALUE")]
    sets: Vec<String>,
    /// Shorthand `--key value` for any key that is unique within the command's schema
    #[arg(trailing_var_arg = true, allow_hyphen_values = true, hide = true)]
    flags: Vec<String>,
}

/// Resolved `(config file, output dir, overrides)`; shorthand flags may be
/// interleaved with the named options.
fn resolve_args(command: &str, a: &RunArgs) -> CliResult<(Option<PathBuf>, PathBuf, Vec<(String, String)>)> {
    let (mut config, mut out, mut sets) = (a.config.clone(), a.out.clone(), a.sets.clone());
    let mut short = Vec::new();
    let mut it = a.flags.iter();
    while let Some(flag) = it.next() {
        let key = flag.strip_prefix("--").ok_or_else(|| CliError::Config(format!("unexpected argument '{flag}'")))?;
        let (key, value) = match key.split_once('=') {
            Some((k, v)) => (k.to_string(), v.to_string()),
            None => {
                let v = it.next().ok_or_else(|| CliError::Config(format!("--{key} needs a value")))?;
                (key.to_string(), v.clone())
            }
        };
        match key.as_str() {
            "config" => config = Some(PathBuf::from(value)),
            "out" => out = PathBuf::from(value),
            "set" => sets.push(value),
            _ => short.push((key.replace('-', "_"), value)),
        }
    }
    let mut ov = Vec::new();
    for s in &sets {
        let (k, v) = s.split_once('=').ok_or_else(|| CliError::Config(format!("--set expects section.key=value, got '{s}'")))?;
        ov.push((k.trim().to_string(), v.trim().to_string()));
    }
    let defaults = RunConfig::resolve(command, None, &[])?;
    for (k, v) in short {
        ov.push((defaults.qualify(&k)?, v));
    }
    Ok((config, out, ov))
}

fn run(cli: Cli) -> CliResult<()> {
    let (command, a) = match cli.command {
        Cmd::Replay { manifest, out } => {
            let diff = replay(&manifest, &out, true)?;
            if diff.is_empty() {
                println!("replay: RSF1 outputs identical");
                return Ok(());
            }
            return Err(CliError::Failed(format!("replay: outputs differ: {}", diff.join(", "))));
        }
        Cmd::Symbols(a) => ("symbols", a),
        Cmd::Sample(a) => ("sample", a),
        Cmd::Solve(a) => ("solve", a),
        Cmd::Ising(a) => ("ising", a),
        Cmd::Estimate(a) => ("estimate", a),
        Cmd::Wick(a) => ("wick", a),
        Cmd::Reconstruct(a) => ("reconstruct", a),
        Cmd::Verify(a) => ("verify", a),
    };
    let (config, out, ov) = resolve_args(command, &a)?;
    let cfg = match &config {
        Some(p) => RunConfig::from_path(command, p, &ov)?,
        None => RunConfig::resolve(command, None, &ov)?,
    };
    let (manifest, failure) = execute(&cfg, &out)?;
    for name in manifest.outputs.keys() {
        println!("{}", out.join(name).display());
    }
    match failure {
        Some(e) => Err(e),
        None => Ok(()),
    }
}

fn main() -> ExitCode {
    if let Some(n) = std::env::var("RSL_THREADS").ok().and_then(|v| v.parse::<usize>().ok()) {
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n.max(1)).build_global();
    }
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("rslab: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
