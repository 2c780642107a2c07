//! Command-line front end for the time-bin interferometer simulator.
//!
//! The setup comes from `--config FILE` (key = value lines), from a named
//! `--preset`, or defaults to the ideal reference setup; `-n` picks the
//! stage count for presets and defaults. Subcommands:
//!
//! * `validate`   — check a setup and list every violation
//! * `run`        — single-query outcome distribution and loss budget
//! * `throughput` — loss budget decomposition
//! * `visibility` — Monte Carlo visibility table over the oracle family
//! * `sweep`      — scan one imperfection knob, expected vs sampled V
//!
//! Deterministic: every stochastic command takes `--seed` and writes a JSON
//! manifest recording it, so reruns reproduce CSV outputs byte for byte.

mod commands;
mod config;

use std::fs;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use timebin_dj::detection::{DetectorModel, SourceModel};
use timebin_dj::experiment::ExperimentConfig;
use timebin_dj::presets::{preset, PRESET_NAMES};

use commands::{
    cmd_run, cmd_sweep, cmd_throughput, cmd_validate, cmd_visibility, BundleOrigin, CliError,
    Knob, Mode, OracleChoice,
};
use config::{parse_config, validate_bundle, Bundle};

#[derive(Parser)]
#[command(
    name = "timebin-dj",
    version,
    about = "Fiber-loop time-bin simulator for single-query oracle algorithms"
)]
struct Cli {
    /// Experiment description file (`key = value` lines; see the README).
    #[arg(long, global = true, value_name = "FILE")]
    config: Option<PathBuf>,

    /// Named parameter bundle instead of a file: "ideal" or "realistic".
    #[arg(long, global = true, conflicts_with = "config")]
    preset: Option<String>,

    /// Stage count for presets and defaults (ignored with --config).
    #[arg(short = 'n', long = "stages", global = true, conflicts_with = "config", value_name = "N")]
    n: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Check the setup and list every violation.
    Validate,
    /// Propagate one oracle query and report the outcome distribution.
    Run {
        /// Hidden shift of a linear oracle, e.g. 101.
        #[arg(long, value_name = "BITS", conflicts_with_all = ["constant", "oracle"])]
        bv: Option<String>,
        /// Constant oracle of the given value.
        #[arg(long, value_name = "0|1", conflicts_with = "oracle")]
        constant: Option<u8>,
        /// Truth-table file (first line `n=K`, second line 2^K bits).
        #[arg(long, value_name = "FILE")]
        oracle: Option<PathBuf>,
        /// Report style; defaults to bv with --bv, dj otherwise.
        #[arg(long, value_enum)]
        mode: Option<Mode>,
    },
    /// Print the loss budget decomposition.
    Throughput,
    /// Monte Carlo visibility table over the full oracle family.
    Visibility {
        /// Detection gates per oracle.
        #[arg(long, default_value_t = 100_000)]
        runs: u64,
        /// Master seed; sub-streams derive from it deterministically.
        #[arg(long, default_value_t = 1)]
        seed: u64,
        /// Write the per-bin table as CSV (z,V,stderr).
        #[arg(long, value_name = "FILE")]
        out: Option<PathBuf>,
        /// Write raw family counts as CSV (z,bin_time_units,oracle,counts,runs).
        #[arg(long, value_name = "FILE")]
        counts_out: Option<PathBuf>,
    },
    /// Scan one knob and tabulate expected vs sampled visibility.
    Sweep {
        /// Which knob to scan.
        #[arg(long, value_enum)]
        knob: Knob,
        /// Comma-separated knob values.
        #[arg(long, value_delimiter = ',', value_name = "V1,V2,...")]
        values: Vec<f64>,
        /// Detection gates per oracle per value.
        #[arg(long, default_value_t = 20_000)]
        runs: u64,
        /// Master seed; each value gets a derived sub-seed.
        #[arg(long, default_value_t = 1)]
        seed: u64,
        /// Write the table as CSV instead of stdout.
        #[arg(long, value_name = "FILE")]
        out: Option<PathBuf>,
    },
}

/// Builds the active setup. `--config` wins; otherwise the preset (default
/// "ideal" behavior with default models) at the requested stage count.
fn resolve_bundle(cli: &Cli, validated: bool) -> Result<(Bundle, BundleOrigin), CliError> {
    if let Some(path) = &cli.config {
        let text = fs::read_to_string(path)
            .map_err(|e| CliError::io(format!("cannot read {}: {e}", path.display())))?;
        let bundle = parse_config(&text)
            .map_err(|e| CliError::config(format!("{}: {e}", path.display())))?;
        if validated {
            let violations = validate_bundle(&bundle);
            if !violations.is_empty() {
                return Err(CliError::config(format!(
                    "{}: invalid setup: {}",
                    path.display(),
                    violations.join("; ")
                )));
            }
        }
        let origin = BundleOrigin {
            config_path: Some(path.clone()),
            preset: None,
        };
        return Ok((bundle, origin));
    }

    let n = cli.n.unwrap_or(3);
    let bundle = match cli.preset.as_deref() {
        None => Bundle {
            config: ExperimentConfig::ideal(n),
            source: SourceModel::default_for_stages(n),
            detector: DetectorModel::default(),
        },
        Some(name) => {
            if !PRESET_NAMES.contains(&name) {
                return Err(CliError::usage(format!(
                    "unknown preset `{name}`; available: {}",
                    PRESET_NAMES.join(", ")
                )));
            }
            let p = preset(name, n).map_err(|e| CliError::config(e.to_string()))?;
            Bundle {
                config: p.config,
                source: p.source,
                detector: p.detector,
            }
        }
    };
    let origin = BundleOrigin {
        config_path: None,
        preset: cli.preset.clone(),
    };
    Ok((bundle, origin))
}

fn dispatch(cli: &Cli) -> Result<(), CliError> {
    // `validate` must see the violations itself instead of failing early.
    let wants_validation = !matches!(cli.command, Command::Validate);
    let (bundle, origin) = resolve_bundle(cli, wants_validation)?;
    match &cli.command {
        Command::Validate => cmd_validate(&bundle),
        Command::Run {
            bv,
            constant,
            oracle,
            mode,
        } => {
            let choice = match (bv, constant, oracle) {
                (Some(bits), None, None) => OracleChoice::HiddenShift(bits.clone()),
                (None, Some(value), None) => OracleChoice::Constant(*value),
                (None, None, Some(path)) => OracleChoice::TruthTableFile(path.clone()),
                (None, None, None) => {
                    return Err(CliError::usage(
                        "one of --bv, --constant, --oracle is required",
                    ));
                }
                _ => unreachable!("clap enforces mutual exclusion"),
            };
            let mode = mode.unwrap_or(match choice {
                OracleChoice::HiddenShift(_) => Mode::Bv,
                _ => Mode::Dj,
            });
            cmd_run(&bundle, &choice, mode)
        }
        Command::Throughput => cmd_throughput(&bundle),
        Command::Visibility {
            runs,
            seed,
            out,
            counts_out,
        } => cmd_visibility(
            &bundle,
            &origin,
            *runs,
            *seed,
            out.as_deref(),
            counts_out.as_deref(),
        ),
        Command::Sweep {
            knob,
            values,
            runs,
            seed,
            out,
        } => cmd_sweep(&bundle, &origin, *knob, values, *runs, *seed, out.as_deref()),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("{err}");
            ExitCode::from(err.exit_code() as u8)
        }
    }
}
