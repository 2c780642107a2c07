//! Command implementations, shared error categories, and the run manifest.

use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use serde::Serialize;

use timebin_dj::detection::{
    derive_seed, expected_visibility_report, visibility_table, visibility_table_with_counts,
    write_family_counts_csv, write_visibility_csv, VisibilityReport,
};
use timebin_dj::experiment::{propagate, run_ideal, throughput_budget};
use timebin_dj::oracles::{oracle_bv, parse_truth_table, OracleSpec};
use timebin_dj::reference::{dj_verdict, DjVerdict};
use timebin_dj::BitString;

use crate::config::{validate_bundle, Bundle};

/// Stable error categories for scripted callers; printed as
/// `error[<category>]: <message>`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Category {
    Usage,
    Config,
    Oracle,
    Io,
}

impl fmt::Display for Category {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let name = match self {
            Category::Usage => "usage",
            Category::Config => "config",
            Category::Oracle => "oracle",
            Category::Io => "io",
        };
        f.write_str(name)
    }
}

#[derive(Debug)]
pub struct CliError {
    pub category: Category,
    pub message: String,
}

impl CliError {
    pub fn usage(message: impl Into<String>) -> Self {
        Self {
            category: Category::Usage,
            message: message.into(),
        }
    }

    pub fn config(message: impl Into<String>) -> Self {
        Self {
            category: Category::Config,
            message: message.into(),
        }
    }

    pub fn oracle(message: impl Into<String>) -> Self {
        Self {
            category: Category::Oracle,
            message: message.into(),
        }
    }

    pub fn io(message: impl Into<String>) -> Self {
        Self {
            category: Category::Io,
            message: message.into(),
        }
    }

    pub fn exit_code(&self) -> i32 {
        match self.category {
            Category::Usage => 2,
            _ => 1,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "error[{}]: {}", self.category, self.message)
    }
}

/// Where the active setup came from; echoed in output headers and manifests.
#[derive(Clone, Debug)]
pub struct BundleOrigin {
    pub config_path: Option<PathBuf>,
    pub preset: Option<String>,
}

/// Written next to every stochastic CSV (or to stderr when no file output was
/// requested) so a run can be reproduced exactly.
#[derive(Serialize)]
pub struct RunManifest {
    pub command: String,
    pub config_path: Option<String>,
    pub preset: Option<String>,
    pub n: usize,
    pub seed: u64,
    pub runs: u64,
    pub outputs: Vec<String>,
    pub timestamp_unix: u64,
}

impl RunManifest {
    fn new(command: &str, origin: &BundleOrigin, n: usize, seed: u64, runs: u64) -> Self {
        Self {
            command: command.to_string(),
            config_path: origin
                .config_path
                .as_ref()
                .map(|p| p.display().to_string()),
            preset: origin.preset.clone(),
            n,
            seed,
            runs,
            outputs: Vec::new(),
            timestamp_unix: SystemTime::now()
                .duration_since(UNIX_EPOCH)
                .map(|d| d.as_secs())
                .unwrap_or(0),
        }
    }

    /// Serializes next to the primary output file, or to stderr when the run
    /// produced no files. Never mixed into the CSVs themselves.
    fn emit(&self, primary_output: Option<&Path>) -> Result<(), CliError> {
        let json = serde_json::to_string_pretty(self)
            .map_err(|e| CliError::io(format!("manifest serialization failed: {e}")))?;
        match primary_output {
            Some(path) => {
                let mut manifest_path = path.as_os_str().to_owned();
                manifest_path.push(".manifest.json");
                let manifest_path = PathBuf::from(manifest_path);
                fs::write(&manifest_path, json.as_bytes()).map_err(|e| {
                    CliError::io(format!("cannot write {}: {e}", manifest_path.display()))
                })?;
            }
            None => eprintln!("{json}"),
        }
        Ok(())
    }
}

/// Scientific notation with accumulated floating-point noise scrubbed:
/// rounds to 12 significant digits, plenty for every printed budget while
/// keeping exact dyadic values exact (`7.8125e-3`, not `7.812500000000014e-3`).
fn sci(x: f64) -> String {
    if x == 0.0 || !x.is_finite() {
        return format!("{x:e}");
    }
    let magnitude = x.abs().log10().floor() as i32;
    let factor = 10f64.powi(11 - magnitude);
    format!("{:e}", (x * factor).round() / factor)
}

/// The oracle selected on the `run` command line.
pub enum OracleChoice {
    HiddenShift(String),
    Constant(u8),
    TruthTableFile(PathBuf),
}

/// Query style: `dj` reports constant/balanced, `bv` reports the recovered
/// shift. Defaults to `bv` for `--bv`, `dj` otherwise.
#[derive(Clone, Copy, Debug, PartialEq, Eq, clap::ValueEnum)]
pub enum Mode {
    Dj,
    Bv,
}

pub fn cmd_validate(bundle: &Bundle) -> Result<(), CliError> {
    let violations = validate_bundle(bundle);
    if violations.is_empty() {
        let delays: Vec<i64> = bundle.config.arms.iter().map(|a| a.delay).collect();
        println!(
            "configuration OK: n={}, deltas={:?}, arm_Ls={:?}",
            bundle.config.n, bundle.config.deltas, delays
        );
        Ok(())
    } else {
        for violation in &violations {
            println!("violation: {violation}");
        }
        Err(CliError::config(format!(
            "{} violation(s) found",
            violations.len()
        )))
    }
}

fn resolve_oracle(n: usize, choice: &OracleChoice) -> Result<OracleSpec, CliError> {
    match choice {
        OracleChoice::HiddenShift(bits) => {
            let shift = BitString::parse(bits).map_err(|e| CliError::oracle(e.to_string()))?;
            if shift.len() != n {
                return Err(CliError::oracle(format!(
                    "hidden shift `{bits}` has {} bits but the setup has n={n}",
                    shift.len()
                )));
            }
            Ok(oracle_bv(&shift))
        }
        OracleChoice::Constant(value) => {
            OracleSpec::constant(n, *value).map_err(|e| CliError::oracle(e.to_string()))
        }
        OracleChoice::TruthTableFile(path) => {
            let text = fs::read_to_string(path)
                .map_err(|e| CliError::io(format!("cannot read {}: {e}", path.display())))?;
            let oracle =
                parse_truth_table(&text).map_err(|e| CliError::oracle(e.to_string()))?;
            if oracle.n() != n {
                return Err(CliError::oracle(format!(
                    "oracle in {} takes {} inputs but the setup has n={n}",
                    path.display(),
                    oracle.n()
                )));
            }
            Ok(oracle)
        }
    }
}

pub fn cmd_run(bundle: &Bundle, choice: &OracleChoice, mode: Mode) -> Result<(), CliError> {
    let config = &bundle.config;
    let oracle = resolve_oracle(config.n, choice)?;
    let distribution =
        run_ideal(config, &oracle).map_err(|e| CliError::config(e.to_string()))?;
    let budget =
        throughput_budget(config, &oracle).map_err(|e| CliError::config(e.to_string()))?;
    let result = propagate(config, &oracle).map_err(|e| CliError::config(e.to_string()))?;

    let mode_label = match mode {
        Mode::Dj => "dj",
        Mode::Bv => "bv",
    };
    println!("n={} oracle={} mode={}", config.n, oracle.name, mode_label);
    for z in BitString::all(config.n) {
        println!("z={z} P={:.6}", distribution.probability(&z));
    }
    match mode {
        Mode::Bv => {
            let outcome = distribution.argmax();
            println!(
                "outcome={}, P={:.6}, throughput={}",
                outcome,
                distribution.probability(&outcome),
                sci(budget.total)
            );
        }
        Mode::Dj => {
            let verdict = match dj_verdict(&distribution) {
                DjVerdict::Constant => "constant",
                DjVerdict::Balanced => "balanced",
            };
            let zeros = BitString::zeros(config.n);
            println!(
                "verdict={}, P({})={:.6}, throughput={}",
                verdict,
                zeros,
                distribution.probability(&zeros),
                sci(budget.total)
            );
        }
    }
    println!("occupied_bins={}", result.occupied_bins());
    Ok(())
}

pub fn cmd_throughput(bundle: &Bundle) -> Result<(), CliError> {
    // The loss budget does not depend on which oracle is loaded; probe with
    // the constant one.
    let probe = OracleSpec::constant(bundle.config.n, 0)
        .map_err(|e| CliError::config(e.to_string()))?;
    let budget = throughput_budget(&bundle.config, &probe)
        .map_err(|e| CliError::config(e.to_string()))?;
    println!("forward_power={}", sci(budget.forward_power));
    println!("interference_fraction={}", sci(budget.interference_fraction));
    println!("final_coupler={}", sci(budget.final_coupler));
    println!("total={}", sci(budget.total));
    Ok(())
}

fn print_visibility_report(report: &VisibilityReport) {
    println!(
        "visibility: n={}, runs={}, seed={}",
        report.n,
        report.runs,
        report
            .seed
            .map(|s| s.to_string())
            .unwrap_or_else(|| "-".to_string())
    );
    for (z, bin) in &report.per_bin {
        println!(
            "V({z}) = {:.2}% stderr={:.2}% pairs={}",
            100.0 * bin.visibility,
            100.0 * bin.stderr,
            bin.samples
        );
    }
}

pub fn cmd_visibility(
    bundle: &Bundle,
    origin: &BundleOrigin,
    runs: u64,
    seed: u64,
    out: Option<&Path>,
    counts_out: Option<&Path>,
) -> Result<(), CliError> {
    if runs == 0 {
        return Err(CliError::usage("--runs must be at least 1"));
    }
    let (report, counts) = visibility_table_with_counts(
        &bundle.config,
        &bundle.source,
        &bundle.detector,
        runs,
        seed,
    )
    .map_err(|e| CliError::config(e.to_string()))?;

    print_visibility_report(&report);

    let mut manifest = RunManifest::new("visibility", origin, bundle.config.n, seed, runs);
    if let Some(path) = out {
        let mut csv = Vec::new();
        write_visibility_csv(&mut csv, &report).map_err(|e| CliError::io(e.to_string()))?;
        fs::write(path, &csv)
            .map_err(|e| CliError::io(format!("cannot write {}: {e}", path.display())))?;
        manifest.outputs.push(path.display().to_string());
    }
    if let Some(path) = counts_out {
        let mut csv = Vec::new();
        write_family_counts_csv(&mut csv, &bundle.config, &counts)
            .map_err(|e| CliError::io(e.to_string()))?;
        fs::write(path, &csv)
            .map_err(|e| CliError::io(format!("cannot write {}: {e}", path.display())))?;
        manifest.outputs.push(path.display().to_string());
    }
    manifest.emit(out.or(counts_out))?;
    Ok(())
}

/// Imperfection and noise knobs `sweep` can scan.
#[derive(Clone, Copy, Debug, PartialEq, Eq, clap::ValueEnum)]
pub enum Knob {
    /// Coupler splitting-ratio bias.
    Eps,
    /// Per-arm, per-pass phase noise RMS.
    #[value(name = "sigma_phi")]
    SigmaPhi,
    /// Interference cross-term scalar.
    V,
    /// Detector dark-count rate per nanosecond.
    #[value(name = "dark_rate")]
    DarkRate,
    /// Mean photon number per pulse at the modulator.
    Mu,
}

impl Knob {
    fn label(self) -> &'static str {
        match self {
            Knob::Eps => "eps",
            Knob::SigmaPhi => "sigma_phi",
            Knob::V => "v",
            Knob::DarkRate => "dark_rate",
            Knob::Mu => "mu",
        }
    }

    fn apply(self, bundle: &mut Bundle, value: f64) {
        match self {
            Knob::Eps => bundle.config.imperfections.coupler_imbalance = value,
            Knob::SigmaPhi => bundle.config.imperfections.phase_jitter_sigma = value,
            Knob::V => bundle.config.imperfections.visibility_scalar = value,
            Knob::DarkRate => bundle.detector.dark_rate_per_ns = value,
            Knob::Mu => bundle.source.mu_at_modulator = value,
        }
    }
}

pub fn cmd_sweep(
    bundle: &Bundle,
    origin: &BundleOrigin,
    knob: Knob,
    values: &[f64],
    runs: u64,
    seed: u64,
    out: Option<&Path>,
) -> Result<(), CliError> {
    if values.is_empty() {
        return Err(CliError::usage("--values needs at least one entry"));
    }
    if runs == 0 {
        return Err(CliError::usage("--runs must be at least 1"));
    }

    let mut csv = String::from("knob,value,z,expected_V,sampled_V\n");
    for (idx, &value) in values.iter().enumerate() {
        let mut variant = bundle.clone();
        knob.apply(&mut variant, value);
        let violations = validate_bundle(&variant);
        if !violations.is_empty() {
            return Err(CliError::config(format!(
                "{}={value} makes the setup invalid: {}",
                knob.label(),
                violations.join("; ")
            )));
        }
        let expected = expected_visibility_report(
            &variant.config,
            &variant.source,
            &variant.detector,
            runs,
        )
        .map_err(|e| CliError::config(e.to_string()))?;
        let sampled = visibility_table(
            &variant.config,
            &variant.source,
            &variant.detector,
            runs,
            derive_seed(seed, idx as u64),
        )
        .map_err(|e| CliError::config(e.to_string()))?;
        let mut mean = 0.0;
        for ((z, exp_bin), (_, got_bin)) in expected.per_bin.iter().zip(&sampled.per_bin) {
            csv.push_str(&format!(
                "{},{},{},{:.6},{:.6}\n",
                knob.label(),
                value,
                z,
                exp_bin.visibility,
                got_bin.visibility
            ));
            mean += got_bin.visibility;
        }
        mean /= sampled.per_bin.len() as f64;
        println!(
            "{}={value}: mean sampled V = {:.2}%",
            knob.label(),
            100.0 * mean
        );
    }

    let mut manifest = RunManifest::new("sweep", origin, bundle.config.n, seed, runs);
    match out {
        Some(path) => {
            fs::write(path, csv.as_bytes())
                .map_err(|e| CliError::io(format!("cannot write {}: {e}", path.display())))?;
            manifest.outputs.push(path.display().to_string());
        }
        None => print!("{csv}"),
    }
    manifest.emit(out)?;
    Ok(())
}
