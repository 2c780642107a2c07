//! Key-value experiment description files.
//!
//! One `key = value` assignment per line; `#` starts a comment; blank lines
//! are ignored. `n` is required, everything else defaults to the reference
//! setup for that size. Keys:
//!
//! ```text
//! n = 3                          # number of stages (required)
//! deltas = 1,2,4                 # long-arm delays, elementary units
//! arm_Ls = 9,19,39               # return delay-line lengths
//! phis = 0,0,0                   # long-arm phases, rad (normalized to [0, 2*pi))
//! transmittances = 0.5           # 1 value (all), n (per stage), or 2n (in,out per stage)
//! lossless_routing = false
//! final_coupler_transmittance = 0.5
//! unit_ns = 3.75                 # physical duration of one delay unit
//! imperfections.eps = 0.0        # coupler splitting-ratio bias
//! imperfections.sigma_phi = 0.0  # per-arm, per-pass phase noise RMS, rad
//! imperfections.v = 1.0          # interference cross-term scalar
//! source.mu = 50                 # photons per pulse at the phase modulator
//! detector.efficiency = 0.105
//! detector.dark_rate_per_ns = 1e-4
//! detector.gate_ns = 5
//! ```

use std::collections::BTreeSet;
use std::fmt;

use timebin_dj::detection::{DetectorModel, SourceModel};
use timebin_dj::experiment::{validate_config, ExperimentConfig};

/// Everything a command needs: the setup plus source and detector.
#[derive(Clone, Debug)]
pub struct Bundle {
    pub config: ExperimentConfig,
    pub source: SourceModel,
    pub detector: DetectorModel,
}

#[derive(Debug)]
pub struct ConfigError {
    pub line: Option<usize>,
    pub message: String,
}

impl ConfigError {
    fn at(line: usize, message: impl Into<String>) -> Self {
        Self {
            line: Some(line),
            message: message.into(),
        }
    }

    fn general(message: impl Into<String>) -> Self {
        Self {
            line: None,
            message: message.into(),
        }
    }
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.line {
            Some(line) => write!(f, "line {line}: {}", self.message),
            None => write!(f, "{}", self.message),
        }
    }
}

impl std::error::Error for ConfigError {}

/// Parses an experiment description. Syntax, types, and per-field ranges are
/// checked here with line attribution; whole-setup consistency is the job of
/// [`validate_bundle`].
pub fn parse_config(text: &str) -> Result<Bundle, ConfigError> {
    let mut entries: Vec<(usize, String, String)> = Vec::new();
    let mut seen: BTreeSet<String> = BTreeSet::new();
    for (idx, raw) in text.lines().enumerate() {
        let line_no = idx + 1;
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (key, value) = line
            .split_once('=')
            .ok_or_else(|| ConfigError::at(line_no, "expected `key = value`"))?;
        let key = key.trim().to_string();
        let value = value.trim().to_string();
        if key.is_empty() || value.is_empty() {
            return Err(ConfigError::at(line_no, "expected `key = value`"));
        }
        if !seen.insert(key.clone()) {
            return Err(ConfigError::at(line_no, format!("duplicate key `{key}`")));
        }
        entries.push((line_no, key, value));
    }

    let (n_line, n) = match entries.iter().find(|(_, k, _)| k == "n") {
        Some((line, _, value)) => (*line, parse_usize(*line, "n", value)?),
        None => return Err(ConfigError::general("missing required key `n`")),
    };
    if n == 0 {
        return Err(ConfigError::at(n_line, "n must be at least 1"));
    }

    let mut config = ExperimentConfig::ideal(n);
    let mut source = SourceModel::default_for_stages(n);
    let mut detector = DetectorModel::default();

    for (line, key, value) in &entries {
        let line = *line;
        match key.as_str() {
            "n" => {}
            "deltas" => {
                config.deltas = parse_i64_list(line, key, value, n)?;
            }
            "arm_Ls" => {
                let delays = parse_i64_list(line, key, value, n)?;
                for (arm, delay) in config.arms.iter_mut().zip(delays) {
                    arm.delay = delay;
                }
            }
            "phis" => {
                let phis = parse_f64_list(line, key, value, n)?;
                config = config.with_phis(phis);
            }
            "transmittances" => {
                let values = parse_f64_free_list(line, key, value)?;
                for &t in &values {
                    check_range(line, key, t, 0.0, 1.0)?;
                }
                match values.len() {
                    1 => {
                        for pair in config.couplers.iter_mut() {
                            pair.0.transmittance = values[0];
                            pair.1.transmittance = values[0];
                        }
                    }
                    len if len == n => {
                        for (pair, &t) in config.couplers.iter_mut().zip(&values) {
                            pair.0.transmittance = t;
                            pair.1.transmittance = t;
                        }
                    }
                    len if len == 2 * n => {
                        for (stage, pair) in config.couplers.iter_mut().enumerate() {
                            pair.0.transmittance = values[2 * stage];
                            pair.1.transmittance = values[2 * stage + 1];
                        }
                    }
                    len => {
                        return Err(ConfigError::at(
                            line,
                            format!("`{key}` takes 1, {n}, or {} values, got {len}", 2 * n),
                        ));
                    }
                }
            }
            "lossless_routing" => {
                config.lossless_routing = parse_bool(line, key, value)?;
            }
            "final_coupler_transmittance" => {
                let t = parse_f64(line, key, value)?;
                check_range(line, key, t, 0.0, 1.0)?;
                config.final_coupler_transmittance = t;
            }
            "unit_ns" => {
                let u = parse_f64(line, key, value)?;
                if !(u > 0.0 && u.is_finite()) {
                    return Err(ConfigError::at(line, format!("`{key}` must be positive")));
                }
                config.unit_ns = u;
            }
            "imperfections.eps" => {
                let eps = parse_f64(line, key, value)?;
                check_range(line, key, eps, -0.5, 0.5)?;
                config.imperfections.coupler_imbalance = eps;
            }
            "imperfections.sigma_phi" => {
                let sigma = parse_f64(line, key, value)?;
                if !(sigma >= 0.0 && sigma.is_finite()) {
                    return Err(ConfigError::at(
                        line,
                        format!("`{key}` must be finite and >= 0"),
                    ));
                }
                config.imperfections.phase_jitter_sigma = sigma;
            }
            "imperfections.v" => {
                let v = parse_f64(line, key, value)?;
                check_range(line, key, v, 0.0, 1.0)?;
                config.imperfections.visibility_scalar = v;
            }
            "source.mu" => {
                let mu = parse_f64(line, key, value)?;
                source = SourceModel::new(mu)
                    .map_err(|e| ConfigError::at(line, e.to_string()))?;
            }
            "detector.efficiency" => {
                let eta = parse_f64(line, key, value)?;
                check_range(line, key, eta, 0.0, 1.0)?;
                detector.efficiency = eta;
            }
            "detector.dark_rate_per_ns" => {
                let rate = parse_f64(line, key, value)?;
                if !(rate >= 0.0 && rate.is_finite()) {
                    return Err(ConfigError::at(
                        line,
                        format!("`{key}` must be finite and >= 0"),
                    ));
                }
                detector.dark_rate_per_ns = rate;
            }
            "detector.gate_ns" => {
                let gate = parse_f64(line, key, value)?;
                if !(gate > 0.0 && gate.is_finite()) {
                    return Err(ConfigError::at(line, format!("`{key}` must be positive")));
                }
                detector.gate_ns = gate;
            }
            other => {
                return Err(ConfigError::at(line, format!("unknown key `{other}`")));
            }
        }
    }

    Ok(Bundle {
        config,
        source,
        detector,
    })
}

/// Whole-setup consistency check; returns the human-readable violation list.
pub fn validate_bundle(bundle: &Bundle) -> Vec<String> {
    validate_config(&bundle.config)
        .iter()
        .map(|v| v.to_string())
        .collect()
}

fn parse_usize(line: usize, key: &str, value: &str) -> Result<usize, ConfigError> {
    value
        .parse()
        .map_err(|_| ConfigError::at(line, format!("`{key}` expects an unsigned integer, got `{value}`")))
}

fn parse_f64(line: usize, key: &str, value: &str) -> Result<f64, ConfigError> {
    value
        .parse()
        .map_err(|_| ConfigError::at(line, format!("`{key}` expects a number, got `{value}`")))
}

fn parse_bool(line: usize, key: &str, value: &str) -> Result<bool, ConfigError> {
    match value {
        "true" => Ok(true),
        "false" => Ok(false),
        _ => Err(ConfigError::at(
            line,
            format!("`{key}` expects true or false, got `{value}`"),
        )),
    }
}

fn parse_i64_list(line: usize, key: &str, value: &str, n: usize) -> Result<Vec<i64>, ConfigError> {
    let items: Result<Vec<i64>, _> = value.split(',').map(|s| s.trim().parse()).collect();
    let items = items.map_err(|_| {
        ConfigError::at(line, format!("`{key}` expects comma-separated integers"))
    })?;
    if items.len() != n {
        return Err(ConfigError::at(
            line,
            format!("`{key}` needs {n} entries, got {}", items.len()),
        ));
    }
    Ok(items)
}

fn parse_f64_list(line: usize, key: &str, value: &str, n: usize) -> Result<Vec<f64>, ConfigError> {
    let items = parse_f64_free_list(line, key, value)?;
    if items.len() != n {
        return Err(ConfigError::at(
            line,
            format!("`{key}` needs {n} entries, got {}", items.len()),
        ));
    }
    Ok(items)
}

fn parse_f64_free_list(line: usize, key: &str, value: &str) -> Result<Vec<f64>, ConfigError> {
    value
        .split(',')
        .map(|s| s.trim().parse())
        .collect::<Result<Vec<f64>, _>>()
        .map_err(|_| ConfigError::at(line, format!("`{key}` expects comma-separated numbers")))
}

fn check_range(line: usize, key: &str, value: f64, lo: f64, hi: f64) -> Result<(), ConfigError> {
    if (lo..=hi).contains(&value) && value.is_finite() {
        Ok(())
    } else {
        Err(ConfigError::at(
            line,
            format!("`{key}` = {value} outside [{lo}, {hi}]"),
        ))
    }
}
