//! Photon statistics at the gated detector: Poissonian source, threshold
//! click model with dark counts, Monte Carlo count accumulation, and the
//! pairwise visibility estimator used to score the detection bins.
//!
//! The click model per gate and bin is
//! `p = 1 - (1 - p_dark) * exp(-mu_bin * efficiency)` with
//! `p_dark = 1 - exp(-dark_rate * gate)`: a click fires when at least one
//! photon is detected or a dark event falls inside the gate. The mean photon
//! number in detection bin z is `mu_bin(z) = mu * 2^n * transfer(z)`, where
//! `mu` counts photons per pulse at the phase modulator (the pulse train has
//! 2^n pulses) and `transfer(z)` is the modulator-to-detector transmission of
//! that bin computed by the propagation model.
//!
//! Monte Carlo streams are nested: every run of every oracle gets its own
//! block cipher RNG seeded through [`derive_seed`], so histograms are
//! bit-identical for a fixed master seed no matter how runs are scheduled or
//! parallelized.

use std::collections::BTreeMap;
use std::io;

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::components::faraday_reflect;
use crate::error::{Error, Result};
use crate::experiment::{
    apply_oracle_modulation, backward_stage_factor, detection_transfer_probabilities,
    expected_detection_transfer, forward_pass, relabel_logical_to_physical,
    relabel_physical_to_logical, throughput_budget, ExperimentConfig, OutputBin, PhaseJitter,
};
use crate::oracles::{enumerate_bv_family, OracleSpec};
use crate::timebin::BitString;

/// Weak coherent source, characterized at the phase modulator.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SourceModel {
    /// Mean photons per pulse entering the phase modulator.
    pub mu_at_modulator: f64,
}

impl SourceModel {
    pub fn new(mu_at_modulator: f64) -> Result<Self> {
        if !(mu_at_modulator >= 0.0 && mu_at_modulator.is_finite()) {
            return Err(Error::InvalidParameter {
                what: "source mean photon number",
                value: mu_at_modulator,
                constraint: "finite and >= 0",
            });
        }
        Ok(Self { mu_at_modulator })
    }

    /// Operating points used for the reference measurements: about 20 photons
    /// per pulse for setups up to two stages, about 50 for larger ones.
    pub fn default_for_stages(n: usize) -> Self {
        Self {
            mu_at_modulator: if n <= 2 { 20.0 } else { 50.0 },
        }
    }

    /// Mean photon number per pulse train at the laser output needed to
    /// produce this modulator-level value, given the forward losses of the
    /// setup (4^n-fold for the ideal passive chain: 2^n forward splitting
    /// times the 2^n pulses of the train).
    pub fn laser_photons_per_train(&self, config: &ExperimentConfig) -> Result<f64> {
        let oracle = OracleSpec::constant(config.n, 0)?;
        let forward = throughput_budget(config, &oracle)?.forward_power;
        if forward <= 0.0 {
            return Err(Error::InvalidConfig(
                "forward pass transmits no light; check coupler transmittances".into(),
            ));
        }
        Ok(self.mu_at_modulator * (1u64 << config.n) as f64 / forward)
    }

    /// Solves for the mean photon number that makes the strongest detection
    /// bin click with the given probability, at the configured dark rate.
    pub fn tuned_for_click_probability(
        config: &ExperimentConfig,
        detector: &DetectorModel,
        target: f64,
    ) -> Result<Self> {
        detector.validate()?;
        let p_dark = detector.dark_click_probability();
        if !(target > p_dark && target < 1.0) {
            return Err(Error::InvalidParameter {
                what: "target click probability",
                value: target,
                constraint: "strictly between the dark-click floor and 1",
            });
        }
        let oracle = OracleSpec::constant(config.n, 0)?;
        let transfer = expected_detection_transfer(config, &oracle)?;
        let best = transfer.iter().cloned().fold(0.0f64, f64::max);
        if best <= 0.0 || detector.efficiency <= 0.0 {
            return Err(Error::InvalidConfig(
                "no detectable signal path to tune against".into(),
            ));
        }
        let mu_bin = -((1.0 - target) / (1.0 - p_dark)).ln() / detector.efficiency;
        Ok(Self {
            mu_at_modulator: mu_bin / ((1u64 << config.n) as f64 * best),
        })
    }
}

/// Gated single-photon detector.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DetectorModel {
    /// Quantum efficiency.
    pub efficiency: f64,
    /// Dark events per nanosecond inside the gate.
    pub dark_rate_per_ns: f64,
    /// Gate width in nanoseconds.
    pub gate_ns: f64,
}

impl Default for DetectorModel {
    fn default() -> Self {
        Self {
            efficiency: 0.105,
            dark_rate_per_ns: 1e-4,
            gate_ns: 5.0,
        }
    }
}

impl DetectorModel {
    pub fn new(efficiency: f64, dark_rate_per_ns: f64, gate_ns: f64) -> Result<Self> {
        let model = Self {
            efficiency,
            dark_rate_per_ns,
            gate_ns,
        };
        model.validate()?;
        Ok(model)
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.efficiency) {
            return Err(Error::InvalidParameter {
                what: "detector efficiency",
                value: self.efficiency,
                constraint: "0 <= efficiency <= 1",
            });
        }
        if !(self.dark_rate_per_ns >= 0.0 && self.dark_rate_per_ns.is_finite()) {
            return Err(Error::InvalidParameter {
                what: "dark rate per ns",
                value: self.dark_rate_per_ns,
                constraint: "finite and >= 0",
            });
        }
        if !(self.gate_ns > 0.0 && self.gate_ns.is_finite()) {
            return Err(Error::InvalidParameter {
                what: "gate width in ns",
                value: self.gate_ns,
                constraint: "finite and > 0",
            });
        }
        Ok(())
    }

    /// Probability of a dark click within one gate.
    pub fn dark_click_probability(&self) -> f64 {
        1.0 - (-self.dark_rate_per_ns * self.gate_ns).exp()
    }
}

/// Threshold-click probability for one gated bin holding `mu_bin` mean
/// photons.
pub fn click_probability(mu_bin: f64, detector: &DetectorModel) -> f64 {
    let p_dark = detector.dark_click_probability();
    1.0 - (1.0 - p_dark) * (-mu_bin * detector.efficiency).exp()
}

/// One fresh RNG stream per (base, index): the master seed is chained through
/// an integer hash so sibling streams (oracles of a family, runs of a
/// histogram) are decorrelated and independent of evaluation order.
pub fn derive_seed(base: u64, index: u64) -> u64 {
    splitmix64(base ^ index)
}

fn splitmix64(state: u64) -> u64 {
    let mut z = state.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Accumulated clicks per logical detection bin.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct CountHistogram {
    pub runs: u64,
    /// Logical outcome label -> number of runs with a click in that bin.
    /// Every label is present, including zero-count ones.
    pub counts: BTreeMap<BitString, u64>,
}

impl CountHistogram {
    pub fn count(&self, z: &BitString) -> u64 {
        self.counts.get(z).copied().unwrap_or(0)
    }
}

/// Per-path transfer matrix from the modulator to the detection bins,
/// factored so that a jitter draw only costs a phase rotation per path.
/// Row z (physical exit record), column x (forward path): the product of the
/// modulated input amplitude and all return-stage factors at nominal phases.
struct PathKernel {
    n: usize,
    matrix: Vec<Vec<Complex64>>,
    /// Jitter-independent per-row sum of squared path magnitudes.
    incoherent: Vec<f64>,
    modulator_power: f64,
    /// Lex index of the logical label of each physical row.
    logical_index: Vec<usize>,
}

impl PathKernel {
    fn build(config: &ExperimentConfig, oracle: &OracleSpec) -> Result<Self> {
        let n = config.n;
        let size = 1usize << n;
        let forward = forward_pass(config)?;
        let modulated = apply_oracle_modulation(&faraday_reflect(&forward), oracle, config)?;
        let modulator_power = modulated.total_probability();
        if modulator_power <= 0.0 {
            return Err(Error::InvalidConfig(
                "no light reaches the modulator; check coupler transmittances".into(),
            ));
        }
        let couplers = config.effective_couplers();
        let bin_map = config.forward_bin_map();
        let mut matrix = vec![vec![Complex64::new(0.0, 0.0); size]; size];
        let mut incoherent = vec![0.0; size];
        let mut logical_index = vec![0usize; size];
        for (z_lex, z) in BitString::all(n).enumerate() {
            for (bin, a_in) in modulated.iter() {
                let x = &bin_map[&bin];
                let mut amp = a_in;
                for l in 0..n {
                    let y = 1 - x.bit(l);
                    let z_next = if l + 1 < n { z.bit(l + 1) } else { 0 };
                    amp *= backward_stage_factor(&couplers[l], config.phis[l], y, z.bit(l), z_next);
                }
                matrix[z_lex][x.lex_index()] = amp;
                incoherent[z_lex] += amp.norm_sqr();
            }
            logical_index[z_lex] = relabel_physical_to_logical(&z).lex_index();
        }
        Ok(Self {
            n,
            matrix,
            incoherent,
            modulator_power,
            logical_index,
        })
    }

    /// Modulator-to-detector transfer per logical bin for one jitter draw.
    /// Must agree with the full propagation; the cross-check lives in the
    /// tests below.
    fn transfer(&self, config: &ExperimentConfig, jitter: Option<&PhaseJitter>) -> Vec<f64> {
        let n = self.n;
        let size = 1usize << n;
        // Phase rotation of path x: forward jitter on stages with x_l = 1,
        // return jitter on the complementary stages (y = 1 - x).
        let mut rotation = vec![Complex64::new(1.0, 0.0); size];
        if let Some(j) = jitter {
            let cf: Vec<Complex64> = j.forward.iter().map(|&p| Complex64::cis(p)).collect();
            let cb: Vec<Complex64> = j.backward.iter().map(|&p| Complex64::cis(p)).collect();
            for (x_lex, rot) in rotation.iter_mut().enumerate() {
                for l in 0..n {
                    let bit = (x_lex >> (n - 1 - l)) & 1;
                    *rot *= if bit == 1 { cf[l] } else { cb[l] };
                }
            }
        }
        let v = config.imperfections.visibility_scalar;
        let mut raw = vec![0.0; size];
        for z_lex in 0..size {
            let mut coherent = Complex64::new(0.0, 0.0);
            for (x_lex, rot) in rotation.iter().enumerate() {
                coherent += self.matrix[z_lex][x_lex] * rot;
            }
            raw[self.logical_index[z_lex]] =
                v * coherent.norm_sqr() + (1.0 - v) * self.incoherent[z_lex];
        }
        if config.lossless_routing {
            let total: f64 = raw.iter().sum();
            for q in raw.iter_mut() {
                *q /= total;
            }
        } else {
            for q in raw.iter_mut() {
                *q = *q / self.modulator_power * config.final_coupler_transmittance;
            }
        }
        raw
    }
}

/// Runs the experiment `runs` times and histograms the clicks per logical
/// detection bin. Each run gates every bin once; with phase jitter enabled
/// the stage phases are redrawn per run (forward stages first, then return
/// stages), reproducing run-to-run interferometer drift.
pub fn simulate_counts(
    config: &ExperimentConfig,
    oracle: &OracleSpec,
    source: &SourceModel,
    detector: &DetectorModel,
    runs: u64,
    seed: u64,
) -> Result<CountHistogram> {
    if runs == 0 {
        return Err(Error::InvalidParameter {
            what: "runs",
            value: 0.0,
            constraint: ">= 1",
        });
    }
    SourceModel::new(source.mu_at_modulator)?;
    detector.validate()?;
    let n = config.n;
    let size = 1usize << n;
    let sigma = config.imperfections.phase_jitter_sigma;
    let photons_per_train = source.mu_at_modulator * size as f64;

    let click_from_transfer = |transfer: &[f64]| -> Vec<f64> {
        transfer
            .iter()
            .map(|&t| click_probability(photons_per_train * t, detector))
            .collect()
    };

    let mut counts = vec![0u64; size];
    if sigma == 0.0 {
        let p = click_from_transfer(&detection_transfer_probabilities(config, oracle, None)?);
        for run in 0..runs {
            let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, run));
            for (z_lex, &pz) in p.iter().enumerate() {
                if rng.random::<f64>() < pz {
                    counts[z_lex] += 1;
                }
            }
        }
    } else {
        let kernel = PathKernel::build(config, oracle)?;
        for run in 0..runs {
            let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, run));
            let jitter = PhaseJitter::draw(n, sigma, &mut rng)?;
            let p = click_from_transfer(&kernel.transfer(config, Some(&jitter)));
            for (z_lex, &pz) in p.iter().enumerate() {
                if rng.random::<f64>() < pz {
                    counts[z_lex] += 1;
                }
            }
        }
    }

    Ok(CountHistogram {
        runs,
        counts: BitString::all(n)
            .zip(counts)
            .collect(),
    })
}

/// Expected click probability per logical bin, jitter-averaged. Exact when
/// the jitter is off; with jitter it propagates the averaged bin power
/// through the click nonlinearity, which is the quoted closed form for
/// parameter sweeps.
pub fn expected_click_probabilities(
    config: &ExperimentConfig,
    oracle: &OracleSpec,
    source: &SourceModel,
    detector: &DetectorModel,
) -> Result<Vec<f64>> {
    SourceModel::new(source.mu_at_modulator)?;
    detector.validate()?;
    let photons_per_train = source.mu_at_modulator * (1u64 << config.n) as f64;
    Ok(expected_detection_transfer(config, oracle)?
        .iter()
        .map(|&t| click_probability(photons_per_train * t, detector))
        .collect())
}

/// The half-sum of the two count contrasts scoring detection bin z:
/// constructive counts `n_z` (oracle matching z) and `nbar_z` (its
/// complement) against the destructive counts `n_j` of a non-matching
/// oracle. `None` when either contrast has zero total counts; such pairs are
/// excluded from averages.
pub fn visibility_pairwise(n_z: u64, n_j: u64, nbar_z: u64) -> Option<f64> {
    let first = contrast(n_z as f64, n_j as f64)?;
    let second = contrast(nbar_z as f64, n_j as f64)?;
    Some(0.5 * (first + second))
}

fn contrast(constructive: f64, destructive: f64) -> Option<f64> {
    let total = constructive + destructive;
    if total == 0.0 {
        None
    } else {
        Some((constructive - destructive) / total)
    }
}

/// Visibility of one detection bin with its sampling error.
#[derive(Clone, Copy, Debug)]
pub struct BinVisibility {
    pub visibility: f64,
    /// First-order (delta-method) standard error from binomial count noise.
    pub stderr: f64,
    /// Contrast pairs that entered the average.
    pub samples: usize,
}

/// Per-bin visibilities in the style of the headline measurement table.
#[derive(Clone, Debug)]
pub struct VisibilityReport {
    pub n: usize,
    pub runs: u64,
    /// Master seed of the sampled report; absent for closed-form expectations.
    pub seed: Option<u64>,
    pub per_bin: BTreeMap<BitString, BinVisibility>,
}

/// Monte Carlo visibility table: runs every oracle of the linear family and
/// its complements, then scores each bin z by averaging V_j(z) over j != z.
/// Oracle sub-streams are derived from the master seed by family position.
pub fn visibility_table(
    config: &ExperimentConfig,
    source: &SourceModel,
    detector: &DetectorModel,
    runs: u64,
    seed: u64,
) -> Result<VisibilityReport> {
    Ok(visibility_table_with_counts(config, source, detector, runs, seed)?.0)
}

/// [`visibility_table`] that also hands back the raw histogram of every
/// family member, in family order (linear oracles first, then complements).
pub fn visibility_table_with_counts(
    config: &ExperimentConfig,
    source: &SourceModel,
    detector: &DetectorModel,
    runs: u64,
    seed: u64,
) -> Result<(VisibilityReport, Vec<(OracleSpec, CountHistogram)>)> {
    let n = config.n;
    let size = 1usize << n;
    let family = enumerate_bv_family(n);
    let family_seed = splitmix64(seed);
    let mut histograms: Vec<(OracleSpec, CountHistogram)> = Vec::with_capacity(family.len());
    for (idx, oracle) in family.into_iter().enumerate() {
        let hist = simulate_counts(
            config,
            &oracle,
            source,
            detector,
            runs,
            derive_seed(family_seed, idx as u64),
        )?;
        histograms.push((oracle, hist));
    }
    let counts: Vec<Vec<f64>> = histograms
        .iter()
        .map(|(_, hist)| BitString::all(n).map(|z| hist.count(&z) as f64).collect())
        .collect();
    let (linear, complements) = counts.split_at(size);
    let per_bin = estimate_per_bin(n, runs as f64, linear, complements)?;
    let report = VisibilityReport {
        n,
        runs,
        seed: Some(seed),
        per_bin,
    };
    Ok((report, histograms))
}

/// Closed-form expectation of [`visibility_table`]: expected counts
/// `runs * p(z)` pushed through the same estimator, with the delta-method
/// standard error evaluated at the expected counts. This is the reference
/// against which sampled tables are checked.
pub fn expected_visibility_report(
    config: &ExperimentConfig,
    source: &SourceModel,
    detector: &DetectorModel,
    runs: u64,
) -> Result<VisibilityReport> {
    let n = config.n;
    let size = 1usize << n;
    let family = enumerate_bv_family(n);
    let mut expected: Vec<Vec<f64>> = Vec::with_capacity(family.len());
    for oracle in &family {
        let p = expected_click_probabilities(config, oracle, source, detector)?;
        expected.push(p.iter().map(|&q| q * runs as f64).collect());
    }
    let (linear, complements) = expected.split_at(size);
    let per_bin = estimate_per_bin(n, runs as f64, linear, complements)?;
    Ok(VisibilityReport {
        n,
        runs,
        seed: None,
        per_bin,
    })
}

/// Shared estimator core: counts (observed or expected) for the linear
/// oracles and their complements, indexed `[j_lex][z_lex]`, to per-bin
/// visibility and delta-method standard error.
///
/// For bin z the average runs over j != z with terms
/// `V_j(z) = 1/2 * [ (C - N_j)/(C + N_j) + (Cbar - N_j)/(Cbar + N_j) ]`,
/// where `C` and `Cbar` are shared across terms. The variance therefore
/// carries one contribution from each independent count:
/// `dV/dC = (1/K) * sum_j N_j/(C+N_j)^2`, `dV/dN_j = -(1/K) * [C/(C+N_j)^2 +
/// Cbar/(Cbar+N_j)^2]`, with binomial count variances `runs * p * (1-p)`.
fn estimate_per_bin(
    n: usize,
    runs: f64,
    linear: &[Vec<f64>],
    complements: &[Vec<f64>],
) -> Result<BTreeMap<BitString, BinVisibility>> {
    let size = 1usize << n;
    let binom_var = |count: f64| {
        let p = (count / runs).clamp(0.0, 1.0);
        runs * p * (1.0 - p)
    };
    let mut per_bin = BTreeMap::new();
    for (z_lex, z) in BitString::all(n).enumerate() {
        let c = linear[z_lex][z_lex];
        let cbar = complements[z_lex][z_lex];
        let mut v_sum = 0.0;
        let mut samples = 0usize;
        let mut dc = 0.0;
        let mut dcbar = 0.0;
        let mut var_nj = 0.0;
        for j_lex in 0..size {
            if j_lex == z_lex {
                continue;
            }
            let n_j = linear[j_lex][z_lex];
            let (first, second) = match (contrast(c, n_j), contrast(cbar, n_j)) {
                (Some(a), Some(b)) => (a, b),
                _ => continue,
            };
            v_sum += 0.5 * (first + second);
            samples += 1;
            let dfirst = (c + n_j).powi(2);
            let dsecond = (cbar + n_j).powi(2);
            dc += n_j / dfirst;
            dcbar += n_j / dsecond;
            var_nj += (c / dfirst + cbar / dsecond).powi(2) * binom_var(n_j);
        }
        if samples == 0 {
            return Err(Error::DegenerateVisibility { z: z.to_string() });
        }
        let k = samples as f64;
        let variance =
            (dc / k).powi(2) * binom_var(c) + (dcbar / k).powi(2) * binom_var(cbar) + var_nj / (k * k);
        per_bin.insert(
            z,
            BinVisibility {
                visibility: v_sum / k,
                stderr: variance.max(0.0).sqrt(),
                samples,
            },
        );
    }
    Ok(per_bin)
}

/// Writes a visibility report as `z,V,stderr` rows, one per logical bin in
/// lexicographic order. Values are fractions, six decimal places.
pub fn write_visibility_csv<W: io::Write>(out: &mut W, report: &VisibilityReport) -> io::Result<()> {
    writeln!(out, "z,V,stderr")?;
    for (z, bin) in &report.per_bin {
        writeln!(out, "{z},{:.6},{:.6}", bin.visibility, bin.stderr)?;
    }
    Ok(())
}

/// Writes one histogram as `z,bin_time_units,oracle,counts,runs` rows in
/// lexicographic z order. The time column is the physical arrival time of
/// the bin in elementary delay units.
pub fn write_counts_csv<W: io::Write>(
    out: &mut W,
    config: &ExperimentConfig,
    oracle: &OracleSpec,
    histogram: &CountHistogram,
) -> io::Result<()> {
    writeln!(out, "z,bin_time_units,oracle,counts,runs")?;
    counts_rows(out, config, oracle, histogram)
}

/// One counts CSV for a whole set of histograms (e.g. the BV family of a
/// visibility run), single header, family order preserved.
pub fn write_family_counts_csv<W: io::Write>(
    out: &mut W,
    config: &ExperimentConfig,
    histograms: &[(OracleSpec, CountHistogram)],
) -> io::Result<()> {
    writeln!(out, "z,bin_time_units,oracle,counts,runs")?;
    for (oracle, histogram) in histograms {
        counts_rows(out, config, oracle, histogram)?;
    }
    Ok(())
}

fn counts_rows<W: io::Write>(
    out: &mut W,
    config: &ExperimentConfig,
    oracle: &OracleSpec,
    histogram: &CountHistogram,
) -> io::Result<()> {
    let offset = config.interference_offset();
    for (z, &count) in &histogram.counts {
        let physical = OutputBin {
            offset,
            z: relabel_logical_to_physical(z),
        };
        writeln!(
            out,
            "{z},{},{},{count},{}",
            physical.time_units(config),
            oracle.name,
            histogram.runs
        )?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::oracles::oracle_bv;
    use proptest::prelude::*;

    fn bits(s: &str) -> BitString {
        BitString::parse(s).unwrap()
    }

    #[test]
    fn pairwise_estimator_matches_hand_arithmetic() {
        let v = visibility_pairwise(100, 2, 98).unwrap();
        assert!((v - 0.5 * (98.0 / 102.0 + 96.0 / 100.0)).abs() < 1e-15);
        assert!((v - 0.960392156862745).abs() < 1e-12);
        assert_eq!(visibility_pairwise(37, 0, 12), Some(1.0));
        assert_eq!(visibility_pairwise(5, 5, 5), Some(0.0));
        assert_eq!(visibility_pairwise(0, 0, 3), None);
        assert_eq!(visibility_pairwise(3, 0, 0), None);
    }

    #[test]
    fn dark_click_probability_integrates_the_gate() {
        let detector = DetectorModel::default();
        let expected = 1.0 - (-1e-4f64 * 5.0).exp();
        assert!((detector.dark_click_probability() - expected).abs() < 1e-15);
        assert!((click_probability(0.0, &detector) - expected).abs() < 1e-15);
        let dark_free = DetectorModel::new(0.105, 0.0, 5.0).unwrap();
        assert_eq!(click_probability(0.0, &dark_free), 0.0);
    }

    #[test]
    fn detector_validation_rejects_out_of_range_values() {
        assert!(DetectorModel::new(1.3, 1e-4, 5.0).is_err());
        assert!(DetectorModel::new(0.5, -1.0, 5.0).is_err());
        assert!(DetectorModel::new(0.5, 1e-4, 0.0).is_err());
        assert!(SourceModel::new(-2.0).is_err());
    }

    #[test]
    fn dark_free_source_free_runs_never_click() {
        let config = ExperimentConfig::ideal(2);
        let oracle = OracleSpec::constant(2, 0).unwrap();
        let source = SourceModel::new(0.0).unwrap();
        let detector = DetectorModel::new(0.105, 0.0, 5.0).unwrap();
        let hist = simulate_counts(&config, &oracle, &source, &detector, 500, 7).unwrap();
        assert!(hist.counts.values().all(|&c| c == 0));
    }

    #[test]
    fn dark_free_constant_oracle_clicks_only_in_the_zero_bin() {
        let config = ExperimentConfig::ideal(2);
        let oracle = OracleSpec::constant(2, 0).unwrap();
        let source = SourceModel::default_for_stages(2);
        let detector = DetectorModel::new(0.105, 0.0, 5.0).unwrap();
        let hist = simulate_counts(&config, &oracle, &source, &detector, 2000, 11).unwrap();
        assert!(hist.count(&bits("00")) > 0);
        for z in BitString::all(2).skip(1) {
            assert_eq!(hist.count(&z), 0, "unexpected clicks in {z}");
        }
    }

    #[test]
    fn histograms_are_reproducible_for_a_fixed_seed() {
        let mut config = ExperimentConfig::ideal(2);
        config.imperfections.phase_jitter_sigma = 0.2;
        let oracle = oracle_bv(&bits("10"));
        let source = SourceModel::default_for_stages(2);
        let detector = DetectorModel::default();
        let a = simulate_counts(&config, &oracle, &source, &detector, 400, 99).unwrap();
        let b = simulate_counts(&config, &oracle, &source, &detector, 400, 99).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn sampled_frequencies_track_the_closed_form() {
        let config = ExperimentConfig::ideal(2);
        let oracle = oracle_bv(&bits("11"));
        let source = SourceModel::default_for_stages(2);
        let detector = DetectorModel::default();
        let runs = 20_000u64;
        let hist = simulate_counts(&config, &oracle, &source, &detector, runs, 1234).unwrap();
        let p = expected_click_probabilities(&config, &oracle, &source, &detector).unwrap();
        for (z_lex, z) in BitString::all(2).enumerate() {
            let expected = p[z_lex] * runs as f64;
            let sigma = (runs as f64 * p[z_lex] * (1.0 - p[z_lex])).sqrt().max(1.0);
            let observed = hist.count(&z) as f64;
            assert!(
                (observed - expected).abs() < 5.0 * sigma,
                "bin {z}: observed {observed}, expected {expected} +- {sigma}"
            );
        }
    }

    #[test]
    fn kernel_transfer_agrees_with_full_propagation() {
        let mut config = ExperimentConfig::ideal(3).with_phis(vec![0.4, 1.9, 3.3]);
        config.imperfections.coupler_imbalance = 0.02;
        config.imperfections.visibility_scalar = 0.95;
        config.imperfections.phase_jitter_sigma = 0.3;
        let oracle = oracle_bv(&bits("110"));
        let kernel = PathKernel::build(&config, &oracle).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..4 {
            let jitter = PhaseJitter::draw(3, 0.3, &mut rng).unwrap();
            let fast = kernel.transfer(&config, Some(&jitter));
            let slow =
                detection_transfer_probabilities(&config, &oracle, Some(&jitter)).unwrap();
            for (a, b) in fast.iter().zip(&slow) {
                assert!((a - b).abs() < 1e-12);
            }
        }
        let fast = kernel.transfer(&config, None);
        let slow = detection_transfer_probabilities(&config, &oracle, None).unwrap();
        for (a, b) in fast.iter().zip(&slow) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn dark_free_ideal_visibility_is_exactly_one() {
        let config = ExperimentConfig::ideal(2);
        let source = SourceModel::default_for_stages(2);
        let detector = DetectorModel::new(0.105, 0.0, 5.0).unwrap();
        let report = visibility_table(&config, &source, &detector, 300, 21).unwrap();
        for (z, bin) in &report.per_bin {
            assert_eq!(bin.visibility, 1.0, "bin {z}");
            assert_eq!(bin.stderr, 0.0, "bin {z}");
            assert_eq!(bin.samples, 3);
        }
    }

    #[test]
    fn sampled_visibility_sits_within_five_sigma_of_the_expectation() {
        let config = ExperimentConfig::ideal(2);
        let source = SourceModel::default_for_stages(2);
        let detector = DetectorModel::default();
        let runs = 5_000u64;
        let sampled = visibility_table(&config, &source, &detector, runs, 4242).unwrap();
        let expected = expected_visibility_report(&config, &source, &detector, runs).unwrap();
        for (z, bin) in &sampled.per_bin {
            let reference = &expected.per_bin[z];
            assert!(
                (bin.visibility - reference.visibility).abs() < 5.0 * reference.stderr,
                "bin {z}: sampled {} expected {} +- {}",
                bin.visibility,
                reference.visibility,
                reference.stderr
            );
        }
    }

    #[test]
    fn raising_the_dark_rate_lowers_every_expected_visibility() {
        let config = ExperimentConfig::ideal(2);
        let source = SourceModel::default_for_stages(2);
        let mut last: Option<BTreeMap<BitString, f64>> = None;
        for dark in [0.0, 1e-4, 1e-3] {
            let detector = DetectorModel::new(0.105, dark, 5.0).unwrap();
            let report =
                expected_visibility_report(&config, &source, &detector, 100_000).unwrap();
            let values: BTreeMap<BitString, f64> = report
                .per_bin
                .iter()
                .map(|(z, b)| (z.clone(), b.visibility))
                .collect();
            if let Some(prev) = &last {
                for (z, &v) in &values {
                    assert!(v < prev[z], "dark rate {dark} did not lower V({z})");
                }
            }
            last = Some(values);
        }
    }

    #[test]
    fn tuned_source_hits_the_requested_click_probability() {
        let config = ExperimentConfig::ideal(3);
        let detector = DetectorModel::default();
        let source =
            SourceModel::tuned_for_click_probability(&config, &detector, 0.3).unwrap();
        let oracle = OracleSpec::constant(3, 0).unwrap();
        let p = expected_click_probabilities(&config, &oracle, &source, &detector).unwrap();
        let best = p.iter().cloned().fold(0.0f64, f64::max);
        assert!((best - 0.3).abs() < 1e-9);
    }

    #[test]
    fn laser_level_helper_undoes_the_forward_losses() {
        let config = ExperimentConfig::ideal(2);
        let source = SourceModel::default_for_stages(2);
        let per_train = source.laser_photons_per_train(&config).unwrap();
        assert!((per_train - 20.0 * 16.0).abs() < 1e-9);
    }

    #[test]
    fn csv_writers_emit_the_documented_schema() {
        let config = ExperimentConfig::ideal(1);
        let oracle = oracle_bv(&bits("1"));
        let histogram = CountHistogram {
            runs: 10,
            counts: [(bits("0"), 2u64), (bits("1"), 9u64)].into_iter().collect(),
        };
        let mut buf = Vec::new();
        write_counts_csv(&mut buf, &config, &oracle, &histogram).unwrap();
        // Logical 0 sits in physical exit record 0 (time 1), logical 1 in
        // physical 1 (time 1 + L_1 = 4).
        assert_eq!(
            String::from_utf8(buf).unwrap(),
            "z,bin_time_units,oracle,counts,runs\n0,1,f_1,2,10\n1,4,f_1,9,10\n"
        );
        let report = VisibilityReport {
            n: 1,
            runs: 10,
            seed: Some(1),
            per_bin: [(
                bits("0"),
                BinVisibility {
                    visibility: 0.9876543,
                    stderr: 0.0123456,
                    samples: 1,
                },
            )]
            .into_iter()
            .collect(),
        };
        let mut buf = Vec::new();
        write_visibility_csv(&mut buf, &report).unwrap();
        assert_eq!(
            String::from_utf8(buf).unwrap(),
            "z,V,stderr\n0,0.987654,0.012346\n"
        );
    }

    proptest! {
        /// Each contrast term flips sign when its constructive and
        /// destructive counts swap roles.
        #[test]
        fn pairwise_contrast_is_antisymmetric(a in 1u64..1_000_000, b in 1u64..1_000_000) {
            let forward = visibility_pairwise(a, b, a).unwrap();
            let swapped = visibility_pairwise(b, a, b).unwrap();
            prop_assert!((forward + swapped).abs() < 1e-12);
        }
    }
}
