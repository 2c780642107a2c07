//! The full folded interferometer chain: forward split pass, phase-modulator
//! oracle imprint at the mirror, and the return pass that closes the
//! interference.
//!
//! Geometry being modeled, for n stages:
//!
//! * Forward, a pulse traverses stage l by the short arm (transmitted at both
//!   stage couplers) or the long arm (reflected at both, picking up delay
//!   `delta_l` and phase `phi_l`). Light leaving a stage by the other output
//!   port is absorbed (isolator in the next delay line, or the unconnected
//!   final port), which is where the forward factor 2^-n of the loss budget
//!   comes from.
//! * The far mirror reflects everything; the phase modulator imprints
//!   (-1)^{f(x)} on the pulse in bin sum(x_l * delta_l).
//! * On the return pass each stage is traversed again (arm choice y_l), and
//!   the exit at each stage either takes the direct fiber (z_l = 0) or a
//!   delay line of length `L_l` (z_l = 1). Both exits continue toward the
//!   detector, so the return pass is lossless; which input port of the next
//!   coupler the light enters is set by the previous exit choice, and that
//!   port choice is what produces the half-integer-pi phases of the output
//!   state.
//!
//! Output bins are therefore labeled by the pair (offset, z) with
//! offset = sum((x_l + y_l) * delta_l) and arrival time offset + sum(z_l * L_l).
//! Distinct (offset, z) pairs are kept distinct even when a poorly chosen set
//! of arm delays would make their arrival times collide; validation is what
//! guarantees the times used for detection are unambiguous.

use std::collections::BTreeMap;
use std::fmt;

use num_complex::Complex64;
use rand::Rng;
use rand_distr::{Distribution as RandDistribution, Normal};

use crate::components::{faraday_reflect, mzi_forward, CouplerSpec, MziSpec};
use crate::error::{Error, Result};
use crate::oracles::OracleSpec;
use crate::reference::OutcomeDistribution;
use crate::timebin::{bitstring_to_bin, Amplitude, BitString, TimeBinState, DEFAULT_UNIT_NS};

/// Exhaustive bin validation enumerates 3^n offsets and 4^n bin pairs; past
/// this size the desk-scale model stops being meaningful anyway.
pub const MAX_STAGES: usize = 12;

/// One delay-line exit of a stage on the return pass.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct OutputArmSpec {
    /// Extra delay in elementary units when this exit is taken.
    pub delay: i64,
    /// Whether the line blocks mirror-bound light. Required on every arm
    /// except the first, whose line sits behind the input coupler and never
    /// sees forward light.
    pub has_isolator: bool,
}

/// Deterministic imperfection knobs.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Imperfections {
    /// Added to every coupler transmittance (0.5 -> 0.5 + eps), modeling a
    /// common splitting-ratio bias. The same sign is used everywhere: paired
    /// opposite signs would cancel in every two-coupler product and leave all
    /// visibilities untouched.
    pub coupler_imbalance: f64,
    /// Std dev of a Gaussian phase added to each long-arm traversal,
    /// redrawn independently for the forward and return directions. This
    /// deliberately breaks the self-compensation of the folded geometry
    /// (identical forward/backward phases cancel in every interfering pair).
    pub phase_jitter_sigma: f64,
    /// Scales interference cross terms between distinct return paths in each
    /// detection bin; 1 = full contrast. Effective model for polarization or
    /// mode mismatch between paths.
    pub visibility_scalar: f64,
}

impl Default for Imperfections {
    fn default() -> Self {
        Self {
            coupler_imbalance: 0.0,
            phase_jitter_sigma: 0.0,
            visibility_scalar: 1.0,
        }
    }
}

impl Imperfections {
    pub fn is_ideal(&self) -> bool {
        self.coupler_imbalance == 0.0
            && self.phase_jitter_sigma == 0.0
            && self.visibility_scalar == 1.0
    }
}

/// Full description of one physical setup.
#[derive(Clone, Debug)]
pub struct ExperimentConfig {
    /// Number of interferometer stages (oracle input bits).
    pub n: usize,
    /// Long-arm excess delays, elementary units; deltas[l] belongs to stage l+1.
    pub deltas: Vec<i64>,
    /// Return-pass delay-line exits, one per stage.
    pub arms: Vec<OutputArmSpec>,
    /// Long-arm phases in [0, 2*pi).
    pub phis: Vec<f64>,
    /// (input coupler, output coupler) of each stage.
    pub couplers: Vec<(CouplerSpec, CouplerSpec)>,
    /// Power fraction the detection-side coupler sends to the detector.
    pub final_coupler_transmittance: f64,
    /// Model ideal routing switches instead of passive couplers: removes the
    /// forward splitting loss, the non-interfering-bin loss, and the
    /// detection-coupler loss from all throughput accounting.
    pub lossless_routing: bool,
    pub imperfections: Imperfections,
    /// Physical duration of one delay unit, ns.
    pub unit_ns: f64,
}

/// Default stage delays 1, 2, 4, ... (each stage doubles the pulse train
/// without collisions).
pub fn default_deltas(n: usize) -> Vec<i64> {
    (0..n).map(|l| 1i64 << l).collect()
}

/// Smallest arm delays satisfying the separation margins
/// `L_1 > 2 * delta_n` and `L_{l+1} > 2 * L_l`.
pub fn default_arm_delays(n: usize) -> Vec<i64> {
    let mut out = Vec::with_capacity(n);
    let mut prev = *default_deltas(n).last().unwrap_or(&1);
    for _ in 0..n {
        let next = 2 * prev + 1;
        out.push(next);
        prev = next;
    }
    out
}

impl ExperimentConfig {
    /// Loss-free couplers, default delays, zero phases.
    pub fn ideal(n: usize) -> Self {
        let deltas = default_deltas(n);
        let arms = default_arm_delays(n)
            .into_iter()
            .enumerate()
            .map(|(l, delay)| OutputArmSpec {
                delay,
                has_isolator: l > 0,
            })
            .collect();
        Self {
            n,
            deltas,
            arms,
            phis: vec![0.0; n],
            couplers: vec![(CouplerSpec::ideal(), CouplerSpec::ideal()); n],
            final_coupler_transmittance: 0.5,
            lossless_routing: false,
            imperfections: Imperfections::default(),
            unit_ns: DEFAULT_UNIT_NS,
        }
    }

    /// Replaces the stage phases, normalized into [0, 2*pi).
    pub fn with_phis(mut self, phis: Vec<f64>) -> Self {
        self.phis = phis
            .into_iter()
            .map(|p| p.rem_euclid(2.0 * std::f64::consts::PI))
            .collect();
        self
    }

    /// Stage couplers with the imbalance knob folded in.
    pub fn effective_couplers(&self) -> Vec<(CouplerSpec, CouplerSpec)> {
        let eps = self.imperfections.coupler_imbalance;
        self.couplers
            .iter()
            .map(|(a, b)| {
                let shift = |c: &CouplerSpec| CouplerSpec {
                    transmittance: (c.transmittance + eps).clamp(0.0, 1.0),
                    excess_loss: c.excess_loss,
                };
                (shift(a), shift(b))
            })
            .collect()
    }

    /// Arrival-time offset of the detection bins: every interfering path
    /// takes each stage delay exactly once.
    pub fn interference_offset(&self) -> i64 {
        self.deltas.iter().sum()
    }

    /// Map from forward-pass time bin to the path label x that produces it.
    /// Well-defined once validation has excluded forward-bin collisions.
    pub fn forward_bin_map(&self) -> BTreeMap<i64, BitString> {
        let mut map = BTreeMap::new();
        for x in BitString::all(self.n) {
            let bin = bitstring_to_bin(&x, &self.deltas).expect("lengths match");
            map.entry(bin).or_insert(x);
        }
        map
    }

    fn arm_delays(&self) -> Vec<i64> {
        self.arms.iter().map(|a| a.delay).collect()
    }
}

/// One validation finding. Fatal findings make propagation results
/// meaningless (ambiguous bin bookkeeping or broken parameters); the margin
/// findings flag a setup whose detection bins are not guaranteed separated by
/// the simple sufficient inequalities, even if no actual clash was found.
#[derive(Clone, Debug, PartialEq)]
pub enum ConfigViolation {
    NoStages,
    TooManyStages {
        n: usize,
    },
    WrongLength {
        field: &'static str,
        expected: usize,
        got: usize,
    },
    NonPositiveDelta {
        stage: usize,
        value: i64,
    },
    NonPositiveArmDelay {
        arm: usize,
        value: i64,
    },
    PhiOutOfRange {
        stage: usize,
        value: f64,
    },
    ParameterOutOfRange {
        field: &'static str,
        value: f64,
    },
    MissingIsolator {
        arm: usize,
    },
    /// Two forward path labels land in the same time bin, so the modulator
    /// cannot address them separately.
    ForwardBinCollision {
        x1: BitString,
        x2: BitString,
        bin: i64,
    },
    /// A non-interfering combination of arm choices lands on the detection
    /// offset, polluting every detection bin.
    AmbiguousInterferenceOffset {
        stage_sums: Vec<u8>,
        offset: i64,
    },
    /// Two detection bins arrive at the same time.
    InterferenceBinClash {
        z1: BitString,
        z2: BitString,
        time: i64,
    },
    /// A filtered-out pulse arrives exactly in a detection bin.
    StrayPulseHitsInterferenceBin {
        offset: i64,
        z: BitString,
        interference_z: BitString,
        time: i64,
    },
    /// A sufficient separation inequality does not hold.
    SeparationMarginViolated {
        detail: String,
    },
}

impl ConfigViolation {
    pub fn is_fatal(&self) -> bool {
        !matches!(
            self,
            ConfigViolation::SeparationMarginViolated { .. } | ConfigViolation::PhiOutOfRange { .. }
        )
    }
}

impl fmt::Display for ConfigViolation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::NoStages => write!(f, "n must be at least 1"),
            Self::TooManyStages { n } => {
                write!(f, "n={n} exceeds the exhaustive-validation limit {MAX_STAGES}")
            }
            Self::WrongLength {
                field,
                expected,
                got,
            } => write!(f, "{field}: expected {expected} entries, got {got}"),
            Self::NonPositiveDelta { stage, value } => {
                write!(f, "delta_{stage} = {value} must be a positive integer")
            }
            Self::NonPositiveArmDelay { arm, value } => {
                write!(f, "L_{arm} = {value} must be a positive integer")
            }
            Self::PhiOutOfRange { stage, value } => {
                write!(f, "phi_{stage} = {value} outside [0, 2*pi)")
            }
            Self::ParameterOutOfRange { field, value } => {
                write!(f, "{field} = {value} outside its admissible range")
            }
            Self::MissingIsolator { arm } => write!(
                f,
                "delay line L_{arm} needs an isolator to absorb mirror-bound light"
            ),
            Self::ForwardBinCollision { x1, x2, bin } => write!(
                f,
                "forward paths x={x1} and x={x2} collide in time bin {bin}"
            ),
            Self::AmbiguousInterferenceOffset { stage_sums, offset } => write!(
                f,
                "arm-count combination {stage_sums:?} also reaches the detection offset {offset}"
            ),
            Self::InterferenceBinClash { z1, z2, time } => write!(
                f,
                "detection bins z={z1} and z={z2} collide at time {time}"
            ),
            Self::StrayPulseHitsInterferenceBin {
                offset,
                z,
                interference_z,
                time,
            } => write!(
                f,
                "stray pulse (offset {offset}, exits {z}) collides with detection bin z={interference_z} at time {time}"
            ),
            Self::SeparationMarginViolated { detail } => write!(f, "{detail}"),
        }
    }
}

/// Checks a configuration and reports every violation found. An empty list
/// means the setup is usable as-is; see [`ConfigViolation::is_fatal`] for the
/// distinction between broken bookkeeping and missing safety margins.
pub fn validate_config(config: &ExperimentConfig) -> Vec<ConfigViolation> {
    let mut v = Vec::new();
    let n = config.n;
    if n == 0 {
        v.push(ConfigViolation::NoStages);
        return v;
    }
    if n > MAX_STAGES {
        v.push(ConfigViolation::TooManyStages { n });
        return v;
    }
    for (field, got) in [
        ("deltas", config.deltas.len()),
        ("arm_Ls", config.arms.len()),
        ("phis", config.phis.len()),
        ("couplers", config.couplers.len()),
    ] {
        if got != n {
            v.push(ConfigViolation::WrongLength {
                field,
                expected: n,
                got,
            });
        }
    }
    if !v.is_empty() {
        // Per-stage checks below assume consistent lengths.
        return v;
    }

    for (l, &d) in config.deltas.iter().enumerate() {
        if d < 1 {
            v.push(ConfigViolation::NonPositiveDelta {
                stage: l + 1,
                value: d,
            });
        }
    }
    for (l, arm) in config.arms.iter().enumerate() {
        if arm.delay < 1 {
            v.push(ConfigViolation::NonPositiveArmDelay {
                arm: l + 1,
                value: arm.delay,
            });
        }
        if l > 0 && !arm.has_isolator {
            v.push(ConfigViolation::MissingIsolator { arm: l + 1 });
        }
    }
    for (l, &phi) in config.phis.iter().enumerate() {
        if !(0.0..2.0 * std::f64::consts::PI).contains(&phi) || !phi.is_finite() {
            v.push(ConfigViolation::PhiOutOfRange {
                stage: l + 1,
                value: phi,
            });
        }
    }
    for (a, b) in &config.couplers {
        for (field, c) in [
            ("stage input-coupler parameters", a),
            ("stage output-coupler parameters", b),
        ] {
            if !(0.0..=1.0).contains(&c.transmittance) || !(0.0..=1.0).contains(&c.excess_loss) {
                v.push(ConfigViolation::ParameterOutOfRange {
                    field,
                    value: c.transmittance,
                });
            }
        }
    }
    if !(0.0..=1.0).contains(&config.final_coupler_transmittance) {
        v.push(ConfigViolation::ParameterOutOfRange {
            field: "final_coupler_transmittance",
            value: config.final_coupler_transmittance,
        });
    }
    let imp = &config.imperfections;
    if !(0.0..=1.0).contains(&imp.visibility_scalar) {
        v.push(ConfigViolation::ParameterOutOfRange {
            field: "imperfections.v",
            value: imp.visibility_scalar,
        });
    }
    if imp.phase_jitter_sigma < 0.0 || !imp.phase_jitter_sigma.is_finite() {
        v.push(ConfigViolation::ParameterOutOfRange {
            field: "imperfections.sigma_phi",
            value: imp.phase_jitter_sigma,
        });
    }
    if imp.coupler_imbalance.abs() > 0.5 || !imp.coupler_imbalance.is_finite() {
        v.push(ConfigViolation::ParameterOutOfRange {
            field: "imperfections.eps",
            value: imp.coupler_imbalance,
        });
    }
    if !v.iter().all(|x| !x.is_fatal()) {
        return v;
    }

    // Forward bins must identify the path label uniquely, otherwise the
    // modulator cannot imprint f.
    let mut bin_owner: BTreeMap<i64, BitString> = BTreeMap::new();
    for x in BitString::all(n) {
        let bin = bitstring_to_bin(&x, &config.deltas).expect("length");
        if let Some(prev) = bin_owner.get(&bin) {
            v.push(ConfigViolation::ForwardBinCollision {
                x1: prev.clone(),
                x2: x.clone(),
                bin,
            });
        } else {
            bin_owner.insert(bin, x);
        }
    }

    // The detection offset must be reachable only by taking every stage
    // delay exactly once (x_l + y_l = 1 for all l).
    let interference_offset = config.interference_offset();
    let mut stage_sums = vec![0u8; n];
    loop {
        let offset: i64 = stage_sums
            .iter()
            .zip(&config.deltas)
            .map(|(&s, &d)| s as i64 * d)
            .sum();
        if offset == interference_offset && stage_sums.iter().any(|&s| s != 1) {
            v.push(ConfigViolation::AmbiguousInterferenceOffset {
                stage_sums: stage_sums.clone(),
                offset,
            });
        }
        // Next combination in {0,1,2}^n.
        let mut carry = true;
        for s in stage_sums.iter_mut() {
            if carry {
                *s += 1;
                if *s == 3 {
                    *s = 0;
                } else {
                    carry = false;
                }
            }
        }
        if carry {
            break;
        }
    }

    // Detection-bin arrival times: pairwise distinct and clear of every
    // filtered-out pulse.
    let arm_delays = config.arm_delays();
    let mut detection_times: BTreeMap<i64, BitString> = BTreeMap::new();
    for z in BitString::all(n) {
        let time = interference_offset + bitstring_to_bin(&z, &arm_delays).expect("length");
        if let Some(prev) = detection_times.get(&time) {
            v.push(ConfigViolation::InterferenceBinClash {
                z1: prev.clone(),
                z2: z.clone(),
                time,
            });
        } else {
            detection_times.insert(time, z);
        }
    }
    let offsets = achievable_offsets(&config.deltas);
    for z in BitString::all(n) {
        let z_delay = bitstring_to_bin(&z, &arm_delays).expect("length");
        for &offset in &offsets {
            if offset == interference_offset {
                continue;
            }
            let time = offset + z_delay;
            if let Some(hit) = detection_times.get(&time) {
                v.push(ConfigViolation::StrayPulseHitsInterferenceBin {
                    offset,
                    z: z.clone(),
                    interference_z: hit.clone(),
                    time,
                });
            }
        }
    }

    // Sufficient separation margins: L_1 > 2 * delta_n, L_{l+1} > 2 * L_l.
    // They guarantee the two checks above can never fire, with room for the
    // pulse width; report when absent even if no actual clash exists.
    let delta_max = *config.deltas.iter().max().expect("n >= 1");
    if arm_delays[0] <= 2 * delta_max {
        v.push(ConfigViolation::SeparationMarginViolated {
            detail: format!(
                "L_1 = {} does not exceed 2 * max(delta) = {}",
                arm_delays[0],
                2 * delta_max
            ),
        });
    }
    for l in 1..n {
        if arm_delays[l] <= 2 * arm_delays[l - 1] {
            v.push(ConfigViolation::SeparationMarginViolated {
                detail: format!(
                    "L_{} = {} does not exceed 2 * L_{} = {}",
                    l + 1,
                    arm_delays[l],
                    l,
                    2 * arm_delays[l - 1]
                ),
            });
        }
    }
    v
}

/// All offsets sum((x_l + y_l) * delta_l) reachable by any forward/return arm
/// combination, sorted.
pub fn achievable_offsets(deltas: &[i64]) -> Vec<i64> {
    let mut set = std::collections::BTreeSet::new();
    let n = deltas.len();
    let mut stage_sums = vec![0u8; n];
    loop {
        set.insert(
            stage_sums
                .iter()
                .zip(deltas)
                .map(|(&s, &d)| s as i64 * d)
                .sum::<i64>(),
        );
        let mut carry = true;
        for s in stage_sums.iter_mut() {
            if carry {
                *s += 1;
                if *s == 3 {
                    *s = 0;
                } else {
                    carry = false;
                }
            }
        }
        if carry {
            break;
        }
    }
    set.into_iter().collect()
}

/// One random draw of the long-arm phase jitter, forward and return
/// directions independent.
#[derive(Clone, Debug)]
pub struct PhaseJitter {
    pub forward: Vec<f64>,
    pub backward: Vec<f64>,
}

impl PhaseJitter {
    pub fn zero(n: usize) -> Self {
        Self {
            forward: vec![0.0; n],
            backward: vec![0.0; n],
        }
    }

    /// Draws 2n independent Gaussian phases: forward stages first, then
    /// return stages.
    pub fn draw<R: Rng>(n: usize, sigma: f64, rng: &mut R) -> Result<Self> {
        let normal = Normal::new(0.0, sigma).map_err(|_| Error::InvalidParameter {
            what: "phase jitter sigma",
            value: sigma,
            constraint: "sigma >= 0 and finite",
        })?;
        let forward = (0..n).map(|_| normal.sample(rng)).collect();
        let backward = (0..n).map(|_| normal.sample(rng)).collect();
        Ok(Self { forward, backward })
    }
}

fn fatal_config_error(config: &ExperimentConfig) -> Result<()> {
    let fatal: Vec<String> = validate_config(config)
        .into_iter()
        .filter(|v| v.is_fatal())
        .map(|v| v.to_string())
        .collect();
    if fatal.is_empty() {
        Ok(())
    } else {
        Err(Error::InvalidConfig(fatal.join("; ")))
    }
}

/// Splits a unit input pulse through the full forward chain. The result holds
/// one pulse per path label x, at bin sum(x_l * delta_l) with amplitude
/// 2^-n * exp(i * sum(x_l * (phi_l + pi))) for ideal couplers; total power
/// 2^-n, the rest absorbed at the stage output ports.
pub fn forward_pass(config: &ExperimentConfig) -> Result<TimeBinState> {
    forward_pass_with_jitter(config, None)
}

pub fn forward_pass_with_jitter(
    config: &ExperimentConfig,
    jitter: Option<&PhaseJitter>,
) -> Result<TimeBinState> {
    fatal_config_error(config)?;
    let couplers = config.effective_couplers();
    let mut state = TimeBinState::single_pulse(config.n, 0);
    state.unit_ns = config.unit_ns;
    for l in 0..config.n {
        let spec = MziSpec {
            delta: config.deltas[l],
            phi: config.phis[l] + jitter.map_or(0.0, |j| j.forward[l]),
            in_coupler: couplers[l].0,
            out_coupler: couplers[l].1,
        };
        let (through, _absorbed_drop) = mzi_forward(&state, &spec);
        state = through;
    }
    Ok(state)
}

/// Imprints the oracle on a mirror-reflected pulse train: bin
/// sum(x_l * delta_l) gets phase pi * f(x). Errors if the state occupies a
/// bin no forward path produces.
pub fn apply_oracle_modulation(
    state: &TimeBinState,
    oracle: &OracleSpec,
    config: &ExperimentConfig,
) -> Result<TimeBinState> {
    if oracle.n() != config.n {
        return Err(Error::OracleArity {
            oracle_n: oracle.n(),
            setup_n: config.n,
        });
    }
    let bin_map = config.forward_bin_map();
    let mut pattern = BTreeMap::new();
    for (bin, _) in state.iter() {
        let x = bin_map
            .get(&bin)
            .ok_or(Error::NotForwardShaped { bin })?;
        if oracle.value(x)? == 1 {
            pattern.insert(bin, std::f64::consts::PI);
        }
    }
    Ok(state.apply_phase_pattern(&pattern))
}

/// Output bin of the return pass: time offset accumulated in the stage arms
/// plus the record of which delay-line exits were taken.
#[derive(Clone, PartialEq, Eq, PartialOrd, Ord, Debug)]
pub struct OutputBin {
    /// sum((x_l + y_l) * delta_l), elementary units.
    pub offset: i64,
    /// Delay-line exits, bit l for stage l+1.
    pub z: BitString,
}

impl OutputBin {
    /// Physical arrival time in elementary units.
    pub fn time_units(&self, config: &ExperimentConfig) -> i64 {
        self.offset
            + self
                .z
                .bits()
                .iter()
                .zip(&config.arms)
                .map(|(&b, arm)| b as i64 * arm.delay)
                .sum::<i64>()
    }
}

/// Coherent and path-resolved content of one detection bin.
#[derive(Clone, Copy, Debug)]
pub struct InterferenceBin {
    /// Coherent sum over the 2^n interfering paths.
    pub amplitude: Amplitude,
    /// Sum of squared path magnitudes: the click power when all cross terms
    /// are suppressed.
    pub incoherent_power: f64,
    pub path_count: usize,
}

/// Everything the return pass produces, before the detection-side coupler.
#[derive(Clone, Debug)]
pub struct PropagationResult {
    /// Amplitude of every structurally reached (offset, z) bin, including
    /// bins that interfered to exactly zero.
    pub full_state: BTreeMap<OutputBin, Amplitude>,
    /// Detection bins (offset = sum(deltas)), keyed by physical exit record z.
    pub interference: BTreeMap<BitString, InterferenceBin>,
    /// Power in the filtered-out bins: total minus detection-bin power.
    pub discarded_power: f64,
}

impl PropagationResult {
    pub fn occupied_bins(&self) -> usize {
        self.full_state.len()
    }

    pub fn total_power(&self) -> f64 {
        self.full_state.values().map(|a| a.norm_sqr()).sum()
    }

    pub fn interference_power(&self) -> f64 {
        self.interference
            .values()
            .map(|b| b.amplitude.norm_sqr())
            .sum()
    }

    /// Collapses (offset, z) bins onto physical arrival times, merging
    /// coherently. Only unambiguous for validated configurations.
    pub fn full_state_by_time(&self, config: &ExperimentConfig) -> TimeBinState {
        let mut state = TimeBinState::new(config.n);
        state.unit_ns = config.unit_ns;
        state.direction = crate::timebin::Direction::Backward;
        for (bin, &a) in &self.full_state {
            state.add_amplitude(bin.time_units(config), a);
        }
        state
    }
}

pub(crate) fn backward_stage_factor(
    couplers: &(CouplerSpec, CouplerSpec),
    phi: f64,
    y: u8,
    z_l: u8,
    z_next: u8,
) -> Complex64 {
    let t_in = couplers.0.transmission_amplitude();
    let ir_in = couplers.0.reflection_amplitude();
    let t_out = couplers.1.transmission_amplitude();
    let ir_out = couplers.1.reflection_amplitude();
    // Entering the stage output coupler from the direct fiber (z_next = 0) or
    // the delay line of the following stage (z_next = 1) decides which of the
    // two input ports the light arrives on, hence whether reaching arm y is a
    // transmission or a reflection. Same logic at the input coupler for the
    // exit choice z_l.
    let enter = if y == z_next {
        Complex64::new(t_out, 0.0)
    } else {
        ir_out
    };
    let arm = if y == 1 {
        Complex64::from_polar(1.0, phi)
    } else {
        Complex64::new(1.0, 0.0)
    };
    let exit = if y == z_l {
        Complex64::new(t_in, 0.0)
    } else {
        ir_in
    };
    enter * arm * exit
}

/// Propagates a modulated pulse train back through every stage and out of the
/// delay-line exits. Lossless: both exits of every stage continue toward the
/// detector, so the output power equals the input power.
pub fn backward_pass(
    state: &TimeBinState,
    config: &ExperimentConfig,
) -> Result<PropagationResult> {
    backward_pass_with_jitter(state, config, None)
}

pub fn backward_pass_with_jitter(
    state: &TimeBinState,
    config: &ExperimentConfig,
    jitter: Option<&PhaseJitter>,
) -> Result<PropagationResult> {
    fatal_config_error(config)?;
    let n = config.n;
    let bin_map = config.forward_bin_map();
    for (bin, _) in state.iter() {
        if !bin_map.contains_key(&bin) {
            return Err(Error::NotForwardShaped { bin });
        }
    }
    let couplers = config.effective_couplers();

    // Working key: (offset so far, exit choices of the stages already
    // traversed, as a mask with bit l-1 = z_l). Stages are traversed from the
    // mirror side inward: l = n down to 1. The entry port at stage l is set
    // by z_{l+1} (bit l of the mask), zero for stage n because the modulator
    // fiber is the direct port.
    let mut working: BTreeMap<(i64, u64), Complex64> = state
        .iter()
        .map(|(bin, a)| ((bin, 0u64), a))
        .collect();
    for l in (0..n).rev() {
        let phi = config.phis[l] + jitter.map_or(0.0, |j| j.backward[l]);
        let mut next: BTreeMap<(i64, u64), Complex64> = BTreeMap::new();
        for (&(offset, mask), &amp) in &working {
            let z_next = ((mask >> (l + 1)) & 1) as u8;
            for y in 0..2u8 {
                let offset_out = offset + y as i64 * config.deltas[l];
                for z_l in 0..2u8 {
                    let factor = backward_stage_factor(&couplers[l], phi, y, z_l, z_next);
                    let key = (offset_out, mask | ((z_l as u64) << l));
                    *next.entry(key).or_insert_with(|| Complex64::new(0.0, 0.0)) +=
                        amp * factor;
                }
            }
        }
        working = next;
    }

    let mut full_state: BTreeMap<OutputBin, Amplitude> = BTreeMap::new();
    for ((offset, mask), amp) in working {
        let z = BitString::new((0..n).map(|l| ((mask >> l) & 1) as u8).collect())
            .expect("binary");
        full_state.insert(OutputBin { offset, z }, amp);
    }

    // Detection bins: coherent amplitudes straight from the propagated state;
    // per-path powers from re-walking each interfering path (x fixes y).
    let interference_offset = config.interference_offset();
    let mut interference: BTreeMap<BitString, InterferenceBin> = BTreeMap::new();
    for z in BitString::all(n) {
        let amplitude = full_state
            .get(&OutputBin {
                offset: interference_offset,
                z: z.clone(),
            })
            .copied()
            .unwrap_or_else(|| Complex64::new(0.0, 0.0));
        let mut incoherent_power = 0.0;
        let mut path_count = 0;
        for (bin, a_in) in state.iter() {
            let x = &bin_map[&bin];
            let mut path_amp = a_in;
            for l in 0..n {
                let y = 1 - x.bit(l);
                let z_next = if l + 1 < n { z.bit(l + 1) } else { 0 };
                let phi = config.phis[l] + jitter.map_or(0.0, |j| j.backward[l]);
                path_amp *= backward_stage_factor(&couplers[l], phi, y, z.bit(l), z_next);
            }
            incoherent_power += path_amp.norm_sqr();
            path_count += 1;
        }
        interference.insert(
            z,
            InterferenceBin {
                amplitude,
                incoherent_power,
                path_count,
            },
        );
    }

    let total: f64 = full_state.values().map(|a| a.norm_sqr()).sum();
    let interference_total: f64 = interference
        .values()
        .map(|b| b.amplitude.norm_sqr())
        .sum();
    Ok(PropagationResult {
        full_state,
        interference,
        discarded_power: total - interference_total,
    })
}

/// The detection bins of a propagated result: physical exit record z to
/// coherent amplitude.
pub fn extract_interference_bins(
    result: &PropagationResult,
) -> BTreeMap<BitString, Amplitude> {
    result
        .interference
        .iter()
        .map(|(z, bin)| (z.clone(), bin.amplitude))
        .collect()
}

/// Physical exit record to logical outcome label: z'_l = z_l xor z_{l+1}
/// (z_{n+1} = 0). With this relabeling the detection-bin distribution equals
/// the gate-model outcome distribution.
pub fn relabel_physical_to_logical(z: &BitString) -> BitString {
    let n = z.len();
    let bits = (0..n)
        .map(|l| z.bit(l) ^ if l + 1 < n { z.bit(l + 1) } else { 0 })
        .collect();
    BitString::new(bits).expect("binary")
}

/// Inverse relabeling: z_l = z'_l xor z'_{l+1} xor ... xor z'_n.
pub fn relabel_logical_to_physical(z_logical: &BitString) -> BitString {
    let n = z_logical.len();
    let mut bits = vec![0u8; n];
    let mut acc = 0u8;
    for l in (0..n).rev() {
        acc ^= z_logical.bit(l);
        bits[l] = acc;
    }
    BitString::new(bits).expect("binary")
}

/// Runs the full chain for one oracle and returns the renormalized
/// distribution over logical outcomes. Coupler imbalance and the visibility
/// scalar are honored; phase jitter is not drawn here (the fixed stage phases
/// cancel between the passes, which is the point of the folded design).
pub fn run_ideal(config: &ExperimentConfig, oracle: &OracleSpec) -> Result<OutcomeDistribution> {
    let result = propagate(config, oracle)?;
    let v = config.imperfections.visibility_scalar;
    let mut p = vec![0.0; 1 << config.n];
    for (z, bin) in &result.interference {
        let logical = relabel_physical_to_logical(z);
        p[logical.lex_index()] =
            v * bin.amplitude.norm_sqr() + (1.0 - v) * bin.incoherent_power;
    }
    let total: f64 = p.iter().sum();
    if total <= 0.0 {
        return Err(Error::InvalidConfig(
            "no light reaches the detection bins; check coupler transmittances".into(),
        ));
    }
    for q in p.iter_mut() {
        *q /= total;
    }
    OutcomeDistribution::new(config.n, p)
}

/// Forward pass, mirror, modulator, return pass.
pub fn propagate(config: &ExperimentConfig, oracle: &OracleSpec) -> Result<PropagationResult> {
    propagate_with_jitter(config, oracle, None)
}

pub fn propagate_with_jitter(
    config: &ExperimentConfig,
    oracle: &OracleSpec,
    jitter: Option<&PhaseJitter>,
) -> Result<PropagationResult> {
    let forward = forward_pass_with_jitter(config, jitter)?;
    let reflected = faraday_reflect(&forward);
    let modulated = apply_oracle_modulation(&reflected, oracle, config)?;
    backward_pass_with_jitter(&modulated, config, jitter)
}

/// Multiplicative pieces of the source-to-detector transmission.
#[derive(Clone, Copy, Debug)]
pub struct ThroughputBudget {
    /// Power surviving the forward pass (2^-n ideal).
    pub forward_power: f64,
    /// Fraction of the return power that lands in detection bins (2^-n ideal).
    pub interference_fraction: f64,
    /// Detection-side coupler factor (1/2 ideal).
    pub final_coupler: f64,
    pub total: f64,
}

/// Probability that a photon entering the chain leaves it in a detection bin
/// at the detector. 2^-(2n+1) for the ideal passive setup; 1 with
/// lossless routing switches, which by construction remove all three factors.
pub fn throughput(config: &ExperimentConfig, oracle: &OracleSpec) -> Result<f64> {
    Ok(throughput_budget(config, oracle)?.total)
}

pub fn throughput_budget(
    config: &ExperimentConfig,
    oracle: &OracleSpec,
) -> Result<ThroughputBudget> {
    if config.lossless_routing {
        fatal_config_error(config)?;
        return Ok(ThroughputBudget {
            forward_power: 1.0,
            interference_fraction: 1.0,
            final_coupler: 1.0,
            total: 1.0,
        });
    }
    let result = propagate(config, oracle)?;
    let v = config.imperfections.visibility_scalar;
    let forward_power = result.total_power();
    let detection_power: f64 = result
        .interference
        .values()
        .map(|b| v * b.amplitude.norm_sqr() + (1.0 - v) * b.incoherent_power)
        .sum();
    let interference_fraction = if forward_power > 0.0 {
        detection_power / forward_power
    } else {
        0.0
    };
    let final_coupler = config.final_coupler_transmittance;
    Ok(ThroughputBudget {
        forward_power,
        interference_fraction,
        final_coupler,
        total: detection_power * final_coupler,
    })
}

/// Per-logical-outcome probability that a photon sitting at the modulator
/// arrives in that detection bin at the detector, for one jitter draw.
/// Includes the cross-term visibility scalar and the detection-side coupler;
/// with lossless routing this is the normalized outcome distribution itself.
pub fn detection_transfer_probabilities(
    config: &ExperimentConfig,
    oracle: &OracleSpec,
    jitter: Option<&PhaseJitter>,
) -> Result<Vec<f64>> {
    let result = propagate_with_jitter(config, oracle, jitter)?;
    let modulator_power: f64 = result.total_power(); // return pass is lossless
    if modulator_power <= 0.0 {
        return Err(Error::InvalidConfig(
            "no light reaches the modulator; check coupler transmittances".into(),
        ));
    }
    let v = config.imperfections.visibility_scalar;
    let mut raw = vec![0.0; 1 << config.n];
    for (z, bin) in &result.interference {
        let logical = relabel_physical_to_logical(z);
        raw[logical.lex_index()] =
            v * bin.amplitude.norm_sqr() + (1.0 - v) * bin.incoherent_power;
    }
    if config.lossless_routing {
        let total: f64 = raw.iter().sum();
        if total <= 0.0 {
            return Err(Error::InvalidConfig(
                "no light reaches the detection bins; check coupler transmittances".into(),
            ));
        }
        for q in raw.iter_mut() {
            *q /= total;
        }
        return Ok(raw);
    }
    for q in raw.iter_mut() {
        *q = *q / modulator_power * config.final_coupler_transmittance;
    }
    Ok(raw)
}

/// Same quantity as [`detection_transfer_probabilities`] but averaged over
/// the jitter distribution in closed form: every cross term between paths x and
/// x' is damped by exp(-sigma^2 * hamming(x, x')), the characteristic
/// function of the accumulated Gaussian phase difference (two independent
/// draws per differing stage). Exact for the expected bin power; feeding it
/// through the nonlinear click probability is an approximation quoted as the
/// closed-form column of parameter sweeps.
pub fn expected_detection_transfer(
    config: &ExperimentConfig,
    oracle: &OracleSpec,
) -> Result<Vec<f64>> {
    fatal_config_error(config)?;
    let n = config.n;
    let sigma = config.imperfections.phase_jitter_sigma;
    let v = config.imperfections.visibility_scalar;
    let couplers = config.effective_couplers();

    // Path amplitudes at nominal phases, per physical z.
    let forward = forward_pass(config)?;
    let modulated =
        apply_oracle_modulation(&faraday_reflect(&forward), oracle, config)?;
    let modulator_power = modulated.total_probability();
    if modulator_power <= 0.0 {
        return Err(Error::InvalidConfig(
            "no light reaches the modulator; check coupler transmittances".into(),
        ));
    }
    let bin_map = config.forward_bin_map();
    let size = 1usize << n;
    let mut raw = vec![0.0; size];
    for z in BitString::all(n) {
        let mut path_amps: Vec<Complex64> = Vec::with_capacity(size);
        let mut labels: Vec<&BitString> = Vec::with_capacity(size);
        for (bin, a_in) in modulated.iter() {
            let x = &bin_map[&bin];
            let mut amp = a_in;
            for l in 0..n {
                let y = 1 - x.bit(l);
                let z_next = if l + 1 < n { z.bit(l + 1) } else { 0 };
                amp *= backward_stage_factor(&couplers[l], config.phis[l], y, z.bit(l), z_next);
            }
            path_amps.push(amp);
            labels.push(x);
        }
        let mut power = 0.0;
        for (i, a) in path_amps.iter().enumerate() {
            power += a.norm_sqr();
            for (jdx, b) in path_amps.iter().enumerate().skip(i + 1) {
                let hamming = labels[i]
                    .bits()
                    .iter()
                    .zip(labels[jdx].bits())
                    .filter(|(p, q)| p != q)
                    .count() as f64;
                let damping = (-sigma * sigma * hamming).exp();
                power += 2.0 * v * damping * (a * b.conj()).re;
            }
        }
        let logical = relabel_physical_to_logical(&z);
        raw[logical.lex_index()] = power;
    }
    if config.lossless_routing {
        let total: f64 = raw.iter().sum();
        for q in raw.iter_mut() {
            *q /= total;
        }
        return Ok(raw);
    }
    for q in raw.iter_mut() {
        *q = *q / modulator_power * config.final_coupler_transmittance;
    }
    Ok(raw)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::oracles::{enumerate_bv_family, oracle_bv};
    use crate::reference::dj_distribution;
    use proptest::prelude::*;

    fn bits(s: &str) -> BitString {
        BitString::parse(s).unwrap()
    }

    #[test]
    fn default_arm_delays_satisfy_margins() {
        assert_eq!(default_arm_delays(3), vec![9, 19, 39]);
        assert_eq!(default_arm_delays(2), vec![5, 11]);
        assert_eq!(default_arm_delays(1), vec![3]);
    }

    #[test]
    fn ideal_config_validates_clean() {
        for n in 1..=4 {
            assert!(validate_config(&ExperimentConfig::ideal(n)).is_empty());
        }
    }

    #[test]
    fn short_first_arm_is_flagged_but_not_fatal() {
        let mut config = ExperimentConfig::ideal(3);
        config.arms[0].delay = 8; // 2 * max(delta) = 8, margin requires > 8
        let violations = validate_config(&config);
        assert_eq!(violations.len(), 1);
        assert!(matches!(
            violations[0],
            ConfigViolation::SeparationMarginViolated { .. }
        ));
        assert!(!violations[0].is_fatal());
    }

    #[test]
    fn clashing_detection_bins_are_fatal() {
        let mut config = ExperimentConfig::ideal(2);
        // L_2 = L_1 makes z=01 and z=10 arrive together.
        config.arms[1].delay = config.arms[0].delay;
        let violations = validate_config(&config);
        assert!(violations
            .iter()
            .any(|v| matches!(v, ConfigViolation::InterferenceBinClash { .. })));
        assert!(violations.iter().any(|v| v.is_fatal()));
    }

    #[test]
    fn equal_deltas_are_caught_twice_over() {
        let mut config = ExperimentConfig::ideal(2);
        config.deltas = vec![2, 2];
        let violations = validate_config(&config);
        assert!(violations
            .iter()
            .any(|v| matches!(v, ConfigViolation::ForwardBinCollision { .. })));
        assert!(violations
            .iter()
            .any(|v| matches!(v, ConfigViolation::AmbiguousInterferenceOffset { .. })));
    }

    #[test]
    fn forward_amplitudes_carry_phase_and_sign() {
        let phis = vec![0.3, 1.1, 2.7];
        let config = ExperimentConfig::ideal(3).with_phis(phis.clone());
        let state = forward_pass(&config).unwrap();
        for x in BitString::all(3) {
            let bin = bitstring_to_bin(&x, &config.deltas).unwrap();
            let phase: f64 = (0..3)
                .map(|l| x.bit(l) as f64 * (phis[l] + std::f64::consts::PI))
                .sum();
            let expected = Complex64::from_polar(0.125, phase);
            assert!((state.amplitude(bin) - expected).norm() < 1e-12, "x = {x}");
        }
        assert!((state.total_probability() - 0.125).abs() < 1e-12);
    }

    #[test]
    fn single_stage_output_state_is_exact() {
        let config = ExperimentConfig::ideal(1);
        let f0 = OracleSpec::constant(1, 0).unwrap();
        let result = propagate(&config, &f0).unwrap();
        assert_eq!(result.occupied_bins(), 6);
        let amp = |offset: i64, z: &str| {
            result.full_state[&OutputBin {
                offset,
                z: bits(z),
            }]
        };
        let close = |a: Complex64, re: f64, im: f64| (a - Complex64::new(re, im)).norm() < 1e-15;
        assert!(close(amp(0, "0"), 0.25, 0.0));
        assert!(close(amp(0, "1"), 0.0, 0.25));
        assert!(close(amp(1, "0"), -0.5, 0.0));
        assert!(close(amp(1, "1"), 0.0, 0.0)); // fully destructive, still tracked
        assert!(close(amp(2, "0"), 0.25, 0.0));
        assert!(close(amp(2, "1"), 0.0, -0.25));
        assert!((result.total_power() - 0.5).abs() < 1e-15);
        assert!((result.interference_power() - 0.25).abs() < 1e-15);
        assert!((result.discarded_power - 0.25).abs() < 1e-15);
    }

    #[test]
    fn single_stage_identity_oracle_flips_the_outcome() {
        let config = ExperimentConfig::ideal(1);
        let f1 = oracle_bv(&bits("1"));
        let dist = run_ideal(&config, &f1).unwrap();
        assert!((dist.probability(&bits("1")) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn occupied_bin_counts_follow_the_pulse_combinatorics() {
        // (2^{n+1} - 1 offsets requiring... ) counted structurally: every
        // (offset, z) pair a path reaches, including zero-amplitude ones.
        for (n, expected) in [(1usize, 6usize), (2, 28), (3, 120)] {
            let config = ExperimentConfig::ideal(n);
            let oracle = OracleSpec::constant(n, 0).unwrap();
            let result = propagate(&config, &oracle).unwrap();
            assert_eq!(result.occupied_bins(), expected, "n = {n}");
        }
    }

    #[test]
    fn interference_bins_hold_two_to_minus_2n_in_total() {
        for n in 1..=3 {
            let config = ExperimentConfig::ideal(n);
            let oracle = oracle_bv(&BitString::from_lex_index(n, 1));
            let result = propagate(&config, &oracle).unwrap();
            let expected = 0.25f64.powi(n as i32);
            assert!((result.interference_power() - expected).abs() < 1e-12);
        }
    }

    #[test]
    fn throughput_budget_matches_the_three_factor_decomposition() {
        let config = ExperimentConfig::ideal(3);
        let oracle = OracleSpec::constant(3, 0).unwrap();
        let budget = throughput_budget(&config, &oracle).unwrap();
        assert!((budget.forward_power - 0.125).abs() < 1e-12);
        assert!((budget.interference_fraction - 0.125).abs() < 1e-12);
        assert!((budget.final_coupler - 0.5).abs() < 1e-12);
        assert!((budget.total - 0.0078125).abs() < 1e-12);
        assert!(
            (budget.total
                - budget.forward_power * budget.interference_fraction * budget.final_coupler)
                .abs()
                < 1e-15
        );
    }

    #[test]
    fn lossless_routing_reports_unit_throughput() {
        let mut config = ExperimentConfig::ideal(2);
        config.lossless_routing = true;
        let oracle = OracleSpec::constant(2, 1).unwrap();
        assert_eq!(throughput(&config, &oracle).unwrap(), 1.0);
        let transfer = detection_transfer_probabilities(&config, &oracle, None).unwrap();
        let total: f64 = transfer.iter().sum();
        assert!((total - 1.0).abs() < 1e-12);
    }

    #[test]
    fn relabeling_matches_the_worked_examples() {
        assert_eq!(relabel_physical_to_logical(&bits("000")), bits("000"));
        assert_eq!(relabel_physical_to_logical(&bits("111")), bits("001"));
        assert_eq!(relabel_physical_to_logical(&bits("100")), bits("100"));
        assert_eq!(relabel_logical_to_physical(&bits("001")), bits("111"));
    }

    #[test]
    fn outcome_distribution_matches_the_gate_model() {
        let config = ExperimentConfig::ideal(2);
        for oracle in enumerate_bv_family(2) {
            let optical = run_ideal(&config, &oracle).unwrap();
            let gate = dj_distribution(&oracle).unwrap();
            assert!(
                optical.max_abs_diff(&gate) < 1e-12,
                "oracle {oracle} disagrees"
            );
        }
    }

    #[test]
    fn stage_phases_cancel_between_the_passes() {
        let oracle = oracle_bv(&bits("101"));
        let reference = run_ideal(&ExperimentConfig::ideal(3), &oracle).unwrap();
        let skewed = ExperimentConfig::ideal(3).with_phis(vec![1.234, 5.678, 0.414]);
        let dist = run_ideal(&skewed, &oracle).unwrap();
        assert!(dist.max_abs_diff(&reference) < 1e-12);
    }

    #[test]
    fn interference_amplitude_agrees_with_per_path_products() {
        let config = ExperimentConfig::ideal(2).with_phis(vec![0.9, 2.2]);
        let oracle = oracle_bv(&bits("10"));
        let forward = forward_pass(&config).unwrap();
        let modulated =
            apply_oracle_modulation(&faraday_reflect(&forward), &oracle, &config).unwrap();
        let result = backward_pass(&modulated, &config).unwrap();
        let couplers = config.effective_couplers();
        let bin_map = config.forward_bin_map();
        for (z, bin) in &result.interference {
            let mut total = Complex64::new(0.0, 0.0);
            for (input_bin, a) in modulated.iter() {
                let x = &bin_map[&input_bin];
                let mut amp = a;
                for l in 0..2 {
                    let y = 1 - x.bit(l);
                    let z_next = if l + 1 < 2 { z.bit(l + 1) } else { 0 };
                    amp *= backward_stage_factor(
                        &couplers[l],
                        config.phis[l],
                        y,
                        z.bit(l),
                        z_next,
                    );
                }
                total += amp;
            }
            assert!((total - bin.amplitude).norm() < 1e-14);
            assert_eq!(bin.path_count, 4);
        }
    }

    #[test]
    fn expected_transfer_reduces_to_single_draw_without_jitter() {
        let mut config = ExperimentConfig::ideal(2);
        config.imperfections.coupler_imbalance = 0.03;
        config.imperfections.visibility_scalar = 0.97;
        let oracle = oracle_bv(&bits("01"));
        let direct = detection_transfer_probabilities(&config, &oracle, None).unwrap();
        let averaged = expected_detection_transfer(&config, &oracle).unwrap();
        for (a, b) in direct.iter().zip(&averaged) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn fully_transmitting_couplers_leave_detection_bins_dark() {
        let mut config = ExperimentConfig::ideal(1);
        config.couplers[0].0.transmittance = 1.0;
        config.couplers[0].1.transmittance = 1.0;
        let oracle = OracleSpec::constant(1, 0).unwrap();
        assert!(matches!(
            run_ideal(&config, &oracle),
            Err(Error::InvalidConfig(_))
        ));
    }

    #[test]
    fn modulation_rejects_foreign_bins_and_arity() {
        let config = ExperimentConfig::ideal(2);
        let mut stray = TimeBinState::new(2);
        stray.add_amplitude(17, Complex64::new(1.0, 0.0));
        let oracle = OracleSpec::constant(2, 0).unwrap();
        assert!(matches!(
            apply_oracle_modulation(&stray, &oracle, &config),
            Err(Error::NotForwardShaped { bin: 17 })
        ));
        let wrong_arity = OracleSpec::constant(3, 0).unwrap();
        let forward = forward_pass(&config).unwrap();
        assert!(matches!(
            apply_oracle_modulation(&forward, &wrong_arity, &config),
            Err(Error::OracleArity { .. })
        ));
    }

    proptest! {
        /// The return pass routes both exits of every stage onward, so with
        /// loss-free couplers it conserves power for any splitting ratios,
        /// phases, and oracle.
        #[test]
        fn backward_pass_conserves_power(
            t1 in 0.05f64..0.95,
            t2 in 0.05f64..0.95,
            phi1 in 0.0f64..6.28,
            phi2 in 0.0f64..6.28,
            table in prop::collection::vec(0u8..2, 4),
        ) {
            let mut config = ExperimentConfig::ideal(2).with_phis(vec![phi1, phi2]);
            config.couplers[0].0.transmittance = t1;
            config.couplers[1].1.transmittance = t2;
            let oracle = OracleSpec::new(2, table, "random").unwrap();
            let forward = forward_pass(&config).unwrap();
            let modulated =
                apply_oracle_modulation(&faraday_reflect(&forward), &oracle, &config).unwrap();
            let result = backward_pass(&modulated, &config).unwrap();
            prop_assert!(
                (result.total_power() - modulated.total_probability()).abs() < 1e-12
            );
        }

        /// Physical-to-logical relabeling is a bijection on exit records.
        #[test]
        fn relabeling_round_trips(n in 1usize..9, index in 0usize..256) {
            let z = BitString::from_lex_index(n, index % (1 << n));
            let logical = relabel_physical_to_logical(&z);
            prop_assert_eq!(relabel_logical_to_physical(&logical), z);
        }
    }
}
