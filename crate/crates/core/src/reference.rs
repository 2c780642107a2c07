//! Abstract gate-model reference: dense state vectors, Hadamard layers,
//! phase and ancilla oracles, and the classical query baselines. The optical
//! simulation is checked against the distributions computed here.

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::oracles::{OracleClass, OracleSpec};
use crate::timebin::BitString;

/// Dense vectors become unwieldy beyond this register size.
pub const MAX_QUBITS: usize = 20;

/// Dense amplitude vector over n bits, indexed lexicographically
/// (bit 0 most significant).
#[derive(Clone, Debug)]
pub struct StateVector {
    n: usize,
    amps: Vec<Complex64>,
}

impl StateVector {
    pub fn new(n: usize, amps: Vec<Complex64>) -> Result<Self> {
        check_register_size(n)?;
        if amps.len() != 1 << n {
            return Err(Error::LengthMismatch {
                what: "state vector",
                expected: 1 << n,
                got: amps.len(),
            });
        }
        Ok(Self { n, amps })
    }

    /// The computational basis state |00...0>.
    pub fn all_zeros(n: usize) -> Result<Self> {
        check_register_size(n)?;
        let mut amps = vec![Complex64::new(0.0, 0.0); 1 << n];
        amps[0] = Complex64::new(1.0, 0.0);
        Ok(Self { n, amps })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn amplitudes(&self) -> &[Complex64] {
        &self.amps
    }

    pub fn norm_sqr(&self) -> f64 {
        self.amps.iter().map(|a| a.norm_sqr()).sum()
    }

    pub fn probabilities(&self) -> Vec<f64> {
        self.amps.iter().map(|a| a.norm_sqr()).collect()
    }

    pub fn max_amp_distance(&self, other: &Self) -> f64 {
        self.amps
            .iter()
            .zip(&other.amps)
            .map(|(a, b)| (a - b).norm())
            .fold(0.0, f64::max)
    }
}

fn check_register_size(n: usize) -> Result<()> {
    if n > MAX_QUBITS {
        return Err(Error::InvalidParameter {
            what: "register size n",
            value: n as f64,
            constraint: "n <= 20 for dense reference states",
        });
    }
    Ok(())
}

/// Applies a Hadamard to every bit: the normalized Walsh-Hadamard transform.
/// Involutive and norm-preserving.
pub fn hadamard_all(state: &StateVector) -> StateVector {
    let mut amps = state.amps.clone();
    let norm = std::f64::consts::FRAC_1_SQRT_2;
    let len = amps.len();
    let mut half = 1;
    while half < len {
        let mut base = 0;
        while base < len {
            for i in base..base + half {
                let a = amps[i];
                let b = amps[i + half];
                amps[i] = (a + b) * norm;
                amps[i + half] = (a - b) * norm;
            }
            base += 2 * half;
        }
        half *= 2;
    }
    StateVector { n: state.n, amps }
}

/// Multiplies each basis amplitude by (-1)^{f(x)}.
pub fn apply_phase_oracle(state: &StateVector, f: &OracleSpec) -> Result<StateVector> {
    if f.n() != state.n {
        return Err(Error::OracleArity {
            oracle_n: f.n(),
            setup_n: state.n,
        });
    }
    let amps = state
        .amps
        .iter()
        .enumerate()
        .map(|(i, a)| a * f.sign_by_index(i))
        .collect();
    Ok(StateVector { n: state.n, amps })
}

/// State of an n-bit register joined with a single ancilla bit; index
/// `2 * x.lex_index() + y` holds the amplitude of |x>|y>.
#[derive(Clone, Debug)]
pub struct AncillaState {
    n: usize,
    amps: Vec<Complex64>,
}

impl AncillaState {
    /// Product state |register> (x) (a0|0> + a1|1>).
    pub fn from_product(register: &StateVector, ancilla: [Complex64; 2]) -> Self {
        let mut amps = Vec::with_capacity(register.amps.len() * 2);
        for a in &register.amps {
            amps.push(a * ancilla[0]);
            amps.push(a * ancilla[1]);
        }
        Self {
            n: register.n,
            amps,
        }
    }

    /// The ancilla state (|0> - |1>)/sqrt(2) that turns the reversible oracle
    /// into a pure phase.
    pub fn minus_ancilla() -> [Complex64; 2] {
        let s = std::f64::consts::FRAC_1_SQRT_2;
        [Complex64::new(s, 0.0), Complex64::new(-s, 0.0)]
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn amplitudes(&self) -> &[Complex64] {
        &self.amps
    }

    pub fn max_amp_distance(&self, other: &Self) -> f64 {
        self.amps
            .iter()
            .zip(&other.amps)
            .map(|(a, b)| (a - b).norm())
            .fold(0.0, f64::max)
    }
}

/// The reversible oracle |x>|y> -> |x>|y xor f(x)>: swaps the two ancilla
/// amplitudes wherever f(x) = 1.
pub fn apply_oracle_with_ancilla(state: &AncillaState, f: &OracleSpec) -> Result<AncillaState> {
    if f.n() != state.n {
        return Err(Error::OracleArity {
            oracle_n: f.n(),
            setup_n: state.n,
        });
    }
    let mut amps = state.amps.clone();
    for x in 0..1usize << state.n {
        if f.value_by_index(x) == 1 {
            amps.swap(2 * x, 2 * x + 1);
        }
    }
    Ok(AncillaState { n: state.n, amps })
}

/// Probability distribution over n-bit outcomes, lexicographically indexed.
#[derive(Clone, Debug)]
pub struct OutcomeDistribution {
    n: usize,
    p: Vec<f64>,
}

impl OutcomeDistribution {
    pub fn new(n: usize, p: Vec<f64>) -> Result<Self> {
        if p.len() != 1 << n {
            return Err(Error::LengthMismatch {
                what: "outcome distribution",
                expected: 1 << n,
                got: p.len(),
            });
        }
        Ok(Self { n, p })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn probability(&self, z: &BitString) -> f64 {
        self.p[z.lex_index()]
    }

    pub fn probabilities(&self) -> &[f64] {
        &self.p
    }

    pub fn total(&self) -> f64 {
        self.p.iter().sum()
    }

    pub fn argmax(&self) -> BitString {
        let (idx, _) = self
            .p
            .iter()
            .enumerate()
            .fold((0, f64::MIN), |best, (i, &p)| {
                if p > best.1 {
                    (i, p)
                } else {
                    best
                }
            });
        BitString::from_lex_index(self.n, idx)
    }

    pub fn max_abs_diff(&self, other: &Self) -> f64 {
        self.p
            .iter()
            .zip(&other.p)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }
}

/// Verdict of the single-query constant-vs-balanced decision.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum DjVerdict {
    Constant,
    Balanced,
}

/// Decides constant/balanced from an outcome distribution: all-zeros outcome
/// means constant.
pub fn dj_verdict(dist: &OutcomeDistribution) -> DjVerdict {
    if dist.probability(&BitString::zeros(dist.n)) > 0.5 {
        DjVerdict::Constant
    } else {
        DjVerdict::Balanced
    }
}

/// Exact outcome distribution of the single-query interference protocol:
/// P(z) = |2^{-n} sum_x (-1)^{x.z + f(x)}|^2.
pub fn dj_distribution(f: &OracleSpec) -> Result<OutcomeDistribution> {
    let state = StateVector::all_zeros(f.n())?;
    let state = hadamard_all(&state);
    let state = apply_phase_oracle(&state, f)?;
    let state = hadamard_all(&state);
    OutcomeDistribution::new(f.n(), state.probabilities())
}

/// Queries a deterministic classical algorithm needs in the worst case to
/// decide constant vs balanced with certainty: 2^{n-1} + 1.
pub fn classical_dj_worst_case(n: usize) -> u64 {
    (1u64 << (n - 1)) + 1
}

/// Witness that `classical_dj_worst_case` is tight: after 2^{n-1} queries
/// that all returned the same bit, both a constant and a balanced completion
/// remain consistent, so no deterministic strategy can stop earlier.
pub struct DjAdversaryWitness {
    pub queries: Vec<BitString>,
    pub answers: Vec<u8>,
    pub constant_completion: OracleSpec,
    pub balanced_completion: OracleSpec,
}

/// Builds the witness for any set of 2^{n-1} distinct queries (here the
/// lexicographically first ones, all answered 0).
pub fn dj_adversary_witness(n: usize) -> DjAdversaryWitness {
    let half = 1usize << (n - 1);
    let queries: Vec<BitString> = (0..half).map(|i| BitString::from_lex_index(n, i)).collect();
    let answers = vec![0u8; half];
    let constant_completion = OracleSpec::constant(n, 0).expect("valid");
    // 0 on the queried half, 1 elsewhere: exactly half ones.
    let mut table = vec![0u8; 1 << n];
    for entry in table.iter_mut().skip(half) {
        *entry = 1;
    }
    let balanced_completion = OracleSpec::new(n, table, "balanced_completion").expect("valid");
    DjAdversaryWitness {
        queries,
        answers,
        constant_completion,
        balanced_completion,
    }
}

impl DjAdversaryWitness {
    /// Both completions agree with every recorded answer and belong to
    /// opposite promise classes.
    pub fn is_consistent(&self) -> bool {
        let matches = |f: &OracleSpec| {
            self.queries
                .iter()
                .zip(&self.answers)
                .all(|(x, &a)| f.value(x).map(|v| v == a).unwrap_or(false))
        };
        matches(&self.constant_completion)
            && matches(&self.balanced_completion)
            && self.constant_completion.classify() == OracleClass::Constant
            && self.balanced_completion.classify() == OracleClass::Balanced
    }
}

/// Queries a classical algorithm needs to identify the key of a linear
/// oracle: n (one per basis vector).
pub fn classical_bv_queries(n: usize) -> u64 {
    n as u64
}

/// Constructive classical strategy: query each unit vector e_l; the answers
/// are exactly the bits of j.
pub struct BvRecoveryDemo {
    pub queries: Vec<BitString>,
    pub answers: Vec<u8>,
    pub recovered: BitString,
}

pub fn bv_recovery_demo(f: &OracleSpec) -> Result<BvRecoveryDemo> {
    let n = f.n();
    let mut queries = Vec::with_capacity(n);
    let mut answers = Vec::with_capacity(n);
    for l in 0..n {
        let mut bits = vec![0u8; n];
        bits[l] = 1;
        let e = BitString::new(bits).expect("binary");
        answers.push(f.value(&e)?);
        queries.push(e);
    }
    let recovered = BitString::new(answers.clone()).expect("binary");
    Ok(BvRecoveryDemo {
        queries,
        answers,
        recovered,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::oracles::{enumerate_bv_family, oracle_bv};

    const EPS: f64 = 1e-12;

    #[test]
    fn hadamard_on_zero_is_uniform() {
        let s = hadamard_all(&StateVector::all_zeros(3).unwrap());
        let expected = 2f64.powf(-1.5);
        for a in s.amplitudes() {
            assert!((a - Complex64::new(expected, 0.0)).norm() < EPS);
        }
    }

    #[test]
    fn hadamard_on_single_one_bit() {
        // |1> -> (|0> - |1>)/sqrt(2).
        let s = StateVector::new(
            1,
            vec![Complex64::new(0.0, 0.0), Complex64::new(1.0, 0.0)],
        )
        .unwrap();
        let h = hadamard_all(&s);
        let v = std::f64::consts::FRAC_1_SQRT_2;
        assert!((h.amplitudes()[0] - Complex64::new(v, 0.0)).norm() < EPS);
        assert!((h.amplitudes()[1] - Complex64::new(-v, 0.0)).norm() < EPS);
    }

    #[test]
    fn hadamard_is_involutive() {
        let s = StateVector::new(
            2,
            vec![
                Complex64::new(0.5, 0.1),
                Complex64::new(-0.3, 0.2),
                Complex64::new(0.0, -0.7),
                Complex64::new(0.2, 0.0),
            ],
        )
        .unwrap();
        let back = hadamard_all(&hadamard_all(&s));
        assert!(s.max_amp_distance(&back) < EPS);
    }

    #[test]
    fn register_size_is_capped() {
        assert!(StateVector::all_zeros(MAX_QUBITS + 1).is_err());
    }

    #[test]
    fn constant_oracle_concentrates_on_zero() {
        for value in 0..2u8 {
            let d = dj_distribution(&OracleSpec::constant(3, value).unwrap()).unwrap();
            assert!((d.probability(&BitString::zeros(3)) - 1.0).abs() < EPS);
            assert_eq!(dj_verdict(&d), DjVerdict::Constant);
        }
    }

    #[test]
    fn balanced_oracle_never_returns_zero() {
        for f in enumerate_bv_family(3) {
            if f.classify() != crate::oracles::OracleClass::Balanced {
                continue;
            }
            let d = dj_distribution(&f).unwrap();
            assert!(d.probability(&BitString::zeros(3)) < EPS);
            assert_eq!(dj_verdict(&d), DjVerdict::Balanced);
        }
    }

    #[test]
    fn linear_oracle_reveals_its_key_in_one_query() {
        let j = BitString::parse("101").unwrap();
        let d = dj_distribution(&oracle_bv(&j)).unwrap();
        assert!((d.probability(&j) - 1.0).abs() < EPS);
        assert_eq!(d.argmax(), j);
    }

    #[test]
    fn complement_leaves_distribution_unchanged() {
        for f in enumerate_bv_family(2) {
            let d1 = dj_distribution(&f).unwrap();
            let d2 = dj_distribution(&crate::oracles::oracle_complement(&f)).unwrap();
            assert!(d1.max_abs_diff(&d2) < EPS);
        }
    }

    #[test]
    fn ancilla_oracle_reduces_to_phase_oracle_on_minus_ancilla() {
        let f = oracle_bv(&BitString::parse("110").unwrap());
        let register = hadamard_all(&StateVector::all_zeros(3).unwrap());
        let joint = AncillaState::from_product(&register, AncillaState::minus_ancilla());
        let via_ancilla = apply_oracle_with_ancilla(&joint, &f).unwrap();
        let via_phase = AncillaState::from_product(
            &apply_phase_oracle(&register, &f).unwrap(),
            AncillaState::minus_ancilla(),
        );
        assert!(via_ancilla.max_amp_distance(&via_phase) < EPS);
    }

    #[test]
    fn ancilla_oracle_on_zero_ancilla_just_writes_f() {
        // |x>|0> -> |x>|f(x)>.
        let f = oracle_bv(&BitString::parse("11").unwrap());
        let register = hadamard_all(&StateVector::all_zeros(2).unwrap());
        let joint = AncillaState::from_product(
            &register,
            [Complex64::new(1.0, 0.0), Complex64::new(0.0, 0.0)],
        );
        let out = apply_oracle_with_ancilla(&joint, &f).unwrap();
        for x in 0..4 {
            let fx = f.value_by_index(x) as usize;
            assert!((out.amplitudes()[2 * x + fx].norm() - 0.5).abs() < EPS);
            assert!(out.amplitudes()[2 * x + 1 - fx].norm() < EPS);
        }
    }

    #[test]
    fn classical_baselines() {
        assert_eq!(classical_dj_worst_case(3), 5);
        assert_eq!(classical_bv_queries(3), 3);
    }

    #[test]
    fn dj_adversary_witness_holds_for_small_n() {
        for n in 1..=6 {
            let w = dj_adversary_witness(n);
            assert_eq!(w.queries.len(), 1 << (n - 1));
            assert!(w.is_consistent(), "n={n}");
        }
    }

    #[test]
    fn bv_recovery_uses_n_unit_queries() {
        let j = BitString::parse("1011").unwrap();
        let demo = bv_recovery_demo(&oracle_bv(&j)).unwrap();
        assert_eq!(demo.queries.len(), 4);
        assert_eq!(demo.recovered, j);
    }
}
