//! Sparse complex-amplitude states over discrete time bins.
//!
//! Every delay in the interferometer chain is an integer multiple of the
//! elementary delay, so bins are indexed by exact integers and the physical
//! bin duration (`unit_ns`) is metadata only. States are deliberately
//! sub-normalized: total probability below one represents light absorbed by
//! isolators, unconnected ports, or an attenuator.

use std::collections::BTreeMap;
use std::fmt;

use num_complex::Complex64;

use crate::error::{Error, Result};

/// Complex field amplitude of one time bin.
pub type Amplitude = Complex64;

/// Elementary delay of the first interferometer stage, in nanoseconds.
pub const DEFAULT_UNIT_NS: f64 = 3.75;

/// Propagation direction tag, flipped by the mirror at the far end of the
/// chain. Pure bookkeeping for the experiment assembler; no operation on
/// amplitudes depends on it.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Direction {
    Forward,
    Backward,
}

/// A fixed-length string of bits. Bit `l` (0-indexed) belongs to stage
/// `l + 1` of the chain: it selects the long arm of that stage, a delay-line
/// exit, or one coordinate of an oracle input, depending on context.
///
/// Two linearizations are used and must not be confused:
/// * `lex_index` orders bit strings lexicographically with bit 0 most
///   significant (truth tables, state vectors, distributions);
/// * [`bitstring_to_bin`] maps a string to its arrival time bin, where bit 0
///   carries the smallest delay.
#[derive(Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Debug)]
pub struct BitString {
    bits: Vec<u8>,
}

impl BitString {
    pub fn new(bits: Vec<u8>) -> Result<Self> {
        if let Some(&bad) = bits.iter().find(|&&b| b > 1) {
            return Err(Error::InvalidBit { value: bad });
        }
        Ok(Self { bits })
    }

    pub fn zeros(n: usize) -> Self {
        Self { bits: vec![0; n] }
    }

    /// Parses a string such as "101" (leftmost character is bit 0).
    pub fn parse(s: &str) -> Result<Self> {
        s.chars()
            .map(|c| match c {
                '0' => Ok(0),
                '1' => Ok(1),
                other => Err(Error::InvalidBit {
                    value: other as u8,
                }),
            })
            .collect::<Result<Vec<u8>>>()
            .map(|bits| Self { bits })
    }

    /// Inverse of `lex_index`: bit 0 is the most significant bit of `index`.
    pub fn from_lex_index(n: usize, index: usize) -> Self {
        debug_assert!(index < (1 << n));
        let bits = (0..n).map(|l| ((index >> (n - 1 - l)) & 1) as u8).collect();
        Self { bits }
    }

    /// Position of this string in lexicographic order (bit 0 most significant).
    pub fn lex_index(&self) -> usize {
        self.bits
            .iter()
            .fold(0usize, |acc, &b| (acc << 1) | b as usize)
    }

    pub fn len(&self) -> usize {
        self.bits.len()
    }

    pub fn is_empty(&self) -> bool {
        self.bits.is_empty()
    }

    pub fn bit(&self, l: usize) -> u8 {
        self.bits[l]
    }

    pub fn bits(&self) -> &[u8] {
        &self.bits
    }

    /// Number of 1 bits.
    pub fn weight(&self) -> usize {
        self.bits.iter().map(|&b| b as usize).sum()
    }

    /// Mod-2 inner product with another string of the same length.
    pub fn dot(&self, other: &Self) -> Result<u8> {
        if self.len() != other.len() {
            return Err(Error::LengthMismatch {
                what: "bit string inner product",
                expected: self.len(),
                got: other.len(),
            });
        }
        Ok(self
            .bits
            .iter()
            .zip(&other.bits)
            .map(|(a, b)| a & b)
            .fold(0, |acc, x| acc ^ x))
    }

    /// Bitwise XOR with another string of the same length.
    pub fn xor(&self, other: &Self) -> Result<Self> {
        if self.len() != other.len() {
            return Err(Error::LengthMismatch {
                what: "bit string xor",
                expected: self.len(),
                got: other.len(),
            });
        }
        Ok(Self {
            bits: self
                .bits
                .iter()
                .zip(&other.bits)
                .map(|(a, b)| a ^ b)
                .collect(),
        })
    }

    /// All length-n strings in lexicographic order.
    pub fn all(n: usize) -> impl Iterator<Item = BitString> {
        (0..1usize << n).map(move |i| BitString::from_lex_index(n, i))
    }
}

impl fmt::Display for BitString {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for &b in &self.bits {
            write!(f, "{b}")?;
        }
        Ok(())
    }
}

/// Arrival-time bin of the pulse labeled by `x`: the sum of the stage delays
/// picked up along the way, in units of the elementary delay.
pub fn bitstring_to_bin(x: &BitString, deltas: &[i64]) -> Result<i64> {
    if x.len() != deltas.len() {
        return Err(Error::LengthMismatch {
            what: "bitstring_to_bin",
            expected: deltas.len(),
            got: x.len(),
        });
    }
    Ok(x.bits()
        .iter()
        .zip(deltas)
        .map(|(&b, &d)| b as i64 * d)
        .sum())
}

/// Sparse map from integer time bin to complex amplitude.
///
/// Bins that interfere to exactly zero stay stored: a structurally occupied
/// bin with vanishing amplitude (destructive interference) is distinct from a
/// bin no light ever reaches. Use [`TimeBinState::pruned`] to drop entries
/// below a threshold when that distinction is not wanted.
#[derive(Clone, Debug)]
pub struct TimeBinState {
    bins: BTreeMap<i64, Amplitude>,
    /// Number of interferometer stages this state belongs to.
    pub n: usize,
    /// Physical duration of one bin unit, in nanoseconds.
    pub unit_ns: f64,
    pub direction: Direction,
}

impl TimeBinState {
    pub fn new(n: usize) -> Self {
        Self {
            bins: BTreeMap::new(),
            n,
            unit_ns: DEFAULT_UNIT_NS,
            direction: Direction::Forward,
        }
    }

    /// A unit pulse in a single bin.
    pub fn single_pulse(n: usize, bin: i64) -> Self {
        let mut s = Self::new(n);
        s.add_amplitude(bin, Amplitude::new(1.0, 0.0));
        s
    }

    pub fn amplitude(&self, bin: i64) -> Amplitude {
        self.bins
            .get(&bin)
            .copied()
            .unwrap_or_else(|| Amplitude::new(0.0, 0.0))
    }

    /// Coherently adds `a` to the amplitude already in `bin`. Addition is
    /// commutative and (up to float rounding) associative, so any insertion
    /// order yields the same state.
    pub fn add_amplitude(&mut self, bin: i64, a: Amplitude) {
        debug_assert!(a.re.is_finite() && a.im.is_finite());
        *self
            .bins
            .entry(bin)
            .or_insert_with(|| Amplitude::new(0.0, 0.0)) += a;
    }

    /// Sum of squared magnitudes. At most 1 for any state produced from a
    /// single input photon (sub-normalization represents loss).
    pub fn total_probability(&self) -> f64 {
        self.bins.values().map(|a| a.norm_sqr()).sum()
    }

    /// Number of stored bins, including any that interfered to zero.
    pub fn occupied_bins(&self) -> usize {
        self.bins.len()
    }

    pub fn iter(&self) -> impl Iterator<Item = (i64, Amplitude)> + '_ {
        self.bins.iter().map(|(&b, &a)| (b, a))
    }

    pub fn occupied_bin_indices(&self) -> impl Iterator<Item = i64> + '_ {
        self.bins.keys().copied()
    }

    /// Applies `exp(i * phase)` to each listed bin; bins absent from the
    /// pattern are untouched. Norm-preserving.
    pub fn apply_phase_pattern(&self, pattern: &BTreeMap<i64, f64>) -> Self {
        let mut out = self.clone();
        for (bin, phase) in pattern {
            if let Some(a) = out.bins.get_mut(bin) {
                *a *= Amplitude::from_polar(1.0, *phase);
            }
        }
        out
    }

    /// Multiplies every amplitude by a fixed complex factor.
    pub fn scaled(&self, factor: Amplitude) -> Self {
        let mut out = self.clone();
        for a in out.bins.values_mut() {
            *a *= factor;
        }
        out
    }

    /// Drops bins whose squared magnitude is below `threshold`.
    pub fn pruned(mut self, threshold: f64) -> Self {
        self.bins.retain(|_, a| a.norm_sqr() >= threshold);
        self
    }

    /// Largest absolute amplitude difference against another state, over the
    /// union of occupied bins.
    pub fn max_bin_distance(&self, other: &Self) -> f64 {
        let mut d: f64 = 0.0;
        for (&bin, a) in &self.bins {
            d = d.max((*a - other.amplitude(bin)).norm());
        }
        for (&bin, a) in &other.bins {
            d = d.max((*a - self.amplitude(bin)).norm());
        }
        d
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const EPS: f64 = 1e-15;

    #[test]
    fn empty_state_has_zero_probability() {
        let s = TimeBinState::new(3);
        assert_eq!(s.total_probability(), 0.0);
        assert_eq!(s.occupied_bins(), 0);
    }

    #[test]
    fn equal_weight_bins_sum_to_one() {
        let mut s = TimeBinState::new(2);
        let a = Amplitude::new(0.5, 0.0);
        for bin in 0..4 {
            s.add_amplitude(bin, a);
        }
        assert!((s.total_probability() - 1.0).abs() < EPS);
    }

    #[test]
    fn destructive_addition_leaves_structural_zero_bin() {
        let mut s = TimeBinState::new(1);
        s.add_amplitude(5, Amplitude::new(1.0, 0.0));
        s.add_amplitude(5, Amplitude::new(-1.0, 0.0));
        assert_eq!(s.amplitude(5), Amplitude::new(0.0, 0.0));
        // The bin stays occupied until explicitly pruned.
        assert_eq!(s.occupied_bins(), 1);
        assert_eq!(s.clone().pruned(1e-30).occupied_bins(), 0);
    }

    #[test]
    fn phase_pattern_shifts_phase_and_preserves_norm() {
        let mut s = TimeBinState::new(1);
        s.add_amplitude(0, Amplitude::new(0.6, 0.0));
        s.add_amplitude(1, Amplitude::new(0.0, 0.8));
        let mut pattern = BTreeMap::new();
        pattern.insert(1i64, std::f64::consts::PI);
        let t = s.apply_phase_pattern(&pattern);
        assert!((t.amplitude(0) - Amplitude::new(0.6, 0.0)).norm() < EPS);
        assert!((t.amplitude(1) - Amplitude::new(0.0, -0.8)).norm() < EPS);
        assert!((t.total_probability() - s.total_probability()).abs() < EPS);
    }

    #[test]
    fn bitstring_to_bin_maps_sum_of_delays() {
        // 101 with delays (1, 2, 4): bins 1 + 4 = 5.
        let x = BitString::parse("101").unwrap();
        assert_eq!(bitstring_to_bin(&x, &[1, 2, 4]).unwrap(), 5);
        assert_eq!(
            bitstring_to_bin(&BitString::zeros(3), &[1, 2, 4]).unwrap(),
            0
        );
    }

    #[test]
    fn bitstring_to_bin_rejects_length_mismatch() {
        let x = BitString::parse("10").unwrap();
        assert!(bitstring_to_bin(&x, &[1, 2, 4]).is_err());
    }

    #[test]
    fn lex_index_round_trip_and_order() {
        for n in 0..6 {
            for i in 0..1usize << n {
                let x = BitString::from_lex_index(n, i);
                assert_eq!(x.lex_index(), i);
                assert_eq!(x.len(), n);
            }
        }
        // Vec ordering matches lexicographic index ordering.
        let a = BitString::parse("011").unwrap();
        let b = BitString::parse("100").unwrap();
        assert!(a < b);
        assert!(a.lex_index() < b.lex_index());
    }

    #[test]
    fn dot_and_xor() {
        let x = BitString::parse("110").unwrap();
        let j = BitString::parse("100").unwrap();
        assert_eq!(x.dot(&j).unwrap(), 1);
        assert_eq!(x.xor(&j).unwrap(), BitString::parse("010").unwrap());
        assert!(x.dot(&BitString::parse("1").unwrap()).is_err());
    }

    #[test]
    fn bit_strings_reject_non_binary_values() {
        assert!(BitString::new(vec![0, 2]).is_err());
        assert!(BitString::parse("10x").is_err());
    }
}
