//! Passive fiber components: 2x2 couplers, unbalanced Mach-Zehnder stages,
//! the Faraday mirror, and attenuation.
//!
//! Convention: a coupler transmits with real amplitude `t` and reflects
//! (cross-couples) with amplitude `i*r`. The factor `i` per reflection is what
//! turns the two reflections of a long-arm traversal into the `exp(i*pi)`
//! sign on that path.

use crate::error::{Error, Result};
use crate::timebin::{Amplitude, Direction, TimeBinState};

/// A 2x2 fused fiber coupler.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CouplerSpec {
    /// Power fraction sent to the transmitted (bar) port, before excess loss.
    pub transmittance: f64,
    /// Power fraction absorbed by the component itself.
    pub excess_loss: f64,
}

impl CouplerSpec {
    pub fn new(transmittance: f64, excess_loss: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&transmittance) || !transmittance.is_finite() {
            return Err(Error::InvalidParameter {
                what: "coupler transmittance",
                value: transmittance,
                constraint: "0 <= T <= 1",
            });
        }
        if !(0.0..=1.0).contains(&excess_loss) || !excess_loss.is_finite() {
            return Err(Error::InvalidParameter {
                what: "coupler excess loss",
                value: excess_loss,
                constraint: "0 <= loss <= 1",
            });
        }
        Ok(Self {
            transmittance,
            excess_loss,
        })
    }

    /// Lossless 50:50 coupler.
    pub fn ideal() -> Self {
        Self {
            transmittance: 0.5,
            excess_loss: 0.0,
        }
    }

    /// Real amplitude of the transmitted (bar) path.
    pub fn transmission_amplitude(&self) -> f64 {
        (self.transmittance * (1.0 - self.excess_loss)).sqrt()
    }

    /// Amplitude of the reflected (cross) path, including the `i` phase.
    pub fn reflection_amplitude(&self) -> Amplitude {
        Amplitude::new(
            0.0,
            ((1.0 - self.transmittance) * (1.0 - self.excess_loss)).sqrt(),
        )
    }
}

/// Scatters a pair of input amplitudes through a coupler:
/// `a_out = t*a + i*r*b`, `b_out = i*r*a + t*b`.
/// Unitary when `excess_loss` is zero.
pub fn coupler_scatter(a_in: Amplitude, b_in: Amplitude, spec: &CouplerSpec) -> (Amplitude, Amplitude) {
    let t = spec.transmission_amplitude();
    let ir = spec.reflection_amplitude();
    (t * a_in + ir * b_in, ir * a_in + t * b_in)
}

/// One unbalanced Mach-Zehnder stage: an input coupler, a short arm, a long
/// arm with extra integer delay `delta` and adjustable phase `phi`, and an
/// output coupler.
#[derive(Clone, Debug)]
pub struct MziSpec {
    /// Long-arm excess delay in elementary units. At least 1, so the two arms
    /// never land in the same bin.
    pub delta: i64,
    /// Long-arm phase in radians (propagation phase modulo 2*pi).
    pub phi: f64,
    pub in_coupler: CouplerSpec,
    pub out_coupler: CouplerSpec,
}

impl MziSpec {
    pub fn ideal(delta: i64) -> Self {
        Self {
            delta,
            phi: 0.0,
            in_coupler: CouplerSpec::ideal(),
            out_coupler: CouplerSpec::ideal(),
        }
    }
}

/// Propagates a state forward through one stage. Returns the two output
/// states: `through` continues down the chain (short path transmitted twice,
/// long path reflected twice), `drop` exits by the other port.
///
/// For an ideal 50:50 stage and a unit pulse at bin b, `through` holds
/// amplitude 1/2 at b and -exp(i*phi)/2 at b + delta.
pub fn mzi_forward(state: &TimeBinState, spec: &MziSpec) -> (TimeBinState, TimeBinState) {
    let t_in = spec.in_coupler.transmission_amplitude();
    let ir_in = spec.in_coupler.reflection_amplitude();
    let t_out = spec.out_coupler.transmission_amplitude();
    let ir_out = spec.out_coupler.reflection_amplitude();
    let long = Amplitude::from_polar(1.0, spec.phi);

    let mut through = TimeBinState::new(state.n);
    let mut drop = TimeBinState::new(state.n);
    through.unit_ns = state.unit_ns;
    drop.unit_ns = state.unit_ns;
    through.direction = state.direction;
    drop.direction = state.direction;

    for (bin, a) in state.iter() {
        // Short arm: transmit at both couplers (through) or transmit then
        // reflect (drop).
        through.add_amplitude(bin, a * t_in * t_out);
        drop.add_amplitude(bin, a * t_in * ir_out);
        // Long arm: two reflections (through) or reflect then transmit (drop).
        let delayed = a * long;
        through.add_amplitude(bin + spec.delta, delayed * ir_in * ir_out);
        drop.add_amplitude(bin + spec.delta, delayed * ir_in * t_out);
    }
    (through, drop)
}

/// Faraday mirror: reflects every pulse with unchanged amplitudes and flips
/// the propagation-direction tag. The polarization swap it performs in the
/// physical device is what makes the return pass see the same couplers; the
/// scalar model only needs the direction flip.
pub fn faraday_reflect(state: &TimeBinState) -> TimeBinState {
    let mut out = state.clone();
    out.direction = match state.direction {
        Direction::Forward => Direction::Backward,
        Direction::Backward => Direction::Forward,
    };
    out
}

/// Uniform power attenuation: every amplitude is scaled by
/// `sqrt(power_transmittance)`.
pub fn attenuate(state: &TimeBinState, power_transmittance: f64) -> Result<TimeBinState> {
    if !(0.0..=1.0).contains(&power_transmittance) || !power_transmittance.is_finite() {
        return Err(Error::InvalidParameter {
            what: "attenuator power transmittance",
            value: power_transmittance,
            constraint: "0 <= T <= 1",
        });
    }
    Ok(state.scaled(Amplitude::new(power_transmittance.sqrt(), 0.0)))
}

/// Converts an attenuation in dB to a power transmittance factor.
pub fn db_to_power_transmittance(db: f64) -> f64 {
    10f64.powf(-db / 10.0)
}

#[cfg(test)]
mod tests {
    use super::*;

    const EPS: f64 = 1e-12;

    fn c(re: f64, im: f64) -> Amplitude {
        Amplitude::new(re, im)
    }

    #[test]
    fn ideal_coupler_splits_unit_input_evenly() {
        let (a, b) = coupler_scatter(c(1.0, 0.0), c(0.0, 0.0), &CouplerSpec::ideal());
        let s = std::f64::consts::FRAC_1_SQRT_2;
        assert!((a - c(s, 0.0)).norm() < EPS);
        assert!((b - c(0.0, s)).norm() < EPS);
    }

    #[test]
    fn two_ideal_couplers_give_full_swap_with_pi_phase() {
        // Two reflections accumulate i*i = exp(i*pi).
        let spec = CouplerSpec::ideal();
        let (a, b) = coupler_scatter(c(1.0, 0.0), c(0.0, 0.0), &spec);
        let (a, b) = coupler_scatter(a, b, &spec);
        assert!((a - c(0.0, 0.0)).norm() < EPS);
        assert!((b - c(0.0, 1.0)).norm() < EPS);
    }

    #[test]
    fn lossless_coupler_is_unitary() {
        let spec = CouplerSpec::new(0.3, 0.0).unwrap();
        let (a, b) = coupler_scatter(c(0.6, -0.2), c(-0.1, 0.7), &spec);
        let before = c(0.6, -0.2).norm_sqr() + c(-0.1, 0.7).norm_sqr();
        let after = a.norm_sqr() + b.norm_sqr();
        assert!((before - after).abs() < 1e-15);
    }

    #[test]
    fn excess_loss_drains_power() {
        let spec = CouplerSpec::new(0.5, 0.1).unwrap();
        let (a, b) = coupler_scatter(c(1.0, 0.0), c(0.0, 0.0), &spec);
        assert!((a.norm_sqr() + b.norm_sqr() - 0.9).abs() < EPS);
    }

    #[test]
    fn mzi_forward_ideal_unit_pulse() {
        let state = TimeBinState::single_pulse(1, 0);
        let (through, drop) = mzi_forward(&state, &MziSpec::ideal(1));
        assert!((through.amplitude(0) - c(0.5, 0.0)).norm() < EPS);
        assert!((through.amplitude(1) - c(-0.5, 0.0)).norm() < EPS);
        assert!((drop.amplitude(0) - c(0.0, 0.5)).norm() < EPS);
        assert!((drop.amplitude(1) - c(0.0, 0.5)).norm() < EPS);
        // Both ports together conserve the photon.
        assert!((through.total_probability() + drop.total_probability() - 1.0).abs() < EPS);
    }

    #[test]
    fn mzi_forward_phase_rotates_long_arm() {
        let state = TimeBinState::single_pulse(1, 0);
        let mut spec = MziSpec::ideal(1);
        spec.phi = std::f64::consts::PI;
        let (through, _) = mzi_forward(&state, &spec);
        // exp(i*pi) cancels the two-reflection sign.
        assert!((through.amplitude(1) - c(0.5, 0.0)).norm() < EPS);
    }

    #[test]
    fn faraday_reflect_is_amplitude_identity_and_direction_flip() {
        let mut s = TimeBinState::single_pulse(2, 3);
        s.add_amplitude(5, c(0.0, -0.5));
        let r = faraday_reflect(&s);
        assert_eq!(r.direction, Direction::Backward);
        assert!(s.max_bin_distance(&r) < 1e-15);
        let rr = faraday_reflect(&r);
        assert_eq!(rr.direction, Direction::Forward);
    }

    #[test]
    fn attenuate_by_21_db() {
        let s = TimeBinState::single_pulse(1, 0);
        let out = attenuate(&s, db_to_power_transmittance(21.0)).unwrap();
        assert!((out.total_probability() - 7.943282347242815e-3).abs() < 1e-12);
    }

    #[test]
    fn attenuate_rejects_gain() {
        let s = TimeBinState::single_pulse(1, 0);
        assert!(attenuate(&s, 1.5).is_err());
        assert!(attenuate(&s, -0.1).is_err());
    }
}
