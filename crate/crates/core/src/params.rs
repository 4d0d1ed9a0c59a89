//! Physical parameters of one cavity-feedback experiment.
//!
//! Times are measured in units of `1/kappa`; with the default `kappa = 1` every
//! duration in this crate is already dimensionless.

use std::f64::consts::TAU;
use std::fmt;

use num_complex::Complex64;

use crate::error::{Error, Result};

/// Decay rate, drive, unknown phase, detector efficiency and feedback pulse.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CavityParams {
    pub kappa: f64,
    pub omega: f64,
    phi: f64,
    pub eta: f64,
    pub beta: Complex64,
}

impl CavityParams {
    pub fn new(kappa: f64, omega: f64, phi: f64, eta: f64, beta: Complex64) -> Result<Self> {
        let params = CavityParams {
            kappa,
            omega,
            phi: canonical_phase(phi),
            eta,
            beta,
        };
        params.validate()?;
        Ok(params)
    }

    /// Parameters for a cavity prepared with mean photon number `alpha_sq`
    /// (`kappa = 1`, `omega = sqrt(alpha_sq)`) and the default feedback pulse
    /// `beta = +|alpha_ss|`.
    pub fn from_photon_number(alpha_sq: f64, phi: f64, eta: f64) -> Result<Self> {
        if !(alpha_sq >= 0.0) || !alpha_sq.is_finite() {
            return Err(Error::invalid("alpha_sq", format!("must be finite and >= 0, got {alpha_sq}")));
        }
        let amplitude = alpha_sq.sqrt();
        Self::new(1.0, amplitude, phi, eta, Complex64::new(amplitude, 0.0))
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.kappa > 0.0) || !self.kappa.is_finite() {
            return Err(Error::invalid("kappa", format!("must be finite and > 0, got {}", self.kappa)));
        }
        if !(self.omega >= 0.0) || !self.omega.is_finite() {
            return Err(Error::invalid("omega", format!("must be finite and >= 0, got {}", self.omega)));
        }
        if !(0.0..=1.0).contains(&self.eta) {
            return Err(Error::invalid("eta", format!("must lie in [0, 1], got {}", self.eta)));
        }
        if !self.phi.is_finite() {
            return Err(Error::invalid("phi", "must be finite"));
        }
        if !self.beta.re.is_finite() || !self.beta.im.is_finite() {
            return Err(Error::invalid("beta", "must be finite"));
        }
        Ok(())
    }

    /// The unknown phase, canonicalized to `[0, 2pi)`.
    pub fn phi(&self) -> f64 {
        self.phi
    }

    pub fn with_phi(mut self, phi: f64) -> Self {
        self.phi = canonical_phase(phi);
        self
    }

    pub fn with_eta(mut self, eta: f64) -> Self {
        self.eta = eta;
        self
    }

    pub fn with_beta(mut self, beta: Complex64) -> Self {
        self.beta = beta;
        self
    }

    /// Same cavity with the continuous drive switched off.
    pub fn measurement_stage(mut self) -> Self {
        self.omega = 0.0;
        self
    }

    /// `|alpha_ss|^2 = (omega / kappa)^2`.
    pub fn steady_state_photons(&self) -> f64 {
        let r = self.omega / self.kappa;
        r * r
    }
}

fn canonical_phase(phi: f64) -> f64 {
    let p = phi.rem_euclid(TAU);
    // rem_euclid can round up to exactly TAU for tiny negative inputs
    if p >= TAU {
        0.0
    } else {
        p
    }
}

/// Coherent-state amplitude `alpha`; mean photon number `|alpha|^2`.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct CoherentAmplitude(Complex64);

impl CoherentAmplitude {
    pub const VACUUM: CoherentAmplitude = CoherentAmplitude(Complex64::new(0.0, 0.0));

    pub fn new(value: Complex64) -> Result<Self> {
        if value.re.is_finite() && value.im.is_finite() {
            Ok(CoherentAmplitude(value))
        } else {
            Err(Error::invalid("alpha", format!("non-finite amplitude {value}")))
        }
    }

    pub fn from_parts(re: f64, im: f64) -> Result<Self> {
        Self::new(Complex64::new(re, im))
    }

    pub(crate) fn new_unchecked(value: Complex64) -> Self {
        CoherentAmplitude(value)
    }

    pub fn value(&self) -> Complex64 {
        self.0
    }

    pub fn re(&self) -> f64 {
        self.0.re
    }

    pub fn im(&self) -> f64 {
        self.0.im
    }

    /// `|alpha|^2`.
    pub fn photons(&self) -> f64 {
        self.0.norm_sqr()
    }
}

impl fmt::Display for CoherentAmplitude {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let sign = if self.0.im.is_sign_negative() { '-' } else { '+' };
        write!(f, "{}{}{}i", self.0.re, sign, self.0.im.abs())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    #[test]
    fn rejects_nonpositive_kappa() {
        assert!(CavityParams::new(0.0, 1.0, 0.0, 0.5, Complex64::new(1.0, 0.0)).is_err());
        assert!(CavityParams::new(-1.0, 1.0, 0.0, 0.5, Complex64::new(1.0, 0.0)).is_err());
    }

    #[test]
    fn rejects_eta_out_of_range() {
        let err = CavityParams::from_photon_number(4.0, 0.0, 1.5).unwrap_err();
        assert!(matches!(err, Error::InvalidParameter { name: "eta", .. }));
    }

    #[test]
    fn phase_is_canonical() {
        let p = CavityParams::from_photon_number(4.0, -PI / 2.0, 0.5).unwrap();
        assert!((p.phi() - 1.5 * PI).abs() < 1e-15);
        let p = p.with_phi(5.0 * PI);
        assert!((p.phi() - PI).abs() < 1e-12);
        assert!(p.with_phi(-1e-300).phi() < TAU);
    }

    #[test]
    fn display_shows_signed_imaginary_part() {
        let a = CoherentAmplitude::from_parts(-2.0, 0.0).unwrap();
        assert_eq!(a.to_string(), "-2+0i");
        let a = CoherentAmplitude::from_parts(0.0, -2.0).unwrap();
        assert_eq!(a.to_string(), "0-2i");
    }

    #[test]
    fn non_finite_amplitude_rejected() {
        assert!(CoherentAmplitude::from_parts(f64::NAN, 0.0).is_err());
    }
}
