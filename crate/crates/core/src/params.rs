//! Model parameters for the disordered tight-binding particle coupled to
//! on-site oscillators.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::disorder::DensityKind;
use crate::error::{Error, Result};

/// Couplings of `H(gamma) = gamma * hopping + omega * N + potential`, with
/// the oscillator displacement `beta = alpha / omega` and disorder drawn
/// from `density` on `[0, v_plus]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModelParams {
    pub dimension: usize,
    pub gamma: f64,
    pub omega: f64,
    #[serde(with = "complex_serde")]
    pub beta: Complex64,
    pub v_plus: f64,
    #[serde(default)]
    pub density: DensityKind,
}

impl ModelParams {
    pub fn validate(&self) -> Result<()> {
        if self.dimension == 0 {
            return Err(Error::InvalidParameter("dimension must be >= 1".into()));
        }
        if !(self.gamma >= 0.0 && self.gamma.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "hopping gamma must be finite and >= 0, got {}",
                self.gamma
            )));
        }
        if !(self.omega > 0.0 && self.omega.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "oscillator frequency omega must be finite and > 0, got {}",
                self.omega
            )));
        }
        if !(self.v_plus >= 0.0 && self.v_plus.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "disorder amplitude v_plus must be finite and >= 0, got {}",
                self.v_plus
            )));
        }
        if !self.beta.re.is_finite() || !self.beta.im.is_finite() {
            return Err(Error::InvalidParameter("beta must be finite".into()));
        }
        self.density.validate()
    }

    /// Gap indicator `delta = omega - V+ - 4 D gamma`; band-restricted
    /// resolvent bounds require it positive.
    pub fn spectral_gap(&self) -> f64 {
        self.omega - self.v_plus - 4.0 * self.dimension as f64 * self.gamma
    }

    /// The k-th spectral band `[omega k, omega k + V+ + 4 D gamma]`.
    pub fn band(&self, k: u32) -> (f64, f64) {
        let lo = self.omega * k as f64;
        (
            lo,
            lo + self.v_plus + 4.0 * self.dimension as f64 * self.gamma,
        )
    }

    /// The k-th spectral window `[0, omega k + V+ + 4 D gamma]` used by
    /// correlator experiments.
    pub fn window(&self, k: u32) -> (f64, f64) {
        (0.0, self.band(k).1)
    }
}

mod complex_serde {
    use num_complex::Complex64;
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    #[derive(Serialize, Deserialize)]
    struct Parts {
        re: f64,
        im: f64,
    }

    pub fn serialize<S: Serializer>(value: &Complex64, ser: S) -> Result<S::Ok, S::Error> {
        Parts {
            re: value.re,
            im: value.im,
        }
        .serialize(ser)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(de: D) -> Result<Complex64, D::Error> {
        let parts = Parts::deserialize(de)?;
        Ok(Complex64::new(parts.re, parts.im))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn base() -> ModelParams {
        ModelParams {
            dimension: 1,
            gamma: 0.02,
            omega: 1.0,
            beta: Complex64::new(1.0, 0.0),
            v_plus: 0.3,
            density: DensityKind::Uniform,
        }
    }

    #[test]
    fn gap_and_bands() {
        let p = base();
        assert!((p.spectral_gap() - (1.0 - 0.3 - 0.08)).abs() < 1e-15);
        let (lo, hi) = p.band(2);
        assert_eq!(lo, 2.0);
        assert!((hi - 2.38).abs() < 1e-12);
        assert_eq!(p.window(2), (0.0, hi));
    }

    #[test]
    fn validation_catches_bad_inputs() {
        let mut p = base();
        p.omega = 0.0;
        assert!(p.validate().is_err());
        let mut p = base();
        p.gamma = -0.1;
        assert!(p.validate().is_err());
        let mut p = base();
        p.v_plus = f64::NAN;
        assert!(p.validate().is_err());
        assert!(base().validate().is_ok());
    }
}
