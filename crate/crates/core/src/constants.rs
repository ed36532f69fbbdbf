use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Speed of light in vacuum, m/s.
pub const SPEED_OF_LIGHT: f64 = 299_792_458.0;

/// Magneton and Boltzmann constants expressed as frequencies, so every
/// Hamiltonian in the crate is in MHz and every field in mT.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PhysicalConstants {
    /// Bohr magneton over Planck constant, MHz/mT.
    pub mu_b_over_h: f64,
    /// Nuclear magneton over Planck constant, MHz/mT.
    pub mu_n_over_h: f64,
    /// Boltzmann constant over Planck constant, GHz/K.
    pub k_b_over_h: f64,
}

impl Default for PhysicalConstants {
    fn default() -> Self {
        Self {
            mu_b_over_h: 13.996_244_9,
            mu_n_over_h: 0.007_622_59,
            k_b_over_h: 20.836_619,
        }
    }
}

impl PhysicalConstants {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("mu_b_over_h", self.mu_b_over_h),
            ("mu_n_over_h", self.mu_n_over_h),
            ("k_b_over_h", self.k_b_over_h),
        ] {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::InvalidParameter(format!(
                    "{name} must be finite and strictly positive, got {v}"
                )));
            }
        }
        Ok(())
    }

    /// k_B/h in MHz/K.
    pub fn k_b_over_h_mhz(&self) -> f64 {
        self.k_b_over_h * 1e3
    }
}

/// Optical frequency in MHz for a vacuum wavelength in nm.
pub fn wavelength_nm_to_mhz(wavelength_nm: f64) -> f64 {
    SPEED_OF_LIGHT / (wavelength_nm * 1e-9) / 1e6
}
