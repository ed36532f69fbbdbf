use super::{build_rate_matrix, steady_state, Drive, Level, RateParams};
use crate::constants::PhysicalConstants;
use crate::error::{Error, Result};
use crate::model::{Branch, DefectModel};

/// Steady-state depletion of resonance fluorescence against a c-axis field.
///
/// A centre driven on one branch pumps into the other, reaching the
/// depletion `D_max`; a field splits the two branch lines by `s`, and the
/// depletion is `D_max * (1 - L(s))` with `L` a unit-height Lorentzian of
/// the single-spin width. Zero field gives exactly zero.
pub fn depletion_vs_field(
    model: &DefectModel,
    p: &RateParams,
    fields: &[f64],
    single_spin_fwhm_mhz: f64,
    pump_rate: f64,
    c: &PhysicalConstants,
) -> Result<Vec<(f64, f64)>> {
    if !(single_spin_fwhm_mhz > 0.0 && single_spin_fwhm_mhz.is_finite()) {
        return Err(Error::InvalidParameter(format!(
            "single-spin width must be positive, got {single_spin_fwhm_mhz}"
        )));
    }
    if fields.iter().any(|b| !b.is_finite()) {
        return Err(Error::InvalidParameter("fields must be finite".into()));
    }
    let stable = RateParams {
        kappa_ion: 0.0,
        ..p.clone()
    };
    let ss = steady_state(&build_rate_matrix(
        &stable,
        &Drive::single(Branch::Down, pump_rate),
    )?)?;
    let d_max = 1.0 - ss.get(Level::GroundDown) / 0.5;
    let slope = model.branch_slope(c.mu_b_over_h);
    let hwhm = 0.5 * single_spin_fwhm_mhz;
    Ok(fields
        .iter()
        .map(|&b| {
            let s = slope * b;
            (b, d_max * (1.0 - 1.0 / (1.0 + (s / hwhm).powi(2))))
        })
        .collect())
}
