use std::fmt::Write as _;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{enumerate_pairs, MapOptions};
use crate::constants::PhysicalConstants;
use crate::error::{Error, Result};
use crate::model::{DefectModel, FieldPoint};

/// Two-laser response over (field, two-photon detuning).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TwoLaserMap {
    /// mT.
    pub field_axis: Vec<f64>,
    /// MHz.
    pub detuning_axis: Vec<f64>,
    /// One row per field point, normalized to `max |value| = 1`.
    pub intensity: Vec<Vec<f64>>,
    pub kernel_fwhm: f64,
}

#[derive(Serialize)]
struct Envelope<'a> {
    field_axis: &'a [f64],
    detuning_axis: &'a [f64],
    kernel_fwhm: f64,
    shape: [usize; 2],
    order: &'static str,
    intensity: Vec<f64>,
}

impl TwoLaserMap {
    pub fn max_abs(&self) -> f64 {
        self.intensity
            .iter()
            .flatten()
            .fold(0.0_f64, |m, x| m.max(x.abs()))
    }

    /// `b_mT,detuning_MHz,intensity`, row-major over field then detuning.
    pub fn to_csv_string(&self) -> String {
        let mut s = String::with_capacity(32 * self.field_axis.len() * self.detuning_axis.len());
        s.push_str("b_mT,detuning_MHz,intensity\n");
        for (b, row) in self.field_axis.iter().zip(&self.intensity) {
            for (d, v) in self.detuning_axis.iter().zip(row) {
                let _ = writeln!(s, "{b},{d},{v}");
            }
        }
        s
    }

    pub fn to_json_string(&self) -> Result<String> {
        let env = Envelope {
            field_axis: &self.field_axis,
            detuning_axis: &self.detuning_axis,
            kernel_fwhm: self.kernel_fwhm,
            shape: [self.field_axis.len(), self.detuning_axis.len()],
            order: "field-major",
            intensity: self.intensity.iter().flatten().copied().collect(),
        };
        serde_json::to_string(&env).map_err(|e| Error::InvalidParameter(e.to_string()))
    }
}

fn check_axis(name: &str, axis: &[f64]) -> Result<()> {
    if axis.is_empty() {
        return Err(Error::InvalidParameter(format!("{name} grid is empty")));
    }
    if axis.iter().any(|x| !x.is_finite()) {
        return Err(Error::InvalidParameter(format!(
            "{name} grid has non-finite values"
        )));
    }
    if axis.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::InvalidParameter(format!(
            "{name} grid must be strictly increasing"
        )));
    }
    Ok(())
}

/// Cell edges around each grid point: midpoints between neighbours, with
/// the outer cells mirrored. A single point gets a cell of `fallback`.
fn cell_edges(axis: &[f64], fallback: f64) -> Vec<f64> {
    let n = axis.len();
    if n == 1 {
        return vec![axis[0] - 0.5 * fallback, axis[0] + 0.5 * fallback];
    }
    let mut e = Vec::with_capacity(n + 1);
    e.push(axis[0] - 0.5 * (axis[1] - axis[0]));
    for w in axis.windows(2) {
        e.push(0.5 * (w[0] + w[1]));
    }
    e.push(axis[n - 1] + 0.5 * (axis[n - 1] - axis[n - 2]));
    e
}

/// Lorentzian of unit peak height averaged over `[lo, hi]` around `x0`.
fn cell_lorentzian(x0: f64, lo: f64, hi: f64, hwhm: f64) -> f64 {
    let area = ((hi - x0) / hwhm).atan() - ((lo - x0) / hwhm).atan();
    hwhm * area / (hi - lo)
}

pub fn synthesize_two_laser_map(
    model: &DefectModel,
    field_grid: &[f64],
    detuning_grid: &[f64],
    c: &PhysicalConstants,
    opts: &MapOptions,
) -> Result<TwoLaserMap> {
    check_axis("field", field_grid)?;
    check_axis("detuning", detuning_grid)?;
    opts.validate()?;
    model.validate()?;
    let edges = cell_edges(detuning_grid, opts.kernel_fwhm);
    let (span_lo, span_hi) = (edges[0], edges[edges.len() - 1]);
    let hwhm = 0.5 * opts.kernel_fwhm;

    let rows: Vec<Vec<f64>> = field_grid
        .par_iter()
        .map(|&b| -> Result<Vec<f64>> {
            let pairs = enumerate_pairs(model, &FieldPoint::along_c(b), c, opts)?;
            let mut row = vec![0.0; detuning_grid.len()];
            if pairs.is_empty() {
                log::warn!("no transition pairs at {b} mT; emitting a zero row");
                return Ok(row);
            }
            for p in pairs
                .iter()
                .filter(|p| p.two_photon_detuning >= span_lo && p.two_photon_detuning <= span_hi)
            {
                for (k, v) in row.iter_mut().enumerate() {
                    *v += p.signed_amplitude
                        * cell_lorentzian(p.two_photon_detuning, edges[k], edges[k + 1], hwhm);
                }
            }
            Ok(row)
        })
        .collect::<Result<_>>()?;

    let mut map = TwoLaserMap {
        field_axis: field_grid.to_vec(),
        detuning_axis: detuning_grid.to_vec(),
        intensity: rows,
        kernel_fwhm: opts.kernel_fwhm,
    };
    let max = map.max_abs();
    if max > 0.0 {
        for v in map.intensity.iter_mut().flatten() {
            *v /= max;
        }
    }
    Ok(map)
}

/// The axes of the reference measurement: 0 to 61 mT and 0 to 1499 MHz.
pub fn default_axes(n_field: usize, n_detuning: usize) -> (Vec<f64>, Vec<f64>) {
    let lin = |lo: f64, hi: f64, n: usize| -> Vec<f64> {
        if n == 1 {
            return vec![lo];
        }
        (0..n)
            .map(|k| lo + (hi - lo) * k as f64 / (n - 1) as f64)
            .collect()
    };
    (lin(0.0, 61.0, n_field), lin(0.0, 1499.0, n_detuning))
}
