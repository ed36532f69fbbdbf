use serde::{Deserialize, Serialize};

use super::{
    check_finite, least_squares, linear_fit, log_grid, FitParameter, FitResult, LsqOptions,
    ParamSpec,
};
use crate::constants::PhysicalConstants;
use crate::dynamics::Spectrum;
use crate::error::{Error, Result};

fn lorentz(x: f64, center: f64, hwhm: f64) -> f64 {
    let u = (x - center) / hwhm;
    1.0 / (1.0 + u * u)
}

/// `offset + amplitude / (1 + ((B - center) / hwhm)^2)`; a field-driven
/// depletion curve comes out with a negative amplitude. The width is also
/// reported in MHz through `slope_mhz_per_mt`, the optical branch splitting
/// per mT. With `fixed_center` the centre is held.
pub fn fit_lorentzian(
    points: &[(f64, f64)],
    slope_mhz_per_mt: f64,
    fixed_center: Option<f64>,
    opts: &LsqOptions,
) -> Result<FitResult> {
    if points.len() < 5 {
        return Err(Error::Arity {
            needed: 5,
            got: points.len(),
        });
    }
    if !(slope_mhz_per_mt.is_finite() && slope_mhz_per_mt != 0.0) {
        return Err(Error::InvalidParameter(format!(
            "slope must be finite and non-zero, got {slope_mhz_per_mt}"
        )));
    }
    let x: Vec<f64> = points.iter().map(|p| p.0).collect();
    let y: Vec<f64> = points.iter().map(|p| p.1).collect();
    check_finite("fields", &x)?;
    check_finite("values", &y)?;
    let lo = x.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = x.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let span = hi - lo;
    if span <= 0.0 {
        return Err(Error::RankDeficient("all abscissae coincide".into()));
    }

    let centers: Vec<f64> = match fixed_center {
        Some(c) => vec![c],
        None => (0..=40)
            .map(|k| lo - 0.5 * span + 2.0 * span * k as f64 / 40.0)
            .collect(),
    };
    let ones = vec![1.0; x.len()];
    let (mut best, mut best_rss) = ((centers[0], span), f64::INFINITY);
    let mut coef = vec![y.iter().sum::<f64>() / y.len() as f64, 0.0];
    for &c in &centers {
        for w in log_grid(span / 200.0, span * 10.0, 50) {
            let col: Vec<f64> = x.iter().map(|&b| lorentz(b, c, w)).collect();
            if let Some((k, rss)) = linear_fit(&[ones.clone(), col], &y) {
                if rss < best_rss {
                    best_rss = rss;
                    best = (c, w);
                    coef = k;
                }
            }
        }
    }
    let mut center = ParamSpec::new("center", "mT", best.0);
    if fixed_center.is_some() {
        center = center.fixed();
    }
    let params = [
        center,
        ParamSpec::new("hwhm", "mT", best.1).lower(0.0),
        ParamSpec::new("amplitude", "", coef[1]),
        ParamSpec::new("offset", "", coef[0]),
    ];
    let model = |p: &[f64]| -> Vec<f64> {
        x.iter()
            .map(|&b| p[3] + p[2] * lorentz(b, p[0], p[1]))
            .collect()
    };
    let mut r = least_squares(model, &params, &y, opts)?.named("lorentzian");
    let hwhm = r.param("hwhm").cloned().expect("hwhm present");
    r.parameters.push(FitParameter {
        name: "hwhm_mhz".into(),
        unit: "MHz".into(),
        value: hwhm.value * slope_mhz_per_mt.abs(),
        sigma: hwhm.sigma * slope_mhz_per_mt.abs(),
    });
    let amp = r.param("amplitude").expect("amplitude present");
    let scale = y.iter().fold(0.0_f64, |m, v| m.max(v.abs())).max(1e-300);
    if amp.value.abs() <= 1e-9 * scale || amp.value.abs() <= 2.0 * amp.sigma {
        r.warnings
            .push("degenerate: amplitude consistent with zero".into());
        r.rank_deficient = true;
    }
    Ok(r)
}

/// Sampled single-line spectrum, peak normalized to one, linearly
/// interpolated.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LineshapeTemplate {
    pub detuning: Vec<f64>,
    pub amplitude: Vec<f64>,
}

impl LineshapeTemplate {
    pub fn new(detuning: Vec<f64>, amplitude: Vec<f64>) -> Result<Self> {
        if detuning.len() != amplitude.len() {
            return Err(Error::InvalidDimension(format!(
                "{} detunings but {} samples",
                detuning.len(),
                amplitude.len()
            )));
        }
        if detuning.len() < 2 {
            return Err(Error::Arity {
                needed: 2,
                got: detuning.len(),
            });
        }
        check_finite("template detunings", &detuning)?;
        check_finite("template samples", &amplitude)?;
        if detuning.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::InvalidParameter(
                "template grid must be strictly increasing".into(),
            ));
        }
        let peak = amplitude.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        if peak <= 0.0 {
            return Err(Error::InvalidParameter(
                "template has no positive sample".into(),
            ));
        }
        Ok(Self {
            detuning,
            amplitude: amplitude.into_iter().map(|a| a / peak).collect(),
        })
    }

    pub fn from_spectrum(s: &Spectrum) -> Result<Self> {
        Self::new(s.detuning.clone(), s.signal.clone())
    }

    pub fn span(&self) -> (f64, f64) {
        (self.detuning[0], self.detuning[self.detuning.len() - 1])
    }

    /// Interpolated value; `None` outside the grid.
    pub fn value(&self, x: f64) -> Option<f64> {
        let (lo, hi) = self.span();
        if !(x >= lo && x <= hi) {
            return None;
        }
        let k = self
            .detuning
            .partition_point(|&d| d <= x)
            .clamp(1, self.detuning.len() - 1);
        let (x0, x1) = (self.detuning[k - 1], self.detuning[k]);
        let t = (x - x0) / (x1 - x0);
        Some(self.amplitude[k - 1] + t * (self.amplitude[k] - self.amplitude[k - 1]))
    }

    /// Value with the line taken as zero beyond the sampled range.
    fn value_or_zero(&self, x: f64) -> f64 {
        self.value(x).unwrap_or(0.0)
    }
}

/// Two copies of the zero-field line: `a_low T(x + s/2) + a_high T(x - s/2)`.
/// `a_low` belongs to the copy at lower frequency.
pub fn fit_zeeman_doublet(
    spectrum: &Spectrum,
    template: &LineshapeTemplate,
    opts: &LsqOptions,
) -> Result<FitResult> {
    let x = &spectrum.detuning;
    let y = &spectrum.signal;
    if x.len() != y.len() {
        return Err(Error::InvalidDimension(format!(
            "{} detunings but {} values",
            x.len(),
            y.len()
        )));
    }
    if x.len() < 4 {
        return Err(Error::Arity {
            needed: 4,
            got: x.len(),
        });
    }
    check_finite("detunings", x)?;
    check_finite("values", y)?;
    let (t_lo, t_hi) = template.span();
    let (x_lo, x_hi) = (
        x.iter().cloned().fold(f64::INFINITY, f64::min),
        x.iter().cloned().fold(f64::NEG_INFINITY, f64::max),
    );
    if x_lo < t_lo || x_hi > t_hi {
        return Err(Error::Interpolation(format!(
            "template covers [{t_lo}, {t_hi}] MHz but the spectrum spans [{x_lo}, {x_hi}] MHz"
        )));
    }
    let span = x_hi - x_lo;
    let (mut best, mut best_rss, mut coef) = (0.0, f64::INFINITY, vec![0.0, 0.0]);
    for k in 0..=400 {
        let s = span * k as f64 / 400.0;
        let low: Vec<f64> = x
            .iter()
            .map(|&v| template.value_or_zero(v + 0.5 * s))
            .collect();
        let high: Vec<f64> = x
            .iter()
            .map(|&v| template.value_or_zero(v - 0.5 * s))
            .collect();
        if let Some((c, rss)) = linear_fit(&[low, high], y) {
            if rss < best_rss {
                best_rss = rss;
                best = s;
                coef = c;
            }
        }
    }
    let params = [
        ParamSpec::new("a_low", "", coef[0]),
        ParamSpec::new("a_high", "", coef[1]),
        ParamSpec::new("splitting", "MHz", best.max(1e-9 * span)).lower(0.0),
    ];
    let model = |p: &[f64]| -> Vec<f64> {
        x.iter()
            .map(|&v| {
                p[0] * template.value_or_zero(v + 0.5 * p[2])
                    + p[1] * template.value_or_zero(v - 0.5 * p[2])
            })
            .collect()
    };
    Ok(least_squares(model, &params, y, opts)?.named("zeeman_doublet"))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SpinTemperature {
    pub kelvin: f64,
    /// Set above 1000 K, where the ratio no longer constrains the value.
    pub overflow: bool,
}

/// Boltzmann temperature for an upper/lower population `ratio` across a
/// splitting in MHz.
pub fn spin_temperature(
    ratio: f64,
    splitting_mhz: f64,
    c: &PhysicalConstants,
) -> Result<SpinTemperature> {
    if !(ratio > 0.0 && ratio < 1.0) {
        return Err(Error::Domain(format!(
            "population ratio must lie in (0, 1), got {ratio}"
        )));
    }
    if !(splitting_mhz > 0.0 && splitting_mhz.is_finite()) {
        return Err(Error::Domain(format!(
            "splitting must be positive, got {splitting_mhz}"
        )));
    }
    let kelvin = splitting_mhz / c.k_b_over_h_mhz() / (1.0 / ratio).ln();
    Ok(SpinTemperature {
        kelvin,
        overflow: kelvin.is_nan() || kelvin > 1e3,
    })
}
