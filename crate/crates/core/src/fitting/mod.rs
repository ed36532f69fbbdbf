//! Least-squares engine and the domain fitters built on it.

mod engine;
mod hyperfine;
mod lineshape;
mod recovery;

pub use engine::{least_squares, LsqOptions, ParamSpec};
pub use hyperfine::{
    fit_hyperfine_from_map, g_from_pi_slope, synthesize_features, HyperfineFitOptions, MapFeature,
    PiSlopeFit,
};
pub use lineshape::{
    fit_lorentzian, fit_zeeman_doublet, spin_temperature, LineshapeTemplate, SpinTemperature,
};
pub use recovery::{
    fit_biexponential, fit_monoexponential, fit_stretched_exponential, one_over_e_rate,
    one_over_e_rate_between,
};

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitParameter {
    pub name: String,
    pub unit: String,
    pub value: f64,
    /// One standard deviation; infinite when the data do not constrain it.
    pub sigma: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitResult {
    pub model: String,
    pub parameters: Vec<FitParameter>,
    pub residual_norm: f64,
    pub converged: bool,
    pub evaluations: usize,
    /// Gauss-Newton iterations after the simplex stage.
    pub iterations: usize,
    pub rank_deficient: bool,
    pub unidentified: Vec<String>,
    pub warnings: Vec<String>,
}

impl FitResult {
    pub fn param(&self, name: &str) -> Option<&FitParameter> {
        self.parameters.iter().find(|p| p.name == name)
    }

    /// Value of a named parameter; NaN when absent.
    pub fn value(&self, name: &str) -> f64 {
        self.param(name).map_or(f64::NAN, |p| p.value)
    }

    pub fn sigma(&self, name: &str) -> f64 {
        self.param(name).map_or(f64::NAN, |p| p.sigma)
    }

    pub fn to_json_string(&self) -> Result<String> {
        serde_json::to_string_pretty(self).map_err(|e| Error::InvalidParameter(e.to_string()))
    }

    fn named(mut self, model: &str) -> Self {
        self.model = model.into();
        self
    }
}

/// Linear least squares `min |A c - y|`; returns coefficients and the
/// residual sum of squares.
fn linear_fit(columns: &[Vec<f64>], y: &[f64]) -> Option<(Vec<f64>, f64)> {
    let n = y.len();
    let a = DMatrix::from_fn(n, columns.len(), |i, j| columns[j][i]);
    let b = DVector::from_column_slice(y);
    let c = a.clone().svd(true, true).solve(&b, 1e-12).ok()?;
    let rss = (a * &c - b).norm_squared();
    rss.is_finite().then(|| (c.iter().copied().collect(), rss))
}

fn log_grid(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    (0..n)
        .map(|k| lo * (hi / lo).powf(k as f64 / (n - 1) as f64))
        .collect()
}

fn check_finite(name: &str, xs: &[f64]) -> Result<()> {
    if xs.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidParameter(format!("{name} must be finite")));
    }
    Ok(())
}
