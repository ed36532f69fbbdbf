use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{build_rate_matrix, evolve, Drive, LevelSystem, RateParams};
use crate::constants::PhysicalConstants;
use crate::error::{Error, Result};
use crate::model::{DefectModel, FieldPoint};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum LineShape {
    Lorentzian,
    #[default]
    Gaussian,
}

/// Optical response of a single centre, unit height at resonance.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OpticalLine {
    pub shape: LineShape,
    /// MHz.
    pub fwhm: f64,
}

impl Default for OpticalLine {
    fn default() -> Self {
        Self {
            shape: LineShape::Gaussian,
            fwhm: 1600.0,
        }
    }
}

impl OpticalLine {
    pub fn response(&self, detuning: f64) -> f64 {
        let x = 2.0 * detuning / self.fwhm;
        match self.shape {
            LineShape::Lorentzian => 1.0 / (1.0 + x * x),
            LineShape::Gaussian => (-std::f64::consts::LN_2 * x * x).exp(),
        }
    }

    fn validate(&self) -> Result<()> {
        if !(self.fwhm > 0.0 && self.fwhm.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "line width must be positive, got {}",
                self.fwhm
            )));
        }
        Ok(())
    }
}

/// Inhomogeneous distribution of zero-field optical detunings. The same
/// grid doubles as the laser axis of simulated spectra.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnsembleModel {
    pub model: DefectModel,
    /// Member detunings, MHz, ascending.
    pub detuning: Vec<f64>,
    /// Normalized to unit sum.
    pub weights: Vec<f64>,
    pub line: OpticalLine,
}

impl EnsembleModel {
    pub fn gaussian(model: DefectModel, sigma: f64, lo: f64, hi: f64, n: usize) -> Result<Self> {
        if !(sigma > 0.0 && sigma.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "sigma must be positive, got {sigma}"
            )));
        }
        if n < 2 || lo.is_nan() || hi.is_nan() || hi <= lo {
            return Err(Error::InvalidParameter(format!(
                "need n >= 2 and hi > lo, got n = {n}, [{lo}, {hi}]"
            )));
        }
        let grid: Vec<f64> = (0..n)
            .map(|k| lo + (hi - lo) * k as f64 / (n - 1) as f64)
            .collect();
        let weights = grid
            .iter()
            .map(|d| (-0.5 * (d / sigma).powi(2)).exp())
            .collect();
        Self::from_samples(model, grid, weights)
    }

    pub fn from_samples(model: DefectModel, detuning: Vec<f64>, weights: Vec<f64>) -> Result<Self> {
        if detuning.len() != weights.len() {
            return Err(Error::InvalidDimension(format!(
                "{} detunings but {} weights",
                detuning.len(),
                weights.len()
            )));
        }
        if detuning.is_empty() {
            return Err(Error::Arity { needed: 1, got: 0 });
        }
        if detuning.iter().any(|d| !d.is_finite()) || detuning.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::InvalidParameter(
                "detunings must be finite and strictly ascending".into(),
            ));
        }
        if weights.iter().any(|w| !(*w >= 0.0 && w.is_finite())) {
            return Err(Error::InvalidParameter(
                "weights must be finite and >= 0".into(),
            ));
        }
        let total: f64 = weights.iter().sum();
        if total <= 0.0 {
            return Err(Error::InvalidParameter("weights sum to zero".into()));
        }
        model.validate()?;
        Ok(Self {
            model,
            detuning,
            weights: weights.into_iter().map(|w| w / total).collect(),
            line: OpticalLine::default(),
        })
    }

    pub fn with_line(mut self, line: OpticalLine) -> Result<Self> {
        line.validate()?;
        self.line = line;
        Ok(self)
    }

    /// Optical splitting between the spin-up and spin-down lines, MHz.
    /// Only the c-axis field enters; a transverse field is rejected when
    /// the model has a transverse g-factor.
    fn branch_splitting(&self, field: &FieldPoint, c: &PhysicalConstants) -> Result<f64> {
        let transverse_field = field.b[0] != 0.0 || field.b[1] != 0.0;
        let transverse_g = [&self.model.ground, &self.model.excited]
            .iter()
            .any(|m| (0..3).any(|i| (0..3).any(|j| (i, j) != (2, 2) && m.g_tensor[i][j] != 0.0)));
        if transverse_field && transverse_g {
            return Err(Error::UnsupportedGeometry(
                "ensemble spectra assume a c-axis field when g is anisotropic".into(),
            ));
        }
        Ok(self.model.branch_slope(c.mu_b_over_h) * field.z())
    }

    /// `(down, up)` line centres of member `k`.
    fn lines(&self, k: usize, splitting: f64) -> [f64; 2] {
        [
            self.detuning[k] - 0.5 * splitting,
            self.detuning[k] + 0.5 * splitting,
        ]
    }

    fn pump(&self, laser: f64, lines: [f64; 2], rate: f64) -> (f64, f64) {
        (
            rate * self.line.response(laser - lines[0]),
            rate * self.line.response(laser - lines[1]),
        )
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Spectrum {
    pub detuning: Vec<f64>,
    pub signal: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PleOptions {
    /// Peak optical excitation rate, 1/s.
    pub pump_rate: f64,
    /// Seconds per laser point.
    pub dwell: f64,
    /// Green repump on throughout the sweep.
    pub green: bool,
}

impl Default for PleOptions {
    fn default() -> Self {
        Self {
            pump_rate: 2e4,
            dwell: 0.5,
            green: false,
        }
    }
}

const NEGLIGIBLE_PUMP: f64 = 1e-12;

/// Single-laser sweep across the ensemble grid, ascending in frequency.
/// Every member starts spin-mixed and sees the laser at each point for
/// `dwell` seconds; the signal is photons per second.
pub fn simulate_ple_sweep(
    e: &EnsembleModel,
    field: &FieldPoint,
    c: &PhysicalConstants,
    p: &RateParams,
    opts: &PleOptions,
) -> Result<Spectrum> {
    p.validate()?;
    if !(opts.pump_rate >= 0.0 && opts.pump_rate.is_finite()) {
        return Err(Error::InvalidParameter(format!(
            "pump rate {}",
            opts.pump_rate
        )));
    }
    if !(opts.dwell > 0.0 && opts.dwell.is_finite()) {
        return Err(Error::InvalidParameter(format!(
            "dwell must be positive, got {}",
            opts.dwell
        )));
    }
    let splitting = e.branch_splitting(field, c)?;
    let ground_splitting = e.model.ground.g_zz().abs() * c.mu_b_over_h * field.z().abs();
    let drive_at = |down: f64, up: f64| {
        Drive::both(down, up)
            .with_green(opts.green)
            .with_ground_splitting(ground_splitting)
    };
    let idle = super::propagate::exp_with_conservation(
        &(build_rate_matrix(p, &drive_at(0.0, 0.0))? * opts.dwell),
        super::N_LEVELS,
    );
    let per_member = (0..e.detuning.len())
        .into_par_iter()
        .map(|k| {
            let lines = e.lines(k, splitting);
            let mut state = LevelSystem::mixed();
            let mut photons = Vec::with_capacity(e.detuning.len());
            for &laser in &e.detuning {
                let (rd, ru) = e.pump(laser, lines, opts.pump_rate);
                if rd * opts.dwell < NEGLIGIBLE_PUMP && ru * opts.dwell < NEGLIGIBLE_PUMP {
                    state = apply(&idle, &state);
                    photons.push(0.0);
                    continue;
                }
                let m = build_rate_matrix(p, &drive_at(rd, ru))?;
                let (next, f) = evolve(&state, &m, p, opts.dwell, 1)?;
                state = next;
                photons.push(f[0]);
            }
            Ok(photons)
        })
        .collect::<Result<Vec<Vec<f64>>>>()?;
    let mut signal = vec![0.0; e.detuning.len()];
    for (w, f) in e.weights.iter().zip(&per_member) {
        for (s, x) in signal.iter_mut().zip(f) {
            *s += w * x / opts.dwell;
        }
    }
    Ok(Spectrum {
        detuning: e.detuning.clone(),
        signal,
    })
}

fn apply(prop: &DMatrix<f64>, s: &LevelSystem) -> LevelSystem {
    let mut out = LevelSystem::zeros();
    for i in 0..super::N_LEVELS {
        out.populations[i] = (0..super::N_LEVELS)
            .map(|j| prop[(i, j)] * s.populations[j])
            .sum::<f64>()
            .max(0.0);
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct HoleBurnOptions {
    /// MHz, must lie on the ensemble grid span.
    pub burn_detuning: f64,
    /// Peak optical excitation rate, 1/s.
    pub pump_rate: f64,
    /// Seconds.
    pub duration: f64,
    /// Share of centres that can be photo-ionized; the rest only spin-pump.
    pub ionizable_fraction: f64,
    /// Dark time after the burn before readout, seconds.
    pub settle: f64,
}

impl Default for HoleBurnOptions {
    fn default() -> Self {
        Self {
            burn_detuning: 0.0,
            pump_rate: 1e6,
            duration: 60.0,
            ionizable_fraction: 0.8,
            settle: 1.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HoleDescriptor {
    /// Largest fractional loss of signal.
    pub depth: f64,
    pub fwhm_mhz: f64,
    pub center_mhz: f64,
}

/// Zero-field spectral hole burnt by photo-ionization.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HoleBurn {
    pub before: Spectrum,
    pub after: Spectrum,
    pub hole: HoleDescriptor,
    /// Per member: ionizable and non-ionizable sub-populations.
    pub states: Vec<[LevelSystem; 2]>,
    pub ionizable_fraction: f64,
}

pub fn simulate_hole_burning(
    e: &EnsembleModel,
    p: &RateParams,
    opts: &HoleBurnOptions,
) -> Result<HoleBurn> {
    p.validate()?;
    let lo = e.detuning[0];
    let hi = e.detuning[e.detuning.len() - 1];
    if !(opts.burn_detuning >= lo && opts.burn_detuning <= hi) {
        return Err(Error::OutOfRange(format!(
            "burn detuning {} MHz lies outside the ensemble grid [{lo}, {hi}]",
            opts.burn_detuning
        )));
    }
    if !(opts.pump_rate >= 0.0 && opts.pump_rate.is_finite()) {
        return Err(Error::InvalidParameter(format!(
            "pump rate {}",
            opts.pump_rate
        )));
    }
    if !(opts.duration >= 0.0 && opts.duration.is_finite())
        || !(opts.settle >= 0.0 && opts.settle.is_finite())
    {
        return Err(Error::InvalidParameter(
            "durations must be finite and >= 0".into(),
        ));
    }
    if !(0.0..=1.0).contains(&opts.ionizable_fraction) {
        return Err(Error::InvalidParameter(format!(
            "ionizable fraction must lie in [0, 1], got {}",
            opts.ionizable_fraction
        )));
    }
    let stable = RateParams {
        kappa_ion: 0.0,
        ..p.clone()
    };
    let dark = build_rate_matrix(p, &Drive::dark())?;
    let states = (0..e.detuning.len())
        .into_par_iter()
        .map(|k| {
            let lines = e.lines(k, 0.0);
            let (rd, ru) = e.pump(opts.burn_detuning, lines, opts.pump_rate);
            let mut out = [LevelSystem::mixed(); 2];
            for (slot, params) in out.iter_mut().zip([p, &stable]) {
                if opts.duration > 0.0 && (rd + ru) * opts.duration >= NEGLIGIBLE_PUMP {
                    let m = build_rate_matrix(params, &Drive::both(rd, ru))?;
                    *slot = evolve(slot, &m, params, opts.duration, 1)?.0;
                    if opts.settle > 0.0 {
                        *slot = evolve(slot, &dark, params, opts.settle, 1)?.0;
                    }
                }
            }
            Ok(out)
        })
        .collect::<Result<Vec<_>>>()?;
    let before = readout(
        e,
        &vec![[LevelSystem::mixed(); 2]; e.detuning.len()],
        opts.ionizable_fraction,
    );
    let after = readout(e, &states, opts.ionizable_fraction);
    let hole = describe_hole(&before, &after);
    Ok(HoleBurn {
        before,
        after,
        hole,
        states,
        ionizable_fraction: opts.ionizable_fraction,
    })
}

impl HoleBurn {
    /// Spectrum after a further dark period.
    pub fn after_dark(&self, e: &EnsembleModel, p: &RateParams, seconds: f64) -> Result<Spectrum> {
        self.after_drive(e, p, seconds, Drive::dark())
    }

    /// Spectrum after green illumination.
    pub fn after_green(&self, e: &EnsembleModel, p: &RateParams, seconds: f64) -> Result<Spectrum> {
        self.after_drive(e, p, seconds, Drive::dark().with_green(true))
    }

    fn after_drive(
        &self,
        e: &EnsembleModel,
        p: &RateParams,
        seconds: f64,
        drive: Drive,
    ) -> Result<Spectrum> {
        if self.states.len() != e.detuning.len() {
            return Err(Error::ContractViolation(
                "hole-burn result belongs to a different ensemble".into(),
            ));
        }
        let m = build_rate_matrix(p, &drive)?;
        let states = self
            .states
            .par_iter()
            .map(|pair| {
                let mut out = *pair;
                for s in out.iter_mut() {
                    *s = evolve(s, &m, p, seconds, 1)?.0;
                }
                Ok(out)
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(readout(e, &states, self.ionizable_fraction))
    }
}

/// Weak-probe spectrum: ground populations weighted by each line.
fn readout(e: &EnsembleModel, states: &[[LevelSystem; 2]], ionizable: f64) -> Spectrum {
    let signal = e
        .detuning
        .iter()
        .map(|&laser| {
            states
                .iter()
                .enumerate()
                .map(|(k, [ion, stable])| {
                    let [ld, lu] = e.lines(k, 0.0);
                    let g = |s: &LevelSystem| {
                        s.populations[0] * e.line.response(laser - ld)
                            + s.populations[1] * e.line.response(laser - lu)
                    };
                    e.weights[k] * (ionizable * g(ion) + (1.0 - ionizable) * g(stable))
                })
                .sum()
        })
        .collect();
    Spectrum {
        detuning: e.detuning.clone(),
        signal,
    }
}

fn describe_hole(before: &Spectrum, after: &Spectrum) -> HoleDescriptor {
    let profile: Vec<f64> = before
        .signal
        .iter()
        .zip(&after.signal)
        .map(|(b, a)| if *b > 0.0 { (b - a) / b } else { 0.0 })
        .collect();
    let (peak, depth) =
        profile.iter().enumerate().fold(
            (0, 0.0),
            |acc, (k, &v)| if v > acc.1 { (k, v) } else { acc },
        );
    let x = &before.detuning;
    if depth <= 0.0 {
        return HoleDescriptor {
            depth: 0.0,
            fwhm_mhz: 0.0,
            center_mhz: x[peak],
        };
    }
    let half = 0.5 * depth;
    let crossing = |range: &mut dyn Iterator<Item = usize>, step: isize| -> f64 {
        for k in range {
            if profile[k] < half {
                let j = (k as isize - step) as usize;
                let t = (profile[j] - half) / (profile[j] - profile[k]);
                return x[j] + t * (x[k] - x[j]);
            }
        }
        log::warn!("hole does not fall to half depth inside the grid");
        if step > 0 {
            x[x.len() - 1]
        } else {
            x[0]
        }
    };
    let right = crossing(&mut (peak + 1..profile.len()), 1);
    let left = crossing(&mut (0..peak).rev(), -1);
    HoleDescriptor {
        depth,
        fwhm_mhz: right - left,
        center_mhz: x[peak],
    }
}
