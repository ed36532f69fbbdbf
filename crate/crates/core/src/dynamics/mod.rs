//! Rate-equation model of optical spin pumping, relaxation, shelving and
//! photo-ionization, reduced to six effective levels.
//!
//! The shelving level that produces the fast recovery channel is a
//! hypothesis: it is the smallest structure that reproduces a
//! bi-exponential recovery which disappears under long pumping.

mod depletion;
mod ensemble;
mod propagate;
mod sequence;

pub use depletion::depletion_vs_field;
pub use ensemble::{
    simulate_hole_burning, simulate_ple_sweep, EnsembleModel, HoleBurn, HoleBurnOptions,
    HoleDescriptor, LineShape, OpticalLine, PleOptions, Spectrum,
};
pub use propagate::{evolve, evolve_adaptive, expm, steady_state};
pub use sequence::{
    depletion_recovery_scan, simulate_sequence, PulseSequence, RecoveryCurve, RecoveryProtocol,
    Segment, SegmentKind, SegmentTrace, SequenceResult,
};

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::constants::PhysicalConstants;
use crate::error::{Error, Result};
use crate::model::Branch;

pub const N_LEVELS: usize = 6;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Level {
    GroundDown = 0,
    GroundUp = 1,
    ExcitedDown = 2,
    ExcitedUp = 3,
    Shelf = 4,
    Ionized = 5,
}

impl Level {
    pub fn ground(b: Branch) -> Self {
        match b {
            Branch::Down => Level::GroundDown,
            Branch::Up => Level::GroundUp,
        }
    }

    pub fn excited(b: Branch) -> Self {
        match b {
            Branch::Down => Level::ExcitedDown,
            Branch::Up => Level::ExcitedUp,
        }
    }
}

/// Populations of `[g_down, g_up, e_down, e_up, shelf, ionized]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LevelSystem {
    pub populations: [f64; N_LEVELS],
}

impl LevelSystem {
    pub fn zeros() -> Self {
        Self {
            populations: [0.0; N_LEVELS],
        }
    }

    /// Equal ground-state populations, as left by green illumination.
    pub fn mixed() -> Self {
        let mut s = Self::zeros();
        s.populations[0] = 0.5;
        s.populations[1] = 0.5;
        s
    }

    pub fn ground_split(down: f64) -> Self {
        let mut s = Self::zeros();
        s.populations[0] = down;
        s.populations[1] = 1.0 - down;
        s
    }

    pub fn get(&self, l: Level) -> f64 {
        self.populations[l as usize]
    }

    pub fn set(&mut self, l: Level, v: f64) {
        self.populations[l as usize] = v;
    }

    pub fn total(&self) -> f64 {
        self.populations.iter().sum()
    }

    pub fn validate(&self) -> Result<()> {
        if self
            .populations
            .iter()
            .any(|&x| !x.is_finite() || x < -1e-12)
        {
            return Err(Error::InvalidParameter(format!(
                "populations must be finite and non-negative: {:?}",
                self.populations
            )));
        }
        if (self.total() - 1.0).abs() > 1e-9 {
            return Err(Error::InvalidParameter(format!(
                "populations sum to {}, expected 1",
                self.total()
            )));
        }
        Ok(())
    }
}

/// Ground-state distribution that green illumination relaxes towards.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum GreenTarget {
    #[default]
    Mixed,
    /// Boltzmann populations at the given spin temperature.
    Thermal { temperature_k: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RateParams {
    /// Excited-state decay rate, 1/s.
    pub gamma_opt: f64,
    /// Fraction of excited-state decays that flip the electron spin.
    pub beta_flip: f64,
    /// Ground-state spin relaxation rate, 1/s.
    pub gamma_1: f64,
    /// Fast recovery rate, 1/s. Used as the shelf return rate unless
    /// `shelf_out` is given.
    pub gamma_0: f64,
    /// Excited state to shelf, 1/s.
    pub shelf_in: f64,
    pub shelf_out: Option<f64>,
    /// Ionization rate per unit pump rate out of a driven excited state.
    pub kappa_ion: f64,
    pub green_reset_rate: f64,
    pub green_target: GreenTarget,
    /// Detailed-balance temperature for `gamma_1`; symmetric when absent.
    pub relaxation_temperature_k: Option<f64>,
    pub constants: PhysicalConstants,
}

impl Default for RateParams {
    fn default() -> Self {
        Self {
            gamma_opt: 6e6,
            beta_flip: 0.02,
            gamma_1: 0.04,
            gamma_0: 100.0,
            shelf_in: 6e4,
            shelf_out: None,
            kappa_ion: 1e-5,
            green_reset_rate: 1e5,
            green_target: GreenTarget::Mixed,
            relaxation_temperature_k: None,
            constants: PhysicalConstants::default(),
        }
    }
}

impl RateParams {
    pub fn shelf_out_rate(&self) -> f64 {
        self.shelf_out.unwrap_or(self.gamma_0)
    }

    /// Photons per unit excited population per second.
    pub fn fluorescence_rate(&self) -> f64 {
        self.gamma_opt * (1.0 - self.beta_flip)
    }

    pub fn validate(&self) -> Result<()> {
        let rates = [
            ("gamma_opt", self.gamma_opt),
            ("gamma_1", self.gamma_1),
            ("gamma_0", self.gamma_0),
            ("shelf_in", self.shelf_in),
            ("shelf_out", self.shelf_out_rate()),
            ("kappa_ion", self.kappa_ion),
            ("green_reset_rate", self.green_reset_rate),
        ];
        for (name, v) in rates {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(Error::InvalidParameter(format!(
                    "{name} must be a non-negative rate, got {v}"
                )));
            }
        }
        if !(0.0..=1.0).contains(&self.beta_flip) {
            return Err(Error::InvalidParameter(format!(
                "beta_flip must lie in [0, 1], got {}",
                self.beta_flip
            )));
        }
        for t in [self.relaxation_temperature_k, self.thermal_temperature()]
            .into_iter()
            .flatten()
        {
            if !(t > 0.0 && t.is_finite()) {
                return Err(Error::InvalidParameter(format!(
                    "temperatures must be positive, got {t} K"
                )));
            }
        }
        self.constants.validate()
    }

    fn thermal_temperature(&self) -> Option<f64> {
        match self.green_target {
            GreenTarget::Mixed => None,
            GreenTarget::Thermal { temperature_k } => Some(temperature_k),
        }
    }

    /// Equilibrium `(down, up)` ground populations at temperature `t`.
    fn boltzmann(&self, t: f64, splitting_mhz: f64) -> (f64, f64) {
        let x = splitting_mhz / (self.constants.k_b_over_h_mhz() * t);
        let up = 1.0 / (1.0 + x.exp());
        (1.0 - up, up)
    }
}

/// Illumination during one piece of a sequence.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Drive {
    /// Optical excitation rate on the down and up branch, 1/s.
    pub pump: [f64; 2],
    pub green: bool,
    /// Ground-state electron splitting, MHz; needed for thermal targets.
    pub ground_splitting_mhz: f64,
}

impl Drive {
    pub fn dark() -> Self {
        Self {
            pump: [0.0; 2],
            green: false,
            ground_splitting_mhz: 0.0,
        }
    }

    /// Resonant drive on one branch only.
    pub fn single(b: Branch, rate: f64) -> Self {
        let mut d = Self::dark();
        d.pump[b as usize] = rate;
        d
    }

    pub fn both(down: f64, up: f64) -> Self {
        Self {
            pump: [down, up],
            ..Self::dark()
        }
    }

    pub fn with_green(mut self, on: bool) -> Self {
        self.green = on;
        self
    }

    pub fn with_ground_splitting(mut self, mhz: f64) -> Self {
        self.ground_splitting_mhz = mhz;
        self
    }
}

/// Generator `M` of `dp/dt = M p`. Off-diagonal `M[i][j]` is the rate from
/// level `j` to level `i`; every column sums to zero.
pub fn build_rate_matrix(p: &RateParams, drive: &Drive) -> Result<DMatrix<f64>> {
    p.validate()?;
    if drive.pump.iter().any(|&r| !(r >= 0.0 && r.is_finite())) {
        return Err(Error::InvalidParameter(format!(
            "pump rates must be non-negative, got {:?}",
            drive.pump
        )));
    }
    let mut m = DMatrix::<f64>::zeros(N_LEVELS, N_LEVELS);
    let mut flow = |from: Level, to: Level, rate: f64| {
        if rate != 0.0 && from != to {
            m[(to as usize, from as usize)] += rate;
            m[(from as usize, from as usize)] -= rate;
        }
    };

    for b in [Branch::Down, Branch::Up] {
        let (g, e) = (Level::ground(b), Level::excited(b));
        let g_flip = Level::ground(b.flipped());
        let r = drive.pump[b as usize];
        // absorption and stimulated emission
        flow(g, e, r);
        flow(e, g, r);
        flow(e, g, p.gamma_opt * (1.0 - p.beta_flip));
        flow(e, g_flip, p.gamma_opt * p.beta_flip);
        flow(e, Level::Shelf, p.shelf_in);
        flow(e, Level::Ionized, p.kappa_ion * r);
        flow(Level::Shelf, g, 0.5 * p.shelf_out_rate());
    }

    let (down_to_up, up_to_down) = match p.relaxation_temperature_k {
        None => (0.5 * p.gamma_1, 0.5 * p.gamma_1),
        Some(t) => {
            let (down, up) = p.boltzmann(t, drive.ground_splitting_mhz);
            (p.gamma_1 * up, p.gamma_1 * down)
        }
    };
    flow(Level::GroundDown, Level::GroundUp, down_to_up);
    flow(Level::GroundUp, Level::GroundDown, up_to_down);

    if drive.green && p.green_reset_rate > 0.0 {
        let (down, up) = match p.green_target {
            GreenTarget::Mixed => (0.5, 0.5),
            GreenTarget::Thermal { temperature_k } => {
                p.boltzmann(temperature_k, drive.ground_splitting_mhz)
            }
        };
        for from in [
            Level::GroundDown,
            Level::GroundUp,
            Level::ExcitedDown,
            Level::ExcitedUp,
            Level::Shelf,
            Level::Ionized,
        ] {
            flow(from, Level::GroundDown, p.green_reset_rate * down);
            flow(from, Level::GroundUp, p.green_reset_rate * up);
        }
    }
    Ok(m)
}
