//! Optical transitions between the ground and excited manifolds and the
//! two-laser features they produce.

mod map;
mod pi;

pub use map::{default_axes, synthesize_two_laser_map, TwoLaserMap};
pub use pi::{pi_centroids, pi_doublet_positions, PiLine};

use serde::{Deserialize, Serialize};

use crate::constants::PhysicalConstants;
use crate::error::{Error, Result};
use crate::model::inner;
use crate::model::{
    build_manifold_hamiltonian, eigensystem, Branch, DefectModel, EigenSystem, FieldPoint,
};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Transition {
    pub gs_index: usize,
    pub es_index: usize,
    /// `E_es - E_gs` in MHz, relative to the zero-phonon line.
    pub frequency_offset: f64,
    pub strength: f64,
    pub gs_branch: Branch,
    pub es_branch: Branch,
    pub gs_nuclear: f64,
    pub es_nuclear: f64,
    pub gs_confidence: f64,
    pub es_confidence: f64,
}

impl Transition {
    pub fn conserves_branch(&self) -> bool {
        self.gs_branch == self.es_branch
    }

    pub fn conserves_nuclear(&self) -> bool {
        self.gs_nuclear == self.es_nuclear
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Family {
    Lambda,
    V,
    LambdaStar,
    VStar,
    Pi,
    X,
    Other,
}

impl Family {
    /// Bright features are positive, dark ones negative, `Other` is zero.
    pub fn sign(self) -> f64 {
        match self {
            Family::Lambda | Family::LambdaStar | Family::Pi | Family::X => 1.0,
            Family::V | Family::VStar => -1.0,
            Family::Other => 0.0,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Family::Lambda => "lambda",
            Family::V => "v",
            Family::LambdaStar => "lambda_star",
            Family::VStar => "v_star",
            Family::Pi => "pi",
            Family::X => "x",
            Family::Other => "other",
        }
    }
}

impl std::str::FromStr for Family {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s.to_ascii_lowercase().as_str() {
            "lambda" | "Λ" => Family::Lambda,
            "v" => Family::V,
            "lambda_star" | "lambda*" | "Λ*" => Family::LambdaStar,
            "v_star" | "v*" => Family::VStar,
            "pi" | "Π" => Family::Pi,
            "x" => Family::X,
            "other" => Family::Other,
            _ => {
                return Err(Error::InvalidParameter(format!(
                    "unknown feature family '{s}'"
                )))
            }
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TransitionPair {
    pub first: Transition,
    pub second: Transition,
    /// `|f1 - f2|`, MHz.
    pub two_photon_detuning: f64,
    pub family: Family,
    pub signed_amplitude: f64,
}

/// Which families contribute to a map.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FamilyToggles {
    pub lambda: bool,
    pub v: bool,
    pub lambda_star: bool,
    pub v_star: bool,
    pub pi: bool,
    pub x: bool,
}

impl Default for FamilyToggles {
    fn default() -> Self {
        Self {
            lambda: true,
            v: true,
            lambda_star: true,
            v_star: true,
            pi: true,
            x: false,
        }
    }
}

impl FamilyToggles {
    pub fn none() -> Self {
        Self {
            lambda: false,
            v: false,
            lambda_star: false,
            v_star: false,
            pi: false,
            x: false,
        }
    }

    pub fn enabled(&self, f: Family) -> bool {
        match f {
            Family::Lambda => self.lambda,
            Family::V => self.v,
            Family::LambdaStar => self.lambda_star,
            Family::VStar => self.v_star,
            Family::Pi => self.pi,
            Family::X => self.x,
            Family::Other => false,
        }
    }

    pub fn set(&mut self, f: Family, on: bool) {
        match f {
            Family::Lambda => self.lambda = on,
            Family::V => self.v = on,
            Family::LambdaStar => self.lambda_star = on,
            Family::VStar => self.v_star = on,
            Family::Pi => self.pi = on,
            Family::X => self.x = on,
            Family::Other => {}
        }
    }
}

/// Knobs shared by transition enumeration, pair classification and map
/// synthesis.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MapOptions {
    pub families: FamilyToggles,
    /// Relative amplitude of branch-flipping excitation, in `[0, 1]`.
    pub spin_flip_weight: f64,
    pub strength_floor: f64,
    /// Nuclear-label confidence needed for Π and X classification.
    pub min_confidence: f64,
    /// Lorentzian FWHM, MHz.
    pub kernel_fwhm: f64,
    /// Common factor on every pair amplitude. Has no effect after
    /// normalization; kept for linearity checks.
    pub amplitude_scale: f64,
}

impl Default for MapOptions {
    fn default() -> Self {
        Self {
            families: FamilyToggles::default(),
            spin_flip_weight: 0.0,
            strength_floor: 1e-6,
            min_confidence: 0.5,
            kernel_fwhm: 10.0,
            amplitude_scale: 1.0,
        }
    }
}

impl MapOptions {
    pub fn only(f: Family) -> Self {
        let mut families = FamilyToggles::none();
        families.set(f, true);
        Self {
            families,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.spin_flip_weight) {
            return Err(Error::InvalidParameter(format!(
                "spin_flip_weight must lie in [0, 1], got {}",
                self.spin_flip_weight
            )));
        }
        if self.strength_floor.is_nan() || self.strength_floor < 0.0 {
            return Err(Error::InvalidParameter(
                "strength_floor must be >= 0".into(),
            ));
        }
        if !(0.0..=1.0).contains(&self.min_confidence) {
            return Err(Error::InvalidParameter(
                "min_confidence must lie in [0, 1]".into(),
            ));
        }
        if !(self.kernel_fwhm > 0.0 && self.kernel_fwhm.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "kernel_fwhm must be positive, got {}",
                self.kernel_fwhm
            )));
        }
        if !(self.amplitude_scale > 0.0 && self.amplitude_scale.is_finite()) {
            return Err(Error::InvalidParameter(
                "amplitude_scale must be positive".into(),
            ));
        }
        Ok(())
    }
}

/// Ground and excited eigensystems at one field point.
pub fn manifold_eigensystems(
    model: &DefectModel,
    f: &FieldPoint,
    c: &PhysicalConstants,
) -> Result<(EigenSystem, EigenSystem)> {
    if model.ground.dim() != model.excited.dim() {
        return Err(Error::ContractViolation(format!(
            "ground ({}) and excited ({}) Hilbert dimensions differ",
            model.ground.dim(),
            model.excited.dim()
        )));
    }
    model.validate()?;
    let gs = eigensystem(&build_manifold_hamiltonian(&model.ground, f, c)?, None)?;
    let es = eigensystem(&build_manifold_hamiltonian(&model.excited, f, c)?, None)?;
    Ok((gs, es))
}

/// Transitions between two already diagonalized manifolds.
///
/// Strength is `|<e|(P_c + w P_f)|g>|^2`, where `P_c` projects onto the
/// excited states of the same electron branch as `g` and `P_f` onto the
/// opposite branch. For `w = 1` the strengths out of each ground state sum
/// to one; for `w = 0` only branch-conserving transitions survive.
pub fn transitions_between(
    gs: &EigenSystem,
    es: &EigenSystem,
    opts: &MapOptions,
) -> Result<Vec<Transition>> {
    if gs.len() != es.len() {
        return Err(Error::ContractViolation(format!(
            "ground ({}) and excited ({}) Hilbert dimensions differ",
            gs.len(),
            es.len()
        )));
    }
    opts.validate()?;
    let w2 = opts.spin_flip_weight * opts.spin_flip_weight;
    let mut out = Vec::new();
    for g in 0..gs.len() {
        for e in 0..es.len() {
            let overlap = inner(&es.states[e], &gs.states[g]).norm_sqr();
            let weight = if gs.electron_branch[g] == es.electron_branch[e] {
                1.0
            } else {
                w2
            };
            let strength = (overlap * weight).min(1.0);
            if strength < opts.strength_floor {
                continue;
            }
            out.push(Transition {
                gs_index: g,
                es_index: e,
                frequency_offset: es.energies[e] - gs.energies[g],
                strength,
                gs_branch: gs.electron_branch[g],
                es_branch: es.electron_branch[e],
                gs_nuclear: gs.m_i(g),
                es_nuclear: es.m_i(e),
                gs_confidence: gs.label_confidence[g],
                es_confidence: es.label_confidence[e],
            });
        }
    }
    Ok(out)
}

pub fn enumerate_transitions(
    model: &DefectModel,
    f: &FieldPoint,
    c: &PhysicalConstants,
    opts: &MapOptions,
) -> Result<Vec<Transition>> {
    let (gs, es) = manifold_eigensystems(model, f, c)?;
    transitions_between(&gs, &es, opts)
}

pub fn classify_pair(t1: &Transition, t2: &Transition) -> Family {
    classify_pair_with(t1, t2, 0.5)
}

pub fn classify_pair_with(t1: &Transition, t2: &Transition, min_confidence: f64) -> Family {
    let same_gs = t1.gs_index == t2.gs_index;
    let same_es = t1.es_index == t2.es_index;
    match (same_gs, same_es) {
        (true, true) => return Family::Other,
        (false, true) => {
            return if t1.gs_branch == t2.gs_branch {
                Family::Lambda
            } else {
                Family::LambdaStar
            }
        }
        (true, false) => {
            return if t1.es_branch == t2.es_branch {
                Family::V
            } else {
                Family::VStar
            }
        }
        (false, false) => {}
    }
    let confident = [
        t1.gs_confidence,
        t1.es_confidence,
        t2.gs_confidence,
        t2.es_confidence,
    ]
    .iter()
    .all(|&x| x >= min_confidence);
    let nuclear_ok =
        t1.conserves_nuclear() && t2.conserves_nuclear() && t1.gs_nuclear == t2.gs_nuclear;
    if !(confident && nuclear_ok) {
        return Family::Other;
    }
    if t1.conserves_branch() && t2.conserves_branch() {
        if t1.gs_branch != t2.gs_branch {
            Family::Pi
        } else {
            Family::Other
        }
    } else {
        Family::X
    }
}

/// All classified pairs with a non-`Other` family among `ts`. Each
/// unordered pair appears once.
pub fn pairs_of(ts: &[Transition], opts: &MapOptions) -> Vec<TransitionPair> {
    let mut out = Vec::new();
    for (i, a) in ts.iter().enumerate() {
        for b in &ts[i + 1..] {
            let family = classify_pair_with(a, b, opts.min_confidence);
            if family == Family::Other {
                continue;
            }
            out.push(TransitionPair {
                first: *a,
                second: *b,
                two_photon_detuning: (a.frequency_offset - b.frequency_offset).abs(),
                family,
                signed_amplitude: family.sign() * a.strength * b.strength * opts.amplitude_scale,
            });
        }
    }
    out
}

/// Classified pairs at one field point, filtered by the family toggles.
pub fn enumerate_pairs(
    model: &DefectModel,
    f: &FieldPoint,
    c: &PhysicalConstants,
    opts: &MapOptions,
) -> Result<Vec<TransitionPair>> {
    let ts = enumerate_transitions(model, f, c, opts)?;
    Ok(pairs_of(&ts, opts)
        .into_iter()
        .filter(|p| opts.families.enabled(p.family))
        .collect())
}
