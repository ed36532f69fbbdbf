//! Effective spin Hamiltonian of one optical manifold: electron Zeeman,
//! nuclear Zeeman and electron-nuclear hyperfine coupling, plus its
//! diagonalization with field-continuous state labels.

mod eigen;
mod hamiltonian;
mod hermitian;
pub mod jacobi;
mod operators;

pub(crate) use eigen::inner;
pub use eigen::{eigensystem, eigensystem_with_dims, Branch, EigenSystem, SpinDims};
pub use hamiltonian::{build_manifold_hamiltonian, zeeman_splitting};
pub use hermitian::HermitianMatrix;
pub use operators::{build_spin_operators, SpinOperators};

use serde::{Deserialize, Serialize};

use crate::constants::wavelength_nm_to_mhz;
use crate::error::{Error, Result};

pub type Tensor3 = [[f64; 3]; 3];

/// Spin parameters of one electronic manifold (a Kramers doublet coupled
/// to the nuclear spin).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ManifoldParams {
    /// Effective electron g-tensor, dimensionless.
    pub g_tensor: Tensor3,
    /// Hyperfine tensor in MHz. Off-diagonal entries are used as given, so
    /// a symmetric tensor with `a[0][2] == a[2][0]` contributes
    /// `A_xz (S_x I_z + S_z I_x)`.
    pub a_tensor: Tensor3,
    /// Nuclear g-factor.
    #[serde(default = "default_g_n")]
    pub g_n: f64,
    #[serde(default = "default_s_dim")]
    pub s_dim: usize,
    #[serde(default = "default_i_dim")]
    pub i_dim: usize,
}

/// 51V nuclear g-factor.
pub const G_N_V51: f64 = 1.47106;

fn default_g_n() -> f64 {
    G_N_V51
}
fn default_s_dim() -> usize {
    2
}
fn default_i_dim() -> usize {
    8
}

impl ManifoldParams {
    /// Axial g-tensor (`g_xx = g_yy = g_perp`, `g_zz = g_par`) with a
    /// symmetric hyperfine tensor built from its independent components.
    pub fn axial(g_perp: f64, g_par: f64, a_diag: [f64; 3], a_xz: f64) -> Self {
        let mut a = [[0.0; 3]; 3];
        a[0][0] = a_diag[0];
        a[1][1] = a_diag[1];
        a[2][2] = a_diag[2];
        a[0][2] = a_xz;
        a[2][0] = a_xz;
        Self {
            g_tensor: [[g_perp, 0.0, 0.0], [0.0, g_perp, 0.0], [0.0, 0.0, g_par]],
            a_tensor: a,
            g_n: G_N_V51,
            s_dim: 2,
            i_dim: 8,
        }
    }

    pub fn g_zz(&self) -> f64 {
        self.g_tensor[2][2]
    }

    pub fn dim(&self) -> usize {
        self.s_dim * self.i_dim
    }

    pub fn max_abs_hyperfine(&self) -> f64 {
        self.a_tensor
            .iter()
            .flatten()
            .fold(0.0_f64, |m, v| m.max(v.abs()))
    }

    pub fn validate(&self) -> Result<()> {
        let finite = self
            .g_tensor
            .iter()
            .chain(self.a_tensor.iter())
            .flatten()
            .all(|v| v.is_finite());
        if !finite || !self.g_n.is_finite() {
            return Err(Error::InvalidParameter(
                "g-tensor, hyperfine tensor and g_N must be finite".into(),
            ));
        }
        if self.s_dim < 2 || self.i_dim < 2 {
            return Err(Error::InvalidDimension(format!(
                "spin dimensions must be >= 2, got S_dim={} I_dim={}",
                self.s_dim, self.i_dim
            )));
        }
        Ok(())
    }
}

/// Ground and excited manifolds of one defect site plus its zero-phonon line.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DefectModel {
    pub name: String,
    pub ground: ManifoldParams,
    pub excited: ManifoldParams,
    /// Zero-phonon line frequency, MHz.
    pub zpl_frequency: f64,
}

impl DefectModel {
    /// Vanadium alpha site in 4H-SiC.
    pub fn alpha_4h() -> Self {
        Self {
            name: "4H-alpha".into(),
            ground: ManifoldParams::axial(0.0, 1.748, [165.0, -165.0, 232.0], 0.0),
            excited: ManifoldParams::axial(0.0, 2.18, [0.0, 0.0, -213.0], 75.0),
            zpl_frequency: wavelength_nm_to_mhz(1278.78),
        }
    }

    /// Vanadium alpha site in 6H-SiC. The excited-state hyperfine signs are
    /// taken as printed in the source table and are not independently
    /// confirmed.
    pub fn alpha_6h() -> Self {
        Self {
            name: "6H-alpha".into(),
            ground: ManifoldParams::axial(0.0, 1.749, [165.0, -165.0, 232.0], 0.0),
            excited: ManifoldParams::axial(0.0, 2.24, [0.0, 0.0, 200.0], 20.0),
            zpl_frequency: wavelength_nm_to_mhz(1308.56),
        }
    }

    pub const PRESET_NAMES: [&'static str; 2] = ["4H-alpha", "6H-alpha"];

    pub fn preset(name: &str) -> Result<Self> {
        match name {
            "4H-alpha" => Ok(Self::alpha_4h()),
            "6H-alpha" => Ok(Self::alpha_6h()),
            other => Err(Error::InvalidParameter(format!(
                "unknown preset {other:?}; available: {:?}",
                Self::PRESET_NAMES
            ))),
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.ground.validate()?;
        self.excited.validate()?;
        if self.ground.dim() != self.excited.dim() {
            return Err(Error::ContractViolation(format!(
                "ground ({}) and excited ({}) Hilbert dimensions differ",
                self.ground.dim(),
                self.excited.dim()
            )));
        }
        if !(self.zpl_frequency.is_finite() && self.zpl_frequency > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "zpl_frequency must be positive, got {}",
                self.zpl_frequency
            )));
        }
        Ok(())
    }

    /// Linear slope of the branch splitting of the optical line,
    /// (g_e - g_g) mu_B / h, in MHz/mT.
    pub fn branch_slope(&self, mu_b_over_h: f64) -> f64 {
        (self.excited.g_zz() - self.ground.g_zz()) * mu_b_over_h
    }
}

/// Static magnetic field in mT; the crystal c-axis is z.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FieldPoint {
    pub b: [f64; 3],
}

impl FieldPoint {
    pub fn new(b: [f64; 3]) -> Result<Self> {
        if b.iter().all(|v| v.is_finite()) {
            Ok(Self { b })
        } else {
            Err(Error::InvalidParameter(format!(
                "field components must be finite, got {b:?}"
            )))
        }
    }

    /// Field along the c-axis.
    pub fn along_c(b_z: f64) -> Self {
        Self { b: [0.0, 0.0, b_z] }
    }

    pub fn z(&self) -> f64 {
        self.b[2]
    }
}
