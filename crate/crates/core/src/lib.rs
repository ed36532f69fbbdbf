//! Level structure, two-laser spectroscopy, optical pumping dynamics and
//! parameter estimation for hyperfine-coupled S = 1/2, I = 7/2 defect
//! centres such as vanadium in SiC.

pub mod constants;
pub mod dynamics;
pub mod error;
pub mod fitting;
pub mod model;
pub mod spectra;

pub use constants::PhysicalConstants;
pub use error::{Error, Result};
pub use model::{
    build_manifold_hamiltonian, build_spin_operators, eigensystem, zeeman_splitting, Branch,
    DefectModel, EigenSystem, FieldPoint, HermitianMatrix, ManifoldParams,
};
