use nalgebra::DMatrix;
use num_complex::Complex64;

use super::hermitian::HermitianMatrix;
use crate::error::{Error, Result};

/// Electron and nuclear spin operators on the product space. The electron
/// factor is outer, so basis index `k = s * i_dim + i` with `m_S` and
/// `m_I` both descending from their maximum.
#[derive(Debug, Clone)]
pub struct SpinOperators {
    pub s_dim: usize,
    pub i_dim: usize,
    pub s: [HermitianMatrix; 3],
    pub i: [HermitianMatrix; 3],
}

impl SpinOperators {
    pub fn dim(&self) -> usize {
        self.s_dim * self.i_dim
    }

    pub fn sz(&self) -> &HermitianMatrix {
        &self.s[2]
    }

    pub fn iz(&self) -> &HermitianMatrix {
        &self.i[2]
    }

    /// `m_S` of basis state `k`.
    pub fn m_s_of(&self, k: usize) -> f64 {
        magnetic_number(self.s_dim, k / self.i_dim)
    }

    /// `2 m_I` of basis state `k`.
    pub fn twice_m_i_of(&self, k: usize) -> i32 {
        (self.i_dim as i32 - 1) - 2 * (k % self.i_dim) as i32
    }
}

/// `m = j - k` for the `k`-th state of a spin with `dim = 2j + 1`.
pub(crate) fn magnetic_number(dim: usize, k: usize) -> f64 {
    (dim as f64 - 1.0) / 2.0 - k as f64
}

/// `[J_x, J_y, J_z]` for a single spin of dimension `dim`.
fn angular_momentum(dim: usize) -> [DMatrix<Complex64>; 3] {
    let j = (dim as f64 - 1.0) / 2.0;
    let mut jp = DMatrix::<Complex64>::zeros(dim, dim);
    let mut jz = DMatrix::<Complex64>::zeros(dim, dim);
    for k in 0..dim {
        let m = magnetic_number(dim, k);
        jz[(k, k)] = Complex64::new(m, 0.0);
        if k > 0 {
            // J+ |m> lands on index k-1
            jp[(k - 1, k)] = Complex64::new((j * (j + 1.0) - m * (m + 1.0)).sqrt(), 0.0);
        }
    }
    let jm = jp.adjoint();
    let half = Complex64::new(0.5, 0.0);
    let jx = (&jp + &jm) * half;
    let jy = (&jp - &jm) * Complex64::new(0.0, -0.5);
    [jx, jy, jz]
}

fn kron(a: &DMatrix<Complex64>, b: &DMatrix<Complex64>) -> DMatrix<Complex64> {
    a.kronecker(b)
}

pub fn build_spin_operators(s_dim: usize, i_dim: usize) -> Result<SpinOperators> {
    if s_dim < 2 || i_dim < 2 {
        return Err(Error::InvalidDimension(format!(
            "spin dimensions must be >= 2, got S_dim={s_dim} I_dim={i_dim}"
        )));
    }
    Ok(operators_unchecked(s_dim, i_dim))
}

/// Also accepts `i_dim == 1` (bare electron), used for labeling small
/// matrices.
pub(crate) fn operators_unchecked(s_dim: usize, i_dim: usize) -> SpinOperators {
    let id_s = DMatrix::<Complex64>::identity(s_dim, s_dim);
    let id_i = DMatrix::<Complex64>::identity(i_dim, i_dim);
    let [sx, sy, sz] = angular_momentum(s_dim);
    let [ix, iy, iz] = angular_momentum(i_dim);
    let s = [
        HermitianMatrix::symmetrized(kron(&sx, &id_i)),
        HermitianMatrix::symmetrized(kron(&sy, &id_i)),
        HermitianMatrix::symmetrized(kron(&sz, &id_i)),
    ];
    let i = [
        HermitianMatrix::symmetrized(kron(&id_s, &ix)),
        HermitianMatrix::symmetrized(kron(&id_s, &iy)),
        HermitianMatrix::symmetrized(kron(&id_s, &iz)),
    ];
    SpinOperators { s_dim, i_dim, s, i }
}
