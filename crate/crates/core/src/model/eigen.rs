use nalgebra::DMatrix;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use super::hermitian::HermitianMatrix;
use super::jacobi::jacobi_hermitian;
use super::operators::magnetic_number;
use crate::error::{Error, Result};

/// Electron spin branch of a state: sign of `<S_z>`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Branch {
    Down,
    Up,
}

impl Branch {
    pub fn flipped(self) -> Self {
        match self {
            Branch::Down => Branch::Up,
            Branch::Up => Branch::Down,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Branch::Down => "down",
            Branch::Up => "up",
        }
    }
}

/// Electron and nuclear dimensions of the product space.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SpinDims {
    pub s_dim: usize,
    pub i_dim: usize,
}

impl SpinDims {
    pub fn dim(&self) -> usize {
        self.s_dim * self.i_dim
    }

    fn m_s(&self, k: usize) -> f64 {
        magnetic_number(self.s_dim, k / self.i_dim)
    }

    fn m_i(&self, k: usize) -> f64 {
        magnetic_number(self.i_dim, k % self.i_dim)
    }
}

/// Full eigendecomposition of one manifold with per-state labels.
#[derive(Debug, Clone)]
pub struct EigenSystem {
    /// Ascending, MHz.
    pub energies: Vec<f64>,
    /// Orthonormal eigenvectors in the fixed product basis.
    pub states: Vec<Vec<Complex64>>,
    pub electron_branch: Vec<Branch>,
    /// Dominant nuclear projection as `2 m_I`.
    pub twice_m_i: Vec<i32>,
    /// Summed squared amplitude on the dominant `m_I`.
    pub label_confidence: Vec<f64>,
    pub sz: Vec<f64>,
    pub iz: Vec<f64>,
    pub dims: SpinDims,
    pub sweeps: usize,
}

impl EigenSystem {
    pub fn len(&self) -> usize {
        self.energies.len()
    }

    pub fn is_empty(&self) -> bool {
        self.energies.is_empty()
    }

    pub fn m_i(&self, k: usize) -> f64 {
        self.twice_m_i[k] as f64 / 2.0
    }

    /// `max_i ||H psi_i - E_i psi_i||`.
    pub fn max_residual(&self, h: &HermitianMatrix) -> f64 {
        let m = h.matrix();
        let n = self.len();
        (0..n)
            .map(|i| {
                let psi = &self.states[i];
                (0..n)
                    .map(|r| {
                        let mut acc = -psi[r] * self.energies[i];
                        for c in 0..n {
                            acc += m[(r, c)] * psi[c];
                        }
                        acc.norm_sqr()
                    })
                    .sum::<f64>()
                    .sqrt()
            })
            .fold(0.0, f64::max)
    }

    /// `max_ij |<psi_i|psi_j> - delta_ij|`.
    pub fn orthonormality_error(&self) -> f64 {
        let n = self.len();
        let mut worst = 0.0_f64;
        for i in 0..n {
            for j in i..n {
                let ov = inner(&self.states[i], &self.states[j]);
                let target = if i == j { 1.0 } else { 0.0 };
                worst = worst.max((ov - Complex64::new(target, 0.0)).norm());
            }
        }
        worst
    }
}

pub(crate) fn inner(a: &[Complex64], b: &[Complex64]) -> Complex64 {
    a.iter().zip(b).map(|(x, y)| x.conj() * y).sum()
}

/// Eigendecomposition assuming an electron spin-1/2 outer factor, i.e.
/// `dims = (2, n/2)`.
pub fn eigensystem(h: &HermitianMatrix, prior: Option<&EigenSystem>) -> Result<EigenSystem> {
    let n = h.dim();
    if n == 0 || !n.is_multiple_of(2) {
        return Err(Error::InvalidDimension(format!(
            "expected an even dimension (electron spin-1/2 outer factor), got {n}"
        )));
    }
    eigensystem_with_dims(
        h,
        SpinDims {
            s_dim: 2,
            i_dim: n / 2,
        },
        prior,
    )
}

pub fn eigensystem_with_dims(
    h: &HermitianMatrix,
    dims: SpinDims,
    prior: Option<&EigenSystem>,
) -> Result<EigenSystem> {
    let n = h.dim();
    if dims.dim() != n {
        return Err(Error::InvalidDimension(format!(
            "spin dims {}x{} do not match matrix dimension {n}",
            dims.s_dim, dims.i_dim
        )));
    }
    if !h.is_finite() {
        return Err(Error::ContractViolation(
            "matrix has non-finite entries".into(),
        ));
    }
    if let Some(p) = prior {
        if p.len() != n {
            return Err(Error::ContractViolation(format!(
                "prior has {} states, matrix dimension is {n}",
                p.len()
            )));
        }
    }

    let jac = jacobi_hermitian(h.matrix())?;
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| jac.values[a].total_cmp(&jac.values[b]));
    let energies: Vec<f64> = order.iter().map(|&k| jac.values[k]).collect();
    let mut vecs: Vec<Vec<Complex64>> = order
        .iter()
        .map(|&k| jac.vectors.column(k).iter().copied().collect())
        .collect();

    let deg_tol = 1e-9 * h.frobenius_norm().max(1e-300);
    let mut start = 0;
    while start < n {
        let mut end = start + 1;
        while end < n && energies[end] - energies[start] <= deg_tol {
            end += 1;
        }
        if end - start > 1 {
            resolve_degenerate(&mut vecs[start..end], dims)?;
        }
        start = end;
    }

    for v in vecs.iter_mut() {
        fix_phase(v);
    }

    let mut electron_branch = Vec::with_capacity(n);
    let mut twice_m_i = Vec::with_capacity(n);
    let mut label_confidence = Vec::with_capacity(n);
    let mut sz = Vec::with_capacity(n);
    let mut iz = Vec::with_capacity(n);
    for v in &vecs {
        let s = diag_expectation(v, |k| dims.m_s(k));
        let i = diag_expectation(v, |k| dims.m_i(k));
        let branch = if s > 1e-9 {
            Branch::Up
        } else if s < -1e-9 {
            Branch::Down
        } else if let Some(p) = prior {
            let (best, _) = p
                .states
                .iter()
                .enumerate()
                .map(|(j, pv)| (j, inner(pv, v).norm_sqr()))
                .fold((0, -1.0), |acc, x| if x.1 > acc.1 { x } else { acc });
            p.electron_branch[best]
        } else {
            let k = dominant_index(v);
            if dims.m_s(k) >= 0.0 {
                Branch::Up
            } else {
                Branch::Down
            }
        };
        let mut weights = vec![0.0; dims.i_dim];
        for (k, z) in v.iter().enumerate() {
            weights[k % dims.i_dim] += z.norm_sqr();
        }
        let (best, conf) = weights
            .iter()
            .copied()
            .enumerate()
            .fold(
                (0, -1.0),
                |acc, x| if x.1 > acc.1 + 1e-12 { x } else { acc },
            );
        electron_branch.push(branch);
        twice_m_i.push(dims.i_dim as i32 - 1 - 2 * best as i32);
        label_confidence.push(conf);
        sz.push(s);
        iz.push(i);
    }

    Ok(EigenSystem {
        energies,
        states: vecs,
        electron_branch,
        twice_m_i,
        label_confidence,
        sz,
        iz,
        dims,
        sweeps: jac.sweeps,
    })
}

fn diag_expectation(v: &[Complex64], f: impl Fn(usize) -> f64) -> f64 {
    v.iter().enumerate().map(|(k, z)| z.norm_sqr() * f(k)).sum()
}

fn dominant_index(v: &[Complex64]) -> usize {
    let max = v.iter().fold(0.0_f64, |m, z| m.max(z.norm()));
    v.iter()
        .position(|z| z.norm() >= max * (1.0 - 1e-9))
        .unwrap_or(0)
}

/// Largest-magnitude component made real and positive.
fn fix_phase(v: &mut [Complex64]) {
    let k = dominant_index(v);
    let z = v[k];
    if z.norm() == 0.0 {
        return;
    }
    let phase = z.conj() / z.norm();
    for c in v.iter_mut() {
        *c *= phase;
    }
    v[k] = Complex64::new(v[k].norm(), 0.0);
}

/// Rotates a degenerate block into eigenstates of the projected `I_z`,
/// then of `S_z` inside any remaining ties, and orders the block by
/// descending `<I_z>` then descending `<S_z>`.
fn resolve_degenerate(block: &mut [Vec<Complex64>], dims: SpinDims) -> Result<()> {
    rotate_to_diagonal(block, |k| dims.m_i(k))?;
    let key_tol = 1e-9;
    let iz: Vec<f64> = block
        .iter()
        .map(|v| diag_expectation(v, |k| dims.m_i(k)))
        .collect();
    let mut idx: Vec<usize> = (0..block.len()).collect();
    idx.sort_by(|&a, &b| iz[b].total_cmp(&iz[a]));
    let mut sorted: Vec<Vec<Complex64>> = idx.iter().map(|&i| block[i].clone()).collect();

    let mut s = 0;
    while s < sorted.len() {
        let key = diag_expectation(&sorted[s], |k| dims.m_i(k));
        let mut e = s + 1;
        while e < sorted.len()
            && (diag_expectation(&sorted[e], |k| dims.m_i(k)) - key).abs() <= key_tol
        {
            e += 1;
        }
        if e - s > 1 {
            let sub = &mut sorted[s..e];
            rotate_to_diagonal(sub, |k| dims.m_s(k))?;
            sub.sort_by(|a, b| {
                diag_expectation(b, |k| dims.m_s(k))
                    .total_cmp(&diag_expectation(a, |k| dims.m_s(k)))
            });
        }
        s = e;
    }
    block.clone_from_slice(&sorted);
    Ok(())
}

/// Diagonalizes the diagonal operator `op` projected onto `block`.
fn rotate_to_diagonal(block: &mut [Vec<Complex64>], op: impl Fn(usize) -> f64) -> Result<()> {
    let k = block.len();
    let n = block[0].len();
    let proj = DMatrix::<Complex64>::from_fn(k, k, |a, b| {
        (0..n)
            .map(|r| block[a][r].conj() * block[b][r] * op(r))
            .sum()
    });
    let proj = HermitianMatrix::symmetrized(proj);
    let jac = jacobi_hermitian(proj.matrix())?;
    let rotated: Vec<Vec<Complex64>> = (0..k)
        .map(|col| {
            (0..n)
                .map(|r| (0..k).map(|a| block[a][r] * jac.vectors[(a, col)]).sum())
                .collect()
        })
        .collect();
    block.clone_from_slice(&rotated);
    Ok(())
}
