//! Cyclic Jacobi eigensolver for small dense Hermitian matrices.
//!
//! Each rotation first removes the phase of the pivot `a_pq` with a
//! diagonal unitary and then applies a real plane rotation, so the
//! combined transform is `U = diag(1, e^{-i phi}) R` on the `(p, q)` plane.

use nalgebra::DMatrix;
use num_complex::Complex64;

use crate::error::{Error, Result};

pub const MAX_SWEEPS: usize = 100;
pub const REL_OFF_TOL: f64 = 1e-12;

/// Unsorted eigenvalues and eigenvectors (columns) of a Hermitian matrix.
pub struct JacobiResult {
    pub values: Vec<f64>,
    pub vectors: DMatrix<Complex64>,
    pub sweeps: usize,
}

fn off_norm(a: &DMatrix<Complex64>) -> f64 {
    let n = a.nrows();
    let mut s = 0.0;
    for i in 0..n {
        for j in 0..n {
            if i != j {
                s += a[(i, j)].norm_sqr();
            }
        }
    }
    s.sqrt()
}

pub fn jacobi_hermitian(input: &DMatrix<Complex64>) -> Result<JacobiResult> {
    let n = input.nrows();
    let mut a = input.clone();
    let mut v = DMatrix::<Complex64>::identity(n, n);
    let norm = a.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
    let tol = REL_OFF_TOL * norm;

    let mut sweeps = 0;
    loop {
        let off = off_norm(&a);
        if off <= tol || off == 0.0 {
            break;
        }
        if sweeps == MAX_SWEEPS {
            return Err(Error::Convergence {
                sweeps,
                off_norm: off,
            });
        }
        sweeps += 1;
        for p in 0..n {
            for q in (p + 1)..n {
                let apq = a[(p, q)];
                let mag = apq.norm();
                if mag == 0.0 {
                    continue;
                }
                let app = a[(p, p)].re;
                let aqq = a[(q, q)].re;
                // skip rotations that cannot change the diagonal in floating point
                if sweeps > 3 && mag < f64::EPSILON * 1e-2 * (app.abs() + aqq.abs()) {
                    a[(p, q)] = Complex64::new(0.0, 0.0);
                    a[(q, p)] = Complex64::new(0.0, 0.0);
                    continue;
                }
                let phase = apq / mag; // e^{i phi}
                let theta = (aqq - app) / (2.0 * mag);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;

                // U = [[c, s], [-s e^{-i phi}, c e^{-i phi}]] on (p, q)
                let u_pp = Complex64::new(c, 0.0);
                let u_pq = Complex64::new(s, 0.0);
                let u_qp = -phase.conj() * s;
                let u_qq = phase.conj() * c;

                // A <- A U (columns)
                for k in 0..n {
                    let akp = a[(k, p)];
                    let akq = a[(k, q)];
                    a[(k, p)] = akp * u_pp + akq * u_qp;
                    a[(k, q)] = akp * u_pq + akq * u_qq;
                }
                // A <- U^H A (rows)
                for k in 0..n {
                    let apk = a[(p, k)];
                    let aqk = a[(q, k)];
                    a[(p, k)] = u_pp.conj() * apk + u_qp.conj() * aqk;
                    a[(q, k)] = u_pq.conj() * apk + u_qq.conj() * aqk;
                }
                a[(p, q)] = Complex64::new(0.0, 0.0);
                a[(q, p)] = Complex64::new(0.0, 0.0);
                a[(p, p)] = Complex64::new(a[(p, p)].re, 0.0);
                a[(q, q)] = Complex64::new(a[(q, q)].re, 0.0);

                for k in 0..n {
                    let vkp = v[(k, p)];
                    let vkq = v[(k, q)];
                    v[(k, p)] = vkp * u_pp + vkq * u_qp;
                    v[(k, q)] = vkp * u_pq + vkq * u_qq;
                }
            }
        }
    }

    Ok(JacobiResult {
        values: (0..n).map(|i| a[(i, i)].re).collect(),
        vectors: v,
        sweeps,
    })
}
