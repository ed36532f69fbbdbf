use std::sync::OnceLock;

use nalgebra::DMatrix;
use num_complex::Complex64;

use super::hermitian::HermitianMatrix;
use super::operators::{operators_unchecked, SpinOperators};
use super::{FieldPoint, ManifoldParams};
use crate::constants::PhysicalConstants;
use crate::error::{Error, Result};

pub(crate) fn operators_for(
    s_dim: usize,
    i_dim: usize,
) -> std::borrow::Cow<'static, SpinOperators> {
    static DEFAULT: OnceLock<SpinOperators> = OnceLock::new();
    if (s_dim, i_dim) == (2, 8) {
        std::borrow::Cow::Borrowed(DEFAULT.get_or_init(|| operators_unchecked(2, 8)))
    } else {
        std::borrow::Cow::Owned(operators_unchecked(s_dim, i_dim))
    }
}

/// `H = mu_B B.g.S - g_N mu_N B.I + S.A.I`, in MHz.
pub fn build_manifold_hamiltonian(
    p: &ManifoldParams,
    f: &FieldPoint,
    c: &PhysicalConstants,
) -> Result<HermitianMatrix> {
    p.validate()?;
    c.validate()?;
    if !f.b.iter().all(|v| v.is_finite()) {
        return Err(Error::InvalidParameter(format!(
            "field must be finite, got {:?}",
            f.b
        )));
    }
    let ops = operators_for(p.s_dim, p.i_dim);
    let n = ops.dim();
    let mut h = DMatrix::<Complex64>::zeros(n, n);
    let b = f.b;

    // electron Zeeman: sum_ij B_i g_ij S_j
    for j in 0..3 {
        let coeff: f64 = (0..3).map(|i| b[i] * p.g_tensor[i][j]).sum::<f64>() * c.mu_b_over_h;
        if coeff != 0.0 {
            h += ops.s[j].matrix() * Complex64::new(coeff, 0.0);
        }
    }
    // nuclear Zeeman
    for (i, b_i) in b.iter().enumerate() {
        let coeff = -p.g_n * c.mu_n_over_h * b_i;
        if coeff != 0.0 {
            h += ops.i[i].matrix() * Complex64::new(coeff, 0.0);
        }
    }
    // hyperfine: sum_ij S_i A_ij I_j
    for i in 0..3 {
        for j in 0..3 {
            let a = p.a_tensor[i][j];
            if a != 0.0 {
                h += ops.s[i].matrix() * ops.i[j].matrix() * Complex64::new(a, 0.0);
            }
        }
    }
    HermitianMatrix::new(h)
}

/// Electron-only Zeeman splitting `g_zz mu_B |B_z|` in MHz for a field
/// along the c-axis.
pub fn zeeman_splitting(p: &ManifoldParams, f: &FieldPoint, c: &PhysicalConstants) -> Result<f64> {
    if f.b[0].abs() > 1e-9 || f.b[1].abs() > 1e-9 {
        return Err(Error::UnsupportedGeometry(format!(
            "transverse field {:?} mT; use the full eigensystem",
            &f.b[..2]
        )));
    }
    Ok((p.g_zz() * c.mu_b_over_h * f.b[2]).abs())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::DefectModel;

    #[test]
    fn zero_field_zero_hyperfine_is_zero() {
        let mut p = DefectModel::alpha_4h().ground;
        p.a_tensor = [[0.0; 3]; 3];
        let h =
            build_manifold_hamiltonian(&p, &FieldPoint::along_c(0.0), &Default::default()).unwrap();
        assert_eq!(h.frobenius_norm(), 0.0);
    }

    #[test]
    fn all_three_terms_present() {
        let c = PhysicalConstants::default();
        let p = DefectModel::alpha_4h().ground;
        let f = FieldPoint::along_c(100.0);
        let h = build_manifold_hamiltonian(&p, &f, &c).unwrap();
        // |+1/2,+7/2> diagonal: g mu_B B/2 - g_N mu_N B 7/2 + A_zz 7/4
        let expected = 1.748 * c.mu_b_over_h * 100.0 / 2.0 - p.g_n * c.mu_n_over_h * 100.0 * 3.5
            + 232.0 * 0.5 * 3.5;
        assert!((h.matrix()[(0, 0)].re - expected).abs() < 1e-9);
        // A_xx = -A_yy gives (A_xx/2)(S+I+ + S-I-): <+1/2,7/2|H|-1/2,5/2> = 82.5 sqrt(7)
        assert!((h.matrix()[(0, 9)].re - 82.5 * 7f64.sqrt()).abs() < 1e-9);
        assert_eq!(h.matrix()[(0, 8)].norm(), 0.0);
    }

    #[test]
    fn splitting_anchor_490mt() {
        let c = PhysicalConstants::default();
        let m = DefectModel::alpha_4h();
        let f = FieldPoint::along_c(490.0);
        let gs = zeeman_splitting(&m.ground, &f, &c).unwrap();
        assert!((gs - 1.748 * 13.996_244_9 * 490.0).abs() < 1e-9);
        assert!((gs - 11_988.1).abs() < 0.1, "{gs}");
        let es = zeeman_splitting(&m.excited, &f, &c).unwrap();
        assert!((es - 2.18 * 13.996_244_9 * 490.0).abs() < 1e-9, "{es}");
        assert_eq!(
            zeeman_splitting(&m.ground, &FieldPoint::along_c(0.0), &c).unwrap(),
            0.0
        );
    }

    #[test]
    fn transverse_field_rejected_by_splitting() {
        let m = DefectModel::alpha_4h();
        let f = FieldPoint::new([1.0, 0.0, 100.0]).unwrap();
        assert!(matches!(
            zeeman_splitting(&m.ground, &f, &Default::default()),
            Err(Error::UnsupportedGeometry(_))
        ));
    }

    #[test]
    fn non_finite_rejected() {
        let mut p = DefectModel::alpha_4h().ground;
        p.g_n = f64::NAN;
        assert!(matches!(
            build_manifold_hamiltonian(&p, &FieldPoint::along_c(1.0), &Default::default()),
            Err(Error::InvalidParameter(_))
        ));
    }
}
