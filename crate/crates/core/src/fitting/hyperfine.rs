use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{least_squares, FitResult, LsqOptions, ParamSpec};
use crate::constants::PhysicalConstants;
use crate::error::{Error, Result};
use crate::model::{
    build_manifold_hamiltonian, eigensystem, DefectModel, EigenSystem, FieldPoint, ManifoldParams,
};
use crate::spectra::{pairs_of, transitions_between, Family, MapOptions};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PiSlopeFit {
    pub g_excited: f64,
    pub g_sigma: f64,
    /// MHz/mT.
    pub slope: f64,
    pub slope_sigma: f64,
    /// MHz.
    pub intercept: f64,
}

/// Excited-state g-factor from the linear field dependence of Π
/// detunings: `g_e = g_g + slope / mu_B`.
pub fn g_from_pi_slope(
    points: &[(f64, f64)],
    g_ground: f64,
    c: &PhysicalConstants,
) -> Result<PiSlopeFit> {
    let n = points.len();
    if n < 3 {
        return Err(Error::Arity { needed: 3, got: n });
    }
    if points
        .iter()
        .any(|(b, d)| !(b.is_finite() && d.is_finite()))
        || !g_ground.is_finite()
    {
        return Err(Error::InvalidParameter(
            "points and g_ground must be finite".into(),
        ));
    }
    let nf = n as f64;
    let mb = points.iter().map(|p| p.0).sum::<f64>() / nf;
    let md = points.iter().map(|p| p.1).sum::<f64>() / nf;
    let sxx: f64 = points.iter().map(|p| (p.0 - mb).powi(2)).sum();
    let sxy: f64 = points.iter().map(|p| (p.0 - mb) * (p.1 - md)).sum();
    let lo = points.iter().map(|p| p.0).fold(f64::INFINITY, f64::min);
    let hi = points.iter().map(|p| p.0).fold(f64::NEG_INFINITY, f64::max);
    if sxx <= 1e-24 * (1.0 + mb * mb) * nf {
        return Err(Error::RankDeficient("all field values coincide".into()));
    }
    if hi - lo < 50.0 {
        return Err(Error::InvalidParameter(format!(
            "field span {} mT is below the 50 mT minimum",
            hi - lo
        )));
    }
    let slope = sxy / sxx;
    let intercept = md - slope * mb;
    let rss: f64 = points
        .iter()
        .map(|p| (p.1 - intercept - slope * p.0).powi(2))
        .sum();
    let slope_sigma = if n > 2 {
        (rss / (nf - 2.0) / sxx).sqrt()
    } else {
        0.0
    };
    Ok(PiSlopeFit {
        g_excited: g_ground + slope / c.mu_b_over_h,
        g_sigma: slope_sigma / c.mu_b_over_h,
        slope,
        slope_sigma,
        intercept,
    })
}

/// One observed two-laser feature.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MapFeature {
    /// mT along the c-axis.
    pub b: f64,
    /// MHz.
    pub detuning: f64,
    pub family: Family,
}

/// The `per_family` strongest distinct features of each requested family
/// at each field.
pub fn synthesize_features(
    model: &DefectModel,
    fields: &[f64],
    families: &[Family],
    per_family: usize,
    c: &PhysicalConstants,
    opts: &MapOptions,
) -> Result<Vec<MapFeature>> {
    let mut out = Vec::new();
    for &b in fields {
        let f = FieldPoint::new([0.0, 0.0, b])?;
        let ts = crate::spectra::enumerate_transitions(model, &f, c, opts)?;
        let pairs = pairs_of(&ts, opts);
        for &family in families {
            let mut of: Vec<_> = pairs.iter().filter(|p| p.family == family).collect();
            of.sort_by(|a, b| {
                b.signed_amplitude
                    .abs()
                    .total_cmp(&a.signed_amplitude.abs())
                    .then(a.two_photon_detuning.total_cmp(&b.two_photon_detuning))
            });
            let mut taken: Vec<f64> = Vec::new();
            for p in of {
                if taken.len() >= per_family {
                    break;
                }
                if taken
                    .iter()
                    .any(|d| (d - p.two_photon_detuning).abs() < 0.01)
                {
                    continue;
                }
                taken.push(p.two_photon_detuning);
                out.push(MapFeature {
                    b,
                    detuning: p.two_photon_detuning,
                    family,
                });
            }
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct HyperfineFitOptions {
    /// Number of starting points, the first being the supplied guess.
    pub multi_start: usize,
    pub lsq: LsqOptions,
    pub map: MapOptions,
    /// Residual, MHz, for a feature whose family has no pair at its field.
    pub miss_penalty: f64,
}

impl Default for HyperfineFitOptions {
    fn default() -> Self {
        Self {
            multi_start: 8,
            // Π lines at high field only see sqrt(A_xz^2 + A_zz^2); the
            // nuclear Zeeman term separates the two at the percent level.
            lsq: LsqOptions {
                rank_rtol: 5e-2,
                ..LsqOptions::default()
            },
            map: MapOptions::default(),
            miss_penalty: 1000.0,
        }
    }
}

fn excited_with(base: &ManifoldParams, p: &[f64]) -> ManifoldParams {
    let mut es = base.clone();
    es.a_tensor[0][2] = p[0];
    es.a_tensor[2][0] = p[0];
    es.a_tensor[2][2] = p[1];
    es.g_tensor[2][2] = p[2];
    es
}

/// Deterministic low-discrepancy offsets in `[-1, 1]`.
fn halton(k: usize, base: usize) -> f64 {
    let (mut f, mut r, mut i) = (1.0, 0.0, k);
    while i > 0 {
        f /= base as f64;
        r += f * (i % base) as f64;
        i /= base;
    }
    2.0 * r - 1.0
}

/// Refines the excited-state `A_xz`, `A_zz` and `g_zz` against feature
/// positions with the ground state held fixed. Each feature is matched to
/// the nearest model pair of its family at its field.
pub fn fit_hyperfine_from_map(
    features: &[MapFeature],
    ground: &ManifoldParams,
    excited: &ManifoldParams,
    c: &PhysicalConstants,
    opts: &HyperfineFitOptions,
) -> Result<FitResult> {
    if features.len() < 3 {
        return Err(Error::Arity {
            needed: 3,
            got: features.len(),
        });
    }
    if features
        .iter()
        .any(|f| !(f.b.is_finite() && f.detuning.is_finite()))
    {
        return Err(Error::InvalidParameter("features must be finite".into()));
    }
    ground.validate()?;
    excited.validate()?;
    opts.map.validate()?;
    if opts.multi_start == 0 {
        return Err(Error::InvalidParameter(
            "multi_start must be at least 1".into(),
        ));
    }

    let mut fields: Vec<f64> = features.iter().map(|f| f.b).collect();
    fields.sort_by(f64::total_cmp);
    fields.dedup();
    let slot: Vec<usize> = features
        .iter()
        .map(|f| fields.iter().position(|&b| b == f.b).expect("field listed"))
        .collect();
    let ground_states: Vec<EigenSystem> = fields
        .par_iter()
        .map(|&b| {
            eigensystem(
                &build_manifold_hamiltonian(ground, &FieldPoint::new([0.0, 0.0, b])?, c)?,
                None,
            )
        })
        .collect::<Result<_>>()?;

    let model = |p: &[f64]| -> Vec<f64> {
        let es = excited_with(excited, p);
        let mut pred = vec![f64::NAN; features.len()];
        for (k, &b) in fields.iter().enumerate() {
            let pairs = FieldPoint::new([0.0, 0.0, b])
                .and_then(|f| build_manifold_hamiltonian(&es, &f, c))
                .and_then(|h| eigensystem(&h, None))
                .and_then(|e| transitions_between(&ground_states[k], &e, &opts.map))
                .map(|ts| pairs_of(&ts, &opts.map));
            let Ok(pairs) = pairs else {
                continue;
            };
            for (i, f) in features.iter().enumerate().filter(|(i, _)| slot[*i] == k) {
                let nearest = pairs
                    .iter()
                    .filter(|q| q.family == f.family)
                    .map(|q| q.two_photon_detuning)
                    .min_by(|a, b| (a - f.detuning).abs().total_cmp(&(b - f.detuning).abs()));
                pred[i] = nearest.unwrap_or(f.detuning + opts.miss_penalty);
            }
        }
        pred
    };
    let data: Vec<f64> = features.iter().map(|f| f.detuning).collect();

    let x0 = [
        excited.a_tensor[0][2],
        excited.a_tensor[2][2],
        excited.g_zz(),
    ];
    let mut starts = vec![x0.to_vec()];
    let pi: Vec<(f64, f64)> = features
        .iter()
        .filter(|f| f.family == Family::Pi)
        .map(|f| (f.b, f.detuning))
        .collect();
    if let Ok(s) = g_from_pi_slope(&pi, ground.g_zz(), c) {
        if (s.g_excited - x0[2]).abs() > 1e-9 {
            starts.push(vec![x0[0], x0[1], s.g_excited]);
        }
    }
    let mut k = 1;
    while starts.len() < opts.multi_start {
        let g = starts.get(1).map_or(x0[2], |s| s[2]);
        starts.push(vec![
            x0[0] * (1.0 + 0.25 * halton(k, 2)),
            x0[1] * (1.0 + 0.25 * halton(k, 3)),
            g * (1.0 + 0.05 * halton(k, 5)),
        ]);
        k += 1;
    }
    starts.truncate(opts.multi_start);

    let runs: Vec<Result<FitResult>> = starts
        .par_iter()
        .map(|s| {
            let params = [
                ParamSpec::new("a_xz", "MHz", s[0]),
                ParamSpec::new("a_zz", "MHz", s[1]),
                ParamSpec::new("g_e", "", s[2]).lower(0.0),
            ];
            least_squares(model, &params, &data, &opts.lsq)
        })
        .collect();
    let mut best: Option<FitResult> = None;
    let mut first_err = None;
    for r in runs {
        match r {
            Ok(r) => {
                let better = best
                    .as_ref()
                    .is_none_or(|b| r.residual_norm < b.residual_norm * (1.0 - 1e-12));
                if better {
                    best = Some(r);
                }
            }
            Err(e) => {
                first_err.get_or_insert(e);
            }
        }
    }
    let mut best = match (best, first_err) {
        (Some(b), _) => b.named("excited_hyperfine"),
        (None, Some(e)) => return Err(e),
        (None, None) => unreachable!("at least one start"),
    };
    if features.len() < 10 {
        best.warnings.push(format!(
            "only {} features; at least 10 spanning low and high field are recommended",
            features.len()
        ));
    }
    if best.rank_deficient {
        log::warn!(
            "hyperfine fit is rank deficient: {}",
            best.unidentified.join(", ")
        );
    }
    Ok(best)
}
