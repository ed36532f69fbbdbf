use std::cell::Cell;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::{FitParameter, FitResult};
use crate::error::{Error, Result};

/// One model parameter: starting value, optional bounds, units.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamSpec {
    pub name: String,
    pub unit: String,
    pub initial: f64,
    pub lower: Option<f64>,
    pub upper: Option<f64>,
    /// Held at `initial` and reported with zero uncertainty.
    pub fixed: bool,
}

impl ParamSpec {
    pub fn new(name: &str, unit: &str, initial: f64) -> Self {
        Self {
            name: name.into(),
            unit: unit.into(),
            initial,
            lower: None,
            upper: None,
            fixed: false,
        }
    }

    pub fn lower(mut self, lo: f64) -> Self {
        self.lower = Some(lo);
        self
    }

    pub fn upper(mut self, hi: f64) -> Self {
        self.upper = Some(hi);
        self
    }

    pub fn bounded(self, lo: f64, hi: f64) -> Self {
        self.lower(lo).upper(hi)
    }

    pub fn fixed(mut self) -> Self {
        self.fixed = true;
        self
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LsqOptions {
    pub max_evaluations: usize,
    /// Relative parameter change that counts as converged.
    pub xtol: f64,
    /// Run the simplex stage before Gauss-Newton.
    pub simplex: bool,
    /// Run the damped Gauss-Newton stage after the simplex.
    pub refine: bool,
    /// Per-point standard deviations; residuals are divided by them.
    pub sigma: Option<Vec<f64>>,
    /// Singular values below this fraction of the largest (after column
    /// scaling) count as rank deficiency.
    pub rank_rtol: f64,
}

impl Default for LsqOptions {
    fn default() -> Self {
        Self {
            max_evaluations: 10_000,
            xtol: 1e-8,
            simplex: true,
            refine: true,
            sigma: None,
            rank_rtol: 1e-8,
        }
    }
}

#[derive(Debug, Clone, Copy)]
enum Transform {
    Free,
    Lower(f64),
    Upper(f64),
    Both(f64, f64),
}

impl Transform {
    fn of(p: &ParamSpec) -> Result<Self> {
        let t = match (p.lower, p.upper) {
            (None, None) => Transform::Free,
            (Some(lo), None) => Transform::Lower(lo),
            (None, Some(hi)) => Transform::Upper(hi),
            (Some(lo), Some(hi)) => {
                if lo.is_nan() || hi.is_nan() || hi <= lo {
                    return Err(Error::InvalidParameter(format!(
                        "parameter {} has empty bounds [{lo}, {hi}]",
                        p.name
                    )));
                }
                Transform::Both(lo, hi)
            }
        };
        Ok(t)
    }

    fn to_natural(self, u: f64) -> f64 {
        match self {
            Transform::Free => u,
            Transform::Lower(lo) => lo + u.exp(),
            Transform::Upper(hi) => hi - u.exp(),
            Transform::Both(lo, hi) => lo + (hi - lo) / (1.0 + (-u).exp()),
        }
    }

    /// Inverse transform; values on a bound are nudged inside.
    fn to_internal(self, x: f64) -> f64 {
        let nudge = |v: f64| 1e-12 * v.abs().max(1.0);
        match self {
            Transform::Free => x,
            Transform::Lower(lo) => (x - lo).max(nudge(lo)).ln(),
            Transform::Upper(hi) => (hi - x).max(nudge(hi)).ln(),
            Transform::Both(lo, hi) => {
                let eps = 1e-12;
                let t = ((x - lo) / (hi - lo)).clamp(eps, 1.0 - eps);
                (t / (1.0 - t)).ln()
            }
        }
    }

    /// `du/dx` at natural value `x`.
    fn derivative(self, x: f64) -> f64 {
        match self {
            Transform::Free => 1.0,
            Transform::Lower(lo) => 1.0 / (x - lo),
            Transform::Upper(hi) => 1.0 / (hi - x),
            Transform::Both(lo, hi) => (hi - lo) / ((x - lo) * (hi - x)),
        }
    }

    fn contains(self, x: f64) -> bool {
        match self {
            Transform::Free => true,
            Transform::Lower(lo) => x >= lo,
            Transform::Upper(hi) => x <= hi,
            Transform::Both(lo, hi) => x >= lo && x <= hi,
        }
    }
}

struct Problem<'a, F> {
    model: &'a F,
    data: &'a [f64],
    weights: Vec<f64>,
    specs: &'a [ParamSpec],
    free: Vec<usize>,
    transforms: Vec<Transform>,
    evaluations: Cell<usize>,
}

impl<F: Fn(&[f64]) -> Vec<f64>> Problem<'_, F> {
    fn natural(&self, u: &[f64]) -> Vec<f64> {
        let mut x: Vec<f64> = self.specs.iter().map(|p| p.initial).collect();
        for (k, &i) in self.free.iter().enumerate() {
            x[i] = self.transforms[k].to_natural(u[k]);
        }
        x
    }

    fn residuals_at_natural(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.evaluations.set(self.evaluations.get() + 1);
        let y = (self.model)(x);
        if y.len() != self.data.len() {
            return Err(Error::InvalidDimension(format!(
                "model returned {} values for {} data points",
                y.len(),
                self.data.len()
            )));
        }
        Ok(y.iter()
            .zip(self.data)
            .zip(&self.weights)
            .map(|((m, d), w)| (m - d) * w)
            .collect())
    }

    fn residuals(&self, u: &[f64]) -> Result<Vec<f64>> {
        self.residuals_at_natural(&self.natural(u))
    }

    fn cost(&self, u: &[f64]) -> Result<f64> {
        let r = self.residuals(u)?;
        let c: f64 = r.iter().map(|v| v * v).sum();
        Ok(if c.is_finite() { c } else { f64::INFINITY })
    }

    fn budget_left(&self, max: usize) -> bool {
        self.evaluations.get() < max
    }

    /// Central-difference Jacobian in internal coordinates.
    fn jacobian(&self, u: &[f64]) -> Result<DMatrix<f64>> {
        let n = self.data.len();
        let mut j = DMatrix::<f64>::zeros(n, u.len());
        let mut v = u.to_vec();
        for k in 0..u.len() {
            let h = 1e-6 * u[k].abs().max(1.0);
            v[k] = u[k] + h;
            let rp = self.residuals(&v)?;
            v[k] = u[k] - h;
            let rm = self.residuals(&v)?;
            v[k] = u[k];
            for i in 0..n {
                let d = (rp[i] - rm[i]) / (2.0 * h);
                j[(i, k)] = if d.is_finite() { d } else { 0.0 };
            }
        }
        Ok(j)
    }
}

/// Nelder-Mead on the internal coordinates. Returns the best vertex and
/// whether the simplex collapsed to within `tol`.
fn nelder_mead<F: Fn(&[f64]) -> Vec<f64>>(
    prob: &Problem<F>,
    u0: &[f64],
    tol: f64,
    max_evals: usize,
) -> Result<(Vec<f64>, bool)> {
    let n = u0.len();
    let mut simplex = vec![u0.to_vec()];
    for k in 0..n {
        let mut v = u0.to_vec();
        v[k] += if u0[k] != 0.0 {
            0.05 * u0[k].abs().max(0.05)
        } else {
            0.00025
        };
        simplex.push(v);
    }
    let mut f: Vec<f64> = simplex
        .iter()
        .map(|v| prob.cost(v))
        .collect::<Result<_>>()?;
    let mut converged = false;
    while prob.budget_left(max_evals) {
        let mut order: Vec<usize> = (0..=n).collect();
        order.sort_by(|&a, &b| f[a].total_cmp(&f[b]));
        simplex = order.iter().map(|&i| simplex[i].clone()).collect();
        f = order.iter().map(|&i| f[i]).collect();

        let scale = 1.0 + simplex[0].iter().fold(0.0_f64, |m, v| m.max(v.abs()));
        let diameter = simplex[1..]
            .iter()
            .flat_map(|v| v.iter().zip(&simplex[0]).map(|(a, b)| (a - b).abs()))
            .fold(0.0_f64, f64::max);
        if diameter <= tol * scale {
            converged = true;
            break;
        }

        let centroid: Vec<f64> = (0..n)
            .map(|k| simplex[..n].iter().map(|v| v[k]).sum::<f64>() / n as f64)
            .collect();
        let along = |t: f64| -> Vec<f64> {
            centroid
                .iter()
                .zip(&simplex[n])
                .map(|(c, w)| c + t * (c - w))
                .collect()
        };
        let xr = along(1.0);
        let fr = prob.cost(&xr)?;
        if fr < f[0] {
            let xe = along(2.0);
            let fe = prob.cost(&xe)?;
            if fe < fr {
                simplex[n] = xe;
                f[n] = fe;
            } else {
                simplex[n] = xr;
                f[n] = fr;
            }
        } else if fr < f[n - 1] {
            simplex[n] = xr;
            f[n] = fr;
        } else {
            let (xc, fc) = if fr < f[n] {
                let xc = along(0.5);
                let fc = prob.cost(&xc)?;
                (xc, fc)
            } else {
                let xc = along(-0.5);
                let fc = prob.cost(&xc)?;
                (xc, fc)
            };
            if fc < f[n].min(fr) {
                simplex[n] = xc;
                f[n] = fc;
            } else {
                for i in 1..=n {
                    let v: Vec<f64> = simplex[i]
                        .iter()
                        .zip(&simplex[0])
                        .map(|(a, b)| b + 0.5 * (a - b))
                        .collect();
                    f[i] = prob.cost(&v)?;
                    simplex[i] = v;
                }
            }
        }
    }
    let best = (0..=n).min_by(|&a, &b| f[a].total_cmp(&f[b])).unwrap_or(0);
    Ok((simplex[best].clone(), converged))
}

/// Levenberg-Marquardt iterations. Returns the final point, whether the
/// step criterion was met, and the number of iterations.
fn levenberg_marquardt<F: Fn(&[f64]) -> Vec<f64>>(
    prob: &Problem<F>,
    u0: &[f64],
    xtol: f64,
    max_evals: usize,
) -> Result<(Vec<f64>, bool, usize)> {
    let mut u = u0.to_vec();
    let mut cost = prob.cost(&u)?;
    let mut lambda = 1e-3;
    let mut iterations = 0;
    let p = u.len();
    while prob.budget_left(max_evals) {
        iterations += 1;
        if cost == 0.0 {
            return Ok((u, true, iterations));
        }
        let r = DVector::from_vec(prob.residuals(&u)?);
        let j = prob.jacobian(&u)?;
        let jtj = j.transpose() * &j;
        let g = j.transpose() * &r;
        if g.amax() <= 1e-15 * cost.max(1e-300) || g.amax() == 0.0 {
            return Ok((u, true, iterations));
        }
        let mut accepted = false;
        for _ in 0..40 {
            let mut a = jtj.clone();
            for k in 0..p {
                a[(k, k)] += lambda * jtj[(k, k)].max(1e-12);
            }
            let step = match a.clone().cholesky() {
                Some(ch) => ch.solve(&(-&g)),
                None => match a.lu().solve(&(-&g)) {
                    Some(s) => s,
                    None => {
                        lambda *= 10.0;
                        continue;
                    }
                },
            };
            let trial: Vec<f64> = u.iter().zip(step.iter()).map(|(a, b)| a + b).collect();
            let c = prob.cost(&trial)?;
            if c <= cost {
                let scale = u.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
                let small = step.amax() <= xtol * (scale + xtol);
                u = trial;
                let improved = cost - c;
                cost = c;
                lambda = (lambda / 3.0).max(1e-12);
                accepted = true;
                if small || improved <= 1e-15 * cost {
                    return Ok((u, true, iterations));
                }
                break;
            }
            lambda *= 4.0;
            if !prob.budget_left(max_evals) {
                break;
            }
        }
        if !accepted {
            // no descent direction left at machine precision
            return Ok((u, true, iterations));
        }
    }
    Ok((u, false, iterations))
}

/// Bounded nonlinear least squares: a Nelder-Mead stage followed by damped
/// Gauss-Newton. Bounds are enforced by smooth transforms. Uncertainties
/// come from the linearized covariance `s^2 (J^T J)^-1` at the optimum with
/// `s^2` the reduced chi-square; parameters along a null direction of `J`
/// are listed as unidentified and given infinite sigma.
pub fn least_squares<F: Fn(&[f64]) -> Vec<f64>>(
    model: F,
    params: &[ParamSpec],
    data: &[f64],
    opts: &LsqOptions,
) -> Result<FitResult> {
    if data.is_empty() {
        return Err(Error::Arity { needed: 1, got: 0 });
    }
    if data.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidParameter("data must be finite".into()));
    }
    let weights = match &opts.sigma {
        None => vec![1.0; data.len()],
        Some(s) => {
            if s.len() != data.len() {
                return Err(Error::InvalidDimension(format!(
                    "{} sigmas for {} data points",
                    s.len(),
                    data.len()
                )));
            }
            if s.iter().any(|v| !(*v > 0.0 && v.is_finite())) {
                return Err(Error::InvalidParameter("sigmas must be positive".into()));
            }
            s.iter().map(|v| 1.0 / v).collect()
        }
    };
    let mut free = Vec::new();
    let mut transforms = Vec::new();
    for (i, p) in params.iter().enumerate() {
        if !p.initial.is_finite() {
            return Err(Error::InvalidParameter(format!(
                "initial {} is not finite",
                p.name
            )));
        }
        let t = Transform::of(p)?;
        if !t.contains(p.initial) {
            return Err(Error::InvalidParameter(format!(
                "initial {} = {} lies outside its bounds",
                p.name, p.initial
            )));
        }
        if !p.fixed {
            free.push(i);
            transforms.push(t);
        }
    }
    let prob = Problem {
        model: &model,
        data,
        weights,
        specs: params,
        free,
        transforms,
        evaluations: Cell::new(0),
    };
    let u0: Vec<f64> = prob
        .free
        .iter()
        .zip(&prob.transforms)
        .map(|(&i, t)| t.to_internal(params[i].initial))
        .collect();
    let mut warnings = Vec::new();

    let (mut u, mut converged, mut iterations) = (u0.clone(), false, 0);
    if !u.is_empty() {
        if opts.simplex {
            let tol = if opts.refine { 1e-4 } else { opts.xtol };
            let (best, ok) = nelder_mead(&prob, &u0, tol, opts.max_evaluations)?;
            u = best;
            converged = ok;
        }
        if opts.refine {
            let (best, ok, it) = levenberg_marquardt(&prob, &u, opts.xtol, opts.max_evaluations)?;
            u = best;
            converged = ok;
            iterations = it;
        }
    } else {
        converged = true;
    }
    if !converged {
        warnings.push(format!(
            "stopped after {} evaluations without meeting the convergence criterion",
            prob.evaluations.get()
        ));
    }

    let x = prob.natural(&u);
    let r = prob.residuals_at_natural(&x)?;
    let chi2: f64 = r.iter().map(|v| v * v).sum();
    let n = data.len();
    let p = prob.free.len();

    let mut sigma = vec![0.0; params.len()];
    let mut unidentified = Vec::new();
    if p > 0 {
        let ju = prob.jacobian(&u)?;
        let mut jx = ju.clone();
        for (k, &i) in prob.free.iter().enumerate() {
            let d = prob.transforms[k].derivative(x[i]);
            for row in 0..n {
                jx[(row, k)] *= d;
            }
        }
        let s2 = if n > p {
            chi2 / (n - p) as f64
        } else {
            warnings.push("no degrees of freedom left; uncertainties set to zero".into());
            0.0
        };
        let norms: Vec<f64> = (0..p).map(|k| jx.column(k).norm()).collect();
        let mut scaled = jx.clone();
        for (k, &nk) in norms.iter().enumerate() {
            if nk > 0.0 {
                scaled.column_mut(k).scale_mut(1.0 / nk);
            }
        }
        let svd = scaled.svd(false, true);
        let v_t = svd.v_t.expect("requested V^T");
        let s_max = svd.singular_values.max();
        let mut null = vec![norms.iter().all(|&v| v == 0.0); p];
        let mut cov = DMatrix::<f64>::zeros(p, p);
        for (m, &s) in svd.singular_values.iter().enumerate() {
            let row = v_t.row(m);
            if s <= opts.rank_rtol * s_max || s == 0.0 {
                for k in 0..p {
                    if row[k].abs() > 0.1 {
                        null[k] = true;
                    }
                }
                continue;
            }
            for a in 0..p {
                for b in 0..p {
                    cov[(a, b)] += row[a] * row[b] / (s * s);
                }
            }
        }
        for (k, &i) in prob.free.iter().enumerate() {
            if norms[k] == 0.0 || null[k] {
                sigma[i] = f64::INFINITY;
                unidentified.push(params[i].name.clone());
            } else {
                sigma[i] = (s2 * cov[(k, k)]).sqrt() / norms[k];
            }
        }
        if unidentified.len() == p {
            converged = false;
            warnings.push("model is insensitive to every free parameter".into());
        } else if !unidentified.is_empty() {
            warnings.push(format!(
                "rank deficient; unidentified: {}",
                unidentified.join(", ")
            ));
        }
    }

    Ok(FitResult {
        model: String::from("custom"),
        parameters: params
            .iter()
            .zip(x.iter().zip(&sigma))
            .map(|(p, (&value, &s))| FitParameter {
                name: p.name.clone(),
                unit: p.unit.clone(),
                value,
                sigma: s,
            })
            .collect(),
        residual_norm: chi2.sqrt(),
        converged,
        evaluations: prob.evaluations.get(),
        iterations,
        rank_deficient: !unidentified.is_empty(),
        unidentified,
        warnings,
    })
}
