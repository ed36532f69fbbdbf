use super::{check_finite, least_squares, linear_fit, log_grid, FitResult, LsqOptions, ParamSpec};
use crate::dynamics::RecoveryCurve;
use crate::error::{Error, Result};

fn check_curve(curve: &RecoveryCurve, needed: usize) -> Result<()> {
    if curve.tau.len() != curve.recovered.len() {
        return Err(Error::InvalidDimension(format!(
            "{} delays but {} values",
            curve.tau.len(),
            curve.recovered.len()
        )));
    }
    if curve.tau.len() < needed {
        return Err(Error::Arity {
            needed,
            got: curve.tau.len(),
        });
    }
    check_finite("delays", &curve.tau)?;
    check_finite("recovery values", &curve.recovered)?;
    if curve.tau.iter().any(|&t| t < 0.0) {
        return Err(Error::InvalidParameter("delays must be >= 0".into()));
    }
    Ok(())
}

fn rise(rate: f64, tau: f64) -> f64 {
    -(-rate * tau).exp_m1()
}

/// Rates worth trying: from a tenth of the inverse span to ten times the
/// inverse shortest positive delay.
fn rate_grid(tau: &[f64], n: usize) -> Vec<f64> {
    let t_max = tau.iter().cloned().fold(0.0, f64::max);
    let t_min = tau
        .iter()
        .cloned()
        .filter(|&t| t > 0.0)
        .fold(f64::INFINITY, f64::min);
    let lo = 0.1 / t_max.max(1e-300);
    let hi = (10.0 / t_min).max(lo * 10.0);
    log_grid(lo, hi, n)
}

/// `offset + a_1 (1 - exp(-gamma_1 tau))`.
pub fn fit_monoexponential(curve: &RecoveryCurve, opts: &LsqOptions) -> Result<FitResult> {
    check_curve(curve, 3)?;
    let tau = &curve.tau;
    let y = &curve.recovered;
    let ones = vec![1.0; tau.len()];
    let (mut best, mut best_rss) = (None, f64::INFINITY);
    for g in rate_grid(tau, 60) {
        let col: Vec<f64> = tau.iter().map(|&t| rise(g, t)).collect();
        if let Some((c, rss)) = linear_fit(&[ones.clone(), col], y) {
            if rss < best_rss {
                best_rss = rss;
                best = Some((g, c));
            }
        }
    }
    let (g0, c) = best.ok_or_else(|| Error::Domain("no starting point found".into()))?;
    let params = [
        ParamSpec::new("offset", "", c[0]),
        ParamSpec::new("a_1", "", c[1]),
        ParamSpec::new("gamma_1", "1/s", g0).lower(0.0),
    ];
    let model =
        |p: &[f64]| -> Vec<f64> { tau.iter().map(|&t| p[0] + p[1] * rise(p[2], t)).collect() };
    Ok(least_squares(model, &params, y, opts)?.named("monoexponential"))
}

/// `offset + a_0 (1 - exp(-gamma_0 tau)) + a_1 (1 - exp(-gamma_1 tau))`
/// with `gamma_0` the faster rate. Falls back to a single exponential when
/// the fast component is absent or the rates are closer than a factor 5.
pub fn fit_biexponential(curve: &RecoveryCurve, opts: &LsqOptions) -> Result<FitResult> {
    check_curve(curve, 6)?;
    let tau = &curve.tau;
    let y = &curve.recovered;
    let mono = fit_monoexponential(curve, opts)?;

    let ones = vec![1.0; tau.len()];
    let grid = rate_grid(tau, 40);
    let (mut best, mut best_rss) = (None, f64::INFINITY);
    for (i, &slow) in grid.iter().enumerate() {
        let slow_col: Vec<f64> = tau.iter().map(|&t| rise(slow, t)).collect();
        for &fast in &grid[i + 1..] {
            let fast_col: Vec<f64> = tau.iter().map(|&t| rise(fast, t)).collect();
            if let Some((c, rss)) = linear_fit(&[ones.clone(), fast_col, slow_col.clone()], y) {
                if rss < best_rss {
                    best_rss = rss;
                    best = Some((fast, slow, c));
                }
            }
        }
    }
    let Some((fast, slow, c)) = best else {
        return Ok(mono);
    };
    let params = [
        ParamSpec::new("offset", "", c[0]),
        ParamSpec::new("a_0", "", c[1]),
        ParamSpec::new("gamma_0", "1/s", fast).lower(0.0),
        ParamSpec::new("a_1", "", c[2]),
        ParamSpec::new("gamma_1", "1/s", slow).lower(0.0),
    ];
    let model = |p: &[f64]| -> Vec<f64> {
        tau.iter()
            .map(|&t| p[0] + p[1] * rise(p[2], t) + p[3] * rise(p[4], t))
            .collect()
    };
    let mut bi = least_squares(model, &params, y, opts)?.named("biexponential");
    if bi.value("gamma_0") < bi.value("gamma_1") {
        let ps = &mut bi.parameters;
        ps.swap(1, 3);
        ps.swap(2, 4);
        ps[1].name = "a_0".into();
        ps[2].name = "gamma_0".into();
        ps[3].name = "a_1".into();
        ps[4].name = "gamma_1".into();
    }

    let (g0, g1) = (bi.value("gamma_0"), bi.value("gamma_1"));
    let (a0, a1) = (bi.value("a_0"), bi.value("a_1"));
    let reason = if !bi.converged && mono.converged {
        Some("bi-exponential fit did not converge".to_string())
    } else if bi.rank_deficient {
        Some("bi-exponential fit is rank deficient".to_string())
    } else if a0.abs() <= 1e-6 * (a0.abs() + a1.abs()) || a0.abs() <= 2.0 * bi.sigma("a_0") {
        Some("fast amplitude is not significant".to_string())
    } else if g0 < 5.0 * g1 {
        Some(format!(
            "rates are not separable (gamma_0 / gamma_1 = {:.2})",
            g0 / g1
        ))
    } else {
        None
    };
    Ok(match reason {
        Some(why) => {
            let mut m = mono;
            m.warnings.push(format!("mono-exponential fallback: {why}"));
            m
        }
        None => bi,
    })
}

/// `offset + a (1 - exp(-(gamma tau)^beta))` with `beta` in `[0.3, 1]`.
/// Descriptive only.
pub fn fit_stretched_exponential(curve: &RecoveryCurve, opts: &LsqOptions) -> Result<FitResult> {
    check_curve(curve, 4)?;
    let tau = &curve.tau;
    let mono = fit_monoexponential(curve, opts)?;
    let params = [
        ParamSpec::new("offset", "", mono.value("offset")),
        ParamSpec::new("a", "", mono.value("a_1")),
        ParamSpec::new("gamma", "1/s", mono.value("gamma_1").max(1e-300)).lower(0.0),
        ParamSpec::new("beta", "", 0.8).bounded(0.3, 1.0),
    ];
    let model = |p: &[f64]| -> Vec<f64> {
        tau.iter()
            .map(|&t| p[0] + p[1] * -(-(p[2] * t).powf(p[3])).exp_m1())
            .collect()
    };
    Ok(least_squares(model, &params, &curve.recovered, opts)?.named("stretched_exponential"))
}

/// Model-free rate: inverse of the delay at which the curve has covered
/// `1 - 1/e` of the way from its first to its last sample.
pub fn one_over_e_rate(curve: &RecoveryCurve) -> Result<f64> {
    check_curve(curve, 2)?;
    let first = curve.recovered[0];
    let last = curve.recovered[curve.recovered.len() - 1];
    one_over_e_rate_between(curve, first, last)
}

/// As [`one_over_e_rate`] with explicit start and end levels.
pub fn one_over_e_rate_between(
    curve: &RecoveryCurve,
    baseline: f64,
    asymptote: f64,
) -> Result<f64> {
    check_curve(curve, 2)?;
    if !(baseline.is_finite() && asymptote.is_finite()) || baseline == asymptote {
        return Err(Error::Domain("baseline and asymptote must differ".into()));
    }
    let target = baseline + (1.0 - (-1.0f64).exp()) * (asymptote - baseline);
    let frac = |v: f64| (v - target) / (asymptote - baseline);
    let (t, y) = (&curve.tau, &curve.recovered);
    for k in 1..t.len() {
        let (a, b) = (frac(y[k - 1]), frac(y[k]));
        if a < 0.0 && b >= 0.0 {
            let crossing = t[k - 1] + (t[k] - t[k - 1]) * (-a) / (b - a);
            if crossing <= 0.0 {
                return Err(Error::OutOfRange("1/e crossing at zero delay".into()));
            }
            return Ok(1.0 / crossing);
        }
    }
    Err(Error::OutOfRange(
        "curve never crosses 1 - 1/e of its asymptote".into(),
    ))
}
