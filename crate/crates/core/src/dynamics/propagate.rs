use nalgebra::{DMatrix, DVector};

use super::{LevelSystem, RateParams, N_LEVELS};
use crate::error::{Error, Result};

/// Matrix exponential by scaling and squaring with a Taylor series.
///
/// Rate generators have non-negative off-diagonal entries; for those the
/// diagonal is shifted out first so every series term and every squaring
/// works on non-negative matrices and no cancellation occurs.
pub fn expm(a: &DMatrix<f64>) -> DMatrix<f64> {
    exp_with_conservation(a, 0)
}

/// As [`expm`], but the first `conserved` columns are rescaled after every
/// squaring so their first `conserved` rows sum to one. Without this the
/// column-sum error doubles with each squaring.
pub(crate) fn exp_with_conservation(a: &DMatrix<f64>, conserved: usize) -> DMatrix<f64> {
    let n = a.nrows();
    let norm = (0..n)
        .map(|j| a.column(j).iter().map(|x| x.abs()).sum::<f64>())
        .fold(0.0, f64::max);
    let squarings = if norm > 0.5 {
        (norm / 0.5).log2().ceil() as i32
    } else {
        0
    };
    let mut b = a / 2f64.powi(squarings);
    let metzler = (0..n).all(|i| (0..n).all(|j| i == j || b[(i, j)] >= 0.0));
    let shift = if metzler {
        (0..n).map(|i| -b[(i, i)]).fold(0.0, f64::max)
    } else {
        0.0
    };
    for i in 0..n {
        b[(i, i)] += shift;
    }
    let mut sum = DMatrix::<f64>::identity(n, n);
    let mut term = DMatrix::<f64>::identity(n, n);
    // ||b|| <= 1, so 40 terms leave a remainder far below 1e-16
    for k in 1..=40 {
        term = &term * &b / k as f64;
        sum += &term;
        if term.abs().max() < 1e-18 * sum.abs().max() {
            break;
        }
    }
    sum *= (-shift).exp();
    let fix = |p: &mut DMatrix<f64>| {
        for j in 0..conserved {
            let s: f64 = (0..conserved).map(|i| p[(i, j)]).sum();
            if s > 0.0 {
                for i in 0..conserved {
                    p[(i, j)] /= s;
                }
            }
        }
    };
    fix(&mut sum);
    for _ in 0..squarings {
        sum = &sum * &sum;
        fix(&mut sum);
    }
    sum
}

/// Rate matrix extended by one row that accumulates emitted photons.
fn augmented(m: &DMatrix<f64>, p: &RateParams) -> DMatrix<f64> {
    let mut a = DMatrix::<f64>::zeros(N_LEVELS + 1, N_LEVELS + 1);
    a.view_mut((0, 0), (N_LEVELS, N_LEVELS)).copy_from(m);
    let f = p.fluorescence_rate();
    a[(N_LEVELS, 2)] = f;
    a[(N_LEVELS, 3)] = f;
    a
}

fn check_generator(m: &DMatrix<f64>) -> Result<()> {
    if m.nrows() != N_LEVELS || m.ncols() != N_LEVELS {
        return Err(Error::InvalidDimension(format!(
            "rate matrix must be {N_LEVELS}x{N_LEVELS}, got {}x{}",
            m.nrows(),
            m.ncols()
        )));
    }
    Ok(())
}

/// Rescales to the reference total and clamps round-off negatives.
fn tidy(pops: &mut [f64; N_LEVELS], total: f64) -> Result<()> {
    for x in pops.iter_mut() {
        if *x < 0.0 {
            if *x < -1e-9 {
                return Err(Error::Integration(format!(
                    "population fell to {x}; propagator is inaccurate"
                )));
            }
            if *x < -1e-12 {
                log::debug!("clamping population {x} to zero");
            }
            *x = 0.0;
        }
    }
    let s: f64 = pops.iter().sum();
    if s > 0.0 {
        for x in pops.iter_mut() {
            *x *= total / s;
        }
    }
    Ok(())
}

/// Propagates `sys` under the constant generator `m` for `duration`
/// seconds, returning the final state and the photons emitted in each of
/// `bins` equal time bins.
pub fn evolve(
    sys: &LevelSystem,
    m: &DMatrix<f64>,
    p: &RateParams,
    duration: f64,
    bins: usize,
) -> Result<(LevelSystem, Vec<f64>)> {
    check_generator(m)?;
    if !(duration >= 0.0 && duration.is_finite()) {
        return Err(Error::InvalidParameter(format!(
            "duration must be finite and >= 0, got {duration}"
        )));
    }
    if bins == 0 {
        return Err(Error::InvalidParameter(
            "at least one time bin is required".into(),
        ));
    }
    if duration == 0.0 {
        return Ok((*sys, vec![0.0; bins]));
    }
    let total = sys.total();
    let dt = duration / bins as f64;
    let prop = exp_with_conservation(&(augmented(m, p) * dt), N_LEVELS);
    let mut state = DVector::<f64>::zeros(N_LEVELS + 1);
    for (k, &x) in sys.populations.iter().enumerate() {
        state[k] = x;
    }
    let mut photons = Vec::with_capacity(bins);
    let mut pops = sys.populations;
    for _ in 0..bins {
        state[N_LEVELS] = 0.0;
        state = &prop * &state;
        photons.push(state[N_LEVELS].max(0.0));
        for k in 0..N_LEVELS {
            pops[k] = state[k];
        }
        tidy(&mut pops, total)?;
        for k in 0..N_LEVELS {
            state[k] = pops[k];
        }
    }
    Ok((LevelSystem { populations: pops }, photons))
}

/// Dormand-Prince 5(4) integration of the same system; used to
/// cross-check [`evolve`]. Returns the final state and the total photons.
pub fn evolve_adaptive(
    sys: &LevelSystem,
    m: &DMatrix<f64>,
    p: &RateParams,
    duration: f64,
) -> Result<(LevelSystem, f64)> {
    check_generator(m)?;
    let a = augmented(m, p);
    let n = N_LEVELS + 1;
    let mut y = DVector::<f64>::zeros(n);
    for (k, &x) in sys.populations.iter().enumerate() {
        y[k] = x;
    }
    const A: [[f64; 6]; 7] = [
        [0.0; 6],
        [1.0 / 5.0, 0.0, 0.0, 0.0, 0.0, 0.0],
        [3.0 / 40.0, 9.0 / 40.0, 0.0, 0.0, 0.0, 0.0],
        [44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0, 0.0, 0.0, 0.0],
        [
            19372.0 / 6561.0,
            -25360.0 / 2187.0,
            64448.0 / 6561.0,
            -212.0 / 729.0,
            0.0,
            0.0,
        ],
        [
            9017.0 / 3168.0,
            -355.0 / 33.0,
            46732.0 / 5247.0,
            49.0 / 176.0,
            -5103.0 / 18656.0,
            0.0,
        ],
        [
            35.0 / 384.0,
            0.0,
            500.0 / 1113.0,
            125.0 / 192.0,
            -2187.0 / 6784.0,
            11.0 / 84.0,
        ],
    ];
    const B5: [f64; 7] = [
        35.0 / 384.0,
        0.0,
        500.0 / 1113.0,
        125.0 / 192.0,
        -2187.0 / 6784.0,
        11.0 / 84.0,
        0.0,
    ];
    const B4: [f64; 7] = [
        5179.0 / 57600.0,
        0.0,
        7571.0 / 16695.0,
        393.0 / 640.0,
        -92097.0 / 339200.0,
        187.0 / 2100.0,
        1.0 / 40.0,
    ];
    let (atol, rtol) = (1e-13, 1e-11);
    let mut t = 0.0;
    let mut h = duration / 1000.0;
    let h_min = duration * 1e-16;
    let mut steps = 0usize;
    while t < duration {
        if h < h_min {
            return Err(Error::Integration(format!(
                "step size collapsed to {h:e} s at t = {t:e} s"
            )));
        }
        if steps > 50_000_000 {
            return Err(Error::Integration(
                "adaptive integrator exceeded its step budget".into(),
            ));
        }
        let h_try = h.min(duration - t);
        let mut k: Vec<DVector<f64>> = Vec::with_capacity(7);
        for row in &A {
            let mut yi = y.clone();
            for (kj, &aij) in k.iter().zip(row) {
                if aij != 0.0 {
                    yi += kj * (h_try * aij);
                }
            }
            k.push(&a * yi);
        }
        let mut y5 = y.clone();
        let mut y4 = y.clone();
        for i in 0..7 {
            y5 += &k[i] * (h_try * B5[i]);
            y4 += &k[i] * (h_try * B4[i]);
        }
        let err = (0..n)
            .map(|i| ((y5[i] - y4[i]) / (atol + rtol * y5[i].abs().max(y[i].abs()))).powi(2))
            .sum::<f64>()
            / n as f64;
        let err = err.sqrt();
        steps += 1;
        if err <= 1.0 {
            t += h_try;
            y = y5;
        }
        let factor = if err == 0.0 {
            5.0
        } else {
            (0.9 * err.powf(-0.2)).clamp(0.2, 5.0)
        };
        h = h_try * factor;
    }
    let mut pops = [0.0; N_LEVELS];
    for (k, x) in pops.iter_mut().enumerate() {
        *x = y[k];
    }
    Ok((LevelSystem { populations: pops }, y[N_LEVELS]))
}

/// Stationary distribution of `m`, normalized to unit total. Levels with
/// no couplings at all are left empty.
pub fn steady_state(m: &DMatrix<f64>) -> Result<LevelSystem> {
    check_generator(m)?;
    let live: Vec<usize> = (0..N_LEVELS)
        .filter(|&k| (0..N_LEVELS).any(|j| j != k && (m[(k, j)] != 0.0 || m[(j, k)] != 0.0)))
        .collect();
    let mut pops = [0.0; N_LEVELS];
    if live.is_empty() {
        return Err(Error::RankDeficient("generator couples no levels".into()));
    }
    let n = live.len();
    let mut a = DMatrix::<f64>::from_fn(n, n, |i, j| m[(live[i], live[j])]);
    for j in 0..n {
        a[(n - 1, j)] = 1.0;
    }
    let mut rhs = DVector::<f64>::zeros(n);
    rhs[n - 1] = 1.0;
    let lu = a.full_piv_lu();
    if !lu.is_invertible() {
        return Err(Error::RankDeficient(
            "generator has more than one stationary state".into(),
        ));
    }
    let x = lu.solve(&rhs).ok_or_else(|| {
        Error::RankDeficient("generator has more than one stationary state".into())
    })?;
    for (i, &k) in live.iter().enumerate() {
        pops[k] = if x[i].abs() < 1e-15 { 0.0 } else { x[i] };
    }
    Ok(LevelSystem { populations: pops })
}
