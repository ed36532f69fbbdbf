use serde::{Deserialize, Serialize};

use super::{enumerate_transitions, pairs_of, Family, MapOptions};
use crate::constants::PhysicalConstants;
use crate::error::Result;
use crate::model::{Branch, DefectModel, FieldPoint};

/// One Π feature: the spin-up and spin-down branch-conserving transitions
/// of a single nuclear projection.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PiLine {
    /// mT.
    pub b: f64,
    pub twice_m_i: i32,
    /// `f(up) - f(down)` in MHz. Signed so that every nuclear line keeps
    /// the same slope through zero.
    pub detuning: f64,
    pub amplitude: f64,
}

const MERGE_TOL: f64 = 0.01;

pub fn pi_doublet_positions(
    model: &DefectModel,
    field_grid: &[f64],
    c: &PhysicalConstants,
) -> Result<Vec<PiLine>> {
    let opts = MapOptions::only(Family::Pi);
    let mut out = Vec::new();
    for &b in field_grid {
        let zeeman =
            model.ground.g_zz().abs().min(model.excited.g_zz().abs()) * c.mu_b_over_h * b.abs();
        let hyperfine = model
            .ground
            .max_abs_hyperfine()
            .max(model.excited.max_abs_hyperfine());
        if zeeman < 3.0 * hyperfine && b != 0.0 {
            log::debug!("{b} mT is below the high-field regime; Π labels may be unreliable");
        }
        let ts = enumerate_transitions(model, &FieldPoint::along_c(b), c, &opts)?;
        let mut lines: Vec<PiLine> = Vec::new();
        for p in pairs_of(&ts, &opts)
            .iter()
            .filter(|p| p.family == Family::Pi)
        {
            let (up, down) = if p.first.gs_branch == Branch::Up {
                (&p.first, &p.second)
            } else {
                (&p.second, &p.first)
            };
            let line = PiLine {
                b,
                twice_m_i: (2.0 * up.gs_nuclear).round() as i32,
                detuning: up.frequency_offset - down.frequency_offset,
                amplitude: p.signed_amplitude,
            };
            match lines.iter_mut().find(|l| l.twice_m_i == line.twice_m_i) {
                Some(l) if (l.detuning - line.detuning).abs() <= MERGE_TOL => {}
                Some(l) if line.amplitude > l.amplitude => *l = line,
                Some(_) => {}
                None => lines.push(line),
            }
        }
        if lines.is_empty() {
            log::warn!("no Π pairs at {b} mT");
        }
        lines.sort_by_key(|l| -l.twice_m_i);
        out.extend(lines);
    }
    Ok(out)
}

/// Mean Π detuning at each field, in order of first appearance.
pub fn pi_centroids(lines: &[PiLine]) -> Vec<(f64, f64)> {
    let mut acc: Vec<(f64, f64, usize)> = Vec::new();
    for l in lines {
        match acc.iter_mut().find(|a| a.0 == l.b) {
            Some(a) => {
                a.1 += l.detuning;
                a.2 += 1;
            }
            None => acc.push((l.b, l.detuning, 1)),
        }
    }
    acc.into_iter().map(|(b, s, n)| (b, s / n as f64)).collect()
}
