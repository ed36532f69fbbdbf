use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{build_rate_matrix, evolve, Drive, LevelSystem, RateParams};
use crate::error::{Error, Result};
use crate::model::Branch;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SegmentKind {
    /// Above-gap illumination: resets spins and charge state.
    Green,
    /// Resonant pumping of one electron branch.
    Resonant,
    Wait,
    /// Same physics as `Resonant`; kept separate so traces read naturally.
    Probe,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Segment {
    pub kind: SegmentKind,
    /// Seconds.
    pub duration: f64,
    /// Optical excitation rate, 1/s. Ignored for green and wait segments.
    #[serde(default)]
    pub pump: f64,
    #[serde(default = "default_branch")]
    pub branch: Branch,
    #[serde(default = "default_bins")]
    pub bins: usize,
}

fn default_branch() -> Branch {
    Branch::Down
}

fn default_bins() -> usize {
    50
}

impl Segment {
    pub fn new(kind: SegmentKind, duration: f64) -> Self {
        Self {
            kind,
            duration,
            pump: 0.0,
            branch: default_branch(),
            bins: default_bins(),
        }
    }

    pub fn pump(mut self, rate: f64) -> Self {
        self.pump = rate;
        self
    }

    pub fn branch(mut self, b: Branch) -> Self {
        self.branch = b;
        self
    }

    pub fn bins(mut self, n: usize) -> Self {
        self.bins = n;
        self
    }

    fn drive(&self, ground_splitting_mhz: f64) -> Drive {
        let d = match self.kind {
            SegmentKind::Green => Drive::dark().with_green(true),
            SegmentKind::Wait => Drive::dark(),
            SegmentKind::Resonant | SegmentKind::Probe => Drive::single(self.branch, self.pump),
        };
        d.with_ground_splitting(ground_splitting_mhz)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PulseSequence {
    pub segments: Vec<Segment>,
    /// Ground-state electron splitting in MHz, used by thermal targets.
    #[serde(default)]
    pub ground_splitting_mhz: f64,
}

impl PulseSequence {
    pub fn new(segments: Vec<Segment>) -> Self {
        Self {
            segments,
            ground_splitting_mhz: 0.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.segments.is_empty() {
            return Err(Error::InvalidParameter(
                "pulse sequence has no segments".into(),
            ));
        }
        for (k, s) in self.segments.iter().enumerate() {
            if !(s.duration > 0.0 && s.duration.is_finite()) {
                return Err(Error::InvalidParameter(format!(
                    "segment {k} has duration {}; durations must be positive",
                    s.duration
                )));
            }
            if !(s.pump >= 0.0 && s.pump.is_finite()) {
                return Err(Error::InvalidParameter(format!(
                    "segment {k} has pump rate {}",
                    s.pump
                )));
            }
            if s.bins == 0 {
                return Err(Error::InvalidParameter(format!(
                    "segment {k} has zero bins"
                )));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SegmentTrace {
    pub kind: SegmentKind,
    /// Start time, seconds from the beginning of the sequence.
    pub start: f64,
    pub duration: f64,
    /// Photons per bin.
    pub counts: Vec<f64>,
    pub total: f64,
    pub final_state: LevelSystem,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SequenceResult {
    pub segments: Vec<SegmentTrace>,
    pub final_state: LevelSystem,
}

pub fn simulate_sequence(
    seq: &PulseSequence,
    p: &RateParams,
    initial: &LevelSystem,
) -> Result<SequenceResult> {
    seq.validate()?;
    p.validate()?;
    initial.validate()?;
    let mut state = *initial;
    let mut start = 0.0;
    let mut traces = Vec::with_capacity(seq.segments.len());
    for s in &seq.segments {
        let m = build_rate_matrix(p, &s.drive(seq.ground_splitting_mhz))?;
        let (next, counts) = evolve(&state, &m, p, s.duration, s.bins)?;
        traces.push(SegmentTrace {
            kind: s.kind,
            start,
            duration: s.duration,
            total: counts.iter().sum(),
            counts,
            final_state: next,
        });
        state = next;
        start += s.duration;
    }
    Ok(SequenceResult {
        segments: traces,
        final_state: state,
    })
}

/// Green reset, resonant pump, dark wait of variable length, probe.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RecoveryProtocol {
    pub green_duration: f64,
    pub pump_duration: f64,
    pub probe_duration: f64,
    pub pump_rate: f64,
    pub branch: Branch,
}

impl Default for RecoveryProtocol {
    fn default() -> Self {
        Self {
            green_duration: 5e-4,
            pump_duration: 2e-4,
            probe_duration: 2e-4,
            pump_rate: 1e6,
            branch: Branch::Down,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecoveryCurve {
    pub tau: Vec<f64>,
    /// Probe photons divided by pump photons.
    pub recovered: Vec<f64>,
}

/// Recovered fraction of the pump signal after each dark delay.
pub fn depletion_recovery_scan(
    taus: &[f64],
    proto: &RecoveryProtocol,
    p: &RateParams,
) -> Result<RecoveryCurve> {
    if taus.is_empty() {
        return Err(Error::Arity { needed: 1, got: 0 });
    }
    if taus.iter().any(|t| !(*t >= 0.0 && t.is_finite())) {
        return Err(Error::InvalidParameter(
            "delays must be finite and >= 0".into(),
        ));
    }
    if taus.windows(2).any(|w| w[1] < w[0]) {
        return Err(Error::InvalidParameter(
            "delays must be sorted ascending".into(),
        ));
    }
    let head = PulseSequence::new(vec![
        Segment::new(SegmentKind::Green, proto.green_duration).bins(1),
        Segment::new(SegmentKind::Resonant, proto.pump_duration)
            .pump(proto.pump_rate)
            .branch(proto.branch)
            .bins(1),
    ]);
    let pre = simulate_sequence(&head, p, &LevelSystem::mixed())?;
    let pumped = pre.segments[1].total;
    if pumped <= 0.0 {
        return Err(Error::Domain("pump segment emitted no photons".into()));
    }
    let dark = build_rate_matrix(p, &Drive::dark())?;
    let probe = build_rate_matrix(p, &Drive::single(proto.branch, proto.pump_rate))?;
    let recovered = taus
        .par_iter()
        .map(|&tau| {
            let after_wait = if tau > 0.0 {
                evolve(&pre.final_state, &dark, p, tau, 1)?.0
            } else {
                pre.final_state
            };
            let (_, counts) = evolve(&after_wait, &probe, p, proto.probe_duration, 1)?;
            Ok(counts[0] / pumped)
        })
        .collect::<Result<Vec<f64>>>()?;
    Ok(RecoveryCurve {
        tau: taus.to_vec(),
        recovered,
    })
}
