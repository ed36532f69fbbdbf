use std::io::Cursor;
use std::path::{Path, PathBuf};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::Serialize;

use vspin_core::dynamics::{
    depletion_recovery_scan, depletion_vs_field, simulate_ple_sweep, simulate_sequence,
    EnsembleModel, GreenTarget, LevelSystem, PleOptions, PulseSequence, RateParams, RecoveryCurve,
    RecoveryProtocol, Segment, SegmentKind, Spectrum,
};
use vspin_core::fitting::{
    fit_biexponential, fit_hyperfine_from_map, fit_lorentzian, fit_monoexponential,
    fit_zeeman_doublet, one_over_e_rate, spin_temperature, synthesize_features, FitResult,
    HyperfineFitOptions, LineshapeTemplate, LsqOptions, MapFeature,
};
use vspin_core::spectra::{
    enumerate_pairs, manifold_eigensystems, synthesize_two_laser_map, transitions_between, Family,
};
use vspin_core::{zeeman_splitting, EigenSystem, FieldPoint};

use crate::config::RunConfig;
use crate::error::{CliError, CliResult, ErrorKind};
use crate::ingest::{ingest_features, ingest_trace, ingest_trace_from, TraceKind};
use crate::output::{csv_text, to_json, write_atomic};

/// Noiseless 4H recovery curve produced by `dynamics` with default rates.
pub const RECOVERY_FIXTURE: &str = include_str!("../data/recovery_4h.csv");

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum Subcommand {
    Eig,
    Spectrum,
    Map,
    Dynamics,
    FitT1,
    FitDepletion,
    FitDoublet,
    FitHyperfine,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunOutcome {
    pub artifacts: Vec<PathBuf>,
    /// False when a fit or solver gave up; artifacts are still written.
    pub converged: bool,
}

impl RunOutcome {
    fn done(artifacts: Vec<PathBuf>) -> Self {
        Self {
            artifacts,
            converged: true,
        }
    }

    /// Turns a non-converged run into the matching error.
    pub fn into_result(self) -> CliResult<Self> {
        if self.converged {
            Ok(self)
        } else {
            Err(CliError {
                kind: ErrorKind::NonConvergence,
                message: format!(
                    "fit did not converge; report written to {}",
                    self.artifacts
                        .iter()
                        .map(|p| p.display().to_string())
                        .collect::<Vec<_>>()
                        .join(", ")
                ),
            })
        }
    }
}

pub fn run_subcommand(cmd: Subcommand, cfg: &RunConfig) -> CliResult<RunOutcome> {
    cfg.validate()?;
    let out = &cfg.out;
    let mut artifacts = vec![write_atomic(out, "config.json", &to_json(cfg)?)?];
    let outcome = match cmd {
        Subcommand::Eig => eig(cfg)?,
        Subcommand::Spectrum => spectrum(cfg)?,
        Subcommand::Map => map(cfg)?,
        Subcommand::Dynamics => dynamics(cfg)?,
        Subcommand::FitT1 => fit_t1(cfg)?,
        Subcommand::FitDepletion => fit_depletion(cfg)?,
        Subcommand::FitDoublet => fit_doublet(cfg)?,
        Subcommand::FitHyperfine => fit_hyperfine(cfg)?,
    };
    artifacts.extend(outcome.artifacts);
    Ok(RunOutcome {
        artifacts,
        converged: outcome.converged,
    })
}

fn f(v: f64) -> String {
    format!("{v}")
}

fn level_rows(b: f64, manifold: &str, es: &EigenSystem) -> Vec<Vec<String>> {
    (0..es.len())
        .map(|k| {
            vec![
                f(b),
                manifold.to_string(),
                k.to_string(),
                f(es.energies[k]),
                es.electron_branch[k].as_str().to_string(),
                f(es.m_i(k)),
                f(es.label_confidence[k]),
                f(es.sz[k]),
                f(es.iz[k]),
            ]
        })
        .collect()
}

fn eig(cfg: &RunConfig) -> CliResult<RunOutcome> {
    let model = cfg.defect()?;
    let mut rows = Vec::new();
    for b in cfg.scan.field.points() {
        let (gs, es) = manifold_eigensystems(&model, &FieldPoint::along_c(b), &cfg.constants)?;
        rows.extend(level_rows(b, "ground", &gs));
        rows.extend(level_rows(b, "excited", &es));
    }
    let text = csv_text(
        &[
            "b_mT",
            "manifold",
            "index",
            "energy_MHz",
            "branch",
            "m_I",
            "label_confidence",
            "s_z",
            "i_z",
        ],
        rows,
    );
    Ok(RunOutcome::done(vec![write_atomic(
        &cfg.out,
        "levels.csv",
        &text,
    )?]))
}

fn spectrum(cfg: &RunConfig) -> CliResult<RunOutcome> {
    let model = cfg.defect()?;
    let opts = &cfg.scan.options;
    let (mut trows, mut prows) = (Vec::new(), Vec::new());
    for b in cfg.scan.field.points() {
        let field = FieldPoint::along_c(b);
        let (gs, es) = manifold_eigensystems(&model, &field, &cfg.constants)?;
        for t in transitions_between(&gs, &es, opts)? {
            trows.push(vec![
                f(b),
                t.gs_index.to_string(),
                t.es_index.to_string(),
                f(t.frequency_offset),
                f(t.strength),
                t.gs_branch.as_str().to_string(),
                t.es_branch.as_str().to_string(),
                f(t.gs_nuclear),
                f(t.es_nuclear),
            ]);
        }
        for p in enumerate_pairs(&model, &field, &cfg.constants, opts)? {
            prows.push(vec![
                f(b),
                p.family.as_str().to_string(),
                f(p.two_photon_detuning),
                f(p.signed_amplitude),
                format!("{}-{}", p.first.gs_index, p.first.es_index),
                format!("{}-{}", p.second.gs_index, p.second.es_index),
            ]);
        }
    }
    let t = csv_text(
        &[
            "b_mT",
            "gs_index",
            "es_index",
            "frequency_offset_MHz",
            "strength",
            "gs_branch",
            "es_branch",
            "gs_m_I",
            "es_m_I",
        ],
        trows,
    );
    let p = csv_text(
        &[
            "b_mT",
            "family",
            "two_photon_detuning_MHz",
            "signed_amplitude",
            "first",
            "second",
        ],
        prows,
    );
    Ok(RunOutcome::done(vec![
        write_atomic(&cfg.out, "transitions.csv", &t)?,
        write_atomic(&cfg.out, "pairs.csv", &p)?,
    ]))
}

fn map(cfg: &RunConfig) -> CliResult<RunOutcome> {
    let model = cfg.defect()?;
    let m = synthesize_two_laser_map(
        &model,
        &cfg.scan.field.points(),
        &cfg.scan.detuning_grid()?.points(),
        &cfg.constants,
        &cfg.scan.options,
    )?;
    let mut json = m.to_json_string()?;
    json.push('\n');
    Ok(RunOutcome::done(vec![
        write_atomic(&cfg.out, "map.csv", &m.to_csv_string())?,
        write_atomic(&cfg.out, "map.json", &json)?,
    ]))
}

/// Independent, reproducible noise stream per artifact.
fn rng(cfg: &RunConfig, stream: u64) -> ChaCha8Rng {
    let mut r = ChaCha8Rng::seed_from_u64(cfg.seed);
    r.set_stream(stream);
    r
}

fn add_noise(values: &mut [f64], sd: f64, rng: &mut ChaCha8Rng) -> CliResult<()> {
    if sd == 0.0 {
        return Ok(());
    }
    let n = Normal::new(0.0, sd).map_err(|e| CliError::validation(e.to_string()))?;
    for v in values {
        *v += n.sample(rng);
    }
    Ok(())
}

fn recovery_csv(c: &RecoveryCurve) -> String {
    csv_text(
        &["tau_s", "recovered"],
        c.tau
            .iter()
            .zip(&c.recovered)
            .map(|(t, r)| vec![f(*t), f(*r)]),
    )
}

fn default_sequence(proto: &RecoveryProtocol) -> PulseSequence {
    PulseSequence::new(vec![
        Segment::new(SegmentKind::Green, proto.green_duration),
        Segment::new(SegmentKind::Resonant, proto.pump_duration)
            .pump(proto.pump_rate)
            .branch(proto.branch),
        Segment::new(SegmentKind::Wait, 0.01),
        Segment::new(SegmentKind::Probe, proto.probe_duration)
            .pump(proto.pump_rate)
            .branch(proto.branch),
    ])
}

fn dynamics(cfg: &RunConfig) -> CliResult<RunOutcome> {
    let d = &cfg.dynamics;
    let taus = d.delays.points()?;
    let mut short = depletion_recovery_scan(&taus, &d.protocol, &d.rates)?;
    add_noise(&mut short.recovered, d.noise, &mut rng(cfg, 1))?;
    let long_proto = RecoveryProtocol {
        pump_duration: d.long_pump_duration,
        ..d.protocol.clone()
    };
    let mut long = depletion_recovery_scan(&taus, &long_proto, &d.rates)?;
    add_noise(&mut long.recovered, d.noise, &mut rng(cfg, 2))?;

    let seq = d
        .sequence
        .clone()
        .unwrap_or_else(|| default_sequence(&d.protocol));
    let res = simulate_sequence(&seq, &d.rates, &LevelSystem::mixed())?;
    let mut rows = Vec::new();
    for (i, s) in res.segments.iter().enumerate() {
        let bin = s.duration / s.counts.len() as f64;
        for (k, c) in s.counts.iter().enumerate() {
            rows.push(vec![
                i.to_string(),
                serde_json::to_value(s.kind)
                    .ok()
                    .and_then(|v| v.as_str().map(str::to_string))
                    .unwrap_or_default(),
                f(s.start + bin * k as f64),
                f(s.start + bin * (k + 1) as f64),
                f(*c),
            ]);
        }
    }
    let trace = csv_text(
        &["segment", "kind", "t_start_s", "t_end_s", "photons"],
        rows,
    );
    Ok(RunOutcome::done(vec![
        write_atomic(&cfg.out, "recovery.csv", &recovery_csv(&short))?,
        write_atomic(&cfg.out, "recovery_long_pump.csv", &recovery_csv(&long))?,
        write_atomic(&cfg.out, "trace.csv", &trace)?,
    ]))
}

fn lsq(cfg: &RunConfig, sigma: Option<Vec<f64>>) -> LsqOptions {
    LsqOptions {
        sigma,
        ..cfg.fit.lsq.clone().unwrap_or_default()
    }
}

#[derive(Serialize)]
struct T1Report {
    source: String,
    biexponential: FitResult,
    monoexponential: FitResult,
    one_over_e_rate: Option<f64>,
}

fn fit_t1(cfg: &RunConfig) -> CliResult<RunOutcome> {
    let (trace, source) = match &cfg.fit.input {
        Some(p) => (
            ingest_trace(p, TraceKind::Recovery)?,
            p.display().to_string(),
        ),
        None => (
            ingest_trace_from(
                Cursor::new(RECOVERY_FIXTURE),
                Path::new("recovery_4h.csv"),
                TraceKind::Recovery,
            )?,
            "packaged:recovery_4h.csv".to_string(),
        ),
    };
    let opts = lsq(cfg, trace.sigma.clone());
    let mut curve = trace.into_recovery();
    if cfg.fit.input.is_none() {
        add_noise(&mut curve.recovered, cfg.fit.noise, &mut rng(cfg, 3))?;
    }
    let bi = fit_biexponential(&curve, &opts)?;
    let mono = fit_monoexponential(&curve, &opts)?;
    let rate = match one_over_e_rate(&curve) {
        Ok(r) => Some(r),
        Err(e) => {
            log::warn!("no 1/e rate: {e}");
            None
        }
    };
    let converged = bi.converged;
    let report = T1Report {
        source,
        biexponential: bi,
        monoexponential: mono,
        one_over_e_rate: rate,
    };
    Ok(RunOutcome {
        artifacts: vec![write_atomic(&cfg.out, "fit_t1.json", &to_json(&report)?)?],
        converged,
    })
}

#[derive(Serialize)]
struct DepletionReport {
    source: String,
    slope_mhz_per_mt: f64,
    injected_hwhm_mhz: Option<f64>,
    fit: FitResult,
}

fn fit_depletion(cfg: &RunConfig) -> CliResult<RunOutcome> {
    let model = cfg.defect()?;
    let slope = model.branch_slope(cfg.constants.mu_b_over_h);
    let (points, sigma, source, injected) = match &cfg.fit.input {
        Some(p) => {
            let t = ingest_trace(p, TraceKind::Depletion)?;
            (t.points(), t.sigma, p.display().to_string(), None)
        }
        None => {
            let fwhm = cfg.single_spin_fwhm();
            let mut pts = depletion_vs_field(
                &model,
                &cfg.dynamics.rates,
                &cfg.fit.depletion_fields.points(),
                fwhm,
                cfg.dynamics.protocol.pump_rate,
                &cfg.constants,
            )?;
            let mut y: Vec<f64> = pts.iter().map(|p| p.1).collect();
            add_noise(&mut y, cfg.fit.noise, &mut rng(cfg, 4))?;
            for (p, v) in pts.iter_mut().zip(y) {
                p.1 = v;
            }
            (pts, None, "synthetic".to_string(), Some(fwhm / 2.0))
        }
    };
    let fit = fit_lorentzian(&points, slope, cfg.fit.fixed_center, &lsq(cfg, sigma))?;
    let converged = fit.converged;
    let report = DepletionReport {
        source,
        slope_mhz_per_mt: slope,
        injected_hwhm_mhz: injected,
        fit,
    };
    Ok(RunOutcome {
        artifacts: vec![write_atomic(
            &cfg.out,
            "fit_depletion.json",
            &to_json(&report)?,
        )?],
        converged,
    })
}

#[derive(Serialize)]
struct DoubletReport {
    source: String,
    /// Smaller over larger copy amplitude.
    ratio: f64,
    ground_splitting_mhz: f64,
    spin_temperature_k: Option<f64>,
    temperature_overflow: bool,
    fit: FitResult,
}

/// Zero-field template and a field-split spectrum under green repump
/// towards a thermal spin distribution.
pub fn synthetic_doublet(cfg: &RunConfig) -> CliResult<(LineshapeTemplate, Spectrum)> {
    let model = cfg.defect()?;
    let e = EnsembleModel::gaussian(model, 2000.0, -12_000.0, 12_000.0, 241)?;
    let opts = PleOptions {
        pump_rate: 10.0,
        dwell: 0.01,
        green: true,
    };
    let zero = simulate_ple_sweep(
        &e,
        &FieldPoint::along_c(0.0),
        &cfg.constants,
        &cfg.dynamics.rates,
        &opts,
    )?;
    let thermal = RateParams {
        green_target: GreenTarget::Thermal {
            temperature_k: cfg.fit.synthetic_temperature_k,
        },
        ..cfg.dynamics.rates.clone()
    };
    let split = simulate_ple_sweep(
        &e,
        &FieldPoint::along_c(cfg.fit.doublet_field_mt),
        &cfg.constants,
        &thermal,
        &opts,
    )?;
    Ok((LineshapeTemplate::from_spectrum(&zero)?, split))
}

fn fit_doublet(cfg: &RunConfig) -> CliResult<RunOutcome> {
    let model = cfg.defect()?;
    let (template, mut spectrum, sigma, source) = match (&cfg.fit.input, &cfg.fit.template) {
        (Some(i), Some(t)) => {
            let tt = ingest_trace(t, TraceKind::Spectrum)?;
            let s = ingest_trace(i, TraceKind::Spectrum)?;
            let sigma = s.sigma.clone();
            (
                LineshapeTemplate::from_spectrum(&tt.into_spectrum())?,
                s.into_spectrum(),
                sigma,
                i.display().to_string(),
            )
        }
        (Some(_), None) => {
            return Err(CliError::validation(
                "fit-doublet with an input spectrum needs fit.template",
            ))
        }
        (None, _) => {
            let (t, s) = synthetic_doublet(cfg)?;
            (t, s, None, "synthetic".to_string())
        }
    };
    if cfg.fit.input.is_none() {
        let scale = spectrum.signal.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
        add_noise(
            &mut spectrum.signal,
            cfg.fit.noise * scale,
            &mut rng(cfg, 5),
        )?;
    }
    let fit = fit_zeeman_doublet(&spectrum, &template, &lsq(cfg, sigma))?;
    let (lo, hi) = (fit.value("a_low"), fit.value("a_high"));
    let ratio = lo.min(hi) / lo.max(hi);
    let splitting = zeeman_splitting(
        &model.ground,
        &FieldPoint::along_c(cfg.fit.doublet_field_mt),
        &cfg.constants,
    )?;
    let temp = spin_temperature(ratio, splitting, &cfg.constants);
    if let Err(e) = &temp {
        log::warn!("no spin temperature: {e}");
    }
    let converged = fit.converged;
    let report = DoubletReport {
        source,
        ratio,
        ground_splitting_mhz: splitting,
        spin_temperature_k: temp.as_ref().ok().map(|t| t.kelvin),
        temperature_overflow: temp.as_ref().is_ok_and(|t| t.overflow),
        fit,
    };
    Ok(RunOutcome {
        artifacts: vec![write_atomic(
            &cfg.out,
            "fit_doublet.json",
            &to_json(&report)?,
        )?],
        converged,
    })
}

#[derive(Serialize)]
struct HyperfineReport {
    source: String,
    features: usize,
    initial: [f64; 3],
    fit: FitResult,
}

fn fit_hyperfine(cfg: &RunConfig) -> CliResult<RunOutcome> {
    let model = cfg.defect()?;
    let (features, source): (Vec<MapFeature>, String) = match &cfg.fit.input {
        Some(p) => (ingest_features(p)?, p.display().to_string()),
        None => {
            let mut fs = synthesize_features(
                &model,
                &cfg.fit.hyperfine_fields,
                &[Family::Lambda, Family::V, Family::Pi],
                cfg.fit.features_per_family,
                &cfg.constants,
                &cfg.scan.options,
            )?;
            let mut d: Vec<f64> = fs.iter().map(|x| x.detuning).collect();
            add_noise(&mut d, cfg.fit.noise, &mut rng(cfg, 6))?;
            for (x, v) in fs.iter_mut().zip(d) {
                x.detuning = v;
            }
            (fs, "synthetic".to_string())
        }
    };
    let initial = match &cfg.fit.initial {
        Some(m) => m.clone(),
        None if cfg.fit.input.is_none() => {
            let p = cfg.fit.perturbation;
            let mut g = model.excited.clone();
            g.a_tensor[0][2] *= 1.0 + p;
            g.a_tensor[2][0] *= 1.0 + p;
            g.a_tensor[2][2] *= 1.0 - p;
            g.g_tensor[2][2] *= 1.0 + p;
            g
        }
        None => model.excited.clone(),
    };
    let mut opts = HyperfineFitOptions {
        multi_start: cfg.fit.multi_start,
        map: cfg.scan.options.clone(),
        ..HyperfineFitOptions::default()
    };
    if let Some(l) = &cfg.fit.lsq {
        opts.lsq = l.clone();
    }
    let fit = fit_hyperfine_from_map(&features, &model.ground, &initial, &cfg.constants, &opts)?;
    let converged = fit.converged;
    let report = HyperfineReport {
        source,
        features: features.len(),
        initial: [
            initial.a_tensor[0][2],
            initial.a_tensor[2][2],
            initial.g_zz(),
        ],
        fit,
    };
    Ok(RunOutcome {
        artifacts: vec![write_atomic(
            &cfg.out,
            "fit_hyperfine.json",
            &to_json(&report)?,
        )?],
        converged,
    })
}
