use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use vspin_core::dynamics::{PulseSequence, RateParams, RecoveryProtocol};
use vspin_core::fitting::LsqOptions;
use vspin_core::spectra::MapOptions;
use vspin_core::{DefectModel, PhysicalConstants};

use crate::error::{CliError, CliResult};

/// Evenly spaced grid, both ends included.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Grid {
    pub min: f64,
    pub max: f64,
    pub steps: usize,
}

impl Grid {
    pub fn new(min: f64, max: f64, steps: usize) -> Self {
        Self { min, max, steps }
    }

    pub fn validate(&self, name: &str) -> CliResult<()> {
        if !(self.min.is_finite() && self.max.is_finite()) {
            return Err(CliError::validation(format!(
                "{name}: bounds must be finite"
            )));
        }
        if self.steps == 0 {
            return Err(CliError::validation(format!("{name}: steps must be >= 1")));
        }
        if self.steps > 1 && self.max <= self.min {
            return Err(CliError::validation(format!(
                "{name}: max ({}) must exceed min ({})",
                self.max, self.min
            )));
        }
        Ok(())
    }

    pub fn points(&self) -> Vec<f64> {
        if self.steps == 1 {
            return vec![self.min];
        }
        let n = (self.steps - 1) as f64;
        (0..self.steps)
            .map(|k| self.min + (self.max - self.min) * k as f64 / n)
            .collect()
    }
}

/// Two-tone EOM scan: one sideband fixed, the other swept. Only the
/// resulting two-photon detuning grid is used.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EomSweep {
    pub fixed_sideband_mhz: f64,
    pub swept_min_mhz: f64,
    pub swept_max_mhz: f64,
    pub steps: usize,
}

impl Default for EomSweep {
    fn default() -> Self {
        Self {
            fixed_sideband_mhz: 4500.0,
            swept_min_mhz: 3000.0,
            swept_max_mhz: 4500.0,
            steps: 300,
        }
    }
}

impl EomSweep {
    pub fn detuning_grid(&self) -> CliResult<Grid> {
        let g = Grid::new(self.swept_min_mhz, self.swept_max_mhz, self.steps);
        g.validate("scan.eom")?;
        let a = (self.fixed_sideband_mhz - self.swept_max_mhz).abs();
        let b = (self.fixed_sideband_mhz - self.swept_min_mhz).abs();
        if self.swept_min_mhz < self.fixed_sideband_mhz
            && self.fixed_sideband_mhz < self.swept_max_mhz
        {
            return Err(CliError::validation(
                "scan.eom: the swept range must not straddle the fixed sideband",
            ));
        }
        Ok(Grid::new(a.min(b), a.max(b), self.steps))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScanConfig {
    /// mT along the c-axis.
    pub field: Grid,
    /// MHz.
    pub detuning: Grid,
    /// Replaces `detuning` when present.
    pub eom: Option<EomSweep>,
    pub options: MapOptions,
}

impl Default for ScanConfig {
    fn default() -> Self {
        Self {
            field: Grid::new(0.0, 61.0, 200),
            detuning: Grid::new(0.0, 1499.0, 300),
            eom: None,
            options: MapOptions::default(),
        }
    }
}

impl ScanConfig {
    pub fn detuning_grid(&self) -> CliResult<Grid> {
        match &self.eom {
            Some(e) => e.detuning_grid(),
            None => Ok(self.detuning),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Spacing {
    Linear,
    Log,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DelayGrid {
    /// s.
    pub min: f64,
    pub max: f64,
    pub steps: usize,
    pub spacing: Spacing,
}

impl Default for DelayGrid {
    fn default() -> Self {
        Self {
            min: 1e-4,
            max: 300.0,
            steps: 60,
            spacing: Spacing::Log,
        }
    }
}

impl DelayGrid {
    pub fn points(&self) -> CliResult<Vec<f64>> {
        Grid::new(self.min, self.max, self.steps).validate("dynamics.delays")?;
        if self.min < 0.0 {
            return Err(CliError::validation("dynamics.delays: min must be >= 0"));
        }
        Ok(match self.spacing {
            Spacing::Linear => Grid::new(self.min, self.max, self.steps).points(),
            Spacing::Log => {
                if self.min <= 0.0 {
                    return Err(CliError::validation(
                        "dynamics.delays: log spacing needs min > 0",
                    ));
                }
                let n = (self.steps.max(2) - 1) as f64;
                (0..self.steps)
                    .map(|k| self.min * (self.max / self.min).powf(k as f64 / n))
                    .collect()
            }
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DynamicsConfig {
    pub rates: RateParams,
    pub protocol: RecoveryProtocol,
    pub delays: DelayGrid,
    /// Pump length, s, of the second recovery scan.
    pub long_pump_duration: f64,
    /// Standard deviation of Gaussian noise added to recovery curves.
    pub noise: f64,
    /// Optional sequence written out as a binned trace.
    pub sequence: Option<PulseSequence>,
}

impl Default for DynamicsConfig {
    fn default() -> Self {
        Self {
            rates: RateParams::default(),
            protocol: RecoveryProtocol::default(),
            delays: DelayGrid::default(),
            long_pump_duration: 0.1,
            noise: 0.0,
            sequence: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FitConfig {
    /// Trace to fit; synthetic data from the model when absent.
    pub input: Option<PathBuf>,
    /// Zero-field lineshape for `fit-doublet`.
    pub template: Option<PathBuf>,
    /// Engine settings; each fitter's own defaults when absent.
    pub lsq: Option<LsqOptions>,
    pub multi_start: usize,
    /// Noise added to synthetic data.
    pub noise: f64,
    /// mT; holds the Lorentzian centre.
    pub fixed_center: Option<f64>,
    /// Single-spin optical FWHM, MHz; 1600 for 4H and 1200 for 6H when absent.
    pub single_spin_fwhm_mhz: Option<f64>,
    pub depletion_fields: Grid,
    /// Field, mT, of the doublet spectrum; sets the ground splitting used
    /// for the spin temperature.
    pub doublet_field_mt: f64,
    /// Spin temperature, K, of the synthetic doublet.
    pub synthetic_temperature_k: f64,
    /// mT, for synthetic hyperfine features.
    pub hyperfine_fields: Vec<f64>,
    pub features_per_family: usize,
    /// Relative offset of the starting guess from the model values.
    pub perturbation: f64,
    /// Excited-state starting guess; the model's excited state when absent.
    pub initial: Option<vspin_core::ManifoldParams>,
}

impl Default for FitConfig {
    fn default() -> Self {
        Self {
            input: None,
            template: None,
            lsq: None,
            multi_start: 8,
            noise: 0.0,
            fixed_center: None,
            single_spin_fwhm_mhz: None,
            depletion_fields: Grid::new(0.0, 490.0, 50),
            doublet_field_mt: 490.0,
            synthetic_temperature_k: 0.23,
            hyperfine_fields: vec![5.0, 12.0, 25.0, 40.0, 61.0, 150.0, 300.0, 490.0],
            features_per_family: 3,
            perturbation: 0.2,
            initial: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub preset: String,
    /// Inline parameters; replace the preset when given.
    pub model: Option<DefectModel>,
    pub constants: PhysicalConstants,
    pub scan: ScanConfig,
    pub dynamics: DynamicsConfig,
    pub fit: FitConfig,
    pub out: PathBuf,
    pub seed: u64,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            preset: "4H-alpha".into(),
            model: None,
            constants: PhysicalConstants::default(),
            scan: ScanConfig::default(),
            dynamics: DynamicsConfig::default(),
            fit: FitConfig::default(),
            out: PathBuf::from("out"),
            seed: 0,
        }
    }
}

impl RunConfig {
    pub fn defect(&self) -> CliResult<DefectModel> {
        let m = match &self.model {
            Some(m) => m.clone(),
            None => DefectModel::preset(&self.preset)?,
        };
        m.validate()?;
        Ok(m)
    }

    pub fn single_spin_fwhm(&self) -> f64 {
        self.fit
            .single_spin_fwhm_mhz
            .unwrap_or(if self.preset.starts_with("6H") {
                1200.0
            } else {
                1600.0
            })
    }

    pub fn validate(&self) -> CliResult<()> {
        self.defect()?;
        self.constants.validate()?;
        self.scan.field.validate("scan.field")?;
        self.scan.detuning_grid()?.validate("scan.detuning")?;
        self.scan.options.validate()?;
        self.dynamics.rates.validate()?;
        self.dynamics.delays.points()?;
        if let Some(s) = &self.dynamics.sequence {
            s.validate()?;
        }
        for (name, v) in [
            ("dynamics.noise", self.dynamics.noise),
            ("fit.noise", self.fit.noise),
            ("fit.perturbation", self.fit.perturbation),
        ] {
            if !(v.is_finite() && v >= 0.0) {
                return Err(CliError::validation(format!(
                    "{name} must be >= 0, got {v}"
                )));
            }
        }
        if self.dynamics.long_pump_duration.is_nan() || self.dynamics.long_pump_duration <= 0.0 {
            return Err(CliError::validation(
                "dynamics.long_pump_duration must be positive",
            ));
        }
        if self.fit.multi_start == 0 {
            return Err(CliError::validation("fit.multi_start must be >= 1"));
        }
        self.fit.depletion_fields.validate("fit.depletion_fields")?;
        let w = self.single_spin_fwhm();
        if w.is_nan() || w <= 0.0 {
            return Err(CliError::validation(
                "fit.single_spin_fwhm_mhz must be positive",
            ));
        }
        if self.fit.hyperfine_fields.iter().any(|b| !b.is_finite()) {
            return Err(CliError::validation("fit.hyperfine_fields must be finite"));
        }
        Ok(())
    }
}

/// Parses a JSON config; unknown keys and type errors are reported with
/// their path.
pub fn parse_config_str(text: &str) -> CliResult<RunConfig> {
    let de = &mut serde_json::Deserializer::from_str(text);
    let cfg: RunConfig = serde_path_to_error::deserialize(de).map_err(|e| {
        let path = e.path().to_string();
        CliError::validation(format!("config key `{path}`: {}", e.inner()))
    })?;
    cfg.validate()?;
    Ok(cfg)
}

pub fn parse_config(path: &Path) -> CliResult<RunConfig> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::validation(format!("cannot read {}: {e}", path.display())))?;
    parse_config_str(&text)
}
