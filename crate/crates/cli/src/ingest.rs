use std::io::Read;
use std::path::Path;

use vspin_core::dynamics::{RecoveryCurve, Spectrum};
use vspin_core::fitting::MapFeature;
use vspin_core::spectra::Family;

use crate::error::{CliError, CliResult};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TraceKind {
    /// Delay against recovered fraction; abscissa in s.
    Recovery,
    /// Field against depletion fraction; abscissa in mT.
    Depletion,
    /// Detuning against signal; abscissa in MHz.
    Spectrum,
}

impl TraceKind {
    fn quantity(self) -> &'static str {
        match self {
            TraceKind::Recovery => "tau",
            TraceKind::Depletion => "b",
            TraceKind::Spectrum => "detuning",
        }
    }

    /// Factor to the canonical unit.
    fn unit_factor(self, unit: &str) -> Option<f64> {
        match (self, unit) {
            (TraceKind::Recovery, "s") => Some(1.0),
            (TraceKind::Recovery, "ms") => Some(1e-3),
            (TraceKind::Recovery, "us") => Some(1e-6),
            (TraceKind::Depletion, "mT") => Some(1.0),
            (TraceKind::Depletion, "T") => Some(1e3),
            (TraceKind::Depletion, "G") => Some(0.1),
            (TraceKind::Spectrum, "MHz") => Some(1.0),
            (TraceKind::Spectrum, "GHz") => Some(1e3),
            (TraceKind::Spectrum, "kHz") => Some(1e-3),
            _ => None,
        }
    }

    fn units(self) -> &'static str {
        match self {
            TraceKind::Recovery => "s, ms, us",
            TraceKind::Depletion => "mT, T, G",
            TraceKind::Spectrum => "MHz, GHz, kHz",
        }
    }
}

/// A two- or three-column series with the abscissa in canonical units.
#[derive(Debug, Clone, PartialEq)]
pub struct Trace {
    pub kind: TraceKind,
    pub abscissa: Vec<f64>,
    pub value: Vec<f64>,
    pub sigma: Option<Vec<f64>>,
}

impl Trace {
    pub fn into_recovery(self) -> RecoveryCurve {
        RecoveryCurve {
            tau: self.abscissa,
            recovered: self.value,
        }
    }

    pub fn into_spectrum(self) -> Spectrum {
        Spectrum {
            detuning: self.abscissa,
            signal: self.value,
        }
    }

    pub fn points(&self) -> Vec<(f64, f64)> {
        self.abscissa
            .iter()
            .copied()
            .zip(self.value.iter().copied())
            .collect()
    }
}

fn open(path: &Path) -> CliResult<std::fs::File> {
    std::fs::File::open(path).map_err(|e| CliError::validation(format!("{}: {e}", path.display())))
}

fn reader<R: Read>(input: R) -> csv::Reader<R> {
    csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .comment(Some(b'#'))
        .flexible(true)
        .from_reader(input)
}

fn field(path: &Path, line: u64, raw: &str, column: &str) -> CliResult<f64> {
    let v: f64 = raw.parse().map_err(|_| {
        CliError::validation(format!(
            "{}:{line}: column {column}: cannot parse {raw:?} as a number",
            path.display()
        ))
    })?;
    if !v.is_finite() {
        return Err(CliError::validation(format!(
            "{}:{line}: column {column}: non-finite value {raw:?}",
            path.display()
        )));
    }
    Ok(v)
}

/// Reads `<quantity>_<unit>,<value>[,sigma]` rows. The abscissa must be
/// strictly increasing; duplicates are reported with both line numbers.
pub fn ingest_trace(path: &Path, kind: TraceKind) -> CliResult<Trace> {
    ingest_trace_from(open(path)?, path, kind)
}

/// As [`ingest_trace`] from any reader; `path` only labels messages.
pub fn ingest_trace_from<R: Read>(input: R, path: &Path, kind: TraceKind) -> CliResult<Trace> {
    let mut rdr = reader(input);
    let headers = rdr
        .headers()
        .map_err(|e| CliError::validation(format!("{}: {e}", path.display())))?
        .clone();
    if headers.len() < 2 || headers.len() > 3 {
        return Err(CliError::validation(format!(
            "{}: expected 2 or 3 columns, found {}",
            path.display(),
            headers.len()
        )));
    }
    let head = &headers[0];
    let factor = head
        .strip_prefix(kind.quantity())
        .and_then(|rest| rest.strip_prefix('_'))
        .and_then(|unit| kind.unit_factor(unit))
        .ok_or_else(|| {
            CliError::validation(format!(
                "{}: first column must be {}_<unit> with unit one of {}, found {head:?}",
                path.display(),
                kind.quantity(),
                kind.units()
            ))
        })?;
    if headers.len() == 3 && !headers[2].starts_with("sigma") {
        return Err(CliError::validation(format!(
            "{}: third column must be sigma, found {:?}",
            path.display(),
            &headers[2]
        )));
    }

    let mut t = Trace {
        kind,
        abscissa: Vec::new(),
        value: Vec::new(),
        sigma: (headers.len() == 3).then(Vec::new),
    };
    let mut lines = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| CliError::validation(format!("{}: {e}", path.display())))?;
        let line = rec.position().map_or(0, |p| p.line());
        if rec.len() != headers.len() {
            return Err(CliError::validation(format!(
                "{}:{line}: expected {} fields, found {}",
                path.display(),
                headers.len(),
                rec.len()
            )));
        }
        t.abscissa
            .push(field(path, line, &rec[0], &headers[0])? * factor);
        t.value.push(field(path, line, &rec[1], &headers[1])?);
        if let Some(s) = t.sigma.as_mut() {
            let v = field(path, line, &rec[2], &headers[2])?;
            if v <= 0.0 {
                return Err(CliError::validation(format!(
                    "{}:{line}: sigma must be positive",
                    path.display()
                )));
            }
            s.push(v);
        }
        lines.push(line);
    }
    if t.abscissa.is_empty() {
        return Err(CliError::validation(format!(
            "{}: no data rows",
            path.display()
        )));
    }
    for k in 1..t.abscissa.len() {
        if t.abscissa[k] == t.abscissa[k - 1] {
            return Err(CliError::validation(format!(
                "{}: duplicate {} on lines {} and {}",
                path.display(),
                kind.quantity(),
                lines[k - 1],
                lines[k]
            )));
        }
        if t.abscissa[k] < t.abscissa[k - 1] {
            return Err(CliError::validation(format!(
                "{}:{}: {} must be strictly increasing",
                path.display(),
                lines[k],
                kind.quantity()
            )));
        }
    }
    Ok(t)
}

/// Reads `b_mT,detuning_MHz,family` rows.
pub fn ingest_features(path: &Path) -> CliResult<Vec<MapFeature>> {
    let mut rdr = reader(open(path)?);
    let headers = rdr
        .headers()
        .map_err(|e| CliError::validation(format!("{}: {e}", path.display())))?
        .clone();
    if headers.iter().collect::<Vec<_>>() != ["b_mT", "detuning_MHz", "family"] {
        return Err(CliError::validation(format!(
            "{}: header must be b_mT,detuning_MHz,family",
            path.display()
        )));
    }
    let mut out = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| CliError::validation(format!("{}: {e}", path.display())))?;
        let line = rec.position().map_or(0, |p| p.line());
        if rec.len() != 3 {
            return Err(CliError::validation(format!(
                "{}:{line}: expected 3 fields, found {}",
                path.display(),
                rec.len()
            )));
        }
        let family: Family = rec[2].parse().map_err(|_| {
            CliError::validation(format!(
                "{}:{line}: unknown family {:?}",
                path.display(),
                &rec[2]
            ))
        })?;
        out.push(MapFeature {
            b: field(path, line, &rec[0], "b_mT")?,
            detuning: field(path, line, &rec[1], "detuning_MHz")?,
            family,
        });
    }
    if out.is_empty() {
        return Err(CliError::validation(format!(
            "{}: no data rows",
            path.display()
        )));
    }
    Ok(out)
}
