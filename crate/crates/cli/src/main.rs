use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;

use vspin_cli::{parse_config, run_subcommand, CliError, CliResult, RunConfig, Subcommand};

/// Spin level structure, two-laser maps, pumping dynamics and fits for
/// vanadium-like S = 1/2, I = 7/2 defects.
#[derive(Debug, Parser)]
#[command(name = "vspin", version)]
struct Args {
    #[arg(value_enum)]
    command: Subcommand,
    /// JSON run configuration; flags override its values.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Defect preset: 4H-alpha or 6H-alpha.
    #[arg(long)]
    preset: Option<String>,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    /// mT.
    #[arg(long)]
    field_min: Option<f64>,
    #[arg(long)]
    field_max: Option<f64>,
    #[arg(long)]
    field_steps: Option<usize>,
    /// MHz.
    #[arg(long)]
    detuning_min: Option<f64>,
    #[arg(long)]
    detuning_max: Option<f64>,
    #[arg(long)]
    detuning_steps: Option<usize>,
    /// Map kernel FWHM, MHz.
    #[arg(long)]
    kernel_fwhm: Option<f64>,
    /// Data file for the fit subcommands.
    #[arg(long)]
    input: Option<PathBuf>,
    /// Zero-field lineshape for fit-doublet.
    #[arg(long)]
    template: Option<PathBuf>,
}

fn config(a: &Args) -> CliResult<RunConfig> {
    let mut c = match &a.config {
        Some(p) => parse_config(p)?,
        None => RunConfig::default(),
    };
    if let Some(p) = &a.preset {
        c.preset = p.clone();
        c.model = None;
    }
    if let Some(o) = &a.out {
        c.out = o.clone();
    }
    if let Some(s) = a.seed {
        c.seed = s;
    }
    let f = &mut c.scan.field;
    f.min = a.field_min.unwrap_or(f.min);
    f.max = a.field_max.unwrap_or(f.max);
    f.steps = a.field_steps.unwrap_or(f.steps);
    if a.detuning_min.is_some() || a.detuning_max.is_some() || a.detuning_steps.is_some() {
        if c.scan.eom.is_some() {
            log::info!("detuning flags replace the configured EOM sweep");
        }
        c.scan.detuning = c.scan.detuning_grid()?;
        c.scan.eom = None;
        let d = &mut c.scan.detuning;
        d.min = a.detuning_min.unwrap_or(d.min);
        d.max = a.detuning_max.unwrap_or(d.max);
        d.steps = a.detuning_steps.unwrap_or(d.steps);
    }
    if let Some(k) = a.kernel_fwhm {
        c.scan.options.kernel_fwhm = k;
    }
    if let Some(i) = &a.input {
        c.fit.input = Some(i.clone());
    }
    if let Some(t) = &a.template {
        c.fit.template = Some(t.clone());
    }
    c.validate()?;
    Ok(c)
}

fn threads() -> CliResult<()> {
    let Ok(v) = std::env::var("VSPIN_THREADS") else {
        return Ok(());
    };
    let n: usize = v.trim().parse().ok().filter(|&n| n > 0).ok_or_else(|| {
        CliError::validation(format!(
            "VSPIN_THREADS must be a positive integer, got {v:?}"
        ))
    })?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| CliError::validation(format!("VSPIN_THREADS: {e}")))
}

fn run(a: &Args) -> CliResult<()> {
    threads()?;
    let cfg = config(a)?;
    let outcome = run_subcommand(a.command, &cfg)?.into_result()?;
    for p in &outcome.artifacts {
        println!("{}", p.display());
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let args = match Args::try_parse() {
        Ok(a) => a,
        Err(e) if e.use_stderr() => {
            eprintln!(
                "E:validation:{}",
                e.to_string().trim_end().replace('\n', " ")
            );
            return ExitCode::from(2);
        }
        Err(e) => {
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
    };
    match run(&args) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
