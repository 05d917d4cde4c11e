//! `mwtunnel`: spectra, dynamics, phase diagrams and oracle checks for an
//! atom tunnelling among lattice sites through an emitted matter wave.

mod commands;
mod output;
mod scenario;

use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Result;
use clap::{Parser, Subcommand, ValueEnum};
use mwtunnel::spectrum::ScanParameter;

use commands::Verdict;
use output::OutputDir;
use scenario::{parse_grid, resolve, schema, Grid, Kind, Overrides, ScanSpec, ScenarioFile, SchemaError};

#[derive(Debug, Parser)]
#[command(name = "mwtunnel", version, about = "Matter-wave mediated tunnelling simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// Base scenario file; flags override its values.
    #[arg(long, global = true)]
    scenario: Option<PathBuf>,
    #[command(flatten)]
    overrides: Overrides,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum Param {
    Omega0,
    D,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum Target {
    Fig2,
    Fig3,
    Fig3d,
    Fig4,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Bound-state spectrum over a detuning or spacing grid.
    Spectrum {
        #[arg(long, value_enum)]
        param: Option<Param>,
        /// Grid as start:stop:points.
        #[arg(long, value_parser = parse_grid, allow_hyphen_values = true)]
        range: Option<Grid>,
    },
    /// Volterra trajectory with bound-state asymptotics and the Markov reference.
    Dynamics,
    /// BOC counts over (d, ω0) with exact-match BIC curves.
    PhaseDiagram {
        #[arg(long = "d-range", value_parser = parse_grid, allow_hyphen_values = true)]
        d_range: Option<Grid>,
        #[arg(long = "omega0-range", value_parser = parse_grid, allow_hyphen_values = true)]
        omega0_range: Option<Grid>,
    },
    /// BIC frequencies, their matching detunings, and all BOC candidates.
    Bics,
    /// Compare against exact diagonalisation of a discretised continuum.
    Verify {
        /// Max-norm tolerance for every comparison.
        #[arg(long)]
        tol: Option<f64>,
    },
    /// Canned reproduction runs.
    Reproduce {
        #[arg(value_enum)]
        target: Target,
    },
    /// Run a scenario file; its `kind` selects the computation.
    Run { path: PathBuf },
}

fn target_name(t: Target) -> &'static str {
    match t {
        Target::Fig2 => "fig2",
        Target::Fig3 => "fig3",
        Target::Fig3d => "fig3d",
        Target::Fig4 => "fig4",
    }
}

fn load_for(kind: Kind, path: &Option<PathBuf>) -> Result<ScenarioFile> {
    let file = match path {
        Some(p) => ScenarioFile::load(p)?,
        None => ScenarioFile::default(),
    };
    if let Some(k) = file.kind {
        if k != kind {
            return Err(schema(format!(
                "scenario kind {} does not match subcommand {}",
                k.name(),
                kind.name()
            )));
        }
    }
    Ok(file)
}

fn execute(cli: Cli) -> Result<Verdict> {
    if let Some(n) = cli.overrides.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| schema(format!("--threads: {e}")))?;
    }
    let (kind, file) = match &cli.command {
        Command::Run { path } => {
            let file = ScenarioFile::load(path)?;
            let kind = file
                .kind
                .ok_or_else(|| schema(format!("{}: missing \"kind\"", path.display())))?;
            (kind, file)
        }
        Command::Spectrum { param, range } => {
            let mut file = load_for(Kind::SpectrumScan, &cli.scenario)?;
            if param.is_some() || range.is_some() {
                let parameter = match param {
                    Some(Param::D) => ScanParameter::D,
                    Some(Param::Omega0) => ScanParameter::Omega0,
                    None => file.scan.map(|s| s.parameter).unwrap_or(ScanParameter::Omega0),
                };
                let grid = range
                    .or(file.scan.filter(|s| s.parameter == parameter).map(|s| s.grid))
                    .unwrap_or(match parameter {
                        ScanParameter::Omega0 => commands::DEFAULT_OMEGA0_GRID,
                        ScanParameter::D => commands::DEFAULT_D_GRID,
                    });
                file.scan = Some(ScanSpec { parameter, grid });
            }
            (Kind::SpectrumScan, file)
        }
        Command::Dynamics => (Kind::Dynamics, load_for(Kind::Dynamics, &cli.scenario)?),
        Command::PhaseDiagram { d_range, omega0_range } => {
            let mut file = load_for(Kind::PhaseDiagram, &cli.scenario)?;
            file.d_grid = d_range.or(file.d_grid);
            file.omega0_grid = omega0_range.or(file.omega0_grid);
            (Kind::PhaseDiagram, file)
        }
        Command::Bics => (Kind::Bics, load_for(Kind::Bics, &cli.scenario)?),
        Command::Verify { tol } => {
            let mut file = load_for(Kind::Verify, &cli.scenario)?;
            file.verify_tolerance = tol.or(file.verify_tolerance);
            (Kind::Verify, file)
        }
        Command::Reproduce { target } => {
            let mut file = load_for(Kind::Reproduce, &cli.scenario)?;
            file.target = Some(target_name(*target).to_string());
            if file.name.is_none() {
                file.name = file.target.clone();
            }
            (Kind::Reproduce, file)
        }
    };
    let resolved = resolve(kind, &file, &cli.overrides)?;
    for w in resolved.lattice().warnings() {
        log::warn!("{w}");
    }
    let mut out = OutputDir::create(&resolved)?;
    let verdict = match kind {
        Kind::SpectrumScan => commands::spectrum(&resolved, &mut out)?,
        Kind::Dynamics => commands::dynamics(&resolved, &mut out)?,
        Kind::PhaseDiagram => commands::phase(&resolved, &mut out)?,
        Kind::Bics => commands::bics(&resolved, &mut out)?,
        Kind::Verify => commands::verify(&resolved, &mut out)?,
        Kind::Reproduce => {
            let target = resolved
                .target
                .clone()
                .ok_or_else(|| schema("reproduce needs a \"target\""))?;
            commands::reproduce(&resolved, &target, &mut out)?
        }
    };
    for line in out.finish(&resolved)? {
        println!("{line}");
    }
    Ok(verdict)
}

/// Exit 1 for malformed input, 2 for numerical failures, with the module
/// that failed.
fn classify(e: &anyhow::Error) -> (u8, &'static str) {
    for cause in e.chain() {
        if cause.downcast_ref::<SchemaError>().is_some() || cause.downcast_ref::<mwtunnel::ModelError>().is_some() {
            return (1, "input");
        }
        if let Some(err) = cause.downcast_ref::<mwtunnel::Error>() {
            let module = match err {
                mwtunnel::Error::Model(_) => "model",
                mwtunnel::Error::Kernel(_) => "kernel",
                mwtunnel::Error::Spectrum(_) => "spectrum",
                mwtunnel::Error::Dynamics(_) => "dynamics",
                mwtunnel::Error::Oracle(_) => "oracle",
            };
            return (if err.is_input_error() { 1 } else { 2 }, module);
        }
    }
    (2, "io")
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match execute(cli) {
        Ok(Verdict::Done) => ExitCode::SUCCESS,
        Ok(Verdict::Failed(msg)) => {
            eprintln!("error [oracle]: {msg}");
            ExitCode::from(2)
        }
        Err(e) => {
            let (code, module) = classify(&e);
            eprintln!("error [{module}]: {e:#}");
            ExitCode::from(code)
        }
    }
}
