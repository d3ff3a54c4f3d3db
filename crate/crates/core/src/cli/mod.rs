//! The `pbs` command runner.

use std::ffi::OsString;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use clap::{Parser, ValueEnum};

use crate::analysis::{
    convergence_study, detect_oscillation, spatial_profile, tabulate_map, AnalysisError, ProfileTable,
};
use crate::models::{build_map, ConcentrationMap, IonSystem, ModelError, Source, StericModel};
use crate::solver::{solve, PBProblem, SolveError, SolveOptions};
use crate::spectral::lgl_grid;

pub mod config;
mod output;

pub use config::{parse_config, serialize, ConfigError, DomainConfig, Nodal, RunConfig, RunSettings};

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Command {
    /// Solve the boundary-value problem and write solution.csv.
    Solve,
    /// Tabulate f over the potential range and write fprofile.csv.
    Fprofile,
    /// Tabulate the Λ → ∞ limit map and write limit.csv.
    Limit,
    /// Locate extrema of f and write oscillation.txt.
    Oscillation,
    /// Sweep the run lambdas against the limit solve and write converge.csv.
    Converge,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum LambdaArg {
    Finite(f64),
    Infinite,
}

fn parse_lambda(s: &str) -> Result<LambdaArg, String> {
    let t = s.trim().to_ascii_lowercase();
    if matches!(t.as_str(), "inf" | "+inf" | "infinity" | "+infinity") {
        return Ok(LambdaArg::Infinite);
    }
    match t.parse::<f64>() {
        Ok(v) if v.is_finite() && v >= 0.0 => Ok(LambdaArg::Finite(v)),
        _ => Err(format!("expected a number >= 0 or \"inf\", got {s:?}")),
    }
}

#[derive(Debug, Parser)]
#[command(name = "pbs", version, about = "Poisson-Boltzmann equations with steric effects")]
pub struct Cli {
    #[arg(value_enum)]
    pub command: Command,
    #[arg(long)]
    pub config: PathBuf,
    /// Steric strength; "inf" selects the limit map.
    #[arg(long, value_parser = parse_lambda)]
    pub lambda: Option<LambdaArg>,
    /// Output directory (created if missing).
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long = "grid-size")]
    pub grid_size: Option<usize>,
    /// Newton on the joint (φ, ln c₀) system.
    #[arg(long)]
    pub coupled: bool,
}

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("usage: {0}")]
    Usage(String),
    #[error("config: {0}")]
    Config(#[from] ConfigError),
    #[error("model: {0}")]
    Model(#[from] ModelError),
    #[error("solver{}: {source}", stage.as_ref().map(|s| format!(" ({s})")).unwrap_or_default())]
    Solver { stage: Option<String>, source: SolveError },
    #[error("io: {}: {source}", path.display())]
    Io { path: PathBuf, source: std::io::Error },
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 2,
            CliError::Config(_) => 3,
            CliError::Model(_) => 4,
            CliError::Solver { .. } => 5,
            CliError::Io { .. } => 6,
        }
    }
}

impl From<SolveError> for CliError {
    fn from(source: SolveError) -> Self {
        match source {
            SolveError::Model(m) => CliError::Model(m),
            SolveError::InvalidProblem(msg) => CliError::Config(ConfigError::Structure(msg)),
            source => CliError::Solver { stage: None, source },
        }
    }
}

impl From<AnalysisError> for CliError {
    fn from(e: AnalysisError) -> Self {
        match e {
            AnalysisError::InvalidInput(msg) => CliError::Config(ConfigError::Structure(msg)),
            AnalysisError::Model(m) => CliError::Model(m),
            AnalysisError::Solve { stage, source } => CliError::Solver {
                stage: Some(stage),
                source,
            },
        }
    }
}

pub(crate) fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> CliError + '_ {
    move |source| CliError::Io {
        path: path.to_path_buf(),
        source,
    }
}

/// Parses arguments, runs the command and returns the process exit code.
pub fn main_with<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return e.exit_code();
        }
    };
    match run(&cli) {
        Ok(summary) => {
            println!("{summary}");
            0
        }
        Err(e) => {
            eprintln!("pbs: {e}");
            e.exit_code()
        }
    }
}

/// Runs one command and returns its summary line.
pub fn run(cli: &Cli) -> Result<String, CliError> {
    let text = std::fs::read_to_string(&cli.config).map_err(io_err(&cli.config))?;
    let mut cfg = parse_config(&text)?;
    if let Some(l) = cli.grid_size {
        let d = cfg
            .domain
            .as_mut()
            .ok_or_else(|| CliError::Usage("--grid-size needs a [domain] section".into()))?;
        if l < 2 {
            return Err(CliError::Usage(format!("--grid-size must be at least 2, got {l}")));
        }
        d.grid_size = l;
    }
    if cli.coupled && cli.command != Command::Solve {
        return Err(CliError::Usage("--coupled applies to solve only".into()));
    }
    if cli.lambda.is_some() && matches!(cli.command, Command::Limit | Command::Converge) {
        return Err(CliError::Usage(format!("--lambda does not apply to {:?}", cli.command).to_lowercase()));
    }
    let base = cli
        .config
        .parent()
        .map(Path::to_path_buf)
        .unwrap_or_default();
    let out = cli
        .out
        .clone()
        .or_else(|| cfg.run.out.as_ref().map(|o| base.join(o)))
        .unwrap_or_else(|| PathBuf::from("."));
    std::fs::create_dir_all(&out).map_err(io_err(&out))?;
    let opts = SolveOptions {
        coupled: cli.coupled,
        ..SolveOptions::default()
    };

    match cli.command {
        Command::Fprofile => {
            let map = selected_map(&cfg.system, cli.lambda)?;
            let table = profile(&cfg, map)?;
            let report = detect_oscillation(&table);
            let path = out.join("fprofile.csv");
            output::write(&path, &output::profile_csv(&table, ""))?;
            Ok(format!(
                "fprofile: {} rows, lambda={}, monotone={}, extrema={} -> {}",
                table.len(),
                lambda_label(table.map()),
                report.is_monotone,
                report.extremum_locations.len(),
                path.display()
            ))
        }
        Command::Oscillation => {
            let map = selected_map(&cfg.system, cli.lambda)?;
            let table = profile(&cfg, map)?;
            let report = detect_oscillation(&table);
            let path = out.join("oscillation.txt");
            output::write(&path, &output::oscillation_txt(&report))?;
            Ok(format!(
                "oscillation: lambda={}, monotone={}, extrema={} -> {}",
                lambda_label(table.map()),
                report.is_monotone,
                report.extremum_locations.len(),
                path.display()
            ))
        }
        Command::Limit => {
            let map: Arc<dyn ConcentrationMap> = Arc::from(build_map(&cfg.system, Source::Limit)?);
            let table = profile(&cfg, map)?;
            let path = out.join("limit.csv");
            let extremes = limit_constants(&cfg.system, cfg.run.phi_min)?;
            output::write(&path, &output::profile_csv(&table, &extremes))?;
            Ok(format!("limit: {} rows -> {}", table.len(), path.display()))
        }
        Command::Solve => {
            let map = selected_map(&cfg.system, cli.lambda)?;
            let prob = problem(&cfg, &base, map)?;
            let sol = solve(&prob, &vec![0.0; prob.grid().len()], &opts)?;
            let spatial = spatial_profile(&prob, &sol)?;
            let path = out.join("solution.csv");
            output::write(&path, &output::solution_csv(&prob, &sol, &spatial))?;
            Ok(format!(
                "solve: lambda={}, residual={}, iterations={}, monotone={} -> {}",
                lambda_label(prob.map()),
                config::fmt(sol.residual_inf),
                sol.newton_iters,
                spatial.is_monotone,
                path.display()
            ))
        }
        Command::Converge => {
            let lambdas = &cfg.run.lambdas;
            if lambdas.len() < 2 {
                return Err(ConfigError::Value {
                    section: "run",
                    key: "lambdas".into(),
                    msg: "converge needs at least two values".into(),
                }
                .into());
            }
            let map: Arc<dyn ConcentrationMap> = Arc::from(build_map(&cfg.system, Source::Finite)?);
            let prob = problem(&cfg, &base, map)?;
            let report = convergence_study(&prob, lambdas, &opts)?;
            let path = out.join("converge.csv");
            output::write(&path, &output::converge_csv(&report))?;
            Ok(format!(
                "converge: {} lambdas, monotone_decay={}, last sup error={} -> {}",
                lambdas.len(),
                report.monotone_decay,
                config::fmt(*report.sup_errors.last().unwrap_or(&f64::NAN)),
                path.display()
            ))
        }
    }
}

fn lambda_label(map: &dyn ConcentrationMap) -> String {
    map.lambda().map_or_else(|| "inf".to_string(), config::fmt)
}

fn selected_map(sys: &IonSystem, lambda: Option<LambdaArg>) -> Result<Arc<dyn ConcentrationMap>, CliError> {
    let map = match lambda {
        None => build_map(sys, Source::Finite)?,
        Some(LambdaArg::Finite(l)) => build_map(&sys.with_lambda(l)?, Source::Finite)?,
        Some(LambdaArg::Infinite) => build_map(sys, Source::Limit)?,
    };
    Ok(Arc::from(map))
}

fn profile(cfg: &RunConfig, map: Arc<dyn ConcentrationMap>) -> Result<ProfileTable, CliError> {
    let r = &cfg.run;
    Ok(tabulate_map(map, r.phi_min, r.phi_max, r.profile_intervals)?)
}

fn limit_constants(sys: &IonSystem, phi: f64) -> Result<String, CliError> {
    if !matches!(sys.model(), StericModel::WeightedA1 { .. }) {
        return Ok(String::new());
    }
    let e = crate::models::limit_weighted_a1(sys, phi)?;
    let m = e.m_star.unwrap_or(f64::NAN);
    let big = e.big_m_star.unwrap_or(f64::NAN);
    Ok(format!("# m_star={}, M_star={}\n", config::fmt(m), config::fmt(big)))
}

fn problem(cfg: &RunConfig, base: &Path, map: Arc<dyn ConcentrationMap>) -> Result<PBProblem, CliError> {
    let d = cfg
        .domain
        .as_ref()
        .ok_or_else(|| ConfigError::Structure("missing [domain] section".into()))?;
    let grid = Arc::new(lgl_grid(d.grid_size).map_err(|e| CliError::Usage(e.to_string()))?);
    let n = grid.len();
    let eps = d.eps.values(n, base)?;
    let rho0 = d.rho0.values(n, base)?;
    Ok(PBProblem::new(grid, eps, rho0, d.eta, d.phi_bd_left, d.phi_bd_right, map)?)
}
