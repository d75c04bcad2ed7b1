//! `clarke`: capacities, action spectra, periodic orbits, indices and Morse
//! complexes of convex Hamiltonian systems.
//!
//! Exit status: 0 on success, 1 on invalid input, 2 on a numerical failure
//! and 3 when an invariant audit fails.

mod commands;
mod config;
mod report;
mod verify;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use config::{GaugeChoice, ProfileChoice, RunConfig, Suite};

/// Environment variable holding the default worker count.
pub const WORKERS_ENV: &str = "CLARKE_WORKERS";

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("invalid input: {0}")]
    Validation(String),
    #[error(transparent)]
    Core(clarke_core::Error),
    #[error("i/o: {0}")]
    Io(#[from] std::io::Error),
}

impl From<clarke_core::Error> for CliError {
    fn from(e: clarke_core::Error) -> Self {
        CliError::Core(e)
    }
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Validation(_) => 1,
            CliError::Core(e) if e.is_validation() => 1,
            CliError::Core(_) | CliError::Io(_) => 2,
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "clarke", version, about = "Periodic orbits and capacities of convex Hamiltonian systems")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    #[command(flatten)]
    common: Common,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Minimal action of closed characteristics on the boundary.
    Capacity,
    /// Actions of closed characteristics up to `--t-max`.
    Spectrum,
    /// Critical points of the reduced dual functional.
    Orbits,
    /// Index report with cross-method agreement flags.
    Index,
    /// Filtered mod-2 Morse complex and Betti profile.
    Complex,
    /// Property suite with a pass/fail summary.
    Verify {
        #[arg(long, value_enum)]
        suite: Option<Suite>,
        #[arg(long)]
        trials: Option<usize>,
    },
}

/// Flags shared by all commands; they override values read from `--config`.
#[derive(Debug, Args)]
struct Common {
    /// TOML configuration with `[problem]`, `[numerics]` and `[outputs]` sections.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true, value_enum)]
    gauge: Option<GaugeChoice>,
    /// Comma-separated ellipsoid radii.
    #[arg(long, global = true, value_delimiter = ',')]
    radii: Option<Vec<f64>>,
    #[arg(long, global = true)]
    n: Option<usize>,
    /// Perturbation amplitude of the perturbed ball.
    #[arg(long, global = true)]
    eps: Option<f64>,
    #[arg(long, global = true, value_enum)]
    profile: Option<ProfileChoice>,
    #[arg(long, global = true)]
    eta: Option<f64>,
    #[arg(long, global = true)]
    p: Option<f64>,
    /// Slope of the p-homogeneous profile at the boundary.
    #[arg(long, global = true)]
    slope: Option<f64>,
    /// Bump phase of the vanishing configuration.
    #[arg(long, global = true)]
    theta0: Option<f64>,
    /// Scale of the vanishing configuration.
    #[arg(long, global = true)]
    lambda: Option<f64>,
    /// Head cutoff override.
    #[arg(long = "head-cutoff", global = true)]
    head_cutoff: Option<usize>,
    #[arg(long, global = true)]
    m: Option<usize>,
    #[arg(long, global = true)]
    q: Option<usize>,
    #[arg(long, global = true)]
    tolerance: Option<f64>,
    #[arg(long, global = true)]
    multistarts: Option<usize>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[arg(long = "bounding-radius", global = true)]
    bounding_radius: Option<f64>,
    #[arg(long = "t-max", global = true)]
    t_max: Option<f64>,
    /// Worker threads; overrides the environment default.
    #[arg(long, global = true)]
    workers: Option<usize>,
    /// Write the JSON report here instead of standard output.
    #[arg(long, global = true)]
    report: Option<PathBuf>,
    #[arg(long = "csv-dir", global = true)]
    csv_dir: Option<PathBuf>,
    #[arg(long = "plot-data", global = true)]
    plot_data: bool,
    /// Include wall-clock seconds per stage in the report.
    #[arg(long = "wall-clock", global = true)]
    wall_clock: bool,
}

fn resolve(cli: &Cli) -> Result<RunConfig, CliError> {
    let c = &cli.common;
    let mut cfg = match &c.config {
        Some(path) => RunConfig::from_toml(&std::fs::read_to_string(path).map_err(|e| CliError::Validation(format!("{}: {e}", path.display())))?)?,
        None => RunConfig::default(),
    };
    let pr = &mut cfg.problem;
    macro_rules! set {
        ($dst:expr, $src:expr) => {
            if let Some(v) = $src.clone() {
                $dst = v;
            }
        };
    }
    set!(pr.gauge, c.gauge);
    set!(pr.radii, c.radii);
    set!(pr.n, c.n);
    if pr.gauge == GaugeChoice::Ellipsoid && c.radii.is_some() {
        pr.n = pr.radii.len();
    }
    set!(pr.eps, c.eps);
    set!(pr.profile, c.profile);
    set!(pr.eta, c.eta);
    set!(pr.p, c.p);
    set!(pr.t, c.slope);
    set!(pr.vanishing.theta0, c.theta0);
    set!(pr.vanishing.lambda, c.lambda);
    let nm = &mut cfg.numerics;
    if c.head_cutoff.is_some() {
        nm.head_cutoff = c.head_cutoff;
    }
    if c.m.is_some() {
        nm.m = c.m;
    }
    if c.q.is_some() {
        nm.q = c.q;
    }
    set!(nm.gradient_tolerance, c.tolerance);
    set!(nm.multistarts, c.multistarts);
    set!(nm.seed, c.seed);
    if c.bounding_radius.is_some() {
        nm.bounding_radius = c.bounding_radius;
    }
    if c.t_max.is_some() {
        nm.t_max = c.t_max;
    }
    if c.workers.is_some() {
        nm.workers = c.workers;
    }
    if nm.workers.is_none() {
        if let Ok(v) = std::env::var(WORKERS_ENV) {
            nm.workers = Some(v.parse().map_err(|_| CliError::Validation(format!("{WORKERS_ENV} must be a positive integer, got {v:?}")))?);
        }
    }
    let out = &mut cfg.outputs;
    if c.report.is_some() {
        out.report = c.report.clone();
    }
    if c.csv_dir.is_some() {
        out.csv_dir = c.csv_dir.clone();
    }
    out.plot_data |= c.plot_data;
    out.wall_clock |= c.wall_clock;
    cfg.command = match &cli.command {
        Command::Capacity => "capacity",
        Command::Spectrum => "spectrum",
        Command::Orbits => "orbits",
        Command::Index => "index",
        Command::Complex => "complex",
        Command::Verify { suite, trials } => {
            set!(cfg.verify.suite, suite);
            set!(cfg.verify.trials, trials);
            "verify"
        }
    }
    .to_string();
    Ok(cfg)
}

fn run(cli: &Cli) -> Result<u8, CliError> {
    let cfg = resolve(cli)?;
    for w in cfg.validate()? {
        eprintln!("warning: {w}");
    }
    let go = || commands::dispatch(&cfg);
    let report = match cfg.numerics.workers {
        Some(0) => return Err(CliError::Validation("workers must be positive".into())),
        Some(w) => rayon::ThreadPoolBuilder::new()
            .num_threads(w)
            .build()
            .map_err(|e| CliError::Validation(format!("worker pool: {e}")))?
            .install(go)?,
        None => go()?,
    };
    report.write(&cfg)?;
    eprintln!("{}", report.summary());
    Ok(if report.audits_passed() { 0 } else { 3 })
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
