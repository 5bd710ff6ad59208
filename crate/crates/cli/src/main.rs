use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use bimod::Mode;
use bimod_cli::{run_pipeline, verify_bundle, MapSpec, RunConfig, Stage};

#[derive(Parser)]
#[command(name = "bimod", version, about = "Rotation intervals, induced Markov maps and invariant densities of bimodal circle maps")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Critical points and rotation brackets.
    Rotnum(Flags),
    /// Continued fractions of both rotation numbers.
    Cf(Flags),
    /// Partial sums of the two summability series.
    Conditions(Flags),
    /// Return partition of the decreasing interval and its diagnostics.
    Induce(Flags),
    /// Invariant densities, residuals and Lyapunov exponents.
    Measure(Flags),
    /// Every stage.
    All(Flags),
    /// Every stage, then the acceptance thresholds; fails if any is missed.
    Verify(Flags),
    /// Print the default configuration as TOML.
    Config,
}

#[derive(Args, Clone)]
struct Flags {
    /// TOML run configuration; flags below override it.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    output: Option<PathBuf>,
    /// Arnol'd amplitude.
    #[arg(long)]
    a: Option<f64>,
    /// Arnol'd shift.
    #[arg(long)]
    omega: Option<f64>,
    /// Use a test map instead: `doubling` or `affine`.
    #[arg(long)]
    harness: Option<String>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    resolution: Option<usize>,
    #[arg(long)]
    explore_tol: Option<f64>,
    #[arg(long)]
    n_bins: Option<usize>,
    #[arg(long)]
    n_seeds: Option<usize>,
    #[arg(long)]
    n_iter: Option<usize>,
    #[arg(long)]
    bracket_width: Option<f64>,
    /// Run on the calling thread only.
    #[arg(long)]
    sequential: bool,
}

fn config(flags: &Flags) -> Result<RunConfig, String> {
    let mut cfg = match &flags.config {
        Some(path) => {
            let text = std::fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))?;
            RunConfig::from_toml(&text)?
        }
        None => RunConfig::default(),
    };
    match flags.harness.as_deref() {
        None => {}
        Some("doubling") => cfg.map = MapSpec::Doubling,
        Some("affine") => cfg.map = MapSpec::Affine { p: 1.0 / 3.0 },
        Some(other) => return Err(format!("unknown harness map {other:?}")),
    }
    if flags.a.is_some() || flags.omega.is_some() {
        let (a0, w0, lp, lm) = match cfg.map {
            MapSpec::Arnold { a, omega, ell_plus, ell_minus } => (a, omega, ell_plus, ell_minus),
            _ => (1.0, 0.0, 2.0, 2.0),
        };
        cfg.map = MapSpec::Arnold { a: flags.a.unwrap_or(a0), omega: flags.omega.unwrap_or(w0), ell_plus: lp, ell_minus: lm };
    }
    if let Some(v) = &flags.output {
        cfg.output_dir = v.clone();
    }
    if let Some(v) = flags.seed {
        cfg.seed = v;
    }
    if let Some(v) = flags.resolution {
        cfg.budgets.resolution = v;
    }
    if let Some(v) = flags.explore_tol {
        cfg.tolerances.explore_tol = v;
    }
    if let Some(v) = flags.n_bins {
        cfg.budgets.n_bins = v;
    }
    if let Some(v) = flags.n_seeds {
        cfg.budgets.n_seeds = v;
    }
    if let Some(v) = flags.n_iter {
        cfg.budgets.n_iter = v;
    }
    if let Some(v) = flags.bracket_width {
        cfg.tolerances.bracket_width = v;
    }
    if flags.sequential {
        cfg.mode = Mode::Sequential;
    }
    Ok(cfg)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let (flags, stage, verify) = match cli.command {
        Command::Config => {
            print!("{}", RunConfig::default().to_toml());
            return ExitCode::SUCCESS;
        }
        Command::Rotnum(f) => (f, Stage::Rotnum, false),
        Command::Cf(f) => (f, Stage::Cf, false),
        Command::Conditions(f) => (f, Stage::Conditions, false),
        Command::Induce(f) => (f, Stage::Induce, false),
        Command::Measure(f) => (f, Stage::Measure, false),
        Command::All(f) => (f, Stage::All, false),
        Command::Verify(f) => (f, Stage::All, true),
    };
    let cfg = match config(&flags) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error: stage config: {e}");
            return ExitCode::FAILURE;
        }
    };
    let bundle = match run_pipeline(&cfg, stage) {
        Ok(b) => b,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::FAILURE;
        }
    };
    for f in &bundle.files {
        println!("wrote {}", f.display());
    }
    if !verify {
        return ExitCode::SUCCESS;
    }
    let checks = verify_bundle(&bundle);
    for c in &checks {
        println!("{} {}: {}", c.id, if c.pass { "PASS" } else { "FAIL" }, c.detail);
    }
    if checks.iter().all(|c| c.pass) {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
