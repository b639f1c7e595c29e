mod report;
mod scenario;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use fbcsf::acceptance::{run_suite, SuiteOptions};
use fbcsf::models::{model_entropy, EntropyModel, MODEL_NAMES};

use scenario::Scenario;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Schema(String),
    #[error("numerical failure: {0}")]
    Numerical(String),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

impl CliError {
    pub fn schema(e: fbcsf::Error) -> Self {
        Self::Schema(e.to_string())
    }

    /// Errors raised while flowing or analysing: bad input stays a config
    /// error, anything else is numerical.
    pub fn from_run(e: fbcsf::Error) -> Self {
        use fbcsf::Error as E;
        match e {
            E::InvalidConfig(_) | E::WindowTooSmall(_) | E::EmptyGrid => Self::Schema(e.to_string()),
            _ => Self::Numerical(e.to_string()),
        }
    }

    pub fn exit_code(&self) -> u8 {
        match self {
            Self::Schema(_) | Self::Io(_) => 2,
            Self::Numerical(_) => 3,
        }
    }
}

#[derive(Parser)]
#[command(name = "fbcsf", version, about = "Free-boundary curve shortening flow lab")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Flow a scenario and write timeseries.csv, states/ and report.json.
    Run { config: PathBuf },
    /// Run the acceptance criteria.
    Verify {
        /// Only criteria whose name contains this string.
        #[arg(long)]
        filter: Option<String>,
        /// Flip the sign of the torsion term in the curvature identity.
        #[arg(long, hide = true)]
        inject_torsion_sign_error: bool,
    },
    /// Flow a scenario and report the entropy scan.
    Entropy { config: PathBuf },
    /// List model curves and planar model entropies.
    Models {
        #[arg(long)]
        list: bool,
        /// Print model entropies at this quadrature window.
        #[arg(long)]
        entropy: Option<f64>,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Run { config } => run_scenario(&config, false),
        Command::Entropy { config } => run_scenario(&config, true),
        Command::Verify { filter, inject_torsion_sign_error } => Ok(verify(filter.as_deref(), inject_torsion_sign_error)),
        Command::Models { list, entropy } => models(list, entropy),
    };
    match result {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("fbcsf: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}

fn run_scenario(path: &std::path::Path, entropy_only: bool) -> Result<bool, CliError> {
    let scenario = Scenario::load(path)?;
    let out = scenario.output_dir();
    let outcome = report::execute(&scenario, entropy_only)?;
    outcome.write(&out)?;
    for check in &outcome.report.checks {
        println!("{}", check.line());
    }
    if entropy_only {
        if let Some(e) = &outcome.report.entropy {
            println!(
                "entropy_sup {:.6}  boundary_sup {:.6}  interior_sup {:.6}  monotonicity_violation {:.3e}",
                e.entropy_sup, e.boundary_sup, e.interior_sup, e.monotonicity_violation
            );
        }
    } else {
        let r = &outcome.report;
        let t_est = r.singularity.t_est.map_or("-".to_string(), |t| format!("{t:.6}"));
        println!("{}: {:?} at t={:.6}, T_est {t_est}, {:?}", r.name, r.termination, r.final_time, r.singularity.type_flag);
    }
    println!("output: {}", out.display());
    Ok(outcome.report.passed)
}

fn verify(filter: Option<&str>, flip: bool) -> bool {
    let outcomes = run_suite(filter, &SuiteOptions { flip_torsion_term: flip });
    for o in &outcomes {
        println!("{}", o.line());
    }
    let failed = outcomes.iter().filter(|o| !o.passed).count();
    let secs: f64 = outcomes.iter().map(|o| o.seconds).sum();
    println!("{} passed, {failed} failed, {secs:.1}s", outcomes.len() - failed);
    !outcomes.is_empty() && failed == 0
}

fn models(list: bool, window: Option<f64>) -> Result<bool, CliError> {
    if list || window.is_none() {
        for name in MODEL_NAMES {
            println!("{name}");
        }
    }
    if let Some(w) = window {
        use EntropyModel::*;
        for kind in [Line, Circle, Semicircle, GrimReaper, HalfGrimReaper] {
            let e = model_entropy(kind, w).map_err(CliError::schema)?;
            println!("{:<16} {e:.6}", serde_json::to_value(kind).ok().and_then(|v| v.as_str().map(String::from)).unwrap_or_default());
        }
    }
    Ok(true)
}
