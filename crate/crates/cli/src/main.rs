use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use dicke_cli::{prepare, run, Command, Overrides};
use dicke_core::leggett_garg::LgVariant;

/// Retarded collective emission of a Dicke-state emitter array, its
/// effective cavity model and Leggett-Garg tests.
#[derive(Parser)]
#[command(name = "dicke", version)]
struct Cli {
    #[command(subcommand)]
    command: Sub,
}

#[derive(Subcommand)]
enum Sub {
    /// Solve the retarded decay for each N and report rates and periods.
    Dynamics(RunArgs),
    /// Density of states, Lorentzian fit and the derived kappa.
    Dos(RunArgs),
    /// Leggett-Garg scans of the effective model.
    Lg(RunArgs),
    /// dynamics, dos, effective model and lg in one run, with a manifest.
    Pipeline(RunArgs),
}

#[derive(Args)]
struct RunArgs {
    /// TOML run configuration; built-in defaults when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Emitter counts (repeat or comma-separate).
    #[arg(long, value_delimiter = ',')]
    n: Vec<usize>,
    /// Time step: solver step, or the scan step for `lg`.
    #[arg(long)]
    dt: Option<f64>,
    /// Time window: solver window, or the scan window for `lg`.
    #[arg(long)]
    t_max: Option<f64>,
    #[arg(long)]
    g_mev: Option<f64>,
    #[arg(long)]
    kappa_mev: Option<f64>,
    #[arg(long)]
    gamma_per_ns: Option<f64>,
    /// Leggett-Garg variants (repeat or comma-separate).
    #[arg(long, value_delimiter = ',')]
    variant: Vec<LgVariant>,
    /// Fixed first interval for the original Leggett-Garg functional.
    #[arg(long)]
    t1: Option<f64>,
    /// Output directory; falls back to the config, then $DICKE_OUT_DIR, then ./out.
    #[arg(long)]
    out_dir: Option<PathBuf>,
}

impl RunArgs {
    fn overrides(&self) -> Overrides {
        Overrides {
            n: self.n.clone(),
            dt: self.dt,
            t_max: self.t_max,
            g_mev: self.g_mev,
            kappa_mev: self.kappa_mev,
            gamma_per_ns: self.gamma_per_ns,
            variants: self.variant.clone(),
            t1: self.t1,
            out_dir: self.out_dir.clone(),
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let (command, args) = match &cli.command {
        Sub::Dynamics(a) => (Command::Dynamics, a),
        Sub::Dos(a) => (Command::Dos, a),
        Sub::Lg(a) => (Command::Lg, a),
        Sub::Pipeline(a) => (Command::Pipeline, a),
    };
    let result = prepare(command, args.config.as_deref(), &args.overrides())
        .and_then(|cfg| run(command, &cfg));
    match result {
        Ok(outcome) => {
            for file in &outcome.files {
                println!("{}", outcome.out_dir.join(file).display());
            }
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
