use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use qgamma_cli::{run, CliError, Command, Context, RunConfig};

#[derive(Parser)]
#[command(name = "qgamma", version, about = "Nonlocal Q-tensor free energy experiments")]
struct Args {
    /// TOML run configuration.
    #[arg(long, global = true, default_value = "qgamma.toml")]
    config: PathBuf,
    /// Output directory (overrides `[output] directory`).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Worker threads; 0 uses the rayon default.
    #[arg(long, global = true, default_value_t = 0)]
    threads: usize,
    /// RNG seed (overrides `seed` in the config).
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand, Clone, Copy)]
enum Cmd {
    /// Check the kernel assumptions and grid resolution.
    Validate,
    /// Moment constants and Frank coefficients with the reference table.
    Frank,
    /// Singular potential along the uniaxial ray.
    Psi,
    /// Bulk ground state.
    Bulk,
    /// Minimize the periodic or bounded functional.
    Minimize,
    /// Gamma-convergence sweep against the director limit.
    Sweep,
    /// Electrostatic potential for the lifted boundary field.
    Estat,
}

impl From<Cmd> for Command {
    fn from(c: Cmd) -> Self {
        match c {
            Cmd::Validate => Command::Validate,
            Cmd::Frank => Command::Frank,
            Cmd::Psi => Command::Psi,
            Cmd::Bulk => Command::Bulk,
            Cmd::Minimize => Command::Minimize,
            Cmd::Sweep => Command::Sweep,
            Cmd::Estat => Command::Estat,
        }
    }
}

fn main() -> ExitCode {
    let args = Args::parse();
    match go(&args) {
        Ok(files) => {
            for f in files {
                println!("wrote {}", f.display());
            }
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

fn go(args: &Args) -> Result<Vec<PathBuf>, CliError> {
    if args.threads > 0 {
        rayon::ThreadPoolBuilder::new()
            .num_threads(args.threads)
            .build_global()
            .map_err(|e| CliError::Config(e.to_string()))?;
    }
    let cfg = RunConfig::load(&args.config)?;
    let ctx = Context::new(cfg, args.out.clone(), args.seed);
    run(args.cmd.into(), &ctx)
}
