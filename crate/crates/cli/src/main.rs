use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use mimo_spatia_cli::app::{self, Failure};

#[derive(Parser)]
#[command(name = "mimo-spatia", version, about = "Spatially correlated massive-MIMO channel experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the experiment described by a config file.
    Run {
        config: PathBuf,
        /// Output directory; overrides `output.dir`.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Master seed; overrides `monte_carlo.seed`.
        #[arg(long)]
        seed: Option<u64>,
        /// Worker threads (default: MIMO_SPATIA_THREADS, then all cores).
        #[arg(long)]
        threads: Option<usize>,
    },
    /// Check the numerics against closed-form results.
    Selftest,
}

fn run(cli: Cli) -> Result<(), Failure> {
    match cli.command {
        Command::Run { config, out, seed, threads } => {
            if let Some(n) = app::resolve_threads(threads)? {
                if n == 0 {
                    return Err(Failure::Config("--threads must be positive".into()));
                }
                rayon::ThreadPoolBuilder::new()
                    .num_threads(n)
                    .build_global()
                    .map_err(|e| Failure::Numerical(format!("thread pool: {e}")))?;
            }
            for path in app::run_config_file(&config, out.as_deref(), seed)? {
                println!("wrote {}", path.display());
            }
            Ok(())
        }
        Command::Selftest => {
            let checks = app::selftest()?;
            let failed = checks.iter().filter(|c| !c.passed).count();
            for c in &checks {
                println!("{} {}: {}", if c.passed { "PASS" } else { "FAIL" }, c.name, c.detail);
            }
            println!("{} of {} checks passed", checks.len() - failed, checks.len());
            if failed > 0 {
                Err(Failure::Numerical(format!("{failed} selftest checks failed")))
            } else {
                Ok(())
            }
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("mimo-spatia: {f}");
            ExitCode::from(f.exit_code() as u8)
        }
    }
}
