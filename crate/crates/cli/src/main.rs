use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use posobs_cli::commands::{self, SimOptions};
use posobs_cli::problem::ProblemFile;
use posobs_cli::{CliError, Status};

#[derive(Parser)]
#[command(
    name = "posobs",
    version,
    about = "Interval observers for switched positive systems"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Evaluate the observer conditions for the file's observer block
    Check { file: PathBuf },
    /// Search for an observer gain and emit the completed problem file
    Synthesize {
        file: PathBuf,
        #[arg(long, default_value_t = commands::DEFAULT_BUDGET)]
        budget: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Simulate plant and observers, write a CSV trace and check the bracket
    Simulate {
        file: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long, value_name = "SEED")]
        sample_truth: Option<u64>,
        #[arg(long)]
        step: Option<f64>,
        #[arg(long, conflicts_with = "steps")]
        horizon: Option<f64>,
        #[arg(long)]
        steps: Option<usize>,
        #[arg(long)]
        tol: Option<f64>,
    },
    /// Check and simulate one of the bundled examples (4.1 or 4.2)
    Reproduce { example: String },
}

fn create(path: &PathBuf) -> Result<BufWriter<File>, CliError> {
    File::create(path)
        .map(BufWriter::new)
        .map_err(|e| CliError::Input(format!("cannot write {}: {e}", path.display())))
}

fn run(cli: Cli) -> Result<Status, CliError> {
    let stdout = io::stdout();
    let mut stdout = stdout.lock();
    match cli.command {
        Command::Check { file } => commands::check_file(&file, &mut stdout),
        Command::Synthesize {
            file,
            budget,
            seed,
            out,
        } => {
            let problem = ProblemFile::read(&file)?;
            let (status, emitted) = match &out {
                Some(_) => commands::synthesize(&problem, budget, seed, &mut stdout)?,
                None => commands::synthesize(&problem, budget, seed, &mut io::stderr())?,
            };
            if let Some(p) = emitted {
                let text = p.to_json();
                let res = match &out {
                    Some(path) => create(path)?.write_all(text.as_bytes()),
                    None => stdout.write_all(text.as_bytes()),
                };
                res.map_err(|e| CliError::Input(format!("i/o error: {e}")))?;
            }
            Ok(status)
        }
        Command::Simulate {
            file,
            out,
            sample_truth,
            step,
            horizon,
            steps,
            tol,
        } => {
            let problem = ProblemFile::read(&file)?;
            let opts = SimOptions {
                sample_truth,
                step,
                horizon,
                steps,
                tol,
            };
            match out {
                Some(path) => {
                    let mut csv = create(&path)?;
                    let status = commands::simulate(&problem, &opts, &mut csv, &mut stdout)?;
                    csv.flush()
                        .map_err(|e| CliError::Input(format!("i/o error: {e}")))?;
                    Ok(status)
                }
                None => commands::simulate(&problem, &opts, &mut stdout, &mut io::stderr()),
            }
        }
        Command::Reproduce { example } => commands::reproduce(&example, &mut stdout),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let code = match run(cli) {
        Ok(status) => status.exit_code(),
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    };
    ExitCode::from(code as u8)
}
