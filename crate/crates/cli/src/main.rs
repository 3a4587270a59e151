use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use phasesync::drift::EvalProtocol;
use phasesync_cli::commands::{
    cmd_analyze, cmd_generate, cmd_simulate, write_output, AnalyzeOptions,
};
use phasesync_cli::CliError;

#[derive(Parser)]
#[command(
    name = "phasesync",
    version,
    about = "Camera timestamp phase/period analysis and sync simulation"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Fit, classify and evaluate drift for every device in a trace CSV.
    Analyze {
        input: PathBuf,
        /// Training prefix sizes, comma separated.
        #[arg(long, value_delimiter = ',', default_value = "25,50,200")]
        train: Vec<usize>,
        /// Trailing test window size.
        #[arg(long, default_value_t = 1000)]
        test: usize,
        /// Skip the slot re-assignment refinement.
        #[arg(long)]
        no_refine: bool,
        /// Report path; stdout when omitted.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Write a synthetic trace CSV from a spec file.
    Generate {
        spec: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run seeded sync sessions from a session config.
    Simulate {
        config: PathBuf,
        #[arg(long, default_value_t = 1)]
        seeds: u64,
        /// Output directory for per-seed reports and summary.json.
        #[arg(long)]
        out: PathBuf,
    },
}

fn run(cli: Cli) -> Result<i32, CliError> {
    match cli.command {
        Command::Analyze {
            input,
            train,
            test,
            no_refine,
            out,
        } => {
            let options = AnalyzeOptions {
                protocol: EvalProtocol {
                    train_sizes: train,
                    test_size: test,
                },
                refine: !no_refine,
            };
            let outcome = cmd_analyze(&input, &options)?;
            write_output(out.as_deref(), &outcome.json)?;
            for d in &outcome.report.devices {
                for w in &d.warnings {
                    eprintln!("warning: {}: {w}", d.device_id);
                }
            }
            if outcome.failed_devices > 0 {
                eprintln!(
                    "error: {} device(s) could not be fitted",
                    outcome.failed_devices
                );
                return Ok(3);
            }
            Ok(0)
        }
        Command::Generate { spec, out } => {
            let rows = cmd_generate(&spec, &out)?;
            eprintln!("wrote {rows} rows to {}", out.display());
            Ok(0)
        }
        Command::Simulate { config, seeds, out } => {
            let outcome = cmd_simulate(&config, seeds, &out)?;
            println!("{}", outcome.summary_line);
            Ok(if outcome.summary.failed > 0 { 3 } else { 0 })
        }
    }
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
    match run(cli) {
        Ok(code) => ExitCode::from(code as u8),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
