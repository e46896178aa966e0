use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

#[derive(Parser)]
#[command(name = "seamlab", version, about = "Run seamlab experiments and summarise their results")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the experiment described by a JSON config
    Run { config: PathBuf },
    /// Verify a run directory and write its summary
    Report { run_dir: PathBuf },
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    let result = match cli.command {
        Command::Run { config } => seamlab_cli::run(&config).map(|record| {
            println!("{}", config_summary(&record));
        }),
        Command::Report { run_dir } => seamlab_cli::report(&run_dir).map(|text| print!("{text}")),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

fn config_summary(record: &seamlab_cli::RunRecord) -> String {
    format!(
        "{}: {} seed(s), {} files, record {}",
        record.experiment.name(),
        record.seeds.len(),
        record.manifest.len(),
        record.hash()
    )
}
