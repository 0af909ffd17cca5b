use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use veil_cli::{generate, report, CliError, RunConfig, Stage};

#[global_allocator]
static GLOBAL: mimalloc::MiMalloc = mimalloc::MiMalloc;

#[derive(Parser)]
#[command(name = "veil", version, about = "Adversarial identity scrubbing experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write a synthetic face dataset described by a JSON config.
    Generate {
        config: PathBuf,
        /// Dataset directory (default: `dataset/` beside the config).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run protocol stages over every seed and fold, resuming finished ones.
    Run {
        config: PathBuf,
        #[arg(long, value_enum, default_value = "all")]
        stage: Stage,
        /// Folds trained in parallel.
        #[arg(long, default_value_t = 1)]
        workers: usize,
    },
    /// Summarize an output directory into report.json, report.csv and a table.
    Report { outdir: PathBuf },
}

fn execute(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Generate { config, out } => {
            let (dir, synthetic, n) = generate(&config, out)?;
            println!(
                "wrote {n} images ({} identities x {} emotions x {} per cell, {}x{}) to {}",
                synthetic.num_identities,
                synthetic.num_emotions,
                synthetic.images_per_cell,
                synthetic.image_size,
                synthetic.image_size,
                dir.display()
            );
        }
        Command::Run { config, stage, workers } => {
            let config = RunConfig::load(&config)?;
            let summary = veil_cli::pipeline::run(&config, stage, workers)?;
            println!(
                "{} stage runs executed, {} resumed from {}",
                summary.executed.len(),
                summary.skipped,
                config.output_dir.display()
            );
        }
        Command::Report { outdir } => {
            let collected = report::collect(&outdir)?;
            print!("{}", report::write(&outdir, &collected)?);
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if !e.use_stderr() => {
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            let msg = e.to_string().trim_start_matches("error: ").to_string();
            eprintln!("{}", CliError::Usage(msg).line());
            return ExitCode::from(2);
        }
    };
    match execute(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{}", e.line());
            ExitCode::FAILURE
        }
    }
}
