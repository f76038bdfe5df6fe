use clap::{Parser, Subcommand, ValueEnum};
use slowlight_cli::config::{self, Config};
use slowlight_cli::experiments::{Experiment, RunOptions, Spam};
use slowlight_cli::{execute, load_moments, output, prepare, Failure, OUT_ENV};
use std::path::PathBuf;
use std::process::ExitCode;

#[derive(Parser)]
#[command(
    name = "slowlight",
    version,
    about = "Slow-light waveguide cluster-state simulator"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Format {
    Json,
    Csv,
}

#[derive(Subcommand)]
enum Command {
    /// Run a named experiment and write its JSON summary and CSV traces.
    Run {
        experiment: Experiment,
        #[arg(long)]
        config: Option<PathBuf>,
        /// Master seed (overrides the config).
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long, env = OUT_ENV, default_value = "out")]
        out: PathBuf,
        /// Shots per synthetic dataset (overrides `shots.count`).
        #[arg(long)]
        shots: Option<usize>,
        /// Worker threads (results do not depend on it).
        #[arg(long)]
        threads: Option<usize>,
        /// What to print on stdout: the summary or the first trace.
        #[arg(long, value_enum, default_value = "json")]
        format: Format,
        /// Target state for cluster-generate, tomography-from-moments and bootstrap.
        #[arg(long)]
        state: Option<String>,
        /// cluster-generate: noiseless schedule.
        #[arg(long)]
        ideal: bool,
        /// cz-qpt: reconstructions to run.
        #[arg(long, value_enum, default_value = "both")]
        spam: Spam,
        /// tomography-from-moments: moment table (JSON) to reconstruct.
        #[arg(long)]
        moments: Option<PathBuf>,
    },
    /// Parse and check a config without running anything; lists every problem.
    Validate {
        #[arg(long)]
        config: PathBuf,
        #[arg(long, value_enum, default_value = "json")]
        format: Format,
    },
    /// Print the built-in default configuration.
    Defaults,
}

fn fail(e: Failure) -> ExitCode {
    eprintln!("error: {e}");
    ExitCode::from(e.exit_code() as u8)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match cli.command {
        Command::Defaults => {
            print!(
                "{}",
                toml::to_string(&Config::default()).expect("defaults serialize")
            );
            ExitCode::SUCCESS
        }
        Command::Validate { config, format } => {
            let issues = match config::load(&config) {
                Ok(_) => Vec::new(),
                Err(issues) => issues,
            };
            match format {
                Format::Json => println!(
                    "{}",
                    serde_json::to_string_pretty(&serde_json::json!({ "errors": issues }))
                        .expect("report serializes")
                ),
                Format::Csv => {
                    println!("path,message");
                    for i in &issues {
                        println!("{},\"{}\"", i.path, i.message.replace('"', "'"));
                    }
                }
            }
            if issues.is_empty() {
                ExitCode::SUCCESS
            } else {
                ExitCode::from(2)
            }
        }
        Command::Run {
            experiment,
            config,
            seed,
            out,
            shots,
            threads,
            format,
            state,
            ideal,
            spam,
            moments,
        } => {
            if let Some(n) = threads {
                if let Err(e) = rayon::ThreadPoolBuilder::new()
                    .num_threads(n)
                    .build_global()
                {
                    eprintln!("warning: thread pool: {e}");
                }
            }
            let cfg = match prepare(config.as_deref(), seed, shots) {
                Ok(c) => c,
                Err(e) => return fail(e),
            };
            let moments = match moments.as_deref().map(load_moments).transpose() {
                Ok(m) => m,
                Err(e) => return fail(e),
            };
            let opts = RunOptions {
                state,
                ideal,
                spam,
                moments,
            };
            let (stamp, artifacts) = match execute(experiment, &cfg, &opts) {
                Ok(r) => r,
                Err(e) => return fail(e),
            };
            match output::write(&out, &stamp, &artifacts) {
                Ok(paths) => {
                    for p in paths {
                        eprintln!("wrote {}", p.display());
                    }
                }
                Err(e) => return fail(Failure::Io(e)),
            }
            match format {
                Format::Json => print!("{}", output::summary_json(&stamp, &artifacts)),
                Format::Csv => match artifacts.traces.first() {
                    Some((_, body)) => print!("{}", output::trace_csv(&stamp, body)),
                    None => print!("{}", output::summary_json(&stamp, &artifacts)),
                },
            }
            ExitCode::SUCCESS
        }
    }
}
