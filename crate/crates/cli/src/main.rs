use std::path::PathBuf;
use std::process::{Command, ExitCode};

use clap::{Parser, Subcommand, ValueEnum};
use meso::experiment::{describe, resolve_output_dir, run, ExampleId, ExperimentConfig, GridFormat, RunOptions};
use meso::Error;

/// Mixture-based probability evolution: runs the bundled experiments.
#[derive(Parser, Debug)]
#[command(name = "meso", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Cmd,
}

#[derive(Subcommand, Debug)]
enum Cmd {
    /// Run an experiment from a JSON config.
    Run {
        config: PathBuf,
        /// Output directory (default: the config's, else <root>/<example>).
        #[arg(long)]
        output_dir: Option<PathBuf>,
        /// Root for default output directories.
        #[arg(long, env = "MESO_OUTPUT_ROOT", hide_env_values = true)]
        output_root: Option<PathBuf>,
        #[arg(long, value_enum)]
        grid_format: Option<Format>,
        /// Worker threads (default: all cores).
        #[arg(long)]
        threads: Option<usize>,
        /// Overrides the config's seed.
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Describe a bundled example (example1 to example4).
    Describe { id: String },
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum Format {
    Csv,
    Binary,
}

impl From<Format> for GridFormat {
    fn from(f: Format) -> Self {
        match f {
            Format::Csv => GridFormat::Csv,
            Format::Binary => GridFormat::Binary,
        }
    }
}

fn exit_code(e: &Error) -> ExitCode {
    if e.is_numerical() {
        ExitCode::from(2)
    } else {
        ExitCode::from(1)
    }
}

fn git_revision() -> Option<String> {
    let out = Command::new("git").args(["rev-parse", "HEAD"]).output().ok()?;
    out.status
        .success()
        .then(|| String::from_utf8_lossy(&out.stdout).trim().to_string())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match cli.command {
        Cmd::Describe { id } => match id.parse::<ExampleId>() {
            Ok(id) => {
                print!("{}", describe(id));
                ExitCode::SUCCESS
            }
            Err(e) => {
                eprintln!("error: {e}");
                ExitCode::from(1)
            }
        },
        Cmd::Run {
            config,
            output_dir,
            output_root,
            grid_format,
            threads,
            seed,
        } => {
            if let Some(n) = threads {
                if n == 0 {
                    eprintln!("error: --threads must be at least 1");
                    return ExitCode::from(1);
                }
                if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
                    eprintln!("error: could not configure the thread pool: {e}");
                    return ExitCode::from(1);
                }
            }
            let mut cfg = match ExperimentConfig::load(&config) {
                Ok(c) => c,
                Err(e) => {
                    eprintln!("error: {}: {e}", config.display());
                    return exit_code(&e);
                }
            };
            if let Some(s) = seed {
                cfg = cfg.with_seed(s);
            }
            let dir = resolve_output_dir(&cfg, output_dir.as_deref(), output_root.as_deref());
            let options = RunOptions {
                grid_format: grid_format.map(Into::into),
                git_revision: git_revision(),
            };
            match run(&cfg, &dir, &options) {
                Ok(summary) => {
                    println!("{}", dir.display());
                    for (k, v) in &summary.metrics {
                        if !v.is_array() {
                            println!("  {k}: {v}");
                        }
                    }
                    ExitCode::SUCCESS
                }
                Err(e) => {
                    eprintln!("error: {e}");
                    exit_code(&e)
                }
            }
        }
    }
}
