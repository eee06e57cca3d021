use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Context;
use clap::{Parser, Subcommand};
use recsim_io::{emit_figures, load_config, run_sweep, RunManifest, RunOptions, MANIFEST_FILE};

#[derive(Parser)]
#[command(
    name = "recsim",
    version,
    about = "Recommender feedback-loop simulations"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a sweep and write CSVs plus manifest.json.
    Simulate {
        #[arg(long)]
        config: PathBuf,
        /// Output directory; overrides `output_dir` in the config.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Worker threads; RECSIM_WORKERS takes precedence when set.
        #[arg(long)]
        workers: Option<usize>,
        /// Write each realization's teacher probabilities.
        #[arg(long)]
        dump_teacher: bool,
        /// Write the student factors after every timestep.
        #[arg(long)]
        dump_student: bool,
        /// Also write Spearman correlations.
        #[arg(long)]
        both_correlations: bool,
    },
    /// Render SVG figures from a finished run.
    Figures {
        #[arg(long)]
        manifest: PathBuf,
    },
    /// Check a config and list the cells it expands to.
    Validate {
        #[arg(long)]
        config: PathBuf,
    },
}

fn run(cli: Cli) -> anyhow::Result<()> {
    match cli.command {
        Command::Simulate {
            config,
            out,
            workers,
            dump_teacher,
            dump_student,
            both_correlations,
        } => {
            let spec = load_config(&config)?;
            let out_dir = out.unwrap_or_else(|| spec.output_dir.clone());
            let opts = RunOptions {
                workers,
                out_dir: Some(out_dir.clone()),
                dump_teacher,
                dump_student,
                both_correlations,
            };
            let manifest = run_sweep(&spec, &opts)?;
            for w in &manifest.warnings {
                log::warn!("{w}");
            }
            println!("{}", out_dir.join(MANIFEST_FILE).display());
        }
        Command::Figures { manifest } => {
            let mut m = RunManifest::load(&manifest)
                .with_context(|| format!("loading {}", manifest.display()))?;
            let dir = manifest.parent().map(PathBuf::from).unwrap_or_default();
            let written = emit_figures(&mut m, &dir)?;
            m.save(&manifest)?;
            for w in &m.warnings {
                log::warn!("{w}");
            }
            for p in written {
                println!("{}", p.display());
            }
        }
        Command::Validate { config } => {
            let spec = load_config(&config)?;
            for cell in spec.cells() {
                println!("{}", cell.id);
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
